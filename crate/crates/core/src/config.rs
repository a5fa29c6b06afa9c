//! Scenario files.
//!
//! A scenario is a TOML document with a strict schema: unknown keys are
//! rejected and every number is range-checked. Errors carry the line and
//! column of the offending value. [`ScenarioConfig::to_canonical`] prints the
//! one canonical form, which parses back to an equal config.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};

use crate::chars::{JumpSizes, LevyMeasure, LocalCharacteristics, TimeScale};
use crate::expr::parse_expression;
use crate::paths::TimeGrid;
use crate::sde::SdeSpec;
use crate::sticky::StickyParams;

/// Largest horizon accepted; on bounded horizons with bounded coefficients
/// the test processes are true martingales.
pub const MAX_HORIZON: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub characteristics: CharacteristicsConfig,
    pub sde: SdeConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sticky: Option<StickyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsConfig {
    pub b: f64,
    pub c: f64,
    #[serde(default = "one")]
    pub truncation: f64,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub rate: f64,
    pub size: JumpSizes,
}

/// `clock = "identity"` or `clock = { table = [[t, A(t)], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClockConfig {
    Named(ClockName),
    Table { table: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockName {
    Identity,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig::Named(ClockName::Identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub x0: f64,
    pub mu: String,
    pub sigma: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub alpha: f64,
    pub n_perm: usize,
    /// Largest ECF frequency.
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    /// Number of ECF frequencies on `[-u_max, u_max]`.
    #[serde(default = "default_n_u")]
    pub n_u: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StickyConfig {
    pub mu: f64,
    pub x0: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Zero detector: `|X| <= eta` counts as `X = 0`.
    #[serde(default)]
    pub eta: f64,
}

fn one() -> f64 {
    1.0
}
fn default_u_max() -> f64 {
    5.0
}
fn default_n_u() -> usize {
    21
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_tol() -> f64 {
    0.1
}

/// A problem in a scenario file, located at 1-based `line:column`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Every error found in one scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before, |i| &before[i + 1..]).chars().count() + 1;
    (line, col)
}

/// Locates values by key path in the source text.
struct Locator<'a> {
    text: &'a str,
    root: Option<toml::Spanned<DeValue<'a>>>,
}

impl<'a> Locator<'a> {
    fn new(text: &'a str) -> Self {
        let root = DeTable::parse(text).ok().map(|t| {
            let span = t.span();
            toml::Spanned::new(span, DeValue::Table(t.into_inner()))
        });
        Self { text, root }
    }

    /// Span of the deepest existing value along `path`.
    fn span(&self, path: &[&str]) -> Range<usize> {
        let Some(root) = &self.root else { return 0..0 };
        let mut cur = root;
        for key in path {
            match cur.get_ref().get(*key) {
                Some(next) => cur = next,
                None => break,
            }
        }
        cur.span()
    }

    fn error(&self, path: &[&str], message: impl Into<String>) -> ConfigError {
        let (line, column) = line_col(self.text, self.span(path).start);
        ConfigError { line, column, message: message.into() }
    }

    /// Error inside a quoted string value at a 1-based column of its content.
    fn error_in_string(&self, path: &[&str], column: usize, message: impl Into<String>) -> ConfigError {
        let span = self.span(path);
        let (line, col) = line_col(self.text, span.start);
        // skip the opening quote
        ConfigError { line, column: col + column, message: message.into() }
    }
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let config: ScenarioConfig = match toml::from_str(text) {
        Ok(c) => c,
        Err(e) => {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            return Err(ConfigErrors(vec![ConfigError {
                line,
                column,
                message: e.message().trim().to_string(),
            }]));
        }
    };
    let loc = Locator::new(text);
    let errors = config.problems(&loc);
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(errors))
    }
}

impl ScenarioConfig {
    /// The shipped preset called `name`.
    pub fn preset(name: &str) -> Option<ScenarioConfig> {
        let text = preset_text(name)?;
        Some(parse_config(text).expect("shipped presets are valid"))
    }

    /// The canonical serialization.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn problems(&self, loc: &Locator<'_>) -> Vec<ConfigError> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, path: &[&str], msg: &str| {
            if !ok {
                errs.push(loc.error(path, msg));
            }
        };
        let ch = &self.characteristics;
        need(!self.name.trim().is_empty(), &["name"], "name must not be empty");
        need(ch.b.is_finite(), &["characteristics", "b"], "b must be finite");
        need(ch.c.is_finite() && ch.c >= 0.0, &["characteristics", "c"], "c must be ≥ 0");
        need(
            ch.truncation.is_finite() && ch.truncation > 0.0,
            &["characteristics", "truncation"],
            "truncation must be > 0",
        );
        if let Some(j) = &ch.jumps {
            need(j.rate.is_finite() && j.rate >= 0.0, &["characteristics", "jumps", "rate"], "rate must be ≥ 0");
            if let Err(e) = j.size.validate() {
                need(false, &["characteristics", "jumps", "size"], &e.to_string());
            }
        }
        if let ClockConfig::Table { table } = &ch.clock {
            if let Err(e) = TimeScale::Table(table.iter().map(|p| (p[0], p[1])).collect()).validate() {
                need(false, &["characteristics", "clock"], &e.to_string());
            }
        }
        need(self.sde.x0.is_finite(), &["sde", "x0"], "x0 must be finite");
        let g = &self.grid;
        need(
            g.horizon.is_finite() && g.horizon > 0.0 && g.horizon <= MAX_HORIZON,
            &["grid", "T"],
            &format!("T must be in (0, {MAX_HORIZON}]"),
        );
        need((1..=1_000_000).contains(&g.n_steps), &["grid", "n_steps"], "n_steps must be in 1..=1000000");
        let mc = &self.mc;
        need(mc.n_paths >= 1, &["mc", "n_paths"], "n_paths must be ≥ 1");
        need(mc.alpha > 0.0 && mc.alpha < 0.5, &["mc", "alpha"], "alpha must be in (0, 0.5)");
        need(mc.n_perm >= 1, &["mc", "n_perm"], "n_perm must be ≥ 1");
        need(mc.u_max.is_finite() && mc.u_max > 0.0, &["mc", "u_max"], "u_max must be > 0");
        need(mc.n_u >= 1, &["mc", "n_u"], "n_u must be ≥ 1");
        if let Some(s) = &self.sticky {
            need(s.mu.is_finite() && s.mu > 0.0, &["sticky", "mu"], "sticky mu must be > 0");
            need(s.x0.is_finite() && s.x0 >= 0.0, &["sticky", "x0"], "sticky x0 must be ≥ 0");
            need(s.epsilon.is_finite() && s.epsilon > 0.0, &["sticky", "epsilon"], "epsilon must be > 0");
            need(s.tol.is_finite() && s.tol > 0.0, &["sticky", "tol"], "tol must be > 0");
            need(s.eta.is_finite() && s.eta >= 0.0, &["sticky", "eta"], "eta must be ≥ 0");
        }
        for (key, src) in [("mu", &self.sde.mu), ("sigma", &self.sde.sigma)] {
            if let Err(e) = parse_expression(src) {
                errs.push(loc.error_in_string(&["sde", key], e.column, format!("{key}: {}", e.message)));
            }
        }
        errs
    }

    pub fn characteristics(&self) -> LocalCharacteristics {
        let ch = &self.characteristics;
        let jumps = match &ch.jumps {
            Some(j) if j.rate > 0.0 => LevyMeasure::finite(j.rate, j.size),
            _ => LevyMeasure::Empty,
        };
        let clock = match &ch.clock {
            ClockConfig::Named(ClockName::Identity) => TimeScale::Identity,
            ClockConfig::Table { table } => TimeScale::Table(table.iter().map(|p| (p[0], p[1])).collect()),
        };
        LocalCharacteristics::constant(ch.b, ch.c, jumps).with_truncation(ch.truncation).with_clock(clock)
    }

    pub fn sde(&self) -> SdeSpec {
        SdeSpec::parse(self.sde.x0, &self.sde.mu, &self.sde.sigma).expect("validated expressions")
    }

    pub fn grid(&self) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(self.grid.horizon, self.grid.n_steps).expect("validated grid"))
    }

    pub fn sticky_params(&self) -> Option<StickyParams> {
        self.sticky.as_ref().map(|s| StickyParams { mu: s.mu, x0: s.x0 })
    }
}

/// Names of the shipped presets.
pub const PRESETS: [&str; 5] = ["brownian", "poisson", "mixed-jump", "degenerate-sigma", "sticky"];

/// Source text of a shipped preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "brownian" => include_str!("../presets/brownian.scenario"),
        "poisson" => include_str!("../presets/poisson.scenario"),
        "mixed-jump" => include_str!("../presets/mixed-jump.scenario"),
        "degenerate-sigma" => include_str!("../presets/degenerate-sigma.scenario"),
        "sticky" => include_str!("../presets/sticky.scenario"),
        _ => return None,
    })
}
