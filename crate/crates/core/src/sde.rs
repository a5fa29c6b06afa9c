//! Predictable coefficients, the jump-adapted Euler solver and the
//! integrability process `Z`.

use std::fmt;
use std::sync::Arc;

use crate::chars::LocalCharacteristics;
use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr, Program};
use crate::paths::{in_cell_left_limit, CadlagPath, Jump};

type CoefficientFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A predictable coefficient `(path, t) ↦ value`. Every variant sees the
/// path only through its left limit `X_{t-}`, so predictability holds by
/// construction.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Expression(Arc<Program>),
    /// `(t, x_left) ↦ value`.
    Function(Arc<CoefficientFn>),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(v) => write!(f, "Constant({v})"),
            Coefficient::Expression(p) => write!(f, "Expression({})", p.expr()),
            Coefficient::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Coefficient {
    pub fn constant(v: f64) -> Self {
        Coefficient::Constant(v)
    }

    pub fn parse(src: &str) -> std::result::Result<Self, crate::expr::ParseError> {
        Ok(Self::from_expr(&parse_expression(src)?))
    }

    pub fn from_expr(e: &Expr) -> Self {
        let p = Program::compile(e);
        match p.constant_value() {
            Some(v) => Coefficient::Constant(v),
            None => Coefficient::Expression(Arc::new(p)),
        }
    }

    pub fn function(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Function(Arc::new(f))
    }

    /// Evaluates at time `t` given the left limit `x_left = X_{t-}`.
    #[inline]
    pub fn at(&self, t: f64, x_left: f64) -> Result<f64> {
        match self {
            Coefficient::Constant(v) => Ok(*v),
            Coefficient::Expression(p) => p
                .eval(x_left, t)
                .map_err(|e| Error::Evaluation { t, message: e.to_string() }),
            Coefficient::Function(f) => {
                let v = f(t, x_left);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Evaluation { t, message: "non-finite value".into() })
                }
            }
        }
    }

    /// Evaluates on a path: reads the path strictly before `t` only.
    pub fn on_path(&self, path: &CadlagPath, t: f64) -> Result<f64> {
        let x_left = if t == 0.0 { path.initial() } else { path.left_limit(t)? };
        self.at(t, x_left)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(v) => Some(*v),
            _ => None,
        }
    }
}

/// `dX = μ_t(X) dt + σ_t(X) dL`, `X_0 = x0`.
#[derive(Debug, Clone)]
pub struct SdeSpec {
    pub x0: f64,
    pub mu: Coefficient,
    pub sigma: Coefficient,
    /// `σ` counts as zero when `|σ| <= zero_tolerance`; exact by default.
    pub zero_tolerance: f64,
}

impl SdeSpec {
    pub fn new(x0: f64, mu: Coefficient, sigma: Coefficient) -> Self {
        Self { x0, mu, sigma, zero_tolerance: 0.0 }
    }

    /// Convenience constructor from expression sources.
    pub fn parse(x0: f64, mu: &str, sigma: &str) -> std::result::Result<Self, crate::expr::ParseError> {
        Ok(Self::new(x0, Coefficient::parse(mu)?, Coefficient::parse(sigma)?))
    }

    #[inline]
    pub fn sigma_is_zero(&self, sigma: f64) -> bool {
        if self.zero_tolerance == 0.0 {
            sigma == 0.0
        } else {
            sigma.abs() <= self.zero_tolerance
        }
    }

    /// Same spec with the drift shifted by `delta`.
    pub fn with_drift_offset(&self, delta: f64) -> Self {
        let mu = self.mu.clone();
        Self {
            x0: self.x0,
            mu: Coefficient::function(move |t, x| mu.at(t, x).unwrap_or(f64::NAN) + delta),
            sigma: self.sigma.clone(),
            zero_tolerance: self.zero_tolerance,
        }
    }
}

/// Jump-adapted Euler scheme.
///
/// On cell `k` the continuous part of `X` moves by
/// `μ(t_{k-1}, X_{t_{k-1}})Δt + σ(t_{k-1}, X_{t_{k-1}})·ΔL^c_k`; at each driver
/// jump `τ` in the cell `X` jumps by `σ(τ, X_{τ-})·ΔL_τ`, with `X_{τ-}`
/// computed exactly as [`CadlagPath::left_limit`] computes it.
pub fn solve_sde(spec: &SdeSpec, driver: &CadlagPath) -> Result<CadlagPath> {
    solve_inner(spec, driver, 0.0)
}

pub(crate) fn solve_inner(spec: &SdeSpec, driver: &CadlagPath, drift_offset: f64) -> Result<CadlagPath> {
    let grid = driver.grid().clone();
    let n = grid.n_steps();
    let mut continuous = Vec::with_capacity(n);
    let mut jumps = Vec::new();
    let mut x = spec.x0;
    let dl = driver.continuous_increments();
    for k in 1..=n {
        let (t0, t1) = grid.cell(k);
        let mu = spec.mu.at(t0, x)? + drift_offset;
        let sigma = spec.sigma.at(t0, x)?;
        let mut c = mu * (t1 - t0);
        if !spec.sigma_is_zero(sigma) {
            c += sigma * dl[k - 1];
        }
        continuous.push(c);
        let first = jumps.len();
        for j in driver.cell_jumps(k) {
            let prior = jumps[first..].iter().map(|p: &Jump| p.size);
            let x_left = in_cell_left_limit(x, c, t0, t1, j.time, prior);
            let s = spec.sigma.at(j.time, x_left)?;
            if spec.sigma_is_zero(s) {
                continue;
            }
            let dx = s * j.size;
            if dx != 0.0 {
                jumps.push(Jump { time: j.time, size: dx });
            }
        }
        let mut next = x + c;
        for jp in &jumps[first..] {
            next += jp.size;
        }
        x = next;
    }
    CadlagPath::from_parts(grid, spec.x0, continuous, jumps)
}

/// Running values of the three summands of `Z` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ZProcess {
    /// `∫|μ_s| ds`
    pub drift: Vec<f64>,
    /// `∫ (σ²c + ∫_{|x|<=1} (1 ∧ |σx|²) F(dx)) dA`
    pub quadratic: Vec<f64>,
    /// `∫ |σb + ∫ (σx 1{|x|<=1, |σx|<=1} - σh(x)) F(dx)| dA`
    pub compensated_drift: Vec<f64>,
}

impl ZProcess {
    pub fn total(&self) -> Vec<f64> {
        (0..self.drift.len())
            .map(|k| self.drift[k] + self.quadratic[k] + self.compensated_drift[k])
            .collect()
    }

    pub fn is_nondecreasing(&self) -> bool {
        let mono = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
        mono(&self.drift) && mono(&self.quadratic) && mono(&self.compensated_drift)
    }
}

/// Accumulates `Z` along `x_path`, coefficients frozen at each cell's left
/// endpoint. Jump integrals go through quadrature and report divergence.
pub fn z_process(spec: &SdeSpec, chars: &LocalCharacteristics, x_path: &CadlagPath) -> Result<ZProcess> {
    let grid = x_path.grid();
    let n = grid.n_steps();
    let h = chars.truncation;
    let mut drift = vec![0.0; n + 1];
    let mut quadratic = vec![0.0; n + 1];
    let mut comp = vec![0.0; n + 1];
    for k in 1..=n {
        let (t0, t1) = grid.cell(k);
        let x = x_path.values()[k - 1];
        let mu = spec.mu.at(t0, x)?;
        let sigma = spec.sigma.at(t0, x)?;
        let mut dq = 0.0;
        let mut dc = 0.0;
        for p in chars.pieces(t0, t1) {
            if p.clock == 0.0 {
                continue;
            }
            let (q, c) = if sigma == 0.0 {
                (0.0, 0.0)
            } else {
                let mut breaks = vec![-1.0, 1.0, -h.threshold, h.threshold];
                breaks.push(1.0 / sigma.abs());
                breaks.push(-1.0 / sigma.abs());
                let small = p.jumps.integrate(
                    |y| if y.abs() <= 1.0 { (sigma * y).powi(2).min(1.0) } else { 0.0 },
                    &breaks,
                )?;
                let inner = p.jumps.integrate(
                    |y| {
                        let keep = y.abs() <= 1.0 && (sigma * y).abs() <= 1.0;
                        (if keep { sigma * y } else { 0.0 }) - sigma * h.h(y)
                    },
                    &breaks,
                )?;
                (sigma * sigma * p.diffusion + small, (sigma * p.drift + inner).abs())
            };
            dq += q * p.clock;
            dc += c * p.clock;
        }
        drift[k] = drift[k - 1] + mu.abs() * (t1 - t0);
        quadratic[k] = quadratic[k - 1] + dq;
        comp[k] = comp[k - 1] + dc;
        if !(drift[k].is_finite() && quadratic[k].is_finite() && comp[k].is_finite()) {
            return Err(Error::Evaluation { t: t1, message: "Z diverges".into() });
        }
    }
    Ok(ZProcess { drift, quadratic, compensated_drift: comp })
}
