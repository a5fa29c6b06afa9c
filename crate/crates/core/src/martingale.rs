//! The generator `𝓛`, the operator `𝓚`, the test processes `M^f` and `K^g`,
//! and Monte Carlo martingale checks.
//!
//! ```text
//! 𝓛f(x,t) = b f'(x) + c/2 f''(x) + ∫ (f(x+y) - f(x) - h(y) f'(x)) F(dy)
//! 𝓚g(ω,s) = σ b g'(x) + σ²c/2 g''(x) + ∫ (g(x+σy) - g(x) - σ h(y) g'(x)) F(dy),  x = ω(s-)
//! M^f     = f(Y)/f(Y_0) · exp(-∫ 𝓛f(Y_s-, s)/f(Y_s-) dA_s)
//! K^g     = g(X) - g(x0) - ∫ μ g'(X_s-) ds - ∫ 𝓚g(X, s) dA_s
//! ```
//!
//! For `2 + sin(ux)` and `2 + cos(ux)` the jump integral has the closed form
//! `e^{iux}(ψ(σu) - iσub + σ²u²c/2)`; other functions go through quadrature,
//! tabulated once per distinct `(b, c, F, σ)` when jumps are present.

use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::chars::{exponent_parts, LevyMeasure, LocalCharacteristics, Truncation};
use crate::error::{Error, Result};
use crate::paths::{CadlagPath, Jump, TimeGrid};
use crate::report::TestReport;
use crate::sde::SdeSpec;

/// A bounded `C²` test function with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `2 + sin(ux)`
    Sin { u: f64 },
    /// `2 + cos(ux)`
    Cos { u: f64 },
    /// `offset + exp(1 - 1/(1-r²))` for `|r| < 1`, `r = (x - center)/width`.
    Bump { center: f64, width: f64, offset: f64 },
}

impl TestFunction {
    /// `2 + sin x`, `2 + cos x` and a unit bump on `[-1.5, 1.5]` lifted by 1.
    pub fn presets() -> Vec<TestFunction> {
        vec![
            TestFunction::Sin { u: 1.0 },
            TestFunction::Cos { u: 1.0 },
            TestFunction::Bump { center: 0.0, width: 1.5, offset: 1.0 },
        ]
    }

    pub fn label(&self) -> String {
        match *self {
            TestFunction::Constant(k) => format!("const({k})"),
            TestFunction::Sin { u } => format!("2+sin({u}x)"),
            TestFunction::Cos { u } => format!("2+cos({u}x)"),
            TestFunction::Bump { center, width, offset } => format!("bump({center},{width})+{offset}"),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant(k) => k,
            TestFunction::Sin { u } => 2.0 + (u * x).sin(),
            TestFunction::Cos { u } => 2.0 + (u * x).cos(),
            TestFunction::Bump { center, width, offset } => offset + bump(center, width, x)[0],
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant(_) => 0.0,
            TestFunction::Sin { u } => u * (u * x).cos(),
            TestFunction::Cos { u } => -u * (u * x).sin(),
            TestFunction::Bump { center, width, .. } => bump(center, width, x)[1],
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant(_) => 0.0,
            TestFunction::Sin { u } => -u * u * (u * x).sin(),
            TestFunction::Cos { u } => -u * u * (u * x).cos(),
            TestFunction::Bump { center, width, .. } => bump(center, width, x)[2],
        }
    }

    pub fn inf(&self) -> f64 {
        match *self {
            TestFunction::Constant(k) => k,
            TestFunction::Sin { u } | TestFunction::Cos { u } => {
                if u == 0.0 {
                    self.value(0.0)
                } else {
                    1.0
                }
            }
            TestFunction::Bump { offset, .. } => offset,
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            TestFunction::Constant(k) => k,
            TestFunction::Sin { u } | TestFunction::Cos { u } => {
                if u == 0.0 {
                    self.value(0.0)
                } else {
                    3.0
                }
            }
            TestFunction::Bump { offset, .. } => offset + 1.0,
        }
    }

    pub fn has_positive_infimum(&self) -> bool {
        self.inf() > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFunction::Constant(k) => k.is_finite(),
            TestFunction::Sin { u } | TestFunction::Cos { u } => u.is_finite(),
            TestFunction::Bump { center, width, offset } => {
                center.is_finite() && width.is_finite() && width > 0.0 && offset.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad test function {self:?}")))
        }
    }

    /// Points where quadrature in `y` should split for `f(x + σy)`.
    fn kinks(&self, x: f64, sigma: f64) -> Vec<f64> {
        match *self {
            TestFunction::Bump { center, width, .. } => {
                vec![(center - width - x) / sigma, (center + width - x) / sigma, (center - x) / sigma]
            }
            _ => Vec::new(),
        }
    }
}

/// `[φ, φ', φ'']` for the bump `exp(1 - 1/(1-r²))`.
fn bump(center: f64, width: f64, x: f64) -> [f64; 3] {
    let r = (x - center) / width;
    let q = 1.0 - r * r;
    if q <= 0.0 {
        return [0.0; 3];
    }
    let phi = (1.0 - 1.0 / q).exp();
    let g1 = -2.0 * r / (q * q);
    let g2 = -2.0 / (q * q) - 8.0 * r * r / (q * q * q);
    [phi, phi * g1 / width, phi * (g1 * g1 + g2) / (width * width)]
}

/// `∫ (f(x+σy) - f(x)) F(dy)` by quadrature.
fn jump_part_quadrature(f: &TestFunction, x: f64, sigma: f64, jumps: &LevyMeasure) -> Result<f64> {
    let fx = f.value(x);
    jumps.integrate(|y| f.value(x + sigma * y) - fx, &f.kinks(x, sigma))
}

/// `𝓚` at a point with frozen coefficients; `sigma = 1` gives `𝓛`.
fn apply_direct(
    f: &TestFunction,
    x: f64,
    sigma: f64,
    b: f64,
    c: f64,
    jumps: &LevyMeasure,
    h: &Truncation,
) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let local = sigma * (b - jumps.compensator(h)) * f.d1(x) + 0.5 * sigma * sigma * c * f.d2(x);
    Ok(local + jump_part_quadrature(f, x, sigma, jumps)?)
}

/// Closed form for the trigonometric presets, `None` otherwise.
fn apply_trig(f: &TestFunction, x: f64, sigma: f64, b: f64, c: f64, jumps: &LevyMeasure, h: &Truncation) -> Option<f64> {
    let (u, sin) = match *f {
        TestFunction::Sin { u } => (u, true),
        TestFunction::Cos { u } => (u, false),
        TestFunction::Constant(_) => return Some(0.0),
        TestFunction::Bump { .. } => return None,
    };
    if sigma == 0.0 {
        return Some(0.0);
    }
    let z = Complex64::from_polar(1.0, u * x) * exponent_parts(sigma * u, b, c, jumps, h);
    Some(if sin { z.im } else { z.re })
}

/// `𝓛f(x, t)`. Uses the closed form when available.
pub fn generator_l(f: &TestFunction, x: f64, t: f64, chars: &LocalCharacteristics) -> Result<f64> {
    let (b, c, jumps, h) = (chars.b(t), chars.c(t), chars.f(t), &chars.truncation);
    match apply_trig(f, x, 1.0, b, c, jumps, h) {
        Some(v) => Ok(v),
        None => apply_direct(f, x, 1.0, b, c, jumps, h),
    }
}

/// `𝓛f(x, t)` always by quadrature; the reference route for the closed form.
pub fn generator_l_quadrature(f: &TestFunction, x: f64, t: f64, chars: &LocalCharacteristics) -> Result<f64> {
    apply_direct(f, x, 1.0, chars.b(t), chars.c(t), chars.f(t), &chars.truncation)
}

/// `𝓚g(ω, s)` with `σ` read from `ω(s-)`.
pub fn operator_k(
    g: &TestFunction,
    omega: &CadlagPath,
    s: f64,
    chars: &LocalCharacteristics,
    spec: &SdeSpec,
) -> Result<f64> {
    let x = if s == 0.0 { omega.initial() } else { omega.left_limit(s)? };
    let sigma = spec.sigma.at(s, x)?;
    let (b, c, jumps, h) = (chars.b(s), chars.c(s), chars.f(s), &chars.truncation);
    match apply_trig(g, x, sigma, b, c, jumps, h) {
        Some(v) => Ok(v),
        None => apply_direct(g, x, sigma, b, c, jumps, h),
    }
}

/// Jump part `∫(f(x+σy) - f(x))F(dy)` on a uniform `x` grid, linearly
/// interpolated; outside the grid it is computed directly.
#[derive(Debug)]
struct JumpTable {
    lo: f64,
    step: f64,
    vals: Vec<f64>,
}

const TABLE_STEP: f64 = 1e-3;

impl JumpTable {
    fn build(f: &TestFunction, sigma: f64, jumps: &LevyMeasure) -> Result<Option<Self>> {
        let TestFunction::Bump { center, width, .. } = *f else {
            return Ok(None);
        };
        let reach = match jumps.sizes() {
            None => return Ok(None),
            Some(s) => s.reach(),
        } * sigma.abs();
        let lo = center - width - reach;
        let hi = center + width + reach;
        let n = ((hi - lo) / TABLE_STEP).ceil() as usize + 1;
        let vals = (0..=n)
            .map(|i| jump_part_quadrature(f, lo + i as f64 * TABLE_STEP, sigma, jumps))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(Self { lo, step: TABLE_STEP, vals }))
    }

    fn get(&self, x: f64) -> Option<f64> {
        let s = (x - self.lo) / self.step;
        if !(s >= 0.0) {
            return None;
        }
        let i = s.floor() as usize;
        if i + 1 >= self.vals.len() {
            return None;
        }
        let w = s - i as f64;
        Some(self.vals[i] * (1.0 - w) + self.vals[i + 1] * w)
    }
}

/// A piece of a cell on which `(b, c, F)` are constant.
#[derive(Debug, Clone, Copy)]
struct CellPiece {
    start: f64,
    end: f64,
    clock: f64,
    b: f64,
    c: f64,
    jumps: LevyMeasure,
}

fn cell_pieces(chars: &LocalCharacteristics, grid: &TimeGrid) -> Vec<Vec<CellPiece>> {
    (1..=grid.n_steps())
        .map(|k| {
            let (t0, t1) = grid.cell(k);
            chars
                .pieces(t0, t1)
                .into_iter()
                .filter(|p| p.clock > 0.0)
                .map(|p| CellPiece {
                    start: p.start,
                    end: p.end,
                    clock: p.clock,
                    b: p.drift,
                    c: p.diffusion,
                    jumps: *p.jumps,
                })
                .collect()
        })
        .collect()
}

/// `Σ (b - ∫h dF) ΔA` over the pieces of one cell.
fn raw_drift(pieces: &[CellPiece], h: &Truncation) -> f64 {
    pieces.iter().map(|p| (p.b - p.jumps.compensator(h)) * p.clock).sum()
}

/// A test process path with its per-cell continuous local-martingale increments.
#[derive(Debug, Clone, PartialEq)]
pub struct TestProcess {
    pub path: CadlagPath,
    /// Increment of the continuous martingale part over each cell, with the
    /// integrand frozen at the left endpoint.
    pub continuous_martingale: Vec<f64>,
}

type TableKey = (u64, u64, LevyMeasure, u64);

/// Evaluates `𝓚f` (and `𝓛f` for `σ = 1`) with cached quadrature tables.
struct Operator {
    f: TestFunction,
    h: Truncation,
    tables: RwLock<Vec<(TableKey, Option<Arc<JumpTable>>)>>,
}

const MAX_TABLES: usize = 16;

impl Operator {
    fn new(f: TestFunction, h: Truncation) -> Self {
        Self { f, h, tables: RwLock::new(Vec::new()) }
    }

    fn table(&self, p: &CellPiece, sigma: f64) -> Result<Option<Arc<JumpTable>>> {
        let key = (p.b.to_bits(), p.c.to_bits(), p.jumps, sigma.to_bits());
        {
            let tables = self.tables.read().expect("table lock");
            if let Some((_, t)) = tables.iter().find(|(k, _)| *k == key) {
                return Ok(t.clone());
            }
            if tables.len() >= MAX_TABLES {
                return Ok(None);
            }
        }
        let built = JumpTable::build(&self.f, sigma, &p.jumps)?.map(Arc::new);
        let mut tables = self.tables.write().expect("table lock");
        if !tables.iter().any(|(k, _)| *k == key) && tables.len() < MAX_TABLES {
            tables.push((key, built.clone()));
        }
        Ok(built)
    }

    fn eval(&self, x: f64, sigma: f64, p: &CellPiece) -> Result<f64> {
        let f = &self.f;
        if let Some(v) = apply_trig(f, x, sigma, p.b, p.c, &p.jumps, &self.h) {
            return Ok(v);
        }
        if sigma == 0.0 {
            return Ok(0.0);
        }
        let local = sigma * (p.b - p.jumps.compensator(&self.h)) * f.d1(x) + 0.5 * sigma * sigma * p.c * f.d2(x);
        if p.jumps.sizes().is_none() {
            return Ok(local);
        }
        let jump = match self.table(p, sigma)?.and_then(|t| t.get(x)) {
            Some(v) => v,
            None => jump_part_quadrature(f, x, sigma, &p.jumps)?,
        };
        Ok(local + jump)
    }
}

/// Precomputed state for building many `M^f` paths on one grid.
pub struct MfBuilder {
    op: Operator,
    chars: LocalCharacteristics,
    pieces: Vec<Vec<CellPiece>>,
    grid: Arc<TimeGrid>,
}

impl MfBuilder {
    pub fn new(f: TestFunction, chars: &LocalCharacteristics, grid: Arc<TimeGrid>) -> Result<Self> {
        f.validate()?;
        if !f.has_positive_infimum() {
            return Err(Error::InvalidArgument(format!("M^f needs inf f > 0, got {}", f.inf())));
        }
        Ok(Self {
            op: Operator::new(f, chars.truncation),
            chars: chars.clone(),
            pieces: cell_pieces(chars, &grid),
            grid,
        })
    }

    /// Clock increment of `A` over `[start, min(end, tau)]` for pieces of a cell.
    fn partial(&self, pieces: &[CellPiece], rates: &[f64], tau: f64) -> f64 {
        pieces
            .iter()
            .zip(rates)
            .filter(|(p, _)| p.start < tau)
            .map(|(p, r)| r * self.chars.clock.increment(p.start, tau.min(p.end)))
            .sum()
    }

    pub fn build(&self, y: &CadlagPath) -> Result<CadlagPath> {
        if y.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::GridMismatch);
        }
        let f = &self.op.f;
        let f0 = f.value(y.initial());
        let n = self.grid.n_steps();
        let mut continuous = Vec::with_capacity(n);
        let mut jumps = Vec::new();
        let mut integral = 0.0;
        let mut prev = 1.0;
        let mut rates = Vec::new();
        for k in 1..=n {
            let x = y.values()[k - 1];
            let fx = f.value(x);
            let pieces = &self.pieces[k - 1];
            rates.clear();
            for p in pieces {
                rates.push(self.op.eval(x, 1.0, p)? / fx);
            }
            let mut jump_total = 0.0;
            for j in y.cell_jumps(k) {
                let before = y.left_limit(j.time)?;
                let at = self.partial(pieces, &rates, j.time);
                let size = (f.value(before + j.size) - f.value(before)) / f0 * (-(integral + at)).exp();
                if size != 0.0 {
                    jumps.push(Jump { time: j.time, size });
                    jump_total += size;
                }
            }
            integral += pieces.iter().zip(&rates).map(|(p, r)| r * p.clock).sum::<f64>();
            let next = f.value(y.values()[k]) / f0 * (-integral).exp();
            continuous.push(next - prev - jump_total);
            prev = next;
        }
        CadlagPath::from_parts(self.grid.clone(), 1.0, continuous, jumps)
    }
}

impl MfBuilder {
    /// `M^f` together with `dM^c = M f'(Y)/f(Y) dY^{c,mart}`, where
    /// `Y^{c,mart}` is the continuous part of `Y` minus its drift.
    pub fn build_process(&self, y: &CadlagPath) -> Result<TestProcess> {
        let m = self.build(y)?;
        let f = &self.op.f;
        let continuous_martingale = (1..=self.grid.n_steps())
            .map(|k| {
                let x = y.values()[k - 1];
                let dy = y.continuous_increments()[k - 1] - raw_drift(&self.pieces[k - 1], &self.op.h);
                m.values()[k - 1] * f.d1(x) / f.value(x) * dy
            })
            .collect();
        Ok(TestProcess { path: m, continuous_martingale })
    }
}

/// `M^f` along `y`, left-endpoint evaluation of the time integral.
pub fn mf_process(f: &TestFunction, y: &CadlagPath, chars: &LocalCharacteristics) -> Result<CadlagPath> {
    MfBuilder::new(*f, chars, y.grid().clone())?.build(y)
}

/// Precomputed state for building many `K^g` paths on one grid.
pub struct KgBuilder {
    op: Operator,
    spec: SdeSpec,
    pieces: Vec<Vec<CellPiece>>,
    grid: Arc<TimeGrid>,
}

impl KgBuilder {
    pub fn new(g: TestFunction, spec: &SdeSpec, chars: &LocalCharacteristics, grid: Arc<TimeGrid>) -> Result<Self> {
        g.validate()?;
        Ok(Self {
            op: Operator::new(g, chars.truncation),
            spec: spec.clone(),
            pieces: cell_pieces(chars, &grid),
            grid,
        })
    }

    pub fn build(&self, x: &CadlagPath) -> Result<CadlagPath> {
        if x.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::GridMismatch);
        }
        let g = &self.op.f;
        let g0 = g.value(self.spec.x0);
        let n = self.grid.n_steps();
        let mut continuous = Vec::with_capacity(n);
        let mut jumps = Vec::new();
        let mut compensator = 0.0;
        let mut prev = g.value(x.initial()) - g0;
        for k in 1..=n {
            let (t0, t1) = self.grid.cell(k);
            let xl = x.values()[k - 1];
            let mu = self.spec.mu.at(t0, xl)?;
            let sigma = self.spec.sigma.at(t0, xl)?;
            compensator += mu * g.d1(xl) * (t1 - t0);
            for p in &self.pieces[k - 1] {
                compensator += self.op.eval(xl, sigma, p)? * p.clock;
            }
            let mut jump_total = 0.0;
            for j in x.cell_jumps(k) {
                let before = x.left_limit(j.time)?;
                let size = g.value(before + j.size) - g.value(before);
                if size != 0.0 {
                    jumps.push(Jump { time: j.time, size });
                    jump_total += size;
                }
            }
            let next = g.value(x.values()[k]) - g0 - compensator;
            continuous.push(next - prev - jump_total);
            prev = next;
        }
        CadlagPath::from_parts(self.grid.clone(), g.value(x.initial()) - g0, continuous, jumps)
    }
}

impl KgBuilder {
    /// `K^g` together with `dK^c = g'(X) σ dL^{c,mart}`, recovered from `X`
    /// as `g'(X)(dX^c - μ dt - σ (b - ∫h dF) dA)`.
    pub fn build_process(&self, x: &CadlagPath) -> Result<TestProcess> {
        let k_path = self.build(x)?;
        let g = &self.op.f;
        let mut continuous_martingale = Vec::with_capacity(self.grid.n_steps());
        for k in 1..=self.grid.n_steps() {
            let (t0, t1) = self.grid.cell(k);
            let xl = x.values()[k - 1];
            let mu = self.spec.mu.at(t0, xl)?;
            let sigma = self.spec.sigma.at(t0, xl)?;
            let drift = mu * (t1 - t0) + sigma * raw_drift(&self.pieces[k - 1], &self.op.h);
            continuous_martingale.push(g.d1(xl) * (x.continuous_increments()[k - 1] - drift));
        }
        Ok(TestProcess { path: k_path, continuous_martingale })
    }
}

/// `K^g` along a solution path `x`, left-endpoint quadrature for both integrals.
pub fn kg_process(g: &TestFunction, x: &CadlagPath, spec: &SdeSpec, chars: &LocalCharacteristics) -> Result<CadlagPath> {
    KgBuilder::new(*g, spec, chars, x.grid().clone())?.build(x)
}

/// `(sup f / inf f) · exp(A_T · sup|𝓛f| / inf f)`, a pathwise bound on `M^f`.
pub fn mf_bound(f: &TestFunction, chars: &LocalCharacteristics, horizon: f64) -> Result<f64> {
    let mut sup_l: f64 = 0.0;
    let mut ts: Vec<f64> = chars.pieces(0.0, horizon).iter().map(|p| p.start).collect();
    ts.push(0.0);
    for t in ts {
        let s = match *f {
            TestFunction::Constant(_) => 0.0,
            TestFunction::Sin { u } | TestFunction::Cos { u } => chars.levy_exponent(u, t).norm(),
            TestFunction::Bump { center, width, .. } => {
                // grid scan of a smooth function, inflated for the gaps
                let reach = chars.f(t).sizes().map_or(0.0, |s| s.reach());
                let (lo, hi) = (center - width - reach - 1.0, center + width + reach + 1.0);
                let n = 2000;
                let mut m: f64 = 0.0;
                for i in 0..=n {
                    let x = lo + (hi - lo) * i as f64 / n as f64;
                    m = m.max(generator_l(f, x, t, chars)?.abs());
                }
                1.05 * m
            }
        };
        sup_l = sup_l.max(s);
    }
    let a = chars.clock.eval(horizon) - chars.clock.eval(0.0);
    Ok(f.sup() / f.inf() * (a * sup_l / f.inf()).exp())
}

/// Checks `sup_t |M^f_t|` against [`mf_bound`] on every path.
pub fn boundedness_check(
    scenario: &str,
    f: &TestFunction,
    chars: &LocalCharacteristics,
    paths: &[CadlagPath],
) -> Result<TestReport> {
    let horizon = paths.first().map_or(0.0, |p| p.grid().horizon());
    let bound = mf_bound(f, chars, horizon)?;
    let worst = paths.iter().map(|p| p.sup_abs()).fold(0.0, f64::max);
    let mut r = TestReport::new(scenario, "mf-bound");
    r.check(format!("sup M^{}", f.label()), worst, bound);
    Ok(r)
}

/// `(times, values)` of a path prefix to a bounded real.
pub type PrefixFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A bounded statistic of the path up to time `s`. Every variant receives
/// only the grid values on `[0, s]`, so adaptedness holds by construction.
#[derive(Clone)]
pub enum Functional {
    One,
    /// `tanh(P_s)`
    TanhAtS,
    /// `tanh(P_{s/2})`
    TanhAtHalfS,
    Custom {
        name: String,
        f: PrefixFn,
    },
}

impl std::fmt::Debug for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl Functional {
    pub fn standard() -> Vec<Functional> {
        vec![Functional::One, Functional::TanhAtS, Functional::TanhAtHalfS]
    }

    pub fn name(&self) -> String {
        match self {
            Functional::One => "1".into(),
            Functional::TanhAtS => "tanh(P_s)".into(),
            Functional::TanhAtHalfS => "tanh(P_s/2)".into(),
            Functional::Custom { name, .. } => name.clone(),
        }
    }

    /// `Φ` for the path `p` at time `s` (snapped to the nearest grid time).
    pub fn eval(&self, p: &CadlagPath, s: f64) -> f64 {
        let i = nearest_index(p.grid(), s);
        let times = &p.times()[..=i];
        let values = &p.values()[..=i];
        self.eval_prefix(times, values)
    }

    /// `Φ` from the grid prefix `(times, values)` ending at `s`.
    pub fn eval_prefix(&self, times: &[f64], values: &[f64]) -> f64 {
        let last = values.len() - 1;
        match self {
            Functional::One => 1.0,
            Functional::TanhAtS => values[last].tanh(),
            Functional::TanhAtHalfS => {
                let half = 0.5 * times[last];
                let j = times.partition_point(|t| *t <= half + 1e-12 * (1.0 + half)).saturating_sub(1);
                values[j].tanh()
            }
            Functional::Custom { f, .. } => f(times, values),
        }
    }
}

pub(crate) fn nearest_index(grid: &TimeGrid, t: f64) -> usize {
    let ts = grid.times();
    let i = ts.partition_point(|s| *s < t);
    if i == 0 {
        0
    } else if i >= ts.len() {
        ts.len() - 1
    } else if (ts[i] - t).abs() <= (t - ts[i - 1]).abs() {
        i
    } else {
        i - 1
    }
}

/// Studentized mean of a sample of increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZStat {
    pub mean: f64,
    pub se: f64,
    pub z: f64,
    /// `se` vanished; `z` is 0 for a zero mean and infinite otherwise.
    pub degenerate: bool,
}

impl ZStat {
    pub fn from_sample(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::TooFewSamples { got: n, need: 2 });
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let scale = 1.0 + mean.abs();
        if se <= 1e-13 * scale {
            let z = if mean.abs() <= 1e-13 * scale { 0.0 } else { mean.signum() * f64::INFINITY };
            return Ok(Self { mean, se, z, degenerate: true });
        }
        Ok(Self { mean, se, z: mean / se, degenerate: false })
    }
}

/// Two-sided Bonferroni critical value for `m` simultaneous z-tests.
pub fn bonferroni_z(alpha: f64, m: usize) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(1.0 - alpha / (2.0 * m.max(1) as f64))
}

/// Configuration of a martingale test family.
#[derive(Debug, Clone)]
pub struct MartingaleTest {
    pub checkpoints: Vec<(f64, f64)>,
    pub functionals: Vec<Functional>,
    pub alpha: f64,
}

impl MartingaleTest {
    /// Checkpoints `(T/4, T/2)`, `(T/2, T)`, `(0, T)` with the standard functionals.
    pub fn standard(horizon: f64, alpha: f64) -> Self {
        Self {
            checkpoints: vec![(0.25 * horizon, 0.5 * horizon), (0.5 * horizon, horizon), (0.0, horizon)],
            functionals: Functional::standard(),
            alpha,
        }
    }

    /// Tests every labelled sample at a joint family-wise level: the
    /// Bonferroni count runs over samples, checkpoints and functionals.
    pub fn run(&self, scenario: &str, samples: &[(String, Vec<CadlagPath>)]) -> Result<TestReport> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        for &(s, t) in &self.checkpoints {
            if !(s >= 0.0 && s < t) {
                return Err(Error::InvalidArgument(format!("checkpoint ({s}, {t}) needs 0 <= s < t")));
            }
        }
        let m = samples.len() * self.checkpoints.len() * self.functionals.len();
        let thr = bonferroni_z(self.alpha, m);
        let mut r = TestReport::new(scenario, "martingale");
        let mut max_z: f64 = 0.0;
        let mut incs = Vec::new();
        for (label, paths) in samples {
            if paths.len() < 2 {
                return Err(Error::TooFewSamples { got: paths.len(), need: 2 });
            }
            for &(s, t) in &self.checkpoints {
                for phi in &self.functionals {
                    incs.clear();
                    for p in paths {
                        let is = nearest_index(p.grid(), s);
                        let it = nearest_index(p.grid(), t);
                        incs.push((p.values()[it] - p.values()[is]) * phi.eval(p, s));
                    }
                    let z = ZStat::from_sample(&incs)?;
                    if z.degenerate && z.z != 0.0 {
                        r.note(format!("{label} ({s},{t}) {}: degenerate se, mean {:e}", phi.name(), z.mean));
                    }
                    max_z = max_z.max(z.z.abs());
                    r.check(format!("{label} ({s:.3},{t:.3}) {}", phi.name()), z.z.abs(), thr);
                }
            }
        }
        r.statistics.insert(
            0,
            crate::report::Statistic { label: "max |z|".into(), value: max_z, threshold: thr, pass: max_z <= thr },
        );
        r.note(format!("bonferroni over {m} statistics at alpha {}", self.alpha));
        Ok(r)
    }
}

/// Single-sample martingale test.
pub fn martingale_test(
    sample: &[CadlagPath],
    checkpoints: &[(f64, f64)],
    functionals: &[Functional],
    alpha: f64,
) -> Result<TestReport> {
    let t = MartingaleTest { checkpoints: checkpoints.to_vec(), functionals: functionals.to_vec(), alpha };
    t.run("sample", &[("P".to_string(), sample.to_vec())])
}

/// Per-pair pieces of `[M, K]_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariationParts {
    /// `Σ |ΔM ΔK|` over shared jump times.
    pub jump_mass: f64,
    /// Realized covariation of the continuous martingale parts.
    pub continuous: f64,
}

pub fn covariation_parts(m: &TestProcess, k: &TestProcess) -> Result<CovariationParts> {
    if !m.path.same_grid(&k.path) {
        return Err(Error::GridMismatch);
    }
    let continuous = m
        .continuous_martingale
        .iter()
        .zip(&k.continuous_martingale)
        .map(|(a, b)| a * b)
        .sum();
    Ok(CovariationParts { jump_mass: m.path.joint_jump_mass(&k.path), continuous })
}

/// Checks `[M^f, K^g]_T = 0` over a sample of pairs: the jump part must
/// vanish exactly on every pair and the continuous part must be within
/// `4` standard errors of zero.
pub fn zero_covariation_check(scenario: &str, pairs: &[(TestProcess, TestProcess)]) -> Result<TestReport> {
    let parts = pairs
        .iter()
        .map(|(m, k)| covariation_parts(m, k))
        .collect::<Result<Vec<_>>>()?;
    zero_covariation_report(scenario, &parts)
}

/// [`zero_covariation_check`] from precomputed per-pair parts.
pub fn zero_covariation_report(scenario: &str, parts: &[CovariationParts]) -> Result<TestReport> {
    let jump = parts.iter().map(|p| p.jump_mass).fold(0.0, f64::max);
    let cont: Vec<f64> = parts.iter().map(|p| p.continuous).collect();
    let z = ZStat::from_sample(&cont)?;
    let mut r = TestReport::new(scenario, "zero-covariation");
    r.check("max jump sum", jump, 0.0);
    r.check("|continuous|/se", z.z.abs(), 4.0);
    r.note(format!("continuous mean {:.3e}, se {:.3e}", z.mean, z.se));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chars::{JumpSizes, LevyMeasure};
    use crate::rng::RngStream;
    use crate::sde::solve_sde;
    use crate::simulate::{simulate_sii, Sampler};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(t: f64, n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(t, n).unwrap())
    }

    fn all_functions() -> Vec<TestFunction> {
        let mut v = TestFunction::presets();
        v.push(TestFunction::Sin { u: 2.5 });
        v.push(TestFunction::Bump { center: 0.3, width: 0.7, offset: 0.5 });
        v
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // fourth-order central differences
        let h = 1e-5;
        let fd = |g: &dyn Fn(f64) -> f64, x: f64| {
            (8.0 * (g(x + h) - g(x - h)) - (g(x + 2.0 * h) - g(x - 2.0 * h))) / (12.0 * h)
        };
        for f in all_functions() {
            for i in -30..=30 {
                let x = i as f64 * 0.07;
                let d1 = fd(&|y| f.value(y), x);
                let d2 = fd(&|y| f.d1(y), x);
                assert!((d1 - f.d1(x)).abs() <= 1e-6 * (1.0 + f.d1(x).abs()), "{f:?} d1 at {x}");
                assert!((d2 - f.d2(x)).abs() <= 1e-6 * (1.0 + f.d2(x).abs()), "{f:?} d2 at {x}");
            }
        }
    }

    #[test]
    fn preset_bounds() {
        for f in TestFunction::presets() {
            assert!(f.inf() >= 1.0);
            for i in -200..=200 {
                let v = f.value(i as f64 * 0.05);
                assert!(v >= f.inf() - 1e-15 && v <= f.sup() + 1e-15);
            }
        }
    }

    #[test]
    fn generator_examples() {
        let f = TestFunction::Sin { u: 1.0 };
        let bm = LocalCharacteristics::brownian();
        for x in [-1.0, 0.0, 0.4, 2.0] {
            assert_eq!(generator_l(&TestFunction::Constant(3.0), x, 0.5, &bm).unwrap(), 0.0);
            assert_abs_diff_eq!(generator_l(&f, x, 0.5, &bm).unwrap(), -x.sin() / 2.0, epsilon = 1e-14);
            // Poisson: b f' and -h f' cancel
            let p = LocalCharacteristics::poisson();
            let want = f.value(x + 1.0) - f.value(x);
            assert_abs_diff_eq!(generator_l(&f, x, 0.5, &p).unwrap(), want, epsilon = 1e-14);
            assert_abs_diff_eq!(generator_l_quadrature(&f, x, 0.5, &p).unwrap(), want, epsilon = 1e-14);
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let chars = [
            LocalCharacteristics::mixed(),
            LocalCharacteristics::constant(0.1, 0.3, LevyMeasure::finite(1.5, JumpSizes::Gaussian { mean: 0.4, sd: 0.8 })),
            LocalCharacteristics::constant(-0.2, 0.0, LevyMeasure::finite(0.7, JumpSizes::Uniform { low: 0.2, high: 2.5 }))
                .with_truncation(0.5),
        ];
        for ch in &chars {
            for f in [TestFunction::Sin { u: 1.0 }, TestFunction::Cos { u: 2.0 }] {
                for x in [-2.0, -0.3, 0.0, 1.1] {
                    let a = generator_l(&f, x, 0.0, ch).unwrap();
                    let b = generator_l_quadrature(&f, x, 0.0, ch).unwrap();
                    assert_abs_diff_eq!(a, b, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn operator_k_examples() {
        let g = TestFunction::Cos { u: 1.0 };
        let ch = LocalCharacteristics::mixed();
        let om = CadlagPath::from_values(grid(1.0, 4), vec![0.0, 0.3, -0.2, 0.5, 1.0]).unwrap();
        let s = 0.6;
        let x = om.left_limit(s).unwrap();
        let zero = SdeSpec::parse(0.0, "0", "0").unwrap();
        assert_eq!(operator_k(&g, &om, s, &ch, &zero).unwrap(), 0.0);
        let one = SdeSpec::parse(0.0, "0", "1").unwrap();
        assert_abs_diff_eq!(
            operator_k(&g, &om, s, &ch, &one).unwrap(),
            generator_l(&g, x, s, &ch).unwrap(),
            epsilon = 1e-14
        );
        // σ = 2 on Poisson: 2b g' + (g(x+2) - g(x) - 2 g'(x)) = g(x+2) - g(x)
        let two = SdeSpec::parse(0.0, "0", "2").unwrap();
        let p = LocalCharacteristics::poisson();
        let want = g.value(x + 2.0) - g.value(x);
        assert_abs_diff_eq!(operator_k(&g, &om, s, &p, &two).unwrap(), want, epsilon = 1e-13);
        let bump = TestFunction::Bump { center: 0.0, width: 1.5, offset: 1.0 };
        let want = bump.value(x + 2.0) - bump.value(x);
        assert_abs_diff_eq!(operator_k(&bump, &om, s, &p, &two).unwrap(), want, epsilon = 1e-13);
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let f = TestFunction::Bump { center: 0.0, width: 1.5, offset: 1.0 };
        for jumps in [
            LevyMeasure::finite(2.0, JumpSizes::Uniform { low: -1.0, high: 1.0 }),
            LevyMeasure::finite(1.0, JumpSizes::Gaussian { mean: 0.0, sd: 0.5 }),
        ] {
            let t = JumpTable::build(&f, 1.0, &jumps).unwrap().unwrap();
            for i in 0..97 {
                let x = -3.0 + i as f64 * 0.0613;
                let want = jump_part_quadrature(&f, x, 1.0, &jumps).unwrap();
                let got = t.get(x).unwrap_or(want);
                assert!((got - want).abs() < 2e-6, "{x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn mf_constant_is_one() {
        let y = simulate_sii(&LocalCharacteristics::mixed(), grid(1.0, 50), RngStream::new(1, 0)).unwrap();
        let m = mf_process(&TestFunction::Constant(4.0), &y, &LocalCharacteristics::mixed()).unwrap();
        assert!(m.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(mf_process(&TestFunction::Constant(0.0), &y, &LocalCharacteristics::mixed()).is_err());
    }

    #[test]
    fn mf_pure_drift_is_one_up_to_grid_error() {
        let ch = LocalCharacteristics::constant(1.0, 0.0, LevyMeasure::Empty);
        for n in [100, 1000] {
            let y = simulate_sii(&ch, grid(1.0, n), RngStream::new(1, 0)).unwrap();
            for f in all_functions() {
                let m = mf_process(&f, &y, &ch).unwrap();
                let err = m.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
                assert!(err < 20.0 / n as f64, "{f:?} n={n}: {err}");
            }
        }
    }

    #[test]
    fn mf_ledger_matches_values() {
        let ch = LocalCharacteristics::mixed();
        let y = simulate_sii(&ch, grid(1.0, 40), RngStream::new(3, 0)).unwrap();
        for f in all_functions() {
            let m = mf_process(&f, &y, &ch).unwrap();
            assert!(m.decomposition_residual() < 1e-12);
            // jump times are a subset of Y's
            for j in m.jumps() {
                assert!(y.jumps().iter().any(|k| k.time == j.time));
            }
            // direct formula at grid times
            let f0 = f.value(0.0);
            let last = y.n_steps();
            let mut integral = 0.0;
            for k in 1..=last {
                let x = y.values()[k - 1];
                integral += generator_l(&f, x, 0.0, &ch).unwrap() / f.value(x) * (1.0 / 40.0);
            }
            let want = f.value(y.terminal()) / f0 * (-integral).exp();
            assert_abs_diff_eq!(m.terminal(), want, epsilon = 1e-5);
        }
    }

    #[test]
    fn mf_mean_is_one_for_brownian() {
        let ch = LocalCharacteristics::brownian();
        let g = grid(1.0, 100);
        let sampler = Sampler::new(&ch, g.clone()).unwrap();
        let b = MfBuilder::new(TestFunction::Sin { u: 1.0 }, &ch, g).unwrap();
        let mut rng = RngStream::new(11, 0).rng();
        let ends: Vec<f64> = (0..4000).map(|_| b.build(&sampler.sample(&mut rng)).unwrap().terminal()).collect();
        let z = ZStat::from_sample(&ends.iter().map(|v| v - 1.0).collect::<Vec<_>>()).unwrap();
        assert!(z.z.abs() < 4.0, "{z:?}");
    }

    #[test]
    fn kg_examples() {
        let ch = LocalCharacteristics::mixed();
        let l = simulate_sii(&ch, grid(1.0, 64), RngStream::new(2, 0)).unwrap();
        let zero = SdeSpec::parse(0.7, "0", "0").unwrap();
        let x = solve_sde(&zero, &l).unwrap();
        for g in all_functions() {
            let k = kg_process(&g, &x, &zero, &ch).unwrap();
            assert!(k.values().iter().all(|v| *v == 0.0));
        }
        // μ = a·x, σ = 0: K^g is O(Δ) on the grid
        let lin = SdeSpec::parse(1.0, "0.8*x", "0").unwrap();
        for n in [200, 2000] {
            let l = simulate_sii(&ch, grid(1.0, n), RngStream::new(2, 0)).unwrap();
            let x = solve_sde(&lin, &l).unwrap();
            for g in all_functions() {
                let k = kg_process(&g, &x, &lin, &ch).unwrap();
                let err = k.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!(err < 10.0 / n as f64, "{g:?} n={n}: {err}");
            }
        }
    }

    #[test]
    fn kg_jumps_follow_x() {
        let ch = LocalCharacteristics::mixed();
        let l = simulate_sii(&ch, grid(1.0, 64), RngStream::new(5, 0)).unwrap();
        let spec = SdeSpec::parse(0.2, "0.1", "ind(x > 0)").unwrap();
        let x = solve_sde(&spec, &l).unwrap();
        let k = kg_process(&TestFunction::Sin { u: 1.0 }, &x, &spec, &ch).unwrap();
        assert!(k.decomposition_residual() < 1e-12);
        assert!(k.jumps().len() <= x.jumps().len());
        for j in k.jumps() {
            assert!(x.jumps().iter().any(|i| i.time == j.time));
        }
    }

    #[test]
    fn bound_holds() {
        let ch = LocalCharacteristics::mixed();
        let g = grid(1.0, 50);
        let sampler = Sampler::new(&ch, g.clone()).unwrap();
        let mut rng = RngStream::new(1, 1).rng();
        let ys: Vec<_> = (0..50).map(|_| sampler.sample(&mut rng)).collect();
        for f in TestFunction::presets() {
            let ms: Vec<_> = ys.iter().map(|y| mf_process(&f, y, &ch).unwrap()).collect();
            assert!(boundedness_check("mixed", &f, &ch, &ms).unwrap().passed());
        }
    }

    #[test]
    fn constant_process_passes() {
        let g = grid(1.0, 8);
        let paths: Vec<_> = (0..10).map(|_| CadlagPath::constant(g.clone(), 2.0)).collect();
        let r = martingale_test(&paths, &[(0.25, 0.5), (0.0, 1.0)], &Functional::standard(), 0.01).unwrap();
        assert!(r.passed());
        assert!(r.statistics.iter().all(|s| s.value == 0.0));
    }

    #[test]
    fn deterministic_drift_rejects() {
        let g = grid(1.0, 8);
        let p = CadlagPath::from_values(g.clone(), g.times().to_vec()).unwrap();
        let r = martingale_test(&vec![p; 10], &[(0.25, 0.5)], &[Functional::One], 0.01).unwrap();
        assert!(!r.passed());
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn noisy_drift_z_matches_theory() {
        // P_t = t + W_t: z ≈ √N (t - s)/sd with sd = √(t - s)
        let ch = LocalCharacteristics::constant(1.0, 1.0, LevyMeasure::Empty);
        let g = grid(1.0, 4);
        let sampler = Sampler::new(&ch, g).unwrap();
        let mut rng = RngStream::new(4, 0).rng();
        let n = 2500;
        let paths: Vec<_> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let r = martingale_test(&paths, &[(0.5, 1.0)], &[Functional::One], 0.01).unwrap();
        let expected = (n as f64).sqrt() * 0.5 / 0.5f64.sqrt();
        let z = r.statistics[1].value;
        assert!((z - expected).abs() < 4.0, "{z} vs {expected}");
        assert!(!r.passed());
    }

    #[test]
    fn functionals_are_adapted() {
        let g = grid(1.0, 10);
        let base: Vec<f64> = (0..=10).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = CadlagPath::from_values(g.clone(), base.clone()).unwrap();
        let s = 0.6;
        for phi in Functional::standard() {
            let before = phi.eval(&p, s);
            let mut mutated = base.clone();
            for v in mutated.iter_mut().skip(7) {
                *v += 100.0;
            }
            let q = CadlagPath::from_values(g.clone(), mutated).unwrap();
            assert_eq!(phi.eval(&q, s), before, "{}", phi.name());
        }
        assert_eq!(Functional::TanhAtHalfS.eval(&p, s), base[3].tanh());
    }

    #[test]
    fn bonferroni_quantiles() {
        assert_abs_diff_eq!(bonferroni_z(0.05, 1), 1.959963984540054, epsilon = 1e-9);
        assert!(bonferroni_z(0.01, 27) > bonferroni_z(0.01, 9));
    }

    #[test]
    fn zero_covariation_same_stream_violates() {
        let ch = LocalCharacteristics::mixed();
        let g = grid(1.0, 50);
        let spec = SdeSpec::parse(0.0, "0", "1").unwrap();
        let mut pairs = Vec::new();
        for i in 0..60 {
            let u = simulate_sii(&ch, g.clone(), RngStream::new(8, 2 * i)).unwrap();
            let x = solve_sde(&spec, &u).unwrap();
            let m = MfBuilder::new(TestFunction::Sin { u: 1.0 }, &ch, g.clone()).unwrap();
            let k = KgBuilder::new(TestFunction::Cos { u: 1.0 }, &spec, &ch, g.clone()).unwrap();
            pairs.push((m.build_process(&u).unwrap(), k.build_process(&x).unwrap()));
        }
        let r = zero_covariation_check("same-stream", &pairs).unwrap();
        assert!(!r.passed());
        assert!(r.statistics[0].value > 0.0);
    }

    proptest! {
        #[test]
        fn generator_linear_in_shift(x in -3.0f64..3.0, u in 0.2f64..3.0) {
            // 𝓛(2 + sin) = 𝓛 sin, so Sin and Cos are quarter-period shifts
            let ch = LocalCharacteristics::mixed();
            let a = generator_l(&TestFunction::Sin { u }, x + std::f64::consts::FRAC_PI_2 / u, 0.0, &ch).unwrap();
            let b = generator_l(&TestFunction::Cos { u }, x, 0.0, &ch).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
