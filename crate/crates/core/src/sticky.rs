//! Sticky Brownian motion
//!
//! ```text
//! dX = μ 1{X=0} dt + 1{X>0} dW,   X ≥ 0
//! 1{X_t=0} dt = (1/(2μ)) dL⁰_t(X)
//! ```
//!
//! built by time-changing a reflected Brownian motion `R = x0 + β + ℓ`
//! (Skorokhod regulator `ℓ`, so `L⁰(R) = 2ℓ`) with the clock
//! `Γ(s) = s + κ ℓ_s`, `X_t = R(Γ⁻¹(t))`. The occupation identity then
//! forces `κ = 1/μ`. [`calibrate_kappa`] recovers the constant from data
//! as a cross-check.
//!
//! `R` is generated on a fine internal grid with the exact joint law of the
//! Brownian increment and its running minimum, so `ℓ` has no
//! discretisation bias at the skeleton times. Whenever `ℓ` grows inside a
//! step the path goes linearly to 0, sits at exactly 0 for `κ δℓ` units of
//! time and leaves linearly.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chars::LocalCharacteristics;
use crate::error::{Error, Result};
use crate::martingale::{KgBuilder, MartingaleTest, TestFunction};
use crate::paths::{CadlagPath, TimeGrid};
use crate::report::TestReport;
use crate::rng::{Role, RngStream};
use crate::sde::SdeSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickyParams {
    /// Stickiness `μ > 0`.
    pub mu: f64,
    pub x0: f64,
}

impl StickyParams {
    pub fn new(mu: f64, x0: f64) -> Result<Self> {
        let p = Self { mu, x0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidArgument(format!("sticky mu must be > 0, got {}", self.mu)));
        }
        if !(self.x0.is_finite() && self.x0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("sticky x0 must be >= 0, got {}", self.x0)));
        }
        Ok(())
    }

    /// Clock constant `κ` in `Γ(s) = s + κ ℓ_s`.
    pub fn kappa(&self) -> f64 {
        1.0 / self.mu
    }

    /// The SDE `dX = μ 1{X=0} dt + 1{X>0} dW` as an expression spec.
    pub fn sde(&self) -> SdeSpec {
        SdeSpec::parse(self.x0, &format!("{} * ind(x == 0)", self.mu), "ind(x > 0)")
            .expect("sticky coefficients parse")
    }
}

/// Internal Brownian steps per output cell.
pub const DEFAULT_SUBSTEPS: usize = 8;

/// Time-changed reflected Brownian motion with clock constant `kappa`;
/// `kappa = 0` gives plain reflected Brownian motion.
pub fn simulate_time_changed<R: Rng + ?Sized>(
    x0: f64,
    kappa: f64,
    grid: &Arc<TimeGrid>,
    substeps: usize,
    rng: &mut R,
) -> CadlagPath {
    let times = grid.times();
    let n = grid.n_steps();
    let mut out = Vec::with_capacity(n + 1);
    out.push(x0);
    // Fill output times up to `t_end` on a linear piece from (t_a, r_a) to (t_b, r_b).
    let fill = |out: &mut Vec<f64>, ta: f64, ra: f64, tb: f64, rb: f64| {
        while out.len() <= n && times[out.len()] <= tb {
            let t = times[out.len()];
            let w = if tb > ta { (t - ta) / (tb - ta) } else { 1.0 };
            out.push(if ra == 0.0 && rb == 0.0 { 0.0 } else { (ra + (rb - ra) * w).max(0.0) });
        }
    };
    let mut t = 0.0;
    let mut r = x0;
    while out.len() <= n {
        let k = out.len();
        let delta = (times[k] - times[k - 1]) / substeps as f64;
        let z: f64 = StandardNormal.sample(rng);
        let free_end = r + delta.sqrt() * z;
        // minimum of the Brownian bridge from r to free_end over delta
        let u: f64 = 1.0 - rng.random::<f64>();
        let d = free_end - r;
        let low = 0.5 * (r + free_end - (d * d - 2.0 * delta * u.ln()).sqrt());
        let dl = (-low).max(0.0);
        let end = free_end + dl;
        if dl == 0.0 {
            fill(&mut out, t, r, t + delta, end);
            t += delta;
        } else {
            let theta = if r + end > 0.0 { r / (r + end) } else { 0.5 };
            let t1 = t + theta * delta;
            fill(&mut out, t, r, t1, 0.0);
            let t2 = t1 + kappa * dl;
            fill(&mut out, t1, 0.0, t2, 0.0);
            let t3 = t2 + (1.0 - theta) * delta;
            fill(&mut out, t2, 0.0, t3, end);
            t = t3;
        }
        r = end;
    }
    CadlagPath::from_values(grid.clone(), out).expect("finite sticky path")
}

/// One sticky Brownian path on `grid`.
pub fn simulate_sticky(params: StickyParams, grid: Arc<TimeGrid>, stream: RngStream) -> Result<CadlagPath> {
    params.validate()?;
    Ok(simulate_time_changed(params.x0, params.kappa(), &grid, DEFAULT_SUBSTEPS, &mut stream.rng()))
}

/// Euler scheme applied directly to `dX = μ 1{X=0} dt + 1{X>0} dW`.
/// It leaves 0 after one step and never returns to it exactly, so it
/// does not produce sticky paths; kept as a negative control.
pub fn naive_euler_sticky(params: StickyParams, grid: Arc<TimeGrid>, stream: RngStream) -> Result<CadlagPath> {
    params.validate()?;
    let mut rng = stream.rng();
    let n = grid.n_steps();
    let mut v = Vec::with_capacity(n + 1);
    v.push(params.x0);
    for k in 1..=n {
        let (t0, t1) = grid.cell(k);
        let dt = t1 - t0;
        let x = v[k - 1];
        let z: f64 = StandardNormal.sample(&mut rng);
        let drift = if x == 0.0 { params.mu * dt } else { 0.0 };
        let diff = if x > 0.0 { dt.sqrt() * z } else { 0.0 };
        v.push(x + drift + diff);
    }
    CadlagPath::from_values(grid, v)
}

/// `L̂⁰_t = (1/ε) ∫ 1{0 < X_s < ε} ds`, left-endpoint sums on the grid.
pub fn local_time_estimate(x: &CadlagPath, epsilon: f64) -> Result<CadlagPath> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let grid = x.grid();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..=grid.n_steps() {
        let (t0, t1) = grid.cell(k);
        let v = x.values()[k - 1];
        if v > 0.0 && v < epsilon {
            acc += (t1 - t0) / epsilon;
        }
        out.push(acc);
    }
    CadlagPath::from_values(grid.clone(), out)
}

/// `∫₀^T 1{|X_s| ≤ η} ds`, left-endpoint sums; `η = 0` detects the exact zeros
/// produced by the time change.
pub fn occupation_at_zero(x: &CadlagPath, eta: f64) -> f64 {
    let grid = x.grid();
    (1..=grid.n_steps())
        .filter(|&k| x.values()[k - 1].abs() <= eta)
        .map(|k| {
            let (t0, t1) = grid.cell(k);
            t1 - t0
        })
        .sum()
}

/// One Richardson step `2 L(ε/2) - L(ε)` on mean terminal estimates; the
/// estimator's bias is linear in `ε` to leading order.
pub fn extrapolated_local_time(paths: &[CadlagPath], epsilon: f64) -> Result<f64> {
    let mean = |e: f64| -> Result<f64> {
        let mut s = 0.0;
        for p in paths {
            s += local_time_estimate(p, e)?.terminal();
        }
        Ok(s / paths.len() as f64)
    };
    Ok(2.0 * mean(0.5 * epsilon)? - mean(epsilon)?)
}

/// Settings for [`verify_sticky_system`].
#[derive(Debug, Clone)]
pub struct StickyCheck {
    /// Relative tolerance of the occupation identity.
    pub tol: f64,
    /// Coarse `ε`; the estimate is extrapolated from `ε` and `ε/2`.
    pub epsilon: f64,
    /// Occupation is compared with `L⁰/(factor · μ)`; the identity has 2.
    pub factor: f64,
    pub eta: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Use the naive Euler scheme instead of the time change.
    pub naive: bool,
}

impl Default for StickyCheck {
    fn default() -> Self {
        Self { tol: 0.1, epsilon: 0.05, factor: 2.0, eta: 0.0, alpha: 0.01, seed: 0, naive: false }
    }
}

/// Simulates `n_paths` sticky paths in parallel; path `i` uses its own stream.
pub fn sample_sticky(params: StickyParams, grid: &Arc<TimeGrid>, n_paths: usize, seed: u64, naive: bool) -> Result<Vec<CadlagPath>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let s = RngStream::for_role(seed, Role::Sticky, i);
            if naive {
                naive_euler_sticky(params, grid.clone(), s)
            } else {
                simulate_sticky(params, grid.clone(), s)
            }
        })
        .collect()
}

/// Checks the occupation identity
/// `E∫1{X=0}dt = E L⁰_T / (2μ)` within a relative tolerance, and runs the
/// `K^g` martingale test for the sticky SDE with Brownian characteristics.
pub fn verify_sticky_system(
    params: StickyParams,
    n_paths: usize,
    grid: Arc<TimeGrid>,
    check: &StickyCheck,
) -> Result<TestReport> {
    if n_paths < 2 {
        return Err(Error::TooFewSamples { got: n_paths, need: 2 });
    }
    let paths = sample_sticky(params, &grid, n_paths, check.seed, check.naive)?;
    verify_sticky_paths(params, &paths, check)
}

/// [`verify_sticky_system`] on precomputed paths.
pub fn verify_sticky_paths(params: StickyParams, paths: &[CadlagPath], check: &StickyCheck) -> Result<TestReport> {
    let n = paths.len() as f64;
    let occupation = paths.iter().map(|p| occupation_at_zero(p, check.eta)).sum::<f64>() / n;
    let lt = extrapolated_local_time(paths, check.epsilon)?;
    let rhs = lt / (check.factor * params.mu);
    let mut r = TestReport::new("sticky", "sticky-system").with_seed(check.seed);
    let gap = (occupation - rhs).abs();
    let allowed = check.tol * rhs.abs();
    // both sides 0 passes
    r.push("|occupation - L/(factor mu)|", gap, allowed, gap <= allowed);
    r.note(format!(
        "occupation {occupation:.5}, local time {lt:.5}, factor {}, mu {}",
        check.factor, params.mu
    ));

    let grid = paths[0].grid().clone();
    let spec = params.sde();
    let chars = LocalCharacteristics::brownian();
    let mut samples = Vec::new();
    for g in TestFunction::presets() {
        let b = KgBuilder::new(g, &spec, &chars, grid.clone())?;
        let ks = paths.par_iter().map(|x| b.build(x)).collect::<Result<Vec<_>>>()?;
        samples.push((format!("K^{}", g.label()), ks));
    }
    let mt = MartingaleTest::standard(grid.horizon(), check.alpha).run("sticky", &samples)?;
    r.absorb(mt);
    Ok(r)
}

/// Finds `κ` with `E∫1{X=0}dt = E L̂⁰_T/(2μ)` by bisection on common random
/// numbers. Intended as a cross-check of `κ = 1/μ`.
pub fn calibrate_kappa(params: StickyParams, grid: Arc<TimeGrid>, n_paths: usize, seed: u64, epsilon: f64) -> Result<f64> {
    params.validate()?;
    let gap = |kappa: f64| -> Result<f64> {
        let paths: Vec<CadlagPath> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::for_role(seed, Role::Calibration, i).rng();
                simulate_time_changed(params.x0, kappa, &grid, DEFAULT_SUBSTEPS, &mut rng)
            })
            .collect();
        let occ = paths.iter().map(|p| occupation_at_zero(p, 0.0)).sum::<f64>() / n_paths as f64;
        Ok(occ - extrapolated_local_time(&paths, epsilon)? / (2.0 * params.mu))
    };
    let (mut lo, mut hi) = (0.01 / params.mu, 100.0 / params.mu);
    if gap(lo)? > 0.0 || gap(hi)? < 0.0 {
        return Err(Error::InvalidArgument("occupation identity not bracketed".into()));
    }
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-3 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}
