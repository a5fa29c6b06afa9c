//! Local characteristics `(b, c, F; A)` of an SII.
//!
//! The drift density `b`, diffusion density `c` and jump kernel `F` are
//! piecewise constant in time; the clock `A` is the identity or a
//! piecewise-linear table. Jump kernels have finite activity: a total rate
//! and a jump-size law.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};
use crate::quad;

/// Canonical truncation `h(y) = y 1{|y| <= threshold}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub threshold: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { threshold: 1.0 }
    }
}

impl Truncation {
    pub fn new(threshold: f64) -> Self {
        Self { threshold }
    }

    #[inline]
    pub fn h(&self, y: f64) -> f64 {
        if y.abs() <= self.threshold {
            y
        } else {
            0.0
        }
    }

    /// `h*(y) = y - h(y)`, the large-jump part.
    #[inline]
    pub fn h_star(&self, y: f64) -> f64 {
        y - self.h(y)
    }

    pub fn breakpoints(&self) -> [f64; 2] {
        [-self.threshold, self.threshold]
    }
}

/// Law of a single jump size. Never produces an exact zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum JumpSizes {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Normal law conditioned on being nonzero (a null event, so the
    /// conditioning only matters for the sampler).
    Gaussian { mean: f64, sd: f64 },
}

impl JumpSizes {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCharacteristics(m.to_string()));
        match *self {
            JumpSizes::Constant { value } => {
                if !value.is_finite() {
                    return bad("constant jump size must be finite");
                }
                if value == 0.0 {
                    return bad("jump size sampler emits 0");
                }
            }
            JumpSizes::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad("uniform jump sizes need low < high");
                }
            }
            JumpSizes::Gaussian { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return bad("gaussian jump sizes need sd > 0");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let y = match *self {
                JumpSizes::Constant { value } => return value,
                JumpSizes::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
                JumpSizes::Gaussian { mean, sd } => Normal::new(mean, sd)
                    .expect("validated gaussian parameters")
                    .sample(rng),
            };
            if y != 0.0 {
                return y;
            }
        }
    }

    /// Density at `y`, or `None` for an atomic law.
    pub fn density(&self, y: f64) -> Option<f64> {
        match *self {
            JumpSizes::Constant { .. } => None,
            JumpSizes::Uniform { low, high } => {
                Some(if (low..=high).contains(&y) { 1.0 / (high - low) } else { 0.0 })
            }
            JumpSizes::Gaussian { mean, sd } => {
                let z = (y - mean) / sd;
                Some((-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt()))
            }
        }
    }

    /// Support used for quadrature.
    fn support(&self) -> (f64, f64) {
        match *self {
            JumpSizes::Constant { value } => (value, value),
            JumpSizes::Uniform { low, high } => (low, high),
            JumpSizes::Gaussian { mean, sd } => (mean - 12.0 * sd, mean + 12.0 * sd),
        }
    }

    /// Radius of the quadrature support around 0.
    pub(crate) fn reach(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    /// `E[phi(Y)]`, exact for atoms and by quadrature otherwise.
    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64]) -> Result<f64> {
        match *self {
            JumpSizes::Constant { value } => Ok(phi(value)),
            _ => {
                let (lo, hi) = self.support();
                let mut cuts = breaks.to_vec();
                if let JumpSizes::Gaussian { mean, .. } = *self {
                    cuts.push(mean);
                }
                cuts.push(0.0);
                quad::integrate(|y| phi(y) * self.density(y).unwrap_or(0.0), lo, hi, &cuts)
            }
        }
    }

    /// Characteristic function `E[exp(i u Y)]` in closed form.
    pub fn char_fn(&self, u: f64) -> Complex64 {
        match *self {
            JumpSizes::Constant { value } => Complex64::from_polar(1.0, u * value),
            JumpSizes::Uniform { low, high } => {
                let w = high - low;
                let half = 0.5 * u * w;
                if half.abs() < 1e-8 {
                    // sinc(0) = 1
                    return Complex64::from_polar(1.0, u * 0.5 * (low + high));
                }
                let sinc = half.sin() / half;
                Complex64::from_polar(sinc, u * 0.5 * (low + high))
            }
            JumpSizes::Gaussian { mean, sd } => {
                Complex64::from_polar((-0.5 * u * u * sd * sd).exp(), u * mean)
            }
        }
    }

    /// `E[Y 1{|Y| <= r}]` in closed form.
    pub fn truncated_mean(&self, r: f64) -> f64 {
        match *self {
            JumpSizes::Constant { value } => {
                if value.abs() <= r {
                    value
                } else {
                    0.0
                }
            }
            JumpSizes::Uniform { low, high } => {
                let a = low.max(-r);
                let b = high.min(r);
                if b <= a {
                    0.0
                } else {
                    (b * b - a * a) / (2.0 * (high - low))
                }
            }
            JumpSizes::Gaussian { mean, sd } => {
                let n = StatNormal::standard();
                let lo = (-r - mean) / sd;
                let hi = (r - mean) / sd;
                mean * (n.cdf(hi) - n.cdf(lo)) - sd * (n.pdf(hi) - n.pdf(lo))
            }
        }
    }
}

/// Finite-activity Lévy measure `F = rate * law(Y)`, or the zero measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum LevyMeasure {
    #[default]
    Empty,
    FiniteActivity { rate: f64, sizes: JumpSizes },
}

impl LevyMeasure {
    pub fn finite(rate: f64, sizes: JumpSizes) -> Self {
        LevyMeasure::FiniteActivity { rate, sizes }
    }

    pub fn rate(&self) -> f64 {
        match self {
            LevyMeasure::Empty => 0.0,
            LevyMeasure::FiniteActivity { rate, .. } => *rate,
        }
    }

    pub fn sizes(&self) -> Option<&JumpSizes> {
        match self {
            LevyMeasure::Empty => None,
            LevyMeasure::FiniteActivity { sizes, .. } => Some(sizes),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::Empty => Ok(()),
            LevyMeasure::FiniteActivity { rate, sizes } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::InvalidCharacteristics(format!(
                        "jump rate must be finite and >= 0, got {rate}"
                    )));
                }
                sizes.validate()
            }
        }
    }

    /// `∫ phi(y) F(dy)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64]) -> Result<f64> {
        match self {
            LevyMeasure::Empty => Ok(0.0),
            LevyMeasure::FiniteActivity { rate, sizes } => {
                if *rate == 0.0 {
                    return Ok(0.0);
                }
                Ok(rate * sizes.expect(phi, breaks)?)
            }
        }
    }

    /// `∫ h(y) F(dy)`.
    pub fn compensator(&self, h: &Truncation) -> f64 {
        match self {
            LevyMeasure::Empty => 0.0,
            LevyMeasure::FiniteActivity { rate, sizes } => rate * sizes.truncated_mean(h.threshold),
        }
    }

    /// `∫ (e^{iuy} - 1 - iu h(y)) F(dy)` in closed form.
    pub fn jump_exponent(&self, u: f64, h: &Truncation) -> Complex64 {
        match self {
            LevyMeasure::Empty => Complex64::new(0.0, 0.0),
            LevyMeasure::FiniteActivity { rate, sizes } => {
                let phi = sizes.char_fn(u);
                Complex64::new(rate * (phi.re - 1.0), rate * phi.im - u * self.compensator(h))
            }
        }
    }
}

/// Piecewise-constant function of time, right-continuous: `values[i]` holds
/// on `[breaks[i], breaks[i+1])`, the last value on `[breaks[last], ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule<T> {
    pub breaks: Vec<f64>,
    pub values: Vec<T>,
}

impl<T: Clone> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Self { breaks: vec![0.0], values: vec![value] }
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<T>) -> Result<Self> {
        let s = Self { breaks, values };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.breaks.is_empty() || self.breaks.len() != self.values.len() {
            return Err(Error::InvalidCharacteristics(
                "schedule needs one value per breakpoint".into(),
            ));
        }
        if self.breaks[0] != 0.0 {
            return Err(Error::InvalidCharacteristics("schedule must start at t = 0".into()));
        }
        if self.breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidCharacteristics(
                "schedule breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> &T {
        let i = self.breaks.partition_point(|b| *b <= t);
        &self.values[i.saturating_sub(1)]
    }

    pub fn is_constant(&self) -> bool {
        self.values.len() == 1
    }
}

/// The continuous increasing clock `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum TimeScale {
    #[default]
    Identity,
    /// Knots `(t, A(t))`, linearly interpolated; extended past the last knot
    /// with the slope of the final segment.
    Table(Vec<(f64, f64)>),
}

impl TimeScale {
    pub fn validate(&self) -> Result<()> {
        match self {
            TimeScale::Identity => Ok(()),
            TimeScale::Table(knots) => {
                if knots.len() < 2 {
                    return Err(Error::InvalidCharacteristics(
                        "A table needs at least two knots".into(),
                    ));
                }
                if knots[0] != (0.0, 0.0) {
                    return Err(Error::InvalidCharacteristics("A table must start at (0, 0)".into()));
                }
                for w in knots.windows(2) {
                    if !(w[0].0 < w[1].0) {
                        return Err(Error::InvalidCharacteristics(
                            "A table times must be strictly increasing".into(),
                        ));
                    }
                    if w[1].1 < w[0].1 || !w[1].1.is_finite() {
                        return Err(Error::InvalidCharacteristics("A not nondecreasing".into()));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeScale::Identity => t,
            TimeScale::Table(knots) => {
                let i = knots.partition_point(|k| k.0 <= t).clamp(1, knots.len() - 1);
                let (t0, a0) = knots[i - 1];
                let (t1, a1) = knots[i];
                a0 + (a1 - a0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn increment(&self, t0: f64, t1: f64) -> f64 {
        match self {
            TimeScale::Identity => t1 - t0,
            TimeScale::Table(_) => self.eval(t1) - self.eval(t0),
        }
    }

    fn knot_times(&self) -> &[(f64, f64)] {
        match self {
            TimeScale::Identity => &[],
            TimeScale::Table(k) => k,
        }
    }
}

/// A maximal time interval on which `b`, `c`, `F` are constant and `A` is
/// linear.
#[derive(Debug, Clone, Copy)]
pub struct Piece<'a> {
    pub start: f64,
    pub end: f64,
    /// `A(end) - A(start)`.
    pub clock: f64,
    pub drift: f64,
    pub diffusion: f64,
    pub jumps: &'a LevyMeasure,
}

/// Numeric integrals certifying integrability on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationResult {
    /// `∫_0^T |b_s| dA_s`
    pub drift_integral: f64,
    /// `∫_0^T ∫ (1 ∧ y²) F_s(dy) dA_s`
    pub jump_activity_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCharacteristics {
    pub drift: Schedule<f64>,
    pub diffusion: Schedule<f64>,
    pub jumps: Schedule<LevyMeasure>,
    pub clock: TimeScale,
    pub truncation: Truncation,
}

impl LocalCharacteristics {
    /// Time-constant characteristics with `A_t = t` and `h` at threshold 1.
    pub fn constant(b: f64, c: f64, jumps: LevyMeasure) -> Self {
        Self {
            drift: Schedule::constant(b),
            diffusion: Schedule::constant(c),
            jumps: Schedule::constant(jumps),
            clock: TimeScale::Identity,
            truncation: Truncation::default(),
        }
    }

    /// Standard Brownian motion `(0, 1, ∅; id)`.
    pub fn brownian() -> Self {
        Self::constant(0.0, 1.0, LevyMeasure::Empty)
    }

    /// Standard Poisson process `(1, 0, δ₁; id)` relative to `h` at threshold 1.
    pub fn poisson() -> Self {
        Self::constant(0.0, 0.0, LevyMeasure::finite(1.0, JumpSizes::Constant { value: 1.0 }))
            .with_compensated_drift(0.0)
    }

    /// `(0.5, 1, 2·U(-1,1); id)`.
    pub fn mixed() -> Self {
        Self::constant(
            0.5,
            1.0,
            LevyMeasure::finite(2.0, JumpSizes::Uniform { low: -1.0, high: 1.0 }),
        )
    }

    /// Sets `b` so that the raw (uncompensated) drift equals `raw` on every
    /// piece, i.e. `b = raw + ∫ h dF`.
    pub fn with_compensated_drift(mut self, raw: f64) -> Self {
        let h = self.truncation;
        let breaks = self.jumps.breaks.clone();
        let values = self.jumps.values.iter().map(|f| raw + f.compensator(&h)).collect();
        self.drift = Schedule { breaks, values };
        self
    }

    pub fn with_truncation(mut self, threshold: f64) -> Self {
        self.truncation = Truncation::new(threshold);
        self
    }

    pub fn with_clock(mut self, clock: TimeScale) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_drift(mut self, drift: Schedule<f64>) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_diffusion(mut self, diffusion: Schedule<f64>) -> Self {
        self.diffusion = diffusion;
        self
    }

    pub fn with_jumps(mut self, jumps: Schedule<LevyMeasure>) -> Self {
        self.jumps = jumps;
        self
    }

    pub fn b(&self, t: f64) -> f64 {
        *self.drift.at(t)
    }

    pub fn c(&self, t: f64) -> f64 {
        *self.diffusion.at(t)
    }

    pub fn f(&self, t: f64) -> &LevyMeasure {
        self.jumps.at(t)
    }

    /// Structural checks that do not depend on a horizon.
    pub fn check_structure(&self) -> Result<()> {
        self.drift.check()?;
        self.diffusion.check()?;
        self.jumps.check()?;
        self.clock.validate()?;
        if !(self.truncation.threshold.is_finite() && self.truncation.threshold > 0.0) {
            return Err(Error::InvalidCharacteristics(
                "truncation threshold must be positive".into(),
            ));
        }
        for b in &self.drift.values {
            if !b.is_finite() {
                return Err(Error::InvalidCharacteristics("b must be finite".into()));
            }
        }
        for c in &self.diffusion.values {
            if !(c.is_finite() && *c >= 0.0) {
                return Err(Error::InvalidCharacteristics(format!("c must be >= 0, got {c}")));
            }
        }
        for f in &self.jumps.values {
            f.validate()?;
        }
        Ok(())
    }

    /// Checks the structure and computes the integrability integrals on
    /// `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Result<ValidationResult> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
        }
        self.check_structure()?;
        let mut drift_integral = 0.0;
        let mut jump_activity_integral = 0.0;
        for p in self.pieces(0.0, horizon) {
            drift_integral += p.drift.abs() * p.clock;
            if p.clock > 0.0 {
                let act = p.jumps.integrate(|y| (y * y).min(1.0), &[-1.0, 1.0])?;
                jump_activity_integral += act * p.clock;
            }
        }
        if !(drift_integral.is_finite() && jump_activity_integral.is_finite()) {
            return Err(Error::InvalidCharacteristics("integrability integrals diverge".into()));
        }
        Ok(ValidationResult { drift_integral, jump_activity_integral })
    }

    /// Splits `[t0, t1]` into pieces of constancy.
    pub fn pieces(&self, t0: f64, t1: f64) -> Vec<Piece<'_>> {
        let mut cuts = vec![t0, t1];
        let inside = |t: &f64| *t > t0 && *t < t1;
        cuts.extend(self.drift.breaks.iter().filter(|t| inside(t)));
        cuts.extend(self.diffusion.breaks.iter().filter(|t| inside(t)));
        cuts.extend(self.jumps.breaks.iter().filter(|t| inside(t)));
        cuts.extend(self.clock.knot_times().iter().map(|k| k.0).filter(|t| inside(t)));
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        cuts.windows(2)
            .map(|w| Piece {
                start: w[0],
                end: w[1],
                clock: self.clock.increment(w[0], w[1]),
                drift: self.b(w[0]),
                diffusion: self.c(w[0]),
                jumps: self.f(w[0]),
            })
            .collect()
    }

    /// Lévy exponent
    /// `ψ_t(u) = iub_t - u²c_t/2 + ∫(e^{iuy} - 1 - iuh(y)) F_t(dy)`.
    pub fn levy_exponent(&self, u: f64, t: f64) -> Complex64 {
        exponent_parts(u, self.b(t), self.c(t), self.f(t), &self.truncation)
    }

    /// `∫_0^t ψ_s(u) dA_s`, exact for piecewise-constant characteristics and
    /// piecewise-linear `A`.
    pub fn integrated_exponent(&self, u: f64, t: f64) -> Complex64 {
        if t <= 0.0 || u == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.pieces(0.0, t)
            .iter()
            .map(|p| exponent_parts(u, p.drift, p.diffusion, p.jumps, &self.truncation) * p.clock)
            .sum()
    }
}

pub(crate) fn exponent_parts(
    u: f64,
    b: f64,
    c: f64,
    f: &LevyMeasure,
    h: &Truncation,
) -> Complex64 {
    if u == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(-0.5 * u * u * c, u * b) + f.jump_exponent(u, h)
}

/// Characteristics of the pair `(U, L)` of independent copies of one SII:
/// drift `(b, b)`, diffusion `diag(c, c)` and jump measure
/// `F(dx)δ₀(dy) + δ₀(dx)F(dy)` on the shared clock `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateCharacteristics {
    pub marginal: LocalCharacteristics,
}

impl BivariateCharacteristics {
    pub fn new(marginal: LocalCharacteristics) -> Self {
        Self { marginal }
    }

    pub fn drift(&self, t: f64) -> [f64; 2] {
        let b = self.marginal.b(t);
        [b, b]
    }

    pub fn diffusion(&self, t: f64) -> [[f64; 2]; 2] {
        let c = self.marginal.c(t);
        [[c, 0.0], [0.0, c]]
    }

    /// `∫∫ phi(x, y) F^{(U,L)}_t(dx, dy)`.
    pub fn integrate_jumps<F: Fn(f64, f64) -> f64>(&self, phi: F, t: f64) -> Result<f64> {
        let f = self.marginal.f(t);
        let h = self.marginal.truncation.breakpoints();
        Ok(f.integrate(|x| phi(x, 0.0), &h)? + f.integrate(|y| phi(0.0, y), &h)?)
    }

    /// Joint exponent `ψ_t(u₁, u₂)`; the product-form kernel makes it the
    /// sum of the marginal exponents.
    pub fn levy_exponent(&self, u1: f64, u2: f64, t: f64) -> Complex64 {
        self.marginal.levy_exponent(u1, t) + self.marginal.levy_exponent(u2, t)
    }

    pub fn integrated_exponent(&self, u1: f64, u2: f64, t: f64) -> Complex64 {
        self.marginal.integrated_exponent(u1, t) + self.marginal.integrated_exponent(u2, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_poisson_b1() -> LocalCharacteristics {
        LocalCharacteristics::constant(1.0, 0.0, LevyMeasure::finite(1.0, JumpSizes::Constant { value: 1.0 }))
    }

    /// Independent route: evaluate the jump integral by quadrature against the
    /// density instead of closed-form characteristic functions.
    fn exponent_by_quadrature(ch: &LocalCharacteristics, u: f64, t: f64) -> Complex64 {
        let h = ch.truncation;
        let f = ch.f(t);
        let br = [-h.threshold, h.threshold];
        let re = f.integrate(|y| (u * y).cos() - 1.0, &br).unwrap();
        let im = f.integrate(|y| (u * y).sin() - u * h.h(y), &br).unwrap();
        Complex64::new(-0.5 * u * u * ch.c(t) + re, u * ch.b(t) + im)
    }

    #[test]
    fn truncation_invariants() {
        let h = Truncation::new(0.5);
        assert_eq!(h.h(0.0), 0.0);
        assert_eq!(h.h(0.3), 0.3);
        assert_eq!(h.h(0.7), 0.0);
        assert_eq!(h.h_star(0.3), 0.0);
        assert_eq!(h.h_star(-0.7), -0.7);
    }

    #[test]
    fn validate_brownian() {
        let v = LocalCharacteristics::brownian().validate(1.0).unwrap();
        assert_eq!(v.drift_integral, 0.0);
        assert_eq!(v.jump_activity_integral, 0.0);
    }

    #[test]
    fn validate_poisson_with_drift() {
        let v = unit_poisson_b1().validate(2.0).unwrap();
        assert_abs_diff_eq!(v.drift_integral, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v.jump_activity_integral, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn validate_rejects_decreasing_clock() {
        let ch = LocalCharacteristics::brownian()
            .with_clock(TimeScale::Table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.5)]));
        let err = ch.validate(1.0).unwrap_err();
        assert!(err.to_string().contains("A not nondecreasing"), "{err}");
    }

    #[test]
    fn validate_rejects_negative_c_and_zero_jumps() {
        let ch = LocalCharacteristics::constant(0.0, -1.0, LevyMeasure::Empty);
        assert!(ch.validate(1.0).unwrap_err().to_string().contains("c must be >= 0"));
        let ch = LocalCharacteristics::constant(
            0.0,
            1.0,
            LevyMeasure::finite(1.0, JumpSizes::Constant { value: 0.0 }),
        );
        assert!(ch.validate(1.0).unwrap_err().to_string().contains("emits 0"));
        assert!(LocalCharacteristics::brownian().validate(0.0).is_err());
    }

    #[test]
    fn exponent_gaussian_and_zero() {
        let ch = LocalCharacteristics::brownian();
        assert_eq!(ch.levy_exponent(2.0, 0.3), Complex64::new(-2.0, 0.0));
        assert_eq!(LocalCharacteristics::mixed().levy_exponent(0.0, 0.3), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn exponent_poisson_cancels_drift() {
        let psi = unit_poisson_b1().levy_exponent(1.0, 0.0);
        let expect = Complex64::from_polar(1.0, 1.0) - 1.0;
        assert_abs_diff_eq!(psi.re, expect.re, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.im, expect.im, epsilon = 1e-15);
        let q = exponent_by_quadrature(&unit_poisson_b1(), 1.0, 0.0);
        assert_abs_diff_eq!(q.re, expect.re, epsilon = 1e-14);
        assert_abs_diff_eq!(q.im, expect.im, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let cases = [
            LocalCharacteristics::mixed(),
            LocalCharacteristics::mixed().with_truncation(0.5),
            LocalCharacteristics::constant(
                -0.3,
                0.2,
                LevyMeasure::finite(1.5, JumpSizes::Gaussian { mean: 0.4, sd: 0.8 }),
            ),
            LocalCharacteristics::constant(
                0.1,
                0.0,
                LevyMeasure::finite(0.7, JumpSizes::Gaussian { mean: -0.2, sd: 1.3 }),
            )
            .with_truncation(0.25),
        ];
        for ch in &cases {
            for &u in &[-3.0, -0.7, 0.4, 1.0, 2.5, 5.0] {
                let a = ch.levy_exponent(u, 0.0);
                let b = exponent_by_quadrature(ch, u, 0.0);
                assert!((a - b).norm() < 1e-9, "u={u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn integrated_exponent_constant() {
        let ch = LocalCharacteristics::mixed();
        let u = 1.3;
        let a = ch.integrated_exponent(u, 3.0);
        let b = ch.levy_exponent(u, 0.0) * 3.0;
        assert!((a - b).norm() < 1e-12);
        assert_eq!(ch.integrated_exponent(0.0, 3.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn integrated_exponent_piecewise_clock() {
        // A runs at speed 2 on [0,1] and speed 1 afterwards: A(t) = 2t, then 2 + (t-1).
        let clock = TimeScale::Table(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]);
        let ch = LocalCharacteristics::brownian().with_clock(clock);
        let u = 1.5;
        // ψ = -u²/2 constant; ∫_0^{1.5} ψ dA = ψ (A(1.5)) = ψ * 2.5
        let expect = -0.5 * u * u * 2.5;
        let got = ch.integrated_exponent(u, 1.5);
        assert_abs_diff_eq!(got.re, expect, epsilon = 1e-14);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-14);
        // Also with a drift switching at 0.5: b = 1 on [0, .5), b = -1 afterwards.
        let ch = ch.with_drift(Schedule::piecewise(vec![0.0, 0.5], vec![1.0, -1.0]).unwrap());
        let got = ch.integrated_exponent(u, 1.5);
        // ∫ b dA = 1 * (A(.5)) - 1 * (A(1.5) - A(.5)) = 1 - 1.5 = -0.5
        assert_abs_diff_eq!(got.im, u * -0.5, epsilon = 1e-14);
    }

    #[test]
    fn bivariate_structure() {
        let bi = BivariateCharacteristics::new(LocalCharacteristics::mixed());
        let c = bi.diffusion(0.2);
        assert_eq!(c[0][1], 0.0);
        assert_eq!(c[1][0], 0.0);
        // no mass where both coordinates are nonzero
        let both = bi
            .integrate_jumps(|x, y| if x != 0.0 && y != 0.0 { 1.0 } else { 0.0 }, 0.2)
            .unwrap();
        assert_eq!(both, 0.0);
        let total = bi.integrate_jumps(|_, _| 1.0, 0.2).unwrap();
        assert_abs_diff_eq!(total, 4.0, epsilon = 1e-12);
    }

    fn arb_measure() -> impl Strategy<Value = LevyMeasure> {
        prop_oneof![
            Just(LevyMeasure::Empty),
            (0.0..3.0f64, prop_oneof![-2.0..-0.1f64, 0.1..2.0f64])
                .prop_map(|(r, v)| LevyMeasure::finite(r, JumpSizes::Constant { value: v })),
            (0.0..3.0f64, -2.0..0.0f64, 0.1..2.0f64).prop_map(|(r, a, w)| LevyMeasure::finite(
                r,
                JumpSizes::Uniform { low: a, high: a + w }
            )),
            (0.0..3.0f64, -1.0..1.0f64, 0.1..1.5f64)
                .prop_map(|(r, m, s)| LevyMeasure::finite(r, JumpSizes::Gaussian { mean: m, sd: s })),
        ]
    }

    proptest! {
        #[test]
        fn exponent_conjugate_symmetry(b in -2.0..2.0f64, c in 0.0..2.0f64, f in arb_measure(),
                                       u in -6.0..6.0f64, thr in 0.2..2.0f64) {
            let ch = LocalCharacteristics::constant(b, c, f).with_truncation(thr);
            let p = ch.levy_exponent(u, 0.0);
            let q = ch.levy_exponent(-u, 0.0);
            prop_assert!((p - q.conj()).norm() < 1e-12);
        }

        #[test]
        fn exponent_additive(b1 in -2.0..2.0f64, c1 in 0.0..2.0f64, f1 in arb_measure(),
                             b2 in -2.0..2.0f64, c2 in 0.0..2.0f64, f2 in arb_measure(),
                             u in -6.0..6.0f64) {
            let h = Truncation::default();
            let sum = exponent_parts(u, b1 + b2, c1 + c2, &LevyMeasure::Empty, &h)
                + f1.jump_exponent(u, &h) + f2.jump_exponent(u, &h);
            let parts = exponent_parts(u, b1, c1, &f1, &h) + exponent_parts(u, b2, c2, &f2, &h);
            prop_assert!((sum - parts).norm() < 1e-12);
        }
    }
}
