//! Law and independence tests.
//!
//! The ECF test compares empirical characteristic functions at grid times
//! with `exp(∫ψ dA)`. For a single `(t, u)` the statistic
//! `|φ̂ - φ|·√N / √(1 - |φ|² + 1/N)` is asymptotically the norm of a planar
//! Gaussian with unit total variance, whose tail is dominated by that of
//! `|N(0,1)|` at the thresholds used here; the test therefore applies a
//! two-sided normal Bonferroni threshold over the grid.
//!
//! The independence test is the biased distance-covariance V-statistic with
//! a permutation p-value.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::chars::LocalCharacteristics;
use crate::error::{Error, Result};
use crate::martingale::{bonferroni_z, nearest_index};
use crate::paths::CadlagPath;
use crate::report::TestReport;
use crate::rng::{Role, RngStream};

/// `n` points spread symmetrically over `[-u_max, u_max]`.
pub fn symmetric_grid(u_max: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0];
    }
    (0..n).map(|i| -u_max + 2.0 * u_max * i as f64 / (n - 1) as f64).collect()
}

/// Values of every path at the grid time nearest to `t`.
pub fn marginal(paths: &[CadlagPath], t: f64) -> Vec<f64> {
    paths.iter().map(|p| p.values()[nearest_index(p.grid(), t)]).collect()
}

/// One `(t, u)` entry of the ECF comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcfPoint {
    pub t: f64,
    pub u: f64,
    pub empirical: Complex64,
    pub theoretical: Complex64,
    pub statistic: f64,
}

/// ECF statistics for a set of values `xs` sampled at time `t`.
pub fn ecf_points(xs: &[f64], t: f64, chars: &LocalCharacteristics, u_grid: &[f64]) -> Vec<EcfPoint> {
    let n = xs.len() as f64;
    u_grid
        .iter()
        .map(|&u| {
            let mut acc = Complex64::new(0.0, 0.0);
            for x in xs {
                acc += Complex64::from_polar(1.0, u * x);
            }
            let empirical = acc / n;
            let theoretical = chars.integrated_exponent(u, t).exp();
            let var = (1.0 - theoretical.norm_sqr()).max(0.0) + 1.0 / n;
            let statistic = (empirical - theoretical).norm() * n.sqrt() / var.sqrt();
            EcfPoint { t, u, empirical, theoretical, statistic }
        })
        .collect()
}

/// Compares the paths' one-dimensional marginals at `times` with the law
/// implied by `chars`, family-wise at level `alpha`.
pub fn ecf_law_test(
    scenario: &str,
    paths: &[CadlagPath],
    chars: &LocalCharacteristics,
    times: &[f64],
    u_grid: &[f64],
    alpha: f64,
) -> Result<TestReport> {
    if paths.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    if times.is_empty() || u_grid.is_empty() {
        return Err(Error::InvalidArgument("ecf test needs times and frequencies".into()));
    }
    let m = times.len() * u_grid.len();
    let thr = bonferroni_z(alpha, m);
    let mut r = TestReport::new(scenario, "ecf-law");
    let mut worst: Option<EcfPoint> = None;
    for &t in times {
        let xs = marginal(paths, t);
        let pts = ecf_points(&xs, t, chars, u_grid);
        let top = pts.iter().copied().max_by(|a, b| a.statistic.total_cmp(&b.statistic)).expect("nonempty");
        r.check(format!("max stat t={t:.3}"), top.statistic, thr);
        if worst.is_none_or(|w| top.statistic > w.statistic) {
            worst = Some(top);
        }
    }
    if let Some(w) = worst {
        r.note(format!(
            "worst at t={:.3}, u={:.3}: empirical {:.4}{:+.4}i vs {:.4}{:+.4}i",
            w.t, w.u, w.empirical.re, w.empirical.im, w.theoretical.re, w.theoretical.im
        ));
    }
    r.note(format!("N = {}, bonferroni over {m} points at alpha {alpha}", paths.len()));
    Ok(r)
}

/// Path values at the given times (snapped to the grid).
pub fn projection(path: &CadlagPath, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| path.values()[nearest_index(path.grid(), t)]).collect()
}

/// Projection times `{T/4, T/2, 3T/4, T}`.
pub fn quarter_times(horizon: f64) -> [f64; 4] {
    [0.25 * horizon, 0.5 * horizon, 0.75 * horizon, horizon]
}

/// Double-centred Euclidean distance matrix, row-major `n × n`.
fn centred_distances(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = xs[i].iter().zip(&xs[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    });
    let row_means: Vec<f64> = d.chunks(n).map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    d
}

/// `Σ_ij A_ij B_{π(i)π(j)}` using symmetry.
fn permuted_inner(a: &[f64], b: &[f64], perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..n {
        let ar = &a[i * n..(i + 1) * n];
        let br = &b[perm[i] * n..(perm[i] + 1) * n];
        diag += ar[i] * br[perm[i]];
        let mut s = 0.0;
        for j in (i + 1)..n {
            s += ar[j] * br[perm[j]];
        }
        off += s;
    }
    diag + 2.0 * off
}

/// Biased sample distance covariance `dCov²_n(x, v)`.
pub fn distance_covariance(xs: &[Vec<f64>], vs: &[Vec<f64>]) -> Result<f64> {
    check_pairs(xs, vs, 2)?;
    let n = xs.len();
    let a = centred_distances(xs);
    let b = centred_distances(vs);
    let id: Vec<usize> = (0..n).collect();
    Ok(permuted_inner(&a, &b, &id) / (n * n) as f64)
}

fn check_pairs(xs: &[Vec<f64>], vs: &[Vec<f64>], need: usize) -> Result<()> {
    if xs.len() != vs.len() {
        return Err(Error::InvalidArgument(format!("{} features vs {}", xs.len(), vs.len())));
    }
    if xs.len() < need {
        return Err(Error::TooFewSamples { got: xs.len(), need });
    }
    Ok(())
}

/// Outcome of a permutation test.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceOutcome {
    /// `n · dCov²_n`
    pub statistic: f64,
    pub p_value: f64,
    pub permutation_mean: f64,
    /// `(1 - alpha)` quantile of the permutation distribution.
    pub critical: f64,
}

pub const MIN_REPLICATIONS: usize = 50;

/// Distance-covariance permutation test. Permutation `k` shuffles the
/// pairing with its own stream derived from `seed`, so results do not depend
/// on the thread count.
pub fn independence_outcome(
    xs: &[Vec<f64>],
    vs: &[Vec<f64>],
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<IndependenceOutcome> {
    check_pairs(xs, vs, MIN_REPLICATIONS)?;
    if n_perm == 0 {
        return Err(Error::InvalidArgument("n_perm must be positive".into()));
    }
    let n = xs.len();
    let a = centred_distances(xs);
    let b = centred_distances(vs);
    let id: Vec<usize> = (0..n).collect();
    let scale = 1.0 / n as f64;
    let observed = permuted_inner(&a, &b, &id) * scale;
    let mut perms: Vec<f64> = (0..n_perm as u64)
        .into_par_iter()
        .map(|k| {
            let mut perm = id.clone();
            perm.shuffle(&mut RngStream::for_role(seed, Role::Permutation, k).rng());
            permuted_inner(&a, &b, &perm) * scale
        })
        .collect();
    // ties within rounding count as exceedances
    let tol = 1e-12 * observed.abs().max(1e-300);
    let exceed = perms.iter().filter(|s| **s >= observed - tol).count();
    let p_value = (1 + exceed) as f64 / (n_perm + 1) as f64;
    let permutation_mean = perms.iter().sum::<f64>() / n_perm as f64;
    perms.sort_by(|x, y| x.total_cmp(y));
    let idx = (((1.0 - alpha) * n_perm as f64).ceil() as usize).clamp(1, n_perm) - 1;
    Ok(IndependenceOutcome { statistic: observed, p_value, permutation_mean, critical: perms[idx] })
}

/// [`independence_outcome`] as a report: passes when `p > alpha`.
pub fn independence_test(
    scenario: &str,
    xs: &[Vec<f64>],
    vs: &[Vec<f64>],
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    let o = independence_outcome(xs, vs, n_perm, alpha, seed)?;
    let mut r = TestReport::new(scenario, "independence").with_seed(seed);
    r.push("n dCov^2", o.statistic, o.critical, true);
    r.push("p-value", o.p_value, alpha, o.p_value > alpha);
    r.note(format!(
        "N = {}, {n_perm} permutations, permutation mean {:.4e}",
        xs.len(),
        o.permutation_mean
    ));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chars::{JumpSizes, LevyMeasure};
    use crate::paths::TimeGrid;
    use crate::simulate::Sampler;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn sample(ch: &LocalCharacteristics, n_paths: usize, seed: u64) -> Vec<CadlagPath> {
        let g = Arc::new(TimeGrid::uniform(1.0, 20).unwrap());
        let s = Sampler::new(ch, g).unwrap();
        let mut rng = RngStream::new(seed, 0).rng();
        (0..n_paths).map(|_| s.sample(&mut rng)).collect()
    }

    fn features(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed, 9).rng();
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn grid_is_symmetric() {
        let g = symmetric_grid(5.0, 21);
        assert_eq!(g.len(), 21);
        assert_abs_diff_eq!(g[10], 0.0, epsilon = 1e-15);
        for i in 0..21 {
            assert_abs_diff_eq!(g[i], -g[20 - i], epsilon = 1e-14);
        }
    }

    #[test]
    fn brownian_self_consistent() {
        let ch = LocalCharacteristics::brownian();
        let paths = sample(&ch, 3000, 1);
        let r = ecf_law_test("bm", &paths, &ch, &[0.5, 1.0], &symmetric_grid(5.0, 21), 0.01).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn doubled_variance_rejected() {
        let ch = LocalCharacteristics::brownian();
        let wide = LocalCharacteristics::constant(0.0, 2.0, LevyMeasure::Empty);
        let paths = sample(&wide, 10_000, 2);
        let r = ecf_law_test("bm", &paths, &ch, &[1.0], &symmetric_grid(5.0, 21), 0.01).unwrap();
        assert!(!r.passed());
        // at u = 1 the gap is e^{-1} vs e^{-1/2}
        let xs = marginal(&paths, 1.0);
        let p = ecf_points(&xs, 1.0, &ch, &[1.0])[0];
        assert_abs_diff_eq!(p.theoretical.re, (-0.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.empirical.re, (-1.0f64).exp(), epsilon = 0.03);
    }

    #[test]
    fn deterministic_drift_statistic_vanishes() {
        let ch = LocalCharacteristics::constant(0.7, 0.0, LevyMeasure::Empty);
        let paths = sample(&ch, 50, 3);
        for t in [0.25, 1.0] {
            let pts = ecf_points(&marginal(&paths, t), t, &ch, &symmetric_grid(5.0, 21));
            for p in pts {
                assert!(p.statistic < 1e-9, "{p:?}");
            }
        }
    }

    #[test]
    fn empty_sample_is_error() {
        let ch = LocalCharacteristics::brownian();
        assert!(ecf_law_test("x", &[], &ch, &[1.0], &[1.0], 0.01).is_err());
    }

    #[test]
    fn mixed_preset_passes() {
        let ch = LocalCharacteristics::mixed();
        let paths = sample(&ch, 3000, 4);
        let r = ecf_law_test("mix", &paths, &ch, &[0.5, 1.0], &symmetric_grid(5.0, 21), 0.01).unwrap();
        assert!(r.passed(), "{r}");
        let gauss = LocalCharacteristics::constant(0.0, 0.5, LevyMeasure::finite(1.0, JumpSizes::Gaussian { mean: 0.5, sd: 1.0 }));
        let paths = sample(&gauss, 3000, 5);
        assert!(ecf_law_test("g", &paths, &gauss, &[1.0], &symmetric_grid(5.0, 21), 0.01).unwrap().passed());
    }

    #[test]
    fn dcov_matches_naive_formula() {
        let xs = features(12, 2, 1);
        let vs = features(12, 3, 2);
        // oracle: direct V-statistic from the definition with a_{i.} etc.
        let n = 12;
        let dist = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(&xs[i], &xs[j])).collect()).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(&vs[i], &vs[j])).collect()).collect();
        let mut s1 = 0.0;
        let mut s2a = 0.0;
        let mut s2b = 0.0;
        let mut s3 = 0.0;
        for i in 0..n {
            for j in 0..n {
                s1 += a[i][j] * b[i][j];
                s2a += a[i][j];
                s2b += b[i][j];
                for k in 0..n {
                    s3 += a[i][k] * b[j][k];
                }
            }
        }
        let nf = n as f64;
        let want = s1 / (nf * nf) + (s2a / (nf * nf)) * (s2b / (nf * nf)) - 2.0 * s3 / (nf * nf * nf);
        assert_abs_diff_eq!(distance_covariance(&xs, &vs).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn copy_is_rejected_with_minimal_p() {
        let xs = features(60, 4, 3);
        let o = independence_outcome(&xs, &xs, 99, 0.01, 1).unwrap();
        assert_abs_diff_eq!(o.p_value, 1.0 / 100.0, epsilon = 1e-15);
        assert!(!independence_test("x", &xs, &xs, 99, 0.05, 1).unwrap().passed());
    }

    #[test]
    fn constant_features_pass() {
        let xs = features(60, 4, 3);
        let vs = vec![vec![1.0, 2.0]; 60];
        let o = independence_outcome(&xs, &vs, 50, 0.01, 1).unwrap();
        assert_abs_diff_eq!(o.statistic, 0.0, epsilon = 1e-12);
        assert!(independence_test("x", &xs, &vs, 50, 0.01, 1).unwrap().passed());
    }

    #[test]
    fn too_few_replications() {
        let xs = features(49, 2, 3);
        assert_eq!(
            independence_outcome(&xs, &xs, 10, 0.01, 1).unwrap_err(),
            Error::TooFewSamples { got: 49, need: 50 }
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let xs = features(80, 2, 5);
        let vs = features(80, 2, 6);
        let a = independence_outcome(&xs, &vs, 40, 0.01, 9).unwrap();
        let b = independence_outcome(&xs, &vs, 40, 0.01, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_mean_tracks_null() {
        // under independence the observed statistic and the permutation mean agree on average
        let mut obs = 0.0;
        let mut perm = 0.0;
        for s in 0..20 {
            let o = independence_outcome(&features(60, 2, 2 * s), &features(60, 2, 2 * s + 1), 50, 0.01, s).unwrap();
            obs += o.statistic;
            perm += o.permutation_mean;
        }
        assert!((obs - perm).abs() < 0.15 * perm, "{obs} vs {perm}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dcov_nonnegative_and_symmetric(seed in 0u64..1000) {
            let xs = features(15, 2, seed);
            let vs = features(15, 1, seed + 7);
            let d = distance_covariance(&xs, &vs).unwrap();
            prop_assert!(d >= -1e-12);
            prop_assert!((d - distance_covariance(&vs, &xs).unwrap()).abs() < 1e-12);
        }
    }
}
