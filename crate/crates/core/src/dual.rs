//! The spliced driver `V` and recovery of `L` from `(X, V)`.
//!
//! ```text
//! dV = 1{σ(X) ≠ 0} dU + 1{σ(X) = 0} dL
//! dL = 1{σ(X) ≠ 0} (dX - μ(X) dt) / σ(X) + 1{σ(X) = 0} dV
//! ```
//!
//! Both directions read the same [`SplicingMask`], evaluated once along `X`.

use crate::error::{Error, Result};
use crate::paths::{CadlagPath, Jump};
use crate::sde::SdeSpec;

/// `1{σ_t(X) ≠ 0}` at every cell's left endpoint and at selected jump times,
/// always evaluated at the left limit of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicingMask {
    cells: Vec<bool>,
    /// sorted by time
    at_times: Vec<(f64, bool)>,
}

impl SplicingMask {
    /// Evaluates the mask along `x` for every cell and every time in `times`.
    pub fn compute(x: &CadlagPath, spec: &SdeSpec, times: impl IntoIterator<Item = f64>) -> Result<Self> {
        let grid = x.grid();
        let mut cells = Vec::with_capacity(grid.n_steps());
        for k in 1..=grid.n_steps() {
            let t0 = grid.times()[k - 1];
            let s = spec.sigma.at(t0, x.values()[k - 1])?;
            cells.push(!spec.sigma_is_zero(s));
        }
        let mut ts: Vec<f64> = times.into_iter().collect();
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        let mut at_times = Vec::with_capacity(ts.len());
        for t in ts {
            let s = spec.sigma.at(t, x.left_limit(t)?)?;
            at_times.push((t, !spec.sigma_is_zero(s)));
        }
        Ok(Self { cells, at_times })
    }

    /// Mask for the splice of `u` and `l` along `x`.
    pub fn for_splice(x: &CadlagPath, spec: &SdeSpec, u: &CadlagPath, l: &CadlagPath) -> Result<Self> {
        let times = u.jumps().iter().chain(l.jumps()).map(|j| j.time);
        Self::compute(x, spec, times)
    }

    pub fn cell(&self, k: usize) -> bool {
        self.cells[k - 1]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn at_time(&self, t: f64) -> Option<bool> {
        self.at_times
            .binary_search_by(|(s, _)| s.total_cmp(&t))
            .ok()
            .map(|i| self.at_times[i].1)
    }

    /// The complementary mask. Splicing with it is the classic sign bug:
    /// `V` then copies exactly the increments of `L` that drive `X`.
    pub fn inverted(&self) -> Self {
        Self {
            cells: self.cells.iter().map(|b| !b).collect(),
            at_times: self.at_times.iter().map(|(t, b)| (*t, !b)).collect(),
        }
    }

    fn require(&self, t: f64) -> Result<bool> {
        self.at_time(t)
            .ok_or_else(|| Error::InvalidArgument(format!("mask not evaluated at jump time {t}")))
    }
}

/// `V` from `x`, `u`, `l`, evaluating the mask along `x`.
pub fn construct_v(x: &CadlagPath, spec: &SdeSpec, u: &CadlagPath, l: &CadlagPath) -> Result<CadlagPath> {
    if !(x.same_grid(u) && x.same_grid(l)) {
        return Err(Error::GridMismatch);
    }
    let mask = SplicingMask::for_splice(x, spec, u, l)?;
    splice(&mask, u, l)
}

/// `V` for a given mask: continuous increments and jumps of `u` where the
/// mask is set, of `l` where it is not.
pub fn splice(mask: &SplicingMask, u: &CadlagPath, l: &CadlagPath) -> Result<CadlagPath> {
    if !u.same_grid(l) || mask.cells.len() != u.n_steps() {
        return Err(Error::GridMismatch);
    }
    let continuous = (1..=u.n_steps())
        .map(|k| {
            if mask.cell(k) {
                u.continuous_increments()[k - 1]
            } else {
                l.continuous_increments()[k - 1]
            }
        })
        .collect();
    let mut jumps = Vec::with_capacity(u.jumps().len().max(l.jumps().len()));
    for j in u.jumps() {
        if mask.require(j.time)? {
            jumps.push(*j);
        }
    }
    for j in l.jumps() {
        if !mask.require(j.time)? {
            jumps.push(*j);
        }
    }
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    CadlagPath::from_parts(u.grid().clone(), 0.0, continuous, jumps)
}

/// Recovers the driver from `x` and `v`, evaluating the mask along `x`.
pub fn recover_driver(x: &CadlagPath, spec: &SdeSpec, v: &CadlagPath) -> Result<CadlagPath> {
    if !x.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    let times = x.jumps().iter().chain(v.jumps()).map(|j| j.time);
    let mask = SplicingMask::compute(x, spec, times)?;
    recover_with_mask(&mask, x, spec, v)
}

/// Driver recovery for a precomputed mask.
pub fn recover_with_mask(
    mask: &SplicingMask,
    x: &CadlagPath,
    spec: &SdeSpec,
    v: &CadlagPath,
) -> Result<CadlagPath> {
    let grid = x.grid();
    let n = grid.n_steps();
    let mut continuous = Vec::with_capacity(n);
    for k in 1..=n {
        if mask.cell(k) {
            let (t0, t1) = grid.cell(k);
            let xl = x.values()[k - 1];
            let sigma = spec.sigma.at(t0, xl)?;
            if spec.sigma_is_zero(sigma) {
                return Err(Error::MaskInconsistent(t0));
            }
            let mu = spec.mu.at(t0, xl)?;
            continuous.push((x.continuous_increments()[k - 1] - mu * (t1 - t0)) / sigma);
        } else {
            continuous.push(v.continuous_increments()[k - 1]);
        }
    }
    let mut jumps = Vec::with_capacity(x.jumps().len() + v.jumps().len());
    for j in x.jumps() {
        if !mask.require(j.time)? {
            return Err(Error::MaskInconsistent(j.time));
        }
        let sigma = spec.sigma.at(j.time, x.left_limit(j.time)?)?;
        if spec.sigma_is_zero(sigma) {
            return Err(Error::MaskInconsistent(j.time));
        }
        jumps.push(Jump { time: j.time, size: j.size / sigma });
    }
    for j in v.jumps() {
        if !mask.require(j.time)? {
            jumps.push(*j);
        }
    }
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    CadlagPath::from_parts(grid.clone(), 0.0, continuous, jumps)
}
