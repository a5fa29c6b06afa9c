//! Grid-sampled càdlàg paths with an explicit jump ledger.
//!
//! A path stores its value at every grid time (the right limit), the
//! continuous part of every cell increment, and every jump with its exact
//! continuous-time stamp. Cell `k` (1-based) is `(t_{k-1}, t_k]`; a jump at
//! time `τ` belongs to the cell containing `τ`. Within a cell the continuous
//! part is interpolated linearly.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be > 0, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        let dt = horizon / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
        times[n_steps] = horizon;
        Ok(Self { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::InvalidGrid("grid must start at 0 and have a step".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("grid times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `(t_{k-1}, t_k)` for cell `k`.
    pub fn cell(&self, k: usize) -> (f64, f64) {
        (self.times[k - 1], self.times[k])
    }

    /// Cell index containing `τ ∈ (0, T]`.
    pub fn cell_of(&self, tau: f64) -> Result<usize> {
        if !(tau > 0.0 && tau <= self.horizon()) {
            return Err(Error::TimeOutOfRange(tau));
        }
        Ok(self.times.partition_point(|t| *t < tau))
    }

    /// Index of the last grid point `<= t`.
    pub fn index_at_or_before(&self, t: f64) -> usize {
        self.times.partition_point(|s| *s <= t).saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
    continuous: Vec<f64>,
    jumps: Vec<Jump>,
    /// `cell_jumps[k-1]..cell_jumps[k]` are the ledger entries of cell `k`.
    cell_jumps: Vec<usize>,
}

/// Left limit inside a cell; shared by the solver and [`CadlagPath::left_limit`]
/// so that both produce bit-identical values.
#[inline]
pub(crate) fn in_cell_left_limit(
    base: f64,
    continuous: f64,
    t0: f64,
    t1: f64,
    tau: f64,
    prior: impl Iterator<Item = f64>,
) -> f64 {
    let mut v = base + continuous * ((tau - t0) / (t1 - t0));
    for d in prior {
        v += d;
    }
    v
}

impl CadlagPath {
    /// Builds a path from its decomposition. `continuous[k-1]` is the
    /// continuous increment of cell `k`; `jumps` must be sorted, with
    /// nonzero sizes and distinct times in `(0, T]`.
    pub fn from_parts(
        grid: Arc<TimeGrid>,
        initial: f64,
        continuous: Vec<f64>,
        jumps: Vec<Jump>,
    ) -> Result<Self> {
        let n = grid.n_steps();
        if continuous.len() != n {
            return Err(Error::InvalidPath(format!(
                "expected {n} continuous increments, got {}",
                continuous.len()
            )));
        }
        for w in jumps.windows(2) {
            if !(w[0].time < w[1].time) {
                return Err(Error::InvalidPath(format!(
                    "jump times not strictly increasing at {}",
                    w[1].time
                )));
            }
        }
        if let Some(j) = jumps.iter().find(|j| j.size == 0.0 || !j.size.is_finite()) {
            return Err(Error::InvalidPath(format!("jump at {} has size {}", j.time, j.size)));
        }
        let mut cell_jumps = Vec::with_capacity(n + 1);
        cell_jumps.push(0);
        let mut values = Vec::with_capacity(n + 1);
        values.push(initial);
        let mut j = 0;
        for k in 1..=n {
            let t1 = grid.times()[k];
            let mut v = values[k - 1] + continuous[k - 1];
            let start = j;
            while j < jumps.len() && jumps[j].time <= t1 {
                if k == 1 && jumps[j].time <= 0.0 {
                    return Err(Error::InvalidPath("jump at or before t = 0".into()));
                }
                j += 1;
            }
            for jump in &jumps[start..j] {
                v += jump.size;
            }
            cell_jumps.push(j);
            values.push(v);
        }
        if j != jumps.len() {
            return Err(Error::InvalidPath("jump after the horizon".into()));
        }
        Ok(Self { grid, values, continuous, jumps, cell_jumps })
    }

    /// Purely continuous path through the given grid values.
    pub fn from_values(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.times().len() {
            return Err(Error::InvalidPath("one value per grid point required".into()));
        }
        let continuous = values.windows(2).map(|w| w[1] - w[0]).collect();
        let mut p = Self::from_parts(grid, values[0], continuous, Vec::new())?;
        // keep the caller's values bit-exactly
        p.values = values;
        Ok(p)
    }

    /// Path with the given grid values and jump ledger; the continuous
    /// increments are whatever remains of each cell increment.
    pub fn from_values_and_jumps(
        grid: Arc<TimeGrid>,
        values: Vec<f64>,
        jumps: Vec<Jump>,
    ) -> Result<Self> {
        if values.len() != grid.times().len() {
            return Err(Error::InvalidPath("one value per grid point required".into()));
        }
        let n = grid.n_steps();
        let mut continuous = vec![0.0; n];
        let mut j = 0;
        for k in 1..=n {
            let t1 = grid.times()[k];
            let mut js = 0.0;
            while j < jumps.len() && jumps[j].time <= t1 {
                js += jumps[j].size;
                j += 1;
            }
            continuous[k - 1] = values[k] - values[k - 1] - js;
        }
        let mut p = Self::from_parts(grid, values[0], continuous, jumps)?;
        p.values = values;
        Ok(p)
    }

    pub fn constant(grid: Arc<TimeGrid>, value: f64) -> Self {
        let n = grid.n_steps();
        Self::from_parts(grid, value, vec![0.0; n], Vec::new()).expect("constant path is valid")
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    /// Continuous increments, one per cell.
    pub fn continuous_increments(&self) -> &[f64] {
        &self.continuous
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Ledger entries of cell `k`.
    pub fn cell_jumps(&self, k: usize) -> &[Jump] {
        &self.jumps[self.cell_jumps[k - 1]..self.cell_jumps[k]]
    }

    pub fn same_grid(&self, other: &CadlagPath) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    fn check_grid(&self, other: &CadlagPath) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `value(t_j) - value(t_{j-1})` for `1 <= j <= n`.
    pub fn increment(&self, j: usize) -> Result<f64> {
        if j == 0 || j > self.n_steps() {
            return Err(Error::CellOutOfRange { index: j, max: self.n_steps() });
        }
        Ok(self.values[j] - self.values[j - 1])
    }

    /// Value just before `τ ∈ (0, T]`.
    pub fn left_limit(&self, tau: f64) -> Result<f64> {
        let k = self.grid.cell_of(tau)?;
        let (t0, t1) = self.grid.cell(k);
        let prior = self.cell_jumps(k).iter().take_while(|j| j.time < tau).map(|j| j.size);
        Ok(in_cell_left_limit(self.values[k - 1], self.continuous[k - 1], t0, t1, tau, prior))
    }

    /// Right-continuous value at `t ∈ [0, T]`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(self.values[0]);
        }
        let k = self.grid.cell_of(t)?;
        let (t0, t1) = self.grid.cell(k);
        if t == t1 {
            return Ok(self.values[k]);
        }
        let prior = self.cell_jumps(k).iter().take_while(|j| j.time <= t).map(|j| j.size);
        Ok(in_cell_left_limit(self.values[k - 1], self.continuous[k - 1], t0, t1, t, prior))
    }

    /// Largest `|value(t_k) - value(t_{k-1}) - continuous - Σ jumps|` over cells.
    pub fn decomposition_residual(&self) -> f64 {
        (1..=self.n_steps())
            .map(|k| {
                let js: f64 = self.cell_jumps(k).iter().map(|j| j.size).sum();
                (self.values[k] - self.values[k - 1] - self.continuous[k - 1] - js).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise sum of two paths on the same grid; coincident jumps merge.
    pub fn add(&self, other: &CadlagPath) -> Result<CadlagPath> {
        self.check_grid(other)?;
        let continuous = self
            .continuous
            .iter()
            .zip(&other.continuous)
            .map(|(a, b)| a + b)
            .collect();
        let jumps = merge_ledgers(&self.jumps, &other.jumps, |a, b| a + b);
        CadlagPath::from_parts(self.grid.clone(), self.initial() + other.initial(), continuous, jumps)
    }

    /// Realized covariation `[p, q]`: running sum of products of continuous
    /// cell increments, plus `Δp Δq` at every shared jump time.
    pub fn realized_covariation(&self, other: &CadlagPath) -> Result<CadlagPath> {
        self.check_grid(other)?;
        let continuous = self
            .continuous
            .iter()
            .zip(&other.continuous)
            .map(|(a, b)| a * b)
            .collect();
        let jumps = matched_jumps(&self.jumps, &other.jumps)
            .map(|(a, b)| Jump { time: a.time, size: a.size * b.size })
            .filter(|j| j.size != 0.0)
            .collect();
        CadlagPath::from_parts(self.grid.clone(), 0.0, continuous, jumps)
    }

    /// `Σ |Δp Δq|` over ledger times present in both paths.
    pub fn joint_jump_mass(&self, other: &CadlagPath) -> f64 {
        matched_jumps(&self.jumps, &other.jumps).fold(0.0, |s, (a, b)| s + (a.size * b.size).abs())
    }

    /// Writes `time,value` rows.
    pub fn write_values<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time", "value"])?;
        for (t, v) in self.times().iter().zip(&self.values) {
            wr.write_record([t.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `time,size` rows of the jump ledger.
    pub fn write_jumps<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time", "size"])?;
        for j in &self.jumps {
            wr.write_record([j.time.to_string(), j.size.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a path back from its two tables.
    pub fn read_tables<R1: Read, R2: Read>(values: R1, jumps: R2) -> Result<CadlagPath> {
        let mut times = Vec::new();
        let mut vals = Vec::new();
        for rec in csv::Reader::from_reader(values).records() {
            let rec = rec?;
            times.push(parse_field(&rec, 0)?);
            vals.push(parse_field(&rec, 1)?);
        }
        let mut ledger = Vec::new();
        for rec in csv::Reader::from_reader(jumps).records() {
            let rec = rec?;
            ledger.push(Jump { time: parse_field(&rec, 0)?, size: parse_field(&rec, 1)? });
        }
        let grid = Arc::new(TimeGrid::from_times(times)?);
        CadlagPath::from_values_and_jumps(grid, vals, ledger)
    }
}

fn parse_field(rec: &csv::StringRecord, i: usize) -> Result<f64> {
    rec.get(i)
        .ok_or_else(|| Error::Io(format!("missing column {i}")))?
        .trim()
        .parse()
        .map_err(|e| Error::Io(format!("bad number: {e}")))
}

/// Pairs of ledger entries with exactly equal times.
fn matched_jumps<'a>(a: &'a [Jump], b: &'a [Jump]) -> impl Iterator<Item = (&'a Jump, &'a Jump)> {
    let mut i = 0;
    let mut j = 0;
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            if a[i].time < b[j].time {
                i += 1;
            } else if b[j].time < a[i].time {
                j += 1;
            } else {
                let out = (&a[i], &b[j]);
                i += 1;
                j += 1;
                return Some(out);
            }
        }
        None
    })
}

fn merge_ledgers(a: &[Jump], b: &[Jump], combine: impl Fn(f64, f64) -> f64) -> Vec<Jump> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].time < b[j].time) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j].time < a[i].time {
            out.push(b[j]);
            j += 1;
        } else {
            let s = combine(a[i].size, b[j].size);
            if s != 0.0 {
                out.push(Jump { time: a[i].time, size: s });
            }
            i += 1;
            j += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(1.0, n).unwrap())
    }

    /// Ten cells, three jumps, two of them in cell 3.
    fn three_jump_path() -> CadlagPath {
        let g = grid(10);
        let cont = (0..10).map(|k| 0.1 * (k as f64 + 1.0)).collect();
        let jumps = vec![
            Jump { time: 0.22, size: 1.0 },
            Jump { time: 0.27, size: -0.5 },
            Jump { time: 0.65, size: 2.0 },
        ];
        CadlagPath::from_parts(g, 1.0, cont, jumps).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::uniform(0.0, 4).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_times(vec![0.1, 0.5]).is_err());
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.cell_of(0.5).unwrap(), 1);
        assert_eq!(g.cell_of(0.50001).unwrap(), 2);
        assert!(g.cell_of(0.0).is_err());
    }

    #[test]
    fn increments() {
        let g = grid(4);
        assert_eq!(CadlagPath::constant(g.clone(), 3.0).increment(2).unwrap(), 0.0);
        let drift = CadlagPath::from_values(g.clone(), g.times().to_vec()).unwrap();
        assert_eq!(drift.increment(1).unwrap(), 0.25);
        assert!(drift.increment(0).is_err());
        assert!(drift.increment(5).is_err());

        let p = three_jump_path();
        let k = 3;
        let js: f64 = p.cell_jumps(k).iter().map(|j| j.size).sum();
        assert_abs_diff_eq!(
            p.increment(k).unwrap(),
            p.continuous_increments()[k - 1] + js,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ledger_validation() {
        let g = grid(2);
        let bad_order = vec![Jump { time: 0.6, size: 1.0 }, Jump { time: 0.3, size: 1.0 }];
        assert!(CadlagPath::from_parts(g.clone(), 0.0, vec![0.0; 2], bad_order).is_err());
        let dup = vec![Jump { time: 0.3, size: 1.0 }, Jump { time: 0.3, size: 1.0 }];
        assert!(CadlagPath::from_parts(g.clone(), 0.0, vec![0.0; 2], dup).is_err());
        let zero = vec![Jump { time: 0.3, size: 0.0 }];
        assert!(CadlagPath::from_parts(g.clone(), 0.0, vec![0.0; 2], zero).is_err());
        let late = vec![Jump { time: 1.3, size: 1.0 }];
        assert!(CadlagPath::from_parts(g, 0.0, vec![0.0; 2], late).is_err());
    }

    #[test]
    fn left_limits() {
        let g = grid(4);
        let p = CadlagPath::from_values(g, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(p.left_limit(0.375).unwrap(), 1.5, epsilon = 1e-15);
        assert!(p.left_limit(0.0).is_err());
        assert!(p.left_limit(1.1).is_err());

        let p = three_jump_path();
        // cell 3 = (0.2, 0.3], starts at v(0.2) = 1 + 0.1 + 0.2 = 1.3, continuous 0.3
        let base = 1.3;
        assert_abs_diff_eq!(p.values()[2], base, epsilon = 1e-15);
        // at the first jump: excludes it
        assert_abs_diff_eq!(p.left_limit(0.22).unwrap(), base + 0.3 * 0.2, epsilon = 1e-12);
        // between the jumps: includes the first
        assert_abs_diff_eq!(p.left_limit(0.25).unwrap(), base + 0.3 * 0.5 + 1.0, epsilon = 1e-12);
        // at the second jump: includes the first only
        assert_abs_diff_eq!(p.left_limit(0.27).unwrap(), base + 0.3 * 0.7 + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.value_at(0.27).unwrap(), base + 0.3 * 0.7 + 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.value_at(p.grid().times()[3]).unwrap(), p.values()[3], epsilon = 0.0);
    }

    #[test]
    fn joint_jump_mass_cases() {
        let p = three_jump_path();
        assert_abs_diff_eq!(p.joint_jump_mass(&p), 1.0 + 0.25 + 4.0, epsilon = 1e-15);
        let g = p.grid().clone();
        let q = CadlagPath::from_parts(g, 0.0, vec![0.0; 10], vec![Jump { time: 0.221, size: 3.0 }])
            .unwrap();
        assert_eq!(p.joint_jump_mass(&q), 0.0);
    }

    #[test]
    fn covariation_of_finite_variation_path_is_small() {
        let n = 1000;
        let g = grid(n);
        let drift = CadlagPath::from_values(g.clone(), g.times().to_vec()).unwrap();
        let wiggle = CadlagPath::from_values(
            g.clone(),
            g.times().iter().map(|t| (7.0 * t).sin()).collect(),
        )
        .unwrap();
        let qv = drift.realized_covariation(&wiggle).unwrap();
        assert!(qv.terminal().abs() < 10.0 / n as f64);
    }

    #[test]
    fn covariation_grid_mismatch() {
        let a = CadlagPath::constant(grid(4), 0.0);
        let b = CadlagPath::constant(grid(5), 0.0);
        assert_eq!(a.realized_covariation(&b).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn csv_round_trip() {
        let p = three_jump_path();
        let mut vals = Vec::new();
        let mut jumps = Vec::new();
        p.write_values(&mut vals).unwrap();
        p.write_jumps(&mut jumps).unwrap();
        let q = CadlagPath::read_tables(&vals[..], &jumps[..]).unwrap();
        assert_eq!(q.values(), p.values());
        assert_eq!(q.jumps(), p.jumps());
        assert!(q.decomposition_residual() < 1e-14);
    }

    fn arb_path(g: Arc<TimeGrid>) -> impl Strategy<Value = CadlagPath> {
        let n = g.n_steps();
        (
            -2.0..2.0f64,
            proptest::collection::vec(-1.0..1.0f64, n),
            proptest::collection::btree_map(1u32..1000, -2.0..2.0f64, 0..6),
        )
            .prop_map(move |(x0, cont, jm)| {
                let jumps = jm
                    .into_iter()
                    .filter(|(_, s)| *s != 0.0)
                    .map(|(t, s)| Jump { time: t as f64 / 1000.0, size: s })
                    .collect();
                CadlagPath::from_parts(g.clone(), x0, cont, jumps).unwrap()
            })
    }

    proptest! {
        #[test]
        fn decomposition_exact(p in arb_path(grid(8))) {
            let scale = 1.0 + p.sup_abs();
            prop_assert!(p.decomposition_residual() <= 8.0 * f64::EPSILON * scale);
        }

        #[test]
        fn covariation_symmetric_and_bilinear(
            p in arb_path(grid(8)), q in arb_path(grid(8)), r in arb_path(grid(8))
        ) {
            let pq = p.realized_covariation(&q).unwrap();
            let qp = q.realized_covariation(&p).unwrap();
            prop_assert_eq!(pq.values(), qp.values());

            let lhs = p.add(&q).unwrap().realized_covariation(&r).unwrap();
            let rhs = pq_plus(&p.realized_covariation(&r).unwrap(), &q.realized_covariation(&r).unwrap());
            for (a, b) in lhs.values().iter().zip(rhs.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn self_jump_mass_is_sum_of_squares(p in arb_path(grid(8))) {
            let s: f64 = p.jumps().iter().map(|j| j.size * j.size).sum();
            prop_assert_eq!(p.joint_jump_mass(&p), s);
        }
    }

    fn pq_plus(a: &CadlagPath, b: &CadlagPath) -> Vec<f64> {
        a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect()
    }
}
