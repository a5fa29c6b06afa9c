//! Sampling SII paths from local characteristics.
//!
//! On every piece where `(b, c, F)` is constant and `A` is linear the path
//! receives the raw drift `(b - ∫h dF)·ΔA`, a Gaussian increment with
//! variance `c·ΔA`, and a Poisson(`λ·ΔA`) number of jumps with sizes drawn
//! from `F` and arrival times uniform on the piece. This is the exact law of
//! the process at grid times.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::chars::{JumpSizes, LocalCharacteristics};
use crate::error::{Error, Result};
use crate::paths::{CadlagPath, Jump, TimeGrid};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
struct JumpSegment {
    start: f64,
    end: f64,
    mean_count: f64,
    sizes: JumpSizes,
}

#[derive(Debug, Clone)]
struct CellPlan {
    drift: f64,
    sd: f64,
    segments: Vec<JumpSegment>,
}

/// Precomputed per-cell sampling plan for one `(chars, grid)` pair.
#[derive(Debug, Clone)]
pub struct Sampler {
    grid: Arc<TimeGrid>,
    cells: Vec<CellPlan>,
}

impl Sampler {
    pub fn new(chars: &LocalCharacteristics, grid: Arc<TimeGrid>) -> Result<Self> {
        chars.validate(grid.horizon())?;
        let h = chars.truncation;
        let mut cells = Vec::with_capacity(grid.n_steps());
        for k in 1..=grid.n_steps() {
            let (t0, t1) = grid.cell(k);
            let mut drift = 0.0;
            let mut var = 0.0;
            let mut segments = Vec::new();
            for p in chars.pieces(t0, t1) {
                drift += (p.drift - p.jumps.compensator(&h)) * p.clock;
                var += p.diffusion * p.clock;
                if let Some(sizes) = p.jumps.sizes() {
                    let mean_count = p.jumps.rate() * p.clock;
                    if mean_count > 0.0 {
                        segments.push(JumpSegment {
                            start: p.start,
                            end: p.end,
                            mean_count,
                            sizes: *sizes,
                        });
                    }
                }
            }
            cells.push(CellPlan { drift, sd: var.sqrt(), segments });
        }
        Ok(Self { grid, cells })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CadlagPath {
        self.sample_with_drift_shift(rng, 0.0)
    }

    /// Like [`Sampler::sample`] with an extra drift `shift` per unit of calendar
    /// time; used to build deliberately mis-specified samplers.
    pub fn sample_with_drift_shift<R: Rng + ?Sized>(&self, rng: &mut R, shift: f64) -> CadlagPath {
        let n = self.cells.len();
        let mut continuous = Vec::with_capacity(n);
        let mut jumps = Vec::new();
        let mut stamps: Vec<Jump> = Vec::new();
        for (k, plan) in self.cells.iter().enumerate() {
            let (t0, t1) = self.grid.cell(k + 1);
            let mut inc = plan.drift + shift * (t1 - t0);
            if plan.sd > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                inc += plan.sd * z;
            }
            continuous.push(inc);
            stamps.clear();
            for seg in &plan.segments {
                let count = Poisson::new(seg.mean_count).expect("positive mean").sample(rng) as usize;
                for _ in 0..count {
                    // (1 - U) ∈ (0, 1] keeps stamps inside (start, end]
                    let w = 1.0 - rng.random::<f64>();
                    let time = (seg.start + (seg.end - seg.start) * w).min(seg.end);
                    stamps.push(Jump { time, size: seg.sizes.sample(rng) });
                }
            }
            stamps.sort_by(|a, b| a.time.total_cmp(&b.time));
            // Coincident stamps are a null event; nudge rather than merge.
            for i in 1..stamps.len() {
                if stamps[i].time <= stamps[i - 1].time {
                    stamps[i].time = next_up(stamps[i - 1].time).min(t1);
                }
            }
            stamps.dedup_by(|later, kept| {
                if later.time <= kept.time {
                    kept.size += later.size;
                    true
                } else {
                    false
                }
            });
            jumps.extend(stamps.iter().filter(|j| j.size != 0.0).copied());
        }
        CadlagPath::from_parts(self.grid.clone(), 0.0, continuous, jumps)
            .expect("sampler produces a consistent ledger")
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

/// One SII path with `value(0) = 0`.
pub fn simulate_sii(
    chars: &LocalCharacteristics,
    grid: Arc<TimeGrid>,
    stream: RngStream,
) -> Result<CadlagPath> {
    let sampler = Sampler::new(chars, grid)?;
    Ok(sampler.sample(&mut stream.rng()))
}

/// The independent pair `(U, L)` from two distinct streams.
pub fn simulate_bivariate(
    chars: &LocalCharacteristics,
    grid: Arc<TimeGrid>,
    stream_u: RngStream,
    stream_l: RngStream,
) -> Result<(CadlagPath, CadlagPath)> {
    if stream_u == stream_l {
        return Err(Error::SameStream(stream_u.stream));
    }
    let sampler = Sampler::new(chars, grid)?;
    let u = sampler.sample(&mut stream_u.rng());
    let l = sampler.sample(&mut stream_l.rng());
    Ok((u, l))
}
