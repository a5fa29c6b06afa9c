//! Experiment orchestration.
//!
//! [`run_scenario`] executes one command against a [`ScenarioConfig`],
//! writes a JSON report per test plus CSV path tables into the output
//! directory, and maps the verdicts to an exit code. Path `i` of every
//! sample draws from its own stream, so results do not depend on the number
//! of worker threads.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::chars::LocalCharacteristics;
use crate::config::ScenarioConfig;
use crate::dual::{recover_with_mask, splice, SplicingMask};
use crate::error::{Error, Result};
use crate::martingale::{boundedness_check, covariation_parts, zero_covariation_report, KgBuilder, MartingaleTest, MfBuilder, TestFunction};
use crate::paths::{CadlagPath, TimeGrid};
use crate::report::TestReport;
use crate::rng::{RngStream, Role};
use crate::sde::{solve_sde, z_process, SdeSpec};
use crate::simulate::Sampler;
use crate::stats::{ecf_law_test, independence_outcome, independence_test, projection, quarter_times, symmetric_grid};
use crate::sticky::{sample_sticky, verify_sticky_paths, StickyCheck};

/// Pairs used by the independence test; the permutation test is quadratic
/// in this number.
pub const INDEPENDENCE_PAIRS: usize = 1500;
/// Paths written to each CSV table.
pub const TABLE_PATHS: usize = 10;
/// Paths whose `Z` process is accumulated by `solve`.
const Z_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Solve,
    VerifySii,
    VerifySolution,
    DualCheck,
    Independence,
    StickyDemo,
    All,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Solve,
        Command::VerifySii,
        Command::VerifySolution,
        Command::DualCheck,
        Command::Independence,
        Command::StickyDemo,
        Command::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Solve => "solve",
            Command::VerifySii => "verify-sii",
            Command::VerifySolution => "verify-solution",
            Command::DualCheck => "dual-check",
            Command::Independence => "independence",
            Command::StickyDemo => "sticky-demo",
            Command::All => "all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command '{s}'")))
    }
}

/// Result of one run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub reports: Vec<TestReport>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(TestReport::passed)
    }

    /// 0 when every verdict passes, 1 on any rejection.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Runs `command` on `config`, writing artifacts into `out_dir`.
pub fn run_scenario(config: &ScenarioConfig, command: Command, out_dir: &Path) -> Result<Outcome> {
    fs::create_dir_all(out_dir)?;
    let lab = Lab::new(config)?;
    let commands: Vec<Command> = match command {
        Command::All => {
            let mut v = vec![
                Command::Simulate,
                Command::Solve,
                Command::VerifySii,
                Command::VerifySolution,
                Command::DualCheck,
                Command::Independence,
            ];
            if config.sticky.is_some() {
                v.push(Command::StickyDemo);
            }
            v
        }
        c => vec![c],
    };
    let mut out = Outcome { reports: Vec::new(), files: Vec::new() };
    for c in commands {
        let report = lab.run(c, out_dir, &mut out.files).map_err(|e| match e {
            Error::Io(m) => Error::Io(m),
            e => Error::InvalidArgument(format!("{}: {c}: {e}", config.name)),
        })?;
        let file = out_dir.join(format!("{}.json", c.name()));
        fs::write(&file, report.to_json()? + "\n")?;
        out.files.push(file);
        out.reports.push(report);
    }
    let summary: String = out.reports.iter().map(|r| format!("{r}\n")).collect();
    let file = out_dir.join("summary.txt");
    fs::write(&file, summary)?;
    out.files.push(file);
    Ok(out)
}

/// One dual sample: driver `L`, auxiliary `U`, solution `X`, splice `V`.
struct DualPath {
    l: CadlagPath,
    u: CadlagPath,
    x: CadlagPath,
    mask: SplicingMask,
    v: CadlagPath,
}

/// Shared state of a run; samples are drawn once and reused by commands.
struct Lab<'a> {
    config: &'a ScenarioConfig,
    chars: LocalCharacteristics,
    spec: SdeSpec,
    grid: Arc<TimeGrid>,
    sampler: Sampler,
    drivers: OnceLock<Vec<CadlagPath>>,
    duals: OnceLock<Vec<DualPath>>,
}

impl<'a> Lab<'a> {
    fn new(config: &'a ScenarioConfig) -> Result<Self> {
        let chars = config.characteristics();
        let grid = config.grid();
        let sampler = Sampler::new(&chars, grid.clone())?;
        Ok(Self {
            config,
            chars,
            spec: config.sde(),
            grid,
            sampler,
            drivers: OnceLock::new(),
            duals: OnceLock::new(),
        })
    }

    fn name(&self) -> &str {
        &self.config.name
    }

    fn seed(&self) -> u64 {
        self.config.mc.seed
    }

    fn alpha(&self) -> f64 {
        self.config.mc.alpha
    }

    fn driver(&self, i: usize, role: Role) -> CadlagPath {
        self.sampler.sample(&mut RngStream::for_role(self.seed(), role, i as u64).rng())
    }

    fn drivers(&self) -> &[CadlagPath] {
        self.drivers.get_or_init(|| {
            (0..self.config.mc.n_paths).into_par_iter().map(|i| self.driver(i, Role::Driver)).collect()
        })
    }

    fn duals(&self) -> Result<&[DualPath]> {
        if let Some(d) = self.duals.get() {
            return Ok(d);
        }
        let drivers = self.drivers();
        let built = drivers
            .par_iter()
            .enumerate()
            .map(|(i, l)| {
                let u = self.driver(i, Role::Auxiliary);
                let x = solve_sde(&self.spec, l)?;
                let mask = SplicingMask::for_splice(&x, &self.spec, &u, l)?;
                let v = splice(&mask, &u, l)?;
                Ok(DualPath { l: l.clone(), u, x, mask, v })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.duals.get_or_init(|| built))
    }

    /// Solution paths: the time-changed sticky sampler when the scenario
    /// has a sticky block (the sticky SDE has no strong solution), the Euler
    /// solver otherwise.
    fn solutions(&self) -> Result<Vec<CadlagPath>> {
        match self.config.sticky_params() {
            Some(p) => sample_sticky(p, &self.grid, self.config.mc.n_paths, self.seed(), false),
            None => Ok(self.duals()?.iter().map(|d| d.x.clone()).collect()),
        }
    }

    fn run(&self, c: Command, out: &Path, files: &mut Vec<PathBuf>) -> Result<TestReport> {
        let mut r = match c {
            Command::Simulate => self.simulate(out, files)?,
            Command::Solve => self.solve(out, files)?,
            Command::VerifySii => self.verify_sii()?,
            Command::VerifySolution => self.verify_solution()?,
            Command::DualCheck => self.dual_check(out, files)?,
            Command::Independence => self.independence()?,
            Command::StickyDemo => self.sticky_demo(out, files)?,
            Command::All => unreachable!("expanded by run_scenario"),
        };
        r.scenario = self.name().to_string();
        r.test = c.name().to_string();
        if !r.seeds.contains(&self.seed()) {
            r.seeds.insert(0, self.seed());
        }
        Ok(r)
    }

    fn simulate(&self, out: &Path, files: &mut Vec<PathBuf>) -> Result<TestReport> {
        let paths = self.drivers();
        write_table(out, "L", paths, files)?;
        let mut r = TestReport::new(self.name(), "simulate");
        let residual = paths.iter().map(CadlagPath::decomposition_residual).fold(0.0, f64::max);
        let scale = 1.0 + paths.iter().map(CadlagPath::sup_abs).fold(0.0, f64::max);
        r.check("max decomposition residual", residual, 1e-9 * scale);
        let jumps: usize = paths.iter().map(|p| p.jumps().len()).sum();
        r.note(format!("{} paths, {} steps, {jumps} jumps", paths.len(), self.grid.n_steps()));
        Ok(r)
    }

    fn solve(&self, out: &Path, files: &mut Vec<PathBuf>) -> Result<TestReport> {
        let xs = self.solutions()?;
        write_table(out, "X", &xs, files)?;
        let mut r = TestReport::new(self.name(), "solve");
        let bad = xs.iter().filter(|x| !x.values().iter().all(|v| v.is_finite())).count();
        r.check("non-finite paths", bad as f64, 0.0);
        if self.config.sticky.is_none() {
            let duals = self.duals()?;
            let zs = duals
                .par_iter()
                .take(Z_PATHS)
                .map(|d| z_process(&self.spec, &self.chars, &d.x))
                .collect::<Result<Vec<_>>>()?;
            let broken = zs.iter().filter(|z| !z.is_nondecreasing()).count();
            r.check("Z not nondecreasing", broken as f64, 0.0);
            let mean_z = zs.iter().map(|z| *z.total().last().expect("nonempty")).sum::<f64>() / zs.len() as f64;
            r.note(format!("mean Z_T over {} paths: {mean_z:.5}", zs.len()));
        } else {
            r.note("sticky scenario: paths from the time-changed construction");
        }
        Ok(r)
    }

    fn verify_sii(&self) -> Result<TestReport> {
        let paths = self.drivers();
        let mc = &self.config.mc;
        let mut r = TestReport::new(self.name(), "verify-sii");
        let times = quarter_times(self.grid.horizon());
        let u = symmetric_grid(mc.u_max, mc.n_u);
        r.absorb(ecf_law_test(self.name(), paths, &self.chars, &times, &u, self.alpha())?);
        let mut samples = Vec::new();
        for f in TestFunction::presets() {
            let b = MfBuilder::new(f, &self.chars, self.grid.clone())?;
            let ms = paths.par_iter().map(|y| b.build(y)).collect::<Result<Vec<_>>>()?;
            if f.has_positive_infimum() {
                r.absorb(boundedness_check(self.name(), &f, &self.chars, &ms)?);
            }
            samples.push((format!("M^{}", f.label()), ms));
        }
        r.absorb(MartingaleTest::standard(self.grid.horizon(), self.alpha()).run(self.name(), &samples)?);
        Ok(r)
    }

    fn verify_solution(&self) -> Result<TestReport> {
        let xs = self.solutions()?;
        let (spec, chars) = match self.config.sticky_params() {
            Some(p) => (p.sde(), LocalCharacteristics::brownian()),
            None => (self.spec.clone(), self.chars.clone()),
        };
        let mut samples = Vec::new();
        for g in TestFunction::presets() {
            let b = KgBuilder::new(g, &spec, &chars, self.grid.clone())?;
            let ks = xs.par_iter().map(|x| b.build(x)).collect::<Result<Vec<_>>>()?;
            samples.push((format!("K^{}", g.label()), ks));
        }
        let mut r = TestReport::new(self.name(), "verify-solution");
        r.absorb(MartingaleTest::standard(self.grid.horizon(), self.alpha()).run(self.name(), &samples)?);
        Ok(r)
    }

    fn dual_check(&self, out: &Path, files: &mut Vec<PathBuf>) -> Result<TestReport> {
        let duals = self.duals()?;
        let vs: Vec<CadlagPath> = duals.iter().map(|d| d.v.clone()).collect();
        write_table(out, "V", &vs, files)?;
        let mc = &self.config.mc;
        let mut r = TestReport::new(self.name(), "dual-check");

        let mut law = ecf_law_test(
            self.name(),
            &vs,
            &self.chars,
            &quarter_times(self.grid.horizon()),
            &symmetric_grid(mc.u_max, mc.n_u),
            self.alpha(),
        )?;
        law.test = "V law".into();
        r.absorb(law);

        let joint = duals.iter().map(|d| d.u.joint_jump_mass(&d.l)).fold(0.0, f64::max);
        r.check("max joint jump mass (U, L)", joint, 0.0);

        let mut worst_rel: f64 = 0.0;
        let mut splice_mismatch = 0usize;
        for d in duals {
            let lhat = recover_with_mask(&d.mask, &d.x, &self.spec, &d.v)?;
            let err = lhat.values().iter().zip(d.l.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_rel = worst_rel.max(err / (1.0 + d.l.sup_abs()));
            // where sigma vanishes the recovered increments are copied from V
            for (k, &set) in d.mask.cells().iter().enumerate() {
                if !set && lhat.continuous_increments()[k] != d.v.continuous_increments()[k] {
                    splice_mismatch += 1;
                }
            }
        }
        r.check("max recovery error / (1 + max|L|)", worst_rel, 1e-9);
        r.check("recovered increments differing from V off the mask", splice_mismatch as f64, 0.0);

        let f = TestFunction::Bump { center: 0.0, width: 1.5, offset: 1.0 };
        let g = TestFunction::Cos { u: 1.0 };
        let mb = MfBuilder::new(f, &self.chars, self.grid.clone())?;
        let kb = KgBuilder::new(g, &self.spec, &self.chars, self.grid.clone())?;
        let parts = duals
            .par_iter()
            .map(|d| covariation_parts(&mb.build_process(&d.v)?, &kb.build_process(&d.x)?))
            .collect::<Result<Vec<_>>>()?;
        let mut cov = zero_covariation_report(self.name(), &parts)?;
        cov.test = format!("[M^{}(V), K^{}(X)]", f.label(), g.label());
        r.absorb(cov);
        Ok(r)
    }

    fn projections(&self, broken: bool) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let duals = self.duals()?;
        let n = duals.len().min(INDEPENDENCE_PAIRS);
        let q = quarter_times(self.grid.horizon());
        let mut xs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        for d in &duals[..n] {
            xs.push(projection(&d.x, &q));
            if broken {
                vs.push(projection(&splice(&d.mask.inverted(), &d.u, &d.l)?, &q));
            } else {
                vs.push(projection(&d.v, &q));
            }
        }
        Ok((xs, vs))
    }

    fn independence(&self) -> Result<TestReport> {
        let mc = &self.config.mc;
        let (xs, vs) = self.projections(false)?;
        let mut r = independence_test(self.name(), &xs, &vs, mc.n_perm, self.alpha(), self.seed())?;
        let (xb, vb) = self.projections(true)?;
        let control = independence_outcome(&xb, &vb, mc.n_perm, self.alpha(), self.seed())?;
        r.note(format!("control with inverted mask: p = {:.4}", control.p_value));
        if xs.len() < mc.n_paths {
            r.note(format!("first {} of {} pairs used", xs.len(), mc.n_paths));
        }
        Ok(r)
    }

    fn sticky_demo(&self, out: &Path, files: &mut Vec<PathBuf>) -> Result<TestReport> {
        let (Some(params), Some(cfg)) = (self.config.sticky_params(), self.config.sticky.as_ref()) else {
            return Err(Error::InvalidArgument("sticky-demo needs a [sticky] section".into()));
        };
        let check = StickyCheck {
            tol: cfg.tol,
            epsilon: cfg.epsilon,
            eta: cfg.eta,
            alpha: self.alpha(),
            seed: self.seed(),
            ..StickyCheck::default()
        };
        let n = self.config.mc.n_paths;
        let paths = sample_sticky(params, &self.grid, n, self.seed(), false)?;
        write_table(out, "sticky", &paths, files)?;
        let mut r = verify_sticky_paths(params, &paths, &check)?;
        let naive = sample_sticky(params, &self.grid, n, self.seed(), true)?;
        let control = verify_sticky_paths(params, &naive, &StickyCheck { naive: true, ..check })?;
        let gap = &control.statistics[0];
        r.note(format!(
            "naive Euler control: occupation gap {:.4} vs allowed {:.4} ({})",
            gap.value,
            gap.threshold,
            if gap.pass { "not rejected" } else { "rejected" }
        ));
        r.note("weak existence only: this SDE has no strong solution, which simulation cannot exhibit");
        Ok(r)
    }
}

/// Writes the first [`TABLE_PATHS`] paths as `<stem>_paths.csv`
/// (`time,path_0,...`) and their jump ledgers as `<stem>_jumps.csv`
/// (`path,time,size`).
pub fn write_table(out: &Path, stem: &str, paths: &[CadlagPath], files: &mut Vec<PathBuf>) -> Result<()> {
    let shown = &paths[..paths.len().min(TABLE_PATHS)];
    let Some(first) = shown.first() else { return Ok(()) };

    let file = out.join(format!("{stem}_paths.csv"));
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(&file)?));
    let mut header = vec!["time".to_string()];
    header.extend((0..shown.len()).map(|i| format!("path_{i}")));
    w.write_record(&header)?;
    for (k, t) in first.times().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(shown.iter().map(|p| p.values()[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    files.push(file);

    let file = out.join(format!("{stem}_jumps.csv"));
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(&file)?));
    w.write_record(["path", "time", "size"])?;
    for (i, p) in shown.iter().enumerate() {
        for j in p.jumps() {
            w.write_record([i.to_string(), j.time.to_string(), j.size.to_string()])?;
        }
    }
    w.flush()?;
    files.push(file);
    Ok(())
}
