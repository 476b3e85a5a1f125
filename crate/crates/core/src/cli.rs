//! Command-line front end: run configuration, CSV output and subcommands.
//!
//! A run is described by a TOML file with the sections `model`, `spectrum`,
//! `losses`, `grid` and `output`:
//!
//! ```toml
//! [model]
//! delta_g = 0.9
//! delta_v = 0.0
//!
//! [spectrum]
//! preset = "fig3"
//! delta = 0.1
//!
//! [grid]
//! t = 4.6
//! ```
//!
//! Omitted keys take their defaults (`dt = 1e-3`, exact estimator,
//! `seed = 42`, coupling grid `[-0.5, 2.0]` in steps of `0.05`). Unknown keys
//! are rejected.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate_density, propagate_state, IntegratorConfig};
use crate::fidelity::{
    exact_average_fidelity, haar_sample, mc_average_fidelity, reconstruct_channel, state_fidelity,
    CodeChannel, CodeInput,
};
use crate::hilbert::{partial_trace_field, Basis};
use crate::model::{build_hamiltonian, build_jump_operators, ModelParams, Preset, SpectrumPreset};
use crate::sweep::{
    figure_runs, run_grid_with_progress, time_series, Estimator, GridSpec, Losses, Range1, SweepResult, TimeSpec,
};
use crate::{par, Error, Result, C64};

pub const CSV_HEADER: &str = "delta_g,delta_v,time,fidelity,stderr,n_samples";

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "DISPERSIVE_CZ_WORKERS";

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLES: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub losses: LossSection,
    pub grid: GridSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Coupling offsets of the single point used by `simulate` and `series`.
    #[serde(default)]
    pub delta_g: f64,
    #[serde(default)]
    pub delta_v: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { delta_g: 0.0, delta_v: 0.0, dt: default_dt() }
    }
}

/// Either a named `preset` (with its `delta`, `shift`, `modes` parameters)
/// or an explicit list of `detunings`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detunings: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub gamma_fibre: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    #[default]
    Exact,
    Mc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// `[lo, hi, step]`.
    #[serde(default = "default_range")]
    pub delta_g: [f64; 3],
    #[serde(default = "default_range")]
    pub delta_v: [f64; 3],
    /// Fixed interaction time; exclusive with `time`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Time grid `[lo, hi, step]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<[f64; 3]>,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Minimum fidelity for the first local maximum reported by `series`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

fn default_dt() -> f64 {
    IntegratorConfig::default().dt
}

fn default_range() -> [f64; 3] {
    [-0.5, 2.0, 0.05]
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_threshold() -> f64 {
    0.9
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration. Errors carry the offending line.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(1);
        Error::config(format!("line {line}: {}", e.message().trim_end()))
    })?;
    cfg.validate().map_err(|(key, e)| match line_of_key(text, key) {
        Some(line) => Error::config(format!("line {line}: {e}")),
        None => Error::config(e),
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::ConfigFile { path: path.to_owned(), message: e.to_string() })?;
    parse_config(&text).map_err(|e| Error::ConfigFile { path: path.to_owned(), message: e.to_string() })
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Checks semantic constraints; the error names the offending key.
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let fail = |key: &'static str, msg: String| Err((key, msg));
        for (key, r) in [("kappa", self.losses.kappa), ("gamma", self.losses.gamma), ("gamma_fibre", self.losses.gamma_fibre)] {
            if !(r >= 0.0 && r.is_finite()) {
                return fail(key, format!("`{key}` must be a finite nonnegative rate, got {r}"));
            }
        }
        if !(self.model.dt > 0.0 && self.model.dt.is_finite()) {
            return fail("dt", format!("`dt` must be positive, got {}", self.model.dt));
        }
        for (key, r) in [("delta_g", self.grid.delta_g), ("delta_v", self.grid.delta_v)] {
            if let Err(e) = range(r).validate(key) {
                return fail(key, e.to_string());
            }
        }
        match (self.grid.t, self.grid.time) {
            (Some(_), Some(_)) => return fail("time", "set either `t` or `time`, not both".into()),
            (None, None) => return fail("t", "missing required key `t` (or `time`) in [grid]".into()),
            (Some(t), None) if !(t >= 0.0 && t.is_finite()) => {
                return fail("t", format!("`t` must be finite and nonnegative, got {t}"))
            }
            (None, Some(r)) => {
                if let Err(e) = range(r).validate("time") {
                    return fail("time", e.to_string());
                }
            }
            _ => {}
        }
        if self.grid.samples == 0 {
            return fail("samples", "`samples` must be at least 1".into());
        }
        match (&self.spectrum.preset, &self.spectrum.detunings) {
            (Some(_), Some(_)) => return fail("detunings", "set either `preset` or `detunings`, not both".into()),
            (None, None) => return fail("preset", "missing required key `preset` (or `detunings`) in [spectrum]".into()),
            (None, Some(d)) if d.is_empty() || d.iter().any(|x| !x.is_finite()) => {
                return fail("detunings", "`detunings` must be a nonempty list of finite values".into())
            }
            _ => {}
        }
        if let Err(e) = self.spectrum_preset() {
            return fail("preset", e.to_string());
        }
        Ok(())
    }

    pub fn spectrum_preset(&self) -> Result<SpectrumPreset> {
        let s = &self.spectrum;
        match (&s.preset, &s.detunings) {
            (Some(id), None) => Ok(Preset::from_id(id, s.delta, s.shift, s.modes)?.spectrum()),
            (None, Some(d)) => Ok(SpectrumPreset::Explicit(d.clone())),
            _ => Err(Error::config("spectrum needs exactly one of `preset` and `detunings`")),
        }
    }

    pub fn estimator(&self) -> Estimator {
        match self.grid.estimator {
            EstimatorKind::Exact => Estimator::Exact,
            EstimatorKind::Mc => Estimator::MonteCarlo { samples: self.grid.samples, seed: self.grid.seed },
        }
    }

    pub fn time_spec(&self) -> TimeSpec {
        match (self.grid.t, self.grid.time) {
            (_, Some(r)) => TimeSpec::Grid(range(r)),
            (Some(t), None) => TimeSpec::Fixed(t),
            (None, None) => TimeSpec::Fixed(0.0),
        }
    }

    /// The full coupling grid.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        let l = &self.losses;
        Ok(GridSpec {
            delta_g: range(self.grid.delta_g),
            delta_v: range(self.grid.delta_v),
            time: self.time_spec(),
            spectrum: self.spectrum_preset()?,
            losses: Losses { kappa: l.kappa, gamma: l.gamma, gamma_fibre: l.gamma_fibre },
            estimator: self.estimator(),
            integrator: IntegratorConfig::with_dt(self.model.dt),
        })
    }

    /// The grid collapsed onto the `[model]` point.
    pub fn point_spec(&self) -> Result<GridSpec> {
        Ok(self.grid_spec()?.at_point(self.model.delta_g, self.model.delta_v))
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.grid.seed = seed;
        }
        if let Some(samples) = o.samples {
            self.grid.samples = samples;
            self.grid.estimator = EstimatorKind::Mc;
        }
        if let Some(dt) = o.dt {
            self.model.dt = dt;
        }
        if let Some(out) = &o.out {
            self.output.csv = Some(out.clone());
        }
    }
}

fn range(r: [f64; 3]) -> Range1 {
    Range1::new(r[0], r[1], r[2])
}

fn fmt_value(x: f64) -> String {
    format!("{x}")
}

/// CSV text of `result` with the fixed header.
pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(48 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let (stderr, n) = match r.sampling {
            Some((s, n)) => (format!("{s:.6}"), n.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{stderr},{n}",
            fmt_value(r.delta_g),
            fmt_value(r.delta_v),
            fmt_value(r.time),
            r.fidelity
        );
    }
    out
}

/// Writes the CSV to `path`; a partially written file is removed.
pub fn write_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let attempt = || -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(to_csv(result).as_bytes())?;
        f.sync_all()
    };
    attempt().map_err(|e| {
        let _ = fs::remove_file(path);
        Error::ConfigFile { path: path.to_owned(), message: e.to_string() }
    })
}

pub fn summary_line(result: &SweepResult) -> String {
    let p = &result.peak;
    format!(
        "peak F={:.6} at dg={} dv={} t={}",
        p.fidelity,
        fmt_value(p.delta_g),
        fmt_value(p.delta_v),
        fmt_value(p.time)
    )
}

#[derive(Debug, Parser)]
#[command(name = "dispersive-cz", version, about = "Remote controlled-Z gate through dispersive fibre modes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Output CSV path (a directory for `figure`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use the Monte-Carlo estimator with this many Haar samples.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Integration step in units of 1/g.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average fidelity at the [model] point.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fidelity over the (delta_g, delta_v) grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fidelity against time at the [model] point.
    Series {
        #[arg(long)]
        config: PathBuf,
    },
    /// Runs the preset of a reproduced figure.
    Figure {
        /// One of the figure ids (`fig3a` ... `fig10b`, `mingap`).
        id: String,
    },
    /// Cross-checks the solvers against independent references.
    Selftest,
}

fn config_with(path: &Path, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = load_config(path)?;
    cfg.apply_overrides(o);
    cfg.validate().map_err(|(_, msg)| Error::ConfigFile { path: path.to_owned(), message: msg })?;
    Ok(cfg)
}

fn csv_path(cfg: &RunConfig, fallback: &str) -> PathBuf {
    cfg.output.csv.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn progress(done: usize, total: usize) {
    if total >= 100 && (done.is_multiple_of((total / 20).max(1)) || done == total) {
        eprintln!("  {done}/{total} points");
    }
}

/// Executes a parsed command line, writing results to `stdout`.
pub fn run(cli: Cli, stdout: &mut (dyn std::io::Write + Send)) -> Result<()> {
    let o = &cli.overrides;
    par::with_workers(cli.workers, || -> Result<()> {
        match &cli.command {
            Command::Simulate { config } => {
                let cfg = config_with(config, o)?;
                let spec = cfg.point_spec()?;
                let res = run_grid_with_progress(&spec, &|_, _| {})?;
                for r in &res.rows {
                    match r.sampling {
                        Some((s, n)) => writeln!(stdout, "t={} F={:.6} stderr={s:.6} n={n}", r.time, r.fidelity)?,
                        None => writeln!(stdout, "t={} F={:.6}", r.time, r.fidelity)?,
                    }
                }
                writeln!(stdout, "{}", summary_line(&res))?;
            }
            Command::Sweep { config } => {
                let cfg = config_with(config, o)?;
                let res = run_grid_with_progress(&cfg.grid_spec()?, &progress)?;
                write_csv(&csv_path(&cfg, "sweep.csv"), &res)?;
                writeln!(stdout, "{}", summary_line(&res))?;
            }
            Command::Series { config } => {
                let cfg = config_with(config, o)?;
                let res = time_series(&cfg.point_spec()?)?;
                write_csv(&csv_path(&cfg, "series.csv"), &res)?;
                if let Some(r) = res.first_local_max(cfg.grid.threshold) {
                    writeln!(stdout, "first maximum above {} F={:.6} at t={}", cfg.grid.threshold, r.fidelity, r.time)?;
                }
                writeln!(stdout, "{}", summary_line(&res))?;
            }
            Command::Figure { id } => {
                let dir = o.out.clone().unwrap_or_else(|| PathBuf::from("."));
                for run in figure_runs(id)? {
                    let mut spec = run.spec;
                    if let Some(dt) = o.dt {
                        spec.integrator.dt = dt;
                    }
                    if o.samples.is_some() || o.seed.is_some() {
                        spec.estimator = Estimator::MonteCarlo {
                            samples: o.samples.unwrap_or(DEFAULT_SAMPLES),
                            seed: o.seed.unwrap_or(DEFAULT_SEED),
                        };
                    }
                    let res = run_grid_with_progress(&spec, &progress)?;
                    let path = dir.join(format!("{}.csv", run.name));
                    write_csv(&path, &res)?;
                    writeln!(stdout, "{}: {}", run.name, summary_line(&res))?;
                }
            }
            Command::Selftest => {
                let checks = selftest();
                for c in &checks {
                    writeln!(stdout, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
                }
                if let Some(c) = checks.iter().find(|c| !c.passed) {
                    return Err(Error::config(format!("selftest failed: {}", c.name)));
                }
            }
        }
        Ok(())
    })
}

/// Entry point shared by the binary: parses `args`, runs, maps errors to a
/// nonzero exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, bound: f64) -> Check {
    Check { name, passed: value.is_finite() && value <= bound, detail: format!("{value:.3e} (bound {bound:.0e})") }
}

/// Oracle agreement on small instances: identity channel, channel against
/// sixteen direct density propagations, pure state against density matrix,
/// sampled against exact average, and step halving.
pub fn selftest() -> Vec<Check> {
    let cfg = IntegratorConfig::default();
    let mut out = Vec::new();
    out.push(check("identity channel average", (exact_average_fidelity(&CodeChannel::identity()) - 0.4).abs(), 1e-9));

    let lossy = ModelParams::from_offsets(0.9, 0.0, vec![-0.1, 0.1]).with_losses(0.01, 0.01, 0.01);
    let lossless = ModelParams::from_offsets(0.9, 0.0, vec![-0.1, 0.1]);
    let t = 4.6;
    let result = (|| -> Result<Vec<Check>> {
        let basis = Basis::new(2)?;
        let idx = [basis.eg_vac(), basis.es_vac(), 0, 1];
        let ch = reconstruct_channel(&lossy, t, &cfg)?;
        let h = build_hamiltonian(&lossy, &basis)?;
        let jumps = build_jump_operators(&lossy, &basis)?;
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut rho0 = nalgebra::DMatrix::zeros(basis.dim(), basis.dim());
                rho0[(idx[i], idx[j])] = C64::new(1.0, 0.0);
                let rho = propagate_density(&h, &jumps, &rho0, t, &cfg)?;
                worst = worst.max((partial_trace_field(&rho, &basis)? - ch.block(i, j)).camax());
            }
        }
        let mut checks = vec![check("channel vs direct dyads", worst, 1e-7)];

        let ch0 = reconstruct_channel(&lossless, t, &cfg)?;
        let h0 = build_hamiltonian(&lossless, &basis)?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let input = haar_sample(&mut rng);
            let psi0 = embed(&basis, &input);
            let psi = propagate_state(&h0, &[], &psi0, t, &cfg)?;
            let red = partial_trace_field(&(&psi * psi.adjoint()), &basis)?;
            let target = crate::fidelity::cz_target(&input).embed();
            let f_state = (target.adjoint() * red * target)[(0, 0)].re;
            worst = worst.max((f_state - state_fidelity(&ch0, &input)).abs());
        }
        checks.push(check("state vector vs channel", worst, 1e-7));

        let exact = exact_average_fidelity(&ch);
        let mc = mc_average_fidelity(&ch, DEFAULT_SAMPLES, DEFAULT_SEED)?;
        checks.push(Check {
            name: "sampled vs exact average",
            passed: (mc.mean - exact).abs() <= 3.0 * mc.stderr,
            detail: format!("{:.6} vs {exact:.6} (3 stderr = {:.2e})", mc.mean, 3.0 * mc.stderr),
        });

        let half = exact_average_fidelity(&reconstruct_channel(&lossy, t, &cfg.halved())?);
        checks.push(check("step halving", (half - exact).abs(), 1e-6));
        Ok(checks)
    })();
    match result {
        Ok(mut c) => out.append(&mut c),
        Err(e) => out.push(Check { name: "propagation", passed: false, detail: e.to_string() }),
    }
    out
}

fn embed(basis: &Basis, input: &CodeInput) -> nalgebra::DVector<C64> {
    let mut psi = nalgebra::DVector::zeros(basis.dim());
    for (k, a) in [basis.eg_vac(), basis.es_vac(), 0, 1].into_iter().zip(input.amplitudes()) {
        psi[k] = a;
    }
    psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{Peak, SweepRow};

    const MINIMAL: &str = "[spectrum]\npreset = \"fig3\"\ndelta = 0.1\n\n[grid]\nt = 4.6\n";

    #[test]
    fn minimal_config_and_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.grid.seed, 42);
        assert_eq!(cfg.model.dt, 1e-3);
        assert_eq!(cfg.estimator(), Estimator::Exact);
        let spec = cfg.grid_spec().unwrap();
        assert_eq!(spec.spectrum, SpectrumPreset::TwoModes(0.1));
        assert_eq!(spec.time, TimeSpec::Fixed(4.6));
        assert_eq!(spec.delta_g.len(), 51);
    }

    #[test]
    fn round_trip() {
        let text = "[model]\ndelta_g = 0.9\ndelta_v = -0.05\ndt = 0.0005\n\n[spectrum]\ndetunings = [-0.3, 0.1, 0.2]\n\n\
                    [losses]\nkappa = 0.01\ngamma = 0.002\ngamma_fibre = 0.003\n\n[grid]\ndelta_g = [0.0, 1.0, 0.1]\n\
                    time = [0.0, 5.0, 0.5]\nestimator = \"mc\"\nsamples = 300\nseed = 7\nthreshold = 0.8\n\n\
                    [output]\ncsv = \"out/a.csv\"\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(parse_config(&parse_config(MINIMAL).unwrap().to_toml()).unwrap(), parse_config(MINIMAL).unwrap());
    }

    #[test]
    fn errors_name_key_and_line() {
        let neg = format!("{MINIMAL}\n[losses]\nkappa = -0.1\n");
        let e = parse_config(&neg).unwrap_err().to_string();
        assert!(e.contains("kappa") && e.contains("line 9"), "{e}");

        let unknown = "[spectrum]\npreset = \"fig3\"\nbogus = 1\n[grid]\nt = 4.6\n";
        let e = parse_config(unknown).unwrap_err().to_string();
        assert!(e.contains("bogus") && e.contains("line 3"), "{e}");

        let mistyped = "[spectrum]\npreset = \"fig3\"\n[grid]\nt = \"soon\"\n";
        let e = parse_config(mistyped).unwrap_err().to_string();
        assert!(e.contains("line 4"), "{e}");

        let missing = "[spectrum]\npreset = \"fig3\"\n[grid]\nseed = 1\n";
        let e = parse_config(missing).unwrap_err().to_string();
        assert!(e.contains("`t`"), "{e}");

        assert!(parse_config("[grid]\nt = 1.0\n").is_err());
        assert!(parse_config("[spectrum]\npreset = \"fig99\"\n[grid]\nt = 1.0\n").is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.apply_overrides(&Overrides { seed: Some(3), samples: Some(50), dt: Some(5e-4), out: None });
        assert_eq!(cfg.estimator(), Estimator::MonteCarlo { samples: 50, seed: 3 });
        assert_eq!(cfg.model.dt, 5e-4);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![
            SweepRow { delta_g: 0.9, delta_v: 0.0, time: 4.6, fidelity: 0.98401234, sampling: None },
            SweepRow { delta_g: -0.05, delta_v: 1.5, time: 4.6, fidelity: 0.5, sampling: Some((0.0123456, 200)) },
        ];
        let res = SweepResult::from_rows(rows).unwrap();
        assert_eq!(
            to_csv(&res),
            "delta_g,delta_v,time,fidelity,stderr,n_samples\n0.9,0,4.6,0.984012,,\n-0.05,1.5,4.6,0.500000,0.012346,200\n"
        );
        assert_eq!(summary_line(&res), "peak F=0.984012 at dg=0.9 dv=0 t=4.6");
        assert_eq!(res.peak, Peak { delta_g: 0.9, delta_v: 0.0, time: 4.6, fidelity: 0.98401234 });
    }

    #[test]
    fn selftest_passes() {
        let checks = selftest();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }
}
