//! Parameter grids over the second cavity's couplings, time series, and the
//! experiment presets behind each reproduced figure.
//!
//! Every `(delta_g, delta_v)` point is an independent work item: one
//! integration yields the channel at all requested times, after which the
//! estimator is applied. Rows come back in row-major order (`delta_g`, then
//! `delta_v`, then time) whatever the pool width.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::dynamics::IntegratorConfig;
use crate::fidelity::{exact_average_fidelity, haar_inputs, mc_average_over, ChannelSolver, CodeInput};
use crate::model::{ModelParams, Preset, SpectrumPreset};
use crate::{par, Error, Result};

/// Closed range `lo..=hi` walked in steps of `step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range1 {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Range1 {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn single(x: f64) -> Self {
        Self { lo: x, hi: x, step: 1.0 }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::config(format!("{name}: bounds must be finite")));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config(format!("{name}: step must be positive, got {}", self.step)));
        }
        if self.hi < self.lo {
            return Err(Error::config(format!("{name}: empty range {}..{}", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values, snapped to 1e-9 so decimal steps print cleanly.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| snap(self.lo + k as f64 * self.step)).collect()
    }
}

fn snap(x: f64) -> f64 {
    let y = (x * 1e9).round() / 1e9;
    if y == 0.0 {
        0.0
    } else {
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimeSpec {
    Fixed(f64),
    Grid(Range1),
}

impl TimeSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TimeSpec::Fixed(t) => vec![*t],
            TimeSpec::Grid(r) => r.values(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TimeSpec::Fixed(t) if !(t.is_finite() && *t >= 0.0) => {
                Err(Error::config(format!("time must be finite and nonnegative, got {t}")))
            }
            TimeSpec::Fixed(_) => Ok(()),
            TimeSpec::Grid(r) => {
                r.validate("time")?;
                if r.lo < 0.0 {
                    return Err(Error::config("time: grid must start at t >= 0"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Loss rates `(kappa, gamma, Gamma)` in units of `g`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Losses {
    pub kappa: f64,
    pub gamma: f64,
    pub gamma_fibre: f64,
}

impl Losses {
    pub fn uniform(rate: f64) -> Self {
        Self { kappa: rate, gamma: rate, gamma_fibre: rate }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub delta_g: Range1,
    pub delta_v: Range1,
    pub time: TimeSpec,
    pub spectrum: SpectrumPreset,
    pub losses: Losses,
    pub estimator: Estimator,
    pub integrator: IntegratorConfig,
}

impl GridSpec {
    /// `delta_g, delta_v` over `[-0.5, 2.0]` in steps of `0.05`, exact
    /// estimator, lossless.
    pub fn new(spectrum: SpectrumPreset, time: TimeSpec) -> Self {
        Self {
            delta_g: Range1::new(-0.5, 2.0, 0.05),
            delta_v: Range1::new(-0.5, 2.0, 0.05),
            time,
            spectrum,
            losses: Losses::default(),
            estimator: Estimator::Exact,
            integrator: IntegratorConfig::default(),
        }
    }

    pub fn at_point(mut self, delta_g: f64, delta_v: f64) -> Self {
        self.delta_g = Range1::single(delta_g);
        self.delta_v = Range1::single(delta_v);
        self
    }

    pub fn with_losses(mut self, losses: Losses) -> Self {
        self.losses = losses;
        self
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.delta_g.validate("delta_g")?;
        self.delta_v.validate("delta_v")?;
        self.time.validate()?;
        self.integrator.validate()?;
        if let Estimator::MonteCarlo { samples: 0, .. } = self.estimator {
            return Err(Error::config("samples must be at least 1"));
        }
        self.params(0.0, 0.0).validate()
    }

    pub fn params(&self, delta_g: f64, delta_v: f64) -> ModelParams {
        let l = self.losses;
        ModelParams::from_offsets(delta_g, delta_v, self.spectrum.detunings()).with_losses(
            l.kappa,
            l.gamma,
            l.gamma_fibre,
        )
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        let dv = self.delta_v.values();
        self.delta_g.values().into_iter().flat_map(|g| dv.iter().map(move |&v| (g, v))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub delta_g: f64,
    pub delta_v: f64,
    pub time: f64,
    pub fidelity: f64,
    /// `(stderr, n_samples)` for the sampled estimator.
    pub sampling: Option<(f64, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub delta_g: f64,
    pub delta_v: f64,
    pub time: f64,
    pub fidelity: f64,
}

impl From<&SweepRow> for Peak {
    fn from(r: &SweepRow) -> Self {
        Self { delta_g: r.delta_g, delta_v: r.delta_v, time: r.time, fidelity: r.fidelity }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub peak: Peak,
}

impl SweepResult {
    /// Rows must be in the grid's row-major order; the first maximal row wins.
    pub fn from_rows(rows: Vec<SweepRow>) -> Result<Self> {
        let best = rows
            .iter()
            .reduce(|best, r| if r.fidelity > best.fidelity { r } else { best })
            .ok_or_else(|| Error::config("sweep produced no rows"))?;
        let peak = Peak::from(best);
        Ok(Self { rows, peak })
    }

    /// The first row that exceeds `threshold` and is not below either time
    /// neighbour at the same couplings.
    pub fn first_local_max(&self, threshold: f64) -> Option<&SweepRow> {
        let rows = &self.rows;
        (0..rows.len()).map(|i| &rows[i]).enumerate().find_map(|(i, r)| {
            let same = |j: usize| rows[j].delta_g == r.delta_g && rows[j].delta_v == r.delta_v;
            let prev_ok = i == 0 || !same(i - 1) || rows[i - 1].fidelity <= r.fidelity;
            let next_ok = i + 1 == rows.len() || !same(i + 1) || rows[i + 1].fidelity <= r.fidelity;
            (r.fidelity > threshold && prev_ok && next_ok).then_some(r)
        })
    }
}

/// Fidelity rows at every time of `spec` for a single coupling point.
fn evaluate_point(
    spec: &GridSpec,
    times: &[f64],
    inputs: &[CodeInput],
    delta_g: f64,
    delta_v: f64,
) -> Result<Vec<SweepRow>> {
    let solver = ChannelSolver::new(&spec.params(delta_g, delta_v), spec.integrator)?;
    let channels = solver.channels_at(times)?;
    Ok(channels
        .iter()
        .map(|ch| {
            let (fidelity, sampling) = match spec.estimator {
                Estimator::Exact => (exact_average_fidelity(ch), None),
                Estimator::MonteCarlo { .. } => {
                    let e = mc_average_over(ch, inputs);
                    (e.mean, Some((e.stderr, e.n_samples)))
                }
            };
            SweepRow { delta_g, delta_v, time: ch.time(), fidelity, sampling }
        })
        .collect())
}

pub fn run_grid(spec: &GridSpec) -> Result<SweepResult> {
    run_grid_with_progress(spec, &|_, _| {})
}

/// [`run_grid`] calling `progress(done, total)` after each finished point.
/// Sampled runs draw the same Haar inputs at every point.
pub fn run_grid_with_progress(spec: &GridSpec, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<SweepResult> {
    spec.validate()?;
    let times = spec.time.values();
    let inputs = match spec.estimator {
        Estimator::Exact => Vec::new(),
        Estimator::MonteCarlo { samples, seed } => haar_inputs(samples, seed),
    };
    let points = spec.points();
    let done = AtomicUsize::new(0);
    let results = par::map(&points, |&(g, v)| {
        let r = evaluate_point(spec, &times, &inputs, g, v);
        progress(done.fetch_add(1, Ordering::Relaxed) + 1, points.len());
        r
    });

    let mut rows = Vec::with_capacity(points.len() * times.len());
    for (k, (r, &(g, v))) in results.into_iter().zip(&points).enumerate() {
        match r {
            Ok(mut part) => rows.append(&mut part),
            Err(e) => {
                return Err(Error::SweepPoint { delta_g: g, delta_v: v, completed: k, source: Box::new(e) });
            }
        }
    }
    SweepResult::from_rows(rows)
}

/// Fidelity against time at the single coupling point of `spec`.
pub fn time_series(spec: &GridSpec) -> Result<SweepResult> {
    if spec.delta_g.len() != 1 || spec.delta_v.len() != 1 {
        return Err(Error::config("time series needs a single (delta_g, delta_v) point"));
    }
    run_grid(spec)
}

/// Fidelity change around a peak. Coupling perturbations move `delta_g` and
/// `delta_v` one at a time by `+-perturbation` (a change of
/// `perturbation * g` in `g2` or `v2`); the time perturbations scale `t` by
/// `1 +- perturbation`.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub peak: Peak,
    pub perturbation: f64,
    /// `(delta_g, delta_v, time, fidelity)` at each perturbed point.
    pub samples: Vec<(f64, f64, f64, f64)>,
    pub coupling_drop: f64,
    pub time_drop: f64,
}

impl StabilityReport {
    pub fn worst_drop(&self) -> f64 {
        self.coupling_drop.max(self.time_drop)
    }
}

pub fn stability_report(spec: &GridSpec, peak: &Peak, perturbation: f64) -> Result<StabilityReport> {
    if !(perturbation >= 0.0 && perturbation.is_finite()) {
        return Err(Error::config(format!("perturbation must be nonnegative, got {perturbation}")));
    }
    let p = perturbation;
    let at = |g: f64, v: f64, t: f64| -> Result<f64> {
        let point = spec.clone().at_point(g, v);
        let inputs = match spec.estimator {
            Estimator::Exact => Vec::new(),
            Estimator::MonteCarlo { samples, seed } => haar_inputs(samples, seed),
        };
        Ok(evaluate_point(&point, &[t], &inputs, g, v)?[0].fidelity)
    };
    let base = at(peak.delta_g, peak.delta_v, peak.time)?;
    let (g, v, t) = (peak.delta_g, peak.delta_v, peak.time);
    let couplings = [(g - p, v, t), (g + p, v, t), (g, v - p, t), (g, v + p, t)];
    let timings = [(g, v, t * (1.0 - p)), (g, v, t * (1.0 + p))];
    let eval = |pts: &[(f64, f64, f64)]| -> Result<Vec<(f64, f64, f64, f64)>> {
        par::map(pts, |&(g, v, t)| at(g, v, t).map(|f| (g, v, t, f))).into_iter().collect()
    };
    let c = eval(&couplings)?;
    let tm = eval(&timings)?;
    let drop = |xs: &[(f64, f64, f64, f64)]| xs.iter().map(|s| base - s.3).fold(0.0, f64::max);
    Ok(StabilityReport {
        peak: Peak { fidelity: base, ..*peak },
        perturbation,
        coupling_drop: drop(&c),
        time_drop: drop(&tm),
        samples: c.into_iter().chain(tm).collect(),
    })
}

/// One CSV-producing run of a figure preset.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureRun {
    /// File stem of the output.
    pub name: String,
    pub spec: GridSpec,
}

pub const FIGURE_IDS: [&str; 21] = [
    "fig3a", "fig3b", "fig3c", "fig4a", "fig4b", "fig4c", "fig5a", "fig5b", "fig6a", "fig6b", "fig7a", "fig7b",
    "fig8a", "fig8b", "fig9a", "fig9b", "fig10a", "fig10b", "mingap", "fig8-split-a", "fig8-split-b",
];

/// Loss rate used by every lossy panel.
pub const PANEL_LOSS: f64 = 1e-2;

fn surface(preset: Preset, t: f64, loss: f64) -> GridSpec {
    GridSpec::new(preset.spectrum(), TimeSpec::Fixed(t)).with_losses(Losses::uniform(loss))
}

/// Runs that make up figure `id`.
pub fn figure_runs(id: &str) -> Result<Vec<FigureRun>> {
    let fig3 = |delta: f64| Preset::Fig3 { delta };
    let two_mode = [(0.1, 4.6), (0.2, 4.56), (0.3, 4.54)];
    let single = |spec: GridSpec| Ok(vec![FigureRun { name: id.to_string(), spec }]);
    let series = |family: fn(f64, usize) -> Preset, shift: f64| -> Vec<FigureRun> {
        [2usize, 30]
            .iter()
            .flat_map(|&modes| {
                [0.0, shift].map(|s| FigureRun {
                    name: format!("{id}_{modes}modes_shift{s}"),
                    spec: GridSpec::new(family(s, modes).spectrum(), TimeSpec::Grid(Range1::new(0.0, 8.0, 0.01)))
                        .at_point(0.9, 0.0),
                })
            })
            .collect()
    };
    match id {
        "fig3a" | "fig3b" | "fig3c" | "fig4a" | "fig4b" | "fig4c" => {
            let panel = (id.as_bytes()[4] - b'a') as usize;
            let (delta, t) = two_mode[panel];
            let loss = if id.starts_with("fig4") { PANEL_LOSS } else { 0.0 };
            single(surface(fig3(delta), t, loss))
        }
        "fig5a" => single(surface(Preset::Fig5a, 4.3, 0.0)),
        "fig5b" => single(surface(Preset::Fig5b, 4.3, 0.0)),
        "fig6a" => single(surface(Preset::Fig6a, 4.48, 0.0)),
        "fig6b" => single(surface(Preset::Fig6b, 4.48, 0.0)),
        "fig7a" => single(surface(Preset::Fig6a, 4.48, PANEL_LOSS)),
        "fig7b" => single(surface(Preset::Fig6b, 4.48, PANEL_LOSS)),
        "fig8a" => single(surface(Preset::Fig8, 4.48, 0.0)),
        "fig8b" => single(surface(Preset::Fig8, 4.48, PANEL_LOSS)),
        "fig8-split-a" => single(surface(Preset::Fig8Split, 4.48, 0.0)),
        "fig8-split-b" => single(surface(Preset::Fig8Split, 4.48, PANEL_LOSS)),
        "fig9a" => Ok(series(|shift, modes| Preset::Fig9a { shift, modes }, 0.2)),
        "fig9b" => Ok(series(|shift, modes| Preset::Fig9b { shift, modes }, 0.9)),
        "fig10a" => single(surface(Preset::Fig10a, 4.3, 0.0)),
        "fig10b" => single(surface(Preset::Fig10b, 4.3, 0.0)),
        "mingap" => single(GridSpec::new(fig3(0.45).spectrum(), TimeSpec::Grid(Range1::new(4.4, 4.7, 0.01)))),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}
