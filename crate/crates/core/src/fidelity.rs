//! Code-space channel of the gate and its Haar-averaged fidelity.
//!
//! The two qubits live in `|e>_1, |g>_1` and `|g>_2, |s>_2`, giving the code
//! basis `(|e,g>, |e,s>, |g,g>, |g,s>)` with amplitudes
//! `(alpha, beta, gamma_a, delta_a)`. The target is the controlled-Z that
//! flips the sign of `|e,s>` only.
//!
//! The master equation is linear, so the reduced atomic output for any
//! input `sum_i c_i |i>` is `sum_ij c_i c_j^* E_ij` where `E_ij` is the
//! field-traced output of the dyad `|i><j|` (with the field in vacuum).
//! Only `|e,g>` and `|e,s>` move: they head the g- and s-branch
//! respectively, and every loss drops the excitation into the stationary
//! dark sector. Two amplitude vectors evolved under `H_eff` and the
//! population/coherence they feed into the dark sector therefore determine
//! all sixteen blocks.

use nalgebra::{DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{effective_hamiltonian, integrate_series, IntegratorConfig};
use crate::hilbert::{AtomicDensity, AtomicLabel, Basis};
use crate::model::{build_hamiltonian, build_jump_operators, ModelParams};
use crate::operator::{SparseMatrix, Triplet};
use crate::{par, Error, Result, C64};

pub const CODE_DIM: usize = 4;

/// Atomic labels of the code basis, in amplitude order.
pub const CODE_LABELS: [AtomicLabel; CODE_DIM] =
    [AtomicLabel::EG, AtomicLabel::ES, AtomicLabel::GG, AtomicLabel::GS];

/// Sign pattern of the target gate in the code basis.
const CZ_SIGNS: [f64; CODE_DIM] = [1.0, -1.0, 1.0, 1.0];

/// A pure two-qubit input `alpha|e,g> + beta|e,s> + gamma_a|g,g> + delta_a|g,s>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodeInput {
    pub alpha: C64,
    pub beta: C64,
    pub gamma_a: C64,
    pub delta_a: C64,
}

impl CodeInput {
    pub fn new(alpha: C64, beta: C64, gamma_a: C64, delta_a: C64) -> Self {
        Self { alpha, beta, gamma_a, delta_a }
    }

    pub fn from_amplitudes(a: [C64; CODE_DIM]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Real amplitudes, normalised.
    pub fn real(a: [f64; CODE_DIM]) -> Self {
        Self::from_amplitudes(a.map(|x| C64::new(x, 0.0))).normalized()
    }

    pub fn amplitudes(&self) -> [C64; CODE_DIM] {
        [self.alpha, self.beta, self.gamma_a, self.delta_a]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::from_amplitudes(self.amplitudes().map(|c| c / n))
    }

    pub fn with_phase(&self, theta: f64) -> Self {
        let p = C64::from_polar(1.0, theta);
        Self::from_amplitudes(self.amplitudes().map(|c| c * p))
    }

    /// The state as a vector over [`AtomicLabel::ALL`].
    pub fn embed(&self) -> Vector6<C64> {
        let mut v = Vector6::zeros();
        for (label, c) in CODE_LABELS.iter().zip(self.amplitudes()) {
            v[label.index()] = c;
        }
        v
    }
}

/// Draws a Haar-random pure state: eight independent standard normals form
/// a complex 4-vector that is then normalised.
pub fn haar_sample<R: Rng + ?Sized>(rng: &mut R) -> CodeInput {
    loop {
        let mut a = [C64::default(); CODE_DIM];
        for c in &mut a {
            *c = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let input = CodeInput::from_amplitudes(a);
        let n = input.norm();
        if n > 1e-150 {
            return input.normalized();
        }
    }
}

/// Ideal controlled-Z output: `(alpha, -beta, gamma_a, delta_a)`.
pub fn cz_target(input: &CodeInput) -> CodeInput {
    CodeInput { beta: -input.beta, ..*input }
}

/// The sixteen reduced output blocks `E_ij` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeChannel {
    blocks: [[AtomicDensity; CODE_DIM]; CODE_DIM],
    time: f64,
    params: Option<ModelParams>,
}

fn dyad(i: usize, j: usize) -> AtomicDensity {
    let mut m = AtomicDensity::zeros();
    m[(CODE_LABELS[i].index(), CODE_LABELS[j].index())] = C64::new(1.0, 0.0);
    m
}

impl CodeChannel {
    pub fn from_blocks(blocks: [[AtomicDensity; CODE_DIM]; CODE_DIM], time: f64) -> Self {
        Self { blocks, time, params: None }
    }

    /// `E_ij = |i><j|`.
    pub fn identity() -> Self {
        Self::from_blocks(std::array::from_fn(|i| std::array::from_fn(|j| dyad(i, j))), 0.0)
    }

    /// `E_ij = CZ |i><j| CZ^+`.
    pub fn perfect_cz() -> Self {
        Self::from_blocks(
            std::array::from_fn(|i| {
                std::array::from_fn(|j| dyad(i, j) * C64::new(CZ_SIGNS[i] * CZ_SIGNS[j], 0.0))
            }),
            0.0,
        )
    }

    pub fn block(&self, i: usize, j: usize) -> &AtomicDensity {
        &self.blocks[i][j]
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn params(&self) -> Option<&ModelParams> {
        self.params.as_ref()
    }

    /// Reduced atomic state for the input `c`: `sum_ij c_i c_j^* E_ij`.
    pub fn output(&self, input: &CodeInput) -> AtomicDensity {
        let c = input.amplitudes();
        let mut rho = AtomicDensity::zeros();
        for i in 0..CODE_DIM {
            for j in 0..CODE_DIM {
                rho += self.blocks[i][j] * (c[i] * c[j].conj());
            }
        }
        rho
    }

    /// `(1/d^2) sum_ij <u_i|E_ij|u_j>` with `|u_i> = CZ|i>`.
    pub fn entanglement_fidelity(&self) -> f64 {
        let mut acc = C64::default();
        for i in 0..CODE_DIM {
            for j in 0..CODE_DIM {
                let e = self.blocks[i][j][(CODE_LABELS[i].index(), CODE_LABELS[j].index())];
                acc += e * (CZ_SIGNS[i] * CZ_SIGNS[j]);
            }
        }
        acc.re / (CODE_DIM * CODE_DIM) as f64
    }

    /// Mean over basis inputs of the output weight left inside the code space.
    pub fn code_retention(&self) -> f64 {
        let total: f64 = (0..CODE_DIM)
            .map(|i| CODE_LABELS.iter().map(|l| self.blocks[i][i][(l.index(), l.index())].re).sum::<f64>())
            .sum();
        total / CODE_DIM as f64
    }
}

/// Drives the two excited heads through the dynamics of one parameter set.
///
/// The integrated state is `[v_g | v_s | F_gg | F_ss | F_gs]`: the amplitudes
/// grown from `|e,g>` (g-branch) and `|e,s>` (s-branch) under `H_eff`, and
/// three 2x2 matrices over the dark states accumulating
/// `2 sum_r rate_r (O_r v_a)(O_r v_b)^+`.
pub struct ChannelSolver {
    params: ModelParams,
    basis: Basis,
    heff_g: SparseMatrix,
    heff_s: SparseMatrix,
    feeds: Vec<Feed>,
    cfg: IntegratorConfig,
}

const FEED_LEN: usize = 12;

/// One active jump: `2 * rate` and its entries `(dark row, local column,
/// value)` on each branch.
struct Feed {
    two_rate: f64,
    g: Vec<Triplet>,
    s: Vec<Triplet>,
}

impl ChannelSolver {
    pub fn new(params: &ModelParams, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let basis = Basis::new(params.n_fibre())?;
        let h = build_hamiltonian(params, &basis)?;
        let jumps = build_jump_operators(params, &basis)?;
        let heff = effective_hamiltonian(&h, &jumps);
        let (gr, sr) = (basis.g_branch(), basis.s_branch());
        if heff.iter().any(|(r, c, _)| basis.branch_of(r) != basis.branch_of(c)) {
            return Err(Error::config("generator couples different excitation branches"));
        }

        let feeds = jumps
            .iter()
            .filter(|j| j.rate > 0.0)
            .map(|j| {
                let mut g = Vec::new();
                let mut s = Vec::new();
                for (r, c, v) in j.matrix.iter() {
                    if !basis.dark().contains(&r) {
                        return Err(Error::config("jump operator leaves the dark sector unreachable"));
                    }
                    if gr.contains(&c) {
                        g.push((r, c - gr.start, v));
                    } else if sr.contains(&c) {
                        s.push((r, c - sr.start, v));
                    }
                }
                Ok(Feed { two_rate: 2.0 * j.rate, g, s })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            params: params.clone(),
            heff_g: heff.block(gr),
            heff_s: heff.block(sr),
            basis,
            feeds,
            cfg,
        })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    fn rhs(&self, y: &[C64], dy: &mut [C64]) {
        let minus_i = C64::new(0.0, -1.0);
        let ng = self.heff_g.dim();
        let ns = self.heff_s.dim();
        let (vg, rest) = y.split_at(ng);
        let (vs, _) = rest.split_at(ns);
        let (dg, rest) = dy.split_at_mut(ng);
        let (ds, dfeed) = rest.split_at_mut(ns);
        self.heff_g.apply_scaled(minus_i, vg, dg);
        self.heff_s.apply_scaled(minus_i, vs, ds);

        dfeed.iter_mut().for_each(|z| *z = C64::default());
        for Feed { two_rate, g: g_entries, s: s_entries } in &self.feeds {
            let mut xg = [C64::default(); 2];
            let mut xs = [C64::default(); 2];
            for &(r, c, v) in g_entries {
                xg[r] += v * vg[c];
            }
            for &(r, c, v) in s_entries {
                xs[r] += v * vs[c];
            }
            for a in 0..2 {
                for b in 0..2 {
                    dfeed[2 * a + b] += xg[a] * xg[b].conj() * *two_rate;
                    dfeed[4 + 2 * a + b] += xs[a] * xs[b].conj() * *two_rate;
                    dfeed[8 + 2 * a + b] += xg[a] * xs[b].conj() * *two_rate;
                }
            }
        }
    }

    /// Channels at each of the ascending `times`, from a single integration.
    pub fn channels_at(&self, times: &[f64]) -> Result<Vec<CodeChannel>> {
        let ng = self.heff_g.dim();
        let ns = self.heff_s.dim();
        let mut y0 = vec![C64::default(); ng + ns + FEED_LEN];
        y0[0] = C64::new(1.0, 0.0);
        y0[ng] = C64::new(1.0, 0.0);
        let states = integrate_series(|y, dy| self.rhs(y, dy), &y0, times, &self.cfg).map_err(|e| {
            Error::Dyad { label: "|e,g>/|e,s> excited-sector dyads".into(), source: Box::new(e) }
        })?;
        states.iter().zip(times).map(|(y, &t)| self.assemble(y, t)).collect()
    }

    pub fn channel_at(&self, t: f64) -> Result<CodeChannel> {
        Ok(self.channels_at(&[t])?.remove(0))
    }

    fn assemble(&self, y: &[C64], t: f64) -> Result<CodeChannel> {
        let basis = &self.basis;
        let d = basis.dim();
        let (gr, sr) = (basis.g_branch(), basis.s_branch());
        let ng = gr.len();
        let ns = sr.len();
        let mut vg = DVector::zeros(d);
        vg.as_mut_slice()[gr].copy_from_slice(&y[..ng]);
        let mut vs = DVector::zeros(d);
        vs.as_mut_slice()[sr].copy_from_slice(&y[ng..ng + ns]);
        let feed = &y[ng + ns..];
        let dark_block = |offset: usize| {
            let mut m = AtomicDensity::zeros();
            for a in 0..2 {
                for b in 0..2 {
                    // dark basis states 0, 1 are (g,g;vac), (g,s;vac)
                    m[(basis.state(a).atomic.index(), basis.state(b).atomic.index())] = feed[offset + 2 * a + b];
                }
            }
            m
        };

        let heads = [&vg, &vs];
        let dark = [basis.basis_vector(0), basis.basis_vector(1)];
        let mut blocks = [[AtomicDensity::zeros(); CODE_DIM]; CODE_DIM];
        blocks[0][0] = basis.partial_trace_outer(&vg, &vg)? + dark_block(0);
        blocks[1][1] = basis.partial_trace_outer(&vs, &vs)? + dark_block(4);
        blocks[0][1] = basis.partial_trace_outer(&vg, &vs)? + dark_block(8);
        blocks[1][0] = blocks[0][1].adjoint();
        for (i, head) in heads.iter().enumerate() {
            for (k, dv) in dark.iter().enumerate() {
                let e = basis.partial_trace_outer(head, dv)?;
                blocks[i][2 + k] = e;
                blocks[2 + k][i] = e.adjoint();
            }
        }
        for (i, row) in blocks.iter_mut().enumerate().skip(2) {
            for (j, b) in row.iter_mut().enumerate().skip(2) {
                *b = dyad(i, j);
            }
        }
        Ok(CodeChannel { blocks, time: t, params: Some(self.params.clone()) })
    }
}

pub fn reconstruct_channel(params: &ModelParams, t: f64, cfg: &IntegratorConfig) -> Result<CodeChannel> {
    ChannelSolver::new(params, *cfg)?.channel_at(t)
}

pub fn reconstruct_channel_series(
    params: &ModelParams,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<CodeChannel>> {
    ChannelSolver::new(params, *cfg)?.channels_at(times)
}

/// `<Psi_out| rho_atomic |Psi_out>` with `Psi_out` the ideal gate output,
/// clamped to `[0, 1]`.
pub fn state_fidelity(channel: &CodeChannel, input: &CodeInput) -> f64 {
    let rho = channel.output(input);
    let target = cz_target(input).embed();
    (target.adjoint() * rho * target)[(0, 0)].re.clamp(0.0, 1.0)
}

/// Haar average of [`state_fidelity`] in closed form.
///
/// For a map that may leave weight outside the code space,
/// `F = (d^2 F_e + sum_i Tr[P E_ii]) / (d (d + 1))` with `P` the code
/// projector; this reduces to `(d F_e + 1) / (d + 1)` when all weight stays
/// in the code space.
pub fn exact_average_fidelity(channel: &CodeChannel) -> f64 {
    let d = CODE_DIM as f64;
    let fe = channel.entanglement_fidelity();
    (d * d * fe + d * channel.code_retention()) / (d * (d + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Samples per independent random stream. Changing it changes the draws.
const MC_CHUNK: usize = 64;

/// Haar inputs `0..n` for `seed`. Chunk `k` draws from ChaCha stream `k`, so
/// the sequence does not depend on how chunks are scheduled.
pub fn haar_inputs(n: usize, seed: u64) -> Vec<CodeInput> {
    let chunks = n.div_ceil(MC_CHUNK);
    par::map_range(chunks, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let len = MC_CHUNK.min(n - k * MC_CHUNK);
        (0..len).map(|_| haar_sample(&mut rng)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Monte-Carlo Haar average over `n_samples` inputs; `stderr` is the sample
/// standard deviation over `sqrt(n)`.
pub fn mc_average_fidelity(channel: &CodeChannel, n_samples: usize, seed: u64) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::config("Monte-Carlo estimate needs at least one sample"));
    }
    Ok(mc_average_over(channel, &haar_inputs(n_samples, seed)))
}

/// Sample mean and standard error of [`state_fidelity`] over `inputs`.
pub fn mc_average_over(channel: &CodeChannel, inputs: &[CodeInput]) -> McEstimate {
    let values: Vec<f64> = inputs.iter().map(|x| state_fidelity(channel, x)).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    McEstimate { mean, stderr, n_samples: values.len() }
}
