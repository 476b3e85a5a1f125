//! Time propagation of state vectors and density matrices.
//!
//! Every loss channel maps the single-excitation sector into the dark
//! sector and annihilates the dark sector. Amplitudes inside the excited
//! sector, and coherences between it and the dark sector, therefore evolve
//! under the non-Hermitian generator `H_eff = H - i sum_r rate_r O_r^+ O_r`
//! alone. Full density matrices are integrated with the complete master
//! equation.
//!
//! All propagators use fixed-step classical fourth-order Runge-Kutta. The
//! step count over a span `t` is `ceil(t / dt)`, so the final time is hit
//! exactly.

use nalgebra::{DMatrix, DVector};

use crate::hilbert::check_dim;
use crate::model::JumpOperator;
use crate::operator::{SparseMatrix, Triplet};
use crate::{Error, Result, C64};

pub type StateVector = DVector<C64>;
pub type DensityMatrix = DMatrix<C64>;

const MINUS_I: C64 = C64::new(0.0, -1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// Step size in units of `1/g`.
    pub dt: f64,
    /// Steps between finiteness checks.
    pub checkpoint_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 1e-3, checkpoint_stride: 256 }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn halved(&self) -> Self {
        Self { dt: self.dt / 2.0, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("integration step must be positive, got {}", self.dt)));
        }
        if self.checkpoint_stride == 0 {
            return Err(Error::config("checkpoint stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of equal steps covering `span`, and their length.
    pub fn steps_for(&self, span: f64) -> (usize, f64) {
        if span <= 0.0 {
            return (0, 0.0);
        }
        // t = k * dt maps to exactly k steps
        let n = ((span / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (n, span / n as f64)
    }
}

/// Classical RK4 over a flat complex buffer with an autonomous right-hand
/// side `f(y, dy)`.
pub(crate) struct Rk4 {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4 {
    pub(crate) fn new(len: usize) -> Self {
        let z = vec![C64::default(); len];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    fn step<F: FnMut(&[C64], &mut [C64])>(&mut self, f: &mut F, y: &mut [C64], h: f64) {
        let half = h / 2.0;
        f(y, &mut self.k1);
        for ((t, &y), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *t = y + k * half;
        }
        f(&self.tmp, &mut self.k2);
        for ((t, &y), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *t = y + k * half;
        }
        f(&self.tmp, &mut self.k3);
        for ((t, &y), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *t = y + k * h;
        }
        f(&self.tmp, &mut self.k4);
        let sixth = h / 6.0;
        for (i, y) in y.iter_mut().enumerate() {
            *y += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * sixth;
        }
    }

    /// Advances `y` over `span`. `steps_done` and `t0` only label errors.
    pub(crate) fn integrate<F: FnMut(&[C64], &mut [C64])>(
        &mut self,
        f: &mut F,
        y: &mut [C64],
        span: f64,
        cfg: &IntegratorConfig,
        steps_done: &mut usize,
        t0: f64,
    ) -> Result<()> {
        let (n, h) = cfg.steps_for(span);
        for k in 0..n {
            self.step(f, y, h);
            *steps_done += 1;
            if (k + 1) % cfg.checkpoint_stride == 0 || k + 1 == n {
                check_finite(y, *steps_done, t0 + (k + 1) as f64 * h)?;
            }
        }
        Ok(())
    }
}

fn check_finite(y: &[C64], step: usize, time: f64) -> Result<()> {
    if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step, time })
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::config(format!("times must be finite and nonnegative, got {t}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("times must be sorted ascending"));
    }
    Ok(())
}

/// Integrates `y0` and records it at each of the (ascending) `times`.
pub(crate) fn integrate_series<F: FnMut(&[C64], &mut [C64])>(
    mut f: F,
    y0: &[C64],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<C64>>> {
    cfg.validate()?;
    check_times(times)?;
    let mut rk = Rk4::new(y0.len());
    let mut y = y0.to_vec();
    let mut now = 0.0;
    let mut steps = 0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        rk.integrate(&mut f, &mut y, t - now, cfg, &mut steps, now)?;
        now = t;
        out.push(y.clone());
    }
    Ok(out)
}

/// `H - i sum_r rate_r O_r^+ O_r`.
pub fn effective_hamiltonian(h: &SparseMatrix, jumps: &[JumpOperator]) -> SparseMatrix {
    jumps
        .iter()
        .filter(|j| j.rate > 0.0)
        .fold(h.clone(), |acc, j| acc.add(&j.decay_term().scale(MINUS_I)))
}

fn check_operators(h: &SparseMatrix, jumps: &[JumpOperator], dim: usize) -> Result<()> {
    check_dim("Hamiltonian", dim, h.dim())?;
    for j in jumps {
        check_dim("jump operator", dim, j.matrix.dim())?;
        if !(j.rate >= 0.0 && j.rate.is_finite()) {
            return Err(Error::config(format!("jump rate must be nonnegative, got {}", j.rate)));
        }
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    check_times(&[t])
}

/// Amplitudes at `times` under `H_eff`. Equals Schrödinger evolution when all
/// rates vanish.
pub fn propagate_state_series(
    h: &SparseMatrix,
    jumps: &[JumpOperator],
    psi0: &StateVector,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<StateVector>> {
    check_operators(h, jumps, psi0.len())?;
    let heff = effective_hamiltonian(h, jumps);
    let states = integrate_series(
        |y, dy| heff.apply_scaled(MINUS_I, y, dy),
        psi0.as_slice(),
        times,
        cfg,
    )?;
    Ok(states.into_iter().map(DVector::from_vec).collect())
}

pub fn propagate_state(
    h: &SparseMatrix,
    jumps: &[JumpOperator],
    psi0: &StateVector,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<StateVector> {
    check_time(t)?;
    Ok(propagate_state_series(h, jumps, psi0, &[t], cfg)?.remove(0))
}

/// Evolves a column `<k|rho|d>` of coherences between the excited sector and
/// a dark state `|d>`. Jumps annihilate the dark side, so the column obeys the
/// same `H_eff` equation as a state vector.
pub fn propagate_coherence_block(
    h: &SparseMatrix,
    jumps: &[JumpOperator],
    v0: &StateVector,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<StateVector> {
    propagate_state(h, jumps, v0, t, cfg)
}

/// Right-hand side of the master equation,
/// `-i (H_eff rho - rho H_eff^+) + 2 sum_r rate_r O_r rho O_r^+`.
pub(crate) struct Liouvillian {
    dim: usize,
    heff: SparseMatrix,
    heff_adj: SparseMatrix,
    /// Per active jump: rate and stored entries `(row, col, value)`.
    jumps: Vec<(f64, Vec<Triplet>)>,
}

impl Liouvillian {
    pub(crate) fn new(h: &SparseMatrix, jumps: &[JumpOperator]) -> Self {
        let heff = effective_hamiltonian(h, jumps);
        Self {
            dim: h.dim(),
            heff_adj: heff.adjoint(),
            heff,
            jumps: jumps
                .iter()
                .filter(|j| j.rate > 0.0)
                .map(|j| (j.rate, j.matrix.iter().collect()))
                .collect(),
        }
    }

    pub(crate) fn apply(&self, rho: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::default());
        self.heff.left_mul_acc(MINUS_I, rho, out);
        self.heff_adj.right_mul_acc(-MINUS_I, rho, out);
        let d = self.dim;
        for (rate, entries) in &self.jumps {
            let f = 2.0 * rate;
            for &(ra, ca, oa) in entries {
                for &(rb, cb, ob) in entries {
                    out[ra + rb * d] += oa * rho[ca + cb * d] * ob.conj() * f;
                }
            }
        }
    }
}

pub fn propagate_density_series(
    h: &SparseMatrix,
    jumps: &[JumpOperator],
    rho0: &DensityMatrix,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<DensityMatrix>> {
    check_dim("density matrix columns", rho0.nrows(), rho0.ncols())?;
    check_operators(h, jumps, rho0.nrows())?;
    let d = rho0.nrows();
    let lv = Liouvillian::new(h, jumps);
    let out = integrate_series(|y, dy| lv.apply(y, dy), rho0.as_slice(), times, cfg)?;
    Ok(out.into_iter().map(|v| DMatrix::from_column_slice(d, d, &v)).collect())
}

/// Solves the master equation in its factor-two Lindblad form. Also accepts
/// non-Hermitian inputs (single dyads), which the equation maps linearly.
pub fn propagate_density(
    h: &SparseMatrix,
    jumps: &[JumpOperator],
    rho0: &DensityMatrix,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    check_time(t)?;
    Ok(propagate_density_series(h, jumps, rho0, &[t], cfg)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_basis, Basis, BasisState, FieldLabel, Mode, AtomicLabel};
    use crate::model::{build_hamiltonian, build_jump_operators, ModelParams, Preset};
    use crate::oracle;
    use proptest::prelude::*;

    fn setup(p: &ModelParams) -> (Basis, SparseMatrix, Vec<JumpOperator>) {
        let basis = build_basis(p.n_fibre()).unwrap();
        let h = build_hamiltonian(p, &basis).unwrap();
        let jumps = build_jump_operators(p, &basis).unwrap();
        (basis, h, jumps)
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn step_counts() {
        let c = IntegratorConfig::with_dt(1e-3);
        assert_eq!(c.steps_for(0.0), (0, 0.0));
        assert_eq!(c.steps_for(4.6).0, 4600);
        assert_eq!(c.steps_for(4.6005).0, 4601);
        assert_eq!(c.steps_for(1e-6).0, 1);
        assert!(IntegratorConfig::with_dt(0.0).validate().is_err());
    }

    #[test]
    fn zero_hamiltonian_is_stationary() {
        let h = SparseMatrix::zeros(11);
        let psi = DVector::from_fn(11, |i, _| C64::new(i as f64, 1.0));
        let out = propagate_state(&h, &[], &psi, 3.0, &cfg()).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn single_fibre_photon_decays() {
        let p = ModelParams::from_offsets(0.0, 0.0, vec![0.0]).with_losses(0.0, 0.0, 0.3);
        let (basis, _, jumps) = setup(&p);
        let h = SparseMatrix::zeros(basis.dim());
        let i = basis
            .index_of(&BasisState::new(AtomicLabel::GG, FieldLabel::Photon(Mode::Fibre(0))))
            .unwrap();
        let t = 2.0;
        let psi = propagate_state(&h, &jumps, &basis.basis_vector(i), t, &cfg()).unwrap();
        assert!((psi[i].re - (-0.3f64 * t).exp()).abs() < 1e-12);
        assert!((psi[i].norm_sqr() - (-0.6f64 * t).exp()).abs() < 1e-12);

        let mut rho0 = DMatrix::zeros(basis.dim(), basis.dim());
        rho0[(i, i)] = C64::new(1.0, 0.0);
        let rho = propagate_density(&h, &jumps, &rho0, t, &cfg()).unwrap();
        assert!((rho[(i, i)].re - (-0.6f64 * t).exp()).abs() < 1e-12);
        assert!((rho[(0, 0)].re - (1.0 - (-0.6f64 * t).exp())).abs() < 1e-12);
    }

    #[test]
    fn lossless_chain_matches_matrix_exponential() {
        let p = ModelParams::from_offsets(0.0, 0.0, vec![0.0]);
        let (basis, h, jumps) = setup(&p);
        let psi0 = basis.basis_vector(basis.es_vac());
        let psi = propagate_state(&h, &jumps, &psi0, 1.0, &cfg()).unwrap();
        let exact = oracle::expm_state(&h.to_dense(), &psi0, 1.0);
        assert!((psi - exact).norm() < 1e-8);
    }

    #[test]
    fn dark_state_is_stationary() {
        let p = ModelParams::from_offsets(0.4, -0.2, vec![-0.3, 0.1, 0.5]).with_losses(0.02, 0.01, 0.03);
        let (basis, h, jumps) = setup(&p);
        let mut rho0 = DMatrix::zeros(basis.dim(), basis.dim());
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let rho = propagate_density(&h, &jumps, &rho0, 2.5, &cfg()).unwrap();
        assert_eq!(rho, rho0);
    }

    #[test]
    fn lossy_density_matches_liouvillian_exponential() {
        let p = ModelParams::from_offsets(0.9, 0.0, Preset::Fig3 { delta: 0.1 }.detunings())
            .with_losses(0.01, 0.01, 0.01);
        let (basis, h, jumps) = setup(&p);
        let mut rho0 = DMatrix::zeros(basis.dim(), basis.dim());
        rho0[(basis.es_vac(), basis.es_vac())] = C64::new(1.0, 0.0);
        let rho = propagate_density(&h, &jumps, &rho0, 4.6, &cfg()).unwrap();
        let exact = oracle::liouvillian_expm(&h.to_dense(), &jumps, &rho0, 4.6);
        assert!((&rho - exact).camax() < 1e-7);
        assert!((rho.trace().re - 1.0).abs() < 1e-9);
        assert!((&rho - rho.adjoint()).camax() < 1e-9);
        assert!(oracle::min_eigenvalue(&rho) > -1e-7);
    }

    #[test]
    fn pure_state_consistency() {
        let p = ModelParams::from_offsets(0.7, 0.2, vec![-0.2, 0.05, 0.3]);
        let (basis, h, jumps) = setup(&p);
        let mut psi0 = basis.basis_vector(basis.eg_vac()) + basis.basis_vector(basis.es_vac());
        psi0[0] = C64::new(0.0, 1.0);
        psi0 /= C64::new(psi0.norm(), 0.0);
        let psi = propagate_state(&h, &jumps, &psi0, 3.3, &cfg()).unwrap();
        let rho = propagate_density(&h, &jumps, &(&psi0 * psi0.adjoint()), 3.3, &cfg()).unwrap();
        assert!((rho - &psi * psi.adjoint()).camax() < 1e-8);
    }

    #[test]
    fn coherence_block_matches_density() {
        let p = ModelParams::from_offsets(0.5, 0.1, vec![-0.4, 0.2]).with_losses(0.05, 0.02, 0.03);
        let (basis, h, jumps) = setup(&p);
        let v0 = basis.basis_vector(basis.eg_vac());
        assert_eq!(
            propagate_coherence_block(&h, &jumps, &DVector::zeros(basis.dim()), 1.0, &cfg()).unwrap(),
            DVector::zeros(basis.dim())
        );
        let v = propagate_coherence_block(&h, &jumps, &v0, 2.0, &cfg()).unwrap();
        // rho0 = |eg><gs|, a rank-one off-diagonal block
        let rho0 = &v0 * basis.basis_vector(1).adjoint();
        let rho = propagate_density(&h, &jumps, &rho0, 2.0, &cfg()).unwrap();
        assert!((rho.column(1) - &v).camax() < 1e-8);

        let (hl, jl) = {
            let q = p.clone().with_losses(0.0, 0.0, 0.0);
            let (_, h, j) = setup(&q);
            (h, j)
        };
        assert_eq!(
            propagate_coherence_block(&hl, &jl, &v0, 2.0, &cfg()).unwrap(),
            propagate_state(&hl, &jl, &v0, 2.0, &cfg()).unwrap()
        );
    }

    #[test]
    fn non_finite_values_are_reported() {
        let mut h = SparseMatrix::from_triplets(2, vec![(0, 0, C64::new(f64::NAN, 0.0))]);
        let psi = DVector::from_element(2, C64::new(1.0, 0.0));
        let err = propagate_state(&h, &[], &psi, 0.01, &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 10, .. }), "{err}");
        h = SparseMatrix::zeros(3);
        assert!(matches!(
            propagate_state(&h, &[], &psi, 0.01, &cfg()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(propagate_state(&SparseMatrix::zeros(2), &[], &psi, -1.0, &cfg()).is_err());
    }

    fn params_strategy(max_modes: usize) -> impl Strategy<Value = ModelParams> {
        (
            prop::collection::vec(-1.0f64..1.0, 1..=max_modes),
            -0.5f64..2.0,
            -0.5f64..2.0,
        )
            .prop_map(|(det, dg, dv)| ModelParams::from_offsets(dg, dv, det))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn lossless_evolution_is_unitary_and_branch_confined(
            p in params_strategy(6),
            t in 0.0f64..10.0,
            phase in 0.0f64..6.3,
        ) {
            let (basis, h, jumps) = setup(&p);
            let mut psi0 = basis.basis_vector(basis.eg_vac()) * C64::from_polar(0.6, phase);
            psi0[basis.es_vac()] = C64::new(0.8, 0.0);
            let psi = propagate_state(&h, &jumps, &psi0, t, &cfg()).unwrap();
            prop_assert!((psi.norm() - 1.0).abs() < 1e-9);

            // branch confinement: start from a single branch
            let g_only = propagate_state(&h, &jumps, &basis.basis_vector(basis.eg_vac()), t, &cfg()).unwrap();
            let leak: f64 = basis.s_branch().chain(basis.dark()).map(|i| g_only[i].norm_sqr()).sum();
            prop_assert!(leak < 1e-24);
        }

        #[test]
        fn lindblad_preserves_trace_and_fills_dark_sector(
            p in params_strategy(3),
            rate in 0.001f64..0.1,
        ) {
            let p = p.with_losses(rate, rate / 2.0, rate * 1.5);
            let (basis, h, jumps) = setup(&p);
            let mut psi0 = basis.basis_vector(basis.eg_vac()) + basis.basis_vector(basis.es_vac());
            psi0[0] = C64::new(1.0, 0.0);
            psi0 /= C64::new(psi0.norm(), 0.0);
            let rho0 = &psi0 * psi0.adjoint();
            let times: Vec<f64> = (0..=8).map(|k| 0.6 * k as f64).collect();
            let series = propagate_density_series(&h, &jumps, &rho0, &times, &cfg()).unwrap();
            let mut last_dark = 0.0;
            for rho in &series {
                prop_assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-9);
                prop_assert!((rho - rho.adjoint()).camax() < 1e-9);
                let dark = rho[(0, 0)].re + rho[(1, 1)].re;
                prop_assert!(dark >= last_dark - 1e-12);
                last_dark = dark;
            }
            prop_assert!(oracle::min_eigenvalue(series.last().unwrap()) > -1e-7);
        }
    }
}
