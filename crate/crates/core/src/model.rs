//! Hamiltonian, loss channels and fibre spectra.
//!
//! All quantities are in units of the reference coupling `g`; times are in
//! units of `1/g`. The Hamiltonian is written in the frame rotating at the
//! (common) cavity and atomic frequency, so only the fibre detunings appear
//! on the diagonal:
//!
//! ```text
//! H = sum_j dw_j b_j^+ b_j
//!   + sum_k (g_k a_k |e><g|_k + h.c.)
//!   + sum_{k,j} (v_k b_j a_k^+ + h.c.)
//! ```
//!
//! Losses use the factor-two Lindblad convention
//! `L[o] rho = 2 o rho o^+ - o^+ o rho - rho o^+ o`, so a lone excitation
//! subject to rate `r` decays in population as `exp(-2 r t)`.

use std::fmt;
use std::str::FromStr;

use crate::hilbert::{Atom2, AtomicLabel, Basis, BasisState, FieldLabel, Mode};
use crate::operator::SparseMatrix;
use crate::{Error, Result, C64};

/// Couplings, fibre detunings and loss rates, all in units of `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub g1: C64,
    pub g2: C64,
    pub v1: C64,
    pub v2: C64,
    pub detunings: Vec<f64>,
    pub kappa: f64,
    pub gamma_at: f64,
    pub gamma_fibre: f64,
}

impl ModelParams {
    /// Reference normalisation `g1 = v1 = 1` with the second cavity offset by
    /// `g2 = 1 + delta_g`, `v2 = 1 + delta_v`; lossless.
    pub fn from_offsets(delta_g: f64, delta_v: f64, detunings: Vec<f64>) -> Self {
        Self {
            g1: C64::new(1.0, 0.0),
            g2: C64::new(1.0 + delta_g, 0.0),
            v1: C64::new(1.0, 0.0),
            v2: C64::new(1.0 + delta_v, 0.0),
            detunings,
            kappa: 0.0,
            gamma_at: 0.0,
            gamma_fibre: 0.0,
        }
    }

    pub fn with_losses(mut self, kappa: f64, gamma_at: f64, gamma_fibre: f64) -> Self {
        self.kappa = kappa;
        self.gamma_at = gamma_at;
        self.gamma_fibre = gamma_fibre;
        self
    }

    pub fn n_fibre(&self) -> usize {
        self.detunings.len()
    }

    /// `(|g2| - g) / g`.
    pub fn delta_g(&self) -> f64 {
        self.g2.norm() - 1.0
    }

    /// `(|v2| - g) / g`.
    pub fn delta_v(&self) -> f64 {
        self.v2.norm() - 1.0
    }

    pub fn is_lossless(&self) -> bool {
        self.kappa == 0.0 && self.gamma_at == 0.0 && self.gamma_fibre == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.detunings.is_empty() {
            return Err(Error::config("at least one fibre detuning is required"));
        }
        if let Some(d) = self.detunings.iter().find(|d| !d.is_finite()) {
            return Err(Error::config(format!("non-finite fibre detuning {d}")));
        }
        for (name, c) in [("g1", self.g1), ("g2", self.g2), ("v1", self.v1), ("v2", self.v2)] {
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        for (name, r) in [("kappa", self.kappa), ("gamma", self.gamma_at), ("gamma_fibre", self.gamma_fibre)] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::config(format!("{name} must be a finite nonnegative rate, got {r}")));
            }
        }
        Ok(())
    }

    fn check_basis(&self, basis: &Basis) -> Result<()> {
        self.validate()?;
        if self.n_fibre() != basis.n_fibre() {
            return Err(Error::DimensionMismatch {
                context: "fibre detunings vs basis",
                expected: basis.n_fibre(),
                actual: self.n_fibre(),
            });
        }
        Ok(())
    }
}

fn idx(basis: &Basis, atomic: AtomicLabel, field: FieldLabel) -> usize {
    basis
        .index_of(&BasisState::new(atomic, field))
        .expect("state belongs to the single-excitation basis")
}

/// Sparse Hermitian Hamiltonian over `basis`.
pub fn build_hamiltonian(params: &ModelParams, basis: &Basis) -> Result<SparseMatrix> {
    params.check_basis(basis)?;
    let n = basis.n_fibre();
    let mut entries = Vec::with_capacity(8 * n + 8);
    let mut hop = |to: usize, from: usize, amp: C64| {
        entries.push((to, from, amp));
        entries.push((from, to, amp.conj()));
    };

    // photon background atom 2 sits in (g or s) while atom 1 is in g
    for bg in [AtomicLabel::GG, AtomicLabel::GS] {
        let cav1 = idx(basis, bg, FieldLabel::Photon(Mode::Cavity1));
        let cav2 = idx(basis, bg, FieldLabel::Photon(Mode::Cavity2));
        let excited1 = AtomicLabel::new(crate::hilbert::Atom1::E, bg.atom2);
        // g1 a1 |e><g|_1
        hop(idx(basis, excited1, FieldLabel::Vacuum), cav1, params.g1);
        if bg.atom2 == Atom2::G {
            // g2 a2 |e><g|_2; |s>_2 does not couple
            hop(idx(basis, AtomicLabel::GE, FieldLabel::Vacuum), cav2, params.g2);
        }
        for j in 0..n {
            let fibre = idx(basis, bg, FieldLabel::Photon(Mode::Fibre(j)));
            // v_k b_j a_k^+
            hop(cav1, fibre, params.v1);
            hop(cav2, fibre, params.v2);
        }
    }
    for bg in [AtomicLabel::GG, AtomicLabel::GS] {
        for (j, &dw) in params.detunings.iter().enumerate() {
            let fibre = idx(basis, bg, FieldLabel::Photon(Mode::Fibre(j)));
            entries.push((fibre, fibre, C64::new(dw, 0.0)));
        }
    }
    Ok(SparseMatrix::from_triplets(basis.dim(), entries))
}

/// Source of a loss channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpKind {
    Cavity1,
    Cavity2,
    Atom1,
    Atom2,
    Fibre(usize),
}

/// A lowering operator and its rate in the factor-two Lindblad form.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpOperator {
    pub kind: JumpKind,
    pub rate: f64,
    pub matrix: SparseMatrix,
}

impl JumpOperator {
    /// `rate * O^+ O`, the jump's contribution to the anti-Hermitian part of
    /// the effective Hamiltonian.
    pub fn decay_term(&self) -> SparseMatrix {
        self.matrix.adjoint().matmul(&self.matrix).scale(C64::new(self.rate, 0.0))
    }
}

/// Two cavity operators (rate `kappa`), two atomic operators (rate
/// `gamma_at`) and one operator per fibre mode (rate `gamma_fibre`), in that
/// order. Operators are returned even when their rate is zero.
pub fn build_jump_operators(params: &ModelParams, basis: &Basis) -> Result<Vec<JumpOperator>> {
    params.check_basis(basis)?;
    let one = C64::new(1.0, 0.0);
    let lower_photon = |mode: Mode| {
        let entries = [AtomicLabel::GG, AtomicLabel::GS]
            .into_iter()
            .map(|bg| (idx(basis, bg, FieldLabel::Vacuum), idx(basis, bg, FieldLabel::Photon(mode)), one))
            .collect();
        SparseMatrix::from_triplets(basis.dim(), entries)
    };
    let atom1 = SparseMatrix::from_triplets(
        basis.dim(),
        vec![
            (idx(basis, AtomicLabel::GG, FieldLabel::Vacuum), idx(basis, AtomicLabel::EG, FieldLabel::Vacuum), one),
            (idx(basis, AtomicLabel::GS, FieldLabel::Vacuum), idx(basis, AtomicLabel::ES, FieldLabel::Vacuum), one),
        ],
    );
    let atom2 = SparseMatrix::from_triplets(
        basis.dim(),
        vec![(idx(basis, AtomicLabel::GG, FieldLabel::Vacuum), idx(basis, AtomicLabel::GE, FieldLabel::Vacuum), one)],
    );

    let mut jumps = vec![
        JumpOperator { kind: JumpKind::Cavity1, rate: params.kappa, matrix: lower_photon(Mode::Cavity1) },
        JumpOperator { kind: JumpKind::Cavity2, rate: params.kappa, matrix: lower_photon(Mode::Cavity2) },
        JumpOperator { kind: JumpKind::Atom1, rate: params.gamma_at, matrix: atom1 },
        JumpOperator { kind: JumpKind::Atom2, rate: params.gamma_at, matrix: atom2 },
    ];
    jumps.extend((0..basis.n_fibre()).map(|j| JumpOperator {
        kind: JumpKind::Fibre(j),
        rate: params.gamma_fibre,
        matrix: lower_photon(Mode::Fibre(j)),
    }));
    Ok(jumps)
}

/// Shape of a fibre spectrum. All constructors produce ascending lists.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumPreset {
    /// `{-delta, +delta}`.
    TwoModes(f64),
    /// `count` evenly spaced values over `[lo, hi]`, endpoints inclusive.
    Band { lo: f64, hi: f64, count: usize },
    /// A band over `[lo, hi]` together with its mirror image over `[-hi, -lo]`.
    BandPair { lo: f64, hi: f64, count_per_side: usize },
    Explicit(Vec<f64>),
}

impl SpectrumPreset {
    pub fn detunings(&self) -> Vec<f64> {
        let mut out = match self {
            SpectrumPreset::TwoModes(delta) => vec![-delta.abs(), delta.abs()],
            SpectrumPreset::Band { lo, hi, count } => band(*lo, *hi, *count),
            SpectrumPreset::BandPair { lo, hi, count_per_side } => {
                let side = band(*lo, *hi, *count_per_side);
                side.iter().map(|x| -x).chain(side.iter().copied()).collect()
            }
            SpectrumPreset::Explicit(v) => v.clone(),
        };
        out.sort_by(f64::total_cmp);
        out
    }
}

fn band(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| {
                let s = k as f64 / (count - 1) as f64;
                lo * (1.0 - s) + hi * s
            })
            .collect(),
    }
}

/// `k * 3 / 100` for each `k`, i.e. multiples of `0.03` rounded once.
fn multiples_of_003(ks: impl Iterator<Item = i32>) -> Vec<f64> {
    ks.map(|k| f64::from(3 * k) / 100.0).collect()
}

/// Arithmetic sequence of `count` values with the given spacing, centred on
/// `shift`.
fn centred(count: usize, spacing: f64, shift: f64) -> Vec<f64> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count).map(|k| shift + spacing * (k as f64 - mid)).collect()
}

/// Named fibre spectra of the reproduced figures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preset {
    /// Two modes at `+-delta`.
    Fig3 { delta: f64 },
    /// 31 modes, `-0.45..=0.45` in steps of `0.03`.
    Fig5a,
    /// [`Preset::Fig5a`] without the resonant mode.
    Fig5b,
    /// [`Preset::Fig6b`] plus the resonant mode.
    Fig6a,
    /// 16 modes per side at `0.45..=0.90` in steps of `0.03`, mirrored.
    Fig6b,
    /// 16 modes at `0.45..=0.90` in steps of `0.03`, one side only.
    Fig8,
    /// 8 modes per side spanning `[0.45, 0.90]`, mirrored.
    Fig8Split,
    /// Spacing `0.2` centred on `shift`.
    Fig9a { shift: f64, modes: usize },
    /// Spacing `0.9` centred on `shift`.
    Fig9b { shift: f64, modes: usize },
    /// 100 modes evenly spanning `[-0.45, 0.45]`.
    Fig10a,
    /// Multiples of `0.03` in `[-1.5, 1.5]` without zero (100 modes).
    Fig10b,
}

impl Preset {
    pub const IDS: [&'static str; 11] =
        ["fig3", "fig5a", "fig5b", "fig6a", "fig6b", "fig8", "fig8-split", "fig9a", "fig9b", "fig10a", "fig10b"];

    /// Parses a preset id; `delta` feeds `fig3`, `shift`/`modes` feed the
    /// `fig9` families. Missing parameters fall back to `0.1`, `0.0` and `2`.
    pub fn from_id(id: &str, delta: Option<f64>, shift: Option<f64>, modes: Option<usize>) -> Result<Self> {
        let shift = shift.unwrap_or(0.0);
        let modes = modes.unwrap_or(2);
        Ok(match id {
            "fig3" => Preset::Fig3 { delta: delta.unwrap_or(0.1) },
            "fig5a" => Preset::Fig5a,
            "fig5b" => Preset::Fig5b,
            "fig6a" => Preset::Fig6a,
            "fig6b" => Preset::Fig6b,
            "fig8" => Preset::Fig8,
            "fig8-split" => Preset::Fig8Split,
            "fig9a" => Preset::Fig9a { shift, modes },
            "fig9b" => Preset::Fig9b { shift, modes },
            "fig10a" => Preset::Fig10a,
            "fig10b" => Preset::Fig10b,
            other => return Err(Error::UnknownPreset(other.to_string())),
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Preset::Fig3 { .. } => "fig3",
            Preset::Fig5a => "fig5a",
            Preset::Fig5b => "fig5b",
            Preset::Fig6a => "fig6a",
            Preset::Fig6b => "fig6b",
            Preset::Fig8 => "fig8",
            Preset::Fig8Split => "fig8-split",
            Preset::Fig9a { .. } => "fig9a",
            Preset::Fig9b { .. } => "fig9b",
            Preset::Fig10a => "fig10a",
            Preset::Fig10b => "fig10b",
        }
    }

    pub fn spectrum(&self) -> SpectrumPreset {
        match *self {
            Preset::Fig3 { delta } => SpectrumPreset::TwoModes(delta),
            Preset::Fig5a => SpectrumPreset::Explicit(multiples_of_003(-15..=15)),
            Preset::Fig5b => SpectrumPreset::Explicit(multiples_of_003((-15..=15).filter(|&k| k != 0))),
            Preset::Fig6a => SpectrumPreset::Explicit(multiples_of_003(
                (-30..=-15).chain(std::iter::once(0)).chain(15..=30),
            )),
            Preset::Fig6b => SpectrumPreset::Explicit(multiples_of_003((-30..=-15).chain(15..=30))),
            Preset::Fig8 => SpectrumPreset::Explicit(multiples_of_003(15..=30)),
            Preset::Fig8Split => SpectrumPreset::BandPair { lo: 0.45, hi: 0.90, count_per_side: 8 },
            Preset::Fig9a { shift, modes } => SpectrumPreset::Explicit(centred(modes, 0.2, shift)),
            Preset::Fig9b { shift, modes } => SpectrumPreset::Explicit(centred(modes, 0.9, shift)),
            Preset::Fig10a => SpectrumPreset::Band { lo: -0.45, hi: 0.45, count: 100 },
            Preset::Fig10b => SpectrumPreset::Explicit(multiples_of_003((-50..=50).filter(|&k| k != 0))),
        }
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.spectrum().detunings()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Fig3 { delta } => write!(f, "fig3(delta={delta})"),
            Preset::Fig9a { shift, modes } | Preset::Fig9b { shift, modes } => {
                write!(f, "{}(shift={shift}, modes={modes})", self.id())
            }
            _ => f.write_str(self.id()),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::from_id(s, None, None, None)
    }
}

/// Detunings of a named preset with default parameters.
pub fn spectrum_preset(id: &str) -> Result<Vec<f64>> {
    Ok(id.parse::<Preset>()?.detunings())
}

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Fibre length (metres) whose free spectral range `c pi / l` equals
/// `spacing_in_g * g_hz`.
pub fn fibre_length_for_spacing(spacing_in_g: f64, g_hz: f64) -> Result<f64> {
    if !(spacing_in_g > 0.0 && g_hz > 0.0) {
        return Err(Error::config(format!(
            "mode spacing and coupling must be positive (got {spacing_in_g}, {g_hz})"
        )));
    }
    Ok(SPEED_OF_LIGHT * std::f64::consts::PI / (spacing_in_g * g_hz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::build_basis;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn two_mode_structure() {
        let basis = build_basis(2).unwrap();
        let p = ModelParams::from_offsets(0.0, 0.0, vec![-0.1, 0.1]);
        let h = build_hamiltonian(&p, &basis).unwrap();
        // fibre diagonals in both branches
        assert_eq!(h.get(4, 4), c(-0.1));
        assert_eq!(h.get(5, 5), c(0.1));
        assert_eq!(h.get(10, 10), c(-0.1));
        assert_eq!(h.get(11, 11), c(0.1));
        // (e,s;vac) <-> (g,s;a1)
        assert_eq!(h.get(basis.es_vac(), basis.es_vac() + 1), c(1.0));
        // (g,e;vac) <-> (g,g;a2)
        assert_eq!(h.get(7, 6), c(1.0));
        // (g,s;a2) is a dead end: no atom-2 coupling in the s-branch
        assert_eq!(h.row(12).count(), 2);
        assert!(h.is_hermitian(1e-15));
    }

    #[test]
    fn empty_interaction() {
        let basis = build_basis(3).unwrap();
        let mut p = ModelParams::from_offsets(0.0, 0.0, vec![0.0; 3]);
        p.g1 = c(0.0);
        p.g2 = c(0.0);
        p.v1 = c(0.0);
        p.v2 = c(0.0);
        assert_eq!(build_hamiltonian(&p, &basis).unwrap().nnz(), 0);
    }

    #[test]
    fn complex_v2_is_a_gauge_phase() {
        let basis = build_basis(2).unwrap();
        let p = ModelParams::from_offsets(0.3, 0.0, vec![-0.2, 0.25]);
        let mut q = p.clone();
        let phase = C64::from_polar(1.0, 0.7);
        q.v2 = phase;
        let h = build_hamiltonian(&p, &basis).unwrap().to_dense();
        let hq = build_hamiltonian(&q, &basis).unwrap().to_dense();
        assert!((&hq - hq.adjoint()).norm() < 1e-15);

        // eigenvalue oracle
        let mut ev = h.clone().symmetric_eigenvalues().as_slice().to_vec();
        let mut evq = hq.clone().symmetric_eigenvalues().as_slice().to_vec();
        ev.sort_by(f64::total_cmp);
        evq.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&evq) {
            assert!((a - b).abs() < 1e-12);
        }

        // explicit gauge: multiply cavity-2 and atom-2 states by the phase
        let n = basis.n_fibre();
        let mut u = DVector::from_element(basis.dim(), c(1.0));
        for i in [n + 4, n + 5, 2 * n + 8] {
            u[i] = phase;
        }
        let u = DMatrix::from_diagonal(&u);
        assert!((&u.adjoint() * &hq * &u - h).norm() < 1e-14);
    }

    #[test]
    fn jump_operators() {
        let basis = build_basis(2).unwrap();
        let p = ModelParams::from_offsets(0.0, 0.0, vec![-0.1, 0.1]);
        let jumps = build_jump_operators(&p, &basis).unwrap();
        assert_eq!(jumps.len(), 6);
        assert!(jumps.iter().all(|j| j.rate == 0.0));

        let atom1 = &jumps[2].matrix;
        assert_eq!(atom1.get(0, basis.eg_vac()), c(1.0));
        assert_eq!(atom1.get(1, basis.es_vac()), c(1.0));
        assert_eq!(atom1.nnz(), 2);
        // atom 2's lowering operator annihilates |s>_2
        let atom2 = &jumps[3].matrix;
        assert_eq!(atom2.nnz(), 1);
        assert_eq!(atom2.get(0, 7), c(1.0));

        for j in &jumps {
            assert_eq!(j.matrix.matmul(&j.matrix).nnz(), 0);
            for (r, c, _) in j.matrix.iter() {
                assert!(r < 2, "jumps land in the dark sector");
                assert!(c >= 2, "jumps annihilate the dark sector");
            }
        }
    }

    #[test]
    fn mismatched_detunings() {
        let basis = build_basis(3).unwrap();
        let p = ModelParams::from_offsets(0.0, 0.0, vec![0.1, 0.2]);
        assert!(matches!(build_hamiltonian(&p, &basis), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(build_jump_operators(&p, &basis), Err(Error::DimensionMismatch { .. })));
        let p = ModelParams::from_offsets(0.0, 0.0, vec![0.1; 3]).with_losses(-1e-3, 0.0, 0.0);
        assert!(matches!(build_hamiltonian(&p, &basis), Err(Error::Config(_))));
    }

    #[test]
    fn presets() {
        let f5a = spectrum_preset("fig5a").unwrap();
        assert_eq!(f5a.len(), 31);
        assert!(f5a.contains(&0.0));
        assert_eq!(f5a[0], -0.45);
        assert_eq!(f5a[30], 0.45);

        let f5b = spectrum_preset("fig5b").unwrap();
        assert_eq!(f5b.len(), 30);
        assert!(!f5b.contains(&0.0));

        let f6b = spectrum_preset("fig6b").unwrap();
        assert_eq!(f6b.len(), 32);
        assert_eq!(f6b.iter().filter(|&&x| x > 0.0).count(), 16);
        assert_eq!(f6b[31], 0.9);
        assert_eq!(f6b[16], 0.45);
        let f6a = spectrum_preset("fig6a").unwrap();
        assert_eq!(f6a.len(), 33);
        assert!(f6b.iter().all(|x| f6a.contains(x)));

        let f8 = spectrum_preset("fig8").unwrap();
        assert_eq!(f8.len(), 16);
        assert_eq!((f8[0], f8[15]), (0.45, 0.9));
        let f8s = spectrum_preset("fig8-split").unwrap();
        assert_eq!(f8s.len(), 16);
        assert_eq!((f8s[0], f8s[7], f8s[8], f8s[15]), (-0.9, -0.45, 0.45, 0.9));
        assert_relative_eq!(f8s[9] - f8s[8], 0.45 / 7.0, epsilon = 1e-15);

        let f10a = spectrum_preset("fig10a").unwrap();
        assert_eq!(f10a.len(), 100);
        assert_eq!((f10a[0], f10a[99]), (-0.45, 0.45));
        assert!(!f10a.contains(&0.0));

        let f10b = spectrum_preset("fig10b").unwrap();
        assert_eq!(f10b.len(), 100);
        assert!(!f10b.contains(&0.0));
        assert!(f5b.iter().all(|x| f10b.contains(x)));
        assert_eq!((f10b[0], f10b[99]), (-1.5, 1.5));

        assert_eq!(Preset::Fig3 { delta: 0.45 }.detunings(), vec![-0.45, 0.45]);
        let f9 = Preset::Fig9a { shift: 0.2, modes: 30 }.detunings();
        assert_eq!(f9.len(), 30);
        assert_relative_eq!(f9.iter().sum::<f64>() / 30.0, 0.2, epsilon = 1e-12);
        assert_relative_eq!(f9[1] - f9[0], 0.2, epsilon = 1e-12);
        assert_eq!(Preset::Fig9b { shift: 0.0, modes: 2 }.detunings(), vec![-0.45, 0.45]);

        assert!(matches!(spectrum_preset("fig11"), Err(Error::UnknownPreset(_))));
        for id in Preset::IDS {
            let d = spectrum_preset(id).unwrap();
            assert!(d.windows(2).all(|w| w[0] <= w[1]), "{id} not sorted");
        }
    }

    #[test]
    fn fibre_lengths() {
        let l = fibre_length_for_spacing(0.9, 1e9).unwrap();
        assert!((l - 1.05).abs() < 0.01, "{l}");
        let l = fibre_length_for_spacing(0.03, 1e9).unwrap();
        assert!((l - 31.4).abs() < 0.05, "{l}");
        let a = fibre_length_for_spacing(0.2, 2e9).unwrap();
        let b = fibre_length_for_spacing(0.4, 2e9).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-15);
        assert!(fibre_length_for_spacing(0.0, 1e9).is_err());
        assert!(fibre_length_for_spacing(0.1, -1.0).is_err());
    }

    fn params_strategy() -> impl Strategy<Value = ModelParams> {
        (
            prop::collection::vec(-1.5f64..1.5, 1..6),
            -0.5f64..2.0,
            -0.5f64..2.0,
            0.0f64..0.2,
            0.0f64..0.2,
            0.0f64..0.2,
            0.0f64..std::f64::consts::TAU,
        )
            .prop_map(|(det, dg, dv, k, ga, gf, phase)| {
                let mut p = ModelParams::from_offsets(dg, dv, det).with_losses(k, ga, gf);
                p.v2 *= C64::from_polar(1.0, phase);
                p
            })
    }

    proptest! {
        #[test]
        fn hamiltonian_is_hermitian_and_block_diagonal(p in params_strategy()) {
            let basis = build_basis(p.n_fibre()).unwrap();
            let h = build_hamiltonian(&p, &basis).unwrap();
            prop_assert!(h.is_hermitian(1e-15));
            for (r, c, _) in h.iter() {
                prop_assert_eq!(basis.branch_of(r), basis.branch_of(c));
                prop_assert_eq!(basis.state(r).excitations(), basis.state(c).excitations());
            }
        }

        #[test]
        fn detuning_shift_adds_number_operator(p in params_strategy(), shift in -1.0f64..1.0) {
            let basis = build_basis(p.n_fibre()).unwrap();
            let mut q = p.clone();
            q.detunings.iter_mut().for_each(|d| *d += shift);
            let diff = build_hamiltonian(&q, &basis).unwrap().to_dense()
                - build_hamiltonian(&p, &basis).unwrap().to_dense();
            for i in 0..basis.dim() {
                for j in 0..basis.dim() {
                    let expected = match basis.state(i).field {
                        FieldLabel::Photon(Mode::Fibre(k)) if i == j => q.detunings[k] - p.detunings[k],
                        _ => 0.0,
                    };
                    if let FieldLabel::Photon(Mode::Fibre(_)) = basis.state(i).field {
                        if i == j {
                            prop_assert!((expected - shift).abs() < 1e-15);
                        }
                    }
                    prop_assert_eq!(diff[(i, j)], c(expected));
                }
            }
        }

        #[test]
        fn dissipator_preserves_trace(p in params_strategy(), seed in prop::collection::vec(-1.0f64..1.0, 11)) {
            let basis = build_basis(p.n_fibre()).unwrap();
            let d = basis.dim();
            let h = build_hamiltonian(&p, &basis).unwrap().to_dense();
            let jumps = build_jump_operators(&p, &basis).unwrap();
            let a = DMatrix::from_fn(d, d, |i, j| C64::new(seed[(i + 2 * j) % 11], seed[(3 * i + j) % 11]));
            let rho = &a * a.adjoint();
            let mut rhs = (&h * &rho - &rho * &h) * C64::new(0.0, -1.0);
            for jump in &jumps {
                let o = jump.matrix.to_dense();
                let od = o.adjoint();
                rhs += (&o * &rho * &od * c(2.0) - &od * &o * &rho - &rho * &od * &o) * c(jump.rate);
            }
            prop_assert!(rhs.trace().norm() < 1e-12);
        }
    }
}
