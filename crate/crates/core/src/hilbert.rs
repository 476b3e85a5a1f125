//! Truncated Hilbert space of two atoms, two cavities and `N` fibre modes
//! holding at most one excitation.
//!
//! Atom 1 has levels `g, e`; atom 2 has `g, s, e`, where `s` is a spectator
//! ground state that never couples to anything. With one excitation at most,
//! the space splits into a two-state dark sector (no excitation), a
//! "g-branch" where atom 2 sits in `g` and can absorb the photon, and an
//! "s-branch" where atom 2 sits in `s` and the photon bounces between the
//! cavities without being absorbed on the far side.
//!
//! Canonical ordering, for `N` fibre modes (`D = 2N + 9`):
//!
//! ```text
//! 0            (g,g; vac)
//! 1            (g,s; vac)
//! 2            (e,g; vac)        \
//! 3            (g,g; a1)         |
//! 4 ..= N+3    (g,g; b_j)        |  g-branch, N + 4 states
//! N+4          (g,g; a2)         |
//! N+5          (g,e; vac)        /
//! N+6          (e,s; vac)        \
//! N+7          (g,s; a1)         |  s-branch, N + 3 states
//! N+8 ..= 2N+7 (g,s; b_j)        |
//! 2N+8         (g,s; a2)         /
//! ```

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, Matrix6};

use crate::{Error, Result, C64};

/// Number of atomic labels kept in the reduced state, including the
/// never-populated `(e,e)`.
pub const ATOMIC_DIM: usize = 6;

/// Reduced two-atom density matrix over [`AtomicLabel::ALL`].
pub type AtomicDensity = Matrix6<C64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Atom1 {
    G,
    E,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Atom2 {
    G,
    S,
    E,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AtomicLabel {
    pub atom1: Atom1,
    pub atom2: Atom2,
}

impl AtomicLabel {
    pub const GG: Self = Self::new(Atom1::G, Atom2::G);
    pub const GS: Self = Self::new(Atom1::G, Atom2::S);
    pub const EG: Self = Self::new(Atom1::E, Atom2::G);
    pub const ES: Self = Self::new(Atom1::E, Atom2::S);
    pub const GE: Self = Self::new(Atom1::G, Atom2::E);
    pub const EE: Self = Self::new(Atom1::E, Atom2::E);

    /// Row order of [`AtomicDensity`].
    pub const ALL: [Self; ATOMIC_DIM] = [Self::GG, Self::GS, Self::EG, Self::ES, Self::GE, Self::EE];

    pub const fn new(atom1: Atom1, atom2: Atom2) -> Self {
        Self { atom1, atom2 }
    }

    pub fn index(self) -> usize {
        match (self.atom1, self.atom2) {
            (Atom1::G, Atom2::G) => 0,
            (Atom1::G, Atom2::S) => 1,
            (Atom1::E, Atom2::G) => 2,
            (Atom1::E, Atom2::S) => 3,
            (Atom1::G, Atom2::E) => 4,
            (Atom1::E, Atom2::E) => 5,
        }
    }

    pub fn excitations(self) -> u8 {
        u8::from(self.atom1 == Atom1::E) + u8::from(self.atom2 == Atom2::E)
    }
}

/// A single photon's location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Cavity1,
    /// Fibre mode, zero-based.
    Fibre(usize),
    Cavity2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldLabel {
    Vacuum,
    Photon(Mode),
}

impl FieldLabel {
    pub fn photons(self) -> u8 {
        match self {
            FieldLabel::Vacuum => 0,
            FieldLabel::Photon(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub atomic: AtomicLabel,
    pub field: FieldLabel,
}

impl BasisState {
    pub const fn new(atomic: AtomicLabel, field: FieldLabel) -> Self {
        Self { atomic, field }
    }

    pub fn excitations(self) -> u8 {
        self.atomic.excitations() + self.field.photons()
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a1 = match self.atomic.atom1 {
            Atom1::G => 'g',
            Atom1::E => 'e',
        };
        let a2 = match self.atomic.atom2 {
            Atom2::G => 'g',
            Atom2::S => 's',
            Atom2::E => 'e',
        };
        match self.field {
            FieldLabel::Vacuum => write!(f, "({a1},{a2}; vac)"),
            FieldLabel::Photon(Mode::Cavity1) => write!(f, "({a1},{a2}; a1)"),
            FieldLabel::Photon(Mode::Cavity2) => write!(f, "({a1},{a2}; a2)"),
            FieldLabel::Photon(Mode::Fibre(j)) => write!(f, "({a1},{a2}; b{})", j + 1),
        }
    }
}

/// Which dynamically closed block a basis state belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Dark,
    G,
    S,
}

/// The ordered basis. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    n_fibre: usize,
    states: Vec<BasisState>,
    field_groups: Vec<Vec<usize>>,
}

impl Basis {
    pub fn new(n_fibre: usize) -> Result<Self> {
        if n_fibre == 0 {
            return Err(Error::config("at least one fibre mode is required"));
        }
        let mut states = Vec::with_capacity(2 * n_fibre + 9);
        states.push(BasisState::new(AtomicLabel::GG, FieldLabel::Vacuum));
        states.push(BasisState::new(AtomicLabel::GS, FieldLabel::Vacuum));

        states.push(BasisState::new(AtomicLabel::EG, FieldLabel::Vacuum));
        states.push(BasisState::new(AtomicLabel::GG, FieldLabel::Photon(Mode::Cavity1)));
        states.extend(
            (0..n_fibre).map(|j| BasisState::new(AtomicLabel::GG, FieldLabel::Photon(Mode::Fibre(j)))),
        );
        states.push(BasisState::new(AtomicLabel::GG, FieldLabel::Photon(Mode::Cavity2)));
        states.push(BasisState::new(AtomicLabel::GE, FieldLabel::Vacuum));

        states.push(BasisState::new(AtomicLabel::ES, FieldLabel::Vacuum));
        states.push(BasisState::new(AtomicLabel::GS, FieldLabel::Photon(Mode::Cavity1)));
        states.extend(
            (0..n_fibre).map(|j| BasisState::new(AtomicLabel::GS, FieldLabel::Photon(Mode::Fibre(j)))),
        );
        states.push(BasisState::new(AtomicLabel::GS, FieldLabel::Photon(Mode::Cavity2)));

        debug_assert_eq!(states.len(), 2 * n_fibre + 9);
        let field_groups = group_by_field(&states);
        Ok(Self { n_fibre, states, field_groups })
    }

    pub fn n_fibre(&self) -> usize {
        self.n_fibre
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> BasisState {
        self.states[index]
    }

    pub fn index_of(&self, state: &BasisState) -> Option<usize> {
        let n = self.n_fibre;
        let fibre = |j: usize| (j < n).then_some(j);
        use FieldLabel::{Photon, Vacuum};
        match (state.atomic, state.field) {
            (AtomicLabel::GG, Vacuum) => Some(0),
            (AtomicLabel::GS, Vacuum) => Some(1),
            (AtomicLabel::EG, Vacuum) => Some(2),
            (AtomicLabel::GG, Photon(Mode::Cavity1)) => Some(3),
            (AtomicLabel::GG, Photon(Mode::Fibre(j))) => fibre(j).map(|j| 4 + j),
            (AtomicLabel::GG, Photon(Mode::Cavity2)) => Some(n + 4),
            (AtomicLabel::GE, Vacuum) => Some(n + 5),
            (AtomicLabel::ES, Vacuum) => Some(n + 6),
            (AtomicLabel::GS, Photon(Mode::Cavity1)) => Some(n + 7),
            (AtomicLabel::GS, Photon(Mode::Fibre(j))) => fibre(j).map(|j| n + 8 + j),
            (AtomicLabel::GS, Photon(Mode::Cavity2)) => Some(2 * n + 8),
            _ => None,
        }
    }

    pub fn branch_of(&self, index: usize) -> Branch {
        if index < 2 {
            Branch::Dark
        } else if self.g_branch().contains(&index) {
            Branch::G
        } else {
            Branch::S
        }
    }

    pub fn g_branch(&self) -> Range<usize> {
        2..self.n_fibre + 6
    }

    pub fn s_branch(&self) -> Range<usize> {
        self.n_fibre + 6..2 * self.n_fibre + 9
    }

    pub fn dark(&self) -> Range<usize> {
        0..2
    }

    /// Index of `|e,g; vac>`, head of the g-branch.
    pub fn eg_vac(&self) -> usize {
        2
    }

    /// Index of `|e,s; vac>`, head of the s-branch.
    pub fn es_vac(&self) -> usize {
        self.n_fibre + 6
    }

    pub fn basis_vector(&self, index: usize) -> DVector<C64> {
        let mut v = DVector::zeros(self.dim());
        v[index] = C64::new(1.0, 0.0);
        v
    }

    /// Groups of basis indices sharing the same field label. Only pairs
    /// inside a group survive the partial trace over the field.
    pub(crate) fn field_groups(&self) -> &[Vec<usize>] {
        &self.field_groups
    }

    fn atomic_index(&self, i: usize) -> usize {
        self.states[i].atomic.index()
    }

    /// Partial trace over the field of the dyad `|u><w|`.
    pub fn partial_trace_outer(&self, u: &DVector<C64>, w: &DVector<C64>) -> Result<AtomicDensity> {
        check_dim("partial trace (ket)", self.dim(), u.len())?;
        check_dim("partial trace (bra)", self.dim(), w.len())?;
        let mut out = AtomicDensity::zeros();
        for group in self.field_groups() {
            for &i in group {
                if u[i] == C64::default() {
                    continue;
                }
                for &j in group {
                    out[(self.atomic_index(i), self.atomic_index(j))] += u[i] * w[j].conj();
                }
            }
        }
        Ok(out)
    }
}

fn group_by_field(states: &[BasisState]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(FieldLabel, Vec<usize>)> = Vec::new();
    for (i, s) in states.iter().enumerate() {
        match groups.iter_mut().find(|(f, _)| *f == s.field) {
            Some((_, g)) => g.push(i),
            None => groups.push((s.field, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, actual })
    }
}

pub fn build_basis(n_fibre: usize) -> Result<Basis> {
    Basis::new(n_fibre)
}

/// Traces out all field modes, leaving a 6x6 matrix over [`AtomicLabel::ALL`].
pub fn partial_trace_field(rho: &DMatrix<C64>, basis: &Basis) -> Result<AtomicDensity> {
    check_dim("partial trace (rows)", basis.dim(), rho.nrows())?;
    check_dim("partial trace (columns)", basis.dim(), rho.ncols())?;
    let mut out = AtomicDensity::zeros();
    for group in basis.field_groups() {
        for &i in group {
            for &j in group {
                out[(basis.atomic_index(i), basis.atomic_index(j))] += rho[(i, j)];
            }
        }
    }
    Ok(out)
}
