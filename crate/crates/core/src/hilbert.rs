//! Truncated Hilbert spaces, the operators the criteria are built from, and
//! exact conditioning of bipartite states on measurement outcomes.
//!
//! Units follow `x = a + a†`, `p = i(a† - a)`, so `[x, p] = 2i` and the vacuum
//! has unit quadrature variance. Bipartite spaces are ordered A first: a basis
//! index is `a * dim_b + b`.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Maximum anti-Hermitian residue accepted for an [`Observable`], relative to
/// `max(1, max|M|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const NORM_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
/// Default probability below which a conditioning branch is treated as empty.
pub const DEFAULT_ZERO_PROB: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Fock,
    Spin,
}

impl SpaceKind {
    fn name(self) -> &'static str {
        match self {
            SpaceKind::Fock => "fock",
            SpaceKind::Spin => "spin",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub fn name(self) -> &'static str {
        match self {
            Party::A => "A",
            Party::B => "B",
        }
    }
}

/// Shape of a (possibly bipartite) tensor-product space.
///
/// For Fock spaces each entry of `mode_dims` is `n_max + 1`; for spin spaces it
/// is `2j + 1`. The first `modes_a` modes belong to subsystem A, the rest to B.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SpaceDescriptor {
    kind: SpaceKind,
    mode_dims: Vec<usize>,
    modes_a: usize,
}

impl SpaceDescriptor {
    pub fn new(kind: SpaceKind, mode_dims: Vec<usize>, modes_a: usize) -> Result<Self> {
        if mode_dims.is_empty() {
            return Err(Error::InvalidArgument("a space needs at least one mode".into()));
        }
        if let Some(d) = mode_dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidArgument(format!(
                "every mode dimension must be at least 2, got {d}"
            )));
        }
        if modes_a == 0 || modes_a > mode_dims.len() {
            return Err(Error::InvalidArgument(format!(
                "subsystem A must own between 1 and {} modes, got {modes_a}",
                mode_dims.len()
            )));
        }
        Ok(Self { kind, mode_dims, modes_a })
    }

    /// Single-party Fock space with the given per-mode dimensions.
    pub fn fock(mode_dims: &[usize]) -> Result<Self> {
        Self::new(SpaceKind::Fock, mode_dims.to_vec(), mode_dims.len())
    }

    /// Single-mode Fock space holding photon numbers `0..=cutoff`.
    pub fn fock_mode(cutoff: usize) -> Result<Self> {
        Self::fock(&[cutoff + 1])
    }

    pub fn fock_bipartite(a: &[usize], b: &[usize]) -> Result<Self> {
        let mut dims = a.to_vec();
        dims.extend_from_slice(b);
        Self::new(SpaceKind::Fock, dims, a.len())
    }

    pub fn spin(j: f64) -> Result<Self> {
        Self::new(SpaceKind::Spin, vec![spin_dim(j)?], 1)
    }

    pub fn spin_pair(ja: f64, jb: f64) -> Result<Self> {
        Self::new(SpaceKind::Spin, vec![spin_dim(ja)?, spin_dim(jb)?], 1)
    }

    /// `a ⊗ b` as a bipartite space; both factors must be single-party.
    pub fn tensor(a: &Self, b: &Self) -> Result<Self> {
        if a.is_bipartite() || b.is_bipartite() {
            return Err(Error::InvalidArgument(
                "tensor factors must be single-party spaces".into(),
            ));
        }
        if a.kind != b.kind {
            return Err(Error::InvalidArgument(format!(
                "cannot combine a {} space with a {} space",
                a.kind.name(),
                b.kind.name()
            )));
        }
        let mut dims = a.mode_dims.clone();
        dims.extend_from_slice(&b.mode_dims);
        Self::new(a.kind, dims, a.mode_dims.len())
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn modes(&self) -> usize {
        self.mode_dims.len()
    }

    pub fn dim(&self) -> usize {
        self.mode_dims.iter().product()
    }

    pub fn is_bipartite(&self) -> bool {
        self.modes_a < self.mode_dims.len()
    }

    /// Photon-number cutoffs per mode (Fock spaces only).
    pub fn cutoffs(&self) -> Option<Vec<usize>> {
        (self.kind == SpaceKind::Fock).then(|| self.mode_dims.iter().map(|d| d - 1).collect())
    }

    pub fn party_dim(&self, party: Party) -> usize {
        self.party_range(party).map(|m| self.mode_dims[m]).product()
    }

    fn party_range(&self, party: Party) -> std::ops::Range<usize> {
        match party {
            Party::A => 0..self.modes_a,
            Party::B => self.modes_a..self.mode_dims.len(),
        }
    }

    /// The local space of one subsystem. A single-party space is its own A.
    pub fn party(&self, party: Party) -> Result<Self> {
        if party == Party::B && !self.is_bipartite() {
            return Err(Error::NotBipartite);
        }
        let dims = self.mode_dims[self.party_range(party)].to_vec();
        let n = dims.len();
        Self::new(self.kind, dims, n)
    }

    pub(crate) fn require_kind(&self, kind: SpaceKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongKind { expected: kind.name(), found: self.kind.name() });
        }
        Ok(())
    }

    pub(crate) fn require_same(&self, other: &Self) -> Result<()> {
        if self != other {
            return Err(Error::SpaceMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            });
        }
        Ok(())
    }

    /// Spin quantum number `j` of one spin mode.
    pub fn spin_j(&self, mode: usize) -> Result<f64> {
        self.require_kind(SpaceKind::Spin)?;
        let d = *self
            .mode_dims
            .get(mode)
            .ok_or(Error::InvalidMode { index: mode, modes: self.modes() })?;
        Ok((d as f64 - 1.0) / 2.0)
    }
}

impl fmt::Display for SpaceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        for (m, d) in self.mode_dims.iter().enumerate() {
            if m == self.modes_a {
                write!(f, " |")?;
            }
            write!(f, "[{d}]")?;
        }
        Ok(())
    }
}

fn spin_dim(j: f64) -> Result<usize> {
    let two_j = 2.0 * j;
    if !two_j.is_finite() || two_j < 1.0 || (two_j - two_j.round()).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "spin quantum number must be a positive half-integer, got {j}"
        )));
    }
    Ok(two_j.round() as usize + 1)
}

/// A square operator on a [`SpaceDescriptor`].
#[derive(Clone, Debug)]
pub struct LinearOperator {
    space: SpaceDescriptor,
    matrix: CMatrix,
    label: String,
}

impl LinearOperator {
    pub fn new(space: SpaceDescriptor, matrix: CMatrix, label: impl Into<String>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "operator is {}x{} but space {space} has dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { space, matrix, label: label.into() })
    }

    pub fn identity(space: &SpaceDescriptor) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::identity(d, d), label: "1".into() }
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
            label: format!("{}†", self.label),
        }
    }

    /// `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.space.require_same(&other.space)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix,
            label: format!("{}{}", self.label, other.label),
        })
    }

    /// The matrix commutator `[self, other]`, truncation effects included.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.space.require_same(&other.space)?;
        let m = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(Self {
            space: self.space.clone(),
            matrix: m,
            label: format!("[{},{}]", self.label, other.label),
        })
    }

    /// Lift a local operator on one subsystem of `full` to the whole space.
    pub fn embed(&self, full: &SpaceDescriptor, party: Party) -> Result<Self> {
        let local = full.party(party)?;
        local.require_same(&self.space)?;
        let matrix = match party {
            Party::A => {
                let id = CMatrix::identity(full.party_dim(Party::B), full.party_dim(Party::B));
                if full.is_bipartite() {
                    self.matrix.kronecker(&id)
                } else {
                    self.matrix.clone()
                }
            }
            Party::B => {
                let id = CMatrix::identity(full.party_dim(Party::A), full.party_dim(Party::A));
                id.kronecker(&self.matrix)
            }
        };
        Ok(Self { space: full.clone(), matrix, label: format!("{}_{}", self.label, party.name()) })
    }

    fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Eigen-decomposition of an observable, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

/// A Hermitian [`LinearOperator`]. The spectrum is computed on first use and
/// cached.
#[derive(Clone, Debug)]
pub struct Observable {
    op: LinearOperator,
    spectrum: OnceLock<Spectrum>,
}

impl Observable {
    pub fn new(op: LinearOperator) -> Result<Self> {
        let scale = op.max_abs().max(1.0);
        let deviation = (&op.matrix - op.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if deviation > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { label: op.label, deviation });
        }
        Ok(Self::hermitized(op))
    }

    pub fn from_matrix(
        space: SpaceDescriptor,
        matrix: CMatrix,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::new(LinearOperator::new(space, matrix, label)?)
    }

    /// Symmetrize without checking; for operators Hermitian by construction.
    pub(crate) fn hermitized(mut op: LinearOperator) -> Self {
        op.matrix = hermitian_part(&op.matrix);
        Self { op, spectrum: OnceLock::new() }
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.op
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.op.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.op.matrix
    }

    pub fn label(&self) -> &str {
        &self.op.label
    }

    pub fn with_label(self, label: impl Into<String>) -> Self {
        Self { op: self.op.with_label(label), spectrum: self.spectrum }
    }

    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum.get_or_init(|| {
            let (values, vectors) = eigh(&self.op.matrix);
            Spectrum { values, vectors }
        })
    }

    /// `self + c·1`, relabelled.
    pub fn offset(&self, c: f64) -> Self {
        let d = self.op.space.dim();
        let m = &self.op.matrix + CMatrix::identity(d, d) * C64::new(c, 0.0);
        let label = format!("{}{:+}", self.op.label, c);
        Self::hermitized(LinearOperator { space: self.op.space.clone(), matrix: m, label })
    }

    /// `Σ w_i O_i` over observables on the same space.
    pub fn combine(terms: &[(f64, &Observable)], label: impl Into<String>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let space = first.1.space().clone();
        let d = space.dim();
        let mut m = CMatrix::zeros(d, d);
        for (w, o) in terms {
            space.require_same(o.space())?;
            m += o.matrix() * C64::new(*w, 0.0);
        }
        Ok(Self::hermitized(LinearOperator::new(space, m, label)?))
    }

    pub fn embed(&self, full: &SpaceDescriptor, party: Party) -> Result<Self> {
        Ok(Self::hermitized(self.op.embed(full, party)?))
    }

    pub fn commutator(&self, other: &Observable) -> Result<LinearOperator> {
        self.op.commutator(&other.op)
    }
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Hermitian eigen-decomposition with eigenvalues sorted ascending.
pub(crate) fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `1 ⊗ … ⊗ local ⊗ … ⊗ 1` with `local` on `mode`.
fn on_mode(space: &SpaceDescriptor, mode: usize, local: &CMatrix) -> CMatrix {
    let before: usize = space.mode_dims[..mode].iter().product();
    let after: usize = space.mode_dims[mode + 1..].iter().product();
    CMatrix::identity(before, before)
        .kronecker(local)
        .kronecker(&CMatrix::identity(after, after))
}

fn lowering_matrix(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

fn check_fock_mode(space: &SpaceDescriptor, mode: usize) -> Result<()> {
    space.require_kind(SpaceKind::Fock)?;
    if mode >= space.modes() {
        return Err(Error::InvalidMode { index: mode, modes: space.modes() });
    }
    Ok(())
}

fn mode_suffix(mode: usize) -> String {
    if mode == 0 {
        String::new()
    } else {
        mode.to_string()
    }
}

/// Truncated lowering operator `a` on one mode: `a|n⟩ = √n |n-1⟩`, and the
/// row of the top Fock level is zero.
pub fn annihilation_op(space: &SpaceDescriptor, mode: usize) -> Result<LinearOperator> {
    check_fock_mode(space, mode)?;
    let m = on_mode(space, mode, &lowering_matrix(space.mode_dims[mode]));
    LinearOperator::new(space.clone(), m, format!("a{}", mode_suffix(mode)))
}

pub fn number_op(space: &SpaceDescriptor, mode: usize) -> Result<Observable> {
    check_fock_mode(space, mode)?;
    let d = space.mode_dims[mode];
    let local = CMatrix::from_diagonal(&CVector::from_fn(d, |n, _| C64::new(n as f64, 0.0)));
    let op = LinearOperator::new(
        space.clone(),
        on_mode(space, mode, &local),
        format!("n{}", mode_suffix(mode)),
    )?;
    Ok(Observable::hermitized(op))
}

/// Rotated quadrature `x_θ = a e^{-iθ} + a† e^{iθ}`; `θ = 0` is `x`, `θ = π/2`
/// is `p`.
pub fn quadrature_op(space: &SpaceDescriptor, mode: usize, theta: f64) -> Result<Observable> {
    let a = annihilation_op(space, mode)?;
    let phase = C64::from_polar(1.0, -theta);
    let m = a.matrix() * phase + a.matrix().adjoint() * phase.conj();
    let base = if theta == 0.0 {
        "x".to_string()
    } else if theta == std::f64::consts::FRAC_PI_2 {
        "p".to_string()
    } else {
        format!("x[{theta}]")
    };
    let label = format!("{base}{}", mode_suffix(mode));
    Ok(Observable::hermitized(LinearOperator::new(space.clone(), m, label)?))
}

/// The three components of an angular momentum.
#[derive(Clone, Debug)]
pub struct SpinTriple {
    pub jx: Observable,
    pub jy: Observable,
    pub jz: Observable,
}

impl SpinTriple {
    pub fn component(&self, axis: Axis) -> &Observable {
        match axis {
            Axis::X => &self.jx,
            Axis::Y => &self.jy,
            Axis::Z => &self.jz,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Schwinger spin operators built from two bosonic modes:
/// `J_X = (a₋a₊† + a₋†a₊)/2`, `J_Y = (a₋a₊† - a₋†a₊)/2i`,
/// `J_Z = (a₊†a₊ - a₋†a₋)/2`.
pub fn schwinger_spin_ops(
    space: &SpaceDescriptor,
    mode_plus: usize,
    mode_minus: usize,
) -> Result<SpinTriple> {
    if mode_plus == mode_minus {
        return Err(Error::InvalidArgument(
            "Schwinger operators need two distinct modes".into(),
        ));
    }
    let ap = annihilation_op(space, mode_plus)?.matrix().clone();
    let am = annihilation_op(space, mode_minus)?.matrix().clone();
    let apd = ap.adjoint();
    let amd = am.adjoint();
    let half = C64::new(0.5, 0.0);
    let jx = (&am * &apd + &amd * &ap) * half;
    let jy = (&am * &apd - &amd * &ap) * (half / I);
    let jz = (&apd * &ap - &amd * &am) * half;
    let mk = |m: CMatrix, l: &str| -> Result<Observable> {
        Ok(Observable::hermitized(LinearOperator::new(space.clone(), m, l)?))
    };
    Ok(SpinTriple { jx: mk(jx, "jx")?, jy: mk(jy, "jy")?, jz: mk(jz, "jz")? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixBasis {
    X,
    Y,
}

/// Photon-number difference after mixing the two modes of a two-mode Fock
/// space: `a_{X±} = (a₊ ± a₋)/√2` or `a_{Y±} = (a₊ ∓ i a₋)/√2`, returning
/// `(a_{+}†a_{+} - a_{-}†a_{-})/2` in the mixed modes. Mode 0 is `a₊`.
pub fn mode_mix_number_difference(space: &SpaceDescriptor, basis: MixBasis) -> Result<Observable> {
    space.require_kind(SpaceKind::Fock)?;
    if space.modes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "mode mixing needs a two-mode Fock space, got {space}"
        )));
    }
    let ap = annihilation_op(space, 0)?.matrix().clone();
    let am = annihilation_op(space, 1)?.matrix().clone();
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let (plus, minus) = match basis {
        MixBasis::X => ((&ap + &am) * s, (&ap - &am) * s),
        MixBasis::Y => ((&ap - &am * I) * s, (&ap + &am * I) * s),
    };
    let m = (plus.adjoint() * &plus - minus.adjoint() * &minus) * C64::new(0.5, 0.0);
    let label = match basis {
        MixBasis::X => "jx",
        MixBasis::Y => "jy",
    };
    Ok(Observable::hermitized(LinearOperator::new(space.clone(), m, label)?))
}

/// Angular-momentum matrices on a fresh `(2j+1)`-dimensional spin space, basis
/// ordered `m = j, j-1, …, -j`.
pub fn spin_ladder_ops(j: f64) -> Result<SpinTriple> {
    let space = SpaceDescriptor::spin(j)?;
    Ok(spin_matrices(&space, 0))
}

fn spin_matrices(space: &SpaceDescriptor, mode: usize) -> SpinTriple {
    let d = space.mode_dims[mode];
    let j = (d as f64 - 1.0) / 2.0;
    let mut raise = CMatrix::zeros(d, d);
    let mut jz = CMatrix::zeros(d, d);
    for k in 0..d {
        let m = j - k as f64;
        jz[(k, k)] = C64::new(m, 0.0);
        if k > 0 {
            // J+ |m⟩ = √(j(j+1) - m(m+1)) |m+1⟩, and |m+1⟩ sits at index k-1.
            raise[(k - 1, k)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let lower = raise.adjoint();
    let jx = (&raise + &lower) * C64::new(0.5, 0.0);
    let jy = (&raise - &lower) * C64::new(0.0, -0.5);
    let mk = |m: CMatrix, l: &str| {
        Observable::hermitized(LinearOperator {
            space: space.clone(),
            matrix: on_mode(space, mode, &m),
            label: l.to_string(),
        })
    };
    SpinTriple { jx: mk(jx, "jx"), jy: mk(jy, "jy"), jz: mk(jz, "jz") }
}

/// Spin observables for a single-party space: the ladder matrices of a spin
/// space, or the Schwinger operators of a two-mode Fock space.
pub fn spin_observables(space: &SpaceDescriptor) -> Result<SpinTriple> {
    if space.is_bipartite() {
        return Err(Error::InvalidArgument(
            "spin observables are built on one subsystem at a time".into(),
        ));
    }
    match space.kind() {
        SpaceKind::Spin if space.modes() == 1 => Ok(spin_matrices(space, 0)),
        SpaceKind::Fock if space.modes() == 2 => schwinger_spin_ops(space, 0, 1),
        _ => Err(Error::InvalidArgument(format!(
            "no spin observables for space {space}; need one spin or two Fock modes"
        ))),
    }
}

/// Observable by short name on a single-party space: `x`, `p`, `n` on Fock
/// mode 0, and `jx`, `jy`, `jz` via [`spin_observables`].
pub fn named_observable(space: &SpaceDescriptor, name: &str) -> Result<Observable> {
    match name {
        "x" => quadrature_op(space, 0, 0.0),
        "p" => quadrature_op(space, 0, std::f64::consts::FRAC_PI_2),
        "n" => number_op(space, 0),
        "jx" => Ok(spin_observables(space)?.jx),
        "jy" => Ok(spin_observables(space)?.jy),
        "jz" => Ok(spin_observables(space)?.jz),
        other => Err(Error::InvalidArgument(format!("unknown observable `{other}`"))),
    }
}

/// A normalized pure state.
#[derive(Clone, Debug)]
pub struct StateVector {
    space: SpaceDescriptor,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(space: SpaceDescriptor, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for a space of dimension {}",
                amplitudes.len(),
                space.dim()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("state norm {norm} is not 1")));
        }
        Ok(Self { space, amplitudes })
    }

    pub fn normalized(space: SpaceDescriptor, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Self::new(space, amplitudes.unscale(norm))
    }

    pub fn basis(space: SpaceDescriptor, index: usize) -> Result<Self> {
        let d = space.dim();
        if index >= d {
            return Err(Error::InvalidArgument(format!("basis index {index} >= {d}")));
        }
        let mut v = CVector::zeros(d);
        v[index] = ONE;
        Ok(Self { space, amplitudes: v })
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let space = SpaceDescriptor::tensor(&self.space, &other.space)?;
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        Ok(Self { space, amplitudes })
    }

    /// Amplitudes reshaped to a `dim_A × dim_B` matrix.
    fn as_bipartite_matrix(&self) -> CMatrix {
        let da = self.space.party_dim(Party::A);
        let db = self.space.dim() / da;
        CMatrix::from_row_slice(da, db, self.amplitudes.as_slice())
    }
}

/// A mixed state: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: SpaceDescriptor,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity.
    pub fn new(space: SpaceDescriptor, matrix: CMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidState(format!(
                "density matrix is {}x{} for a space of dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let deviation = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if deviation > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix is not Hermitian (deviation {deviation:.3e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {trace} is not 1")));
        }
        let matrix = hermitian_part(&matrix);
        let min = eigh(&matrix).0.first().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { space, matrix })
    }

    /// For matrices positive by construction (Gram products, convex sums).
    pub(crate) fn from_psd_unchecked(space: SpaceDescriptor, matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), space.dim());
        debug_assert!((matrix.trace().re - 1.0).abs() < 1e-8);
        Self { space, matrix: hermitian_part(&matrix) }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let v = &psi.amplitudes;
        Self::from_psd_unchecked(psi.space.clone(), v * v.adjoint())
    }

    /// `Σ w_i ρ_i` with positive weights summing to 1 (within 1e-12).
    pub fn mixture(components: &[(f64, DensityMatrix)]) -> Result<Self> {
        let (_, first) = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let space = first.space.clone();
        let d = space.dim();
        let mut total = 0.0;
        let mut m = CMatrix::zeros(d, d);
        for (w, rho) in components {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("mixture weight {w} is not positive")));
            }
            space.require_same(&rho.space)?;
            total += w;
            m += &rho.matrix * C64::new(*w, 0.0);
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        Ok(Self::from_psd_unchecked(space, m))
    }

    pub fn maximally_mixed(space: SpaceDescriptor) -> Self {
        let d = space.dim();
        let m = CMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        Self { space, matrix: m }
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let space = SpaceDescriptor::tensor(&self.space, &other.space)?;
        Ok(Self { space, matrix: self.matrix.kronecker(&other.matrix) })
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.matrix).0
    }
}

/// Either representation of a quantum state.
#[derive(Clone, Debug)]
pub enum State {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl State {
    pub fn space(&self) -> &SpaceDescriptor {
        match self {
            State::Pure(v) => &v.space,
            State::Mixed(r) => &r.space,
        }
    }

    pub fn to_density_matrix(&self) -> DensityMatrix {
        match self {
            State::Pure(v) => DensityMatrix::from_pure(v),
            State::Mixed(r) => r.clone(),
        }
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (State::Pure(a), State::Pure(b)) => Ok(State::Pure(a.tensor(b)?)),
            _ => Ok(State::Mixed(self.to_density_matrix().tensor(&other.to_density_matrix())?)),
        }
    }

    fn expect_matrix(&self, m: &CMatrix) -> C64 {
        match self {
            State::Pure(v) => v.amplitudes.dotc(&(m * &v.amplitudes)),
            State::Mixed(r) => trace_of_product(&r.matrix, m),
        }
    }

    /// `⟨M²⟩` for Hermitian `M`.
    fn expect_square(&self, m: &CMatrix) -> C64 {
        match self {
            State::Pure(v) => C64::new((m * &v.amplitudes).norm_squared(), 0.0),
            State::Mixed(r) => trace_of_product(&(&r.matrix * m), m),
        }
    }
}

impl From<StateVector> for State {
    fn from(v: StateVector) -> Self {
        State::Pure(v)
    }
}

impl From<DensityMatrix> for State {
    fn from(r: DensityMatrix) -> Self {
        State::Mixed(r)
    }
}

/// `Tr(A B)` without forming the product.
fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `⟨O⟩ = Tr(ρ O)`, real part only.
pub fn expectation(state: &State, obs: &Observable) -> Result<f64> {
    state.space().require_same(obs.space())?;
    Ok(state.expect_matrix(obs.matrix()).re)
}

/// `Tr(ρ M)` for an arbitrary operator, e.g. a commutator.
pub fn expectation_complex(state: &State, op: &LinearOperator) -> Result<C64> {
    state.space().require_same(op.space())?;
    Ok(state.expect_matrix(op.matrix()))
}

/// `⟨O²⟩ - ⟨O⟩²`, clamped at zero.
pub fn variance(state: &State, obs: &Observable) -> Result<f64> {
    Ok(mean_and_variance(state, obs)?.1)
}

pub fn mean_and_variance(state: &State, obs: &Observable) -> Result<(f64, f64)> {
    state.space().require_same(obs.space())?;
    let mean = state.expect_matrix(obs.matrix()).re;
    let second = state.expect_square(obs.matrix()).re;
    Ok((mean, (second - mean * mean).max(0.0)))
}

/// Partial trace down to one subsystem. Tracing a single-party state down to A
/// returns it unchanged.
pub fn reduce_to_subsystem(state: &State, party: Party) -> Result<DensityMatrix> {
    let space = state.space();
    let local = space.party(party)?;
    if !space.is_bipartite() {
        return Ok(state.to_density_matrix());
    }
    let m = match (state, party) {
        (State::Pure(v), Party::A) => {
            let psi = v.as_bipartite_matrix();
            &psi * psi.adjoint()
        }
        (State::Pure(v), Party::B) => {
            let psi = v.as_bipartite_matrix();
            psi.transpose() * psi.conjugate()
        }
        (State::Mixed(r), _) => {
            let da = space.party_dim(Party::A);
            let db = space.party_dim(Party::B);
            match party {
                Party::A => CMatrix::from_fn(da, da, |a, a2| {
                    (0..db).map(|b| r.matrix[(a * db + b, a2 * db + b)]).sum()
                }),
                Party::B => CMatrix::from_fn(db, db, |b, b2| {
                    (0..da).map(|a| r.matrix[(a * db + b, a * db + b2)]).sum()
                }),
            }
        }
    };
    Ok(DensityMatrix::from_psd_unchecked(local, m))
}

/// Condition a bipartite state on the outcome `Π` of a measurement at B.
///
/// Returns `P = Tr(ρ (1⊗Π))` and the A-state `Tr_B[(1⊗Π) ρ (1⊗Π)] / P`.
pub fn condition_on_projector(
    state: &State,
    projector: &LinearOperator,
) -> Result<(f64, DensityMatrix)> {
    condition_on_projector_with_threshold(state, projector, DEFAULT_ZERO_PROB)
}

pub fn condition_on_projector_with_threshold(
    state: &State,
    projector: &LinearOperator,
    threshold: f64,
) -> Result<(f64, DensityMatrix)> {
    let space = state.space();
    let local_b = space.party(Party::B)?;
    if projector.space() != &local_b {
        return Err(Error::WrongSubsystem { label: projector.label().into(), party: "B" });
    }
    let pi = projector.matrix();
    let idempotency = (pi * pi - pi).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let herm = (pi - pi.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if idempotency > 1e-10 || herm > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "`{}` is not an orthogonal projector",
            projector.label()
        )));
    }
    let unnormalized = match state {
        State::Pure(v) => {
            let psi = v.as_bipartite_matrix();
            &psi * pi.transpose() * psi.adjoint()
        }
        State::Mixed(r) => mixed_conditional(space, &r.matrix, pi),
    };
    normalize_branch(space, unnormalized, threshold)
}

/// Conditioning on the span of orthonormal B-vectors (columns of `basis`).
/// Returns the unnormalized conditional A-matrix; its trace is the branch
/// probability.
pub(crate) fn conditional_on_span(state: &State, basis: &CMatrix) -> CMatrix {
    match state {
        State::Pure(v) => {
            let w = v.as_bipartite_matrix() * basis.conjugate();
            &w * w.adjoint()
        }
        State::Mixed(r) => {
            let pi = basis * basis.adjoint();
            mixed_conditional(state.space(), &r.matrix, &pi)
        }
    }
}

pub(crate) fn normalize_branch(
    space: &SpaceDescriptor,
    unnormalized: CMatrix,
    threshold: f64,
) -> Result<(f64, DensityMatrix)> {
    let probability = unnormalized.trace().re;
    if !(probability >= threshold) {
        return Err(Error::EmptyBranch { probability, threshold });
    }
    let local_a = space.party(Party::A)?;
    let rho = unnormalized / C64::new(probability, 0.0);
    Ok((probability, DensityMatrix::from_psd_unchecked(local_a, rho)))
}

fn mixed_conditional(space: &SpaceDescriptor, rho: &CMatrix, pi: &CMatrix) -> CMatrix {
    let da = space.party_dim(Party::A);
    let db = space.party_dim(Party::B);
    CMatrix::from_fn(da, da, |a, a2| {
        let mut acc = ZERO;
        for b in 0..db {
            for b2 in 0..db {
                let p = pi[(b2, b)];
                if p != ZERO {
                    acc += rho[(a * db + b, a2 * db + b2)] * p;
                }
            }
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn fock(cutoff: usize) -> SpaceDescriptor {
        SpaceDescriptor::fock_mode(cutoff).unwrap()
    }

    fn number_state(cutoff: usize, n: usize) -> State {
        StateVector::basis(fock(cutoff), n).unwrap().into()
    }

    fn singlet() -> State {
        let space = SpaceDescriptor::spin_pair(0.5, 0.5).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amps = CVector::from_vec(vec![
            ZERO,
            C64::new(s, 0.0),
            C64::new(-s, 0.0),
            ZERO,
        ]);
        StateVector::new(space, amps).unwrap().into()
    }

    #[test]
    fn lowering_acts_on_number_states() {
        let space = fock(2);
        let a = annihilation_op(&space, 0).unwrap();
        let one = StateVector::basis(space.clone(), 1).unwrap();
        let out = a.matrix() * one.amplitudes();
        assert_abs_diff_eq!(out[0].re, 1.0, epsilon = 1e-15);
        let vac = StateVector::basis(space, 0).unwrap();
        assert_eq!((a.matrix() * vac.amplitudes()).norm(), 0.0);

        let space = fock(6);
        let a = annihilation_op(&space, 0).unwrap();
        let four = StateVector::basis(space, 4).unwrap();
        let out = a.matrix() * four.amplitudes();
        assert_abs_diff_eq!(out[3].re, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.norm(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn lowering_rejects_spin_and_bad_mode() {
        let spin = SpaceDescriptor::spin(1.0).unwrap();
        assert!(matches!(annihilation_op(&spin, 0), Err(Error::WrongKind { .. })));
        assert!(matches!(annihilation_op(&fock(3), 1), Err(Error::InvalidMode { .. })));
    }

    #[test]
    fn quadrature_variances_of_simple_states() {
        let space = fock(20);
        let vac = number_state(20, 0);
        for k in 0..8 {
            let theta = k as f64 * 0.4;
            let q = quadrature_op(&space, 0, theta).unwrap();
            assert_abs_diff_eq!(variance(&vac, &q).unwrap(), 1.0, epsilon = 1e-12);
        }
        let x = quadrature_op(&space, 0, 0.0).unwrap();
        let p = quadrature_op(&space, 0, FRAC_PI_2).unwrap();
        assert_eq!((x.label(), p.label()), ("x", "p"));
        // ⟨x²⟩ = 2n + 1
        assert_abs_diff_eq!(variance(&number_state(20, 1), &x).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(variance(&number_state(20, 5), &p).unwrap(), 11.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_antiperiodic_in_pi() {
        let space = fock(8);
        for theta in [0.0, 0.3, 1.1, 2.5] {
            let q = quadrature_op(&space, 0, theta).unwrap();
            let q_pi = quadrature_op(&space, 0, theta + std::f64::consts::PI).unwrap();
            let diff = max_abs(&(q.matrix() + q_pi.matrix()));
            assert!(diff < 1e-14, "theta {theta}: {diff}");
        }
    }

    #[test]
    fn mixture_variance_adds_second_moments() {
        let space = fock(10);
        let rho = DensityMatrix::mixture(&[
            (0.5, number_state(10, 0).to_density_matrix()),
            (0.5, number_state(10, 1).to_density_matrix()),
        ])
        .unwrap();
        let x = quadrature_op(&space, 0, 0.0).unwrap();
        assert_abs_diff_eq!(variance(&rho.into(), &x).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_rejects_space_mismatch() {
        let x = quadrature_op(&fock(4), 0, 0.0).unwrap();
        let err = expectation(&number_state(5, 0), &x).unwrap_err();
        assert!(matches!(err, Error::SpaceMismatch { .. }));
    }

    #[test]
    fn schwinger_on_single_photon() {
        let space = SpaceDescriptor::fock(&[3, 3]).unwrap();
        let spin = schwinger_spin_ops(&space, 0, 1).unwrap();
        // |1⟩₊|0⟩₋ sits at index 1·3 + 0
        let psi: State = StateVector::basis(space, 3).unwrap().into();
        assert_abs_diff_eq!(expectation(&psi, &spin.jz).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(expectation(&psi, &spin.jx).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expectation(&psi, &spin.jy).unwrap(), 0.0, epsilon = 1e-15);
        assert!(schwinger_spin_ops(&SpaceDescriptor::fock(&[3, 3]).unwrap(), 1, 1).is_err());
    }

    /// Basis indices of a two-mode space with total photon number ≤ limit.
    fn low_photon_indices(cutoff: usize, limit: usize) -> Vec<usize> {
        let d = cutoff + 1;
        (0..d * d).filter(|i| i / d + i % d <= limit).collect()
    }

    fn restrict(m: &CMatrix, idx: &[usize]) -> CMatrix {
        CMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
    }

    #[test]
    fn schwinger_commutator_on_safe_subspace() {
        let cutoff = 6;
        let space = SpaceDescriptor::fock(&[cutoff + 1, cutoff + 1]).unwrap();
        let spin = schwinger_spin_ops(&space, 0, 1).unwrap();
        let comm = spin.jx.commutator(&spin.jy).unwrap();
        let expected = spin.jz.matrix() * I;
        let idx = low_photon_indices(cutoff, cutoff / 2);
        let diff = max_abs(&(restrict(comm.matrix(), &idx) - restrict(&expected, &idx)));
        assert!(diff < 1e-13, "{diff}");
    }

    #[test]
    fn mode_mixing_reproduces_schwinger() {
        let cutoff = 6;
        let space = SpaceDescriptor::fock(&[cutoff + 1, cutoff + 1]).unwrap();
        let spin = schwinger_spin_ops(&space, 0, 1).unwrap();
        let idx = low_photon_indices(cutoff, cutoff / 2);
        for (basis, reference) in [(MixBasis::X, &spin.jx), (MixBasis::Y, &spin.jy)] {
            let mixed = mode_mix_number_difference(&space, basis).unwrap();
            let diff = max_abs(&(restrict(mixed.matrix(), &idx) - restrict(reference.matrix(), &idx)));
            assert!(diff < 1e-13, "{basis:?}: {diff}");
            let vac: State = StateVector::basis(space.clone(), 0).unwrap().into();
            assert_abs_diff_eq!(expectation(&vac, &mixed).unwrap(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn spin_ladder_algebra() {
        for j in [0.5, 1.0, 1.5, 2.0, 3.5] {
            let s = spin_ladder_ops(j).unwrap();
            let comm = s.jx.commutator(&s.jy).unwrap();
            let diff = max_abs(&(comm.matrix() - s.jz.matrix() * I));
            assert!(diff <= 1e-12, "j={j}: {diff}");
        }
        let half = spin_ladder_ops(0.5).unwrap();
        let ev = &half.jz.spectrum().values;
        assert_abs_diff_eq!(ev[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ev[1], 0.5, epsilon = 1e-15);
        assert!(spin_ladder_ops(0.25).is_err());
        assert!(spin_ladder_ops(0.0).is_err());
    }

    #[test]
    fn highest_weight_spin_two() {
        let s = spin_ladder_ops(2.0).unwrap();
        let top: State = StateVector::basis(s.jz.space().clone(), 0).unwrap().into();
        assert_abs_diff_eq!(variance(&top, &s.jy).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(expectation(&top, &s.jz).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn singlet_conditioning_and_reduction() {
        let psi = singlet();
        let space_b = psi.space().party(Party::B).unwrap();
        let up = CMatrix::from_fn(2, 2, |r, c| if r == 0 && c == 0 { ONE } else { ZERO });
        let proj = LinearOperator::new(space_b, up, "up").unwrap();
        let (p, rho_a) = condition_on_projector(&psi, &proj).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho_a.matrix()[(1, 1)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho_a.purity(), 1.0, epsilon = 1e-14);

        let reduced = reduce_to_subsystem(&psi, Party::A).unwrap();
        assert_abs_diff_eq!(reduced.purity(), 0.5, epsilon = 1e-15);
        let mixed: State = psi.to_density_matrix().into();
        let (p2, rho2) = condition_on_projector(&mixed, &proj).unwrap();
        assert_abs_diff_eq!(p2, 0.5, epsilon = 1e-15);
        assert!(max_abs(&(rho2.matrix() - rho_a.matrix())) < 1e-15);
    }

    #[test]
    fn conditioning_errors() {
        let psi = singlet();
        let space_b = psi.space().party(Party::B).unwrap();
        let zero = LinearOperator::new(space_b.clone(), CMatrix::zeros(2, 2), "0").unwrap();
        assert!(matches!(
            condition_on_projector(&psi, &zero),
            Err(Error::EmptyBranch { .. })
        ));
        let not_proj =
            LinearOperator::new(space_b, CMatrix::identity(2, 2) * C64::new(2.0, 0.0), "2").unwrap();
        assert!(condition_on_projector(&psi, &not_proj).is_err());
        let single = number_state(3, 0);
        let pi = LinearOperator::identity(&fock(3));
        assert!(matches!(condition_on_projector(&single, &pi), Err(Error::NotBipartite)));
    }

    #[test]
    fn product_state_conditioning_is_vacuous() {
        let a = StateVector::normalized(
            fock(3),
            CVector::from_vec(vec![ONE, C64::new(0.3, 0.2), ZERO, C64::new(-0.1, 0.0)]),
        )
        .unwrap();
        let b = StateVector::normalized(
            fock(2),
            CVector::from_vec(vec![C64::new(0.5, 0.0), ONE, C64::new(0.0, 0.7)]),
        )
        .unwrap();
        let psi: State = a.tensor(&b).unwrap().into();
        let rho_a = DensityMatrix::from_pure(&a);
        for n in 0..3 {
            let mut m = CMatrix::zeros(3, 3);
            m[(n, n)] = ONE;
            let proj = LinearOperator::new(fock(2), m, "n").unwrap();
            let (_, cond) = condition_on_projector(&psi, &proj).unwrap();
            assert!(max_abs(&(cond.matrix() - rho_a.matrix())) < 1e-14);
        }
        let reduced = reduce_to_subsystem(&psi, Party::A).unwrap();
        assert_abs_diff_eq!(reduced.purity(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn density_matrix_validation() {
        let space = fock(1);
        let bad_trace = CMatrix::identity(2, 2);
        assert!(DensityMatrix::new(space.clone(), bad_trace).is_err());
        let negative = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::new(1.5, 0.0),
            C64::new(-0.5, 0.0),
        ]));
        assert!(DensityMatrix::new(space.clone(), negative).is_err());
        let ok = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::new(0.25, 0.0),
            C64::new(0.75, 0.0),
        ]));
        assert!(DensityMatrix::new(space, ok).is_ok());
    }

    #[test]
    fn observable_rejects_non_hermitian() {
        let space = fock(3);
        let a = annihilation_op(&space, 0).unwrap();
        assert!(matches!(Observable::new(a), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn embedding_orders_a_first() {
        let full = SpaceDescriptor::fock_bipartite(&[3], &[2]).unwrap();
        let na = number_op(&fock(2), 0).unwrap().embed(&full, Party::A).unwrap();
        let nb = number_op(&fock(1), 0).unwrap().embed(&full, Party::B).unwrap();
        // |2⟩_A|1⟩_B is index 2·2 + 1
        let psi: State = StateVector::basis(full, 5).unwrap().into();
        assert_abs_diff_eq!(expectation(&psi, &na).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expectation(&psi, &nb).unwrap(), 1.0, epsilon = 1e-15);
    }
}
