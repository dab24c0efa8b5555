//! Finite-dimensional Hilbert-space substrate.
//!
//! Operators and states are dense complex matrices and vectors. Types validate
//! their invariants on construction and are immutable afterwards.

mod expm;
mod lattice;
mod wigner;

pub use expm::expm;
pub use lattice::{LatticeModel, Stencil};
pub use wigner::{wigner_transform, PGrid, WignerGrid};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;
pub type Vector = DVector<C64>;

/// Structural checks: hermiticity, idempotence, completeness, trace.
pub const TOL_STRUCT: f64 = 1e-10;
/// Drift allowed in unitary evolution.
pub const TOL_EVOLUTION: f64 = 1e-9;
/// State normalization.
pub const TOL_NORM: f64 = 1e-10;

/// Physical constants for cgs reproduction runs. Natural units use ħ = k = 1.
pub mod constants {
    /// ħ in erg·s.
    pub const HBAR_CGS: f64 = 1.0546e-27;
    /// Boltzmann constant in erg/K.
    pub const K_B_CGS: f64 = 1.381e-16;
}

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub(crate) fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub(crate) fn hermiticity_defect(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Trace of `a * b` without forming the product.
pub(crate) fn trace_of_product(a: &Mat, b: &Mat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Tr(a b†) = Σ a_ij conj(b_ij).
pub(crate) fn trace_with_adjoint(a: &Mat, b: &Mat) -> C64 {
    a.iter().zip(b.iter()).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x * y.conj())
}

fn is_exactly_diagonal(m: &Mat) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == C64::new(0.0, 0.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: Mat,
}

impl Operator {
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!("operator must be square and non-empty, got {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("entries", "non-finite entry"));
        }
        Ok(Operator { m })
    }

    pub(crate) fn from_mat_unchecked(m: Mat) -> Self {
        Operator { m }
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        Self::new(Mat::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| c(rows[i][j])))
    }

    pub fn identity(dim: usize) -> Self {
        Operator { m: Mat::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Operator { m: Mat::zeros(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Operator { m: Mat::from_fn(n, n, |i, j| if i == j { c(diag[i]) } else { c(0.0) }) }
    }

    /// |v⟩⟨v| / ⟨v|v⟩.
    pub fn ray_projector(v: &Vector) -> Result<Self> {
        let n2 = v.norm_squared();
        if n2 == 0.0 {
            return Err(Error::param("vector", "zero vector has no ray"));
        }
        Ok(Operator { m: v * v.adjoint() / c(n2) })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn into_matrix(self) -> Mat {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Operator { m: self.m.adjoint() }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.m)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Largest entry modulus of `self - other`.
    pub fn distance(&self, other: &Operator) -> f64 {
        max_abs(&(&self.m - &other.m))
    }

    pub fn approx_eq(&self, other: &Operator, tol: f64) -> bool {
        self.dim() == other.dim() && self.distance(other) <= tol
    }

    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("compose {} with {}", self.dim(), other.dim())));
        }
        Ok(Operator { m: &self.m * &other.m })
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("add {} and {}", self.dim(), other.dim())));
        }
        Ok(Operator { m: &self.m + &other.m })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("subtract {} and {}", self.dim(), other.dim())));
        }
        Ok(Operator { m: &self.m - &other.m })
    }

    pub fn scale(&self, z: C64) -> Operator {
        Operator { m: &self.m * z }
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.dim() {
            return Err(Error::Dimension(format!("apply {}-dim operator to {}-vector", self.dim(), v.len())));
        }
        Ok(&self.m * v)
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        Operator { m: self.m.kronecker(&other.m) }
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.m.clone().singular_values().iter().fold(0.0f64, |a, &s| a.max(s))
    }

    /// ‖U†U − 1‖ in max-entry norm.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.m.adjoint() * &self.m;
        max_abs(&(p - Mat::identity(self.dim(), self.dim())))
    }

    pub fn is_diagonal(&self) -> bool {
        is_exactly_diagonal(&self.m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    v: Vector,
}

impl StateVector {
    /// Accepts amplitudes whose norm is 1 within `TOL_NORM`.
    pub fn new(v: Vector) -> Result<Self> {
        let norm = v.norm();
        if v.is_empty() || (norm - 1.0).abs() > TOL_NORM || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Ok(StateVector { v })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(v: Vector) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Ok(StateVector { v: v / c(norm) })
    }

    pub fn from_complex(amps: &[C64]) -> Result<Self> {
        Self::normalized(Vector::from_column_slice(amps))
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::Label(format!("basis index {index} >= dim {dim}")));
        }
        let mut v = Vector::zeros(dim);
        v[index] = c(1.0);
        Ok(StateVector { v })
    }

    pub(crate) fn from_vec_unchecked(v: Vector) -> Self {
        StateVector { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn amplitudes(&self) -> &Vector {
        &self.v
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.v.dotc(&other.v)
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        Ok(self.v.dotc(&op.apply(&self.v)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: Operator,
}

impl DensityOperator {
    /// Validates hermiticity, unit trace and eigenvalue floor at `TOL_STRUCT`.
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_tolerance(op, TOL_STRUCT)
    }

    pub fn with_tolerance(op: Operator, tol: f64) -> Result<Self> {
        let defect = op.hermiticity_defect();
        if defect > tol {
            return Err(Error::NotHermitian { what: "density operator", defect });
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::NotDensity(format!("trace {tr}")));
        }
        let rho = DensityOperator { op };
        let floor = rho.min_eigenvalue();
        if floor < -tol {
            return Err(Error::NotDensity(format!("eigenvalue {floor:.3e} below floor")));
        }
        Ok(rho)
    }

    pub(crate) fn from_mat_unchecked(m: Mat) -> Self {
        DensityOperator { op: Operator { m } }
    }

    pub fn pure(psi: &StateVector) -> Self {
        DensityOperator { op: Operator { m: &psi.v * psi.v.adjoint() } }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOperator { op: Operator { m: Mat::identity(dim, dim) / c(dim as f64) } }
    }

    /// Σ_i p_i |ψ_i⟩⟨ψ_i| for weights summing to one.
    pub fn mixture(weights: &[f64], states: &[StateVector]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::Dimension("mixture weights and states differ in length".into()));
        }
        let d = states[0].dim();
        let mut m = Mat::zeros(d, d);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != d {
                return Err(Error::Dimension("mixture states differ in dimension".into()));
            }
            m += &s.v * s.v.adjoint() * c(*w);
        }
        Self::new(Operator::new(m)?)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn matrix(&self) -> &Mat {
        &self.op.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.op.m + self.op.m.adjoint()) * c(0.5);
        SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        trace_with_adjoint(&self.op.m, &self.op.m).re
    }

    pub fn expectation(&self, a: &Operator) -> Result<C64> {
        if a.dim() != self.dim() {
            return Err(Error::Dimension("expectation operator dimension".into()));
        }
        Ok(trace_of_product(&self.op.m, &a.m))
    }

    /// Half the sum of absolute eigenvalues of the difference.
    pub fn trace_distance(&self, other: &DensityOperator) -> f64 {
        let d = &self.op.m - &other.op.m;
        let h = (&d + d.adjoint()) * c(0.5);
        0.5 * SymmetricEigen::new(h).eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
    }
}

/// Exhaustive, mutually exclusive projectors with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorFamily {
    members: Vec<Operator>,
    labels: Vec<String>,
    diagonal: bool,
}

impl ProjectorFamily {
    pub fn new(members: Vec<Operator>, labels: Vec<String>) -> Result<Self> {
        Self::with_tolerance(members, labels, TOL_STRUCT)
    }

    pub fn with_tolerance(members: Vec<Operator>, labels: Vec<String>, tol: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::NotProjectorFamily("empty family".into()));
        }
        if members.len() != labels.len() {
            return Err(Error::NotProjectorFamily("labels and members differ in count".into()));
        }
        let d = members[0].dim();
        if members.iter().any(|p| p.dim() != d) {
            return Err(Error::NotProjectorFamily("members differ in dimension".into()));
        }
        let diagonal = members.iter().all(Operator::is_diagonal);
        let fam = ProjectorFamily { members, labels, diagonal };
        fam.validate(tol)?;
        Ok(fam)
    }

    fn validate(&self, tol: f64) -> Result<()> {
        let d = self.dim();
        if self.diagonal {
            let mut total = vec![0.0; d];
            for (k, p) in self.members.iter().enumerate() {
                for i in 0..d {
                    let z = p.m[(i, i)];
                    if z.im.abs() > tol || (z.re * z.re - z.re).abs() > tol {
                        return Err(Error::NotProjectorFamily(format!("member {k} is not a projector")));
                    }
                    total[i] += z.re;
                }
            }
            if total.iter().any(|t| (t - 1.0).abs() > tol) {
                return Err(Error::NotProjectorFamily("members do not sum to identity".into()));
            }
            return Ok(());
        }
        let mut sum = Mat::zeros(d, d);
        for (k, p) in self.members.iter().enumerate() {
            let herm = p.hermiticity_defect();
            let idem = max_abs(&(&p.m * &p.m - &p.m));
            if herm > tol || idem > tol {
                return Err(Error::NotProjectorFamily(format!(
                    "member {k}: hermiticity defect {herm:.3e}, idempotence defect {idem:.3e}"
                )));
            }
            sum += &p.m;
        }
        for a in 0..self.members.len() {
            for b in (a + 1)..self.members.len() {
                let overlap = (&self.members[a].m * &self.members[b].m).norm();
                if overlap > tol {
                    return Err(Error::NotProjectorFamily(format!("members {a} and {b} overlap ({overlap:.3e})")));
                }
            }
        }
        let completeness = max_abs(&(sum - Mat::identity(d, d)));
        if completeness > tol {
            return Err(Error::NotProjectorFamily(format!("completeness defect {completeness:.3e}")));
        }
        Ok(())
    }

    /// The one-member family {1}.
    pub fn trivial(dim: usize) -> Self {
        ProjectorFamily { members: vec![Operator::identity(dim)], labels: vec!["1".into()], diagonal: true }
    }

    /// Diagonal projectors from a partition of basis indices; `groups` must
    /// cover `0..dim` exactly once.
    pub fn from_partition(dim: usize, groups: &[Vec<usize>], labels: Vec<String>) -> Result<Self> {
        let mut members = Vec::with_capacity(groups.len());
        for g in groups {
            let mut diag = vec![0.0; dim];
            for &i in g {
                if i >= dim {
                    return Err(Error::NotProjectorFamily(format!("index {i} outside dimension {dim}")));
                }
                diag[i] += 1.0;
            }
            members.push(Operator::from_diagonal(&diag));
        }
        Self::new(members, labels)
    }

    /// Rank-one projectors onto the columns of an orthonormal basis.
    pub fn from_basis(vectors: &[Vector], labels: Vec<String>) -> Result<Self> {
        let members = vectors.iter().map(Operator::ray_projector).collect::<Result<Vec<_>>>()?;
        Self::new(members, labels)
    }

    /// Spectral projectors of a Hermitian operator; eigenvalues closer than
    /// `degeneracy_tol` share a projector.
    pub fn eigenprojectors(h: &Operator, degeneracy_tol: f64) -> Result<Self> {
        let defect = h.hermiticity_defect();
        if defect > TOL_STRUCT * h.m.iter().fold(1.0f64, |a, z| a.max(z.norm())) {
            return Err(Error::NotHermitian { what: "operator", defect });
        }
        let eig = SymmetricEigen::new((&h.m + h.m.adjoint()) * c(0.5));
        let mut order: Vec<usize> = (0..h.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut members = Vec::new();
        let mut labels = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] <= degeneracy_tol {
                end += 1;
            }
            let mut p = Mat::zeros(h.dim(), h.dim());
            for &k in &order[start..end] {
                let v = eig.eigenvectors.column(k);
                p += v * v.adjoint();
            }
            labels.push(format!("{:.6}", eig.eigenvalues[order[start]]));
            members.push(Operator { m: p });
            start = end;
        }
        Self::new(members, labels)
    }

    /// U† P U for every member.
    pub fn conjugated(&self, u: &Operator) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|p| Operator { m: u.m.adjoint() * &p.m * &u.m })
            .collect::<Vec<_>>();
        let diagonal = members.iter().all(Operator::is_diagonal);
        let fam = ProjectorFamily { members, labels: self.labels.clone(), diagonal };
        fam.validate(TOL_STRUCT)?;
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Operator] {
        &self.members
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Eigendecomposition of a Hermitian Hamiltonian, reused for any number of
/// evolution times.
#[derive(Clone, Debug)]
pub struct Propagator {
    energies: Vec<f64>,
    vectors: Mat,
    hbar: f64,
}

impl Propagator {
    pub fn new(h: &Operator, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::param("hbar", "must be positive"));
        }
        let scale = h.m.iter().fold(1.0f64, |a, z| a.max(z.norm()));
        let defect = h.hermiticity_defect();
        if defect > TOL_STRUCT * scale {
            return Err(Error::NotHermitian { what: "Hamiltonian", defect });
        }
        let eig = SymmetricEigen::new((&h.m + h.m.adjoint()) * c(0.5));
        Ok(Propagator { energies: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors, hbar })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// exp(−iHt/ħ).
    pub fn unitary(&self, t: f64) -> Operator {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (k, e) in self.energies.iter().enumerate() {
            let phase = C64::from_polar(1.0, -e * t / self.hbar);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= phase);
        }
        Operator { m: scaled * v.adjoint() }
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if psi.dim() != self.energies.len() {
            return Err(Error::Dimension("state and Hamiltonian dimensions differ".into()));
        }
        let mut coeffs = self.vectors.adjoint() * &psi.v;
        for (k, e) in self.energies.iter().enumerate() {
            coeffs[k] *= C64::from_polar(1.0, -e * t / self.hbar);
        }
        Ok(StateVector { v: &self.vectors * coeffs })
    }

    /// e^{iH(t−t0)/ħ} P e^{−iH(t−t0)/ħ}.
    pub fn heisenberg(&self, p: &Operator, t: f64, t0: f64) -> Result<Operator> {
        if p.dim() != self.energies.len() {
            return Err(Error::Dimension("projector and Hamiltonian dimensions differ".into()));
        }
        if t == t0 {
            return Ok(p.clone());
        }
        let u = self.unitary(t - t0);
        Ok(Operator { m: u.m.adjoint() * &p.m * &u.m })
    }
}

/// exp(−iHt/ħ)ψ.
pub fn evolve_unitary(h: &Operator, t: f64, psi: &StateVector, hbar: f64) -> Result<StateVector> {
    Propagator::new(h, hbar)?.evolve(psi, t)
}

/// Heisenberg-picture projector; the result is validated as a projector.
pub fn heisenberg_projector(p: &Operator, h: &Operator, t: f64, t0: f64, hbar: f64) -> Result<Operator> {
    let out = Propagator::new(h, hbar)?.heisenberg(p, t, t0)?;
    let idem = max_abs(&(&out.m * &out.m - &out.m));
    let herm = out.hermiticity_defect();
    if idem > TOL_STRUCT || herm > TOL_STRUCT {
        return Err(Error::NotProjectorFamily(format!(
            "input is not a projector (idempotence {idem:.3e}, hermiticity {herm:.3e})"
        )));
    }
    Ok(out)
}

/// Traces out the second tensor factor of a `d_sys * d_env` system.
pub fn partial_trace(rho: &DensityOperator, d_sys: usize, d_env: usize) -> Result<DensityOperator> {
    if d_sys == 0 || d_env == 0 || d_sys * d_env != rho.dim() {
        return Err(Error::Dimension(format!("{} != {} x {}", rho.dim(), d_sys, d_env)));
    }
    let m = rho.matrix();
    let out = Mat::from_fn(d_sys, d_sys, |i, j| (0..d_env).map(|k| m[(i * d_env + k, j * d_env + k)]).sum());
    Ok(DensityOperator { op: Operator { m: out } })
}
