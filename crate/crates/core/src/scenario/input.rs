//! JSON input shapes shared by several scenario kinds.

use super::Issues;
use crate::error::Result;
use crate::hilbert::{DensityOperator, Mat, Operator, ProjectorFamily, StateVector, Vector, C64};
use serde::{Deserialize, Serialize};

/// A real number or a `[re, im]` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Re(f64),
    Cx([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> C64 {
        match self {
            Scalar::Re(r) => C64::new(r, 0.0),
            Scalar::Cx([re, im]) => C64::new(re, im),
        }
    }
}

pub type MatrixInput = Vec<Vec<Scalar>>;

pub fn check_matrix(m: &MatrixInput, dim: Option<usize>, path: &str, issues: &mut Issues) -> Option<usize> {
    let n = m.len();
    if n == 0 {
        issues.push(path, "matrix is empty");
        return None;
    }
    if let Some((i, _)) = m.iter().enumerate().find(|(_, r)| r.len() != n) {
        issues.push(format!("{path}[{i}]"), format!("row length differs from {n} rows"));
        return None;
    }
    if let Some(d) = dim {
        if d != n {
            issues.push(path, format!("dimension {n}, expected {d}"));
            return None;
        }
    }
    Some(n)
}

pub fn matrix(m: &MatrixInput) -> Mat {
    let n = m.len();
    Mat::from_fn(n, n, |i, j| m[i][j].value())
}

pub fn hermitian(m: &MatrixInput) -> Result<Operator> {
    Operator::new(matrix(m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateInput {
    /// Amplitudes, normalized on load.
    Vector { amplitudes: Vec<Scalar> },
    Basis { index: usize },
    Density { matrix: MatrixInput },
}

impl StateInput {
    pub fn check(&self, dim: usize, path: &str, issues: &mut Issues) {
        match self {
            StateInput::Vector { amplitudes } => {
                if amplitudes.len() != dim {
                    issues.push(format!("{path}.amplitudes"), format!("length {}, expected {dim}", amplitudes.len()));
                } else if amplitudes.iter().all(|a| a.value().norm() == 0.0) {
                    issues.push(format!("{path}.amplitudes"), "zero vector");
                }
            }
            StateInput::Basis { index } => {
                if *index >= dim {
                    issues.push(format!("{path}.index"), format!("{index} out of range for dimension {dim}"));
                }
            }
            StateInput::Density { matrix } => {
                check_matrix(matrix, Some(dim), &format!("{path}.matrix"), issues);
            }
        }
    }

    pub fn pure(&self, dim: usize) -> Option<Result<StateVector>> {
        match self {
            StateInput::Vector { amplitudes } => Some(StateVector::normalized(Vector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| a.value())))),
            StateInput::Basis { index } => Some(StateVector::basis(dim, *index)),
            StateInput::Density { .. } => None,
        }
    }

    pub fn density(&self, dim: usize) -> Result<DensityOperator> {
        match self.pure(dim) {
            Some(psi) => Ok(DensityOperator::pure(&psi?)),
            None => match self {
                StateInput::Density { matrix: m } => DensityOperator::new(Operator::new(matrix(m))?),
                _ => unreachable!(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyInput {
    /// Projectors onto spans of basis states.
    Partition { groups: Vec<Vec<usize>>, labels: Option<Vec<String>> },
    /// Eigenprojectors of the Hamiltonian, degenerate levels merged.
    Energy {
        #[serde(default = "default_degeneracy")]
        degeneracy_tol: f64,
    },
    /// Rank-one projectors onto orthonormal vectors.
    Vectors { vectors: Vec<Vec<Scalar>>, labels: Option<Vec<String>> },
}

fn default_degeneracy() -> f64 {
    1e-9
}

fn labels_or_default(labels: &Option<Vec<String>>, n: usize) -> Vec<String> {
    labels.clone().unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect())
}

impl FamilyInput {
    pub fn check(&self, dim: usize, path: &str, issues: &mut Issues) {
        let label_count = |labels: &Option<Vec<String>>, n: usize, issues: &mut Issues| {
            if let Some(l) = labels {
                if l.len() != n {
                    issues.push(format!("{path}.labels"), format!("{} labels for {n} members", l.len()));
                }
            }
        };
        match self {
            FamilyInput::Partition { groups, labels } => {
                label_count(labels, groups.len(), issues);
                for (g, grp) in groups.iter().enumerate() {
                    if let Some(i) = grp.iter().find(|i| **i >= dim) {
                        issues.push(format!("{path}.groups[{g}]"), format!("index {i} out of range for dimension {dim}"));
                    }
                }
            }
            FamilyInput::Energy { degeneracy_tol } => {
                if !(*degeneracy_tol >= 0.0) {
                    issues.push(format!("{path}.degeneracy_tol"), "must be non-negative");
                }
            }
            FamilyInput::Vectors { vectors, labels } => {
                label_count(labels, vectors.len(), issues);
                for (v, vec) in vectors.iter().enumerate() {
                    if vec.len() != dim {
                        issues.push(format!("{path}.vectors[{v}]"), format!("length {}, expected {dim}", vec.len()));
                    }
                }
            }
        }
    }

    pub fn build(&self, h: &Operator) -> Result<ProjectorFamily> {
        let dim = h.dim();
        match self {
            FamilyInput::Partition { groups, labels } => ProjectorFamily::from_partition(dim, groups, labels_or_default(labels, groups.len())),
            FamilyInput::Energy { degeneracy_tol } => ProjectorFamily::eigenprojectors(h, *degeneracy_tol),
            FamilyInput::Vectors { vectors, labels } => {
                let vs: Vec<Vector> = vectors.iter().map(|v| Vector::from_iterator(v.len(), v.iter().map(|a| a.value()))).collect();
                ProjectorFamily::from_basis(&vs, labels_or_default(labels, vectors.len()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedOperator {
    pub name: String,
    pub matrix: MatrixInput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeInput {
    pub n_sites: usize,
    pub dx: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

pub fn one() -> f64 {
    1.0
}

impl LatticeInput {
    pub fn check(&self, path: &str, issues: &mut Issues) {
        if self.n_sites < 8 {
            issues.push(format!("{path}.n_sites"), "need at least 8 sites");
        }
        for (name, v) in [("dx", self.dx), ("mass", self.mass), ("hbar", self.hbar)] {
            issues.positive(&format!("{path}.{name}"), v);
        }
    }

    pub fn build(&self) -> Result<crate::hilbert::LatticeModel> {
        crate::hilbert::LatticeModel::centered(self.n_sites, self.dx, self.mass, self.hbar)
    }
}
