//! Markovian open-system dynamics: Lindblad integration, quantum state
//! diffusion, the lattice position master equation, decoherence functionals
//! built from reduced dynamics, and classical-quantum coupling.

mod functional;
mod hybrid;
mod lattice;
mod qsd;

pub use functional::{open_decoherence_functional, ProjectorSchedule};
pub use hybrid::{hybrid_simulate, ClassicalPotential, CouplingMode, HybridConfig, HybridRun, HybridState};
pub use lattice::{qbm_position_master_evolve, QbmDynamics, QbmLatticeModel, QbmRun, BOUNDARY_MARGIN, BOUNDARY_TOL};
pub use qsd::{qsd_ensemble, qsd_step, qsd_trajectory, EnsembleOptions, QsdEnsemble, QsdTrajectory, ENSEMBLE_BLOCK};

use crate::error::{Error, Result};
use crate::hilbert::{hermiticity_defect, DensityOperator, Mat, Operator, C64, TOL_STRUCT};

/// Step-size warning threshold on dt·‖generator‖.
pub const STEP_WARN: f64 = 0.1;
/// Trace drift that turns the step-size warning into an error.
pub const TRACE_DRIFT_MAX: f64 = 1e-5;
/// Lowest eigenvalue tolerated in an evolved density operator.
pub const POSITIVITY_FLOOR: f64 = -1e-7;

/// Linear reduced dynamics acting on arbitrary operators, including the
/// non-Hermitian two-sided objects of a decoherence functional.
pub trait OpenDynamics: Sync {
    fn dim(&self) -> usize;

    /// Evolves `x` forward by `duration`.
    fn propagate(&self, x: &Mat, duration: f64) -> Result<Mat>;
}

/// dρ/dt = −(i/ħ)[H,ρ] + Σ_j (L_j ρ L_j† − ½{L_j†L_j, ρ}).
#[derive(Clone, Debug)]
pub struct LindbladModel {
    h: Operator,
    lindblads: Vec<Operator>,
    hbar: f64,
    // −iH/ħ − ½ Σ L†L
    k: Mat,
    l_dag: Vec<Mat>,
}

impl LindbladModel {
    pub fn new(h: Operator, lindblads: Vec<Operator>, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::param("hbar", "must be positive"));
        }
        let defect = h.hermiticity_defect();
        if defect > TOL_STRUCT {
            return Err(Error::NotHermitian { what: "Lindblad Hamiltonian", defect });
        }
        if lindblads.iter().any(|l| l.dim() != h.dim()) {
            return Err(Error::Dimension("Lindblad operator and Hamiltonian dimensions differ".into()));
        }
        let l_dag: Vec<Mat> = lindblads.iter().map(|l| l.matrix().adjoint()).collect();
        let mut k = h.matrix() * C64::new(0.0, -1.0 / hbar);
        for (l, ld) in lindblads.iter().zip(&l_dag) {
            k -= (ld * l.matrix()) * C64::new(0.5, 0.0);
        }
        Ok(LindbladModel { h, lindblads, hbar, k, l_dag })
    }

    pub fn closed(h: Operator, hbar: f64) -> Result<Self> {
        Self::new(h, Vec::new(), hbar)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn lindblads(&self) -> &[Operator] {
        &self.lindblads
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// −iH/ħ − ½ Σ L†L, the non-unitary drift of the unravelled dynamics.
    pub(crate) fn effective_drift(&self) -> &Mat {
        &self.k
    }

    /// The generator applied to an arbitrary operator.
    pub fn generator(&self, x: &Mat) -> Mat {
        let mut out = &self.k * x + x * self.k.adjoint();
        for (l, ld) in self.lindblads.iter().zip(&self.l_dag) {
            out += l.matrix() * x * ld;
        }
        out
    }

    /// Upper bound on the superoperator norm: 2‖K‖ + Σ‖L‖².
    pub fn generator_norm(&self) -> f64 {
        let k = Operator::from_mat_unchecked(self.k.clone()).operator_norm();
        2.0 * k + self.lindblads.iter().map(|l| l.operator_norm().powi(2)).sum::<f64>()
    }

    pub fn rk4_step(&self, x: &Mat, dt: f64) -> Mat {
        let h = C64::new(dt, 0.0);
        let half = C64::new(0.5 * dt, 0.0);
        let k1 = self.generator(x);
        let k2 = self.generator(&(x + &k1 * half));
        let k3 = self.generator(&(x + &k2 * half));
        let k4 = self.generator(&(x + &k3 * h));
        x + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (h / 6.0)
    }
}

/// A Lindblad model paired with the largest step used to propagate it.
#[derive(Clone, Copy, Debug)]
pub struct LindbladDynamics<'a> {
    pub model: &'a LindbladModel,
    pub max_dt: f64,
}

impl OpenDynamics for LindbladDynamics<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn propagate(&self, x: &Mat, duration: f64) -> Result<Mat> {
        if duration < 0.0 {
            return Err(Error::param("duration", "must be non-negative"));
        }
        if !(self.max_dt > 0.0) {
            return Err(Error::param("max_dt", "must be positive"));
        }
        if duration == 0.0 {
            return Ok(x.clone());
        }
        let steps = (duration / self.max_dt).ceil().max(1.0) as usize;
        let dt = duration / steps as f64;
        let tr0 = x.trace();
        let mut y = x.clone();
        for _ in 0..steps {
            y = self.model.rk4_step(&y, dt);
        }
        let drift = (y.trace() - tr0).norm();
        if drift > TRACE_DRIFT_MAX {
            return Err(Error::guard("open-systems", "trace drift during propagation", drift));
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct LindbladRun {
    pub times: Vec<f64>,
    pub states: Vec<DensityOperator>,
    pub warnings: Vec<String>,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

/// Fixed-step RK4 integration of the Lindblad equation, returning every step.
pub fn lindblad_evolve(model: &LindbladModel, rho0: &DensityOperator, dt: f64, steps: usize) -> Result<LindbladRun> {
    if rho0.dim() != model.dim() {
        return Err(Error::Dimension(format!("model dim {} vs density dim {}", model.dim(), rho0.dim())));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::param("dt", "must be positive"));
    }
    let mut warnings = Vec::new();
    let stiffness = dt * model.generator_norm();
    if stiffness > STEP_WARN {
        warnings.push(format!("dt·‖generator‖ = {stiffness:.3e} exceeds {STEP_WARN}"));
    }
    let mut x = rho0.matrix().clone();
    let tr0 = x.trace().re;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let (mut max_drift, mut max_herm, mut min_eig) = (0.0f64, 0.0f64, rho0.min_eigenvalue());
    times.push(0.0);
    states.push(rho0.clone());
    for n in 1..=steps {
        x = model.rk4_step(&x, dt);
        let drift = (x.trace() - C64::new(tr0, 0.0)).norm();
        max_drift = max_drift.max(drift);
        if drift > TRACE_DRIFT_MAX {
            return Err(Error::guard("open-systems", format!("trace drift at step {n}"), drift));
        }
        max_herm = max_herm.max(hermiticity_defect(&x));
        let rho = DensityOperator::from_mat_unchecked(x.clone());
        let lo = rho.min_eigenvalue();
        min_eig = min_eig.min(lo);
        if lo < POSITIVITY_FLOOR {
            return Err(Error::guard("open-systems", format!("positivity floor at step {n}"), lo));
        }
        times.push(n as f64 * dt);
        states.push(rho);
    }
    Ok(LindbladRun {
        times,
        states,
        warnings,
        max_trace_drift: max_drift,
        max_hermiticity_defect: max_herm,
        min_eigenvalue: min_eig,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::hilbert::{c, evolve_unitary, StateVector};

    pub(crate) fn sigma_minus() -> Operator {
        Operator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap()
    }

    pub(crate) fn amplitude_damping(gamma: f64) -> LindbladModel {
        LindbladModel::new(Operator::zeros(2), vec![sigma_minus().scale(c(gamma.sqrt()))], 1.0).unwrap()
    }

    #[test]
    fn closed_model_matches_unitary() {
        let h = Operator::from_real_rows(&[&[0.3, 1.0], &[1.0, -0.2]]).unwrap();
        let model = LindbladModel::closed(h.clone(), 1.0).unwrap();
        let psi = StateVector::basis(2, 0).unwrap();
        let run = lindblad_evolve(&model, &DensityOperator::pure(&psi), 1e-3, 1000).unwrap();
        let exact = DensityOperator::pure(&evolve_unitary(&h, 1.0, &psi, 1.0).unwrap());
        assert!(run.states.last().unwrap().operator().distance(exact.operator()) < 1e-8);
    }

    #[test]
    fn amplitude_damping_closed_form() {
        let gamma = 1.0;
        let model = amplitude_damping(gamma);
        // σ₋ = |0⟩⟨1|, so index 1 is the excited level.
        let rho0 = DensityOperator::pure(&StateVector::basis(2, 1).unwrap());
        let run = lindblad_evolve(&model, &rho0, 1e-3, 2000).unwrap();
        for (t, rho) in run.times.iter().zip(&run.states).step_by(100) {
            assert!((rho.matrix()[(1, 1)].re - (-gamma * t).exp()).abs() < 1e-6);
        }
        assert!(run.warnings.is_empty());
        assert!(run.max_trace_drift < 1e-12);
    }

    #[test]
    fn dephasing_closed_form() {
        let kappa: f64 = 0.7;
        let sz = Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        let model = LindbladModel::new(Operator::zeros(2), vec![sz.scale(c(kappa.sqrt()))], 1.0).unwrap();
        let plus = StateVector::from_complex(&[c(1.0 / 2f64.sqrt()), c(1.0 / 2f64.sqrt())]).unwrap();
        let run = lindblad_evolve(&model, &DensityOperator::pure(&plus), 1e-3, 1500).unwrap();
        for (t, rho) in run.times.iter().zip(&run.states).step_by(50) {
            assert!((rho.matrix()[(0, 1)].norm() - 0.5 * (-2.0 * kappa * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn coarse_step_warns_and_drift_escalates() {
        let model = amplitude_damping(1.0);
        let rho0 = DensityOperator::pure(&StateVector::basis(2, 1).unwrap());
        let run = lindblad_evolve(&model, &rho0, 0.2, 5).map_err(|e| e.to_string()).unwrap();
        assert_eq!(run.warnings.len(), 1);
        let h = Operator::from_real_rows(&[&[1e3, 0.0], &[0.0, -1e3]]).unwrap();
        let stiff = LindbladModel::new(h, vec![sigma_minus().scale(c(30.0))], 1.0).unwrap();
        let err = lindblad_evolve(&stiff, &rho0, 0.5, 4).unwrap_err();
        assert!(err.is_guard());
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        assert!(LindbladModel::closed(sigma_minus(), 1.0).is_err());
    }
}
