//! A classical particle coupled through λXx to a light quantum particle.
//! The classical force uses x̄ = ⟨ψ|x|ψ⟩ either from Schrödinger evolution
//! (mean field) or from a single QSD trajectory (stochastic).

use super::qsd::{step_in_place, QsdWorkspace};
use super::LindbladModel;
use crate::error::{Error, Result};
use crate::hilbert::{Mat, Operator, StateVector, Vector, C64};
use crate::rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicalPotential {
    Free,
    /// V = ½ M ω² X².
    Harmonic { omega: f64 },
}

impl ClassicalPotential {
    pub fn force_gradient(&self, mass: f64, x: f64) -> f64 {
        match *self {
            ClassicalPotential::Free => 0.0,
            ClassicalPotential::Harmonic { omega } => mass * omega * omega * x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    MeanField,
    Stochastic,
}

#[derive(Clone, Debug)]
pub struct HybridState {
    pub x: f64,
    pub xdot: f64,
    pub psi: StateVector,
    pub lambda: f64,
    pub mass: f64,
    pub gamma: f64,
    pub potential: ClassicalPotential,
}

#[derive(Clone, Debug)]
pub struct HybridConfig {
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    /// Stream index within `seed`, one per run of an ensemble.
    pub stream: u64,
    pub mode: CouplingMode,
    pub record_every: usize,
    /// (first truncated level, largest population allowed there and above).
    pub leak_guard: Option<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct HybridRun {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    /// ⟨ψ|x|ψ⟩ seen by the classical particle.
    pub xbar: Vec<f64>,
    pub final_state: StateVector,
}

fn expect(op: &Mat, v: &[C64]) -> f64 {
    let n = v.len();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            acc += v[i].conj() * op[(i, j)] * v[j];
        }
    }
    acc.re
}

/// RK4 on iψ̇ = Hψ/ħ with H held fixed over the step, then renormalized.
fn schrodinger_rk4(a: &Mat, psi: &mut [C64], dt: f64) {
    let v = Vector::from_column_slice(psi);
    let k1 = a * &v;
    let k2 = a * (&v + &k1 * C64::new(0.5 * dt, 0.0));
    let k3 = a * (&v + &k2 * C64::new(0.5 * dt, 0.0));
    let k4 = a * (&v + &k3 * C64::new(dt, 0.0));
    let next = v + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    let norm = next.norm();
    for (p, q) in psi.iter_mut().zip(next.iter()) {
        *p = q / norm;
    }
}

/// Mean-field mode: MẌ + MγẊ + V′(X) + λ⟨x⟩ = 0 with ψ under H + λXx
/// (the Lindblad operators are not used). Stochastic mode: the same
/// classical equation with x̄ from one QSD trajectory of H + λXx and the
/// model's Lindblad operators. x̄ is frozen over each step.
pub fn hybrid_simulate(state: &HybridState, model: &LindbladModel, x_op: &Operator, cfg: &HybridConfig) -> Result<HybridRun> {
    let dim = model.dim();
    if state.psi.dim() != dim || x_op.dim() != dim {
        return Err(Error::Dimension("light-particle state, model and position operator differ in dimension".into()));
    }
    if x_op.hermiticity_defect() > crate::hilbert::TOL_STRUCT {
        return Err(Error::NotHermitian { what: "position operator", defect: x_op.hermiticity_defect() });
    }
    if !(cfg.dt > 0.0) || !(state.mass > 0.0) || !(state.gamma >= 0.0) {
        return Err(Error::param("hybrid", "dt and mass must be positive, gamma non-negative"));
    }
    let record_every = cfg.record_every.max(1);
    let hbar = model.hbar();
    let coupling = x_op.matrix() * C64::new(0.0, -state.lambda / hbar);
    let base = match cfg.mode {
        CouplingMode::MeanField => model.hamiltonian().matrix() * C64::new(0.0, -1.0 / hbar),
        CouplingMode::Stochastic => model.effective_drift().clone(),
    };
    let n_l = model.lindblads().len();
    let mut rng = rng::stream(cfg.seed, cfg.stream);
    let mut ws = QsdWorkspace::new(dim, n_l);
    let mut noise = vec![C64::new(0.0, 0.0); n_l];
    let mut psi: Vec<C64> = state.psi.amplitudes().iter().copied().collect();
    let (mut x, mut v) = (state.x, state.xdot);
    let mut run = HybridRun { times: vec![0.0], x: vec![x], xdot: vec![v], xbar: vec![expect(x_op.matrix(), &psi)], final_state: state.psi.clone() };
    let accel = |x: f64, v: f64, xbar: f64| -(state.mass * state.gamma * v + state.potential.force_gradient(state.mass, x) + state.lambda * xbar) / state.mass;
    let dt = cfg.dt;
    for n in 1..=cfg.steps {
        let xbar = expect(x_op.matrix(), &psi);
        let drift = &base + &coupling * C64::new(x, 0.0);
        match cfg.mode {
            CouplingMode::MeanField => schrodinger_rk4(&drift, &mut psi, dt),
            CouplingMode::Stochastic => {
                for z in noise.iter_mut() {
                    *z = rng::complex_normal(&mut rng, dt);
                }
                step_in_place(&drift, model.lindblads(), &mut psi, dt, &noise, &mut ws)?;
            }
        }
        let (k1x, k1v) = (v, accel(x, v, xbar));
        let (k2x, k2v) = (v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, xbar));
        let (k3x, k3v) = (v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, xbar));
        let (k4x, k4v) = (v + dt * k3v, accel(x + dt * k3x, v + dt * k3v, xbar));
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if !x.is_finite() || !v.is_finite() {
            return Err(Error::guard("open-systems", "classical trajectory diverged", x));
        }
        if let Some((level, max_pop)) = cfg.leak_guard {
            let pop: f64 = psi.iter().skip(level).map(|z| z.norm_sqr()).sum();
            if pop > max_pop {
                return Err(Error::guard("open-systems", format!("truncation leak above level {level}"), pop));
            }
        }
        if n % record_every == 0 {
            run.times.push(n as f64 * dt);
            run.x.push(x);
            run.xdot.push(v);
            run.xbar.push(expect(x_op.matrix(), &psi));
        }
    }
    run.final_state = StateVector::normalized(Vector::from_vec(psi))?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::c;

    fn light(kappa: f64) -> (LindbladModel, Operator) {
        let x = Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        (LindbladModel::new(Operator::zeros(2), vec![x.scale(c(kappa.sqrt()))], 1.0).unwrap(), x)
    }

    fn cfg(mode: CouplingMode, stream: u64) -> HybridConfig {
        HybridConfig { dt: 1e-3, steps: 5000, seed: 11, stream, mode, record_every: 1000, leak_guard: None }
    }

    #[test]
    fn uncoupled_matches_damped_oscillator() {
        let (model, x) = light(1.0);
        let (m, g, w) = (1.0, 0.4, 2.0);
        let s = HybridState { x: 1.0, xdot: 0.0, psi: StateVector::basis(2, 0).unwrap(), lambda: 0.0, mass: m, gamma: g, potential: ClassicalPotential::Harmonic { omega: w } };
        let run = hybrid_simulate(&s, &model, &x, &cfg(CouplingMode::Stochastic, 0)).unwrap();
        // Underdamped solution with X(0)=1, Ẋ(0)=0.
        let wd = (w * w - g * g / 4.0).sqrt();
        for (t, xt) in run.times.iter().zip(&run.x) {
            let exact = (-g * t / 2.0).exp() * ((wd * t).cos() + g / (2.0 * wd) * (wd * t).sin());
            assert!((xt - exact).abs() < 1e-9, "t={t}: {xt} vs {exact}");
        }
    }

    #[test]
    fn localized_eigenstate_modes_agree() {
        let (model, x) = light(1.0);
        let s = HybridState { x: 0.5, xdot: 0.0, psi: StateVector::basis(2, 1).unwrap(), lambda: 0.3, mass: 1.0, gamma: 0.2, potential: ClassicalPotential::Harmonic { omega: 1.0 } };
        let a = hybrid_simulate(&s, &model, &x, &cfg(CouplingMode::MeanField, 0)).unwrap();
        let b = hybrid_simulate(&s, &model, &x, &cfg(CouplingMode::Stochastic, 0)).unwrap();
        assert!(a.x.iter().zip(&b.x).all(|(p, q)| (p - q).abs() < 1e-9));
    }

    #[test]
    fn superposition_splits_in_stochastic_mode() {
        let (model, x) = light(2.0);
        let plus = StateVector::from_complex(&[c(1.0 / 2f64.sqrt()), c(1.0 / 2f64.sqrt())]).unwrap();
        let s = HybridState { x: 0.0, xdot: 0.0, psi: plus, lambda: 1.0, mass: 1.0, gamma: 1.0, potential: ClassicalPotential::Harmonic { omega: 1.0 } };
        let mut c_ = cfg(CouplingMode::Stochastic, 0);
        c_.steps = 10_000;
        let finals: Vec<f64> = (0..20).map(|i| {
            c_.stream = i;
            *hybrid_simulate(&s, &model, &x, &c_).unwrap().x.last().unwrap()
        }).collect();
        assert!(finals.iter().any(|&v| v > 0.8) && finals.iter().any(|&v| v < -0.8));
        assert!(finals.iter().all(|v| v.abs() > 0.8));
        c_.mode = CouplingMode::MeanField;
        let mf = hybrid_simulate(&s, &model, &x, &c_).unwrap();
        assert!(mf.x.last().unwrap().abs() < 1e-6);
    }
}
