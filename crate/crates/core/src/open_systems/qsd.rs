//! Quantum state diffusion: Euler–Maruyama steps of the Gisin–Percival
//! equation with explicit renormalization.

use super::LindbladModel;
use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, Mat, Operator, StateVector, Vector, C64};
use crate::rng;
use rayon::prelude::*;

/// Trajectories per reduction block. Blocks are summed internally in index
/// order and then combined in block order, so the ensemble mean is
/// independent of scheduling.
pub const ENSEMBLE_BLOCK: usize = 64;

const NORM_COLLAPSE: f64 = 1e-12;

fn matvec(m: &Mat, v: &[C64], out: &mut [C64]) {
    let n = v.len();
    out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    for (k, &vk) in v.iter().enumerate() {
        if vk == C64::new(0.0, 0.0) {
            continue;
        }
        let col = &m.as_slice()[k * n..(k + 1) * n];
        for (o, &a) in out.iter_mut().zip(col) {
            *o += a * vk;
        }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C64::new(0.0, 0.0), |s, (x, y)| s + x.conj() * y)
}

/// Scratch buffers for the stepping loop.
pub(crate) struct QsdWorkspace {
    drift: Vec<C64>,
    l_psi: Vec<Vec<C64>>,
    next: Vec<C64>,
}

impl QsdWorkspace {
    pub(crate) fn new(dim: usize, n_l: usize) -> Self {
        QsdWorkspace { drift: vec![C64::new(0.0, 0.0); dim], l_psi: vec![vec![C64::new(0.0, 0.0); dim]; n_l], next: vec![C64::new(0.0, 0.0); dim] }
    }
}

/// One Euler–Maruyama step in place, with `k` = −iH/ħ − ½ΣL†L:
/// dψ = [Kψ + Σ (⟨L⟩* Lψ − ½|⟨L⟩|² ψ)] dt + Σ (L − ⟨L⟩)ψ dξ.
pub(crate) fn step_in_place(k: &Mat, ls: &[Operator], psi: &mut [C64], dt: f64, noise: &[C64], ws: &mut QsdWorkspace) -> Result<()> {
    matvec(k, psi, &mut ws.drift);
    for (j, l) in ls.iter().enumerate() {
        matvec(l.matrix(), psi, &mut ws.l_psi[j]);
    }
    for (i, out) in ws.next.iter_mut().enumerate() {
        *out = psi[i] + ws.drift[i] * dt;
    }
    for (j, lp) in ws.l_psi.iter().enumerate() {
        let mean = dot(psi, lp);
        let a = mean.conj() * dt + noise[j];
        let b = -(0.5 * mean.norm_sqr() * dt) - mean * noise[j];
        for (i, out) in ws.next.iter_mut().enumerate() {
            *out += lp[i] * a + psi[i] * b;
        }
    }
    let norm = ws.next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > NORM_COLLAPSE) || !norm.is_finite() {
        return Err(Error::guard("open-systems", "QSD norm collapse before renormalization", norm));
    }
    for (p, q) in psi.iter_mut().zip(&ws.next) {
        *p = q / norm;
    }
    Ok(())
}

/// Deterministic given (ψ, dt, noise); `noise[j]` is the increment dξ_j.
pub fn qsd_step(model: &LindbladModel, psi: &StateVector, dt: f64, noise: &[C64]) -> Result<StateVector> {
    if psi.dim() != model.dim() {
        return Err(Error::Dimension("state and model dimensions differ".into()));
    }
    if noise.len() != model.lindblads().len() {
        return Err(Error::Dimension(format!("{} noise increments for {} Lindblad operators", noise.len(), model.lindblads().len())));
    }
    let mut v: Vec<C64> = psi.amplitudes().iter().copied().collect();
    let mut ws = QsdWorkspace::new(model.dim(), noise.len());
    step_in_place(model.effective_drift(), model.lindblads(), &mut v, dt, noise, &mut ws)?;
    StateVector::normalized(Vector::from_vec(v))
}

#[derive(Clone, Debug)]
pub struct QsdTrajectory {
    pub seed: u64,
    pub index: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

fn check_inputs(model: &LindbladModel, psi0: &StateVector, dt: f64, record_every: usize) -> Result<()> {
    if psi0.dim() != model.dim() {
        return Err(Error::Dimension("state and model dimensions differ".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::param("dt", "must be positive"));
    }
    if record_every == 0 {
        return Err(Error::param("record_every", "must be at least 1"));
    }
    Ok(())
}

/// Runs trajectory `index` of the stream family keyed by `master_seed`,
/// keeping every `record_every`-th state (the initial state included).
pub fn qsd_trajectory(
    model: &LindbladModel,
    psi0: &StateVector,
    dt: f64,
    steps: usize,
    master_seed: u64,
    index: u64,
    record_every: usize,
) -> Result<QsdTrajectory> {
    check_inputs(model, psi0, dt, record_every)?;
    let mut times = vec![0.0];
    let mut states = vec![psi0.clone()];
    run_trajectory(model, psi0, dt, steps, master_seed, index, record_every, |n, v| {
        times.push(n as f64 * dt);
        states.push(StateVector::from_vec_unchecked(Vector::from_column_slice(v)));
    })?;
    Ok(QsdTrajectory { seed: master_seed, index, dt, times, states })
}

#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    model: &LindbladModel,
    psi0: &StateVector,
    dt: f64,
    steps: usize,
    master_seed: u64,
    index: u64,
    record_every: usize,
    mut record: impl FnMut(usize, &[C64]),
) -> Result<()> {
    let n_l = model.lindblads().len();
    let mut rng = rng::stream(master_seed, index);
    let mut ws = QsdWorkspace::new(model.dim(), n_l);
    let mut psi: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    let mut noise = vec![C64::new(0.0, 0.0); n_l];
    for n in 1..=steps {
        for z in noise.iter_mut() {
            *z = rng::complex_normal(&mut rng, dt);
        }
        step_in_place(model.effective_drift(), model.lindblads(), &mut psi, dt, &noise, &mut ws)?;
        if n % record_every == 0 {
            record(n, &psi);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct EnsembleOptions {
    pub record_every: usize,
    /// Hermitian observables whose per-trajectory expectations are kept.
    pub observables: Vec<Operator>,
}

#[derive(Clone, Debug)]
pub struct QsdEnsemble {
    pub master_seed: u64,
    pub n_traj: usize,
    pub times: Vec<f64>,
    /// ρ̄(t) = (1/N) Σ |ψ_i(t)⟩⟨ψ_i(t)| at each recorded time.
    pub mean: Vec<DensityOperator>,
    /// records[i][t][k] = Re⟨ψ_i(t)|O_k|ψ_i(t)⟩.
    pub records: Vec<Vec<Vec<f64>>>,
}

struct BlockSum {
    sums: Vec<Mat>,
    records: Vec<Vec<Vec<f64>>>,
}

/// Ensemble of `n_traj` trajectories; trajectory i draws from
/// `rng::stream(master_seed, i)`.
pub fn qsd_ensemble(
    model: &LindbladModel,
    psi0: &StateVector,
    dt: f64,
    steps: usize,
    n_traj: usize,
    master_seed: u64,
    opts: &EnsembleOptions,
) -> Result<QsdEnsemble> {
    let record_every = opts.record_every.max(1);
    check_inputs(model, psi0, dt, record_every)?;
    if n_traj == 0 {
        return Err(Error::param("n_traj", "must be at least 1"));
    }
    if opts.observables.iter().any(|o| o.dim() != model.dim()) {
        return Err(Error::Dimension("observable and model dimensions differ".into()));
    }
    let dim = model.dim();
    let n_rec = steps / record_every + 1;
    let outer = |v: &[C64], acc: &mut Mat| {
        for j in 0..dim {
            let cj = v[j].conj();
            for i in 0..dim {
                acc[(i, j)] += v[i] * cj;
            }
        }
    };
    let expect = |v: &[C64]| -> Vec<f64> {
        opts.observables
            .iter()
            .map(|o| {
                let mut w = vec![C64::new(0.0, 0.0); dim];
                matvec(o.matrix(), v, &mut w);
                dot(v, &w).re
            })
            .collect()
    };
    let n_blocks = n_traj.div_ceil(ENSEMBLE_BLOCK);
    let blocks: Vec<BlockSum> = (0..n_blocks)
        .into_par_iter()
        .map(|b| -> Result<BlockSum> {
            let mut sums = vec![Mat::zeros(dim, dim); n_rec];
            let mut records = Vec::new();
            for i in b * ENSEMBLE_BLOCK..((b + 1) * ENSEMBLE_BLOCK).min(n_traj) {
                let v0: Vec<C64> = psi0.amplitudes().iter().copied().collect();
                outer(&v0, &mut sums[0]);
                let mut rec = vec![expect(&v0)];
                run_trajectory(model, psi0, dt, steps, master_seed, i as u64, record_every, |n, v| {
                    outer(v, &mut sums[n / record_every]);
                    rec.push(expect(v));
                })?;
                records.push(rec);
            }
            Ok(BlockSum { sums, records })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut totals = vec![Mat::zeros(dim, dim); n_rec];
    let mut records = Vec::with_capacity(n_traj);
    for block in blocks {
        for (t, s) in totals.iter_mut().zip(&block.sums) {
            *t += s;
        }
        records.extend(block.records);
    }
    let scale = C64::new(1.0 / n_traj as f64, 0.0);
    let mean = totals.into_iter().map(|m| DensityOperator::from_mat_unchecked(m * scale)).collect();
    let times = (0..n_rec).map(|k| (k * record_every) as f64 * dt).collect();
    Ok(QsdEnsemble { master_seed, n_traj, times, mean, records })
}
