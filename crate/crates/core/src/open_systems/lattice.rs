//! Position-space master equation on a lattice:
//! ∂ρ/∂t = −(i/ħ)[H,ρ] − γ(x−y)(∂x−∂y)ρ − D(x−y)²ρ.

use super::{OpenDynamics, TRACE_DRIFT_MAX};
use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, LatticeModel, Mat, C64};
use rayon::prelude::*;

/// Sites at each end inspected by the boundary guard.
pub const BOUNDARY_MARGIN: usize = 3;
/// Largest probability allowed near the lattice ends.
pub const BOUNDARY_TOL: f64 = 1e-8;
// RK4 reaches ±2.83i on the imaginary axis.
const RK4_STABILITY: f64 = 2.8;

#[derive(Clone, Debug)]
pub struct QbmLatticeModel {
    lattice: LatticeModel,
    d_loc: f64,
    gamma: f64,
    temperature: f64,
    kinetic: bool,
}

impl QbmLatticeModel {
    /// `temperature` is kT in energy units; it enters only through `d_loc`
    /// when the model is built with [`QbmLatticeModel::thermal`].
    pub fn new(lattice: LatticeModel, d_loc: f64, gamma: f64, temperature: f64) -> Result<Self> {
        if !(d_loc >= 0.0) || !d_loc.is_finite() {
            return Err(Error::param("d_loc", "must be non-negative"));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::param("gamma", "must be non-negative"));
        }
        if !(temperature >= 0.0) || !temperature.is_finite() {
            return Err(Error::param("temperature", "must be non-negative"));
        }
        Ok(QbmLatticeModel { lattice, d_loc, gamma, temperature, kinetic: true })
    }

    /// D = 2MγkT/ħ².
    pub fn thermal(lattice: LatticeModel, gamma: f64, kt: f64) -> Result<Self> {
        let d = 2.0 * lattice.mass() * gamma * kt / lattice.hbar().powi(2);
        Self::new(lattice, d, gamma, kt)
    }

    /// Drops the kinetic term (the M → ∞ limit); the potential still acts.
    pub fn without_kinetic(mut self) -> Self {
        self.kinetic = false;
        self
    }

    pub fn lattice(&self) -> &LatticeModel {
        &self.lattice
    }

    pub fn d_loc(&self) -> f64 {
        self.d_loc
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn kinetic(&self) -> bool {
        self.kinetic
    }

    fn coeffs(&self) -> Vec<(isize, f64)> {
        if self.kinetic {
            self.lattice.coeffs()
        } else {
            Vec::new()
        }
    }

    /// Bound on the spectral radius of the unitary-plus-dissipative part.
    fn stiffness(&self) -> f64 {
        let kin: f64 = self.coeffs().iter().map(|(_, w)| w.abs()).sum();
        let v = self.lattice.potential().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let span = (self.lattice.n_sites() - 1) as f64 * self.lattice.dx();
        2.0 * (kin + v) / self.lattice.hbar() + 2.0 * self.gamma * span / self.lattice.dx()
    }

    /// Right-hand side without the dephasing term, on column-major storage.
    fn rhs(&self, coeffs: &[(isize, f64)], x: &[C64], out: &mut [C64]) {
        let n = self.lattice.n_sites();
        let v = self.lattice.potential();
        let pos = self.lattice.positions();
        let mi = C64::new(0.0, -1.0 / self.lattice.hbar());
        let g = self.gamma / (2.0 * self.lattice.dx());
        let at = |i: isize, j: isize| -> C64 {
            if i < 0 || j < 0 || i as usize >= n || j as usize >= n {
                C64::new(0.0, 0.0)
            } else {
                x[j as usize * n + i as usize]
            }
        };
        out.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
            let jj = j as isize;
            for (i, o) in col.iter_mut().enumerate() {
                let ii = i as isize;
                let mut comm = x[j * n + i] * (v[i] - v[j]);
                for &(off, w) in coeffs {
                    comm += (at(ii + off, jj) - at(ii, jj - off)) * w;
                }
                let mut val = comm * mi;
                if g != 0.0 {
                    let grad = at(ii + 1, jj) - at(ii - 1, jj) - at(ii, jj + 1) + at(ii, jj - 1);
                    val -= grad * (g * (pos[i] - pos[j]));
                }
                *o = val;
            }
        });
    }

    fn rk4(&self, coeffs: &[(isize, f64)], x: &mut [C64], dt: f64, scratch: &mut [Vec<C64>; 3]) {
        let [k, acc, tmp] = scratch;
        self.rhs(coeffs, x, k);
        acc.iter_mut().zip(k.iter()).for_each(|(a, b)| *a = *b);
        tmp.iter_mut().zip(x.iter().zip(k.iter())).for_each(|(t, (a, b))| *t = a + b * (0.5 * dt));
        self.rhs(coeffs, tmp, k);
        acc.iter_mut().zip(k.iter()).for_each(|(a, b)| *a += b * 2.0);
        tmp.iter_mut().zip(x.iter().zip(k.iter())).for_each(|(t, (a, b))| *t = a + b * (0.5 * dt));
        self.rhs(coeffs, tmp, k);
        acc.iter_mut().zip(k.iter()).for_each(|(a, b)| *a += b * 2.0);
        tmp.iter_mut().zip(x.iter().zip(k.iter())).for_each(|(t, (a, b))| *t = a + b * dt);
        self.rhs(coeffs, tmp, k);
        x.iter_mut().zip(acc.iter().zip(k.iter())).for_each(|(a, (s, b))| *a += (s + b) * (dt / 6.0));
    }

    fn dephasing_factors(&self, dt: f64) -> Vec<f64> {
        let n = self.lattice.n_sites();
        let pos = self.lattice.positions();
        let mut f = vec![1.0; n * n];
        if self.d_loc > 0.0 {
            for j in 0..n {
                for i in 0..n {
                    f[j * n + i] = (-self.d_loc * (pos[i] - pos[j]).powi(2) * dt).exp();
                }
            }
        }
        f
    }

    /// Strang splitting: exact half-step dephasing around an RK4 step of
    /// the remaining terms.
    pub(crate) fn evolve_raw(&self, x: &Mat, dt: f64, steps: usize) -> Result<Mat> {
        let n = self.lattice.n_sites();
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::Dimension(format!("operator is {}×{} on a {n}-site lattice", x.nrows(), x.ncols())));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", "must be positive"));
        }
        let stiff = dt * self.stiffness();
        if stiff > RK4_STABILITY {
            return Err(Error::guard("open-systems", "lattice RK4 step outside the stability region", stiff));
        }
        let coeffs = self.coeffs();
        let half = self.dephasing_factors(0.5 * dt);
        let full: Vec<f64> = half.iter().map(|h| h * h).collect();
        let unitary_free = coeffs.is_empty() && self.gamma == 0.0 && self.lattice.potential().iter().all(|&v| v == 0.0);
        let mut y: Vec<C64> = x.as_slice().to_vec();
        let mut scratch = [vec![C64::new(0.0, 0.0); n * n], vec![C64::new(0.0, 0.0); n * n], vec![C64::new(0.0, 0.0); n * n]];
        let tr0: C64 = (0..n).map(|i| y[i * n + i]).sum();
        for s in 0..steps {
            let f = if s == 0 { &half } else { &full };
            y.iter_mut().zip(f).for_each(|(a, b)| *a *= b);
            if !unitary_free {
                self.rk4(&coeffs, &mut y, dt, &mut scratch);
            }
        }
        if steps > 0 {
            y.iter_mut().zip(&half).for_each(|(a, b)| *a *= b);
        }
        let tr: C64 = (0..n).map(|i| y[i * n + i]).sum();
        let drift = (tr - tr0).norm();
        if drift > TRACE_DRIFT_MAX {
            return Err(Error::guard("open-systems", "trace drift in lattice master equation", drift));
        }
        let out = Mat::from_vec(n, n, y);
        let diag: Vec<f64> = (0..n).map(|i| out[(i, i)].norm()).collect();
        let edge = self.lattice.boundary_mass(&diag, BOUNDARY_MARGIN);
        if edge > BOUNDARY_TOL {
            return Err(Error::guard("open-systems", "probability reached the lattice boundary", edge));
        }
        Ok(out)
    }
}

/// The lattice model paired with the largest Strang step.
#[derive(Clone, Copy, Debug)]
pub struct QbmDynamics<'a> {
    pub model: &'a QbmLatticeModel,
    pub max_dt: f64,
}

impl OpenDynamics for QbmDynamics<'_> {
    fn dim(&self) -> usize {
        self.model.lattice.n_sites()
    }

    fn propagate(&self, x: &Mat, duration: f64) -> Result<Mat> {
        if duration < 0.0 {
            return Err(Error::param("duration", "must be non-negative"));
        }
        if duration == 0.0 {
            return Ok(x.clone());
        }
        let steps = (duration / self.max_dt).ceil().max(1.0) as usize;
        self.model.evolve_raw(x, duration / steps as f64, steps)
    }
}

#[derive(Clone, Debug)]
pub struct QbmRun {
    pub state: DensityOperator,
    pub trace_drift: f64,
    pub boundary_mass: f64,
}

pub fn qbm_position_master_evolve(model: &QbmLatticeModel, rho0: &DensityOperator, dt: f64, steps: usize) -> Result<QbmRun> {
    let n = model.lattice.n_sites();
    if rho0.dim() != n {
        return Err(Error::Dimension(format!("density dim {} on a {n}-site lattice", rho0.dim())));
    }
    let diag0: Vec<f64> = (0..n).map(|i| rho0.matrix()[(i, i)].re).collect();
    let edge0 = model.lattice.boundary_mass(&diag0, BOUNDARY_MARGIN);
    if edge0 > BOUNDARY_TOL {
        return Err(Error::guard("open-systems", "initial state touches the lattice boundary", edge0));
    }
    let out = model.evolve_raw(rho0.matrix(), dt, steps)?;
    let trace_drift = (out.trace() - rho0.matrix().trace()).norm();
    let diag: Vec<f64> = (0..n).map(|i| out[(i, i)].re).collect();
    let boundary_mass = model.lattice.boundary_mass(&diag, BOUNDARY_MARGIN);
    Ok(QbmRun { state: DensityOperator::from_mat_unchecked(out), trace_drift, boundary_mass })
}
