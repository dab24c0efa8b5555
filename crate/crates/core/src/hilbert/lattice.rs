//! Uniform 1D position lattice with Dirichlet ends.

use super::{c, Mat, Operator, StateVector, Vector, C64};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Finite-difference stencil for −∂².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Second-order, nearest neighbour.
    #[default]
    ThreePoint,
    /// Fourth-order, next-nearest neighbour.
    FivePoint,
}

impl Stencil {
    /// Offsets and weights of −∂² in units of 1/dx².
    fn weights(self) -> &'static [(isize, f64)] {
        match self {
            Stencil::ThreePoint => &[(-1, -1.0), (0, 2.0), (1, -1.0)],
            Stencil::FivePoint => &[
                (-2, 1.0 / 12.0),
                (-1, -16.0 / 12.0),
                (0, 30.0 / 12.0),
                (1, -16.0 / 12.0),
                (2, 1.0 / 12.0),
            ],
        }
    }

    pub fn reach(self) -> usize {
        match self {
            Stencil::ThreePoint => 1,
            Stencil::FivePoint => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeModel {
    n_sites: usize,
    x_min: f64,
    dx: f64,
    mass: f64,
    potential: Vec<f64>,
    hbar: f64,
    stencil: Stencil,
}

impl LatticeModel {
    pub fn new(x_min: f64, dx: f64, mass: f64, potential: Vec<f64>, hbar: f64, stencil: Stencil) -> Result<Self> {
        let n_sites = potential.len();
        if n_sites < 2 {
            return Err(Error::param("n_sites", "need at least 2 sites"));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::param("dx", "must be positive"));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::param("mass", "must be positive"));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::param("hbar", "must be positive"));
        }
        if !x_min.is_finite() || potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("potential", "non-finite value"));
        }
        Ok(LatticeModel { n_sites, x_min, dx, mass, potential, hbar, stencil })
    }

    pub fn free(n_sites: usize, x_min: f64, dx: f64, mass: f64, hbar: f64) -> Result<Self> {
        Self::new(x_min, dx, mass, vec![0.0; n_sites], hbar, Stencil::ThreePoint)
    }

    /// Lattice centred so that site `n_sites / 2` sits at x = 0.
    pub fn centered(n_sites: usize, dx: f64, mass: f64, hbar: f64) -> Result<Self> {
        Self::free(n_sites, -((n_sites / 2) as f64) * dx, dx, mass, hbar)
    }

    pub fn with_potential(mut self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.potential = (0..self.n_sites).map(|i| f(self.x(i))).collect();
        Self::new(self.x_min, self.dx, self.mass, self.potential, self.hbar, self.stencil)
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn with_mass(mut self, mass: f64) -> Result<Self> {
        self.mass = mass;
        Self::new(self.x_min, self.dx, self.mass, self.potential, self.hbar, self.stencil)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_sites).map(|i| self.x(i)).collect()
    }

    /// ħ²/(2M dx²).
    pub fn hopping(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass * self.dx * self.dx)
    }

    /// Kinetic stencil offsets with weights in energy units.
    pub(crate) fn coeffs(&self) -> Vec<(isize, f64)> {
        let k = self.hopping();
        self.stencil.weights().iter().map(|&(o, w)| (o, w * k)).collect()
    }

    /// −ħ²/2M ∂² + V as a dense operator.
    pub fn hamiltonian(&self) -> Operator {
        let n = self.n_sites;
        let mut m = Mat::zeros(n, n);
        for (o, w) in self.coeffs() {
            for i in 0..n {
                let j = i as isize + o;
                if j >= 0 && (j as usize) < n {
                    m[(i, j as usize)] += c(w);
                }
            }
        }
        for i in 0..n {
            m[(i, i)] += c(self.potential[i]);
        }
        Operator::from_mat_unchecked(m)
    }

    /// H ψ without forming H.
    pub fn apply(&self, psi: &Vector) -> Vector {
        let n = self.n_sites;
        let coeffs = self.coeffs();
        Vector::from_fn(n, |i, _| {
            let mut acc = psi[i] * self.potential[i];
            for &(o, w) in &coeffs {
                let j = i as isize + o;
                if j >= 0 && (j as usize) < n {
                    acc += psi[j as usize] * w;
                }
            }
            acc
        })
    }

    /// H X for a square matrix X, exploiting the band structure.
    pub fn left_apply(&self, x: &Mat) -> Mat {
        let n = self.n_sites;
        let coeffs = self.coeffs();
        let mut out = Mat::zeros(n, n);
        for j in 0..n {
            let src = x.column(j);
            let mut dst = out.column_mut(j);
            for i in 0..n {
                let mut acc = src[i] * self.potential[i];
                for &(o, w) in &coeffs {
                    let k = i as isize + o;
                    if k >= 0 && (k as usize) < n {
                        acc += src[k as usize] * w;
                    }
                }
                dst[i] = acc;
            }
        }
        out
    }

    /// X H for a square matrix X, exploiting the band structure.
    pub fn right_apply(&self, x: &Mat) -> Mat {
        let n = self.n_sites;
        let coeffs = self.coeffs();
        let mut out = Mat::zeros(n, n);
        for j in 0..n {
            let mut col: Vec<C64> = x.column(j).iter().map(|z| z * self.potential[j]).collect();
            for &(o, w) in &coeffs {
                let k = j as isize + o;
                if k >= 0 && (k as usize) < n {
                    for (d, s) in col.iter_mut().zip(x.column(k as usize).iter()) {
                        *d += s * w;
                    }
                }
            }
            out.column_mut(j).copy_from_slice(&col);
        }
        out
    }

    /// Kinetic energy the interior stencil assigns to e^{ikx}.
    pub fn plane_wave_energy(&self, k: f64) -> f64 {
        let theta = k * self.dx;
        self.stencil.weights().iter().map(|&(o, w)| w * (o as f64 * theta).cos()).sum::<f64>() * self.hopping()
    }

    /// Normalized exp(−(x−x0)²/4σ² + i k0 x).
    pub fn gaussian(&self, x0: f64, k0: f64, sigma: f64) -> Result<StateVector> {
        if !(sigma > 0.0) {
            return Err(Error::param("sigma", "must be positive"));
        }
        let v = Vector::from_fn(self.n_sites, |i, _| {
            let x = self.x(i);
            C64::from_polar((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), k0 * x)
        });
        StateVector::normalized(v)
    }

    /// Probability held within `margin` sites of either end.
    pub fn boundary_mass(&self, diag: &[f64], margin: usize) -> f64 {
        let n = self.n_sites;
        let m = margin.min(n / 2);
        diag[..m].iter().sum::<f64>() + diag[n - m..].iter().sum::<f64>()
    }

    /// Site index nearest to x, if inside the lattice.
    pub fn site_of(&self, x: f64) -> Option<usize> {
        let r = ((x - self.x_min) / self.dx).round();
        if r >= 0.0 && (r as usize) < self.n_sites {
            Some(r as usize)
        } else {
            None
        }
    }
}
