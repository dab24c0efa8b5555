//! Discrete Wigner transform on a position lattice.
//!
//! W(x_n, p) = (1/πħ) Σ_k ρ_{n+k,n−k} e^{−2ipk·dx/ħ}. On the lattice the
//! p axis is periodic with period πħ/dx; the p-marginal over a full period is
//! exactly ρ_nn/dx once the grid has more than (N−1)/2 points.

use super::{DensityOperator, LatticeModel, C64};
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Uniform momentum grid p_j = p_min + j·dp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PGrid {
    pub p_min: f64,
    pub dp: f64,
    pub n_p: usize,
}

impl PGrid {
    /// One full period [−πħ/2dx, πħ/2dx) sampled at `n_p` points.
    pub fn full_period(lattice: &LatticeModel, n_p: usize) -> Self {
        let period = PI * lattice.hbar() / lattice.dx();
        PGrid { p_min: -0.5 * period, dp: period / n_p as f64, n_p }
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp
    }
}

#[derive(Clone, Debug)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Row-major: `values[ix * p.len() + jp]`.
    pub values: Vec<f64>,
    pub dx: f64,
    pub dp: f64,
    /// max_n |Σ_j W dp − ρ_nn/dx| · dx.
    pub marginal_error: f64,
}

impl WignerGrid {
    pub fn at(&self, ix: usize, jp: usize) -> f64 {
        self.values[ix * self.p.len() + jp]
    }

    /// Σ W dx dp.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dp
    }

    /// Σ_{W<0} |W| / Σ |W|.
    pub fn negative_fraction(&self) -> f64 {
        let neg: f64 = self.values.iter().filter(|w| **w < 0.0).map(|w| -w).sum();
        let all: f64 = self.values.iter().map(|w| w.abs()).sum();
        if all == 0.0 {
            0.0
        } else {
            neg / all
        }
    }
}

/// Marginal tolerance above which the grid is reported as too coarse.
pub const WIGNER_MARGINAL_TOL: f64 = 1e-6;

pub fn wigner_transform(rho: &DensityOperator, lattice: &LatticeModel, grid: PGrid) -> Result<WignerGrid> {
    let n = lattice.n_sites();
    if rho.dim() != n {
        return Err(Error::Dimension(format!("density dim {} vs lattice {}", rho.dim(), n)));
    }
    if grid.n_p == 0 || !(grid.dp > 0.0) {
        return Err(Error::param("p_grid", "need n_p > 0 and dp > 0"));
    }
    let m = rho.matrix();
    let hbar = lattice.hbar();
    let dx = lattice.dx();
    let ps: Vec<f64> = (0..grid.n_p).map(|j| grid.p(j)).collect();
    let norm = 1.0 / (PI * hbar);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let kmax = i.min(n - 1 - i);
            ps.iter()
                .map(|&p| {
                    let base = C64::from_polar(1.0, -2.0 * p * dx / hbar);
                    let mut phase = C64::new(1.0, 0.0);
                    let mut acc = 0.0;
                    for k in 1..=kmax {
                        phase *= base;
                        acc += (m[(i + k, i - k)] * phase).re;
                    }
                    norm * (m[(i, i)].re + 2.0 * acc)
                })
                .collect()
        })
        .collect();
    let mut marginal_error = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        let marg = row.iter().sum::<f64>() * grid.dp;
        marginal_error = marginal_error.max((marg - m[(i, i)].re / dx).abs() * dx);
    }
    if marginal_error > WIGNER_MARGINAL_TOL {
        return Err(Error::guard("hilbert", "Wigner p-marginal differs from position diagonal; grid too coarse", marginal_error));
    }
    Ok(WignerGrid {
        x: lattice.positions(),
        p: ps,
        values: rows.into_iter().flatten().collect(),
        dx,
        dp: grid.dp,
        marginal_error,
    })
}
