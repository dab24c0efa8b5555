//! Quantum Brownian motion in the Fokker–Planck limit: kernel amplitudes,
//! suppression exponent, fluctuation width, decoherence length, the
//! dissipative residual F[X] and Gaussian coarse-grained path weights.
//!
//! Continuous-time integrals use the trapezoid rule on the path grid.
//! Path weights are unnormalized; only ratios on a common grid mean anything.

use crate::error::{Error, Result};
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadraticPotential {
    Free,
    /// V = ½ M ω² x².
    Harmonic { omega: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QbmParams {
    pub mass: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub sigma: f64,
    pub hbar: f64,
    pub k_b: f64,
    pub potential: QuadraticPotential,
}

impl QbmParams {
    /// Natural units ħ = k = 1, free particle.
    pub fn natural(mass: f64, gamma: f64, temperature: f64, sigma: f64) -> Self {
        QbmParams { mass, gamma, temperature, sigma, hbar: 1.0, k_b: 1.0, potential: QuadraticPotential::Free }
    }

    /// cgs constants from [`crate::hilbert::constants`].
    pub fn cgs(mass: f64, gamma: f64, temperature: f64, sigma: f64) -> Self {
        use crate::hilbert::constants::{HBAR_CGS, K_B_CGS};
        QbmParams { mass, gamma, temperature, sigma, hbar: HBAR_CGS, k_b: K_B_CGS, potential: QuadraticPotential::Free }
    }

    pub fn with_potential(mut self, potential: QuadraticPotential) -> Self {
        self.potential = potential;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [("mass", self.mass), ("sigma", self.sigma), ("hbar", self.hbar), ("k_b", self.k_b)];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("temperature", self.temperature)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be non-negative and finite"));
            }
        }
        if let QuadraticPotential::Harmonic { omega } = self.potential {
            if !(omega > 0.0) || !omega.is_finite() {
                return Err(Error::param("potential.omega", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn kt(&self) -> f64 {
        self.k_b * self.temperature
    }

    pub fn v_prime(&self, x: f64) -> f64 {
        match self.potential {
            QuadraticPotential::Free => 0.0,
            QuadraticPotential::Harmonic { omega } => self.mass * omega * omega * x,
        }
    }
}

/// Coefficients of η = Mγ δ′ and ν = (2MγkT/ħ) δ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpKernels {
    pub eta: f64,
    pub nu: f64,
}

pub fn fp_kernels(p: &QbmParams) -> Result<FpKernels> {
    p.validate()?;
    Ok(FpKernels { eta: p.mass * p.gamma, nu: 2.0 * p.mass * p.gamma * p.kt() / p.hbar })
}

/// 2MγkTσ²/ħ²; the off-diagonal factor is exp(−exponent).
pub fn suppression_exponent(p: &QbmParams) -> Result<f64> {
    p.validate()?;
    Ok(2.0 * p.mass * p.gamma * p.kt() * p.sigma * p.sigma / (p.hbar * p.hbar))
}

/// (ΔF)² = ħ²/σ² + 4MγkT.
pub fn fluctuation_width(p: &QbmParams) -> Result<f64> {
    p.validate()?;
    Ok(p.hbar * p.hbar / (p.sigma * p.sigma) + 4.0 * p.mass * p.gamma * p.kt())
}

/// ℓ² = 2σ² + ħ²/(4MγkT); infinite when MγkT = 0.
pub fn decoherence_length(p: &QbmParams) -> Result<f64> {
    p.validate()?;
    let thermal = 4.0 * p.mass * p.gamma * p.kt();
    if thermal == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * p.sigma * p.sigma + p.hbar * p.hbar / thermal)
}

/// Positions x̄_k at t_0 + k·dt, k = 0..=K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SampledPath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param("path.values", "need K ≥ 1 (at least two samples)"));
        }
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("path", "dt must be positive and all values finite"));
        }
        Ok(SampledPath { t0, dt, values })
    }

    pub fn from_fn(t0: f64, dt: f64, k: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(t0, dt, (0..=k).map(|i| f(t0 + i as f64 * dt)).collect())
    }

    /// K, the number of intervals.
    pub fn k(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    fn same_grid(&self, other: &SampledPath) -> bool {
        self.values.len() == other.values.len() && self.dt == other.dt && self.t0 == other.t0
    }
}

/// Trapezoid weights (in units of dt) on K+1 nodes.
fn trapezoid(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    w[0] = 0.5;
    w[n - 1] = 0.5;
    w
}

/// F_k = M X″ + Mγ X′ + V′(X_k) with central differences, interior nodes k = 1..K−1.
pub fn classical_residual(path: &SampledPath, p: &QbmParams) -> Result<Vec<f64>> {
    p.validate()?;
    if path.k() < 3 {
        return Err(Error::param("path.values", format!("residual needs K ≥ 3, got K = {}", path.k())));
    }
    Ok(residual_raw(&path.values, path.dt, p))
}

fn residual_raw(x: &[f64], dt: f64, p: &QbmParams) -> Vec<f64> {
    (1..x.len() - 1)
        .map(|k| {
            let acc = (x[k + 1] - 2.0 * x[k] + x[k - 1]) / (dt * dt);
            let vel = (x[k + 1] - x[k - 1]) / (2.0 * dt);
            p.mass * acc + p.mass * p.gamma * vel + p.v_prime(x[k])
        })
        .collect()
}

/// Ẋ_0 one-sided: second order when three samples exist, first order otherwise.
fn initial_velocity(x: &[f64], dt: f64) -> f64 {
    if x.len() >= 3 {
        (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt)
    } else {
        (x[1] - x[0]) / dt
    }
}

/// Gaussian Wigner function over (x, p).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianWigner {
    pub mean_x: f64,
    pub mean_p: f64,
    /// [[var_x, cov_xp], [cov_xp, var_p]].
    pub cov: [[f64; 2]; 2],
}

impl GaussianWigner {
    pub fn new(mean_x: f64, mean_p: f64, cov: [[f64; 2]; 2], hbar: f64) -> Result<Self> {
        if cov[0][1] != cov[1][0] {
            return Err(Error::param("wigner.cov", "must be symmetric"));
        }
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(cov[0][0] > 0.0) || !(det > 0.0) {
            return Err(Error::param("wigner.cov", "must be positive definite"));
        }
        if det < 0.25 * hbar * hbar * (1.0 - 1e-12) {
            return Err(Error::param("wigner.cov", format!("det {det:.6e} violates the uncertainty bound (ħ/2)²")));
        }
        Ok(GaussianWigner { mean_x, mean_p, cov })
    }

    /// Minimum-uncertainty state with position width σ_x.
    pub fn coherent(mean_x: f64, mean_p: f64, sigma_x: f64, hbar: f64) -> Result<Self> {
        let sp = hbar / (2.0 * sigma_x);
        Self::new(mean_x, mean_p, [[sigma_x * sigma_x, 0.0], [0.0, sp * sp]], hbar)
    }

    pub fn log_density(&self, x: f64, p: f64) -> f64 {
        let det = self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0];
        let (dx, dp) = (x - self.mean_x, p - self.mean_p);
        let q = (self.cov[1][1] * dx * dx - 2.0 * self.cov[0][1] * dx * dp + self.cov[0][0] * dp * dp) / det;
        -0.5 * q - (2.0 * std::f64::consts::PI * det.sqrt()).ln()
    }
}

/// A Monte Carlo weight with its standard error. `log_weight` stays finite
/// when `weight` underflows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathWeight {
    pub log_weight: f64,
    pub weight: f64,
    pub stderr: f64,
    /// stderr / weight.
    pub rel_stderr: f64,
    /// Effective sample size of the importance weights.
    pub ess: f64,
}

/// Samples drawn per random stream; stream b covers draws b·MC_BLOCK onwards.
pub const MC_BLOCK: usize = 1024;
/// Effective-sample fraction below which the proposal counts as degenerate.
pub const ESS_FLOOR: f64 = 1e-3;

/// Monte Carlo estimate of
/// ∫dX W(MẊ₀, X₀) exp(−∫(X−x̄)²/σ² − ∫F[X]²/2(ΔF)²)
/// on the grid of `xbar`. X is drawn from the normalized Gaussian
/// exp(−Σ w_k dt (X_k−x̄_k)²/σ²); its normalization is folded back into
/// the result. The F term is used when K ≥ 3.
pub fn path_probability(xbar: &SampledPath, p: &QbmParams, w: &GaussianWigner, n_mc: usize, seed: u64) -> Result<PathWeight> {
    p.validate()?;
    if n_mc < 1000 {
        return Err(Error::param("n_mc", "need at least 1000 samples"));
    }
    let n = xbar.values.len();
    let dt = xbar.dt;
    let tw = trapezoid(n);
    let sd: Vec<f64> = tw.iter().map(|&wk| p.sigma / (2.0 * wk * dt).sqrt()).collect();
    if sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::guard("qbm-gaussian", "degenerate proposal width", p.sigma));
    }
    let df2 = fluctuation_width(p)?;
    let use_f = xbar.k() >= 3;
    // log of ∫ exp(−Σ w_k dt (X_k−x̄_k)²/σ²) dX = Σ ½ ln(π σ²/(w_k dt)).
    let log_norm: f64 = tw.iter().map(|&wk| 0.5 * (std::f64::consts::PI * p.sigma * p.sigma / (wk * dt)).ln()).sum();
    let log_integrand = |x: &[f64]| -> f64 {
        let mut s = w.log_density(x[0], p.mass * initial_velocity(x, dt));
        if use_f {
            s -= residual_raw(x, dt, p).iter().map(|f| f * f).sum::<f64>() * dt / (2.0 * df2);
        }
        s
    };
    let n_blocks = n_mc.div_ceil(MC_BLOCK);
    let logs: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, b as u64);
            let mut x = vec![0.0; n];
            (b * MC_BLOCK..((b + 1) * MC_BLOCK).min(n_mc))
                .map(|_| {
                    for k in 0..n {
                        x[k] = xbar.values[k] + sd[k] * rng::normal(&mut r);
                    }
                    log_integrand(&x)
                })
                .collect()
        })
        .collect();
    let logs: Vec<f64> = logs.into_iter().flatten().collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::guard("qbm-gaussian", "all Monte Carlo weights vanish", m));
    }
    let scaled: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let nf = n_mc as f64;
    let mean = scaled.iter().sum::<f64>() / nf;
    let var = scaled.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let ess = scaled.iter().sum::<f64>().powi(2) / scaled.iter().map(|s| s * s).sum::<f64>();
    if ess < ESS_FLOOR * nf {
        return Err(Error::guard("qbm-gaussian", "importance weights degenerate (effective sample fraction)", ess / nf));
    }
    let rel = (var / nf).sqrt() / mean;
    let log_weight = log_norm + m + mean.ln();
    let weight = log_weight.exp();
    Ok(PathWeight { log_weight, weight, stderr: weight * rel, rel_stderr: rel, ess })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OffDiagonalFactor {
    pub log_factor: f64,
    pub factor: f64,
}

/// exp(−Σ_k w_k dt (x̄_k−ȳ_k)²/2ℓ²) with trapezoid weights.
pub fn decoherence_offdiagonal_estimate(xbar: &SampledPath, ybar: &SampledPath, p: &QbmParams) -> Result<OffDiagonalFactor> {
    if !xbar.same_grid(ybar) {
        return Err(Error::Dimension("paths are sampled on different grids".into()));
    }
    let l2 = decoherence_length(p)?;
    let tw = trapezoid(xbar.values.len());
    let s: f64 = xbar.values.iter().zip(&ybar.values).zip(&tw).map(|((a, b), w)| w * (a - b).powi(2)).sum::<f64>() * xbar.dt;
    let log_factor = if l2.is_infinite() { 0.0 } else { -s / (2.0 * l2) };
    Ok(OffDiagonalFactor { log_factor, factor: log_factor.exp() })
}
