//! "Enters a region during [0, τ]" histories on a 1D lattice.
//!
//! The not-entering class operator keeps amplitude inside the complement of
//! the region. The complement is split into sectors, i.e. maximal runs of
//! consecutive allowed sites, and amplitude may not pass between sectors.
//! Two slicings are available:
//! * Trotter: C_not = Σ_s (P_s e^{−iHδ/ħ} P_s)^n with δ = τ/n.
//! * Continuum: C_not = Σ_s e^{−i P_s H P_s τ/ħ}, the n → ∞ limit of the
//!   Trotter product.
//!
//! With an environment, two-sided objects are propagated by the lattice
//! master equation and projected on the sector pairs after every slice.

use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, LatticeModel, Mat, Operator, Propagator, C64};
use crate::histories::{approx_decoherence_epsilon, decoherence_from_class_operators, DecoherenceMatrix};
use crate::open_systems::{OpenDynamics, QbmDynamics, QbmLatticeModel, BOUNDARY_MARGIN, BOUNDARY_TOL};
use crate::rng;
use crate::timeless::EnsembleSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Closed sets of lattice sites. Bounds must sit on lattice sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalRegion {
    Empty,
    /// Sites with x ≤ `x`.
    Below { x: f64 },
    /// Sites with x ≥ `x`.
    Above { x: f64 },
    /// Sites with lo ≤ x ≤ hi.
    Interval { lo: f64, hi: f64 },
}

/// What counts as entering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    /// Being found on any region site. Amplitude that starts inside has entered.
    #[default]
    Region,
    /// Being found on the region's edge sites, i.e. crossing into or out of
    /// it. Amplitude that stays inside without touching the edge has not entered.
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slicing {
    #[default]
    Trotter,
    Continuum,
}

#[derive(Clone, Debug)]
pub struct CrossingSchedule {
    lattice: LatticeModel,
    region: ArrivalRegion,
    tau: f64,
    n_steps: usize,
    slicing: Slicing,
    detection: Detection,
    sectors: Vec<(usize, usize)>,
}

fn site_exact(lattice: &LatticeModel, x: f64, field: &str) -> Result<f64> {
    let r = (x - lattice.x_min()) / lattice.dx();
    if (r - r.round()).abs() > 1e-9 {
        return Err(Error::param(field, format!("{x} is not a lattice site")));
    }
    Ok(r.round())
}

impl CrossingSchedule {
    pub fn new(lattice: LatticeModel, region: ArrivalRegion, tau: f64, n_steps: usize, slicing: Slicing, detection: Detection) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::param("tau", "must be positive"));
        }
        if n_steps < 2 {
            return Err(Error::param("n_steps", "need at least 2 slices"));
        }
        let n = lattice.n_sites() as f64;
        let (lo, hi) = match region {
            ArrivalRegion::Empty => (1.0, 0.0),
            ArrivalRegion::Below { x } => (f64::NEG_INFINITY, site_exact(&lattice, x, "region.x")?),
            ArrivalRegion::Above { x } => (site_exact(&lattice, x, "region.x")?, f64::INFINITY),
            ArrivalRegion::Interval { lo, hi } => {
                let (a, b) = (site_exact(&lattice, lo, "region.lo")?, site_exact(&lattice, hi, "region.hi")?);
                if a > b {
                    return Err(Error::param("region", "lo exceeds hi"));
                }
                (a, b)
            }
        };
        let inside: Vec<bool> = (0..lattice.n_sites()).map(|i| (i as f64) >= lo && (i as f64) <= hi && lo <= n).collect();
        let reach = lattice.stencil().reach();
        let blocked: Vec<bool> = match detection {
            Detection::Region => inside.clone(),
            Detection::Boundary => (0..inside.len())
                .map(|i| {
                    inside[i]
                        && (i.saturating_sub(reach)..=(i + reach).min(inside.len() - 1)).any(|j| !inside[j])
                })
                .collect(),
        };
        let mut sectors = Vec::new();
        let mut start = None;
        for (i, &b) in blocked.iter().chain(std::iter::once(&true)).enumerate() {
            match (b, start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    sectors.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if sectors.is_empty() {
            return Err(Error::param("region", "covers the whole lattice (P_out = 0)"));
        }
        Ok(CrossingSchedule { lattice, region, tau, n_steps, slicing, detection, sectors })
    }

    pub fn lattice(&self) -> &LatticeModel {
        &self.lattice
    }

    pub fn region(&self) -> ArrivalRegion {
        self.region
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn slicing(&self) -> Slicing {
        self.slicing
    }

    pub fn detection(&self) -> Detection {
        self.detection
    }

    /// Half-open site ranges [start, end) of the allowed sectors.
    pub fn sectors(&self) -> &[(usize, usize)] {
        &self.sectors
    }

    pub fn with_n_steps(&self, n_steps: usize) -> Result<Self> {
        Self::new(self.lattice.clone(), self.region, self.tau, n_steps, self.slicing, self.detection)
    }

    pub fn with_slicing(&self, slicing: Slicing) -> Self {
        CrossingSchedule { slicing, ..self.clone() }
    }
}

fn mask_block(m: &Mat, (a, b): (usize, usize)) -> Mat {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| if i >= a && i < b && j >= a && j < b { m[(i, j)] } else { C64::new(0.0, 0.0) })
}

fn matrix_power(m: &Mat, mut k: usize) -> Mat {
    let n = m.nrows();
    let mut result = Mat::identity(n, n);
    let mut base = m.clone();
    let mut first = true;
    while k > 0 {
        if k & 1 == 1 {
            result = if first { base.clone() } else { &result * &base };
            first = false;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// C_not for the schedule.
pub fn restricted_propagator(s: &CrossingSchedule) -> Result<Operator> {
    let n = s.lattice.n_sites();
    let hbar = s.lattice.hbar();
    let h = s.lattice.hamiltonian();
    let mut total = Mat::zeros(n, n);
    match s.slicing {
        Slicing::Trotter => {
            let u = Propagator::new(&h, hbar)?.unitary(s.tau / s.n_steps as f64);
            let blocks: Vec<Mat> = s.sectors.par_iter().map(|&sec| matrix_power(&mask_block(u.matrix(), sec), s.n_steps)).collect();
            for b in blocks {
                total += b;
            }
        }
        Slicing::Continuum => {
            for &(a, b) in &s.sectors {
                let k = b - a;
                let hs = Operator::from_mat_unchecked(h.matrix().view((a, a), (k, k)).into_owned());
                let us = Propagator::new(&hs, hbar)?.unitary(s.tau);
                total.view_mut((a, a), (k, k)).copy_from(us.matrix());
            }
        }
    }
    let op = Operator::from_mat_unchecked(total);
    Ok(op)
}

/// (C_not_enter, C_enter) with C_enter = U(τ) − C_not_enter.
pub fn crossing_class_operators(s: &CrossingSchedule) -> Result<(Operator, Operator)> {
    let c_not = restricted_propagator(s)?;
    let u = Propagator::new(&s.lattice.hamiltonian(), s.lattice.hbar())?.unitary(s.tau);
    let c_enter = u.sub(&c_not)?;
    Ok((c_not, c_enter))
}

/// Master-equation environment for [`crossing_decoherence`].
#[derive(Clone, Debug)]
pub struct ArrivalEnvironment {
    pub model: QbmLatticeModel,
    /// Largest Strang step.
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct CrossingResult {
    /// Rows and columns ordered (not_enter, enter).
    pub d: DecoherenceMatrix,
    pub p_not_enter: f64,
    pub p_enter: f64,
    pub epsilon: f64,
    pub re_offdiag: f64,
    pub abs_offdiag: f64,
}

fn labels() -> Vec<String> {
    vec!["not_enter".into(), "enter".into()]
}

fn summarize(entries: Mat) -> Result<CrossingResult> {
    let d = DecoherenceMatrix::new(labels(), None, entries)?;
    // A branch of vanishing weight has nothing to interfere with.
    let eps = match approx_decoherence_epsilon(&d) {
        Ok(r) => r.epsilon,
        Err(Error::Refused(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let off = d.get(0, 1);
    Ok(CrossingResult { p_not_enter: d.get(0, 0).re, p_enter: d.get(1, 1).re, epsilon: eps, re_offdiag: off.re.abs(), abs_offdiag: off.norm(), d })
}

/// The 2×2 decoherence matrix for entering versus not entering.
pub fn crossing_decoherence(s: &CrossingSchedule, rho0: &DensityOperator, env: Option<&ArrivalEnvironment>) -> Result<CrossingResult> {
    let n = s.lattice.n_sites();
    if rho0.dim() != n {
        return Err(Error::Dimension(format!("density dim {} on a {n}-site lattice", rho0.dim())));
    }
    match env {
        None => closed(s, rho0),
        Some(e) => open(s, rho0, e),
    }
}

fn closed(s: &CrossingSchedule, rho0: &DensityOperator) -> Result<CrossingResult> {
    let (c_not, c_enter) = crossing_class_operators(s)?;
    let u = c_not.add(&c_enter)?;
    let evolved = u.matrix() * rho0.matrix() * u.matrix().adjoint();
    let diag: Vec<f64> = (0..s.lattice.n_sites()).map(|i| evolved[(i, i)].re).collect();
    let edge = s.lattice.boundary_mass(&diag, BOUNDARY_MARGIN);
    if edge > BOUNDARY_TOL {
        return Err(Error::guard("arrival", "probability reached the lattice boundary", edge));
    }
    let d = decoherence_from_class_operators(labels(), None, &[c_not, c_enter], rho0)?;
    summarize(d.entries().clone())
}

fn project(x: &Mat, left: Option<(usize, usize)>, right: Option<(usize, usize)>) -> Mat {
    let n = x.nrows();
    let inside = |r: Option<(usize, usize)>, i: usize| r.is_none_or(|(a, b)| i >= a && i < b);
    Mat::from_fn(n, n, |i, j| if inside(left, i) && inside(right, j) { x[(i, j)] } else { C64::new(0.0, 0.0) })
}

fn open(s: &CrossingSchedule, rho0: &DensityOperator, env: &ArrivalEnvironment) -> Result<CrossingResult> {
    if env.model.lattice() != &s.lattice {
        return Err(Error::param("environment.lattice", "must match the schedule lattice"));
    }
    let dynamics = QbmDynamics { model: &env.model, max_dt: env.dt };
    let delta = s.tau / s.n_steps as f64;
    // (left sector, right sector or None for the unprojected side)
    let mut pairs: Vec<((usize, usize), Option<(usize, usize)>)> = Vec::new();
    for &a in &s.sectors {
        for &b in &s.sectors {
            pairs.push((a, Some(b)));
        }
        pairs.push((a, None));
    }
    let traces: Vec<(bool, C64)> = pairs
        .par_iter()
        .map(|&(l, r)| -> Result<(bool, C64)> {
            let mut x = project(rho0.matrix(), Some(l), r);
            for _ in 0..s.n_steps {
                x = project(&dynamics.propagate(&x, delta)?, Some(l), r);
            }
            Ok((r.is_some(), x.trace()))
        })
        .collect::<Result<_>>()?;
    let nn: C64 = traces.iter().filter(|t| t.0).map(|t| t.1).sum();
    let nu: C64 = traces.iter().filter(|t| !t.0).map(|t| t.1).sum();
    let total = rho0.matrix().trace();
    let ne = nu - nn;
    let ee = total - nu - nu.conj() + nn;
    let entries = Mat::from_row_slice(2, 2, &[nn, ne, ne.conj(), ee]);
    summarize(entries)
}

/// Classical comparison: Gaussian initial data propagated with momentum
/// diffusion √(2Dħ²dt) per substep and damping 2γ, the classical limit of
/// the lattice master equation. A sample has entered once it is found
/// inside the region at t = 0 or at the end of any slice, the region edge
/// being taken half a site beyond the boundary site.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LangevinOracle {
    pub mean_x: f64,
    pub mean_p: f64,
    pub sd_x: f64,
    pub sd_p: f64,
    pub samples: usize,
    pub substeps: usize,
    pub seed: u64,
}

/// Noise streams are keyed apart from the initial-data streams.
const LANGEVIN_NOISE_KEY: u64 = 0x5851_f42d_4c95_7f2d;

pub fn langevin_entry_probability(s: &CrossingSchedule, d_loc: f64, gamma: f64, o: &LangevinOracle) -> Result<(f64, f64)> {
    if o.samples < 2 || o.substeps == 0 {
        return Err(Error::param("langevin", "need at least two samples and one substep"));
    }
    let l = &s.lattice;
    let half = 0.5 * l.dx();
    let inside = |x: f64| match s.region {
        ArrivalRegion::Empty => false,
        ArrivalRegion::Below { x: b } => x < b + half,
        ArrivalRegion::Above { x: b } => x > b - half,
        ArrivalRegion::Interval { lo, hi } => x > lo - half && x < hi + half,
    };
    let solver = crate::timeless::TrajectorySolver::new(l.mass(), crate::timeless::Potential::Free, s.tau / s.n_steps as f64, s.tau)?;
    let spec = EnsembleSpec::Gaussian { mean_x: vec![o.mean_x], mean_p: vec![o.mean_p], sd_x: vec![o.sd_x], sd_p: vec![o.sd_p] };
    let ens = spec.sample(&solver, o.samples, o.seed)?;
    let h = s.tau / (s.n_steps * o.substeps) as f64;
    let kick = (2.0 * d_loc * l.hbar() * l.hbar() * h).sqrt();
    let potential = l.potential();
    let entered: Vec<bool> = (0..o.samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(o.seed ^ LANGEVIN_NOISE_KEY, i as u64);
            let (mut x, mut p) = (ens.x(i)[0], ens.p(i)[0]);
            if inside(x) {
                return true;
            }
            for _ in 0..s.n_steps {
                for _ in 0..o.substeps {
                    let force = match l.site_of(x) {
                        Some(k) if k + 1 < potential.len() && k > 0 => -(potential[k + 1] - potential[k - 1]) / (2.0 * l.dx()),
                        _ => 0.0,
                    };
                    p += (force - 2.0 * gamma * p) * h + kick * rng::normal(&mut r);
                    x += p / l.mass() * h;
                }
                if inside(x) {
                    return true;
                }
            }
            false
        })
        .collect();
    let nf = o.samples as f64;
    let p = entered.iter().filter(|e| **e).count() as f64 / nf;
    Ok((p, (p * (1.0 - p) / nf).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::StateVector;

    fn small() -> LatticeModel {
        LatticeModel::centered(65, 0.25, 1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_region_gives_full_propagator() {
        for slicing in [Slicing::Trotter, Slicing::Continuum] {
            let s = CrossingSchedule::new(small(), ArrivalRegion::Empty, 0.7, 4, slicing, Detection::Region).unwrap();
            let (c_not, c_enter) = crossing_class_operators(&s).unwrap();
            let u = Propagator::new(&s.lattice().hamiltonian(), 1.0).unwrap().unitary(0.7);
            assert!(c_not.distance(&u) < 1e-12);
            assert!(c_enter.matrix().iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn sectors_follow_detection_rule() {
        let s = CrossingSchedule::new(small(), ArrivalRegion::Below { x: 0.0 }, 1.0, 2, Slicing::Trotter, Detection::Region).unwrap();
        assert_eq!(s.sectors(), &[(33, 65)]);
        let b = CrossingSchedule::new(small(), ArrivalRegion::Below { x: 0.0 }, 1.0, 2, Slicing::Trotter, Detection::Boundary).unwrap();
        assert_eq!(b.sectors(), &[(0, 32), (33, 65)]);
        assert!(CrossingSchedule::new(small(), ArrivalRegion::Below { x: 0.1 }, 1.0, 2, Slicing::Trotter, Detection::Region).is_err());
        assert!(CrossingSchedule::new(small(), ArrivalRegion::Above { x: -8.0 }, 1.0, 2, Slicing::Trotter, Detection::Region).is_err());
    }

    #[test]
    fn state_inside_region_is_removed() {
        let l = small();
        let s = CrossingSchedule::new(l.clone(), ArrivalRegion::Below { x: 0.0 }, 0.3, 3, Slicing::Trotter, Detection::Region).unwrap();
        let psi = l.gaussian(-3.0, 0.0, 0.5).unwrap();
        let inside: Vec<C64> = psi.amplitudes().iter().enumerate().map(|(i, z)| if l.x(i) <= 0.0 { *z } else { C64::new(0.0, 0.0) }).collect();
        let out = restricted_propagator(&s).unwrap().apply(&crate::hilbert::Vector::from_vec(inside)).unwrap();
        assert!(out.norm() < 1e-15);
    }

    #[test]
    fn trotter_norm_bounded_and_converging_to_continuum() {
        let l = small();
        let s = CrossingSchedule::new(l.clone(), ArrivalRegion::Below { x: 0.0 }, 0.5, 2, Slicing::Trotter, Detection::Region).unwrap();
        let psi = l.gaussian(2.0, -3.0, 0.6).unwrap();
        let cont = restricted_propagator(&s.with_slicing(Slicing::Continuum)).unwrap().apply(psi.amplitudes()).unwrap().norm();
        // Finer slicing removes less amplitude: the Zeno limit is approached from below.
        let mut last = 0.0;
        for k in [4, 8, 12, 13] {
            let sk = s.with_n_steps(1 << k).unwrap();
            let c = restricted_propagator(&sk).unwrap();
            assert!(c.operator_norm() <= 1.0 + 1e-10);
            let nrm = c.apply(psi.amplitudes()).unwrap().norm();
            assert!(nrm >= last - 1e-12);
            if k == 13 {
                assert!(nrm - last < 1e-4);
            }
            last = nrm;
        }
        assert!((last - cont).abs() < 2e-4, "{last} vs {cont}");
    }

    #[test]
    fn antisymmetric_state_never_crosses() {
        let l = small();
        let a = l.gaussian(2.0, -2.0, 0.5).unwrap();
        let b = l.gaussian(-2.0, 2.0, 0.5).unwrap();
        let psi = StateVector::normalized(a.amplitudes() - b.amplitudes()).unwrap();
        let s = CrossingSchedule::new(l, ArrivalRegion::Below { x: 0.0 }, 1.0, 8, Slicing::Continuum, Detection::Boundary).unwrap();
        let r = crossing_decoherence(&s, &DensityOperator::pure(&psi), None).unwrap();
        assert!(r.p_enter <= 1e-12 && r.re_offdiag <= 1e-12, "{r:?}");
        assert!((r.d.total().re - 1.0).abs() < 1e-10);
    }
}
