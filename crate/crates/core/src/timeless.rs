//! Reparametrization-invariant classical probabilities: trajectories of
//! H = p²/2M + V(x), the parameter time an orbit spends in a configuration
//! region, and the probability that an orbit drawn from a phase-space
//! weight enters the region at all.

use crate::error::{Error, Result};
use crate::hilbert::{wigner_transform, DensityOperator, LatticeModel, PGrid};
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative energy error that aborts an integration.
pub const ENERGY_GUARD: f64 = 1e-4;
/// A region box must be at least this many trajectory steps wide.
pub const MIN_STEPS_ACROSS: f64 = 5.0;
/// Negative Wigner weight fraction above which a result is flagged.
pub const NEGATIVE_WEIGHT_LIMIT: f64 = 0.2;
/// Relative tolerance of the reparametrization check.
pub const REPARAM_TOL: f64 = 1e-4;

/// Potentials acting on each coordinate separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// ½ M ω² x².
    Harmonic { omega: f64 },
    /// ½ M ω² x² + λ x⁴.
    Quartic { omega: f64, lambda: f64 },
}

impl Potential {
    pub fn value(&self, mass: f64, x: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * mass * omega * omega * x * x,
            Potential::Quartic { omega, lambda } => 0.5 * mass * omega * omega * x * x + lambda * x.powi(4),
        }
    }

    pub fn gradient(&self, mass: f64, x: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => mass * omega * omega * x,
            Potential::Quartic { omega, lambda } => mass * omega * omega * x + 4.0 * lambda * x.powi(3),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } if omega > 0.0 && omega.is_finite() => Ok(()),
            Potential::Quartic { omega, lambda } if omega >= 0.0 && lambda > 0.0 && omega.is_finite() && lambda.is_finite() => Ok(()),
            _ => Err(Error::param("potential", "harmonic needs ω > 0; quartic needs ω ≥ 0 and λ > 0")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySolver {
    pub mass: f64,
    pub potential: Potential,
    /// Leapfrog step.
    pub h: f64,
    pub t_max: f64,
    /// Use one period as the horizon when a period is found (1D only).
    pub detect_period: bool,
    /// Abort when any |x| exceeds this.
    pub domain: f64,
}

impl TrajectorySolver {
    pub fn new(mass: f64, potential: Potential, h: f64, t_max: f64) -> Result<Self> {
        let s = TrajectorySolver { mass, potential, h, t_max, detect_period: true, domain: 1e6 };
        s.validate()?;
        Ok(s)
    }

    pub fn with_fixed_horizon(mut self) -> Self {
        self.detect_period = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        for (name, v) in [("mass", self.mass), ("h", self.h), ("t_max", self.t_max), ("domain", self.domain)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        if self.h > self.t_max {
            return Err(Error::param("h", "larger than the horizon"));
        }
        Ok(())
    }

    pub fn energy(&self, x: &[f64], p: &[f64]) -> f64 {
        p.iter().map(|q| q * q).sum::<f64>() / (2.0 * self.mass) + x.iter().map(|&y| self.potential.value(self.mass, y)).sum::<f64>()
    }

    /// Default θ-function offset: ten steps of dwell.
    pub fn default_epsilon(&self) -> f64 {
        10.0 * self.h
    }
}

/// Leapfrog samples at t_k = k·h, cut at `horizon`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n: usize,
    pub h: f64,
    /// Flattened positions, `xs[k * n + d]`.
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub horizon: f64,
    pub period: Option<f64>,
    pub max_energy_error: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.xs.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.xs[k * self.n..(k + 1) * self.n]
    }

    pub fn p(&self, k: usize) -> &[f64] {
        &self.ps[k * self.n..(k + 1) * self.n]
    }

    /// Largest distance moved in one step.
    pub fn max_step(&self) -> f64 {
        (1..self.len())
            .map(|k| self.x(k).iter().zip(self.x(k - 1)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Kick-drift-kick leapfrog. With period detection on a 1D orbit the horizon
/// is the interval between the first two downward zero crossings of p.
pub fn integrate_trajectory(solver: &TrajectorySolver, x0: &[f64], p0: &[f64]) -> Result<Trajectory> {
    solver.validate()?;
    let n = x0.len();
    if n == 0 || p0.len() != n {
        return Err(Error::Dimension("x0 and p0 must be non-empty and equal length".into()));
    }
    let (m, h) = (solver.mass, solver.h);
    let e0 = solver.energy(x0, p0);
    let e_scale = if e0.abs() > 1e-300 { e0.abs() } else { 1.0 };
    let max_steps = (solver.t_max / h * (1.0 - 1e-12)).ceil() as usize;
    let periodic = solver.detect_period && n == 1;
    let mut x = x0.to_vec();
    let mut p = p0.to_vec();
    let mut xs = x0.to_vec();
    let mut ps = p0.to_vec();
    let mut crossings: Vec<f64> = Vec::new();
    let mut max_err = 0.0f64;
    let mut steps = 0;
    while steps < max_steps {
        for d in 0..n {
            p[d] -= 0.5 * h * solver.potential.gradient(m, x[d]);
            x[d] += h * p[d] / m;
        }
        for d in 0..n {
            p[d] -= 0.5 * h * solver.potential.gradient(m, x[d]);
        }
        steps += 1;
        if x.iter().any(|v| !v.is_finite() || v.abs() > solver.domain) {
            return Err(Error::guard("timeless", "trajectory left the domain", x.iter().fold(0.0f64, |a, v| a.max(v.abs()))));
        }
        let err = (solver.energy(&x, &p) - e0).abs() / e_scale;
        max_err = max_err.max(err);
        if err > ENERGY_GUARD {
            return Err(Error::guard("timeless", "leapfrog energy drift", err));
        }
        let p_prev = ps[(steps - 1) * n];
        xs.extend_from_slice(&x);
        ps.extend_from_slice(&p);
        if periodic && p_prev > 0.0 && p[0] <= 0.0 {
            crossings.push((steps - 1) as f64 * h + h * p_prev / (p_prev - p[0]));
            if crossings.len() == 2 {
                break;
            }
        }
    }
    let period = if crossings.len() == 2 { Some(crossings[1] - crossings[0]) } else { None };
    let horizon = period.unwrap_or(steps as f64 * h);
    let keep = ((horizon / h).ceil() as usize + 1).min(steps + 1);
    xs.truncate(keep * n);
    ps.truncate(keep * n);
    Ok(Trajectory { n, h, xs, ps, horizon, period, max_energy_error: max_err })
}

/// Axis-aligned box; `None` bounds are unbounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
}

impl RegionBox {
    pub fn interval(lo: Option<f64>, hi: Option<f64>) -> Self {
        RegionBox { lo: vec![lo], hi: vec![hi] }
    }

    fn bounds(&self, d: usize) -> (f64, f64) {
        (self.lo[d].unwrap_or(f64::NEG_INFINITY), self.hi[d].unwrap_or(f64::INFINITY))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..x.len()).all(|d| {
            let (a, b) = self.bounds(d);
            x[d] > a && x[d] < b
        })
    }

    /// Parameter interval of a + s(b − a), s ∈ [0, s_max], inside the box.
    fn segment(&self, a: &[f64], b: &[f64], s_max: f64) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (0.0f64, s_max);
        for d in 0..a.len() {
            let (l, u) = self.bounds(d);
            let v = b[d] - a[d];
            if v == 0.0 {
                if !(a[d] > l && a[d] < u) {
                    return None;
                }
                continue;
            }
            let (s1, s2) = ((l - a[d]) / v, (u - a[d]) / v);
            let (s1, s2) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            lo = lo.max(s1);
            hi = hi.min(s2);
            if lo >= hi {
                return None;
            }
        }
        Some((lo, hi))
    }
}

/// Union of boxes in configuration space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub boxes: Vec<RegionBox>,
}

impl Region {
    pub fn new(boxes: Vec<RegionBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::param("region.boxes", "need at least one box"));
        }
        let n = boxes[0].lo.len();
        for (i, b) in boxes.iter().enumerate() {
            if b.lo.len() != n || b.hi.len() != n || n == 0 {
                return Err(Error::param(format!("region.boxes[{i}]"), "bounds must match the configuration dimension"));
            }
            for d in 0..n {
                let (l, u) = b.bounds(d);
                if l.is_nan() || u.is_nan() || l >= u {
                    return Err(Error::param(format!("region.boxes[{i}]"), format!("empty or invalid range on axis {d}")));
                }
            }
        }
        Ok(Region { boxes })
    }

    /// Half line x > a (1D).
    pub fn above(a: f64) -> Self {
        Region { boxes: vec![RegionBox::interval(Some(a), None)] }
    }

    /// Half line x < a (1D).
    pub fn below(a: f64) -> Self {
        Region { boxes: vec![RegionBox::interval(None, Some(a))] }
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![RegionBox::interval(Some(a), Some(b))])
    }

    /// The whole configuration space of dimension n.
    pub fn everywhere(n: usize) -> Self {
        Region { boxes: vec![RegionBox { lo: vec![None; n], hi: vec![None; n] }] }
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }

    fn min_width(&self) -> f64 {
        self.boxes
            .iter()
            .flat_map(|b| (0..b.lo.len()).map(move |d| b.bounds(d)))
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min)
    }

    /// Length of {s ∈ [0, s_max] : a + s(b−a) ∈ region}.
    fn segment_measure(&self, a: &[f64], b: &[f64], s_max: f64) -> f64 {
        if let [bx] = self.boxes.as_slice() {
            return bx.segment(a, b, s_max).map_or(0.0, |(l, u)| u - l);
        }
        let mut iv: Vec<(f64, f64)> = self.boxes.iter().filter_map(|bx| bx.segment(a, b, s_max)).collect();
        if iv.len() == 1 {
            return iv[0].1 - iv[0].0;
        }
        iv.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut total = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for (l, u) in iv {
            cur = match cur {
                Some((cl, cu)) if l <= cu => Some((cl, cu.max(u))),
                Some((cl, cu)) => {
                    total += cu - cl;
                    Some((l, u))
                }
                None => Some((l, u)),
            };
        }
        if let Some((cl, cu)) = cur {
            total += cu - cl;
        }
        total
    }
}

/// Parameter time in the region over [0, horizon], treating the orbit as
/// piecewise linear between samples.
pub fn time_in_region(traj: &Trajectory, region: &Region) -> Result<f64> {
    if region.dim() != traj.n {
        return Err(Error::Dimension(format!("region is {}-dimensional, trajectory {}-dimensional", region.dim(), traj.n)));
    }
    let step = traj.max_step();
    let width = region.min_width();
    if width < MIN_STEPS_ACROSS * step {
        return Err(Error::guard("timeless", "region narrower than five trajectory steps", width / step));
    }
    let h = traj.h;
    let mut total = 0.0;
    for k in 0..traj.len().saturating_sub(1) {
        let t = k as f64 * h;
        if t >= traj.horizon {
            break;
        }
        let s_max = ((traj.horizon - t) / h).min(1.0);
        total += region.segment_measure(traj.x(k), traj.x(k + 1), s_max) * h;
    }
    Ok(total)
}

/// Weighted phase-space samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceEnsemble {
    pub n: usize,
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PhaseSpaceEnsemble {
    pub fn new(n: usize, xs: Vec<f64>, ps: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || xs.len() != ps.len() || xs.len() != n * weights.len() || weights.is_empty() {
            return Err(Error::Dimension("ensemble arrays are inconsistent".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::param("weights", "must be non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::param("weights", format!("sum to {s}, not 1")));
        }
        Ok(PhaseSpaceEnsemble { n, xs, ps, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.n..(i + 1) * self.n]
    }

    pub fn p(&self, i: usize) -> &[f64] {
        &self.ps[i * self.n..(i + 1) * self.n]
    }
}

/// Recipes for drawing equally weighted ensembles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleSpec {
    /// Independent normals on every coordinate and momentum.
    Gaussian { mean_x: Vec<f64>, mean_p: Vec<f64>, sd_x: Vec<f64>, sd_p: Vec<f64> },
    /// 1D energy shell, uniform in time along the orbit.
    Microcanonical { energy: f64 },
}

impl EnsembleSpec {
    /// Draws `count` samples, sample i from stream (seed, i).
    pub fn sample(&self, solver: &TrajectorySolver, count: usize, seed: u64) -> Result<PhaseSpaceEnsemble> {
        if count == 0 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        let w = vec![1.0 / count as f64; count];
        match self {
            EnsembleSpec::Gaussian { mean_x, mean_p, sd_x, sd_p } => {
                let n = mean_x.len();
                if n == 0 || mean_p.len() != n || sd_x.len() != n || sd_p.len() != n {
                    return Err(Error::param("ensemble", "mean and sd vectors must share one non-zero length"));
                }
                if sd_x.iter().chain(sd_p).any(|s| !(*s >= 0.0)) {
                    return Err(Error::param("ensemble.sd", "must be non-negative"));
                }
                let pts: Vec<(Vec<f64>, Vec<f64>)> = (0..count)
                    .into_par_iter()
                    .map(|i| {
                        let mut r = rng::stream(seed, i as u64);
                        let x = (0..n).map(|d| mean_x[d] + sd_x[d] * rng::normal(&mut r)).collect();
                        let p = (0..n).map(|d| mean_p[d] + sd_p[d] * rng::normal(&mut r)).collect();
                        (x, p)
                    })
                    .collect();
                let (xs, ps): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
                PhaseSpaceEnsemble::new(n, xs.concat(), ps.concat(), w)
            }
            EnsembleSpec::Microcanonical { energy } => {
                let orbit = shell_orbit(solver, *energy)?;
                let period = orbit.period.ok_or_else(|| Error::param("ensemble.energy", "orbit is not periodic within t_max"))?;
                let mut xs = Vec::with_capacity(count);
                let mut ps = Vec::with_capacity(count);
                for i in 0..count {
                    let mut r = rng::stream(seed, i as u64);
                    let t = rng::uniform(&mut r) * period;
                    let k = ((t / orbit.h) as usize).min(orbit.len() - 2);
                    let f = t / orbit.h - k as f64;
                    xs.push(orbit.x(k)[0] * (1.0 - f) + orbit.x(k + 1)[0] * f);
                    ps.push(orbit.p(k)[0] * (1.0 - f) + orbit.p(k + 1)[0] * f);
                }
                PhaseSpaceEnsemble::new(1, xs, ps, w)
            }
        }
    }
}

/// One period of the 1D orbit at energy E, starting at the right turning point.
fn shell_orbit(solver: &TrajectorySolver, energy: f64) -> Result<Trajectory> {
    if matches!(solver.potential, Potential::Free) || !(energy > 0.0) {
        return Err(Error::param("ensemble.energy", "needs a confining potential and E > 0"));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while solver.potential.value(solver.mass, hi) < energy {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if solver.potential.value(solver.mass, mid) < energy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut s = *solver;
    s.detect_period = true;
    // Start just past the turning point so the first downward crossing comes
    // after a full orbit; the horizon is then exactly one period.
    integrate_trajectory(&s, &[lo], &[0.0])
}

#[derive(Clone, Debug, Serialize)]
pub struct EntryProbability {
    pub p: f64,
    pub stderr: f64,
    pub epsilon: f64,
    pub p_double_epsilon: f64,
    pub p_half_epsilon: f64,
    pub samples: usize,
    /// Per-sample dwell times.
    pub dwell: Vec<f64>,
    /// Largest relative energy drift over the sampled orbits.
    pub max_energy_error: f64,
}

/// θ-weighted sum Σ w_i θ(A_i − ε) / Σ w_i with its standard error.
fn weighted_fraction(weights: &[f64], dwell: &[f64], eps: f64) -> (f64, f64) {
    let s: f64 = weights.iter().sum();
    let p = weights.iter().zip(dwell).filter(|(_, d)| **d > eps).fold(0.0, |a, (w, _)| a + w) / s;
    let var: f64 = weights.iter().zip(dwell).map(|(w, d)| (w / s).powi(2) * (if *d > eps { 1.0 } else { 0.0 } - p).powi(2)).sum();
    (p, var.sqrt())
}

/// Dwell time of each sample's orbit in the region.
pub fn dwell_times(ens: &PhaseSpaceEnsemble, solver: &TrajectorySolver, region: &Region) -> Result<Vec<f64>> {
    Ok(dwell_and_drift(ens, solver, std::slice::from_ref(region))?.into_iter().map(|(d, _)| d[0]).collect())
}

/// Per sample: dwell time in each region and the orbit's energy drift.
fn dwell_and_drift(ens: &PhaseSpaceEnsemble, solver: &TrajectorySolver, regions: &[Region]) -> Result<Vec<(Vec<f64>, f64)>> {
    (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let t = integrate_trajectory(solver, ens.x(i), ens.p(i))?;
            let d = regions.iter().map(|r| time_in_region(&t, r)).collect::<Result<Vec<_>>>()?;
            Ok((d, t.max_energy_error))
        })
        .collect()
}

/// p_Δ over an ensemble drawn from `spec` with `seed`, with the ε/2 and 2ε
/// sensitivity values.
pub fn region_entry_probability(
    spec: &EnsembleSpec,
    samples: usize,
    solver: &TrajectorySolver,
    region: &Region,
    eps: f64,
    seed: u64,
) -> Result<EntryProbability> {
    let ens = spec.sample(solver, samples, seed)?;
    entry_probability_for(&ens, solver, region, eps)
}

/// p_Δ over a given ensemble.
pub fn entry_probability_for(ens: &PhaseSpaceEnsemble, solver: &TrajectorySolver, region: &Region, eps: f64) -> Result<EntryProbability> {
    Ok(entry_probabilities_for(ens, solver, std::slice::from_ref(region), eps)?.remove(0))
}

/// p_Δ for several regions, integrating each orbit once.
pub fn entry_probabilities_for(ens: &PhaseSpaceEnsemble, solver: &TrajectorySolver, regions: &[Region], eps: f64) -> Result<Vec<EntryProbability>> {
    if !(eps > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let per_sample = dwell_and_drift(ens, solver, regions)?;
    let max_energy_error = per_sample.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok((0..regions.len())
        .map(|k| {
            let dwell: Vec<f64> = per_sample.iter().map(|(d, _)| d[k]).collect();
            let (p, stderr) = weighted_fraction(&ens.weights, &dwell, eps);
            let (p2, _) = weighted_fraction(&ens.weights, &dwell, 2.0 * eps);
            let (ph, _) = weighted_fraction(&ens.weights, &dwell, 0.5 * eps);
            EntryProbability { p, stderr, epsilon: eps, p_double_epsilon: p2, p_half_epsilon: ph, samples: ens.len(), dwell, max_energy_error }
        })
        .collect())
}

/// max over orbits and sample times up to `t_probe` of |w(x(t),p(t)) − w(x0,p0)|.
pub fn check_stationarity<W>(w: W, solver: &TrajectorySolver, ens: &PhaseSpaceEnsemble, t_probe: f64) -> Result<f64>
where
    W: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let mut s = *solver;
    s.detect_period = false;
    s.t_max = t_probe;
    s.validate()?;
    let res: Vec<f64> = (0..ens.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let tr = integrate_trajectory(&s, ens.x(i), ens.p(i))?;
            let w0 = w(ens.x(i), ens.p(i));
            Ok((0..tr.len()).map(|k| (w(tr.x(k), tr.p(k)) - w0).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReparamReport {
    pub dwell_h: f64,
    pub dwell_half_h: f64,
    pub dwell_shifted: f64,
    pub rel_step: f64,
    pub rel_shift: f64,
    pub passed: bool,
}

/// Per-period dwell of one orbit compared across a halved step and a start
/// point half a period further along the same orbit.
pub fn reparam_invariant_check(solver: &TrajectorySolver, x0: &[f64], p0: &[f64], region: &Region) -> Result<ReparamReport> {
    let mut s = *solver;
    s.detect_period = true;
    let base = integrate_trajectory(&s, x0, p0)?;
    let period = base.period.ok_or_else(|| Error::Refused("orbit has no detected period within t_max".into()))?;
    let d_h = time_in_region(&base, region)? / period;
    let fine = TrajectorySolver { h: 0.5 * s.h, ..s };
    let t_fine = integrate_trajectory(&fine, x0, p0)?;
    let d_half = time_in_region(&t_fine, region)? / t_fine.period.unwrap_or(period);
    let k = ((0.5 * period) / s.h).round() as usize;
    let mid = TrajectorySolver { detect_period: false, t_max: k as f64 * s.h, ..s };
    let to_mid = integrate_trajectory(&mid, x0, p0)?;
    let last = to_mid.len() - 1;
    let shifted = integrate_trajectory(&s, to_mid.x(last), to_mid.p(last))?;
    let d_shift = time_in_region(&shifted, region)? / shifted.period.unwrap_or(period);
    let scale = d_h.abs().max(1e-300);
    let rel_step = (d_h - d_half).abs() / scale;
    let rel_shift = (d_h - d_shift).abs() / scale;
    let passed = if d_h == 0.0 { d_half == 0.0 && d_shift == 0.0 } else { rel_step <= REPARAM_TOL && rel_shift <= REPARAM_TOL };
    Ok(ReparamReport { dwell_h: d_h, dwell_half_h: d_half, dwell_shifted: d_shift, rel_step, rel_shift, passed })
}

#[derive(Clone, Debug, Serialize)]
pub struct SemiclassicalProbability {
    pub p: f64,
    pub stderr: f64,
    pub epsilon: f64,
    pub p_double_epsilon: f64,
    pub p_half_epsilon: f64,
    /// Σ_{W<0}|W| / Σ|W| on the Wigner grid.
    pub negative_fraction: f64,
    pub unreliable: bool,
    pub samples: usize,
}

/// Ratio estimator Σ s_i θ_i / Σ s_i with its delta-method standard error.
fn signed_fraction(signs: &[f64], dwell: &[f64], eps: f64) -> (f64, f64) {
    let n = signs.len() as f64;
    let a: Vec<f64> = signs.iter().zip(dwell).map(|(s, d)| if *d > eps { *s } else { 0.0 }).collect();
    let ma = a.iter().sum::<f64>() / n;
    let mb = signs.iter().sum::<f64>() / n;
    let p = ma / mb;
    let var = a.iter().zip(signs).map(|(x, s)| (x - p * s).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (p, (var / n).sqrt() / mb.abs())
}

/// Orbit-entry probability with the Wigner function of ρ as the weight.
/// Phase-space points are drawn from |W| on the lattice grid (uniform within
/// a cell) and carry sign(W).
pub fn semiclassical_probability(
    rho: &DensityOperator,
    lattice: &LatticeModel,
    n_p: usize,
    solver: &TrajectorySolver,
    region: &Region,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<SemiclassicalProbability> {
    if !(eps > 0.0) || samples < 2 {
        return Err(Error::param("semiclassical", "need ε > 0 and at least two samples"));
    }
    if (solver.mass - lattice.mass()).abs() > 1e-12 * lattice.mass() {
        return Err(Error::param("solver.mass", "must equal the lattice mass"));
    }
    let grid = PGrid::full_period(lattice, n_p);
    let w = wigner_transform(rho, lattice, grid)?;
    let n_p = w.p.len();
    let mut cum = Vec::with_capacity(w.values.len());
    let mut acc = 0.0;
    for v in &w.values {
        acc += v.abs();
        cum.push(acc);
    }
    let pts: Vec<(f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let u = rng::uniform(&mut r) * acc;
            let cell = cum.partition_point(|c| *c <= u).min(cum.len() - 1);
            let (ix, jp) = (cell / n_p, cell % n_p);
            let x = w.x[ix] + (rng::uniform(&mut r) - 0.5) * w.dx;
            let p = w.p[jp] + (rng::uniform(&mut r) - 0.5) * w.dp;
            (x, p, w.values[cell].signum())
        })
        .collect();
    let dwell: Vec<f64> = pts
        .par_iter()
        .map(|&(x, p, _)| time_in_region(&integrate_trajectory(solver, &[x], &[p])?, region))
        .collect::<Result<_>>()?;
    let signs: Vec<f64> = pts.iter().map(|t| t.2).collect();
    let (p, stderr) = signed_fraction(&signs, &dwell, eps);
    let (p2, _) = signed_fraction(&signs, &dwell, 2.0 * eps);
    let (ph, _) = signed_fraction(&signs, &dwell, 0.5 * eps);
    let neg = w.negative_fraction();
    Ok(SemiclassicalProbability {
        p,
        stderr,
        epsilon: eps,
        p_double_epsilon: p2,
        p_half_epsilon: ph,
        negative_fraction: neg,
        unreliable: neg > NEGATIVE_WEIGHT_LIMIT,
        samples,
    })
}
