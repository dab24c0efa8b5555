//! Decoherence functional from reduced dynamics, built by propagating
//! two-sided objects X_{αα′} = P_a … ρ … P_a′ between projection times.

use super::OpenDynamics;
use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, Mat, ProjectorFamily, C64};
use crate::histories::{DecoherenceMatrix, HistoryString, MAX_MATRIX_STRINGS};
use rayon::prelude::*;

/// Projector families applied in the Schrödinger picture at increasing times.
#[derive(Clone, Debug)]
pub struct ProjectorSchedule {
    pub t0: f64,
    pub times: Vec<f64>,
    pub families: Vec<ProjectorFamily>,
}

impl ProjectorSchedule {
    pub fn new(t0: f64, times: Vec<f64>, families: Vec<ProjectorFamily>) -> Result<Self> {
        if times.is_empty() || times.len() != families.len() {
            return Err(Error::Dimension(format!("{} times for {} families", times.len(), families.len())));
        }
        if times[0] < t0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("times", "must start at or after t0 and increase strictly"));
        }
        let dim = families[0].dim();
        if families.iter().any(|f| f.dim() != dim) {
            return Err(Error::Dimension("projector families differ in dimension".into()));
        }
        Ok(ProjectorSchedule { t0, times, families })
    }

    pub fn dim(&self) -> usize {
        self.families[0].dim()
    }
}

/// P X Q for members of a family; diagonal projectors act as row/column masks.
pub(crate) fn sandwich(fam: &ProjectorFamily, a: usize, x: &Mat, b: usize) -> Mat {
    let p = fam.members()[a].matrix();
    let q = fam.members()[b].matrix();
    if fam.is_diagonal() {
        let n = x.nrows();
        Mat::from_fn(n, n, |i, j| {
            let (pi, qj) = (p[(i, i)], q[(j, j)]);
            if pi == C64::new(0.0, 0.0) || qj == C64::new(0.0, 0.0) {
                C64::new(0.0, 0.0)
            } else {
                pi * x[(i, j)] * qj
            }
        })
    } else {
        p * x * q
    }
}

/// D(α,α′) with strings enumerated first-slot-most-significant, matching the
/// closed-system enumeration. At the last slot Tr(P_b X P_b′) = δ_bb′ Tr(P_b X).
pub fn open_decoherence_functional(dynamics: &dyn OpenDynamics, schedule: &ProjectorSchedule, rho0: &DensityOperator) -> Result<DecoherenceMatrix> {
    if rho0.dim() != dynamics.dim() || schedule.dim() != dynamics.dim() {
        return Err(Error::Dimension(format!(
            "dynamics dim {}, schedule dim {}, density dim {}",
            dynamics.dim(),
            schedule.dim(),
            rho0.dim()
        )));
    }
    let sizes: Vec<usize> = schedule.families.iter().map(|f| f.len()).collect();
    let n_strings = sizes.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).unwrap_or(usize::MAX);
    if n_strings > MAX_MATRIX_STRINGS {
        return Err(Error::Refused(format!("{n_strings} strings exceed the matrix guard {MAX_MATRIX_STRINGS}")));
    }
    let n_slots = sizes.len();
    // (left prefix index, right prefix index, X)
    let mut level: Vec<(usize, usize, Mat)> = vec![(0, 0, rho0.matrix().clone())];
    let mut t = schedule.t0;
    for (slot, fam) in schedule.families.iter().enumerate() {
        let dt = schedule.times[slot] - t;
        t = schedule.times[slot];
        level = level.into_par_iter().map(|(l, r, x)| Ok((l, r, dynamics.propagate(&x, dt)?))).collect::<Result<Vec<_>>>()?;
        if slot + 1 == n_slots {
            break;
        }
        let k = fam.len();
        level = level
            .par_iter()
            .flat_map_iter(|(l, r, x)| {
                (0..k).flat_map(move |a| (0..k).map(move |b| (l * k + a, r * k + b, sandwich(fam, a, x, b))))
            })
            .collect();
    }
    let last = &schedule.families[n_slots - 1];
    let k = last.len();
    let mut entries = Mat::zeros(n_strings, n_strings);
    for (l, r, x) in &level {
        for b in 0..k {
            let p = last.members()[b].matrix();
            let tr: C64 = if last.is_diagonal() {
                (0..x.nrows()).map(|i| p[(i, i)] * x[(i, i)]).sum()
            } else {
                crate::hilbert::trace_of_product(p, x)
            };
            entries[(l * k + b, r * k + b)] = tr;
        }
    }
    let strings: Vec<HistoryString> = (0..n_strings)
        .map(|mut idx| {
            let mut v = vec![0; n_slots];
            for s in (0..n_slots).rev() {
                v[s] = idx % sizes[s];
                idx /= sizes[s];
            }
            HistoryString(v)
        })
        .collect();
    let labels = strings
        .iter()
        .map(|s| {
            let parts: Vec<&str> = s.0.iter().enumerate().map(|(slot, &a)| schedule.families[slot].labels()[a].as_str()).collect();
            format!("({})", parts.join(","))
        })
        .collect();
    DecoherenceMatrix::new(labels, Some(strings), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{c, Operator, StateVector};
    use crate::histories::{decoherence_functional, HistorySchedule};
    use crate::open_systems::{LindbladDynamics, LindbladModel};

    #[test]
    fn closed_limit_matches_histories() {
        let h = Operator::from_real_rows(&[&[0.4, 0.9, 0.0], &[0.9, -0.1, 0.3], &[0.0, 0.3, 0.2]]).unwrap();
        let fam_a = ProjectorFamily::from_partition(3, &[vec![0], vec![1, 2]], vec!["a0".into(), "a1".into()]).unwrap();
        let fam_b = ProjectorFamily::from_partition(3, &[vec![0, 1], vec![2]], vec!["b0".into(), "b1".into()]).unwrap();
        let fams = vec![fam_a.clone(), fam_b.clone(), fam_a];
        let times = vec![0.5, 1.2, 2.0];
        let psi = StateVector::normalized(crate::hilbert::Vector::from_vec(vec![c(0.6), C64::new(0.3, 0.5), c(-0.4)])).unwrap();
        let rho = DensityOperator::pure(&psi);
        let closed = HistorySchedule::new(times.clone(), fams.clone(), h.clone(), 0.0, 1.0).unwrap();
        let d_closed = decoherence_functional(&closed, &rho).unwrap();
        let model = LindbladModel::closed(h, 1.0).unwrap();
        let dynamics = LindbladDynamics { model: &model, max_dt: 1e-3 };
        let d_open = open_decoherence_functional(&dynamics, &ProjectorSchedule::new(0.0, times, fams).unwrap(), &rho).unwrap();
        assert_eq!(d_open.labels(), d_closed.labels());
        assert!((d_open.entries() - d_closed.entries()).iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn dephasing_suppresses_off_diagonal() {
        let kappa: f64 = 0.5;
        let sz = Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        let sx = Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let model = LindbladModel::new(Operator::zeros(2), vec![sz.scale(c(kappa.sqrt()))], 1.0).unwrap();
        let z = ProjectorFamily::from_basis(&[StateVector::basis(2, 0).unwrap().amplitudes().clone(), StateVector::basis(2, 1).unwrap().amplitudes().clone()], vec!["0".into(), "1".into()]).unwrap();
        let x = ProjectorFamily::eigenprojectors(&sx, 1e-9).unwrap();
        let plus = StateVector::from_complex(&[c(0.8), c(0.6)]).unwrap();
        let rho = DensityOperator::pure(&plus);
        let dyn_ = LindbladDynamics { model: &model, max_dt: 1e-3 };
        let dt = 0.9;
        let d = open_decoherence_functional(&dyn_, &ProjectorSchedule::new(0.0, vec![0.0, dt], vec![z, x]).unwrap(), &rho).unwrap();
        // Off-diagonal between (0,x) and (1,x): ρ01 e^{−2κΔt}/2 against the closed value ρ01/2.
        let closed = 0.8 * 0.6 * 0.5;
        let expect = closed * (-2.0 * kappa * dt).exp();
        let idx = |a: usize, b: usize| d.index_of(&HistoryString(vec![a, b])).unwrap();
        for b in 0..2 {
            let got = d.get(idx(0, b), idx(1, b)).norm();
            assert!((got - expect).abs() < 0.05 * expect, "{got} vs {expect}");
        }
        assert!((d.total().re - 1.0).abs() < 1e-8);
    }
}
