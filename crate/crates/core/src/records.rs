//! Record projectors for a decoherent set and a pure initial state.
//!
//! R_β is the projector onto the ray through C_β|Ψ⟩. The branches are
//! orthogonalized by modified Gram–Schmidt with one re-orthogonalization
//! pass; branches below `TOL_BRANCH` carry no record and fall into the
//! residual projector 1 − Σ R_β. Like the class operators, the record
//! projectors are Heisenberg-picture operators referred to t₀.

use crate::error::{Error, Result};
use crate::histories::{class_operator, decoherence_functional, is_decoherent, HistorySchedule, HistoryString};
use crate::hilbert::{c, max_abs, trace_of_product, DensityOperator, Mat, Operator, ProjectorFamily, StateVector, Vector, C64};

/// Branch norm below which a history has no record.
pub const TOL_BRANCH: f64 = 1e-12;
/// Correlation tolerance R_β C_α|Ψ⟩ = δ_αβ C_α|Ψ⟩.
pub const TOL_RECORD: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct RecordSet {
    strings: Vec<HistoryString>,
    /// For each string, the index of its projector in `family`.
    record_of: Vec<usize>,
    family: ProjectorFamily,
    residual: usize,
}

impl RecordSet {
    /// Assembles a record set from explicit projectors; `record_of[i]` names the
    /// member correlated with `strings[i]`. The last member is the residual.
    pub fn from_parts(strings: Vec<HistoryString>, record_of: Vec<usize>, family: ProjectorFamily) -> Result<Self> {
        if strings.len() != record_of.len() || record_of.iter().any(|&r| r >= family.len()) {
            return Err(Error::Dimension("record map does not match the family".into()));
        }
        let residual = family.len() - 1;
        Ok(RecordSet { strings, record_of, family, residual })
    }

    pub fn family(&self) -> &ProjectorFamily {
        &self.family
    }

    pub fn strings(&self) -> &[HistoryString] {
        &self.strings
    }

    pub fn record_of(&self, s: &HistoryString) -> Option<usize> {
        self.strings.iter().position(|t| t == s).map(|i| self.record_of[i])
    }

    pub fn residual_index(&self) -> usize {
        self.residual
    }

    pub fn projector(&self, b: usize) -> Result<&Operator> {
        self.family.members().get(b).ok_or_else(|| Error::Label(format!("record {b}")))
    }

    /// Swaps which strings two records are attached to; used to build
    /// deliberately broken record sets.
    pub fn with_swapped_records(&self, a: usize, b: usize) -> RecordSet {
        let mut out = self.clone();
        let members: Vec<Operator> = {
            let mut m = self.family.members().to_vec();
            m.swap(a, b);
            m
        };
        let mut labels = self.family.labels().to_vec();
        labels.swap(a, b);
        out.family = ProjectorFamily::new(members, labels).expect("permuted family stays valid");
        out
    }
}

pub fn construct_records(schedule: &HistorySchedule, psi: &StateVector, tol: f64) -> Result<RecordSet> {
    if psi.dim() != schedule.dim() {
        return Err(Error::Dimension("state and schedule dimensions differ".into()));
    }
    let rho = DensityOperator::pure(psi);
    let d = decoherence_functional(schedule, &rho)?;
    let check = is_decoherent(&d, tol);
    if !check.holds {
        let pair = check.pair.map(|(a, b)| format!("{} / {}", d.labels()[a], d.labels()[b])).unwrap_or_default();
        return Err(Error::Refused(format!("set is not decoherent: |D| = {:.3e} at {pair}", check.worst)));
    }
    let strings = d.strings().expect("schedule strings").to_vec();
    let dim = schedule.dim();
    let mut basis: Vec<Vector> = Vec::new();
    let mut owners: Vec<usize> = Vec::new();
    for (i, s) in strings.iter().enumerate() {
        let branch = class_operator(schedule, s)?.apply(psi.amplitudes())?;
        if branch.norm() < TOL_BRANCH {
            continue;
        }
        let mut u = branch;
        for _pass in 0..2 {
            for q in &basis {
                let proj = q.dotc(&u);
                u -= q * proj;
            }
        }
        let n = u.norm();
        if n < TOL_BRANCH {
            return Err(Error::guard("records", "branch lies in the span of earlier branches", n));
        }
        basis.push(u / c(n));
        owners.push(i);
    }
    let mut members = Vec::with_capacity(basis.len() + 1);
    let mut labels = Vec::with_capacity(basis.len() + 1);
    let mut residual = Mat::identity(dim, dim);
    for (q, &i) in basis.iter().zip(&owners) {
        let p = q * q.adjoint();
        residual -= &p;
        members.push(Operator::new(p)?);
        labels.push(schedule.label(&strings[i]));
    }
    members.push(Operator::new(residual)?);
    labels.push("residual".into());
    let family = ProjectorFamily::new(members, labels)?;
    let residual_index = family.len() - 1;
    let mut record_of = vec![residual_index; strings.len()];
    for (k, &i) in owners.iter().enumerate() {
        record_of[i] = k;
    }
    Ok(RecordSet { strings, record_of, family, residual: residual_index })
}

/// Refuses mixed states; a pure density operator is reduced to its state vector.
pub fn construct_records_from_density(schedule: &HistorySchedule, rho: &DensityOperator, tol: f64) -> Result<RecordSet> {
    let purity = rho.purity();
    if (purity - 1.0).abs() > 1e-10 {
        return Err(Error::Refused(format!("records need a pure initial state (purity {purity:.12})")));
    }
    let eig = nalgebra::SymmetricEigen::new(rho.matrix().clone());
    let k = eig.eigenvalues.iter().enumerate().fold(0, |a, (i, v)| if *v > eig.eigenvalues[a] { i } else { a });
    let psi = StateVector::normalized(eig.eigenvectors.column(k).into_owned())?;
    construct_records(schedule, &psi, tol)
}

/// ‖R_b C_s |Ψ⟩‖² = Tr(R_b C_s |Ψ⟩⟨Ψ| C_s†).
pub fn joint_probability(
    schedule: &HistorySchedule,
    psi: &StateVector,
    records: &RecordSet,
    s: &HistoryString,
    b: usize,
) -> Result<f64> {
    let branch = class_operator(schedule, s)?.apply(psi.amplitudes())?;
    Ok(records.projector(b)?.apply(&branch)?.norm_squared())
}

#[derive(Clone, Debug)]
pub struct RecordReport {
    pub passed: bool,
    /// Largest Tr(R_β C_α ρ C_α†) over β not attached to α.
    pub max_leak: f64,
    /// (record index, string index) attaining `max_leak`.
    pub worst_pair: Option<(usize, usize)>,
    /// Every (record, string) pair whose leak exceeds the tolerance.
    pub failures: Vec<(usize, usize, f64)>,
    /// Largest off-diagonal |D| rebuilt as Σ_β Tr(R_β C_α ρ C_α′† R_β).
    pub max_offdiag_reconstructed: f64,
    /// Largest |Tr(R_β ρ) − Σ_{α attached to β} Tr(C_α ρ C_α†)|.
    pub max_marginal_error: f64,
}

/// Rebuilds D through the records and checks that record correlation forces
/// the off-diagonal entries to vanish.
pub fn records_imply_decoherence(schedule: &HistorySchedule, rho: &DensityOperator, records: &RecordSet) -> Result<RecordReport> {
    if rho.dim() != schedule.dim() {
        return Err(Error::Dimension("state and schedule dimensions differ".into()));
    }
    let strings = records.strings();
    let ops = strings.iter().map(|s| class_operator(schedule, s)).collect::<Result<Vec<_>>>()?;
    let fam = records.family().members();
    let branches: Vec<Mat> = ops.iter().map(|c| c.matrix() * rho.matrix()).collect();

    let mut failures = Vec::new();
    let mut max_leak = 0.0f64;
    let mut worst_pair = None;
    let mut rc: Vec<Vec<Mat>> = Vec::with_capacity(fam.len());
    for (b, r) in fam.iter().enumerate() {
        let mut row = Vec::with_capacity(ops.len());
        for (a, c_op) in ops.iter().enumerate() {
            let rca = r.matrix() * c_op.matrix();
            if records.record_of[a] != b {
                let leak = trace_of_product(&(&rca * rho.matrix()), &c_op.matrix().adjoint()).re.max(0.0);
                if leak > max_leak {
                    max_leak = leak;
                    worst_pair = Some((b, a));
                }
                if leak > TOL_RECORD {
                    failures.push((b, a, leak));
                }
            }
            row.push(rca);
        }
        rc.push(row);
    }

    let mut max_off = 0.0f64;
    for a in 0..ops.len() {
        for a2 in (a + 1)..ops.len() {
            let mut z = C64::new(0.0, 0.0);
            for row in &rc {
                // Tr(R C_α ρ C_α′† R) = Tr((R C_α) ρ (R C_α′)†)
                z += trace_of_product(&(&row[a] * rho.matrix()), &row[a2].adjoint());
            }
            max_off = max_off.max(z.norm());
        }
    }

    let mut attached = vec![0.0; fam.len()];
    for (a, c_op) in ops.iter().enumerate() {
        attached[records.record_of[a]] += trace_of_product(&branches[a], &c_op.matrix().adjoint()).re;
    }
    let max_marginal = fam
        .iter()
        .zip(&attached)
        .map(|(r, p)| (trace_of_product(r.matrix(), rho.matrix()).re - p).abs())
        .fold(0.0, f64::max);

    let passed = failures.is_empty() && max_off <= TOL_RECORD && max_marginal <= TOL_RECORD;
    Ok(RecordReport {
        passed,
        max_leak,
        worst_pair,
        failures,
        max_offdiag_reconstructed: max_off,
        max_marginal_error: max_marginal,
    })
}

/// Largest |R_β C_α Ψ − δ_αβ C_α Ψ| over all pairs.
pub fn correlation_defect(schedule: &HistorySchedule, psi: &StateVector, records: &RecordSet) -> Result<f64> {
    let mut worst = 0.0f64;
    for (a, s) in records.strings().iter().enumerate() {
        let branch = class_operator(schedule, s)?.apply(psi.amplitudes())?;
        if branch.norm() < TOL_BRANCH {
            continue;
        }
        for (b, r) in records.family().members().iter().enumerate() {
            let got = r.apply(&branch)?;
            let want = if records.record_of[a] == b { branch.clone() } else { Vector::zeros(branch.len()) };
            worst = worst.max((got - want).norm());
        }
    }
    Ok(worst)
}

/// Largest entry of Σ_b R_b − 1.
pub fn completeness_defect(records: &RecordSet) -> f64 {
    let d = records.family().dim();
    let mut sum = Mat::zeros(d, d);
    for r in records.family().members() {
        sum += r.matrix();
    }
    max_abs(&(sum - Mat::identity(d, d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::{probability, tests::sz_family};
    use crate::hilbert::Operator;

    #[test]
    fn single_time_plus_state() {
        let s = HistorySchedule::new(vec![0.0], vec![sz_family()], Operator::zeros(2), 0.0, 1.0).unwrap();
        let plus = StateVector::from_complex(&[c(1.0), c(1.0)]).unwrap();
        let r = construct_records(&s, &plus, 1e-8).unwrap();
        assert!(r.projector(0).unwrap().approx_eq(&Operator::from_diagonal(&[1.0, 0.0]), 1e-14));
        assert!(r.projector(1).unwrap().approx_eq(&Operator::from_diagonal(&[0.0, 1.0]), 1e-14));
        assert!(r.projector(2).unwrap().approx_eq(&Operator::zeros(2), 1e-14));
        assert!(correlation_defect(&s, &plus, &r).unwrap() < 1e-14);
    }

    fn conserved_schedule() -> (HistorySchedule, StateVector) {
        let h = Operator::from_real_rows(&[&[0.5, 0.0, 0.0], &[0.0, 1.5, 0.0], &[0.0, 0.0, -1.0]]).unwrap();
        let fam = ProjectorFamily::from_partition(3, &[vec![0, 1], vec![2]], vec!["a".into(), "b".into()]).unwrap();
        let s = HistorySchedule::new(vec![0.4, 1.0], vec![fam.clone(), fam], h, 0.0, 1.0).unwrap();
        let psi = StateVector::from_complex(&[c(0.4), C64::new(0.1, 0.6), c(-0.5)]).unwrap();
        (s, psi)
    }

    #[test]
    fn conserved_set_records_reproduce_probabilities() {
        let (s, psi) = conserved_schedule();
        let r = construct_records(&s, &psi, 1e-10).unwrap();
        let rho = DensityOperator::pure(&psi);
        for str_ in s.strings().unwrap() {
            let b = r.record_of(&str_).unwrap();
            let p = probability(&s, &rho, &str_).unwrap();
            let jp = joint_probability(&s, &psi, &r, &str_, b).unwrap();
            assert!((jp - p).abs() < 1e-14);
            for other in 0..r.family().len() {
                if other != b {
                    assert!(joint_probability(&s, &psi, &r, &str_, other).unwrap() < 1e-14);
                }
            }
        }
        let rep = records_imply_decoherence(&s, &rho, &r).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn final_time_projectors_as_records() {
        let (s, psi) = conserved_schedule();
        let rho = DensityOperator::pure(&psi);
        // R_α = P_α(t_n) for strings that stay in one alternative; mixed strings have zero branches
        let strings = s.strings().unwrap();
        let fam = s.families()[1].clone();
        let record_of: Vec<usize> = strings.iter().map(|st| st.0[1]).collect();
        let mut members = fam.members().to_vec();
        members.push(Operator::zeros(3));
        let mut labels = fam.labels().to_vec();
        labels.push("residual".into());
        let r = RecordSet::from_parts(strings, record_of, ProjectorFamily::new(members, labels).unwrap()).unwrap();
        let rep = records_imply_decoherence(&s, &rho, &r).unwrap();
        assert!(rep.passed);
        assert!(rep.max_marginal_error < 1e-15, "{}", rep.max_marginal_error);
    }

    #[test]
    fn swapped_records_fail_locally() {
        let (s, psi) = conserved_schedule();
        let r = construct_records(&s, &psi, 1e-10).unwrap();
        let bad = r.with_swapped_records(0, 1);
        let rep = records_imply_decoherence(&s, &DensityOperator::pure(&psi), &bad).unwrap();
        assert!(!rep.passed);
        let (b, a) = rep.worst_pair.unwrap();
        assert!(b <= 1 && rep.failures.iter().all(|(rb, _, _)| *rb <= 1), "{rep:?}");
        assert!(a < r.strings().len());
    }

    #[test]
    fn refuses_mixed_and_non_decoherent() {
        let (s, _) = conserved_schedule();
        let mixed = DensityOperator::maximally_mixed(3);
        assert!(matches!(construct_records_from_density(&s, &mixed, 1e-8), Err(Error::Refused(_))));
        let sched = crate::histories::tests::qubit_schedule();
        let zero = StateVector::basis(2, 0).unwrap();
        match construct_records(&sched, &zero, 1e-8) {
            Err(Error::Refused(msg)) => assert!(msg.contains("2.500e-1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
