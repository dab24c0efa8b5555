//! Class operators, decoherence functionals and the tests built on them.

use crate::error::{Error, Result};
use crate::hilbert::{
    c, hermiticity_defect, trace_of_product, trace_with_adjoint, DensityOperator, Mat, Operator, ProjectorFamily,
    Propagator, C64,
};
use rayon::prelude::*;
use std::fmt;

/// Default absolute tolerance on off-diagonal decoherence-functional entries.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Largest string set enumerated without a caller-supplied subset.
pub const MAX_STRINGS: usize = 100_000;
/// Largest string set for which a full D matrix is built.
pub const MAX_MATRIX_STRINGS: usize = 4096;
/// Diagonal entries at or below this are treated as zero by the ε test.
pub const DIAG_FLOOR: f64 = 1e-12;

/// One alternative index per time slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryString(pub Vec<usize>);

impl HistoryString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of slots in which two strings differ.
    pub fn hamming(&self, other: &HistoryString) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Display for HistoryString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Debug)]
pub struct HistorySchedule {
    times: Vec<f64>,
    families: Vec<ProjectorFamily>,
    hamiltonian: Operator,
    t0: f64,
    hbar: f64,
    heisenberg: Vec<Vec<Operator>>,
}

impl HistorySchedule {
    pub fn new(times: Vec<f64>, families: Vec<ProjectorFamily>, hamiltonian: Operator, t0: f64, hbar: f64) -> Result<Self> {
        if times.is_empty() || times.len() != families.len() {
            return Err(Error::param("times", "need one family per time and at least one time"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("times", "must be strictly increasing"));
        }
        let d = hamiltonian.dim();
        if families.iter().any(|f| f.dim() != d) {
            return Err(Error::Dimension("families and Hamiltonian differ in dimension".into()));
        }
        let prop = Propagator::new(&hamiltonian, hbar)?;
        let heisenberg = times
            .iter()
            .zip(&families)
            .map(|(&t, fam)| fam.members().iter().map(|p| prop.heisenberg(p, t, t0)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(HistorySchedule { times, families, hamiltonian, t0, hbar, heisenberg })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn n_slots(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn families(&self) -> &[ProjectorFamily] {
        &self.families
    }

    /// P_α(t_k) in the Heisenberg picture.
    pub fn heisenberg_projector(&self, slot: usize, alt: usize) -> Result<&Operator> {
        self.heisenberg
            .get(slot)
            .and_then(|f| f.get(alt))
            .ok_or_else(|| Error::Label(format!("slot {slot} alternative {alt}")))
    }

    pub fn n_strings(&self) -> usize {
        self.families.iter().fold(1usize, |a, f| a.saturating_mul(f.len()))
    }

    /// All strings, first slot most significant.
    pub fn strings(&self) -> Result<Vec<HistoryString>> {
        let total = self.n_strings();
        if total > MAX_STRINGS {
            return Err(Error::Refused(format!("{total} strings exceed the enumeration guard {MAX_STRINGS}; pass a subset")));
        }
        let sizes: Vec<usize> = self.families.iter().map(ProjectorFamily::len).collect();
        Ok((0..total)
            .map(|mut idx| {
                let mut alts = vec![0; sizes.len()];
                for k in (0..sizes.len()).rev() {
                    alts[k] = idx % sizes[k];
                    idx /= sizes[k];
                }
                HistoryString(alts)
            })
            .collect())
    }

    pub fn label(&self, s: &HistoryString) -> String {
        let parts: Vec<&str> = s.0.iter().zip(&self.families).map(|(&a, f)| f.labels()[a].as_str()).collect();
        format!("({})", parts.join(","))
    }

    fn check(&self, s: &HistoryString) -> Result<()> {
        if s.len() != self.n_slots() {
            return Err(Error::Label(format!("string {s} has {} slots, schedule has {}", s.len(), self.n_slots())));
        }
        for (k, (&a, f)) in s.0.iter().zip(&self.families).enumerate() {
            if a >= f.len() {
                return Err(Error::Label(format!("slot {k}: alternative {a} out of range ({} members)", f.len())));
            }
        }
        Ok(())
    }
}

/// C_α = P_{α_n}(t_n)···P_{α_1}(t_1).
pub fn class_operator(schedule: &HistorySchedule, s: &HistoryString) -> Result<Operator> {
    schedule.check(s)?;
    let mut m = schedule.heisenberg[0][s.0[0]].matrix().clone();
    for k in 1..s.len() {
        m = schedule.heisenberg[k][s.0[k]].matrix() * m;
    }
    Ok(Operator::from_mat_unchecked(m))
}

/// Class operator of a coarse-grained history: the sum of its strings.
pub fn class_operator_sum(schedule: &HistorySchedule, strings: &[HistoryString]) -> Result<Operator> {
    let mut m = Mat::zeros(schedule.dim(), schedule.dim());
    for s in strings {
        m += class_operator(schedule, s)?.matrix();
    }
    Ok(Operator::from_mat_unchecked(m))
}

#[derive(Clone, Debug)]
pub struct DecoherenceMatrix {
    labels: Vec<String>,
    strings: Option<Vec<HistoryString>>,
    entries: Mat,
}

impl DecoherenceMatrix {
    pub fn new(labels: Vec<String>, strings: Option<Vec<HistoryString>>, entries: Mat) -> Result<Self> {
        if entries.nrows() != labels.len() || entries.ncols() != labels.len() {
            return Err(Error::Dimension("decoherence matrix size and labels differ".into()));
        }
        if let Some(s) = &strings {
            if s.len() != labels.len() {
                return Err(Error::Dimension("decoherence matrix strings and labels differ".into()));
            }
        }
        Ok(DecoherenceMatrix { labels, strings, entries })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn strings(&self) -> Option<&[HistoryString]> {
        self.strings.as_deref()
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.entries[(a, b)]
    }

    pub fn index_of(&self, s: &HistoryString) -> Option<usize> {
        self.strings.as_ref()?.iter().position(|t| t == s)
    }

    /// Diagonal entries D(α,α).
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.entries[(i, i)].re).collect()
    }

    /// Σ_{α,α′} D(α,α′).
    pub fn total(&self) -> C64 {
        self.entries.iter().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.entries)
    }

    /// Merges alternatives of one slot by summing the corresponding blocks.
    /// `groups[g]` lists the old alternatives that make up new alternative g.
    pub fn coarse_grain(&self, slot: usize, groups: &[Vec<usize>]) -> Result<DecoherenceMatrix> {
        let strings = self.strings.as_ref().ok_or_else(|| Error::Refused("coarse graining needs string structure".into()))?;
        let mut map = std::collections::BTreeMap::new();
        let mut new_strings: Vec<HistoryString> = Vec::new();
        let mut owner = Vec::with_capacity(strings.len());
        for s in strings {
            let old = *s.0.get(slot).ok_or_else(|| Error::Label(format!("slot {slot}")))?;
            let g = groups
                .iter()
                .position(|grp| grp.contains(&old))
                .ok_or_else(|| Error::Label(format!("alternative {old} not in any group")))?;
            let mut t = s.clone();
            t.0[slot] = g;
            let idx = *map.entry(t.clone()).or_insert_with(|| {
                new_strings.push(t.clone());
                new_strings.len() - 1
            });
            owner.push(idx);
        }
        let n = new_strings.len();
        let mut e = Mat::zeros(n, n);
        for (i, &oi) in owner.iter().enumerate() {
            for (j, &oj) in owner.iter().enumerate() {
                e[(oi, oj)] += self.entries[(i, j)];
            }
        }
        let labels = new_strings.iter().map(|s| s.to_string()).collect();
        DecoherenceMatrix::new(labels, Some(new_strings), e)
    }

    /// Checks Hermiticity, diagonal positivity and normalization.
    pub fn validate(&self, herm_tol: f64, norm_tol: f64) -> Result<()> {
        let h = self.hermiticity_defect();
        if h > herm_tol {
            return Err(Error::guard("histories", "decoherence matrix Hermiticity", h));
        }
        if let Some(p) = self.probabilities().into_iter().find(|p| *p < -1e-10) {
            return Err(Error::guard("histories", "negative diagonal entry", p));
        }
        let t = self.total();
        if (t - c(1.0)).norm() > norm_tol {
            return Err(Error::guard("histories", "normalization Σ D = 1", (t - c(1.0)).norm()));
        }
        Ok(())
    }
}

fn require_dims(schedule: &HistorySchedule, rho: &DensityOperator) -> Result<()> {
    if schedule.dim() != rho.dim() {
        return Err(Error::Dimension(format!("schedule dim {} vs density dim {}", schedule.dim(), rho.dim())));
    }
    Ok(())
}

/// D(α,α′) = Tr(C_α ρ C_α′†) from explicit class operators. Entries are
/// computed independently, so the result does not depend on thread count.
pub fn decoherence_from_class_operators(
    labels: Vec<String>,
    strings: Option<Vec<HistoryString>>,
    class_ops: &[Operator],
    rho: &DensityOperator,
) -> Result<DecoherenceMatrix> {
    let n = class_ops.len();
    if n > MAX_MATRIX_STRINGS {
        return Err(Error::Refused(format!("{n} strings exceed the matrix guard {MAX_MATRIX_STRINGS}")));
    }
    if class_ops.iter().any(|c| c.dim() != rho.dim()) {
        return Err(Error::Dimension("class operator and density dimensions differ".into()));
    }
    let branches: Vec<Mat> = class_ops.par_iter().map(|c| c.matrix() * rho.matrix()).collect();
    let rows: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|a| (0..n).map(|b| trace_with_adjoint(&branches[a], class_ops[b].matrix())).collect())
        .collect();
    let entries = Mat::from_fn(n, n, |a, b| rows[a][b]);
    DecoherenceMatrix::new(labels, strings, entries)
}

pub fn decoherence_functional(schedule: &HistorySchedule, rho: &DensityOperator) -> Result<DecoherenceMatrix> {
    let strings = schedule.strings()?;
    decoherence_functional_for(schedule, rho, strings)
}

/// D restricted to a caller-chosen subset of strings.
pub fn decoherence_functional_for(
    schedule: &HistorySchedule,
    rho: &DensityOperator,
    strings: Vec<HistoryString>,
) -> Result<DecoherenceMatrix> {
    require_dims(schedule, rho)?;
    let ops = strings.par_iter().map(|s| class_operator(schedule, s)).collect::<Result<Vec<_>>>()?;
    let labels = strings.iter().map(|s| schedule.label(s)).collect();
    decoherence_from_class_operators(labels, Some(strings), &ops, rho)
}

/// Tr(C_s ρ C_s†).
pub fn probability(schedule: &HistorySchedule, rho: &DensityOperator, s: &HistoryString) -> Result<f64> {
    require_dims(schedule, rho)?;
    let c = class_operator(schedule, s)?;
    Ok(trace_with_adjoint(&(c.matrix() * rho.matrix()), c.matrix()).re)
}

/// Re Tr(C_s ρ).
pub fn linear_positivity(schedule: &HistorySchedule, rho: &DensityOperator, s: &HistoryString) -> Result<f64> {
    require_dims(schedule, rho)?;
    let c = class_operator(schedule, s)?;
    Ok(trace_of_product(c.matrix(), rho.matrix()).re)
}

/// Outcome of an off-diagonal test.
#[derive(Clone, Debug, PartialEq)]
pub struct OffDiagonalCheck {
    pub holds: bool,
    pub worst: f64,
    pub pair: Option<(usize, usize)>,
}

fn worst_off_diagonal(d: &DecoherenceMatrix, f: impl Fn(C64) -> f64) -> (f64, Option<(usize, usize)>) {
    let mut worst = 0.0;
    let mut pair = None;
    for a in 0..d.len() {
        for b in (a + 1)..d.len() {
            let v = f(d.get(a, b));
            if v > worst || pair.is_none() {
                worst = v;
                pair = Some((a, b));
            }
        }
    }
    (worst, pair)
}

/// max_{α≠α′} |Re D(α,α′)| ≤ tol.
pub fn is_consistent(d: &DecoherenceMatrix, tol: f64) -> OffDiagonalCheck {
    let (worst, pair) = worst_off_diagonal(d, |z| z.re.abs());
    OffDiagonalCheck { holds: worst <= tol, worst, pair }
}

/// max_{α≠α′} |D(α,α′)| ≤ tol.
pub fn is_decoherent(d: &DecoherenceMatrix, tol: f64) -> OffDiagonalCheck {
    let (worst, pair) = worst_off_diagonal(d, |z| z.norm());
    OffDiagonalCheck { holds: worst <= tol, worst, pair }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub pair: (usize, usize),
    /// Pairs skipped because a diagonal entry was at or below the floor.
    pub excluded_pairs: usize,
}

/// ε = max |D(α,α′)|² / (D(α,α) D(α′,α′)) over pairs with nonzero diagonals.
pub fn approx_decoherence_epsilon(d: &DecoherenceMatrix) -> Result<EpsilonReport> {
    approx_decoherence_epsilon_with_floor(d, DIAG_FLOOR)
}

pub fn approx_decoherence_epsilon_with_floor(d: &DecoherenceMatrix, floor: f64) -> Result<EpsilonReport> {
    let p = d.probabilities();
    let mut best: Option<(f64, (usize, usize))> = None;
    let mut excluded = 0;
    for a in 0..d.len() {
        for b in (a + 1)..d.len() {
            if p[a] <= floor || p[b] <= floor {
                excluded += 1;
                continue;
            }
            let r = d.get(a, b).norm_sqr() / (p[a] * p[b]);
            if best.is_none_or(|(e, _)| r > e) {
                best = Some((r, (a, b)));
            }
        }
    }
    match best {
        Some((epsilon, pair)) => Ok(EpsilonReport { epsilon, pair, excluded_pairs: excluded }),
        None if d.len() < 2 => Ok(EpsilonReport { epsilon: 0.0, pair: (0, 0), excluded_pairs: 0 }),
        None => Err(Error::Refused("every pair has a vanishing diagonal entry".into())),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumRuleReport {
    pub violation: f64,
    pub pair: Option<(usize, usize)>,
}

/// Largest |p(a ∨ b) − p(a) − p(b)| over merges of two alternatives in one
/// slot, i.e. 2|Re D| over string pairs differing in exactly one slot.
/// Without string structure every pair counts as a one-slot merge.
pub fn sum_rule_violation(d: &DecoherenceMatrix) -> SumRuleReport {
    let mut worst = 0.0;
    let mut pair = None;
    for a in 0..d.len() {
        for b in (a + 1)..d.len() {
            let mergeable = d.strings.as_ref().is_none_or(|s| s[a].hamming(&s[b]) == 1);
            if mergeable {
                let v = 2.0 * d.get(a, b).re.abs();
                if v > worst || pair.is_none() {
                    worst = v;
                    pair = Some((a, b));
                }
            }
        }
    }
    SumRuleReport { violation: worst, pair }
}

/// p(α_1…α_{n−1} | α_n). Refuses sets that are not consistent at `tol`.
pub fn retrodict(d: &DecoherenceMatrix, present: usize, tol: f64) -> Result<Vec<(HistoryString, f64)>> {
    let strings = d.strings.as_ref().ok_or_else(|| Error::Refused("retrodiction needs string structure".into()))?;
    let check = is_consistent(d, tol);
    if !check.holds {
        return Err(Error::Refused(format!(
            "set is not consistent at tol {tol:.1e}: worst |Re D| = {:.3e} at {:?}",
            check.worst, check.pair
        )));
    }
    let p = d.probabilities();
    let mut past = Vec::new();
    let mut total = 0.0;
    for (s, &ps) in strings.iter().zip(&p) {
        if s.0.last() == Some(&present) {
            past.push((HistoryString(s.0[..s.len() - 1].to_vec()), ps));
            total += ps;
        }
    }
    if past.is_empty() {
        return Err(Error::Label(format!("present alternative {present} does not occur")));
    }
    if total <= 0.0 {
        return Err(Error::Refused(format!("present alternative {present} has probability {total:.3e}")));
    }
    Ok(past.into_iter().map(|(s, ps)| (s, ps / total)).collect())
}

/// I = Σ p ln p with 0 ln 0 = 0; I ≤ 0.
pub fn shannon_information(p: &[f64]) -> Result<f64> {
    if let Some(bad) = p.iter().find(|x| **x < 0.0 || !x.is_finite()) {
        return Err(Error::param("probabilities", format!("negative or non-finite entry {bad}")));
    }
    let sum: f64 = p.iter().sum();
    if sum > 1.0 + 1e-9 {
        return Err(Error::param("probabilities", format!("sum {sum} exceeds 1")));
    }
    Ok(p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum())
}
