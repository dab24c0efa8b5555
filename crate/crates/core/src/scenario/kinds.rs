//! Parameter tables and runners, one per scenario kind.

use super::input::*;
use super::output::Table;
use super::{parse_value, Issues, ScenarioError, ScenarioKind};
use crate::arrival::{self, ArrivalEnvironment, ArrivalRegion, CrossingSchedule, Detection, LangevinOracle, Slicing};
use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, LatticeModel, Operator, ProjectorFamily, StateVector};
use crate::histories::{self, HistorySchedule};
use crate::open_systems::{self, ClassicalPotential, CouplingMode, HybridConfig, HybridState, LindbladModel, QbmDynamics, QbmLatticeModel};
use crate::qbm::{self, GaussianWigner, QbmParams, QuadraticPotential, SampledPath};
use crate::records;
use crate::timeless::{self, EnsembleSpec, Potential, Region, RegionBox, TrajectorySolver};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const P: &str = "$.parameters";

/// Numbers and tables produced by one run.
#[derive(Clone, Debug, Default)]
pub struct Output {
    pub summary: Vec<(String, f64)>,
    pub tables: Vec<Table>,
}

impl Output {
    fn put(&mut self, key: impl Into<String>, v: f64) {
        self.summary.push((key.into(), v));
    }

    fn flag(&mut self, key: &str, v: bool) {
        self.put(key, if v { 1.0 } else { 0.0 });
    }
}

#[derive(Clone, Debug)]
pub enum Job {
    Histories(HistoriesParams),
    Records(RecordsParams),
    Lindblad(LindbladParams),
    Qsd(QsdParams),
    Qbm(QbmScenario),
    Hybrid(HybridParams),
    Timeless(TimelessParams),
    Arrival(ArrivalParams),
    DoubleSlit(DoubleSlitParams),
}

impl Job {
    pub(super) fn parse(kind: ScenarioKind, v: serde_json::Value) -> std::result::Result<Job, ScenarioError> {
        let job = match kind {
            ScenarioKind::Histories => Job::Histories(parse_value(v, P)?),
            ScenarioKind::Records => Job::Records(parse_value(v, P)?),
            ScenarioKind::Lindblad => Job::Lindblad(parse_value(v, P)?),
            ScenarioKind::Qsd => Job::Qsd(parse_value(v, P)?),
            ScenarioKind::Qbm => Job::Qbm(parse_value(v, P)?),
            ScenarioKind::Hybrid => Job::Hybrid(parse_value(v, P)?),
            ScenarioKind::Timeless => Job::Timeless(parse_value(v, P)?),
            ScenarioKind::Arrival => Job::Arrival(parse_value(v, P)?),
            ScenarioKind::DoubleSlit => Job::DoubleSlit(parse_value(v, P)?),
        };
        let mut issues = Issues::default();
        job.check(&mut issues);
        if issues.is_empty() {
            Ok(job)
        } else {
            Err(ScenarioError::Invalid(issues.0))
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            Job::Histories(_) => ScenarioKind::Histories,
            Job::Records(_) => ScenarioKind::Records,
            Job::Lindblad(_) => ScenarioKind::Lindblad,
            Job::Qsd(_) => ScenarioKind::Qsd,
            Job::Qbm(_) => ScenarioKind::Qbm,
            Job::Hybrid(_) => ScenarioKind::Hybrid,
            Job::Timeless(_) => ScenarioKind::Timeless,
            Job::Arrival(_) => ScenarioKind::Arrival,
            Job::DoubleSlit(_) => ScenarioKind::DoubleSlit,
        }
    }

    fn check(&self, i: &mut Issues) {
        match self {
            Job::Histories(p) => p.check(i),
            Job::Records(p) => p.check(i),
            Job::Lindblad(p) => p.check(i),
            Job::Qsd(p) => p.check(i),
            Job::Qbm(p) => p.check(i),
            Job::Hybrid(p) => p.check(i),
            Job::Timeless(p) => p.check(i),
            Job::Arrival(p) => p.check(i),
            Job::DoubleSlit(p) => p.check(i),
        }
    }

    pub fn run(&self, seed: u64) -> Result<Output> {
        match self {
            Job::Histories(p) => p.run(),
            Job::Records(p) => p.run(),
            Job::Lindblad(p) => p.run(),
            Job::Qsd(p) => p.run(seed),
            Job::Qbm(p) => p.run(seed),
            Job::Hybrid(p) => p.run(seed),
            Job::Timeless(p) => p.run(seed),
            Job::Arrival(p) => p.run(seed),
            Job::DoubleSlit(p) => p.run(),
        }
    }
}

fn default_tol() -> f64 {
    1e-8
}

fn default_one_usize() -> usize {
    1
}

// ---------------------------------------------------------------- histories

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleInput {
    pub hamiltonian: MatrixInput,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub t0: f64,
    pub times: Vec<f64>,
    /// One family per time, or a single family used at every time.
    pub families: Vec<FamilyInput>,
}

impl ScheduleInput {
    fn check(&self, path: &str, i: &mut Issues) -> Option<usize> {
        i.positive(&format!("{path}.hbar"), self.hbar);
        if self.times.is_empty() {
            i.push(format!("{path}.times"), "need at least one time");
        }
        if self.families.len() != 1 && self.families.len() != self.times.len() {
            i.push(format!("{path}.families"), format!("{} families for {} times", self.families.len(), self.times.len()));
        }
        let dim = check_matrix(&self.hamiltonian, None, &format!("{path}.hamiltonian"), i)?;
        for (k, f) in self.families.iter().enumerate() {
            f.check(dim, &format!("{path}.families[{k}]"), i);
        }
        Some(dim)
    }

    fn build(&self) -> Result<HistorySchedule> {
        let h = hermitian(&self.hamiltonian)?;
        let fams: Vec<ProjectorFamily> = self.families.iter().map(|f| f.build(&h)).collect::<Result<_>>()?;
        let fams = if fams.len() == 1 { vec![fams[0].clone(); self.times.len()] } else { fams };
        HistorySchedule::new(self.times.clone(), fams, h, self.t0, self.hbar)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoriesParams {
    pub schedule: ScheduleInput,
    pub state: StateInput,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl HistoriesParams {
    fn check(&self, i: &mut Issues) {
        if let Some(dim) = self.schedule.check(&format!("{P}.schedule"), i) {
            self.state.check(dim, &format!("{P}.state"), i);
        }
        i.positive(&format!("{P}.tol"), self.tol);
    }

    fn run(&self) -> Result<Output> {
        let s = self.schedule.build()?;
        let rho = self.state.density(s.dim())?;
        let d = histories::decoherence_functional(&s, &rho)?;
        let mut out = Output::default();
        out.put("dim", s.dim() as f64);
        out.put("n_slots", s.n_slots() as f64);
        out.put("n_histories", d.len() as f64);
        out.put("tol", self.tol);
        out.put("hermiticity_defect", d.hermiticity_defect());
        out.put("normalization_error", (d.total() - crate::hilbert::C64::new(1.0, 0.0)).norm());
        let cons = histories::is_consistent(&d, self.tol);
        let dec = histories::is_decoherent(&d, self.tol);
        out.put("max_offdiag_re", cons.worst);
        out.put("max_offdiag_abs", dec.worst);
        out.flag("consistent", cons.holds);
        out.flag("decoherent", dec.holds);
        out.put("epsilon", epsilon_or_zero(&d)?);
        out.put("sum_rule_violation", histories::sum_rule_violation(&d).violation);
        let mut dt = Table::new("decoherence", &["alpha", "alpha_prime", "re", "im"]);
        for a in 0..d.len() {
            for b in 0..d.len() {
                let z = d.get(a, b);
                dt.push(vec![d.labels()[a].clone().into(), d.labels()[b].clone().into(), z.re.into(), z.im.into()]);
            }
        }
        let mut pt = Table::new("probabilities", &["history", "probability", "linear_positivity"]);
        for (k, st) in d.strings().unwrap_or(&[]).iter().enumerate() {
            pt.push(vec![d.labels()[k].clone().into(), d.get(k, k).re.into(), histories::linear_positivity(&s, &rho, st)?.into()]);
        }
        out.tables = vec![dt, pt];
        Ok(out)
    }
}

fn epsilon_or_zero(d: &histories::DecoherenceMatrix) -> Result<f64> {
    match histories::approx_decoherence_epsilon(d) {
        Ok(r) => Ok(r.epsilon),
        Err(Error::Refused(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

// ------------------------------------------------------------------ records

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordsParams {
    pub schedule: ScheduleInput,
    pub state: StateInput,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl RecordsParams {
    fn check(&self, i: &mut Issues) {
        if let Some(dim) = self.schedule.check(&format!("{P}.schedule"), i) {
            self.state.check(dim, &format!("{P}.state"), i);
        }
        if matches!(self.state, StateInput::Density { .. }) {
            i.push(format!("{P}.state"), "records are constructed for pure states");
        }
        i.positive(&format!("{P}.tol"), self.tol);
    }

    fn run(&self) -> Result<Output> {
        let s = self.schedule.build()?;
        let psi = self.state.pure(s.dim()).expect("checked pure")?;
        let rho = DensityOperator::pure(&psi);
        let r = records::construct_records(&s, &psi, self.tol)?;
        let rep = records::records_imply_decoherence(&s, &rho, &r)?;
        let mut out = Output::default();
        out.put("tol", self.tol);
        out.put("n_records", r.family().len() as f64);
        out.flag("passed", rep.passed);
        out.put("max_leak", rep.max_leak);
        out.put("max_offdiag_reconstructed", rep.max_offdiag_reconstructed);
        out.put("max_marginal_error", rep.max_marginal_error);
        out.put("correlation_defect", records::correlation_defect(&s, &psi, &r)?);
        out.put("completeness_defect", records::completeness_defect(&r));
        let mut t = Table::new("records", &["history", "record", "joint_probability", "history_probability"]);
        for st in s.strings()? {
            let p = histories::probability(&s, &rho, &st)?;
            for b in 0..r.family().len() {
                let jp = records::joint_probability(&s, &psi, &r, &st, b)?;
                t.push(vec![s.label(&st).into(), r.family().labels()[b].clone().into(), jp.into(), p.into()]);
            }
        }
        out.tables = vec![t];
        Ok(out)
    }
}

// ------------------------------------------------------- lindblad and qsd

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInput {
    pub hamiltonian: MatrixInput,
    #[serde(default)]
    pub lindblads: Vec<MatrixInput>,
    #[serde(default = "one")]
    pub hbar: f64,
}

impl ModelInput {
    fn check(&self, path: &str, i: &mut Issues) -> Option<usize> {
        i.positive(&format!("{path}.hbar"), self.hbar);
        let dim = check_matrix(&self.hamiltonian, None, &format!("{path}.hamiltonian"), i)?;
        for (k, l) in self.lindblads.iter().enumerate() {
            check_matrix(l, Some(dim), &format!("{path}.lindblads[{k}]"), i);
        }
        Some(dim)
    }

    fn build(&self) -> Result<LindbladModel> {
        let ls = self.lindblads.iter().map(|l| Operator::from_mat_unchecked(matrix(l))).collect();
        LindbladModel::new(hermitian(&self.hamiltonian)?, ls, self.hbar)
    }
}

fn check_observables(obs: &[NamedOperator], dim: usize, i: &mut Issues) {
    for (k, o) in obs.iter().enumerate() {
        if o.name.is_empty() {
            i.push(format!("{P}.observables[{k}].name"), "must be non-empty");
        }
        check_matrix(&o.matrix, Some(dim), &format!("{P}.observables[{k}].matrix"), i);
    }
}

fn observables(obs: &[NamedOperator]) -> Result<Vec<Operator>> {
    obs.iter().map(|o| hermitian(&o.matrix)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladParams {
    pub model: ModelInput,
    pub state: StateInput,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_one_usize")]
    pub record_every: usize,
    #[serde(default)]
    pub observables: Vec<NamedOperator>,
}

impl LindbladParams {
    fn check(&self, i: &mut Issues) {
        if let Some(dim) = self.model.check(&format!("{P}.model"), i) {
            self.state.check(dim, &format!("{P}.state"), i);
            check_observables(&self.observables, dim, i);
        }
        i.positive(&format!("{P}.dt"), self.dt);
        i.at_least(&format!("{P}.steps"), self.steps, 1);
        i.at_least(&format!("{P}.record_every"), self.record_every, 1);
    }

    fn run(&self) -> Result<Output> {
        let model = self.model.build()?;
        let rho0 = self.state.density(model.dim())?;
        let obs = observables(&self.observables)?;
        let run = open_systems::lindblad_evolve(&model, &rho0, self.dt, self.steps)?;
        let mut out = Output::default();
        out.put("dt", self.dt);
        out.put("t_final", *run.times.last().unwrap());
        out.put("max_trace_drift", run.max_trace_drift);
        out.put("max_hermiticity_defect", run.max_hermiticity_defect);
        out.put("min_eigenvalue", run.min_eigenvalue);
        out.put("step_warnings", run.warnings.len() as f64);
        out.put("final_purity", run.states.last().unwrap().purity());
        let mut t = Table::new("observables", &["t", "observable", "value"]);
        for (n, (time, rho)) in run.times.iter().zip(&run.states).enumerate() {
            if n % self.record_every != 0 && n != self.steps {
                continue;
            }
            for (o, op) in self.observables.iter().zip(&obs) {
                t.push(vec![(*time).into(), o.name.clone().into(), rho.expectation(op)?.re.into()]);
            }
        }
        let last = run.states.last().unwrap();
        for (o, op) in self.observables.iter().zip(&obs) {
            out.put(format!("final_{}", o.name), last.expectation(op)?.re);
        }
        out.tables = vec![t];
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QsdParams {
    pub model: ModelInput,
    pub state: StateInput,
    pub dt: f64,
    pub steps: usize,
    pub n_traj: usize,
    #[serde(default = "default_one_usize")]
    pub record_every: usize,
    #[serde(default)]
    pub observables: Vec<NamedOperator>,
    /// Also integrate the Lindblad equation and report trace distances.
    #[serde(default = "yes")]
    pub compare_lindblad: bool,
    /// Per-trajectory rows in the trajectories table.
    #[serde(default = "yes")]
    pub write_trajectories: bool,
}

fn yes() -> bool {
    true
}

impl QsdParams {
    fn check(&self, i: &mut Issues) {
        if let Some(dim) = self.model.check(&format!("{P}.model"), i) {
            self.state.check(dim, &format!("{P}.state"), i);
            check_observables(&self.observables, dim, i);
        }
        if matches!(self.state, StateInput::Density { .. }) {
            i.push(format!("{P}.state"), "trajectories start from a pure state");
        }
        i.positive(&format!("{P}.dt"), self.dt);
        i.at_least(&format!("{P}.steps"), self.steps, 1);
        i.at_least(&format!("{P}.n_traj"), self.n_traj, 1);
        i.at_least(&format!("{P}.record_every"), self.record_every, 1);
    }

    fn run(&self, seed: u64) -> Result<Output> {
        let model = self.model.build()?;
        let psi0 = self.state.pure(model.dim()).expect("checked pure")?;
        let opts = open_systems::EnsembleOptions { record_every: self.record_every, observables: observables(&self.observables)? };
        let ens = open_systems::qsd_ensemble(&model, &psi0, self.dt, self.steps, self.n_traj, seed, &opts)?;
        let mut out = Output::default();
        out.put("n_traj", self.n_traj as f64);
        out.put("dt", self.dt);
        out.put("statistical_scale", 1.0 / (self.n_traj as f64).sqrt());
        let mut t = Table::new("trajectories", &["t", "observable", "value", "trajectory"]);
        for (k, time) in ens.times.iter().enumerate() {
            for (j, o) in self.observables.iter().enumerate() {
                if self.write_trajectories {
                    for (i, rec) in ens.records.iter().enumerate() {
                        t.push(vec![(*time).into(), o.name.clone().into(), rec[k][j].into(), i.into()]);
                    }
                }
                t.push(vec![(*time).into(), o.name.clone().into(), ens.mean[k].expectation(&opts.observables[j])?.re.into(), "mean".into()]);
            }
        }
        out.tables.push(t);
        if self.compare_lindblad {
            let run = open_systems::lindblad_evolve(&model, &DensityOperator::pure(&psi0), self.dt, self.steps)?;
            let mut c = Table::new("comparison", &["t", "trace_distance"]);
            let mut worst = 0.0f64;
            for (k, time) in ens.times.iter().enumerate() {
                let idx = ((time / self.dt).round() as usize).min(self.steps);
                let d = ens.mean[k].trace_distance(&run.states[idx]);
                worst = worst.max(d);
                c.push(vec![(*time).into(), d.into()]);
            }
            out.put("max_trace_distance", worst);
            out.tables.push(c);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------- qbm

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Natural,
    Cgs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSweep {
    pub k: usize,
    pub dt: f64,
    pub x0: f64,
    pub v0: f64,
    /// Coefficients a of the bump a·16s²(1−s)², s = (t−2dt)/(T−2dt) clipped at 0, added to the classical path.
    pub amplitudes: Vec<f64>,
    pub n_mc: usize,
    /// Position spread of the coherent-state Wigner function at t = 0.
    pub wigner_sigma_x: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QbmScenario {
    pub units: Units,
    pub mass: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub sigma: f64,
    pub potential: QuadraticPotential,
    /// Constant separation of two paths held for `duration`, for the off-diagonal factor.
    #[serde(default)]
    pub separation: Option<f64>,
    #[serde(default = "one")]
    pub duration: f64,
    #[serde(default)]
    pub sweep: Option<PathSweep>,
}

impl QbmScenario {
    fn params(&self) -> QbmParams {
        let p = match self.units {
            Units::Natural => QbmParams::natural(self.mass, self.gamma, self.temperature, self.sigma),
            Units::Cgs => QbmParams::cgs(self.mass, self.gamma, self.temperature, self.sigma),
        };
        p.with_potential(self.potential)
    }

    fn check(&self, i: &mut Issues) {
        if let Err(Error::InvalidParameter { field, reason }) = self.params().validate() {
            i.push(format!("{P}.{field}"), reason);
        }
        i.positive(&format!("{P}.duration"), self.duration);
        if let Some(s) = &self.sweep {
            let sp = format!("{P}.sweep");
            i.at_least(&format!("{sp}.k"), s.k, 3);
            i.positive(&format!("{sp}.dt"), s.dt);
            i.at_least(&format!("{sp}.n_mc"), s.n_mc, 1000);
            i.positive(&format!("{sp}.wigner_sigma_x"), s.wigner_sigma_x);
            if s.amplitudes.len() < 3 {
                i.push(format!("{sp}.amplitudes"), "need at least three amplitudes for a quadratic fit");
            }
        }
    }

    fn run(&self, seed: u64) -> Result<Output> {
        let p = self.params();
        let mut out = Output::default();
        let fk = qbm::fp_kernels(&p)?;
        let df2 = qbm::fluctuation_width(&p)?;
        out.put("kt", p.kt());
        out.put("eta", fk.eta);
        out.put("nu", fk.nu);
        out.put("suppression_exponent", qbm::suppression_exponent(&p)?);
        out.put("fluctuation_width_sq", df2);
        out.put("decoherence_length_sq", qbm::decoherence_length(&p)?);
        if let Some(sep) = self.separation {
            let k = 64;
            let dt = self.duration / k as f64;
            let a = SampledPath::from_fn(0.0, dt, k, |_| 0.0)?;
            let b = SampledPath::from_fn(0.0, dt, k, |_| sep)?;
            let f = qbm::decoherence_offdiagonal_estimate(&a, &b, &p)?;
            out.put("separation", sep);
            out.put("offdiag_log_factor", f.log_factor);
        }
        if let Some(s) = &self.sweep {
            sweep(&p, s, seed, df2, &mut out)?;
        }
        Ok(out)
    }
}

/// Exact solution of the discretized classical equation used by the residual.
fn discrete_classical(p: &QbmParams, k: usize, dt: f64, x0: f64, v0: f64) -> Vec<f64> {
    let (m, g) = (p.mass, p.gamma);
    let mut x = vec![x0, x0 + v0 * dt - 0.5 * dt * dt * (g * v0 + p.v_prime(x0) / m)];
    // M(x₊−2x+x₋)/dt² + Mγ(x₊−x₋)/2dt + V′(x) = 0, solved for x₊.
    let a = m / (dt * dt) + m * g / (2.0 * dt);
    for n in 1..k {
        let (xn, xm) = (x[n], x[n - 1]);
        let rhs = m * (2.0 * xn - xm) / (dt * dt) + m * g * xm / (2.0 * dt) - p.v_prime(xn);
        x.push(rhs / a);
    }
    x
}

/// Bump vanishing on the first three nodes, so X₀ and the one-sided Ẋ₀ are untouched.
fn bump(t: f64, dt: f64, total: f64) -> f64 {
    let s = ((t - 2.0 * dt) / (total - 2.0 * dt)).max(0.0);
    16.0 * s * s * (1.0 - s) * (1.0 - s)
}

fn quadratic_fit(xs: &[f64], ys: &[f64]) -> [f64; 3] {
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    let mut b = nalgebra::Vector3::<f64>::zeros();
    for (&x, &y) in xs.iter().zip(ys) {
        let v = nalgebra::Vector3::new(1.0, x, x * x);
        a += v * v.transpose();
        b += v * y;
    }
    let c = a.lu().solve(&b).unwrap_or_else(nalgebra::Vector3::zeros);
    [c[0], c[1], c[2]]
}

fn sweep(p: &QbmParams, s: &PathSweep, seed: u64, df2: f64, out: &mut Output) -> Result<()> {
    let total = s.k as f64 * s.dt;
    let classical = discrete_classical(p, s.k, s.dt, s.x0, s.v0);
    let w = GaussianWigner::coherent(s.x0, p.mass * s.v0, s.wigner_sigma_x, p.hbar)?;
    let shape = SampledPath::from_fn(0.0, s.dt, s.k, |t| bump(t, s.dt, total))?;
    let f_shape = qbm::classical_residual(&shape, &p.with_potential(p.potential))?;
    let predicted = f_shape.iter().map(|f| f * f).sum::<f64>() * s.dt / (2.0 * df2);
    let mut t = Table::new("paths", &["path_id", "amplitude", "log_weight", "weight", "stderr"]);
    let mut logs = Vec::with_capacity(s.amplitudes.len());
    for (id, &a) in s.amplitudes.iter().enumerate() {
        let values: Vec<f64> = classical.iter().zip(&shape.values).map(|(c, b)| c + a * b).collect();
        let path = SampledPath::new(0.0, s.dt, values)?;
        // Common random numbers across the sweep.
        let pw = qbm::path_probability(&path, p, &w, s.n_mc, seed)?;
        t.push(vec![id.into(), a.into(), pw.log_weight.into(), pw.weight.into(), pw.stderr.into()]);
        out.put(format!("rel_stderr_{id}"), pw.rel_stderr);
        logs.push(pw.log_weight);
    }
    let best = logs.iter().enumerate().fold(0, |b, (i, l)| if *l > logs[b] { i } else { b });
    let fit = quadratic_fit(&s.amplitudes, &logs);
    out.put("argmax_amplitude", s.amplitudes[best]);
    out.put("curvature_fit", -fit[2]);
    out.put("curvature_predicted", predicted);
    out.put("curvature_ratio", -fit[2] / predicted);
    out.tables.push(t);
    Ok(())
}

// ------------------------------------------------------------------- hybrid

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridParams {
    pub model: ModelInput,
    pub x_operator: MatrixInput,
    pub state: StateInput,
    pub x0: f64,
    pub xdot0: f64,
    pub lambda: f64,
    pub mass: f64,
    pub gamma: f64,
    pub potential: ClassicalPotential,
    pub dt: f64,
    pub steps: usize,
    pub runs: usize,
}

impl HybridParams {
    fn check(&self, i: &mut Issues) {
        if let Some(dim) = self.model.check(&format!("{P}.model"), i) {
            self.state.check(dim, &format!("{P}.state"), i);
            check_matrix(&self.x_operator, Some(dim), &format!("{P}.x_operator"), i);
        }
        if matches!(self.state, StateInput::Density { .. }) {
            i.push(format!("{P}.state"), "the quantum subsystem starts from a pure state");
        }
        i.positive(&format!("{P}.mass"), self.mass);
        i.non_negative(&format!("{P}.gamma"), self.gamma);
        i.positive(&format!("{P}.dt"), self.dt);
        i.at_least(&format!("{P}.steps"), self.steps, 1);
        i.at_least(&format!("{P}.runs"), self.runs, 2);
    }

    fn run(&self, seed: u64) -> Result<Output> {
        let model = self.model.build()?;
        let x_op = hermitian(&self.x_operator)?;
        let psi = self.state.pure(model.dim()).expect("checked pure")?;
        let state = HybridState { x: self.x0, xdot: self.xdot0, psi, lambda: self.lambda, mass: self.mass, gamma: self.gamma, potential: self.potential };
        let mut out = Output::default();
        let mut t = Table::new("finals", &["mode", "run", "x_final", "xdot_final"]);
        for (name, mode) in [("stochastic", CouplingMode::Stochastic), ("mean_field", CouplingMode::MeanField)] {
            let finals: Vec<(f64, f64)> = (0..self.runs)
                .into_par_iter()
                .map(|r| {
                    let cfg = HybridConfig { dt: self.dt, steps: self.steps, seed, stream: r as u64, mode, record_every: self.steps, leak_guard: None };
                    let run = open_systems::hybrid_simulate(&state, &model, &x_op, &cfg)?;
                    Ok((*run.x.last().unwrap(), *run.xdot.last().unwrap()))
                })
                .collect::<Result<_>>()?;
            for (r, (x, v)) in finals.iter().enumerate() {
                t.push(vec![name.into(), r.into(), (*x).into(), (*v).into()]);
            }
            let xs: Vec<f64> = finals.iter().map(|f| f.0).collect();
            for (k, v) in modes(&xs) {
                out.put(format!("{name}_{k}"), v);
            }
        }
        out.tables.push(t);
        Ok(out)
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Two-cluster summary split at the overall mean: separation of the cluster
/// means against the larger cluster spread.
fn modes(xs: &[f64]) -> Vec<(&'static str, f64)> {
    let (m, sd) = mean_sd(xs);
    let hi: Vec<f64> = xs.iter().copied().filter(|x| *x > m).collect();
    let lo: Vec<f64> = xs.iter().copied().filter(|x| *x <= m).collect();
    let (mh, sh) = if hi.is_empty() { (m, 0.0) } else { mean_sd(&hi) };
    let (ml, sl) = if lo.is_empty() { (m, 0.0) } else { mean_sd(&lo) };
    let width = sh.max(sl);
    let sep = mh - ml;
    vec![
        ("mean", m),
        ("sd", sd),
        ("upper_count", hi.len() as f64),
        ("lower_count", lo.len() as f64),
        ("upper_mean", mh),
        ("lower_mean", ml),
        ("mode_width", width),
        ("separation", sep),
        ("separation_over_width", if width > 0.0 { sep / width } else if sep > 0.0 { f64::INFINITY } else { 0.0 }),
    ]
}

// ----------------------------------------------------------------- timeless

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRegion {
    pub name: String,
    pub boxes: Vec<RegionBox>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelessParams {
    pub mass: f64,
    pub potential: Potential,
    pub h: f64,
    pub t_max: f64,
    #[serde(default)]
    pub fixed_horizon: bool,
    pub ensemble: EnsembleSpec,
    pub samples: usize,
    /// Dwell threshold; defaults to ten steps.
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub regions: Vec<NamedRegion>,
    #[serde(default)]
    pub write_dwell: bool,
}

impl TimelessParams {
    fn solver(&self) -> Result<TrajectorySolver> {
        let s = TrajectorySolver::new(self.mass, self.potential, self.h, self.t_max)?;
        Ok(if self.fixed_horizon { s.with_fixed_horizon() } else { s })
    }

    fn check(&self, i: &mut Issues) {
        if let Err(Error::InvalidParameter { field, reason }) = self.solver() {
            i.push(format!("{P}.{field}"), reason);
        }
        i.at_least(&format!("{P}.samples"), self.samples, 2);
        if let Some(e) = self.epsilon {
            i.positive(&format!("{P}.epsilon"), e);
        }
        if self.regions.is_empty() {
            i.push(format!("{P}.regions"), "need at least one region");
        }
        for (k, r) in self.regions.iter().enumerate() {
            if r.name.is_empty() || r.name.contains([',', '"']) {
                i.push(format!("{P}.regions[{k}].name"), "must be non-empty without commas or quotes");
            }
            if let Err(e) = Region::new(r.boxes.clone()) {
                i.push(format!("{P}.regions[{k}].boxes"), e.to_string());
            }
        }
    }

    fn run(&self, seed: u64) -> Result<Output> {
        let solver = self.solver()?;
        let eps = self.epsilon.unwrap_or_else(|| solver.default_epsilon());
        let ens = self.ensemble.sample(&solver, self.samples, seed)?;
        let mut out = Output::default();
        out.put("samples", self.samples as f64);
        out.put("epsilon", eps);
        let mut t = Table::new("regions", &["region", "p", "stderr", "epsilon", "p_half_epsilon", "p_double_epsilon"]);
        let mut dwell = Table::new("dwell", &["sample", "region", "dwell"]);
        let regions = self.regions.iter().map(|r| Region::new(r.boxes.clone())).collect::<Result<Vec<_>>>()?;
        let results = timeless::entry_probabilities_for(&ens, &solver, &regions, eps)?;
        let drift = results.first().map_or(0.0, |e| e.max_energy_error);
        for (r, e) in self.regions.iter().zip(&results) {
            out.put(format!("p_{}", r.name), e.p);
            out.put(format!("stderr_{}", r.name), e.stderr);
            t.push(vec![r.name.clone().into(), e.p.into(), e.stderr.into(), e.epsilon.into(), e.p_half_epsilon.into(), e.p_double_epsilon.into()]);
            if self.write_dwell {
                for (k, d) in e.dwell.iter().enumerate() {
                    dwell.push(vec![k.into(), r.name.clone().into(), (*d).into()]);
                }
            }
        }
        out.put("max_energy_error", drift);
        out.tables.push(t);
        if self.write_dwell {
            out.tables.push(dwell);
        }
        Ok(out)
    }
}

// ------------------------------------------------------------------ arrival

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PacketInput {
    Gaussian { x0: f64, k0: f64, sigma: f64 },
    /// ψ(x) − ψ(−x) for the Gaussian ψ, normalized.
    Antisymmetric { x0: f64, k0: f64, sigma: f64 },
}

impl PacketInput {
    fn build(&self, l: &LatticeModel) -> Result<StateVector> {
        match *self {
            PacketInput::Gaussian { x0, k0, sigma } => l.gaussian(x0, k0, sigma),
            PacketInput::Antisymmetric { x0, k0, sigma } => {
                let a = l.gaussian(x0, k0, sigma)?;
                let b = l.gaussian(-x0, -k0, sigma)?;
                StateVector::normalized(a.amplitudes() - b.amplitudes())
            }
        }
    }

    fn sigma(&self) -> f64 {
        match *self {
            PacketInput::Gaussian { sigma, .. } | PacketInput::Antisymmetric { sigma, .. } => sigma,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalEnvInput {
    pub d_loc: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub temperature: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinInput {
    pub samples: usize,
    pub substeps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalParams {
    pub lattice: LatticeInput,
    pub state: PacketInput,
    pub region: ArrivalRegion,
    pub tau: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub slicing: Slicing,
    #[serde(default)]
    pub detection: Detection,
    #[serde(default)]
    pub environment: Option<ArrivalEnvInput>,
    #[serde(default)]
    pub langevin: Option<LangevinInput>,
}

impl ArrivalParams {
    fn schedule(&self) -> Result<CrossingSchedule> {
        CrossingSchedule::new(self.lattice.build()?, self.region, self.tau, self.n_steps, self.slicing, self.detection)
    }

    fn check(&self, i: &mut Issues) {
        self.lattice.check(&format!("{P}.lattice"), i);
        i.positive(&format!("{P}.state.sigma"), self.state.sigma());
        if !i.is_empty() {
            return;
        }
        if let Err(e) = self.schedule() {
            match e {
                Error::InvalidParameter { field, reason } => i.push(format!("{P}.{field}"), reason),
                other => i.push(P, other.to_string()),
            }
        }
        if let Some(env) = &self.environment {
            if env.d_loc.is_empty() {
                i.push(format!("{P}.environment.d_loc"), "need at least one value");
            }
            for (k, d) in env.d_loc.iter().enumerate() {
                i.non_negative(&format!("{P}.environment.d_loc[{k}]"), *d);
            }
            i.non_negative(&format!("{P}.environment.gamma"), env.gamma);
            i.non_negative(&format!("{P}.environment.temperature"), env.temperature);
            i.positive(&format!("{P}.environment.dt"), env.dt);
        }
        if let Some(l) = &self.langevin {
            i.at_least(&format!("{P}.langevin.samples"), l.samples, 2);
            i.at_least(&format!("{P}.langevin.substeps"), l.substeps, 1);
            if matches!(self.state, PacketInput::Antisymmetric { .. }) {
                i.push(format!("{P}.langevin"), "the classical comparison needs a single Gaussian packet");
            }
        }
    }

    fn run(&self, seed: u64) -> Result<Output> {
        let s = self.schedule()?;
        let psi = self.state.build(s.lattice())?;
        let rho = DensityOperator::pure(&psi);
        let mut out = Output::default();
        let closed = arrival::crossing_decoherence(&s, &rho, None)?;
        out.put("total", closed.d.total().re);
        out.put("p_enter", closed.p_enter);
        out.put("p_not_enter", closed.p_not_enter);
        out.put("re_offdiag", closed.re_offdiag);
        out.put("abs_offdiag", closed.abs_offdiag);
        out.put("epsilon", closed.epsilon);
        let Some(env) = &self.environment else { return Ok(out) };
        let mut t = Table::new("sweep", &["d_loc", "epsilon", "p_enter", "re_offdiag", "langevin_p", "langevin_stderr"]);
        let mut eps = Vec::new();
        let mut last = (0.0, 0.0, f64::NAN, f64::NAN);
        for &d in &env.d_loc {
            let model = QbmLatticeModel::new(s.lattice().clone(), d, env.gamma, env.temperature)?;
            let r = arrival::crossing_decoherence(&s, &rho, Some(&ArrivalEnvironment { model, dt: env.dt }))?;
            let (lp, ls) = match (&self.langevin, &self.state) {
                (Some(l), &PacketInput::Gaussian { x0, k0, sigma }) => {
                    let hbar = s.lattice().hbar();
                    let o = LangevinOracle {
                        mean_x: x0,
                        mean_p: hbar * k0,
                        sd_x: sigma,
                        sd_p: hbar / (2.0 * sigma),
                        samples: l.samples,
                        substeps: l.substeps,
                        seed,
                    };
                    arrival::langevin_entry_probability(&s, d, env.gamma, &o)?
                }
                _ => (f64::NAN, f64::NAN),
            };
            t.push(vec![d.into(), r.epsilon.into(), r.p_enter.into(), r.re_offdiag.into(), lp.into(), ls.into()]);
            eps.push(r.epsilon);
            last = (r.epsilon, r.p_enter, lp, ls);
        }
        let sorted = env.d_loc.windows(2).all(|w| w[0] <= w[1]);
        out.flag("env_epsilon_monotone", sorted && eps.windows(2).all(|w| w[1] <= w[0]));
        out.put("env_d_loc", *env.d_loc.last().unwrap());
        out.put("env_epsilon", last.0);
        out.put("env_p_enter", last.1);
        out.put("langevin_p_enter", last.2);
        out.put("langevin_stderr", last.3);
        out.put("env_vs_langevin_rel", (last.1 - last.2).abs() / last.2);
        out.tables.push(t);
        Ok(out)
    }
}

// -------------------------------------------------------------- double slit

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleSlitParams {
    pub lattice: LatticeInput,
    /// Packets sit at ±slit_offset.
    pub slit_offset: f64,
    pub sigma: f64,
    /// Screen time.
    pub time: f64,
    pub dt: f64,
    /// Sites per screen bin inside the window |x| < screen_half_width.
    pub bin_sites: usize,
    pub screen_half_width: f64,
    pub d_loc: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl DoubleSlitParams {
    fn check(&self, i: &mut Issues) {
        self.lattice.check(&format!("{P}.lattice"), i);
        i.positive(&format!("{P}.slit_offset"), self.slit_offset);
        i.positive(&format!("{P}.sigma"), self.sigma);
        i.positive(&format!("{P}.time"), self.time);
        i.positive(&format!("{P}.dt"), self.dt);
        i.at_least(&format!("{P}.bin_sites"), self.bin_sites, 1);
        i.positive(&format!("{P}.screen_half_width"), self.screen_half_width);
        i.non_negative(&format!("{P}.d_loc"), self.d_loc);
        i.non_negative(&format!("{P}.gamma"), self.gamma);
    }

    fn families(&self, l: &LatticeModel) -> Result<(ProjectorFamily, ProjectorFamily, Vec<f64>)> {
        let n = l.n_sites();
        let left: Vec<usize> = (0..n).filter(|&i| l.x(i) < 0.0).collect();
        let right: Vec<usize> = (0..n).filter(|&i| l.x(i) >= 0.0).collect();
        let slits = ProjectorFamily::from_partition(n, &[left, right], vec!["L".into(), "R".into()])?;
        let inside: Vec<usize> = (0..n).filter(|&i| l.x(i).abs() < self.screen_half_width).collect();
        let outside: Vec<usize> = (0..n).filter(|&i| l.x(i).abs() >= self.screen_half_width).collect();
        let mut groups: Vec<Vec<usize>> = inside.chunks(self.bin_sites).map(|c| c.to_vec()).collect();
        let centers: Vec<f64> = groups.iter().map(|g| g.iter().map(|&i| l.x(i)).sum::<f64>() / g.len() as f64).collect();
        let mut labels: Vec<String> = (0..groups.len()).map(|b| format!("b{b}")).collect();
        if !outside.is_empty() {
            groups.push(outside);
            labels.push("outside".into());
        }
        Ok((slits, ProjectorFamily::from_partition(n, &groups, labels)?, centers))
    }

    fn run(&self) -> Result<Output> {
        let l = self.lattice.build()?;
        let a = l.gaussian(-self.slit_offset, 0.0, self.sigma)?;
        let b = l.gaussian(self.slit_offset, 0.0, self.sigma)?;
        let rho = DensityOperator::pure(&StateVector::normalized(a.amplitudes() + b.amplitudes())?);
        let (slits, screen, centers) = self.families(&l)?;
        let k = screen.len();
        let sched = open_systems::ProjectorSchedule::new(0.0, vec![0.0, self.time], vec![slits, screen])?;
        let mut out = Output::default();
        let mut t = Table::new("screen", &["bin", "x_center", "p_no_env", "interference_no_env", "p_env", "interference_env"]);
        let mut cols = Vec::new();
        for (name, d) in [("no_env", 0.0), ("env", self.d_loc)] {
            let model = QbmLatticeModel::new(l.clone(), d, self.gamma, 0.0)?;
            let dm = open_systems::open_decoherence_functional(&QbmDynamics { model: &model, max_dt: self.dt }, &sched, &rho)?;
            out.put(format!("epsilon_{name}"), epsilon_or_zero(&dm)?);
            out.put(format!("total_{name}"), dm.total().re);
            out.put(format!("max_offdiag_re_{name}"), histories::is_consistent(&dm, 0.0).worst);
            // strings (L, b) and (R, b) sit at b and k + b
            let col: Vec<(f64, f64)> = (0..k).map(|bn| (dm.get(bn, bn).re + dm.get(k + bn, k + bn).re, 2.0 * dm.get(bn, k + bn).re)).collect();
            cols.push(col);
        }
        out.put("d_loc", self.d_loc);
        for bn in 0..k {
            let x = centers.get(bn).copied().unwrap_or(f64::NAN);
            t.push(vec![bn.into(), x.into(), cols[0][bn].0.into(), cols[0][bn].1.into(), cols[1][bn].0.into(), cols[1][bn].1.into()]);
        }
        out.tables.push(t);
        Ok(out)
    }
}
