//! Acceptance suite: one PASS/FAIL line per criterion with pinned tolerances
//! and runtime budgets. Exits 0 unless DECHIST_ACCEPTANCE_STRICT=1 and some
//! criterion fails.

mod common;

use common::*;
use dechist::arrival::{self, ArrivalEnvironment, ArrivalRegion, CrossingSchedule, Detection, LangevinOracle, Slicing};
use dechist::hilbert::{DensityOperator, LatticeModel, Operator, StateVector, C64};
use dechist::histories::*;
use dechist::open_systems::{qbm_position_master_evolve, qsd_ensemble, EnsembleOptions, LindbladModel, QbmLatticeModel};
use dechist::qbm::{self, QbmParams};
use dechist::records::{construct_records, joint_probability, records_imply_decoherence};
use dechist::scenario::{self, ResultBundle, Scenario, BUNDLED};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run_bundled(name: &str) -> ResultBundle {
    Scenario::parse(scenario::bundled(name).expect("bundled scenario").text).unwrap().run().unwrap()
}

fn key(b: &ResultBundle, k: &str) -> f64 {
    b.get(k).unwrap_or_else(|| panic!("{} lacks `{k}`", b.provenance.scenario))
}

// 1 ----------------------------------------------------------------------

fn functional_algebra() -> Outcome {
    let (mut herm, mut norm, mut ineq) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for seed in 0..1000 {
        let mut r = rng(seed);
        let s = random_schedule(&mut r);
        let rho = random_density(&mut r, s.dim());
        let d = decoherence_functional(&s, &rho).unwrap();
        herm = herm.max(d.hermiticity_defect());
        norm = norm.max((d.total() - C64::new(1.0, 0.0)).norm());
        let p = d.probabilities();
        for a in 0..d.len() {
            for b in 0..d.len() {
                ineq = ineq.max(d.get(a, b).norm_sqr() - p[a] * p[b]);
            }
        }
    }
    outcome(
        herm <= 1e-12 && norm <= 1e-9 && ineq <= 1e-9,
        format!("1000 instances: hermiticity {herm:.1e} <= 1e-12, |sum D - 1| {norm:.1e} <= 1e-9, max(|D_ab|^2 - D_aa D_bb) {ineq:.1e} <= 1e-9"),
    )
}

// 2 ----------------------------------------------------------------------

fn conserved_exact() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut r = rng(10_000 + seed);
        let dim = 2 + (seed as usize % 5);
        let h = random_hermitian(&mut r, dim);
        let fam = dechist::hilbert::ProjectorFamily::eigenprojectors(&h, 1e-9).unwrap();
        let slots = 1 + (seed as usize % 3);
        let s = HistorySchedule::new(random_times(&mut r, slots), vec![fam; slots], h, 0.0, 1.0).unwrap();
        let d = decoherence_functional(&s, &random_density(&mut r, dim)).unwrap();
        worst = worst.max(is_decoherent(&d, 0.0).worst);
    }
    outcome(worst <= 1e-10, format!("100 Hamiltonians with eigenprojector families: max off-diagonal |D| {worst:.1e} <= 1e-10"))
}

// 3 ----------------------------------------------------------------------

fn records_round_trip() -> Outcome {
    let (mut failures, mut off_mass) = (0, 0.0f64);
    for seed in 0..200 {
        let mut r = rng(20_000 + seed);
        let s = conserved_schedule(&mut r);
        let psi = random_state(&mut r, s.dim());
        let rho = DensityOperator::pure(&psi);
        let rec = construct_records(&s, &psi, 1e-10).unwrap();
        if !records_imply_decoherence(&s, &rho, &rec).unwrap().passed {
            failures += 1;
        }
        let mut mass = 0.0;
        for st in rec.strings() {
            let own = rec.record_of(st).unwrap();
            for b in (0..rec.family().len()).filter(|b| *b != own) {
                mass += joint_probability(&s, &psi, &rec, st, b).unwrap();
            }
        }
        off_mass = off_mass.max(mass);
    }
    outcome(failures == 0 && off_mass <= 1e-8, format!("200 instances: {failures} round-trip failures, max off-correlation mass {off_mass:.1e} <= 1e-8"))
}

// 4 ----------------------------------------------------------------------

/// Mean and max trace distance between the QSD ensemble mean and the exact
/// amplitude-damping solution over the recorded times.
fn qsd_residual(dt: f64, n_traj: usize, seed: u64) -> (f64, f64) {
    let (gamma, omega, tau) = (1.0f64, 1.0, 2.0);
    let h = Operator::from_real_rows(&[&[0.0, 0.0], &[0.0, omega]]).unwrap();
    let l = Operator::from_real_rows(&[&[0.0, gamma.sqrt()], &[0.0, 0.0]]).unwrap();
    let model = LindbladModel::new(h, vec![l], 1.0).unwrap();
    let psi = StateVector::from_complex(&[C64::new(0.6, 0.0), C64::new(0.8, 0.0)]).unwrap();
    let steps = (tau / dt).round() as usize;
    let opts = EnsembleOptions { record_every: steps / 40, observables: vec![] };
    let ens = qsd_ensemble(&model, &psi, dt, steps, n_traj, seed, &opts).unwrap();
    let (mut sum, mut max) = (0.0, 0.0f64);
    for (t, rho) in ens.times.iter().zip(&ens.mean) {
        let ee = 0.64 * (-gamma * t).exp();
        let eg = C64::new(0.48, 0.0) * C64::new(-gamma * t / 2.0, -omega * t).exp();
        let m = dechist::hilbert::Mat::from_row_slice(2, 2, &[C64::new(1.0 - ee, 0.0), eg.conj(), eg, C64::new(ee, 0.0)]);
        let exact = DensityOperator::new(Operator::new(m).unwrap()).unwrap();
        let d = rho.trace_distance(&exact);
        sum += d;
        max = max.max(d);
    }
    (sum / ens.times.len() as f64, max)
}

/// Replica-averaged time-mean residual and the largest single trace distance.
/// One ensemble's time-mean residual varies by about 35% from seed to seed,
/// so the refinement ratio is taken between replica averages.
fn qsd_replicas(dt: f64, n_traj: usize, base_seed: u64, replicas: u64) -> (f64, f64) {
    let runs: Vec<(f64, f64)> = (0..replicas).map(|k| qsd_residual(dt, n_traj, base_seed + k)).collect();
    (runs.iter().map(|r| r.0).sum::<f64>() / replicas as f64, runs.iter().map(|r| r.1).fold(0.0, f64::max))
}

fn qsd_lindblad() -> Outcome {
    let replicas = 16;
    let (coarse_mean, coarse_max) = qsd_replicas(1e-3, 2000, 1000, replicas);
    let (fine_mean, fine_max) = qsd_replicas(5e-4, 8000, 2000, replicas);
    let ratio = coarse_mean / fine_mean;
    outcome(
        coarse_max <= 0.05 && (ratio - 2.0).abs() <= 0.6,
        format!(
            "N=2000 dt=1e-3: max trace distance over {replicas} ensembles {coarse_max:.4} <= 0.05; mean residual {coarse_mean:.5} -> {fine_mean:.5} at N=8000 dt=5e-4, ratio {ratio:.2} in [1.4, 2.6] (fine max {fine_max:.4})"
        ),
    )
}

// 5 ----------------------------------------------------------------------

fn position_decoherence() -> Outcome {
    let l = LatticeModel::centered(256, 0.1, 1.0, 1.0).unwrap().with_potential(|x| 0.3 * x * x).unwrap();
    let a = l.gaussian(-3.0, 1.0, 0.6).unwrap();
    let b = l.gaussian(3.0, -2.0, 0.6).unwrap();
    let psi = StateVector::normalized(a.amplitudes() + b.amplitudes()).unwrap();
    let rho0 = DensityOperator::pure(&psi);
    let (d, t, steps) = (0.7, 0.8, 80);
    let m = QbmLatticeModel::new(l.clone(), d, 0.0, 0.0).unwrap().without_kinetic();
    let out = qbm_position_master_evolve(&m, &rho0, t / steps as f64, steps).unwrap();
    let v = l.potential();
    let mut worst = 0.0f64;
    for i in 0..256 {
        for j in 0..256 {
            let phase = C64::new(-d * (l.x(i) - l.x(j)).powi(2) * t, -(v[i] - v[j]) * t);
            worst = worst.max((out.state.matrix()[(i, j)] - rho0.matrix()[(i, j)] * phase.exp()).norm());
        }
    }
    let ds = run_bundled("double-slit");
    let (e0, e1) = (key(&ds, "epsilon_no_env"), key(&ds, "epsilon_env"));
    outcome(
        worst <= 1e-10 && e0 >= 0.5 && e1 < 1e-4,
        format!("kinetic-free closed form on 256 sites: max error {worst:.1e} <= 1e-10; double slit eps without environment {e0:.3} >= 0.5, with D_loc={} {e1:.2e} < 1e-4", key(&ds, "d_loc")),
    )
}

// 6 ----------------------------------------------------------------------

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn qbm_numbers() -> Outcome {
    let b = run_bundled("qbm-room-temperature");
    let exponent = key(&b, "suppression_exponent");
    // 2 M γ k T σ²/ħ² for M = γ = σ = 1 (cgs), T = 300 K, k = 1.381e-16, ħ = 1.0546e-27.
    let hand_exponent = 7.450225105413582e40;
    let ratio = exponent / 2.0;
    let order_ok = (1e40..1e41).contains(&ratio);
    let cgs = QbmParams::cgs(1.0, 1.0, 300.0, 1.0);
    let n = QbmParams::natural(2.0, 0.3, 5.0, 0.7);
    let errs = [
        rel(exponent, hand_exponent),
        rel(qbm::fluctuation_width(&cgs).unwrap(), 1.6572e-13),
        rel(qbm::decoherence_length(&cgs).unwrap(), 2.0),
        rel(qbm::fluctuation_width(&n).unwrap(), 14.040816326530612),
        rel(qbm::decoherence_length(&n).unwrap(), 1.0633333333333332),
        rel(qbm::suppression_exponent(&n).unwrap(), 2.94),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    outcome(
        order_ok && worst <= 1e-12,
        format!("exponent {exponent:.6e} (kT/hbar^2 = {ratio:.3e}, order 1e40); max relative error against hand arithmetic {worst:.1e} <= 1e-12"),
    )
}

// 7 ----------------------------------------------------------------------

fn path_peaking() -> Outcome {
    let b = run_bundled("qbm-path-peaking");
    let (arg, ratio) = (key(&b, "argmax_amplitude"), key(&b, "curvature_ratio"));
    outcome(
        arg == 0.0 && (ratio - 1.0).abs() <= 0.1,
        format!("free particle, K=16, n_mc=1e4: argmax displacement {arg}, fitted/predicted curvature {ratio:.4} within 10%"),
    )
}

// 8 ----------------------------------------------------------------------

fn hybrid_modes() -> Outcome {
    let b = run_bundled("hybrid-superposition");
    let sep = key(&b, "stochastic_separation_over_width");
    let (up, low) = (key(&b, "stochastic_upper_count"), key(&b, "stochastic_lower_count"));
    let (mf_up, mf_low) = (key(&b, "mean_field_upper_count"), key(&b, "mean_field_lower_count"));
    let runs = up + low;
    let se = key(&b, "stochastic_sd") / runs.sqrt();
    let shift = (key(&b, "mean_field_mean") - key(&b, "stochastic_mean")).abs();
    let mf_width = key(&b, "mean_field_sd");
    let bimodal = sep > 4.0 && up >= 0.1 * runs && low >= 0.1 * runs;
    let unimodal = (mf_up == 0.0 || mf_low == 0.0) && shift <= 3.0 * se && mf_width < 0.25 * key(&b, "stochastic_separation");
    outcome(
        bimodal && unimodal,
        format!(
            "{runs} runs: stochastic modes {up}/{low} separated by {sep:.1} mode widths (> 4); mean field single mode of width {mf_width:.2e} at {:.3}, {:.1} stderr from the stochastic mean",
            key(&b, "mean_field_mean"),
            shift / se
        ),
    )
}

// 9 ----------------------------------------------------------------------

fn arrival_criterion() -> Outcome {
    let anti = run_bundled("arrival-antisymmetric");
    let (re, pe) = (key(&anti, "re_offdiag").abs(), key(&anti, "p_enter"));
    let anti_ok = re <= 1e-8 && pe <= 1e-8;

    let l = LatticeModel::centered(256, 0.1, 1.0, 1.0).unwrap();
    let rho = DensityOperator::pure(&l.gaussian(3.0, -5.0, 0.5).unwrap());
    let n = 256;
    let s = CrossingSchedule::new(l.clone(), ArrivalRegion::Below { x: 0.0 }, 0.6, n, Slicing::Trotter, Detection::Region).unwrap();
    let closed = arrival::crossing_decoherence(&s, &rho, None).unwrap();
    let (d_loc, gamma) = (80.0, 0.0);
    let env = ArrivalEnvironment { model: QbmLatticeModel::new(l, d_loc, gamma, 0.0).unwrap(), dt: 0.002 };
    let open = arrival::crossing_decoherence(&s, &rho, Some(&env)).unwrap();
    let oracle = LangevinOracle { mean_x: 3.0, mean_p: -5.0, sd_x: 0.5, sd_p: 1.0, samples: 20_000, substeps: 4, seed: 7 };
    let (lp, lse) = arrival::langevin_entry_probability(&s, d_loc, gamma, &oracle).unwrap();
    let dev = (open.p_enter - lp).abs() / lp;
    let env_ok = open.epsilon < 1e-3 && dev <= 0.1;

    let coarse = run_bundled("arrival-packet");
    outcome(
        anti_ok && closed.epsilon > 0.1 && env_ok,
        format!(
            "antisymmetric |Re D| {re:.1e}, p_enter {pe:.1e} (<= 1e-8); packet at {n} slices: closed eps {:.3} (need > 0.1), D_loc={d_loc} eps {:.3} (need < 1e-3), p_enter {:.3} vs Langevin {lp:.3} +- {lse:.3} ({:.1}%, need <= 10%) | 5 slices: closed eps {:.1e}, D_loc={} eps {:.1e}, p_enter vs Langevin {:.1}%",
            closed.epsilon,
            open.epsilon,
            open.p_enter,
            100.0 * dev,
            key(&coarse, "epsilon"),
            key(&coarse, "env_d_loc"),
            key(&coarse, "env_epsilon"),
            100.0 * key(&coarse, "env_vs_langevin_rel"),
        ),
    )
}

// 10 ---------------------------------------------------------------------

/// Measure of {θ ∈ [w0, w1] : lo < A cos θ < hi}.
fn arc_time(a: f64, lo: f64, hi: f64, w0: f64, w1: f64) -> f64 {
    let lo = (lo / a).clamp(-1.0, 1.0);
    let hi = (hi / a).clamp(-1.0, 1.0);
    if lo >= hi {
        return 0.0;
    }
    // cos θ ∈ (lo, hi) on θ ∈ (acos hi, acos lo) and its mirror.
    let (t0, t1) = (hi.acos(), lo.acos());
    let mut total = 0.0;
    for k in -3..=3 {
        let off = 2.0 * PI * k as f64;
        for (s, e) in [(t0 + off, t1 + off), (-t1 + off, -t0 + off)] {
            total += (e.min(w1) - s.max(w0)).max(0.0);
        }
    }
    total
}

/// p_Δ for the unit harmonic oscillator by quadrature over a dense phase-space
/// grid, with the exact orbit x(t) = A cos(t + θ₀) and the solver's horizon
/// rule: one period when two turning points fall inside t_max, else t_max.
fn harmonic_grid_oracle(boxes: &[(f64, f64)], mean_x: f64, t_max: f64, eps: f64) -> f64 {
    let (n, half) = (2400usize, 8.0);
    let hstep = 2.0 * half / n as f64;
    let mut p_total = 0.0;
    let mut w_total = 0.0;
    for i in 0..n {
        let x = mean_x - half + (i as f64 + 0.5) * hstep;
        let wx = (-(x - mean_x).powi(2) / 2.0).exp();
        for j in 0..n {
            let p = -half + (j as f64 + 0.5) * hstep;
            let w = wx * (-p * p / 2.0).exp();
            w_total += w;
            let a = x.hypot(p);
            let theta0 = (-p).atan2(x);
            let first_turn = (-theta0).rem_euclid(2.0 * PI);
            let horizon = if first_turn + 2.0 * PI <= t_max { 2.0 * PI } else { t_max };
            let dwell: f64 = boxes.iter().map(|&(lo, hi)| arc_time(a, lo, hi, theta0, theta0 + horizon)).sum();
            if dwell > eps {
                p_total += w;
            }
        }
    }
    p_total / w_total
}

fn timeless_oracle() -> Outcome {
    let text = scenario::bundled("timeless-oscillator").unwrap().text;
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    let params = &v["parameters"];
    let t_max = params["t_max"].as_f64().unwrap();
    let mean_x = params["ensemble"]["mean_x"][0].as_f64().unwrap();
    let b = run_bundled("timeless-oscillator");
    let eps = key(&b, "epsilon");
    let bound = |x: &serde_json::Value, inf: f64| x.as_f64().unwrap_or(inf);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut checked = 0;
    for r in params["regions"].as_array().unwrap() {
        let name = r["name"].as_str().unwrap();
        if name == "forbidden" || name == "whole" {
            continue;
        }
        let boxes: Vec<(f64, f64)> = r["boxes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|bx| (bound(&bx["lo"][0], f64::NEG_INFINITY), bound(&bx["hi"][0], f64::INFINITY)))
            .collect();
        let oracle = harmonic_grid_oracle(&boxes, mean_x, t_max, eps);
        let (p, se) = (key(&b, &format!("p_{name}")), key(&b, &format!("stderr_{name}")));
        let z = (p - oracle).abs() / se.max(1e-12);
        ok &= z <= 3.0;
        checked += 1;
        lines.push(format!("{name} {p:.4}/{oracle:.4} ({z:.1} se)"));
    }
    let (pf, pw) = (key(&b, "p_forbidden"), key(&b, "p_whole"));
    ok &= checked == 5 && pf == 0.0 && pw == 1.0;
    outcome(ok, format!("MC/grid oracle within 3 stderr: {}; forbidden {pf}, whole {pw}", lines.join(", ")))
}

// 11 ---------------------------------------------------------------------

fn reproducibility() -> Outcome {
    let mut bad = Vec::new();
    for b in BUNDLED {
        let s = Scenario::parse(b.text).unwrap();
        let runs: Vec<ResultBundle> = [1, 2, 8].iter().map(|&k| s.run_with_threads(k).unwrap()).collect();
        let same = runs.windows(2).all(|w| {
            w[0].summary_bits() == w[1].summary_bits() && w[0].tables.iter().map(|t| t.to_csv()).eq(w[1].tables.iter().map(|t| t.to_csv()))
        });
        if !same {
            bad.push(b.name);
        }
    }
    outcome(bad.is_empty(), format!("{} bundled scenarios at 1, 2 and 8 threads: summaries and tables bitwise equal; mismatches {bad:?}", BUNDLED.len()))
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Option<u64>, Check); 11] = [
        (1, "decoherence-functional algebra", Some(30), functional_algebra),
        (2, "exact decoherence of conserved quantities", Some(10), conserved_exact),
        (3, "records round trip", Some(30), records_round_trip),
        (4, "QSD ensemble vs Lindblad", Some(120), qsd_lindblad),
        (5, "position decoherence", Some(60), position_decoherence),
        (6, "QBM suppression numbers", Some(1), qbm_numbers),
        (7, "path-probability peaking", Some(60), path_peaking),
        (8, "quantum-classical coupling", Some(120), hybrid_modes),
        (9, "arrival histories", Some(180), arrival_criterion),
        (10, "timeless region probabilities", Some(60), timeless_oracle),
        (11, "reproducibility across thread counts", None, reproducibility),
    ];
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, budget, check) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let in_budget = budget.is_none_or(|b| took <= Duration::from_secs(b));
        let pass = o.pass && in_budget;
        failed += usize::from(!pass);
        let limit = budget.map_or(String::new(), |b| format!(" (budget {b} s)"));
        println!("[{}] {id:>2} {name}: {} | {:.2} s{limit}", if pass { "PASS" } else { "FAIL" }, o.detail, took.as_secs_f64());
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var("DECHIST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
