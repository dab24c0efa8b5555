use dechist::hilbert::{DensityOperator, LatticeModel, StateVector, Vector, C64};
use dechist::scenario::{self, Job, Scenario};
use dechist::timeless::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bundled_timeless() -> (TrajectorySolver, EnsembleSpec, Vec<Region>) {
    let s = Scenario::parse(scenario::bundled("timeless-oscillator").unwrap().text).unwrap();
    let Job::Timeless(p) = s.job else { panic!("not a timeless scenario") };
    let solver = TrajectorySolver::new(p.mass, p.potential, p.h, p.t_max).unwrap();
    let regions = p.regions.iter().map(|r| Region::new(r.boxes.clone()).unwrap()).collect();
    (solver, p.ensemble, regions)
}

fn quartic(h: f64) -> TrajectorySolver {
    TrajectorySolver::new(1.0, Potential::Quartic { omega: 1.0, lambda: 0.5 }, h, 40.0).unwrap()
}

#[test]
fn energy_drift_on_bundled_potentials() {
    let (solver, spec, _) = bundled_timeless();
    let ens = spec.sample(&solver, 400, 11).unwrap();
    let worst = (0..ens.len()).map(|i| integrate_trajectory(&solver, ens.x(i), ens.p(i)).unwrap().max_energy_error).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "harmonic drift {worst}");

    let free = TrajectorySolver::new(1.0, Potential::Free, solver.h, 5.0).unwrap();
    assert!(integrate_trajectory(&free, &[0.3], &[-1.2]).unwrap().max_energy_error <= 1e-12);

    let q = quartic(5e-4);
    for (x, p) in [(0.5, 0.0), (1.5, 0.3), (-0.2, 2.0)] {
        let e = integrate_trajectory(&q, &[x], &[p]).unwrap().max_energy_error;
        assert!(e <= 1e-6, "quartic drift {e} at ({x}, {p})");
    }
}

#[test]
fn quartic_energy_against_half_step() {
    // Leapfrog energy error is O(h²): the half-step run must be four times
    // smaller, which also bounds the full-step run from an independent estimate.
    for (x, p) in [(1.0, 0.0), (0.4, 1.1), (-1.3, -0.5)] {
        let full = integrate_trajectory(&quartic(5e-4), &[x], &[p]).unwrap().max_energy_error;
        let half = integrate_trajectory(&quartic(2.5e-4), &[x], &[p]).unwrap().max_energy_error;
        let ratio = full / half;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio} at ({x}, {p})");
        assert!(full <= 1e-6, "{full}");
    }
}

#[test]
fn quartic_orbit_sweep_is_reparametrization_invariant() {
    let s = quartic(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x0 = rng.random_range(-1.5..1.5);
        let p0 = rng.random_range(-1.5..1.5);
        let amp = {
            let t = integrate_trajectory(&s.with_fixed_horizon(), &[x0], &[p0]).unwrap();
            (0..t.len()).map(|k| t.x(k)[0]).fold(0.0f64, f64::max)
        };
        if amp < 0.2 {
            continue;
        }
        let r = reparam_invariant_check(&s, &[x0], &[p0], &Region::above(0.5 * amp)).unwrap();
        assert!(r.passed, "({x0}, {p0}): {r:?}");
    }
}

#[test]
fn epsilon_robustness_on_bundled_regions() {
    let (solver, spec, regions) = bundled_timeless();
    let ens = spec.sample(&solver, 2000, 5).unwrap();
    for e in entry_probabilities_for(&ens, &solver, &regions, solver.default_epsilon()).unwrap() {
        let bound = 3.0 * std::f64::consts::SQRT_2 * e.stderr;
        assert!((e.p - e.p_double_epsilon).abs() <= bound.max(1e-12), "{} vs {} (se {})", e.p, e.p_double_epsilon, e.stderr);
        assert!((0.0..=1.0).contains(&e.p));
    }
}

#[test]
fn stationary_weights_survive_transport() {
    // A centred unit Gaussian is a function of H for the unit oscillator, so
    // moving every sample along its orbit draws from the same distribution.
    let solver = TrajectorySolver::new(1.0, Potential::Harmonic { omega: 1.0 }, 1e-3, 7.0).unwrap();
    let spec = EnsembleSpec::Gaussian { mean_x: vec![0.0], mean_p: vec![0.0], sd_x: vec![1.0], sd_p: vec![1.0] };
    let ens = spec.sample(&solver, 3000, 9).unwrap();
    let shift = TrajectorySolver { t_max: 1.3, ..solver }.with_fixed_horizon();
    let (mut xs, mut ps) = (Vec::new(), Vec::new());
    for i in 0..ens.len() {
        let t = integrate_trajectory(&shift, ens.x(i), ens.p(i)).unwrap();
        xs.push(t.x(t.len() - 1)[0]);
        ps.push(t.p(t.len() - 1)[0]);
    }
    let moved = PhaseSpaceEnsemble::new(1, xs, ps, ens.weights.clone()).unwrap();
    for region in [Region::above(1.0), Region::interval(-2.0, -1.2).unwrap()] {
        let a = entry_probability_for(&ens, &solver, &region, 0.01).unwrap();
        let b = entry_probability_for(&moved, &solver, &region, 0.01).unwrap();
        assert!((a.p - b.p).abs() <= a.stderr.max(1e-12), "{} vs {} (se {})", a.p, b.p, a.stderr);
    }
}

fn oscillator_lattice() -> LatticeModel {
    LatticeModel::centered(128, 0.1, 1.0, 1.0).unwrap().with_potential(|x| 0.5 * x * x).unwrap()
}

fn lattice_state(l: &LatticeModel, f: impl Fn(f64) -> C64) -> DensityOperator {
    let v = Vector::from_iterator(l.n_sites(), l.positions().into_iter().map(f));
    DensityOperator::pure(&StateVector::normalized(v).unwrap())
}

fn oscillator_solver() -> TrajectorySolver {
    TrajectorySolver::new(1.0, Potential::Harmonic { omega: 1.0 }, 2e-3, 8.0).unwrap()
}

#[test]
fn coherent_state_matches_classical_ensemble() {
    let l = oscillator_lattice();
    let (x0, p0) = (1.0, 0.5);
    let rho = lattice_state(&l, |x| C64::from_polar((-(x - x0).powi(2) / 2.0).exp(), p0 * x));
    let solver = oscillator_solver();
    let region = Region::above(1.6);
    let q = semiclassical_probability(&rho, &l, 128, &solver, &region, 0.02, 4000, 1).unwrap();
    assert!(!q.unreliable, "{q:?}");
    let sd = std::f64::consts::FRAC_1_SQRT_2;
    let spec = EnsembleSpec::Gaussian { mean_x: vec![x0], mean_p: vec![p0], sd_x: vec![sd], sd_p: vec![sd] };
    let c = region_entry_probability(&spec, 4000, &solver, &region, 0.02, 2).unwrap();
    let se = q.stderr.hypot(c.stderr);
    assert!((q.p - c.p).abs() <= 3.0 * se, "quantum {} classical {} (se {se})", q.p, c.p);
}

#[test]
fn excited_state_enters_the_right_half() {
    let l = oscillator_lattice();
    let rho = lattice_state(&l, |x| C64::from(x * (-x * x / 2.0).exp()));
    let q = semiclassical_probability(&rho, &l, 128, &oscillator_solver(), &Region::above(0.0), 0.02, 2000, 4).unwrap();
    assert!(q.p > 0.97, "{q:?}");
}

#[test]
fn cat_state_reports_negative_weight() {
    let l = oscillator_lattice();
    let cat = lattice_state(&l, |x| C64::from((-(x - 2.5).powi(2) / 2.0).exp() + (-(x + 2.5).powi(2) / 2.0).exp()));
    let q = semiclassical_probability(&cat, &l, 128, &oscillator_solver(), &Region::above(1.0), 0.02, 1000, 6).unwrap();
    assert!(q.negative_fraction > 0.1, "{q:?}");
    let coherent = lattice_state(&l, |x| C64::from((-(x - 1.0).powi(2) / 2.0).exp()));
    let c = semiclassical_probability(&coherent, &l, 128, &oscillator_solver(), &Region::above(1.0), 0.02, 1000, 6).unwrap();
    assert!(c.negative_fraction < 0.02, "{c:?}");
}
