use dechist::arrival::*;
use dechist::hilbert::{DensityOperator, LatticeModel, Propagator};
use dechist::open_systems::QbmLatticeModel;

fn packet_setup(slicing: Slicing, n_steps: usize) -> (CrossingSchedule, DensityOperator) {
    let l = LatticeModel::centered(256, 0.1, 1.0, 1.0).unwrap();
    let psi = l.gaussian(3.0, -5.0, 0.5).unwrap();
    let s = CrossingSchedule::new(l, ArrivalRegion::Below { x: 0.0 }, 0.6, n_steps, slicing, Detection::Region).unwrap();
    (s, DensityOperator::pure(&psi))
}

#[test]
fn parity_reflection_maps_results() {
    let l = LatticeModel::centered(129, 0.1, 1.0, 1.0).unwrap();
    let right = DensityOperator::pure(&l.gaussian(1.5, -4.0, 0.4).unwrap());
    let left = DensityOperator::pure(&l.gaussian(-1.5, 4.0, 0.4).unwrap());
    for slicing in [Slicing::Trotter, Slicing::Continuum] {
        let a = CrossingSchedule::new(l.clone(), ArrivalRegion::Below { x: 0.0 }, 0.5, 6, slicing, Detection::Region).unwrap();
        let b = CrossingSchedule::new(l.clone(), ArrivalRegion::Above { x: 0.0 }, 0.5, 6, slicing, Detection::Region).unwrap();
        let ra = crossing_decoherence(&a, &right, None).unwrap();
        let rb = crossing_decoherence(&b, &left, None).unwrap();
        let diff = (ra.d.entries() - rb.d.entries()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
        assert!(ra.p_enter > 0.05);
    }
}

#[test]
fn class_operators_are_exhaustive() {
    let (s, _) = packet_setup(Slicing::Trotter, 7);
    let (c_not, c_enter) = crossing_class_operators(&s).unwrap();
    let u = Propagator::new(&s.lattice().hamiltonian(), 1.0).unwrap().unitary(s.tau());
    assert!(c_not.add(&c_enter).unwrap().distance(&u) < 1e-12);
}

#[test]
fn closed_crossing_is_not_consistent() {
    let (s, rho) = packet_setup(Slicing::Continuum, 2);
    let r = crossing_decoherence(&s, &rho, None).unwrap();
    assert!(r.epsilon > 0.1);
}

#[test]
fn strong_environment_matches_langevin() {
    let (s, rho) = packet_setup(Slicing::Trotter, 5);
    let d = 80.0;
    let env = ArrivalEnvironment { model: QbmLatticeModel::new(s.lattice().clone(), d, 0.0, 0.0).unwrap(), dt: 2e-3 };
    let r = crossing_decoherence(&s, &rho, Some(&env)).unwrap();
    assert!(r.epsilon < 1e-3, "{}", r.epsilon);
    assert!((r.d.total().re - 1.0).abs() < 1e-6);
    let o = LangevinOracle { mean_x: 3.0, mean_p: -5.0, sd_x: 0.5, sd_p: 1.0, samples: 20000, substeps: 20, seed: 7 };
    let (p, _) = langevin_entry_probability(&s, d, 0.0, &o).unwrap();
    assert!((r.p_enter - p).abs() < 0.1 * p, "{} vs {p}", r.p_enter);
}

