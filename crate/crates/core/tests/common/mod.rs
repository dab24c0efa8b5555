//! Random instances shared by the property and acceptance tests.
#![allow(dead_code)]

use dechist::hilbert::{DensityOperator, Mat, Operator, ProjectorFamily, Propagator, StateVector, Vector, C64};
use dechist::histories::HistorySchedule;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type R = ChaCha8Rng;

pub fn rng(seed: u64) -> R {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(r: &mut R) -> f64 {
    r.sample::<f64, _>(rand_distr::StandardNormal)
}

pub fn random_matrix(r: &mut R, n: usize) -> Mat {
    Mat::from_fn(n, n, |_, _| C64::new(gauss(r), gauss(r)))
}

pub fn random_hermitian(r: &mut R, n: usize) -> Operator {
    let a = random_matrix(r, n);
    Operator::new((&a + a.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

pub fn random_state(r: &mut R, n: usize) -> StateVector {
    StateVector::normalized(Vector::from_fn(n, |_, _| C64::new(gauss(r), gauss(r)))).unwrap()
}

/// Full-rank or low-rank mixture of random pure states.
pub fn random_density(r: &mut R, n: usize) -> DensityOperator {
    let k = r.random_range(1..=n);
    let w: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|x| x / s).collect();
    let states: Vec<StateVector> = (0..k).map(|_| random_state(r, n)).collect();
    DensityOperator::mixture(&w, &states).unwrap()
}

/// Random unitary e^{−iH} for a random Hermitian H.
pub fn random_unitary(r: &mut R, n: usize) -> Operator {
    let h = random_hermitian(r, n);
    Propagator::new(&h, 1.0).unwrap().unitary(1.0)
}

/// Random basis partition into 2..=n groups, rotated by a random unitary.
pub fn random_family(r: &mut R, n: usize) -> ProjectorFamily {
    let k = r.random_range(2..=n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    let mut groups: Vec<Vec<usize>> = (0..k).map(|g| vec![idx[g]]).collect();
    for &i in &idx[k..] {
        let g = r.random_range(0..k);
        groups[g].push(i);
    }
    let labels = (0..k).map(|g| g.to_string()).collect();
    let f = ProjectorFamily::from_partition(n, &groups, labels).unwrap();
    f.conjugated(&random_unitary(r, n)).unwrap()
}

/// Eigenprojectors of `h` merged into random groups, so every member commutes with `h`.
pub fn commuting_family(r: &mut R, h: &Operator) -> ProjectorFamily {
    let eig = ProjectorFamily::eigenprojectors(h, 1e-9).unwrap();
    let m = eig.len();
    let k = r.random_range(1..=m.min(4));
    let mut sums: Vec<Option<Operator>> = vec![None; k];
    for (i, p) in eig.members().iter().enumerate() {
        let g = if i < k { i } else { r.random_range(0..k) };
        sums[g] = Some(match sums[g].take() {
            None => p.clone(),
            Some(s) => s.add(p).unwrap(),
        });
    }
    let members: Vec<Operator> = sums.into_iter().map(Option::unwrap).collect();
    let labels = (0..k).map(|g| format!("E{g}")).collect();
    ProjectorFamily::new(members, labels).unwrap()
}

pub fn random_times(r: &mut R, n: usize) -> Vec<f64> {
    let mut t = 0.0;
    (0..n).map(|_| {
        t += r.random_range(0.1..2.0);
        t
    })
    .collect()
}

/// Random schedule with dim ≤ 6 and at most 3 slots.
pub fn random_schedule(r: &mut R) -> HistorySchedule {
    let dim = r.random_range(2..=6);
    let slots = r.random_range(1..=3);
    let h = random_hermitian(r, dim);
    let families = (0..slots).map(|_| random_family(r, dim)).collect();
    HistorySchedule::new(random_times(r, slots), families, h, 0.0, 1.0).unwrap()
}

/// Schedule whose every projector commutes with the Hamiltonian.
pub fn conserved_schedule(r: &mut R) -> HistorySchedule {
    let dim = r.random_range(2..=6);
    let slots = r.random_range(1..=3);
    let h = random_hermitian(r, dim);
    let families = (0..slots).map(|_| commuting_family(r, &h)).collect();
    HistorySchedule::new(random_times(r, slots), families, h, 0.0, 1.0).unwrap()
}
