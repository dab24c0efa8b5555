//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005).

use super::{c, Mat};
use crate::error::{Error, Result};

const B: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA_13: f64 = 5.371920351148152;

fn one_norm(a: &Mat) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// exp(a) for a general square complex matrix.
pub fn expm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("expm needs a square matrix".into()));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::param("matrix", "non-finite entries"));
    }
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    let a = a * c(0.5f64.powi(s));
    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * c(B[13]) + &a4 * c(B[11]) + &a2 * c(B[9]));
    let u = &a * (inner_u + &a6 * c(B[7]) + &a4 * c(B[5]) + &a2 * c(B[3]) + &id * c(B[1]));
    let inner_v = &a6 * (&a6 * c(B[12]) + &a4 * c(B[10]) + &a2 * c(B[8]));
    let v = inner_v + &a6 * c(B[6]) + &a4 * c(B[4]) + &a2 * c(B[2]) + &id * c(B[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::guard("hilbert", "singular Padé denominator", norm))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{max_abs, Operator, Propagator, C64};

    #[test]
    fn zero_and_diagonal() {
        let z = Mat::zeros(3, 3);
        assert!(max_abs(&(expm(&z).unwrap() - Mat::identity(3, 3))) < 1e-15);
        let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), C64::new(0.0, 2.0), c(-3.0)]));
        let e = expm(&d).unwrap();
        assert!((e[(0, 0)] - c(1f64.exp())).norm() < 1e-13);
        assert!((e[(1, 1)] - C64::from_polar(1.0, 2.0)).norm() < 1e-13);
        assert!((e[(2, 2)] - c((-3f64).exp())).norm() < 1e-15);
    }

    #[test]
    fn nilpotent_series_terminates() {
        let mut n = Mat::zeros(3, 3);
        n[(0, 1)] = c(2.0);
        n[(1, 2)] = c(3.0);
        let e = expm(&n).unwrap();
        assert!((e[(0, 2)] - c(3.0)).norm() < 1e-13);
        assert!((e[(0, 1)] - c(2.0)).norm() < 1e-13);
    }

    #[test]
    fn agrees_with_eigen_path_for_large_norm_hermitian() {
        let h = Mat::from_fn(6, 6, |i, j| {
            let x = ((i * 7 + j * 3) % 5) as f64 - 2.0;
            let y = if i == j { 0.0 } else { ((i + 2 * j) % 3) as f64 - 1.0 };
            C64::new(x, y)
        });
        let h = (&h + h.adjoint()) * c(4.0);
        let t = 1.7;
        let pade = expm(&(&h * C64::new(0.0, -t))).unwrap();
        let eig = Propagator::new(&Operator::new(h).unwrap(), 1.0).unwrap().unitary(t);
        assert!(max_abs(&(pade - eig.matrix())) < 1e-9);
    }
}
