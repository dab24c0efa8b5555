use dechist::qbm::*;

fn params() -> QbmParams {
    QbmParams::natural(1.0, 0.1, 0.5, 0.3)
}

fn log_wigner(w: &GaussianWigner, x: f64, p: f64) -> f64 {
    let c = w.cov;
    let det = c[0][0] * c[1][1] - c[0][1] * c[0][1];
    let (a, b) = (x - w.mean_x, p - w.mean_p);
    -(c[1][1] * a * a - 2.0 * c[0][1] * a * b + c[0][0] * b * b) / (2.0 * det) - (2.0 * std::f64::consts::PI * det.sqrt()).ln()
}

/// Dense tensor-grid trapezoid quadrature of the path integrand, written
/// directly from the continuum expression.
fn brute_force(xbar: &[f64], dt: f64, p: &QbmParams, w: &GaussianWigner, pts: usize, half_width: f64) -> f64 {
    let n = xbar.len();
    let df2 = p.hbar * p.hbar / (p.sigma * p.sigma) + 4.0 * p.mass * p.gamma * p.k_b * p.temperature;
    let h = 2.0 * half_width / (pts - 1) as f64;
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let x: Vec<f64> = (0..n).map(|k| xbar[k] - half_width + idx[k] as f64 * h).collect();
        let mut s = 0.0;
        for k in 0..n {
            let wk = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            s -= wk * dt * (x[k] - xbar[k]).powi(2) / (p.sigma * p.sigma);
        }
        if n >= 4 {
            for k in 1..n - 1 {
                let f = p.mass * (x[k + 1] - 2.0 * x[k] + x[k - 1]) / (dt * dt) + p.mass * p.gamma * (x[k + 1] - x[k - 1]) / (2.0 * dt);
                s -= dt * f * f / (2.0 * df2);
            }
        }
        let v0 = if n >= 3 { (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt) } else { (x[1] - x[0]) / dt };
        s += log_wigner(w, x[0], p.mass * v0);
        total += s.exp();
        let mut k = 0;
        loop {
            if k == n {
                return total * h.powi(n as i32);
            }
            idx[k] += 1;
            if idx[k] < pts {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn single_interval_matches_quadrature() {
    let p = params();
    let w = GaussianWigner::coherent(0.1, 0.2, 0.5, 1.0).unwrap();
    let path = SampledPath::new(0.0, 1.0, vec![0.2, 0.3]).unwrap();
    let mc = path_probability(&path, &p, &w, 20_000, 7).unwrap();
    let exact = brute_force(&path.values, 1.0, &p, &w, 801, 2.5);
    assert!((mc.weight - exact).abs() < 3.0 * mc.stderr, "{} ± {} vs {exact}", mc.weight, mc.stderr);
}

#[test]
fn classical_path_outweighs_displaced_path() {
    let p = params();
    let w = GaussianWigner::coherent(0.0, 0.5, 0.5, 1.0).unwrap();
    let dt = 1.0;
    let classical = |t: f64| 0.5 / p.gamma * (1.0 - (-p.gamma * t).exp());
    let a = SampledPath::from_fn(0.0, dt, 3, classical).unwrap();
    let df = fluctuation_width(&p).unwrap().sqrt();
    // F[(t−t0)²] = 2M + 2Mγt, so this shifts F by about 5ΔF.
    let d = 5.0 * df / (2.0 * p.mass);
    let b = SampledPath::from_fn(0.0, dt, 3, |t| classical(t) + d * t * t).unwrap();
    let wa = path_probability(&a, &p, &w, 20_000, 1).unwrap();
    let wb = path_probability(&b, &p, &w, 20_000, 1).unwrap();
    let oa = brute_force(&a.values, dt, &p, &w, 41, 1.2);
    let ob = brute_force(&b.values, dt, &p, &w, 41, 1.2);
    assert!(oa / ob > 10.0 && wa.weight / wb.weight > 10.0);
    assert!((wa.weight - oa).abs() < 3.0 * wa.stderr + 1e-3 * oa, "{} vs {oa}", wa.weight);
    assert!((wb.log_weight - ob.ln()).abs() < 3.0 * wb.rel_stderr + 1e-3);
}

#[test]
fn free_particle_time_translation() {
    let p = params();
    let w0 = GaussianWigner::coherent(0.0, 0.3, 0.5, 1.0).unwrap();
    let w1 = GaussianWigner::coherent(1.0, 0.3, 0.5, 1.0).unwrap();
    let a = SampledPath::from_fn(0.0, 0.5, 6, |t| 0.3 * t).unwrap();
    let b = SampledPath::new(7.0, 0.5, a.values.iter().map(|v| v + 1.0).collect()).unwrap();
    let wa = path_probability(&a, &p, &w0, 4000, 3).unwrap();
    let wb = path_probability(&b, &p, &w1, 4000, 3).unwrap();
    assert!((wa.log_weight - wb.log_weight).abs() < 1e-10);
}
