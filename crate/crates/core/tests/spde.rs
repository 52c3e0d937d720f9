mod common;

use rspde_core::spde::kernel_representation;
use rspde_core::{picard_solve, sample_noise, CoefficientPair, GridSpec, PicardOptions};

#[test]
fn kernel_representation_reproduces_solution_at_nodes() {
    let coeffs = CoefficientPair::from_specs("linear:-0.1,1", "const:0.3").unwrap();
    for (d, n) in [(1, 16), (2, 8)] {
        let s = GridSpec::new(d, n).unwrap();
        let sol = picard_solve(&coeffs, &sample_noise(s, 9), &PicardOptions::default()).unwrap();
        for k in 0..s.interior_count() {
            let x = s.point(k);
            let rep = kernel_representation(&sol, &coeffs, &x[..d]).unwrap();
            assert!((rep - sol.u.values()[k]).abs() < 1e-7, "d={d} k={k}");
        }
    }
}

#[test]
fn reflected_solution_satisfies_discrete_equation() {
    let coeffs = CoefficientPair::from_specs("sin:0.1,0.5", "sin:0.05,0.3").unwrap();
    let (d, n) = (2, 8);
    let s = GridSpec::new(d, n).unwrap();
    let noise = sample_noise(s, 21);
    let sol = picard_solve(&coeffs, &noise, &PicardOptions::default()).unwrap();
    let u = sol.u.values();
    let bu = common::b_times(u, d, n);
    let nd = s.cell_count() as f64;
    for k in 0..u.len() {
        let x = s.point(k);
        let cell = noise.cell_index(s.multi_index(k).components());
        let rhs =
            coeffs.f(&x[..d], u[k]) + nd * coeffs.sigma(&x[..d], u[k]) * noise.increments()[cell];
        let eta = sol.eta.values()[k];
        assert!((bu[k] - rhs - eta).abs() < 1e-7);
        assert!(u[k] >= -1e-8 && eta >= -1e-8);
        assert!(u[k] * eta < 1e-8);
    }
}

#[test]
fn strong_negative_drift_pins_solution_to_zero() {
    let coeffs = CoefficientPair::from_specs("linear:-0.1,-1", "const:0.1").unwrap();
    let s = GridSpec::new(1, 4).unwrap();
    let sol = picard_solve(&coeffs, &sample_noise(s, 42), &PicardOptions::default()).unwrap();
    assert!(sol.u.values().iter().all(|&v| v == 0.0));
}
