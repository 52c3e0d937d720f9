//! Small dense-vector kernels shared by the solvers.

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Conjugate gradients for a symmetric positive-definite operator given as
/// `op(x, y)` writing `y = A x`. Stops when `‖r‖₂ ≤ rel_tol ‖b‖₂`.
pub(crate) fn conjugate_gradient<F>(
    mut op: F,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let len = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; len], <[f64]>::to_vec);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let mut ap = vec![0.0; len];
    op(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rel_tol * b_norm;
    let mut history = Vec::new();
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok(x);
        }
        op(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        history.push(rr_new.sqrt() / b_norm);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..len {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= target {
        return Ok(x);
    }
    Err(Error::Convergence {
        solver: "conjugate gradient",
        iterations: max_iter,
        last_change: rr.sqrt() / b_norm,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_small_spd_system() {
        // [[4,1],[1,3]] x = [1,2] -> x = [1/11, 7/11]
        let op = |x: &[f64], y: &mut [f64]| {
            y[0] = 4.0 * x[0] + x[1];
            y[1] = x[0] + 3.0 * x[1];
        };
        let x = conjugate_gradient(op, &[1.0, 2.0], None, 1e-14, 10).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn cg_zero_rhs() {
        let op = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        assert_eq!(
            conjugate_gradient(op, &[0.0; 3], None, 1e-12, 5).unwrap(),
            vec![0.0; 3]
        );
    }
}
