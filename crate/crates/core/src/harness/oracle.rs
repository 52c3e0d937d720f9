//! Dense reference computations for small grids, independent of the fast
//! solvers: `B` assembled entry by entry, Gaussian elimination, and the LCP
//! solved by enumerating every active set.

use crate::error::{Error, Result};
use crate::lattice::GridSpec;

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub size: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|i| {
                self.data[i * self.size..(i + 1) * self.size]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    fn sub(&self, idx: &[usize]) -> DenseMatrix {
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in idx {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        DenseMatrix { size: m, data }
    }
}

/// `B = -n² Aⁿ`: `2d n²` on the diagonal, `-n²` between lattice neighbours.
/// Built from multi-indices via the natural-rank formula.
pub fn dense_b(spec: &GridSpec) -> DenseMatrix {
    let d = spec.dim();
    let m = spec.n() - 1;
    let size = spec.interior_count();
    let n2 = (spec.n() * spec.n()) as f64;
    let rank = |i: &[usize]| -> usize {
        let mut k = 0;
        let mut stride = 1;
        for &c in i {
            k += (c - 1) * stride;
            stride *= m;
        }
        k
    };
    let mut data = vec![0.0; size * size];
    let mut i = vec![1usize; d];
    loop {
        let row = rank(&i);
        data[row * size + row] = 2.0 * d as f64 * n2;
        for j in 0..d {
            for step in [-1i64, 1] {
                let c = i[j] as i64 + step;
                if c >= 1 && c <= m as i64 {
                    let mut nb = i.clone();
                    nb[j] = c as usize;
                    data[row * size + rank(&nb)] = -n2;
                }
            }
        }
        let mut j = 0;
        while j < d {
            i[j] += 1;
            if i[j] <= m {
                break;
            }
            i[j] = 1;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    DenseMatrix { size, data }
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.size;
    if b.len() != n {
        return Err(Error::domain(format!(
            "rhs has {} entries, matrix {n}",
            b.len()
        )));
    }
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))
            .expect("non-empty range");
        if m[piv * n + col].abs() < 1e-300 {
            return Err(Error::domain("singular matrix"));
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r * n + k] * x[k]).sum();
        x[r] = (x[r] - s) / m[r * n + r];
    }
    Ok(x)
}

/// Largest problem size the exhaustive solver accepts.
pub const EXHAUSTIVE_LIMIT: usize = 16;

/// Solves `w ≥ 0, Mw - q ≥ 0, ⟨w, Mw - q⟩ = 0` by trying every active set
/// `{w_k = 0}` and returning the first feasible candidate.
pub fn exhaustive_lcp(m: &DenseMatrix, q: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = m.size;
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::Unsupported(format!(
            "exhaustive LCP on {n} unknowns (limit {EXHAUSTIVE_LIMIT})"
        )));
    }
    for mask in 0..(1usize << n) {
        let free: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
        let mut w = vec![0.0; n];
        if !free.is_empty() {
            let qf: Vec<f64> = free.iter().map(|&k| q[k]).collect();
            let wf = gauss_solve(&m.sub(&free), &qf)?;
            for (&k, v) in free.iter().zip(wf) {
                w[k] = v;
            }
        }
        if w.iter().any(|&v| v < -tol) {
            continue;
        }
        let mw = m.mul_vec(&w);
        if (0..n).all(|k| mask >> k & 1 == 1 || mw[k] - q[k] >= -tol) {
            return Ok(w);
        }
    }
    Err(Error::domain(
        "no active set yields a feasible LCP solution",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_b_small() {
        let b = dense_b(&GridSpec::new(2, 3).unwrap());
        assert_eq!(b.size, 4);
        let expect = [
            36.0, -9.0, -9.0, 0.0, //
            -9.0, 36.0, 0.0, -9.0, //
            -9.0, 0.0, 36.0, -9.0, //
            0.0, -9.0, -9.0, 36.0,
        ];
        assert_eq!(b.data, expect);
    }

    #[test]
    fn gauss_solves() {
        let a = DenseMatrix {
            size: 2,
            data: vec![0.0, 2.0, 1.0, 1.0],
        };
        let x = gauss_solve(&a, &[4.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn exhaustive_lcp_one_dimensional() {
        let m = DenseMatrix {
            size: 1,
            data: vec![8.0],
        };
        assert_eq!(exhaustive_lcp(&m, &[4.0], 1e-12).unwrap(), vec![0.5]);
        assert_eq!(exhaustive_lcp(&m, &[-4.0], 1e-12).unwrap(), vec![0.0]);
    }
}
