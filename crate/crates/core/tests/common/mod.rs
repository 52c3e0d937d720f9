//! Reference computations written from the defining formulas, sharing no
//! code with the library solvers.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Multi-index (1-based) of storage position `k`, axis 0 fastest.
pub fn index_of(k: usize, d: usize, n: usize) -> Vec<usize> {
    let m = n - 1;
    let mut rest = k;
    (0..d)
        .map(|_| {
            let c = rest % m + 1;
            rest /= m;
            c
        })
        .collect()
}

pub fn position_of(i: &[usize], n: usize) -> usize {
    let m = n - 1;
    i.iter().rev().fold(0, |acc, &c| acc * m + (c - 1))
}

/// Interior neighbours of every point, Dirichlet neighbours dropped.
pub fn neighbours(d: usize, n: usize) -> Vec<Vec<usize>> {
    let m = n - 1;
    (0..m.pow(d as u32))
        .map(|k| {
            let i = index_of(k, d, n);
            let mut out = Vec::with_capacity(2 * d);
            for j in 0..d {
                for (ok, step) in [(i[j] > 1, -1i64), (i[j] < m, 1)] {
                    if ok {
                        let mut nb = i.clone();
                        nb[j] = (nb[j] as i64 + step) as usize;
                        out.push(position_of(&nb, n));
                    }
                }
            }
            out
        })
        .collect()
}

/// `(Aⁿ u)_k = Σ_neighbours u - 2d u_k` with zero Dirichlet data.
pub fn laplacian_with(table: &[Vec<usize>], u: &[f64], d: usize) -> Vec<f64> {
    table
        .iter()
        .enumerate()
        .map(|(k, nb)| nb.iter().map(|&j| u[j]).sum::<f64>() - 2.0 * d as f64 * u[k])
        .collect()
}

pub fn laplacian(u: &[f64], d: usize, n: usize) -> Vec<f64> {
    laplacian_with(&neighbours(d, n), u, d)
}

/// `B u = -n² Aⁿ u`.
pub fn b_times(u: &[f64], d: usize, n: usize) -> Vec<f64> {
    let n2 = (n * n) as f64;
    laplacian(u, d, n).into_iter().map(|v| -n2 * v).collect()
}

/// `b_α(i) = ∏ √(2/n) sin(α_j π i_j / n)`.
pub fn mode(alpha: &[usize], d: usize, n: usize) -> Vec<f64> {
    let size = (n - 1).pow(d as u32);
    let scale = (2.0 / n as f64).sqrt();
    (0..size)
        .map(|k| {
            index_of(k, d, n)
                .iter()
                .zip(alpha)
                .map(|(&i, &a)| scale * (a as f64 * PI * i as f64 / n as f64).sin())
                .product()
        })
        .collect()
}

/// `λ_α = Σ 4 n² sin²(α_j π / 2n)`, the eigenvalue of `B`.
pub fn eigenvalue(alpha: &[usize], n: usize) -> f64 {
    let n = n as f64;
    alpha
        .iter()
        .map(|&a| 4.0 * n * n * (a as f64 * PI / (2.0 * n)).sin().powi(2))
        .sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Dense `B` with entries from the five/seven point stencil.
pub fn dense_b(d: usize, n: usize) -> Vec<Vec<f64>> {
    let size = (n - 1).pow(d as u32);
    (0..size)
        .map(|col| {
            let mut e = vec![0.0; size];
            e[col] = 1.0;
            b_times(&e, d, n)
        })
        .collect()
}

pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Obstacle problem for `Z`: `BZ ≥ 0`, `Z ≥ -V`, `⟨Z+V, BZ⟩ = 0`, solved by
/// trying every set of contact points. `B` is symmetric so columns are rows.
pub fn obstacle_by_enumeration(v: &[f64], d: usize, n: usize) -> Vec<f64> {
    let b = dense_b(d, n);
    let size = v.len();
    assert!(size <= 16, "enumeration over {size} unknowns");
    let q: Vec<f64> = b.iter().map(|row| dot(row, v)).collect();
    for mask in 0..(1usize << size) {
        // w = Z + V; free points (bit set) have B w = B V there
        let free: Vec<usize> = (0..size).filter(|k| mask >> k & 1 == 1).collect();
        let mut w = vec![0.0; size];
        if !free.is_empty() {
            let sub: Vec<Vec<f64>> = free
                .iter()
                .map(|&r| free.iter().map(|&c| b[r][c]).collect())
                .collect();
            let rhs: Vec<f64> = free.iter().map(|&r| q[r]).collect();
            for (&k, x) in free.iter().zip(solve_dense(sub, rhs)) {
                w[k] = x;
            }
        }
        if w.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let ok = (0..size).all(|k| mask >> k & 1 == 1 || dot(&b[k], &w) - q[k] >= -1e-9);
        if ok {
            return w.iter().zip(v).map(|(w, v)| w - v).collect();
        }
    }
    panic!("no feasible active set");
}
