//! Discrete obstacle problem: find `(Z, η)` with
//!
//! ```text
//! B Z = η,   Z ≥ -V,   η ≥ 0,   ⟨Z + V, η⟩ = 0
//! ```
//!
//! In `w = Z + V` this is the standard LCP `w ≥ 0, Bw - BV ≥ 0,
//! ⟨w, Bw - BV⟩ = 0`. `B` is a symmetric positive-definite M-matrix, so the
//! solution is unique and projected SOR converges from any start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{apply_b, apply_b_into, GridField, GridSpec, InterpolatedField, MAX_DIM};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsorOptions {
    /// Relaxation factor, `0 < ω < 2`.
    pub omega: f64,
    /// Stop when the sup change of one sweep is at most `tol`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// After PSOR terminates, re-solve exactly on the detected inactive set
    /// and keep the result when it is feasible.
    pub polish: bool,
}

impl Default for PsorOptions {
    fn default() -> Self {
        PsorOptions {
            omega: 1.5,
            tol: 1e-10,
            max_sweeps: 2_000_000,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpProblem {
    v: GridField,
}

impl LcpProblem {
    pub fn new(v: GridField) -> Result<Self> {
        if let Some(bad) = v.values().iter().find(|x| !x.is_finite()) {
            return Err(Error::domain(format!("barrier value {bad} is not finite")));
        }
        Ok(LcpProblem { v })
    }

    pub fn barrier(&self) -> &GridField {
        &self.v
    }

    pub fn spec(&self) -> &GridSpec {
        self.v.spec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcpResiduals {
    /// `max(0, max_k -(Z_k + V_k))`.
    pub max_violation: f64,
    /// `max(0, max_k -η_k)`.
    pub max_negative_eta: f64,
    /// `|⟨Z + V, η⟩|`.
    pub complementarity_gap: f64,
    /// `‖η‖₁ (1 + ‖Z + V‖_∞)`, the natural scale of the gap.
    pub scale: f64,
    pub sweeps: usize,
    pub final_change: f64,
    pub polished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: GridField,
    pub eta: GridField,
    pub residuals: LcpResiduals,
}

impl LcpSolution {
    fn assemble(
        problem: &LcpProblem,
        z: GridField,
        sweeps: usize,
        final_change: f64,
        polished: bool,
    ) -> Self {
        let eta = apply_b(&z);
        let v = problem.v.values();
        let mut max_violation = 0.0f64;
        let mut max_negative_eta = 0.0f64;
        let mut gap = 0.0;
        let mut eta_l1 = 0.0;
        let mut w_sup = 0.0f64;
        for ((&zk, &vk), &ek) in z.values().iter().zip(v).zip(eta.values()) {
            let w = zk + vk;
            max_violation = max_violation.max(-w);
            max_negative_eta = max_negative_eta.max(-ek);
            gap += w * ek;
            eta_l1 += ek.abs();
            w_sup = w_sup.max(w.abs());
        }
        LcpSolution {
            z,
            eta,
            residuals: LcpResiduals {
                max_violation,
                max_negative_eta,
                complementarity_gap: gap.abs(),
                scale: eta_l1 * (1.0 + w_sup),
                sweeps,
                final_change,
                polished,
            },
        }
    }
}

/// Projected SOR in natural ordering, starting from `w = max(V, 0)` (i.e. `Z = max(-V, 0)`).
pub fn solve_lcp(problem: &LcpProblem, opts: &PsorOptions) -> Result<LcpSolution> {
    solve_lcp_from(problem, opts, None)
}

/// As [`solve_lcp`], with an optional starting iterate for `w = Z + V`.
pub fn solve_lcp_from(
    problem: &LcpProblem,
    opts: &PsorOptions,
    start: Option<&[f64]>,
) -> Result<LcpSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::domain(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if !(opts.omega > 0.0 && opts.omega < 2.0) {
        return Err(Error::domain(format!(
            "relaxation must lie in (0,2), got {}",
            opts.omega
        )));
    }
    let spec = *problem.spec();
    let v = problem.v.values();
    let len = v.len();
    let mut q = vec![0.0; len];
    apply_b_into(&spec, v, &mut q);

    let mut w: Vec<f64> = match start {
        Some(s) if s.len() == len => s.iter().map(|x| x.max(0.0)).collect(),
        Some(s) => {
            return Err(Error::domain(format!(
                "start has {} values, expected {len}",
                s.len()
            )))
        }
        None => v.iter().map(|x| x.max(0.0)).collect(),
    };

    let (sweeps, final_change) = psor(&spec, &q, &mut w, opts)?;

    let mut polished = false;
    if opts.polish {
        if let Some(wp) = polish(&spec, &q, &w) {
            w = wp;
            polished = true;
        }
    }

    let z: Vec<f64> = w.iter().zip(v).map(|(wk, vk)| wk - vk).collect();
    Ok(LcpSolution::assemble(
        problem,
        GridField::new(spec, z)?,
        sweeps,
        final_change,
        polished,
    ))
}

const HISTORY_TAIL: usize = 64;

fn psor(spec: &GridSpec, q: &[f64], w: &mut [f64], opts: &PsorOptions) -> Result<(usize, f64)> {
    let d = spec.dim();
    let side = spec.side();
    let n2 = (spec.n() * spec.n()) as f64;
    let diag = 2.0 * d as f64 * n2;
    let relax = opts.omega / diag;
    let strides = [1, side, side * side];
    let mut history = Vec::with_capacity(HISTORY_TAIL);

    for sweep in 1..=opts.max_sweeps {
        let mut change = 0.0f64;
        let mut pos = [0usize; MAX_DIM];
        for k in 0..w.len() {
            // same operation order as `apply_b_into`, so exact solutions stay put
            let mut acc = 2.0 * d as f64 * w[k];
            for j in 0..d {
                let s = strides[j];
                if pos[j] > 0 {
                    acc -= w[k - s];
                }
                if pos[j] + 1 < side {
                    acc -= w[k + s];
                }
            }
            let residual = q[k] - n2 * acc;
            let next = (w[k] + relax * residual).max(0.0);
            change = change.max((next - w[k]).abs());
            w[k] = next;
            for p in pos.iter_mut().take(d) {
                *p += 1;
                if *p < side {
                    break;
                }
                *p = 0;
            }
        }
        if history.len() == HISTORY_TAIL {
            history.remove(0);
        }
        history.push(change);
        if change <= opts.tol {
            return Ok((sweep, change));
        }
    }
    Err(Error::Convergence {
        solver: "projected SOR",
        iterations: opts.max_sweeps,
        last_change: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// `max_k |min(w_k, (Bw - q)_k)|`, zero exactly at LCP solutions.
fn natural_residual(spec: &GridSpec, q: &[f64], w: &[f64]) -> f64 {
    let mut bw = vec![0.0; w.len()];
    apply_b_into(spec, w, &mut bw);
    (0..w.len()).fold(0.0f64, |m, i| m.max(w[i].min(bw[i] - q[i]).abs()))
}

/// Exact solve on the inactive set `{w_k > 0}` of a PSOR iterate. Returns
/// `None` when the re-solved point is not a solution of the LCP or is no
/// closer to one than `w`.
fn polish(spec: &GridSpec, q: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let free: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
    if !free.iter().any(|&f| f) {
        return None;
    }
    let len = w.len();
    let mut scratch = vec![0.0; len];
    let mut masked = vec![0.0; len];
    let op = |x: &[f64], y: &mut [f64]| {
        for i in 0..len {
            masked[i] = if free[i] { x[i] } else { 0.0 };
        }
        apply_b_into(spec, &masked, &mut scratch);
        for i in 0..len {
            y[i] = if free[i] { scratch[i] } else { x[i] };
        }
    };
    let rhs: Vec<f64> = q
        .iter()
        .zip(&free)
        .map(|(&qi, &f)| if f { qi } else { 0.0 })
        .collect();
    let start: Vec<f64> = w.to_vec();
    let wp = linalg::conjugate_gradient(op, &rhs, Some(&start), 1e-15, 20 * len + 100).ok()?;

    if wp.iter().any(|&x| x < 0.0) {
        return None;
    }
    let mut bw = vec![0.0; len];
    apply_b_into(spec, &wp, &mut bw);
    let slack = 1e-12 * (1.0 + linalg::sup_norm(q));
    let feasible = (0..len).all(|i| free[i] || bw[i] - q[i] >= -slack);
    (feasible && natural_residual(spec, q, &wp) < natural_residual(spec, q, w)).then_some(wp)
}

/// Discrete penalized problem `B z = (1/ε)(z + V)^-` solved by semismooth
/// Newton. Converges to the LCP solution as `ε → 0`.
pub fn solve_penalized(problem: &LcpProblem, epsilon: f64, tol: f64) -> Result<GridField> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!(
            "penalty ε must be positive, got {epsilon}"
        )));
    }
    let spec = *problem.spec();
    let v = problem.v.values();
    let len = v.len();
    let inv_eps = 1.0 / epsilon;
    let mut z = vec![0.0; len];
    let mut history = Vec::new();
    const MAX_NEWTON: usize = 200;

    for _ in 0..MAX_NEWTON {
        let active: Vec<bool> = z.iter().zip(v).map(|(zk, vk)| zk + vk < 0.0).collect();
        let rhs: Vec<f64> = v
            .iter()
            .zip(&active)
            .map(|(&vk, &a)| if a { -inv_eps * vk } else { 0.0 })
            .collect();
        let op = |x: &[f64], y: &mut [f64]| {
            apply_b_into(&spec, x, y);
            for i in 0..len {
                if active[i] {
                    y[i] += inv_eps * x[i];
                }
            }
        };
        let next = linalg::conjugate_gradient(op, &rhs, Some(&z), 1e-15, 20 * len + 100)?;
        let change = next
            .iter()
            .zip(&z)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(change);
        let same_set = next
            .iter()
            .zip(v)
            .zip(&active)
            .all(|((zk, vk), &a)| (zk + vk < 0.0) == a);
        z = next;
        if same_set || change <= tol {
            return GridField::new(spec, z);
        }
    }
    Err(Error::Convergence {
        solver: "semismooth Newton (penalized obstacle)",
        iterations: MAX_NEWTON,
        last_change: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Barrier handle for the continuous problem.
pub type BarrierFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[derive(Debug, Clone)]
pub struct DeterministicSolution {
    pub z: InterpolatedField,
    pub eta: InterpolatedField,
    pub lcp: LcpSolution,
}

fn check_boundary(v: BarrierFn<'_>, d: usize) -> Result<()> {
    const SAMPLES: usize = 9;
    let mut x = [0.0; MAX_DIM];
    let others = SAMPLES.pow(d as u32 - 1);
    for axis in 0..d {
        for face in [0.0, 1.0] {
            for s in 0..others {
                let mut rest = s;
                for (j, xj) in x.iter_mut().enumerate().take(d) {
                    if j == axis {
                        *xj = face;
                    } else {
                        *xj = (rest % SAMPLES) as f64 / (SAMPLES - 1) as f64;
                        rest /= SAMPLES;
                    }
                }
                let val = v(&x[..d]);
                if !(val.abs() <= 1e-6) {
                    return Err(Error::domain(format!(
                        "barrier must vanish on the boundary; v({:?}) = {val}",
                        &x[..d]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Samples `v` on the lattice, solves the LCP and returns the multilinear
/// extensions `z^n`, `η^n`.
pub fn deterministic_scheme(
    v: BarrierFn<'_>,
    spec: GridSpec,
    opts: &PsorOptions,
) -> Result<DeterministicSolution> {
    check_boundary(v, spec.dim())?;
    let problem = LcpProblem::new(GridField::from_fn(spec, v))?;
    let lcp = solve_lcp(&problem, opts)?;
    Ok(DeterministicSolution {
        z: InterpolatedField::new(lcp.z.clone()),
        eta: InterpolatedField::new(lcp.eta.clone()),
        lcp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaBoundReport {
    pub d: usize,
    pub n: usize,
    pub max_eta: f64,
    /// Finite-difference estimate of `max_j sup |∂²v/∂x_j²|`.
    pub second_derivative_norm: f64,
    /// `2 d ‖v‖₂`.
    pub bound: f64,
    pub tol_factor: f64,
    pub satisfied: bool,
}

/// `max_j sup |∂_jj v|` from centred second differences on the `m`-lattice.
pub fn second_derivative_norm(v: BarrierFn<'_>, d: usize, m: usize) -> Result<f64> {
    let fine = GridSpec::new(d, m)?;
    let h = fine.h();
    let mut best = 0.0f64;
    let mut y = [0.0; MAX_DIM];
    for k in 0..fine.interior_count() {
        let x = fine.point(k);
        let centre = v(&x[..d]);
        for j in 0..d {
            y[..d].copy_from_slice(&x[..d]);
            y[j] = x[j] + h;
            let up = v(&y[..d]);
            y[j] = x[j] - h;
            let down = v(&y[..d]);
            best = best.max(((up - 2.0 * centre + down) / (h * h)).abs());
        }
    }
    Ok(best)
}

/// Checks `max_k η_k ≤ 2 d ‖v‖₂ (1 + tol_factor)` for a smooth barrier.
pub fn eta_smooth_bound_check(
    v: BarrierFn<'_>,
    spec: GridSpec,
    opts: &PsorOptions,
    tol_factor: f64,
) -> Result<EtaBoundReport> {
    let d = spec.dim();
    let fine = match d {
        1 => 1024.max(4 * spec.n()),
        2 => 256.max(2 * spec.n()),
        _ => 64.max(spec.n()),
    };
    let norm = second_derivative_norm(v, d, fine)?;
    let sol = deterministic_scheme(v, spec, opts)?;
    let max_eta = sol.lcp.eta.values().iter().fold(0.0f64, |m, &e| m.max(e));
    let bound = 2.0 * d as f64 * norm;
    Ok(EtaBoundReport {
        d,
        n: spec.n(),
        max_eta,
        second_derivative_norm: norm,
        bound,
        tol_factor,
        satisfied: max_eta <= bound * (1.0 + tol_factor),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(d: usize, n: usize) -> GridSpec {
        GridSpec::new(d, n).unwrap()
    }

    fn opts() -> PsorOptions {
        PsorOptions::default()
    }

    #[test]
    fn nonnegative_barrier_gives_trivial_solution() {
        let s = spec(2, 6);
        let v = GridField::from_fn(s, |x| x[0] * x[1]);
        let sol = solve_lcp(&LcpProblem::new(v).unwrap(), &opts()).unwrap();
        assert!(sol.z.sup_norm() < 1e-14);
        assert!(sol.eta.sup_norm() < 1e-10);
    }

    #[test]
    fn single_point_problem() {
        let v = GridField::new(spec(1, 2), vec![-1.0]).unwrap();
        let sol = solve_lcp(&LcpProblem::new(v).unwrap(), &opts()).unwrap();
        assert!((sol.z.values()[0] - 1.0).abs() < 1e-12);
        assert!((sol.eta.values()[0] - 8.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_options() {
        let p = LcpProblem::new(GridField::zeros(spec(1, 4))).unwrap();
        let bad_tol = PsorOptions { tol: 0.0, ..opts() };
        assert!(solve_lcp(&p, &bad_tol).is_err());
        let bad_omega = PsorOptions {
            omega: 2.0,
            ..opts()
        };
        assert!(solve_lcp(&p, &bad_omega).is_err());
        assert!(LcpProblem::new(GridField::new(spec(1, 2), vec![f64::NAN]).unwrap()).is_err());
    }

    #[test]
    fn sweep_budget_exhaustion_reports_history() {
        let s = spec(1, 64);
        let v = GridField::from_fn(s, |x| 0.3 - (PI * x[0]).sin());
        let p = LcpProblem::new(v).unwrap();
        let tight = PsorOptions {
            max_sweeps: 3,
            ..opts()
        };
        match solve_lcp(&p, &tight) {
            Err(Error::Convergence {
                iterations,
                history,
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let s = spec(2, 9);
        let v = GridField::from_fn(s, |x| {
            0.2 - (PI * x[0]).sin() * (2.0 * PI * x[1]).sin().abs()
        });
        let p = LcpProblem::new(v).unwrap();
        let cold = solve_lcp(&p, &opts()).unwrap();
        let start = vec![3.0; s.interior_count()];
        let warm = solve_lcp_from(&p, &opts(), Some(&start)).unwrap();
        assert!(cold.z.sup_distance(&warm.z).unwrap() < 1e-9);
    }

    #[test]
    fn penalized_examples() {
        let p = LcpProblem::new(GridField::new(spec(1, 2), vec![-1.0]).unwrap()).unwrap();
        for eps in [1e-1, 1e-3, 1e-6] {
            let z = solve_penalized(&p, eps, 1e-14).unwrap();
            assert!((z.values()[0] - 1.0 / (1.0 + 8.0 * eps)).abs() < 1e-12);
        }
        let pos = LcpProblem::new(GridField::from_fn(spec(2, 5), |x| x[0])).unwrap();
        for eps in [1e-1, 1e-4] {
            let z = solve_penalized(&pos, eps, 1e-14).unwrap();
            assert!(z.values().iter().all(|&v| v == 0.0));
        }
        assert!(solve_penalized(&p, 0.0, 1e-12).is_err());
    }

    #[test]
    fn deterministic_scheme_feasibility() {
        let v = |x: &[f64]| -x[0] * (1.0 - x[0]);
        let sol = deterministic_scheme(&v, spec(1, 16), &opts()).unwrap();
        for k in 0..15 {
            let x = (k + 1) as f64 / 16.0;
            assert!(sol.lcp.z.values()[k] >= x * (1.0 - x) - 1e-10);
        }
        let pos = |x: &[f64]| x[0] * (1.0 - x[0]);
        let sol = deterministic_scheme(&pos, spec(1, 16), &opts()).unwrap();
        assert_eq!(sol.z.eval(&[0.37]).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_scheme_rejects_nonzero_boundary() {
        let v = |x: &[f64]| 0.5 - (PI * x[0]).sin();
        assert!(deterministic_scheme(&v, spec(1, 8), &opts()).is_err());
    }

    #[test]
    fn eta_bound_sine_1d() {
        let v = |x: &[f64]| -(PI * x[0]).sin();
        let r = eta_smooth_bound_check(&v, spec(1, 32), &opts(), 0.05).unwrap();
        assert!((r.second_derivative_norm - PI * PI).abs() < 1e-3);
        assert!(r.satisfied, "{r:?}");
    }
}
