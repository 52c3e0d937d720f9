//! Green kernels of the Dirichlet Laplacian on the unit cube and of its
//! lattice approximation.
//!
//! All four kernels share the form `Σ_α w_α a_α(x) ψ_α(y)` with
//! `φ_α = ∏ √2 sin(α_j π ·)`:
//!
//! | kind                     | modes       | `a_α(x)`        | `ψ_α(y)`        | `w_α`        |
//! |--------------------------|-------------|-----------------|-----------------|--------------|
//! | `Continuous` (K)         | `{1..M}^d`  | `φ_α(x)`        | `φ_α(y)`        | `1/π²|α|²`   |
//! | `InterpolatedContinuous` | `{1..M}^d`  | `φ^n_α(x)`      | `φ_α(y)`        | `1/π²|α|²`   |
//! | `Discrete` (K_n)         | `I_n^d`     | `φ_α(k_n(x))`   | `φ_α(k_n(y))`   | `1/λ_α^n`    |
//! | `InterpolatedDiscrete`   | `I_n^d`     | `φ^n_α(x)`      | `φ_α(k_n(y))`   | `1/λ_α^n`    |
//!
//! where `φ^n_α` is the multilinear interpolant of `φ_α` between lattice nodes.
//! Evaluation on a tensor grid of `y` points is done by contracting one axis
//! at a time, so a full quadrature costs `O(M^d Q)` rather than `O(M^d Q^d)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{c_coefficient, cell_of, phi, phi_interpolated, GridSpec, MAX_DIM};
use crate::tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// `K`. With `modes: None` the default truncation is used, and in one
    /// dimension the exact closed form `(x∧y)(1-x∨y)`.
    Continuous { modes: Option<usize> },
    /// `K'`, `K` interpolated in its first argument.
    InterpolatedContinuous { modes: Option<usize> },
    /// `K_n`.
    Discrete,
    /// `K^n`, `K_n` interpolated in its first argument.
    InterpolatedDiscrete,
}

impl KernelKind {
    pub const K: KernelKind = KernelKind::Continuous { modes: None };
    pub const K_PRIME: KernelKind = KernelKind::InterpolatedContinuous { modes: None };

    /// Default number of modes per axis for the infinite-series kinds.
    pub fn default_modes(d: usize, n: usize) -> usize {
        if d <= 2 {
            64.max(4 * n)
        } else {
            32.max(2 * n)
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            KernelKind::Continuous { .. } => "K",
            KernelKind::InterpolatedContinuous { .. } => "Kprime",
            KernelKind::Discrete => "Kn",
            KernelKind::InterpolatedDiscrete => "Kcaret_n",
        }
    }

    fn is_discrete(&self) -> bool {
        matches!(
            self,
            KernelKind::Discrete | KernelKind::InterpolatedDiscrete
        )
    }
}

/// Exact one-dimensional Dirichlet Green function.
pub fn closed_form_1d(x: f64, y: f64) -> f64 {
    x.min(y) * (1.0 - x.max(y))
}

/// Hölder exponent `γ(d,ε)` of the kernels and the kernel-difference rate `σ(d,ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub d: usize,
    pub eps: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl HolderEstimate {
    pub fn new(d: usize, eps: f64) -> Result<Self> {
        let (gamma, sigma, limit) = match d {
            1 => (0.5, 1.0 - eps, 1.0),
            2 => (0.5 - eps, 0.5 - eps, 0.5),
            3 => (0.25 - eps, 0.2 - eps, 0.2),
            _ => return Err(Error::domain(format!("no Hölder estimate for d={d}"))),
        };
        if !(eps > 0.0 && eps < limit) {
            return Err(Error::domain(format!(
                "ε must lie in (0, {limit}) for d={d}, got {eps}"
            )));
        }
        Ok(HolderEstimate {
            d,
            eps,
            gamma,
            sigma,
        })
    }

    /// Smallest admissible moment order is anything strictly above `d / 2γ`.
    pub fn moment_threshold(&self) -> f64 {
        self.d as f64 / (2.0 * self.gamma)
    }
}

fn resolve_modes(kind: KernelKind, spec: &GridSpec) -> Result<Option<usize>> {
    match kind {
        KernelKind::Discrete | KernelKind::InterpolatedDiscrete => Ok(Some(spec.side())),
        KernelKind::Continuous { modes } | KernelKind::InterpolatedContinuous { modes } => {
            match modes {
                None if spec.dim() == 1 => Ok(None),
                None => Ok(Some(KernelKind::default_modes(spec.dim(), spec.n()))),
                Some(m) if m < spec.n() => Err(Error::domain(format!(
                    "truncation M={m} must be at least n={}",
                    spec.n()
                ))),
                Some(m) => Ok(Some(m)),
            }
        }
    }
}

/// `G(x, y)` for every `y` in the tensor grid `y_axes[0] x .. x y_axes[d-1]`,
/// flattened with axis 0 fastest.
pub fn kernel_on_tensor_grid(
    kind: KernelKind,
    spec: &GridSpec,
    x: &[f64],
    y_axes: &[Vec<f64>],
) -> Result<Vec<f64>> {
    spec.check_point(x)?;
    let d = spec.dim();
    if y_axes.len() != d {
        return Err(Error::domain(format!(
            "expected {d} y axes, got {}",
            y_axes.len()
        )));
    }
    for axis in y_axes {
        if let Some(t) = axis.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::domain(format!("coordinate {t} outside [0,1]")));
        }
    }
    let n = spec.n();

    let Some(modes) = resolve_modes(kind, spec)? else {
        return Ok(closed_form_on_axis(kind, n, x[0], &y_axes[0]));
    };

    // x factors, one row of `modes` values per axis
    let x_factors: Vec<Vec<f64>> = x
        .iter()
        .map(|&t| {
            (1..=modes)
                .map(|a| match kind {
                    KernelKind::Continuous { .. } => phi(a, t),
                    KernelKind::Discrete => phi(a, cell_of(t, n) as f64 / n as f64),
                    KernelKind::InterpolatedContinuous { .. }
                    | KernelKind::InterpolatedDiscrete => phi_interpolated(a, n, t),
                })
                .collect()
        })
        .collect();

    let axis_lambda: Vec<f64> = (1..=modes)
        .map(|a| {
            let sq = (a * a) as f64;
            if kind.is_discrete() {
                PI * PI * sq * c_coefficient(a, n)
            } else {
                PI * PI * sq
            }
        })
        .collect();

    let total = modes.pow(d as u32);
    let mut weights = vec![0.0; total];
    let mut pos = [0usize; MAX_DIM];
    for w in weights.iter_mut() {
        let mut lambda = 0.0;
        let mut prod = 1.0;
        for j in 0..d {
            lambda += axis_lambda[pos[j]];
            prod *= x_factors[j][pos[j]];
        }
        *w = prod / lambda;
        for p in pos.iter_mut().take(d) {
            *p += 1;
            if *p < modes {
                break;
            }
            *p = 0;
        }
    }

    let mut data = weights;
    let mut shape = vec![modes; d];
    for (axis, ys) in y_axes.iter().enumerate() {
        let q = ys.len();
        let mut mat = vec![0.0; modes * q];
        for a in 1..=modes {
            for (c, &t) in ys.iter().enumerate() {
                let t = if kind.is_discrete() {
                    cell_of(t, n) as f64 / n as f64
                } else {
                    t
                };
                mat[(a - 1) * q + c] = phi(a, t);
            }
        }
        let (next, next_shape) = tensor::contract_axis(&data, &shape, axis, &mat, q);
        data = next;
        shape = next_shape;
    }
    Ok(data)
}

fn closed_form_on_axis(kind: KernelKind, n: usize, x: f64, ys: &[f64]) -> Vec<f64> {
    match kind {
        KernelKind::InterpolatedContinuous { .. } => {
            let nf = n as f64;
            let c = cell_of(x, n);
            let frac = crate::lattice::snap(x * nf) - c as f64;
            let left = c as f64 / nf;
            let right = (c + 1) as f64 / nf;
            ys.iter()
                .map(|&y| {
                    let a = closed_form_1d(left, y);
                    let b = if right <= 1.0 {
                        closed_form_1d(right, y)
                    } else {
                        0.0
                    };
                    a + (b - a) * frac
                })
                .collect()
        }
        _ => ys.iter().map(|&y| closed_form_1d(x, y)).collect(),
    }
}

/// Evaluates one kernel at `(x, y)`.
pub fn eval_kernel(kind: KernelKind, spec: &GridSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.check_point(y)?;
    let axes: Vec<Vec<f64>> = y.iter().map(|&t| vec![t]).collect();
    Ok(kernel_on_tensor_grid(kind, spec, x, &axes)?[0])
}

fn midpoints(quadrature_n: usize) -> Vec<f64> {
    (0..quadrature_n)
        .map(|q| (q as f64 + 0.5) / quadrature_n as f64)
        .collect()
}

fn quadrature_slice(
    kind: KernelKind,
    spec: &GridSpec,
    x: &[f64],
    quadrature_n: usize,
) -> Result<Vec<f64>> {
    if quadrature_n < spec.n() {
        return Err(Error::domain(format!(
            "quadrature resolution {quadrature_n} below grid resolution {}",
            spec.n()
        )));
    }
    let axes = vec![midpoints(quadrature_n); spec.dim()];
    kernel_on_tensor_grid(kind, spec, x, &axes)
}

/// Midpoint-rule `∫_D G(x,y)^2 dy` on a `quadrature_n^d` grid. Exact for the
/// discrete kinds when `quadrature_n` is a multiple of `n`.
pub fn kernel_l2_norm_sq(
    kind: KernelKind,
    spec: &GridSpec,
    x: &[f64],
    quadrature_n: usize,
) -> Result<f64> {
    let g = quadrature_slice(kind, spec, x, quadrature_n)?;
    let vol = (quadrature_n as f64).powi(-(spec.dim() as i32));
    Ok(g.iter().map(|v| v * v).sum::<f64>() * vol)
}

/// Midpoint-rule `∫_D (G_A(x,y) - G_B(x,y))^2 dy`.
pub fn kernel_l2_difference(
    kind_a: KernelKind,
    kind_b: KernelKind,
    spec: &GridSpec,
    x: &[f64],
    quadrature_n: usize,
) -> Result<f64> {
    let a = quadrature_slice(kind_a, spec, x, quadrature_n)?;
    if kind_a == kind_b {
        return Ok(0.0);
    }
    let b = quadrature_slice(kind_b, spec, x, quadrature_n)?;
    let vol = (quadrature_n as f64).powi(-(spec.dim() as i32));
    Ok(a.iter()
        .zip(&b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        * vol)
}

/// Midpoint-rule `∫_D (G(x,y) - G(z,y))^2 dy`, the quantity bounded by
/// `B |x-z|^{4γ}`.
pub fn kernel_l2_shift(
    kind: KernelKind,
    spec: &GridSpec,
    x: &[f64],
    z: &[f64],
    quadrature_n: usize,
) -> Result<f64> {
    let a = quadrature_slice(kind, spec, x, quadrature_n)?;
    let b = quadrature_slice(kind, spec, z, quadrature_n)?;
    let vol = (quadrature_n as f64).powi(-(spec.dim() as i32));
    Ok(a.iter()
        .zip(&b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        * vol)
}
