//! Lattice geometry on the unit cube `(0,1)^d`.
//!
//! Interior lattice points `i/n` with `i` in `{1,..,n-1}^d` are stored in the
//! natural ordering: the first component varies fastest, so the 1-based rank
//! of `i` is `i_1 + (n-1)(i_2-1) + (n-1)^2(i_3-1)`. Boundary values are never
//! stored; they are zero (homogeneous Dirichlet).
//!
//! `B = -n^2 A^n` denotes the positive-definite discrete Dirichlet Laplacian.
//! Its eigenvectors are sampled sine products, which gives an exact spectral
//! inverse through separable sine transforms.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor;

pub const MAX_DIM: usize = 3;

/// Rounds a scaled coordinate `t = x * n` to the nearest integer when it sits
/// within rounding noise of it, so that `i as f64 / n as f64` maps back to `i`.
pub(crate) fn snap(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() <= 16.0 * f64::EPSILON * r.abs().max(1.0) {
        r
    } else {
        t
    }
}

/// Index `j` of the cell `[j/n, (j+1)/n)` containing `t`.
pub(crate) fn cell_of(t: f64, n: usize) -> usize {
    let s = snap(t * n as f64).floor();
    if s <= 0.0 {
        0
    } else {
        s as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    d: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    d: usize,
    n: usize,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = Error;
    fn try_from(r: GridSpecRepr) -> Result<Self> {
        GridSpec::new(r.d, r.n)
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(s: GridSpec) -> Self {
        GridSpecRepr { d: s.d, n: s.n }
    }
}

impl GridSpec {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::domain(format!(
                "dimension must be 1, 2 or 3, got {d}"
            )));
        }
        if n < 2 {
            return Err(Error::domain(format!(
                "resolution must be at least 2, got {n}"
            )));
        }
        Ok(GridSpec { d, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh width `1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Interior points per axis, `n - 1`.
    pub fn side(&self) -> usize {
        self.n - 1
    }

    pub fn interior_count(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    /// Number of cells `n^d`.
    pub fn cell_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// The same dimension at twice the resolution.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            d: self.d,
            n: 2 * self.n,
        }
    }

    /// Multi-index of the point stored at 0-based position `k`.
    pub fn multi_index(&self, k: usize) -> MultiIndex {
        let side = self.side();
        let mut comps = [0usize; MAX_DIM];
        let mut rest = k;
        for c in comps.iter_mut().take(self.d) {
            *c = rest % side + 1;
            rest /= side;
        }
        MultiIndex { comps, d: self.d }
    }

    /// 0-based storage position of `i`, i.e. `natural_rank(i) - 1`.
    pub fn storage_index(&self, i: &MultiIndex) -> Result<usize> {
        natural_rank(i, self).map(|k| k - 1)
    }

    /// Coordinates of the point stored at position `k`; unused axes are zero.
    pub fn point(&self, k: usize) -> [f64; MAX_DIM] {
        let i = self.multi_index(k);
        let mut x = [0.0; MAX_DIM];
        for (xj, &ij) in x.iter_mut().zip(i.components()) {
            *xj = self.coordinate(ij);
        }
        x
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::domain(format!(
                "point has {} coordinates, grid dimension is {}",
                x.len(),
                self.d
            )));
        }
        if let Some(t) = x.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::domain(format!("coordinate {t} outside [0,1]")));
        }
        Ok(())
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected: format!("{self}"),
                got: format!("{other}"),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "d={} n={}", self.d, self.n)
    }
}

/// Lattice (or frequency) multi-index with components in `{1,..,n-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    comps: [usize; MAX_DIM],
    d: usize,
}

impl MultiIndex {
    pub fn new(components: &[usize]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&components.len()) {
            return Err(Error::domain(format!(
                "multi-index must have 1 to 3 components, got {}",
                components.len()
            )));
        }
        let mut comps = [0usize; MAX_DIM];
        comps[..components.len()].copy_from_slice(components);
        Ok(MultiIndex {
            comps,
            d: components.len(),
        })
    }

    pub fn components(&self) -> &[usize] {
        &self.comps[..self.d]
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

/// 1-based natural rank `k = i_1 + (n-1)(i_2-1) + ... + (n-1)^{d-1}(i_d-1)`.
pub fn natural_rank(i: &MultiIndex, spec: &GridSpec) -> Result<usize> {
    if i.dim() != spec.dim() {
        return Err(Error::domain(format!(
            "multi-index has {} components, grid dimension is {}",
            i.dim(),
            spec.dim()
        )));
    }
    let side = spec.side();
    let mut k = 0usize;
    let mut weight = 1usize;
    for &c in i.components() {
        if c == 0 || c > side {
            return Err(Error::domain(format!(
                "component {c} outside 1..={side} for n={}",
                spec.n()
            )));
        }
        k += weight * (c - 1);
        weight *= side;
    }
    Ok(k + 1)
}

/// Inverse of [`natural_rank`].
pub fn unrank(k: usize, spec: &GridSpec) -> Result<MultiIndex> {
    if k == 0 || k > spec.interior_count() {
        return Err(Error::domain(format!(
            "rank {k} outside 1..={}",
            spec.interior_count()
        )));
    }
    Ok(spec.multi_index(k - 1))
}

/// Values on the interior lattice, natural ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.interior_count() {
            return Err(Error::domain(format!(
                "field has {} values, grid {spec} has {} interior points",
                values.len(),
                spec.interior_count()
            )));
        }
        Ok(GridField { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        GridField {
            spec,
            values: vec![0.0; spec.interior_count()],
        }
    }

    /// Samples `f` at every interior lattice point.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = spec.dim();
        let values = (0..spec.interior_count())
            .map(|k| f(&spec.point(k)[..d]))
            .collect();
        GridField { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: &MultiIndex) -> Result<f64> {
        Ok(self.values[self.spec.storage_index(i)?])
    }

    pub fn dot(&self, other: &GridField) -> Result<f64> {
        self.spec.ensure_same(&other.spec)?;
        Ok(linalg::dot(&self.values, &other.values))
    }

    pub fn sup_norm(&self) -> f64 {
        linalg::sup_norm(&self.values)
    }

    pub fn sup_distance(&self, other: &GridField) -> Result<f64> {
        self.spec.ensure_same(&other.spec)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Value at lattice node `c` with `c_j` in `0..=n`; zero on the boundary.
    pub(crate) fn node_value(&self, c: &[usize]) -> f64 {
        let n = self.spec.n();
        let side = self.spec.side();
        let mut k = 0usize;
        let mut weight = 1usize;
        for &cj in c {
            if cj == 0 || cj >= n {
                return 0.0;
            }
            k += weight * (cj - 1);
            weight *= side;
        }
        self.values[k]
    }
}

/// Writes `B u` into `out`, with `B = -n^2 A^n` (zero extension outside `D_n`).
pub(crate) fn apply_b_into(spec: &GridSpec, u: &[f64], out: &mut [f64]) {
    let d = spec.dim();
    let side = spec.side();
    let n2 = (spec.n() * spec.n()) as f64;
    let diag = 2.0 * d as f64;
    let strides = [1, side, side * side];
    let mut pos = [0usize; MAX_DIM];
    for k in 0..u.len() {
        let mut acc = diag * u[k];
        for j in 0..d {
            let s = strides[j];
            if pos[j] > 0 {
                acc -= u[k - s];
            }
            if pos[j] + 1 < side {
                acc -= u[k + s];
            }
        }
        out[k] = n2 * acc;
        for p in pos.iter_mut().take(d) {
            *p += 1;
            if *p < side {
                break;
            }
            *p = 0;
        }
    }
}

/// `B f = -Δ_n f`.
pub fn apply_b(f: &GridField) -> GridField {
    let mut out = vec![0.0; f.len()];
    apply_b_into(f.spec(), f.values(), &mut out);
    GridField {
        spec: *f.spec(),
        values: out,
    }
}

/// The five/seven-point Laplacian `Δ_n f = n^2 A^n f` with zero Dirichlet data.
pub fn apply_discrete_laplacian(f: &GridField) -> GridField {
    apply_b(f).map(|v| -v)
}

/// `c_j^n = sin^2(jπ/2n) / (jπ/2n)^2`.
pub fn c_coefficient(j: usize, n: usize) -> f64 {
    let t = j as f64 * PI / (2.0 * n as f64);
    let s = t.sin() / t;
    s * s
}

/// `φ_j(t) = √2 sin(jπt)`.
pub fn phi(j: usize, t: f64) -> f64 {
    SQRT_2 * (j as f64 * PI * t).sin()
}

/// `φ_j` linearly interpolated between the lattice nodes `k_n(t)` and `k_n(t) + 1/n`.
pub fn phi_interpolated(j: usize, n: usize, t: f64) -> f64 {
    let nf = n as f64;
    let c = cell_of(t, n);
    let left = c as f64 / nf;
    let right = (c + 1) as f64 / nf;
    let frac = snap(t * nf) - c as f64;
    let a = phi(j, left);
    a + (phi(j, right) - a) * frac
}

/// Exact eigen-decomposition of `B` on a grid.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    spec: GridSpec,
    eigenvalues: Vec<f64>,
    /// `sqrt(2/n) sin(π a i / n)`, row-major `side x side`; symmetric and orthogonal.
    sine: Vec<f64>,
}

impl EigenBasis {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.n();
        let side = spec.side();
        let nf = n as f64;
        let axis_lambda: Vec<f64> = (1..=side)
            .map(|j| PI * PI * (j * j) as f64 * c_coefficient(j, n))
            .collect();
        let eigenvalues = (0..spec.interior_count())
            .map(|k| {
                spec.multi_index(k)
                    .components()
                    .iter()
                    .map(|&a| axis_lambda[a - 1])
                    .sum()
            })
            .collect();
        let scale = (2.0 / nf).sqrt();
        let mut sine = vec![0.0; side * side];
        for a in 1..=side {
            for i in 1..=side {
                sine[(a - 1) * side + (i - 1)] = scale * (PI * (a * i) as f64 / nf).sin();
            }
        }
        EigenBasis {
            spec,
            eigenvalues,
            sine,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// `λ_α^n` for every `α` in natural ordering.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, alpha: &MultiIndex) -> Result<f64> {
        Ok(self.eigenvalues[self.spec.storage_index(alpha)?])
    }

    /// `b_α = n^{-d/2} (φ_α(x))_{x ∈ D_n}`.
    pub fn mode(&self, alpha: &MultiIndex) -> Result<GridField> {
        self.spec.storage_index(alpha)?;
        let scale = (self.spec.n() as f64).powf(-(self.spec.dim() as f64) / 2.0);
        Ok(GridField::from_fn(self.spec, |x| {
            scale
                * alpha
                    .components()
                    .iter()
                    .zip(x)
                    .map(|(&a, &t)| phi(a, t))
                    .product::<f64>()
        }))
    }

    /// Coordinates `⟨x, b_α⟩` for all `α`. The transform is its own inverse.
    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        let side = self.spec.side();
        let shape = vec![side; self.spec.dim()];
        tensor::contract_all(values, &shape, &self.sine, side)
    }

    /// Spectral solve of `B u = rhs`.
    pub fn solve(&self, rhs: &GridField) -> Result<GridField> {
        self.spec.ensure_same(rhs.spec())?;
        let mut coeffs = self.transform(rhs.values());
        for (c, lambda) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c /= lambda;
        }
        GridField::new(self.spec, self.transform(&coeffs))
    }
}

/// `eigen_basis(spec)`.
pub fn eigen_basis(spec: GridSpec) -> EigenBasis {
    EigenBasis::new(spec)
}

/// Solves `B u = rhs` spectrally.
pub fn solve_poisson(rhs: &GridField) -> GridField {
    EigenBasis::new(*rhs.spec())
        .solve(rhs)
        .expect("basis built from the same grid")
}

/// Solves `B u = rhs` by conjugate gradients on the sparse stencil.
pub fn solve_poisson_iterative(rhs: &GridField, rel_tol: f64) -> Result<GridField> {
    let spec = *rhs.spec();
    let op = |x: &[f64], y: &mut [f64]| apply_b_into(&spec, x, y);
    let u = linalg::conjugate_gradient(op, rhs.values(), None, rel_tol, 20 * rhs.len() + 100)?;
    GridField::new(spec, u)
}

/// Componentwise `k_n`: floors each coordinate to the lattice.
pub fn floor_map(x: &[f64], n: usize) -> Vec<f64> {
    x.iter().map(|&t| cell_of(t, n) as f64 / n as f64).collect()
}

/// Successive linear interpolation in `x_1, .., x_d` of the grid values, using
/// zero at boundary nodes.
pub fn multilinear_extend(f: &GridField, x: &[f64]) -> Result<f64> {
    let spec = f.spec();
    spec.check_point(x)?;
    let n = spec.n();
    let d = spec.dim();
    let mut cell = [0usize; MAX_DIM];
    let mut frac = [0.0f64; MAX_DIM];
    for j in 0..d {
        let t = snap(x[j] * n as f64);
        let c = (t.floor() as usize).min(n - 1);
        cell[j] = c;
        frac[j] = t - c as f64;
    }
    let mut acc = 0.0;
    let mut corner = [0usize; MAX_DIM];
    for mask in 0..(1usize << d) {
        let mut w = 1.0;
        for j in 0..d {
            let upper = mask >> j & 1 == 1;
            corner[j] = cell[j] + upper as usize;
            w *= if upper { frac[j] } else { 1.0 - frac[j] };
        }
        if w != 0.0 {
            acc += w * f.node_value(&corner[..d]);
        }
    }
    Ok(acc)
}

/// A lattice field viewed as a continuous function on `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedField {
    grid: GridField,
}

impl InterpolatedField {
    pub fn new(grid: GridField) -> Self {
        InterpolatedField { grid }
    }

    pub fn grid(&self) -> &GridField {
        &self.grid
    }

    pub fn into_grid(self) -> GridField {
        self.grid
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        multilinear_extend(&self.grid, x)
    }

    /// Samples the interpolant on the interior lattice of `net`.
    pub fn sample_on(&self, net: GridSpec) -> Result<GridField> {
        if net.dim() != self.grid.spec().dim() {
            return Err(Error::GridMismatch {
                expected: format!("{}", self.grid.spec()),
                got: format!("{net}"),
            });
        }
        let d = net.dim();
        let values = (0..net.interior_count())
            .map(|k| self.eval(&net.point(k)[..d]))
            .collect::<Result<Vec<_>>>()?;
        GridField::new(net, values)
    }

    /// `max |self - other|` over the nodes of the `m`-lattice. When both
    /// resolutions divide `m` this is the sup over the whole cube, since the
    /// difference is multilinear on every `m`-cell.
    pub fn sup_distance_on_net(&self, other: &InterpolatedField, m: usize) -> Result<f64> {
        let net = GridSpec::new(self.grid.spec().dim(), m)?;
        let a = self.sample_on(net)?;
        let b = other.sample_on(net)?;
        a.sup_distance(&b)
    }
}
