//! Discrete reflected SPDE
//!
//! ```text
//! B u = f(u) + n^d σ(u) ΔW + η,   u ≥ 0,   η ≥ 0,   ⟨u, η⟩ = 0
//! ```
//!
//! solved by the Picard scheme: starting from `u⁰ = 0`, each stage solves the
//! linear problem `B V^m = f(u^{m-1}) + n^d σ(u^{m-1}) ΔW` and then the
//! obstacle problem for `Z^m ≥ -V^m`, and sets `u^m = V^m + Z^m`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{kernel_l2_norm_sq, kernel_on_tensor_grid, HolderEstimate, KernelKind};
use crate::lattice::{apply_b_into, EigenBasis, GridField, GridSpec, InterpolatedField};
use crate::noise::{discrete_noise_term, NoiseSample};
use crate::obstacle::{solve_lcp_from, LcpProblem, PsorOptions};
use crate::registry::{parse_coefficient, Coefficient, CoefficientFunction};

/// Drift `f` and diffusion `σ`, both functions of `(x, u)`.
#[derive(Clone)]
pub struct CoefficientPair {
    pub f_spec: String,
    pub sigma_spec: String,
    f: CoefficientFunction,
    sigma: CoefficientFunction,
    /// Joint Lipschitz constant in `u`.
    pub l1: f64,
    /// `|f(0,0)| + |σ(0,0)|`.
    pub l2: f64,
    /// `f` non-decreasing in `u`.
    pub monotone_f: bool,
}

impl fmt::Debug for CoefficientPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientPair")
            .field("f", &self.f_spec)
            .field("sigma", &self.sigma_spec)
            .field("l1", &self.l1)
            .field("l2", &self.l2)
            .field("monotone_f", &self.monotone_f)
            .finish()
    }
}

impl CoefficientPair {
    pub fn from_coefficients(f: Coefficient, sigma: Coefficient) -> Self {
        CoefficientPair {
            l1: f.lipschitz + sigma.lipschitz,
            l2: f.at_origin + sigma.at_origin,
            monotone_f: f.nondecreasing,
            f_spec: f.spec,
            sigma_spec: sigma.spec,
            f: f.func,
            sigma: sigma.func,
        }
    }

    /// Parses registry names such as `linear:-0.1,-1` and `const:0.1`.
    pub fn from_specs(f: &str, sigma: &str) -> Result<Self> {
        Ok(Self::from_coefficients(
            parse_coefficient(f)?,
            parse_coefficient(sigma)?,
        ))
    }

    /// Arbitrary closures; the metadata is taken as given.
    pub fn custom(
        f: CoefficientFunction,
        sigma: CoefficientFunction,
        l1: f64,
        l2: f64,
        monotone_f: bool,
    ) -> Self {
        CoefficientPair {
            f_spec: "custom".into(),
            sigma_spec: "custom".into(),
            f,
            sigma,
            l1,
            l2,
            monotone_f,
        }
    }

    pub fn f(&self, x: &[f64], u: f64) -> f64 {
        (self.f)(x, u)
    }

    pub fn sigma(&self, x: &[f64], u: f64) -> f64 {
        (self.sigma)(x, u)
    }

    /// Largest observed `(|Δf| + |Δσ|) / |Δu|` on random probes in
    /// `[0,1]^d × [-range, range]`.
    pub fn probe_lipschitz(&self, d: usize, samples: usize, range: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut x = vec![0.0; d];
        for _ in 0..samples {
            x.iter_mut().for_each(|t| *t = rng.random());
            let u = rng.random_range(-range..range);
            let v = rng.random_range(-range..range);
            if u == v {
                continue;
            }
            let diff = (self.f(&x, u) - self.f(&x, v)).abs()
                + (self.sigma(&x, u) - self.sigma(&x, v)).abs();
            worst = worst.max(diff / (u - v).abs());
        }
        worst
    }

    /// Checks on random probes that `f` is non-decreasing in `u`.
    pub fn probe_monotone(&self, d: usize, samples: usize, range: f64, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        (0..samples).all(|_| {
            x.iter_mut().for_each(|t| *t = rng.random());
            let u = rng.random_range(-range..range);
            let v = rng.random_range(-range..range);
            let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
            self.f(&x, lo) <= self.f(&x, hi)
        })
    }

    fn forcing(&self, spec: &GridSpec, u: &GridField) -> (GridField, GridField) {
        let d = spec.dim();
        let mut f = Vec::with_capacity(u.len());
        let mut s = Vec::with_capacity(u.len());
        for (k, &uk) in u.values().iter().enumerate() {
            let x = spec.point(k);
            f.push(self.f(&x[..d], uk));
            s.push(self.sigma(&x[..d], uk));
        }
        (
            GridField::new(*spec, f).expect("sized from u"),
            GridField::new(*spec, s).expect("sized from u"),
        )
    }

    /// `f(u) + n^d σ(u) ΔW` at every interior point.
    pub fn right_hand_side(&self, noise: &NoiseSample, u: &GridField) -> Result<GridField> {
        let spec = *noise.spec();
        spec.ensure_same(u.spec())?;
        let (f, s) = self.forcing(&spec, u);
        let w = discrete_noise_term(noise, &s)?;
        let values = f
            .values()
            .iter()
            .zip(w.values())
            .map(|(a, b)| a + b)
            .collect();
        GridField::new(spec, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub lcp: PsorOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-8,
            max_iters: 200,
            lcp: PsorOptions {
                tol: 1e-12,
                ..PsorOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdeSolution {
    pub u: GridField,
    pub eta: GridField,
    pub noise: NoiseSample,
    pub picard_iterations: usize,
    pub final_change: f64,
    /// Sup change of every Picard stage, oldest first.
    pub change_history: Vec<f64>,
    /// `‖B u - f(u) - n^d σ(u) ΔW - η‖_∞`.
    pub residual: f64,
    /// `|⟨u, η⟩|`.
    pub complementarity: f64,
}

impl SpdeSolution {
    pub fn spec(&self) -> &GridSpec {
        self.u.spec()
    }
}

/// Sup-norm residual of the discrete equation for given `(u, η)`.
pub fn equation_residual(
    coeffs: &CoefficientPair,
    noise: &NoiseSample,
    u: &GridField,
    eta: &GridField,
) -> Result<f64> {
    let spec = *noise.spec();
    spec.ensure_same(eta.spec())?;
    let rhs = coeffs.right_hand_side(noise, u)?;
    let mut bu = vec![0.0; u.len()];
    apply_b_into(&spec, u.values(), &mut bu);
    Ok(bu
        .iter()
        .zip(rhs.values())
        .zip(eta.values())
        .fold(0.0f64, |m, ((b, r), e)| m.max((b - r - e).abs())))
}

pub fn picard_solve(
    coeffs: &CoefficientPair,
    noise: &NoiseSample,
    opts: &PicardOptions,
) -> Result<SpdeSolution> {
    let spec = *noise.spec();
    let basis = EigenBasis::new(spec);
    let mut u = GridField::zeros(spec);
    let mut history = Vec::new();

    for m in 1..=opts.max_iters {
        let rhs = coeffs.right_hand_side(noise, &u)?;
        let v = basis.solve(&rhs)?;
        let problem = LcpProblem::new(v.clone())?;
        let lcp = solve_lcp_from(&problem, &opts.lcp, Some(u.values()))?;
        let next: Vec<f64> = lcp
            .z
            .values()
            .iter()
            .zip(v.values())
            .map(|(z, v)| z + v)
            .collect();
        let next = GridField::new(spec, next)?;
        let change = next.sup_distance(&u)?;
        history.push(change);
        u = next;
        if change <= opts.tol {
            let eta = lcp.eta;
            let residual = equation_residual(coeffs, noise, &u, &eta)?;
            let complementarity = u.dot(&eta)?.abs();
            return Ok(SpdeSolution {
                u,
                eta,
                noise: noise.clone(),
                picard_iterations: m,
                final_change: change,
                change_history: history,
                residual,
                complementarity,
            });
        }
    }
    Err(Error::Convergence {
        solver: "Picard iteration",
        iterations: opts.max_iters,
        last_change: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// The continuous field `ũⁿ`, the multilinear extension of `u`.
pub fn assemble_continuous(sol: &SpdeSolution) -> InterpolatedField {
    InterpolatedField::new(sol.u.clone())
}

/// `ũⁿ(x)` through the kernel representation
/// `Σ_cells Kⁿ(x, y) [(f(y, u(y)) + η(y)) h^d + σ(y, u(y)) ΔW(cell)]`
/// over cells with lower corner `y ∈ D_n`.
pub fn kernel_representation(
    sol: &SpdeSolution,
    coeffs: &CoefficientPair,
    x: &[f64],
) -> Result<f64> {
    let spec = *sol.spec();
    let d = spec.dim();
    let nodes: Vec<f64> = (1..spec.n()).map(|i| spec.coordinate(i)).collect();
    let kernel =
        kernel_on_tensor_grid(KernelKind::InterpolatedDiscrete, &spec, x, &vec![nodes; d])?;
    let vol = spec.cell_volume();
    let mut acc = 0.0;
    for (k, &kv) in kernel.iter().enumerate() {
        let y = spec.point(k);
        let uk = sol.u.values()[k];
        let cell = sol.noise.cell_index(spec.multi_index(k).components());
        let mass = (coeffs.f(&y[..d], uk) + sol.eta.values()[k]) * vol
            + coeffs.sigma(&y[..d], uk) * sol.noise.increments()[cell];
        acc += kv * mass;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessParams {
    pub p: f64,
    pub eps: f64,
    pub c_p: f64,
    pub a: f64,
    pub b_holder: f64,
}

impl SmallnessParams {
    pub fn new(p: f64, eps: f64) -> Self {
        SmallnessParams {
            p,
            eps,
            c_p: 1.0,
            a: 1.0,
            b_holder: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub d: usize,
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    pub gamma: f64,
    pub c_p: f64,
    pub a: f64,
    pub b_holder: f64,
    pub l1: f64,
    /// Measured `sup_x ∫ |K_n(x,y)|² dy`.
    pub c_d: f64,
    /// Measured `sup_x ∫ |Kⁿ(x,y)|² dy`.
    pub c_tilde_d: f64,
    /// `2^{2p-1} L1^p C_D^{p/2} + 2^{3p-2} c_p L1^p (a B^{p/2} + C_D^{p/2})`.
    pub lhs_existence: f64,
    /// `2^{3p-2} L1^p C̃_D^{p/2} + 2^{4p-3} c_p L1^p (a B^{p/2} + C̃_D^{p/2})`.
    pub lhs_convergence: f64,
    /// Largest `L1` for which `lhs_convergence < 1`.
    pub l1_threshold: f64,
    pub satisfied: bool,
}

fn probe_points(spec: &GridSpec) -> Vec<Vec<f64>> {
    const FULL_LIMIT: usize = 4096;
    const SAMPLED: usize = 64;
    let d = spec.dim();
    if spec.interior_count() <= FULL_LIMIT {
        return (0..spec.interior_count())
            .map(|k| spec.point(k)[..d].to_vec())
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x534d_414c);
    let mut pts: Vec<Vec<f64>> = (0..SAMPLED)
        .map(|_| {
            let k = rng.random_range(0..spec.interior_count());
            spec.point(k)[..d].to_vec()
        })
        .collect();
    let mid = spec.n() / 2;
    pts.push(vec![spec.coordinate(mid); d]);
    pts
}

/// Evaluates the contraction-type conditions with measured kernel constants.
///
/// `Kⁿ(x,·)` is a convex combination of `K_n(node,·)` over the corners of the
/// cell containing `x`, so both suprema are attained at lattice nodes; they are
/// measured there (all nodes, or a fixed sample on large grids).
pub fn check_smallness(
    coeffs: &CoefficientPair,
    spec: &GridSpec,
    params: &SmallnessParams,
) -> Result<SmallnessReport> {
    let holder = HolderEstimate::new(spec.dim(), params.eps)?;
    if !(params.p > holder.moment_threshold()) {
        return Err(Error::domain(format!(
            "moment order p={} must exceed d/(2γ) = {}",
            params.p,
            holder.moment_threshold()
        )));
    }
    let n = spec.n();
    let mut c_d = 0.0f64;
    let mut c_tilde_d = 0.0f64;
    for x in probe_points(spec) {
        c_d = c_d.max(kernel_l2_norm_sq(KernelKind::Discrete, spec, &x, n)?);
        c_tilde_d = c_tilde_d.max(kernel_l2_norm_sq(
            KernelKind::InterpolatedDiscrete,
            spec,
            &x,
            n,
        )?);
    }
    let p = params.p;
    let l1p = coeffs.l1.powf(p);
    let bp = params.b_holder.powf(p / 2.0);

    let k_exist = 2f64.powf(2.0 * p - 1.0) * c_d.powf(p / 2.0)
        + 2f64.powf(3.0 * p - 2.0) * params.c_p * (params.a * bp + c_d.powf(p / 2.0));
    let k_conv = 2f64.powf(3.0 * p - 2.0) * c_tilde_d.powf(p / 2.0)
        + 2f64.powf(4.0 * p - 3.0) * params.c_p * (params.a * bp + c_tilde_d.powf(p / 2.0));
    let lhs_convergence = l1p * k_conv;
    Ok(SmallnessReport {
        d: spec.dim(),
        n,
        p,
        eps: params.eps,
        gamma: holder.gamma,
        c_p: params.c_p,
        a: params.a,
        b_holder: params.b_holder,
        l1: coeffs.l1,
        c_d,
        c_tilde_d,
        lhs_existence: l1p * k_exist,
        lhs_convergence,
        l1_threshold: k_conv.powf(-1.0 / p),
        satisfied: lhs_convergence < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::solve_poisson;
    use crate::noise::sample_noise;
    use crate::obstacle::solve_lcp;

    fn spec(d: usize, n: usize) -> GridSpec {
        GridSpec::new(d, n).unwrap()
    }

    #[test]
    fn zero_coefficients_give_zero_solution() {
        let c = CoefficientPair::from_specs("zero", "zero").unwrap();
        let noise = sample_noise(spec(2, 6), 1);
        let sol = picard_solve(&c, &noise, &PicardOptions::default()).unwrap();
        assert!(sol.u.values().iter().all(|&v| v == 0.0));
        assert!(sol.eta.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_constant_forcing_needs_no_reflection() {
        let s = spec(1, 16);
        let c = CoefficientPair::from_specs("const:2", "zero").unwrap();
        let sol = picard_solve(&c, &sample_noise(s, 0), &PicardOptions::default()).unwrap();
        assert!(sol.u.values().iter().all(|&v| v > 0.0));
        assert!(sol.eta.sup_norm() < 1e-10);
        let direct = solve_poisson(&GridField::from_fn(s, |_| 2.0));
        assert!(sol.u.sup_distance(&direct).unwrap() < 1e-12);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn negative_constant_forcing_reduces_to_obstacle_problem() {
        let s = spec(2, 8);
        let c = CoefficientPair::from_specs("const:-3", "zero").unwrap();
        let sol = picard_solve(&c, &sample_noise(s, 0), &PicardOptions::default()).unwrap();
        let v = solve_poisson(&GridField::from_fn(s, |_| -3.0));
        let lcp = solve_lcp(
            &LcpProblem::new(v.clone()).unwrap(),
            &PsorOptions::default(),
        )
        .unwrap();
        let u: Vec<f64> = lcp
            .z
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a + b)
            .collect();
        let u = GridField::new(s, u).unwrap();
        assert!(sol.u.sup_distance(&u).unwrap() < 1e-9);
        assert!(sol.u.values().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn picard_budget_exhaustion_carries_history() {
        let s = spec(1, 8);
        let c = CoefficientPair::from_specs("linear:-0.5,1", "const:0.2").unwrap();
        let opts = PicardOptions {
            max_iters: 2,
            tol: 1e-30,
            ..PicardOptions::default()
        };
        match picard_solve(&c, &sample_noise(s, 5), &opts) {
            Err(Error::Convergence { history, .. }) => assert_eq!(history.len(), 2),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn kernel_path_matches_interpolation() {
        let s = spec(1, 8);
        let c = CoefficientPair::from_specs("linear:-0.1,-1", "const:0.1").unwrap();
        let sol = picard_solve(&c, &sample_noise(s, 42), &PicardOptions::default()).unwrap();
        let field = assemble_continuous(&sol);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: f64 = rng.random();
            let a = field.eval(&[x]).unwrap();
            let b = kernel_representation(&sol, &c, &[x]).unwrap();
            assert!((a - b).abs() < 1e-7, "x={x} interp={a} kernel={b}");
        }
        assert_eq!(field.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(field.eval(&[0.25]).unwrap(), sol.u.values()[1]);
    }

    #[test]
    fn smallness_examples() {
        let s = spec(1, 16);
        let zero = CoefficientPair::from_specs("zero", "const:1").unwrap();
        let r = check_smallness(&zero, &s, &SmallnessParams::new(2.0, 0.01)).unwrap();
        assert_eq!(r.lhs_convergence, 0.0);
        assert!(r.satisfied);
        assert!(r.c_d > 0.0 && (r.c_d - r.c_tilde_d).abs() < 1e-15);

        // p must exceed d/(2γ) = 1 in one dimension
        assert!(check_smallness(&zero, &s, &SmallnessParams::new(1.0, 0.01)).is_err());
        // d=3: d/(2γ) = 3/(2(1/4-ε))
        assert!(check_smallness(&zero, &spec(3, 4), &SmallnessParams::new(6.0, 0.01)).is_err());
    }

    #[test]
    fn lipschitz_and_monotone_probes() {
        let c = CoefficientPair::from_specs("linear:0.3,1", "sin:0.2").unwrap();
        assert!(c.probe_lipschitz(2, 500, 5.0, 1) <= c.l1 + 1e-12);
        assert!(c.probe_monotone(2, 500, 5.0, 1));
        let c = CoefficientPair::from_specs("linear:-0.3,1", "zero").unwrap();
        assert!(!c.probe_monotone(1, 500, 5.0, 1));
    }
}
