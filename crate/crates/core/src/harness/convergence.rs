//! Grid-refinement studies against a computed reference level.
//!
//! The limit object has no closed form, so each level is compared with the
//! finest (reference) solution. Errors are sups over the interior nodes of the
//! reference lattice: both interpolants are multilinear on every reference
//! cell and vanish on the boundary, so that sup is the sup over the cube.

use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{kernel_on_tensor_grid, KernelKind};
use crate::lattice::{GridField, GridSpec, InterpolatedField};
use crate::noise::{coarsen_noise, refine_noise, sample_noise, NoiseSample};
use crate::obstacle::deterministic_scheme;
use crate::registry::parse_barrier;
use crate::spde::{picard_solve, CoefficientPair};

use super::config::{ExperimentConfig, ExperimentKind};
use super::io::{self, ErrorRow};

/// Largest share of failed replicates tolerated before a study aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub n: usize,
    /// Replicates that entered the statistics.
    pub replicates: usize,
    pub mean_sup_error: f64,
    pub max_sup_error: f64,
    /// `(1/R) Σ error_r^p`.
    pub mean_error_p: f64,
    /// Standard error of `mean_error_p` (zero for a single replicate).
    pub std_error_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_picard_iterations: Option<f64>,
}

/// Deterministic for a given config: no timings (those go to the manifest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub p: f64,
    /// Errors are sups over the interior nodes of the `evaluation_net` lattice.
    pub evaluation_net: usize,
    pub rows: Vec<LevelRow>,
    pub failed_replicates: Vec<usize>,
    /// Error column strictly decreasing (or identically zero).
    pub monotone: bool,
    /// Least-squares slope of `log mean_error_p` against `log n`.
    pub slope: Option<f64>,
    pub verdicts: Vec<Verdict>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTiming {
    pub n: usize,
    /// Solver time summed over replicates.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub replicate_seeds: Vec<u64>,
    pub timings: Vec<LevelTiming>,
    pub total_seconds: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: cfg.kind,
            config: cfg.clone(),
            seed: cfg.seed,
            replicate_seeds: Vec::new(),
            timings: Vec::new(),
            total_seconds: 0.0,
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub report: ConvergenceReport,
    pub errors: Vec<ErrorRow>,
    pub manifest: RunManifest,
}

pub const REPORT_FILE: &str = "report.json";
pub const ERRORS_FILE: &str = "errors.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

impl ConvergenceRun {
    /// Writes `report.json`, `errors.csv` and `manifest.json` into `dir`.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join(REPORT_FILE), &self.report)?;
        io::write_atomic(&dir.join(ERRORS_FILE), &io::errors_csv(&self.errors)?)?;
        self.manifest.outputs = [REPORT_FILE, ERRORS_FILE, MANIFEST_FILE]
            .map(String::from)
            .to_vec();
        io::write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    match cfg.kind {
        ExperimentKind::DeterministicConvergence => run_deterministic_convergence(cfg),
        ExperimentKind::StochasticConvergence => run_stochastic_convergence(cfg),
        other => Err(Error::Config(format!(
            "{} is not a convergence study",
            other.name()
        ))),
    }
}

/// `err_{i+1} < err_i` at every step, with exact zeros allowed to repeat.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

/// Least-squares slope of `log y` against `log x` over the positive `y`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn sup_error_on_reference(level: &GridField, reference: &GridField) -> Result<f64> {
    let on_net = InterpolatedField::new(level.clone()).sample_on(*reference.spec())?;
    on_net.sup_distance(reference)
}

fn monotone_verdict(rows: &[LevelRow]) -> Verdict {
    let col: Vec<f64> = rows.iter().map(|r| r.mean_sup_error).collect();
    Verdict {
        name: "monotone-decrease".into(),
        passed: strictly_decreasing(&col),
        detail: format!("sup errors {col:?}"),
    }
}

pub fn run_deterministic_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    cfg.validate()?;
    let started = Instant::now();
    let barrier = parse_barrier(&cfg.barrier)?;
    let reference = cfg.reference_n()?;
    let p = cfg.moment_order();
    let mut manifest = RunManifest::new(cfg);

    let solve = |n: usize| -> Result<(GridField, f64)> {
        let t = Instant::now();
        let spec = GridSpec::new(cfg.d, n)?;
        let sol =
            deterministic_scheme(barrier.as_fn(), spec, &cfg.psor).map_err(Error::at_level(n))?;
        Ok((sol.lcp.z, t.elapsed().as_secs_f64()))
    };

    let (z_ref, t_ref) = solve(reference)?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &n in &cfg.levels {
        let (z, secs) = solve(n)?;
        let err = sup_error_on_reference(&z, &z_ref)?;
        manifest.timings.push(LevelTiming { n, seconds: secs });
        errors.push(ErrorRow {
            level_n: n,
            replicate: 0,
            sup_error: err,
        });
        rows.push(LevelRow {
            n,
            replicates: 1,
            mean_sup_error: err,
            max_sup_error: err,
            mean_error_p: err.powf(p),
            std_error_p: 0.0,
            mean_picard_iterations: None,
        });
    }
    manifest.timings.push(LevelTiming {
        n: reference,
        seconds: t_ref,
    });
    manifest.replicate_seeds.push(cfg.seed);

    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let sup: Vec<f64> = rows.iter().map(|r| r.mean_sup_error).collect();
    let verdict = monotone_verdict(&rows);
    let report = ConvergenceReport {
        kind: cfg.kind,
        config: cfg.clone(),
        p,
        evaluation_net: reference,
        monotone: verdict.passed,
        slope: log_log_slope(&ns, &sup),
        rows,
        failed_replicates: Vec::new(),
        verdicts: vec![verdict],
    };
    manifest.total_seconds = started.elapsed().as_secs_f64();
    Ok(ConvergenceRun {
        report,
        errors,
        manifest,
    })
}

/// Seed of replicate `r`, derived from the study seed.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng.next_u64()
}

/// Noise at every level of `levels` and at `reference`, all restrictions of
/// one Brownian-sheet path: the coarsest level is sampled and then refined by
/// halving up to the reference.
pub fn coupled_noise(
    d: usize,
    levels: &[usize],
    reference: usize,
    seed: u64,
) -> Result<Vec<NoiseSample>> {
    let coarsest = levels.first().copied().unwrap_or(reference);
    let mut current = sample_noise(GridSpec::new(d, coarsest)?, seed);
    let mut out = Vec::with_capacity(levels.len() + 1);
    loop {
        let n = current.spec().n();
        if levels.contains(&n) || n == reference {
            out.push(current.clone());
        }
        if n >= reference {
            break;
        }
        current = refine_noise(&current, 2)?;
    }
    if out.len() != levels.len() + 1 || out.last().map(|s| s.spec().n()) != Some(reference) {
        return Err(Error::Config(format!(
            "levels {levels:?} and reference {reference} do not lie on one dyadic chain"
        )));
    }
    Ok(out)
}

/// Coarsens `fine` down to resolution `n`.
fn coarsen_to(fine: &NoiseSample, n: usize) -> Result<NoiseSample> {
    let mut s = fine.clone();
    while s.spec().n() > n {
        s = coarsen_noise(&s)?;
    }
    Ok(s)
}

struct ReplicateOutcome {
    errors: Vec<f64>,
    iterations: Vec<usize>,
    seconds: Vec<f64>,
    coupling_exact: bool,
}

fn run_replicate(
    cfg: &ExperimentConfig,
    coeffs: &CoefficientPair,
    reference: usize,
    seed: u64,
) -> Result<ReplicateOutcome> {
    let noises = coupled_noise(cfg.d, &cfg.levels, reference, seed)?;
    let (ref_noise, level_noises) = noises.split_last().expect("reference present");
    let mut coupling_exact = true;
    for s in level_noises {
        coupling_exact &= coarsen_to(ref_noise, s.spec().n())?.increments() == s.increments();
    }
    let mut seconds = Vec::with_capacity(noises.len());
    let mut iterations = Vec::with_capacity(noises.len());
    let mut solve = |noise: &NoiseSample| -> Result<GridField> {
        let t = Instant::now();
        let sol =
            picard_solve(coeffs, noise, &cfg.picard).map_err(Error::at_level(noise.spec().n()))?;
        seconds.push(t.elapsed().as_secs_f64());
        iterations.push(sol.picard_iterations);
        Ok(sol.u)
    };
    let u_ref = solve(ref_noise)?;
    let mut errors = Vec::with_capacity(level_noises.len());
    for noise in level_noises {
        let u = solve(noise)?;
        errors.push(sup_error_on_reference(&u, &u_ref)?);
    }
    // reference first in solve order; report in level order
    iterations.rotate_left(1);
    seconds.rotate_left(1);
    Ok(ReplicateOutcome {
        errors,
        iterations,
        seconds,
        coupling_exact,
    })
}

fn is_solver_failure(e: &Error) -> bool {
    match e {
        Error::Convergence { .. } => true,
        Error::AtLevel { source, .. } => is_solver_failure(source),
        _ => false,
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Coupled-noise Monte Carlo study of `E sup |ũⁿ - ũ^ref|^p`.
pub fn run_stochastic_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    cfg.validate()?;
    let started = Instant::now();
    let coeffs = CoefficientPair::from_specs(&cfg.f, &cfg.sigma)?;
    let reference = cfg.reference_n()?;
    let p = cfg.moment_order();
    let seeds: Vec<u64> = (0..cfg.replicates)
        .map(|r| replicate_seed(cfg.seed, r))
        .collect();

    let outcomes: Vec<Result<ReplicateOutcome>> = seeds
        .par_iter()
        .map(|&s| run_replicate(cfg, &coeffs, reference, s))
        .collect();

    let mut kept = Vec::new();
    let mut failed = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => kept.push((r, o)),
            Err(e) if is_solver_failure(&e) => failed.push(r),
            Err(e) => return Err(e),
        }
    }
    if failed.len() as f64 > MAX_FAILURE_FRACTION * cfg.replicates as f64 || kept.is_empty() {
        return Err(Error::Aborted(format!(
            "{} of {} replicates failed to converge: {failed:?}",
            failed.len(),
            cfg.replicates
        )));
    }

    let mut errors = Vec::new();
    for (li, &n) in cfg.levels.iter().enumerate() {
        for (r, o) in &kept {
            errors.push(ErrorRow {
                level_n: n,
                replicate: *r,
                sup_error: o.errors[li],
            });
        }
    }

    let mut manifest = RunManifest::new(cfg);
    manifest.replicate_seeds = seeds;
    let mut rows = Vec::new();
    let all_n: Vec<usize> = cfg.levels.iter().copied().chain([reference]).collect();
    for (li, &n) in all_n.iter().enumerate() {
        manifest.timings.push(LevelTiming {
            n,
            seconds: kept.iter().map(|(_, o)| o.seconds[li]).sum(),
        });
        if li == cfg.levels.len() {
            break;
        }
        let errs: Vec<f64> = kept.iter().map(|(_, o)| o.errors[li]).collect();
        let powered: Vec<f64> = errs.iter().map(|e| e.powf(p)).collect();
        let (mean_p, se_p) = mean_and_se(&powered);
        let iters: Vec<f64> = kept.iter().map(|(_, o)| o.iterations[li] as f64).collect();
        rows.push(LevelRow {
            n,
            replicates: errs.len(),
            mean_sup_error: errs.iter().sum::<f64>() / errs.len() as f64,
            max_sup_error: errs.iter().fold(0.0f64, |m, &e| m.max(e)),
            mean_error_p: mean_p,
            std_error_p: se_p,
            mean_picard_iterations: Some(iters.iter().sum::<f64>() / iters.len() as f64),
        });
    }

    let mut steps = Vec::new();
    let mut beyond_noise = true;
    for w in rows.windows(2) {
        let drop = w[0].mean_error_p - w[1].mean_error_p;
        let se = (w[0].std_error_p.powi(2) + w[1].std_error_p.powi(2)).sqrt();
        beyond_noise &= drop > se;
        steps.push(format!(
            "{}->{}: drop {:e} vs se {:e}",
            w[0].n, w[1].n, drop, se
        ));
    }
    let coupling = kept.iter().all(|(_, o)| o.coupling_exact);
    let means: Vec<f64> = rows.iter().map(|r| r.mean_error_p).collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let verdicts = vec![
        Verdict {
            name: "mean-error-decrease".into(),
            passed: beyond_noise,
            detail: steps.join("; "),
        },
        Verdict {
            name: "coupling".into(),
            passed: coupling,
            detail: "coarsened reference noise equals the refinement chain at every level".into(),
        },
    ];
    let report = ConvergenceReport {
        kind: cfg.kind,
        config: cfg.clone(),
        p,
        evaluation_net: reference,
        monotone: strictly_decreasing(&means),
        slope: log_log_slope(&ns, &means),
        rows,
        failed_replicates: failed,
        verdicts,
    };
    manifest.total_seconds = started.elapsed().as_secs_f64();
    Ok(ConvergenceRun {
        report,
        errors,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub k: f64,
    pub kn: f64,
    pub kprime: f64,
    pub kcaret_n: f64,
}

/// All four kernels at every pair `(x, y)` of interior nodes of the
/// `grid`-lattice; `x` outer, both in natural order.
pub fn green_table(spec: &GridSpec, grid: usize) -> Result<Vec<GreenRow>> {
    let d = spec.dim();
    let net = GridSpec::new(d, grid)?;
    let axis: Vec<f64> = (1..grid).map(|i| net.coordinate(i)).collect();
    let axes = vec![axis; d];
    let kinds = [
        KernelKind::K,
        KernelKind::Discrete,
        KernelKind::K_PRIME,
        KernelKind::InterpolatedDiscrete,
    ];
    let mut rows = Vec::with_capacity(net.interior_count().pow(2));
    for kx in 0..net.interior_count() {
        let x = net.point(kx)[..d].to_vec();
        let vals = kinds
            .iter()
            .map(|&kind| kernel_on_tensor_grid(kind, spec, &x, &axes))
            .collect::<Result<Vec<_>>>()?;
        for ky in 0..net.interior_count() {
            rows.push(GreenRow {
                x: x.clone(),
                y: net.point(ky)[..d].to_vec(),
                k: vals[0][ky],
                kn: vals[1][ky],
                kprime: vals[2][ky],
                kcaret_n: vals[3][ky],
            });
        }
    }
    Ok(rows)
}

pub fn green_table_csv(d: usize, rows: &[GreenRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.extend((1..=d).map(|j| format!("y{j}")));
    header.extend(["K", "Kn", "Kprime", "Kcaret_n"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let rec: Vec<String> =
            r.x.iter()
                .chain(&r.y)
                .chain([&r.k, &r.kn, &r.kprime, &r.kcaret_n])
                .map(|&v| io::format_float(v))
                .collect();
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::Parse(format!("csv buffer: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_and_slope() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0]));
        assert!(strictly_decreasing(&[0.0, 0.0]));
        let s = log_log_slope(&[2.0, 4.0, 8.0], &[1.0, 0.25, 0.0625]).unwrap();
        assert!((s + 2.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&[2.0, 4.0], &[0.0, 0.0]), None);
    }

    #[test]
    fn nonnegative_barrier_has_zero_errors() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::DeterministicConvergence, 1);
        cfg.barrier = "sine:-1".into();
        cfg.levels = vec![4, 8];
        cfg.reference = Some(32);
        let run = run_deterministic_convergence(&cfg).unwrap();
        assert!(run.report.rows.iter().all(|r| r.mean_sup_error == 0.0));
        assert!(run.report.passed());
        assert_eq!(run.report.slope, None);
    }

    #[test]
    fn coupled_chain_matches_coarsening() {
        let noises = coupled_noise(2, &[2, 8], 16, 5).unwrap();
        let ns: Vec<usize> = noises.iter().map(|s| s.spec().n()).collect();
        assert_eq!(ns, vec![2, 8, 16]);
        let back = coarsen_to(&noises[2], 2).unwrap();
        assert_eq!(back.increments(), noises[0].increments());
    }

    #[test]
    fn replicate_seeds_differ() {
        assert_ne!(replicate_seed(1, 0), replicate_seed(1, 1));
        assert_eq!(replicate_seed(1, 3), replicate_seed(1, 3));
    }

    #[test]
    fn green_table_shape() {
        let spec = GridSpec::new(1, 4).unwrap();
        let rows = green_table(&spec, 4).unwrap();
        assert_eq!(rows.len(), 9);
        let csv = String::from_utf8(green_table_csv(1, &rows).unwrap()).unwrap();
        assert!(csv.starts_with("x1,y1,K,Kn,Kprime,Kcaret_n\n0.25,0.25,"));
        // on the lattice K_n = Kⁿ
        assert!(rows.iter().all(|r| (r.kn - r.kcaret_n).abs() < 1e-14));
    }
}
