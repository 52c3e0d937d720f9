//! Lattice approximation of reflected elliptic SPDEs on `(0,1)^d`, `d ≤ 3`,
//! driven by space-time white noise.
//!
//! - [`lattice`]: grid geometry, natural ordering, discrete Laplacian, exact
//!   eigenbasis and multilinear interpolation.
//! - [`greens`]: the continuous, discrete and interpolated Green kernels.
//! - [`noise`]: Brownian-sheet cell increments with coupled refinement.
//! - [`obstacle`]: the discrete obstacle problem (LCP) and its penalization.
//! - [`spde`]: Picard construction of the discrete reflected solution.
//! - [`harness`]: convergence studies, property suite and file formats.

pub mod error;
pub mod greens;
pub mod harness;
pub mod lattice;
mod linalg;
pub mod noise;
pub mod obstacle;
pub mod registry;
pub mod spde;
mod tensor;

pub use error::{Error, Result};
pub use greens::{eval_kernel, HolderEstimate, KernelKind};
pub use lattice::{
    apply_b, apply_discrete_laplacian, eigen_basis, floor_map, multilinear_extend, natural_rank,
    solve_poisson, unrank, EigenBasis, GridField, GridSpec, InterpolatedField, MultiIndex,
};
pub use noise::{coarsen_noise, discrete_noise_term, refine_noise, sample_noise, NoiseSample};
pub use obstacle::{
    deterministic_scheme, solve_lcp, solve_penalized, LcpProblem, LcpSolution, PsorOptions,
};
pub use spde::{
    check_smallness, picard_solve, CoefficientPair, PicardOptions, SmallnessParams,
    SmallnessReport, SpdeSolution,
};
