//! Discrete white noise: Brownian-sheet increments over the `n^d` lattice cells.
//!
//! Cells `C_c = ∏ [c_j h, (c_j+1) h)` with `c` in `{0,..,n-1}^d` are stored with
//! the first index varying fastest. Every increment is an independent
//! `N(0, h^d)` draw.
//!
//! Draws come from ChaCha keyed by `(seed, level, purpose)` with one stream per
//! cell, so a sample does not depend on iteration order. Increments are rounded
//! to multiples of [`NOISE_QUANTUM`]; with that, sums of sibling cells are exact
//! in floating point and refine/coarsen round-trips hold bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridField, GridSpec, MAX_DIM};

/// Increments live on the lattice `NOISE_QUANTUM * Z`. Any magnitude below
/// `2^12` is then exactly representable, along with all partial sums.
pub const NOISE_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

const PURPOSE_SAMPLE: u64 = 0x5341_4d50;
const PURPOSE_REFINE: u64 = 0x5245_464e;

fn quantize(v: f64) -> f64 {
    (v / NOISE_QUANTUM).round() * NOISE_QUANTUM
}

fn cell_rng(seed: u64, level: u32, purpose: u64, cell: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&u64::from(level).to_le_bytes());
    key[16..24].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(cell as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    spec: GridSpec,
    increments: Vec<f64>,
    seed: u64,
    /// Number of refinement steps since the root sample.
    level: u32,
}

impl NoiseSample {
    /// Wraps raw increments, e.g. from a replay file. Values are snapped to the
    /// noise quantum.
    pub fn from_increments(
        spec: GridSpec,
        increments: Vec<f64>,
        seed: u64,
        level: u32,
    ) -> Result<Self> {
        if increments.len() != spec.cell_count() {
            return Err(Error::domain(format!(
                "{} increments for {} cells",
                increments.len(),
                spec.cell_count()
            )));
        }
        Ok(NoiseSample {
            spec,
            increments: increments.into_iter().map(quantize).collect(),
            seed,
            level,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Linear index of the cell whose lower corner has multi-index `c`.
    pub fn cell_index(&self, c: &[usize]) -> usize {
        let n = self.spec.n();
        c.iter().rev().fold(0, |acc, &cj| acc * n + cj)
    }

    /// Little-endian `f64` dump of the increments in cell order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.increments
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    pub fn from_le_bytes(spec: GridSpec, bytes: &[u8], seed: u64, level: u32) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(Error::Parse(format!(
                "noise dump length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        NoiseSample::from_increments(spec, values, seed, level)
    }
}

/// Independent `N(0, h^d)` increments for every cell.
pub fn sample_noise(spec: GridSpec, seed: u64) -> NoiseSample {
    let sd = spec.cell_volume().sqrt();
    let increments = (0..spec.cell_count())
        .map(|c| {
            let z: f64 = cell_rng(seed, 0, PURPOSE_SAMPLE, c).sample(StandardNormal);
            quantize(sd * z)
        })
        .collect();
    NoiseSample {
        spec,
        increments,
        seed,
        level: 0,
    }
}

fn for_each_child(d: usize, parent: &[usize], mut f: impl FnMut(&[usize])) {
    let mut child = [0usize; MAX_DIM];
    for mask in 0..(1usize << d) {
        for j in 0..d {
            child[j] = 2 * parent[j] + (mask >> j & 1);
        }
        f(&child[..d]);
    }
}

fn cell_multi_index(n: usize, d: usize, mut c: usize) -> [usize; MAX_DIM] {
    let mut out = [0usize; MAX_DIM];
    for o in out.iter_mut().take(d) {
        *o = c % n;
        c /= n;
    }
    out
}

/// Samples the `2n` grid conditionally on `parent`: each parent increment `P`
/// is split over its `m = 2^d` children as `P/m + Z_i - Z̄` with `Z_i` iid
/// `N(0, (h/2)^d)`, which is the conditional law of independent fine
/// increments given their sum. The last child absorbs rounding so that sibling
/// sums reproduce `P` exactly.
pub fn refine_noise(parent: &NoiseSample, factor: usize) -> Result<NoiseSample> {
    if factor != 2 {
        return Err(Error::Unsupported(format!(
            "refinement factor {factor}; only 2 is supported (repeat for powers of two)"
        )));
    }
    let spec = parent.spec.refined();
    let d = spec.dim();
    let m = 1usize << d;
    let sd = spec.cell_volume().sqrt();
    let level = parent.level + 1;
    let mut increments = vec![0.0; spec.cell_count()];
    let mut z = vec![0.0; m];
    let mut children = Vec::with_capacity(m);
    for (pc, &p) in parent.increments.iter().enumerate() {
        let mut rng = cell_rng(parent.seed, level, PURPOSE_REFINE, pc);
        for zi in z.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *zi = sd * g;
        }
        let mean = z.iter().sum::<f64>() / m as f64;
        let pm = parent.increments[pc] / m as f64;

        let pidx = cell_multi_index(parent.spec.n(), d, pc);
        children.clear();
        for_each_child(d, &pidx[..d], |c| {
            children.push(c.iter().rev().fold(0, |acc, &cj| acc * spec.n() + cj))
        });
        let mut partial = 0.0;
        for (i, &ci) in children.iter().enumerate().take(m - 1) {
            let v = quantize(pm + z[i] - mean);
            increments[ci] = v;
            partial += v;
        }
        increments[children[m - 1]] = p - partial;
    }
    Ok(NoiseSample {
        spec,
        increments,
        seed: parent.seed,
        level,
    })
}

/// Sums sibling increments onto the `n/2` grid.
pub fn coarsen_noise(fine: &NoiseSample) -> Result<NoiseSample> {
    let n = fine.spec.n();
    if n % 2 != 0 || n < 4 {
        return Err(Error::Unsupported(format!(
            "cannot coarsen a grid with n={n}"
        )));
    }
    let d = fine.spec.dim();
    let spec = GridSpec::new(d, n / 2)?;
    let increments = (0..spec.cell_count())
        .map(|pc| {
            let pidx = cell_multi_index(spec.n(), d, pc);
            let mut sum = 0.0;
            for_each_child(d, &pidx[..d], |c| {
                sum += fine.increments[fine.cell_index(c)]
            });
            sum
        })
        .collect();
    Ok(NoiseSample {
        spec,
        increments,
        seed: fine.seed,
        level: fine.level.saturating_sub(1),
    })
}

/// `n^d σ_k ΔW(C_k)` at every interior point, where `C_k` is the cell whose
/// lower corner is the point `x_k`. This is `σ(x) δ_1^+ ⋯ δ_d^+ W(x)`.
pub fn discrete_noise_term(sample: &NoiseSample, sigma_values: &GridField) -> Result<GridField> {
    let spec = sample.spec;
    spec.ensure_same(sigma_values.spec())?;
    let scale = spec.cell_count() as f64;
    let values = (0..spec.interior_count())
        .map(|k| {
            let i = spec.multi_index(k);
            let cell = sample.cell_index(i.components());
            scale * sigma_values.values()[k] * sample.increments[cell]
        })
        .collect();
    GridField::new(spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: usize, n: usize) -> GridSpec {
        GridSpec::new(d, n).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_noise(spec(2, 8), 7);
        let b = sample_noise(spec(2, 8), 7);
        assert_eq!(a, b);
        let c = sample_noise(spec(2, 8), 8);
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn refine_then_coarsen_is_identity() {
        for d in 1..=3 {
            let parent = sample_noise(spec(d, 4), 11);
            let child = refine_noise(&parent, 2).unwrap();
            assert_eq!(child.spec().n(), 8);
            let back = coarsen_noise(&child).unwrap();
            assert_eq!(back.increments(), parent.increments());
        }
    }

    #[test]
    fn refinement_factor_must_be_two() {
        let parent = sample_noise(spec(1, 4), 1);
        assert!(matches!(
            refine_noise(&parent, 3),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn noise_term_examples() {
        let s = spec(1, 2);
        let w = sample_noise(s, 3);
        let zero = discrete_noise_term(&w, &GridField::zeros(s)).unwrap();
        assert_eq!(zero.values(), &[0.0]);
        let one = discrete_noise_term(&w, &GridField::new(s, vec![1.0]).unwrap()).unwrap();
        // δ⁺W(1/2) = n (W(1) - W(1/2)) = 2 ΔW([1/2, 1))
        assert_eq!(one.values()[0], 2.0 * w.increments()[1]);

        let s = spec(2, 5);
        let w = sample_noise(s, 4);
        let sigma = GridField::from_fn(s, |x| x[0] - x[1]);
        let a = discrete_noise_term(&w, &sigma).unwrap();
        let b = discrete_noise_term(&w, &sigma.map(|v| 2.0 * v)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn noise_term_rejects_mismatch() {
        let w = sample_noise(spec(1, 4), 0);
        assert!(discrete_noise_term(&w, &GridField::zeros(spec(1, 8))).is_err());
    }

    #[test]
    fn binary_dump_round_trip() {
        let w = sample_noise(spec(2, 4), 9);
        let bytes = w.to_le_bytes();
        assert_eq!(bytes.len(), 16 * 8);
        let back = NoiseSample::from_le_bytes(*w.spec(), &bytes, 9, 0).unwrap();
        assert_eq!(back, w);
    }
}
