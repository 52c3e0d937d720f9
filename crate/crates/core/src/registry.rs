//! Named analytic barriers and SPDE coefficients, addressed as `NAME[:p1,p2,..]`.
//!
//! Barriers (all vanish on the boundary of the unit cube):
//!
//! - `zero`
//! - `sine[:a]`            `v = -a ∏ sin(π x_j)`
//! - `sine-mode[:k[,a]]`   `v = -a ∏ sin(k π x_j)`
//! - `poly[:a]`            `v = -a ∏ 4 x_j (1 - x_j)`
//! - `tent[:a]`            `v = -a ∏ (1 - |2 x_j - 1|)` (continuous, not smooth)
//!
//! Coefficients `g(x, u)` for `f` and `σ`:
//!
//! - `zero`
//! - `const:c`             `g = c`
//! - `linear:a,b`          `g = a u + b`
//! - `sin:a[,b]`           `g = a sin(u) + b`

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

fn split_spec(spec: &str) -> Result<(&str, Vec<f64>)> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n, Some(r)),
        None => (spec, None),
    };
    let params = match rest {
        None => Vec::new(),
        Some(r) => r
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad parameter {p:?} in {spec:?}")))
            })
            .collect::<Result<_>>()?,
    };
    Ok((name.trim(), params))
}

fn param_count(spec: &str, params: &[f64], min: usize, max: usize) -> Result<()> {
    if params.len() < min || params.len() > max {
        return Err(Error::Parse(format!(
            "{spec:?} takes between {min} and {max} parameters, got {}",
            params.len()
        )));
    }
    Ok(())
}

pub type BarrierFunction = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Barrier {
    pub spec: String,
    func: BarrierFunction,
}

impl Barrier {
    pub fn new(spec: impl Into<String>, func: BarrierFunction) -> Self {
        Barrier {
            spec: spec.into(),
            func,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }

    pub fn as_fn(&self) -> &(dyn Fn(&[f64]) -> f64 + Send + Sync) {
        &*self.func
    }
}

impl fmt::Debug for Barrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Barrier").field("spec", &self.spec).finish()
    }
}

pub fn parse_barrier(spec: &str) -> Result<Barrier> {
    let (name, p) = split_spec(spec)?;
    let func: BarrierFunction = match name {
        "zero" => {
            param_count(spec, &p, 0, 0)?;
            Arc::new(|_: &[f64]| 0.0)
        }
        "sine" => {
            param_count(spec, &p, 0, 1)?;
            let a = p.first().copied().unwrap_or(1.0);
            Arc::new(move |x: &[f64]| -a * x.iter().map(|t| (PI * t).sin()).product::<f64>())
        }
        "sine-mode" => {
            param_count(spec, &p, 0, 2)?;
            let k = p.first().copied().unwrap_or(1.0);
            if k.fract() != 0.0 || k < 1.0 {
                return Err(Error::Parse(format!(
                    "mode in {spec:?} must be a positive integer"
                )));
            }
            let a = p.get(1).copied().unwrap_or(1.0);
            Arc::new(move |x: &[f64]| -a * x.iter().map(|t| (k * PI * t).sin()).product::<f64>())
        }
        "poly" => {
            param_count(spec, &p, 0, 1)?;
            let a = p.first().copied().unwrap_or(1.0);
            Arc::new(move |x: &[f64]| -a * x.iter().map(|t| 4.0 * t * (1.0 - t)).product::<f64>())
        }
        "tent" => {
            param_count(spec, &p, 0, 1)?;
            let a = p.first().copied().unwrap_or(1.0);
            Arc::new(move |x: &[f64]| {
                -a * x
                    .iter()
                    .map(|t| 1.0 - (2.0 * t - 1.0).abs())
                    .product::<f64>()
            })
        }
        other => return Err(Error::Parse(format!("unknown barrier {other:?}"))),
    };
    Ok(Barrier::new(spec, func))
}

pub type CoefficientFunction = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// A parsed coefficient with its Lipschitz constant in `u`, its value at
/// `(x, u) = (0, 0)` and whether it is non-decreasing in `u`.
#[derive(Clone)]
pub struct Coefficient {
    pub spec: String,
    pub func: CoefficientFunction,
    pub lipschitz: f64,
    pub at_origin: f64,
    pub nondecreasing: bool,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient")
            .field("spec", &self.spec)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

pub fn parse_coefficient(spec: &str) -> Result<Coefficient> {
    let (name, p) = split_spec(spec)?;
    let (func, lipschitz, at_origin, nondecreasing): (CoefficientFunction, f64, f64, bool) =
        match name {
            "zero" => {
                param_count(spec, &p, 0, 0)?;
                (Arc::new(|_: &[f64], _| 0.0), 0.0, 0.0, true)
            }
            "const" => {
                param_count(spec, &p, 1, 1)?;
                let c = p[0];
                (Arc::new(move |_: &[f64], _| c), 0.0, c, true)
            }
            "linear" => {
                param_count(spec, &p, 2, 2)?;
                let (a, b) = (p[0], p[1]);
                (
                    Arc::new(move |_: &[f64], u| a * u + b),
                    a.abs(),
                    b,
                    a >= 0.0,
                )
            }
            "sin" => {
                param_count(spec, &p, 1, 2)?;
                let a = p[0];
                let b = p.get(1).copied().unwrap_or(0.0);
                (
                    Arc::new(move |_: &[f64], u: f64| a * u.sin() + b),
                    a.abs(),
                    b,
                    a == 0.0,
                )
            }
            other => return Err(Error::Parse(format!("unknown coefficient {other:?}"))),
        };
    Ok(Coefficient {
        spec: spec.to_string(),
        func,
        lipschitz,
        at_origin: at_origin.abs(),
        nondecreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barriers_vanish_on_boundary() {
        for spec in [
            "zero",
            "sine",
            "sine:2.5",
            "sine-mode:3,0.5",
            "poly",
            "tent:2",
        ] {
            let b = parse_barrier(spec).unwrap();
            for t in [0.0, 0.3, 0.8, 1.0] {
                assert!(b.eval(&[0.0, t]).abs() < 1e-12, "{spec}");
                assert!(b.eval(&[t, 1.0]).abs() < 1e-12, "{spec}");
            }
        }
        let b = parse_barrier("sine").unwrap();
        assert!((b.eval(&[0.5]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn barrier_parse_errors() {
        assert!(parse_barrier("nope").is_err());
        assert!(parse_barrier("sine:x").is_err());
        assert!(parse_barrier("sine:1,2").is_err());
        assert!(parse_barrier("sine-mode:1.5").is_err());
    }

    #[test]
    fn coefficients() {
        let f = parse_coefficient("linear:-0.1,-1").unwrap();
        assert_eq!((f.func)(&[0.5], 2.0), -1.2);
        assert_eq!(f.lipschitz, 0.1);
        assert_eq!(f.at_origin, 1.0);
        assert!(!f.nondecreasing);
        let s = parse_coefficient("const:0.1").unwrap();
        assert_eq!((s.func)(&[0.2], 7.0), 0.1);
        assert!(parse_coefficient("const").is_err());
        assert!(parse_coefficient("linear:1").is_err());
        let g = parse_coefficient("sin:0.5").unwrap();
        assert_eq!(g.lipschitz, 0.5);
    }
}
