use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::{affine_step, AffineStep, ConverterModel};
use crate::dist::PulseLengthDist;
use crate::error::{Error, Result};
use crate::switching::check_probability;

pub fn averaged_eigenvalues(model: &ConverterModel, p: f64) -> Vec<Complex64> {
    let (a, _) = model.averaged(p);
    a.complex_eigenvalues().iter().copied().collect()
}

/// One step of the linear-ripple mean recursion:
/// `m + T (A_avg m + B_avg Vg)`.
pub fn mean_update(model: &ConverterModel, p: f64, mean: &[f64], period: f64) -> Result<Vec<f64>> {
    check_probability("p", p)?;
    if mean.len() != model.dim() {
        return Err(Error::invalid("mean", "dimension differs from the model"));
    }
    if !(period > 0.0) {
        return Err(Error::invalid("period", "must be positive"));
    }
    let fastest = averaged_eigenvalues(model, p)
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if fastest * period > 0.1 {
        log::warn!(
            "mean update period {period:e} is outside the linear-ripple band (|lambda| T = {:.3})",
            fastest * period
        );
    }
    let (a, b) = model.averaged(p);
    let m = DVector::from_column_slice(mean);
    let next = &m + (&a * &m + b * model.vg()) * period;
    Ok(next.iter().copied().collect())
}

/// Mean recursion for FRS with the expected pulse duration `E{l} t_eps`.
pub fn mean_update_frs(
    model: &ConverterModel,
    p: f64,
    dist: &PulseLengthDist,
    t_eps: f64,
    mean: &[f64],
) -> Result<Vec<f64>> {
    mean_update(model, p, mean, dist.moments().mean * t_eps)
}

/// Stationary first and second moments of the state sampled at pulse
/// boundaries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Covariance {
    pub mean: Vec<f64>,
    /// Row-major `n x n`.
    pub cov: Vec<Vec<f64>>,
    /// Max-abs change of one more application of the covariance map.
    pub residual: f64,
    pub refinement_iterations: usize,
}

impl Covariance {
    pub fn sigma(&self, j: usize) -> f64 {
        self.cov[j][j].max(0.0).sqrt()
    }
}

const COV_TOL: f64 = 1e-12;
const COV_MAX_ITER: usize = 100_000;

/// Fixed point of the exact per-pulse moment maps. With pulse maps
/// `x -> F x + g` drawn with probabilities `pi`, the stationary mean solves
/// `m = sum pi (F m + g)` and the covariance solves
/// `P = sum pi (F P F^T + d d^T)` with `d = F m + g - m`. Both are solved
/// directly, then the covariance map is iterated until successive iterates
/// differ by less than `1e-12` relative to the largest entry.
pub fn covariance_equilibrium(
    model: &ConverterModel,
    p: f64,
    dist: &PulseLengthDist,
    t_eps: f64,
) -> Result<Covariance> {
    check_probability("p", p)?;
    if !(t_eps > 0.0) {
        return Err(Error::invalid("t_eps", "must be positive"));
    }
    let max_real = averaged_eigenvalues(model, p)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::Unstable { max_real });
    }

    let n = model.dim();
    let mut maps: Vec<(f64, AffineStep)> = Vec::new();
    for (amp, pa) in [(1u8, p), (0u8, 1.0 - p)] {
        if pa == 0.0 {
            continue;
        }
        for (l, w) in dist.support() {
            maps.push((pa * w, affine_step(model, amp, l as f64 * t_eps)?));
        }
    }

    let id = DMatrix::<f64>::identity(n, n);
    let mut mf = DMatrix::<f64>::zeros(n, n);
    let mut mg = DVector::<f64>::zeros(n);
    for (w, s) in &maps {
        mf += &s.f * *w;
        mg += &s.g * *w;
    }
    let radius = mf
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(Error::Unstable {
            max_real: radius.ln(),
        });
    }
    let mean = (&id - &mf)
        .lu()
        .solve(&mg)
        .ok_or(Error::Singular("mean recursion"))?;

    let mut kron = DMatrix::<f64>::zeros(n * n, n * n);
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut drifts = Vec::with_capacity(maps.len());
    for (w, s) in &maps {
        kron += s.f.kronecker(&s.f) * *w;
        let d = &s.f * &mean + &s.g - &mean;
        q += &d * d.transpose() * *w;
        drifts.push(d);
    }
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let vec_p = lhs
        .lu()
        .solve(&DVector::from_column_slice(q.as_slice()))
        .ok_or(Error::Singular("covariance recursion"))?;
    let mut cov = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    cov = (&cov + cov.transpose()) * 0.5;

    let apply = |c: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = q.clone();
        for (w, s) in &maps {
            out += &s.f * c * s.f.transpose() * *w;
        }
        out
    };
    let mut iterations = 0;
    let mut residual;
    loop {
        let next = apply(&cov);
        let scale = next.amax().max(f64::MIN_POSITIVE);
        residual = (&next - &cov).amax();
        cov = next;
        if residual <= COV_TOL * scale || cov.amax() == 0.0 {
            break;
        }
        iterations += 1;
        if iterations >= COV_MAX_ITER {
            return Err(Error::NonConvergence {
                what: "covariance recursion",
                iterations,
                residual,
            });
        }
    }
    Ok(Covariance {
        mean: mean.iter().copied().collect(),
        cov: cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        residual,
        refinement_iterations: iterations,
    })
}
