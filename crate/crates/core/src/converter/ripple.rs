use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::{dc_solve, ConverterModel, OperatingPoint};
use crate::dist::PulseLengthDist;
use crate::error::{Error, Result};
use crate::spectrum::{self, PsdCurve};

/// Control-to-state transfer `H(s) = (sI - A_avg)^{-1} beta`, per volt of
/// input.
#[derive(Clone, Debug)]
pub struct RippleTransfer {
    a: DMatrix<f64>,
    beta: DVector<f64>,
    pub op: OperatingPoint,
}

impl RippleTransfer {
    pub fn eval(&self, f: f64) -> Result<Vec<Complex64>> {
        let n = self.beta.len();
        let s = Complex64::new(0.0, 2.0 * PI * f);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { s } else { Complex64::new(0.0, 0.0) };
            d - self.a[(i, j)]
        });
        let rhs = self.beta.map(|v| Complex64::new(v, 0.0));
        let h = m
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular("ripple transfer (undamped resonance)"))?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("ripple transfer (undamped resonance)"));
        }
        Ok(h.iter().copied().collect())
    }

    /// `|H_j(j 2 pi f)|^2` for every state `j`.
    pub fn mag_sq(&self, f: f64) -> Result<Vec<f64>> {
        Ok(self.eval(f)?.iter().map(|h| h.norm_sqr()).collect())
    }
}

pub fn ripple_transfer_mag_sq(model: &ConverterModel, p: f64) -> Result<RippleTransfer> {
    let op = dc_solve(model, p)?;
    let (a, _) = model.averaged(p);
    Ok(RippleTransfer {
        a,
        beta: DVector::from_column_slice(&op.beta),
        op,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RipplePsd {
    /// Spectrum of the zero-mean switching ripple `q - p`.
    pub switch_ripple: PsdCurve,
    /// Per-state ripple spectra.
    pub ripple: Vec<PsdCurve>,
    /// Per-state spectra including the `X_j^2` DC impulse.
    pub full: Vec<PsdCurve>,
    pub op: OperatingPoint,
}

/// Ripple spectra `|H_j|^2 Vg^2 S_q~q~` for every state.
pub fn ripple_psd(
    model: &ConverterModel,
    p: f64,
    dist: &PulseLengthDist,
    t_eps: f64,
    freqs: &[f64],
) -> Result<RipplePsd> {
    let transfer = ripple_transfer_mag_sq(model, p)?;
    let q = spectrum::psd_frs(p, dist, t_eps, freqs)?;
    let switch_ripple = spectrum::mix_affine(1.0, -p, &q, p).with_dc(0.0);
    let vg2 = model.vg() * model.vg();
    let gains: Vec<Vec<f64>> = freqs
        .iter()
        .map(|&f| transfer.mag_sq(f))
        .collect::<Result<_>>()?;
    let h_dc = transfer.mag_sq(0.0)?;
    let lookup = |j: usize, f: f64| -> f64 {
        let h = match freqs.binary_search_by(|x| x.total_cmp(&f)) {
            Ok(i) => gains[i][j],
            Err(_) if f == 0.0 => h_dc[j],
            Err(_) => transfer.mag_sq(f).map(|v| v[j]).unwrap_or(f64::NAN),
        };
        h * vg2
    };
    let op_x = transfer.op.x.clone();
    let mut ripple = Vec::with_capacity(model.dim());
    let mut full = Vec::with_capacity(model.dim());
    for j in 0..model.dim() {
        let r = spectrum::filter_psd(&switch_ripple, |f| lookup(j, f))?;
        let xj = op_x[j];
        full.push(r.clone().with_dc(xj * xj));
        ripple.push(r);
    }
    Ok(RipplePsd {
        switch_ripple,
        ripple,
        full,
        op: transfer.op,
    })
}
