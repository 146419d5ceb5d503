//! Two-topology converter models `dx/dt = A_a x + B_a Vg`, `a` in `{0, 1}`.
//!
//! Topology 1 is active while the switching function is 1, topology 2 while
//! it is 0. Everything is linear between switch events, so a pulse is an
//! exact affine map computed once per (topology, length) and cached.

mod buck;
pub mod expm;
mod moments;
mod ripple;
mod simulate;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::switching::check_probability;

pub use buck::{buck_analysis, BuckParams, BuckReport, SigmaPair};
pub use moments::{
    averaged_eigenvalues, covariance_equilibrium, mean_update, mean_update_frs, Covariance,
};
pub use ripple::{ripple_psd, ripple_transfer_mag_sq, RipplePsd, RippleTransfer};
pub use simulate::{simulate, simulate_with, PulseRecord, SimOptions, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct ConverterModel {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    b1: DVector<f64>,
    b2: DVector<f64>,
    vg: f64,
    labels: Vec<String>,
}

/// JSON form: either the generic matrices or the buck shorthand.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRecord {
    Generic {
        #[serde(rename = "A1")]
        a1: Vec<Vec<f64>>,
        #[serde(rename = "A2")]
        a2: Vec<Vec<f64>>,
        #[serde(rename = "B1")]
        b1: Vec<f64>,
        #[serde(rename = "B2")]
        b2: Vec<f64>,
        #[serde(rename = "Vg")]
        vg: f64,
        #[serde(default)]
        labels: Vec<String>,
    },
    Buck(BuckParams),
}

fn rows_to_matrix(name: &'static str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(name, "matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ConverterModel {
    pub fn new(
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        b1: DVector<f64>,
        b2: DVector<f64>,
        vg: f64,
        labels: Vec<String>,
    ) -> Result<Self> {
        let n = a1.nrows();
        if n == 0 || !a1.is_square() {
            return Err(Error::invalid("A1", "must be a non-empty square matrix"));
        }
        if a2.shape() != (n, n) {
            return Err(Error::invalid("A2", "dimension differs from A1"));
        }
        if b1.len() != n || b2.len() != n {
            return Err(Error::invalid("B", "input vectors must match the state dimension"));
        }
        let all = a1.iter().chain(a2.iter()).chain(b1.iter()).chain(b2.iter());
        if all.clone().any(|v| !v.is_finite()) || !vg.is_finite() {
            return Err(Error::invalid("model", "entries must be finite"));
        }
        let labels = if labels.is_empty() {
            (0..n).map(|i| format!("x{i}")).collect()
        } else if labels.len() == n {
            labels
        } else {
            return Err(Error::invalid("labels", "need one label per state"));
        };
        Ok(ConverterModel {
            a1,
            a2,
            b1,
            b2,
            vg,
            labels,
        })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(
        a1: &[Vec<f64>],
        a2: &[Vec<f64>],
        b1: &[f64],
        b2: &[f64],
        vg: f64,
        labels: &[&str],
    ) -> Result<Self> {
        Self::new(
            rows_to_matrix("A1", a1)?,
            rows_to_matrix("A2", a2)?,
            DVector::from_column_slice(b1),
            DVector::from_column_slice(b2),
            vg,
            labels.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn from_record(rec: ModelRecord) -> Result<Self> {
        match rec {
            ModelRecord::Generic {
                a1,
                a2,
                b1,
                b2,
                vg,
                labels,
            } => Self::new(
                rows_to_matrix("A1", &a1)?,
                rows_to_matrix("A2", &a2)?,
                DVector::from_vec(b1),
                DVector::from_vec(b2),
                vg,
                labels,
            ),
            ModelRecord::Buck(b) => b.model(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(s)?)
    }

    pub fn to_record(&self) -> ModelRecord {
        ModelRecord::Generic {
            a1: matrix_to_rows(&self.a1),
            a2: matrix_to_rows(&self.a2),
            b1: self.b1.iter().copied().collect(),
            b2: self.b2.iter().copied().collect(),
            vg: self.vg,
            labels: self.labels.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a1.nrows()
    }

    pub fn vg(&self) -> f64 {
        self.vg
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// `A` for switch amplitude `a` (1 selects `A1`).
    pub fn a(&self, amp: u8) -> &DMatrix<f64> {
        if amp == 1 {
            &self.a1
        } else {
            &self.a2
        }
    }

    pub fn b(&self, amp: u8) -> &DVector<f64> {
        if amp == 1 {
            &self.b1
        } else {
            &self.b2
        }
    }

    /// `(p A1 + (1-p) A2, p B1 + (1-p) B2)`.
    pub fn averaged(&self, p: f64) -> (DMatrix<f64>, DVector<f64>) {
        (
            &self.a1 * p + &self.a2 * (1.0 - p),
            &self.b1 * p + &self.b2 * (1.0 - p),
        )
    }

    /// Instantaneous `dx/dt` in topology `amp`.
    pub fn derivative(&self, x: &[f64], amp: u8) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let d = self.a(amp) * x + self.b(amp) * self.vg;
        d.iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub p: f64,
    /// DC state.
    pub x: Vec<f64>,
    /// Ripple drive per volt of input: `((A1 - A2) X + (B1 - B2) Vg) / Vg`,
    /// so the ripple obeys `dx~/dt = A_avg x~ + beta Vg q~`.
    pub beta: Vec<f64>,
    /// `|A_avg X + B_avg Vg| / (|A_avg| |X| + |B_avg Vg|)`, max norms.
    pub residual: f64,
}

/// Solves `0 = A_avg X + B_avg Vg`.
pub fn dc_solve(model: &ConverterModel, p: f64) -> Result<OperatingPoint> {
    check_probability("p", p)?;
    let (a, b) = model.averaged(p);
    let rhs = -(&b * model.vg);
    let lu = a.clone().lu();
    let x = lu.solve(&rhs).ok_or(Error::Singular("averaged state matrix"))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("averaged state matrix"));
    }
    let scale = a.amax() * x.amax() + rhs.amax();
    let residual = if scale > 0.0 {
        (&a * &x - &rhs).amax() / scale
    } else {
        0.0
    };
    if residual > 1e-10 {
        return Err(Error::Singular("averaged state matrix (ill-conditioned)"));
    }
    let drive = (&model.a1 - &model.a2) * &x + (&model.b1 - &model.b2) * model.vg;
    let beta = if model.vg != 0.0 {
        drive / model.vg
    } else {
        drive
    };
    Ok(OperatingPoint {
        p,
        x: x.iter().copied().collect(),
        beta: beta.iter().copied().collect(),
        residual,
    })
}

/// Exact flow `x -> F x + g` of one topology over a fixed interval.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineStep {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl AffineStep {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.g.len();
        for i in 0..n {
            let mut s = self.g[i];
            for j in 0..n {
                s += self.f[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }
}

/// `F = e^{A dt}` and `g = integral_0^dt e^{A s} ds B Vg`, read off the
/// exponential of the augmented matrix `[[A, B Vg], [0, 0]] dt`. No inverse
/// of `A` is needed, so integrators are handled.
pub fn affine_step(model: &ConverterModel, amp: u8, dt: f64) -> Result<AffineStep> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive and finite"));
    }
    let n = model.dim();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(model.a(amp) * dt));
    aug.view_mut((0, n), (n, 1))
        .copy_from(&(model.b(amp) * (model.vg * dt)));
    let e = expm::expm(&aug).ok_or(Error::Singular("matrix exponential"))?;
    Ok(AffineStep {
        f: e.view((0, 0), (n, n)).into_owned(),
        g: e.view((0, n), (n, 1)).column(0).into_owned(),
    })
}

pub fn step_exact(model: &ConverterModel, state: &[f64], amp: u8, dt: f64) -> Result<Vec<f64>> {
    if state.len() != model.dim() {
        return Err(Error::invalid("state", "dimension differs from the model"));
    }
    let s = affine_step(model, amp, dt)?;
    let mut out = vec![0.0; state.len()];
    s.apply(state, &mut out);
    Ok(out)
}

/// Per-pulse maps keyed by (amplitude, length in units of `dt`).
#[derive(Debug)]
pub struct StepCache<'m> {
    model: &'m ConverterModel,
    dt: f64,
    maps: HashMap<(u8, u32), AffineStep>,
}

impl<'m> StepCache<'m> {
    pub fn new(model: &'m ConverterModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", "must be positive and finite"));
        }
        Ok(StepCache {
            model,
            dt,
            maps: HashMap::new(),
        })
    }

    pub fn get(&mut self, amp: u8, units: u32) -> Result<&AffineStep> {
        use std::collections::hash_map::Entry;
        match self.maps.entry((amp, units)) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => {
                let s = affine_step(self.model, amp, self.dt * units as f64)?;
                Ok(e.insert(s))
            }
        }
    }
}
