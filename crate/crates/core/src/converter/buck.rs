use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{covariance_equilibrium, dc_solve, ripple_transfer_mag_sq, ConverterModel};
use crate::dist::PulseLengthDist;
use crate::error::{Error, Result};
use crate::spectrum;
use crate::switching::check_probability;

/// Buck converter with inductor series resistance `r` in the conducting
/// path. States are `[i_L, v_C]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuckParams {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R")]
    pub r_load: f64,
    pub r: f64,
    #[serde(rename = "Vg")]
    pub vg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaPair {
    pub i: f64,
    pub v: f64,
}

impl BuckParams {
    pub fn new(l: f64, c: f64, r_load: f64, r: f64, vg: f64) -> Result<Self> {
        let b = BuckParams {
            l,
            c,
            r_load,
            r,
            vg,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("L", self.l), ("C", self.c), ("R", self.r_load), ("Vg", self.vg)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::invalid("r", "must be >= 0"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ConverterModel> {
        self.validate()?;
        let (l, c, rl, r) = (self.l, self.c, self.r_load, self.r);
        let a1 = DMatrix::from_row_slice(2, 2, &[-r / l, -1.0 / l, 1.0 / c, -1.0 / (rl * c)]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.0, -1.0 / l, 1.0 / c, -1.0 / (rl * c)]);
        ConverterModel::new(
            a1,
            a2,
            DVector::from_vec(vec![1.0 / l, 0.0]),
            DVector::zeros(2),
            self.vg,
            vec!["i_L".into(), "v_C".into()],
        )
    }

    /// `(V, I)` with `V = p Vg R / (R + p r)` and `I = V / R`.
    pub fn dc(&self, p: f64) -> (f64, f64) {
        let den = self.r_load + p * self.r;
        (p * self.vg * self.r_load / den, p * self.vg / den)
    }

    /// Ripple gain `R / (R + p r)`; equal to the efficiency.
    pub fn alpha(&self, p: f64) -> f64 {
        self.r_load / (self.r_load + p * self.r)
    }

    pub fn efficiency(&self, p: f64) -> f64 {
        self.alpha(p)
    }

    /// `Vg p I`.
    pub fn input_power(&self, p: f64) -> f64 {
        self.vg * self.vg * p * p / (self.r_load + p * self.r)
    }

    /// `V^2 / R`, ignoring ripple power.
    pub fn output_power(&self, p: f64) -> f64 {
        let (v, _) = self.dc(p);
        v * v / self.r_load
    }

    /// `|1 / (LC s^2 + (L/R + r p C) s + 1 + p r / R)|^2` at `s = j 2 pi f`.
    pub fn voltage_transfer_mag_sq(&self, p: f64, f: f64) -> f64 {
        let om = 2.0 * std::f64::consts::PI * f;
        let re = 1.0 + p * self.r / self.r_load - self.l * self.c * om * om;
        let im = (self.l / self.r_load + self.r * p * self.c) * om;
        1.0 / (re * re + im * im)
    }

    /// `(R^2 C^2 w^2 + 1) / R^2`: current ripple PSD over voltage ripple PSD.
    pub fn current_over_voltage(&self, f: f64) -> f64 {
        let om = 2.0 * std::f64::consts::PI * f;
        let rc = self.r_load * self.c;
        (rc * rc * om * om + 1.0) / (self.r_load * self.r_load)
    }

    pub fn nu(&self, p: f64) -> f64 {
        self.r_load * self.c * (self.r_load + p * self.r) + self.l
    }

    /// Denominator polynomial of the closed-form ripple powers. `fs` is the
    /// mean switching frequency.
    pub fn gamma(&self, p: f64, fs: f64) -> f64 {
        let (l, c, rr, r) = (self.l, self.c, self.r_load, self.r);
        let ts = 1.0 / fs;
        2.0 * p * r * c * c * l * rr.powi(3) - 2.0 * ts * c * l * rr.powi(3)
            - p * r * r * ts * c * c * rr.powi(3)
            + 2.0 * c * l * l * rr * rr
            + 2.0 * p * p * r * r * c * c * l * rr * rr
            - 6.0 * p * r * ts * c * l * rr * rr
            - p * p * r.powi(3) * ts * c * c * rr * rr
            + 2.0 * p * r * c * l * l * rr
            - ts * l * l * rr
            - 3.0 * p * p * r * r * ts * c * l * rr
            - p * r * r * ts * c * l * rr
            - p * r * ts * l * l
    }

    /// Closed-form ripple standard deviations. The voltage term uses
    /// `sigma_v^2 = sigma_i^2 L R^2 / nu`, which is the dimensionally
    /// consistent form and reduces to `Vg^2 p(1-p) R / (2 L fs)` when `r = 0`.
    pub fn sigma_closed_form(&self, p: f64, fs: f64) -> SigmaPair {
        let a = self.alpha(p);
        let nu = self.nu(p);
        let si2 = self.r_load * self.c * p * (1.0 - p) * self.vg * self.vg / fs * a * a * nu
            / self.gamma(p, fs);
        let sv2 = si2 * self.l * self.r_load * self.r_load / nu;
        SigmaPair {
            i: si2.sqrt(),
            v: sv2.sqrt(),
        }
    }

    /// `sigma_v` from the variant `sigma_v^2 = sigma_i^2 L R^3 / nu`, which is
    /// off by a factor `sqrt(R / 1 Ohm)`; kept for comparison.
    pub fn sigma_v_r_cubed(&self, p: f64, fs: f64) -> f64 {
        let s = self.sigma_closed_form(p, fs);
        (s.i * s.i * self.l * self.r_load.powi(3) / self.nu(p)).sqrt()
    }

    /// Low-frequency level of the output voltage ripple PSD:
    /// `eta^4 Vg^2 S_qq(0)` with `S_qq(0) = p(1-p) t_eps (E{l} + V{l}/E{l})`.
    pub fn lf_floor(&self, p: f64, dist: &PulseLengthDist, t_eps: f64) -> f64 {
        self.alpha(p).powi(4) * self.vg * self.vg * spectrum::lf_noise_level(p, dist, t_eps)
    }

    /// Same level with a single power of `eta`; kept for comparison.
    pub fn lf_floor_eta1(&self, p: f64, dist: &PulseLengthDist, t_eps: f64) -> f64 {
        self.alpha(p) * self.vg * self.vg * spectrum::lf_noise_level(p, dist, t_eps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuckReport {
    pub params: BuckParams,
    pub p: f64,
    pub t_eps: f64,
    pub v: f64,
    pub i: f64,
    pub alpha: f64,
    pub eta: f64,
    pub p_in: f64,
    pub p_out: f64,
    /// Mean switching frequency `1 / (E{l} t_eps)`.
    pub f_s: f64,
    pub lf_floor: f64,
    pub lf_floor_eta1: f64,
    /// Same floor through the generic transfer function and `psd_frs`.
    pub lf_floor_pipeline: f64,
    /// Best case floor (`l = 1` always), `eta^4 Vg^2 p(1-p) t_eps`.
    pub limit_floor: f64,
    pub limit_floor_eta1: f64,
    /// Pulse-boundary covariance recursion.
    pub sigma: SigmaPair,
    pub sigma_closed_form: SigmaPair,
    pub sigma_v_r_cubed: f64,
    pub nu: f64,
    pub gamma: f64,
}

pub fn buck_analysis(
    params: &BuckParams,
    p: f64,
    dist: &PulseLengthDist,
    t_eps: f64,
) -> Result<BuckReport> {
    check_probability("p", p)?;
    if !(t_eps > 0.0) {
        return Err(Error::invalid("t_eps", "must be positive"));
    }
    let model = params.model()?;
    let op = dc_solve(&model, p)?;
    let transfer = ripple_transfer_mag_sq(&model, p)?;
    let h0 = transfer.mag_sq(0.0)?;
    let s0 = spectrum::psd_frs(p, dist, t_eps, &[0.0])?.noise[0];
    let cov = covariance_equilibrium(&model, p, dist, t_eps)?;
    let f_s = 1.0 / (dist.moments().mean * t_eps);
    let eta = params.efficiency(p);
    let vg2 = params.vg * params.vg;
    Ok(BuckReport {
        params: *params,
        p,
        t_eps,
        v: op.x[1],
        i: op.x[0],
        alpha: params.alpha(p),
        eta,
        p_in: params.input_power(p),
        p_out: params.output_power(p),
        f_s,
        lf_floor: params.lf_floor(p, dist, t_eps),
        lf_floor_eta1: params.lf_floor_eta1(p, dist, t_eps),
        lf_floor_pipeline: h0[1] * vg2 * s0,
        limit_floor: eta.powi(4) * vg2 * p * (1.0 - p) * t_eps,
        limit_floor_eta1: eta * vg2 * p * (1.0 - p) * t_eps,
        sigma: SigmaPair {
            i: cov.sigma(0),
            v: cov.sigma(1),
        },
        sigma_closed_form: params.sigma_closed_form(p, f_s),
        sigma_v_r_cubed: params.sigma_v_r_cubed(p, f_s),
        nu: params.nu(p),
        gamma: params.gamma(p, f_s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> BuckParams {
        BuckParams::new(1e-3, 1e-4, 10.0, 0.1, 12.0).unwrap()
    }

    #[test]
    fn closed_forms() {
        let b = example();
        let (v, i) = b.dc(0.5);
        assert!((v - 5.970149253731343).abs() < 1e-12);
        assert!((i - 0.5970149253731343).abs() < 1e-13);
        assert!((b.efficiency(0.5) - 10.0 / 10.05).abs() < 1e-15);
        assert!((b.output_power(0.5) / b.input_power(0.5) - b.efficiency(0.5)).abs() < 1e-14);
        assert!(BuckParams::new(1.0, 1.0, 1.0, -0.1, 1.0).is_err());
        assert!(BuckParams::new(0.0, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn lossless_limits() {
        let b = BuckParams::new(1e-3, 1e-4, 10.0, 0.0, 12.0).unwrap();
        assert_eq!(b.efficiency(0.3), 1.0);
        assert!((b.dc(0.3).0 - 0.3 * 12.0).abs() < 1e-15);
        let d = PulseLengthDist::uniform(1, 4).unwrap();
        let m = d.moments();
        let t = 1e-6;
        let want = 144.0 * 0.21 * t * (m.mean + m.variance / m.mean);
        assert!((b.lf_floor(0.3, &d, t) - want).abs() < 1e-12 * want);
        assert_eq!(b.lf_floor(0.3, &d, t), b.lf_floor_eta1(0.3, &d, t));
    }

    #[test]
    fn lossless_sigma_leading_order() {
        // r = 0 and fs large: sigma_v^2 -> Vg^2 p(1-p) R / (2 L fs),
        // sigma_i^2 -> Vg^2 p(1-p) (R^2 C + L) / (2 L^2 R fs)
        let b = BuckParams::new(1e-3, 1e-4, 10.0, 0.0, 12.0).unwrap();
        let fs = 1e9;
        let s = b.sigma_closed_form(0.5, fs);
        let sv2 = 144.0 * 0.25 * 10.0 / (2.0 * 1e-3 * fs);
        let si2 = 144.0 * 0.25 * (100.0 * 1e-4 + 1e-3) / (2.0 * 1e-6 * 10.0 * fs);
        assert!((s.v * s.v / sv2 - 1.0).abs() < 1e-4);
        assert!((s.i * s.i / si2 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn transfer_dc_gain() {
        let b = example();
        let h0 = b.voltage_transfer_mag_sq(0.5, 0.0);
        assert!((h0 - b.alpha(0.5).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn report_floors_agree() {
        let b = example();
        let d = PulseLengthDist::uniform(1, 3).unwrap();
        let rep = buck_analysis(&b, 0.5, &d, 1e-6).unwrap();
        assert!((rep.lf_floor - rep.lf_floor_pipeline).abs() < 1e-9 * rep.lf_floor);
        assert!(rep.lf_floor < rep.lf_floor_eta1);
        assert!((rep.v - b.dc(0.5).0).abs() < 1e-12);
    }
}
