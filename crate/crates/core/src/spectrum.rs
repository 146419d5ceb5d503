//! Power spectral densities of RS/FRS switching functions.
//!
//! A spectrum is stored as a continuous noise density on a two-sided
//! frequency grid plus the weight of the DC impulse:
//! `S(f) = noise(f) + dc_weight * delta(f)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::PulseLengthDist;
use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::rng;
use crate::switching::{self, SwitchPolicy, SwitchSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdCurve {
    pub freqs: Vec<f64>,
    pub noise: Vec<f64>,
    pub dc_weight: f64,
}

impl PsdCurve {
    pub fn new(freqs: Vec<f64>, noise: Vec<f64>, dc_weight: f64) -> Result<Self> {
        if freqs.len() != noise.len() {
            return Err(Error::invalid("noise", "length differs from the frequency grid"));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("freqs", "grid must be strictly increasing"));
        }
        Ok(PsdCurve {
            freqs,
            noise,
            dc_weight,
        })
    }

    fn from_fn(freqs: &[f64], dc_weight: f64, f: impl Fn(f64) -> f64 + Sync) -> Self {
        PsdCurve {
            freqs: freqs.to_vec(),
            noise: freqs.iter().map(|&x| f(x)).collect(),
            dc_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.noise.iter().all(|&v| v >= 0.0) && self.dc_weight >= 0.0
    }

    /// Largest `|noise(f) - noise(-f)|` relative to the peak, over grid points
    /// whose mirror image is also on the grid.
    pub fn asymmetry(&self) -> f64 {
        let peak = self.noise.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let n = self.freqs.len();
        (0..n / 2)
            .filter(|&i| (self.freqs[i] + self.freqs[n - 1 - i]).abs() <= 1e-12 * self.freqs[i].abs())
            .map(|i| (self.noise[i] - self.noise[n - 1 - i]).abs() / peak)
            .fold(0.0, f64::max)
    }

    pub fn with_dc(mut self, dc_weight: f64) -> Self {
        self.dc_weight = dc_weight;
        self
    }

    /// Columns `f_hz, noise` with the DC weight in a header comment; `db`
    /// adds `noise_db = 10 log10(noise)`.
    pub fn to_csv(&self, db: bool) -> CsvTable {
        let mut t = CsvTable::new(&["f_hz", "noise"]);
        t.comment(format!("dc_weight={}", self.dc_weight));
        for (f, v) in self.freqs.iter().zip(&self.noise) {
            t.float_row(&[*f, *v]);
        }
        if db {
            let dbs: Vec<f64> = self.noise.iter().map(|v| to_db(*v)).collect();
            t.push_column("noise_db", &dbs);
        }
        t
    }
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Two-sided grid: `n_per_side` log-spaced points on `[f_lo, f_hi]`, their
/// mirror images, and `f = 0`.
pub fn symmetric_log_grid(f_lo: f64, f_hi: f64, n_per_side: usize) -> Vec<f64> {
    assert!(f_lo > 0.0 && f_hi > f_lo && n_per_side >= 2);
    let ratio = (f_hi / f_lo).ln() / (n_per_side - 1) as f64;
    let pos: Vec<f64> = (0..n_per_side)
        .map(|i| f_lo * (ratio * i as f64).exp())
        .collect();
    let mut grid: Vec<f64> = pos.iter().rev().map(|f| -f).collect();
    grid.push(0.0);
    grid.extend(pos);
    grid
}

/// Default analysis grid: 1024 log-spaced points per side over
/// `[1e-3, 50] / t_eps`, mirrored, plus DC.
pub fn default_grid(t_eps: f64) -> Vec<f64> {
    symmetric_log_grid(1e-3 / t_eps, 50.0 / t_eps, 1024)
}

/// `sin^2(pi f T) / (pi f)^2`, the squared magnitude of the Fourier transform
/// of a unit rectangle of width `t`.
pub fn rect_transform_sq(f: f64, t: f64) -> f64 {
    let x = PI * f * t;
    if x.abs() < 1e-6 {
        t * t * (1.0 - x * x / 3.0)
    } else {
        let s = x.sin() / (PI * f);
        s * s
    }
}

/// RS spectrum with pulse length `l t_eps`:
/// `p(1-p) sin^2(pi f t_l) / (t_l (pi f)^2) + p^2 delta(f)`.
pub fn psd_rs(p: f64, l: u32, t_eps: f64, freqs: &[f64]) -> Result<PsdCurve> {
    switching::check_probability("p", p)?;
    if l < 1 {
        return Err(Error::invalid("l", "must be >= 1"));
    }
    let t_l = l as f64 * t_eps;
    let var = p * (1.0 - p);
    Ok(PsdCurve::from_fn(freqs, p * p, |f| {
        var * rect_transform_sq(f, t_l) / t_l
    }))
}

/// FRS spectrum: `p(1-p) / (E{l} t_eps) * E_l{ sin^2(pi f l t_eps) / (pi f)^2 } + p^2 delta(f)`.
pub fn psd_frs(p: f64, dist: &PulseLengthDist, t_eps: f64, freqs: &[f64]) -> Result<PsdCurve> {
    switching::check_probability("p", p)?;
    let mean = dist.moments().mean;
    let gain = p * (1.0 - p) / (mean * t_eps);
    let support: Vec<(f64, f64)> = dist
        .support()
        .map(|(l, w)| (l as f64 * t_eps, w))
        .collect();
    Ok(PsdCurve::from_fn(freqs, p * p, |f| {
        gain * support
            .iter()
            .map(|&(t, w)| w * rect_transform_sq(f, t))
            .sum::<f64>()
    }))
}

/// Lorentzian envelope `S_e(f) = 2 G w / (w^2 + (2 pi f)^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Total noise power.
    pub g: f64,
    /// Corner parameter, rad/s.
    pub w: f64,
}

impl EnvelopeFit {
    pub fn eval(&self, f: f64) -> f64 {
        let x = 2.0 * PI * f / self.w;
        self.lf_level() / (1.0 + x * x)
    }

    /// `S_e(0) = 2 G / w`.
    pub fn lf_level(&self) -> f64 {
        2.0 * self.g / self.w
    }

    /// `G = 0` happens for `p` in `{0, 1}`: nothing switches.
    pub fn is_degenerate(&self) -> bool {
        self.g == 0.0
    }

    pub fn corner_hz(&self) -> f64 {
        self.w / (2.0 * PI)
    }

    /// `integral_{f1}^{f2} S_e(f) df` in closed form.
    pub fn integral_between(&self, f1: f64, f2: f64) -> f64 {
        let a = |f: f64| (2.0 * PI * f / self.w).atan();
        self.g / PI * (a(f2) - a(f1))
    }

    /// Integral over the whole real line; equals `G`.
    pub fn integral(&self) -> f64 {
        self.integral_between(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn curve(&self, freqs: &[f64]) -> PsdCurve {
        PsdCurve::from_fn(freqs, 0.0, |f| self.eval(f))
    }
}

pub fn envelope_eval(fit: &EnvelopeFit, f: f64) -> f64 {
    fit.eval(f)
}

/// Matches total noise power and the zero-frequency level:
/// `G = p(1-p)`, `w = 2 E{l} / (t_eps E{l^2})`.
pub fn fit_envelope(p: f64, dist: &PulseLengthDist, t_eps: f64) -> Result<EnvelopeFit> {
    switching::check_probability("p", p)?;
    let m = dist.moments();
    Ok(EnvelopeFit {
        g: p * (1.0 - p),
        w: 2.0 * m.mean / (t_eps * m.second),
    })
}

/// Zero-frequency noise level `p(1-p) (E{l^2} / E{l}) t_eps`.
///
/// Evaluated through the envelope, so `fit_envelope(..).eval(0.0)` agrees
/// bit for bit.
pub fn lf_noise_level(p: f64, dist: &PulseLengthDist, t_eps: f64) -> f64 {
    let m = dist.moments();
    let fit = EnvelopeFit {
        g: p * (1.0 - p),
        w: 2.0 * m.mean / (t_eps * m.second),
    };
    fit.lf_level()
}

/// `|H(f)|^2` applied pointwise; the DC weight is scaled by `|H(0)|^2`.
pub fn filter_psd(input: &PsdCurve, h_mag_sq: impl Fn(f64) -> f64) -> Result<PsdCurve> {
    let mut noise = Vec::with_capacity(input.len());
    for (&f, &v) in input.freqs.iter().zip(&input.noise) {
        let h = h_mag_sq(f);
        if !(h >= 0.0) {
            return Err(Error::invalid("h_mag_sq", format!("negative or NaN gain {h} at f={f}")));
        }
        noise.push(h * v);
    }
    let h0 = h_mag_sq(0.0);
    if !(h0 >= 0.0) {
        return Err(Error::invalid("h_mag_sq", "negative DC gain"));
    }
    Ok(PsdCurve {
        freqs: input.freqs.clone(),
        noise,
        dc_weight: input.dc_weight * h0,
    })
}

/// Spectrum of `x = a q + b` given the spectrum of `q` and its mean.
pub fn mix_affine(a: f64, b: f64, input: &PsdCurve, mean_q: f64) -> PsdCurve {
    PsdCurve {
        freqs: input.freqs.clone(),
        noise: input.noise.iter().map(|v| a * a * v).collect(),
        dc_weight: a * a * input.dc_weight + 2.0 * a * b * mean_q + b * b,
    }
}

/// Spectrum of `w = a dy/dt + b y`: `(a^2 omega^2 + b^2) S_yy`. Cross terms
/// cancel, and the DC impulse of `dy/dt` vanishes.
pub fn mix_derivative(a: f64, b: f64, input: &PsdCurve) -> PsdCurve {
    PsdCurve {
        freqs: input.freqs.clone(),
        noise: input
            .freqs
            .iter()
            .zip(&input.noise)
            .map(|(&f, &v)| {
                let om = 2.0 * PI * f;
                (a * a * om * om + b * b) * v
            })
            .collect(),
        dc_weight: b * b * input.dc_weight,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TotalPsd {
    /// `quadrature + tail + dc`.
    pub value: f64,
    pub quadrature: f64,
    pub tail: f64,
    pub dc: f64,
    /// Set when the tail estimate exceeds 1% of the quadrature.
    pub tail_warning: bool,
}

/// Total power: trapezoid quadrature over the grid, a `c / f^2` tail past
/// each grid edge, and the DC weight.
///
/// The tail constant `c` is the mean of `noise * f^2` over the outermost
/// decade, weighted by `1/f^2`, which averages out oscillating roll-offs.
pub fn total_psd(curve: &PsdCurve) -> TotalPsd {
    let f = &curve.freqs;
    let s = &curve.noise;
    let quadrature: f64 = f
        .windows(2)
        .zip(s.windows(2))
        .map(|(fw, sw)| 0.5 * (fw[1] - fw[0]) * (sw[0] + sw[1]))
        .sum();

    let side_tail = |pts: Vec<(f64, f64)>| -> f64 {
        // pts: (|f|, noise), increasing |f|
        let Some(&(edge, _)) = pts.last() else {
            return 0.0;
        };
        if edge <= 0.0 {
            return 0.0;
        }
        let band: Vec<(f64, f64)> = pts.into_iter().filter(|&(x, _)| x >= edge / 10.0).collect();
        if band.len() < 3 {
            return 0.0;
        }
        let lo = band[0].0;
        let area: f64 = band
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum();
        let c = area / (1.0 / lo - 1.0 / edge);
        c / edge
    };
    let pos: Vec<(f64, f64)> = f
        .iter()
        .zip(s)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, v)| (*x, *v))
        .collect();
    let neg: Vec<(f64, f64)> = f
        .iter()
        .zip(s)
        .rev()
        .filter(|(x, _)| **x < 0.0)
        .map(|(x, v)| (-*x, *v))
        .collect();
    let tail = side_tail(pos) + side_tail(neg);
    let tail_warning = tail > 0.01 * quadrature.abs();
    if tail_warning {
        log::warn!(
            "PSD tail beyond the grid is {:.3}% of the in-grid integral",
            100.0 * tail / quadrature
        );
    }
    TotalPsd {
        value: quadrature + tail + curve.dc_weight,
        quadrature,
        tail,
        dc: curve.dc_weight,
        tail_warning,
    }
}

/// Duration-weighted mean of a piecewise-constant record given as
/// `(duration, value)` segments.
pub fn time_average(segments: &[(f64, f64)]) -> Result<f64> {
    let total: f64 = segments.iter().map(|(d, _)| d).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroDuration);
    }
    Ok(segments.iter().map(|(d, v)| d * v).sum::<f64>() / total)
}

/// `|Q(f)|^2 / duration` for one realization with `mean` subtracted from the
/// amplitudes. `Q` is evaluated in closed form from the pulse edges:
/// `Q(f) = sum_k c_k (e^{-j w T_k} - e^{-j w T_{k+1}}) / (j w)`.
pub fn periodogram(seq: &SwitchSequence, mean: f64, freqs: &[f64]) -> Vec<f64> {
    let t = seq.t_eps;
    let duration = seq.duration();
    let lmax = seq.lens.iter().copied().max().unwrap_or(1) as usize;
    let centered: Vec<f64> = seq.amps.iter().map(|&a| a as f64 - mean).collect();
    let mut powers = vec![Complex64::new(1.0, 0.0); lmax + 1];
    freqs
        .iter()
        .map(|&f| {
            if f == 0.0 {
                let q: f64 = centered
                    .iter()
                    .zip(&seq.lens)
                    .map(|(c, &l)| c * l as f64 * t)
                    .sum();
                return q * q / duration;
            }
            let om = 2.0 * PI * f;
            let z = Complex64::from_polar(1.0, -om * t);
            for l in 1..=lmax {
                powers[l] = powers[l - 1] * z;
            }
            let mut phase = Complex64::new(1.0, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, &l) in centered.iter().zip(&seq.lens) {
                let next = phase * powers[l as usize];
                acc += (phase - next) * *c;
                phase = next;
            }
            acc.norm_sqr() / (om * om) / duration
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    /// Trial-averaged noise estimate, with the DC weight set to the mean of
    /// the squared record means.
    pub curve: PsdCurve,
    /// Points with `|f|` below this sit inside the finite-record DC lobe.
    pub dc_cutoff_hz: f64,
    pub trials: usize,
    pub mean_duration: f64,
}

/// Monte-Carlo spectrum of `policy`: the trial average of closed-form
/// periodograms of independent `n_pulses`-pulse records. Trial `i` draws from
/// stream `i` of `seed`; results are reduced in trial order.
///
/// Amplitudes are centered on the ensemble mean `p` before transforming, so
/// the estimate targets the continuous part of the spectrum only.
pub fn mc_psd_estimate(
    policy: &SwitchPolicy,
    n_pulses: usize,
    n_trials: usize,
    freqs: &[f64],
    seed: u64,
) -> Result<McEstimate> {
    if n_trials < 1 {
        return Err(Error::invalid("n_trials", "must be >= 1"));
    }
    if n_pulses < 1 {
        return Err(Error::invalid("n_pulses", "must be >= 1"));
    }
    if n_pulses < 100 {
        log::warn!("{n_pulses} pulses per record is short; expect a wide DC lobe");
    }
    let trials: Vec<(Vec<f64>, f64, f64)> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let seq = switching::generate(policy, n_pulses, &mut r)?;
            let m = seq.time_mean();
            Ok((periodogram(&seq, policy.p, freqs), m * m, seq.duration()))
        })
        .collect::<Result<_>>()?;

    let mut noise = vec![0.0; freqs.len()];
    let (mut dc, mut dur) = (0.0, 0.0);
    for (pg, m2, d) in &trials {
        for (acc, v) in noise.iter_mut().zip(pg) {
            *acc += v;
        }
        dc += m2;
        dur += d;
    }
    let n = n_trials as f64;
    noise.iter_mut().for_each(|v| *v /= n);
    let mean_duration = dur / n;
    Ok(McEstimate {
        curve: PsdCurve {
            freqs: freqs.to_vec(),
            noise,
            dc_weight: dc / n,
        },
        dc_cutoff_hz: 2.0 / mean_duration,
        trials: n_trials,
        mean_duration,
    })
}

/// RMS of `(estimate - reference) / reference` over grid points with
/// `|f| >= f_min` and a positive reference.
pub fn rms_relative_error(estimate: &PsdCurve, reference: &PsdCurve, f_min: f64) -> f64 {
    let (sum, n) = estimate
        .freqs
        .iter()
        .zip(estimate.noise.iter().zip(&reference.noise))
        .filter(|(f, (_, r))| f.abs() >= f_min && **r > 0.0)
        .fold((0.0, 0usize), |(s, n), (_, (e, r))| {
            (s + ((e - r) / r).powi(2), n + 1)
        });
    if n == 0 {
        return f64::NAN;
    }
    (sum / n as f64).sqrt()
}
