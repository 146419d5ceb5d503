//! Discrete pulse-length distributions.
//!
//! A pulse length `l` is an integer multiple of the fundamental time quantum
//! `t_eps`. Distributions live on a contiguous support `[lmin, lmax]` with
//! `lmin >= 1`; lengths outside the support have probability zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total probability mass.
pub const NORMALIZATION_TOL: f64 = 1e-12;

const SOLVER_MAX_ITER: usize = 200;
const SOLVER_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Deterministic,
    Uniform,
    Canonical,
    Gaussian,
    Huffman,
    Custom,
}

/// Lagrange multipliers of a maximum-entropy fit, `P{l} ∝ exp(-alpha l - beta l^2)`.
///
/// Both are `None` for distributions that are not canonical fits, and for
/// canonical fits that sit on the boundary of the feasible moment set, where
/// the multipliers diverge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "DistRecord", try_from = "DistRecord")]
pub struct PulseLengthDist {
    kind: DistKind,
    lmin: u32,
    probs: Vec<f64>,
    cdf: Vec<f64>,
    diagnostics: Diagnostics,
}

/// JSON form: `{"kind", "lmin", "lmax", "probs": [[l, p], ...], "diagnostics"}`.
#[derive(Serialize, Deserialize)]
struct DistRecord {
    kind: DistKind,
    lmin: u32,
    lmax: u32,
    probs: Vec<(u32, f64)>,
    #[serde(default)]
    diagnostics: Diagnostics,
}

impl From<PulseLengthDist> for DistRecord {
    fn from(d: PulseLengthDist) -> Self {
        DistRecord {
            kind: d.kind,
            lmin: d.lmin,
            lmax: d.lmax(),
            probs: d.iter().collect(),
            diagnostics: d.diagnostics,
        }
    }
}

impl TryFrom<DistRecord> for PulseLengthDist {
    type Error = Error;

    fn try_from(r: DistRecord) -> Result<Self> {
        if r.lmax < r.lmin {
            return Err(Error::invalid("lmax", "lmax < lmin"));
        }
        let mut probs = vec![0.0; (r.lmax - r.lmin + 1) as usize];
        for (l, p) in r.probs {
            if l < r.lmin || l > r.lmax {
                return Err(Error::invalid("probs", format!("length {l} outside support")));
            }
            probs[(l - r.lmin) as usize] += p;
        }
        let mut d = PulseLengthDist::from_probs(r.kind, r.lmin, probs)?;
        d.diagnostics = r.diagnostics;
        Ok(d)
    }
}

impl PulseLengthDist {
    fn from_probs(kind: DistKind, lmin: u32, probs: Vec<f64>) -> Result<Self> {
        if lmin < 1 {
            return Err(Error::invalid("lmin", "pulse lengths start at 1"));
        }
        if probs.is_empty() {
            return Err(Error::invalid("probs", "empty support"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probs", "probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid("probs", format!("probabilities sum to {total}")));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // guard the inverse-cdf lookup against rounding in the last bin
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        Ok(PulseLengthDist {
            kind,
            lmin,
            probs,
            cdf,
            diagnostics: Diagnostics::default(),
        })
    }

    /// Normalizes non-negative weights; used by every constructor.
    fn from_weights(kind: DistKind, lmin: u32, weights: Vec<f64>) -> Result<Self> {
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::invalid("weights", "weights do not normalize"));
        }
        let probs = weights.into_iter().map(|w| w / z).collect();
        Self::from_probs(kind, lmin, probs)
    }

    /// Point mass at `l`.
    pub fn deterministic(l: u32) -> Result<Self> {
        if l < 1 {
            return Err(Error::invalid("l", "pulse length below the fundamental quantum"));
        }
        Self::from_probs(DistKind::Deterministic, l, vec![1.0])
    }

    pub fn uniform(lmin: u32, lmax: u32) -> Result<Self> {
        if lmin < 1 || lmax < lmin {
            return Err(Error::invalid("support", format!("invalid support [{lmin}, {lmax}]")));
        }
        let n = (lmax - lmin + 1) as usize;
        Self::from_weights(DistKind::Uniform, lmin, vec![1.0; n])
    }

    /// `P{l} = 2^-l / Z` on `[1, lmax]`.
    pub fn huffman(lmax: u32) -> Result<Self> {
        if lmax < 1 {
            return Err(Error::invalid("lmax", "must be >= 1"));
        }
        let weights = (1..=lmax).map(|l| 0.5f64.powi(l as i32)).collect();
        Self::from_weights(DistKind::Huffman, 1, weights)
    }

    /// Discrete normal kernel `exp(-(l - mu)^2 / (2 var))` on `[lmin, lmax]`.
    ///
    /// `mu` and `var` are kernel parameters; the moments of the result are
    /// those of the truncated, discretized kernel and generally differ from them.
    pub fn gaussian(mu: f64, var: f64, lmin: u32, lmax: u32) -> Result<Self> {
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::invalid("var", "variance must be > 0"));
        }
        if !mu.is_finite() {
            return Err(Error::invalid("mu", "must be finite"));
        }
        if lmin < 1 || lmax < lmin {
            return Err(Error::invalid("support", format!("invalid support [{lmin}, {lmax}]")));
        }
        let logw: Vec<f64> = (lmin..=lmax)
            .map(|l| -(l as f64 - mu).powi(2) / (2.0 * var))
            .collect();
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights = logw.into_iter().map(|lw| (lw - max).exp()).collect();
        Self::from_weights(DistKind::Gaussian, lmin, weights)
    }

    /// Arbitrary probabilities for lengths `lmin, lmin + 1, ...`.
    pub fn custom(lmin: u32, probs: Vec<f64>) -> Result<Self> {
        Self::from_probs(DistKind::Custom, lmin, probs)
    }

    /// Maximum-entropy distribution on `[lmin, lmax]` with `E{l} = l1` and
    /// `E{l^2} = l2`, i.e. `P{l} = exp(-alpha l - beta l^2) / Z`.
    pub fn canonical(l1: f64, l2: f64, lmin: u32, lmax: u32) -> Result<Self> {
        if lmin < 1 || lmax < lmin {
            return Err(Error::invalid("support", format!("invalid support [{lmin}, {lmax}]")));
        }
        let infeasible = || Error::InfeasibleMoments { l1, l2, lmin, lmax };
        if !l1.is_finite() || !l2.is_finite() {
            return Err(infeasible());
        }
        let (a, b) = (lmin as f64, lmax as f64);
        let tol = 1e-12 * b * b;
        if l1 < a - 1e-12 * b || l1 > b + 1e-12 * b {
            return Err(infeasible());
        }
        let l1 = l1.clamp(a, b);
        let lo = l1.floor();
        let hi = l1.ceil();
        let l2_min = l1 * l1 + (l1 - lo) * (hi - l1);
        let l2_max = (a + b) * l1 - a * b;
        if l2 < l2_min - tol || l2 > l2_max + tol {
            return Err(infeasible());
        }

        let n = (lmax - lmin + 1) as usize;
        // Boundary of the moment set: the multipliers diverge and the maximum
        // entropy solution is the unique two-point (or one-point) distribution.
        if l2 <= l2_min + tol || l2 >= l2_max - tol {
            let (x0, x1) = if l2 <= l2_min + tol { (lo, hi) } else { (a, b) };
            let mut probs = vec![0.0; n];
            if x1 == x0 {
                probs[(x0 - a) as usize] = 1.0;
            } else {
                let w1 = (l1 - x0) / (x1 - x0);
                probs[(x0 - a) as usize] += 1.0 - w1;
                probs[(x1 - a) as usize] += w1;
            }
            return Self::from_probs(DistKind::Canonical, lmin, probs);
        }

        let fit = maxent::solve(l1, l2, lmin, lmax)?;
        let mut d = Self::from_probs(DistKind::Canonical, lmin, fit.probs)?;
        d.diagnostics = Diagnostics {
            alpha: Some(fit.alpha),
            beta: Some(fit.beta),
        };
        Ok(d)
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn lmin(&self) -> u32 {
        self.lmin
    }

    pub fn lmax(&self) -> u32 {
        self.lmin + self.probs.len() as u32 - 1
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    /// Probability of length `l` (zero outside the support).
    pub fn prob(&self, l: u32) -> f64 {
        if l < self.lmin {
            return 0.0;
        }
        self.probs.get((l - self.lmin) as usize).copied().unwrap_or(0.0)
    }

    /// `(l, P{l})` over the whole support, including zero-probability lengths.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.lmin + i as u32, p))
    }

    /// Lengths with nonzero probability.
    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.iter().filter(|&(_, p)| p > 0.0)
    }

    pub fn is_point_mass(&self) -> bool {
        self.support().count() == 1
    }

    pub fn moments(&self) -> Moments {
        let (mut mean, mut second) = (0.0, 0.0);
        for (l, p) in self.iter() {
            let l = l as f64;
            mean += p * l;
            second += p * l * l;
        }
        let variance = self
            .iter()
            .map(|(l, p)| p * (l as f64 - mean).powi(2))
            .sum();
        Moments {
            mean,
            second,
            variance,
        }
    }

    /// `E{1/l}`.
    pub fn mean_inverse(&self) -> f64 {
        self.iter().map(|(l, p)| p / l as f64).sum()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// Inverse-cdf draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.probs.len() == 1 {
            return self.lmin;
        }
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        self.lmin + idx.min(self.probs.len() - 1) as u32
    }
}

mod maxent {
    //! Dual solver for the two-moment maximum-entropy problem.
    //!
    //! Features are rescaled to `u = (l - c) / s`, `u^2`, with `c` the
    //! support midpoint and `s` its half-width, so the Newton system stays well
    //! conditioned for long supports. The dual objective
    //! `log Z(theta) - theta . m` is smooth and convex.

    use super::{SOLVER_MAX_ITER, SOLVER_TOL};
    use crate::error::{Error, Result};

    pub(super) struct Fit {
        pub probs: Vec<f64>,
        pub alpha: f64,
        pub beta: f64,
    }

    struct Problem {
        u: Vec<f64>,
        target: [f64; 2],
        c: f64,
        s: f64,
        scale: [f64; 2],
    }

    struct Eval {
        log_z: f64,
        probs: Vec<f64>,
        mean: [f64; 2],
        cov: [[f64; 2]; 2],
    }

    impl Problem {
        fn eval(&self, theta: [f64; 2]) -> Eval {
            let logw: Vec<f64> = self
                .u
                .iter()
                .map(|&u| theta[0] * u + theta[1] * u * u)
                .collect();
            let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logw.iter().map(|lw| (lw - max).exp()).collect();
            let z: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|wi| wi / z).collect();
            let mut mean = [0.0; 2];
            for (p, u) in probs.iter().zip(&self.u) {
                mean[0] += p * u;
                mean[1] += p * u * u;
            }
            let mut cov = [[0.0; 2]; 2];
            for (p, u) in probs.iter().zip(&self.u) {
                let d = [u - mean[0], u * u - mean[1]];
                for i in 0..2 {
                    for j in 0..2 {
                        cov[i][j] += p * d[i] * d[j];
                    }
                }
            }
            Eval {
                log_z: max + z.ln(),
                probs,
                mean,
                cov,
            }
        }

        fn dual(&self, theta: [f64; 2], e: &Eval) -> f64 {
            e.log_z - theta[0] * self.target[0] - theta[1] * self.target[1]
        }

        /// Residual in the original moment units, relative to the targets.
        fn residual(&self, e: &Eval) -> f64 {
            let g0 = (e.mean[0] - self.target[0]).abs() * self.scale[0];
            let g1 = (e.mean[1] - self.target[1]).abs() * self.scale[1];
            g0.max(g1)
        }

        fn finish(&self, theta: [f64; 2], e: Eval) -> Fit {
            // theta0 u + theta1 u^2 expanded in powers of l
            let (c, s) = (self.c, self.s);
            let lin = theta[0] / s - 2.0 * c * theta[1] / (s * s);
            let quad = theta[1] / (s * s);
            Fit {
                probs: e.probs,
                alpha: -lin,
                beta: -quad,
            }
        }
    }

    pub(super) fn solve(l1: f64, l2: f64, lmin: u32, lmax: u32) -> Result<Fit> {
        let c = 0.5 * (lmin as f64 + lmax as f64);
        let s = (0.5 * (lmax as f64 - lmin as f64)).max(0.5);
        let u: Vec<f64> = (lmin..=lmax).map(|l| (l as f64 - c) / s).collect();
        let m1 = (l1 - c) / s;
        let m2 = (l2 - 2.0 * c * l1 + c * c) / (s * s);
        // converts a residual in u-moments to a relative residual in l-moments
        let scale = [s / l1, s * s / l2];
        let prob = Problem {
            u,
            target: [m1, m2],
            c,
            s,
            scale,
        };

        if let Some(fit) = newton(&prob) {
            return Ok(fit);
        }
        log::debug!("max-entropy Newton stalled, falling back to bisection");
        bisection(&prob)
    }

    fn newton(prob: &Problem) -> Option<Fit> {
        let mut theta = [0.0, 0.0];
        let mut e = prob.eval(theta);
        for _ in 0..SOLVER_MAX_ITER {
            if prob.residual(&e) < SOLVER_TOL * 1e-2 {
                return Some(prob.finish(theta, e));
            }
            let g = [e.mean[0] - prob.target[0], e.mean[1] - prob.target[1]];
            let h = e.cov;
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if !(det > 0.0) || !det.is_finite() {
                break;
            }
            let step = [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ];
            let f0 = prob.dual(theta, &e);
            let slope = g[0] * step[0] + g[1] * step[1];
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                let cand = [theta[0] + t * step[0], theta[1] + t * step[1]];
                let ec = prob.eval(cand);
                let fc = prob.dual(cand, &ec);
                if fc <= f0 + 1e-4 * t * slope || (fc - f0).abs() < 1e-15 * f0.abs().max(1.0) {
                    theta = cand;
                    e = ec;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (prob.residual(&e) < SOLVER_TOL).then(|| prob.finish(theta, e))
    }

    /// For fixed `theta1` the mean of `u` is increasing in `theta0`; the
    /// second moment along that curve is increasing in `theta1`.
    fn bisection(prob: &Problem) -> Result<Fit> {
        let solve_theta0 = |t1: f64| -> f64 {
            let (mut lo, mut hi) = (-1.0, 1.0);
            while prob.eval([lo, t1]).mean[0] > prob.target[0] && lo > -1e6 {
                lo *= 2.0;
            }
            while prob.eval([hi, t1]).mean[0] < prob.target[0] && hi < 1e6 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if prob.eval([mid, t1]).mean[0] < prob.target[0] {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let second = |t1: f64| prob.eval([solve_theta0(t1), t1]).mean[1];
        let (mut lo, mut hi) = (-1.0, 1.0);
        while second(lo) > prob.target[1] && lo > -1e6 {
            lo *= 2.0;
        }
        while second(hi) < prob.target[1] && hi < 1e6 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if second(mid) < prob.target[1] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t1 = 0.5 * (lo + hi);
        let theta = [solve_theta0(t1), t1];
        let e = prob.eval(theta);
        let residual = prob.residual(&e);
        if residual < SOLVER_TOL {
            Ok(prob.finish(theta, e))
        } else {
            Err(Error::NonConvergence {
                what: "max-entropy solver",
                iterations: SOLVER_MAX_ITER,
                residual,
            })
        }
    }
}

/// Parses the compact distribution notation used on the command line:
/// `det:L`, `uniform:A:B`, `huffman:N`, `gaussian:MU:VAR:A:B`,
/// `canonical:L1:L2:A:B`.
impl std::str::FromStr for PulseLengthDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::invalid("dist", format!("cannot parse `{s}`"));
        let int = |i: usize| -> Result<u32> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let real = |i: usize| -> Result<f64> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let arity = |n: usize| if parts.len() == n { Ok(()) } else { Err(bad()) };
        match parts[0] {
            "det" | "deterministic" => {
                arity(2)?;
                Self::deterministic(int(1)?)
            }
            "uniform" => {
                arity(3)?;
                Self::uniform(int(1)?, int(2)?)
            }
            "huffman" => {
                arity(2)?;
                Self::huffman(int(1)?)
            }
            "gaussian" => {
                arity(5)?;
                Self::gaussian(real(1)?, real(2)?, int(3)?, int(4)?)
            }
            "canonical" => {
                arity(5)?;
                Self::canonical(real(1)?, real(2)?, int(3)?, int(4)?)
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn assert_normalized(d: &PulseLengthDist) {
        let total: f64 = d.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() <= NORMALIZATION_TOL, "sum = {total}");
    }

    #[test]
    fn deterministic_moments() {
        let d = PulseLengthDist::deterministic(1).unwrap();
        assert_eq!(d.prob(1), 1.0);
        let m = d.moments();
        assert_eq!((m.mean, m.variance), (1.0, 0.0));

        let m = PulseLengthDist::deterministic(10).unwrap().moments();
        assert_eq!((m.mean, m.second), (10.0, 100.0));

        let m = PulseLengthDist::deterministic(3).unwrap().moments();
        assert_eq!((m.mean, m.second, m.variance), (3.0, 9.0, 0.0));
    }

    #[test]
    fn deterministic_rejects_zero() {
        assert!(PulseLengthDist::deterministic(0).is_err());
    }

    #[test]
    fn huffman_three() {
        let d = PulseLengthDist::huffman(3).unwrap();
        let expect = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (l, p) in d.iter() {
            assert!((p - expect[(l - 1) as usize]).abs() < 1e-15);
        }
        assert!((d.moments().mean - 11.0 / 7.0).abs() < 1e-15);
        assert_normalized(&d);
    }

    #[test]
    fn huffman_one_is_fastest_rs() {
        let d = PulseLengthDist::huffman(1).unwrap();
        assert_eq!(d.prob(1), 1.0);
        assert!(d.is_point_mass());
    }

    #[test]
    fn huffman_limit_moments() {
        let m = PulseLengthDist::huffman(64).unwrap().moments();
        assert!((m.mean - 2.0).abs() < 1e-10);
        assert!((m.second - 6.0).abs() < 1e-10);
        assert!((m.variance - 2.0).abs() < 1e-10);
    }

    #[test]
    fn huffman_finite_moments_by_direct_sum() {
        for n in 1..=20u32 {
            let d = PulseLengthDist::huffman(n).unwrap();
            let z: f64 = (1..=n).map(|l| 0.5f64.powi(l as i32)).sum();
            let mean: f64 = (1..=n).map(|l| l as f64 * 0.5f64.powi(l as i32)).sum::<f64>() / z;
            let second: f64 =
                (1..=n).map(|l| (l * l) as f64 * 0.5f64.powi(l as i32)).sum::<f64>() / z;
            let m = d.moments();
            assert!((m.mean - mean).abs() < 1e-13);
            assert!((m.second - second).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_one_to_five() {
        let m = PulseLengthDist::uniform(1, 5).unwrap().moments();
        assert!((m.mean - 3.0).abs() < 1e-15);
        assert!((m.second - 11.0).abs() < 1e-14);
        assert!((m.variance - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_symmetry() {
        let d = PulseLengthDist::gaussian(5.5, 4.0, 1, 10).unwrap();
        for k in 0..5 {
            assert!((d.prob(5 - k) - d.prob(6 + k)).abs() < 1e-15);
        }
        assert_normalized(&d);
    }

    #[test]
    fn gaussian_vanishing_variance_concentrates() {
        let d = PulseLengthDist::gaussian(4.3, 1e-6, 1, 10).unwrap();
        assert!((d.prob(4) - 1.0).abs() < 1e-12);
        let d = PulseLengthDist::gaussian(4.7, 1e-9, 1, 10).unwrap();
        assert!((d.prob(5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments_match_direct_sum() {
        for &(mu, var) in &[(3.0, 2.0), (7.2, 0.5), (1.0, 30.0), (12.5, 3.3)] {
            let d = PulseLengthDist::gaussian(mu, var, 2, 15).unwrap();
            let w: Vec<f64> = (2..=15).map(|l| (-(l as f64 - mu).powi(2) / (2.0 * var)).exp()).collect();
            let z: f64 = w.iter().sum();
            let mean: f64 = (2..=15).zip(&w).map(|(l, w)| l as f64 * w).sum::<f64>() / z;
            let second: f64 = (2..=15).zip(&w).map(|(l, w)| (l * l) as f64 * w).sum::<f64>() / z;
            let m = d.moments();
            assert!((m.mean - mean).abs() < 1e-12 * mean);
            assert!((m.second - second).abs() < 1e-12 * second);
        }
    }

    #[test]
    fn gaussian_rejects_nonpositive_variance() {
        assert!(PulseLengthDist::gaussian(3.0, 0.0, 1, 5).is_err());
        assert!(PulseLengthDist::gaussian(3.0, -1.0, 1, 5).is_err());
    }

    #[test]
    fn canonical_recovers_uniform() {
        let u = PulseLengthDist::uniform(1, 10).unwrap();
        let m = u.moments();
        let c = PulseLengthDist::canonical(m.mean, m.second, 1, 10).unwrap();
        for l in 1..=10 {
            assert!((c.prob(l) - 0.1).abs() < 1e-8);
        }
        let diag = c.diagnostics();
        assert!(diag.alpha.unwrap().abs() < 1e-8);
        assert!(diag.beta.unwrap().abs() < 1e-8);
    }

    #[test]
    fn canonical_point_mass_boundary() {
        let c = PulseLengthDist::canonical(3.0, 9.0, 3, 10).unwrap();
        assert_eq!(c.prob(3), 1.0);
        assert_eq!(c.diagnostics().alpha, None);
    }

    #[test]
    fn canonical_mean_two() {
        // E{l^2} = 3 would need a negative variance
        assert!(matches!(
            PulseLengthDist::canonical(2.0, 3.0, 1, 10),
            Err(Error::InfeasibleMoments { .. })
        ));
        let c = PulseLengthDist::canonical(2.0, 5.0, 1, 10).unwrap();
        let m = c.moments();
        assert!((m.mean - 2.0).abs() < 1e-9 * 2.0);
        assert!((m.second - 5.0).abs() < 1e-9 * 5.0);
        assert_normalized(&c);
    }

    #[test]
    fn canonical_infeasible() {
        // variance below the integer-lattice minimum
        assert!(matches!(
            PulseLengthDist::canonical(2.5, 6.0, 1, 10),
            Err(Error::InfeasibleMoments { .. })
        ));
        // mean outside support
        assert!(PulseLengthDist::canonical(0.5, 1.0, 1, 10).is_err());
        // second moment above the two-endpoint maximum
        assert!(PulseLengthDist::canonical(2.0, 20.0, 1, 10).is_err());
    }

    #[test]
    fn canonical_long_support_and_extreme_targets() {
        let c = PulseLengthDist::canonical(40.0, 40.0f64.powi(2) + 0.3, 1, 200).unwrap();
        let m = c.moments();
        assert!((m.mean - 40.0).abs() < 1e-9 * 40.0);
        assert!((m.second - 1600.3).abs() < 1e-9 * 1600.3);

        let c = PulseLengthDist::canonical(1.05, 1.2, 1, 30).unwrap();
        let m = c.moments();
        assert!((m.mean - 1.05).abs() < 1e-9 * 1.05);
        assert!((m.second - 1.2).abs() < 1e-9 * 1.2);
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = PulseLengthDist::huffman(8).unwrap();
        let a: Vec<u32> = {
            let mut r = rng::seeded(3);
            (0..100).map(|_| d.sample(&mut r)).collect()
        };
        let b: Vec<u32> = {
            let mut r = rng::seeded(3);
            (0..100).map(|_| d.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_deterministic() {
        let d = PulseLengthDist::deterministic(4).unwrap();
        let mut r = rng::seeded(1);
        assert!((0..1000).all(|_| d.sample(&mut r) == 4));
    }

    #[test]
    fn huffman_sampling_frequency() {
        let d = PulseLengthDist::huffman(8).unwrap();
        let mut r = rng::seeded(11);
        let n = 1_000_000;
        let ones = (0..n).filter(|_| d.sample(&mut r) == 1).count() as f64;
        let p = d.prob(1);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ones / n as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn json_round_trip() {
        let d = PulseLengthDist::canonical(2.0, 5.0, 1, 6).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"kind\":\"canonical\""));
        assert!(s.contains("\"alpha\""));
        let back: PulseLengthDist = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn parse_notation() {
        assert_eq!("det:3".parse::<PulseLengthDist>().unwrap().moments().mean, 3.0);
        assert_eq!("uniform:1:5".parse::<PulseLengthDist>().unwrap().lmax(), 5);
        assert_eq!("huffman:32".parse::<PulseLengthDist>().unwrap().kind(), DistKind::Huffman);
        assert!("gaussian:5:2:1:10".parse::<PulseLengthDist>().is_ok());
        assert!("canonical:2:5:1:6".parse::<PulseLengthDist>().is_ok());
        assert!("det".parse::<PulseLengthDist>().is_err());
        assert!("nope:1".parse::<PulseLengthDist>().is_err());
    }
}
