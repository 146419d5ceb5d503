//! Switching sequences for random switching (RS) and fully random switching
//! (FRS), plus transition counting and switching-loss accounting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::PulseLengthDist;
use crate::error::{Error, Result};
use crate::io::{fmt_float, CsvTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Every pulse has the same length.
    Rs,
    /// Pulse lengths drawn i.i.d. from a distribution.
    Frs,
}

/// Open-loop switching law: `P{a_k = 1} = p`, pulse lengths from `pulse_dist`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchPolicy {
    pub p: f64,
    pub pulse_dist: PulseLengthDist,
    pub t_eps: f64,
}

impl SwitchPolicy {
    pub fn new(p: f64, pulse_dist: PulseLengthDist, t_eps: f64) -> Result<Self> {
        check_probability("p", p)?;
        if !(t_eps > 0.0) || !t_eps.is_finite() {
            return Err(Error::invalid("t_eps", "must be > 0"));
        }
        Ok(SwitchPolicy { p, pulse_dist, t_eps })
    }

    /// RS with every pulse `l` quanta long.
    pub fn rs(p: f64, l: u32, t_eps: f64) -> Result<Self> {
        Self::new(p, PulseLengthDist::deterministic(l)?, t_eps)
    }

    pub fn scheme(&self) -> Scheme {
        if self.pulse_dist.is_point_mass() {
            Scheme::Rs
        } else {
            Scheme::Frs
        }
    }
}

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(name, format!("{p} is not a probability")));
    }
    Ok(())
}

/// A realized switching waveform `q(t) = sum_k a_k rect((t - T_k) / (l_k t_eps))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchSequence {
    pub t_eps: f64,
    pub amps: Vec<u8>,
    pub lens: Vec<u32>,
}

impl SwitchSequence {
    pub fn new(t_eps: f64, amps: Vec<u8>, lens: Vec<u32>) -> Result<Self> {
        if !(t_eps > 0.0) {
            return Err(Error::invalid("t_eps", "must be > 0"));
        }
        if amps.len() != lens.len() {
            return Err(Error::invalid("amps", "amps and lens differ in length"));
        }
        if amps.iter().any(|&a| a > 1) {
            return Err(Error::invalid("amps", "amplitudes must be 0 or 1"));
        }
        if lens.iter().any(|&l| l < 1) {
            return Err(Error::invalid("lens", "pulse lengths must be >= 1"));
        }
        Ok(SwitchSequence { t_eps, amps, lens })
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    /// Pulse start offsets in quanta; `T_0 = 0`.
    pub fn start_quanta(&self) -> Vec<u64> {
        let mut acc = 0u64;
        self.lens
            .iter()
            .map(|&l| {
                let s = acc;
                acc += l as u64;
                s
            })
            .collect()
    }

    /// Pulse start times `T_k` in seconds.
    pub fn starts(&self) -> Vec<f64> {
        self.start_quanta()
            .into_iter()
            .map(|q| q as f64 * self.t_eps)
            .collect()
    }

    pub fn total_quanta(&self) -> u64 {
        self.lens.iter().map(|&l| l as u64).sum()
    }

    pub fn duration(&self) -> f64 {
        self.total_quanta() as f64 * self.t_eps
    }

    /// Time-weighted mean of `q`; equals the time-weighted mean of `q^2`.
    pub fn time_mean(&self) -> f64 {
        let on: u64 = self
            .amps
            .iter()
            .zip(&self.lens)
            .map(|(&a, &l)| a as u64 * l as u64)
            .sum();
        on as f64 / self.total_quanta() as f64
    }

    pub fn count_transitions(&self) -> (u64, u64) {
        count_transitions(&self.amps)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["k", "a_k", "ell_k", "t_start_seconds"]);
        t.comment(format!("t_eps_seconds={}", fmt_float(self.t_eps)));
        for (k, ((a, l), s)) in self
            .amps
            .iter()
            .zip(&self.lens)
            .zip(self.starts())
            .enumerate()
        {
            t.row(vec![k.to_string(), a.to_string(), l.to_string(), fmt_float(s)]);
        }
        t
    }
}

/// Draws `n_pulses` i.i.d. amplitudes and lengths from `policy`.
pub fn generate<R: Rng + ?Sized>(
    policy: &SwitchPolicy,
    n_pulses: usize,
    rng: &mut R,
) -> Result<SwitchSequence> {
    if n_pulses < 1 {
        return Err(Error::invalid("n_pulses", "must be >= 1"));
    }
    let mut amps = Vec::with_capacity(n_pulses);
    let mut lens = Vec::with_capacity(n_pulses);
    for _ in 0..n_pulses {
        amps.push(draw_amplitude(policy.p, rng));
        lens.push(policy.pulse_dist.sample(rng));
    }
    Ok(SwitchSequence {
        t_eps: policy.t_eps,
        amps,
        lens,
    })
}

/// Bernoulli draw; `p = 1` always gives 1 and `p = 0` always gives 0.
pub fn draw_amplitude<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u8 {
    let u: f64 = rng.gen();
    (u < p) as u8
}

/// Duty-cycle estimate over `n` quanta: `(p, sqrt(p(1-p)/n))`.
pub fn duty_estimate(n: u64, p: f64) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    check_probability("p", p)?;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

/// Turn-on and turn-off counts. The first pulse has no predecessor and
/// contributes no transition.
pub fn count_transitions(amps: &[u8]) -> (u64, u64) {
    amps.windows(2).fold((0, 0), |(on, off), w| match (w[0], w[1]) {
        (0, 1) => (on + 1, off),
        (1, 0) => (on, off + 1),
        _ => (on, off),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    /// Joules per turn-on.
    pub w_on: f64,
    /// Joules per turn-off.
    pub w_off: f64,
}

impl LossModel {
    pub fn new(w_on: f64, w_off: f64) -> Result<Self> {
        if !(w_on >= 0.0) || !(w_off >= 0.0) {
            return Err(Error::invalid("loss", "switching energies must be >= 0"));
        }
        Ok(LossModel { w_on, w_off })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwitchLoss {
    /// Average expected loss `(W_on + W_off) p (1-p) f_s`, Watts.
    pub expected_w: f64,
    /// Loss of an RPWM scheme at the same average switching frequency,
    /// `(W_on + W_off) f_s`.
    pub rpwm_bound_w: f64,
    /// Time-averaged pulse rate `1 / (E{l} t_eps)`, Hz.
    pub mean_switching_freq: f64,
    /// Ensemble average `E{1 / (l t_eps)}`, Hz. Reported only.
    pub ensemble_inverse_freq: f64,
}

pub fn expected_switch_loss(policy: &SwitchPolicy, loss: &LossModel) -> SwitchLoss {
    let m = policy.pulse_dist.moments();
    let fs = 1.0 / (m.mean * policy.t_eps);
    let w = loss.w_on + loss.w_off;
    let p = policy.p;
    SwitchLoss {
        expected_w: w * p * (1.0 - p) * fs,
        rpwm_bound_w: w * fs,
        mean_switching_freq: fs,
        ensemble_inverse_freq: policy.pulse_dist.mean_inverse() / policy.t_eps,
    }
}

/// Loss of a realization: transition energies over the record duration.
pub fn sequence_loss(seq: &SwitchSequence, loss: &LossModel) -> f64 {
    let (on, off) = seq.count_transitions();
    (on as f64 * loss.w_on + off as f64 * loss.w_off) / seq.duration()
}

/// Fixed-duty RPPM waveforms in a period of `n` quanta with `m` on-quanta.
pub fn count_rppm_sequences(n: u64, m: u64) -> Result<u64> {
    if m > n {
        return Err(Error::invalid("m", "on-time exceeds the period"));
    }
    Ok(n - m + 1)
}

/// RPPM with random carrier frequency: periods `N_i = nmin + i`, on-times
/// `m_i = mmin + i`, `i = 0..=nmax-nmin`.
pub fn count_rcf_rppm_sequences(nmin: u64, nmax: u64, mmin: u64) -> Result<u64> {
    if !(1 <= mmin && mmin <= nmin && nmin <= nmax) {
        return Err(Error::invalid(
            "periods",
            "require 1 <= mmin <= nmin <= nmax",
        ));
    }
    (0..=nmax - nmin).try_fold(0u64, |acc, i| Ok(acc + count_rppm_sequences(nmin + i, mmin + i)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn p_one_is_constant_on() {
        let pol = SwitchPolicy::rs(1.0, 1, 1.0).unwrap();
        let s = generate(&pol, 1000, &mut rng::seeded(1)).unwrap();
        assert!(s.amps.iter().all(|&a| a == 1));
        assert_eq!(s.count_transitions(), (0, 0));
    }

    #[test]
    fn bernoulli_mean() {
        let pol = SwitchPolicy::rs(0.5, 1, 1.0).unwrap();
        let n = 100_000;
        let s = generate(&pol, n, &mut rng::seeded(2)).unwrap();
        let mean = s.amps.iter().map(|&a| a as f64).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn frs_uniform_mean_length() {
        let pol = SwitchPolicy::new(0.5, PulseLengthDist::uniform(1, 5).unwrap(), 1.0).unwrap();
        let n = 100_000;
        let s = generate(&pol, n, &mut rng::seeded(3)).unwrap();
        let mean = s.lens.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn starts_are_cumulative() {
        let s = SwitchSequence::new(0.25, vec![1, 0, 1], vec![2, 3, 1]).unwrap();
        assert_eq!(s.starts(), vec![0.0, 0.5, 1.25]);
        assert_eq!(s.duration(), 1.5);
    }

    #[test]
    fn invalid_sequences() {
        assert!(SwitchSequence::new(1.0, vec![2], vec![1]).is_err());
        assert!(SwitchSequence::new(1.0, vec![1], vec![0]).is_err());
        assert!(SwitchSequence::new(1.0, vec![1, 0], vec![1]).is_err());
        assert!(SwitchSequence::new(0.0, vec![1], vec![1]).is_err());
    }

    #[test]
    fn duty_band() {
        assert_eq!(duty_estimate(100, 0.5).unwrap(), (0.5, 0.05));
        assert_eq!(duty_estimate(10, 0.0).unwrap().1, 0.0);
        assert_eq!(duty_estimate(10, 1.0).unwrap().1, 0.0);
        assert!(duty_estimate(0, 0.5).is_err());
        assert!(duty_estimate(10, 1.5).is_err());
    }

    #[test]
    fn transitions_small_example() {
        assert_eq!(count_transitions(&[0, 1, 1, 0, 1]), (2, 1));
        assert_eq!(count_transitions(&[1, 1, 1]), (0, 0));
        assert_eq!(count_transitions(&[0]), (0, 0));
    }

    #[test]
    fn transition_rate() {
        let pol = SwitchPolicy::rs(0.5, 1, 1.0).unwrap();
        let m = 200_000;
        let s = generate(&pol, m, &mut rng::seeded(5)).unwrap();
        let (on, _) = s.count_transitions();
        let rate = on as f64 / m as f64;
        // n_on is a sum of 1-dependent indicators; var per pair <= p(1-p)
        let se = (0.25 / m as f64).sqrt();
        assert!((rate - 0.25).abs() < 3.0 * se);
    }

    #[test]
    fn loss_examples() {
        let loss = LossModel::new(1.0, 1.0).unwrap();
        let zero = expected_switch_loss(&SwitchPolicy::rs(0.0, 1, 1.0).unwrap(), &loss);
        assert_eq!(zero.expected_w, 0.0);
        let half = expected_switch_loss(&SwitchPolicy::rs(0.5, 1, 1.0).unwrap(), &loss);
        assert_eq!(half.expected_w, 0.5);
        assert_eq!(half.rpwm_bound_w, 2.0);
        assert!(LossModel::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn rppm_counts() {
        assert_eq!(count_rppm_sequences(5, 3).unwrap(), 3);
        assert_eq!(count_rppm_sequences(7, 7).unwrap(), 1);
        assert!(count_rppm_sequences(3, 4).is_err());
        // contiguous placements of an m-block in n slots, by enumeration
        let brute = (0u32..1 << 8)
            .filter(|b| b.count_ones() == 2 && (b >> b.trailing_zeros()) == 0b11)
            .count() as u64;
        assert_eq!(count_rppm_sequences(8, 2).unwrap(), brute);
    }

    #[test]
    fn rcf_rppm_counts() {
        assert_eq!(count_rcf_rppm_sequences(5, 5, 3).unwrap(), 3);
        let brute: u64 = (0..=2).map(|i| (4 + i) - (2 + i) + 1).sum();
        assert_eq!(count_rcf_rppm_sequences(4, 6, 2).unwrap(), brute);
        assert_eq!(brute, 9);
        assert_eq!(count_rcf_rppm_sequences(4, 9, 4).unwrap(), 6);
        for (nmin, nmax, mmin) in [(3, 10, 1), (5, 5, 5), (2, 40, 2)] {
            assert_eq!(
                count_rcf_rppm_sequences(nmin, nmax, mmin).unwrap(),
                (nmax - nmin + 1) * (nmin - mmin + 1)
            );
        }
        assert!(count_rcf_rppm_sequences(5, 4, 1).is_err());
        assert!(count_rcf_rppm_sequences(5, 6, 6).is_err());
        assert!(count_rcf_rppm_sequences(5, 6, 0).is_err());
    }
}
