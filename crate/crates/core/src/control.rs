//! Conditional-probability switching controllers.
//!
//! Each controller maps the state measured at a pulse boundary to the
//! probability that the next pulse is 1. Decisions only happen on pulse
//! boundaries.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::converter::{averaged_eigenvalues, dc_solve, ConverterModel};
use crate::error::{Error, Result};
use crate::switching::{check_probability, draw_amplitude};

/// Forced correction for one monitored state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HysteresisBand {
    pub state: usize,
    pub lower: f64,
    pub upper: f64,
    /// Amplitude forced while the state is below `lower`.
    pub amp_below: u8,
    /// Amplitude forced while the state is above `upper`.
    pub amp_above: u8,
}

fn default_true() -> bool {
    true
}

fn default_v_index() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    OpenLoop {
        p_ref: f64,
    },
    /// Random switching with `p_ref` inside every band, forced amplitudes
    /// outside. The first band that is violated wins.
    Hysteresis {
        p_ref: f64,
        bands: Vec<HysteresisBand>,
    },
    /// `p = sat(k_i s_I)`, `ds_I/dt = v_d - x[v_index]`.
    Integral {
        k_i: f64,
        v_d: f64,
        #[serde(default = "default_v_index")]
        v_index: usize,
        #[serde(default = "default_true")]
        anti_windup: bool,
        #[serde(default)]
        s_i0: f64,
    },
    /// `p = sat(p_ref - K (x_d - x))`. Positive `K` raises `p` when a state
    /// overshoots; a buck voltage loop needs negative gains to be stable.
    StateFeedback {
        p_ref: f64,
        k: Vec<f64>,
        x_d: Vec<f64>,
    },
}

impl ControllerSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ControllerSpec = serde_json::from_str(s)?;
        spec.validate(None)?;
        Ok(spec)
    }

    /// Checks parameter ranges, and state indices when `n_states` is known.
    pub fn validate(&self, n_states: Option<usize>) -> Result<()> {
        let in_range = |i: usize| n_states.is_none_or(|n| i < n);
        match self {
            ControllerSpec::OpenLoop { p_ref } => check_probability("p_ref", *p_ref),
            ControllerSpec::Hysteresis { p_ref, bands } => {
                check_probability("p_ref", *p_ref)?;
                for b in bands {
                    if !(b.lower < b.upper) {
                        return Err(Error::invalid("bands", "lower must be below upper"));
                    }
                    if b.amp_below > 1 || b.amp_above > 1 {
                        return Err(Error::invalid("bands", "forced amplitudes must be 0 or 1"));
                    }
                    if !in_range(b.state) {
                        return Err(Error::invalid("bands", "state index out of range"));
                    }
                }
                Ok(())
            }
            ControllerSpec::Integral {
                k_i,
                v_d,
                v_index,
                s_i0,
                ..
            } => {
                if !k_i.is_finite() || !v_d.is_finite() || !s_i0.is_finite() {
                    return Err(Error::invalid("integral", "parameters must be finite"));
                }
                if !in_range(*v_index) {
                    return Err(Error::invalid("v_index", "state index out of range"));
                }
                Ok(())
            }
            ControllerSpec::StateFeedback { p_ref, k, x_d } => {
                check_probability("p_ref", *p_ref)?;
                if k.len() != x_d.len() {
                    return Err(Error::invalid("k", "length differs from x_d"));
                }
                if n_states.is_some_and(|n| n != k.len()) {
                    return Err(Error::invalid("k", "length differs from the state dimension"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControllerState {
    pub s_i: f64,
    pub saturated: bool,
    pub last_p: f64,
}

impl ControllerState {
    pub fn new(spec: &ControllerSpec) -> Self {
        let s_i = match spec {
            ControllerSpec::Integral { s_i0, .. } => *s_i0,
            _ => 0.0,
        };
        ControllerState {
            s_i,
            saturated: false,
            last_p: f64::NAN,
        }
    }
}

/// Clamp to `[0, 1]`; identity in between.
pub fn sat(u: f64) -> f64 {
    u.clamp(0.0, 1.0)
}

/// What the controller asks of the next pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision {
    Forced(u8),
    Random(f64),
}

impl Decision {
    /// Probability that the pulse is 1.
    pub fn probability(self) -> f64 {
        match self {
            Decision::Forced(a) => a as f64,
            Decision::Random(p) => p,
        }
    }
}

pub fn state_feedback_p(p_ref: f64, k: &[f64], x_d: &[f64], x: &[f64]) -> f64 {
    let u: f64 = k
        .iter()
        .zip(x_d.iter().zip(x))
        .map(|(k, (d, x))| k * (d - x))
        .sum();
    sat(p_ref - u)
}

/// The first violated band, if any.
pub fn hysteresis_override(bands: &[HysteresisBand], x: &[f64]) -> Option<u8> {
    bands.iter().find_map(|b| {
        let v = x[b.state];
        if v > b.upper {
            Some(b.amp_above)
        } else if v < b.lower {
            Some(b.amp_below)
        } else {
            None
        }
    })
}

pub fn decide(spec: &ControllerSpec, cstate: &ControllerState, x: &[f64]) -> Decision {
    match spec {
        ControllerSpec::OpenLoop { p_ref } => Decision::Random(*p_ref),
        ControllerSpec::Hysteresis { p_ref, bands } => match hysteresis_override(bands, x) {
            Some(a) => Decision::Forced(a),
            None => Decision::Random(*p_ref),
        },
        ControllerSpec::Integral { k_i, .. } => Decision::Random(sat(k_i * cstate.s_i)),
        ControllerSpec::StateFeedback { p_ref, k, x_d } => {
            Decision::Random(state_feedback_p(*p_ref, k, x_d, x))
        }
    }
}

/// Draws the next amplitude. Forced decisions consume no randomness.
pub fn decide_amplitude<R: Rng + ?Sized>(
    spec: &ControllerSpec,
    cstate: &mut ControllerState,
    x: &[f64],
    rng: &mut R,
) -> u8 {
    let d = decide(spec, cstate, x);
    cstate.last_p = d.probability();
    match d {
        Decision::Forced(a) => a,
        Decision::Random(p) => draw_amplitude(p, rng),
    }
}

/// Euler step of the integrator with error `v_d - v_meas` over `dt`.
/// With anti-windup, integration is frozen while `sat` is pinned and the
/// error would push further past the pin.
pub fn integral_update(spec: &ControllerSpec, cstate: &ControllerState, v_meas: f64, dt: f64) -> ControllerState {
    let ControllerSpec::Integral {
        k_i,
        v_d,
        anti_windup,
        ..
    } = spec
    else {
        return *cstate;
    };
    debug_assert!(dt > 0.0);
    let err = v_d - v_meas;
    let u = k_i * cstate.s_i;
    let push = k_i * err;
    let frozen = *anti_windup && ((u >= 1.0 && push > 0.0) || (u <= 0.0 && push < 0.0));
    let s_i = if frozen { cstate.s_i } else { cstate.s_i + err * dt };
    let u_new = k_i * s_i;
    ControllerState {
        s_i,
        saturated: u_new >= 1.0 || u_new <= 0.0,
        last_p: sat(u_new),
    }
}

/// Post-pulse controller bookkeeping; only the integrator has state.
pub fn advance(spec: &ControllerSpec, cstate: &mut ControllerState, x_start: &[f64], dt: f64) {
    if let ControllerSpec::Integral { v_index, .. } = spec {
        let last = cstate.last_p;
        *cstate = integral_update(spec, cstate, x_start[*v_index], dt);
        cstate.last_p = last;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrefSolution {
    pub p: f64,
    /// Euclidean norm of `X(p) - x_d`.
    pub residual: f64,
}

/// Least-squares `p` in `[0, 1]` with `X(p)` closest to `x_d`: a grid scan
/// followed by Gauss-Newton refinement with `dX/dp = -A_avg^{-1} beta Vg`.
/// States with a NaN target are ignored.
pub fn hysteresis_p_ref(model: &ConverterModel, x_d: &[f64], tol: f64) -> Result<PrefSolution> {
    if x_d.len() != model.dim() {
        return Err(Error::invalid("x_d", "dimension differs from the model"));
    }
    let mask: Vec<bool> = x_d.iter().map(|v| !v.is_nan()).collect();
    let resid = |p: f64| -> Result<(f64, Vec<f64>)> {
        let op = dc_solve(model, p)?;
        let r: Vec<f64> = (0..x_d.len())
            .map(|j| if mask[j] { op.x[j] - x_d[j] } else { 0.0 })
            .collect();
        Ok((r.iter().map(|v| v * v).sum::<f64>().sqrt(), r))
    };

    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=200 {
        let p = i as f64 / 200.0;
        if let Ok((r, _)) = resid(p) {
            if r < best.0 {
                best = (r, p);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Singular("averaged state matrix over [0, 1]"));
    }
    let mut p = best.1;
    for _ in 0..50 {
        let op = dc_solve(model, p)?;
        let (a, _) = model.averaged(p);
        let beta = DVector::from_column_slice(&op.beta) * model.vg();
        let dx = a.lu().solve(&(-beta)).ok_or(Error::Singular("averaged state matrix"))?;
        let (_, r) = resid(p)?;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..r.len() {
            if mask[j] {
                num += dx[j] * r[j];
                den += dx[j] * dx[j];
            }
        }
        if den == 0.0 {
            break;
        }
        let next = (p - num / den).clamp(0.0, 1.0);
        let done = (next - p).abs() < 1e-15;
        p = next;
        if done {
            break;
        }
    }
    let (residual, _) = resid(p)?;
    let scale = x_d
        .iter()
        .filter(|v| !v.is_nan())
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1.0);
    if residual > tol * scale {
        return Err(Error::Unreachable {
            best_p: p,
            residual,
        });
    }
    Ok(PrefSolution { p, residual })
}

/// Whether an integrator rate bound keeps probability changes slow relative
/// to the slowest averaged mode: `rate <= lambda_min / (5 k_I)`.
pub fn quasi_static_check(model: &ConverterModel, p: f64, k_i: f64, rate_bound: f64) -> Result<bool> {
    check_probability("p", p)?;
    let eig = averaged_eigenvalues(model, p);
    let max_real = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::Unstable { max_real });
    }
    let lambda_min = eig.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    if k_i.abs() == 0.0 {
        return Ok(true);
    }
    Ok(rate_bound.abs() <= lambda_min / (5.0 * k_i.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::BuckParams;
    use crate::rng;

    fn integral(k_i: f64, anti_windup: bool) -> ControllerSpec {
        ControllerSpec::Integral {
            k_i,
            v_d: 1.0,
            v_index: 1,
            anti_windup,
            s_i0: 0.0,
        }
    }

    #[test]
    fn sat_branches() {
        assert_eq!(sat(1.2), 1.0);
        assert_eq!(sat(-0.3), 0.0);
        assert_eq!(sat(0.7), 0.7);
        assert_eq!(sat(1.0), 1.0);
        assert_eq!(sat(0.0), 0.0);
    }

    #[test]
    fn open_loop_rate() {
        let spec = ControllerSpec::OpenLoop { p_ref: 0.5 };
        let mut st = ControllerState::new(&spec);
        let mut r = rng::seeded(3);
        let n = 100_000;
        let ones: u32 = (0..n)
            .map(|_| decide_amplitude(&spec, &mut st, &[0.0], &mut r) as u32)
            .sum();
        let se = (0.25 / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn hysteresis_forces() {
        let spec = ControllerSpec::Hysteresis {
            p_ref: 0.5,
            bands: vec![HysteresisBand {
                state: 0,
                lower: -1.0,
                upper: 1.0,
                amp_below: 1,
                amp_above: 0,
            }],
        };
        let st = ControllerState::new(&spec);
        assert_eq!(decide(&spec, &st, &[2.0]), Decision::Forced(0));
        assert_eq!(decide(&spec, &st, &[-2.0]), Decision::Forced(1));
        assert_eq!(decide(&spec, &st, &[0.0]), Decision::Random(0.5));
        let mut st = st;
        let mut r = rng::seeded(0);
        for _ in 0..100 {
            assert_eq!(decide_amplitude(&spec, &mut st, &[5.0], &mut r), 0);
        }
    }

    #[test]
    fn state_feedback_examples() {
        assert_eq!(state_feedback_p(0.4, &[2.0, 3.0], &[1.0, 1.0], &[1.0, 1.0]), 0.4);
        assert_eq!(state_feedback_p(0.4, &[0.0, 0.0], &[1.0, 1.0], &[7.0, -3.0]), 0.4);
        // x above x_d with positive K raises p
        assert!(state_feedback_p(0.4, &[0.1], &[1.0], &[2.0]) > 0.4);
    }

    #[test]
    fn integrator_updates() {
        let spec = integral(0.5, true);
        let st = ControllerState {
            s_i: 1.0,
            saturated: false,
            last_p: 0.5,
        };
        assert_eq!(integral_update(&spec, &st, 1.0, 0.1).s_i, 1.0);
        let up = integral_update(&spec, &st, 0.5, 0.1);
        assert!((up.s_i - 1.05).abs() < 1e-15);
        assert!((up.last_p - 0.525).abs() < 1e-15);
    }

    #[test]
    fn anti_windup_freezes() {
        let pinned = ControllerState {
            s_i: 3.0,
            saturated: true,
            last_p: 1.0,
        };
        // v below target pushes s_I up, further past p = 1
        assert_eq!(integral_update(&integral(0.5, true), &pinned, 0.2, 1.0).s_i, 3.0);
        assert_eq!(integral_update(&integral(0.5, false), &pinned, 0.2, 1.0).s_i, 3.8);
        // error of the opposite sign unwinds
        assert_eq!(integral_update(&integral(0.5, true), &pinned, 1.5, 1.0).s_i, 2.5);
    }

    #[test]
    fn p_ref_examples() {
        let lossless = BuckParams::new(1e-3, 1e-4, 10.0, 0.0, 12.0).unwrap().model().unwrap();
        let s = hysteresis_p_ref(&lossless, &[f64::NAN, 6.0], 1e-9).unwrap();
        assert!((s.p - 0.5).abs() < 1e-12);

        let b = BuckParams::new(1e-3, 1e-4, 10.0, 0.5, 12.0).unwrap();
        let m = b.model().unwrap();
        let v = 4.0;
        // p Vg R = V (R + p r)  =>  p = V R / (Vg R - V r)
        let want = v * 10.0 / (12.0 * 10.0 - v * 0.5);
        let s = hysteresis_p_ref(&m, &[f64::NAN, v], 1e-9).unwrap();
        assert!((s.p - want).abs() < 1e-10);

        let x = dc_solve(&m, 0.3).unwrap().x;
        assert!((hysteresis_p_ref(&m, &x, 1e-9).unwrap().p - 0.3).abs() < 1e-8);

        match hysteresis_p_ref(&m, &[f64::NAN, 20.0], 1e-6) {
            Err(Error::Unreachable { best_p, .. }) => assert_eq!(best_p, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quasi_static_examples() {
        let m = ConverterModel::from_rows(&[vec![-100.0]], &[vec![-100.0]], &[1.0], &[0.0], 1.0, &[])
            .unwrap();
        assert!(quasi_static_check(&m, 0.5, 1.0, 10.0).unwrap());
        assert!(!quasi_static_check(&m, 0.5, 4.0, 10.0).unwrap());
        assert!(quasi_static_check(&m, 0.5, 1e-300, 1e6).unwrap());
        let unstable =
            ConverterModel::from_rows(&[vec![1.0]], &[vec![1.0]], &[1.0], &[0.0], 1.0, &[]).unwrap();
        assert!(quasi_static_check(&unstable, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn json_specs() {
        let s = ControllerSpec::from_json(r#"{"kind":"integral","k_i":0.001,"v_d":0.4}"#).unwrap();
        assert_eq!(s, integral_with(0.001, 0.4));
        assert!(ControllerSpec::from_json(r#"{"kind":"open_loop","p_ref":1.5}"#).is_err());
        let h = r#"{"kind":"hysteresis","p_ref":0.5,"bands":[{"state":0,"lower":1,"upper":0,"amp_below":1,"amp_above":0}]}"#;
        assert!(ControllerSpec::from_json(h).is_err());
    }

    fn integral_with(k_i: f64, v_d: f64) -> ControllerSpec {
        ControllerSpec::Integral {
            k_i,
            v_d,
            v_index: 1,
            anti_windup: true,
            s_i0: 0.0,
        }
    }
}
