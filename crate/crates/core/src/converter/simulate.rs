use rand::Rng;

use super::{ConverterModel, StepCache};
use crate::control::{self, ControllerSpec, ControllerState};
use crate::error::{Error, Result};
use crate::io::{fmt_float, CsvTable};
use crate::switching::{draw_amplitude, SwitchPolicy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// Intra-pulse samples per quantum `t_eps`; 0 records boundaries only.
    pub samples_per_quantum: usize,
    /// Under hysteresis control, end a pulse at the first quantum boundary
    /// where a band is left in the direction the pulse is driving.
    pub event_detection: bool,
    /// A state magnitude above this is treated as divergence.
    pub divergence_limit: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            samples_per_quantum: 4,
            event_detection: false,
            divergence_limit: 1e100,
        }
    }
}

impl SimOptions {
    pub fn boundaries_only() -> Self {
        SimOptions {
            samples_per_quantum: 0,
            ..Self::default()
        }
    }
}

/// One simulated pulse, handed to the observer of [`simulate_with`].
#[derive(Debug)]
pub struct PulseRecord<'a> {
    pub index: usize,
    pub t_start: f64,
    pub amp: u8,
    /// Length in quanta actually applied.
    pub len: u32,
    /// Probability the controller used for this pulse.
    pub p_used: f64,
    /// Integrator state after the pulse.
    pub s_i: f64,
    pub x_start: &'a [f64],
    pub x_end: &'a [f64],
    /// Intra-pulse sample times, left endpoints of equal sub-intervals.
    pub sample_t: &'a [f64],
    /// Flat, `dim` values per sample.
    pub sample_x: &'a [f64],
    /// `dx/dt` at each sample, flat.
    pub sample_dx: &'a [f64],
}

/// Pulse-exact simulation. Amplitudes come from `controller` when given,
/// otherwise from `policy.p`; pulse lengths always come from
/// `policy.pulse_dist`. Per pulse the amplitude is drawn before the length.
/// Returns the final state.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with<R, F>(
    model: &ConverterModel,
    policy: &SwitchPolicy,
    controller: Option<&ControllerSpec>,
    x0: &[f64],
    n_pulses: usize,
    opts: &SimOptions,
    rng: &mut R,
    mut observer: F,
) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&PulseRecord),
{
    let n = model.dim();
    if x0.len() != n {
        return Err(Error::invalid("x0", "dimension differs from the model"));
    }
    if let Some(c) = controller {
        c.validate(Some(n))?;
    }
    let t_eps = policy.t_eps;
    let sub = opts.samples_per_quantum;
    let mut full = StepCache::new(model, t_eps)?;
    let mut fine = if sub > 0 {
        Some(StepCache::new(model, t_eps / sub as f64)?)
    } else {
        None
    };
    let bands = match (controller, opts.event_detection) {
        (Some(ControllerSpec::Hysteresis { bands, .. }), true) => Some(bands.as_slice()),
        _ => None,
    };

    let mut cstate = controller.map(ControllerState::new);
    let mut x = x0.to_vec();
    let mut x_end = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let (mut st, mut sx, mut sdx) = (Vec::new(), Vec::new(), Vec::new());
    let mut quanta: u64 = 0;

    for k in 0..n_pulses {
        let (amp, p_used) = match (controller, cstate.as_mut()) {
            (Some(spec), Some(cs)) => {
                let a = control::decide_amplitude(spec, cs, &x, rng);
                (a, cs.last_p)
            }
            _ => (draw_amplitude(policy.p, rng), policy.p),
        };
        let mut len = policy.pulse_dist.sample(rng);

        match bands {
            Some(bands) => {
                tmp.copy_from_slice(&x);
                let one = full.get(amp, 1)?;
                for q in 1..=len {
                    one.apply(&tmp, &mut x_end);
                    tmp.copy_from_slice(&x_end);
                    if q < len {
                        if let Some(a) = control::hysteresis_override(bands, &x_end) {
                            if a != amp {
                                len = q;
                                break;
                            }
                        }
                    }
                }
            }
            None => full.get(amp, len)?.apply(&x, &mut x_end),
        }

        let t_start = quanta as f64 * t_eps;
        st.clear();
        sx.clear();
        sdx.clear();
        if let Some(fine) = fine.as_mut() {
            let dt = t_eps / sub as f64;
            let step = fine.get(amp, 1)?;
            tmp.copy_from_slice(&x);
            let mut next = vec![0.0; n];
            for i in 0..(len as usize * sub) {
                st.push(t_start + i as f64 * dt);
                sx.extend_from_slice(&tmp);
                sdx.extend(model.derivative(&tmp, amp));
                step.apply(&tmp, &mut next);
                tmp.copy_from_slice(&next);
            }
        }

        if x_end
            .iter()
            .any(|v| !v.is_finite() || v.abs() > opts.divergence_limit)
        {
            return Err(Error::Divergence { pulse: k });
        }

        let s_i = match (controller, cstate.as_mut()) {
            (Some(spec), Some(cs)) => {
                control::advance(spec, cs, &x, len as f64 * t_eps);
                cs.s_i
            }
            _ => 0.0,
        };

        observer(&PulseRecord {
            index: k,
            t_start,
            amp,
            len,
            p_used,
            s_i,
            x_start: &x,
            x_end: &x_end,
            sample_t: &st,
            sample_x: &sx,
            sample_dx: &sdx,
        });
        quanta += len as u64;
        std::mem::swap(&mut x, &mut x_end);
    }
    Ok(x)
}

/// Collected output of [`simulate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub t_eps: f64,
    /// Pulse start times plus the end time; `n_pulses + 1` entries.
    pub times: Vec<f64>,
    /// Boundary states, flat, `n_pulses + 1` rows.
    pub states: Vec<f64>,
    pub amps: Vec<u8>,
    pub lens: Vec<u32>,
    pub p_used: Vec<f64>,
    pub s_i: Vec<f64>,
    pub sample_times: Vec<f64>,
    pub sample_states: Vec<f64>,
    pub sample_derivs: Vec<f64>,
}

impl Trajectory {
    pub fn n_pulses(&self) -> usize {
        self.amps.len()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.n_pulses())
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Boundary values of state `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.states.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn sample_column(&self, j: usize) -> Vec<f64> {
        self.sample_states.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn derivative_column(&self, j: usize) -> Vec<f64> {
        self.sample_derivs.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Columns `t_seconds`, one per state, `a_k`. The last row is the final
    /// state and has an empty `a_k`.
    pub fn to_csv(&self, labels: &[String]) -> CsvTable {
        let mut cols = vec!["t_seconds".to_string()];
        cols.extend(labels.iter().cloned());
        cols.push("a_k".into());
        let cols: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
        let mut t = CsvTable::new(&cols);
        for k in 0..=self.n_pulses() {
            let mut row = vec![fmt_float(self.times[k])];
            row.extend(self.state(k).iter().map(|v| fmt_float(*v)));
            row.push(self.amps.get(k).map_or(String::new(), |a| a.to_string()));
            t.row(row);
        }
        t
    }

    /// Closed-loop log: `t`, states at pulse start, `p_used`, `a_k`, `s_I`.
    pub fn control_log_csv(&self, labels: &[String]) -> CsvTable {
        let mut cols = vec!["t".to_string()];
        cols.extend(labels.iter().cloned());
        cols.extend(["p_used".into(), "a_k".into(), "s_I".into()]);
        let cols: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
        let mut t = CsvTable::new(&cols);
        for k in 0..self.n_pulses() {
            let mut row = vec![fmt_float(self.times[k])];
            row.extend(self.state(k).iter().map(|v| fmt_float(*v)));
            row.push(fmt_float(self.p_used[k]));
            row.push(self.amps[k].to_string());
            row.push(fmt_float(self.s_i[k]));
            t.row(row);
        }
        t
    }
}

/// [`simulate_with`] collecting everything into a [`Trajectory`].
pub fn simulate<R: Rng + ?Sized>(
    model: &ConverterModel,
    policy: &SwitchPolicy,
    controller: Option<&ControllerSpec>,
    x0: &[f64],
    n_pulses: usize,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut tr = Trajectory {
        dim: model.dim(),
        t_eps: policy.t_eps,
        ..Default::default()
    };
    tr.states.extend_from_slice(x0);
    tr.times.push(0.0);
    simulate_with(model, policy, controller, x0, n_pulses, opts, rng, |r| {
        tr.times.push(r.t_start + r.len as f64 * policy.t_eps);
        tr.states.extend_from_slice(r.x_end);
        tr.amps.push(r.amp);
        tr.lens.push(r.len);
        tr.p_used.push(r.p_used);
        tr.s_i.push(r.s_i);
        tr.sample_times.extend_from_slice(r.sample_t);
        tr.sample_states.extend_from_slice(r.sample_x);
        tr.sample_derivs.extend_from_slice(r.sample_dx);
    })?;
    Ok(tr)
}
