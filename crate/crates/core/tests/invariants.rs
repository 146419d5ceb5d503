//! Seeded statistical checks of long-run behaviour.

use randswitch::control::ControllerSpec;
use randswitch::converter::{dc_solve, simulate_with, BuckParams, SimOptions};
use randswitch::dist::PulseLengthDist;
use randswitch::rng;
use randswitch::spectrum;
use randswitch::stats;
use randswitch::switching::{self, SwitchPolicy};

fn buck() -> BuckParams {
    BuckParams::new(100.0, 100.0, 1.0, 0.05, 1.0).unwrap()
}

#[test]
fn sampled_moments_obey_the_law_of_large_numbers() {
    for d in ["uniform:1:5", "huffman:32", "canonical:3:12:1:10", "gaussian:4:2:1:9"] {
        let dist: PulseLengthDist = d.parse().unwrap();
        let m = dist.moments();
        let mut r = rng::seeded(1);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut r) as f64).collect();
        let mean = stats::mean(&xs);
        let se = (m.variance / n as f64).sqrt();
        assert!((mean - m.mean).abs() < 5.0 * se, "{d}: {mean} vs {}", m.mean);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let fourth: f64 = dist.iter().map(|(l, p)| p * (l as f64).powi(4)).sum();
        let se2 = ((fourth - m.second * m.second) / n as f64).sqrt();
        assert!((stats::mean(&sq) - m.second).abs() < 5.0 * se2, "{d}");
    }
}

#[test]
fn time_weighted_duty_tracks_p() {
    let policy = SwitchPolicy::new(0.3, "uniform:1:7".parse().unwrap(), 1.0).unwrap();
    let seq = switching::generate(&policy, 1_000_000, &mut rng::seeded(2)).unwrap();
    let m = policy.pulse_dist.moments();
    // Ratio estimator; delta-method standard error.
    let n = seq.len() as f64;
    let se = (0.3 * 0.7 * m.second / (m.mean * m.mean) / n).sqrt();
    assert!((seq.time_mean() - 0.3).abs() < 5.0 * se);
}

#[test]
fn harmonic_nulls_follow_the_support() {
    let freqs = [1.0 / 3.0, 2.0 / 3.0, 1.0, 0.5];
    let det = spectrum::psd_frs(0.5, &PulseLengthDist::deterministic(3).unwrap(), 1.0, &freqs).unwrap();
    assert!(det.noise[..3].iter().all(|v| *v < 1e-30));
    assert!(det.noise[3] > 1e-3);

    // Lengths {2, 3}: only integer frequencies null both terms.
    let mixed = PulseLengthDist::custom(2, vec![0.5, 0.5]).unwrap();
    let c = spectrum::psd_frs(0.5, &mixed, 1.0, &freqs).unwrap();
    assert!(c.noise[2] < 1e-30);
    assert!(c.noise[0] > 1e-3 && c.noise[3] > 1e-3);
}

#[test]
fn monte_carlo_error_halves_with_four_times_the_trials() {
    let freqs = spectrum::symmetric_log_grid(0.05, 20.0, 256);
    let policy = SwitchPolicy::new(0.4, "uniform:1:4".parse().unwrap(), 1.0).unwrap();
    let exact = spectrum::psd_frs(0.4, &policy.pulse_dist, 1.0, &freqs).unwrap();
    let err = |trials| {
        let mc = spectrum::mc_psd_estimate(&policy, 400, trials, &freqs, 3).unwrap();
        spectrum::rms_relative_error(&mc.curve, &exact, mc.dc_cutoff_hz)
    };
    let ratio = err(400) / err(100);
    assert!((0.4..0.62).contains(&ratio), "ratio {ratio}");
}

#[test]
fn ripple_has_zero_mean_and_is_uncorrelated_with_the_switch() {
    let b = buck();
    let model = b.model().unwrap();
    let p = 0.5;
    let op = dc_solve(&model, p).unwrap();
    let policy = SwitchPolicy::rs(p, 1, 1.0).unwrap();
    let n = 1_000_000;
    let (mut qt, mut ri, mut rv) = (Vec::new(), Vec::new(), Vec::new());
    simulate_with(
        &model,
        &policy,
        None,
        &op.x,
        n,
        &SimOptions::boundaries_only(),
        &mut rng::seeded(4),
        |rec| {
            qt.push(rec.amp as f64 - p);
            ri.push(rec.x_start[0] - op.x[0]);
            rv.push(rec.x_start[1] - op.x[1]);
        },
    )
    .unwrap();
    for r in [&ri, &rv] {
        let se = stats::batch_standard_error(r, 50);
        assert!(stats::mean(r).abs() < 5.0 * se);
        // q~ is i.i.d., so the sample correlation has standard error 1/sqrt(n).
        let rho = stats::correlation(&qt, r);
        assert!(rho.abs() < 5.0 / (n as f64).sqrt(), "rho {rho}");
    }
}

#[test]
fn integral_control_mean_within_three_standard_errors() {
    let b = buck();
    let model = b.model().unwrap();
    let policy = SwitchPolicy::rs(0.5, 1, 1.0).unwrap();
    let spec = ControllerSpec::Integral {
        k_i: 1e-3,
        v_d: 0.3,
        v_index: 1,
        anti_windup: true,
        s_i0: 0.0,
    };
    let n = 200_000;
    let mut v = Vec::new();
    simulate_with(
        &model,
        &policy,
        Some(&spec),
        &[0.0, 0.0],
        n,
        &SimOptions::boundaries_only(),
        &mut rng::seeded(5),
        |rec| {
            if rec.index >= n / 5 {
                v.push(rec.x_start[1]);
            }
        },
    )
    .unwrap();
    let se = stats::batch_standard_error(&v, 40);
    assert!((stats::mean(&v) - 0.3).abs() < 3.0 * se);
}

#[test]
fn forced_decisions_leave_the_random_stream_alone() {
    // A band that is always violated forces every pulse; the run must then
    // consume exactly the draws needed for pulse lengths.
    let model = buck().model().unwrap();
    let policy = SwitchPolicy::new(0.5, "uniform:1:3".parse().unwrap(), 1.0).unwrap();
    let spec = ControllerSpec::Hysteresis {
        p_ref: 0.5,
        bands: vec![randswitch::control::HysteresisBand {
            state: 0,
            lower: 1e3,
            upper: 2e3,
            amp_below: 1,
            amp_above: 0,
        }],
    };
    let mut lens = Vec::new();
    simulate_with(
        &model,
        &policy,
        Some(&spec),
        &[0.0, 0.0],
        200,
        &SimOptions::boundaries_only(),
        &mut rng::seeded(6),
        |rec| {
            assert_eq!(rec.amp, 1);
            lens.push(rec.len);
        },
    )
    .unwrap();
    let mut r = rng::seeded(6);
    let expect: Vec<u32> = (0..200).map(|_| policy.pulse_dist.sample(&mut r)).collect();
    assert_eq!(lens, expect);
}
