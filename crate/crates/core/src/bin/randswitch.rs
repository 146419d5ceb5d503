use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use randswitch::control::{self, ControllerSpec, HysteresisBand};
use randswitch::converter::{self, BuckParams, ConverterModel, SimOptions};
use randswitch::dist::PulseLengthDist;
use randswitch::io::{fmt_float, CsvTable};
use randswitch::spectrum::{self, PsdCurve};
use randswitch::switching::{self, SwitchPolicy};
use randswitch::{rng, stats};

#[derive(Parser)]
#[command(name = "randswitch", version, about = "Random switching of DC-DC converters")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random switching sequence.
    Gen(GenArgs),
    /// Power spectral density of the switching function.
    Psd(PsdArgs),
    /// Lorentzian envelope of the switching PSD.
    Envelope(EnvelopeArgs),
    /// Buck converter analysis and simulation.
    Buck(BuckArgs),
    /// Simulate a converter model given as JSON.
    Sim(SimArgs),
    /// Controller design helpers.
    Control(ControlArgs),
    /// Inspect a pulse-length distribution.
    Dist(DistArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Quantum length in seconds.
    #[arg(long, default_value_t = 1.0)]
    t_eps: f64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    p: f64,
    /// Pulse-length distribution, e.g. det:1, uniform:1:5, huffman:32.
    #[arg(long, default_value = "det:1")]
    len: PulseLengthDist,
    #[arg(long)]
    pulses: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum PsdMode {
    Rs,
    Frs,
    Mc,
}

#[derive(Args)]
struct PsdArgs {
    #[arg(long, value_enum, default_value = "rs")]
    mode: PsdMode,
    #[arg(long)]
    p: f64,
    /// Pulse length for RS.
    #[arg(long, default_value_t = 1)]
    l: u32,
    /// Pulse-length distribution for FRS and MC; MC defaults to det:L.
    #[arg(long)]
    dist: Option<PulseLengthDist>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 500)]
    pulses: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Points per side of the symmetric log grid.
    #[arg(long, default_value_t = 1024)]
    points: usize,
    /// Add the envelope curve.
    #[arg(long)]
    envelope: bool,
    /// Add dB columns.
    #[arg(long)]
    db: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value = "det:1")]
    dist: PulseLengthDist,
    #[arg(long, default_value_t = 1024)]
    points: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum ControllerKind {
    Open,
    Integral,
    Hysteresis,
}

#[derive(Args)]
struct BuckArgs {
    #[arg(long = "L", default_value_t = 100.0)]
    l: f64,
    #[arg(long = "C", default_value_t = 100.0)]
    c: f64,
    #[arg(long = "R", default_value_t = 1.0)]
    r_load: f64,
    #[arg(long = "r", default_value_t = 0.0)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    vg: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value = "det:1")]
    dist: PulseLengthDist,
    /// Write a simulated trajectory instead of the report.
    #[arg(long)]
    simulate: bool,
    #[arg(long, value_enum, default_value = "open")]
    controller: ControllerKind,
    /// Controller JSON file; overrides --controller.
    #[arg(long)]
    controller_json: Option<PathBuf>,
    #[arg(long = "kI", alias = "ki", default_value_t = 1e-3)]
    k_i: f64,
    /// Voltage setpoint for integral control; defaults to the open-loop V.
    #[arg(long = "vd")]
    v_d: Option<f64>,
    /// Half-width of the hysteresis current band in units of sigma_i.
    #[arg(long, default_value_t = 2.0)]
    band: f64,
    #[arg(long, default_value_t = 100_000)]
    pulses: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit a histogram of the steady-state capacitor voltage.
    #[arg(long)]
    histogram: bool,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimArgs {
    /// Converter JSON: {A1, A2, B1, B2, Vg, labels} or {L, C, R, r, Vg}.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value = "det:1")]
    dist: PulseLengthDist,
    #[arg(long)]
    pulses: usize,
    #[arg(long)]
    seed: u64,
    /// Initial state, comma separated; defaults to the DC operating point.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    controller: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    samples_per_quantum: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ControlArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target DC state, comma separated; `nan` leaves a state free.
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Quasi-static check: integrator gain.
    #[arg(long = "kI", alias = "ki")]
    k_i: Option<f64>,
    /// Quasi-static check: bound on |ds_I/dt| in volts.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DistArgs {
    #[arg(long)]
    dist: PulseLengthDist,
    #[command(flatten)]
    common: Common,
}

struct Output {
    header: Vec<String>,
}

impl Output {
    fn new() -> Self {
        let args: Vec<String> = std::env::args().skip(1).collect();
        Output {
            header: vec![
                format!("randswitch {}", env!("CARGO_PKG_VERSION")),
                format!("args: {}", args.join(" ")),
            ],
        }
    }

    fn csv(&self, mut table: CsvTable, common: &Common) -> anyhow::Result<()> {
        table.prepend_comments(&self.header);
        write_out(common, &table.to_string())
    }

    fn json<T: Serialize>(&self, value: &T, common: &Common) -> anyhow::Result<()> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            generator: &'a str,
            args: &'a str,
            result: &'a T,
        }
        let w = Wrapped {
            generator: &self.header[0],
            args: self.header[1].trim_start_matches("args: "),
            result: value,
        };
        write_out(common, &(serde_json::to_string_pretty(&w)? + "\n"))
    }

    fn emit<T: Serialize>(&self, common: &Common, table: CsvTable, value: &T) -> anyhow::Result<()> {
        match common.format {
            Format::Csv => self.csv(table, common),
            Format::Json => self.json(value, common),
        }
    }
}

fn write_out(common: &Common, text: &str) -> anyhow::Result<()> {
    match &common.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn check_t_eps(t: f64) -> anyhow::Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(randswitch::Error::InvalidParameter {
            name: "t-eps",
            reason: "must be positive".into(),
        }
        .into());
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    let policy = SwitchPolicy::new(a.p, a.len, a.common.t_eps)?;
    let seq = switching::generate(&policy, a.pulses, &mut rng::seeded(a.seed))?;
    Output::new().emit(&a.common, seq.to_csv(), &seq)
}

#[derive(Serialize)]
struct PsdOut {
    curve: PsdCurve,
    total: spectrum::TotalPsd,
    #[serde(skip_serializing_if = "Option::is_none")]
    envelope: Option<spectrum::EnvelopeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc: Option<spectrum::McEstimate>,
}

fn cmd_psd(a: PsdArgs) -> anyhow::Result<()> {
    let t = a.common.t_eps;
    check_t_eps(t)?;
    if a.points < 2 {
        bail!(randswitch::Error::InvalidParameter {
            name: "points",
            reason: "need at least 2 points per side".into(),
        });
    }
    let dist = match (a.mode, a.dist) {
        (PsdMode::Rs, _) => PulseLengthDist::deterministic(a.l)?,
        (_, Some(d)) => d,
        (PsdMode::Frs, None) => bail!(randswitch::Error::InvalidParameter {
            name: "dist",
            reason: "required for --mode frs".into(),
        }),
        (PsdMode::Mc, None) => PulseLengthDist::deterministic(a.l)?,
    };
    let grid = spectrum::symmetric_log_grid(1e-3 / t, 50.0 / t, a.points);
    let curve = spectrum::psd_frs(a.p, &dist, t, &grid)?;
    let total = spectrum::total_psd(&curve);
    let mut table = curve.to_csv(a.db);
    table.comment(format!("total_power={}", fmt_float(total.value)));

    let envelope = if a.envelope {
        let fit = spectrum::fit_envelope(a.p, &dist, t)?;
        let env = fit.curve(&grid);
        table.comment(format!("envelope_G={} envelope_w={}", fmt_float(fit.g), fmt_float(fit.w)));
        table.push_column("envelope", &env.noise);
        if a.db {
            let dbs: Vec<f64> = env.noise.iter().map(|v| spectrum::to_db(*v)).collect();
            table.push_column("envelope_db", &dbs);
        }
        Some(fit)
    } else {
        None
    };

    let mc = if a.mode == PsdMode::Mc {
        let seed = a.seed.context("--seed is required for --mode mc")?;
        let policy = SwitchPolicy::new(a.p, dist.clone(), t)?;
        let est = spectrum::mc_psd_estimate(&policy, a.pulses, a.trials, &grid, seed)?;
        table.comment(format!(
            "mc_trials={} mc_pulses={} mc_dc_weight={} mc_dc_cutoff_hz={}",
            a.trials,
            a.pulses,
            fmt_float(est.curve.dc_weight),
            fmt_float(est.dc_cutoff_hz)
        ));
        table.push_column("mc", &est.curve.noise);
        if a.db {
            let dbs: Vec<f64> = est.curve.noise.iter().map(|v| spectrum::to_db(*v)).collect();
            table.push_column("mc_db", &dbs);
        }
        Some(est)
    } else {
        None
    };

    Output::new().emit(
        &a.common,
        table,
        &PsdOut {
            curve,
            total,
            envelope,
            mc,
        },
    )
}

#[derive(Serialize)]
struct EnvelopeOut {
    fit: spectrum::EnvelopeFit,
    corner_hz: f64,
    lf_level: f64,
}

fn cmd_envelope(a: EnvelopeArgs) -> anyhow::Result<()> {
    let t = a.common.t_eps;
    check_t_eps(t)?;
    let fit = spectrum::fit_envelope(a.p, &a.dist, t)?;
    let grid = spectrum::symmetric_log_grid(1e-3 / t, 50.0 / t, a.points.max(2));
    let mut table = CsvTable::new(&["f_hz", "envelope", "psd"]);
    let psd = spectrum::psd_frs(a.p, &a.dist, t, &grid)?;
    table.comment(format!("G={} w_rad_per_s={}", fmt_float(fit.g), fmt_float(fit.w)));
    for (i, f) in grid.iter().enumerate() {
        table.float_row(&[*f, fit.eval(*f), psd.noise[i]]);
    }
    let out = EnvelopeOut {
        fit,
        corner_hz: fit.corner_hz(),
        lf_level: spectrum::lf_noise_level(a.p, &a.dist, t),
    };
    Output::new().emit(&a.common, table, &out)
}

fn cmd_dist(a: DistArgs) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct DistOut<'a> {
        dist: &'a PulseLengthDist,
        moments: randswitch::dist::Moments,
        entropy_nats: f64,
        mean_inverse: f64,
    }
    let d = &a.dist;
    let m = d.moments();
    let mut table = CsvTable::new(&["ell", "prob"]);
    table.comment(format!(
        "kind={:?} mean={} second={} variance={}",
        d.kind(),
        fmt_float(m.mean),
        fmt_float(m.second),
        fmt_float(m.variance)
    ));
    for (l, p) in d.iter() {
        table.row(vec![l.to_string(), fmt_float(p)]);
    }
    let out = DistOut {
        dist: d,
        moments: m,
        entropy_nats: d.entropy(),
        mean_inverse: d.mean_inverse(),
    };
    Output::new().emit(&a.common, table, &out)
}

fn load_controller(path: &PathBuf) -> anyhow::Result<ControllerSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ControllerSpec::from_json(&text)?)
}

fn load_model(path: &PathBuf) -> anyhow::Result<ConverterModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ConverterModel::from_json(&text)?)
}

fn cmd_buck(a: BuckArgs) -> anyhow::Result<()> {
    let t = a.common.t_eps;
    check_t_eps(t)?;
    let params = BuckParams::new(a.l, a.c, a.r_load, a.r, a.vg)?;
    let report = converter::buck_analysis(&params, a.p, &a.dist, t)?;
    if !a.simulate && !a.histogram {
        let mut table = CsvTable::new(&["quantity", "value"]);
        let v = serde_json::to_value(&report)?;
        for (k, val) in v.as_object().into_iter().flatten() {
            match val {
                serde_json::Value::Number(n) => {
                    table.row(vec![k.clone(), n.to_string()]);
                }
                serde_json::Value::Object(o) => {
                    for (k2, v2) in o {
                        table.row(vec![format!("{k}.{k2}"), v2.to_string()]);
                    }
                }
                _ => {}
            }
        }
        return Output::new().emit(&a.common, table, &report);
    }

    let model = params.model()?;
    let spec = match &a.controller_json {
        Some(path) => Some(load_controller(path)?),
        None => match a.controller {
            ControllerKind::Open => None,
            ControllerKind::Integral => Some(ControllerSpec::Integral {
                k_i: a.k_i,
                v_d: a.v_d.unwrap_or(report.v),
                v_index: 1,
                anti_windup: true,
                s_i0: 0.0,
            }),
            ControllerKind::Hysteresis => {
                let half = a.band * report.sigma.i;
                Some(ControllerSpec::Hysteresis {
                    p_ref: a.p,
                    bands: vec![HysteresisBand {
                        state: 0,
                        lower: report.i - half,
                        upper: report.i + half,
                        amp_below: 1,
                        amp_above: 0,
                    }],
                })
            }
        },
    };
    let policy = SwitchPolicy::new(a.p, a.dist.clone(), t)?;
    let x0 = if spec.is_some() {
        vec![0.0, 0.0]
    } else {
        vec![report.i, report.v]
    };
    let opts = if a.histogram {
        SimOptions::default()
    } else {
        SimOptions::boundaries_only()
    };
    let tr = converter::simulate(
        &model,
        &policy,
        spec.as_ref(),
        &x0,
        a.pulses,
        &opts,
        &mut rng::seeded(a.seed),
    )?;

    if a.histogram {
        let v = tr.sample_column(1);
        let steady = &v[v.len() / 5..];
        let s = stats::summary(steady);
        let hist = stats::histogram(steady, a.bins.max(1));
        let mut table = CsvTable::new(&["lower_v", "upper_v", "count"]);
        table.comment(format!(
            "samples={} mean={} std={} skewness={} excess_kurtosis={}",
            s.n,
            fmt_float(s.mean),
            fmt_float(s.variance.sqrt()),
            fmt_float(s.skewness),
            fmt_float(s.excess_kurtosis)
        ));
        for (lo, hi, c) in &hist {
            table.row(vec![fmt_float(*lo), fmt_float(*hi), c.to_string()]);
        }
        #[derive(Serialize)]
        struct HistOut {
            summary: stats::Summary,
            bins: Vec<(f64, f64, u64)>,
        }
        return Output::new().emit(&a.common, table, &HistOut { summary: s, bins: hist });
    }

    let labels = model.labels().to_vec();
    let table = if spec.is_some() {
        tr.control_log_csv(&labels)
    } else {
        tr.to_csv(&labels)
    };
    if a.common.format == Format::Json {
        bail!(randswitch::Error::InvalidParameter {
            name: "format",
            reason: "trajectories are written as CSV".into(),
        });
    }
    Output::new().csv(table, &a.common)
}

fn cmd_sim(a: SimArgs) -> anyhow::Result<()> {
    check_t_eps(a.common.t_eps)?;
    let model = load_model(&a.model)?;
    let spec = a.controller.as_ref().map(load_controller).transpose()?;
    let policy = SwitchPolicy::new(a.p, a.dist, a.common.t_eps)?;
    let x0 = match a.x0 {
        Some(x) => x,
        None => converter::dc_solve(&model, a.p)?.x,
    };
    let opts = SimOptions {
        samples_per_quantum: a.samples_per_quantum,
        ..SimOptions::default()
    };
    let tr = converter::simulate(
        &model,
        &policy,
        spec.as_ref(),
        &x0,
        a.pulses,
        &opts,
        &mut rng::seeded(a.seed),
    )?;
    let labels = model.labels().to_vec();
    let table = if spec.is_some() {
        tr.control_log_csv(&labels)
    } else {
        tr.to_csv(&labels)
    };
    Output::new().csv(table, &a.common)
}

fn cmd_control(a: ControlArgs) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct ControlOut {
        #[serde(skip_serializing_if = "Option::is_none")]
        p_ref: Option<control::PrefSolution>,
        #[serde(skip_serializing_if = "Option::is_none")]
        quasi_static: Option<bool>,
    }
    let model = load_model(&a.model)?;
    let p_ref = a
        .target
        .as_ref()
        .map(|x| control::hysteresis_p_ref(&model, x, a.tol))
        .transpose()?;
    let quasi_static = match (a.k_i, a.rate) {
        (Some(k), Some(r)) => Some(control::quasi_static_check(&model, a.p, k, r)?),
        (None, None) => None,
        _ => bail!(randswitch::Error::InvalidParameter {
            name: "kI",
            reason: "--kI and --rate go together".into(),
        }),
    };
    let mut table = CsvTable::new(&["quantity", "value"]);
    if let Some(s) = &p_ref {
        table.row(vec!["p_ref".into(), fmt_float(s.p)]);
        table.row(vec!["residual".into(), fmt_float(s.residual)]);
    }
    if let Some(q) = quasi_static {
        table.row(vec!["quasi_static".into(), q.to_string()]);
    }
    Output::new().emit(&a.common, table, &ControlOut { p_ref, quasi_static })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<randswitch::Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(randswitch::Error::Io(_)) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Psd(a) => cmd_psd(a),
        Command::Envelope(a) => cmd_envelope(a),
        Command::Buck(a) => cmd_buck(a),
        Command::Sim(a) => cmd_sim(a),
        Command::Control(a) => cmd_control(a),
        Command::Dist(a) => cmd_dist(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
