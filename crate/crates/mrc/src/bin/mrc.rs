use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrc::config::Settings;
use mrc::exec::Pool;
use mrc::synth::{self, SynthConfig};
use mrc::{dataset, model_file, MrcError, Result};
use mrc_core::filterbank::{design_bandpass, quantize_cascade, COEFF_BITS};
use mrc_core::model::SvmConfig;
use mrc_core::pipeline::{
    evaluate, extract_features_float, extract_features_quant, infer_batch, infer_staged, select_window, train, Scores,
    Stage,
};
use mrc_core::{Mode, ModelParams, TrialWindow};

#[derive(Parser)]
#[command(name = "mrc", version, about = "Multispectral Riemannian classifier for motor-imagery EEG")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Settings file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` setting.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Float)]
    mode: ModeArg,
    /// Leave wall-clock figures out of the output.
    #[arg(long, global = true)]
    no_timing: bool,
    /// Overrides one setting, `key=value`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Float,
    Quant,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Float => Mode::Float,
            ModeArg::Quant => Mode::Quant,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the float and quantized filter coefficients of every band.
    DesignFilters,
    /// Train a model on a labeled dataset.
    Train {
        dataset: PathBuf,
        #[arg(short, long, value_name = "MODEL")]
        out: PathBuf,
    },
    /// Classify every trial: `trial_index,class,score0,...`.
    Infer { dataset: PathBuf, model: PathBuf },
    /// Accuracy and confusion matrix on a labeled dataset.
    Eval { dataset: PathBuf, model: PathBuf },
    /// Per-stage operation counts and timings of one forward pass.
    Bench {
        /// Model to profile; without it a throwaway model is trained on
        /// synthetic data of the given shape.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 22)]
        channels: usize,
        #[arg(long, default_value_t = 875)]
        samples: usize,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
        reps: u32,
    },
    /// Run two modes on every trial and compare features and decisions.
    Compare {
        dataset: PathBuf,
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Float)]
        left: ModeArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Quant)]
        right: ModeArg,
    },
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 22)]
        channels: usize,
        #[arg(long, default_value_t = 875)]
        samples: usize,
        /// Class source level relative to the background.
        #[arg(long, default_value_t = 0.5)]
        source_gain: f64,
    },
    /// Convert CSV trials listed in a manifest to a dataset file.
    ImportCsv {
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

struct Ctx {
    settings: Settings,
    pool: Pool,
    mode: Mode,
    timing: bool,
    out: String,
}

impl Ctx {
    fn line(&mut self, s: impl AsRef<str>) {
        self.out.push_str(s.as_ref());
        self.out.push('\n');
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mrc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn settings(g: &Global) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).map_err(|e| MrcError::io(path, e))?;
        s.apply_text(&text)?;
    }
    for kv in &g.overrides {
        s.apply_override(kv)?;
    }
    if let Some(seed) = g.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<String> {
    let mut ctx = Ctx {
        settings: settings(&cli.global)?,
        pool: Pool::new(cli.global.threads),
        mode: cli.global.mode.into(),
        timing: !cli.global.no_timing,
        out: String::new(),
    };
    match cli.command {
        Command::DesignFilters => design_filters(&mut ctx)?,
        Command::Train { dataset, out } => cmd_train(&mut ctx, &dataset, &out)?,
        Command::Infer { dataset, model } => cmd_infer(&mut ctx, &dataset, &model)?,
        Command::Eval { dataset, model } => cmd_eval(&mut ctx, &dataset, &model)?,
        Command::Bench { model, channels, samples, reps } => cmd_bench(&mut ctx, model.as_deref(), channels, samples, reps)?,
        Command::Compare { dataset, model, left, right } => cmd_compare(&mut ctx, &dataset, &model, left.into(), right.into())?,
        Command::Synth { out, trials, channels, samples, source_gain } => {
            let cfg = SynthConfig {
                n_trials: trials,
                n_channels: channels,
                n_samples: samples,
                sampling_rate_hz: ctx.settings.sampling_rate_hz,
                source_gain,
                seed: ctx.settings.seed,
                ..SynthConfig::default()
            };
            let data = synth::generate(&cfg)?;
            dataset::write(&out, &data)?;
            ctx.line(format!("trials={}", data.len()));
            ctx.line(format!("dataset={}", out.display()));
        }
        Command::ImportCsv { manifest, out } => {
            let data = dataset::import_csv(&manifest)?;
            dataset::write(&out, &data)?;
            ctx.line(format!("trials={}", data.len()));
            ctx.line(format!("dataset={}", out.display()));
        }
    }
    Ok(ctx.out)
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Float => "float",
        Mode::Quant => "quant",
    }
}

/// Loads a dataset and cuts every trial to `window_s` seconds.
fn load_windows(path: &Path, s: &Settings, window_s: f64) -> Result<Vec<TrialWindow>> {
    let trials = dataset::read(path)?;
    trials
        .iter()
        .map(|t| select_window(t, s.window_offset_seconds, window_s).map_err(MrcError::from))
        .collect()
}

fn model_window(m: &ModelParams) -> f64 {
    m.n_samples as f64 / m.sampling_rate_hz
}

fn design_filters(ctx: &mut Ctx) -> Result<()> {
    let bands = ctx.settings.train_config().bands;
    ctx.line(format!(
        "{:>4} {:>7} {:>7} {:>3} {:>16} {:>16} {:>16} {:>16} {:>16} {:>6} {:>6} {:>6} {:>6} {:>6} {:>4} {:>5}",
        "band", "low_hz", "high_hz", "sec", "b0", "b1", "b2", "a1", "a2", "q_b0", "q_b1", "q_b2", "q_a1", "q_a2", "exp", "shift"
    ));
    let mut sections = 0;
    for (i, b) in bands.iter().enumerate() {
        let float = design_bandpass(b, ctx.settings.filter_order)?;
        let q = quantize_cascade(&float, b, COEFF_BITS)?;
        for (k, (f, s)) in float.iter().zip(&q.sections).enumerate() {
            let mut row = format!("{i:>4} {:>7.2} {:>7.2} {k:>3}", b.low_hz, b.high_hz);
            for c in f.coefficients() {
                write!(row, " {c:>16.9e}").unwrap();
            }
            for c in s.coeffs {
                write!(row, " {c:>6}").unwrap();
            }
            write!(row, " {:>4} {:>5}", s.coeff_exponent, s.output_shift).unwrap();
            ctx.line(row);
            sections += 1;
        }
    }
    ctx.line(format!("bands={}", bands.len()));
    ctx.line(format!("sections={sections}"));
    Ok(())
}

fn cmd_train(ctx: &mut Ctx, data: &Path, out: &Path) -> Result<()> {
    let trials = load_windows(data, &ctx.settings, ctx.settings.window_seconds)?;
    let cfg = ctx.settings.train_config();
    let start = Instant::now();
    let model = train(&trials, &cfg, &ctx.pool)?;
    let elapsed = start.elapsed().as_secs_f64();
    model_file::write(out, &model)?;

    ctx.line(format!(
        "{:>4} {:>7} {:>7} {:>12} {:>9} {:>12} {:>8}",
        "band", "low_hz", "high_hz", "filt_shifts", "cov_shift", "whiten_shift", "ref_exp"
    ));
    for (i, b) in model.bands.iter().enumerate() {
        let shifts: Vec<String> = b.cascade.sections.iter().map(|s| s.output_shift.to_string()).collect();
        ctx.line(format!(
            "{i:>4} {:>7.2} {:>7.2} {:>12} {:>9} {:>12} {:>8}",
            b.spec.low_hz,
            b.spec.high_hz,
            shifts.join(","),
            b.cov_shift,
            b.whiten_shift,
            b.cref.exponent
        ));
    }
    ctx.line(format!("trials={}", trials.len()));
    ctx.line(format!("bands={}", model.bands.len()));
    ctx.line(format!("features={}", model.n_features()));
    ctx.line(format!("input_exponent={}", model.input_exponent));
    ctx.line(format!("feature_exponent={}", model.feature_exponent));
    ctx.line(format!("weight_exponent={}", model.svm.weight_exponent));
    if ctx.timing {
        ctx.line(format!("train_seconds={elapsed:.3}"));
    }
    ctx.line(format!("model={}", out.display()));
    Ok(())
}

fn score_fields(s: &Scores) -> Vec<String> {
    match s {
        Scores::Float(v) => v.iter().map(|x| x.to_string()).collect(),
        Scores::Quant(v) => v.iter().map(|x| x.to_string()).collect(),
    }
}

fn cmd_infer(ctx: &mut Ctx, data: &Path, model: &Path) -> Result<()> {
    let model = model_file::read(model)?;
    let trials = load_windows(data, &ctx.settings, model_window(&model))?;
    let preds = infer_batch(&trials, &model, ctx.mode, &ctx.pool)?;
    for (i, p) in preds.iter().enumerate() {
        ctx.line(format!("{i},{},{}", p.class, score_fields(&p.scores).join(",")));
    }
    Ok(())
}

fn cmd_eval(ctx: &mut Ctx, data: &Path, model: &Path) -> Result<()> {
    let model = model_file::read(model)?;
    let trials = load_windows(data, &ctx.settings, model_window(&model))?;
    let start = Instant::now();
    let e = evaluate(&trials, &model, ctx.mode, &ctx.pool)?;
    let elapsed = start.elapsed().as_secs_f64();
    let k = model.n_classes();
    ctx.line(format!("mode {}", mode_name(ctx.mode)));
    ctx.line(format!("accuracy {:.4}", e.accuracy()));
    ctx.line("confusion (rows: true class, columns: predicted)");
    let mut head = String::from("     ");
    for c in 0..k {
        write!(head, " {c:>6}").unwrap();
    }
    ctx.line(head);
    for (t, row) in e.confusion.iter().enumerate() {
        let mut line = format!("{t:>5}");
        for v in row {
            write!(line, " {v:>6}").unwrap();
        }
        ctx.line(line);
    }
    ctx.line("recall");
    for c in 0..k {
        let r = e.recall(c).map_or("-".to_string(), |r| format!("{r:.4}"));
        ctx.line(format!("{c:>5} {r:>6}"));
    }
    ctx.line(format!("mode={}", mode_name(ctx.mode)));
    ctx.line(format!("trials={}", e.total()));
    ctx.line(format!("correct={}", e.correct()));
    for c in 0..k {
        if let Some(r) = e.recall(c) {
            ctx.line(format!("recall_{c}={r:.4}"));
        }
    }
    if ctx.timing {
        ctx.line(format!("eval_seconds={elapsed:.3}"));
    }
    ctx.line(format!("accuracy={:.4}", e.accuracy()));
    Ok(())
}

fn bench_model(ctx: &Ctx, channels: usize, samples: usize) -> Result<ModelParams> {
    let cfg = SynthConfig {
        n_trials: 8,
        n_channels: channels,
        n_samples: samples,
        sampling_rate_hz: ctx.settings.sampling_rate_hz,
        seed: ctx.settings.seed,
        ..SynthConfig::default()
    };
    let trials = synth::generate(&cfg)?;
    let mut train_cfg = ctx.settings.train_config();
    train_cfg.svm = SvmConfig { epochs: 10, ..train_cfg.svm };
    Ok(train(&trials, &train_cfg, &ctx.pool)?)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

fn cmd_bench(ctx: &mut Ctx, model: Option<&Path>, channels: usize, samples: usize, reps: u32) -> Result<()> {
    let model = match model {
        Some(p) => model_file::read(p)?,
        None => bench_model(ctx, channels, samples)?,
    };
    let trial = synth::generate(&SynthConfig {
        n_trials: 1,
        n_channels: model.n_channels,
        n_samples: model.n_samples,
        sampling_rate_hz: model.sampling_rate_hz,
        seed: ctx.settings.seed.wrapping_add(1),
        ..SynthConfig::default()
    })?
    .remove(0);

    let mut head = format!("{:<6} {:<11} {:>12} {:>12} {:>10}", "mode", "stage", "fixed_macs", "flops", "shifts");
    if ctx.timing {
        head.push_str(&format!(" {:>10}", "median_ms"));
    }
    ctx.line(head);
    let mut trailers = Vec::new();
    for mode in [Mode::Quant, Mode::Float] {
        let mut times: Vec<Vec<f64>> = vec![Vec::new(); Stage::ALL.len()];
        let mut counts = None;
        for _ in 0..reps {
            let mut last = Instant::now();
            let mut i = 0;
            let (_, ops) = infer_staged(&trial, &model, mode, &mut |_| {
                let now = Instant::now();
                times[i].push((now - last).as_secs_f64() * 1e3);
                last = now;
                i += 1;
            })?;
            counts = Some(ops);
        }
        let ops = counts.expect("at least one repetition");
        for (k, (name, s)) in ops.stages().iter().enumerate() {
            let mut row = format!("{:<6} {:<11} {:>12} {:>12} {:>10}", mode_name(mode), name, s.fixed_macs, s.flops, s.shifts);
            if ctx.timing {
                row.push_str(&format!(" {:>10.3}", median(&mut times[k])));
            }
            ctx.line(row);
            let m = mode_name(mode);
            trailers.push(format!("{m}_{name}_fixed_macs={}", s.fixed_macs));
            trailers.push(format!("{m}_{name}_flops={}", s.flops));
            trailers.push(format!("{m}_{name}_shifts={}", s.shifts));
        }
        if mode == Mode::Quant {
            trailers.push(format!("iir_macs={}", ops.filter.fixed_macs));
        }
    }
    ctx.line(format!("channels={}", model.n_channels));
    ctx.line(format!("samples={}", model.n_samples));
    ctx.line(format!("bands={}", model.bands.len()));
    ctx.line(format!("reps={reps}"));
    for t in trailers {
        ctx.line(t);
    }
    Ok(())
}

fn features_real(trial: &TrialWindow, model: &ModelParams, mode: Mode, pool: &Pool) -> Result<Vec<f64>> {
    Ok(match mode {
        Mode::Float => extract_features_float(trial, model, pool)?,
        Mode::Quant => extract_features_quant(trial, model, pool)?.dequantize(),
    })
}

fn cmd_compare(ctx: &mut Ctx, data: &Path, model: &Path, left: Mode, right: Mode) -> Result<()> {
    let model = model_file::read(model)?;
    let trials = load_windows(data, &ctx.settings, model_window(&model))?;
    let pl = infer_batch(&trials, &model, left, &ctx.pool)?;
    let pr = infer_batch(&trials, &model, right, &ctx.pool)?;
    let mut errs = Vec::with_capacity(trials.len());
    for t in &trials {
        let a = features_real(t, &model, left, &ctx.pool)?;
        let b = features_real(t, &model, right, &ctx.pool)?;
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = a.iter().map(|x| x * x).sum();
        errs.push(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
    }
    let n = trials.len().max(1) as f64;
    let agree = pl.iter().zip(&pr).filter(|(a, b)| a.class == b.class).count() as f64 / n;
    let mean = errs.iter().sum::<f64>() / n;
    let max = errs.iter().fold(0.0f64, |m, &e| m.max(e));
    ctx.line(format!("trials={}", trials.len()));
    ctx.line(format!("left={}", mode_name(left)));
    ctx.line(format!("right={}", mode_name(right)));
    ctx.line(format!("feature_rel_err_mean={mean:.6}"));
    ctx.line(format!("feature_rel_err_max={max:.6}"));
    ctx.line(format!("agreement={agree:.4}"));
    if trials.iter().all(|t| t.label.is_some()) && !trials.is_empty() {
        let acc = |p: &[mrc_core::pipeline::Prediction]| {
            p.iter().zip(&trials).filter(|(p, t)| Some(p.class as u8) == t.label).count() as f64 / n
        };
        ctx.line(format!("accuracy_left={:.4}", acc(&pl)));
        ctx.line(format!("accuracy_right={:.4}", acc(&pr)));
    }
    Ok(())
}
