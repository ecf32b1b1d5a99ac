//! Command-line front end: schedule generation, law fitting, curve
//! prediction, metric evaluation, schedule optimization, quadratic-SGD
//! simulation, saturation-function comparison, and variant ablation.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use schedcast::curvefile;
use schedcast::fit::{fit_law_runs, FitConfig, FitReport, FitRun, InitMode};
use schedcast::law::{predict, LawVariant, MplParams};
use schedcast::metrics::evaluate_metrics;
use schedcast::optimize::{
    baseline_final_losses, detect_phases, optimize_schedule, OptConfig,
};
use schedcast::quad::{
    exact_expected_loss, g_hat, m_estimate, matched_power_c, sample_spectra, sgd_monte_carlo,
    theory_curve, QuadSpec,
};
use schedcast::schedule::{Schedule, ScheduleKind, ScheduleRecord};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "schedcast", version, about = "Schedule-aware loss curve toolkit")]
struct Cli {
    /// Output directory for generated artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Global RNG seed; commands with their own seed flag override it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a schedule file (and optionally a per-step LR table).
    GenSchedule(GenScheduleArgs),
    /// Fit a law variant to one or more curve files.
    Fit(FitArgs),
    /// Predict a loss curve from fitted parameters and a schedule.
    Predict(PredictArgs),
    /// Compare a predicted curve against ground truth.
    Eval(EvalArgs),
    /// Optimize the LR schedule under fitted parameters.
    Optimize(OptimizeArgs),
    /// Simulate noisy SGD on a random quadratic and the theory estimates.
    Simulate(SimulateArgs),
    /// Tabulate the theory saturation function against its power form.
    CompareG(CompareGArgs),
    /// Fit every law variant on one dataset and rank them.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenScheduleArgs {
    /// Schedule record JSON ({kind, warmup_steps, peak_lr}); overrides the
    /// individual flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long, default_value_t = 2160)]
    warmup_steps: usize,
    #[arg(long, default_value_t = 3e-4)]
    peak_lr: f64,
    #[arg(long, default_value_t = 0.1)]
    end_ratio: f64,
    #[arg(long)]
    stable_steps: Option<usize>,
    #[arg(long, default_value_t = 3e-5)]
    end_lr: f64,
    #[arg(long)]
    stage_a_steps: Option<usize>,
    #[arg(long)]
    stage_b_steps: Option<usize>,
    #[arg(long)]
    stage_b_lr: Option<f64>,
    #[arg(long)]
    half_cycle: Option<usize>,
    #[arg(long, default_value_t = 3e-5)]
    floor_lr: f64,
    #[arg(long)]
    interval: Option<usize>,
    #[arg(long, default_value_t = 3e-5)]
    lo_lr: f64,
    #[arg(long, default_value_t = 3e-4)]
    hi_lr: f64,
    #[arg(long)]
    poly_seed: Option<u64>,
    /// Output schedule file name.
    #[arg(long, default_value = "schedule.json")]
    out_file: String,
    /// Also write a per-step (step, lr) table to this file.
    #[arg(long)]
    lr_table: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Curve files (step,lr,loss) forming the training dataset.
    #[arg(long, required = true, num_args = 1..)]
    curves: Vec<PathBuf>,
    #[arg(long, default_value = "mpl")]
    law: String,
    /// Momentum hyperparameter when --law mtl should be fixed rather than
    /// grid-searched.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 3e-4)]
    peak_lr: f64,
    #[arg(long, default_value_t = 2160)]
    warmup_steps: usize,
    /// FitConfig JSON file; individual flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps_per_phase: Option<usize>,
    #[arg(long)]
    phases: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    init_mode: Option<String>,
    #[arg(long)]
    fit_seed: Option<u64>,
    #[arg(long, default_value = "fit_report.json")]
    out_file: String,
    /// Write the (iteration, objective) trace to this file.
    #[arg(long)]
    trace_file: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    /// Law + parameter JSON, e.g. {"law":"mpl","params":{...}}.
    #[arg(long)]
    params: PathBuf,
    /// Schedule record JSON.
    #[arg(long)]
    schedule: PathBuf,
    /// Evaluate every N steps (the final step is always included).
    #[arg(long, default_value_t = 100)]
    every: usize,
    #[arg(long, default_value = "predicted_curve.csv")]
    out_file: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Optional metrics JSON output path.
    #[arg(long)]
    out_file: Option<String>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Law + parameter JSON produced by `fit`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 24000)]
    horizon: usize,
    #[arg(long, default_value_t = 3e-4)]
    eta0: f64,
    #[arg(long, default_value_t = 2160)]
    warmup_steps: usize,
    /// Comma-separated Adam step sizes to grid over.
    #[arg(long, value_delimiter = ',')]
    step_sizes: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50_000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    eps_clamp: f64,
    /// Ending LR used for the cosine/WSD baselines.
    #[arg(long, default_value_t = 3e-5)]
    end_lr: f64,
    /// WSD/WSDLD decay lengths compared against.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3000usize, 4000, 5000, 6000, 7000])]
    decay_grid: Vec<usize>,
    #[arg(long, default_value_t = 0.02)]
    phase_tol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// QuadSpec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Schedule record JSON.
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    sim_seed: Option<u64>,
    /// Skip the theory-law curve output.
    #[arg(long, default_value_t = false)]
    no_theory: bool,
}

#[derive(Args)]
struct CompareGArgs {
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_cap: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 100.0, 1000.0, 10000.0])]
    xs: Vec<f64>,
    #[arg(long)]
    out_file: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, required = true, num_args = 1..)]
    curves: Vec<PathBuf>,
    #[arg(long, default_value_t = 3e-4)]
    peak_lr: f64,
    #[arg(long, default_value_t = 2160)]
    warmup_steps: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps_per_phase: Option<usize>,
    #[arg(long)]
    phases: Option<usize>,
    #[arg(long)]
    fit_seed: Option<u64>,
    #[arg(long, default_value = "ablation.json")]
    out_file: String,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct PredictorFile {
    #[serde(flatten)]
    law: LawVariant,
    params: MplParams,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    match cli.command {
        Command::GenSchedule(args) => gen_schedule(&cli.out, cli.seed, args),
        Command::Fit(args) => fit_cmd(&cli.out, cli.seed, args),
        Command::Predict(args) => predict_cmd(&cli.out, args),
        Command::Eval(args) => eval_cmd(&cli.out, args),
        Command::Optimize(args) => optimize_cmd(&cli.out, args),
        Command::Simulate(args) => simulate_cmd(&cli.out, cli.seed, args),
        Command::CompareG(args) => compare_g_cmd(&cli.out, args),
        Command::Ablate(args) => ablate_cmd(&cli.out, cli.seed, args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_schedule(path: &Path) -> Result<Schedule> {
    let record: ScheduleRecord = read_json(path)?;
    Ok(record.build()?)
}

fn parse_law(name: &str, lambda: Option<f64>) -> Result<LawVariant> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "mpl" => LawVariant::Mpl,
        "opl" => LawVariant::Opl,
        "lldl" => LawVariant::Lldl,
        "no-gamma" | "nogamma" => LawVariant::NoGamma,
        "spl" => LawVariant::Spl,
        "mel" => LawVariant::Mel,
        "mtl" => LawVariant::Mtl {
            lambda: lambda.unwrap_or(0.99),
        },
        "cdsl" => LawVariant::Cdsl,
        other => bail!("unknown law variant {other:?}"),
    })
}

fn gen_schedule(out: &Path, seed: u64, args: GenScheduleArgs) -> Result<()> {
    let record = if let Some(cfg) = &args.config {
        read_json::<ScheduleRecord>(cfg)?
    } else {
        let kind_name = args.kind.as_deref().context("--kind or --config required")?;
        let total = args.total_steps;
        let stable = args.stable_steps;
        let need_total = || total.context("--total-steps required");
        let need_stable = || stable.context("--stable-steps required");
        let kind = match kind_name {
            "constant" => ScheduleKind::Constant {
                total_steps: need_total()?,
            },
            "cosine" => ScheduleKind::Cosine {
                total_steps: need_total()?,
                end_ratio: args.end_ratio,
            },
            "wsd" => ScheduleKind::Wsd {
                total_steps: need_total()?,
                stable_steps: need_stable()?,
                end_lr: args.end_lr,
            },
            "wsdld" => ScheduleKind::Wsdld {
                total_steps: need_total()?,
                stable_steps: need_stable()?,
                end_lr: args.end_lr,
            },
            "wsd-cosine" => ScheduleKind::WsdCosine {
                total_steps: need_total()?,
                stable_steps: need_stable()?,
                end_lr: args.end_lr,
            },
            "wsdsc" => ScheduleKind::Wsdsc {
                total_steps: need_total()?,
                stable_steps: need_stable()?,
            },
            "two-stage" => ScheduleKind::TwoStage {
                stage_a_steps: args.stage_a_steps.context("--stage-a-steps required")?,
                stage_b_steps: args.stage_b_steps.context("--stage-b-steps required")?,
                stage_b_lr: args.stage_b_lr.context("--stage-b-lr required")?,
            },
            "cyclic" => ScheduleKind::Cyclic {
                total_steps: need_total()?,
                stable_steps: need_stable()?,
                half_cycle: args.half_cycle.context("--half-cycle required")?,
                floor_lr: args.floor_lr,
            },
            "random-polyline" => ScheduleKind::RandomPolyline {
                total_steps: need_total()?,
                interval: args.interval.context("--interval required")?,
                lo_lr: args.lo_lr,
                hi_lr: args.hi_lr,
                seed: args.poly_seed.unwrap_or(seed),
            },
            other => bail!("unknown schedule kind {other:?} (multi-stage/explicit need --config)"),
        };
        ScheduleRecord {
            kind,
            warmup_steps: args.warmup_steps,
            peak_lr: args.peak_lr,
        }
    };
    let schedule = record.clone().build()?;
    let path = out.join(&args.out_file);
    write_json(&path, &record)?;
    println!(
        "wrote {} ({} schedule, T={}, peak={})",
        path.display(),
        schedule.kind_tag(),
        schedule.horizon(),
        schedule.peak_lr()
    );
    if let Some(table) = &args.lr_table {
        let rows: Vec<(usize, f64)> = (1..=schedule.horizon())
            .map(|t| (t, schedule.lr(t)))
            .collect();
        let path = out.join(table);
        std::fs::write(&path, curvefile::render_table("step,lr", &rows))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn load_runs(curves: &[PathBuf], peak_lr: f64, warmup_steps: usize) -> Result<Vec<FitRun>> {
    let warmup_sum = 0.5 * peak_lr * warmup_steps as f64;
    curves
        .iter()
        .map(|path| {
            let file = curvefile::read_curve(path)?;
            FitRun::from_samples(peak_lr, warmup_sum, file.steps, file.lrs, file.losses)
                .with_context(|| format!("building fit input from {}", path.display()))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn build_fit_config(
    config: Option<&PathBuf>,
    steps_per_phase: Option<usize>,
    phases: Option<usize>,
    delta: Option<f64>,
    init_mode: Option<&str>,
    seed: u64,
    fit_seed: Option<u64>,
) -> Result<FitConfig> {
    let mut cfg = match config {
        Some(path) => read_json::<FitConfig>(path)?,
        None => FitConfig::default(),
    };
    if let Some(v) = steps_per_phase {
        cfg.steps_per_phase = v;
    }
    if let Some(v) = phases {
        cfg.phases = v;
    }
    if let Some(v) = delta {
        cfg.delta = v;
    }
    if let Some(mode) = init_mode {
        cfg.init_mode = match mode {
            "default" => InitMode::Default,
            "grid" => InitMode::Grid,
            "explicit" => InitMode::Explicit,
            other => bail!("unknown init mode {other:?}"),
        };
    }
    cfg.seed = fit_seed.unwrap_or(seed);
    Ok(cfg)
}

fn summarize_fit(report: &FitReport) -> String {
    let p = &report.params;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}: objective {:.6e}",
        report.variant.name(),
        report.objective
    );
    let _ = writeln!(
        s,
        "  L0={:.6} A={:.6} B={:.6} C={:.6} alpha={:.6} beta={:.6} gamma={:.6}",
        p.l0, p.a, p.b, p.c, p.alpha, p.beta, p.gamma
    );
    if let LawVariant::Mtl { lambda } = report.variant {
        let _ = writeln!(s, "  lambda={lambda}");
    }
    let m = &report.pooled;
    let _ = writeln!(
        s,
        "  pooled: R2={} MAE={:.5} RMSE={:.5} PredE={:.5} WorstE={:.5}",
        m.r2.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        m.mae,
        m.rmse,
        m.prede,
        m.worste
    );
    s
}

fn fit_cmd(out: &Path, seed: u64, args: FitArgs) -> Result<()> {
    let law = parse_law(&args.law, args.lambda)?;
    let runs = load_runs(&args.curves, args.peak_lr, args.warmup_steps)?;
    let mut cfg = build_fit_config(
        args.config.as_ref(),
        args.steps_per_phase,
        args.phases,
        args.delta,
        args.init_mode.as_deref(),
        seed,
        args.fit_seed,
    )?;
    if let Some(lambda) = args.lambda {
        cfg.mtl_lambdas = Some(vec![lambda]);
    }
    let report = fit_law_runs(law, &runs, &cfg)?;
    print!("{}", summarize_fit(&report));
    let predictor = PredictorFile {
        law: report.variant,
        params: report.params,
    };
    let path = out.join(&args.out_file);
    write_json(&path, &report)?;
    let params_path = out.join("fitted_params.json");
    write_json(&params_path, &predictor)?;
    println!("wrote {} and {}", path.display(), params_path.display());
    if let Some(trace) = &args.trace_file {
        let path = out.join(trace);
        std::fs::write(
            &path,
            curvefile::render_table("iteration,objective", &report.trace),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn predict_cmd(out: &Path, args: PredictArgs) -> Result<()> {
    let predictor: PredictorFile = read_json(&args.params)?;
    let schedule = load_schedule(&args.schedule)?;
    if args.every == 0 {
        bail!("--every must be positive");
    }
    let horizon = schedule.horizon();
    let mut steps: Vec<usize> = (1..=horizon / args.every).map(|i| i * args.every).collect();
    if steps.last() != Some(&horizon) {
        steps.push(horizon);
    }
    let losses = predict(predictor.law, &predictor.params, &schedule, &steps)?;
    let lrs: Vec<f64> = steps.iter().map(|&t| schedule.lr(t)).collect();
    let path = out.join(&args.out_file);
    curvefile::write_curve(&path, &steps, &lrs, &losses)?;
    println!(
        "wrote {} ({} points, final loss {:.6})",
        path.display(),
        steps.len(),
        losses.last().unwrap()
    );
    Ok(())
}

fn eval_cmd(out: &Path, args: EvalArgs) -> Result<()> {
    let pred = curvefile::read_curve(&args.pred)?;
    let gt = curvefile::read_curve(&args.gt)?;
    if pred.steps != gt.steps {
        bail!("prediction and ground-truth step grids differ");
    }
    let metrics = evaluate_metrics(&pred.losses, &gt.losses)?;
    println!(
        "R2={} MAE={:.6} RMSE={:.6} PredE={:.6} WorstE={:.6}",
        metrics.r2.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        metrics.mae,
        metrics.rmse,
        metrics.prede,
        metrics.worste
    );
    if let Some(file) = &args.out_file {
        write_json(&out.join(file), &metrics)?;
    }
    Ok(())
}

fn optimize_cmd(out: &Path, args: OptimizeArgs) -> Result<()> {
    let predictor: PredictorFile = read_json(&args.params)?;
    let mut cfg = OptConfig {
        horizon: args.horizon,
        eta0: args.eta0,
        warmup_steps: args.warmup_steps,
        step_sizes: args.step_sizes.clone().unwrap_or_else(default_steps),
        iters: args.iters,
        eps_clamp: args.eps_clamp,
        seed: 0,
    };
    if cfg.step_sizes.is_empty() {
        cfg.step_sizes = default_steps();
    }
    let (schedule, result) = optimize_schedule(predictor.law, &predictor.params, &cfg)?;
    let record = ScheduleRecord::from(&schedule);
    write_json(&out.join("optimized_schedule.json"), &record)?;
    let rows: Vec<(usize, f64)> = (1..=schedule.horizon())
        .map(|t| (t, schedule.lr(t)))
        .collect();
    std::fs::write(
        out.join("optimized_lrs.csv"),
        curvefile::render_table("step,lr", &rows),
    )?;
    let phase = detect_phases(&schedule, args.phase_tol)?;
    write_json(&out.join("phase_report.json"), &phase)?;
    println!(
        "optimized predicted final loss {:.6} (step size {:.1e})",
        result.predicted_final_loss, result.chosen_step_size
    );
    println!(
        "stable phase through step {}, decay exponent {}, final LR ratio {:.3e}",
        phase.t_stable,
        phase
            .decay_exponent
            .map_or("n/a".to_string(), |p| format!("{p:.3}")),
        phase.final_lr_ratio
    );
    let baselines = baseline_final_losses(
        predictor.law,
        &predictor.params,
        args.horizon,
        args.warmup_steps,
        args.eta0,
        args.end_lr,
        &args.decay_grid,
    )?;
    for (name, loss) in &baselines {
        let margin = loss - result.predicted_final_loss;
        println!("  vs {name}: {loss:.6} (margin {margin:+.6})");
    }
    let mut comparison = vec![("optimized".to_string(), result.predicted_final_loss)];
    comparison.extend(baselines);
    write_json(&out.join("comparison.json"), &comparison)?;
    println!("wrote optimized_schedule.json, optimized_lrs.csv, phase_report.json, comparison.json");
    Ok(())
}

fn default_steps() -> Vec<f64> {
    vec![2e-8, 1e-8, 5e-9, 2e-9, 1e-9]
}

fn simulate_cmd(out: &Path, seed: u64, args: SimulateArgs) -> Result<()> {
    let spec: QuadSpec = read_json(&args.spec)?;
    let schedule = load_schedule(&args.schedule)?;
    let seed = args.sim_seed.unwrap_or(seed);
    let inst = sample_spectra(&spec, seed)?;
    write_json(&out.join("spectrum.json"), &inst)?;
    let exact = exact_expected_loss(&inst, &schedule)?;
    let rows: Vec<(usize, f64)> = exact.iter().enumerate().map(|(t, &v)| (t, v)).collect();
    std::fs::write(out.join("exact.csv"), curvefile::render_table("step,loss", &rows))?;
    let mc = sgd_monte_carlo(&inst, &schedule, args.trials, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let mut mc_text = String::from("step,mean,stderr\n");
    for t in 0..mc.mean.len() {
        let _ = writeln!(mc_text, "{t},{:.16e},{:.16e}", mc.mean[t], mc.stderr[t]);
    }
    std::fs::write(out.join("mc.csv"), mc_text)?;
    let m = m_estimate(&inst, &schedule, schedule.peak_lr())?;
    let final_exact = *exact.last().unwrap();
    #[derive(serde::Serialize)]
    struct MReport {
        exact_final: f64,
        estimate: f64,
        error_bound: f64,
        abs_error: f64,
        within_bound: bool,
    }
    let report = MReport {
        exact_final: final_exact,
        estimate: m.value,
        error_bound: m.error_bound,
        abs_error: (final_exact - m.value).abs(),
        within_bound: (final_exact - m.value).abs() <= m.error_bound,
    };
    write_json(&out.join("m_estimate.json"), &report)?;
    println!(
        "exact final {:.6e}, estimate {:.6e}, |err| {:.3e} <= bound {:.3e}: {}",
        report.exact_final,
        report.estimate,
        report.abs_error,
        report.error_bound,
        report.within_bound
    );
    if !args.no_theory {
        let theory = theory_curve(&spec, &schedule, spec.eta0)?;
        let rows: Vec<(usize, f64)> = theory
            .iter()
            .enumerate()
            .map(|(i, &v)| (i + 1, v))
            .collect();
        std::fs::write(
            out.join("theory.csv"),
            curvefile::render_table("step,loss", &rows),
        )?;
    }
    println!("wrote spectrum.json, exact.csv, mc.csv, m_estimate.json, theory.csv");
    Ok(())
}

fn compare_g_cmd(out: &Path, args: CompareGArgs) -> Result<()> {
    let c_matched = matched_power_c(args.beta, args.r, args.lambda_cap)?;
    let mut text = String::from("x,g_hat,g_power,abs_diff\n");
    println!("matched power C = {c_matched:.6}");
    for &x in &args.xs {
        let gh = g_hat(x, args.beta, args.r, args.lambda_cap)?;
        let gp = 1.0 - (c_matched * x + 1.0).powf(-args.beta);
        let diff = (gh - gp).abs();
        println!("x={x:>10}: g_hat={gh:.10} g_power={gp:.10} |diff|={diff:.3e}");
        let _ = writeln!(text, "{x},{gh:.16e},{gp:.16e},{diff:.16e}");
    }
    if let Some(file) = &args.out_file {
        std::fs::write(out.join(file), text)?;
    }
    Ok(())
}

fn ablate_cmd(out: &Path, seed: u64, args: AblateArgs) -> Result<()> {
    let runs = load_runs(&args.curves, args.peak_lr, args.warmup_steps)?;
    let cfg = build_fit_config(
        args.config.as_ref(),
        args.steps_per_phase,
        args.phases,
        None,
        None,
        seed,
        args.fit_seed,
    )?;
    let variants = [
        LawVariant::Mpl,
        LawVariant::NoGamma,
        LawVariant::Mel,
        LawVariant::Spl,
        LawVariant::Mtl { lambda: 0.99 },
        LawVariant::Lldl,
        LawVariant::Opl,
        LawVariant::Cdsl,
    ];
    let mut reports: Vec<FitReport> = Vec::new();
    for v in variants {
        let report = fit_law_runs(v, &runs, &cfg)?;
        print!("{}", summarize_fit(&report));
        reports.push(report);
    }
    reports.sort_by(|a, b| a.objective.partial_cmp(&b.objective).unwrap());
    println!("\nranking by objective:");
    println!(
        "{:<10} {:>12} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "law", "objective", "R2", "MAE", "RMSE", "PredE", "WorstE"
    );
    for r in &reports {
        println!(
            "{:<10} {:>12.4e} {:>9} {:>9.5} {:>9.5} {:>9.5} {:>9.5}",
            r.variant.name(),
            r.objective,
            r.pooled.r2.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            r.pooled.mae,
            r.pooled.rmse,
            r.pooled.prede,
            r.pooled.worste
        );
    }
    write_json(&out.join(&args.out_file), &reports)?;
    println!("wrote {}", out.join(&args.out_file).display());
    Ok(())
}
