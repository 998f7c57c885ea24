use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;

use churn_core::che::{che_classic_irm, predict_box_curve_with, psi_box, psi_hat, PsiModel};
use churn_core::estimators::{build_joint_sample_filtered, estimate_catalog_rate, write_estimates_csv};
use churn_core::grid::GridSpec;
use churn_core::lru::{sig6, stack_distances};
use churn_core::shuffle::{randomize, run_semi_experiments, RandomizationKind};
use churn_core::synth::{generate_box_trace, monte_carlo_psi, GeneratorConfig, GeneratorConfigJson};
use churn_core::trace::{consolidate_sessions, extract_subtrace, parse_trace, trace_stats};
use churn_core::{Seed, Trace};

use crate::manifest::{sibling, RunManifest};
use crate::{
    Cli, Command, EstimateArgs, GenerateArgs, GeneratorArgs, Method, PredictArgs, ReplayArgs, ShuffleArgs, ShuffleKind,
    SimulateArgs, StatsArgs, SubtraceArgs, TraceInput, ValidatePsiArgs,
};

pub enum Status {
    Ok,
    ValidationFailed,
}

/// Bad command line that clap could not reject up front.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 2 for usage errors, 3 for I/O and parse errors, 1 for inputs the
/// requested computation cannot handle.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use churn_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return 2;
        }
        if cause.is::<io::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) | E::Parse { .. } | E::Range(_) | E::MissingUser { .. } => 3,
                E::InvalidArgument(_) | E::GridMismatch => 2,
                _ => 1,
            };
        }
    }
    1
}

pub fn run(cli: Cli, argv: &[String]) -> Result<Status> {
    match cli.command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Shuffle(a) => shuffle(a, argv),
        Command::Predict(a) => predict(a, argv),
        Command::Generate(a) => generate(a, argv),
        Command::ValidatePsi(a) => validate_psi(a, argv),
        Command::Estimate(a) => estimate(a, argv),
        Command::Stats(a) => stats(a, argv),
        Command::Subtrace(a) => subtrace(a, argv),
        Command::Replay(a) => replay(a),
    }
}

fn load_trace(input: &TraceInput, manifest: &mut RunManifest) -> Result<Trace> {
    let path = &input.trace;
    let file = File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
    let trace = parse_trace(BufReader::new(file), input.window_ms)
        .with_context(|| format!("reading trace {}", path.display()))?;
    manifest.inputs.push(path.clone());
    manifest.param("window_ms", trace.window().length());
    let trace = match input.gap_ms {
        Some(gap) => {
            manifest.param("gap_ms", gap);
            let merged = consolidate_sessions(&trace, gap).context("consolidating sessions")?;
            log::info!("sessions: {} requests -> {}", trace.len(), merged.len());
            merged
        }
        None => trace,
    };
    Ok(trace)
}

fn resolve_sizes(spec: &GridSpec, trace: &Trace, manifest: &mut RunManifest) -> Result<Vec<u64>> {
    let sizes = spec.resolve(trace.distinct_docs() as u64)?;
    manifest.sizes = Some(spec.to_string());
    manifest.resolved_sizes = Some(sizes.clone());
    Ok(sizes)
}

/// Writes through `f` to `out` (or stdout), then emits the manifest.
fn write_output<F>(out: Option<&Path>, manifest: &mut RunManifest, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
            manifest.outputs.push(path.to_owned());
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: Option<&Path>, label: &str, value: &T, manifest: &mut RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    match path {
        Some(path) => {
            std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
            manifest.outputs.push(path.to_owned());
        }
        None => eprintln!("{label}: {}", serde_json::to_string(value)?),
    }
    Ok(())
}

fn simulate(a: SimulateArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("simulate", argv);
    let trace = load_trace(&a.input, &mut manifest)?;
    let sizes = resolve_sizes(&a.sizes, &trace, &mut manifest)?;
    let curve = stack_distances(&trace).curve(&sizes, trace.distinct_docs() as u64)?;
    let out = a.output.out.as_deref();
    write_output(out, &mut manifest, |w| Ok(curve.write_csv(w)?))?;
    manifest.emit(out)?;
    Ok(Status::Ok)
}

fn shuffle(a: ShuffleArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("shuffle", argv);
    manifest.seed = Some(a.seed);
    let trace = load_trace(&a.input, &mut manifest)?;
    let out = a.output.out.as_deref();
    let kind = match a.kind {
        ShuffleKind::Global => RandomizationKind::Global,
        ShuffleKind::Positional => RandomizationKind::Positional,
        ShuffleKind::Local => RandomizationKind::Local,
        ShuffleKind::All => {
            manifest.param("kind", "all");
            let sizes = resolve_sizes(&a.sizes, &trace, &mut manifest)?;
            let report = run_semi_experiments(&trace, &sizes, Seed(a.seed))?;
            write_output(out, &mut manifest, |w| Ok(report.write_csv(w)?))?;
            for (kind, value) in &report.mare_values {
                eprintln!("mare {kind} {}", sig6(*value));
                manifest.param(&format!("mare_{kind}"), sig6(*value));
            }
            manifest.emit(out)?;
            return Ok(Status::Ok);
        }
    };
    manifest.param("kind", kind.name());
    let shuffled = randomize(&trace, kind, Seed(a.seed));
    write_output(out, &mut manifest, |w| Ok(shuffled.write_csv(w)?))?;
    manifest.emit(out)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct CharacteristicTimeRow {
    cache_size: u64,
    t_c_ms: f64,
    residual: f64,
}

#[derive(Serialize)]
struct BoxMetadata {
    gamma_hat: f64,
    n1: u64,
    n2: u64,
    mean_n_multi: f64,
    pairs: usize,
    window_ms: u64,
    psi: String,
    psi_hat_at_window: f64,
    characteristic_times: Vec<CharacteristicTimeRow>,
}

fn predict(a: PredictArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("predict", argv);
    let trace = load_trace(&a.input, &mut manifest)?;
    let sizes = resolve_sizes(&a.sizes, &trace, &mut manifest)?;
    let summary = trace_stats(&trace);
    let window = trace.window().length();
    let out = a.output.out.as_deref();
    match a.method {
        Method::Classic => {
            manifest.param("method", "classic");
            let counts: Vec<u64> = trace.request_counts().into_iter().filter(|&n| n > 0).collect();
            let curve = che_classic_irm(&counts, window as f64, &sizes)?;
            write_output(out, &mut manifest, |w| Ok(curve.write_csv(w)?))?;
        }
        Method::Box => {
            manifest.param("method", "box");
            manifest.param("min_requests", a.min_requests);
            manifest.param("psi", a.psi.to_string());
            let gamma_hat = estimate_catalog_rate(&summary, window)?.gamma_hat;
            let sample = build_joint_sample_filtered(&trace, a.min_requests);
            let model = PsiModel::with_form(gamma_hat, sample, a.psi);
            let prediction = predict_box_curve_with(&model, &sizes, summary.distinct_docs)?;
            write_output(out, &mut manifest, |w| Ok(prediction.curve.write_csv(w)?))?;
            let s = &model.sample;
            let psi_at_window = psi_hat(window as f64, &model);
            if psi_at_window > (s.n1 + s.n2) as f64 {
                log::warn!(
                    "estimated mean function reaches {psi_at_window:.1} documents over the window, above the {} observed",
                    s.n1 + s.n2
                );
            }
            let meta = BoxMetadata {
                gamma_hat,
                n1: s.n1,
                n2: s.n2,
                mean_n_multi: s.mean_n_multi,
                pairs: s.pairs.len(),
                window_ms: window,
                psi: a.psi.to_string(),
                psi_hat_at_window: psi_at_window,
                characteristic_times: prediction
                    .characteristic_times
                    .iter()
                    .zip(&sizes)
                    .map(|(ct, &c)| CharacteristicTimeRow { cache_size: c, t_c_ms: ct.t_c, residual: ct.residual })
                    .collect(),
            };
            let meta_path = a.meta.clone().or_else(|| out.map(|o| sibling(o, "meta.json")));
            write_json(meta_path.as_deref(), "meta", &meta, &mut manifest)?;
        }
    }
    manifest.emit(out)?;
    Ok(Status::Ok)
}

fn generator_config(g: &GeneratorArgs, manifest: &mut RunManifest) -> Result<GeneratorConfig> {
    let config = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let json: GeneratorConfigJson =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            manifest.inputs.push(path.clone());
            let mut config = GeneratorConfig::from_json(&json)?;
            if let Some(w) = g.warmup_ms {
                config = GeneratorConfig::new(config.gamma, config.window.length(), config.pair_source, Some(w))?;
            }
            config
        }
        None => {
            let missing =
                || UsageError("--gamma, --window-ms, --lambda and --tau are required without --config".into());
            let (gamma, window, lambda, tau) = (
                g.gamma.ok_or_else(missing)?,
                g.window_ms.ok_or_else(missing)?,
                g.lambda.ok_or_else(missing)?,
                g.tau.ok_or_else(missing)?,
            );
            let pair = churn_core::che::BoxPair::new(lambda, tau)?;
            GeneratorConfig::new(gamma, window, churn_core::synth::PairSource::Fixed(pair), g.warmup_ms)?
        }
    };
    manifest.param("config", config.to_json());
    Ok(config)
}

fn generate(a: GenerateArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("generate", argv);
    manifest.seed = Some(a.seed);
    let config = generator_config(&a.generator, &mut manifest)?;
    let trace = generate_box_trace(&config, Seed(a.seed));
    log::info!("generated {} requests for {} documents", trace.len(), trace.distinct_docs());
    let out = a.output.out.as_deref();
    write_output(out, &mut manifest, |w| Ok(trace.write_csv(w)?))?;
    manifest.emit(out)?;
    Ok(Status::Ok)
}

fn validate_psi(a: ValidatePsiArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("validate-psi", argv);
    manifest.seed = Some(a.seed);
    manifest.param("reps", a.reps);
    manifest.param("max_z", a.max_z);
    let config = generator_config(&a.generator, &mut manifest)?;
    let window = config.window.length();
    let t_grid: Vec<u64> =
        if a.t_ms.is_empty() { (1..=10).map(|i| (window * i / 10).max(1)).collect() } else { a.t_ms.clone() };
    manifest.param("t_ms", &t_grid);
    let estimates = monte_carlo_psi(&config, &t_grid, a.reps, Seed(a.seed))?;
    let pairs = config.pair_source.pairs();
    let mut worst = 0.0f64;
    let out = a.output.out.as_deref();
    write_output(out, &mut manifest, |w| {
        writeln!(w, "t_ms,psi_analytic,mc_mean,mc_stderr,z_score")?;
        for e in &estimates {
            let analytic = psi_box(e.t as f64, config.gamma, &pairs);
            let z = if e.std_error > 0.0 {
                (e.mean - analytic) / e.std_error
            } else if (e.mean - analytic).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z.abs());
            writeln!(w, "{},{},{},{},{}", e.t, sig6(analytic), sig6(e.mean), sig6(e.std_error), sig6(z))?;
        }
        Ok(())
    })?;
    manifest.param("max_abs_z", sig6(worst));
    manifest.emit(out)?;
    if worst > a.max_z {
        eprintln!("validation failed: max |z| = {} exceeds {}", sig6(worst), a.max_z);
        return Ok(Status::ValidationFailed);
    }
    Ok(Status::Ok)
}

fn estimate(a: EstimateArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("estimate", argv);
    manifest.param("min_requests", a.min_requests);
    let trace = load_trace(&a.input, &mut manifest)?;
    let out = a.output.out.as_deref();
    write_output(out, &mut manifest, |w| Ok(write_estimates_csv(&trace, a.min_requests, w)?))?;
    manifest.emit(out)?;
    Ok(Status::Ok)
}

fn stats(a: StatsArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("stats", argv);
    let trace = load_trace(&a.input, &mut manifest)?;
    let summary = trace_stats(&trace);
    let out = a.output.out.as_deref();
    write_output(out, &mut manifest, |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)?;
        Ok(())
    })?;
    manifest.emit(out)?;
    Ok(Status::Ok)
}

fn subtrace(a: SubtraceArgs, argv: &[String]) -> Result<Status> {
    let mut manifest = RunManifest::new("subtrace", argv);
    manifest.param("duration_ms", a.duration_ms);
    let trace = load_trace(&a.input, &mut manifest)?;
    let sub = extract_subtrace(&trace, a.duration_ms)?;
    let out = a.output.out.as_deref();
    write_output(out, &mut manifest, |w| Ok(sub.write_csv(w)?))?;
    manifest.emit(out)?;
    Ok(Status::Ok)
}

/// Recorded arguments with the output path swapped for `out`.
fn with_output(args: &[String], out: &Path) -> Vec<String> {
    let out = out.to_string_lossy().into_owned();
    let mut result = Vec::with_capacity(args.len() + 2);
    let mut replaced = false;
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--out" || arg == "-o" {
            iter.next();
            result.extend([arg.clone(), out.clone()]);
            replaced = true;
        } else if arg.starts_with("--out=") {
            result.push(format!("--out={out}"));
            replaced = true;
        } else {
            result.push(arg.clone());
        }
    }
    if !replaced {
        result.extend(["--out".to_owned(), out]);
    }
    result
}

fn replay(a: ReplayArgs) -> Result<Status> {
    let manifest = RunManifest::load(&a.manifest)?;
    if manifest.subcommand == "replay" {
        return Err(UsageError("a replay manifest cannot be replayed".into()).into());
    }
    let args = match &a.out {
        Some(out) => with_output(&manifest.args, out),
        None => manifest.args.clone(),
    };
    let cli = Cli::try_parse_from(std::iter::once("churn".to_owned()).chain(args.iter().cloned()))
        .context("recorded arguments no longer parse")?;
    log::info!("replaying {} from {}", manifest.subcommand, a.manifest.display());
    run(cli, &args)
}
