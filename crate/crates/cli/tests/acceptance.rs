//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p churn-cli --test acceptance`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use churn_core::che::{branches, characteristic_time, psi_box, BoxPair};
use churn_core::estimators::{lifespan_from_span, observations, solve_n_prime, truncated_poisson_mean};
use churn_core::lru::{brute_force_lru, stack_distances};
use churn_core::shuffle::{randomize, RandomizationKind};
use churn_core::synth::{generate_irm_trace, monte_carlo_psi, zipf_weights, GeneratorConfig};
use churn_core::trace::parse_trace;
use churn_core::{Millis, ObservationWindow, Seed, Trace};

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(u8, &str, Check); 8] = [
        (1, "LRU stack distances equal brute-force LRU", lru_equivalence),
        (2, "box-model prediction MARE <= 3%", box_prediction),
        (3, "classic Che on IRM Zipf(0.8) within 0.02", classic_che_irm),
        (4, "global randomization underestimates, global MARE > local MARE", irm_underestimation),
        (5, "Monte Carlo distinct-document counts match psi", psi_monte_carlo),
        (6, "estimator correctness", estimator_correctness),
        (7, "randomization preservation", randomization_preservation),
        (8, "branch continuity", branch_continuity),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn workdir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temp dir")).path()
}

fn churn(args: &[&str]) -> Result<String, String> {
    let out =
        Command::new(env!("CARGO_BIN_EXE_churn")).args(args).output().map_err(|e| format!("running churn: {e}"))?;
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    if !out.status.success() {
        return Err(format!("churn {args:?} failed: {stderr}"));
    }
    Ok(stderr)
}

/// `(cache_size, hit_ratio)` rows of a curve CSV, keyed by the first
/// column when the file has a `kind` column.
fn read_curves(path: &Path) -> BTreeMap<String, Vec<(u64, f64)>> {
    let text = std::fs::read_to_string(path).expect("curve file");
    let mut lines = text.lines();
    let header = lines.next().expect("header");
    let keyed = header.starts_with("kind,");
    let mut curves: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (key, rest) = if keyed { (f[0].to_owned(), &f[1..]) } else { (String::new(), &f[..]) };
        curves.entry(key).or_default().push((rest[0].parse().unwrap(), rest[2].parse().unwrap()));
    }
    curves
}

fn mean_abs_rel_err(reference: &[(u64, f64)], model: &[(u64, f64)]) -> f64 {
    assert_eq!(reference.iter().map(|p| p.0).collect::<Vec<_>>(), model.iter().map(|p| p.0).collect::<Vec<_>>());
    reference.iter().zip(model).map(|(r, m)| ((r.1 - m.1) / r.1).abs()).sum::<f64>() / reference.len() as f64
}

fn random_trace(seed: u64, requests: usize, docs: u32, window: Millis) -> Trace {
    let mut rng = Seed(seed).rng();
    // skewed popularity so that every cache size sees a mix of hits and misses
    let names: Vec<String> = (0..docs).map(|d| format!("doc{d}")).collect();
    let records: Vec<(Millis, &str)> = (0..requests)
        .map(|_| {
            let u: f64 = rng.random();
            let d = ((docs as f64).powf(u) as u32 - 1).min(docs - 1);
            (rng.random_range(0..=window), names[d as usize].as_str())
        })
        .collect();
    Trace::from_named(records.into_iter().map(|(t, d)| (t, d, None)), ObservationWindow::new(window).unwrap()).unwrap()
}

fn lru_equivalence() -> Result<String, String> {
    let sizes = [1u64, 2, 3, 5, 10, 20, 50, 100, 500, 1000];
    for i in 0..20 {
        let docs = Seed(i).rng().random_range(50..=1000);
        let trace = random_trace(100 + i, 10_000, docs, 1_000_000);
        let profile = stack_distances(&trace);
        for &c in &sizes {
            let (fast, slow) = (profile.hits_at(c), brute_force_lru(&trace, c));
            ensure(fast == slow, || format!("trace {i}, C={c}: stack {fast} vs brute force {slow}"))?;
        }
    }
    Ok("20 traces x 10 sizes identical".into())
}

const BOX_WINDOW_MS: u64 = 1_000_000;
const BOX_GRID: &str = "rlog:0.01:0.4:20";

/// Generates the heterogeneous box-model trace once: gamma * A = 3e4,
/// lambda log-uniform on [1e-5, 1e-3] per ms, tau log-uniform on
/// [3e4, 3e5] ms.
fn box_trace() -> &'static Path {
    static TRACE: OnceLock<PathBuf> = OnceLock::new();
    TRACE.get_or_init(|| {
        let mut rng = Seed(2024).rng();
        fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
            lo * (hi / lo).powf(rng.random::<f64>())
        }
        let pairs: Vec<[f64; 2]> =
            (0..5_000).map(|_| [log_uniform(&mut rng, 1e-5, 1e-3), log_uniform(&mut rng, 3e4, 3e5)]).collect();
        let config = serde_json::json!({
            "gamma": 3e4 / BOX_WINDOW_MS as f64,
            "window_ms": BOX_WINDOW_MS,
            "pairs": pairs,
        });
        let dir = workdir();
        let config_path = dir.join("box.json");
        std::fs::write(&config_path, config.to_string()).unwrap();
        let trace = dir.join("box.csv");
        churn(&[
            "generate",
            "--config",
            config_path.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            trace.to_str().unwrap(),
        ])
        .expect("generate");
        trace
    })
}

fn box_prediction() -> Result<String, String> {
    let trace = box_trace().to_str().unwrap();
    let dir = workdir();
    let window = BOX_WINDOW_MS.to_string();
    let sim = dir.join("sim.csv");
    let pred = dir.join("box_pred.csv");
    churn(&["simulate", trace, "--window-ms", &window, "--sizes", BOX_GRID, "--out", sim.to_str().unwrap()])?;
    churn(&[
        "predict",
        trace,
        "--method",
        "box",
        "--window-ms",
        &window,
        "--sizes",
        BOX_GRID,
        "--out",
        pred.to_str().unwrap(),
    ])?;
    let (sim, pred) = (&read_curves(&sim)[""], &read_curves(&pred)[""]);
    ensure(sim.len() == 20, || format!("grid has {} points", sim.len()))?;
    let m = mean_abs_rel_err(sim, pred);
    let (lo, hi) = (sim[0].1, sim[sim.len() - 1].1);
    ensure(m <= 0.03, || format!("MARE {:.4} (simulated HR {lo:.3}..{hi:.3})", m))?;
    Ok(format!("MARE {:.4}, simulated HR {lo:.3}..{hi:.3}", m))
}

fn classic_che_irm() -> Result<String, String> {
    let trace = generate_irm_trace(&zipf_weights(10_000, 0.8), 1_000_000, 1_000_000, Seed(8)).unwrap();
    let path = workdir().join("irm.csv");
    trace.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let dir = workdir();
    let (sim, che) = (dir.join("irm_sim.csv"), dir.join("irm_che.csv"));
    let p = path.to_str().unwrap();
    churn(&["simulate", p, "--sizes", "log:1:max:40", "--out", sim.to_str().unwrap()])?;
    churn(&["predict", p, "--method", "classic", "--sizes", "log:1:max:40", "--out", che.to_str().unwrap()])?;
    let (sim, che) = (&read_curves(&sim)[""], &read_curves(&che)[""]);
    let worst = sim.iter().zip(che).map(|(s, c)| (s.1 - c.1).abs()).fold(0.0, f64::max);
    ensure(worst <= 0.02, || format!("max |error| {worst:.4}"))?;
    Ok(format!("max |error| {worst:.4} over {} sizes", sim.len()))
}

fn irm_underestimation() -> Result<String, String> {
    let trace = box_trace().to_str().unwrap();
    let out = workdir().join("semi.csv");
    let window = BOX_WINDOW_MS.to_string();
    churn(&[
        "shuffle",
        trace,
        "--kind",
        "all",
        "--seed",
        "5",
        "--window-ms",
        &window,
        "--sizes",
        BOX_GRID,
        "--out",
        out.to_str().unwrap(),
    ])?;
    let curves = read_curves(&out);
    let distinct = {
        let t = parse_trace(std::fs::File::open(trace).unwrap(), Some(BOX_WINDOW_MS)).unwrap();
        t.distinct_docs() as f64
    };
    let (original, global, local) = (&curves["original"], &curves["global"], &curves["local"]);
    for (o, g) in original.iter().zip(global) {
        if (o.0 as f64) / distinct < 0.1 {
            ensure(g.1 <= o.1 + 0.01, || format!("C={}: global {:.4} > original {:.4} + 0.01", o.0, g.1, o.1))?;
        }
    }
    let (mg, ml) = (mean_abs_rel_err(original, global), mean_abs_rel_err(original, local));
    ensure(mg > ml, || format!("global MARE {mg:.4} <= local MARE {ml:.4}"))?;
    Ok(format!("global MARE {mg:.4} > local MARE {ml:.5}"))
}

fn psi_monte_carlo() -> Result<String, String> {
    let config = GeneratorConfig::fixed(1e-3, 20_000, 1e-3, 2_000.0).unwrap();
    let pairs = config.pair_source.pairs();
    let t_grid: Vec<Millis> = (1..=10).map(|i| i * 2_000).collect();
    let estimates = monte_carlo_psi(&config, &t_grid, 500, Seed(77)).unwrap();
    let mut worst_z = 0.0f64;
    let mut worst_var = 0.0f64;
    for e in &estimates {
        let analytic = psi_box(e.t as f64, config.gamma, &pairs);
        let z = (e.mean - analytic) / e.std_error;
        let zv = (e.variance - e.mean) / e.variance_std_error;
        ensure(z.abs() <= 3.0, || format!("t={}: z = {z:.2}", e.t))?;
        ensure(zv.abs() <= 4.0, || {
            format!("t={}: variance {:.3} vs mean {:.3} ({zv:.2} s.e.)", e.t, e.variance, e.mean)
        })?;
        worst_z = worst_z.max(z.abs());
        worst_var = worst_var.max(zv.abs());
    }
    Ok(format!("max |z| {worst_z:.2}, max variance deviation {worst_var:.2} s.e."))
}

fn estimator_correctness() -> Result<String, String> {
    let mut worst = 0.0f64;
    for n in 1..=1_000_000u64 {
        let x = solve_n_prime(n).unwrap();
        let r = (truncated_poisson_mean(x) - n as f64).abs();
        worst = worst.max(r);
        ensure(r <= 1e-10, || format!("n={n}: residual {r:e}"))?;
    }

    let mut rng = Seed(6).rng();
    let reps = 100_000;
    let mut sum = 0.0;
    for _ in 0..reps {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..5 {
            let x = rng.random::<f64>() * 100.0;
            lo = lo.min(x);
            hi = hi.max(x);
        }
        sum += lifespan_from_span(hi - lo, 5);
    }
    let mean = sum / reps as f64;
    ensure((99.0..=101.0).contains(&mean), || format!("mean tau_hat {mean:.3} outside [99, 101]"))?;

    let mut worst_ct = 0.0f64;
    for _ in 0..100 {
        let pairs: Vec<BoxPair> = (0..rng.random_range(1..20))
            .map(|_| {
                BoxPair::new(10f64.powf(rng.random_range(-6.0..0.0)), 10f64.powf(rng.random_range(0.0..7.0))).unwrap()
            })
            .collect();
        let gamma = 10f64.powf(rng.random_range(-5.0..0.0));
        let t_star = 10f64.powf(rng.random_range(0.0..7.0));
        let c = psi_box(t_star, gamma, &pairs);
        let ct = characteristic_time(c, |t| psi_box(t, gamma, &pairs), 1_000.0).unwrap();
        let residual = (psi_box(ct.t_c, gamma, &pairs) - c).abs();
        ensure(residual <= 1e-6 * c, || format!("C={c:e}: residual {residual:e}"))?;
        worst_ct = worst_ct.max(residual / c);
    }
    Ok(format!("n' residual <= {worst:e}, mean tau_hat {mean:.3}, t_C relative residual <= {worst_ct:e}"))
}

fn per_doc(trace: &Trace) -> BTreeMap<String, Vec<Millis>> {
    let mut map: BTreeMap<String, Vec<Millis>> = BTreeMap::new();
    for e in trace.events() {
        map.entry(trace.doc_name(e.doc).to_owned()).or_default().push(e.timestamp);
    }
    map
}

fn randomization_preservation() -> Result<String, String> {
    for i in 0..10 {
        let trace = random_trace(500 + i, 5_000, 300, 100_000);
        let before = per_doc(&trace);
        for kind in RandomizationKind::ALL {
            let shuffled = randomize(&trace, kind, Seed(i));
            let after = per_doc(&shuffled);
            ensure(after.len() == before.len(), || format!("trace {i} {kind}: document set changed"))?;
            ensure(shuffled.len() == trace.len(), || format!("trace {i} {kind}: request count changed"))?;
            for (doc, times) in &before {
                let other = &after[doc];
                ensure(times.len() == other.len(), || format!("trace {i} {kind}: count of {doc} changed"))?;
                let gaps = |v: &[Millis]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
                match kind {
                    RandomizationKind::Global => {}
                    RandomizationKind::Positional => {
                        ensure(gaps(times) == gaps(other), || format!("trace {i}: gaps of {doc} changed"))?
                    }
                    RandomizationKind::Local => {
                        ensure(times.first() == other.first() && times.last() == other.last(), || {
                            format!("trace {i}: endpoints of {doc} changed")
                        })?
                    }
                }
            }
            if kind == RandomizationKind::Local {
                let (a, b) = (observations(&trace), observations(&shuffled));
                ensure(a == b, || format!("trace {i}: (n, first, last) observations changed"))?;
            }
        }
    }
    Ok("10 traces x 3 randomizations".into())
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn branch_continuity() -> Result<String, String> {
    let mut rng = Seed(88).rng();
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let p = BoxPair::new(10f64.powf(rng.random_range(-7.0..1.0)), 10f64.powf(rng.random_range(0.0..8.0))).unwrap();
        let t = p.tau;
        for (name, a, b) in [
            ("psi", branches::psi_long(p, t), branches::psi_short(p, t)),
            ("L", branches::l_long(p, t), branches::l_short(p, t)),
            ("hits", branches::hits_long(p, t), branches::hits_short(p, t)),
        ] {
            let d = rel_diff(a, b);
            ensure(d <= 1e-12, || format!("{name} at lambda={:e}, tau={:e}: {a:e} vs {b:e}", p.lambda, p.tau))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("max relative gap {worst:e} over 1000 pairs"))
}
