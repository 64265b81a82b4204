use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use contrastad::dataio::{
    generate_synthetic, make_windows, spread_segments, Dataset, DEFAULT_LABEL_COLUMN, TEST_FILE, TRAIN_FILE,
};
use contrastad::dgcl::{build_topology, edge_density, write_diagnostics};
use contrastad::diffcore::Tensor;
use contrastad::eval::{aggregate_runs, evaluate_run, save_score_trace, score_series, Aggregate, EvalReport};
use contrastad::training::{
    lambda_grid, lambda_sweep, prepare, save_loss_trace, train as fit, Model, PreparedData, SweepRow, TrainConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{write_atomic, Manifest};
use crate::{verbose, ConfigArgs, EvalArgs, InspectArgs, ScoreArgs, Split, SweepArgs, SynthArgs, TrainArgs, Usage};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";
pub const SWEEP_REPORT_FILE: &str = "sweep_report.json";
pub const DIAGNOSTICS_FILE: &str = "graph_diagnostics.csv";

macro_rules! progress {
    ($($t:tt)*) => {
        if verbose() {
            eprintln!($($t)*);
        }
    };
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_data(dir: &Path, require_labels: bool, m: &mut Manifest) -> Result<Dataset> {
    let ds = Dataset::load_dir(dir, DEFAULT_LABEL_COLUMN, require_labels)?;
    m.input(&dir.join(TRAIN_FILE))?;
    m.input(&dir.join(TEST_FILE))?;
    Ok(ds)
}

fn resolve_config(args: &ConfigArgs, m: &mut Manifest) -> Result<TrainConfig> {
    let cfg = args.resolve()?;
    if let Some(p) = &args.config {
        m.input(p)?;
    }
    Ok(cfg)
}

fn positive(name: &str, v: Option<usize>) -> Result<Option<usize>> {
    match v {
        Some(0) => Err(Usage(format!("--{name} must be positive")).into()),
        v => Ok(v),
    }
}

fn pick<'a>(data: &'a PreparedData, split: Split) -> (&'a Tensor, Option<&'a [u8]>) {
    match split {
        Split::Train => (&data.train, None),
        Split::Validation => (&data.validation, None),
        Split::Test => (&data.test, data.test_labels.as_deref()),
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if a.anomalies > 0 && (a.anomaly_len == 0 || a.anomaly_len * (a.anomalies + 1) > a.length - a.length / 2) {
        return Err(Usage(format!(
            "{} segments of {} steps do not fit in a test half of {} steps",
            a.anomalies,
            a.anomaly_len,
            a.length - a.length / 2
        ))
        .into());
    }
    let segments = spread_segments(a.length, a.anomalies, a.anomaly_len);
    let ds = generate_synthetic(a.features, a.length, &segments, a.seed)?;
    ds.save_dir(&a.out)?;
    let mut m = Manifest::new("synth");
    m.seed = Some(a.seed);
    m.parameters = json!({
        "features": a.features,
        "length": a.length,
        "anomalies": a.anomalies,
        "anomaly_len": a.anomaly_len,
        "segments": segments,
    });
    m.output(&a.out.join(TRAIN_FILE));
    m.output(&a.out.join(TEST_FILE));
    m.write(&a.out)?;
    progress!("wrote {} and {} to {}", TRAIN_FILE, TEST_FILE, a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut m = Manifest::new("train");
    let mut cfg = resolve_config(&a.cfg, &mut m)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let ds = load_data(&a.data, false, &mut m)?;
    let data = prepare(&ds, &cfg)?;
    create_out(&a.out)?;
    progress!("training {} epochs on {} x {} (seed {})", cfg.epochs, data.train.rows(), data.train.cols(), cfg.seed);
    let outcome = fit(&data.train, Some(&data.validation), &cfg)?;

    let ckpt = a.out.join(CHECKPOINT_FILE);
    let trace = a.out.join(LOSS_TRACE_FILE);
    let config = a.out.join(CONFIG_FILE);
    outcome.model.save(&ckpt)?;
    save_loss_trace(&trace, &outcome.trace)?;
    write_atomic(&config, cfg.to_toml_string().as_bytes())?;
    if let Some(last) = outcome.trace.last() {
        progress!("epoch {}: train loss {:.6}", last.epoch, last.train.total);
    }
    m.seed = Some(cfg.seed);
    m.config = Some(cfg);
    for p in [&ckpt, &trace, &config] {
        m.output(p);
    }
    m.write(&a.out)?;
    Ok(())
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let mut m = Manifest::new("score");
    let mut model = Model::load(&a.model)?;
    m.input(&a.model)?;
    if let Some(s) = positive("score-stride", a.score_stride)? {
        model.config.stride = s;
    }
    let ds = load_data(&a.data, false, &mut m)?;
    let data = prepare(&ds, &model.config)?;
    let (series, labels) = pick(&data, a.split);
    let trace = score_series(&model, series)?;
    create_out(&a.out)?;
    let path = a.out.join(format!("scores_{}.csv", split_name(a.split)));
    save_score_trace(&path, &trace, labels)?;
    m.seed = Some(model.config.seed);
    m.config = Some(model.config.clone());
    m.parameters = json!({ "split": split_name(a.split), "score_stride": model.config.stride });
    m.output(&path);
    m.write(&a.out)?;
    progress!("scored {} steps into {}", trace.len(), path.display());
    Ok(())
}

/// Per-run metrics without the prediction vectors.
#[derive(Debug, Serialize)]
struct RunRow {
    seed: u64,
    threshold: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    auc: f64,
    raw_precision: f64,
    raw_recall: f64,
    raw_f1: f64,
}

impl From<&EvalReport> for RunRow {
    fn from(r: &EvalReport) -> Self {
        Self {
            seed: r.seed,
            threshold: r.threshold,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            auc: r.auc,
            raw_precision: r.raw.precision,
            raw_recall: r.raw.recall,
            raw_f1: r.raw.f1,
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalJson {
    runs: Vec<RunRow>,
    aggregate: Aggregate,
}

fn eval_table(reports: &[EvalReport], agg: &Aggregate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>10} {:>9} {:>9} {:>9} {:>9}", "seed", "threshold", "precision", "recall", "f1", "auc");
    for r in reports {
        let _ = writeln!(
            s,
            "{:>6} {:>10.6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            r.seed, r.threshold, r.precision, r.recall, r.f1, r.auc
        );
    }
    let pm = |m: &contrastad::eval::MetricSummary| format!("{:.4}±{:.4}", m.mean, m.std);
    let _ = writeln!(
        s,
        "{:>6} {:>10} {:>9} {:>9} {:>9} {:>9}",
        "mean",
        "",
        pm(&agg.precision),
        pm(&agg.recall),
        pm(&agg.f1),
        pm(&agg.auc)
    );
    s
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut m = Manifest::new("eval");
    let score_stride = positive("score-stride", a.score_stride)?;
    let mut reports = Vec::new();
    let cfg = if let Some(path) = &a.model {
        let mut model = Model::load(path)?;
        m.input(path)?;
        let ds = load_data(&a.data, true, &mut m)?;
        let data = prepare(&ds, &model.config)?;
        if let Some(s) = score_stride {
            model.config.stride = s;
        }
        reports.push(evaluate_run(&model, &data)?);
        m.seeds.push(model.config.seed);
        model.config
    } else {
        if a.seeds.is_empty() {
            return Err(Usage("--seeds needs at least one seed".into()).into());
        }
        let cfg = resolve_config(&a.cfg, &mut m)?;
        let ds = load_data(&a.data, true, &mut m)?;
        let data = prepare(&ds, &cfg)?;
        for &seed in &a.seeds {
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            progress!("seed {seed}: training {} epochs", run_cfg.epochs);
            let mut model = fit(&data.train, Some(&data.validation), &run_cfg)?.model;
            if let Some(s) = score_stride {
                model.config.stride = s;
            }
            let r = evaluate_run(&model, &data)?;
            progress!("seed {seed}: f1 {:.4}, auc {:.4}", r.f1, r.auc);
            reports.push(r);
        }
        m.seeds = a.seeds.clone();
        cfg
    };
    let agg = aggregate_runs(&reports)?;
    print!("{}", eval_table(&reports, &agg));

    create_out(&a.out)?;
    let path = a.out.join(EVAL_REPORT_FILE);
    let report = EvalJson {
        runs: reports.iter().map(RunRow::from).collect(),
        aggregate: agg,
    };
    write_atomic(&path, format!("{}\n", serde_json::to_string_pretty(&report)?).as_bytes())?;
    m.config = Some(cfg);
    m.parameters = json!({ "score_stride": score_stride });
    m.output(&path);
    m.write(&a.out)?;
    Ok(())
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("lambda,dgcl,f1,f1_std,auc,auc_std\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.lambda, r.dgcl, r.f1, r.f1_std, r.auc, r.auc_std);
    }
    s
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let mut m = Manifest::new("sweep");
    if a.seeds.is_empty() {
        return Err(Usage("--seeds needs at least one seed".into()).into());
    }
    let cfg = resolve_config(&a.cfg, &mut m)?;
    let lambdas = a.lambdas.clone().unwrap_or_else(lambda_grid);
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Usage("--lambdas must be finite".into()).into());
    }
    let ds = load_data(&a.data, true, &mut m)?;
    let data = prepare(&ds, &cfg)?;
    progress!("sweeping {} weights over {} seeds", lambdas.len(), a.seeds.len());
    let rows = lambda_sweep(&data, &cfg, &lambdas, &a.seeds)?;

    println!("{:>7} {:>5} {:>17} {:>17}", "lambda", "dgcl", "f1", "auc");
    for r in &rows {
        println!(
            "{:>7.2} {:>5} {:>17} {:>17}",
            r.lambda,
            r.dgcl,
            format!("{:.4}±{:.4}", r.f1, r.f1_std),
            format!("{:.4}±{:.4}", r.auc, r.auc_std)
        );
    }

    create_out(&a.out)?;
    let csv = a.out.join(SWEEP_CSV_FILE);
    let report = a.out.join(SWEEP_REPORT_FILE);
    write_atomic(&csv, sweep_csv(&rows).as_bytes())?;
    write_atomic(&report, format!("{}\n", serde_json::to_string_pretty(&json!({ "rows": rows }))?).as_bytes())?;
    m.config = Some(cfg);
    m.seeds = a.seeds.clone();
    m.parameters = json!({ "lambdas": lambdas });
    m.output(&csv);
    m.output(&report);
    m.write(&a.out)?;
    Ok(())
}

pub fn inspect_graph(a: &InspectArgs) -> Result<()> {
    let mut m = Manifest::new("inspect-graph");
    let cfg = resolve_config(&a.cfg, &mut m)?;
    let every = positive("every", a.every)?.unwrap_or(cfg.window);
    let ds = load_data(&a.data, false, &mut m)?;
    let data = prepare(&ds, &cfg)?;
    let (series, _) = pick(&data, a.split);
    let mut windows = make_windows(series, cfg.window, every)?;
    if let Some(limit) = a.limit {
        windows.truncate(limit);
    }
    let dgcl = cfg.dgcl();
    let topologies = windows
        .iter()
        .map(|w| Ok((w.start, build_topology(&w.values, &dgcl)?)))
        .collect::<Result<Vec<_>>>()?;

    create_out(&a.out)?;
    let path: PathBuf = a.out.join(DIAGNOSTICS_FILE);
    write_diagnostics(&path, &topologies)?;

    let n = ds.n_features();
    let budget = dgcl.budget(n).edges()?;
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (_, t) in &topologies {
        *pairs.entry((t.pair.p, t.pair.q)).or_default() += 1;
    }
    println!(
        "{} windows, {n} nodes, {budget} edges per snapshot ({:.2}% density)",
        topologies.len(),
        100.0 * edge_density(budget, n)
    );
    if let Some(((p, q), c)) = pairs.iter().max_by_key(|(k, c)| (**c, std::cmp::Reverse(**k))) {
        println!("most frequent divergent pair: snapshots {p} and {q} in {c} windows");
    }

    m.config = Some(cfg);
    m.parameters = json!({ "split": split_name(a.split), "every": every, "limit": a.limit });
    m.output(&path);
    m.write(&a.out)?;
    Ok(())
}
