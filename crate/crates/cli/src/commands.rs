use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use walkcast_core::backtest::{
    evaluate_classic, grid_search_classic, grid_search_lstm, run_rounds, walk_forward, ClassicEvaluation, GridResult,
    WalkForward,
};
use walkcast_core::dataio::{parse_ohlcv_csv, split_by_date, write_ohlcv_csv, Parsed};
use walkcast_core::features::{features_csv, fit_scaler};
use walkcast_core::report::{classic_report, render_report, walk_forward_report, EvalReport, Format};
use walkcast_core::synth::{synthesize, SynthKind};
use walkcast_core::{DatasetSplit, Error, Result};

use crate::config::{parse_config, sha256_hex, ModelId, RawConfig, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "walkcast", version, about = "Weekly index forecasting backtests")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Configuration file (key = value lines, optional [grid] section).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// OHLCV CSV input.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (for `ingest --synthesize`, the CSV path).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lag: Option<usize>,
    #[arg(long, global = true)]
    pub retrain_weekly: bool,
    /// Same-day predictors (lag 0).
    #[arg(long, global = true)]
    pub paper_mode: bool,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub units: Option<usize>,
    #[arg(long, global = true)]
    pub dense_units: Option<usize>,
    /// Include wall-clock timings in reports.
    #[arg(long, global = true)]
    pub record_time: bool,
    /// Also write the derived feature matrix as CSV.
    #[arg(long, global = true)]
    pub dump_features: bool,
    /// Also write the first round's trained model as JSON.
    #[arg(long, global = true)]
    pub save_model: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a CSV, or write a synthetic one.
    Ingest(IngestArgs),
    /// Run the model's evaluation protocol for the configured rounds.
    Backtest,
    /// Sweep the configured [grid] on a validation hold-out.
    Gridsearch,
    /// Re-render CSV and SVG from a stored report JSON.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_name = "KIND")]
    pub synthesize: Option<String>,
    #[arg(long, default_value_t = 1460)]
    pub days: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON written by `backtest`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub svg_round: Option<usize>,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } | Error::NonFinite(_) | Error::SingularFit => EXIT_DIVERGENCE,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// Executes one command, writing results to `stdout`. Returns the exit code.
pub fn run(cli: &Cli, stdout: &mut dyn std::io::Write) -> u8 {
    let outcome = match &cli.command {
        Command::Ingest(a) => cmd_ingest(&cli.global, a, stdout),
        Command::Backtest => cmd_backtest(&cli.global, stdout),
        Command::Gridsearch => cmd_gridsearch(&cli.global, stdout),
        Command::Report(a) => cmd_report(&cli.global, a, stdout),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("walkcast: {e}");
            exit_code(&e)
        }
    }
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_out(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(fs::write(path, body)?)
}

fn print(stdout: &mut dyn std::io::Write, text: &str) -> Result<()> {
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

/// Config file (if any) overlaid by command-line flags.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let raw = match &g.config {
        Some(p) => parse_config(&read_input(p)?)?,
        None => RawConfig::default(),
    };
    let mut c = RunConfig::from_raw(&raw)?;
    if let Some(v) = &g.data {
        c.data_path = Some(v.clone());
    }
    if let Some(v) = &g.model {
        c.model = v.parse()?;
    }
    if let Some(v) = g.rounds {
        c.rounds = v;
    }
    if let Some(v) = g.seed {
        c.seed = v;
    }
    if let Some(v) = &g.out {
        c.output_dir = v.clone();
    }
    if let Some(v) = g.lag {
        c.lag = v;
    }
    if g.paper_mode {
        c.lag = 0;
    }
    if g.retrain_weekly {
        c.retrain_each_week = true;
    }
    if let Some(v) = g.epochs {
        c.epochs = Some(v);
    }
    if let Some(v) = g.batch {
        c.batch = Some(v);
    }
    if let Some(v) = g.lr {
        c.lr = Some(v);
    }
    if let Some(v) = g.units {
        c.units = Some(v);
    }
    if let Some(v) = g.dense_units {
        c.dense_units = Some(v);
    }
    if g.record_time {
        c.record_time = true;
    }
    c.validate()?;
    Ok(c)
}

fn load(path: &Path) -> Result<(Parsed, String)> {
    let text = read_input(path)?;
    let parsed = parse_ohlcv_csv(&text)?;
    Ok((parsed, sha256_hex(text.as_bytes())))
}

fn cmd_ingest(g: &GlobalArgs, a: &IngestArgs, stdout: &mut dyn std::io::Write) -> Result<()> {
    if let Some(kind) = &a.synthesize {
        let kind: SynthKind = kind.parse()?;
        if a.days == 0 {
            return Err(Error::Config("--days must be positive".into()));
        }
        let csv = write_ohlcv_csv(&synthesize(kind, a.days, g.seed.unwrap_or(0)));
        return match &g.out {
            Some(p) => {
                write_out(p, &csv)?;
                let summary = parse_ohlcv_csv(&csv)?.summary;
                print(stdout, &format!("{}\n", serde_json::to_string(&summary)?))
            }
            None => print(stdout, &csv),
        };
    }
    let from_config = match (&g.data, &g.config) {
        (None, Some(cfg)) => RunConfig::from_raw(&parse_config(&read_input(cfg)?)?)?.data_path,
        _ => None,
    };
    let path = g
        .data
        .clone()
        .or(from_config)
        .ok_or_else(|| Error::Config("ingest needs --data <csv> or --synthesize <kind>".into()))?;
    let (parsed, _) = load(&path)?;
    print(stdout, &format!("{}\n", serde_json::to_string(&parsed.summary)?))
}

fn load_split(c: &RunConfig) -> Result<(DatasetSplit, String)> {
    let path = c.data_path.as_ref().ok_or_else(|| Error::Config("no data file: pass --data or set `data`".into()))?;
    let (parsed, sha) = load(path)?;
    let split = split_by_date(&parsed.records, c.train_start, c.train_end, c.test_start, c.test_end)?;
    Ok((split, sha))
}

fn train_mean_open(split: &DatasetSplit) -> f64 {
    split.train.iter().map(|r| r.open).sum::<f64>() / split.train.len() as f64
}

enum Runs {
    Classic(Vec<ClassicEvaluation>),
    Lstm(Vec<WalkForward>),
}

fn summary_line(report: &EvalReport) -> String {
    let a = &report.aggregates.mean;
    let mut s = format!("{} mean RMSE {:.2} (", report.model_id, a.rmse);
    for (i, d) in a.day_rmse.iter().enumerate() {
        let _ = write!(s, "{}{d:.0}", if i > 0 { " " } else { "" });
    }
    let _ = write!(s, ") RMSE/Mean {:.4}", report.ratio_rmse_mean);
    if let Some(r) = report.correlation {
        let _ = write!(s, " correlation {r:.4}");
    }
    s.push('\n');
    s
}

fn cmd_backtest(g: &GlobalArgs, stdout: &mut dyn std::io::Write) -> Result<()> {
    let c = resolve_config(g)?;
    let (split, sha) = load_split(&c)?;
    let digest = c.digest(&sha);
    let out = c.output_dir.clone();
    let name = c.model.name();

    if g.dump_features {
        let scaler = fit_scaler(&split.train)?;
        let mut all = split.train.clone();
        all.extend_from_slice(&split.test);
        write_out(&out.join(format!("{name}_features.csv")), &features_csv(&all, &scaler)?)?;
    }

    let runs = match c.model {
        ModelId::Classic(_) => {
            Runs::Classic(run_rounds(c.rounds, c.seed, |s| evaluate_classic(&c.model_spec(s)?, &split, c.lag))?)
        }
        ModelId::Lstm(_) => {
            let arch = c.architecture()?;
            Runs::Lstm(run_rounds(c.rounds, c.seed, |s| walk_forward(&arch, &split, &c.training(s), c.retrain_each_week))?)
        }
    };
    let report = match &runs {
        Runs::Classic(evals) => {
            classic_report(name, &digest, evals, train_mean_open(&split), split.test_mean_open(), c.record_time)?
        }
        Runs::Lstm(wf) => {
            let results: Vec<_> = wf.iter().map(|w| w.result.clone()).collect();
            walk_forward_report(name, &digest, &results, split.test_mean_open(), c.record_time)?
        }
    };
    render_report(&report, &[Format::Json, Format::Csv, Format::Svg], &out, c.svg_round)?;
    if g.save_model {
        let json = match &runs {
            Runs::Classic(e) => e[0].model.to_json()?,
            Runs::Lstm(w) => w[0].model.to_json()?,
        };
        write_out(&out.join(format!("{name}_model.json")), &json)?;
    }
    print(stdout, &summary_line(&report))
}

#[derive(Serialize)]
struct BestConfig<'a> {
    model: &'a str,
    config_digest: &'a str,
    best: serde_json::Map<String, serde_json::Value>,
    score: f64,
    candidates: usize,
}

pub fn trace_csv(result: &GridResult) -> String {
    let mut out = String::new();
    if let Some(first) = result.trace.first() {
        let names: Vec<&str> = first.point.iter().map(|(k, _)| k.as_str()).collect();
        let _ = writeln!(out, "{},score", names.join(","));
    }
    for t in &result.trace {
        let vals: Vec<String> = t.point.iter().map(|(_, v)| v.to_string()).collect();
        let _ = writeln!(out, "{},{}", vals.join(","), t.score);
    }
    out
}

fn cmd_gridsearch(g: &GlobalArgs, stdout: &mut dyn std::io::Write) -> Result<()> {
    let c = resolve_config(g)?;
    if c.grid.is_empty() {
        return Err(Error::Config("gridsearch needs a non-empty [grid] section".into()));
    }
    let (split, sha) = load_split(&c)?;
    let digest = c.digest(&sha);
    let result = match c.model {
        ModelId::Classic(_) => grid_search_classic(&c.model_spec(c.seed)?, &c.grid, &split, c.lag, c.validation_fraction)?,
        ModelId::Lstm(_) => {
            grid_search_lstm(&c.architecture()?, &c.training(c.seed), &c.grid, &split, c.validation_fraction)?
        }
    };
    let name = c.model.name();
    write_out(&c.output_dir.join(format!("{name}_grid_trace.csv")), &trace_csv(&result))?;
    let best: serde_json::Map<_, _> =
        result.best_point().iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
    let doc = BestConfig {
        model: name,
        config_digest: &digest,
        best,
        score: result.trace[result.best].score,
        candidates: result.trace.len(),
    };
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    write_out(&c.output_dir.join(format!("{name}_grid_best.json")), &json)?;
    let pretty: Vec<String> = result.best_point().iter().map(|(k, v)| format!("{k}={v}")).collect();
    print(stdout, &format!("{name} best {} validation RMSE {:.2}\n", pretty.join(" "), doc.score))
}

fn cmd_report(g: &GlobalArgs, a: &ReportArgs, stdout: &mut dyn std::io::Write) -> Result<()> {
    let report = EvalReport::from_json(&read_input(&a.input)?)?;
    let dir = g
        .out
        .clone()
        .unwrap_or_else(|| a.input.parent().map(Path::to_path_buf).unwrap_or_default());
    let round = a.svg_round.unwrap_or(1);
    let written = render_report(&report, &[Format::Csv, Format::Svg], &dir, round)?;
    for p in written {
        print(stdout, &format!("{}\n", p.display()))?;
    }
    Ok(())
}
