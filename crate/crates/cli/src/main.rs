use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use altprop::bench::{render_bench, run_bench};
use altprop::data::{
    convert_geom_gcn, convert_linqs, generate_sbm, load_dataset_dir, make_split, save_dataset, ConvertReport,
    FeatureFormat, LabelRate, LoadOptions, SbmParams, PLANETOID_RECIPE,
};
use altprop::experiment::{
    load_experiment_data, render_summary, run_experiment, run_seed, split_seed, summarize, write_record,
    DatasetSpec, ExperimentConfig,
};
use altprop::memory::TrackingAllocator;
use altprop::propagation::Rule;
use altprop::trainer::{LabelData, Rounds};
use altprop::verify::{run_verify, VerifyOptions};
use altprop::{Error, Result};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

#[derive(Parser)]
#[command(name = "altprop", version, about = "Alternating label propagation and MLP training for node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid; writes per-run JSON lines and prints a summary.
    Train(TrainArgs),
    /// Count SpMM calls and time one run per round schedule.
    Bench(BenchArgs),
    /// Run the oracle suite; exits 4 on any failure.
    Verify(VerifyArgs),
    /// Write a stochastic block model dataset in the native layout.
    Synth(SynthArgs),
    /// Write split index lists as JSON.
    Split(SplitArgs),
    /// Convert a public dataset layout into the native layout.
    #[command(subcommand)]
    Convert(ConvertCommand),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Zero wall-clock fields so output is byte-identical across runs.
    #[arg(long)]
    deterministic: bool,
    /// JSON-lines destination; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config supplying the dataset and the first grid cell.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or `sbm`; overrides the config's dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated round counts; `full` runs one round per epoch.
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    k: Vec<Rounds>,
    #[arg(long, default_value = "mse")]
    rule: Rule,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    deterministic: bool,
    /// JSON-lines destination for the rows.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run seeds `seed+1 ..` up to this many in total and compare pass sets.
    #[arg(long, default_value_t = 1)]
    sweep: u64,
    /// Debug hook scaling every descent step; 2 doubles the step size.
    #[arg(long, default_value_t = 1.0)]
    step_scale: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0.05)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write `features.txt` instead of the binary feature file.
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Labels per class (e.g. `20`) or a fraction (e.g. `0.6`).
    #[arg(long)]
    label_rate: LabelRate,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ConvertCommand {
    /// `<name>.content` and `<name>.cites` files.
    Linqs { content: PathBuf, cites: PathBuf, out: PathBuf },
    /// `out1_node_feature_label.txt` and `out1_graph_edges.txt` files.
    GeomGcn { nodes: PathBuf, edges: PathBuf, out: PathBuf },
    /// Print the export recipe for pickled Planetoid files.
    Planetoid,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json_line<W: Write, S: serde::Serialize>(out: &mut W, value: &S, path: &Path) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    out.write_all(b"\n").map_err(io_err(path))
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.deterministic |= args.deterministic;
    if args.out.is_some() {
        cfg.out = args.out;
    }
    let ds = load_experiment_data(&cfg)?;
    eprintln!("{}: n={} d={} c={}; {} runs", ds.name, ds.n(), ds.feature_dim(), ds.classes, cfg.n_runs());
    let writer = match &cfg.out {
        Some(path) => Some((Mutex::new(create(path)?), path.clone())),
        None => None,
    };
    let write_failed = Mutex::new(None);
    let records = run_experiment(&cfg, &ds, &|rec| {
        if let Some((w, path)) = &writer {
            let mut w = w.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = write_record(&mut *w, rec) {
                write_failed.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert((path.clone(), e));
            }
        }
    })?;
    if let Some((path, e)) = write_failed.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(Error::Io { path, source: e });
    }
    if let Some((w, path)) = writer {
        w.into_inner().unwrap_or_else(|e| e.into_inner()).flush().map_err(io_err(&path))?;
    }
    print!("{}", render_summary(&summarize(&records)));
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let mut cfg = match (&args.config, &args.dataset) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(d)) => ExperimentConfig::parse(&format!("dataset = {d}\n"))?,
        (None, None) => {
            return Err(Error::Config {
                field: "dataset".into(),
                msg: "pass --config or --dataset".into(),
            })
        }
    };
    if let (Some(_), Some(d)) = (&args.config, &args.dataset) {
        if d != "sbm" {
            cfg.dataset = DatasetSpec::Dir(PathBuf::from(d));
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ds = load_experiment_data(&cfg)?;
    let rate = cfg.label_rates[0];
    let split = make_split(&ds.labels, ds.classes, rate, split_seed(cfg.seed, 0))?;
    let labels = LabelData::new(ds.labels.clone(), ds.classes, &split)?;
    let mut train_cfg = cfg.grid[0].config.clone();
    train_cfg.seed = run_seed(cfg.seed, 0, 0);
    eprintln!("{}: n={} d={} c={}; label rate {rate}", ds.name, ds.n(), ds.feature_dim(), ds.classes);
    let mut rows = run_bench(&train_cfg, args.rule, &args.k, &ds.graph, &ds.features, &labels)?;
    if args.deterministic || cfg.deterministic {
        for r in &mut rows {
            r.wall_time_secs = 0.0;
        }
    }
    print!("{}", render_bench(&rows));
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        for r in &rows {
            write_json_line(&mut w, r, path)?;
        }
        w.flush().map_err(io_err(path))?;
    }
    if rows.iter().all(|r| r.counters_exact()) {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::Oracle("SpMM counts differ from k·K·rule cost".into()))
    }
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut sink = match &args.out {
        Some(path) => Some((create(path)?, path.clone())),
        None => None,
    };
    let stdout_path = PathBuf::from("<stdout>");
    let mut stdout = std::io::stdout().lock();
    let mut pass_sets = Vec::new();
    for seed in args.seed..args.seed + args.sweep.max(1) {
        let report = run_verify(&VerifyOptions {
            seed,
            step_scale: args.step_scale,
        })?;
        for check in &report {
            write_json_line(&mut stdout, check, &stdout_path)?;
            if let Some((w, path)) = &mut sink {
                write_json_line(w, check, path)?;
            }
        }
        pass_sets.push(report.iter().map(|c| (c.check.clone(), c.passed)).collect::<Vec<_>>());
    }
    if let Some((mut w, path)) = sink {
        w.flush().map_err(io_err(&path))?;
    }
    let consistent = pass_sets.windows(2).all(|w| w[0] == w[1]);
    if pass_sets.len() > 1 {
        let line = serde_json::json!({ "check": "seed_sweep", "seeds": pass_sets.len(), "passed": consistent });
        writeln!(stdout, "{line}").map_err(io_err(&stdout_path))?;
    }
    let failed: Vec<&str> = pass_sets
        .iter()
        .flatten()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name.as_str())
        .collect();
    if failed.is_empty() && consistent {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::Oracle(format!("failed checks: {}", failed.join(", "))))
    }
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    let ds = generate_sbm::<f64>(&SbmParams {
        n: args.n,
        classes: args.classes,
        p_in: args.p_in,
        p_out: args.p_out,
        feature_dim: args.feature_dim,
        feature_noise: args.noise,
        seed: args.seed,
    })?;
    let format = if args.text { FeatureFormat::Text } else { FeatureFormat::Binary };
    save_dataset(&ds, &args.out, format)?;
    println!(
        "wrote {}: n={} edges={} d={} c={}",
        args.out.display(),
        ds.n(),
        ds.graph.n_edges(),
        ds.feature_dim(),
        ds.classes
    );
    Ok(ExitCode::SUCCESS)
}

fn split(args: SplitArgs) -> Result<ExitCode> {
    let ds = load_dataset_dir::<f64>(&args.dataset, LoadOptions::default())?;
    let s = make_split(&ds.labels, ds.classes, args.label_rate, args.seed)?;
    for w in &s.warnings {
        eprintln!("warning: {}: requested {}, took {}", w.what, w.requested, w.available);
    }
    let mut out = create(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &s).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e.into(),
    })?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(io_err(&args.out))?;
    println!("train={} val={} test={}", s.train.len(), s.val.len(), s.test.len());
    Ok(ExitCode::SUCCESS)
}

fn print_report(out: &Path, r: &ConvertReport) {
    println!(
        "wrote {}: n={} edges={} d={} c={}",
        out.display(),
        r.nodes,
        r.edges,
        r.features,
        r.classes
    );
    if r.dangling_edges > 0 {
        eprintln!("skipped {} edges with unknown endpoints", r.dangling_edges);
    }
}

fn convert(cmd: ConvertCommand) -> Result<ExitCode> {
    match cmd {
        ConvertCommand::Linqs { content, cites, out } => print_report(&out, &convert_linqs(&content, &cites, &out)?),
        ConvertCommand::GeomGcn { nodes, edges, out } => print_report(&out, &convert_geom_gcn(&nodes, &edges, &out)?),
        ConvertCommand::Planetoid => println!("{PLANETOID_RECIPE}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Convert(c) => convert(c),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
