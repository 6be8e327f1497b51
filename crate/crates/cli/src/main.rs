mod manifest;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nbrecon::eval::{
    approximation_report, classify_frozen, evaluate_clustering, num_roles, ApproxReport, ModelGenerator,
    NeighborGenerator, OracleGenerator, ProbeConfig, DEFAULT_LEVELS,
};
use nbrecon::graph::{
    generate_planted, load_dir, parse_labels, parse_matrix_csv, write_graph, write_matrix_csv, ShapeKind, ShapeSpec,
    EDGES_FILE, FEATURES_FILE, LABELS_FILE,
};
use nbrecon::train::{embed, load_checkpoint, save_checkpoint, train_with, TrainConfig};
use nbrecon::encoder::encode;
use nbrecon::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use manifest::{io_error, manifest_path, read_json, write_json, RunManifest};

const CHECKPOINT_STEM: &str = "model";
const LOG_FILE: &str = "epochs.jsonl";

#[derive(Parser)]
#[command(name = "nbrecon", version, about = "Structural node embeddings by neighborhood reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-motif graph.
    Gen(GenArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Write final-layer embeddings for a dataset.
    Embed(EmbedArgs),
    /// Score embeddings against role labels.
    Eval(EvalArgs),
    /// Compare generated neighbors with the true ones.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_shape)]
    shape: Option<ShapeKind>,
    /// Leaf count for fans and stars.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long = "cycle")]
    cycle_len: Option<usize>,
    /// Random edge edits applied after labelling.
    #[arg(long)]
    perturb: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shape settings or a previous run manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablate {
    NoDegree,
    NoDistribution,
    NoSelf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurrogateKind {
    Hungarian,
    Chamfer,
    Sinkhorn,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Gcn,
    Gin,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training settings or a previous run manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    lambda_self: Option<f64>,
    #[arg(long)]
    lambda_degree: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    neighbor_cap: Option<usize>,
    #[arg(long, value_enum)]
    encoder: Option<EncoderArg>,
    #[arg(long, value_enum)]
    surrogate: Option<SurrogateKind>,
    /// Entropic regularization for the sinkhorn surrogate.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    sinkhorn_iters: usize,
    /// Switch off a loss term; repeatable.
    #[arg(long, value_enum)]
    ablate: Vec<Ablate>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Checkpoint stem or the directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EvalMode {
    Cluster,
    Classify,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Label file or a dataset directory.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Cluster)]
    mode: EvalMode,
    /// Cluster count; defaults to the number of distinct labels.
    #[arg(long)]
    clusters: Option<usize>,
    /// Random splits averaged in classify mode.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Samples per node; defaults to the training value.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the true sampled neighbors in place of the decoder.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_shape(s: &str) -> std::result::Result<ShapeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprint!("error[E_USAGE]: {}", text.strip_prefix("error: ").unwrap_or(&text));
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let (name, outcome) = match cli.command {
        Command::Gen(a) => ("gen", cmd_gen(a)),
        Command::Train(a) => ("train", cmd_train(a)),
        Command::Embed(a) => ("embed", cmd_embed(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::Diagnose(a) => ("diagnose", cmd_diagnose(a)),
    };
    match outcome {
        Ok(()) => {
            eprintln!("{name}: done in {:.2}s", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}

/// Settings from a JSON file; a run manifest contributes its `config`.
fn load_config(path: &Path) -> Result<Value> {
    let v = read_json(path)?;
    let v = match v.get("command").zip(v.get("config")) {
        Some((_, cfg)) => cfg.clone(),
        None => v,
    };
    if !v.is_object() {
        return Err(Error::Contract(format!("{}: config must be a JSON object", path.display())));
    }
    Ok(v)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn set(target: &mut Value, key: &str, value: Option<impl Serialize>) -> Result<()> {
    if let Some(v) = value {
        target[key] = serde_json::to_value(v)?;
    }
    Ok(())
}

fn shape_defaults(shape: ShapeKind) -> ShapeSpec {
    match shape {
        ShapeKind::House => ShapeSpec::house(),
        ShapeKind::Varied => ShapeSpec::varied(),
        ShapeKind::Fan | ShapeKind::Star => ShapeSpec {
            shape,
            size: 5,
            ..ShapeSpec::house()
        },
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let file = a.config.as_deref().map(load_config).transpose()?;
    let from_file = file
        .as_ref()
        .and_then(|f| f.get("shape"))
        .map(|s| serde_json::from_value::<ShapeKind>(s.clone()))
        .transpose()?;
    let shape = a.shape.or(from_file).unwrap_or(ShapeKind::House);

    let mut resolved = serde_json::to_value(shape_defaults(shape))?;
    if let Some(f) = file {
        merge(&mut resolved, f);
    }
    set(&mut resolved, "shape", Some(shape))?;
    set(&mut resolved, "size", a.size)?;
    set(&mut resolved, "count", a.count)?;
    set(&mut resolved, "cycle_len", a.cycle_len)?;
    set(&mut resolved, "perturb", a.perturb)?;
    set(&mut resolved, "seed", a.seed)?;
    let spec: ShapeSpec = serde_json::from_value(resolved)?;

    let g = generate_planted(&spec)?;
    fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    write_graph(&g, &a.out)?;

    let mut m = RunManifest::new("gen", serde_json::to_value(&spec)?, spec.seed);
    for f in [EDGES_FILE, FEATURES_FILE, LABELS_FILE] {
        m.add_output(&a.out.join(f));
    }
    m.write(&manifest_path(&a.out))?;
    let roles = g.labels().map(num_roles).unwrap_or(0);
    println!("nodes={} edges={} roles={roles}", g.num_nodes(), g.num_edges());
    Ok(())
}

fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut resolved = serde_json::to_value(TrainConfig::default())?;
    if let Some(path) = &a.config {
        merge(&mut resolved, load_config(path)?);
    }
    set(&mut resolved, "k", a.k)?;
    set(&mut resolved, "dim", a.dim)?;
    set(&mut resolved, "q", a.q)?;
    set(&mut resolved, "lambda_self", a.lambda_self)?;
    set(&mut resolved, "lambda_degree", a.lambda_degree)?;
    set(&mut resolved, "lr", a.lr)?;
    set(&mut resolved, "epochs", a.epochs)?;
    set(&mut resolved, "seed", a.seed)?;
    set(&mut resolved, "neighbor_cap", a.neighbor_cap)?;
    set(
        &mut resolved,
        "encoder",
        a.encoder.map(|e| match e {
            EncoderArg::Gcn => "gcn",
            EncoderArg::Gin => "gin",
        }),
    )?;
    if let Some(s) = a.surrogate {
        resolved["surrogate"] = match s {
            SurrogateKind::Hungarian => json!({"kind": "hungarian"}),
            SurrogateKind::Chamfer => json!({"kind": "chamfer"}),
            SurrogateKind::Sinkhorn => json!({"kind": "sinkhorn", "epsilon": a.epsilon, "iters": a.sinkhorn_iters}),
        };
    }
    for ab in &a.ablate {
        let key = match ab {
            Ablate::NoDegree => "no_degree",
            Ablate::NoDistribution => "no_distribution",
            Ablate::NoSelf => "no_self",
        };
        resolved["ablations"][key] = Value::Bool(true);
    }
    let cfg: TrainConfig = serde_json::from_value(resolved)?;
    cfg.validate()?;
    Ok(cfg)
}

fn add_data_inputs(m: &mut RunManifest, dir: &Path) -> Result<()> {
    for f in [EDGES_FILE, FEATURES_FILE, LABELS_FILE] {
        let p = dir.join(f);
        if p.exists() {
            m.add_input(&p)?;
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(&a)?;
    let g = load_dir(&a.data)?;
    fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    let log_path = a.out.join(LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_error(&log_path, e))?);
    let mut log_err = None;
    let mut wall = 0.0;
    let outcome = train_with(&g, &cfg, |r| {
        wall += r.wall_time;
        if log_err.is_none() {
            let line = serde_json::to_string(r).expect("epoch report serializes");
            if let Err(e) = writeln!(log, "{line}") {
                log_err = Some(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(io_error(&log_path, e));
    }
    log.flush().map_err(|e| io_error(&log_path, e))?;

    let stem = a.out.join(CHECKPOINT_STEM);
    save_checkpoint(&stem, &outcome.model, &cfg)?;

    let mut m = RunManifest::new("train", serde_json::to_value(&cfg)?, cfg.seed);
    add_data_inputs(&mut m, &a.data)?;
    m.add_output(&stem.with_extension("bin"));
    m.add_output(&stem.with_extension("json"));
    m.add_output(&log_path);
    m.write(&manifest_path(&a.out))?;

    if !outcome.isolated.is_empty() {
        eprintln!("train: {} isolated nodes use only the self term", outcome.isolated.len());
    }
    if let Some(last) = outcome.reports.last() {
        eprintln!(
            "train: {} epochs, {wall:.2}s in epochs, final loss {:.6}",
            outcome.reports.len(),
            last.total
        );
    }
    Ok(())
}

fn checkpoint_stem(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_STEM)
    } else {
        path.with_extension("")
    }
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let stem = checkpoint_stem(&a.checkpoint);
    let (cfg, model) = load_checkpoint(&stem)?;
    let g = load_dir(&a.data)?;
    let emb = embed(&g, &model.encoder)?;
    write_matrix_csv(&emb, &a.out)?;

    let mut m = RunManifest::new(
        "embed",
        json!({"checkpoint": stem.display().to_string(), "data": a.data.display().to_string()}),
        cfg.seed,
    );
    m.add_input(&stem.with_extension("bin"))?;
    m.add_input(&stem.with_extension("json"))?;
    add_data_inputs(&mut m, &a.data)?;
    m.add_output(&a.out);
    m.write(&manifest_path(&a.out))?;
    println!("rows={} dim={}", emb.rows(), emb.cols());
    Ok(())
}

#[derive(Serialize)]
struct SplitResult {
    seed: u64,
    split_seed: u64,
    resampled: usize,
    accuracy: f64,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let emb = parse_matrix_csv(&a.embeddings)?;
    let label_path = if a.labels.is_dir() {
        a.labels.join(LABELS_FILE)
    } else {
        a.labels.clone()
    };
    let labels = parse_labels(&label_path)?;
    let result = match a.mode {
        EvalMode::Cluster => {
            let r = evaluate_clustering(&emb, &labels, a.clusters)?;
            json!({"mode": a.mode, "report": r})
        }
        EvalMode::Classify => {
            if a.seeds == 0 {
                return Err(Error::Contract("--seeds must be at least 1".into()));
            }
            let cfg = ProbeConfig::default();
            let mut splits = Vec::with_capacity(a.seeds);
            for i in 0..a.seeds as u64 {
                let seed = a.seed.wrapping_add(i * 1000);
                let out = classify_frozen(&emb, &labels, &cfg, seed)?;
                if out.resampled > 0 {
                    eprintln!("eval: seed {seed} resampled {} times", out.resampled);
                }
                splits.push(SplitResult {
                    seed,
                    split_seed: out.seed,
                    resampled: out.resampled,
                    accuracy: out.accuracy,
                });
            }
            let n = splits.len() as f64;
            let mean = splits.iter().map(|s| s.accuracy).sum::<f64>() / n;
            let var = splits.iter().map(|s| (s.accuracy - mean).powi(2)).sum::<f64>() / n;
            json!({
                "mode": a.mode,
                "probe": cfg,
                "splits": splits,
                "mean_accuracy": mean,
                "std_accuracy": var.sqrt(),
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    if let Some(out) = &a.out {
        write_json(out, &result)?;
        let cfg = json!({
            "mode": a.mode,
            "clusters": a.clusters,
            "seeds": a.seeds,
            "labels": label_path.display().to_string(),
        });
        let mut m = RunManifest::new("eval", cfg, a.seed);
        m.add_input(&a.embeddings)?;
        m.add_input(&label_path)?;
        m.add_output(out);
        m.write(&manifest_path(out))?;
    }
    Ok(())
}

fn print_table(r: &ApproxReport) {
    println!("q={} nodes={} zero_x={} isolated={}", r.q, r.records.len(), r.zero_x.len(), r.isolated);
    println!("level\ty/x");
    for qt in &r.quantiles {
        println!("{:.2}\t{:.6e}", qt.level, qt.value);
    }
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    let stem = checkpoint_stem(&a.checkpoint);
    let (cfg, model) = load_checkpoint(&stem)?;
    let g = load_dir(&a.data)?;
    let q = a.q.unwrap_or(cfg.q);
    let stack = encode(&g, &model.encoder)?;
    let mut generator: Box<dyn NeighborGenerator> = if a.oracle {
        Box::new(OracleGenerator { stack: &stack })
    } else {
        Box::new(ModelGenerator {
            decoder: &model.decoder,
            stack: &stack,
        })
    };
    let report = approximation_report(&g, &stack, generator.as_mut(), q, cfg.neighbor_cap, &DEFAULT_LEVELS, a.seed)?;
    print_table(&report);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        let run_cfg = json!({
            "checkpoint": stem.display().to_string(),
            "data": a.data.display().to_string(),
            "q": q,
            "neighbor_cap": cfg.neighbor_cap,
            "levels": DEFAULT_LEVELS,
            "oracle": a.oracle,
        });
        let mut m = RunManifest::new("diagnose", run_cfg, a.seed);
        m.add_input(&stem.with_extension("bin"))?;
        m.add_input(&stem.with_extension("json"))?;
        add_data_inputs(&mut m, &a.data)?;
        m.add_output(out);
        m.write(&manifest_path(out))?;
    }
    Ok(())
}
