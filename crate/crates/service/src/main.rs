use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use signum::{AppState, UserStore};
use signum_core::dtree::{DecisionTree, TreeParams};
use signum_core::eval::{build_dataset, default_grid, grid_search, run_table1_experiment, ExperimentConfig};
use signum_core::hand::{load_database, save_database, SignDatabase, SignGesture};
use signum_core::session::{replay, SessionMode, SessionSpec};
use signum_core::stream::{read_frames_jsonl, write_frames_jsonl, EngineConfig, SignModel, StreamEngine};
use signum_core::synth::{generate_corpus, script_stream, GeneratorConfig, StreamTiming};
use signum_core::FeatureConfig;

#[derive(Parser)]
#[command(name = "signum", version, about = "Sign recognition from hand skeleton streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, or a frame stream for one sign.
    Synth(SynthArgs),
    /// Fit a decision tree and write it as JSON.
    Train(TrainArgs),
    /// Alphabet-only and all-signs experiments with a seeded split.
    Evaluate(EvaluateArgs),
    /// Replay a recorded frame stream through the recognizer.
    Recognize(RecognizeArgs),
    /// Host the HTTP catalog and WebSocket sessions.
    Serve(ServeArgs),
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
struct SynthArgs {
    #[command(subcommand)]
    stream: Option<SynthCommand>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, required = true)]
    out_db: Option<PathBuf>,
    #[arg(long, required = true)]
    out_instances: Option<PathBuf>,
    /// Per-joint jitter of signer instances, meters.
    #[arg(long, default_value_t = 0.005)]
    jitter: f64,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Script a 60 Hz frame stream that holds each keypose of a sign.
    Stream {
        #[arg(long)]
        sign: String,
        #[arg(long)]
        out: PathBuf,
        /// Database to take the sign from; defaults to the synthetic corpus.
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also write the held tick ranges as JSON.
        #[arg(long)]
        plateaus: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    db: PathBuf,
    /// Labelled instances (JSON Lines); without them the templates are the training set.
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Pick tree parameters by 10-fold grid search.
    #[arg(long)]
    tune: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Evaluate these signs instead of the synthetic corpus (needs --instances).
    #[arg(long, requires = "instances")]
    db: Option<PathBuf>,
    #[arg(long, requires = "db")]
    instances: Option<PathBuf>,
    /// Full report as JSON; stdout gets the summary table either way.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-fold metrics as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PracticeArg {
    Learn,
    Test,
}

#[derive(Args)]
struct RecognizeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    db: PathBuf,
    /// Frame stream (JSON Lines).
    #[arg(long)]
    stream: PathBuf,
    /// Grade against a target the way a practice session does.
    #[arg(long, requires = "target")]
    mode: Option<PracticeArg>,
    #[arg(long, requires = "mode")]
    target: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, env = "SIGNUM_PORT", default_value_t = 8080)]
    port: u16,
    /// Where Record-mode sessions store new signs; recording is off without it.
    #[arg(long)]
    user_db: Option<PathBuf>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Recognize(a) => recognize(a),
        Command::Serve(a) => serve(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_instances(path: &Path, instances: &[SignGesture]) -> Result<()> {
    let mut w = create(path)?;
    for g in instances {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_instances(path: &Path) -> Result<Vec<SignGesture>> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: SignGesture =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        g.validate()
            .map_err(anyhow::Error::msg)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push(g);
    }
    Ok(out)
}

fn load_db(path: &Path) -> Result<SignDatabase> {
    load_database(path).with_context(|| format!("loading {}", path.display()))
}

fn load_model(model: &Path, db: &Path) -> Result<SignModel> {
    let tree = DecisionTree::load(model).with_context(|| format!("loading {}", model.display()))?;
    let db = load_db(db)?;
    if let Some(missing) = tree.classes.iter().find(|c| db.get(c).is_none()) {
        bail!("model class '{missing}' is not in the database");
    }
    Ok(SignModel { db, tree })
}

fn synth(a: SynthArgs) -> Result<()> {
    if let Some(SynthCommand::Stream {
        sign,
        out,
        db,
        seed,
        plateaus,
    }) = a.stream
    {
        let db = match db {
            Some(p) => load_db(&p)?,
            None => generate_corpus(&GeneratorConfig { seed, ..GeneratorConfig::default() })?.db,
        };
        let sign = db.get(&sign).with_context(|| format!("no sign '{sign}'"))?;
        let stream = script_stream(sign, &StreamTiming::default(), 0.0);
        write_frames_jsonl(create(&out)?, &stream.frames)?;
        if let Some(p) = plateaus {
            let mut w = create(&p)?;
            serde_json::to_writer(&mut w, &stream.plateaus)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        return Ok(());
    }
    let (Some(out_db), Some(out_instances)) = (a.out_db, a.out_instances) else {
        bail!("--out-db and --out-instances are required");
    };
    let corpus = generate_corpus(&GeneratorConfig {
        seed: a.seed,
        jitter_sigma: a.jitter,
        ..GeneratorConfig::default()
    })?;
    save_database(&corpus.db, &out_db)?;
    write_instances(&out_instances, &corpus.instances)?;
    eprintln!("{} signs, {} instances", corpus.db.signs.len(), corpus.instances.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let instances = match &a.instances {
        Some(p) => read_instances(p)?,
        None => db.signs.clone(),
    };
    if let Some(g) = instances.iter().find(|g| db.get(&g.id).is_none()) {
        bail!("instance label '{}' is not in the database", g.id);
    }
    let data = build_dataset(&instances, &FeatureConfig::default())?;
    let params = if a.tune {
        let (params, cv) = grid_search(&data, &default_grid(), 10, a.seed)?;
        eprintln!(
            "tuned {params:?}: cv validation accuracy {:.3}",
            cv.mean_validation_accuracy
        );
        params
    } else if a.instances.is_none() {
        // one sample per class: grow until every template is its own leaf
        TreeParams::unlimited()
    } else {
        TreeParams::default()
    };
    let tree = DecisionTree::fit(&data, &params)?;
    tree.save(&a.out)?;
    eprintln!(
        "{} samples, {} classes, depth {}",
        data.len(),
        tree.classes.len(),
        tree.depth()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (db, instances) = match (&a.db, &a.instances) {
        (Some(db), Some(inst)) => (load_db(db)?, read_instances(inst)?),
        _ => {
            let c = generate_corpus(&GeneratorConfig {
                seed: a.seed,
                ..GeneratorConfig::default()
            })?;
            (c.db, c.instances)
        }
    };
    let report = run_table1_experiment(&db, &instances, &ExperimentConfig {
        seed: a.seed,
        ..ExperimentConfig::default()
    })?;
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    if let Some(p) = &a.csv {
        report.write_fold_csv(create(p)?)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn recognize(a: RecognizeArgs) -> Result<()> {
    let model = Arc::new(load_model(&a.model, &a.db)?);
    let frames = read_frames_jsonl(BufReader::new(
        File::open(&a.stream).with_context(|| format!("opening {}", a.stream.display()))?,
    ))?;
    let mut out = BufWriter::new(io::stdout().lock());
    match (a.mode, a.target) {
        (Some(mode), Some(target)) => {
            let mode = match mode {
                PracticeArg::Learn => SessionMode::Learn,
                PracticeArg::Test => SessionMode::Test,
            };
            let spec = SessionSpec {
                mode,
                target: Some(target),
                record: None,
            };
            for m in replay(model, EngineConfig::default(), spec, frames)? {
                serde_json::to_writer(&mut out, &m)?;
                out.write_all(b"\n")?;
            }
        }
        _ => {
            let mut engine = StreamEngine::new(model, EngineConfig::default())?;
            let mut events = Vec::new();
            for f in frames {
                events.extend(engine.push_frame(f)?.events);
            }
            events.extend(engine.finish()?.events);
            for e in events {
                serde_json::to_writer(&mut out, &e)?;
                out.write_all(b"\n")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let model = load_model(&a.model, &a.db)?;
    let users = a
        .user_db
        .map(|p| UserStore::open(p, SignDatabase::new(model.db.language)))
        .transpose()?
        .map(Arc::new);
    let state = AppState {
        users,
        ..AppState::new(model)
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", a.port)).await?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        signum::serve(listener, state).await?;
        Ok(())
    })
}
