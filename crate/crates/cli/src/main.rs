use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scriptpersona::eval::Table;
use scriptpersona::pipeline::{self, ModelKind};
use scriptpersona::{synth, ConfigError, Dimension, Error, PipelineConfig};

#[derive(Parser)]
#[command(name = "scriptpersona", version, about = "Screenplay parsing and character personality pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, repeatable: `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Mbti,
    Sloan,
    All,
}

impl ScaleArg {
    fn dimensions(self) -> Vec<Dimension> {
        match self {
            ScaleArg::Mbti => Dimension::MBTI.to_vec(),
            ScaleArg::Sloan => Dimension::SLOAN.to_vec(),
            ScaleArg::All => Dimension::MBTI.iter().chain(&Dimension::SLOAN).copied().collect(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Svm,
    Fusion,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Svm => ModelKind::Svm,
            ModelArg::Fusion => ModelKind::Fusion,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest and label every script in a directory.
    Parse {
        #[arg(long)]
        scripts: Option<PathBuf>,
    },
    /// Match profiles to parsed scripts and write the split dataset.
    Build {
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Recompute dataset statistics from the split files.
    Stats,
    /// Fit the n-gram SVM baseline.
    TrainBaseline {
        /// Dimension such as `EI` or `N/S`; repeatable. Defaults to the scale.
        #[arg(long = "dimension", short)]
        dimensions: Vec<Dimension>,
        #[arg(long, value_enum, default_value = "mbti")]
        scale: ScaleArg,
    },
    /// Train the multi-view fusion model for one dimension.
    TrainFusion {
        #[arg(long, short)]
        dimension: Dimension,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Train on the dialogue view only.
        #[arg(long)]
        no_scene_view: bool,
    },
    /// Score saved models on the test split.
    Eval {
        #[arg(long = "dimension", short)]
        dimensions: Vec<Dimension>,
    },
    /// Simulated human-annotator accuracy and F1.
    HumanPerf {
        #[arg(long, default_value_t = 3)]
        voters: usize,
    },
    /// Dev F1 against training-set size.
    Curve {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, short)]
        dimension: Dimension,
        /// Comma-separated sizes; `all` means the whole train split.
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,all")]
        sizes: Vec<String>,
    },
    /// Dev F1 against per-view token budget.
    Ablate {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, short)]
        dimension: Dimension,
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000,2000")]
        budgets: Vec<usize>,
    },
    /// Write the synthetic corpus: scripts/, profiles.jsonl, gold.jsonl.
    Synth {
        #[arg(long, default_value_t = 24)]
        scripts: usize,
    },
}

/// Exit statuses: 1 configuration, 2 data, 3 training.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Ingest(_) | Error::Silver(_) | Error::Parse(_) | Error::Match(_) | Error::Dataset(_) | Error::Jsonl(_) | Error::Io { .. } => 2,
        Error::Classifier(_) | Error::Baseline(_) | Error::Fusion(_) | Error::Eval(_) => 3,
    }
}

fn load_config(g: &GlobalArgs) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::BadValue { key: "--set".into(), value: kv.clone() })?;
        cfg.set(k, v)?;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = g.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn print_table(t: &Table) {
    print!("{}", t.to_text());
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Parse { scripts } => {
            if let Some(dir) = scripts {
                cfg.scripts_dir = Some(dir);
            }
            cfg.validate()?;
            let out = pipeline::parse_stage(&cfg)?;
            let mut t = Table::new(&["script", "route", "fade_in", "threshold", "ratio", "sections"]);
            let opt = |v: Option<usize>| v.map_or("-".into(), |x| x.to_string());
            for r in &out.report {
                t.push(vec![
                    r.movie_name.clone(),
                    format!("{:?}", r.route),
                    opt(r.fade_in_indent),
                    opt(r.threshold),
                    r.ratio.map_or("-".into(), |x| format!("{x:.3}")),
                    r.sections.to_string(),
                ]);
            }
            print_table(&t);
            for (file, why) in &out.skipped {
                log::warn!("skipped {file}: {why}");
            }
            println!(
                "{} scripts parsed, {} skipped; dialogue ratio band [{:.3}, {:.3}]",
                out.scripts.len(),
                out.skipped.len(),
                out.stats.band().0,
                out.stats.band().1
            );
        }
        Command::Build { profiles } => {
            if let Some(p) = profiles {
                cfg.profiles = Some(p);
            }
            cfg.validate()?;
            let scripts = pipeline::read_parses(&cfg)?;
            let (_, summary) = pipeline::build_stage(&cfg, &scripts)?;
            println!(
                "{} profiles, {} pass the vote filter, {} matched, {} unmatched",
                summary.profiles,
                summary.retained,
                summary.matched,
                summary.unmatched.len()
            );
        }
        Command::Stats => {
            let records = pipeline::read_dataset(&cfg)?;
            let stats = pipeline::stats_stage(&cfg, &records)?;
            print!("{}", stats.to_table());
        }
        Command::TrainBaseline { dimensions, scale } => {
            cfg.validate()?;
            let dims = if dimensions.is_empty() { scale.dimensions() } else { dimensions };
            let metrics = pipeline::train_baseline_stage(&cfg, &dims)?;
            let mut t = Table::new(&["dimension", "train", "epochs", "converged", "dev_f1", "test_f1"]);
            let f = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{:.2}", 100.0 * x));
            for m in &metrics {
                t.push(vec![
                    m.dimension.name(),
                    m.train_size.to_string(),
                    m.epochs.to_string(),
                    m.converged.to_string(),
                    f(m.dev_f1),
                    f(m.test_f1),
                ]);
            }
            print_table(&t);
        }
        Command::TrainFusion { dimension, runs, epochs, lr, no_scene_view } => {
            if let Some(r) = runs {
                cfg.fusion.runs = r;
            }
            if let Some(e) = epochs {
                cfg.fusion.epochs = e;
            }
            if lr.is_some() {
                cfg.fusion.lr = lr;
            }
            if no_scene_view {
                cfg.fusion.use_scene_view = false;
            }
            cfg.validate()?;
            let out = pipeline::train_fusion_stage(&cfg, dimension)?;
            let mut t = Table::new(&["run", "seed", "best_epoch", "train_f1", "dev_f1", "test_f1"]);
            let f = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{:.2}", 100.0 * x));
            for r in &out.runs {
                t.push(vec![
                    r.run.to_string(),
                    r.seed.to_string(),
                    r.best_epoch.to_string(),
                    f(Some(r.train_f1)),
                    f(r.dev_f1),
                    f(r.test_f1),
                ]);
            }
            print_table(&t);
            let ms = |v: &Option<scriptpersona::MeanStd>| v.as_ref().map_or("n/a".into(), |m| m.to_string());
            println!("{dimension} lr {}: dev {} test {}", out.lr, ms(&out.dev_f1), ms(&out.test_f1));
        }
        Command::Eval { dimensions } => {
            let dims = if dimensions.is_empty() { ScaleArg::All.dimensions() } else { dimensions };
            print_table(&pipeline::eval_stage(&cfg, &dims)?);
        }
        Command::HumanPerf { voters } => {
            if voters == 0 {
                return Err(ConfigError::Invalid("voters must be positive".into()).into());
            }
            let h = pipeline::human_perf_stage(&cfg, voters)?;
            print_table(&Table::from(&h));
        }
        Command::Curve { model, dimension, sizes } => {
            cfg.validate()?;
            let sizes = sizes
                .iter()
                .map(|s| match s.trim() {
                    "all" => Ok(None),
                    v => v.parse().map(Some).map_err(|_| ConfigError::BadValue { key: "sizes".into(), value: s.clone() }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows = pipeline::curve_stage(&cfg, model.into(), dimension, &sizes)?;
            print_table(&Table::from(&rows[..]));
        }
        Command::Ablate { model, dimension, budgets } => {
            cfg.validate()?;
            let rows = pipeline::ablate_stage(&cfg, model.into(), dimension, &budgets)?;
            print_table(&Table::from(&rows[..]));
        }
        Command::Synth { scripts } => {
            if scripts == 0 {
                return Err(ConfigError::Invalid("--scripts must be positive".into()).into());
            }
            let corpus = synth::synth_corpus(scripts, cfg.seed);
            synth::write_corpus(&corpus, &cfg.out_dir)
                .map_err(|source| Error::Io { context: cfg.out_dir.display().to_string(), source })?;
            println!(
                "wrote {} scripts and {} profiles to {}",
                corpus.scripts.len(),
                corpus.profiles.len(),
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
