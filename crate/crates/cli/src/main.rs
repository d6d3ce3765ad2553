//! `jdfd` command-line driver: dataset generation, training, evaluation,
//! ablation studies and gradient checks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use jdfd::config::TrainConfig;
use jdfd::data::{load_split, make_dataset, DatasetManifest, FamilyData, Sample, Split};
use jdfd::eval::{
    ablate_decoder, augmentation_study, chroma_contrast_detector, evaluate, report_csv, roc_csv, scores_csv,
    EvalReport,
};
use jdfd::gradcheck::{run_suite, SUITE_THRESHOLD};
use jdfd::model::{read_checkpoint, write_checkpoint};
use jdfd::train::{log_csv, train};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] jdfd::Error),
    #[error("gradient check failed for: {}", .0.join(", "))]
    GradCheck(Vec<String>),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use jdfd::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::GradCheck(_) => 5,
            CliError::Core(e) => match e {
                E::Config { .. } | E::InvalidArgument(_) | E::Shape(_) => 2,
                E::Io { .. } | E::Ppm { .. } | E::Manifest { .. } | E::Checkpoint(_) => 3,
                E::NonFinite(_) | E::MissingGradient(_) => 4,
            },
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "jdfd", version, about = "Joint reconstruction/classification forgery detector")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Require bit-reproducible results. All reductions already run in a
    /// fixed order, so this only records the request in the echoed config.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic families under `data_dir`.
    GenData,
    /// Train on `train_family` and write a checkpoint and log.
    Train,
    /// Evaluate a checkpoint on one manifest or on every family's test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test manifest; defaults to every configured family.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Family name recorded as the training family in the report.
        #[arg(long)]
        train_family: Option<String>,
    },
    /// Run an ablation study.
    Ablate {
        #[arg(long, value_enum)]
        study: Study,
    },
    /// Check every layer's gradients against finite differences.
    Gradcheck {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Write the hand-built chroma-contrast detector as a checkpoint.
    Detector {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Study {
    Decoder,
    Augmentation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| jdfd::Error::io(path, e))?;
            TrainConfig::parse(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| jdfd::Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| jdfd::Error::io(path, e))?;
    Ok(())
}

fn echo_config(cfg: &TrainConfig, deterministic: bool) -> CliResult<()> {
    let mut text = cfg.to_text();
    if deterministic {
        text.insert_str(0, "# deterministic\n");
    }
    write(&cfg.out_dir.join("config.txt"), text)
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    if let Command::Gradcheck { inject_fault } = &cli.command {
        return cmd_gradcheck(cli.seed.unwrap_or(0), inject_fault.as_deref());
    }
    let cfg = load_config(&cli)?;
    echo_config(&cfg, cli.deterministic)?;
    match cli.command {
        Command::GenData => cmd_gen_data(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Eval { checkpoint, manifest, train_family } => {
            cmd_eval(&cfg, checkpoint, manifest, train_family)
        }
        Command::Ablate { study } => cmd_ablate(&cfg, study),
        Command::Detector { checkpoint } => cmd_detector(&cfg, checkpoint),
        Command::Gradcheck { .. } => unreachable!("handled above"),
    }
}

fn cmd_gen_data(cfg: &TrainConfig) -> CliResult<()> {
    let counts = cfg.counts();
    for spec in cfg.family_specs()? {
        let m = make_dataset(&spec, counts, cfg.data_seed, cfg.image_size, cfg.image_size, &cfg.data_dir)?;
        println!(
            "{}: train {} ({} real, {} fake), test {} ({} real, {} fake)",
            m.family,
            m.train.len(),
            counts.real_train,
            counts.fake_train,
            m.test.len(),
            counts.real_test,
            counts.fake_test
        );
    }
    Ok(())
}

fn split_path(cfg: &TrainConfig, family: &str, split: Split) -> PathBuf {
    DatasetManifest::split_path(&cfg.data_dir.join(family), split)
}

fn cmd_train(cfg: &TrainConfig) -> CliResult<()> {
    let settings = cfg.settings()?;
    let primary = load_split(&split_path(cfg, &cfg.train_family, Split::Train))?;
    let mut foreign: Vec<Vec<Sample>> = Vec::new();
    if cfg.foreign_ratio > 0.0 {
        for f in cfg.families.iter().filter(|f| **f != cfg.train_family) {
            foreign.push(load_split(&split_path(cfg, f, Split::Train))?);
        }
    }
    let foreign_refs: Vec<&[Sample]> = foreign.iter().map(Vec::as_slice).collect();
    let outcome = train(&settings, &primary, &foreign_refs)?;
    write_checkpoint(&cfg.out_dir.join("checkpoint.jdfd"), &outcome.params)?;
    write(&cfg.out_dir.join("train_log.csv"), log_csv(&outcome.log))?;
    for e in &outcome.log {
        println!("epoch {:>3}  l_total {:.6}  l_cro {:.6}  l_rec {:.6}", e.epoch, e.l_total, e.l_cro, e.l_rec);
    }
    Ok(())
}

fn write_eval_outputs(out: &Path, reports: &[EvalReport]) -> CliResult<()> {
    write(&out.join("report.csv"), report_csv(reports))?;
    for r in reports {
        write(&out.join(format!("roc_{}.csv", r.test_family)), roc_csv(&r.roc))?;
        write(&out.join(format!("scores_{}.csv", r.test_family)), scores_csv(r))?;
        println!("{} -> {}: AUC {:.6} ({} real, {} fake)", r.train_family, r.test_family, r.auc, r.n_real, r.n_fake);
    }
    Ok(())
}

fn cmd_eval(
    cfg: &TrainConfig,
    checkpoint: Option<PathBuf>,
    manifest: Option<PathBuf>,
    train_family: Option<String>,
) -> CliResult<()> {
    let ckpt = checkpoint.unwrap_or_else(|| cfg.out_dir.join("checkpoint.jdfd"));
    let params = read_checkpoint(&ckpt)?;
    let train_family = train_family.unwrap_or_else(|| cfg.train_family.clone());
    let mut reports = Vec::new();
    let manifests: Vec<PathBuf> = match manifest {
        Some(m) => vec![m],
        None => cfg.families.iter().map(|f| split_path(cfg, f, Split::Test)).collect(),
    };
    for m in manifests {
        let test = load_split(&m)?;
        let family = test.first().map(|s| s.family.clone()).unwrap_or_default();
        reports.push(evaluate(&params, &test, &train_family, &family, cfg.seed)?);
    }
    write_eval_outputs(&cfg.out_dir, &reports)
}

fn load_families(cfg: &TrainConfig) -> CliResult<Vec<FamilyData>> {
    cfg.family_specs()?
        .into_iter()
        .map(|spec| {
            let train = load_split(&split_path(cfg, &spec.name, Split::Train))?;
            let test = load_split(&split_path(cfg, &spec.name, Split::Test))?;
            Ok(FamilyData { spec, train, test })
        })
        .collect()
}

fn cmd_ablate(cfg: &TrainConfig, study: Study) -> CliResult<()> {
    let settings = cfg.settings()?;
    let families = load_families(cfg)?;
    let refs: Vec<&FamilyData> = families.iter().collect();
    let (name, column, result) = match study {
        Study::Decoder => {
            ("decoder", "variant", ablate_decoder(&settings, &cfg.train_family, &refs, &cfg.ablation_seeds)?)
        }
        Study::Augmentation => (
            "augmentation",
            "ratio",
            augmentation_study(&settings, &cfg.train_family, &refs, &cfg.ablation_ratios, &cfg.ablation_seeds)?,
        ),
    };
    write(&cfg.out_dir.join(format!("ablation_{name}.csv")), result.csv(column))?;
    let means = result.means_csv(column);
    write(&cfg.out_dir.join(format!("ablation_{name}_means.csv")), &means)?;
    print!("{means}");
    if matches!(study, Study::Augmentation) {
        println!(
            "unlabeled samples seen: {}, with classification gradient: {}",
            result.foreign_seen, result.foreign_cro_terms
        );
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, fault: Option<&str>) -> CliResult<()> {
    let checks = run_suite(seed, fault)?;
    println!("{:<18} {:>14} {:>8}  status", "layer", "max_rel_error", "checked");
    let mut failed = Vec::new();
    for c in &checks {
        let status = if c.passed() { "ok" } else { "FAIL" };
        println!("{:<18} {:>14.3e} {:>8}  {status}", c.layer, c.max_rel_error, c.checked);
        if !c.passed() {
            failed.push(c.layer.to_string());
        }
    }
    println!("threshold {SUITE_THRESHOLD:e}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed))
    }
}

fn cmd_detector(cfg: &TrainConfig, checkpoint: Option<PathBuf>) -> CliResult<()> {
    let params = chroma_contrast_detector(cfg.arch()?)?;
    let path = checkpoint.unwrap_or_else(|| cfg.out_dir.join("detector.jdfd"));
    write_checkpoint(&path, &params)?;
    println!("wrote {}", path.display());
    Ok(())
}
