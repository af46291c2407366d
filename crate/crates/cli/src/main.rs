use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rtucker_cli::commands::{self, EvaluateArgs};
use rtucker_cli::config::RunConfig;
use rtucker_cli::sweep::{run_sweep, Grid, SweepOptions};
use rtucker_core::Split;

/// Train, evaluate and inspect relational Tucker3 link predictors.
#[derive(Parser)]
#[command(name = "rtucker", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources. The file is read first, then the named flags,
/// then every `--set` in the order given.
#[derive(Args)]
struct Shared {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Model: complex, rescal, distmult, cp, analogy[:LAYOUT], drt or srt.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Entity embedding size.
    #[arg(long = "d-e", global = true)]
    d_e: Option<usize>,
    /// Relation embedding size (DRT and SRT).
    #[arg(long = "d-r", global = true)]
    d_r: Option<usize>,
    /// Directory with train.txt, valid.txt and test.txt.
    #[arg(long = "data-dir", global = true)]
    data_dir: Option<PathBuf>,
    /// Training triples; overrides `<data-dir>/train.txt`.
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    #[arg(long, global = true)]
    valid: Option<PathBuf>,
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    /// Output directory for runs and sweeps.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for initialization and training noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Splits used for filtering, e.g. `train,valid,test`.
    #[arg(long = "filter-splits", global = true)]
    filter_splits: Option<String>,
    /// Tie policy: mean, optimistic or pessimistic.
    #[arg(long, global = true)]
    tie: Option<String>,
}

impl Shared {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let path = |p: &PathBuf| p.display().to_string();
        let named = [
            ("model", self.model.clone()),
            ("d_e", self.d_e.map(|v| v.to_string())),
            ("d_r", self.d_r.map(|v| v.to_string())),
            ("data_dir", self.data_dir.as_ref().map(path)),
            ("train", self.train.as_ref().map(path)),
            ("valid", self.valid.as_ref().map(path)),
            ("test", self.test.as_ref().map(path)),
            ("output_dir", self.output.as_ref().map(path)),
            ("seed", self.seed.map(|v| v.to_string())),
            ("filter_splits", self.filter_splits.clone()),
            ("tie", self.tie.clone()),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for pair in &self.overrides {
            cfg.set_pair(pair)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build entity and relation dictionaries from the three splits.
    BuildVocab,
    /// Train a model and write checkpoint, log and dictionaries.
    Train,
    /// Filtered ranking metrics of a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Directory with entities.dict and relations.dict.
        #[arg(long)]
        dicts: Option<PathBuf>,
    },
    /// Parameter counts, nnfp and d_r* of a checkpoint.
    ///
    /// The total is nnfp(E) + nnfp(R) + nnfp(G). For FB15K-237 this comes out
    /// 3-5% below the commonly quoted totals (e.g. 2,948,400 rather than
    /// 3,047K for 200-dimensional ComplEx); the published numbers cannot be
    /// reproduced from the entity count and are not matched.
    CountParams {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Print one relation's effective mixing matrix as CSV.
    InspectCore {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Relation name or index.
        #[arg(long)]
        relation: String,
        #[arg(long)]
        dicts: Option<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every point of a grid and rank the runs by validation MRR.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long = "max-runs")]
        max_runs: Option<usize>,
        /// Runs trained at once; 0 uses all cores.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write the synthetic mother/father/parent graph.
    FamilyKg {
        #[arg(long = "to")]
        dir: PathBuf,
        #[arg(long = "kg-seed", default_value_t = 7)]
        kg_seed: u64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::BuildVocab => {
            let cfg = cli.shared.run_config()?;
            commands::build_vocab(&cfg.data_paths()?, &cfg.output_dir, &mut out)?;
        }
        Command::Train => {
            let cfg = cli.shared.run_config()?;
            commands::train(&cfg, &mut out)?;
        }
        Command::Evaluate {
            checkpoint,
            split,
            dicts,
        } => {
            let cfg = cli.shared.run_config()?;
            commands::evaluate(
                &cfg,
                &EvaluateArgs {
                    checkpoint,
                    dicts,
                    split,
                },
                &mut out,
            )?;
        }
        Command::CountParams { checkpoint } => commands::count_params(&checkpoint, &mut out)?,
        Command::InspectCore {
            checkpoint,
            relation,
            dicts,
            out: csv,
        } => {
            commands::inspect_core(&checkpoint, dicts.as_deref(), &relation, csv.as_deref(), &mut out)?;
        }
        Command::Sweep { grid, max_runs, jobs } => {
            let cfg = cli.shared.run_config()?;
            let grid = Grid::from_file(&grid)?;
            let options = SweepOptions {
                output_dir: cfg.output_dir.clone(),
                max_runs,
                jobs,
            };
            run_sweep(&cfg, &grid, &options, &mut out)?;
        }
        Command::FamilyKg { dir, kg_seed } => commands::write_family_kg(&dir, kg_seed, &mut out)?,
    }
    out.flush()?;
    Ok(())
}
