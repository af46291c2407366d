//! Implementations of the `rtucker` subcommands. Each writes its report to
//! the given writer so it can be driven from tests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtucker_core::checkpoint;
use rtucker_core::kgdata::{load_triples, require_files};
use rtucker_core::synthetic::{family_kg, FamilyConfig};
use rtucker_core::{
    evaluate as evaluate_split, fit, param_report, EvalConfig, FilterIndex, FilteredValidator, MetricsReport,
    ModelKind, RtModel, Split, SplitDataset, Vocabulary,
};

use crate::config::{DataPaths, RunConfig};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train.log";
pub const CONFIG_ECHO_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "valid_metrics.txt";

/// Builds the vocabulary over train, valid and test (in that order) and
/// writes `entities.dict` and `relations.dict` into `out_dir`.
pub fn build_vocab(paths: &DataPaths, out_dir: &Path, out: &mut dyn Write) -> Result<Vocabulary> {
    require_files(&paths.all())?;
    let vocab = Vocabulary::build(&paths.all())?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    vocab.write_dicts(out_dir)?;
    writeln!(out, "entities\t{}", vocab.num_entities())?;
    writeln!(out, "relations\t{}", vocab.num_relations())?;
    Ok(vocab)
}

fn load_dataset(paths: &DataPaths, vocab: &Vocabulary) -> Result<SplitDataset> {
    Ok(SplitDataset {
        train: load_triples(&paths.train, vocab)?,
        valid: load_triples(&paths.valid, vocab)?,
        test: load_triples(&paths.test, vocab)?,
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub best_epoch: usize,
    pub best_metrics: MetricsReport,
    pub epochs_run: usize,
}

/// Fresh model for `cfg`. The initialization stream is separate from the
/// training stream that uses the same seed.
pub fn init_model(cfg: &RunConfig, num_entities: usize, num_relations: usize) -> Result<RtModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.training.seed);
    rng.set_stream(1);
    Ok(RtModel::init(
        cfg.model.clone(),
        num_entities,
        num_relations,
        cfg.entity_dim,
        cfg.relation_dim,
        &cfg.init,
        &mut rng,
    )?)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Trains on the configured data and writes the best checkpoint, the epoch
/// log, the vocabulary and the effective configuration into the output
/// directory.
pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainSummary> {
    cfg.validate()?;
    let paths = cfg.data_paths()?;
    require_files(&paths.all())?;
    let vocab = Vocabulary::build(&paths.all())?;
    let data = load_dataset(&paths, &vocab)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_file(&dir.join(CONFIG_ECHO_FILE), cfg.to_text().as_bytes())?;
    vocab.write_dicts(dir)?;

    let model = init_model(cfg, vocab.num_entities(), vocab.num_relations())?;
    let filter = FilterIndex::from_dataset(&data, &cfg.filter_splits);
    let mut validator = FilteredValidator::new(&data.valid, &filter, EvalConfig { tie: cfg.tie })?;
    writeln!(
        out,
        "training {} (N={}, K={}, d_e={}, d_r={}) on {} triples",
        cfg.model,
        vocab.num_entities(),
        vocab.num_relations(),
        model.entity_dim(),
        model.relation_dim(),
        data.train.len()
    )?;
    let outcome = fit(model, &data.train, &cfg.training, &mut validator)?;

    let log_path = dir.join(LOG_FILE);
    let mut log =
        BufWriter::new(File::create(&log_path).with_context(|| format!("cannot write {}", log_path.display()))?);
    outcome.log.write(&mut log)?;
    log.flush()?;
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &outcome.model)?;
    let metrics = format!(
        "{}\n{}\n",
        outcome.best_metrics.human_line(),
        outcome.best_metrics.machine_line()
    );
    write_file(&dir.join(METRICS_FILE), metrics.as_bytes())?;

    write!(out, "{}", outcome.log.to_tsv())?;
    writeln!(
        out,
        "best epoch {}: {}",
        outcome.best_epoch,
        outcome.best_metrics.human_line()
    )?;
    Ok(TrainSummary {
        output_dir: dir.clone(),
        best_epoch: outcome.best_epoch,
        best_metrics: outcome.best_metrics,
        epochs_run: outcome.log.records.len(),
    })
}

/// Best validation MRR recorded in a training log.
pub fn best_logged_mrr(log_text: &str) -> Result<f64> {
    let mut best: Option<f64> = None;
    for line in log_text.lines().filter(|l| !l.starts_with('#')) {
        let mrr: f64 = line
            .split('\t')
            .nth(2)
            .ok_or_else(|| anyhow!("malformed log line `{line}`"))?
            .parse()
            .with_context(|| format!("malformed log line `{line}`"))?;
        if best.is_none_or(|b| mrr > b) {
            best = Some(mrr);
        }
    }
    best.ok_or_else(|| anyhow!("training log has no epochs"))
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    /// Directory holding `entities.dict`/`relations.dict`; defaults to the
    /// checkpoint's directory when those files exist there.
    pub dicts: Option<PathBuf>,
    pub split: Split,
}

fn dicts_for(checkpoint: &Path, dicts: Option<&Path>) -> Option<PathBuf> {
    match dicts {
        Some(d) => Some(d.to_path_buf()),
        None => {
            let dir = checkpoint.parent().unwrap_or(Path::new("."));
            dir.join("entities.dict").is_file().then(|| dir.to_path_buf())
        }
    }
}

fn check_dimensions(model: &RtModel, vocab: &Vocabulary, cfg: &RunConfig) -> Result<()> {
    let want_d_e = cfg.is_explicit("d_e").then_some(cfg.entity_dim);
    let want_d_r = match cfg.model {
        ModelKind::Drt | ModelKind::Srt => cfg.is_explicit("d_r").then_some(cfg.relation_dim),
        ModelKind::Bilinear(_) => None,
    };
    let mismatch = vocab.num_entities() != model.num_entities()
        || vocab.num_relations() != model.num_relations()
        || want_d_e.is_some_and(|d| d != model.entity_dim())
        || want_d_r.is_some_and(|d| d != model.relation_dim());
    if mismatch {
        let show = |v: Option<usize>| v.map_or_else(|| "any".to_owned(), |d| d.to_string());
        bail!(
            "checkpoint does not match the data: expected N={} K={} d_e={} d_r={}, found N={} K={} d_e={} d_r={}",
            vocab.num_entities(),
            vocab.num_relations(),
            show(want_d_e),
            show(want_d_r),
            model.num_entities(),
            model.num_relations(),
            model.entity_dim(),
            model.relation_dim()
        );
    }
    Ok(())
}

/// Filtered evaluation of a checkpoint on one split. Prints the human and
/// machine lines.
pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs, out: &mut dyn Write) -> Result<MetricsReport> {
    let paths = cfg.data_paths()?;
    require_files(&paths.all())?;
    let model = checkpoint::load(&args.checkpoint)?;
    let vocab = match dicts_for(&args.checkpoint, args.dicts.as_deref()) {
        Some(dir) => Vocabulary::read_dicts(&dir)?,
        None => Vocabulary::build(&paths.all())?,
    };
    check_dimensions(&model, &vocab, cfg)?;
    let data = load_dataset(&paths, &vocab)?;
    let filter = FilterIndex::from_dataset(&data, &cfg.filter_splits);
    let report = evaluate_split(&model, data.split(args.split), &filter, &EvalConfig { tie: cfg.tie })?;
    writeln!(out, "{}", report.human_line())?;
    writeln!(out, "{}", report.machine_line())?;
    Ok(report)
}

pub fn count_params(checkpoint_path: &Path, out: &mut dyn Write) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?;
    writeln!(out, "{}", param_report(&model))?;
    Ok(())
}

/// Index of a relation given by name (looked up in the dictionaries) or by
/// number.
pub fn resolve_relation(model: &RtModel, vocab: Option<&Vocabulary>, relation: &str) -> Result<usize> {
    if let Some(k) = vocab.and_then(|v| v.relation_id(relation)) {
        return Ok(k);
    }
    match relation.parse::<usize>() {
        Ok(k) if k < model.num_relations() => Ok(k),
        Ok(k) => bail!("relation index {k} out of range (K={})", model.num_relations()),
        Err(_) => bail!("unknown relation `{relation}`"),
    }
}

/// Sum of absolute diagonal entries of a square matrix.
pub fn abs_diagonal_sum(m: &ndarray::Array2<f64>) -> f64 {
    m.diag().iter().map(|v| v.abs()).sum()
}

pub fn mixing_csv(m: &ndarray::Array2<f64>) -> String {
    let mut s = String::new();
    for row in m.outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Writes the effective mixing matrix of one relation as CSV, followed by a
/// `# abs_diagonal_sum = …` line. With `csv_out`, the CSV goes to that file
/// and only the summary line to `out`.
pub fn inspect_core(
    checkpoint_path: &Path,
    dicts: Option<&Path>,
    relation: &str,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?;
    let vocab = match dicts_for(checkpoint_path, dicts) {
        Some(dir) => Some(Vocabulary::read_dicts(&dir)?),
        None => None,
    };
    let k = resolve_relation(&model, vocab.as_ref(), relation)?;
    let m = model.mixing_matrix(k)?;
    let csv = mixing_csv(&m);
    match csv_out {
        Some(path) => write_file(path, csv.as_bytes())?,
        None => write!(out, "{csv}")?,
    }
    writeln!(out, "# abs_diagonal_sum = {}", abs_diagonal_sum(&m))?;
    Ok(())
}

/// Writes the seeded mother/father/parent toy graph as triple files.
pub fn write_family_kg(dir: &Path, seed: u64, out: &mut dyn Write) -> Result<()> {
    let kg = family_kg(&FamilyConfig {
        seed,
        ..FamilyConfig::default()
    })?;
    kg.write(dir)?;
    writeln!(
        out,
        "wrote {} train, {} valid, {} test triples to {}",
        kg.data.train.len(),
        kg.data.valid.len(),
        kg.data.test.len(),
        dir.display()
    )?;
    Ok(())
}

/// Reads a training log from a run directory.
pub fn read_log(dir: &Path) -> Result<String> {
    let path = dir.join(LOG_FILE);
    std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))
}
