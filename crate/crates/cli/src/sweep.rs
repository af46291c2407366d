//! Grid sweeps over configuration keys.
//!
//! A grid file holds `key = v1, v2, ...` lines using the configuration keys.
//! Repeated values and repeated keys are merged; the runs are the Cartesian
//! product of all value sets, with the last key varying fastest.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use crate::commands::train;
use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = Grid::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, values) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("grid line {}: expected `key = v1, v2, ...`", n + 1))?;
            let key = key.trim();
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(str::to_owned)
                .collect();
            if values.is_empty() {
                bail!("grid line {}: no values for `{key}`", n + 1);
            }
            let slot = match grid.axes.iter().position(|(k, _)| k == key) {
                Some(i) => &mut grid.axes[i].1,
                None => {
                    grid.axes.push((key.to_owned(), Vec::new()));
                    &mut grid.axes.last_mut().expect("just pushed").1
                }
            };
            for v in values {
                if !slot.contains(&v) {
                    slot.push(v);
                }
            }
        }
        Ok(grid)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read grid {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in grid {}", path.display()))
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All combinations as `(key, value)` lists, last axis fastest.
    pub fn combinations(&self) -> Vec<Vec<(String, String)>> {
        let mut out: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push((key.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub run: usize,
    pub settings: Vec<(String, String)>,
    pub output_dir: PathBuf,
    pub outcome: std::result::Result<(f64, usize), String>,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub output_dir: PathBuf,
    pub max_runs: Option<usize>,
    /// Number of runs trained concurrently; 0 picks the rayon default.
    pub jobs: usize,
}

/// Runs every grid point on top of `base`. A failing run is recorded in its
/// row and does not stop the others. Rows come back sorted by best
/// validation MRR, failures last.
pub fn sweep(base: &RunConfig, grid: &Grid, options: &SweepOptions) -> Result<Vec<SweepRow>> {
    let mut combos = grid.combinations();
    if let Some(cap) = options.max_runs {
        combos.truncate(cap);
    }
    let mut configs = Vec::with_capacity(combos.len());
    for (run, settings) in combos.into_iter().enumerate() {
        let mut cfg = base.clone();
        for (k, v) in &settings {
            cfg.set(k, v).with_context(|| format!("grid point {run}"))?;
        }
        let dir = options.output_dir.join(format!("run_{run:03}"));
        cfg.set("output_dir", &dir.display().to_string())?;
        configs.push((run, settings, cfg));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(options.jobs).build()?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        configs
            .into_par_iter()
            .map(|(run, settings, cfg)| {
                let outcome = train(&cfg, &mut std::io::sink())
                    .map(|s| (s.best_metrics.mrr, s.best_epoch))
                    .map_err(|e| format!("{e:#}"));
                SweepRow {
                    run,
                    settings,
                    output_dir: cfg.output_dir.clone(),
                    outcome,
                }
            })
            .collect()
    });
    rows.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok((x, _)), Ok((y, _))) => y.total_cmp(x).then(a.run.cmp(&b.run)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.run.cmp(&b.run),
    });
    Ok(rows)
}

/// Tab-separated summary: rank, run, one column per grid key, best
/// validation MRR, best epoch and status.
pub fn format_table(grid: &Grid, rows: &[SweepRow]) -> String {
    let mut out = String::from("rank\trun");
    for (k, _) in &grid.axes {
        out.push('\t');
        out.push_str(k);
    }
    out.push_str("\tbest_valid_mrr\tbest_epoch\tstatus\n");
    for (rank, row) in rows.iter().enumerate() {
        write!(out, "{}\t{}", rank + 1, row.run).expect("writing to a String");
        for (_, v) in &row.settings {
            write!(out, "\t{v}").expect("writing to a String");
        }
        match &row.outcome {
            Ok((mrr, epoch)) => writeln!(out, "\t{mrr}\t{epoch}\tok"),
            Err(e) => writeln!(out, "\t-\t-\tfailed: {}", e.replace(['\t', '\n'], " ")),
        }
        .expect("writing to a String");
    }
    out
}

/// Runs the sweep, writes `sweep.tsv` into the sweep directory and prints
/// the table.
pub fn run_sweep(base: &RunConfig, grid: &Grid, options: &SweepOptions, out: &mut dyn Write) -> Result<Vec<SweepRow>> {
    std::fs::create_dir_all(&options.output_dir)
        .with_context(|| format!("cannot create {}", options.output_dir.display()))?;
    let rows = sweep(base, grid, options)?;
    let table = format_table(grid, &rows);
    let path = options.output_dir.join("sweep.tsv");
    std::fs::write(&path, &table).with_context(|| format!("cannot write {}", path.display()))?;
    out.write_all(table.as_bytes())?;
    Ok(rows)
}
