//! Grid sweeps over encoder settings. Each finished cell is appended to the
//! table as one JSON line, so an interrupted sweep resumes where it stopped.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use leap::train::Summary;
use leap::{train_eval, LeapConfig, PeSpec, ProjectionKind};
use serde::{Deserialize, Serialize};

use super::load_dataset;
use crate::args::{AblateArgs, HopSpec};
use crate::output::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub dataset: String,
    pub backbone: String,
    pub hops: String,
    pub pe_dim: usize,
    pub directions: usize,
    pub thresholds: usize,
    pub sharpness: f64,
    pub projection: ProjectionKind,
    pub learn_directions: bool,
    pub parameters: usize,
    pub test_loss: Option<Summary>,
    pub accuracy: Option<Summary>,
    pub auroc: Option<Summary>,
    pub r2: Option<Summary>,
}

struct Cell {
    key: String,
    hops: HopSpec,
    leap: LeapConfig,
}

fn cells(args: &AblateArgs, dataset: &str) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for hops in &args.hops {
        for &dim in &args.pe_dim {
            for &directions in &args.dirs {
                for &thresholds in &args.thresholds {
                    for &sharpness in &args.sharpness {
                        for &projection in &args.proj {
                            let leap = LeapConfig {
                                hops: hops.0.clone(),
                                directions,
                                thresholds,
                                sharpness,
                                projection,
                                dim,
                                learn_directions: args.learn_directions,
                                seed: 0,
                            };
                            let key = format!(
                                "{dataset}/{}/hops={hops}/dim={dim}/dirs={directions}/thr={thresholds}/lambda={sharpness}/proj={projection}/learn={}",
                                args.model.backbone, args.learn_directions
                            );
                            leap.validate().with_context(|| format!("invalid grid cell {key}"))?;
                            out.push(Cell {
                                key,
                                hops: hops.clone(),
                                leap,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Finished rows of an existing table. A torn final line (from an
/// interrupted write) is dropped and the file rewritten without it.
fn existing_rows(path: &Path) -> Result<Vec<AblationRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut rows = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<AblationRow>(line) {
            Ok(row) => rows.push(row),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("dropping an incomplete final row of {}", path.display());
                let mut kept = Vec::new();
                for row in &rows {
                    serde_json::to_writer(&mut kept, row)?;
                    kept.push(b'\n');
                }
                write_atomic(path, &kept)?;
            }
            Err(e) => bail!("{} line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(rows)
}

pub fn run(args: &AblateArgs, seed: u64) -> Result<()> {
    let ds = load_dataset(&args.input)?;
    let feature_dim = ds.feature_dim().context("dataset is empty")?;
    let grid = cells(args, &ds.name)?;
    let done: HashSet<String> = existing_rows(&args.out)?.into_iter().map(|r| r.cell).collect();
    let train = args.fit.config(ds.task, seed);
    let todo: Vec<&Cell> = grid.iter().filter(|c| !done.contains(&c.key)).collect();
    eprintln!("{} cells, {} already done", grid.len(), grid.len() - todo.len());
    for cell in todo {
        let config = args.model.config(feature_dim, ds.task, PeSpec::Leap(cell.leap.clone()), seed);
        let report = train_eval(&config, &ds, &train)?.report;
        let row = AblationRow {
            cell: cell.key.clone(),
            dataset: ds.name.clone(),
            backbone: args.model.backbone.to_string(),
            hops: cell.hops.to_string(),
            pe_dim: cell.leap.dim,
            directions: cell.leap.directions,
            thresholds: cell.leap.thresholds,
            sharpness: cell.leap.sharpness,
            projection: cell.leap.projection,
            learn_directions: cell.leap.learn_directions,
            parameters: report.parameters,
            test_loss: report.test_loss,
            accuracy: report.accuracy,
            auroc: report.auroc,
            r2: report.r2,
        };
        let mut line = serde_json::to_vec(&row)?;
        line.push(b'\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&args.out)
            .with_context(|| format!("cannot open {}", args.out.display()))?;
        file.write_all(&line)?;
        file.sync_data()?;
        eprintln!("{}: done", cell.key);
    }
    Ok(())
}
