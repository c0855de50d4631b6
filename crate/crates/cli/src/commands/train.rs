use anyhow::{Context, Result};
use leap::train::ParamFile;
use leap::train_eval;

use super::load_dataset;
use crate::args::TrainArgs;
use crate::output::{emit, json_bytes, write_atomic};

pub fn run(args: &TrainArgs, seed: u64) -> Result<()> {
    let ds = load_dataset(&args.input)?;
    let feature_dim = ds.feature_dim().context("dataset is empty")?;
    let config = args.model.config(feature_dim, ds.task, args.leap.pe_spec(args.pe), seed);
    let train = args.fit.config(ds.task, seed);
    let outcome = train_eval(&config, &ds, &train)?;
    let report = &outcome.report;
    if let Some(warning) = &report.warning {
        log::warn!("{warning}");
    }
    for (name, summary) in [("accuracy", report.accuracy), ("auroc", report.auroc), ("r2", report.r2)] {
        if let Some(s) = summary {
            eprintln!("{name}: {:.4} ± {:.4}", s.mean, s.std);
        }
    }
    if let Some(path) = &args.params_out {
        write_atomic(path, &json_bytes(&ParamFile::from_model(&outcome.best_model))?)?;
    }
    emit(args.out.as_deref(), &json_bytes(report)?)
}
