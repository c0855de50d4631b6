use anyhow::Result;
use leap::data::{generate_synthetic, GraphRecord, SyntheticSpec};

use super::jsonl_bytes;
use crate::args::SynthArgs;
use crate::output::emit;

pub fn run(args: &SynthArgs, seed: u64) -> Result<()> {
    let ds = generate_synthetic(SyntheticSpec { count: args.count, seed })?;
    let records: Vec<GraphRecord> = ds
        .graphs
        .iter()
        .zip(ds.targets)
        .map(|(g, t)| GraphRecord::from_graph(g, t))
        .collect();
    emit(args.out.as_deref(), &jsonl_bytes(&records)?)?;
    log::info!("wrote {} synthetic graphs", records.len());
    Ok(())
}
