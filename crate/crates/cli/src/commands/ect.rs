use anyhow::{bail, Context, Result};
use leap::ect::{
    exact_ect, local_ect, sample_directions, smooth_ect, DirectionSet, EctMatrix, EctMode, ThresholdGrid,
    DEFAULT_THRESHOLD_RANGE,
};
use leap::FeaturedGraph;
use serde::Serialize;

use crate::args::EctArgs;
use crate::output::{emit, json_bytes};

#[derive(Debug, Serialize)]
struct Smoothed {
    sharpness: f64,
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct EctReport {
    graph: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    node: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hops: Option<usize>,
    nodes: usize,
    edges: usize,
    /// One unit vector per row.
    directions: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
    /// Row `i` is the Euler characteristic curve along direction `i`.
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<Vec<Vec<i64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothed: Option<Smoothed>,
}

/// Thresholds spanning every projection of `g` with a 10% margin; the
/// library default for normalized features otherwise.
fn default_range(g: &FeaturedGraph, local: bool) -> (f64, f64) {
    if local {
        return DEFAULT_THRESHOLD_RANGE;
    }
    let radius = (0..g.num_nodes())
        .map(|v| g.feature(v).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if radius > 0.0 {
        (-1.1 * radius, 1.1 * radius)
    } else {
        DEFAULT_THRESHOLD_RANGE
    }
}

fn transform(
    g: &FeaturedGraph,
    args: &EctArgs,
    dirs: &DirectionSet,
    grid: &ThresholdGrid,
    mode: EctMode,
) -> Result<EctMatrix> {
    Ok(match (args.node, mode) {
        (Some(v), mode) => local_ect(g, v, args.hops, dirs, grid, mode)?,
        (None, EctMode::Exact) => exact_ect(g, dirs, grid)?,
        (None, EctMode::Smoothed { sharpness }) => smooth_ect(g, dirs, grid, sharpness)?,
    })
}

pub fn run(args: &EctArgs, seed: u64) -> Result<()> {
    let records = leap::data::read_records(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let Some(record) = records.get(args.graph) else {
        bail!("{} holds {} graphs; --graph {} is out of range", args.input.display(), records.len(), args.graph);
    };
    let g = record.to_graph()?;
    if let Some(v) = args.node {
        if v >= g.num_nodes() {
            bail!("--node {v} is out of range for a graph with {} nodes", g.num_nodes());
        }
    }
    let dirs = sample_directions(g.feature_dim(), args.dirs, seed)?;
    let (lo, hi) = default_range(&g, args.node.is_some());
    let grid = ThresholdGrid::uniform(args.thresholds, args.t_min.unwrap_or(lo), args.t_max.unwrap_or(hi))?;
    let both = !args.exact && !args.smooth;
    let exact = if args.exact || both {
        Some(transform(&g, args, &dirs, &grid, EctMode::Exact)?.to_integers())
    } else {
        None
    };
    let smoothed = if args.smooth || both {
        let mode = EctMode::Smoothed { sharpness: args.sharpness };
        Some(Smoothed {
            sharpness: args.sharpness,
            values: transform(&g, args, &dirs, &grid, mode)?.values.to_rows(),
        })
    } else {
        None
    };
    let report = EctReport {
        graph: args.graph,
        node: args.node,
        hops: args.node.map(|_| args.hops),
        nodes: g.num_nodes(),
        edges: g.num_edges(),
        directions: dirs.as_matrix().to_rows(),
        thresholds: grid.values().to_vec(),
        exact,
        smoothed,
    };
    emit(args.out.as_deref(), &json_bytes(&report)?)
}
