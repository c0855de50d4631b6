//! GCN, GAT and NoMP backbones with mean readout and a prediction head.
//!
//! Graphs are processed in batches formed as a disjoint union; every
//! per-graph quantity (normalized adjacency, attention edges, LEAP
//! neighborhoods, static encodings) is precomputed once in a
//! [`PreparedGraph`].

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::{AttentionBlock, Init, Linear, Mlp};
use crate::autodiff::{Bindings, ParamId, ParamStore, Tape, Var};
use crate::ect::NeighborhoodBatch;
use crate::encoders::{lape, rwpe, LeapConfig, LeapEncoder};
use crate::error::{Error, Result};
use crate::graph::FeaturedGraph;
use crate::matrix::DenseMatrix;

pub const EMBEDDING_DIM: usize = 3;
pub const NOMP_WIDTH: usize = 16;
pub const GAT_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Gcn,
    Gat,
    Nomp,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Gcn => "gcn",
            Backbone::Gat => "gat",
            Backbone::Nomp => "nomp",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            "nomp" => Ok(Self::Nomp),
            other => Err(Error::InvalidArgument(format!("unknown backbone `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Classification { classes: usize },
    Regression { targets: usize },
}

impl Task {
    pub fn output_dim(self) -> usize {
        match self {
            Task::Classification { classes } => classes,
            Task::Regression { targets } => targets,
        }
    }
}

/// Positional encoding attached to the backbone input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PeSpec {
    None,
    Rwpe { dim: usize },
    Lape { dim: usize },
    Leap(LeapConfig),
}

impl PeSpec {
    pub fn dim(&self) -> usize {
        match self {
            PeSpec::None => 0,
            PeSpec::Rwpe { dim } | PeSpec::Lape { dim } => *dim,
            PeSpec::Leap(c) => c.dim,
        }
    }

    pub fn label(&self) -> String {
        match self {
            PeSpec::None => "none".into(),
            PeSpec::Rwpe { .. } => "rwpe".into(),
            PeSpec::Lape { .. } => "lape".into(),
            PeSpec::Leap(c) if c.learn_directions => format!("leap-l:{}", c.projection),
            PeSpec::Leap(c) => format!("leap-f:{}", c.projection),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub layers: usize,
    pub hidden: usize,
    /// Raw node feature dimension as stored in the graphs.
    pub feature_dim: usize,
    pub task: Task,
    pub pe: PeSpec,
    /// When set, feature column 0 holds integer codes below this bound and
    /// nodes are embedded into a learnable 3-dimensional table.
    pub vocab: Option<usize>,
    pub seed: u64,
}

impl ModelConfig {
    /// Five layers, hidden width 32.
    pub fn standard(backbone: Backbone, feature_dim: usize, task: Task, pe: PeSpec) -> Self {
        Self {
            backbone,
            layers: 5,
            hidden: 32,
            feature_dim,
            task,
            pe,
            vocab: None,
            seed: 0,
        }
    }

    /// Ten layers, hidden width 64.
    pub fn alchemy_scale(backbone: Backbone, feature_dim: usize, task: Task, pe: PeSpec) -> Self {
        Self {
            layers: 10,
            hidden: 64,
            ..Self::standard(backbone, feature_dim, task, pe)
        }
    }

    /// Dimension of the node features before any encoding is attached.
    pub fn raw_dim(&self) -> usize {
        if self.vocab.is_some() {
            EMBEDDING_DIM
        } else {
            self.feature_dim
        }
    }

    /// Backbone input dimension: raw features plus the encoding.
    pub fn input_dim(&self) -> usize {
        self.raw_dim() + self.pe.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument(
                "layers, hidden and feature dimensions must be positive".into(),
            ));
        }
        if self.task.output_dim() == 0 {
            return Err(Error::InvalidArgument("output dimension must be positive".into()));
        }
        if let Task::Classification { classes } = self.task {
            if classes < 2 {
                return Err(Error::SingleClass);
            }
        }
        if self.vocab == Some(0) {
            return Err(Error::InvalidArgument("vocabulary must be non-empty".into()));
        }
        match &self.pe {
            PeSpec::Leap(c) => c.validate()?,
            PeSpec::Rwpe { dim: 0 } | PeSpec::Lape { dim: 0 } => {
                return Err(Error::InvalidArgument("PE dimension must be positive".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct GatLayer {
    linear: Linear,
    att_src: ParamId,
    att_dst: ParamId,
}

#[derive(Debug, Clone)]
enum BackboneParams {
    Gcn { layers: Vec<Linear>, head: Linear },
    Gat { layers: Vec<GatLayer>, head: Linear },
    Nomp { embed: Linear, attention: AttentionBlock, head: Mlp },
}

/// A graph with every structure the model needs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub graph: FeaturedGraph,
    pub static_pe: Option<DenseMatrix>,
    pub neighborhoods: Vec<NeighborhoodBatch>,
    pub codes: Option<Vec<usize>>,
}

/// Disjoint union of prepared graphs.
#[derive(Debug, Clone)]
pub struct Batch {
    pub num_nodes: usize,
    pub features: DenseMatrix,
    pub static_pe: Option<DenseMatrix>,
    pub codes: Option<Rc<[usize]>>,
    /// Node -> graph index.
    pub graph_of: Rc<[usize]>,
    pub graph_sizes: Vec<usize>,
    /// Node offsets, one more entry than graphs.
    pub offsets: Rc<[usize]>,
    /// `D~^{-1/2} (A + I) D~^{-1/2}` as triplets.
    pub gcn_adjacency: Rc<[(usize, usize, f64)]>,
    /// Directed message edges including self loops.
    pub edge_src: Rc<[usize]>,
    pub edge_dst: Rc<[usize]>,
    pub neighborhoods: Vec<NeighborhoodBatch>,
}

impl Batch {
    pub fn new(parts: &[&PreparedGraph]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("batch has no graphs"))?;
        let dim = first.graph.feature_dim();
        let num_nodes: usize = parts.iter().map(|p| p.graph.num_nodes()).sum();
        let mut features = DenseMatrix::zeros(num_nodes, dim);
        let pe_dim = first.static_pe.as_ref().map(DenseMatrix::cols);
        let mut static_pe = pe_dim.map(|k| DenseMatrix::zeros(num_nodes, k));
        let mut codes = first.codes.as_ref().map(|_| Vec::with_capacity(num_nodes));
        let mut graph_of = Vec::with_capacity(num_nodes);
        let mut graph_sizes = Vec::with_capacity(parts.len());
        let mut offsets = vec![0];
        let mut triplets = Vec::new();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut offset = 0;
        for (gi, part) in parts.iter().enumerate() {
            let g = &part.graph;
            if g.feature_dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: g.feature_dim(),
                    context: "feature dimension within batch",
                });
            }
            let n = g.num_nodes();
            for v in 0..n {
                features.row_mut(offset + v).copy_from_slice(g.feature(v));
            }
            match (&mut static_pe, &part.static_pe) {
                (Some(out), Some(pe)) if pe.cols() == out.cols() => {
                    for v in 0..n {
                        out.row_mut(offset + v).copy_from_slice(pe.row(v));
                    }
                }
                (None, None) => {}
                _ => return Err(Error::InvalidArgument("inconsistent static encodings in batch".into())),
            }
            match (&mut codes, &part.codes) {
                (Some(out), Some(c)) => out.extend_from_slice(c),
                (None, None) => {}
                _ => return Err(Error::InvalidArgument("inconsistent categorical codes in batch".into())),
            }
            graph_of.extend(std::iter::repeat_n(gi, n));
            graph_sizes.push(n);

            let deg = g.degrees();
            for v in 0..n {
                triplets.push((offset + v, offset + v, 1.0 / (deg[v] + 1) as f64));
                src.push(offset + v);
                dst.push(offset + v);
            }
            for &(a, b) in g.edges() {
                let w = 1.0 / (((deg[a] + 1) * (deg[b] + 1)) as f64).sqrt();
                triplets.push((offset + a, offset + b, w));
                triplets.push((offset + b, offset + a, w));
                src.extend([offset + a, offset + b]);
                dst.extend([offset + b, offset + a]);
            }
            offset += n;
            offsets.push(offset);
        }
        let levels = first.neighborhoods.len();
        if parts.iter().any(|p| p.neighborhoods.len() != levels) {
            return Err(Error::InvalidArgument("inconsistent hop levels in batch".into()));
        }
        let neighborhoods = (0..levels)
            .map(|l| {
                let level: Vec<&NeighborhoodBatch> = parts.iter().map(|p| &p.neighborhoods[l]).collect();
                NeighborhoodBatch::concat(&level, &offsets[..parts.len()])
            })
            .collect();
        Ok(Self {
            num_nodes,
            features,
            static_pe,
            codes: codes.map(Into::into),
            graph_of: graph_of.into(),
            graph_sizes,
            offsets: offsets.into(),
            gcn_adjacency: triplets.into(),
            edge_src: src.into(),
            edge_dst: dst.into(),
            neighborhoods,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_sizes.len()
    }
}

/// Componentwise mean of node states per graph.
pub fn readout_mean(tape: &mut Tape, x: Var, graph_of: &Rc<[usize]>, sizes: &[usize]) -> Result<Var> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Empty("readout over an empty graph"));
    }
    let sums = tape.segment_sum(x, graph_of.clone(), sizes.len())?;
    let inv = DenseMatrix::from_vec(sizes.len(), 1, sizes.iter().map(|&s| 1.0 / s as f64).collect())?;
    let inv = tape.constant(inv);
    tape.mul_col(sums, inv)
}

/// Row lookup into an embedding table.
pub fn embed_categorical(tape: &mut Tape, table: Var, codes: &Rc<[usize]>) -> Result<Var> {
    let vocab = tape.shape(table).0;
    if let Some(&bad) = codes.iter().find(|&&c| c >= vocab) {
        return Err(Error::InvalidArgument(format!(
            "categorical code {bad} outside vocabulary of {vocab}"
        )));
    }
    tape.gather_rows(table, codes.clone())
}

/// A backbone with its parameters and optional LEAP encoder.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    backbone: BackboneParams,
    leap: Option<LeapEncoder>,
    embedding: Option<ParamId>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(config.seed);
        let embedding = config.vocab.map(|v| {
            store.add("embedding", init.uniform(v, EMBEDDING_DIM, 1.0), true)
        });
        let leap = match &config.pe {
            PeSpec::Leap(c) => {
                let c = LeapConfig {
                    seed: c.seed ^ config.seed,
                    ..c.clone()
                };
                Some(LeapEncoder::new(c, config.raw_dim(), &mut store, &mut init)?)
            }
            _ => None,
        };
        let backbone = build_backbone(&config, &mut store, &mut init);
        Ok(Self {
            config,
            store,
            backbone,
            leap,
            embedding,
        })
    }

    pub fn leap(&self) -> Option<&LeapEncoder> {
        self.leap.as_ref()
    }

    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Trainable parameters excluding the encoder and embedding.
    pub fn backbone_param_count(&self) -> usize {
        self.store.count_with_prefix("backbone")
    }

    pub fn prepare(&self, g: &FeaturedGraph) -> Result<PreparedGraph> {
        if g.feature_dim() != self.config.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.feature_dim,
                got: g.feature_dim(),
                context: "graph feature dimension",
            });
        }
        let codes = match self.config.vocab {
            Some(vocab) => Some(
                (0..g.num_nodes())
                    .map(|v| {
                        let x = g.feature(v)[0];
                        if x >= 0.0 && x.fract() == 0.0 && (x as usize) < vocab {
                            Ok(x as usize)
                        } else {
                            Err(Error::InvalidArgument(format!(
                                "node {v} has feature {x}, not a code below {vocab}"
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let static_pe = match &self.config.pe {
            PeSpec::Rwpe { dim } => Some(rwpe(g, *dim)?),
            PeSpec::Lape { dim } => Some(lape(g, *dim)?),
            _ => None,
        };
        let neighborhoods = match &self.leap {
            Some(enc) => enc.neighborhoods(g)?,
            None => Vec::new(),
        };
        Ok(PreparedGraph {
            graph: g.clone(),
            static_pe,
            neighborhoods,
            codes,
        })
    }

    pub fn prepare_all(&self, graphs: &[FeaturedGraph]) -> Result<Vec<PreparedGraph>> {
        graphs.iter().map(|g| self.prepare(g)).collect()
    }

    /// Backbone input: raw (or embedded) features with the encoding appended.
    pub fn input_features(&self, tape: &mut Tape, b: &Bindings, batch: &Batch) -> Result<Var> {
        let raw = match (self.embedding, &batch.codes) {
            (Some(table), Some(codes)) => embed_categorical(tape, b.var(table), codes)?,
            (None, None) => tape.constant(batch.features.clone()),
            _ => return Err(Error::InvalidArgument("batch was prepared for another model".into())),
        };
        match (&self.config.pe, &self.leap) {
            (PeSpec::None, _) => Ok(raw),
            (PeSpec::Leap(_), Some(enc)) => {
                let pe = enc.encode_on_tape(tape, b, raw, &batch.neighborhoods)?;
                tape.concat_cols(&[raw, pe])
            }
            _ => {
                let pe = batch
                    .static_pe
                    .clone()
                    .ok_or(Error::InvalidArgument("batch lacks static encodings".into()))?;
                let pe = tape.constant(pe);
                tape.concat_cols(&[raw, pe])
            }
        }
    }

    /// Node states after the message passing (or attention) layers.
    pub fn node_states(&self, tape: &mut Tape, b: &Bindings, batch: &Batch) -> Result<Var> {
        let x = self.input_features(tape, b, batch)?;
        let n = batch.num_nodes;
        match &self.backbone {
            BackboneParams::Gcn { layers, .. } => {
                let mut h = x;
                for (i, layer) in layers.iter().enumerate() {
                    let hw = tape.matmul(h, b.var(layer.weight))?;
                    h = tape.spmm(batch.gcn_adjacency.clone(), n, hw)?;
                    if let Some(bias) = layer.bias {
                        h = tape.add_row(h, b.var(bias))?;
                    }
                    if i + 1 < layers.len() {
                        h = tape.relu(h);
                    }
                }
                Ok(h)
            }
            BackboneParams::Gat { layers, .. } => {
                let mut h = x;
                for (i, layer) in layers.iter().enumerate() {
                    h = gat_layer(tape, b, layer, h, batch)?;
                    if i + 1 < layers.len() {
                        h = tape.relu(h);
                    }
                }
                Ok(h)
            }
            BackboneParams::Nomp { embed, attention, .. } => {
                let h = embed.forward(tape, b, x)?;
                attention.forward(tape, b, h, batch.offsets.clone())
            }
        }
    }

    /// `graphs x output` logits (classification) or predictions.
    pub fn forward(&self, tape: &mut Tape, b: &Bindings, batch: &Batch) -> Result<Var> {
        let h = self.node_states(tape, b, batch)?;
        let pooled = readout_mean(tape, h, &batch.graph_of, &batch.graph_sizes)?;
        match &self.backbone {
            BackboneParams::Gcn { head, .. } | BackboneParams::Gat { head, .. } => {
                head.forward(tape, b, pooled)
            }
            BackboneParams::Nomp { head, .. } => head.forward(tape, b, pooled),
        }
    }

    /// Forward pass without keeping gradients.
    pub fn predict(&self, batch: &Batch) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let b = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &b, batch)?;
        Ok(tape.value(out).clone())
    }

    /// Puts trainable directions back on the unit sphere.
    pub fn renormalize(&mut self, seed: u64) {
        if let Some(enc) = &self.leap {
            enc.renormalize(&mut self.store, seed);
        }
    }
}

fn gat_layer(tape: &mut Tape, b: &Bindings, layer: &GatLayer, h: Var, batch: &Batch) -> Result<Var> {
    let z = tape.matmul(h, b.var(layer.linear.weight))?;
    let s_src = tape.matmul(z, b.var(layer.att_src))?;
    let s_dst = tape.matmul(z, b.var(layer.att_dst))?;
    let e_src = tape.gather_rows(s_src, batch.edge_src.clone())?;
    let e_dst = tape.gather_rows(s_dst, batch.edge_dst.clone())?;
    let scores = tape.add(e_src, e_dst)?;
    let scores = tape.leaky_relu(scores, GAT_SLOPE);
    let alpha = tape.segment_softmax(scores, batch.edge_dst.clone(), batch.num_nodes)?;
    let messages = tape.gather_rows(z, batch.edge_src.clone())?;
    let weighted = tape.mul_col(messages, alpha)?;
    let out = tape.segment_sum(weighted, batch.edge_dst.clone(), batch.num_nodes)?;
    match layer.linear.bias {
        Some(bias) => tape.add_row(out, b.var(bias)),
        None => Ok(out),
    }
}

fn message_passing_count(config: &ModelConfig) -> usize {
    let (i, h, o) = (config.input_dim(), config.hidden, config.task.output_dim());
    Linear::param_count(i, h, true)
        + (config.layers - 1) * Linear::param_count(h, h, true)
        + Linear::param_count(h, o, true)
}

/// Head width that brings NoMP within reach of the GCN parameter count.
pub fn nomp_head_width(config: &ModelConfig) -> usize {
    let target = message_passing_count(config) as f64;
    let out = config.task.output_dim();
    let fixed = Linear::param_count(config.input_dim(), NOMP_WIDTH, true)
        + AttentionBlock::param_count(NOMP_WIDTH, None)
        + out;
    let per_unit = (NOMP_WIDTH + 1 + out) as f64;
    ((target - fixed as f64) / per_unit).round().max(1.0) as usize
}

fn build_backbone(config: &ModelConfig, store: &mut ParamStore, init: &mut Init) -> BackboneParams {
    let input = config.input_dim();
    let out = config.task.output_dim();
    let hidden = config.hidden;
    let widths: Vec<usize> = std::iter::once(input)
        .chain(std::iter::repeat_n(hidden, config.layers))
        .collect();
    match config.backbone {
        Backbone::Gcn => BackboneParams::Gcn {
            layers: widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| Linear::new(store, init, &format!("backbone.gcn{i}"), w[0], w[1], true))
                .collect(),
            head: Linear::new(store, init, "backbone.head", hidden, out, true),
        },
        Backbone::Gat => BackboneParams::Gat {
            layers: widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let name = format!("backbone.gat{i}");
                    GatLayer {
                        linear: Linear::new(store, init, &name, w[0], w[1], true),
                        att_src: store.add(format!("{name}.att_src"), init.glorot(w[1], 1), true),
                        att_dst: store.add(format!("{name}.att_dst"), init.glorot(w[1], 1), true),
                    }
                })
                .collect(),
            head: Linear::new(store, init, "backbone.head", hidden, out, true),
        },
        Backbone::Nomp => {
            let width = nomp_head_width(config);
            BackboneParams::Nomp {
                embed: Linear::new(store, init, "backbone.embed", input, NOMP_WIDTH, true),
                attention: AttentionBlock::new(store, init, "backbone.attention", NOMP_WIDTH, None),
                head: Mlp::new(store, init, "backbone.head", &[NOMP_WIDTH, width, out]),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> FeaturedGraph {
        FeaturedGraph::from_feature_rows(
            3,
            &[(0, 1), (1, 2)],
            &[vec![0.1, 0.2], vec![-0.3, 0.5], vec![0.7, -0.4]],
        )
        .unwrap()
    }

    fn cls() -> Task {
        Task::Classification { classes: 2 }
    }

    #[test]
    fn gcn_single_node_is_an_mlp() {
        let mut config = ModelConfig::standard(Backbone::Gcn, 2, cls(), PeSpec::None);
        config.layers = 2;
        let model = Model::new(config).unwrap();
        let g = FeaturedGraph::from_feature_rows(1, &[], &[vec![0.3, -0.2]]).unwrap();
        let p = model.prepare(&g).unwrap();
        let batch = Batch::new(&[&p]).unwrap();
        assert_eq!(&*batch.gcn_adjacency, &[(0, 0, 1.0)]);

        let mut tape = Tape::new();
        let b = model.store.bind(&mut tape);
        let x = tape.constant(g.features().clone());
        let BackboneParams::Gcn { layers, head } = &model.backbone else { unreachable!() };
        let h = layers[0].forward(&mut tape, &b, x).unwrap();
        let h = tape.relu(h);
        let h = layers[1].forward(&mut tape, &b, h).unwrap();
        let y = head.forward(&mut tape, &b, h).unwrap();
        assert_eq!(tape.value(y), &model.predict(&batch).unwrap());
    }

    #[test]
    fn gcn_adjacency_weights() {
        let model = Model::new(ModelConfig::standard(Backbone::Gcn, 2, cls(), PeSpec::None)).unwrap();
        let p = model.prepare(&path3()).unwrap();
        let batch = Batch::new(&[&p]).unwrap();
        let mut dense = DenseMatrix::zeros(3, 3);
        for &(r, c, w) in batch.gcn_adjacency.iter() {
            dense[(r, c)] += w;
        }
        let expect = 1.0 / 6f64.sqrt();
        assert!((dense[(0, 1)] - expect).abs() < 1e-15);
        assert!((dense[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(dense.max_asymmetry(), 0.0);
    }

    #[test]
    fn gat_self_only_and_uniform_attention() {
        let config = ModelConfig {
            layers: 1,
            ..ModelConfig::standard(Backbone::Gat, 2, cls(), PeSpec::None)
        };
        let model = Model::new(config).unwrap();
        let BackboneParams::Gat { layers, .. } = &model.backbone else { unreachable!() };

        // Isolated node: attention weight 1 on itself, so the layer is affine.
        let g = FeaturedGraph::from_feature_rows(1, &[], &[vec![0.4, 0.9]]).unwrap();
        let batch = Batch::new(&[&model.prepare(&g).unwrap()]).unwrap();
        let mut tape = Tape::new();
        let b = model.store.bind(&mut tape);
        let x = tape.constant(g.features().clone());
        let via_gat = gat_layer(&mut tape, &b, &layers[0], x, &batch).unwrap();
        let via_linear = layers[0].linear.forward(&mut tape, &b, x).unwrap();
        assert_eq!(tape.value(via_gat), tape.value(via_linear));

        // Uniform features: every neighbor gets the same weight, so the
        // output equals the transformed feature.
        let g = FeaturedGraph::from_feature_rows(3, &[(0, 1), (1, 2)], &vec![vec![0.5, 0.5]; 3]).unwrap();
        let batch = Batch::new(&[&model.prepare(&g).unwrap()]).unwrap();
        let x = tape.constant(g.features().clone());
        let out = gat_layer(&mut tape, &b, &layers[0], x, &batch).unwrap();
        let lin = layers[0].linear.forward(&mut tape, &b, x).unwrap();
        for (a, e) in tape.value(out).as_slice().iter().zip(tape.value(lin).as_slice()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn readout_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![5.0, 6.0]]).unwrap());
        let seg: Rc<[usize]> = vec![0, 0, 1].into();
        let y = readout_mean(&mut tape, x, &seg, &[2, 1]).unwrap();
        assert_eq!(tape.value(y).to_rows(), vec![vec![1.0, 2.0], vec![5.0, 6.0]]);
        assert!(readout_mean(&mut tape, x, &seg, &[]).is_err());
    }

    #[test]
    fn embedding_lookup() {
        let mut tape = Tape::new();
        let table = tape.leaf(DenseMatrix::identity(3));
        let codes: Rc<[usize]> = vec![2, 0, 2].into();
        let e = embed_categorical(&mut tape, table, &codes).unwrap();
        assert_eq!(tape.value(e).row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(tape.value(e).row(0), tape.value(e).row(2));
        assert_eq!(tape.value(e).row(1), &[1.0, 0.0, 0.0]);
        let s = tape.sum(e);
        tape.backward(s).unwrap();
        // Row 1 is never looked up.
        assert_eq!(tape.grad(table).to_rows(), vec![vec![1.0; 3], vec![0.0; 3], vec![2.0; 3]]);
        let bad: Rc<[usize]> = vec![3].into();
        assert!(embed_categorical(&mut tape, table, &bad).is_err());
    }

    #[test]
    fn categorical_model_runs() {
        let mut config = ModelConfig::standard(Backbone::Gcn, 1, cls(), PeSpec::None);
        config.vocab = Some(4);
        let model = Model::new(config).unwrap();
        let g = FeaturedGraph::from_feature_rows(2, &[(0, 1)], &[vec![3.0], vec![1.0]]).unwrap();
        let p = model.prepare(&g).unwrap();
        assert!(model.predict(&Batch::new(&[&p]).unwrap()).unwrap().is_finite());
        let bad = FeaturedGraph::from_feature_rows(1, &[], &[vec![4.0]]).unwrap();
        assert!(model.prepare(&bad).is_err());
    }

    #[test]
    fn nomp_ignores_edges_without_pe() {
        let model = Model::new(ModelConfig::standard(Backbone::Nomp, 2, cls(), PeSpec::None)).unwrap();
        let g = path3();
        let h = FeaturedGraph::new(3, &[(0, 2)], g.features().clone()).unwrap();
        let a = model.predict(&Batch::new(&[&model.prepare(&g).unwrap()]).unwrap()).unwrap();
        let b = model.predict(&Batch::new(&[&model.prepare(&h).unwrap()]).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_equals_individual() {
        let pe = PeSpec::Leap(LeapConfig::default());
        for backbone in [Backbone::Gcn, Backbone::Gat, Backbone::Nomp] {
            let model = Model::new(ModelConfig::standard(backbone, 2, cls(), pe.clone())).unwrap();
            let g1 = path3();
            let g2 = FeaturedGraph::from_feature_rows(2, &[(0, 1)], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
            let p1 = model.prepare(&g1).unwrap();
            let p2 = model.prepare(&g2).unwrap();
            let joint = model.predict(&Batch::new(&[&p1, &p2]).unwrap()).unwrap();
            let a = model.predict(&Batch::new(&[&p1]).unwrap()).unwrap();
            let b = model.predict(&Batch::new(&[&p2]).unwrap()).unwrap();
            for (x, y) in joint.row(0).iter().zip(a.row(0)) {
                assert!((x - y).abs() < 1e-12, "{backbone}");
            }
            for (x, y) in joint.row(1).iter().zip(b.row(0)) {
                assert!((x - y).abs() < 1e-12, "{backbone}");
            }
        }
    }

    #[test]
    fn nomp_parameter_count_matches_gcn() {
        for (dim, classes) in [(2, 2), (10, 6), (40, 15)] {
            for pe in [PeSpec::None, PeSpec::Leap(LeapConfig::default())] {
                let task = Task::Classification { classes };
                let gcn = Model::new(ModelConfig::standard(Backbone::Gcn, dim, task, pe.clone())).unwrap();
                let nomp = Model::new(ModelConfig::standard(Backbone::Nomp, dim, task, pe)).unwrap();
                let (g, n) = (gcn.backbone_param_count() as f64, nomp.backbone_param_count() as f64);
                assert!((n / g - 1.0).abs() <= 0.2, "gcn {g} nomp {n}");
            }
        }
    }

    #[test]
    fn pe_widens_input_by_its_dimension() {
        let base = ModelConfig::standard(Backbone::Gcn, 7, cls(), PeSpec::None);
        for pe in [
            PeSpec::Rwpe { dim: 10 },
            PeSpec::Lape { dim: 10 },
            PeSpec::Leap(LeapConfig::default()),
        ] {
            let with = ModelConfig { pe, ..base.clone() };
            assert_eq!(with.input_dim(), base.input_dim() + 10);
        }
    }

    #[test]
    fn presets() {
        let c = ModelConfig::standard(Backbone::Gcn, 3, cls(), PeSpec::None);
        assert_eq!((c.layers, c.hidden), (5, 32));
        let c = ModelConfig::alchemy_scale(Backbone::Gat, 3, cls(), PeSpec::None);
        assert_eq!((c.layers, c.hidden), (10, 64));
        assert!("mlp".parse::<Backbone>().is_err());
    }
}
