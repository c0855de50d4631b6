//! LEAP: per-node smoothed local ECTs mapped to a k-dimensional encoding by
//! a learnable projection.
//!
//! For each node the pipeline takes the induced `m`-hop neighborhood,
//! mean-centers its features and scales them into the unit ball, evaluates
//! the smoothed ECT on a `|Θ| x |T|` grid and projects that matrix to `k`
//! reals. Directions are either frozen after random initialization (LEAP-F)
//! or trained with everything else (LEAP-L). Several hop counts can be
//! combined, each contributing `k / levels` coordinates.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, ParamId, ParamStore, Tape, Var};
use crate::ect::{
    local_smooth_ect_on_tape, renormalize_directions, sample_directions, NeighborhoodBatch,
    ThresholdGrid, DEFAULT_DIRECTIONS, DEFAULT_SHARPNESS, DEFAULT_THRESHOLDS,
};
use crate::error::{Error, Result};
use crate::graph::FeaturedGraph;
use crate::matrix::DenseMatrix;
use crate::nn::layers::{AttentionBlock, Init, Linear, Mlp};

pub const DEFAULT_PE_DIM: usize = 10;
pub const CONV_KERNEL_SIZES: [usize; 3] = [3, 5, 7];
pub const CONV_CHANNELS: usize = 4;
pub const HIDDEN_WIDTH: usize = 32;
pub const ATTENTION_WIDTH: usize = 16;
pub const ATTENTION_FF_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionKind {
    Linear,
    Conv1d,
    DeepSets,
    Attention,
    AttentionPe,
}

impl ProjectionKind {
    pub const ALL: [ProjectionKind; 5] = [
        ProjectionKind::Linear,
        ProjectionKind::Conv1d,
        ProjectionKind::DeepSets,
        ProjectionKind::Attention,
        ProjectionKind::AttentionPe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionKind::Linear => "linear",
            ProjectionKind::Conv1d => "conv1d",
            ProjectionKind::DeepSets => "deepsets",
            ProjectionKind::Attention => "attn",
            ProjectionKind::AttentionPe => "attn-pe",
        }
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "conv1d" | "conv" => Ok(Self::Conv1d),
            "deepsets" | "deep-sets" => Ok(Self::DeepSets),
            "attn" | "attention" => Ok(Self::Attention),
            "attn-pe" | "attention-pe" => Ok(Self::AttentionPe),
            other => Err(Error::InvalidArgument(format!("unknown projection `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeapConfig {
    /// One entry per hop level; encodings of all levels are concatenated.
    pub hops: Vec<usize>,
    pub directions: usize,
    pub thresholds: usize,
    pub sharpness: f64,
    pub projection: ProjectionKind,
    /// Output dimension `k`.
    pub dim: usize,
    pub learn_directions: bool,
    pub seed: u64,
}

impl Default for LeapConfig {
    fn default() -> Self {
        Self {
            hops: vec![1],
            directions: DEFAULT_DIRECTIONS,
            thresholds: DEFAULT_THRESHOLDS,
            sharpness: DEFAULT_SHARPNESS,
            projection: ProjectionKind::Linear,
            dim: DEFAULT_PE_DIM,
            learn_directions: true,
            seed: 0,
        }
    }
}

impl LeapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("PE dimension must be at least 1".into()));
        }
        if self.hops.is_empty() || self.hops.contains(&0) {
            return Err(Error::InvalidArgument("hop counts must be at least 1".into()));
        }
        if self.dim % self.hops.len() != 0 {
            return Err(Error::InvalidArgument(format!(
                "PE dimension {} is not divisible by the {} hop levels",
                self.dim,
                self.hops.len()
            )));
        }
        if self.directions == 0 || self.thresholds < 2 {
            return Err(Error::InvalidArgument(
                "need at least 1 direction and 2 thresholds".into(),
            ));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::InvalidArgument("sharpness must be positive".into()));
        }
        Ok(())
    }

    pub fn level_dim(&self) -> usize {
        self.dim / self.hops.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConvKernel {
    pub size: usize,
    /// `(|Θ| * size) x channels`, rows ordered (direction, tap).
    pub weight: ParamId,
    pub bias: ParamId,
}

/// The learnable map from a flattened `|Θ| x |T|` transform to `k` reals.
#[derive(Debug, Clone)]
pub enum Projection {
    /// `W flatten(M)` with `W` stored `k x (|Θ| |T|)`.
    Linear { weight: ParamId },
    /// Zero-padded 1-D convolutions over the threshold axis (directions as
    /// input channels); all output channels are averaged and fed to an MLP.
    Conv1d { kernels: Vec<ConvKernel>, mlp: Mlp },
    /// `outer(sum over directions of inner(ECC))`.
    DeepSets { inner: Mlp, outer: Mlp },
    /// Curves (optionally concatenated with their direction) are embedded,
    /// passed through one self-attention block, summed and fed to an MLP.
    Attention {
        with_directions: bool,
        embed: Linear,
        block: AttentionBlock,
        head: Mlp,
    },
}

impl Projection {
    pub fn new(
        kind: ProjectionKind,
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        directions: usize,
        thresholds: usize,
        feature_dim: usize,
        out: usize,
    ) -> Result<Self> {
        Ok(match kind {
            ProjectionKind::Linear => {
                let bound = (6.0 / (directions * thresholds + out) as f64).sqrt();
                Projection::Linear {
                    weight: store.add(
                        format!("{name}.weight"),
                        init.uniform(out, directions * thresholds, bound),
                        true,
                    ),
                }
            }
            ProjectionKind::Conv1d => Self::conv1d(
                store,
                init,
                name,
                directions,
                thresholds,
                out,
                &CONV_KERNEL_SIZES,
                CONV_CHANNELS,
            )?,
            ProjectionKind::DeepSets => Projection::DeepSets {
                inner: Mlp::new(
                    store,
                    init,
                    &format!("{name}.inner"),
                    &[thresholds, HIDDEN_WIDTH, HIDDEN_WIDTH],
                ),
                outer: Mlp::new(
                    store,
                    init,
                    &format!("{name}.outer"),
                    &[HIDDEN_WIDTH, HIDDEN_WIDTH, out],
                ),
            },
            ProjectionKind::Attention | ProjectionKind::AttentionPe => {
                let with_directions = kind == ProjectionKind::AttentionPe;
                let token = thresholds + if with_directions { feature_dim } else { 0 };
                Projection::Attention {
                    with_directions,
                    embed: Linear::new(store, init, &format!("{name}.embed"), token, ATTENTION_WIDTH, true),
                    block: AttentionBlock::new(
                        store,
                        init,
                        &format!("{name}.block"),
                        ATTENTION_WIDTH,
                        Some(ATTENTION_FF_WIDTH),
                    ),
                    head: Mlp::new(
                        store,
                        init,
                        &format!("{name}.head"),
                        &[ATTENTION_WIDTH, HIDDEN_WIDTH, out],
                    ),
                }
            }
        })
    }

    /// Convolutional projection with explicit kernel sizes and channel count.
    #[allow(clippy::too_many_arguments)]
    pub fn conv1d(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        directions: usize,
        thresholds: usize,
        out: usize,
        kernel_sizes: &[usize],
        channels: usize,
    ) -> Result<Self> {
        if let Some(&k) = kernel_sizes.iter().find(|&&k| k > thresholds || k == 0) {
            return Err(Error::InvalidArgument(format!(
                "kernel of width {k} does not fit {thresholds} thresholds"
            )));
        }
        let kernels = kernel_sizes
            .iter()
            .map(|&size| ConvKernel {
                size,
                weight: store.add(
                    format!("{name}.conv{size}.weight"),
                    init.glorot(directions * size, channels),
                    true,
                ),
                bias: store.add(
                    format!("{name}.conv{size}.bias"),
                    DenseMatrix::zeros(1, channels),
                    true,
                ),
            })
            .collect();
        let mlp = Mlp::new(
            store,
            init,
            &format!("{name}.mlp"),
            &[thresholds, HIDDEN_WIDTH, out],
        );
        Ok(Projection::Conv1d { kernels, mlp })
    }

    /// `ect` is `B x (|Θ| |T|)`; `directions` is `|Θ| x d`. Returns `B x k`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        ect: Var,
        directions: Var,
        thresholds: usize,
    ) -> Result<Var> {
        let (rows, flat) = tape.shape(ect);
        let (n_dirs, _) = tape.shape(directions);
        if flat != n_dirs * thresholds {
            return Err(Error::DimensionMismatch {
                expected: n_dirs * thresholds,
                got: flat,
                context: "flattened ECT width",
            });
        }
        match self {
            Projection::Linear { weight } => {
                let wt = tape.transpose(b.var(*weight));
                tape.matmul(ect, wt)
            }
            Projection::Conv1d { kernels, mlp } => {
                let mut outputs = Vec::with_capacity(kernels.len());
                let mut channels = 0;
                for kernel in kernels {
                    let patches = im2col(tape, ect, rows, n_dirs, thresholds, kernel.size)?;
                    let y = tape.matmul(patches, b.var(kernel.weight))?;
                    let y = tape.add_row(y, b.var(kernel.bias))?;
                    channels += tape.shape(y).1;
                    outputs.push(y);
                }
                let all = tape.concat_cols(&outputs)?;
                let summed = tape.sum_cols(all);
                let averaged = tape.scale(summed, 1.0 / channels as f64);
                let series = tape.reshape(averaged, rows, thresholds)?;
                mlp.forward(tape, b, series)
            }
            Projection::DeepSets { inner, outer } => {
                let curves = tape.reshape(ect, rows * n_dirs, thresholds)?;
                let h = inner.forward(tape, b, curves)?;
                let seg: Rc<[usize]> = (0..rows * n_dirs).map(|r| r / n_dirs).collect();
                let pooled = tape.segment_sum(h, seg, rows)?;
                outer.forward(tape, b, pooled)
            }
            Projection::Attention {
                with_directions,
                embed,
                block,
                head,
            } => {
                let curves = tape.reshape(ect, rows * n_dirs, thresholds)?;
                let tokens = if *with_directions {
                    let tile: Rc<[usize]> = (0..rows * n_dirs).map(|r| r % n_dirs).collect();
                    let tiled = tape.gather_rows(directions, tile)?;
                    tape.concat_cols(&[curves, tiled])?
                } else {
                    curves
                };
                let h = embed.forward(tape, b, tokens)?;
                let offsets: Rc<[usize]> = (0..=rows).map(|r| r * n_dirs).collect();
                let h = block.forward(tape, b, h, offsets)?;
                let seg: Rc<[usize]> = (0..rows * n_dirs).map(|r| r / n_dirs).collect();
                let pooled = tape.segment_sum(h, seg, rows)?;
                head.forward(tape, b, pooled)
            }
        }
    }
}

/// Patches for a zero-padded ("same") convolution along the threshold axis:
/// `(B |T|) x (|Θ| size)`, columns ordered (direction, tap).
fn im2col(
    tape: &mut Tape,
    ect: Var,
    rows: usize,
    n_dirs: usize,
    thresholds: usize,
    size: usize,
) -> Result<Var> {
    let half = size / 2;
    let cols = n_dirs * size;
    let mut index = Vec::with_capacity(rows * thresholds * cols);
    for b in 0..rows {
        for t in 0..thresholds {
            for c in 0..n_dirs {
                for s in 0..size {
                    let pos = (t + s).checked_sub(half).filter(|&p| p < thresholds);
                    index.push(pos.map(|p| b * n_dirs * thresholds + c * thresholds + p));
                }
            }
        }
    }
    tape.gather(ect, index.into(), rows * thresholds, cols)
}

/// A LEAP encoder bound to parameters in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct LeapEncoder {
    pub config: LeapConfig,
    pub feature_dim: usize,
    pub directions: ParamId,
    pub projections: Vec<Projection>,
    thresholds: ThresholdGrid,
}

pub const LEAP_PREFIX: &str = "leap";

impl LeapEncoder {
    pub fn new(
        config: LeapConfig,
        feature_dim: usize,
        store: &mut ParamStore,
        init: &mut Init,
    ) -> Result<Self> {
        config.validate()?;
        let dirs = sample_directions(feature_dim, config.directions, config.seed)?;
        let directions = store.add(
            format!("{LEAP_PREFIX}.directions"),
            dirs.as_matrix().clone(),
            config.learn_directions,
        );
        let thresholds = ThresholdGrid::default_with(config.thresholds)?;
        let projections = config
            .hops
            .iter()
            .enumerate()
            .map(|(level, _)| {
                Projection::new(
                    config.projection,
                    store,
                    init,
                    &format!("{LEAP_PREFIX}.proj{level}"),
                    config.directions,
                    config.thresholds,
                    feature_dim,
                    config.level_dim(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            feature_dim,
            directions,
            projections,
            thresholds,
        })
    }

    pub fn thresholds(&self) -> &ThresholdGrid {
        &self.thresholds
    }

    /// One neighborhood index per hop level.
    pub fn neighborhoods(&self, g: &FeaturedGraph) -> Result<Vec<NeighborhoodBatch>> {
        self.config
            .hops
            .iter()
            .map(|&h| NeighborhoodBatch::for_graph(g, h))
            .collect()
    }

    /// Smoothed local transforms for every center, one `centers x (|Θ||T|)`
    /// node per hop level.
    pub fn local_ects(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        features: Var,
        neighborhoods: &[NeighborhoodBatch],
    ) -> Result<Vec<Var>> {
        let thresholds = self.thresholds.shared();
        neighborhoods
            .iter()
            .map(|nb| {
                local_smooth_ect_on_tape(
                    tape,
                    features,
                    nb,
                    b.var(self.directions),
                    &thresholds,
                    self.config.sharpness,
                )
            })
            .collect()
    }

    /// `N x k` encodings for the nodes of `features`, given one neighborhood
    /// index per hop level.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        features: Var,
        neighborhoods: &[NeighborhoodBatch],
    ) -> Result<Var> {
        if neighborhoods.len() != self.projections.len() {
            return Err(Error::DimensionMismatch {
                expected: self.projections.len(),
                got: neighborhoods.len(),
                context: "hop levels",
            });
        }
        let ects = self.local_ects(tape, b, features, neighborhoods)?;
        let mut parts = Vec::with_capacity(ects.len());
        for (proj, ect) in self.projections.iter().zip(ects) {
            parts.push(proj.forward(tape, b, ect, b.var(self.directions), self.config.thresholds)?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat_cols(&parts)
        }
    }

    /// Encodings of every node of `g`, without gradients.
    pub fn encode(&self, store: &ParamStore, g: &FeaturedGraph) -> Result<DenseMatrix> {
        if g.feature_dim() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: g.feature_dim(),
                context: "feature dimension",
            });
        }
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = tape.constant(g.features().clone());
        let nbs = self.neighborhoods(g)?;
        let pe = self.encode_on_tape(&mut tape, &b, x, &nbs)?;
        Ok(tape.value(pe).clone())
    }

    /// Puts trainable directions back on the unit sphere.
    pub fn renormalize(&self, store: &mut ParamStore, seed: u64) {
        let p = store.get_mut(self.directions);
        if p.trainable {
            renormalize_directions(&mut p.value, seed);
        }
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        store.count_with_prefix(LEAP_PREFIX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(kind: ProjectionKind, dirs: usize, thr: usize) -> (ParamStore, Projection) {
        let mut store = ParamStore::new();
        let mut init = Init::new(3);
        let p = Projection::new(kind, &mut store, &mut init, "p", dirs, thr, 2, 10).unwrap();
        (store, p)
    }

    fn run(store: &ParamStore, p: &Projection, ect: &DenseMatrix, dirs: &DenseMatrix, thr: usize) -> DenseMatrix {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let e = tape.constant(ect.clone());
        let d = tape.constant(dirs.clone());
        let y = p.forward(&mut tape, &b, e, d, thr).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn config_validation() {
        assert!(LeapConfig::default().validate().is_ok());
        let bad = LeapConfig {
            hops: vec![1, 2],
            dim: 5,
            ..LeapConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(LeapConfig { dim: 0, ..LeapConfig::default() }.validate().is_err());
        assert!(LeapConfig { hops: vec![0], ..LeapConfig::default() }.validate().is_err());
    }

    #[test]
    fn projection_kind_parsing() {
        for k in ProjectionKind::ALL {
            assert_eq!(k.as_str().parse::<ProjectionKind>().unwrap(), k);
        }
        assert!("nope".parse::<ProjectionKind>().is_err());
    }

    #[test]
    fn linear_projection_zero_and_identity() {
        let (mut store, p) = store_with(ProjectionKind::Linear, 2, 3);
        let Projection::Linear { weight } = p.clone() else { unreachable!() };
        let ect = DenseMatrix::from_vec(1, 6, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let dirs = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();

        store.get_mut(weight).value = DenseMatrix::zeros(10, 6);
        assert_eq!(run(&store, &p, &ect, &dirs, 3).as_slice(), &[0.0; 10]);

        let mut store = ParamStore::new();
        let weight = store.add("w", DenseMatrix::identity(6), true);
        let p = Projection::Linear { weight };
        assert_eq!(run(&store, &p, &ect, &dirs, 3).as_slice(), ect.as_slice());
        // Swapping the direction rows changes the output.
        let swapped = DenseMatrix::from_vec(1, 6, vec![4.0, 5.0, 6.0, 1.0, 2.0, 3.0]).unwrap();
        assert_ne!(run(&store, &p, &swapped, &dirs, 3), run(&store, &p, &ect, &dirs, 3));
    }

    #[test]
    fn conv_centered_tap_averages_rows() {
        let mut store = ParamStore::new();
        let mut init = Init::new(0);
        let p = Projection::conv1d(&mut store, &mut init, "c", 2, 4, 3, &[3], 1).unwrap();
        let Projection::Conv1d { kernels, mlp } = &p else { unreachable!() };
        // Weight rows are (direction, tap); tap 1 is the center.
        let w = DenseMatrix::from_vec(6, 1, vec![0.0, 0.5, 0.0, 0.0, 0.5, 0.0]).unwrap();
        store.get_mut(kernels[0].weight).value = w;
        let ect = DenseMatrix::from_vec(1, 8, vec![1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0]).unwrap();
        let dirs = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let got = run(&store, &p, &ect, &dirs, 4);

        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let avg = tape.constant(DenseMatrix::from_vec(1, 4, vec![2.0, 2.0, 2.0, 2.0]).unwrap());
        let expect = mlp.forward(&mut tape, &b, avg).unwrap();
        for (a, e) in got.as_slice().iter().zip(tape.value(expect).as_slice()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_rejects_wide_kernel() {
        let mut store = ParamStore::new();
        let mut init = Init::new(0);
        assert!(Projection::conv1d(&mut store, &mut init, "c", 2, 4, 3, &[5], 1).is_err());
    }

    #[test]
    fn zero_transform_gives_bias_path_output() {
        for kind in [ProjectionKind::Conv1d, ProjectionKind::DeepSets] {
            let (store, p) = store_with(kind, 4, 8);
            let dirs = crate::ect::sample_directions(2, 4, 0).unwrap();
            let a = run(&store, &p, &DenseMatrix::zeros(2, 32), dirs.as_matrix(), 8);
            assert_eq!(a.row(0), a.row(1));
            assert!(a.is_finite());
        }
    }

    #[test]
    fn deepsets_single_direction() {
        let (store, p) = store_with(ProjectionKind::DeepSets, 1, 4);
        let Projection::DeepSets { inner, outer } = &p else { unreachable!() };
        let ect = DenseMatrix::from_vec(1, 4, vec![0.5, 1.0, -1.0, 2.0]).unwrap();
        let dirs = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let got = run(&store, &p, &ect, &dirs, 4);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = tape.constant(ect.clone());
        let h = inner.forward(&mut tape, &b, x).unwrap();
        let y = outer.forward(&mut tape, &b, h).unwrap();
        assert_eq!(tape.value(y), &got);
    }

    #[test]
    fn parameter_budgets() {
        for kind in ProjectionKind::ALL {
            let (store, _) = store_with(kind, 16, 16);
            let n = store.trainable_count();
            assert!((1000..=5000).contains(&n), "{kind}: {n} parameters");
        }
    }
}
