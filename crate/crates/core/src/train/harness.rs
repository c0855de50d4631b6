use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, mse};
use super::metrics::{accuracy, auroc, r2};
use super::optim::Adam;
use super::split::{kfold_split, validation_split};
use crate::autodiff::{flatten_trainable_grads, Tape};
use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::{Batch, Model, ModelConfig, PreparedGraph, Task};

pub const METRICS_FORMAT: &str = "leap-metrics";
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

impl LossKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification { .. } => LossKind::CrossEntropy,
            Task::Regression { .. } => LossKind::Mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub folds: usize,
    /// Share of each training fold held out for early stopping.
    pub val_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            patience: 10,
            folds: 5,
            val_fraction: 0.1,
            stratified: true,
            seed: 0,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, task: Task) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch size and patience must be positive".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument("need at least 2 folds".into()));
        }
        if !(self.lr > 0.0 && self.eps > 0.0) {
            return Err(Error::InvalidArgument("learning rate and epsilon must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction <= 0.5) {
            return Err(Error::InvalidArgument("validation fraction must lie in (0, 0.5]".into()));
        }
        if self.loss != LossKind::for_task(task) {
            return Err(Error::InvalidArgument(format!(
                "loss {:?} does not fit the dataset task",
                self.loss
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub test_size: usize,
    pub accuracy: Option<f64>,
    pub auroc: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

/// JSON metrics report: configuration echo, per-fold results and summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub graphs: usize,
    pub seed: u64,
    pub pe: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub parameters: usize,
    pub stratified: bool,
    pub warning: Option<String>,
    pub folds: Vec<FoldResult>,
    pub test_loss: Option<Summary>,
    pub accuracy: Option<Summary>,
    pub auroc: Option<Summary>,
    pub r2: Option<Summary>,
    /// Fold whose model had the lowest validation loss.
    pub best_fold: usize,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters of the best-validation fold.
    pub best_model: Model,
}

/// Loss and metrics of `model` on the listed graphs.
pub fn evaluate(
    model: &Model,
    prepared: &[PreparedGraph],
    targets: &[Target],
    indices: &[usize],
) -> Result<(f64, Option<f64>, Option<f64>, Option<f64>)> {
    if indices.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let task = model.config.task;
    let out_dim = task.output_dim();
    let mut preds = DenseMatrix::zeros(indices.len(), out_dim);
    let mut row = 0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let parts: Vec<&PreparedGraph> = chunk.iter().map(|&i| &prepared[i]).collect();
        let out = model.predict(&Batch::new(&parts)?)?;
        for r in 0..out.rows() {
            preds.row_mut(row).copy_from_slice(out.row(r));
            row += 1;
        }
    }
    let mut tape = Tape::new();
    let p = tape.constant(preds.clone());
    match task {
        Task::Classification { .. } => {
            let labels = class_labels(targets, indices)?;
            let loss = cross_entropy(&mut tape, p, &labels)?;
            let loss = tape.item(loss);
            let argmax: Vec<usize> = (0..preds.rows())
                .map(|r| {
                    let row = preds.row(r);
                    (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
                })
                .collect();
            let acc = accuracy(&argmax, &labels)?;
            let roc = if out_dim == 2 {
                let probs = tape.softmax_rows(p);
                let scores: Vec<f64> = (0..preds.rows()).map(|r| tape.value(probs)[(r, 1)]).collect();
                let positive: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
                auroc(&scores, &positive).ok()
            } else {
                None
            };
            Ok((loss, Some(acc), roc, None))
        }
        Task::Regression { .. } => {
            let t = target_matrix(targets, indices, out_dim)?;
            let loss = mse(&mut tape, p, &t)?;
            Ok((tape.item(loss), None, None, Some(r2(&preds, &t)?)))
        }
    }
}

fn class_labels(targets: &[Target], indices: &[usize]) -> Result<Vec<usize>> {
    indices
        .iter()
        .map(|&i| match &targets[i] {
            Target::Class(c) => Ok(*c),
            Target::Values(_) => Err(Error::InvalidArgument("expected class targets".into())),
        })
        .collect()
}

fn target_matrix(targets: &[Target], indices: &[usize], dim: usize) -> Result<DenseMatrix> {
    let mut data = Vec::with_capacity(indices.len() * dim);
    for &i in indices {
        match &targets[i] {
            Target::Values(v) if v.len() == dim => data.extend_from_slice(v),
            _ => return Err(Error::InvalidArgument("expected regression targets".into())),
        }
    }
    DenseMatrix::from_vec(indices.len(), dim, data)
}

fn batch_loss(
    model: &Model,
    tape: &mut Tape,
    bindings: &crate::autodiff::Bindings,
    batch: &Batch,
    targets: &[Target],
    indices: &[usize],
) -> Result<crate::autodiff::Var> {
    let out = model.forward(tape, bindings, batch)?;
    match model.config.task {
        Task::Classification { .. } => cross_entropy(tape, out, &class_labels(targets, indices)?),
        Task::Regression { targets: d } => mse(tape, out, &target_matrix(targets, indices, d)?),
    }
}

fn fold_seed(seed: u64, fold: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((fold as u64) << 16)
        .wrapping_add(salt)
}

struct FoldRun {
    result: FoldResult,
    model: Model,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    prepared: &[PreparedGraph],
    targets: &[Target],
    labels: Option<&[usize]>,
    train_idx: &[usize],
    test_idx: &[usize],
    fold: usize,
) -> Result<FoldRun> {
    let mut model = Model::new(ModelConfig {
        seed: fold_seed(config.seed, fold, 1),
        ..config.clone()
    })?;
    let (train, val) = validation_split(
        train_idx,
        labels.filter(|_| train_cfg.stratified),
        train_cfg.val_fraction,
        fold_seed(train_cfg.seed, fold, 2),
    );
    if val.is_empty() || train.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "fold {fold} is too small to hold out a validation set"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fold_seed(train_cfg.seed, fold, 3));
    let mut adam = Adam::new(
        model.store.trainable_count(),
        train_cfg.lr,
        train_cfg.beta1,
        train_cfg.beta2,
        train_cfg.eps,
    );
    let mut order = train.clone();
    let mut best = (f64::INFINITY, 0usize, f64::NAN);
    let mut best_store = model.store.clone();
    let mut since_best = 0;
    let mut epochs_run = 0;

    for epoch in 1..=train_cfg.epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(train_cfg.batch_size) {
            let parts: Vec<&PreparedGraph> = chunk.iter().map(|&i| &prepared[i]).collect();
            let batch = Batch::new(&parts)?;
            let mut tape = Tape::new();
            let bindings = model.store.bind(&mut tape);
            let loss = batch_loss(&model, &mut tape, &bindings, &batch, targets, chunk)?;
            let value = tape.item(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { fold, epoch });
            }
            total += value * chunk.len() as f64;
            tape.backward(loss)?;
            let grads = model.store.gradients(&tape, &bindings);
            let flat_grads = flatten_trainable_grads(&model.store, &grads);
            let mut params = model.store.flat_trainable();
            adam.step(&mut params, &flat_grads);
            model.store.set_flat_trainable(&params)?;
            model.renormalize(train_cfg.seed);
        }
        let train_loss = total / train.len() as f64;
        let (val_loss, val_acc, _, _) = evaluate(&model, prepared, targets, &val)?;
        log::debug!(
            "fold {fold} epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {:?}",
            val_acc
        );
        if val_loss < best.0 {
            best = (val_loss, epoch, train_loss);
            best_store = model.store.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train_cfg.patience {
                break;
            }
        }
    }
    model.store = best_store;
    let (test_loss, accuracy, auroc, r2) = evaluate(&model, prepared, targets, test_idx)?;
    log::info!(
        "fold {fold}: best epoch {} of {epochs_run}, test loss {test_loss:.5}, accuracy {accuracy:?}",
        best.1
    );
    Ok(FoldRun {
        result: FoldResult {
            fold,
            best_epoch: best.1,
            epochs_run,
            train_loss: best.2,
            val_loss: best.0,
            test_loss,
            test_size: test_idx.len(),
            accuracy,
            auroc,
            r2,
        },
        model,
    })
}

/// K-fold cross-validation: every fold trains a fresh model with early
/// stopping on a held-out part of its training split and reports metrics on
/// its test split at the best-validation epoch.
pub fn train_eval(config: &ModelConfig, dataset: &Dataset, train_cfg: &TrainConfig) -> Result<TrainOutcome> {
    if config.task != dataset.task {
        return Err(Error::InvalidArgument("model task differs from dataset task".into()));
    }
    train_cfg.validate(dataset.task)?;
    let template = Model::new(config.clone())?;
    let prepared = template.prepare_all(&dataset.graphs)?;
    let labels = dataset.labels();
    let assignment = kfold_split(
        dataset.len(),
        labels.as_deref(),
        train_cfg.folds,
        train_cfg.seed,
        train_cfg.stratified,
    )?;
    let mut results = Vec::with_capacity(train_cfg.folds);
    let mut best: Option<(f64, usize, Model)> = None;
    for fold in 0..train_cfg.folds {
        let run = run_fold(
            config,
            train_cfg,
            &prepared,
            &dataset.targets,
            labels.as_deref(),
            &assignment.train_indices(fold),
            &assignment.test_indices(fold),
            fold,
        )?;
        if best.as_ref().is_none_or(|(v, _, _)| run.result.val_loss < *v) {
            best = Some((run.result.val_loss, fold, run.model));
        }
        results.push(run.result);
    }
    let collect = |f: fn(&FoldResult) -> Option<f64>| -> Option<Summary> {
        let values: Vec<f64> = results.iter().filter_map(f).collect();
        if values.len() == results.len() {
            Summary::of(&values)
        } else {
            None
        }
    };
    let test_loss = collect(|r| Some(r.test_loss));
    let accuracy = collect(|r| r.accuracy);
    let auroc = collect(|r| r.auroc);
    let r2 = collect(|r| r.r2);
    let (_, best_fold, best_model) = best.expect("at least two folds");
    let report = TrainReport {
        format: METRICS_FORMAT.into(),
        version: 1,
        dataset: dataset.name.clone(),
        graphs: dataset.len(),
        seed: train_cfg.seed,
        pe: config.pe.label(),
        model: config.clone(),
        train: train_cfg.clone(),
        parameters: template.param_count(),
        stratified: assignment.stratified,
        warning: assignment.warning,
        folds: results,
        test_loss,
        accuracy,
        auroc,
        r2,
        best_fold,
    };
    Ok(TrainOutcome { report, best_model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::nn::{Backbone, PeSpec};

    #[test]
    fn smoke_run_is_deterministic() {
        let ds = generate_synthetic(SyntheticSpec { count: 20, seed: 1 }).unwrap();
        let config = ModelConfig::standard(Backbone::Gcn, 2, ds.task, PeSpec::Rwpe { dim: 3 });
        let cfg = TrainConfig {
            epochs: 2,
            folds: 2,
            val_fraction: 0.2,
            ..TrainConfig::default()
        };
        let a = train_eval(&config, &ds, &cfg).unwrap();
        let b = train_eval(&config, &ds, &cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.best_model.store, b.best_model.store);
        let acc = a.report.accuracy.unwrap();
        assert!(acc.mean.is_finite() && (0.0..=1.0).contains(&acc.mean));
        for f in &a.report.folds {
            assert!(f.best_epoch <= f.epochs_run);
        }
    }

    #[test]
    fn rejects_mismatched_loss() {
        let cfg = TrainConfig {
            loss: LossKind::Mse,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(Task::Classification { classes: 2 }).is_err());
        assert!(TrainConfig::default().validate(Task::Classification { classes: 2 }).is_ok());
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(Summary::of(&[]).is_none());
    }
}
