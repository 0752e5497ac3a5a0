//! The outer training loop: forward pass, periodic closed-form refresh of the
//! decision layer, backpropagation through the embedding gradient, Adam.
//! Plus evaluation, repeated-seed statistics, the ablation suite and artifact
//! export.
//!
//! One epoch is: gradient step on `||H U − Y||_F²` with the decision state
//! held fixed, then a fresh forward pass; every `refresh_interval` epochs
//! (and once before training) the decision layer is re-solved in closed form
//! on the current embedding. Early stopping tracks validation accuracy with
//! the configured patience and restores the best snapshot.

use std::fs;
use std::path::Path;
use std::time::Instant;

use manigraph_core::decision::{self, argmax_rows, DecisionSolution, SolveOptions};
use manigraph_core::graph::{partition_laplacian, permuted, LaplacianBlocks};
use manigraph_core::nalgebra::DMatrix;
use manigraph_core::net::{adam_step, AdamState, Features, Gcn};
use manigraph_core::sparse::SparseMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{row_normalize, Dataset, Split};
use crate::{Error, Result};

/// Decision-layer variant, matching the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Orthonormal projection + label smoothness (the full model).
    Full,
    /// Orthonormal projection only (λ pinned to 0, same code path).
    OmOnly,
    /// Softmax-trained network, prediction by harmonic label propagation.
    LpOnly,
    /// Plain GCN with a softmax decision layer and cross-entropy.
    Softmax,
}

impl Mode {
    pub fn uses_decision_layer(self) -> bool {
        matches!(self, Mode::Full | Mode::OmOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::OmOnly => "om_only",
            Mode::LpOnly => "lp_only",
            Mode::Softmax => "softmax",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "om_only" => Ok(Mode::OmOnly),
            "lp_only" => Ok(Mode::LpOnly),
            "softmax" => Ok(Mode::Softmax),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected full, om_only, lp_only or softmax)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden layer widths (the embedding layer is appended).
    pub hidden_dims: Vec<usize>,
    /// Embedding width d_m consumed by the decision layer.
    pub embed_dim: usize,
    /// Label-smoothness weight λ (multiplies the trace form).
    pub lambda: f64,
    pub dropout: f64,
    pub lr: f64,
    /// Optional L2 penalty on convolution weights (biases exempt).
    pub weight_decay: f64,
    /// Epochs between closed-form decision refreshes.
    pub refresh_interval: usize,
    pub max_epochs: usize,
    /// Relative objective tolerance of the inner alternation.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    /// Backprop only the labeled rows of the Frobenius term.
    pub labeled_only_loss: bool,
    /// Initialize soft labels with random simplex rows instead of uniform.
    pub random_label_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64],
            embed_dim: 64,
            lambda: 1.0,
            dropout: 0.5,
            lr: 0.01,
            weight_decay: 0.0,
            refresh_interval: 50,
            max_epochs: 500,
            inner_tol: 1e-4,
            inner_max_iter: 30,
            mode: Mode::Full,
            seed: 42,
            patience: 100,
            labeled_only_loss: false,
            random_label_init: false,
        }
    }
}

impl TrainConfig {
    /// Validates against the dataset's class count. Error messages name the
    /// offending field.
    pub fn validate(&self, c: usize) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.refresh_interval == 0 {
            return Err(Error::Config("refresh must be >= 1".into()));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        if self.mode.uses_decision_layer() && self.embed_dim < c {
            return Err(Error::Config(format!(
                "embed_dim {} must be >= the class count {c} for mode {}",
                self.embed_dim,
                self.mode.as_str()
            )));
        }
        if self.inner_tol <= 0.0 || self.inner_max_iter == 0 {
            return Err(Error::Config("inner_tol and inner_max_iter must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        Ok(())
    }

    fn effective_lambda(&self) -> f64 {
        match self.mode {
            Mode::Full => self.lambda,
            _ => 0.0,
        }
    }

    fn dims(&self, d_in: usize, c: usize) -> Vec<usize> {
        let out = if self.mode.uses_decision_layer() { self.embed_dim } else { c };
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(d_in);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(out);
        dims
    }
}

/// One convergence-trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub objective: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    /// Rows for epochs `0..=epochs_run` (initial state plus one per update).
    pub rows: Vec<EpochRow>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub wall_time_s: f64,
}

impl RunResult {
    pub fn objective_trace(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.iter().map(|r| (r.epoch, r.objective))
    }
}

/// Everything a finished run leaves behind.
pub struct TrainOutcome {
    pub result: RunResult,
    pub model: Gcn,
    pub decision: Option<DecisionSolution>,
    /// Final inference-mode embedding, original node order.
    pub embedding: DMatrix<f64>,
    /// Per-node prediction: labeled nodes keep their true class.
    pub predictions: Vec<usize>,
    pub seed: u64,
}

/// Score container for [`evaluate_accuracy`].
pub enum Scores<'a> {
    /// One score row per node, original node order (softmax logits).
    PerNode(&'a DMatrix<f64>),
    /// Unlabeled-block scores in labeled-first order, with the permutation
    /// and labeled count that map original indices into the block.
    Unlabeled {
        y_u: &'a DMatrix<f64>,
        perm: &'a [usize],
        l: usize,
    },
}

/// Fraction of `index_set` whose row-argmax equals the true class; argmax
/// ties break to the lowest class index.
pub fn evaluate_accuracy(scores: Scores<'_>, labels: &[usize], index_set: &[usize]) -> Result<f64> {
    if index_set.is_empty() {
        return Err(Error::Split("cannot evaluate an empty index set".into()));
    }
    let mut hits = 0usize;
    for &node in index_set {
        if node >= labels.len() {
            return Err(Error::Split(format!("index {node} out of range")));
        }
        let row = match &scores {
            Scores::PerNode(m) => m.row(node),
            Scores::Unlabeled { y_u, perm, l } => {
                let p = perm[node];
                if p < *l {
                    return Err(Error::Split(format!("node {node} is labeled, not in the unlabeled block")));
                }
                y_u.row(p - l)
            }
        };
        let mut best = 0usize;
        let mut best_v = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        if best == labels[node] {
            hits += 1;
        }
    }
    Ok(hits as f64 / index_set.len() as f64)
}

struct Prepared {
    features: Features,
    kernel: SparseMatrix,
    blocks: LaplacianBlocks,
    /// Full Laplacian permuted to labeled-first order.
    lap_p: SparseMatrix,
    y_l: DMatrix<f64>,
    c: usize,
}

fn prepare(dataset: &Dataset, split: &Split) -> Result<Prepared> {
    dataset.validate()?;
    split.validate(dataset.n())?;

    let mut feats = dataset.features.clone();
    row_normalize(&mut feats);
    let nnz = feats.iter().filter(|v| **v != 0.0).count();
    let density = nnz as f64 / (feats.nrows() * feats.ncols()).max(1) as f64;
    let features = if density < 0.25 {
        let trips = (0..feats.nrows()).flat_map(|i| {
            let feats = &feats;
            (0..feats.ncols()).filter_map(move |j| {
                let v = feats[(i, j)];
                (v != 0.0).then_some((i, j, v))
            })
        });
        Features::Sparse(SparseMatrix::from_triplets(feats.nrows(), feats.ncols(), trips)?)
    } else {
        Features::Dense(feats)
    };

    let kernel = dataset.graph.normalized_kernel();
    let lap = dataset.graph.laplacian();
    let blocks = partition_laplacian(&lap, &split.train)?;
    let lap_p = permuted(&lap, &blocks.perm)?;
    let c = dataset.c();
    let train_classes: Vec<usize> = {
        let mut sorted = split.train.clone();
        sorted.sort_unstable();
        sorted.iter().map(|&i| dataset.labels[i]).collect()
    };
    let y_l = decision::one_hot(&train_classes, c)?;

    Ok(Prepared {
        features,
        kernel,
        blocks,
        lap_p,
        y_l,
        c,
    })
}

fn permute_rows(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (orig, &new) in perm.iter().enumerate() {
        out.row_mut(new).copy_from(&m.row(orig));
    }
    out
}

fn unpermute_rows(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (orig, &new) in perm.iter().enumerate() {
        out.row_mut(orig).copy_from(&m.row(new));
    }
    out
}

/// Numerically stable row softmax.
fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy over the labeled rows.
fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize], labeled: &[usize]) -> f64 {
    let mut loss = 0.0;
    for &i in labeled {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += logsum - logits[(i, labels[i])];
    }
    loss / labeled.len() as f64
}

fn softmax_gradient(logits: &DMatrix<f64>, labels: &[usize], labeled: &[usize]) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(logits.nrows(), logits.ncols());
    let scale = 1.0 / labeled.len() as f64;
    let probs = softmax_rows(logits);
    for &i in labeled {
        for j in 0..logits.ncols() {
            grad[(i, j)] = (probs[(i, j)] - if j == labels[i] { 1.0 } else { 0.0 }) * scale;
        }
    }
    grad
}

/// Trains one model per the configuration. See the module docs for the epoch
/// structure; returns the run statistics together with the trained model,
/// its final decision state and the final embedding.
pub fn train_once(cfg: &TrainConfig, dataset: &Dataset, split: &Split) -> Result<TrainOutcome> {
    let started = Instant::now();
    cfg.validate(dataset.c())?;
    let prep = prepare(dataset, split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let dims = cfg.dims(prep.features.n_cols(), prep.c);
    let mut model = Gcn::new(&dims, &mut rng)?;
    let mut adam = AdamState::new(&model);
    let lambda = cfg.effective_lambda();
    let solve_opts = SolveOptions {
        lambda,
        tol: cfg.inner_tol,
        max_iter: cfg.inner_max_iter,
        random_label_init: cfg.random_label_init,
    };

    let labeled_sorted: Vec<usize> = {
        let mut s = split.train.clone();
        s.sort_unstable();
        s
    };
    let l = prep.blocks.l;
    let u = prep.blocks.u;

    // Decision state carried across refreshes (warm starts).
    let mut decision_state: Option<DecisionSolution> = None;

    let refresh = |state: Option<&DecisionSolution>,
                   h_p: &DMatrix<f64>,
                   rng: &mut ChaCha8Rng|
     -> Result<DecisionSolution> {
        let init = state.map(|s| (s.projection.clone(), s.labels.y_u.clone()));
        Ok(decision::solve(h_p, &prep.y_l, &prep.blocks, &prep.lap_p, solve_opts, init, rng)?)
    };

    // Inference-mode (clean) embedding; decision refreshes and evaluation
    // both use it, so dropout noise never leaks into the closed-form targets.
    let clean_embedding = |model: &Gcn| -> Result<DMatrix<f64>> {
        let mut no_rng = ChaCha8Rng::seed_from_u64(0);
        Ok(model.forward(&prep.kernel, &prep.features, 0.0, false, &mut no_rng)?.0)
    };

    // Evaluates the current model; for decision modes the soft labels are
    // re-solved from the inference embedding with the projector held fixed.
    let evaluate = |h: &DMatrix<f64>, state: Option<&DecisionSolution>| -> Result<(f64, f64)> {
        match state {
            Some(s) => {
                let h_p = permute_rows(h, &prep.blocks.perm);
                let h_u = h_p.view((l, 0), (u, h_p.ncols())).clone_owned();
                let y_u = decision::update_soft_labels(&h_u, &s.projection.u, &prep.blocks, &prep.y_l, lambda)?;
                let scores = Scores::Unlabeled { y_u: &y_u, perm: &prep.blocks.perm, l };
                let val = evaluate_accuracy(scores, &dataset.labels, &split.val)?;
                let scores = Scores::Unlabeled { y_u: &y_u, perm: &prep.blocks.perm, l };
                let test = evaluate_accuracy(scores, &dataset.labels, &split.test)?;
                Ok((val, test))
            }
            None => {
                let val = evaluate_accuracy(Scores::PerNode(h), &dataset.labels, &split.val)?;
                let test = evaluate_accuracy(Scores::PerNode(h), &dataset.labels, &split.test)?;
                Ok((val, test))
            }
        }
    };

    // Initial forward; for decision modes, solve the layer once up front.
    let (mut h_train, mut cache) = model.forward(&prep.kernel, &prep.features, cfg.dropout, true, &mut rng)?;
    let mut h_clean = clean_embedding(&model)?;
    if cfg.mode.uses_decision_layer() {
        let h_p = permute_rows(&h_clean, &prep.blocks.perm);
        decision_state = Some(refresh(None, &h_p, &mut rng)?);
    }

    let objective_of = |h_train: &DMatrix<f64>, state: Option<&DecisionSolution>| -> Result<f64> {
        match state {
            Some(s) => {
                let h_p = permute_rows(h_train, &prep.blocks.perm);
                Ok(decision::objective(&h_p, &s.projection.u, &s.labels, &prep.lap_p, lambda)?)
            }
            None => Ok(cross_entropy(h_train, &dataset.labels, &labeled_sorted)),
        }
    };

    let mut rows = Vec::with_capacity(cfg.max_epochs + 1);
    let (val0, test0) = evaluate(&h_clean, decision_state.as_ref())?;
    rows.push(EpochRow {
        epoch: 0,
        objective: objective_of(&h_train, decision_state.as_ref())?,
        val_acc: val0,
        test_acc: test0,
    });

    let mut best_epoch = 0usize;
    let mut best_val = val0;
    let mut best_snapshot = (model.clone(), decision_state.clone());

    let mut epoch = 0usize;
    while epoch < cfg.max_epochs {
        epoch += 1;

        // Gradient of the fixed-decision loss with respect to the embedding.
        let grad_h = match &decision_state {
            Some(state) => {
                let h_p = permute_rows(&h_train, &prep.blocks.perm);
                let y = state.labels.stacked();
                let mut residual = &h_p * &state.projection.u - &y;
                if cfg.labeled_only_loss {
                    residual.view_mut((l, 0), (u, residual.ncols())).fill(0.0);
                }
                let grad_p = residual * 2.0 * state.projection.u.transpose();
                unpermute_rows(&grad_p, &prep.blocks.perm)
            }
            None => softmax_gradient(&h_train, &dataset.labels, &labeled_sorted),
        };

        let (mut grads, _) = model.backward(&prep.kernel, &prep.features, &cache, &grad_h, false)?;
        if cfg.weight_decay > 0.0 {
            for (g, layer) in grads.iter_mut().zip(&model.layers) {
                g.w += &layer.w * cfg.weight_decay;
            }
        }
        adam_step(&mut model, &grads, &mut adam, cfg.lr)?;

        let fwd = model.forward(&prep.kernel, &prep.features, cfg.dropout, true, &mut rng)?;
        h_train = fwd.0;
        cache = fwd.1;
        h_clean = clean_embedding(&model)?;

        if cfg.mode.uses_decision_layer() && epoch % cfg.refresh_interval == 0 {
            let h_p = permute_rows(&h_clean, &prep.blocks.perm);
            decision_state = Some(refresh(decision_state.as_ref(), &h_p, &mut rng)?);
        }

        let (val, test) = evaluate(&h_clean, decision_state.as_ref())?;
        let objective = objective_of(&h_train, decision_state.as_ref())?;
        if !objective.is_finite() {
            return Err(Error::Core(manigraph_core::Error::NonFinite("training objective")));
        }
        rows.push(EpochRow {
            epoch,
            objective,
            val_acc: val,
            test_acc: test,
        });

        if val > best_val {
            best_val = val;
            best_epoch = epoch;
            best_snapshot = (model.clone(), decision_state.clone());
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    // Restore the best snapshot and produce the final prediction from a last
    // closed-form solve on the final model's embedding.
    let (final_model, mut final_decision) = best_snapshot;
    let mut no_rng = ChaCha8Rng::seed_from_u64(0);
    let (h_final, _) = final_model.forward(&prep.kernel, &prep.features, 0.0, false, &mut no_rng)?;

    let inv_perm = prep.blocks.inverse_perm();
    let mut predictions: Vec<usize> = dataset.labels.clone();
    let (val_accuracy, test_accuracy) = match cfg.mode {
        Mode::Full | Mode::OmOnly => {
            let h_p = permute_rows(&h_final, &prep.blocks.perm);
            let solution = refresh(final_decision.as_ref(), &h_p, &mut no_rng)?;
            let preds_u = argmax_rows(&solution.labels.y_u);
            for (block_idx, &pred) in preds_u.iter().enumerate() {
                predictions[inv_perm[l + block_idx]] = pred;
            }
            let scores = Scores::Unlabeled { y_u: &solution.labels.y_u, perm: &prep.blocks.perm, l };
            let val = evaluate_accuracy(scores, &dataset.labels, &split.val)?;
            let scores = Scores::Unlabeled { y_u: &solution.labels.y_u, perm: &prep.blocks.perm, l };
            let test = evaluate_accuracy(scores, &dataset.labels, &split.test)?;
            final_decision = Some(solution);
            (val, test)
        }
        Mode::Softmax => {
            let preds = argmax_rows(&h_final);
            for (node, &p) in preds.iter().enumerate() {
                if labeled_sorted.binary_search(&node).is_err() {
                    predictions[node] = p;
                }
            }
            let val = evaluate_accuracy(Scores::PerNode(&h_final), &dataset.labels, &split.val)?;
            let test = evaluate_accuracy(Scores::PerNode(&h_final), &dataset.labels, &split.test)?;
            (val, test)
        }
        Mode::LpOnly => {
            let y_u = decision::harmonic_propagation(&prep.blocks, &prep.y_l)?;
            let preds_u = argmax_rows(&y_u);
            for (block_idx, &pred) in preds_u.iter().enumerate() {
                predictions[inv_perm[l + block_idx]] = pred;
            }
            let scores = Scores::Unlabeled { y_u: &y_u, perm: &prep.blocks.perm, l };
            let val = evaluate_accuracy(scores, &dataset.labels, &split.val)?;
            let scores = Scores::Unlabeled { y_u: &y_u, perm: &prep.blocks.perm, l };
            let test = evaluate_accuracy(scores, &dataset.labels, &split.test)?;
            (val, test)
        }
    };

    Ok(TrainOutcome {
        result: RunResult {
            test_accuracy,
            val_accuracy,
            rows,
            epochs_run: epoch,
            best_epoch,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        model: final_model,
        decision: final_decision,
        embedding: h_final,
        predictions,
        seed: cfg.seed,
    })
}

/// Aggregate of `n_runs` trainings under the seed sequence `seed..seed+n`.
pub struct RepeatedOutcome {
    pub runs: Vec<TrainOutcome>,
    pub mean: f64,
    /// Population standard deviation of the test accuracies.
    pub std: f64,
    pub wall_time_s: f64,
}

/// Runs `n_runs` seeds (`cfg.seed + i`) and aggregates test accuracy.
/// `parallel` caps worker threads; results are identical regardless.
pub fn run_repeated(
    cfg: &TrainConfig,
    dataset: &Dataset,
    split: &Split,
    n_runs: usize,
    parallel: usize,
) -> Result<RepeatedOutcome> {
    if n_runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let started = Instant::now();
    let mut runs: Vec<Option<Result<TrainOutcome>>> = Vec::new();
    runs.resize_with(n_runs, || None);

    if parallel <= 1 {
        for (i, slot) in runs.iter_mut().enumerate() {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = cfg.seed + i as u64;
            *slot = Some(train_once(&run_cfg, dataset, split));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut runs);
        std::thread::scope(|scope| {
            for _ in 0..parallel.min(n_runs) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= n_runs {
                        break;
                    }
                    let mut run_cfg = cfg.clone();
                    run_cfg.seed = cfg.seed + i as u64;
                    let outcome = train_once(&run_cfg, dataset, split);
                    slots.lock().expect("no panics hold the lock")[i] = Some(outcome);
                });
            }
        });
    }

    let mut collected = Vec::with_capacity(n_runs);
    for slot in runs {
        collected.push(slot.expect("every index visited")?);
    }
    let accs: Vec<f64> = collected.iter().map(|r| r.result.test_accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
    Ok(RepeatedOutcome {
        runs: collected,
        mean,
        std: var.sqrt(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// One ablation table row.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub mode: String,
    pub mean: f64,
    pub std: f64,
}

/// Runs the four decision-layer variants under shared seeds.
pub fn ablation_suite(
    dataset: &Dataset,
    split: &Split,
    base: &TrainConfig,
    n_runs: usize,
    parallel: usize,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for mode in [Mode::Softmax, Mode::LpOnly, Mode::OmOnly, Mode::Full] {
        let mut cfg = base.clone();
        cfg.mode = mode;
        let rep = run_repeated(&cfg, dataset, split, n_runs, parallel)?;
        rows.push(AblationRow {
            mode: mode.as_str().to_string(),
            mean: rep.mean,
            std: rep.std,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct PerRun {
    seed: u64,
    test_accuracy: f64,
    val_accuracy: f64,
    epochs_run: usize,
    best_epoch: usize,
}

#[derive(Serialize)]
struct Metrics<'a> {
    dataset: &'a str,
    config: &'a TrainConfig,
    per_run: Vec<PerRun>,
    mean: f64,
    std: f64,
}

/// Writes `metrics.json` (deterministic content only) and `timing.json`
/// (wall-clock seconds) into `dir`.
pub fn export_metrics(
    dataset_name: &str,
    cfg: &TrainConfig,
    rep: &RepeatedOutcome,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = Metrics {
        dataset: dataset_name,
        config: cfg,
        per_run: rep
            .runs
            .iter()
            .map(|r| PerRun {
                seed: r.seed,
                test_accuracy: r.result.test_accuracy,
                val_accuracy: r.result.val_accuracy,
                epochs_run: r.result.epochs_run,
                best_epoch: r.result.best_epoch,
            })
            .collect(),
        mean: rep.mean,
        std: rep.std,
    };
    let mut text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    text.push('\n');
    let path = dir.join("metrics.json");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    #[derive(Serialize)]
    struct Timing {
        wall_time_s: f64,
        per_run_s: Vec<f64>,
    }
    let timing = Timing {
        wall_time_s: rep.wall_time_s,
        per_run_s: rep.runs.iter().map(|r| r.result.wall_time_s).collect(),
    };
    let mut text = serde_json::to_string_pretty(&timing).expect("timing serialize");
    text.push('\n');
    let path = dir.join("timing.json");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Writes `convergence.csv` (epoch, objective, val_acc, test_acc) and
/// `embeddings.tsv` (node id, embedding, true class, predicted class) for a
/// single run.
pub fn export_run_artifacts(outcome: &TrainOutcome, dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut csv = String::from("epoch,objective,val_acc,test_acc\n");
    for row in &outcome.result.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, row.objective, row.val_acc, row.test_acc
        ));
    }
    let path = dir.join("convergence.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;

    let mut tsv = String::new();
    for i in 0..dataset.n() {
        let id = match &dataset.names {
            Some(names) => names[i].clone(),
            None => i.to_string(),
        };
        tsv.push_str(&id);
        for j in 0..outcome.embedding.ncols() {
            tsv.push_str(&format!("\t{}", outcome.embedding[(i, j)]));
        }
        tsv.push_str(&format!("\t{}\t{}\n", dataset.labels[i], outcome.predictions[i]));
    }
    let path = dir.join("embeddings.tsv");
    fs::write(&path, tsv).map_err(|e| Error::io(&path, e))?;
    Ok(())
}
