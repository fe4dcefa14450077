//! Feature extractor and bias-free prototype classifier.
//!
//! The extractor is a stack of affine layers with optional ReLU; the
//! classifier is a `K × feat_dim` matrix whose rows double as class
//! prototypes. Logits are plain dot products `z · Cᵀ`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{argmax, value_and_grad, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::scenario::{FeatureMatrix, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in × out`.
    pub weight: Tensor,
    /// Length `out`.
    pub bias: Tensor,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
    /// `K × feat_dim`, bias-free.
    pub classifier: Tensor,
}

/// Tape handles for every parameter of a [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub layers: Vec<(Var, Var)>,
    pub classifier: Var,
}

impl ParamVars {
    /// Flat list in [`ModelParams::tensors`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.layers.iter().flat_map(|&(w, b)| [w, b]).collect();
        v.push(self.classifier);
        v
    }
}

impl ModelParams {
    /// One hidden ReLU layer followed by a linear projection to the feature
    /// space, He-initialized.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        feat_dim: usize,
        classes: usize,
        rng: &mut Rng,
    ) -> Self {
        let gauss = |rng: &mut Rng, rows: usize, cols: usize, std: f64| {
            Tensor::matrix(rows, cols, rng.normal_vec(rows * cols, std)).expect("sized")
        };
        let w1 = gauss(rng, input_dim, hidden_dim, libm::sqrt(2.0 / input_dim as f64));
        let w2 = gauss(rng, hidden_dim, feat_dim, libm::sqrt(1.0 / hidden_dim as f64));
        let c = gauss(rng, classes, feat_dim, libm::sqrt(1.0 / feat_dim as f64));
        Self {
            layers: alloc::vec![
                Layer {
                    weight: w1,
                    bias: Tensor::zeros(&[hidden_dim]),
                    relu: true,
                },
                Layer {
                    weight: w2,
                    bias: Tensor::zeros(&[feat_dim]),
                    relu: false,
                },
            ],
            classifier: c,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map_or(self.classifier.cols(), |l| l.weight.rows())
    }

    pub fn feat_dim(&self) -> usize {
        self.classifier.cols()
    }

    pub fn classes(&self) -> usize {
        self.classifier.rows()
    }

    /// Parameters in a fixed order: `w₁, b₁, …, wₗ, bₗ, C`.
    pub fn tensors(&self) -> Vec<Tensor> {
        let mut v: Vec<Tensor> = self
            .layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect();
        v.push(self.classifier.clone());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.layers {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v.push(&mut self.classifier);
        v
    }

    /// Rebuilds a model with the same architecture from flat tensors.
    pub fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::dim("parameter count mismatch"));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::dim("parameter shape mismatch"));
            }
            *slot = t.clone();
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(Tensor::is_finite)
    }

    pub fn check(&self) -> Result<()> {
        let mut prev = None;
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weight.cols() {
                return Err(Error::dim(alloc::format!("layer {i} bias length")));
            }
            if let Some(p) = prev {
                if l.weight.rows() != p {
                    return Err(Error::dim(alloc::format!("layer {i} input width")));
                }
            }
            prev = Some(l.weight.cols());
        }
        if let Some(p) = prev {
            if p != self.classifier.cols() {
                return Err(Error::dim("classifier width differs from feature width"));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite {
                component: "model parameters".into(),
            });
        }
        Ok(())
    }

    /// Registers every parameter on `tape`. Trainable leaves.
    pub fn to_tape(&self, tape: &mut Tape) -> Result<ParamVars> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let w = tape.param(l.weight.clone())?;
            let b = tape.param(l.bias.clone())?;
            layers.push((w, b));
        }
        let classifier = tape.param(self.classifier.clone())?;
        Ok(ParamVars { layers, classifier })
    }

    /// Feature forward pass on the tape.
    pub fn tape_features(&self, tape: &mut Tape, vars: &ParamVars, input: Var) -> Result<Var> {
        let mut h = input;
        for (l, &(w, b)) in self.layers.iter().zip(&vars.layers) {
            let lin = tape.matmul(h, w)?;
            h = tape.add_row(lin, b)?;
            if l.relu {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Classifier logits `z · Cᵀ` on the tape.
    pub fn tape_logits(tape: &mut Tape, vars: &ParamVars, features: Var) -> Result<Var> {
        let ct = tape.transpose(vars.classifier)?;
        tape.matmul(features, ct)
    }

    pub fn logits(&self, inputs: &Tensor) -> Result<Tensor> {
        extract_features(self, inputs)?.matmul_t(&self.classifier)
    }
}

pub fn extract_features(params: &ModelParams, inputs: &Tensor) -> Result<Tensor> {
    let x = inputs.as_matrix();
    if x.cols() != params.input_dim() {
        return Err(Error::dim(alloc::format!(
            "inputs have dim {}, extractor expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let mut h = x;
    for l in &params.layers {
        let mut next = h.matmul(&l.weight)?;
        for r in 0..next.rows() {
            for (v, &b) in next.row_mut(r).iter_mut().zip(l.bias.data()) {
                *v += b;
                if l.relu && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        h = next;
    }
    Ok(h)
}

/// Row-wise softmax of classifier logits (`n × K`).
pub fn predict(params: &ModelParams, inputs: &Tensor) -> Result<Tensor> {
    let mut z = params.logits(inputs)?;
    for r in 0..z.rows() {
        let p = crate::numerics::softmax(z.row(r))?;
        z.row_mut(r).copy_from_slice(&p);
    }
    Ok(z)
}

/// Argmax over all `K` classes.
pub fn predict_labels(params: &ModelParams, inputs: &Tensor) -> Result<Vec<usize>> {
    let z = params.logits(inputs)?;
    Ok(z.row_iter().map(argmax).collect())
}

pub fn accuracy(params: &ModelParams, data: &FeatureMatrix) -> Result<f64> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::dim("accuracy needs labels"))?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let pred = predict_labels(params, data.values())?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Per-class mean feature (`K × feat_dim`).
pub fn compute_source_centroids(
    params: &ModelParams,
    data: &FeatureMatrix,
    classes: usize,
) -> Result<Tensor> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::dim("centroids need labeled data"))?;
    let feats = extract_features(params, data.values())?;
    let d = feats.cols();
    let mut sums = Tensor::zeros(&[classes, d]);
    let mut counts = alloc::vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::dim(alloc::format!("label {l} out of range")));
        }
        counts[l] += 1;
        for (s, &f) in sums.row_mut(l).iter_mut().zip(feats.row(i)) {
            *s += f;
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyClass { class: k });
        }
        for s in sums.row_mut(k) {
            *s /= c as f64;
        }
    }
    Ok(sums)
}

/// Frozen source model plus its per-class feature centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSnapshot {
    params: ModelParams,
    centroids: Tensor,
}

impl SourceSnapshot {
    pub fn new(params: ModelParams, centroids: Tensor) -> Result<Self> {
        params.check()?;
        if centroids.rows() != params.classes() || centroids.cols() != params.feat_dim() {
            return Err(Error::dim("centroid matrix does not match the classifier"));
        }
        Ok(Self { params, centroids })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn centroids(&self) -> &Tensor {
        &self.centroids
    }

    /// Rounds parameters and centroids to single precision, matching a
    /// checkpoint round trip.
    pub fn quantize_f32(&mut self) {
        for t in self.params.tensors_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        for v in self.centroids.data_mut() {
            *v = *v as f32 as f64;
        }
    }
}

/// Deep copy of the source parameters to seed the target model.
pub fn clone_to_target(snapshot: &SourceSnapshot) -> ModelParams {
    snapshot.params.clone()
}

/// SGD with momentum and L2 weight decay (`g ← g + λθ; v ← m·v + g; θ ← θ − η·v`).
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Updates `params` in place. `frozen_rows[p]`, when given, lists rows
    /// of parameter `p` that must stay bitwise unchanged.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        frozen_rows: &[Option<&[bool]>],
    ) {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        for (i, p) in params.iter_mut().enumerate() {
            let cols = p.cols().max(1);
            let frozen = frozen_rows.get(i).copied().flatten();
            let v = self.velocity[i].data_mut();
            let g = grads[i].data();
            for (j, theta) in p.data_mut().iter_mut().enumerate() {
                if frozen.is_some_and(|f| f[j / cols]) {
                    continue;
                }
                let gj = g[j] + self.weight_decay * *theta;
                v[j] = self.momentum * v[j] + gj;
                *theta -= self.lr * v[j];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub hidden_dim: usize,
    pub feat_dim: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub min_source_acc: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            feat_dim: 32,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-6,
            batch_size: 32,
            max_epochs: 50,
            min_source_acc: 0.99,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::config("pretrain.hidden_dim", "must be at least 1"));
        }
        if self.feat_dim == 0 {
            return Err(Error::config("pretrain.feat_dim", "must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("pretrain.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("pretrain.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("pretrain.weight_decay", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("pretrain.batch_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_source_acc) {
            return Err(Error::config("pretrain.min_source_acc", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Mean cross-entropy of `labels` under the model, on a tape.
pub(crate) fn tape_cross_entropy(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    classes: usize,
) -> Result<Var> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::dim(alloc::format!("label {l} out of range")));
        }
        t.set(i, l, 1.0);
    }
    tape.softmax_cross_entropy(logits, t, None)
}

/// Supervised training of a fresh model on labeled data until held-out
/// accuracy reaches `cfg.min_source_acc`.
pub fn train_supervised(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    classes: usize,
    cfg: &PretrainConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    let labels = train
        .labels()
        .ok_or_else(|| Error::dim("pretraining needs labeled data"))?;
    let mut rng = Rng::new(cfg.seed);
    let mut model = ModelParams::init(train.dim(), cfg.hidden_dim, cfg.feat_dim, classes, &mut rng);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut best = accuracy(&model, test)?;
    if best >= cfg.min_source_acc && cfg.max_epochs > 0 {
        return Ok(model);
    }
    let mut order: Vec<usize> = (0..train.rows()).collect();
    for _epoch in 0..cfg.max_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let x = train.values().select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (_, grads) = value_and_grad(&model.tensors(), |tape, p| {
                let vars = split_vars(&model, p);
                let input = tape.constant(x.clone())?;
                let z = model.tape_features(tape, &vars, input)?;
                let logits = ModelParams::tape_logits(tape, &vars, z)?;
                tape_cross_entropy(tape, logits, &y, classes)
            })?;
            let mut slots = model.tensors_mut();
            opt.step(&mut slots, &grads, &[]);
        }
        model.check()?;
        let acc = accuracy(&model, test)?;
        best = best.max(acc);
        if acc >= cfg.min_source_acc {
            return Ok(model);
        }
    }
    Err(Error::PretrainFailure {
        best_accuracy: best,
        epochs: cfg.max_epochs,
    })
}

/// Maps a flat parameter var list back to the model layout.
pub(crate) fn split_vars(model: &ModelParams, vars: &[Var]) -> ParamVars {
    let n = model.layers.len();
    ParamVars {
        layers: (0..n).map(|i| (vars[2 * i], vars[2 * i + 1])).collect(),
        classifier: vars[2 * n],
    }
}

/// Trains the source model on the scenario's labeled source data and
/// freezes it together with its class centroids.
pub fn pretrain_source(scenario: &Scenario, cfg: &PretrainConfig) -> Result<SourceSnapshot> {
    let model = train_supervised(
        &scenario.source_train,
        &scenario.source_test,
        scenario.classes,
        cfg,
    )?;
    let centroids = compute_source_centroids(&model, &scenario.source_train, scenario.classes)?;
    SourceSnapshot::new(model, centroids)
}
