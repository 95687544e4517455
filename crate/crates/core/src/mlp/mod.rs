//! Fully connected multi-layer perceptron: ReLU hidden layers, softmax
//! output, cross-entropy loss, mini-batch SGD.
//!
//! Weights of layer `l` are stored as an `(out, in)` matrix, so a batch of
//! row vectors `H` maps to `H W^T + b`.

pub mod gradcheck;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::signal::Dataset;
use crate::terrain::TerrainClass;
use crate::{Error, Result};

/// Lower clamp on the label probability inside the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Layer widths, input first. Hidden layers use ReLU, the last layer softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layer_sizes: Vec<usize>,
}

impl Default for MlpArchitecture {
    /// 200 inputs, five ReLU layers tapering from 256 to 16, 7 outputs.
    fn default() -> Self {
        Self {
            layer_sizes: vec![200, 256, 128, 64, 32, 16, 7],
        }
    }
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let arch = Self { layer_sizes };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Shape(format!(
                "an MLP needs at least input and output layers, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Shape(format!(
                "layer sizes must be >= 1, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `(out, in)`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub arch: MlpArchitecture,
    pub layers: Vec<DenseLayer>,
    pub init_seed: u64,
}

/// Pre-activations and activations of every layer for one batch.
struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`
    /// (softmax probabilities for the last one).
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl MlpModel {
    /// He-normal weights (variance `2 / fan_in`), zero biases.
    pub fn init(arch: MlpArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
                let weights =
                    Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(&mut rng));
                DenseLayer {
                    weights,
                    biases: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            arch,
            layers,
            init_seed: seed,
        })
    }

    pub fn zeros(arch: MlpArchitecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_sizes
            .windows(2)
            .map(|w| DenseLayer {
                weights: Array2::zeros((w[1], w[0])),
                biases: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            arch,
            layers,
            init_seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.layers.len() != self.arch.depth() {
            return Err(Error::Shape(format!(
                "{} layers for architecture {:?}",
                self.layers.len(),
                self.arch.layer_sizes
            )));
        }
        for (l, (layer, w)) in self
            .layers
            .iter()
            .zip(self.arch.layer_sizes.windows(2))
            .enumerate()
        {
            if layer.weights.dim() != (w[1], w[0]) || layer.biases.len() != w[1] {
                return Err(Error::Shape(format!(
                    "layer {l}: weights {:?}, biases {}, expected ({}, {})",
                    layer.weights.dim(),
                    layer.biases.len(),
                    w[1],
                    w[0]
                )));
            }
            let finite = layer
                .weights
                .iter()
                .chain(layer.biases.iter())
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!("layer {l} parameters")));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_width() {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.arch.input_width()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input".into()));
        }
        Ok(())
    }

    fn trace(&self, input: Array2<f64>) -> Result<Trace> {
        let depth = self.layers.len();
        let mut activations = Vec::with_capacity(depth + 1);
        let mut pre_activations = Vec::with_capacity(depth);
        activations.push(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = activations[l].dot(&layer.weights.t());
            z += &layer.biases;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {l} pre-activations")));
            }
            let a = if l + 1 == depth {
                let mut p = z.clone();
                for mut row in p.rows_mut() {
                    softmax_in_place(row.as_slice_mut().expect("standard layout"));
                }
                p
            } else {
                z.mapv(|v| v.max(0.0))
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            pre_activations,
        })
    }

    /// Output-layer pre-activations.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape");
        let t = self.trace(input)?;
        Ok(t.pre_activations
            .last()
            .expect("depth >= 1")
            .row(0)
            .to_vec())
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Predicted class for every row of `inputs`.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<usize>> {
        if inputs.ncols() != self.arch.input_width() {
            return Err(Error::Shape(format!(
                "inputs have {} columns, model expects {}",
                inputs.ncols(),
                self.arch.input_width()
            )));
        }
        let t = self.trace(inputs.to_owned())?;
        Ok(t.pre_activations
            .last()
            .expect("depth >= 1")
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("standard layout")))
            .collect())
    }

    /// ReLU on/off pattern of every hidden unit for input `x`.
    pub(crate) fn relu_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        self.check_input(x)?;
        let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape");
        let t = self.trace(input)?;
        let hidden = &t.pre_activations[..self.layers.len() - 1];
        Ok(hidden
            .iter()
            .flat_map(|z| z.iter().map(|&v| v > 0.0))
            .collect())
    }

    fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            layer.weights.scaled_add(-learning_rate, gw);
            layer.biases.scaled_add(-learning_rate, gb);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of one prediction: `-ln(max(p_label, 1e-12))`.
pub fn loss(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROBABILITY_FLOOR).ln()
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct BatchGradients {
    /// Mean gradient over the batch.
    pub gradients: Gradients,
    /// Loss of every sample, in batch order.
    pub losses: Vec<f64>,
}

impl BatchGradients {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }
}

/// Backpropagation for a batch of `(input, class index)` pairs.
pub fn gradients(model: &MlpModel, batch: &[(&[f64], usize)]) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let width = model.arch.input_width();
    let mut data = Vec::with_capacity(batch.len() * width);
    let mut labels = Vec::with_capacity(batch.len());
    for &(x, label) in batch {
        model.check_input(x)?;
        check_label(model, label)?;
        data.extend_from_slice(x);
        labels.push(label);
    }
    let inputs = Array2::from_shape_vec((batch.len(), width), data).expect("shape");
    backprop(model, inputs, &labels)
}

fn check_label(model: &MlpModel, label: usize) -> Result<()> {
    if label >= model.arch.n_classes() {
        return Err(Error::Shape(format!(
            "label {label} out of range for {} classes",
            model.arch.n_classes()
        )));
    }
    Ok(())
}

fn backprop(model: &MlpModel, inputs: Array2<f64>, labels: &[usize]) -> Result<BatchGradients> {
    let n = labels.len() as f64;
    let trace = model.trace(inputs)?;
    let depth = model.layers.len();
    let probs = &trace.activations[depth];
    let losses = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| loss(probs.row(r).as_slice().expect("standard layout"), y))
        .collect();

    // softmax + cross-entropy: dL/dz = p - onehot
    let mut delta = probs.clone();
    for (r, &y) in labels.iter().enumerate() {
        delta[[r, y]] -= 1.0;
    }
    delta /= n;

    let mut weights = vec![Array2::zeros((0, 0)); depth];
    let mut biases = vec![Array1::zeros(0); depth];
    for l in (0..depth).rev() {
        weights[l] = delta.t().dot(&trace.activations[l]);
        biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut upstream = delta.dot(&model.layers[l].weights);
            Zip::from(&mut upstream)
                .and(&trace.pre_activations[l - 1])
                .for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = upstream;
        }
    }
    if weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("weight gradients".into()));
    }
    Ok(BatchGradients {
        gradients: Gradients { weights, biases },
        losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 300,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > n_samples {
            return Err(Error::Config(format!(
                "batch size must lie in [1, {n_samples}], got {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean per-sample training loss of each epoch, each sample's loss taken
    /// at the moment its mini-batch was processed.
    pub loss_history: Vec<f64>,
    /// Mean loss of the untrained model over the training set.
    pub initial_loss: f64,
}

/// Mini-batch SGD with a seeded shuffle at the start of every epoch.
pub fn train(
    model: MlpModel,
    samples: &[(&[f64], usize)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    cfg.validate(samples.len())?;
    model.validate()?;
    let mut model = model;
    let initial_loss = gradients(&model, samples)?.mean_loss();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut per_sample = vec![0.0; samples.len()];
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            let g = match gradients(&model, &batch) {
                Ok(g) => g,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Divergence {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            for (&i, &l) in chunk.iter().zip(&g.losses) {
                per_sample[i] = l;
            }
            model.apply(&g.gradients, cfg.learning_rate);
        }
        let epoch_loss = per_sample.iter().sum::<f64>() / samples.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
        history.push(epoch_loss);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
        initial_loss,
    })
}

/// `(values, class index)` views of a dataset.
pub fn samples(ds: &Dataset) -> Vec<(&[f64], usize)> {
    ds.vectors
        .iter()
        .map(|v| (v.values.as_slice(), v.label.index()))
        .collect()
}

pub fn train_dataset(model: MlpModel, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_dataset(&model, ds)?;
    train(model, &samples(ds), cfg)
}

fn check_dataset(model: &MlpModel, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if ds.feature_width() != model.arch.input_width() {
        return Err(Error::Dataset(format!(
            "dataset has {} features, model expects {}",
            ds.feature_width(),
            model.arch.input_width()
        )));
    }
    if model.arch.n_classes() != TerrainClass::COUNT {
        return Err(Error::Dataset(format!(
            "model has {} outputs for {} terrain classes",
            model.arch.n_classes(),
            TerrainClass::COUNT
        )));
    }
    Ok(())
}

/// True-class by predicted-class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<usize>>,
    /// Diagonal over row sum; 0 for classes absent from the test set.
    pub per_class_accuracy: Vec<f64>,
    pub overall_accuracy: f64,
}

impl ConfusionMatrix {
    pub fn from_predictions(
        n_classes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut counts = vec![vec![0usize; n_classes]; n_classes];
        for (truth, pred) in pairs {
            counts[truth][pred] += 1;
        }
        let total: usize = counts.iter().flatten().sum();
        let trace: usize = (0..n_classes).map(|c| counts[c][c]).sum();
        let per_class_accuracy = counts
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[c] as f64 / n as f64
                }
            })
            .collect();
        Self {
            counts,
            per_class_accuracy,
            overall_accuracy: if total == 0 {
                0.0
            } else {
                trace as f64 / total as f64
            },
        }
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn evaluate(model: &MlpModel, test: &Dataset) -> Result<ConfusionMatrix> {
    evaluate_with(Execution::default(), model, test)
}

/// Rows evaluated per forward pass.
const EVAL_CHUNK: usize = 128;

pub fn evaluate_with(exec: Execution, model: &MlpModel, test: &Dataset) -> Result<ConfusionMatrix> {
    check_dataset(model, test)?;
    let width = model.arch.input_width();
    let chunks: Vec<&[crate::signal::FeatureVector]> = test.vectors.chunks(EVAL_CHUNK).collect();
    let predicted = exec::try_map(exec, &chunks, |chunk| {
        let data: Vec<f64> = chunk
            .iter()
            .flat_map(|v| v.values.iter().copied())
            .collect();
        let inputs = Array2::from_shape_vec((chunk.len(), width), data).expect("shape");
        model.predict_batch(inputs.view())
    })?;
    let pairs = test
        .vectors
        .iter()
        .zip(predicted.into_iter().flatten())
        .map(|(v, p)| (v.label.index(), p));
    Ok(ConfusionMatrix::from_predictions(
        model.arch.n_classes(),
        pairs,
    ))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    arch: MlpArchitecture,
    seed: u64,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    /// Row-major `(rows, cols)`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        Self {
            arch: m.arch.clone(),
            seed: m.init_seed,
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let layers = f
            .layers
            .into_iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.rows, l.cols), l.weights)
                    .map_err(|e| Error::Shape(e.to_string()))?;
                Ok(DenseLayer {
                    weights,
                    biases: Array1::from(l.biases),
                })
            })
            .collect::<Result<_>>()?;
        let model = MlpModel {
            arch: f.arch,
            layers,
            init_seed: f.seed,
        };
        model.validate()?;
        Ok(model)
    }
}
