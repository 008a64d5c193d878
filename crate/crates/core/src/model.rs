//! Feed-forward ReLU classifier with a single sigmoid output, masked
//! inference, a plain SGD trainer, and JSON weight files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitDataset, TabularDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics;
use crate::prng::{stream, Rng};
use crate::state::DropoutState;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// `[inputs, hidden_0, ..., hidden_n, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layer_sizes: Vec<usize>,
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let arch = MlpArchitecture { layer_sizes };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        if s.len() < 3 {
            return Err(Error::Shape(format!(
                "architecture {s:?} needs an input, at least one hidden layer, and an output"
            )));
        }
        if s.contains(&0) {
            return Err(Error::Shape(format!("architecture {s:?} has an empty layer")));
        }
        if *s.last().unwrap() != 1 {
            return Err(Error::Shape(format!(
                "architecture {s:?}: output size must be 1"
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    /// Total hidden neuron count `N`.
    pub fn hidden_count(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }
}

/// A trained network. Immutable; all inference methods are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    arch: MlpArchitecture,
    /// `weights[l]` is `layer_sizes[l+1] x layer_sizes[l]`, row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    /// `neuron_order[k]` is the mask bit of the k-th hidden neuron in
    /// layer-major order.
    neuron_order: Vec<usize>,
    /// `bit_of[h][u]`: mask bit of unit `u` in hidden layer `h`.
    bit_of: Vec<Vec<usize>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MlpModel {
    pub fn new(
        arch: MlpArchitecture,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        neuron_order: Vec<usize>,
    ) -> Result<Self> {
        arch.validate()?;
        let sizes = &arch.layer_sizes;
        let layers = sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Shape(format!(
                "expected {layers} weight layers, got {} weight and {} bias arrays",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            if weights[l].len() != rows * cols {
                return Err(Error::Shape(format!(
                    "layer {l}: weights have {} values, expected {rows}x{cols}",
                    weights[l].len()
                )));
            }
            if biases[l].len() != rows {
                return Err(Error::Shape(format!(
                    "layer {l}: biases have {} values, expected {rows}",
                    biases[l].len()
                )));
            }
        }
        let n = arch.hidden_count();
        if neuron_order.len() != n {
            return Err(Error::Shape(format!(
                "neuron_order has {} entries for {n} hidden neurons",
                neuron_order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &b in &neuron_order {
            if b >= n || std::mem::replace(&mut seen[b], true) {
                return Err(Error::Shape(
                    "neuron_order is not a permutation of 0..N".into(),
                ));
            }
        }
        let mut bit_of = Vec::new();
        let mut k = 0;
        for &size in arch.hidden_sizes() {
            bit_of.push(neuron_order[k..k + size].to_vec());
            k += size;
        }
        Ok(MlpModel {
            arch,
            weights,
            biases,
            neuron_order,
            bit_of,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` init for weights and
    /// biases, identity neuron order.
    pub fn init(arch: MlpArchitecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let sizes = &arch.layer_sizes;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            weights.push(
                (0..sizes[l] * sizes[l + 1])
                    .map(|_| rng.uniform(-bound, bound))
                    .collect(),
            );
            biases.push((0..sizes[l + 1]).map(|_| rng.uniform(-bound, bound)).collect());
        }
        let n = arch.hidden_count();
        Self::new(arch, weights, biases, (0..n).collect())
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn input_size(&self) -> usize {
        self.arch.input_size()
    }

    pub fn hidden_count(&self) -> usize {
        self.arch.hidden_count()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn neuron_order(&self) -> &[usize] {
        &self.neuron_order
    }

    /// `(hidden layer, unit)` of every mask bit.
    pub fn neuron_of_bit(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0, 0); self.hidden_count()];
        for (h, bits) in self.bit_of.iter().enumerate() {
            for (u, &b) in bits.iter().enumerate() {
                out[b] = (h, u);
            }
        }
        out
    }

    /// Dropped units of a state grouped by hidden layer.
    pub fn dropped_by_layer(&self, mask: &DropoutState) -> Vec<Vec<usize>> {
        self.bit_of
            .iter()
            .map(|bits| {
                bits.iter()
                    .enumerate()
                    .filter(|(_, &b)| mask.get(b))
                    .map(|(u, _)| u)
                    .collect()
            })
            .collect()
    }

    fn check_mask(&self, mask: Option<&DropoutState>) -> Result<()> {
        match mask {
            Some(m) if m.len() != self.hidden_count() => Err(Error::Shape(format!(
                "mask has {} bits, model has {} hidden neurons",
                m.len(),
                self.hidden_count()
            ))),
            _ => Ok(()),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Compiles the network restricted to the neurons `mask` keeps.
    pub fn masked(&self, mask: Option<&DropoutState>) -> Result<MaskedNetwork> {
        self.check_mask(mask)?;
        let sizes = &self.arch.layer_sizes;
        let active: Vec<Vec<usize>> = (0..sizes.len())
            .map(|layer| {
                if layer == 0 || layer == sizes.len() - 1 {
                    (0..sizes[layer]).collect()
                } else {
                    let bits = &self.bit_of[layer - 1];
                    (0..sizes[layer])
                        .filter(|&u| mask.is_none_or(|m| !m.get(bits[u])))
                        .collect()
                }
            })
            .collect();
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let cols = sizes[l];
            let (ins, outs) = (&active[l], &active[l + 1]);
            let mut w = Vec::with_capacity(ins.len() * outs.len());
            for &o in outs {
                let row = &self.weights[l][o * cols..(o + 1) * cols];
                w.extend(ins.iter().map(|&i| row[i]));
            }
            layers.push(DenseLayer {
                weights: w,
                biases: outs.iter().map(|&o| self.biases[l][o]).collect(),
                n_in: ins.len(),
                n_out: outs.len(),
            });
        }
        let first_hidden_active = active[1].clone();
        Ok(MaskedNetwork {
            layers,
            first_hidden_active,
        })
    }

    /// Post-ReLU activations of the first hidden layer with no mask applied.
    /// Masks never change these, so evaluators may cache them per row.
    pub fn first_hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n_out = self.arch.layer_sizes[1];
        let mut out = vec![0.0; n_out];
        affine_relu(&self.weights[0], &self.biases[0], x, &mut out);
        Ok(out)
    }

    /// Output probability. Masked neurons' outputs are forced to zero after
    /// activation and are never read downstream.
    pub fn forward(&self, x: &[f64], mask: Option<&DropoutState>) -> Result<f64> {
        self.check_input(x)?;
        let net = self.masked(mask)?;
        Ok(net.probability(x))
    }

    pub fn predict(&self, x: &[f64], mask: Option<&DropoutState>) -> Result<u8> {
        Ok(u8::from(self.forward(x, mask)? >= 0.5))
    }

    pub fn predict_batch(
        &self,
        data: &TabularDataset,
        mask: Option<&DropoutState>,
    ) -> Result<Vec<u8>> {
        self.predict_batch_with(data, mask, Execution::default())
    }

    pub fn predict_batch_with(
        &self,
        data: &TabularDataset,
        mask: Option<&DropoutState>,
        exec: Execution,
    ) -> Result<Vec<u8>> {
        if data.n_features() != self.input_size() {
            return Err(Error::Shape(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                self.input_size()
            )));
        }
        let net = self.masked(mask)?;
        let rows: Vec<&[f64]> = data.rows().collect();
        Ok(exec.map_chunks(&rows, 256, |chunk| {
            let mut scratch = Scratch::default();
            chunk
                .iter()
                .map(|x| u8::from(net.probability_with(x, &mut scratch) >= 0.5))
                .collect()
        }))
    }

    /// Copy of the model with every outgoing weight of the masked neurons set
    /// to zero; unmasked inference on it matches masked inference on `self`.
    pub fn repaired(&self, mask: &DropoutState) -> Result<MlpModel> {
        self.check_mask(Some(mask))?;
        let mut out = self.clone();
        let sizes = &self.arch.layer_sizes;
        for (h, units) in self.dropped_by_layer(mask).into_iter().enumerate() {
            let l = h + 1;
            let cols = sizes[l];
            for o in 0..sizes[l + 1] {
                for &u in &units {
                    out.weights[l][o * cols + u] = 0.0;
                }
            }
        }
        Ok(out)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_sizes: self.arch.layer_sizes.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            neuron_order: self.neuron_order.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        crate::io::write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format {
            location: format!("line {} column {}", e.line(), e.column()),
            msg: e.to_string(),
        })?;
        file.into_model()
    }
}

/// On-disk model layout. Weight matrices are flat row-major arrays of shape
/// `layer_sizes[l+1] x layer_sizes[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub neuron_order: Vec<usize>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<MlpModel> {
        let fmt_err = |location: String, msg: String| Error::Format { location, msg };
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(fmt_err(
                "format_version".into(),
                format!(
                    "unsupported version {}, expected {MODEL_FORMAT_VERSION}",
                    self.format_version
                ),
            ));
        }
        let arch = MlpArchitecture {
            layer_sizes: self.layer_sizes,
        };
        arch.validate()
            .map_err(|e| fmt_err("layer_sizes".into(), e.to_string()))?;
        let sizes = &arch.layer_sizes;
        let layers = sizes.len() - 1;
        for (name, len) in [("weights", self.weights.len()), ("biases", self.biases.len())] {
            if len != layers {
                return Err(fmt_err(
                    name.into(),
                    format!("{len} layers listed, layer_sizes implies {layers}"),
                ));
            }
        }
        for l in 0..layers {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            if self.weights[l].len() != rows * cols {
                return Err(fmt_err(
                    format!("weights[{l}]"),
                    format!(
                        "layer {l} has {} values, expected {rows}x{cols} = {}",
                        self.weights[l].len(),
                        rows * cols
                    ),
                ));
            }
            if self.biases[l].len() != rows {
                return Err(fmt_err(
                    format!("biases[{l}]"),
                    format!("layer {l} has {} values, expected {rows}", self.biases[l].len()),
                ));
            }
        }
        MlpModel::new(arch, self.weights, self.biases, self.neuron_order)
            .map_err(|e| fmt_err("neuron_order".into(), e.to_string()))
    }
}

#[derive(Debug, Clone)]
struct DenseLayer {
    weights: Vec<f64>,
    biases: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

fn affine_relu(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, slot) in out.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = b[o];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *slot = acc.max(0.0);
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, slot) in out.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = b[o];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *slot = acc;
    }
}

#[derive(Default)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// A model with a fixed mask compiled in: dropped neurons are removed from
/// every layer, so their activations are never computed or read.
#[derive(Debug, Clone)]
pub struct MaskedNetwork {
    layers: Vec<DenseLayer>,
    first_hidden_active: Vec<usize>,
}

impl MaskedNetwork {
    pub fn probability(&self, x: &[f64]) -> f64 {
        self.probability_with(x, &mut Scratch::default())
    }

    pub fn probability_with(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        let first = &self.layers[0];
        scratch.a.clear();
        scratch.a.resize(first.n_out, 0.0);
        if self.layers.len() == 1 {
            affine(&first.weights, &first.biases, x, &mut scratch.a);
            return sigmoid(scratch.a[0]);
        }
        affine_relu(&first.weights, &first.biases, x, &mut scratch.a);
        self.finish(scratch)
    }

    /// Same as [`probability`](Self::probability) but starting from cached
    /// unmasked first-hidden-layer activations.
    pub fn probability_from_first_hidden(&self, h1: &[f64], scratch: &mut Scratch) -> f64 {
        scratch.a.clear();
        scratch
            .a
            .extend(self.first_hidden_active.iter().map(|&u| h1[u]));
        self.finish(scratch)
    }

    fn finish(&self, scratch: &mut Scratch) -> f64 {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            debug_assert_eq!(scratch.a.len(), layer.n_in);
            scratch.b.clear();
            scratch.b.resize(layer.n_out, 0.0);
            if l == last {
                affine(&layer.weights, &layer.biases, &scratch.a, &mut scratch.b);
            } else {
                affine_relu(&layer.weights, &layer.biases, &scratch.a, &mut scratch.b);
            }
            std::mem::swap(&mut scratch.a, &mut scratch.b);
        }
        sigmoid(scratch.a[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_dropout_prob: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            train_dropout_prob: 0.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.train_dropout_prob) {
            return Err(Error::Config(format!(
                "train_dropout_prob must lie in [0, 1), got {}",
                self.train_dropout_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub validation_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub gradient_steps: usize,
}

pub fn train(data: &SplitDataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<MlpModel> {
    train_with_report(data, arch, cfg).map(|(m, _)| m)
}

/// Mini-batch SGD on binary cross-entropy. Returns the snapshot from the
/// epoch with the highest validation F1 (earliest on ties).
pub fn train_with_report(
    data: &SplitDataset,
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    let train = &data.train;
    if train.n_features() != arch.input_size() {
        return Err(Error::Shape(format!(
            "architecture expects {} inputs, dataset has {} features",
            arch.input_size(),
            train.n_features()
        )));
    }
    if train.is_empty() {
        return Err(Error::Size("empty training split".into()));
    }
    let mut model = MlpModel::init(arch.clone(), &mut Rng::with_stream(cfg.seed, stream::INIT))?;
    let mut rng = Rng::with_stream(cfg.seed, stream::TRAIN);
    let sizes = arch.layer_sizes.clone();
    let n_layers = sizes.len() - 1;
    let keep = 1.0 - cfg.train_dropout_prob;

    let mut grad_w: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    // acts[l]: input to weight layer l (post-ReLU, post-dropout).
    let mut acts: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut drop_scale: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![1.0; s]).collect();
    let mut deltas: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, MlpModel)> = None;
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        gradient_steps: 0,
    };

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad_w.iter_mut().for_each(|g| g.fill(0.0));
            grad_b.iter_mut().for_each(|g| g.fill(0.0));
            for &i in batch {
                acts[0].copy_from_slice(train.row(i));
                for l in 0..n_layers {
                    let (lo, hi) = acts.split_at_mut(l + 1);
                    let out = &mut hi[0];
                    if l + 1 == n_layers {
                        affine(&model.weights[l], &model.biases[l], &lo[l], out);
                    } else {
                        affine_relu(&model.weights[l], &model.biases[l], &lo[l], out);
                        if cfg.train_dropout_prob > 0.0 {
                            for (a, s) in out.iter_mut().zip(drop_scale[l + 1].iter_mut()) {
                                *s = if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 };
                                *a *= *s;
                            }
                        }
                    }
                }
                let z = acts[n_layers][0];
                let p = sigmoid(z);
                let y = f64::from(train.labels[i]);
                // Numerically stable BCE on the logit.
                loss_sum += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();

                deltas[n_layers][0] = p - y;
                for l in (0..n_layers).rev() {
                    let cols = sizes[l];
                    let (lo, hi) = deltas.split_at_mut(l + 1);
                    let d_out = &hi[0];
                    for (o, &d) in d_out.iter().enumerate() {
                        grad_b[l][o] += d;
                        let g = &mut grad_w[l][o * cols..(o + 1) * cols];
                        for (gi, ai) in g.iter_mut().zip(&acts[l]) {
                            *gi += d * ai;
                        }
                    }
                    if l > 0 {
                        let d_in = &mut lo[l];
                        d_in.fill(0.0);
                        for (o, &d) in d_out.iter().enumerate() {
                            let row = &model.weights[l][o * cols..(o + 1) * cols];
                            for (di, wi) in d_in.iter_mut().zip(row) {
                                *di += d * wi;
                            }
                        }
                        // ReLU derivative; a dropped or inactive unit has a == 0.
                        for (j, di) in d_in.iter_mut().enumerate() {
                            if acts[l][j] <= 0.0 {
                                *di = 0.0;
                            } else {
                                *di *= drop_scale[l][j];
                            }
                        }
                    }
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for l in 0..n_layers {
                for (w, g) in model.weights[l].iter_mut().zip(&grad_w[l]) {
                    *w -= step * g;
                }
                for (b, g) in model.biases[l].iter_mut().zip(&grad_b[l]) {
                    *b -= step * g;
                }
            }
            report.gradient_steps += 1;
        }
        let mean_loss = loss_sum / train.len() as f64;
        if !mean_loss.is_finite() || model.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::Training {
                epoch,
                loss: mean_loss,
            });
        }
        let preds = model.predict_batch(&data.validation, None)?;
        let val_f1 = if data.validation.is_empty() {
            0.0
        } else {
            metrics::f1(&metrics::confusion(&preds, &data.validation.labels)?)
        };
        report.epochs.push(EpochStats {
            mean_loss,
            validation_f1: val_f1,
        });
        if best.as_ref().is_none_or(|(f, _)| val_f1 > *f) {
            best = Some((val_f1, model.clone()));
            report.best_epoch = epoch;
        }
    }
    Ok((best.expect("at least one epoch").1, report))
}
