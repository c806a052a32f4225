//! From-scratch convolutional classifier mapping covariance features
//! to best-subarray classes: 3x3 valid convolutions with ReLU, fully
//! connected blocks with inverted dropout, softmax output, SGD with
//! momentum, and layer-freezing transfer learning.

mod layers;
mod train;

pub use train::{gradient_check, train, train_from, transfer_learn};

use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::selection::{ClassCatalog, SubarrayLabel};
use crate::simulation::CovarianceFeatures;
use layers::{dropout_mask, relu, softmax, ConvLayer, DenseLayer};

const MAGIC: &[u8; 4] = b"DKMD";
const FORMAT_VERSION: u32 = 1;

/// Architecture description. Convolutions are 3x3 stride-1 valid with
/// ReLU; each fully connected block is ReLU plus dropout; the output
/// layer is softmax over the catalog classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Input is `input_size x input_size x 3`.
    pub input_size: usize,
    pub conv_filters: Vec<usize>,
    pub fc_widths: Vec<usize>,
    /// Dropout rate applied after each fully connected block.
    pub dropout: f64,
    pub num_classes: usize,
}

pub const INPUT_CHANNELS: usize = 3;

impl NetworkSpec {
    /// Desk-scale default: two 16-filter conv blocks and one 128-wide
    /// fully connected block (the published 4x256 + 2x1024 layout is
    /// expressible but not CPU-friendly).
    pub fn desk_default(input_size: usize, num_classes: usize) -> Self {
        NetworkSpec {
            input_size,
            conv_filters: vec![16, 16],
            fc_widths: vec![128],
            dropout: 0.5,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Validation("network needs at least one class".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.spatial_after_convs() < 1 {
            return Err(Error::Validation(format!(
                "{} conv blocks shrink a {}x{} input below 1x1",
                self.conv_filters.len(),
                self.input_size,
                self.input_size
            )));
        }
        Ok(())
    }

    fn spatial_after_convs(&self) -> isize {
        self.input_size as isize - 2 * self.conv_filters.len() as isize
    }

    /// Flattened width feeding the first fully connected layer.
    pub fn flat_dim(&self) -> usize {
        let s = self.spatial_after_convs() as usize;
        let ch = self.conv_filters.last().copied().unwrap_or(INPUT_CHANNELS);
        s * s * ch
    }
}

/// Optimizer schedule. Defaults follow the training protocol: momentum
/// 0.9, learning rate 0.01 decayed by 0.9 every 10 epochs, batch 512,
/// early stop after 3 epochs without validation improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 512,
            lr_decay: 0.9,
            decay_every: 10,
            patience: 3,
            max_epochs: 60,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::Validation("learning rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.decay_every == 0 {
            return Err(Error::Validation(
                "batch size, max epochs and decay interval must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Trained (or freshly initialized) network with the catalog its
/// output classes index into.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T: Scalar = f32> {
    pub spec: NetworkSpec,
    pub(crate) conv: Vec<ConvLayer<T>>,
    pub(crate) fc: Vec<DenseLayer<T>>,
    pub(crate) out: DenseLayer<T>,
    pub catalog: ClassCatalog,
    pub log: Vec<EpochLog>,
}

impl<T: Scalar> ModelState<T> {
    /// Fan-in-scaled uniform init, one derived stream per layer.
    pub fn init(spec: &NetworkSpec, catalog: &ClassCatalog, seed: u64) -> Result<Self> {
        spec.validate()?;
        if spec.num_classes != catalog.num_classes() {
            return Err(Error::Validation(format!(
                "spec has {} classes but catalog has {}",
                spec.num_classes,
                catalog.num_classes()
            )));
        }
        let mut layer_ix = 0u64;
        let mut next_stream = |tag: &str| {
            layer_ix += 1;
            Stream::derived(seed, tag, &[layer_ix])
        };

        let mut conv = Vec::new();
        let mut in_ch = INPUT_CHANNELS;
        for &f in &spec.conv_filters {
            conv.push(ConvLayer::init(in_ch, f, &mut next_stream("init-conv")));
            in_ch = f;
        }
        let mut fc = Vec::new();
        let mut in_dim = spec.flat_dim();
        for &wd in &spec.fc_widths {
            fc.push(DenseLayer::init(in_dim, wd, &mut next_stream("init-fc")));
            in_dim = wd;
        }
        let out = DenseLayer::init(in_dim, spec.num_classes, &mut next_stream("init-out"));
        Ok(ModelState {
            spec: spec.clone(),
            conv,
            fc,
            out,
            catalog: catalog.clone(),
            log: Vec::new(),
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.conv
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .chain(self.fc.iter().map(|l| l.weights.len() + l.bias.len()))
            .sum::<usize>()
            + self.out.weights.len()
            + self.out.bias.len()
    }

    pub fn all_finite(&self) -> bool {
        let ok = |v: &[T]| v.iter().all(|x| x.is_finite());
        self.conv.iter().all(|l| ok(&l.weights) && ok(&l.bias))
            && self.fc.iter().all(|l| ok(&l.weights) && ok(&l.bias))
            && ok(&self.out.weights)
            && ok(&self.out.bias)
    }

    /// Flat copies of the convolutional tensors (frozen-layer identity
    /// checks in transfer learning).
    pub fn conv_tensors(&self) -> Vec<Vec<T>> {
        self.conv
            .iter()
            .flat_map(|l| [l.weights.clone(), l.bias.clone()])
            .collect()
    }

    fn check_input(&self, x: &CovarianceFeatures<T>) -> Result<()> {
        if x.size() != self.spec.input_size {
            return Err(Error::ShapeMismatch(format!(
                "input is {0}x{0}x3 but the network expects {1}x{1}x3",
                x.size(),
                self.spec.input_size
            )));
        }
        Ok(())
    }
}

pub(crate) struct ForwardCache<T: Scalar> {
    pub conv_inputs: Vec<Vec<T>>,
    pub conv_pre: Vec<Vec<T>>,
    pub fc_inputs: Vec<Vec<T>>,
    pub fc_pre: Vec<Vec<T>>,
    pub fc_masks: Vec<Vec<T>>,
    pub out_input: Vec<T>,
    pub probs: Vec<T>,
}

/// Full forward pass. `dropout` carries the per-sample mask stream in
/// training mode; `None` is inference (dropout disabled).
pub(crate) fn forward_cached<T: Scalar>(
    m: &ModelState<T>,
    x: &[T],
    mut dropout: Option<&mut Stream>,
) -> ForwardCache<T> {
    let mut size = m.spec.input_size;
    let mut cur = x.to_vec();
    let mut conv_inputs = Vec::with_capacity(m.conv.len());
    let mut conv_pre = Vec::with_capacity(m.conv.len());
    for layer in &m.conv {
        let z = layer.forward(&cur, size, size);
        conv_inputs.push(std::mem::take(&mut cur));
        cur = relu(&z);
        conv_pre.push(z);
        size -= 2;
    }

    let mut fc_inputs = Vec::with_capacity(m.fc.len());
    let mut fc_pre = Vec::with_capacity(m.fc.len());
    let mut fc_masks = Vec::with_capacity(m.fc.len());
    for layer in &m.fc {
        let z = layer.forward(&cur);
        fc_inputs.push(std::mem::take(&mut cur));
        let a = relu(&z);
        let mask = match dropout.as_deref_mut() {
            Some(stream) => dropout_mask(a.len(), m.spec.dropout, stream),
            None => vec![T::one(); a.len()],
        };
        cur = a.iter().zip(&mask).map(|(&av, &mv)| av * mv).collect();
        fc_pre.push(z);
        fc_masks.push(mask);
    }

    let logits = m.out.forward(&cur);
    let probs = softmax(&logits);
    ForwardCache {
        conv_inputs,
        conv_pre,
        fc_inputs,
        fc_pre,
        fc_masks,
        out_input: cur,
        probs,
    }
}

/// Class probabilities for one input (inference mode; dropout off).
pub fn forward<T: Scalar>(m: &ModelState<T>, x: &CovarianceFeatures<T>) -> Result<Vec<T>> {
    m.check_input(x)?;
    Ok(forward_cached(m, x.data(), None).probs)
}

/// Clip bound for predicted probabilities: 1e-12, widened to the
/// scalar's machine epsilon where 1 - 1e-12 is not representable
/// (f32), so `ln(1 - eta)` stays finite.
pub(crate) fn clip_epsilon<T: Scalar>() -> T {
    T::of(1e-12).max(T::epsilon())
}

/// Two-term cross-entropy averaged over the batch: for every class,
/// both the `chi ln eta` and `(1 - chi) ln(1 - eta)` terms, with
/// predictions clipped to `[eps, 1 - eps]` (`eps = 1e-12` in f64).
pub fn cross_entropy<T: Scalar>(pred: &[Vec<T>], target_class: &[usize]) -> T {
    assert!(!pred.is_empty(), "cross entropy of an empty batch");
    assert_eq!(pred.len(), target_class.len());
    let eps = clip_epsilon::<T>();
    let hi = T::one() - eps;
    let mut total = T::zero();
    for (p, &t) in pred.iter().zip(target_class) {
        for (c, &eta) in p.iter().enumerate() {
            let eta = eta.clamp(eps, hi);
            let chi = if c == t { T::one() } else { T::zero() };
            total -= chi * eta.ln() + (T::one() - chi) * (T::one() - eta).ln();
        }
    }
    total / T::of(pred.len() as f64)
}

/// Argmax class (lowest index on ties), its subarray, and confidence.
pub fn predict_subarray<T: Scalar>(
    m: &ModelState<T>,
    x: &CovarianceFeatures<T>,
) -> Result<(usize, SubarrayLabel, T)> {
    let probs = forward(m, x)?;
    let mut best = 0usize;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok((best, m.catalog.best[best].clone(), probs[best]))
}

/// Selection accuracy in percent: predictions compared against stored
/// labels as sensor-index sets, so datasets with a different catalog
/// (e.g. unseen-SNR test corpora) evaluate correctly.
pub fn accuracy<T: Scalar>(m: &ModelState<T>, ds: &crate::dataset::TrainingDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Validation("accuracy of an empty dataset".into()));
    }
    let mut correct = 0usize;
    for i in 0..ds.len() {
        let x = ds.features[i].cast::<T>();
        let (_, label, _) = predict_subarray(m, &x)?;
        if &label == ds.label_of(i) {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / ds.len() as f64)
}

pub fn save_model<T: Scalar>(m: &ModelState<T>, path: &std::path::Path) -> Result<()> {
    let bytes = encode_model(m)?;
    crate::runner::write_atomic(path, &bytes)
}

pub fn load_model<T: Scalar>(path: &std::path::Path) -> Result<ModelState<T>> {
    let bytes = std::fs::read(path)?;
    decode_model(&bytes)
}

/// Tensors are stored as f32 on disk (matching the dataset format).
pub fn encode_model<T: Scalar>(m: &ModelState<T>) -> Result<Vec<u8>> {
    if !m.all_finite() {
        return Err(Error::Validation(
            "refusing to save a model with non-finite parameters".into(),
        ));
    }
    let mut w = ByteWriter::new();
    w.raw(MAGIC);
    w.u32(FORMAT_VERSION);
    w.usize_as_u32(m.spec.input_size)?;
    w.usize_as_u32(m.spec.conv_filters.len())?;
    for &f in &m.spec.conv_filters {
        w.usize_as_u32(f)?;
    }
    w.usize_as_u32(m.spec.fc_widths.len())?;
    for &d in &m.spec.fc_widths {
        w.usize_as_u32(d)?;
    }
    w.f64(m.spec.dropout);
    w.usize_as_u32(m.spec.num_classes)?;

    // Catalog: parent size, K, tolerance, pools.
    let k = m.catalog.best.first().map_or(0, |l| l.size());
    w.usize_as_u32(k)?;
    w.f64(m.catalog.crb_tolerance);
    let write_labels = |w: &mut ByteWriter, labels: &[SubarrayLabel]| -> Result<()> {
        w.usize_as_u32(labels.len())?;
        for l in labels {
            w.usize_as_u32(l.size())?;
            for &i in l.indices() {
                w.usize_as_u32(i)?;
            }
        }
        Ok(())
    };
    write_labels(&mut w, &m.catalog.all)?;
    write_labels(&mut w, &m.catalog.best)?;

    let tensor = |w: &mut ByteWriter, v: &[T]| {
        for &x in v {
            w.f32(x.as_f64() as f32);
        }
    };
    for l in &m.conv {
        w.u8(l.frozen as u8);
        tensor(&mut w, &l.weights);
        tensor(&mut w, &l.bias);
    }
    for l in &m.fc {
        w.u8(l.frozen as u8);
        tensor(&mut w, &l.weights);
        tensor(&mut w, &l.bias);
    }
    w.u8(m.out.frozen as u8);
    tensor(&mut w, &m.out.weights);
    tensor(&mut w, &m.out.bias);

    w.usize_as_u32(m.log.len())?;
    for e in &m.log {
        w.usize_as_u32(e.epoch)?;
        w.f64(e.lr);
        w.f64(e.train_loss);
        w.f64(e.val_accuracy);
    }
    Ok(w.finish_with_crc())
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<ModelState<T>> {
    let mut r = ByteReader::with_crc(bytes, "model")?;
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let input_size = r.len_u32()?;
    let n_conv = r.len_u32()?;
    let conv_filters: Vec<usize> = (0..n_conv).map(|_| r.len_u32()).collect::<Result<_>>()?;
    let n_fc = r.len_u32()?;
    let fc_widths: Vec<usize> = (0..n_fc).map(|_| r.len_u32()).collect::<Result<_>>()?;
    let dropout = r.f64()?;
    let num_classes = r.len_u32()?;
    let spec = NetworkSpec {
        input_size,
        conv_filters,
        fc_widths,
        dropout,
        num_classes,
    };
    spec.validate()?;

    let _k = r.len_u32()?;
    let crb_tolerance = r.f64()?;
    let read_labels = |r: &mut ByteReader| -> Result<Vec<SubarrayLabel>> {
        let count = r.len_u32()?;
        (0..count)
            .map(|_| {
                let size = r.len_u32()?;
                let idx: Vec<usize> = (0..size).map(|_| r.len_u32()).collect::<Result<_>>()?;
                SubarrayLabel::new(idx, input_size)
                    .map_err(|e| Error::ModelFormat(format!("bad stored label: {e}")))
            })
            .collect()
    };
    let all = read_labels(&mut r)?;
    let best = read_labels(&mut r)?;
    for b in &best {
        if !all.contains(b) {
            return Err(Error::ModelFormat(format!(
                "catalog label {} is not in the candidate pool",
                b.to_compact()
            )));
        }
    }
    let catalog = ClassCatalog {
        all,
        best,
        crb_tolerance,
    };
    if catalog.num_classes() != spec.num_classes {
        return Err(Error::ModelFormat(
            "catalog size disagrees with the output layer".into(),
        ));
    }

    let tensor = |r: &mut ByteReader, n: usize| -> Result<Vec<T>> {
        (0..n).map(|_| Ok(T::of(r.f32()? as f64))).collect()
    };
    let mut conv = Vec::new();
    let mut in_ch = INPUT_CHANNELS;
    for &f in &spec.conv_filters {
        let frozen = r.u8()? != 0;
        let weights = tensor(&mut r, f * in_ch * 9)?;
        let bias = tensor(&mut r, f)?;
        conv.push(ConvLayer {
            in_ch,
            out_ch: f,
            weights,
            bias,
            frozen,
        });
        in_ch = f;
    }
    let mut fc = Vec::new();
    let mut in_dim = spec.flat_dim();
    for &d in &spec.fc_widths {
        let frozen = r.u8()? != 0;
        let weights = tensor(&mut r, d * in_dim)?;
        let bias = tensor(&mut r, d)?;
        fc.push(DenseLayer {
            in_dim,
            out_dim: d,
            weights,
            bias,
            frozen,
        });
        in_dim = d;
    }
    let frozen = r.u8()? != 0;
    let weights = tensor(&mut r, spec.num_classes * in_dim)?;
    let bias = tensor(&mut r, spec.num_classes)?;
    let out = DenseLayer {
        in_dim,
        out_dim: spec.num_classes,
        weights,
        bias,
        frozen,
    };

    let n_log = r.len_u32()?;
    let log: Vec<EpochLog> = (0..n_log)
        .map(|_| {
            Ok(EpochLog {
                epoch: r.len_u32()?,
                lr: r.f64()?,
                train_loss: r.f64()?,
                val_accuracy: r.f64()?,
            })
        })
        .collect::<Result<_>>()?;
    r.done()?;

    let model = ModelState {
        spec,
        conv,
        fc,
        out,
        catalog,
        log,
    };
    if !model.all_finite() {
        return Err(Error::ModelFormat("non-finite parameters".into()));
    }
    Ok(model)
}

/// Training-log CSV: `epoch,lr,train_loss,val_accuracy`.
pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_accuracy\n");
    for e in log {
        s.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.lr, e.train_loss, e.val_accuracy
        ));
    }
    s
}

#[cfg(test)]
mod tests;
