//! SGD-with-momentum training, per-epoch shuffling, learning-rate
//! decay, early stopping, and layer-freezing transfer learning.
//!
//! Batch gradients are computed over fixed-size sample chunks in
//! parallel and reduced in chunk order, so results are bit-identical
//! for any worker count.

use rayon::prelude::*;

use super::layers::relu_backward;
use super::{accuracy, cross_entropy, forward_cached, EpochLog, ModelState, NetworkSpec,
    TrainConfig};
use crate::dataset::TrainingDataset;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::scalar::Scalar;

const GRAD_CHUNK: usize = 16;

pub(crate) struct GradBuffer<T: Scalar> {
    conv: Vec<(Vec<T>, Vec<T>)>,
    fc: Vec<(Vec<T>, Vec<T>)>,
    out: (Vec<T>, Vec<T>),
}

impl<T: Scalar> GradBuffer<T> {
    pub fn zeros_like(m: &ModelState<T>) -> Self {
        GradBuffer {
            conv: m
                .conv
                .iter()
                .map(|l| (vec![T::zero(); l.weights.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
            fc: m
                .fc
                .iter()
                .map(|l| (vec![T::zero(); l.weights.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
            out: (
                vec![T::zero(); m.out.weights.len()],
                vec![T::zero(); m.out.bias.len()],
            ),
        }
    }

    fn add(&mut self, other: &GradBuffer<T>) {
        let acc = |a: &mut Vec<T>, b: &Vec<T>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        };
        for (mine, theirs) in self.conv.iter_mut().zip(&other.conv) {
            acc(&mut mine.0, &theirs.0);
            acc(&mut mine.1, &theirs.1);
        }
        for (mine, theirs) in self.fc.iter_mut().zip(&other.fc) {
            acc(&mut mine.0, &theirs.0);
            acc(&mut mine.1, &theirs.1);
        }
        acc(&mut self.out.0, &other.out.0);
        acc(&mut self.out.1, &other.out.1);
    }

    fn scale(&mut self, s: T) {
        let mul = |a: &mut Vec<T>| {
            for x in a.iter_mut() {
                *x *= s;
            }
        };
        for (w, b) in self.conv.iter_mut().chain(self.fc.iter_mut()) {
            mul(w);
            mul(b);
        }
        mul(&mut self.out.0);
        mul(&mut self.out.1);
    }
}

/// Backpropagate one sample into `grads`; returns its loss. The
/// dropout stream is derived from (seed, epoch, dataset index) so
/// masks do not depend on batch composition or thread schedule.
fn backprop_sample<T: Scalar>(
    m: &ModelState<T>,
    x: &[T],
    target: usize,
    dropout_stream: Option<&mut Stream>,
    grads: &mut GradBuffer<T>,
) -> T {
    let cache = forward_cached(m, x, dropout_stream);
    let loss = cross_entropy(std::slice::from_ref(&cache.probs), &[target]);

    // d loss / d eta with the two-term cost; the clip gate zeroes the
    // gradient outside [eps, 1-eps].
    let eps = super::clip_epsilon::<T>();
    let hi = T::one() - eps;
    let g_eta: Vec<T> = cache
        .probs
        .iter()
        .enumerate()
        .map(|(c, &eta)| {
            if eta < eps || eta > hi {
                T::zero()
            } else {
                let chi = if c == target { T::one() } else { T::zero() };
                -(chi / eta - (T::one() - chi) / (T::one() - eta))
            }
        })
        .collect();

    // Softmax Jacobian: dz_i = eta_i (g_i - sum_c g_c eta_c).
    let dot: T = g_eta
        .iter()
        .zip(&cache.probs)
        .map(|(&g, &p)| g * p)
        .sum();
    let mut dz: Vec<T> = cache
        .probs
        .iter()
        .zip(&g_eta)
        .map(|(&p, &g)| p * (g - dot))
        .collect();

    let mut dx = m
        .out
        .backward(&cache.out_input, &dz, &mut grads.out.0, &mut grads.out.1);

    for li in (0..m.fc.len()).rev() {
        // Through the dropout gate, then ReLU, then the dense layer.
        let da: Vec<T> = dx
            .iter()
            .zip(&cache.fc_masks[li])
            .map(|(&g, &mk)| g * mk)
            .collect();
        dz = relu_backward(&cache.fc_pre[li], &da);
        let (gw, gb) = &mut grads.fc[li];
        dx = m.fc[li].backward(&cache.fc_inputs[li], &dz, gw, gb);
    }

    let mut size = m.spec.input_size - 2 * m.conv.len();
    for li in (0..m.conv.len()).rev() {
        dz = relu_backward(&cache.conv_pre[li], &dx);
        size += 2;
        let (gw, gb) = &mut grads.conv[li];
        dx = m.conv[li].backward(&cache.conv_inputs[li], size, size, &dz, gw, gb);
    }

    loss
}

/// Mean gradient and mean loss over the batch (`ds_indices` are the
/// positions of the batch samples inside the dataset).
pub(crate) fn batch_gradient<T: Scalar>(
    m: &ModelState<T>,
    ds: &TrainingDataset,
    ds_indices: &[usize],
    epoch: usize,
    seed: u64,
) -> (GradBuffer<T>, T) {
    let chunks: Vec<(GradBuffer<T>, T)> = ds_indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = GradBuffer::zeros_like(m);
            let mut loss_sum = T::zero();
            for &i in chunk {
                let x = ds.features[i].cast::<T>();
                let mut stream = if m.spec.dropout > 0.0 {
                    Some(Stream::derived(seed, "dropout", &[epoch as u64, i as u64]))
                } else {
                    None
                };
                loss_sum += backprop_sample(
                    m,
                    x.data(),
                    ds.labels[i] as usize,
                    stream.as_mut(),
                    &mut grads,
                );
            }
            (grads, loss_sum)
        })
        .collect();

    let mut total = GradBuffer::zeros_like(m);
    let mut loss_sum = T::zero();
    for (g, l) in &chunks {
        total.add(g);
        loss_sum += *l;
    }
    let inv = T::one() / T::of(ds_indices.len() as f64);
    total.scale(inv);
    (total, loss_sum * inv)
}

/// Loss-only evaluation with the same dropout streams as
/// `batch_gradient` (finite-difference oracle support).
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn batch_loss<T: Scalar>(
    m: &ModelState<T>,
    ds: &TrainingDataset,
    ds_indices: &[usize],
    epoch: usize,
    seed: u64,
) -> T {
    let mut loss_sum = T::zero();
    for &i in ds_indices {
        let x = ds.features[i].cast::<T>();
        let mut stream = if m.spec.dropout > 0.0 {
            Some(Stream::derived(seed, "dropout", &[epoch as u64, i as u64]))
        } else {
            None
        };
        let cache = forward_cached(m, x.data(), stream.as_mut());
        loss_sum += cross_entropy(std::slice::from_ref(&cache.probs), &[ds.labels[i] as usize]);
    }
    loss_sum / T::of(ds_indices.len() as f64)
}

struct Velocity<T: Scalar>(GradBuffer<T>);

fn sgd_step<T: Scalar>(
    m: &mut ModelState<T>,
    grads: &GradBuffer<T>,
    vel: &mut Velocity<T>,
    lr: f64,
    momentum: f64,
) {
    let lr = T::of(lr);
    let mu = T::of(momentum);
    let update = |w: &mut [T], v: &mut [T], g: &[T]| {
        for ((wv, vv), gv) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *vv = mu * *vv - lr * *gv;
            *wv += *vv;
        }
    };
    for (li, layer) in m.conv.iter_mut().enumerate() {
        if layer.frozen {
            continue;
        }
        let (vw, vb) = &mut vel.0.conv[li];
        let (gw, gb) = &grads.conv[li];
        update(&mut layer.weights, vw, gw);
        update(&mut layer.bias, vb, gb);
    }
    for (li, layer) in m.fc.iter_mut().enumerate() {
        if layer.frozen {
            continue;
        }
        let (vw, vb) = &mut vel.0.fc[li];
        let (gw, gb) = &grads.fc[li];
        update(&mut layer.weights, vw, gw);
        update(&mut layer.bias, vb, gb);
    }
    if !m.out.frozen {
        update(&mut m.out.weights, &mut vel.0.out.0, &grads.out.0);
        update(&mut m.out.bias, &mut vel.0.out.1, &grads.out.1);
    }
}

fn check_datasets(ds_train: &TrainingDataset, ds_val: &TrainingDataset) -> Result<()> {
    if ds_train.catalog.fingerprint() != ds_val.catalog.fingerprint() {
        return Err(Error::CatalogMismatch);
    }
    if ds_train.is_empty() || ds_val.is_empty() {
        return Err(Error::Validation("empty training or validation set".into()));
    }
    Ok(())
}

/// Core loop shared by fresh training and transfer learning. Returns
/// the best-validation-accuracy snapshot carrying the full log.
fn train_model<T: Scalar>(
    mut model: ModelState<T>,
    ds_train: &TrainingDataset,
    ds_val: &TrainingDataset,
    cfg: &TrainConfig,
) -> Result<ModelState<T>> {
    let mut vel = Velocity(GradBuffer::zeros_like(&model));
    let mut log: Vec<EpochLog> = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_model = model.clone();
    let mut stall = 0usize;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut order: Vec<usize> = (0..ds_train.len()).collect();
        Stream::derived(cfg.seed, "epoch-shuffle", &[epoch as u64]).shuffle(&mut order);

        let mut loss_weighted = T::zero();
        for batch in order.chunks(cfg.batch_size) {
            let (grads, loss) = batch_gradient(&model, ds_train, batch, epoch, cfg.seed);
            loss_weighted += loss * T::of(batch.len() as f64);
            sgd_step(&mut model, &grads, &mut vel, lr, cfg.momentum);
        }
        let train_loss = (loss_weighted / T::of(ds_train.len() as f64)).as_f64();
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }

        let val_accuracy = accuracy(&model, ds_val)?;
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_accuracy,
        });

        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best_model = model.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }

    best_model.log = log;
    Ok(best_model)
}

/// Train a fresh network on the corpus (both splits must share a
/// catalog). Deterministic given `cfg.seed`.
pub fn train<T: Scalar>(
    ds_train: &TrainingDataset,
    ds_val: &TrainingDataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<ModelState<T>> {
    cfg.validate()?;
    check_datasets(ds_train, ds_val)?;
    if spec.input_size != ds_train.meta.num_sensors() {
        return Err(Error::ShapeMismatch(format!(
            "network input {0}x{0} but dataset features are {1}x{1}",
            spec.input_size,
            ds_train.meta.num_sensors()
        )));
    }
    let model = ModelState::init(spec, &ds_train.catalog, cfg.seed)?;
    train_model(model, ds_train, ds_val, cfg)
}

/// Continue training an existing model (same schedule semantics as
/// [`train`]; `cfg.seed` drives shuffling and dropout only).
pub fn train_from<T: Scalar>(
    model: ModelState<T>,
    ds_train: &TrainingDataset,
    ds_val: &TrainingDataset,
    cfg: &TrainConfig,
) -> Result<ModelState<T>> {
    cfg.validate()?;
    check_datasets(ds_train, ds_val)?;
    if model.catalog.fingerprint() != ds_train.catalog.fingerprint() {
        return Err(Error::CatalogMismatch);
    }
    train_model(model, ds_train, ds_val, cfg)
}

/// Transfer learning: convolutional parameters are copied from the
/// source network and frozen (bit-identical after training); fully
/// connected and output layers are re-initialized for the target
/// catalog and trained on the target corpus. Source and target must
/// share the input size (cross-M transfer is unsupported).
pub fn transfer_learn<T: Scalar>(
    source: &ModelState<T>,
    ds_target_train: &TrainingDataset,
    ds_target_val: &TrainingDataset,
    cfg: &TrainConfig,
) -> Result<ModelState<T>> {
    cfg.validate()?;
    check_datasets(ds_target_train, ds_target_val)?;
    if source.spec.input_size != ds_target_train.meta.num_sensors() {
        return Err(Error::ShapeMismatch(format!(
            "source network input {0}x{0} but target features are {1}x{1}",
            source.spec.input_size,
            ds_target_train.meta.num_sensors()
        )));
    }

    let spec = NetworkSpec {
        num_classes: ds_target_train.catalog.num_classes(),
        ..source.spec.clone()
    };
    let mut model = ModelState::init(&spec, &ds_target_train.catalog, cfg.seed)?;
    for (dst, src) in model.conv.iter_mut().zip(&source.conv) {
        *dst = src.clone();
        dst.frozen = true;
    }
    train_model(model, ds_target_train, ds_target_val, cfg)
}

pub(crate) fn finite_difference_gradients<T: Scalar>(
    model: &ModelState<T>,
    ds: &TrainingDataset,
    ds_indices: &[usize],
    epoch: usize,
    seed: u64,
    step: f64,
) -> GradBuffer<T> {
    let mut fd = GradBuffer::zeros_like(model);
    let h = T::of(step);
    let two_h = T::of(2.0 * step);

    enum Slot {
        ConvW(usize),
        ConvB(usize),
        FcW(usize),
        FcB(usize),
        OutW,
        OutB,
    }
    let mut slots = Vec::new();
    for i in 0..model.conv.len() {
        slots.push(Slot::ConvW(i));
        slots.push(Slot::ConvB(i));
    }
    for i in 0..model.fc.len() {
        slots.push(Slot::FcW(i));
        slots.push(Slot::FcB(i));
    }
    slots.push(Slot::OutW);
    slots.push(Slot::OutB);

    for slot in slots {
        let len = match &slot {
            Slot::ConvW(i) => model.conv[*i].weights.len(),
            Slot::ConvB(i) => model.conv[*i].bias.len(),
            Slot::FcW(i) => model.fc[*i].weights.len(),
            Slot::FcB(i) => model.fc[*i].bias.len(),
            Slot::OutW => model.out.weights.len(),
            Slot::OutB => model.out.bias.len(),
        };
        for p in 0..len {
            let probe = |delta: T| {
                let mut m2 = model.clone();
                let v = match &slot {
                    Slot::ConvW(i) => &mut m2.conv[*i].weights[p],
                    Slot::ConvB(i) => &mut m2.conv[*i].bias[p],
                    Slot::FcW(i) => &mut m2.fc[*i].weights[p],
                    Slot::FcB(i) => &mut m2.fc[*i].bias[p],
                    Slot::OutW => &mut m2.out.weights[p],
                    Slot::OutB => &mut m2.out.bias[p],
                };
                *v += delta;
                batch_loss(&m2, ds, ds_indices, epoch, seed)
            };
            let g = (probe(h) - probe(-h)) / two_h;
            match &slot {
                Slot::ConvW(i) => fd.conv[*i].0[p] = g,
                Slot::ConvB(i) => fd.conv[*i].1[p] = g,
                Slot::FcW(i) => fd.fc[*i].0[p] = g,
                Slot::FcB(i) => fd.fc[*i].1[p] = g,
                Slot::OutW => fd.out.0[p] = g,
                Slot::OutB => fd.out.1[p] = g,
            }
        }
    }
    fd
}

impl<T: Scalar> GradBuffer<T> {
    /// (name, analytic, finite-difference) triples for reporting.
    pub(crate) fn compare_with(
        &self,
        other: &GradBuffer<T>,
    ) -> Vec<(String, Vec<T>, Vec<T>)> {
        let mut out = Vec::new();
        for (i, ((aw, ab), (bw, bb))) in self.conv.iter().zip(&other.conv).enumerate() {
            out.push((format!("conv{i}.weights"), aw.clone(), bw.clone()));
            out.push((format!("conv{i}.bias"), ab.clone(), bb.clone()));
        }
        for (i, ((aw, ab), (bw, bb))) in self.fc.iter().zip(&other.fc).enumerate() {
            out.push((format!("fc{i}.weights"), aw.clone(), bw.clone()));
            out.push((format!("fc{i}.bias"), ab.clone(), bb.clone()));
        }
        out.push(("out.weights".into(), self.out.0.clone(), other.out.0.clone()));
        out.push(("out.bias".into(), self.out.1.clone(), other.out.1.clone()));
        out
    }
}

/// Gradient diagnostic: compare every layer's backprop gradient on one
/// batch against central finite differences of the batch loss. Returns
/// the worst offender as (layer tensor name, relative error), using
/// `max(|a|, |fd|, 1e-6)` as the denominator.
pub fn gradient_check<T: Scalar>(
    model: &ModelState<T>,
    ds: &TrainingDataset,
    ds_indices: &[usize],
    epoch: usize,
    seed: u64,
    step: f64,
) -> (String, f64) {
    let (analytic, _) = batch_gradient(model, ds, ds_indices, epoch, seed);
    let fd = finite_difference_gradients(model, ds, ds_indices, epoch, seed, step);
    let mut worst = (String::from("none"), 0.0f64);
    for (name, a, b) in analytic.compare_with(&fd) {
        for (av, bv) in a.iter().zip(&b) {
            let denom = av.abs().max(bv.abs()).max(T::of(1e-6));
            let rel = ((*av - *bv).abs() / denom).as_f64();
            if rel > worst.1 {
                worst = (name.clone(), rel);
            }
        }
    }
    worst
}
