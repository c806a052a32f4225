use super::train::{batch_gradient, finite_difference_gradients};
use super::*;
use crate::dataset::{DatasetMeta, DirectionSampling, GeneratorTag, Sector, TrainingDataset};
use crate::bounds::CrbOptions;
use crate::geometry::GeometryKind;
use crate::selection::{enumerate_subarrays, ClassCatalog, SubarrayLabel};
use crate::simulation::CovarianceFeatures;

/// Synthetic dataset with class-dependent mean features: class c puts
/// energy on diagonal band c. Linearly separable by construction.
fn toy_dataset(m: usize, classes: usize, per_class: usize, noise: f64, seed: u64)
    -> TrainingDataset
{
    let catalog = ClassCatalog {
        all: enumerate_subarrays(m, 2).unwrap().collect(),
        best: (0..classes)
            .map(|c| SubarrayLabel::new(vec![c, c + 1], m).unwrap())
            .collect(),
        crb_tolerance: 0.0,
    };
    let mut stream = crate::rng::Stream::from_seed(seed);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            let mut data = vec![0f32; 3 * m * m];
            for i in 0..m {
                for j in 0..m {
                    let on_band = (i + j) % classes == c;
                    let base = if on_band { 1.0 } else { 0.0 };
                    for ch in 0..3 {
                        data[ch * m * m + i * m + j] =
                            (base + noise * stream.normal()) as f32;
                    }
                }
            }
            features.push(CovarianceFeatures::from_raw(m, data).unwrap());
            labels.push(c as u32);
        }
    }
    let n = features.len();
    TrainingDataset {
        features,
        labels,
        catalog,
        meta: DatasetMeta {
            kind: GeometryKind::Custom,
            wavelength: 1.0,
            positions: (0..m).map(|i| [i as f64, 0.0, 0.0]).collect(),
            k: 2,
            directions: n,
            realizations: 1,
            snapshots: 1,
            snr_list: vec![20.0],
            seed,
            generator: GeneratorTag::Exhaustive,
            crb: CrbOptions::default(),
            sector: Sector::default(),
            sampling: DirectionSampling::Grid,
        },
    }
}

fn tiny_spec(m: usize, classes: usize, dropout: f64) -> NetworkSpec {
    NetworkSpec {
        input_size: m,
        conv_filters: vec![4, 4],
        fc_widths: vec![16],
        dropout,
        num_classes: classes,
    }
}

#[test]
fn forward_probabilities_normalize() {
    let ds = toy_dataset(7, 3, 2, 0.1, 1);
    let model: ModelState<f64> =
        ModelState::init(&tiny_spec(7, 3, 0.0), &ds.catalog, 3).unwrap();
    for f in &ds.features {
        let p = forward(&model, &f.cast::<f64>()).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn zero_output_layer_gives_uniform() {
    let ds = toy_dataset(7, 4, 1, 0.1, 2);
    let mut model: ModelState<f64> =
        ModelState::init(&tiny_spec(7, 4, 0.0), &ds.catalog, 3).unwrap();
    model.out.weights.iter_mut().for_each(|w| *w = 0.0);
    model.out.bias.iter_mut().for_each(|b| *b = 0.0);
    let p = forward(&model, &ds.features[0].cast::<f64>()).unwrap();
    for &v in &p {
        assert!((v - 0.25).abs() < 1e-12);
    }
    // Uniform output: argmax tie-break goes to class 0.
    let (class, label, conf) = predict_subarray(&model, &ds.features[0].cast::<f64>()).unwrap();
    assert_eq!(class, 0);
    assert_eq!(label, ds.catalog.best[0]);
    assert!((conf - 0.25).abs() < 1e-12);
}

#[test]
fn forward_matches_naive_reimplementation() {
    // Unoptimized direct transcription of the layer arithmetic.
    let m = 6;
    let ds = toy_dataset(m, 2, 1, 0.3, 4);
    let model: ModelState<f64> =
        ModelState::init(&tiny_spec(m, 2, 0.0), &ds.catalog, 9).unwrap();
    let x = ds.features[0].cast::<f64>();

    let naive = |model: &ModelState<f64>, x: &[f64]| -> Vec<f64> {
        let mut side = m;
        let mut act = x.to_vec();
        for layer in &model.conv {
            let o = side - 2;
            let mut next = vec![0.0; layer.out_ch * o * o];
            for oc in 0..layer.out_ch {
                for i in 0..o {
                    for j in 0..o {
                        let mut acc = layer.bias[oc];
                        for ic in 0..layer.in_ch {
                            for di in 0..3 {
                                for dj in 0..3 {
                                    let wv = layer.weights
                                        [((oc * layer.in_ch + ic) * 3 + di) * 3 + dj];
                                    let xv = act[ic * side * side + (i + di) * side + (j + dj)];
                                    acc += wv * xv;
                                }
                            }
                        }
                        next[oc * o * o + i * o + j] = acc.max(0.0);
                    }
                }
            }
            act = next;
            side = o;
        }
        for layer in &model.fc {
            let mut next = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let mut acc = layer.bias[o];
                for i in 0..layer.in_dim {
                    acc += layer.weights[o * layer.in_dim + i] * act[i];
                }
                next[o] = acc.max(0.0);
            }
            act = next;
        }
        let mut logits = vec![0.0; model.out.out_dim];
        for o in 0..model.out.out_dim {
            let mut acc = model.out.bias[o];
            for i in 0..model.out.in_dim {
                acc += model.out.weights[o * model.out.in_dim + i] * act[i];
            }
            logits[o] = acc;
        }
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&v| (v - mx).exp()).collect();
        let s: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / s).collect()
    };

    let fast = forward(&model, &x).unwrap();
    let slow = naive(&model, x.data());
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn cross_entropy_reference_values() {
    // Uniform two-class prediction: -(ln 0.5 + ln 0.5) = 2 ln 2.
    let ce = cross_entropy::<f64>(&[vec![0.5, 0.5]], &[0]);
    assert!((ce - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

    // Perfect one-hot (after clipping) is numerically zero.
    let ce = cross_entropy::<f64>(&[vec![1.0, 0.0, 0.0]], &[0]);
    assert!(ce.abs() < 1e-9, "{ce}");

    // Independent scalar recomputation on a random batch.
    let mut s = crate::rng::Stream::from_seed(8);
    let batch: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            let raw: Vec<f64> = (0..4).map(|_| s.uniform() + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    let targets: Vec<usize> = (0..10).map(|_| s.below(4)).collect();
    let got = cross_entropy(&batch, &targets);
    let mut want = 0.0;
    for (p, &t) in batch.iter().zip(&targets) {
        for (c, &eta) in p.iter().enumerate() {
            let eta = eta.clamp(1e-12, 1.0 - 1e-12);
            if c == t {
                want -= eta.ln();
            } else {
                want -= (1.0 - eta).ln();
            }
        }
    }
    want /= 10.0;
    assert!((got - want).abs() < 1e-10);
}

#[test]
fn gradients_match_finite_differences() {
    // 64-bit gradient check on a 3-sample batch, every layer.
    let m = 6;
    let ds = toy_dataset(m, 3, 2, 0.2, 11);
    let model: ModelState<f64> =
        ModelState::init(&tiny_spec(m, 3, 0.0), &ds.catalog, 5).unwrap();
    let batch = [0, 2, 4];
    let (analytic, _) = batch_gradient(&model, &ds, &batch, 0, 99);
    let fd = finite_difference_gradients(&model, &ds, &batch, 0, 99, 1e-5);

    for (name, a, b) in analytic.compare_with(&fd) {
        for (i, (av, bv)) in a.iter().zip(&b).enumerate() {
            let denom = av.abs().max(bv.abs()).max(1e-6);
            let rel = (av - bv).abs() / denom;
            assert!(rel < 1e-4, "{name}[{i}]: analytic {av}, fd {bv}, rel {rel}");
        }
    }
}

#[test]
fn gradients_match_with_dropout_active() {
    // Same derived mask streams on both sides keeps FD consistent.
    let m = 6;
    let ds = toy_dataset(m, 2, 2, 0.2, 12);
    let model: ModelState<f64> =
        ModelState::init(&tiny_spec(m, 2, 0.5), &ds.catalog, 6).unwrap();
    let batch = [0, 1, 3];
    let (analytic, _) = batch_gradient(&model, &ds, &batch, 1, 42);
    let fd = finite_difference_gradients(&model, &ds, &batch, 1, 42, 1e-5);
    for (name, a, b) in analytic.compare_with(&fd) {
        for (av, bv) in a.iter().zip(&b) {
            let denom = av.abs().max(bv.abs()).max(1e-6);
            assert!((av - bv).abs() / denom < 1e-4, "{name}: {av} vs {bv}");
        }
    }
}

#[test]
fn dropout_rate_zero_train_equals_eval() {
    let m = 6;
    let ds = toy_dataset(m, 2, 1, 0.2, 13);
    let model: ModelState<f64> =
        ModelState::init(&tiny_spec(m, 2, 0.0), &ds.catalog, 7).unwrap();
    let x = ds.features[0].cast::<f64>();
    let mut stream = crate::rng::Stream::from_seed(1);
    let train_mode = forward_cached(&model, x.data(), Some(&mut stream));
    let eval_mode = forward_cached(&model, x.data(), None);
    assert_eq!(train_mode.probs, eval_mode.probs);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let ds = toy_dataset(6, 2, 8, 0.2, 14);
    let (tr, va) = crate::dataset::split_train_val(&ds, 0.75, 0).unwrap();
    let spec = tiny_spec(6, 2, 0.0);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        max_epochs: 2,
        batch_size: 4,
        seed: 3,
        ..Default::default()
    };
    let init: ModelState<f64> = ModelState::init(&spec, &tr.catalog, 3).unwrap();
    let trained = train::<f64>(&tr, &va, &spec, &cfg).unwrap();
    assert_eq!(init.conv, trained.conv);
    assert_eq!(init.fc, trained.fc);
    assert_eq!(init.out, trained.out);
}

#[test]
fn separable_corpus_reaches_full_validation_accuracy() {
    let ds = toy_dataset(8, 2, 40, 0.05, 15);
    let (tr, va) = crate::dataset::split_train_val(&ds, 0.8, 1).unwrap();
    let spec = tiny_spec(8, 2, 0.0);
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 20,
        patience: 20,
        seed: 2,
        ..Default::default()
    };
    let model = train::<f32>(&tr, &va, &spec, &cfg).unwrap();
    let acc = accuracy(&model, &va).unwrap();
    assert!(acc >= 100.0 - 1e-9, "validation accuracy {acc}%");
    assert!(!model.log.is_empty());
    assert!(model.all_finite());
}

#[test]
fn training_is_deterministic() {
    let ds = toy_dataset(6, 2, 10, 0.2, 16);
    let (tr, va) = crate::dataset::split_train_val(&ds, 0.8, 1).unwrap();
    let spec = tiny_spec(6, 2, 0.5);
    let cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 4,
        seed: 5,
        ..Default::default()
    };
    let a = train::<f32>(&tr, &va, &spec, &cfg).unwrap();
    let b = train::<f32>(&tr, &va, &spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(encode_model(&a).unwrap(), encode_model(&b).unwrap());
}

#[test]
fn accuracy_arithmetic() {
    let ds = toy_dataset(6, 2, 5, 0.1, 17);
    let model: ModelState<f64> =
        ModelState::init(&tiny_spec(6, 2, 0.0), &ds.catalog, 1).unwrap();
    let acc = accuracy(&model, &ds).unwrap();
    let mut correct = 0;
    for i in 0..ds.len() {
        let (_, label, _) = predict_subarray(&model, &ds.features[i].cast::<f64>()).unwrap();
        if &label == ds.label_of(i) {
            correct += 1;
        }
    }
    assert!((acc - 100.0 * correct as f64 / ds.len() as f64).abs() < 1e-12);
}

#[test]
fn argmax_invariant_under_monotone_logit_transform() {
    // Scaling all output weights and biases by a positive constant is
    // a strictly increasing transform of the logits: argmax holds.
    let ds = toy_dataset(6, 3, 2, 0.3, 18);
    let mut model: ModelState<f64> =
        ModelState::init(&tiny_spec(6, 3, 0.0), &ds.catalog, 4).unwrap();
    let before: Vec<usize> = ds
        .features
        .iter()
        .map(|f| predict_subarray(&model, &f.cast::<f64>()).unwrap().0)
        .collect();
    model.out.weights.iter_mut().for_each(|w| *w *= 3.0);
    model.out.bias.iter_mut().for_each(|b| *b *= 3.0);
    let after: Vec<usize> = ds
        .features
        .iter()
        .map(|f| predict_subarray(&model, &f.cast::<f64>()).unwrap().0)
        .collect();
    assert_eq!(before, after);
}

#[test]
fn transfer_freezes_conv_and_reinitializes_head() {
    let source_ds = toy_dataset(7, 3, 20, 0.1, 19);
    let (str_, sva) = crate::dataset::split_train_val(&source_ds, 0.8, 1).unwrap();
    let spec = tiny_spec(7, 3, 0.0);
    let cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 6,
        seed: 7,
        ..Default::default()
    };
    let source = train::<f32>(&str_, &sva, &spec, &cfg).unwrap();

    // Target task with a different class count.
    let target_ds = toy_dataset(7, 2, 10, 0.1, 20);
    let (ttr, tva) = crate::dataset::split_train_val(&target_ds, 0.8, 1).unwrap();
    let tl = transfer_learn(&source, &ttr, &tva, &cfg).unwrap();

    assert_eq!(tl.spec.num_classes, 2);
    // Frozen convolutional tensors are bit-identical to the source.
    assert_eq!(source.conv_tensors(), tl.conv_tensors());
    assert!(tl.conv.iter().all(|l| l.frozen));
    // Identical conv params means identical conv activations on any
    // input (parameter identity implies feature identity).

    // Shape mismatch across M is refused.
    let other_m = toy_dataset(6, 2, 10, 0.1, 21);
    let (otr, ova) = crate::dataset::split_train_val(&other_m, 0.8, 1).unwrap();
    assert!(matches!(
        transfer_learn(&source, &otr, &ova, &cfg),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn full_batch_no_momentum_is_shuffle_order_invariant() {
    // With a full-batch gradient and zero momentum the per-epoch
    // shuffle only permutes a sum, so two shuffle seeds from the same
    // init agree up to floating-point summation order.
    let ds = toy_dataset(6, 2, 10, 0.2, 40);
    let (tr, va) = crate::dataset::split_train_val(&ds, 0.8, 1).unwrap();
    let spec = tiny_spec(6, 2, 0.0);
    let init: ModelState<f64> = ModelState::init(&spec, &tr.catalog, 77).unwrap();
    let run = |seed: u64| {
        let cfg = TrainConfig {
            momentum: 0.0,
            batch_size: tr.len(),
            max_epochs: 3,
            patience: 10,
            seed,
            ..Default::default()
        };
        train_from(init.clone(), &tr, &va, &cfg).unwrap()
    };
    let a = run(1);
    let b = run(2);
    let close = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .all(|(u, v)| (u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1e-9))
    };
    for (la, lb) in a.conv.iter().zip(&b.conv) {
        assert!(close(&la.weights, &lb.weights) && close(&la.bias, &lb.bias));
    }
    for (la, lb) in a.fc.iter().zip(&b.fc) {
        assert!(close(&la.weights, &lb.weights) && close(&la.bias, &lb.bias));
    }
    assert!(close(&a.out.weights, &b.out.weights) && close(&a.out.bias, &b.out.bias));
}

#[test]
fn uniform_classifier_scores_chance_on_balanced_set() {
    // Zero output layer predicts class 0 everywhere; on a balanced
    // C-class corpus that is 100/C percent.
    let classes = 4;
    let ds = toy_dataset(7, classes, 50, 0.2, 41);
    let mut model: ModelState<f32> =
        ModelState::init(&tiny_spec(7, classes, 0.0), &ds.catalog, 3).unwrap();
    model.out.weights.iter_mut().for_each(|w| *w = 0.0);
    model.out.bias.iter_mut().for_each(|b| *b = 0.0);
    let acc = accuracy(&model, &ds).unwrap();
    assert!((acc - 100.0 / classes as f64).abs() < 1e-9, "{acc}");
}

#[test]
fn catalog_mismatch_is_refused() {
    let a = toy_dataset(6, 2, 6, 0.1, 22);
    let b = toy_dataset(6, 3, 6, 0.1, 23);
    let cfg = TrainConfig::default();
    assert!(matches!(
        train::<f32>(&a, &b, &tiny_spec(6, 2, 0.0), &cfg),
        Err(Error::CatalogMismatch)
    ));
}

#[test]
fn model_file_roundtrip() {
    let ds = toy_dataset(6, 2, 8, 0.2, 24);
    let (tr, va) = crate::dataset::split_train_val(&ds, 0.75, 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        max_epochs: 3,
        seed: 9,
        ..Default::default()
    };
    let model = train::<f32>(&tr, &va, &tiny_spec(6, 2, 0.5), &cfg).unwrap();
    let bytes = encode_model(&model).unwrap();
    let back: ModelState<f32> = decode_model(&bytes).unwrap();
    assert_eq!(model, back);

    let mut corrupt = bytes.clone();
    corrupt[10] ^= 0xff;
    assert!(decode_model::<f32>(&corrupt).is_err());
}

#[test]
fn wrong_input_shape_is_refused() {
    let ds = toy_dataset(6, 2, 2, 0.1, 42);
    let model: ModelState<f64> =
        ModelState::init(&tiny_spec(6, 2, 0.0), &ds.catalog, 1).unwrap();
    let wrong = CovarianceFeatures::from_raw(7, vec![0.0f64; 3 * 49]).unwrap();
    assert!(matches!(
        forward(&model, &wrong),
        Err(Error::ShapeMismatch(_))
    ));
    assert!(matches!(
        predict_subarray(&model, &wrong),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn spec_validation() {
    assert!(tiny_spec(6, 2, 0.0).validate().is_ok());
    assert!(NetworkSpec {
        dropout: 1.0,
        ..tiny_spec(6, 2, 0.0)
    }
    .validate()
    .is_err());
    // 4 conv blocks on a 6x6 input shrink below 1x1.
    assert!(NetworkSpec {
        conv_filters: vec![4, 4, 4, 4],
        ..tiny_spec(6, 2, 0.0)
    }
    .validate()
    .is_err());
    assert!(TrainConfig {
        momentum: 1.0,
        ..Default::default()
    }
    .validate()
    .is_err());
}
