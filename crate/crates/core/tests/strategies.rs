mod common;

use longdoc_core::chunker::{best_chunk, disjoint_chunks, stride_chunks, StrideConfig};
use longdoc_core::corpus::{Document, TaskName, TaskSpec};
use longdoc_core::encoder::EncoderParams;
use longdoc_core::strategies::*;
use longdoc_core::synth::SynthSpec;
use longdoc_core::tokenizer::{TokenSeq, PAD};
use longdoc_core::{LONG_WINDOW, WINDOW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn task(k: usize) -> TaskSpec {
    TaskSpec::new(TaskName::Broad, (0..k).map(|i| format!("c{i:03}")))
}

fn random_doc(rng: &mut impl Rng, len: usize, vocab: u32) -> Document {
    Document::from_ids((0..len).map(|_| rng.gen_range(3..vocab)).collect())
}

fn random_classifier(rng: &mut impl Rng, vocab: usize, dim: usize, slots: usize, k: usize, window: usize) -> Classifier {
    let encoders = (0..slots)
        .map(|_| EncoderParams::new(vocab, dim, window, rng.gen()))
        .collect();
    let head = Head::init(k, dim * slots, rng);
    Classifier::new(encoders, slots, head).unwrap()
}

// Double-double arithmetic for an extended-precision softmax oracle.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(a.0, b.0);
    let e = e + a.1 + b.1;
    two_sum(s, e)
}

fn dd_mul(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn dd_div(a: (f64, f64), b: (f64, f64)) -> f64 {
    let q = a.0 / b.0;
    let (p, pe) = dd_mul(q, b.0);
    let r = (a.0 - p - pe + a.1 - q * b.1) / b.0;
    q + r
}

fn softmax_oracle(head: &Head, x: &[f64]) -> Vec<f64> {
    let logits: Vec<(f64, f64)> = (0..head.k)
        .map(|j| {
            let row = &head.weight[j * head.d_in..(j + 1) * head.d_in];
            row.iter()
                .zip(x)
                .fold((head.bias[j], 0.0), |acc, (w, v)| dd_add(acc, dd_mul(*w, *v)))
        })
        .collect();
    let exps: Vec<(f64, f64)> = logits
        .iter()
        .map(|&(hi, lo)| {
            let e = hi.exp();
            (e, e * lo)
        })
        .collect();
    let sum = exps.iter().fold((0.0, 0.0), |acc, &e| dd_add(acc, e));
    exps.iter().map(|&e| dd_div(e, sum)).collect()
}

#[test]
fn head_matches_extended_precision_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let k = rng.gen_range(2..40);
        let d = rng.gen_range(1..50);
        let mut head = Head::zeros(k, d);
        head.weight.iter_mut().for_each(|w| *w = rng.gen_range(-2.0..2.0));
        head.bias.iter_mut().for_each(|b| *b = rng.gen_range(-2.0..2.0));
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = head_forward(&x, &head).unwrap();
        let oracle = softmax_oracle(&head, &x);
        for (a, b) in p.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn predict_single_examples() {
    let clf = Classifier::new(
        vec![EncoderParams::new(10, 4, WINDOW, 1)],
        1,
        Head::zeros(3, 4),
    )
    .unwrap();
    let pad = best_chunk(&Document::from_ids(vec![]), 1);
    assert_eq!(predict_single(&clf, &Document::from_ids(vec![]), |_| Ok(pad.seq.clone())).unwrap(), 0);
    assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
}

#[test]
fn concat_zero_fills_missing_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let clf = random_classifier(&mut rng, 30, 4, 6, 5, WINDOW);
    let doc = random_doc(&mut rng, 300, 30);
    // A single-slot model that shares slot 1's encoder and head columns.
    let mut head = Head::zeros(5, 4);
    for j in 0..5 {
        head.weight[j * 4..(j + 1) * 4].copy_from_slice(&clf.head.weight[j * 24..j * 24 + 4]);
    }
    head.bias = clf.head.bias.clone();
    let single = Classifier::new(vec![clf.encoders[0].clone()], 1, head).unwrap();

    let inputs = vec![Some(disjoint_chunks(&doc, 6)[0].seq.clone()), None, None, None, None, None];
    let a = clf.probabilities(&inputs).unwrap();
    let b = single.probabilities(&inputs[..1]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-15);
    }
    assert_eq!(
        predict_concat(&clf, &doc, |d| disjoint_chunks(d, 6)).unwrap(),
        single.predict(&inputs[..1]).unwrap()
    );
}

#[test]
fn stride_1024_fills_three_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clf = random_classifier(&mut rng, 30, 4, 6, 5, WINDOW);
    let doc = random_doc(&mut rng, 1024, 30);
    let cfg = StrideConfig::new(64).unwrap();
    let inputs = extract_inputs(&StrategyKind::Stride { stride: 64 }, 6, &longdoc_core::chunker::LeadingTokens, &doc).unwrap();
    assert_eq!(inputs.iter().filter(|s| s.is_some()).count(), 3);
    let x = clf.features(&inputs).unwrap();
    let nonzero_slots = x.chunks(4).filter(|s| s.iter().any(|v| *v != 0.0)).count();
    assert_eq!(nonzero_slots, 3);
    predict_concat(&clf, &doc, |d| stride_chunks(d, &cfg)).unwrap();
}

#[test]
fn slot_permutation_with_permuted_head_is_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (dim, slots, k) = (3, 6, 4);
    let clf = random_classifier(&mut rng, 20, dim, slots, k, WINDOW);
    let doc = random_doc(&mut rng, 2900, 20);
    let inputs = extract_inputs(&StrategyKind::Concat512, slots, &longdoc_core::chunker::LeadingTokens, &doc).unwrap();
    let perm = [3usize, 0, 5, 1, 4, 2];

    let encoders = perm.iter().map(|&s| clf.encoders[s].clone()).collect();
    let mut head = clf.head.clone();
    for j in 0..k {
        for (new_slot, &old_slot) in perm.iter().enumerate() {
            for c in 0..dim {
                head.weight[j * dim * slots + new_slot * dim + c] =
                    clf.head.weight[j * dim * slots + old_slot * dim + c];
            }
        }
    }
    let permuted = Classifier::new(encoders, slots, head).unwrap();
    let permuted_inputs: Vec<_> = perm.iter().map(|&s| inputs[s].clone()).collect();
    let a = clf.probabilities(&inputs).unwrap();
    let b = permuted.probabilities(&permuted_inputs).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-14);
    }
}

/// A member whose bias makes it always vote `class`.
fn constant_member(class: usize, k: usize) -> Classifier {
    let mut head = Head::zeros(k, 2);
    head.bias[class] = 5.0;
    Classifier::new(vec![EncoderParams::new(10, 2, WINDOW, 0)], 1, head).unwrap()
}

#[test]
fn ensemble_abstention_follows_chunk_existence() {
    let k = 12;
    let ens = EnsembleModel {
        members: (0..6).map(|i| Some(constant_member(i, k))).collect(),
        num_classes: k,
    };
    let votes = ens.votes(&Document::from_ids(vec![3; 600])).unwrap();
    assert_eq!(votes.choices(), [Some(0), Some(1), None, None, None, None]);
    let votes = ens.votes(&Document::from_ids(vec![3; 3072])).unwrap();
    assert!(votes.choices().iter().all(Option::is_some));
    for i in 0..votes.voters() {
        assert!(votes.row_sum(i) <= 1);
    }

    let solo = EnsembleModel {
        members: vec![Some(constant_member(9, k)), None, None, None, None, None],
        num_classes: k,
    };
    assert_eq!(predict_ensemble(&solo, &Document::from_ids(vec![3; 2000])).unwrap(), 9);
    // Everyone abstains on an empty document; member 1 decides.
    assert_eq!(predict_ensemble(&solo, &Document::from_ids(vec![])).unwrap(), 9);
}

#[test]
fn lsm_sees_one_long_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let long = random_classifier(&mut rng, 25, 4, 1, 6, LONG_WINDOW);
    let mut short = long.clone();
    short.encoders[0].window = WINDOW;

    let tiny = random_doc(&mut rng, 10, 25);
    assert_eq!(
        predict_lsm(&long, &tiny).unwrap(),
        predict_single(&short, &tiny, |d| Ok(best_chunk(d, 1).seq)).unwrap()
    );

    let doc = random_doc(&mut rng, 5000, 25);
    let mut truncated = doc.clone();
    truncated.token_ids.truncate(LONG_WINDOW);
    assert_eq!(
        long.probabilities(&[Some(TokenSeq::from_ids(doc.token_ids[..LONG_WINDOW].to_vec()))]).unwrap(),
        long.probabilities(&[Some(TokenSeq::from_ids(truncated.token_ids.clone()))]).unwrap()
    );
    assert_eq!(predict_lsm(&long, &doc).unwrap(), predict_lsm(&long, &truncated).unwrap());
    assert!(predict_lsm(&short, &doc).is_err());
}

#[test]
fn logit_scaling_never_changes_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let clf = random_classifier(&mut rng, 30, 4, 6, 7, WINDOW);
        let len = rng.gen_range(0..3500);
        let doc = random_doc(&mut rng, len, 30);
        let inputs = extract_inputs(&StrategyKind::Concat512, 6, &longdoc_core::chunker::LeadingTokens, &doc).unwrap();
        let alpha = rng.gen_range(0.01..50.0);
        let mut scaled = clf.clone();
        scaled.head.weight.iter_mut().for_each(|w| *w *= alpha);
        scaled.head.bias.iter_mut().for_each(|b| *b *= alpha);
        assert_eq!(clf.predict(&inputs).unwrap(), scaled.predict(&inputs).unwrap());
    }
}

fn hyper(seed: u64) -> HyperParams {
    HyperParams { seed, ..HyperParams::default() }
}

#[test]
fn single_document_loss_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut doc = random_doc(&mut rng, 700, 40);
    doc.broad_y = 2;
    let vocab = longdoc_core::tokenizer::Vocab::from_token_streams(
        &[(0..37).map(|i| format!("t{i}")).collect::<Vec<_>>()],
        100,
        1,
    )
    .unwrap();
    for kind in [
        StrategyKind::Best512 { chunk_index: 1 },
        StrategyKind::Concat512,
        StrategyKind::Stride { stride: 128 },
        StrategyKind::Summarization512,
        StrategyKind::Lsm,
        StrategyKind::Ensemble,
    ] {
        let cfg = StrategyConfig::new(kind, task(5), HyperParams { learning_rate: 1e-3, ..hyper(1) });
        let out = train(&cfg, &[doc.clone()], &vocab, None).unwrap();
        let losses: Vec<f64> = out.trace.iter().map(|r| r.train_loss).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{kind}: {losses:?}");
    }
}

#[test]
fn equal_seeds_give_identical_models() {
    let ds = common::synthetic(&SynthSpec { docs: 120, classes: 4, seed: 2, ..SynthSpec::default() });
    for kind in [StrategyKind::Concat512, StrategyKind::Ensemble] {
        let cfg = StrategyConfig::new(kind, ds.broad.clone(), hyper(9));
        let a = train(&cfg, &ds.train, &ds.vocab, Some(&ds.test)).unwrap();
        let b = train(&cfg, &ds.train, &ds.vocab, Some(&ds.test)).unwrap();
        assert_eq!(a.model.body, b.model.body);
        assert_eq!(a.trace, b.trace);
        let c = train(&StrategyConfig::new(kind, ds.broad.clone(), hyper(10)), &ds.train, &ds.vocab, None).unwrap();
        assert_ne!(a.model.body, c.model.body);
    }
}

#[test]
fn learns_planted_signal() {
    let ds = common::synthetic(&SynthSpec { docs: 600, seed: 4, ..SynthSpec::default() });
    let cfg = StrategyConfig::new(StrategyKind::Best512 { chunk_index: 1 }, ds.broad.clone(), hyper(0));
    let out = train(&cfg, &ds.train, &ds.vocab, None).unwrap();
    let correct = ds
        .train
        .iter()
        .filter(|d| out.model.predict(d).unwrap() == d.broad_y)
        .count();
    assert!(correct as f64 / ds.train.len() as f64 >= 0.95);

    // A held-out document whose signal is class 7's token is classified as 7.
    let seven = ds.test.iter().find(|d| d.broad_y == 7).unwrap();
    assert_eq!(out.model.predict(seven).unwrap(), 7);
}

#[test]
fn ensemble_members_without_data_are_absent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let docs: Vec<Document> = (0..10)
        .map(|i| {
            let mut d = random_doc(&mut rng, 600, 30);
            d.broad_y = i % 3;
            d
        })
        .collect();
    let vocab = longdoc_core::tokenizer::Vocab::from_token_streams(
        &[(0..27).map(|i| format!("t{i}")).collect::<Vec<_>>()],
        100,
        1,
    )
    .unwrap();
    let cfg = StrategyConfig::new(StrategyKind::Ensemble, task(3), hyper(0));
    let out = train(&cfg, &docs, &vocab, Some(&docs)).unwrap();
    let ModelBody::Ensemble(ens) = &out.model.body else { panic!("not an ensemble") };
    let present: Vec<bool> = ens.members.iter().map(Option::is_some).collect();
    assert_eq!(present, [true, true, false, false, false, false]);
}

#[test]
fn checkpoints_roundtrip() {
    let ds = common::synthetic(&SynthSpec { docs: 40, classes: 4, seed: 1, ..SynthSpec::default() });
    let dir = tempfile::tempdir().unwrap();
    for (i, kind) in [StrategyKind::Stride { stride: 64 }, StrategyKind::Ensemble, StrategyKind::Best512 { chunk_index: 2 }]
        .into_iter()
        .enumerate()
    {
        let mut cfg = StrategyConfig::new(kind, ds.broad.clone(), HyperParams { epochs: 1, embed_dim: 8, ..hyper(3) });
        cfg.shared_encoder = i == 0;
        let out = train(&cfg, &ds.train, &ds.vocab, None).unwrap();
        let path = dir.path().join(kind.key());
        out.model.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back.config, out.model.config);
        assert_eq!(back.body, out.model.body);
        for d in &ds.test {
            assert_eq!(back.predict(d).unwrap(), out.model.predict(d).unwrap());
        }
    }
}

#[test]
fn config_validation() {
    assert!(StrategyKind::from_parts("stride", None, None).is_err());
    assert!(StrategyKind::from_parts("stride", None, Some(600)).is_err());
    assert!(StrategyKind::from_parts("concat512", Some(2), None).is_err());
    assert!(StrategyKind::from_parts("best512", Some(0), None).is_err());
    assert!(StrategyKind::from_parts("nope", None, None).is_err());
    assert_eq!(
        StrategyKind::from_parts("best512", Some(3), None).unwrap(),
        StrategyKind::Best512 { chunk_index: 3 }
    );
    let cfg = StrategyConfig::new(StrategyKind::Lsm, task(1), hyper(0));
    assert!(cfg.validate().is_err());
    let cfg = StrategyConfig::new(StrategyKind::Lsm, task(3), HyperParams { epochs: 0, ..hyper(0) });
    assert!(cfg.validate().is_err());
    assert_eq!(HyperParams::published().learning_rate, 3e-5);
    assert_eq!(HyperParams::published().batch_size, 8);
    assert_eq!(HyperParams::published().epochs, 5);
}

#[test]
fn pad_rows_stay_zero_through_training() {
    let ds = common::synthetic(&SynthSpec { docs: 50, classes: 3, min_len: 600, max_len: 700, seed: 6, ..SynthSpec::default() });
    let cfg = StrategyConfig::new(StrategyKind::Concat512, ds.broad.clone(), HyperParams { epochs: 2, ..hyper(0) });
    let out = train(&cfg, &ds.train, &ds.vocab, None).unwrap();
    let ModelBody::Single(clf) = &out.model.body else { panic!() };
    for enc in &clf.encoders {
        assert!(enc.row(PAD).iter().all(|&v| v == 0.0));
    }
}
