use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replyclass_core::classifier::{
    argmax, build_dataset, evaluate_accuracy, featurize_context, history_ablation, loss_and_grad_features,
    smoothed_targets, train, ContextWindow, FeatureHasher, LabeledExample, SoftmaxModel, SparseFeatures,
    TrainingConfig, DOCTOR_MARKER, PATIENT_MARKER,
};
use replyclass_core::corpus::{group_turns, Conversation, ResponseTable, Speaker, Turn};
use replyclass_core::responseclasses::{Catalog, ClassIndex, ResponseClass};
use replyclass_core::Exec;

const FEATURES: u32 = 20;

fn random_model(k: usize, seed: u64) -> SoftmaxModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = SoftmaxModel::zeros(
        FeatureHasher::new(5, 0),
        (0..k as u32).collect(),
        String::new(),
        TrainingConfig::default(),
    );
    for c in 0..k {
        for f in 0..FEATURES {
            m.set_weight(c, f, rng.gen_range(-2.0..2.0));
        }
        m.bias[c] = rng.gen_range(-1.0..1.0);
    }
    m
}

fn random_batch(k: usize, n: usize, seed: u64) -> Vec<(SparseFeatures, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut idx: Vec<u32> = (0..FEATURES).collect();
            idx.shuffle(&mut rng);
            let mut x: SparseFeatures = idx[..rng.gen_range(1..8)]
                .iter()
                .map(|&f| (f, rng.gen_range(-1.5..1.5)))
                .collect();
            x.sort_by_key(|e| e.0);
            (x, rng.gen_range(0..k))
        })
        .collect()
}

fn loss(m: &SoftmaxModel, batch: &[(SparseFeatures, usize)], t: f64) -> f64 {
    loss_and_grad_features(m, batch, t, Exec::Sequential).unwrap().0
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Plain cross entropy, written without label smoothing.
fn plain_cross_entropy(m: &SoftmaxModel, batch: &[(SparseFeatures, usize)]) -> f64 {
    batch
        .iter()
        .map(|(x, y)| {
            let z = m.logits(x);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - z[*y]
        })
        .sum::<f64>()
        / batch.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(k in 2usize..=5, n in 1usize..=6, t in 0.0f64..0.5, seed: u64) {
        let model = random_model(k, seed);
        let batch = random_batch(k, n, seed ^ 1);
        let (_, grad) = loss_and_grad_features(&model, &batch, t, Exec::Sequential).unwrap();
        let h = 1e-5;
        let dense = grad.weights_dense(FEATURES as usize);
        for c in 0..k {
            for f in 0..FEATURES {
                let w = model.weight(c, f);
                let mut plus = model.clone();
                plus.set_weight(c, f, w + h);
                let mut minus = model.clone();
                minus.set_weight(c, f, w - h);
                let numeric = (loss(&plus, &batch, t) - loss(&minus, &batch, t)) / (2.0 * h);
                prop_assert!(rel_err(dense[c][f as usize], numeric) < 1e-4, "w[{c}][{f}] {} vs {numeric}", dense[c][f as usize]);
            }
            let mut plus = model.clone();
            plus.bias[c] += h;
            let mut minus = model.clone();
            minus.bias[c] -= h;
            let numeric = (loss(&plus, &batch, t) - loss(&minus, &batch, t)) / (2.0 * h);
            prop_assert!(rel_err(grad.bias[c], numeric) < 1e-4);
        }
    }

    #[test]
    fn loss_bounded_by_target_entropy(k in 2usize..=8, n in 1usize..=6, t in 0.0f64..1.0, seed: u64) {
        let model = random_model(k, seed);
        let batch = random_batch(k, n, seed ^ 2);
        let entropy = batch
            .iter()
            .map(|(_, y)| smoothed_targets(*y, k, t).iter().filter(|&&q| q > 0.0).map(|q| -q * q.ln()).sum::<f64>())
            .sum::<f64>() / n as f64;
        prop_assert!(loss(&model, &batch, t) >= entropy - 1e-12);
    }

    #[test]
    fn loss_reaches_entropy_when_prediction_is_target(k in 2usize..=8, y in 0usize..8, t in 0.01f64..1.0) {
        let y = y % k;
        let q = smoothed_targets(y, k, t);
        let mut m = SoftmaxModel::zeros(FeatureHasher::new(4, 0), (0..k as u32).collect(), String::new(), TrainingConfig::default());
        m.bias = q.iter().map(|v| v.ln()).collect();
        let h: f64 = q.iter().map(|v| -v * v.ln()).sum();
        prop_assert!((loss(&m, &[(vec![], y)], t) - h).abs() < 1e-9);
    }

    #[test]
    fn smoothed_targets_identities(k in 1usize..=50, y in 0usize..50, t in 0.0f64..1.0) {
        let y = y % k;
        let q = smoothed_targets(y, k, t);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if t > 0.0 {
            prop_assert!(q.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn unsmoothed_loss_is_cross_entropy(k in 2usize..=5, n in 1usize..=6, seed: u64) {
        let model = random_model(k, seed);
        let batch = random_batch(k, n, seed ^ 3);
        prop_assert!((loss(&model, &batch, 0.0) - plain_cross_entropy(&model, &batch)).abs() < 1e-12);
    }

    #[test]
    fn argmax_ignores_logit_shift(k in 2usize..=5, shift in -50.0f64..50.0, seed: u64) {
        let model = random_model(k, seed);
        let mut shifted = model.clone();
        shifted.bias.iter_mut().for_each(|b| *b += shift);
        for (x, _) in random_batch(k, 5, seed ^ 4) {
            prop_assert_eq!(argmax(&model.probabilities(&x)), argmax(&shifted.probabilities(&x)));
        }
    }

    #[test]
    fn featurization_invariants(
        speakers in prop::collection::vec(any::<bool>(), 1..20),
        lens in prop::collection::vec(1usize..30, 20),
        max_turns in 1usize..8,
        max_tokens in 1usize..60,
    ) {
        let turns: Vec<Turn> = speakers
            .iter()
            .zip(&lens)
            .enumerate()
            .map(|(i, (&p, &len))| {
                let text: Vec<String> = (0..len).map(|j| format!("t{i}x{j}")).collect();
                Turn::new(if p { Speaker::Patient } else { Speaker::Doctor }, text.join(" "))
            })
            .collect();
        let cfg = TrainingConfig { max_turns, max_tokens, ..Default::default() };
        let w = featurize_context(&turns, &cfg);
        prop_assert!(w.tokens.len() <= max_tokens);
        let is_marker = |t: &String| t == PATIENT_MARKER || t == DOCTOR_MARKER;
        let markers: Vec<&String> = w.tokens.iter().filter(|t| is_marker(t)).collect();
        prop_assert!(markers.len() <= max_turns);

        // markers follow the speaker order of the kept turns, and alternate
        let grouped = group_turns(&turns);
        let kept = &grouped[grouped.len().saturating_sub(max_turns)..];
        let expected: Vec<&str> = kept
            .iter()
            .map(|t| if t.speaker == Speaker::Patient { PATIENT_MARKER } else { DOCTOR_MARKER })
            .collect();
        let tail = &expected[expected.len() - markers.len()..];
        prop_assert_eq!(markers.iter().map(|s| s.as_str()).collect::<Vec<_>>(), tail.to_vec());
        prop_assert!(markers.windows(2).all(|p| p[0] != p[1]));

        let full: usize = kept.iter().map(|t| 1 + t.text.split_whitespace().count()).sum();
        if full <= max_tokens {
            prop_assert!(is_marker(&w.tokens[0]));
            prop_assert_eq!(w.tokens.len(), full);
        }
    }
}

#[test]
fn uniform_prediction_loss_is_log_k() {
    for k in 2..=10 {
        let m = SoftmaxModel::zeros(FeatureHasher::new(4, 0), (0..k).collect(), String::new(), TrainingConfig::default());
        for t in [0.0, 0.1, 0.7] {
            let l = loss(&m, &[(vec![(1, 0.5)], 0), (vec![], (k - 1) as usize)], t);
            assert!((l - (k as f64).ln()).abs() < 1e-9);
        }
    }
}

fn classes(n: u32) -> Catalog {
    Catalog::new(
        (0..n)
            .map(|i| ResponseClass {
                id: i,
                name: format!("class {i}"),
                exemplar_text: format!("reply {i}"),
                member_cluster_ids: [i].into(),
                member_response_ids: [i].into(),
            })
            .collect(),
    )
    .unwrap()
}

fn planted(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class_id = rng.gen_range(0..3u32);
            let mut tokens: Vec<String> = (0..rng.gen_range(3..15)).map(|_| format!("noise{}", rng.gen_range(0..200))).collect();
            let at = rng.gen_range(0..=tokens.len());
            tokens.insert(at, format!("planted{class_id}"));
            tokens.insert(0, PATIENT_MARKER.into());
            LabeledExample {
                context: ContextWindow {
                    tokens,
                    source_conversation: format!("c{i}"),
                    position: 1,
                },
                class_id,
            }
        })
        .collect()
}

#[test]
fn planted_token_is_learned() {
    let cat = classes(3);
    let data = planted(300, 1);
    let cfg = TrainingConfig::default();
    let trained = train(&data, &cat, &cfg, Exec::default()).unwrap();
    assert!(evaluate_accuracy(&trained.model, &data, Exec::default()) >= 0.95);
    for c in 0..3 {
        let x = trained.model.hasher.features(&ContextWindow {
            tokens: vec![PATIENT_MARKER.into(), format!("planted{c}")],
            ..Default::default()
        });
        assert_eq!(trained.model.class_ids[argmax(&trained.model.probabilities(&x))], c);
    }
}

#[test]
fn training_is_deterministic_across_exec_modes() {
    let cat = classes(3);
    let data = planted(200, 2);
    let cfg = TrainingConfig {
        epochs: 5,
        ..Default::default()
    };
    let a = train(&data, &cat, &cfg, Exec::Sequential).unwrap();
    let b = train(&data, &cat, &cfg, Exec::Parallel).unwrap();
    let c = train(&data, &cat, &cfg, Exec::Parallel).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.curve), bits(&b.curve));
    assert_eq!(bits(&b.curve), bits(&c.curve));
    assert_eq!(serde_json::to_string(&a.model).unwrap(), serde_json::to_string(&c.model).unwrap());
}

#[test]
fn history_length_does_not_matter_when_signal_is_last() {
    let table = ResponseTable::from_counts(&[("reply 0", 10), ("reply 1", 10), ("reply 2", 10)]).unwrap();
    let cat = classes(3);
    let index = ClassIndex::new(&cat, &table).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let convs: Vec<Conversation> = (0..240)
        .map(|i| {
            let mut turns = Vec::new();
            for _ in 0..rng.gen_range(0..3) {
                turns.push(Turn::patient(format!("chat{} chat{}", rng.gen_range(0..50), rng.gen_range(0..50))));
                turns.push(Turn::doctor(format!("filler{}", rng.gen_range(0..50))));
            }
            let c = rng.gen_range(0..3);
            turns.push(Turn::patient(format!("chat{} signal{c}", rng.gen_range(0..50))));
            turns.push(Turn::doctor(format!("Reply {c}.")));
            Conversation {
                id: format!("h{i}"),
                turns,
            }
        })
        .collect();
    let cfg = TrainingConfig::default();
    assert_eq!(build_dataset(&convs, &index, &cfg, Exec::default()).len(), 240);
    let rows = history_ablation(&convs, &index, &cat, &cfg, &[1, 2], Exec::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.accuracy >= 0.9), "{rows:?}");
    assert!((rows[0].accuracy - rows[1].accuracy).abs() <= 0.1);
}
