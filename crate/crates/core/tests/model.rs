use std::collections::BTreeSet;

use actorlens_core::model::{self, Classifier, FeatureVector, Label, LabelRecord, ModelConfig, ModelError, FEATURE_NAMES};
use actorlens_core::synth;
use actorlens_core::telemetry::{MatchRecord, MemberKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random feature vectors whose class is a threshold rule on two features.
fn threshold_corpus(n: usize, seed: u64) -> Vec<(FeatureVector, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut f = FeatureVector::zeros();
            for name in FEATURE_NAMES {
                f.set(name, rng.gen_range(0.0..100.0));
            }
            let idle = rng.gen_range(0.0..1.0);
            let die = rng.gen_range(0.0..1.0);
            f.set("idle_time_per", idle);
            f.set("die_teams_per", die);
            let label = if idle >= 0.6 || die >= 0.6 { Label::Actor } else { Label::Normal };
            (f, label)
        })
        .collect()
}

#[test]
fn threshold_rule_is_learned_from_forty_labels() {
    let data = threshold_corpus(60, 5);
    let (train, held_out) = data.split_at(40);
    let h = Classifier::fit(train, &ModelConfig::with_seed(1)).unwrap();
    let correct = held_out.iter().filter(|(f, l)| h.classify(f).0 == *l).count();
    assert!(correct as f64 / held_out.len() as f64 >= 0.9, "{correct}/20");
}

#[test]
fn threshold_rule_accuracy_holds_across_corpora() {
    let mut total = 0.0;
    for seed in 0..10 {
        let data = threshold_corpus(60, 100 + seed);
        let h = Classifier::fit(&data[..40], &ModelConfig::with_seed(seed)).unwrap();
        total += data[40..].iter().filter(|(f, l)| h.classify(f).0 == *l).count() as f64 / 20.0;
    }
    assert!(total / 10.0 >= 0.9, "{}", total / 10.0);
}

#[test]
fn fit_is_deterministic_for_a_seed() {
    let data = threshold_corpus(60, 8);
    let probe = threshold_corpus(30, 9);
    let a = Classifier::fit(&data[..40], &ModelConfig::with_seed(4)).unwrap();
    let b = Classifier::fit(&data[..40], &ModelConfig::with_seed(4)).unwrap();
    for (f, _) in &probe {
        assert_eq!(a.actor_probability(f).to_bits(), b.actor_probability(f).to_bits());
    }
}

#[test]
fn separable_labels_are_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let samples: Vec<(FeatureVector, Label)> = (0..60)
        .map(|i| {
            let mut f = FeatureVector::zeros();
            for name in FEATURE_NAMES {
                f.set(name, rng.gen_range(0.0..1.0));
            }
            let actor = i % 2 == 0;
            f.set("idle_time", if actor { 200.0 + i as f64 } else { i as f64 });
            (f, if actor { Label::Actor } else { Label::Normal })
        })
        .collect();
    let h = Classifier::fit(&samples, &ModelConfig::default()).unwrap();
    assert!(samples.iter().all(|(f, l)| h.classify(f).0 == *l));
}

#[test]
fn too_few_labels_per_class_is_reported() {
    let data = threshold_corpus(80, 1);
    let mut few: Vec<(FeatureVector, Label)> = data.iter().filter(|(_, l)| *l == Label::Normal).take(10).cloned().collect();
    few.extend(data.iter().filter(|(_, l)| *l == Label::Actor).take(2).cloned());
    match Classifier::fit(&few, &ModelConfig::default()) {
        Err(ModelError::InsufficientLabels { actors, normals, .. }) => {
            assert_eq!((actors, normals), (2, 10));
        }
        other => panic!("{other:?}"),
    }
}

fn corpus() -> Vec<MatchRecord> {
    let mix = synth::parse_mix("normal=0.5,afk=0.25,feeder=0.25").unwrap();
    synth::generate_corpus(4, &mix, 21).unwrap().matches
}

#[test]
fn predictions_skip_human_labeled_targets() {
    let matches = corpus();
    let src: &[MatchRecord] = &matches;
    let keys: Vec<MemberKey> = matches.iter().flat_map(|m| m.member_keys()).collect();
    let labels: Vec<LabelRecord> = keys
        .iter()
        .take(8)
        .enumerate()
        .map(|(i, k)| LabelRecord::human(k, if i % 2 == 0 { Label::Actor } else { Label::Normal }, "t"))
        .collect();
    let h = model::train(&labels, src, &ModelConfig::default()).unwrap();
    let labeled: BTreeSet<MemberKey> = labels.iter().map(LabelRecord::key).collect();
    let preds = model::predict(&h, &keys, &labeled, src, "t").unwrap();
    assert_eq!(preds.len(), keys.len() - 8);
    assert!(preds.iter().all(|p| !labeled.contains(&p.key())));
    assert!(preds.iter().all(|p| (0.5..=1.0).contains(&p.confidence)));
}

#[test]
fn duplicate_of_a_labeled_actor_is_predicted_actor() {
    let matches = corpus();
    let keys: Vec<MemberKey> = matches[0].member_keys().collect();
    let actor = &keys[0];
    let mut samples: Vec<(FeatureVector, Label)> = keys[1..4]
        .iter()
        .map(|k| (model::extract_features(&matches[0], &k.player_id).unwrap(), Label::Normal))
        .collect();
    let actor_f = model::extract_features(&matches[0], &actor.player_id).unwrap();
    for _ in 0..3 {
        samples.push((actor_f.clone(), Label::Actor));
    }
    let h = Classifier::fit(&samples, &ModelConfig::default()).unwrap();
    assert_eq!(h.classify(&actor_f).0, Label::Actor);
}
