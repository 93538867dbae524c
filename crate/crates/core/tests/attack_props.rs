use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use timemark::attack::{
    build_triplets, collect_corpus, decoder_accepts, evaluate_attack, feature_bucket,
    heldout_accuracy, label_agreement, train_surrogate, AttackConfig, AttackCorpus, AttackMode,
    FeatureContext, TrainingTriplet,
};
use timemark::keychain::{derive_key, TimeKey};
use timemark::wm::Stage;
use timemark::Error;

fn random_triplets(n: usize, vocab: u32, rng: &mut ChaCha20Rng) -> Vec<(FeatureContext, u32)> {
    (0..n)
        .map(|_| {
            let stage = if rng.random() {
                Stage::Verification
            } else {
                Stage::Recovery
            };
            let prev = rng.random_bool(0.9).then(|| rng.random_range(0..vocab));
            (FeatureContext { stage, prev }, rng.random_range(0..vocab))
        })
        .collect()
}

#[test]
fn separable_labels_are_learned() {
    let acfg = AttackConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let label = |(c, t): (FeatureContext, u32)| TrainingTriplet {
        context: c,
        token: t,
        label: (feature_bucket(c, t, acfg.feature_buckets) % 2) as u8,
    };
    let train: Vec<_> = random_triplets(20_000, 16, &mut rng)
        .into_iter()
        .map(label)
        .collect();
    let test: Vec<_> = random_triplets(5_000, 16, &mut rng)
        .into_iter()
        .map(label)
        .collect();
    let (clf, _) = train_surrogate(&train, &acfg).unwrap();
    let acc = heldout_accuracy(&clf, &test).unwrap();
    assert!(acc.balanced > 0.95, "{acc:?}");
}

fn split(corpus: &AttackCorpus, held: usize) -> (AttackCorpus, AttackCorpus) {
    let mut train = corpus.clone();
    let test_entries = train.entries.split_off(corpus.entries.len() - held);
    let test = AttackCorpus {
        cfg: corpus.cfg,
        entries: test_entries,
    };
    (train, test)
}

#[test]
fn shuffled_labels_carry_no_signal() {
    let acfg = AttackConfig::default();
    let corpus = collect_corpus(AttackMode::FixedPayloadBaseline, 40, &acfg).unwrap();
    let (train, test) = split(&corpus, 10);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let shuffle = |mut t: Vec<TrainingTriplet>, rng: &mut ChaCha20Rng| {
        let mut labels: Vec<u8> = t.iter().map(|x| x.label).collect();
        labels.shuffle(rng);
        t.iter_mut().zip(labels).for_each(|(x, y)| x.label = y);
        t
    };
    let tr = shuffle(build_triplets(&train), &mut rng);
    let te = shuffle(build_triplets(&test), &mut rng);
    let (clf, _) = train_surrogate(&tr, &acfg).unwrap();
    let acc = heldout_accuracy(&clf, &te).unwrap();
    assert!(acc.z_score.abs() < 3.0, "{acc:?}");
}

#[test]
fn attacker_labels_versus_truth() {
    let acfg = AttackConfig::default();
    let base = collect_corpus(AttackMode::FixedPayloadBaseline, 20, &acfg).unwrap();
    assert_eq!(label_agreement(&base), 1.0);
    let tm = collect_corpus(AttackMode::TimeMark, 100, &acfg).unwrap();
    let agree = label_agreement(&tm);
    assert!((agree - 0.5).abs() < 0.02, "{agree}");
    let payloads: std::collections::HashSet<_> =
        tm.entries.iter().map(|e| e.true_payload).collect();
    assert!(payloads.len() > 90);
}

#[test]
fn baseline_learnability_grows_with_data() {
    let acfg = AttackConfig::default();
    let corpus = collect_corpus(AttackMode::FixedPayloadBaseline, 30, &acfg).unwrap();
    let (train, test) = split(&corpus, 6);
    let train = build_triplets(&train);
    let test = build_triplets(&test);
    let accs: Vec<f64> = [100usize, 1_000, 10_000]
        .iter()
        .map(|&n| {
            let (clf, _) = train_surrogate(&train[..n], &acfg).unwrap();
            heldout_accuracy(&clf, &test).unwrap().balanced
        })
        .collect();
    assert!(accs.windows(2).all(|w| w[1] > w[0]), "{accs:?}");
    assert!(accs[2] > 0.7, "{accs:?}");
}

#[test]
fn timemark_corpora_stay_at_chance() {
    let runs = 10;
    let mut significant = 0;
    for seed in 0..runs {
        let acfg = AttackConfig {
            corpus_docs: 60,
            forged_docs: 2,
            seed: 100 + seed,
            ..AttackConfig::default()
        };
        let res = evaluate_attack(AttackMode::TimeMark, &acfg).unwrap();
        significant += usize::from(res.heldout.z_score > 3.0);
        assert_eq!(res.forged_passes, 0);
    }
    // at the 3-sigma level each run trips with probability ~0.00135
    assert!(
        significant <= 1,
        "{significant} of {runs} runs above 3 sigma"
    );
}

#[test]
fn side_by_side_attack() {
    let acfg = AttackConfig::default();
    let base = evaluate_attack(AttackMode::FixedPayloadBaseline, &acfg).unwrap();
    let tm = evaluate_attack(AttackMode::TimeMark, &acfg).unwrap();
    assert!(
        base.heldout.z_score >= 3.0 && base.heldout.ci95[0] > 0.5,
        "{:?}",
        base.heldout
    );
    assert!(
        tm.heldout.ci95[0] <= 0.5 && 0.5 <= tm.heldout.ci95[1],
        "{:?}",
        tm.heldout
    );
    assert!(
        base.forged_pass_rate > 0.5,
        "baseline forgeries pass {}",
        base.forged_pass_rate
    );
    assert_eq!(tm.forged_passes, 0);
    assert!(tm.false_acceptance_floor < 1e-7);
    let json = serde_json::to_value(&base).unwrap();
    assert_eq!(json["mode"], "fixed_payload_baseline");
}

#[test]
fn decoders_accept_genuine_documents_only_in_their_window() {
    let acfg = AttackConfig::default();
    let corpus = collect_corpus(AttackMode::FixedPayloadBaseline, 2, &acfg).unwrap();
    let root = TimeKey::from_seed(timemark::encoder::derive_subseed(
        "attack/root",
        acfg.seed,
        0,
    ));
    let key = derive_key(&root, acfg.target_window);
    let doc = timemark::encoder::WatermarkedDocument::new(corpus.entries[0].tokens.clone());
    let cfg = corpus.cfg;
    for mode in [AttackMode::FixedPayloadBaseline, AttackMode::TimeMark] {
        assert!(decoder_accepts(mode, &doc, acfg.target_window, &key, &cfg, acfg.context).unwrap());
    }
    // the baseline decoder reads the time from R, so a claim for another
    // window fails even under the right key
    assert!(!decoder_accepts(
        AttackMode::FixedPayloadBaseline,
        &doc,
        acfg.target_window + 1,
        &key,
        &cfg,
        acfg.context
    )
    .unwrap());
}

#[test]
fn divergence_is_reported() {
    let acfg = AttackConfig {
        learning_rate: 1e6,
        ..AttackConfig::default()
    };
    let corpus = collect_corpus(AttackMode::FixedPayloadBaseline, 2, &acfg).unwrap();
    let err = train_surrogate(&build_triplets(&corpus), &acfg).unwrap_err();
    assert!(
        matches!(err, Error::TrainingDiverged { epoch: 1, .. }),
        "{err}"
    );
    assert!(train_surrogate(&[], &AttackConfig::default()).is_err());
}
