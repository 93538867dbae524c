use std::sync::Arc;

use proptest::prelude::*;
use timemark::analysis::{false_acceptance_prob, false_rejection_prob, token_match_prob};
use timemark::attack::{FeatureContext, SurrogateClassifier};
use timemark::bch::{BchCode, DecodeStatus, FieldElement, InfoWord, CODE_LENGTH, CORRECTABLE};
use timemark::keychain::{derive_key, evolve, FixedClock, KeyVault, Role, TimeKey};
use timemark::wm::{
    allocate, apply_bias, derive_seed, greenlist, permute, prefix_hash, GreenMask, PrefixDigest,
    Seed, Stage, WatermarkConfig,
};
use timemark::Error;

fn field() -> impl Strategy<Value = FieldElement> {
    (0u8..64).prop_map(|v| FieldElement::new(v).unwrap())
}

fn info() -> impl Strategy<Value = InfoWord> {
    (0u16..1024).prop_map(|v| InfoWord::from_u16(v).unwrap())
}

proptest! {
    #[test]
    fn field_distributes(a in field(), b in field(), c in field()) {
        prop_assert_eq!(a * (b + c), a * b + a * c);
        prop_assert_eq!(a * b, b * a);
    }

    #[test]
    fn code_is_linear(r1 in info(), r2 in info()) {
        let code = BchCode::standard();
        prop_assert_eq!(code.encode(r1) ^ code.encode(r2), code.encode(r1 ^ r2));
        prop_assert!(code.is_codeword(code.encode(r1)));
    }

    #[test]
    fn up_to_t_errors_decode(r in info(), errs in proptest::sample::subsequence((0..CODE_LENGTH).collect::<Vec<_>>(), 0..=CORRECTABLE)) {
        let code = BchCode::standard();
        let word = errs.iter().fold(code.encode(r), |w, &i| w.flip(i));
        let out = code.decode(word);
        prop_assert_eq!(out.status, DecodeStatus::Corrected);
        prop_assert_eq!(out.info, Some(r));
        prop_assert_eq!(out.errors_corrected, errs.len());
    }

    #[test]
    fn bias_keeps_mass_and_ratios(
        raw in proptest::collection::vec(0.001f64..1.0, 16),
        members in proptest::sample::subsequence((0..16usize).collect::<Vec<_>>(), 8),
        bit in 0u8..=1,
        delta in 0.0f64..8.0,
    ) {
        let total: f64 = raw.iter().sum();
        let dist: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mask = GreenMask::from_members(16, members);
        let out = apply_bias(&dist, &mask, bit, delta).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for v in 0..16 {
            for w in 0..16 {
                if mask.contains(v) == mask.contains(w) {
                    let lhs = out[v] / out[w];
                    let rhs = dist[v] / dist[w];
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
                }
            }
        }
    }

    #[test]
    fn greenlist_is_exact_half_and_matches_permutation(bytes in any::<[u8; 32]>(), half in 1u32..300) {
        let vocab = 2 * half;
        let seed = Seed(bytes);
        let mask = greenlist(&seed, vocab).unwrap();
        prop_assert_eq!(mask.count(), half as usize);
        let perm = permute(&seed, vocab);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..vocab).collect::<Vec<_>>());
        let from_perm = GreenMask::from_members(vocab as usize, perm[..half as usize].iter().map(|&t| t as usize));
        prop_assert_eq!(mask, from_perm);
    }

    #[test]
    fn odd_vocab_is_rejected(bytes in any::<[u8; 32]>(), half in 0u32..300) {
        prop_assert!(matches!(greenlist(&Seed(bytes), 2 * half + 1), Err(Error::Config(_))));
    }

    #[test]
    fn allocation_is_balanced(alpha in 1usize..8, reps in 1usize..12) {
        let cfg = WatermarkConfig {
            alpha,
            min_length: 63 * (alpha + reps),
            ..WatermarkConfig::default()
        };
        cfg.validate().unwrap();
        let mut s1 = [0usize; 63];
        let mut s2 = [0usize; 63];
        for i in 1..=cfg.min_length {
            let j = allocate(i, &cfg).unwrap();
            prop_assert!((1..=63).contains(&j));
            match cfg.stage_of(i) {
                Stage::Verification => s1[j - 1] += 1,
                Stage::Recovery => s2[j - 1] += 1,
            }
        }
        prop_assert!(s1.iter().all(|&c| c == alpha));
        prop_assert!(s2.iter().all(|&c| c == reps));
        prop_assert!(allocate(0, &cfg).is_err());
        prop_assert!(allocate(cfg.min_length + 1, &cfg).is_err());
    }

    #[test]
    fn prefix_hash_is_stable_and_order_sensitive(tokens in proptest::collection::vec(0u32..1024, 0..40)) {
        let a = prefix_hash(&tokens, 1024).unwrap();
        prop_assert_eq!(a, prefix_hash(&tokens, 1024).unwrap());
        let mut rev = tokens.clone();
        rev.reverse();
        if rev != tokens {
            prop_assert_ne!(a, prefix_hash(&rev, 1024).unwrap());
        }
        let mut bad = tokens.clone();
        bad.push(1024);
        let out_of_range = matches!(prefix_hash(&bad, 1024), Err(Error::TokenOutOfRange { .. }));
        prop_assert!(out_of_range);
    }

    #[test]
    fn seed_depends_on_every_input(k in any::<u64>(), r in info(), flip in 0usize..10, d in any::<[u8; 32]>()) {
        let key = TimeKey::from_seed(k);
        let digest = PrefixDigest(d);
        let s1 = derive_seed(&key, Some(r), &digest);
        prop_assert_eq!(s1, derive_seed(&key, Some(r), &digest));
        prop_assert_ne!(s1, derive_seed(&key, None, &digest));
        let r2 = r ^ InfoWord::from_u16(1 << (9 - flip)).unwrap();
        prop_assert_ne!(s1, derive_seed(&key, Some(r2), &digest));
        prop_assert_ne!(s1, derive_seed(&evolve(&key), Some(r), &digest));
    }

    #[test]
    fn chain_replay_is_bitwise_identical(seed in any::<u64>(), n in 0u64..20) {
        let clock = Arc::new(FixedClock(0));
        let mut a = KeyVault::new(TimeKey::from_seed(seed), 60, clock.clone()).unwrap();
        let mut b = KeyVault::new(TimeKey::from_seed(seed), 60, clock).unwrap();
        for _ in 0..n {
            a.advance();
            b.advance();
        }
        for t in 0..=n {
            let ka = a.read_key(Role::Authority, t).unwrap();
            prop_assert_eq!(&ka, &b.read_key(Role::Authority, t).unwrap());
            prop_assert_eq!(&ka, &derive_key(&TimeKey::from_seed(seed), t));
        }
    }

    /// Any interleaving of reads and advances leaves exactly one audit
    /// record per call, in call order.
    #[test]
    fn audit_log_is_complete(ops in proptest::collection::vec((any::<bool>(), any::<bool>(), 0u64..12), 0..60)) {
        let mut v = KeyVault::new(TimeKey::from_seed(1), 60, Arc::new(FixedClock(5))).unwrap();
        for (i, &(is_read, provider, idx)) in ops.iter().enumerate() {
            if is_read {
                let role = if provider { Role::Provider } else { Role::Authority };
                let current = v.current_index();
                let res = v.read_key(role, idx);
                let expect_ok = idx <= current && (!provider || idx == current);
                prop_assert_eq!(res.is_ok(), expect_ok);
                let rec = v.audit_log().last().unwrap();
                prop_assert_eq!(rec.granted, expect_ok);
                prop_assert_eq!(rec.requested_index, idx);
                prop_assert_eq!(rec.requester_role, Some(role));
            } else {
                v.advance();
            }
            prop_assert_eq!(v.audit_log().len(), i + 1);
        }
        for (i, rec) in v.audit_log().iter().enumerate() {
            prop_assert_eq!(rec.seq, i as u64);
        }
    }

    #[test]
    fn provider_never_reads_the_past(advances in 1u64..30, back in 1u64..30) {
        let mut v = KeyVault::new(TimeKey::from_seed(2), 60, Arc::new(FixedClock(0))).unwrap();
        for _ in 0..advances {
            v.advance();
        }
        let target = advances.saturating_sub(back);
        if target < advances {
            let denied = matches!(
                v.read_key(Role::Provider, target),
                Err(Error::ProviderPastAccessDenied { .. })
            );
            prop_assert!(denied);
        }
    }

    #[test]
    fn token_match_monotone(d1 in 0.0f64..6.0, d2 in 0.0f64..6.0, g1 in 0.01f64..0.99, g2 in 0.01f64..0.99) {
        let (dl, dh) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (gl, gh) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        prop_assert!(token_match_prob(dl, gl).unwrap() <= token_match_prob(dh, gl).unwrap());
        prop_assert!(token_match_prob(dl, gl).unwrap() <= token_match_prob(dl, gh).unwrap());
    }

    #[test]
    fn error_rates_monotone(p1 in 0.5f64..1.0, p2 in 0.5f64..1.0, f1 in 0.51f64..1.0, f2 in 0.51f64..1.0) {
        let (pl, ph) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let (fl, fh) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let fr_l = false_rejection_prob(pl, 315, 0.65).unwrap().log_value;
        let fr_h = false_rejection_prob(ph, 315, 0.65).unwrap().log_value;
        prop_assert!(fr_h <= fr_l + 1e-12);
        let fa_l = false_acceptance_prob(315, fl).unwrap().log_value;
        let fa_h = false_acceptance_prob(315, fh).unwrap().log_value;
        prop_assert!(fa_h <= fa_l + 1e-12);
    }

    #[test]
    fn score_sign_matches_prediction(w in proptest::collection::vec(-5.0f64..5.0, 32), bias in -3.0f64..3.0, prev in proptest::option::of(0u32..64), tok in 0u32..64) {
        let clf = SurrogateClassifier { weights: w, bias };
        let ctx = FeatureContext { stage: Stage::Recovery, prev };
        let s = timemark::attack::surrogate_score(&clf, ctx, tok);
        let h = clf.prob_one(ctx, tok);
        prop_assert!(h > 0.0 && h < 1.0);
        prop_assert_eq!(clf.predict(ctx, tok), u8::from(s >= 0.0));
        prop_assert!(((h / (1.0 - h)).ln() - s).abs() < 1e-9);
    }
}
