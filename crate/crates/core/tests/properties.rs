use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use turntaking::eval::{evaluate, EvalGroup, Metric};
use turntaking::model::{
    class_weights, likelihood_sequence, next_speaker, nll_loss, sample_conversation,
    speaking_probabilities, speaking_scores, weighted_loss, Conversation, Gap, Roster,
    ScoreParams, TurnClass,
};
use turntaking::neural::{Activation, DenseNet};
use turntaking::proclivity::{w_exp, w_sig, Proclivity, ProclivityCurve};
use turntaking::synthgen::{generate_dataset, true_inherent, true_memory, SynthConfig, TrueProclivity};
use turntaking::training::{Group, ModelBundle};

fn params_strategy(n: usize) -> impl Strategy<Value = ScoreParams> {
    (
        prop::collection::vec(0.01f64..2.0, n),
        prop::collection::vec(0.0f64..30.0, n),
    )
        .prop_map(|(pi, d)| ScoreParams::new(pi, d).unwrap())
}

fn gap_strategy() -> impl Strategy<Value = Gap> {
    prop_oneof![Just(Gap::Never), (2usize..80).prop_map(Gap::Turns)]
}

fn proclivity_strategy() -> impl Strategy<Value = Proclivity> {
    prop_oneof![
        Just(Proclivity::Zero),
        Just(Proclivity::ExpDecay),
        Just(Proclivity::Sigmoid),
        any::<u64>().prop_map(|s| Proclivity::Learned(DenseNet::new(&[1, 4, 1], Activation::Tanh, s).unwrap())),
    ]
}

/// Scores for one state: at most one member has gap 1.
fn state_strategy() -> impl Strategy<Value = (ScoreParams, Vec<Gap>, Proclivity)> {
    (2usize..8).prop_flat_map(|n| {
        (
            params_strategy(n),
            prop::collection::vec(gap_strategy(), n),
            0..n,
            any::<bool>(),
            proclivity_strategy(),
        )
            .prop_map(|(params, mut gaps, prev, has_prev, p)| {
                if has_prev {
                    gaps[prev] = Gap::Turns(1);
                }
                (params, gaps, p)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn probabilities_form_a_distribution((params, gaps, p) in state_strategy()) {
        let u = speaking_scores(&params, &p, &gaps);
        let probs = speaking_probabilities(&u).unwrap();
        prop_assert!(probs.iter().all(|&x| x >= 0.0));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (g, &x) in gaps.iter().zip(&probs) {
            if *g == Gap::Turns(1) {
                prop_assert_eq!(x, 0.0);
            }
        }
    }

    #[test]
    fn scaling_scores_changes_nothing((params, gaps, p) in state_strategy(), c in 0.01f64..100.0) {
        let u = speaking_scores(&params, &p, &gaps);
        let scaled = speaking_scores(&params.scaled(c).unwrap(), &p, &gaps);
        let a = speaking_probabilities(&u).unwrap();
        let b = speaking_probabilities(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(next_speaker(&u).unwrap(), next_speaker(&scaled).unwrap());
    }

    #[test]
    fn fixed_proclivities_vanish_off_support(delta in -1000i64..=0) {
        prop_assert_eq!(w_exp(delta), 0.0);
        prop_assert_eq!(w_sig(delta), 0.0);
    }

    #[test]
    fn sampler_is_valid_and_deterministic(
        params in (2usize..7).prop_flat_map(params_strategy),
        p in proclivity_strategy(),
        turns in 1usize..200,
        seed in any::<u64>(),
    ) {
        let a = sample_conversation(&params, &p, turns, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = sample_conversation(&params, &p, turns, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), turns);
        prop_assert!(a.speakers().windows(2).all(|w| w[0] != w[1]));
        prop_assert!(a.speakers().iter().all(|&s| s < params.len()));
    }

    #[test]
    fn class_weights_balance_classes(
        params in (3usize..6).prop_flat_map(params_strategy),
        turns in 1usize..300,
        seed in any::<u64>(),
    ) {
        let c = sample_conversation(&params, &Proclivity::ExpDecay, turns, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let w = class_weights(&c);
        let counts = w.counts();
        prop_assert_eq!(counts.iter().sum::<usize>(), turns);
        let present = counts.iter().filter(|&&k| k > 0).count() as f64;
        let total: f64 = w.weights().iter().sum();
        // each nonempty class contributes exactly T/4
        prop_assert!((total - present * turns as f64 / 4.0).abs() < 1e-9 * turns as f64);
        for class in TurnClass::ALL {
            if let Some(g) = w.class_weight(class) {
                prop_assert!((g * w.count(class) as f64 - turns as f64 / 4.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn losses_are_nonnegative_and_scale_invariant(
        params in (3usize..6).prop_flat_map(params_strategy),
        turns in 1usize..120,
        seed in any::<u64>(),
        c in 0.1f64..10.0,
    ) {
        let conv = sample_conversation(&params, &Proclivity::Sigmoid, turns, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let u = likelihood_sequence(&params, &Proclivity::Sigmoid, &conv).unwrap();
        let u2 = likelihood_sequence(&params.scaled(c).unwrap(), &Proclivity::Sigmoid, &conv).unwrap();
        let (l, lt) = (nll_loss(&u, &conv).unwrap(), weighted_loss(&u, &conv).unwrap());
        prop_assert!(l >= 0.0 && lt >= 0.0);
        prop_assert!((l - nll_loss(&u2, &conv).unwrap()).abs() < 1e-10);
        prop_assert!((lt - weighted_loss(&u2, &conv).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn synthetic_scores_stay_in_range(x in 0.1f64..=1.0) {
        let e = std::f64::consts::E;
        let pi = true_inherent(x);
        let d = true_memory(x);
        prop_assert!((0.1f64.sqrt() - 1e-12..=1.0 + 1e-12).contains(&pi));
        prop_assert!((2.5 * e - 1e-12..=10.0 * e + 1e-12).contains(&d));
    }

    #[test]
    fn network_snapshots_round_trip(seed in any::<u64>(), width in 1usize..6, sigmoid in any::<bool>()) {
        let act = if sigmoid { Activation::Sigmoid } else { Activation::Tanh };
        let mut net = DenseNet::new(&[1, width, 2, 1], act, seed).unwrap();
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            for v in layer.parameters_mut() {
                *v += 0.1 * (k as f64 + 1.0) + (seed % 97) as f64 * 1e-3;
            }
        }
        let text = net.to_snapshot_csv();
        let back = DenseNet::from_snapshot_csv(&text, act).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn smoothing_preserves_monotone_curves(mut values in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let gaps = (2..2 + values.len() as i64).collect();
        let curve = ProclivityCurve::new(gaps, values).unwrap();
        let smooth = curve.smoothed();
        prop_assert!(smooth.values().windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

#[test]
fn aggregate_is_turn_weighted_mean() {
    let config = SynthConfig {
        turns: 90,
        seed: 3,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&config, 1).unwrap();
    let mut groups: Vec<EvalGroup> = data.test.iter().map(EvalGroup::from).collect();
    // make group lengths differ
    let short = &groups[0].group;
    let conv = Conversation::new(short.conversation.speakers()[..17].to_vec(), 5).unwrap();
    groups[0].group = Group::new(short.id, short.roster.clone(), conv).unwrap();
    let e = evaluate(&ModelBundle::high_memory(), &groups).unwrap();
    for metric in Metric::ALL {
        let turns: usize = e.groups.iter().map(|g| g.turns).sum();
        let weighted: f64 = e.groups.iter().map(|g| g.get(metric) * g.turns as f64).sum::<f64>() / turns as f64;
        assert!((e.aggregate(metric) - weighted).abs() < 1e-12);
        let sum: f64 = e.groups.iter().map(|g| g.get(metric)).sum();
        assert!((e.sum(metric) - sum).abs() < 1e-12);
    }
}

#[test]
fn changing_proclivity_keeps_rosters() {
    let base = SynthConfig {
        turns: 40,
        seed: 12,
        ..SynthConfig::default()
    };
    let exp = generate_dataset(&base, 2).unwrap();
    let sig = generate_dataset(&SynthConfig { proclivity: TrueProclivity::Sigmoid, ..base }, 2).unwrap();
    let rosters = |d: &turntaking::synthgen::SynthDataset| -> Vec<Roster> {
        d.all_groups().map(|g| g.group.roster.clone()).collect()
    };
    assert_eq!(rosters(&exp), rosters(&sig));
    assert_ne!(exp.train[0].group.conversation, sig.train[0].group.conversation);
}
