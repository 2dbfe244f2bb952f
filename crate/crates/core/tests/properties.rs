use proptest::prelude::*;

use tsa_core::features::Subset;
use tsa_core::harness::{self, KernelKind, NoiseMode, SchemeSpec};
use tsa_core::kbstore;
use tsa_core::vbpmkl;

fn kernel_kind() -> impl Strategy<Value = KernelKind> {
    prop_oneof![Just(KernelKind::Gaussian), Just(KernelKind::Polynomial)]
}

fn noise_mode() -> impl Strategy<Value = NoiseMode> {
    prop_oneof![Just(NoiseMode::Clean), Just(NoiseMode::TestNoisy), Just(NoiseMode::TrainAndTestNoisy)]
}

fn scheme() -> impl Strategy<Value = SchemeSpec> {
    let subsets = prop::sample::subsequence(vec![Subset::F1, Subset::F2, Subset::F3], 1..=3)
        .prop_flat_map(|subs| {
            let n = subs.len();
            (Just(subs), prop::collection::vec(kernel_kind(), n))
        })
        .prop_map(|(subs, kinds)| SchemeSpec::subsets(&subs.into_iter().zip(kinds).collect::<Vec<_>>()));
    let spec = prop_oneof![subsets, kernel_kind().prop_map(SchemeSpec::union)];
    (spec, noise_mode()).prop_map(|(s, n)| s.with_noise(n))
}

proptest! {
    #[test]
    fn split_partitions_indices(len in 2usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let n_train = ((len as f64 * frac) as usize).clamp(1, len - 1);
        let s = kbstore::split(len, n_train, seed).unwrap();
        prop_assert_eq!(s.train.len(), n_train);
        prop_assert!(s.train.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.test.windows(2).all(|w| w[0] < w[1]));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
        prop_assert_eq!(kbstore::split(len, n_train, seed).unwrap(), s);
    }

    #[test]
    fn scheme_strings_round_trip(spec in scheme()) {
        let text = spec.to_string();
        let parsed: SchemeSpec = text.parse().unwrap();
        prop_assert_eq!(parsed, spec);
    }

    #[test]
    fn probabilities_form_a_distribution(
        mean in prop::collection::vec(-3.0f64..3.0, 2..6),
        // Predictive deviations are sqrt(1 + k'Σk) >= 1; 64 nodes resolve
        // ratios up to about 2 to this tolerance.
        spread in prop::collection::vec(1.0f64..2.0, 6),
    ) {
        let dev = &spread[..mean.len()];
        let (p, mass) = vbpmkl::class_probabilities(&mean, dev).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {}", mass);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_count_every_sample(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let to_label = |b: bool| if b { 1 } else { -1 };
        let preds: Vec<i32> = pairs.iter().map(|p| to_label(p.0)).collect();
        let labels: Vec<i32> = pairs.iter().map(|p| to_label(p.1)).collect();
        let m = harness::metrics(&preds, &labels).unwrap();
        let agree = pairs.iter().filter(|p| p.0 == p.1).count();
        prop_assert_eq!(m.confusion.total(), pairs.len());
        prop_assert!((m.accuracy - agree as f64 / pairs.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn child_seeds_separate_streams(master in any::<u64>(), i in 0u64..1000, j in 0u64..1000) {
        prop_assume!(i != j);
        prop_assert_eq!(kbstore::child_seed(master, 0, i), kbstore::child_seed(master, 0, i));
        prop_assert_ne!(kbstore::child_seed(master, 0, i), kbstore::child_seed(master, 0, j));
        prop_assert_ne!(kbstore::child_seed(master, 0, i), kbstore::child_seed(master, 1, i));
    }
}
