//! Property suites for the information measures and the exponent programs.

use privexp_core::{
    chernoff, chernoff_coeff, kl, solve_nu, solve_nu_tau, Alphabet, ConditionalPmf, ConstraintSet,
    DistortionSpec, Pmf, SourceModel,
};
use proptest::prelude::*;

fn pmf_pair_strategy() -> impl Strategy<Value = (Pmf, Pmf)> {
    (2usize..=5)
        .prop_flat_map(|k| {
            let weights = prop::collection::vec(1e-3f64..1.0, k);
            (Just(k), weights.clone(), weights)
        })
        .prop_map(|(k, w0, w1)| {
            let alphabet = Alphabet::new((0..k).map(|i| i as f64).collect()).unwrap();
            (
                Pmf::new_normalized(alphabet.clone(), w0).unwrap(),
                Pmf::new_normalized(alphabet, w1).unwrap(),
            )
        })
}

proptest! {
    #[test]
    fn kl_nonnegative_and_zero_only_near_equality((p, q) in pmf_pair_strategy()) {
        let d = kl(&p, &q).unwrap();
        prop_assert!(d >= 0.0);
        // Pinsker: total variation is at most sqrt(d/2), so a vanishing
        // divergence forces near-identical pmfs.
        if d < 1e-10 {
            prop_assert!(p.total_variation(&q).unwrap() < 1e-5);
        }
        prop_assert_eq!(kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn chernoff_coeff_swap_symmetry((p, q) in pmf_pair_strategy(), tau in 0.0f64..=1.0) {
        let a = chernoff_coeff(&p, &q, tau).unwrap();
        let b = chernoff_coeff(&q, &p, 1.0 - tau).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn chernoff_below_both_divergences((p, q) in pmf_pair_strategy()) {
        let (c, _) = chernoff(&p, &q).unwrap();
        let d01 = kl(&p, &q).unwrap();
        let d10 = kl(&q, &p).unwrap();
        prop_assert!(c <= d01.min(d10) + 1e-9);
    }

    #[test]
    fn chernoff_coeff_concave_in_tau((p, q) in pmf_pair_strategy(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let mid = 0.5 * (t1 + t2);
        let lhs = chernoff_coeff(&p, &q, mid).unwrap();
        let rhs = 0.5 * (chernoff_coeff(&p, &q, t1).unwrap() + chernoff_coeff(&p, &q, t2).unwrap());
        prop_assert!(lhs >= rhs - 1e-12);
    }

    #[test]
    fn joint_convexity_of_coefficient_and_information(
        (p1, q1) in pmf_pair_strategy().prop_filter("fixed size", |(p, _)| p.len() == 3),
        (p2, q2) in pmf_pair_strategy().prop_filter("fixed size", |(p, _)| p.len() == 3),
        tau in 0.0f64..=1.0,
    ) {
        let alphabet = p1.alphabet().clone();
        for lambda in [0.25, 0.5, 0.75] {
            let mix = |a: &Pmf, b: &Pmf| {
                let probs = a
                    .probs()
                    .iter()
                    .zip(b.probs())
                    .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                    .collect();
                Pmf::new_normalized(alphabet.clone(), probs).unwrap()
            };
            let pm = mix(&p1, &p2);
            let qm = mix(&q1, &q2);

            let lhs = chernoff_coeff(&pm, &qm, tau).unwrap();
            let rhs = lambda * chernoff_coeff(&p1, &q1, tau).unwrap()
                + (1.0 - lambda) * chernoff_coeff(&p2, &q2, tau).unwrap();
            prop_assert!(lhs <= rhs + 1e-9, "coefficient: {} > {}", lhs, rhs);

            let (cm, _) = chernoff(&pm, &qm).unwrap();
            let (c1, _) = chernoff(&p1, &q1).unwrap();
            let (c2, _) = chernoff(&p2, &q2).unwrap();
            prop_assert!(cm <= lambda * c1 + (1.0 - lambda) * c2 + 1e-9);
        }
    }

    #[test]
    fn data_processing_never_increases_divergences(
        (p, q) in pmf_pair_strategy(),
        targets in prop::collection::vec(0usize..3, 5),
    ) {
        // Deterministic symbol merge y -> targets[y] (restricted to the image
        // so the pushforward alphabet is exact).
        let k = p.len();
        let map: Vec<usize> = targets[..k].to_vec();
        let mut image: Vec<usize> = map.clone();
        image.sort_unstable();
        image.dedup();
        let out_alphabet = Alphabet::new((0..image.len()).map(|i| i as f64).collect()).unwrap();
        let push = |src: &Pmf| {
            let mut probs = vec![0.0; image.len()];
            for (y, &pb) in src.probs().iter().enumerate() {
                let slot = image.iter().position(|&t| t == map[y]).unwrap();
                probs[slot] += pb;
            }
            Pmf::new_normalized(out_alphabet.clone(), probs).unwrap()
        };
        let gp = push(&p);
        let gq = push(&q);
        prop_assert!(kl(&gp, &gq).unwrap() <= kl(&p, &q).unwrap() + 1e-12);
        let (c_after, _) = chernoff(&gp, &gq).unwrap();
        let (c_before, _) = chernoff(&p, &q).unwrap();
        prop_assert!(c_after <= c_before + 1e-9);
    }
}

/// Every tau value probed sits below the saddle value: the fixed-tau minimum
/// lower-bounds the minimal Chernoff information.
#[test]
fn nu_tau_sandwiches_below_nu() {
    let a = Alphabet::new(vec![0.0, 2.0]).unwrap();
    let source = SourceModel::new(
        Pmf::new(a.clone(), vec![0.75, 0.25]).unwrap(),
        Pmf::new(a.clone(), vec![0.2, 0.8]).unwrap(),
        0.5,
        0.5,
    )
    .unwrap();
    let spec = DistortionSpec::new(
        a.clone(),
        a,
        vec![vec![0.0, 0.0], vec![2.0, 0.0]],
        vec![vec![false, true], vec![false, false]],
    )
    .unwrap();
    for s in [0.3, 0.8] {
        let cons = ConstraintSet::new(spec.clone(), s, s).unwrap();
        let nu = solve_nu(&source, &cons).unwrap();
        for k in 0..=10 {
            let tau = k as f64 / 10.0;
            let inner = solve_nu_tau(&source, &cons, tau).unwrap();
            assert!(
                inner.value <= nu.value + 1e-6,
                "s = {s}, tau = {tau}: {} > {}",
                inner.value,
                nu.value
            );
        }
    }
}

/// Exactness of forbidden-pair zeros survives serialization round trips.
#[test]
fn policy_masks_survive_json_round_trip() {
    use privexp_core::io::PolicyPairDoc;
    let a = Alphabet::new(vec![0.0, 2.0]).unwrap();
    let rows = vec![vec![1.0, 0.0], vec![0.3, 0.7]];
    let policy = privexp_core::PolicyPair::new(
        ConditionalPmf::new(a.clone(), a.clone(), rows.clone()).unwrap(),
        ConditionalPmf::new(a.clone(), a, rows).unwrap(),
    )
    .unwrap();
    let json = serde_json::to_string(&PolicyPairDoc::from_policy(&policy)).unwrap();
    let back: PolicyPairDoc = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_policy().unwrap(), policy);
}
