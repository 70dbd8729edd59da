use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dsample::coarsening::{identify_complete, marginalize_observed};
use dsample::data::{assign_folds, read_csv, write_csv, ObservedRecord};
use dsample::estimators::{estimate_all, if_mar, if_np, mar_remainder, np_remainder, EstimateOptions, IfContext, RemainderRow};
use dsample::oracle::{random_coarsened_law, MissingOutcomeLaw};
use dsample::sim::{generate_dataset, ScenarioConfig};
use dsample::{Arm, Dataset};

fn f(p: &BigRational) -> f64 {
    p.to_f64().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_the_records(n in 1usize..300, k in 1usize..12, seed: u64) {
        prop_assume!(k <= n);
        let folds = assign_folds(n, k, seed).unwrap();
        let mut seen = vec![0; n];
        let mut sizes = Vec::new();
        for j in 0..k {
            let m = folds.members(j);
            sizes.push(m.len());
            for &i in &m {
                seen[i] += 1;
            }
            // a single fold trains on everything
            let mut t = folds.training(j);
            if k > 1 {
                t.extend(&m);
            }
            t.sort_unstable();
            prop_assert_eq!(t, (0..n).collect::<Vec<_>>());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(folds, assign_folds(n, k, seed).unwrap());
    }

    #[test]
    fn dataset_csv_round_trips(
        rows in prop::collection::vec((-1e6f64..1e6, any::<bool>(), 0u8..3, -1e3f64..1e3), 1..40)
    ) {
        let records: Vec<ObservedRecord<f64>> = rows
            .iter()
            .map(|&(l, a, stage, y)| ObservedRecord {
                covariates: vec![l, l / 3.0],
                treatment: Arm::from_bit(a),
                initial: stage == 1,
                follow_up: stage == 2,
                outcome: (stage > 0).then_some(y),
            })
            .collect();
        let d = Dataset::new(vec!["L1".into(), "L2".into()], records).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back: Dataset<f64> = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn observed_law_reconstructs_complete_law(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_coarsened_law::<BigRational, _>(&mut rng).unwrap();
        let back = identify_complete(&marginalize_observed(&p)).unwrap();
        prop_assert_eq!(back, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn influence_functions_have_mean_zero(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let law = MissingOutcomeLaw::<BigRational>::random(&mut rng);
        let nuisance = law.nuisance();
        let records = law.observed_records();
        for arm in Arm::BOTH {
            let np = IfContext::new(arm, &nuisance, f(&law.tau(arm)));
            let mar = IfContext::new(arm, &nuisance, f(&law.tau_mar(arm)));
            let a: f64 = records.iter().map(|(o, p)| f(p) * if_np(o, &np).unwrap()).sum();
            let b: f64 = records.iter().map(|(o, p)| f(p) * if_mar(o, &mar).unwrap()).sum();
            prop_assert!(a.abs() < 1e-10 && b.abs() < 1e-10, "{a} {b}");
        }
    }

    /// The bias of the one-step estimator at wrong nuisances, computed by
    /// enumeration, equals the closed-form remainder, and vanishes when either
    /// the propensity side or the outcome side is right.
    #[test]
    fn remainder_matches_enumeration(seed: u64, shift in -0.3f64..0.3, scale in 0.5f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let law = MissingOutcomeLaw::<BigRational>::random(&mut rng);
        let truth = law.nuisance();
        let records = law.observed_records();
        let perturb = |outcome: bool, weights: bool| {
            truth.map(|l, arm, mut v| {
                let wobble = 1.0 + 0.1 * (l[0] as f64 - l[1] as f64 + arm.index() as f64);
                if outcome {
                    v.mu_initial += shift * wobble;
                    v.mu_follow_up -= 0.5 * shift;
                    v.gamma = (v.gamma * scale).clamp(0.05, 0.95);
                    v.mu_combined += shift;
                }
                if weights {
                    v.pi = (v.pi * scale * wobble).clamp(0.05, 0.95);
                    v.eta = (v.eta / scale).clamp(0.05, 1.0);
                }
                v
            })
        };
        for (outcome, weights) in [(true, false), (false, true), (true, true)] {
            let fitted = perturb(outcome, weights);
            for arm in Arm::BOTH {
                let rows: Vec<RemainderRow<f64>> = law
                    .strata
                    .iter()
                    .enumerate()
                    .map(|(i, s)| RemainderRow {
                        weight: f(&s.weight),
                        truth: law.values(i, arm),
                        fitted: fitted.cells[&s.covariates][arm.index()],
                    })
                    .collect();
                let np = IfContext::new(arm, &fitted, f(&law.tau(arm)));
                let bias: f64 = records.iter().map(|(o, p)| f(p) * if_np(o, &np).unwrap()).sum();
                let r = np_remainder(&rows).unwrap();
                prop_assert!((bias - r).abs() < 1e-10, "np {bias} vs {r}");
                if !(outcome && weights) {
                    prop_assert!(r.abs() < 1e-10, "np remainder {r} with one side correct");
                }
                let mar = IfContext::new(arm, &fitted, f(&law.tau_mar(arm)));
                let bias: f64 = records.iter().map(|(o, p)| f(p) * if_mar(o, &mar).unwrap()).sum();
                let r = mar_remainder(&rows).unwrap();
                prop_assert!((bias - r).abs() < 1e-10, "mar {bias} vs {r}");
            }
        }
    }

    /// With every outcome seen at the first stage the nonparametric influence
    /// function is the usual AIPW one, whatever the follow-up nuisances are.
    #[test]
    fn full_first_stage_reduces_to_aipw(seed: u64, eta in 0.1f64..1.0, mu_s in -2f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let law = MissingOutcomeLaw::<BigRational>::random(&mut rng);
        let nuisance = law.nuisance().map(|_, _, mut v| {
            v.gamma = 1.0;
            v.eta = eta;
            v.mu_follow_up = mu_s;
            v
        });
        for arm in Arm::BOTH {
            let tau = 0.25;
            let ctx = IfContext::new(arm, &nuisance, tau);
            for (mut o, _) in law.observed_records() {
                if o.outcome.is_none() {
                    o.outcome = Some(1.5);
                }
                o.initial = true;
                o.follow_up = false;
                let l: Vec<i64> = o.covariates.iter().map(|&x| x as i64).collect();
                let v = nuisance.cells[&l][arm.index()];
                let treated = if o.treatment == arm { 1.0 } else { 0.0 };
                let aipw = v.mu_initial - tau + treated / v.pi * (o.outcome.unwrap() - v.mu_initial);
                prop_assert!((if_np(&o, &ctx).unwrap() - aipw).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// With a single fold nothing depends on record order beyond the IRLS
    /// stopping tolerance.
    #[test]
    fn estimates_ignore_record_order(rep in 0u64..1000, shuffle: u64) {
        let cfg = ScenarioConfig { n: 800, seed: 5, beta_ra: 0.032, ..ScenarioConfig::default() };
        let sim = generate_dataset(&cfg, rep).unwrap();
        let mut order: Vec<usize> = (0..sim.dataset.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(shuffle));
        let permuted = sim.dataset.permuted(&order).unwrap();
        let opts = EstimateOptions { k: 1, ..EstimateOptions::default() };
        let a = estimate_all(&sim.dataset, &cfg.true_specs(), &opts).unwrap();
        let b = estimate_all(&permuted, &cfg.true_specs(), &opts).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.estimator, y.estimator);
            prop_assert!((x.estimate - y.estimate).abs() < 1e-7, "{:?} {} {}", x.estimator, x.estimate, y.estimate);
            prop_assert!((x.variance - y.variance).abs() < 1e-6 * x.variance.max(1e-3));
            let (sx, sy) = (x.selection.as_ref(), y.selection.as_ref());
            prop_assert_eq!(
                sx.map(|s| s.arms.iter().map(|a| a.selected).collect::<Vec<_>>()),
                sy.map(|s| s.arms.iter().map(|a| a.selected).collect::<Vec<_>>())
            );
        }
    }
}
