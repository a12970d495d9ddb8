mod common;

use std::collections::BTreeSet;

use cfaudit_core::augment::{self, AugmentVars, ContextRule, DrawMode, LabeledExample};
use cfaudit_core::format::{parse_scm, scm_to_json};
use cfaudit_core::generator::{random_model, GeneratorConfig, RandomModel};
use cfaudit_core::inference::{counterfactual, guess_counterfactual, map_context, posterior};
use cfaudit_core::invariance::{self, Constraint, ConstraintSet, PartitionVerdict, SupportCheck};
use cfaudit_core::{ratio, Assignment, CounterfactualQuery, Distribution, FloatScm, Value};
use proptest::prelude::*;

use common::{as_map, oracle_counterfactual};

fn model(seed: u64) -> RandomModel {
    random_model(seed, &GeneratorConfig::default())
}

fn x_support(m: &RandomModel) -> Vec<Value> {
    m.scm.marginal(&m.input_var).unwrap().support_values()
}

fn vars(m: &RandomModel) -> AugmentVars {
    AugmentVars::new(&m.input_var, &m.label_var, &m.context_var)
}

fn one_per_support(m: &RandomModel) -> Vec<LabeledExample> {
    let label = m.scm.domain(&m.label_var).unwrap()[0].clone();
    x_support(m).into_iter().map(|x| LabeledExample::new(x, label.clone())).collect()
}

fn sources(aug: &augment::AugmentedDataset<cfaudit_core::Prob>) -> BTreeSet<(Value, Value)> {
    aug.augmented.iter().map(|a| (a.source_x.clone(), a.x_prime.clone())).collect()
}

fn constraint_set(n: usize, edges: &[(usize, usize)], support: &[bool]) -> ConstraintSet {
    let domain: Vec<Value> = (0..n).map(|i| Value::new(format!("v{i}"))).collect();
    ConstraintSet {
        input_var: "X".into(),
        support: domain.iter().zip(support).filter(|(_, s)| **s).map(|(d, _)| d.clone()).collect(),
        constraints: edges
            .iter()
            .map(|&(a, b)| Constraint { x: domain[a % n].clone(), peers: vec![domain[b % n].clone()] })
            .collect(),
        domain,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_ignores_constraint_order(
        n in 1usize..8,
        edges in prop::collection::vec((0usize..8, 0usize..8), 0..12),
        support in prop::collection::vec(any::<bool>(), 8),
        rotate in 0usize..12,
    ) {
        let a = constraint_set(n, &edges, &support);
        let mut b = a.clone();
        if !b.constraints.is_empty() {
            let r = rotate % b.constraints.len();
            b.constraints.rotate_left(r);
            b.constraints.reverse();
        }
        prop_assert_eq!(invariance::partition_from(&a), invariance::partition_from(&b));
    }

    #[test]
    fn partition_is_idempotent_and_covers_support(
        n in 1usize..8,
        edges in prop::collection::vec((0usize..8, 0usize..8), 0..12),
        support in prop::collection::vec(any::<bool>(), 8),
    ) {
        let cs = constraint_set(n, &edges, &support);
        let p = invariance::partition_from(&cs);
        let covered: Vec<&Value> = p.classes.iter().flatten().collect();
        let unique: BTreeSet<&Value> = covered.iter().copied().collect();
        prop_assert_eq!(covered.len(), unique.len());
        prop_assert_eq!(unique, cs.support.iter().collect::<BTreeSet<_>>());
        prop_assert!(p.classes.iter().all(|c| !c.is_empty()));

        let again = ConstraintSet {
            constraints: p.classes.iter().flat_map(|c| c.iter().map(|x| Constraint { x: x.clone(), peers: c.clone() })).collect(),
            ..cs.clone()
        };
        prop_assert_eq!(invariance::partition_from(&again), p.clone());
        let verdict = invariance::compare_partitions(&p, &p).unwrap();
        prop_assert_eq!(verdict, PartitionVerdict::Equal);
    }

    #[test]
    fn guess_constraints_refine_counterfactual_ones(seed in any::<u64>()) {
        let m = model(seed);
        prop_assert_eq!(invariance::check_support_subset(&m.scm, &m.input_var, &m.context_var).unwrap(), SupportCheck::Holds);
        let report = invariance::audit(&m.scm, &m.input_var, &m.context_var).unwrap();
        prop_assert_ne!(report.verdict, PartitionVerdict::Inconsistent);
        for c in &report.cda_constraints.constraints {
            let cf = report.cf_constraints.peers_of(&c.x);
            prop_assert!(c.peers.iter().all(|p| cf.contains(p)));
        }
    }

    #[test]
    fn counterfactuals_match_brute_force(seed in any::<u64>()) {
        let m = model(seed);
        let zs = m.scm.domain(&m.context_var).unwrap().to_vec();
        for x in x_support(&m) {
            for z in &zs {
                let q = CounterfactualQuery::new(
                    &m.input_var,
                    Assignment::new().with(&m.context_var, z.clone()),
                    Assignment::new().with(&m.input_var, x.clone()),
                );
                let d = counterfactual(&m.scm, &q).unwrap();
                prop_assert!(d.is_normalized());
                let oracle = oracle_counterfactual(
                    &m.scm,
                    &m.input_var,
                    &[(m.context_var.clone(), z.clone())],
                    &[(m.input_var.clone(), x.clone())],
                ).unwrap();
                prop_assert_eq!(as_map(&d), oracle);
            }
        }
    }

    #[test]
    fn guess_counterfactual_matches_brute_force(seed in any::<u64>()) {
        let m = model(seed);
        for x in x_support(&m) {
            let e = Assignment::new().with(&m.input_var, x.clone());
            let zmap = map_context(&m.scm, &m.context_var, &e).unwrap().value;
            for z in m.scm.domain(&m.context_var).unwrap() {
                let d = guess_counterfactual(&m.scm, &m.input_var, &m.context_var, z, &e).unwrap();
                let oracle = oracle_counterfactual(
                    &m.scm,
                    &m.input_var,
                    &[(m.context_var.clone(), z.clone())],
                    &[(m.input_var.clone(), x.clone()), (m.context_var.clone(), zmap.clone())],
                ).unwrap();
                prop_assert_eq!(as_map(&d), oracle);
            }
        }
    }

    #[test]
    fn posteriors_are_normalized_and_map_is_maximal(seed in any::<u64>()) {
        let m = model(seed);
        for x in x_support(&m) {
            let e = Assignment::new().with(&m.input_var, x.clone());
            let post = posterior(&m.scm, &[&m.context_var], &e).unwrap();
            prop_assert!(post.is_normalized());
            let est = map_context(&m.scm, &m.context_var, &e).unwrap();
            let best = post.mass_of(&est.value);
            prop_assert!(post.entries().iter().all(|(_, p)| *p <= best));
            let first = post.entries().iter().find(|(_, p)| *p == best).unwrap();
            prop_assert_eq!(&first.0[0], &est.value);
        }
    }

    #[test]
    fn augmentation_modes_nest(seed in any::<u64>()) {
        let m = model(seed);
        let data = one_per_support(&m);
        let v = vars(&m);
        let g = augment::guess_cda(&m.scm, &v, &data, DrawMode::Enumerate).unwrap();
        let f = augment::full_cda(&m.scm, &v, &data, DrawMode::Enumerate).unwrap();
        let p0 = augment::posterior_cda(&m.scm, &v, &data, &ContextRule::Threshold(ratio(0, 1)), DrawMode::Enumerate).unwrap();
        prop_assert!(sources(&g).is_subset(&sources(&f)));
        prop_assert_eq!(sources(&p0), sources(&f));
        for aug in [&g, &f, &p0] {
            for a in &aug.augmented {
                let original = data.iter().find(|d| d.x == a.source_x).unwrap();
                prop_assert_eq!(&a.y, &original.y);
            }
        }
    }

    #[test]
    fn sampled_draws_stay_in_support(seed in any::<u64>(), draw_seed in any::<u64>(), k in 1usize..4) {
        let m = model(seed);
        let data = one_per_support(&m);
        let v = vars(&m);
        let draw = DrawMode::Sample { k, seed: draw_seed };
        let full = sources(&augment::full_cda(&m.scm, &v, &data, DrawMode::Enumerate).unwrap());
        let sampled = augment::full_cda(&m.scm, &v, &data, draw).unwrap();
        prop_assert_eq!(sampled.augmented.len(), k * data.len() * m.scm.marginal(&m.context_var).unwrap().support_values().len());
        prop_assert!(sources(&sampled).is_subset(&full));
        let guess = sources(&augment::guess_cda(&m.scm, &v, &data, DrawMode::Enumerate).unwrap());
        prop_assert!(sources(&augment::guess_cda(&m.scm, &v, &data, draw).unwrap()).is_subset(&guess));
        let again = augment::full_cda(&m.scm, &v, &data, draw).unwrap();
        prop_assert_eq!(sampled, again);
    }

    #[test]
    fn sampled_contexts_stay_in_posterior_support(seed in any::<u64>(), ctx_seed in any::<u64>(), k in 1usize..4) {
        let m = model(seed);
        let data = one_per_support(&m);
        let v = vars(&m);
        let aug = augment::posterior_cda(&m.scm, &v, &data, &ContextRule::Sample { k, seed: ctx_seed }, DrawMode::Enumerate).unwrap();
        for a in &aug.augmented {
            let post = posterior(&m.scm, &[&m.context_var], &Assignment::new().with(&m.input_var, a.source_x.clone())).unwrap();
            let cu = Value::new(a.context_used.to_string());
            prop_assert!(post.mass_of(&cu) > ratio(0, 1));
        }
    }

    #[test]
    fn float_instantiation_agrees_with_exact(seed in any::<u64>()) {
        let m = model(seed);
        let float: FloatScm = parse_scm(&scm_to_json(&m.scm)).unwrap();
        let exact = m.scm.marginal(&m.input_var).unwrap();
        let approx = float.marginal(&m.input_var).unwrap();
        for ((k1, p), (k2, q)) in exact.entries().iter().zip(approx.entries()) {
            prop_assert_eq!(k1, k2);
            prop_assert!((cfaudit_core::Probability::to_f64(p) - q).abs() < 1e-9);
        }
        let a = invariance::audit(&m.scm, &m.input_var, &m.context_var).unwrap();
        let b = invariance::audit(&float, &m.input_var, &m.context_var).unwrap();
        prop_assert_eq!(a.cf_partition, b.cf_partition);
        prop_assert_eq!(a.cda_partition, b.cda_partition);
    }

    #[test]
    fn model_and_distribution_documents_round_trip(seed in any::<u64>()) {
        let m = model(seed);
        let back: cfaudit_core::ExactScm = parse_scm(&scm_to_json(&m.scm)).unwrap();
        prop_assert_eq!(&back, &m.scm);
        let d = m.scm.marginal(&m.input_var).unwrap();
        prop_assert_eq!(Distribution::from_doc(&d.to_doc()).unwrap(), d);
    }
}

/// `X = Z + U` with `Z ∈ {0, 1}`, `U ∈ {0, 1, 2}` and positive weights.
fn staircase(wz: [u32; 2], wu: [u32; 3]) -> cfaudit_core::ExactScm {
    let norm = |w: &[u32]| -> Vec<cfaudit_core::Prob> {
        let t: u32 = w.iter().sum();
        w.iter().map(|&x| ratio(x as i64, t as i64)).collect()
    };
    let z = common::vals(&["0", "1"]);
    let u = common::vals(&["0", "1", "2"]);
    cfaudit_core::Scm::new(
        vec![
            cfaudit_core::VariableSpec::exogenous("Z", z.clone()),
            cfaudit_core::VariableSpec::exogenous("U", u.clone()),
            cfaudit_core::VariableSpec::endogenous("X", ["0", "1", "2", "3"]),
        ],
        vec![
            cfaudit_core::ExogenousPrior::new("Z", z.iter().cloned().zip(norm(&wz))),
            cfaudit_core::ExogenousPrior::new("U", u.iter().cloned().zip(norm(&wu))),
        ],
        vec![cfaudit_core::StructuralEquation::tabulate("X", &[("Z", &z), ("U", &u)], |t| {
            let s: u32 = t.iter().map(|v| v.as_str().parse::<u32>().unwrap()).sum();
            Value::new(s.to_string())
        })],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // X=1 guesses U=0 iff Z=1 strictly wins its posterior (ties go to Z=0);
    // X=2 guesses U=2 iff Z=0 wins or ties. Only when both happen do the
    // guessed peer sets {0,1} and {2,3} stay apart.
    #[test]
    fn staircase_refinement_is_predicted_by_map_masses(
        wz in prop::array::uniform2(1u32..10),
        wu in prop::array::uniform3(1u32..10),
    ) {
        let m = staircase(wz, wu);
        let r = invariance::audit(&m, "X", "Z").unwrap();
        let x1_low = wz[1] * wu[0] > wz[0] * wu[1];
        let x2_high = wz[0] * wu[2] >= wz[1] * wu[1];
        let expected = if x1_low && x2_high { PartitionVerdict::CdaStrictlyFiner } else { PartitionVerdict::Equal };
        prop_assert_eq!(r.verdict, expected);
        prop_assert_eq!(r.cf_partition.len(), 1);
    }
}
