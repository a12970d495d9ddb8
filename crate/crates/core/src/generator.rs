//! Seeded random models for property tests.
//!
//! Each model has 2–3 exogenous variables `U1..` and 1–2 endogenous
//! variables `V1..`, domains of size 2–3 labelled `"0"`, `"1"`, `"2"`. Prior
//! weights are small integers (zero with probability `zero_mass`, at least
//! one positive entry per prior) normalized to exact rationals. Equation
//! outputs are uniform over the child's domain. The input variable is the
//! last endogenous variable and always has the context `U1` and at least one
//! other variable among its parents; the label variable is the last
//! exogenous variable.
//!
//! With probability `additive_input` the input equation is instead
//! `U1 + c·Uj` for a random other exogenous `Uj` and `1 ≤ c < |U1|`, so that
//! different contexts collide on the same input value.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scm::{cartesian, ExogenousPrior, Scm, StructuralEquation, Value, VariableSpec};

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub exogenous: (usize, usize),
    pub endogenous: (usize, usize),
    pub domain_size: (usize, usize),
    pub endogenous_domain_size: (usize, usize),
    /// Probability that a prior entry gets zero mass.
    pub zero_mass: f64,
    pub max_weight: u32,
    /// Probability that the input equation is the additive `U1 + c·Uj`.
    pub additive_input: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            exogenous: (2, 3),
            endogenous: (1, 2),
            domain_size: (2, 3),
            endogenous_domain_size: (2, 3),
            zero_mass: 0.25,
            max_weight: 4,
            additive_input: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomModel {
    pub seed: u64,
    pub scm: Scm<BigRational>,
    pub input_var: String,
    pub context_var: String,
    pub label_var: String,
}

pub fn random_model(seed: u64, cfg: &GeneratorConfig) -> RandomModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_exo = rng.gen_range(cfg.exogenous.0..=cfg.exogenous.1);
    let n_endo = rng.gen_range(cfg.endogenous.0..=cfg.endogenous.1);
    let domain = |rng: &mut ChaCha8Rng, size: (usize, usize)| -> Vec<Value> {
        let n = rng.gen_range(size.0..=size.1);
        (0..n).map(|i| Value::new(i.to_string())).collect()
    };

    let mut variables = Vec::new();
    let mut priors = Vec::new();
    for i in 1..=n_exo {
        let name = format!("U{i}");
        let dom = domain(&mut rng, cfg.domain_size);
        let mut weights: Vec<u32> = dom
            .iter()
            .map(|_| if rng.gen_bool(cfg.zero_mass) { 0 } else { rng.gen_range(1..=cfg.max_weight) })
            .collect();
        if weights.iter().all(|&w| w == 0) {
            let j = rng.gen_range(0..weights.len());
            weights[j] = 1;
        }
        let total: u32 = weights.iter().sum();
        priors.push(ExogenousPrior::new(
            &name,
            dom.iter().cloned().zip(weights.iter().map(|&w| BigRational::new(BigInt::from(w), BigInt::from(total)))),
        ));
        variables.push(VariableSpec::exogenous(&name, dom));
    }

    let mut equations = Vec::new();
    for i in 1..=n_endo {
        let name = format!("V{i}");
        let is_input = i == n_endo;
        if is_input && rng.gen_bool(cfg.additive_input) {
            let (eq, spec) = additive_input(&mut rng, &name, &variables[..n_exo]);
            equations.push(eq);
            variables.push(spec);
            continue;
        }
        let dom = domain(&mut rng, cfg.endogenous_domain_size);
        // candidate parents: all exogenous plus earlier endogenous
        let candidates: Vec<usize> = (0..variables.len()).collect();
        let mut parents: Vec<usize> = candidates.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        if is_input && !parents.contains(&0) {
            parents.push(0);
        }
        if is_input && !parents.iter().any(|&p| p > 0) {
            parents.push(rng.gen_range(1..variables.len()));
        }
        if parents.is_empty() {
            parents.push(*candidates.choose(&mut rng).expect("at least one candidate"));
        }
        parents.sort_unstable();
        let parent_domains: Vec<&[Value]> = parents.iter().map(|&p| variables[p].domain.as_slice()).collect();
        let table =
            cartesian(&parent_domains).into_iter().map(|t| (t, dom[rng.gen_range(0..dom.len())].clone())).collect();
        let parent_names: Vec<&str> = parents.iter().map(|&p| variables[p].name.as_str()).collect();
        equations.push(StructuralEquation::new(&name, &parent_names, table));
        variables.push(VariableSpec::endogenous(&name, dom));
    }

    RandomModel {
        seed,
        scm: Scm::new(variables, priors, equations),
        input_var: format!("V{n_endo}"),
        context_var: "U1".into(),
        label_var: format!("U{n_exo}"),
    }
}

/// `X = U1 + c·Uj` over integer-labelled domains, with `1 ≤ c < |U1|` so
/// that distinct contexts can produce the same input.
fn additive_input(rng: &mut ChaCha8Rng, name: &str, exogenous: &[VariableSpec]) -> (StructuralEquation, VariableSpec) {
    let j = rng.gen_range(1..exogenous.len());
    let (z, u) = (&exogenous[0], &exogenous[j]);
    let c = rng.gen_range(1..z.domain.len());
    let top = z.domain.len() - 1 + c * (u.domain.len() - 1);
    let dom: Vec<Value> = (0..=top).map(|i| Value::new(i.to_string())).collect();
    let table = cartesian(&[&z.domain, &u.domain])
        .into_iter()
        .map(|t| {
            let a: usize = t[0].as_str().parse().expect("integer label");
            let b: usize = t[1].as_str().parse().expect("integer label");
            let out = dom[a + c * b].clone();
            (t, out)
        })
        .collect();
    (StructuralEquation::new(name, &[&z.name, &u.name], table), VariableSpec::endogenous(name, dom))
}
