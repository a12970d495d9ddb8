//! Counterfactual data augmentation.
//!
//! Three augmenters share one driver:
//!
//! * `full` abducts over every context, i.e. the true counterfactual
//!   `X(Z=z) | X=x`;
//! * `guess` fixes the context at its MAP value first,
//!   `X(Z=z) | X=x, Z=z_MAP(x)`;
//! * `posterior` repeats the guess-style augmentation under every context
//!   selected from `P(Z | X=x)`, either by threshold or by seeded draws.
//!
//! Enumerate mode emits the whole support of each generating distribution
//! with exact masses. Sample mode draws `k` values per (example, z) pair with
//! a ChaCha8 generator seeded from `derive_seed(seed, example_index)`, so the
//! output does not depend on how examples are scheduled.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::AugmentError;
use crate::inference::{self, Assignment, CounterfactualQuery};
use crate::invariance::{Constraint, ConstraintSet};
use crate::scalar::Probability;
use crate::scm::{Scm, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub x: Value,
    pub y: Value,
    #[serde(default = "one")]
    pub weight: u64,
}

fn one() -> u64 {
    1
}

impl LabeledExample {
    pub fn new(x: impl Into<Value>, y: impl Into<Value>) -> Self {
        LabeledExample { x: x.into(), y: y.into(), weight: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    Full,
    Guess,
    Posterior,
}

impl std::fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AugmentMode::Full => "full",
            AugmentMode::Guess => "guess",
            AugmentMode::Posterior => "posterior",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DrawMode {
    #[default]
    Enumerate,
    Sample {
        k: usize,
        seed: u64,
    },
}

/// How posterior-CDA picks the contexts it conditions on.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextRule<P> {
    /// Every context with `P(z | X=x) > tau`.
    Threshold(P),
    /// Distinct values among `k` seeded draws from `P(Z | X=x)`.
    Sample { k: usize, seed: u64 },
}

/// Context the generating distribution was conditioned on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ContextUsed {
    /// No context was fixed: abduction ran over all of them.
    All,
    Value(Value),
}

impl Serialize for ContextUsed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ContextUsed::All => s.serialize_str("all"),
            ContextUsed::Value(v) => s.serialize_str(v.as_str()),
        }
    }
}

impl<'de> Deserialize<'de> for ContextUsed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "all" { ContextUsed::All } else { ContextUsed::Value(Value::from(s)) })
    }
}

impl std::fmt::Display for ContextUsed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContextUsed::All => f.write_str("all"),
            ContextUsed::Value(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedExample<P> {
    pub x_prime: Value,
    pub y: Value,
    pub source_x: Value,
    pub intervened_z: Value,
    pub mode: AugmentMode,
    pub context_used: ContextUsed,
    /// Probability of `x_prime` under the distribution it was generated from.
    pub mass: P,
}

/// Names of the variables an augmentation works on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentVars {
    pub input: String,
    pub label: String,
    pub context: String,
}

impl AugmentVars {
    pub fn new(input: &str, label: &str, context: &str) -> Self {
        AugmentVars { input: input.into(), label: label.into(), context: context.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub draw: DrawMode,
    /// Threshold of the posterior rule, as an exact string.
    pub tau: Option<String>,
    /// `(k, seed)` of the sampled posterior rule.
    pub context_sample: Option<(usize, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset<P> {
    pub vars: AugmentVars,
    /// Domain of the input variable, in canonical order.
    pub input_domain: Vec<Value>,
    pub originals: Vec<LabeledExample>,
    pub augmented: Vec<AugmentedExample<P>>,
    pub mode: AugmentMode,
    pub params: AugmentParams,
}

impl<P: Probability> AugmentedDataset<P> {
    /// Distinct `x'` values generated from `source`, in domain order.
    pub fn x_primes_of(&self, source: &Value) -> Vec<Value> {
        let set: BTreeSet<usize> = self
            .augmented
            .iter()
            .filter(|a| &a.source_x == source)
            .filter_map(|a| self.input_domain.iter().position(|d| d == &a.x_prime))
            .collect();
        set.into_iter().map(|i| self.input_domain[i].clone()).collect()
    }

    /// Originals followed by one weight-1 example per augmented record.
    pub fn training_examples(&self) -> Vec<LabeledExample> {
        self.originals
            .iter()
            .cloned()
            .chain(self.augmented.iter().map(|a| LabeledExample::new(a.x_prime.clone(), a.y.clone())))
            .collect()
    }
}

/// SplitMix64 finalizer over `seed + index`, giving each example an
/// independent, schedule-free stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Index of the first cumulative mass exceeding `u`; falls back to the last
/// positive entry when rounding leaves `u` past the end.
pub fn inverse_cdf(masses: impl IntoIterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, m) in masses.into_iter().enumerate() {
        if m > 0.0 {
            acc += m;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws one supported value of a single-variable distribution.
pub fn draw_value<'a, P: Probability, R: Rng + ?Sized>(d: &'a Distribution<P>, rng: &mut R) -> (&'a Value, &'a P) {
    let i = inverse_cdf(d.entries().iter().map(|(_, p)| p.to_f64()), rng.gen::<f64>());
    let (k, p) = &d.entries()[i];
    (&k[0], p)
}

/// `n` i.i.d. draws of `(input, label)` from the model, reproducible from
/// `(scm, n, seed)`.
pub fn sample_dataset<P: Probability>(
    scm: &Scm<P>,
    input_var: &str,
    label_var: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>, AugmentError> {
    if n == 0 {
        return Err(AugmentError::Parameter("sample size must be at least 1".into()));
    }
    let c = scm.compile().map_err(crate::error::InferenceError::from)?;
    let xi = c.var_index(input_var).map_err(crate::error::InferenceError::from)?;
    let yi = c.var_index(label_var).map_err(crate::error::InferenceError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let w = c.sample(&mut rng);
            LabeledExample::new(c.domains[xi][w[xi]].clone(), c.domains[yi][w[yi]].clone())
        })
        .collect())
}

/// One generating distribution for one (example, z) pair.
struct Source<P> {
    context_used: ContextUsed,
    z: Value,
    dist: Distribution<P>,
}

fn check_examples<P: Probability>(
    scm: &Scm<P>,
    vars: &AugmentVars,
    data: &[LabeledExample],
) -> Result<(Vec<Value>, Vec<Value>), AugmentError> {
    let x_marginal = scm.marginal(&vars.input).map_err(crate::error::InferenceError::from)?;
    let label_domain = scm.domain(&vars.label).map_err(crate::error::InferenceError::from)?;
    for (index, ex) in data.iter().enumerate() {
        if !x_marginal.mass_of(&ex.x).is_positive_mass() {
            return Err(AugmentError::OutsideSupport { index, x: ex.x.to_string() });
        }
        if !label_domain.contains(&ex.y) {
            return Err(AugmentError::Parameter(format!(
                "example {index} has label {:?} outside the domain of {}",
                ex.y.as_str(),
                vars.label
            )));
        }
    }
    let z_support = scm.marginal(&vars.context).map_err(crate::error::InferenceError::from)?.support_values();
    let x_domain = scm.domain(&vars.input).map_err(crate::error::InferenceError::from)?.to_vec();
    Ok((x_domain, z_support))
}

fn drive<P: Probability>(
    scm: &Scm<P>,
    vars: &AugmentVars,
    data: &[LabeledExample],
    mode: AugmentMode,
    draw: DrawMode,
    params: AugmentParams,
    mut sources: impl FnMut(usize, &Value, &[Value]) -> Result<Vec<Source<P>>, AugmentError>,
) -> Result<AugmentedDataset<P>, AugmentError> {
    if let DrawMode::Sample { k: 0, .. } = draw {
        return Err(AugmentError::Parameter("draws per pair must be at least 1".into()));
    }
    let (input_domain, z_support) = check_examples(scm, vars, data)?;
    let mut augmented = Vec::new();
    for (i, ex) in data.iter().enumerate() {
        let mut rng = match draw {
            DrawMode::Sample { seed, .. } => Some(rng_for(seed, i as u64)),
            DrawMode::Enumerate => None,
        };
        for src in sources(i, &ex.x, &z_support)? {
            let emit = |x_prime: &Value, mass: &P| AugmentedExample {
                x_prime: x_prime.clone(),
                y: ex.y.clone(),
                source_x: ex.x.clone(),
                intervened_z: src.z.clone(),
                mode,
                context_used: src.context_used.clone(),
                mass: mass.clone(),
            };
            match (&draw, rng.as_mut()) {
                (DrawMode::Sample { k, .. }, Some(rng)) => {
                    for _ in 0..*k {
                        let (x_prime, mass) = draw_value(&src.dist, rng);
                        augmented.push(emit(x_prime, mass));
                    }
                }
                _ => {
                    for (key, mass) in src.dist.positive_entries() {
                        augmented.push(emit(&key[0], mass));
                    }
                }
            }
        }
    }
    Ok(AugmentedDataset { vars: vars.clone(), input_domain, originals: data.to_vec(), augmented, mode, params })
}

fn evidence(vars: &AugmentVars, x: &Value) -> Assignment {
    Assignment::new().with(&vars.input, x.clone())
}

/// Augmentation by a context-guessing machine.
pub fn guess_cda<P: Probability>(
    scm: &Scm<P>,
    vars: &AugmentVars,
    data: &[LabeledExample],
    draw: DrawMode,
) -> Result<AugmentedDataset<P>, AugmentError> {
    let params = AugmentParams { draw, tau: None, context_sample: None };
    drive(scm, vars, data, AugmentMode::Guess, draw, params, |_, x, zs| {
        let e = evidence(vars, x);
        let guess = inference::map_context(scm, &vars.context, &e)?;
        zs.iter()
            .map(|z| {
                let dist = inference::conditioned_counterfactual(scm, &vars.input, &vars.context, z, &e, &guess.value)?;
                Ok(Source { context_used: ContextUsed::Value(guess.value.clone()), z: z.clone(), dist })
            })
            .collect()
    })
}

/// Augmentation from the true counterfactual distribution.
pub fn full_cda<P: Probability>(
    scm: &Scm<P>,
    vars: &AugmentVars,
    data: &[LabeledExample],
    draw: DrawMode,
) -> Result<AugmentedDataset<P>, AugmentError> {
    let params = AugmentParams { draw, tau: None, context_sample: None };
    drive(scm, vars, data, AugmentMode::Full, draw, params, |_, x, zs| {
        let e = evidence(vars, x);
        zs.iter()
            .map(|z| {
                let q =
                    CounterfactualQuery::new(&vars.input, Assignment::new().with(&vars.context, z.clone()), e.clone());
                Ok(Source { context_used: ContextUsed::All, z: z.clone(), dist: inference::counterfactual(scm, &q)? })
            })
            .collect()
    })
}

/// Augmentation under every context selected from `P(Z | X=x)`.
pub fn posterior_cda<P: Probability>(
    scm: &Scm<P>,
    vars: &AugmentVars,
    data: &[LabeledExample],
    rule: &ContextRule<P>,
    draw: DrawMode,
) -> Result<AugmentedDataset<P>, AugmentError> {
    let params = match rule {
        ContextRule::Threshold(tau) => {
            if crate::scalar::is_negative(tau) || *tau >= P::one() {
                return Err(AugmentError::Parameter(format!("threshold must lie in [0, 1), got {tau}")));
            }
            AugmentParams { draw, tau: Some(tau.to_mass_string()), context_sample: None }
        }
        ContextRule::Sample { k, seed } => {
            if *k == 0 {
                return Err(AugmentError::Parameter("context draws must be at least 1".into()));
            }
            AugmentParams { draw, tau: None, context_sample: Some((*k, *seed)) }
        }
    };
    drive(scm, vars, data, AugmentMode::Posterior, draw, params, |i, x, zs| {
        let e = evidence(vars, x);
        let post = inference::posterior(scm, &[&vars.context], &e)?;
        let contexts: Vec<Value> = match rule {
            ContextRule::Threshold(tau) => {
                post.entries().iter().filter(|(_, p)| p > tau).map(|(k, _)| k[0].clone()).collect()
            }
            ContextRule::Sample { k, seed } => {
                let mut rng = rng_for(*seed, i as u64);
                let picked: BTreeSet<usize> = (0..*k)
                    .map(|_| {
                        let (v, _) = draw_value(&post, &mut rng);
                        post.entries().iter().position(|(key, _)| &key[0] == v).expect("drawn from entries")
                    })
                    .collect();
                picked.into_iter().map(|j| post.entries()[j].0[0].clone()).collect()
            }
        };
        if contexts.is_empty() {
            let tau = match rule {
                ContextRule::Threshold(t) => t.to_mass_string(),
                ContextRule::Sample { .. } => "-".into(),
            };
            return Err(AugmentError::NoAdmissibleContext { x: x.to_string(), tau });
        }
        let mut out = Vec::with_capacity(contexts.len() * zs.len());
        for zc in &contexts {
            for z in zs {
                let dist = inference::conditioned_counterfactual(scm, &vars.input, &vars.context, z, &e, zc)?;
                out.push(Source { context_used: ContextUsed::Value(zc.clone()), z: z.clone(), dist });
            }
        }
        Ok(out)
    })
}

/// Constraints a finite augmented dataset forces: `Γ(source_x) = Γ(x')` for
/// every augmented record, over the values present in the dataset.
pub fn induced_constraints<P: Probability>(aug: &AugmentedDataset<P>) -> ConstraintSet {
    let present: BTreeSet<&Value> = aug
        .originals
        .iter()
        .map(|o| &o.x)
        .chain(aug.augmented.iter().flat_map(|a| [&a.source_x, &a.x_prime]))
        .collect();
    let support = aug.input_domain.iter().filter(|v| present.contains(v)).cloned().collect();
    let constraints =
        aug.augmented.iter().map(|a| Constraint { x: a.source_x.clone(), peers: vec![a.x_prime.clone()] }).collect();
    ConstraintSet { input_var: aug.vars.input.clone(), domain: aug.input_domain.clone(), support, constraints }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_skips_zero_mass() {
        let m = [0.0, 0.5, 0.0, 0.5];
        assert_eq!(inverse_cdf(m, 0.0), 1);
        assert_eq!(inverse_cdf(m, 0.49), 1);
        assert_eq!(inverse_cdf(m, 0.5), 3);
        assert_eq!(inverse_cdf(m, 0.999_999), 3);
        assert_eq!(inverse_cdf([0.3, 0.3, 0.3, 0.0], 0.95), 2);
    }

    #[test]
    fn derived_seeds_differ_per_index() {
        let seeds: BTreeSet<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn context_used_serializes_as_string() {
        assert_eq!(serde_json::to_string(&ContextUsed::All).unwrap(), "\"all\"");
        let v: ContextUsed = serde_json::from_str("\"like\"").unwrap();
        assert_eq!(v, ContextUsed::Value(Value::from("like")));
    }
}
