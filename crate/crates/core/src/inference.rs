//! Exact conditioning, MAP context estimation and counterfactuals by
//! enumeration.
//!
//! Counterfactuals follow abduction, action, prediction: the exogenous
//! worlds consistent with the evidence are reweighted by their posterior
//! mass, the intervened variables are pinned to constants (for an exogenous
//! variable this replaces its abducted value), and every abducted world is
//! pushed through the mutilated equations.

use std::collections::BTreeMap;
use std::fmt;

use crate::distribution::Distribution;
use crate::error::{InferenceError, ParseError, ScmError};
use crate::scalar::Probability;
use crate::scm::{cartesian, Compiled, Scm, Value, VarKind};

/// Partial variable → value map, used for evidence and interventions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    bindings: BTreeMap<String, Value>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a binding. Rebinding a variable to the same value is a no-op.
    pub fn bind(mut self, variable: &str, value: impl Into<Value>) -> Result<Self, InferenceError> {
        let value = value.into();
        match self.bindings.get(variable) {
            Some(old) if *old != value => Err(InferenceError::ConflictingBinding(variable.to_string())),
            _ => {
                self.bindings.insert(variable.to_string(), value);
                Ok(self)
            }
        }
    }

    /// Builder shorthand for literal bindings in tests and example code.
    ///
    /// Panics on a conflicting binding.
    pub fn with(self, variable: &str, value: impl Into<Value>) -> Self {
        self.bind(variable, value).expect("conflicting binding")
    }

    pub fn from_pairs<V: Into<Value>>(
        pairs: impl IntoIterator<Item = (impl AsRef<str>, V)>,
    ) -> Result<Self, InferenceError> {
        pairs.into_iter().try_fold(Assignment::new(), |acc, (k, v)| acc.bind(k.as_ref(), v))
    }

    /// Parses `VAR=value` items. Order does not matter.
    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self, ParseError> {
        let mut out = Assignment::new();
        for item in items {
            let item = item.as_ref();
            let (k, v) = item
                .split_once('=')
                .filter(|(k, _)| !k.trim().is_empty())
                .ok_or_else(|| ParseError::Binding(item.to_string()))?;
            out = out.bind(k.trim(), v.trim()).map_err(|_| ParseError::Binding(item.to_string()))?;
        }
        Ok(out)
    }

    pub fn get(&self, variable: &str) -> Option<&Value> {
        self.bindings.get(variable)
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn resolve<P: Probability>(&self, c: &Compiled<P>) -> Result<Vec<(usize, usize)>, ScmError> {
        self.bindings
            .iter()
            .map(|(k, v)| {
                let var = c.var_index(k)?;
                Ok((var, c.value_index(var, v)?))
            })
            .collect()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(", "))
    }
}

/// `target(do(intervention)) | evidence`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualQuery {
    pub target: String,
    pub intervention: Assignment,
    pub evidence: Assignment,
}

impl CounterfactualQuery {
    pub fn new(target: &str, intervention: Assignment, evidence: Assignment) -> Self {
        CounterfactualQuery { target: target.to_string(), intervention, evidence }
    }
}

/// Result of [`map_context`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate<P> {
    pub value: Value,
    /// Set when two or more values attain the maximum posterior mass.
    pub tie: bool,
    pub posterior: Distribution<P>,
}

/// Worlds consistent with the evidence, with masses renormalized by
/// P(evidence). Zero-mass worlds are dropped.
fn abduct<P: Probability>(c: &Compiled<P>, evidence: &Assignment) -> Result<Vec<(Vec<usize>, P)>, InferenceError> {
    let bound = evidence.resolve(c)?;
    let consistent: Vec<(Vec<usize>, P)> =
        c.worlds().into_iter().filter(|(w, p)| p.is_positive_mass() && bound.iter().all(|&(v, x)| w[v] == x)).collect();
    let norm = crate::scalar::sum(consistent.iter().map(|(_, p)| p.clone()));
    if !norm.is_positive_mass() {
        return Err(InferenceError::ImpossibleEvidence(evidence.to_string()));
    }
    Ok(consistent.into_iter().map(|(w, p)| (w, p / norm.clone())).collect())
}

/// Exact joint posterior over `query_vars` given `evidence`.
pub fn posterior<P: Probability>(
    scm: &Scm<P>,
    query_vars: &[&str],
    evidence: &Assignment,
) -> Result<Distribution<P>, InferenceError> {
    let c = scm.compile()?;
    let vars: Vec<usize> = query_vars.iter().map(|q| c.var_index(q)).collect::<Result<_, _>>()?;
    let abducted = abduct(&c, evidence)?;
    let doms: Vec<&[Value]> = vars.iter().map(|&v| c.domains[v].as_slice()).collect();
    let radices: Vec<usize> = doms.iter().map(|d| d.len()).collect();
    let mut masses = vec![P::zero(); radices.iter().product()];
    for (w, p) in abducted {
        let slot = vars.iter().zip(&radices).fold(0, |acc, (&v, &r)| acc * r + w[v]);
        masses[slot] = masses[slot].clone() + p;
    }
    Ok(Distribution::from_entries(
        query_vars.iter().map(|s| s.to_string()).collect(),
        cartesian(&doms).into_iter().zip(masses).collect(),
    ))
}

/// MAP estimate of `context_var` given `evidence`; ties break to the
/// earliest value in domain order and set `tie`.
pub fn map_context<P: Probability>(
    scm: &Scm<P>,
    context_var: &str,
    evidence: &Assignment,
) -> Result<MapEstimate<P>, InferenceError> {
    let post = posterior(scm, &[context_var], evidence)?;
    let mut best: Option<(&Value, &P)> = None;
    let mut tie = false;
    for (k, p) in post.entries() {
        match best {
            None => best = Some((&k[0], p)),
            Some((_, b)) if p > b => {
                best = Some((&k[0], p));
                tie = false;
            }
            Some((_, b)) if p.same_mass(b) => tie = true,
            _ => {}
        }
    }
    let value = best.expect("context domain is nonempty").0.clone();
    Ok(MapEstimate { value, tie, posterior: post })
}

/// Distribution of `query.target` under `do(query.intervention)` given
/// `query.evidence`.
pub fn counterfactual<P: Probability>(
    scm: &Scm<P>,
    query: &CounterfactualQuery,
) -> Result<Distribution<P>, InferenceError> {
    let c = scm.compile()?;
    let target = c.var_index(&query.target)?;
    if c.kinds[target] != VarKind::Endogenous {
        return Err(InferenceError::TargetNotEndogenous(query.target.clone()));
    }
    let actions = query.intervention.resolve(&c)?;
    let abducted = abduct(&c, &query.evidence)?;

    let mut fixed = vec![false; c.names.len()];
    for &(v, _) in &actions {
        fixed[v] = true;
    }
    let mut masses = vec![P::zero(); c.domains[target].len()];
    for (mut w, p) in abducted {
        for &(v, x) in &actions {
            w[v] = x;
        }
        c.propagate(&mut w, &fixed);
        masses[w[target]] = masses[w[target]].clone() + p;
    }
    Ok(Distribution::from_entries(
        vec![query.target.clone()],
        c.domains[target].iter().cloned().map(|v| vec![v]).zip(masses).collect(),
    ))
}

/// Counterfactual computed by a context-guessing machine: the evidence is
/// extended with the MAP value of `context_var` before abduction.
pub fn guess_counterfactual<P: Probability>(
    scm: &Scm<P>,
    target: &str,
    context_var: &str,
    do_value: &Value,
    evidence: &Assignment,
) -> Result<Distribution<P>, InferenceError> {
    let guess = map_context(scm, context_var, evidence)?;
    conditioned_counterfactual(scm, target, context_var, do_value, evidence, &guess.value)
}

/// `target(do(context_var = do_value)) | evidence, context_var = context`.
pub(crate) fn conditioned_counterfactual<P: Probability>(
    scm: &Scm<P>,
    target: &str,
    context_var: &str,
    do_value: &Value,
    evidence: &Assignment,
    context: &Value,
) -> Result<Distribution<P>, InferenceError> {
    let extended = evidence.clone().bind(context_var, context.clone())?;
    let query = CounterfactualQuery::new(target, Assignment::new().with(context_var, do_value.clone()), extended);
    counterfactual(scm, &query)
}
