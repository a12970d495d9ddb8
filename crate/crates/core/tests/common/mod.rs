//! Brute-force oracle shared by the integration tests.
//!
//! It deliberately avoids the crate's compiled model and inference code:
//! exogenous outcomes are enumerated recursively from the raw priors, and
//! endogenous values are computed by repeated sweeps over the raw equation
//! tables until nothing changes.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use cfaudit_core::{BigRational, Scm, Value, VarKind};
use num_traits::Zero;

fn exo_outcomes(scm: &Scm<BigRational>) -> Vec<(HashMap<String, Value>, BigRational)> {
    let mut out = vec![(HashMap::new(), BigRational::from_integer(1.into()))];
    for var in scm.variables().iter().filter(|v| v.kind == VarKind::Exogenous) {
        let prior = scm.prior(&var.name).expect("prior");
        let mut next = Vec::new();
        for (partial, w) in &out {
            for (val, mass) in &prior.pmf {
                let mut a = partial.clone();
                a.insert(var.name.clone(), val.clone());
                next.push((a, w * mass));
            }
        }
        out = next;
    }
    out
}

/// Fills endogenous variables not in `pinned` by sweeping equations.
fn solve(
    scm: &Scm<BigRational>,
    mut values: HashMap<String, Value>,
    pinned: &[(String, Value)],
) -> HashMap<String, Value> {
    for (k, v) in pinned {
        values.insert(k.clone(), v.clone());
    }
    loop {
        let mut changed = false;
        for eq in scm.equations() {
            if values.contains_key(&eq.child) {
                continue;
            }
            let given: Option<Vec<Value>> = eq.parents.iter().map(|p| values.get(p).cloned()).collect();
            if let Some(given) = given {
                values.insert(eq.child.clone(), eq.lookup(&given).expect("total table").clone());
                changed = true;
            }
        }
        if !changed {
            return values;
        }
    }
}

/// `Σ_u P(u | evidence) · 1[target under do(intervention), u]`, per value.
pub fn oracle_counterfactual(
    scm: &Scm<BigRational>,
    target: &str,
    intervention: &[(String, Value)],
    evidence: &[(String, Value)],
) -> Option<BTreeMap<Value, BigRational>> {
    let mut p_e = BigRational::zero();
    let mut acc: BTreeMap<Value, BigRational> = BTreeMap::new();
    for (exo, w) in exo_outcomes(scm) {
        let factual = solve(scm, exo.clone(), &[]);
        if !evidence.iter().all(|(k, v)| factual.get(k) == Some(v)) {
            continue;
        }
        p_e += &w;
        let mut base = exo.clone();
        for (k, _) in intervention {
            base.remove(k);
        }
        let cf = solve(scm, base, intervention);
        *acc.entry(cf[target].clone()).or_insert_with(BigRational::zero) += &w;
    }
    if p_e.is_zero() {
        return None;
    }
    Some(acc.into_iter().filter(|(_, m)| !m.is_zero()).map(|(k, m)| (k, m / &p_e)).collect())
}

/// Marginal of one variable by the same brute force.
pub fn oracle_marginal(scm: &Scm<BigRational>, var: &str) -> BTreeMap<Value, BigRational> {
    let mut acc: BTreeMap<Value, BigRational> = BTreeMap::new();
    for (exo, w) in exo_outcomes(scm) {
        let world = solve(scm, exo, &[]);
        *acc.entry(world[var].clone()).or_insert_with(BigRational::zero) += w;
    }
    acc.into_iter().filter(|(_, m)| !m.is_zero()).collect()
}

/// Positive entries of a one-variable distribution as an ordered map.
pub fn as_map(d: &cfaudit_core::ExactDistribution) -> BTreeMap<Value, BigRational> {
    d.positive_entries().map(|(k, p)| (k[0].clone(), p.clone())).collect()
}

pub fn pairs(items: &[(&str, &str)]) -> Vec<(String, Value)> {
    items.iter().map(|(k, v)| (k.to_string(), Value::from(*v))).collect()
}

pub fn vals(items: &[&str]) -> Vec<Value> {
    items.iter().map(|s| Value::from(*s)).collect()
}
