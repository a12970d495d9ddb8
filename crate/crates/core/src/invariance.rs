//! Invariance constraints induced by counterfactuals, as partitions of the
//! input support.
//!
//! A representation Γ that must satisfy `Γ(x) = Γ(x')` for every `x'` in some
//! counterfactual support is characterized, up to relabeling, by the
//! equivalence classes those equalities force. Two constraint families are
//! extracted: the true counterfactual one (all contexts abducted) and the one
//! a context-guessing augmenter imposes (context fixed at its MAP value).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{InferenceError, InvarianceError};
use crate::inference::{self, Assignment, CounterfactualQuery};
use crate::scalar::Probability;
use crate::scm::{Scm, Value, VarKind};

/// `Γ(x)` must equal `Γ(x')` for every `x'` in `peers`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub x: Value,
    pub peers: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub input_var: String,
    /// Full domain of the input variable, in canonical order.
    pub domain: Vec<Value>,
    /// Values the resulting partition covers.
    pub support: Vec<Value>,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn peers_of(&self, x: &Value) -> Vec<Value> {
        let idx: BTreeSet<usize> = self
            .constraints
            .iter()
            .filter(|c| &c.x == x)
            .flat_map(|c| c.peers.iter())
            .filter_map(|p| self.position(p))
            .collect();
        idx.into_iter().map(|i| self.domain[i].clone()).collect()
    }

    fn position(&self, v: &Value) -> Option<usize> {
        self.domain.iter().position(|d| d == v)
    }
}

/// Disjoint nonempty classes covering a support, each sorted in domain order
/// and ordered by their least element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub input_var: String,
    pub classes: Vec<Vec<Value>>,
}

impl Partition {
    pub fn class_of(&self, x: &Value) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(x))
    }

    pub fn support(&self) -> BTreeSet<&Value> {
        self.classes.iter().flatten().collect()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .classes
            .iter()
            .map(|c| format!("{{{}}}", c.iter().map(Value::as_str).collect::<Vec<_>>().join(", ")))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum SupportCheck {
    Holds,
    Counterexample { x: Value, z: Value, x_prime: Value },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionVerdict {
    Equal,
    CdaStrictlyFiner,
    Inconsistent,
}

impl std::fmt::Display for PartitionVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PartitionVerdict::Equal => "equal",
            PartitionVerdict::CdaStrictlyFiner => "cda_strictly_finer",
            PartitionVerdict::Inconsistent => "inconsistent",
        })
    }
}

struct Setup {
    domain: Vec<Value>,
    x_support: Vec<Value>,
    z_support: Vec<Value>,
}

fn setup<P: Probability>(scm: &Scm<P>, input_var: &str, context_var: &str) -> Result<Setup, InvarianceError> {
    let spec = scm.variable(input_var).map_err(InferenceError::from)?;
    if spec.kind != VarKind::Endogenous {
        return Err(InvarianceError::InputNotEndogenous(input_var.to_string()));
    }
    let x_support = scm.marginal(input_var).map_err(InferenceError::from)?.support_values();
    let z_support = scm.marginal(context_var).map_err(InferenceError::from)?.support_values();
    Ok(Setup { domain: spec.domain.clone(), x_support, z_support })
}

fn build_set(
    input_var: &str,
    s: Setup,
    per_x: impl Fn(&Value, &[Value]) -> Result<BTreeSet<Value>, InvarianceError>,
) -> Result<ConstraintSet, InvarianceError> {
    let mut constraints = Vec::with_capacity(s.x_support.len());
    for x in &s.x_support {
        let peers = per_x(x, &s.z_support)?;
        let mut peers: Vec<Value> = peers.into_iter().collect();
        peers.sort_by_key(|p| s.domain.iter().position(|d| d == p));
        constraints.push(Constraint { x: x.clone(), peers });
    }
    Ok(ConstraintSet { input_var: input_var.to_string(), domain: s.domain, support: s.x_support, constraints })
}

/// Constraints of counterfactual invariance: for every `x` in supp(X) and
/// `z'` in supp(Z), `x` is tied to the support of `X(Z=z') | X=x`.
pub fn cf_constraints<P: Probability>(
    scm: &Scm<P>,
    input_var: &str,
    context_var: &str,
) -> Result<ConstraintSet, InvarianceError> {
    let s = setup(scm, input_var, context_var)?;
    build_set(input_var, s, |x, zs| {
        let mut peers = BTreeSet::new();
        let evidence = Assignment::new().with(input_var, x.clone());
        for z in zs {
            let q =
                CounterfactualQuery::new(input_var, Assignment::new().with(context_var, z.clone()), evidence.clone());
            peers.extend(inference::counterfactual(scm, &q)?.support_values());
        }
        Ok(peers)
    })
}

/// Constraints imposed by a context-guessing augmenter: as [`cf_constraints`]
/// but the abduction additionally conditions on `Z = z_MAP(x)`.
pub fn cda_constraints<P: Probability>(
    scm: &Scm<P>,
    input_var: &str,
    context_var: &str,
) -> Result<ConstraintSet, InvarianceError> {
    let s = setup(scm, input_var, context_var)?;
    build_set(input_var, s, |x, zs| {
        let mut peers = BTreeSet::new();
        let evidence = Assignment::new().with(input_var, x.clone());
        let guess = inference::map_context(scm, context_var, &evidence)?;
        for z in zs {
            let d = inference::conditioned_counterfactual(scm, input_var, context_var, z, &evidence, &guess.value)?;
            peers.extend(d.support_values());
        }
        Ok(peers)
    })
}

/// Path-halving union-find over dense indices.
struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the smaller index as root so roots are canonical
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Transitive closure of the constraints, restricted to `constraints.support`.
///
/// Peers outside the support still connect the values they are tied to.
pub fn partition_from(constraints: &ConstraintSet) -> Partition {
    let pos = |v: &Value| constraints.domain.iter().position(|d| d == v);
    let mut sets = DisjointSets::new(constraints.domain.len());
    for c in &constraints.constraints {
        let Some(xi) = pos(&c.x) else { continue };
        for p in &c.peers {
            if let Some(pi) = pos(p) {
                sets.union(xi, pi);
            }
        }
    }
    let in_support: BTreeSet<usize> = constraints.support.iter().filter_map(pos).collect();
    let mut classes: Vec<(usize, Vec<Value>)> = Vec::new();
    for i in in_support {
        let root = sets.find(i);
        match classes.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(constraints.domain[i].clone()),
            None => classes.push((root, vec![constraints.domain[i].clone()])),
        }
    }
    // members were visited in domain order, so each class is sorted and the
    // classes appear in order of their least element
    Partition { input_var: constraints.input_var.clone(), classes: classes.into_iter().map(|(_, c)| c).collect() }
}

/// Checks `supp(X(Z=z) | X=x, Z=z_MAP(x)) ⊆ supp(X(Z=z) | X=x)` for every
/// `x` in supp(X) and `z` in supp(Z), reporting the first violation.
pub fn check_support_subset<P: Probability>(
    scm: &Scm<P>,
    input_var: &str,
    context_var: &str,
) -> Result<SupportCheck, InvarianceError> {
    let s = setup(scm, input_var, context_var)?;
    for x in &s.x_support {
        let evidence = Assignment::new().with(input_var, x.clone());
        let guess = inference::map_context(scm, context_var, &evidence)?;
        for z in &s.z_support {
            let q =
                CounterfactualQuery::new(input_var, Assignment::new().with(context_var, z.clone()), evidence.clone());
            let full: BTreeSet<Value> = inference::counterfactual(scm, &q)?.support_values().into_iter().collect();
            let guessed =
                inference::conditioned_counterfactual(scm, input_var, context_var, z, &evidence, &guess.value)?;
            if let Some(bad) = guessed.support_values().into_iter().find(|v| !full.contains(v)) {
                return Ok(SupportCheck::Counterexample { x: x.clone(), z: z.clone(), x_prime: bad });
            }
        }
    }
    Ok(SupportCheck::Holds)
}

/// Relates the guess-CDA partition to the counterfactual one.
pub fn compare_partitions(cda: &Partition, cf: &Partition) -> Result<PartitionVerdict, InvarianceError> {
    if cda.input_var != cf.input_var || cda.support() != cf.support() {
        return Err(InvarianceError::SupportMismatch(format!("{} vs {}", cda.input_var, cf.input_var)));
    }
    if cda.classes == cf.classes {
        return Ok(PartitionVerdict::Equal);
    }
    let refines = cda.classes.iter().all(|class| {
        let home = cf.class_of(&class[0]);
        class.iter().all(|v| cf.class_of(v) == home)
    });
    Ok(if refines { PartitionVerdict::CdaStrictlyFiner } else { PartitionVerdict::Inconsistent })
}

/// Everything an audit of one (input, context) pair computes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub input_var: String,
    pub context_var: String,
    pub cf_constraints: ConstraintSet,
    pub cda_constraints: ConstraintSet,
    pub cf_partition: Partition,
    pub cda_partition: Partition,
    pub support_check: SupportCheck,
    pub verdict: PartitionVerdict,
}

pub fn audit<P: Probability>(scm: &Scm<P>, input_var: &str, context_var: &str) -> Result<AuditReport, InvarianceError> {
    let cf = cf_constraints(scm, input_var, context_var)?;
    let cda = cda_constraints(scm, input_var, context_var)?;
    let cf_partition = partition_from(&cf);
    let cda_partition = partition_from(&cda);
    let support_check = check_support_subset(scm, input_var, context_var)?;
    let verdict = compare_partitions(&cda_partition, &cf_partition)?;
    Ok(AuditReport {
        input_var: input_var.to_string(),
        context_var: context_var.to_string(),
        cf_constraints: cf,
        cda_constraints: cda,
        cf_partition,
        cda_partition,
        support_check,
        verdict,
    })
}
