//! Discrete structural causal models.
//!
//! All randomness lives in mutually independent exogenous variables; every
//! endogenous variable is a deterministic function of its parents, given as
//! an explicit table. Construction never fails: [`Scm::validate`] reports
//! every violated invariant as data, and the enumeration entry points refuse
//! models that do not validate.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::ScmError;
use crate::scalar::{self, Probability};

/// A symbolic value, meaningful relative to a variable's domain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(String);

impl Value {
    pub fn new(label: impl Into<String>) -> Self {
        Value(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value(s)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Exogenous,
    Endogenous,
}

/// A named variable with an ordered, finite domain. Declaration order of the
/// domain is the canonical order used for tie-breaking and output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VarKind,
    pub domain: Vec<Value>,
}

impl VariableSpec {
    pub fn exogenous<V: Into<Value>>(name: &str, domain: impl IntoIterator<Item = V>) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VarKind::Exogenous,
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }

    pub fn endogenous<V: Into<Value>>(name: &str, domain: impl IntoIterator<Item = V>) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VarKind::Endogenous,
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }
}

/// Prior over one exogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousPrior<P> {
    pub variable: String,
    pub pmf: Vec<(Value, P)>,
}

impl<P> ExogenousPrior<P> {
    pub fn new<V: Into<Value>>(variable: &str, pmf: impl IntoIterator<Item = (V, P)>) -> Self {
        ExogenousPrior { variable: variable.to_string(), pmf: pmf.into_iter().map(|(v, p)| (v.into(), p)).collect() }
    }
}

/// Tabulated mechanism `child := table[parents]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralEquation {
    pub child: String,
    pub parents: Vec<String>,
    pub table: Vec<(Vec<Value>, Value)>,
}

impl StructuralEquation {
    pub fn new(child: &str, parents: &[&str], table: Vec<(Vec<Value>, Value)>) -> Self {
        StructuralEquation { child: child.to_string(), parents: parents.iter().map(|s| s.to_string()).collect(), table }
    }

    /// Builds the table by evaluating `f` on every parent tuple of the given
    /// domains (in canonical order).
    pub fn tabulate(child: &str, parents: &[(&str, &[Value])], mut f: impl FnMut(&[Value]) -> Value) -> Self {
        let domains: Vec<&[Value]> = parents.iter().map(|(_, d)| *d).collect();
        let table = cartesian(&domains)
            .into_iter()
            .map(|tuple| {
                let out = f(&tuple);
                (tuple, out)
            })
            .collect();
        StructuralEquation {
            child: child.to_string(),
            parents: parents.iter().map(|(n, _)| n.to_string()).collect(),
            table,
        }
    }

    /// Looks up the output for a parent tuple by linear scan.
    pub fn lookup(&self, given: &[Value]) -> Option<&Value> {
        self.table.iter().find(|(k, _)| k.as_slice() == given).map(|(_, v)| v)
    }
}

pub(crate) fn cartesian(domains: &[&[Value]]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for d in domains {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                d.iter().map(move |v| {
                    let mut t = prefix.clone();
                    t.push(v.clone());
                    t
                })
            })
            .collect();
    }
    out
}

/// One invariant violation found by [`Scm::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateVariable(String),
    EmptyDomain(String),
    DuplicateDomainValue { variable: String, value: String },
    MissingPrior(String),
    DuplicatePrior(String),
    PriorOnUnknownVariable(String),
    PriorOnEndogenous(String),
    PriorValueNotInDomain { variable: String, value: String },
    PriorNotTotal { variable: String, missing: String },
    NegativeMass { variable: String, value: String },
    PriorMassNotOne { variable: String, sum: String },
    MissingEquation(String),
    DuplicateEquation(String),
    EquationForUnknownVariable(String),
    EquationForExogenous(String),
    UnknownParent { child: String, parent: String },
    RowArity { child: String, row: usize },
    RowValueNotInDomain { child: String, row: usize, value: String },
    DuplicateRow { child: String, given: String },
    OutputNotInDomain { child: String, value: String },
    EquationNotTotal { child: String, missing: String },
    Cycle(Vec<String>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateVariable(v) => write!(f, "{v}: duplicate variable name"),
            EmptyDomain(v) => write!(f, "{v}: empty domain"),
            DuplicateDomainValue { variable, value } => {
                write!(f, "{variable}: duplicate domain value {value:?}")
            }
            MissingPrior(v) => write!(f, "{v}: exogenous variable has no prior"),
            DuplicatePrior(v) => write!(f, "{v}: more than one prior"),
            PriorOnUnknownVariable(v) => write!(f, "{v}: prior for unknown variable"),
            PriorOnEndogenous(v) => write!(f, "{v}: prior given for endogenous variable"),
            PriorValueNotInDomain { variable, value } => {
                write!(f, "{variable}: prior mentions {value:?} outside the domain")
            }
            PriorNotTotal { variable, missing } => {
                write!(f, "{variable}: prior not total, no mass given for {missing:?}")
            }
            NegativeMass { variable, value } => {
                write!(f, "{variable}: negative prior mass on {value:?}")
            }
            PriorMassNotOne { variable, sum } => {
                write!(f, "{variable}: prior mass ≠ 1 (sums to {sum})")
            }
            MissingEquation(v) => write!(f, "{v}: endogenous variable has no equation"),
            DuplicateEquation(v) => write!(f, "{v}: more than one equation"),
            EquationForUnknownVariable(v) => write!(f, "{v}: equation for unknown variable"),
            EquationForExogenous(v) => write!(f, "{v}: exogenous variable has an equation"),
            UnknownParent { child, parent } => write!(f, "{child}: unknown parent {parent}"),
            RowArity { child, row } => {
                write!(f, "{child}: table row {row} does not match the parent list")
            }
            RowValueNotInDomain { child, row, value } => {
                write!(f, "{child}: table row {row} uses {value:?} outside its parent's domain")
            }
            DuplicateRow { child, given } => write!(f, "{child}: parent tuple ({given}) listed twice"),
            OutputNotInDomain { child, value } => {
                write!(f, "{child}: equation outputs {value:?} outside the domain")
            }
            EquationNotTotal { child, missing } => {
                write!(f, "{child}: equation not total, no row for ({missing})")
            }
            Cycle(vars) => write!(f, "cyclic parent relation among {}", vars.join(", ")),
        }
    }
}

/// Outcome of [`Scm::validate`]: ok iff `violations` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// A structural causal model over finite domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Scm<P> {
    variables: Vec<VariableSpec>,
    priors: Vec<ExogenousPrior<P>>,
    equations: Vec<StructuralEquation>,
}

/// One joint outcome of the exogenous product space, with all endogenous
/// values propagated.
#[derive(Debug, Clone, PartialEq)]
pub struct World<P> {
    /// Every variable with its value, in declaration order.
    pub assignment: Vec<(String, Value)>,
    pub probability: P,
}

impl<P> World<P> {
    pub fn value(&self, variable: &str) -> Option<&Value> {
        self.assignment.iter().find(|(n, _)| n == variable).map(|(_, v)| v)
    }
}

impl<P: Probability> Scm<P> {
    pub fn new(
        variables: Vec<VariableSpec>,
        priors: Vec<ExogenousPrior<P>>,
        equations: Vec<StructuralEquation>,
    ) -> Self {
        Scm { variables, priors, equations }
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn priors(&self) -> &[ExogenousPrior<P>] {
        &self.priors
    }

    pub fn equations(&self) -> &[StructuralEquation] {
        &self.equations
    }

    pub fn variable(&self, name: &str) -> Result<&VariableSpec, ScmError> {
        self.variables.iter().find(|v| v.name == name).ok_or_else(|| ScmError::UnknownVariable(name.to_string()))
    }

    pub fn domain(&self, name: &str) -> Result<&[Value], ScmError> {
        self.variable(name).map(|v| v.domain.as_slice())
    }

    pub fn prior(&self, name: &str) -> Option<&ExogenousPrior<P>> {
        self.priors.iter().find(|p| p.variable == name)
    }

    pub fn equation(&self, name: &str) -> Option<&StructuralEquation> {
        self.equations.iter().find(|e| e.child == name)
    }

    /// Returns a copy with the prior of `variable` replaced.
    pub fn with_prior(&self, prior: ExogenousPrior<P>) -> Self {
        let mut out = self.clone();
        match out.priors.iter_mut().find(|p| p.variable == prior.variable) {
            Some(slot) => *slot = prior,
            None => out.priors.push(prior),
        }
        out
    }

    /// Checks every model invariant and lists the violations.
    pub fn validate(&self) -> ValidationReport {
        ValidationReport { violations: self.analyze().0 }
    }

    pub(crate) fn compile(&self) -> Result<Compiled<P>, ScmError> {
        match self.analyze() {
            (v, Some(c)) if v.is_empty() => Ok(c),
            (violations, _) => Err(ScmError::Invalid(ValidationReport { violations })),
        }
    }

    /// One world per element of the exogenous product space, in
    /// lexicographic order (first declared exogenous variable outermost,
    /// canonical domain order within each).
    pub fn enumerate_worlds(&self) -> Result<Vec<World<P>>, ScmError> {
        let c = self.compile()?;
        Ok(c.worlds()
            .into_iter()
            .map(|(values, probability)| World {
                assignment: values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (self.variables[i].name.clone(), self.variables[i].domain[v].clone()))
                    .collect(),
                probability,
            })
            .collect())
    }

    /// Marginal pmf of one variable.
    pub fn marginal(&self, variable: &str) -> Result<Distribution<P>, ScmError> {
        let c = self.compile()?;
        let var = c.var_index(variable)?;
        let mut masses = vec![P::zero(); self.variables[var].domain.len()];
        for (values, p) in c.worlds() {
            let m = &mut masses[values[var]];
            *m = m.clone() + p;
        }
        Ok(Distribution::from_entries(
            vec![variable.to_string()],
            self.variables[var].domain.iter().cloned().map(|v| vec![v]).zip(masses).collect(),
        ))
    }

    fn analyze(&self) -> (Vec<Violation>, Option<Compiled<P>>) {
        let mut out = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, v) in self.variables.iter().enumerate() {
            if index.insert(v.name.as_str(), i).is_some() {
                out.push(Violation::DuplicateVariable(v.name.clone()));
            }
            if v.domain.is_empty() {
                out.push(Violation::EmptyDomain(v.name.clone()));
            }
            let mut seen = BTreeSet::new();
            for val in &v.domain {
                if !seen.insert(val) {
                    out.push(Violation::DuplicateDomainValue { variable: v.name.clone(), value: val.to_string() });
                }
            }
        }
        let lookup_val = |var: usize, val: &Value| self.variables[var].domain.iter().position(|d| d == val);

        // priors
        let mut prior_tables: Vec<Option<Vec<P>>> = vec![None; self.variables.len()];
        for prior in &self.priors {
            let Some(&var) = index.get(prior.variable.as_str()) else {
                out.push(Violation::PriorOnUnknownVariable(prior.variable.clone()));
                continue;
            };
            if self.variables[var].kind == VarKind::Endogenous {
                out.push(Violation::PriorOnEndogenous(prior.variable.clone()));
                continue;
            }
            if prior_tables[var].is_some() {
                out.push(Violation::DuplicatePrior(prior.variable.clone()));
                continue;
            }
            let dom = &self.variables[var].domain;
            let mut table: Vec<Option<P>> = vec![None; dom.len()];
            for (val, mass) in &prior.pmf {
                match lookup_val(var, val) {
                    None => out.push(Violation::PriorValueNotInDomain {
                        variable: prior.variable.clone(),
                        value: val.to_string(),
                    }),
                    Some(j) => {
                        if scalar::is_negative(mass) {
                            out.push(Violation::NegativeMass {
                                variable: prior.variable.clone(),
                                value: val.to_string(),
                            });
                        }
                        table[j] = Some(mass.clone());
                    }
                }
            }
            for (j, slot) in table.iter().enumerate() {
                if slot.is_none() {
                    out.push(Violation::PriorNotTotal {
                        variable: prior.variable.clone(),
                        missing: dom[j].to_string(),
                    });
                }
            }
            let total = scalar::sum(prior.pmf.iter().map(|(_, p)| p.clone()));
            if !total.same_mass(&P::one()) {
                out.push(Violation::PriorMassNotOne { variable: prior.variable.clone(), sum: total.to_mass_string() });
            }
            prior_tables[var] = Some(table.into_iter().map(|p| p.unwrap_or_else(P::zero)).collect());
        }
        for (i, v) in self.variables.iter().enumerate() {
            if v.kind == VarKind::Exogenous
                && prior_tables[i].is_none()
                && !self.priors.iter().any(|p| p.variable == v.name)
            {
                out.push(Violation::MissingPrior(v.name.clone()));
            }
        }

        // equations
        let mut eqs: Vec<Option<EquationTable>> = vec![None; self.variables.len()];
        let mut has_eq = vec![false; self.variables.len()];
        for eq in &self.equations {
            let Some(&child) = index.get(eq.child.as_str()) else {
                out.push(Violation::EquationForUnknownVariable(eq.child.clone()));
                continue;
            };
            if self.variables[child].kind == VarKind::Exogenous {
                out.push(Violation::EquationForExogenous(eq.child.clone()));
                continue;
            }
            if has_eq[child] {
                out.push(Violation::DuplicateEquation(eq.child.clone()));
                continue;
            }
            has_eq[child] = true;
            let mut parents = Vec::with_capacity(eq.parents.len());
            let mut parents_ok = true;
            for p in &eq.parents {
                match index.get(p.as_str()) {
                    Some(&pi) => parents.push(pi),
                    None => {
                        parents_ok = false;
                        out.push(Violation::UnknownParent { child: eq.child.clone(), parent: p.clone() });
                    }
                }
            }
            if !parents_ok {
                continue;
            }
            let radices: Vec<usize> = parents.iter().map(|&p| self.variables[p].domain.len()).collect();
            let size: usize = radices.iter().product();
            let mut table: Vec<Option<usize>> = vec![None; size];
            let mut rows_ok = true;
            for (r, (given, value)) in eq.table.iter().enumerate() {
                if given.len() != parents.len() {
                    rows_ok = false;
                    out.push(Violation::RowArity { child: eq.child.clone(), row: r });
                    continue;
                }
                let mut slot = 0usize;
                let mut ok = true;
                for (k, g) in given.iter().enumerate() {
                    match lookup_val(parents[k], g) {
                        Some(j) => slot = slot * radices[k] + j,
                        None => {
                            ok = false;
                            out.push(Violation::RowValueNotInDomain {
                                child: eq.child.clone(),
                                row: r,
                                value: g.to_string(),
                            });
                        }
                    }
                }
                let out_idx = lookup_val(child, value);
                if out_idx.is_none() {
                    out.push(Violation::OutputNotInDomain { child: eq.child.clone(), value: value.to_string() });
                }
                if !ok || out_idx.is_none() {
                    rows_ok = false;
                    continue;
                }
                if table[slot].is_some() {
                    rows_ok = false;
                    out.push(Violation::DuplicateRow { child: eq.child.clone(), given: join(given) });
                    continue;
                }
                table[slot] = out_idx;
            }
            if table.iter().any(Option::is_none) {
                rows_ok = false;
                let doms: Vec<&[Value]> = parents.iter().map(|&p| self.variables[p].domain.as_slice()).collect();
                for (slot, tuple) in cartesian(&doms).into_iter().enumerate() {
                    if table[slot].is_none() {
                        out.push(Violation::EquationNotTotal { child: eq.child.clone(), missing: join(&tuple) });
                    }
                }
            }
            if rows_ok {
                eqs[child] =
                    Some(EquationTable { parents, radices, table: table.into_iter().map(Option::unwrap).collect() });
            } else {
                eqs[child] = Some(EquationTable { parents, radices, table: Vec::new() });
            }
        }
        for (i, v) in self.variables.iter().enumerate() {
            if v.kind == VarKind::Endogenous && !has_eq[i] {
                out.push(Violation::MissingEquation(v.name.clone()));
            }
        }

        // acyclicity (Kahn, smallest declaration index first)
        let endo: Vec<usize> =
            (0..self.variables.len()).filter(|&i| self.variables[i].kind == VarKind::Endogenous).collect();
        let mut indeg = vec![0usize; self.variables.len()];
        for &i in &endo {
            if let Some(e) = &eqs[i] {
                indeg[i] = e.parents.iter().filter(|&&p| self.variables[p].kind == VarKind::Endogenous).count();
            }
        }
        let mut done = vec![false; self.variables.len()];
        let mut topo = Vec::with_capacity(endo.len());
        while let Some(&next) = endo.iter().find(|&&i| !done[i] && indeg[i] == 0) {
            done[next] = true;
            topo.push(next);
            for &j in &endo {
                if let Some(e) = &eqs[j] {
                    let n = e.parents.iter().filter(|&&p| p == next).count();
                    indeg[j] -= n;
                }
            }
        }
        if topo.len() < endo.len() {
            out.push(Violation::Cycle(
                endo.iter().filter(|&&i| !done[i]).map(|&i| self.variables[i].name.clone()).collect(),
            ));
        }

        if !out.is_empty() {
            return (out, None);
        }
        let exogenous: Vec<usize> =
            (0..self.variables.len()).filter(|&i| self.variables[i].kind == VarKind::Exogenous).collect();
        let compiled = Compiled {
            names: self.variables.iter().map(|v| v.name.clone()).collect(),
            domains: self.variables.iter().map(|v| v.domain.clone()).collect(),
            kinds: self.variables.iter().map(|v| v.kind).collect(),
            priors: prior_tables,
            exogenous,
            topo,
            equations: eqs,
        };
        (out, Some(compiled))
    }
}

fn join(vals: &[Value]) -> String {
    vals.iter().map(Value::as_str).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone)]
pub(crate) struct EquationTable {
    parents: Vec<usize>,
    radices: Vec<usize>,
    table: Vec<usize>,
}

impl EquationTable {
    fn eval(&self, values: &[usize]) -> usize {
        let mut slot = 0;
        for (k, &p) in self.parents.iter().enumerate() {
            slot = slot * self.radices[k] + values[p];
        }
        self.table[slot]
    }
}

/// Index-based form of a validated model used by the inference routines.
#[derive(Debug, Clone)]
pub(crate) struct Compiled<P> {
    pub names: Vec<String>,
    pub domains: Vec<Vec<Value>>,
    pub kinds: Vec<VarKind>,
    priors: Vec<Option<Vec<P>>>,
    pub exogenous: Vec<usize>,
    topo: Vec<usize>,
    equations: Vec<Option<EquationTable>>,
}

impl<P: Probability> Compiled<P> {
    pub fn var_index(&self, name: &str) -> Result<usize, ScmError> {
        self.names.iter().position(|n| n == name).ok_or_else(|| ScmError::UnknownVariable(name.to_string()))
    }

    pub fn value_index(&self, var: usize, value: &Value) -> Result<usize, ScmError> {
        self.domains[var]
            .iter()
            .position(|v| v == value)
            .ok_or_else(|| ScmError::ValueNotInDomain { variable: self.names[var].clone(), value: value.to_string() })
    }

    pub fn prior_mass(&self, var: usize, value: usize) -> &P {
        &self.priors[var].as_ref().expect("exogenous variable has a prior")[value]
    }

    /// Fills every endogenous slot not marked `fixed` from its equation, in
    /// topological order.
    pub fn propagate(&self, values: &mut [usize], fixed: &[bool]) {
        for &v in &self.topo {
            if !fixed[v] {
                values[v] = self.equations[v].as_ref().expect("endogenous has equation").eval(values);
            }
        }
    }

    /// Draws one world: each exogenous variable independently from its prior
    /// by inverse CDF on a uniform `f64`, then propagation.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut values = vec![0usize; self.names.len()];
        for &e in &self.exogenous {
            let masses = self.priors[e].as_ref().expect("exogenous variable has a prior");
            values[e] = crate::augment::inverse_cdf(masses.iter().map(|p| p.to_f64()), rng.gen::<f64>());
        }
        self.propagate(&mut values, &vec![false; self.names.len()]);
        values
    }

    /// Every exogenous combination with its prior probability and the
    /// propagated endogenous values.
    pub fn worlds(&self) -> Vec<(Vec<usize>, P)> {
        let n = self.names.len();
        let mut out = Vec::new();
        let mut values = vec![0usize; n];
        let no_fix = vec![false; n];
        loop {
            let p = self.exogenous.iter().fold(P::one(), |acc, &e| acc * self.prior_mass(e, values[e]).clone());
            let mut w = values.clone();
            self.propagate(&mut w, &no_fix);
            out.push((w, p));
            // odometer over exogenous variables, last declared fastest
            let mut k = self.exogenous.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                let e = self.exogenous[k];
                values[e] += 1;
                if values[e] < self.domains[e].len() {
                    break;
                }
                values[e] = 0;
            }
        }
    }
}
