use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::scalar::Probability;
use crate::scm::Value;

/// Finite probability mass function over one variable or a tuple of
/// variables.
///
/// Entries cover the full product of the variables' domains in canonical
/// (lexicographic, declaration) order, zero-mass entries included.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<P> {
    variables: Vec<String>,
    entries: Vec<(Vec<Value>, P)>,
}

impl<P: Probability> Distribution<P> {
    pub(crate) fn from_entries(variables: Vec<String>, entries: Vec<(Vec<Value>, P)>) -> Self {
        debug_assert!(entries.iter().all(|(k, _)| k.len() == variables.len()));
        Distribution { variables, entries }
    }

    /// Point mass on `value` over a single variable with the given domain.
    pub fn point_mass(variable: &str, domain: &[Value], value: &Value) -> Self {
        let entries = domain.iter().map(|v| (vec![v.clone()], if v == value { P::one() } else { P::zero() })).collect();
        Distribution { variables: vec![variable.to_string()], entries }
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn entries(&self) -> &[(Vec<Value>, P)] {
        &self.entries
    }

    /// Mass of a value tuple; zero for tuples outside the table.
    pub fn mass(&self, key: &[Value]) -> P {
        self.entries.iter().find(|(k, _)| k.as_slice() == key).map(|(_, p)| p.clone()).unwrap_or_else(P::zero)
    }

    /// Mass of a single value of a one-variable distribution.
    pub fn mass_of(&self, value: &Value) -> P {
        self.mass(std::slice::from_ref(value))
    }

    pub fn total(&self) -> P {
        crate::scalar::sum(self.entries.iter().map(|(_, p)| p.clone()))
    }

    pub fn is_normalized(&self) -> bool {
        self.total().same_mass(&P::one())
    }

    /// Tuples with strictly positive mass, in canonical order.
    pub fn support(&self) -> Vec<Vec<Value>> {
        self.entries.iter().filter(|(_, p)| p.is_positive_mass()).map(|(k, _)| k.clone()).collect()
    }

    /// Support of a one-variable distribution.
    pub fn support_values(&self) -> Vec<Value> {
        self.entries.iter().filter(|(_, p)| p.is_positive_mass()).map(|(k, _)| k[0].clone()).collect()
    }

    pub fn positive_entries(&self) -> impl Iterator<Item = (&[Value], &P)> {
        self.entries.iter().filter(|(_, p)| p.is_positive_mass()).map(|(k, p)| (k.as_slice(), p))
    }

    /// The single supported tuple, if the distribution is a point mass.
    pub fn as_point_mass(&self) -> Option<&[Value]> {
        let mut it = self.positive_entries();
        match (it.next(), it.next()) {
            (Some((k, _)), None) => Some(k),
            _ => None,
        }
    }

    /// Decimal rendering of the supported entries.
    pub fn approx_string(&self) -> String {
        self.positive_entries()
            .map(|(k, p)| format!("{}: {:.6}", join_key(k), p.to_f64()))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn to_doc(&self) -> DistributionDoc {
        DistributionDoc {
            variables: self.variables.clone(),
            pmf: self
                .entries
                .iter()
                .map(|(k, p)| MassEntry { value: k.clone(), mass: p.to_mass_string(), approx: p.to_f64() })
                .collect(),
        }
    }

    pub fn from_doc(doc: &DistributionDoc) -> Result<Self, ParseError> {
        let entries = doc
            .pmf
            .iter()
            .map(|e| Ok((e.value.clone(), P::parse_mass(&e.mass)?)))
            .collect::<Result<Vec<_>, ParseError>>()?;
        Ok(Distribution { variables: doc.variables.clone(), entries })
    }
}

fn join_key(k: &[Value]) -> String {
    k.iter().map(Value::as_str).collect::<Vec<_>>().join(",")
}

/// Lists the supported entries as `value: mass` pairs.
impl<P: Probability> fmt::Display for Distribution<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.positive_entries().map(|(k, p)| format!("{}: {}", join_key(k), p.to_mass_string())).collect();
        f.write_str(&parts.join(", "))
    }
}

/// Machine-readable form of a [`Distribution`]. Masses are exact `p/q`
/// strings; `approx` is informational only and ignored when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionDoc {
    pub variables: Vec<String>,
    pub pmf: Vec<MassEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassEntry {
    pub value: Vec<Value>,
    pub mass: String,
    pub approx: f64,
}
