//! File formats: the JSON model schema and the newline-delimited dataset
//! records.
//!
//! Model files look like
//!
//! ```json
//! {
//!   "variables": [{"name": "U", "kind": "exogenous", "domain": ["a", "b"]},
//!                 {"name": "X", "kind": "endogenous", "domain": ["0", "1"]}],
//!   "priors": {"U": {"a": "1/4", "b": "0.75"}},
//!   "equations": [{"child": "X", "parents": ["U"],
//!                  "table": [{"given": ["a"], "value": "0"},
//!                            {"given": ["b"], "value": "1"}]}]
//! }
//! ```
//!
//! Unknown keys are rejected. Parsing only checks shape; semantic problems
//! (masses not summing to one, partial tables, ...) surface through
//! [`Scm::validate`].

use std::fmt;
use std::marker::PhantomData;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::augment::{AugmentMode, AugmentedDataset, AugmentedExample, ContextUsed, LabeledExample};
use crate::error::ParseError;
use crate::scalar::Probability;
use crate::scm::{ExogenousPrior, Scm, StructuralEquation, Value, VarKind, VariableSpec};

/// JSON object that keeps key order and duplicate keys.
#[derive(Debug, Clone, PartialEq)]
struct OrderedMap<V>(Vec<(String, V)>);

impl<V: Serialize> Serialize for OrderedMap<V> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for OrderedMap<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V2<V>(PhantomData<V>);
        impl<'de, V: Deserialize<'de>> Visitor<'de> for V2<V> {
            type Value = OrderedMap<V>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = a.next_entry()? {
                    out.push((k, v));
                }
                Ok(OrderedMap(out))
            }
        }
        d.deserialize_map(V2(PhantomData))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScmFile {
    variables: Vec<VariableEntry>,
    priors: OrderedMap<OrderedMap<String>>,
    equations: Vec<EquationEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableEntry {
    name: String,
    kind: VarKind,
    domain: Vec<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EquationEntry {
    child: String,
    parents: Vec<String>,
    table: Vec<RowEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowEntry {
    given: Vec<Value>,
    value: Value,
}

pub fn parse_scm<P: Probability>(text: &str) -> Result<Scm<P>, ParseError> {
    let file: ScmFile = serde_json::from_str(text).map_err(|e| ParseError::json("model file", &e))?;
    let variables =
        file.variables.into_iter().map(|v| VariableSpec { name: v.name, kind: v.kind, domain: v.domain }).collect();
    let mut priors = Vec::new();
    for (name, pmf) in file.priors.0 {
        let mut entries = Vec::with_capacity(pmf.0.len());
        for (value, mass) in pmf.0 {
            let p = P::parse_mass(&mass).map_err(|_| ParseError::Field {
                field: format!("priors.{name}.{value}"),
                message: format!("{mass:?} is not a rational (p/q) or decimal string"),
            })?;
            entries.push((Value::from(value), p));
        }
        priors.push(ExogenousPrior { variable: name, pmf: entries });
    }
    let equations = file
        .equations
        .into_iter()
        .map(|e| StructuralEquation {
            child: e.child,
            parents: e.parents,
            table: e.table.into_iter().map(|r| (r.given, r.value)).collect(),
        })
        .collect();
    Ok(Scm::new(variables, priors, equations))
}

pub fn scm_to_json<P: Probability>(scm: &Scm<P>) -> String {
    let file = ScmFile {
        variables: scm
            .variables()
            .iter()
            .map(|v| VariableEntry { name: v.name.clone(), kind: v.kind, domain: v.domain.clone() })
            .collect(),
        priors: OrderedMap(
            scm.priors()
                .iter()
                .map(|p| {
                    let inner = p.pmf.iter().map(|(v, m)| (v.to_string(), m.to_mass_string())).collect();
                    (p.variable.clone(), OrderedMap(inner))
                })
                .collect(),
        ),
        equations: scm
            .equations()
            .iter()
            .map(|e| EquationEntry {
                child: e.child.clone(),
                parents: e.parents.clone(),
                table: e.table.iter().map(|(g, v)| RowEntry { given: g.clone(), value: v.clone() }).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
}

/// Reads `{"x": .., "y": .., "weight": ..}` records, one per line. Blank
/// lines are skipped; `weight` defaults to 1.
pub fn parse_dataset(text: &str) -> Result<Vec<LabeledExample>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = serde_json::from_str(line).map_err(|e| ParseError::Json {
            context: "dataset record".into(),
            message: e.to_string(),
            line: i + 1,
            column: e.column(),
        })?;
        if ex.weight == 0 {
            return Err(ParseError::Field {
                field: format!("line {}: weight", i + 1),
                message: "must be positive".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn dataset_to_jsonl(data: &[LabeledExample]) -> String {
    data.iter().map(|e| serde_json::to_string(e).expect("record serializes") + "\n").collect()
}

/// One line of the augmented-dataset output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentedRecord {
    pub x: Value,
    pub y: Value,
    pub weight: u64,
    pub source_x: Value,
    pub intervened_z: Value,
    pub mode: AugmentMode,
    pub context_used: ContextUsed,
    pub mass: String,
}

impl AugmentedRecord {
    pub fn from_example<P: Probability>(a: &AugmentedExample<P>) -> Self {
        AugmentedRecord {
            x: a.x_prime.clone(),
            y: a.y.clone(),
            weight: 1,
            source_x: a.source_x.clone(),
            intervened_z: a.intervened_z.clone(),
            mode: a.mode,
            context_used: a.context_used.clone(),
            mass: a.mass.to_mass_string(),
        }
    }

    pub fn to_example<P: Probability>(&self) -> Result<AugmentedExample<P>, ParseError> {
        Ok(AugmentedExample {
            x_prime: self.x.clone(),
            y: self.y.clone(),
            source_x: self.source_x.clone(),
            intervened_z: self.intervened_z.clone(),
            mode: self.mode,
            context_used: self.context_used.clone(),
            mass: P::parse_mass(&self.mass)?,
        })
    }
}

pub fn augmented_to_jsonl<P: Probability>(aug: &AugmentedDataset<P>) -> String {
    aug.augmented
        .iter()
        .map(|a| serde_json::to_string(&AugmentedRecord::from_example(a)).expect("record serializes") + "\n")
        .collect()
}

pub fn parse_augmented<P: Probability>(text: &str) -> Result<Vec<AugmentedExample<P>>, ParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let r: AugmentedRecord = serde_json::from_str(line).map_err(|e| ParseError::Json {
                context: "augmented record".into(),
                message: e.to_string(),
                line: i + 1,
                column: e.column(),
            })?;
            r.to_example()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    const TINY: &str = r#"{
      "variables": [{"name": "U", "kind": "exogenous", "domain": ["a", "b"]},
                    {"name": "X", "kind": "endogenous", "domain": ["0", "1"]}],
      "priors": {"U": {"b": "0.75", "a": "1/4"}},
      "equations": [{"child": "X", "parents": ["U"],
                     "table": [{"given": ["a"], "value": "0"}, {"given": ["b"], "value": "1"}]}]
    }"#;

    #[test]
    fn parses_model_file() {
        let m: Scm<BigRational> = parse_scm(TINY).unwrap();
        assert!(m.validate().is_ok());
        assert_eq!(m.prior("U").unwrap().pmf[0], (Value::from("b"), ratio(3, 4)));
        let again: Scm<BigRational> = parse_scm(&scm_to_json(&m)).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TINY.replacen("\"priors\"", "\"extra\": 1, \"priors\"", 1);
        assert!(matches!(parse_scm::<BigRational>(&bad), Err(ParseError::Json { .. })));
        let bad = TINY.replacen("\"kind\": \"exogenous\"", "\"kind\": \"exogenous\", \"note\": \"x\"", 1);
        assert!(parse_scm::<BigRational>(&bad).is_err());
    }

    #[test]
    fn truncated_file_reports_position() {
        match parse_scm::<BigRational>(&TINY[..80]) {
            Err(ParseError::Json { line, .. }) => assert!(line >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_mass_names_the_field() {
        let bad = TINY.replace("\"1/4\"", "\"a quarter\"");
        match parse_scm::<BigRational>(&bad) {
            Err(ParseError::Field { field, .. }) => assert_eq!(field, "priors.U.a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dataset_lines() {
        let text = "{\"x\": \"a\", \"y\": \"b\", \"weight\": 2}\n\n{\"x\": \"c\", \"y\": \"d\"}\n";
        let d = parse_dataset(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].weight, 1);
        assert_eq!(parse_dataset(&dataset_to_jsonl(&d)).unwrap(), d);
        match parse_dataset("{\"x\": \"a\"}\n{oops") {
            Err(ParseError::Json { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_dataset("{\"x\": \"a\", \"y\": \"b\", \"weight\": 0}").is_err());
    }
}
