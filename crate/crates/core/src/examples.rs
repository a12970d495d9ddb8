//! The two worked models, a partition-based classifier, and the end-to-end
//! demonstrations built on them.
//!
//! * The linear model `X = Z + 2 U_X` is the minimal case where a
//!   context-guessing augmenter imposes strictly weaker invariance than true
//!   counterfactual augmentation.
//! * The review model encodes a helpfulness-classification task whose input
//!   is a `content|tone` placeholder; sarcastic reviewers (`U_X = -1`) write
//!   positive text when they dislike the product.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentVars, AugmentedDataset, DrawMode, LabeledExample};
use crate::distribution::DistributionDoc;
use crate::error::{DemoError, InferenceError};
use crate::inference::{self, Assignment, CounterfactualQuery};
use crate::invariance::{self, AuditReport, Partition, PartitionVerdict, SupportCheck};
use crate::scalar::{ratio, Probability};
use crate::scm::{ExogenousPrior, Scm, StructuralEquation, Value, VariableSpec};

/// `X = Z + 2 U_X` with `Z ∈ {-1, 1}` uniform and
/// `P(U_X = ±1) = 2/5`, `P(U_X = 0) = 1/5`.
pub fn build_linear_scm<P: Probability>() -> Scm<P> {
    let p = |n, d| P::from_ratio(&ratio(n, d));
    let z: Vec<Value> = ["-1", "1"].map(Value::from).to_vec();
    let u: Vec<Value> = ["-1", "0", "1"].map(Value::from).to_vec();
    let x = StructuralEquation::tabulate("X", &[("Z", &z), ("U_X", &u)], |t| {
        let z: i64 = t[0].as_str().parse().expect("integer label");
        let u: i64 = t[1].as_str().parse().expect("integer label");
        Value::new((z + 2 * u).to_string())
    });
    Scm::new(
        vec![
            VariableSpec::exogenous("Z", z.clone()),
            VariableSpec::exogenous("U_X", u.clone()),
            VariableSpec::endogenous("X", ["-3", "-1", "1", "3"]),
        ],
        vec![
            ExogenousPrior::new("Z", [("-1", p(1, 2)), ("1", p(1, 2))]),
            ExogenousPrior::new("U_X", [("-1", p(2, 5)), ("0", p(1, 5)), ("1", p(2, 5))]),
        ],
        vec![x],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tone {
    Positive,
    Negative,
    Neutral,
}

impl Tone {
    pub const ALL: [Tone; 3] = [Tone::Positive, Tone::Negative, Tone::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Tone::Positive => "positive",
            Tone::Negative => "negative",
            Tone::Neutral => "neutral",
        }
    }

    /// Tone written by a reviewer of the given type (`U_X`) and sentiment.
    pub fn written(straightforward: bool, likes: bool) -> Tone {
        match (straightforward, likes) {
            (true, true) => Tone::Positive,
            (true, false) => Tone::Negative,
            (false, true) => Tone::Neutral,
            (false, false) => Tone::Positive,
        }
    }
}

/// A review placeholder, encoded as the single value `content|tone`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReviewInput {
    pub content: String,
    pub tone: Tone,
}

impl ReviewInput {
    pub fn new(content: &str, tone: Tone) -> Self {
        ReviewInput { content: content.to_string(), tone }
    }

    pub fn to_value(&self) -> Value {
        Value::new(format!("{}|{}", self.content, self.tone.as_str()))
    }

    pub fn parse(v: &Value) -> Option<Self> {
        let (content, tone) = v.as_str().split_once('|')?;
        let tone = Tone::ALL.into_iter().find(|t| t.as_str() == tone)?;
        Some(ReviewInput::new(content, tone))
    }
}

pub const HELPFUL: &str = "helpful";
pub const NOT_HELPFUL: &str = "not_helpful";

/// Content labels `good_1, poor_1, good_2, poor_2, ...`.
pub fn review_contents(n_contents: usize) -> Vec<String> {
    (0..n_contents)
        .map(|i| if i % 2 == 0 { format!("good_{}", i / 2 + 1) } else { format!("poor_{}", i / 2 + 1) })
        .collect()
}

/// Review model with `P(U_X = 1) = 9/10` and two contents.
pub fn build_review_scm<P: Probability>() -> Scm<P> {
    build_review_scm_with(2, &ratio(9, 10))
}

/// Review model with `n_contents` uniformly likely contents and
/// `P(U_X = 1) = p_straightforward`.
pub fn build_review_scm_with<P: Probability>(n_contents: usize, p_straightforward: &BigRational) -> Scm<P> {
    let p = |r: &BigRational| P::from_ratio(r);
    let contents = review_contents(n_contents);
    let z: Vec<Value> = ["like", "dislike"].map(Value::from).to_vec();
    let c: Vec<Value> = contents.iter().map(|s| Value::from(s.as_str())).collect();
    let ux: Vec<Value> = ["1", "-1"].map(Value::from).to_vec();
    let uy: Vec<Value> = vec![Value::from("0")];
    let x_domain: Vec<Value> =
        contents.iter().flat_map(|content| Tone::ALL.map(|t| ReviewInput::new(content, t).to_value())).collect();
    let x = StructuralEquation::tabulate("X", &[("Z", &z), ("C", &c), ("U_X", &ux)], |t| {
        let tone = Tone::written(t[2].as_str() == "1", t[0].as_str() == "like");
        ReviewInput::new(t[1].as_str(), tone).to_value()
    });
    let y = StructuralEquation::tabulate("Y", &[("C", &c), ("U_Y", &uy)], |t| {
        Value::from(if t[0].as_str().starts_with("good") { HELPFUL } else { NOT_HELPFUL })
    });
    let uniform = ratio(1, n_contents as i64);
    Scm::new(
        vec![
            VariableSpec::exogenous("Z", z),
            VariableSpec::exogenous("C", c.clone()),
            VariableSpec::exogenous("U_X", ux),
            VariableSpec::exogenous("U_Y", uy),
            VariableSpec::endogenous("X", x_domain),
            VariableSpec::endogenous("Y", [HELPFUL, NOT_HELPFUL]),
        ],
        vec![
            ExogenousPrior::new("Z", [("like", p(&ratio(1, 2))), ("dislike", p(&ratio(1, 2)))]),
            ExogenousPrior::new("C", c.into_iter().map(|v| (v, p(&uniform)))),
            ExogenousPrior::new(
                "U_X",
                [("1", p(p_straightforward)), ("-1", p(&(BigRational::one() - p_straightforward)))],
            ),
            ExogenousPrior::new("U_Y", [("0", P::one())]),
        ],
        vec![x, y],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    Abstain,
    MajorityGlobal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub label: Value,
    /// Two or more labels had the same top weight.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Label(Value),
    Abstain,
}

/// Classifier that is constant on each class of a partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionClassifier {
    pub partition: Partition,
    /// Aligned with `partition.classes`; `None` for classes no training
    /// example fell into.
    pub class_labels: Vec<Option<ClassLabel>>,
    pub fallback: Fallback,
    pub label_domain: Vec<Value>,
    pub global_majority: Option<ClassLabel>,
}

fn weighted_majority<'a>(
    label_domain: &[Value],
    examples: impl Iterator<Item = &'a LabeledExample>,
) -> Option<ClassLabel> {
    let mut counts = vec![0u64; label_domain.len()];
    let mut any = false;
    for ex in examples {
        if let Some(j) = label_domain.iter().position(|l| l == &ex.y) {
            counts[j] += ex.weight;
            any = true;
        }
    }
    if !any {
        return None;
    }
    let best = *counts.iter().max().expect("nonempty label domain");
    let first = counts.iter().position(|&c| c == best).expect("max is attained");
    Some(ClassLabel { label: label_domain[first].clone(), tie: counts.iter().filter(|&&c| c == best).count() > 1 })
}

/// Labels each class by weighted majority over its training examples; ties
/// go to the earliest label in `label_domain`.
pub fn fit_partition_classifier(
    train: &[LabeledExample],
    partition: &Partition,
    label_domain: &[Value],
    fallback: Fallback,
) -> Result<PartitionClassifier, DemoError> {
    if let Some(ex) = train.iter().find(|ex| partition.class_of(&ex.x).is_none()) {
        return Err(DemoError::Parameter(format!(
            "training input {:?} is not covered by the partition",
            ex.x.as_str()
        )));
    }
    let class_labels = partition
        .classes
        .iter()
        .map(|class| weighted_majority(label_domain, train.iter().filter(|ex| class.contains(&ex.x))))
        .collect();
    Ok(PartitionClassifier {
        partition: partition.clone(),
        class_labels,
        fallback,
        label_domain: label_domain.to_vec(),
        global_majority: weighted_majority(label_domain, train.iter()),
    })
}

impl PartitionClassifier {
    pub fn predict(&self, x: &Value) -> Prediction {
        let labelled = self.partition.class_of(x).and_then(|i| self.class_labels[i].as_ref()).map(|c| c.label.clone());
        match (labelled, self.fallback, &self.global_majority) {
            (Some(l), _, _) => Prediction::Label(l),
            (None, Fallback::MajorityGlobal, Some(g)) => Prediction::Label(g.label.clone()),
            _ => Prediction::Abstain,
        }
    }

    /// Input values (from `domain`) the classifier abstains on.
    pub fn abstention_set(&self, domain: &[Value]) -> BTreeSet<Value> {
        domain.iter().filter(|x| self.predict(x) == Prediction::Abstain).cloned().collect()
    }

    fn check_domains<P: Probability>(&self, scm: &Scm<P>, input_var: &str, label_var: &str) -> Result<(), DemoError> {
        let xd = scm.domain(input_var).map_err(InferenceError::from)?;
        let yd = scm.domain(label_var).map_err(InferenceError::from)?;
        if yd != self.label_domain.as_slice() || self.partition.support().iter().any(|v| !xd.contains(v)) {
            return Err(DemoError::Parameter("test model does not share the classifier's input/label domains".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// Members of the partition class, or empty for inputs outside it.
    pub class: Vec<Value>,
    pub label: Option<Value>,
    pub count: u64,
    pub correct: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub n: usize,
    pub seed: u64,
    /// Abstentions count as errors.
    pub accuracy: f64,
    pub abstention_rate: f64,
    pub per_class: Vec<ClassStats>,
}

/// Scores the classifier on `n` draws from the test model.
pub fn ood_eval<P: Probability>(
    classifier: &PartitionClassifier,
    scm_test: &Scm<P>,
    input_var: &str,
    label_var: &str,
    n: usize,
    seed: u64,
) -> Result<OodReport, DemoError> {
    classifier.check_domains(scm_test, input_var, label_var)?;
    let sample = augment::sample_dataset(scm_test, input_var, label_var, n, seed)?;
    let mut per_class: Vec<ClassStats> = classifier
        .partition
        .classes
        .iter()
        .zip(&classifier.class_labels)
        .map(|(c, l)| ClassStats { class: c.clone(), label: l.as_ref().map(|l| l.label.clone()), count: 0, correct: 0 })
        .collect();
    per_class.push(ClassStats { class: Vec::new(), label: None, count: 0, correct: 0 });
    let (mut correct, mut abstained) = (0u64, 0u64);
    for ex in &sample {
        let slot = classifier.partition.class_of(&ex.x).unwrap_or(per_class.len() - 1);
        per_class[slot].count += 1;
        match classifier.predict(&ex.x) {
            Prediction::Label(l) if l == ex.y => {
                correct += 1;
                per_class[slot].correct += 1;
            }
            Prediction::Label(_) => {}
            Prediction::Abstain => abstained += 1,
        }
    }
    Ok(OodReport {
        n,
        seed,
        accuracy: correct as f64 / n as f64,
        abstention_rate: abstained as f64 / n as f64,
        per_class,
    })
}

/// Exact expected accuracy and abstention rate over the test model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEval<P> {
    pub accuracy: P,
    pub abstention: P,
}

pub fn exact_eval<P: Probability>(
    classifier: &PartitionClassifier,
    scm_test: &Scm<P>,
    input_var: &str,
    label_var: &str,
) -> Result<ExactEval<P>, DemoError> {
    classifier.check_domains(scm_test, input_var, label_var)?;
    let worlds = scm_test.enumerate_worlds().map_err(InferenceError::from)?;
    let (mut accuracy, mut abstention) = (P::zero(), P::zero());
    for w in worlds {
        let x = w.value(input_var).expect("input variable in world");
        let y = w.value(label_var).expect("label variable in world");
        match classifier.predict(x) {
            Prediction::Label(l) if &l == y => accuracy = accuracy + w.probability,
            Prediction::Label(_) => {}
            Prediction::Abstain => abstention = abstention + w.probability,
        }
    }
    Ok(ExactEval { accuracy, abstention })
}

/// Pass/fail record of one demo check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(checks: &mut Vec<Check>, name: &str, passed: bool, detail: String) {
    checks.push(Check { name: name.to_string(), passed, detail });
}

fn first_failure(checks: &[Check]) -> Result<(), DemoError> {
    match checks.iter().find(|c| !c.passed) {
        Some(c) => Err(DemoError::Assertion(format!("{}: {}", c.name, c.detail))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualEntry {
    pub x: Value,
    pub z: Value,
    pub distribution: DistributionDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub x: Value,
    pub z_map: Value,
    pub tie: bool,
    pub posterior: DistributionDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub marginal_x: DistributionDoc,
    /// `X(Z=z) | X=x` for every supported `x` and `z`.
    pub counterfactuals: Vec<CounterfactualEntry>,
    pub map_contexts: Vec<MapEntry>,
    /// `X(Z=z) | X=x, Z=z_MAP(x)`.
    pub guess_counterfactuals: Vec<CounterfactualEntry>,
    pub audit: AuditReport,
    pub checks: Vec<Check>,
}

impl AppendixReport {
    pub fn passed(&self) -> Result<(), DemoError> {
        first_failure(&self.checks)
    }
}

/// Runs the full audit on the linear model and checks every intermediate
/// quantity against its hand-derived value.
pub fn run_appendix_demo() -> Result<AppendixReport, DemoError> {
    type Q = BigRational;
    let scm: Scm<Q> = build_linear_scm();
    let marginal = scm.marginal("X").map_err(InferenceError::from)?;
    let xs = marginal.support_values();
    let zs = scm.marginal("Z").map_err(InferenceError::from)?.support_values();

    let mut counterfactuals = Vec::new();
    let mut map_contexts = Vec::new();
    let mut guess_counterfactuals = Vec::new();
    for x in &xs {
        let e = Assignment::new().with("X", x.clone());
        let guess = inference::map_context(&scm, "Z", &e)?;
        for z in &zs {
            let q = CounterfactualQuery::new("X", Assignment::new().with("Z", z.clone()), e.clone());
            counterfactuals.push(CounterfactualEntry {
                x: x.clone(),
                z: z.clone(),
                distribution: inference::counterfactual(&scm, &q)?.to_doc(),
            });
            guess_counterfactuals.push(CounterfactualEntry {
                x: x.clone(),
                z: z.clone(),
                distribution: inference::guess_counterfactual(&scm, "X", "Z", z, &e)?.to_doc(),
            });
        }
        map_contexts.push(MapEntry {
            x: x.clone(),
            z_map: guess.value.clone(),
            tie: guess.tie,
            posterior: guess.posterior.to_doc(),
        });
    }
    let audit = invariance::audit(&scm, "X", "Z")?;

    let v = Value::from;
    let find = |entries: &[CounterfactualEntry], x: &str, z: &str| -> String {
        entries
            .iter()
            .find(|e| e.x.as_str() == x && e.z.as_str() == z)
            .map(|e| crate::Distribution::<Q>::from_doc(&e.distribution).expect("own doc").to_string())
            .unwrap_or_default()
    };
    let mut checks = Vec::new();
    let got = find(&counterfactuals, "1", "1");
    check(&mut checks, "cf X(Z=1)|X=1", got == "1: 1/3, 3: 2/3", got);
    let got = find(&counterfactuals, "1", "-1");
    check(&mut checks, "cf X(Z=-1)|X=1", got == "-1: 1/3, 1: 2/3", got);
    let map1 = map_contexts.iter().find(|m| m.x == v("1")).expect("x=1 supported");
    check(&mut checks, "z_MAP(1)", map1.z_map == v("-1") && !map1.tie, map1.z_map.to_string());
    let got = find(&guess_counterfactuals, "1", "1");
    check(&mut checks, "guess X(Z=1)|X=1,Z=-1", got == "3: 1", got);
    let got = find(&guess_counterfactuals, "1", "-1");
    check(&mut checks, "guess X(Z=-1)|X=1,Z=-1", got == "1: 1", got);
    check(
        &mut checks,
        "cf partition",
        audit.cf_partition.to_string() == "{-3, -1, 1, 3}",
        audit.cf_partition.to_string(),
    );
    check(
        &mut checks,
        "cda partition",
        audit.cda_partition.to_string() == "{-3, -1} {1, 3}",
        audit.cda_partition.to_string(),
    );
    check(
        &mut checks,
        "support subset",
        audit.support_check == SupportCheck::Holds,
        format!("{:?}", audit.support_check),
    );
    check(&mut checks, "verdict", audit.verdict == PartitionVerdict::CdaStrictlyFiner, audit.verdict.to_string());

    Ok(AppendixReport {
        marginal_x: marginal.to_doc(),
        counterfactuals,
        map_contexts,
        guess_counterfactuals,
        audit,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDemoConfig {
    pub train_n: usize,
    pub seed: u64,
    /// `P(U_X = 1)` of the test model, as an exact string.
    pub test_prior_ux: String,
    /// Draws for the sampled evaluation reported next to the exact one.
    pub eval_n: usize,
}

impl Default for ReviewDemoConfig {
    fn default() -> Self {
        ReviewDemoConfig { train_n: 500, seed: 0, test_prior_ux: "1/10".into(), eval_n: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleCheck {
    pub x: Value,
    pub y: Value,
    pub guess_x_primes: Vec<Value>,
    pub full_x_primes: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub partition: Partition,
    pub abstains_on: Vec<Value>,
    pub exact_accuracy: String,
    pub exact_accuracy_approx: f64,
    pub exact_abstention: String,
    pub sampled: OodReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub description: String,
    pub train_size: usize,
    pub train_inputs: Vec<Value>,
    pub guess: ClassifierReport,
    pub full: ClassifierReport,
    /// Exact full-CDA accuracy minus exact guess-CDA accuracy.
    pub gap: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub config: ReviewDemoConfig,
    pub example: ExampleCheck,
    /// Invariance audit of the training model over its full input support.
    pub audit: AuditReport,
    /// `P(tone = neutral)` under the test model.
    pub test_neutral_mass: String,
    pub variants: Vec<VariantReport>,
    pub checks: Vec<Check>,
}

impl ReviewReport {
    pub fn passed(&self) -> Result<(), DemoError> {
        first_failure(&self.checks)
    }
}

struct Trained {
    report: ClassifierReport,
    accuracy: BigRational,
    abstains: BTreeSet<Value>,
}

fn train_and_score(
    aug: &AugmentedDataset<BigRational>,
    train_scm: &Scm<BigRational>,
    test_scm: &Scm<BigRational>,
    config: &ReviewDemoConfig,
) -> Result<Trained, DemoError> {
    let partition = invariance::partition_from(&augment::induced_constraints(aug));
    let labels = train_scm.domain("Y").map_err(InferenceError::from)?;
    let classifier = fit_partition_classifier(&aug.training_examples(), &partition, labels, Fallback::Abstain)?;
    let exact = exact_eval(&classifier, test_scm, "X", "Y")?;
    let sampled = ood_eval(&classifier, test_scm, "X", "Y", config.eval_n, augment::derive_seed(config.seed, 1))?;
    let x_domain = test_scm.domain("X").map_err(InferenceError::from)?;
    let abstains = classifier.abstention_set(x_domain);
    Ok(Trained {
        report: ClassifierReport {
            partition,
            abstains_on: abstains.iter().cloned().collect(),
            exact_accuracy: exact.accuracy.to_mass_string(),
            exact_accuracy_approx: exact.accuracy.to_f64(),
            exact_abstention: exact.abstention.to_mass_string(),
            sampled,
        },
        accuracy: exact.accuracy,
        abstains,
    })
}

/// Trains guess-CDA and full-CDA partition classifiers on a sample from the
/// review model and scores both, exactly and by sampling, on a test model
/// with a shifted reviewer-type prior.
///
/// Two training variants are reported: the raw sample, and the sample with
/// every neutral-tone review removed. The second mirrors the situation in
/// which the rare context never shows up in the training data, so guess-CDA
/// never produces a neutral-tone augmentation.
pub fn run_review_demo(config: &ReviewDemoConfig) -> Result<ReviewReport, DemoError> {
    type Q = BigRational;
    if config.train_n == 0 {
        return Err(DemoError::Parameter("train_n must be at least 1".into()));
    }
    let test_prior =
        crate::scalar::parse_rational(&config.test_prior_ux).map_err(|e| DemoError::Parameter(e.to_string()))?;
    if test_prior < Q::zero() || test_prior > Q::one() {
        return Err(DemoError::Parameter(format!("test prior {test_prior} is not a probability")));
    }
    let train_scm: Scm<Q> = build_review_scm();
    let test_scm: Scm<Q> = build_review_scm_with(2, &test_prior);
    let vars = AugmentVars::new("X", "Y", "Z");
    let mut checks = Vec::new();

    // per-example augmentation
    let good_pos = ReviewInput::new("good_1", Tone::Positive).to_value();
    let one = [LabeledExample::new(good_pos.clone(), HELPFUL)];
    let g = augment::guess_cda(&train_scm, &vars, &one, DrawMode::Enumerate)?;
    let f = augment::full_cda(&train_scm, &vars, &one, DrawMode::Enumerate)?;
    let example = ExampleCheck {
        x: good_pos.clone(),
        y: Value::from(HELPFUL),
        guess_x_primes: g.x_primes_of(&good_pos),
        full_x_primes: f.x_primes_of(&good_pos),
    };
    let names = |vs: &[Value]| vs.iter().map(Value::as_str).collect::<Vec<_>>().join(", ");
    check(
        &mut checks,
        "guess-CDA augments good_1|positive to {negative, positive}",
        names(&example.guess_x_primes) == "good_1|positive, good_1|negative",
        names(&example.guess_x_primes),
    );
    check(
        &mut checks,
        "full-CDA augments good_1|positive to all three tones",
        names(&example.full_x_primes) == "good_1|positive, good_1|negative, good_1|neutral",
        names(&example.full_x_primes),
    );

    let audit = invariance::audit(&train_scm, "X", "Z")?;
    let neutral_mass: Q = test_scm
        .marginal("X")
        .map_err(InferenceError::from)?
        .positive_entries()
        .filter(|(k, _)| ReviewInput::parse(&k[0]).is_some_and(|r| r.tone == Tone::Neutral))
        .fold(Q::zero(), |acc, (_, p)| acc + p);

    let sample = augment::sample_dataset(&train_scm, "X", "Y", config.train_n, config.seed)?;
    let filtered: Vec<LabeledExample> = sample
        .iter()
        .filter(|ex| ReviewInput::parse(&ex.x).is_some_and(|r| r.tone != Tone::Neutral))
        .cloned()
        .collect();
    let all_contents: BTreeSet<String> = review_contents(2).into_iter().collect();

    let mut variants = Vec::new();
    for (name, description, data) in [
        ("unfiltered", "training sample as drawn", &sample),
        ("rare_context_absent", "neutral-tone reviews removed from the training sample before augmentation", &filtered),
    ] {
        if data.is_empty() {
            check(&mut checks, &format!("{name}: nonempty training set"), false, "no examples left".into());
            continue;
        }
        let guess_aug = augment::guess_cda(&train_scm, &vars, data, DrawMode::Enumerate)?;
        let full_aug = augment::full_cda(&train_scm, &vars, data, DrawMode::Enumerate)?;
        let labels_kept = guess_aug
            .augmented
            .iter()
            .chain(&full_aug.augmented)
            .all(|a| data.iter().any(|o| o.x == a.source_x && o.y == a.y));
        check(&mut checks, &format!("{name}: labels preserved"), labels_kept, String::new());

        let guess = train_and_score(&guess_aug, &train_scm, &test_scm, config)?;
        let full = train_and_score(&full_aug, &train_scm, &test_scm, config)?;
        check(
            &mut checks,
            &format!("{name}: guess abstentions include full abstentions"),
            guess.abstains.is_superset(&full.abstains),
            String::new(),
        );
        let seen: BTreeSet<String> =
            data.iter().filter_map(|ex| ReviewInput::parse(&ex.x)).map(|r| r.content).collect();
        if seen == all_contents {
            check(
                &mut checks,
                &format!("{name}: full-CDA accuracy is 1"),
                full.accuracy == Q::one(),
                full.accuracy.to_string(),
            );
        }
        if name == "rare_context_absent" {
            let neutral_inputs: BTreeSet<Value> =
                review_contents(2).iter().map(|c| ReviewInput::new(c, Tone::Neutral).to_value()).collect();
            check(
                &mut checks,
                "rare_context_absent: guess-CDA abstains on every neutral input",
                guess.abstains.is_superset(&neutral_inputs),
                String::new(),
            );
            if seen == all_contents && guess.abstains == neutral_inputs {
                let expected = Q::one() - neutral_mass.clone();
                check(
                    &mut checks,
                    "rare_context_absent: guess-CDA accuracy is 1 - P(neutral)",
                    guess.accuracy == expected,
                    format!("{} vs {}", guess.accuracy, expected),
                );
            }
        }
        let gap = full.accuracy.clone() - guess.accuracy.clone();
        variants.push(VariantReport {
            name: name.to_string(),
            description: description.to_string(),
            train_size: data.len(),
            train_inputs: guess_aug
                .input_domain
                .iter()
                .filter(|v| data.iter().any(|ex| &ex.x == *v))
                .cloned()
                .collect(),
            guess: guess.report,
            full: full.report,
            gap: gap.to_mass_string(),
        });
    }

    Ok(ReviewReport {
        config: config.clone(),
        example,
        audit,
        test_neutral_mass: neutral_mass.to_mass_string(),
        variants,
        checks,
    })
}

fn write_checks(f: &mut fmt::Formatter<'_>, checks: &[Check]) -> fmt::Result {
    for c in checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            writeln!(f, "  [{mark}] {}", c.name)?;
        } else {
            writeln!(f, "  [{mark}] {} ({})", c.name, c.detail)?;
        }
    }
    Ok(())
}

fn doc_line(doc: &DistributionDoc) -> String {
    crate::Distribution::<BigRational>::from_doc(doc).map(|d| d.to_string()).unwrap_or_default()
}

impl fmt::Display for AppendixReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "linear model X = Z + 2 U_X")?;
        writeln!(f, "P(X): {}", doc_line(&self.marginal_x))?;
        writeln!(f, "counterfactuals X(Z=z) | X=x:")?;
        for e in &self.counterfactuals {
            writeln!(f, "  x={:>2} z={:>2}: {}", e.x, e.z, doc_line(&e.distribution))?;
        }
        writeln!(f, "MAP contexts:")?;
        for m in &self.map_contexts {
            writeln!(
                f,
                "  z_MAP({}) = {}{}  [{}]",
                m.x,
                m.z_map,
                if m.tie { " (tie)" } else { "" },
                doc_line(&m.posterior)
            )?;
        }
        writeln!(f, "guess counterfactuals X(Z=z) | X=x, Z=z_MAP(x):")?;
        for e in &self.guess_counterfactuals {
            writeln!(f, "  x={:>2} z={:>2}: {}", e.x, e.z, doc_line(&e.distribution))?;
        }
        writeln!(f, "cf partition:  {}", self.audit.cf_partition)?;
        writeln!(f, "cda partition: {}", self.audit.cda_partition)?;
        writeln!(f, "verdict: {}", self.audit.verdict)?;
        writeln!(f, "checks:")?;
        write_checks(f, &self.checks)
    }
}

impl fmt::Display for ReviewReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |vs: &[Value]| vs.iter().map(Value::as_str).collect::<Vec<_>>().join(", ");
        writeln!(
            f,
            "review model: train_n={} seed={} test P(U_X=1)={}",
            self.config.train_n, self.config.seed, self.config.test_prior_ux
        )?;
        writeln!(f, "augmenting ({}, {}):", self.example.x, self.example.y)?;
        writeln!(f, "  guess-CDA x': {}", names(&self.example.guess_x_primes))?;
        writeln!(f, "  full-CDA  x': {}", names(&self.example.full_x_primes))?;
        writeln!(
            f,
            "full-support audit: cf {} | cda {} | {}",
            self.audit.cf_partition, self.audit.cda_partition, self.audit.verdict
        )?;
        writeln!(f, "P(neutral tone) at test: {}", self.test_neutral_mass)?;
        for v in &self.variants {
            writeln!(f, "variant {} ({}), {} training examples:", v.name, v.description, v.train_size)?;
            for (tag, c) in [("guess", &v.guess), ("full ", &v.full)] {
                writeln!(
                    f,
                    "  {tag}: accuracy {} (~{:.4}, sampled {:.4}), abstains on [{}]",
                    c.exact_accuracy,
                    c.exact_accuracy_approx,
                    c.sampled.accuracy,
                    names(&c.abstains_on)
                )?;
            }
            writeln!(f, "  gap: {}", v.gap)?;
        }
        writeln!(f, "checks:")?;
        write_checks(f, &self.checks)
    }
}
