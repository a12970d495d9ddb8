use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use cfaudit_core::augment::{self, AugmentVars, ContextRule, DrawMode};
use cfaudit_core::examples::{self, ReviewDemoConfig};
use cfaudit_core::format::{augmented_to_jsonl, parse_dataset, parse_scm, scm_to_json};
use cfaudit_core::inference::{self, Assignment, CounterfactualQuery};
use cfaudit_core::invariance::{self, SupportCheck};
use cfaudit_core::{
    parse_rational, AugmentError, DemoError, ExactScm, InferenceError, InvarianceError, ParseError, Prob, ScmError,
};
use clap::{Parser, Subcommand, ValueEnum};

/// Exact counterfactual inference and augmentation audits for discrete
/// structural causal models.
#[derive(Debug, Parser)]
#[command(name = "cfaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Full,
    Guess,
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Demo {
    Appendix,
    Review,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Builtin {
    Linear,
    Review,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model file; violations go to stderr.
    Validate { model: PathBuf },
    /// Print P(target under do(..) | evidence).
    Counterfactual {
        model: PathBuf,
        #[arg(long)]
        target: String,
        /// Intervention VAR=value, repeatable.
        #[arg(long = "do", value_name = "VAR=VALUE")]
        interventions: Vec<String>,
        /// Observation VAR=value, repeatable.
        #[arg(long, value_name = "VAR=VALUE")]
        evidence: Vec<String>,
        /// Condition on the MAP value of this context variable first.
        #[arg(long, value_name = "VAR")]
        guess_context: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Compare the invariance partitions of full and context-guessing augmentation.
    Audit {
        model: PathBuf,
        #[arg(long, default_value = "X")]
        input: String,
        #[arg(long, default_value = "Z")]
        context: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Augment a dataset of {"x", "y", "weight"} lines.
    Augment {
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value = "X")]
        input: String,
        #[arg(long, default_value = "Y")]
        label: String,
        #[arg(long, default_value = "Z")]
        context: String,
        /// Posterior threshold; contexts with P(z | x) > tau are used.
        #[arg(long, default_value = "0")]
        tau: String,
        /// Draw this many x' per (example, z) instead of enumerating; 1 when given bare.
        #[arg(long, num_args = 0..=1, default_missing_value = "1", value_parser = clap::value_parser!(u64).range(1..))]
        sample_k: Option<u64>,
        /// Posterior mode: draw this many contexts per example instead of thresholding.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        context_sample: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a bundled demonstration; fails with exit 5 if a check fails.
    Demo {
        #[arg(value_enum)]
        which: Demo,
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
        train_n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "1/10")]
        test_prior_ux: String,
        #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
        eval_n: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print a bundled model as JSON.
    Model {
        #[arg(value_enum)]
        which: Builtin,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure { code, error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

const USAGE: u8 = 1;
const VALIDATION: u8 = 2;
const PARSE: u8 = 3;
const QUERY: u8 = 4;
const DEMO: u8 = 5;

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure::new(PARSE, e)
    }
}

impl From<ScmError> for Failure {
    fn from(e: ScmError) -> Self {
        let code = if matches!(e, ScmError::Invalid(_)) { VALIDATION } else { QUERY };
        Failure::new(code, e)
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Model(m) => m.into(),
            other => Failure::new(QUERY, other),
        }
    }
}

impl From<InvarianceError> for Failure {
    fn from(e: InvarianceError) -> Self {
        match e {
            InvarianceError::Inference(i) => i.into(),
            other => Failure::new(QUERY, other),
        }
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::Inference(i) => i.into(),
            AugmentError::Parse(p) => p.into(),
            AugmentError::Parameter(_) => Failure::new(USAGE, e),
            other => Failure::new(QUERY, other),
        }
    }
}

impl From<DemoError> for Failure {
    fn from(e: DemoError) -> Self {
        match e {
            DemoError::Assertion(_) => Failure::new(DEMO, e),
            DemoError::Parameter(_) => Failure::new(USAGE, e),
            DemoError::Invariance(i) => i.into(),
            DemoError::Augment(a) => a.into(),
            DemoError::Inference(i) => i.into(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(PARSE, anyhow!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ExactScm, Failure> {
    let scm: ExactScm = parse_scm(&read(path)?).map_err(|e| Failure::new(PARSE, anyhow!("{}: {e}", path.display())))?;
    let report = scm.validate();
    if !report.is_ok() {
        return Err(Failure::new(VALIDATION, anyhow!("{}: model failed validation:\n{report}", path.display())));
    }
    Ok(scm)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Validate { model } => {
            let scm = load_model(&model)?;
            let n = scm.variables().len();
            Ok(format!("{}: ok ({n} variables, {} worlds)\n", model.display(), scm.enumerate_worlds()?.len()))
        }
        Command::Counterfactual { model, target, interventions, evidence, guess_context, format } => {
            let scm = load_model(&model)?;
            let intervention = Assignment::parse(&interventions)?;
            let evidence = Assignment::parse(&evidence)?;
            let dist = match guess_context {
                None => inference::counterfactual(&scm, &CounterfactualQuery::new(&target, intervention, evidence))?,
                Some(ctx) => {
                    let bound: Vec<(&str, _)> = intervention.iter().collect();
                    let z = match bound.as_slice() {
                        [(var, z)] if *var == ctx => (*z).clone(),
                        _ => {
                            return Err(Failure::new(
                                USAGE,
                                anyhow!("--guess-context {ctx} needs exactly one intervention, --do {ctx}=value"),
                            ))
                        }
                    };
                    inference::guess_counterfactual(&scm, &target, &ctx, &z, &evidence)?
                }
            };
            Ok(match format {
                Format::Text => format!("{dist}\n~ {}\n", dist.approx_string()),
                Format::Json => json(&dist.to_doc()),
            })
        }
        Command::Audit { model, input, context, format } => {
            let scm = load_model(&model)?;
            let report = invariance::audit(&scm, &input, &context)?;
            Ok(match format {
                Format::Json => json(&report),
                Format::Text => {
                    let check = match &report.support_check {
                        SupportCheck::Holds => "holds".to_string(),
                        SupportCheck::Counterexample { x, z, x_prime } => {
                            format!("counterexample x={x} z={z} x'={x_prime}")
                        }
                    };
                    format!(
                        "cf partition:  {}\ncda partition: {}\nsupport subset: {check}\nverdict: {}\n",
                        report.cf_partition, report.cda_partition, report.verdict
                    )
                }
            })
        }
        Command::Augment { model, data, mode, input, label, context, tau, sample_k, context_sample, seed, out } => {
            let scm = load_model(&model)?;
            let records =
                parse_dataset(&read(&data)?).map_err(|e| Failure::new(PARSE, anyhow!("{}: {e}", data.display())))?;
            let vars = AugmentVars::new(&input, &label, &context);
            let draw = match sample_k {
                Some(k) => DrawMode::Sample { k: k as usize, seed },
                None => DrawMode::Enumerate,
            };
            let aug = match mode {
                Mode::Full => augment::full_cda(&scm, &vars, &records, draw)?,
                Mode::Guess => augment::guess_cda(&scm, &vars, &records, draw)?,
                Mode::Posterior => {
                    let rule: ContextRule<Prob> = match context_sample {
                        Some(k) => ContextRule::Sample { k: k as usize, seed },
                        None => ContextRule::Threshold(
                            parse_rational(&tau).map_err(|e| Failure::new(USAGE, anyhow!("--tau: {e}")))?,
                        ),
                    };
                    augment::posterior_cda(&scm, &vars, &records, &rule, draw)?
                }
            };
            let text = augmented_to_jsonl(&aug);
            match out {
                Some(path) => {
                    fs::write(&path, text)
                        .map_err(|e| Failure::new(USAGE, anyhow!("cannot write {}: {e}", path.display())))?;
                    Ok(String::new())
                }
                None => Ok(text),
            }
        }
        Command::Demo { which, train_n, seed, test_prior_ux, eval_n, format } => {
            let (body, verdict) = match which {
                Demo::Appendix => {
                    let report = examples::run_appendix_demo()?;
                    let body = if format == Format::Json { json(&report) } else { report.to_string() };
                    (body, report.passed())
                }
                Demo::Review => {
                    let cfg =
                        ReviewDemoConfig { train_n: train_n as usize, seed, test_prior_ux, eval_n: eval_n as usize };
                    let report = examples::run_review_demo(&cfg)?;
                    let body = if format == Format::Json { json(&report) } else { report.to_string() };
                    (body, report.passed())
                }
            };
            print!("{body}");
            verdict?;
            Ok(String::new())
        }
        Command::Model { which } => {
            let scm: ExactScm = match which {
                Builtin::Linear => examples::build_linear_scm(),
                Builtin::Review => examples::build_review_scm(),
            };
            Ok(scm_to_json(&scm))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
