//! Canonical JSON file formats: instance files (the contract for every
//! CLI subcommand and golden file), serialized trees with their
//! backbone records, cost reports, and set-cover inputs. Rationals
//! travel as "a/b" strings; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::costs::CostReport;
use crate::instance::{
    Instance, ObjectRecord, Outcome, SubsetMask, TestRecord, ValidationError,
};
use crate::tree::{DecisionTree, InvocationRecord, Node};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FormatError {
    Json(String),
    BadRational(String),
    Validation(Vec<ValidationError>),
    BadTree(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Json(msg) => write!(f, "malformed JSON: {msg}"),
            FormatError::BadRational(s) => write!(f, "malformed rational {s:?}"),
            FormatError::Validation(errors) => {
                write!(f, "invalid instance:")?;
                for e in errors {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
            FormatError::BadTree(msg) => write!(f, "malformed tree: {msg}"),
        }
    }
}

impl std::error::Error for FormatError {}

/// Parses "a/b" or "a" into an exact rational.
pub fn parse_ratio(s: &str) -> Result<BigRational, FormatError> {
    let bad = || FormatError::BadRational(s.to_string());
    match s.split_once('/') {
        Some((num, den)) => {
            let num = BigInt::from_str(num.trim()).map_err(|_| bad())?;
            let den = BigInt::from_str(den.trim()).map_err(|_| bad())?;
            if den.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(num, den))
        }
        None => {
            let num = BigInt::from_str(s.trim()).map_err(|_| bad())?;
            Ok(BigRational::from_integer(num))
        }
    }
}

/// Renders a rational as "a/b", or plain "a" when the denominator is
/// one.
pub fn ratio_string(r: &BigRational) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal rendering with the given number of significant digits; for
/// display only, the exact value always travels alongside.
pub fn ratio_decimal(r: &BigRational, significant: usize) -> String {
    let v = r.to_f64().unwrap_or(f64::NAN);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (significant as i32 - 1 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    num_classes: usize,
    objects: Vec<RawObject>,
    tests: Vec<RawTest>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: usize,
    class: usize,
    prob: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTest {
    id: usize,
    cost: i64,
    outcomes: Vec<i64>,
}

/// Parses and validates an instance file.
pub fn parse_instance(json: &str) -> Result<Instance, FormatError> {
    let raw: RawInstance =
        serde_json::from_str(json).map_err(|e| FormatError::Json(e.to_string()))?;
    let mut errors = Vec::new();

    let mut objects = Vec::with_capacity(raw.objects.len());
    for o in &raw.objects {
        let prob = parse_ratio(&o.prob)?;
        objects.push(ObjectRecord { id: o.id, class: o.class, prob });
    }

    let mut tests = Vec::with_capacity(raw.tests.len());
    for t in &raw.tests {
        let cost = if t.cost < 1 {
            errors.push(ValidationError::NonPositiveCost { test: t.id });
            1
        } else {
            t.cost as u64
        };
        let mut outcomes = Vec::with_capacity(t.outcomes.len());
        for (obj, &v) in t.outcomes.iter().enumerate() {
            if v < 0 {
                errors.push(ValidationError::OutcomeOutOfRange { test: t.id, object: obj, value: v });
                outcomes.push(0);
            } else {
                outcomes.push(v as Outcome);
            }
        }
        tests.push(TestRecord { id: t.id, cost, outcomes });
    }

    match Instance::new(raw.num_classes, objects, tests) {
        Ok(inst) if errors.is_empty() => Ok(inst),
        Ok(_) => Err(FormatError::Validation(errors)),
        Err(mut more) => {
            errors.append(&mut more);
            Err(FormatError::Validation(errors))
        }
    }
}

/// Canonical instance serialization; byte-stable for fixed input.
pub fn instance_to_json(instance: &Instance) -> String {
    let raw = RawInstance {
        num_classes: instance.num_classes(),
        objects: instance
            .objects()
            .iter()
            .map(|o| RawObject { id: o.id, class: o.class, prob: ratio_string(&o.prob) })
            .collect(),
        tests: instance
            .tests()
            .iter()
            .map(|t| RawTest {
                id: t.id,
                cost: t.cost as i64,
                outcomes: t.outcomes.iter().map(|&v| v as i64).collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&raw).expect("instance serializes");
    out.push('\n');
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeJson {
    root: usize,
    nodes: Vec<NodeJson>,
    backbones: Vec<BackboneJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum NodeJson {
    // Children are keyed by the outcome label, carried as a string key
    // in JSON.
    Test { test: usize, children: BTreeMap<String, usize> },
    Leaf { class: usize, objects: Vec<usize> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackboneJson {
    invocation: usize,
    #[serde(rename = "B")]
    budget: Option<u64>,
    t_a: Vec<usize>,
    t_b: Vec<usize>,
}

/// Serializes a tree with its backbone records; byte-stable.
pub fn tree_to_json(tree: &DecisionTree) -> String {
    let nodes = tree
        .nodes()
        .iter()
        .map(|n| match n {
            Node::Test { test, children } => NodeJson::Test {
                test: *test,
                children: children.iter().map(|(o, c)| (o.to_string(), *c)).collect(),
            },
            Node::Leaf { class, objects } => {
                NodeJson::Leaf { class: *class, objects: objects.ids() }
            }
        })
        .collect();
    let backbones = tree
        .backbones()
        .iter()
        .enumerate()
        .map(|(invocation, r)| BackboneJson {
            invocation,
            budget: r.budget,
            t_a: r.t_a.clone(),
            t_b: r.t_b.clone(),
        })
        .collect();
    let json = TreeJson { root: tree.root(), nodes, backbones };
    let mut out = serde_json::to_string_pretty(&json).expect("tree serializes");
    out.push('\n');
    out
}

/// Parses a serialized tree. Structural fit against a concrete
/// instance is checked separately by [`DecisionTree::verify`].
pub fn parse_tree(json: &str, instance: &Instance) -> Result<DecisionTree, FormatError> {
    let raw: TreeJson =
        serde_json::from_str(json).map_err(|e| FormatError::Json(e.to_string()))?;
    if raw.root >= raw.nodes.len() {
        return Err(FormatError::BadTree(format!("root {} out of range", raw.root)));
    }
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for (i, n) in raw.nodes.into_iter().enumerate() {
        match n {
            NodeJson::Test { test, children } => {
                let mut map = BTreeMap::new();
                for (key, child) in children {
                    let outcome: Outcome = key.parse().map_err(|_| {
                        FormatError::BadTree(format!("node {i} has non-numeric outcome {key:?}"))
                    })?;
                    map.insert(outcome, child);
                }
                nodes.push(Node::Test { test, children: map });
            }
            NodeJson::Leaf { class, objects } => {
                let mut mask = SubsetMask::EMPTY;
                for id in objects {
                    if id >= instance.num_objects() {
                        return Err(FormatError::BadTree(format!(
                            "leaf {i} lists unknown object {id}"
                        )));
                    }
                    mask.insert(id);
                }
                nodes.push(Node::Leaf { class, objects: mask });
            }
        }
    }
    let backbones = raw
        .backbones
        .into_iter()
        .map(|b| InvocationRecord {
            objects: SubsetMask::EMPTY,
            pairs: 0,
            budget: b.budget,
            t_a: b.t_a,
            t_b: b.t_b,
            pairs_covered: 0,
        })
        .collect();
    Ok(DecisionTree::new(nodes, raw.root, backbones))
}

/// Cost report with the exact rational and a display decimal.
#[derive(Serialize, Deserialize, Debug)]
pub struct CostReportJson {
    pub cost_w: u64,
    pub cost_e: String,
    pub cost_e_decimal: String,
    pub per_object: Vec<u64>,
}

pub fn cost_report_json(report: &CostReport, significant: usize) -> CostReportJson {
    CostReportJson {
        cost_w: report.worst,
        cost_e: ratio_string(&report.expected),
        cost_e_decimal: ratio_decimal(&report.expected, significant),
        per_object: report.per_object.clone(),
    }
}

/// Parses a set-cover input file: `{"universe": n, "sets": [[...]]}`.
pub fn parse_setcover(json: &str) -> Result<crate::generators::SetCoverInstance, FormatError> {
    serde_json::from_str(json).map_err(|e| FormatError::Json(e.to_string()))
}
