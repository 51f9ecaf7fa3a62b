//! Mamdani inference: fuzzify, fire rules, clip or scale consequents,
//! aggregate with MAX, defuzzify.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ActOp, AndOp, Condition, DefuzzMethod, FuzzySystem, MembershipFn};

/// Number of intervals the output range is divided into for COG and MOM.
pub const COG_INTERVALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("input `{name}` is not finite ({value})")]
    NonFiniteInput { name: String, value: f64 },
}

/// Activation of one rule during an inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleActivation {
    pub rule_id: u32,
    /// Degree of the antecedent before weighting.
    pub firing: f64,
    pub weight: f64,
    /// `firing * weight`, the degree the consequents are activated with.
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputTrace {
    pub value: f64,
    /// True when the aggregate was empty and DEFAULT was returned.
    pub defaulted: bool,
    /// True when at least one rule concludes on this output.
    pub referenced: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InferenceTrace {
    pub rules: Vec<RuleActivation>,
    pub outputs: BTreeMap<String, OutputTrace>,
}

impl InferenceTrace {
    pub fn rule(&self, id: u32) -> Option<&RuleActivation> {
        self.rules.iter().find(|r| r.rule_id == id)
    }
}

/// Aggregated output membership.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregate {
    /// Membership sampled at `COG_INTERVALS + 1` evenly spaced points of
    /// `lo..=hi`.
    Continuous { lo: f64, hi: f64, values: Vec<f64> },
    /// `(position, degree)` per singleton term.
    Discrete(Vec<(f64, f64)>),
}

impl Aggregate {
    pub fn grid_x(lo: f64, hi: f64, i: usize) -> f64 {
        if i == COG_INTERVALS {
            hi
        } else {
            lo + (hi - lo) * i as f64 / COG_INTERVALS as f64
        }
    }

    pub fn sample(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..=COG_INTERVALS).map(|i| f(Self::grid_x(lo, hi, i))).collect();
        Aggregate::Continuous { lo, hi, values }
    }
}

/// Crisp value of an aggregate, or `default` when it carries no mass.
/// Returns the value and whether the default was used.
pub fn defuzzify(aggregate: &Aggregate, method: DefuzzMethod, default: f64) -> (f64, bool) {
    match aggregate {
        Aggregate::Continuous { lo, hi, values } => {
            let n = values.len();
            match method {
                DefuzzMethod::Cog | DefuzzMethod::Cogs => {
                    let (mut num, mut den) = (0.0, 0.0);
                    for (i, &mu) in values.iter().enumerate() {
                        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
                        num += w * mu * Aggregate::grid_x(*lo, *hi, i);
                        den += w * mu;
                    }
                    if den > 0.0 {
                        ((num / den).clamp(*lo, *hi), false)
                    } else {
                        (default, true)
                    }
                }
                DefuzzMethod::Mom => {
                    let max = values.iter().copied().fold(0.0, f64::max);
                    if max <= 0.0 {
                        return (default, true);
                    }
                    let tol = max * 1e-12;
                    let (sum, count) = values
                        .iter()
                        .enumerate()
                        .filter(|(_, &mu)| mu >= max - tol)
                        .fold((0.0, 0usize), |(s, c), (i, _)| {
                            (s + Aggregate::grid_x(*lo, *hi, i), c + 1)
                        });
                    (sum / count as f64, false)
                }
            }
        }
        Aggregate::Discrete(points) => match method {
            DefuzzMethod::Cog | DefuzzMethod::Cogs => {
                let den: f64 = points.iter().map(|p| p.1).sum();
                if den > 0.0 {
                    (points.iter().map(|p| p.0 * p.1).sum::<f64>() / den, false)
                } else {
                    (default, true)
                }
            }
            DefuzzMethod::Mom => {
                let max = points.iter().map(|p| p.1).fold(0.0, f64::max);
                if max <= 0.0 {
                    return (default, true);
                }
                let tol = max * 1e-12;
                let maxima: Vec<f64> = points.iter().filter(|p| p.1 >= max - tol).map(|p| p.0).collect();
                (maxima.iter().sum::<f64>() / maxima.len() as f64, false)
            }
        },
    }
}

fn degree(cond: &Condition, system: &FuzzySystem, inputs: &BTreeMap<String, f64>, and: AndOp) -> f64 {
    match cond {
        Condition::Is {
            variable,
            term,
            negated,
        } => {
            let mu = system
                .input(variable)
                .and_then(|v| v.terms.iter().find(|t| &t.name == term))
                .map(|t| t.membership(inputs[variable]))
                .unwrap_or(0.0);
            if *negated {
                1.0 - mu
            } else {
                mu
            }
        }
        Condition::Not(c) => 1.0 - degree(c, system, inputs, and),
        Condition::And(a, b) => {
            let (a, b) = (degree(a, system, inputs, and), degree(b, system, inputs, and));
            match and {
                AndOp::Min => a.min(b),
                AndOp::Prod => a * b,
            }
        }
        Condition::Or(a, b) => {
            let (a, b) = (degree(a, system, inputs, and), degree(b, system, inputs, and));
            match and {
                AndOp::Min => a.max(b),
                AndOp::Prod => a + b - a * b,
            }
        }
    }
}

fn activate(act: ActOp, alpha: f64, mu: f64) -> f64 {
    match act {
        ActOp::Min => alpha.min(mu),
        ActOp::Prod => alpha * mu,
    }
}

impl FuzzySystem {
    /// Runs the knowledge base on crisp inputs. Every declared input must be
    /// present and finite; extra entries are ignored.
    pub fn infer(
        &self,
        inputs: &BTreeMap<String, f64>,
    ) -> Result<(BTreeMap<String, f64>, InferenceTrace), InferenceError> {
        for var in &self.inputs {
            match inputs.get(&var.name) {
                None => return Err(InferenceError::MissingInput(var.name.clone())),
                Some(v) if !v.is_finite() => {
                    return Err(InferenceError::NonFiniteInput {
                        name: var.name.clone(),
                        value: *v,
                    })
                }
                Some(_) => {}
            }
        }

        let mut trace = InferenceTrace::default();
        // (output, term, act, activation) for every consequent
        let mut fired = Vec::new();
        for block in &self.rule_blocks {
            for rule in &block.rules {
                let firing = degree(&rule.antecedent, self, inputs, block.and).clamp(0.0, 1.0);
                let activation = firing * rule.weight;
                trace.rules.push(RuleActivation {
                    rule_id: rule.id,
                    firing,
                    weight: rule.weight,
                    activation,
                });
                for c in &rule.consequents {
                    fired.push((c.variable.as_str(), c.term.as_str(), block.act, activation));
                }
            }
        }

        let mut outputs = BTreeMap::new();
        for var in &self.outputs {
            let mine: Vec<_> = fired.iter().filter(|f| f.0 == var.name).collect();
            let term_fn = |name: &str| var.terms.iter().find(|t| t.name == name).map(|t| &t.shape);
            let aggregate = if var.is_discrete() {
                let points = var
                    .terms
                    .iter()
                    .map(|t| {
                        let x = match t.shape {
                            MembershipFn::Singleton(x) => x,
                            MembershipFn::Points(_) => unreachable!("discrete outputs hold singletons"),
                        };
                        let mu = mine
                            .iter()
                            .filter(|f| f.1 == t.name)
                            .map(|f| activate(f.2, f.3, 1.0))
                            .fold(0.0, f64::max);
                        (x, mu)
                    })
                    .collect();
                Aggregate::Discrete(points)
            } else {
                let (lo, hi) = var.effective_range();
                Aggregate::sample(lo, hi, |x| {
                    mine.iter()
                        .filter(|f| f.3 > 0.0)
                        .filter_map(|f| term_fn(f.1).map(|shape| activate(f.2, f.3, shape.membership(x))))
                        .fold(0.0, f64::max)
                })
            };
            let (value, defaulted) = defuzzify(&aggregate, var.method, var.default);
            trace.outputs.insert(
                var.name.clone(),
                OutputTrace {
                    value,
                    defaulted,
                    referenced: !mine.is_empty(),
                },
            );
            outputs.insert(var.name.clone(), value);
        }
        Ok((outputs, trace))
    }
}
