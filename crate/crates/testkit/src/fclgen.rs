//! Random, always-valid fuzzy systems for round-trip and oracle tests.

use logoped_core::fcl::{
    AccuOp, ActOp, AndOp, Condition, Consequent, DefuzzMethod, FuzzySystem, InputVariable,
    MembershipFn, OutputVariable, Rule, RuleBlock, Term,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Knobs for [`random_system`].
#[derive(Debug, Clone)]
pub struct GenParams {
    pub allow_mom: bool,
    pub allow_singletons: bool,
    /// Nesting depth of antecedents.
    pub max_depth: u32,
    /// Random f64 weights/coordinates instead of short decimals.
    pub raw_floats: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            allow_mom: true,
            allow_singletons: true,
            max_depth: 3,
            raw_floats: true,
        }
    }
}

fn num<R: Rng>(rng: &mut R, lo: f64, hi: f64, raw: bool) -> f64 {
    let x = rng.gen_range(lo..hi);
    if raw {
        x
    } else {
        (x * 100.0).round() / 100.0
    }
}

/// Piecewise-linear term spanning at least 10% of `[lo, hi]`.
fn points<R: Rng>(rng: &mut R, lo: f64, hi: f64, raw: bool) -> Vec<(f64, f64)> {
    let width = hi - lo;
    let n = rng.gen_range(2..=4);
    let start = num(rng, lo - 0.1 * width, hi - 0.2 * width, raw);
    let mut xs = vec![start];
    for _ in 1..n {
        let last = *xs.last().unwrap();
        xs.push(last + num(rng, 0.05 * width, 0.4 * width, raw).max(0.01));
    }
    let peak = rng.gen_range(0..n);
    xs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let y = if i == peak { 1.0 } else { num(rng, 0.0, 1.0, raw) * f64::from(u8::from(rng.gen_bool(0.6))) };
            (x, y)
        })
        .collect()
}

fn condition<R: Rng>(rng: &mut R, inputs: &[InputVariable], depth: u32) -> Condition {
    if depth == 0 || rng.gen_bool(0.4) {
        let v = inputs.choose(rng).unwrap();
        let t = v.terms.choose(rng).unwrap();
        return Condition::Is {
            variable: v.name.clone(),
            term: t.name.clone(),
            negated: rng.gen_bool(0.2),
        };
    }
    let a = Box::new(condition(rng, inputs, depth - 1));
    match rng.gen_range(0..5) {
        0 => Condition::Not(a),
        1 | 2 => Condition::And(a, Box::new(condition(rng, inputs, depth - 1))),
        _ => Condition::Or(a, Box::new(condition(rng, inputs, depth - 1))),
    }
}

pub fn random_system<R: Rng>(rng: &mut R, p: &GenParams) -> FuzzySystem {
    let raw = p.raw_floats;
    let n_in = rng.gen_range(1..=3);
    let inputs: Vec<InputVariable> = (0..n_in)
        .map(|i| {
            let lo = num(rng, -10.0, 10.0, raw);
            let hi = lo + num(rng, 1.0, 20.0, raw);
            let terms = (0..rng.gen_range(1..=4))
                .map(|j| Term {
                    name: format!("t_{j}"),
                    shape: if p.allow_singletons && rng.gen_bool(0.1) {
                        MembershipFn::Singleton(num(rng, lo, hi, raw))
                    } else {
                        MembershipFn::Points(points(rng, lo, hi, raw))
                    },
                })
                .collect();
            InputVariable {
                name: format!("in_{i}"),
                range: rng.gen_bool(0.5).then_some((lo, hi)),
                terms,
            }
        })
        .collect();

    let n_out = rng.gen_range(1..=2);
    let outputs: Vec<OutputVariable> = (0..n_out)
        .map(|i| {
            let lo = num(rng, -10.0, 10.0, raw);
            let hi = lo + num(rng, 1.0, 20.0, raw);
            let singletons = p.allow_singletons && rng.gen_bool(0.25);
            let method = if singletons {
                if p.allow_mom && rng.gen_bool(0.3) {
                    DefuzzMethod::Mom
                } else {
                    DefuzzMethod::Cogs
                }
            } else if p.allow_mom && rng.gen_bool(0.2) {
                DefuzzMethod::Mom
            } else {
                DefuzzMethod::Cog
            };
            let terms = (0..rng.gen_range(1..=4))
                .map(|j| Term {
                    name: format!("o_{j}"),
                    shape: if singletons {
                        MembershipFn::Singleton(num(rng, lo, hi, raw))
                    } else {
                        MembershipFn::Points(points(rng, lo, hi, raw))
                    },
                })
                .collect();
            OutputVariable {
                name: format!("out_{i}"),
                range: (singletons || rng.gen_bool(0.7)).then_some((lo, hi)),
                terms,
                method,
                default: num(rng, lo, hi, raw),
            }
        })
        .collect();

    let mut next_id = rng.gen_range(0..5u32);
    let rule_blocks = (0..rng.gen_range(1..=2))
        .map(|b| {
            let rules = (0..rng.gen_range(1..=6))
                .map(|_| {
                    next_id += rng.gen_range(1..4);
                    let mut consequents = Vec::new();
                    for o in &outputs {
                        if rng.gen_bool(0.7) {
                            consequents.push(Consequent {
                                variable: o.name.clone(),
                                term: o.terms.choose(rng).unwrap().name.clone(),
                            });
                        }
                    }
                    if consequents.is_empty() {
                        let o = outputs.choose(rng).unwrap();
                        consequents.push(Consequent {
                            variable: o.name.clone(),
                            term: o.terms.choose(rng).unwrap().name.clone(),
                        });
                    }
                    Rule {
                        id: next_id,
                        antecedent: condition(rng, &inputs, p.max_depth),
                        consequents,
                        weight: if rng.gen_bool(0.5) { 1.0 } else { num(rng, 0.0, 1.0, raw) },
                    }
                })
                .collect();
            RuleBlock {
                name: format!("block_{b}"),
                and: if rng.gen_bool(0.5) { AndOp::Min } else { AndOp::Prod },
                act: if rng.gen_bool(0.5) { ActOp::Min } else { ActOp::Prod },
                accu: AccuOp::Max,
                rules,
            }
        })
        .collect();

    FuzzySystem {
        name: "generated".into(),
        inputs,
        outputs,
        rule_blocks,
    }
}

/// Input values drawn from a little outside each input's term span.
pub fn random_inputs<R: Rng>(rng: &mut R, sys: &FuzzySystem) -> std::collections::BTreeMap<String, f64> {
    sys.inputs
        .iter()
        .map(|v| {
            let xs = v.terms.iter().flat_map(|t| match &t.shape {
                MembershipFn::Points(p) => p.iter().map(|p| p.0).collect(),
                MembershipFn::Singleton(x) => vec![*x],
            });
            let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let pad = 0.1 * (hi - lo).max(1.0);
            // occasionally hit a singleton exactly
            let exact = v.terms.iter().find_map(|t| match t.shape {
                MembershipFn::Singleton(x) => Some(x),
                _ => None,
            });
            let x = match exact {
                Some(x) if rng.gen_bool(0.3) => x,
                _ => rng.gen_range(lo - pad..=hi + pad),
            };
            (v.name.clone(), x)
        })
        .collect()
}
