//! Fuzzy Control Language (IEC 61131-7 subset) knowledge bases.
//!
//! Supported: one `FUNCTION_BLOCK` with `REAL` inputs and outputs,
//! `FUZZIFY`/`DEFUZZIFY` blocks with point-list or singleton terms, `RANGE`,
//! `METHOD` (COG, COGS, MOM), `DEFAULT`, and `RULEBLOCK`s with `AND`, `OR`,
//! `ACT`, `ACCU` and weighted `RULE`s. Comments are `// ...` and `(* ... *)`.

mod infer;
mod lexer;
mod parser;
mod serialize;

pub use infer::{
    defuzzify, Aggregate, InferenceError, InferenceTrace, OutputTrace, RuleActivation, COG_INTERVALS,
};
pub use parser::parse_fcl;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FclError {
    #[error("syntax error at {line}:{column}: {message}")]
    SyntaxError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: unknown variable `{name}`")]
    UnknownVariable { name: String, line: usize },
    #[error("line {line}: variable `{variable}` has no term `{term}`")]
    UnknownTerm {
        variable: String,
        term: String,
        line: usize,
    },
    #[error("line {line}: points of term `{term}` of `{variable}` are not strictly increasing in x")]
    NonMonotonePoints {
        variable: String,
        term: String,
        line: usize,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

impl FclError {
    /// Source line the error refers to.
    pub fn line(&self) -> usize {
        match self {
            FclError::SyntaxError { line, .. }
            | FclError::UnknownVariable { line, .. }
            | FclError::UnknownTerm { line, .. }
            | FclError::NonMonotonePoints { line, .. }
            | FclError::Invalid { line, .. } => *line,
        }
    }

    /// Source column, when the error is positional.
    pub fn column(&self) -> Option<usize> {
        match self {
            FclError::SyntaxError { column, .. } => Some(*column),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MembershipFn {
    /// Piecewise-linear through `(x, y)` points with strictly increasing x.
    Points(Vec<(f64, f64)>),
    Singleton(f64),
}

impl MembershipFn {
    /// Degree of membership of `x`. Point lists interpolate linearly and hold
    /// the nearest endpoint's degree outside their span.
    pub fn membership(&self, x: f64) -> f64 {
        match self {
            MembershipFn::Singleton(v) => {
                if x == *v {
                    1.0
                } else {
                    0.0
                }
            }
            MembershipFn::Points(points) => {
                let (first, last) = match (points.first(), points.last()) {
                    (Some(f), Some(l)) => (f, l),
                    _ => return 0.0,
                };
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                // first index with px > x; exists and is >= 1 here
                let hi = points.partition_point(|p| p.0 <= x);
                let (x0, y0) = points[hi - 1];
                let (x1, y1) = points[hi];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self, MembershipFn::Singleton(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub name: String,
    pub shape: MembershipFn,
}

impl Term {
    pub fn membership(&self, x: f64) -> f64 {
        self.shape.membership(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefuzzMethod {
    Cog,
    Cogs,
    Mom,
}

impl DefuzzMethod {
    pub fn keyword(self) -> &'static str {
        match self {
            DefuzzMethod::Cog => "COG",
            DefuzzMethod::Cogs => "COGS",
            DefuzzMethod::Mom => "MOM",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputVariable {
    pub name: String,
    pub range: Option<(f64, f64)>,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputVariable {
    pub name: String,
    pub range: Option<(f64, f64)>,
    pub terms: Vec<Term>,
    pub method: DefuzzMethod,
    pub default: f64,
}

impl OutputVariable {
    /// Declared `RANGE`, or the x-span of the terms when none is declared.
    pub fn effective_range(&self) -> (f64, f64) {
        if let Some(r) = self.range {
            return r;
        }
        let xs = self.terms.iter().flat_map(|t| match &t.shape {
            MembershipFn::Points(p) => p.iter().map(|p| p.0).collect::<Vec<_>>(),
            MembershipFn::Singleton(v) => vec![*v],
        });
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
        (lo, hi)
    }

    pub fn is_discrete(&self) -> bool {
        !self.terms.is_empty() && self.terms.iter().all(|t| t.shape.is_singleton())
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AndOp {
    Min,
    Prod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActOp {
    Min,
    Prod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccuOp {
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// `variable IS [NOT] term`
    Is {
        variable: String,
        term: String,
        negated: bool,
    },
    Not(Box<Condition>),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

impl Condition {
    pub fn is(variable: &str, term: &str) -> Self {
        Condition::Is {
            variable: variable.to_string(),
            term: term.to_string(),
            negated: false,
        }
    }

    /// Every `(variable, term)` pair the condition mentions.
    pub fn clauses(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        match self {
            Condition::Is { variable, term, .. } => out.push((variable, term)),
            Condition::Not(c) => c.collect(out),
            Condition::And(a, b) | Condition::Or(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Consequent {
    pub variable: String,
    pub term: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: u32,
    pub antecedent: Condition,
    pub consequents: Vec<Consequent>,
    /// `WITH` weight in [0, 1].
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleBlock {
    pub name: String,
    pub and: AndOp,
    pub act: ActOp,
    pub accu: AccuOp,
    pub rules: Vec<Rule>,
}

/// A parsed function block. Rule weights are the only part meant to change
/// after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySystem {
    pub name: String,
    pub inputs: Vec<InputVariable>,
    pub outputs: Vec<OutputVariable>,
    pub rule_blocks: Vec<RuleBlock>,
}

impl FuzzySystem {
    pub fn input(&self, name: &str) -> Option<&InputVariable> {
        self.inputs.iter().find(|v| v.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&OutputVariable> {
        self.outputs.iter().find(|v| v.name == name)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rule_blocks.iter().flat_map(|b| b.rules.iter())
    }

    pub fn rule_count(&self) -> usize {
        self.rule_blocks.iter().map(|b| b.rules.len()).sum()
    }

    pub fn rule(&self, id: u32) -> Option<&Rule> {
        self.rules().find(|r| r.id == id)
    }

    pub fn rule_mut(&mut self, id: u32) -> Option<&mut Rule> {
        self.rule_blocks
            .iter_mut()
            .flat_map(|b| b.rules.iter_mut())
            .find(|r| r.id == id)
    }

    /// Sets a rule's weight, clamped to [0, 1]. Returns false for unknown ids.
    pub fn set_weight(&mut self, id: u32, weight: f64) -> bool {
        match self.rule_mut(id) {
            Some(rule) => {
                rule.weight = weight.clamp(0.0, 1.0);
                true
            }
            None => false,
        }
    }

    /// Hash of everything except rule weights. Two systems with the same
    /// fingerprint differ at most in their weights.
    pub fn structure_fingerprint(&self) -> String {
        let mut skeleton = self.clone();
        for rule in skeleton.rule_blocks.iter_mut().flat_map(|b| b.rules.iter_mut()) {
            rule.weight = 1.0;
        }
        hex::encode(Sha256::digest(skeleton.to_fcl().as_bytes()))
    }

    /// Centroid of an output term over the output's range, on the same grid
    /// COG defuzzification uses. Singletons return their position.
    pub fn term_centroid(&self, output: &str, term: &str) -> Option<f64> {
        let var = self.output(output)?;
        let term = var.term(term)?;
        match &term.shape {
            MembershipFn::Singleton(v) => Some(*v),
            MembershipFn::Points(_) => {
                let (lo, hi) = var.effective_range();
                let agg = Aggregate::sample(lo, hi, |x| term.membership(x));
                Some(defuzzify(&agg, DefuzzMethod::Cog, f64::NAN).0)
            }
        }
    }
}
