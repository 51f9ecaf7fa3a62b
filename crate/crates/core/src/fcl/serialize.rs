//! Canonical FCL text. Parsing the output yields a structurally equal system.

use std::fmt::{self, Write};

use super::{ActOp, AndOp, Condition, FuzzySystem, MembershipFn, Term};

fn write_term(out: &mut String, term: &Term) {
    let _ = write!(out, "    TERM {} :=", term.name);
    match &term.shape {
        MembershipFn::Singleton(v) => {
            let _ = write!(out, " {v}");
        }
        MembershipFn::Points(points) => {
            for (x, y) in points {
                let _ = write!(out, " ({x}, {y})");
            }
        }
    }
    out.push_str(";\n");
}

fn write_condition(out: &mut String, cond: &Condition) {
    match cond {
        Condition::Is {
            variable,
            term,
            negated,
        } => {
            let not = if *negated { "NOT " } else { "" };
            let _ = write!(out, "{variable} IS {not}{term}");
        }
        Condition::Not(inner) => {
            out.push_str("NOT (");
            write_condition(out, inner);
            out.push(')');
        }
        Condition::And(a, b) => {
            write_operand(out, a, matches!(**a, Condition::Or(..)));
            out.push_str(" AND ");
            write_operand(out, b, matches!(**b, Condition::Or(..) | Condition::And(..)));
        }
        Condition::Or(a, b) => {
            write_operand(out, a, false);
            out.push_str(" OR ");
            write_operand(out, b, matches!(**b, Condition::Or(..)));
        }
    }
}

fn write_operand(out: &mut String, cond: &Condition, parens: bool) {
    if parens {
        out.push('(');
        write_condition(out, cond);
        out.push(')');
    } else {
        write_condition(out, cond);
    }
}

impl FuzzySystem {
    pub fn to_fcl(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "FUNCTION_BLOCK {}\n", self.name);

        out.push_str("VAR_INPUT\n");
        for v in &self.inputs {
            let _ = writeln!(out, "    {} : REAL;", v.name);
        }
        out.push_str("END_VAR\n\nVAR_OUTPUT\n");
        for v in &self.outputs {
            let _ = writeln!(out, "    {} : REAL;", v.name);
        }
        out.push_str("END_VAR\n");

        for v in &self.inputs {
            if v.terms.is_empty() && v.range.is_none() {
                continue;
            }
            let _ = writeln!(out, "\nFUZZIFY {}", v.name);
            for t in &v.terms {
                write_term(&mut out, t);
            }
            if let Some((lo, hi)) = v.range {
                let _ = writeln!(out, "    RANGE := ({lo} .. {hi});");
            }
            out.push_str("END_FUZZIFY\n");
        }

        for v in &self.outputs {
            let _ = writeln!(out, "\nDEFUZZIFY {}", v.name);
            for t in &v.terms {
                write_term(&mut out, t);
            }
            let _ = writeln!(out, "    METHOD : {};", v.method.keyword());
            let _ = writeln!(out, "    DEFAULT := {};", v.default);
            if let Some((lo, hi)) = v.range {
                let _ = writeln!(out, "    RANGE := ({lo} .. {hi});");
            }
            out.push_str("END_DEFUZZIFY\n");
        }

        for block in &self.rule_blocks {
            let _ = writeln!(out, "\nRULEBLOCK {}", block.name);
            let and = match block.and {
                AndOp::Min => "MIN",
                AndOp::Prod => "PROD",
            };
            let act = match block.act {
                ActOp::Min => "MIN",
                ActOp::Prod => "PROD",
            };
            let _ = writeln!(out, "    AND : {and};\n    ACT : {act};\n    ACCU : MAX;");
            for rule in &block.rules {
                let _ = write!(out, "    RULE {} : IF ", rule.id);
                write_condition(&mut out, &rule.antecedent);
                out.push_str(" THEN ");
                let consequents: Vec<String> = rule
                    .consequents
                    .iter()
                    .map(|c| format!("{} IS {}", c.variable, c.term))
                    .collect();
                out.push_str(&consequents.join(", "));
                if rule.weight != 1.0 {
                    let _ = write!(out, " WITH {}", rule.weight);
                }
                out.push_str(";\n");
            }
            out.push_str("END_RULEBLOCK\n");
        }
        out.push_str("\nEND_FUNCTION_BLOCK\n");
        out
    }
}

impl fmt::Display for FuzzySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fcl())
    }
}
