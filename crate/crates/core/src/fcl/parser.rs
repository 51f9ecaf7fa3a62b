use std::collections::{HashMap, HashSet};

use super::lexer::{tokenize, Spanned, Tok};
use super::{
    AccuOp, ActOp, AndOp, Condition, Consequent, DefuzzMethod, FclError, FuzzySystem, InputVariable,
    MembershipFn, OutputVariable, Rule, RuleBlock, Term,
};

/// Parses FCL source into a validated [`FuzzySystem`].
pub fn parse_fcl(src: &str) -> Result<FuzzySystem, FclError> {
    let tokens = tokenize(src)?;
    let raw = Parser { tokens, pos: 0 }.function_block()?;
    raw.build()
}

/// Source line of a clause, kept for semantic errors.
struct Ref {
    variable: String,
    term: String,
    line: usize,
}

struct RawTerm {
    term: Term,
    line: usize,
}

#[derive(Default)]
struct RawFuzzify {
    name: String,
    line: usize,
    range: Option<(f64, f64)>,
    terms: Vec<RawTerm>,
}

#[derive(Default)]
struct RawDefuzzify {
    name: String,
    line: usize,
    range: Option<(f64, f64)>,
    terms: Vec<RawTerm>,
    method: Option<DefuzzMethod>,
    default: Option<f64>,
}

struct RawRule {
    rule: Rule,
    line: usize,
    antecedent_refs: Vec<Ref>,
    consequent_refs: Vec<Ref>,
}

struct RawBlock {
    name: String,
    and: AndOp,
    act: ActOp,
    accu: AccuOp,
    rules: Vec<RawRule>,
}

struct RawSystem {
    name: String,
    inputs: Vec<(String, usize)>,
    outputs: Vec<(String, usize)>,
    fuzzify: Vec<RawFuzzify>,
    defuzzify: Vec<RawDefuzzify>,
    blocks: Vec<RawBlock>,
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

fn is_kw(tok: &Tok, kw: &str) -> bool {
    matches!(tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn next(&mut self) -> Spanned {
        let t = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Spanned, message: impl Into<String>) -> FclError {
        FclError::SyntaxError {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn unexpected(&self, expected: &str) -> FclError {
        let t = self.peek();
        self.error_at(t, format!("expected {expected}, found {}", t.tok.describe()))
    }

    fn at_kw(&self, kw: &str) -> bool {
        is_kw(&self.peek().tok, kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Spanned, FclError> {
        if self.at_kw(kw) {
            Ok(self.next())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Spanned, FclError> {
        if self.peek().tok == tok {
            Ok(self.next())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<(String, usize), FclError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                let line = self.next().line;
                Ok((s, line))
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    fn number(&mut self) -> Result<f64, FclError> {
        match self.peek().tok {
            Tok::Number(n) => {
                self.next();
                Ok(n)
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    /// One of `options` (case-insensitive keyword); returns its index.
    fn choice(&mut self, options: &[&str]) -> Result<usize, FclError> {
        for (i, opt) in options.iter().enumerate() {
            if self.eat_kw(opt) {
                return Ok(i);
            }
        }
        Err(self.unexpected(&format!("one of {}", options.join(", "))))
    }

    fn function_block(mut self) -> Result<RawSystem, FclError> {
        self.expect_kw("FUNCTION_BLOCK")?;
        let (name, _) = self.ident()?;
        let mut sys = RawSystem {
            name,
            inputs: Vec::new(),
            outputs: Vec::new(),
            fuzzify: Vec::new(),
            defuzzify: Vec::new(),
            blocks: Vec::new(),
        };
        loop {
            if self.eat_kw("VAR_INPUT") {
                let decls = self.var_decls()?;
                sys.inputs.extend(decls);
            } else if self.eat_kw("VAR_OUTPUT") {
                let decls = self.var_decls()?;
                sys.outputs.extend(decls);
            } else if self.at_kw("FUZZIFY") {
                let f = self.fuzzify()?;
                sys.fuzzify.push(f);
            } else if self.at_kw("DEFUZZIFY") {
                let d = self.defuzzify()?;
                sys.defuzzify.push(d);
            } else if self.eat_kw("RULEBLOCK") {
                let b = self.rule_block()?;
                sys.blocks.push(b);
            } else if self.eat_kw("END_FUNCTION_BLOCK") {
                break;
            } else {
                return Err(self.unexpected(
                    "VAR_INPUT, VAR_OUTPUT, FUZZIFY, DEFUZZIFY, RULEBLOCK or END_FUNCTION_BLOCK",
                ));
            }
        }
        if self.peek().tok != Tok::Eof {
            return Err(self.unexpected("end of input after END_FUNCTION_BLOCK"));
        }
        Ok(sys)
    }

    fn var_decls(&mut self) -> Result<Vec<(String, usize)>, FclError> {
        let mut out = Vec::new();
        while !self.eat_kw("END_VAR") {
            let (name, line) = self.ident()?;
            self.expect(Tok::Colon)?;
            if !self.at_kw("REAL") {
                return Err(self.unexpected("`REAL` (only REAL variables are supported)"));
            }
            self.next();
            self.expect(Tok::Semi)?;
            out.push((name, line));
        }
        Ok(out)
    }

    fn range(&mut self) -> Result<(f64, f64), FclError> {
        self.expect(Tok::Assign)?;
        self.expect(Tok::LParen)?;
        let lo = self.number()?;
        self.expect(Tok::DotDot)?;
        let hi = self.number()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Semi)?;
        Ok((lo, hi))
    }

    fn term(&mut self) -> Result<RawTerm, FclError> {
        let line = self.expect_kw("TERM")?.line;
        let (name, _) = self.ident()?;
        self.expect(Tok::Assign)?;
        let shape = if let Tok::Number(v) = self.peek().tok {
            self.next();
            MembershipFn::Singleton(v)
        } else {
            let mut points = Vec::new();
            while self.peek().tok == Tok::LParen {
                self.next();
                let x = self.number()?;
                self.expect(Tok::Comma)?;
                let y = self.number()?;
                self.expect(Tok::RParen)?;
                points.push((x, y));
            }
            if points.is_empty() {
                return Err(self.unexpected("a singleton value or `(x, y)` points"));
            }
            MembershipFn::Points(points)
        };
        self.expect(Tok::Semi)?;
        Ok(RawTerm {
            term: Term { name, shape },
            line,
        })
    }

    fn fuzzify(&mut self) -> Result<RawFuzzify, FclError> {
        let line = self.expect_kw("FUZZIFY")?.line;
        let (name, _) = self.ident()?;
        let mut f = RawFuzzify {
            name,
            line,
            ..Default::default()
        };
        loop {
            if self.at_kw("TERM") {
                let t = self.term()?;
                f.terms.push(t);
            } else if self.eat_kw("RANGE") {
                f.range = Some(self.range()?);
            } else if self.eat_kw("END_FUZZIFY") {
                return Ok(f);
            } else {
                return Err(self.unexpected("TERM, RANGE or END_FUZZIFY"));
            }
        }
    }

    fn defuzzify(&mut self) -> Result<RawDefuzzify, FclError> {
        let line = self.expect_kw("DEFUZZIFY")?.line;
        let (name, _) = self.ident()?;
        let mut d = RawDefuzzify {
            name,
            line,
            ..Default::default()
        };
        loop {
            if self.at_kw("TERM") {
                let t = self.term()?;
                d.terms.push(t);
            } else if self.eat_kw("RANGE") {
                d.range = Some(self.range()?);
            } else if self.eat_kw("METHOD") {
                self.expect(Tok::Colon)?;
                let m = self.choice(&["COGS", "COG", "MOM"])?;
                d.method = Some([DefuzzMethod::Cogs, DefuzzMethod::Cog, DefuzzMethod::Mom][m]);
                self.expect(Tok::Semi)?;
            } else if self.eat_kw("DEFAULT") {
                self.expect(Tok::Assign)?;
                d.default = Some(self.number()?);
                self.expect(Tok::Semi)?;
            } else if self.eat_kw("END_DEFUZZIFY") {
                return Ok(d);
            } else {
                return Err(self.unexpected("TERM, RANGE, METHOD, DEFAULT or END_DEFUZZIFY"));
            }
        }
    }

    fn rule_block(&mut self) -> Result<RawBlock, FclError> {
        let (name, _) = self.ident()?;
        let mut block = RawBlock {
            name,
            and: AndOp::Min,
            act: ActOp::Min,
            accu: AccuOp::Max,
            rules: Vec::new(),
        };
        let mut declared_or: Option<(usize, Spanned)> = None;
        loop {
            if self.eat_kw("AND") {
                self.expect(Tok::Colon)?;
                block.and = [AndOp::Min, AndOp::Prod][self.choice(&["MIN", "PROD"])?];
                self.expect(Tok::Semi)?;
            } else if self.at_kw("OR") {
                let at = self.next();
                self.expect(Tok::Colon)?;
                declared_or = Some((self.choice(&["MAX", "ASUM"])?, at));
                self.expect(Tok::Semi)?;
            } else if self.eat_kw("ACT") {
                self.expect(Tok::Colon)?;
                block.act = [ActOp::Min, ActOp::Prod][self.choice(&["MIN", "PROD"])?];
                self.expect(Tok::Semi)?;
            } else if self.eat_kw("ACCU") {
                self.expect(Tok::Colon)?;
                self.choice(&["MAX"])?;
                self.expect(Tok::Semi)?;
            } else if self.at_kw("RULE") {
                let r = self.rule()?;
                block.rules.push(r);
            } else if self.eat_kw("END_RULEBLOCK") {
                break;
            } else {
                return Err(self.unexpected("AND, OR, ACT, ACCU, RULE or END_RULEBLOCK"));
            }
        }
        if let Some((or, at)) = declared_or {
            let dual = match block.and {
                AndOp::Min => 0,
                AndOp::Prod => 1,
            };
            if or != dual {
                return Err(FclError::Invalid {
                    line: at.line,
                    message: "OR must be the dual of AND (MIN/MAX or PROD/ASUM)".into(),
                });
            }
        }
        Ok(block)
    }

    fn rule(&mut self) -> Result<RawRule, FclError> {
        let line = self.expect_kw("RULE")?.line;
        let id_tok = self.peek().clone();
        let id = self.number()?;
        if id < 0.0 || id.fract() != 0.0 || id > f64::from(u32::MAX) {
            return Err(self.error_at(&id_tok, "rule number must be a non-negative integer"));
        }
        self.expect(Tok::Colon)?;
        self.expect_kw("IF")?;
        let mut antecedent_refs = Vec::new();
        let antecedent = self.condition(&mut antecedent_refs)?;
        self.expect_kw("THEN")?;
        let mut consequents = Vec::new();
        let mut consequent_refs = Vec::new();
        loop {
            let (variable, vline) = self.ident()?;
            self.expect_kw("IS")?;
            let (term, _) = self.ident()?;
            consequent_refs.push(Ref {
                variable: variable.clone(),
                term: term.clone(),
                line: vline,
            });
            consequents.push(Consequent { variable, term });
            if self.peek().tok == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        let mut weight = 1.0;
        if self.at_kw("WITH") {
            self.next();
            let wtok = self.peek().clone();
            weight = self.number()?;
            if !(0.0..=1.0).contains(&weight) {
                return Err(FclError::Invalid {
                    line: wtok.line,
                    message: format!("rule weight {weight} outside [0, 1]"),
                });
            }
        }
        self.expect(Tok::Semi)?;
        Ok(RawRule {
            rule: Rule {
                id: id as u32,
                antecedent,
                consequents,
                weight,
            },
            line,
            antecedent_refs,
            consequent_refs,
        })
    }

    fn condition(&mut self, refs: &mut Vec<Ref>) -> Result<Condition, FclError> {
        let mut lhs = self.conjunction(refs)?;
        while self.eat_kw("OR") {
            let rhs = self.conjunction(refs)?;
            lhs = Condition::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self, refs: &mut Vec<Ref>) -> Result<Condition, FclError> {
        let mut lhs = self.factor(refs)?;
        while self.eat_kw("AND") {
            let rhs = self.factor(refs)?;
            lhs = Condition::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self, refs: &mut Vec<Ref>) -> Result<Condition, FclError> {
        if self.eat_kw("NOT") {
            return Ok(Condition::Not(Box::new(self.factor(refs)?)));
        }
        if self.peek().tok == Tok::LParen {
            self.next();
            let inner = self.condition(refs)?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let (variable, line) = self.ident()?;
        self.expect_kw("IS")?;
        let negated = self.eat_kw("NOT");
        let (term, _) = self.ident()?;
        refs.push(Ref {
            variable: variable.clone(),
            term: term.clone(),
            line,
        });
        Ok(Condition::Is {
            variable,
            term,
            negated,
        })
    }
}

fn check_terms(variable: &str, terms: &[RawTerm]) -> Result<Vec<Term>, FclError> {
    let mut seen = HashSet::new();
    for t in terms {
        if !seen.insert(t.term.name.as_str()) {
            return Err(FclError::Invalid {
                line: t.line,
                message: format!("term `{}` of `{variable}` defined twice", t.term.name),
            });
        }
        if let MembershipFn::Points(points) = &t.term.shape {
            if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(FclError::NonMonotonePoints {
                    variable: variable.to_string(),
                    term: t.term.name.clone(),
                    line: t.line,
                });
            }
            if let Some(&(_, y)) = points.iter().find(|p| !(0.0..=1.0).contains(&p.1)) {
                return Err(FclError::Invalid {
                    line: t.line,
                    message: format!("membership degree {y} of term `{}` outside [0, 1]", t.term.name),
                });
            }
        }
    }
    Ok(terms.iter().map(|t| t.term.clone()).collect())
}

fn check_range(range: Option<(f64, f64)>, line: usize) -> Result<(), FclError> {
    match range {
        Some((lo, hi)) if lo >= hi => Err(FclError::Invalid {
            line,
            message: format!("empty RANGE ({lo} .. {hi})"),
        }),
        _ => Ok(()),
    }
}

impl RawSystem {
    fn build(self) -> Result<FuzzySystem, FclError> {
        let mut names: HashMap<&str, usize> = HashMap::new();
        for (name, line) in self.inputs.iter().chain(&self.outputs) {
            if names.insert(name, *line).is_some() {
                return Err(FclError::Invalid {
                    line: *line,
                    message: format!("variable `{name}` declared twice"),
                });
            }
        }
        let is_input = |n: &str| self.inputs.iter().any(|(i, _)| i == n);
        let is_output = |n: &str| self.outputs.iter().any(|(o, _)| o == n);

        let mut fuzz_by_name: HashMap<&str, &RawFuzzify> = HashMap::new();
        for f in &self.fuzzify {
            if !is_input(&f.name) {
                return Err(FclError::UnknownVariable {
                    name: f.name.clone(),
                    line: f.line,
                });
            }
            if fuzz_by_name.insert(&f.name, f).is_some() {
                return Err(FclError::Invalid {
                    line: f.line,
                    message: format!("`{}` fuzzified twice", f.name),
                });
            }
            check_range(f.range, f.line)?;
        }
        let mut defuzz_by_name: HashMap<&str, &RawDefuzzify> = HashMap::new();
        for d in &self.defuzzify {
            if !is_output(&d.name) {
                return Err(FclError::UnknownVariable {
                    name: d.name.clone(),
                    line: d.line,
                });
            }
            if defuzz_by_name.insert(&d.name, d).is_some() {
                return Err(FclError::Invalid {
                    line: d.line,
                    message: format!("`{}` defuzzified twice", d.name),
                });
            }
            check_range(d.range, d.line)?;
        }

        let mut inputs = Vec::new();
        for (name, _) in &self.inputs {
            let (range, terms) = match fuzz_by_name.get(name.as_str()) {
                Some(f) => (f.range, check_terms(name, &f.terms)?),
                None => (None, Vec::new()),
            };
            inputs.push(InputVariable {
                name: name.clone(),
                range,
                terms,
            });
        }

        let mut outputs = Vec::new();
        for (name, decl_line) in &self.outputs {
            let d = defuzz_by_name.get(name.as_str()).ok_or_else(|| FclError::Invalid {
                line: *decl_line,
                message: format!("output `{name}` has no DEFUZZIFY block"),
            })?;
            let terms = check_terms(name, &d.terms)?;
            let method = d.method.ok_or_else(|| FclError::Invalid {
                line: d.line,
                message: format!("DEFUZZIFY `{name}` lacks METHOD"),
            })?;
            let default = d.default.ok_or_else(|| FclError::Invalid {
                line: d.line,
                message: format!("DEFUZZIFY `{name}` lacks DEFAULT"),
            })?;
            let singletons = terms.iter().filter(|t| t.shape.is_singleton()).count();
            if singletons != 0 && singletons != terms.len() {
                return Err(FclError::Invalid {
                    line: d.line,
                    message: format!("output `{name}` mixes singleton and point-list terms"),
                });
            }
            if method == DefuzzMethod::Cogs && singletons != terms.len() {
                return Err(FclError::Invalid {
                    line: d.line,
                    message: format!("COGS on `{name}` requires singleton terms"),
                });
            }
            let var = OutputVariable {
                name: name.clone(),
                range: d.range,
                terms,
                method,
                default,
            };
            let (lo, hi) = var.effective_range();
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) && !var.is_discrete() {
                return Err(FclError::Invalid {
                    line: d.line,
                    message: format!("output `{name}` needs a RANGE or terms spanning an interval"),
                });
            }
            outputs.push(var);
        }

        let has_term = |vars: &[(&str, &[Term])], v: &str, t: &str| {
            vars.iter()
                .find(|(n, _)| *n == v)
                .map(|(_, terms)| terms.iter().any(|term| term.name == t))
        };
        let input_terms: Vec<(&str, &[Term])> =
            inputs.iter().map(|v| (v.name.as_str(), v.terms.as_slice())).collect();
        let output_terms: Vec<(&str, &[Term])> =
            outputs.iter().map(|v| (v.name.as_str(), v.terms.as_slice())).collect();

        let mut rule_ids = HashSet::new();
        let mut rule_blocks = Vec::new();
        for block in self.blocks {
            let mut rules = Vec::new();
            for raw in block.rules {
                if !rule_ids.insert(raw.rule.id) {
                    return Err(FclError::Invalid {
                        line: raw.line,
                        message: format!("rule {} defined twice", raw.rule.id),
                    });
                }
                for (refs, vars) in [
                    (&raw.antecedent_refs, &input_terms),
                    (&raw.consequent_refs, &output_terms),
                ] {
                    for r in refs.iter() {
                        match has_term(vars, &r.variable, &r.term) {
                            None => {
                                return Err(FclError::UnknownVariable {
                                    name: r.variable.clone(),
                                    line: r.line,
                                })
                            }
                            Some(false) => {
                                return Err(FclError::UnknownTerm {
                                    variable: r.variable.clone(),
                                    term: r.term.clone(),
                                    line: r.line,
                                })
                            }
                            Some(true) => {}
                        }
                    }
                }
                rules.push(raw.rule);
            }
            rule_blocks.push(RuleBlock {
                name: block.name,
                and: block.and,
                act: block.act,
                accu: block.accu,
                rules,
            });
        }

        Ok(FuzzySystem {
            name: self.name,
            inputs,
            outputs,
            rule_blocks,
        })
    }
}
