//! Brute-force Mamdani evaluator: every output is sampled on a 10,001-point
//! grid and defuzzified with plain sums. Slow, but easy to check by eye.

use std::collections::BTreeMap;

use logoped_core::fcl::{ActOp, AndOp, Condition, DefuzzMethod, FuzzySystem, MembershipFn};

pub const GRID_POINTS: usize = 10_001;

fn mu(shape: &MembershipFn, x: f64) -> f64 {
    match shape {
        MembershipFn::Singleton(v) => f64::from(u8::from(x == *v)),
        MembershipFn::Points(p) => {
            if x <= p[0].0 {
                return p[0].1;
            }
            for w in p.windows(2) {
                let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                if x <= x1 {
                    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
                }
            }
            p[p.len() - 1].1
        }
    }
}

fn truth(sys: &FuzzySystem, c: &Condition, and: AndOp, inputs: &BTreeMap<String, f64>) -> f64 {
    match c {
        Condition::Is {
            variable,
            term,
            negated,
        } => {
            let var = sys.inputs.iter().find(|v| &v.name == variable).unwrap();
            let t = var.terms.iter().find(|t| &t.name == term).unwrap();
            let m = mu(&t.shape, inputs[variable]);
            if *negated {
                1.0 - m
            } else {
                m
            }
        }
        Condition::Not(inner) => 1.0 - truth(sys, inner, and, inputs),
        Condition::And(a, b) => {
            let (a, b) = (truth(sys, a, and, inputs), truth(sys, b, and, inputs));
            match and {
                AndOp::Min => a.min(b),
                AndOp::Prod => a * b,
            }
        }
        Condition::Or(a, b) => {
            let (a, b) = (truth(sys, a, and, inputs), truth(sys, b, and, inputs));
            match and {
                AndOp::Min => a.max(b),
                AndOp::Prod => a + b - a * b,
            }
        }
    }
}

/// Crisp outputs of `sys` for `inputs` on the dense grid.
pub fn evaluate(sys: &FuzzySystem, inputs: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    evaluate_on_grid(sys, inputs, GRID_POINTS)
}

/// Same as [`evaluate`] with `grid_points` samples per continuous output.
pub fn evaluate_on_grid(sys: &FuzzySystem, inputs: &BTreeMap<String, f64>, grid_points: usize) -> BTreeMap<String, f64> {
    // (output, term, activation, act op)
    let mut fired = Vec::new();
    for block in &sys.rule_blocks {
        for rule in &block.rules {
            let degree = truth(sys, &rule.antecedent, block.and, inputs).clamp(0.0, 1.0);
            let activation = degree * rule.weight;
            for c in &rule.consequents {
                fired.push((c.variable.clone(), c.term.clone(), activation, block.act));
            }
        }
    }

    let mut out = BTreeMap::new();
    for var in &sys.outputs {
        let shape = |term: &str| &var.terms.iter().find(|t| t.name == term).unwrap().shape;
        let mine: Vec<_> = fired.iter().filter(|f| f.0 == var.name).collect();
        let value = if var.terms.iter().all(|t| matches!(t.shape, MembershipFn::Singleton(_))) {
            // one point per singleton position, max over rules
            let mut points: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            for (_, term, a, _) in &mine {
                if let MembershipFn::Singleton(x) = shape(term) {
                    let e = points.entry(x.to_bits()).or_insert((*x, 0.0));
                    e.1 = e.1.max(*a);
                }
            }
            let mass: f64 = points.values().map(|p| p.1).sum();
            if mass <= 0.0 {
                var.default
            } else if var.method == DefuzzMethod::Mom {
                let top = points.values().map(|p| p.1).fold(0.0, f64::max);
                let xs: Vec<f64> = points.values().filter(|p| p.1 == top).map(|p| p.0).collect();
                xs.iter().sum::<f64>() / xs.len() as f64
            } else {
                points.values().map(|p| p.0 * p.1).sum::<f64>() / mass
            }
        } else {
            let (lo, hi) = var.range.unwrap_or_else(|| var.effective_range());
            let h = (hi - lo) / (grid_points - 1) as f64;
            let xs: Vec<f64> = (0..grid_points).map(|i| lo + h * i as f64).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    mine.iter()
                        .map(|(_, term, a, act)| {
                            let m = mu(shape(term), x);
                            match act {
                                ActOp::Min => a.min(m),
                                ActOp::Prod => a * m,
                            }
                        })
                        .fold(0.0, f64::max)
                })
                .collect();
            let top = ys.iter().copied().fold(0.0, f64::max);
            if top <= 0.0 {
                var.default
            } else if var.method == DefuzzMethod::Mom {
                let at_top: Vec<f64> = xs
                    .iter()
                    .zip(&ys)
                    .filter(|(_, &y)| y >= top * (1.0 - 1e-12))
                    .map(|(&x, _)| x)
                    .collect();
                at_top.iter().sum::<f64>() / at_top.len() as f64
            } else {
                // trapezoid rule for both integrals
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..grid_points - 1 {
                    den += 0.5 * h * (ys[i] + ys[i + 1]);
                    num += 0.5 * h * (xs[i] * ys[i] + xs[i + 1] * ys[i + 1]);
                }
                num / den
            }
        };
        out.insert(var.name.clone(), value);
    }
    out
}
