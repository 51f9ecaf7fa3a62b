use std::collections::BTreeMap;
use std::fmt::Write;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::model::{Disorder, Phase, TherapyGroup};
use super::Store;

pub const CSV_HEADER: &str = "disorder,group,n,mean_pre,mean_post,delta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCell {
    pub disorder: Disorder,
    pub group: TherapyGroup,
    /// Children registered in the cell.
    pub n: usize,
    pub mean_pre: Option<f64>,
    pub mean_post: Option<f64>,
    pub delta: Option<f64>,
}

/// Disorder x therapy-group table, always six cells in enum order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub cells: Vec<CohortCell>,
}

impl CohortReport {
    pub fn cell(&self, disorder: Disorder, group: TherapyGroup) -> &CohortCell {
        self.cells
            .iter()
            .find(|c| c.disorder == disorder && c.group == group)
            .expect("report has every cell")
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.disorder,
                c.group,
                c.n,
                opt(c.mean_pre),
                opt(c.mean_post),
                opt(c.delta)
            );
        }
        out
    }
}

type Q = Ratio<i128>;

/// Mean of per-child means, in exact rational arithmetic. The result does
/// not depend on the order children or scores were inserted in.
fn mean_of_means(per_child: &[Q]) -> Option<Q> {
    if per_child.is_empty() {
        return None;
    }
    let sum = per_child.iter().fold(Q::from_integer(0), |acc, q| acc + q);
    Some(sum / Q::from_integer(per_child.len() as i128))
}

fn to_f64(q: Q) -> f64 {
    q.to_f64().expect("bounded scores give finite means")
}

impl Store {
    /// Per (disorder, group) cell: the number of children, the mean over
    /// children of each child's mean PRE_TEST score, the same for POST_TEST,
    /// and post minus pre. Children with no evaluated segment in a phase do
    /// not contribute to that phase's mean; empty means are `None`.
    pub fn cohort_report(&self) -> CohortReport {
        // (child, phase) -> (score sum, count)
        let mut totals: BTreeMap<(&str, Phase), (i128, i128)> = BTreeMap::new();
        for session in self.sessions_iter() {
            for seg in &session.segments {
                if let Some(ev) = self.evaluation(&seg.id) {
                    let t = totals
                        .entry((session.child_id.as_str(), session.phase))
                        .or_default();
                    t.0 += i128::from(ev.score);
                    t.1 += 1;
                }
            }
        }

        let mut cells = Vec::with_capacity(Disorder::ALL.len() * TherapyGroup::ALL.len());
        for &disorder in Disorder::ALL {
            for &group in TherapyGroup::ALL {
                let members: Vec<&str> = self
                    .children()
                    .filter(|c| c.disorder == disorder && c.therapy_group == group)
                    .map(|c| c.id.as_str())
                    .collect();
                let phase_means = |phase: Phase| -> Vec<Q> {
                    members
                        .iter()
                        .filter_map(|id| totals.get(&(*id, phase)))
                        .map(|&(sum, count)| Q::new(sum, count))
                        .collect()
                };
                let pre = mean_of_means(&phase_means(Phase::PreTest));
                let post = mean_of_means(&phase_means(Phase::PostTest));
                let delta = match (pre, post) {
                    (Some(a), Some(b)) => Some(to_f64(b - a)),
                    _ => None,
                };
                cells.push(CohortCell {
                    disorder,
                    group,
                    n: members.len(),
                    mean_pre: pre.map(to_f64),
                    mean_post: post.map(to_f64),
                    delta,
                });
            }
        }
        CohortReport { cells }
    }
}
