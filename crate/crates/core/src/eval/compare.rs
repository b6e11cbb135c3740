use serde::{Deserialize, Serialize};

use super::{aligned_csv, mean, EvalError, EvalReport, ObjectColumn};
use crate::dereco::{Method, METHODS};

/// One method's row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    /// Success rate per object column, `None` where the method was not run.
    pub per_object: Vec<Option<f64>>,
    pub seen_avg: Option<f64>,
    pub unseen_avg: Option<f64>,
}

/// Methods ordered best-first in one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRanking {
    pub column: String,
    pub ranking: Vec<(String, f64)>,
}

/// A qualitative ordering between two methods. `holds` is `None` when a
/// side is missing from the reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub id: String,
    pub description: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub holds: Option<bool>,
}

/// Per-object and averaged success rates of several methods side by side.
/// Orderings are reported, never enforced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub objects: Vec<ObjectColumn>,
    pub rows: Vec<ComparisonRow>,
    pub rankings: Vec<ColumnRanking>,
    pub checks: Vec<OrderingCheck>,
}

fn method_of(name: &str) -> Option<Method> {
    METHODS
        .into_iter()
        .find(|m| m.id() == name || m.display_name().eq_ignore_ascii_case(name))
}

fn avg(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| mean(v))
}

/// Merge reports that share one object catalog.
pub fn compare_methods(reports: &[EvalReport]) -> Result<Comparison, EvalError> {
    let Some(first) = reports.first() else {
        return Err(EvalError::Config("nothing to compare".into()));
    };
    let objects = first.objects.clone();
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for r in reports {
        if r.objects != objects {
            return Err(EvalError::Contract(format!(
                "reports use different object catalogs: [{}] vs [{}]",
                names(&objects),
                names(&r.objects)
            )));
        }
        for method in &r.methods {
            if rows.iter().any(|row| &row.method == method) {
                return Err(EvalError::Contract(format!(
                    "method {method} appears in more than one report"
                )));
            }
            let per_object: Vec<Option<f64>> = objects
                .iter()
                .map(|o| r.cell(method, &o.name).map(|c| c.success_rate))
                .collect();
            let pick = |seen: bool| -> Vec<f64> {
                objects
                    .iter()
                    .zip(&per_object)
                    .filter(|(o, _)| o.seen == seen)
                    .filter_map(|(_, v)| *v)
                    .collect()
            };
            rows.push(ComparisonRow {
                method: method.clone(),
                seen_avg: avg(&pick(true)),
                unseen_avg: avg(&pick(false)),
                per_object,
            });
        }
    }

    let mut rankings = Vec::new();
    let columns: Vec<(String, Box<dyn Fn(&ComparisonRow) -> Option<f64>>)> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            (
                o.name.clone(),
                Box::new(move |r: &ComparisonRow| r.per_object[i]) as Box<dyn Fn(&_) -> _>,
            )
        })
        .chain([
            (
                "Seen Avg.".to_string(),
                Box::new(|r: &ComparisonRow| r.seen_avg) as Box<dyn Fn(&_) -> _>,
            ),
            (
                "Unseen Avg.".to_string(),
                Box::new(|r: &ComparisonRow| r.unseen_avg) as Box<dyn Fn(&_) -> _>,
            ),
        ])
        .collect();
    for (column, get) in &columns {
        let mut ranking: Vec<(String, f64)> = rows
            .iter()
            .filter_map(|r| get(r).map(|v| (r.method.clone(), v)))
            .collect();
        if ranking.is_empty() {
            continue;
        }
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
        rankings.push(ColumnRanking {
            column: column.clone(),
            ranking,
        });
    }

    let row = |m: Method| rows.iter().find(|r| method_of(&r.method) == Some(m));
    let check = |id: &str, description: String, lhs: Option<f64>, rhs: Option<f64>, strict: bool| OrderingCheck {
        id: id.into(),
        description,
        lhs,
        rhs,
        holds: lhs.zip(rhs).map(|(a, b)| if strict { a > b } else { a >= b }),
    };
    let dereco = row(Method::Dereco);
    let wo_ae = row(Method::MappoWoAe);
    let wo_pi = row(Method::MappoWoPi);
    let w_pi = row(Method::MappoWPi);
    let mut checks = vec![
        check(
            "dereco_unseen_ge_wo_ae",
            "DeReCo unseen average >= MAPPO w/o AE unseen average".into(),
            dereco.and_then(|r| r.unseen_avg),
            wo_ae.and_then(|r| r.unseen_avg),
            false,
        ),
        check(
            "w_pi_seen_gt_unseen",
            "MAPPO w PI seen average > its unseen average".into(),
            w_pi.and_then(|r| r.seen_avg),
            w_pi.and_then(|r| r.unseen_avg),
            true,
        ),
        check(
            "w_pi_seen_ge_wo_pi",
            "MAPPO w PI seen average >= MAPPO w/o PI seen average".into(),
            w_pi.and_then(|r| r.seen_avg),
            wo_pi.and_then(|r| r.seen_avg),
            false,
        ),
    ];
    for (column, get) in &columns {
        checks.push(check(
            &format!("dereco_ge_wo_pi[{column}]"),
            format!("DeReCo >= MAPPO w/o PI on {column}"),
            dereco.and_then(|r| get(r)),
            wo_pi.and_then(|r| get(r)),
            false,
        ));
    }
    Ok(Comparison {
        objects,
        rows,
        rankings,
        checks,
    })
}

fn names(objects: &[ObjectColumn]) -> String {
    objects.iter().map(|o| o.name.as_str()).collect::<Vec<_>>().join(", ")
}

impl Comparison {
    /// The table as aligned CSV: one row per method, one column per object
    /// followed by the seen and unseen averages.
    pub fn table_csv(&self) -> Result<String, EvalError> {
        let mut header = vec!["method".to_string()];
        header.extend(self.objects.iter().map(|o| o.name.clone()));
        header.extend(["seen_avg".into(), "unseen_avg".into()]);
        let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.2}"));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut out = vec![r.method.clone()];
                out.extend(r.per_object.iter().map(|&v| fmt(v)));
                out.extend([fmt(r.seen_avg), fmt(r.unseen_avg)]);
                out
            })
            .collect();
        aligned_csv(&header, &rows)
    }

    pub fn check(&self, id: &str) -> Option<&OrderingCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}
