//! Summaries across runs: final loss, time to a loss threshold, and how
//! often each task was chosen, grouped by policy.

use std::fmt;

use crate::error::{Error, Result};

use super::experiment::RunMeta;
use super::metrics::MetricsTable;

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub label: String,
    pub table: MetricsTable,
    pub meta: Option<RunMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    /// Median over runs of the last row's `target_loss_mean`.
    pub median_final_loss: f64,
    /// Median over runs; `None` when fewer than half the runs reach it.
    pub median_episodes_to_threshold: Option<f64>,
    /// `(task, times chosen)` summed over runs, in source order.
    pub selections: Vec<(String, u64)>,
}

impl PolicySummary {
    pub fn selection_share(&self, task: &str) -> f64 {
        let total: u64 = self.selections.iter().map(|(_, c)| c).sum();
        let hits = self
            .selections
            .iter()
            .find(|(t, _)| t == task)
            .map_or(0, |(_, c)| *c);
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonSummary {
    pub threshold: Option<f64>,
    pub policies: Vec<PolicySummary>,
}

impl ComparisonSummary {
    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == name)
    }
}

/// Median of finite values; `None` entries sort above everything.
pub fn median_of(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<Option<f64>> = values.to_vec();
    v.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        Some((v[n / 2 - 1]? + v[n / 2]?) / 2.0)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let wrapped: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
    median_of(&wrapped).unwrap_or(f64::NAN)
}

/// First episode whose `target_loss_mean` is at or below `threshold`;
/// 0 when the initial loss already is.
pub fn episodes_to_threshold(table: &MetricsTable, initial_loss: Option<f64>, threshold: f64) -> Option<u64> {
    if initial_loss.is_some_and(|l| l <= threshold) {
        return Some(0);
    }
    table
        .rows
        .iter()
        .find(|r| r.target_loss_mean <= threshold)
        .map(|r| r.episode)
}

pub fn compare_runs(runs: &[RunRecord], threshold: Option<f64>) -> Result<ComparisonSummary> {
    if runs.len() < 2 {
        return Err(Error::Metrics("compare needs at least two runs".into()));
    }
    let sources = &runs[0].table.sources;
    for r in runs {
        if &r.table.sources != sources {
            return Err(Error::Metrics(format!(
                "column sets differ: `{}` has sources {:?}, `{}` has {:?}",
                runs[0].label, sources, r.label, r.table.sources
            )));
        }
        if r.table.rows.is_empty() {
            return Err(Error::Metrics(format!("`{}` has no rows", r.label)));
        }
    }
    let keys: Vec<(&str, serde_json::Value)> = runs
        .iter()
        .filter_map(|r| r.meta.as_ref().map(|m| (r.label.as_str(), m.config.setting_key())))
        .collect();
    if let Some((first_label, first)) = keys.first() {
        if let Some((label, _)) = keys.iter().find(|(_, k)| k != first) {
            return Err(Error::Metrics(format!(
                "`{label}` and `{first_label}` use different world or model settings"
            )));
        }
    }

    let mut order: Vec<String> = Vec::new();
    for r in runs {
        let p = &r.table.rows[0].policy;
        if !order.contains(p) {
            order.push(p.clone());
        }
    }
    let policies = order
        .into_iter()
        .map(|policy| {
            let group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.table.rows[0].policy == policy)
                .collect();
            let finals: Vec<f64> = group
                .iter()
                .map(|r| r.table.rows.last().expect("non-empty").target_loss_mean)
                .collect();
            let median_episodes_to_threshold = threshold.and_then(|thr| {
                let hits: Vec<Option<f64>> = group
                    .iter()
                    .map(|r| {
                        episodes_to_threshold(&r.table, r.meta.as_ref().map(|m| m.initial_target_loss), thr)
                            .map(|e| e as f64)
                    })
                    .collect();
                median_of(&hits)
            });
            let selections = sources
                .iter()
                .map(|s| {
                    let count = group
                        .iter()
                        .flat_map(|r| &r.table.rows)
                        .filter(|row| &row.chosen_task == s)
                        .count() as u64;
                    (s.clone(), count)
                })
                .collect();
            PolicySummary {
                policy,
                runs: group.len(),
                median_final_loss: median(&finals),
                median_episodes_to_threshold,
                selections,
            }
        })
        .collect();
    Ok(ComparisonSummary { threshold, policies })
}

impl fmt::Display for ComparisonSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<16} {:>5} {:>12}", "policy", "runs", "final_loss")?;
        if let Some(t) = self.threshold {
            write!(f, " {:>14}", format!("ep<={t:.4}"))?;
        }
        writeln!(f, "  selections")?;
        for p in &self.policies {
            write!(f, "{:<16} {:>5} {:>12.6}", p.policy, p.runs, p.median_final_loss)?;
            if self.threshold.is_some() {
                let cell = p
                    .median_episodes_to_threshold
                    .map_or_else(|| "never".to_string(), |e| format!("{e}"));
                write!(f, " {cell:>14}")?;
            }
            let hist: Vec<String> = p
                .selections
                .iter()
                .map(|(t, c)| format!("{t}={c} ({:.1}%)", 100.0 * p.selection_share(t)))
                .collect();
            writeln!(f, "  {}", hist.join(" "))?;
        }
        Ok(())
    }
}
