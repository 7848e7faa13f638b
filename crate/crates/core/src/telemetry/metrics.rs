use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{EndReason, EventPayload, ReplanScope, RunTerminal, TelemetryError, TraceEvent, TraceHeader};
use crate::environments::{ConstraintCategory, ConstraintRule, EnvMetrics, PlanConstraint};
use crate::roles::TokenUsage;

/// Checklist result for one delivered travel plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintScore {
    pub commonsense_passed: u32,
    pub commonsense_total: u32,
    pub hard_passed: u32,
    pub hard_total: u32,
    /// A plan was delivered and every constraint holds.
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub method: String,
    pub task_id: String,
    pub terminal: RunTerminal,
    pub reason: EndReason,
    pub steps_used: u32,
    pub delivery: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// None when the gold record carries no answer.
    pub accuracy: Option<bool>,
    pub reward: Option<f64>,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub replans_total: u32,
    /// Mean number of nodes whose plan an accepted replan rewrote; None without node-scoped replans.
    pub nodes_touched_per_replan: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintScore>,
}

impl MetricsRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        header: &TraceHeader,
        terminal: RunTerminal,
        reason: EndReason,
        steps_used: u32,
        delivered: bool,
        env: &EnvMetrics,
        usage: TokenUsage,
        replans_total: u32,
        node_scoped_replans: u32,
    ) -> Self {
        let gold = &header.gold;
        let accuracy = gold.answer.as_deref().map(|g| {
            env.answer
                .as_deref()
                .is_some_and(|a| normalize_answer(a) == normalize_answer(g))
        });
        let constraints = (!gold.constraints.is_empty())
            .then(|| check_constraints(env.plan.as_deref(), &gold.constraints));
        Self {
            run_id: header.run_id.clone(),
            method: header.method.clone(),
            task_id: header.task_id.clone(),
            terminal,
            reason,
            steps_used,
            delivery: delivered,
            answer: env.answer.clone(),
            accuracy,
            reward: env.reward,
            prompt_tokens: usage.prompt_tokens,
            output_tokens: usage.output_tokens,
            replans_total,
            nodes_touched_per_replan: (node_scoped_replans > 0).then_some(1.0),
            constraints,
        }
    }
}

/// Recomputes a run's metrics from its event stream alone.
pub fn compute_metrics(header: &TraceHeader, events: &[TraceEvent]) -> Result<MetricsRecord, TelemetryError> {
    let mut usage = TokenUsage::default();
    let mut replans = 0;
    let mut node_replans = 0;
    let mut end = None;
    for event in events {
        match &event.payload {
            EventPayload::RoleCall { usage: u, .. } => usage += *u,
            EventPayload::Replan { scope, accepted: true, .. } => {
                replans += 1;
                if matches!(scope, ReplanScope::Node { .. }) {
                    node_replans += 1;
                }
            }
            EventPayload::RunEnd {
                terminal,
                reason,
                steps_used,
                delivered,
                env,
                ..
            } => end = Some((*terminal, *reason, *steps_used, *delivered, env)),
            _ => {}
        }
    }
    let (terminal, reason, steps_used, delivered, env) =
        end.ok_or_else(|| TelemetryError::MissingRunEnd(header.run_id.clone()))?;
    Ok(MetricsRecord::build(
        header,
        terminal,
        reason,
        steps_used,
        delivered,
        env,
        usage,
        replans,
        node_replans,
    ))
}

/// Lowercases, drops punctuation and the articles a/an/the, and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    static ARTICLES: OnceLock<Regex> = OnceLock::new();
    let articles = ARTICLES.get_or_init(|| Regex::new(r"\b(a|an|the)\b").unwrap());
    let lower: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    articles
        .replace_all(&lower, " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn total_cost(plan: &str) -> f64 {
    static COST: OnceLock<Regex> = OnceLock::new();
    let cost = COST.get_or_init(|| Regex::new(r"cost=(\d+(?:\.\d+)?)").unwrap());
    cost.captures_iter(plan)
        .filter_map(|c| c[1].parse::<f64>().ok())
        .sum()
}

fn rule_holds(plan: &str, rule: &ConstraintRule) -> bool {
    let lower = plan.to_lowercase();
    match rule {
        ConstraintRule::Includes { text } => lower.contains(&text.to_lowercase()),
        ConstraintRule::Excludes { text } => !lower.contains(&text.to_lowercase()),
        ConstraintRule::MaxTotalCost { limit } => total_cost(plan) <= *limit,
    }
}

/// Evaluates the checklist; an undelivered plan fails every item.
pub fn check_constraints(plan: Option<&str>, constraints: &[PlanConstraint]) -> ConstraintScore {
    let mut score = ConstraintScore {
        commonsense_passed: 0,
        commonsense_total: 0,
        hard_passed: 0,
        hard_total: 0,
        all_passed: plan.is_some(),
    };
    for c in constraints {
        let ok = plan.is_some_and(|p| rule_holds(p, &c.rule));
        let (passed, total) = match c.category {
            ConstraintCategory::Commonsense => (&mut score.commonsense_passed, &mut score.commonsense_total),
            ConstraintCategory::Hard => (&mut score.hard_passed, &mut score.hard_total),
        };
        *total += 1;
        if ok {
            *passed += 1;
        } else {
            score.all_passed = false;
        }
    }
    score
}

/// Checklist aggregates over a batch of travel runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelSummary {
    pub delivery: f64,
    pub commonsense_micro: f64,
    pub commonsense_macro: f64,
    pub hard_micro: f64,
    pub hard_macro: f64,
    pub final_pass: f64,
    /// Arithmetic mean of the six rates above.
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub method: String,
    pub runs: usize,
    pub delivery_rate: f64,
    pub accuracy: Option<f64>,
    pub delivered_accuracy: Option<f64>,
    pub avg_reward: Option<f64>,
    pub avg_output_tokens: f64,
    pub avg_prompt_tokens: f64,
    pub avg_steps: f64,
    pub replans_total: u64,
    pub travel: Option<TravelSummary>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio(passed: u32, total: u32) -> f64 {
    if total == 0 {
        1.0
    } else {
        f64::from(passed) / f64::from(total)
    }
}

fn travel_summary(records: &[MetricsRecord]) -> Option<TravelSummary> {
    let scored: Vec<(bool, ConstraintScore)> = records
        .iter()
        .filter_map(|r| r.constraints.map(|c| (r.delivery, c)))
        .collect();
    if scored.is_empty() {
        return None;
    }
    let n = scored.len() as f64;
    let sum = |f: fn(&ConstraintScore) -> u32| scored.iter().map(|(_, c)| f(c)).sum::<u32>();
    let frac = |f: &dyn Fn(&(bool, ConstraintScore)) -> bool| scored.iter().filter(|s| f(s)).count() as f64 / n;
    let delivery = frac(&|(d, _)| *d);
    let commonsense_micro = ratio(sum(|c| c.commonsense_passed), sum(|c| c.commonsense_total));
    let hard_micro = ratio(sum(|c| c.hard_passed), sum(|c| c.hard_total));
    let commonsense_macro = frac(&|(d, c)| *d && c.commonsense_passed == c.commonsense_total);
    let hard_macro = frac(&|(d, c)| *d && c.hard_passed == c.hard_total);
    let final_pass = frac(&|(d, c)| *d && c.all_passed);
    let average =
        (delivery + commonsense_micro + commonsense_macro + hard_micro + hard_macro + final_pass) / 6.0;
    Some(TravelSummary {
        delivery,
        commonsense_micro,
        commonsense_macro,
        hard_micro,
        hard_macro,
        final_pass,
        average,
    })
}

/// Per-method means over a nonempty batch.
pub fn summarize(method: &str, records: &[MetricsRecord]) -> Result<MetricsSummary, TelemetryError> {
    if records.is_empty() {
        return Err(TelemetryError::EmptyBatch(method.to_string()));
    }
    let n = records.len() as f64;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(MetricsSummary {
        method: method.to_string(),
        runs: records.len(),
        delivery_rate: records.iter().map(|r| flag(r.delivery)).sum::<f64>() / n,
        accuracy: mean(records.iter().filter_map(|r| r.accuracy).map(flag)),
        delivered_accuracy: mean(
            records
                .iter()
                .filter(|r| r.delivery)
                .filter_map(|r| r.accuracy)
                .map(flag),
        ),
        avg_reward: mean(records.iter().filter_map(|r| r.reward)),
        avg_output_tokens: records.iter().map(|r| r.output_tokens as f64).sum::<f64>() / n,
        avg_prompt_tokens: records.iter().map(|r| r.prompt_tokens as f64).sum::<f64>() / n,
        avg_steps: records.iter().map(|r| f64::from(r.steps_used)).sum::<f64>() / n,
        replans_total: records.iter().map(|r| u64::from(r.replans_total)).sum(),
        travel: travel_summary(records),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub summary: MetricsSummary,
    /// 1 - avg output tokens / reference avg output tokens.
    pub token_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub reference: String,
    pub rows: Vec<CompareRow>,
}

pub fn compare_report(
    batches: &BTreeMap<String, Vec<MetricsRecord>>,
    reference: &str,
) -> Result<CompareReport, TelemetryError> {
    let summaries = batches
        .iter()
        .map(|(method, records)| summarize(method, records))
        .collect::<Result<Vec<_>, _>>()?;
    let reference_tokens = summaries
        .iter()
        .find(|s| s.method == reference)
        .map(|s| s.avg_output_tokens)
        .ok_or_else(|| TelemetryError::UnknownReference(reference.to_string()))?;
    let rows = summaries
        .into_iter()
        .map(|summary| CompareRow {
            token_reduction: (reference_tokens > 0.0)
                .then(|| 1.0 - summary.avg_output_tokens / reference_tokens),
            summary,
        })
        .collect();
    Ok(CompareReport {
        reference: reference.to_string(),
        rows,
    })
}

fn pct(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{:.1}%", v * 100.0))
}

impl CompareReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>9} {:>9} {:>10} {:>8} {:>10} {:>8} {:>10}",
            "method", "runs", "delivery", "accuracy", "deliv-acc", "reward", "out-tok", "replans", "reduction"
        );
        for row in &self.rows {
            let s = &row.summary;
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>9} {:>9} {:>10} {:>8} {:>10.1} {:>8} {:>10}",
                s.method,
                s.runs,
                pct(Some(s.delivery_rate)),
                pct(s.accuracy),
                pct(s.delivered_accuracy),
                s.avg_reward.map_or_else(|| "-".to_string(), |r| format!("{r:.3}")),
                s.avg_output_tokens,
                s.replans_total,
                pct(row.token_reduction),
            );
        }
        let travel: Vec<_> = self.rows.iter().filter_map(|r| r.summary.travel.as_ref().map(|t| (&r.summary.method, t))).collect();
        if !travel.is_empty() {
            let _ = writeln!(out, "\ntravel checklist (reference {}):", self.reference);
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
                "method", "delivery", "cs-micro", "cs-macro", "hc-micro", "hc-macro", "final", "avg"
            );
            for (method, t) in travel {
                let _ = writeln!(
                    out,
                    "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
                    method,
                    pct(Some(t.delivery)),
                    pct(Some(t.commonsense_micro)),
                    pct(Some(t.commonsense_macro)),
                    pct(Some(t.hard_micro)),
                    pct(Some(t.hard_macro)),
                    pct(Some(t.final_pass)),
                    pct(Some(t.average)),
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::Gold;
    use crate::telemetry::TRACE_VERSION;

    fn header(gold: Gold) -> TraceHeader {
        TraceHeader {
            version: TRACE_VERSION,
            run_id: "m-t".into(),
            method: "m".into(),
            task_id: "t".into(),
            gold,
        }
    }

    fn record(method: &str, output_tokens: u64) -> MetricsRecord {
        MetricsRecord::build(
            &header(Gold::default()),
            RunTerminal::Completed,
            EndReason::EnvironmentDone,
            1,
            true,
            &EnvMetrics::default(),
            TokenUsage::new(0, output_tokens),
            0,
            0,
        )
        .with_method(method)
    }

    impl MetricsRecord {
        fn with_method(mut self, method: &str) -> Self {
            self.method = method.into();
            self
        }
    }

    #[test]
    fn answer_normalization() {
        assert_eq!(normalize_answer("The  Paris!"), "paris");
        assert_eq!(normalize_answer("An apple, a day"), "apple day");
        let gold = Gold {
            answer: Some("paris".into()),
            constraints: vec![],
        };
        let env = EnvMetrics {
            answer: Some("Paris".into()),
            delivered: true,
            done: true,
            ..EnvMetrics::default()
        };
        let r = MetricsRecord::build(
            &header(gold),
            RunTerminal::Completed,
            EndReason::EnvironmentDone,
            3,
            true,
            &env,
            TokenUsage::default(),
            0,
            0,
        );
        assert_eq!(r.accuracy, Some(true));
    }

    #[test]
    fn reduction_arithmetic() {
        let mut batches = BTreeMap::new();
        batches.insert("tdp".to_string(), vec![record("tdp", 250)]);
        batches.insert("plan-act".to_string(), vec![record("plan-act", 1000)]);
        let report = compare_report(&batches, "plan-act").unwrap();
        let tdp = report.rows.iter().find(|r| r.summary.method == "tdp").unwrap();
        assert_eq!(tdp.token_reduction, Some(0.75));
        let reference = report.rows.iter().find(|r| r.summary.method == "plan-act").unwrap();
        assert_eq!(reference.token_reduction, Some(0.0));
        assert!(report.render_table().contains("75.0%"));
        batches.insert("cot".to_string(), vec![]);
        assert!(matches!(compare_report(&batches, "plan-act"), Err(TelemetryError::EmptyBatch(_))));
    }

    #[test]
    fn constraint_checklist() {
        let constraints: Vec<PlanConstraint> = serde_json::from_str(
            r#"[
                {"name":"budget","category":"hard","rule":"max_total_cost","limit":500},
                {"name":"city","category":"commonsense","rule":"includes","text":"Denver"},
                {"name":"no-smoking","category":"hard","rule":"excludes","text":"smoking"}
            ]"#,
        )
        .unwrap();
        let plan = "[1] Flight F1 cost=200\n[2] Hotel in denver cost=250.5";
        let s = check_constraints(Some(plan), &constraints);
        assert_eq!((s.hard_passed, s.hard_total, s.commonsense_passed), (2, 2, 1));
        assert!(s.all_passed);
        let over = check_constraints(Some("cost=400 cost=101 Denver"), &constraints);
        assert_eq!(over.hard_passed, 1);
        assert!(!over.all_passed);
        let none = check_constraints(None, &constraints);
        assert_eq!(none.hard_passed + none.commonsense_passed, 0);
    }
}
