use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use super::{EngineError, PotentialRiskReport, RiskStatus, RuleInput, RuleOutcome};
use crate::condexpr::{Answer, Expr, Truth};
use crate::questionnaire::UNKNOWN_LABEL;

/// Human-readable rationale for one risk of a report.
pub fn explain(report: &PotentialRiskReport, risk_id: &str) -> Result<String, EngineError> {
    let risk = report
        .risk(risk_id)
        .ok_or_else(|| EngineError::UnknownRisk(risk_id.into()))?;
    let mut out = String::new();
    let _ = writeln!(out, "{} ({}): {}", risk.name, risk.risk_id, risk.status);
    let _ = writeln!(
        out,
        "{}",
        status_summary(risk.status, risk.fired_rules.is_empty())
    );
    for outcome in &risk.fired_rules {
        out.push('\n');
        explain_rule(outcome, &mut out)?;
    }
    Ok(out)
}

fn status_summary(status: RiskStatus, no_rules: bool) -> &'static str {
    if no_rules {
        return "No conditions are defined for this risk in the rule set.";
    }
    match status {
        RiskStatus::Flagged => "Potential risk: at least one condition holds.",
        RiskStatus::NotFlagged => "Not a potential risk: every condition evaluated no.",
        RiskStatus::IndeterminateFlagged => {
            "No condition holds, but at least one cannot be determined; the unknown-flags policy treats this as a potential risk."
        }
        RiskStatus::IndeterminateUnflagged => {
            "No condition holds, but at least one cannot be determined; the unknown-flags policy does not flag it."
        }
    }
}

fn explain_rule(outcome: &RuleOutcome, out: &mut String) -> Result<(), EngineError> {
    let _ = writeln!(out, "Rule {}: {}", outcome.rule_id, outcome.rationale);
    let _ = writeln!(
        out,
        "  Condition `{}` evaluated {}.",
        outcome.condition, outcome.truth
    );
    for input in &outcome.inputs {
        let _ = writeln!(
            out,
            "  - {} \"{}\": {}",
            input.question_id,
            input.prompt,
            answer_label(input)
        );
    }

    let bindings = outcome.bindings();
    let decisive = outcome.condition.decisive_leaves(&bindings)?;
    match outcome.truth {
        Truth::Yes => {
            let _ = writeln!(
                out,
                "  Holds because {}.",
                leaf_list(&decisive, "holds", "hold")
            );
        }
        Truth::No => {
            let _ = writeln!(
                out,
                "  Does not hold because {}.",
                leaf_list(&decisive, "is no", "are no")
            );
        }
        Truth::Unknown => {
            let mut blocking: Vec<String> = Vec::new();
            for (leaf, _) in &decisive {
                if let Expr::AnswerEquals(q, _) = leaf {
                    let label = outcome
                        .inputs
                        .iter()
                        .find(|i| i.question_id == *q)
                        .map(answer_label)
                        .unwrap_or_else(|| "unanswered".into());
                    let item = format!("{q} ({label})");
                    if !blocking.contains(&item) {
                        blocking.push(item);
                    }
                }
            }
            let _ = writeln!(
                out,
                "  Cannot be determined; blocked by {}.",
                blocking.join(", ")
            );
        }
    }
    Ok(())
}

fn leaf_list(leaves: &[(&Expr, Truth)], singular: &str, plural: &str) -> String {
    let names: Vec<String> = leaves.iter().map(|(leaf, _)| format!("`{leaf}`")).collect();
    let verb = if names.len() == 1 { singular } else { plural };
    format!("{} {verb}", names.join(" and "))
}

fn answer_label(input: &RuleInput) -> String {
    match &input.answer {
        None => "unanswered".into(),
        Some(Answer::Unknown) => UNKNOWN_LABEL.into(),
        Some(other) => format!("{other}"),
    }
}
