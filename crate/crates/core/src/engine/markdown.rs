use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use super::{explain, PotentialRiskReport};
use crate::questionnaire::AnswerSource;

/// Reviewer-facing Markdown: summary table, per-risk rationale, context dossier.
pub fn render_markdown(report: &PotentialRiskReport) -> String {
    let mut out = String::new();
    let d = &report.dossier;
    let _ = writeln!(out, "# Potential risk report: {}\n", inline(&d.use_title));
    let _ = writeln!(out, "- Session: `{}`", report.session_id);
    let _ = writeln!(out, "- Generated: {}", report.generated_at);
    let _ = writeln!(out, "- Taxonomy pack: `{}`", report.pack_hash);
    let _ = writeln!(out, "- Rule set: `{}`", report.rules_hash);
    let _ = writeln!(
        out,
        "- Undetermined conditions flag risks: {}",
        if report.unknown_flags_default {
            "yes"
        } else {
            "no"
        }
    );

    out.push_str("\n## Summary\n\n| Risk | Status | Entities | Stages |\n|---|---|---|---|\n");
    for risk in &report.risks {
        let entities: Vec<&str> = risk.entities.iter().map(|e| e.as_str()).collect();
        let _ = writeln!(
            out,
            "| {} (`{}`) | {} | {} | {} |",
            cell(&risk.name),
            risk.risk_id,
            risk.status,
            entities.join(", "),
            risk.stages.join(", ")
        );
    }

    out.push_str("\n## Per-risk rationale\n");
    for risk in &report.risks {
        let _ = writeln!(out, "\n### {} (`{}`)\n", inline(&risk.name), risk.risk_id);
        out.push_str("```text\n");
        out.push_str(&explain(report, &risk.risk_id).unwrap_or_default());
        out.push_str("```\n");
    }

    out.push_str("\n## Context dossier\n\n");
    let _ = writeln!(out, "**Use:** {}", inline(&d.use_title));
    if d.entries.is_empty() {
        out.push_str("\nNo context questions have been answered.\n");
    }
    for entry in &d.entries {
        let tag = match &entry.source {
            AnswerSource::Entered { .. } => "",
            AnswerSource::Reused { .. } => " _(reused)_",
        };
        let _ = writeln!(
            out,
            "\n**{}. {}**{tag}\n",
            entry.question_id,
            inline(&entry.prompt)
        );
        for line in entry.answer.lines() {
            let _ = writeln!(out, "> {line}");
        }
        if entry.answer.is_empty() {
            out.push_str(">\n");
        }
    }
    if !d.profiles.is_empty() {
        out.push_str("\n### Reused profiles\n\n");
        for profile in &d.profiles {
            let _ = writeln!(out, "- {}", inline(&profile.line()));
        }
    }
    out
}

fn inline(text: &str) -> String {
    text.replace(['\r', '\n'], " ")
}

fn cell(text: &str) -> String {
    inline(text).replace('|', "\\|")
}
