//! Rule evaluation, unknown-handling policy, and potential-risk reports.
//!
//! A risk is flagged when any of its rules holds. When none holds but some
//! cannot be determined, the risk is reported as indeterminate and the
//! unknown-flags policy decides whether it still counts as flagged.

mod explain;
mod markdown;
mod rules;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condexpr::{Answer, AnswerBindings, EvalError, Expr, QuestionId, Truth};
use crate::questionnaire::{
    AnswerSource, AssessmentSession, Purpose, QuestionnaireSet, SessionEvent,
};
use crate::taxonomy::EntityKind;
use crate::Framework;

pub use explain::explain;
pub use markdown::render_markdown;
pub use rules::{RiskRule, RuleError, RuleSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Whether a condition that cannot be determined still flags its risk.
    pub unknown_flags_default: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pack_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_hash: Option<String>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            unknown_flags_default: true,
            pack_hash: None,
            rules_hash: None,
        }
    }
}

impl EngineConfig {
    pub fn with_unknown_flags(unknown_flags_default: bool) -> Self {
        EngineConfig {
            unknown_flags_default,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskStatus {
    Flagged,
    NotFlagged,
    IndeterminateFlagged,
    IndeterminateUnflagged,
}

impl RiskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskStatus::Flagged => "flagged",
            RiskStatus::NotFlagged => "not-flagged",
            RiskStatus::IndeterminateFlagged => "indeterminate-flagged",
            RiskStatus::IndeterminateUnflagged => "indeterminate-unflagged",
        }
    }

    pub fn is_indeterminate(self) -> bool {
        matches!(
            self,
            RiskStatus::IndeterminateFlagged | RiskStatus::IndeterminateUnflagged
        )
    }

    /// Whether the risk goes to review as a potential risk.
    pub fn is_potential_risk(self) -> bool {
        matches!(self, RiskStatus::Flagged | RiskStatus::IndeterminateFlagged)
    }
}

impl core::fmt::Display for RiskStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One binding a rule condition read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleInput {
    pub question_id: QuestionId,
    pub prompt: String,
    /// `None` when the question is unanswered or its answer is inactive.
    pub answer: Option<Answer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule_id: String,
    pub condition: Expr,
    pub rationale: String,
    pub truth: Truth,
    /// Effective unknown-flags policy for this rule.
    pub unknown_flags: bool,
    pub inputs: Vec<RuleInput>,
}

impl RuleOutcome {
    pub fn bindings(&self) -> AnswerBindings {
        self.inputs
            .iter()
            .filter_map(|i| i.answer.clone().map(|a| (i.question_id.clone(), a)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub risk_id: String,
    pub name: String,
    pub status: RiskStatus,
    /// Every rule of the risk with its result, in rule-set order.
    pub fired_rules: Vec<RuleOutcome>,
    pub entities: Vec<EntityKind>,
    pub stages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub questionnaire_id: String,
    pub question_id: QuestionId,
    pub prompt: String,
    pub answer: String,
    pub source: AnswerSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileNote {
    pub question_id: QuestionId,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub entity_kind: EntityKind,
    pub entity_id: String,
    pub profile_hash: String,
    pub answered: usize,
    /// Context answers carried by the profile, e.g. remediation notes.
    pub notes: Vec<ProfileNote>,
}

impl ProfileSummary {
    pub fn line(&self) -> String {
        let short = self.profile_hash.get(..12).unwrap_or(&self.profile_hash);
        let mut line = alloc::format!(
            "{} {} (profile {short}, {} reused answers)",
            self.entity_kind,
            self.entity_id,
            self.answered
        );
        for note in &self.notes {
            line.push_str(&alloc::format!("; {}: {}", note.question_id, note.answer));
        }
        line
    }
}

/// Background collected for reviewers who judge relevance of flagged risks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDossier {
    pub use_title: String,
    pub entries: Vec<ContextEntry>,
    pub profiles: Vec<ProfileSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotentialRiskReport {
    pub session_id: String,
    pub generated_at: String,
    pub pack_hash: String,
    pub rules_hash: String,
    pub unknown_flags_default: bool,
    pub risks: Vec<RiskAssessment>,
    pub dossier: ContextDossier,
}

impl PotentialRiskReport {
    pub fn risk(&self, risk_id: &str) -> Option<&RiskAssessment> {
        self.risks.iter().find(|r| r.risk_id == risk_id)
    }

    pub fn status(&self, risk_id: &str) -> Option<RiskStatus> {
        self.risk(risk_id).map(|r| r.status)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("session was recorded against pack {session}, but the loaded pack is {pack}")]
    StalePack { session: String, pack: String },
    #[error("engine configuration expects {what} {expected}, loaded {found}")]
    ConfigMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("risk `{0}` is not in the report")]
    UnknownRisk(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Combine rule results into a status.
///
/// A risk without rules has every rule (vacuously) evaluating no, so it is
/// not flagged.
pub fn status_of(outcomes: &[RuleOutcome]) -> RiskStatus {
    if outcomes.iter().any(|o| o.truth == Truth::Yes) {
        RiskStatus::Flagged
    } else if outcomes
        .iter()
        .any(|o| o.truth == Truth::Unknown && o.unknown_flags)
    {
        RiskStatus::IndeterminateFlagged
    } else if outcomes.iter().any(|o| o.truth == Truth::Unknown) {
        RiskStatus::IndeterminateUnflagged
    } else {
        RiskStatus::NotFlagged
    }
}

/// Evaluate every risk of the pack against `bindings`.
pub fn assess_bindings(
    framework: &Framework,
    bindings: &AnswerBindings,
    config: &EngineConfig,
) -> Result<Vec<RiskAssessment>, EngineError> {
    let mut out = Vec::with_capacity(framework.pack().risks().len());
    for risk in framework.pack().risks() {
        let mut outcomes = Vec::new();
        for rule in framework.rules().for_risk(&risk.id) {
            outcomes.push(evaluate_rule(
                rule,
                framework.questionnaires(),
                bindings,
                config,
            )?);
        }
        out.push(RiskAssessment {
            risk_id: risk.id.clone(),
            name: risk.name.clone(),
            status: status_of(&outcomes),
            fired_rules: outcomes,
            entities: risk.entities.clone(),
            stages: risk.stages.clone(),
        });
    }
    Ok(out)
}

fn evaluate_rule(
    rule: &RiskRule,
    questionnaires: &QuestionnaireSet,
    bindings: &AnswerBindings,
    config: &EngineConfig,
) -> Result<RuleOutcome, EngineError> {
    let truth = rule.condition.evaluate(bindings)?;
    let mut inputs: Vec<RuleInput> = Vec::new();
    for leaf in rule.condition.leaves() {
        let id = match leaf {
            Expr::AnswerEquals(q, _) | Expr::IsUnknown(q) | Expr::IsAnswered(q) => q,
            _ => continue,
        };
        if inputs.iter().any(|i| i.question_id == *id) {
            continue;
        }
        inputs.push(RuleInput {
            question_id: id.clone(),
            prompt: questionnaires
                .question(id.as_str())
                .map(|q| q.prompt.clone())
                .unwrap_or_default(),
            answer: bindings.get(id.as_str()).cloned(),
        });
    }
    Ok(RuleOutcome {
        rule_id: rule.id.clone(),
        condition: rule.condition.clone(),
        rationale: rule.rationale.clone(),
        truth,
        unknown_flags: rule.unknown_flags.unwrap_or(config.unknown_flags_default),
        inputs,
    })
}

/// Evaluate a session into a potential-risk report.
pub fn evaluate_session(
    framework: &Framework,
    session: &AssessmentSession,
    config: &EngineConfig,
    generated_at: &str,
) -> Result<PotentialRiskReport, EngineError> {
    let pack_hash = framework.pack().content_hash();
    if session.pack_hash() != pack_hash {
        return Err(EngineError::StalePack {
            session: session.pack_hash().into(),
            pack: pack_hash.into(),
        });
    }
    check_config("pack", config.pack_hash.as_deref(), pack_hash)?;
    check_config(
        "rule set",
        config.rules_hash.as_deref(),
        framework.rules().content_hash(),
    )?;

    Ok(PotentialRiskReport {
        session_id: session.session_id().into(),
        generated_at: generated_at.into(),
        pack_hash: pack_hash.into(),
        rules_hash: framework.rules().content_hash().into(),
        unknown_flags_default: config.unknown_flags_default,
        risks: assess_bindings(framework, session.bindings(), config)?,
        dossier: assemble_dossier(session, framework.questionnaires()),
    })
}

fn check_config(
    what: &'static str,
    expected: Option<&str>,
    found: &str,
) -> Result<(), EngineError> {
    match expected {
        Some(expected) if expected != found => Err(EngineError::ConfigMismatch {
            what,
            expected: expected.into(),
            found: found.into(),
        }),
        _ => Ok(()),
    }
}

/// Answered context questions in questionnaire then declaration order, plus
/// summaries of attached profiles.
pub fn assemble_dossier(
    session: &AssessmentSession,
    questionnaires: &QuestionnaireSet,
) -> ContextDossier {
    let entries = questionnaires
        .all_questions()
        .filter(|(_, q)| q.purpose == Purpose::Context)
        .filter_map(|(owner, q)| {
            let recorded = session.answer(q.id.as_str())?;
            Some(ContextEntry {
                questionnaire_id: owner.id.clone(),
                question_id: q.id.clone(),
                prompt: q.prompt.clone(),
                answer: q.display_answer(&recorded.value),
                source: recorded.source,
            })
        })
        .collect();

    let profiles = session
        .history()
        .iter()
        .filter_map(|event| match event {
            SessionEvent::ProfileAttached {
                profile, answers, ..
            } => Some(ProfileSummary {
                entity_kind: profile.entity_kind,
                entity_id: profile.entity_id.clone(),
                profile_hash: profile.profile_hash.clone(),
                answered: answers.len(),
                notes: answers
                    .iter()
                    .filter_map(|(id, answer)| {
                        let q = questionnaires.question(id.as_str())?;
                        (q.purpose == Purpose::Context).then(|| ProfileNote {
                            question_id: id.clone(),
                            answer: q.display_answer(answer),
                        })
                    })
                    .collect(),
            }),
            SessionEvent::Answer { .. } => None,
        })
        .collect();

    ContextDossier {
        use_title: session.use_title().into(),
        entries,
        profiles,
    }
}
