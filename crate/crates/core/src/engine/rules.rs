use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::condexpr::{self, Expr, ParseError};
use crate::questionnaire::{self, Purpose, QuestionnaireSet};
use crate::taxonomy::TaxonomyPack;

/// An expert condition bound to the risk it suggests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskRule {
    pub id: String,
    pub risk_id: String,
    pub condition: Expr,
    /// Prose form of the expert condition.
    pub rationale: String,
    /// Per-rule override of the unknown-flags policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unknown_flags: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rules parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rule `{rule}`: {error}")]
    Condition { rule: String, error: ParseError },
    #[error("rule `{rule}`: {reason}")]
    CrossReference { rule: String, reason: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    id: String,
    risk_id: String,
    condition: String,
    rationale: String,
    #[serde(default)]
    unknown_flags: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    rules: Vec<RuleRecord>,
}

#[derive(Serialize)]
struct RuleDocument<'a> {
    rules: &'a [RiskRule],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<RiskRule>,
    content_hash: String,
}

impl RuleSet {
    pub fn load(
        source: &[u8],
        pack: &TaxonomyPack,
        questionnaires: &QuestionnaireSet,
    ) -> Result<Self, RuleError> {
        Self::load_with_diagnostics(source, pack, questionnaires).map_err(|mut e| e.swap_remove(0))
    }

    pub fn load_with_diagnostics(
        source: &[u8],
        pack: &TaxonomyPack,
        questionnaires: &QuestionnaireSet,
    ) -> Result<Self, Vec<RuleError>> {
        let file: RuleFile = serde_json::from_slice(source).map_err(|e| {
            alloc::vec![RuleError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            }]
        })?;
        let mut errors = Vec::new();
        let mut rules = Vec::new();
        let mut ids = BTreeSet::new();
        for record in file.rules {
            if !crate::is_identifier(&record.id) {
                errors.push(cross(
                    &record.id,
                    "rule id must match [A-Za-z][A-Za-z0-9_.-]*",
                ));
            }
            if !ids.insert(record.id.clone()) {
                errors.push(cross(&record.id, "duplicate rule id"));
            }
            match build_rule(record, pack, questionnaires) {
                Ok(rule) => rules.push(rule),
                Err(e) => errors.extend(e),
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let content_hash = canonical::content_hash(&RuleDocument { rules: &rules });
        Ok(RuleSet {
            rules,
            content_hash,
        })
    }

    pub fn rules(&self) -> &[RiskRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, id: &str) -> Option<&RiskRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Rules bound to `risk_id`, in declaration order.
    pub fn for_risk<'a>(&'a self, risk_id: &'a str) -> impl Iterator<Item = &'a RiskRule> + 'a {
        self.rules.iter().filter(move |r| r.risk_id == risk_id)
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }
}

fn cross(rule: &str, reason: impl Into<String>) -> RuleError {
    RuleError::CrossReference {
        rule: rule.to_string(),
        reason: reason.into(),
    }
}

fn build_rule(
    record: RuleRecord,
    pack: &TaxonomyPack,
    questionnaires: &QuestionnaireSet,
) -> Result<RiskRule, Vec<RuleError>> {
    let mut errors = Vec::new();
    let risk = pack.risk(&record.risk_id);
    if risk.is_none() {
        errors.push(cross(
            &record.id,
            format!("unknown risk `{}`", record.risk_id),
        ));
    }
    let condition = match condexpr::parse(&record.condition) {
        Ok(expr) => expr,
        Err(error) => {
            errors.push(RuleError::Condition {
                rule: record.id,
                error,
            });
            return Err(errors);
        }
    };
    for qid in condition.referenced_questions() {
        let Some((owner, question)) = questionnaires.locate(qid.as_str()) else {
            errors.push(cross(
                &record.id,
                format!("references undeclared question `{qid}`"),
            ));
            continue;
        };
        if question.purpose == Purpose::Context {
            errors.push(cross(
                &record.id,
                format!("reads context question `{qid}`; only evidence questions may feed rules"),
            ));
            continue;
        }
        if let Some(risk) = risk {
            if !risk.has_stage(&owner.stage) {
                errors.push(cross(
                    &record.id,
                    format!(
                        "reads `{qid}` from stage `{}`, which is not a stage of risk `{}`",
                        owner.stage, risk.id
                    ),
                ));
            }
        }
        if let Err(reason) = questionnaire::check_operand(question, &condition) {
            errors.push(cross(&record.id, reason));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(RiskRule {
        id: record.id,
        risk_id: record.risk_id,
        condition,
        rationale: record.rationale,
        unknown_flags: record.unknown_flags,
    })
}
