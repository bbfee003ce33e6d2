//! Stage and role bound questionnaires with guidance text and gating.

mod session;

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condexpr::{self, Answer, Expr, Literal, QuestionId};
use crate::taxonomy::TaxonomyPack;

pub use session::{
    AnswerSource, AssessmentSession, Completeness, ProfileRef, RecordedAnswer, SessionError,
    SessionEvent, SessionFile,
};

/// Longest accepted free-text answer, in bytes.
pub const MAX_TEXT_BYTES: usize = 64 * 1024;

/// Display label for the tri-state unknown marker.
pub const UNKNOWN_LABEL: &str = "Not found in the documentation";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionKind {
    FreeText,
    Boolean,
    /// yes / no / unknown marker.
    TriState,
    SingleChoice(Vec<String>),
}

impl QuestionKind {
    pub fn name(&self) -> &'static str {
        match self {
            QuestionKind::FreeText => "free-text",
            QuestionKind::Boolean => "boolean",
            QuestionKind::TriState => "tri-state",
            QuestionKind::SingleChoice(_) => "single-choice",
        }
    }

    pub fn options(&self) -> &[String] {
        match self {
            QuestionKind::SingleChoice(options) => options,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    /// Open-ended background for reviewers; never read by a rule.
    Context,
    /// Closed-form input to risk conditions.
    Evidence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: QuestionId,
    pub prompt: String,
    pub guidance: Option<String>,
    pub kind: QuestionKind,
    pub gate: Option<Expr>,
    pub purpose: Purpose,
    pub notes: Vec<String>,
}

impl Question {
    /// Check that `answer` is admissible for this question's kind.
    pub fn accepts(&self, answer: &Answer) -> bool {
        match (&self.kind, answer) {
            (QuestionKind::Boolean, Answer::Yes | Answer::No) => true,
            (QuestionKind::TriState, Answer::Yes | Answer::No | Answer::Unknown) => true,
            (QuestionKind::SingleChoice(options), Answer::Choice(c)) => options.contains(c),
            (QuestionKind::FreeText, Answer::Text(t)) => t.len() <= MAX_TEXT_BYTES,
            _ => false,
        }
    }

    /// Interpret user-typed text as an answer for this question.
    ///
    /// Tri-state questions accept `unknown` or the documentation label for the
    /// unknown marker; free text is taken verbatim.
    pub fn parse_answer(&self, raw: &str) -> Option<Answer> {
        let trimmed = raw.trim();
        let answer = match &self.kind {
            QuestionKind::FreeText => Answer::Text(raw.to_owned()),
            QuestionKind::SingleChoice(_) => Answer::Choice(trimmed.to_owned()),
            QuestionKind::Boolean | QuestionKind::TriState => {
                match trimmed.to_ascii_lowercase().as_str() {
                    "yes" | "y" | "true" => Answer::Yes,
                    "no" | "n" | "false" => Answer::No,
                    "unknown" => Answer::Unknown,
                    other if other == UNKNOWN_LABEL.to_ascii_lowercase() => Answer::Unknown,
                    _ => return None,
                }
            }
        };
        self.accepts(&answer).then_some(answer)
    }

    /// Human label for an answer to this question.
    pub fn display_answer(&self, answer: &Answer) -> String {
        match (&self.kind, answer) {
            (QuestionKind::TriState, Answer::Unknown) => UNKNOWN_LABEL.to_owned(),
            _ => answer.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionRecord {
    id: QuestionId,
    prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guidance: Option<String>,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    options: Option<Vec<String>>,
    purpose: Purpose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gate: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

impl From<&Question> for QuestionRecord {
    fn from(q: &Question) -> Self {
        QuestionRecord {
            id: q.id.clone(),
            prompt: q.prompt.clone(),
            guidance: q.guidance.clone(),
            kind: q.kind.name().to_owned(),
            options: match &q.kind {
                QuestionKind::SingleChoice(o) => Some(o.clone()),
                _ => None,
            },
            purpose: q.purpose,
            gate: q.gate.as_ref().map(|g| g.to_string()),
            notes: q.notes.clone(),
        }
    }
}

impl Serialize for Question {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        QuestionRecord::from(self).serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Questionnaire {
    pub id: String,
    pub title: String,
    pub stage: String,
    pub role: String,
    pub questions: Vec<Question>,
}

impl Questionnaire {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id.as_str() == id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionnaireRecord {
    id: String,
    title: String,
    stage: String,
    role: String,
    questions: Vec<QuestionRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetRecord {
    #[serde(default)]
    notes: Vec<String>,
    questionnaires: Vec<QuestionnaireRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuestionnaireError {
    #[error("questionnaire parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid questionnaire entry `{id}`: {reason}")]
    Validation { id: String, reason: String },
}

impl QuestionnaireError {
    fn invalid(id: impl Into<String>, reason: impl Into<String>) -> Self {
        QuestionnaireError::Validation {
            id: id.into(),
            reason: reason.into(),
        }
    }
}

/// Every questionnaire of a pack, validated against its taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionnaireSet {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
    questionnaires: Vec<Questionnaire>,
    #[serde(skip)]
    index: BTreeMap<QuestionId, (usize, usize)>,
    #[serde(skip)]
    roles: BTreeSet<String>,
}

impl QuestionnaireSet {
    pub fn load(source: &[u8], pack: &TaxonomyPack) -> Result<Self, QuestionnaireError> {
        Self::load_with_diagnostics(source, pack).map_err(|mut e| e.swap_remove(0))
    }

    pub fn load_with_diagnostics(
        source: &[u8],
        pack: &TaxonomyPack,
    ) -> Result<Self, Vec<QuestionnaireError>> {
        let record: SetRecord = serde_json::from_slice(source).map_err(|e| {
            alloc::vec![QuestionnaireError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            }]
        })?;
        let mut errors = Vec::new();
        let mut questionnaires = Vec::new();
        let mut index = BTreeMap::new();
        let mut ids = BTreeSet::new();

        for (qi, raw) in record.questionnaires.into_iter().enumerate() {
            if !ids.insert(raw.id.clone()) {
                errors.push(QuestionnaireError::invalid(
                    &raw.id,
                    "duplicate questionnaire id",
                ));
            }
            if pack.stage(&raw.stage).is_none() {
                errors.push(QuestionnaireError::invalid(
                    &raw.id,
                    format!("references undeclared stage `{}`", raw.stage),
                ));
            }
            if pack.role(&raw.role).is_none() {
                errors.push(QuestionnaireError::invalid(
                    &raw.id,
                    format!("references undeclared role `{}`", raw.role),
                ));
            }
            let mut questions: Vec<Question> = Vec::new();
            for (position, rec) in raw.questions.into_iter().enumerate() {
                let id = rec.id.clone();
                if index.insert(id.clone(), (qi, position)).is_some() {
                    errors.push(QuestionnaireError::invalid(
                        id.as_str(),
                        "duplicate question id",
                    ));
                }
                // Any failure aborts the load, so positions only matter when all build.
                match build_question(rec, &questions) {
                    Ok(q) => questions.push(q),
                    Err(e) => errors.push(e),
                }
            }
            questionnaires.push(Questionnaire {
                id: raw.id,
                title: raw.title,
                stage: raw.stage,
                role: raw.role,
                questions,
            });
        }

        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(QuestionnaireSet {
            notes: record.notes,
            questionnaires,
            index,
            roles: pack.roles().iter().map(|r| r.id.clone()).collect(),
        })
    }

    pub fn questionnaires(&self) -> &[Questionnaire] {
        &self.questionnaires
    }

    pub fn questionnaire(&self, id: &str) -> Option<&Questionnaire> {
        self.questionnaires.iter().find(|q| q.id == id)
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.locate(id).map(|(_, q)| q)
    }

    /// The questionnaire owning `id`, and the question itself.
    pub fn locate(&self, id: &str) -> Option<(&Questionnaire, &Question)> {
        let &(qi, pos) = self.index.get(id)?;
        let questionnaire = &self.questionnaires[qi];
        Some((questionnaire, &questionnaire.questions[pos]))
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.contains(role)
    }

    /// All questions in questionnaire then declaration order.
    pub fn all_questions(&self) -> impl Iterator<Item = (&Questionnaire, &Question)> {
        self.questionnaires
            .iter()
            .flat_map(|qn| qn.questions.iter().map(move |q| (qn, q)))
    }
}

fn build_question(
    rec: QuestionRecord,
    earlier: &[Question],
) -> Result<Question, QuestionnaireError> {
    let id = rec.id.as_str().to_owned();
    let kind = match (rec.kind.as_str(), rec.options) {
        ("free-text", None) => QuestionKind::FreeText,
        ("boolean", None) => QuestionKind::Boolean,
        ("tri-state", None) => QuestionKind::TriState,
        ("single-choice", Some(options)) => {
            if options.is_empty() {
                return Err(QuestionnaireError::invalid(
                    id,
                    "single-choice question has no options",
                ));
            }
            let unique: BTreeSet<&String> = options.iter().collect();
            if unique.len() != options.len() {
                return Err(QuestionnaireError::invalid(id, "duplicate choice option"));
            }
            QuestionKind::SingleChoice(options)
        }
        ("single-choice", None) => {
            return Err(QuestionnaireError::invalid(
                id,
                "single-choice question needs `options`",
            ))
        }
        (k @ ("free-text" | "boolean" | "tri-state"), Some(_)) => {
            return Err(QuestionnaireError::invalid(
                id,
                format!("`options` not allowed on {k} question"),
            ))
        }
        (other, _) => {
            return Err(QuestionnaireError::invalid(
                id,
                format!("unknown question kind `{other}`"),
            ))
        }
    };
    match (rec.purpose, &kind) {
        (Purpose::Context, QuestionKind::Boolean | QuestionKind::TriState) => {
            return Err(QuestionnaireError::invalid(
                id,
                "context questions must be free-text or single-choice",
            ))
        }
        (Purpose::Evidence, QuestionKind::FreeText) => {
            return Err(QuestionnaireError::invalid(
                id,
                "evidence questions cannot be free-text",
            ))
        }
        _ => {}
    }
    let gate = match rec.gate {
        None => None,
        Some(src) => {
            let expr = condexpr::parse(&src)
                .map_err(|e| QuestionnaireError::invalid(id.clone(), format!("gate: {e}")))?;
            for referenced in expr.referenced_questions() {
                let Some(target) = earlier.iter().find(|q| q.id == referenced) else {
                    return Err(QuestionnaireError::invalid(
                        id,
                        format!("gate references `{referenced}`, which is not declared earlier in this questionnaire"),
                    ));
                };
                check_operand(target, &expr).map_err(|reason| {
                    QuestionnaireError::invalid(id.clone(), format!("gate: {reason}"))
                })?;
            }
            Some(expr)
        }
    };
    Ok(Question {
        id: rec.id,
        prompt: rec.prompt,
        guidance: rec.guidance,
        kind,
        gate,
        purpose: rec.purpose,
        notes: rec.notes,
    })
}

/// Check that every comparison against `target` inside `expr` uses a literal
/// its kind can hold.
pub(crate) fn check_operand(target: &Question, expr: &Expr) -> Result<(), String> {
    for leaf in expr.leaves() {
        let Expr::AnswerEquals(q, literal) = leaf else {
            continue;
        };
        if *q != target.id {
            continue;
        }
        let ok = match (&target.kind, literal) {
            (QuestionKind::FreeText, _) => false,
            (QuestionKind::Boolean | QuestionKind::TriState, Literal::Yes | Literal::No) => true,
            (QuestionKind::SingleChoice(options), Literal::Choice(c)) => options.contains(c),
            _ => false,
        };
        if !ok {
            return Err(format!(
                "`{leaf}` compares {} question `{}` with an incompatible literal",
                target.kind.name(),
                target.id
            ));
        }
    }
    if target.kind == QuestionKind::FreeText {
        return Err(format!(
            "free-text question `{}` cannot be a condition operand",
            target.id
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn pack() -> TaxonomyPack {
        TaxonomyPack::load(bundled::PACK.as_bytes()).unwrap()
    }

    fn load(json: &str) -> Result<QuestionnaireSet, QuestionnaireError> {
        QuestionnaireSet::load(json.as_bytes(), &pack())
    }

    fn one(questions: &str) -> String {
        format!(
            r#"{{"questionnaires":[{{"id":"q","title":"Q","stage":"use-definition","role":"product-owner","questions":[{questions}]}}]}}"#
        )
    }

    #[test]
    fn bundled_questionnaires_load() {
        let set = QuestionnaireSet::load(bundled::QUESTIONNAIRES.as_bytes(), &pack()).unwrap();
        let ids: Vec<_> = set.questionnaires().iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["use", "model-onboarding", "use-and-model"]);
        let count: usize = set.questionnaires().iter().map(|q| q.questions.len()).sum();
        assert_eq!(count, 15);
        assert_eq!(
            set.question("A8")
                .unwrap()
                .gate
                .as_ref()
                .unwrap()
                .to_string(),
            "A7 == yes"
        );
        assert_eq!(set.question("B1").unwrap().kind, QuestionKind::TriState);
        assert_eq!(set.question("B4").unwrap().purpose, Purpose::Context);
        assert_eq!(set.locate("C1").unwrap().0.stage, "implementation");
    }

    #[test]
    fn forward_gate_rejected() {
        let err = load(&one(
            r#"{"id":"X1","prompt":"p","kind":"boolean","purpose":"evidence","gate":"X2 == yes"},
               {"id":"X2","prompt":"p","kind":"boolean","purpose":"evidence"}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, QuestionnaireError::Validation { id, .. } if id == "X1"));
    }

    #[test]
    fn self_gate_rejected() {
        assert!(load(&one(
            r#"{"id":"X1","prompt":"p","kind":"boolean","purpose":"evidence","gate":"X1 == yes"}"#
        ))
        .is_err());
    }

    #[test]
    fn gate_on_free_text_rejected() {
        assert!(load(&one(
            r#"{"id":"X1","prompt":"p","kind":"free-text","purpose":"context"},
               {"id":"X2","prompt":"p","kind":"boolean","purpose":"evidence","gate":"answered(X1)"}"#
        ))
        .is_err());
    }

    #[test]
    fn gate_literal_must_fit_kind() {
        assert!(load(&one(
            r#"{"id":"X1","prompt":"p","kind":"single-choice","options":["a","b"],"purpose":"context"},
               {"id":"X2","prompt":"p","kind":"boolean","purpose":"evidence","gate":"X1 == yes"}"#
        ))
        .is_err());
        assert!(load(&one(
            r#"{"id":"X1","prompt":"p","kind":"single-choice","options":["a","b"],"purpose":"context"},
               {"id":"X2","prompt":"p","kind":"boolean","purpose":"evidence","gate":"X1 == \"a\""}"#
        ))
        .is_ok());
    }

    #[test]
    fn purpose_kind_constraints() {
        assert!(load(&one(
            r#"{"id":"X1","prompt":"p","kind":"boolean","purpose":"context"}"#
        ))
        .is_err());
        assert!(load(&one(
            r#"{"id":"X1","prompt":"p","kind":"free-text","purpose":"evidence"}"#
        ))
        .is_err());
    }

    #[test]
    fn duplicate_question_ids_across_questionnaires() {
        let json = r#"{"questionnaires":[
          {"id":"a","title":"A","stage":"use-definition","role":"product-owner","questions":[
            {"id":"X1","prompt":"p","kind":"boolean","purpose":"evidence"}]},
          {"id":"b","title":"B","stage":"implementation","role":"data-scientist","questions":[
            {"id":"X1","prompt":"p","kind":"boolean","purpose":"evidence"}]}]}"#;
        assert!(
            matches!(load(json).unwrap_err(), QuestionnaireError::Validation { id, .. } if id == "X1")
        );
    }

    #[test]
    fn undeclared_stage_and_role() {
        let json = r#"{"questionnaires":[{"id":"a","title":"A","stage":"deployment","role":"auditor","questions":[]}]}"#;
        let errs = QuestionnaireSet::load_with_diagnostics(json.as_bytes(), &pack()).unwrap_err();
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn answer_parsing_by_kind() {
        let set = QuestionnaireSet::load(bundled::QUESTIONNAIRES.as_bytes(), &pack()).unwrap();
        let b1 = set.question("B1").unwrap();
        assert_eq!(
            b1.parse_answer("Not found in the documentation"),
            Some(Answer::Unknown)
        );
        assert_eq!(b1.parse_answer("unknown"), Some(Answer::Unknown));
        assert_eq!(b1.parse_answer(" Yes "), Some(Answer::Yes));
        assert_eq!(b1.display_answer(&Answer::Unknown), UNKNOWN_LABEL);
        let a7 = set.question("A7").unwrap();
        assert_eq!(a7.parse_answer("unknown"), None);
        assert_eq!(a7.parse_answer("no"), Some(Answer::No));
        let a1 = set.question("A1").unwrap();
        assert_eq!(
            a1.parse_answer("  verbatim "),
            Some(Answer::Text("  verbatim ".into()))
        );
        assert!(!a1.accepts(&Answer::Text("x".repeat(MAX_TEXT_BYTES + 1))));
        assert!(a1.accepts(&Answer::Text("x".repeat(MAX_TEXT_BYTES))));
    }

    #[test]
    fn serializes_back_to_pack_format() {
        let set = QuestionnaireSet::load(bundled::QUESTIONNAIRES.as_bytes(), &pack()).unwrap();
        let json = serde_json::to_vec(&set).unwrap();
        assert_eq!(QuestionnaireSet::load(&json, &pack()).unwrap(), set);
    }
}
