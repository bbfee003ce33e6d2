use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Question, Questionnaire, QuestionnaireSet};
use crate::condexpr::{Answer, AnswerBindings, QuestionId, Truth};
use crate::taxonomy::EntityKind;

/// Identity of a stored entity profile.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProfileRef {
    pub entity_kind: EntityKind,
    pub entity_id: String,
    pub profile_hash: String,
}

/// One entry of a session's append-only history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum SessionEvent {
    Answer {
        at: String,
        question_id: QuestionId,
        value: Answer,
        actor: String,
    },
    ProfileAttached {
        at: String,
        profile: ProfileRef,
        answers: AnswerBindings,
    },
}

impl SessionEvent {
    pub fn at(&self) -> &str {
        match self {
            SessionEvent::Answer { at, .. } | SessionEvent::ProfileAttached { at, .. } => at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AnswerSource {
    Entered { actor: String },
    Reused { profile_hash: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedAnswer {
    pub value: Answer,
    pub source: AnswerSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("answer `{value}` does not fit {kind} question `{question}`")]
    KindMismatch {
        question: String,
        kind: &'static str,
        value: String,
    },
    #[error("question `{0}` is not eligible: its gate is not satisfied")]
    IneligibleQuestion(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("question `{question}` already has a different active answer")]
    Conflict { question: String },
    #[error("history entry {index} does not replay: {source}")]
    Replay {
        index: usize,
        #[source]
        source: Box<SessionError>,
    },
}

/// Persisted form of a session: identity plus history. Everything else is
/// rebuilt by replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub session_id: String,
    pub use_title: String,
    pub pack_hash: String,
    pub created_at: String,
    pub history: Vec<SessionEvent>,
}

/// Per-questionnaire partition of questions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Completeness {
    pub answered: Vec<QuestionId>,
    pub eligible_unanswered: Vec<QuestionId>,
    pub withheld: Vec<QuestionId>,
}

impl Completeness {
    pub fn is_complete(&self) -> bool {
        self.eligible_unanswered.is_empty()
    }
}

/// A use's answer state across all stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssessmentSession {
    session_id: String,
    use_title: String,
    pack_hash: String,
    created_at: String,
    history: Vec<SessionEvent>,
    active: AnswerBindings,
    sources: BTreeMap<QuestionId, AnswerSource>,
    inactive: BTreeMap<QuestionId, RecordedAnswer>,
    attached: Vec<ProfileRef>,
}

impl AssessmentSession {
    pub fn new(
        session_id: impl Into<String>,
        use_title: impl Into<String>,
        pack_hash: impl Into<String>,
        created_at: impl Into<String>,
    ) -> Self {
        AssessmentSession {
            session_id: session_id.into(),
            use_title: use_title.into(),
            pack_hash: pack_hash.into(),
            created_at: created_at.into(),
            history: Vec::new(),
            active: AnswerBindings::new(),
            sources: BTreeMap::new(),
            inactive: BTreeMap::new(),
            attached: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn use_title(&self) -> &str {
        &self.use_title
    }

    pub fn pack_hash(&self) -> &str {
        &self.pack_hash
    }

    pub fn created_at(&self) -> &str {
        &self.created_at
    }

    pub fn history(&self) -> &[SessionEvent] {
        &self.history
    }

    /// Timestamp of the latest event, or creation time for an empty history.
    pub fn last_modified(&self) -> &str {
        self.history
            .last()
            .map(SessionEvent::at)
            .unwrap_or(&self.created_at)
    }

    /// Active answers; the only bindings rules and gates ever see.
    pub fn bindings(&self) -> &AnswerBindings {
        &self.active
    }

    pub fn answer(&self, id: &str) -> Option<RecordedAnswer> {
        let value = self.active.get(id)?.clone();
        let source = self.sources.get(id)?.clone();
        Some(RecordedAnswer { value, source })
    }

    /// Answers kept for audit after their gate stopped holding.
    pub fn inactive(&self) -> &BTreeMap<QuestionId, RecordedAnswer> {
        &self.inactive
    }

    pub fn attached_profiles(&self) -> &[ProfileRef] {
        &self.attached
    }

    /// Truth value of `question`'s gate under the active answers.
    pub fn gate_status(&self, question: &Question) -> Truth {
        match &question.gate {
            None => Truth::Yes,
            // Gates are kind-checked at load and answers at record time.
            Some(gate) => gate.evaluate(&self.active).unwrap_or(Truth::Unknown),
        }
    }

    /// Unanswered questions whose gate holds, in declaration order.
    pub fn next_questions<'q>(&self, questionnaire: &'q Questionnaire) -> Vec<&'q Question> {
        questionnaire
            .questions
            .iter()
            .filter(|q| !self.active.contains(q.id.as_str()) && self.gate_status(q) == Truth::Yes)
            .collect()
    }

    pub fn completeness(&self, questionnaire: &Questionnaire) -> Completeness {
        let mut report = Completeness::default();
        for q in &questionnaire.questions {
            let bucket = if self.active.contains(q.id.as_str()) {
                &mut report.answered
            } else if self.gate_status(q) == Truth::Yes {
                &mut report.eligible_unanswered
            } else {
                &mut report.withheld
            };
            bucket.push(q.id.clone());
        }
        report
    }

    /// Record (or re-record) an answer. On error the session is unchanged.
    pub fn record_answer(
        &mut self,
        questionnaires: &QuestionnaireSet,
        question_id: &str,
        value: Answer,
        actor: &str,
        at: impl Into<String>,
    ) -> Result<(), SessionError> {
        let question = questionnaires
            .question(question_id)
            .ok_or_else(|| SessionError::UnknownQuestion(question_id.to_string()))?;
        check_kind(question, &value)?;
        if !questionnaires.has_role(actor) {
            return Err(SessionError::UnknownRole(actor.to_string()));
        }
        if self.gate_status(question) != Truth::Yes {
            return Err(SessionError::IneligibleQuestion(question_id.to_string()));
        }
        let id = question.id.clone();
        self.history.push(SessionEvent::Answer {
            at: at.into(),
            question_id: id.clone(),
            value: value.clone(),
            actor: actor.to_string(),
        });
        self.inactive.remove(&id);
        self.active.insert(id.clone(), value);
        self.sources.insert(
            id,
            AnswerSource::Entered {
                actor: actor.to_string(),
            },
        );
        self.settle(questionnaires);
        Ok(())
    }

    /// Merge a profile's answers. Returns `false` when the profile was
    /// already attached. Rejects wholesale on any conflict.
    pub(crate) fn merge_profile(
        &mut self,
        questionnaires: &QuestionnaireSet,
        profile: ProfileRef,
        answers: &AnswerBindings,
        at: impl Into<String>,
    ) -> Result<bool, SessionError> {
        if self
            .attached
            .iter()
            .any(|p| p.profile_hash == profile.profile_hash)
        {
            return Ok(false);
        }
        for (id, value) in answers.iter() {
            let question = questionnaires
                .question(id.as_str())
                .ok_or_else(|| SessionError::UnknownQuestion(id.to_string()))?;
            check_kind(question, value)?;
            if matches!(self.active.get(id.as_str()), Some(existing) if existing != value) {
                return Err(SessionError::Conflict {
                    question: id.to_string(),
                });
            }
        }
        let reused = AnswerSource::Reused {
            profile_hash: profile.profile_hash.clone(),
        };
        for (id, value) in answers.iter() {
            if self.active.get(id.as_str()) != Some(value) {
                self.inactive.remove(id);
                self.active.insert(id.clone(), value.clone());
                self.sources.insert(id.clone(), reused.clone());
            }
        }
        self.history.push(SessionEvent::ProfileAttached {
            at: at.into(),
            profile: profile.clone(),
            answers: answers.clone(),
        });
        self.attached.push(profile);
        self.settle(questionnaires);
        Ok(true)
    }

    /// Deactivate answers whose gate no longer holds. Gates only look at
    /// earlier questions of the same questionnaire, so one ordered pass
    /// reaches a fixed point.
    fn settle(&mut self, questionnaires: &QuestionnaireSet) {
        for (_, q) in questionnaires.all_questions() {
            if q.gate.is_none() || !self.active.contains(q.id.as_str()) {
                continue;
            }
            if self.gate_status(q) != Truth::Yes {
                let value = self.active.remove(q.id.as_str()).expect("checked above");
                let source = self
                    .sources
                    .remove(q.id.as_str())
                    .expect("sources track active");
                self.inactive
                    .insert(q.id.clone(), RecordedAnswer { value, source });
            }
        }
    }

    pub fn to_file(&self) -> SessionFile {
        SessionFile {
            session_id: self.session_id.clone(),
            use_title: self.use_title.clone(),
            pack_hash: self.pack_hash.clone(),
            created_at: self.created_at.clone(),
            history: self.history.clone(),
        }
    }

    /// Rebuild a session by replaying its history from empty.
    pub fn from_file(
        file: SessionFile,
        questionnaires: &QuestionnaireSet,
    ) -> Result<Self, SessionError> {
        let mut session = AssessmentSession::new(
            file.session_id,
            file.use_title,
            file.pack_hash,
            file.created_at,
        );
        for (index, event) in file.history.into_iter().enumerate() {
            let replay = |source| SessionError::Replay {
                index,
                source: Box::new(source),
            };
            match event {
                SessionEvent::Answer {
                    at,
                    question_id,
                    value,
                    actor,
                } => session
                    .record_answer(questionnaires, question_id.as_str(), value, &actor, at)
                    .map_err(replay)?,
                SessionEvent::ProfileAttached {
                    at,
                    profile,
                    answers,
                } => {
                    let hash = profile.profile_hash.clone();
                    if !session
                        .merge_profile(questionnaires, profile, &answers, at)
                        .map_err(replay)?
                    {
                        return Err(replay(SessionError::Conflict {
                            question: alloc::format!("profile {hash} attached twice"),
                        }));
                    }
                }
            }
        }
        Ok(session)
    }
}

fn check_kind(question: &Question, value: &Answer) -> Result<(), SessionError> {
    if question.accepts(value) {
        return Ok(());
    }
    let shown = match value {
        Answer::Text(t) if t.len() > 40 => alloc::format!("{} bytes of text", t.len()),
        other => other.to_string(),
    };
    Err(SessionError::KindMismatch {
        question: question.id.to_string(),
        kind: question.kind.name(),
        value: shown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Framework;

    fn ids(list: &[QuestionId]) -> Vec<&str> {
        list.iter().map(|q| q.as_str()).collect()
    }

    fn setup() -> (Framework, AssessmentSession) {
        let fw = Framework::bundled();
        let s = AssessmentSession::new(
            "s1",
            "Visitor-center Q&A agent",
            fw.pack().content_hash(),
            "2026-01-01T00:00:00Z",
        );
        (fw, s)
    }

    #[test]
    fn empty_use_questionnaire_withholds_a8() {
        let (fw, s) = setup();
        let use_q = fw.questionnaires().questionnaire("use").unwrap();
        let c = s.completeness(use_q);
        assert!(c.answered.is_empty());
        assert_eq!(
            ids(&c.eligible_unanswered),
            ["A0", "A1", "A2", "A3", "A4", "A5", "A6", "A7"]
        );
        assert_eq!(ids(&c.withheld), ["A8"]);
        let next: Vec<_> = s
            .next_questions(use_q)
            .iter()
            .map(|q| q.id.as_str())
            .collect();
        assert_eq!(next, ids(&c.eligible_unanswered));
    }

    #[test]
    fn a7_yes_unlocks_a8() {
        let (fw, mut s) = setup();
        let qs = fw.questionnaires();
        assert_eq!(
            s.record_answer(qs, "A8", Answer::Yes, "product-owner", "t1"),
            Err(SessionError::IneligibleQuestion("A8".into()))
        );
        s.record_answer(qs, "A7", Answer::Yes, "product-owner", "t1")
            .unwrap();
        s.record_answer(qs, "A8", Answer::Yes, "product-owner", "t2")
            .unwrap();
        assert_eq!(s.bindings().get("A7"), Some(&Answer::Yes));
        assert_eq!(s.bindings().get("A8"), Some(&Answer::Yes));
        assert_eq!(s.history().len(), 2);
    }

    #[test]
    fn b1_no_completes_screening_branch() {
        let (fw, mut s) = setup();
        let qs = fw.questionnaires();
        s.record_answer(qs, "B1", Answer::No, "data-scientist", "t")
            .unwrap();
        let c = s.completeness(qs.questionnaire("model-onboarding").unwrap());
        assert_eq!(ids(&c.answered), ["B1"]);
        assert_eq!(ids(&c.withheld), ["B2", "B3", "B4"]);
        assert_eq!(ids(&c.eligible_unanswered), ["B5"]);
    }

    #[test]
    fn b1_unknown_withholds_followups() {
        let (fw, mut s) = setup();
        let qs = fw.questionnaires();
        s.record_answer(qs, "B1", Answer::Unknown, "data-scientist", "t")
            .unwrap();
        let c = s.completeness(qs.questionnaire("model-onboarding").unwrap());
        assert_eq!(ids(&c.withheld), ["B2", "B3", "B4"]);
    }

    #[test]
    fn reanswer_invalidates_dependents() {
        let (fw, mut s) = setup();
        let qs = fw.questionnaires();
        for (q, v) in [("B1", Answer::Yes), ("B2", Answer::Yes), ("B3", Answer::No)] {
            s.record_answer(qs, q, v, "data-scientist", "t").unwrap();
        }
        s.record_answer(qs, "B1", Answer::No, "data-scientist", "t")
            .unwrap();
        let active: Vec<_> = s
            .bindings()
            .iter()
            .map(|(k, v)| (k.as_str(), v.clone()))
            .collect();
        assert_eq!(active, [("B1", Answer::No)]);
        assert_eq!(
            s.inactive().keys().map(|k| k.as_str()).collect::<Vec<_>>(),
            ["B2", "B3"]
        );
        assert_eq!(s.history().len(), 4);

        // Re-opening the gate does not revive stale answers.
        s.record_answer(qs, "B1", Answer::Yes, "data-scientist", "t")
            .unwrap();
        assert!(s.bindings().get("B2").is_none());
        let c = s.completeness(qs.questionnaire("model-onboarding").unwrap());
        assert_eq!(ids(&c.eligible_unanswered), ["B2", "B5"]);
    }

    #[test]
    fn free_text_stored_verbatim() {
        let (fw, mut s) = setup();
        s.record_answer(
            fw.questionnaires(),
            "A1",
            Answer::Text("Visitor-center Q&A agent".into()),
            "product-owner",
            "t",
        )
        .unwrap();
        assert_eq!(
            s.bindings().get("A1"),
            Some(&Answer::Text("Visitor-center Q&A agent".into()))
        );
    }

    #[test]
    fn record_errors_leave_session_unchanged() {
        let (fw, mut s) = setup();
        let qs = fw.questionnaires();
        let before = s.clone();
        assert_eq!(
            s.record_answer(qs, "Z9", Answer::Yes, "product-owner", "t"),
            Err(SessionError::UnknownQuestion("Z9".into()))
        );
        assert!(matches!(
            s.record_answer(qs, "A7", Answer::Unknown, "product-owner", "t"),
            Err(SessionError::KindMismatch { .. })
        ));
        assert!(matches!(
            s.record_answer(qs, "A1", Answer::Yes, "product-owner", "t"),
            Err(SessionError::KindMismatch { .. })
        ));
        assert_eq!(
            s.record_answer(qs, "A7", Answer::Yes, "auditor", "t"),
            Err(SessionError::UnknownRole("auditor".into()))
        );
        assert_eq!(s, before);
    }

    #[test]
    fn replay_reproduces_state() {
        let (fw, mut s) = setup();
        let qs = fw.questionnaires();
        for (q, v) in [
            ("B1", Answer::Yes),
            ("B2", Answer::Yes),
            ("B1", Answer::No),
            ("A7", Answer::Yes),
        ] {
            s.record_answer(qs, q, v, "data-scientist", "t").unwrap();
        }
        let json = serde_json::to_string(&s.to_file()).unwrap();
        let file: SessionFile = serde_json::from_str(&json).unwrap();
        let replayed = AssessmentSession::from_file(file, qs).unwrap();
        assert_eq!(replayed, s);
    }

    #[test]
    fn replay_rejects_tampered_history() {
        let (fw, s) = setup();
        let mut file = s.to_file();
        file.history.push(SessionEvent::Answer {
            at: "t".into(),
            question_id: QuestionId::new("A8").unwrap(),
            value: Answer::Yes,
            actor: "product-owner".into(),
        });
        assert!(matches!(
            AssessmentSession::from_file(file, fw.questionnaires()),
            Err(SessionError::Replay { index: 0, .. })
        ));
    }
}
