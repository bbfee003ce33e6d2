use riskscope_core::condexpr::Answer;
use riskscope_core::engine::{self, EngineConfig, EngineError, RiskStatus};
use riskscope_core::questionnaire::{AnswerSource, AssessmentSession, ProfileRef};
use riskscope_core::Framework;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireProgress {
    pub questionnaire_id: String,
    pub title: String,
    pub stage: String,
    pub role: String,
    pub answered: Vec<String>,
    pub eligible_unanswered: Vec<String>,
    pub withheld: Vec<String>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibleQuestion {
    pub questionnaire_id: String,
    pub role: String,
    pub question_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<String>,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerView {
    pub question_id: String,
    pub value: Answer,
    pub display: String,
    pub source: AnswerSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub risk_id: String,
    pub name: String,
    pub status: RiskStatus,
}

/// What a client needs to drive a session: progress, the questions it may
/// answer next, current answers and live per-risk statuses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSessionView {
    pub session_id: String,
    pub use_title: String,
    pub pack_hash: String,
    pub last_modified: String,
    pub questionnaires: Vec<QuestionnaireProgress>,
    pub eligible_questions: Vec<EligibleQuestion>,
    pub answers: Vec<AnswerView>,
    pub attached_profiles: Vec<ProfileRef>,
    pub summary: Vec<RiskSummary>,
}

impl ApiSessionView {
    pub fn project(
        framework: &Framework,
        session: &AssessmentSession,
        config: &EngineConfig,
    ) -> Result<Self, EngineError> {
        let ids = |list: &[riskscope_core::condexpr::QuestionId]| {
            list.iter().map(|q| q.to_string()).collect()
        };
        let qs = framework.questionnaires();
        let mut questionnaires = Vec::new();
        let mut eligible_questions = Vec::new();
        for qn in qs.questionnaires() {
            let c = session.completeness(qn);
            questionnaires.push(QuestionnaireProgress {
                questionnaire_id: qn.id.clone(),
                title: qn.title.clone(),
                stage: qn.stage.clone(),
                role: qn.role.clone(),
                answered: ids(&c.answered),
                eligible_unanswered: ids(&c.eligible_unanswered),
                withheld: ids(&c.withheld),
                complete: c.is_complete(),
            });
            for q in session.next_questions(qn) {
                eligible_questions.push(EligibleQuestion {
                    questionnaire_id: qn.id.clone(),
                    role: qn.role.clone(),
                    question_id: q.id.to_string(),
                    prompt: q.prompt.clone(),
                    guidance: q.guidance.clone(),
                    kind: q.kind.name().into(),
                    options: q.kind.options().to_vec(),
                });
            }
        }
        let answers = qs
            .all_questions()
            .filter_map(|(_, q)| {
                let recorded = session.answer(q.id.as_str())?;
                Some(AnswerView {
                    question_id: q.id.to_string(),
                    display: q.display_answer(&recorded.value),
                    value: recorded.value,
                    source: recorded.source,
                })
            })
            .collect();
        let summary = engine::assess_bindings(framework, session.bindings(), config)?
            .into_iter()
            .map(|r| RiskSummary {
                risk_id: r.risk_id,
                name: r.name,
                status: r.status,
            })
            .collect();
        Ok(ApiSessionView {
            session_id: session.session_id().into(),
            use_title: session.use_title().into(),
            pack_hash: session.pack_hash().into(),
            last_modified: session.last_modified().into(),
            questionnaires,
            eligible_questions,
            answers,
            attached_profiles: session.attached_profiles().to_vec(),
            summary,
        })
    }
}
