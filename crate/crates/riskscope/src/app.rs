//! Operations shared by the CLI and the HTTP service. Each one is a short
//! composition of library calls plus persistence.

use std::path::{Path, PathBuf};

use riskscope_core::condexpr::Answer;
use riskscope_core::engine::{self, EngineConfig, EngineError, PotentialRiskReport};
use riskscope_core::profile::{self, EntityProfile, ProfileError};
use riskscope_core::questionnaire::{AssessmentSession, SessionError};
use riskscope_core::taxonomy::EntityKind;
use riskscope_core::Framework;
use thiserror::Error;

use crate::profiles::{ProfileStore, ProfileStoreError};
use crate::sessions::{SessionStore, StoreError};
use crate::time;

pub const HOME_ENV: &str = "RISKSCOPE_HOME";
pub const DEFAULT_HOME: &str = ".riskscope";

#[derive(Debug, Error)]
pub enum AppError {
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("`{value}` is not a valid answer to {kind} question `{question}`")]
    InvalidValue {
        question: String,
        kind: &'static str,
        value: String,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    ProfileStore(#[from] ProfileStoreError),
}

impl AppError {
    /// Machine-readable code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            AppError::UnknownQuestion(_) => "unknown-question",
            AppError::InvalidValue { .. } => "invalid-answer",
            AppError::Session(e) => match e {
                SessionError::UnknownQuestion(_) => "unknown-question",
                SessionError::KindMismatch { .. } => "invalid-answer",
                SessionError::IneligibleQuestion(_) => "ineligible-question",
                SessionError::UnknownRole(_) => "unknown-role",
                SessionError::Conflict { .. } => "conflict",
                SessionError::Replay { .. } => "corrupt-session",
            },
            AppError::Profile(e) => match e {
                ProfileError::NoExtractableAnswers(_) => "no-extractable-answers",
                ProfileError::InvalidEntityId(_) => "invalid-entity-id",
                ProfileError::UnknownRole(_) => "unknown-role",
                ProfileError::PackMismatch { .. } => "pack-mismatch",
                ProfileError::HashMismatch { .. } | ProfileError::Parse(_) => "invalid-profile",
                ProfileError::ForeignQuestion { .. } => "invalid-profile",
                ProfileError::Session(SessionError::Conflict { .. }) => "conflict",
                ProfileError::Session(_) => "invalid-profile",
            },
            AppError::Engine(e) => match e {
                EngineError::StalePack { .. } => "stale-pack",
                EngineError::ConfigMismatch { .. } => "config-mismatch",
                EngineError::UnknownRisk(_) => "unknown-risk",
                EngineError::Eval(_) => "evaluation-error",
            },
            AppError::Store(e) => match e {
                StoreError::NotFound(_) | StoreError::InvalidId(_) => "unknown-session",
                StoreError::Corrupt { .. } | StoreError::Replay { .. } => "corrupt-session",
                StoreError::Io { .. } => "io-failure",
            },
            AppError::ProfileStore(e) => match e {
                ProfileStoreError::NotFound { .. } | ProfileStoreError::MissingObject { .. } => {
                    "unknown-profile"
                }
                ProfileStoreError::Invalid { .. } | ProfileStoreError::CorruptIndex { .. } => {
                    "invalid-profile"
                }
                ProfileStoreError::Io { .. } => "io-failure",
            },
        }
    }
}

/// Store root from `RISKSCOPE_HOME`, else `./.riskscope`.
pub fn home_from_env() -> PathBuf {
    std::env::var_os(HOME_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_HOME))
}

/// Loaded framework plus the stores rooted at one directory.
#[derive(Debug, Clone)]
pub struct App {
    pub framework: Framework,
    pub sessions: SessionStore,
    pub profiles: ProfileStore,
}

impl App {
    pub fn new(framework: Framework, root: &Path) -> Self {
        App {
            framework,
            sessions: SessionStore::new(root),
            profiles: ProfileStore::new(root),
        }
    }

    pub fn create_session(&self, use_title: &str) -> Result<AssessmentSession, AppError> {
        Ok(self.sessions.create(&self.framework, use_title)?)
    }

    pub fn load_session(&self, id: &str) -> Result<AssessmentSession, AppError> {
        Ok(self.sessions.load(&self.framework, id)?)
    }

    /// Record a typed-in answer and persist the session.
    pub fn answer(
        &self,
        session: &mut AssessmentSession,
        question_id: &str,
        raw: &str,
        actor: Option<&str>,
    ) -> Result<(), AppError> {
        apply_answer(
            &self.framework,
            session,
            question_id,
            raw,
            actor,
            &time::now(),
        )?;
        self.sessions.save(session)?;
        Ok(())
    }

    pub fn save_profile(
        &self,
        session: &AssessmentSession,
        kind: EntityKind,
        entity_id: &str,
        actor: Option<&str>,
    ) -> Result<EntityProfile, AppError> {
        let actor = match actor {
            Some(actor) => actor.to_owned(),
            None => default_profile_actor(&self.framework, kind),
        };
        let profile = EntityProfile::extract(
            &self.framework,
            session,
            kind,
            entity_id,
            &actor,
            &time::now(),
        )?;
        self.profiles.save(&profile)?;
        Ok(profile)
    }

    /// Attach a stored profile and persist. Returns `false` when it was
    /// already attached.
    pub fn attach_profile(
        &self,
        session: &mut AssessmentSession,
        kind: EntityKind,
        entity_id: &str,
        hash: Option<&str>,
    ) -> Result<bool, AppError> {
        let profile = self.profiles.resolve(kind, entity_id, hash)?;
        let attached = profile::attach_profile(&self.framework, session, &profile, &time::now())?;
        if attached {
            self.sessions.save(session)?;
        }
        Ok(attached)
    }

    pub fn report(
        &self,
        session: &AssessmentSession,
        config: &EngineConfig,
        reproducible: bool,
    ) -> Result<PotentialRiskReport, AppError> {
        build_report(&self.framework, session, config, reproducible)
    }
}

/// Parse `raw` for the question's kind and record it. `actor` defaults to
/// the role that owns the question's questionnaire.
pub fn apply_answer(
    framework: &Framework,
    session: &mut AssessmentSession,
    question_id: &str,
    raw: &str,
    actor: Option<&str>,
    at: &str,
) -> Result<(), AppError> {
    let (owner, question) = framework
        .questionnaires()
        .locate(question_id)
        .ok_or_else(|| AppError::UnknownQuestion(question_id.into()))?;
    let value = question
        .parse_answer(raw)
        .ok_or_else(|| AppError::InvalidValue {
            question: question_id.into(),
            kind: question.kind.name(),
            value: raw.into(),
        })?;
    record(
        framework,
        session,
        question_id,
        value,
        actor.unwrap_or(&owner.role),
        at,
    )
}

fn record(
    framework: &Framework,
    session: &mut AssessmentSession,
    question_id: &str,
    value: Answer,
    actor: &str,
    at: &str,
) -> Result<(), AppError> {
    Ok(session.record_answer(framework.questionnaires(), question_id, value, actor, at)?)
}

/// With `reproducible`, the report time is the session's last change rather
/// than the wall clock.
pub fn build_report(
    framework: &Framework,
    session: &AssessmentSession,
    config: &EngineConfig,
    reproducible: bool,
) -> Result<PotentialRiskReport, AppError> {
    let at = if reproducible {
        session.last_modified().to_owned()
    } else {
        time::now()
    };
    Ok(engine::evaluate_session(framework, session, config, &at)?)
}

/// The role of the first questionnaire whose stage feeds `kind` profiles.
fn default_profile_actor(framework: &Framework, kind: EntityKind) -> String {
    let stages = framework.pack().profile_stages(kind);
    framework
        .questionnaires()
        .questionnaires()
        .iter()
        .find(|q| stages.contains(&q.stage.as_str()))
        .map(|q| q.role.clone())
        .or_else(|| framework.pack().roles().first().map(|r| r.id.clone()))
        .unwrap_or_default()
}
