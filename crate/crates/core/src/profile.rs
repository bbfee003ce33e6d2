//! Reusable per-entity answer records.
//!
//! A model's onboarding answers do not depend on the use it is put to, so
//! they can be saved once and attached to later sessions. Entity ids are
//! caller-supplied; the convention is `<name>@<version>`, and a fine-tuned
//! model gets its own id.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::condexpr::AnswerBindings;
use crate::questionnaire::{AssessmentSession, ProfileRef, SessionError};
use crate::taxonomy::EntityKind;
use crate::Framework;

pub const MAX_ENTITY_ID_BYTES: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub created_at: String,
    pub actor: String,
    pub pack_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityProfile {
    pub entity_kind: EntityKind,
    pub entity_id: String,
    pub answers: AnswerBindings,
    pub provenance: Provenance,
    pub profile_hash: String,
}

/// The hashed part of a profile. Creation time and actor are left out so
/// identical answers for the same entity always produce the same object.
#[derive(Serialize)]
struct HashedContent<'a> {
    entity_kind: EntityKind,
    entity_id: &'a str,
    pack_hash: &'a str,
    answers: &'a AnswerBindings,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("session has no active answers for questionnaires bound to {0}")]
    NoExtractableAnswers(EntityKind),
    #[error("invalid entity id: {0}")]
    InvalidEntityId(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("profile was built against pack {profile}, session uses {session}")]
    PackMismatch { profile: String, session: String },
    #[error("profile hash {stored} does not match its content ({computed})")]
    HashMismatch { stored: String, computed: String },
    #[error("question `{question}` is not part of a {kind} profile")]
    ForeignQuestion { question: String, kind: EntityKind },
    #[error("profile parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

pub fn validate_entity_id(id: &str) -> Result<(), ProfileError> {
    let reason = if id.is_empty() {
        "must not be empty"
    } else if id.len() > MAX_ENTITY_ID_BYTES {
        "longer than 256 bytes"
    } else if id.trim() != id {
        "leading or trailing whitespace"
    } else if id.chars().any(char::is_control) {
        "control characters are not allowed"
    } else {
        return Ok(());
    };
    Err(ProfileError::InvalidEntityId(reason.to_string()))
}

impl EntityProfile {
    /// Build a profile from the active answers of questions whose
    /// questionnaire stage is bound to `kind`.
    pub fn extract(
        framework: &Framework,
        session: &AssessmentSession,
        kind: EntityKind,
        entity_id: &str,
        actor: &str,
        created_at: &str,
    ) -> Result<Self, ProfileError> {
        validate_entity_id(entity_id)?;
        if framework.pack().role(actor).is_none() {
            return Err(ProfileError::UnknownRole(actor.into()));
        }
        let stages = framework.pack().profile_stages(kind);
        let answers: AnswerBindings = framework
            .questionnaires()
            .all_questions()
            .filter(|(owner, _)| stages.contains(&owner.stage.as_str()))
            .filter_map(|(_, q)| {
                Some((q.id.clone(), session.bindings().get(q.id.as_str())?.clone()))
            })
            .collect();
        if answers.is_empty() {
            return Err(ProfileError::NoExtractableAnswers(kind));
        }
        Ok(Self::new(
            kind,
            entity_id,
            answers,
            actor,
            created_at,
            session.pack_hash(),
        ))
    }

    pub fn new(
        kind: EntityKind,
        entity_id: &str,
        answers: AnswerBindings,
        actor: &str,
        created_at: &str,
        pack_hash: &str,
    ) -> Self {
        let profile_hash = compute_hash(kind, entity_id, pack_hash, &answers);
        EntityProfile {
            entity_kind: kind,
            entity_id: entity_id.into(),
            answers,
            provenance: Provenance {
                created_at: created_at.into(),
                actor: actor.into(),
                pack_hash: pack_hash.into(),
            },
            profile_hash,
        }
    }

    pub fn computed_hash(&self) -> String {
        compute_hash(
            self.entity_kind,
            &self.entity_id,
            &self.provenance.pack_hash,
            &self.answers,
        )
    }

    /// Parse a stored profile and check its hash.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ProfileError> {
        let profile: EntityProfile =
            serde_json::from_slice(bytes).map_err(|e| ProfileError::Parse(e.to_string()))?;
        validate_entity_id(&profile.entity_id)?;
        let computed = profile.computed_hash();
        if computed != profile.profile_hash {
            return Err(ProfileError::HashMismatch {
                stored: profile.profile_hash,
                computed,
            });
        }
        Ok(profile)
    }

    pub fn to_json(&self) -> Vec<u8> {
        canonical::canonical_bytes(self)
    }

    pub fn reference(&self) -> ProfileRef {
        ProfileRef {
            entity_kind: self.entity_kind,
            entity_id: self.entity_id.clone(),
            profile_hash: self.profile_hash.clone(),
        }
    }

    /// Check that every answer belongs to a stage bound to this entity kind.
    pub fn check_scope(&self, framework: &Framework) -> Result<(), ProfileError> {
        let stages = framework.pack().profile_stages(self.entity_kind);
        for (id, _) in self.answers.iter() {
            let in_scope = framework
                .questionnaires()
                .locate(id.as_str())
                .is_some_and(|(owner, _)| stages.contains(&owner.stage.as_str()));
            if !in_scope {
                return Err(ProfileError::ForeignQuestion {
                    question: id.to_string(),
                    kind: self.entity_kind,
                });
            }
        }
        Ok(())
    }
}

fn compute_hash(
    kind: EntityKind,
    entity_id: &str,
    pack_hash: &str,
    answers: &AnswerBindings,
) -> String {
    canonical::content_hash(&HashedContent {
        entity_kind: kind,
        entity_id,
        pack_hash,
        answers,
    })
}

/// Merge a profile into `session`, marking its answers as reused.
///
/// Returns `Ok(false)` when the profile is already attached. A conflict with
/// any active answer rejects the whole profile.
pub fn attach_profile(
    framework: &Framework,
    session: &mut AssessmentSession,
    profile: &EntityProfile,
    at: &str,
) -> Result<bool, ProfileError> {
    if profile.provenance.pack_hash != session.pack_hash() {
        return Err(ProfileError::PackMismatch {
            profile: profile.provenance.pack_hash.clone(),
            session: session.pack_hash().into(),
        });
    }
    let computed = profile.computed_hash();
    if computed != profile.profile_hash {
        return Err(ProfileError::HashMismatch {
            stored: profile.profile_hash.clone(),
            computed,
        });
    }
    profile.check_scope(framework)?;
    Ok(session.merge_profile(
        framework.questionnaires(),
        profile.reference(),
        &profile.answers,
        at,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condexpr::Answer;
    use crate::engine::{evaluate_session, EngineConfig, RiskStatus};

    fn session(fw: &Framework, answers: &[(&str, Answer)]) -> AssessmentSession {
        let mut s = AssessmentSession::new("s", "use", fw.pack().content_hash(), "t0");
        for (q, a) in answers {
            let role = &fw.questionnaires().locate(q).unwrap().0.role;
            s.record_answer(fw.questionnaires(), q, a.clone(), role, "t")
                .unwrap();
        }
        s
    }

    fn screened() -> Vec<(&'static str, Answer)> {
        alloc::vec![
            ("B1", Answer::Yes),
            ("B2", Answer::Yes),
            ("B3", Answer::Yes),
            (
                "B4",
                Answer::Text("Filtered with a toxicity classifier.".into())
            ),
            ("A7", Answer::Yes),
        ]
    }

    #[test]
    fn extract_model_answers_only() {
        let fw = Framework::bundled();
        let s = session(&fw, &screened());
        let p = EntityProfile::extract(
            &fw,
            &s,
            EntityKind::Model,
            "granite-3.1",
            "data-scientist",
            "t",
        )
        .unwrap();
        assert_eq!(p.answers.len(), 4);
        assert!(p.answers.get("A7").is_none());
        assert_eq!(p.profile_hash.len(), 64);
        assert_eq!(EntityProfile::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn nothing_to_extract() {
        let fw = Framework::bundled();
        let s = session(&fw, &[("A7", Answer::Yes)]);
        assert_eq!(
            EntityProfile::extract(&fw, &s, EntityKind::Model, "m", "data-scientist", "t"),
            Err(ProfileError::NoExtractableAnswers(EntityKind::Model))
        );
        assert!(matches!(
            EntityProfile::extract(&fw, &s, EntityKind::Model, " m", "data-scientist", "t"),
            Err(ProfileError::InvalidEntityId(_))
        ));
    }

    #[test]
    fn hash_ignores_time_and_actor() {
        let fw = Framework::bundled();
        let s = session(&fw, &screened());
        let a = EntityProfile::extract(&fw, &s, EntityKind::Model, "m@1", "data-scientist", "t1")
            .unwrap();
        let b = EntityProfile::extract(&fw, &s, EntityKind::Model, "m@1", "product-owner", "t2")
            .unwrap();
        assert_eq!(a.profile_hash, b.profile_hash);
        let c = EntityProfile::extract(&fw, &s, EntityKind::Model, "m@2", "data-scientist", "t1")
            .unwrap();
        assert_ne!(a.profile_hash, c.profile_hash);
    }

    #[test]
    fn tampered_profile_rejected() {
        let fw = Framework::bundled();
        let mut p = EntityProfile::extract(
            &fw,
            &session(&fw, &screened()),
            EntityKind::Model,
            "m",
            "data-scientist",
            "t",
        )
        .unwrap();
        p.answers
            .insert(crate::condexpr::QuestionId::new("B1").unwrap(), Answer::No);
        assert!(matches!(
            EntityProfile::from_json(&p.to_json()),
            Err(ProfileError::HashMismatch { .. })
        ));
    }

    #[test]
    fn attach_reuses_unknown_screening() {
        let fw = Framework::bundled();
        let source = session(&fw, &[("B1", Answer::Unknown)]);
        let p = EntityProfile::extract(
            &fw,
            &source,
            EntityKind::Model,
            "granite-3.1",
            "data-scientist",
            "t",
        )
        .unwrap();
        let mut fresh = session(&fw, &[("A7", Answer::No)]);
        assert!(attach_profile(&fw, &mut fresh, &p, "t2").unwrap());
        assert!(!attach_profile(&fw, &mut fresh, &p, "t3").unwrap());
        assert_eq!(fresh.history().len(), 2);
        let r = evaluate_session(&fw, &fresh, &EngineConfig::default(), "now").unwrap();
        assert_eq!(
            r.status("toxic-output"),
            Some(RiskStatus::IndeterminateFlagged)
        );
        assert_eq!(r.dossier.profiles.len(), 1);
    }

    #[test]
    fn conflict_rejects_wholesale() {
        let fw = Framework::bundled();
        let p = EntityProfile::extract(
            &fw,
            &session(&fw, &[("B1", Answer::No), ("B5", Answer::Yes)]),
            EntityKind::Model,
            "m",
            "data-scientist",
            "t",
        )
        .unwrap();
        let mut s = session(&fw, &[("B1", Answer::Yes)]);
        let before = s.clone();
        assert_eq!(
            attach_profile(&fw, &mut s, &p, "t"),
            Err(ProfileError::Session(SessionError::Conflict {
                question: "B1".into()
            }))
        );
        assert_eq!(s, before);
    }

    #[test]
    fn pack_mismatch_and_scope() {
        let fw = Framework::bundled();
        let p = EntityProfile::extract(
            &fw,
            &session(&fw, &screened()),
            EntityKind::Model,
            "m",
            "data-scientist",
            "t",
        )
        .unwrap();
        let mut other = AssessmentSession::new("s", "u", "abc", "t0");
        assert!(matches!(
            attach_profile(&fw, &mut other, &p, "t"),
            Err(ProfileError::PackMismatch { .. })
        ));

        let mut answers = AnswerBindings::new();
        answers.insert(crate::condexpr::QuestionId::new("A7").unwrap(), Answer::Yes);
        let foreign = EntityProfile::new(
            EntityKind::Model,
            "m",
            answers,
            "data-scientist",
            "t",
            fw.pack().content_hash(),
        );
        let mut s = session(&fw, &[]);
        assert!(matches!(
            attach_profile(&fw, &mut s, &foreign, "t"),
            Err(ProfileError::ForeignQuestion { .. })
        ));
    }
}
