//! Risk taxonomy: the six usage-governance entities, lifecycle stages,
//! answering roles, and risks mapped onto entities and stages.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;

/// One of the usage-governance entities a risk can attach to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    /// Domain of uses, e.g. "hiring and promotion".
    UseCase,
    /// The specific problem the AI system solves.
    Use,
    /// Deployment circumstances: who uses it and what is output.
    Context,
    /// Training or fine-tuning data.
    Data,
    /// The foundation model itself.
    Model,
    /// Inputs given to the model, application prompt or user input.
    Prompt,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::UseCase,
        EntityKind::Use,
        EntityKind::Context,
        EntityKind::Data,
        EntityKind::Model,
        EntityKind::Prompt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::UseCase => "use-case",
            EntityKind::Use => "use",
            EntityKind::Context => "context",
            EntityKind::Data => "data",
            EntityKind::Model => "model",
            EntityKind::Prompt => "prompt",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity kind `{0}`")]
pub struct UnknownEntityKind(pub String);

impl FromStr for EntityKind {
    type Err = UnknownEntityKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|kind| kind.as_str() == s)
            .ok_or_else(|| UnknownEntityKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub id: String,
    pub display_name: String,
    pub description: String,
    /// Entities whose reusable profile is captured by this stage's questionnaires.
    #[serde(default)]
    pub profile_entities: Vec<EntityKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Role {
    pub id: String,
    pub display_name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskDefinition {
    pub id: String,
    pub name: String,
    pub description: String,
    pub entities: Vec<EntityKind>,
    /// Stage ids at which enough is known to identify this risk.
    pub stages: Vec<String>,
    pub source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RiskDefinition {
    pub fn has_entity(&self, entity: EntityKind) -> bool {
        self.entities.contains(&entity)
    }

    pub fn has_stage(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s == stage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("pack parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid pack entry `{id}`: {reason}")]
    Validation { id: String, reason: String },
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
}

impl TaxonomyError {
    pub(crate) fn from_json(err: &serde_json::Error) -> Self {
        TaxonomyError::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    fn invalid(id: impl Into<String>, reason: impl Into<String>) -> Self {
        TaxonomyError::Validation {
            id: id.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PackDocument {
    version: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
    #[serde(default)]
    stages: Vec<Stage>,
    #[serde(default)]
    roles: Vec<Role>,
    #[serde(default)]
    risks: Vec<RiskDefinition>,
}

/// A validated, immutable taxonomy pack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyPack {
    version: String,
    notes: Vec<String>,
    stages: Vec<Stage>,
    roles: Vec<Role>,
    risks: Vec<RiskDefinition>,
    content_hash: String,
}

impl TaxonomyPack {
    /// Parse and validate a pack, stopping at the first problem.
    pub fn load(source: &[u8]) -> Result<Self, TaxonomyError> {
        Self::load_with_diagnostics(source).map_err(|mut errors| errors.swap_remove(0))
    }

    /// Parse and validate a pack, reporting every invariant violation found.
    pub fn load_with_diagnostics(source: &[u8]) -> Result<Self, Vec<TaxonomyError>> {
        let doc: PackDocument = serde_json::from_slice(source)
            .map_err(|e| alloc::vec![TaxonomyError::from_json(&e)])?;
        let errors = validate(&doc);
        if !errors.is_empty() {
            return Err(errors);
        }
        let content_hash = canonical::content_hash(&doc);
        Ok(TaxonomyPack {
            version: doc.version,
            notes: doc.notes,
            stages: doc.stages,
            roles: doc.roles,
            risks: doc.risks,
            content_hash,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn risks(&self) -> &[RiskDefinition] {
        &self.risks
    }

    /// SHA-256 (lowercase hex) of the canonical serialization.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn stage(&self, id: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn role(&self, id: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.id == id)
    }

    pub fn risk(&self, id: &str) -> Option<&RiskDefinition> {
        self.risks.iter().find(|r| r.id == id)
    }

    /// Risks attached to `entity`, in declaration order.
    pub fn risks_for_entity(&self, entity: EntityKind) -> Vec<&RiskDefinition> {
        self.risks.iter().filter(|r| r.has_entity(entity)).collect()
    }

    /// Risks identifiable at `stage`, in declaration order.
    pub fn risks_for_stage(&self, stage: &str) -> Result<Vec<&RiskDefinition>, TaxonomyError> {
        if self.stage(stage).is_none() {
            return Err(TaxonomyError::UnknownStage(stage.to_string()));
        }
        Ok(self.risks.iter().filter(|r| r.has_stage(stage)).collect())
    }

    /// Stage ids whose questionnaires feed a profile for `entity`.
    pub fn profile_stages(&self, entity: EntityKind) -> Vec<&str> {
        self.stages
            .iter()
            .filter(|s| s.profile_entities.contains(&entity))
            .map(|s| s.id.as_str())
            .collect()
    }

    /// Canonical serialization; `load` of these bytes reproduces this pack.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        canonical::canonical_bytes(&self.document())
    }

    fn document(&self) -> PackDocument {
        PackDocument {
            version: self.version.clone(),
            notes: self.notes.clone(),
            stages: self.stages.clone(),
            roles: self.roles.clone(),
            risks: self.risks.clone(),
        }
    }
}

impl Serialize for TaxonomyPack {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.document().serialize(serializer)
    }
}

fn validate(doc: &PackDocument) -> Vec<TaxonomyError> {
    let mut errors = Vec::new();
    if !is_semver(&doc.version) {
        errors.push(TaxonomyError::invalid(
            doc.version.clone(),
            "version is not a semantic version (MAJOR.MINOR.PATCH)",
        ));
    }

    let mut stage_ids = BTreeSet::new();
    for stage in &doc.stages {
        check_id(&stage.id, "stage", &mut errors);
        if !stage_ids.insert(stage.id.as_str()) {
            errors.push(TaxonomyError::invalid(
                stage.id.clone(),
                "duplicate stage id",
            ));
        }
        if has_duplicates(&stage.profile_entities) {
            errors.push(TaxonomyError::invalid(
                stage.id.clone(),
                "duplicate entity in profile_entities",
            ));
        }
    }

    let mut role_ids = BTreeSet::new();
    for role in &doc.roles {
        check_id(&role.id, "role", &mut errors);
        if !role_ids.insert(role.id.as_str()) {
            errors.push(TaxonomyError::invalid(role.id.clone(), "duplicate role id"));
        }
    }

    let mut risk_ids = BTreeSet::new();
    for risk in &doc.risks {
        check_id(&risk.id, "risk", &mut errors);
        if !risk_ids.insert(risk.id.as_str()) {
            errors.push(TaxonomyError::invalid(risk.id.clone(), "duplicate risk id"));
        }
        if risk.entities.is_empty() {
            errors.push(TaxonomyError::invalid(
                risk.id.clone(),
                "risk has no entities",
            ));
        }
        if has_duplicates(&risk.entities) {
            errors.push(TaxonomyError::invalid(
                risk.id.clone(),
                "duplicate entity on risk",
            ));
        }
        if risk.stages.is_empty() {
            errors.push(TaxonomyError::invalid(
                risk.id.clone(),
                "risk has no stages",
            ));
        }
        if has_duplicates(&risk.stages) {
            errors.push(TaxonomyError::invalid(
                risk.id.clone(),
                "duplicate stage on risk",
            ));
        }
        for stage in &risk.stages {
            if !stage_ids.contains(stage.as_str()) {
                errors.push(TaxonomyError::invalid(
                    risk.id.clone(),
                    format!("references undeclared stage `{stage}`"),
                ));
            }
        }
    }
    errors
}

fn check_id(id: &str, what: &str, errors: &mut Vec<TaxonomyError>) {
    if !crate::is_identifier(id) {
        errors.push(TaxonomyError::invalid(
            id,
            format!("{what} id must match [A-Za-z][A-Za-z0-9_.-]*"),
        ));
    }
}

fn has_duplicates<T: Ord>(items: &[T]) -> bool {
    let mut seen = BTreeSet::new();
    items.iter().any(|item| !seen.insert(item))
}

fn is_semver(version: &str) -> bool {
    let core_part = version.split(['-', '+']).next().unwrap_or_default();
    let rest = &version[core_part.len()..];
    if rest == "-" || rest == "+" {
        return false;
    }
    let parts: Vec<&str> = core_part.split('.').collect();
    parts.len() == 3
        && parts.iter().all(|p| {
            !p.is_empty()
                && p.bytes().all(|b| b.is_ascii_digit())
                && (p.len() == 1 || !p.starts_with('0'))
        })
}
