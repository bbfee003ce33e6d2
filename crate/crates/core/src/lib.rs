//! Use-based identification of potential risks for foundation-model applications.
//!
//! A [`Framework`] bundles a taxonomy pack, the stage questionnaires built on it,
//! and the expert rules that turn questionnaire answers into potential risks.
//! Everything here is `no_std` with `alloc`; IO lives in the companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bundled;
pub mod canonical;
pub mod condexpr;
pub mod engine;
pub mod profile;
pub mod questionnaire;
pub mod taxonomy;

use alloc::vec::Vec;

use thiserror::Error;

use engine::{RuleError, RuleSet};
use questionnaire::{QuestionnaireError, QuestionnaireSet};
use taxonomy::{TaxonomyError, TaxonomyPack};

/// `[A-Za-z][A-Za-z0-9_.-]*`
pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("taxonomy: {0}")]
    Taxonomy(#[from] TaxonomyError),
    #[error("questionnaires: {0}")]
    Questionnaire(#[from] QuestionnaireError),
    #[error("rules: {0}")]
    Rules(#[from] RuleError),
}

/// A validated pack, questionnaire set and rule set that reference each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Framework {
    pack: TaxonomyPack,
    questionnaires: QuestionnaireSet,
    rules: RuleSet,
}

impl Framework {
    pub fn load(pack: &[u8], questionnaires: &[u8], rules: &[u8]) -> Result<Self, LoadError> {
        Self::load_with_diagnostics(pack, questionnaires, rules).map_err(|mut e| e.swap_remove(0))
    }

    /// Like [`Framework::load`] but reports every problem found. Later files
    /// are only checked once the files they depend on load cleanly.
    pub fn load_with_diagnostics(
        pack: &[u8],
        questionnaires: &[u8],
        rules: &[u8],
    ) -> Result<Self, Vec<LoadError>> {
        let pack = TaxonomyPack::load_with_diagnostics(pack).map_err(wrap)?;
        let questionnaires =
            QuestionnaireSet::load_with_diagnostics(questionnaires, &pack).map_err(wrap)?;
        let rules = RuleSet::load_with_diagnostics(rules, &pack, &questionnaires).map_err(wrap)?;
        Ok(Framework {
            pack,
            questionnaires,
            rules,
        })
    }

    /// The framework shipped with this crate.
    pub fn bundled() -> Self {
        Self::load(
            bundled::PACK.as_bytes(),
            bundled::QUESTIONNAIRES.as_bytes(),
            bundled::RULES.as_bytes(),
        )
        .expect("bundled framework is valid")
    }

    pub fn pack(&self) -> &TaxonomyPack {
        &self.pack
    }

    pub fn questionnaires(&self) -> &QuestionnaireSet {
        &self.questionnaires
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }
}

fn wrap<E: Into<LoadError>>(errors: Vec<E>) -> Vec<LoadError> {
    errors.into_iter().map(Into::into).collect()
}
