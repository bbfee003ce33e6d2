//! The bundled five-risk pack, its questionnaires and rules.

pub const PACK: &str = include_str!("../packs/atlas-subset.json");
pub const QUESTIONNAIRES: &str = include_str!("../packs/atlas-subset.questionnaires.json");
pub const RULES: &str = include_str!("../packs/atlas-subset.rules.json");
