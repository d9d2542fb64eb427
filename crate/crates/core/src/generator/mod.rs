//! Knowledge sets, edit scenarios and question plans.

mod kset;
mod plan;
mod records;
mod scenario;

pub use kset::{build_knowledge_set, KnowledgeSet, SetParams};
pub use plan::{assign_templates, PlanEntry, QuestionPlan, Setting};
pub use records::{read_set_records, write_set_records, SetBundle, SetRecord};
pub use scenario::{generate_edit_scenarios, Edit, EditScenario, ScenarioParams};

use crate::kb::KbError;

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("insufficient corpus: need {needed} {resource}, found {found}")]
    InsufficientCorpus {
        resource: String,
        needed: usize,
        found: usize,
    },
    #[error("cannot edit {fact}: relation `{relation}` has a single possible object")]
    PoolTooSmall { fact: String, relation: String },
    #[error("copy {copy}: no conflict-free edit batch after {attempts} attempts")]
    ExhaustedRetries { copy: usize, attempts: usize },
    #[error("requested {requested} edits but the set has {available} specific facts")]
    TooManyEdits { requested: usize, available: usize },
    #[error("relation `{relation}` has {available} template variant(s); {setting} needs at least 2")]
    NotEnoughVariants {
        relation: String,
        available: usize,
        setting: Setting,
    },
    #[error(transparent)]
    Kb(#[from] KbError),
}
