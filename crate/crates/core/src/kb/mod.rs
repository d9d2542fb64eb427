//! Domain model: entities, relations, facts, question templates and the
//! corpus that indexes them.

mod corpus;
mod io;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use corpus::{Corpus, CorpusBuilder, MappingTable};
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus, CorpusRecord};

/// Placeholder token that marks where the subject surface goes in a template.
pub const SUBJECT_PLACEHOLDER: &str = "{subject}";

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Opaque entity identifier, e.g. a WikiData Q-id.
    EntityId
);
string_id!(
    /// Opaque relation identifier, e.g. a WikiData P-id.
    RelationId
);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub surface: String,
    pub etype: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: RelationId,
    pub name: String,
    pub subject_type: String,
    pub object_type: String,
    /// Natural-language phrases that name this relation inside rule text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phrases: Vec<String>,
}

impl Relation {
    /// Phrase used when rendering rules. Falls back to the relation name.
    pub fn display_phrase(&self) -> &str {
        self.phrases.first().map(String::as_str).unwrap_or(&self.name)
    }
}

/// A subject–relation–object triplet, stored by id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Fact {
    pub fn new(
        subject: impl Into<EntityId>,
        relation: impl Into<RelationId>,
        object: impl Into<EntityId>,
    ) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }

    /// The question this fact answers: everything but the object.
    pub fn key(&self) -> FactKey {
        FactKey {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
        }
    }

    pub fn with_object(&self, object: EntityId) -> Self {
        Self {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            object,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<String> for RelationId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Subject and relation of a fact; two facts with the same key answer the
/// same question.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FactKey {
    pub subject: EntityId,
    pub relation: RelationId,
}

impl FactKey {
    pub fn with_object(&self, object: EntityId) -> Fact {
        Fact {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            object,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub relation: RelationId,
    pub variant: usize,
    pub text: String,
}

impl QuestionTemplate {
    pub fn render(&self, subject_surface: &str) -> String {
        self.text.replacen(SUBJECT_PLACEHOLDER, subject_surface, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub source_fact: Fact,
    pub variant: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: dangling reference to {what}")]
    DanglingReference { line: usize, what: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("fact {fact}: {message}")]
    TypeMismatch { fact: String, message: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("unknown relation `{0}`")]
    UnknownRelation(RelationId),
    #[error("relation `{0}` has no question template")]
    MissingTemplate(RelationId),
    #[error("relation `{relation}` has no template variant {variant} ({available} available)")]
    MissingVariant {
        relation: RelationId,
        variant: usize,
        available: usize,
    },
    #[error("question `{question}` is ambiguous between {candidates:?}")]
    Ambiguous {
        question: String,
        candidates: Vec<String>,
    },
}

/// Line number used for errors raised outside any file.
pub(crate) const NO_LINE: usize = 0;
