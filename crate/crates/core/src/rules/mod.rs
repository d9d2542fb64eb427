//! If-Then rules over typed variables: parsing, premise matching, forward
//! chaining to implications and backward decomposition of implication queries.

mod backward;
mod chain;
mod dsl;
mod file;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kb::{Corpus, EntityId, Fact, RelationId};

pub use backward::{backward_chain, PlanOutcome, QueryPlan};
pub use chain::{forward_chain, match_premises, ChainResult, Conflict};
pub use dsl::parse_rule;
pub use file::{read_rules, write_rules, RuleEntry};

/// Typed rule variable such as `[Person A]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Var {
    pub etype: String,
    pub label: String,
}

impl Var {
    pub fn new(etype: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            etype: etype.into(),
            label: label.into(),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.etype, self.label)
    }
}

impl TryFrom<String> for Var {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let s = s.trim();
        match s.rsplit_once(char::is_whitespace) {
            Some((etype, label)) if !etype.trim().is_empty() && !label.is_empty() => {
                Ok(Var::new(etype.trim(), label))
            }
            _ => Err(format!("variable `{s}` must look like `Type Label`")),
        }
    }
}

impl From<Var> for String {
    fn from(v: Var) -> Self {
        v.to_string()
    }
}

/// One clause of a rule: `[subject] relation [object]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub relation: RelationId,
    pub subject: Var,
    pub object: Var,
}

impl Pattern {
    pub fn new(subject: Var, relation: impl Into<RelationId>, object: Var) -> Self {
        Self {
            relation: relation.into(),
            subject,
            object,
        }
    }

    fn vars(&self) -> [&Var; 2] {
        [&self.subject, &self.object]
    }

    /// Extends `binding` so that this pattern matches `fact`.
    pub fn unify(&self, fact: &Fact, binding: &Binding) -> Option<Binding> {
        if fact.relation != self.relation {
            return None;
        }
        let mut out = binding.clone();
        for (var, entity) in [(&self.subject, &fact.subject), (&self.object, &fact.object)] {
            match out.0.get(var) {
                Some(bound) if bound != entity => return None,
                Some(_) => {}
                None => {
                    out.0.insert(var.clone(), entity.clone());
                }
            }
        }
        Some(out)
    }

    pub fn instantiate(&self, binding: &Binding) -> Option<Fact> {
        Some(Fact {
            subject: binding.get(&self.subject)?.clone(),
            relation: self.relation.clone(),
            object: binding.get(&self.object)?.clone(),
        })
    }
}

/// `If (premises[0] AND premises[1]) then implication`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub premises: [Pattern; 2],
    pub implication: Pattern,
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("no relation `{phrase}` from {subject_type} to {object_type}")]
    UnknownRelation {
        phrase: String,
        subject_type: String,
        object_type: String,
    },
    #[error("relation `{relation}` expects ({expected_subject}, {expected_object}) but the clause uses ({subject}, {object})")]
    TypeMismatch {
        relation: RelationId,
        expected_subject: String,
        expected_object: String,
        subject: String,
        object: String,
    },
    #[error("premises share no variable")]
    DisconnectedPremises,
    #[error("implication variable [{0}] does not appear in any premise")]
    UnboundImplicationVariable(Var),
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<RuleError>,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Rule {
    /// Builds a rule, checking the structural invariants.
    pub fn new(
        id: impl Into<String>,
        premise1: Pattern,
        premise2: Pattern,
        implication: Pattern,
    ) -> Result<Self, RuleError> {
        let rule = Self {
            id: id.into(),
            premises: [premise1, premise2],
            implication,
        };
        rule.check_structure()?;
        Ok(rule)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn check_structure(&self) -> Result<(), RuleError> {
        let first: BTreeSet<&Var> = self.premises[0].vars().into_iter().collect();
        if !self.premises[1].vars().iter().any(|v| first.contains(v)) {
            return Err(RuleError::DisconnectedPremises);
        }
        let bound: BTreeSet<&Var> = self.premises.iter().flat_map(Pattern::vars).collect();
        for var in self.implication.vars() {
            if !bound.contains(var) {
                return Err(RuleError::UnboundImplicationVariable(var.clone()));
            }
        }
        Ok(())
    }

    /// Checks that every clause agrees with its relation's signature.
    pub fn check_types(&self, corpus: &Corpus) -> Result<(), RuleError> {
        for p in self.premises.iter().chain(std::iter::once(&self.implication)) {
            let r = corpus.relation(&p.relation)?;
            if r.subject_type != p.subject.etype || r.object_type != p.object.etype {
                return Err(RuleError::TypeMismatch {
                    relation: r.id.clone(),
                    expected_subject: r.subject_type.clone(),
                    expected_object: r.object_type.clone(),
                    subject: p.subject.etype.clone(),
                    object: p.object.etype.clone(),
                });
            }
        }
        Ok(())
    }

    /// Relations used by the rule, premises first.
    pub fn relations(&self) -> [&RelationId; 3] {
        [
            &self.premises[0].relation,
            &self.premises[1].relation,
            &self.implication.relation,
        ]
    }

    /// Renders the rule in the DSL accepted by [`parse_rule`].
    pub fn to_dsl(&self, corpus: &Corpus) -> Result<String, RuleError> {
        let clause = |p: &Pattern| -> Result<String, RuleError> {
            let phrase = corpus.relation(&p.relation)?.display_phrase().to_owned();
            Ok(format!("[{}] {} [{}]", p.subject, phrase, p.object))
        };
        Ok(format!(
            "If {}, and {}, then {}.",
            clause(&self.premises[0])?,
            clause(&self.premises[1])?,
            clause(&self.implication)?
        ))
    }
}

/// Assignment of entities to rule variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Binding(pub BTreeMap<Var, EntityId>);

impl Binding {
    pub fn get(&self, var: &Var) -> Option<&EntityId> {
        self.0.get(var)
    }

    /// Bound entity ids in variable order; the sort key for deterministic output.
    pub fn sort_key(&self) -> Vec<&EntityId> {
        self.0.values().collect()
    }
}

/// One rule application: the two premise facts and the fact they imply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub rule: String,
    pub binding: Binding,
    pub premises: [Fact; 2],
    pub implied: Fact,
}
