use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{Adapter, AdapterError, Capabilities, Qa};
use crate::kb::{Corpus, EntityId, Fact, FactKey, RelationId};
use crate::rules::{backward_chain, Binding, Pattern, Rule};
use crate::text::{is_unknown, UNKNOWN};

/// Asks `inner` about `key` and maps the answer back to an entity.
fn ask<A: Adapter>(inner: &mut A, corpus: &Corpus, key: &FactKey) -> Result<Option<EntityId>, AdapterError> {
    let Ok(question) = corpus.question(key, 0) else {
        return Ok(None);
    };
    let answer = inner.query(&question)?;
    if is_unknown(&answer) {
        return Ok(None);
    }
    let Ok(relation) = corpus.relation(&key.relation) else {
        return Ok(None);
    };
    Ok(corpus.resolve_surface(&answer, &relation.object_type).ok().flatten())
}

/// Update-time dependency resolution.
///
/// Each edit that matches a rule premise is completed with the other
/// premise (taken from the same batch when present, otherwise asked of the
/// inner model) and the implied fact is appended to the forwarded batch.
/// Establish passes through unchanged.
pub struct ForwChain<A: Adapter> {
    inner: A,
    corpus: Arc<Corpus>,
    rules: Vec<Rule>,
    /// Subjects seen per relation, to enumerate first premises.
    subjects: BTreeMap<RelationId, BTreeSet<EntityId>>,
    saved: BTreeMap<String, BTreeMap<RelationId, BTreeSet<EntityId>>>,
}

impl<A: Adapter> ForwChain<A> {
    pub fn new(inner: A, rules: Vec<Rule>, corpus: Arc<Corpus>) -> Self {
        Self {
            inner,
            corpus,
            rules,
            subjects: BTreeMap::new(),
            saved: BTreeMap::new(),
        }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    fn observe(&mut self, pairs: &[Qa]) -> Vec<Option<Fact>> {
        let facts: Vec<Option<Fact>> = pairs
            .iter()
            .map(|qa| self.corpus.qa_to_fact(&qa.q, &qa.a).ok().flatten())
            .collect();
        for f in facts.iter().flatten() {
            self.subjects
                .entry(f.relation.clone())
                .or_default()
                .insert(f.subject.clone());
        }
        facts
    }

    fn lookup(
        &mut self,
        batch: &BTreeMap<FactKey, EntityId>,
        key: &FactKey,
    ) -> Result<Option<EntityId>, AdapterError> {
        if let Some(o) = batch.get(key) {
            return Ok(Some(o.clone()));
        }
        ask(&mut self.inner, &self.corpus, key)
    }

    /// Completes `binding` with a fact for `other`, which may need its
    /// subject enumerated from observed facts.
    fn complete(
        &mut self,
        batch: &BTreeMap<FactKey, EntityId>,
        other: &Pattern,
        binding: &Binding,
    ) -> Result<Vec<Binding>, AdapterError> {
        let subjects: Vec<EntityId> = match binding.get(&other.subject) {
            Some(s) => vec![s.clone()],
            None => self
                .subjects
                .get(&other.relation)
                .map(|s| s.iter().cloned().collect())
                .unwrap_or_default(),
        };
        let mut out = Vec::new();
        for subject in subjects {
            let key = FactKey {
                subject,
                relation: other.relation.clone(),
            };
            match self.lookup(batch, &key)? {
                Some(object) => {
                    if let Some(b) = other.unify(&key.with_object(object), binding) {
                        out.push(b);
                    }
                }
                None => log::debug!("forwchain: no answer for premise ({}, {})", key.subject, key.relation),
            }
        }
        Ok(out)
    }

    fn implied(&mut self, edits: &[Fact]) -> Result<Vec<Fact>, AdapterError> {
        let batch: BTreeMap<FactKey, EntityId> =
            edits.iter().map(|f| (f.key(), f.object.clone())).collect();
        let mut implied = BTreeMap::new();
        let rules = self.rules.clone();
        for fact in edits {
            for rule in &rules {
                for (i, premise) in rule.premises.iter().enumerate() {
                    let Some(binding) = premise.unify(fact, &Binding::default()) else {
                        continue;
                    };
                    for full in self.complete(&batch, &rule.premises[1 - i], &binding)? {
                        if let Some(f) = rule.implication.instantiate(&full) {
                            implied.entry(f.key()).or_insert(f);
                        }
                    }
                }
            }
        }
        Ok(implied.into_values().collect())
    }
}

impl<A: Adapter> Adapter for ForwChain<A> {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        self.inner.init()
    }

    fn establish(&mut self, facts: &[Qa], rules: &[String]) -> Result<(), AdapterError> {
        self.observe(facts);
        self.inner.establish(facts, rules)
    }

    fn query(&mut self, question: &str) -> Result<String, AdapterError> {
        self.inner.query(question)
    }

    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        let facts: Vec<Fact> = self.observe(edits).into_iter().flatten().collect();
        let mut batch = edits.to_vec();
        let given: BTreeSet<FactKey> = facts.iter().map(Fact::key).collect();
        for f in self.implied(&facts)? {
            if given.contains(&f.key()) {
                continue;
            }
            let qa = match self.corpus.fact_to_qa(&f, 0) {
                Ok(qa) => qa,
                Err(e) => {
                    log::debug!("forwchain: cannot phrase {f}: {e}");
                    continue;
                }
            };
            batch.push(Qa::new(qa.question, qa.answer));
        }
        self.inner.update(&batch)
    }

    fn snapshot(&mut self) -> Result<String, AdapterError> {
        let id = self.inner.snapshot()?;
        self.saved.insert(id.clone(), self.subjects.clone());
        Ok(id)
    }

    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        self.inner.restore(id)?;
        if let Some(s) = self.saved.get(id) {
            self.subjects = s.clone();
        }
        Ok(())
    }

    fn reset(&mut self) -> Result<(), AdapterError> {
        self.subjects.clear();
        self.saved.clear();
        self.inner.reset()
    }

    fn shutdown(&mut self) -> Result<(), AdapterError> {
        self.inner.shutdown()
    }
}

/// Query-time dependency resolution.
///
/// A question about a rule's implication relation is answered by asking the
/// two premise questions in turn. If no plan yields an answer the inner
/// model's direct answer is returned.
pub struct BackChain<A: Adapter> {
    inner: A,
    corpus: Arc<Corpus>,
    rules: Vec<Rule>,
}

impl<A: Adapter> BackChain<A> {
    pub fn new(inner: A, rules: Vec<Rule>, corpus: Arc<Corpus>) -> Self {
        let mut rules = rules;
        rules.sort_by(|a, b| a.id.cmp(&b.id));
        Self { inner, corpus, rules }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }
}

impl<A: Adapter> Adapter for BackChain<A> {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        self.inner.init()
    }

    fn establish(&mut self, facts: &[Qa], rules: &[String]) -> Result<(), AdapterError> {
        self.inner.establish(facts, rules)
    }

    fn query(&mut self, question: &str) -> Result<String, AdapterError> {
        if let Ok(Some(goal)) = self.corpus.parse_question(question) {
            for plan in backward_chain(&goal, &self.rules).plans() {
                let Some(bridge) = ask(&mut self.inner, &self.corpus, &plan.first_query())? else {
                    continue;
                };
                if let Some(answer) = ask(&mut self.inner, &self.corpus, &plan.second_query(bridge))? {
                    return Ok(self.corpus.surface(&answer).unwrap_or(UNKNOWN).to_owned());
                }
            }
            if !backward_chain(&goal, &self.rules).plans().is_empty() {
                log::debug!("backchain: premises unanswered for {question:?}; asking directly");
            }
        }
        self.inner.query(question)
    }

    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        self.inner.update(edits)
    }

    fn snapshot(&mut self) -> Result<String, AdapterError> {
        self.inner.snapshot()
    }

    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        self.inner.restore(id)
    }

    fn reset(&mut self) -> Result<(), AdapterError> {
        self.inner.reset()
    }

    fn shutdown(&mut self) -> Result<(), AdapterError> {
        self.inner.shutdown()
    }
}
