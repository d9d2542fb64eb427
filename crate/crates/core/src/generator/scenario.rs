use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{GenError, KnowledgeSet};
use crate::kb::{Corpus, EntityId, Fact, FactKey, RelationId};
use crate::rules::{forward_chain, Rule};
use crate::seed;
use crate::text::normalize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_copies: usize,
    pub n_edits: usize,
    /// Whole-batch resampling attempts per copy.
    pub max_retries: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_copies: 3,
            n_edits: 20,
            max_retries: 50,
        }
    }
}

/// A new fact handed to the model in the update phase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub fact: Fact,
    /// Object before the edit; `None` for second-premise facts injected so
    /// that the edited chain still derives an implication.
    pub previous: Option<EntityId>,
}

impl Edit {
    pub fn is_injected(&self) -> bool {
        self.previous.is_none()
    }
}

/// Expected changes for one copy of the established model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditScenario {
    pub kset: String,
    pub copy: usize,
    pub seed: u64,
    pub edits: Vec<Edit>,
    /// Specific facts left as established.
    pub untouched_facts: Vec<Fact>,
    /// Implications whose answer changes (or that appear) after the edits.
    pub updated_implications: Vec<Fact>,
    /// Established implications whose answer stays the same.
    pub untouched_implications: Vec<FactKey>,
    /// Every implication derived from the post-edit facts.
    pub implications_after: Vec<Fact>,
}

impl EditScenario {
    /// Edits sampled from the specific facts, without injected ones.
    pub fn sampled_edits(&self) -> impl Iterator<Item = &Edit> {
        self.edits.iter().filter(|e| !e.is_injected())
    }

    /// The post-edit fact set the rule is applied to.
    pub fn facts_after(&self, kset: &KnowledgeSet) -> Vec<Fact> {
        let mut by_key: BTreeMap<FactKey, Fact> = kset
            .specific_facts
            .iter()
            .map(|f| (f.key(), f.clone()))
            .collect();
        for e in &self.edits {
            by_key.insert(e.fact.key(), e.fact.clone());
        }
        by_key.into_values().collect()
    }
}

/// Replacement objects tried per edited fact before the batch is resampled.
const MAX_CANDIDATES: usize = 64;

struct Batch<'a> {
    rule: &'a Rule,
    original: BTreeMap<FactKey, EntityId>,
    current: BTreeMap<FactKey, EntityId>,
    edits: Vec<Edit>,
}

impl Batch<'_> {
    fn facts(current: &BTreeMap<FactKey, EntityId>) -> Vec<Fact> {
        current.iter().map(|(k, o)| k.with_object(o.clone())).collect()
    }

    // Conflict-free and every established implication still derivable.
    fn acceptable(&self, current: &BTreeMap<FactKey, EntityId>) -> bool {
        let result = forward_chain(&Self::facts(current), std::slice::from_ref(self.rule), 1);
        if !result.is_conflict_free() {
            return false;
        }
        let derived: BTreeSet<FactKey> = result.implied_facts().map(Fact::key).collect();
        self.original.keys().all(|k| derived.contains(k))
    }

    /// Tries to replace the object of `key` with `object`, injecting one
    /// corpus fact about the new object if the chain would otherwise break.
    fn try_edit(&mut self, corpus: &Corpus, key: &FactKey, object: &EntityId) -> bool {
        let mut trial = self.current.clone();
        let previous = trial.insert(key.clone(), object.clone());
        if self.acceptable(&trial) {
            self.current = trial;
            self.edits.push(Edit {
                fact: key.with_object(object.clone()),
                previous,
            });
            return true;
        }
        let premise_relations: BTreeSet<&RelationId> =
            self.rule.premises.iter().map(|p| &p.relation).collect();
        let mut injections: Vec<&Fact> = corpus
            .facts_with_entity(object)
            .filter(|f| premise_relations.contains(&f.relation))
            .filter(|f| !trial.contains_key(&f.key()))
            .collect();
        injections.sort();
        for inject in injections {
            let mut with = trial.clone();
            with.insert(inject.key(), inject.object.clone());
            if self.acceptable(&with) {
                self.current = with;
                self.edits.push(Edit {
                    fact: key.with_object(object.clone()),
                    previous,
                });
                self.edits.push(Edit {
                    fact: inject.clone(),
                    previous: None,
                });
                return true;
            }
        }
        false
    }
}

/// Samples `n_copies` independent edit batches over the specific facts of
/// `kset` and derives the implications each batch should change.
pub fn generate_edit_scenarios(
    corpus: &Corpus,
    kset: &KnowledgeSet,
    params: ScenarioParams,
    seed_value: u64,
) -> Result<Vec<EditScenario>, GenError> {
    if params.n_edits > kset.specific_facts.len() {
        return Err(GenError::TooManyEdits {
            requested: params.n_edits,
            available: kset.specific_facts.len(),
        });
    }
    let original: BTreeMap<FactKey, EntityId> = kset
        .implied_facts()
        .map(|f| (f.key(), f.object.clone()))
        .collect();
    let pools: BTreeMap<&RelationId, Vec<EntityId>> = kset
        .rule
        .premises
        .iter()
        .map(|p| (&p.relation, corpus.object_pool(&p.relation)))
        .collect();

    (0..params.n_copies)
        .map(|copy| {
            let copy_seed = seed::derive(seed_value, "scenario", copy as u64);
            let mut rng = seed::rng(copy_seed, "edits", 0);
            for _ in 0..params.max_retries.max(1) {
                let mut order: Vec<usize> = (0..kset.specific_facts.len()).collect();
                order.shuffle(&mut rng);
                let mut chosen = order[..params.n_edits].to_vec();
                chosen.sort_unstable();

                let mut batch = Batch {
                    rule: &kset.rule,
                    original: original.clone(),
                    current: kset
                        .specific_facts
                        .iter()
                        .map(|f| (f.key(), f.object.clone()))
                        .collect(),
                    edits: Vec::new(),
                };
                let mut complete = true;
                for &i in &chosen {
                    let fact = &kset.specific_facts[i];
                    let old_surface = normalize(corpus.surface(&fact.object)?);
                    let mut options: Vec<&EntityId> = pools[&fact.relation]
                        .iter()
                        .filter(|o| **o != fact.object)
                        .filter(|o| {
                            corpus
                                .surface(o)
                                .map(|s| normalize(s) != old_surface)
                                .unwrap_or(false)
                        })
                        .collect();
                    if options.is_empty() {
                        return Err(GenError::PoolTooSmall {
                            fact: fact.to_string(),
                            relation: fact.relation.to_string(),
                        });
                    }
                    options.shuffle(&mut rng);
                    options.truncate(MAX_CANDIDATES);
                    let key = fact.key();
                    if !options.iter().any(|o| batch.try_edit(corpus, &key, o)) {
                        complete = false;
                        break;
                    }
                }
                if !complete {
                    continue;
                }
                return Ok(finish(kset, copy, copy_seed, batch));
            }
            Err(GenError::ExhaustedRetries {
                copy,
                attempts: params.max_retries.max(1),
            })
        })
        .collect()
}

fn finish(kset: &KnowledgeSet, copy: usize, copy_seed: u64, batch: Batch<'_>) -> EditScenario {
    let after = forward_chain(
        &Batch::facts(&batch.current),
        std::slice::from_ref(&kset.rule),
        1,
    );
    let implications_after: Vec<Fact> = after.implied_facts().cloned().collect();
    let mut updated = Vec::new();
    let mut untouched = Vec::new();
    for f in &implications_after {
        match batch.original.get(&f.key()) {
            Some(o) if *o == f.object => untouched.push(f.key()),
            _ => updated.push(f.clone()),
        }
    }
    let edited: BTreeSet<FactKey> = batch.edits.iter().map(|e| e.fact.key()).collect();
    EditScenario {
        kset: kset.id.clone(),
        copy,
        seed: copy_seed,
        edits: batch.edits,
        untouched_facts: kset
            .specific_facts
            .iter()
            .filter(|f| !edited.contains(&f.key()))
            .cloned()
            .collect(),
        updated_implications: updated,
        untouched_implications: untouched,
        implications_after,
    }
}
