use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::GenError;
use crate::kb::{Corpus, EntityId, Fact, FactKey, RelationId};
use crate::rules::{forward_chain, match_premises, Derivation, Rule, Var};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetParams {
    pub n_chains: usize,
    pub n_unrelated: usize,
}

impl Default for SetParams {
    fn default() -> Self {
        Self {
            n_chains: 12,
            n_unrelated: 5,
        }
    }
}

/// One simulation environment: specific facts forming premise chains, the
/// rule, the implications they derive, and unrelated facts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSet {
    pub id: String,
    pub seed: u64,
    pub rule: Rule,
    /// Chain by chain: first premise fact, then second premise fact.
    pub specific_facts: Vec<Fact>,
    pub unrelated_facts: Vec<Fact>,
    pub implications: Vec<Derivation>,
}

impl KnowledgeSet {
    pub fn implied_facts(&self) -> impl Iterator<Item = &Fact> {
        self.implications.iter().map(|d| &d.implied)
    }

    pub fn implication_keys(&self) -> BTreeSet<FactKey> {
        self.implied_facts().map(Fact::key).collect()
    }

    /// Every entity mentioned by specific facts or implications.
    pub fn entities(&self) -> BTreeSet<&EntityId> {
        self.specific_facts
            .iter()
            .chain(self.implied_facts())
            .flat_map(|f| [&f.subject, &f.object])
            .collect()
    }
}

fn shared_vars(rule: &Rule) -> Vec<&Var> {
    let [p1, p2] = &rule.premises;
    let second = [&p2.subject, &p2.object];
    let mut v: Vec<&Var> = [&p1.subject, &p1.object]
        .into_iter()
        .filter(|v| second.contains(v))
        .collect();
    v.dedup();
    v
}

struct Chain {
    bridge: Vec<EntityId>,
    facts: [Fact; 2],
}

// A chain set is valid when the rule derives exactly one implication per
// chain, every fact feeds exactly one derivation and nothing conflicts.
fn chains_are_isolated(facts: &[Fact], rule: &Rule, n_chains: usize) -> bool {
    let keys: BTreeSet<FactKey> = facts.iter().map(Fact::key).collect();
    if keys.len() != facts.len() {
        return false;
    }
    let result = forward_chain(facts, std::slice::from_ref(rule), 1);
    if result.derivations.len() != n_chains || !result.is_conflict_free() {
        return false;
    }
    let mut uses: BTreeMap<&Fact, usize> = BTreeMap::new();
    for d in &result.derivations {
        for p in &d.premises {
            *uses.entry(p).or_default() += 1;
        }
        if keys.contains(&d.implied.key()) {
            return false;
        }
    }
    uses.len() == facts.len() && uses.values().all(|&n| n == 1)
}

/// Samples a knowledge set for `rule` from `corpus`.
///
/// Chains use pairwise distinct bridge entities; unrelated facts avoid the
/// rule's relations and every entity of the specific facts.
pub fn build_knowledge_set(
    corpus: &Corpus,
    rule: &Rule,
    params: SetParams,
    seed_value: u64,
) -> Result<KnowledgeSet, GenError> {
    for relation in rule.relations() {
        corpus.table().template(relation, 0)?;
    }
    let mut rng = seed::rng(seed_value, "kset", 0);

    let shared = shared_vars(rule);
    let mut chains: Vec<Chain> = match_premises(rule, corpus.facts())
        .into_iter()
        .filter_map(|b| {
            let facts = [
                rule.premises[0].instantiate(&b)?,
                rule.premises[1].instantiate(&b)?,
            ];
            let implied = rule.implication.instantiate(&b)?;
            if facts[0] == facts[1]
                || facts[0].key() == facts[1].key()
                || facts.iter().any(|f| f.key() == implied.key())
            {
                return None;
            }
            let bridge = shared.iter().map(|v| b.get(v).cloned()).collect::<Option<_>>()?;
            Some(Chain { bridge, facts })
        })
        .collect();
    chains.shuffle(&mut rng);

    let mut used_bridges = BTreeSet::new();
    let mut specific: Vec<Fact> = Vec::with_capacity(params.n_chains * 2);
    let mut selected = 0;
    for chain in &chains {
        if selected == params.n_chains {
            break;
        }
        if used_bridges.contains(&chain.bridge) {
            continue;
        }
        specific.extend(chain.facts.iter().cloned());
        if chains_are_isolated(&specific, rule, selected + 1) {
            used_bridges.insert(chain.bridge.clone());
            selected += 1;
        } else {
            specific.truncate(specific.len() - 2);
        }
    }
    if selected < params.n_chains {
        return Err(GenError::InsufficientCorpus {
            resource: format!("premise chains with distinct bridge entities for rule `{}`", rule.id),
            needed: params.n_chains,
            found: selected,
        });
    }

    let implications = forward_chain(&specific, std::slice::from_ref(rule), 1).derivations;

    let rule_relations: BTreeSet<&RelationId> = rule.relations().into_iter().collect();
    let taken: BTreeSet<EntityId> = specific
        .iter()
        .chain(implications.iter().map(|d| &d.implied))
        .flat_map(|f| [f.subject.clone(), f.object.clone()])
        .collect();
    let mut candidates: Vec<&Fact> = corpus
        .facts()
        .iter()
        .filter(|f| !rule_relations.contains(&f.relation))
        .filter(|f| corpus.table().variant_count(&f.relation) > 0)
        .filter(|f| !taken.contains(&f.subject) && !taken.contains(&f.object))
        .collect();
    candidates.sort();
    candidates.shuffle(&mut rng);
    let mut unrelated = Vec::with_capacity(params.n_unrelated);
    let mut unrelated_keys = BTreeSet::new();
    for f in candidates {
        if unrelated.len() == params.n_unrelated {
            break;
        }
        if unrelated_keys.insert(f.key()) {
            unrelated.push(f.clone());
        }
    }
    if unrelated.len() < params.n_unrelated {
        return Err(GenError::InsufficientCorpus {
            resource: "unrelated facts disjoint from the rule".into(),
            needed: params.n_unrelated,
            found: unrelated.len(),
        });
    }

    Ok(KnowledgeSet {
        id: format!("{}@{seed_value}", rule.id),
        seed: seed_value,
        rule: rule.clone(),
        specific_facts: specific,
        unrelated_facts: unrelated,
        implications,
    })
}
