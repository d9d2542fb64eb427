use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Binding, Derivation, Pattern, Rule};
use crate::kb::{EntityId, Fact, FactKey, RelationId};

type ByEntity<'a> = HashMap<&'a RelationId, HashMap<&'a EntityId, Vec<&'a Fact>>>;

/// Facts indexed for joins.
struct FactIndex<'a> {
    by_relation: HashMap<&'a RelationId, Vec<&'a Fact>>,
    by_subject: ByEntity<'a>,
    by_object: ByEntity<'a>,
}

impl<'a> FactIndex<'a> {
    fn new(facts: impl IntoIterator<Item = &'a Fact>) -> Self {
        let mut idx = FactIndex {
            by_relation: HashMap::new(),
            by_subject: HashMap::new(),
            by_object: HashMap::new(),
        };
        for f in facts {
            idx.by_relation.entry(&f.relation).or_default().push(f);
            idx.by_subject
                .entry(&f.relation)
                .or_default()
                .entry(&f.subject)
                .or_default()
                .push(f);
            idx.by_object
                .entry(&f.relation)
                .or_default()
                .entry(&f.object)
                .or_default()
                .push(f);
        }
        idx
    }

    fn candidates(&self, pattern: &Pattern, binding: &Binding) -> &[&'a Fact] {
        let found = if let Some(s) = binding.get(&pattern.subject) {
            self.by_subject.get(&pattern.relation).and_then(|m| m.get(s))
        } else if let Some(o) = binding.get(&pattern.object) {
            self.by_object.get(&pattern.relation).and_then(|m| m.get(o))
        } else {
            self.by_relation.get(&pattern.relation)
        };
        found.map(Vec::as_slice).unwrap_or(&[])
    }
}

fn matches_with_facts(rule: &Rule, index: &FactIndex<'_>) -> Vec<(Binding, [Fact; 2])> {
    let [p1, p2] = &rule.premises;
    let mut out = BTreeMap::new();
    let empty = Binding::default();
    for f1 in index.candidates(p1, &empty) {
        let Some(b1) = p1.unify(f1, &empty) else {
            continue;
        };
        for f2 in index.candidates(p2, &b1) {
            if let Some(b2) = p2.unify(f2, &b1) {
                out.entry(b2).or_insert_with(|| [(*f1).clone(), (*f2).clone()]);
            }
        }
    }
    let mut v: Vec<_> = out.into_iter().collect();
    v.sort_by(|(a, _), (b, _)| a.sort_key().cmp(&b.sort_key()));
    v
}

/// All bindings under which both premises hold in `facts`, sorted by the
/// bound entity ids.
pub fn match_premises<'a>(rule: &Rule, facts: impl IntoIterator<Item = &'a Fact>) -> Vec<Binding> {
    let index = FactIndex::new(facts);
    matches_with_facts(rule, &index)
        .into_iter()
        .map(|(b, _)| b)
        .collect()
}

/// Two or more facts answering the same question differently, at least one
/// of them derived.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub key: FactKey,
    pub objects: Vec<EntityId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainResult {
    pub derivations: Vec<Derivation>,
    pub conflicts: Vec<Conflict>,
}

impl ChainResult {
    pub fn implied_facts(&self) -> impl Iterator<Item = &Fact> {
        self.derivations.iter().map(|d| &d.implied)
    }

    pub fn is_conflict_free(&self) -> bool {
        self.conflicts.is_empty()
    }
}

/// Applies `rules` to `facts` round by round until nothing new is derived or
/// `max_depth` rounds have run. Derived facts feed later rounds.
///
/// Output is deduplicated by (rule, binding) and ordered by round, then rule
/// id, then binding.
pub fn forward_chain<'a>(
    facts: impl IntoIterator<Item = &'a Fact>,
    rules: &[Rule],
    max_depth: usize,
) -> ChainResult {
    assert!(max_depth >= 1, "max_depth must be positive");
    let input: BTreeSet<Fact> = facts.into_iter().cloned().collect();
    let mut known = input.clone();
    let mut rules: Vec<&Rule> = rules.iter().collect();
    rules.sort_by(|a, b| a.id.cmp(&b.id));

    let mut seen: BTreeSet<(String, Binding)> = BTreeSet::new();
    let mut derivations = Vec::new();
    for _ in 0..max_depth {
        let round: Vec<Derivation> = {
            let index = FactIndex::new(known.iter());
            let mut round = Vec::new();
            for rule in &rules {
                for (binding, premises) in matches_with_facts(rule, &index) {
                    if !seen.insert((rule.id.clone(), binding.clone())) {
                        continue;
                    }
                    let implied = rule
                        .implication
                        .instantiate(&binding)
                        .expect("implication variables are bound by the premises");
                    round.push(Derivation {
                        rule: rule.id.clone(),
                        binding,
                        premises,
                        implied,
                    });
                }
            }
            round
        };
        if round.is_empty() {
            break;
        }
        known.extend(round.iter().map(|d| d.implied.clone()));
        derivations.extend(round);
    }

    let conflicts = find_conflicts(&input, &derivations);
    ChainResult {
        derivations,
        conflicts,
    }
}

fn find_conflicts(input: &BTreeSet<Fact>, derivations: &[Derivation]) -> Vec<Conflict> {
    let mut answers: BTreeMap<FactKey, (BTreeSet<EntityId>, bool)> = BTreeMap::new();
    for f in input {
        answers.entry(f.key()).or_default().0.insert(f.object.clone());
    }
    for d in derivations {
        let entry = answers.entry(d.implied.key()).or_default();
        entry.0.insert(d.implied.object.clone());
        entry.1 = true;
    }
    answers
        .into_iter()
        .filter(|(_, (objects, derived))| *derived && objects.len() > 1)
        .map(|(key, (objects, _))| Conflict {
            key,
            objects: objects.into_iter().collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::Var;

    fn person() -> Var {
        Var::new("Person", "A")
    }
    fn city() -> Var {
        Var::new("City", "A")
    }
    fn country() -> Var {
        Var::new("Country", "A")
    }

    fn origin_rule() -> Rule {
        Rule::new(
            "origin",
            Pattern::new(person(), "city", city()),
            Pattern::new(city(), "country", country()),
            Pattern::new(person(), "origin", country()),
        )
        .unwrap()
    }

    #[test]
    fn franklin_binding() {
        let facts = [
            Fact::new("franklin", "city", "nyc"),
            Fact::new("nyc", "country", "usa"),
        ];
        let b = match_premises(&origin_rule(), &facts);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].get(&person()), Some(&EntityId::from("franklin")));
        assert_eq!(b[0].get(&city()), Some(&EntityId::from("nyc")));
        assert_eq!(b[0].get(&country()), Some(&EntityId::from("usa")));

        let r = forward_chain(&facts, &[origin_rule()], 1);
        assert_eq!(r.derivations.len(), 1);
        assert_eq!(r.derivations[0].implied, Fact::new("franklin", "origin", "usa"));
        assert!(r.is_conflict_free());
    }

    #[test]
    fn inconsistent_shared_variable() {
        let facts = [
            Fact::new("franklin", "city", "nyc"),
            Fact::new("london", "country", "uk"),
        ];
        assert!(match_premises(&origin_rule(), &facts).is_empty());
    }

    #[test]
    fn three_chains_match_all_pairs() {
        let mut facts = Vec::new();
        for i in 0..3 {
            facts.push(Fact::new(format!("p{i}"), "city", format!("c{i}")));
            facts.push(Fact::new(format!("c{i}"), "country", format!("k{}", i % 2)));
        }
        let rule = origin_rule();
        let got = match_premises(&rule, &facts);
        // every ordered pair of facts, checked directly
        let mut expected = 0;
        for a in &facts {
            for b in &facts {
                if a.relation.as_str() == "city" && b.relation.as_str() == "country" && a.object == b.subject {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 3);
        assert_eq!(got.len(), expected);
    }

    #[test]
    fn empty_rules_derive_nothing() {
        let facts = [Fact::new("franklin", "city", "nyc")];
        assert!(forward_chain(&facts, &[], 3).derivations.is_empty());
    }

    #[test]
    fn conflicting_derivations_are_reported() {
        let facts = [
            Fact::new("franklin", "city", "nyc"),
            Fact::new("nyc", "country", "usa"),
            Fact::new("franklin", "origin", "uk"),
        ];
        let r = forward_chain(&facts, &[origin_rule()], 1);
        assert_eq!(r.conflicts.len(), 1);
        assert_eq!(r.conflicts[0].objects.len(), 2);
    }

    #[test]
    fn deeper_rounds_use_derived_facts() {
        // origin then continent-of-origin
        let continent = Rule::new(
            "continent",
            Pattern::new(person(), "origin", country()),
            Pattern::new(country(), "continent", Var::new("Continent", "A")),
            Pattern::new(person(), "continent_of_origin", Var::new("Continent", "A")),
        )
        .unwrap();
        let facts = [
            Fact::new("franklin", "city", "nyc"),
            Fact::new("nyc", "country", "usa"),
            Fact::new("usa", "continent", "na"),
        ];
        let rules = [origin_rule(), continent];
        assert_eq!(forward_chain(&facts, &rules, 1).derivations.len(), 1);
        let deep = forward_chain(&facts, &rules, 5);
        assert_eq!(deep.derivations.len(), 2);
        assert_eq!(deep.derivations[1].implied, Fact::new("franklin", "continent_of_origin", "na"));
    }
}
