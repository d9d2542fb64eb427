use serde::{Deserialize, Serialize};

use super::{Pattern, Rule};
use crate::kb::{EntityId, FactKey, RelationId};

/// Two sequential premise queries that answer an implication question:
/// ask `(subject, first)` to get the bridge entity, then `(bridge, second)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub rule: String,
    pub goal: FactKey,
    pub first: RelationId,
    pub second: RelationId,
}

impl QueryPlan {
    pub fn first_query(&self) -> FactKey {
        FactKey {
            subject: self.goal.subject.clone(),
            relation: self.first.clone(),
        }
    }

    pub fn second_query(&self, bridge: EntityId) -> FactKey {
        FactKey {
            subject: bridge,
            relation: self.second.clone(),
        }
    }

    /// Runs the plan against `ask`, which answers a question key with an
    /// entity or `None` when it cannot.
    pub fn execute(&self, mut ask: impl FnMut(&FactKey) -> Option<EntityId>) -> Option<EntityId> {
        let bridge = ask(&self.first_query())?;
        ask(&self.second_query(bridge))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanOutcome {
    NoPlan,
    Single(QueryPlan),
    /// Several rules imply the goal relation; plans are in rule-id order.
    Ambiguous(Vec<QueryPlan>),
}

impl PlanOutcome {
    pub fn plans(&self) -> &[QueryPlan] {
        match self {
            PlanOutcome::NoPlan => &[],
            PlanOutcome::Single(p) => std::slice::from_ref(p),
            PlanOutcome::Ambiguous(ps) => ps,
        }
    }
}

// A rule is answerable by forward questions only when one premise starts at
// the implication's subject and the other continues from its object to the
// implication's object, through three distinct variables. A repeated
// variable would add an equality the two questions cannot check.
fn chain_order<'r>(rule: &'r Rule) -> Option<(&'r Pattern, &'r Pattern)> {
    let imp = &rule.implication;
    let [a, b] = &rule.premises;
    [(a, b), (b, a)].into_iter().find(|(first, second)| {
        first.subject == imp.subject
            && second.subject == first.object
            && second.object == imp.object
            && imp.subject != first.object
            && first.object != imp.object
            && imp.object != imp.subject
    })
}

/// Decomposes a question about `goal` into premise questions, one plan per
/// applicable rule.
pub fn backward_chain(goal: &FactKey, rules: &[Rule]) -> PlanOutcome {
    let mut plans: Vec<QueryPlan> = rules
        .iter()
        .filter(|r| r.implication.relation == goal.relation)
        .filter_map(|r| {
            let (first, second) = chain_order(r)?;
            Some(QueryPlan {
                rule: r.id.clone(),
                goal: goal.clone(),
                first: first.relation.clone(),
                second: second.relation.clone(),
            })
        })
        .collect();
    plans.sort_by(|a, b| a.rule.cmp(&b.rule));
    match plans.len() {
        0 => PlanOutcome::NoPlan,
        1 => PlanOutcome::Single(plans.pop().unwrap()),
        _ => PlanOutcome::Ambiguous(plans),
    }
}
