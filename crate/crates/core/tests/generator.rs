use std::collections::{BTreeMap, BTreeSet};

use editsim::generator::{
    assign_templates, build_knowledge_set, generate_edit_scenarios, read_set_records,
    write_set_records, GenError, KnowledgeSet, ScenarioParams, SetBundle, SetParams, Setting,
};
use editsim::kb::{Corpus, EntityId, Fact, FactKey};
use editsim::rules::{parse_rule, Rule};
use editsim::synth::{self, GeographyParams, ORIGIN_RULE};
use proptest::prelude::*;

fn world() -> (Corpus, Rule) {
    let corpus = synth::geography(GeographyParams::default(), 11);
    let rule = parse_rule(ORIGIN_RULE, &corpus).unwrap().with_id("origin");
    (corpus, rule)
}

// Independent join: person -city-> c, c -country-> k gives person -origin-> k.
fn origin_oracle(facts: &[Fact]) -> BTreeMap<FactKey, EntityId> {
    let country: BTreeMap<&EntityId, &EntityId> = facts
        .iter()
        .filter(|f| f.relation.as_str() == "country")
        .map(|f| (&f.subject, &f.object))
        .collect();
    facts
        .iter()
        .filter(|f| f.relation.as_str() == "city")
        .filter_map(|f| {
            country.get(&f.object).map(|k| {
                (
                    FactKey { subject: f.subject.clone(), relation: "origin".into() },
                    (*k).clone(),
                )
            })
        })
        .collect()
}

#[test]
fn default_set_has_24_specific_5_unrelated_12_implications() {
    let (corpus, rule) = world();
    let k = build_knowledge_set(&corpus, &rule, SetParams::default(), 5).unwrap();
    assert_eq!(k.specific_facts.len(), 24);
    assert_eq!(k.unrelated_facts.len(), 5);
    assert_eq!(k.implications.len(), 12);

    let keys: BTreeSet<FactKey> = k.specific_facts.iter().map(Fact::key).collect();
    assert_eq!(keys.len(), 24);
    let bridges: BTreeSet<&EntityId> = k
        .specific_facts
        .iter()
        .filter(|f| f.relation.as_str() == "country")
        .map(|f| &f.subject)
        .collect();
    assert_eq!(bridges.len(), 12);

    let entities = k.entities();
    for f in &k.unrelated_facts {
        assert!(!rule.relations().contains(&&f.relation));
        assert!(!entities.contains(&f.subject) && !entities.contains(&f.object));
        assert!(corpus.facts().contains(f));
    }
    let expected = origin_oracle(&k.specific_facts);
    let got: BTreeMap<FactKey, EntityId> =
        k.implied_facts().map(|f| (f.key(), f.object.clone())).collect();
    assert_eq!(got, expected);
}

#[test]
fn franklin_single_chain() {
    let corpus = synth::franklin();
    let rule = parse_rule(ORIGIN_RULE, &corpus).unwrap();
    let k = build_knowledge_set(&corpus, &rule, SetParams { n_chains: 1, n_unrelated: 1 }, 0).unwrap();
    assert_eq!(k.specific_facts.len(), 2);
    assert_eq!(k.unrelated_facts, vec![Fact::new("demi", "child", "rumer")]);
    let implied: Vec<&Fact> = k.implied_facts().collect();
    assert!(
        implied == [&Fact::new("franklin", "origin", "usa")]
            || implied == [&Fact::new("rowling", "origin", "uk")]
            || implied == [&Fact::new("dickens", "origin", "uk")]
    );
}

#[test]
fn too_few_chains_is_an_error() {
    let corpus = synth::franklin();
    let rule = parse_rule(ORIGIN_RULE, &corpus).unwrap();
    let err = build_knowledge_set(&corpus, &rule, SetParams { n_chains: 4, n_unrelated: 0 }, 0).unwrap_err();
    assert!(matches!(err, GenError::InsufficientCorpus { needed: 4, found: 3, .. }));
    let err = build_knowledge_set(&corpus, &rule, SetParams { n_chains: 1, n_unrelated: 2 }, 0).unwrap_err();
    assert!(matches!(err, GenError::InsufficientCorpus { needed: 2, found: 1, .. }));
}

#[test]
fn moving_franklin_to_london_changes_origin_to_uk() {
    let corpus = synth::franklin();
    let rule = parse_rule(ORIGIN_RULE, &corpus).unwrap();
    let params = ScenarioParams { n_copies: 1, n_edits: 1, max_retries: 5 };
    let mut seen = false;
    for seed in 0..200 {
        let k = build_knowledge_set(&corpus, &rule, SetParams { n_chains: 1, n_unrelated: 0 }, seed).unwrap();
        let s = &generate_edit_scenarios(&corpus, &k, params, seed).unwrap()[0];
        if s.edits[0].fact == Fact::new("franklin", "city", "london") {
            assert_eq!(s.edits[0].previous, Some("nyc".into()));
            assert_eq!(s.updated_implications, vec![Fact::new("franklin", "origin", "uk")]);
            assert!(s.untouched_implications.is_empty());
            seen = true;
            break;
        }
    }
    assert!(seen, "no seed produced the London edit");
}

#[test]
fn scenarios_match_a_recomputed_oracle() {
    let (corpus, rule) = world();
    let k = build_knowledge_set(&corpus, &rule, SetParams::default(), 9).unwrap();
    let scenarios = generate_edit_scenarios(&corpus, &k, ScenarioParams::default(), 9).unwrap();
    assert_eq!(scenarios.len(), 3);
    let before = origin_oracle(&k.specific_facts);
    for s in &scenarios {
        assert_eq!(s.sampled_edits().count(), 20);
        let edited: BTreeSet<FactKey> = s.sampled_edits().map(|e| e.fact.key()).collect();
        assert_eq!(edited.len(), 20);
        for e in s.sampled_edits() {
            let old = k.specific_facts.iter().find(|f| f.key() == e.fact.key()).unwrap();
            assert_eq!(e.previous.as_ref(), Some(&old.object));
            assert_ne!(
                editsim::text::normalize(corpus.surface(&old.object).unwrap()),
                editsim::text::normalize(corpus.surface(&e.fact.object).unwrap())
            );
        }
        assert_eq!(s.untouched_facts.len(), 4);

        let after = origin_oracle(&s.facts_after(&k));
        let updated: BTreeMap<FactKey, EntityId> = s
            .updated_implications
            .iter()
            .map(|f| (f.key(), f.object.clone()))
            .collect();
        let expect_updated: BTreeMap<FactKey, EntityId> = after
            .iter()
            .filter(|(key, o)| before.get(*key) != Some(*o))
            .map(|(key, o)| (key.clone(), o.clone()))
            .collect();
        assert_eq!(updated, expect_updated);
        let expect_untouched: BTreeSet<FactKey> = after
            .iter()
            .filter(|(key, o)| before.get(*key) == Some(*o))
            .map(|(key, _)| key.clone())
            .collect();
        assert_eq!(s.untouched_implications.iter().cloned().collect::<BTreeSet<_>>(), expect_untouched);
        // every original implication key survives
        assert!(before.keys().all(|key| after.contains_key(key)));
    }
}

#[test]
fn zero_edits_leave_everything_untouched() {
    let (corpus, rule) = world();
    let k = build_knowledge_set(&corpus, &rule, SetParams::default(), 2).unwrap();
    let params = ScenarioParams { n_edits: 0, ..ScenarioParams::default() };
    for s in generate_edit_scenarios(&corpus, &k, params, 2).unwrap() {
        assert!(s.edits.is_empty());
        assert!(s.updated_implications.is_empty());
        assert_eq!(s.untouched_implications.len(), 12);
        assert_eq!(s.untouched_facts, k.specific_facts);
    }
    let params = ScenarioParams { n_edits: 25, ..ScenarioParams::default() };
    assert!(matches!(
        generate_edit_scenarios(&corpus, &k, params, 2),
        Err(GenError::TooManyEdits { requested: 25, available: 24 })
    ));
}

#[test]
fn single_object_pool_is_reported() {
    let mut b = Corpus::builder();
    b.relation("city", "city", "Person", "City", &["is from"])
        .relation("country", "country", "City", "Country", &["is located in"])
        .relation("origin", "origin", "Person", "Country", &["is from"])
        .template("city", "Which city was {subject} from?")
        .template("country", "Which country is {subject} in?")
        .template("origin", "Which country was {subject} from?")
        .entity("p", "Pat", "Person")
        .entity("c", "Capital", "City")
        .entity("k", "Kingdom", "Country")
        .fact("p", "city", "c")
        .fact("c", "country", "k");
    let corpus = b.build().unwrap();
    let rule = parse_rule(ORIGIN_RULE, &corpus).unwrap();
    let k = build_knowledge_set(&corpus, &rule, SetParams { n_chains: 1, n_unrelated: 0 }, 0).unwrap();
    let params = ScenarioParams { n_copies: 1, n_edits: 1, max_retries: 3 };
    assert!(matches!(
        generate_edit_scenarios(&corpus, &k, params, 0),
        Err(GenError::PoolTooSmall { .. })
    ));
}

fn set(seed: u64) -> (Corpus, KnowledgeSet) {
    let (corpus, rule) = world();
    let k = build_knowledge_set(&corpus, &rule, SetParams::default(), seed).unwrap();
    (corpus, k)
}

#[test]
fn consistent_diverse_plans_reuse_the_edit_template() {
    let (corpus, k) = set(4);
    let p = assign_templates(&corpus, &k, Setting::CqDt, 4).unwrap();
    assert!(p.uniform.is_empty());
    assert_eq!(p.facts.len(), 29);
    assert_eq!(p.implications.len(), 12);
    assert!(p.facts.iter().chain(&p.implications).all(|e| e.edit == e.eval));
    // diverse: 12 city facts over 3 variants cannot all land on one
    let city: BTreeSet<usize> = p
        .facts
        .iter()
        .filter(|e| e.key.relation.as_str() == "city")
        .map(|e| e.edit)
        .collect();
    assert!(city.len() > 1);
}

#[test]
fn uniform_plans_use_one_template_per_relation() {
    let (corpus, k) = set(4);
    let p = assign_templates(&corpus, &k, Setting::CqUt, 4).unwrap();
    for e in p.facts.iter().chain(&p.implications) {
        assert_eq!(e.edit, e.eval);
        assert_eq!(e.edit, p.uniform[&e.key.relation]);
    }
}

#[test]
fn inconsistent_plans_switch_templates_on_specific_facts() {
    let (corpus, k) = set(4);
    let p = assign_templates(&corpus, &k, Setting::IcqDt, 4).unwrap();
    let specific: BTreeSet<FactKey> = k.specific_facts.iter().map(Fact::key).collect();
    for e in &p.facts {
        if specific.contains(&e.key) {
            assert_ne!(e.edit, e.eval);
            assert_ne!(
                corpus.question(&e.key, e.edit).unwrap(),
                corpus.question(&e.key, e.eval).unwrap()
            );
        } else {
            assert_eq!(e.edit, e.eval);
        }
    }
    // keys outside the plan fall back to (0, 1)
    let outside = FactKey { subject: "P9999".into(), relation: "country".into() };
    assert_eq!(p.variants(&outside), (0, 1));
}

#[test]
fn single_variant_relations() {
    let mut b = Corpus::builder();
    b.relation("city", "city", "Person", "City", &["is from"])
        .relation("country", "country", "City", "Country", &["is located in"])
        .relation("origin", "origin", "Person", "Country", &["is from"])
        .template("city", "Which city was {subject} from?")
        .template("country", "Which country is {subject} in?")
        .template("origin", "Which country was {subject} from?");
    for i in 0..3 {
        b.entity(format!("p{i}"), format!("Person {i}"), "Person")
            .entity(format!("c{i}"), format!("City {i}"), "City")
            .entity(format!("k{i}"), format!("Country {i}"), "Country")
            .fact(format!("p{i}"), "city", format!("c{i}"))
            .fact(format!("c{i}"), "country", format!("k{i}"));
    }
    let corpus = b.build().unwrap();
    let rule = parse_rule(ORIGIN_RULE, &corpus).unwrap();
    let k = build_knowledge_set(&corpus, &rule, SetParams { n_chains: 3, n_unrelated: 0 }, 0).unwrap();
    let dt = assign_templates(&corpus, &k, Setting::CqDt, 0).unwrap();
    let ut = assign_templates(&corpus, &k, Setting::CqUt, 0).unwrap();
    assert_eq!(dt.facts, ut.facts);
    assert!(matches!(
        assign_templates(&corpus, &k, Setting::IcqDt, 0),
        Err(GenError::NotEnoughVariants { available: 1, setting: Setting::IcqDt, .. })
    ));
}

fn bundle(corpus: &Corpus, rule: &Rule, seed: u64) -> SetBundle {
    let kset = build_knowledge_set(corpus, rule, SetParams::default(), seed).unwrap();
    let scenarios = generate_edit_scenarios(corpus, &kset, ScenarioParams::default(), seed).unwrap();
    let plans = Setting::ALL
        .into_iter()
        .map(|s| (s, assign_templates(corpus, &kset, s, seed).unwrap()))
        .collect();
    SetBundle { kset, scenarios, plans }
}

#[test]
fn set_records_round_trip() {
    let (corpus, rule) = world();
    let bundles: Vec<SetBundle> = (0..3).map(|s| bundle(&corpus, &rule, s)).collect();
    let mut buf = Vec::new();
    write_set_records(&bundles, &mut buf).unwrap();
    assert_eq!(read_set_records(buf.as_slice()).unwrap(), bundles);
    let orphan = r#"{"kind":"plan","kset":"x","setting":"CQ_DT","seed":0,"uniform":{},"facts":[],"implications":[]}"#;
    assert_eq!(read_set_records(orphan.as_bytes()).unwrap_err().line, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let (corpus, rule) = world();
        let a = bundle(&corpus, &rule, seed);
        let b = bundle(&corpus, &rule, seed);
        let (mut wa, mut wb) = (Vec::new(), Vec::new());
        write_set_records(&[a], &mut wa).unwrap();
        write_set_records(&[b], &mut wb).unwrap();
        prop_assert_eq!(wa, wb);
    }
}
