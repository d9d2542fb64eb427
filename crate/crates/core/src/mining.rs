//! Relation-triangle mining and candidate rule generation.
//!
//! A triangle is three relations closed over three entities. Witnesses are
//! canonicalized as `(e1, r1, e2)`, `(e1, r2, e3)`, `(e2, r3, e3)`: `e1` is
//! the entity with two outgoing facts, `e2` the one with one, `e3` the sink.
//! Directed 3-cycles have no such entity and are not triangles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jsonl;
use crate::kb::{Corpus, EntityId, KbError, RelationId};
use crate::rules::{Pattern, Rule, RuleEntry, RuleError, Var};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationTriangle {
    pub r1: RelationId,
    pub r2: RelationId,
    pub r3: RelationId,
    /// Smallest witness `(e1, e2, e3)` in id order.
    pub witness: [EntityId; 3],
    /// Number of distinct witness triples.
    pub support: usize,
}

impl RelationTriangle {
    pub fn relations(&self) -> [&RelationId; 3] {
        [&self.r1, &self.r2, &self.r3]
    }
}

type Witnesses = BTreeMap<(RelationId, RelationId, RelationId), BTreeSet<[EntityId; 3]>>;

/// Every relation triple with at least `min_support` distinct witnesses,
/// sorted by relation ids.
pub fn mine_relation_cliques(corpus: &Corpus, min_support: usize) -> Vec<RelationTriangle> {
    let mut between: HashMap<(&EntityId, &EntityId), Vec<&RelationId>> = HashMap::new();
    for f in corpus.facts() {
        between.entry((&f.subject, &f.object)).or_default().push(&f.relation);
    }
    let relations: Vec<&RelationId> = corpus.relations().map(|r| &r.id).collect();

    let merged: Witnesses = relations
        .par_iter()
        .map(|r1| {
            let mut found = Witnesses::new();
            for first in corpus.facts_with_relation(r1) {
                let (e1, e2) = (&first.subject, &first.object);
                if e1 == e2 {
                    continue;
                }
                for second in corpus.facts_with_entity(e1) {
                    let e3 = &second.object;
                    if &second.subject != e1 || e3 == e1 || e3 == e2 {
                        continue;
                    }
                    let Some(closing) = between.get(&(e2, e3)) else {
                        continue;
                    };
                    for r3 in closing {
                        found
                            .entry(((*r1).clone(), second.relation.clone(), (*r3).clone()))
                            .or_default()
                            .insert([e1.clone(), e2.clone(), e3.clone()]);
                    }
                }
            }
            found
        })
        .reduce(Witnesses::new, |mut a, b| {
            for (k, v) in b {
                a.entry(k).or_default().extend(v);
            }
            a
        });

    merged
        .into_iter()
        .filter(|(_, w)| w.len() >= min_support.max(1))
        .map(|((r1, r2, r3), w)| RelationTriangle {
            r1,
            r2,
            r3,
            support: w.len(),
            witness: w.into_iter().next().expect("nonempty"),
        })
        .collect()
}

/// Plausibility rating of a candidate rule by one annotator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    /// Must be true.
    A,
    /// Likely to be true.
    B,
    /// Unlikely to be true.
    C,
    /// Must be false.
    D,
    /// Premises are not useful for the consequence.
    E,
}

impl Label {
    pub fn is_plausible(self) -> bool {
        matches!(self, Label::A | Label::B)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Label::A => "a",
            Label::B => "b",
            Label::C => "c",
            Label::D => "d",
            Label::E => "e",
        };
        f.write_str(c)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plausibility {
    #[default]
    Unrated,
    Rated(Label, Label),
}

impl Plausibility {
    pub fn accepted(self) -> bool {
        matches!(self, Plausibility::Rated(a, b) if a.is_plausible() && b.is_plausible())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateRule {
    pub rule: Rule,
    pub triangle: [RelationId; 3],
    /// 1-based position of the implication relation within the triangle.
    pub implication: usize,
    pub support: usize,
    pub plausibility: Plausibility,
}

impl CandidateRule {
    pub fn to_entry(&self) -> RuleEntry {
        let mut meta = BTreeMap::new();
        meta.insert(
            "triangle".to_owned(),
            format!("{},{},{}", self.triangle[0], self.triangle[1], self.triangle[2]),
        );
        meta.insert("implication".to_owned(), format!("r{}", self.implication));
        meta.insert("support".to_owned(), self.support.to_string());
        if let Plausibility::Rated(a, b) = self.plausibility {
            meta.insert("labels".to_owned(), format!("{a}{b}"));
        }
        RuleEntry {
            rule: self.rule.clone(),
            meta,
        }
    }
}

fn letter(i: usize) -> String {
    char::from(b'A' + (i % 26) as u8).to_string()
}

/// Three rules per triangle, each relation serving once as implication.
pub fn generate_candidate_rules(
    triangle: &RelationTriangle,
    corpus: &Corpus,
) -> Result<[CandidateRule; 3], RuleError> {
    for r in triangle.relations() {
        corpus.table().template(r, 0)?;
    }
    let rel1 = corpus.relation(&triangle.r1)?;
    let rel2 = corpus.relation(&triangle.r2)?;
    let (t1, t2, t3) = (&rel1.subject_type, &rel1.object_type, &rel2.object_type);

    let mut used: HashMap<String, usize> = HashMap::new();
    let mut var = |t: &String| -> Var {
        let n = used.entry(t.clone()).or_default();
        let v = Var::new(t.clone(), letter(*n));
        *n += 1;
        v
    };
    let (v1, v2, v3) = (var(t1), var(t2), var(t3));

    let p1 = Pattern::new(v1.clone(), triangle.r1.clone(), v2.clone());
    let p2 = Pattern::new(v1, triangle.r2.clone(), v3.clone());
    let p3 = Pattern::new(v2, triangle.r3.clone(), v3);

    let id = |pos: usize| format!("tri:{}:{}:{}:i{pos}", triangle.r1, triangle.r2, triangle.r3);
    let make = |pos: usize, a: &Pattern, b: &Pattern, imp: &Pattern| -> Result<CandidateRule, RuleError> {
        let rule = Rule::new(id(pos), a.clone(), b.clone(), imp.clone())?;
        rule.check_types(corpus)?;
        Ok(CandidateRule {
            rule,
            triangle: [triangle.r1.clone(), triangle.r2.clone(), triangle.r3.clone()],
            implication: pos,
            support: triangle.support,
            plausibility: Plausibility::Unrated,
        })
    };
    Ok([
        make(1, &p2, &p3, &p1)?,
        make(2, &p1, &p3, &p2)?,
        make(3, &p2, &p1, &p3)?,
    ])
}

/// One line of a label file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub rule_id: String,
    pub label1: String,
    pub label2: String,
}

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: malformed label `{label}` (expected one of a-e)")]
    MalformedLabel { line: usize, label: String },
    #[error("line {line}: unknown rule id `{rule_id}`")]
    UnknownRule { line: usize, rule_id: String },
    #[error(transparent)]
    Kb(#[from] KbError),
}

fn parse_label(line: usize, s: &str) -> Result<Label, LabelError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "a" => Ok(Label::A),
        "b" => Ok(Label::B),
        "c" => Ok(Label::C),
        "d" => Ok(Label::D),
        "e" => Ok(Label::E),
        _ => Err(LabelError::MalformedLabel {
            line,
            label: s.to_owned(),
        }),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LabelSummary {
    pub candidates: usize,
    pub rated: usize,
    pub kept: usize,
    pub dropped: usize,
}

/// Applies ratings from a label file and keeps the rules both annotators
/// rated (a) or (b).
pub fn apply_plausibility_labels<R: BufRead>(
    reader: R,
    candidates: &mut [CandidateRule],
) -> Result<(Vec<CandidateRule>, LabelSummary), LabelError> {
    let records = jsonl::read_records::<LabelRecord, _>(reader).map_err(|e| LabelError::Parse {
        line: e.line,
        message: e.message,
    })?;
    let index: HashMap<String, usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.rule.id.clone(), i))
        .collect();
    for (line, rec) in records {
        let Some(&i) = index.get(&rec.rule_id) else {
            return Err(LabelError::UnknownRule {
                line,
                rule_id: rec.rule_id,
            });
        };
        candidates[i].plausibility =
            Plausibility::Rated(parse_label(line, &rec.label1)?, parse_label(line, &rec.label2)?);
    }
    let kept: Vec<CandidateRule> = candidates
        .iter()
        .filter(|c| c.plausibility.accepted())
        .cloned()
        .collect();
    let rated = candidates
        .iter()
        .filter(|c| c.plausibility != Plausibility::Unrated)
        .count();
    let summary = LabelSummary {
        candidates: candidates.len(),
        rated,
        kept: kept.len(),
        dropped: candidates.len() - kept.len(),
    };
    Ok((kept, summary))
}

pub fn load_plausibility_labels(
    path: impl AsRef<Path>,
    candidates: &mut [CandidateRule],
) -> Result<(Vec<CandidateRule>, LabelSummary), LabelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| KbError::Io {
        path: path.to_owned(),
        source,
    })?;
    apply_plausibility_labels(std::io::BufReader::new(file), candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rule;
    use crate::synth;

    #[test]
    fn franklin_world_has_the_origin_triangle() {
        let mut b = Corpus::builder();
        b.relation("city", "city", "Person", "City", &["is from"])
            .relation("country", "country", "City", "Country", &["is located in"])
            .relation("origin", "origin", "Person", "Country", &["is from"])
            .template("city", "Which city was {subject} from?")
            .template("country", "Which country is {subject} in?")
            .template("origin", "Which country was {subject} from?")
            .entity("f", "Franklin", "Person")
            .entity("nyc", "NYC", "City")
            .entity("usa", "USA", "Country")
            .fact("f", "city", "nyc")
            .fact("nyc", "country", "usa")
            .fact("f", "origin", "usa");
        let c = b.build().unwrap();
        let tri = mine_relation_cliques(&c, 1);
        assert_eq!(tri.len(), 1);
        assert_eq!(
            (tri[0].r1.as_str(), tri[0].r2.as_str(), tri[0].r3.as_str()),
            ("city", "origin", "country")
        );
        let rules = generate_candidate_rules(&tri[0], &c).unwrap();
        let texts: Vec<String> = rules.iter().map(|r| r.rule.to_dsl(&c).unwrap()).collect();
        assert!(texts.contains(&"If [Person A] is from [City A], and [City A] is located in [Country A], then [Person A] is from [Country A].".to_owned()));
        for (r, t) in rules.iter().zip(&texts) {
            assert_eq!(parse_rule(t, &c).unwrap().with_id(r.rule.id.clone()), r.rule);
        }
        assert!(mine_relation_cliques(&c, 2).is_empty());
    }

    #[test]
    fn airport_rule_renders_like_the_annotation_example() {
        let mut b = Corpus::builder();
        b.relation("located", "located in", "Airport", "Country", &["is located in"])
            .relation("hub", "part of", "Airport", "AirlineHub", &["is part of"])
            .relation("hub_country", "hub country", "AirlineHub", "Country", &["is located in"])
            .template("located", "Which country is {subject} in?")
            .template("hub", "Which airline hub is {subject} part of?")
            .template("hub_country", "Which country is the hub {subject} in?")
            .entity("jfk", "JFK", "Airport")
            .entity("us", "USA", "Country")
            .entity("h", "Delta hub", "AirlineHub")
            .fact("jfk", "located", "us")
            .fact("jfk", "hub", "h")
            .fact("h", "hub_country", "us");
        let c = b.build().unwrap();
        let tri = mine_relation_cliques(&c, 1);
        assert_eq!(tri.len(), 1);
        let rules = generate_candidate_rules(&tri[0], &c).unwrap();
        let fork = rules.iter().find(|r| r.implication == 3).unwrap();
        assert_eq!(
            fork.rule.to_dsl(&c).unwrap(),
            "If [Airport A] is located in [Country A], and [Airport A] is part of [AirlineHub A], then [AirlineHub A] is located in [Country A]."
        );
    }

    #[test]
    fn same_typed_variables_get_distinct_labels() {
        let mut b = Corpus::builder();
        b.relation("parent", "parent", "Person", "Person", &["is the parent of"])
            .relation("teacher", "teacher", "Person", "Person", &["taught"])
            .relation("friend", "friend", "Person", "Person", &["is a friend of"])
            .template("parent", "Who is {subject}'s child?")
            .template("teacher", "Whom did {subject} teach?")
            .template("friend", "Who is {subject}'s friend?")
            .entity("a", "Ann", "Person")
            .entity("b", "Bob", "Person")
            .entity("c", "Cy", "Person")
            .fact("a", "parent", "b")
            .fact("a", "teacher", "c")
            .fact("b", "friend", "c");
        let c = b.build().unwrap();
        let tri = mine_relation_cliques(&c, 1);
        let rules = generate_candidate_rules(&tri[0], &c).unwrap();
        let text = rules[2].rule.to_dsl(&c).unwrap();
        assert!(text.contains("[Person A]") && text.contains("[Person B]") && text.contains("[Person C]"));
    }

    #[test]
    fn no_shared_entities_no_triangles() {
        let (c, _) = synth::planted_triangles(0, 0, 60, 4);
        assert!(mine_relation_cliques(&c, 1).is_empty());
    }

    #[test]
    fn missing_template_is_reported() {
        let mut b = Corpus::builder();
        b.relation("r1", "r1", "A", "B", &[])
            .relation("r2", "r2", "A", "C", &[])
            .relation("r3", "r3", "B", "C", &[])
            .template("r1", "q {subject}?")
            .template("r2", "q {subject}?")
            .entity("a", "a", "A")
            .entity("b", "b", "B")
            .entity("c", "c", "C")
            .fact("a", "r1", "b")
            .fact("a", "r2", "c")
            .fact("b", "r3", "c");
        let c = b.build().unwrap();
        let tri = mine_relation_cliques(&c, 1);
        assert!(matches!(
            generate_candidate_rules(&tri[0], &c),
            Err(RuleError::Kb(KbError::MissingTemplate(_)))
        ));
    }

    fn candidates() -> Vec<CandidateRule> {
        let (c, _) = synth::planted_triangles(1, 1, 0, 1);
        let tri = mine_relation_cliques(&c, 1);
        generate_candidate_rules(&tri[0], &c).unwrap().to_vec()
    }

    #[test]
    fn labels_require_agreement_on_a_or_b() {
        let mut cands = candidates();
        let ids: Vec<String> = cands.iter().map(|c| c.rule.id.clone()).collect();
        let file = format!(
            "{}\n{}\n{}\n",
            jsonl::to_line(&LabelRecord { rule_id: ids[0].clone(), label1: "a".into(), label2: "b".into() }),
            jsonl::to_line(&LabelRecord { rule_id: ids[1].clone(), label1: "a".into(), label2: "c".into() }),
            jsonl::to_line(&LabelRecord { rule_id: ids[2].clone(), label1: "d".into(), label2: "d".into() }),
        );
        let (kept, summary) = apply_plausibility_labels(file.as_bytes(), &mut cands).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].rule.id, ids[0]);
        assert_eq!(summary, LabelSummary { candidates: 3, rated: 3, kept: 1, dropped: 2 });
    }

    #[test]
    fn label_errors() {
        let mut cands = candidates();
        let bad = r#"{"rule_id":"nope","label1":"a","label2":"a"}"#;
        assert!(matches!(
            apply_plausibility_labels(bad.as_bytes(), &mut cands),
            Err(LabelError::UnknownRule { line: 1, .. })
        ));
        let bad = format!(
            r#"{{"rule_id":"{}","label1":"z","label2":"a"}}"#,
            cands[0].rule.id
        );
        assert!(matches!(
            apply_plausibility_labels(bad.as_bytes(), &mut cands),
            Err(LabelError::MalformedLabel { .. })
        ));
    }
}
