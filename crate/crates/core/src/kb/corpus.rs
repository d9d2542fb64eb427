use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{
    Entity, EntityId, Fact, FactKey, KbError, QaPair, QuestionTemplate, Relation, RelationId,
    NO_LINE, SUBJECT_PLACEHOLDER,
};
use crate::text::{is_unknown, normalize};

/// Per-relation question templates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MappingTable {
    templates: BTreeMap<RelationId, Vec<QuestionTemplate>>,
}

impl MappingTable {
    pub fn variants(&self, relation: &RelationId) -> &[QuestionTemplate] {
        self.templates
            .get(relation)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn variant_count(&self, relation: &RelationId) -> usize {
        self.variants(relation).len()
    }

    pub fn template(
        &self,
        relation: &RelationId,
        variant: usize,
    ) -> Result<&QuestionTemplate, KbError> {
        let variants = self
            .templates
            .get(relation)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| KbError::MissingTemplate(relation.clone()))?;
        variants.get(variant).ok_or_else(|| KbError::MissingVariant {
            relation: relation.clone(),
            variant,
            available: variants.len(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &QuestionTemplate> {
        self.templates.values().flatten()
    }
}

/// A template split around its placeholder, in normalized form.
#[derive(Clone, Debug)]
struct CompiledTemplate {
    relation: RelationId,
    prefix: String,
    suffix: String,
}

impl CompiledTemplate {
    fn new(template: &QuestionTemplate) -> Self {
        let (pre, post) = template
            .text
            .split_once(SUBJECT_PLACEHOLDER)
            .expect("validated template");
        Self {
            relation: template.relation.clone(),
            prefix: normalize_edge(pre, true),
            suffix: normalize_edge(post, false),
        }
    }

    /// Returns the normalized subject span if `question` fits this template.
    fn capture<'q>(&self, question: &'q str) -> Option<&'q str> {
        let rest = question.strip_prefix(self.prefix.as_str())?;
        let middle = rest.strip_suffix(self.suffix.as_str())?;
        let middle = middle.trim();
        (!middle.is_empty()).then_some(middle)
    }
}

// Normalizes a template fragment while keeping the whitespace that separates
// it from the placeholder.
fn normalize_edge(fragment: &str, is_prefix: bool) -> String {
    let core = normalize(fragment);
    if core.is_empty() {
        return core;
    }
    if is_prefix && fragment.ends_with(char::is_whitespace) {
        format!("{core} ")
    } else if !is_prefix && fragment.starts_with(char::is_whitespace) {
        format!(" {core}")
    } else {
        core
    }
}

/// Entities, relations, facts and templates with lookup indexes.
///
/// Immutable once built.
#[derive(Clone, Debug)]
pub struct Corpus {
    entities: BTreeMap<EntityId, Entity>,
    relations: BTreeMap<RelationId, Relation>,
    facts: Vec<Fact>,
    table: MappingTable,
    by_relation: BTreeMap<RelationId, Vec<usize>>,
    by_entity: BTreeMap<EntityId, Vec<usize>>,
    by_key: HashMap<FactKey, Vec<usize>>,
    surfaces: HashMap<String, Vec<EntityId>>,
    compiled: Vec<CompiledTemplate>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.relations == other.relations
            && self.facts == other.facts
            && self.table == other.table
    }
}

impl Corpus {
    pub fn builder() -> CorpusBuilder {
        CorpusBuilder::default()
    }

    pub fn empty() -> Self {
        CorpusBuilder::default().build().expect("empty corpus is valid")
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn table(&self) -> &MappingTable {
        &self.table
    }

    pub fn entity(&self, id: &EntityId) -> Result<&Entity, KbError> {
        self.entities
            .get(id)
            .ok_or_else(|| KbError::UnknownEntity(id.clone()))
    }

    pub fn relation(&self, id: &RelationId) -> Result<&Relation, KbError> {
        self.relations
            .get(id)
            .ok_or_else(|| KbError::UnknownRelation(id.clone()))
    }

    pub fn surface(&self, id: &EntityId) -> Result<&str, KbError> {
        self.entity(id).map(|e| e.surface.as_str())
    }

    pub fn facts_with_relation<'a>(
        &'a self,
        relation: &RelationId,
    ) -> impl Iterator<Item = &'a Fact> + 'a {
        self.by_relation
            .get(relation)
            .into_iter()
            .flatten()
            .map(|&i| &self.facts[i])
    }

    pub fn facts_with_entity<'a>(&'a self, entity: &EntityId) -> impl Iterator<Item = &'a Fact> + 'a {
        self.by_entity
            .get(entity)
            .into_iter()
            .flatten()
            .map(|&i| &self.facts[i])
    }

    pub fn facts_with_key<'a>(&'a self, key: &FactKey) -> impl Iterator<Item = &'a Fact> + 'a {
        self.by_key
            .get(key)
            .into_iter()
            .flatten()
            .map(|&i| &self.facts[i])
    }

    /// Distinct objects observed for `relation`, sorted by id.
    pub fn object_pool(&self, relation: &RelationId) -> Vec<EntityId> {
        self.facts_with_relation(relation)
            .map(|f| f.object.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Checks that a fact references known ids with matching types.
    pub fn validate_fact(&self, fact: &Fact) -> Result<(), KbError> {
        let relation = self.relation(&fact.relation)?;
        let subject = self.entity(&fact.subject)?;
        let object = self.entity(&fact.object)?;
        if subject.etype != relation.subject_type || object.etype != relation.object_type {
            return Err(KbError::TypeMismatch {
                fact: fact.to_string(),
                message: format!(
                    "relation expects ({}, {}), got ({}, {})",
                    relation.subject_type, relation.object_type, subject.etype, object.etype
                ),
            });
        }
        Ok(())
    }

    /// Renders the question for `key` using template `variant`.
    pub fn question(&self, key: &FactKey, variant: usize) -> Result<String, KbError> {
        let template = self.table.template(&key.relation, variant)?;
        Ok(template.render(self.surface(&key.subject)?))
    }

    /// Maps a fact to its question-answer pair under template `variant`.
    pub fn fact_to_qa(&self, fact: &Fact, variant: usize) -> Result<QaPair, KbError> {
        self.relation(&fact.relation)?;
        let question = self.question(&fact.key(), variant)?;
        Ok(QaPair {
            question,
            answer: self.surface(&fact.object)?.to_owned(),
            source_fact: fact.clone(),
            variant,
        })
    }

    /// Recovers the (subject, relation) a question asks about.
    ///
    /// `Ok(None)` means no template matched a known subject.
    pub fn parse_question(&self, question: &str) -> Result<Option<FactKey>, KbError> {
        let q = normalize(question);
        let mut found = BTreeSet::new();
        for template in &self.compiled {
            let Some(span) = template.capture(&q) else {
                continue;
            };
            let Some(candidates) = self.surfaces.get(span) else {
                continue;
            };
            let subject_type = &self.relations[&template.relation].subject_type;
            for id in candidates {
                if &self.entities[id].etype == subject_type {
                    found.insert(FactKey {
                        subject: id.clone(),
                        relation: template.relation.clone(),
                    });
                }
            }
        }
        match found.len() {
            0 => Ok(None),
            1 => Ok(found.into_iter().next()),
            _ => Err(KbError::Ambiguous {
                question: question.to_owned(),
                candidates: found
                    .iter()
                    .map(|k| format!("({}, {})", k.subject, k.relation))
                    .collect(),
            }),
        }
    }

    /// Resolves an answer surface to an entity of the given type.
    pub fn resolve_surface(&self, surface: &str, etype: &str) -> Result<Option<EntityId>, KbError> {
        let matches: Vec<&EntityId> = self
            .surfaces
            .get(&normalize(surface))
            .into_iter()
            .flatten()
            .filter(|id| self.entities[*id].etype == etype)
            .collect();
        match matches.as_slice() {
            [] => Ok(None),
            [one] => Ok(Some((*one).clone())),
            many => Err(KbError::Ambiguous {
                question: surface.to_owned(),
                candidates: many.iter().map(|id| id.to_string()).collect(),
            }),
        }
    }

    /// Reverse of [`Corpus::fact_to_qa`]: rebuilds the fact a QA pair states.
    pub fn qa_to_fact(&self, question: &str, answer: &str) -> Result<Option<Fact>, KbError> {
        let Some(key) = self.parse_question(question)? else {
            return Ok(None);
        };
        let object_type = &self.relations[&key.relation].object_type;
        Ok(self
            .resolve_surface(answer, object_type)?
            .map(|object| key.with_object(object)))
    }

    /// Finds the relation named by `phrase` between the two entity types.
    pub fn resolve_phrase(
        &self,
        phrase: &str,
        subject_type: &str,
        object_type: &str,
    ) -> Result<Option<RelationId>, KbError> {
        let wanted = normalize(phrase);
        let hits: Vec<&Relation> = self
            .relations
            .values()
            .filter(|r| r.subject_type == subject_type && r.object_type == object_type)
            .filter(|r| {
                r.phrases.iter().any(|p| normalize(p) == wanted)
                    || normalize(&r.name) == wanted
                    || normalize(r.id.as_str()) == wanted
            })
            .collect();
        match hits.as_slice() {
            [] => Ok(None),
            [one] => Ok(Some(one.id.clone())),
            many => Err(KbError::Ambiguous {
                question: phrase.to_owned(),
                candidates: many.iter().map(|r| r.id.to_string()).collect(),
            }),
        }
    }
}

/// Incremental construction of a [`Corpus`]; `build` checks every invariant.
#[derive(Clone, Debug, Default)]
pub struct CorpusBuilder {
    entities: Vec<(usize, Entity)>,
    relations: Vec<(usize, Relation)>,
    facts: Vec<(usize, Fact)>,
    templates: Vec<(usize, QuestionTemplate)>,
}

impl CorpusBuilder {
    pub fn entity(
        &mut self,
        id: impl Into<String>,
        surface: impl Into<String>,
        etype: impl Into<String>,
    ) -> &mut Self {
        self.push_entity(
            NO_LINE,
            Entity {
                id: EntityId(id.into()),
                surface: surface.into(),
                etype: etype.into(),
            },
        )
    }

    pub fn relation(
        &mut self,
        id: impl Into<String>,
        name: impl Into<String>,
        subject_type: impl Into<String>,
        object_type: impl Into<String>,
        phrases: &[&str],
    ) -> &mut Self {
        self.push_relation(
            NO_LINE,
            Relation {
                id: RelationId(id.into()),
                name: name.into(),
                subject_type: subject_type.into(),
                object_type: object_type.into(),
                phrases: phrases.iter().map(|p| p.to_string()).collect(),
            },
        )
    }

    /// Adds a template as the next variant of `relation`.
    pub fn template(&mut self, relation: impl Into<String>, text: impl Into<String>) -> &mut Self {
        let relation = RelationId(relation.into());
        let variant = self
            .templates
            .iter()
            .filter(|(_, t)| t.relation == relation)
            .count();
        self.push_template(
            NO_LINE,
            QuestionTemplate {
                relation,
                variant,
                text: text.into(),
            },
        )
    }

    pub fn fact(
        &mut self,
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> &mut Self {
        self.push_fact(
            NO_LINE,
            Fact::new(
                EntityId(subject.into()),
                RelationId(relation.into()),
                EntityId(object.into()),
            ),
        )
    }

    pub(crate) fn push_entity(&mut self, line: usize, e: Entity) -> &mut Self {
        self.entities.push((line, e));
        self
    }

    pub(crate) fn push_relation(&mut self, line: usize, r: Relation) -> &mut Self {
        self.relations.push((line, r));
        self
    }

    pub(crate) fn push_template(&mut self, line: usize, t: QuestionTemplate) -> &mut Self {
        self.templates.push((line, t));
        self
    }

    pub(crate) fn push_fact(&mut self, line: usize, f: Fact) -> &mut Self {
        self.facts.push((line, f));
        self
    }

    pub fn build(&self) -> Result<Corpus, KbError> {
        let mut entities = BTreeMap::new();
        let mut surfaces: HashMap<String, Vec<EntityId>> = HashMap::new();
        for (line, e) in &self.entities {
            let line = *line;
            if e.id.0.is_empty() || e.etype.is_empty() {
                return Err(KbError::Invalid {
                    line,
                    message: "entity id and etype must be nonempty".into(),
                });
            }
            if normalize(&e.surface).is_empty() || is_unknown(&e.surface) {
                return Err(KbError::Invalid {
                    line,
                    message: format!("entity `{}` has an empty or reserved surface", e.id),
                });
            }
            if entities.insert(e.id.clone(), e.clone()).is_some() {
                return Err(KbError::DuplicateId {
                    kind: "entity",
                    id: e.id.0.clone(),
                });
            }
            surfaces
                .entry(normalize(&e.surface))
                .or_default()
                .push(e.id.clone());
        }
        for ids in surfaces.values_mut() {
            ids.sort();
        }

        let mut relations = BTreeMap::new();
        for (line, r) in &self.relations {
            if r.id.0.is_empty() || r.subject_type.is_empty() || r.object_type.is_empty() {
                return Err(KbError::Invalid {
                    line: *line,
                    message: "relation id and types must be nonempty".into(),
                });
            }
            if relations.insert(r.id.clone(), r.clone()).is_some() {
                return Err(KbError::DuplicateId {
                    kind: "relation",
                    id: r.id.0.clone(),
                });
            }
        }

        let mut templates: BTreeMap<RelationId, Vec<QuestionTemplate>> = BTreeMap::new();
        for (line, t) in &self.templates {
            let line = *line;
            if !relations.contains_key(&t.relation) {
                return Err(KbError::DanglingReference {
                    line,
                    what: format!("relation `{}`", t.relation),
                });
            }
            if t.text.matches(SUBJECT_PLACEHOLDER).count() != 1 {
                return Err(KbError::Invalid {
                    line,
                    message: format!(
                        "template `{}` must contain {SUBJECT_PLACEHOLDER} exactly once",
                        t.text
                    ),
                });
            }
            templates.entry(t.relation.clone()).or_default().push(t.clone());
        }
        for (relation, list) in templates.iter_mut() {
            list.sort_by_key(|t| t.variant);
            if list.iter().enumerate().any(|(i, t)| t.variant != i) {
                return Err(KbError::Invalid {
                    line: NO_LINE,
                    message: format!("template variants of `{relation}` must be 0..n without gaps"),
                });
            }
        }

        let mut facts = Vec::with_capacity(self.facts.len());
        let mut seen = BTreeSet::new();
        for (line, f) in &self.facts {
            let line = *line;
            for (id, known) in [
                (&f.subject, entities.contains_key(&f.subject)),
                (&f.object, entities.contains_key(&f.object)),
            ] {
                if !known {
                    return Err(KbError::DanglingReference {
                        line,
                        what: format!("entity `{id}`"),
                    });
                }
            }
            let Some(relation) = relations.get(&f.relation) else {
                return Err(KbError::DanglingReference {
                    line,
                    what: format!("relation `{}`", f.relation),
                });
            };
            let (s, o): (&Entity, &Entity) = (&entities[&f.subject], &entities[&f.object]);
            if s.etype != relation.subject_type || o.etype != relation.object_type {
                return Err(KbError::Invalid {
                    line,
                    message: format!(
                        "fact {f}: relation `{}` expects ({}, {}), got ({}, {})",
                        relation.id, relation.subject_type, relation.object_type, s.etype, o.etype
                    ),
                });
            }
            if seen.insert(f.clone()) {
                facts.push(f.clone());
            }
        }

        let mut by_relation: BTreeMap<RelationId, Vec<usize>> = BTreeMap::new();
        let mut by_entity: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
        let mut by_key: HashMap<FactKey, Vec<usize>> = HashMap::new();
        for (i, f) in facts.iter().enumerate() {
            by_relation.entry(f.relation.clone()).or_default().push(i);
            by_entity.entry(f.subject.clone()).or_default().push(i);
            if f.object != f.subject {
                by_entity.entry(f.object.clone()).or_default().push(i);
            }
            by_key.entry(f.key()).or_default().push(i);
        }

        let table = MappingTable { templates };
        let compiled = table.iter().map(CompiledTemplate::new).collect();
        Ok(Corpus {
            entities,
            relations,
            facts,
            table,
            by_relation,
            by_entity,
            by_key,
            surfaces,
            compiled,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn franklin() -> Corpus {
        let mut b = Corpus::builder();
        b.entity("franklin", "Franklin", "Person")
            .entity("demi", "Demi Moore", "Person")
            .entity("rumer", "Rumer Willis", "Person")
            .entity("nyc", "NYC", "City")
            .entity("london", "London", "City")
            .entity("usa", "USA", "Country")
            .relation("city", "city", "Person", "City", &["is from"])
            .relation("child", "child", "Person", "Person", &[])
            .template("city", "Which city was {subject} from?")
            .template("city", "Which city did {subject} originate from?")
            .template("child", "Who was {subject}'s child?")
            .fact("franklin", "city", "nyc")
            .fact("demi", "child", "rumer");
        b.build().unwrap()
    }

    #[test]
    fn renders_both_variants() {
        let c = franklin();
        let f = Fact::new("franklin", "city", "nyc");
        let qa = c.fact_to_qa(&f, 0).unwrap();
        assert_eq!(qa.question, "Which city was Franklin from?");
        assert_eq!(qa.answer, "NYC");
        let qa = c.fact_to_qa(&f, 1).unwrap();
        assert_eq!(qa.question, "Which city did Franklin originate from?");
    }

    #[test]
    fn missing_variant_and_template() {
        let c = franklin();
        let f = Fact::new("demi", "child", "rumer");
        assert_eq!(c.fact_to_qa(&f, 0).unwrap().question, "Who was Demi Moore's child?");
        assert!(matches!(
            c.fact_to_qa(&f, 1),
            Err(KbError::MissingVariant { available: 1, .. })
        ));
        let mut b = Corpus::builder();
        b.entity("a", "A", "T").relation("r", "r", "T", "T", &[]).fact("a", "r", "a");
        let bare = b.build().unwrap();
        assert!(matches!(
            bare.fact_to_qa(&Fact::new("a", "r", "a"), 0),
            Err(KbError::MissingTemplate(_))
        ));
    }

    #[test]
    fn reverse_parse() {
        let c = franklin();
        assert_eq!(
            c.qa_to_fact("Which city was Franklin from?", "NYC").unwrap(),
            Some(Fact::new("franklin", "city", "nyc"))
        );
        assert_eq!(
            c.qa_to_fact("Who was Demi Moore's child?", "Rumer Willis").unwrap(),
            Some(Fact::new("demi", "child", "rumer"))
        );
        assert_eq!(c.qa_to_fact("  which CITY was   franklin from? ", "nyc").unwrap(),
            Some(Fact::new("franklin", "city", "nyc")));
        assert_eq!(c.qa_to_fact("xyzzy?", "NYC").unwrap(), None);
        // known question, unknown answer
        assert_eq!(c.qa_to_fact("Which city was Franklin from?", "Paris").unwrap(), None);
    }

    #[test]
    fn ambiguous_templates_surface_an_error() {
        let mut b = Corpus::builder();
        b.entity("a", "Ann", "P")
            .entity("x", "X", "C")
            .relation("r1", "r1", "P", "C", &[])
            .relation("r2", "r2", "P", "C", &[])
            .template("r1", "Where is {subject}?")
            .template("r2", "Where is {subject}?");
        let c = b.build().unwrap();
        assert!(matches!(
            c.parse_question("Where is Ann?"),
            Err(KbError::Ambiguous { .. })
        ));
    }

    #[test]
    fn phrases_resolve_by_signature() {
        let mut b = Corpus::builder();
        b.relation("city", "city", "Person", "City", &["is from"])
            .relation("origin", "country of origin", "Person", "Country", &["is from"]);
        let c = b.build().unwrap();
        assert_eq!(
            c.resolve_phrase("is from", "Person", "Country").unwrap(),
            Some(RelationId::from("origin"))
        );
        assert_eq!(
            c.resolve_phrase("IS   from", "Person", "City").unwrap(),
            Some(RelationId::from("city"))
        );
        assert_eq!(c.resolve_phrase("is from", "City", "City").unwrap(), None);
    }

    #[test]
    fn rejects_bad_records() {
        let mut b = Corpus::builder();
        b.entity("a", "A", "P").relation("r", "r", "P", "P", &[]).fact("a", "r", "zzz");
        assert!(matches!(b.build(), Err(KbError::DanglingReference { .. })));

        let mut b = Corpus::builder();
        b.relation("r", "r", "P", "P", &[]).template("r", "no placeholder");
        assert!(matches!(b.build(), Err(KbError::Invalid { .. })));

        let mut b = Corpus::builder();
        b.entity("a", "unknown", "P");
        assert!(b.build().is_err());

        let mut b = Corpus::builder();
        b.entity("a", "A", "P").entity("c", "C", "C").relation("r", "r", "P", "P", &[]).fact("a", "r", "c");
        assert!(matches!(b.build(), Err(KbError::Invalid { .. })));
    }

    #[test]
    fn indexes_are_consistent() {
        let c = franklin();
        assert_eq!(c.facts_with_relation(&"city".into()).count(), 1);
        assert_eq!(c.facts_with_entity(&"rumer".into()).count(), 1);
        assert_eq!(c.object_pool(&"city".into()), vec![EntityId::from("nyc")]);
    }
}
