use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusBuilder, Entity, EntityId, Fact, KbError, QuestionTemplate, Relation, RelationId};
use crate::jsonl;

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusRecord {
    Entity {
        id: EntityId,
        surface: String,
        etype: String,
    },
    Relation {
        id: RelationId,
        name: String,
        subject_type: String,
        object_type: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        phrases: Vec<String>,
    },
    Template {
        relation: RelationId,
        variant: usize,
        text: String,
    },
    Fact {
        subject: EntityId,
        relation: RelationId,
        object: EntityId,
    },
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, KbError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| KbError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus, KbError> {
    let records = jsonl::read_records::<CorpusRecord, _>(reader).map_err(|e| KbError::Parse {
        line: e.line,
        message: e.message,
    })?;
    let mut builder = CorpusBuilder::default();
    for (line, record) in records {
        match record {
            CorpusRecord::Entity { id, surface, etype } => {
                builder.push_entity(line, Entity { id, surface, etype });
            }
            CorpusRecord::Relation {
                id,
                name,
                subject_type,
                object_type,
                phrases,
            } => {
                builder.push_relation(
                    line,
                    Relation {
                        id,
                        name,
                        subject_type,
                        object_type,
                        phrases,
                    },
                );
            }
            CorpusRecord::Template { relation, variant, text } => {
                builder.push_template(line, QuestionTemplate { relation, variant, text });
            }
            CorpusRecord::Fact {
                subject,
                relation,
                object,
            } => {
                builder.push_fact(line, Fact { subject, relation, object });
            }
        }
    }
    builder.build()
}

/// Records in file order: entities, relations, templates, then facts.
pub fn corpus_records(corpus: &Corpus) -> impl Iterator<Item = CorpusRecord> + '_ {
    let entities = corpus.entities().map(|e| CorpusRecord::Entity {
        id: e.id.clone(),
        surface: e.surface.clone(),
        etype: e.etype.clone(),
    });
    let relations = corpus.relations().map(|r| CorpusRecord::Relation {
        id: r.id.clone(),
        name: r.name.clone(),
        subject_type: r.subject_type.clone(),
        object_type: r.object_type.clone(),
        phrases: r.phrases.clone(),
    });
    let templates = corpus.table().iter().map(|t| CorpusRecord::Template {
        relation: t.relation.clone(),
        variant: t.variant,
        text: t.text.clone(),
    });
    let facts = corpus.facts().iter().map(|f| CorpusRecord::Fact {
        subject: f.subject.clone(),
        relation: f.relation.clone(),
        object: f.object.clone(),
    });
    entities.chain(relations).chain(templates).chain(facts)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> std::io::Result<()> {
    for record in corpus_records(corpus) {
        jsonl::write_record(&mut writer, &record)?;
    }
    writer.flush()
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), KbError> {
    let path = path.as_ref();
    let io_err = |source| KbError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_corpus(corpus, BufWriter::new(file)).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_FACTS: &str = r#"
{"kind":"entity","id":"franklin","surface":"Franklin","etype":"Person"}
{"kind":"entity","id":"nyc","surface":"NYC","etype":"City"}
{"kind":"entity","id":"usa","surface":"USA","etype":"Country"}
{"kind":"relation","id":"city","name":"city","subject_type":"Person","object_type":"City"}
{"kind":"relation","id":"country","name":"country","subject_type":"City","object_type":"Country"}
{"kind":"relation","id":"origin","name":"country of origin","subject_type":"Person","object_type":"Country"}
{"kind":"template","relation":"city","variant":0,"text":"Which city was {subject} from?"}
{"kind":"fact","subject":"franklin","relation":"city","object":"nyc"}
{"kind":"fact","subject":"nyc","relation":"country","object":"usa"}
{"kind":"fact","subject":"franklin","relation":"origin","object":"usa"}
"#;

    #[test]
    fn loads_fixture() {
        let c = read_corpus(THREE_FACTS.as_bytes()).unwrap();
        assert_eq!(c.facts().len(), 3);
        assert_eq!(c.facts_with_entity(&"usa".into()).count(), 2);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = read_corpus("".as_bytes()).unwrap();
        assert_eq!(c.facts().len(), 0);
        assert_eq!(c.entities().count(), 0);
    }

    #[test]
    fn dangling_entity_names_the_reference() {
        let bad = format!(
            "{THREE_FACTS}\n{}",
            r#"{"kind":"fact","subject":"ghost","relation":"city","object":"nyc"}"#
        );
        let err = read_corpus(bad.as_bytes()).unwrap_err();
        match err {
            KbError::DanglingReference { line, what } => {
                assert_eq!(line, 13);
                assert!(what.contains("ghost"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_error_has_line() {
        let err = read_corpus("{\"kind\":\"entity\"}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, KbError::Parse { line: 1, .. }));
    }

    #[test]
    fn load_write_load_is_identity() {
        let c = read_corpus(THREE_FACTS.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_corpus(&c, &mut buf).unwrap();
        let again = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(c, again);
        let mut buf2 = Vec::new();
        write_corpus(&again, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
