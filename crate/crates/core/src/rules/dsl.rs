//! Parser for rule text of the form
//! `If [T A] phrase [T B], and [T B] phrase [U A], then [T A] phrase [U A].`

use super::{Pattern, Rule, RuleError, Var};
use crate::kb::Corpus;
use crate::text::normalize;

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, RuleError> {
        Err(RuleError::Syntax {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), RuleError> {
        self.skip_ws();
        let rest = self.rest();
        let ok = rest.len() >= word.len()
            && rest.is_char_boundary(word.len())
            && rest[..word.len()].eq_ignore_ascii_case(word)
            && rest[word.len()..]
                .chars()
                .next()
                .is_none_or(|c| c.is_whitespace() || c == '[');
        if !ok {
            return self.error(format!("expected `{word}`"));
        }
        self.pos += word.len();
        Ok(())
    }

    fn var(&mut self) -> Result<Var, RuleError> {
        if !self.eat('[') {
            return self.error("expected `[`");
        }
        let start = self.pos;
        let Some(len) = self.rest().find(']') else {
            return self.error("unterminated `[`");
        };
        let inner = &self.src[start..start + len];
        if inner.contains('[') {
            return self.error("nested `[`");
        }
        let var = Var::try_from(inner.to_owned()).map_err(|message| RuleError::Syntax {
            pos: start,
            message,
        })?;
        self.pos = start + len + 1;
        Ok(var)
    }

    fn phrase(&mut self) -> Result<&'a str, RuleError> {
        self.skip_ws();
        let Some(len) = self.rest().find('[') else {
            return self.error("expected a relation phrase followed by `[`");
        };
        let phrase = self.rest()[..len].trim();
        if phrase.is_empty() {
            return self.error("empty relation phrase");
        }
        self.pos += len;
        Ok(phrase)
    }

    fn clause(&mut self, corpus: &Corpus) -> Result<Pattern, RuleError> {
        let subject = self.var()?;
        let phrase = self.phrase()?;
        let object = self.var()?;
        let relation = resolve(corpus, phrase, &subject, &object)?;
        Ok(Pattern {
            relation,
            subject,
            object,
        })
    }
}

fn resolve(
    corpus: &Corpus,
    phrase: &str,
    subject: &Var,
    object: &Var,
) -> Result<crate::kb::RelationId, RuleError> {
    if let Some(id) = corpus.resolve_phrase(phrase, &subject.etype, &object.etype)? {
        return Ok(id);
    }
    let wanted = normalize(phrase);
    let named = corpus.relations().find(|r| {
        r.phrases.iter().any(|p| normalize(p) == wanted) || normalize(&r.name) == wanted
    });
    match named {
        Some(r) => Err(RuleError::TypeMismatch {
            relation: r.id.clone(),
            expected_subject: r.subject_type.clone(),
            expected_object: r.object_type.clone(),
            subject: subject.etype.clone(),
            object: object.etype.clone(),
        }),
        None => Err(RuleError::UnknownRelation {
            phrase: phrase.to_owned(),
            subject_type: subject.etype.clone(),
            object_type: object.etype.clone(),
        }),
    }
}

/// Parses one rule, resolving relation phrases against `corpus`.
///
/// The returned rule has id `rule`; callers that manage several rules assign
/// their own with [`Rule::with_id`].
pub fn parse_rule(text: &str, corpus: &Corpus) -> Result<Rule, RuleError> {
    let mut c = Cursor { src: text, pos: 0 };
    c.keyword("if")?;
    let p1 = c.clause(corpus)?;
    c.eat(',');
    c.keyword("and")?;
    let p2 = c.clause(corpus)?;
    c.eat(',');
    c.keyword("then")?;
    let imp = c.clause(corpus)?;
    c.eat('.');
    c.skip_ws();
    if !c.rest().is_empty() {
        return c.error("trailing text after rule");
    }
    Rule::new("rule", p1, p2, imp)
}
