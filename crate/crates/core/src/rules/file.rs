//! Rule files: one rule per line in the DSL, optionally preceded by a
//! `# id=<rule-id> key=value ...` metadata header.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{parse_rule, Rule, RuleError};
use crate::kb::Corpus;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleEntry {
    pub rule: Rule,
    /// Header fields other than `id`.
    pub meta: BTreeMap<String, String>,
}

fn parse_header(line: &str) -> BTreeMap<String, String> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

/// Reads a rule file. Rules without an `id` header are named `rule-<n>`
/// after their 1-based position.
pub fn read_rules<R: BufRead>(reader: R, corpus: &Corpus) -> Result<Vec<RuleEntry>, RuleError> {
    let mut out = Vec::new();
    let mut header: Option<BTreeMap<String, String>> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            header = Some(parse_header(rest));
            continue;
        }
        let mut meta = header.take().unwrap_or_default();
        let rule = parse_rule(trimmed, corpus)
            .and_then(|r| r.check_types(corpus).map(|_| r))
            .map_err(|e| RuleError::AtLine {
                line: i + 1,
                source: Box::new(e),
            })?;
        let id = meta
            .remove("id")
            .unwrap_or_else(|| format!("rule-{}", out.len() + 1));
        out.push(RuleEntry {
            rule: rule.with_id(id),
            meta,
        });
    }
    Ok(out)
}

pub fn write_rules<W: Write>(
    entries: &[RuleEntry],
    corpus: &Corpus,
    mut writer: W,
) -> Result<(), RuleError> {
    for entry in entries {
        write!(writer, "# id={}", entry.rule.id)?;
        for (k, v) in &entry.meta {
            write!(writer, " {k}={v}")?;
        }
        writeln!(writer)?;
        writeln!(writer, "{}", entry.rule.to_dsl(corpus)?)?;
    }
    writer.flush()?;
    Ok(())
}
