use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenError, KnowledgeSet};
use crate::kb::{Corpus, Fact, FactKey, RelationId};
use crate::seed;

/// Questioning setting: consistent or inconsistent questioning between the
/// edit and evaluation phases, crossed with uniform or diverse templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "CQ_DT")]
    CqDt,
    #[serde(rename = "CQ_UT")]
    CqUt,
    #[serde(rename = "ICQ_DT")]
    IcqDt,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::CqDt, Setting::CqUt, Setting::IcqDt];

    pub fn consistent(self) -> bool {
        !matches!(self, Setting::IcqDt)
    }

    pub fn uniform(self) -> bool {
        matches!(self, Setting::CqUt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::CqDt => "CQ_DT",
            Setting::CqUt => "CQ_UT",
            Setting::IcqDt => "ICQ_DT",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setting::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown setting `{s}` (expected CQ_DT, CQ_UT or ICQ_DT)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub key: FactKey,
    /// Template variant used to give the fact to the model.
    pub edit: usize,
    /// Template variant used to ask about the fact.
    pub eval: usize,
}

/// Template choices for every question of one knowledge set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionPlan {
    pub kset: String,
    pub setting: Setting,
    pub seed: u64,
    /// Relation-wide variant under uniform templates; empty otherwise.
    pub uniform: BTreeMap<RelationId, usize>,
    pub facts: Vec<PlanEntry>,
    pub implications: Vec<PlanEntry>,
}

impl QuestionPlan {
    /// (edit, eval) variants for a fact key.
    ///
    /// Keys outside the plan (facts injected by an edit batch) use the
    /// relation's uniform variant, or variant 0 for editing and 1 for
    /// evaluation under inconsistent questioning.
    pub fn variants(&self, key: &FactKey) -> (usize, usize) {
        if let Some(e) = self
            .facts
            .iter()
            .chain(&self.implications)
            .find(|e| &e.key == key)
        {
            return (e.edit, e.eval);
        }
        let base = self.uniform.get(&key.relation).copied().unwrap_or(0);
        if self.setting.consistent() {
            (base, base)
        } else {
            (0, 1)
        }
    }

    pub fn edit_question(&self, corpus: &Corpus, key: &FactKey) -> Result<String, GenError> {
        Ok(corpus.question(key, self.variants(key).0)?)
    }

    pub fn eval_question(&self, corpus: &Corpus, key: &FactKey) -> Result<String, GenError> {
        Ok(corpus.question(key, self.variants(key).1)?)
    }

    /// Question-answer pair for `fact` in the edit-phase form.
    pub fn edit_qa(&self, corpus: &Corpus, fact: &Fact) -> Result<(String, String), GenError> {
        Ok((
            self.edit_question(corpus, &fact.key())?,
            corpus.surface(&fact.object)?.to_owned(),
        ))
    }

    /// Question-answer pair for `fact` in the evaluation form.
    pub fn eval_qa(&self, corpus: &Corpus, fact: &Fact) -> Result<(String, String), GenError> {
        Ok((
            self.eval_question(corpus, &fact.key())?,
            corpus.surface(&fact.object)?.to_owned(),
        ))
    }
}

fn pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.random_range(0..n)
}

fn pick_other(rng: &mut ChaCha8Rng, n: usize, avoid: usize) -> usize {
    let i = rng.random_range(0..n - 1);
    if i >= avoid {
        i + 1
    } else {
        i
    }
}

/// Chooses question templates for every fact and implication of `kset`.
pub fn assign_templates(
    corpus: &Corpus,
    kset: &KnowledgeSet,
    setting: Setting,
    seed_value: u64,
) -> Result<QuestionPlan, GenError> {
    let table = corpus.table();
    let count = |r: &RelationId| -> Result<usize, GenError> {
        match table.variant_count(r) {
            0 => Err(crate::kb::KbError::MissingTemplate(r.clone()).into()),
            n => Ok(n),
        }
    };
    if !setting.consistent() {
        for p in &kset.rule.premises {
            let available = count(&p.relation)?;
            if available < 2 {
                return Err(GenError::NotEnoughVariants {
                    relation: p.relation.to_string(),
                    available,
                    setting,
                });
            }
        }
    }

    let mut rng = seed::rng(seed_value, setting.as_str(), 0);
    let mut uniform = BTreeMap::new();
    if setting.uniform() {
        let relations: std::collections::BTreeSet<&RelationId> = kset
            .specific_facts
            .iter()
            .chain(&kset.unrelated_facts)
            .chain(kset.implied_facts())
            .map(|f| &f.relation)
            .collect();
        for r in relations {
            let n = count(r)?;
            uniform.insert(r.clone(), pick(&mut rng, n));
        }
    }

    let base = |rng: &mut ChaCha8Rng, r: &RelationId| -> Result<(usize, usize), GenError> {
        let n = count(r)?;
        Ok(match uniform.get(r) {
            Some(&v) => (v, n),
            None => (pick(rng, n), n),
        })
    };

    let mut facts = Vec::new();
    for f in &kset.specific_facts {
        let (edit, n) = base(&mut rng, &f.relation)?;
        let eval = if setting.consistent() {
            edit
        } else {
            pick_other(&mut rng, n, edit)
        };
        facts.push(PlanEntry {
            key: f.key(),
            edit,
            eval,
        });
    }
    for f in &kset.unrelated_facts {
        let (v, _) = base(&mut rng, &f.relation)?;
        facts.push(PlanEntry {
            key: f.key(),
            edit: v,
            eval: v,
        });
    }
    let mut implications = Vec::new();
    for f in kset.implied_facts() {
        let (v, _) = base(&mut rng, &f.relation)?;
        implications.push(PlanEntry {
            key: f.key(),
            edit: v,
            eval: v,
        });
    }
    Ok(QuestionPlan {
        kset: kset.id.clone(),
        setting,
        seed: seed_value,
        uniform,
        facts,
        implications,
    })
}
