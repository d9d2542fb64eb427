//! Establish-and-update simulation and the seven protocol metrics.
//!
//! Specificity and awareness metrics are exact-match rates against gold
//! answers. Consistency metrics compare the updated model with the answers
//! it gave right after establish, so a model that answers UNKNOWN both
//! times is consistent.

mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, AdapterError, Qa, Session};
use crate::generator::{EditScenario, GenError, KnowledgeSet, QuestionPlan, SetBundle, Setting};
use crate::kb::{Corpus, FactKey, KbError};
use crate::rules::RuleError;
use crate::text::answers_match;

pub use report::{aggregate, read_report, write_csv, write_report, Aggregate, ReportRecord};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("no prediction for question `{0}`")]
    MissingPrediction(String),
    #[error("cannot aggregate reports from different settings ({0} and {1})")]
    MixedSettings(Setting, Setting),
    #[error("knowledge set `{0}` has no plan for {1}")]
    MissingPlan(String, Setting),
    #[error("{kset}: {source}")]
    Adapter {
        kset: String,
        #[source]
        source: AdapterError,
    },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exact-match score: the fraction of gold questions whose prediction
/// matches the gold answer after normalization.
pub fn ems(predictions: &[(String, String)], gold: &[(String, String)]) -> Result<f64, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let by_question: HashMap<&str, &str> = predictions
        .iter()
        .map(|(q, a)| (q.as_str(), a.as_str()))
        .collect();
    let mut hits = 0usize;
    for (q, a) in gold {
        let p = by_question
            .get(q.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(q.clone()))?;
        hits += usize::from(answers_match(p, a));
    }
    Ok(hits as f64 / gold.len() as f64)
}

/// Hits over a denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub hits: usize,
    pub total: usize,
}

impl Score {
    pub fn record(&mut self, hit: bool) {
        self.hits += usize::from(hit);
        self.total += 1;
    }

    /// `None` when nothing was asked.
    pub fn rate(self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

impl std::ops::Add for Score {
    type Output = Score;
    fn add(self, o: Score) -> Score {
        Score {
            hits: self.hits + o.hits,
            total: self.total + o.total,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "Est.S")]
    EstS,
    #[serde(rename = "Est.I")]
    EstI,
    #[serde(rename = "Upd.S")]
    UpdS,
    #[serde(rename = "Cons.NS")]
    ConsNs,
    #[serde(rename = "Cons.U")]
    ConsU,
    #[serde(rename = "Upd.I")]
    UpdI,
    #[serde(rename = "Cons.NI")]
    ConsNi,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::EstS,
        Metric::EstI,
        Metric::UpdS,
        Metric::ConsNs,
        Metric::ConsU,
        Metric::UpdI,
        Metric::ConsNi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::EstS => "Est.S",
            Metric::EstI => "Est.I",
            Metric::UpdS => "Upd.S",
            Metric::ConsNs => "Cons.NS",
            Metric::ConsU => "Cons.U",
            Metric::UpdI => "Upd.I",
            Metric::ConsNi => "Cons.NI",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One question asked after establish, with the gold answer and the
/// model's answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answered {
    pub key: FactKey,
    pub question: String,
    pub gold: String,
    pub answer: String,
}

/// Answers recorded right after establish.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstablishedKnowledge {
    pub specific: Vec<Answered>,
    pub unrelated: Vec<Answered>,
    pub implications: Vec<Answered>,
}

impl EstablishedKnowledge {
    fn answer(&self, key: &FactKey) -> Option<&str> {
        self.specific
            .iter()
            .chain(&self.unrelated)
            .chain(&self.implications)
            .find(|a| &a.key == key)
            .map(|a| a.answer.as_str())
    }

    fn score(items: &[Answered]) -> Score {
        let mut s = Score::default();
        for a in items {
            s.record(answers_match(&a.answer, &a.gold));
        }
        s
    }

    pub fn est_s(&self) -> Score {
        Self::score(&self.specific)
    }

    pub fn est_i(&self) -> Score {
        Self::score(&self.implications)
    }
}

/// How a copy of the established model was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CopyMode {
    Snapshot,
    /// The adapter cannot snapshot; the set was established again.
    ReEstablish,
}

/// Metrics for one copy of one knowledge set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyReport {
    pub kset: String,
    pub setting: Setting,
    pub copy: usize,
    pub seed: u64,
    pub mode: CopyMode,
    pub scores: BTreeMap<Metric, Score>,
}

impl CopyReport {
    pub fn score(&self, m: Metric) -> Score {
        self.scores.get(&m).copied().unwrap_or_default()
    }

    pub fn rate(&self, m: Metric) -> Option<f64> {
        self.score(m).rate()
    }
}

fn wrap(kset: &KnowledgeSet) -> impl Fn(AdapterError) -> EvalError + '_ {
    move |source| EvalError::Adapter {
        kset: kset.id.clone(),
        source,
    }
}

/// The pairs given at establish (edit-phase forms) and the rule text.
pub fn establish_payload(
    corpus: &Corpus,
    kset: &KnowledgeSet,
    plan: &QuestionPlan,
) -> Result<(Vec<Qa>, Vec<String>), EvalError> {
    let mut facts = Vec::new();
    for f in kset.specific_facts.iter().chain(&kset.unrelated_facts) {
        let (q, a) = plan.edit_qa(corpus, f)?;
        facts.push(Qa::new(q, a));
    }
    Ok((facts, vec![kset.rule.to_dsl(corpus)?]))
}

/// Gives the set to the model and records its answers to every
/// evaluation-phase question.
pub fn run_establish<A: Adapter>(
    session: &mut Session<A>,
    corpus: &Corpus,
    kset: &KnowledgeSet,
    plan: &QuestionPlan,
) -> Result<EstablishedKnowledge, EvalError> {
    let (facts, rules) = establish_payload(corpus, kset, plan)?;
    session.establish(&facts, &rules).map_err(wrap(kset))?;
    let mut ask = |facts: &mut dyn Iterator<Item = &crate::kb::Fact>| -> Result<Vec<Answered>, EvalError> {
        facts
            .map(|f| {
                let (question, gold) = plan.eval_qa(corpus, f)?;
                let answer = session.query(&question).map_err(wrap(kset))?;
                Ok(Answered {
                    key: f.key(),
                    question,
                    gold,
                    answer,
                })
            })
            .collect()
    };
    Ok(EstablishedKnowledge {
        specific: ask(&mut kset.specific_facts.iter())?,
        unrelated: ask(&mut kset.unrelated_facts.iter())?,
        implications: ask(&mut kset.implied_facts())?,
    })
}

/// Applies one scenario's edits to a copy of the established model and
/// scores the result. The copy must already be in place.
pub fn run_update<A: Adapter>(
    session: &mut Session<A>,
    corpus: &Corpus,
    kset: &KnowledgeSet,
    scenario: &EditScenario,
    plan: &QuestionPlan,
    established: &EstablishedKnowledge,
    mode: CopyMode,
) -> Result<CopyReport, EvalError> {
    let mut edits = Vec::with_capacity(scenario.edits.len());
    for e in &scenario.edits {
        let (q, a) = plan.edit_qa(corpus, &e.fact)?;
        edits.push(Qa::new(q, a));
    }
    session.update(&edits).map_err(wrap(kset))?;

    let mut ask = |key: &FactKey| -> Result<String, EvalError> {
        let q = plan.eval_question(corpus, key)?;
        session.query(&q).map_err(wrap(kset))
    };
    let recorded = |key: &FactKey| established.answer(key).unwrap_or_default().to_owned();

    let mut scores = BTreeMap::new();
    scores.insert(Metric::EstS, established.est_s());
    scores.insert(Metric::EstI, established.est_i());

    let mut s = Score::default();
    for e in &scenario.edits {
        let gold = corpus.surface(&e.fact.object)?;
        s.record(answers_match(&ask(&e.fact.key())?, gold));
    }
    scores.insert(Metric::UpdS, s);

    let mut s = Score::default();
    for f in &scenario.untouched_facts {
        s.record(answers_match(&ask(&f.key())?, &recorded(&f.key())));
    }
    scores.insert(Metric::ConsNs, s);

    let mut s = Score::default();
    for f in &kset.unrelated_facts {
        s.record(answers_match(&ask(&f.key())?, &recorded(&f.key())));
    }
    scores.insert(Metric::ConsU, s);

    let mut s = Score::default();
    for f in &scenario.updated_implications {
        let gold = corpus.surface(&f.object)?;
        s.record(answers_match(&ask(&f.key())?, gold));
    }
    scores.insert(Metric::UpdI, s);

    let mut s = Score::default();
    for key in &scenario.untouched_implications {
        s.record(answers_match(&ask(key)?, &recorded(key)));
    }
    scores.insert(Metric::ConsNi, s);

    Ok(CopyReport {
        kset: kset.id.clone(),
        setting: plan.setting,
        copy: scenario.copy,
        seed: scenario.seed,
        mode,
        scores,
    })
}

/// Runs establish once and every scenario copy of `bundle` under `setting`.
///
/// Copies come from a snapshot when the adapter supports it; otherwise the
/// model is reset and the set established again before each copy.
pub fn simulate<A: Adapter>(
    session: &mut Session<A>,
    corpus: &Corpus,
    bundle: &SetBundle,
    setting: Setting,
) -> Result<Vec<CopyReport>, EvalError> {
    let kset = &bundle.kset;
    let plan = bundle
        .plan(setting)
        .ok_or_else(|| EvalError::MissingPlan(kset.id.clone(), setting))?;
    let established = run_establish(session, corpus, kset, plan)?;
    let snapshot = if session.capabilities().supports_snapshot {
        Some(session.snapshot().map_err(wrap(kset))?)
    } else {
        log::info!("{}: adapter cannot snapshot; re-establishing per copy", kset.id);
        None
    };
    let mut reports = Vec::with_capacity(bundle.scenarios.len());
    for (i, scenario) in bundle.scenarios.iter().enumerate() {
        let mode = match &snapshot {
            Some(id) => {
                if i > 0 {
                    session.restore(id).map_err(wrap(kset))?;
                }
                CopyMode::Snapshot
            }
            None => {
                if i > 0 {
                    session.reset().map_err(wrap(kset))?;
                    let (facts, rules) = establish_payload(corpus, kset, plan)?;
                    session.establish(&facts, &rules).map_err(wrap(kset))?;
                }
                CopyMode::ReEstablish
            }
        };
        reports.push(run_update(session, corpus, kset, scenario, plan, &established, mode)?);
    }
    session.reset().map_err(wrap(kset))?;
    Ok(reports)
}
