use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Adapter, AdapterError, Capabilities, Qa};
use crate::kb::{Corpus, EntityId, FactKey};
use crate::rules::{forward_chain, parse_rule, Rule};
use crate::seed;
use crate::text::{normalize, UNKNOWN};

const SNAPSHOTS: Capabilities = Capabilities {
    supports_snapshot: true,
};

/// Saved states addressed by `s<n>` ids.
#[derive(Debug)]
struct Snapshots<T> {
    saved: Vec<T>,
}

impl<T: Clone> Snapshots<T> {
    fn new() -> Self {
        Self { saved: Vec::new() }
    }

    fn save(&mut self, state: T) -> String {
        self.saved.push(state);
        format!("s{}", self.saved.len() - 1)
    }

    fn load(&self, id: &str) -> Result<T, AdapterError> {
        id.strip_prefix('s')
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(|n| self.saved.get(n))
            .cloned()
            .ok_or_else(|| AdapterError::UnknownSnapshot(id.to_owned()))
    }

    fn clear(&mut self) {
        self.saved.clear();
    }
}

#[derive(Clone, Debug, Default)]
struct KbState {
    told: BTreeMap<FactKey, EntityId>,
    derived: BTreeMap<FactKey, EntityId>,
}

/// Symbolic fact store keyed by (subject, relation).
///
/// Questions are mapped back to facts through the corpus templates, so any
/// paraphrase of a stored question is answered. With chaining on, the
/// rules given at establish are applied after every change; the oracle is
/// this store with chaining on and no forgetting.
#[derive(Debug)]
pub struct SymbolicKb {
    corpus: Arc<Corpus>,
    chaining: bool,
    depth: usize,
    forget: f64,
    rng: ChaCha8Rng,
    rules: Vec<Rule>,
    state: KbState,
    snapshots: Snapshots<KbState>,
}

impl SymbolicKb {
    fn with(corpus: Arc<Corpus>, chaining: bool, forget: f64, seed_value: u64) -> Self {
        Self {
            corpus,
            chaining,
            depth: 1,
            forget: forget.clamp(0.0, 1.0),
            rng: seed::rng(seed_value, "lossy", 0),
            rules: Vec::new(),
            state: KbState::default(),
            snapshots: Snapshots::new(),
        }
    }

    /// Stores what it is told and derives implications.
    pub fn oracle(corpus: Arc<Corpus>) -> Self {
        Self::with(corpus, true, 0.0, 0)
    }

    /// Stores only what it is told.
    pub fn told(corpus: Arc<Corpus>) -> Self {
        Self::with(corpus, false, 0.0, 0)
    }

    /// Stores what it is told, then forgets each entry with probability `p`
    /// at establish and again on every update. No chaining.
    pub fn lossy(corpus: Arc<Corpus>, p: f64, seed_value: u64) -> Self {
        Self::with(corpus, false, p, seed_value)
    }

    /// Forward-chaining depth used when chaining is on (default 1).
    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth.max(1);
        self
    }

    fn store(&mut self, pairs: &[Qa]) {
        for qa in pairs {
            match self.corpus.qa_to_fact(&qa.q, &qa.a) {
                Ok(Some(f)) => {
                    self.state.told.insert(f.key(), f.object);
                }
                Ok(None) => log::debug!("kb: cannot map {:?} -> {:?} to a fact", qa.q, qa.a),
                Err(e) => log::debug!("kb: {e}"),
            }
        }
    }

    fn forget_some(&mut self) {
        if self.forget > 0.0 {
            let p = self.forget;
            let rng = &mut self.rng;
            self.state.told.retain(|_, _| !rng.random_bool(p));
        }
    }

    fn rederive(&mut self) {
        self.state.derived.clear();
        if !self.chaining || self.rules.is_empty() {
            return;
        }
        let facts: Vec<_> = self
            .state
            .told
            .iter()
            .map(|(k, o)| k.with_object(o.clone()))
            .collect();
        for d in forward_chain(&facts, &self.rules, self.depth).derivations {
            // told facts take precedence; the first derivation wins ties
            if !self.state.told.contains_key(&d.implied.key()) {
                self.state.derived.entry(d.implied.key()).or_insert(d.implied.object);
            }
        }
    }

    fn lookup(&self, question: &str) -> Option<&EntityId> {
        let key = self.corpus.parse_question(question).ok()??;
        self.state.told.get(&key).or_else(|| self.state.derived.get(&key))
    }
}

impl Adapter for SymbolicKb {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(SNAPSHOTS)
    }

    fn establish(&mut self, facts: &[Qa], rules: &[String]) -> Result<(), AdapterError> {
        self.rules = rules
            .iter()
            .enumerate()
            .filter_map(|(i, text)| match parse_rule(text, &self.corpus) {
                Ok(r) => Some(r.with_id(format!("rule-{i}"))),
                Err(e) => {
                    log::debug!("kb: ignoring rule {text:?}: {e}");
                    None
                }
            })
            .collect();
        self.store(facts);
        self.forget_some();
        self.rederive();
        Ok(())
    }

    fn query(&mut self, question: &str) -> Result<String, AdapterError> {
        Ok(match self.lookup(question) {
            Some(id) => self.corpus.surface(id).unwrap_or(UNKNOWN).to_owned(),
            None => UNKNOWN.to_owned(),
        })
    }

    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        self.store(edits);
        self.forget_some();
        self.rederive();
        Ok(())
    }

    fn snapshot(&mut self) -> Result<String, AdapterError> {
        Ok(self.snapshots.save(self.state.clone()))
    }

    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        self.state = self.snapshots.load(id)?;
        Ok(())
    }

    fn reset(&mut self) -> Result<(), AdapterError> {
        self.state = KbState::default();
        self.rules.clear();
        self.snapshots.clear();
        Ok(())
    }
}

/// Answers every question with a uniformly random answer seen so far.
#[derive(Debug)]
pub struct RandomModel {
    seed: u64,
    rng: ChaCha8Rng,
    pool: Vec<String>,
    index: HashMap<String, usize>,
    snapshots: Snapshots<Vec<String>>,
}

impl RandomModel {
    pub fn new(seed_value: u64) -> Self {
        Self {
            seed: seed_value,
            rng: seed::rng(seed_value, "random-model", 0),
            pool: Vec::new(),
            index: HashMap::new(),
            snapshots: Snapshots::new(),
        }
    }

    /// Distinct answers (after normalization) seen so far.
    pub fn pool(&self) -> &[String] {
        &self.pool
    }

    fn observe(&mut self, pairs: &[Qa]) {
        for qa in pairs {
            let n = normalize(&qa.a);
            if !self.index.contains_key(&n) {
                self.index.insert(n, self.pool.len());
                self.pool.push(qa.a.clone());
            }
        }
    }

    fn set_pool(&mut self, pool: Vec<String>) {
        self.index = pool
            .iter()
            .enumerate()
            .map(|(i, a)| (normalize(a), i))
            .collect();
        self.pool = pool;
    }
}

impl Adapter for RandomModel {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(SNAPSHOTS)
    }

    fn establish(&mut self, facts: &[Qa], _rules: &[String]) -> Result<(), AdapterError> {
        self.observe(facts);
        Ok(())
    }

    fn query(&mut self, _question: &str) -> Result<String, AdapterError> {
        Ok(self
            .pool
            .choose(&mut self.rng)
            .cloned()
            .unwrap_or_else(|| UNKNOWN.to_owned()))
    }

    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        self.observe(edits);
        Ok(())
    }

    fn snapshot(&mut self) -> Result<String, AdapterError> {
        Ok(self.snapshots.save(self.pool.clone()))
    }

    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        let pool = self.snapshots.load(id)?;
        self.set_pool(pool);
        Ok(())
    }

    fn reset(&mut self) -> Result<(), AdapterError> {
        self.set_pool(Vec::new());
        self.snapshots.clear();
        self.rng = seed::rng(self.seed, "random-model", 0);
        Ok(())
    }
}

/// Never learns anything: always gives the same answer.
#[derive(Clone, Debug)]
pub struct FrozenModel {
    answer: String,
}

impl FrozenModel {
    pub fn new(answer: impl Into<String>) -> Self {
        Self { answer: answer.into() }
    }
}

impl Default for FrozenModel {
    fn default() -> Self {
        Self::new(UNKNOWN)
    }
}

impl Adapter for FrozenModel {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(SNAPSHOTS)
    }
    fn establish(&mut self, _facts: &[Qa], _rules: &[String]) -> Result<(), AdapterError> {
        Ok(())
    }
    fn query(&mut self, _question: &str) -> Result<String, AdapterError> {
        Ok(self.answer.clone())
    }
    fn update(&mut self, _edits: &[Qa]) -> Result<(), AdapterError> {
        Ok(())
    }
    fn snapshot(&mut self) -> Result<String, AdapterError> {
        Ok("frozen".to_owned())
    }
    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        match id {
            "frozen" => Ok(()),
            _ => Err(AdapterError::UnknownSnapshot(id.to_owned())),
        }
    }
    fn reset(&mut self) -> Result<(), AdapterError> {
        Ok(())
    }
}

/// Memorizes answers by exact question string; paraphrases are unknown.
#[derive(Debug)]
pub struct StringMemoModel {
    memo: HashMap<String, String>,
    snapshots: Snapshots<HashMap<String, String>>,
}

impl StringMemoModel {
    pub fn new() -> Self {
        Self {
            memo: HashMap::new(),
            snapshots: Snapshots::new(),
        }
    }
}

impl Default for StringMemoModel {
    fn default() -> Self {
        Self::new()
    }
}

impl Adapter for StringMemoModel {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(SNAPSHOTS)
    }
    fn establish(&mut self, facts: &[Qa], _rules: &[String]) -> Result<(), AdapterError> {
        self.update(facts)
    }
    fn query(&mut self, question: &str) -> Result<String, AdapterError> {
        Ok(self.memo.get(question).cloned().unwrap_or_else(|| UNKNOWN.to_owned()))
    }
    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        for qa in edits {
            self.memo.insert(qa.q.clone(), qa.a.clone());
        }
        Ok(())
    }
    fn snapshot(&mut self) -> Result<String, AdapterError> {
        Ok(self.snapshots.save(self.memo.clone()))
    }
    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        self.memo = self.snapshots.load(id)?;
        Ok(())
    }
    fn reset(&mut self) -> Result<(), AdapterError> {
        self.memo.clear();
        self.snapshots.clear();
        Ok(())
    }
}
