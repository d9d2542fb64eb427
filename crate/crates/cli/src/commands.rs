//! `synth`, `mine`, `gen`, `run` and `report`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context};
use editsim::adapter::{Adapter, Session};
use editsim::eval::{aggregate, simulate, write_csv, write_report, Aggregate, CopyReport, ReportRecord};
use editsim::generator::{
    assign_templates, build_knowledge_set, generate_edit_scenarios, read_set_records,
    write_set_records, GenError, SetBundle, Setting,
};
use editsim::kb::{load_corpus, save_corpus, Corpus, KbError};
use editsim::mining::{generate_candidate_rules, load_plausibility_labels, mine_relation_cliques, LabelSummary};
use editsim::rules::{parse_rule, read_rules, write_rules, RuleEntry};
use editsim::{jsonl, seed, synth};

use crate::manifest::{Failure, Manifest, SessionCounts};
use crate::spec::{AdapterSpec, BuildContext};
use crate::{AdapterInitError, RunConfig};

pub const SETS_FILE: &str = "sets.jsonl";
pub const REPORT_FILE: &str = "report.jsonl";
pub const CSV_FILE: &str = "report.csv";
pub const TRIANGLES_FILE: &str = "triangles.jsonl";
pub const CANDIDATES_FILE: &str = "candidates.rules";
pub const PLAUSIBLE_FILE: &str = "plausible.rules";

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load(path: &Path) -> anyhow::Result<Corpus> {
    load_corpus(path).map_err(|e| match e {
        // already names the path
        KbError::Io { .. } => e.into(),
        e => anyhow::Error::new(e).context(format!("invalid corpus {}", path.display())),
    })
}

pub fn load_rules(path: &Path, corpus: &Corpus) -> anyhow::Result<Vec<RuleEntry>> {
    read_rules(open(path)?, corpus).with_context(|| format!("invalid rule file {}", path.display()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// People, cities and countries with the origin rule.
    Geography,
    /// The three-person fixture with the origin rule.
    Franklin,
    /// `k` planted relation triangles plus noise; no rule file.
    Planted(usize),
}

/// Writes a synthetic corpus (and rule file, when the kind has a rule)
/// into `out_dir`. Returns the written paths.
pub fn synth(kind: SynthKind, seed_value: u64, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let corpus = match kind {
        SynthKind::Geography => synth::geography(Default::default(), seed_value),
        SynthKind::Franklin => synth::franklin(),
        SynthKind::Planted(k) => synth::planted_triangles(k, 3, 400, seed_value).0,
    };
    let corpus_path = out_dir.join("corpus.jsonl");
    save_corpus(&corpus, &corpus_path)?;
    let mut written = vec![corpus_path];
    if !matches!(kind, SynthKind::Planted(_)) {
        let rule = parse_rule(synth::ORIGIN_RULE, &corpus)?.with_id("origin");
        let rules_path = out_dir.join("rules.txt");
        let entry = RuleEntry { rule, meta: BTreeMap::new() };
        write_rules(&[entry], &corpus, create(&rules_path)?)?;
        written.push(rules_path);
    }
    Ok(written)
}

#[derive(Clone, Debug)]
pub struct MineOutcome {
    pub triangles: usize,
    pub candidates: usize,
    pub labels: Option<LabelSummary>,
    pub manifest: Manifest,
}

/// Mines relation triangles from `config.corpus` and writes the triangles
/// and their candidate rules; with `config.labels`, also the rules that
/// pass the plausibility filter.
pub fn mine(config: &RunConfig) -> anyhow::Result<MineOutcome> {
    config.validate()?;
    let corpus = load(&config.corpus)?;
    let triangles = mine_relation_cliques(&corpus, config.min_support);
    let mut candidates = Vec::with_capacity(triangles.len() * 3);
    for t in &triangles {
        candidates.extend(generate_candidate_rules(t, &corpus)?);
    }

    let out = &config.out_dir;
    let mut w = create(&out.join(TRIANGLES_FILE))?;
    for t in &triangles {
        jsonl::write_record(&mut w, t)?;
    }
    std::io::Write::flush(&mut w)?;
    let entries: Vec<RuleEntry> = candidates.iter().map(|c| c.to_entry()).collect();
    write_rules(&entries, &corpus, create(&out.join(CANDIDATES_FILE))?)?;

    let mut manifest = Manifest::new("mine", config);
    manifest.add_input(&config.corpus)?;
    let labels = match &config.labels {
        Some(path) => {
            let (kept, summary) = load_plausibility_labels(path, &mut candidates)?;
            let entries: Vec<RuleEntry> = kept.iter().map(|c| c.to_entry()).collect();
            write_rules(&entries, &corpus, create(&out.join(PLAUSIBLE_FILE))?)?;
            manifest.add_input(path)?;
            manifest.add_artifact(out, PLAUSIBLE_FILE)?;
            Some(summary)
        }
        None => None,
    };
    manifest.add_artifact(out, TRIANGLES_FILE)?;
    manifest.add_artifact(out, CANDIDATES_FILE)?;
    manifest.write(&out.join("mine_manifest.json"))?;
    Ok(MineOutcome {
        triangles: triangles.len(),
        candidates: candidates.len(),
        labels,
        manifest,
    })
}

#[derive(Clone, Debug)]
pub struct GenOutcome {
    pub bundles: Vec<SetBundle>,
    pub manifest: Manifest,
}

fn build_bundle(
    corpus: &Corpus,
    entry: &RuleEntry,
    config: &RunConfig,
    seed_value: u64,
) -> Result<SetBundle, GenError> {
    let kset = build_knowledge_set(corpus, &entry.rule, config.sizes.set_params(), seed_value)?;
    let scenarios = generate_edit_scenarios(corpus, &kset, config.sizes.scenario_params(), seed_value)?;
    let mut plans = BTreeMap::new();
    for &s in &config.settings {
        plans.insert(s, assign_templates(corpus, &kset, s, seed_value)?);
    }
    Ok(SetBundle { kset, scenarios, plans })
}

/// Generates `config.n_sets` knowledge sets; set `i` uses rule `i mod R`.
///
/// Sets that cannot be built are listed in the manifest; the command fails
/// only when none can.
pub fn gen(config: &RunConfig) -> anyhow::Result<GenOutcome> {
    config.validate()?;
    let corpus = load(&config.corpus)?;
    let rules = load_rules(&config.rules, &corpus)?;
    if rules.is_empty() {
        bail!("rule file {} contains no rules", config.rules.display());
    }
    let mut manifest = Manifest::new("gen", config);
    let mut bundles = Vec::new();
    for i in 0..config.n_sets {
        let entry = &rules[i % rules.len()];
        let seed_value = seed::derive(config.seed, "set", i as u64);
        manifest.seeds.insert(format!("set-{i:04}"), seed_value);
        match build_bundle(&corpus, entry, config, seed_value) {
            Ok(b) => bundles.push(b),
            Err(e) => {
                log::warn!("set {i} (rule {}): {e}", entry.rule.id);
                manifest.failures.push(Failure {
                    item: format!("set-{i:04}:{}", entry.rule.id),
                    setting: None,
                    error: e.to_string(),
                });
            }
        }
    }
    if bundles.is_empty() {
        let first = &manifest.failures[0];
        bail!("no knowledge set could be generated; {}: {}", first.item, first.error);
    }
    let out = &config.out_dir;
    write_set_records(&bundles, create(&out.join(SETS_FILE))?)?;
    manifest.add_input(&config.corpus)?;
    manifest.add_input(&config.rules)?;
    manifest.add_artifact(out, SETS_FILE)?;
    manifest.write(&out.join("gen_manifest.json"))?;
    Ok(GenOutcome { bundles, manifest })
}

pub fn load_sets(out_dir: &Path) -> anyhow::Result<Vec<SetBundle>> {
    let path = out_dir.join(SETS_FILE);
    read_set_records(open(&path)?).with_context(|| format!("invalid set file {}", path.display()))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub records: Vec<ReportRecord>,
    pub aggregates: Vec<Aggregate>,
    pub manifest: Manifest,
}

struct Task<'a> {
    setting: Setting,
    index: usize,
    bundle: &'a SetBundle,
}

enum SessionError {
    Init(String),
    Run(String),
}

type Outcome = Result<Vec<CopyReport>, SessionError>;

struct Runner<'a> {
    spec: &'a AdapterSpec,
    corpus: Arc<Corpus>,
    config: &'a RunConfig,
}

impl Runner<'_> {
    fn start(&self, task: &Task) -> Result<Session<Box<dyn Adapter>>, SessionError> {
        let ctx = BuildContext {
            corpus: self.corpus.clone(),
            rules: vec![task.bundle.kset.rule.clone()],
            seed: adapter_seed(self.config.seed, task.setting, task.index),
            timeout: self.config.timeout(),
        };
        let adapter = self.spec.build(&ctx).map_err(|e| SessionError::Init(e.to_string()))?;
        Session::start(adapter).map_err(|e| SessionError::Init(e.to_string()))
    }

    fn simulate(&self, session: &mut Session<Box<dyn Adapter>>, task: &Task) -> Outcome {
        simulate(session, &self.corpus, task.bundle, task.setting).map_err(|e| SessionError::Run(e.to_string()))
    }

    // Builtins get a fresh, per-set seeded adapter so results do not depend
    // on scheduling. External adapters keep one child per worker, reset
    // between sets and respawned after a failure.
    fn work(&self, tasks: &[Task], next: &AtomicUsize, results: &Mutex<Vec<Option<Outcome>>>) {
        let reuse = self.spec.is_external();
        let mut kept: Option<Session<Box<dyn Adapter>>> = None;
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(task) = tasks.get(i) else { break };
            let session = match kept.take() {
                Some(s) => Ok(s),
                None => self.start(task),
            };
            let outcome = session.and_then(|mut s| {
                let out = self.simulate(&mut s, task);
                if out.is_ok() && reuse {
                    kept = Some(s);
                } else if let Err(e) = s.shutdown() {
                    log::debug!("shutdown: {e}");
                }
                out
            });
            results.lock().expect("results lock")[i] = Some(outcome);
        }
        if let Some(mut s) = kept {
            if let Err(e) = s.shutdown() {
                log::debug!("shutdown: {e}");
            }
        }
    }
}

fn adapter_seed(base: u64, setting: Setting, index: usize) -> u64 {
    seed::derive(base, &format!("adapter:{setting}"), index as u64)
}

fn workers(config: &RunConfig) -> usize {
    config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every generated set under every configured setting and writes the
/// per-copy and aggregate reports.
///
/// Failed sessions are excluded from the aggregates and listed in the
/// manifest. Fails with [`AdapterInitError`] when no session starts.
pub fn run(config: &RunConfig) -> anyhow::Result<RunOutcome> {
    config.validate()?;
    let spec = config.adapter_spec()?;
    let corpus = Arc::new(load(&config.corpus)?);
    let out = &config.out_dir;
    let bundles = load_sets(out)?;
    if bundles.is_empty() {
        bail!("{} contains no knowledge sets", out.join(SETS_FILE).display());
    }
    for &s in &config.settings {
        if let Some(b) = bundles.iter().find(|b| b.plan(s).is_none()) {
            bail!("{} has no {s} plan; generate with that setting or select others", b.kset.id);
        }
    }

    let tasks: Vec<Task> = config
        .settings
        .iter()
        .flat_map(|&setting| {
            bundles
                .iter()
                .enumerate()
                .map(move |(index, bundle)| Task { setting, index, bundle })
        })
        .collect();
    let runner = Runner { spec: &spec, corpus, config };
    let next = AtomicUsize::new(0);
    let results = Mutex::new((0..tasks.len()).map(|_| None).collect::<Vec<_>>());
    let n = workers(config).min(tasks.len());
    std::thread::scope(|scope| {
        for _ in 0..n {
            scope.spawn(|| runner.work(&tasks, &next, &results));
        }
    });
    let results: Vec<Outcome> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect();

    let mut manifest = Manifest::new("run", config);
    for t in &tasks {
        let key = format!("adapter:{}:{}", t.setting, t.bundle.kset.id);
        manifest.seeds.insert(key, adapter_seed(config.seed, t.setting, t.index));
    }
    let mut by_setting: BTreeMap<Setting, (Vec<CopyReport>, usize)> = BTreeMap::new();
    let mut init_failures = 0;
    for (task, result) in tasks.iter().zip(results) {
        let entry = by_setting.entry(task.setting).or_default();
        match result {
            Ok(reports) => entry.0.extend(reports),
            Err(e) => {
                let error = match e {
                    SessionError::Init(m) => {
                        init_failures += 1;
                        m
                    }
                    SessionError::Run(m) => m,
                };
                log::debug!("{} under {}: {error}", task.bundle.kset.id, task.setting);
                entry.1 += 1;
                manifest.failures.push(Failure {
                    item: task.bundle.kset.id.clone(),
                    setting: Some(task.setting),
                    error,
                });
            }
        }
    }
    if init_failures == tasks.len() {
        return Err(AdapterInitError(manifest.failures[0].error.clone()).into());
    }
    manifest.sessions = Some(SessionCounts {
        total: tasks.len(),
        failed: manifest.failures.len(),
    });

    let mut records = Vec::new();
    for &setting in &config.settings {
        let (reports, failed) = by_setting.remove(&setting).unwrap_or_default();
        push_setting(&mut records, reports, failed)?;
    }
    let aggregates = write_reports(out, &records)?;
    manifest.add_input(&config.corpus)?;
    manifest.add_input(&out.join(SETS_FILE))?;
    manifest.add_artifact(out, REPORT_FILE)?;
    manifest.add_artifact(out, CSV_FILE)?;
    manifest.write(&out.join("run_manifest.json"))?;
    Ok(RunOutcome { records, aggregates, manifest })
}

fn push_setting(records: &mut Vec<ReportRecord>, reports: Vec<CopyReport>, failed: usize) -> anyhow::Result<()> {
    let agg = aggregate(&reports)?;
    records.extend(reports.into_iter().map(ReportRecord::Copy));
    if let Some(mut a) = agg {
        a.failed = failed;
        records.push(ReportRecord::Aggregate(a));
    }
    Ok(())
}

fn write_reports(out: &Path, records: &[ReportRecord]) -> anyhow::Result<Vec<Aggregate>> {
    write_report(records, create(&out.join(REPORT_FILE))?)?;
    write_csv(records, create(&out.join(CSV_FILE))?)?;
    Ok(records
        .iter()
        .filter_map(|r| match r {
            ReportRecord::Aggregate(a) => Some(a.clone()),
            ReportRecord::Copy(_) => None,
        })
        .collect())
}

/// Recomputes the aggregates of an existing report from its per-copy
/// records and rewrites the report and CSV files.
pub fn report(out_dir: &Path) -> anyhow::Result<Vec<Aggregate>> {
    let path = out_dir.join(REPORT_FILE);
    let old = editsim::eval::read_report(open(&path)?)
        .with_context(|| format!("invalid report {}", path.display()))?;
    let mut order: Vec<Setting> = Vec::new();
    let mut groups: BTreeMap<Setting, (Vec<CopyReport>, usize)> = BTreeMap::new();
    for r in old {
        let setting = match &r {
            ReportRecord::Copy(c) => c.setting,
            ReportRecord::Aggregate(a) => a.setting,
        };
        if !order.contains(&setting) {
            order.push(setting);
        }
        let g = groups.entry(setting).or_default();
        match r {
            ReportRecord::Copy(c) => g.0.push(c),
            ReportRecord::Aggregate(a) => g.1 = a.failed,
        }
    }
    let mut records = Vec::new();
    for s in order {
        let (reports, failed) = groups.remove(&s).unwrap_or_default();
        push_setting(&mut records, reports, failed)?;
    }
    write_reports(out_dir, &records)
}
