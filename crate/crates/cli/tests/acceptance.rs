//! One PASS/FAIL line per acceptance criterion. Expected values come from
//! oracles written here, not from the code under test.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use editsim::eval::{Aggregate, CopyReport, Metric, ReportRecord};
use editsim::generator::{SetBundle, Setting};
use editsim::kb::{Corpus, EntityId, Fact, RelationId};
use editsim::mining::{generate_candidate_rules, mine_relation_cliques};
use editsim::rules::{forward_chain, parse_rule, Pattern, Rule, Var};
use editsim::{seed, synth};
use editsim_cli::commands::{self, SynthKind};
use editsim_cli::RunConfig;
use rand::Rng;

type Verdict = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn(&Path) -> Verdict,
}

const GEOGRAPHY_SEED: u64 = 11;

/// Corpus and rule file shared by the sweeps, plus 50 default sets.
fn workspace(root: &Path) -> RunConfig {
    let dir = root.join("base");
    if !dir.join(commands::SETS_FILE).exists() {
        commands::synth(SynthKind::Geography, GEOGRAPHY_SEED, &dir).expect("synth");
        commands::gen(&base_config(&dir, 50)).expect("gen");
    }
    base_config(&dir, 50)
}

fn base_config(dir: &Path, n_sets: usize) -> RunConfig {
    RunConfig {
        corpus: dir.join("corpus.jsonl"),
        rules: dir.join("rules.txt"),
        out_dir: dir.to_owned(),
        n_sets,
        seed: 2024,
        ..RunConfig::default()
    }
}

/// Runs `adapter` over the sets in `config.out_dir`, writing the reports to
/// a fresh directory so the shared sets stay untouched.
fn sweep(root: &Path, config: &RunConfig, adapter: &str, settings: &[Setting]) -> Result<(Vec<CopyReport>, Vec<Aggregate>), String> {
    let out = root.join(format!("run-{}", adapter.replace(['/', ':', '.'], "_")));
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    std::fs::copy(config.out_dir.join(commands::SETS_FILE), out.join(commands::SETS_FILE)).map_err(|e| e.to_string())?;
    let c = RunConfig {
        adapter: adapter.into(),
        out_dir: out,
        settings: settings.to_vec(),
        ..config.clone()
    };
    let r = commands::run(&c).map_err(|e| format!("{e:#}"))?;
    if !r.manifest.failures.is_empty() {
        return Err(format!("{} failed sessions", r.manifest.failures.len()));
    }
    let copies = r
        .records
        .into_iter()
        .filter_map(|r| match r {
            ReportRecord::Copy(c) => Some(c),
            ReportRecord::Aggregate(_) => None,
        })
        .collect();
    Ok((copies, r.aggregates))
}

fn exact(aggs: &[Aggregate], metrics: &[Metric], want: f64) -> Result<(), String> {
    for a in aggs {
        for &m in metrics {
            if a.rate(m) != Some(want) {
                return Err(format!("{} {m} = {:?}, want {want}", a.setting, a.rate(m)));
            }
        }
    }
    Ok(())
}

fn structure(root: &Path) -> Verdict {
    let config = workspace(root);
    let bundles = commands::load_sets(&config.out_dir).map_err(|e| e.to_string())?;
    if bundles.len() != 50 {
        return Err(format!("{} sets", bundles.len()));
    }
    for b in &bundles {
        let k = &b.kset;
        let shape = (k.specific_facts.len(), k.unrelated_facts.len(), k.implications.len());
        if shape != (24, 5, 12) {
            return Err(format!("{}: specific/unrelated/implications = {shape:?}", k.id));
        }
        // each chain derives exactly its own implication
        let derived: BTreeSet<Fact> = forward_chain(&k.specific_facts, std::slice::from_ref(&k.rule), 1)
            .implied_facts()
            .cloned()
            .collect();
        let listed: BTreeSet<Fact> = k.implied_facts().cloned().collect();
        if derived != listed || listed.len() != 12 {
            return Err(format!("{}: implications do not follow from the chains", k.id));
        }
        if b.scenarios.len() != 3 || b.scenarios.iter().any(|s| s.sampled_edits().count() != 20) {
            return Err(format!("{}: scenario shape", k.id));
        }
        if b.plans.keys().copied().collect::<Vec<_>>() != Setting::ALL {
            return Err(format!("{}: plans", k.id));
        }
    }
    Ok("50 sets: 24 specific, 5 unrelated, 1 rule, 12 implications; 3 copies x 20 edits".into())
}

fn oracle(root: &Path) -> Verdict {
    let config = workspace(root);
    let (copies, aggs) = sweep(root, &config, "oracle", &Setting::ALL)?;
    for c in &copies {
        for m in Metric::ALL {
            let s = c.score(m);
            if s.hits != s.total {
                return Err(format!("{} {} copy {} {m}: {}/{}", c.setting, c.kset, c.copy, s.hits, s.total));
            }
        }
    }
    exact(&aggs, &Metric::ALL, 1.0)?;
    Ok(format!("{} copies, 7 metrics at 1.0 in 3 settings", copies.len()))
}

fn frozen(root: &Path) -> Verdict {
    let config = workspace(root);
    let (_, aggs) = sweep(root, &config, "frozen", &Setting::ALL)?;
    exact(&aggs, &[Metric::ConsNs, Metric::ConsU, Metric::ConsNi], 1.0)?;
    exact(&aggs, &[Metric::UpdS, Metric::UpdI], 0.0)?;
    Ok("Cons.* = 1.0, Upd.S = Upd.I = 0.0".into())
}

fn norm(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Hit probability of a uniform guess from `pool` for each gold answer.
fn guesses<'a>(corpus: &Corpus, pool: &BTreeSet<String>, golds: impl Iterator<Item = &'a EntityId>) -> Vec<f64> {
    golds
        .map(|o| {
            let g = norm(corpus.surface(o).unwrap());
            if pool.contains(&g) {
                1.0 / pool.len() as f64
            } else {
                0.0
            }
        })
        .collect()
}

struct Binomial {
    n: usize,
    hits: usize,
    mean: f64,
    var: f64,
}

impl Binomial {
    fn add(&mut self, ps: &[f64]) {
        self.n += ps.len();
        self.mean += ps.iter().sum::<f64>();
        self.var += ps.iter().map(|p| p * (1.0 - p)).sum::<f64>();
    }

    fn z(&self) -> f64 {
        (self.hits as f64 - self.mean) / self.var.sqrt()
    }
}

fn random(root: &Path) -> Verdict {
    let dir = root.join("random");
    let config = base_config(&root.join("base"), 100);
    let config = RunConfig { out_dir: dir.clone(), ..config };
    workspace(root);
    commands::gen(&config).map_err(|e| e.to_string())?;
    let corpus = editsim::kb::load_corpus(&config.corpus).map_err(|e| e.to_string())?;
    let bundles: BTreeMap<String, SetBundle> = commands::load_sets(&dir)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|b| (b.kset.id.clone(), b))
        .collect();
    let (copies, _) = sweep(root, &config, "random", &Setting::ALL)?;

    let mut est = Binomial { n: 0, hits: 0, mean: 0.0, var: 0.0 };
    let mut upd = Binomial { n: 0, hits: 0, mean: 0.0, var: 0.0 };
    let mut inv_pool = Vec::new();
    for c in &copies {
        let b = &bundles[&c.kset];
        let k = &b.kset;
        let told: BTreeSet<String> = k
            .specific_facts
            .iter()
            .chain(&k.unrelated_facts)
            .map(|f| norm(corpus.surface(&f.object).unwrap()))
            .collect();
        if c.copy == 0 {
            // Est.S is measured once per set and setting
            est.add(&guesses(&corpus, &told, k.specific_facts.iter().map(|f| &f.object)));
            est.hits += c.score(Metric::EstS).hits;
            inv_pool.push(1.0 / told.len() as f64);
        }
        let s = &b.scenarios[c.copy];
        let mut pool = told.clone();
        pool.extend(s.edits.iter().map(|e| norm(corpus.surface(&e.fact.object).unwrap())));
        upd.add(&guesses(&corpus, &pool, s.updated_implications.iter().map(|f| &f.object)));
        upd.hits += c.score(Metric::UpdI).hits;
        if c.score(Metric::UpdI).total != s.updated_implications.len() {
            return Err("Upd.I denominator differs from the scenario".into());
        }
    }
    let n = est.n + upd.n;
    if n < 5000 {
        return Err(format!("only {n} questions"));
    }
    for (name, b) in [("Est.S", &est), ("Upd.I", &upd)] {
        if b.z().abs() > 3.0 {
            return Err(format!("{name}: {} hits, expected {:.1} (z = {:.2})", b.hits, b.mean, b.z()));
        }
    }
    let mean_inv = inv_pool.iter().sum::<f64>() / inv_pool.len() as f64;
    Ok(format!(
        "{n} questions; Est.S {}/{} vs {:.1} (z {:+.2}), Upd.I {}/{} vs {:.1} (z {:+.2}); mean 1/|pool| = {:.4}",
        est.hits, est.n, est.mean, est.z(), upd.hits, upd.n, upd.mean, upd.z(), mean_inv
    ))
}

fn backchain(root: &Path) -> Verdict {
    let config = workspace(root);
    let (_, plain) = sweep(root, &config, "told", &Setting::ALL)?;
    exact(&plain, &[Metric::EstI, Metric::UpdI], 0.0)?;
    let (_, wrapped) = sweep(root, &config, "backchain/told", &Setting::ALL)?;
    exact(&wrapped, &[Metric::EstI, Metric::UpdI], 1.0)?;
    Ok("Est.I and Upd.I: 0.0 unwrapped, 1.0 wrapped".into())
}

fn forwchain(root: &Path) -> Verdict {
    let dir = root.join("forw");
    let config = RunConfig { out_dir: dir.clone(), ..base_config(&root.join("base"), 10) };
    workspace(root);
    commands::gen(&config).map_err(|e| e.to_string())?;
    let (_, plain) = sweep(root, &config, "told", &Setting::ALL)?;
    exact(&plain, &[Metric::UpdI], 0.0)?;
    let (_, wrapped) = sweep(root, &config, "forwchain/told", &Setting::ALL)?;
    exact(&wrapped, &[Metric::UpdI, Metric::UpdS], 1.0)?;
    Ok("10 sets: Upd.I 0.0 unwrapped, 1.0 wrapped".into())
}

fn memo(root: &Path) -> Verdict {
    let config = workspace(root);
    let (_, cq) = sweep(root, &config, "memo", &[Setting::CqDt])?;
    let (_, icq) = sweep(root, &config, "memo", &[Setting::IcqDt])?;
    exact(&cq, &[Metric::UpdS], 1.0)?;
    exact(&icq, &[Metric::UpdS], 0.0)?;
    Ok("Upd.S: CQ_DT 1.0, ICQ_DT 0.0".into())
}

type Assignment = BTreeMap<Var, EntityId>;

fn bind(p: &Pattern, f: &Fact, a: &mut Assignment) -> bool {
    if p.relation != f.relation {
        return false;
    }
    for (v, e) in [(&p.subject, &f.subject), (&p.object, &f.object)] {
        match a.get(v) {
            Some(x) if x != e => return false,
            Some(_) => {}
            None => {
                a.insert(v.clone(), e.clone());
            }
        }
    }
    true
}

fn chaining(_: &Path) -> Verdict {
    let mut rng = seed::rng(7, "acceptance-chaining", 0);
    let var = |i: usize| Var::new("T", ["A", "B", "C"][i]);
    let mut derivations = 0;
    for case in 0..200 {
        let n = rng.random_range(0..=50);
        let facts: Vec<Fact> = (0..n)
            .map(|_| {
                Fact::new(
                    format!("e{}", rng.random_range(0..6)),
                    format!("r{}", rng.random_range(0..3)),
                    format!("e{}", rng.random_range(0..6)),
                )
            })
            .collect();
        let mut rules = Vec::new();
        while rules.len() < 3 {
            let mut p = || Pattern::new(var(rng.random_range(0..3)), format!("r{}", rng.random_range(0..3)), var(rng.random_range(0..3)));
            let (a, b, c) = (p(), p(), p());
            if let Ok(r) = Rule::new(format!("rule{}", rules.len()), a, b, c) {
                rules.push(r);
            }
        }
        let mut expected = BTreeSet::new();
        for r in &rules {
            for f1 in &facts {
                for f2 in &facts {
                    let mut a = Assignment::new();
                    if bind(&r.premises[0], f1, &mut a) && bind(&r.premises[1], f2, &mut a) {
                        let i = &r.implication;
                        let implied = Fact::new(a[&i.subject].clone(), i.relation.clone(), a[&i.object].clone());
                        expected.insert((r.id.clone(), a, implied));
                    }
                }
            }
        }
        let got: BTreeSet<(String, Assignment, Fact)> = forward_chain(&facts, &rules, 1)
            .derivations
            .into_iter()
            .map(|d| (d.rule, d.binding.0, d.implied))
            .collect();
        if got != expected {
            return Err(format!("case {case}: {} derivations, brute force {}", got.len(), expected.len()));
        }
        derivations += expected.len();
    }
    Ok(format!("200 sets, {derivations} derivations, zero discrepancies"))
}

fn cliques(_: &Path) -> Verdict {
    for k in [1, 5, 20] {
        let (corpus, planted) = synth::planted_triangles(k, 3, 400, 100 + k as u64);
        let found = mine_relation_cliques(&corpus, 1);
        let got: BTreeSet<(RelationId, RelationId, RelationId)> =
            found.iter().map(|t| (t.r1.clone(), t.r2.clone(), t.r3.clone())).collect();
        if got != planted.iter().cloned().collect() {
            return Err(format!("k = {k}: found {} triangles", got.len()));
        }
        for t in &found {
            let rules = generate_candidate_rules(t, &corpus).map_err(|e| e.to_string())?;
            for c in &rules {
                let text = c.rule.to_dsl(&corpus).map_err(|e| e.to_string())?;
                let back = parse_rule(&text, &corpus).map_err(|e| format!("{text}: {e}"))?;
                if back.with_id(c.rule.id.clone()) != c.rule {
                    return Err(format!("{text} does not re-parse to the same rule"));
                }
            }
        }
    }
    Ok("k = 1, 5, 20 recovered exactly; 3 re-parseable rules each".into())
}

fn determinism(root: &Path) -> Verdict {
    let mut digests = Vec::new();
    for (i, workers) in [(0, 1), (1, 4)] {
        let dir = root.join(format!("det{i}"));
        commands::synth(SynthKind::Geography, 5, &dir).map_err(|e| e.to_string())?;
        let mut config = base_config(&dir, 6);
        config.workers = Some(workers);
        commands::gen(&config).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for adapter in ["random", "lossy:0.4", "forwchain/lossy:0.2"] {
            commands::run(&RunConfig { adapter: adapter.into(), ..config.clone() }).map_err(|e| e.to_string())?;
            for f in [commands::REPORT_FILE, commands::CSV_FILE] {
                files.push(std::fs::read(dir.join(f)).map_err(|e| e.to_string())?);
            }
        }
        files.push(std::fs::read(dir.join(commands::SETS_FILE)).map_err(|e| e.to_string())?);
        files.push(std::fs::read(dir.join("corpus.jsonl")).map_err(|e| e.to_string())?);
        digests.push(files);
    }
    if digests[0] != digests[1] {
        return Err("artifacts differ between identical runs".into());
    }
    Ok(format!("{} artifacts byte-identical (1 vs 4 workers)", digests[0].len()))
}

fn main() {
    let criteria = [
        Criterion { name: "structure", limit: Duration::from_secs(10), check: structure },
        Criterion { name: "oracle upper bound", limit: Duration::from_secs(120), check: oracle },
        Criterion { name: "frozen bound", limit: Duration::from_secs(60), check: frozen },
        Criterion { name: "random calibration", limit: Duration::from_secs(120), check: random },
        Criterion { name: "backchain recovery", limit: Duration::from_secs(60), check: backchain },
        Criterion { name: "forwchain recovery", limit: Duration::from_secs(60), check: forwchain },
        Criterion { name: "surface-form sensitivity", limit: Duration::from_secs(60), check: memo },
        Criterion { name: "chaining oracle", limit: Duration::from_secs(30), check: chaining },
        Criterion { name: "clique plant-and-recover", limit: Duration::from_secs(30), check: cliques },
        Criterion { name: "determinism", limit: Duration::from_secs(120), check: determinism },
    ];
    let tmp = tempfile::tempdir().expect("tempdir");
    let root: PathBuf = tmp.path().to_owned();
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let verdict = (c.check)(&root);
        let took = start.elapsed();
        let verdict = match verdict {
            Ok(detail) if took > c.limit => Err(format!("{detail}; took {took:.1?}, limit {:?}", c.limit)),
            v => v,
        };
        match verdict {
            Ok(detail) => println!("PASS {:<26} {detail} ({took:.1?})", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL {:<26} {why} ({took:.1?})", c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
