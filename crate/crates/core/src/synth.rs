//! Seeded synthetic corpora for tests, demos and benchmarks.
//!
//! [`geography`] builds a person/city/country world that supports the
//! "origin" rule; [`planted_triangles`] builds a corpus with a known set of
//! relation triangles hidden among noise; [`franklin`] is the small
//! hand-written example used throughout the documentation.

use rand::Rng;

use crate::kb::{Corpus, CorpusBuilder, RelationId};
use crate::seed;

/// Text of the rule the geography corpus is built around.
pub const ORIGIN_RULE: &str = "If [Person A] is from [City A], and [City A] is located in [Country A], then [Person A] is from [Country A].";

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ven", "tor", "sa", "bel", "dun", "ar", "is", "po", "quin", "mer",
    "lan", "the", "vo", "ri", "gan", "e", "sul", "fa", "nor", "wyn",
];

/// Unique pronounceable names; index `i` always maps to the same name.
fn name(i: usize, parts: usize) -> String {
    let mut n = i;
    let mut s = String::new();
    for _ in 0..parts {
        s.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
    }
    // disambiguate overflow beyond SYLLABLES^parts
    if n > 0 {
        s.push_str(&n.to_string());
    }
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => s,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GeographyParams {
    pub countries: usize,
    pub cities: usize,
    pub people: usize,
    /// People who only appear in unrelated (family) facts.
    pub celebrities: usize,
    /// Fraction of people that also get an explicit country-of-origin fact.
    pub origin_fraction: f64,
}

impl Default for GeographyParams {
    fn default() -> Self {
        Self {
            countries: 8,
            cities: 60,
            people: 240,
            celebrities: 40,
            origin_fraction: 0.25,
        }
    }
}

/// A person/city/country corpus with family facts as unrelated knowledge.
pub fn geography(params: GeographyParams, seed_value: u64) -> Corpus {
    let mut rng = seed::rng(seed_value, "geography", 0);
    let mut b = CorpusBuilder::default();
    b.relation("city", "city", "Person", "City", &["is from"])
        .relation("country", "country", "City", "Country", &["is located in"])
        .relation("origin", "country of origin", "Person", "Country", &["is from"])
        .relation("child", "child", "Person", "Person", &["is the parent of"])
        .relation("spouse", "spouse", "Person", "Person", &["is married to"])
        .template("city", "Which city was {subject} from?")
        .template("city", "Which city did {subject} originate from?")
        .template("city", "{subject} was from which city?")
        .template("country", "Which country is {subject} in?")
        .template("country", "{subject} is located in which country?")
        .template("origin", "Which country was {subject} from?")
        .template("origin", "{subject} comes from which country?")
        .template("child", "Who was {subject}'s child?")
        .template("child", "Who is a child of {subject}?")
        .template("spouse", "Who is {subject} married to?")
        .template("spouse", "Who is the spouse of {subject}?");

    for k in 0..params.countries {
        b.entity(format!("K{k}"), format!("{}ia", name(k, 2)), "Country");
    }
    let mut city_country = Vec::with_capacity(params.cities);
    for c in 0..params.cities {
        b.entity(format!("C{c}"), format!("{} City", name(c + 7, 2)), "City");
        let k = rng.random_range(0..params.countries.max(1));
        city_country.push(k);
        b.fact(format!("C{c}"), "country", format!("K{k}"));
    }
    for p in 0..params.people {
        b.entity(format!("P{p}"), format!("{} {}", name(p, 2), name(p * 7 + 3, 3)), "Person");
        let c = rng.random_range(0..params.cities.max(1));
        b.fact(format!("P{p}"), "city", format!("C{c}"));
        if rng.random_bool(params.origin_fraction) {
            b.fact(format!("P{p}"), "origin", format!("K{}", city_country[c]));
        }
    }
    for s in 0..params.celebrities {
        b.entity(format!("S{s}"), format!("{} {}", name(params.people + s, 2), name(s * 5 + 1, 2)), "Person");
    }
    for s in 0..params.celebrities {
        let mut other = rng.random_range(0..params.celebrities);
        if other == s {
            other = (other + 1) % params.celebrities;
        }
        let relation = if s % 2 == 0 { "child" } else { "spouse" };
        b.fact(format!("S{s}"), relation, format!("S{other}"));
    }
    b.build().expect("synthetic geography corpus is valid")
}

/// A relation triangle planted by [`planted_triangles`], in canonical order.
pub type PlantedTriangle = (RelationId, RelationId, RelationId);

/// Corpus with `k` planted relation triangles (each with `witnesses`
/// entity triples) plus `noise` facts that cannot close a triangle.
pub fn planted_triangles(
    k: usize,
    witnesses: usize,
    noise: usize,
    seed_value: u64,
) -> (Corpus, Vec<PlantedTriangle>) {
    let mut rng = seed::rng(seed_value, "planted", 0);
    let mut b = CorpusBuilder::default();
    let mut planted = Vec::new();
    for i in 0..k {
        let (ta, tb, tc) = (format!("A{i}"), format!("B{i}"), format!("C{i}"));
        let (r1, r2, r3) = (format!("a{i}"), format!("b{i}"), format!("c{i}"));
        b.relation(&r1, &r1, &ta, &tb, &[])
            .relation(&r2, &r2, &ta, &tc, &[])
            .relation(&r3, &r3, &tb, &tc, &[]);
        for r in [&r1, &r2, &r3] {
            b.template(r, format!("What is the {r} of {{subject}}?"));
        }
        for w in 0..witnesses {
            let (ea, eb, ec) = (format!("{ta}_{w}"), format!("{tb}_{w}"), format!("{tc}_{w}"));
            b.entity(&ea, format!("{ta} item {w}"), &ta)
                .entity(&eb, format!("{tb} item {w}"), &tb)
                .entity(&ec, format!("{tc} item {w}"), &tc)
                .fact(&ea, &r1, &eb)
                .fact(&ea, &r2, &ec)
                .fact(&eb, &r3, &ec);
        }
        planted.push((r1.into(), r2.into(), r3.into()));
    }

    // Noise runs from X into A-types and Y. No edge joins two of those
    // targets, so no triangle can close through an X entity.
    let targets: Vec<String> = (0..k)
        .map(|i| format!("A{i}"))
        .chain(["Y".to_string()])
        .collect();
    let n_x = (noise / 3).max(1);
    for x in 0..n_x {
        b.entity(format!("X_{x}"), format!("Noise source {x}"), "X");
    }
    for y in 0..n_x {
        b.entity(format!("Y_{y}"), format!("Noise sink {y}"), "Y");
    }
    for (j, t) in targets.iter().enumerate() {
        let r = format!("n{j}");
        b.relation(&r, &r, "X", t, &[]);
        b.template(&r, format!("What is the {r} of {{subject}}?"));
    }
    for _ in 0..noise {
        let j = rng.random_range(0..targets.len());
        let t = &targets[j];
        let x = rng.random_range(0..n_x);
        let object = if t == "Y" {
            format!("Y_{}", rng.random_range(0..n_x))
        } else {
            let w = rng.random_range(0..witnesses.max(1));
            format!("{t}_{w}")
        };
        if t != "Y" && witnesses == 0 {
            continue;
        }
        b.fact(format!("X_{x}"), format!("n{j}"), object);
    }
    (b.build().expect("planted corpus is valid"), planted)
}

/// The small hand-written corpus around Franklin, New York City and London.
pub fn franklin() -> Corpus {
    let mut b = CorpusBuilder::default();
    b.relation("city", "city", "Person", "City", &["is from"])
        .relation("country", "country", "City", "Country", &["is located in"])
        .relation("origin", "country of origin", "Person", "Country", &["is from", "country"])
        .relation("child", "child", "Person", "Person", &["is the parent of"])
        .template("city", "Which city was {subject} from?")
        .template("city", "Which city did {subject} originate from?")
        .template("city", "{subject} was from which city?")
        .template("country", "Which country is {subject} in?")
        .template("country", "{subject} is located in which country?")
        .template("origin", "Which country was {subject} from?")
        .template("child", "Who was {subject}'s child?")
        .entity("franklin", "Franklin", "Person")
        .entity("rowling", "J. K. Rowling", "Person")
        .entity("demi", "Demi Moore", "Person")
        .entity("rumer", "Rumer Willis", "Person")
        .entity("dickens", "Charles Dickens", "Person")
        .entity("nyc", "NYC", "City")
        .entity("london", "London", "City")
        .entity("yate", "Yate", "City")
        .entity("usa", "USA", "Country")
        .entity("uk", "UK", "Country")
        .fact("franklin", "city", "nyc")
        .fact("rowling", "city", "yate")
        .fact("dickens", "city", "london")
        .fact("nyc", "country", "usa")
        .fact("london", "country", "uk")
        .fact("yate", "country", "uk")
        .fact("demi", "child", "rumer");
    b.build().expect("franklin corpus is valid")
}
