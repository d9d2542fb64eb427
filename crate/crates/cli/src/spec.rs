//! Adapter specifications such as `oracle`, `lossy:0.3`,
//! `backchain/told` or `external:python serve.py --echo`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use editsim::adapter::{
    Adapter, AdapterError, BackChain, ForwChain, FrozenModel, ProcessAdapter, RandomModel,
    StringMemoModel, SymbolicKb,
};
use editsim::kb::Corpus;
use editsim::rules::Rule;

use crate::UsageError;

#[derive(Clone, Debug, PartialEq)]
pub enum AdapterSpec {
    Oracle,
    /// Oracle without implications: stores only what it is told.
    Told,
    Frozen(Option<String>),
    Random,
    Memo,
    Lossy(f64),
    ForwChain(Box<AdapterSpec>),
    BackChain(Box<AdapterSpec>),
    External(String),
}

/// What a builtin needs besides its spec.
pub struct BuildContext {
    pub corpus: Arc<Corpus>,
    pub rules: Vec<Rule>,
    pub seed: u64,
    pub timeout: Duration,
}

impl AdapterSpec {
    pub fn is_external(&self) -> bool {
        match self {
            AdapterSpec::External(_) => true,
            AdapterSpec::ForwChain(inner) | AdapterSpec::BackChain(inner) => inner.is_external(),
            _ => false,
        }
    }

    pub fn build(&self, ctx: &BuildContext) -> Result<Box<dyn Adapter>, AdapterError> {
        let corpus = || ctx.corpus.clone();
        Ok(match self {
            AdapterSpec::Oracle => Box::new(SymbolicKb::oracle(corpus())),
            AdapterSpec::Told => Box::new(SymbolicKb::told(corpus())),
            AdapterSpec::Frozen(None) => Box::new(FrozenModel::default()),
            AdapterSpec::Frozen(Some(a)) => Box::new(FrozenModel::new(a.clone())),
            AdapterSpec::Random => Box::new(RandomModel::new(ctx.seed)),
            AdapterSpec::Memo => Box::new(StringMemoModel::new()),
            AdapterSpec::Lossy(p) => Box::new(SymbolicKb::lossy(corpus(), *p, ctx.seed)),
            AdapterSpec::ForwChain(inner) => {
                Box::new(ForwChain::new(inner.build(ctx)?, ctx.rules.clone(), corpus()))
            }
            AdapterSpec::BackChain(inner) => {
                Box::new(BackChain::new(inner.build(ctx)?, ctx.rules.clone(), corpus()))
            }
            AdapterSpec::External(cmd) => Box::new(ProcessAdapter::spawn(cmd, ctx.timeout)?),
        })
    }
}

impl FromStr for AdapterSpec {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| UsageError(format!("invalid adapter spec `{s}`: {why}"));
        let s = s.trim();
        if let Some(cmd) = s.strip_prefix("external:") {
            if cmd.trim().is_empty() {
                return Err(bad("empty command"));
            }
            return Ok(AdapterSpec::External(cmd.trim().to_owned()));
        }
        if let Some(inner) = s.strip_prefix("forwchain/") {
            return Ok(AdapterSpec::ForwChain(Box::new(inner.parse()?)));
        }
        if let Some(inner) = s.strip_prefix("backchain/") {
            return Ok(AdapterSpec::BackChain(Box::new(inner.parse()?)));
        }
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match (name, arg) {
            ("oracle", None) => Ok(AdapterSpec::Oracle),
            ("told" | "oracle-noimp", None) => Ok(AdapterSpec::Told),
            ("frozen", a) => Ok(AdapterSpec::Frozen(a.map(str::to_owned))),
            ("random", None) => Ok(AdapterSpec::Random),
            ("memo", None) => Ok(AdapterSpec::Memo),
            ("lossy", Some(p)) => match p.parse::<f64>() {
                Ok(p) if (0.0..=1.0).contains(&p) => Ok(AdapterSpec::Lossy(p)),
                _ => Err(bad("forgetting probability must be in [0, 1]")),
            },
            ("lossy", None) => Err(bad("missing forgetting probability")),
            _ => Err(bad("unknown adapter")),
        }
    }
}

impl fmt::Display for AdapterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterSpec::Oracle => f.write_str("oracle"),
            AdapterSpec::Told => f.write_str("told"),
            AdapterSpec::Frozen(None) => f.write_str("frozen"),
            AdapterSpec::Frozen(Some(a)) => write!(f, "frozen:{a}"),
            AdapterSpec::Random => f.write_str("random"),
            AdapterSpec::Memo => f.write_str("memo"),
            AdapterSpec::Lossy(p) => write!(f, "lossy:{p}"),
            AdapterSpec::ForwChain(i) => write!(f, "forwchain/{i}"),
            AdapterSpec::BackChain(i) => write!(f, "backchain/{i}"),
            AdapterSpec::External(c) => write!(f, "external:{c}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_round_trip() {
        for s in [
            "oracle",
            "told",
            "frozen",
            "frozen:London",
            "random",
            "memo",
            "lossy:0.25",
            "forwchain/told",
            "backchain/forwchain/lossy:0.5",
            "external:python3 serve.py --mode echo",
        ] {
            let spec: AdapterSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!("oracle-noimp".parse::<AdapterSpec>().unwrap(), AdapterSpec::Told);
    }

    #[test]
    fn malformed_specs_are_rejected() {
        for s in ["", "oracle:1", "lossy", "lossy:1.5", "lossy:x", "backchain/", "external:  ", "gpt"] {
            assert!(s.parse::<AdapterSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn external_is_detected_through_wrappers() {
        let spec: AdapterSpec = "forwchain/external:cat".parse().unwrap();
        assert!(spec.is_external());
        assert!(!AdapterSpec::Oracle.is_external());
    }
}
