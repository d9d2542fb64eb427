pub mod adapter;
pub mod eval;
pub mod generator;
pub mod jsonl;
pub mod kb;
pub mod mining;
pub mod rules;
pub mod seed;
pub mod text;
pub mod synth;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/knowledge.md")]
    mod knowledge {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/knowledge-sets.md")]
    mod knowledge_sets {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/mining.md")]
    mod mining {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
