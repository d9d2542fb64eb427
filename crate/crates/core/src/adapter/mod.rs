//! The model-under-test contract and reference implementations.
//!
//! An [`Adapter`] is anything that can be given question-answer pairs,
//! asked questions, and updated with new pairs. [`Session`] drives one
//! adapter and enforces the command order
//! `init → establish → (query | snapshot | restore | update)* → shutdown`,
//! with `reset` returning to the state right after `init`.

mod builtin;
mod process;
mod protocol;
mod wrap;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use builtin::{FrozenModel, RandomModel, StringMemoModel, SymbolicKb};
pub use process::{ProcessAdapter, DEFAULT_TIMEOUT};
pub use protocol::{serve_echo, Command, Request, Response};
pub use wrap::{BackChain, ForwChain};

/// A question with the answer the model should give (or gave).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qa {
    pub q: String,
    pub a: String,
}

impl Qa {
    pub fn new(q: impl Into<String>, a: impl Into<String>) -> Self {
        Self { q: q.into(), a: a.into() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_snapshot: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("{0} is not supported by this adapter")]
    Unsupported(&'static str),
    #[error("unknown snapshot id `{0}`")]
    UnknownSnapshot(String),
    #[error("`{command}` is not allowed {state}")]
    Lifecycle { command: &'static str, state: &'static str },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("adapter reported an error: {0}")]
    Remote(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("cannot start adapter: {0}")]
    Launch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A question-answering model that can be established and updated.
///
/// Implementations may assume commands arrive in lifecycle order; use a
/// [`Session`] to guarantee it.
pub trait Adapter: Send {
    fn init(&mut self) -> Result<Capabilities, AdapterError>;
    fn establish(&mut self, facts: &[Qa], rules: &[String]) -> Result<(), AdapterError>;
    fn query(&mut self, question: &str) -> Result<String, AdapterError>;
    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError>;

    /// Saves the current answer function and returns an id for [`Adapter::restore`].
    fn snapshot(&mut self) -> Result<String, AdapterError> {
        Err(AdapterError::Unsupported("snapshot"))
    }

    fn restore(&mut self, _id: &str) -> Result<(), AdapterError> {
        Err(AdapterError::Unsupported("restore"))
    }

    /// Forgets everything given since `init`.
    fn reset(&mut self) -> Result<(), AdapterError>;

    fn shutdown(&mut self) -> Result<(), AdapterError> {
        Ok(())
    }
}

impl<A: Adapter + ?Sized> Adapter for Box<A> {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        (**self).init()
    }
    fn establish(&mut self, facts: &[Qa], rules: &[String]) -> Result<(), AdapterError> {
        (**self).establish(facts, rules)
    }
    fn query(&mut self, question: &str) -> Result<String, AdapterError> {
        (**self).query(question)
    }
    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        (**self).update(edits)
    }
    fn snapshot(&mut self) -> Result<String, AdapterError> {
        (**self).snapshot()
    }
    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        (**self).restore(id)
    }
    fn reset(&mut self) -> Result<(), AdapterError> {
        (**self).reset()
    }
    fn shutdown(&mut self) -> Result<(), AdapterError> {
        (**self).shutdown()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Ready,
    Established,
    Closed,
}

impl State {
    fn describe(self) -> &'static str {
        match self {
            State::Ready => "before establish",
            State::Established => "after establish (reset first)",
            State::Closed => "after shutdown",
        }
    }
}

/// Lifecycle-checked handle on one adapter.
pub struct Session<A: Adapter> {
    adapter: A,
    capabilities: Capabilities,
    state: State,
}

impl<A: Adapter> Session<A> {
    /// Initializes `adapter`.
    pub fn start(mut adapter: A) -> Result<Self, AdapterError> {
        let capabilities = adapter.init()?;
        Ok(Self {
            adapter,
            capabilities,
            state: State::Ready,
        })
    }

    pub fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn require(&self, command: &'static str, wanted: State) -> Result<(), AdapterError> {
        if self.state == wanted {
            Ok(())
        } else {
            Err(AdapterError::Lifecycle {
                command,
                state: self.state.describe(),
            })
        }
    }

    pub fn establish(&mut self, facts: &[Qa], rules: &[String]) -> Result<(), AdapterError> {
        self.require("establish", State::Ready)?;
        self.adapter.establish(facts, rules)?;
        self.state = State::Established;
        Ok(())
    }

    pub fn query(&mut self, question: &str) -> Result<String, AdapterError> {
        self.require("query", State::Established)?;
        self.adapter.query(question)
    }

    pub fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        self.require("update", State::Established)?;
        self.adapter.update(edits)
    }

    pub fn snapshot(&mut self) -> Result<String, AdapterError> {
        self.require("snapshot", State::Established)?;
        if !self.capabilities.supports_snapshot {
            return Err(AdapterError::Unsupported("snapshot"));
        }
        self.adapter.snapshot()
    }

    pub fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        self.require("restore", State::Established)?;
        if !self.capabilities.supports_snapshot {
            return Err(AdapterError::Unsupported("restore"));
        }
        self.adapter.restore(id)
    }

    pub fn reset(&mut self) -> Result<(), AdapterError> {
        if self.state == State::Closed {
            return Err(AdapterError::Lifecycle {
                command: "reset",
                state: self.state.describe(),
            });
        }
        self.adapter.reset()?;
        self.state = State::Ready;
        Ok(())
    }

    pub fn shutdown(&mut self) -> Result<(), AdapterError> {
        if self.state == State::Closed {
            return Ok(());
        }
        self.state = State::Closed;
        self.adapter.shutdown()
    }

    pub fn into_inner(self) -> A {
        self.adapter
    }
}
