//! Line-delimited JSON protocol between the harness and external models.
//!
//! Requests are `{"id":N,"cmd":"...","payload":{...}}`; responses echo the
//! id as `{"id":N,"ok":true,"payload":{...}}` or
//! `{"id":N,"ok":false,"error":"..."}`. One message per line.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::Qa;
use crate::jsonl;
use crate::text::UNKNOWN;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", content = "payload", rename_all = "lowercase")]
pub enum Command {
    Init {},
    Establish { facts: Vec<Qa>, rules: Vec<String> },
    Query { q: String },
    Update { edits: Vec<Qa> },
    Snapshot {},
    Restore { snapshot: String },
    Reset {},
    Shutdown {},
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Init {} => "init",
            Command::Establish { .. } => "establish",
            Command::Query { .. } => "query",
            Command::Update { .. } => "update",
            Command::Snapshot {} => "snapshot",
            Command::Restore { .. } => "restore",
            Command::Reset {} => "reset",
            Command::Shutdown {} => "shutdown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    #[serde(flatten)]
    pub command: Command,
}

impl Request {
    pub fn to_line(&self) -> String {
        jsonl::to_line(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok(id: u64, payload: Value) -> Self {
        Self {
            id,
            ok: true,
            payload: Some(payload),
            error: None,
        }
    }

    pub fn err(id: u64, error: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            payload: None,
            error: Some(error.into()),
        }
    }

    pub fn to_line(&self) -> String {
        jsonl::to_line(self)
    }
}

/// Error strings used by the echo server.
pub(crate) const NOT_ESTABLISHED: &str = "not-established";
pub(crate) const UNKNOWN_SNAPSHOT: &str = "unknown-snapshot-id";
pub(crate) const MALFORMED: &str = "malformed-request";

#[derive(Default)]
struct Echo {
    memo: HashMap<String, String>,
    established: bool,
    snapshots: Vec<HashMap<String, String>>,
}

impl Echo {
    fn handle(&mut self, command: Command) -> Result<Value, &'static str> {
        match command {
            Command::Init {} => Ok(json!({ "supports_snapshot": true })),
            Command::Establish { facts, .. } => {
                self.memo = facts.into_iter().map(|qa| (qa.q, qa.a)).collect();
                self.established = true;
                Ok(json!({}))
            }
            Command::Query { q } => {
                self.check()?;
                let a = self.memo.get(&q).map_or(UNKNOWN, String::as_str);
                Ok(json!({ "a": a }))
            }
            Command::Update { edits } => {
                self.check()?;
                self.memo.extend(edits.into_iter().map(|qa| (qa.q, qa.a)));
                Ok(json!({}))
            }
            Command::Snapshot {} => {
                self.check()?;
                self.snapshots.push(self.memo.clone());
                Ok(json!({ "snapshot": format!("s{}", self.snapshots.len() - 1) }))
            }
            Command::Restore { snapshot } => {
                self.check()?;
                let saved = snapshot
                    .strip_prefix('s')
                    .and_then(|n| n.parse::<usize>().ok())
                    .and_then(|n| self.snapshots.get(n))
                    .ok_or(UNKNOWN_SNAPSHOT)?;
                self.memo = saved.clone();
                Ok(json!({}))
            }
            Command::Reset {} => {
                *self = Echo::default();
                Ok(json!({}))
            }
            Command::Shutdown {} => Ok(json!({})),
        }
    }

    fn check(&self) -> Result<(), &'static str> {
        if self.established {
            Ok(())
        } else {
            Err(NOT_ESTABLISHED)
        }
    }
}

/// Serves the protocol with an in-memory exact-string memo until
/// `shutdown` or end of input. Used for conformance tests.
pub fn serve_echo<R: BufRead, W: Write>(reader: R, mut writer: W) -> std::io::Result<()> {
    let mut echo = Echo::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (response, stop) = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let stop = matches!(req.command, Command::Shutdown {});
                let resp = match echo.handle(req.command) {
                    Ok(payload) => Response::ok(req.id, payload),
                    Err(e) => Response::err(req.id, e),
                };
                (resp, stop)
            }
            Err(_) => {
                let id = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_u64))
                    .unwrap_or(0);
                (Response::err(id, MALFORMED), false)
            }
        };
        writeln!(writer, "{}", response.to_line())?;
        writer.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}
