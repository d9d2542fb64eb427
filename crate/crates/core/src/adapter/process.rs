use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command as Proc, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::protocol::{Command, Request, Response, UNKNOWN_SNAPSHOT};
use super::{Adapter, AdapterError, Capabilities, Qa};

/// Per-command response deadline unless configured otherwise.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// A model running as a child process that speaks the line protocol on
/// its standard streams.
pub struct ProcessAdapter {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    timeout: Duration,
}

impl ProcessAdapter {
    /// Launches `command`, split with shell quoting rules.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, AdapterError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| AdapterError::Launch(format!("cannot parse command line `{command}`")))?;
        let mut child = Proc::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Launch(format!("`{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_owned(),
            child,
            stdin,
            lines: rx,
            next_id: 1,
            timeout,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn call(&mut self, command: Command) -> Result<Value, AdapterError> {
        let id = self.next_id;
        self.next_id += 1;
        let name = command.name();
        let line = Request { id, command }.to_line();
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| AdapterError::Protocol("adapter input is closed".into()))?;
        writeln!(stdin, "{line}")?;
        stdin.flush()?;

        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(left) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => {
                    let _ = self.child.kill();
                    return Err(AdapterError::Timeout(self.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(AdapterError::Protocol(format!("adapter exited during `{name}`")))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: Response = serde_json::from_str(&line)
                .map_err(|e| AdapterError::Protocol(format!("malformed response `{line}`: {e}")))?;
            if resp.id != id {
                return Err(AdapterError::Protocol(format!(
                    "response id {} does not match request id {id}",
                    resp.id
                )));
            }
            return if resp.ok {
                Ok(resp.payload.unwrap_or(Value::Null))
            } else {
                Err(AdapterError::Remote(resp.error.unwrap_or_default()))
            };
        }
    }

    fn field<'v>(payload: &'v Value, name: &str, cmd: &str) -> Result<&'v str, AdapterError> {
        payload
            .get(name)
            .and_then(Value::as_str)
            .ok_or_else(|| AdapterError::Protocol(format!("`{cmd}` response lacks string field `{name}`")))
    }
}

impl Adapter for ProcessAdapter {
    fn init(&mut self) -> Result<Capabilities, AdapterError> {
        let payload = self.call(Command::Init {})?;
        Ok(Capabilities {
            supports_snapshot: payload
                .get("supports_snapshot")
                .and_then(Value::as_bool)
                .unwrap_or(false),
        })
    }

    fn establish(&mut self, facts: &[Qa], rules: &[String]) -> Result<(), AdapterError> {
        self.call(Command::Establish {
            facts: facts.to_vec(),
            rules: rules.to_vec(),
        })?;
        Ok(())
    }

    fn query(&mut self, question: &str) -> Result<String, AdapterError> {
        let payload = self.call(Command::Query { q: question.to_owned() })?;
        Ok(Self::field(&payload, "a", "query")?.to_owned())
    }

    fn update(&mut self, edits: &[Qa]) -> Result<(), AdapterError> {
        self.call(Command::Update { edits: edits.to_vec() })?;
        Ok(())
    }

    fn snapshot(&mut self) -> Result<String, AdapterError> {
        let payload = self.call(Command::Snapshot {})?;
        Ok(Self::field(&payload, "snapshot", "snapshot")?.to_owned())
    }

    fn restore(&mut self, id: &str) -> Result<(), AdapterError> {
        match self.call(Command::Restore { snapshot: id.to_owned() }) {
            Err(AdapterError::Remote(e)) if e == UNKNOWN_SNAPSHOT => {
                Err(AdapterError::UnknownSnapshot(id.to_owned()))
            }
            other => other.map(drop),
        }
    }

    fn reset(&mut self) -> Result<(), AdapterError> {
        self.call(Command::Reset {})?;
        Ok(())
    }

    fn shutdown(&mut self) -> Result<(), AdapterError> {
        let result = self.call(Command::Shutdown {});
        self.stdin = None;
        let _ = self.child.wait();
        result.map(drop)
    }
}

impl Drop for ProcessAdapter {
    fn drop(&mut self) {
        self.stdin = None;
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
