//! Predictor backed by a pool of child processes speaking [`super::protocol`].

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;

use super::protocol::{parse_reply, reply_to_batches, InfoReply, PredictReply, Request, WireScene, WIRE_SEED_MASK};
use super::{validate_batches, PredictionBatch, Predictor, PredictorInfo};
use crate::rng::{derive, entropy_seed};
use crate::traj::ScenePast;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    /// Shell command line launching the predictor process.
    pub command: String,
    /// Number of processes kept alive for parallel sampling.
    pub pool_size: usize,
    /// Per-request timeout.
    pub timeout: Duration,
}

impl ExternalConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            pool_size: 1,
            timeout: Duration::from_secs(300),
        }
    }
}

/// One live predictor process.
pub struct Connection {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    broken: bool,
}

impl Connection {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::predictor(format!("cannot launch {command:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::predictor("child stdout unavailable"))?;
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
            broken: false,
        })
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    /// Send one raw line and wait for one reply line.
    pub fn roundtrip_raw(&mut self, line: &str) -> Result<String> {
        if self.broken {
            return Err(Error::predictor("connection is unusable after an earlier failure"));
        }
        let result = self.roundtrip_inner(line);
        if result.is_err() {
            self.broken = true;
            let _ = self.child.kill();
        }
        result
    }

    fn roundtrip_inner(&mut self, line: &str) -> Result<String> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::predictor("predictor stdin closed"))?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::predictor(format!("predictor process is gone ({e})")))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(Error::predictor(format!("reading predictor output: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::predictor(format!(
                "predictor did not answer within {:?}",
                self.timeout
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self
                    .child
                    .try_wait()
                    .ok()
                    .flatten()
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "closed its output".into());
                Err(Error::predictor(format!("predictor process exited mid-request ({status})")))
            }
        }
    }

    pub fn request<T: DeserializeOwned>(&mut self, request: &Request) -> Result<T> {
        let line = serde_json::to_string(request)?;
        let reply = self.roundtrip_raw(&line)?;
        parse_reply(&reply)
    }

    pub fn info(&mut self) -> Result<InfoReply> {
        self.request(&Request::Info)
    }

    /// Ask the process to exit and wait up to `wait` for it.
    pub fn shutdown(mut self, wait: Duration) -> Result<std::process::ExitStatus> {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = writeln!(stdin, "{}", serde_json::to_string(&Request::Shutdown)?);
            let _ = stdin.flush();
        }
        let deadline = std::time::Instant::now() + wait;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Ok(status),
                Ok(None) if std::time::Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(10))
                }
                Ok(None) => {
                    let _ = self.child.kill();
                    return Err(Error::predictor("predictor did not exit after shutdown"));
                }
                Err(e) => return Err(Error::predictor(format!("waiting for predictor: {e}"))),
            }
        }
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(mut stdin) = self.stdin.take() {
            if !self.broken {
                let _ = writeln!(stdin, r#"{{"op":"shutdown"}}"#);
                let _ = stdin.flush();
            }
        }
        if matches!(self.child.try_wait(), Ok(None)) {
            std::thread::sleep(Duration::from_millis(20));
            if matches!(self.child.try_wait(), Ok(None)) {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

/// A predictor process pool. Each request holds one connection exclusively.
pub struct ExternalPredictor {
    info: InfoReply,
    idle: Mutex<Vec<Connection>>,
    available: Condvar,
}

/// Seed sent for chunk `i` of a seeded call: the call seed itself for the
/// first chunk, a derived one afterwards.
fn chunk_seed(seed: u64, chunk: usize) -> u64 {
    let s = if chunk == 0 { seed } else { derive(seed, &[chunk as u64]) };
    s & WIRE_SEED_MASK
}

impl ExternalPredictor {
    pub fn spawn(config: &ExternalConfig) -> Result<Self> {
        if config.pool_size == 0 {
            return Err(Error::invalid("predictor pool size must be at least 1"));
        }
        let mut conns = Vec::with_capacity(config.pool_size);
        let mut info: Option<InfoReply> = None;
        for _ in 0..config.pool_size {
            let mut c = Connection::spawn(&config.command, config.timeout)?;
            let i = c.info()?;
            if i.max_batch == 0 || i.t_future == 0 || i.t_past == 0 {
                return Err(Error::predictor(format!("invalid handshake {i:?}")));
            }
            if let Some(prev) = &info {
                if prev != &i {
                    return Err(Error::predictor("pool members disagree on their handshake"));
                }
            }
            info = Some(i);
            conns.push(c);
        }
        Ok(Self {
            info: info.expect("pool_size >= 1"),
            idle: Mutex::new(conns),
            available: Condvar::new(),
        })
    }

    pub fn handshake(&self) -> &InfoReply {
        &self.info
    }

    fn with_connection<T>(&self, f: impl FnOnce(&mut Connection) -> Result<T>) -> Result<T> {
        let mut conn = {
            let mut idle = self.idle.lock().expect("pool lock poisoned");
            loop {
                if let Some(c) = idle.pop() {
                    break c;
                }
                idle = self.available.wait(idle).expect("pool lock poisoned");
            }
        };
        let out = f(&mut conn);
        self.idle.lock().expect("pool lock poisoned").push(conn);
        self.available.notify_one();
        out
    }
}

impl Predictor for ExternalPredictor {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: self.info.name.clone(),
            t_past: Some(self.info.t_past),
            t_future: self.info.t_future,
            max_batch: self.info.max_batch,
        }
    }

    fn predict_many(
        &self,
        scenes: &[ScenePast],
        k: usize,
        seed: Option<u64>,
    ) -> Result<Vec<PredictionBatch>> {
        if let Some(bad) = scenes.iter().position(|s| s.t_past() != self.info.t_past) {
            return Err(Error::predictor(format!(
                "scene {bad} has {} past steps, predictor declared {}",
                scenes[bad].t_past(),
                self.info.t_past
            )));
        }
        let seed = seed.unwrap_or_else(entropy_seed);
        let mut out = Vec::with_capacity(scenes.len());
        for (i, chunk) in scenes.chunks(self.info.max_batch).enumerate() {
            let request = Request::Predict {
                seed: Some(chunk_seed(seed, i)),
                k,
                scenes: chunk.iter().map(WireScene::from_past).collect(),
            };
            let reply: PredictReply = self.with_connection(|c| c.request(&request))?;
            let batches = reply_to_batches(reply, chunk[0].unit())?;
            validate_batches(&batches, chunk.len(), k, self.info.t_future)?;
            out.extend(batches);
        }
        Ok(out)
    }
}
