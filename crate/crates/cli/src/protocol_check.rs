//! Conformance clauses for an external predictor process.

use std::time::{Duration, Instant};

use serde_json::Value;

use pacrobust_core::predictor::external::Connection;
use pacrobust_core::predictor::protocol::{parse_reply, InfoReply, PredictReply, Request, WireScene};

use crate::report::{Clause, ProtocolBody};

#[derive(Debug, Clone)]
pub struct CheckOptions {
    /// Deadline for a single reply in the timeout clause.
    pub timeout: Duration,
    /// Deadline for the process to exit after shutdown.
    pub shutdown_wait: Duration,
    pub k: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(10),
            shutdown_wait: Duration::from_secs(5),
            k: 3,
        }
    }
}

fn probe_scenes(t_past: usize) -> Vec<WireScene> {
    (0..3)
        .map(|s| {
            let v = 0.3 + 0.1 * s as f64;
            WireScene {
                agent: (0..t_past).map(|t| [v * t as f64, s as f64]).collect(),
                neighbors: (0..s)
                    .map(|n| (0..t_past).map(|t| [v * t as f64, s as f64 + 1.0 + n as f64]).collect())
                    .collect(),
            }
        })
        .collect()
}

fn predict_line(seed: Option<u64>, k: usize, scenes: &[WireScene]) -> String {
    serde_json::to_string(&Request::Predict {
        seed,
        k,
        scenes: scenes.to_vec(),
    })
    .expect("request serializes")
}

struct Checker<'a> {
    command: &'a str,
    options: &'a CheckOptions,
    clauses: Vec<Clause>,
}

impl Checker<'_> {
    fn record(&mut self, name: &str, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.clauses.push(Clause {
            name: name.into(),
            passed,
            detail,
        });
    }

    fn connect(&self) -> Result<Connection, String> {
        Connection::spawn(self.command, self.options.timeout).map_err(|e| e.to_string())
    }

    fn info(&self) -> Result<(Connection, InfoReply), String> {
        let mut c = self.connect()?;
        let info = c.info().map_err(|e| format!("info request failed: {e}"))?;
        Ok((c, info))
    }
}

fn check_shape(reply: &PredictReply, scenes: usize, k: usize, t_future: usize) -> Result<(), String> {
    if reply.predictions.len() != scenes {
        return Err(format!("{} prediction sets for {scenes} scenes", reply.predictions.len()));
    }
    for (s, set) in reply.predictions.iter().enumerate() {
        if set.len() != k {
            return Err(format!("scene {s}: {} samples, requested {k}", set.len()));
        }
        for (j, traj) in set.iter().enumerate() {
            if traj.len() != t_future {
                return Err(format!("scene {s} sample {j}: {} points, declared t_future {t_future}", traj.len()));
            }
            if traj.iter().flatten().any(|v| !v.is_finite()) {
                return Err(format!("scene {s} sample {j}: non-finite coordinate"));
            }
        }
    }
    Ok(())
}

/// Run every clause; each one uses a fresh process.
pub fn check(command: &str, options: &CheckOptions) -> ProtocolBody {
    let mut ck = Checker {
        command,
        options,
        clauses: Vec::new(),
    };
    let k = options.k;

    let handshake = ck.info();
    let info = match &handshake {
        Ok((_, i)) if i.t_past >= 1 && i.t_future >= 1 && i.max_batch >= 1 => Ok(i.clone()),
        Ok((_, i)) => Err(format!("handshake fields must be positive: {i:?}")),
        Err(e) => Err(e.clone()),
    };
    drop(handshake);
    ck.record(
        "info",
        info.as_ref()
            .map(|i| format!("t_past {} t_future {} max_batch {} name {:?}", i.t_past, i.t_future, i.max_batch, i.name))
            .map_err(Clone::clone),
    );
    let Ok(info) = info else {
        for name in ["predict-shape", "seed-determinism", "error-reply", "timeout", "shutdown"] {
            ck.record(name, Err("skipped: handshake failed".into()));
        }
        return finish(command, ck.clauses);
    };
    let scenes = probe_scenes(info.t_past);

    let shape = ck.connect().and_then(|mut c| {
        let reply = c
            .roundtrip_raw(&predict_line(Some(7), k, &scenes))
            .map_err(|e| e.to_string())?;
        let reply: PredictReply = parse_reply(&reply).map_err(|e| e.to_string())?;
        check_shape(&reply, scenes.len(), k, info.t_future)?;
        Ok(format!("{} scenes x {k} samples x {} steps", scenes.len(), info.t_future))
    });
    ck.record("predict-shape", shape);

    let determinism = ck.connect().and_then(|mut c| {
        let line = predict_line(Some(12345), k, &scenes);
        let a = c.roundtrip_raw(&line).map_err(|e| e.to_string())?;
        let b = c.roundtrip_raw(&line).map_err(|e| e.to_string())?;
        let a: Value = serde_json::from_str(&a).map_err(|e| e.to_string())?;
        let b: Value = serde_json::from_str(&b).map_err(|e| e.to_string())?;
        if a.get("error").is_some() {
            return Err(format!("seeded predict failed: {a}"));
        }
        if a == b {
            Ok("identical replies for identical seeded requests".into())
        } else {
            Err("two identical seeded requests produced different predictions".into())
        }
    });
    ck.record("seed-determinism", determinism);

    let errors = ck.connect().and_then(|mut c| {
        let reply = c.roundtrip_raw("{this is not json").map_err(|e| e.to_string())?;
        let v: Value = serde_json::from_str(&reply).map_err(|e| format!("reply is not JSON: {e}"))?;
        if !v.get("error").is_some_and(Value::is_string) {
            return Err(format!("malformed request answered without an error field: {reply}"));
        }
        c.info().map_err(|e| format!("connection unusable after an error reply: {e}"))?;
        Ok("error reply received and connection kept alive".into())
    });
    ck.record("error-reply", errors);

    let timeout = ck.connect().and_then(|mut c| {
        let start = Instant::now();
        let reply = c.roundtrip_raw(&predict_line(Some(1), 1, &scenes[..1]));
        let elapsed = start.elapsed();
        match reply {
            Ok(_) => Ok(format!("replied in {:.1} ms (limit {:?})", elapsed.as_secs_f64() * 1e3, options.timeout)),
            Err(e) => Err(e.to_string()),
        }
    });
    ck.record("timeout", timeout);

    let shutdown = ck.info().and_then(|(c, _)| {
        let status = c.shutdown(options.shutdown_wait).map_err(|e| e.to_string())?;
        if status.success() {
            Ok("exited with status 0".into())
        } else {
            Err(format!("exited with {status}"))
        }
    });
    ck.record("shutdown", shutdown);

    finish(command, ck.clauses)
}

fn finish(command: &str, clauses: Vec<Clause>) -> ProtocolBody {
    ProtocolBody {
        predictor_command: command.into(),
        passed: clauses.iter().all(|c| c.passed),
        clauses,
    }
}
