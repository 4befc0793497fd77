//! Client for evaluator workers running as child processes.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::protocol::{DumpShapes, Hello, Message, PROTOCOL_VERSION};
use super::{EvalRequest, EvalResult, Evaluator};
use crate::error::{EvaluatorUnavailable, ProtocolError};
use crate::model_graph::{ArchitectureGraph, Shape};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerSettings {
    /// Shell command that starts one worker.
    pub command: String,
    pub dataset: String,
    pub input_shape: Shape,
    pub num_classes: u32,
    pub timeout_secs: f64,
    pub pool_size: usize,
}

impl Default for WorkerSettings {
    fn default() -> Self {
        Self {
            command: String::new(),
            dataset: "cifar10".into(),
            input_shape: Shape::new(32, 32, 3),
            num_classes: 10,
            timeout_secs: 3600.0,
            pool_size: 1,
        }
    }
}

impl WorkerSettings {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

fn kill_group(child: &mut Child) {
    #[cfg(unix)]
    if let Ok(pid) = libc::pid_t::try_from(child.id()) {
        // SAFETY: plain syscall on the group created at spawn time
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// One live worker process with a completed handshake.
pub struct WorkerConn {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    alive: bool,
}

impl WorkerConn {
    pub fn spawn(settings: &WorkerSettings) -> Result<Self, ProtocolError> {
        let mut command = Command::new("sh");
        command.arg("-c").arg(&settings.command).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::inherit());
        // own process group, so killing it also reaches whatever the shell started
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut command, 0);
        let mut child = command.spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
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
        let mut conn = Self { child, stdin, lines: rx, timeout: settings.timeout(), alive: true };
        conn.handshake(settings)?;
        Ok(conn)
    }

    fn handshake(&mut self, settings: &WorkerSettings) -> Result<(), ProtocolError> {
        self.send(&Message::Hello(Hello {
            protocol_version: PROTOCOL_VERSION,
            dataset: settings.dataset.clone(),
            input_shape: settings.input_shape,
            num_classes: settings.num_classes,
        }))?;
        match self.recv()? {
            Message::Hello(h) if h.protocol_version == PROTOCOL_VERSION => Ok(()),
            Message::Hello(h) => {
                self.kill();
                Err(ProtocolError::VersionMismatch { client: PROTOCOL_VERSION, worker: h.protocol_version })
            }
            other => {
                self.kill();
                Err(ProtocolError::Unexpected { expected: "hello", got: other.kind().into() })
            }
        }
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        let mut line = msg.to_line();
        line.push('\n');
        let res = self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush());
        if res.is_err() {
            self.alive = false;
        }
        Ok(res?)
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => {
                    self.alive = false;
                    return Err(e.into());
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.kill();
                    return Err(ProtocolError::Timeout(self.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.alive = false;
                    return Err(ProtocolError::Closed);
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Message::from_line(&line).inspect_err(|_| self.kill());
        }
    }

    fn kill(&mut self) {
        self.alive = false;
        kill_group(&mut self.child);
    }

    /// Send one request and wait for its result. Transport problems come
    /// back as an error result with zero fitness.
    pub fn evaluate<F: Scalar>(&mut self, req: &EvalRequest) -> EvalResult<F> {
        match self.exchange(req) {
            Ok(r) => r,
            Err(e) => EvalResult::failure(&req.request_id, e.to_string(), F::zero()),
        }
    }

    fn exchange<F: Scalar>(&mut self, req: &EvalRequest) -> Result<EvalResult<F>, ProtocolError> {
        self.send(&Message::EvalRequest(req.clone()))?;
        match self.recv()? {
            Message::EvalResult(r) if r.request_id == req.request_id => {
                let r: EvalResult<F> = r.cast();
                if r.is_well_formed() {
                    Ok(r)
                } else {
                    Err(ProtocolError::Malformed(format!("result for {} violates its contract", req.request_id)))
                }
            }
            Message::EvalResult(r) => {
                self.kill();
                Err(ProtocolError::Malformed(format!("result for {} answers {}", r.request_id, req.request_id)))
            }
            other => {
                self.kill();
                Err(ProtocolError::Unexpected { expected: "eval_result", got: other.kind().into() })
            }
        }
    }

    /// Node output shapes as the worker's framework builds them.
    pub fn dump_shapes(&mut self, request_id: &str, graph: &ArchitectureGraph) -> Result<Vec<Shape>, ProtocolError> {
        self.send(&Message::DumpShapes(DumpShapes { request_id: request_id.into(), graph: graph.clone() }))?;
        match self.recv()? {
            Message::Shapes(s) if s.request_id == request_id => match s.error {
                Some(e) => Err(ProtocolError::Malformed(format!("worker could not build graph: {e}"))),
                None => Ok(s.shapes),
            },
            other => Err(ProtocolError::Unexpected { expected: "shapes", got: other.kind().into() }),
        }
    }

    pub fn shutdown(mut self) {
        self.close();
    }

    fn close(&mut self) {
        if self.alive {
            let _ = self.send(&Message::Shutdown);
            let deadline = Instant::now() + Duration::from_secs(2);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = self.child.try_wait() {
                    break;
                }
                thread::sleep(Duration::from_millis(10));
            }
        }
        self.kill();
    }
}

impl Drop for WorkerConn {
    fn drop(&mut self) {
        if self.alive {
            self.close();
        } else {
            kill_group(&mut self.child);
        }
    }
}

/// Pool of worker processes, one request in flight per worker. Dead workers
/// are restarted on the next request.
pub struct ExternalEvaluator {
    settings: WorkerSettings,
    slots: Vec<Mutex<Option<WorkerConn>>>,
    next: AtomicUsize,
}

impl ExternalEvaluator {
    pub fn new(settings: WorkerSettings) -> Self {
        let n = settings.pool_size.max(1);
        Self { settings, slots: (0..n).map(|_| Mutex::new(None)).collect(), next: AtomicUsize::new(0) }
    }

    pub fn settings(&self) -> &WorkerSettings {
        &self.settings
    }

    fn with_worker<T>(
        &self,
        f: impl FnOnce(&mut WorkerConn) -> T,
    ) -> Result<T, EvaluatorUnavailable> {
        let start = self.next.fetch_add(1, Ordering::Relaxed) % self.slots.len();
        let mut guard = (0..self.slots.len())
            .find_map(|k| self.slots[(start + k) % self.slots.len()].try_lock().ok())
            .unwrap_or_else(|| self.slots[start].lock().unwrap_or_else(|p| p.into_inner()));
        if !guard.as_ref().is_some_and(WorkerConn::is_alive) {
            *guard = None;
            let conn = WorkerConn::spawn(&self.settings)
                .map_err(|e| EvaluatorUnavailable(format!("cannot start worker `{}`: {e}", self.settings.command)))?;
            *guard = Some(conn);
        }
        Ok(f(guard.as_mut().expect("worker present")))
    }

    pub fn dump_shapes(&self, request_id: &str, graph: &ArchitectureGraph) -> Result<Vec<Shape>, EvaluatorUnavailable> {
        self.with_worker(|w| w.dump_shapes(request_id, graph))?.map_err(|e| EvaluatorUnavailable(e.to_string()))
    }

    pub fn shutdown(&self) {
        for slot in &self.slots {
            if let Some(conn) = slot.lock().unwrap_or_else(|p| p.into_inner()).take() {
                conn.shutdown();
            }
        }
    }
}

impl<F: Scalar> Evaluator<F> for ExternalEvaluator {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResult<F>, EvaluatorUnavailable> {
        self.with_worker(|w| w.evaluate(request))
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        self.shutdown();
    }
}
