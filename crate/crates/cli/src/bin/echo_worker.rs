//! Minimal evaluator worker for exercising the line protocol without training.
//!
//! Scores requests with the analytic surrogate (or a fixed fitness), keeps a
//! store of the graphs it has "trained" so warm starts can be checked (in
//! memory, or in a directory shared by a pool of workers), and
//! answers `dump_shapes` with the decoder's own shape inference. Flags inject
//! the failure modes a real worker can show.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use vlga::evaluators::protocol::{Hello, Message, Shapes, PROTOCOL_VERSION};
use vlga::evaluators::{EvalRequest, EvalResult, ModelRef, SurrogateParams};
use vlga::ArchitectureGraph;

#[derive(Parser, Debug)]
#[command(about = "Line-protocol evaluator worker that does no training")]
struct Args {
    /// Report this fitness for every request instead of the surrogate score.
    #[arg(long)]
    fitness: Option<f64>,
    /// Protocol version announced in the handshake.
    #[arg(long, default_value_t = PROTOCOL_VERSION)]
    protocol_version: u32,
    /// Never answer evaluation requests.
    #[arg(long)]
    hang_on_eval: bool,
    /// Exit as soon as an evaluation request arrives.
    #[arg(long)]
    exit_on_eval: bool,
    /// Answer evaluation requests with a line that is not valid JSON.
    #[arg(long)]
    garbage_on_eval: bool,
    /// Report this cost per request instead of the epoch count.
    #[arg(long)]
    cost: Option<f64>,
    /// Directory holding trained graphs, shared between workers.
    #[arg(long)]
    store: Option<PathBuf>,
}

struct Worker {
    args: Args,
    params: SurrogateParams<f64>,
    models: HashMap<ModelRef, ArchitectureGraph>,
    trained: usize,
}

impl Worker {
    fn save(&mut self, graph: &ArchitectureGraph) -> io::Result<ModelRef> {
        let model_ref = ModelRef(format!("echo-{}-{}", std::process::id(), self.trained));
        self.trained += 1;
        match &self.args.store {
            Some(dir) => fs::write(dir.join(format!("{model_ref}.json")), graph.to_json())?,
            None => {
                self.models.insert(model_ref.clone(), graph.clone());
            }
        }
        Ok(model_ref)
    }

    fn load(&self, model_ref: &ModelRef) -> Option<ArchitectureGraph> {
        match &self.args.store {
            Some(dir) => {
                let text = fs::read_to_string(dir.join(format!("{model_ref}.json"))).ok()?;
                ArchitectureGraph::from_json(&text).ok()
            }
            None => self.models.get(model_ref).cloned(),
        }
    }

    fn evaluate(&mut self, req: &EvalRequest) -> EvalResult<f64> {
        if let Err(e) = req.graph.validate() {
            return EvalResult::failure(&req.request_id, format!("invalid graph: {e}"), 0.0);
        }
        if let Some(source) = &req.warm_start_from {
            let Some(parent) = self.load(source) else {
                return EvalResult::failure(&req.request_id, format!("unknown model {source}"), 0.0);
            };
            let ids_ok = req.transfer_map.iter().all(|(c, p)| {
                let child = req.graph.nodes.get(*c);
                let parent = parent.nodes.get(*p);
                matches!((child, parent), (Some(a), Some(b)) if a.op == b.op)
            });
            if !ids_ok {
                return EvalResult::failure(&req.request_id, "transfer map does not fit the graphs", 0.0);
            }
        }
        let mut result = match self.args.fitness {
            Some(f) => EvalResult {
                request_id: req.request_id.clone(),
                fitness: f,
                model_ref: None,
                cost_units: req.epochs as f64,
                error: None,
            },
            None => self.params.evaluate(req),
        };
        if let Some(cost) = self.args.cost {
            result.cost_units = cost;
        }
        if result.error.is_none() {
            match self.save(&req.graph) {
                Ok(model_ref) => result.model_ref = Some(model_ref),
                Err(e) => return EvalResult::failure(&req.request_id, format!("cannot store model: {e}"), result.cost_units),
            }
        }
        result
    }

    fn handle(&mut self, msg: Message, out: &mut impl Write) -> io::Result<bool> {
        let reply = match msg {
            Message::Hello(h) => Message::Hello(Hello { protocol_version: self.args.protocol_version, ..h }),
            Message::EvalRequest(req) => {
                if self.args.exit_on_eval {
                    std::process::exit(1);
                }
                if self.args.hang_on_eval {
                    loop {
                        std::thread::sleep(Duration::from_secs(3600));
                    }
                }
                if self.args.garbage_on_eval {
                    writeln!(out, "this is not json")?;
                    out.flush()?;
                    return Ok(true);
                }
                Message::EvalResult(self.evaluate(&req))
            }
            Message::DumpShapes(d) => match d.graph.infer_shapes() {
                Ok(shapes) => Message::Shapes(Shapes { request_id: d.request_id, shapes, error: None }),
                Err(e) => Message::Shapes(Shapes { request_id: d.request_id, shapes: Vec::new(), error: Some(e.to_string()) }),
            },
            Message::Shutdown => return Ok(false),
            other => {
                eprintln!("echo worker: ignoring unexpected {} message", other.kind());
                return Ok(true);
            }
        };
        writeln!(out, "{}", reply.to_line())?;
        out.flush()?;
        Ok(true)
    }
}

fn main() -> io::Result<()> {
    let mut worker = Worker { args: Args::parse(), params: SurrogateParams::default(), models: HashMap::new(), trained: 0 };
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match Message::from_line(&line) {
            Ok(msg) => {
                if !worker.handle(msg, &mut out)? {
                    break;
                }
            }
            Err(e) => eprintln!("echo worker: {e}"),
        }
    }
    Ok(())
}
