//! Newline-delimited JSON messages exchanged with evaluator workers.
//!
//! Each line is one object tagged by `type`:
//!
//! ```text
//! -> {"type":"hello","protocol_version":1,"dataset":"cifar10","input_shape":{..},"num_classes":10}
//! <- {"type":"hello","protocol_version":1,...}
//! -> {"type":"eval_request","request_id":"r0","graph":{..},"warm_start_from":null,"transfer_map":[],"epochs":5,...}
//! <- {"type":"eval_result","request_id":"r0","fitness":0.5123,"model_ref":"m0","cost_units":5.0}
//! -> {"type":"shutdown"}
//! ```
//!
//! `dump_shapes` asks a worker for the output shape of every node of a graph
//! as built by its framework; the worker answers with `shapes`.

use serde::{Deserialize, Serialize};

use super::{EvalRequest, EvalResult};
use crate::error::ProtocolError;
use crate::model_graph::{ArchitectureGraph, Shape};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol_version: u32,
    pub dataset: String,
    pub input_shape: Shape,
    pub num_classes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpShapes {
    pub request_id: String,
    pub graph: ArchitectureGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shapes {
    pub request_id: String,
    #[serde(default)]
    pub shapes: Vec<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello(Hello),
    EvalRequest(EvalRequest),
    EvalResult(EvalResult<f64>),
    DumpShapes(DumpShapes),
    Shapes(Shapes),
    Shutdown,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::EvalRequest(_) => "eval_request",
            Message::EvalResult(_) => "eval_result",
            Message::DumpShapes(_) => "dump_shapes",
            Message::Shapes(_) => "shapes",
            Message::Shutdown => "shutdown",
        }
    }

    /// One line of the wire format, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(line.trim_end()).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
}
