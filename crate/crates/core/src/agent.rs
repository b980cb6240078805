//! The agent abstraction: a core that maps transcripts to an output plus tool
//! invocations, a set of named tools, and the recorded execution trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::string_num;

/// Frame tags used when flattening a trace into a transcript.
pub mod tag {
    pub const INITIAL_INPUT: u8 = b'I';
    pub const CORE_OUTPUT: u8 = b'Y';
    pub const TOOL_ID: u8 = b'T';
    pub const TOOL_INPUT: u8 = b'X';
    pub const TOOL_RESULT: u8 = b'R';
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("core requested unknown tool {0:?}")]
    UnknownTool(String),
    #[error("step {requested} out of range (trace has {len} steps)")]
    StepOutOfRange { requested: usize, len: usize },
    #[error("max_steps must be at least 1")]
    ZeroSteps,
    #[error("core failed: {0}")]
    Core(String),
    #[error("tool {tool:?} failed: {message}")]
    Tool { tool: String, message: String },
    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub id: String,
    pub endpoint: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreDescriptor {
    pub model: String,
    pub endpoint: String,
}

/// A tool invocation emitted by the core, before it is executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool: String,
    pub input: String,
}

/// What the core returns for one transcript.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoreOutput {
    pub output: String,
    pub calls: Vec<ToolInvocation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCall {
    pub tool: String,
    pub input: String,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    #[serde(with = "string_num")]
    pub step_index: u64,
    pub core_output: String,
    pub tool_calls: Vec<ToolCall>,
}

impl StepRecord {
    pub fn invocations(&self) -> Vec<ToolInvocation> {
        self.tool_calls.iter().map(|c| ToolInvocation { tool: c.tool.clone(), input: c.input.clone() }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionTrace {
    pub initial_input: String,
    pub steps: Vec<StepRecord>,
    /// Set when the loop stopped at `max_steps` while the core still had
    /// tool calls outstanding.
    #[serde(default)]
    pub truncated: bool,
}

/// Length-prefixed byte transcript fed to the core.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Transcript(Vec<u8>);

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Appends one frame: tag byte, 4-byte big-endian length, payload.
    pub fn push_frame(&mut self, tag: u8, payload: &[u8]) {
        let len = u32::try_from(payload.len()).expect("frame payload exceeds 4 GiB");
        self.0.push(tag);
        self.0.extend_from_slice(&len.to_be_bytes());
        self.0.extend_from_slice(payload);
    }

    /// Splits the transcript back into `(tag, payload)` frames.
    pub fn frames(&self) -> Result<Vec<(u8, &[u8])>, AgentError> {
        let mut out = Vec::new();
        let mut rest = self.0.as_slice();
        while !rest.is_empty() {
            if rest.len() < 5 {
                return Err(AgentError::MalformedTranscript("truncated frame header".into()));
            }
            let tag = rest[0];
            let len = u32::from_be_bytes(rest[1..5].try_into().unwrap()) as usize;
            if rest.len() < 5 + len {
                return Err(AgentError::MalformedTranscript("truncated frame payload".into()));
            }
            out.push((tag, &rest[5..5 + len]));
            rest = &rest[5 + len..];
        }
        Ok(out)
    }

    pub(crate) fn push_step(&mut self, step: &StepRecord) {
        self.push_frame(tag::CORE_OUTPUT, step.core_output.as_bytes());
        for call in &step.tool_calls {
            self.push_frame(tag::TOOL_ID, call.tool.as_bytes());
            self.push_frame(tag::TOOL_INPUT, call.input.as_bytes());
            self.push_frame(tag::TOOL_RESULT, call.result.as_bytes());
        }
    }
}

/// The reasoning core. Implementations may be scripted, mocked, or backed by
/// a notarized API session.
pub trait Core {
    fn respond(&mut self, transcript: &Transcript) -> Result<CoreOutput, AgentError>;
}

pub trait Tool {
    fn call(&mut self, input: &str) -> Result<String, AgentError>;
}

/// Adapts a closure into a [`Tool`].
pub struct FnTool<F>(pub F);

impl<F: FnMut(&str) -> String> Tool for FnTool<F> {
    fn call(&mut self, input: &str) -> Result<String, AgentError> {
        Ok((self.0)(input))
    }
}

pub type ToolSet<'a> = BTreeMap<String, Box<dyn Tool + 'a>>;

/// Runs the core/tool loop until the core emits no tool calls or `max_steps`
/// core invocations have happened.
///
/// Tool calls execute in the order the core emitted them.
pub fn run_agent(core: &mut dyn Core, tools: &mut ToolSet<'_>, input: &str, max_steps: usize) -> Result<ExecutionTrace, AgentError> {
    if max_steps == 0 {
        return Err(AgentError::ZeroSteps);
    }
    let mut transcript = Transcript::new();
    transcript.push_frame(tag::INITIAL_INPUT, input.as_bytes());
    let mut steps = Vec::new();
    let mut truncated = false;

    for j in 0..max_steps {
        let CoreOutput { output, calls } = core.respond(&transcript)?;
        let mut tool_calls = Vec::with_capacity(calls.len());
        for call in calls {
            let tool = tools.get_mut(&call.tool).ok_or_else(|| AgentError::UnknownTool(call.tool.clone()))?;
            let result = tool.call(&call.input)?;
            tool_calls.push(ToolCall { tool: call.tool, input: call.input, result });
        }
        let step = StepRecord { step_index: j as u64, core_output: output, tool_calls };
        transcript.push_step(&step);
        let done = step.tool_calls.is_empty();
        steps.push(step);
        if done {
            break;
        }
        if j + 1 == max_steps {
            truncated = true;
        }
    }
    Ok(ExecutionTrace { initial_input: input.to_string(), steps, truncated })
}

/// The transcript the core saw before producing step `upto_step`: the initial
/// input frame followed by every earlier step's output, calls and results.
pub fn rebuild_transcript(trace: &ExecutionTrace, upto_step: usize) -> Result<Transcript, AgentError> {
    if upto_step >= trace.steps.len() {
        return Err(AgentError::StepOutOfRange { requested: upto_step, len: trace.steps.len() });
    }
    let mut transcript = Transcript::new();
    transcript.push_frame(tag::INITIAL_INPUT, trace.initial_input.as_bytes());
    for step in &trace.steps[..upto_step] {
        transcript.push_step(step);
    }
    Ok(transcript)
}

/// A core that replays a fixed list of responses and remembers every
/// transcript it was shown.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCore {
    pub script: Vec<CoreOutput>,
    pub seen: Vec<Transcript>,
}

impl ScriptedCore {
    pub fn new(script: Vec<CoreOutput>) -> Self {
        Self { script, seen: Vec::new() }
    }
}

impl Core for ScriptedCore {
    fn respond(&mut self, transcript: &Transcript) -> Result<CoreOutput, AgentError> {
        let j = self.seen.len();
        self.seen.push(transcript.clone());
        self.script.get(j).cloned().ok_or_else(|| AgentError::Core(format!("script exhausted at step {j}")))
    }
}
