//! Rejection reasons shared by the component verifiers, and role-based
//! selection of the value a component proof authenticates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::template::{ParseError, ParseTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    BadSignature,
    WrongDomain,
    CipherMismatch,
    HashMismatch,
    UntrustedMeasurement,
    TemplateMismatch,
    ParseFailure,
    ValueMismatch,
    UnsupportedComponent,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadSignature => "bad-signature",
            RejectReason::WrongDomain => "wrong-domain",
            RejectReason::CipherMismatch => "cipher-mismatch",
            RejectReason::HashMismatch => "hash-mismatch",
            RejectReason::UntrustedMeasurement => "untrusted-measurement",
            RejectReason::TemplateMismatch => "template-mismatch",
            RejectReason::ParseFailure => "parse-failure",
            RejectReason::ValueMismatch => "value-mismatch",
            RejectReason::UnsupportedComponent => "unsupported-component",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl Rejection {
    pub fn new(reason: RejectReason, detail: impl Into<String>) -> Self {
        Self { reason, detail: detail.into() }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.detail)
    }
}

impl std::error::Error for Rejection {}

/// Which authenticated value a standalone check compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    CoreOutput,
    ToolInput,
    ToolResult,
}

/// A request input and response that a component proof vouches for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Authenticated {
    /// The input `x` recovered from the request.
    pub input: Vec<u8>,
    /// The full HTTP response.
    pub response: Vec<u8>,
}

pub(crate) fn parse_failure(e: ParseError) -> Rejection {
    Rejection::new(RejectReason::ParseFailure, e.to_string())
}

impl Authenticated {
    pub fn input_str(&self) -> Result<&str, Rejection> {
        std::str::from_utf8(&self.input).map_err(|_| Rejection::new(RejectReason::TemplateMismatch, "input is not UTF-8"))
    }

    /// The value this exchange authenticates in `role`.
    pub fn value(&self, role: Role, parser: &ParseTemplate) -> Result<String, Rejection> {
        match role {
            Role::CoreOutput => parser.parse_core(&self.response).map(|o| o.output).map_err(parse_failure),
            Role::ToolInput => self.input_str().map(str::to_string),
            Role::ToolResult => parser.parse_tool(&self.response, self.input_str()?).map_err(parse_failure),
        }
    }

    /// Accepts iff `m` equals the value authenticated in `role`.
    pub fn check(&self, m: &str, role: Role, parser: &ParseTemplate) -> Result<(), Rejection> {
        let v = self.value(role, parser)?;
        if v == m {
            Ok(())
        } else {
            Err(Rejection::new(RejectReason::ValueMismatch, format!("claimed {m:?}, authenticated {v:?}")))
        }
    }
}
