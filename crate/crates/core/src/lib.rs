//! Verifiable execution traces for API-based agents.
//!
//! An agent is a core (a remote model endpoint) plus a set of tools. Every
//! invocation of either is backed by a component proof: a notarized transcript
//! ([`webproof`]) or a signed proxy attestation ([`proxy`]). The [`composer`]
//! bundles those proofs with the execution trace, and a verifier rebuilt from
//! the agent identity document ([`aid`]) checks the bundle offline.

pub mod agent;
pub mod aid;
pub mod canonical;
pub mod clock;
pub mod commitment;
pub mod composer;
pub mod crypto;
pub mod demo;
pub mod http;
pub mod mock;
pub mod net;
pub mod notary;
pub mod proxy;
pub mod sim;
pub mod template;
pub mod tls;
pub mod verdict;
pub mod webproof;

pub use agent::{rebuild_transcript, run_agent, ExecutionTrace, StepRecord, Transcript};
pub use aid::{canonicalize, compute_id, instantiate_verifier, validate, AgentIdentityDocument};
pub use composer::{verify_trace, ComponentProof, VerifiableExecutionTrace};
