//! Analog circuit synthesis framework: natural-language design tasks are
//! turned into verified, sized SPICE netlists.
//!
//! The pieces, in pipeline order:
//!
//! - [`prompt`] renders design / repair / waveform-analysis / extraction
//!   prompts and pulls code blocks out of model responses.
//! - [`llm`] is a provider-agnostic chat client with transcript
//!   record/replay so every run is reproducible offline.
//! - [`circuit`] is the netlist intermediate representation plus the SPICE
//!   text round trip (with `* META` node-role directives).
//! - [`sim`] drives an external SPICE engine in batch mode and parses its
//!   ASCII raw output into typed waveforms.
//! - [`verify`] runs the five-stage check pipeline (requirements, operating
//!   point, DC sweep, function, waveform images).
//! - [`library`] archives verified subcircuits and retrieves them by task
//!   description for composite designs.
//! - [`sizing`] validates LLM-extracted parameter spaces, decouples the
//!   input bias via multi-resolution search, and runs TPE optimization.
//! - [`bench`] orchestrates the design loop, pass@k scoring, and the
//!   benchmark harness.
//!
//! The bundled `minispice` binary is a small level-1 engine used when no
//! external simulator is configured; [`engine`] holds its implementation.

pub mod analysis;
pub mod bench;
pub mod circuit;
pub mod config;
pub mod engine;
pub mod library;
pub mod llm;
pub mod prompt;
pub mod sim;
pub mod sizing;
pub mod verify;
