//! Core engine for evaluating physical-computing artifacts.
//!
//! The crate is layered bottom-up:
//!
//! - [`circuit`]: the circuit JSON document model (logical and physical kinds)
//! - [`components`]: the component catalog shared by the netlist and simulator
//! - [`netlist`]: breadboard-aware electrical net partitioning
//! - [`validate`]: structural circuit checks
//! - [`firmware`]: lexer, parser, bytecode interpreter and code metrics for
//!   the Arduino-flavored firmware language
//! - [`sim`]: the digital-abstraction circuit simulator hosting the firmware
//! - [`testproc`]: timed test procedures executed against a simulation

pub mod circuit;
pub mod components;
pub mod firmware;
pub mod netlist;
pub mod sim;
pub mod testproc;
pub mod validate;

pub use circuit::{
    circuit_stats, parse_circuit, parse_endpoint, serialize_circuit, CircuitDoc, CircuitError,
    CircuitKind, CircuitStats, ComponentDecl, Connection, Endpoint, Rail,
};
pub use netlist::{build_nets, reduce_to_logical, same_net, NetPartition, StaticBridgeTable};
pub use validate::{validate, ErrorCategory, Finding, ValidationReport};
pub use firmware::{parse_program, FirmwareError, Program};
pub use sim::{new_sim, BoardProfile, Event, EventKind, Observation, Query, SimAction, SimError, SimInstance, SimIssue};
pub use testproc::{parse_testproc, run_procedure, TestProcError, TestProcedure, Verdict};
