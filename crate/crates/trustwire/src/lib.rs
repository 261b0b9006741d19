//! Secure information sharing between intelligence agencies over untrusted wires.
//!
//! A source agency wraps each query in a three-layer envelope: an integrity digest,
//! a private-exponent signature blob, and recipient encryption. The target proves
//! itself back through a mapping function shared secretly by the pair, applied to
//! the request's random operand set, and releases only as much information as its
//! trust in the requester allows. `simharness` drives whole fleets of in-memory
//! agencies deterministically and reproduces the canonical disclosure table.

#![forbid(unsafe_code)]

pub mod agencynode;
pub mod digest;
pub mod handshake;
pub mod keyfabric;
pub mod simharness;
pub mod trustplane;
pub mod wirecodec;
