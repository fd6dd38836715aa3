//! Link-level simulation library for RIS-aided V2X sidelink communication.
//!
//! The crate is organised as a pipeline of pure, seeded stages:
//!
//! * [`scenario`] — configuration, freeway geometry and mobility;
//! * [`channel`] — twin-structured sparse cascaded channels, Rician direct
//!   links, double-fading path loss and Gauss-Markov channel aging;
//! * [`tracker`] — dynamic twin-structured-sparsity channel tracking
//!   (structured matching pursuit, MMSE gains, off-grid angle refinement);
//! * [`protocol`] — sidelink frame structure, pilot/power accounting,
//!   Mode-1 dynamic grants and Mode-2 sensing/selection windows;
//! * [`allocator`] — Mode-1 active-RIS beamforming (robust and non-robust)
//!   and Mode-2 tile/PSC assignment with PRB reuse and power control.
//!
//! Every stage is a function of its inputs plus a named random substream
//! derived from one root seed, so identical configurations reproduce
//! identical results bit for bit, including under parallel execution.

pub mod allocator;
pub mod channel;
pub mod error;
pub mod numerics;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod tracker;

pub use error::CoreError;
