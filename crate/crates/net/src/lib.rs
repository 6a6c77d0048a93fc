//! Two-process LOCC session: Alice holds the simulated quantum state and the
//! pointer, Bob only sees classical messages and asks Alice's state-holder to
//! carry out his projection.

pub mod codec;
pub mod message;
pub mod session;
pub mod transcript;

pub use codec::{decode, encode, DecodeError, MAX_FRAME};
pub use message::{AbortReason, Body, Message, Role, WireMatrix};
pub use session::{
    run_bob, run_session, serve_alice, NetError, SessionConfig, SessionOutcome, DEFAULT_TIMEOUT,
};
pub use transcript::{read_transcript, Direction, Record};
