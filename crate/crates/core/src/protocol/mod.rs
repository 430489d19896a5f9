//! Wake-word command session protocol over a local stream socket.
//!
//! Client to service: `HELLO`, `AUDIO <nbytes>` followed by the payload,
//! `UNSET_FLAG`, `SET_FLAG`, `BYE`. Service to client: `STATE <mode>`,
//! `WAKE_DETECTED <name>`, `HYP <rank> <score> <word ...>`, `NO_SPEECH`,
//! `ERROR <code> <text>`. Lines are UTF-8 and newline-terminated.

mod message;
mod server;
mod session;

pub use message::{read_client_message, ClientMessage, Mode, ProtocolError, ServiceMessage, MAX_PAYLOAD_BYTES};
pub use server::{run_session, ServerError, ServerHandle, LISTEN_ENV};
pub use session::{replay, step, Engine, EngineError, RecognizerEngine, SessionState, Step};
