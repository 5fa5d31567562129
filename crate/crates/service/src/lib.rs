//! Live service: a single authoritative simulation stepped at 75 Hz, steered
//! over a websocket and broadcast to every client at 25 Hz.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{parse_client, ClientMessage, ServerMessage, ServerTick, PROTOCOL_VERSION};
pub use server::{serve, ServeOptions};
pub use session::Session;
