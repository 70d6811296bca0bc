//! WebSocket bridge between a running [`pps_sim::Simulation`] and any number
//! of visualisation clients. Clients receive one `state` message per tick and
//! may send commands, which are acknowledged with the tick they take effect on.

pub mod live;
pub mod protocol;
pub mod server;

pub use live::LiveSession;
pub use protocol::{
    command_message, parse_command, AckPayload, Envelope, ErrorPayload, Kind, ProtocolError, StatePayload, SCHEMA,
};
pub use server::{BridgeServer, Inbound, ServerOptions};

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    WebSocket(#[from] tungstenite::Error),
    #[error("websocket handshake: {0}")]
    Handshake(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] pps_sim::SimError),
}
