//! WebSocket teleoperation endpoint for the simulated robot.

pub mod client;
pub mod protocol;
pub mod service;

pub use client::{Client, ClientError};
pub use protocol::{CommandMessage, ProtocolError, ServerMessage, StateSnapshot};
pub use service::{spawn, ServeConfig, ServerHandle, TeleopError, World};
