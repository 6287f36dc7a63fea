//! Minimal client used by tests and the command line.

use futures_util::{SinkExt, StreamExt};
use std::time::Duration;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::{self, Message};
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use crate::protocol::{CommandMessage, ServerMessage, StateSnapshot};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Ws(#[from] tungstenite::Error),
    #[error("bad server frame: {0}")]
    Decode(String),
    #[error("connection closed")]
    Closed,
    #[error("timed out")]
    Timeout,
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Client {
    pub async fn connect(url: &str) -> Result<Self, ClientError> {
        let (ws, _) = tokio_tungstenite::connect_async(url).await?;
        Ok(Self { ws })
    }

    pub async fn send(&mut self, msg: &CommandMessage) -> Result<(), ClientError> {
        let text = serde_json::to_string(msg).map_err(|e| ClientError::Decode(e.to_string()))?;
        self.send_raw(Message::text(text)).await
    }

    pub async fn send_raw(&mut self, msg: Message) -> Result<(), ClientError> {
        Ok(self.ws.send(msg).await?)
    }

    /// Next server message of any kind.
    pub async fn recv(&mut self, timeout: Duration) -> Result<ServerMessage, ClientError> {
        loop {
            let frame = tokio::time::timeout(timeout, self.ws.next())
                .await
                .map_err(|_| ClientError::Timeout)?
                .ok_or(ClientError::Closed)??;
            match frame {
                Message::Text(t) => {
                    return serde_json::from_str(t.as_str()).map_err(|e| ClientError::Decode(e.to_string()))
                }
                Message::Close(_) => return Err(ClientError::Closed),
                _ => continue,
            }
        }
    }

    /// Next snapshot, skipping error replies.
    pub async fn snapshot(&mut self, timeout: Duration) -> Result<StateSnapshot, ClientError> {
        loop {
            if let ServerMessage::State(s) = self.recv(timeout).await? {
                return Ok(*s);
            }
        }
    }

    /// Next error reply, skipping snapshots.
    pub async fn error(&mut self, timeout: Duration) -> Result<String, ClientError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            if let ServerMessage::Error { detail } = self.recv(left).await? {
                return Ok(detail);
            }
        }
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}
