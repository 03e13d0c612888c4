//! Thin async client for the session service: HTTP endpoints through
//! reqwest and live sessions over a websocket.

use futures::{SinkExt, StreamExt};
use hubsim_core::api::{
    BatchResponse, CalibrateRequest, CalibrateResponse, CommandRequest, CommandResponse, CreateSession, ErrorBody,
    Health, ReplayResponse, SessionCreated, SessionStatus,
};
use hubsim_core::batch::BatchSpec;
use hubsim_core::wire::{decode_exact, encode_frame, WireBody, WireMessage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {}", body.error)]
    Api { status: u16, body: ErrorBody },
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error(transparent)]
    Wire(#[from] hubsim_core::Error),
    #[error("unexpected {0} message from server")]
    Unexpected(&'static str),
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Client {
        Client { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody { kind: "http".into(), error: text, seq: None });
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Ok(Self::check(self.http.get(self.url(path)).send().await?).await?.json().await?)
    }

    async fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Ok(Self::check(self.http.post(self.url(path)).json(body).send().await?).await?.json().await?)
    }

    async fn post_text(&self, path: &str, body: String) -> Result<reqwest::Response> {
        let req = self.http.post(self.url(path)).header("content-type", "text/plain").body(body);
        Self::check(req.send().await?).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get_json("/health").await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionCreated> {
        self.post_json("/sessions", req).await
    }

    pub async fn status(&self, session: &str) -> Result<SessionStatus> {
        self.get_json(&format!("/sessions/{session}/snapshot")).await
    }

    pub async fn log(&self, session: &str) -> Result<String> {
        let resp = Self::check(self.http.get(self.url(&format!("/sessions/{session}/log"))).send().await?).await?;
        Ok(resp.text().await?)
    }

    pub async fn command(&self, session: &str, req: &CommandRequest) -> Result<CommandResponse> {
        self.post_json(&format!("/sessions/{session}/commands"), req).await
    }

    pub async fn batch(&self, spec: &BatchSpec) -> Result<BatchResponse> {
        self.post_json("/batch", spec).await
    }

    pub async fn replay(&self, log_text: String) -> Result<ReplayResponse> {
        Ok(self.post_text("/replay", log_text).await?.json().await?)
    }

    pub async fn metrics(&self, log_text: String) -> Result<String> {
        Ok(self.post_text("/metrics", log_text).await?.text().await?)
    }

    pub async fn calibrate(&self, req: &CalibrateRequest) -> Result<CalibrateResponse> {
        self.post_json("/calibrate", req).await
    }

    /// Opens the session's websocket. Nothing is sent until [`Live::join`].
    pub async fn connect(&self, session: &str) -> Result<Live> {
        let ws_base = self.base.replacen("http", "ws", 1);
        let (ws, _) = tokio_tungstenite::connect_async(format!("{ws_base}/sessions/{session}/ws")).await?;
        Ok(Live { ws, session: session.to_string(), seq: 0 })
    }
}

/// Operator side of a live session.
pub struct Live {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    session: String,
    seq: u64,
}

impl Live {
    pub fn session_id(&self) -> &str {
        &self.session
    }

    pub async fn send(&mut self, body: WireBody) -> Result<u64> {
        self.seq += 1;
        let msg = WireMessage::new(self.session.clone(), self.seq, body);
        self.send_raw(encode_frame(&msg)).await?;
        Ok(self.seq)
    }

    /// Sends bytes as one binary message, bypassing encoding.
    pub async fn send_raw(&mut self, bytes: Vec<u8>) -> Result<()> {
        self.ws.send(Message::Binary(bytes.into())).await?;
        Ok(())
    }

    /// Next server message, or `None` once the server closes the socket.
    pub async fn recv(&mut self) -> Result<Option<WireMessage>> {
        while let Some(msg) = self.ws.next().await {
            match msg? {
                Message::Binary(b) => return Ok(Some(decode_exact(&b)?)),
                Message::Close(_) => return Ok(None),
                Message::Text(_) => return Err(ClientError::Unexpected("text")),
                _ => {}
            }
        }
        Ok(None)
    }

    /// Sends `Join` and waits for the `Hello`.
    pub async fn join(&mut self) -> Result<hubsim_core::wire::Hello> {
        self.send(WireBody::Join { view: None }).await?;
        loop {
            match self.recv().await?.map(|m| m.body) {
                Some(WireBody::Hello(h)) => return Ok(h),
                Some(WireBody::Error { .. }) => return Err(ClientError::Unexpected("error")),
                Some(_) => {}
                None => return Err(ClientError::Unexpected("close")),
            }
        }
    }

    pub async fn close(mut self) -> Result<()> {
        self.ws.close(None).await?;
        Ok(())
    }
}
