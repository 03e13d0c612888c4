//! Websocket transport. Each binary message carries one length-prefixed
//! wire frame. The reader validates frames and forwards them to the
//! session; the writer drains the session's outbound queue.

use std::sync::atomic::{AtomicU64, Ordering};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use futures::{SinkExt, StreamExt};
use hubsim_core::wire::{decode_exact, encode_frame, WireBody, WireMessage};
use tokio::sync::{mpsc, oneshot};

use crate::session::SessionMsg;
use crate::{ApiError, AppState};

static NEXT_CONN: AtomicU64 = AtomicU64::new(1);

pub async fn upgrade(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    Ok(ws.on_upgrade(move |socket| connection(socket, id, session)))
}

async fn connection(socket: WebSocket, id: String, session: mpsc::Sender<SessionMsg>) {
    let conn = NEXT_CONN.fetch_add(1, Ordering::Relaxed);
    let (mut sink, mut stream) = socket.split();
    let (out, mut outbound) = mpsc::unbounded_channel::<WireMessage>();
    let (reply, attached) = oneshot::channel();
    if session.send(SessionMsg::Attach { conn, out, reply }).await.is_err() {
        return;
    }
    match attached.await {
        Ok(Ok(())) => {}
        Ok(Err(reason)) => {
            let msg = WireMessage::new(id, 0, WireBody::Error { message: reason });
            let _ = sink.send(Message::Binary(encode_frame(&msg).into())).await;
            let _ = sink.send(Message::Close(None)).await;
            return;
        }
        Err(_) => return,
    }

    let writer = tokio::spawn(async move {
        while let Some(msg) = outbound.recv().await {
            if sink.send(Message::Binary(encode_frame(&msg).into())).await.is_err() {
                return;
            }
        }
        let _ = sink.send(Message::Close(None)).await;
    });

    let mut joined = false;
    let mut last_seq = None;
    while let Some(Ok(msg)) = stream.next().await {
        let bytes = match msg {
            Message::Binary(b) => b,
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
            Message::Text(_) => {
                violation(&session, conn, "text messages are not part of the protocol".into()).await;
                break;
            }
        };
        let msg = match decode_exact(&bytes) {
            Ok(m) => m,
            Err(e) => {
                violation(&session, conn, e.to_string()).await;
                break;
            }
        };
        if let Err(reason) = check(&msg, &id, joined, last_seq) {
            violation(&session, conn, reason).await;
            break;
        }
        joined = true;
        last_seq = Some(msg.seq);
        if session.send(SessionMsg::Client { conn, body: msg.body }).await.is_err() {
            break;
        }
    }
    let _ = session.send(SessionMsg::Detach { conn }).await;
    let _ = writer.await;
}

fn check(msg: &WireMessage, id: &str, joined: bool, last_seq: Option<u64>) -> Result<(), String> {
    if msg.session_id != id {
        return Err(format!("frame addressed to session {}", msg.session_id));
    }
    if !msg.body.is_client_message() {
        return Err("server-to-client message sent by client".into());
    }
    if last_seq.is_some_and(|s| msg.seq <= s) {
        return Err(format!("seq {} does not increase", msg.seq));
    }
    if !joined && !matches!(msg.body, WireBody::Join { .. }) {
        return Err("first message must be Join".into());
    }
    Ok(())
}

async fn violation(session: &mpsc::Sender<SessionMsg>, conn: u64, reason: String) {
    tracing::warn!(conn, "protocol violation: {reason}");
    let _ = session.send(SessionMsg::Violation { conn, reason: format!("protocol violation: {reason}") }).await;
}
