//! Session and monitor channels over WebSocket. Each text message carries
//! one or more newline-separated JSON frames.

use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use colloquy::auth::AuthError;
use colloquy::gateway::frames::error_frame;
use colloquy::gateway::FrameReceiver;
use colloquy::ids::RoomId;
use colloquy::platform::{ChannelOutcome, Platform, PlatformError};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::time::{interval, Instant, MissedTickBehavior};

use crate::http::{bearer, ApiError};
use crate::AppState;

/// Larger than the frame cap so oversize frames get an error frame back
/// instead of a dropped connection.
const MAX_WS_MESSAGE: usize = 256 * 1024;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/ws/session/:token", get(session))
        .route("/ws/monitor/:room_id", get(monitor))
}

async fn session(State(s): State<AppState>, Path(token): Path<String>, ws: WebSocketUpgrade) -> Response {
    if let Err(e) = s.platform.resolve_token(&token) {
        return ApiError(e).into_response();
    }
    ws.max_message_size(MAX_WS_MESSAGE)
        .on_upgrade(move |socket| participant_loop(s, socket, token))
}

async fn participant_loop(s: AppState, mut socket: WebSocket, token: String) {
    let (mut ch, rx) = match s.platform.connect_participant(&token) {
        Ok(c) => c,
        Err(e) => {
            let frame = error_frame(e.code(), e.to_string(), s.platform.now());
            let _ = socket.send(Message::Text(frame.encode())).await;
            let _ = socket.close().await;
            return;
        }
    };
    let platform = s.platform.clone();
    let (room, channel) = (ch.room, ch.channel);
    pump(
        socket,
        rx,
        s.heartbeat,
        |line| platform.participant_frame(&mut ch, line),
        || {
            platform.send_direct(room, channel, &binary_rejected(&platform));
        },
    )
    .await;
    s.platform.disconnect_participant(&ch);
}

#[derive(Deserialize)]
struct MonitorQuery {
    token: Option<String>,
}

async fn monitor(
    State(s): State<AppState>,
    Path(room): Path<RoomId>,
    Query(q): Query<MonitorQuery>,
    headers: HeaderMap,
    ws: WebSocketUpgrade,
) -> Response {
    // Browsers cannot set headers on an upgrade, so the session token may
    // also come as a query parameter.
    let Some(token) = bearer(&headers).map(str::to_owned).or(q.token) else {
        return ApiError(PlatformError::Auth(AuthError::InvalidSession)).into_response();
    };
    let account = match s.platform.session_account(&token) {
        Ok(a) => a,
        Err(e) => return ApiError(e).into_response(),
    };
    let (ch, rx) = match s.platform.connect_monitor(account, room) {
        Ok(c) => c,
        Err(e) => return ApiError(e).into_response(),
    };
    ws.max_message_size(MAX_WS_MESSAGE).on_upgrade(move |socket| async move {
        let platform = s.platform.clone();
        pump(
            socket,
            rx,
            s.heartbeat,
            |line| platform.monitor_frame(&ch, line),
            || {
                platform.send_direct(ch.room, ch.channel, &binary_rejected(&platform));
            },
        )
        .await;
        s.platform.disconnect_monitor(&ch);
    })
}

fn binary_rejected(platform: &Platform) -> colloquy::gateway::Envelope {
    error_frame("malformed_frame", "binary frames are not supported", platform.now())
}

/// Moves frames both ways until either side closes, the hub drops the
/// channel, or the peer misses two heartbeats.
async fn pump(
    socket: WebSocket,
    mut rx: FrameReceiver,
    heartbeat: Duration,
    mut inbound: impl FnMut(&str) -> ChannelOutcome,
    mut binary: impl FnMut(),
) {
    let (mut sink, mut stream) = socket.split();
    let mut ticker = interval(heartbeat);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    ticker.tick().await;
    let mut last_seen = Instant::now();
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Some(line) => {
                    if sink.send(Message::Text(line)).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            msg = stream.next() => {
                last_seen = Instant::now();
                match msg {
                    Some(Ok(Message::Text(text))) => {
                        let closed = text
                            .split('\n')
                            .filter(|l| !l.trim().is_empty())
                            .any(|line| inbound(line) == ChannelOutcome::Close);
                        if closed {
                            break;
                        }
                    }
                    Some(Ok(Message::Binary(_))) => {
                        binary();
                    }
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                }
            }
            _ = ticker.tick() => {
                if last_seen.elapsed() >= heartbeat * 2 {
                    tracing::debug!("closing channel after missed heartbeats");
                    break;
                }
                if sink.send(Message::Ping(Vec::new())).await.is_err() {
                    break;
                }
            }
        }
    }
    let _ = sink.close().await;
}
