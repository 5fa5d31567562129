//! HTTP + websocket front end. One task owns the session and steps it at the
//! physics rate; connections talk to it through a queue and read the latest
//! broadcast tick from a watch channel, so a slow client only misses ticks.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::header;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use encounter_core::io::scenario_to_string;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use crate::protocol::{parse_client, ClientMessage, ServerMessage};
use crate::session::Session;

/// Physics steps per broadcast: 75 Hz physics, 25 Hz ticks.
pub const STEPS_PER_BROADCAST: u64 = 3;

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>encounter</title></head>
<body>
<h1>encounter service</h1>
<p>No UI assets are installed. Start the service with <code>--static DIR</code> to serve one.</p>
<p>Websocket endpoint: <code>/ws</code>. Current scene: <a href=\"/scenario\">/scenario</a>.</p>
</body></html>
";

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Directory of UI assets served at `/`; a placeholder page is served when absent.
    pub static_dir: Option<PathBuf>,
}

type Inbox = mpsc::Sender<(ClientMessage, oneshot::Sender<Result<(), String>>)>;

#[derive(Clone)]
struct Shared {
    inbox: Inbox,
    ticks: watch::Receiver<Option<Arc<String>>>,
    scenario: Arc<Mutex<String>>,
}

/// Serves until the listener fails. The session is moved into the physics task.
pub async fn serve(listener: TcpListener, session: Session, options: ServeOptions) -> std::io::Result<()> {
    let (inbox, rx) = mpsc::channel(1024);
    let (tick_tx, ticks) = watch::channel(None);
    let scenario = Arc::new(Mutex::new(String::new()));
    tokio::spawn(physics(session, rx, tick_tx, scenario.clone()));

    let shared = Shared { inbox, ticks, scenario };
    let mut app = Router::new()
        .route("/ws", get(upgrade))
        .route("/scenario", get(export_scenario));
    app = match options.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    };
    axum::serve(listener, app.with_state(shared)).await
}

async fn physics(
    mut session: Session,
    mut rx: mpsc::Receiver<(ClientMessage, oneshot::Sender<Result<(), String>>)>,
    ticks: watch::Sender<Option<Arc<String>>>,
    scenario: Arc<Mutex<String>>,
) {
    let mut clock = tokio::time::interval(Duration::from_secs_f64(session.dt()));
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut steps: u64 = 0;
    let mut seq: u64 = 0;
    loop {
        clock.tick().await;
        // messages take effect at the start of the step, in arrival order
        let mut edited = steps == 0;
        while let Ok((msg, reply)) = rx.try_recv() {
            edited |= !matches!(msg, ClientMessage::Steer { .. } | ClientMessage::SetTrackingLost { .. });
            let _ = reply.send(session.apply(msg));
        }
        if edited {
            if let Ok(text) = scenario_to_string(&session.scenario()) {
                *scenario.lock().expect("not poisoned") = text;
            }
        }
        session.step();
        if steps % STEPS_PER_BROADCAST == 0 {
            let tick = ServerMessage::Tick(session.tick(seq)).to_json();
            seq += 1;
            ticks.send_replace(Some(Arc::new(tick)));
        }
        steps += 1;
    }
}

async fn export_scenario(State(shared): State<Shared>) -> Response {
    let text = shared.scenario.lock().expect("not poisoned").clone();
    ([(header::CONTENT_TYPE, "application/toml")], text).into_response()
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(mut socket: WebSocket, shared: Shared) {
    let mut ticks = shared.ticks.clone();
    // send whatever is current straight away
    ticks.mark_changed();
    loop {
        tokio::select! {
            changed = ticks.changed() => {
                if changed.is_err() {
                    return;
                }
                let latest = ticks.borrow_and_update().clone();
                if let Some(text) = latest {
                    if socket.send(Message::Text(text.as_str().into())).await.is_err() {
                        return;
                    }
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let outcome = match parse_client(text.as_str()) {
                    Ok(msg) => {
                        let (tx, rx) = oneshot::channel();
                        if shared.inbox.send((msg, tx)).await.is_err() {
                            return;
                        }
                        rx.await.unwrap_or_else(|_| Err("service is shutting down".into()))
                    }
                    Err(e) => Err(e),
                };
                if let Err(message) = outcome {
                    tracing::debug!(%message, "rejected client message");
                    let reply = ServerMessage::error(message).to_json();
                    if socket.send(Message::Text(reply.into())).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}
