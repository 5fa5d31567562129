//! Headless client against a real server on a loopback port.

use std::time::Duration;

use encounter_core::geometry::{Arena, SimConfig, Vec2, Voi};
use encounter_core::io::{parse_scenario, ScenarioFile};
use encounter_core::robot::RobotStatus;
use encounter_service::protocol::{ClientMessage, ServerMessage, ServerTick};
use encounter_service::{serve, ServeOptions, Session};
use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::{timeout, Instant};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn scene() -> ScenarioFile {
    let vois = vec![
        Voi::new("a", Vec2::new(1.0, 3.0), 0.05),
        Voi::new("b", Vec2::new(3.0, 3.0), 0.05),
    ];
    ScenarioFile::new(Arena::default(), vois, SimConfig::default())
}

async fn start(options: ServeOptions) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let session = Session::new(scene()).unwrap();
    tokio::spawn(serve(listener, session, options));
    addr
}

async fn connect(addr: std::net::SocketAddr) -> Client {
    connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn next(client: &mut Client) -> ServerMessage {
    loop {
        let msg = timeout(Duration::from_secs(2), client.next())
            .await
            .expect("server went quiet")
            .unwrap()
            .unwrap();
        if let Message::Text(text) = msg {
            return serde_json::from_str(text.as_str()).unwrap();
        }
    }
}

async fn next_tick(client: &mut Client) -> ServerTick {
    loop {
        if let ServerMessage::Tick(t) = next(client).await {
            return t;
        }
    }
}

/// Waits for a tick satisfying `pred`, giving up after two seconds.
async fn tick_where(client: &mut Client, pred: impl Fn(&ServerTick) -> bool) -> ServerTick {
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        assert!(Instant::now() < deadline, "condition never showed up");
        let t = next_tick(client).await;
        if pred(&t) {
            return t;
        }
    }
}

async fn send(client: &mut Client, msg: &ClientMessage) {
    client.send(Message::text(msg.to_json())).await.unwrap();
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn first_tick_arrives_quickly_and_time_moves_forward() {
    let addr = start(ServeOptions::default()).await;
    let began = Instant::now();
    let mut c = connect(addr).await;
    let first = next_tick(&mut c).await;
    assert!(began.elapsed() < Duration::from_secs(1));
    assert_eq!(first.v, 1);
    assert_eq!(first.vois.len(), 2);

    let mut last = first;
    let window = Instant::now();
    let mut count = 0;
    while window.elapsed() < Duration::from_secs(1) {
        let t = next_tick(&mut c).await;
        assert!(t.seq > last.seq);
        assert!(t.t >= last.t);
        last = t;
        count += 1;
    }
    // 25 Hz nominal; loose bounds for a busy machine
    assert!((10..=40).contains(&count), "{count} ticks in a second");
    // three physics steps between consecutive broadcasts
    let a = next_tick(&mut c).await;
    let b = next_tick(&mut c).await;
    if b.seq == a.seq + 1 {
        assert!((b.t - a.t - 3.0 / 75.0).abs() < 1e-9);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn controls_round_trip() {
    let addr = start(ServeOptions::default()).await;
    let mut c = connect(addr).await;
    next_tick(&mut c).await;

    send(&mut c, &ClientMessage::SetOmega { omega: 0.5 }).await;
    tick_where(&mut c, |t| t.omega == 0.5).await;

    send(&mut c, &ClientMessage::Estop).await;
    let t = tick_where(&mut c, |t| t.robot.status == RobotStatus::HaltedEstop).await;
    assert_eq!(t.robot.velocity, Vec2::ZERO);
    send(&mut c, &ClientMessage::ReleaseEstop).await;
    tick_where(&mut c, |t| t.robot.status == RobotStatus::Active).await;

    send(&mut c, &ClientMessage::SetTrackingLost { lost: true }).await;
    let t = tick_where(&mut c, |t| t.robot.status == RobotStatus::HaltedTrackingLoss).await;
    assert!(!t.user.tracked);
    send(&mut c, &ClientMessage::SetTrackingLost { lost: false }).await;

    send(&mut c, &ClientMessage::Pause).await;
    let paused = tick_where(&mut c, |t| t.paused).await;
    let later = next_tick(&mut c).await;
    assert_eq!(later.t, paused.t);
    send(&mut c, &ClientMessage::Resume).await;
    tick_where(&mut c, |t| !t.paused && t.t > paused.t).await;

    send(
        &mut c,
        &ClientMessage::MoveVoi {
            id: "b".into(),
            x: 3.5,
            y: 2.0,
        },
    )
    .await;
    tick_where(&mut c, |t| {
        t.vois.iter().any(|v| v.id == "b" && v.position == Vec2::new(3.5, 2.0))
    })
    .await;

    send(
        &mut c,
        &ClientMessage::Steer {
            vx: 0.5,
            vy: 0.0,
            heading_rate: 0.0,
        },
    )
    .await;
    let start_x = next_tick(&mut c).await.user.pose.position.x;
    tick_where(&mut c, |t| t.user.pose.position.x > start_x + 0.05).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_messages_get_an_error_and_change_nothing() {
    let addr = start(ServeOptions::default()).await;
    let mut c = connect(addr).await;
    let before = next_tick(&mut c).await;

    for bad in [
        "not json".to_string(),
        r#"{"type":"pause"}"#.to_string(),
        r#"{"v":1,"type":"teleport"}"#.to_string(),
        ClientMessage::SetPrior {
            id: "a".into(),
            prior: 1.2,
        }
        .to_json(),
    ] {
        c.send(Message::text(bad.clone())).await.unwrap();
        loop {
            match next(&mut c).await {
                ServerMessage::Error { v, message } => {
                    assert_eq!(v, 1);
                    assert!(!message.is_empty(), "{bad}");
                    break;
                }
                ServerMessage::Tick(t) => assert!(!t.paused),
            }
        }
    }
    let after = next_tick(&mut c).await;
    assert_eq!(after.vois, before.vois);
    assert_eq!(after.omega, before.omega);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn every_client_sees_the_same_simulation() {
    let addr = start(ServeOptions::default()).await;
    let mut a = connect(addr).await;
    let mut b = connect(addr).await;
    next_tick(&mut a).await;
    next_tick(&mut b).await;
    send(&mut a, &ClientMessage::SetOmega { omega: 0.9 }).await;
    tick_where(&mut b, |t| t.omega == 0.9).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn placeholder_page_and_scene_export() {
    let addr = start(ServeOptions::default()).await;
    let page = http_get(addr, "/").await;
    assert!(page.starts_with("HTTP/1.1 200"), "{page}");
    assert!(page.contains("/ws"));

    tokio::time::sleep(Duration::from_millis(100)).await;
    let export = http_get(addr, "/scenario").await;
    assert!(export.starts_with("HTTP/1.1 200"));
    let body = export.split("\r\n\r\n").nth(1).unwrap();
    let scene = parse_scenario(body).unwrap();
    assert_eq!(scene.vois.len(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serves_static_assets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>ui here</p>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let addr = start(ServeOptions {
        static_dir: Some(dir.path().to_path_buf()),
    })
    .await;
    assert!(http_get(addr, "/").await.contains("ui here"));
    assert!(http_get(addr, "/app.js").await.contains("console.log"));
    assert!(http_get(addr, "/missing.css").await.starts_with("HTTP/1.1 404"));
    // the socket still works next to the assets
    let mut c = connect(addr).await;
    next_tick(&mut c).await;
}
