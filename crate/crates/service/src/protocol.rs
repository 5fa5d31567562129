//! Wire messages. Every message is a JSON object with a `type` discriminator
//! and a protocol version `v`; see `docs/protocol.md` for the full schema.

use encounter_core::geometry::{Arena, UserState, Voi};
use encounter_core::intention::{CommandPosition, WeightVector};
use encounter_core::proxy::{ObstacleState, ProxyState};
use encounter_core::robot::RobotState;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Steering speeds above this are scaled down to it.
pub const MAX_STEER_SPEED: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// World-frame walking velocity in m/s and turn rate in rad/s. Held until replaced.
    Steer {
        vx: f64,
        vy: f64,
        heading_rate: f64,
    },
    SetOmega {
        omega: f64,
    },
    AddVoi {
        voi: Voi,
    },
    MoveVoi {
        id: String,
        x: f64,
        y: f64,
    },
    RemoveVoi {
        id: String,
    },
    SetPrior {
        id: String,
        prior: f64,
    },
    Pause,
    Resume,
    /// Without a seed, back to the loaded scenario; with one, a fresh random layout.
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
    Estop,
    ReleaseEstop,
    SetTrackingLost {
        lost: bool,
    },
    /// Starts (and restarts the run) or stops trace recording.
    Record {
        on: bool,
    },
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("messages serialize");
        value["v"] = Value::from(PROTOCOL_VERSION);
        value.to_string()
    }
}

/// Parses one client message, checking the version before the body.
pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| "malformed message: expected an object".to_string())?;
    match obj.remove("v") {
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION as u64) => {}
        Some(v) => return Err(format!("unsupported protocol version {v}")),
        None => return Err("missing protocol version `v`".to_string()),
    }
    serde_json::from_value(value).map_err(|e| format!("invalid message: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub id: String,
    pub t: f64,
    /// Robot to object distance when the user reached it.
    pub distance: f64,
    pub success: bool,
    pub detection_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Proxy distance outside the user obstacle this frame.
    pub clearance: Option<f64>,
    /// Smallest clearance since the last reset.
    pub min_clearance: Option<f64>,
    pub last_detection_time: Option<f64>,
    pub last_contact: Option<Contact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerTick {
    pub v: u32,
    /// Broadcast counter, strictly increasing.
    pub seq: u64,
    /// Simulated time; frozen while paused.
    pub t: f64,
    pub paused: bool,
    pub recording: bool,
    pub omega: f64,
    pub arena: Arena,
    pub vois: Vec<Voi>,
    pub user: UserState,
    pub proxy: ProxyState,
    pub robot: RobotState,
    pub weights: WeightVector,
    pub obstacle: ObstacleState,
    pub command: CommandPosition,
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Tick(ServerTick),
    Error { v: u32, message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            v: PROTOCOL_VERSION,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_version() {
        let m = ClientMessage::Steer {
            vx: 0.5,
            vy: -0.25,
            heading_rate: 0.1,
        };
        let text = m.to_json();
        assert!(text.contains("\"v\":1"));
        assert!(text.contains("\"type\":\"steer\""));
        assert_eq!(parse_client(&text).unwrap(), m);
    }

    #[test]
    fn documented_examples_parse() {
        for text in [
            r#"{"v":1,"type":"steer","vx":0.3,"vy":0.0,"heading_rate":0.0}"#,
            r#"{"v":1,"type":"set_prior","id":"mug","prior":0.6}"#,
            r#"{"v":1,"type":"reset","seed":42}"#,
            r#"{"v":1,"type":"reset"}"#,
            r#"{"v":1,"type":"add_voi","voi":{"id":"cup","position":{"x":1.0,"y":1.0},"radius":0.05}}"#,
            r#"{"v":1,"type":"record","on":true}"#,
            r#"{"v":1,"type":"release_estop"}"#,
        ] {
            parse_client(text).unwrap_or_else(|e| panic!("{text}: {e}"));
        }
    }

    #[test]
    fn version_is_required() {
        assert!(parse_client(r#"{"type":"pause"}"#).unwrap_err().contains("version"));
        assert!(parse_client(r#"{"v":2,"type":"pause"}"#)
            .unwrap_err()
            .contains("version 2"));
        assert_eq!(parse_client(r#"{"v":1,"type":"pause"}"#).unwrap(), ClientMessage::Pause);
    }

    #[test]
    fn junk_is_rejected() {
        assert!(parse_client("not json").is_err());
        assert!(parse_client("[1]").is_err());
        assert!(parse_client(r#"{"v":1,"type":"fly"}"#).is_err());
        assert!(parse_client(r#"{"v":1,"type":"set_omega","omega":0.5,"extra":1}"#).is_err());
    }

    #[test]
    fn reset_seed_is_optional() {
        assert_eq!(
            parse_client(r#"{"v":1,"type":"reset"}"#).unwrap(),
            ClientMessage::Reset { seed: None }
        );
        assert_eq!(
            parse_client(r#"{"v":1,"type":"reset","seed":9}"#).unwrap(),
            ClientMessage::Reset { seed: Some(9) }
        );
    }
}
