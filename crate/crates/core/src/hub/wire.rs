//! Wire frames: one JSON object per WebSocket text message.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Event, EventKind};
use crate::dialog::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    CreateGroup,
    Join,
    Leave,
    Utterance,
    Event,
    Ack,
    Error,
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("{kind:?} frame needs {field}")]
    Missing { kind: FrameType, field: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireFrame {
    #[serde(rename = "type")]
    pub kind: FrameType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<u64>,
    /// Event kind of an `event` frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    /// Template behind a bot utterance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    /// Reason carried by an `error` frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl WireFrame {
    pub fn new(kind: FrameType) -> Self {
        WireFrame {
            kind,
            group_id: None,
            member_id: None,
            role: None,
            text: None,
            reply_to: None,
            utterance_id: None,
            seq: None,
            ts: None,
            event: None,
            display_name: None,
            template: None,
            message: None,
        }
    }

    pub fn create_group(member_id: &str, group_id: Option<&str>) -> Self {
        WireFrame {
            member_id: Some(member_id.into()),
            group_id: group_id.map(Into::into),
            ..Self::new(FrameType::CreateGroup)
        }
    }

    pub fn join(group_id: &str, member_id: &str) -> Self {
        WireFrame { group_id: Some(group_id.into()), member_id: Some(member_id.into()), ..Self::new(FrameType::Join) }
    }

    pub fn leave(group_id: &str, member_id: &str) -> Self {
        WireFrame { group_id: Some(group_id.into()), member_id: Some(member_id.into()), ..Self::new(FrameType::Leave) }
    }

    pub fn utterance(group_id: &str, member_id: &str, text: &str, reply_to: Option<&str>) -> Self {
        WireFrame {
            group_id: Some(group_id.into()),
            member_id: Some(member_id.into()),
            text: Some(text.into()),
            reply_to: reply_to.map(Into::into),
            ..Self::new(FrameType::Utterance)
        }
    }

    pub fn error(group_id: Option<&str>, message: impl Into<String>) -> Self {
        WireFrame { group_id: group_id.map(Into::into), message: Some(message.into()), ..Self::new(FrameType::Error) }
    }

    pub fn from_event(e: &Event) -> Self {
        let mut f = WireFrame {
            group_id: Some(e.group_id.clone()),
            seq: Some(e.seq),
            ts: Some(e.timestamp),
            event: Some(e.kind.name().to_string()),
            ..Self::new(FrameType::Event)
        };
        match &e.kind {
            EventKind::GroupCreated { owner } => f.member_id = Some(owner.clone()),
            EventKind::MemberJoined { member } | EventKind::MemberLeft { member } => {
                f.member_id = Some(member.id.clone());
                f.role = Some(member.role);
                f.display_name = Some(member.display_name.clone());
            }
            EventKind::Utterance { utterance: u } => {
                f.member_id = Some(u.sender.clone());
                f.text = Some(u.text.clone());
                f.reply_to = u.reply_to.clone();
                f.utterance_id = Some(u.id.clone());
                f.template = u.annotations.as_ref().and_then(|a| a.template.clone());
            }
            EventKind::GroupEnded => {}
        }
        f
    }

    pub fn parse(text: &str) -> Result<Self, WireError> {
        let f: WireFrame = serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    /// Checks the fields each frame type requires.
    pub fn validate(&self) -> Result<(), WireError> {
        let need = |present: bool, field: &'static str| {
            if present {
                Ok(())
            } else {
                Err(WireError::Missing { kind: self.kind, field })
            }
        };
        let nonempty = |s: &Option<String>| s.as_deref().is_some_and(|v| !v.trim().is_empty());
        match self.kind {
            FrameType::CreateGroup => need(nonempty(&self.member_id), "member_id"),
            FrameType::Join | FrameType::Leave => {
                need(nonempty(&self.group_id), "group_id")?;
                need(nonempty(&self.member_id), "member_id")
            }
            FrameType::Utterance => {
                need(nonempty(&self.group_id), "group_id")?;
                need(nonempty(&self.member_id), "member_id")?;
                need(nonempty(&self.text), "text")
            }
            FrameType::Event => {
                need(nonempty(&self.group_id), "group_id")?;
                need(self.seq.is_some(), "seq")?;
                need(self.ts.is_some(), "ts")?;
                need(nonempty(&self.event), "event")
            }
            FrameType::Ack => need(nonempty(&self.group_id), "group_id"),
            FrameType::Error => need(nonempty(&self.message), "message"),
        }
    }
}
