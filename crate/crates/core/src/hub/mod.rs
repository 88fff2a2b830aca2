//! Chat groups: lifecycle, norm-gated broadcast with a per-group total
//! order, bot dispatch and the WebSocket gateway.
//!
//! Each group runs as one tokio task that owns all of its state; sessions
//! and bot pipelines talk to it over a channel.

mod group;
pub mod server;
pub mod wire;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};

use crate::config::Stack;
use crate::context::ContextError;
use crate::dialog::{Member, Utterance};
use group::{Command, Group};

#[derive(Debug, Error)]
pub enum HubError {
    #[error("unknown group {0}")]
    UnknownGroup(String),
    #[error("group {0} already exists")]
    DuplicateGroup(String),
    #[error("member {0} is already in the group")]
    DuplicateMember(String),
    #[error("unknown member {0}")]
    UnknownMember(String),
    #[error("the group owner must be human")]
    OwnerNotHuman,
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("group {0} has ended")]
    GroupEnded(String),
    #[error("group {0} is no longer running")]
    Closed(String),
    #[error(transparent)]
    Context(#[from] ContextError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum EventKind {
    GroupCreated { owner: String },
    MemberJoined { member: Member },
    MemberLeft { member: Member },
    Utterance { utterance: Utterance },
    GroupEnded,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::GroupCreated { .. } => "group_created",
            EventKind::MemberJoined { .. } => "member_joined",
            EventKind::MemberLeft { .. } => "member_left",
            EventKind::Utterance { .. } => "utterance",
            EventKind::GroupEnded => "group_ended",
        }
    }
}

/// One broadcast; `seq` is strictly increasing within a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub group_id: String,
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn utterance(&self) -> Option<&Utterance> {
        match &self.kind {
            EventKind::Utterance { utterance } => Some(utterance),
            _ => None,
        }
    }
}

/// Inspection hook called for every broadcast event. The default does
/// nothing; dialogue consistency checks can be plugged in here.
pub trait EventObserver: Send + Sync {
    fn observe(&self, _event: &Event) {}
}

struct NoopObserver;

impl EventObserver for NoopObserver {}

struct Inner {
    stack: Arc<Stack>,
    groups: Mutex<HashMap<String, mpsc::UnboundedSender<Command>>>,
    counter: AtomicU64,
    context_dir: Option<PathBuf>,
    observer: Arc<dyn EventObserver>,
}

/// Handle to the hub; cheap to clone.
#[derive(Clone)]
pub struct Hub {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub").field("stack", &self.inner.stack).finish_non_exhaustive()
    }
}

impl Hub {
    pub fn new(stack: Arc<Stack>) -> Self {
        Self::build(stack, None, Arc::new(NoopObserver))
    }

    /// Context logs and snapshots are written under `dir`.
    pub fn with_context_dir(stack: Arc<Stack>, dir: impl Into<PathBuf>) -> Self {
        Self::build(stack, Some(dir.into()), Arc::new(NoopObserver))
    }

    pub fn build(stack: Arc<Stack>, context_dir: Option<PathBuf>, observer: Arc<dyn EventObserver>) -> Self {
        Hub {
            inner: Arc::new(Inner {
                stack,
                groups: Mutex::new(HashMap::new()),
                counter: AtomicU64::new(1),
                context_dir,
                observer,
            }),
        }
    }

    pub fn stack(&self) -> &Arc<Stack> {
        &self.inner.stack
    }

    fn sender(&self, group: &str) -> Result<mpsc::UnboundedSender<Command>, HubError> {
        self.inner
            .groups
            .lock()
            .expect("group map lock")
            .get(group)
            .cloned()
            .ok_or_else(|| HubError::UnknownGroup(group.to_string()))
    }

    /// Creates a group owned by `owner`; a fresh id is assigned when none is
    /// given. The owner's session receives every event from the start.
    pub async fn create_group(&self, owner: Member, group_id: Option<String>) -> Result<Session, HubError> {
        if !owner.role.is_human() {
            return Err(HubError::OwnerNotHuman);
        }
        let id = match group_id {
            Some(id) => id,
            None => format!("g{}", self.inner.counter.fetch_add(1, Ordering::Relaxed)),
        };
        let (tx, rx) = mpsc::unbounded_channel();
        {
            let mut groups = self.inner.groups.lock().expect("group map lock");
            if groups.contains_key(&id) {
                return Err(HubError::DuplicateGroup(id));
            }
            groups.insert(id.clone(), tx.clone());
        }
        let group = Group::new(
            id.clone(),
            self.inner.stack.clone(),
            self.inner.context_dir.clone(),
            self.inner.observer.clone(),
            tx.downgrade(),
        )?;
        tokio::spawn(group.run(rx));
        let (events_tx, events) = mpsc::unbounded_channel();
        let member_id = owner.id.clone();
        let (reply, done) = oneshot::channel();
        tx.send(Command::Create { owner, sink: events_tx, reply }).map_err(|_| HubError::Closed(id.clone()))?;
        done.await.map_err(|_| HubError::Closed(id.clone()))??;
        Ok(Session { group_id: id, member_id, tx, events })
    }

    pub async fn join_group(&self, group_id: &str, member: Member) -> Result<Session, HubError> {
        let tx = self.sender(group_id)?;
        let (events_tx, events) = mpsc::unbounded_channel();
        let member_id = member.id.clone();
        let (reply, done) = oneshot::channel();
        tx.send(Command::Join { member, sink: events_tx, reply })
            .map_err(|_| HubError::Closed(group_id.to_string()))?;
        done.await.map_err(|_| HubError::Closed(group_id.to_string()))??;
        Ok(Session { group_id: group_id.to_string(), member_id, tx, events })
    }

    async fn ask<T>(&self, group_id: &str, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, HubError> {
        let tx = self.sender(group_id)?;
        let (reply, done) = oneshot::channel();
        tx.send(make(reply)).map_err(|_| HubError::Closed(group_id.to_string()))?;
        done.await.map_err(|_| HubError::Closed(group_id.to_string()))
    }

    /// Serialized group state: members, wait, counters and context.
    pub async fn snapshot(&self, group_id: &str) -> Result<Vec<u8>, HubError> {
        self.ask(group_id, |reply| Command::Snapshot { reply }).await
    }

    pub async fn context_snapshot(&self, group_id: &str) -> Result<Vec<u8>, HubError> {
        self.ask(group_id, |reply| Command::ContextSnapshot { reply }).await
    }

    /// Replaces the group's context with a snapshot of the same group.
    pub async fn restore_context(&self, group_id: &str, blob: Vec<u8>) -> Result<(), HubError> {
        self.ask(group_id, |reply| Command::RestoreContext { blob, reply }).await?
    }

    pub fn group_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.groups.lock().expect("group map lock").keys().cloned().collect();
        ids.sort();
        ids
    }
}

/// A member's connection to one group: posts on its behalf and receives
/// the group's events in seq order.
#[derive(Debug)]
pub struct Session {
    pub group_id: String,
    pub member_id: String,
    tx: mpsc::UnboundedSender<Command>,
    events: mpsc::UnboundedReceiver<Event>,
}

impl Session {
    pub async fn post(&self, text: &str, reply_to: Option<String>) -> Result<Utterance, HubError> {
        self.post_as(&self.member_id, text, reply_to).await
    }

    /// Posts with an arbitrary sender id; membership is still enforced.
    pub async fn post_as(&self, sender: &str, text: &str, reply_to: Option<String>) -> Result<Utterance, HubError> {
        let (reply, done) = oneshot::channel();
        self.tx
            .send(Command::Post { sender: sender.to_string(), text: text.to_string(), reply_to, reply })
            .map_err(|_| HubError::Closed(self.group_id.clone()))?;
        done.await.map_err(|_| HubError::Closed(self.group_id.clone()))?
    }

    pub async fn leave(&self) -> Result<(), HubError> {
        self.remove(&self.member_id).await
    }

    /// Removes any member, bots included.
    pub async fn remove(&self, member: &str) -> Result<(), HubError> {
        let (reply, done) = oneshot::channel();
        self.tx
            .send(Command::Leave { member: member.to_string(), reply })
            .map_err(|_| HubError::Closed(self.group_id.clone()))?;
        done.await.map_err(|_| HubError::Closed(self.group_id.clone()))?
    }

    pub async fn next_event(&mut self) -> Option<Event> {
        self.events.recv().await
    }

    pub fn try_next_event(&mut self) -> Option<Event> {
        self.events.try_recv().ok()
    }
}

pub(crate) fn now_ms() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}
