//! WebSocket gateway. A connection first sends `create_group` or `join`,
//! then `utterance` and `leave` frames; group events stream back as
//! `event` frames. A dropped connection leaves the group.

use std::net::SocketAddr;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tracing::{debug, warn};

use super::wire::{FrameType, WireFrame};
use super::{Event, Hub, Session};
use crate::dialog::{Member, Role};

/// Binds `addr` and serves in a background task. Returns the bound
/// address, which matters when the port is 0.
pub async fn spawn(hub: Hub, addr: &str) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = serve(hub, listener).await {
            warn!("gateway stopped: {e}");
        }
    });
    Ok((local, handle))
}

pub async fn serve(hub: Hub, listener: TcpListener) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let hub = hub.clone();
        tokio::spawn(async move {
            if let Err(e) = connection(hub, stream).await {
                debug!("connection {peer} closed: {e}");
            }
        });
    }
}

async fn next_event(session: &mut Option<Session>) -> Option<Event> {
    match session {
        Some(s) => s.next_event().await,
        None => std::future::pending().await,
    }
}

async fn connection(hub: Hub, stream: TcpStream) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let _ = stream.set_nodelay(true);
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let mut session: Option<Session> = None;
    loop {
        tokio::select! {
            msg = source.next() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None => break,
                    Some(Ok(_)) => continue,
                    Some(Err(e)) => {
                        leave(&mut session).await;
                        return Err(e);
                    }
                };
                let reply = match WireFrame::parse(&text) {
                    Ok(frame) => handle(&hub, &mut session, frame).await,
                    Err(e) => WireFrame::error(None, e.to_string()),
                };
                sink.send(Message::Text(reply.to_text())).await?;
            }
            ev = next_event(&mut session) => match ev {
                Some(e) => sink.send(Message::Text(WireFrame::from_event(&e).to_text())).await?,
                // the group is gone; keep the socket for a new create/join
                None => session = None,
            },
        }
    }
    leave(&mut session).await;
    Ok(())
}

async fn leave(session: &mut Option<Session>) {
    if let Some(s) = session.take() {
        let _ = s.leave().await;
    }
}

fn ack(group_id: &str, member_id: &str) -> WireFrame {
    WireFrame {
        group_id: Some(group_id.to_string()),
        member_id: Some(member_id.to_string()),
        ..WireFrame::new(FrameType::Ack)
    }
}

async fn handle(hub: &Hub, session: &mut Option<Session>, frame: WireFrame) -> WireFrame {
    let gid = frame.group_id.clone();
    let fail = |m: String| WireFrame::error(gid.as_deref(), m);
    let member_id = frame.member_id.clone().unwrap_or_default();
    match frame.kind {
        FrameType::CreateGroup | FrameType::Join => {
            if session.is_some() {
                return fail("this connection is already in a group".into());
            }
            if hub.stack().bot(&member_id).is_some() {
                return fail(format!("{member_id} is reserved for a bot"));
            }
            let mut member = Member::human(&member_id);
            if let Some(name) = frame.display_name.clone() {
                member.display_name = name;
            }
            let result = if frame.kind == FrameType::CreateGroup {
                member.role = Role::OwnerUser;
                hub.create_group(member, frame.group_id.clone()).await
            } else {
                if frame.role.is_some_and(|r| r != Role::User) {
                    return fail("only users can join over the gateway".into());
                }
                hub.join_group(gid.as_deref().unwrap_or_default(), member).await
            };
            match result {
                Ok(s) => {
                    let a = ack(&s.group_id, &s.member_id);
                    *session = Some(s);
                    a
                }
                Err(e) => fail(e.to_string()),
            }
        }
        FrameType::Utterance | FrameType::Leave => {
            let Some(s) = session.as_ref() else {
                return fail("not in a group".into());
            };
            if gid.as_deref() != Some(s.group_id.as_str()) || member_id != s.member_id {
                return fail("frame does not match this connection's group and member".into());
            }
            if frame.kind == FrameType::Leave {
                let res = s.leave().await;
                let a = ack(&s.group_id, &s.member_id);
                *session = None;
                return match res {
                    Ok(()) => a,
                    Err(e) => fail(e.to_string()),
                };
            }
            match s.post(frame.text.as_deref().unwrap_or_default(), frame.reply_to.clone()).await {
                Ok(u) => {
                    WireFrame { utterance_id: Some(u.id), ts: Some(u.timestamp), ..ack(&s.group_id, &s.member_id) }
                }
                Err(e) => fail(e.to_string()),
            }
        }
        FrameType::Event | FrameType::Ack | FrameType::Error => {
            fail(format!("{:?} frames are server-only", frame.kind))
        }
    }
}
