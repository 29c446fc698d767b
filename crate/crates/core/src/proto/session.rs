use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use tokio::sync::{mpsc, watch};
use tokio_tungstenite::tungstenite::Message;

use super::{decode_envelope, encode_envelope, Op, ProtoError, ProtocolEnvelope};

/// Inbound callback. Runs on the session's receive loop, so it must not block.
pub type Handler = Box<dyn FnMut(ProtocolEnvelope) + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicBinding {
    pub topic: String,
    pub msg_type: String,
    pub direction: Direction,
    pub handler_id: u64,
}

/// One frame as seen on the socket, timestamped when it was read or written.
#[derive(Debug, Clone)]
pub struct WireRecord {
    pub at: Instant,
    pub direction: Direction,
    pub op: Option<Op>,
    pub topic: Option<String>,
    pub bytes: usize,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub connect_timeout: Duration,
    /// Keep a [`WireRecord`] for every frame in and out.
    pub record_wire: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            connect_timeout: Duration::from_secs(5),
            record_wire: false,
        }
    }
}

struct InboundSlot {
    binding: TopicBinding,
    handler: Arc<Mutex<Handler>>,
}

enum Outgoing {
    Frame { text: String, op: Op, topic: String },
    Close,
}

struct Shared {
    tx: mpsc::UnboundedSender<Outgoing>,
    inbound: Mutex<HashMap<String, InboundSlot>>,
    advertised: Mutex<HashMap<String, TopicBinding>>,
    next_handler: AtomicU64,
    closed: watch::Sender<bool>,
    wire: Option<Mutex<Vec<WireRecord>>>,
    unknown_topic_frames: AtomicU64,
    bad_frames: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn record(&self, direction: Direction, op: Option<Op>, topic: Option<String>, bytes: usize) {
        if let Some(wire) = &self.wire {
            lock(wire).push(WireRecord {
                at: Instant::now(),
                direction,
                op,
                topic,
                bytes,
            });
        }
    }

    fn is_closed(&self) -> bool {
        *self.closed.borrow()
    }

    fn send(&self, e: &ProtocolEnvelope) -> Result<(), ProtoError> {
        if self.is_closed() {
            return Err(ProtoError::SessionClosed);
        }
        let frame = Outgoing::Frame {
            text: encode_envelope(e),
            op: e.op(),
            topic: e.topic().to_string(),
        };
        self.tx.send(frame).map_err(|_| ProtoError::SessionClosed)
    }

    fn dispatch(&self, raw: &str) {
        let env = match decode_envelope(raw.as_bytes()) {
            Ok(e) => e,
            Err(e) => {
                log::debug!("dropping bad frame: {e}");
                self.bad_frames.fetch_add(1, Ordering::Relaxed);
                self.record(Direction::Inbound, None, None, raw.len());
                return;
            }
        };
        self.record(Direction::Inbound, Some(env.op()), Some(env.topic().to_string()), raw.len());
        if env.op() != Op::Publish {
            return;
        }
        let handler = lock(&self.inbound).get(env.topic()).map(|s| s.handler.clone());
        match handler {
            Some(h) => (lock(&h))(env),
            None => {
                self.unknown_topic_frames.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

struct CloseOnDrop(mpsc::UnboundedSender<Outgoing>);

impl Drop for CloseOnDrop {
    fn drop(&mut self) {
        let _ = self.0.send(Outgoing::Close);
    }
}

/// A pub/sub client connection. Cheap to clone; all clones share one socket,
/// and the socket closes when the last clone is dropped.
#[derive(Clone)]
pub struct ClientSession {
    shared: Arc<Shared>,
    _close: Arc<CloseOnDrop>,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession").field("closed", &self.is_closed()).finish()
    }
}

impl ClientSession {
    /// Opens `ws://host:port[/path]` and starts the receive loop on the current tokio runtime.
    pub async fn connect(url: &str, config: SessionConfig) -> Result<Self, ProtoError> {
        let parsed = url::Url::parse(url).map_err(|_| ProtoError::BadUrl(url.to_string()))?;
        if parsed.scheme() != "ws" || parsed.host_str().is_none() {
            return Err(ProtoError::BadUrl(url.to_string()));
        }
        let (ws, _) = tokio::time::timeout(config.connect_timeout, tokio_tungstenite::connect_async(url))
            .await
            .map_err(|_| ProtoError::ConnectFailed("timed out".into()))?
            .map_err(|e| ProtoError::ConnectFailed(e.to_string()))?;
        let (mut sink, mut stream) = ws.split();
        let (tx, mut rx) = mpsc::unbounded_channel();
        let (closed, _) = watch::channel(false);
        let shared = Arc::new(Shared {
            tx: tx.clone(),
            inbound: Mutex::new(HashMap::new()),
            advertised: Mutex::new(HashMap::new()),
            next_handler: AtomicU64::new(1),
            closed,
            wire: config.record_wire.then(|| Mutex::new(Vec::new())),
            unknown_topic_frames: AtomicU64::new(0),
            bad_frames: AtomicU64::new(0),
        });

        let writer = shared.clone();
        tokio::spawn(async move {
            while let Some(out) = rx.recv().await {
                match out {
                    Outgoing::Frame { text, op, topic } => {
                        let len = text.len();
                        if sink.send(Message::Text(text)).await.is_err() {
                            break;
                        }
                        writer.record(Direction::Outbound, Some(op), Some(topic), len);
                    }
                    Outgoing::Close => {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                }
            }
            writer.closed.send_replace(true);
        });

        let reader = shared.clone();
        tokio::spawn(async move {
            while let Some(frame) = stream.next().await {
                match frame {
                    Ok(Message::Text(text)) => reader.dispatch(&text),
                    Ok(Message::Binary(_)) => {
                        reader.bad_frames.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(Message::Close(_)) | Err(_) => break,
                    Ok(_) => {}
                }
            }
            reader.closed.send_replace(true);
            let _ = reader.tx.send(Outgoing::Close);
        });

        Ok(ClientSession {
            shared,
            _close: Arc::new(CloseOnDrop(tx)),
        })
    }

    /// Binds `handler` to inbound publishes on `topic` and sends the subscribe envelope.
    pub fn subscribe<F>(&self, topic: &str, msg_type: &str, handler: F) -> Result<TopicBinding, ProtoError>
    where
        F: FnMut(ProtocolEnvelope) + Send + 'static,
    {
        self.subscribe_envelope(ProtocolEnvelope::subscribe(topic, msg_type)?, Box::new(handler))
    }

    /// Like [`subscribe`](Self::subscribe) with server-side throttling and queueing hints.
    pub fn subscribe_throttled<F>(
        &self,
        topic: &str,
        msg_type: &str,
        throttle_rate_ms: u64,
        queue_length: u64,
        handler: F,
    ) -> Result<TopicBinding, ProtoError>
    where
        F: FnMut(ProtocolEnvelope) + Send + 'static,
    {
        let env = ProtocolEnvelope::subscribe(topic, msg_type)?
            .with_throttle_rate(throttle_rate_ms)
            .with_queue_length(queue_length);
        self.subscribe_envelope(env, Box::new(handler))
    }

    fn subscribe_envelope(&self, env: ProtocolEnvelope, handler: Handler) -> Result<TopicBinding, ProtoError> {
        if self.is_closed() {
            return Err(ProtoError::SessionClosed);
        }
        let topic = env.topic().to_string();
        let id = self.shared.next_handler.fetch_add(1, Ordering::Relaxed);
        let binding = TopicBinding {
            topic: topic.clone(),
            msg_type: env.msg_type().unwrap_or_default().to_string(),
            direction: Direction::Inbound,
            handler_id: id,
        };
        {
            let mut inbound = lock(&self.shared.inbound);
            if inbound.contains_key(&topic) {
                return Err(ProtoError::DuplicateBinding(topic));
            }
            inbound.insert(
                topic.clone(),
                InboundSlot {
                    binding: binding.clone(),
                    handler: Arc::new(Mutex::new(handler)),
                },
            );
        }
        let env = env.with_id(format!("subscribe:{topic}:{id}"));
        if let Err(e) = self.shared.send(&env) {
            lock(&self.shared.inbound).remove(&topic);
            return Err(e);
        }
        Ok(binding)
    }

    /// Removes the inbound binding (if any) and sends the unsubscribe envelope.
    pub fn unsubscribe(&self, topic: &str) -> Result<(), ProtoError> {
        let env = ProtocolEnvelope::unsubscribe(topic)?;
        if let Some(slot) = lock(&self.shared.inbound).remove(topic) {
            self.shared.send(&env.with_id(format!("subscribe:{topic}:{}", slot.binding.handler_id)))
        } else {
            self.shared.send(&env)
        }
    }

    /// Advertises `topic` on first use, then publishes `msg` on it.
    pub fn advertise_and_publish(&self, topic: &str, msg_type: &str, msg: Value) -> Result<(), ProtoError> {
        let publish = ProtocolEnvelope::publish(topic, msg)?;
        {
            let mut adv = lock(&self.shared.advertised);
            if !adv.contains_key(topic) {
                let id = self.shared.next_handler.fetch_add(1, Ordering::Relaxed);
                self.shared.send(&ProtocolEnvelope::advertise(topic, msg_type)?)?;
                adv.insert(
                    topic.to_string(),
                    TopicBinding {
                        topic: topic.to_string(),
                        msg_type: msg_type.to_string(),
                        direction: Direction::Outbound,
                        handler_id: id,
                    },
                );
            }
            // Sent under the lock so the advertise always precedes the first publish.
            self.shared.send(&publish)
        }
    }

    pub fn bindings(&self) -> Vec<TopicBinding> {
        let mut out: Vec<_> = lock(&self.shared.inbound).values().map(|s| s.binding.clone()).collect();
        out.extend(lock(&self.shared.advertised).values().cloned());
        out.sort_by(|a, b| a.topic.cmp(&b.topic));
        out
    }

    pub fn is_closed(&self) -> bool {
        self.shared.is_closed()
    }

    /// Resolves once the connection is gone (either side closed it).
    pub async fn closed(&self) {
        let mut rx = self.shared.closed.subscribe();
        let _ = rx.wait_for(|c| *c).await;
    }

    pub fn close(&self) {
        let _ = self.shared.tx.send(Outgoing::Close);
    }

    /// Snapshot of the wire log (empty unless `record_wire` was set).
    pub fn wire_log(&self) -> Vec<WireRecord> {
        self.shared.wire.as_ref().map(|w| lock(w).clone()).unwrap_or_default()
    }

    /// Publish frames for topics with no inbound binding, dropped so far.
    pub fn unknown_topic_frames(&self) -> u64 {
        self.shared.unknown_topic_frames.load(Ordering::Relaxed)
    }

    /// Frames that failed to decode, dropped so far.
    pub fn bad_frames(&self) -> u64 {
        self.shared.bad_frames.load(Ordering::Relaxed)
    }
}
