use std::borrow::Cow;
use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};

use super::ProtoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Advertise,
    Unadvertise,
    Publish,
    Subscribe,
    Unsubscribe,
}

impl Op {
    pub const ALL: [Op; 5] = [Op::Advertise, Op::Unadvertise, Op::Publish, Op::Subscribe, Op::Unsubscribe];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Advertise => "advertise",
            Op::Unadvertise => "unadvertise",
            Op::Publish => "publish",
            Op::Subscribe => "subscribe",
            Op::Unsubscribe => "unsubscribe",
        }
    }

    fn parse(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.as_str() == s)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One bridge protocol message. Constructors enforce the per-op required fields,
/// so every value of this type encodes to a valid frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolEnvelope {
    op: Op,
    topic: String,
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    msg_type: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    msg: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    throttle_rate: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    queue_length: Option<u64>,
}

fn check_topic(topic: &str) -> Result<(), ProtoError> {
    if topic.starts_with('/') {
        Ok(())
    } else {
        Err(ProtoError::InvalidField("topic", format!("{topic:?} must start with '/'")))
    }
}

impl ProtocolEnvelope {
    fn bare(op: Op, topic: &str) -> Result<Self, ProtoError> {
        check_topic(topic)?;
        Ok(Self {
            op,
            topic: topic.to_string(),
            msg_type: None,
            msg: None,
            id: None,
            throttle_rate: None,
            queue_length: None,
        })
    }

    pub fn subscribe(topic: &str, msg_type: &str) -> Result<Self, ProtoError> {
        Ok(Self { msg_type: Some(msg_type.to_string()), ..Self::bare(Op::Subscribe, topic)? })
    }

    pub fn unsubscribe(topic: &str) -> Result<Self, ProtoError> {
        Self::bare(Op::Unsubscribe, topic)
    }

    pub fn advertise(topic: &str, msg_type: &str) -> Result<Self, ProtoError> {
        Ok(Self { msg_type: Some(msg_type.to_string()), ..Self::bare(Op::Advertise, topic)? })
    }

    pub fn unadvertise(topic: &str) -> Result<Self, ProtoError> {
        Self::bare(Op::Unadvertise, topic)
    }

    pub fn publish(topic: &str, msg: Value) -> Result<Self, ProtoError> {
        Ok(Self { msg: Some(msg), ..Self::bare(Op::Publish, topic)? })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    /// Type annotation on a publish (optional there, required on subscribe/advertise).
    pub fn with_type(mut self, msg_type: impl Into<String>) -> Self {
        self.msg_type = Some(msg_type.into());
        self
    }

    pub fn with_throttle_rate(mut self, ms: u64) -> Self {
        self.throttle_rate = Some(ms);
        self
    }

    pub fn with_queue_length(mut self, n: u64) -> Self {
        self.queue_length = Some(n);
        self
    }

    pub fn op(&self) -> Op {
        self.op
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn msg_type(&self) -> Option<&str> {
        self.msg_type.as_deref()
    }

    pub fn msg(&self) -> Option<&Value> {
        self.msg.as_ref()
    }

    pub fn into_msg(self) -> Option<Value> {
        self.msg
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn throttle_rate(&self) -> Option<u64> {
        self.throttle_rate
    }

    pub fn queue_length(&self) -> Option<u64> {
        self.queue_length
    }
}

pub fn encode_envelope(e: &ProtocolEnvelope) -> String {
    serde_json::to_string(e).expect("envelope fields are plain JSON")
}

fn opt_str(obj: &Map<String, Value>, key: &'static str) -> Result<Option<String>, ProtoError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ProtoError::InvalidField(key, "expected a string".into())),
    }
}

fn opt_uint(obj: &Map<String, Value>, key: &'static str) -> Result<Option<u64>, ProtoError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| ProtoError::InvalidField(key, "expected a non-negative integer".into())),
    }
}

/// Parses one frame. Unknown fields are ignored; bare `NaN`/`Infinity` tokens
/// (as emitted by Python's `json` module) are accepted inside message bodies.
pub fn decode_envelope(raw: &[u8]) -> Result<ProtocolEnvelope, ProtoError> {
    let text = std::str::from_utf8(raw).map_err(|e| ProtoError::MalformedJson(e.to_string()))?;
    let text = quote_non_finite(text);
    let value: Value = serde_json::from_str(&text).map_err(|e| ProtoError::MalformedJson(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(ProtoError::MalformedJson("frame is not a JSON object".into()));
    };
    let op = match obj.get("op") {
        None => return Err(ProtoError::MissingField("op")),
        Some(Value::String(s)) => Op::parse(s).ok_or_else(|| ProtoError::UnknownOp(s.clone()))?,
        Some(other) => return Err(ProtoError::UnknownOp(other.to_string())),
    };
    let topic = opt_str(&obj, "topic")?.ok_or(ProtoError::MissingField("topic"))?;
    check_topic(&topic)?;
    let msg_type = opt_str(&obj, "type")?;
    let msg = obj.remove("msg");
    match op {
        Op::Publish if msg.is_none() => return Err(ProtoError::MissingField("msg")),
        Op::Subscribe | Op::Advertise if msg_type.is_none() => return Err(ProtoError::MissingField("type")),
        _ => {}
    }
    Ok(ProtocolEnvelope {
        op,
        topic,
        msg_type,
        msg,
        id: opt_str(&obj, "id")?,
        throttle_rate: opt_uint(&obj, "throttle_rate")?,
        queue_length: opt_uint(&obj, "queue_length")?,
    })
}

/// Rewrites bare `NaN`, `Infinity` and `-Infinity` tokens outside strings as
/// JSON strings. Borrowed unchanged when none occur.
fn quote_non_finite(text: &str) -> Cow<'_, str> {
    if !text.contains("NaN") && !text.contains("Infinity") {
        return Cow::Borrowed(text);
    }
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len() + 16);
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    let mut copied = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        if b == b'"' {
            in_string = true;
            i += 1;
            continue;
        }
        let rest = &bytes[i..];
        let token = ["-Infinity", "Infinity", "NaN"].into_iter().find(|t| rest.starts_with(t.as_bytes()));
        if let Some(t) = token {
            out.push_str(&text[copied..i]);
            out.push('"');
            out.push_str(t);
            out.push('"');
            i += t.len();
            copied = i;
        } else {
            i += 1;
        }
    }
    out.push_str(&text[copied..]);
    Cow::Owned(out)
}
