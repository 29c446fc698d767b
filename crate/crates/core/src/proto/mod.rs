//! Bridge wire protocol: JSON envelopes over WebSocket text frames.

mod envelope;
mod session;

pub use envelope::{decode_envelope, encode_envelope, Op, ProtocolEnvelope};
pub use session::{
    ClientSession, Direction, Handler, SessionConfig, TopicBinding, WireRecord,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProtoError {
    #[error("malformed JSON frame: {0}")]
    MalformedJson(String),
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("invalid field {0:?}: {1}")]
    InvalidField(&'static str, String),
    #[error("bad url {0:?}")]
    BadUrl(String),
    #[error("connect failed: {0}")]
    ConnectFailed(String),
    #[error("topic {0} already has an inbound binding")]
    DuplicateBinding(String),
    #[error("session closed")]
    SessionClosed,
}
