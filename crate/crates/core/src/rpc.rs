//! JSON-RPC 2.0 envelopes and typed parameters shared by the key server and its clients.
//! Byte fields travel as standard base64.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const METHOD_SIGN: &str = "kf.sign";
pub const METHOD_VERIFY: &str = "kf.verify";
pub const METHOD_FORGE_REQUEST: &str = "kf.forgeRequest";
pub const METHOD_PUBLISH_NOW: &str = "kf.publishNow";
pub const METHOD_ROTATE: &str = "kf.rotate";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;
/// Application errors.
pub const UNKNOWN_DOMAIN: i64 = -32001;
pub const OUT_OF_SPAN: i64 = -32002;
pub const FORGE_REJECTED: i64 = -32003;
pub const CLOCK_OVERRIDE_DISABLED: i64 = -32004;
pub const UNAUTHORIZED: i64 = -32005;
pub const RESOLUTION_FAILED: i64 = -32006;

pub mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }

    pub mod array32 {
        use super::*;

        pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
            super::serialize(bytes, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
            let v = super::deserialize(d)?;
            <[u8; 32]>::try_from(v.as_slice()).map_err(|_| serde::de::Error::custom("expected 32 bytes"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcRequest {
    pub jsonrpc: String,
    pub method: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub id: Value,
}

impl RpcRequest {
    pub fn new(method: &str, params: impl Serialize, id: u64) -> Self {
        RpcRequest {
            jsonrpc: "2.0".into(),
            method: method.into(),
            params: serde_json::to_value(params).expect("params serialize"),
            id: Value::from(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcResponse {
    pub jsonrpc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RpcError>,
    pub id: Value,
}

impl RpcResponse {
    pub fn ok(id: Value, result: impl Serialize) -> Self {
        RpcResponse {
            jsonrpc: "2.0".into(),
            result: Some(serde_json::to_value(result).expect("result serialize")),
            error: None,
            id,
        }
    }

    pub fn err(id: Value, code: i64, message: impl Into<String>) -> Self {
        RpcResponse {
            jsonrpc: "2.0".into(),
            result: None,
            error: Some(RpcError { code, message: message.into(), data: None }),
            id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignParams {
    pub domain: String,
    #[serde(with = "b64::array32")]
    pub digest: [u8; 32],
    /// Signing time override; only honored when the server allows client clocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub now: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignResult {
    pub domain: String,
    pub tag: String,
    /// End of the tag's chunk.
    pub expires: i64,
    /// Encoded HIBS signature.
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    pub domain: String,
    #[serde(with = "b64::array32")]
    pub digest: [u8; 32],
    pub tag: String,
    /// Chunk-end hint carried in the header; checked against the tag when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires: Option<i64>,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
    /// Compact signatures: number of leading levels to take from cached parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub now: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeRequestParams {
    /// Domain whose server is asked to sign.
    pub domain: String,
    /// Wire-encoded forge request.
    #[serde(with = "b64")]
    pub request: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub now: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeRequestResult {
    /// The two rendered emails, earlier signing time first.
    pub emails: Vec<B64Bytes>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct B64Bytes(#[serde(with = "b64")] pub Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdminParams {
    pub domain: String,
    #[serde(default)]
    pub token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub now: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishResult {
    /// Whether a new file was appended.
    pub published: bool,
    /// Length of the domain's publication stream afterwards.
    pub stream_len: usize,
    /// Leaves covered by the latest publication.
    pub covered_chunks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotateResult {
    pub domain: String,
    pub generation: u32,
    #[serde(with = "b64")]
    pub master_key: Vec<u8>,
}
