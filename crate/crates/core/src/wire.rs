//! Binary model-exchange frames.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FTRL"
//! 4       1     version (1)
//! 5       1     message kind
//! 6       4     agent id, u32 LE
//! 10      4     round, u32 LE
//! 14      8     payload length, u64 LE
//! 22      ..    payload
//! ```
//!
//! A payload is a sequence of network blocks: role tag `u8`, layer count
//! `u16` LE, then per layer rows `u32` LE, cols `u32` LE, `rows * cols`
//! row-major `f64` LE weights and `rows` `f64` LE biases.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ddpg::{ModelBundle, NetworkRole};
use crate::error::{Error, Result};
use crate::nn::{Layer, ModelParams};

pub const MAGIC: [u8; 4] = *b"FTRL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
const LENGTH_OFFSET: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    PushModel = 0,
    PullRequest = 1,
    Snapshot = 2,
    Ack = 3,
    Error = 4,
}

impl MessageKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => MessageKind::PushModel,
            1 => MessageKind::PullRequest,
            2 => MessageKind::Snapshot,
            3 => MessageKind::Ack,
            4 => MessageKind::Error,
            _ => return None,
        })
    }
}

pub type Payload = Vec<(NetworkRole, ModelParams)>;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelEnvelope {
    pub version: u8,
    pub kind: MessageKind,
    pub agent_id: u32,
    pub round: u32,
    pub payload: Payload,
}

impl ModelEnvelope {
    pub fn new(kind: MessageKind, agent_id: u32, round: u32, payload: Payload) -> Self {
        Self {
            version: VERSION,
            kind,
            agent_id,
            round,
            payload,
        }
    }
}

/// Fixed-size frame header, decoded ahead of the payload on a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub kind: MessageKind,
    pub agent_id: u32,
    pub round: u32,
    pub payload_len: u64,
}

pub fn payload_from_bundle(bundle: &ModelBundle) -> Payload {
    NetworkRole::ALL
        .iter()
        .map(|&r| (r, bundle.get(r).clone()))
        .collect()
}

/// Requires exactly one block per role.
pub fn bundle_from_payload(payload: Payload) -> Result<ModelBundle> {
    let mut slots: [Option<ModelParams>; 4] = [None, None, None, None];
    for (role, params) in payload {
        let slot = &mut slots[role.tag() as usize];
        if slot.is_some() {
            return Err(Error::Validation(format!(
                "payload repeats the {role:?} network"
            )));
        }
        *slot = Some(params);
    }
    let [a, c, ta, tc] = slots;
    let missing = |r: NetworkRole| Error::Validation(format!("payload lacks the {r:?} network"));
    Ok(ModelBundle {
        actor: a.ok_or_else(|| missing(NetworkRole::Actor))?,
        critic: c.ok_or_else(|| missing(NetworkRole::Critic))?,
        target_actor: ta.ok_or_else(|| missing(NetworkRole::TargetActor))?,
        target_critic: tc.ok_or_else(|| missing(NetworkRole::TargetCritic))?,
    })
}

pub fn encode_payload(payload: &[(NetworkRole, ModelParams)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (role, params) in payload {
        out.push(role.tag());
        out.extend_from_slice(&(params.layers.len() as u16).to_le_bytes());
        for layer in &params.layers {
            out.extend_from_slice(&(layer.outputs as u32).to_le_bytes());
            out.extend_from_slice(&(layer.inputs as u32).to_le_bytes());
            for v in layer.weights.iter().chain(&layer.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn encode_envelope(env: &ModelEnvelope) -> Vec<u8> {
    let payload = encode_payload(&env.payload);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(env.version);
    out.push(env.kind as u8);
    out.extend_from_slice(&env.agent_id.to_le_bytes());
    out.extend_from_slice(&env.round.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn protocol(offset: usize, reason: impl Into<String>) -> Error {
    Error::Protocol {
        offset,
        reason: reason.into(),
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<FrameHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(protocol(
            bytes.len(),
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if bytes[0..4] != MAGIC {
        let at = (0..4).find(|&i| bytes[i] != MAGIC[i]).unwrap_or(0);
        return Err(protocol(at, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(protocol(4, format!("unsupported version {}", bytes[4])));
    }
    let kind = MessageKind::from_byte(bytes[5])
        .ok_or_else(|| protocol(5, format!("unknown message kind {}", bytes[5])))?;
    let u32_at =
        |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let mut len = [0u8; 8];
    len.copy_from_slice(&bytes[LENGTH_OFFSET..HEADER_LEN]);
    Ok(FrameHeader {
        kind,
        agent_id: u32_at(6),
        round: u32_at(10),
        payload_len: u64::from_le_bytes(len),
    })
}

/// Decodes exactly one complete frame.
pub fn decode_envelope(bytes: &[u8]) -> Result<ModelEnvelope> {
    let header = decode_header(bytes)?;
    let available = (bytes.len() - HEADER_LEN) as u64;
    if header.payload_len != available {
        return Err(protocol(
            LENGTH_OFFSET,
            format!(
                "declared payload of {} bytes, frame carries {available}",
                header.payload_len
            ),
        ));
    }
    let payload = decode_payload_at(&bytes[HEADER_LEN..], HEADER_LEN)?;
    Ok(ModelEnvelope {
        version: VERSION,
        kind: header.kind,
        agent_id: header.agent_id,
        round: header.round,
        payload,
    })
}

pub fn decode_payload(bytes: &[u8]) -> Result<Payload> {
    decode_payload_at(bytes, 0)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(protocol(self.offset(), format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| protocol(self.offset(), format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| {
                let mut a = [0u8; 8];
                a.copy_from_slice(c);
                f64::from_le_bytes(a)
            })
            .collect())
    }
}

fn decode_payload_at(bytes: &[u8], base: usize) -> Result<Payload> {
    let mut r = Reader {
        bytes,
        pos: 0,
        base,
    };
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let at = r.offset();
        let tag = r.u8("role tag")?;
        let role = NetworkRole::from_tag(tag)
            .ok_or_else(|| protocol(at, format!("unknown network role {tag}")))?;
        let layer_count = r.u16("layer count")?;
        let mut layers = Vec::with_capacity(layer_count as usize);
        for _ in 0..layer_count {
            let rows = r.u32("layer rows")? as usize;
            let cols = r.u32("layer cols")? as usize;
            let weight_count = rows
                .checked_mul(cols)
                .ok_or_else(|| protocol(r.offset(), "layer size overflows"))?;
            let weights = r.f64s(weight_count, "weights")?;
            let bias = r.f64s(rows, "biases")?;
            layers.push(Layer::new(rows, cols, weights, bias)?);
        }
        out.push((role, ModelParams { layers }));
    }
    Ok(out)
}
