//! Plant/learner messages over a byte stream.
//!
//! Frame: `u32` payload length, `u8` message type, payload. All integers
//! and floats are little-endian.
//!
//! | type | payload |
//! |------|---------|
//! | 1 STATE | `u32 n`, `n x f64` |
//! | 2 ACTION | `u32 n`, `n x f64` |
//! | 3 TRANSITION | obs, action, next_obs as in STATE, `f64 reward`, `u8 flags` (bit 0 done, bit 1 truncated) |
//! | 4 SNAPSHOT | `u64 version`, `u64 born_at_update`, `u32 checksum`, checkpoint bytes |

use std::io::{Read, Write};

use super::PolicySnapshot;
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::sac::{policy_from_checkpoint, Transition};

pub const MSG_STATE: u8 = 1;
pub const MSG_ACTION: u8 = 2;
pub const MSG_TRANSITION: u8 = 3;
pub const MSG_SNAPSHOT: u8 = 4;

/// Frames larger than this are rejected when reading.
pub const MAX_FRAME: u32 = 256 << 20;

#[derive(Clone, Debug)]
pub enum Message {
    State(Vec<f64>),
    Action(Vec<f64>),
    Transition(Transition),
    Snapshot(PolicySnapshot),
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::State(_) => MSG_STATE,
            Message::Action(_) => MSG_ACTION,
            Message::Transition(_) => MSG_TRANSITION,
            Message::Snapshot(_) => MSG_SNAPSHOT,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::State(v) | Message::Action(v) => put_vec(&mut out, v),
            Message::Transition(t) => {
                put_vec(&mut out, &t.obs);
                put_vec(&mut out, &t.action);
                put_vec(&mut out, &t.next_obs);
                out.extend_from_slice(&t.reward.to_le_bytes());
                out.push(t.done as u8 | (t.truncated as u8) << 1);
            }
            Message::Snapshot(s) => {
                out.extend_from_slice(&s.version().to_le_bytes());
                out.extend_from_slice(&s.born_at_update().to_le_bytes());
                out.extend_from_slice(&s.checksum().to_le_bytes());
                let ck = Checkpoint {
                    nets: vec![("policy".into(), s.policy().net().clone())],
                    scalars: s
                        .policy()
                        .action_scale()
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (format!("action_scale.{i}"), *v))
                        .collect(),
                };
                out.extend_from_slice(&ck.to_bytes());
            }
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(payload.len() + 5);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.push(self.kind());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(kind: u8, payload: &[u8]) -> Result<Self> {
        let mut r = Cursor {
            buf: payload,
            pos: 0,
        };
        let msg = match kind {
            MSG_STATE => Message::State(r.vec()?),
            MSG_ACTION => Message::Action(r.vec()?),
            MSG_TRANSITION => {
                let obs = r.vec()?;
                let action = r.vec()?;
                let next_obs = r.vec()?;
                let reward = f64::from_le_bytes(r.array()?);
                let flags = r.array::<1>()?[0];
                if flags > 0b01 && flags != 0b10 {
                    return Err(Error::Transport(format!(
                        "bad transition flags {flags:#04b}"
                    )));
                }
                Message::Transition(Transition {
                    obs,
                    action,
                    reward,
                    next_obs,
                    done: flags & 1 != 0,
                    truncated: flags & 2 != 0,
                })
            }
            MSG_SNAPSHOT => {
                let version = u64::from_le_bytes(r.array()?);
                let born = u64::from_le_bytes(r.array()?);
                let checksum = u32::from_le_bytes(r.array()?);
                let ck = Checkpoint::from_bytes(&payload[r.pos..])?;
                r.pos = payload.len();
                let snap = PolicySnapshot::new(policy_from_checkpoint(&ck)?, version, born);
                if snap.checksum() != checksum {
                    return Err(Error::Transport(format!(
                        "snapshot v{version} arrived with checksum {checksum:08x}, content hashes to {:08x}",
                        snap.checksum()
                    )));
                }
                Message::Snapshot(snap)
            }
            other => return Err(Error::Transport(format!("unknown message type {other}"))),
        };
        if r.pos != payload.len() {
            return Err(Error::Transport(format!(
                "{} trailing bytes after message type {kind}",
                payload.len() - r.pos
            )));
        }
        Ok(msg)
    }
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Transport("truncated message".into()))?;
        self.pos = end;
        Ok(s.try_into().expect("length checked"))
    }

    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = u32::from_le_bytes(self.array()?) as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Transport("vector length exceeds message".into()));
        }
        (0..n)
            .map(|_| Ok(f64::from_le_bytes(self.array()?)))
            .collect()
    }
}

pub fn write_message<W: Write + ?Sized>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&msg.encode())?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a header.
pub fn read_message<R: Read + ?Sized>(r: &mut R) -> Result<Option<Message>> {
    let mut header = [0u8; 5];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(Error::Transport(
                    "stream ended inside a frame header".into(),
                ))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes"));
    if len > MAX_FRAME {
        return Err(Error::Transport(format!(
            "frame of {len} bytes exceeds limit"
        )));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)
        .map_err(|e| Error::Transport(format!("stream ended inside a frame: {e}")))?;
    Message::decode(header[4], &payload).map(Some)
}
