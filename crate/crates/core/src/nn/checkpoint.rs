//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "RSACKPT\0"
//! version  u32
//! n_nets   u32
//!   per net: name_len u32, name (utf-8), n_layers u32, (in u32, out u32) per layer
//! n_scalars u32
//!   per scalar: name_len u32, name, value f64
//! payload: per net, per layer: weights row-major (in x out) f64, bias f64
//! crc32    u32 over every preceding byte
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RSACKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named networks plus named scalars (e.g. the log entropy coefficient).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub nets: Vec<(String, Mlp)>,
    pub scalars: Vec<(String, f64)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<&Mlp> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.nets.len() as u32);
        for (name, net) in &self.nets {
            put_str(&mut out, name);
            put_u32(&mut out, net.layers().len() as u32);
            for l in net.layers() {
                put_u32(&mut out, l.input_dim() as u32);
                put_u32(&mut out, l.output_dim() as u32);
            }
        }
        put_u32(&mut out, self.scalars.len() as u32);
        for (name, v) in &self.scalars {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (_, net) in &self.nets {
            for block in net.blocks() {
                for v in block {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 8 {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if &body[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let n_nets = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            let name = r.string()?;
            let n_layers = r.u32()? as usize;
            let mut dims = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                dims.push((r.u32()? as usize, r.u32()? as usize));
            }
            shapes.push((name, dims));
        }
        let n_scalars = r.u32()? as usize;
        let mut scalars = Vec::with_capacity(n_scalars);
        for _ in 0..n_scalars {
            let name = r.string()?;
            scalars.push((name, r.f64()?));
        }
        let mut nets = Vec::with_capacity(n_nets);
        for (name, dims) in shapes {
            let mut layers = Vec::with_capacity(dims.len());
            for (i, o) in dims {
                let w = r.f64s(i * o)?;
                let b = r.f64s(o)?;
                layers.push(Linear {
                    weight: Array2::from_shape_vec((i, o), w).expect("shape from table"),
                    bias: Array1::from(b),
                });
            }
            let net = Mlp::from_layers(layers)
                .map_err(|e| Error::Checkpoint(format!("net `{name}`: {e}")))?;
            nets.push((name, net));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes before checksum".into()));
        }
        Ok(Checkpoint { nets, scalars })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("bad utf-8 name".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Checkpoint {
            nets: vec![
                ("policy".into(), Mlp::new(&[8, 16, 16, 4], &mut rng)),
                ("q1".into(), Mlp::new(&[10, 16, 1], &mut rng)),
            ],
            scalars: vec![("log_alpha".into(), -1.25)],
        }
    }

    #[test]
    fn round_trip_preserves_outputs() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(ck, back);
        let x = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8];
        assert_eq!(
            ck.net("policy").unwrap().forward(&x).unwrap(),
            back.net("policy").unwrap().forward(&x).unwrap()
        );
        assert_eq!(back.scalar("log_alpha"), Some(-1.25));
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_and_version_are_detected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 9]).is_err());
        let mut v2 = bytes.clone();
        v2[8] = 2;
        match Checkpoint::from_bytes(&v2) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn layout_is_little_endian() {
        let net = Mlp::from_layers(vec![Linear {
            weight: Array2::from_elem((1, 1), 1.0),
            bias: Array1::from(vec![-2.0]),
        }])
        .unwrap();
        let ck = Checkpoint {
            nets: vec![("n".into(), net)],
            scalars: vec![],
        };
        let bytes = ck.to_bytes();
        // header: magic(8) version(4) n_nets(4) name_len(4) "n"(1) n_layers(4) dims(8) n_scalars(4)
        let payload = 8 + 4 + 4 + 4 + 1 + 4 + 8 + 4;
        assert_eq!(&bytes[payload..payload + 8], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[payload + 8..payload + 16], &(-2.0f64).to_le_bytes());
        assert_eq!(bytes.len(), payload + 16 + 4);
    }
}
