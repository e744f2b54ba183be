//! Binary checkpoint container, all integers and floats little-endian:
//!
//! ```text
//! magic          8 bytes  "RPPGFPN\0"
//! version        u32      1
//! in_channels    u32
//! stem_kernel    u32
//! kernel         u32
//! base_width     u32
//! pyramid_width  u32
//! num_stages     u32
//! stage_widths   u32 x num_stages
//! num_targets    u32
//! targets        num_targets x (u8 length, utf-8 key)
//! has_scaler     u8       0 or 1
//! scaler         num_targets x (f64 mean, f64 std), when has_scaler = 1
//! num_params     u64
//! params         f32 x num_params
//! ```

use std::path::Path;

use super::network::{FpnConfig, FpnModel};
use super::scaler::StandardScaler;
use crate::biomarker::Biomarker;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RPPGFPN\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FpnModel,
    pub scaler: Option<StandardScaler>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.model.config();
        let mut out = Vec::with_capacity(64 + 4 * self.model.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [c.in_channels, c.stem_kernel, c.kernel, c.base_width, c.pyramid_width, c.num_stages()] {
            put_u32(&mut out, v);
        }
        for &w in &c.stage_widths {
            put_u32(&mut out, w);
        }
        put_u32(&mut out, c.targets.len());
        for t in &c.targets {
            out.push(t.key().len() as u8);
            out.extend_from_slice(t.key().as_bytes());
        }
        match &self.scaler {
            Some(s) => {
                out.push(1);
                for (m, sd) in s.mean.iter().zip(&s.std) {
                    out.extend_from_slice(&m.to_le_bytes());
                    out.extend_from_slice(&sd.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(self.model.num_params() as u64).to_le_bytes());
        for p in self.model.params() {
            out.extend_from_slice(&(*p as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let in_channels = r.u32()? as usize;
        let stem_kernel = r.u32()? as usize;
        let kernel = r.u32()? as usize;
        let base_width = r.u32()? as usize;
        let pyramid_width = r.u32()? as usize;
        let num_stages = r.u32()? as usize;
        if num_stages > 16 {
            return Err(Error::Checkpoint(format!("{num_stages} stages")));
        }
        let stage_widths = (0..num_stages).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let num_targets = r.u32()? as usize;
        let mut targets = Vec::with_capacity(num_targets.min(64));
        for _ in 0..num_targets {
            let n = r.take(1)?[0] as usize;
            let key = std::str::from_utf8(r.take(n)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
            targets.push(
                key.parse::<Biomarker>()
                    .map_err(|_| Error::Checkpoint(format!("unknown target {key:?}")))?,
            );
        }
        let config = FpnConfig {
            in_channels,
            stem_kernel,
            kernel,
            base_width,
            stage_widths,
            pyramid_width,
            targets: targets.clone(),
        };
        config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let scaler = match r.take(1)?[0] {
            0 => None,
            1 => {
                let mut mean = Vec::with_capacity(num_targets);
                let mut std = Vec::with_capacity(num_targets);
                for _ in 0..num_targets {
                    mean.push(r.f64()?);
                    std.push(r.f64()?);
                }
                Some(StandardScaler { targets, mean, std })
            }
            f => return Err(Error::Checkpoint(format!("bad scaler flag {f}"))),
        };
        let n = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let expected = FpnModel::zeroed(config.clone())?.num_params();
        if n != expected {
            return Err(Error::Checkpoint(format!("{n} parameters, topology needs {expected}")));
        }
        let blob = r.take(4 * n)?;
        let params = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            model: FpnModel::from_params(config, params)?,
            scaler,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::Tensor;

    fn ckpt() -> Checkpoint {
        let model = FpnModel::new(FpnConfig::default(), 7).unwrap();
        let targets = model.config().targets.clone();
        let mut scaler = StandardScaler::identity(&targets);
        scaler.mean[0] = 122.45;
        scaler.std[0] = 17.43;
        Checkpoint {
            model,
            scaler: Some(scaler),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = ckpt();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        let x = Tensor {
            channels: 21,
            len: 300,
            data: (0..21 * 300).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect(),
        };
        let a = c.model.forward(&x).unwrap();
        let b = back.model.forward(&x).unwrap();
        assert!(a.ppg.iter().zip(&b.ppg).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(a.biomarkers.iter().zip(&b.biomarkers).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn file_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let c = ckpt();
        c.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"RPPGFPN\0");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 21);
        let n = c.model.num_params();
        assert_eq!(u64::from_le_bytes(bytes[bytes.len() - 4 * n - 8..bytes.len() - 4 * n].try_into().unwrap()), n as u64);
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = ckpt().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..100]), Err(Error::Checkpoint(_))));
        assert!(matches!(Checkpoint::from_bytes(b"garbage!xxxx"), Err(Error::Checkpoint(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Checkpoint(_))));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(Error::Checkpoint(_))));
    }
}
