//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "WSNERCRF" | version u8 | header_len u32 | header JSON
//! transitions f64[T·T] | start f64[T] | end f64[T] | mask u8[T·T + 2T]
//! emitter block | SHA-256 of everything before it (32 bytes)
//! ```
//!
//! The hashed emitter block stores `scale` and the non-zero raw rows as
//! `(bucket u32, f64[T])`; the external block stores every table.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChainCrf, ConstraintMask, CrfModel, EmissionModel};
use crate::corpus::LabelScheme;
use crate::emitter::{EmissionTable, EmitterConfig, ExternalEmissions, FeatureEmitter};
use crate::error::{Error, Result};
use crate::fsutil;

const MAGIC: &[u8; 8] = b"WSNERCRF";
pub const FORMAT_VERSION: u8 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u8,
    scheme: LabelScheme,
    emitter: EmitterHeader,
    constrained: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EmitterHeader {
    Hashed {
        window: usize,
        hash_dim: usize,
        hash_seed: u64,
    },
    External {
        tables: usize,
    },
}

pub fn to_bytes(model: &CrfModel) -> Result<Vec<u8>> {
    let t = model.scheme.num_tags();
    let emitter = match &model.emitter {
        EmissionModel::Hashed(e) => EmitterHeader::Hashed {
            window: e.config().window,
            hash_dim: e.config().hash_dim,
            hash_seed: e.config().hash_seed,
        },
        EmissionModel::External(x) => EmitterHeader::External { tables: x.len() },
    };
    let header = serde_json::to_vec(&Header {
        format_version: FORMAT_VERSION,
        scheme: model.scheme.clone(),
        emitter,
        constrained: model.is_constrained(),
    })?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let crf = &model.crf;
    for x in crf.transitions.iter().chain(&crf.start).chain(&crf.end) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &b in crf
        .mask
        .transitions
        .iter()
        .chain(&crf.mask.start)
        .chain(&crf.mask.end)
    {
        out.push(b as u8);
    }
    match &model.emitter {
        EmissionModel::Hashed(e) => {
            out.extend_from_slice(&e.scale().to_le_bytes());
            let rows: Vec<(usize, &[f64])> = e
                .raw()
                .chunks(t)
                .enumerate()
                .filter(|(_, r)| r.iter().any(|x| x.to_bits() != 0))
                .collect();
            out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
            for (bucket, row) in rows {
                out.extend_from_slice(&(bucket as u32).to_le_bytes());
                for x in row {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        EmissionModel::External(x) => {
            for (id, table) in x.tables() {
                out.extend_from_slice(&(id.len() as u32).to_le_bytes());
                out.extend_from_slice(id.as_bytes());
                out.extend_from_slice(&(table.len() as u32).to_le_bytes());
                for v in table.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corruption("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn bools(&mut self, n: usize) -> Result<Vec<bool>> {
        self.take(n)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Corruption("invalid mask byte".into())),
            })
            .collect()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<CrfModel> {
    if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Corruption("not a model file".into()));
    }
    let version = bytes[MAGIC.len()];
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < MAGIC.len() + 1 + CHECKSUM_LEN {
        return Err(Error::Corruption("file truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Corruption("checksum mismatch".into()));
    }

    let mut r = Reader {
        buf: body,
        pos: MAGIC.len() + 1,
    };
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Corruption(format!("bad header: {e}")))?;
    let t = header.scheme.num_tags();
    let transitions = r.f64s(t * t)?;
    let start = r.f64s(t)?;
    let end = r.f64s(t)?;
    let mask = ConstraintMask {
        num_tags: t,
        transitions: r.bools(t * t)?,
        start: r.bools(t)?,
        end: r.bools(t)?,
    };
    let emitter = match header.emitter {
        EmitterHeader::Hashed {
            window,
            hash_dim,
            hash_seed,
        } => {
            let config = EmitterConfig {
                window,
                hash_dim,
                hash_seed,
            };
            config.validate()?;
            let scale = r.f64()?;
            let rows = r.u32()? as usize;
            let mut raw = vec![0.0; hash_dim * t];
            for _ in 0..rows {
                let bucket = r.u32()? as usize;
                if bucket >= hash_dim {
                    return Err(Error::Corruption(format!("bucket {bucket} out of range")));
                }
                for y in 0..t {
                    raw[bucket * t + y] = r.f64()?;
                }
            }
            EmissionModel::Hashed(FeatureEmitter::from_parts(config, t, raw, scale))
        }
        EmitterHeader::External { tables } => {
            let mut ext = ExternalEmissions::new(t);
            for _ in 0..tables {
                let id_len = r.u32()? as usize;
                let id = std::str::from_utf8(r.take(id_len)?)
                    .map_err(|_| Error::Corruption("sentence id is not UTF-8".into()))?
                    .to_owned();
                let rows = r.u32()? as usize;
                let table = EmissionTable::from_flat(r.f64s(rows * t)?, t);
                ext.insert(id, table)?;
            }
            EmissionModel::External(ext)
        }
    };
    if r.pos != body.len() {
        return Err(Error::Corruption("trailing bytes".into()));
    }
    Ok(CrfModel {
        scheme: header.scheme,
        crf: ChainCrf {
            num_tags: t,
            transitions,
            start,
            end,
            mask,
        },
        emitter,
    })
}

pub fn save_model(model: &CrfModel, path: &Path) -> Result<()> {
    fsutil::atomic_write(path, &to_bytes(model)?)
}

pub fn load_model(path: &Path) -> Result<CrfModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64) -> CrfModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = EmitterConfig {
            window: 1,
            hash_dim: 64,
            hash_seed: 9,
        };
        let mut m = CrfModel::new(LabelScheme::default(), cfg, true).unwrap();
        for x in m
            .crf
            .transitions
            .iter_mut()
            .chain(&mut m.crf.start)
            .chain(&mut m.crf.end)
        {
            *x = rng.gen_range(-2.0..2.0);
        }
        if let EmissionModel::Hashed(e) = &mut m.emitter {
            for f in 0..64 {
                if rng.gen_bool(0.5) {
                    for y in 0..3 {
                        e.set_weight(f, y, rng.gen_range(-2.0..2.0));
                    }
                }
            }
            e.shrink(0.37);
        }
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = random_model(1);
        let back = from_bytes(&to_bytes(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back).unwrap(), to_bytes(&m).unwrap());
    }

    #[test]
    fn external_round_trip() {
        let mut ext = ExternalEmissions::new(3);
        ext.insert(
            "a",
            EmissionTable::from_flat(vec![0.1, -0.2, 0.3, 1.0, 2.0, 3.0], 3),
        )
        .unwrap();
        let m = CrfModel::with_emitter(LabelScheme::default(), EmissionModel::External(ext), false);
        let back = from_bytes(&to_bytes(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(!back.is_constrained());
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = to_bytes(&random_model(2)).unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 12, 9] {
            assert!(
                matches!(from_bytes(&bytes[..cut]), Err(Error::Corruption(_))),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn flipped_payload_byte_is_corruption() {
        let mut bytes = to_bytes(&random_model(3)).unwrap();
        let n = bytes.len();
        bytes[n - 40] ^= 0x01;
        assert!(matches!(from_bytes(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut bytes = to_bytes(&random_model(4)).unwrap();
        bytes[MAGIC.len()] += 1;
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::Version {
                found: 2,
                expected: 1
            })
        ));
    }
}
