//! Flat binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `DPTCMDL1` |
//! | 1 | backbone tag, 0 = CP, 1 = Tucker |
//! | 24 | dims `n1 n2 n3` as `u64` |
//! | 8 | rank `d` as `u64` |
//! | 8·n1·d | `A`, row-major `f64` |
//! | 8·n2·d | `B` |
//! | 8·n3·d | `C` |
//! | 8·d³ | core `G`, Tucker only, row-major |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solvers::{CpModel, Model, TuckerModel};
use crate::tensor::{Matrix, Tensor3};

pub const MAGIC: &[u8; 8] = b"DPTCMDL1";
const TAG_CP: u8 = 0;
const TAG_TUCKER: u8 = 1;

pub fn encode(model: &Model) -> Vec<u8> {
    let dims = model.dims();
    let d = model.rank();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let (a, b, c, g) = match model {
        Model::Cp(m) => {
            out.push(TAG_CP);
            (&m.a, &m.b, &m.c, None)
        }
        Model::Tucker(m) => {
            out.push(TAG_TUCKER);
            (&m.a, &m.b, &m.c, Some(&m.g))
        }
    };
    for n in dims {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    out.extend_from_slice(&(d as u64).to_le_bytes());
    let floats = a
        .as_slice()
        .iter()
        .chain(b.as_slice())
        .chain(c.as_slice())
        .chain(g.map(Tensor3::as_slice).unwrap_or(&[]));
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Data(format!("model file truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Data("model size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(buf: &[u8]) -> Result<Model> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Data("not a model file (bad magic)".into()));
    }
    let tag = cur.take(1)?[0];
    let mut dims = [0usize; 3];
    for n in &mut dims {
        *n = usize::try_from(cur.u64()?).map_err(|_| Error::Data("dimension overflow".into()))?;
    }
    let d = usize::try_from(cur.u64()?).map_err(|_| Error::Data("rank overflow".into()))?;
    let mut factor = |rows: usize| -> Result<Matrix> {
        let n = rows.checked_mul(d).ok_or_else(|| Error::Data("model size overflow".into()))?;
        Matrix::from_vec(rows, d, cur.floats(n)?).map_err(|e| Error::Data(e.to_string()))
    };
    let a = factor(dims[0])?;
    let b = factor(dims[1])?;
    let c = factor(dims[2])?;
    let model = match tag {
        TAG_CP => Model::Cp(CpModel::new(a, b, c)?),
        TAG_TUCKER => {
            let g = Tensor3::from_vec([d; 3], cur.floats(d * d * d)?)?;
            Model::Tucker(TuckerModel::new(a, b, c, g)?)
        }
        t => return Err(Error::Data(format!("unknown backbone tag {t}"))),
    };
    if cur.pos != buf.len() {
        return Err(Error::Data(format!(
            "{} trailing bytes after model",
            buf.len() - cur.pos
        )));
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn round_trips() {
        let mut rng = RngStream::from_seed(3);
        let cp = Model::Cp(CpModel::random([3, 4, 5], 2, &mut rng));
        let tk = Model::Tucker(TuckerModel::random([3, 4, 5], 2, &mut rng));
        for m in [cp, tk] {
            let bytes = encode(&m);
            let back = decode(&bytes).unwrap();
            assert_eq!(back.reconstruct(), m.reconstruct());
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let m = Model::Cp(CpModel::new(
            Matrix::from_rows(&[&[2.0]]),
            Matrix::from_rows(&[&[3.0]]),
            Matrix::from_rows(&[&[4.0]]),
        )
        .unwrap());
        let bytes = encode(&m);
        assert_eq!(bytes.len(), 8 + 1 + 24 + 8 + 3 * 8);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes[8], 0);
        assert_eq!(u64::from_le_bytes(bytes[9..17].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[41..49].try_into().unwrap()), 2.0);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut rng = RngStream::from_seed(3);
        let bytes = encode(&Model::Cp(CpModel::random([2, 2, 2], 1, &mut rng)));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Data(_))));
        let mut bad = bytes;
        bad[8] = 7;
        assert!(decode(&bad).is_err());
    }
}
