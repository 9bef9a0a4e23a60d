//! Binary tensor container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   b"SFCK"
//! version u32 (= 1)
//! count   u32
//! count × { name_len u32, name utf-8, ndim u32, dims u64 × ndim, data f64 × Π dims }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Parameters;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SFCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_tensors<P: Parameters, W: Write>(params: &P, mut w: W) -> std::io::Result<()> {
    let tensors = params.tensors();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<StoredTensor>> {
    let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r).map_err(io)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r).map_err(io)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let ndim = read_u32(&mut r).map_err(io)? as usize;
        let shape = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(io)?;
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_bits(read_u64(&mut r).map_err(io)?));
        }
        out.push(StoredTensor { name, shape, data });
    }
    Ok(out)
}

/// Copies stored tensors into `params`; names, order and shapes must match exactly.
pub fn restore<P: Parameters>(params: &mut P, stored: &[StoredTensor]) -> Result<()> {
    let targets = params.tensors_mut();
    if targets.len() != stored.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            targets.len(),
            stored.len()
        )));
    }
    for (dst, src) in targets.into_iter().zip(stored) {
        if dst.name != src.name || dst.shape != src.shape {
            return Err(Error::Checkpoint(format!(
                "tensor mismatch: expected {} {:?}, found {} {:?}",
                dst.name, dst.shape, src.name, src.shape
            )));
        }
        dst.data.copy_from_slice(&src.data);
    }
    Ok(())
}

pub fn save<P: Parameters>(params: &P, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensors(params, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_into<P: Parameters>(params: &mut P, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let stored = read_tensors(BufReader::new(file))?;
    restore(params, &stored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Dense, Gru};
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut g = Gru::init(3, 2, &mut rng);
        g.b_n[1] = -0.0;
        g.b_z[0] = f64::MIN_POSITIVE / 3.0;
        let mut buf = Vec::new();
        write_tensors(&g, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SFCK");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        let mut back = Gru::zeros(3, 2);
        restore(&mut back, &read_tensors(buf.as_slice()).unwrap()).unwrap();
        for (a, b) in g.tensors().iter().zip(back.tensors()) {
            assert!(a.data.iter().zip(b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let d = Dense::zeros(2, 3);
        let mut buf = Vec::new();
        write_tensors(&d, &mut buf).unwrap();
        let mut other = Dense::zeros(3, 3);
        assert!(matches!(
            restore(&mut other, &read_tensors(buf.as_slice()).unwrap()),
            Err(Error::Checkpoint(_))
        ));
        assert!(read_tensors(&b"XXXX"[..]).is_err());
    }
}
