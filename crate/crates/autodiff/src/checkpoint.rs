//! Binary tensor archive.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "WLABCKPT"
//! version u32      currently 1
//! count   u32      number of tensors
//! then per tensor:
//!   name_len u32, name (UTF-8 bytes)
//!   rank     u32, dims (rank x u64)
//!   values   (product of dims) x f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{AdError, Result};

const MAGIC: &[u8; 8] = b"WLABCKPT";
const VERSION: u32 = 1;
const MAX_NAME: u32 = 4096;
const MAX_RANK: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn write_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, tensors)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    read_from(&mut BufReader::new(File::open(path)?))
}

fn write_to(w: &mut impl Write, tensors: &[NamedTensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&len_u32(tensors.len())?.to_le_bytes())?;
    for t in tensors {
        if t.values.len() != t.shape.iter().product::<usize>() {
            return Err(AdError::Format(format!("tensor {} has inconsistent shape", t.name)));
        }
        w.write_all(&len_u32(t.name.len())?.to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&len_u32(t.shape.len())?.to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &t.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| AdError::Format(format!("length {n} exceeds u32")))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_from(r: &mut impl Read) -> Result<Vec<NamedTensor>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AdError::Format("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(AdError::Format(format!("unsupported version {version}")));
    }
    let count = read_u32(r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = read_u32(r)?;
        if name_len > MAX_NAME {
            return Err(AdError::Format(format!("name length {name_len}")));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| AdError::Format("name is not UTF-8".into()))?;
        let rank = read_u32(r)?;
        if rank > MAX_RANK {
            return Err(AdError::Format(format!("rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| read_u64(r).and_then(|d| usize::try_from(d).map_err(|_| AdError::Format("dimension overflow".into()))))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| AdError::Format("element count overflow".into()))?;
        let mut values = Vec::new();
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        out.push(NamedTensor { name, shape, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_in_memory() {
        let tensors = vec![
            NamedTensor {
                name: "enc.conv1.w".into(),
                shape: vec![2, 1, 1, 3],
                values: vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5, 1e300, -7.25],
            },
            NamedTensor {
                name: "scalar".into(),
                shape: vec![],
                values: vec![0.125],
            },
        ];
        let mut bytes = Vec::new();
        write_to(&mut bytes, &tensors).unwrap();
        let back = read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, tensors);
        assert_eq!(back[0].values[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn truncated_and_foreign_files_fail() {
        let t = vec![NamedTensor {
            name: "a".into(),
            shape: vec![2],
            values: vec![1.0, 2.0],
        }];
        let mut bytes = Vec::new();
        write_to(&mut bytes, &t).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_from(&mut bytes.as_slice()).is_err());
        assert!(matches!(read_from(&mut &b"NOTACKPTxxxxxxxx"[..]), Err(AdError::Format(_))));
    }
}
