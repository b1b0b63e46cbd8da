//! Little-endian named-tensor container.
//!
//! Layout: magic `RPTC`, `u32` version, `u32` metadata length and UTF-8
//! metadata, `u32` entry count, then a header table of
//! `(u32 name length, name, u8 dtype, u32 rank, u64 dims…)` followed by the raw
//! data of every entry in table order.

use std::io::{Read, Write};

use crate::{AutodiffError, NamedTensors, Result, Tensor};

const MAGIC: &[u8; 4] = b"RPTC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F64 = 0,
}

/// Tensors plus a free-form metadata string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub metadata: String,
    pub tensors: NamedTensors,
}

pub fn write_container(container: &Container, mut out: impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let meta = container.metadata.as_bytes();
    out.write_all(&(meta.len() as u32).to_le_bytes())?;
    out.write_all(meta)?;
    out.write_all(&(container.tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &container.tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[DType::F64 as u8])?;
        out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    for t in container.tensors.values() {
        let mut buf = Vec::with_capacity(t.numel() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
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

pub fn read_container(mut input: impl Read) -> Result<Container> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AutodiffError::Format("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(AutodiffError::Format(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut input)? as usize;
    let mut meta = vec![0u8; meta_len];
    input.read_exact(&mut meta)?;
    let metadata = String::from_utf8(meta).map_err(|e| AutodiffError::Format(e.to_string()))?;
    let count = read_u32(&mut input)? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| AutodiffError::Format(e.to_string()))?;
        let mut dtype = [0u8; 1];
        input.read_exact(&mut dtype)?;
        if dtype[0] != DType::F64 as u8 {
            return Err(AutodiffError::Format(format!("unsupported dtype {} for {name}", dtype[0])));
        }
        let rank = read_u32(&mut input)? as usize;
        let shape = (0..rank).map(|_| read_u64(&mut input).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        table.push((name, shape));
    }
    let mut tensors = NamedTensors::new();
    for (name, shape) in table {
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 8];
        input.read_exact(&mut raw)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::new(shape, data).map_err(|e| AutodiffError::Format(format!("{name}: {e}")))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(AutodiffError::Format(format!("duplicate tensor {name}")));
        }
    }
    Ok(Container { metadata, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = Container { metadata: "epoch = 3".into(), ..Default::default() };
        c.tensors.insert("a.weight".into(), Tensor::new(vec![2, 3], vec![1., -2., 3.5, 0., 1e-300, 7.]).unwrap());
        c.tensors.insert("meta.step".into(), Tensor::scalar(42.0));
        let mut buf = Vec::new();
        write_container(&c, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"RPTC");
        assert_eq!(read_container(&buf[..]).unwrap(), c);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_container(&b"NOPE...."[..]).is_err());
    }
}
