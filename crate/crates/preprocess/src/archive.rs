//! Little-endian block archives.
//!
//! Layout: magic `RPBK`, u32 version, f64 edge, f64 offset, u32 n_points,
//! f64 min_fraction, f64 voxel_grid, u32 block count; then per block the
//! origin as 3 x f32 followed by n_points records of 3 x f32 position,
//! u8 label (255 when unlabeled) and u32 source index.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rosepoint_core::PartLabel;

use crate::{BlockSpec, PreprocessError, Result, SampledBlock};

const MAGIC: &[u8; 4] = b"RPBK";
const VERSION: u32 = 1;
const UNLABELED: u8 = 255;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PreprocessError + '_ {
    move |source| PreprocessError::Io { path: path.to_path_buf(), source }
}

/// Writes blocks that all share `spec` (including its offset).
pub fn write_block_archive(path: impl AsRef<Path>, spec: &BlockSpec, blocks: &[SampledBlock]) -> Result<()> {
    let path = path.as_ref();
    if let Some(b) = blocks.iter().find(|b| b.len() != spec.n_points || b.offset != spec.offset) {
        return Err(PreprocessError::Archive(format!(
            "block with {} rows at offset {} does not match spec ({} rows, offset {})",
            b.len(),
            b.offset,
            spec.n_points,
            spec.offset
        )));
    }
    let mut buf = Vec::with_capacity(48 + blocks.len() * (12 + spec.n_points * 17));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&spec.edge.to_le_bytes());
    buf.extend_from_slice(&spec.offset.to_le_bytes());
    buf.extend_from_slice(&(spec.n_points as u32).to_le_bytes());
    buf.extend_from_slice(&spec.min_fraction.to_le_bytes());
    buf.extend_from_slice(&spec.voxel_grid.to_le_bytes());
    buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for b in blocks {
        for c in b.block_origin {
            buf.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for (r, p) in b.positions.iter().enumerate() {
            for c in p {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
            buf.push(b.labels.as_ref().map_or(UNLABELED, |l| l[r].code()));
            buf.extend_from_slice(&(b.source_indices[r] as u32).to_le_bytes());
        }
    }
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    out.write_all(&buf).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Writes one archive per distinct offset. With a single offset the archive
/// goes to `path` itself; otherwise each file stem gains an `_off{offset}`
/// suffix. Returns the written paths.
pub fn write_block_archives(path: impl AsRef<Path>, spec: &BlockSpec, blocks: &[SampledBlock]) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let mut offsets: Vec<f64> = Vec::new();
    for b in blocks {
        if !offsets.contains(&b.offset) {
            offsets.push(b.offset);
        }
    }
    if offsets.len() <= 1 {
        let spec = spec.with_offset(offsets.first().copied().unwrap_or(spec.offset));
        write_block_archive(path, &spec, blocks)?;
        return Ok(vec![path.to_path_buf()]);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("blocks");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("bin");
    let mut written = Vec::new();
    for offset in offsets {
        let subset: Vec<SampledBlock> = blocks.iter().filter(|b| b.offset == offset).cloned().collect();
        let target = path.with_file_name(format!("{stem}_off{offset}.{ext}"));
        write_block_archive(&target, &spec.with_offset(offset), &subset)?;
        written.push(target);
    }
    Ok(written)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self.data.get(self.pos..end).ok_or_else(|| PreprocessError::Archive("unexpected end of file".into()))?;
        self.pos = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32> {
        self.take::<4>().map(f32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn read_block_archive(path: impl AsRef<Path>) -> Result<(BlockSpec, Vec<SampledBlock>)> {
    let path = path.as_ref();
    let mut data = Vec::new();
    BufReader::new(File::open(path).map_err(io_err(path))?).read_to_end(&mut data).map_err(io_err(path))?;
    let mut c = Cursor { data: &data, pos: 0 };
    if &c.take::<4>()? != MAGIC {
        return Err(PreprocessError::Archive("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(PreprocessError::Archive(format!("unsupported version {version}")));
    }
    let spec = BlockSpec { edge: c.f64()?, offset: c.f64()?, n_points: c.u32()? as usize, min_fraction: c.f64()?, voxel_grid: c.f64()? };
    spec.validate()?;
    let count = c.u32()? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let block_origin = [c.f32()? as f64, c.f32()? as f64, c.f32()? as f64];
        let mut positions = Vec::with_capacity(spec.n_points);
        let mut source_indices = Vec::with_capacity(spec.n_points);
        let mut labels = Vec::with_capacity(spec.n_points);
        let mut unlabeled = 0;
        for _ in 0..spec.n_points {
            positions.push([c.f32()? as f64, c.f32()? as f64, c.f32()? as f64]);
            let code = c.take::<1>()?[0];
            if code == UNLABELED {
                unlabeled += 1;
            } else {
                labels.push(
                    PartLabel::from_code(code as i64)
                        .ok_or_else(|| PreprocessError::Archive(format!("invalid label code {code}")))?,
                );
            }
            source_indices.push(c.u32()? as usize);
        }
        let labels = match (unlabeled, labels.len()) {
            (0, _) => Some(labels),
            (_, 0) => None,
            _ => return Err(PreprocessError::Archive("block mixes labeled and unlabeled rows".into())),
        };
        blocks.push(SampledBlock { positions, source_indices, labels, block_origin, edge: spec.edge, offset: spec.offset });
    }
    if c.pos != data.len() {
        return Err(PreprocessError::Archive(format!("{} trailing bytes", data.len() - c.pos)));
    }
    Ok((spec, blocks))
}
