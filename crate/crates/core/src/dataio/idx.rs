use crate::error::{Error, Result};
use crate::numeric::ImageGrid;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Decoded content of one IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxPayload {
    /// Pixels scaled to `[0, 1]`.
    Images(Vec<ImageGrid>),
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            message: format!("need 4 header bytes, file has {}", bytes.len()),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxPayload> {
    let magic = read_u32(bytes, 0)?;
    let (ndims, dims_offset) = match magic {
        IMAGE_MAGIC => (3usize, 4usize),
        LABEL_MAGIC => (1, 4),
        other => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("unsupported magic {other:#010x}"),
            })
        }
    };
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        dims.push(read_u32(bytes, dims_offset + 4 * i)? as usize);
    }
    let payload_start = dims_offset + 4 * ndims;
    let expected: usize = dims.iter().product();
    let payload = &bytes[payload_start.min(bytes.len())..];
    if payload.len() < expected {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!(
                "truncated payload: dims {dims:?} need {expected} bytes after offset {payload_start}, found {}",
                payload.len()
            ),
        });
    }
    if payload.len() > expected {
        return Err(Error::Parse {
            offset: payload_start + expected,
            message: format!("{} trailing bytes", payload.len() - expected),
        });
    }

    if magic == LABEL_MAGIC {
        return Ok(IdxPayload::Labels(payload.to_vec()));
    }
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let per = rows * cols;
    let images = (0..count)
        .map(|i| {
            let px = payload[i * per..(i + 1) * per]
                .iter()
                .map(|b| f64::from(*b) / 255.0)
                .collect();
            ImageGrid::new(rows, cols, px, (0.0, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdxPayload::Images(images))
}

/// Encodes images (rounded back to bytes, clamped to `[0, 1]`) or labels.
pub fn serialize_idx(payload: &IdxPayload) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match payload {
        IdxPayload::Labels(labels) => {
            out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
            out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
            out.extend_from_slice(labels);
        }
        IdxPayload::Images(images) => {
            let (rows, cols) = images
                .first()
                .map(|g| (g.height(), g.width()))
                .unwrap_or((0, 0));
            out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
            for d in [images.len(), rows, cols] {
                out.extend_from_slice(&(d as u32).to_be_bytes());
            }
            for g in images {
                if g.height() != rows || g.width() != cols {
                    return Err(Error::dims(
                        format!("{rows}x{cols}"),
                        format!("{}x{}", g.height(), g.width()),
                    ));
                }
                out.extend(
                    g.values()
                        .iter()
                        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
                );
            }
        }
    }
    Ok(out)
}
