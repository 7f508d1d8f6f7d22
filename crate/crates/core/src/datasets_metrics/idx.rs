//! IDX files as used by MNIST-style corpora. Header integers are big-endian.

use std::fs;
use std::path::Path;

use super::{Dataset, Labels};
use crate::tensor_nn::Tensor;
use crate::{Error, Result};

const IMAGES_3D: u32 = 0x0000_0803;
const IMAGES_4D: u32 = 0x0000_0804;
const LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format("IDX header truncated"))
}

/// Parses an unsigned-byte image file (`[n, h, w]` or `[n, h, w, c]`) into
/// `[h, w, c]` tensors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let magic = be_u32(bytes, 0)?;
    let rank = match magic {
        IMAGES_3D => 3,
        IMAGES_4D => 4,
        other => return Err(Error::format(format!("bad IDX image magic {other:#010x}"))),
    };
    let dims = (0..rank)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let c = if rank == 4 { dims[3] } else { 1 };
    let header = 4 + 4 * rank;
    let per = h * w * c;
    if per == 0 {
        return Err(Error::format("IDX images have a zero dimension"));
    }
    let expected = n
        .checked_mul(per)
        .and_then(|v| v.checked_add(header))
        .ok_or_else(|| Error::format("IDX dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "IDX image file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    (0..n)
        .map(|i| {
            let px = &bytes[header + i * per..header + (i + 1) * per];
            Tensor::new(vec![h, w, c], px.iter().map(|&b| b as f64 / 255.0).collect())
        })
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS {
        return Err(Error::format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    if bytes.len() != 8 + n {
        return Err(Error::format(format!(
            "IDX label file is {} bytes, header implies {}",
            bytes.len(),
            8 + n
        )));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Loads an image file and optional label file.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = match labels_path {
        Some(p) => {
            let l = parse_idx_labels(&fs::read(p)?)?;
            if l.len() != images.len() {
                return Err(Error::format(format!(
                    "{} images but {} labels",
                    images.len(),
                    l.len()
                )));
            }
            Labels::Classes(l)
        }
        None => Labels::None,
    };
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(name, images, labels)
}

/// Encodes images, quantizing pixels to `round(255 v)`.
pub fn encode_idx_images(images: &[Tensor]) -> Result<Vec<u8>> {
    let shape = images
        .first()
        .map(|t| t.shape().to_vec())
        .ok_or_else(|| Error::invalid("cannot encode an empty image set"))?;
    if shape.len() != 3 {
        return Err(Error::shape(format!("IDX images must be [h, w, c], got {shape:?}")));
    }
    let mut out = Vec::new();
    let four_d = shape[2] != 1;
    out.extend_from_slice(&(if four_d { IMAGES_4D } else { IMAGES_3D }).to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(shape[0] as u32).to_be_bytes());
    out.extend_from_slice(&(shape[1] as u32).to_be_bytes());
    if four_d {
        out.extend_from_slice(&(shape[2] as u32).to_be_bytes());
    }
    for img in images {
        out.extend(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::invalid(format!("label {l} exceeds u8")))?);
    }
    Ok(out)
}

/// Writes a dataset as IDX; class labels go to `labels_path` when given.
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: Option<&Path>) -> Result<()> {
    fs::write(images_path, encode_idx_images(dataset.images())?)?;
    if let Some(p) = labels_path {
        let labels = dataset
            .class_labels()
            .ok_or_else(|| Error::invalid("dataset has no class labels to write"))?;
        fs::write(p, encode_idx_labels(labels)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_image_file(px: u8) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGES_3D.to_be_bytes());
        for d in [1u32, 1, 1] {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.push(px);
        b
    }

    #[test]
    fn pixel_255_is_one() {
        let imgs = parse_idx_images(&one_image_file(255)).unwrap();
        assert_eq!(imgs[0].data(), &[1.0]);
        assert_eq!(imgs[0].shape(), &[1, 1, 1]);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut f = one_image_file(0);
        f[3] = 0x01;
        assert!(parse_idx_images(&f).is_err());
        let f = one_image_file(0);
        assert!(parse_idx_images(&f[..f.len() - 1]).is_err());
        assert!(parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 2, 1]).is_err());
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i.idx");
        let lp = dir.path().join("l.idx");
        fs::write(&ip, one_image_file(10)).unwrap();
        fs::write(&lp, encode_idx_labels(&[1, 2]).unwrap()).unwrap();
        assert!(matches!(load_idx(&ip, Some(&lp)), Err(Error::Format(_))));
    }
}
