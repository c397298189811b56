//! MNIST IDX binary container (big-endian, magic 2051 for images and 2049
//! for labels). Pixels are scaled to [0, 1] by /255 on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::augment::SoftLabel;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

use super::{Dataset, LabeledSample};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img = BufReader::new(File::open(images_path)?);
    let magic = read_u32(&mut img, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = read_u32(&mut img, images_path)? as usize;
    let rows = read_u32(&mut img, images_path)? as usize;
    let cols = read_u32(&mut img, images_path)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    img.read_exact(&mut pixels).map_err(|_| {
        Error::Format(format!("{}: truncated pixel data", images_path.display()))
    })?;

    let mut lbl = BufReader::new(File::open(labels_path)?);
    let magic = read_u32(&mut lbl, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let label_count = read_u32(&mut lbl, labels_path)? as usize;
    if label_count != count {
        return Err(Error::Format(format!(
            "count mismatch: {count} images vs {label_count} labels"
        )));
    }
    let mut labels = vec![0u8; count];
    lbl.read_exact(&mut labels).map_err(|_| {
        Error::Format(format!("{}: truncated label data", labels_path.display()))
    })?;

    let mut dataset = Vec::with_capacity(count);
    for (i, (&label, chunk)) in labels.iter().zip(pixels.chunks(rows * cols)).enumerate() {
        let data: Vec<f64> = chunk.iter().map(|&b| b as f64 / 255.0).collect();
        if label > 9 {
            return Err(Error::Format(format!("label byte {label} out of 0-9")));
        }
        dataset.push(LabeledSample {
            id: format!("mnist-{i}"),
            features: Matrix::from_vec(rows, cols, data)?,
            label: SoftLabel::one_hot(label as usize, 10)?,
        });
    }
    Ok(dataset)
}

/// Synthetic IDX image writer; the round-trip counterpart of the loader.
pub fn write_idx_images(path: &Path, images: &[Matrix]) -> Result<()> {
    let rows = images.first().map_or(0, |m| m.rows());
    let cols = images.first().map_or(0, |m| m.cols());
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    w.write_u32::<BigEndian>(images.len() as u32)?;
    w.write_u32::<BigEndian>(rows as u32)?;
    w.write_u32::<BigEndian>(cols as u32)?;
    for m in images {
        for &x in m.as_slice() {
            w.write_u8((x * 255.0).round().clamp(0.0, 255.0) as u8)?;
        }
    }
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u32::<BigEndian>(LABEL_MAGIC)?;
    w.write_u32::<BigEndian>(labels.len() as u32)?;
    w.write_all(labels)?;
    Ok(())
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    r.read_u32::<BigEndian>()
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn synthetic_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        let mut rng = SeededRng::new(99);
        let images: Vec<Matrix> = (0..12)
            .map(|_| {
                Matrix::from_vec(
                    4,
                    5,
                    (0..20).map(|_| rng.index(256) as f64 / 255.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let labels: Vec<u8> = (0..12).map(|i| (i % 10) as u8).collect();
        write_idx_images(&img_path, &images).unwrap();
        write_idx_labels(&lbl_path, &labels).unwrap();
        let ds = load_mnist_idx(&img_path, &lbl_path).unwrap();
        assert_eq!(ds.len(), 12);
        for (i, sample) in ds.iter().enumerate() {
            assert!(sample.features.max_abs_diff(&images[i]) < 1e-12);
            assert_eq!(sample.class(), labels[i] as usize);
        }
    }

    #[test]
    fn pixel_255_scales_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        write_idx_images(&img_path, &[Matrix::from_vec(1, 1, vec![1.0]).unwrap()]).unwrap();
        write_idx_labels(&lbl_path, &[7]).unwrap();
        let ds = load_mnist_idx(&img_path, &lbl_path).unwrap();
        assert_eq!(ds[0].features.get(0, 0), 1.0);
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        // 0x00000802 is not the image magic.
        std::fs::write(&img_path, [0, 0, 8, 2, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        write_idx_labels(&lbl_path, &[]).unwrap();
        assert!(matches!(
            load_mnist_idx(&img_path, &lbl_path),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        // Header claims one 28x28 image but no pixel payload follows.
        std::fs::write(&img_path, [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 28, 0, 0, 0, 28]).unwrap();
        write_idx_labels(&lbl_path, &[3]).unwrap();
        assert!(matches!(
            load_mnist_idx(&img_path, &lbl_path),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        write_idx_images(&img_path, &[Matrix::zeros(2, 2)]).unwrap();
        write_idx_labels(&lbl_path, &[1, 2]).unwrap();
        assert!(matches!(
            load_mnist_idx(&img_path, &lbl_path),
            Err(Error::Format(_))
        ));
    }
}
