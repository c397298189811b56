//! SMFX feature container.
//!
//! Layout (little-endian): magic "SMFX", version u32, count u64, then per
//! sample: id length u32 + UTF-8 bytes, rows u32, cols u32, label length
//! u32, label f64s, feature f64s in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::augment::SoftLabel;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

use super::{Dataset, LabeledSample};

const MAGIC: &[u8; 4] = b"SMFX";
const VERSION: u32 = 1;

pub fn save_features(dataset: &[LabeledSample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(dataset.len() as u64)?;
    for s in dataset {
        let id = s.id.as_bytes();
        w.write_u32::<LittleEndian>(id.len() as u32)?;
        w.write_all(id)?;
        w.write_u32::<LittleEndian>(s.features.rows() as u32)?;
        w.write_u32::<LittleEndian>(s.features.cols() as u32)?;
        w.write_u32::<LittleEndian>(s.label.n_classes() as u32)?;
        for &p in s.label.probs() {
            w.write_f64::<LittleEndian>(p)?;
        }
        for &x in s.features.as_slice() {
            w.write_f64::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn load_features(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| truncated(path))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}",
            path.display()
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let count = r.read_u64::<LittleEndian>().map_err(|_| truncated(path))? as usize;
    let mut dataset = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(|_| truncated(path))?;
        let id = String::from_utf8(id)
            .map_err(|_| Error::Format(format!("{}: non-UTF-8 id", path.display())))?;
        let rows = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))? as usize;
        let cols = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))? as usize;
        let label_len = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))? as usize;
        let mut probs = vec![0.0; label_len];
        for p in probs.iter_mut() {
            *p = r.read_f64::<LittleEndian>().map_err(|_| truncated(path))?;
        }
        let mut data = vec![0.0; rows * cols];
        for x in data.iter_mut() {
            *x = r.read_f64::<LittleEndian>().map_err(|_| truncated(path))?;
        }
        dataset.push(LabeledSample {
            id,
            features: Matrix::from_vec(rows, cols, data)?,
            label: SoftLabel::new(probs)?,
        });
    }
    Ok(dataset)
}

fn truncated(path: &Path) -> Error {
    Error::Format(format!("{}: truncated SMFX file", path.display()))
}
