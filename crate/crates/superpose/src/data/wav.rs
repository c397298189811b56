//! Minimal RIFF/WAVE reader and writer for PCM16 mono files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Loads a PCM16 mono WAV file; samples are scaled by 1/32768 into [-1, 1).
pub fn load_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut tag = [0u8; 4];
    read_tag(&mut r, &mut tag, path)?;
    if &tag != b"RIFF" {
        return Err(Error::Format(format!("{}: missing RIFF tag", path.display())));
    }
    let _riff_size = read_u32(&mut r, path)?;
    read_tag(&mut r, &mut tag, path)?;
    if &tag != b"WAVE" {
        return Err(Error::Format(format!("{}: missing WAVE tag", path.display())));
    }

    let mut sample_rate = None;
    let mut data: Option<Vec<i16>> = None;
    loop {
        if read_tag_opt(&mut r, &mut tag)?.is_none() {
            break;
        }
        let chunk_size = read_u32(&mut r, path)? as usize;
        match &tag {
            b"fmt " => {
                let mut fmt = vec![0u8; chunk_size];
                r.read_exact(&mut fmt).map_err(|_| truncated(path))?;
                let audio_format = u16::from_le_bytes([fmt[0], fmt[1]]);
                let channels = u16::from_le_bytes([fmt[2], fmt[3]]);
                let rate = u32::from_le_bytes([fmt[4], fmt[5], fmt[6], fmt[7]]);
                let bits = u16::from_le_bytes([fmt[14], fmt[15]]);
                if audio_format != 1 {
                    return Err(Error::Format(format!(
                        "{}: audio format {audio_format}, only PCM (1) supported",
                        path.display()
                    )));
                }
                if channels != 1 {
                    return Err(Error::Format(format!(
                        "{}: {channels} channels, only mono supported",
                        path.display()
                    )));
                }
                if bits != 16 {
                    return Err(Error::Format(format!(
                        "{}: {bits}-bit samples, only 16-bit supported",
                        path.display()
                    )));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let mut payload = vec![0u8; chunk_size];
                r.read_exact(&mut payload).map_err(|_| truncated(path))?;
                data = Some(
                    payload
                        .chunks_exact(2)
                        .map(|b| i16::from_le_bytes([b[0], b[1]]))
                        .collect(),
                );
            }
            _ => {
                // Skip unknown chunks (LIST, fact, ...). Chunks are word-aligned.
                let skip = chunk_size + (chunk_size & 1);
                std::io::copy(&mut r.by_ref().take(skip as u64), &mut std::io::sink())?;
            }
        }
    }
    let rate = sample_rate
        .ok_or_else(|| Error::Format(format!("{}: no fmt chunk", path.display())))?;
    let data = data.ok_or_else(|| Error::Format(format!("{}: no data chunk", path.display())))?;
    Ok((data.iter().map(|&s| s as f64 / 32768.0).collect(), rate))
}

/// Writes samples in [-1, 1] as a PCM16 mono WAV file.
pub fn write_wav_pcm16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let data_len = samples.len() as u32 * 2;
    w.write_all(b"RIFF")?;
    w.write_u32::<LittleEndian>(36 + data_len)?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_u32::<LittleEndian>(16)?;
    w.write_u16::<LittleEndian>(1)?; // PCM
    w.write_u16::<LittleEndian>(1)?; // mono
    w.write_u32::<LittleEndian>(sample_rate)?;
    w.write_u32::<LittleEndian>(sample_rate * 2)?;
    w.write_u16::<LittleEndian>(2)?;
    w.write_u16::<LittleEndian>(16)?;
    w.write_all(b"data")?;
    w.write_u32::<LittleEndian>(data_len)?;
    for &x in samples {
        let v = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_i16::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_tag(r: &mut impl Read, tag: &mut [u8; 4], path: &Path) -> Result<()> {
    r.read_exact(tag).map_err(|_| truncated(path))
}

fn read_tag_opt(r: &mut impl Read, tag: &mut [u8; 4]) -> Result<Option<()>> {
    match r.read_exact(tag) {
        Ok(()) => Ok(Some(())),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    r.read_u32::<LittleEndian>().map_err(|_| truncated(path))
}

fn truncated(path: &Path) -> Error {
    Error::Format(format!("{}: truncated file", path.display()))
}
