//! `FVOL1` volume files.
//!
//! Layout: 8-byte magic `FVOL1\0\0\0`, three little-endian `u32` extents
//! (nx, ny, nz), one `u8` dtype tag (0 = float32, 1 = uint8 mask), then the
//! little-endian payload in x-fastest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BinaryMask, ProbabilityVolume, ScalarVolume, VolumeShape};
use crate::error::{Error, Result};
use crate::real::Real;

pub const MAGIC: [u8; 8] = *b"FVOL1\0\0\0";
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_MASK: u8 = 1;

/// Contents of an `FVOL1` file after decoding.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData<T> {
    Scalar(ScalarVolume<T>),
    Mask(BinaryMask),
}

fn write_header<W: Write>(w: &mut W, shape: VolumeShape, dtype: u8) -> Result<()> {
    w.write_all(&MAGIC)?;
    for extent in shape.dims() {
        let e = u32::try_from(extent).map_err(|_| Error::Format(format!("extent {extent} does not fit in u32")))?;
        w.write_all(&e.to_le_bytes())?;
    }
    w.write_all(&[dtype])?;
    Ok(())
}

fn write_f32s<W: Write, T: Real>(w: &mut W, shape: VolumeShape, data: &[T]) -> Result<()> {
    write_header(w, shape, DTYPE_F32)?;
    for &v in data {
        let v = v
            .to_f32()
            .ok_or_else(|| Error::Format("value not representable as f32".into()))?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_scalar<W: Write, T: Real>(w: &mut W, vol: &ScalarVolume<T>) -> Result<()> {
    write_f32s(w, vol.shape(), vol.data())
}

pub fn write_probability<W: Write, T: Real>(w: &mut W, vol: &ProbabilityVolume<T>) -> Result<()> {
    write_f32s(w, vol.shape(), vol.data())
}

pub fn write_mask<W: Write>(w: &mut W, mask: &BinaryMask) -> Result<()> {
    write_header(w, mask.shape(), DTYPE_MASK)?;
    let bytes: Vec<u8> = mask.data().iter().map(|&b| u8::from(b)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read<R: Read, T: Real>(r: &mut R) -> Result<VolumeData<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let shape = VolumeShape::try_from(dims)?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let data = match tag[0] {
        DTYPE_F32 => {
            let mut raw = vec![0u8; shape.len() * 4];
            r.read_exact(&mut raw)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).unwrap_or(T::nan()))
                .collect();
            VolumeData::Scalar(ScalarVolume::new(shape, values)?)
        }
        DTYPE_MASK => {
            let mut raw = vec![0u8; shape.len()];
            r.read_exact(&mut raw)?;
            if raw.iter().any(|&b| b > 1) {
                return Err(Error::Format("mask byte other than 0 or 1".into()));
            }
            VolumeData::Mask(BinaryMask::new(shape, raw.into_iter().map(|b| b == 1).collect())?)
        }
        other => return Err(Error::Format(format!("unknown dtype tag {other}"))),
    };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(data)
}

pub fn read_scalar<R: Read, T: Real>(r: &mut R) -> Result<ScalarVolume<T>> {
    match read(r)? {
        VolumeData::Scalar(v) => Ok(v),
        VolumeData::Mask(_) => Err(Error::Format("expected float32 payload, found mask".into())),
    }
}

pub fn read_probability<R: Read, T: Real>(r: &mut R) -> Result<ProbabilityVolume<T>> {
    let v: ScalarVolume<T> = read_scalar(r)?;
    ProbabilityVolume::new(v.shape(), v.data().to_vec())
}

pub fn read_mask<R: Read>(r: &mut R) -> Result<BinaryMask> {
    match read::<_, f32>(r)? {
        VolumeData::Mask(m) => Ok(m),
        VolumeData::Scalar(_) => Err(Error::Format("expected mask payload, found float32".into())),
    }
}

pub fn save_scalar<T: Real>(path: &Path, vol: &ScalarVolume<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_scalar(&mut w, vol)?;
    w.flush()?;
    Ok(())
}

pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mask(&mut w, mask)?;
    w.flush()?;
    Ok(())
}

pub fn load_scalar<T: Real>(path: &Path) -> Result<ScalarVolume<T>> {
    read_scalar(&mut BufReader::new(File::open(path)?))
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    read_mask(&mut BufReader::new(File::open(path)?))
}
