//! VHSC binary array dumps.
//!
//! A record is the magic `VHSC`, a `u32` format version, a `u32` element
//! code (0 real, 1 complex), a `u32` rank, `rank` dimensions as `u64`, then
//! the row-major little-endian payload. Files may hold several records back
//! to back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VHSC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub dims: Vec<u64>,
    pub data: ArrayData,
}

impl Array {
    pub fn real(dims: Vec<u64>, data: Vec<f64>) -> Self {
        Array { dims, data: ArrayData::Real(data) }
    }

    pub fn complex(dims: Vec<u64>, data: Vec<Complex64>) -> Self {
        Array { dims, data: ArrayData::Complex(data) }
    }

    fn len(&self) -> usize {
        match &self.data {
            ArrayData::Real(v) => v.len(),
            ArrayData::Complex(v) => v.len(),
        }
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match &self.data {
            ArrayData::Real(v) => Ok(v),
            ArrayData::Complex(_) => Err(Error::Format("expected a real array".into())),
        }
    }

    pub fn as_complex(&self) -> Result<&[Complex64]> {
        match &self.data {
            ArrayData::Complex(v) => Ok(v),
            ArrayData::Real(_) => Err(Error::Format("expected a complex array".into())),
        }
    }
}

pub fn write_array<W: Write>(w: &mut W, a: &Array) -> Result<()> {
    let count: u64 = a.dims.iter().product();
    if count as usize != a.len() {
        return Err(Error::SizeMismatch { expected: count as usize, got: a.len() });
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let code: u32 = match a.data {
        ArrayData::Real(_) => 0,
        ArrayData::Complex(_) => 1,
    };
    w.write_all(&code.to_le_bytes())?;
    w.write_all(&(a.dims.len() as u32).to_le_bytes())?;
    for d in &a.dims {
        w.write_all(&d.to_le_bytes())?;
    }
    match &a.data {
        ArrayData::Real(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        ArrayData::Complex(v) => {
            for z in v {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads one record; `Ok(None)` at a clean end of input.
pub fn read_array<R: Read>(r: &mut R) -> Result<Option<Array>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let k = r.read(&mut magic[got..])?;
        if k == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::Format("truncated header".into()));
        }
        got += k;
    }
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let code = read_u32(r)?;
    let rank = read_u32(r)? as usize;
    let dims = (0..rank).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?;
    let count = dims.iter().product::<u64>() as usize;
    let data = match code {
        0 => ArrayData::Real((0..count).map(|_| read_f64(r)).collect::<Result<_>>()?),
        1 => ArrayData::Complex(
            (0..count)
                .map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?)))
                .collect::<Result<_>>()?,
        ),
        c => return Err(Error::Format(format!("unknown element code {c}"))),
    };
    Ok(Some(Array { dims, data }))
}

pub fn save(path: &Path, arrays: &[Array]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for a in arrays {
        write_array(&mut w, a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<Array>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(a) = read_array(&mut r)? {
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = Array::real(vec![2, 3], (0..6).map(|i| i as f64 * 0.5).collect());
        let b = Array::complex(vec![2], vec![Complex64::new(1.0, -2.0), Complex64::new(0.25, 3.5)]);
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        write_array(&mut buf, &b).unwrap();
        assert_eq!(&buf[..4], b"VHSC");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 0);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(buf.len(), (16 + 16 + 48) + (16 + 8 + 32));
        let mut r = &buf[..];
        assert_eq!(read_array(&mut r).unwrap().unwrap(), a);
        assert_eq!(read_array(&mut r).unwrap().unwrap(), b);
        assert!(read_array(&mut r).unwrap().is_none());
    }

    #[test]
    fn rejects_garbage() {
        let mut r = &b"NOPE\x01\0\0\0"[..];
        assert!(read_array(&mut r).is_err());
        let bad = Array::real(vec![3], vec![1.0]);
        assert!(write_array(&mut Vec::new(), &bad).is_err());
    }
}
