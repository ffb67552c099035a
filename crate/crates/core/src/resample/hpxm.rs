//! HPXM container: a 9-byte header followed by a channel-major
//! little-endian payload in nested pixel order.
//!
//! ```text
//! "HPXM" | version u8 = 1 | order u8 | channels u16 | dtype u8 | payload
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::healpix::Order;
use crate::tensor::{Domain, SphereMap};

pub const HPXM_MAGIC: &[u8; 4] = b"HPXM";
pub const HPXM_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            c => Err(Error::Format(format!("unsupported HPXM dtype {c}"))),
        }
    }
}

pub fn write_hpxm_to(w: &mut impl Write, m: &SphereMap, dtype: Dtype) -> Result<()> {
    if m.domain() != Domain::Full {
        return Err(Error::InvalidArgument("HPXM stores full-sphere maps only".into()));
    }
    let channels = u16::try_from(m.channels())
        .map_err(|_| Error::InvalidArgument(format!("{} channels do not fit HPXM", m.channels())))?;
    w.write_all(HPXM_MAGIC)?;
    w.write_all(&[HPXM_VERSION, m.order().value()])?;
    w.write_all(&channels.to_le_bytes())?;
    w.write_all(&[dtype as u8])?;
    let mut buf = Vec::with_capacity(m.data().len() * dtype.size());
    match dtype {
        Dtype::F32 => m.data().iter().for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => m.data().iter().for_each(|&v| buf.extend_from_slice(&v.to_le_bytes())),
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_hpxm_from(r: &mut impl Read) -> Result<(SphereMap, Dtype)> {
    let mut header = [0u8; 9];
    r.read_exact(&mut header).map_err(|_| Error::Format("truncated HPXM header".into()))?;
    if &header[..4] != HPXM_MAGIC {
        return Err(Error::Format("not an HPXM file".into()));
    }
    if header[4] != HPXM_VERSION {
        return Err(Error::Format(format!("unsupported HPXM version {}", header[4])));
    }
    let order = Order::new(header[5]).map_err(|e| Error::Format(e.to_string()))?;
    let channels = u16::from_le_bytes([header[6], header[7]]) as usize;
    if channels == 0 {
        return Err(Error::Format("HPXM with zero channels".into()));
    }
    let dtype = Dtype::from_code(header[8])?;
    let n = channels * order.npix() as usize;
    let mut payload = vec![0u8; n * dtype.size()];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format(format!("truncated HPXM payload: expected {} bytes", payload.len())))?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after HPXM payload".into()));
    }
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
        Dtype::F64 => payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
    };
    let map = SphereMap::new(order, channels, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((map, dtype))
}

pub fn write_hpxm(path: impl AsRef<Path>, m: &SphereMap, dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_hpxm_to(&mut w, m, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn read_hpxm(path: impl AsRef<Path>) -> Result<SphereMap> {
    Ok(read_hpxm_from(&mut BufReader::new(File::open(path)?))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::MapShape;

    fn sample() -> SphereMap {
        SphereMap::from_fn(MapShape::full(Order::new(3).unwrap(), 3), |c, p| (p.index() as f64 * 0.1 + c as f64).sin())
    }

    #[test]
    fn f32_payload_length() {
        let mut buf = Vec::new();
        write_hpxm_to(&mut buf, &sample(), Dtype::F32).unwrap();
        assert_eq!(buf.len(), 9 + 4 * 3 * 768);
        assert_eq!(&buf[..9], b"HPXM\x01\x03\x03\x00\x00");
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for dtype in [Dtype::F32, Dtype::F64] {
            let mut a = Vec::new();
            write_hpxm_to(&mut a, &sample(), dtype).unwrap();
            let (m, d) = read_hpxm_from(&mut a.as_slice()).unwrap();
            assert_eq!(d, dtype);
            let mut b = Vec::new();
            write_hpxm_to(&mut b, &m, dtype).unwrap();
            assert_eq!(a, b);
        }
        let mut a = Vec::new();
        write_hpxm_to(&mut a, &sample(), Dtype::F64).unwrap();
        assert_eq!(read_hpxm_from(&mut a.as_slice()).unwrap().0, sample());
    }

    #[test]
    fn malformed_inputs() {
        let mut good = Vec::new();
        write_hpxm_to(&mut good, &sample(), Dtype::F32).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_hpxm_from(&mut bad_magic.as_slice()), Err(Error::Format(_))));
        let mut bad_dtype = good.clone();
        bad_dtype[8] = 7;
        assert!(matches!(read_hpxm_from(&mut bad_dtype.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_hpxm_from(&mut &good[..good.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(read_hpxm_from(&mut &good[..5]), Err(Error::Format(_))));
        let mut nan = good.clone();
        nan[9..13].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_hpxm_from(&mut nan.as_slice()), Err(Error::Format(_))));
    }
}
