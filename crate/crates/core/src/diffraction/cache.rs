//! Binary PSF grid cache.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "VPLPSFGR"
//! version    u32      1
//! config     u32 length + UTF-8 JSON of the DiffractionConfig
//! source     u32 length + UTF-8 sample id
//! fov count  u32      128
//! channels   u32      3
//! size       u32      kernel side
//! 384 × { fov u32, channel u8, pitch f64, size² f64 weights row-major }
//! ```

use super::{DiffractionConfig, PsfGrid, PsfKernel};
use crate::{Channel, Error, Result, FOV_COUNT};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const PSF_CACHE_MAGIC: &[u8; 8] = b"VPLPSFGR";
pub const PSF_CACHE_VERSION: u32 = 1;

fn bad(detail: impl Into<String>) -> Error {
    Error::format("PSF cache", detail)
}

pub fn write_psf_grid<W: Write>(grid: &PsfGrid, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let io = |e: std::io::Error| Error::format("PSF cache", e.to_string());
    let config = serde_json::to_string(grid.config()).map_err(|e| bad(e.to_string()))?;
    w.write_all(PSF_CACHE_MAGIC).map_err(io)?;
    w.write_all(&PSF_CACHE_VERSION.to_le_bytes()).map_err(io)?;
    for text in [config.as_str(), grid.source()] {
        w.write_all(&(text.len() as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(text.as_bytes()).map_err(io)?;
    }
    for v in [FOV_COUNT as u32, 3, grid.kernel_size() as u32] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for k in grid.kernels() {
        w.write_all(&(k.fov_index() as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(&[k.channel().index() as u8]).map_err(io)?;
        w.write_all(&k.pitch().to_le_bytes()).map_err(io)?;
        for x in k.weights() {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Cursor<R: Read> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| bad(format!("truncated file: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 1 << 20 {
            return Err(bad(format!("string of {len} bytes")));
        }
        let mut buf = vec![0u8; len];
        self.r
            .read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated file: {e}")))?;
        String::from_utf8(buf).map_err(|e| bad(e.to_string()))
    }
}

pub fn read_psf_grid<R: Read>(input: R) -> Result<PsfGrid> {
    let mut c = Cursor {
        r: BufReader::new(input),
    };
    if &c.bytes::<8>()? != PSF_CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = c.u32()?;
    if version != PSF_CACHE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let config: DiffractionConfig =
        serde_json::from_str(&c.string()?).map_err(|e| bad(e.to_string()))?;
    let source = c.string()?;
    let (fovs, channels, size) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    if fovs != FOV_COUNT || channels != 3 || size % 2 == 0 || size > 4095 {
        return Err(bad(format!("layout {fovs}x{channels}, kernel {size}")));
    }
    let mut kernels = Vec::with_capacity(PsfGrid::SLOTS);
    for _ in 0..PsfGrid::SLOTS {
        let fov = c.u32()? as usize;
        let channel =
            Channel::from_index(c.bytes::<1>()?[0] as usize).ok_or_else(|| bad("channel tag"))?;
        let pitch = c.f64()?;
        let weights = (0..size * size)
            .map(|_| c.f64())
            .collect::<Result<Vec<_>>>()?;
        // weights are stored normalized; keep them bit-exact
        let k = PsfKernel::from_stored(size, weights, pitch)?.at_slot(fov, channel);
        kernels.push(k);
    }
    let mut trailing = [0u8; 1];
    if c.r.read(&mut trailing).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes"));
    }
    PsfGrid::new(source, config, kernels)
}

pub fn write_file(grid: &PsfGrid, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_psf_grid(grid, f)
}

pub fn read_file(path: &Path) -> Result<PsfGrid> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_psf_grid(f)
}
