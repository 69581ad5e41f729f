//! Binary checkpoint files for scorer heads and projection matrices.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic   "LITEHEAD"            8 bytes
//! version u32 = 1
//! kind    u8                    1 = separable, 2 = flattened, 3 = kernel, 4 = projection
//! dims    u32 each, per kind:
//!           separable: l1, l2, m1, m2, then eps as f64
//!           flattened: hidden, input
//!           kernel:    k
//!           projection: rows, cols
//! tensors f64 row-major, in declaration order
//! ```
//!
//! Declaration order matches the parameter structs: separable writes
//! `w1, b1, w2, b2, w3, b3, w4, b4, w`; flattened writes `w, b, a`;
//! kernel writes `mus, sigmas, w`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{FlatLiteParams, SepLiteParams};
use crate::scorers::{HeadParams, KnrmParams};
use crate::tensor::Matrix;

pub const HEAD_MAGIC: &[u8; 8] = b"LITEHEAD";
pub const HEAD_VERSION: u32 = 1;

const KIND_SEP: u8 = 1;
const KIND_FLAT: u8 = 2;
const KIND_KNRM: u8 = 3;
const KIND_PROJECTION: u8 = 4;

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.inner.write_all(&[v])
    }

    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    fn f64_slice(&mut self, vs: &[f64]) -> std::io::Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn u8(&mut self) -> std::io::Result<u8> {
        let mut buf = [0u8; 1];
        self.inner.read_exact(&mut buf)?;
        Ok(buf[0])
    }

    fn f64(&mut self) -> std::io::Result<f64> {
        let mut buf = [0u8; 8];
        self.inner.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }

    fn f64_vec(&mut self, n: usize) -> std::io::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

fn dim(v: u32, what: &str) -> Result<usize> {
    if v == 0 {
        return Err(Error::Format(format!(
            "checkpoint {what} dimension is zero"
        )));
    }
    Ok(v as usize)
}

/// Writes a head checkpoint.
pub fn save_head(path: impl AsRef<Path>, head: &HeadParams) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer {
        inner: BufWriter::new(file),
    };
    let io = |e| Error::io(path, e);
    w.inner.write_all(HEAD_MAGIC).map_err(io)?;
    w.u32(HEAD_VERSION).map_err(io)?;
    match head {
        HeadParams::Sep(p) => {
            let (l1, l2, m1, m2) = p.dims();
            w.u8(KIND_SEP).map_err(io)?;
            for d in [l1, l2, m1, m2] {
                w.u32(d as u32).map_err(io)?;
            }
            w.f64(p.eps).map_err(io)?;
            w.f64_slice(p.w1.data()).map_err(io)?;
            w.f64_slice(&p.b1).map_err(io)?;
            w.f64_slice(p.w2.data()).map_err(io)?;
            w.f64_slice(&p.b2).map_err(io)?;
            w.f64_slice(p.w3.data()).map_err(io)?;
            w.f64_slice(&p.b3).map_err(io)?;
            w.f64_slice(p.w4.data()).map_err(io)?;
            w.f64_slice(&p.b4).map_err(io)?;
            w.f64_slice(&p.w).map_err(io)?;
        }
        HeadParams::Flat(p) => {
            w.u8(KIND_FLAT).map_err(io)?;
            w.u32(p.hidden() as u32).map_err(io)?;
            w.u32(p.input_len() as u32).map_err(io)?;
            w.f64_slice(p.w.data()).map_err(io)?;
            w.f64_slice(&p.b).map_err(io)?;
            w.f64_slice(&p.a).map_err(io)?;
        }
        HeadParams::Knrm(p) => {
            w.u8(KIND_KNRM).map_err(io)?;
            w.u32(p.kernels() as u32).map_err(io)?;
            w.f64_slice(&p.mus).map_err(io)?;
            w.f64_slice(&p.sigmas).map_err(io)?;
            w.f64_slice(&p.w).map_err(io)?;
        }
    }
    w.inner.flush().map_err(io)
}

/// Writes a bare projection matrix in the head checkpoint format.
pub fn save_projection(path: impl AsRef<Path>, projection: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer {
        inner: BufWriter::new(file),
    };
    let io = |e| Error::io(path, e);
    w.inner.write_all(HEAD_MAGIC).map_err(io)?;
    w.u32(HEAD_VERSION).map_err(io)?;
    w.u8(KIND_PROJECTION).map_err(io)?;
    w.u32(projection.rows() as u32).map_err(io)?;
    w.u32(projection.cols() as u32).map_err(io)?;
    w.f64_slice(projection.data()).map_err(io)?;
    w.inner.flush().map_err(io)
}

// Transient decode result; the size skew between variants is irrelevant.
#[allow(clippy::large_enum_variant)]
enum Payload {
    Head(HeadParams),
    Projection(Matrix),
}

fn load(path: &Path) -> Result<Payload> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));

    let mut magic = [0u8; 8];
    r.inner
        .read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != HEAD_MAGIC {
        return Err(bad("bad magic, not a head checkpoint".into()));
    }
    let version = r.u32().map_err(|e| Error::io(path, e))?;
    if version != HEAD_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = r.u8().map_err(|e| Error::io(path, e))?;
    let truncated = |_| bad("truncated checkpoint".into());

    let payload = match kind {
        KIND_SEP => {
            let l1 = dim(r.u32().map_err(truncated)?, "l1")?;
            let l2 = dim(r.u32().map_err(truncated)?, "l2")?;
            let m1 = dim(r.u32().map_err(truncated)?, "m1")?;
            let m2 = dim(r.u32().map_err(truncated)?, "m2")?;
            let eps = r.f64().map_err(truncated)?;
            let w1 = Matrix::new(m2, l2, r.f64_vec(m2 * l2).map_err(truncated)?)?;
            let b1 = r.f64_vec(m2).map_err(truncated)?;
            let w2 = Matrix::new(l2, m2, r.f64_vec(l2 * m2).map_err(truncated)?)?;
            let b2 = r.f64_vec(l2).map_err(truncated)?;
            let w3 = Matrix::new(m1, l1, r.f64_vec(m1 * l1).map_err(truncated)?)?;
            let b3 = r.f64_vec(m1).map_err(truncated)?;
            let w4 = Matrix::new(l1, m1, r.f64_vec(l1 * m1).map_err(truncated)?)?;
            let b4 = r.f64_vec(l1).map_err(truncated)?;
            let w = r.f64_vec(l1 * l2).map_err(truncated)?;
            Payload::Head(HeadParams::Sep(SepLiteParams {
                w1,
                b1,
                w2,
                b2,
                w3,
                b3,
                w4,
                b4,
                w,
                eps,
            }))
        }
        KIND_FLAT => {
            let hidden = dim(r.u32().map_err(truncated)?, "hidden")?;
            let input = dim(r.u32().map_err(truncated)?, "input")?;
            let w = Matrix::new(hidden, input, r.f64_vec(hidden * input).map_err(truncated)?)?;
            let b = r.f64_vec(hidden).map_err(truncated)?;
            let a = r.f64_vec(hidden).map_err(truncated)?;
            Payload::Head(HeadParams::Flat(FlatLiteParams { w, b, a }))
        }
        KIND_KNRM => {
            let k = dim(r.u32().map_err(truncated)?, "kernel count")?;
            let mus = r.f64_vec(k).map_err(truncated)?;
            let sigmas = r.f64_vec(k).map_err(truncated)?;
            let w = r.f64_vec(k).map_err(truncated)?;
            let params = KnrmParams { mus, sigmas, w };
            params.validate()?;
            Payload::Head(HeadParams::Knrm(params))
        }
        KIND_PROJECTION => {
            let rows = dim(r.u32().map_err(truncated)?, "rows")?;
            let cols = dim(r.u32().map_err(truncated)?, "cols")?;
            let m = Matrix::new(rows, cols, r.f64_vec(rows * cols).map_err(truncated)?)?;
            Payload::Projection(m)
        }
        other => return Err(bad(format!("unknown checkpoint kind {other}"))),
    };

    // No trailing bytes allowed.
    let mut probe = [0u8; 1];
    match r.inner.read(&mut probe) {
        Ok(0) => Ok(payload),
        Ok(_) => Err(bad("trailing bytes after checkpoint payload".into())),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Reads a head checkpoint written by [`save_head`].
pub fn load_head(path: impl AsRef<Path>) -> Result<HeadParams> {
    match load(path.as_ref())? {
        Payload::Head(h) => Ok(h),
        Payload::Projection(_) => Err(Error::Format(format!(
            "{}: checkpoint holds a projection matrix, not a scorer head",
            path.as_ref().display()
        ))),
    }
}

/// Reads a projection matrix written by [`save_projection`].
pub fn load_projection(path: impl AsRef<Path>) -> Result<Matrix> {
    match load(path.as_ref())? {
        Payload::Projection(m) => Ok(m),
        Payload::Head(_) => Err(Error::Format(format!(
            "{}: checkpoint holds a scorer head, not a projection matrix",
            path.as_ref().display()
        ))),
    }
}
