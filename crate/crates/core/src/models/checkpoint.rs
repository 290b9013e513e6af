//! Binary checkpoint format. All integers and reals are little-endian.
//!
//! ```text
//! magic            8 bytes  "SHRTFUSE"
//! format version   u32
//! family           u8       0 = cnn, 1 = lstm
//! fusion           u8       0 none, 1 shortfuse, 2 latefuse, 3 replicate
//! num_conv_layers  u32
//! filters          u32
//! kernel_width     u32
//! pool_window      u32
//! hidden_size      u32
//! dropout          f64
//! covariate_drop   f64
//! num_classes      u32
//! hybrid_all       u8
//! n, t, d          u32 x 3
//! seed             u64
//! has_norm         u8       followed by d means and d stds (f64) when 1
//! param_count      u32
//! per parameter:   rank u32, dims u32 x rank, values f64 x product(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::Model;
use super::spec::{ArchitectureSpec, Family, FusionMode};
use crate::error::{Error, Result};
use crate::layers::CovariateStats;
use crate::numeric::Tensor;

pub const MAGIC: [u8; 8] = *b"SHRTFUSE";
pub const FORMAT_VERSION: u32 = 1;

/// A model together with the covariate statistics it was trained under.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub normalization: Option<CovariateStats>,
}

fn family_code(f: Family) -> u8 {
    match f {
        Family::Cnn => 0,
        Family::Lstm => 1,
    }
}

fn fusion_code(f: FusionMode) -> u8 {
    match f {
        FusionMode::None => 0,
        FusionMode::ShortFuse => 1,
        FusionMode::LateFuse => 2,
        FusionMode::Replicate => 3,
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("checkpoint", e)
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Invariant(format!("{what} does not fit in u32")))
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &Model, normalization: Option<&CovariateStats>) -> Result<()> {
    let spec = model.spec();
    let (n, t, d) = model.dims();
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(family_code(spec.family));
    buf.push(fusion_code(spec.fusion));
    for v in [
        spec.num_conv_layers,
        spec.filters,
        spec.kernel_width,
        spec.pool_window,
        spec.hidden_size,
    ] {
        buf.extend_from_slice(&u32_of(v, "architecture field")?.to_le_bytes());
    }
    buf.extend_from_slice(&spec.dropout.to_le_bytes());
    buf.extend_from_slice(&spec.covariate_dropout.to_le_bytes());
    buf.extend_from_slice(&u32_of(spec.num_classes, "num_classes")?.to_le_bytes());
    buf.push(spec.hybrid_all_layers as u8);
    for v in [n, t, d] {
        buf.extend_from_slice(&u32_of(v, "dimension")?.to_le_bytes());
    }
    buf.extend_from_slice(&model.seed().to_le_bytes());
    match normalization {
        Some(st) => {
            if st.means.len() != d || st.stds.len() != d {
                return Err(Error::Invariant("normalization length differs from d".into()));
            }
            buf.push(1);
            for v in st.means.iter().chain(&st.stds) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => buf.push(0),
    }
    buf.extend_from_slice(&u32_of(model.params().len(), "parameter count")?.to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&u32_of(p.shape().len(), "rank")?.to_le_bytes());
        for &dim in p.shape() {
            buf.extend_from_slice(&u32_of(dim, "dimension")?.to_le_bytes());
        }
        for v in p.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| Error::data(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut c = Cursor { r };
    if c.bytes::<8>()? != MAGIC {
        return Err(Error::data("not a checkpoint file (bad magic)"));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::data(format!("unsupported checkpoint version {version}")));
    }
    let family = match c.u8()? {
        0 => Family::Cnn,
        1 => Family::Lstm,
        x => return Err(Error::data(format!("unknown family code {x}"))),
    };
    let fusion = match c.u8()? {
        0 => FusionMode::None,
        1 => FusionMode::ShortFuse,
        2 => FusionMode::LateFuse,
        3 => FusionMode::Replicate,
        x => return Err(Error::data(format!("unknown fusion code {x}"))),
    };
    let spec = ArchitectureSpec {
        family,
        fusion,
        num_conv_layers: c.usize()?,
        filters: c.usize()?,
        kernel_width: c.usize()?,
        pool_window: c.usize()?,
        hidden_size: c.usize()?,
        dropout: c.f64()?,
        covariate_dropout: c.f64()?,
        num_classes: c.usize()?,
        hybrid_all_layers: c.u8()? != 0,
    };
    let (n, t, d) = (c.usize()?, c.usize()?, c.usize()?);
    let seed = c.u64()?;
    let normalization = match c.u8()? {
        0 => None,
        1 => {
            let means = (0..d).map(|_| c.f64()).collect::<Result<_>>()?;
            let stds = (0..d).map(|_| c.f64()).collect::<Result<_>>()?;
            Some(CovariateStats { means, stds })
        }
        x => return Err(Error::data(format!("bad normalization flag {x}"))),
    };
    let mut model = Model::build(&spec, n, t, d, seed)?;
    let count = c.usize()?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = c.usize()?;
        if rank > 4 {
            return Err(Error::data(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| c.usize()).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let values = (0..len).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        params.push(Tensor::new(shape, values)?);
    }
    model
        .set_params(params)
        .map_err(|_| Error::data("checkpoint parameters do not match its architecture"))?;
    Ok(Checkpoint { model, normalization })
}

pub fn save_checkpoint(path: &Path, model: &Model, normalization: Option<&CovariateStats>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, model, normalization)?;
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_checkpoint(BufReader::new(f))
}
