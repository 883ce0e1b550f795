use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::optim::{Adam, AdamConfig};
use super::TrainError;
use crate::autodiff::Tensor;
use crate::binio::{expect_magic, get_f64, get_f64s, get_str, get_u32, get_u64, put_f64, put_f64s, put_str, put_u32, put_u64};
use crate::model::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LAMACK01";

/// Complete resumable state of a run.
///
/// ```text
/// magic "LAMACK01" | str config_hash | u64 seed | u64 iteration
/// u32 n_params, then per parameter: str name | u32 rank | u64 × rank dims | f64s values
/// adam: f64 beta1 | f64 beta2 | f64 eps | u64 t | per parameter: f64s m | f64s v
/// ```
///
/// Integers and floats are little-endian; `str` is a u32 byte length
/// followed by UTF-8 and `f64s` a u64 count followed by the values. Batch
/// order and smoothness noise are pure functions of `(seed, epoch)` and
/// `(seed, iteration)`, so the seed and counter stand in for RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub seed: u64,
    pub iteration: u64,
    pub params: ParamStore,
    pub adam: Adam,
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<(), TrainError> {
        let io = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.encode(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, TrainError> {
        let io = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        Self::decode(&mut r).map_err(io)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out).expect("writing to memory");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> io::Result<Self> {
        Self::decode(&mut bytes)
    }

    fn encode(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        put_str(w, &self.config_hash)?;
        put_u64(w, self.seed)?;
        put_u64(w, self.iteration)?;
        put_u32(w, self.params.len() as u32)?;
        for (name, t) in self.params.iter() {
            put_str(w, name)?;
            put_u32(w, t.rank() as u32)?;
            for &d in t.shape() {
                put_u64(w, d as u64)?;
            }
            put_f64s(w, t.data())?;
        }
        let a = &self.adam;
        put_f64(w, a.config.beta1)?;
        put_f64(w, a.config.beta2)?;
        put_f64(w, a.config.eps)?;
        put_u64(w, a.t)?;
        for (m, v) in a.m.iter().zip(&a.v) {
            put_f64s(w, m.data())?;
            put_f64s(w, v.data())?;
        }
        Ok(())
    }

    fn decode(r: &mut impl Read) -> io::Result<Self> {
        let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
        expect_magic(r, CHECKPOINT_MAGIC)?;
        let config_hash = get_str(r)?;
        let seed = get_u64(r)?;
        let iteration = get_u64(r)?;
        let n = get_u32(r)? as usize;
        let mut params = ParamStore::new();
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let name = get_str(r)?;
            let rank = get_u32(r)? as usize;
            let shape = (0..rank)
                .map(|_| get_u64(r).map(|d| d as usize))
                .collect::<io::Result<Vec<_>>>()?;
            let data = get_f64s(r)?;
            let t = Tensor::new(shape.clone(), data).map_err(|e| bad(format!("{name}: {e}")))?;
            shapes.push(shape);
            params.add(name, t);
        }
        let config = AdamConfig {
            beta1: get_f64(r)?,
            beta2: get_f64(r)?,
            eps: get_f64(r)?,
        };
        let t = get_u64(r)?;
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for shape in &shapes {
            for dst in [&mut m, &mut v] {
                let data = get_f64s(r)?;
                dst.push(Tensor::new(shape.clone(), data).map_err(|e| bad(format!("optimizer moment: {e}")))?);
            }
        }
        Ok(Self {
            config_hash,
            seed,
            iteration,
            params,
            adam: Adam { config, m, v, t },
        })
    }
}
