//! Versioned checkpoint container: header with the config as canonical JSON,
//! followed by named 64-bit little-endian tensor blobs. Round-trips are
//! byte-exact.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::{Shape, Tensor};
use crate::config::FusionConfig;
use crate::error::{FusionError, Result};
use crate::params::{NormState, Param, ParamSet};

const MAGIC: &[u8; 8] = b"FUSECKPT";
const VERSION: u32 = 1;

const KIND_PARAM: u8 = 0;
const KIND_RUNNING_MEAN: u8 = 1;
const KIND_RUNNING_VAR: u8 = 2;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FusionError + '_ {
    move |source| FusionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_tensor(w: &mut impl Write, name: &str, kind: u8, shape: Shape, data: &[f64]) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&[kind])?;
    for d in [shape.batch, shape.channels, shape.height, shape.width] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes parameters, normalization state and the embedded config.
pub fn save_checkpoint(params: &ParamSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let inner = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&params.steps_trained().to_le_bytes())?;
        let config_json = params.config().to_canonical_json();
        w.write_all(&(config_json.len() as u64).to_le_bytes())?;
        w.write_all(config_json.as_bytes())?;

        let count = params.params().len() + 2 * params.norm_states().len();
        w.write_all(&(count as u32).to_le_bytes())?;
        for p in params.params() {
            write_tensor(w, &p.name, KIND_PARAM, p.tensor.shape(), p.tensor.data())?;
        }
        for (name, state) in params.norm_states() {
            let c = state.running_mean.len();
            let shape = Shape::new(1, c, 1, 1);
            write_tensor(
                w,
                &format!("{}.running_mean", name),
                KIND_RUNNING_MEAN,
                shape,
                &state.running_mean,
            )?;
            write_tensor(
                w,
                &format!("{}.running_var", name),
                KIND_RUNNING_VAR,
                shape,
                &state.running_var,
            )?;
        }
        w.flush()
    };
    inner(&mut w).map_err(io_err(path))
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| FusionError::CorruptCheckpoint("unexpected end of file".into()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

/// Loads a checkpoint, validating the version, the embedded config, and
/// every tensor shape against that config.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamSet, FusionConfig)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };

    if r.bytes(8)?.as_slice() != MAGIC {
        return Err(FusionError::CorruptCheckpoint(
            "bad magic; not a checkpoint file".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FusionError::CheckpointVersion {
            found: version,
            supported: VERSION,
        });
    }
    let steps_trained = r.u64()?;
    let config_len = r.u64()? as usize;
    if config_len > 1 << 20 {
        return Err(FusionError::CorruptCheckpoint(format!(
            "config block of {} bytes is implausible",
            config_len
        )));
    }
    let config_json = String::from_utf8(r.bytes(config_len)?)
        .map_err(|_| FusionError::CorruptCheckpoint("config is not UTF-8".into()))?;
    let config: FusionConfig = serde_json::from_str(&config_json)
        .map_err(|e| FusionError::CorruptCheckpoint(format!("config does not parse: {}", e)))?;
    config.validate()?;

    let count = r.u32()? as usize;
    if count > 1 << 16 {
        return Err(FusionError::CorruptCheckpoint(format!(
            "tensor count {} is implausible",
            count
        )));
    }
    let mut params: Vec<Param> = Vec::new();
    let mut means: Vec<(String, Vec<f64>)> = Vec::new();
    let mut vars: Vec<(String, Vec<f64>)> = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        if name_len > 1 << 10 {
            return Err(FusionError::CorruptCheckpoint(format!(
                "tensor name of {} bytes is implausible",
                name_len
            )));
        }
        let name = String::from_utf8(r.bytes(name_len)?)
            .map_err(|_| FusionError::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
        let kind = r.bytes(1)?[0];
        let dims: Vec<u64> = (0..4).map(|_| r.u64()).collect::<Result<_>>()?;
        let shape = Shape::new(
            dims[0] as usize,
            dims[1] as usize,
            dims[2] as usize,
            dims[3] as usize,
        );
        if shape.numel() > 1 << 28 {
            return Err(FusionError::CorruptCheckpoint(format!(
                "tensor {} claims {} elements",
                name,
                shape.numel()
            )));
        }
        let raw = r.bytes(shape.numel() * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        match kind {
            KIND_PARAM => params.push(Param {
                name,
                tensor: Tensor::new(shape, data)?,
            }),
            KIND_RUNNING_MEAN => means.push((name, data)),
            KIND_RUNNING_VAR => vars.push((name, data)),
            other => {
                return Err(FusionError::CorruptCheckpoint(format!(
                    "unknown tensor kind {}",
                    other
                )))
            }
        }
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(io_err(path))? != 0 {
        return Err(FusionError::CorruptCheckpoint(
            "trailing bytes after last tensor".into(),
        ));
    }

    if means.len() != vars.len() {
        return Err(FusionError::CorruptCheckpoint(format!(
            "{} running means but {} running vars",
            means.len(),
            vars.len()
        )));
    }
    let mut norm_states = Vec::with_capacity(means.len());
    for ((mname, mean), (vname, var)) in means.into_iter().zip(vars) {
        let base = mname
            .strip_suffix(".running_mean")
            .ok_or_else(|| FusionError::CorruptCheckpoint(format!("bad state name {}", mname)))?;
        if vname != format!("{}.running_var", base) || mean.len() != var.len() {
            return Err(FusionError::CorruptCheckpoint(format!(
                "norm state {} is inconsistent",
                base
            )));
        }
        norm_states.push((
            base.to_string(),
            NormState {
                running_mean: mean,
                running_var: var,
            },
        ));
    }

    let set = ParamSet::from_parts(config.clone(), params, norm_states, steps_trained)?;
    Ok((set, config))
}
