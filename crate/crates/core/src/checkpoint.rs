//! Binary estimator checkpoints.
//!
//! Layout: the 8-byte magic `FBTCKPT1`, a little-endian `u64` header length,
//! a JSON header, then little-endian `f64` arrays: the mean (`n`), the
//! expansion point (`n`) and the covariance factor (`n × m`, column-major).
//! Floats are stored bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bayes::{DropController, Estimator, EstimatorConfig, GaussianState};
use crate::error::{FbtError, Result};
use crate::gateset::{GateSetDocument, NoisyGateSet};
use crate::linearize::ResidualRegistry;

pub const MAGIC: &[u8; 8] = b"FBTCKPT1";
pub const CHECKPOINT_SCHEMA: &str = "fbt.checkpoint.v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    base: GateSetDocument,
    config: EstimatorConfig,
    drop: DropController,
    since_relinearize: u64,
    last_group: Option<u64>,
    update_count: u64,
    approx_error_active: bool,
    provenance: String,
    n: usize,
    m: usize,
    /// Caller metadata, such as session settings.
    #[serde(default)]
    extra: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub estimator: Estimator,
    pub extra: serde_json::Value,
}

fn put_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|_| FbtError::Format("checkpoint truncated".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_checkpoint<W: Write>(mut w: W, est: &Estimator, extra: serde_json::Value) -> Result<()> {
    let state = est.state();
    let header = Header {
        schema: CHECKPOINT_SCHEMA.into(),
        base: est.base().to_document(),
        config: est.config().clone(),
        drop: est.drop_controller().clone(),
        since_relinearize: est.since_relinearize(),
        last_group: est.last_group(),
        update_count: state.update_count,
        approx_error_active: state.approx_error_active,
        provenance: state.provenance.clone(),
        n: state.dim(),
        m: state.factor().ncols(),
        extra,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    put_f64s(&mut w, state.mean().as_slice())?;
    put_f64s(&mut w, est.lin_point().as_slice())?;
    put_f64s(&mut w, state.factor().as_slice())?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| FbtError::Format("checkpoint truncated".into()))?;
    if &magic != MAGIC {
        return Err(FbtError::Format("not a checkpoint file (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| FbtError::Format("checkpoint truncated".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(FbtError::Format(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| FbtError::Format("checkpoint truncated".into()))?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.schema != CHECKPOINT_SCHEMA {
        return Err(FbtError::Format(format!("unsupported schema `{}`", header.schema)));
    }
    let base = NoisyGateSet::from_document(&header.base)?;
    let registry = ResidualRegistry::for_gateset(&base);
    if registry.len() != header.n {
        return Err(FbtError::RegistryMismatch(format!(
            "checkpoint has {} parameters, gate set needs {}",
            header.n,
            registry.len()
        )));
    }
    let mean = DVector::from_vec(get_f64s(&mut r, header.n)?);
    let lin_point = DVector::from_vec(get_f64s(&mut r, header.n)?);
    let factor = DMatrix::from_vec(header.n, header.m, get_f64s(&mut r, header.n * header.m)?);
    let mut state = GaussianState::from_factor(registry, mean, factor)?;
    state.update_count = header.update_count;
    state.approx_error_active = header.approx_error_active;
    state.provenance = header.provenance;
    let estimator = Estimator::from_parts(
        &base,
        state,
        lin_point,
        header.since_relinearize,
        header.last_group,
        header.drop,
        header.config,
    )?;
    Ok(Checkpoint {
        estimator,
        extra: header.extra,
    })
}

/// Writes atomically through a temporary file in the same directory.
pub fn save(path: &Path, est: &Estimator, extra: serde_json::Value) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = fs::File::create(&tmp)?;
        write_checkpoint(std::io::BufWriter::new(file), est, extra)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::{blind_cold_boot, BlindColdConfig};
    use crate::gateset::{ideal_two_qubit_gateset, TwoQubitGate};
    use crate::records::ObservationRecord;

    fn estimator() -> Estimator {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let state = blind_cold_boot(&gs, &BlindColdConfig::default()).unwrap();
        let config = EstimatorConfig {
            approx_error: false,
            relinearize_every: 3,
            ..EstimatorConfig::default()
        };
        Estimator::new(&gs, state, config).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut est = estimator();
        for (k, s) in ["x1 x2", "cz x1", "x2 x2 z1", "x1", "cz cz x2"].iter().enumerate() {
            let mut r = ObservationRecord::from_counts(s.parse().unwrap(), 30 + k as u32, 100);
            r.group = Some(k as u64 / 2);
            est.update(&r).unwrap();
        }
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &est, serde_json::json!({"id": "abc"})).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.extra["id"], "abc");
        let b = &back.estimator;
        assert_eq!(b.state(), est.state());
        assert_eq!(b.lin_point(), est.lin_point());
        assert_eq!(b.since_relinearize(), est.since_relinearize());
        assert_eq!(b.last_group(), est.last_group());
        assert_eq!(b.drop_controller(), est.drop_controller());
        assert_eq!(b.config(), est.config());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_checkpoint(&b"NOTACKPT"[..]), Err(FbtError::Format(_))));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &estimator(), serde_json::Value::Null).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(buf.as_slice()), Err(FbtError::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let est = estimator();
        save(&path, &est, serde_json::Value::Null).unwrap();
        assert_eq!(load(&path).unwrap().estimator.state(), est.state());
    }
}
