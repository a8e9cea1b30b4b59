//! Binary persistence for spectral operators: magic "SPOP", little-endian
//! u64 point count, then f64 arrays (eigenvalues, row-major eigenvectors,
//! measure weights), with a JSON metadata sidecar next to the payload.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::geometry::{MetricMeasureSpace, PointCloudFile};

use super::{OperatorMeta, SpectralOperator};

const MAGIC: &[u8; 4] = b"SPOP";

#[derive(serde::Serialize, serde::Deserialize)]
struct Sidecar {
    meta: OperatorMeta,
    space: PointCloudFile,
}

pub fn save_spop(op: &SpectralOperator, path: &Path) -> Result<()> {
    let n = op.len();
    let mut buf = Vec::with_capacity(4 + 8 + 8 * (n + n * n + n));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for &v in &op.eigenvalues {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for r in 0..n {
        for c in 0..n {
            buf.extend_from_slice(&op.eigenvectors[(r, c)].to_le_bytes());
        }
    }
    for i in 0..n {
        buf.extend_from_slice(&op.space.mu(i).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    let sidecar = Sidecar {
        meta: op.meta.clone(),
        space: op.space.to_file(),
    };
    let meta_path = path.with_extension("meta.json");
    std::fs::write(meta_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_spop(path: &Path) -> Result<SpectralOperator> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 12 || &buf[0..4] != MAGIC {
        return Err(CoreError::Serialization("bad SPOP magic".into()));
    }
    let n = u64::from_le_bytes(buf[4..12].try_into().unwrap()) as usize;
    let need = 12 + 8 * (n + n * n + n);
    if buf.len() != need {
        return Err(CoreError::Serialization(format!(
            "SPOP payload has {} bytes, expected {need}",
            buf.len()
        )));
    }
    let mut off = 12usize;
    let mut read_f64 = |buf: &[u8], off: &mut usize| -> f64 {
        let v = f64::from_le_bytes(buf[*off..*off + 8].try_into().unwrap());
        *off += 8;
        v
    };
    let eigenvalues: Vec<f64> = (0..n).map(|_| read_f64(&buf, &mut off)).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            eigenvectors[(r, c)] = read_f64(&buf, &mut off);
        }
    }
    let mu: Vec<f64> = (0..n).map(|_| read_f64(&buf, &mut off)).collect();
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(
        path.with_extension("meta.json"),
    )?)?;
    let space = MetricMeasureSpace::from_file(&sidecar.space)?;
    if space.len() != n || (0..n).any(|i| space.mu(i) != mu[i]) {
        return Err(CoreError::Serialization(
            "sidecar space does not match payload".into(),
        ));
    }
    Ok(SpectralOperator {
        space: std::sync::Arc::new(space),
        eigenvalues,
        eigenvectors,
        meta: sidecar.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{
        assemble_divergence_form, BoundaryCondition, CoefficientField, GridSpec,
    };

    #[test]
    fn spop_round_trip() {
        let g = GridSpec::line(16, 0.5, BoundaryCondition::Periodic);
        let a = assemble_divergence_form(&g, &CoefficientField::Identity, 1.0).unwrap();
        let op = SpectralOperator::from_form_matrix(
            a.space,
            &a.form,
            OperatorMeta {
                kind: "laplacian".into(),
                bc: "periodic".into(),
                h: 0.5,
                dim: 1,
                clamped_eigenvalues: 0,
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("op.spop");
        save_spop(&op, &path).unwrap();
        let back = load_spop(&path).unwrap();
        assert_eq!(op.eigenvalues, back.eigenvalues);
        assert_eq!(op.eigenvectors, back.eigenvectors);
        assert_eq!(op.meta.kind, back.meta.kind);
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.spop");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(load_spop(&path).is_err());
    }
}
