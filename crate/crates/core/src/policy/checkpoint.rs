//! Checkpoint format: a JSON manifest naming every tensor with its shape,
//! plus one little-endian f32 blob per tensor. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::net::PolicyNet;

pub const MANIFEST_NAME: &str = "manifest.json";
const FORMAT: &str = "acro-checkpoint-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

/// Provenance carried alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Input ablation the policy was trained under.
    pub ablation: String,
    pub maneuver: String,
    pub seed: u64,
    /// Training rounds completed.
    pub rounds: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    tensors: Vec<TensorEntry>,
    meta: CheckpointMeta,
}

fn tensor_shapes(net: &PolicyNet<f32>) -> Vec<(String, Vec<usize>)> {
    let mut shapes = Vec::new();
    for (i, l) in net.pointnet.iter().enumerate() {
        shapes.push((format!("pointnet.{i}.w"), vec![l.out_dim, l.in_dim]));
        shapes.push((format!("pointnet.{i}.b"), vec![l.out_dim]));
    }
    for (name, tcn) in [
        ("visual", &net.visual),
        ("inertial", &net.inertial),
        ("reference", &net.reference),
    ] {
        for (i, c) in tcn.convs.iter().enumerate() {
            shapes.push((format!("{name}.conv{i}.w"), vec![2, c.out_dim, c.in_dim]));
            shapes.push((format!("{name}.conv{i}.b"), vec![c.out_dim]));
        }
        shapes.push((format!("{name}.fc.w"), vec![tcn.fc.out_dim, tcn.fc.in_dim]));
        shapes.push((format!("{name}.fc.b"), vec![tcn.fc.out_dim]));
    }
    for (i, l) in net.head.iter().enumerate() {
        shapes.push((format!("head.{i}.w"), vec![l.out_dim, l.in_dim]));
        shapes.push((format!("head.{i}.b"), vec![l.out_dim]));
    }
    shapes
}

/// Write the checkpoint into `dir` (created if needed).
pub fn save(dir: &Path, net: &PolicyNet<f32>, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    let shapes = tensor_shapes(net);
    let tensors = net.tensors();
    let mut entries = Vec::with_capacity(tensors.len());
    for ((name, data), (sname, shape)) in tensors.iter().zip(shapes) {
        debug_assert_eq!(name, &sname);
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let file = format!("{name}.bin");
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for v in data.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(&file), bytes)?;
        entries.push(TensorEntry { name: name.clone(), shape, file });
    }
    let manifest = Manifest { format: FORMAT.into(), tensors: entries, meta: meta.clone() };
    fs::write(dir.join(MANIFEST_NAME), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Load a checkpoint written by [`save`].
pub fn load(dir: &Path) -> Result<(PolicyNet<f32>, CheckpointMeta)> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    if manifest.format != FORMAT {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            reason: format!("unknown format '{}'", manifest.format),
        });
    }
    let mut net: PolicyNet<f32> = PolicyNet::init(0).zeros_like();
    let shapes = tensor_shapes(&net);
    if manifest.tensors.len() != shapes.len() {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            reason: format!("expected {} tensors, found {}", shapes.len(), manifest.tensors.len()),
        });
    }
    let mut tensors = net.tensors_mut();
    for (i, entry) in manifest.tensors.iter().enumerate() {
        let (name, data) = &mut tensors[i];
        if entry.name != *name || entry.shape != shapes[i].1 {
            return Err(Error::Format {
                path: manifest_path.display().to_string(),
                reason: format!("tensor {} mismatches expected {name}", entry.name),
            });
        }
        let bytes = fs::read(dir.join(&entry.file))?;
        if bytes.len() != data.len() * 4 {
            return Err(Error::Format {
                path: entry.file.clone(),
                reason: format!("expected {} bytes, found {}", data.len() * 4, bytes.len()),
            });
        }
        for (v, chunk) in data.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
    }
    drop(tensors);
    Ok((net, manifest.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bit_exact() {
        let dir = std::env::temp_dir().join(format!("acro-ckpt-{}", std::process::id()));
        let net: PolicyNet<f32> = PolicyNet::init(77);
        let meta = CheckpointMeta {
            ablation: "none".into(),
            maneuver: "power_loop".into(),
            seed: 42,
            rounds: 5,
        };
        save(&dir, &net, &meta).unwrap();
        let (loaded, meta2) = load(&dir).unwrap();
        assert_eq!(net, loaded);
        assert_eq!(meta, meta2);

        // Saving the loaded net reproduces identical bytes.
        let dir2 = dir.join("again");
        save(&dir2, &loaded, &meta2).unwrap();
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            if entry.path().is_dir() {
                continue;
            }
            let name = entry.file_name();
            let a = std::fs::read(entry.path()).unwrap();
            let b = std::fs::read(dir2.join(&name)).unwrap();
            assert_eq!(a, b, "file {name:?} differs");
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn corrupt_blob_rejected() {
        let dir = std::env::temp_dir().join(format!("acro-ckpt-bad-{}", std::process::id()));
        let net: PolicyNet<f32> = PolicyNet::init(1);
        save(&dir, &net, &CheckpointMeta::default()).unwrap();
        std::fs::write(dir.join("head.3.b.bin"), [0u8; 3]).unwrap();
        assert!(matches!(load(&dir), Err(Error::Format { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
