//! Migration of 2D checkpoints onto the 3D model.
//!
//! Spatial convolution kernels (stem, downsample, depthwise, decoder fuse)
//! are inflated along the new depth axis with D equal to the layer's 3D
//! kernel extent; pointwise 1×1 kernels gain a singleton depth axis with the
//! data copied verbatim; norm affine vectors, biases and dense head weights
//! are copied bitwise.

use super::checkpoint::{Checkpoint, META_PREFIX};
use super::config::ModelConfig;
use super::convnext::{parameter_specs, ParamKind};
use crate::error::{Error, Result};
use crate::inflate::{inflate, InflationMode, InflationSpec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MigrationAction {
    Inflated { depth: usize },
    Reshaped,
    Copied,
}

/// Per-layer record of what the import did, with L2 norms before and after.
#[derive(Debug, Clone)]
pub struct LayerMigration {
    pub name: String,
    pub action: MigrationAction,
    pub norm_2d: f64,
    pub norm_3d: f64,
}

fn migration_err(name: &str, reason: impl Into<String>) -> Error {
    Error::Migration { name: name.to_string(), reason: reason.into() }
}

/// Map a 2D checkpoint onto the 3D parameter table of `config`. Every model
/// parameter must be covered by a 2D entry of the matching name; unmapped or
/// mis-shaped entries fail with the offending name.
pub fn import_2d_checkpoint(
    ckpt2d: &Checkpoint,
    mode: InflationMode,
    config: &ModelConfig,
) -> Result<(Checkpoint, Vec<LayerMigration>)> {
    config.validate()?;
    let specs = parameter_specs(config);
    let mut out = Checkpoint::default();
    // metadata describes the migrated (3D) model
    {
        let probe = crate::model::Model::<f32>::build(config.clone(), 0)?;
        let meta = probe.save_checkpoint();
        for e in meta.entries.iter().filter(|e| e.name.starts_with(META_PREFIX)) {
            out.push(e.name.clone(), e.dims.clone(), e.data.clone())?;
        }
    }
    let mut report = Vec::with_capacity(specs.len());
    let mut used: Vec<&str> = Vec::with_capacity(specs.len());
    for spec in &specs {
        let entry = ckpt2d
            .get(&spec.name)
            .ok_or_else(|| migration_err(&spec.name, "missing from the 2D checkpoint"))?;
        used.push(&spec.name);
        let (dims, data, action) = match spec.kind {
            ParamKind::SpatialConv { depth } => {
                let want2d = &spec.dims[..4];
                if entry.dims != want2d {
                    return Err(migration_err(
                        &spec.name,
                        format!("2D dims {:?} do not match expected {:?}", entry.dims, want2d),
                    ));
                }
                let k2 = Tensor::<f32>::from_vec(entry.dims.clone(), entry.data.clone())?;
                let k3 = inflate(&k2, InflationSpec::new(mode, depth)?)?;
                if k3.dims() != spec.dims {
                    return Err(migration_err(&spec.name, "inflated dims mismatch"));
                }
                (spec.dims.clone(), k3.data().to_vec(), MigrationAction::Inflated { depth })
            }
            ParamKind::PointwiseConv => {
                let want2d = &spec.dims[..4];
                if entry.dims != want2d {
                    return Err(migration_err(
                        &spec.name,
                        format!("2D dims {:?} do not match expected {:?}", entry.dims, want2d),
                    ));
                }
                (spec.dims.clone(), entry.data.clone(), MigrationAction::Reshaped)
            }
            ParamKind::Vector | ParamKind::Linear => {
                if entry.dims != spec.dims {
                    return Err(migration_err(
                        &spec.name,
                        format!("dims {:?} do not match expected {:?}", entry.dims, spec.dims),
                    ));
                }
                (spec.dims.clone(), entry.data.clone(), MigrationAction::Copied)
            }
        };
        let norm_2d = entry.data.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        let norm_3d = data.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        report.push(LayerMigration { name: spec.name.clone(), action, norm_2d, norm_3d });
        out.push(spec.name.clone(), dims, data)?;
    }
    for entry in ckpt2d.param_entries() {
        if !used.iter().any(|n| *n == entry.name) {
            return Err(migration_err(
                &entry.name,
                "does not correspond to any model parameter",
            ));
        }
    }
    Ok((out, report))
}

/// Synthesize a 2D checkpoint shaped like the 2D counterpart of `config`
/// (random normal values). Stands in for externally pretrained 2D weights
/// in tests and demos.
pub fn reference_2d_checkpoint(config: &ModelConfig, seed: u64) -> Result<Checkpoint> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    config.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 0.05).expect("valid std");
    let mut ckpt = Checkpoint::default();
    for spec in parameter_specs(config) {
        let dims2d = match spec.kind {
            ParamKind::SpatialConv { .. } | ParamKind::PointwiseConv => spec.dims[..4].to_vec(),
            ParamKind::Vector | ParamKind::Linear => spec.dims.clone(),
        };
        let n: usize = dims2d.iter().product();
        let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        ckpt.push(spec.name, dims2d, data)?;
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inflate::inflate_1g;
    use crate::model::Model;

    #[test]
    fn imported_checkpoint_loads_into_model() {
        let cfg = ModelConfig::toy(2);
        let ckpt2d = reference_2d_checkpoint(&cfg, 1).unwrap();
        for mode in [InflationMode::Full, InflationMode::OneG, InflationMode::TwoG] {
            let (ckpt3d, report) = import_2d_checkpoint(&ckpt2d, mode, &cfg).unwrap();
            let mut model = Model::<f32>::build(cfg.clone(), 0).unwrap();
            model.load_checkpoint(&ckpt3d).unwrap();
            assert_eq!(report.len(), model.params().len());
        }
    }

    #[test]
    fn inflated_layers_preserve_norm_and_copies_are_bitwise() {
        let cfg = ModelConfig::toy(4);
        let ckpt2d = reference_2d_checkpoint(&cfg, 2).unwrap();
        let (ckpt3d, report) = import_2d_checkpoint(&ckpt2d, InflationMode::Full, &cfg).unwrap();
        for layer in &report {
            match layer.action {
                MigrationAction::Inflated { .. } => {
                    assert!(
                        (layer.norm_2d - layer.norm_3d).abs() < 1e-5 * layer.norm_2d.max(1.0),
                        "{}: {} vs {}",
                        layer.name,
                        layer.norm_2d,
                        layer.norm_3d
                    );
                }
                MigrationAction::Reshaped | MigrationAction::Copied => {
                    let a = &ckpt2d.get(&layer.name).unwrap().data;
                    let b = &ckpt3d.get(&layer.name).unwrap().data;
                    assert_eq!(a, b, "{}", layer.name);
                }
            }
        }
        // norm vectors specifically are copied bitwise
        let gamma2d = &ckpt2d.get("stem.norm.weight").unwrap().data;
        let gamma3d = &ckpt3d.get("stem.norm.weight").unwrap().data;
        assert_eq!(gamma2d, gamma3d);
    }

    #[test]
    fn depthwise_one_g_profile_peaks_near_center() {
        // (96,1,7,7) depthwise kernel, 1G with D=7: per filter the depth
        // argmax is the index nearest mu = 3.5, i.e. 3 or 4.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k2 = Tensor::<f32>::uniform(&[96, 1, 7, 7], 0.05, 1.0, &mut rng);
        let k3 = inflate_1g(&k2, 7).unwrap();
        for base in 0..k2.len() {
            let slice: Vec<f32> = (0..7).map(|d| k3.data()[base * 7 + d].abs()).collect();
            let argmax = (0..7)
                .max_by(|&a, &b| slice[a].partial_cmp(&slice[b]).unwrap())
                .unwrap();
            assert!(argmax == 3 || argmax == 4, "argmax {argmax}");
        }
    }

    #[test]
    fn missing_layer_is_named_in_error() {
        let cfg = ModelConfig::toy(2);
        let mut ckpt2d = reference_2d_checkpoint(&cfg, 4).unwrap();
        ckpt2d.entries.retain(|e| e.name != "stages.2.blocks.0.dwconv.weight");
        let err = import_2d_checkpoint(&ckpt2d, InflationMode::Full, &cfg).unwrap_err();
        assert!(err.to_string().contains("stages.2.blocks.0.dwconv.weight"), "{err}");
    }

    #[test]
    fn extra_layer_is_named_in_error() {
        let cfg = ModelConfig::toy(2);
        let mut ckpt2d = reference_2d_checkpoint(&cfg, 5).unwrap();
        ckpt2d.push("stages.9.blocks.0.dwconv.weight", vec![4], vec![0.0; 4]).unwrap();
        let err = import_2d_checkpoint(&ckpt2d, InflationMode::OneG, &cfg).unwrap_err();
        assert!(err.to_string().contains("stages.9"), "{err}");
    }

    #[test]
    fn mis_shaped_layer_is_rejected() {
        let cfg = ModelConfig::toy(2);
        let mut ckpt2d = reference_2d_checkpoint(&cfg, 6).unwrap();
        for e in ckpt2d.entries.iter_mut() {
            if e.name == "stem.conv.weight" {
                e.dims = vec![1, 4, 4, 2];
                e.data.truncate(1 * 4 * 4 * 2);
            }
        }
        assert!(import_2d_checkpoint(&ckpt2d, InflationMode::Full, &cfg).is_err());
    }
}
