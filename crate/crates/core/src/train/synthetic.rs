//! Synthetic two-class volumes (spheres vs cubes) for smoke training and
//! self tests, with ground-truth object masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Element, Tensor};

pub struct SyntheticCase<E: Element> {
    pub case_id: String,
    pub volume: Tensor<E>,
    pub mask: Tensor<E>,
    /// 0 = sphere, 1 = cube.
    pub label: usize,
}

/// Alternating sphere/cube volumes of side `side`, object intensity 1 on a
/// zero background, random center and size. The size range is narrow so the
/// two shapes' volume fractions do not overlap (a sphere fills ~52% of the
/// bounding cube), keeping the classes separable under heavy augmentation.
/// Deterministic per seed.
pub fn spheres_vs_cubes<E: Element>(count: usize, side: usize, seed: u64) -> Vec<SyntheticCase<E>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let half_span = side as f64 / 2.0;
        let size = rng.gen_range(0.54 * half_span..0.58 * half_span);
        let wiggle = half_span - size - 1.0;
        let center = [
            half_span + rng.gen_range(-wiggle..wiggle),
            half_span + rng.gen_range(-wiggle..wiggle),
            half_span + rng.gen_range(-wiggle..wiggle),
        ];
        let mut volume = Tensor::<E>::zeros(&[side, side, side]);
        let mut mask = Tensor::<E>::zeros(&[side, side, side]);
        for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    let d = [
                        x as f64 - center[0],
                        y as f64 - center[1],
                        z as f64 - center[2],
                    ];
                    let inside = if label == 0 {
                        d.iter().map(|v| v * v).sum::<f64>().sqrt() <= size
                    } else {
                        d.iter().all(|v| v.abs() <= size)
                    };
                    // baked-in texture keeps clean volumes on the same
                    // footing as noise-augmented training inputs
                    let texture = rng.gen_range(0.0..0.25);
                    let value = if inside { 0.75 + texture } else { texture };
                    volume.set(&[x, y, z], E::from_f64(value));
                    if inside {
                        mask.set(&[x, y, z], E::one());
                    }
                }
            }
        }
        cases.push(SyntheticCase {
            case_id: format!("syn{i:03}"),
            volume,
            mask,
            label,
        });
    }
    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_alternate_and_masks_trace_objects() {
        let cases = spheres_vs_cubes::<f32>(6, 16, 1);
        for (i, case) in cases.iter().enumerate() {
            assert_eq!(case.label, i % 2);
            assert!(case.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
            // object voxels sit above the background texture band
            for (v, m) in case.volume.data().iter().zip(case.mask.data()) {
                if *m == 1.0 {
                    assert!(*v >= 0.75, "object voxel {v}");
                } else {
                    assert!(*v < 0.25, "background voxel {v}");
                }
            }
            let mass: f32 = case.mask.data().iter().sum();
            assert!(mass > 0.0, "object is empty");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = spheres_vs_cubes::<f32>(4, 12, 9);
        let b = spheres_vs_cubes::<f32>(4, 12, 9);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.volume.data(), y.volume.data());
        }
    }

    #[test]
    fn spheres_and_cubes_differ_in_shape() {
        // a cube of half-extent s has volume (2s)³; a sphere of radius s has
        // 4/3·π·s³ ≈ 0.52·(2s)³ — the mass ratio separates the classes
        let cases = spheres_vs_cubes::<f32>(2, 24, 3);
        let m0: f32 = cases[0].mask.data().iter().sum();
        let m1: f32 = cases[1].mask.data().iter().sum();
        // cube (label 1) strictly outweighs sphere (label 0) at these sizes
        assert!(m1 > 1.5 * m0, "cube {m1} vs sphere {m0}");
        assert_ne!(cases[0].volume.data(), cases[1].volume.data());
    }
}
