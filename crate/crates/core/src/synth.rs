//! Reference network and synthetic calibration scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netgraph::{FeatureMapShape, LayerSpec, NetworkSpec};
use crate::refengine::{CalibrationSet, Tensor};

/// Six spatial layers and a classifier on a 32x32x3 input, split 2x2 after
/// three layers. The stride-2 stem dominates both MACs and live memory.
pub fn reference_net() -> NetworkSpec {
    NetworkSpec {
        name: "reference".into(),
        input_shape: FeatureMapShape::new(32, 32, 3),
        layers: vec![
            LayerSpec::conv(5, 2, 2, 16).relu(),
            LayerSpec::depthwise(3, 2, 1).relu(),
            LayerSpec::conv(1, 1, 0, 24).relu(),
            LayerSpec::maxpool(2, 2, 0),
            LayerSpec::conv(3, 1, 1, 32).relu(),
            LayerSpec::avgpool(4, 4, 0),
            LayerSpec::fc(10),
        ],
        patch_grid: (2, 2),
        patch_depth: 3,
    }
}

/// Settings of [`scenes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    /// Probability of the bright source in the top-left corner.
    pub corner_light: f64,
    /// Probability of one dimmer spark elsewhere.
    pub spark: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            corner_light: 0.75,
            spark: 0.25,
        }
    }
}

/// Dark posterized scenes on the four-level grid `{0, 1/3, 2/3, 1}`: a
/// two-level background texture, a full-intensity light near the top-left
/// corner in most scenes and an occasional 2/3 spark anywhere.
pub fn scenes(shape: FeatureMapShape, count: usize, seed: u64, cfg: SceneConfig) -> CalibrationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let samples = (0..count)
        .map(|n| {
            let fy = rng.random_range(0.15..0.6);
            let fx = rng.random_range(0.15..0.6);
            let phase: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            let mut data = vec![0.0f32; h * w * c];
            for y in 0..h {
                for x in 0..w {
                    for (ch, ph) in phase.iter().enumerate() {
                        let t = (fy * y as f64 + ph).sin() + (fx * x as f64 - ph).cos();
                        let lit = t > 0.0;
                        data[(y * w + x) * c + ch] = if lit { 1.0 / 3.0 } else { 0.0 };
                    }
                }
            }
            let mut blob = |r0: usize, c0: usize, size: usize, v: f32| {
                for y in r0..(r0 + size).min(h) {
                    for x in c0..(c0 + size).min(w) {
                        for ch in 0..c {
                            data[(y * w + x) * c + ch] = v;
                        }
                    }
                }
            };
            // The first scene always carries the light so the input range
            // spans the whole grid.
            if n == 0 || rng.random_bool(cfg.corner_light) {
                let r = rng.random_range(1..h / 4);
                let cc = rng.random_range(1..w / 4);
                blob(r, cc, 3, 1.0);
            }
            if rng.random_bool(cfg.spark) {
                let r = rng.random_range(0..h - 2);
                let cc = rng.random_range(0..w - 2);
                blob(r, cc, 2, 2.0 / 3.0);
            }
            Tensor::new(vec![h, w, c], data).expect("finite scene")
        })
        .collect();
    CalibrationSet::new(samples)
}

/// Uniform random inputs in `[-1, 1)`.
pub fn uniform_inputs(shape: FeatureMapShape, count: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let data = (0..shape.elements()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            Tensor::new(vec![shape.height, shape.width, shape.channels], data).expect("finite input")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::infer_shapes;

    #[test]
    fn reference_net_is_valid() {
        let net = reference_net();
        net.validate().unwrap();
        let shapes = infer_shapes(&net).unwrap();
        assert_eq!(shapes[3], FeatureMapShape::new(8, 8, 24));
        assert_eq!(shapes.last().unwrap(), &FeatureMapShape::new(1, 1, 10));
        assert_eq!(net.layers.iter().filter(|l| l.kind.is_spatial()).count(), 6);
    }

    #[test]
    fn scenes_use_the_four_level_grid() {
        let set = scenes(FeatureMapShape::new(16, 16, 3), 6, 1, SceneConfig::default());
        assert_eq!(set.len(), 6);
        let grid = [0.0f32, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for s in &set.samples {
            assert!(s.data().iter().all(|v| grid.contains(v)));
        }
        assert!(set.samples[0].data().contains(&1.0));
        assert_eq!(set, scenes(FeatureMapShape::new(16, 16, 3), 6, 1, SceneConfig::default()));
    }
}
