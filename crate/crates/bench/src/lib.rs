//! Seeded inputs shared by the benchmarks.

use flowtrack_core::synthdata::{generate, BodySpec, SampleRecord, SceneSpec};
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform noise in `[-1, 1)`.
pub fn noise3(shape: (usize, usize, usize), seed: u64) -> Array3<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn noise4(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// A textured plane behind a spinning ellipsoid, seen by a drifting camera.
pub fn scene(height: usize, width: usize, frames: usize, queries: usize) -> SampleRecord {
    let mut spec = SceneSpec::new(height, width, frames, 1);
    spec.queries = queries;
    spec.camera.velocity = [0.01, 0.0, 0.0];
    spec.bodies.push(BodySpec::plane([0.0, 0.0, 4.0], 8.0, 8.0));
    spec.bodies.push(BodySpec::ellipsoid([0.2, 0.0, 2.5], [0.4, 0.3, 0.3]).spinning([0.0, 0.05, 0.0]));
    generate(&spec).expect("valid bench scene")
}
