//! Ray casting of the scene bodies with supersampled, box-filtered output.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{BodySpec, SceneSpec, ShapeKind};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};

/// Subsamples per pixel side.
pub const SUPERSAMPLE: usize = 4;
const WAVES: usize = 6;

/// Sum of random plane waves over body coordinates, one set per channel.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: [[(Vector3<f64>, f64); WAVES]; 3],
}

impl Texture {
    pub fn new(rng: &mut ChaCha8Rng, scale: f64) -> Self {
        let mut wave = || {
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let dir = if dir.norm() < 1e-6 { Vector3::x() } else { dir.normalize() };
            let freq = TAU * scale * rng.random_range(0.5..1.5);
            (dir * freq, rng.random_range(0.0..TAU))
        };
        Self {
            waves: std::array::from_fn(|_| std::array::from_fn(|_| wave())),
        }
    }

    pub fn color(&self, p: &Point3) -> [f64; 3] {
        self.waves.map(|set| {
            let s: f64 = set.iter().map(|(k, phase)| (k.dot(&p.coords) + phase).sin()).sum();
            (0.5 + 0.5 * s / WAVES as f64).clamp(0.0, 1.0)
        })
    }
}

/// One textured body at one frame.
#[derive(Debug, Clone)]
pub struct PlacedBody<'a> {
    pub spec: &'a BodySpec,
    pub texture: &'a Texture,
    /// World-to-body.
    pub inverse_pose: RigidTransform,
}

/// Nearest positive ray parameter of a body-space ray hitting the shape.
fn intersect(shape: ShapeKind, size: [f64; 3], o: Vector3<f64>, d: Vector3<f64>) -> Option<f64> {
    const EPS: f64 = 1e-9;
    match shape {
        ShapeKind::Plane => {
            if d.z.abs() < 1e-12 {
                return None;
            }
            let s = -o.z / d.z;
            let p = o + d * s;
            (s > EPS && p.x.abs() <= size[0] && p.y.abs() <= size[1]).then_some(s)
        }
        ShapeKind::Ellipsoid => {
            let r = Vector3::from(size);
            let (o, d) = (o.component_div(&r), d.component_div(&r));
            let a = d.dot(&d);
            let b = 2.0 * o.dot(&d);
            let c = o.dot(&o) - 1.0;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let root = disc.sqrt();
            [(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)]
                .into_iter()
                .find(|s| *s > EPS)
        }
    }
}

/// First surface hit by a camera ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub body: usize,
    /// Camera-frame depth.
    pub depth: f64,
    /// Hit point in body coordinates.
    pub local: Point3,
}

/// Bodies placed for one frame, with the camera pose.
pub struct FrameScene<'a> {
    pub bodies: Vec<(usize, PlacedBody<'a>)>,
    pub camera: RigidTransform,
    pub k: CameraIntrinsics,
}

impl<'a> FrameScene<'a> {
    pub fn new(spec: &'a SceneSpec, textures: &'a [Texture], t: usize) -> Self {
        let bodies = spec
            .bodies
            .iter()
            .zip(textures)
            .enumerate()
            .filter(|(_, (b, _))| b.exists_at(t))
            .map(|(i, (b, tex))| {
                (
                    i,
                    PlacedBody {
                        spec: b,
                        texture: tex,
                        inverse_pose: b.pose(t).inverse(),
                    },
                )
            })
            .collect();
        Self {
            bodies,
            camera: spec.camera_pose(t),
            k: spec.intrinsics().expect("validated intrinsics"),
        }
    }

    /// Casts the ray through continuous pixel position `(u, v)`. The ray
    /// parameter equals camera-frame depth because the camera-frame
    /// direction has unit z.
    pub fn cast(&self, u: f64, v: f64) -> Option<Hit> {
        let dir_cam = Vector3::new((u - self.k.cx) / self.k.fx, (v - self.k.cy) / self.k.fy, 1.0);
        let origin = self.camera.translation;
        let dir = self.camera.rotation * dir_cam;
        let mut best: Option<Hit> = None;
        for (i, body) in &self.bodies {
            let o = body.inverse_pose.apply(&Point3::from(origin)).coords;
            let d = body.inverse_pose.rotation * dir;
            if let Some(s) = intersect(body.spec.shape, body.spec.size, o, d) {
                if best.is_none_or(|h| s < h.depth) {
                    best = Some(Hit {
                        body: *i,
                        depth: s,
                        local: Point3::from(o + d * s),
                    });
                }
            }
        }
        best
    }

    /// Box-filtered colour (`3 x H x W`, 8-bit) and depth (`H x W`). Depth
    /// averages only the subsamples that hit something and is 0 where none
    /// did.
    pub fn render(&self, height: usize, width: usize) -> (Array3<u8>, Array2<f32>) {
        let mut rgb = Array3::zeros((3, height, width));
        let mut depth = Array2::zeros((height, width));
        let n = SUPERSAMPLE as f64;
        let offsets: Vec<f64> = (0..SUPERSAMPLE).map(|i| (i as f64 + 0.5) / n - 0.5).collect();
        for i in 0..height {
            for j in 0..width {
                let mut color = [0.0; 3];
                let (mut dsum, mut hits) = (0.0, 0usize);
                for dy in &offsets {
                    for dx in &offsets {
                        if let Some(h) = self.cast(j as f64 + dx, i as f64 + dy) {
                            let c = self.bodies.iter().find(|(b, _)| *b == h.body).unwrap().1.texture.color(&h.local);
                            for (acc, c) in color.iter_mut().zip(c) {
                                *acc += c;
                            }
                            dsum += h.depth;
                            hits += 1;
                        }
                    }
                }
                let total = n * n;
                for c in 0..3 {
                    rgb[[c, i, j]] = (255.0 * color[c] / total).round().clamp(0.0, 255.0) as u8;
                }
                if hits > 0 {
                    depth[[i, j]] = (dsum / hits as f64) as f32;
                }
            }
        }
        (rgb, depth)
    }
}

/// One texture per body from the scene's texture stream.
pub fn textures(spec: &SceneSpec) -> Vec<Texture> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    spec.bodies.iter().map(|b| Texture::new(&mut rng, b.texture_scale)).collect()
}
