//! Scene description: rigid textured bodies and a camera, each moving at
//! constant per-frame linear and angular velocity.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    /// Rectangle in the body's xy-plane; `size` holds the half extents.
    #[default]
    Plane,
    /// Centred on the body origin; `size` holds the radii.
    Ellipsoid,
}

/// Constant per-frame motion. Rotation is about the moving object's own
/// origin; velocities are in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Motion {
    /// Meters per frame.
    pub velocity: [f64; 3],
    /// Axis-angle radians per frame.
    pub angular_velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    #[serde(default)]
    pub shape: ShapeKind,
    pub size: [f64; 3],
    /// World position at frame 1.
    pub position: [f64; 3],
    /// Axis-angle orientation at frame 1.
    #[serde(default)]
    pub orientation: [f64; 3],
    #[serde(default)]
    pub motion: Motion,
    /// Spatial frequency of the texture, cycles per meter.
    #[serde(default = "default_texture_scale")]
    pub texture_scale: f64,
    /// First and last frame (1-based, inclusive) in which the body exists.
    #[serde(default)]
    pub visible: Option<[usize; 2]>,
}

fn default_texture_scale() -> f64 {
    4.0
}

impl BodySpec {
    pub fn plane(position: [f64; 3], half_width: f64, half_height: f64) -> Self {
        Self {
            shape: ShapeKind::Plane,
            size: [half_width, half_height, 0.0],
            position,
            orientation: [0.0; 3],
            motion: Motion::default(),
            texture_scale: default_texture_scale(),
            visible: None,
        }
    }

    pub fn ellipsoid(position: [f64; 3], radii: [f64; 3]) -> Self {
        Self {
            shape: ShapeKind::Ellipsoid,
            size: radii,
            ..Self::plane(position, 0.0, 0.0)
        }
    }

    pub fn moving(mut self, velocity: [f64; 3]) -> Self {
        self.motion.velocity = velocity;
        self
    }

    pub fn spinning(mut self, angular_velocity: [f64; 3]) -> Self {
        self.motion.angular_velocity = angular_velocity;
        self
    }

    pub fn oriented(mut self, axis_angle: [f64; 3]) -> Self {
        self.orientation = axis_angle;
        self
    }

    pub fn visible_in(mut self, first: usize, last: usize) -> Self {
        self.visible = Some([first, last]);
        self
    }

    /// Body-to-world transform at 0-based frame `t`.
    pub fn pose(&self, t: usize) -> RigidTransform {
        let k = t as f64;
        let spin = RigidTransform::from_axis_angle(Vector3::from(self.motion.angular_velocity) * k, Vector3::zeros());
        let rest = RigidTransform::from_axis_angle(Vector3::from(self.orientation), Vector3::zeros());
        let rotation = spin.compose(&rest).rotation;
        RigidTransform {
            rotation,
            translation: Vector3::from(self.position) + Vector3::from(self.motion.velocity) * k,
        }
    }

    /// Whether the body exists at 0-based frame `t`.
    pub fn exists_at(&self, t: usize) -> bool {
        self.visible.is_none_or(|[a, b]| (a..=b).contains(&(t + 1)))
    }
}

/// What replaces a corrupted depth pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutlierPolicy {
    /// Depth set to 0.
    #[default]
    Sentinel,
    /// Depth pushed away from the camera by `magnitude` meters.
    Offset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSpec {
    /// Fraction of each frame's pixels that are corrupted.
    pub fraction: f64,
    pub policy: OutlierPolicy,
    pub magnitude: f64,
}

/// Everything [`generate`](super::generate) needs; the seed fixes textures,
/// query sampling and outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// `[fx, fy, cx, cy]`; defaults to a focal length of one image width
    /// and the principal point at the image centre.
    #[serde(default)]
    pub intrinsics: Option<[f64; 4]>,
    #[serde(default = "default_queries")]
    pub queries: usize,
    #[serde(default)]
    pub camera: Motion,
    #[serde(default, rename = "body")]
    pub bodies: Vec<BodySpec>,
    #[serde(default)]
    pub outliers: OutlierSpec,
}

fn default_queries() -> usize {
    16
}

impl SceneSpec {
    pub fn new(height: usize, width: usize, frames: usize, seed: u64) -> Self {
        Self {
            name: None,
            seed,
            height,
            width,
            frames,
            intrinsics: None,
            queries: default_queries(),
            camera: Motion::default(),
            bodies: vec![],
            outliers: OutlierSpec::default(),
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        match self.intrinsics {
            Some(k) => CameraIntrinsics::from_slice(&k),
            None => CameraIntrinsics::new(
                self.width as f64,
                self.width as f64,
                (self.width as f64 - 1.0) / 2.0,
                (self.height as f64 - 1.0) / 2.0,
            ),
        }
    }

    /// Camera-to-world transform at 0-based frame `t`; identity at frame 1.
    pub fn camera_pose(&self, t: usize) -> RigidTransform {
        let k = t as f64;
        RigidTransform::from_axis_angle(
            Vector3::from(self.camera.angular_velocity) * k,
            Vector3::from(self.camera.velocity) * k,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::DegenerateSpec(m));
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return fail("image size and frame count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.outliers.fraction) {
            return fail(format!("outlier fraction {} outside [0, 1]", self.outliers.fraction));
        }
        self.intrinsics()?;
        if self.bodies.is_empty() {
            return fail("scene has no bodies".into());
        }
        for (i, b) in self.bodies.iter().enumerate() {
            let needed = match b.shape {
                ShapeKind::Plane => 2,
                ShapeKind::Ellipsoid => 3,
            };
            if b.size[..needed].iter().any(|s| !(*s > 0.0)) {
                return fail(format!("body {i} has a non-positive size"));
            }
            if let Some([a, z]) = b.visible {
                if a == 0 || a > z {
                    return fail(format!("body {i} has an empty visible range"));
                }
            }
            for t in 0..self.frames {
                let centre = self.camera_pose(t).inverse().apply(&b.pose(t).apply(&crate::Point3::origin()));
                if centre.z <= 0.0 {
                    return fail(format!("body {i} is behind the camera in frame {}", t + 1));
                }
            }
        }
        Ok(())
    }
}

/// A TOML file listing several scenes as `[[sample]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub sample: Vec<SceneSpec>,
}
