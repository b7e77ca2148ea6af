//! Pinhole camera algebra, rigid transforms and bilinear sampling.
//!
//! Everything here works in `f64`. Integer pixel coordinates address pixel
//! centers, and samples outside the map are clamped to the border so every
//! lookup is total.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use ndarray::{ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Orthonormality / determinant tolerance for [`RigidTransform::from_matrix`].
pub const RIGID_TOL: f64 = 1e-9;

/// Pinhole intrinsics `K = (f_x, f_y, c_x, c_y)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.fx, self.fy, self.cx, self.cy]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [fx, fy, cx, cy] => Self::new(*fx, *fy, *cx, *cy),
            _ => Err(Error::ShapeMismatch(format!(
                "intrinsics need 4 values, got {}",
                v.len()
            ))),
        }
    }
}

/// Image-plane position plus metric depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uvd {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

impl Uvd {
    pub fn new(u: f64, v: f64, d: f64) -> Self {
        Self { u, v, d }
    }
}

/// Camera coordinates to `(u, v, d)`.
pub fn xyz_to_uvd(p: &Point3, k: &CameraIntrinsics) -> Result<Uvd> {
    if p.z <= 0.0 {
        return Err(Error::NonPositiveDepth(p.z));
    }
    Ok(Uvd {
        u: k.fx * p.x / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
        d: p.z,
    })
}

/// Back-projects `(u, v, d)` into camera coordinates.
pub fn uvd_to_xyz(q: Uvd, k: &CameraIntrinsics) -> Result<Point3> {
    if q.d <= 0.0 {
        return Err(Error::NonPositiveDepth(q.d));
    }
    Ok(Point3::new(
        (q.u - k.cx) * q.d / k.fx,
        (q.v - k.cy) * q.d / k.fy,
        q.d,
    ))
}

/// Scales the image-plane part by `1/s`; depth is untouched.
pub fn downscale_uvd(q: Uvd, s: f64) -> Uvd {
    Uvd::new(q.u / s, q.v / s, q.d)
}

pub fn upscale_uvd(q: Uvd, s: f64) -> Uvd {
    Uvd::new(q.u * s, q.v * s, q.d)
}

fn clamp_axis(x: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max) };
    let x0 = x.floor();
    let i0 = x0 as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, x - x0)
}

/// Four-neighbour bilinear interpolation of a `h x w` map at continuous
/// `(x, y)`, clamped to the border.
pub fn bilinear_sample(map: ArrayView2<'_, f32>, x: f64, y: f64) -> f64 {
    let (h, w) = map.dim();
    assert!(h > 0 && w > 0, "bilinear_sample on an empty map");
    let (x0, x1, ax) = clamp_axis(x, w);
    let (y0, y1, ay) = clamp_axis(y, h);
    let top = (1.0 - ax) * map[[y0, x0]] as f64 + ax * map[[y0, x1]] as f64;
    let bottom = (1.0 - ax) * map[[y1, x0]] as f64 + ax * map[[y1, x1]] as f64;
    (1.0 - ay) * top + ay * bottom
}

/// Bilinear sample of every channel of a `c x h x w` map into `out`.
pub fn bilinear_sample_channels(map: ArrayView3<'_, f32>, x: f64, y: f64, out: &mut [f32]) {
    let (c, h, w) = map.dim();
    assert!(h > 0 && w > 0, "bilinear_sample on an empty map");
    assert_eq!(out.len(), c);
    let (x0, x1, ax) = clamp_axis(x, w);
    let (y0, y1, ay) = clamp_axis(y, h);
    let w00 = (1.0 - ax) * (1.0 - ay);
    let w01 = ax * (1.0 - ay);
    let w10 = (1.0 - ax) * ay;
    let w11 = ax * ay;
    for (ch, o) in out.iter_mut().enumerate() {
        let v = w00 * map[[ch, y0, x0]] as f64
            + w01 * map[[ch, y0, x1]] as f64
            + w10 * map[[ch, y1, x0]] as f64
            + w11 * map[[ch, y1, x1]] as f64;
        *o = v as f32;
    }
}

/// Rotation plus translation (meters), stored as the upper 3x4 block of a
/// homogeneous matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `|axis_angle|` radians about `axis_angle`, then translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let angle = axis_angle.norm();
        let rotation = if angle == 0.0 {
            Matrix3::identity()
        } else {
            Rotation3::from_axis_angle(&Unit::new_normalize(axis_angle), angle).into_inner()
        };
        Self {
            rotation,
            translation,
        }
    }

    /// Validates a homogeneous 4x4 matrix.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Config(format!("bottom row {bottom:?} is not (0,0,0,1)")));
        }
        let rotation: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        if ortho > RIGID_TOL || (rotation.determinant() - 1.0).abs() > RIGID_TOL {
            return Err(Error::Config("rotation block is not a proper rotation".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite transform".into()));
        }
        Ok(Self {
            rotation,
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        })
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }
}

pub fn apply_transform(t: &RigidTransform, p: &Point3) -> Point3 {
    t.apply(p)
}
