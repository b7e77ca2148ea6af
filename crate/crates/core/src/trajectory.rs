//! Point trajectories over a whole video, with container and CSV export.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::geometry::{uvd_to_xyz, xyz_to_uvd, CameraIntrinsics, Point3, Uvd};
use crate::io::container::{Container, TensorData};

pub const CONTAINER_KIND: &str = "trajectories";

/// Coordinates stored in [`TrajectorySet::positions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordFrame {
    /// Camera-frame xyz in meters.
    Camera,
    /// Full-resolution pixel coordinates plus metric depth.
    Uvd,
}

impl CoordFrame {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Camera => "camera",
            Self::Uvd => "uvd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "camera" => Ok(Self::Camera),
            "uvd" => Ok(Self::Uvd),
            other => Err(Error::CorruptManifest(format!("unknown coordinate frame `{other}`"))),
        }
    }
}

/// `N` trajectories over `T` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    /// `N x T x 3`
    pub positions: Array3<f64>,
    /// `N x T`
    pub valid: Array2<bool>,
    pub frame: CoordFrame,
    /// Needed to move between camera and image coordinates.
    pub intrinsics: Option<CameraIntrinsics>,
}

impl TrajectorySet {
    pub fn new(
        positions: Array3<f64>,
        valid: Array2<bool>,
        frame: CoordFrame,
        intrinsics: Option<CameraIntrinsics>,
    ) -> Result<Self> {
        let (n, t, c) = positions.dim();
        if c != 3 || valid.dim() != (n, t) {
            return Err(Error::ShapeMismatch(format!(
                "positions {:?} vs valid {:?}",
                positions.shape(),
                valid.shape()
            )));
        }
        for ((a, f), ok) in valid.indexed_iter() {
            if *ok && positions.slice(ndarray::s![a, f, ..]).iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!(
                    "valid entry (point {a}, frame {f}) is not finite"
                )));
            }
        }
        Ok(Self {
            positions,
            valid,
            frame,
            intrinsics,
        })
    }

    /// Every entry valid.
    pub fn all_valid(positions: Array3<f64>, frame: CoordFrame, intrinsics: Option<CameraIntrinsics>) -> Result<Self> {
        let (n, t, _) = positions.dim();
        Self::new(positions, Array2::from_elem((n, t), true), frame, intrinsics)
    }

    pub fn num_points(&self) -> usize {
        self.positions.dim().0
    }

    pub fn num_frames(&self) -> usize {
        self.positions.dim().1
    }

    pub fn point(&self, a: usize, t: usize) -> [f64; 3] {
        [
            self.positions[[a, t, 0]],
            self.positions[[a, t, 1]],
            self.positions[[a, t, 2]],
        ]
    }

    fn require_intrinsics(&self) -> Result<CameraIntrinsics> {
        self.intrinsics
            .ok_or_else(|| Error::Config("trajectory set carries no intrinsics".into()))
    }

    /// Camera xyz of every entry. Image-frame entries with non-positive
    /// depth become NaN and are marked invalid.
    pub fn to_camera(&self) -> Result<Self> {
        if self.frame == CoordFrame::Camera {
            return Ok(self.clone());
        }
        let k = self.require_intrinsics()?;
        let mut out = self.clone();
        out.frame = CoordFrame::Camera;
        for ((a, t), ok) in out.valid.indexed_iter_mut() {
            let [u, v, d] = self.point(a, t);
            let xyz = uvd_to_xyz(Uvd::new(u, v, d), &k).map(|p| [p.x, p.y, p.z]);
            let xyz = xyz.unwrap_or_else(|_| {
                *ok = false;
                [f64::NAN; 3]
            });
            for (i, c) in xyz.into_iter().enumerate() {
                out.positions[[a, t, i]] = c;
            }
        }
        Ok(out)
    }

    /// Pixel coordinates plus depth. Camera-frame entries with `z <= 0`
    /// become NaN and are marked invalid.
    pub fn to_uvd(&self) -> Result<Self> {
        if self.frame == CoordFrame::Uvd {
            return Ok(self.clone());
        }
        let k = self.require_intrinsics()?;
        let mut out = self.clone();
        out.frame = CoordFrame::Uvd;
        for ((a, t), ok) in out.valid.indexed_iter_mut() {
            let [x, y, z] = self.point(a, t);
            let uvd = xyz_to_uvd(&Point3::new(x, y, z), &k).map(|q| [q.u, q.v, q.d]);
            let uvd = uvd.unwrap_or_else(|_| {
                *ok = false;
                [f64::NAN; 3]
            });
            for (i, c) in uvd.into_iter().enumerate() {
                out.positions[[a, t, i]] = c;
            }
        }
        Ok(out)
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            positions: self.positions.select(Axis(0), indices),
            valid: self.valid.select(Axis(0), indices),
            frame: self.frame,
            intrinsics: self.intrinsics,
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(CONTAINER_KIND);
        c.meta.insert("frame".into(), self.frame.as_str().into());
        c.push_f64("positions", self.positions.clone().into_dyn());
        c.push_u8("valid", self.valid.mapv(u8::from).into_dyn());
        if let Some(k) = self.intrinsics {
            c.push_f64("intrinsics", ndarray::arr1(&k.to_array()).into_dyn());
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != CONTAINER_KIND {
            return Err(Error::CorruptManifest(format!(
                "expected a `{CONTAINER_KIND}` container, found `{}`",
                c.kind
            )));
        }
        let frame = CoordFrame::parse(c.meta.get("frame").map(String::as_str).unwrap_or("camera"))?;
        let positions = c
            .f64("positions")?
            .clone()
            .into_dimensionality()
            .map_err(|_| Error::CorruptManifest("positions must be N x T x 3".into()))?;
        let valid = c
            .u8("valid")?
            .mapv(|v| v != 0)
            .into_dimensionality()
            .map_err(|_| Error::CorruptManifest("valid must be N x T".into()))?;
        let intrinsics = match c.get("intrinsics") {
            Some(TensorData::F64(k)) => Some(CameraIntrinsics::from_slice(k.as_slice().unwrap_or(&[]))?),
            Some(_) => return Err(Error::CorruptManifest("intrinsics must be f64".into())),
            None => None,
        };
        Self::new(positions, valid, frame, intrinsics)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.to_container().write(dir)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Self::from_container(&Container::read(dir)?)
    }

    /// One row per (frame, point): `frame,point,x,y,z,u,v,d,valid`, frames
    /// 1-based, nine significant digits. Coordinates that cannot be derived
    /// (no intrinsics, or non-positive depth) are written as `nan`.
    pub fn to_csv(&self) -> String {
        let camera = self.to_camera().ok();
        let uvd = self.to_uvd().ok();
        let mut out = String::from("frame,point,x,y,z,u,v,d,valid\n");
        for t in 0..self.num_frames() {
            for a in 0..self.num_points() {
                let xyz = camera.as_ref().map_or([f64::NAN; 3], |c| c.point(a, t));
                let uvd = uvd.as_ref().map_or([f64::NAN; 3], |c| c.point(a, t));
                let _ = write!(out, "{},{}", t + 1, a);
                for v in xyz.iter().chain(uvd.iter()) {
                    let _ = write!(out, ",{}", fmt_sig9(*v));
                }
                let _ = writeln!(out, ",{}", u8::from(self.valid[[a, t]]));
            }
        }
        out
    }
}

fn fmt_sig9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        "nan".to_string()
    }
}
