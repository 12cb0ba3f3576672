//! Camera frustum half-space algebra, bearings and attitude interpolation.
//!
//! Angle convention used throughout the crate: `pitch` is elevation (positive
//! looks up, toward +z) and `yaw` is azimuth about +z (positive turns left,
//! counter-clockwise seen from above). The viewing direction is
//! `u(pitch, yaw) = [cos(pitch)cos(yaw), cos(pitch)sin(yaw), sin(pitch)]`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Lower gimbal pitch limit (radians).
pub const PITCH_MIN: f64 = -80.0 * PI / 180.0;
/// Upper gimbal pitch limit (radians).
pub const PITCH_MAX: f64 = 30.0 * PI / 180.0;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Signed shortest-arc difference `b - a`, in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(b - a)
}

pub fn clamp_pitch(pitch: f64) -> f64 {
    pitch.clamp(PITCH_MIN, PITCH_MAX)
}

/// Unit viewing direction for a pitch/yaw pair.
pub fn view_dir(pitch: f64, yaw: f64) -> Vec3 {
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Vec3::new(cp * cy, cp * sy, sp)
}

/// Pitch/yaw that look along `d` (need not be normalized). Pitch is not clamped.
pub fn look_angles(d: &Vec3) -> (f64, f64) {
    let horiz = (d.x * d.x + d.y * d.y).sqrt();
    let pitch = d.z.atan2(horiz);
    let yaw = if horiz > 1e-12 { d.y.atan2(d.x) } else { 0.0 };
    (pitch, normalize_angle(yaw))
}

/// A 5-DoF camera configuration: position, pitch and yaw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub p: Vec3,
    pub pitch: f64,
    pub yaw: f64,
}

impl CameraConfig {
    /// Builds a configuration with yaw wrapped to `(-pi, pi]` and pitch clamped
    /// to the gimbal limits.
    pub fn new(p: Vec3, pitch: f64, yaw: f64) -> Self {
        Self {
            p,
            pitch: clamp_pitch(pitch),
            yaw: normalize_angle(yaw),
        }
    }

    pub fn attitude(&self) -> Attitude {
        Attitude {
            pitch: self.pitch,
            yaw: self.yaw,
        }
    }

    pub fn with_attitude(&self, att: Attitude) -> Self {
        Self::new(self.p, att.pitch, att.yaw)
    }

    pub fn forward(&self) -> Vec3 {
        view_dir(self.pitch, self.yaw)
    }

    /// Orthonormal camera frame `(forward, left, up)`.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        let f = Vec3::new(cp * cy, cp * sy, sp);
        let l = Vec3::new(-sy, cy, 0.0);
        let u = Vec3::new(-sp * cy, -sp * sy, cp);
        (f, l, u)
    }

    /// Coordinates of `x` in the camera frame `(forward, left, up)`.
    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        let (f, l, u) = self.frame();
        let r = x - self.p;
        Vec3::new(f.dot(&r), l.dot(&r), u.dot(&r))
    }

    /// Configuration at `p` looking at `target`, pitch clamped to the gimbal.
    pub fn looking_at(p: Vec3, target: &Vec3) -> Self {
        let (pitch, yaw) = look_angles(&(target - p));
        Self::new(p, pitch, yaw)
    }
}

/// Pitch/yaw pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attitude {
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub fn new(pitch: f64, yaw: f64) -> Self {
        Self { pitch, yaw }
    }
}

/// Field-of-view parameters of the scanning camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrustumParams {
    /// Full horizontal FoV angle (radians).
    pub alpha_h: f64,
    /// Full vertical FoV angle (radians).
    pub alpha_v: f64,
    /// Sensing range (meters).
    pub r_max: f64,
}

impl FrustumParams {
    pub fn new(alpha_h: f64, alpha_v: f64, r_max: f64) -> Result<Self> {
        let p = Self {
            alpha_h,
            alpha_v,
            r_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_degrees(alpha_h_deg: f64, alpha_v_deg: f64, r_max: f64) -> Result<Self> {
        Self::new(alpha_h_deg.to_radians(), alpha_v_deg.to_radians(), r_max)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_angle = |a: f64| a > 0.0 && a < PI;
        if !ok_angle(self.alpha_h) {
            return Err(Error::invalid("camera.alpha_h_deg", "must lie in (0, 180)"));
        }
        if !ok_angle(self.alpha_v) {
            return Err(Error::invalid("camera.alpha_v_deg", "must lie in (0, 180)"));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::invalid("camera.r_max", "must be positive"));
        }
        Ok(())
    }
}

/// Frustum face identifiers, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Face {
    Left,
    Right,
    Up,
    Down,
    Far,
}

impl Face {
    pub const ALL: [Face; 5] = [Face::Left, Face::Right, Face::Up, Face::Down, Face::Far];
    pub const SIDES: [Face; 4] = [Face::Left, Face::Right, Face::Up, Face::Down];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Plane `n . x + h = 0`; the inside is `n . x + h <= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub n: Vec3,
    pub h: f64,
}

impl Plane {
    /// Signed distance (positive outside) for unit normals.
    #[inline]
    pub fn eval(&self, x: &Vec3) -> f64 {
        self.n.dot(x) + self.h
    }
}

/// A five-plane pyramid (left/right/up/down/far), no near plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpaceSet {
    pub planes: [Plane; 5],
    /// Pyramid apex; defined to be outside.
    pub apex: Vec3,
    /// Unit viewing direction.
    pub forward: Vec3,
}

const APEX_EPS: f64 = 1e-12;

impl HalfSpaceSet {
    /// Builds the camera frustum for `config`.
    pub fn new(config: &CameraConfig, params: &FrustumParams) -> Self {
        make_frustum(config, params)
    }

    /// Arbitrary plane set, used by tests that need degenerate pyramids.
    pub fn from_planes(planes: [Plane; 5], apex: Vec3, forward: Vec3) -> Self {
        Self {
            planes,
            apex,
            forward,
        }
    }

    pub fn plane(&self, face: Face) -> &Plane {
        &self.planes[face.index()]
    }

    /// Membership test: all five inequalities hold and `x` is not the apex.
    #[inline]
    pub fn contains(&self, x: &Vec3) -> bool {
        if (x - self.apex).norm_squared() <= APEX_EPS * APEX_EPS {
            return false;
        }
        self.planes.iter().all(|pl| pl.eval(x) <= 0.0)
    }

    /// Largest plane slack `max_m (n_m . x + h_m)`; `<= 0` means inside.
    pub fn max_slack(&self, x: &Vec3) -> f64 {
        self.planes
            .iter()
            .map(|pl| pl.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Conservative box test: false only when the whole box lies outside one plane.
    pub fn may_intersect_aabb(&self, min: &Vec3, max: &Vec3) -> bool {
        for pl in &self.planes {
            // corner most inside the plane
            let c = Vec3::new(
                if pl.n.x >= 0.0 { min.x } else { max.x },
                if pl.n.y >= 0.0 { min.y } else { max.y },
                if pl.n.z >= 0.0 { min.z } else { max.z },
            );
            if pl.eval(&c) > 0.0 {
                return false;
            }
        }
        true
    }
}

/// Builds the five half-spaces of the camera frustum.
pub fn make_frustum(config: &CameraConfig, params: &FrustumParams) -> HalfSpaceSet {
    let (f, l, u) = config.frame();
    let (sa, ca) = (params.alpha_h * 0.5).sin_cos();
    let (sb, cb) = (params.alpha_v * 0.5).sin_cos();
    let p = config.p;
    let mk = |n: Vec3, extra: f64| Plane {
        n,
        h: -n.dot(&p) + extra,
    };
    let left = mk(l * ca - f * sa, 0.0);
    let right = mk(-l * ca - f * sa, 0.0);
    let up = mk(u * cb - f * sb, 0.0);
    let down = mk(-u * cb - f * sb, 0.0);
    let far = mk(f, -params.r_max);
    HalfSpaceSet {
        planes: [left, right, up, down, far],
        apex: p,
        forward: f,
    }
}

pub fn point_in_frustum(hs: &HalfSpaceSet, x: &Vec3) -> bool {
    hs.contains(x)
}

/// Horizontal and vertical bearings of `x` in the camera frame.
pub fn bearings(config: &CameraConfig, x: &Vec3) -> Result<(f64, f64)> {
    if (x - config.p).norm() <= APEX_EPS {
        return Err(Error::Degenerate("degenerate bearing"));
    }
    let c = config.to_camera(x);
    Ok((c.y.atan2(c.x), c.z.atan2(c.x)))
}

/// Linear pitch blend and shortest-arc yaw blend.
pub fn interp_attitude(a: Attitude, b: Attitude, rho: f64) -> Attitude {
    let rho = rho.clamp(0.0, 1.0);
    if rho == 0.0 {
        return a;
    }
    if rho == 1.0 {
        return b;
    }
    let pitch = (1.0 - rho) * a.pitch + rho * b.pitch;
    let yaw = normalize_angle(a.yaw + rho * angle_diff(a.yaw, b.yaw));
    Attitude { pitch, yaw }
}

/// Translates the frustum by `s` along `d`: `h_m <- h_m - s (n_m . d)`.
pub fn shift_offsets(hs: &HalfSpaceSet, d: &Vec3, s: f64) -> HalfSpaceSet {
    let mut out = *hs;
    for pl in out.planes.iter_mut() {
        pl.h -= s * pl.n.dot(d);
    }
    out.apex += d * s;
    out
}
