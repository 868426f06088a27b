//! Sphere and image-plane coordinate transforms.
//!
//! Conventions used throughout the crate:
//!
//! * ERP pixel centers sit at half-integer offsets:
//!   `lon = ((px + 0.5) / width) * 2π − π`, `lat = π/2 − ((py + 0.5) / height) * π`.
//! * Unit vectors use a right-handed frame with `+Z` forward (lat 0, lon 0),
//!   `+X` to the east (lon +π/2) and `+Y` up (north pole).
//! * Cubemap faces are ordered `[front, right, back, left, top, bottom]`;
//!   front looks along `+Z`. Face pixel `(i, j)` maps to `u = 2(i+0.5)/N − 1`
//!   (rightwards) and `v = 2(j+0.5)/N − 1` (downwards). The top face has its
//!   lower edge towards the front face, the bottom face its upper edge.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Channels, ErpFrame, Image};

pub(crate) mod vec3 {
    pub type Vec3 = [f64; 3];

    #[inline]
    pub fn dot(a: Vec3, b: Vec3) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    #[inline]
    pub fn norm(a: Vec3) -> f64 {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn scale(a: Vec3, s: f64) -> Vec3 {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    #[inline]
    pub fn add(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }
}

use vec3::Vec3;

/// Wraps a longitude into `[−π, π)`.
pub fn wrap_longitude(lon: f64) -> f64 {
    let w = (lon + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// A direction on the unit sphere. Latitude in `[−π/2, π/2]`, longitude in
/// `[−π, π)`; longitude wraps on construction, latitude out of range is an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSphericalPoint")]
pub struct SphericalPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawSphericalPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawSphericalPoint> for SphericalPoint {
    type Error = Error;

    fn try_from(raw: RawSphericalPoint) -> Result<Self> {
        SphericalPoint::new(raw.lat, raw.lon)
    }
}

impl SphericalPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&lat) || !lon.is_finite() {
            return Err(Error::invalid(format!(
                "spherical point out of range: lat={lat}, lon={lon}"
            )));
        }
        Ok(SphericalPoint {
            lat,
            lon: wrap_longitude(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn to_unit_vector(&self) -> Vec3 {
        let (sl, cl) = self.lat.sin_cos();
        let (so, co) = self.lon.sin_cos();
        [cl * so, sl, cl * co]
    }

    /// Direction of a non-zero vector. The zero vector maps to `(0, 0)`.
    pub fn from_vector(v: Vec3) -> Self {
        let n = vec3::norm(v);
        if n == 0.0 || !n.is_finite() {
            return SphericalPoint { lat: 0.0, lon: 0.0 };
        }
        let lat = (v[1] / n).clamp(-1.0, 1.0).asin();
        let lon = wrap_longitude(v[0].atan2(v[2]));
        SphericalPoint { lat, lon }
    }
}

/// Spherical direction of the center of ERP pixel `(px, py)`.
pub fn erp_to_spherical(px: usize, py: usize, width: usize, height: usize) -> Result<SphericalPoint> {
    if px >= width || py >= height {
        return Err(Error::invalid(format!(
            "pixel ({px}, {py}) outside {width}x{height} frame"
        )));
    }
    erp_coords_to_spherical(px as f64, py as f64, width, height)
}

/// Continuous version of [`erp_to_spherical`] for fractional pixel positions.
/// `y` must stay within `[−0.5, height − 0.5]`; `x` wraps.
pub fn erp_coords_to_spherical(x: f64, y: f64, width: usize, height: usize) -> Result<SphericalPoint> {
    let lon = (x + 0.5) / width as f64 * TAU - PI;
    let lat = FRAC_PI_2 - (y + 0.5) / height as f64 * PI;
    SphericalPoint::new(lat, lon)
}

/// Fractional ERP pixel coordinates of a direction; `x` lies in `[0, width)`.
pub fn spherical_to_erp(p: &SphericalPoint, width: usize, height: usize) -> (f64, f64) {
    let w = width as f64;
    let mut x = ((p.lon + PI) / TAU * w - 0.5).rem_euclid(w);
    if x >= w {
        x = 0.0;
    }
    let y = (FRAC_PI_2 - p.lat) / PI * height as f64 - 0.5;
    (x, y)
}

/// Fractional ERP coordinates of a (not necessarily unit) direction vector.
#[inline]
pub(crate) fn vector_to_erp(d: Vec3, width: usize, height: usize) -> (f64, f64) {
    spherical_to_erp(&SphericalPoint::from_vector(d), width, height)
}

/// Central angle between two directions, in `[0, π]`.
pub fn great_circle_distance(a: &SphericalPoint, b: &SphericalPoint) -> f64 {
    vector_angle(a.to_unit_vector(), b.to_unit_vector())
}

#[inline]
pub(crate) fn vector_angle(a: Vec3, b: Vec3) -> f64 {
    vec3::norm(vec3::cross(a, b)).atan2(vec3::dot(a, b))
}

/// Spherical linear interpolation between two directions, `t ∈ [0, 1]`.
pub fn slerp(a: &SphericalPoint, b: &SphericalPoint, t: f64) -> SphericalPoint {
    let va = a.to_unit_vector();
    let vb = b.to_unit_vector();
    let omega = vector_angle(va, vb);
    if omega < 1e-12 {
        return *a;
    }
    let so = omega.sin();
    if so < 1e-12 {
        // Antipodal: any great circle works, fall back to the chordal blend.
        return SphericalPoint::from_vector(vec3::add(vec3::scale(va, 1.0 - t), vec3::scale(vb, t)));
    }
    let wa = ((1.0 - t) * omega).sin() / so;
    let wb = (t * omega).sin() / so;
    SphericalPoint::from_vector(vec3::add(vec3::scale(va, wa), vec3::scale(vb, wb)))
}

/// Bilinear ERP sample along a direction, longitude wrapping.
#[inline]
pub(crate) fn sample_erp(frame: &ErpFrame, d: Vec3, out: &mut [f64]) {
    let (x, y) = vector_to_erp(d, frame.width(), frame.height());
    frame.sample_bilinear(x, y, true, out);
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubeFace {
    Front,
    Right,
    Back,
    Left,
    Top,
    Bottom,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::Front,
        CubeFace::Right,
        CubeFace::Back,
        CubeFace::Left,
        CubeFace::Top,
        CubeFace::Bottom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Direction (not normalized) through face coordinates `u, v ∈ [−1, 1]`.
    pub fn direction(self, u: f64, v: f64) -> Vec3 {
        match self {
            CubeFace::Front => [u, -v, 1.0],
            CubeFace::Right => [1.0, -v, -u],
            CubeFace::Back => [-u, -v, -1.0],
            CubeFace::Left => [-1.0, -v, u],
            CubeFace::Top => [u, 1.0, v],
            CubeFace::Bottom => [u, -1.0, -v],
        }
    }

    /// Face hit by a direction and the `(u, v)` coordinates of the hit.
    pub fn locate(d: Vec3) -> (CubeFace, f64, f64) {
        let [x, y, z] = d;
        let (ax, ay, az) = (x.abs(), y.abs(), z.abs());
        if az >= ax && az >= ay {
            if z > 0.0 {
                (CubeFace::Front, x / az, -y / az)
            } else {
                (CubeFace::Back, -x / az, -y / az)
            }
        } else if ax >= ay {
            if x > 0.0 {
                (CubeFace::Right, -z / ax, -y / ax)
            } else {
                (CubeFace::Left, z / ax, -y / ax)
            }
        } else if y > 0.0 {
            (CubeFace::Top, x / ay, z / ay)
        } else {
            (CubeFace::Bottom, x / ay, -z / ay)
        }
    }
}

/// Six square faces in [`CubeFace::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapFaces {
    face_size: usize,
    faces: Vec<Image>,
}

impl CubemapFaces {
    pub fn new(faces: Vec<Image>) -> Result<Self> {
        if faces.len() != 6 {
            return Err(Error::invalid(format!("cubemap needs 6 faces, got {}", faces.len())));
        }
        let size = faces[0].width();
        let channels = faces[0].channels();
        for f in &faces {
            if f.width() != size || f.height() != size || f.channels() != channels {
                return Err(Error::invalid("cubemap faces must be square and identical in size"));
            }
        }
        Ok(CubemapFaces {
            face_size: size,
            faces,
        })
    }

    pub fn face_size(&self) -> usize {
        self.face_size
    }

    pub fn face(&self, face: CubeFace) -> &Image {
        &self.faces[face.index()]
    }

    pub fn faces(&self) -> &[Image] {
        &self.faces
    }

    pub fn channels(&self) -> Channels {
        self.faces[0].channels()
    }

    /// Bilinear sample along a direction, clamped at face borders.
    pub fn sample(&self, d: Vec3, out: &mut [f64]) {
        let (face, u, v) = CubeFace::locate(d);
        let n = self.face_size as f64;
        let x = (u + 1.0) * 0.5 * n - 0.5;
        let y = (v + 1.0) * 0.5 * n - 0.5;
        self.faces[face.index()].sample_bilinear(x, y, false, out);
    }
}

pub fn erp_to_cubemap(frame: &ErpFrame, face_size: usize) -> Result<CubemapFaces> {
    if face_size < 2 {
        return Err(Error::invalid(format!("face size must be >= 2, got {face_size}")));
    }
    let c = frame.channels().count();
    let n = face_size as f64;
    let faces: Vec<Image> = CubeFace::ALL
        .par_iter()
        .map(|&face| {
            let mut data = Vec::with_capacity(face_size * face_size * c);
            let mut px = [0.0; 3];
            for j in 0..face_size {
                let v = 2.0 * (j as f64 + 0.5) / n - 1.0;
                for i in 0..face_size {
                    let u = 2.0 * (i as f64 + 0.5) / n - 1.0;
                    sample_erp(frame, face.direction(u, v), &mut px);
                    data.extend(px[..c].iter().map(|&s| quantize(s)));
                }
            }
            Image::new(face_size, face_size, frame.channels(), data)
        })
        .collect::<Result<_>>()?;
    CubemapFaces::new(faces)
}

pub fn cubemap_to_erp(faces: &CubemapFaces, width: usize, height: usize) -> Result<ErpFrame> {
    if width < 2 || height < 1 {
        return Err(Error::invalid(format!("invalid ERP size {width}x{height}")));
    }
    let c = faces.channels().count();
    let rows: Vec<Vec<u8>> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(width * c);
            let mut px = [0.0; 3];
            for x in 0..width {
                let d = erp_to_spherical(x, y, width, height)
                    .expect("pixel in range")
                    .to_unit_vector();
                faces.sample(d, &mut px);
                row.extend(px[..c].iter().map(|&s| quantize(s)));
            }
            row
        })
        .collect();
    Image::new(width, height, faces.channels(), rows.concat())
}

/// Pinhole camera tangent to the sphere at `center`, used for NFOV views.
#[derive(Debug, Clone)]
pub struct GnomonicCamera {
    center: SphericalPoint,
    fov_h: f64,
    fov_v: f64,
    out_w: usize,
    out_h: usize,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_h: f64,
    tan_v: f64,
}

impl GnomonicCamera {
    /// `fov_h` / `fov_v` in degrees, strictly inside `(0, 180)`.
    pub fn new(center: SphericalPoint, fov_h: f64, fov_v: f64, out_w: usize, out_h: usize) -> Result<Self> {
        for (name, fov) in [("horizontal", fov_h), ("vertical", fov_v)] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(Error::invalid(format!(
                    "{name} field of view must be in (0, 180) degrees, got {fov}"
                )));
            }
        }
        if out_w == 0 || out_h == 0 {
            return Err(Error::invalid("output dimensions must be positive"));
        }
        let forward = center.to_unit_vector();
        let (so, co) = center.lon().sin_cos();
        let right = [co, 0.0, -so];
        let up = vec3::cross(forward, right);
        Ok(GnomonicCamera {
            center,
            fov_h,
            fov_v,
            out_w,
            out_h,
            forward,
            right,
            up,
            tan_h: (fov_h.to_radians() * 0.5).tan(),
            tan_v: (fov_v.to_radians() * 0.5).tan(),
        })
    }

    pub fn center(&self) -> SphericalPoint {
        self.center
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.out_w, self.out_h)
    }

    /// Viewing ray through output pixel position `(x, y)` (pixel centers at integers).
    #[inline]
    pub fn ray(&self, x: f64, y: f64) -> Vec3 {
        let px = (2.0 * (x + 0.5) / self.out_w as f64 - 1.0) * self.tan_h;
        let py = (1.0 - 2.0 * (y + 0.5) / self.out_h as f64) * self.tan_v;
        vec3::add(
            self.forward,
            vec3::add(vec3::scale(self.right, px), vec3::scale(self.up, py)),
        )
    }

    /// Output pixel position of a direction, or `None` for directions at or
    /// behind the image plane.
    pub fn project(&self, d: Vec3) -> Option<(f64, f64)> {
        let depth = vec3::dot(d, self.forward);
        if depth <= 1e-12 {
            return None;
        }
        let px = vec3::dot(d, self.right) / depth / self.tan_h;
        let py = vec3::dot(d, self.up) / depth / self.tan_v;
        Some((
            (px + 1.0) * 0.5 * self.out_w as f64 - 0.5,
            (1.0 - py) * 0.5 * self.out_h as f64 - 0.5,
        ))
    }
}

/// A rendered normal-field-of-view view of an ERP frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NfovImage {
    pub image: Image,
    pub center: SphericalPoint,
    pub fov_h: f64,
    pub fov_v: f64,
}

impl NfovImage {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Rectilinear view of `frame` centered on `center`.
pub fn gnomonic_project(
    frame: &ErpFrame,
    center: SphericalPoint,
    fov_h: f64,
    fov_v: f64,
    out_w: usize,
    out_h: usize,
) -> Result<NfovImage> {
    let camera = GnomonicCamera::new(center, fov_h, fov_v, out_w, out_h)?;
    Ok(render_view(frame, &camera))
}

pub(crate) fn render_view(frame: &ErpFrame, camera: &GnomonicCamera) -> NfovImage {
    let c = frame.channels().count();
    let (out_w, out_h) = camera.output_dims();
    let mut data = vec![0u8; out_w * out_h * c];
    data.par_chunks_mut(out_w * c).enumerate().for_each(|(y, row)| {
        let mut px = [0.0; 3];
        for x in 0..out_w {
            sample_erp(frame, camera.ray(x as f64, y as f64), &mut px);
            for k in 0..c {
                row[x * c + k] = quantize(px[k]);
            }
        }
    });
    NfovImage {
        image: Image::new(out_w, out_h, frame.channels(), data).expect("buffer sized above"),
        center: camera.center,
        fov_h: camera.fov_h,
        fov_v: camera.fov_v,
    }
}
