//! Supported manifolds, points, tangent vectors and frames.
//!
//! The sphere is the unit sphere embedded in R³ and points are stored as unit
//! 3-vectors. Circles have circumference 2π and tori are products of such
//! circles, so their tangent spaces carry the global coordinate frame.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

/// Tolerance on ‖x‖ − 1 for sphere points.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Relative tolerance on x·v for sphere tangent vectors.
pub const TANGENCY_TOL: f64 = 1e-10;
/// Above this |x₃| the east/north frame is replaced by the pole frame.
pub const POLE_THRESHOLD: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Manifold {
    Sphere,
    Circle,
    Torus(usize),
}

impl Manifold {
    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Manifold::Sphere => 2,
            Manifold::Circle => 1,
            Manifold::Torus(d) => *d,
        }
    }

    /// Number of coordinates used for tangent vectors (3 for the sphere).
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Sphere => 3,
            _ => self.dim(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Manifold::Sphere => 4.0 * PI,
            Manifold::Circle => TAU,
            Manifold::Torus(d) => TAU.powi(*d as i32),
        }
    }

    /// Number of circle factors, treating the circle as a 1-torus.
    pub fn torus_dim(&self) -> Option<usize> {
        match self {
            Manifold::Sphere => None,
            Manifold::Circle => Some(1),
            Manifold::Torus(d) => Some(*d),
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Sphere => write!(f, "sphere"),
            Manifold::Circle => write!(f, "circle"),
            Manifold::Torus(d) => write!(f, "torus{d}"),
        }
    }
}

/// A point on a supported manifold in canonical coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum ManifoldPoint {
    Sphere(Vector3<f64>),
    Circle(f64),
    Torus(Vec<f64>),
}

/// Reduces an angle to [0, 2π).
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl ManifoldPoint {
    /// Sphere point from any nonzero 3-vector (normalised).
    pub fn sphere(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return invalid("sphere point must be a finite nonzero vector");
        }
        Ok(ManifoldPoint::Sphere(v / n))
    }

    pub fn circle(theta: f64) -> Self {
        ManifoldPoint::Circle(wrap_angle(theta))
    }

    pub fn torus(angles: &[f64]) -> Self {
        ManifoldPoint::Torus(angles.iter().map(|&a| wrap_angle(a)).collect())
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            ManifoldPoint::Sphere(_) => Manifold::Sphere,
            ManifoldPoint::Circle(_) => Manifold::Circle,
            ManifoldPoint::Torus(a) => Manifold::Torus(a.len()),
        }
    }

    pub fn as_sphere(&self) -> Result<&Vector3<f64>> {
        match self {
            ManifoldPoint::Sphere(x) => Ok(x),
            other => invalid(format!("expected a sphere point, got {}", other.manifold())),
        }
    }

    /// Angles of a circle or torus point (a circle yields one angle).
    pub fn angles(&self) -> Result<Vec<f64>> {
        match self {
            ManifoldPoint::Circle(t) => Ok(vec![*t]),
            ManifoldPoint::Torus(a) => Ok(a.clone()),
            ManifoldPoint::Sphere(_) => invalid("sphere points have no torus angles"),
        }
    }
}

/// A tangent vector: for the sphere ambient 3-vector components, for circles
/// and tori coefficients in the global frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, components: DVector<f64>) -> Result<Self> {
        let expected = base.manifold().ambient_dim();
        if components.len() != expected {
            return invalid(format!(
                "tangent vector on {} needs {expected} components, got {}",
                base.manifold(),
                components.len()
            ));
        }
        if let ManifoldPoint::Sphere(x) = &base {
            check_tangent(x, &Vector3::from_column_slice(components.as_slice()))?;
        }
        Ok(TangentVector { base, components })
    }

    pub fn sphere(x: Vector3<f64>, v: Vector3<f64>) -> Result<Self> {
        check_tangent(&x, &v)?;
        Ok(TangentVector {
            base: ManifoldPoint::Sphere(x),
            components: DVector::from_column_slice(v.as_slice()),
        })
    }

    pub fn as_vec3(&self) -> Result<Vector3<f64>> {
        match self.base {
            ManifoldPoint::Sphere(_) => Ok(Vector3::from_column_slice(self.components.as_slice())),
            _ => invalid("not a sphere tangent vector"),
        }
    }

    pub fn norm(&self) -> f64 {
        self.components.norm()
    }
}

fn check_tangent(x: &Vector3<f64>, v: &Vector3<f64>) -> Result<()> {
    let dot = x.dot(v).abs();
    if dot > TANGENCY_TOL * v.norm().max(f64::MIN_POSITIVE) && dot > 0.0 {
        return invalid(format!("vector is not tangent: |x·v| = {dot:.3e}"));
    }
    Ok(())
}

/// Orthonormal oriented frame of T_x S² with b₂ = x × b₁.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrame {
    pub base: Vector3<f64>,
    pub b1: Vector3<f64>,
    pub b2: Vector3<f64>,
}

impl TangentFrame {
    /// The 3×2 matrix [b₁ b₂].
    pub fn matrix(&self) -> Matrix3x2<f64> {
        Matrix3x2::from_columns(&[self.b1, self.b2])
    }

    /// Same base point, basis rotated by `angle` inside the tangent plane.
    pub fn rotated(&self, angle: f64) -> TangentFrame {
        let (s, c) = angle.sin_cos();
        let b1 = self.b1 * c + self.b2 * s;
        TangentFrame {
            base: self.base,
            b1,
            b2: self.base.cross(&b1),
        }
    }
}

/// (I − x xᵀ) v.
pub fn project_tangent(x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    v - x * x.dot(v)
}

/// The projection matrix I − x xᵀ.
pub fn projection_matrix(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - x * x.transpose()
}

/// Matrix of v ↦ x × v.
pub fn cross_matrix(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Hodge star of a tangent vector: rotation by +90° in the tangent plane.
///
/// On the sphere this is x × v. On the flat 2-torus it is (a, b) ↦ (−b, a).
pub fn hodge_star(v: &TangentVector) -> Result<TangentVector> {
    match &v.base {
        ManifoldPoint::Sphere(x) => {
            let w = v.as_vec3()?;
            check_tangent(x, &w)?;
            TangentVector::sphere(*x, x.cross(&w))
        }
        ManifoldPoint::Torus(a) if a.len() == 2 => Ok(TangentVector {
            base: v.base.clone(),
            components: DVector::from_vec(vec![-v.components[1], v.components[0]]),
        }),
        other => invalid(format!("Hodge star on 1-forms is only defined here for surfaces, got {}", other.manifold())),
    }
}

/// Deterministic frame: local east/north away from the poles, a frame derived
/// from e₁ near them.
pub fn frame_at(x: &Vector3<f64>) -> TangentFrame {
    let b1 = if x.z.abs() > POLE_THRESHOLD {
        project_tangent(x, &Vector3::x()).normalize()
    } else {
        Vector3::new(-x.y, x.x, 0.0).normalize()
    };
    TangentFrame {
        base: *x,
        b1,
        b2: x.cross(&b1),
    }
}

/// Frame as an (ambient × intrinsic) matrix: 3×2 on the sphere, identity on tori.
pub fn frame_matrix(p: &ManifoldPoint) -> DMatrix<f64> {
    match p {
        ManifoldPoint::Sphere(x) => {
            let m = frame_at(x).matrix();
            DMatrix::from_column_slice(3, 2, m.as_slice())
        }
        other => DMatrix::identity(other.manifold().dim(), other.manifold().dim()),
    }
}

/// Geographic (longitude, latitude) in degrees to a unit vector.
pub fn lonlat_to_point(lon_deg: f64, lat_deg: f64) -> Result<Vector3<f64>> {
    if !(-90.0..=90.0).contains(&lat_deg) || !lon_deg.is_finite() {
        return invalid(format!("latitude {lat_deg} outside [-90, 90] or bad longitude {lon_deg}"));
    }
    let (slon, clon) = lon_deg.to_radians().sin_cos();
    let (slat, clat) = lat_deg.to_radians().sin_cos();
    Ok(Vector3::new(clat * clon, clat * slon, slat))
}

/// Inverse of [`lonlat_to_point`], longitude in (−180, 180].
pub fn point_to_lonlat(x: &Vector3<f64>) -> (f64, f64) {
    let lat = x.z.clamp(-1.0, 1.0).asin().to_degrees();
    let lon = x.y.atan2(x.x).to_degrees();
    (lon, lat)
}

/// Builds u·east + v·north at x using [`frame_at`].
pub fn tangent_from_east_north(x: &Vector3<f64>, u_east: f64, v_north: f64) -> TangentVector {
    let f = frame_at(x);
    TangentVector {
        base: ManifoldPoint::Sphere(*x),
        components: DVector::from_column_slice((f.b1 * u_east + f.b2 * v_north).as_slice()),
    }
}

/// East and north components of an ambient tangent vector at x.
pub fn east_north_components(x: &Vector3<f64>, v: &Vector3<f64>) -> (f64, f64) {
    let f = frame_at(x);
    (f.b1.dot(v), f.b2.dot(v))
}

/// Uniform sphere point from a normalised 3-d Gaussian.
pub fn uniform_sphere_point<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// `n` i.i.d. points, uniform with respect to the Riemannian volume.
pub fn sample_uniform<R: Rng + ?Sized>(manifold: Manifold, n: usize, rng: &mut R) -> Vec<ManifoldPoint> {
    (0..n)
        .map(|_| match manifold {
            Manifold::Sphere => ManifoldPoint::Sphere(uniform_sphere_point(rng)),
            Manifold::Circle => ManifoldPoint::circle(rng.random::<f64>() * TAU),
            Manifold::Torus(d) => {
                let a: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * TAU).collect();
                ManifoldPoint::torus(&a)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hemisphere {
    North,
    South,
}

/// Uniform points on one closed hemisphere (reflection of uniform sphere draws).
pub fn sample_hemisphere<R: Rng + ?Sized>(hemi: Hemisphere, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            let mut x = uniform_sphere_point(rng);
            let flip = match hemi {
                Hemisphere::North => x.z < 0.0,
                Hemisphere::South => x.z > 0.0,
            };
            if flip {
                x.z = -x.z;
            }
            x
        })
        .collect()
}
