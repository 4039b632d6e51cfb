//! Dense vectors and the iterate pair `z = (x, y)`, plus projection onto
//! Euclidean balls.

use std::fmt;

use thiserror::Error;

/// Slack allowed when checking that a point lies inside a ball.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vectors must have at least one entry")]
    Empty,
    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("ball radius must be finite and nonnegative, got {0}")]
    InvalidRadius(f64),
}

/// A dense real vector with at least one entry.
///
/// Constructors reject NaN and infinities. Arithmetic helpers do not re-check,
/// callers that may overflow test [`Vector::is_finite`].
#[derive(Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self, GeometryError> {
        if entries.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some((index, &value)) = entries.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GeometryError::NonFinite { index, value });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional vector");
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim > 0, "zero-dimensional vector");
        Self(vec![value; dim])
    }

    /// Wraps entries produced by internal arithmetic.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(!entries.is_empty());
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, factor: f64) -> Vector {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + factor * direction`
    pub fn axpy(&self, factor: f64, direction: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), direction.dim());
        Self(
            self.0
                .iter()
                .zip(&direction.0)
                .map(|(a, d)| a + factor * d)
                .collect(),
        )
    }

    pub fn distance_sq(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<(), GeometryError> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// Closed Euclidean ball `{v : ‖v‖ ≤ radius}` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSet {
    radius: f64,
    dim: usize,
}

impl BallSet {
    pub fn new(radius: f64, dim: usize) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(GeometryError::InvalidRadius(radius));
        }
        if dim == 0 {
            return Err(GeometryError::Empty);
        }
        Ok(Self { radius, dim })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        v.dim() == self.dim && v.norm() <= self.radius + tol
    }

    /// Nearest point of the ball: `v` itself when inside, otherwise `v` scaled
    /// radially onto the sphere.
    pub fn project(&self, v: &Vector) -> Result<Vector, GeometryError> {
        v.check_dim(self.dim)?;
        let norm = v.norm();
        if norm <= self.radius {
            return Ok(v.clone());
        }
        let factor = self.radius / norm;
        // Rounding in the scale can leave the result a few ulps outside.
        let mut out = v.scale(factor);
        let out_norm = out.norm();
        if out_norm > self.radius {
            out = out.scale(self.radius / out_norm);
        }
        Ok(out)
    }
}

/// The joint iterate `z = (x, y)` of a min-max problem.
#[derive(Clone, PartialEq)]
pub struct IteratePair {
    pub x: Vector,
    pub y: Vector,
}

impl IteratePair {
    pub fn new(x: Vector, y: Vector) -> Self {
        Self { x, y }
    }

    pub fn zeros(dim_x: usize, dim_y: usize) -> Self {
        Self::new(Vector::zeros(dim_x), Vector::zeros(dim_y))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm_sq(&self) -> f64 {
        self.x.norm_sq() + self.y.norm_sq()
    }
}

impl fmt::Debug for IteratePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IteratePair")
            .field("x", &self.x)
            .field("y", &self.y)
            .finish()
    }
}

/// `‖a.x − b.x‖² + ‖a.y − b.y‖²`
pub fn pair_distance_sq(a: &IteratePair, b: &IteratePair) -> Result<f64, GeometryError> {
    b.x.check_dim(a.x.dim())?;
    b.y.check_dim(a.y.dim())?;
    Ok(a.x.distance_sq(&b.x) + a.y.distance_sq(&b.y))
}
