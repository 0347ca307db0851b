//! Cylindrical layout of the 2-D embedding around a listener at the origin.
//!
//! The embedding's x axis becomes the angle and its y axis the elevation:
//!
//! ```text
//! theta = 2π (x2D - x_min) / (x_max - x_min)
//! x3D = r cos(theta),  y3D = r sin(theta),  z3D = y2D
//! ```
//!
//! Coordinates use `z` as elevation. `x_min` and `x_max` both land on the
//! same horizontal position (`theta = 0` and `theta = 2π`); that pair is
//! reported by [`seam_pair`] instead of being moved.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RADIUS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("all points share x = {0}; the angular range is degenerate")]
    DegenerateRange(f64),
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("vertical range must satisfy z_lo < z_hi, got [{0}, {1}]")]
    InvalidVerticalRange(f64, f64),
    #[error("coordinates must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    pub segment_index: usize,
    pub theta: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub fn horizontal_radius(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

pub fn cylindrical_map(coords: &[[f64; 2]], radius: f64) -> Result<Vec<Point3D>, SpatialError> {
    if coords.len() < 2 {
        return Err(SpatialError::TooFewPoints(coords.len()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SpatialError::InvalidRadius(radius));
    }
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SpatialError::NonFinite);
    }
    let x_min = coords.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
    let x_max = coords.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
    if x_max <= x_min {
        return Err(SpatialError::DegenerateRange(x_min));
    }
    let span = x_max - x_min;
    Ok(coords
        .iter()
        .enumerate()
        .map(|(i, &[x2, y2])| {
            // Fraction first: the rightmost point gets exactly 1, hence exactly 2π.
            let theta = TAU * ((x2 - x_min) / span);
            Point3D {
                segment_index: i,
                theta,
                x: radius * theta.cos(),
                y: radius * theta.sin(),
                z: y2,
            }
        })
        .collect())
}

/// Segment indices of the leftmost and rightmost embedding points (lowest
/// index on ties), which share a horizontal position after mapping.
pub fn seam_pair(points: &[Point3D]) -> Option<(usize, usize)> {
    let first = points.iter().min_by(|a, b| a.theta.total_cmp(&b.theta))?;
    let last = points.iter().rev().max_by(|a, b| a.theta.total_cmp(&b.theta))?;
    (first.segment_index != last.segment_index).then_some((first.segment_index, last.segment_index))
}

/// Optional affine rescale of elevations into `[z_lo, z_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalFit {
    pub z_lo: f64,
    pub z_hi: f64,
}

/// Rescales `z` into `[z_lo, z_hi]`. With `fit == None` the points are returned
/// unchanged; if every `z` is equal they all move to the midpoint.
pub fn vertical_fit(points: &[Point3D], fit: Option<VerticalFit>) -> Result<Vec<Point3D>, SpatialError> {
    let Some(VerticalFit { z_lo, z_hi }) = fit else {
        return Ok(points.to_vec());
    };
    if !(z_lo < z_hi && z_lo.is_finite() && z_hi.is_finite()) {
        return Err(SpatialError::InvalidVerticalRange(z_lo, z_hi));
    }
    let lo = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    Ok(points
        .iter()
        .map(|p| {
            let z = if hi > lo {
                z_lo + (p.z - lo) / (hi - lo) * (z_hi - z_lo)
            } else {
                0.5 * (z_lo + z_hi)
            };
            Point3D { z, ..*p }
        })
        .collect())
}
