use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plate, in meters.
pub type Point = [f64; 2];

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn centered(center: Point, width: f64, height: f64) -> Self {
        Self::new(
            center[0] - 0.5 * width,
            center[0] + 0.5 * width,
            center[1] - 0.5 * height,
            center[1] + 0.5 * height,
        )
    }

    pub fn point(p: Point) -> Self {
        Self::new(p[0], p[0], p[1], p[1])
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(Error::InvalidGeometry(format!("empty or non-finite box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn clamp(&self, p: Point) -> Point {
        [
            p[0].clamp(self.x_min, self.x_max),
            p[1].clamp(self.y_min, self.y_max),
        ]
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
            [self.x_min, self.y_max],
            [self.x_max, self.y_max],
        ]
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x_min.min(other.x_min),
            self.x_max.max(other.x_max),
            self.y_min.min(other.y_min),
            self.y_max.max(other.y_max),
        )
    }

    pub fn expand(&self, margin: f64) -> Rect {
        Rect::new(
            self.x_min - margin,
            self.x_max + margin,
            self.y_min - margin,
            self.y_max + margin,
        )
    }

    /// Smallest distance between any two points of the boxes (0 if they overlap).
    pub fn min_distance(&self, other: &Rect) -> f64 {
        let dx = (other.x_min - self.x_max).max(self.x_min - other.x_max).max(0.0);
        let dy = (other.y_min - self.y_max).max(self.y_min - other.y_max).max(0.0);
        dx.hypot(dy)
    }

    /// Largest distance between any two points of the boxes.
    pub fn max_distance(&self, other: &Rect) -> f64 {
        let dx = (other.x_max - self.x_min).max(self.x_max - other.x_min);
        let dy = (other.y_max - self.y_min).max(self.y_max - other.y_min);
        dx.hypot(dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_distances() {
        let a = Rect::new(0.0, 1.0, 0.0, 1.0);
        let b = Rect::new(4.0, 5.0, 5.0, 6.0);
        assert_eq!(a.min_distance(&b), 5.0);
        assert_eq!(a.max_distance(&b), 5.0f64.hypot(6.0));
        assert_eq!(a.min_distance(&a), 0.0);
        assert_eq!(a.max_distance(&a), a.diameter());
        assert_eq!(Rect::point([3.0, 4.0]).max_distance(&Rect::point([0.0, 0.0])), 5.0);
    }

    #[test]
    fn validation() {
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).validate().is_err());
        assert!(Rect::new(0.0, 0.0, 0.0, 0.0).validate().is_ok());
        assert!(Rect::new(0.0, f64::NAN, 0.0, 1.0).validate().is_err());
    }
}
