//! Real-valued rasters over a rectangular window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Real part of the incident field.
    IncidentReal,
    /// Real part of the scattered field.
    ScatteredReal,
    /// Modulus of the total field.
    Amplitude,
    /// Modulus of a synthetic target field.
    Synthetic,
}

impl ChannelKind {
    pub fn code(self) -> u8 {
        match self {
            ChannelKind::IncidentReal => 0,
            ChannelKind::ScatteredReal => 1,
            ChannelKind::Amplitude => 2,
            ChannelKind::Synthetic => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => ChannelKind::IncidentReal,
            1 => ChannelKind::ScatteredReal,
            2 => ChannelKind::Amplitude,
            3 => ChannelKind::Synthetic,
            _ => return Err(Error::Format(format!("unknown channel kind {code}"))),
        })
    }
}

/// Cell-centred sample layout: `width` columns along x and `height` rows along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub window: Rect,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(window: Rect, width: usize, height: usize) -> Result<Self> {
        window.validate()?;
        if width < 2 || height < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution {width}x{height} (need at least 2x2)"
            )));
        }
        if window.width() <= 0.0 || window.height() <= 0.0 {
            return Err(Error::InvalidGeometry("grid window has zero area".into()));
        }
        Ok(Self {
            window,
            width,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            self.window.width() / self.width as f64,
            self.window.height() / self.height as f64,
        )
    }

    /// Centre of cell `(col, row)`.
    pub fn point(&self, col: usize, row: usize) -> Point {
        let (dx, dy) = self.cell_size();
        [
            self.window.x_min + (col as f64 + 0.5) * dx,
            self.window.y_min + (row as f64 + 0.5) * dy,
        ]
    }

    /// Centre of the cell at flat index `row * width + col`.
    pub fn point_at(&self, index: usize) -> Point {
        self.point(index % self.width, index / self.width)
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point_at(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub kind: ChannelKind,
    /// Row-major, row index along y.
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn new(spec: GridSpec, kind: ChannelKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} grid",
                values.len(),
                spec.width,
                spec.height
            )));
        }
        Ok(Self { spec, kind, values })
    }

    pub fn from_fn(spec: GridSpec, kind: ChannelKind, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(spec.point_at(i))).collect();
        Self { spec, kind, values }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.spec.width + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
