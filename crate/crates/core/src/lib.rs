pub mod dataset;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod hyperopt;
pub mod inverse;
pub mod linalg;
pub mod losses;
pub mod plate;
pub mod problems;
pub mod scatter;
pub mod specfun;
pub mod spline;

pub use error::{Error, Result};
pub use geometry::{Point, Rect};
