//! Regular transverse grids and sampling helpers.

use std::ops::{Add, Mul};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex field sampled on a [`Grid2D`]; shape `(ny, nx)`, row index is `y`.
pub type ComplexField = Array2<Complex64>;
/// Real field sampled on a [`Grid2D`]; shape `(ny, nx)`.
pub type RealField = Array2<f64>;

/// Uniform pixel grid centred on the hole axis.
///
/// Pixel `(ix, iy)` sits at `x = (ix - nx/2)·dx`, `y = (iy - ny/2)·dy`, so the
/// pixel `(nx/2, ny/2)` is exactly the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    extent_x: f64,
    extent_y: f64,
}

impl Grid2D {
    /// `extent_*` are physical half-widths in metres.
    pub fn new(nx: usize, ny: usize, extent_x: f64, extent_y: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 16 || n % 2 != 0 {
                return Err(Error::domain(format!("{name} = {n}: must be even and >= 16")));
            }
        }
        if !(extent_x > 0.0 && extent_y > 0.0 && extent_x.is_finite() && extent_y.is_finite()) {
            return Err(Error::domain("grid extents must be positive and finite"));
        }
        Ok(Self {
            nx,
            ny,
            extent_x,
            extent_y,
        })
    }

    pub fn square(n: usize, extent: f64) -> Result<Self> {
        Self::new(n, n, extent, extent)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }

    pub fn extent_y(&self) -> f64 {
        self.extent_y
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.extent_x / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * self.extent_y / self.ny as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Array shape `(ny, nx)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.dy()
    }

    /// Largest radius whose full circle about the origin stays on the grid.
    pub fn max_inscribed_radius(&self) -> f64 {
        ((self.nx / 2 - 1) as f64 * self.dx()).min((self.ny / 2 - 1) as f64 * self.dy())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let fx = x / self.dx() + (self.nx / 2) as f64;
        let fy = y / self.dy() + (self.ny / 2) as f64;
        fx >= 0.0 && fy >= 0.0 && fx <= (self.nx - 1) as f64 && fy <= (self.ny - 1) as f64
    }

    pub fn check_field<T>(&self, field: &Array2<T>, what: &str) -> Result<()> {
        if field.dim() != self.shape() {
            return Err(Error::shape(format!(
                "{what} has shape {:?}, grid expects {:?}",
                field.dim(),
                self.shape()
            )));
        }
        Ok(())
    }

    pub fn ensure_same(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::shape(format!("{what}: grids differ ({self:?} vs {other:?})")));
        }
        Ok(())
    }

    /// Evaluates `f(x, y)` at every pixel, in parallel over rows.
    pub fn map<T, F>(&self, f: F) -> Array2<T>
    where
        T: Send + Clone + Default,
        F: Fn(f64, f64) -> T + Sync,
    {
        let mut out = Array2::<T>::default(self.shape());
        ndarray::Zip::indexed(&mut out).par_for_each(|(iy, ix), v| {
            *v = f(self.x(ix), self.y(iy));
        });
        out
    }
}

/// Values that bilinear interpolation can blend.
pub trait Blend: Copy + Add<Output = Self> + Mul<f64, Output = Self> {}
impl Blend for f64 {}
impl Blend for Complex64 {}

/// Bilinear interpolation at physical `(x, y)`; `None` off the grid.
///
/// Exactly on a node the node value is returned unchanged.
pub fn bilinear<T: Blend>(field: &Array2<T>, grid: &Grid2D, x: f64, y: f64) -> Option<T> {
    let fx = x / grid.dx() + (grid.nx / 2) as f64;
    let fy = y / grid.dy() + (grid.ny / 2) as f64;
    if !(fx >= 0.0 && fy >= 0.0 && fx <= (grid.nx - 1) as f64 && fy <= (grid.ny - 1) as f64) {
        return None;
    }
    let ix = (fx.floor() as usize).min(grid.nx - 1);
    let iy = (fy.floor() as usize).min(grid.ny - 1);
    let tx = fx - ix as f64;
    let ty = fy - iy as f64;
    let ix1 = if tx > 0.0 { ix + 1 } else { ix };
    let iy1 = if ty > 0.0 { iy + 1 } else { iy };
    let row0 = if tx > 0.0 {
        field[[iy, ix]] * (1.0 - tx) + field[[iy, ix1]] * tx
    } else {
        field[[iy, ix]]
    };
    if ty == 0.0 {
        return Some(row0);
    }
    let row1 = if tx > 0.0 {
        field[[iy1, ix]] * (1.0 - tx) + field[[iy1, ix1]] * tx
    } else {
        field[[iy1, ix]]
    };
    Some(row0 * (1.0 - ty) + row1 * ty)
}
