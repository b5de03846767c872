use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Uniform 1D grid on `[0, L]`.
///
/// A periodic grid with `include_endpoint` stores the point `x = L` as a copy
/// of `x = 0`, so `n_points` counts one more point than the grid has degrees
/// of freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub n_points: usize,
    pub length: f64,
    pub periodic: bool,
    pub include_endpoint: bool,
}

impl Grid1D {
    pub fn periodic(n_points: usize, length: f64) -> Result<Self> {
        Self::new(n_points, length, true, false)
    }

    pub fn periodic_with_endpoint(n_points: usize, length: f64) -> Result<Self> {
        Self::new(n_points, length, true, true)
    }

    pub fn new(n_points: usize, length: f64, periodic: bool, include_endpoint: bool) -> Result<Self> {
        let g = Self {
            n_points,
            length,
            periodic,
            include_endpoint,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 8 {
            return Err(Error::Config(format!("grid needs at least 8 points, got {}", self.n_points)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::Config(format!("domain length must be positive, got {}", self.length)));
        }
        if self.include_endpoint && !self.periodic {
            return Err(Error::Config("only periodic grids carry a duplicated endpoint".into()));
        }
        Ok(())
    }

    /// Points that are independent degrees of freedom.
    pub fn n_unique(&self) -> usize {
        if self.periodic && self.include_endpoint {
            self.n_points - 1
        } else {
            self.n_points
        }
    }

    pub fn dx(&self) -> f64 {
        if self.periodic {
            self.length / self.n_unique() as f64
        } else {
            self.length / (self.n_points - 1) as f64
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|i| i as f64 * dx).collect()
    }

    /// Coordinates as an `n × 1` tensor (sensor / query layout).
    pub fn coord_tensor(&self) -> Tensor {
        Tensor::matrix(self.n_points, 1, self.coords()).expect("n_points ≥ 8")
    }

    /// Drops the duplicated endpoint, if any.
    pub fn unique<'a>(&self, u: &'a [f64]) -> &'a [f64] {
        &u[..self.n_unique()]
    }

    /// Appends the duplicated endpoint when the grid stores one.
    pub fn expand(&self, unique: &[f64]) -> Vec<f64> {
        let mut out = unique.to_vec();
        if self.periodic && self.include_endpoint {
            out.push(unique[0]);
        }
        out
    }

    /// Trapezoid rule on the stored points; on a periodic grid this equals
    /// `dx · Σ` over the unique points.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        let dx = self.dx();
        if self.periodic {
            self.unique(u).iter().sum::<f64>() * dx
        } else {
            let n = u.len();
            dx * (u[1..n - 1].iter().sum::<f64>() + 0.5 * (u[0] + u[n - 1]))
        }
    }
}

/// Cell-centred grid on `[0,1]³` with the quadrant `x ≥ 1/2, y ≥ 1/2` removed
/// from every z-layer. Values are stored x-fastest: `idx = i + nx·(j + ny·k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Grid3D {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx < 4 || ny < 4 || nz < 2 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::Config(format!(
                "L-shape grid needs even nx, ny ≥ 4 and nz ≥ 2, got {nx}×{ny}×{nz}"
            )));
        }
        Ok(Self { nx, ny, nz })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [1.0 / self.nx as f64, 1.0 / self.ny as f64, 1.0 / self.nz as f64]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let [dx, dy, dz] = self.spacing();
        [(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy, (k as f64 + 0.5) * dz]
    }

    /// Whether the cell belongs to the L-shaped domain.
    pub fn active(&self, i: usize, j: usize, _k: usize) -> bool {
        let [x, y, _] = self.center(i, j, 0);
        !(x >= 0.5 && y >= 0.5)
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.len());
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    m.push(self.active(i, j, k));
                }
            }
        }
        m
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.mask().iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect()
    }

    /// Cell centres of the active cells, `n_active × 3`.
    pub fn active_coords(&self) -> Tensor {
        let mut out = Vec::new();
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    if self.active(i, j, k) {
                        out.extend_from_slice(&self.center(i, j, k));
                    }
                }
            }
        }
        let n = out.len() / 3;
        Tensor::matrix(n, 3, out).expect("grid has active cells")
    }

    pub fn cell_volume(&self) -> f64 {
        let [dx, dy, dz] = self.spacing();
        dx * dy * dz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burgers_grid_duplicates_endpoint() {
        let g = Grid1D::periodic_with_endpoint(101, 1.0).unwrap();
        assert_eq!(g.n_unique(), 100);
        assert!((g.dx() - 0.01).abs() < 1e-15);
        let c = g.coords();
        assert!((c[100] - 1.0).abs() < 1e-12);
        assert_eq!(g.expand(&[1.0; 100]).len(), 101);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::periodic(4, 1.0).is_err());
        assert!(Grid1D::periodic(16, 0.0).is_err());
        assert!(Grid1D::new(16, 1.0, false, true).is_err());
        let g = Grid1D::new(11, 1.0, false, false).unwrap();
        assert!((g.dx() - 0.1).abs() < 1e-15);
        assert!((g.integrate(&[1.0; 11]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn l_shape_removes_upper_right_quadrant() {
        let g = Grid3D::new(16, 16, 8).unwrap();
        let active = g.active_indices().len();
        assert_eq!(active, 3 * 8 * 8 * 8);
        assert!(g.active(7, 15, 0));
        assert!(!g.active(8, 8, 3));
        assert_eq!(g.active_coords().shape(), &[active, 3]);
    }
}
