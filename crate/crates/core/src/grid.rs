//! Truncated uniform meshes, midpoint quadrature and central differences.
//!
//! Phase-space arrays are stored x-major: the value at `(x_i, v_j)` lives at
//! `i * n_v + j`, so each velocity column of a spatial cell is contiguous.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cells per side counted by the boundary-mass monitor.
pub const BOUNDARY_CELLS: usize = 2;

/// Uniform cell-centred mesh on `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid<T> {
    x_min: T,
    x_max: T,
    dx: T,
    centers: Vec<T>,
}

impl<T: Real> SpatialGrid<T> {
    pub fn new(x_min: T, x_max: T, n_x: usize) -> Result<Self> {
        if n_x < 8 {
            return Err(Error::InvalidGrid(format!("n_x = {n_x} must be at least 8")));
        }
        if !(x_min < T::zero() && T::zero() < x_max) {
            return Err(Error::InvalidGrid(format!(
                "need x_min < 0 < x_max, got [{x_min}, {x_max}]"
            )));
        }
        let dx = (x_max - x_min) / T::from_usize_lossy(n_x);
        let half = T::lit(0.5);
        let centers = (0..n_x)
            .map(|i| x_min + (T::from_usize_lossy(i) + half) * dx)
            .collect();
        Ok(Self {
            x_min,
            x_max,
            dx,
            centers,
        })
    }

    /// Symmetric box `[-half_width, half_width]`.
    pub fn symmetric(half_width: T, n_x: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_x)
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    /// `Δx Σ values_i`, rejecting non-finite entries.
    pub fn quad(&self, values: &[T]) -> Result<T> {
        self.check_len(values)?;
        check_finite(values)?;
        Ok(self.quad_unchecked(values))
    }

    #[inline]
    pub(crate) fn quad_unchecked(&self, values: &[T]) -> T {
        values.iter().copied().sum::<T>() * self.dx
    }

    /// Second-order central differences; one-sided second-order stencils at
    /// the two end cells.
    pub fn grad(&self, values: &[T]) -> Result<Vec<T>> {
        self.check_len(values)?;
        check_finite(values)?;
        Ok(self.grad_unchecked(values))
    }

    pub(crate) fn grad_unchecked(&self, f: &[T]) -> Vec<T> {
        let n = f.len();
        let inv2dx = T::one() / (T::lit(2.0) * self.dx);
        let mut g = vec![T::zero(); n];
        for i in 1..n - 1 {
            g[i] = (f[i + 1] - f[i - 1]) * inv2dx;
        }
        let three = T::lit(3.0);
        let four = T::lit(4.0);
        g[0] = (-three * f[0] + four * f[1] - f[2]) * inv2dx;
        g[n - 1] = (three * f[n - 1] - four * f[n - 2] + f[n - 3]) * inv2dx;
        g
    }

    /// Mass held by the outermost [`BOUNDARY_CELLS`] cells on each side.
    pub fn boundary_mass(&self, density: &[T]) -> T {
        let n = density.len();
        let k = BOUNDARY_CELLS.min(n / 2);
        let edge: T = density[..k].iter().chain(&density[n - k..]).copied().sum();
        edge * self.dx
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.len() == other.len() && self.x_min == other.x_min && self.x_max == other.x_max
    }

    fn check_len(&self, values: &[T]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(())
    }
}

/// Symmetric uniform velocity mesh on `[-v_max, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid<T> {
    v_max: T,
    dv: T,
    centers: Vec<T>,
}

impl<T: Real> VelocityGrid<T> {
    pub fn new(v_max: T, n_v: usize) -> Result<Self> {
        if n_v < 8 {
            return Err(Error::InvalidGrid(format!("n_v = {n_v} must be at least 8")));
        }
        if !(v_max > T::zero()) || !v_max.is_finite() {
            return Err(Error::InvalidGrid(format!("v_max = {v_max} must be positive")));
        }
        let dv = T::lit(2.0) * v_max / T::from_usize_lossy(n_v);
        let half = T::lit(0.5);
        let centers = (0..n_v)
            .map(|j| -v_max + (T::from_usize_lossy(j) + half) * dv)
            .collect();
        Ok(Self { v_max, dv, centers })
    }

    /// Mesh whose extent is `c_v / sqrt(eps) + extra` and whose spacing
    /// satisfies `dv * sqrt(eps) <= h`. `n_v` is rounded up to an even count.
    pub fn resolving(eps: T, c_v: T, h: T, extra: T) -> Result<Self> {
        if c_v < T::lit(4.0) {
            return Err(Error::InvalidParameter(format!("c_v = {c_v} must be at least 4")));
        }
        let sqrt_eps = eps.sqrt();
        let v_max = c_v / sqrt_eps + extra.max(T::zero());
        let cells = (T::lit(2.0) * v_max * sqrt_eps / h).ceil();
        let mut n_v = cells.to_usize().unwrap_or(8).max(8);
        n_v += n_v % 2;
        Self::new(v_max, n_v)
    }

    /// Checks `v_max >= c_v / sqrt(eps)` with `c_v >= 4`.
    pub fn check_resolves(&self, eps: T, c_v: T) -> Result<()> {
        if c_v < T::lit(4.0) || self.v_max < c_v / eps.sqrt() {
            return Err(Error::InvalidGrid(format!(
                "v_max = {} does not resolve the equilibrium Maxwellian (need >= {} / sqrt({eps}))",
                self.v_max, c_v
            )));
        }
        Ok(())
    }

    pub fn v_max(&self) -> T {
        self.v_max
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dv(&self) -> T {
        self.dv
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    /// Largest |v_j| over cell centres.
    pub fn max_speed(&self) -> T {
        self.v_max - T::lit(0.5) * self.dv
    }

    pub fn quad(&self, values: &[T]) -> Result<T> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} velocity values, got {}",
                self.len(),
                values.len()
            )));
        }
        check_finite(values)?;
        Ok(values.iter().copied().sum::<T>() * self.dv)
    }
}

/// Tensor product of a spatial and a velocity mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid<T> {
    pub spatial: SpatialGrid<T>,
    pub velocity: VelocityGrid<T>,
}

impl<T: Real> PhaseGrid<T> {
    pub fn new(spatial: SpatialGrid<T>, velocity: VelocityGrid<T>) -> Self {
        Self { spatial, velocity }
    }

    pub fn n_x(&self) -> usize {
        self.spatial.len()
    }

    pub fn n_v(&self) -> usize {
        self.velocity.len()
    }

    pub fn len(&self) -> usize {
        self.n_x() * self.n_v()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> T {
        self.spatial.dx() * self.velocity.dv()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_v() + j
    }

    /// Evaluates `g(x_i, v_j)` on every cell.
    pub fn sample(&self, mut g: impl FnMut(T, T) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for &x in self.spatial.centers() {
            for &v in self.velocity.centers() {
                out.push(g(x, v));
            }
        }
        out
    }

    /// `Δx Δv Σ values_ij`, rejecting non-finite entries.
    pub fn quad(&self, values: &[T]) -> Result<T> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} phase values, got {}",
                self.len(),
                values.len()
            )));
        }
        check_finite(values)?;
        Ok(self.quad_unchecked(values))
    }

    pub(crate) fn quad_unchecked(&self, values: &[T]) -> T {
        // Column sums first so the reduction order matches the moment code.
        let n_v = self.n_v();
        let total: T = values
            .chunks_exact(n_v)
            .map(|col| col.iter().copied().sum::<T>())
            .sum();
        total * self.cell_volume()
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.spatial.same_as(&other.spatial) && self.velocity == other.velocity
    }
}

fn check_finite<T: Real>(values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
