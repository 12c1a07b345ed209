//! Coulomb potential by direct convolution, field energies and H^-1 norms.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::scalar::Real;

/// Fundamental solution of `-Δ` in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoulombKernel {
    /// `K(x) = -|x| / 2`.
    D1,
    /// `K(x) = -log|x| / (2π)`.
    D2,
    /// `K(x) = 1 / (4π |x|)`.
    D3,
}

impl CoulombKernel {
    pub fn dimension(self) -> usize {
        match self {
            Self::D1 => 1,
            Self::D2 => 2,
            Self::D3 => 3,
        }
    }

    pub fn for_dimension(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Self::D1),
            2 => Ok(Self::D2),
            3 => Ok(Self::D3),
            _ => Err(Error::InvalidParameter(format!("dimension {d} not in {{1, 2, 3}}"))),
        }
    }

    /// Kernel value at the point `x` (length must equal the dimension).
    pub fn eval<T: Real>(self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dimension());
        let r = norm(x);
        match self {
            Self::D1 => -r / T::lit(2.0),
            Self::D2 => -r.ln() / (T::lit(2.0) * T::PI()),
            Self::D3 => T::one() / (T::lit(4.0) * T::PI() * r),
        }
    }

    /// Kernel gradient; the d = 1 gradient is taken as 0 at the origin.
    pub fn grad<T: Real>(self, x: &[T]) -> Vec<T> {
        let r = norm(x);
        match self {
            Self::D1 => vec![-sign0(x[0]) / T::lit(2.0)],
            Self::D2 => {
                let c = -T::one() / (T::lit(2.0) * T::PI() * r * r);
                x.iter().map(|&xi| c * xi).collect()
            }
            Self::D3 => {
                let c = -T::one() / (T::lit(4.0) * T::PI() * r * r * r);
                x.iter().map(|&xi| c * xi).collect()
            }
        }
    }

    /// Volume of the unit ball in this dimension, `π^{d/2} / Γ(d/2 + 1)`.
    pub fn unit_ball_volume(self) -> f64 {
        match self {
            Self::D1 => 2.0,
            Self::D2 => std::f64::consts::PI,
            Self::D3 => 4.0 * std::f64::consts::PI / 3.0,
        }
    }
}

fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&xi| xi * xi).sum::<T>().sqrt()
}

#[inline]
fn sign0<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Potential, field and field energy on a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T> {
    pub phi: Vec<T>,
    pub grad_phi: Vec<T>,
    pub electric_energy: T,
    x_min: T,
    dx: T,
}

impl<T: Real> FieldState<T> {
    fn matches(&self, other: &Self) -> bool {
        self.phi.len() == other.phi.len() && self.x_min == other.x_min && self.dx == other.dx
    }

    /// Field with every entry zero (interaction switched off).
    pub fn zero(grid: &SpatialGrid<T>) -> Self {
        Self {
            phi: vec![T::zero(); grid.len()],
            grad_phi: vec![T::zero(); grid.len()],
            electric_energy: T::zero(),
            x_min: grid.x_min(),
            dx: grid.dx(),
        }
    }

    /// Field with `grad_phi` negated (and `phi`), for algebraic fixtures.
    pub fn negated(&self) -> Self {
        Self {
            phi: self.phi.iter().map(|&p| -p).collect(),
            grad_phi: self.grad_phi.iter().map(|&p| -p).collect(),
            ..self.clone()
        }
    }
}

const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Solves `-Φ'' = ρ` on a 1-D grid by midpoint convolution with `-|x|/2`.
///
/// `Φ_i = Δx Σ_k K(x_i - x_k) ρ_k` and `Φ'_i = Δx Σ_k K'(x_i - x_k) ρ_k`
/// with `K'(0) = 0`. Each output cell is summed in ascending `k`.
pub fn solve_poisson<T: Real>(
    grid: &SpatialGrid<T>,
    rho: &[T],
    kernel: CoulombKernel,
) -> Result<FieldState<T>> {
    if kernel != CoulombKernel::D1 {
        return Err(Error::InvalidParameter(format!(
            "grid Poisson solve supports d = 1 only, got d = {}",
            kernel.dimension()
        )));
    }
    if rho.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "density has {} cells, grid has {}",
            rho.len(),
            grid.len()
        )));
    }
    for (index, &r) in rho.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if r < -T::lit(NEGATIVE_TOLERANCE) {
            return Err(Error::NegativeDensity {
                index,
                value: r.to_f64_lossy(),
            });
        }
    }
    Ok(solve_poisson_unchecked(grid, rho))
}

pub(crate) fn solve_poisson_unchecked<T: Real>(grid: &SpatialGrid<T>, rho: &[T]) -> FieldState<T> {
    let n = grid.len();
    let dx = grid.dx();
    let half = T::lit(0.5);
    // K((i - k) dx) depends on |i - k| only.
    let table: Vec<T> = (0..n).map(|m| -half * T::from_usize_lossy(m) * dx).collect();
    let mut phi = vec![T::zero(); n];
    let mut grad_phi = vec![T::zero(); n];
    for i in 0..n {
        let mut p = T::zero();
        let mut g = T::zero();
        for (k, &r) in rho.iter().enumerate() {
            let m = i.abs_diff(k);
            p = p + table[m] * r;
            if k < i {
                g = g - half * r;
            } else if k > i {
                g = g + half * r;
            }
        }
        phi[i] = p * dx;
        grad_phi[i] = g * dx;
    }
    let electric_energy = grid.quad_unchecked(&grad_phi.iter().map(|&g| g * g).collect::<Vec<_>>());
    FieldState {
        phi,
        grad_phi,
        electric_energy,
        x_min: grid.x_min(),
        dx,
    }
}

/// `∫ |∇Φ_a - ∇Φ_b|² dx`.
pub fn electric_energy_diff<T: Real>(a: &FieldState<T>, b: &FieldState<T>) -> Result<T> {
    if !a.matches(b) {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    let s: T = a
        .grad_phi
        .iter()
        .zip(&b.grad_phi)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(s * a.dx)
}

const MASS_MATCH: f64 = 1e-10;

fn check_equal_mass<T: Real>(grid: &SpatialGrid<T>, a: &[T], b: &[T]) -> Result<()> {
    let ma = grid.quad(a)?;
    let mb = grid.quad(b)?;
    if (ma - mb).abs() > T::lit(MASS_MATCH) {
        return Err(Error::MassMismatch {
            a: ma.to_f64_lossy(),
            b: mb.to_f64_lossy(),
        });
    }
    Ok(())
}

/// `‖∇(Φ_a - Φ_b)‖_{L²}`, the H^-1 surrogate for `ρ_a - ρ_b`.
pub fn hminus1_norm<T: Real>(grid: &SpatialGrid<T>, rho_a: &[T], rho_b: &[T]) -> Result<T> {
    check_equal_mass(grid, rho_a, rho_b)?;
    let fa = solve_poisson(grid, rho_a, CoulombKernel::D1)?;
    let fb = solve_poisson(grid, rho_b, CoulombKernel::D1)?;
    Ok(electric_energy_diff(&fa, &fb)?.sqrt())
}

/// Dual norm `sup { ∫ψ g : ‖ψ‖_{H¹} ≤ 1 }` of `g = ρ_a - ρ_b`, computed as
/// `(∫ g w)^{1/2}` with `(1 - ∂²) w = g` (three-point Laplacian, zero outside
/// the box).
pub fn hminus1_dual_norm<T: Real>(grid: &SpatialGrid<T>, rho_a: &[T], rho_b: &[T]) -> Result<T> {
    check_equal_mass(grid, rho_a, rho_b)?;
    let g: Vec<T> = rho_a.iter().zip(rho_b).map(|(&a, &b)| a - b).collect();
    let dx2 = grid.dx() * grid.dx();
    let off = -T::one() / dx2;
    let diag = T::one() + T::lit(2.0) / dx2;
    let w = solve_tridiagonal_constant(off, diag, off, &g);
    let s = grid.quad_unchecked(&g.iter().zip(&w).map(|(&a, &b)| a * b).collect::<Vec<_>>());
    Ok(s.max(T::zero()).sqrt())
}

/// Thomas algorithm for a constant-coefficient tridiagonal system.
fn solve_tridiagonal_constant<T: Real>(lower: T, diag: T, upper: T, rhs: &[T]) -> Vec<T> {
    let n = rhs.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = upper / diag;
    d[0] = rhs[0] / diag;
    for i in 1..n {
        let m = diag - lower * c[i - 1];
        c[i] = upper / m;
        d[i] = (rhs[i] - lower * d[i - 1]) / m;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
