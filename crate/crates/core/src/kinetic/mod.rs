//! Scaled Vlasov–Poisson–Fokker–Planck dynamics in one space and one
//! velocity dimension.
//!
//! The equation advanced here is
//!
//! ```text
//! ∂t f + v ∂x f − (1/ε) ∂v((v + V' + Φ') f) = ε^{-(2+δ)} ∂v((v − u) f + (1/ε) ∂v f),
//! −Φ'' = ρ,
//! ```
//!
//! split into free transport in `x`, the force drift `(1/ε)(V' + Φ')`
//! in `v`, and a relaxation substep that integrates friction plus the
//! nonlinear Fokker–Planck operator exactly.

mod collision;
mod params;
mod stepper;
mod transport;

pub use collision::{collision_step, collision_step_with, ou_kernel_width, CollisionMode};
pub use params::{Confinement, ScalingParams};
pub use stepper::{StepReport, VpfpStepper};
pub use transport::{force_step, transport_step, Boundary, TransportScheme};

use crate::error::{Error, Result};
use crate::fields::{solve_poisson_unchecked, FieldState};
use crate::grid::{PhaseGrid, SpatialGrid, VelocityGrid};
use crate::scalar::{Real, RHO_FLOOR};

/// Phase-space density with its time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState<T> {
    pub f: Vec<T>,
    pub t: T,
}

impl<T: Real> KineticState<T> {
    /// Wraps `f`, checking length, finiteness and nonnegativity.
    pub fn new(grid: &PhaseGrid<T>, f: Vec<T>, t: T) -> Result<Self> {
        if f.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "f has {} entries, phase grid has {}",
                f.len(),
                grid.len()
            )));
        }
        if let Some(index) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some((index, &value)) = f.iter().enumerate().find(|(_, v)| **v < T::zero()) {
            return Err(Error::Positivity {
                index,
                value: value.to_f64_lossy(),
            });
        }
        Ok(Self { f, t })
    }

    pub fn mass(&self, grid: &PhaseGrid<T>) -> T {
        grid.quad_unchecked(&self.f)
    }

    /// Smallest entry and its flat index.
    pub fn min_value(&self) -> (usize, T) {
        self.f
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::infinity()), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    }

    pub fn max_value(&self) -> T {
        self.f.iter().copied().fold(T::zero(), T::max)
    }

    /// Checks `f >= 0` and `|mass - 1| <= mass_tol`.
    pub fn check_invariants(&self, grid: &PhaseGrid<T>, mass_tol: T) -> Result<()> {
        let (index, value) = self.min_value();
        if value < T::zero() {
            return Err(Error::Positivity {
                index,
                value: value.to_f64_lossy(),
            });
        }
        let mass = self.mass(grid);
        if (mass - T::one()).abs() > mass_tol {
            return Err(Error::MassMismatch {
                a: mass.to_f64_lossy(),
                b: 1.0,
            });
        }
        Ok(())
    }
}

/// Density, momentum and regularized bulk velocity of `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet<T> {
    pub rho: Vec<T>,
    pub momentum: Vec<T>,
    pub u: Vec<T>,
    /// `∫ ρu dx`.
    pub total_momentum: T,
}

pub fn moments<T: Real>(grid: &PhaseGrid<T>, f: &[T]) -> MomentSet<T> {
    let n_v = grid.n_v();
    let dv = grid.velocity.dv();
    let vs = grid.velocity.centers();
    let floor = T::lit(RHO_FLOOR);
    let mut rho = Vec::with_capacity(grid.n_x());
    let mut momentum = Vec::with_capacity(grid.n_x());
    let mut u = Vec::with_capacity(grid.n_x());
    for col in f.chunks_exact(n_v) {
        let r = col.iter().copied().sum::<T>() * dv;
        let m = col.iter().zip(vs).map(|(&fv, &v)| fv * v).sum::<T>() * dv;
        rho.push(r);
        momentum.push(m);
        u.push(if r >= floor { m / r } else { T::zero() });
    }
    let total_momentum = grid.spatial.quad_unchecked(&momentum);
    MomentSet {
        rho,
        momentum,
        u,
        total_momentum,
    }
}

/// Local Maxwellian `M(v) = (ε/2π)^{1/2} exp(−ε|u − v|²/2)` with
/// temperature `1/ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maxwellian<T> {
    pub eps: T,
}

impl<T: Real> Maxwellian<T> {
    pub fn new(eps: T) -> Self {
        Self { eps }
    }

    pub fn density(&self, u: T, v: T) -> T {
        let d = v - u;
        (self.eps / (T::lit(2.0) * T::PI())).sqrt() * (-self.eps * d * d / T::lit(2.0)).exp()
    }

    /// `∫ M log M dv = ½ log(ε/2π) − ½`.
    pub fn entropy(&self) -> T {
        T::lit(0.5) * (self.eps / (T::lit(2.0) * T::PI())).ln() - T::lit(0.5)
    }

    /// Column `ρ M_u(v_j)` rescaled so that `Δv Σ_j` equals `rho` exactly.
    pub fn discrete_column(&self, grid: &VelocityGrid<T>, rho: T, u: T) -> Vec<T> {
        let raw: Vec<T> = grid.centers().iter().map(|&v| self.density(u, v)).collect();
        let total = raw.iter().copied().sum::<T>() * grid.dv();
        if total > T::zero() {
            raw.into_iter().map(|m| m * rho / total).collect()
        } else {
            raw.into_iter().map(|_| T::zero()).collect()
        }
    }

    /// Phase-space density `ρ(x_i) M_{u(x_i)}(v_j)` built column by column.
    pub fn local_equilibrium(&self, grid: &PhaseGrid<T>, rho: &[T], u: &[T]) -> Vec<T> {
        let mut f = Vec::with_capacity(grid.len());
        for (&r, &ui) in rho.iter().zip(u) {
            f.extend(self.discrete_column(&grid.velocity, r, ui));
        }
        f
    }
}

/// Per-cell pressure deviation `ρ u² − ∫ v² f dv + ρ/ε`.
pub fn pressure_deviation<T: Real>(grid: &PhaseGrid<T>, f: &[T], eps: T) -> Vec<T> {
    let mom = moments(grid, f);
    let dv = grid.velocity.dv();
    let vs = grid.velocity.centers();
    f.chunks_exact(grid.n_v())
        .zip(mom.rho.iter().zip(&mom.u))
        .map(|(col, (&r, &u))| {
            let second = col.iter().zip(vs).map(|(&fv, &v)| fv * v * v).sum::<T>() * dv;
            r * u * u - second + r / eps
        })
        .collect()
}

/// `e = ∂x ∫ (u² − v² + 1/ε) f dv`, the deviation of the momentum flux from
/// its Maxwellian closure.
pub fn error_term_e<T: Real>(grid: &PhaseGrid<T>, f: &[T], eps: T) -> Vec<T> {
    grid.spatial.grad_unchecked(&pressure_deviation(grid, f, eps))
}

/// Self-consistent field for the density `rho`, or zero when the interaction
/// is switched off.
pub fn field_for<T: Real>(
    grid: &SpatialGrid<T>,
    rho: &[T],
    params: &ScalingParams<T>,
) -> FieldState<T> {
    if params.interaction {
        solve_poisson_unchecked(grid, rho)
    } else {
        FieldState::zero(grid)
    }
}
