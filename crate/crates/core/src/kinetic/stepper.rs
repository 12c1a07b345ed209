use crate::error::{Error, Result};
use crate::fields::FieldState;
use crate::grid::PhaseGrid;
use crate::scalar::Real;

use super::collision::{collision_step_with, ou_kernel_width, CollisionMode};
use super::transport::{cfl_limits, force_step, transport_step, Boundary, TransportScheme};
use super::{field_for, moments, KineticState, ScalingParams};

/// What one full step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport<T> {
    pub dt: T,
    /// Mass removed through the spatial ends during this step.
    pub outflow: T,
    /// Mass in the outermost cells relative to total mass, after the step.
    pub boundary_fraction: T,
    /// Standard deviation of the relaxation kernel used.
    pub kernel_width: T,
}

/// Strang-split VPFP integrator:
/// transport(dt/2), force(dt/2), relaxation(dt), force(dt/2), transport(dt/2),
/// with the Poisson field refreshed before each force substep.
#[derive(Debug, Clone)]
pub struct VpfpStepper<T> {
    pub grid: PhaseGrid<T>,
    pub params: ScalingParams<T>,
    pub scheme: TransportScheme,
    pub boundary: Boundary,
    pub collision: CollisionMode,
    /// Fraction of the smaller CFL limit used by [`Self::stable_dt`].
    pub cfl_fraction: T,
    /// Abort when the boundary mass fraction exceeds this.
    pub boundary_limit: Option<T>,
    /// Abort when the relaxation kernel is narrower than this many `Δv`.
    pub min_kernel_cells: Option<T>,
    outflow_total: T,
}

impl<T: Real> VpfpStepper<T> {
    pub fn new(grid: PhaseGrid<T>, params: ScalingParams<T>) -> Self {
        Self {
            grid,
            params,
            scheme: TransportScheme::default(),
            boundary: Boundary::default(),
            collision: CollisionMode::default(),
            cfl_fraction: T::lit(0.5),
            boundary_limit: Some(T::lit(1e-8)),
            min_kernel_cells: Some(T::one()),
            outflow_total: T::zero(),
        }
    }

    /// Self-consistent field of `f`.
    pub fn field(&self, f: &[T]) -> FieldState<T> {
        let rho = moments(&self.grid, f).rho;
        field_for(&self.grid.spatial, &rho, &self.params)
    }

    /// `cfl_fraction · min(CFL_x, CFL_v)` for the current field.
    pub fn stable_dt(&self, f: &[T]) -> T {
        let (dx, dv) = cfl_limits(&self.grid, &self.field(f), &self.params);
        self.cfl_fraction * dx.min(dv)
    }

    /// Total mass that has left through the spatial ends so far.
    pub fn outflow_total(&self) -> T {
        self.outflow_total
    }

    pub fn step(&mut self, state: &mut KineticState<T>, dt: T) -> Result<StepReport<T>> {
        let half = dt * T::lit(0.5);
        let width = ou_kernel_width(&self.params, dt);
        if let Some(cells) = self.min_kernel_cells {
            let dv = self.grid.velocity.dv();
            if width < cells * dv {
                return Err(Error::UnderResolved {
                    t: state.t.to_f64_lossy(),
                    width: width.to_f64_lossy(),
                    dv: dv.to_f64_lossy(),
                });
            }
        }
        let g = &self.grid;
        let f = &mut state.f;
        let mut outflow = transport_step(g, f, half, self.scheme, self.boundary)?;
        let field = self.field(f);
        force_step(g, f, &field, &self.params, half, self.scheme)?;
        collision_step_with(g, f, &self.params, dt, self.collision);
        let field = self.field(f);
        force_step(g, f, &field, &self.params, half, self.scheme)?;
        outflow = outflow + transport_step(g, f, half, self.scheme, self.boundary)?;
        state.t = state.t + dt;
        self.outflow_total = self.outflow_total + outflow;

        let (index, value) = state.min_value();
        if value < T::zero() || !value.is_finite() {
            return Err(Error::Positivity {
                index,
                value: value.to_f64_lossy(),
            });
        }
        let rho = moments(g, &state.f).rho;
        let mass = g.spatial.quad_unchecked(&rho);
        let boundary_fraction = g.spatial.boundary_mass(&rho) / mass;
        if let Some(limit) = self.boundary_limit {
            if boundary_fraction > limit {
                return Err(Error::BoundaryMass {
                    t: state.t.to_f64_lossy(),
                    fraction: boundary_fraction.to_f64_lossy(),
                    limit: limit.to_f64_lossy(),
                });
            }
        }
        Ok(StepReport {
            dt,
            outflow,
            boundary_fraction,
            kernel_width: width,
        })
    }

    /// Steps from `state.t` to exactly `t_end`, shortening the last step.
    /// Calls `on_step` after every step.
    pub fn advance_to(
        &mut self,
        state: &mut KineticState<T>,
        t_end: T,
        mut on_step: impl FnMut(&KineticState<T>, &StepReport<T>),
    ) -> Result<()> {
        let tiny = t_end.abs().max(T::one()) * T::lit(1e-12);
        while state.t < t_end - tiny {
            let dt = self.stable_dt(&state.f).min(t_end - state.t);
            let report = self.step(state, dt)?;
            on_step(state, &report);
        }
        Ok(())
    }
}
