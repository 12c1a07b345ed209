//! Kinetic-only, fluid-only and rescaled runs.

use serde::Serialize;

use super::{prepare_pair, snapshot_of, AuditSummary, PairSpec, PreparedPair, RunOptions};
use crate::error::{Error, Result};
use crate::fluid::{
    advance_fluid_to, chemical_potential_spread, fluid_stable_dt, fluid_step, free_energy, lp_norm, map_back,
    rescaled_stable_dt, rescaled_step, rescaled_time, weighted_norm, FluidModel, FluidState, RescaledState,
};
use crate::functionals::{budget_rates, minimization_audit, DiagnosticsRecord, EntropyBudget};
use crate::grid::{PhaseGrid, SpatialGrid};
use crate::kinetic::{moments, KineticState, VpfpStepper};
use crate::snapshot::Snapshot;

/// Fraction of the explicit stability limit used by fluid solves.
pub const FLUID_STEP_FRACTION: f64 = 0.9;
/// Cells with `ρ̄ ≥ CHEMICAL_BULK · max ρ̄` enter the chemical-potential spread.
pub const CHEMICAL_BULK: f64 = 1e-6;
/// Derivative order and decay weight of the monitored weighted norm.
pub const WEIGHTED_ORDER: usize = 2;
pub const WEIGHTED_DECAY: f64 = 2.0;

/// A sampled record with a fixed column layout.
pub trait Record {
    fn columns() -> &'static [&'static str];
    fn row(&self) -> Vec<f64>;
}

impl Record for DiagnosticsRecord<f64> {
    fn columns() -> &'static [&'static str] {
        &Self::COLUMNS
    }

    fn row(&self) -> Vec<f64> {
        self.values().to_vec()
    }
}

macro_rules! record {
    (@col $field:ident $col:literal) => {
        $col
    };
    (@col $field:ident) => {
        stringify!($field)
    };
    ($(#[$m:meta])* $name:ident { $($field:ident $(= $col:literal)?),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
        pub struct $name {
            $(pub $field: f64,)*
        }

        impl Record for $name {
            fn columns() -> &'static [&'static str] {
                &[$(record!(@col $field $($col)?)),*]
            }

            fn row(&self) -> Vec<f64> {
                vec![$(self.$field),*]
            }
        }
    };
}

record!(
    /// Kinetic-only sample.
    KineticRecord {
        t,
        mass,
        momentum,
        f_eps = "F_eps",
        d_eps = "D_eps",
        k_int = "K_int",
        e_int = "E_int",
        min_gap,
        boundary_mass,
        kinetic_energy,
        min_f,
        slack_first,
        slack_refined,
        slack_refined_full_d,
        identity_residual,
    }
);

record!(
    /// Fluid-only sample.
    FluidRecord {
        t,
        mass,
        free_energy,
        min_rho,
        chem_spread,
        l2,
        l4,
        linf,
        weighted,
    }
);

record!(
    /// Rescaled-solve sample, compared with a direct fluid solve.
    RescaledRecord {
        t,
        t_bar,
        mass,
        min_n,
        l2,
        l4,
        linf,
        weighted,
        l1_direct,
    }
);

/// Records, audit and final state of a single-model run.
#[derive(Debug, Clone)]
pub struct SingleRun<R> {
    pub spec: PairSpec,
    pub records: Vec<R>,
    pub audit: AuditSummary,
    pub snapshots: Vec<Snapshot>,
    pub failure: Option<Error>,
}

impl<R> SingleRun<R> {
    fn new(spec: &PairSpec) -> Self {
        Self {
            spec: *spec,
            records: Vec::with_capacity(spec.samples + 1),
            audit: AuditSummary::new(),
            snapshots: Vec::new(),
            failure: None,
        }
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn passed(&self) -> bool {
        self.completed() && self.audit.passed()
    }
}

fn sample_times(spec: &PairSpec) -> impl Iterator<Item = (usize, f64)> + '_ {
    (1..=spec.samples).map(move |k| (k, spec.horizon * k as f64 / spec.samples as f64))
}

fn kinetic_record(
    grid: &PhaseGrid<f64>,
    state: &KineticState<f64>,
    stepper: &VpfpStepper<f64>,
    budget: &EntropyBudget<f64>,
) -> KineticRecord {
    let params = &stepper.params;
    let mom = moments(grid, &state.f);
    let (f_eps, d_eps, _, _) = budget_rates(grid, &state.f, params);
    let min = minimization_audit(grid, &state.f, params.eps);
    let mass = grid.spatial.quad_unchecked(&mom.rho);
    let slacks = budget.slacks();
    KineticRecord {
        t: state.t,
        mass,
        momentum: mom.total_momentum,
        f_eps,
        d_eps,
        k_int: min.k_int,
        e_int: min.e_int,
        min_gap: min.normalized_gap(),
        boundary_mass: grid.spatial.boundary_mass(&mom.rho) / mass,
        kinetic_energy: crate::functionals::kinetic_energy(grid, &state.f),
        min_f: state.min_value().1,
        slack_first: slacks.first,
        slack_refined: slacks.refined,
        slack_refined_full_d: slacks.refined_full_d,
        identity_residual: slacks.identity_residual,
    }
}

/// Kinetic solve from well-prepared data, without a fluid partner.
pub fn run_kinetic(spec: &PairSpec, options: &RunOptions) -> Result<SingleRun<KineticRecord>> {
    let PreparedPair {
        grid, params, kinetic, ..
    } = prepare_pair(spec)?;
    let mut run = SingleRun::new(spec);
    let mut state = kinetic;
    let mut stepper = VpfpStepper::new(grid.clone(), params);
    stepper.cfl_fraction = spec.grid.cfl_fraction;
    let mut budget = EntropyBudget::new(&params);
    let record_rates = |budget: &mut EntropyBudget<f64>, s: &KineticState<f64>| {
        let (fe, d, m2, bulk) = budget_rates(&grid, &s.f, &params);
        budget.record(s.t, fe, d, m2, bulk);
    };
    record_rates(&mut budget, &state);

    let observe = |run: &mut SingleRun<KineticRecord>, r: KineticRecord, source: f64, state: &KineticState<f64>| {
        let first = run.records.first().copied().unwrap_or(r);
        let a = &mut run.audit;
        a.samples += 1;
        a.mass_drift = a.mass_drift.max((r.mass - first.mass).abs());
        a.min_f = a.min_f.min(r.min_f);
        a.min_gap = a.min_gap.min(r.min_gap);
        a.max_boundary_mass = a.max_boundary_mass.max(r.boundary_mass);
        if source > 0.0 {
            a.entropy_first = a.entropy_first.min(r.slack_first / source);
            a.entropy_refined = a.entropy_refined.min(r.slack_refined / source);
            a.identity_residual = a.identity_residual.max(r.identity_residual.abs() / source);
        }
        run.records.push(r);
        if options.wants_snapshot(run.records.len() - 1, spec.samples) {
            run.snapshots.push(snapshot_of(spec, &grid.spatial, Some((&grid, state)), None, state.t));
        }
    };
    let r = kinetic_record(&grid, &state, &stepper, &budget);
    observe(&mut run, r, 0.0, &state);

    let mut go = || -> Result<()> {
        for (_, t_k) in sample_times(spec) {
            let tiny = 1e-12 * spec.horizon.max(1.0);
            while state.t < t_k - tiny {
                let dt = stepper.stable_dt(&state.f).min(t_k - state.t);
                stepper.step(&mut state, dt)?;
                run.audit.kinetic_steps += 1;
                record_rates(&mut budget, &state);
            }
            let r = kinetic_record(&grid, &state, &stepper, &budget);
            observe(&mut run, r, budget.slacks().source, &state);
        }
        Ok(())
    };
    if let Err(e) = go() {
        run.failure = Some(e);
    }
    run.audit.judge(&options.tolerances);
    Ok(run)
}

fn fluid_record(grid: &SpatialGrid<f64>, state: &FluidState<f64>, model: &FluidModel<f64>) -> Result<FluidRecord> {
    let rho = &state.rho;
    Ok(FluidRecord {
        t: state.t,
        mass: state.mass(grid),
        free_energy: free_energy(grid, rho, model),
        min_rho: rho.iter().copied().fold(f64::INFINITY, f64::min),
        chem_spread: chemical_potential_spread(grid, rho, model, CHEMICAL_BULK),
        l2: lp_norm(grid, rho, 2.0)?,
        l4: lp_norm(grid, rho, 4.0)?,
        linf: lp_norm(grid, rho, f64::INFINITY)?,
        weighted: weighted_norm(grid, rho, WEIGHTED_ORDER, WEIGHTED_DECAY)?,
    })
}

/// Fluid solve of the limiting equation.
pub fn run_fluid(spec: &PairSpec, options: &RunOptions) -> Result<SingleRun<FluidRecord>> {
    spec.validate()?;
    let params = spec.params()?;
    let model = FluidModel::from(&params);
    let grid = spec.grid.spatial()?;
    let mut state = spec.recipe.fluid_state(&grid)?;
    let mut run = SingleRun::new(spec);

    let observe = |run: &mut SingleRun<FluidRecord>, state: &FluidState<f64>| -> Result<()> {
        let r = fluid_record(&grid, state, &model)?;
        let first = run.records.first().copied().unwrap_or(r);
        let a = &mut run.audit;
        a.samples += 1;
        a.fluid_mass_drift = a.fluid_mass_drift.max((r.mass - first.mass).abs());
        a.min_rho_bar = a.min_rho_bar.min(r.min_rho);
        run.records.push(r);
        if options.wants_snapshot(run.records.len() - 1, spec.samples) {
            run.snapshots.push(snapshot_of(spec, &grid, None, Some(&state.rho), state.t));
        }
        Ok(())
    };
    let mut go = || -> Result<()> {
        observe(&mut run, &state)?;
        let mut energy = free_energy(&grid, &state.rho, &model);
        for (_, t_k) in sample_times(spec) {
            let mut increase = f64::NEG_INFINITY;
            let mut steps = 0;
            advance_fluid_to(&grid, &mut state, &model, t_k, FLUID_STEP_FRACTION, |s| {
                let e = free_energy(&grid, &s.rho, &model);
                increase = increase.max(e - energy);
                energy = e;
                steps += 1;
            })?;
            run.audit.fluid_steps += steps;
            run.audit.fluid_energy_increase = run.audit.fluid_energy_increase.max(increase);
            observe(&mut run, &state)?;
        }
        Ok(())
    };
    if let Err(e) = go() {
        run.failure = Some(e);
    }
    run.audit.judge(&options.tolerances);
    Ok(run)
}

/// Largest one-step increase of `‖n‖_p` for `p = 2, 4, ∞` in a rescaled run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpMonotonicity {
    pub p2: f64,
    pub p4: f64,
    pub p_inf: f64,
}

impl LpMonotonicity {
    pub fn worst(&self) -> f64 {
        self.p2.max(self.p4).max(self.p_inf)
    }
}

/// Rescaled solve mapped back to physical variables, next to a direct solve
/// of the limiting equation on the same grid. Requires the quadratic
/// confinement.
pub fn run_rescaled(spec: &PairSpec, options: &RunOptions) -> Result<(SingleRun<RescaledRecord>, LpMonotonicity)> {
    spec.validate()?;
    let params = spec.params()?;
    let model = FluidModel::from(&params);
    let grid = spec.grid.spatial()?;
    let mut rescaled = RescaledState::from_profile(&grid, spec.confinement, |x| spec.recipe.profile(x))?;
    let mass0 = grid.quad_unchecked(&rescaled.n);
    rescaled.n.iter_mut().for_each(|v| *v /= mass0);
    let mut direct = spec.recipe.fluid_state(&grid)?;
    let mut run = SingleRun::new(spec);
    let mut lp = LpMonotonicity {
        p2: f64::NEG_INFINITY,
        p4: f64::NEG_INFINITY,
        p_inf: f64::NEG_INFINITY,
    };
    let norms = |n: &[f64]| -> Result<[f64; 3]> {
        Ok([lp_norm(&grid, n, 2.0)?, lp_norm(&grid, n, 4.0)?, lp_norm(&grid, n, f64::INFINITY)?])
    };

    let observe = |run: &mut SingleRun<RescaledRecord>, rs: &RescaledState<f64>, direct: &FluidState<f64>| -> Result<()> {
        let [l2, l4, linf] = norms(&rs.n)?;
        let mapped = map_back(&grid, rs, &grid);
        let diff: Vec<f64> = mapped.rho.iter().zip(&direct.rho).map(|(a, b)| (a - b).abs()).collect();
        let r = RescaledRecord {
            t: rs.physical_time(),
            t_bar: rs.t_bar,
            mass: grid.quad_unchecked(&rs.n),
            min_n: rs.n.iter().copied().fold(f64::INFINITY, f64::min),
            l2,
            l4,
            linf,
            weighted: weighted_norm(&grid, &rs.n, WEIGHTED_ORDER, WEIGHTED_DECAY)?,
            l1_direct: grid.quad_unchecked(&diff),
        };
        let first = run.records.first().copied().unwrap_or(r);
        let a = &mut run.audit;
        a.samples += 1;
        a.fluid_mass_drift = a.fluid_mass_drift.max((r.mass - first.mass).abs());
        a.min_rho_bar = a.min_rho_bar.min(r.min_n);
        run.records.push(r);
        if options.wants_snapshot(run.records.len() - 1, spec.samples) {
            run.snapshots.push(snapshot_of(spec, &grid, None, Some(&mapped.rho), mapped.t));
        }
        Ok(())
    };
    let mut go = || -> Result<()> {
        observe(&mut run, &rescaled, &direct)?;
        let mut energy = free_energy(&grid, &direct.rho, &model);
        for (_, t_k) in sample_times(spec) {
            let t_bar_end = rescaled_time(t_k);
            let tiny = 1e-12 * t_bar_end.max(1.0);
            let mut prev = norms(&rescaled.n)?;
            while rescaled.t_bar < t_bar_end - tiny {
                let dt = (FLUID_STEP_FRACTION * rescaled_stable_dt(&grid, &rescaled)).min(t_bar_end - rescaled.t_bar);
                rescaled_step(&grid, &mut rescaled, dt)?;
                let now = norms(&rescaled.n)?;
                lp.p2 = lp.p2.max(now[0] - prev[0]);
                lp.p4 = lp.p4.max(now[1] - prev[1]);
                lp.p_inf = lp.p_inf.max(now[2] - prev[2]);
                prev = now;
            }
            let tiny = 1e-12 * t_k.max(1.0);
            while direct.t < t_k - tiny {
                let psi = model.potential(&grid, &direct.rho);
                let h = (FLUID_STEP_FRACTION * fluid_stable_dt(&grid, &psi)).min(t_k - direct.t);
                fluid_step(&grid, &mut direct, &model, h)?;
                run.audit.fluid_steps += 1;
                let e = free_energy(&grid, &direct.rho, &model);
                run.audit.fluid_energy_increase = run.audit.fluid_energy_increase.max(e - energy);
                energy = e;
            }
            observe(&mut run, &rescaled, &direct)?;
        }
        Ok(())
    };
    if let Err(e) = go() {
        run.failure = Some(e);
    }
    run.audit.judge(&options.tolerances);
    if lp.worst() > options.tolerances.lp_increase {
        run.audit
            .failures
            .push(format!("rescaled L^p norm increased by {:e} in one step", lp.worst()));
    }
    Ok((run, lp))
}
