//! Paired kinetic/fluid experiments, per-sample audits and ε-sweeps with
//! log-log rate fits.

mod single;

pub use single::{
    run_fluid, run_kinetic, run_rescaled, FluidRecord, KineticRecord, LpMonotonicity, Record, RescaledRecord,
    SingleRun, CHEMICAL_BULK, FLUID_STEP_FRACTION, WEIGHTED_DECAY, WEIGHTED_ORDER,
};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::{fluid_stable_dt, fluid_step, fluid_velocity, free_energy, FluidModel, FluidState};
use crate::functionals::{
    budget_rates, entropy_gap_initial, free_energy_kinetic, modulated_energy, DiagnosticsRecord, EntropyBudget,
    EntropyGap,
};
use crate::grid::{PhaseGrid, SpatialGrid, VelocityGrid};
use crate::kinetic::{Confinement, KineticState, Maxwellian, ScalingParams, VpfpStepper};
use crate::snapshot::Snapshot;

/// Cells with `ρ̄ ≤ BULK_CUTOFF · max ρ̄` are outside the bulk.
pub const BULK_CUTOFF: f64 = 1e-10;

/// Initial fluid density, normalized to unit mass on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialRecipe {
    /// `exp(−(x − center)²/(2 width²))`.
    Gaussian { center: f64, width: f64 },
    /// `sech²(x / width)`.
    Sech2 { width: f64 },
}

impl InitialRecipe {
    pub fn default_for(confinement: Confinement) -> Self {
        if confinement.is_confined() {
            Self::Gaussian { center: 0.5, width: 1.0 }
        } else {
            Self::Sech2 { width: 1.0 }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, c) = match *self {
            Self::Gaussian { center, width } => (width, center),
            Self::Sech2 { width } => (width, 0.0),
        };
        if !(w > 0.0) || !w.is_finite() || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("initial-data width must be positive, got {w}")));
        }
        Ok(())
    }

    /// Unnormalized profile.
    pub fn profile(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { center, width } => (-(x - center).powi(2) / (2.0 * width * width)).exp(),
            Self::Sech2 { width } => {
                let c = (x / width).cosh();
                1.0 / (c * c)
            }
        }
    }

    pub fn fluid_state(&self, grid: &SpatialGrid<f64>) -> Result<FluidState<f64>> {
        self.validate()?;
        FluidState::normalized(grid, |x| self.profile(x))
    }
}

/// How grids are chosen for a given ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPolicy {
    pub half_width: f64,
    pub n_x: usize,
    /// Fixed velocity resolution; when absent `Δv √ε = h`.
    pub n_v: Option<usize>,
    /// `v_max = c_v / √ε + max |ū₀|`.
    pub c_v: f64,
    pub h: f64,
    /// Fraction of the smaller CFL limit used as the kinetic step.
    pub cfl_fraction: f64,
}

impl GridPolicy {
    pub fn default_for(confinement: Confinement) -> Self {
        if confinement.is_confined() {
            Self {
                half_width: 8.0,
                n_x: 128,
                n_v: None,
                c_v: 8.0,
                h: 0.0625,
                cfl_fraction: 0.5,
            }
        } else {
            Self {
                half_width: 12.0,
                n_x: 192,
                n_v: None,
                c_v: 8.0,
                h: 0.0625,
                cfl_fraction: 0.5,
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("half_width must be positive, got {}", self.half_width)));
        }
        if self.n_x < 8 {
            return Err(Error::InvalidGrid(format!("n_x = {} must be at least 8", self.n_x)));
        }
        if let Some(n_v) = self.n_v {
            if n_v < 8 {
                return Err(Error::InvalidGrid(format!("n_v = {n_v} must be at least 8")));
            }
        }
        if self.c_v < 4.0 || !self.c_v.is_finite() {
            return Err(Error::InvalidGrid(format!("c_v = {} must be at least 4", self.c_v)));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidGrid(format!("h must be positive, got {}", self.h)));
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_fraction must lie in (0,1], got {}",
                self.cfl_fraction
            )));
        }
        Ok(())
    }

    pub fn spatial(&self) -> Result<SpatialGrid<f64>> {
        SpatialGrid::symmetric(self.half_width, self.n_x)
    }

    /// Velocity grid for `eps` wide enough for a bulk drift of `max_u`.
    pub fn velocity(&self, eps: f64, max_u: f64) -> Result<VelocityGrid<f64>> {
        match self.n_v {
            Some(n_v) => VelocityGrid::new(self.c_v / eps.sqrt() + max_u, n_v),
            None => VelocityGrid::resolving(eps, self.c_v, self.h, max_u),
        }
    }
}

/// A single paired run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairSpec {
    pub eps: f64,
    pub delta: f64,
    pub confinement: Confinement,
    pub interaction: bool,
    pub horizon: f64,
    /// Number of sample intervals on `[0, horizon]`.
    pub samples: usize,
    pub grid: GridPolicy,
    pub recipe: InitialRecipe,
}

impl PairSpec {
    /// Reference run: δ = 2, T = 0.5, 10 samples, default grid and data.
    pub fn reference(eps: f64, confinement: Confinement) -> Self {
        Self {
            eps,
            delta: 2.0,
            confinement,
            interaction: true,
            horizon: 0.5,
            samples: 10,
            grid: GridPolicy::default_for(confinement),
            recipe: InitialRecipe::default_for(confinement),
        }
    }

    pub fn params(&self) -> Result<ScalingParams<f64>> {
        let p = ScalingParams::new(self.eps, self.delta, self.confinement)?;
        Ok(if self.interaction { p } else { p.without_interaction() })
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.grid.validate()?;
        self.recipe.validate()?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Largest `|ū|` over bulk cells.
pub fn max_bulk_velocity(grid: &SpatialGrid<f64>, rho_bar: &[f64], model: &FluidModel<f64>) -> f64 {
    let cut = BULK_CUTOFF * rho_bar.iter().copied().fold(0.0, f64::max);
    let u = fluid_velocity(grid, rho_bar, model).centers;
    rho_bar
        .iter()
        .zip(&u)
        .filter(|(&r, _)| r > cut)
        .map(|(_, u)| u.abs())
        .fold(0.0, f64::max)
}

/// `f₀ = ρ̄₀ M_{ū₀}` with `ū₀` from the fluid velocity law. Outside the bulk
/// the drift is clipped to `±v_max/2`; inside it must already fit.
pub fn well_prepared_data(
    grid: &PhaseGrid<f64>,
    rho_bar: &FluidState<f64>,
    params: &ScalingParams<f64>,
) -> Result<KineticState<f64>> {
    let sg = &grid.spatial;
    if rho_bar.rho.len() != sg.len() {
        return Err(Error::GridMismatch("fluid density does not match the spatial grid".into()));
    }
    let half = 0.5 * grid.velocity.v_max();
    let cut = BULK_CUTOFF * rho_bar.rho.iter().copied().fold(0.0, f64::max);
    let u_bar = fluid_velocity(sg, &rho_bar.rho, &FluidModel::from(params)).centers;
    let mut u = Vec::with_capacity(u_bar.len());
    for (index, (&r, &ub)) in rho_bar.rho.iter().zip(&u_bar).enumerate() {
        if r > cut && ub.abs() > half {
            return Err(Error::VelocityOutOfRange {
                index,
                value: ub,
                v_max: grid.velocity.v_max(),
            });
        }
        u.push(ub.clamp(-half, half));
    }
    let f = Maxwellian::new(params.eps).local_equilibrium(grid, &rho_bar.rho, &u);
    KineticState::new(grid, f, rho_bar.t)
}

/// Grids, parameters and initial states of a paired run.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub grid: PhaseGrid<f64>,
    pub params: ScalingParams<f64>,
    pub kinetic: KineticState<f64>,
    pub fluid: FluidState<f64>,
}

pub fn prepare_pair(spec: &PairSpec) -> Result<PreparedPair> {
    spec.validate()?;
    let params = spec.params()?;
    let spatial = spec.grid.spatial()?;
    let fluid = spec.recipe.fluid_state(&spatial)?;
    let max_u = max_bulk_velocity(&spatial, &fluid.rho, &FluidModel::from(&params));
    let grid = PhaseGrid::new(spatial, spec.grid.velocity(spec.eps, max_u)?);
    let kinetic = well_prepared_data(&grid, &fluid, &params)?;
    Ok(PreparedPair {
        grid,
        params,
        kinetic,
        fluid,
    })
}

/// Tolerances of the per-sample audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditTolerances {
    /// Absolute drift of the kinetic and fluid masses.
    pub mass: f64,
    /// Entropy-inequality slack allowed, as a fraction of `d ε^{-2} t`.
    pub entropy_fraction: f64,
    /// Lower bound on the normalized minimization gap.
    pub min_gap: f64,
    /// Additive slack of `(∫|ρ − ρ̄|)² ≤ 4∫p`.
    pub l1: f64,
    /// Additive slack of the dual norm against the field norm.
    pub hminus1: f64,
    /// Largest increase of the fluid free energy over one step.
    pub fluid_decay: f64,
    /// Largest increase of a rescaled `L^p` norm over one step.
    pub lp_increase: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        Self {
            mass: 1e-8,
            entropy_fraction: 0.01,
            min_gap: 1e-8,
            l1: 1e-10,
            hminus1: 1e-12,
            fluid_decay: 1e-10,
            lp_increase: 1e-8,
        }
    }
}

/// Worst values of every audited quantity over a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSummary {
    pub samples: usize,
    pub kinetic_steps: usize,
    pub fluid_steps: usize,
    pub mass_drift: f64,
    pub fluid_mass_drift: f64,
    pub min_f: f64,
    pub min_rho_bar: f64,
    /// Smallest `slack_first / source` over samples with `t > 0`.
    pub entropy_first: f64,
    /// Smallest `slack_refined / source` over samples with `t > 0`.
    pub entropy_refined: f64,
    /// Largest `|identity_residual| / source`; not audited.
    pub identity_residual: f64,
    pub min_gap: f64,
    /// Largest `(∫|ρ − ρ̄|)² − 4∫p`.
    pub l1_excess: f64,
    /// Largest `dual − field` norm difference.
    pub hminus1_excess: f64,
    /// Largest one-step increase of the fluid free energy.
    pub fluid_energy_increase: f64,
    pub max_boundary_mass: f64,
    pub sentinel_cells: usize,
    pub failures: Vec<String>,
}

impl AuditSummary {
    fn new() -> Self {
        Self {
            samples: 0,
            kinetic_steps: 0,
            fluid_steps: 0,
            mass_drift: 0.0,
            fluid_mass_drift: 0.0,
            min_f: f64::INFINITY,
            min_rho_bar: f64::INFINITY,
            entropy_first: f64::INFINITY,
            entropy_refined: f64::INFINITY,
            identity_residual: 0.0,
            min_gap: f64::INFINITY,
            l1_excess: f64::NEG_INFINITY,
            hminus1_excess: f64::NEG_INFINITY,
            fluid_energy_increase: f64::NEG_INFINITY,
            max_boundary_mass: 0.0,
            sentinel_cells: 0,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn observe(&mut self, r: &DiagnosticsRecord<f64>, first: &DiagnosticsRecord<f64>, source: f64, min_rho_bar: f64) {
        self.samples += 1;
        self.mass_drift = self.mass_drift.max((r.mass - first.mass).abs());
        self.fluid_mass_drift = self.fluid_mass_drift.max((r.fluid_mass - first.fluid_mass).abs());
        self.min_f = self.min_f.min(r.min_f);
        self.min_rho_bar = self.min_rho_bar.min(min_rho_bar);
        if source > 0.0 {
            self.entropy_first = self.entropy_first.min(r.slack_first / source);
            self.entropy_refined = self.entropy_refined.min(r.slack_refined / source);
            self.identity_residual = self.identity_residual.max(r.identity_residual.abs() / source);
        }
        self.min_gap = self.min_gap.min(r.min_gap);
        self.l1_excess = self.l1_excess.max(r.l1 * r.l1 - r.l1_bound);
        self.hminus1_excess = self.hminus1_excess.max(r.hminus1_dual - r.hminus1);
        self.max_boundary_mass = self.max_boundary_mass.max(r.boundary_mass);
        self.sentinel_cells = self.sentinel_cells.max(r.sentinel_cells as usize);
    }

    fn judge(&mut self, tol: &AuditTolerances) {
        let mut fail = |ok: bool, msg: String| {
            if !ok {
                self.failures.push(msg);
            }
        };
        fail(self.mass_drift <= tol.mass, format!("kinetic mass drift {:e}", self.mass_drift));
        fail(self.fluid_mass_drift <= tol.mass, format!("fluid mass drift {:e}", self.fluid_mass_drift));
        fail(self.min_f >= 0.0, format!("negative f {:e}", self.min_f));
        fail(self.min_rho_bar >= 0.0, format!("negative fluid density {:e}", self.min_rho_bar));
        fail(
            self.entropy_first >= -tol.entropy_fraction,
            format!("entropy inequality slack {:e} of source", self.entropy_first),
        );
        fail(
            self.entropy_refined >= -tol.entropy_fraction,
            format!("refined entropy inequality slack {:e} of source", self.entropy_refined),
        );
        fail(self.min_gap >= -tol.min_gap, format!("minimization gap {:e}", self.min_gap));
        fail(self.l1_excess <= tol.l1, format!("L1 bound exceeded by {:e}", self.l1_excess));
        fail(
            self.hminus1_excess <= tol.hminus1,
            format!("dual norm exceeds field norm by {:e}", self.hminus1_excess),
        );
        fail(
            self.fluid_energy_increase <= tol.fluid_decay,
            format!("fluid free energy increased by {:e}", self.fluid_energy_increase),
        );
    }
}

/// Tolerances and snapshot cadence shared by all runners.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub tolerances: AuditTolerances,
    /// Keep a [`Snapshot`] every this many samples (and always the last).
    pub snapshot_every: Option<usize>,
}

impl RunOptions {
    fn wants_snapshot(&self, sample: usize, samples: usize) -> bool {
        match self.snapshot_every {
            Some(k) if k > 0 => sample.is_multiple_of(k) || sample == samples,
            _ => false,
        }
    }
}

fn snapshot_of(
    spec: &PairSpec,
    spatial: &SpatialGrid<f64>,
    kinetic: Option<(&PhaseGrid<f64>, &KineticState<f64>)>,
    rho_bar: Option<&[f64]>,
    t: f64,
) -> Snapshot {
    Snapshot {
        t,
        eps: spec.eps,
        delta: spec.delta,
        confinement: spec.confinement,
        interaction: spec.interaction,
        x_min: spatial.x_min(),
        x_max: spatial.x_max(),
        n_x: spatial.len(),
        velocity: kinetic.map(|(g, _)| (g.velocity.v_max(), g.n_v())),
        f: kinetic.map(|(_, k)| k.f.clone()),
        rho_bar: rho_bar.map(<[f64]>::to_vec),
    }
}

/// Outcome of [`run_pair`].
#[derive(Debug, Clone)]
pub struct PairRun {
    pub spec: PairSpec,
    pub grid: PhaseGrid<f64>,
    pub records: Vec<DiagnosticsRecord<f64>>,
    pub audit: AuditSummary,
    pub initial_gap: EntropyGap<f64>,
    /// `F_ε(f₀)`.
    pub initial_free_energy: f64,
    /// `E_ε(f₀) = ∬ f₀|v|²/2 + (1/2ε)∫ρ₀Φ₀`.
    pub initial_energy: f64,
    pub kinetic: KineticState<f64>,
    pub fluid: FluidState<f64>,
    pub snapshots: Vec<Snapshot>,
    /// The error that stopped the run; the last record is the last valid one.
    pub failure: Option<Error>,
}

impl PairRun {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn passed(&self) -> bool {
        self.completed() && self.audit.passed()
    }

    pub fn terminal(&self) -> Option<&DiagnosticsRecord<f64>> {
        self.records.last()
    }

    /// `sup_t (H_ε(t) + (1/2ε)∫₀ᵗ∫ρ|u − ū|²)`.
    pub fn bound_combination(&self) -> f64 {
        let eps = self.spec.eps;
        self.records
            .iter()
            .map(|r| r.h_eps + r.vel_gap_int / (2.0 * eps))
            .fold(0.0, f64::max)
    }
}

/// Runs the kinetic and fluid solvers side by side to `spec.horizon`,
/// keeping the fluid synchronized with every kinetic step. Samples are taken
/// at `k T / samples`. Audits use the default tolerances.
pub fn run_pair(spec: &PairSpec) -> Result<PairRun> {
    run_pair_with(spec, &RunOptions::default())
}

pub fn run_pair_with(spec: &PairSpec, options: &RunOptions) -> Result<PairRun> {
    let PreparedPair {
        grid,
        params,
        kinetic,
        fluid,
    } = prepare_pair(spec)?;
    let mut run = PairRun {
        spec: *spec,
        grid: grid.clone(),
        records: Vec::with_capacity(spec.samples + 1),
        audit: AuditSummary::new(),
        initial_gap: entropy_gap_initial(&grid, &kinetic.f),
        initial_free_energy: free_energy_kinetic(&grid, &kinetic.f, &params),
        initial_energy: initial_energy(&grid, &kinetic.f, &params),
        kinetic,
        fluid,
        snapshots: Vec::new(),
        failure: None,
    };
    let mut stepper = VpfpStepper::new(grid, params);
    stepper.cfl_fraction = spec.grid.cfl_fraction;
    if let Err(e) = drive(&mut stepper, &mut run, options) {
        run.failure = Some(e);
    }
    run.audit.judge(&options.tolerances);
    Ok(run)
}

fn initial_energy(grid: &PhaseGrid<f64>, f: &[f64], params: &ScalingParams<f64>) -> f64 {
    let rho = crate::kinetic::moments(grid, f).rho;
    let field = crate::kinetic::field_for(&grid.spatial, &rho, params);
    let pot: Vec<f64> = field.phi.iter().zip(&rho).map(|(p, r)| p * r).collect();
    crate::functionals::kinetic_energy(grid, f) + grid.spatial.quad_unchecked(&pot) / (2.0 * params.eps)
}

fn drive(stepper: &mut VpfpStepper<f64>, run: &mut PairRun, options: &RunOptions) -> Result<()> {
    let grid = stepper.grid.clone();
    let params = stepper.params;
    let sg = &grid.spatial;
    let model = FluidModel::from(&params);
    let mut budget = EntropyBudget::new(&params);
    let record_rates = |budget: &mut EntropyBudget<f64>, f: &[f64], t: f64| {
        let (fe, d, m2, bulk) = budget_rates(&grid, f, &params);
        budget.record(t, fe, d, m2, bulk);
    };
    let velocity_gap = |f: &[f64], rho_bar: &[f64]| -> Result<f64> {
        Ok(modulated_energy(&grid, f, rho_bar, &params)?.velocity_gap)
    };

    record_rates(&mut budget, &run.kinetic.f, run.kinetic.t);
    let mut gap_prev = velocity_gap(&run.kinetic.f, &run.fluid.rho)?;
    let mut gap_int = 0.0;
    let mut fluid_energy = free_energy(sg, &run.fluid.rho, &model);

    let sample = |run: &mut PairRun, budget: &EntropyBudget<f64>, gap_int: f64| -> Result<()> {
        let rec = DiagnosticsRecord::evaluate(&grid, &run.kinetic.f, run.kinetic.t, &run.fluid.rho, &params)?
            .with_budget(&budget.slacks(), gap_int);
        if !rec.is_finite() {
            return Err(Error::NonFinite { index: run.records.len() });
        }
        let first = run.records.first().copied().unwrap_or(rec);
        let min_rho_bar = run.fluid.rho.iter().copied().fold(f64::INFINITY, f64::min);
        run.audit.observe(&rec, &first, budget.slacks().source, min_rho_bar);
        run.records.push(rec);
        let k = run.records.len() - 1;
        if options.wants_snapshot(k, run.spec.samples) {
            let snap = snapshot_of(
                &run.spec,
                &grid.spatial,
                Some((&grid, &run.kinetic)),
                Some(&run.fluid.rho),
                run.kinetic.t,
            );
            run.snapshots.push(snap);
        }
        Ok(())
    };
    sample(run, &budget, gap_int)?;

    let t0 = run.kinetic.t;
    let tiny = 1e-12 * run.spec.horizon.max(1.0);
    for k in 1..=run.spec.samples {
        let t_k = t0 + run.spec.horizon * k as f64 / run.spec.samples as f64;
        while run.kinetic.t < t_k - tiny {
            let dt = stepper.stable_dt(&run.kinetic.f).min(t_k - run.kinetic.t);
            stepper.step(&mut run.kinetic, dt)?;
            run.audit.kinetic_steps += 1;
            let t = run.kinetic.t;
            while run.fluid.t < t - tiny {
                let psi = model.potential(sg, &run.fluid.rho);
                let h = (FLUID_STEP_FRACTION * fluid_stable_dt(sg, &psi)).min(t - run.fluid.t);
                fluid_step(sg, &mut run.fluid, &model, h)?;
                run.audit.fluid_steps += 1;
                let e = free_energy(sg, &run.fluid.rho, &model);
                run.audit.fluid_energy_increase = run.audit.fluid_energy_increase.max(e - fluid_energy);
                fluid_energy = e;
            }
            run.fluid.t = t;
            record_rates(&mut budget, &run.kinetic.f, t);
            let gap = velocity_gap(&run.kinetic.f, &run.fluid.rho)?;
            gap_int += 0.5 * dt * (gap + gap_prev);
            gap_prev = gap;
        }
        sample(run, &budget, gap_int)?;
    }
    Ok(())
}

/// Least-squares fit of `log value = slope · log ε + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub quantity: String,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in natural-log units.
    pub residual: f64,
    /// Set when some value was floored at [`RateFit::FLOOR`].
    pub floored: bool,
}

impl RateFit {
    pub const FLOOR: f64 = 1e-16;
    pub const MIN_POINTS: usize = 3;

    pub fn fit(quantity: &str, eps: &[f64], values: &[f64]) -> Result<Self> {
        if eps.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} ε values but {} data points",
                eps.len(),
                values.len()
            )));
        }
        if eps.len() < Self::MIN_POINTS {
            return Err(Error::TooFewPoints {
                needed: Self::MIN_POINTS,
                got: eps.len(),
            });
        }
        if let Some(e) = eps.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParameter(format!("ε = {e} must be positive")));
        }
        let mut floored = false;
        let ys: Vec<f64> = values
            .iter()
            .map(|&v| {
                if v > Self::FLOOR && v.is_finite() {
                    v.ln()
                } else {
                    floored = true;
                    Self::FLOOR.ln()
                }
            })
            .collect();
        let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        if sxx == 0.0 {
            return Err(Error::InvalidParameter("ε values must not all coincide".into()));
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
        Ok(Self {
            quantity: quantity.to_string(),
            eps: eps.to_vec(),
            values: values.to_vec(),
            slope,
            intercept,
            residual: (ss / n).sqrt(),
            floored,
        })
    }

    /// `slope ≥ min_slope` and `residual ≤ max_residual`.
    pub fn meets(&self, min_slope: f64, max_residual: f64) -> bool {
        self.slope >= min_slope && self.residual <= max_residual
    }
}

/// Quantities fitted by [`fit_rates`], each a function of a finished run.
pub const FITTED_QUANTITIES: [&str; 9] = [
    "p_rel",
    "elec_diff",
    "vel_gap_int",
    "l1_sq",
    "hminus1_sq",
    "sup_p_rel",
    "sup_elec_diff",
    "sup_l1_sq",
    "sup_hminus1_sq",
];

fn quantity(run: &PairRun, name: &str) -> f64 {
    let last = run.terminal().copied().unwrap_or_default();
    let sup = |g: fn(&DiagnosticsRecord<f64>) -> f64| run.records.iter().map(g).fold(0.0, f64::max);
    match name {
        "p_rel" => last.p_rel,
        "elec_diff" => last.elec_diff,
        "vel_gap_int" => last.vel_gap_int,
        "l1_sq" => last.l1 * last.l1,
        "hminus1_sq" => last.hminus1 * last.hminus1,
        "sup_p_rel" => sup(|r| r.p_rel),
        "sup_elec_diff" => sup(|r| r.elec_diff),
        "sup_l1_sq" => sup(|r| r.l1 * r.l1),
        "sup_hminus1_sq" => sup(|r| r.hminus1 * r.hminus1),
        _ => f64::NAN,
    }
}

/// One [`RateFit`] per entry of [`FITTED_QUANTITIES`], using terminal and
/// time-sup values of completed runs.
pub fn fit_rates(runs: &[PairRun]) -> Result<Vec<RateFit>> {
    if let Some(r) = runs.iter().find(|r| !r.completed()) {
        return Err(Error::InvalidParameter(format!("run at ε = {} did not complete", r.spec.eps)));
    }
    let eps: Vec<f64> = runs.iter().map(|r| r.spec.eps).collect();
    FITTED_QUANTITIES
        .iter()
        .map(|name| {
            let values: Vec<f64> = runs.iter().map(|r| quantity(r, name)).collect();
            RateFit::fit(name, &eps, &values)
        })
        .collect()
}

/// An ε-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    /// Strictly decreasing, in `(0,1)`.
    pub eps: Vec<f64>,
    pub delta: f64,
    pub confinement: Confinement,
    pub interaction: bool,
    pub horizon: f64,
    pub samples: usize,
    pub grid: GridPolicy,
    pub recipe: InitialRecipe,
    /// Runs executed concurrently.
    pub jobs: usize,
}

impl ExperimentPlan {
    pub const DEFAULT_EPS: [f64; 5] = [0.4, 0.283, 0.2, 0.141, 0.1];

    /// δ = 2, T = 0.5 over the default ε list.
    pub fn default_sweep(confinement: Confinement) -> Self {
        Self {
            eps: Self::DEFAULT_EPS.to_vec(),
            delta: 2.0,
            confinement,
            interaction: true,
            horizon: 0.5,
            samples: 10,
            grid: GridPolicy::default_for(confinement),
            recipe: InitialRecipe::default_for(confinement),
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() < RateFit::MIN_POINTS {
            return Err(Error::TooFewPoints {
                needed: RateFit::MIN_POINTS,
                got: self.eps.len(),
            });
        }
        if self.eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidParameter("epsilon list must be strictly decreasing".into()));
        }
        for spec in self.specs() {
            spec.validate()?;
        }
        if self.jobs == 0 {
            return Err(Error::InvalidParameter("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// Predicted order ζ.
    pub fn zeta(&self) -> f64 {
        let eps = self.eps.first().copied().unwrap_or(0.5).clamp(1e-12, 1.0 - 1e-12);
        ScalingParams::new(eps, self.delta, self.confinement)
            .map(|p| p.zeta())
            .unwrap_or(f64::NAN)
    }

    pub fn specs(&self) -> Vec<PairSpec> {
        self.eps
            .iter()
            .map(|&eps| PairSpec {
                eps,
                delta: self.delta,
                confinement: self.confinement,
                interaction: self.interaction,
                horizon: self.horizon,
                samples: self.samples,
                grid: self.grid,
                recipe: self.recipe,
            })
            .collect()
    }
}

/// Whether a terminal quantity decreases with ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCheck {
    pub quantity: String,
    pub values: Vec<f64>,
    /// Relative increase allowed from one ε to the next smaller one.
    pub tolerance: f64,
    pub holds: bool,
}

impl MonotonicityCheck {
    pub const TOLERANCE: f64 = 0.1;

    pub fn new(quantity: &str, values: &[f64]) -> Self {
        let holds = values.windows(2).all(|w| w[1] <= w[0] * (1.0 + Self::TOLERANCE));
        Self {
            quantity: quantity.to_string(),
            values: values.to_vec(),
            tolerance: Self::TOLERANCE,
            holds,
        }
    }
}

/// Comparison of `sup_t (H_ε + (1/2ε)∫∫ρ|u − ū|²)` with `C · shape(ε)`,
/// `C` fitted at the largest ε.
///
/// The shape keeps the ε-dependence of the stability estimate and drops
/// the initial-entropy terms that are negative for Maxwellian data:
/// confined `H(0) + ε^δ|F(f₀)| + ε^{δ−3/2} + ε`, unconfined
/// `H(0) + ε^{2+2δ}|E(f₀)| + ε + ε^{δ−1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub eps: Vec<f64>,
    pub lhs: Vec<f64>,
    pub shape: Vec<f64>,
    pub constant: f64,
    pub holds: bool,
}

fn bound_shape(run: &PairRun) -> f64 {
    let eps = run.spec.eps;
    let delta = run.spec.delta;
    let h0 = run.records.first().map(|r| r.h_eps.max(0.0)).unwrap_or(0.0);
    if run.spec.confinement.is_confined() {
        h0 + eps.powf(delta) * run.initial_free_energy.abs() + eps.powf(delta - 1.5) + eps
    } else {
        h0 + eps.powf(2.0 + 2.0 * delta) * run.initial_energy.abs() + eps + eps.powf(delta - 1.0)
    }
}

impl BoundCheck {
    pub fn new(runs: &[PairRun]) -> Self {
        let eps: Vec<f64> = runs.iter().map(|r| r.spec.eps).collect();
        let lhs: Vec<f64> = runs.iter().map(PairRun::bound_combination).collect();
        let shape: Vec<f64> = runs.iter().map(bound_shape).collect();
        let constant = match (lhs.first(), shape.first()) {
            (Some(&l), Some(&s)) if s > 0.0 => l / s,
            _ => f64::NAN,
        };
        let holds = lhs
            .iter()
            .zip(&shape)
            .all(|(&l, &s)| l <= constant * s * (1.0 + 1e-12));
        Self {
            eps,
            lhs,
            shape,
            constant,
            holds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub plan: ExperimentPlan,
    /// One run per ε, in plan order.
    pub runs: Vec<PairRun>,
    /// Empty when some run did not complete.
    pub fits: Vec<RateFit>,
    pub monotonicity: Vec<MonotonicityCheck>,
    pub bound: Option<BoundCheck>,
}

impl SweepOutcome {
    pub fn fit(&self, quantity: &str) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.quantity == quantity)
    }

    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(PairRun::completed)
    }

    pub fn audits_passed(&self) -> bool {
        self.runs.iter().all(PairRun::passed)
    }
}

/// Runs every ε of `plan` on up to `plan.jobs` threads. Results do not
/// depend on the number of jobs. `on_done` is called as runs finish.
pub fn run_sweep(plan: &ExperimentPlan, on_done: impl Fn(&PairRun) + Sync) -> Result<SweepOutcome> {
    plan.validate()?;
    let specs = plan.specs();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<PairRun>>>> = Mutex::new(vec![None; specs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..plan.jobs.min(specs.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = specs.get(k) else { break };
                let result = run_pair(spec);
                if let Ok(run) = &result {
                    on_done(run);
                }
                slots.lock().unwrap_or_else(|e| e.into_inner())[k] = Some(result);
            });
        }
    });
    let runs = slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::InvalidParameter("sweep job did not report".into()))))
        .collect::<Result<Vec<_>>>()?;
    let complete = runs.iter().all(PairRun::completed);
    let fits = if complete { fit_rates(&runs)? } else { Vec::new() };
    let terminal = |g: fn(&DiagnosticsRecord<f64>) -> f64| -> Vec<f64> {
        runs.iter().map(|r| r.terminal().map(g).unwrap_or(f64::NAN)).collect()
    };
    let monotonicity = vec![
        MonotonicityCheck::new("p_rel", &terminal(|r| r.p_rel)),
        MonotonicityCheck::new("elec_diff", &terminal(|r| r.elec_diff)),
    ];
    let bound = complete.then(|| BoundCheck::new(&runs));
    Ok(SweepOutcome {
        plan: plan.clone(),
        runs,
        fits,
        monotonicity,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fits_exactly() {
        let eps = [0.4, 0.283, 0.2, 0.141, 0.1];
        let v: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        let fit = RateFit::fit("q", &eps, &v).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(!fit.floored);
    }

    #[test]
    fn mixed_power_fits_between_one_and_two() {
        let eps: Vec<f64> = (0..6).map(|k| 0.4 * 0.5f64.powi(k) ).filter(|&e| e >= 0.05).collect();
        let v: Vec<f64> = eps.iter().map(|e| e + 2.0 * e * e).collect();
        let fit = RateFit::fit("q", &eps, &v).unwrap();
        assert!(fit.slope > 1.0 && fit.slope < 1.3, "{}", fit.slope);
    }

    #[test]
    fn fit_rejects_short_input_and_flags_floor() {
        assert!(matches!(
            RateFit::fit("q", &[0.4, 0.2], &[1.0, 0.5]),
            Err(Error::TooFewPoints { needed: 3, got: 2 })
        ));
        let fit = RateFit::fit("q", &[0.4, 0.2, 0.1], &[1.0, 0.0, -1.0]).unwrap();
        assert!(fit.floored);
    }

    #[test]
    fn plan_validation() {
        let mut plan = ExperimentPlan::default_sweep(Confinement::Quadratic);
        plan.validate().unwrap();
        assert_eq!(plan.zeta(), 1.0);
        plan.eps = vec![0.4, 0.4, 0.1];
        assert!(plan.validate().is_err());
        plan.eps = vec![1.5, 0.4, 0.1];
        assert!(plan.validate().unwrap_err().to_string().contains("epsilon must lie in (0,1)"));
    }

    #[test]
    fn well_prepared_data_matches_fluid() {
        let spec = PairSpec {
            grid: GridPolicy {
                n_v: Some(256),
                ..GridPolicy::default_for(Confinement::Quadratic)
            },
            ..PairSpec::reference(0.2, Confinement::Quadratic)
        };
        let p = prepare_pair(&spec).unwrap();
        let rho = crate::kinetic::moments(&p.grid, &p.kinetic.f).rho;
        let l1: f64 = rho.iter().zip(&p.fluid.rho).map(|(a, b)| (a - b).abs()).sum::<f64>() * p.grid.spatial.dx();
        assert!(l1 < 1e-8, "{l1}");
        let h = modulated_energy(&p.grid, &p.kinetic.f, &p.fluid.rho, &p.params).unwrap();
        assert!(h.total() < 1e-6, "{}", h.total());
    }

    #[test]
    fn too_narrow_velocity_grid_is_rejected() {
        let spec = PairSpec::reference(0.2, Confinement::Quadratic);
        let p = prepare_pair(&spec).unwrap();
        let narrow = PhaseGrid::new(p.grid.spatial.clone(), VelocityGrid::new(0.5, 16).unwrap());
        let err = well_prepared_data(&narrow, &p.fluid, &p.params).unwrap_err();
        assert!(matches!(err, Error::VelocityOutOfRange { .. }));
    }

    #[test]
    fn monotonicity_tolerates_small_increase() {
        assert!(MonotonicityCheck::new("q", &[1.0, 0.5, 0.54]).holds);
        assert!(!MonotonicityCheck::new("q", &[1.0, 0.5, 0.6]).holds);
    }
}
