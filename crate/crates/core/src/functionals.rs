//! Entropies, energies and modulated quantities comparing a kinetic state
//! with a fluid density, plus the inequality audits built on them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{electric_energy_diff, hminus1_dual_norm, hminus1_norm, solve_poisson_unchecked};
use crate::fluid::{fluid_velocity, FluidModel};
use crate::grid::{PhaseGrid, SpatialGrid};
use crate::kinetic::{field_for, moments, pressure_deviation, MomentSet, ScalingParams};
use crate::scalar::{Real, RHO_FLOOR};

/// `∬ f |v|²/2`.
pub fn kinetic_energy<T: Real>(grid: &PhaseGrid<T>, f: &[T]) -> T {
    second_moment(grid, f) * T::lit(0.5)
}

fn second_moment<T: Real>(grid: &PhaseGrid<T>, f: &[T]) -> T {
    let vs = grid.velocity.centers();
    let s: T = f
        .chunks_exact(grid.n_v())
        .map(|col| col.iter().zip(vs).map(|(&a, &v)| a * v * v).sum::<T>())
        .sum();
    s * grid.cell_volume()
}

fn entropy<T: Real>(grid: &PhaseGrid<T>, f: &[T]) -> T {
    f.iter().map(|v| v.xlogx()).sum::<T>() * grid.cell_volume()
}

/// `F_ε = (1/ε)∬ f log f + ∬ f|v|²/2 + (1/ε)∫ ρV + (1/2ε)∫ Φρ`.
pub fn free_energy_kinetic<T: Real>(grid: &PhaseGrid<T>, f: &[T], params: &ScalingParams<T>) -> T {
    let rho = moments(grid, f).rho;
    free_energy_kinetic_with(grid, f, &rho, params)
}

fn free_energy_kinetic_with<T: Real>(grid: &PhaseGrid<T>, f: &[T], rho: &[T], params: &ScalingParams<T>) -> T {
    let eps = params.eps;
    let xs = grid.spatial.centers();
    let mut potential: Vec<T> = rho
        .iter()
        .zip(xs)
        .map(|(&r, &x)| params.confinement.potential(x) * r)
        .collect();
    if params.interaction {
        let field = solve_poisson_unchecked(&grid.spatial, rho);
        for ((p, &phi), &r) in potential.iter_mut().zip(&field.phi).zip(rho) {
            *p = *p + T::lit(0.5) * phi * r;
        }
    }
    entropy(grid, f) / eps + kinetic_energy(grid, f) + grid.spatial.quad_unchecked(&potential) / eps
}

/// `D_ε = ∬ (1/f) |(1/ε) ∂v f − (u − v) f|²`.
///
/// `∂v f / f` is taken as the central difference of `log f`, which is exact
/// on Gaussians. Cells with `f < ρ_floor Δv` contribute nothing; next to such
/// cells the difference of `f` itself is used.
pub fn dissipation<T: Real>(grid: &PhaseGrid<T>, f: &[T], eps: T) -> T {
    let mom = moments(grid, f);
    dissipation_with(grid, f, &mom, eps)
}

fn dissipation_with<T: Real>(grid: &PhaseGrid<T>, f: &[T], mom: &MomentSet<T>, eps: T) -> T {
    let n_v = grid.n_v();
    let dv = grid.velocity.dv();
    let vs = grid.velocity.centers();
    let thr = T::lit(RHO_FLOOR) * dv;
    let inv2dv = T::one() / (T::lit(2.0) * dv);
    let mut total = T::zero();
    for (col, &u) in f.chunks_exact(n_v).zip(&mom.u) {
        for j in 0..n_v {
            let fj = col[j];
            if fj < thr {
                continue;
            }
            let score = if j == 0 {
                (col[1] - fj) / (dv * fj)
            } else if j == n_v - 1 {
                (fj - col[j - 1]) / (dv * fj)
            } else if col[j - 1] >= thr && col[j + 1] >= thr {
                (col[j + 1].ln() - col[j - 1].ln()) * inv2dv
            } else {
                (col[j + 1] - col[j - 1]) * inv2dv / fj
            };
            let r = score / eps - (u - vs[j]);
            total = total + fj * r * r;
        }
    }
    total * grid.cell_volume()
}

/// Cellwise `p(ρ|ρ̄) = ρ log(ρ/ρ̄) − (ρ − ρ̄)`.
pub fn p_cell<T: Real>(rho: T, rho_bar: T) -> T {
    if rho <= T::zero() {
        return rho_bar.max(T::zero());
    }
    rho * (rho / rho_bar).ln() - (rho - rho_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeEntropy<T> {
    /// `∫ p(ρ|ρ̄) dx`.
    pub value: T,
    /// Cells where `ρ̄ < ρ_floor ≤ ρ`; each contributes `p(ρ|ρ_floor)`.
    pub sentinel_cells: usize,
}

pub fn relative_entropy_p<T: Real>(grid: &SpatialGrid<T>, rho: &[T], rho_bar: &[T]) -> Result<RelativeEntropy<T>> {
    if rho.len() != grid.len() || rho_bar.len() != grid.len() {
        return Err(Error::GridMismatch("densities and grid differ in length".into()));
    }
    let floor = T::lit(RHO_FLOOR);
    let mut sentinel_cells = 0;
    let cells: Vec<T> = rho
        .iter()
        .zip(rho_bar)
        .map(|(&r, &rb)| {
            let (r, rb) = (r.max(T::zero()), rb.max(T::zero()));
            if rb < floor {
                if r >= floor {
                    sentinel_cells += 1;
                    p_cell(r, floor)
                } else {
                    // Both below the floor: the gap is invisible.
                    T::zero()
                }
            } else {
                p_cell(r, rb)
            }
        })
        .collect();
    Ok(RelativeEntropy {
        value: grid.quad_unchecked(&cells),
        sentinel_cells,
    })
}

/// `H_ε` split into its three nonnegative parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulatedEnergy<T> {
    /// `∫ ρ |u − ū|²`.
    pub velocity_gap: T,
    /// `∫ p(ρ|ρ̄)`.
    pub p_rel: T,
    /// `∫ |∇(Φ − Φ̄)|²`.
    pub elec_diff: T,
    pub sentinel_cells: usize,
    pub eps: T,
}

impl<T: Real> ModulatedEnergy<T> {
    pub fn velocity_part(&self) -> T {
        T::lit(0.5) * self.velocity_gap
    }

    pub fn entropy_part(&self) -> T {
        self.p_rel / self.eps
    }

    pub fn field_part(&self) -> T {
        self.elec_diff / (T::lit(2.0) * self.eps)
    }

    pub fn total(&self) -> T {
        self.velocity_part() + self.entropy_part() + self.field_part()
    }
}

/// `H_ε = ½∫ρ|u − ū|² + (1/ε)∫p(ρ|ρ̄) + (1/2ε)∫|∇(Φ − Φ̄)|²` with
/// `ū = −(V' + Φ̄' + (log ρ̄)')`.
pub fn modulated_energy<T: Real>(
    grid: &PhaseGrid<T>,
    f: &[T],
    rho_bar: &[T],
    params: &ScalingParams<T>,
) -> Result<ModulatedEnergy<T>> {
    let mom = moments(grid, f);
    modulated_energy_with(grid, &mom, rho_bar, params)
}

fn modulated_energy_with<T: Real>(
    grid: &PhaseGrid<T>,
    mom: &MomentSet<T>,
    rho_bar: &[T],
    params: &ScalingParams<T>,
) -> Result<ModulatedEnergy<T>> {
    let sg = &grid.spatial;
    let rel = relative_entropy_p(sg, &mom.rho, rho_bar)?;
    let model = FluidModel::from(params);
    let u_bar = fluid_velocity(sg, rho_bar, &model).centers;
    let gap: Vec<T> = mom
        .rho
        .iter()
        .zip(mom.u.iter().zip(&u_bar))
        .map(|(&r, (&u, &ub))| r * (u - ub) * (u - ub))
        .collect();
    let elec_diff = if params.interaction {
        electric_energy_diff(&field_for(sg, &mom.rho, params), &field_for(sg, rho_bar, params))?
    } else {
        T::zero()
    };
    Ok(ModulatedEnergy {
        velocity_gap: sg.quad_unchecked(&gap),
        p_rel: rel.value,
        elec_diff,
        sentinel_cells: rel.sentinel_cells,
        eps: params.eps,
    })
}

/// Initial kinetic-energy and entropy excess of `f₀` over its moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyGap<T> {
    /// `∫(∫ f₀|v|²/2 dv − ρ₀|u₀|²) dx`; pairs the two terms with different weights.
    pub m0_printed: T,
    /// `∫(∫ f₀|v|²/2 dv − ρ₀|u₀|²/2) dx`.
    pub m0_half: T,
    /// `∫(∫ f₀ log f₀ dv − ρ₀ log ρ₀) dx`.
    pub m_bar0: T,
}

impl<T: Real> EntropyGap<T> {
    pub fn printed_is_nonnegative(&self) -> bool {
        self.m0_printed >= T::zero()
    }

    pub fn half_is_nonnegative(&self) -> bool {
        self.m0_half >= T::zero()
    }

    /// Whether `M̄₀ ≥ −tol`. Local Maxwellians give `M̄₀ = ½log(ε/2π) − ½`
    /// per unit mass, which is negative for every `ε < 1`.
    pub fn entropy_gap_is_nonnegative(&self, tol: T) -> bool {
        self.m_bar0 >= -tol
    }
}

pub fn entropy_gap_initial<T: Real>(grid: &PhaseGrid<T>, f0: &[T]) -> EntropyGap<T> {
    let mom = moments(grid, f0);
    let sg = &grid.spatial;
    let rho_u2: T = sg.quad_unchecked(
        &mom.rho
            .iter()
            .zip(&mom.u)
            .map(|(&r, &u)| r * u * u)
            .collect::<Vec<_>>(),
    );
    let ke = kinetic_energy(grid, f0);
    let rho_log: T = sg.quad_unchecked(&mom.rho.iter().map(|r| r.xlogx()).collect::<Vec<_>>());
    EntropyGap {
        m0_printed: ke - rho_u2,
        m0_half: ke - T::lit(0.5) * rho_u2,
        m_bar0: entropy(grid, f0) - rho_log,
    }
}

/// Mesoscopic versus macroscopic entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimizationAudit<T> {
    /// `∫ K_ε(f) = ∬ f|v|²/2 + (1/ε)∬ f log f`.
    pub k_int: T,
    /// `∫ E_ε(U) = ∫ |m|²/(2ρ) + (1/ε) ρ log ρ`.
    pub e_int: T,
    /// `K − E`.
    pub gap: T,
    /// Value of `K − E` at a local Maxwellian of the same mass:
    /// `(mass/2ε) log(ε/2π)`.
    pub offset: T,
}

impl<T: Real> MinimizationAudit<T> {
    /// `K − E − offset`, the relative entropy of `f` with respect to its local
    /// Maxwellian divided by `ε`; nonnegative.
    pub fn normalized_gap(&self) -> T {
        self.gap - self.offset
    }
}

pub fn minimization_audit<T: Real>(grid: &PhaseGrid<T>, f: &[T], eps: T) -> MinimizationAudit<T> {
    let mom = moments(grid, f);
    minimization_audit_with(grid, f, &mom, eps)
}

fn minimization_audit_with<T: Real>(grid: &PhaseGrid<T>, f: &[T], mom: &MomentSet<T>, eps: T) -> MinimizationAudit<T> {
    let sg = &grid.spatial;
    let k_int = kinetic_energy(grid, f) + entropy(grid, f) / eps;
    let floor = T::lit(RHO_FLOOR);
    let e_cells: Vec<T> = mom
        .rho
        .iter()
        .zip(&mom.momentum)
        .map(|(&r, &m)| {
            let bulk = if r >= floor { m * m / (T::lit(2.0) * r) } else { T::zero() };
            bulk + r.xlogx() / eps
        })
        .collect();
    let e_int = sg.quad_unchecked(&e_cells);
    let mass = sg.quad_unchecked(&mom.rho);
    MinimizationAudit {
        k_int,
        e_int,
        gap: k_int - e_int,
        offset: mass / (T::lit(2.0) * eps) * (eps / (T::lit(2.0) * T::PI())).ln(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Audit<T> {
    /// `∫ |ρ − ρ̄|`.
    pub l1: T,
    /// `4 ∫ p(ρ|ρ̄)`.
    pub bound: T,
    pub sentinel_cells: usize,
}

impl<T: Real> L1Audit<T> {
    pub const CONSTANT: f64 = 4.0;

    pub fn holds(&self, tol: T) -> bool {
        self.l1 * self.l1 <= self.bound + tol
    }
}

/// `(∫|ρ − ρ̄|)² ≤ 4 ∫ p(ρ|ρ̄)` for unit masses.
pub fn l1_audit<T: Real>(grid: &SpatialGrid<T>, rho: &[T], rho_bar: &[T]) -> Result<L1Audit<T>> {
    let rel = relative_entropy_p(grid, rho, rho_bar)?;
    let diff: Vec<T> = rho.iter().zip(rho_bar).map(|(&a, &b)| (a - b).abs()).collect();
    Ok(L1Audit {
        l1: grid.quad_unchecked(&diff),
        bound: T::lit(L1Audit::<T>::CONSTANT) * rel.value,
        sentinel_cells: rel.sentinel_cells,
    })
}

/// `∫ |ρ/ε − ∫(v − u)² f dv| dx` and its bound
/// `(∬ f|v − u|²)^{1/2} D_ε^{1/2}`.
pub fn pressure_deviation_bound<T: Real>(grid: &PhaseGrid<T>, f: &[T], eps: T) -> (T, T) {
    let dev = pressure_deviation(grid, f, eps);
    let lhs = grid.spatial.quad_unchecked(&dev.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let mom = moments(grid, f);
    let vs = grid.velocity.centers();
    let spread: T = f
        .chunks_exact(grid.n_v())
        .zip(&mom.u)
        .map(|(col, &u)| col.iter().zip(vs).map(|(&a, &v)| a * (v - u) * (v - u)).sum::<T>())
        .sum::<T>()
        * grid.cell_volume();
    let rhs = (spread * dissipation_with(grid, f, &mom, eps)).sqrt();
    (lhs, rhs)
}

/// Time integrals for the two entropy inequalities, accumulated by the
/// trapezoid rule over the samples passed to [`EntropyBudget::record`].
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBudget<T> {
    eps: T,
    delta: T,
    dim: T,
    t0: T,
    f0: T,
    last: Option<BudgetRates<T>>,
    /// `∫ ε^{-2-δ} D_ε`.
    pub int_dissipation: T,
    /// `∫ ε^{-1} ∬ f|v|²`.
    pub int_friction: T,
    /// `∫ ε^{-1} ∫ ρ|u|²`.
    pub int_bulk: T,
    /// `∫ ∬ f|v|²`.
    pub int_second_moment: T,
    pub t: T,
    pub f_eps: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BudgetRates<T> {
    t: T,
    dissipation: T,
    second_moment: T,
    bulk: T,
}

/// Slacks of the entropy inequalities at the current sample; nonnegative
/// when an inequality holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropySlacks<T> {
    /// `F(0) + d ε^{-2} t − F(t)`.
    pub first: T,
    /// `F(0) + ½ε^δ ∫∬f|v|² − F(t) − ∫(½ε^{-2-δ}D_ε + ε^{-1}∫ρ|u|²)`.
    pub refined: T,
    /// As `refined` with the full `ε^{-2-δ}D_ε`; not implied by the energy
    /// identity away from `D_ε = 0`.
    pub refined_full_d: T,
    /// `F(t) − F(0) − d ε^{-2} t + ∫(ε^{-1}∬f|v|² + ε^{-2-δ}D_ε)`; zero for
    /// the continuous dynamics.
    pub identity_residual: T,
    /// `d ε^{-2} t`.
    pub source: T,
}

impl<T: Real> EntropyBudget<T> {
    pub fn new(params: &ScalingParams<T>) -> Self {
        Self {
            eps: params.eps,
            delta: params.delta,
            dim: T::from_usize_lossy(params.dim),
            t0: T::zero(),
            f0: T::zero(),
            last: None,
            int_dissipation: T::zero(),
            int_friction: T::zero(),
            int_bulk: T::zero(),
            int_second_moment: T::zero(),
            t: T::zero(),
            f_eps: T::zero(),
        }
    }

    /// Adds a sample. The first call fixes `F(0)` and the origin of time.
    pub fn record(&mut self, t: T, f_eps: T, dissipation: T, second_moment: T, bulk: T) {
        let rates = BudgetRates {
            t,
            dissipation,
            second_moment,
            bulk,
        };
        match self.last {
            None => {
                self.t0 = t;
                self.f0 = f_eps;
            }
            Some(prev) => {
                let h = (t - prev.t) * T::lit(0.5);
                let kappa = self.eps.powf(-(T::lit(2.0) + self.delta));
                self.int_dissipation = self.int_dissipation + h * kappa * (prev.dissipation + dissipation);
                self.int_friction = self.int_friction + h * (prev.second_moment + second_moment) / self.eps;
                self.int_bulk = self.int_bulk + h * (prev.bulk + bulk) / self.eps;
                self.int_second_moment = self.int_second_moment + h * (prev.second_moment + second_moment);
            }
        }
        self.last = Some(rates);
        self.t = t;
        self.f_eps = f_eps;
    }

    pub fn initial_free_energy(&self) -> T {
        self.f0
    }

    pub fn slacks(&self) -> EntropySlacks<T> {
        let elapsed = self.t - self.t0;
        let source = self.dim * elapsed / (self.eps * self.eps);
        let half = T::lit(0.5);
        let allowance = self.f0 + half * self.eps.powf(self.delta) * self.int_second_moment - self.f_eps;
        EntropySlacks {
            first: self.f0 + source - self.f_eps,
            refined: allowance - half * self.int_dissipation - self.int_bulk,
            refined_full_d: allowance - self.int_dissipation - self.int_bulk,
            identity_residual: self.f_eps - self.f0 - source + self.int_friction + self.int_dissipation,
            source,
        }
    }
}

/// Rates entering [`EntropyBudget::record`]: `(F_ε, D_ε, ∬f|v|², ∫ρ|u|²)`.
pub fn budget_rates<T: Real>(grid: &PhaseGrid<T>, f: &[T], params: &ScalingParams<T>) -> (T, T, T, T) {
    let mom = moments(grid, f);
    budget_rates_with(grid, f, &mom, params)
}

fn budget_rates_with<T: Real>(grid: &PhaseGrid<T>, f: &[T], mom: &MomentSet<T>, params: &ScalingParams<T>) -> (T, T, T, T) {
    let bulk = grid.spatial.quad_unchecked(
        &mom.rho
            .iter()
            .zip(&mom.u)
            .map(|(&r, &u)| r * u * u)
            .collect::<Vec<_>>(),
    );
    (
        free_energy_kinetic_with(grid, f, &mom.rho, params),
        dissipation_with(grid, f, mom, params.eps),
        second_moment(grid, f),
        bulk,
    )
}

/// One time sample of every monitored quantity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DiagnosticsRecord<T> {
    pub t: T,
    pub mass: T,
    pub momentum: T,
    pub f_eps: T,
    pub d_eps: T,
    pub p_rel: T,
    pub h_eps: T,
    pub elec_diff: T,
    pub l1: T,
    pub vel_gap: T,
    pub k_int: T,
    pub e_int: T,
    /// Largest boundary-cell mass fraction of the kinetic and fluid densities.
    pub boundary_mass: T,
    pub kinetic_energy: T,
    pub fluid_mass: T,
    pub fluid_free_energy: T,
    /// `K − E` minus its Maxwellian value.
    pub min_gap: T,
    /// `‖∇(Φ − Φ̄)‖`, the H⁻¹ surrogate.
    pub hminus1: T,
    /// Dual-norm distance of `ρ` and `ρ̄` in `H⁻¹`.
    pub hminus1_dual: T,
    /// `4 ∫ p(ρ|ρ̄)`.
    pub l1_bound: T,
    pub sentinel_cells: T,
    pub min_f: T,
    /// `∫₀ᵗ ∫ ρ|u − ū|²`.
    pub vel_gap_int: T,
    pub slack_first: T,
    pub slack_refined: T,
    pub slack_refined_full_d: T,
    pub identity_residual: T,
}

impl<T: Real> DiagnosticsRecord<T> {
    pub const COLUMNS: [&'static str; 27] = [
        "t",
        "mass",
        "momentum",
        "F_eps",
        "D_eps",
        "p_rel",
        "H_eps",
        "elec_diff",
        "L1",
        "vel_gap",
        "K_int",
        "E_int",
        "boundary_mass",
        "kinetic_energy",
        "fluid_mass",
        "fluid_free_energy",
        "min_gap",
        "hminus1",
        "hminus1_dual",
        "l1_bound",
        "sentinel_cells",
        "min_f",
        "vel_gap_int",
        "slack_first",
        "slack_refined",
        "slack_refined_full_d",
        "identity_residual",
    ];

    pub fn values(&self) -> [T; 27] {
        [
            self.t,
            self.mass,
            self.momentum,
            self.f_eps,
            self.d_eps,
            self.p_rel,
            self.h_eps,
            self.elec_diff,
            self.l1,
            self.vel_gap,
            self.k_int,
            self.e_int,
            self.boundary_mass,
            self.kinetic_energy,
            self.fluid_mass,
            self.fluid_free_energy,
            self.min_gap,
            self.hminus1,
            self.hminus1_dual,
            self.l1_bound,
            self.sentinel_cells,
            self.min_f,
            self.vel_gap_int,
            self.slack_first,
            self.slack_refined,
            self.slack_refined_full_d,
            self.identity_residual,
        ]
    }

    /// Evaluates every per-snapshot quantity. Time integrals and entropy
    /// slacks are left at zero; see [`Self::with_budget`].
    pub fn evaluate(
        grid: &PhaseGrid<T>,
        f: &[T],
        t: T,
        rho_bar: &[T],
        params: &ScalingParams<T>,
    ) -> Result<Self> {
        if f.len() != grid.len() || rho_bar.len() != grid.n_x() {
            return Err(Error::GridMismatch("state sizes do not match the grid".into()));
        }
        let sg = &grid.spatial;
        let mom = moments(grid, f);
        let (f_eps, d_eps, _, _) = budget_rates_with(grid, f, &mom, params);
        let h = modulated_energy_with(grid, &mom, rho_bar, params)?;
        let min = minimization_audit_with(grid, f, &mom, params.eps);
        let l1 = l1_audit(sg, &mom.rho, rho_bar)?;
        let mass = sg.quad_unchecked(&mom.rho);
        let fluid_mass = sg.quad_unchecked(rho_bar);
        let boundary = (sg.boundary_mass(&mom.rho) / mass).max(sg.boundary_mass(rho_bar) / fluid_mass);
        // The H⁻¹ norms need equal masses; compare the normalized densities.
        let rho_n: Vec<T> = mom.rho.iter().map(|&r| r / mass).collect();
        let bar_n: Vec<T> = rho_bar.iter().map(|&r| r / fluid_mass).collect();
        Ok(Self {
            t,
            mass,
            momentum: mom.total_momentum,
            f_eps,
            d_eps,
            p_rel: h.p_rel,
            h_eps: h.total(),
            elec_diff: h.elec_diff,
            l1: l1.l1,
            vel_gap: h.velocity_gap,
            k_int: min.k_int,
            e_int: min.e_int,
            boundary_mass: boundary,
            kinetic_energy: kinetic_energy(grid, f),
            fluid_mass,
            fluid_free_energy: crate::fluid::free_energy(sg, rho_bar, &FluidModel::from(params)),
            min_gap: min.normalized_gap(),
            hminus1: hminus1_norm(sg, &rho_n, &bar_n)?,
            hminus1_dual: hminus1_dual_norm(sg, &rho_n, &bar_n)?,
            l1_bound: l1.bound,
            sentinel_cells: T::from_usize_lossy(h.sentinel_cells),
            min_f: f.iter().copied().fold(T::infinity(), T::min),
            ..Self::default()
        })
    }

    /// Copies the entropy slacks and the running velocity-gap integral in.
    pub fn with_budget(mut self, slacks: &EntropySlacks<T>, vel_gap_int: T) -> Self {
        self.vel_gap_int = vel_gap_int;
        self.slack_first = slacks.first;
        self.slack_refined = slacks.refined;
        self.slack_refined_full_d = slacks.refined_full_d;
        self.identity_residual = slacks.identity_residual;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;
    use crate::kinetic::{Confinement, Maxwellian};

    fn phase(l: f64, nx: usize, vmax: f64, nv: usize) -> PhaseGrid<f64> {
        PhaseGrid::new(SpatialGrid::symmetric(l, nx).unwrap(), VelocityGrid::new(vmax, nv).unwrap())
    }

    fn gauss(x: f64, m: f64, s: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s).sqrt()
    }

    fn unit_density(g: &SpatialGrid<f64>, m: f64, s: f64) -> Vec<f64> {
        let raw: Vec<f64> = g.centers().iter().map(|&x| gauss(x, m, s)).collect();
        let total = g.quad(&raw).unwrap();
        raw.iter().map(|r| r / total).collect()
    }

    #[test]
    fn free_energy_of_box() {
        // f = 1/volume on [−2,2]×[−1,1]; mean v² over the cell centres.
        let g = phase(2.0, 16, 1.0, 20);
        let p = ScalingParams::new(0.5, 1.0, Confinement::None).unwrap().without_interaction();
        let vol: f64 = 8.0;
        let f = vec![1.0 / vol; g.len()];
        let mean_v2: f64 = g.velocity.centers().iter().map(|v| v * v).sum::<f64>() / 20.0;
        let want = (1.0 / vol).ln() / 0.5 + mean_v2 / 2.0;
        assert!((free_energy_kinetic(&g, &f, &p) - want).abs() < 1e-13);
    }

    #[test]
    fn dissipation_vanishes_at_maxwellian() {
        let eps: f64 = 0.3;
        let g = phase(6.0, 32, 9.0 / eps.sqrt(), 200);
        let rho = unit_density(&g.spatial, 0.0, 1.0);
        let u: Vec<f64> = g.spatial.centers().iter().map(|&x| 0.3 * (x / 3.0).tanh()).collect();
        let f = Maxwellian::new(eps).local_equilibrium(&g, &rho, &u);
        let d = dissipation(&g, &f, eps);
        assert!(d.abs() < 1e-9, "{d}");
    }

    #[test]
    fn dissipation_is_quadratic_in_perturbation() {
        let eps: f64 = 0.5;
        let g = phase(4.0, 16, 9.0 / eps.sqrt(), 256);
        let rho = vec![0.125; 16];
        let base = Maxwellian::new(eps).local_equilibrium(&g, &rho, &[0.0; 16]);
        let pert = |eta: f64| -> f64 {
            let f: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(k, &m)| m * (1.0 + eta * g.velocity.centers()[k % 256].sin()))
                .collect();
            dissipation(&g, &f, eps)
        };
        let (a, b) = (pert(0.1), pert(0.05));
        assert!(a > 0.0 && b > 0.0);
        assert!((a / b - 4.0).abs() < 0.2, "{}", a / b);
    }

    #[test]
    fn relative_entropy_values() {
        assert!((p_cell(2.0f64, 1.0) - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((p_cell(2.0f64, 1.0) - 0.386294).abs() < 1e-6);
        assert_eq!(p_cell(1.5f64, 1.5), 0.0);
        let g = SpatialGrid::symmetric(1.0, 8).unwrap();
        let r = vec![0.5; 8];
        let mut rb = r.clone();
        rb[0] = 0.0;
        let rel = relative_entropy_p(&g, &r, &rb).unwrap();
        assert_eq!(rel.sentinel_cells, 1);
        assert!(rel.value > 1.0);
    }

    #[test]
    fn relative_entropy_quadratic_lower_bound() {
        for (a, b) in [(0.3f64, 1.7f64), (2.0, 0.1), (1.0, 1.0001), (5.0, 4.0)] {
            assert!(p_cell(a, b) >= 0.5 * (1.0 / a).min(1.0 / b) * (a - b).powi(2) - 1e-15);
        }
    }

    #[test]
    fn modulated_energy_of_prepared_data() {
        let eps: f64 = 0.2;
        let g = phase(8.0, 128, 8.0 / eps.sqrt() + 1.0, 256);
        let p = ScalingParams::new(eps, 2.0, Confinement::Quadratic).unwrap();
        let rho = unit_density(&g.spatial, 0.5, 1.0);
        let ub = fluid_velocity(&g.spatial, &rho, &FluidModel::from(&p)).centers;
        let f = Maxwellian::new(eps).local_equilibrium(&g, &rho, &ub);
        let h = modulated_energy(&g, &f, &rho, &p).unwrap();
        assert!(h.velocity_part() < 1e-10);
        assert!(h.entropy_part() < 1e-12);
        assert!(h.field_part() < 1e-12);
        assert!((h.total() - (h.velocity_part() + h.entropy_part() + h.field_part())).abs() < 1e-16);
    }

    #[test]
    fn modulated_energy_of_shifted_velocity() {
        let eps: f64 = 0.25;
        let g = phase(6.0, 64, 8.0 / eps.sqrt() + 1.0, 256);
        let p = ScalingParams::new(eps, 2.0, Confinement::Quadratic).unwrap();
        let rho = unit_density(&g.spatial, 0.0, 1.0);
        let ub = fluid_velocity(&g.spatial, &rho, &FluidModel::from(&p)).centers;
        let shifted: Vec<f64> = ub.iter().map(|u| u + 0.4).collect();
        let f = Maxwellian::new(eps).local_equilibrium(&g, &rho, &shifted);
        let h = modulated_energy(&g, &f, &rho, &p).unwrap();
        assert!((h.velocity_part() - 0.5 * 0.16).abs() < 1e-9);
        assert!(h.p_rel.abs() < 1e-14 && h.elec_diff.abs() < 1e-14);
    }

    #[test]
    fn entropy_gap_of_maxwellian_data() {
        let eps: f64 = 0.3;
        let g = phase(6.0, 64, 8.0 / eps.sqrt() + 1.0, 256);
        let rho = unit_density(&g.spatial, 0.0, 1.0);
        let u: Vec<f64> = g.spatial.centers().iter().map(|&x| 0.2 * x.sin()).collect();
        let f = Maxwellian::new(eps).local_equilibrium(&g, &rho, &u);
        let gap = entropy_gap_initial(&g, &f);
        let closed = Maxwellian::new(eps).entropy();
        assert!((gap.m_bar0 - closed).abs() < 1e-4);
        assert!(!gap.entropy_gap_is_nonnegative(1e-8));
        // Thermal energy ½ε⁻¹ per unit mass.
        assert!((gap.m0_half - 0.5 / eps).abs() < 1e-9);
        assert!(gap.half_is_nonnegative());
    }

    #[test]
    fn entropy_gap_of_cold_data() {
        let g = phase(6.0, 32, 4.0, 800);
        let rho = unit_density(&g.spatial, 0.0, 1.0);
        let s = 0.05;
        let u0 = 1.0;
        let f = g.sample(|x, v| gauss(x, 0.0, 1.0) * gauss(v, u0, s));
        let mass = g.quad(&f).unwrap();
        let f: Vec<f64> = f.iter().map(|a| a / mass).collect();
        let gap = entropy_gap_initial(&g, &f);
        assert!((gap.m0_half - s * s / 2.0).abs() < 1e-6);
        assert!((gap.m0_printed - (s * s / 2.0 - u0 * u0 / 2.0)).abs() < 1e-6);
        assert!(!gap.printed_is_nonnegative());
        let _ = rho;
    }

    #[test]
    fn entropy_gap_translation_invariant() {
        // Shift by three cells so both samples see the same values.
        let g = phase(8.0, 96, 5.0, 64);
        let a = g.sample(|x, v| gauss(x, 0.0, 1.0) * gauss(v, 0.3, 0.8));
        let b = g.sample(|x, v| gauss(x, 0.5, 1.0) * gauss(v, 0.3, 0.8));
        let (ga, gb) = (entropy_gap_initial(&g, &a), entropy_gap_initial(&g, &b));
        assert!((ga.m_bar0 - gb.m_bar0).abs() < 1e-10);
        assert!((ga.m0_half - gb.m0_half).abs() < 1e-10);
    }

    #[test]
    fn minimization_offset_at_maxwellian() {
        let eps: f64 = 0.2;
        let g = phase(6.0, 64, 8.0 / eps.sqrt() + 1.0, 256);
        let rho = unit_density(&g.spatial, 0.0, 1.0);
        let u: Vec<f64> = g.spatial.centers().iter().map(|&x| 0.5 * (x / 2.0).sin()).collect();
        let f = Maxwellian::new(eps).local_equilibrium(&g, &rho, &u);
        let audit = minimization_audit(&g, &f, eps);
        // Independent closed form: ∫ρ/(2ε) log(ε/2π).
        let closed = (eps / (2.0 * std::f64::consts::PI)).ln() / (2.0 * eps);
        assert!(((audit.gap - closed) / closed).abs() < 1e-3);
        assert!(audit.normalized_gap().abs() < 1e-9);
    }

    #[test]
    fn bimodal_gap_exceeds_maxwellian_gap() {
        let eps: f64 = 0.5;
        let g = phase(4.0, 16, 10.0 / eps.sqrt(), 256);
        let rho = vec![0.125; 16];
        let f_m = Maxwellian::new(eps).local_equilibrium(&g, &rho, &[0.0; 16]);
        // Two cold bumps at ±a with total variance 1/ε.
        let s2: f64 = 0.3 / eps;
        let a = (1.0 / eps - s2).sqrt();
        let f_b = g.sample(|_, v| 0.125 * 0.5 * (gauss(v, a, s2.sqrt()) + gauss(v, -a, s2.sqrt())));
        let (m, b) = (minimization_audit(&g, &f_m, eps), minimization_audit(&g, &f_b, eps));
        assert!((kinetic_energy(&g, &f_m) - kinetic_energy(&g, &f_b)).abs() < 1e-9);
        assert!(b.gap > m.gap + 1e-3);
        assert!(b.normalized_gap() > 0.0);
    }

    #[test]
    fn l1_audit_cases() {
        let g = SpatialGrid::symmetric(4.0, 64).unwrap();
        let r = unit_density(&g, 0.0, 1.0);
        let a = l1_audit(&g, &r, &r).unwrap();
        assert_eq!(a.l1, 0.0);
        assert!(a.holds(0.0));
        // Double on the left half, rebalanced on the right.
        let left: f64 = g.quad(&r.iter().zip(g.centers()).map(|(&v, &x)| if x < 0.0 { v } else { 0.0 }).collect::<Vec<_>>()).unwrap();
        let right = 1.0 - left;
        let s: Vec<f64> = r
            .iter()
            .zip(g.centers())
            .map(|(&v, &x)| if x < 0.0 { 1.5 * v } else { v * (1.0 - 0.5 * left / right) })
            .collect();
        let b = l1_audit(&g, &s, &r).unwrap();
        assert!(b.l1 > 0.0 && b.holds(0.0) && b.l1 * b.l1 < b.bound);
        // Near-vacuum reference.
        let mut t = r.clone();
        t[..4].iter_mut().for_each(|v| *v = 0.0);
        let c = l1_audit(&g, &s, &t).unwrap();
        assert!(c.sentinel_cells > 0 || s[..4].iter().all(|&v| v < RHO_FLOOR));
        assert!(c.l1.is_finite() && c.bound.is_finite());
    }

    #[test]
    fn pressure_deviation_is_bounded() {
        let eps: f64 = 0.5;
        let g = phase(4.0, 32, 10.0 / eps.sqrt(), 256);
        let f = g.sample(|x, v| gauss(x, 0.0, 1.0) * (gauss(v, 1.0, 0.7) + 0.5 * gauss(v, -2.0, 1.5)));
        let (lhs, rhs) = pressure_deviation_bound(&g, &f, eps);
        assert!(lhs > 0.0);
        assert!(lhs <= rhs * (1.0 + 1e-6), "{lhs} > {rhs}");
    }

    #[test]
    fn budget_identity_bookkeeping() {
        let p = ScalingParams::new(0.5, 2.0, Confinement::None).unwrap();
        let mut b = EntropyBudget::new(&p);
        // F(t) = F0 + 4t − ∫(2·m2 + 16 D): constant rates m2 = 1, D = 0.1.
        let rate = 4.0 - 2.0 - 16.0 * 0.1;
        for k in 0..=10 {
            let t = 0.1 * k as f64;
            b.record(t, 1.0 + rate * t, 0.1, 1.0, 0.0);
        }
        let s = b.slacks();
        assert!(s.identity_residual.abs() < 1e-13);
        assert!((s.source - 4.0).abs() < 1e-13);
        assert!(s.first > 0.0);
    }

    #[test]
    fn diagnostics_of_prepared_data() {
        let eps: f64 = 0.4;
        let g = phase(8.0, 64, 8.0 / eps.sqrt() + 1.0, 128);
        let p = ScalingParams::new(eps, 2.0, Confinement::Quadratic).unwrap();
        let rho = unit_density(&g.spatial, 0.5, 1.0);
        let ub = fluid_velocity(&g.spatial, &rho, &FluidModel::from(&p)).centers;
        let f = Maxwellian::new(eps).local_equilibrium(&g, &rho, &ub);
        let r = DiagnosticsRecord::evaluate(&g, &f, 0.0, &rho, &p).unwrap();
        assert!(r.is_finite());
        assert!((r.mass - 1.0).abs() < 1e-12);
        assert!(r.p_rel.abs() < 1e-14 && r.l1 < 1e-12 && r.hminus1 < 1e-12);
        assert!(r.min_gap.abs() < 1e-9);
        assert_eq!(DiagnosticsRecord::<f64>::COLUMNS.len(), r.values().len());
        assert_eq!(&DiagnosticsRecord::<f64>::COLUMNS[..13], &[
            "t", "mass", "momentum", "F_eps", "D_eps", "p_rel", "H_eps", "elec_diff", "L1", "vel_gap", "K_int",
            "E_int", "boundary_mass"
        ]);
    }
}
