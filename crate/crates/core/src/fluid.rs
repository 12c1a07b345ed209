//! Limiting aggregation-diffusion equation
//! `∂t ρ̄ = ρ̄'' + (ρ̄ (V' + Φ̄'))'`, `−Φ̄'' = ρ̄`, and its self-similar
//! rescaling `∂t n = n'' + (2t+1)^{-1/2} (n Ψ')'`.
//!
//! Both are advanced with exponentially fitted (Scharfetter–Gummel) fluxes
//! and explicit Euler steps. The flux vanishes exactly when
//! `log ρ̄ + V + Φ̄` is constant across a face, so discrete steady states are
//! preserved to round-off, and every update is a nonnegative combination of
//! neighbours under the step limit.

use crate::error::{Error, Result};
use crate::fields::solve_poisson_unchecked;
use crate::grid::SpatialGrid;
use crate::kinetic::{Confinement, ScalingParams};
use crate::scalar::{Real, RHO_FLOOR};

const NEGATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState<T> {
    pub rho: Vec<T>,
    pub t: T,
}

impl<T: Real> FluidState<T> {
    pub fn new(grid: &SpatialGrid<T>, rho: Vec<T>, t: T) -> Result<Self> {
        check_density(grid, &rho)?;
        Ok(Self { rho, t })
    }

    /// Samples `profile` at cell centres and rescales to unit discrete mass.
    pub fn normalized(grid: &SpatialGrid<T>, profile: impl Fn(T) -> T) -> Result<Self> {
        let raw: Vec<T> = grid.centers().iter().map(|&x| profile(x)).collect();
        check_density(grid, &raw)?;
        let mass = grid.quad_unchecked(&raw);
        if !(mass > T::zero()) {
            return Err(Error::InvalidParameter("initial density has zero mass".into()));
        }
        Ok(Self {
            rho: raw.into_iter().map(|r| r / mass).collect(),
            t: T::zero(),
        })
    }

    pub fn mass(&self, grid: &SpatialGrid<T>) -> T {
        grid.quad_unchecked(&self.rho)
    }
}

fn check_density<T: Real>(grid: &SpatialGrid<T>, rho: &[T]) -> Result<()> {
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
    Ok(())
}

/// Potential landscape seen by the fluid: `V` plus `strength · Φ̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidModel<T> {
    pub confinement: Confinement,
    /// Multiplies the self-consistent potential; 0 switches it off.
    pub strength: T,
}

impl<T: Real> FluidModel<T> {
    pub fn new(confinement: Confinement) -> Self {
        Self {
            confinement,
            strength: T::one(),
        }
    }

    pub fn without_interaction(mut self) -> Self {
        self.strength = T::zero();
        self
    }

    /// Cell-centre potential `ψ = V + strength · Φ̄[ρ]`.
    pub fn potential(&self, grid: &SpatialGrid<T>, rho: &[T]) -> Vec<T> {
        let mut psi: Vec<T> = grid.centers().iter().map(|&x| self.confinement.potential(x)).collect();
        if self.strength != T::zero() {
            let field = solve_poisson_unchecked(grid, rho);
            for (p, phi) in psi.iter_mut().zip(&field.phi) {
                *p = *p + self.strength * *phi;
            }
        }
        psi
    }
}

impl<T: Real> From<&ScalingParams<T>> for FluidModel<T> {
    fn from(p: &ScalingParams<T>) -> Self {
        let m = Self::new(p.confinement);
        if p.interaction {
            m
        } else {
            m.without_interaction()
        }
    }
}

/// Bernoulli function `z / (e^z − 1)`.
#[inline]
fn bernoulli<T: Real>(z: T) -> T {
    if z.abs() < T::lit(1e-8) {
        T::one() - z * T::lit(0.5)
    } else {
        z / z.exp_m1()
    }
}

/// Fluid velocity `ū = −(V' + Φ̄' + (log ρ̄)')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidVelocity<T> {
    /// Cell-centre values; zero where `ρ̄ < ρ_floor`.
    pub centers: Vec<T>,
    /// Face values `−Δ(log ρ̄ + ψ)/Δx` between cells `i` and `i+1`.
    pub faces: Vec<T>,
}

pub fn fluid_velocity<T: Real>(grid: &SpatialGrid<T>, rho: &[T], model: &FluidModel<T>) -> FluidVelocity<T> {
    let floor = T::lit(RHO_FLOOR);
    let psi = model.potential(grid, rho);
    let mu: Vec<T> = rho
        .iter()
        .zip(&psi)
        .map(|(&r, &p)| r.max(floor).ln() + p)
        .collect();
    let grad = grid.grad_unchecked(&mu);
    let centers = grad
        .iter()
        .zip(rho)
        .map(|(&g, &r)| if r >= floor { -g } else { T::zero() })
        .collect();
    let dx = grid.dx();
    let faces = mu.windows(2).map(|w| -(w[1] - w[0]) / dx).collect();
    FluidVelocity { centers, faces }
}

/// Largest step keeping every update a nonnegative combination.
pub fn fluid_stable_dt<T: Real>(grid: &SpatialGrid<T>, psi: &[T]) -> T {
    let dx2 = grid.dx() * grid.dx();
    let n = psi.len();
    let mut worst = T::zero();
    for i in 0..n {
        let right = if i + 1 < n { bernoulli(psi[i + 1] - psi[i]) } else { T::zero() };
        let left = if i > 0 { bernoulli(psi[i - 1] - psi[i]) } else { T::zero() };
        worst = worst.max(right + left);
    }
    dx2 / worst
}

/// One explicit step of the drift-diffusion equation in the potential `psi`
/// with closed ends.
fn sg_update<T: Real>(grid: &SpatialGrid<T>, rho: &mut [T], psi: &[T], dt: T) -> Result<()> {
    let limit = fluid_stable_dt(grid, psi);
    if dt > limit * (T::one() + T::lit(1e-12)) {
        return Err(Error::Cfl {
            direction: "fluid",
            dt: dt.to_f64_lossy(),
            limit: limit.to_f64_lossy(),
            index: 0,
        });
    }
    let n = rho.len();
    let c = dt / (grid.dx() * grid.dx());
    // Δx times the rightward flux through face i+½.
    let flux: Vec<T> = (0..n - 1)
        .map(|i| {
            let z = psi[i + 1] - psi[i];
            bernoulli(z) * rho[i] - bernoulli(-z) * rho[i + 1]
        })
        .collect();
    for i in 0..n {
        let right = if i + 1 < n { flux[i] } else { T::zero() };
        let left = if i > 0 { flux[i - 1] } else { T::zero() };
        rho[i] = rho[i] - c * (right - left);
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
    Ok(())
}

/// Advances `ρ̄` by `dt`. The potential is evaluated at the start of the step.
pub fn fluid_step<T: Real>(
    grid: &SpatialGrid<T>,
    state: &mut FluidState<T>,
    model: &FluidModel<T>,
    dt: T,
) -> Result<()> {
    let psi = model.potential(grid, &state.rho);
    sg_update(grid, &mut state.rho, &psi, dt)?;
    state.t = state.t + dt;
    Ok(())
}

/// Steps to exactly `t_end` using `fraction` of the stable step, calling
/// `on_step` after each step.
pub fn advance_fluid_to<T: Real>(
    grid: &SpatialGrid<T>,
    state: &mut FluidState<T>,
    model: &FluidModel<T>,
    t_end: T,
    fraction: T,
    mut on_step: impl FnMut(&FluidState<T>),
) -> Result<()> {
    let tiny = t_end.abs().max(T::one()) * T::lit(1e-12);
    while state.t < t_end - tiny {
        let psi = model.potential(grid, &state.rho);
        let dt = (fraction * fluid_stable_dt(grid, &psi)).min(t_end - state.t);
        sg_update(grid, &mut state.rho, &psi, dt)?;
        state.t = state.t + dt;
        on_step(state);
    }
    Ok(())
}

/// Interaction weight of the physical free energy.
pub const INTERACTION_WEIGHT: f64 = 0.5;

/// `E[ρ̄] = ∫ ρ̄ log ρ̄ + ∫ V ρ̄ + ½ ∫ Φ̄ ρ̄` with `0 log 0 = 0`.
pub fn free_energy<T: Real>(grid: &SpatialGrid<T>, rho: &[T], model: &FluidModel<T>) -> T {
    free_energy_weighted(grid, rho, model, T::lit(INTERACTION_WEIGHT))
}

/// [`free_energy`] with the interaction term weighted by `weight` instead of ½.
pub fn free_energy_weighted<T: Real>(grid: &SpatialGrid<T>, rho: &[T], model: &FluidModel<T>, weight: T) -> T {
    let mut integrand: Vec<T> = rho
        .iter()
        .zip(grid.centers())
        .map(|(&r, &x)| r.xlogx() + model.confinement.potential(x) * r)
        .collect();
    if model.strength != T::zero() {
        let field = solve_poisson_unchecked(grid, rho);
        for ((e, &phi), &r) in integrand.iter_mut().zip(&field.phi).zip(rho) {
            *e = *e + weight * model.strength * phi * r;
        }
    }
    grid.quad_unchecked(&integrand)
}

/// Discrete chemical potential `log ρ̄ + V + Φ̄` and its spread over cells with
/// `ρ̄ ≥ bulk · max ρ̄`.
pub fn chemical_potential_spread<T: Real>(grid: &SpatialGrid<T>, rho: &[T], model: &FluidModel<T>, bulk: T) -> T {
    let psi = model.potential(grid, rho);
    let cut = bulk * rho.iter().copied().fold(T::zero(), T::max);
    let (lo, hi) = rho
        .iter()
        .zip(&psi)
        .filter(|(&r, _)| r >= cut && r > T::zero())
        .map(|(&r, &p)| r.ln() + p)
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), m| (lo.min(m), hi.max(m)));
    hi - lo
}

/// Solution of the rescaled equation on its own grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledState<T> {
    pub n: Vec<T>,
    /// Rescaled time `t̄ = (e^{2t} − 1)/2`.
    pub t_bar: T,
}

impl<T: Real> RescaledState<T> {
    /// Initial datum `n(·, 0) = ρ̄₀` sampled on `grid`. The change of
    /// variables is derived for `V = |x|²/2`; other confinements are rejected.
    pub fn from_profile(grid: &SpatialGrid<T>, confinement: Confinement, profile: impl Fn(T) -> T) -> Result<Self> {
        if !confinement.is_confined() {
            return Err(Error::InvalidParameter(
                "the rescaled equation requires the quadratic confinement".into(),
            ));
        }
        let n: Vec<T> = grid.centers().iter().map(|&x| profile(x)).collect();
        check_density(grid, &n)?;
        Ok(Self { n, t_bar: T::zero() })
    }

    pub fn physical_time(&self) -> T {
        physical_time(self.t_bar)
    }
}

/// `t = ½ log(2 t̄ + 1)`.
pub fn physical_time<T: Real>(t_bar: T) -> T {
    T::lit(0.5) * (T::lit(2.0) * t_bar).ln_1p()
}

/// `t̄ = (e^{2t} − 1)/2`.
pub fn rescaled_time<T: Real>(t: T) -> T {
    T::lit(0.5) * (T::lit(2.0) * t).exp_m1()
}

/// Interaction strength `(2t̄ + 1)^{-1/2}` of the rescaled equation.
pub fn rescaled_strength<T: Real>(t_bar: T) -> T {
    (T::lit(2.0) * t_bar + T::one()).sqrt().recip()
}

fn rescaled_model<T: Real>(t_bar: T) -> FluidModel<T> {
    FluidModel {
        confinement: Confinement::None,
        strength: rescaled_strength(t_bar),
    }
}

/// Stable step for the rescaled equation at the current state.
pub fn rescaled_stable_dt<T: Real>(grid: &SpatialGrid<T>, state: &RescaledState<T>) -> T {
    fluid_stable_dt(grid, &rescaled_model(state.t_bar).potential(grid, &state.n))
}

/// One explicit step of `∂t n = n'' + (2t̄+1)^{-1/2} (n Ψ')'`.
pub fn rescaled_step<T: Real>(grid: &SpatialGrid<T>, state: &mut RescaledState<T>, dt: T) -> Result<()> {
    let psi = rescaled_model(state.t_bar).potential(grid, &state.n);
    sg_update(grid, &mut state.n, &psi, dt)?;
    state.t_bar = state.t_bar + dt;
    Ok(())
}

/// Advances the rescaled solution to `t̄ = t_bar_end`.
pub fn advance_rescaled_to<T: Real>(
    grid: &SpatialGrid<T>,
    state: &mut RescaledState<T>,
    t_bar_end: T,
    fraction: T,
    mut on_step: impl FnMut(&RescaledState<T>),
) -> Result<()> {
    let tiny = t_bar_end.abs().max(T::one()) * T::lit(1e-12);
    while state.t_bar < t_bar_end - tiny {
        let dt = (fraction * rescaled_stable_dt(grid, state)).min(t_bar_end - state.t_bar);
        rescaled_step(grid, state, dt)?;
        on_step(state);
    }
    Ok(())
}

/// `ρ̄(x, t) = e^t n(e^t x, t̄)` on `target`, by linear interpolation of the
/// cell-centre values of `n` (zero outside its grid).
pub fn map_back<T: Real>(
    source: &SpatialGrid<T>,
    state: &RescaledState<T>,
    target: &SpatialGrid<T>,
) -> FluidState<T> {
    let t = state.physical_time();
    let scale = t.exp();
    let rho = target
        .centers()
        .iter()
        .map(|&x| scale * interpolate(source, &state.n, scale * x))
        .collect();
    FluidState { rho, t }
}

fn interpolate<T: Real>(grid: &SpatialGrid<T>, values: &[T], x: T) -> T {
    let n = values.len();
    let dx = grid.dx();
    let s = (x - grid.x_min()) / dx - T::lit(0.5);
    if s < -T::one() || s > T::from_usize_lossy(n) {
        return T::zero();
    }
    let k = s.floor();
    let w = s - k;
    let at = |i: T| -> T {
        if i < T::zero() {
            T::zero()
        } else {
            values.get(i.to_usize().unwrap_or(usize::MAX)).copied().unwrap_or(T::zero())
        }
    };
    (T::one() - w) * at(k) + w * at(k + T::one())
}

/// Discrete `L^p` norm; `p = ∞` gives the maximum modulus.
pub fn lp_norm<T: Real>(grid: &SpatialGrid<T>, values: &[T], p: T) -> Result<T> {
    if !(p >= T::one()) {
        return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
    }
    if p.is_infinite() {
        return Ok(values.iter().map(|v| v.abs()).fold(T::zero(), T::max));
    }
    let s: T = values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((s * grid.dx()).powf(p.recip()))
}

/// `Σ_{j≤k} max_i (1 + x_i²)^{r/2} |∂^j ρ̄(x_i)|` with derivatives by repeated
/// central differences.
pub fn weighted_norm<T: Real>(grid: &SpatialGrid<T>, values: &[T], k: usize, r: T) -> Result<T> {
    if k > 3 {
        return Err(Error::InvalidParameter(format!("derivative order {k} exceeds 3")));
    }
    let weights: Vec<T> = grid
        .centers()
        .iter()
        .map(|&x| (T::one() + x * x).powf(r * T::lit(0.5)))
        .collect();
    let mut total = T::zero();
    let mut d = values.to_vec();
    for j in 0..=k {
        if j > 0 {
            d = grid.grad_unchecked(&d);
        }
        total = total
            + d.iter()
                .zip(&weights)
                .map(|(v, w)| v.abs() * *w)
                .fold(T::zero(), T::max);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: f64, n: usize) -> SpatialGrid<f64> {
        SpatialGrid::symmetric(l, n).unwrap()
    }

    fn heat_kernel(x: f64, var: f64) -> f64 {
        (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn bernoulli_branches_agree() {
        for z in [-1e-8f64, -1e-9, 0.0, 1e-9, 1e-8] {
            let direct: f64 = if z == 0.0 { 1.0 } else { z / z.exp_m1() };
            assert!((bernoulli(z) - direct).abs() < 1e-15);
        }
        assert!((bernoulli(2.0f64) - bernoulli(-2.0f64) * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pure_heat_equation() {
        let g = grid(8.0, 256);
        let model = FluidModel::new(Confinement::None).without_interaction();
        let mut s = FluidState::normalized(&g, |x| heat_kernel(x, 0.5)).unwrap();
        advance_fluid_to(&g, &mut s, &model, 0.5, 0.4, |_| {}).unwrap();
        let err = g
            .centers()
            .iter()
            .zip(&s.rho)
            .map(|(&x, &r)| (r - heat_kernel(x, 1.5)).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-4, "{err}");
    }

    #[test]
    fn stationary_state_is_preserved() {
        let g = grid(8.0, 128);
        let model = FluidModel::new(Confinement::Quadratic);
        let mut s = FluidState::normalized(&g, |x| heat_kernel(x, 1.0)).unwrap();
        // Fixed-point iteration on ρ ∝ exp(−V − Φ̄[ρ]).
        for _ in 0..200 {
            let psi = model.potential(&g, &s.rho);
            let raw: Vec<f64> = psi.iter().map(|p| (-p).exp()).collect();
            let m = g.quad(&raw).unwrap();
            let next: Vec<f64> = raw.iter().map(|r| 0.5 * r / m).collect();
            s.rho = s.rho.iter().zip(&next).map(|(a, b)| 0.5 * a + b).collect();
        }
        assert!(chemical_potential_spread(&g, &s.rho, &model, 1e-8) < 1e-10);
        let before = s.rho.clone();
        let psi = model.potential(&g, &s.rho);
        let dt = 0.4 * fluid_stable_dt(&g, &psi);
        fluid_step(&g, &mut s, &model, dt).unwrap();
        let change = s.rho.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change < 1e-12 * dt.max(1e-3), "{change}");
    }

    #[test]
    fn mass_after_many_steps() {
        let g = grid(8.0, 64);
        let model = FluidModel::new(Confinement::Quadratic);
        let mut s = FluidState::normalized(&g, |x| heat_kernel(x - 1.0, 2.0)).unwrap();
        let mut steps = 0;
        while steps < 10_000 {
            let psi = model.potential(&g, &s.rho);
            let dt = 0.4 * fluid_stable_dt(&g, &psi);
            fluid_step(&g, &mut s, &model, dt).unwrap();
            steps += 1;
        }
        assert!((s.mass(&g) - 1.0).abs() < 1e-10);
        assert!(s.rho.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn step_limit_is_enforced() {
        let g = grid(4.0, 32);
        let model = FluidModel::new(Confinement::Quadratic);
        let mut s = FluidState::normalized(&g, |x| heat_kernel(x, 1.0)).unwrap();
        let err = fluid_step(&g, &mut s, &model, 1.0).unwrap_err();
        assert!(matches!(err, Error::Cfl { direction: "fluid", .. }));
    }

    #[test]
    fn free_energy_of_uniform_density() {
        let g = grid(2.0, 40);
        let model = FluidModel::new(Confinement::None).without_interaction();
        let rho = vec![0.25; 40];
        assert!((free_energy(&g, &rho, &model) - 0.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn free_energy_decays() {
        let g = grid(8.0, 128);
        let model = FluidModel::new(Confinement::Quadratic);
        let mut s = FluidState::normalized(&g, |x| heat_kernel(x - 1.0, 0.3)).unwrap();
        let mut e = free_energy(&g, &s.rho, &model);
        advance_fluid_to(&g, &mut s, &model, 1.0, 0.4, |st| {
            let next = free_energy(&g, &st.rho, &model);
            assert!(next <= e + 1e-12, "{next} > {e}");
            e = next;
        })
        .unwrap();
    }

    #[test]
    fn doubled_interaction_weight_breaks_decay() {
        // A wide profile contracting in the trap: ∫Φ̄ρ̄ rises, and once the
        // dissipation is small the doubled weight lets the functional grow.
        let g = grid(12.0, 96);
        let model = FluidModel::new(Confinement::Quadratic);
        let mut s = FluidState::normalized(&g, |x| heat_kernel(x, 9.0)).unwrap();
        let mut e = free_energy_weighted(&g, &s.rho, &model, 1.0);
        let mut rises = 0;
        advance_fluid_to(&g, &mut s, &model, 6.0, 0.4, |st| {
            let next = free_energy_weighted(&g, &st.rho, &model, 1.0);
            if next > e + 1e-12 {
                rises += 1;
            }
            e = next;
        })
        .unwrap();
        assert!(rises > 0);
    }

    #[test]
    fn fluid_velocity_of_gaussian() {
        let g = grid(8.0, 128);
        let model = FluidModel::new(Confinement::Quadratic).without_interaction();
        let rho: Vec<f64> = g.centers().iter().map(|&x| heat_kernel(x - 0.5, 1.0)).collect();
        let u = fluid_velocity(&g, &rho, &model);
        // −(x − (x − 0.5)) = −0.5 everywhere (central differences are exact on quadratics).
        // Bulk only: the far tails fall below the density floor.
        for (i, &x) in g.centers().iter().enumerate().filter(|(_, x)| x.abs() < 5.0) {
            assert!((u.centers[i] + 0.5).abs() < 1e-9, "{i}: {}", u.centers[i]);
            assert!((u.faces[i] + 0.5).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn map_back_at_zero_is_identity() {
        let g = grid(8.0, 64);
        let s = RescaledState::from_profile(&g, Confinement::Quadratic, |x| heat_kernel(x, 1.0)).unwrap();
        let back = map_back(&g, &s, &g);
        assert_eq!(back.t, 0.0);
        for (a, b) in back.rho.iter().zip(&s.n) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rescaling_requires_confinement() {
        let g = grid(8.0, 64);
        assert!(RescaledState::from_profile(&g, Confinement::None, |x| heat_kernel(x, 1.0)).is_err());
    }

    #[test]
    fn map_back_preserves_mass() {
        let g = grid(8.0, 256);
        let wide = grid(12.0, 384);
        let mut s = RescaledState::from_profile(&wide, Confinement::Quadratic, |x| heat_kernel(x, 1.0)).unwrap();
        s.t_bar = rescaled_time(0.3);
        let back = map_back(&wide, &s, &g);
        assert!((back.t - 0.3).abs() < 1e-15);
        assert!((back.mass(&g) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn time_maps_are_inverse() {
        for t in [0.0f64, 0.1, 0.3, 2.0] {
            assert!((physical_time(rescaled_time(t)) - t).abs() < 1e-15);
        }
        assert_eq!(rescaled_strength(0.0), 1.0);
    }

    #[test]
    fn lp_norms() {
        let g = grid(2.0, 40);
        let v = vec![0.25; 40];
        assert!((lp_norm(&g, &v, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((lp_norm(&g, &v, 2.0).unwrap() - 0.25f64.sqrt()).abs() < 1e-14);
        assert_eq!(lp_norm(&g, &v, f64::INFINITY).unwrap(), 0.25);
        assert!(lp_norm(&g, &v, 0.5).is_err());
    }

    #[test]
    fn sup_norm_decreases_under_diffusion() {
        let g = grid(8.0, 128);
        let model = FluidModel::new(Confinement::None).without_interaction();
        let mut s = FluidState::normalized(&g, |x| heat_kernel(x, 0.1)).unwrap();
        let mut prev = lp_norm(&g, &s.rho, f64::INFINITY).unwrap();
        advance_fluid_to(&g, &mut s, &model, 0.1, 0.4, |st| {
            let now = lp_norm(&g, &st.rho, f64::INFINITY).unwrap();
            assert!(now < prev);
            prev = now;
        })
        .unwrap();
    }

    #[test]
    fn weighted_norm_examples() {
        let g = grid(6.0, 1200);
        let gauss: Vec<f64> = g.centers().iter().map(|&x| (-x * x).exp()).collect();
        let w0 = weighted_norm(&g, &gauss, 0, 2.0).unwrap();
        let dense = g
            .centers()
            .iter()
            .map(|&x| (1.0 + x * x) * (-x * x).exp())
            .fold(0.0, f64::max);
        assert_eq!(w0, dense);
        // The maximum sits at x = 0, half a cell from the nearest centre.
        assert!((w0 - 1.0).abs() < 1e-8);
        let tail: Vec<f64> = g.centers().iter().map(|&x| (1.0 + x * x).powf(-1.5)).collect();
        assert!((weighted_norm(&g, &tail, 0, 3.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(weighted_norm(&g, &tail, 4, 3.0).is_err());
        assert!(weighted_norm(&g, &gauss, 3, 2.0).unwrap() > w0);
    }
}
