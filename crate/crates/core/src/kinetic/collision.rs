use crate::grid::PhaseGrid;
use crate::scalar::{Real, RHO_FLOOR};

use super::ScalingParams;

/// How the bulk velocity entering the relaxation substep is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollisionMode {
    /// Momentum decays as `u₀ e^{−t/ε}` inside the substep; exact for the
    /// combined friction and Fokker–Planck operator.
    #[default]
    Exact,
    /// `u` frozen at its substep-start value; the kernel relaxes toward
    /// `u* = u ε^{-(2+δ)}/λ`. Loses the friction on momentum when `λ dt` is
    /// large.
    Frozen,
}

/// Standard deviation of the relaxation kernel over a step `dt`.
pub fn ou_kernel_width<T: Real>(params: &ScalingParams<T>, dt: T) -> T {
    let lambda = params.drift_rate();
    (params.stationary_variance() * -(-T::lit(2.0) * lambda * dt).exp_m1()).sqrt()
}

/// Integrates `∂t f = (1/ε) ∂v(v f) + ε^{-(2+δ)} ∂v((v − u) f + (1/ε) ∂v f)`
/// exactly over `dt`, column by column.
///
/// The operator conserves `ρ` and damps the momentum as `u(t) = u₀ e^{−t/ε}`,
/// so each column is an Ornstein–Uhlenbeck process with a known target. A
/// source cell at `w` spreads into a Gaussian with mean
/// `w e^{−λt} + u₀(e^{−t/ε} − e^{−λt})` and variance `σ∞²(1 − e^{−2λt})`,
/// where `λ = 1/ε + ε^{-(2+δ)}`. Kernels are normalized per source cell,
/// so column masses are kept to round-off. Stable for any `dt`.
pub fn collision_step<T: Real>(grid: &PhaseGrid<T>, f: &mut [T], params: &ScalingParams<T>, dt: T) {
    collision_step_with(grid, f, params, dt, CollisionMode::Exact)
}

/// [`collision_step`] with an explicit treatment of the bulk velocity.
pub fn collision_step_with<T: Real>(
    grid: &PhaseGrid<T>,
    f: &mut [T],
    params: &ScalingParams<T>,
    dt: T,
    mode: CollisionMode,
) {
    if dt <= T::zero() {
        return;
    }
    let n_v = grid.n_v();
    let dv = grid.velocity.dv();
    let vs = grid.velocity.centers();
    let v0 = vs[0];
    let lambda = params.drift_rate();
    let q = (-lambda * dt).exp();
    // Mean of the kernel from a source at w is w q + u₀ shift_factor.
    let shift_factor = match mode {
        CollisionMode::Exact => (-params.friction_rate() * dt).exp() - q,
        CollisionMode::Frozen => params.relaxation_rate() / lambda * (T::one() - q),
    };
    let s = ou_kernel_width(params, dt);
    let inv2s2 = T::one() / (T::lit(2.0) * s * s);
    // Ratio of successive ratios in the Gaussian recurrence.
    let c2 = (-dv * dv / (s * s)).exp();
    let cutoff = T::min_positive_value();
    let floor = T::lit(RHO_FLOOR);

    let mut src = vec![T::zero(); n_v];
    let mut w = vec![T::zero(); n_v];
    for col in f.chunks_exact_mut(n_v) {
        src.copy_from_slice(col);
        let rho: T = src.iter().copied().sum();
        if rho <= T::zero() {
            continue;
        }
        let mom: T = src.iter().zip(vs).map(|(&a, &v)| a * v).sum();
        let u0 = if rho * dv >= floor { mom / rho } else { T::zero() };
        let shift = u0 * shift_factor;
        col.iter_mut().for_each(|c| *c = T::zero());

        for (k, &mass) in src.iter().enumerate() {
            if mass == T::zero() {
                continue;
            }
            let mu = vs[k] * q + shift;
            let j0 = ((mu - v0) / dv).round().max(T::zero()).to_usize().unwrap_or(0).min(n_v - 1);
            let d0 = vs[j0] - mu;
            w[j0] = (-d0 * d0 * inv2s2).exp();
            let mut z = w[j0];
            let mut hi = j0;
            let mut r = (-(T::lit(2.0) * d0 * dv + dv * dv) * inv2s2).exp();
            while hi + 1 < n_v {
                let next = w[hi] * r;
                if next < cutoff {
                    break;
                }
                hi += 1;
                w[hi] = next;
                z = z + next;
                r = r * c2;
            }
            let mut lo = j0;
            let mut r = (-(-T::lit(2.0) * d0 * dv + dv * dv) * inv2s2).exp();
            while lo > 0 {
                let next = w[lo] * r;
                if next < cutoff {
                    break;
                }
                lo -= 1;
                w[lo] = next;
                z = z + next;
                r = r * c2;
            }
            if z > T::zero() && z.is_finite() {
                let scale = mass / z;
                for j in lo..=hi {
                    col[j] = col[j] + w[j] * scale;
                }
            } else {
                col[j0] = col[j0] + mass;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpatialGrid, VelocityGrid};
    use crate::kinetic::{moments, Confinement, Maxwellian};

    fn grid(eps: f64, nv: usize) -> PhaseGrid<f64> {
        PhaseGrid::new(
            SpatialGrid::symmetric(1.0, 8).unwrap(),
            VelocityGrid::new(10.0 / eps.sqrt(), nv).unwrap(),
        )
    }

    fn column_moments(g: &PhaseGrid<f64>, f: &[f64]) -> (f64, f64, f64) {
        let dv = g.velocity.dv();
        let col = &f[..g.n_v()];
        let m0: f64 = col.iter().sum::<f64>() * dv;
        let m1: f64 = col.iter().zip(g.velocity.centers()).map(|(a, v)| a * v).sum::<f64>() * dv / m0;
        let m2: f64 = col
            .iter()
            .zip(g.velocity.centers())
            .map(|(a, v)| a * (v - m1).powi(2))
            .sum::<f64>()
            * dv
            / m0;
        (m0, m1, m2)
    }

    #[test]
    fn maxwellian_is_fixed_point() {
        let eps: f64 = 0.3;
        let p = ScalingParams::new(eps, 1.0, Confinement::None).unwrap();
        let g = grid(eps, 256);
        // Friction without matching diffusion: the fixed point is colder than 1/ε.
        let mw = Maxwellian::new(1.0 / p.stationary_variance());
        let mut f = mw.local_equilibrium(&g, &[0.125; 8], &[0.0; 8]);
        let f0 = f.clone();
        for _ in 0..10 {
            collision_step(&g, &mut f, &p, 0.01);
        }
        let err = f.iter().zip(&f0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn without_friction_momentum_is_conserved() {
        let eps: f64 = 0.5;
        let p = ScalingParams::new(eps, 1.0, Confinement::None).unwrap().without_friction();
        let g = grid(eps, 200);
        let mut f = g.sample(|_, v| (-(v - 1.0).powi(2)).exp() + 0.5 * (-(v + 2.0).powi(2) * 4.0).exp());
        let m0 = moments(&g, &f);
        for _ in 0..50 {
            collision_step(&g, &mut f, &p, 0.02);
        }
        let m1 = moments(&g, &f);
        for i in 0..8 {
            assert!((m1.rho[i] - m0.rho[i]).abs() < 1e-14);
            assert!((m1.momentum[i] - m0.momentum[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn moments_follow_closed_form() {
        let eps: f64 = 0.5;
        let p = ScalingParams::new(eps, 1.0, Confinement::None).unwrap();
        let g = grid(eps, 160);
        let (u0, var0) = (1.0, 0.5);
        let mut f = g.sample(|_, v| (-(v - u0).powi(2) / (2.0 * var0)).exp());
        let dt = 0.01;
        for n in 1..=100 {
            collision_step(&g, &mut f, &p, dt);
            let t = n as f64 * dt;
            let (_, mean, var) = column_moments(&g, &f);
            let lam = p.drift_rate();
            let sinf = p.stationary_variance();
            assert!((mean - u0 * (-t / eps).exp()).abs() < 1e-8);
            assert!((var - (sinf + (var0 - sinf) * (-2.0 * lam * t).exp())).abs() < 1e-8);
        }
    }

    #[test]
    fn frozen_mode_follows_its_recursion() {
        let eps: f64 = 0.5;
        let p = ScalingParams::new(eps, 1.0, Confinement::None).unwrap();
        let g = grid(eps, 160);
        let (u0, var0) = (1.0, 0.5);
        let mut f = g.sample(|_, v| (-(v - u0).powi(2) / (2.0 * var0)).exp());
        let dt = 0.01;
        let lam = p.drift_rate();
        let q = (-lam * dt).exp();
        let sinf = p.stationary_variance();
        let (mut mean, mut var) = (u0, var0);
        for _ in 0..100 {
            collision_step_with(&g, &mut f, &p, dt, CollisionMode::Frozen);
            let ustar = mean * p.relaxation_rate() / lam;
            mean = ustar + (mean - ustar) * q;
            var = sinf + (var - sinf) * q * q;
            let (_, m, v) = column_moments(&g, &f);
            assert!((m - mean).abs() < 1e-8);
            assert!((v - var).abs() < 1e-8);
        }
    }

    #[test]
    fn frozen_mode_misses_friction_for_stiff_steps() {
        let eps: f64 = 0.1;
        let p = ScalingParams::new(eps, 2.0, Confinement::None).unwrap();
        let g = grid(eps, 256);
        let mut a = g.sample(|_, v| (-(v - 1.0).powi(2) * eps / 2.0).exp());
        let mut b = a.clone();
        collision_step_with(&g, &mut a, &p, 0.05, CollisionMode::Exact);
        collision_step_with(&g, &mut b, &p, 0.05, CollisionMode::Frozen);
        let (_, ma, _) = column_moments(&g, &a);
        let (_, mb, _) = column_moments(&g, &b);
        assert!((ma - (-0.5f64).exp()).abs() < 1e-9);
        assert!(mb > 0.99);
    }

    #[test]
    fn huge_step_lands_on_maxwellian() {
        let eps: f64 = 0.1;
        let p = ScalingParams::new(eps, 2.0, Confinement::None).unwrap();
        let g = grid(eps, 256);
        let mut f = g.sample(|_, v| if v.abs() < 3.0 { 1.0 } else { 0.0 });
        let mass = g.quad(&f).unwrap();
        collision_step(&g, &mut f, &p, 10.0);
        assert!((g.quad(&f).unwrap() - mass).abs() < 1e-13);
        let (_, mean, var) = column_moments(&g, &f);
        assert!(mean.abs() < 1e-12);
        assert!((var - p.stationary_variance()).abs() < 1e-9);
        assert!(f.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn narrow_kernel_keeps_mass_and_positivity() {
        let eps: f64 = 0.5;
        let p = ScalingParams::new(eps, 1.0, Confinement::None).unwrap();
        let g = grid(eps, 64);
        let mut f = g.sample(|x, v| (1.0 + x) * (-(v * v)).exp());
        let mass = g.quad(&f).unwrap();
        collision_step(&g, &mut f, &p, 1e-9);
        assert!((g.quad(&f).unwrap() - mass).abs() < 1e-13);
        assert!(f.iter().all(|&v| v >= 0.0));
    }
}
