use crate::error::{Error, Result};
use crate::fields::FieldState;
use crate::grid::PhaseGrid;
use crate::scalar::Real;

use super::ScalingParams;

/// Spatial boundary treatment for free transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// No inflow; mass crossing the ends is removed and reported.
    #[default]
    Outflow,
    Periodic,
}

/// Reconstruction used for the `v ∂x f` fluxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportScheme {
    /// First-order donor cell.
    Upwind,
    /// Lax–Wendroff flux limited by van Leer; exact shift at unit Courant
    /// number and positivity preserving below it.
    #[default]
    Limited,
}

// φ(r)·Δd for the van Leer limiter with r = Δu/Δd.
#[inline]
fn van_leer<T: Real>(du: T, dd: T) -> T {
    let p = du * dd;
    if p > T::zero() {
        T::lit(2.0) * p / (du + dd)
    } else {
        T::zero()
    }
}

/// Fluxes `a · f` through the `n + 1` faces of `vals` (face `k` sits between
/// cells `k − 1` and `k`). Values outside are zero, or wrapped when
/// `periodic`.
fn face_fluxes<T: Real>(vals: &[T], a: T, nu: T, scheme: TransportScheme, periodic: bool, flux: &mut [T]) {
    let n = vals.len() as isize;
    let at = |k: isize| -> T {
        if periodic {
            vals[k.rem_euclid(n) as usize]
        } else if k < 0 || k >= n {
            T::zero()
        } else {
            vals[k as usize]
        }
    };
    let half = T::lit(0.5);
    for (k, fl) in flux.iter_mut().enumerate() {
        let k = k as isize;
        let (up, corr) = if a >= T::zero() {
            let up = at(k - 1);
            let corr = match scheme {
                TransportScheme::Upwind => T::zero(),
                TransportScheme::Limited => van_leer(up - at(k - 2), at(k) - up),
            };
            (up, corr)
        } else {
            let up = at(k);
            let corr = match scheme {
                TransportScheme::Upwind => T::zero(),
                TransportScheme::Limited => van_leer(up - at(k + 1), at(k - 1) - up),
            };
            (up, corr)
        };
        *fl = a * (up + half * (T::one() - nu) * corr);
    }
    if periodic {
        flux[vals.len()] = flux[0];
    }
}

/// Advances `∂t f + v ∂x f = 0` over `dt` in place. Returns the mass that
/// left through the spatial ends (zero for periodic boundaries).
///
/// Fails without touching `f` when `dt` exceeds `Δx / max|v_j|`.
pub fn transport_step<T: Real>(
    grid: &PhaseGrid<T>,
    f: &mut [T],
    dt: T,
    scheme: TransportScheme,
    boundary: Boundary,
) -> Result<T> {
    let dx = grid.spatial.dx();
    let limit = dx / grid.velocity.max_speed();
    if dt > limit * (T::one() + T::lit(1e-12)) {
        return Err(Error::Cfl {
            direction: "x",
            dt: dt.to_f64_lossy(),
            limit: limit.to_f64_lossy(),
            index: 0,
        });
    }
    let n_x = grid.n_x();
    let n_v = grid.n_v();
    let periodic = boundary == Boundary::Periodic;
    let c = dt / dx;
    let mut row = vec![T::zero(); n_x];
    let mut flux = vec![T::zero(); n_x + 1];
    let mut outflow = T::zero();
    for (j, &v) in grid.velocity.centers().iter().enumerate() {
        for i in 0..n_x {
            row[i] = f[i * n_v + j];
        }
        face_fluxes(&row, v, v.abs() * c, scheme, periodic, &mut flux);
        for i in 0..n_x {
            f[i * n_v + j] = row[i] - c * (flux[i + 1] - flux[i]);
        }
        outflow = outflow + dt * (flux[n_x] - flux[0]);
    }
    Ok(outflow * grid.velocity.dv())
}

/// Advances `∂t f = (1/ε) ∂v((V' + Φ') f)` over `dt` in place with closed
/// velocity ends, so each column keeps its mass.
///
/// Only the force part of the drift is applied here; the `v` part lives in
/// the relaxation substep.
pub fn force_step<T: Real>(
    grid: &PhaseGrid<T>,
    f: &mut [T],
    field: &FieldState<T>,
    params: &ScalingParams<T>,
    dt: T,
    scheme: TransportScheme,
) -> Result<()> {
    let n_v = grid.n_v();
    let dv = grid.velocity.dv();
    // Velocity-space speed a_i = -(V' + Φ')/ε.
    let speeds: Vec<T> = grid
        .spatial
        .centers()
        .iter()
        .zip(&field.grad_phi)
        .map(|(&x, &g)| -(params.confinement.gradient(x) + g) / params.eps)
        .collect();
    let (index, amax) = speeds
        .iter()
        .enumerate()
        .fold((0, T::zero()), |acc, (i, &a)| if a.abs() > acc.1 { (i, a.abs()) } else { acc });
    if amax > T::zero() {
        let limit = dv / amax;
        if dt > limit * (T::one() + T::lit(1e-12)) {
            return Err(Error::Cfl {
                direction: "v",
                dt: dt.to_f64_lossy(),
                limit: limit.to_f64_lossy(),
                index,
            });
        }
    }
    let c = dt / dv;
    let mut flux = vec![T::zero(); n_v + 1];
    for (col, &a) in f.chunks_exact_mut(n_v).zip(&speeds) {
        if a == T::zero() {
            continue;
        }
        face_fluxes(col, a, a.abs() * c, scheme, false, &mut flux);
        flux[0] = T::zero();
        flux[n_v] = T::zero();
        for j in 0..n_v {
            col[j] = col[j] - c * (flux[j + 1] - flux[j]);
        }
    }
    Ok(())
}

/// Largest stable transport and force steps for the current field.
pub(crate) fn cfl_limits<T: Real>(
    grid: &PhaseGrid<T>,
    field: &FieldState<T>,
    params: &ScalingParams<T>,
) -> (T, T) {
    let dt_x = grid.spatial.dx() / grid.velocity.max_speed();
    let fmax = grid
        .spatial
        .centers()
        .iter()
        .zip(&field.grad_phi)
        .map(|(&x, &g)| (params.confinement.gradient(x) + g).abs())
        .fold(T::zero(), T::max);
    let dt_v = if fmax > T::zero() {
        params.eps * grid.velocity.dv() / fmax
    } else {
        T::infinity()
    };
    (dt_x, dt_v)
}
