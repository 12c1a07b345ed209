use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// External potential `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confinement {
    /// `V(x) = |x|²/2`.
    Quadratic,
    /// `V ≡ 0`.
    None,
}

impl Confinement {
    #[inline]
    pub fn potential<T: Real>(self, x: T) -> T {
        match self {
            Self::Quadratic => T::lit(0.5) * x * x,
            Self::None => T::zero(),
        }
    }

    #[inline]
    pub fn gradient<T: Real>(self, x: T) -> T {
        match self {
            Self::Quadratic => x,
            Self::None => T::zero(),
        }
    }

    pub fn is_confined(self) -> bool {
        matches!(self, Self::Quadratic)
    }
}

/// Asymptotic-regime parameters: mass `ε`, relaxation time `ε^{2+δ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams<T> {
    pub eps: T,
    pub delta: T,
    pub confinement: Confinement,
    pub dim: usize,
    /// Self-consistent Coulomb field; off only in test fixtures.
    pub interaction: bool,
    /// Linear damping `(1/ε) ∂v(v f)`; off only in test fixtures.
    pub friction: bool,
}

impl<T: Real> ScalingParams<T> {
    pub fn new(eps: T, delta: T, confinement: Confinement) -> Result<Self> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {eps}")));
        }
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            eps,
            delta,
            confinement,
            dim: 1,
            interaction: true,
            friction: true,
        })
    }

    pub fn without_interaction(mut self) -> Self {
        self.interaction = false;
        self
    }

    pub fn without_friction(mut self) -> Self {
        self.friction = false;
        self
    }

    /// Predicted convergence order `min{1, δ − d/2}` (confined) or
    /// `min{1, δ}` (unconfined).
    pub fn zeta(&self) -> T {
        let d = T::from_usize_lossy(self.dim);
        let branch = if self.confinement.is_confined() {
            self.delta - d / T::lit(2.0)
        } else {
            self.delta
        };
        branch.min(T::one())
    }

    /// `ε^{-(2+δ)}`, the relaxation rate of the Fokker–Planck operator.
    pub fn relaxation_rate(&self) -> T {
        self.eps.powf(-(T::lit(2.0) + self.delta))
    }

    /// Friction rate `1/ε` (zero when friction is disabled).
    pub fn friction_rate(&self) -> T {
        if self.friction {
            T::one() / self.eps
        } else {
            T::zero()
        }
    }

    /// Total velocity drift rate of the relaxation substep.
    pub fn drift_rate(&self) -> T {
        self.relaxation_rate() + self.friction_rate()
    }

    /// Velocity diffusion coefficient `ε^{-(3+δ)}`.
    pub fn diffusion(&self) -> T {
        self.relaxation_rate() / self.eps
    }

    /// Stationary variance of the relaxation substep.
    pub fn stationary_variance(&self) -> T {
        self.diffusion() / self.drift_rate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_branches() {
        let c = ScalingParams::<f64>::new(0.1, 2.0, Confinement::Quadratic).unwrap();
        assert_eq!(c.zeta(), 1.0);
        let c = ScalingParams::<f64>::new(0.1, 1.2, Confinement::Quadratic).unwrap();
        assert!((c.zeta() - 0.7).abs() < 1e-15);
        let u = ScalingParams::<f64>::new(0.1, 0.4, Confinement::None).unwrap();
        assert!((u.zeta() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ScalingParams::<f64>::new(1.5, 2.0, Confinement::None).is_err());
        assert!(ScalingParams::<f64>::new(0.0, 2.0, Confinement::None).is_err());
        assert!(ScalingParams::<f64>::new(0.5, 0.0, Confinement::None).is_err());
    }

    #[test]
    fn rates() {
        let p = ScalingParams::<f64>::new(0.5, 1.0, Confinement::None).unwrap();
        assert!((p.relaxation_rate() - 8.0).abs() < 1e-12);
        assert!((p.drift_rate() - 10.0).abs() < 1e-12);
        assert!((p.diffusion() - 16.0).abs() < 1e-12);
        assert!((p.stationary_variance() - 1.6).abs() < 1e-12);
        let q = p.without_friction();
        assert!((q.stationary_variance() - 2.0).abs() < 1e-12);
    }
}
