//! Periodic contact clock.

use serde::{Deserialize, Serialize};

use super::LocomotionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    /// Hz.
    pub step_freq: f64,
    /// Stance fraction of each period.
    pub duty: f64,
    /// Phase offset per foot, in periods (FL, FR, RL, RR).
    pub offsets: [f64; 4],
}

impl Default for GaitParams {
    fn default() -> Self {
        Self::trot()
    }
}

impl GaitParams {
    pub fn trot() -> Self {
        Self {
            step_freq: 1.4,
            duty: 0.6,
            offsets: [0.0, 0.5, 0.5, 0.0],
        }
    }

    pub fn validate(&self) -> Result<(), LocomotionError> {
        let bad = |m: String| Err(LocomotionError::InvalidGaitParams(m));
        if !(self.step_freq > 0.0 && self.step_freq.is_finite()) {
            return bad(format!("step_freq {} must be positive", self.step_freq));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return bad(format!("duty {} outside (0, 1)", self.duty));
        }
        if let Some(o) = self.offsets.iter().find(|o| !(0.0..1.0).contains(*o)) {
            return bad(format!("offset {o} outside [0, 1)"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.step_freq
    }

    /// Phase of foot `i` in `[0, 1)`.
    pub fn phase(&self, t: f64, i: usize) -> f64 {
        let x = t * self.step_freq + self.offsets[i];
        x - x.floor()
    }
}

/// Commanded contact per foot: stance iff `frac(t·f + offset) < duty`.
pub fn contact_schedule(t: f64, params: &GaitParams) -> Result<[bool; 4], LocomotionError> {
    params.validate()?;
    Ok(std::array::from_fn(|i| params.phase(t, i) < params.duty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_offsets() -> GaitParams {
        GaitParams {
            offsets: [0.0; 4],
            ..GaitParams::trot()
        }
    }

    #[test]
    fn all_stance_at_zero() {
        assert_eq!(contact_schedule(0.0, &zero_offsets()).unwrap(), [true; 4]);
    }

    #[test]
    fn stance_fraction_matches_duty() {
        let p = zero_offsets();
        let n = 10_000;
        let stance = (0..n)
            .filter(|k| contact_schedule((*k as f64 + 0.5) / n as f64 * p.period(), &p).unwrap()[0])
            .count();
        assert!((stance as f64 / n as f64 - 0.6).abs() < 0.01);
    }

    #[test]
    fn trot_phases() {
        let p = GaitParams::trot();
        let t = 0.55 / p.step_freq;
        assert_eq!(contact_schedule(t, &p).unwrap(), [true, true, true, true]);
        let t = 0.7 / p.step_freq;
        assert_eq!(contact_schedule(t, &p).unwrap(), [false, true, true, false]);
    }

    #[test]
    fn invalid_params() {
        for p in [
            GaitParams { step_freq: 0.0, ..GaitParams::trot() },
            GaitParams { duty: 1.0, ..GaitParams::trot() },
            GaitParams { duty: 0.0, ..GaitParams::trot() },
            GaitParams { offsets: [0.0, 1.0, 0.5, 0.0], ..GaitParams::trot() },
        ] {
            assert!(matches!(contact_schedule(0.0, &p), Err(LocomotionError::InvalidGaitParams(_))));
        }
    }

    proptest! {
        #[test]
        fn periodic(t in 0.0f64..100.0) {
            let p = GaitParams::trot();
            let a = contact_schedule(t, &p).unwrap();
            let b = contact_schedule(t + p.period(), &p).unwrap();
            // Rounding can only matter right at a phase boundary.
            let near_edge = (0..4).any(|i| {
                let ph = p.phase(t, i);
                (ph - p.duty).abs() < 1e-9 || ph < 1e-9 || ph > 1.0 - 1e-9
            });
            prop_assert!(near_edge || a == b);
        }
    }
}
