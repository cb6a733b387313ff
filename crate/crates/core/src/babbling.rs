//! Seeded periodic motor babbling (one tanh-squashed three-harmonic signal
//! per joint) and its routing onto antagonistic muscle pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MuscleCommands, N_JOINTS};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default base period in seconds.
pub const DEFAULT_PERIOD: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BabblingProgram<T> {
    /// `(A1, A2, A3)` per joint, each drawn from U(-1, 1).
    pub coefficients: Vec<[T; 3]>,
    /// Base period `T0` in seconds.
    pub period: T,
    pub seed: u64,
}

impl<T: Real> BabblingProgram<T> {
    /// Base angular frequency `2 pi / T0`.
    pub fn omega(&self) -> T {
        T::lit(std::f64::consts::TAU) / self.period
    }

    pub fn n_joints(&self) -> usize {
        self.coefficients.len()
    }

    /// Muscle commands for every joint at time `t`.
    pub fn commands(&self, t: T) -> MuscleCommands<T> {
        let mut out = [(T::zero(), T::zero()); N_JOINTS];
        for (j, slot) in out.iter_mut().enumerate().take(self.n_joints()) {
            *slot = to_muscle_pair(activation(self, j, t));
        }
        out
    }
}

pub fn sample_program<T: Real>(seed: u64, n_joints: usize, period: T) -> Result<BabblingProgram<T>> {
    if n_joints == 0 || n_joints > N_JOINTS {
        return Err(Error::Config(format!("babbling needs 1..={N_JOINTS} joints, got {n_joints}")));
    }
    if !(period > T::zero() && period.is_finite()) {
        return Err(Error::Config(format!("babbling period must be positive, got {period}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || loop {
        let a: f64 = rng.random_range(-1.0..1.0);
        if a > -1.0 {
            return T::lit(a);
        }
    };
    let coefficients = (0..n_joints).map(|_| [draw(), draw(), draw()]).collect();
    Ok(BabblingProgram { coefficients, period, seed })
}

/// `tanh(A1 sin(w t) + A2 sin(2 w t) + A3 sin(4 w t))`
pub fn activation<T: Real>(program: &BabblingProgram<T>, joint: usize, t: T) -> T {
    let [a1, a2, a3] = program.coefficients[joint];
    let w = program.omega();
    (a1 * (w * t).sin() + a2 * (T::lit(2.0) * w * t).sin() + a3 * (T::lit(4.0) * w * t).sin()).tanh()
}

/// Sign-routed rectification: positive drive flexes, negative drive extends.
pub fn to_muscle_pair<T: Real>(sigma: T) -> (T, T) {
    if sigma >= T::zero() {
        (sigma, T::zero())
    } else {
        (T::zero(), -sigma)
    }
}
