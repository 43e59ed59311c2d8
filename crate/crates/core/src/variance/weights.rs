use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Mean-zero, unit-variance multiplier distributions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsType {
    /// ±1 with equal probability.
    #[default]
    Rademacher,
    /// `(1 - √5)/2` w.p. `(√5 + 1)/(2√5)`, `(1 + √5)/2` otherwise.
    Mammen,
    /// `±√(3/2), ±1, ±√(1/2)`, each w.p. 1/6.
    Webb,
    Gaussian,
}

impl WeightsType {
    pub const ALL: [WeightsType; 4] = [
        WeightsType::Rademacher,
        WeightsType::Mammen,
        WeightsType::Webb,
        WeightsType::Gaussian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightsType::Rademacher => "rademacher",
            WeightsType::Mammen => "mammen",
            WeightsType::Webb => "webb",
            WeightsType::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for WeightsType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightsType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        WeightsType::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown weights type {s:?}")))
    }
}

const SQRT5: f64 = 2.236_067_977_499_79;
pub(crate) const MAMMEN_LOW: f64 = (1.0 - SQRT5) / 2.0;
pub(crate) const MAMMEN_HIGH: f64 = (1.0 + SQRT5) / 2.0;
pub(crate) const MAMMEN_P_LOW: f64 = (SQRT5 + 1.0) / (2.0 * SQRT5);

const WEBB: [f64; 6] = [
    -1.224_744_871_391_589,
    -1.0,
    -std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
    1.0,
    1.224_744_871_391_589,
];

/// `count` i.i.d. draws from `kind`.
pub fn sample_weights<R: Rng + ?Sized>(kind: WeightsType, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; count];
    fill_weights(kind, &mut out, rng);
    out
}

pub(crate) fn fill_weights<R: Rng + ?Sized>(kind: WeightsType, out: &mut [f64], rng: &mut R) {
    match kind {
        WeightsType::Rademacher => out
            .iter_mut()
            .for_each(|w| *w = if rng.random::<bool>() { 1.0 } else { -1.0 }),
        WeightsType::Mammen => out.iter_mut().for_each(|w| {
            *w = if rng.random::<f64>() < MAMMEN_P_LOW {
                MAMMEN_LOW
            } else {
                MAMMEN_HIGH
            }
        }),
        WeightsType::Webb => out
            .iter_mut()
            .for_each(|w| *w = WEBB[rng.random_range(0..6)]),
        WeightsType::Gaussian => out
            .iter_mut()
            .for_each(|w| *w = rng.sample(StandardNormal)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use approx::assert_relative_eq;

    #[test]
    fn mammen_support_and_probabilities() {
        assert_relative_eq!(MAMMEN_LOW, -0.618034, epsilon = 1e-6);
        assert_relative_eq!(MAMMEN_HIGH, 1.618034, epsilon = 1e-6);
        assert_relative_eq!(MAMMEN_P_LOW, 0.723607, epsilon = 1e-6);
        assert_relative_eq!(1.0 - MAMMEN_P_LOW, 0.276393, epsilon = 1e-6);
        let p = MAMMEN_P_LOW;
        assert_relative_eq!(p * MAMMEN_LOW + (1.0 - p) * MAMMEN_HIGH, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p * MAMMEN_LOW.powi(2) + (1.0 - p) * MAMMEN_HIGH.powi(2), 1.0, epsilon = 1e-15);
        assert_relative_eq!(p * MAMMEN_LOW.powi(3) + (1.0 - p) * MAMMEN_HIGH.powi(3), 1.0, epsilon = 1e-14);
        assert_relative_eq!(SQRT5 * SQRT5, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn webb_support() {
        assert_relative_eq!(WEBB[5], 1.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(WEBB[2], -(0.5f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(WEBB.iter().map(|v| v * v).sum::<f64>() / 6.0, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn reproducible_from_seed() {
        for kind in WeightsType::ALL {
            let a = sample_weights(kind, 500, &mut substream(5, Domain::MultiplierBoot, 2));
            let b = sample_weights(kind, 500, &mut substream(5, Domain::MultiplierBoot, 2));
            assert_eq!(a, b);
        }
        let r = sample_weights(WeightsType::Rademacher, 100, &mut substream(1, Domain::MultiplierBoot, 0));
        assert!(r.iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn names_round_trip() {
        for kind in WeightsType::ALL {
            assert_eq!(kind.as_str().parse::<WeightsType>().unwrap(), kind);
            assert_eq!(serde_json::to_string(&kind).unwrap(), format!("\"{kind}\""));
        }
    }
}
