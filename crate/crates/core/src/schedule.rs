//! Stepsize schedules and algorithm parameters.

use crate::error::{Error, Result};

/// The law generating raw stepsizes before clipping.
#[derive(Debug, Clone, PartialEq)]
pub enum StepLaw {
    /// `tau0 / (1 + rate * k / horizon)`. With `rate = 5` and `horizon = N`
    /// this is the schedule used for the ReLU training experiments.
    Harmonic { tau0: f64, horizon: f64, rate: f64 },
    /// `tau0` for `k < hold`, then `tau0 / (1 + (k - hold) / scale)^power`.
    /// `power` lies in `(0, 1]` so the partial sums diverge.
    ConstantThenDecay {
        tau0: f64,
        hold: u64,
        scale: f64,
        power: f64,
    },
    /// Explicit per-iteration values; the last entry repeats past the end.
    Table(Vec<f64>),
}

impl StepLaw {
    /// `tau0 / (1 + 5 k / horizon)`.
    pub fn harmonic5(tau0: f64, horizon: u64) -> Self {
        StepLaw::Harmonic {
            tau0,
            horizon: horizon as f64,
            rate: 5.0,
        }
    }

    pub fn constant(tau: f64) -> Self {
        StepLaw::ConstantThenDecay {
            tau0: tau,
            hold: u64::MAX,
            scale: 1.0,
            power: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::usage(format!("schedule {name} must be positive, got {v}")))
            }
        };
        match self {
            StepLaw::Harmonic {
                tau0,
                horizon,
                rate,
            } => {
                positive("tau0", *tau0)?;
                positive("horizon", *horizon)?;
                positive("rate", *rate)
            }
            StepLaw::ConstantThenDecay {
                tau0, scale, power, ..
            } => {
                positive("tau0", *tau0)?;
                positive("scale", *scale)?;
                if !(*power > 0.0 && *power <= 1.0) {
                    return Err(Error::usage(format!(
                        "decay power must lie in (0, 1], got {power}"
                    )));
                }
                Ok(())
            }
            StepLaw::Table(values) => {
                if values.is_empty() {
                    return Err(Error::usage("stepsize table is empty"));
                }
                values.iter().try_for_each(|v| positive("table entry", *v))
            }
        }
    }

    fn raw(&self, k: u64) -> f64 {
        match self {
            StepLaw::Harmonic {
                tau0,
                horizon,
                rate,
            } => tau0 / (1.0 + rate * k as f64 / horizon),
            StepLaw::ConstantThenDecay {
                tau0,
                hold,
                scale,
                power,
            } => {
                if k < *hold {
                    *tau0
                } else {
                    tau0 / (1.0 + (k - hold) as f64 / scale).powf(*power)
                }
            }
            StepLaw::Table(values) => {
                let i = usize::try_from(k).unwrap_or(usize::MAX).min(values.len() - 1);
                values[i]
            }
        }
    }
}

/// A stepsize law together with the averaging rate that caps it.
///
/// Every emitted stepsize lies in `(0, min(1, 1/a)]`; larger raw values are
/// clipped, never rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    law: StepLaw,
    a: f64,
}

impl StepSchedule {
    pub fn new(law: StepLaw, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::usage(format!("averaging rate a must be positive, got {a}")));
        }
        law.validate()?;
        Ok(StepSchedule { law, a })
    }

    pub fn law(&self) -> &StepLaw {
        &self.law
    }

    pub fn cap(&self) -> f64 {
        1.0_f64.min(1.0 / self.a)
    }

    pub fn tau(&self, k: u64) -> f64 {
        self.law.raw(k).min(self.cap())
    }
}

/// How the averaged direction is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZInit {
    /// `z⁰ = g⁰`, the first observation at `x⁰`.
    #[default]
    FirstObservation,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoParams {
    pub a: f64,
    pub beta: f64,
    pub schedule: StepSchedule,
    pub seed: u64,
    pub z_init: ZInit,
}

impl AlgoParams {
    pub fn new(a: f64, beta: f64, law: StepLaw, seed: u64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::usage(format!("beta must be positive, got {beta}")));
        }
        Ok(AlgoParams {
            a,
            beta,
            schedule: StepSchedule::new(law, a)?,
            seed,
            z_init: ZInit::default(),
        })
    }

    pub fn with_z_init(mut self, z_init: ZInit) -> Self {
        self.z_init = z_init;
        self
    }

    pub fn tau(&self, k: u64) -> f64 {
        self.schedule.tau(k)
    }
}

/// Stepsize at iteration `k`.
pub fn tau(schedule: &StepSchedule, k: u64) -> f64 {
    schedule.tau(k)
}
