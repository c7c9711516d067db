//! Stepsize schedules shared by the asynchronous engine and the centralized
//! coordinate solver, plus the catch-up rule that sums several schedule terms
//! for a player whose update counter lags behind its neighbors.

use core::fmt;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeSchedule {
    /// `rho(t) = rho` for all `t`.
    Constant { rho: f64 },
    /// `rho(t) = rho0 / (1 + t)^gamma` with `gamma` in `(0.5, 1]`, which keeps
    /// the schedule nonincreasing, square-summable and non-summable.
    Power { rho0: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleError {
    NonPositiveBase,
    ExponentOutOfRange { gamma: f64 },
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleError::NonPositiveBase => write!(f, "schedule base must be positive"),
            ScheduleError::ExponentOutOfRange { gamma } => {
                write!(f, "power exponent {gamma} outside (0.5, 1]")
            }
        }
    }
}

impl core::error::Error for ScheduleError {}

impl StepsizeSchedule {
    pub fn constant(rho: f64) -> Result<Self, ScheduleError> {
        if rho > 0.0 && rho.is_finite() {
            Ok(Self::Constant { rho })
        } else {
            Err(ScheduleError::NonPositiveBase)
        }
    }

    pub fn power(rho0: f64, gamma: f64) -> Result<Self, ScheduleError> {
        if !rho0.is_finite() || rho0 <= 0.0 {
            return Err(ScheduleError::NonPositiveBase);
        }
        if !(gamma > 0.5 && gamma <= 1.0) {
            return Err(ScheduleError::ExponentOutOfRange { gamma });
        }
        Ok(Self::Power { rho0, gamma })
    }

    /// Value `rho(t)`.
    pub fn value(&self, t: u64) -> f64 {
        match *self {
            Self::Constant { rho } => rho,
            Self::Power { rho0, gamma } => rho0 / math::powf(1.0 + t as f64, gamma),
        }
    }

    /// Inclusive sum `rho(from) + ... + rho(to)`; `to < from` yields an empty
    /// sum of zero.
    pub fn sum_range(&self, from: u64, to: u64) -> f64 {
        if to < from {
            return 0.0;
        }
        match *self {
            Self::Constant { rho } => (to - from + 1) as f64 * rho,
            Self::Power { .. } => {
                let mut s = 0.0;
                for t in from..=to {
                    s += self.value(t);
                }
                s
            }
        }
    }
}

/// Catch-up stepsize for a player whose own counter is `counter` and whose
/// freshest buffered counter is `buffered_max`: the inclusive sum of schedule
/// terms between the two. A player that is up to date takes a single term.
pub fn aggressive_stepsize(counter: u64, buffered_max: u64, rho: &StepsizeSchedule) -> f64 {
    let hi = if buffered_max < counter {
        counter
    } else {
        buffered_max
    };
    rho.sum_range(counter, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sum_counts_terms() {
        let rho = StepsizeSchedule::constant(0.01).unwrap();
        assert!((aggressive_stepsize(3, 5, &rho) - 0.03).abs() < 1e-15);
        assert!((aggressive_stepsize(4, 4, &rho) - 0.01).abs() < 1e-15);
        // Guarded case: stale buffered counter still yields one term.
        assert!((aggressive_stepsize(4, 1, &rho) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn harmonic_sum_matches_hand_value() {
        let rho = StepsizeSchedule::power(1.0, 1.0).unwrap();
        let s = aggressive_stepsize(0, 2, &rho);
        assert!((s - (1.0 + 0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert!((rho.value(3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn power_schedule_is_nonincreasing_and_square_summable() {
        let rho = StepsizeSchedule::power(1.0, 0.6).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..10_000u64 {
            let v = rho.value(t);
            assert!(v > 0.0 && v <= prev);
            prev = v;
        }
        // Tail increments of the partial sums of rho^2 vanish: each term near
        // t = 10^6 is about 6e-8 and the ten-term tail stays below 1e-6.
        let mut tail = 0.0;
        for t in 999_990..1_000_000u64 {
            let v = rho.value(t);
            assert!(v * v < 1e-7);
            tail += v * v;
        }
        assert!(tail < 1e-6, "tail {tail}");
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(StepsizeSchedule::constant(0.0).is_err());
        assert!(StepsizeSchedule::power(1.0, 0.5).is_err());
        assert!(StepsizeSchedule::power(1.0, 1.2).is_err());
        assert!(StepsizeSchedule::power(-1.0, 0.8).is_err());
    }
}
