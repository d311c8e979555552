//! Step-size, inexactness, smoothing and strong-convexity schedules.
//!
//! All schedules are p-series in the iteration counter:
//! `α[n] = α0/(n+1)^β`, `ε[n] = ε0/n^γ`, `L[n] = L0·n^λ`, `τ[n] = τ0·n^(−δ)`.
//! For `ε`, `L`, `τ` the counter is clamped to at least 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::{count, lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
pub struct ScheduleSet<T> {
    pub alpha0: T,
    pub beta: T,
    /// Zero selects exact local solves.
    #[serde(default = "zero")]
    pub eps0: T,
    #[serde(default = "zero")]
    pub gamma: T,
    /// Envelope smoothing of the local objectives is active.
    #[serde(default)]
    pub smoothing: bool,
    #[serde(default = "one")]
    pub lipschitz0: T,
    #[serde(default = "zero")]
    pub lambda: T,
    #[serde(default = "one")]
    pub tau0: T,
    #[serde(default = "zero")]
    pub delta: T,
}

fn zero<T: Scalar>() -> T {
    T::zero()
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> ScheduleSet<T> {
    /// Exact, unsmoothed schedule with constant `τ0 = 1`.
    pub fn diminishing(alpha0: T, beta: T) -> Self {
        ScheduleSet {
            alpha0,
            beta,
            eps0: T::zero(),
            gamma: T::zero(),
            smoothing: false,
            lipschitz0: T::one(),
            lambda: T::zero(),
            tau0: T::one(),
            delta: T::zero(),
        }
    }

    /// Exponent triple `(β, λ, δ)` with smoothing on iff `λ > 0`.
    pub fn with_exponents(beta: T, lambda: T, delta: T) -> Self {
        ScheduleSet {
            smoothing: lambda > T::zero(),
            lambda,
            delta,
            ..Self::diminishing(lit(0.99), beta)
        }
    }

    pub fn step_size(&self, n: usize) -> T {
        self.alpha0 / count::<T>(n + 1).powf(self.beta)
    }

    pub fn inexactness(&self, n: usize) -> T {
        if self.eps0 == T::zero() {
            return T::zero();
        }
        self.eps0 / count::<T>(n.max(1)).powf(self.gamma)
    }

    pub fn lipschitz(&self, n: usize) -> T {
        self.lipschitz0 * count::<T>(n.max(1)).powf(self.lambda)
    }

    /// Multiplier applied to each node's base `τ`.
    pub fn tau_factor(&self, n: usize) -> T {
        count::<T>(n.max(1)).powf(-self.delta)
    }

    pub fn tau(&self, n: usize) -> T {
        self.tau0 * self.tau_factor(n)
    }

    pub fn validate(&self) -> ScheduleReport {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        let (a0, b, l, d, e0, g) = (
            f(self.alpha0),
            f(self.beta),
            f(self.lambda),
            f(self.delta),
            f(self.eps0),
            f(self.gamma),
        );
        let mut checks = vec![
            ScheduleCheck::new("0 < alpha0 <= 1", a0, a0 > 0.0 && a0 <= 1.0),
            ScheduleCheck::new(
                "coefficients positive (L0, tau0), eps0 >= 0",
                f(self.lipschitz0).min(f(self.tau0)),
                self.lipschitz0 > T::zero() && self.tau0 > T::zero() && e0 >= 0.0,
            ),
            ScheduleCheck::new("beta - 2*lambda > 2*delta", b - 2.0 * l - 2.0 * d, b - 2.0 * l > 2.0 * d),
            ScheduleCheck::new("beta - 3*lambda - delta > 1/2", b - 3.0 * l - d, b - 3.0 * l - d > 0.5),
            ScheduleCheck::new("beta + delta <= 1", b + d, b + d <= 1.0),
            ScheduleCheck::new("0 <= lambda < 1", l, (0.0..1.0).contains(&l)),
            ScheduleCheck::new(
                "lambda > 0 iff envelope smoothing is active",
                l,
                (l > 0.0) == self.smoothing,
            ),
            ScheduleCheck::new("delta >= 0", d, d >= 0.0),
        ];
        if l == 0.0 && d == 0.0 {
            checks.push(ScheduleCheck::new("0.5 < beta <= 1", b, b > 0.5 && b <= 1.0));
        }
        if e0 > 0.0 {
            checks.push(ScheduleCheck::new("gamma > 1 - beta", g - (1.0 - b), g > 1.0 - b));
        }
        ScheduleReport { checks }
    }
}

/// One inequality of the schedule gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleCheck {
    pub name: &'static str,
    /// Value of the left-hand side (or of the checked quantity).
    pub value: f64,
    pub passed: bool,
}

impl ScheduleCheck {
    fn new(name: &'static str, value: f64, passed: bool) -> Self {
        ScheduleCheck { name, value, passed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub checks: Vec<ScheduleCheck>,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ScheduleCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ScheduleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {} (value {:.6})",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.value
            )?;
        }
        Ok(())
    }
}
