//! Gradient scheduling over a horizon of independent channel draws.
//!
//! Each slot solves the one-shot weighted sum-rate problem with weights
//! `w_i = c_i·W_i^{α−1}` from the users' running average throughputs `W_i`,
//! then updates `W_i` with the rates realized by the returned allocation.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{self, AlgorithmConfig, AlgorithmError};
use crate::graph::InterferenceGraph;
use crate::scalar::{count, lit, Scalar};
use crate::wireless::{sample_instance, user_rates, InstanceError, InstanceParams};

pub const DEFAULT_THROUGHPUT_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("empty sample")]
    Empty,
    #[error("invalid utility: {0}")]
    Utility(String),
    #[error("slot {slot}: {source}")]
    Algorithm {
        slot: usize,
        #[source]
        source: AlgorithmError,
    },
    #[error("slot {slot}: {source}")]
    Instance {
        slot: usize,
        #[source]
        source: InstanceError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputState<T> {
    /// Running average throughput per user (nats/slot).
    pub average: Vec<T>,
    /// Slots accounted so far.
    pub t: usize,
    pub floor: T,
}

impl<T: Scalar> ThroughputState<T> {
    pub fn new(users: usize, floor: T) -> Self {
        ThroughputState {
            average: vec![floor; users],
            t: 0,
            floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig<T> {
    /// Fairness parameter, at most 1; zero selects the logarithmic utility.
    pub alpha: T,
    /// QoS weight per user.
    pub qos: Vec<T>,
}

impl<T: Scalar> UtilityConfig<T> {
    pub fn uniform(alpha: T, users: usize) -> Self {
        UtilityConfig {
            alpha,
            qos: vec![T::one(); users],
        }
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(self.alpha <= T::one()) {
            return Err(SchedulerError::Utility(format!("alpha = {} exceeds 1", self.alpha)));
        }
        if self.qos.iter().any(|&c| !(c > T::zero())) {
            return Err(SchedulerError::Utility("QoS weights must be positive".into()));
        }
        Ok(())
    }
}

/// `c_i·W_i^{α−1}`.
pub fn scheduling_weights<T: Scalar>(state: &ThroughputState<T>, u: &UtilityConfig<T>) -> Vec<T> {
    state
        .average
        .iter()
        .zip(&u.qos)
        .map(|(&w, &c)| c * w.powf(u.alpha - T::one()))
        .collect()
}

/// `W ← (t·W + r)/(t + 1)`, floored.
pub fn update_throughput<T: Scalar>(state: &mut ThroughputState<T>, rates: &[T]) {
    let t: T = count(state.t);
    let t1: T = count(state.t + 1);
    for (w, &r) in state.average.iter_mut().zip(rates) {
        *w = ((t * *w + r) / t1).max(state.floor);
    }
    state.t += 1;
}

/// `Σ c_i/α·W_i^α`, or `Σ c_i log W_i` at `α = 0`.
pub fn total_utility<T: Scalar>(state: &ThroughputState<T>, u: &UtilityConfig<T>) -> T {
    state
        .average
        .iter()
        .zip(&u.qos)
        .map(|(&w, &c)| {
            if u.alpha == T::zero() {
                c * w.ln()
            } else {
                c / u.alpha * w.powf(u.alpha)
            }
        })
        .sum()
}

/// Empirical CDF steps `(value, fraction ≤ value)` at the distinct samples.
pub fn export_cdf<T: Scalar>(values: &[T]) -> Result<Vec<(T, T)>, SchedulerError> {
    if values.is_empty() {
        return Err(SchedulerError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite throughputs"));
    let n: T = count(v.len());
    let mut out: Vec<(T, T)> = Vec::new();
    for (j, &x) in v.iter().enumerate() {
        let frac = count::<T>(j + 1) / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    Ok(out)
}

fn cdf_at<T: Scalar>(sorted: &[T], x: T) -> T {
    let below = sorted.partition_point(|&v| v <= x);
    count::<T>(below) / count::<T>(sorted.len())
}

/// The CDF of `a` lies weakly to the right of that of `b`: `F_a(v) ≤ F_b(v)`
/// at every sample point of either.
pub fn dominates<T: Scalar>(a: &[T], b: &[T]) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let sort = |v: &[T]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| x.partial_cmp(y).expect("finite throughputs"));
        s
    };
    let (sa, sb) = (sort(a), sort(b));
    sa.iter()
        .chain(&sb)
        .all(|&x| cdf_at(&sa, x) <= cdf_at(&sb, x) + lit::<T>(1e-12))
}

/// Network and channel statistics for every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: InterferenceGraph,
    pub params: InstanceParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSummary<T> {
    pub slot: usize,
    pub iterations: usize,
    pub peak_consensus: T,
    pub final_consensus: T,
    /// Weighted sum rate of the slot's allocation.
    pub weighted_rate: T,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySummary<T> {
    pub slots: Vec<SlotSummary<T>>,
}

impl<T: Scalar> TrajectorySummary<T> {
    pub fn mean_iterations(&self) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        self.slots.iter().map(|s| s.iterations as f64).sum::<f64>() / self.slots.len() as f64
    }

    pub fn elapsed(&self) -> Duration {
        self.slots.iter().map(|s| s.elapsed).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonResult<T> {
    pub state: ThroughputState<T>,
    pub utility: T,
    /// Plain per-user sums of realized rates.
    pub rate_sums: Vec<T>,
    pub summary: TrajectorySummary<T>,
}

impl<T: Scalar> HorizonResult<T> {
    pub fn throughputs(&self) -> &[T] {
        &self.state.average
    }
}

/// Generator of slot `t`'s channel draw: its own stream of the master seed,
/// so every algorithm sees the same channels.
pub fn slot_rng(seed: u64, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot as u64);
    rng
}

pub fn run_horizon<T: Scalar>(
    scenario: &Scenario,
    cfg: &AlgorithmConfig<T>,
    horizon: usize,
    u: &UtilityConfig<T>,
    floor: T,
    seed: u64,
) -> Result<HorizonResult<T>, SchedulerError> {
    u.validate()?;
    let users = scenario.graph.len() * scenario.params.users_per_bs;
    if u.qos.len() != users {
        return Err(SchedulerError::Utility(format!("{} QoS weights for {users} users", u.qos.len())));
    }
    let mut state = ThroughputState::new(users, floor);
    let mut rate_sums = vec![T::zero(); users];
    let mut summary = TrajectorySummary::default();
    for slot in 0..horizon {
        let start = Instant::now();
        let weights = scheduling_weights(&state, u);
        let inst = sample_instance::<T, _>(&scenario.graph, &scenario.params, &mut slot_rng(seed, slot))
            .and_then(|i| i.with_weights(&weights))
            .map_err(|source| SchedulerError::Instance { slot, source })?;
        let out = algorithms::run(&inst, cfg).map_err(|source| SchedulerError::Algorithm { slot, source })?;
        let rates = user_rates(&inst, &out.allocation);
        for (s, &r) in rate_sums.iter_mut().zip(&rates) {
            *s += r;
        }
        update_throughput(&mut state, &rates);
        let tr = &out.trajectory;
        summary.slots.push(SlotSummary {
            slot,
            iterations: tr.iterations(),
            peak_consensus: tr.peak_consensus(),
            final_consensus: tr.last().map_or(T::zero(), |r| r.consensus_max()),
            weighted_rate: rates.iter().zip(&weights).map(|(&r, &w)| r * w).sum(),
            elapsed: start.elapsed(),
        });
    }
    Ok(HorizonResult {
        utility: total_utility(&state, u),
        state,
        rate_sums,
        summary,
    })
}
