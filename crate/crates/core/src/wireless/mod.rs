//! Multi-cell OFDMA downlink: instance data, allocations and sampling.
//!
//! Base stations are the graph nodes `0..|B|`. User `i` is served by one
//! base station and only the gains from transmitters in the closed
//! neighborhood of its server are kept; interference from farther cells is
//! neglected. Rates are in nats (natural logarithm).

mod check;
mod cm_solver;
mod objective;
mod oracle;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::graph::InterferenceGraph;
use crate::scalar::{lit, Scalar};

pub use check::{gradient_check, relative_error, GradientCheck};
pub use objective::{
    f_cm_value_and_grad, f_rm_value_and_grad, g_cm_value_and_grad, p2_objective, p3_objective, rate_term,
    user_rates, weighted_sum_rate, BsGradient, PowerCopies, X_FLOOR,
};
pub use cm_solver::{CmPoint, CmProblem, CmSolution};
pub use oracle::{
    surrogate_solve_cm, surrogate_solve_rm, CmConvexPart, CmOracle, CmSurrogate, CopyScope, OwnedConvexPart, RmOracle, WirelessLayout,
};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(#[from] serde_json::Error),
}

/// One user: its server, weight and per-channel link gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User<T> {
    pub serving: usize,
    pub weight: T,
    /// Gains `g_{b'ik}` over channels, keyed by transmitter `b' ∈ Nb(serving)`.
    pub gains: BTreeMap<usize, Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct ProblemInstance<T> {
    graph: InterferenceGraph,
    channels: usize,
    noise: T,
    power_budget: Vec<T>,
    users: Vec<User<T>>,
    #[serde(skip)]
    users_of: Vec<Vec<usize>>,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn new(
        graph: InterferenceGraph,
        channels: usize,
        noise: T,
        power_budget: Vec<T>,
        users: Vec<User<T>>,
    ) -> Result<Self, InstanceError> {
        let mut inst = ProblemInstance {
            graph,
            channels,
            noise,
            power_budget,
            users,
            users_of: Vec::new(),
        };
        inst.validate()?;
        inst.index_users();
        Ok(inst)
    }

    fn index_users(&mut self) {
        self.users_of = vec![Vec::new(); self.graph.len()];
        for (i, u) in self.users.iter().enumerate() {
            self.users_of[u.serving].push(i);
        }
    }

    fn validate(&self) -> Result<(), InstanceError> {
        let bad = |m: String| Err(InstanceError::Invalid(m));
        let nb = self.graph.len();
        if self.graph.node_ids().iter().enumerate().any(|(i, &id)| i != id) {
            return bad("base stations must be numbered 0..|B|".into());
        }
        if self.channels == 0 {
            return bad("need at least one channel".into());
        }
        if !(self.noise > T::zero()) {
            return bad("noise variance must be positive".into());
        }
        if self.power_budget.len() != nb || self.power_budget.iter().any(|&p| !(p > T::zero())) {
            return bad("need one positive power budget per base station".into());
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.serving >= nb {
                return bad(format!("user {i} served by unknown base station {}", u.serving));
            }
            if !(u.weight > T::zero()) {
                return bad(format!("user {i} has non-positive weight"));
            }
            let hood = self.graph.closed_neighborhood_indices(u.serving);
            if !u.gains.contains_key(&u.serving) {
                return bad(format!("user {i} has no signal gains"));
            }
            for (tx, g) in &u.gains {
                if hood.binary_search(tx).is_err() {
                    return bad(format!("user {i} stores a gain from non-neighbor {tx}"));
                }
                if g.len() != self.channels || g.iter().any(|&v| !(v >= T::zero())) {
                    return bad(format!("user {i} gains from {tx} must be {} nonnegative values", self.channels));
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &InterferenceGraph {
        &self.graph
    }

    pub fn num_bs(&self) -> usize {
        self.graph.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn noise(&self) -> T {
        self.noise
    }

    pub fn budget(&self, b: usize) -> T {
        self.power_budget[b]
    }

    pub fn users(&self) -> &[User<T>] {
        &self.users
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// User indices served by `b`.
    pub fn users_of(&self, b: usize) -> &[usize] {
        &self.users_of[b]
    }

    /// `g_{tx,i,k}`, zero when the link is not kept.
    pub fn gain(&self, tx: usize, user: usize, k: usize) -> T {
        self.users[user].gains.get(&tx).map_or(T::zero(), |g| g[k])
    }

    pub fn weights(&self) -> Vec<T> {
        self.users.iter().map(|u| u.weight).collect()
    }

    pub fn with_weights(mut self, weights: &[T]) -> Result<Self, InstanceError> {
        if weights.len() != self.users.len() || weights.iter().any(|&w| !(w > T::zero())) {
            return Err(InstanceError::Invalid("need one positive weight per user".into()));
        }
        for (u, &w) in self.users.iter_mut().zip(weights) {
            u.weight = w;
        }
        Ok(self)
    }

    /// Same instance with every cross-cell gain set to zero.
    pub fn without_interference(mut self) -> Self {
        for u in &mut self.users {
            let s = u.serving;
            for (tx, g) in u.gains.iter_mut() {
                if *tx != s {
                    g.iter_mut().for_each(|v| *v = T::zero());
                }
            }
        }
        self
    }

    pub fn save_json(&self, path: &Path) -> Result<(), InstanceError>
    where
        T: Serialize,
    {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, InstanceError>
    where
        T: DeserializeOwned,
    {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError>
    where
        T: DeserializeOwned,
    {
        let raw: ProblemInstance<T> = serde_json::from_str(text)?;
        ProblemInstance::new(raw.graph, raw.channels, raw.noise, raw.power_budget, raw.users)
    }
}

/// Powers `p_{bk}` and fractional assignments `x_{bik}` (per user, over channels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation<T> {
    pub power: Vec<Vec<T>>,
    pub assign: Vec<Vec<T>>,
}

impl<T: Scalar> Allocation<T> {
    pub fn zeros(inst: &ProblemInstance<T>) -> Self {
        Allocation {
            power: vec![vec![T::zero(); inst.channels()]; inst.num_bs()],
            assign: vec![vec![T::zero(); inst.channels()]; inst.num_users()],
        }
    }

    /// Violations of the budget, per-channel assignment and sign constraints.
    pub fn violations(&self, inst: &ProblemInstance<T>) -> Vec<String> {
        let tol: T = lit(1e-9);
        let mut out = Vec::new();
        for b in 0..inst.num_bs() {
            let total: T = self.power[b].iter().copied().sum();
            if total > inst.budget(b) + tol {
                out.push(format!("bs {b}: power {total} exceeds budget {}", inst.budget(b)));
            }
            for k in 0..inst.channels() {
                if self.power[b][k] < -lit::<T>(1e-12) {
                    out.push(format!("bs {b} channel {k}: negative power"));
                }
                let share: T = inst.users_of(b).iter().map(|&i| self.assign[i][k]).sum();
                if share > T::one() + tol {
                    out.push(format!("bs {b} channel {k}: assignment {share} exceeds 1"));
                }
            }
        }
        for (i, row) in self.assign.iter().enumerate() {
            if row.iter().any(|&x| x < -lit::<T>(1e-12) || x > T::one() + tol) {
                out.push(format!("user {i}: assignment outside [0,1]"));
            }
        }
        out
    }

    /// Clamps tiny negative round-off to zero.
    pub fn clamp_nonnegative(&mut self) {
        for v in self.power.iter_mut().chain(self.assign.iter_mut()).flatten() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

/// Parameters for drawing an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceParams {
    pub users_per_bs: usize,
    pub channels: usize,
    pub noise: f64,
    pub power_budget: f64,
    pub signal_scale: f64,
    pub interference_scale: f64,
}

impl InstanceParams {
    /// Four-cell ring, three users per cell, three channels.
    pub fn table1() -> Self {
        InstanceParams {
            users_per_bs: 3,
            channels: 3,
            noise: 0.01,
            power_budget: 10.0,
            signal_scale: 1.0,
            interference_scale: 0.5,
        }
    }
}

/// Rayleigh draw with scale `sigma` by inversion.
pub fn rayleigh<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let u: f64 = rng.gen();
    sigma * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Draws independent Rayleigh gains; unit user weights.
pub fn sample_instance<T: Scalar, R: Rng + ?Sized>(
    graph: &InterferenceGraph,
    params: &InstanceParams,
    rng: &mut R,
) -> Result<ProblemInstance<T>, InstanceError> {
    if !(params.signal_scale > 0.0 && params.interference_scale > 0.0) {
        return Err(InstanceError::Invalid("Rayleigh scales must be positive".into()));
    }
    let mut users = Vec::with_capacity(graph.len() * params.users_per_bs);
    for b in 0..graph.len() {
        for _ in 0..params.users_per_bs {
            let mut gains = BTreeMap::new();
            for tx in graph.closed_neighborhood_indices(b) {
                let scale = if tx == b {
                    params.signal_scale
                } else {
                    params.interference_scale
                };
                let g: Vec<T> = (0..params.channels).map(|_| lit(rayleigh(rng, scale))).collect();
                gains.insert(tx, g);
            }
            users.push(User {
                serving: b,
                weight: T::one(),
                gains,
            });
        }
    }
    ProblemInstance::new(
        graph.clone(),
        params.channels,
        lit(params.noise),
        vec![lit(params.power_budget); graph.len()],
        users,
    )
}
