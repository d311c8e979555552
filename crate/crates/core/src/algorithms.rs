//! Drivers binding the consensus engine to the wireless problem, and the
//! single-cell baselines.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sca::{
    BlockPoint, LocalObjective, NodeState, ScaEngine, ScaError, StopCriteria, TrajectoryRecord, TrajectoryRow,
};
use crate::scalar::{count, lit, Scalar};
use crate::schedule::ScheduleSet;
use crate::wireless::{Allocation, CmOracle, CopyScope, OwnedConvexPart, ProblemInstance, RmOracle, WirelessLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "LXGP-RM")]
    LxgpRm,
    #[serde(rename = "LXLP-RM")]
    LxlpRm,
    #[serde(rename = "GXGP-CM")]
    GxgpCm,
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "SC-NI")]
    ScNi,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [
        AlgorithmKind::LxgpRm,
        AlgorithmKind::LxlpRm,
        AlgorithmKind::GxgpCm,
        AlgorithmKind::Sc,
        AlgorithmKind::ScNi,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AlgorithmKind::LxgpRm => "LXGP-RM",
            AlgorithmKind::LxlpRm => "LXLP-RM",
            AlgorithmKind::GxgpCm => "GXGP-CM",
            AlgorithmKind::Sc => "SC",
            AlgorithmKind::ScNi => "SC-NI",
        }
    }

    pub fn is_distributed(self) -> bool {
        matches!(self, AlgorithmKind::LxgpRm | AlgorithmKind::LxlpRm | AlgorithmKind::GxgpCm)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AlgorithmKind {
    type Err = AlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| AlgorithmError::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sca(#[from] ScaError),
    #[error("single-cell solve for base station {bs} did not converge: {detail}")]
    SingleCell { bs: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig<T> {
    pub kind: AlgorithmKind,
    /// `tau0` is the surrogate constant `τ_b`.
    pub schedule: ScheduleSet<T>,
    pub stop: StopCriteria<T>,
    /// Per-BS `τ_b` overriding `schedule.tau0`.
    pub node_tau: Option<Vec<T>>,
    /// Initial power per channel as a fraction of `P_b/|K|`.
    pub init_power_fraction: T,
    pub sc_rounds: usize,
    pub sc_tol: T,
}

impl<T: Scalar> AlgorithmConfig<T> {
    /// Defaults of the reference four-cell experiment.
    pub fn table1(kind: AlgorithmKind) -> Self {
        let mut schedule = ScheduleSet::diminishing(lit(0.99), lit(0.53));
        schedule.tau0 = lit(1e-3);
        if kind == AlgorithmKind::GxgpCm {
            schedule.eps0 = lit(5e-2);
            schedule.gamma = lit(0.5);
        }
        AlgorithmConfig {
            kind,
            schedule,
            stop: StopCriteria {
                max_iters: 3000,
                consensus_tol: lit(1e-6),
                stationarity_tol: lit(1e-6),
            },
            node_tau: None,
            init_power_fraction: lit(0.01),
            sc_rounds: 10,
            sc_tol: lit(1e-6),
        }
    }

    pub fn validate(&self) -> Result<(), AlgorithmError> {
        let report = self.schedule.validate();
        if !report.passed() {
            return Err(AlgorithmError::Config(report.to_string()));
        }
        if !(self.schedule.tau0 > T::zero()) {
            return Err(AlgorithmError::Config("tau must be positive".into()));
        }
        if let Some(t) = &self.node_tau {
            if t.iter().any(|&v| !(v > T::zero())) {
                return Err(AlgorithmError::Config("every per-BS tau must be positive".into()));
            }
        }
        if !(self.init_power_fraction > T::zero() && self.init_power_fraction <= T::one()) {
            return Err(AlgorithmError::Config("init_power_fraction must be in (0, 1]".into()));
        }
        if self.sc_rounds == 0 {
            return Err(AlgorithmError::Config("sc_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a one-shot solve.
#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    /// Each BS's own power row and assignment.
    pub allocation: Allocation<T>,
    /// Owner-averaged power rows (equal to `allocation.power` for baselines).
    pub consensus_power: Vec<Vec<T>>,
    pub trajectory: TrajectoryRecord<T>,
    /// Scalars stored per BS across its copies.
    pub stored_per_bs: Vec<usize>,
}

pub fn run<T: Scalar>(inst: &ProblemInstance<T>, cfg: &AlgorithmConfig<T>) -> Result<RunOutput<T>, AlgorithmError> {
    cfg.validate()?;
    match cfg.kind {
        AlgorithmKind::LxgpRm => run_rm(inst, cfg, CopyScope::Global),
        AlgorithmKind::LxlpRm => run_rm(inst, cfg, CopyScope::Local),
        AlgorithmKind::GxgpCm => run_gxgp_cm(inst, cfg),
        AlgorithmKind::Sc => Ok(baseline_output(inst, run_sc(inst, cfg.sc_rounds, cfg.sc_tol)?)),
        AlgorithmKind::ScNi => Ok(baseline_output(inst, run_sc_ni(inst)?)),
    }
}

pub fn run_lxgp_rm<T: Scalar>(inst: &ProblemInstance<T>, cfg: &AlgorithmConfig<T>) -> Result<RunOutput<T>, AlgorithmError> {
    cfg.validate()?;
    run_rm(inst, cfg, CopyScope::Global)
}

pub fn run_lxlp_rm<T: Scalar>(inst: &ProblemInstance<T>, cfg: &AlgorithmConfig<T>) -> Result<RunOutput<T>, AlgorithmError> {
    cfg.validate()?;
    run_rm(inst, cfg, CopyScope::Local)
}

/// Engine for the direct split, for callers that want to step it themselves.
pub fn rm_engine<T: Scalar>(
    inst: &ProblemInstance<T>,
    cfg: &AlgorithmConfig<T>,
    scope: CopyScope,
) -> Result<ScaEngine<T, RmOracle<T>>, AlgorithmError> {
    let wl = WirelessLayout::direct(inst, scope)?;
    let shared = Arc::new(inst.clone());
    let oracles = (0..inst.num_bs()).map(|b| RmOracle::new(shared.clone(), b)).collect();
    let mut engine = ScaEngine::new(wl.layout, oracles, Box::new(wl.mixing), cfg.schedule)?;
    if let Some(t) = &cfg.node_tau {
        engine = engine.with_node_tau(t.clone())?;
    }
    Ok(engine)
}

pub fn cm_engine<T: Scalar>(
    inst: &ProblemInstance<T>,
    cfg: &AlgorithmConfig<T>,
) -> Result<ScaEngine<T, CmOracle<T>>, AlgorithmError> {
    let wl = WirelessLayout::decomposed(inst)?;
    let shared = Arc::new(inst.clone());
    let oracles = (0..inst.num_bs()).map(|b| CmOracle::new(shared.clone(), b)).collect();
    let mut engine = ScaEngine::new(wl.layout, oracles, Box::new(wl.mixing), cfg.schedule)?
        .with_convex_part(Box::new(OwnedConvexPart(shared)));
    if let Some(t) = &cfg.node_tau {
        engine = engine.with_node_tau(t.clone())?;
    }
    Ok(engine)
}

/// Starting copies: `x = 0` and every power copy at `fraction·P_b/|K|`.
pub fn initial_point<T: Scalar, O: LocalObjective<T>>(
    inst: &ProblemInstance<T>,
    engine: &ScaEngine<T, O>,
    fraction: T,
) -> Vec<BlockPoint<T>> {
    let nb = inst.num_bs();
    let layout = engine.layout();
    (0..layout.nodes().len())
        .map(|pos| {
            layout
                .owned_by(pos)
                .iter()
                .map(|&m| {
                    let dim = layout.block(m).dim;
                    let v = if m >= nb {
                        vec![fraction * inst.budget(m - nb) / count::<T>(inst.channels()); dim]
                    } else {
                        vec![T::zero(); dim]
                    };
                    (m, v)
                })
                .collect()
        })
        .collect()
}

fn run_rm<T: Scalar>(inst: &ProblemInstance<T>, cfg: &AlgorithmConfig<T>, scope: CopyScope) -> Result<RunOutput<T>, AlgorithmError> {
    let engine = rm_engine(inst, cfg, scope)?;
    let x0 = initial_point(inst, &engine, cfg.init_power_fraction);
    let states = engine.initialize(x0)?;
    let (states, trajectory) = engine.run_to_termination(states, &cfg.stop)?;
    Ok(collect_output(inst, &engine, &states, trajectory))
}

pub fn run_gxgp_cm<T: Scalar>(inst: &ProblemInstance<T>, cfg: &AlgorithmConfig<T>) -> Result<RunOutput<T>, AlgorithmError> {
    cfg.validate()?;
    let engine = cm_engine(inst, cfg)?;
    let x0 = initial_point(inst, &engine, cfg.init_power_fraction);
    let states = engine.initialize(x0)?;
    let (states, trajectory) = engine.run_to_termination(states, &cfg.stop)?;
    Ok(collect_output(inst, &engine, &states, trajectory))
}

/// Allocation read from each BS's own rows (`p^b_b`, `x^b_b`).
pub fn collect_output<T: Scalar, O: LocalObjective<T>>(
    inst: &ProblemInstance<T>,
    engine: &ScaEngine<T, O>,
    states: &[NodeState<T>],
    trajectory: TrajectoryRecord<T>,
) -> RunOutput<T> {
    let nb = inst.num_bs();
    let kk = inst.channels();
    let mut alloc = Allocation::zeros(inst);
    for (b, s) in states.iter().enumerate() {
        alloc.power[b] = s.x[&(nb + b)].clone();
        for (j, &i) in inst.users_of(b).iter().enumerate() {
            alloc.assign[i] = s.x[&b][j * kk..(j + 1) * kk].to_vec();
        }
    }
    alloc.clamp_nonnegative();
    let avg = engine.block_averages(states);
    let consensus_power = (0..nb).map(|b| avg[&(nb + b)].clone()).collect();
    let stored_per_bs = (0..nb).map(|pos| engine.layout().stored_dim(pos)).collect();
    RunOutput {
        allocation: alloc,
        consensus_power,
        trajectory,
        stored_per_bs,
    }
}

fn baseline_output<T: Scalar>(inst: &ProblemInstance<T>, alloc: Allocation<T>) -> RunOutput<T> {
    let objective = -crate::wireless::weighted_sum_rate(inst, &alloc);
    RunOutput {
        consensus_power: alloc.power.clone(),
        allocation: alloc,
        trajectory: TrajectoryRecord {
            rows: vec![TrajectoryRow {
                n: 0,
                objective,
                consensus: Vec::new(),
                stationarity: T::zero(),
                alpha: T::zero(),
                elapsed: std::time::Duration::ZERO,
            }],
        },
        stored_per_bs: (0..inst.num_bs())
            .map(|b| inst.channels() * (inst.users_of(b).len() + 1))
            .collect(),
    }
}

/// One cell's data for the perspective-form problem
/// `max Σ w_i Σ_k x_ik log(1 + p_k g_ik/(n_ik x_ik))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleCell<T> {
    pub weights: Vec<T>,
    /// Signal gains, user × channel.
    pub gains: Vec<Vec<T>>,
    /// Effective noise (noise plus frozen interference), user × channel.
    pub noise: Vec<Vec<T>>,
    pub budget: T,
}

/// `Σ w x log(1 + p g/(n x))` with `0·log(1 + c/0) = 0`.
pub fn single_cell_objective<T: Scalar>(cell: &SingleCell<T>, p: &[T], x: &[Vec<T>]) -> T {
    let mut total = T::zero();
    for (i, w) in cell.weights.iter().enumerate() {
        for (k, &pk) in p.iter().enumerate() {
            let xi = x[i][k];
            if xi > T::zero() {
                total += *w * xi * (pk * cell.gains[i][k] / (cell.noise[i][k] * xi)).ln_1p();
            }
        }
    }
    total
}

/// Inverse of `u ↦ ln(1+u) − u/(1+u)` on `u ≥ 0`.
fn inverse_marginal<T: Scalar>(c: T) -> T {
    if c <= T::zero() {
        return T::zero();
    }
    let phi = |u: T| u.ln_1p() - u / (T::one() + u);
    let (mut lo, mut hi) = (T::zero(), T::one());
    while phi(hi) < c {
        lo = hi;
        hi *= lit(4.0);
    }
    let mut u = (lo + hi) * lit(0.5);
    for _ in 0..100 {
        let f = phi(u) - c;
        if f > T::zero() {
            hi = u;
        } else {
            lo = u;
        }
        let d = u / ((T::one() + u) * (T::one() + u));
        let mut next = u - f / d;
        if !(next > lo && next < hi) {
            next = (lo + hi) * lit(0.5);
        }
        if (next - u).abs() <= lit::<T>(1e-15) * u.max(T::one()) {
            return next;
        }
        u = next;
    }
    u
}

/// Optimal shares on one channel for SNR-per-unit-share values `a_i`.
fn allocate_channel<T: Scalar>(w: &[T], a: &[T], previous: &[T]) -> Vec<T> {
    let active: Vec<usize> = (0..a.len()).filter(|&i| a[i] > T::zero()).collect();
    match active.len() {
        0 => return previous.to_vec(),
        1 => {
            let mut x = vec![T::zero(); a.len()];
            x[active[0]] = T::one();
            return x;
        }
        _ => {}
    }
    // x_i(ν) = a_i / φ⁻¹(ν/w_i), capped at 1; Σ x_i(ν) decreases in ν.
    let shares = |nu: T| -> Vec<T> {
        (0..a.len())
            .map(|i| {
                if a[i] <= T::zero() {
                    T::zero()
                } else {
                    let u = inverse_marginal(nu / w[i]);
                    if u <= a[i] {
                        T::one()
                    } else {
                        a[i] / u
                    }
                }
            })
            .collect()
    };
    let total = |nu: T| shares(nu).into_iter().sum::<T>();
    let (mut lo, mut hi) = (lit::<T>(1e-12), T::one());
    while total(hi) > T::one() {
        hi *= lit(4.0);
    }
    while total(lo) < T::one() && lo > lit(1e-300) {
        lo *= lit(1e-4);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if total(mid) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - T::one() < lit(1e-14) {
            break;
        }
    }
    let mut x = shares(hi);
    let s: T = x.iter().copied().sum();
    if s > T::one() {
        x.iter_mut().for_each(|v| *v /= s);
    }
    x
}

/// Water-filling: `Σ_k p_k = P` with `D_k(p_k) = μ` on active channels,
/// where `D_k(p) = Σ_i w_i x_ik/(c_ik + p)` and `c_ik = n_ik x_ik / g_ik`;
/// `terms[k]` holds the pairs `(w_i x_ik, c_ik)`.
fn water_fill<T: Scalar>(terms: &[Vec<(T, T)>], budget: T) -> Vec<T> {
    let deriv = |k: usize, p: T| -> (T, T) {
        let mut d = T::zero();
        let mut dd = T::zero();
        for &(w, c) in &terms[k] {
            let den = c + p;
            d += w / den;
            dd -= w / (den * den);
        }
        (d, dd)
    };
    let level = |k: usize, mu: T| -> T {
        if terms[k].is_empty() {
            return T::zero();
        }
        let (d0, _) = deriv(k, T::zero());
        if d0 <= mu {
            return T::zero();
        }
        // D is convex and decreasing: Newton from the left is monotone.
        let mut p = T::zero();
        for _ in 0..200 {
            let (d, dd) = deriv(k, p);
            let step = (d - mu) / -dd;
            p += step;
            if step <= lit::<T>(1e-15) * p.max(T::one()) {
                break;
            }
        }
        p
    };
    if terms.iter().all(|t| t.is_empty()) {
        let kk = terms.len();
        return vec![budget / count::<T>(kk); kk];
    }
    let total = |mu: T| (0..terms.len()).map(|k| level(k, mu)).sum::<T>();
    let mut hi = (0..terms.len()).map(|k| deriv(k, T::zero()).0).fold(T::zero(), T::max);
    let mut lo = hi;
    while total(lo) < budget {
        lo *= lit(0.25);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - T::one() < lit(1e-15) {
            break;
        }
    }
    let mut p: Vec<T> = (0..terms.len()).map(|k| level(k, lo)).collect();
    let s: T = p.iter().copied().sum();
    if s > budget {
        p.iter_mut().for_each(|v| *v = *v * budget / s);
    }
    p
}

/// Alternating exact maximization over shares and powers.
pub fn single_cell_solve<T: Scalar>(cell: &SingleCell<T>, tol: T) -> Result<(Vec<T>, Vec<Vec<T>>), String> {
    let users = cell.weights.len();
    let kk = cell.gains.first().map_or(0, Vec::len);
    if kk == 0 {
        return Err("no channels".into());
    }
    if cell.noise.iter().flatten().any(|&n| !(n > T::zero())) {
        return Err("effective noise must be positive".into());
    }
    if users == 0 {
        return Ok((vec![T::zero(); kk], Vec::new()));
    }
    let mut p = vec![cell.budget / count::<T>(kk); kk];
    let mut x = vec![vec![T::one() / count::<T>(users); kk]; users];
    let mut value = single_cell_objective(cell, &p, &x);
    const MAX_ROUNDS: usize = 5000;
    for _ in 0..MAX_ROUNDS {
        for k in 0..kk {
            let a: Vec<T> = (0..users).map(|i| p[k] * cell.gains[i][k] / cell.noise[i][k]).collect();
            let prev: Vec<T> = (0..users).map(|i| x[i][k]).collect();
            let col = allocate_channel(&cell.weights, &a, &prev);
            for i in 0..users {
                x[i][k] = col[i];
            }
        }
        let terms: Vec<Vec<(T, T)>> = (0..kk)
            .map(|k| {
                (0..users)
                    .filter(|&i| x[i][k] > T::zero() && cell.gains[i][k] > T::zero())
                    .map(|i| (cell.weights[i] * x[i][k], cell.noise[i][k] * x[i][k] / cell.gains[i][k]))
                    .collect()
            })
            .collect();
        p = water_fill(&terms, cell.budget);
        let next = single_cell_objective(cell, &p, &x);
        let change = (next - value).abs();
        value = next;
        if change <= tol * value.abs().max(T::one()) {
            return Ok((p, x));
        }
    }
    Err(format!("alternation did not settle within {MAX_ROUNDS} rounds"))
}

fn cell_for<T: Scalar>(inst: &ProblemInstance<T>, b: usize, power: Option<&[Vec<T>]>) -> SingleCell<T> {
    let users = inst.users_of(b);
    let kk = inst.channels();
    SingleCell {
        weights: users.iter().map(|&i| inst.users()[i].weight).collect(),
        gains: users.iter().map(|&i| (0..kk).map(|k| inst.gain(b, i, k)).collect()).collect(),
        noise: users
            .iter()
            .map(|&i| {
                (0..kk)
                    .map(|k| {
                        let mut n = inst.noise();
                        if let Some(p) = power {
                            for &nb in inst.graph().neighbors_of(b) {
                                n += p[nb][k] * inst.gain(nb, i, k);
                            }
                        }
                        n
                    })
                    .collect()
            })
            .collect(),
        budget: inst.budget(b),
    }
}

const SC_TOL: f64 = 1e-10;

fn solve_cell_into<T: Scalar>(
    inst: &ProblemInstance<T>,
    b: usize,
    frozen: Option<&[Vec<T>]>,
    alloc: &mut Allocation<T>,
) -> Result<(), AlgorithmError> {
    let cell = cell_for(inst, b, frozen);
    let (p, x) = single_cell_solve(&cell, lit(SC_TOL)).map_err(|detail| AlgorithmError::SingleCell { bs: b, detail })?;
    alloc.power[b] = p;
    for (j, &i) in inst.users_of(b).iter().enumerate() {
        alloc.assign[i] = x[j].clone();
    }
    Ok(())
}

/// Every cell solved on its own, interference ignored.
pub fn run_sc_ni<T: Scalar>(inst: &ProblemInstance<T>) -> Result<Allocation<T>, AlgorithmError> {
    let mut alloc = Allocation::zeros(inst);
    for b in 0..inst.num_bs() {
        solve_cell_into(inst, b, None, &mut alloc)?;
    }
    alloc.clamp_nonnegative();
    Ok(alloc)
}

/// Sequential best responses in BS order with neighbor powers frozen,
/// starting from the interference-free solution.
pub fn run_sc<T: Scalar>(inst: &ProblemInstance<T>, rounds: usize, tol: T) -> Result<Allocation<T>, AlgorithmError> {
    if rounds == 0 {
        return Err(AlgorithmError::Config("sc_rounds must be at least 1".into()));
    }
    let mut alloc = run_sc_ni(inst)?;
    for _ in 0..rounds {
        let before = alloc.power.clone();
        for b in 0..inst.num_bs() {
            let frozen = alloc.power.clone();
            solve_cell_into(inst, b, Some(&frozen), &mut alloc)?;
        }
        let change = before
            .iter()
            .flatten()
            .zip(alloc.power.iter().flatten())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        if change <= tol {
            break;
        }
    }
    alloc.clamp_nonnegative();
    Ok(alloc)
}
