//! In-network successive convex approximation with gradient tracking.
//!
//! Every node keeps copies of the variable blocks it owns. One iteration is
//! bulk-synchronous: all nodes solve their strongly convex surrogate from the
//! frozen iteration-`n` state (in parallel), take a damped step toward the
//! solution, and then every block is mixed with its own doubly stochastic
//! matrix over its owner set. Gradient trackers follow the same mixing plus
//! the local gradient increment, and `π̃ = I_m·y − ∇f` estimates the sum of
//! the other owners' gradients. A block owned by a single node degenerates to
//! a plain damped surrogate step.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::mixing::MixingMatrix;
use crate::scalar::{count, dist, norm, Scalar};
use crate::schedule::ScheduleSet;

pub type BlockId = usize;

/// Values of a set of blocks keyed by block id.
pub type BlockPoint<T> = BTreeMap<BlockId, Vec<T>>;

#[derive(Debug, Error)]
pub enum ScaError {
    #[error("invalid block layout: {0}")]
    Layout(String),
    #[error("mixing matrix for block {block} has support {support:?}, owners are {owners:?}")]
    MixingSupport {
        block: BlockId,
        support: Vec<NodeId>,
        owners: Vec<NodeId>,
    },
    #[error("schedule rejected:\n{0}")]
    Schedule(String),
    #[error("oracle failure at node {node}, iteration {iteration}: {source}")]
    Oracle {
        node: NodeId,
        iteration: usize,
        #[source]
        source: OracleError,
    },
    #[error("expected {expected} initial states, got {got}")]
    StateCount { expected: usize, got: usize },
}

/// Failure reported by a local objective.
#[derive(Debug, Clone, Error)]
#[error("{message}{}", block.map(|b| format!(" (block {b})")).unwrap_or_default())]
pub struct OracleError {
    pub block: Option<BlockId>,
    pub message: String,
}

impl OracleError {
    pub fn new(block: Option<BlockId>, message: impl Into<String>) -> Self {
        OracleError {
            block,
            message: message.into(),
        }
    }
}

/// One variable block and the nodes holding a copy of it.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub dim: usize,
    /// Ascending node ids.
    pub owners: Vec<NodeId>,
    pub common: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    nodes: Vec<NodeId>,
    blocks: Vec<BlockSpec>,
    owned: Vec<Vec<BlockId>>,
}

impl BlockLayout {
    /// Block ids are positions in `blocks`.
    pub fn new(nodes: Vec<NodeId>, blocks: Vec<BlockSpec>) -> Result<Self, ScaError> {
        let mut nodes = nodes;
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(ScaError::Layout("no nodes".into()));
        }
        let mut owned = vec![Vec::new(); nodes.len()];
        let mut blocks = blocks;
        for (id, b) in blocks.iter_mut().enumerate() {
            if b.dim == 0 {
                return Err(ScaError::Layout(format!("block {id} has dimension 0")));
            }
            b.owners.sort_unstable();
            b.owners.dedup();
            if b.owners.is_empty() {
                return Err(ScaError::Layout(format!("block {id} has no owners")));
            }
            if b.common && b.owners != nodes {
                return Err(ScaError::Layout(format!("common block {id} is not owned by every node")));
            }
            for o in &b.owners {
                let Ok(pos) = nodes.binary_search(o) else {
                    return Err(ScaError::Layout(format!("block {id} owner {o} is not a node")));
                };
                owned[pos].push(id);
            }
        }
        Ok(BlockLayout { nodes, blocks, owned })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &BlockSpec {
        &self.blocks[id]
    }

    /// Blocks owned by the node at position `node_pos`.
    pub fn owned_by(&self, node_pos: usize) -> &[BlockId] {
        &self.owned[node_pos]
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// Scalars stored at one node across its copies.
    pub fn stored_dim(&self, node_pos: usize) -> usize {
        self.owned[node_pos].iter().map(|&m| self.blocks[m].dim).sum()
    }

    fn node_pos(&self, id: NodeId) -> usize {
        self.nodes.binary_search(&id).expect("owner is a node")
    }
}

/// Per-iteration evaluation context handed to oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalContext<T> {
    pub iteration: usize,
    /// Envelope Lipschitz level when smoothing is active.
    pub lipschitz: Option<T>,
}

impl<T: Scalar> EvalContext<T> {
    pub fn plain(iteration: usize) -> Self {
        EvalContext {
            iteration,
            lipschitz: None,
        }
    }

    fn from_schedule(s: &ScheduleSet<T>, n: usize) -> Self {
        EvalContext {
            iteration: n,
            lipschitz: s.smoothing.then(|| s.lipschitz(n)),
        }
    }
}

/// Smooth local objective `f_i` of one node over the blocks it owns.
pub trait LocalObjective<T: Scalar>: Send + Sync {
    fn value(&self, x: &BlockPoint<T>, ctx: &EvalContext<T>) -> T;

    fn gradient(&self, x: &BlockPoint<T>, ctx: &EvalContext<T>) -> BlockPoint<T>;

    /// Euclidean projection onto the feasible set of `block`.
    fn project(&self, block: BlockId, v: &mut [T]);

    /// Minimizer (within `tol`, zero meaning exact) of the surrogate
    /// `f̃(·; x) + π̃ᵀ(· − x)` over the feasible set, where `grad` is `∇f(x)`
    /// and `tau` the surrogate's strong-convexity constant.
    ///
    /// The default surrogate is the linearization plus `τ/2‖· − x‖²`, whose
    /// minimizer is a projected gradient step of length `1/τ`.
    fn surrogate_solve(
        &self,
        x: &BlockPoint<T>,
        pi: &BlockPoint<T>,
        grad: &BlockPoint<T>,
        tau: T,
        _tol: T,
        _ctx: &EvalContext<T>,
    ) -> Result<BlockPoint<T>, OracleError> {
        Ok(linearized_step(self, x, pi, grad, tau))
    }
}

/// `Proj(x − (∇f + π̃)/τ)` block-wise.
pub fn linearized_step<T: Scalar, O: LocalObjective<T> + ?Sized>(
    oracle: &O,
    x: &BlockPoint<T>,
    pi: &BlockPoint<T>,
    grad: &BlockPoint<T>,
    tau: T,
) -> BlockPoint<T> {
    x.iter()
        .map(|(&m, xm)| {
            let (g, p) = (&grad[&m], &pi[&m]);
            let mut v: Vec<T> = (0..xm.len()).map(|k| xm[k] - (g[k] + p[k]) / tau).collect();
            oracle.project(m, &mut v);
            (m, v)
        })
        .collect()
}

/// Convex term `G` shared by all nodes; depends on common blocks only.
pub trait ConvexPart<T: Scalar>: Send + Sync {
    fn value(&self, x: &BlockPoint<T>) -> T;
    /// An element of `∂G(x)` over the blocks of `x`.
    fn subgradient(&self, x: &BlockPoint<T>) -> BlockPoint<T>;
}

/// Source of the per-block consensus matrices.
pub trait MixingProvider<T: Scalar>: Send + Sync {
    fn mixer(&self, block: BlockId, iteration: usize) -> &MixingMatrix<T>;
}

/// The same matrices at every iteration.
#[derive(Debug, Clone)]
pub struct StaticMixing<T> {
    pub per_block: Vec<MixingMatrix<T>>,
}

impl<T: Scalar> MixingProvider<T> for StaticMixing<T> {
    fn mixer(&self, block: BlockId, _iteration: usize) -> &MixingMatrix<T> {
        &self.per_block[block]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState<T> {
    pub node: NodeId,
    pub x: BlockPoint<T>,
    /// Tracker of the owner-average gradient.
    pub y: BlockPoint<T>,
    /// Estimate of the other owners' gradient sum.
    pub pi: BlockPoint<T>,
    /// `∇f_i` at `x` (at the current smoothing level).
    pub grad: BlockPoint<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopCriteria<T> {
    pub max_iters: usize,
    pub consensus_tol: T,
    pub stationarity_tol: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow<T> {
    pub n: usize,
    /// `Σ f_i + G` at the block averages.
    pub objective: T,
    /// Per-block max distance to the owner average.
    pub consensus: Vec<T>,
    pub stationarity: T,
    pub alpha: T,
    pub elapsed: Duration,
}

impl<T: Scalar> TrajectoryRow<T> {
    pub fn consensus_max(&self) -> T {
        self.consensus.iter().copied().fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord<T> {
    pub rows: Vec<TrajectoryRow<T>>,
}

impl<T: Scalar> TrajectoryRecord<T> {
    pub fn last(&self) -> Option<&TrajectoryRow<T>> {
        self.rows.last()
    }

    /// Iterations performed (rows after the initial one).
    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    /// Largest consensus residual seen along the run.
    pub fn peak_consensus(&self) -> T {
        self.rows.iter().map(|r| r.consensus_max()).fold(T::zero(), T::max)
    }

    /// Same rows ignoring wall-clock time.
    pub fn same_numbers(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.n == b.n
                    && a.objective.to_bits_eq(b.objective)
                    && a.stationarity.to_bits_eq(b.stationarity)
                    && a.alpha.to_bits_eq(b.alpha)
                    && a.consensus.len() == b.consensus.len()
                    && a.consensus.iter().zip(&b.consensus).all(|(u, v)| u.to_bits_eq(*v))
            })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let blocks = self.rows.first().map_or(0, |r| r.consensus.len());
        let mut header: Vec<String> = ["n", "objective", "consensus_max", "stationarity", "alpha", "elapsed_s"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..blocks).map(|m| format!("consensus_block_{m}")));
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.n.to_string(),
                r.objective.to_string(),
                r.consensus_max().to_string(),
                r.stationarity.to_string(),
                r.alpha.to_string(),
                r.elapsed.as_secs_f64().to_string(),
            ];
            rec.extend(r.consensus.iter().map(|c| c.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Scalar> BitsEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        (self.is_nan() && other.is_nan()) || (self == other && self.is_sign_negative() == other.is_sign_negative())
    }
}

/// The network problem: layout, local objectives, mixing and schedules.
pub struct ScaEngine<T: Scalar, O> {
    layout: BlockLayout,
    oracles: Vec<O>,
    mixing: Box<dyn MixingProvider<T>>,
    convex: Option<Box<dyn ConvexPart<T>>>,
    schedule: ScheduleSet<T>,
    base_tau: Vec<T>,
}

impl<T: Scalar, O: LocalObjective<T>> ScaEngine<T, O> {
    /// `oracles[i]` belongs to `layout.nodes()[i]`. The surrogate constant of
    /// node `i` at iteration `n` is `schedule.tau(n)`.
    pub fn new(
        layout: BlockLayout,
        oracles: Vec<O>,
        mixing: Box<dyn MixingProvider<T>>,
        schedule: ScheduleSet<T>,
    ) -> Result<Self, ScaError> {
        if oracles.len() != layout.nodes().len() {
            return Err(ScaError::Layout(format!(
                "{} oracles for {} nodes",
                oracles.len(),
                layout.nodes().len()
            )));
        }
        for (m, b) in layout.blocks().iter().enumerate() {
            let w = mixing.mixer(m, 0);
            if w.support() != b.owners.as_slice() {
                return Err(ScaError::MixingSupport {
                    block: m,
                    support: w.support().to_vec(),
                    owners: b.owners.clone(),
                });
            }
        }
        let base_tau = vec![schedule.tau0; layout.nodes().len()];
        Ok(ScaEngine {
            layout,
            oracles,
            mixing,
            convex: None,
            schedule,
            base_tau,
        })
    }

    /// Per-node base `τ_i`; the schedule's `δ` decay multiplies it.
    pub fn with_node_tau(mut self, tau: Vec<T>) -> Result<Self, ScaError> {
        if tau.len() != self.layout.nodes().len() || tau.iter().any(|&t| t <= T::zero()) {
            return Err(ScaError::Layout("need one positive tau per node".into()));
        }
        self.base_tau = tau;
        Ok(self)
    }

    pub fn with_convex_part(mut self, g: Box<dyn ConvexPart<T>>) -> Self {
        self.convex = Some(g);
        self
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn oracles(&self) -> &[O] {
        &self.oracles
    }

    pub fn schedule(&self) -> &ScheduleSet<T> {
        &self.schedule
    }

    /// Projects the starting copies and sets `y = ∇f`, `π̃ = I_m·y − ∇f`.
    pub fn initialize(&self, x0: Vec<BlockPoint<T>>) -> Result<Vec<NodeState<T>>, ScaError> {
        if x0.len() != self.layout.nodes().len() {
            return Err(ScaError::StateCount {
                expected: self.layout.nodes().len(),
                got: x0.len(),
            });
        }
        let ctx = EvalContext::from_schedule(&self.schedule, 0);
        x0.into_iter()
            .enumerate()
            .map(|(pos, mut x)| {
                self.check_owned(pos, &x)?;
                for (&m, v) in x.iter_mut() {
                    self.oracles[pos].project(m, v);
                }
                let grad = self.oracles[pos].gradient(&x, &ctx);
                let y = grad.clone();
                let pi = self.tracker_estimate(&y, &grad);
                Ok(NodeState {
                    node: self.layout.nodes()[pos],
                    x,
                    y,
                    pi,
                    grad,
                })
            })
            .collect()
    }

    fn check_owned(&self, pos: usize, x: &BlockPoint<T>) -> Result<(), ScaError> {
        let owned = self.layout.owned_by(pos);
        if x.len() != owned.len()
            || owned
                .iter()
                .any(|m| x.get(m).map(|v| v.len()) != Some(self.layout.block(*m).dim))
        {
            return Err(ScaError::Layout(format!(
                "initial point of node {} does not match its owned blocks",
                self.layout.nodes()[pos]
            )));
        }
        Ok(())
    }

    fn tracker_estimate(&self, y: &BlockPoint<T>, grad: &BlockPoint<T>) -> BlockPoint<T> {
        y.iter()
            .map(|(&m, ym)| {
                let owners: T = count(self.layout.block(m).owners.len());
                let g = &grad[&m];
                (m, ym.iter().zip(g).map(|(&a, &b)| owners * a - b).collect())
            })
            .collect()
    }

    /// One bulk-synchronous step from iteration `n` to `n + 1`.
    pub fn iterate(&self, states: &[NodeState<T>], n: usize) -> Result<Vec<NodeState<T>>, ScaError> {
        let alpha = self.schedule.step_size(n);
        let eps = self.schedule.inexactness(n);
        let ctx = EvalContext::from_schedule(&self.schedule, n);
        let tau_factor = self.schedule.tau_factor(n);

        let z: Vec<BlockPoint<T>> = states
            .par_iter()
            .enumerate()
            .map(|(pos, s)| {
                let tau = self.base_tau[pos] * tau_factor;
                let solved = self.oracles[pos]
                    .surrogate_solve(&s.x, &s.pi, &s.grad, tau, eps, &ctx)
                    .map_err(|source| ScaError::Oracle {
                        node: s.node,
                        iteration: n,
                        source,
                    })?;
                Ok(s
                    .x
                    .iter()
                    .map(|(&m, xm)| {
                        let target = &solved[&m];
                        (m, xm.iter().zip(target).map(|(&a, &b)| a + alpha * (b - a)).collect())
                    })
                    .collect())
            })
            .collect::<Result<_, ScaError>>()?;

        let next_ctx = EvalContext::from_schedule(&self.schedule, n + 1);
        let next: Vec<NodeState<T>> = (0..states.len())
            .into_par_iter()
            .map(|pos| {
                let s = &states[pos];
                let mut x = BlockPoint::new();
                let mut y_mixed = BlockPoint::new();
                for &m in self.layout.owned_by(pos) {
                    let w = self.mixing.mixer(m, n);
                    let row = w.row(w.position(s.node).expect("node owns block"));
                    let dim = self.layout.block(m).dim;
                    let mut xm = vec![T::zero(); dim];
                    let mut ym = vec![T::zero(); dim];
                    for (j, &owner) in w.support().iter().enumerate() {
                        let wij = row[j];
                        if wij == T::zero() {
                            continue;
                        }
                        let other = self.layout.node_pos(owner);
                        for k in 0..dim {
                            xm[k] += wij * z[other][&m][k];
                            ym[k] += wij * states[other].y[&m][k];
                        }
                    }
                    self.oracles[pos].project(m, &mut xm);
                    x.insert(m, xm);
                    y_mixed.insert(m, ym);
                }
                let grad = self.oracles[pos].gradient(&x, &next_ctx);
                let y: BlockPoint<T> = y_mixed
                    .into_iter()
                    .map(|(m, ym)| {
                        let (gn, go) = (&grad[&m], &s.grad[&m]);
                        (m, (0..ym.len()).map(|k| ym[k] + gn[k] - go[k]).collect())
                    })
                    .collect();
                let pi = self.tracker_estimate(&y, &grad);
                NodeState {
                    node: s.node,
                    x,
                    y,
                    pi,
                    grad,
                }
            })
            .collect();
        Ok(next)
    }

    /// Owner averages of every block.
    pub fn block_averages(&self, states: &[NodeState<T>]) -> BlockPoint<T> {
        block_averages(&self.layout, states)
    }

    /// `Σ_i f_i(x̄) + G(x̄)`.
    pub fn objective_at(&self, avg: &BlockPoint<T>, ctx: &EvalContext<T>) -> T {
        let f: T = (0..self.oracles.len())
            .map(|pos| self.oracles[pos].value(&self.restrict(pos, avg), ctx))
            .sum();
        f + self.convex.as_ref().map_or(T::zero(), |g| g.value(avg))
    }

    fn restrict(&self, pos: usize, full: &BlockPoint<T>) -> BlockPoint<T> {
        self.layout
            .owned_by(pos)
            .iter()
            .map(|&m| (m, full[&m].clone()))
            .collect()
    }

    /// `‖x̄ − Proj_K(x̄ − ∇F(x̄) − g)‖` with `g ∈ ∂G(x̄)`.
    pub fn stationarity_residual(&self, avg: &BlockPoint<T>, ctx: &EvalContext<T>) -> T {
        let mut total: BlockPoint<T> = avg.iter().map(|(&m, v)| (m, vec![T::zero(); v.len()])).collect();
        for pos in 0..self.oracles.len() {
            let g = self.oracles[pos].gradient(&self.restrict(pos, avg), ctx);
            for (m, gm) in g {
                for (t, v) in total.get_mut(&m).expect("block").iter_mut().zip(gm) {
                    *t += v;
                }
            }
        }
        if let Some(gpart) = &self.convex {
            for (m, gm) in gpart.subgradient(avg) {
                for (t, v) in total.get_mut(&m).expect("block").iter_mut().zip(gm) {
                    *t += v;
                }
            }
        }
        let mut sq = T::zero();
        for (&m, xm) in avg {
            let owner = self.layout.node_pos(self.layout.block(m).owners[0]);
            let mut v: Vec<T> = xm.iter().zip(&total[&m]).map(|(&a, &g)| a - g).collect();
            self.oracles[owner].project(m, &mut v);
            let d = dist(xm, &v);
            sq += d * d;
        }
        sq.sqrt()
    }

    fn record(&self, states: &[NodeState<T>], n: usize, alpha: T, start: Instant) -> TrajectoryRow<T> {
        let ctx = EvalContext::from_schedule(&self.schedule, n);
        let avg = self.block_averages(states);
        TrajectoryRow {
            n,
            objective: self.objective_at(&avg, &ctx),
            consensus: consensus_residual(&self.layout, states),
            stationarity: self.stationarity_residual(&avg, &ctx),
            alpha,
            elapsed: start.elapsed(),
        }
    }

    /// Iterates until `max_iters` or until both residuals are within tolerance.
    pub fn run_to_termination(
        &self,
        initial: Vec<NodeState<T>>,
        stop: &StopCriteria<T>,
    ) -> Result<(Vec<NodeState<T>>, TrajectoryRecord<T>), ScaError> {
        let report = self.schedule.validate();
        if !report.passed() {
            return Err(ScaError::Schedule(report.to_string()));
        }
        let start = Instant::now();
        let mut states = initial;
        let mut record = TrajectoryRecord::default();
        record.rows.push(self.record(&states, 0, self.schedule.step_size(0), start));
        for n in 0..stop.max_iters {
            let last = record.last().expect("row");
            if last.consensus_max() <= stop.consensus_tol && last.stationarity <= stop.stationarity_tol {
                break;
            }
            states = self.iterate(&states, n)?;
            record.rows.push(self.record(&states, n + 1, self.schedule.step_size(n), start));
        }
        Ok((states, record))
    }
}

pub fn block_averages<T: Scalar>(layout: &BlockLayout, states: &[NodeState<T>]) -> BlockPoint<T> {
    layout
        .blocks()
        .iter()
        .enumerate()
        .map(|(m, b)| {
            let mut avg = vec![T::zero(); b.dim];
            for s in states.iter().filter(|s| b.owners.binary_search(&s.node).is_ok()) {
                for (a, &v) in avg.iter_mut().zip(&s.x[&m]) {
                    *a += v;
                }
            }
            let c: T = count(b.owners.len());
            avg.iter_mut().for_each(|a| *a /= c);
            (m, avg)
        })
        .collect()
}

/// Per block, `max_i ‖x_i^m − x̄^m‖` over the owners.
pub fn consensus_residual<T: Scalar>(layout: &BlockLayout, states: &[NodeState<T>]) -> Vec<T> {
    let avg = block_averages(layout, states);
    layout
        .blocks()
        .iter()
        .enumerate()
        .map(|(m, b)| {
            states
                .iter()
                .filter(|s| b.owners.binary_search(&s.node).is_ok())
                .map(|s| dist(&s.x[&m], &avg[&m]))
                .fold(T::zero(), T::max)
        })
        .collect()
}

/// Per block, `max_i ‖y_i^m − mean_j ∇_m f_j(x_j)‖`.
pub fn tracking_error<T: Scalar>(layout: &BlockLayout, states: &[NodeState<T>]) -> Vec<T> {
    layout
        .blocks()
        .iter()
        .enumerate()
        .map(|(m, b)| {
            let owners: Vec<&NodeState<T>> = states
                .iter()
                .filter(|s| b.owners.binary_search(&s.node).is_ok())
                .collect();
            let mut mean = vec![T::zero(); b.dim];
            for s in &owners {
                for (a, &g) in mean.iter_mut().zip(&s.grad[&m]) {
                    *a += g;
                }
            }
            let c: T = count(owners.len());
            mean.iter_mut().for_each(|a| *a /= c);
            owners
                .iter()
                .map(|s| dist(&s.y[&m], &mean))
                .fold(T::zero(), T::max)
        })
        .collect()
}

/// Per block, `‖Σ_i y_i^m − Σ_i ∇_m f_i‖`; zero in exact arithmetic.
pub fn tracker_sum_gap<T: Scalar>(layout: &BlockLayout, states: &[NodeState<T>]) -> Vec<T> {
    layout
        .blocks()
        .iter()
        .enumerate()
        .map(|(m, b)| {
            let mut gap = vec![T::zero(); b.dim];
            for s in states.iter().filter(|s| b.owners.binary_search(&s.node).is_ok()) {
                for k in 0..b.dim {
                    gap[k] += s.y[&m][k] - s.grad[&m][k];
                }
            }
            norm(&gap)
        })
        .collect()
}
