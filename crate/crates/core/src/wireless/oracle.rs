//! Binding of the wireless problem to the consensus engine: block layouts,
//! per-BS oracles and the local surrogate solvers.

use std::sync::Arc;

use super::objective::{f_cm_value_and_grad, f_rm_value_and_grad, g_cm_value_and_grad, PowerCopies};
use super::ProblemInstance;
use crate::mixing::MixingMatrix;
use super::cm_solver::{CmPoint, CmProblem};
use crate::projection::{project_allocation, project_power};
use crate::sca::{
    linearized_step, BlockId, BlockLayout, BlockPoint, BlockSpec, ConvexPart, EvalContext, LocalObjective, OracleError,
    ScaError, StaticMixing,
};
use crate::scalar::{lit, Scalar};

/// Which BSs keep a copy of each power row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopyScope {
    /// Every BS copies every power row.
    Global,
    /// BS `b` copies only the rows of `Nb(b)`.
    Local,
}

/// Block ids: `x_b` is block `b`, the power row of `b` is block `|B| + b`.
#[derive(Debug, Clone)]
pub struct WirelessLayout<T> {
    pub layout: BlockLayout,
    pub mixing: StaticMixing<T>,
    pub scope: CopyScope,
    pub shared_x: bool,
}

impl<T: Scalar> WirelessLayout<T> {
    /// Direct split: private `x_b`, power rows copied per `scope`.
    pub fn direct<U: Scalar>(inst: &ProblemInstance<U>, scope: CopyScope) -> Result<Self, ScaError> {
        Self::build(inst, scope, false)
    }

    /// Decomposed split: every BS copies everything.
    pub fn decomposed<U: Scalar>(inst: &ProblemInstance<U>) -> Result<Self, ScaError> {
        Self::build(inst, CopyScope::Global, true)
    }

    fn build<U: Scalar>(inst: &ProblemInstance<U>, scope: CopyScope, shared_x: bool) -> Result<Self, ScaError> {
        let g = inst.graph();
        let nb = inst.num_bs();
        let all: Vec<usize> = (0..nb).collect();
        let global = MixingMatrix::from_graph(g);
        let mut blocks = Vec::with_capacity(2 * nb);
        let mut per_block = Vec::with_capacity(2 * nb);
        for b in 0..nb {
            let dim = inst.users_of(b).len() * inst.channels();
            if dim == 0 {
                return Err(ScaError::Layout(format!("base station {b} serves no users")));
            }
            if shared_x {
                blocks.push(BlockSpec {
                    dim,
                    owners: all.clone(),
                    common: true,
                });
                per_block.push(global.clone());
            } else {
                blocks.push(BlockSpec {
                    dim,
                    owners: vec![b],
                    common: nb == 1,
                });
                per_block.push(MixingMatrix::from_parts(vec![b], Vec::new(), vec![T::one()]));
            }
        }
        for b in 0..nb {
            let (owners, w) = match scope {
                CopyScope::Global => (all.clone(), global.clone()),
                CopyScope::Local => (
                    g.closed_neighborhood_indices(b),
                    MixingMatrix::local(g, b).map_err(|e| ScaError::Layout(e.to_string()))?,
                ),
            };
            blocks.push(BlockSpec {
                dim: inst.channels(),
                common: owners.len() == nb,
                owners,
            });
            per_block.push(w);
        }
        Ok(WirelessLayout {
            layout: BlockLayout::new(all, blocks)?,
            mixing: StaticMixing { per_block },
            scope,
            shared_x,
        })
    }
}

pub(crate) fn power_block(inst_bs: usize, b: usize) -> BlockId {
    inst_bs + b
}

fn project_block<T: Scalar>(inst: &ProblemInstance<T>, block: BlockId, v: &mut [T]) {
    let nb = inst.num_bs();
    let kk = inst.channels();
    if block >= nb {
        project_power(v, inst.budget(block - nb));
        return;
    }
    let users = v.len() / kk;
    let mut col = vec![T::zero(); users];
    for k in 0..kk {
        for j in 0..users {
            col[j] = v[j * kk + k];
        }
        project_allocation(&mut col);
        for j in 0..users {
            v[j * kk + k] = col[j];
        }
    }
}

fn power_view<T: Scalar>(inst: &ProblemInstance<T>, b: usize, x: &BlockPoint<T>) -> PowerCopies<T> {
    let nb = inst.num_bs();
    inst.graph()
        .closed_neighborhood_indices(b)
        .into_iter()
        .map(|r| (r, x[&power_block(nb, r)].clone()))
        .collect()
}

fn zero_like<T: Scalar>(x: &BlockPoint<T>) -> BlockPoint<T> {
    x.iter().map(|(&m, v)| (m, vec![T::zero(); v.len()])).collect()
}

/// Local objective of BS `b` in the direct split.
#[derive(Debug, Clone)]
pub struct RmOracle<T> {
    inst: Arc<ProblemInstance<T>>,
    b: usize,
}

impl<T: Scalar> RmOracle<T> {
    pub fn new(inst: Arc<ProblemInstance<T>>, b: usize) -> Self {
        RmOracle { inst, b }
    }

    pub fn instance(&self) -> &ProblemInstance<T> {
        &self.inst
    }

    fn eval(&self, x: &BlockPoint<T>) -> (T, BlockPoint<T>) {
        let nb = self.inst.num_bs();
        let (v, g) = f_rm_value_and_grad(&self.inst, self.b, &power_view(&self.inst, self.b, x), &x[&self.b]);
        let mut out = zero_like(x);
        out.insert(self.b, g.x);
        for (r, row) in g.p {
            out.insert(power_block(nb, r), row);
        }
        (v, out)
    }
}

impl<T: Scalar> LocalObjective<T> for RmOracle<T> {
    fn value(&self, x: &BlockPoint<T>, _ctx: &EvalContext<T>) -> T {
        self.eval(x).0
    }

    fn gradient(&self, x: &BlockPoint<T>, _ctx: &EvalContext<T>) -> BlockPoint<T> {
        self.eval(x).1
    }

    fn project(&self, block: BlockId, v: &mut [T]) {
        project_block(&self.inst, block, v);
    }
}

/// Closed-form minimizer of the fully linearized direct-split surrogate.
pub fn surrogate_solve_rm<T: Scalar>(
    oracle: &RmOracle<T>,
    x: &BlockPoint<T>,
    pi: &BlockPoint<T>,
    grad: &BlockPoint<T>,
    tau: T,
) -> BlockPoint<T> {
    linearized_step(oracle, x, pi, grad, tau)
}

/// Local objective of BS `b` in the decomposed split; its surrogate keeps
/// the convex part `G` exactly.
#[derive(Debug, Clone)]
pub struct CmOracle<T> {
    inst: Arc<ProblemInstance<T>>,
    b: usize,
    /// Floor on the requested inner accuracy (an exact solve is not available).
    pub min_tol: T,
    pub max_inner_sweeps: usize,
    /// Drop `G` from the surrogate (used to cross-check the closed form).
    pub without_g: bool,
}

impl<T: Scalar> CmOracle<T> {
    pub fn new(inst: Arc<ProblemInstance<T>>, b: usize) -> Self {
        CmOracle {
            inst,
            b,
            min_tol: lit(1e-6),
            max_inner_sweeps: 5_000,
            without_g: false,
        }
    }

    pub fn instance(&self) -> &ProblemInstance<T> {
        &self.inst
    }

    fn eval(&self, x: &BlockPoint<T>) -> (T, BlockPoint<T>) {
        let nb = self.inst.num_bs();
        let (v, g) = f_cm_value_and_grad(&self.inst, self.b, &power_view(&self.inst, self.b, x), &x[&self.b]);
        let mut out = zero_like(x);
        out.insert(self.b, g.x);
        for (r, row) in g.p {
            out.insert(power_block(nb, r), row);
        }
        (v, out)
    }
}

impl<T: Scalar> LocalObjective<T> for CmOracle<T> {
    fn value(&self, x: &BlockPoint<T>, _ctx: &EvalContext<T>) -> T {
        self.eval(x).0
    }

    fn gradient(&self, x: &BlockPoint<T>, _ctx: &EvalContext<T>) -> BlockPoint<T> {
        self.eval(x).1
    }

    fn project(&self, block: BlockId, v: &mut [T]) {
        project_block(&self.inst, block, v);
    }

    fn surrogate_solve(
        &self,
        x: &BlockPoint<T>,
        pi: &BlockPoint<T>,
        grad: &BlockPoint<T>,
        tau: T,
        tol: T,
        _ctx: &EvalContext<T>,
    ) -> Result<BlockPoint<T>, OracleError> {
        if self.without_g {
            return Ok(linearized_step(self, x, pi, grad, tau));
        }
        let tol = tol.max(self.min_tol);
        surrogate_solve_cm(&self.inst, x, pi, grad, tau, tol, self.max_inner_sweeps).map(|s| s.point)
    }
}

/// Result of one decomposed-split local solve.
#[derive(Debug, Clone)]
pub struct CmSurrogate<T> {
    pub point: BlockPoint<T>,
    pub value: T,
    pub value_at_start: T,
    pub distance_bound: T,
    pub iterations: usize,
}

/// Minimizes `(∇f + π̃)ᵀ(v − x) + τ/2‖v − x‖² + G(v)` over the feasible set,
/// certified to `tol` in distance; `max_sweeps` caps the coordinate sweeps.
pub fn surrogate_solve_cm<T: Scalar>(
    inst: &ProblemInstance<T>,
    x: &BlockPoint<T>,
    pi: &BlockPoint<T>,
    grad: &BlockPoint<T>,
    tau: T,
    tol: T,
    max_sweeps: usize,
) -> Result<CmSurrogate<T>, OracleError> {
    let nb = inst.num_bs();
    if x.keys().copied().ne(0..2 * nb) {
        return Err(OracleError::new(None, "decomposed solve needs every block"));
    }
    let lin: BlockPoint<T> = x
        .keys()
        .map(|m| (*m, grad[m].iter().zip(&pi[m]).map(|(&g, &p)| g + p).collect()))
        .collect();
    let problem = CmProblem::new(inst, to_point(inst, x), to_point(inst, &lin), tau);
    match problem.solve(tol, max_sweeps) {
        Ok(sol) => Ok(CmSurrogate {
            point: from_point(inst, &sol.point),
            value: sol.value,
            value_at_start: sol.value_at_center,
            distance_bound: sol.distance_bound,
            iterations: sol.sweeps,
        }),
        Err((sweeps, bound)) => Err(OracleError::new(
            None,
            format!("inner solver stopped after {sweeps} sweeps with distance bound {bound} > {tol}"),
        )),
    }
}

pub(crate) fn to_point<T: Scalar>(inst: &ProblemInstance<T>, v: &BlockPoint<T>) -> CmPoint<T> {
    let nb = inst.num_bs();
    let kk = inst.channels();
    let mut x = vec![vec![T::zero(); kk]; inst.num_users()];
    for b in 0..nb {
        for (j, &i) in inst.users_of(b).iter().enumerate() {
            x[i].copy_from_slice(&v[&b][j * kk..(j + 1) * kk]);
        }
    }
    CmPoint {
        p: (0..nb).map(|b| v[&power_block(nb, b)].clone()).collect(),
        x,
    }
}

pub(crate) fn from_point<T: Scalar>(inst: &ProblemInstance<T>, v: &CmPoint<T>) -> BlockPoint<T> {
    let nb = inst.num_bs();
    let mut out = BlockPoint::new();
    for b in 0..nb {
        out.insert(b, inst.users_of(b).iter().flat_map(|&i| v.x[i].iter().copied()).collect());
    }
    for (b, row) in v.p.iter().enumerate() {
        out.insert(power_block(nb, b), row.clone());
    }
    out
}

/// The convex part `G` over a full copy (all `x_b` and power blocks).
#[derive(Debug, Clone)]
pub struct CmConvexPart<'a, T> {
    inst: &'a ProblemInstance<T>,
}

impl<'a, T: Scalar> CmConvexPart<'a, T> {
    pub fn new(inst: &'a ProblemInstance<T>) -> Self {
        CmConvexPart { inst }
    }

    pub fn value_flat(&self, v: &BlockPoint<T>) -> T {
        let pt = to_point(self.inst, v);
        g_cm_value_and_grad(self.inst, &pt.p, &pt.x).0
    }

    pub fn gradient_flat(&self, v: &BlockPoint<T>) -> BlockPoint<T> {
        let pt = to_point(self.inst, v);
        let (_, p, x) = g_cm_value_and_grad(self.inst, &pt.p, &pt.x);
        from_point(self.inst, &CmPoint { p, x })
    }
}

/// Owned variant handed to the engine for objective and stationarity reporting.
#[derive(Debug, Clone)]
pub struct OwnedConvexPart<T>(pub Arc<ProblemInstance<T>>);

impl<T: Scalar> ConvexPart<T> for OwnedConvexPart<T> {
    fn value(&self, x: &BlockPoint<T>) -> T {
        CmConvexPart::new(&self.0).value_flat(x)
    }

    fn subgradient(&self, x: &BlockPoint<T>) -> BlockPoint<T> {
        CmConvexPart::new(&self.0).gradient_flat(x)
    }
}
