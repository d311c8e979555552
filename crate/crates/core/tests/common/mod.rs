#![allow(dead_code)]

use std::collections::BTreeMap;

use netsca::algorithms::{single_cell_objective, SingleCell};
use netsca::graph::InterferenceGraph;
use netsca::sca::{BlockId, BlockPoint, EvalContext, LocalObjective, OracleError};
use netsca::wireless::{sample_instance, InstanceParams, PowerCopies, ProblemInstance, User};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn table1(seed: u64) -> ProblemInstance<f64> {
    let g = InterferenceGraph::ring(4).unwrap();
    sample_instance(&g, &InstanceParams::table1(), &mut rng(seed)).unwrap()
}

pub fn sampled(graph: InterferenceGraph, users_per_bs: usize, channels: usize, seed: u64) -> ProblemInstance<f64> {
    let params = InstanceParams {
        users_per_bs,
        channels,
        ..InstanceParams::table1()
    };
    sample_instance(&graph, &params, &mut rng(seed)).unwrap()
}

/// One BS, one user, one channel with gain `g`.
pub fn single_link(g: f64, noise: f64, budget: f64) -> ProblemInstance<f64> {
    let graph = InterferenceGraph::new(&[0], &[]).unwrap();
    let user = User {
        serving: 0,
        weight: 1.0,
        gains: BTreeMap::from([(0, vec![g])]),
    };
    ProblemInstance::new(graph, 1, noise, vec![budget], vec![user]).unwrap()
}

/// Every BS's view of the same global power rows.
pub fn copies_of(inst: &ProblemInstance<f64>, p: &[Vec<f64>]) -> Vec<PowerCopies<f64>> {
    (0..inst.num_bs())
        .map(|b| {
            inst.graph()
                .closed_neighborhood_indices(b)
                .into_iter()
                .map(|t| (t, p[t].clone()))
                .collect()
        })
        .collect()
}

/// Random feasible power rows, using `fill` of each budget.
pub fn random_power<R: Rng>(inst: &ProblemInstance<f64>, rng: &mut R) -> Vec<Vec<f64>> {
    (0..inst.num_bs())
        .map(|b| {
            let raw: Vec<f64> = (0..inst.channels()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum::<f64>() + rng.gen_range(0.0..0.5);
            raw.iter().map(|v| v / s * inst.budget(b)).collect()
        })
        .collect()
}

/// Random feasible fractional assignment.
pub fn random_share<R: Rng>(inst: &ProblemInstance<f64>, rng: &mut R) -> Vec<Vec<f64>> {
    let kk = inst.channels();
    let mut x = vec![vec![0.0; kk]; inst.num_users()];
    for b in 0..inst.num_bs() {
        let users = inst.users_of(b);
        for k in 0..kk {
            let raw: Vec<f64> = users.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum::<f64>() + rng.gen_range(0.0..0.3);
            for (&i, r) in users.iter().zip(&raw) {
                x[i][k] = r / s;
            }
        }
    }
    x
}

/// Random integral assignment: each (BS, channel) goes to one user or idles.
pub fn random_integral<R: Rng>(inst: &ProblemInstance<f64>, rng: &mut R) -> Vec<Vec<f64>> {
    let kk = inst.channels();
    let mut x = vec![vec![0.0; kk]; inst.num_users()];
    for b in 0..inst.num_bs() {
        let users = inst.users_of(b);
        for k in 0..kk {
            let pick = rng.gen_range(0..=users.len());
            if pick < users.len() {
                x[users[pick]][k] = 1.0;
            }
        }
    }
    x
}

/// Per-user slice of BS `b` in user-major order.
pub fn bs_slice(inst: &ProblemInstance<f64>, b: usize, x: &[Vec<f64>]) -> Vec<f64> {
    inst.users_of(b).iter().flat_map(|&i| x[i].iter().copied()).collect()
}

/// `f_i(x) = ½ a_i ‖x − c_i‖²` over the box `[−10, 10]^d`, with the exact
/// best-response surrogate.
#[derive(Clone)]
pub struct Quadratic {
    pub a: f64,
    pub c: Vec<f64>,
}

impl LocalObjective<f64> for Quadratic {
    fn value(&self, x: &BlockPoint<f64>, _: &EvalContext<f64>) -> f64 {
        x.values()
            .map(|v| 0.5 * self.a * v.iter().zip(&self.c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum()
    }

    fn gradient(&self, x: &BlockPoint<f64>, _: &EvalContext<f64>) -> BlockPoint<f64> {
        x.iter()
            .map(|(&m, v)| (m, v.iter().zip(&self.c).map(|(a, b)| self.a * (a - b)).collect()))
            .collect()
    }

    fn project(&self, _: BlockId, v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = x.clamp(-10.0, 10.0));
    }

    fn surrogate_solve(
        &self,
        x: &BlockPoint<f64>,
        pi: &BlockPoint<f64>,
        _grad: &BlockPoint<f64>,
        tau: f64,
        _tol: f64,
        _: &EvalContext<f64>,
    ) -> Result<BlockPoint<f64>, OracleError> {
        Ok(x.iter()
            .map(|(&m, v)| {
                let out = (0..v.len())
                    .map(|k| ((self.a * self.c[k] + tau * v[k] - pi[&m][k]) / (self.a + tau)).clamp(-10.0, 10.0))
                    .collect();
                (m, out)
            })
            .collect())
    }
}

pub fn agents() -> Vec<Quadratic> {
    vec![
        Quadratic { a: 1.0, c: vec![1.0, -2.0] },
        Quadratic { a: 2.0, c: vec![3.0, 0.5] },
        Quadratic { a: 0.5, c: vec![-4.0, 1.0] },
        Quadratic { a: 3.0, c: vec![0.0, 2.0] },
    ]
}

/// Best objective over `p_1 ∈ [0, P]` (budget binding) and the first
/// user's share of each channel (channels fully used), refined around the
/// best grid cell.
pub fn grid_best(c: &SingleCell<f64>) -> f64 {
    let budget = c.budget;
    let eval = |v: [f64; 3]| {
        let p = [v[0], budget - v[0]];
        let x = vec![vec![v[1], v[2]], vec![1.0 - v[1], 1.0 - v[2]]];
        single_cell_objective(c, &p, &x)
    };
    let mut lo = [0.0, 0.0, 0.0];
    let mut hi = [budget, 1.0, 1.0];
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for _ in 0..6 {
        let n = 24;
        for a in 0..=n {
            for b in 0..=n {
                for d in 0..=n {
                    let t = [a, b, d].map(|i| i as f64 / n as f64);
                    let v = [0, 1, 2].map(|j| lo[j] + (hi[j] - lo[j]) * t[j]);
                    let f = eval(v);
                    if f > best.0 {
                        best = (f, v);
                    }
                }
            }
        }
        for j in 0..3 {
            let w = (hi[j] - lo[j]) / 8.0;
            let top = if j == 0 { budget } else { 1.0 };
            lo[j] = (best.1[j] - w).max(0.0);
            hi[j] = (best.1[j] + w).min(top);
        }
    }
    best.0
}

/// The decomposed surrogate of one link in `(p, x)`, written out by hand.
pub fn link_surrogate(g: f64, s2: f64, center: (f64, f64), lin: (f64, f64), tau: f64) -> impl Fn(f64, f64) -> f64 {
    move |p: f64, x: f64| {
        let gval = if x > 0.0 { -x * (s2 + p * g / x).ln() } else { 0.0 };
        lin.0 * (p - center.0)
            + lin.1 * (x - center.1)
            + 0.5 * tau * ((p - center.0).powi(2) + (x - center.1).powi(2))
            + gval
    }
}

/// Grid search over `[0, P] × [0, 1]`, refined around the best cell.
pub fn grid_minimize(f: impl Fn(f64, f64) -> f64, budget: f64) -> (f64, f64) {
    let (mut lo, mut hi) = ((0.0, 0.0), (budget, 1.0));
    let mut best = (0.0, 0.0);
    for _ in 0..12 {
        let n = 60;
        let mut bv = f64::INFINITY;
        for a in 0..=n {
            for c in 0..=n {
                let p = lo.0 + (hi.0 - lo.0) * a as f64 / n as f64;
                let x = lo.1 + (hi.1 - lo.1) * c as f64 / n as f64;
                let v = f(p, x);
                if v < bv {
                    bv = v;
                    best = (p, x);
                }
            }
        }
        let (wp, wx) = ((hi.0 - lo.0) / 10.0, (hi.1 - lo.1) / 10.0);
        lo = ((best.0 - wp).max(0.0), (best.1 - wx).max(0.0));
        hi = ((best.0 + wp).min(budget), (best.1 + wx).min(1.0));
    }
    best
}
