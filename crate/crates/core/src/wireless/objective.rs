//! Per-BS objective pieces of the direct (RM) and decomposed (CM) splits.
//!
//! `x_b` is stored user-major over the users of `b`: entry `j·K + k` is the
//! share of channel `k` given to the `j`-th user of `b`.

use std::collections::BTreeMap;

use super::{Allocation, ProblemInstance};
use crate::scalar::{lit, Scalar};

/// Below this the `x·log(σ² + S/x)` terms are treated as `x = 0`.
pub const X_FLOOR: f64 = 1e-8;

/// Power rows known at a BS, keyed by subject BS.
pub type PowerCopies<T> = BTreeMap<usize, Vec<T>>;

/// Gradient of a per-BS term: the `x_b` part and the power rows it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct BsGradient<T> {
    pub x: Vec<T>,
    pub p: PowerCopies<T>,
}

fn row<T: Scalar>(p: &PowerCopies<T>, b: usize) -> &[T] {
    p.get(&b)
        .unwrap_or_else(|| panic!("power copy of base station {b} missing"))
}

/// `σ² + Σ_{b'∈N(b)} p_{b'k} g_{b'ik}` for the user `i` of `b`.
fn interference<T: Scalar>(inst: &ProblemInstance<T>, b: usize, i: usize, k: usize, p: &PowerCopies<T>) -> T {
    let mut acc = inst.noise();
    for &nb in inst.graph().neighbors_of(b) {
        acc += row(p, nb)[k] * inst.gain(nb, i, k);
    }
    acc
}

fn zero_rows<T: Scalar>(inst: &ProblemInstance<T>, b: usize) -> PowerCopies<T> {
    inst.graph()
        .closed_neighborhood_indices(b)
        .into_iter()
        .map(|nb| (nb, vec![T::zero(); inst.channels()]))
        .collect()
}

/// `w_i · x · log(1 + SINR_{bik})`, natural log.
pub fn rate_term<T: Scalar>(
    inst: &ProblemInstance<T>,
    b: usize,
    i: usize,
    k: usize,
    p: &PowerCopies<T>,
    x: T,
) -> T {
    let den = interference(inst, b, i, k, p);
    let s = row(p, b)[k] * inst.gain(b, i, k);
    inst.users()[i].weight * x * (s / den).ln_1p()
}

/// Negated utility of `b` in the direct split, with partials in `x_b` and
/// in every power row of `Nb(b)`.
pub fn f_rm_value_and_grad<T: Scalar>(
    inst: &ProblemInstance<T>,
    b: usize,
    p: &PowerCopies<T>,
    x_b: &[T],
) -> (T, BsGradient<T>) {
    let kk = inst.channels();
    let mut value = T::zero();
    let mut gx = vec![T::zero(); x_b.len()];
    let mut gp = zero_rows(inst, b);
    for (j, &i) in inst.users_of(b).iter().enumerate() {
        let w = inst.users()[i].weight;
        for k in 0..kk {
            let x = x_b[j * kk + k];
            let den = interference(inst, b, i, k, p);
            let s = row(p, b)[k] * inst.gain(b, i, k);
            let rate = (s / den).ln_1p();
            value -= w * x * rate;
            gx[j * kk + k] = -w * rate;
            let total = den + s;
            gp.get_mut(&b).expect("own row")[k] -= w * x * inst.gain(b, i, k) / total;
            for &nb in inst.graph().neighbors_of(b) {
                gp.get_mut(&nb).expect("neighbor row")[k] += w * x * inst.gain(nb, i, k) * s / (total * den);
            }
        }
    }
    (value, BsGradient { x: gx, p: gp })
}

/// `Σ w_i x_{bik} log(σ² + interference)`: the smooth nonconvex part of `b`
/// in the decomposed split. Independent of `b`'s own power.
pub fn f_cm_value_and_grad<T: Scalar>(
    inst: &ProblemInstance<T>,
    b: usize,
    p: &PowerCopies<T>,
    x_b: &[T],
) -> (T, BsGradient<T>) {
    let kk = inst.channels();
    let mut value = T::zero();
    let mut gx = vec![T::zero(); x_b.len()];
    let mut gp = zero_rows(inst, b);
    for (j, &i) in inst.users_of(b).iter().enumerate() {
        let w = inst.users()[i].weight;
        for k in 0..kk {
            let x = x_b[j * kk + k];
            let den = interference(inst, b, i, k, p);
            let l = den.ln();
            value += w * x * l;
            gx[j * kk + k] = w * l;
            for &nb in inst.graph().neighbors_of(b) {
                gp.get_mut(&nb).expect("neighbor row")[k] += w * x * inst.gain(nb, i, k) / den;
            }
        }
    }
    (value, BsGradient { x: gx, p: gp })
}

/// The convex part `G = −Σ w x log(σ² + S/x)` over the whole network, where
/// `S` is signal plus neighbor interference. `x` holds one row per user.
///
/// The value uses `x log(σ² + S/x) → 0` at `x = 0`; the `x`-partial is taken
/// at `max(x, X_FLOOR)`, which keeps it finite.
pub fn g_cm_value_and_grad<T: Scalar>(
    inst: &ProblemInstance<T>,
    p: &[Vec<T>],
    x: &[Vec<T>],
) -> (T, Vec<Vec<T>>, Vec<Vec<T>>) {
    let kk = inst.channels();
    let floor: T = lit(X_FLOOR);
    let s2 = inst.noise();
    let mut value = T::zero();
    let mut gp = vec![vec![T::zero(); kk]; inst.num_bs()];
    let mut gx = vec![vec![T::zero(); kk]; inst.num_users()];
    for (i, user) in inst.users().iter().enumerate() {
        let b = user.serving;
        let w = user.weight;
        for k in 0..kk {
            let mut s = p[b][k] * inst.gain(b, i, k);
            for &nb in inst.graph().neighbors_of(b) {
                s += p[nb][k] * inst.gain(nb, i, k);
            }
            let xi = x[i][k];
            if xi > T::zero() {
                value -= w * xi * (s2 + s / xi).ln();
            }
            let xf = xi.max(floor);
            gx[i][k] = -w * ((s2 + s / xf).ln() - s / (s2 * xf + s));
            let denom = s2 * xi + s;
            if denom > T::zero() && xi > T::zero() {
                let c = w * xi / denom;
                gp[b][k] -= c * inst.gain(b, i, k);
                for &nb in inst.graph().neighbors_of(b) {
                    gp[nb][k] -= c * inst.gain(nb, i, k);
                }
            }
        }
    }
    (value, gp, gx)
}

/// Weighted sum rate of a consensus allocation (the maximized utility).
pub fn weighted_sum_rate<T: Scalar>(inst: &ProblemInstance<T>, a: &Allocation<T>) -> T {
    user_rates(inst, a)
        .iter()
        .zip(inst.users())
        .map(|(&r, u)| u.weight * r)
        .sum()
}

/// Unweighted rate `Σ_k x_{ik} log(1 + SINR_{ik})` of every user.
pub fn user_rates<T: Scalar>(inst: &ProblemInstance<T>, a: &Allocation<T>) -> Vec<T> {
    let kk = inst.channels();
    inst.users()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let b = u.serving;
            (0..kk)
                .map(|k| {
                    let mut den = inst.noise();
                    for &nb in inst.graph().neighbors_of(b) {
                        den += a.power[nb][k] * inst.gain(nb, i, k);
                    }
                    a.assign[i][k] * (a.power[b][k] * inst.gain(b, i, k) / den).ln_1p()
                })
                .sum()
        })
        .collect()
}

/// Objective of the copy-consensus problem with BS `b` reading copies `p[b]`.
pub fn p2_objective<T: Scalar>(inst: &ProblemInstance<T>, p: &[PowerCopies<T>], x: &[Vec<T>]) -> T {
    (0..inst.num_bs())
        .map(|b| -f_rm_value_and_grad(inst, b, &p[b], &bs_slice(inst, b, x)).0)
        .sum()
}

/// The split form: concave perspective term minus interference log.
pub fn p3_objective<T: Scalar>(inst: &ProblemInstance<T>, p: &[PowerCopies<T>], x: &[Vec<T>]) -> T {
    let s2 = inst.noise();
    let mut total = T::zero();
    for b in 0..inst.num_bs() {
        let pb = &p[b];
        for &i in inst.users_of(b) {
            let w = inst.users()[i].weight;
            for k in 0..inst.channels() {
                let xi = x[i][k];
                if xi <= T::zero() {
                    continue;
                }
                let den = interference(inst, b, i, k, pb);
                let s = row(pb, b)[k] * inst.gain(b, i, k) + den - s2;
                total += w * (xi * (s2 + s / xi).ln() - xi * den.ln());
            }
        }
    }
    total
}

/// `x_b` (user-major) gathered from per-user rows.
pub(crate) fn bs_slice<T: Scalar>(inst: &ProblemInstance<T>, b: usize, x: &[Vec<T>]) -> Vec<T> {
    inst.users_of(b).iter().flat_map(|&i| x[i].iter().copied()).collect()
}
