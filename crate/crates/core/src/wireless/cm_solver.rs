//! Exact block-coordinate solver for the decomposed-split surrogate
//!
//! `φ(v) = cᵀ(v − v̄) + τ/2‖v − v̄‖² + G(v)` over the product of per-channel
//! allocation sets and per-BS power budgets.
//!
//! For fixed powers the problem separates over (BS, channel) allocation
//! columns, and for fixed allocations and other rows it separates over the
//! channels of one power row; each piece is a one-dimensional monotone
//! root search under a single multiplier. Sweeps stop once the
//! Frank-Wolfe gap certifies `‖v − v*‖ ≤ sqrt(2·gap/τ) ≤ tol`.

use super::ProblemInstance;
use crate::scalar::{lit, Scalar};

/// Root of a nondecreasing `f` on `[lo, hi]` by Newton steps guarded by
/// bisection. Returns `lo`/`hi` when the sign does not change.
fn increasing_root<T: Scalar>(f: impl Fn(T) -> (T, T), mut lo: T, mut hi: T) -> T {
    let (flo, _) = f(lo);
    if flo >= T::zero() {
        return lo;
    }
    let (fhi, _) = f(hi);
    if fhi <= T::zero() {
        return hi;
    }
    let mut u = (lo + hi) * lit(0.5);
    for _ in 0..200 {
        let (v, d) = f(u);
        if v == T::zero() {
            return u;
        }
        if v < T::zero() {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = if d > T::zero() { u - v / d } else { lo - T::one() };
        if !(next > lo && next < hi) {
            next = (lo + hi) * lit(0.5);
        }
        if (next - u).abs() <= lit::<T>(4.0) * T::epsilon() * u.abs().max(T::one()) || hi - lo <= T::epsilon() * hi.abs().max(T::one()) {
            return next;
        }
        u = next;
    }
    u
}

/// Largest multiplier `m ≥ 0` with `total(m) ≥ cap` where `total` is
/// nonincreasing, or 0 when `total(0) ≤ cap`.
fn budget_multiplier<T: Scalar>(total: impl Fn(T) -> T, cap: T) -> T {
    if total(T::zero()) <= cap {
        return T::zero();
    }
    let mut hi = T::one();
    while total(hi) > cap {
        hi *= lit(4.0);
        if !hi.is_finite() {
            return hi;
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = if lo == T::zero() { hi * lit(0.5) } else { (lo + hi) * lit(0.5) };
        if total(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= lit::<T>(1e-15) * hi {
            break;
        }
    }
    hi
}

/// Point of the decomposed-split variables: power rows and per-user shares.
#[derive(Debug, Clone, PartialEq)]
pub struct CmPoint<T> {
    pub p: Vec<Vec<T>>,
    pub x: Vec<Vec<T>>,
}

pub struct CmProblem<'a, T> {
    inst: &'a ProblemInstance<T>,
    center: CmPoint<T>,
    lin: CmPoint<T>,
    tau: T,
    /// Users whose term involves the power of BS `b` (served by `Nb(b)`).
    affected: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct CmSolution<T> {
    pub point: CmPoint<T>,
    pub value: T,
    pub value_at_center: T,
    pub distance_bound: T,
    pub sweeps: usize,
}

impl<'a, T: Scalar> CmProblem<'a, T> {
    pub fn new(inst: &'a ProblemInstance<T>, center: CmPoint<T>, lin: CmPoint<T>, tau: T) -> Self {
        let affected = (0..inst.num_bs())
            .map(|b| {
                (0..inst.num_users())
                    .filter(|&i| inst.users()[i].gains.contains_key(&b))
                    .collect()
            })
            .collect();
        CmProblem {
            inst,
            center,
            lin,
            tau,
            affected,
        }
    }

    fn received(&self, p: &[Vec<T>], i: usize, k: usize) -> T {
        self.inst.users()[i]
            .gains
            .iter()
            .map(|(&tx, g)| p[tx][k] * g[k])
            .sum()
    }

    pub fn value(&self, v: &CmPoint<T>) -> T {
        let half: T = lit(0.5);
        let s2 = self.inst.noise();
        let mut acc = T::zero();
        let quad = |a: &[Vec<T>], c: &[Vec<T>], l: &[Vec<T>]| -> T {
            let mut s = T::zero();
            for ((ra, rc), rl) in a.iter().zip(c).zip(l) {
                for k in 0..ra.len() {
                    let d = ra[k] - rc[k];
                    s += rl[k] * d + half * self.tau * d * d;
                }
            }
            s
        };
        acc += quad(&v.p, &self.center.p, &self.lin.p);
        acc += quad(&v.x, &self.center.x, &self.lin.x);
        for (i, u) in self.inst.users().iter().enumerate() {
            for k in 0..self.inst.channels() {
                let xi = v.x[i][k];
                if xi > T::zero() {
                    acc -= u.weight * xi * (s2 + self.received(&v.p, i, k) / xi).ln();
                }
            }
        }
        acc
    }

    /// Gradient; the `x`-partial of a zero share is its limit `−∞` clipped
    /// at the floor used elsewhere.
    pub fn gradient(&self, v: &CmPoint<T>) -> CmPoint<T> {
        let s2 = self.inst.noise();
        let floor: T = lit(super::X_FLOOR);
        let mut g = CmPoint {
            p: v.p
                .iter()
                .zip(&self.center.p)
                .zip(&self.lin.p)
                .map(|((a, c), l)| (0..a.len()).map(|k| l[k] + self.tau * (a[k] - c[k])).collect())
                .collect(),
            x: v.x
                .iter()
                .zip(&self.center.x)
                .zip(&self.lin.x)
                .map(|((a, c), l)| (0..a.len()).map(|k| l[k] + self.tau * (a[k] - c[k])).collect())
                .collect(),
        };
        for (i, u) in self.inst.users().iter().enumerate() {
            for k in 0..self.inst.channels() {
                let xi = v.x[i][k];
                let s = self.received(&v.p, i, k);
                let xf = xi.max(floor);
                g.x[i][k] -= u.weight * ((s2 + s / xf).ln() - s / (s2 * xf + s));
                if xi > T::zero() {
                    let c = u.weight * xi / (s2 * xi + s);
                    for (&tx, gains) in &u.gains {
                        g.p[tx][k] -= c * gains[k];
                    }
                }
            }
        }
        g
    }

    /// `max_{w ∈ K} ⟨∇φ(v), v − w⟩ ≥ φ(v) − φ*`.
    pub fn frank_wolfe_gap(&self, v: &CmPoint<T>) -> T {
        let g = self.gradient(v);
        let mut gap = T::zero();
        let kk = self.inst.channels();
        for b in 0..self.inst.num_bs() {
            let row = &g.p[b];
            let dot: T = row.iter().zip(&v.p[b]).map(|(&a, &c)| a * c).sum();
            let best = row.iter().copied().fold(T::zero(), T::min) * self.inst.budget(b);
            gap += dot - best;
            for k in 0..kk {
                let users = self.inst.users_of(b);
                let dot: T = users.iter().map(|&i| g.x[i][k] * v.x[i][k]).sum();
                let best = users.iter().map(|&i| g.x[i][k]).fold(T::zero(), T::min);
                gap += dot - best;
            }
        }
        gap.max(T::zero())
    }

    /// Exact minimization over the shares of one (BS, channel) column.
    fn solve_column(&self, v: &mut CmPoint<T>, b: usize, k: usize) {
        let s2 = self.inst.noise();
        let users = self.inst.users_of(b);
        let data: Vec<(T, T, T, T)> = users
            .iter()
            .map(|&i| {
                (
                    self.inst.users()[i].weight,
                    self.received(&v.p, i, k),
                    self.lin.x[i][k] - self.tau * self.center.x[i][k],
                    T::zero(),
                )
            })
            .collect();
        let tau = self.tau;
        // share of one user at multiplier ν: root of the increasing partial
        let share = |j: usize, nu: T| -> T {
            let (w, s, c, _) = data[j];
            if s <= T::zero() {
                // linear in x apart from the proximal term
                let slope = c - w * s2.ln() + nu;
                return (-slope / tau).max(T::zero()).min(T::one());
            }
            let f = |u: T| -> (T, T) {
                let x = u.exp();
                let val = c + tau * x - w * ((s2 + s / x).ln() - s / (s2 * x + s)) + nu;
                let den = s2 * x + s;
                (val, w * s * s / (den * den) + tau * x)
            };
            let lo: T = lit(-700.0);
            let u = increasing_root(f, lo, T::zero());
            if u <= lo {
                T::zero()
            } else {
                u.exp()
            }
        };
        let total = |nu: T| (0..users.len()).map(|j| share(j, nu)).sum::<T>();
        let nu = budget_multiplier(total, T::one());
        let mut col: Vec<T> = (0..users.len()).map(|j| share(j, nu)).collect();
        let sum: T = col.iter().copied().sum();
        if sum > T::one() {
            col.iter_mut().for_each(|x| *x /= sum);
        }
        for (j, &i) in users.iter().enumerate() {
            v.x[i][k] = col[j];
        }
    }

    /// Exact minimization over the power row of BS `b`.
    fn solve_row(&self, v: &mut CmPoint<T>, b: usize) {
        let s2 = self.inst.noise();
        let kk = self.inst.channels();
        // per channel: (a, center, [(w·x, σ²x + rest, g)])
        let mut terms: Vec<Vec<(T, T, T)>> = vec![Vec::new(); kk];
        for &i in &self.affected[b] {
            let u = &self.inst.users()[i];
            let gains = &u.gains[&b];
            for k in 0..kk {
                let xi = v.x[i][k];
                if xi > T::zero() && gains[k] > T::zero() {
                    let rest = self.received(&v.p, i, k) - v.p[b][k] * gains[k];
                    terms[k].push((u.weight * xi, s2 * xi + rest.max(T::zero()), gains[k]));
                }
            }
        }
        let tau = self.tau;
        let budget = self.inst.budget(b);
        let level = |k: usize, lam: T| -> T {
            let a = self.lin.p[b][k] + lam;
            let c = self.center.p[b][k];
            let f = |p: T| -> (T, T) {
                let mut val = a + tau * (p - c);
                let mut d = tau;
                for &(wx, base, g) in &terms[k] {
                    let den = base + g * p;
                    val -= wx * g / den;
                    d += wx * g * g / (den * den);
                }
                (val, d)
            };
            // f is increasing; at p = c + (Σ wx g/base − a)/τ it is nonnegative
            let mut push = T::zero();
            for &(wx, base, g) in &terms[k] {
                push += wx * g / base;
            }
            let hi = (c + (push - a) / tau).max(T::zero()) + T::one();
            increasing_root(f, T::zero(), hi)
        };
        let total = |lam: T| (0..kk).map(|k| level(k, lam)).sum::<T>();
        let lam = budget_multiplier(total, budget);
        let mut row: Vec<T> = (0..kk).map(|k| level(k, lam)).collect();
        let sum: T = row.iter().copied().sum();
        if sum > budget {
            row.iter_mut().for_each(|p| *p = *p * budget / sum);
        }
        v.p[b] = row;
    }

    fn sweep(&self, v: &mut CmPoint<T>) {
        for b in 0..self.inst.num_bs() {
            for k in 0..self.inst.channels() {
                self.solve_column(v, b, k);
            }
        }
        for b in 0..self.inst.num_bs() {
            self.solve_row(v, b);
        }
    }

    /// Sweeps from the center until the certified distance is within `tol`.
    pub fn solve(&self, tol: T, max_sweeps: usize) -> Result<CmSolution<T>, (usize, T)> {
        let two: T = lit(2.0);
        let mut v = self.center.clone();
        let value_at_center = self.value(&v);
        let mut bound = T::infinity();
        for sweep in 1..=max_sweeps {
            self.sweep(&mut v);
            bound = (two * self.frank_wolfe_gap(&v) / self.tau).sqrt();
            if bound <= tol {
                return Ok(CmSolution {
                    value: self.value(&v),
                    point: v,
                    value_at_center,
                    distance_bound: bound,
                    sweeps: sweep,
                });
            }
        }
        Err((max_sweeps, bound))
    }
}
