//! Accelerated projected gradient for small strongly convex problems, with
//! a certified stopping rule.
//!
//! From any point `y` with `x⁺ = Proj(y − η∇φ(y))`, the vector
//! `∇φ(x⁺) − ∇φ(y) + (y − x⁺)/η` lies in `∂(φ + ι_K)(x⁺)`, so μ-strong
//! convexity bounds `‖x⁺ − x*‖` by its norm over μ.

use crate::scalar::{dist, lit, norm, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct PgdOptions<T> {
    /// Required bound on the distance to the minimizer.
    pub tol: T,
    /// Known strong-convexity modulus μ > 0.
    pub strong_convexity: T,
    pub max_iters: usize,
    pub initial_step: T,
}

#[derive(Debug, Clone)]
pub struct PgdOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    /// Certified upper bound on `‖x − x*‖`.
    pub distance_bound: T,
    pub converged: bool,
}

/// Minimizes `φ` over the set described by `project`, starting at `x0`.
pub fn minimize<T, V, G, P>(x0: &[T], value: V, grad: G, project: P, opts: &PgdOptions<T>) -> PgdOutcome<T>
where
    T: Scalar,
    V: Fn(&[T]) -> T,
    G: Fn(&[T]) -> Vec<T>,
    P: Fn(&mut [T]),
{
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = value(&x);
    let mut y = x.clone();
    let mut t = T::one();
    let mut step = opts.initial_step;
    let mut best = (x.clone(), fx, T::infinity());
    let half: T = lit(0.5);
    let mut iterations = 0;

    for it in 0..opts.max_iters {
        iterations = it + 1;
        let fy = value(&y);
        let gy = grad(&y);
        // backtracking on the quadratic upper model at y
        let (z, fz) = loop {
            let mut z: Vec<T> = y.iter().zip(&gy).map(|(&a, &g)| a - step * g).collect();
            project(&mut z);
            let fz = value(&z);
            let d2: T = z.iter().zip(&y).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let lin: T = z.iter().zip(&y).zip(&gy).map(|((&a, &b), &g)| g * (a - b)).sum();
            if fz.is_finite() && fz <= fy + lin + d2 / (lit::<T>(2.0) * step) + T::epsilon() * fy.abs() {
                break (z, fz);
            }
            step *= half;
            if step < T::min_positive_value() {
                break (z, fz);
            }
        };
        let gz = grad(&z);
        let residual: Vec<T> = (0..z.len())
            .map(|k| gz[k] - gy[k] + (y[k] - z[k]) / step)
            .collect();
        let bound = norm(&residual) / opts.strong_convexity;
        if fz <= best.1 {
            best = (z.clone(), fz, bound);
        }
        if bound <= opts.tol {
            return PgdOutcome {
                x: z,
                value: fz,
                iterations: it + 1,
                distance_bound: bound,
                converged: true,
            };
        }
        // monotone restart
        if fz > fx {
            t = T::one();
            y = x.clone();
            continue;
        }
        let t_next = (T::one() + (T::one() + lit::<T>(4.0) * t * t).sqrt()) * half;
        let beta = (t - T::one()) / t_next;
        y = (0..z.len()).map(|k| z[k] + beta * (z[k] - x[k])).collect();
        project(&mut y);
        if dist(&z, &x) == T::zero() {
            // stalled at machine precision
            break;
        }
        x = z;
        fx = fz;
        t = t_next;
        // L ≥ μ, so a step beyond 1/μ is never useful
        step = (step * lit(1.25)).min(opts.strong_convexity.recip());
    }
    PgdOutcome {
        x: best.0,
        value: best.1,
        iterations,
        distance_bound: best.2,
        converged: false,
    }
}
