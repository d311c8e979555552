//! Lasry-Lions double envelope
//!
//! `f_{t,s}(x) = sup_z inf_y { f(y) + ‖z − y‖²/(2t) − ‖x − z‖²/(2s) }`, `0 < s < t`,
//! evaluated numerically on a working box. Its gradient is `(z*(x) − x)/s`
//! with `z*` the outer maximizer, and is Lipschitz with constant
//! `max{1/s, 1/(t − s)}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sca::{BlockId, BlockPoint, EvalContext, LocalObjective};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum EnvelopeError {
    #[error("Lipschitz level must be positive, got {0}")]
    NonPositiveLipschitz(f64),
    #[error("need 0 < s < t, got t = {t}, s = {s}")]
    Params { t: f64, s: f64 },
    #[error("working box must be nonempty with dimension 1..=3, got {0} coordinates")]
    Box(usize),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams<T> {
    pub t: T,
    pub s: T,
}

impl<T: Scalar> EnvelopeParams<T> {
    pub fn new(t: T, s: T) -> Result<Self, EnvelopeError> {
        if !(s > T::zero() && s < t && t.is_finite()) {
            return Err(EnvelopeError::Params {
                t: t.to_f64().unwrap_or(f64::NAN),
                s: s.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(EnvelopeParams { t, s })
    }

    /// `t = 2/L`, `s = 1/L`: the penalties become `L/4` and `L/2`.
    pub fn from_lipschitz(l: T) -> Result<Self, EnvelopeError> {
        if !(l > T::zero()) || !l.is_finite() {
            return Err(EnvelopeError::NonPositiveLipschitz(l.to_f64().unwrap_or(f64::NAN)));
        }
        Self::new(lit::<T>(2.0) / l, T::one() / l)
    }

    /// `max{1/s, 1/(t − s)}`.
    pub fn gradient_lipschitz(&self) -> T {
        (T::one() / self.s).max(T::one() / (self.t - self.s))
    }
}

/// Box `[lo_j, hi_j]` in one to three dimensions, and solver accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingBox<T> {
    pub bounds: Vec<(T, T)>,
    pub tol: T,
}

impl<T: Scalar> WorkingBox<T> {
    pub fn cube(dim: usize, lo: T, hi: T) -> Self {
        WorkingBox {
            bounds: vec![(lo, hi); dim],
            tol: lit(1e-8),
        }
    }

    fn check(&self) -> Result<(), EnvelopeError> {
        if self.bounds.is_empty() || self.bounds.len() > 3 || self.bounds.iter().any(|&(a, b)| !(a < b)) {
            return Err(EnvelopeError::Box(self.bounds.len()));
        }
        Ok(())
    }

    fn clamp(&self, v: &mut [T]) {
        for (x, &(a, b)) in v.iter_mut().zip(&self.bounds) {
            *x = x.max(a).min(b);
        }
    }
}

const GRID: usize = 200;

/// Minimizes `phi` over the box: grid scan plus golden section in 1-D,
/// projected gradient with central differences otherwise.
fn box_minimize<T: Scalar>(phi: &dyn Fn(&[T]) -> T, bx: &WorkingBox<T>) -> Result<(Vec<T>, T), EnvelopeError> {
    if bx.bounds.len() == 1 {
        return Ok(golden_1d(&|v: T| phi(&[v]), bx.bounds[0], bx.tol)).map(|(x, v)| (vec![x], v));
    }
    projected_gradient(phi, bx)
}

fn golden_1d<T: Scalar>(phi: &dyn Fn(T) -> T, (lo, hi): (T, T), tol: T) -> (T, T) {
    let step = (hi - lo) / lit::<T>(GRID as f64);
    let mut best = (lo, phi(lo));
    for j in 1..=GRID {
        let x = lo + step * lit::<T>(j as f64);
        let v = phi(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let r: T = lit(0.618_033_988_749_894_9);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while b - a > tol * lit::<T>(0.1) * T::one().max(a.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d);
        }
        if b - a <= T::epsilon() * lit::<T>(8.0) * T::one().max(a.abs()) {
            break;
        }
    }
    let x = (a + b) * lit(0.5);
    let v = phi(x);
    if v <= best.1 {
        (x, v)
    } else {
        best
    }
}

fn projected_gradient<T: Scalar>(phi: &dyn Fn(&[T]) -> T, bx: &WorkingBox<T>) -> Result<(Vec<T>, T), EnvelopeError> {
    let dim = bx.bounds.len();
    let h: T = lit(1e-6);
    let grad = |x: &[T]| -> Vec<T> {
        (0..dim)
            .map(|j| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[j] += h;
                b[j] -= h;
                (phi(&a) - phi(&b)) / (h + h)
            })
            .collect()
    };
    // coarse start: best corner-to-center lattice point
    let mut x: Vec<T> = bx.bounds.iter().map(|&(a, b)| (a + b) * lit(0.5)).collect();
    let mut fx = phi(&x);
    let pts = 9;
    let total = pts_pow(pts, dim);
    for idx in 0..total {
        let mut rem = idx;
        let cand: Vec<T> = bx
            .bounds
            .iter()
            .map(|&(a, b)| {
                let j = rem % pts;
                rem /= pts;
                a + (b - a) * lit::<T>(j as f64 / (pts - 1) as f64)
            })
            .collect();
        let v = phi(&cand);
        if v < fx {
            x = cand;
            fx = v;
        }
    }
    let mut step = T::one();
    for _ in 0..10_000 {
        let g = grad(&x);
        let mut moved = false;
        while step > lit(1e-14) {
            let mut y: Vec<T> = x.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
            bx.clamp(&mut y);
            let fy = phi(&y);
            let d2: T = y.iter().zip(&x).map(|(&a, &b)| (a - b) * (a - b)).sum();
            if fy <= fx - d2 / (lit::<T>(4.0) * step) {
                let dist = d2.sqrt();
                let stalled = fx - fy <= lit::<T>(4.0) * T::epsilon() * fx.abs().max(T::one());
                x = y;
                fx = fy;
                moved = true;
                if dist <= bx.tol || stalled {
                    return Ok((x, fx));
                }
                step *= lit(2.0);
                break;
            }
            step *= lit(0.5);
        }
        if !moved {
            return Ok((x, fx));
        }
    }
    Err(EnvelopeError::NoConvergence("projected gradient"))
}

fn pts_pow(p: usize, d: usize) -> usize {
    (0..d).fold(1, |acc, _| acc * p)
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Moreau envelope `inf_y f(y) + ‖z − y‖²/(2t)` over the box.
pub fn moreau_value<T: Scalar>(
    f: &dyn Fn(&[T]) -> T,
    t: T,
    z: &[T],
    bx: &WorkingBox<T>,
) -> Result<T, EnvelopeError> {
    let two: T = lit(2.0);
    box_minimize(&|y: &[T]| f(y) + sq_dist(z, y) / (two * t), bx).map(|(_, v)| v)
}

/// Outer maximizer `z*(x)` and the envelope value.
pub fn double_envelope_argmax<T: Scalar>(
    f: &dyn Fn(&[T]) -> T,
    p: &EnvelopeParams<T>,
    x: &[T],
    bx: &WorkingBox<T>,
) -> Result<(Vec<T>, T), EnvelopeError> {
    bx.check()?;
    if x.len() != bx.bounds.len() {
        return Err(EnvelopeError::Box(x.len()));
    }
    let two: T = lit(2.0);
    let failed = std::cell::Cell::new(false);
    let neg_outer = |z: &[T]| -> T {
        match moreau_value(f, p.t, z, bx) {
            Ok(m) => -(m - sq_dist(x, z) / (two * p.s)),
            Err(_) => {
                failed.set(true);
                T::infinity()
            }
        }
    };
    let (z, v) = box_minimize(&neg_outer, bx)?;
    if failed.get() {
        return Err(EnvelopeError::NoConvergence("inner Moreau solve"));
    }
    Ok((z, -v))
}

pub fn double_envelope_value<T: Scalar>(
    f: &dyn Fn(&[T]) -> T,
    p: &EnvelopeParams<T>,
    x: &[T],
    bx: &WorkingBox<T>,
) -> Result<T, EnvelopeError> {
    double_envelope_argmax(f, p, x, bx).map(|(_, v)| v)
}

/// `(z*(x) − x)/s`.
pub fn double_envelope_grad<T: Scalar>(
    f: &dyn Fn(&[T]) -> T,
    p: &EnvelopeParams<T>,
    x: &[T],
    bx: &WorkingBox<T>,
) -> Result<Vec<T>, EnvelopeError> {
    let (z, _) = double_envelope_argmax(f, p, x, bx)?;
    Ok(z.iter().zip(x).map(|(&a, &b)| (a - b) / p.s).collect())
}

/// Largest `‖g(a) − g(b)‖/‖a − b‖` over all pairs of uniform samples in the box.
pub fn lipschitz_probe<T: Scalar>(
    grad: &dyn Fn(&[T]) -> Vec<T>,
    bounds: &[(T, T)],
    n_samples: usize,
    seed: u64,
) -> T {
    assert!(n_samples >= 2, "need at least two samples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<T>> = (0..n_samples)
        .map(|_| {
            bounds
                .iter()
                .map(|&(a, b)| a + (b - a) * lit::<T>(rng.gen::<f64>()))
                .collect()
        })
        .collect();
    let grads: Vec<Vec<T>> = pts.iter().map(|p| grad(p)).collect();
    let mut best = T::zero();
    for i in 0..n_samples {
        for j in i + 1..n_samples {
            let d = sq_dist(&pts[i], &pts[j]).sqrt();
            if d > T::zero() {
                best = best.max(sq_dist(&grads[i], &grads[j]).sqrt() / d);
            }
        }
    }
    best
}

/// Bundled one-dimensional test functions.
pub mod test_functions {
    use crate::scalar::Scalar;

    pub fn half_square<T: Scalar>(y: &[T]) -> T {
        y[0] * y[0] / (T::one() + T::one())
    }

    pub fn abs<T: Scalar>(y: &[T]) -> T {
        y[0].abs()
    }

    /// `y log(a + b/y)` on `y > 0`, extended by 0 at `y = 0`; use a
    /// working box inside `[0, ∞)`.
    pub fn x_log<T: Scalar>(a: T, b: T) -> impl Fn(&[T]) -> T {
        move |y: &[T]| {
            let v = y[0];
            if v <= T::zero() {
                T::zero()
            } else {
                v * (a + b / v).ln()
            }
        }
    }
}

/// Local objective smoothed by the double envelope at the engine's current
/// Lipschitz level; one block of dimension at most three.
pub struct SmoothedObjective<T, F> {
    pub block: BlockId,
    pub f: F,
    pub working_box: WorkingBox<T>,
}

impl<T: Scalar, F: Fn(&[T]) -> T + Send + Sync> SmoothedObjective<T, F> {
    fn params(&self, ctx: &EvalContext<T>) -> EnvelopeParams<T> {
        let l = ctx.lipschitz.expect("smoothed objective needs an active smoothing schedule");
        EnvelopeParams::from_lipschitz(l).expect("positive Lipschitz level")
    }
}

impl<T: Scalar, F: Fn(&[T]) -> T + Send + Sync> LocalObjective<T> for SmoothedObjective<T, F> {
    fn value(&self, x: &BlockPoint<T>, ctx: &EvalContext<T>) -> T {
        match ctx.lipschitz {
            None => (self.f)(&x[&self.block]),
            Some(_) => double_envelope_value(&self.f, &self.params(ctx), &x[&self.block], &self.working_box)
                .expect("envelope evaluation"),
        }
    }

    fn gradient(&self, x: &BlockPoint<T>, ctx: &EvalContext<T>) -> BlockPoint<T> {
        let g = double_envelope_grad(&self.f, &self.params(ctx), &x[&self.block], &self.working_box)
            .expect("envelope evaluation");
        BlockPoint::from([(self.block, g)])
    }

    fn project(&self, _block: BlockId, v: &mut [T]) {
        self.working_box.clamp(v);
    }
}
