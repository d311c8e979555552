//! Euclidean projections onto the per-channel allocation set and the
//! per-BS power budget set.

use crate::scalar::{count, Scalar};

/// Projects `v` onto `{ x >= 0 : Σ x = radius }` in place (sort-based).
fn project_simplex<T: Scalar>(v: &mut [T], radius: T) {
    let mut sorted: Vec<T> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut shift = T::zero();
    for (j, &u) in sorted.iter().enumerate() {
        cum += u;
        let candidate = (cum - radius) / count::<T>(j + 1);
        if u - candidate > T::zero() {
            shift = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - shift).max(T::zero());
    }
}

/// Projection onto `{ x ∈ [0,1]^n : Σ x <= 1 }`.
pub fn project_allocation<T: Scalar>(v: &mut [T]) {
    let total: T = v.iter().map(|x| x.max(T::zero()).min(T::one())).sum();
    if total > T::one() {
        // the budget binds, and on the unit simplex the upper bound is implied
        project_simplex(v, T::one());
    } else {
        for x in v.iter_mut() {
            *x = x.max(T::zero()).min(T::one());
        }
    }
}

/// Projection onto `{ p >= 0 : Σ p <= budget }`.
pub fn project_power<T: Scalar>(v: &mut [T], budget: T) {
    for x in v.iter_mut() {
        *x = x.max(T::zero());
    }
    let total: T = v.iter().copied().sum();
    if total > budget {
        project_simplex(v, budget);
    }
}

pub fn projected_allocation<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    project_allocation(&mut out);
    out
}

pub fn projected_power<T: Scalar>(v: &[T], budget: T) -> Vec<T> {
    let mut out = v.to_vec();
    project_power(&mut out, budget);
    out
}
