//! Small dense helpers for square matrices stored row-major.

use crate::scalar::{lit, Scalar};

pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub(crate) fn transpose<T: Scalar>(a: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues<T: Scalar>(a: &[T], n: usize) -> Vec<T> {
    let mut m = a.to_vec();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let v = m[i * n + j] * m[i * n + j];
                total += v;
                if i != j {
                    off += v;
                }
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

/// Largest singular value.
pub(crate) fn spectral_norm<T: Scalar>(a: &[T], n: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    let ata = matmul(&transpose(a, n), a, n);
    symmetric_eigenvalues(&ata, n)
        .into_iter()
        .fold(T::zero(), |m, v| m.max(v))
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let mut ev = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0f64).abs() < 1e-14);
        assert!((ev[1] - 3.0f64).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_of_nonsymmetric() {
        // [[0,2],[0,0]] has singular values 2 and 0.
        assert!((spectral_norm(&[0.0, 2.0, 0.0, 0.0], 2) - 2.0f64).abs() < 1e-14);
    }
}
