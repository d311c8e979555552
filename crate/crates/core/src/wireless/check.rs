//! Finite-difference audit of the analytic gradients.

use rand::Rng;

use super::objective::{f_cm_value_and_grad, f_rm_value_and_grad, g_cm_value_and_grad, PowerCopies};
use super::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientCheck {
    pub points: usize,
    pub max_rel_rm: f64,
    pub max_rel_cm: f64,
    pub max_rel_g: f64,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.max_rel_rm.max(self.max_rel_cm).max(self.max_rel_g)
    }
}

/// Fourth-order central difference of `f` in coordinate `v`.
fn derivative(mut f: impl FnMut(f64) -> f64, v: f64) -> f64 {
    let h = 1e-4 * v.abs().max(1e-3);
    let d = |f: &mut dyn FnMut(f64) -> f64, h: f64| (f(v + h) - f(v - h)) / (2.0 * h);
    let (d1, d2) = (d(&mut f, h), d(&mut f, h / 2.0));
    (4.0 * d2 - d1) / 3.0
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

fn random_copies<R: Rng + ?Sized>(inst: &ProblemInstance<f64>, b: usize, rng: &mut R) -> PowerCopies<f64> {
    let kk = inst.channels();
    inst.graph()
        .closed_neighborhood_indices(b)
        .into_iter()
        .map(|t| (t, (0..kk).map(|_| rng.gen_range(0.05..1.0) * inst.budget(t) / kk as f64).collect()))
        .collect()
}

fn random_share<R: Rng + ?Sized>(inst: &ProblemInstance<f64>, b: usize, rng: &mut R) -> Vec<f64> {
    let n = inst.users_of(b).len();
    (0..n * inst.channels()).map(|_| rng.gen_range(0.05..1.0) / n as f64).collect()
}

type LocalFn = fn(&ProblemInstance<f64>, usize, &PowerCopies<f64>, &[f64]) -> (f64, super::BsGradient<f64>);

fn check_local<R: Rng + ?Sized>(inst: &ProblemInstance<f64>, f: LocalFn, b: usize, rng: &mut R) -> f64 {
    let p = random_copies(inst, b, rng);
    let x = random_share(inst, b, rng);
    let (_, g) = f(inst, b, &p, &x);
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let fd = derivative(
            |v| {
                let mut x = x.clone();
                x[j] = v;
                f(inst, b, &p, &x).0
            },
            x[j],
        );
        worst = worst.max(relative_error(g.x[j], fd));
    }
    for (&t, row) in &p {
        for k in 0..row.len() {
            let fd = derivative(
                |v| {
                    let mut p = p.clone();
                    p.get_mut(&t).expect("key")[k] = v;
                    f(inst, b, &p, &x).0
                },
                row[k],
            );
            worst = worst.max(relative_error(g.p[&t][k], fd));
        }
    }
    worst
}

fn check_g<R: Rng + ?Sized>(inst: &ProblemInstance<f64>, rng: &mut R) -> f64 {
    let kk = inst.channels();
    let p: Vec<Vec<f64>> = (0..inst.num_bs())
        .map(|b| (0..kk).map(|_| rng.gen_range(0.05..1.0) * inst.budget(b) / kk as f64).collect())
        .collect();
    let x: Vec<Vec<f64>> = inst
        .users()
        .iter()
        .map(|u| {
            let n = inst.users_of(u.serving).len() as f64;
            (0..kk).map(|_| rng.gen_range(0.05..1.0) / n).collect()
        })
        .collect();
    let (_, gp, gx) = g_cm_value_and_grad(inst, &p, &x);
    let mut worst: f64 = 0.0;
    for (b, row) in p.iter().enumerate() {
        for k in 0..kk {
            let fd = derivative(
                |v| {
                    let mut p = p.clone();
                    p[b][k] = v;
                    g_cm_value_and_grad(inst, &p, &x).0
                },
                row[k],
            );
            worst = worst.max(relative_error(gp[b][k], fd));
        }
    }
    for (i, row) in x.iter().enumerate() {
        for k in 0..kk {
            let fd = derivative(
                |v| {
                    let mut x = x.clone();
                    x[i][k] = v;
                    g_cm_value_and_grad(inst, &p, &x).0
                },
                row[k],
            );
            worst = worst.max(relative_error(gx[i][k], fd));
        }
    }
    worst
}

/// Worst relative error of every analytic partial over `points` random
/// interior points, cycling through the base stations.
pub fn gradient_check<R: Rng + ?Sized>(inst: &ProblemInstance<f64>, points: usize, rng: &mut R) -> GradientCheck {
    let mut out = GradientCheck {
        points,
        ..Default::default()
    };
    for n in 0..points {
        let b = n % inst.num_bs();
        out.max_rel_rm = out.max_rel_rm.max(check_local(inst, f_rm_value_and_grad, b, rng));
        out.max_rel_cm = out.max_rel_cm.max(check_local(inst, f_cm_value_and_grad, b, rng));
        out.max_rel_g = out.max_rel_g.max(check_g(inst, rng));
    }
    out
}
