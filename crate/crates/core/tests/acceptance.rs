//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the bundled Table 1 experiment (a few minutes).

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use netsca::algorithms::*;
use netsca::envelope::test_functions::half_square;
use netsca::envelope::*;
use netsca::graph::InterferenceGraph;
use netsca::harness::{run_experiment, ExperimentConfig, ExperimentReport};
use netsca::mixing::{fit_decay_ratio, MixingMatrix};
use netsca::sca::*;
use netsca::schedule::ScheduleSet;
use netsca::scheduler::slot_rng;
use netsca::wireless::*;
use rand::Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn table1_experiment() -> ExperimentReport {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    let out = tempfile::tempdir().unwrap();
    run_experiment(&cfg, out.path(), cfg.run.workers).unwrap()
}

fn separation(rep: &ExperimentReport) -> Verdict {
    if rep.failures().count() > 0 {
        return verdict(false, format!("{} runs failed", rep.failures().count()));
    }
    let sc = |a| rep.median_utility(AlgorithmKind::Sc, a).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (alpha, need) in [(1.0, 3.0), (0.5, 1.6)] {
        for k in [AlgorithmKind::LxgpRm, AlgorithmKind::LxlpRm] {
            let r = rep.median_utility(k, alpha).unwrap() / sc(alpha);
            ok &= r >= need;
            parts.push(format!("{k}/SC at alpha={alpha}: {r:.3} (need >= {need})"));
        }
    }
    verdict(ok, parts.join(", "))
}

fn baseline_order(rep: &ExperimentReport) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [1.0, 0.5] {
        let sc = rep.median_utility(AlgorithmKind::Sc, alpha).unwrap();
        let ni = rep.median_utility(AlgorithmKind::ScNi, alpha).unwrap();
        ok &= sc >= ni;
        parts.push(format!("alpha={alpha}: SC {sc:.4} vs SC-NI {ni:.4}"));
    }
    verdict(ok, parts.join(", "))
}

fn cdf_dominance(rep: &ExperimentReport) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in rep.dominance.iter().filter(|d| d.baseline == AlgorithmKind::Sc) {
        let wins = (d.cdf_dominance * d.seeds as f64).round() as usize;
        ok &= wins >= 3;
        parts.push(format!("{} alpha={}: {wins}/{} seeds", d.algorithm, d.alpha, d.seeds));
    }
    verdict(ok && !parts.is_empty(), format!("{} (need >= 3/5)", parts.join(", ")))
}

fn consensus_decay() -> Verdict {
    let g = InterferenceGraph::ring(4).unwrap();
    let inst = sample_instance::<f64, _>(&g, &InstanceParams::table1(), &mut slot_rng(1, 0)).unwrap();
    let nb = inst.num_bs();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [AlgorithmKind::LxgpRm, AlgorithmKind::LxlpRm, AlgorithmKind::GxgpCm] {
        let cfg = AlgorithmConfig::table1(kind);
        let tr = run(&inst, &cfg).unwrap().trajectory;
        let power = |r: &TrajectoryRow<f64>| r.consensus[nb..].iter().copied().fold(0.0, f64::max);
        let peak = tr.rows.iter().map(power).fold(0.0, f64::max);
        let last = power(tr.last().unwrap());
        ok &= peak > 0.0 && last <= 1e-3 * peak;
        parts.push(format!("{kind}: {last:.2e}/{peak:.2e} after {} iters", tr.iterations()));
    }
    verdict(ok, format!("final/peak power consensus <= 1e-3: {}", parts.join(", ")))
}

fn gradient_tracking() -> Verdict {
    let g = InterferenceGraph::ring(4).unwrap();
    let layout = BlockLayout::new(
        vec![0, 1, 2, 3],
        vec![BlockSpec {
            dim: 2,
            owners: vec![0, 1, 2, 3],
            common: true,
        }],
    )
    .unwrap();
    let mixing = StaticMixing {
        per_block: vec![MixingMatrix::from_graph(&g)],
    };
    let engine = ScaEngine::new(layout, agents(), Box::new(mixing), ScheduleSet::diminishing(0.99, 0.53)).unwrap();
    let start: Vec<BlockPoint<f64>> = (0..4).map(|i| [(0, vec![i as f64, -(i as f64)])].into()).collect();
    let mut states = engine.initialize(start).unwrap();
    let mut worst_gap: f64 = 0.0;
    for n in 0..500 {
        worst_gap = worst_gap.max(tracker_sum_gap(engine.layout(), &states)[0]);
        states = engine.iterate(&states, n).unwrap();
    }
    worst_gap = worst_gap.max(tracker_sum_gap(engine.layout(), &states)[0]);
    // tracking error recomputed here from the agents' own gradients
    let ctx = EvalContext::plain(500);
    let grads: Vec<Vec<f64>> = agents()
        .iter()
        .zip(&states)
        .map(|(q, s)| q.gradient(&s.x, &ctx)[&0].clone())
        .collect();
    let mean: Vec<f64> = (0..2).map(|k| grads.iter().map(|g| g[k]).sum::<f64>() / 4.0).collect();
    let err = states
        .iter()
        .map(|s| s.y[&0].iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    verdict(
        err <= 1e-6 && worst_gap <= 1e-10,
        format!("tracking error at n=500 {err:.2e} (<= 1e-6), max |sum y - sum grad| {worst_gap:.2e} (<= 1e-10)"),
    )
}

/// Fourth-order central difference of `f` along coordinate `j` of `v`.
fn fd(f: &dyn Fn(&[f64]) -> f64, v: &[f64], j: usize) -> f64 {
    let h = 1e-4 * v[j].abs().max(1e-2);
    let at = |d: f64| {
        let mut w = v.to_vec();
        w[j] += d;
        f(&w)
    };
    let d1 = (at(h) - at(-h)) / (2.0 * h);
    let d2 = (at(2.0 * h) - at(-2.0 * h)) / (4.0 * h);
    (4.0 * d1 - d2) / 3.0
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn analytic_gradients() -> Verdict {
    let mut r = rng(2024);
    let mut worst = [0.0f64; 3];
    for point in 0..100 {
        let inst = table1(point / 10);
        let (nb, kk) = (inst.num_bs(), inst.channels());
        let p: Vec<Vec<f64>> = (0..nb)
            .map(|b| (0..kk).map(|_| r.gen_range(0.05..1.0) * inst.budget(b) / kk as f64).collect())
            .collect();
        let x: Vec<Vec<f64>> = (0..inst.num_users())
            .map(|i| {
                let share = inst.users_of(inst.users()[i].serving).len() as f64;
                (0..kk).map(|_| r.gen_range(0.05..1.0) / share).collect()
            })
            .collect();
        let pc = copies_of(&inst, &p);
        for b in 0..nb {
            let hood = inst.graph().closed_neighborhood_indices(b);
            let xb = bs_slice(&inst, b, &x);
            // flat layout: x_b, then the neighbourhood's power rows in order
            let mut flat = xb.clone();
            for &t in &hood {
                flat.extend(&p[t]);
            }
            let split = |v: &[f64]| {
                let copies: PowerCopies<f64> = hood
                    .iter()
                    .enumerate()
                    .map(|(q, &t)| (t, v[xb.len() + q * kk..xb.len() + (q + 1) * kk].to_vec()))
                    .collect();
                (v[..xb.len()].to_vec(), copies)
            };
            for (slot, oracle) in [
                (0, f_rm_value_and_grad::<f64> as fn(&_, _, &_, &_) -> _),
                (1, f_cm_value_and_grad::<f64>),
            ] {
                let (_, g) = oracle(&inst, b, &pc[b], &xb);
                let mut analytic = g.x.clone();
                for &t in &hood {
                    analytic.extend(&g.p[&t]);
                }
                let f = |v: &[f64]| {
                    let (xv, pv) = split(v);
                    oracle(&inst, b, &pv, &xv).0
                };
                for (j, &a) in analytic.iter().enumerate() {
                    worst[slot] = worst[slot].max(rel(a, fd(&f, &flat, j)));
                }
            }
        }
        let (_, gp, gx) = g_cm_value_and_grad(&inst, &p, &x);
        let nu = inst.num_users();
        let flat: Vec<f64> = x.iter().chain(&p).flatten().copied().collect();
        let f = |v: &[f64]| {
            let xs: Vec<Vec<f64>> = v[..nu * kk].chunks(kk).map(<[f64]>::to_vec).collect();
            let ps: Vec<Vec<f64>> = v[nu * kk..].chunks(kk).map(<[f64]>::to_vec).collect();
            g_cm_value_and_grad(&inst, &ps, &xs).0
        };
        let analytic: Vec<f64> = gx.iter().chain(&gp).flatten().copied().collect();
        for (j, &a) in analytic.iter().enumerate() {
            worst[2] = worst[2].max(rel(a, fd(&f, &flat, j)));
        }
    }
    verdict(
        worst.iter().all(|&w| w <= 1e-5),
        format!(
            "100 points, max rel. err. f_rm {:.1e}, f_cm {:.1e}, G {:.1e} (<= 1e-5)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn envelope_closed_form() -> Verdict {
    let p = EnvelopeParams::from_lipschitz(1.0).unwrap();
    let bx = WorkingBox::cube(1, -10.0, 10.0);
    let err = [-2.0, -1.0, 0.0, 1.0, 2.0]
        .iter()
        .map(|&x: &f64| (double_envelope_value(&half_square, &p, &[x], &bx).unwrap() - x * x / 4.0).abs())
        .fold(0.0, f64::max);
    let g = |x: &[f64]| double_envelope_grad(&half_square, &p, x, &bx).unwrap();
    let probe = lipschitz_probe(&g, &[(-3.0, 3.0)], 40, 11);
    let bound = p.gradient_lipschitz();
    verdict(
        err <= 1e-6 && probe <= bound * (1.0 + 1e-3),
        format!("max |value - x^2/4| {err:.1e} (<= 1e-6), Lipschitz probe {probe:.6} (<= {bound}*(1+1e-3))"),
    )
}

fn schedule_gate() -> Verdict {
    let a = ScheduleSet::with_exponents(0.9, 0.05, 0.1).validate();
    let b = ScheduleSet::with_exponents(0.53, 0.0, 0.0).validate();
    let c = ScheduleSet::with_exponents(0.6, 0.2, 0.2).validate();
    let named = c.failures().any(|f| f.name == "beta - 3*lambda - delta > 1/2");
    verdict(
        a.passed() && b.passed() && !c.passed() && named,
        format!(
            "(0.9,0.05,0.1) {}, (0.53,0,0) {}, (0.6,0.2,0.2) {} naming [{}]",
            if a.passed() { "accepted" } else { "rejected" },
            if b.passed() { "accepted" } else { "rejected" },
            if c.passed() { "accepted" } else { "rejected" },
            c.failures().map(|f| f.name).collect::<Vec<_>>().join("; ")
        ),
    )
}

fn mixing_matrices() -> Verdict {
    let cycle = InterferenceGraph::new(&[1, 2, 3, 4], &[(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
    let w = MixingMatrix::from_graph(&cycle);
    let mut ok = w.validate(1e-12).passed();
    let star = InterferenceGraph::star(4).unwrap();
    for &b in star.node_ids() {
        ok &= MixingMatrix::local(&star, b).unwrap().validate(1e-12).passed();
    }
    let ratio = fit_decay_ratio(&w.consensus_decay(30)).unwrap_or(f64::NAN);
    verdict(
        ok && ratio < 1.0,
        format!("4-cycle and 4-star local matrices doubly stochastic at 1e-12: {ok}, fitted decay ratio {ratio:.4} (< 1)"),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut r = rng(17);
    let mut worst_sc: f64 = 0.0;
    for _ in 0..20 {
        let c = SingleCell {
            weights: (0..2).map(|_| r.gen_range(0.2..2.0)).collect(),
            gains: (0..2).map(|_| (0..2).map(|_| r.gen_range(0.05..2.0)).collect()).collect(),
            noise: (0..2).map(|_| (0..2).map(|_| r.gen_range(0.01..0.3)).collect()).collect(),
            budget: r.gen_range(1.0..10.0),
        };
        let (p, x) = single_cell_solve(&c, 1e-12).unwrap();
        let grid = grid_best(&c);
        worst_sc = worst_sc.max((single_cell_objective(&c, &p, &x) - grid).abs() / grid);
    }
    let (g, s2, budget, c, l, tau) = (1.3, 0.01, 10.0, (2.0, 0.4), (0.1, 0.5), 0.5);
    let inst = single_link(g, s2, budget);
    let x: BlockPoint<f64> = [(0, vec![c.1]), (1, vec![c.0])].into();
    let grad: BlockPoint<f64> = [(0, vec![l.1]), (1, vec![l.0])].into();
    let pi: BlockPoint<f64> = [(0, vec![0.0]), (1, vec![0.0])].into();
    let sol = surrogate_solve_cm(&inst, &x, &pi, &grad, tau, 1e-6, 50_000).unwrap();
    let (gp, gx) = grid_minimize(link_surrogate(g, s2, c, l, tau), budget);
    let dist = (sol.point[&1][0] - gp).abs().max((sol.point[&0][0] - gx).abs());
    verdict(
        worst_sc <= 1e-2 && dist <= 1e-4,
        format!("single cell vs grid rel. gap {worst_sc:.1e} (<= 1e-2), CM surrogate vs 2-D grid {dist:.1e} (<= 1e-4)"),
    )
}

fn split_identity() -> Verdict {
    let inst = table1(21);
    let mut r = rng(22);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_power(&inst, &mut r);
        let x = random_integral(&inst, &mut r);
        let pc = copies_of(&inst, &p);
        worst = worst.max((p2_objective(&inst, &pc, &x) - p3_objective(&inst, &pc, &x)).abs());
    }
    verdict(worst <= 1e-10, format!("100 trials, max |P2 - P3| {worst:.1e} (<= 1e-10)"))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let report = table1_experiment();
    println!("{}", report);
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("1 utility separation vs SC", Box::new(|| separation(&report))),
        ("2 baseline ordering SC >= SC-NI", Box::new(|| baseline_order(&report))),
        ("3 throughput CDF dominance", Box::new(|| cdf_dominance(&report))),
        ("4 consensus decay", Box::new(consensus_decay)),
        ("5 gradient tracking", Box::new(gradient_tracking)),
        ("6 analytic gradients", Box::new(analytic_gradients)),
        ("7 envelope closed form", Box::new(envelope_closed_form)),
        ("8 schedule gate", Box::new(schedule_gate)),
        ("9 mixing matrices", Box::new(mixing_matrices)),
        ("10 oracle equivalence", Box::new(oracle_equivalence)),
        ("11 direct/split identity", Box::new(split_identity)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let v = check();
        failed += usize::from(!v.passed);
        println!("{} criterion {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
