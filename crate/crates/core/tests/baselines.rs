mod common;

use common::*;
use netsca::algorithms::{run_sc, run_sc_ni, single_cell_objective, single_cell_solve, SingleCell};
use netsca::graph::InterferenceGraph;
use netsca::wireless::weighted_sum_rate;
use rand::Rng;

fn cell(weights: Vec<f64>, gains: Vec<Vec<f64>>, noise: f64, budget: f64) -> SingleCell<f64> {
    let kk = gains[0].len();
    SingleCell {
        noise: vec![vec![noise; kk]; weights.len()],
        weights,
        gains,
        budget,
    }
}

#[test]
fn one_user_one_channel_takes_everything() {
    let c = cell(vec![1.0], vec![vec![0.7]], 0.01, 10.0);
    let (p, x) = single_cell_solve(&c, 1e-12).unwrap();
    assert!((p[0] - 10.0).abs() <= 1e-9);
    assert!((x[0][0] - 1.0).abs() <= 1e-9);
}

#[test]
fn identical_users_share_evenly() {
    let c = cell(vec![1.0, 1.0], vec![vec![0.5], vec![0.5]], 0.01, 4.0);
    let (p, x) = single_cell_solve(&c, 1e-12).unwrap();
    assert!((p[0] - 4.0).abs() <= 1e-9);
    assert!((x[0][0] - 0.5).abs() <= 1e-6 && (x[1][0] - 0.5).abs() <= 1e-6, "{x:?}");

    let c = cell(vec![2.0], vec![vec![0.3, 0.3]], 0.01, 6.0);
    let (p, x) = single_cell_solve(&c, 1e-12).unwrap();
    assert!((p[0] - 3.0).abs() <= 1e-6 && (p[1] - 3.0).abs() <= 1e-6, "{p:?}");
    assert!(x[0].iter().all(|&v| (v - 1.0).abs() <= 1e-9));
}

#[test]
fn stronger_channel_gets_more_power() {
    let c = cell(vec![1.0], vec![vec![1.0, 0.1]], 0.01, 1.0);
    let (p, _) = single_cell_solve(&c, 1e-12).unwrap();
    assert!(p[0] > p[1]);
    assert!((p[0] + p[1] - 1.0).abs() <= 1e-9);
}

#[test]
fn two_users_two_channels_match_grid_search() {
    let mut r = rng(17);
    for _ in 0..10 {
        let c = SingleCell {
            weights: (0..2).map(|_| r.gen_range(0.2..2.0)).collect(),
            gains: (0..2).map(|_| (0..2).map(|_| r.gen_range(0.05..2.0)).collect()).collect(),
            noise: (0..2).map(|_| (0..2).map(|_| r.gen_range(0.01..0.3)).collect()).collect(),
            budget: r.gen_range(1.0..10.0),
        };
        let (p, x) = single_cell_solve(&c, 1e-12).unwrap();
        let ours = single_cell_objective(&c, &p, &x);
        let grid = grid_best(&c);
        assert!((ours - grid).abs() <= 1e-2 * grid, "{ours} vs {grid}");
        assert!(ours >= grid - 1e-9 * grid, "solver below grid: {ours} < {grid}");
    }
}

#[test]
fn sc_equals_sc_ni_without_cross_gains() {
    let inst = table1(6).without_interference();
    let a = run_sc(&inst, 10, 1e-6).unwrap();
    let b = run_sc_ni(&inst).unwrap();
    for (u, v) in a.power.iter().flatten().zip(b.power.iter().flatten()) {
        assert!((u - v).abs() <= 1e-9);
    }
    for (u, v) in a.assign.iter().flatten().zip(b.assign.iter().flatten()) {
        assert!((u - v).abs() <= 1e-9);
    }
}

#[test]
fn baselines_are_feasible_and_deterministic() {
    for seed in 0..3 {
        let inst = table1(seed);
        let a = run_sc(&inst, 10, 1e-6).unwrap();
        let b = run_sc(&inst, 10, 1e-6).unwrap();
        assert_eq!(a, b);
        assert!(a.violations(&inst).is_empty(), "{:?}", a.violations(&inst));
        let ni = run_sc_ni(&inst).unwrap();
        assert!(ni.violations(&inst).is_empty());
        // accounting for interference pays off on the true objective
        assert!(weighted_sum_rate(&inst, &a) >= weighted_sum_rate(&inst, &ni) - 1e-9);
    }
}

#[test]
fn interference_blind_cells_spend_their_whole_budget() {
    let inst = sampled(InterferenceGraph::complete(3).unwrap(), 2, 3, 4);
    let ni = run_sc_ni(&inst).unwrap();
    for b in 0..3 {
        let spent: f64 = ni.power[b].iter().sum();
        assert!((spent - inst.budget(b)).abs() <= 1e-9);
    }
}
