//! The consensus engine on toy problems with known answers.

use netsca::graph::InterferenceGraph;
use netsca::mixing::MixingMatrix;
use netsca::sca::*;
use netsca::schedule::ScheduleSet;

mod common;
use common::{agents, Quadratic};

fn ring_engine(schedule: ScheduleSet<f64>) -> ScaEngine<f64, Quadratic> {
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
    ScaEngine::new(layout, agents(), Box::new(mixing), schedule).unwrap()
}

fn start() -> Vec<BlockPoint<f64>> {
    (0..4).map(|i| [(0, vec![i as f64, -(i as f64)])].into()).collect()
}

fn minimizer() -> Vec<f64> {
    let ag = agents();
    let total: f64 = ag.iter().map(|q| q.a).sum();
    (0..2).map(|k| ag.iter().map(|q| q.a * q.c[k]).sum::<f64>() / total).collect()
}

#[test]
fn tracking_error_vanishes_and_sum_is_exact() {
    let engine = ring_engine(ScheduleSet::diminishing(0.99, 0.53));
    let mut states = engine.initialize(start()).unwrap();
    for n in 0..500 {
        let gap = tracker_sum_gap(engine.layout(), &states)[0];
        assert!(gap <= 1e-10, "n={n}: Σy − Σ∇f = {gap}");
        states = engine.iterate(&states, n).unwrap();
    }
    let err = tracking_error(engine.layout(), &states)[0];
    assert!(err <= 1e-6, "tracking error {err}");
    let avg = engine.block_averages(&states);
    let star = minimizer();
    for k in 0..2 {
        assert!((avg[&0][k] - star[k]).abs() <= 1e-6);
    }
    assert!(consensus_residual(engine.layout(), &states)[0] <= 1e-6);
}

#[test]
fn run_stops_on_tolerances_and_is_deterministic() {
    let engine = ring_engine(ScheduleSet::diminishing(0.99, 0.6));
    let stop = StopCriteria {
        max_iters: 5000,
        consensus_tol: 1e-9,
        stationarity_tol: 1e-9,
    };
    let (sa, ta) = engine.run_to_termination(engine.initialize(start()).unwrap(), &stop).unwrap();
    let (sb, tb) = engine.run_to_termination(engine.initialize(start()).unwrap(), &stop).unwrap();
    assert!(ta.same_numbers(&tb));
    assert_eq!(sa, sb);
    assert!(ta.iterations() < 5000);
    let last = ta.last().unwrap();
    assert!(last.consensus_max() <= 1e-9 && last.stationarity <= 1e-9);
    // objective at the averages approaches the optimal value
    let star = minimizer();
    let opt: f64 = agents()
        .iter()
        .map(|q| 0.5 * q.a * star.iter().zip(&q.c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    assert!((last.objective - opt).abs() <= 1e-8);
}

#[test]
fn single_owner_blocks_take_plain_damped_steps() {
    // node 0 alone owns block 1; with the default linearized surrogate the
    // step is x + α(Proj(x − ∇f/τ) − x)
    struct Lin;
    impl LocalObjective<f64> for Lin {
        fn value(&self, x: &BlockPoint<f64>, _: &EvalContext<f64>) -> f64 {
            x.values().flatten().map(|v| 0.5 * v * v).sum()
        }
        fn gradient(&self, x: &BlockPoint<f64>, _: &EvalContext<f64>) -> BlockPoint<f64> {
            x.clone()
        }
        fn project(&self, _: BlockId, v: &mut [f64]) {
            v.iter_mut().for_each(|x| *x = x.max(0.5));
        }
    }
    let layout = BlockLayout::new(
        vec![0],
        vec![BlockSpec {
            dim: 2,
            owners: vec![0],
            common: true,
        }],
    )
    .unwrap();
    let mixing = StaticMixing {
        per_block: vec![MixingMatrix::from_parts(vec![0], vec![], vec![1.0])],
    };
    let mut sched = ScheduleSet::diminishing(0.5, 0.75);
    sched.tau0 = 2.0;
    let engine = ScaEngine::new(layout, vec![Lin], Box::new(mixing), sched).unwrap();
    let s0 = engine.initialize(vec![[(0, vec![4.0, 0.8])].into()]).unwrap();
    let s1 = engine.iterate(&s0, 0).unwrap();
    // Proj(x − x/2) = (2, 0.5); α = 0.5
    assert_eq!(s1[0].x[&0], vec![3.0, 0.65]);
}

#[test]
fn layouts_and_schedules_are_checked() {
    assert!(BlockLayout::new(
        vec![0, 1],
        vec![BlockSpec {
            dim: 1,
            owners: vec![0],
            common: true
        }]
    )
    .is_err());
    assert!(BlockLayout::new(vec![0], vec![BlockSpec { dim: 0, owners: vec![0], common: false }]).is_err());
    assert!(BlockLayout::new(vec![0], vec![BlockSpec { dim: 1, owners: vec![3], common: false }]).is_err());

    // mixing support must equal the owner set
    let layout = BlockLayout::new(
        vec![0, 1, 2, 3],
        vec![BlockSpec {
            dim: 2,
            owners: vec![0, 1, 2, 3],
            common: true,
        }],
    )
    .unwrap();
    let wrong = StaticMixing {
        per_block: vec![MixingMatrix::from_graph(&InterferenceGraph::complete(3).unwrap())],
    };
    assert!(matches!(
        ScaEngine::new(layout, agents(), Box::new(wrong), ScheduleSet::diminishing(0.9, 0.6)),
        Err(ScaError::MixingSupport { .. })
    ));

    let bad = ring_engine(ScheduleSet::diminishing(0.9, 0.4));
    let stop = StopCriteria {
        max_iters: 3,
        consensus_tol: 0.0,
        stationarity_tol: 0.0,
    };
    let err = bad.run_to_termination(bad.initialize(start()).unwrap(), &stop).unwrap_err();
    assert!(err.to_string().contains("beta"), "{err}");
    assert!(matches!(bad.initialize(vec![]), Err(ScaError::StateCount { .. })));
}

#[test]
fn partially_shared_block_reaches_the_owners_optimum() {
    // block 0 is shared by nodes 0 and 1 only; nodes 2, 3 share block 1
    let layout = BlockLayout::new(
        vec![0, 1, 2, 3],
        vec![
            BlockSpec { dim: 2, owners: vec![0, 1], common: false },
            BlockSpec { dim: 2, owners: vec![2, 3], common: false },
        ],
    )
    .unwrap();
    let pair = |ids: Vec<usize>| MixingMatrix::from_parts(ids, vec![(0, 1)], vec![0.5, 0.5, 0.5, 0.5]);
    let mixing = StaticMixing {
        per_block: vec![pair(vec![0, 1]), pair(vec![2, 3])],
    };
    let engine = ScaEngine::new(layout, agents(), Box::new(mixing), ScheduleSet::diminishing(0.99, 0.55)).unwrap();
    let x0: Vec<BlockPoint<f64>> = vec![
        [(0, vec![0.0, 0.0])].into(),
        [(0, vec![1.0, 1.0])].into(),
        [(1, vec![0.0, 0.0])].into(),
        [(1, vec![-1.0, 1.0])].into(),
    ];
    let mut states = engine.initialize(x0).unwrap();
    for n in 0..400 {
        states = engine.iterate(&states, n).unwrap();
    }
    let avg = engine.block_averages(&states);
    let ag = agents();
    for (m, (i, j)) in [(0usize, (0usize, 1usize)), (1, (2, 3))] {
        for k in 0..2 {
            let want = (ag[i].a * ag[i].c[k] + ag[j].a * ag[j].c[k]) / (ag[i].a + ag[j].a);
            assert!((avg[&m][k] - want).abs() <= 1e-6, "block {m}: {} vs {want}", avg[&m][k]);
        }
    }
}

#[test]
fn stored_dimension_counts_copies() {
    let layout = BlockLayout::new(
        vec![0, 1, 2],
        vec![
            BlockSpec { dim: 3, owners: vec![0, 1, 2], common: true },
            BlockSpec { dim: 2, owners: vec![1], common: false },
        ],
    )
    .unwrap();
    assert_eq!(layout.total_dim(), 5);
    assert_eq!(layout.stored_dim(0), 3);
    assert_eq!(layout.stored_dim(1), 5);
    assert_eq!(layout.owned_by(1), &[0, 1]);
}
