use std::collections::BTreeSet;

use proptest::prelude::*;

use graphrqi_core::classifier::{
    confusion_matrix, loss_and_gradient, superclass_accuracy, train, weighted_accuracy, BehaviorLabel, MlpParams,
    Standardizer, TrainConfig, NUM_CLASSES,
};
use graphrqi_core::features::{agent_features, neighbor_difference_sum, topology_vector};
use graphrqi_core::linalg::jacobi_eigenvalues;
use graphrqi_core::spectral::{
    bordered_base, chain_from_log, sm_apply, DenseBase, GraphRqi, ShiftedSolveOperator, SolverConfig,
};
use graphrqi_core::synth::{self, ScenarioSpec};
use graphrqi_core::trajgraph::{knn_edges, AgentId, DynamicLaplacian, Edge, Point, Weighting};
use graphrqi_core::Mat;

fn points(max: usize) -> impl Strategy<Value = Vec<(AgentId, Point)>> {
    prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..max).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (x, y))| (i as AgentId + 1, Point::new(x, y)))
            .collect()
    })
}

fn label() -> impl Strategy<Value = BehaviorLabel> {
    (0..NUM_CLASSES).prop_map(|i| BehaviorLabel::from_index(i).unwrap())
}

/// Plain Gaussian elimination with partial pivoting.
fn gauss_solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.push(b[i]);
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_is_symmetric_and_bounded(pts in points(30), k in 1usize..6) {
        let edges = knn_edges(&pts, k);
        let mut deg = std::collections::BTreeMap::new();
        for e in &edges {
            prop_assert!(e.lo() < e.hi());
            *deg.entry(e.lo()).or_insert(0usize) += 1;
            *deg.entry(e.hi()).or_insert(0usize) += 1;
        }
        // Every agent keeps at least its own min(k, n-1) choices.
        for (id, _) in &pts {
            prop_assert!(deg.get(id).copied().unwrap_or(0) >= k.min(pts.len() - 1));
        }
    }

    #[test]
    fn knn_ignores_input_order(pts in points(25), k in 1usize..5, rot in 0usize..25) {
        let mut shuffled = pts.clone();
        shuffled.rotate_left(rot % pts.len());
        shuffled.reverse();
        prop_assert_eq!(knn_edges(&pts, k), knn_edges(&shuffled, k));
    }

    #[test]
    fn incremental_laplacian_matches_rebuilds(pts in points(25), moves in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6)) {
        let mut g = DynamicLaplacian::new(Weighting::Unweighted);
        let half = pts.len() / 2 + 1;
        g.step(&pts[..half], 3).unwrap();
        let mut cur = pts.clone();
        let mut union: BTreeSet<Edge> = knn_edges(&pts[..half], 3);
        for (dx, dy) in moves {
            for (_, p) in cur.iter_mut() {
                p.x += dx;
                p.y -= dy;
            }
            g.step(&cur, 3).unwrap();
            union.extend(knn_edges(&cur, 3));
            prop_assert_eq!(g.dense(), g.from_scratch());
            prop_assert_eq!(g.dense(), g.replay());
            let have: BTreeSet<Edge> = g.edge_set().collect();
            prop_assert_eq!(&have, &union);
        }
        let l = g.dense();
        for i in 0..l.rows() {
            prop_assert_eq!(l.row(i).iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn sm_chain_matches_dense_solve(pts in points(20), extra in 1usize..12, mu in 0.13f64..9.0) {
        let mut g = DynamicLaplacian::new(Weighting::Unweighted);
        let first = pts.len().min(4);
        g.step(&pts[..first], 2).unwrap();
        g.reset();
        let base = g.dense();
        let base_n = g.n();
        g.step(&pts[..(first + extra).min(pts.len())], 3).unwrap();
        let (n, chain) = chain_from_log(base_n, g.update_log());
        let l = g.dense();
        let shifted = l.shifted(mu);
        let eigs = jacobi_eigenvalues(&l).unwrap();
        prop_assume!(eigs.iter().all(|e| (e - mu).abs() > 0.05) && (mu - 1.0).abs() > 0.05);
        let op = DenseBase::new(&bordered_base(&base, n), mu).and_then(|b| ShiftedSolveOperator::new(b, mu, &chain));
        prop_assume!(op.is_ok());
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let x = sm_apply(&op.unwrap(), &rhs);
        let y = gauss_solve(&shifted, &rhs);
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8 * norm, "rel err {}", err / norm);
    }

    #[test]
    fn eigenvalues_never_drop_after_edge_additions(pts in points(24), seed in any::<u64>()) {
        let mut g = DynamicLaplacian::new(Weighting::Unweighted);
        let mut rqi = GraphRqi::new(SolverConfig::default().with_k(3).with_seed(seed));
        let mut prev: Option<Vec<f64>> = None;
        for m in (4..=pts.len()).step_by(3) {
            g.step(&pts[..m], 3).unwrap();
            let k = 3.min(g.n());
            let s = rqi.spectrum_k(&g, k).unwrap();
            let desc: Vec<f64> = s.values.iter().rev().copied().collect();
            if let Some(p) = &prev {
                for (a, b) in p.iter().zip(&desc) {
                    prop_assert!(*b >= a - 1e-9, "{} dropped to {}", a, b);
                }
            }
            prev = Some(desc);
        }
    }

    #[test]
    fn laplacian_times_u_is_the_neighbor_difference_sum(pts in points(30), u_seed in prop::collection::vec(-1.0f64..1.0, 30)) {
        let mut g = DynamicLaplacian::new(Weighting::Gaussian);
        g.step(&pts, 4).unwrap();
        let u = &u_seed[..g.n()];
        let w = topology_vector(&g, u, 0).unwrap().w;
        let sums = neighbor_difference_sum(&g, u).unwrap();
        let dense = g.dense().matvec(u);
        for ((a, b), c) in w.iter().zip(&sums).zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((a - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn accuracy_matches_the_confusion_diagonal(pairs in prop::collection::vec((label(), label()), 1..80)) {
        let (pred, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let cm = confusion_matrix(&pred, &truth).unwrap();
        let diag: usize = (0..NUM_CLASSES).map(|c| cm[c][c]).sum();
        let acc = weighted_accuracy(&pred, &truth).unwrap();
        prop_assert!((acc - diag as f64 / truth.len() as f64).abs() < 1e-12);
        prop_assert!(superclass_accuracy(&pred, &truth).unwrap() >= acc - 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences(
        input in 1usize..5,
        hidden in 0usize..5,
        data in prop::collection::vec(-2.0f64..2.0, 24),
        seed in any::<u64>(),
    ) {
        let n = 24 / input;
        let x = Mat::from_vec(n, input, data[..n * input].to_vec());
        let targets: Vec<usize> = (0..n).map(|i| (i + seed as usize) % NUM_CLASSES).collect();
        let p = MlpParams::init(input, hidden, seed);
        let flat = p.flatten();
        let (_, g) = loss_and_gradient(&p, &x, &targets, None, 0.01);
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut a = flat.clone();
            let mut b = flat.clone();
            a[i] += h;
            b[i] -= h;
            let fa = loss_and_gradient(&p.unflatten(&a).unwrap(), &x, &targets, None, 0.01).0;
            let fb = loss_and_gradient(&p.unflatten(&b).unwrap(), &x, &targets, None, 0.01).0;
            let num = (fa - fb) / (2.0 * h);
            prop_assert!((num - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "param {}: {} vs {}", i, num, g[i]);
        }
    }
}

#[test]
fn zero_padded_columns_carry_no_signal() {
    // A spectrum narrower than k pads with zero columns. Scaling keeps them
    // zero, their weights see only the L2 pull, and they cannot move scores.
    let x = Mat::from_rows(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [-2.0, 0.0, 0.0]]);
    let scaler = Standardizer::fit(&x);
    let xs = scaler.transform(&x).unwrap();
    for i in 0..4 {
        assert_eq!(&xs.row(i)[1..], &[0.0, 0.0]);
    }
    let labels = [
        BehaviorLabel::Impatient,
        BehaviorLabel::Impatient,
        BehaviorLabel::Timid,
        BehaviorLabel::Timid,
    ];
    let l2 = 0.01;
    let m = train(
        &xs,
        &labels,
        &TrainConfig {
            hidden: 0,
            epochs: 200,
            l2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let (_, g) = loss_and_gradient(&m.params, &xs, &targets, None, l2);
    let grad = m.params.unflatten(&g).unwrap();
    for c in 0..NUM_CLASSES {
        for j in 1..3 {
            assert!((grad.w2.row(c)[j] - l2 * m.params.w2.row(c)[j]).abs() < 1e-15);
        }
    }
    let mut other = m.params.clone();
    for c in 0..NUM_CLASSES {
        other.w2.row_mut(c)[1] += 5.0;
        other.w2.row_mut(c)[2] -= 3.0;
    }
    for i in 0..4 {
        assert_eq!(m.params.forward(xs.row(i)), other.forward(xs.row(i)));
    }
}

#[test]
fn features_are_rows_of_the_eigenvector_matrix() {
    let pts: Vec<(AgentId, Point)> = (1..=12)
        .map(|i| (i, Point::new(i as f64, (i * i % 7) as f64)))
        .collect();
    let mut g = DynamicLaplacian::new(Weighting::Unweighted);
    g.step(&pts, 3).unwrap();
    let s = GraphRqi::new(SolverConfig::default().with_k(4)).spectrum(&g).unwrap();
    let f = agent_features(&s, g.agents()).unwrap();
    for i in 0..g.n() {
        assert_eq!(f.row(i), s.vectors.row(i));
    }
}

#[test]
fn scenario_generation_is_deterministic() {
    let spec = ScenarioSpec {
        n_agents: 24,
        duration: 40,
        seed: 9,
        ..ScenarioSpec::default()
    };
    let a = synth::generate(&spec).unwrap();
    let b = synth::generate(&spec).unwrap();
    assert_eq!(a.trajectories, b.trajectories);
    assert_eq!(a.labels, b.labels);
}
