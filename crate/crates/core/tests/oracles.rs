//! Library results checked against dense reference computations.

mod common;

use common::*;
use nalgebra::DMatrix;
use relprop::baselines::{ghost_weights, linbp, AffinityMatrix};
use relprop::graph::normalized_operator_apply;
use relprop::propagation::{build_prior, propagate_one_step, propagate_two_step, TwoStepOperator};
use relprop::spectral::{compute_eigenbasis, cosine_lp, cosine_similarity, similarity_apply};
use relprop::{DenseMatrix, ProjectionWeighting, PropagationConfig, SimilarityMode};

fn operator_matrix(n: usize, mut apply: impl FnMut(&DenseMatrix) -> DenseMatrix) -> DMatrix<f64> {
    from_dense(&apply(&DenseMatrix::identity(n)))
}

#[test]
fn triangle_spectrum() {
    let edges = [(0, 1), (1, 2), (0, 2)];
    let g = graph(3, &edges, false);
    let l = operator_matrix(3, |x| normalized_operator_apply(&g, x).unwrap());
    let vals = sorted_eigenvalues(&l);
    for (v, e) in vals.iter().zip([1.0, -0.5, -0.5]) {
        assert!((v - e).abs() < 1e-12, "{vals:?}");
    }
}

#[test]
fn operator_matches_dense_laplacian_on_random_graphs() {
    for seed in 0..10 {
        let n = 12 + seed as usize * 3;
        for directed in [false, true] {
            let edges = random_edges(n, 0.2, directed, seed);
            let g = graph(n, &edges, directed);
            let got = operator_matrix(n, |x| normalized_operator_apply(&g, x).unwrap());
            let want = normalized_laplacian(n, &edges, directed);
            assert!((got - want).amax() < 1e-12);
        }
    }
}

#[test]
fn laplacian_eigenvalues_lie_in_unit_interval() {
    for seed in 0..10 {
        let edges = random_edges(30, 0.15, false, seed);
        let g = graph(30, &edges, false);
        let l = operator_matrix(30, |x| normalized_operator_apply(&g, x).unwrap());
        for v in sorted_eigenvalues(&l) {
            assert!((-1.0 - 1e-10..=1.0 + 1e-10).contains(&v));
        }
    }
}

#[test]
fn two_step_operator_is_the_squared_laplacian() {
    let n = 25;
    let edges = random_edges(n, 0.2, false, 3);
    let g = graph(n, &edges, false);
    let l = normalized_laplacian(n, &edges, false);
    for beta in 1..=3u32 {
        let mut op = TwoStepOperator::new(&g, beta);
        let got = operator_matrix(n, |x| {
            let mut out = DenseMatrix::zeros(n, n);
            op.apply_into(x, &mut out);
            out
        });
        let want = (&l * &l).pow(beta);
        assert!((got - want).amax() < 1e-12);
    }
}

#[test]
fn unnormalised_iteration_reaches_closed_form() {
    let n = 20;
    let edges = random_edges(n, 0.25, false, 11);
    let g = graph(n, &edges, false);
    let labels: Vec<Option<usize>> = (0..n).map(|i| (i % 4 == 0).then_some(i % 3)).collect();
    let b = prior(&labels, 3);
    let l = normalized_laplacian(n, &edges, false);
    for alpha in [0.1, 0.5, 0.9] {
        let config = PropagationConfig {
            alpha,
            tolerance: 1e-12,
            normalize: false,
            ..PropagationConfig::default()
        };
        let f = propagate_one_step(&g, &build_prior(&assignment(&labels, 3)), &config).unwrap();
        assert!(max_abs_diff(&f.scores, &closed_form(&l, &b, alpha)) < 1e-9);
    }
}

#[test]
fn disjoint_edges_fixed_point() {
    let edges = [(0, 1), (2, 3)];
    let g = graph(4, &edges, false);
    let labels = [Some(0), None, Some(1), None];
    let config = PropagationConfig {
        alpha: 0.5,
        tolerance: 1e-13,
        ..PropagationConfig::default()
    };
    let f = propagate_one_step(&g, &build_prior(&assignment(&labels, 2)), &config).unwrap();
    let want = normalized_fixed_point(
        &normalized_laplacian(4, &edges, false),
        &prior(&labels, 2),
        0.5,
    );
    assert!(max_abs_diff(&f.scores, &want) < 1e-10);
    assert_eq!(f.predictions(), vec![0, 0, 1, 1]);
}

#[test]
fn two_step_on_complete_bipartite_graph() {
    // K_{3,3}: sides {0,1,2} and {3,4,5}
    let edges: Vec<(usize, usize)> = (0..3).flat_map(|a| (3..6).map(move |b| (a, b))).collect();
    let g = graph(6, &edges, false);
    let labels = [Some(0), None, None, Some(1), None, None];
    let config = PropagationConfig {
        alpha: 0.5,
        tolerance: 1e-13,
        ..PropagationConfig::default()
    };
    let f = propagate_two_step(&g, &build_prior(&assignment(&labels, 2)), &config).unwrap();
    let l = normalized_laplacian(6, &edges, false);
    let want = normalized_fixed_point(&(&l * &l), &prior(&labels, 2), 0.5);
    assert!(max_abs_diff(&f.scores, &want) < 1e-10);
    assert_eq!(f.predictions(), vec![0, 0, 0, 1, 1, 1]);
    assert_eq!(argmax_rows(&want), vec![0, 0, 0, 1, 1, 1]);
    // one-step propagation sends each label to the opposite side
    let one = propagate_one_step(&g, &build_prior(&assignment(&labels, 2)), &config).unwrap();
    assert_eq!(&one.predictions()[1..3], &[1, 1]);
}

fn pairwise_cosine(
    n: usize,
    edges: &[(usize, usize)],
    directed: bool,
    which: &str,
    a: usize,
    b: usize,
) -> f64 {
    let adj = adjacency(n, edges, directed);
    let sym = adj.zip_map(&adj.transpose(), f64::max);
    let set = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&c| match which {
                "undirected" => sym[(i, c)] > 0.0,
                "out" => adj[(i, c)] > 0.0,
                _ => adj[(c, i)] > 0.0,
            })
            .collect()
    };
    let (sa, sb) = (set(a), set(b));
    if sa.is_empty() || sb.is_empty() {
        return 0.0;
    }
    let common = sa.iter().filter(|c| sb.contains(c)).count();
    common as f64 / ((sa.len() * sb.len()) as f64).sqrt()
}

#[test]
fn similarity_apply_matches_pairwise_cosine() {
    for seed in 0..6 {
        let n = 15;
        for (directed, modes) in [
            (false, vec![(SimilarityMode::Undirected, "undirected")]),
            (
                true,
                vec![
                    (SimilarityMode::Undirected, "undirected"),
                    (SimilarityMode::Out, "out"),
                    (SimilarityMode::In, "in"),
                ],
            ),
        ] {
            let edges = random_edges(n, 0.2, directed, 100 + seed);
            let g = graph(n, &edges, directed);
            for (mode, name) in modes {
                let s = from_dense(&similarity_apply(&g, mode, &DenseMatrix::identity(n)).unwrap());
                let oracle = similarity(n, &edges, directed, name);
                assert!((&s - &oracle).amax() < 1e-12);
                for a in 0..n {
                    for b in 0..n {
                        let want = pairwise_cosine(n, &edges, directed, name, a, b);
                        assert!((s[(a, b)] - want).abs() < 1e-12);
                        assert!((cosine_similarity(&g, mode, a, b).unwrap() - want).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn full_basis_with_eigenvalue_weighting_reproduces_exact_similarity_iteration() {
    let n = 14;
    let edges = random_edges(n, 0.3, false, 21);
    let g = graph(n, &edges, false);
    let basis = compute_eigenbasis(&g, &[SimilarityMode::Undirected], n).unwrap();
    let labels: Vec<Option<usize>> = (0..n).map(|i| (i % 3 == 0).then_some(i % 2)).collect();
    let config = PropagationConfig {
        alpha: 0.5,
        tolerance: 1e-13,
        ..PropagationConfig::default()
    };
    let f = cosine_lp(
        &basis,
        &build_prior(&assignment(&labels, 2)),
        &config,
        ProjectionWeighting::Eigenvalue,
    )
    .unwrap();
    let s = similarity(n, &edges, false, "undirected");
    let want = normalized_fixed_point(&s, &prior(&labels, 2), 0.5);
    assert!(max_abs_diff(&f.scores, &want) < 1e-8);
}

#[test]
fn truncated_basis_reconstruction_error_matches_dropped_spectrum() {
    let n = 40;
    let edges = random_edges(n, 0.12, false, 8);
    let g = graph(n, &edges, false);
    let s = similarity(n, &edges, false, "undirected");
    let spectrum = sorted_eigenvalues(&s);
    for k in [3, 8, 15] {
        let basis = compute_eigenbasis(&g, &[SimilarityMode::Undirected], k).unwrap();
        let phi = from_dense(&basis.phi);
        let lambda =
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(basis.eigenvalues.clone()));
        let err = (&s - &phi * lambda * phi.transpose()).norm();
        let bound = spectrum[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= bound * (1.0 + 1e-6) + 1e-8, "k={k}: {err} > {bound}");
        for (got, want) in basis.eigenvalues.iter().zip(&spectrum) {
            assert!((got - want).abs() < 1e-7);
        }
        let gram = phi.transpose() * &phi;
        assert!((gram - DMatrix::identity(k, k)).amax() < 1e-8);
    }
}

#[test]
fn directed_basis_blocks_match_each_similarity_matrix() {
    let n = 30;
    let edges = random_edges(n, 0.1, true, 5);
    let g = graph(n, &edges, true);
    let modes = [
        SimilarityMode::Undirected,
        SimilarityMode::Out,
        SimilarityMode::In,
    ];
    let basis = compute_eigenbasis(&g, &modes, 5).unwrap();
    for (m, name) in ["undirected", "out", "in"].iter().enumerate() {
        let spectrum = sorted_eigenvalues(&similarity(n, &edges, true, name));
        for j in 0..5 {
            assert!((basis.eigenvalues[m * 5 + j] - spectrum[j]).abs() < 1e-7);
        }
    }
}

/// `vec(F̂)` solved directly from the linear fixed point, column-major.
fn linbp_closed_form(a: &DMatrix<f64>, b_hat: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let l = h.nrows();
    let d = DMatrix::from_diagonal(&a.row_sum_tr());
    let op = h.transpose().kronecker(a) - (h * h).transpose().kronecker(&d);
    let lhs = DMatrix::identity(n * l, n * l) - op;
    let rhs = DMatrix::from_column_slice(n * l, 1, b_hat.as_slice());
    let x = lhs.lu().solve(&rhs).unwrap();
    DMatrix::from_column_slice(n, l, x.as_slice())
}

#[test]
fn linbp_matches_linear_system_solution() {
    let n = 24;
    let edges = random_edges(n, 0.15, false, 77);
    let g = graph(n, &edges, false);
    let labels: Vec<Option<usize>> = (0..n).map(|i| (i % 4 == 1).then_some(i % 3)).collect();
    let raw = DenseMatrix::from_rows(&[
        vec![0.1, 0.8, 0.2],
        vec![0.8, 0.1, 0.3],
        vec![0.2, 0.3, 0.6],
    ]);
    let h = AffinityMatrix::centred(&raw).unwrap().scaled_for(&g);
    let f = linbp(&g, &assignment(&labels, 3), &h, 1e-14, 10_000).unwrap();
    let b_hat = prior(&labels, 3).map(|v| v - 1.0 / 3.0);
    let sol = linbp_closed_form(
        &adjacency(n, &edges, false),
        &b_hat,
        &from_dense(&h.matrix()),
    );
    let mut want = sol.map(|v| (v + 1.0 / 3.0).max(0.0));
    for mut row in want.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    assert!(max_abs_diff(&f.scores, &want) < 1e-9);
}

#[test]
fn ghost_weights_match_restart_solve() {
    let n = 20;
    let mut edges = random_edges(n, 0.2, false, 9);
    // a ring keeps every node reachable and non-dangling
    edges.extend((0..n).map(|i| (i, (i + 1) % n)));
    let g = graph(n, &edges, false);
    let a = adjacency(n, &edges, false);
    let p = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / a.row(i).sum());
    let c = 0.15;
    for source in [0, 7] {
        let w = ghost_weights(&g, source, c).unwrap();
        let lhs = (DMatrix::identity(n, n) - (&p * &p) * (1.0 - c)).transpose();
        let mut e = DMatrix::zeros(n, 1);
        e[(source, 0)] = c;
        let want = lhs.lu().solve(&e).unwrap();
        for i in 0..n {
            assert!((w[i] - want[(i, 0)]).abs() < 1e-10);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
