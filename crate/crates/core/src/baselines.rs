//! Comparison methods: linearised belief propagation and ghost edges.

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyView, LabelAssignment, SparseGraph};
use crate::propagation::{build_prior, normalize_rows, ScoreMatrix};
use crate::sbm::BlockModelSpec;
use crate::spectral::symmetric_eigen;

/// Entries above this magnitude abort linBP as divergent.
const DIVERGENCE_LIMIT: f64 = 1e12;
/// Bound on the linBP update's operator norm after scaling.
const LINBP_SCALE_TARGET: f64 = 0.9;

/// Residual class affinities for linBP. The effective matrix is
/// `scale · h`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    h: DenseMatrix,
    scale: f64,
}

impl AffinityMatrix {
    /// Wraps `h` as-is (no centring, unit scale).
    pub fn new(h: DenseMatrix) -> Result<Self> {
        if h.rows() != h.cols() {
            return Err(Error::validation("affinity matrix must be square"));
        }
        Ok(AffinityMatrix { h, scale: 1.0 })
    }

    /// Double-centres `raw` so that every row and column sums to zero.
    /// Entries that are zero up to rounding are snapped to exactly zero.
    pub fn centred(raw: &DenseMatrix) -> Result<Self> {
        let mut h = Self::new(raw.clone())?.h;
        let l = h.rows();
        let lf = l as f64;
        let row_mean: Vec<f64> = (0..l).map(|i| h.row(i).iter().sum::<f64>() / lf).collect();
        let col_mean: Vec<f64> = (0..l)
            .map(|j| h.column(j).iter().sum::<f64>() / lf)
            .collect();
        let grand = row_mean.iter().sum::<f64>() / lf;
        for i in 0..l {
            for j in 0..l {
                h[(i, j)] += grand - row_mean[i] - col_mean[j];
            }
        }
        let snap = 1e-12 * raw.max_abs();
        h.as_mut_slice().iter_mut().for_each(|v| {
            if v.abs() <= snap {
                *v = 0.0;
            }
        });
        Ok(AffinityMatrix { h, scale: 1.0 })
    }

    /// The centred identity `I − J/ℓ`.
    pub fn centred_identity(num_classes: usize) -> Self {
        Self::centred(&DenseMatrix::identity(num_classes)).expect("square")
    }

    pub fn num_classes(&self) -> usize {
        self.h.rows()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The unscaled (centred) affinities.
    pub fn unscaled(&self) -> &DenseMatrix {
        &self.h
    }

    /// `scale · h`.
    pub fn matrix(&self) -> DenseMatrix {
        let mut m = self.h.clone();
        m.scale(self.scale);
        m
    }

    /// Rescales so that the linBP update is a contraction. With
    /// `x = s‖H‖₂`, the update's operator norm is at most
    /// `c·x·ρ(A) + x²·e`, where `c = 1` and `e = max degree` on undirected
    /// graphs, `c = 2` and `e = max out-degree + max in-degree` on directed
    /// ones; `s` makes that bound 0.9. `ρ(A)` is a power-method estimate.
    pub fn scaled_for(&self, graph: &SparseGraph) -> AffinityMatrix {
        let norm = spectral_norm(&self.h);
        let rho = adjacency_spectral_radius(graph);
        let degrees = graph.degrees();
        let max = |v: &[usize]| v.iter().copied().max().unwrap_or(0) as f64;
        let (c, e) = if graph.is_directed() {
            (2.0, max(&degrees.out) + max(&degrees.inc))
        } else {
            (1.0, max(&degrees.undirected))
        };
        let b = c * rho;
        let x = if e > 0.0 {
            // positive root of e·x² + b·x − target, in a cancellation-free form
            2.0 * LINBP_SCALE_TARGET / (b + (b * b + 4.0 * e * LINBP_SCALE_TARGET).sqrt())
        } else {
            0.0
        };
        AffinityMatrix {
            h: self.h.clone(),
            scale: if norm > 0.0 { x / norm } else { 0.0 },
        }
    }
}

fn spectral_norm(h: &DenseMatrix) -> f64 {
    let (vals, _) = symmetric_eigen(&h.transpose_matmul(h));
    vals.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Power-method estimate of the largest eigenvalue of `max(A, Aᵀ)`.
pub fn adjacency_spectral_radius(graph: &SparseGraph) -> f64 {
    let n = graph.num_nodes();
    if n == 0 || graph.num_edges() == 0 {
        return 0.0;
    }
    let mut x = DenseMatrix::filled(n, 1, 1.0 / (n as f64).sqrt());
    let mut y = DenseMatrix::zeros(n, 1);
    let mut estimate = 0.0;
    for _ in 0..1000 {
        // Shift by I so bipartite graphs (eigenvalues ±ρ) still converge.
        graph.scaled_spmm(AdjacencyView::Symmetric, None, None, &x, &mut y);
        for (yv, &xv) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *yv += xv;
        }
        let len = y.frobenius_norm();
        if len == 0.0 {
            return 0.0;
        }
        let next = len - 1.0;
        y.scale(1.0 / len);
        std::mem::swap(&mut x, &mut y);
        if (next - estimate).abs() <= 1e-6 * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Affinities implied by a block model: the class-marginal link density,
/// double-centred. Call [`AffinityMatrix::scaled_for`] before use.
pub fn derive_affinity_from_blocks(spec: &BlockModelSpec) -> Result<AffinityMatrix> {
    spec.validate()?;
    AffinityMatrix::centred(&spec.class_density())
}

/// Linearised belief propagation on centred beliefs:
///
/// ```text
/// F̂ ← B̂ + A F̂ H − D F̂ H²                                  (undirected)
/// F̂ ← B̂ + A F̂ Hᵀ + Aᵀ F̂ H − D_→ F̂ H Hᵀ − D_← F̂ Hᵀ H         (directed)
/// ```
///
/// with `B̂ = B − 1/ℓ` and `F̂_0 = B̂`. Returns `F̂ + 1/ℓ` clipped at zero
/// and row-normalised, which preserves the argmax.
pub fn linbp(
    graph: &SparseGraph,
    labels: &LabelAssignment,
    affinity: &AffinityMatrix,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ScoreMatrix> {
    let l = labels.num_classes();
    if affinity.num_classes() != l {
        return Err(Error::DimensionMismatch {
            expected: format!("{l}x{l} affinity matrix"),
            actual: format!("{0}x{0}", affinity.num_classes()),
        });
    }
    if labels.num_nodes() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} nodes", graph.num_nodes()),
            actual: format!("{} labels", labels.num_nodes()),
        });
    }
    if !(tolerance > 0.0) || max_iterations == 0 {
        return Err(Error::validation(
            "tolerance must be positive and max_iterations ≥ 1",
        ));
    }
    let n = graph.num_nodes();
    let h = affinity.matrix();
    let ht = h.transpose();
    let mut b_hat = build_prior(labels).matrix().clone();
    b_hat
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v -= 1.0 / l as f64);

    let directed = graph.is_directed();
    let echo_out = if directed {
        h.matmul(&ht)
    } else {
        h.matmul(&h)
    };
    let echo_in = ht.matmul(&h);
    let degrees = graph.degrees();

    let mut f = b_hat.clone();
    let mut next = DenseMatrix::zeros(n, l);
    let mut msg = DenseMatrix::zeros(n, l);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        if directed {
            graph.scaled_spmm(AdjacencyView::Out, None, None, &f, &mut msg);
            let out_part = msg.matmul(&ht);
            graph.scaled_spmm(AdjacencyView::In, None, None, &f, &mut msg);
            let in_part = msg.matmul(&h);
            let echo_o = f.matmul(&echo_out);
            let echo_i = f.matmul(&echo_in);
            for i in 0..n {
                let (dout, din) = (degrees.out[i] as f64, degrees.inc[i] as f64);
                for c in 0..l {
                    next[(i, c)] = b_hat[(i, c)] + out_part[(i, c)] + in_part[(i, c)]
                        - dout * echo_o[(i, c)]
                        - din * echo_i[(i, c)];
                }
            }
        } else {
            graph.scaled_spmm(AdjacencyView::Symmetric, None, None, &f, &mut msg);
            let prop = msg.matmul(&h);
            let echo = f.matmul(&echo_out);
            for i in 0..n {
                let d = degrees.undirected[i] as f64;
                for c in 0..l {
                    next[(i, c)] = b_hat[(i, c)] + prop[(i, c)] - d * echo[(i, c)];
                }
            }
        }
        let magnitude = next.max_abs();
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence {
                iterations,
                magnitude,
            });
        }
        let change = next.max_abs_diff(&f);
        std::mem::swap(&mut f, &mut next);
        if change < tolerance {
            converged = true;
            break;
        }
    }

    let uniform = 1.0 / l as f64;
    f.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = (*v + uniform).max(0.0));
    normalize_rows(&mut f);
    Ok(ScoreMatrix {
        scores: f,
        iterations,
        converged,
    })
}

/// linBP with the centred identity affinity, scaled for this graph.
pub fn linbp_identity(
    graph: &SparseGraph,
    labels: &LabelAssignment,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ScoreMatrix> {
    let h = AffinityMatrix::centred_identity(labels.num_classes()).scaled_for(graph);
    linbp(graph, labels, &h, tolerance, max_iterations)
}

/// Random walk with restart over the two-step transition `P²`
/// (`P = D⁻¹A` on the symmetrised graph), restarting at `source`.
/// Mass reaching an isolated node returns to the source, so the result
/// always sums to one.
pub fn ghost_weights(graph: &SparseGraph, source: usize, restart_prob: f64) -> Result<Vec<f64>> {
    let n = graph.num_nodes();
    if source >= n {
        return Err(Error::validation(format!(
            "source {source} outside [0, {n})"
        )));
    }
    if !(restart_prob > 0.0 && restart_prob <= 1.0) {
        return Err(Error::validation(format!(
            "restart probability {restart_prob} outside (0, 1]"
        )));
    }
    let deg: Vec<f64> = (0..n).map(|i| graph.neighbours(i).len() as f64).collect();
    let step = |r: &[f64], out: &mut [f64]| -> f64 {
        // out = r P; returns mass that hit a dangling node
        let mut lost = 0.0;
        for j in 0..n {
            out[j] = graph
                .neighbours(j)
                .iter()
                .map(|&i| r[i as usize] / deg[i as usize])
                .sum();
            if deg[j] == 0.0 {
                lost += r[j];
            }
        }
        lost
    };
    let mut r = vec![0.0; n];
    r[source] = 1.0;
    let mut half = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..100_000 {
        let lost1 = step(&r, &mut half);
        let lost2 = step(&half, &mut next);
        let keep = 1.0 - restart_prob;
        next.iter_mut().for_each(|v| *v *= keep);
        next[source] += restart_prob + keep * (lost1 + lost2);
        let change: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut r, &mut next);
        if change < 1e-13 {
            break;
        }
    }
    Ok(r)
}

/// Ghost-edge classification: each unlabelled node scores class `c` by the
/// summed even-step restart weights from labelled nodes of class `c`.
/// Labelled rows keep their one-hot prior.
pub fn ghost_edges_classify(
    graph: &SparseGraph,
    labels: &LabelAssignment,
    restart_prob: f64,
) -> Result<ScoreMatrix> {
    let sources = labels.labelled();
    if sources.is_empty() {
        return Err(Error::validation(
            "ghost edges need at least one labelled node",
        ));
    }
    if labels.num_nodes() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} nodes", graph.num_nodes()),
            actual: format!("{} labels", labels.num_nodes()),
        });
    }
    let l = labels.num_classes();
    let n = graph.num_nodes();
    let mut scores = DenseMatrix::zeros(n, l);
    let chunk = 2 * rayon::current_num_threads().max(1);
    for batch in sources.chunks(chunk) {
        let weights: Vec<Vec<f64>> = batch
            .par_iter()
            .map(|&s| ghost_weights(graph, s, restart_prob))
            .collect::<Result<_>>()?;
        for (&s, w) in batch.iter().zip(&weights) {
            let c = labels.label(s).expect("labelled");
            for (i, &wi) in w.iter().enumerate() {
                scores[(i, c)] += wi;
            }
        }
    }
    let prior = build_prior(labels);
    for &s in &sources {
        scores.row_mut(s).copy_from_slice(prior.matrix().row(s));
    }
    normalize_rows(&mut scores);
    Ok(ScoreMatrix {
        scores,
        iterations: sources.len(),
        converged: true,
    })
}
