//! Dense reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relprop::{DenseMatrix, Directedness, LabelAssignment, SparseGraph};

/// Edge list of an Erdős–Rényi style graph with no self-loops.
pub fn random_edges(n: usize, p: f64, directed: bool, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b || (!directed && b < a) {
                continue;
            }
            if rng.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    edges
}

pub fn graph(n: usize, edges: &[(usize, usize)], directed: bool) -> SparseGraph {
    let d = if directed {
        Directedness::Directed
    } else {
        Directedness::Undirected
    };
    SparseGraph::from_edges(n, d, edges.iter().copied()).unwrap()
}

/// Dense 0/1 adjacency `A[a][b] = 1` for each arc; both directions when undirected.
pub fn adjacency(n: usize, edges: &[(usize, usize)], directed: bool) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for &(x, y) in edges {
        if x == y {
            continue;
        }
        a[(x, y)] = 1.0;
        if !directed {
            a[(y, x)] = 1.0;
        }
    }
    a
}

fn inv_sqrt(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v.sqrt()
    } else {
        0.0
    }
}

/// `D^{-1/2} A D^{-1/2}` over `max(A, Aᵀ)`.
pub fn normalized_laplacian(n: usize, edges: &[(usize, usize)], directed: bool) -> DMatrix<f64> {
    let a = adjacency(n, edges, directed);
    let sym = a.zip_map(&a.transpose(), f64::max);
    let d: Vec<f64> = (0..n).map(|i| inv_sqrt(sym.row(i).sum())).collect();
    DMatrix::from_fn(n, n, |i, j| d[i] * sym[(i, j)] * d[j])
}

/// Similarity matrices: `which` is "undirected", "out" or "in".
pub fn similarity(n: usize, edges: &[(usize, usize)], directed: bool, which: &str) -> DMatrix<f64> {
    let a = adjacency(n, edges, directed);
    let (s, deg): (DMatrix<f64>, Vec<f64>) = match which {
        "undirected" => {
            let sym = a.zip_map(&a.transpose(), f64::max);
            let deg = (0..n).map(|i| sym.row(i).sum()).collect();
            (&sym * &sym, deg)
        }
        "out" => (&a * a.transpose(), (0..n).map(|i| a.row(i).sum()).collect()),
        "in" => (
            a.transpose() * &a,
            (0..n).map(|i| a.column(i).sum()).collect(),
        ),
        _ => unreachable!(),
    };
    let d: Vec<f64> = deg.into_iter().map(inv_sqrt).collect();
    DMatrix::from_fn(n, n, |i, j| d[i] * s[(i, j)] * d[j])
}

/// Eigenvalues in non-increasing order.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// One-hot rows for labelled nodes, uniform rows otherwise.
pub fn prior(labels: &[Option<usize>], classes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), classes, |i, c| match labels[i] {
        Some(l) => f64::from(u8::from(l == c)),
        None => 1.0 / classes as f64,
    })
}

pub fn assignment(labels: &[Option<usize>], classes: usize) -> LabelAssignment {
    LabelAssignment::from_labels(classes, labels.to_vec()).unwrap()
}

/// `(1-α)(I - αM)^{-1} B` by LU solve.
pub fn closed_form(m: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let lhs = DMatrix::identity(n, n) - m * alpha;
    lhs.lu().solve(&(b * (1.0 - alpha))).expect("nonsingular")
}

/// The row-normalised update iterated to a fixed point, densely.
pub fn normalized_fixed_point(m: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let mut f = b.clone();
    for _ in 0..100_000 {
        let mut next = b * (1.0 - alpha) + m * &f * alpha;
        for mut row in next.row_iter_mut() {
            let s = row.sum();
            if s > 1e-15 {
                row /= s;
            } else {
                row.fill(1.0 / b.ncols() as f64);
            }
        }
        let change = (&next - &f).amax();
        f = next;
        if change < 1e-14 {
            break;
        }
    }
    f
}

pub fn to_dense(m: &DMatrix<f64>) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    DenseMatrix::from_rows(&rows)
}

pub fn from_dense(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DMatrix<f64>) -> f64 {
    (from_dense(a) - b).amax()
}

pub fn argmax_rows(m: &DMatrix<f64>) -> Vec<usize> {
    m.row_iter()
        .map(|r| {
            let mut best = 0;
            for c in 1..r.len() {
                if r[c] > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
