//! Cosine (common-neighbour) similarity and low-rank cosine label
//! propagation.
//!
//! The similarity matrices are never formed. Each is `N Nᵀ` for a scaled
//! adjacency `N`, so `S·X` costs two sparse products:
//!
//! | mode       | `S`                          | product order        |
//! |------------|------------------------------|----------------------|
//! | undirected | `D^{-1/2} A A D^{-1/2}`      | `A` then `A`         |
//! | out        | `D_→^{-1/2} A Aᵀ D_→^{-1/2}` | `Aᵀ` then `A`        |
//! | in         | `D_←^{-1/2} Aᵀ A D_←^{-1/2}` | `A` then `Aᵀ`        |
//!
//! For directed graphs the undirected mode uses `max(A, Aᵀ)`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{check_rows, inv_sqrt_degrees, AdjacencyView, SparseGraph};
use crate::propagation::{iterate_with_operator, PriorMatrix, PropagationConfig, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    Undirected,
    Out,
    In,
}

impl SimilarityMode {
    fn code(self) -> u8 {
        match self {
            SimilarityMode::Undirected => 0,
            SimilarityMode::Out => 1,
            SimilarityMode::In => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(SimilarityMode::Undirected),
            1 => Ok(SimilarityMode::Out),
            2 => Ok(SimilarityMode::In),
            _ => Err(Error::validation(format!(
                "unknown similarity mode code {code}"
            ))),
        }
    }

    /// The adjacency whose rows are compared (common neighbours are taken
    /// in this view).
    fn neighbour_view(self) -> AdjacencyView {
        match self {
            SimilarityMode::Undirected => AdjacencyView::Symmetric,
            SimilarityMode::Out => AdjacencyView::Out,
            SimilarityMode::In => AdjacencyView::In,
        }
    }

    /// The view applied first in `S·X`; it is the transpose of the
    /// neighbour view.
    fn inner_view(self) -> AdjacencyView {
        match self {
            SimilarityMode::Undirected => AdjacencyView::Symmetric,
            SimilarityMode::Out => AdjacencyView::In,
            SimilarityMode::In => AdjacencyView::Out,
        }
    }

    fn check(self, graph: &SparseGraph) -> Result<()> {
        if self != SimilarityMode::Undirected && !graph.is_directed() {
            return Err(Error::validation(format!(
                "similarity mode '{self}' requires a directed graph"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SimilarityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityMode::Undirected => "undirected",
            SimilarityMode::Out => "out",
            SimilarityMode::In => "in",
        })
    }
}

impl FromStr for SimilarityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "undirected" => Ok(SimilarityMode::Undirected),
            "out" => Ok(SimilarityMode::Out),
            "in" => Ok(SimilarityMode::In),
            _ => Err(Error::validation(format!("unknown similarity mode '{s}'"))),
        }
    }
}

fn count_common(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Cosine similarity of the neighbour sets of `a` and `b`:
/// `|N(a) ∩ N(b)| / √(|N(a)|·|N(b)|)`, or 0 if either set is empty.
pub fn cosine_similarity(
    graph: &SparseGraph,
    mode: SimilarityMode,
    a: usize,
    b: usize,
) -> Result<f64> {
    mode.check(graph)?;
    let n = graph.num_nodes();
    if a >= n || b >= n {
        return Err(Error::validation(format!("node outside [0, {n})")));
    }
    let view = mode.neighbour_view();
    let (na, nb) = (graph.neighbours_in(view, a), graph.neighbours_in(view, b));
    if na.is_empty() || nb.is_empty() {
        return Ok(0.0);
    }
    let common = count_common(na, nb) as f64;
    Ok(common / ((na.len() * nb.len()) as f64).sqrt())
}

/// Applies one similarity matrix without forming it.
pub struct SimilarityOperator<'g> {
    graph: &'g SparseGraph,
    mode: SimilarityMode,
    inv_sqrt: Vec<f64>,
    scratch: DenseMatrix,
}

impl<'g> SimilarityOperator<'g> {
    pub fn new(graph: &'g SparseGraph, mode: SimilarityMode) -> Result<Self> {
        mode.check(graph)?;
        Ok(SimilarityOperator {
            graph,
            mode,
            inv_sqrt: inv_sqrt_degrees(graph, mode.neighbour_view()),
            scratch: DenseMatrix::zeros(0, 0),
        })
    }

    pub fn apply_into(&mut self, x: &DenseMatrix, out: &mut DenseMatrix) {
        if self.scratch.rows() != x.rows() || self.scratch.cols() != x.cols() {
            self.scratch = DenseMatrix::zeros(x.rows(), x.cols());
        }
        self.graph.scaled_spmm(
            self.mode.inner_view(),
            None,
            Some(&self.inv_sqrt),
            x,
            &mut self.scratch,
        );
        self.graph.scaled_spmm(
            self.mode.neighbour_view(),
            Some(&self.inv_sqrt),
            None,
            &self.scratch,
            out,
        );
    }

    pub fn apply(&mut self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows(x, self.graph.num_nodes())?;
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        self.apply_into(x, &mut out);
        Ok(out)
    }
}

/// `S·X` for the given mode.
pub fn similarity_apply(
    graph: &SparseGraph,
    mode: SimilarityMode,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    SimilarityOperator::new(graph, mode)?.apply(x)
}

/// Nodes reachable by a walk of exactly two undirected steps from `b`
/// (including `b` itself when it has a neighbour). Every node structurally
/// equivalent to `b` is in this set.
pub fn neighbours_of_neighbours(graph: &SparseGraph, b: usize) -> Vec<usize> {
    let mut seen = vec![false; graph.num_nodes()];
    for &c in graph.neighbours(b) {
        for &d in graph.neighbours(c as usize) {
            seen[d as usize] = true;
        }
    }
    seen.iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Stop when every tracked eigenvalue estimate changes by less than
    /// this, relative to its magnitude.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Extra block columns carried to speed up convergence.
    pub oversample: usize,
    /// Seed for the random starting block.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tolerance: 1e-8,
            max_iterations: 500,
            oversample: 10,
            seed: 0x5e_ed0f_e16e,
        }
    }
}

/// Leading eigenvectors of one or more similarity matrices, one block of
/// `k` orthonormal columns per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub phi: DenseMatrix,
    /// Eigenvalue estimates, non-increasing within each mode block.
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<SimilarityMode>,
    pub k: usize,
    /// False if any mode hit the iteration cap.
    pub converged: bool,
}

impl EigenBasis {
    pub fn num_nodes(&self) -> usize {
        self.phi.rows()
    }

    /// The columns belonging to `mode_index`.
    pub fn block(&self, mode_index: usize) -> DenseMatrix {
        let cols: Vec<usize> = (mode_index * self.k..(mode_index + 1) * self.k).collect();
        self.phi.select_columns(&cols)
    }

    /// Keeps the leading `k` columns of every mode block.
    pub fn truncated(&self, k: usize) -> Result<EigenBasis> {
        if k == 0 || k > self.k {
            return Err(Error::validation(format!(
                "cannot truncate a k = {} basis to k = {k}",
                self.k
            )));
        }
        let cols: Vec<usize> = (0..self.modes.len())
            .flat_map(|m| m * self.k..m * self.k + k)
            .collect();
        Ok(EigenBasis {
            phi: self.phi.select_columns(&cols),
            eigenvalues: cols.iter().map(|&c| self.eigenvalues[c]).collect(),
            modes: self.modes.clone(),
            k,
            converged: self.converged,
        })
    }

    /// Writes `Φ W Φᵀ x` into `out`, with `W` from the weighting.
    pub fn project_into(
        &self,
        weighting: ProjectionWeighting,
        x: &DenseMatrix,
        out: &mut DenseMatrix,
    ) {
        let mut coeffs = self.phi.transpose_matmul(x);
        if weighting == ProjectionWeighting::Eigenvalue {
            for (j, &lam) in self.eigenvalues.iter().enumerate() {
                coeffs.row_mut(j).iter_mut().for_each(|v| *v *= lam);
            }
        }
        let cols = x.cols();
        for i in 0..self.phi.rows() {
            let row = &mut out.as_mut_slice()[i * cols..(i + 1) * cols];
            row.fill(0.0);
            for (j, &p) in self.phi.row(i).iter().enumerate() {
                for (o, &c) in row.iter_mut().zip(coeffs.row(j)) {
                    *o += p * c;
                }
            }
        }
    }

    /// Serialises as little-endian: magic `RPEB`, version, `n`, `v`, `k`,
    /// mode codes, converged flag, eigenvalues, then `Φ` row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BASIS_MAGIC)?;
        w.write_all(&BASIS_VERSION.to_le_bytes())?;
        w.write_all(&(self.phi.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.modes.len() as u32).to_le_bytes())?;
        w.write_all(&(self.k as u64).to_le_bytes())?;
        for m in &self.modes {
            w.write_all(&[m.code()])?;
        }
        w.write_all(&[u8::from(self.converged)])?;
        for v in self.eigenvalues.iter().chain(self.phi.as_slice()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<EigenBasis> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BASIS_MAGIC {
            return Err(Error::validation("not an eigenbasis file"));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != BASIS_VERSION {
            return Err(Error::validation(format!(
                "unsupported eigenbasis version {version}"
            )));
        }
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let v = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let k = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let modes = (0..v)
            .map(|_| SimilarityMode::from_code(read_array::<1, _>(&mut r)?[0]))
            .collect::<Result<Vec<_>>>()?;
        let converged = read_array::<1, _>(&mut r)?[0] != 0;
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| Ok(f64::from_le_bytes(read_array(&mut r)?)))
                .collect()
        };
        let eigenvalues = read_f64s(v * k)?;
        let phi = DenseMatrix::from_vec(n, v * k, read_f64s(n * v * k)?)?;
        Ok(EigenBasis {
            phi,
            eigenvalues,
            modes,
            k,
            converged,
        })
    }
}

const BASIS_MAGIC: &[u8; 4] = b"RPEB";
const BASIS_VERSION: u32 = 1;

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// How eigenvectors are combined into the propagation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionWeighting {
    /// `Φ Φᵀ`: orthogonal projection onto the leading eigenspace.
    #[default]
    Unit,
    /// `Φ Λ Φᵀ`: the rank-k approximation of `S` (summed over modes).
    Eigenvalue,
}

/// Top-`k` eigenpairs of each requested similarity matrix by block
/// subspace iteration with Rayleigh-Ritz extraction.
pub fn compute_eigenbasis(
    graph: &SparseGraph,
    modes: &[SimilarityMode],
    k: usize,
) -> Result<EigenBasis> {
    compute_eigenbasis_with(graph, modes, k, &EigenOptions::default())
}

pub fn compute_eigenbasis_with(
    graph: &SparseGraph,
    modes: &[SimilarityMode],
    k: usize,
    options: &EigenOptions,
) -> Result<EigenBasis> {
    let n = graph.num_nodes();
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if k > n {
        return Err(Error::validation(format!(
            "k = {k} exceeds the node count {n}"
        )));
    }
    if modes.is_empty() {
        return Err(Error::validation(
            "at least one similarity mode is required",
        ));
    }
    let mut phi = DenseMatrix::zeros(n, modes.len() * k);
    let mut eigenvalues = Vec::with_capacity(modes.len() * k);
    let mut converged = true;
    for (m, &mode) in modes.iter().enumerate() {
        let mut op = SimilarityOperator::new(graph, mode)?;
        let seed = options.seed.wrapping_add(u64::from(mode.code()));
        let (vectors, values, ok) = subspace_iteration(&mut op, n, k, options, seed);
        converged &= ok;
        for i in 0..n {
            phi.row_mut(i)[m * k..(m + 1) * k].copy_from_slice(&vectors.row(i)[..k]);
        }
        eigenvalues.extend_from_slice(&values[..k]);
    }
    Ok(EigenBasis {
        phi,
        eigenvalues,
        modes: modes.to_vec(),
        k,
        converged,
    })
}

fn subspace_iteration(
    op: &mut SimilarityOperator<'_>,
    n: usize,
    k: usize,
    options: &EigenOptions,
    seed: u64,
) -> (DenseMatrix, Vec<f64>, bool) {
    let block = (k + options.oversample).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DenseMatrix::zeros(n, block);
    q.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = rng.random::<f64>() - 0.5);
    orthonormalize_columns(&mut q);

    let mut y = DenseMatrix::zeros(n, block);
    let mut previous: Option<Vec<f64>> = None;
    let mut ritz = q.clone();
    let mut values = vec![0.0; block];
    for _ in 0..options.max_iterations.max(1) {
        op.apply_into(&q, &mut y);
        let mut t = q.transpose_matmul(&y);
        symmetrize(&mut t);
        let (theta, v) = symmetric_eigen(&t);
        ritz = q.matmul(&v);
        values = theta;
        let done = previous.as_ref().is_some_and(|prev| {
            let scale = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            (0..k).all(|i| {
                let floor = 1e-10 * scale;
                (values[i] - prev[i]).abs() <= options.tolerance * values[i].abs().max(floor)
            })
        });
        if done {
            return (ritz, values, true);
        }
        previous = Some(values.clone());
        q = y.matmul(&v);
        orthonormalize_columns(&mut q);
    }
    (ritz, values, false)
}

fn symmetrize(t: &mut DenseMatrix) {
    for i in 0..t.rows() {
        for j in 0..i {
            let avg = 0.5 * (t[(i, j)] + t[(j, i)]);
            t[(i, j)] = avg;
            t[(j, i)] = avg;
        }
    }
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass. Columns that
/// collapse (rank deficiency) are replaced by the first coordinate vector
/// that still has a usable component outside the span so far.
pub(crate) fn orthonormalize_columns(m: &mut DenseMatrix) {
    let (n, b) = (m.rows(), m.cols());
    let mut cols: Vec<Vec<f64>> = (0..b).map(|j| m.column(j)).collect();
    let mut next_fill = 0usize;
    for j in 0..b {
        let original = norm(&cols[j]);
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for _ in 0..2 {
            for prev in done.iter() {
                let d = dot(prev, col);
                col.iter_mut().zip(prev).for_each(|(c, p)| *c -= d * p);
            }
        }
        let mut len = norm(col);
        while !(original > 0.0 && len > 1e-10 * original) && next_fill < n {
            col.fill(0.0);
            col[next_fill] = 1.0;
            next_fill += 1;
            for _ in 0..2 {
                for prev in done.iter() {
                    let d = dot(prev, col);
                    col.iter_mut().zip(prev).for_each(|(c, p)| *c -= d * p);
                }
            }
            len = norm(col);
            if len > 1e-3 {
                break;
            }
        }
        col.iter_mut().for_each(|c| *c /= len);
    }
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
/// Returns eigenvalues in non-increasing order and the matching
/// eigenvectors as columns.
pub(crate) fn symmetric_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.rows();
    let mut a = a.clone();
    let mut v = DenseMatrix::identity(n);
    let total = a.frobenius_norm();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || total == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[(p, r)], a[(q, r)]);
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                for r in 0..n {
                    let (vrp, vrq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    (values, v.select_columns(&order))
}

/// Cosine label propagation with the operator `Φ W Φᵀ`.
pub fn cosine_lp(
    basis: &EigenBasis,
    prior: &PriorMatrix,
    config: &PropagationConfig,
    weighting: ProjectionWeighting,
) -> Result<ScoreMatrix> {
    check_rows(prior.matrix(), basis.num_nodes())?;
    iterate_with_operator(prior, config, |x, out| {
        basis.project_into(weighting, x, out)
    })
}
