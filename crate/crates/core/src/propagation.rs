//! Label propagation engines.
//!
//! Every method here iterates
//!
//! ```text
//! F_{t+1} = Z⁻¹ ((1 − α) B + α · M F_t),   F_0 = B
//! ```
//!
//! for some linear operator `M` (`L`, `(LL)^β`, a low-rank similarity, …)
//! where `Z⁻¹` rescales each row to sum to one. Iteration stops when the
//! largest entrywise change drops below the tolerance or the iteration cap
//! is reached.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{
    check_rows, inv_sqrt_degrees, AdjacencyView, LabelAssignment, NormalizedOperator, SparseGraph,
};

/// Row sums at or below this are treated as empty and reset to uniform.
const EMPTY_ROW: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    /// Weight on the propagated term, in `[0, 1]`.
    pub alpha: f64,
    /// Number of two-step applications per iteration (two-step LP only).
    pub beta: u32,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Apply the row normalisation `Z⁻¹`. Disabling it gives the linear
    /// iteration whose limit is `(1 − α)(I − αM)⁻¹ B`.
    pub normalize: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            alpha: 0.1,
            beta: 1,
            tolerance: 1e-6,
            max_iterations: 1000,
            normalize: true,
        }
    }
}

impl PropagationConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        PropagationConfig {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::validation(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.beta == 0 {
            return Err(Error::validation("beta must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Prior class scores: one-hot rows for labelled nodes, uniform `1/ℓ`
/// rows otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatrix(DenseMatrix);

impl PriorMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.cols()
    }

    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    /// Applies a class permutation `c ↦ perm[c]` to the columns.
    pub fn with_columns_permuted(&self, perm: &[usize]) -> PriorMatrix {
        let mut inverse = vec![0; perm.len()];
        for (c, &p) in perm.iter().enumerate() {
            inverse[p] = c;
        }
        PriorMatrix(self.0.select_columns(&inverse))
    }
}

pub fn build_prior(labels: &LabelAssignment) -> PriorMatrix {
    let (n, l) = (labels.num_nodes(), labels.num_classes());
    let mut b = DenseMatrix::filled(n, l, 1.0 / l as f64);
    for i in 0..n {
        if let Some(c) = labels.label(i) {
            let row = b.row_mut(i);
            row.fill(0.0);
            row[c] = 1.0;
        }
    }
    PriorMatrix(b)
}

/// Converged (or capped) class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub scores: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
}

impl ScoreMatrix {
    pub fn num_nodes(&self) -> usize {
        self.scores.rows()
    }

    pub fn predictions(&self) -> Vec<usize> {
        predict(self)
    }

    /// `max_c F_ic` per node.
    pub fn confidence(&self) -> Vec<f64> {
        (0..self.scores.rows())
            .map(|i| {
                self.scores
                    .row(i)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }
}

/// Per-row argmax; ties go to the lowest class index.
pub fn predict(f: &ScoreMatrix) -> Vec<usize> {
    (0..f.scores.rows())
        .map(|i| argmax(f.scores.row(i)))
        .collect()
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Rescales each row to sum to one; near-empty rows become uniform.
pub(crate) fn normalize_rows(m: &mut DenseMatrix) {
    let l = m.cols();
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let s: f64 = row.iter().sum();
        if s <= EMPTY_ROW {
            row.fill(1.0 / l as f64);
        } else {
            let inv = 1.0 / s;
            row.iter_mut().for_each(|v| *v *= inv);
        }
    }
}

/// Runs the propagation loop with an arbitrary operator. `apply(x, out)`
/// must overwrite `out` with `M·x`. When normalising, negative entries are
/// set to zero before the row sums are taken.
pub fn iterate_with_operator<F>(
    prior: &PriorMatrix,
    config: &PropagationConfig,
    mut apply: F,
) -> Result<ScoreMatrix>
where
    F: FnMut(&DenseMatrix, &mut DenseMatrix),
{
    config.validate()?;
    let b = prior.matrix();
    let alpha = config.alpha;
    let mut current = b.clone();
    let mut propagated = DenseMatrix::zeros(b.rows(), b.cols());
    let mut next = DenseMatrix::zeros(b.rows(), b.cols());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        apply(&current, &mut propagated);
        for ((o, &bv), &pv) in next
            .as_mut_slice()
            .iter_mut()
            .zip(b.as_slice())
            .zip(propagated.as_slice())
        {
            *o = (1.0 - alpha) * bv + alpha * pv;
        }
        if config.normalize {
            // only projection operators can produce negative scores
            next.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            normalize_rows(&mut next);
        }
        let change = next.max_abs_diff(&current);
        std::mem::swap(&mut current, &mut next);
        if !change.is_finite() {
            break;
        }
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(ScoreMatrix {
        scores: current,
        iterations,
        converged,
    })
}

fn check_prior(graph: &SparseGraph, prior: &PriorMatrix) -> Result<()> {
    check_rows(prior.matrix(), graph.num_nodes())
}

/// Standard (one-step) label propagation with `M = D^{-1/2} A D^{-1/2}`.
pub fn propagate_one_step(
    graph: &SparseGraph,
    prior: &PriorMatrix,
    config: &PropagationConfig,
) -> Result<ScoreMatrix> {
    check_prior(graph, prior)?;
    let op = NormalizedOperator::new(graph);
    iterate_with_operator(prior, config, |x, out| op.apply_into(x, out))
}

/// `(LL)^β` as `2β` successive sparse applications of `L`.
pub struct TwoStepOperator<'g> {
    op: NormalizedOperator<'g>,
    beta: u32,
    scratch: DenseMatrix,
}

impl<'g> TwoStepOperator<'g> {
    pub fn new(graph: &'g SparseGraph, beta: u32) -> Self {
        TwoStepOperator {
            op: NormalizedOperator::new(graph),
            beta,
            scratch: DenseMatrix::zeros(0, 0),
        }
    }

    pub fn apply_into(&mut self, x: &DenseMatrix, out: &mut DenseMatrix) {
        if self.scratch.rows() != x.rows() || self.scratch.cols() != x.cols() {
            self.scratch = DenseMatrix::zeros(x.rows(), x.cols());
        }
        self.op.apply_into(x, &mut self.scratch);
        self.op.apply_into(&self.scratch, out);
        for _ in 1..self.beta {
            self.op.apply_into(out, &mut self.scratch);
            self.op.apply_into(&self.scratch, out);
        }
    }
}

/// Two-step label propagation with `M = (LL)^β`.
pub fn propagate_two_step(
    graph: &SparseGraph,
    prior: &PriorMatrix,
    config: &PropagationConfig,
) -> Result<ScoreMatrix> {
    check_prior(graph, prior)?;
    config.validate()?;
    let mut op = TwoStepOperator::new(graph, config.beta);
    iterate_with_operator(prior, config, |x, out| op.apply_into(x, out))
}

/// Local-and-global-consistency energy of `F` against the prior `B`,
/// with `W = A` (symmetrised). Isolated nodes contribute only through
/// the fitting term.
pub fn consistency_energy(
    graph: &SparseGraph,
    f: &DenseMatrix,
    prior: &PriorMatrix,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::validation(format!("alpha {alpha} outside (0, 1]")));
    }
    let b = prior.matrix();
    check_rows(f, graph.num_nodes())?;
    check_rows(b, graph.num_nodes())?;
    if f.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} columns", b.cols()),
            actual: format!("{} columns", f.cols()),
        });
    }
    let s = inv_sqrt_degrees(graph, AdjacencyView::Symmetric);
    let mut smooth = 0.0;
    for i in 0..graph.num_nodes() {
        for &j in graph.neighbours(i) {
            let j = j as usize;
            for (fi, fj) in f.row(i).iter().zip(f.row(j)) {
                let d = fi * s[i] - fj * s[j];
                smooth += d * d;
            }
        }
    }
    let fit: f64 = f
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(0.5 * smooth + (1.0 / alpha - 1.0) * fit)
}
