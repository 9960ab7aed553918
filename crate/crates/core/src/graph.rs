//! Immutable binary graphs in compressed-row form, label assignments, text
//! ingestion, and the normalised propagation operator `D^{-1/2} A D^{-1/2}`.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Rows below this many output entries are computed on the calling thread.
const PARALLEL_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directedness {
    Directed,
    Undirected,
}

impl Directedness {
    pub fn is_directed(self) -> bool {
        self == Directedness::Directed
    }
}

/// Which adjacency a computation walks over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdjacencyView {
    /// `A` for directed graphs (row `i` lists `j` with `i → j`).
    Out,
    /// `Aᵀ` for directed graphs (row `i` lists `j` with `j → i`).
    In,
    /// `max(A, Aᵀ)`; for undirected graphs all three views coincide.
    Symmetric,
}

/// Compressed sparse rows with sorted, duplicate-free neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    /// Builds rows from `(row, col)` arcs. Arcs must already be in range and
    /// free of self-loops; duplicates are removed.
    fn from_arcs(n: usize, arcs: &[(u32, u32)], include_reverse: bool) -> Csr {
        let mut counts = vec![0usize; n + 1];
        for &(a, b) in arcs {
            counts[a as usize + 1] += 1;
            if include_reverse {
                counts[b as usize + 1] += 1;
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut targets = vec![0u32; counts[n]];
        for &(a, b) in arcs {
            targets[cursor[a as usize]] = b;
            cursor[a as usize] += 1;
            if include_reverse {
                targets[cursor[b as usize]] = a;
                cursor[b as usize] += 1;
            }
        }

        // Sort each row, then compact duplicates in place.
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut write = 0usize;
        for i in 0..n {
            let (start, end) = (counts[i], counts[i + 1]);
            targets[start..end].sort_unstable();
            let mut prev: Option<u32> = None;
            for r in start..end {
                let t = targets[r];
                if prev != Some(t) {
                    targets[write] = t;
                    write += 1;
                    prev = Some(t);
                }
            }
            offsets.push(write);
        }
        targets.truncate(write);
        targets.shrink_to_fit();
        Csr { offsets, targets }
    }

    #[inline]
    fn row(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    fn nnz(&self) -> usize {
        self.targets.len()
    }

    fn transpose(&self, n: usize) -> Csr {
        let arcs: Vec<(u32, u32)> = (0..n)
            .flat_map(|i| self.row(i).iter().map(move |&j| (j, i as u32)))
            .collect();
        Csr::from_arcs(n, &arcs, false)
    }

    fn union_with(&self, other: &Csr, n: usize) -> Csr {
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut targets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..n {
            let (a, b) = (self.row(i), other.row(i));
            let (mut p, mut q) = (0, 0);
            while p < a.len() || q < b.len() {
                let next = match (a.get(p), b.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        q += 1;
                        y
                    }
                    (Some(&x), None) => {
                        p += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        q += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                targets.push(next);
            }
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }
}

/// An immutable binary graph. Undirected graphs store one symmetric
/// adjacency; directed graphs additionally keep the transpose and the
/// symmetrised union `max(A, Aᵀ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    directedness: Directedness,
    out: Csr,
    inc: Option<Csr>,
    sym: Option<Csr>,
}

impl SparseGraph {
    /// Builds a graph from node pairs. Self-loops are dropped and duplicate
    /// pairs collapse; undirected input is symmetrised.
    pub fn from_edges<I>(n: usize, directedness: Directedness, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n > u32::MAX as usize {
            return Err(Error::validation(format!("too many nodes: {n}")));
        }
        let mut arcs = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::validation(format!(
                    "edge ({a}, {b}) references a node outside [0, {n})"
                )));
            }
            if a != b {
                arcs.push((a as u32, b as u32));
            }
        }
        Ok(Self::from_arcs_unchecked(n, directedness, arcs))
    }

    pub(crate) fn from_arcs_unchecked(
        n: usize,
        directedness: Directedness,
        arcs: Vec<(u32, u32)>,
    ) -> Self {
        match directedness {
            Directedness::Undirected => {
                let out = Csr::from_arcs(n, &arcs, true);
                SparseGraph {
                    n,
                    directedness,
                    out,
                    inc: None,
                    sym: None,
                }
            }
            Directedness::Directed => {
                let out = Csr::from_arcs(n, &arcs, false);
                drop(arcs);
                let inc = out.transpose(n);
                let sym = out.union_with(&inc, n);
                SparseGraph {
                    n,
                    directedness,
                    out,
                    inc: Some(inc),
                    sym: Some(sym),
                }
            }
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Edge count; undirected edges are counted once.
    pub fn num_edges(&self) -> usize {
        match self.directedness {
            Directedness::Undirected => self.out.nnz() / 2,
            Directedness::Directed => self.out.nnz(),
        }
    }

    #[inline]
    pub fn directedness(&self) -> Directedness {
        self.directedness
    }

    #[inline]
    pub fn is_directed(&self) -> bool {
        self.directedness.is_directed()
    }

    fn csr(&self, view: AdjacencyView) -> &Csr {
        match (view, self.directedness) {
            (_, Directedness::Undirected) | (AdjacencyView::Out, _) => &self.out,
            (AdjacencyView::In, Directedness::Directed) => self.inc.as_ref().expect("directed"),
            (AdjacencyView::Symmetric, Directedness::Directed) => {
                self.sym.as_ref().expect("directed")
            }
        }
    }

    /// Sorted neighbours of `i` in the given view.
    #[inline]
    pub fn neighbours_in(&self, view: AdjacencyView, i: usize) -> &[u32] {
        self.csr(view).row(i)
    }

    /// Sorted neighbours ignoring direction.
    #[inline]
    pub fn neighbours(&self, i: usize) -> &[u32] {
        self.neighbours_in(AdjacencyView::Symmetric, i)
    }

    #[inline]
    pub fn degree_in(&self, view: AdjacencyView, i: usize) -> usize {
        self.csr(view).degree(i)
    }

    pub fn degrees(&self) -> DegreeVectors {
        let count = |view| (0..self.n).map(|i| self.degree_in(view, i)).collect();
        DegreeVectors {
            undirected: count(AdjacencyView::Symmetric),
            out: count(AdjacencyView::Out),
            inc: count(AdjacencyView::In),
        }
    }

    /// Edges in canonical order: `a < b` pairs for undirected graphs, every
    /// arc for directed graphs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let undirected = !self.is_directed();
        (0..self.n).flat_map(move |a| {
            self.out
                .row(a)
                .iter()
                .map(move |&b| (a, b as usize))
                .filter(move |&(a, b)| !undirected || a < b)
        })
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SparseGraph> {
        check_permutation(perm, self.n)?;
        let edges: Vec<_> = self.edges().map(|(a, b)| (perm[a], perm[b])).collect();
        SparseGraph::from_edges(self.n, self.directedness, edges)
    }

    /// `out_i = left_i · Σ_{j ∈ N(i)} right_j · x_j` over rows of `x`.
    /// Each row is reduced sequentially in sorted neighbour order, so the
    /// result does not depend on how rows are scheduled.
    pub(crate) fn scaled_spmm(
        &self,
        view: AdjacencyView,
        left: Option<&[f64]>,
        right: Option<&[f64]>,
        x: &DenseMatrix,
        out: &mut DenseMatrix,
    ) {
        debug_assert_eq!(x.rows(), self.n);
        debug_assert_eq!(out.rows(), self.n);
        debug_assert_eq!(out.cols(), x.cols());
        let csr = self.csr(view);
        let cols = x.cols();
        if cols == 0 {
            return;
        }
        let kernel = |(i, row): (usize, &mut [f64])| {
            row.iter_mut().for_each(|v| *v = 0.0);
            for &j in csr.row(i) {
                let j = j as usize;
                let w = right.map_or(1.0, |r| r[j]);
                if w == 0.0 {
                    continue;
                }
                for (o, &xv) in row.iter_mut().zip(x.row(j)) {
                    *o += w * xv;
                }
            }
            if let Some(l) = left {
                let s = l[i];
                row.iter_mut().for_each(|v| *v *= s);
            }
        };
        let data = out.as_mut_slice();
        if data.len() >= PARALLEL_THRESHOLD {
            data.par_chunks_mut(cols).enumerate().for_each(kernel);
        } else {
            data.chunks_mut(cols).enumerate().for_each(kernel);
        }
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::validation(format!(
            "permutation has length {}, expected {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::validation("not a permutation"));
        }
    }
    Ok(())
}

/// Per-node degree counts. For undirected graphs all three coincide; for
/// directed graphs `undirected` counts neighbours in `max(A, Aᵀ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeVectors {
    pub undirected: Vec<usize>,
    pub out: Vec<usize>,
    pub inc: Vec<usize>,
}

/// Free-function form of [`SparseGraph::degrees`].
pub fn degrees(graph: &SparseGraph) -> DegreeVectors {
    graph.degrees()
}

/// `1/√d` per node with the pseudo-inverse convention `0` for `d = 0`.
pub(crate) fn inv_sqrt_degrees(graph: &SparseGraph, view: AdjacencyView) -> Vec<f64> {
    (0..graph.num_nodes())
        .map(|i| match graph.degree_in(view, i) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect()
}

/// The operator `L = D^{-1/2} A D^{-1/2}` over the symmetrised adjacency,
/// applied without materialising `L`.
#[derive(Debug, Clone)]
pub struct NormalizedOperator<'g> {
    graph: &'g SparseGraph,
    inv_sqrt: Vec<f64>,
}

impl<'g> NormalizedOperator<'g> {
    pub fn new(graph: &'g SparseGraph) -> Self {
        NormalizedOperator {
            graph,
            inv_sqrt: inv_sqrt_degrees(graph, AdjacencyView::Symmetric),
        }
    }

    pub fn graph(&self) -> &'g SparseGraph {
        self.graph
    }

    /// Writes `L·x` into `out`.
    pub fn apply_into(&self, x: &DenseMatrix, out: &mut DenseMatrix) {
        self.graph.scaled_spmm(
            AdjacencyView::Symmetric,
            Some(&self.inv_sqrt),
            Some(&self.inv_sqrt),
            x,
            out,
        );
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows(x, self.graph.num_nodes())?;
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        self.apply_into(x, &mut out);
        Ok(out)
    }
}

/// Computes `D^{-1/2} A D^{-1/2} · x`. Isolated nodes map to zero rows.
pub fn normalized_operator_apply(graph: &SparseGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    NormalizedOperator::new(graph).apply(x)
}

pub(crate) fn check_rows(x: &DenseMatrix, n: usize) -> Result<()> {
    if x.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} rows"),
            actual: format!("{} rows", x.rows()),
        });
    }
    Ok(())
}

/// A partial assignment of class labels to nodes.
///
/// Nodes in the evaluation-excluded set have no ground truth; they stay in
/// the graph but never count towards accuracy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    num_classes: usize,
    labels: Vec<Option<u32>>,
    excluded: Vec<bool>,
}

impl LabelAssignment {
    /// An assignment with every node unlabelled.
    pub fn empty(num_nodes: usize, num_classes: usize) -> Self {
        LabelAssignment {
            num_classes,
            labels: vec![None; num_nodes],
            excluded: vec![false; num_nodes],
        }
    }

    pub fn from_labels(num_classes: usize, labels: Vec<Option<usize>>) -> Result<Self> {
        let mut out = Self::empty(labels.len(), num_classes);
        for (node, label) in labels.into_iter().enumerate() {
            if let Some(c) = label {
                out.set(node, c)?;
            }
        }
        Ok(out)
    }

    /// A fully labelled assignment.
    pub fn complete(num_classes: usize, labels: &[usize]) -> Result<Self> {
        Self::from_labels(num_classes, labels.iter().map(|&c| Some(c)).collect())
    }

    /// Builds an assignment from `(node, class)` pairs. Repeated pairs are
    /// fine; a node given two different classes is an error.
    pub fn from_pairs(
        num_nodes: usize,
        num_classes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut out = LabelAssignment::empty(num_nodes, num_classes);
        for (node, class) in pairs {
            if node >= num_nodes {
                return Err(Error::validation(format!(
                    "node {node} outside [0, {num_nodes})"
                )));
            }
            match out.label(node) {
                Some(prev) if prev != class => {
                    return Err(Error::validation(format!(
                        "node {node} labelled both {prev} and {class}"
                    )))
                }
                _ => out.set(node, class)?,
            }
        }
        Ok(out)
    }

    pub fn set(&mut self, node: usize, class: usize) -> Result<()> {
        if node >= self.labels.len() {
            return Err(Error::validation(format!(
                "node {node} outside [0, {})",
                self.labels.len()
            )));
        }
        if class >= self.num_classes {
            return Err(Error::validation(format!(
                "class {class} outside [0, {})",
                self.num_classes
            )));
        }
        if self.excluded[node] {
            return Err(Error::validation(format!(
                "node {node} is excluded from evaluation and cannot carry a label"
            )));
        }
        self.labels[node] = Some(class as u32);
        Ok(())
    }

    /// Marks every unlabelled node as having missing ground truth.
    pub fn exclude_unlabelled(mut self) -> Self {
        for (ex, l) in self.excluded.iter_mut().zip(&self.labels) {
            *ex = l.is_none();
        }
        self
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels[node].map(|c| c as usize)
    }

    #[inline]
    pub fn is_excluded(&self, node: usize) -> bool {
        self.excluded[node]
    }

    /// The labelled set `L`, ascending.
    pub fn labelled(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i].is_some())
            .collect()
    }

    /// The unlabelled set `U = V \ L`, ascending (includes excluded nodes).
    pub fn unlabelled(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i].is_none())
            .collect()
    }

    /// Nodes that carry ground truth and may be evaluated.
    pub fn eligible(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| !self.excluded[i] && self.labels[i].is_some())
            .collect()
    }

    pub fn num_labelled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Copy that keeps labels only on `nodes`; exclusions are preserved.
    pub fn restricted_to(&self, nodes: &[usize]) -> LabelAssignment {
        let mut out = LabelAssignment {
            num_classes: self.num_classes,
            labels: vec![None; self.labels.len()],
            excluded: self.excluded.clone(),
        };
        for &i in nodes {
            out.labels[i] = self.labels[i];
        }
        out
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<LabelAssignment> {
        check_permutation(perm, self.labels.len())?;
        let mut out = Self::empty(self.labels.len(), self.num_classes);
        for (i, &p) in perm.iter().enumerate() {
            out.labels[p] = self.labels[i];
            out.excluded[p] = self.excluded[i];
        }
        Ok(out)
    }

    /// Applies a class permutation `c ↦ perm[c]`.
    pub fn with_classes_permuted(&self, perm: &[usize]) -> Result<LabelAssignment> {
        check_permutation(perm, self.num_classes)?;
        let mut out = self.clone();
        for l in out.labels.iter_mut().flatten() {
            *l = perm[*l as usize] as u32;
        }
        Ok(out)
    }
}

/// How node ids are numbered in a text file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Indexing {
    #[default]
    ZeroBased,
    OneBased,
}

impl Indexing {
    fn offset(self) -> usize {
        match self {
            Indexing::ZeroBased => 0,
            Indexing::OneBased => 1,
        }
    }
}

fn tokens(line: &str) -> Option<Vec<&str>> {
    let line = line.trim_end_matches('\r').trim();
    if line.is_empty() || line.starts_with('#') {
        None
    } else {
        Some(line.split_whitespace().collect())
    }
}

fn parse_id(tok: &str, line: usize, what: &str) -> Result<i64> {
    tok.parse::<i64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} '{tok}' is not an integer"),
    })
}

/// Reads the `(source, target)` pairs of a whitespace-separated edge list,
/// converted to zero-based ids.
pub fn read_edge_pairs<R: BufRead>(reader: R, indexing: Indexing) -> Result<Vec<(usize, usize)>> {
    read_pairs(reader, indexing, "node id", "expected two node ids")
}

/// Reads `node_id class_id` pairs. Node ids follow `indexing`; class ids
/// are always zero-based.
pub fn read_label_pairs<R: BufRead>(reader: R, indexing: Indexing) -> Result<Vec<(usize, usize)>> {
    let pairs = read_pairs(
        reader,
        Indexing::ZeroBased,
        "id",
        "expected 'node_id class_id'",
    )?;
    let offset = indexing.offset();
    pairs
        .into_iter()
        .map(|(node, class)| {
            node.checked_sub(offset)
                .map(|node| (node, class))
                .ok_or_else(|| {
                    Error::validation(format!(
                        "node id {node} is below the first valid id {offset}"
                    ))
                })
        })
        .collect()
}

fn read_pairs<R: BufRead>(
    reader: R,
    indexing: Indexing,
    what: &str,
    shape: &str,
) -> Result<Vec<(usize, usize)>> {
    let offset = indexing.offset() as i64;
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let Some(toks) = tokens(&line) else { continue };
        if toks.len() != 2 {
            let message = if toks.len() > 2 && what == "node id" {
                format!("{shape}; weighted edges are not supported")
            } else {
                shape.to_string()
            };
            return Err(Error::Parse {
                line: lineno,
                message,
            });
        }
        let mut ids = [0usize; 2];
        for (slot, tok) in ids.iter_mut().zip(&toks) {
            let raw = parse_id(tok, lineno, what)?;
            if raw < offset {
                return Err(Error::validation(format!(
                    "line {lineno}: {what} {raw} is below the first valid id {offset}"
                )));
            }
            *slot = (raw - offset) as usize;
        }
        pairs.push((ids[0], ids[1]));
    }
    Ok(pairs)
}

/// Reads a whitespace-separated edge list. The node count is one more than
/// the largest id seen, or `num_nodes` when given.
pub fn load_edge_list<R: BufRead>(
    reader: R,
    directedness: Directedness,
    indexing: Indexing,
    num_nodes: Option<usize>,
) -> Result<SparseGraph> {
    let edges = read_edge_pairs(reader, indexing)?;
    let inferred = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let n = match num_nodes {
        Some(n) if n < inferred => {
            return Err(Error::validation(format!(
                "edge list references node {} but only {n} nodes were declared",
                inferred - 1
            )))
        }
        Some(n) => n,
        None => inferred,
    };
    SparseGraph::from_edges(n, directedness, edges)
}

/// Reads zero-based `node_id class_id` lines into an assignment over
/// `num_nodes` nodes.
pub fn load_labels<R: BufRead>(
    reader: R,
    num_nodes: usize,
    num_classes: usize,
) -> Result<LabelAssignment> {
    LabelAssignment::from_pairs(
        num_nodes,
        num_classes,
        read_label_pairs(reader, Indexing::ZeroBased)?,
    )
}

pub fn write_edge_list<W: Write>(graph: &SparseGraph, mut w: W) -> Result<()> {
    for (a, b) in graph.edges() {
        writeln!(w, "{a} {b}")?;
    }
    Ok(())
}

pub fn write_labels<W: Write>(labels: &LabelAssignment, mut w: W) -> Result<()> {
    for i in labels.labelled() {
        writeln!(w, "{} {}", i, labels.label(i).expect("labelled"))?;
    }
    Ok(())
}
