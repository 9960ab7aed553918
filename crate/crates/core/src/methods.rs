//! Method identifiers and a per-graph context that dispatches to them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::baselines::{ghost_edges_classify, linbp, linbp_identity, AffinityMatrix};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{LabelAssignment, SparseGraph};
use crate::propagation::{
    build_prior, propagate_one_step, propagate_two_step, PropagationConfig, ScoreMatrix,
};
use crate::spectral::{
    compute_eigenbasis, cosine_lp, EigenBasis, ProjectionWeighting, SimilarityMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lp1")]
    Lp1,
    #[serde(rename = "lp2")]
    Lp2,
    #[serde(rename = "cosine-undirected")]
    CosineUndirected,
    #[serde(rename = "cosine-directed")]
    CosineDirected,
    #[serde(rename = "cosine-both")]
    CosineBoth,
    #[serde(rename = "linbp")]
    Linbp,
    #[serde(rename = "linbp-i")]
    LinbpI,
    #[serde(rename = "ghost")]
    Ghost,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Lp1,
        Method::Lp2,
        Method::CosineUndirected,
        Method::CosineDirected,
        Method::CosineBoth,
        Method::Linbp,
        Method::LinbpI,
        Method::Ghost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lp1 => "lp1",
            Method::Lp2 => "lp2",
            Method::CosineUndirected => "cosine-undirected",
            Method::CosineDirected => "cosine-directed",
            Method::CosineBoth => "cosine-both",
            Method::Linbp => "linbp",
            Method::LinbpI => "linbp-i",
            Method::Ghost => "ghost",
        }
    }

    pub fn uses_alpha(self) -> bool {
        matches!(
            self,
            Method::Lp1
                | Method::Lp2
                | Method::CosineUndirected
                | Method::CosineDirected
                | Method::CosineBoth
        )
    }

    pub fn uses_beta(self) -> bool {
        self == Method::Lp2
    }

    pub fn uses_k(self) -> bool {
        matches!(
            self,
            Method::CosineUndirected | Method::CosineDirected | Method::CosineBoth
        )
    }

    pub fn uses_restart(self) -> bool {
        self == Method::Ghost
    }

    /// Similarity modes for the cosine variants. On undirected graphs the
    /// directed similarities coincide with the undirected one, so every
    /// cosine variant reduces to the undirected mode there.
    pub fn similarity_modes(self, graph: &SparseGraph) -> Vec<SimilarityMode> {
        let directed = graph.is_directed();
        match self {
            Method::CosineUndirected => vec![SimilarityMode::Undirected],
            Method::CosineDirected if directed => vec![SimilarityMode::Out, SimilarityMode::In],
            Method::CosineBoth if directed => {
                vec![
                    SimilarityMode::Undirected,
                    SimilarityMode::Out,
                    SimilarityMode::In,
                ]
            }
            Method::CosineDirected | Method::CosineBoth => vec![SimilarityMode::Undirected],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub alpha: f64,
    pub beta: u32,
    pub k: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: f64,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            alpha: 0.1,
            beta: 1,
            k: 15,
            tolerance: 1e-6,
            max_iterations: 1000,
            restart: 0.15,
        }
    }
}

impl MethodParams {
    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            alpha: self.alpha,
            beta: self.beta,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            normalize: true,
        }
    }
}

/// Everything a method needs beyond the labels: the graph, an optional
/// affinity matrix for linBP, and a cache of eigenbases keyed by modes.
pub struct Classifier<'g> {
    graph: &'g SparseGraph,
    affinity: Option<AffinityMatrix>,
    weighting: ProjectionWeighting,
    bases: Mutex<HashMap<Vec<SimilarityMode>, EigenBasis>>,
}

impl<'g> Classifier<'g> {
    pub fn new(graph: &'g SparseGraph) -> Self {
        Classifier {
            graph,
            affinity: None,
            weighting: ProjectionWeighting::default(),
            bases: Mutex::new(HashMap::new()),
        }
    }

    /// Supplies the (already scaled) affinity used by `linbp`.
    pub fn with_affinity(mut self, affinity: AffinityMatrix) -> Self {
        self.affinity = Some(affinity);
        self
    }

    pub fn with_weighting(mut self, weighting: ProjectionWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn graph(&self) -> &'g SparseGraph {
        self.graph
    }

    /// Computes (or reuses) a basis with at least `k` columns per mode.
    /// Callers that will need several `k` values should prime the cache with
    /// the largest first.
    pub fn prepare_basis(&self, method: Method, k: usize) -> Result<EigenBasis> {
        let modes = method.similarity_modes(self.graph);
        if modes.is_empty() {
            return Err(Error::validation(format!(
                "method '{method}' does not use an eigenbasis"
            )));
        }
        let mut cache = self.bases.lock().expect("basis cache poisoned");
        if let Some(b) = cache.get(&modes) {
            if b.k >= k {
                return b.truncated(k);
            }
        }
        let basis = compute_eigenbasis(self.graph, &modes, k)?;
        cache.insert(modes, basis.clone());
        Ok(basis)
    }

    pub fn run(
        &self,
        method: Method,
        params: &MethodParams,
        labels: &LabelAssignment,
    ) -> Result<ScoreMatrix> {
        if labels.num_nodes() != self.graph.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} nodes", self.graph.num_nodes()),
                actual: format!("{} labels", labels.num_nodes()),
            });
        }
        match method {
            Method::Lp1 => {
                propagate_one_step(self.graph, &build_prior(labels), &params.propagation())
            }
            Method::Lp2 => {
                propagate_two_step(self.graph, &build_prior(labels), &params.propagation())
            }
            Method::CosineUndirected | Method::CosineDirected | Method::CosineBoth => {
                let basis = self.prepare_basis(method, params.k)?;
                cosine_lp(
                    &basis,
                    &build_prior(labels),
                    &params.propagation(),
                    self.weighting,
                )
            }
            Method::Linbp => {
                let h = self
                    .affinity
                    .as_ref()
                    .ok_or_else(|| Error::validation("linbp needs an affinity matrix"))?;
                linbp(
                    self.graph,
                    labels,
                    h,
                    params.tolerance,
                    params.max_iterations,
                )
            }
            Method::LinbpI => {
                linbp_identity(self.graph, labels, params.tolerance, params.max_iterations)
            }
            Method::Ghost => ghost_edges_classify(self.graph, labels, params.restart),
        }
    }
}

/// Observed class-to-class link density of a labelled graph: for each
/// ordered class pair, arcs between them divided by the number of node
/// pairs. Gives linBP full knowledge of the class interactions.
pub fn empirical_class_density(
    graph: &SparseGraph,
    truth: &LabelAssignment,
) -> Result<DenseMatrix> {
    let l = truth.num_classes();
    let mut counts = DenseMatrix::zeros(l, l);
    let mut sizes = vec![0.0; l];
    for i in 0..graph.num_nodes() {
        if let Some(c) = truth.label(i) {
            sizes[c] += 1.0;
        }
    }
    for (a, b) in graph.edges() {
        if let (Some(c), Some(d)) = (truth.label(a), truth.label(b)) {
            counts[(c, d)] += 1.0;
            if !graph.is_directed() {
                counts[(d, c)] += 1.0;
            }
        }
    }
    for c in 0..l {
        for d in 0..l {
            let pairs = sizes[c] * sizes[d];
            counts[(c, d)] = if pairs > 0.0 {
                counts[(c, d)] / pairs
            } else {
                0.0
            };
        }
    }
    Ok(counts)
}
