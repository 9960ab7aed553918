//! Stochastic block model benchmarks.
//!
//! Five block templates are provided. Each marks every block of the κ×κ
//! interaction matrix as "blue" (probability `p_b`) or "white"
//! (`p_w = ratio · p_b`), and `p_b` is calibrated so the expected mean
//! degree hits a target.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{Directedness, LabelAssignment, SparseGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureTemplate {
    Assortative,
    Disassortative,
    Mixed,
    Cyclic,
    Heterogeneous,
}

impl StructureTemplate {
    pub const ALL: [StructureTemplate; 5] = [
        StructureTemplate::Assortative,
        StructureTemplate::Disassortative,
        StructureTemplate::Mixed,
        StructureTemplate::Cyclic,
        StructureTemplate::Heterogeneous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureTemplate::Assortative => "assortative",
            StructureTemplate::Disassortative => "disassortative",
            StructureTemplate::Mixed => "mixed",
            StructureTemplate::Cyclic => "cyclic",
            StructureTemplate::Heterogeneous => "heterogeneous",
        }
    }

    pub fn num_groups(self) -> usize {
        match self {
            StructureTemplate::Heterogeneous => 4,
            _ => 3,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            StructureTemplate::Heterogeneous => 2,
            _ => 3,
        }
    }

    pub fn directedness(self) -> Directedness {
        match self {
            StructureTemplate::Cyclic => Directedness::Directed,
            _ => Directedness::Undirected,
        }
    }

    /// Group → class map.
    pub fn class_of_group(self) -> Vec<usize> {
        match self {
            // groups 1,3 → class 0; groups 2,4 → class 1 (0-based: 0,2 / 1,3)
            StructureTemplate::Heterogeneous => vec![0, 1, 0, 1],
            _ => vec![0, 1, 2],
        }
    }

    /// `mask[g][h]` is true for blue (`p_b`) blocks.
    pub fn mask(self) -> Vec<Vec<bool>> {
        let k = self.num_groups();
        let blue: &[(usize, usize)] = match self {
            StructureTemplate::Assortative => &[(0, 0), (1, 1), (2, 2)],
            StructureTemplate::Disassortative => &[(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)],
            StructureTemplate::Mixed => &[(0, 0), (1, 2), (2, 1)],
            StructureTemplate::Cyclic => &[(0, 1), (1, 2), (2, 0)],
            StructureTemplate::Heterogeneous => &[(0, 0), (1, 1), (2, 3), (3, 2)],
        };
        let mut mask = vec![vec![false; k]; k];
        for &(a, b) in blue {
            mask[a][b] = true;
        }
        mask
    }
}

impl fmt::Display for StructureTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructureTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StructureTemplate::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown structure '{s}'")))
    }
}

/// A fully specified block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockModelSpec {
    /// κ×κ link probabilities, row = source group.
    pub omega: Vec<Vec<f64>>,
    pub group_sizes: Vec<usize>,
    pub class_of_group: Vec<usize>,
    pub num_classes: usize,
    pub directedness: Directedness,
}

impl BlockModelSpec {
    pub fn num_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_groups();
        if k == 0 {
            return Err(Error::validation("block model needs at least one group"));
        }
        if self.omega.len() != k || self.omega.iter().any(|r| r.len() != k) {
            return Err(Error::validation("omega must be κ×κ"));
        }
        if self.class_of_group.len() != k {
            return Err(Error::validation("class map must have one entry per group"));
        }
        if self.group_sizes.contains(&0) {
            return Err(Error::validation("group sizes must be positive"));
        }
        for (a, row) in self.omega.iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation(format!(
                        "omega[{a}][{b}] = {p} outside [0, 1]"
                    )));
                }
                if !self.directedness.is_directed() && p != self.omega[b][a] {
                    return Err(Error::validation(
                        "undirected block models need symmetric omega",
                    ));
                }
            }
        }
        let mut hit = vec![false; self.num_classes];
        for &c in &self.class_of_group {
            if c >= self.num_classes {
                return Err(Error::validation(format!(
                    "class {c} outside [0, {})",
                    self.num_classes
                )));
            }
            hit[c] = true;
        }
        if hit.iter().any(|h| !h) {
            return Err(Error::validation("group → class map must hit every class"));
        }
        Ok(())
    }

    /// Start offset of each group; groups occupy contiguous node ranges.
    fn group_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.num_groups());
        let mut acc = 0;
        for &s in &self.group_sizes {
            starts.push(acc);
            acc += s;
        }
        starts
    }

    pub fn group_of_nodes(&self) -> Vec<usize> {
        self.group_sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
            .collect()
    }

    /// Expected link density between classes: for classes `c, d`, the
    /// probability that a uniformly chosen (class c, class d) node pair is
    /// linked, ignoring the self-pair correction.
    pub fn class_density(&self) -> DenseMatrix {
        let l = self.num_classes;
        let mut mass = DenseMatrix::zeros(l, l);
        let mut class_size = vec![0.0; l];
        for (g, &sg) in self.group_sizes.iter().enumerate() {
            class_size[self.class_of_group[g]] += sg as f64;
            for (h, &sh) in self.group_sizes.iter().enumerate() {
                let (c, d) = (self.class_of_group[g], self.class_of_group[h]);
                mass[(c, d)] += sg as f64 * sh as f64 * self.omega[g][h];
            }
        }
        for c in 0..l {
            for d in 0..l {
                mass[(c, d)] /= class_size[c] * class_size[d];
            }
        }
        mass
    }

    /// Expected (out-)degree of a node in each group.
    pub fn expected_degrees(&self) -> Vec<f64> {
        self.omega
            .iter()
            .enumerate()
            .map(|(g, row)| {
                row.iter()
                    .zip(&self.group_sizes)
                    .enumerate()
                    .map(|(h, (&p, &s))| p * (s - usize::from(g == h)) as f64)
                    .sum()
            })
            .collect()
    }
}

/// Instantiates a template with `p_w = ratio · p_b`, calibrating `p_b` so
/// the group-size-weighted mean of `(n/κ)(b_g + ratio · w_g) p_b` equals
/// `target_mean_degree`, where `b_g`/`w_g` count blue/white blocks in row g.
///
/// Groups are as equal as possible; when κ does not divide `n` the first
/// `n mod κ` groups get one extra node.
pub fn build_block_spec(
    template: StructureTemplate,
    n: usize,
    target_mean_degree: f64,
    ratio: f64,
) -> Result<BlockModelSpec> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::validation(format!("ratio {ratio} outside [0, 1]")));
    }
    let k = template.num_groups();
    if n < k {
        return Err(Error::validation(format!(
            "need at least {k} nodes, got {n}"
        )));
    }
    if !(target_mean_degree > 0.0 && target_mean_degree < n as f64) {
        return Err(Error::validation(format!(
            "target mean degree {target_mean_degree} must lie in (0, {n})"
        )));
    }
    let mask = template.mask();
    let weight: f64 = mask
        .iter()
        .flatten()
        .map(|&blue| if blue { 1.0 } else { ratio })
        .sum();
    let kf = k as f64;
    let p_b = target_mean_degree * kf * kf / (n as f64 * weight);
    if p_b > 1.0 {
        return Err(Error::Infeasible(format!(
            "p_b = {p_b:.4} > 1 for n = {n}, degree = {target_mean_degree}, ratio = {ratio}"
        )));
    }
    let p_w = ratio * p_b;
    let omega = mask
        .iter()
        .map(|row| {
            row.iter()
                .map(|&blue| if blue { p_b } else { p_w })
                .collect()
        })
        .collect();
    let group_sizes = (0..k).map(|g| n / k + usize::from(g < n % k)).collect();
    let spec = BlockModelSpec {
        omega,
        group_sizes,
        class_of_group: template.class_of_group(),
        num_classes: template.num_classes(),
        directedness: template.directedness(),
    };
    spec.validate()?;
    Ok(spec)
}

/// A sampled benchmark network with full ground truth.
#[derive(Debug, Clone)]
pub struct SampledNetwork {
    pub graph: SparseGraph,
    pub labels: LabelAssignment,
    pub groups: Vec<usize>,
}

/// Block id → independent ChaCha8 stream of the run seed.
fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Bernoulli(p) selection over `count` candidates via geometric skips.
fn sample_indices(rng: &mut ChaCha8Rng, count: u64, p: f64, mut emit: impl FnMut(u64)) {
    if count == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..count).for_each(emit);
        return;
    }
    let log_q = (-p).ln_1p();
    let mut idx: u64 = 0;
    let mut first = true;
    loop {
        let u: f64 = rng.random();
        // 1 - u lies in (0, 1]
        let skip = ((1.0 - u).ln() / log_q).floor();
        let step = if skip >= (count as f64) {
            count
        } else {
            skip as u64
        };
        idx = if first {
            first = false;
            step
        } else {
            idx.saturating_add(1).saturating_add(step)
        };
        if idx >= count {
            break;
        }
        emit(idx);
    }
}

/// Maps a linear index to the strictly-lower-triangle pair `(i, j)`, `j < i`.
fn lower_triangle_pair(idx: u64) -> (u64, u64) {
    let mut i = ((1.0 + (1.0 + 8.0 * idx as f64).sqrt()) / 2.0).floor() as u64;
    while i * (i - 1) / 2 > idx {
        i -= 1;
    }
    while (i + 1) * i / 2 <= idx {
        i += 1;
    }
    (i, idx - i * (i - 1) / 2)
}

/// Samples each node pair independently with probability `ω[g_i][g_j]`
/// (unordered pairs once when undirected, ordered pairs when directed).
/// Output depends only on `(spec, seed)`.
pub fn sample_network(spec: &BlockModelSpec, seed: u64) -> Result<SampledNetwork> {
    spec.validate()?;
    let k = spec.num_groups();
    let n = spec.num_nodes();
    if n > u32::MAX as usize {
        return Err(Error::validation(format!("too many nodes: {n}")));
    }
    let starts = spec.group_starts();
    let directed = spec.directedness.is_directed();
    let blocks: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter(|&(a, b)| directed || a <= b)
        .collect();

    let per_block: Vec<Vec<(u32, u32)>> = blocks
        .par_iter()
        .map(|&(a, b)| {
            let mut rng = block_rng(seed, (a * k + b) as u64);
            let (sa, sb) = (spec.group_sizes[a] as u64, spec.group_sizes[b] as u64);
            let (oa, ob) = (starts[a] as u64, starts[b] as u64);
            let p = spec.omega[a][b];
            let mut arcs = Vec::new();
            let mut push = |i: u64, j: u64| arcs.push(((oa + i) as u32, (ob + j) as u32));
            match (a == b, directed) {
                (false, _) => sample_indices(&mut rng, sa * sb, p, |idx| push(idx / sb, idx % sb)),
                (true, false) => sample_indices(&mut rng, sa * (sa - 1) / 2, p, |idx| {
                    let (i, j) = lower_triangle_pair(idx);
                    push(i, j)
                }),
                (true, true) if sa > 1 => sample_indices(&mut rng, sa * (sa - 1), p, |idx| {
                    let (i, r) = (idx / (sa - 1), idx % (sa - 1));
                    push(i, if r >= i { r + 1 } else { r })
                }),
                (true, true) => {}
            }
            arcs
        })
        .collect();

    let arcs: Vec<(u32, u32)> = per_block.into_iter().flatten().collect();
    let graph = SparseGraph::from_arcs_unchecked(n, spec.directedness, arcs);
    let groups = spec.group_of_nodes();
    let truth: Vec<usize> = groups.iter().map(|&g| spec.class_of_group[g]).collect();
    let labels = LabelAssignment::complete(spec.num_classes, &truth)?;
    Ok(SampledNetwork {
        graph,
        labels,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assortative_calibration_closed_form() {
        let spec = build_block_spec(StructureTemplate::Assortative, 1000, 15.0, 0.0).unwrap();
        let p_b = 15.0 * 3.0 / 1000.0;
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { p_b } else { 0.0 };
                assert!((spec.omega[a][b] - expected).abs() < 1e-15);
            }
        }
        assert_eq!(spec.group_sizes, vec![334, 333, 333]);
    }

    #[test]
    fn ratio_one_is_structureless() {
        for t in StructureTemplate::ALL {
            let spec = build_block_spec(t, 1200, 15.0, 1.0).unwrap();
            let p = spec.omega[0][0];
            assert!(spec.omega.iter().flatten().all(|&q| (q - p).abs() < 1e-15));
            // each row: (n/κ)·κ·p = n·p = 15
            assert!((1200.0 * p - 15.0).abs() < 1e-9, "{t}");
        }
    }

    #[test]
    fn heterogeneous_mask_and_flat_class_density() {
        let mask = StructureTemplate::Heterogeneous.mask();
        let blue: Vec<_> = (0..4)
            .flat_map(|a| (0..4).map(move |b| (a, b)))
            .filter(|&(a, b)| mask[a][b])
            .collect();
        assert_eq!(blue, vec![(0, 0), (1, 1), (2, 3), (3, 2)]);
        assert_eq!(
            StructureTemplate::Heterogeneous.class_of_group(),
            vec![0, 1, 0, 1]
        );

        let spec = build_block_spec(StructureTemplate::Heterogeneous, 1000, 15.0, 0.2).unwrap();
        let (pb, pw) = (spec.omega[0][0], spec.omega[0][1]);
        let density = spec.class_density();
        for c in 0..2 {
            for d in 0..2 {
                assert!((density[(c, d)] - (pb + 3.0 * pw) / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(
            build_block_spec(StructureTemplate::Assortative, 30, 25.0, 0.0),
            Err(Error::Infeasible(_))
        ));
        assert!(build_block_spec(StructureTemplate::Assortative, 300, 15.0, 1.5).is_err());
        assert!(build_block_spec(StructureTemplate::Heterogeneous, 3, 1.0, 0.5).is_err());
    }

    #[test]
    fn assortative_zero_ratio_has_no_cross_edges() {
        let spec = build_block_spec(StructureTemplate::Assortative, 300, 10.0, 0.0).unwrap();
        let net = sample_network(&spec, 3).unwrap();
        assert!(net.graph.num_edges() > 0);
        for (a, b) in net.graph.edges() {
            assert_eq!(net.labels.label(a), net.labels.label(b));
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let spec = build_block_spec(StructureTemplate::Cyclic, 400, 8.0, 0.1).unwrap();
        let a = sample_network(&spec, 11).unwrap();
        let b = sample_network(&spec, 11).unwrap();
        let c = sample_network(&spec, 12).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn lower_triangle_indexing_is_a_bijection() {
        let mut idx = 0;
        for i in 1..60u64 {
            for j in 0..i {
                assert_eq!(lower_triangle_pair(idx), (i, j));
                idx += 1;
            }
        }
    }

    #[test]
    fn full_probability_blocks_are_complete() {
        let spec = BlockModelSpec {
            omega: vec![vec![1.0]],
            group_sizes: vec![6],
            class_of_group: vec![0],
            num_classes: 1,
            directedness: Directedness::Directed,
        };
        let net = sample_network(&spec, 0).unwrap();
        assert_eq!(net.graph.num_edges(), 30);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = build_block_spec(StructureTemplate::Mixed, 90, 5.0, 0.1).unwrap();
        spec.omega[0][1] = 0.5;
        assert!(spec.validate().is_err());
        let mut spec = build_block_spec(StructureTemplate::Mixed, 90, 5.0, 0.1).unwrap();
        spec.class_of_group = vec![0, 0, 0];
        assert!(spec.validate().is_err());
    }
}
