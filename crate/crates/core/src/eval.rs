//! Evaluation harness: label splits, accuracy and precision@p, k-fold
//! parameter selection, the synthetic heterogeneity sweep, and timing.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{derive_affinity_from_blocks, AffinityMatrix};
use crate::error::{Error, Result};
use crate::graph::{LabelAssignment, SparseGraph};
use crate::methods::{Classifier, Method, MethodParams};
use crate::propagation::ScoreMatrix;
use crate::sbm::{build_block_spec, sample_network, StructureTemplate};
use crate::spectral::ProjectionWeighting;

pub const NUM_FOLDS: usize = 3;

/// Named substreams of a run seed.
pub mod streams {
    pub const NETWORK: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const FOLDS: u64 = 3;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent seed for one named use of a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LabelledSize {
    Fraction(f64),
    Count(usize),
}

impl LabelledSize {
    fn resolve(self, eligible: usize) -> Result<usize> {
        let count = match self {
            LabelledSize::Fraction(f) if (0.0..=1.0).contains(&f) => {
                (f * eligible as f64).round() as usize
            }
            LabelledSize::Fraction(f) => {
                return Err(Error::validation(format!(
                    "labelled fraction {f} outside [0, 1]"
                )))
            }
            LabelledSize::Count(c) => c,
        };
        if count > eligible {
            return Err(Error::validation(format!(
                "requested {count} labelled nodes but only {eligible} have ground truth"
            )));
        }
        Ok(count)
    }
}

/// Samples a training set uniformly without replacement from the nodes
/// that carry ground truth. Excluded nodes stay in the graph unlabelled.
pub fn split_labels(
    truth: &LabelAssignment,
    size: LabelledSize,
    seed: u64,
) -> Result<LabelAssignment> {
    let mut eligible = truth.eligible();
    let count = size.resolve(eligible.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut chosen = eligible[..count].to_vec();
    chosen.sort_unstable();
    Ok(truth.restricted_to(&chosen))
}

/// Nodes with ground truth that are not in the training set.
pub fn test_nodes(truth: &LabelAssignment, train: &LabelAssignment) -> Vec<usize> {
    truth
        .eligible()
        .into_iter()
        .filter(|&i| train.label(i).is_none())
        .collect()
}

fn check_test_set(truth: &LabelAssignment, test: &[usize], len: usize) -> Result<()> {
    for &i in test {
        if i >= len || i >= truth.num_nodes() {
            return Err(Error::validation(format!("test node {i} out of range")));
        }
        if truth.is_excluded(i) || truth.label(i).is_none() {
            return Err(Error::validation(format!(
                "test node {i} has no ground truth"
            )));
        }
    }
    Ok(())
}

/// Fraction of test nodes predicted correctly; `None` for an empty test set.
pub fn accuracy(
    predictions: &[usize],
    truth: &LabelAssignment,
    test: &[usize],
) -> Result<Option<f64>> {
    check_test_set(truth, test, predictions.len())?;
    if test.is_empty() {
        return Ok(None);
    }
    let correct = test
        .iter()
        .filter(|&&i| truth.label(i) == Some(predictions[i]))
        .count();
    Ok(Some(correct as f64 / test.len() as f64))
}

/// Number of nodes in the top-`p` share of `total`, `⌈p·total⌉`, with
/// products that are integral up to rounding treated as exact.
fn top_count(p: f64, total: usize) -> usize {
    let x = p * total as f64;
    let r = x.round();
    let c = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (c as usize).min(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPoint {
    pub p: f64,
    pub precision: Option<f64>,
}

/// Default proportions `0.1, 0.2, …, 1.0`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Precision over the `⌈p·|test|⌉` test nodes with the highest
/// `max_c F_ic`, ties broken by lower node index.
pub fn precision_at_p(
    f: &ScoreMatrix,
    truth: &LabelAssignment,
    test: &[usize],
    ps: &[f64],
) -> Result<Vec<PrecisionPoint>> {
    check_test_set(truth, test, f.num_nodes())?;
    if let Some(&p) = ps.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::validation(format!("p = {p} outside (0, 1]")));
    }
    let predictions = f.predictions();
    let confidence = f.confidence();
    let mut ranked = test.to_vec();
    ranked.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]).then(a.cmp(&b)));
    // prefix counts of correct predictions
    let mut correct_prefix = Vec::with_capacity(ranked.len() + 1);
    correct_prefix.push(0usize);
    for &i in &ranked {
        let hit = usize::from(truth.label(i) == Some(predictions[i]));
        correct_prefix.push(correct_prefix.last().unwrap() + hit);
    }
    Ok(ps
        .iter()
        .map(|&p| {
            let count = top_count(p, ranked.len());
            let precision = (count > 0).then(|| correct_prefix[count] as f64 / count as f64);
            PrecisionPoint { p, precision }
        })
        .collect())
}

/// Candidate values for each tunable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub ks: Vec<usize>,
    pub alphas: Vec<f64>,
    pub betas: Vec<u32>,
}

impl Default for ParameterGrid {
    fn default() -> Self {
        ParameterGrid {
            ks: vec![5, 15, 25],
            alphas: vec![0.01, 0.1, 0.5, 0.9],
            betas: vec![1, 2, 3],
        }
    }
}

impl ParameterGrid {
    /// Grid points for a method, in tie-break order (k, then β, then α).
    /// Parameters the method ignores are taken from `base`.
    pub fn points_for(&self, method: Method, base: &MethodParams) -> Result<Vec<MethodParams>> {
        let pick = |uses: bool, values: &[_], fallback, name: &str| -> Result<Vec<_>> {
            match (uses, values.is_empty()) {
                (false, _) => Ok(vec![fallback]),
                (true, true) => Err(Error::validation(format!("empty {name} grid for {method}"))),
                (true, false) => {
                    let mut v = values.to_vec();
                    v.sort_by(|a: &f64, b| a.total_cmp(b));
                    v.dedup();
                    Ok(v)
                }
            }
        };
        let ks = pick(
            method.uses_k(),
            &self.ks.iter().map(|&k| k as f64).collect::<Vec<_>>(),
            base.k as f64,
            "k",
        )?;
        let betas = pick(
            method.uses_beta(),
            &self.betas.iter().map(|&b| b as f64).collect::<Vec<_>>(),
            base.beta as f64,
            "beta",
        )?;
        let alphas = pick(method.uses_alpha(), &self.alphas, base.alpha, "alpha")?;
        let mut points = Vec::new();
        for &k in &ks {
            for &beta in &betas {
                for &alpha in &alphas {
                    points.push(MethodParams {
                        k: k as usize,
                        beta: beta as u32,
                        alpha,
                        ..*base
                    });
                }
            }
        }
        Ok(points)
    }

    pub fn max_k(&self) -> Option<usize> {
        self.ks.iter().copied().max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub method: Method,
    pub best: MethodParams,
    pub best_accuracy: f64,
    /// Mean held-out accuracy per grid point, in tie-break order.
    pub scores: Vec<(MethodParams, f64)>,
}

/// Assigns labelled nodes to folds. Stratified by class when every class
/// has at least `NUM_FOLDS` labelled members.
fn assign_folds(labels: &LabelAssignment, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labelled = labels.labelled();
    let mut by_class = vec![Vec::new(); labels.num_classes()];
    for &i in &labelled {
        by_class[labels.label(i).expect("labelled")].push(i);
    }
    let stratify = by_class.iter().all(|c| c.len() >= NUM_FOLDS);
    let groups = if stratify { by_class } else { vec![labelled] };
    let mut folds = vec![Vec::new(); NUM_FOLDS];
    let mut slot = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            folds[slot % NUM_FOLDS].push(i);
            slot += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

/// 3-fold cross-validation over the grid. Returns the point with the best
/// mean held-out accuracy; ties go to lower k, then β, then α.
pub fn cross_validate(
    ctx: &Classifier<'_>,
    labels: &LabelAssignment,
    method: Method,
    grid: &ParameterGrid,
    base: &MethodParams,
    seed: u64,
) -> Result<CrossValidation> {
    let points = grid.points_for(method, base)?;
    let labelled = labels.labelled();
    if labelled.len() < NUM_FOLDS {
        return Err(Error::validation(format!(
            "cross-validation needs at least {NUM_FOLDS} labelled nodes, got {}",
            labelled.len()
        )));
    }
    if method.uses_k() {
        if let Some(k) = points.iter().map(|p| p.k).max() {
            ctx.prepare_basis(method, k)?;
        }
    }
    let folds = assign_folds(labels, seed);
    let mut scores = Vec::with_capacity(points.len());
    for point in points {
        let mut total = 0.0;
        for (f, held_out) in folds.iter().enumerate() {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, nodes)| nodes.iter().copied())
                .collect();
            let result = ctx.run(method, &point, &labels.restricted_to(&train))?;
            total += accuracy(&result.predictions(), labels, held_out)?.unwrap_or(0.0);
        }
        scores.push((point, total / NUM_FOLDS as f64));
    }
    let (best, best_accuracy) = scores
        .iter()
        .fold(
            None,
            |acc: Option<(MethodParams, f64)>, &(p, s)| match acc {
                Some((_, b)) if s <= b => acc,
                _ => Some((p, s)),
            },
        )
        .expect("non-empty grid");
    Ok(CrossValidation {
        method,
        best,
        best_accuracy,
        scores,
    })
}

/// One evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub structure: Option<StructureTemplate>,
    pub ratio: Option<f64>,
    pub method: Method,
    pub params: MethodParams,
    pub seed: Option<u64>,
    pub labelled: usize,
    pub accuracy: Option<f64>,
    pub precision: Vec<PrecisionPoint>,
    pub seconds: f64,
    pub iterations: usize,
}

impl ResultRecord {
    /// The record without its wall-clock time, for determinism checks.
    pub fn without_timing(&self) -> ResultRecord {
        ResultRecord {
            seconds: 0.0,
            ..self.clone()
        }
    }
}

/// Runs `method` with fixed parameters and scores it on the test set.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    ctx: &Classifier<'_>,
    method: Method,
    params: &MethodParams,
    train: &LabelAssignment,
    truth: &LabelAssignment,
    ps: &[f64],
    seed: Option<u64>,
) -> Result<ResultRecord> {
    let test = test_nodes(truth, train);
    let start = Instant::now();
    let f = ctx.run(method, params, train)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(ResultRecord {
        structure: None,
        ratio: None,
        method,
        params: *params,
        seed,
        labelled: train.num_labelled(),
        accuracy: accuracy(&f.predictions(), truth, &test)?,
        precision: precision_at_p(&f, truth, &test, ps)?,
        seconds,
        iterations: f.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub structures: Vec<StructureTemplate>,
    pub ratios: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub mean_degree: f64,
    pub labelled: LabelledSize,
    pub grid: ParameterGrid,
    pub base: MethodParams,
    pub p_grid: Vec<f64>,
    pub weighting: ProjectionWeighting,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            structures: StructureTemplate::ALL.to_vec(),
            ratios: (0..=10).map(|i| i as f64 / 10.0).collect(),
            methods: vec![Method::Lp1, Method::Lp2, Method::CosineBoth, Method::Linbp],
            seeds: (0..10).collect(),
            n: 1000,
            mean_degree: 15.0,
            labelled: LabelledSize::Fraction(0.1),
            grid: ParameterGrid::default(),
            base: MethodParams::default(),
            p_grid: default_p_grid(),
            weighting: ProjectionWeighting::default(),
        }
    }
}

fn sweep_cell(
    config: &SweepConfig,
    structure: StructureTemplate,
    ratio: f64,
    seed: u64,
) -> Result<Vec<ResultRecord>> {
    let spec = build_block_spec(structure, config.n, config.mean_degree, ratio)?;
    let net = sample_network(&spec, derive_seed(seed, streams::NETWORK))?;
    let train = split_labels(
        &net.labels,
        config.labelled,
        derive_seed(seed, streams::SPLIT),
    )?;
    let affinity = derive_affinity_from_blocks(&spec)?.scaled_for(&net.graph);
    let ctx = Classifier::new(&net.graph)
        .with_affinity(affinity)
        .with_weighting(config.weighting);
    let mut records = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let cv = cross_validate(
            &ctx,
            &train,
            method,
            &config.grid,
            &config.base,
            derive_seed(seed, streams::FOLDS),
        )?;
        let mut record = evaluate(
            &ctx,
            method,
            &cv.best,
            &train,
            &net.labels,
            &config.p_grid,
            Some(seed),
        )?;
        record.structure = Some(structure);
        record.ratio = Some(ratio);
        records.push(record);
    }
    Ok(records)
}

/// For every (structure, ratio, seed): sample a network, label a random
/// subset, choose parameters per method by cross-validation, classify and
/// record metrics. Output is sorted by (structure, ratio, method, seed).
pub fn heterogeneity_sweep(config: &SweepConfig) -> Result<Vec<ResultRecord>> {
    if config.structures.is_empty()
        || config.ratios.is_empty()
        || config.methods.is_empty()
        || config.seeds.is_empty()
    {
        return Err(Error::validation(
            "sweep needs at least one structure, ratio, method and seed",
        ));
    }
    let cells: Vec<(StructureTemplate, f64, u64)> = config
        .structures
        .iter()
        .flat_map(|&s| {
            config
                .ratios
                .iter()
                .flat_map(move |&r| config.seeds.iter().map(move |&seed| (s, r, seed)))
        })
        .collect();
    let nested: Vec<Vec<ResultRecord>> = cells
        .par_iter()
        .map(|&(s, r, seed)| sweep_cell(config, s, r, seed))
        .collect::<Result<_>>()?;
    let mut records: Vec<ResultRecord> = nested.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        a.structure
            .cmp(&b.structure)
            .then(a.ratio.unwrap_or(0.0).total_cmp(&b.ratio.unwrap_or(0.0)))
            .then(a.method.cmp(&b.method))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub structure: Option<StructureTemplate>,
    pub ratio: Option<f64>,
    pub method: Method,
    pub runs: usize,
    pub mean_accuracy: Option<f64>,
}

/// Mean accuracy per (structure, ratio, method), over runs with a defined
/// accuracy. Input must be sorted as returned by the sweep.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for r in records {
        let same = rows.last().is_some_and(|last| {
            last.structure == r.structure && last.ratio == r.ratio && last.method == r.method
        });
        if !same {
            rows.push(SummaryRow {
                structure: r.structure,
                ratio: r.ratio,
                method: r.method,
                runs: 0,
                mean_accuracy: None,
            });
            sums.push((0.0, 0));
        }
        let (row, sum) = (rows.last_mut().unwrap(), sums.last_mut().unwrap());
        row.runs += 1;
        if let Some(a) = r.accuracy {
            sum.0 += a;
            sum.1 += 1;
        }
    }
    for (row, (s, c)) in rows.iter_mut().zip(sums) {
        row.mean_accuracy = (c > 0).then(|| s / c as f64);
    }
    rows
}

pub const RESULTS_HEADER: &str =
    "structure,ratio,method,k,alpha,beta,seed,labelled,accuracy,p,precision,seconds,iterations";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes one CSV row per (record, p). Unused parameters and undefined
/// metrics are written as `NA`; with `include_timing = false` the
/// seconds column is `NA` too, which makes the output reproducible.
pub fn write_results_csv<W: Write>(
    records: &[ResultRecord],
    mut w: W,
    include_timing: bool,
) -> Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in records {
        let m = r.method;
        let prefix = format!(
            "{},{},{},{},{},{},{},{},{}",
            opt(r.structure.map(|s| s.name())),
            opt(r.ratio),
            m,
            opt(m.uses_k().then_some(r.params.k)),
            opt(m.uses_alpha().then_some(r.params.alpha)),
            opt(m.uses_beta().then_some(r.params.beta)),
            opt(r.seed),
            r.labelled,
            opt(r.accuracy),
        );
        let seconds = opt(include_timing.then_some(r.seconds));
        for pp in &r.precision {
            writeln!(
                w,
                "{prefix},{},{},{seconds},{}",
                pp.p,
                opt(pp.precision),
                r.iterations
            )?;
        }
        if r.precision.is_empty() {
            writeln!(w, "{prefix},NA,NA,{seconds},{}", r.iterations)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub method: Method,
    pub params: MethodParams,
    pub labelled: usize,
    pub repetitions: usize,
    pub median_seconds: f64,
    pub seconds: Vec<f64>,
    /// Iterations to convergence (from the last repetition).
    pub iterations: usize,
}

impl TimingRecord {
    pub fn seconds_per_iteration(&self) -> f64 {
        self.median_seconds / self.iterations.max(1) as f64
    }
}

/// Median wall-clock time of `repetitions` full runs. Each repetition
/// starts from a fresh context, so cosine timings include the eigenbasis.
pub fn benchmark(
    graph: &SparseGraph,
    affinity: Option<&AffinityMatrix>,
    labels: &LabelAssignment,
    method: Method,
    params: &MethodParams,
    repetitions: usize,
) -> Result<TimingRecord> {
    if repetitions == 0 {
        return Err(Error::validation("repetitions must be at least 1"));
    }
    let mut seconds = Vec::with_capacity(repetitions);
    let mut iterations = 0;
    for _ in 0..repetitions {
        let mut ctx = Classifier::new(graph);
        if let Some(h) = affinity {
            ctx = ctx.with_affinity(h.clone());
        }
        let start = Instant::now();
        let f = ctx.run(method, params, labels)?;
        seconds.push(start.elapsed().as_secs_f64());
        iterations = f.iterations;
    }
    let mut sorted = seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_seconds = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(TimingRecord {
        method,
        params: *params,
        labelled: labels.num_labelled(),
        repetitions,
        median_seconds,
        seconds,
        iterations,
    })
}

pub const TIMING_HEADER: &str =
    "method,k,alpha,beta,labelled,repetitions,median_seconds,iterations";

pub fn write_timing_csv<W: Write>(records: &[TimingRecord], mut w: W) -> Result<()> {
    writeln!(w, "{TIMING_HEADER}")?;
    for r in records {
        let m = r.method;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            m,
            opt(m.uses_k().then_some(r.params.k)),
            opt(m.uses_alpha().then_some(r.params.alpha)),
            opt(m.uses_beta().then_some(r.params.beta)),
            r.labelled,
            r.repetitions,
            r.median_seconds,
            r.iterations
        )?;
    }
    Ok(())
}
