use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use relprop::baselines::{derive_affinity_from_blocks, AffinityMatrix};
use relprop::eval::{
    self, benchmark, cross_validate, default_p_grid, derive_seed, heterogeneity_sweep,
    split_labels, streams, summarize, write_results_csv, write_timing_csv, LabelledSize,
    ParameterGrid, ResultRecord, SweepConfig,
};
use relprop::graph::{read_edge_pairs, read_label_pairs, write_edge_list, write_labels, Indexing};
use relprop::methods::empirical_class_density;
use relprop::sbm::{build_block_spec, sample_network};
use relprop::{
    Classifier, Directedness, LabelAssignment, Method, MethodParams, ProjectionWeighting,
    SparseGraph, StructureTemplate,
};

/// Node classification by label propagation on relational networks.
#[derive(Parser)]
#[command(name = "relprop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a network from a block-model template
    Generate(GenerateArgs),
    /// Classify the unlabelled nodes of a network
    Classify(ClassifyArgs),
    /// Choose method parameters by 3-fold cross-validation
    Crossval(CrossvalArgs),
    /// Accuracy over block-model templates and link-density ratios
    Sweep(SweepArgs),
    /// Median run time of methods on one network
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Block-model template: assortative, disassortative, mixed, cyclic or heterogeneous
    #[arg(long)]
    structure: StructureTemplate,
    /// Number of nodes
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Expected mean degree (out-degree for directed templates)
    #[arg(long, default_value_t = 15.0)]
    degree: f64,
    /// Ratio p_w/p_b of weak to strong block link probability
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    seed: u64,
    /// Output prefix; writes PREFIX.edges, PREFIX.labels and PREFIX.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphInput {
    /// Edge list with one `source target` pair per line
    #[arg(long)]
    edges: PathBuf,
    /// Labels with one `node_id class_id` pair per line
    #[arg(long)]
    labels: PathBuf,
    /// Treat the edge list as directed
    #[arg(long)]
    directed: bool,
    /// Node ids in input and output files start at 1
    #[arg(long)]
    one_based: bool,
    /// Number of nodes [default: largest node id + 1]
    #[arg(long)]
    n: Option<usize>,
    /// Number of classes [default: largest class id + 1]
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Args)]
struct ParamArgs {
    /// Propagation weight α in [0, 1] [default: 0.1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of two-step hops per iteration (lp2) [default: 1]
    #[arg(long)]
    beta: Option<u32>,
    /// Eigenvectors per similarity matrix (cosine methods) [default: 15]
    #[arg(long)]
    k: Option<usize>,
    /// Convergence tolerance on the max entry change [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap [default: 1000]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Restart probability of the ghost-edge random walk [default: 0.15]
    #[arg(long)]
    restart: Option<f64>,
}

#[derive(Args)]
struct GridArgs {
    /// Candidate k values, comma separated [default: 5,15,25]
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Candidate α values, comma separated [default: 0.01,0.1,0.5,0.9]
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Candidate β values, comma separated [default: 1,2,3]
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<u32>>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Method: lp1, lp2, cosine-undirected, cosine-directed, cosine-both, linbp, linbp-i or ghost
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    params: ParamArgs,
    /// Treat --labels as ground truth and train on this random fraction of it
    #[arg(long)]
    labelled: Option<f64>,
    /// Seed for the --labelled split
    #[arg(long)]
    seed: Option<u64>,
    /// Ground truth for scoring when --labels holds only the training labels
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Predictions file: `node_id predicted_class max_score` per line
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSV (needs ground truth)
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Cosine projection: unit (ΦΦᵀ) or eigenvalue (ΦΛΦᵀ)
    #[arg(long, default_value = "unit", value_parser = parse_weighting)]
    weighting: ProjectionWeighting,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    input: GraphInput,
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    grid: GridArgs,
    /// Convergence tolerance [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap [default: 1000]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Restart probability for ghost [default: 0.15]
    #[arg(long)]
    restart: Option<f64>,
    /// Treat --labels as ground truth and cross-validate on this random fraction of it
    #[arg(long)]
    labelled: Option<f64>,
    /// Seed for the split and the fold assignment
    #[arg(long)]
    seed: u64,
    /// Output JSON with the chosen parameters
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "unit", value_parser = parse_weighting)]
    weighting: ProjectionWeighting,
}

#[derive(Args)]
struct SweepArgs {
    /// Templates, comma separated, or `all`
    #[arg(long, default_value = "all")]
    structures: String,
    /// Ratios as `start:end:step` or a comma separated list
    #[arg(long, default_value = "0:1:0.1")]
    ratios: String,
    /// Methods, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "lp1,lp2,cosine-both,linbp"
    )]
    methods: Vec<Method>,
    /// Number of seeds per cell; seeds are FIRST_SEED..FIRST_SEED+SEEDS
    #[arg(long)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 15.0)]
    degree: f64,
    /// Fraction of nodes labelled for training
    #[arg(long, default_value_t = 0.1)]
    labelled: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Results CSV, one row per (run, p)
    #[arg(long)]
    out: PathBuf,
    /// Also write wall-clock seconds (makes the output non-reproducible)
    #[arg(long)]
    timings: bool,
    #[arg(long, default_value = "unit", value_parser = parse_weighting)]
    weighting: ProjectionWeighting,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Methods, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<Method>,
    #[command(flatten)]
    params: ParamArgs,
    /// Fractions of labelled nodes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    labelled: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Timing CSV
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<relprop::Error> for Failure {
    fn from(e: relprop::Error) -> Self {
        if e.is_validation() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn parse_weighting(s: &str) -> Result<ProjectionWeighting, String> {
    match s {
        "unit" => Ok(ProjectionWeighting::Unit),
        "eigenvalue" => Ok(ProjectionWeighting::Eigenvalue),
        _ => Err(format!(
            "unknown weighting '{s}' (expected unit or eigenvalue)"
        )),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush()
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn with_context(path: &Path, e: relprop::Error) -> Failure {
    match Failure::from(e) {
        Failure::Usage(m) => Failure::Usage(format!("{}: {m}", path.display())),
        Failure::Runtime(m) => Failure::Runtime(format!("{}: {m}", path.display())),
    }
}

struct LoadedInput {
    graph: SparseGraph,
    labels: LabelAssignment,
    indexing: Indexing,
}

impl GraphInput {
    fn indexing(&self) -> Indexing {
        if self.one_based {
            Indexing::OneBased
        } else {
            Indexing::ZeroBased
        }
    }

    fn load(&self) -> CliResult<LoadedInput> {
        let indexing = self.indexing();
        let edges = read_edge_pairs(open(&self.edges)?, indexing)
            .map_err(|e| with_context(&self.edges, e))?;
        let labels = read_label_pairs(open(&self.labels)?, indexing)
            .map_err(|e| with_context(&self.labels, e))?;
        let needed = edges
            .iter()
            .map(|&(a, b)| a.max(b) + 1)
            .chain(labels.iter().map(|&(i, _)| i + 1))
            .max()
            .unwrap_or(0);
        let n = match self.n {
            Some(n) if n < needed => {
                return usage(format!(
                    "--n {n} is smaller than the largest node id in the inputs"
                ))
            }
            Some(n) => n,
            None => needed,
        };
        let max_class = labels.iter().map(|&(_, c)| c + 1).max().unwrap_or(0);
        let classes = match self.classes {
            Some(c) if c < max_class => {
                return usage(format!(
                    "--classes {c} but the labels use class {}",
                    max_class - 1
                ))
            }
            Some(c) => c,
            None => max_class,
        };
        if classes == 0 {
            return usage(format!("{}: no labels", self.labels.display()));
        }
        let directedness = if self.directed {
            Directedness::Directed
        } else {
            Directedness::Undirected
        };
        let graph = SparseGraph::from_edges(n, directedness, edges)
            .map_err(|e| with_context(&self.edges, e))?;
        let labels = LabelAssignment::from_pairs(n, classes, labels)
            .map_err(|e| with_context(&self.labels, e))?;
        Ok(LoadedInput {
            graph,
            labels,
            indexing,
        })
    }

    fn load_truth(&self, path: &Path, n: usize, classes: usize) -> CliResult<LabelAssignment> {
        let pairs =
            read_label_pairs(open(path)?, self.indexing()).map_err(|e| with_context(path, e))?;
        LabelAssignment::from_pairs(n, classes, pairs).map_err(|e| with_context(path, e))
    }
}

fn check_unit_interval(name: &str, v: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        usage(format!("--{name} {v} outside [0, 1]"))
    }
}

impl ParamArgs {
    /// Fills defaults and rejects flags that `method` does not use.
    fn resolve(&self, method: Method) -> CliResult<MethodParams> {
        self.resolve_for(&[method])
    }

    /// Like `resolve`, but a flag only has to apply to one of `methods`.
    fn resolve_for(&self, methods: &[Method]) -> CliResult<MethodParams> {
        let mut p = MethodParams::default();
        let any = |f: fn(Method) -> bool| methods.iter().any(|&m| f(m));
        let names = methods
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(",");
        let reject = |flag: &str| usage(format!("--{flag} does not apply to method {names}"));
        if let Some(a) = self.alpha {
            if !any(Method::uses_alpha) {
                return reject("alpha");
            }
            check_unit_interval("alpha", a)?;
            p.alpha = a;
        }
        if let Some(b) = self.beta {
            if !any(Method::uses_beta) {
                return reject("beta");
            }
            if b == 0 {
                return usage("--beta must be at least 1");
            }
            p.beta = b;
        }
        if let Some(k) = self.k {
            if !any(Method::uses_k) {
                return reject("k");
            }
            if k == 0 {
                return usage("--k must be at least 1");
            }
            p.k = k;
        }
        if let Some(r) = self.restart {
            if !any(Method::uses_restart) {
                return reject("restart");
            }
            if !(r > 0.0 && r <= 1.0) {
                return usage(format!("--restart {r} outside (0, 1]"));
            }
            p.restart = r;
        }
        let iterative = |m: Method| m != Method::Ghost;
        if let Some(t) = self.tol {
            if !any(iterative) {
                return reject("tol");
            }
            if !(t > 0.0) {
                return usage("--tol must be positive");
            }
            p.tolerance = t;
        }
        if let Some(t) = self.max_iter {
            if !any(iterative) {
                return reject("max-iter");
            }
            if t == 0 {
                return usage("--max-iter must be at least 1");
            }
            p.max_iterations = t;
        }
        Ok(p)
    }
}

impl GridArgs {
    fn grid(&self, method: Method) -> CliResult<ParameterGrid> {
        let mut grid = ParameterGrid::default();
        if let Some(ks) = &self.ks {
            if !method.uses_k() {
                return usage(format!("--ks does not apply to method {method}"));
            }
            if ks.contains(&0) {
                return usage("--ks values must be at least 1");
            }
            grid.ks = ks.clone();
        }
        if let Some(alphas) = &self.alphas {
            if !method.uses_alpha() {
                return usage(format!("--alphas does not apply to method {method}"));
            }
            for &a in alphas {
                check_unit_interval("alphas", a)?;
            }
            grid.alphas = alphas.clone();
        }
        if let Some(betas) = &self.betas {
            if !method.uses_beta() {
                return usage(format!("--betas does not apply to method {method}"));
            }
            if betas.contains(&0) {
                return usage("--betas values must be at least 1");
            }
            grid.betas = betas.clone();
        }
        Ok(grid)
    }

    fn sweep_grid(&self) -> CliResult<ParameterGrid> {
        let mut grid = ParameterGrid::default();
        if let Some(ks) = &self.ks {
            grid.ks = ks.clone();
        }
        if let Some(alphas) = &self.alphas {
            grid.alphas = alphas.clone();
        }
        if let Some(betas) = &self.betas {
            grid.betas = betas.clone();
        }
        Ok(grid)
    }
}

/// The affinity linBP uses on an observed network: centred class-to-class
/// link density of the ground truth, scaled for convergence.
fn observed_affinity(graph: &SparseGraph, truth: &LabelAssignment) -> CliResult<AffinityMatrix> {
    let density = empirical_class_density(graph, truth)?;
    Ok(AffinityMatrix::centred(&density)?.scaled_for(graph))
}

fn split(truth: &LabelAssignment, fraction: f64, seed: Option<u64>) -> CliResult<LabelAssignment> {
    check_unit_interval("labelled", fraction)?;
    let Some(seed) = seed else {
        return usage("--labelled needs --seed");
    };
    Ok(split_labels(
        truth,
        LabelledSize::Fraction(fraction),
        derive_seed(seed, streams::SPLIT),
    )?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn generate(args: GenerateArgs) -> CliResult<()> {
    let spec = build_block_spec(args.structure, args.n, args.degree, args.ratio)?;
    let net = sample_network(&spec, derive_seed(args.seed, streams::NETWORK))?;
    let path = |ext: &str| {
        let mut p = args.out.clone().into_os_string();
        p.push(format!(".{ext}"));
        PathBuf::from(p)
    };
    let (edges, labels, sidecar) = (path("edges"), path("labels"), path("json"));
    let mut w = create(&edges)?;
    write_edge_list(&net.graph, &mut w)?;
    finish(w, &edges)?;
    let mut w = create(&labels)?;
    write_labels(&net.labels, &mut w)?;
    finish(w, &labels)?;
    let meta = json!({
        "structure": args.structure.name(),
        "n": args.n,
        "mean_degree": args.degree,
        "ratio": args.ratio,
        "seed": args.seed,
        "directed": net.graph.is_directed(),
        "num_edges": net.graph.num_edges(),
        "block_model": spec,
        "groups": net.groups,
    });
    let mut w = create(&sidecar)?;
    serde_json::to_writer_pretty(&mut w, &meta).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(w).map_err(|e| Failure::Runtime(e.to_string()))?;
    finish(w, &sidecar)?;
    println!(
        "{} nodes, {} edges -> {}, {}, {}",
        net.graph.num_nodes(),
        net.graph.num_edges(),
        edges.display(),
        labels.display(),
        sidecar.display()
    );
    Ok(())
}

fn classify(args: ClassifyArgs) -> CliResult<()> {
    let params = args.params.resolve(args.method)?;
    let LoadedInput {
        graph,
        labels,
        indexing,
    } = args.input.load()?;
    let (train, truth) = match (args.labelled, &args.truth) {
        (Some(_), Some(_)) => return usage("--labelled and --truth are mutually exclusive"),
        (Some(f), None) => (split(&labels, f, args.seed)?, Some(labels)),
        (None, Some(path)) => {
            let truth = args
                .input
                .load_truth(path, graph.num_nodes(), labels.num_classes())?;
            (labels, Some(truth))
        }
        (None, None) => {
            if args.seed.is_some() {
                return usage("--seed only applies together with --labelled");
            }
            (labels, None)
        }
    };
    if args.metrics.is_some() && truth.is_none() {
        return usage("--metrics needs ground truth (--labelled or --truth)");
    }
    if train.num_labelled() == 0 {
        return usage("no labelled training nodes");
    }
    let mut ctx = Classifier::new(&graph).with_weighting(args.weighting);
    if args.method == Method::Linbp {
        ctx = ctx.with_affinity(observed_affinity(&graph, truth.as_ref().unwrap_or(&train))?);
    }
    let scores = ctx.run(args.method, &params, &train)?;
    let offset = usize::from(indexing == Indexing::OneBased);
    let mut w = create(&args.out)?;
    let confidence = scores.confidence();
    for (i, c) in scores.predictions().into_iter().enumerate() {
        writeln!(w, "{} {} {}", i + offset, c, confidence[i])
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    finish(w, &args.out)?;
    if let Some(truth) = truth {
        let test = eval::test_nodes(&truth, &train);
        let record = ResultRecord {
            structure: None,
            ratio: None,
            method: args.method,
            params,
            seed: args.seed,
            labelled: train.num_labelled(),
            accuracy: eval::accuracy(&scores.predictions(), &truth, &test)?,
            precision: eval::precision_at_p(&scores, &truth, &test, &default_p_grid())?,
            seconds: 0.0,
            iterations: scores.iterations,
        };
        match record.accuracy {
            Some(a) => println!(
                "accuracy {a:.4} on {} test nodes ({} iterations)",
                test.len(),
                record.iterations
            ),
            None => println!("no test nodes: accuracy undefined"),
        }
        if let Some(path) = &args.metrics {
            let mut w = create(path)?;
            write_results_csv(&[record], &mut w, false)?;
            finish(w, path)?;
        }
    }
    Ok(())
}

fn crossval(args: CrossvalArgs) -> CliResult<()> {
    let base = ParamArgs {
        alpha: None,
        beta: None,
        k: None,
        tol: args.tol,
        max_iter: args.max_iter,
        restart: args.restart,
    }
    .resolve(args.method)?;
    let grid = args.grid.grid(args.method)?;
    let LoadedInput { graph, labels, .. } = args.input.load()?;
    let train = match args.labelled {
        Some(f) => split(&labels, f, Some(args.seed))?,
        None => labels.clone(),
    };
    let mut ctx = Classifier::new(&graph).with_weighting(args.weighting);
    if args.method == Method::Linbp {
        ctx = ctx.with_affinity(observed_affinity(&graph, &labels)?);
    }
    let cv = cross_validate(
        &ctx,
        &train,
        args.method,
        &grid,
        &base,
        derive_seed(args.seed, streams::FOLDS),
    )?;
    let m = args.method;
    let point = |p: &MethodParams| {
        json!({
            "alpha": m.uses_alpha().then_some(p.alpha),
            "beta": m.uses_beta().then_some(p.beta),
            "k": m.uses_k().then_some(p.k),
        })
    };
    let out = json!({
        "method": m,
        "seed": args.seed,
        "labelled": train.num_labelled(),
        "folds": eval::NUM_FOLDS,
        "best": point(&cv.best),
        "mean_accuracy": cv.best_accuracy,
        "grid": cv.scores.iter().map(|(p, a)| {
            let mut v = point(p);
            v["mean_accuracy"] = json!(a);
            v
        }).collect::<Vec<_>>(),
    });
    let mut w = create(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &out).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(w).map_err(|e| Failure::Runtime(e.to_string()))?;
    finish(w, &args.out)?;
    println!(
        "{m}: best {} mean accuracy {:.4}",
        point(&cv.best),
        cv.best_accuracy
    );
    Ok(())
}

fn parse_structures(s: &str) -> CliResult<Vec<StructureTemplate>> {
    if s == "all" {
        return Ok(StructureTemplate::ALL.to_vec());
    }
    s.split(',')
        .map(|t| t.trim().parse::<StructureTemplate>().map_err(Failure::from))
        .collect()
}

fn parse_ratios(s: &str) -> CliResult<Vec<f64>> {
    let number = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Failure::Usage(format!("'{t}' in --ratios is not a number")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let ratios = match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (number(start)?, number(end)?, number(step)?);
            if !(step > 0.0) || end < start {
                return usage("--ratios range needs start <= end and a positive step");
            }
            let count = ((end - start) / step + 1e-9).floor() as usize;
            (0..=count)
                .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                .collect()
        }
        [list] => list.split(',').map(number).collect::<CliResult<Vec<_>>>()?,
        _ => return usage("--ratios must be start:end:step or a comma separated list"),
    };
    if let Some(r) = ratios.iter().find(|&&r| !(r >= 0.0)) {
        return usage(format!("ratio {r} is negative"));
    }
    Ok(ratios)
}

fn sweep(args: SweepArgs) -> CliResult<()> {
    if args.seeds == 0 {
        return usage("--seeds must be at least 1");
    }
    check_unit_interval("labelled", args.labelled)?;
    let config = SweepConfig {
        structures: parse_structures(&args.structures)?,
        ratios: parse_ratios(&args.ratios)?,
        methods: args.methods,
        seeds: (args.first_seed..args.first_seed + args.seeds).collect(),
        n: args.n,
        mean_degree: args.degree,
        labelled: LabelledSize::Fraction(args.labelled),
        grid: args.grid.sweep_grid()?,
        base: MethodParams::default(),
        p_grid: default_p_grid(),
        weighting: args.weighting,
    };
    // fail fast on infeasible calibrations before any sampling
    for &s in &config.structures {
        for &r in &config.ratios {
            build_block_spec(s, config.n, config.mean_degree, r)?;
        }
        if config.methods.contains(&Method::Linbp) {
            let spec = build_block_spec(s, config.n, config.mean_degree, config.ratios[0])?;
            derive_affinity_from_blocks(&spec)?;
        }
    }
    let records = heterogeneity_sweep(&config)?;
    let mut w = create(&args.out)?;
    write_results_csv(&records, &mut w, args.timings)?;
    finish(w, &args.out)?;
    println!("structure ratio method runs mean_accuracy");
    for row in summarize(&records) {
        println!(
            "{} {} {} {} {}",
            row.structure.map_or("NA", |s| s.name()),
            row.ratio
                .map_or_else(|| "NA".to_string(), |r| r.to_string()),
            row.method,
            row.runs,
            fmt_opt(row.mean_accuracy)
        );
    }
    Ok(())
}

fn bench(args: BenchArgs) -> CliResult<()> {
    let params = args.params.resolve_for(&args.methods)?;
    if args.repetitions == 0 {
        return usage("--repetitions must be at least 1");
    }
    let LoadedInput { graph, labels, .. } = args.input.load()?;
    let affinity = if args.methods.contains(&Method::Linbp) {
        Some(observed_affinity(&graph, &labels)?)
    } else {
        None
    };
    let mut records = Vec::new();
    for &fraction in &args.labelled {
        let train = split(&labels, fraction, Some(args.seed))?;
        for &method in &args.methods {
            let r = benchmark(
                &graph,
                affinity.as_ref(),
                &train,
                method,
                &params,
                args.repetitions,
            )?;
            println!(
                "{method} labelled {} median {:.6}s ({} iterations)",
                r.labelled, r.median_seconds, r.iterations
            );
            records.push(r);
        }
    }
    let mut w = create(&args.out)?;
    write_timing_csv(&records, &mut w)?;
    finish(w, &args.out)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Classify(a) => classify(a),
        Command::Crossval(a) => crossval(a),
        Command::Sweep(a) => sweep(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("error: invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
