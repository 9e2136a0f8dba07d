//! Command definitions and their implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hkgf_core::cost::{cost_table, CostRow};
use hkgf_core::evaluation::{
    aggregate, cv_repeat, discriminative_connections_attention,
    discriminative_connections_correlation, CvReport, RankedConnection,
};
use hkgf_core::graphs::{generate_synthetic_cohort, generate_synthetic_raw, Modality, Subject};
use hkgf_core::kernels::KernelActivation;
use hkgf_core::layers::EncoderKind;
use hkgf_core::training::{
    gradcheck, gradcheck_with_fault, train, GradcheckReport, Model, ModelSpec, PreparedSubject,
};
use hkgf_core::Matrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::bench::{kernel_sweep, sweep_csv, SweepConfig};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{check_writable, write_atomic, write_json, write_matrix};
use crate::manifest::{load_cohort, Manifest, ManifestEntry};

/// Environment variable holding the worker count for parallel repeats.
pub const THREADS_ENV: &str = "HKGF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hkgf", version, about = "Hyperbolic kernel graph fusion for brain connectomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-class cohort (matrices + manifest).
    Synth(SynthArgs),
    /// Build FC/SC graphs for every subject of a manifest.
    BuildGraphs(BuildGraphsArgs),
    /// Train one model on a whole cohort.
    Train(TrainArgs),
    /// Repeated stratified cross-validation.
    Cv(CvArgs),
    /// Random-feature kernel error against the exact kernel.
    KernelBench(KernelBenchArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Parameter and MAC counts of the encoders.
    Flops(FlopsArgs),
    /// Rank discriminative ROI connections with a trained model.
    Discriminative(DiscriminativeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub subjects: usize,
    #[arg(long, default_value_t = 32)]
    pub rois: usize,
    #[arg(long, default_value_t = 1.0)]
    pub effect: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct BuildGraphsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    /// Retained FC edges become 1.
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Flags shared by `train` and `cv`; each one overrides the config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kind: Option<EncoderKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint whose name-matching tensors initialise the model.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Hrbf,
    Hac,
}

#[derive(Debug, Args)]
pub struct KernelBenchArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelChoice::Hrbf)]
    pub kernel: KernelChoice,
    #[arg(long, value_delimiter = ',', default_value = "64,256,1024,4096")]
    pub features: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub oracle_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "hkgcn")]
    pub kind: EncoderKind,
    #[arg(long, default_value_t = 8)]
    pub rois: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    /// Corrupt the analytic gradient of this tensor (self-test).
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[arg(long, default_value_t = 116)]
    pub rois: usize,
    #[arg(long, default_value_t = 116)]
    pub fmri_input: usize,
    #[arg(long, default_value_t = 348)]
    pub dti_input: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Correlation,
    Attention,
}

#[derive(Debug, Args)]
pub struct DiscriminativeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Route::Correlation)]
    pub route: Route,
    #[arg(long, default_value_t = 15)]
    pub top_k: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::BuildGraphs(a) => cmd_build_graphs(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Cv(a) => cmd_cv(&a),
        Command::KernelBench(a) => cmd_kernel_bench(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Flops(a) => cmd_flops(&a),
        Command::Discriminative(a) => cmd_discriminative(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let manifest_path = a.out.join("manifest.json");
    check_writable(&manifest_path, a.force)?;
    let raw = generate_synthetic_raw(a.subjects, a.rois, a.effect, a.seed)?;
    let mut manifest = Manifest::default();
    for r in &raw {
        let dir = PathBuf::from(&r.id);
        let files = [
            ("fc_timeseries.csv", r.timeseries.values()),
            ("sc_fn.csv", &r.fiber_number),
            ("sc_fa.csv", &r.fractional_anisotropy),
            ("sc_fl.csv", &r.fiber_length),
        ];
        for (name, m) in files {
            write_matrix(&a.out.join(&dir).join(name), m, a.force)?;
        }
        manifest.subjects.push(ManifestEntry {
            id: r.id.clone(),
            label: r.label,
            fc_timeseries_path: Some(dir.join("fc_timeseries.csv")),
            fc_matrix_path: None,
            sc_fn_path: dir.join("sc_fn.csv"),
            sc_fa_path: dir.join("sc_fa.csv"),
            sc_fl_path: dir.join("sc_fl.csv"),
        });
    }
    write_json(&manifest_path, &manifest, a.force)?;
    println!("wrote {} subjects to {}", raw.len(), a.out.display());
    Ok(())
}

/// Per-subject graph files written by `build-graphs`.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEntry {
    pub id: String,
    pub label: u8,
    pub fc_adjacency: PathBuf,
    pub fc_features: PathBuf,
    pub sc_adjacency: PathBuf,
    pub sc_features: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphManifest {
    pub subjects: Vec<GraphEntry>,
}

pub fn cmd_build_graphs(a: &BuildGraphsArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(k) = a.keep_fraction {
        cfg.fc.keep_fraction = k;
    }
    if a.binary {
        cfg.fc.binary = true;
    }
    cfg.validate()?;
    let index = a.out.join("graphs.json");
    check_writable(&index, a.force)?;
    let cohort = load_cohort(&a.manifest, &cfg.fc)?;
    let mut out = GraphManifest::default();
    for s in &cohort {
        let dir = PathBuf::from(&s.id);
        let fc = s.graph(Modality::Fc)?;
        let sc = s.graph(Modality::Sc)?;
        let entry = GraphEntry {
            id: s.id.clone(),
            label: s.label,
            fc_adjacency: dir.join("fc_adjacency.csv"),
            fc_features: dir.join("fc_features.csv"),
            sc_adjacency: dir.join("sc_adjacency.csv"),
            sc_features: dir.join("sc_features.csv"),
        };
        write_matrix(&a.out.join(&entry.fc_adjacency), &fc.adjacency, a.force)?;
        write_matrix(&a.out.join(&entry.fc_features), &fc.features, a.force)?;
        write_matrix(&a.out.join(&entry.sc_adjacency), &sc.adjacency, a.force)?;
        write_matrix(&a.out.join(&entry.sc_features), &sc.features, a.force)?;
        out.subjects.push(entry);
    }
    write_json(&index, &out, a.force)?;
    println!("wrote graphs for {} subjects to {}", cohort.len(), a.out.display());
    Ok(())
}

/// Loads the graph files written by `build-graphs`.
pub fn load_graph_cohort(index: &Path) -> Result<Vec<Subject>> {
    use hkgf_core::graphs::ConnectivityGraph;
    let m: GraphManifest = crate::io::read_json(index)?;
    let base = index.parent().unwrap_or(Path::new("."));
    m.subjects
        .iter()
        .map(|e| {
            let read = |p: &Path| crate::io::read_matrix(&base.join(p));
            let fc = ConnectivityGraph::new(read(&e.fc_adjacency)?, read(&e.fc_features)?, Modality::Fc)?;
            let sc = ConnectivityGraph::new(read(&e.sc_adjacency)?, read(&e.sc_features)?, Modality::Sc)?;
            Ok(Subject::new(e.id.clone(), e.label, vec![fc, sc])?)
        })
        .collect()
}

fn resolve_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &a.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(o) = &a.out {
        cfg.output = Some(o.clone());
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(k) = a.kind {
        cfg.model.kind = k;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    cfg.train.seed = cfg.seed;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| CliError::Invalid(format!("no {what} given (flag or config)")))
}

/// Builds the model spec from the cohort's feature widths.
pub fn spec_for(cfg: &RunConfig, cohort: &[Subject]) -> Result<ModelSpec> {
    let first = &cohort[0];
    let fc = first.graph(Modality::Fc)?.feature_dim();
    let sc = first.graph(Modality::Sc)?.feature_dim();
    cfg.model.build(fc, sc)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    subjects: usize,
    epoch_loss: &'a [f64],
    loaded_tensors: usize,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a.run)?;
    cfg.validate()?;
    let out = required(&cfg.output, "output directory")?;
    let ckpt_path = out.join("model.ckpt");
    let hist_path = out.join("history.json");
    check_writable(&ckpt_path, a.run.force)?;
    check_writable(&hist_path, a.run.force)?;
    let cohort = load_cohort(required(&cfg.manifest, "manifest")?, &cfg.fc)?;
    let spec = spec_for(&cfg, &cohort)?;
    let mut model = Model::new(spec, cfg.seed)?;
    let mut loaded = 0;
    if let Some(init) = &a.init {
        let ck = Checkpoint::load(init)?;
        loaded = model.import_weights(ck.tensors.iter().map(|(n, m)| (n.as_str(), m)))?;
    }
    let prepared: Vec<PreparedSubject> = cohort
        .iter()
        .map(|s| model.prepare(s))
        .collect::<hkgf_core::Result<_>>()?;
    let history = train(&mut model, &prepared, &cfg.train)?;
    Checkpoint::from_model(&model).save(&ckpt_path, a.run.force)?;
    let summary = TrainSummary {
        subjects: cohort.len(),
        epoch_loss: &history.epoch_loss,
        loaded_tensors: loaded,
    };
    write_json(&hist_path, &summary, a.run.force)?;
    if let (Some(first), Some(last)) = (history.epoch_loss.first(), history.epoch_loss.last()) {
        println!("trained {} epochs: loss {first:.6} -> {last:.6}", history.epoch_loss.len());
    }
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

/// Thread pool sized by `HKGF_THREADS` (rayon's default when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Invalid(e.to_string()))
}

/// Runs the repeats of a plan in parallel; the report is independent of
/// scheduling because repeats are sorted before aggregation.
pub fn run_cv(cohort: &[Subject], cfg: &RunConfig) -> Result<CvReport> {
    let spec = spec_for(cfg, cohort)?;
    let plan = cfg.cv_plan();
    plan.validate()?;
    let pool = thread_pool()?;
    let repeats = pool.install(|| {
        (0..plan.repeats)
            .into_par_iter()
            .map(|r| cv_repeat(cohort, &spec, &cfg.train, &plan, r))
            .collect::<hkgf_core::Result<Vec<_>>>()
    })?;
    Ok(aggregate(repeats)?)
}

pub fn metrics_table(report: &CvReport) -> String {
    let mut s = String::from("metric      mean     std\n");
    for m in &report.metrics {
        s.push_str(&format!("{:<8} {:>7.2} {:>7.2}\n", m.metric.to_uppercase(), m.mean, m.std));
    }
    s
}

pub fn cmd_cv(a: &CvArgs) -> Result<()> {
    let mut cfg = resolve_config(&a.run)?;
    if let Some(f) = a.folds {
        cfg.cv.folds = f;
    }
    if let Some(r) = a.repeats {
        cfg.cv.repeats = r;
        cfg.cv.seeds = None;
    }
    cfg.validate()?;
    let out = required(&cfg.output, "output directory")?;
    let path = out.join("metrics.json");
    check_writable(&path, a.run.force)?;
    let cohort = load_cohort(required(&cfg.manifest, "manifest")?, &cfg.fc)?;
    let report = run_cv(&cohort, &cfg)?;
    write_json(&path, &report, a.run.force)?;
    print!("{}", metrics_table(&report));
    println!("metrics: {}", path.display());
    Ok(())
}

pub fn cmd_kernel_bench(a: &KernelBenchArgs) -> Result<()> {
    check_writable(&a.out, a.force)?;
    if a.features.is_empty() || a.features.contains(&0) || a.pairs == 0 || a.dim == 0 {
        return Err(CliError::Invalid("features, pairs and dim must be ≥ 1".into()));
    }
    let cfg = SweepConfig {
        activation: match a.kernel {
            KernelChoice::Hrbf => KernelActivation::Cosine,
            KernelChoice::Hac => KernelActivation::Relu,
        },
        feature_counts: a.features.clone(),
        pairs: a.pairs,
        dim: a.dim,
        oracle_samples: a.oracle_samples,
        seed: a.seed,
        ..SweepConfig::default()
    };
    let rows = kernel_sweep(&cfg)?;
    let csv = sweep_csv(&rows);
    write_atomic(&a.out, csv.as_bytes(), a.force)?;
    print!("{csv}");
    Ok(())
}

/// Default architecture of `kind` on a synthetic subject with `rois` ROIs.
pub fn gradcheck_setup(kind: EncoderKind, rois: usize, seed: u64) -> Result<(Model, PreparedSubject)> {
    let cohort = generate_synthetic_cohort(2, rois, 1.0, seed)?;
    let fc = cohort[0].graph(Modality::Fc)?.feature_dim();
    let sc = cohort[0].graph(Modality::Sc)?.feature_dim();
    let model = Model::new(ModelSpec::default_for(kind, fc, sc), seed)?;
    let subject = model.prepare(&cohort[0])?;
    Ok((model, subject))
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    if let Some(p) = &a.out {
        check_writable(p, a.force)?;
    }
    if !(a.tolerance >= 0.0) {
        return Err(CliError::Invalid("tolerance must be ≥ 0".into()));
    }
    let (model, subject) = gradcheck_setup(a.kind, a.rois, a.seed)?;
    let report: GradcheckReport = match &a.inject_fault {
        Some(t) => {
            if model.store.position(t).is_none() {
                return Err(CliError::Invalid(format!("unknown tensor {t}")));
            }
            gradcheck_with_fault(&model, &subject, a.tolerance, t)
        }
        None => gradcheck(&model, &subject, a.tolerance),
    };
    for t in &report.tensors {
        println!(
            "{:<36} {:>7} {:>12.3e} {}",
            t.name,
            t.scalars,
            t.worst_rel_err,
            if t.flagged { "FLAG" } else { "ok" }
        );
    }
    println!(
        "max relative error {:.3e} over {} scalars ({} near kinks skipped)",
        report.max_rel_err(),
        report.scalars(),
        report.kink_skipped()
    );
    if let Some(p) = &a.out {
        write_json(p, &report, a.force)?;
    }
    if !report.passed() {
        let names: Vec<&str> = report.flagged().map(|t| t.name.as_str()).collect();
        return Err(CliError::Gradcheck(format!(
            "{} tensor(s) above tolerance {:e}: {}",
            names.len(),
            report.tolerance,
            names.join(", ")
        )));
    }
    Ok(())
}

pub fn flops_table(rows: &[CostRow]) -> String {
    let k = |p: u64| format!("{:.2}", p as f64 / 1000.0);
    let mm = |m: u64| format!("{:.2}", m as f64 / 1e6);
    let mut s = format!(
        "{:<22} | {:>9} | {:>11} | {:>9} | {:>11}\n",
        "Method", "fMRI K", "fMRI MMac", "DTI K", "DTI MMac"
    );
    for r in rows {
        let (fp, fm, dp, dm) = match (&r.fmri, &r.dti, r.reference_mmac) {
            (Some(f), Some(d), _) => (k(f.params), mm(f.macs), k(d.params), mm(d.macs)),
            (_, _, Some((f, d))) => ("-".into(), format!("{f:.2}"), "-".into(), format!("{d:.2}")),
            _ => ("-".into(), "-".into(), "-".into(), "-".into()),
        };
        s.push_str(&format!("{:<22} | {fp:>9} | {fm:>11} | {dp:>9} | {dm:>11}\n", r.method));
    }
    s
}

pub fn cmd_flops(a: &FlopsArgs) -> Result<()> {
    if a.rois == 0 || a.fmri_input == 0 || a.dti_input == 0 {
        return Err(CliError::Invalid("sizes must be ≥ 1".into()));
    }
    let rows = cost_table(a.rois, a.fmri_input, a.dti_input);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("serializable"));
    } else {
        print!("{}", flops_table(&rows));
    }
    Ok(())
}

#[derive(Serialize)]
struct DiscriminativeOutput<'a> {
    route: &'a str,
    connections: &'a [RankedConnection],
}

pub fn cmd_discriminative(a: &DiscriminativeArgs) -> Result<()> {
    if let Some(p) = &a.out {
        check_writable(p, a.force)?;
    }
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let model = Checkpoint::load(&a.checkpoint)?.into_model()?;
    if a.route == Route::Attention && !model.spec.kind().is_attention() {
        return Err(hkgf_core::Error::NotAttention.into());
    }
    let cohort = load_cohort(&a.manifest, &cfg.fc)?;
    let labels: Vec<u8> = cohort.iter().map(|s| s.label).collect();
    let prepared: Vec<PreparedSubject> = cohort
        .iter()
        .map(|s| model.prepare(s))
        .collect::<hkgf_core::Result<_>>()?;
    let (route, ranked) = match a.route {
        Route::Correlation => {
            let emb: Vec<Matrix> = prepared.iter().map(|s| model.coupling_embedding(s)).collect();
            ("correlation", discriminative_connections_correlation(&emb, &labels, a.top_k)?)
        }
        Route::Attention => {
            let att: Vec<Matrix> = prepared
                .iter()
                .map(|s| model.coupling_attention(s))
                .collect::<hkgf_core::Result<_>>()?;
            ("attention", discriminative_connections_attention(&att, &labels, a.top_k)?)
        }
    };
    for (rank, c) in ranked.iter().enumerate() {
        println!("{:>3}  ROI {:>4} - ROI {:>4}  {:.6e}", rank + 1, c.roi_a, c.roi_b, c.score);
    }
    if let Some(p) = &a.out {
        write_json(p, &DiscriminativeOutput { route, connections: &ranked }, a.force)?;
    }
    Ok(())
}
