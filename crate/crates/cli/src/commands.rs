use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dea_core::baselines::{accuracy, ecoc_fit, nnmf_fit, pca_fit, EcocConfig, NnmfModel, PcaModel};
use dea_core::bench::{self, BenchConfig, Method};
use dea_core::data_io::{self, load_image_folder};
use dea_core::pipeline::{self, DeaModel, Threshold};
use dea_core::{
    generate_planted, normalize, persist, DataMatrix, DeaError, ImageSpec, MatrixFormat, NormalizeMode,
    PipelineConfig, PlantedConfig,
};
use ndarray::Array2;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{config, ConfigArgs, InputArgs, PlantedArgs, UsageError};

const PCA_FORMAT: &str = "pca-model";
const NNMF_FORMAT: &str = "nnmf-model";
const BASELINE_VERSION: u64 = 1;

fn usage<T>(r: dea_core::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        DeaError::InvalidArgument(msg) => UsageError(msg).into(),
        other => other.into(),
    })
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| UsageError(format!("bad {what} `{s}`")).into()))
        .collect()
}

fn pipeline_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut cfg = config::load(args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = args.components {
        cfg.p = p;
    }
    Ok(cfg)
}

fn load_input(args: &InputArgs, manifest: &mut RunManifest) -> Result<DataMatrix> {
    let mode: NormalizeMode = usage(args.normalize.parse())?;
    let data = if args.input.is_dir() {
        let spec = args
            .image_spec
            .as_deref()
            .ok_or_else(|| UsageError("--image-spec is required for image folders".into()))?;
        let spec = usage(ImageSpec::parse(spec))?;
        let folder = load_image_folder(&args.input, spec)?;
        for path in &folder.skipped {
            log::warn!("skipped undecodable file {}", path.display());
        }
        folder.data
    } else {
        let format = match &args.format {
            Some(f) => usage(f.parse())?,
            None => MatrixFormat::from_path(&args.input),
        };
        manifest.input(&args.input)?;
        data_io::load_matrix(&args.input, format)
            .with_context(|| format!("loading {}", args.input.display()))?
    };
    Ok(normalize(&data, mode))
}

fn write_data(data: &DataMatrix, path: &Path) -> Result<()> {
    data_io::write_matrix(data, path, MatrixFormat::from_path(path))?;
    Ok(())
}

/// Any component model the CLI can apply.
enum Components {
    Dea(Box<DeaModel>),
    Pca(PcaModel),
    Nnmf(NnmfModel),
}

impl Components {
    fn load(path: &Path, manifest: &mut RunManifest) -> Result<Self> {
        manifest.input(path)?;
        let kind = persist::peek_format(path)?;
        Ok(match kind.as_str() {
            pipeline::MODEL_FORMAT => Components::Dea(Box::new(pipeline::load_model(path)?)),
            PCA_FORMAT => Components::Pca(persist::load(PCA_FORMAT, BASELINE_VERSION, path)?),
            NNMF_FORMAT => Components::Nnmf(persist::load(NNMF_FORMAT, BASELINE_VERSION, path)?),
            other => {
                return Err(DeaError::Schema {
                    field: "format".into(),
                    msg: format!("unknown model kind `{other}`"),
                }
                .into())
            }
        })
    }

    fn matrix(&self) -> &Array2<f64> {
        match self {
            Components::Dea(m) => &m.components,
            Components::Pca(m) => &m.components,
            Components::Nnmf(m) => &m.basis,
        }
    }

    fn labels(&self) -> Option<&[String]> {
        match self {
            Components::Dea(m) => m.feature_labels.as_deref(),
            _ => None,
        }
    }

    fn transform(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(match self {
            Components::Dea(m) => m.transform(data)?,
            Components::Pca(m) => m.transform(data)?,
            Components::Nnmf(m) => m.transform(data)?,
        })
    }
}

fn projection_matrix(proj: Array2<f64>, source: &DataMatrix) -> Result<DataMatrix> {
    let p = proj.nrows();
    let mut out = DataMatrix::new(proj)?.with_feature_labels((0..p).map(|c| format!("component_{c}")).collect())?;
    if let Some(obs) = &source.observation_labels {
        out = out.with_observation_labels(obs.clone())?;
    }
    Ok(out)
}

pub fn fit(input: &InputArgs, config: &ConfigArgs, out_model: &Path, manifest_path: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("fit");
    let cfg = pipeline_config(config)?;
    let start = std::time::Instant::now();
    let data = load_input(input, &mut manifest)?;
    manifest.stage("load", start.elapsed().as_secs_f64());
    usage(cfg.resolve(data.n_features(), data.n_observations()))?;
    let (model, trace) = pipeline::fit_with_trace(&data, &cfg)?;
    for (name, secs) in &trace.timings {
        manifest.stage(name, *secs);
    }
    manifest.timed("save", || pipeline::save_model(&model, out_model))?;
    manifest.output(out_model);
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.seeds = vec![cfg.seed];
    manifest.summary = json!({
        "m": model.shape.m,
        "n": model.shape.n,
        "u": model.shape.u,
        "q": model.shape.q,
        "k": model.shape.k,
        "p": model.shape.p,
        "sigma_star": model.sigma_star,
        "cluster_objective": model.cluster_objective,
        "epochs": trace.epochs,
        "final_loss": model.final_loss,
    });
    manifest.write(manifest_path)?;
    println!(
        "fitted M={} N={} U={} Q={} k={} P={} sigma={} loss={:.6e}",
        model.shape.m, model.shape.n, model.shape.u, model.shape.q, model.shape.k, model.shape.p, model.sigma_star,
        model.final_loss
    );
    Ok(())
}

pub fn transform(model: &Path, input: &InputArgs, out: &Path, manifest_path: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("transform");
    let comps = Components::load(model, &mut manifest)?;
    let data = load_input(input, &mut manifest)?;
    let proj = manifest.timed("transform", || comps.transform(data.values()))?;
    write_data(&projection_matrix(proj, &data)?, out)?;
    manifest.output(out);
    manifest.config = json!({ "normalize": input.normalize });
    manifest.write(manifest_path)?;
    Ok(())
}

pub fn rank(model: &Path, top: Option<usize>, threshold: &str, out: &Path, manifest_path: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("rank");
    let threshold: Threshold = usage(threshold.parse())?;
    let comps = Components::load(model, &mut manifest)?;
    let ranking = pipeline::rank_rows(comps.matrix(), comps.labels());
    let important: Vec<usize> = ranking.important(threshold).iter().map(|e| e.index).collect();
    let count = top.unwrap_or(ranking.len()).min(ranking.len());
    let mut text = String::from("rank,index,label,score,norm,important\n");
    for (r, e) in ranking.entries.iter().take(count).enumerate() {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r + 1,
            e.index,
            e.label.as_deref().unwrap_or(""),
            data_io::format_f64(e.score),
            data_io::format_f64(e.raw),
            important.contains(&e.index)
        ));
    }
    std::fs::write(out, text).map_err(|e| DeaError::Io { path: out.to_path_buf(), source: e })?;
    manifest.output(out);
    manifest.config = json!({ "top": top, "threshold": format!("{threshold:?}") });
    manifest.summary = json!({ "features": ranking.len(), "important": important.len() });
    manifest.write(manifest_path)?;
    println!("{} of {} features above the threshold", important.len(), ranking.len());
    Ok(())
}

pub fn select(model: &Path, input: &InputArgs, top: usize, out: &Path, manifest_path: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("select");
    let comps = Components::load(model, &mut manifest)?;
    let data = load_input(input, &mut manifest)?;
    let ranking = pipeline::rank_rows(comps.matrix(), comps.labels());
    let picked = usage(pipeline::select_features(&data, &ranking, top))?;
    write_data(&picked, out)?;
    manifest.output(out);
    manifest.config = json!({ "top": top, "normalize": input.normalize });
    manifest.write(manifest_path)?;
    Ok(())
}

pub fn export(
    model: &Path,
    image_spec: &str,
    out_dir: &Path,
    keep: Option<&str>,
    drop: Option<&str>,
    manifest_path: Option<&Path>,
) -> Result<()> {
    let mut manifest = RunManifest::new("export");
    let spec = usage(ImageSpec::parse(image_spec))?;
    let comps = Components::load(model, &mut manifest)?;
    let p = comps.matrix().ncols();
    let keep: Vec<usize> = match (keep, drop) {
        (Some(k), _) => parse_list(k, "component")?,
        (None, Some(d)) => {
            let dropped: Vec<usize> = parse_list(d, "component")?;
            (0..p).filter(|c| !dropped.contains(c)).collect()
        }
        (None, None) => (0..p).collect(),
    };
    let files = usage(pipeline::export_matrix_columns(comps.matrix(), spec, out_dir, Some(&keep), "component"))?;
    manifest.outputs = files;
    manifest.config = json!({ "image_spec": image_spec, "keep": keep });
    let written = manifest.outputs.len();
    manifest.write(manifest_path.or(Some(&out_dir.join("manifest.json"))))?;
    println!("wrote {written} images to {}", out_dir.display());
    Ok(())
}

pub struct ClassifyArgs {
    pub model: PathBuf,
    pub train: PathBuf,
    pub train_labels: PathBuf,
    pub test: PathBuf,
    pub test_labels: Option<PathBuf>,
    pub normalize: String,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn classify(args: &ClassifyArgs, manifest_path: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("classify");
    let comps = Components::load(&args.model, &mut manifest)?;
    let as_input = |path: &Path| InputArgs {
        input: path.to_path_buf(),
        format: None,
        image_spec: None,
        normalize: args.normalize.clone(),
    };
    let train = load_input(&as_input(&args.train), &mut manifest)?;
    let test = load_input(&as_input(&args.test), &mut manifest)?;
    manifest.input(&args.train_labels)?;
    let train_labels = data_io::load_labels(&args.train_labels)?;
    let cfg = EcocConfig {
        lambda: args.lambda,
        epochs: args.epochs,
        seed: args.seed,
        ..Default::default()
    };
    let clf = manifest.timed("train", || -> Result<_> {
        let proj = comps.transform(train.values())?;
        usage(ecoc_fit(&proj, &train_labels, &cfg))
    })?;
    let predicted = manifest.timed("predict", || -> Result<_> {
        Ok(clf.predict(&comps.transform(test.values())?)?)
    })?;
    data_io::write_labels(&predicted, &args.out)?;
    manifest.output(&args.out);
    manifest.config = json!({ "lambda": args.lambda, "epochs": args.epochs, "normalize": args.normalize });
    manifest.seeds = vec![args.seed];
    if let Some(path) = &args.test_labels {
        manifest.input(path)?;
        let truth = data_io::load_labels(path)?;
        let acc = accuracy(&predicted, &truth)?;
        manifest.summary = json!({ "accuracy": acc, "test_observations": truth.len() });
        println!("accuracy {acc:.4} on {} test observations", truth.len());
    }
    manifest.write(manifest_path)?;
    Ok(())
}

pub fn baseline(
    method: &str,
    input: &InputArgs,
    p: usize,
    iterations: usize,
    seed: u64,
    out_model: &Path,
    manifest_path: Option<&Path>,
) -> Result<()> {
    let mut manifest = RunManifest::new("baseline");
    let method: Method = usage(method.parse())?;
    let data = load_input(input, &mut manifest)?;
    match method {
        Method::Pca => {
            let model = manifest.timed("pca", || usage(pca_fit(data.values(), p)))?;
            persist::save(PCA_FORMAT, BASELINE_VERSION, &model, out_model)?;
        }
        Method::Nnmf => {
            let model = manifest.timed("nnmf", || usage(nnmf_fit(data.values(), p, iterations, seed)))?;
            manifest.summary = json!({ "residual": model.residual() });
            persist::save(NNMF_FORMAT, BASELINE_VERSION, &model, out_model)?;
        }
        Method::Dea => return Err(UsageError("use `dea fit` for DEA models".into()).into()),
    }
    manifest.output(out_model);
    manifest.config = json!({ "method": method, "components": p, "iterations": iterations, "normalize": input.normalize });
    manifest.seeds = vec![seed];
    manifest.write(manifest_path)?;
    Ok(())
}

fn planted_config(args: &PlantedArgs, seed: u64) -> PlantedConfig {
    PlantedConfig {
        classes: args.classes,
        per_class: args.per_class,
        m_features: args.features,
        n_informative: args.informative,
        signal: args.signal,
        noise: args.noise,
        nuisance_rank: args.nuisance_rank,
        nuisance_scale: args.nuisance_scale,
        seed,
    }
}

pub struct BenchArgs {
    pub planted: PlantedArgs,
    pub config: ConfigArgs,
    pub methods: String,
    pub components: String,
    pub fractions: String,
    pub seeds: u64,
    pub first_seed: u64,
    pub out: PathBuf,
    pub summary: Option<PathBuf>,
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}_summary.{ext}"))
}

pub fn bench(args: &BenchArgs, manifest_path: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("bench");
    if args.seeds == 0 {
        return Err(UsageError("--seeds must be positive".into()).into());
    }
    let cfg = BenchConfig {
        planted: planted_config(&args.planted, 0),
        methods: parse_list(&args.methods, "method")?,
        components: parse_list(&args.components, "component count")?,
        fractions: parse_list(&args.fractions, "training fraction")?,
        seeds: (args.first_seed..args.first_seed + args.seeds).collect(),
        pipeline: pipeline_config(&args.config)?,
        ..Default::default()
    };
    let rows = manifest.timed("bench", || usage(bench::run_bench(&cfg)))?;
    let summary = bench::summarize(&rows);
    std::fs::write(&args.out, bench::rows_to_csv(&rows))
        .map_err(|e| DeaError::Io { path: args.out.clone(), source: e })?;
    let summary_out = args.summary.clone().unwrap_or_else(|| summary_path(&args.out));
    std::fs::write(&summary_out, bench::summary_to_csv(&summary))
        .map_err(|e| DeaError::Io { path: summary_out.clone(), source: e })?;
    manifest.output(&args.out);
    manifest.output(&summary_out);
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.seeds = cfg.seeds.clone();
    manifest.summary = json!({ "rows": rows.len() });
    manifest.write(manifest_path)?;

    println!("{:<6} {:>10} {:>9} {:>6} {:>9} {:>8}", "method", "components", "fraction", "runs", "mean", "std");
    for s in &summary {
        println!(
            "{:<6} {:>10} {:>9} {:>6} {:>9.4} {:>8.4}",
            s.method.to_string(),
            s.components,
            s.train_fraction,
            s.runs,
            s.mean_accuracy,
            s.std_accuracy
        );
    }
    Ok(())
}

pub fn generate(
    planted: &PlantedArgs,
    seed: u64,
    out: &Path,
    labels_out: Option<&Path>,
    truth_out: Option<&Path>,
    manifest_path: Option<&Path>,
) -> Result<()> {
    let mut manifest = RunManifest::new("generate");
    let cfg = planted_config(planted, seed);
    let set = usage(generate_planted(&cfg))?;
    write_data(&set.data, out)?;
    manifest.output(out);
    if let Some(path) = labels_out {
        data_io::write_labels(set.labels(), path)?;
        manifest.output(path);
    }
    if let Some(path) = truth_out {
        let text: String = set.informative_features.iter().map(|i| format!("{i}\n")).collect();
        std::fs::write(path, text).map_err(|e| DeaError::Io { path: path.to_path_buf(), source: e })?;
        manifest.output(path);
    }
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.seeds = vec![seed];
    manifest.write(manifest_path)?;
    Ok(())
}
