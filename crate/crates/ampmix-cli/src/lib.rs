//! Command implementations behind the `ampmix` binary.
//!
//! Every command validates all of its inputs before writing any output
//! file, and all randomness flows from a single seed split per subsystem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ampmix::data::{generate_synthetic, load_manifest, ClipSet, DomainFilter, Manifest, SynthSpec};
use ampmix::error::{Error, Result};
use ampmix::image::{load_png, save_png};
use ampmix::losses::LossBundle;
use ampmix::metrics::{compute_metrics, format_predictions, read_predictions, MetricsReport};
use ampmix::model::{evaluate, format_loss_log, gradient_check, train, Checkpoint, TrainConfig};
use ampmix::rng::{stream, substream};
use ampmix::spectral::augment;

/// Output locations and dataset policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory holding (or receiving) the dataset and its manifest.
    pub data_dir: PathBuf,
    /// Directory receiving checkpoints, logs, predictions, and reports.
    pub out_dir: PathBuf,
    /// Generate the synthetic dataset into `data_dir` when no manifest is
    /// present there.
    pub generate_data: bool,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            generate_data: true,
        }
    }
}

/// Ablation settings: variant runs per seed count, plus optional weight
/// grids swept one axis at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub num_seeds: usize,
    pub lambda_aug_grid: Vec<f64>,
    pub lambda_sup_grid: Vec<f64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            num_seeds: 5,
            lambda_aug_grid: Vec::new(),
            lambda_sup_grid: Vec::new(),
        }
    }
}

/// Full run configuration: JSON file with `synth`, `train`, `paths`, and
/// `ablate` sections. Unknown keys are rejected; every value is validated
/// before any command runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub paths: Paths,
    pub ablate: AblateConfig,
}

impl RunConfig {
    /// Load from a JSON file, or defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: p.to_path_buf(),
                    line: e.line(),
                    message: e.to_string(),
                })?
            }
        };
        config.validate()?;
        Ok(config)
    }

    /// Collect every validation problem; errors with the full list.
    pub fn validate(&self) -> Result<()> {
        let mut problems = self.synth.problems();
        problems.extend(self.train.validate()?);
        if self.ablate.num_seeds == 0 {
            problems.push("ablate.num_seeds must be positive".to_string());
        }
        for (name, grid) in [
            ("lambda_aug_grid", &self.ablate.lambda_aug_grid),
            ("lambda_sup_grid", &self.ablate.lambda_sup_grid),
        ] {
            if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
                problems.push(format!(
                    "ablate.{name} values must be finite and non-negative"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{} problem(s):\n  - {}",
                problems.len(),
                problems.join("\n  - ")
            )))
        }
    }

    /// Route all randomness through one seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths.data_dir.join("manifest.tsv")
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Load the configured dataset, generating it first when allowed and absent.
pub fn load_or_generate_dataset(config: &RunConfig) -> Result<Manifest> {
    let manifest_path = config.manifest_path();
    if !manifest_path.is_file() {
        if !config.paths.generate_data {
            return Err(Error::validation(format!(
                "no manifest at {} and paths.generate_data is false",
                manifest_path.display()
            )));
        }
        generate_synthetic(&config.synth, &config.paths.data_dir)?;
    }
    load_manifest(&manifest_path)
}

/// `augment`: amplitude-mix one PNG toward another and report beta.
pub fn cmd_augment(input: &Path, style: &Path, alpha: f64, seed: u64, out: &Path) -> Result<f64> {
    let source = load_png(input)?;
    let style_img = load_png(style)?;
    if source.shape() != style_img.shape() {
        return Err(Error::validation(format!(
            "input is {:?} but style is {:?}; images must share dimensions",
            source.shape(),
            style_img.shape()
        )));
    }
    let mut rng = substream(seed, &[stream::AUGMENT]);
    let (augmented, beta) = augment(&source, &style_img, alpha, &mut rng)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    save_png(&augmented, out)?;
    println!("beta = {beta:.12}");
    println!("wrote {}", out.display());
    Ok(beta)
}

/// Artifacts written by `train`.
pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub loss_log_path: PathBuf,
    pub final_loss: Option<LossBundle>,
}

/// `train`: train on the configured dataset, writing a checkpoint and the
/// per-epoch CSV loss log.
pub fn cmd_train(config: &RunConfig) -> Result<TrainArtifacts> {
    let manifest = load_or_generate_dataset(config)?;
    let set = ClipSet::load(&manifest)?;
    let outcome = train(&config.train, &set)?;

    ensure_dir(&config.paths.out_dir)?;
    let checkpoint_path = config.paths.out_dir.join("checkpoint.cclk");
    let loss_log_path = config.paths.out_dir.join("loss_log.csv");
    outcome.checkpoint.save(&checkpoint_path)?;
    write_text(&loss_log_path, &format_loss_log(&outcome.log))?;

    if let Some(last) = outcome.log.last() {
        println!(
            "epoch {}: l_orig={:.6} l_aug={:.6} l_sup={:.6} l_total={:.6}",
            last.epoch,
            last.bundle.l_orig,
            last.bundle.l_aug,
            last.bundle.l_sup,
            last.bundle.l_total
        );
    }
    println!("wrote {}", checkpoint_path.display());
    println!("wrote {}", loss_log_path.display());
    Ok(TrainArtifacts {
        checkpoint_path,
        loss_log_path,
        final_loss: outcome.log.last().map(|e| e.bundle),
    })
}

/// Artifacts written by `eval`.
pub struct EvalArtifacts {
    pub predictions_path: PathBuf,
    pub report: MetricsReport,
}

/// `eval`: predict every clip matching the domain filter, write the
/// predictions CSV plus text and key-value metric reports.
pub fn cmd_eval(
    checkpoint_path: &Path,
    manifest_path: &Path,
    filter: DomainFilter,
    out_dir: &Path,
) -> Result<EvalArtifacts> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let manifest = load_manifest(manifest_path)?;
    let set = ClipSet::load(&manifest)?;
    let preds = evaluate(
        &checkpoint.model,
        &set,
        filter,
        checkpoint.config.frames_per_clip,
    )?;
    let report = compute_metrics(&preds)?;

    ensure_dir(out_dir)?;
    let predictions_path = out_dir.join("predictions.csv");
    write_text(&predictions_path, &format_predictions(&preds))?;
    write_text(
        &out_dir.join("metrics.txt"),
        &report.to_table(set.class_names()),
    )?;
    write_text(&out_dir.join("metrics.kv"), &report.to_key_values())?;

    print!("{}", report.to_table(set.class_names()));
    println!("wrote {}", predictions_path.display());
    Ok(EvalArtifacts {
        predictions_path,
        report,
    })
}

/// `score`: standalone scoring of a predictions CSV.
pub fn cmd_score(predictions_path: &Path, out_dir: Option<&Path>) -> Result<MetricsReport> {
    let preds = read_predictions(predictions_path, 0)?;
    let report = compute_metrics(&preds)?;
    let names: Vec<String> = (0..preds.n_classes()).map(|c| c.to_string()).collect();
    print!("{}", report.to_table(&names));
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_text(&dir.join("metrics.txt"), &report.to_table(&names))?;
        write_text(&dir.join("metrics.kv"), &report.to_key_values())?;
    }
    Ok(report)
}

/// `gensynth`: render the synthetic corpus and print summary statistics.
pub fn cmd_gensynth(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let manifest = generate_synthetic(spec, out_dir)?;
    let frames: usize = manifest.entries().iter().map(|e| e.frames.len()).sum();
    println!(
        "generated {} clips ({} frames) over {} classes: {}",
        manifest.entries().len(),
        frames,
        manifest.n_classes(),
        manifest.class_names().join(", ")
    );
    println!("manifest: {}", out_dir.join("manifest.tsv").display());
    Ok(manifest)
}

/// `gradcheck`: compare analytic gradients against finite differences.
/// Errors (nonzero exit) when any component exceeds the tolerance.
pub fn cmd_gradcheck(seed: u64, instances: usize, corrupt: bool) -> Result<()> {
    let report = gradient_check(seed, instances, corrupt)?;
    for c in &report.components {
        println!(
            "{:8} max_rel_err={:.3e}  {}",
            c.name,
            c.max_rel_err,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    if report.passed {
        println!("gradient check passed on {} instances", report.instances);
        Ok(())
    } else {
        Err(Error::validation(
            "gradient check failed; see component report above".to_string(),
        ))
    }
}

/// One ablation table row: a loss-configuration's metrics averaged over
/// seeds on the target domain.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub label: String,
    pub lambda_aug: f64,
    pub lambda_sup: f64,
    pub weighted_f1: f64,
    pub unweighted_f1: f64,
    pub global_f1: f64,
    pub balanced_accuracy: f64,
    /// Per-seed target-domain balanced accuracy, in seed order.
    pub per_seed_balanced: Vec<f64>,
}

/// Results of the `ablate` command.
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub seeds: Vec<u64>,
}

fn ablation_variant(
    config: &RunConfig,
    set: &ClipSet,
    label: &str,
    lambda_aug: f64,
    lambda_sup: f64,
    seeds: &[u64],
) -> Result<AblationRow> {
    let mut sums = [0.0f64; 4];
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let train_config = TrainConfig {
            lambda_aug,
            lambda_sup,
            seed,
            ..config.train.clone()
        };
        let outcome = train(&train_config, set)?;
        let preds = evaluate(
            &outcome.checkpoint.model,
            set,
            DomainFilter::Target,
            train_config.frames_per_clip,
        )?;
        let report = compute_metrics(&preds)?;
        sums[0] += report.weighted_f1;
        sums[1] += report.unweighted_f1;
        sums[2] += report.global_f1;
        sums[3] += report.balanced_accuracy;
        per_seed.push(report.balanced_accuracy);
    }
    let n = seeds.len() as f64;
    Ok(AblationRow {
        label: label.to_string(),
        lambda_aug,
        lambda_sup,
        weighted_f1: sums[0] / n,
        unweighted_f1: sums[1] / n,
        global_f1: sums[2] / n,
        balanced_accuracy: sums[3] / n,
        per_seed_balanced: per_seed,
    })
}

pub fn format_ablation_table(table: &AblationTable) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:>12} {:>14} {:>10} {:>18}\n",
        "loss", "weighted_f1", "unweighted_f1", "global_f1", "balanced_accuracy"
    ));
    for row in &table.rows {
        out.push_str(&format!(
            "{:<18} {:>12.4} {:>14.4} {:>10.4} {:>18.4}\n",
            row.label, row.weighted_f1, row.unweighted_f1, row.global_f1, row.balanced_accuracy
        ));
    }
    out
}

/// `ablate`: train and evaluate the four loss configurations over the
/// configured seeds and print a target-domain metric table. Optional
/// weight grids sweep one lambda at a time.
pub fn cmd_ablate(config: &RunConfig) -> Result<AblationTable> {
    let manifest = load_or_generate_dataset(config)?;
    let set = ClipSet::load(&manifest)?;
    let base = config.train.seed;
    let seeds: Vec<u64> = (0..config.ablate.num_seeds)
        .map(|i| base + i as u64)
        .collect();
    let (la, ls) = (config.train.lambda_aug, config.train.lambda_sup);

    let variants = [
        ("orig".to_string(), 0.0, 0.0),
        ("orig+sup".to_string(), 0.0, ls),
        ("orig+aug".to_string(), la, 0.0),
        ("orig+sup+aug".to_string(), la, ls),
    ];
    let mut rows = Vec::with_capacity(variants.len());
    for (label, a, s) in &variants {
        rows.push(ablation_variant(config, &set, label, *a, *s, &seeds)?);
    }
    let table = AblationTable {
        rows,
        seeds: seeds.clone(),
    };
    let mut text = format_ablation_table(&table);

    let mut sweep_rows = Vec::new();
    for &grid_la in &config.ablate.lambda_aug_grid {
        sweep_rows.push(ablation_variant(
            config,
            &set,
            &format!("lambda_aug={grid_la}"),
            grid_la,
            ls,
            &seeds,
        )?);
    }
    for &grid_ls in &config.ablate.lambda_sup_grid {
        sweep_rows.push(ablation_variant(
            config,
            &set,
            &format!("lambda_sup={grid_ls}"),
            la,
            grid_ls,
            &seeds,
        )?);
    }
    if !sweep_rows.is_empty() {
        text.push('\n');
        text.push_str(&format_ablation_table(&AblationTable {
            rows: sweep_rows,
            seeds,
        }));
    }

    print!("{text}");
    ensure_dir(&config.paths.out_dir)?;
    write_text(&config.paths.out_dir.join("ablation.txt"), &text)?;
    Ok(table)
}
