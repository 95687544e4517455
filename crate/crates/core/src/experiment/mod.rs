//! Seeded experiment commands.
//!
//! Each command takes a resolved [`ExperimentConfig`], writes its artifacts
//! under `config.out_dir` and returns the report it wrote. Reports embed the
//! config, carry no timestamps, and are byte-identical for identical configs.
//! All randomness flows from `config.seed` through [`derive_seed`].

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{derive_seed, ExperimentConfig, SweepConfig, TrainingParams, DEFAULT_SPEEDS};

use crate::beam::{self, SweepSurface};
use crate::exec::{self, Execution};
use crate::mlp::gradcheck::{self, GradCheckConfig, GradCheckReport};
use crate::mlp::{self, ConfusionMatrix, MlpModel};
use crate::signal::{self, Dataset, DatasetBuild};
use crate::terrain::{ProfileTable, RobotRun, TerrainClass};
use crate::{Error, Result};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.json";
pub const DATASET_DIR: &str = "dataset";
pub const MANIFEST: &str = "manifest.json";
pub const TRAIN_EVAL_JSON: &str = "train_eval.json";
pub const TRAIN_EVAL_TXT: &str = "train_eval.txt";
pub const SPEED_SWEEP_JSON: &str = "speed_sweep.json";
pub const SPEED_SWEEP_TXT: &str = "speed_sweep.txt";
pub const GRAD_CHECK_JSON: &str = "grad_check.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: ExperimentConfig,
    pub cells: usize,
    /// Cells whose dominant frequency lies within one bin of f_b.
    pub cells_within_one_bin: usize,
    pub fraction_within_one_bin: f64,
    /// f_b values whose dominant frequency is the same for every h_b.
    pub amplitude_invariant_columns: usize,
    pub columns: usize,
    pub bin_width_hz: f64,
    pub steady_state_start_s: f64,
}

impl SweepSummary {
    pub fn from_surface(config: &ExperimentConfig, surface: &SweepSurface, t0: f64) -> Self {
        let cells = surface.f_b_grid.len() * surface.h_b_grid.len();
        let within = surface
            .cells()
            .filter(|c| (c.f_dominant - c.f_b).abs() <= surface.bin_width)
            .count();
        let invariant = surface
            .f_dominant
            .iter()
            .filter(|row| row.iter().all(|&f| f == row[0]))
            .count();
        Self {
            config: config.clone(),
            cells,
            cells_within_one_bin: within,
            fraction_within_one_bin: within as f64 / cells as f64,
            amplitude_invariant_columns: invariant,
            columns: surface.f_b_grid.len(),
            bin_width_hz: surface.bin_width,
            steady_state_start_s: t0,
        }
    }
}

pub fn sweep_surface(config: &ExperimentConfig, exec: Execution) -> Result<SweepSurface> {
    config.validate()?;
    let s = &config.sweep;
    if s.f_b_hz.is_empty() || s.h_b_mm.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let h_b: Vec<f64> = s.h_b_mm.iter().map(|h| h * 1e-3).collect();
    beam::modal_sweep_with(
        exec,
        &config.beam()?,
        &s.f_b_hz,
        &h_b,
        config.sensor_position_m,
        s.sample_rate_hz,
        s.duration_s,
    )
}

/// Writes `sweep.csv` and `sweep_summary.json`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepSummary> {
    let surface = sweep_surface(config, Execution::default())?;
    let summary = SweepSummary::from_surface(config, &surface, config.beam()?.steady_state_start());
    fs::create_dir_all(&config.out_dir)?;
    surface.write_csv(fs::File::create(config.out_dir.join(SWEEP_CSV))?)?;
    write_json(&config.out_dir.join(SWEEP_SUMMARY), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- synth

/// Features for one terrain at one speed.
#[derive(Debug, Clone)]
pub struct TerrainData {
    pub terrain: TerrainClass,
    pub seed: u64,
    pub build: DatasetBuild,
}

pub fn synth_seed(master: u64, speed: f64, terrain: TerrainClass) -> u64 {
    derive_seed(master, &format!("synth/v={speed}/{terrain}"))
}

/// Synthesizes and featurizes every terrain at `speed`, in class order.
pub fn synthesize_terrains(
    config: &ExperimentConfig,
    table: &ProfileTable,
    speed: f64,
    exec: Execution,
) -> Result<Vec<TerrainData>> {
    let beam = config.beam()?;
    exec::try_map(exec, &TerrainClass::ALL, |&terrain| {
        let seed = synth_seed(config.seed, speed, terrain);
        let run = RobotRun {
            speed,
            duration: config.duration_s,
            sample_rate: config.sample_rate_hz,
            seed,
        };
        let series = table
            .synthesize(terrain, &run, &beam, config.sensor_position_m)
            .map_err(|e| e.context(format!("synthesizing {terrain} at {speed} m/s")))?;
        // windows of a single run need no fan-out of their own
        let build = signal::build_dataset_with(
            Execution::Sequential,
            &[(series, terrain)],
            config.window_s,
        )?;
        Ok(TerrainData {
            terrain,
            seed,
            build,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub terrain: TerrainClass,
    pub id: u8,
    pub file: String,
    pub seed: u64,
    pub vectors: usize,
    pub dropped_windows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: ExperimentConfig,
    pub files: Vec<ManifestEntry>,
    pub total_vectors: usize,
    pub total_windows: usize,
    pub dropped_windows: usize,
}

pub fn terrain_file_name(terrain: TerrainClass) -> String {
    format!("terrain_{}_{}.csv", terrain.id(), terrain.name())
}

/// Writes one dataset CSV per terrain plus `manifest.json` into
/// `out_dir/dataset`. Fails after writing if more than
/// `max_dropped_fraction` of the windows were degenerate.
pub fn run_synth(config: &ExperimentConfig) -> Result<SynthManifest> {
    config.validate()?;
    let table = config.profile_table()?;
    let data = synthesize_terrains(config, &table, config.speed_mps, Execution::default())?;
    let dir = config.out_dir.join(DATASET_DIR);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let (mut total_windows, mut dropped) = (0, 0);
    for d in &data {
        let mut bytes = Vec::new();
        d.build.dataset.write_csv(&mut bytes)?;
        let file = terrain_file_name(d.terrain);
        fs::write(dir.join(&file), &bytes)?;
        total_windows += d.build.total_windows;
        dropped += d.build.dropped.len();
        files.push(ManifestEntry {
            terrain: d.terrain,
            id: d.terrain.id(),
            file,
            seed: d.seed,
            vectors: d.build.dataset.len(),
            dropped_windows: d.build.dropped.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = SynthManifest {
        config: config.clone(),
        total_vectors: files.iter().map(|f| f.vectors).sum(),
        files,
        total_windows,
        dropped_windows: dropped,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    let fraction = dropped as f64 / total_windows as f64;
    if fraction > config.max_dropped_fraction {
        return Err(Error::Dataset(format!(
            "{dropped} of {total_windows} windows were degenerate ({:.2}% > {:.2}%)",
            100.0 * fraction,
            100.0 * config.max_dropped_fraction
        )));
    }
    Ok(manifest)
}

/// Loads the dataset written by [`run_synth`], checking file hashes.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", manifest_path.display())))?;
    let manifest: SynthManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Dataset(format!("{}: {e}", manifest_path.display())))?;
    let mut parts = Vec::new();
    for entry in &manifest.files {
        let path = dir.join(&entry.file);
        let bytes =
            fs::read(&path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Dataset(format!(
                "{} does not match its manifest hash",
                entry.file
            )));
        }
        let ds = Dataset::read_csv(bytes.as_slice())?;
        if ds.vectors.iter().any(|v| v.label != entry.terrain) {
            return Err(Error::Dataset(format!(
                "{} holds foreign labels",
                entry.file
            )));
        }
        parts.push(ds);
    }
    Dataset::concat(parts)
}

// ---------------------------------------------------------------- train-eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub index: usize,
    pub split_seed: u64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub confusion: ConfusionMatrix,
}

/// Repetition results and their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub repetitions: Vec<RepetitionResult>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation over repetitions (0 for one repetition).
    pub std_accuracy: f64,
    pub mean_per_class_accuracy: Vec<f64>,
    /// Element-wise mean of the repetition confusion matrices.
    pub mean_confusion: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEvalReport {
    pub config: ExperimentConfig,
    #[serde(flatten)]
    pub evaluation: Evaluation,
}

fn check_classes(ds: &Dataset) -> Result<()> {
    let counts = ds.class_counts();
    for class in TerrainClass::ALL {
        let n = counts.get(&class).copied().unwrap_or(0);
        if n < 2 {
            return Err(Error::Dataset(format!(
                "class {class} has {n} vector(s); every terrain needs at least 2"
            )));
        }
    }
    Ok(())
}

/// Runs `config.repetitions` independent split/init/train/evaluate rounds.
/// Every round re-draws both the split and the initialization; seeds come
/// from `purpose/{round}/{split,init,shuffle}`.
pub fn evaluate_repetitions(
    config: &ExperimentConfig,
    dataset: &Dataset,
    purpose: &str,
    exec: Execution,
) -> Result<Evaluation> {
    config.validate()?;
    dataset.validate()?;
    check_classes(dataset)?;
    let arch = config.training.architecture()?;
    if arch.input_width() != dataset.feature_width() || arch.n_classes() != TerrainClass::COUNT {
        return Err(Error::Dataset(format!(
            "architecture {:?} does not fit {} features and {} classes",
            arch.layer_sizes,
            dataset.feature_width(),
            TerrainClass::COUNT
        )));
    }
    let rounds: Vec<usize> = (0..config.repetitions).collect();
    let repetitions = exec::try_map(exec, &rounds, |&k| {
        let seed = |what: &str| derive_seed(config.seed, &format!("{purpose}/{k}/{what}"));
        let (split_seed, init_seed, shuffle_seed) = (seed("split"), seed("init"), seed("shuffle"));
        let (train, test) = signal::split(dataset, config.train_fraction, split_seed)?;
        let model = MlpModel::init(arch.clone(), init_seed)?;
        let outcome =
            mlp::train_dataset(model, &train, &config.training.train_config(shuffle_seed))
                .map_err(|e| e.context(format!("repetition {k}")))?;
        let confusion = mlp::evaluate_with(Execution::Sequential, &outcome.model, &test)?;
        Ok(RepetitionResult {
            index: k,
            split_seed,
            init_seed,
            shuffle_seed,
            train_size: train.len(),
            test_size: test.len(),
            initial_loss: outcome.initial_loss,
            final_loss: *outcome.loss_history.last().expect("epochs >= 1"),
            confusion,
        })
    })?;
    Ok(aggregate(repetitions))
}

fn aggregate(repetitions: Vec<RepetitionResult>) -> Evaluation {
    let n = repetitions.len() as f64;
    let k = TerrainClass::COUNT;
    let accuracies: Vec<f64> = repetitions
        .iter()
        .map(|r| r.confusion.overall_accuracy)
        .collect();
    let mean_accuracy = accuracies.iter().sum::<f64>() / n;
    let std_accuracy = if repetitions.len() > 1 {
        (accuracies
            .iter()
            .map(|a| (a - mean_accuracy).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let mut mean_per_class_accuracy = vec![0.0; k];
    let mut mean_confusion = vec![vec![0.0; k]; k];
    for r in &repetitions {
        for (c, row) in mean_confusion.iter_mut().enumerate() {
            mean_per_class_accuracy[c] += r.confusion.per_class_accuracy[c] / n;
            for (cell, &count) in row.iter_mut().zip(&r.confusion.counts[c]) {
                *cell += count as f64 / n;
            }
        }
    }
    Evaluation {
        repetitions,
        accuracies,
        mean_accuracy,
        std_accuracy,
        mean_per_class_accuracy,
        mean_confusion,
    }
}

/// Trains and evaluates on `dataset`, writing `train_eval.json` and
/// `train_eval.txt`.
pub fn run_train_eval(config: &ExperimentConfig, dataset: &Dataset) -> Result<TrainEvalReport> {
    let evaluation = evaluate_repetitions(config, dataset, "train-eval", Execution::default())?;
    let report = TrainEvalReport {
        config: config.clone(),
        evaluation,
    };
    fs::create_dir_all(&config.out_dir)?;
    write_json(&config.out_dir.join(TRAIN_EVAL_JSON), &report)?;
    fs::write(config.out_dir.join(TRAIN_EVAL_TXT), report.to_text())?;
    Ok(report)
}

impl TrainEvalReport {
    pub fn to_text(&self) -> String {
        let e = &self.evaluation;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "accuracy over {} repetitions: mean {:.4}, std {:.4}",
            e.repetitions.len(),
            e.mean_accuracy,
            e.std_accuracy
        );
        let _ = writeln!(s, "\nper-class accuracy");
        for (c, acc) in TerrainClass::ALL.iter().zip(&e.mean_per_class_accuracy) {
            let _ = writeln!(s, "  {:<11} {:.4}", c.name(), acc);
        }
        let _ = writeln!(s, "\nmean confusion matrix (rows = true, cols = predicted)");
        let _ = write!(s, "{:<11}", "");
        for c in TerrainClass::ALL {
            let _ = write!(s, "{:>11}", c.name());
        }
        s.push('\n');
        for (c, row) in TerrainClass::ALL.iter().zip(&e.mean_confusion) {
            let _ = write!(s, "{:<11}", c.name());
            for v in row {
                let _ = write!(s, "{v:>11.2}");
            }
            s.push('\n');
        }
        s
    }
}

// ---------------------------------------------------------------- speed sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub speed_mps: f64,
    pub overall_accuracy: f64,
    pub accuracy_std: f64,
    pub per_class_accuracy: Vec<f64>,
    /// Strongest non-DC feature bin of a noiseless window, per terrain.
    pub dominant_bins: Vec<usize>,
    /// `round(v / lambda_dominant * window_s)` from the profile table.
    pub expected_bins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSweepReport {
    pub config: ExperimentConfig,
    pub rows: Vec<SpeedRow>,
}

/// Dominant feature bin of one noiseless window per terrain at `speed`.
pub fn noiseless_dominant_bins(
    config: &ExperimentConfig,
    table: &ProfileTable,
    speed: f64,
) -> Result<Vec<usize>> {
    let beam = config.beam()?;
    let quiet = table.noiseless();
    TerrainClass::ALL
        .iter()
        .map(|&terrain| {
            let run = RobotRun {
                speed,
                duration: config.window_s,
                sample_rate: config.sample_rate_hz,
                seed: synth_seed(config.seed, speed, terrain),
            };
            let series = quiet.synthesize(terrain, &run, &beam, config.sensor_position_m)?;
            let window = signal::window(&series, config.window_s)?.swap_remove(0);
            let values = signal::features(&window, config.sample_rate_hz)?;
            signal::dominant_bin(&signal::Spectrum {
                magnitudes: values,
                bin_width: 1.0 / config.window_s,
            })
        })
        .collect()
}

pub fn expected_bins(config: &ExperimentConfig, table: &ProfileTable, speed: f64) -> Vec<usize> {
    TerrainClass::ALL
        .iter()
        .map(|&t| (table.get(t).dominant_frequency(speed) * config.window_s).round() as usize)
        .collect()
}

pub fn speed_sweep(config: &ExperimentConfig, exec: Execution) -> Result<SpeedSweepReport> {
    config.validate()?;
    let mut speeds = config.speeds_mps.clone();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    if speeds.len() < 2 {
        return Err(Error::Config(
            "speed sweep needs at least 2 distinct speeds".into(),
        ));
    }
    let table = config.profile_table()?;
    let rows = exec::try_map(exec, &speeds, |&v| {
        speed_row(config, &table, v, exec).map_err(|e| e.context(format!("speed {v} m/s")))
    })?;
    Ok(SpeedSweepReport {
        config: config.clone(),
        rows,
    })
}

fn speed_row(
    config: &ExperimentConfig,
    table: &ProfileTable,
    speed: f64,
    exec: Execution,
) -> Result<SpeedRow> {
    let data = synthesize_terrains(config, table, speed, exec)?;
    let dataset = Dataset::concat(data.into_iter().map(|d| d.build.dataset))?;
    let eval = evaluate_repetitions(config, &dataset, &format!("speed-sweep/v={speed}"), exec)?;
    Ok(SpeedRow {
        speed_mps: speed,
        overall_accuracy: eval.mean_accuracy,
        accuracy_std: eval.std_accuracy,
        per_class_accuracy: eval.mean_per_class_accuracy,
        dominant_bins: noiseless_dominant_bins(config, table, speed)?,
        expected_bins: expected_bins(config, table, speed),
    })
}

/// Writes `speed_sweep.json` and `speed_sweep.txt`.
pub fn run_speed_sweep(config: &ExperimentConfig) -> Result<SpeedSweepReport> {
    let report = speed_sweep(config, Execution::default())?;
    fs::create_dir_all(&config.out_dir)?;
    write_json(&config.out_dir.join(SPEED_SWEEP_JSON), &report)?;
    fs::write(config.out_dir.join(SPEED_SWEEP_TXT), report.to_text())?;
    Ok(report)
}

impl SpeedSweepReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<10}", "speed");
        for c in TerrainClass::ALL {
            let _ = write!(s, "{:>11}", c.name());
        }
        let _ = writeln!(s, "{:>11}", "mean");
        for r in &self.rows {
            let _ = write!(s, "{:<10}", format!("{} m/s", r.speed_mps));
            for a in &r.per_class_accuracy {
                let _ = write!(s, "{:>10.1}%", 100.0 * a);
            }
            let _ = writeln!(s, "{:>10.1}%", 100.0 * r.overall_accuracy);
        }
        s
    }
}

// ---------------------------------------------------------------- grad-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRun {
    pub config: ExperimentConfig,
    pub label: TerrainClass,
    pub settings: GradCheckConfig,
    pub report: GradCheckReport,
}

/// Finite-difference check of the configured architecture at a seeded
/// standard-normal input. Real feature vectors have norm near `N` and
/// saturate the untrained softmax, which leaves most output-layer gradients
/// below what a central difference can resolve.
pub fn grad_check(config: &ExperimentConfig) -> Result<GradCheckRun> {
    config.validate()?;
    let arch = config.training.architecture()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "grad-check/input"));
    let input: Vec<f64> = (0..arch.input_width())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let label = TerrainClass::ALL[rng.random_range(0..arch.n_classes().min(TerrainClass::COUNT))];
    let model = MlpModel::init(arch, derive_seed(config.seed, "grad-check/init"))?;
    let settings = GradCheckConfig {
        seed: derive_seed(config.seed, "grad-check/params"),
        ..GradCheckConfig::default()
    };
    let report = gradcheck::gradient_check(&model, &input, label.index(), &settings)?;
    Ok(GradCheckRun {
        config: config.clone(),
        label,
        settings,
        report,
    })
}

pub fn run_grad_check(config: &ExperimentConfig) -> Result<GradCheckRun> {
    let run = grad_check(config)?;
    fs::create_dir_all(&config.out_dir)?;
    write_json(&config.out_dir.join(GRAD_CHECK_JSON), &run)?;
    Ok(run)
}

/// Default dataset directory for a config.
pub fn dataset_dir(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join(DATASET_DIR)
}
