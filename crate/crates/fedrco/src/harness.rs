//! Experiment configuration, orchestration, and metrics emission.
//!
//! A run is fully specified by one JSON document plus a seed. Metrics stream
//! to `metrics.csv` (one row per completed round, flushed as written, so a
//! killed run leaves a parseable prefix), anomaly events to `events.csv`, and
//! the resolved configuration to `config.json` alongside them.

use crate::baselines::{ServerOptConfig, ServerOptMode, ServerOptState};
use crate::data::{
    dirichlet_partition, iid_partition, load_dataset, make_synthetic_classification,
    make_synthetic_images, pathological_partition, Dataset, Partition,
};
use crate::error::{Error, Result};
use crate::federation::{
    AggregationConfig, AggregationStrategy, ClientState, FaultInjection, Federation, GlobalState,
    LocalOptimizer, RoundReport, RunPlan,
};
use crate::kfac::{KfacConfig, Preconditioner};
use crate::model::{conv_net, dense_net, FeatureShape, LayerSpec, Network};
use crate::numerics::Matrix;
use crate::seeding::{stream_rng, Purpose};
use crate::stability::StabilityConfig;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fedrco,
    FedrcoOri,
    Fedavg,
    Fedprox,
    Fedavgm,
    Fedadam,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fedrco => "fedrco",
            Method::FedrcoOri => "fedrco_ori",
            Method::Fedavg => "fedavg",
            Method::Fedprox => "fedprox",
            Method::Fedavgm => "fedavgm",
            Method::Fedadam => "fedadam",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    SyntheticImages {
        #[serde(default = "default_side")]
        height: usize,
        #[serde(default = "default_side")]
        width: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
}

fn default_features() -> usize {
    32
}
fn default_classes() -> usize {
    10
}
fn default_samples() -> usize {
    4000
}
fn default_separation() -> f64 {
    2.0
}
fn default_side() -> usize {
    8
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            features: default_features(),
            classes: default_classes(),
            samples: default_samples(),
            separation: default_separation(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Dirichlet { alpha: f64 },
    Pathological { labels_per_client: usize },
    Iid,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec::Dirichlet { alpha: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Dense {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
    Cnn {
        #[serde(default = "default_filters")]
        filters: (usize, usize),
        #[serde(default = "default_fc")]
        fc: (usize, usize),
    },
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_filters() -> (usize, usize) {
    (8, 8)
}
fn default_fc() -> (usize, usize) {
    (32, 32)
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Dense {
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedproxConfig {
    pub mu: f64,
}

impl Default for FedproxConfig {
    fn default() -> Self {
        FedproxConfig { mu: 0.1 }
    }
}

/// Full run specification. Every section is validated regardless of whether
/// the selected method consumes it; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub model: ModelSpec,
    pub clients: usize,
    pub ratio: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub test_fraction: f64,
    pub kfac: KfacConfig,
    pub stability: StabilityConfig,
    pub aggregation: AggregationConfig,
    pub fedprox: FedproxConfig,
    pub server: ServerOptConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Fedrco,
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::default(),
            model: ModelSpec::default(),
            clients: 20,
            ratio: 0.8,
            rounds: 60,
            local_epochs: 20,
            batch_size: 32,
            lr: 0.00625,
            test_fraction: 0.2,
            kfac: KfacConfig::default(),
            stability: StabilityConfig::default(),
            aggregation: AggregationConfig::default(),
            fedprox: FedproxConfig::default(),
            server: ServerOptConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| Error::config("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::config("clients", "must be at least 1"));
        }
        if self.ratio <= 0.0 || self.ratio > 1.0 {
            return Err(Error::config("ratio", "must be in (0, 1]"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::config("lr", "must be a positive finite number"));
        }
        if self.test_fraction <= 0.0 || self.test_fraction >= 1.0 {
            return Err(Error::config("test_fraction", "must be in (0, 1)"));
        }
        match &self.dataset {
            DatasetSpec::Synthetic {
                features,
                classes,
                samples,
                separation,
            } => {
                if *features == 0 || *classes < 2 || *samples < *classes {
                    return Err(Error::config("dataset", "degenerate synthetic spec"));
                }
                if *separation < 0.0 {
                    return Err(Error::config("dataset.separation", "must be nonnegative"));
                }
            }
            DatasetSpec::SyntheticImages {
                height,
                width,
                classes,
                samples,
                ..
            } => {
                if *height == 0 || *width == 0 || *classes < 2 || *samples < *classes {
                    return Err(Error::config("dataset", "degenerate synthetic image spec"));
                }
            }
            DatasetSpec::File { .. } => {}
        }
        match &self.partition {
            PartitionSpec::Dirichlet { alpha } => {
                if *alpha <= 0.0 {
                    return Err(Error::config("partition.alpha", "must be positive"));
                }
            }
            PartitionSpec::Pathological { labels_per_client } => {
                if *labels_per_client == 0 {
                    return Err(Error::config(
                        "partition.labels_per_client",
                        "must be at least 1",
                    ));
                }
            }
            PartitionSpec::Iid => {}
        }
        self.kfac.validate()?;
        self.stability.validate()?;
        self.server.validate()?;
        if self.fedprox.mu < 0.0 {
            return Err(Error::config("fedprox.mu", "must be nonnegative"));
        }
        Ok(())
    }

    /// Resolve the method and switches into the concrete round-loop plan.
    pub fn resolve_plan(&self) -> RunPlan {
        let second_order = matches!(self.method, Method::Fedrco | Method::FedrcoOri);
        let optimizer = match self.method {
            Method::Fedrco | Method::FedrcoOri => match self.kfac.preconditioner {
                Preconditioner::Kfac => LocalOptimizer::Kfac,
                Preconditioner::Identity => LocalOptimizer::Sgd,
            },
            Method::Fedavg | Method::Fedavgm | Method::Fedadam => LocalOptimizer::Sgd,
            Method::Fedprox => LocalOptimizer::FedProx {
                mu: self.fedprox.mu,
            },
        };
        let mut stability = self.stability.clone();
        stability.enabled = stability.enabled && second_order;
        let aggregation = match self.method {
            Method::Fedrco => self.aggregation.clone(),
            _ => AggregationConfig {
                strategy: AggregationStrategy::Plain,
                swap_gamma: false,
            },
        };
        RunPlan {
            optimizer,
            lr: self.lr,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            ratio: self.ratio,
            kfac: self.kfac.clone(),
            stability,
            aggregation,
            track_spectrum: false,
            fault: None,
        }
    }

    pub fn server_mode(&self) -> ServerOptMode {
        match self.method {
            Method::Fedavgm => ServerOptMode::Momentum,
            Method::Fedadam => ServerOptMode::Adam,
            _ => ServerOptMode::Plain,
        }
    }
}

/// One row of the per-round metrics stream.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub test_accuracy: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub anomaly_low: usize,
    pub anomaly_high: usize,
    pub hard_resets: usize,
    pub inversions: usize,
    pub comm_scalars: u64,
    /// Measured wall-clock time; the single nondeterministic column, kept
    /// last so reproducibility checks can strip it.
    pub wall_ms: u64,
}

pub const METRICS_HEADER: &str = "round,test_accuracy,train_loss,train_accuracy,anomaly_low,anomaly_high,hard_resets,inversions,comm_scalars,wall_ms";

pub const EVENTS_HEADER: &str = "round,client,epoch,score,verdict";

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.test_accuracy,
            self.train_loss,
            self.train_accuracy,
            self.anomaly_low,
            self.anomaly_high,
            self.hard_resets,
            self.inversions,
            self.comm_scalars,
            self.wall_ms
        )
    }
}

/// Drop the trailing wall-clock column from a metrics CSV, leaving the
/// deterministic payload.
pub fn strip_wall_ms(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Extra switches used by tests and audits, not part of the JSON surface.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub fault: Option<FaultInjection>,
    pub track_spectrum: bool,
}

/// Outcome of a full run.
pub struct RunArtifacts {
    pub metrics: Vec<MetricsRecord>,
    pub reports: Vec<RoundReport>,
    pub template: Network,
    pub final_params: Vec<Matrix>,
    pub final_test_accuracy: f64,
}

/// Build the train/test datasets for a config.
pub fn build_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let mut rng = stream_rng(cfg.seed, 0, 0, Purpose::DataGen);
    match &cfg.dataset {
        DatasetSpec::Synthetic {
            features,
            classes,
            samples,
            separation,
        } => {
            let ds =
                make_synthetic_classification(*features, *classes, *samples, *separation, &mut rng);
            Ok(ds.split_holdout(cfg.test_fraction, &mut rng))
        }
        DatasetSpec::SyntheticImages {
            height,
            width,
            classes,
            samples,
            separation,
        } => {
            let ds =
                make_synthetic_images(*height, *width, *classes, *samples, *separation, &mut rng);
            Ok(ds.split_holdout(cfg.test_fraction, &mut rng))
        }
        DatasetSpec::File { path, test_path } => {
            let train = load_dataset(path)?;
            match test_path {
                Some(tp) => Ok((train, load_dataset(tp)?)),
                None => Ok(train.split_holdout(cfg.test_fraction, &mut rng)),
            }
        }
    }
}

fn build_partition(cfg: &ExperimentConfig, train: &Dataset) -> Result<Partition> {
    let mut rng = stream_rng(cfg.seed, 0, 0, Purpose::Partition);
    match &cfg.partition {
        PartitionSpec::Dirichlet { alpha } => {
            dirichlet_partition(train, cfg.clients, *alpha, &mut rng)
        }
        PartitionSpec::Pathological { labels_per_client } => {
            pathological_partition(train, cfg.clients, *labels_per_client, &mut rng)
        }
        PartitionSpec::Iid => iid_partition(train, cfg.clients, &mut rng),
    }
}

fn build_layers(
    cfg: &ExperimentConfig,
    shape: FeatureShape,
    classes: usize,
) -> Result<(FeatureShape, Vec<LayerSpec>)> {
    match (&cfg.model, shape) {
        (ModelSpec::Dense { hidden }, FeatureShape::Flat(d)) => {
            Ok((shape, dense_net(d, hidden, classes)))
        }
        (ModelSpec::Dense { hidden }, FeatureShape::Image { .. }) => {
            let mut layers = vec![LayerSpec::Flatten];
            layers.extend(dense_net(shape.len(), hidden, classes));
            Ok((shape, layers))
        }
        (
            ModelSpec::Cnn { filters, fc },
            FeatureShape::Image {
                channels,
                height,
                width,
            },
        ) => Ok((
            shape,
            conv_net(channels, height, width, classes, *filters, *fc)?,
        )),
        (ModelSpec::Cnn { .. }, FeatureShape::Flat(_)) => Err(Error::config(
            "model",
            "cnn model requires an image-shaped dataset",
        )),
    }
}

/// Assemble the full simulation state for a config.
pub fn build_federation(cfg: &ExperimentConfig, options: &RunOptions) -> Result<Federation> {
    cfg.validate()?;
    let (train, test) = build_datasets(cfg)?;
    train.validate()?;
    test.validate()?;
    let partition = build_partition(cfg, &train)?;
    partition.validate(train.len())?;

    let mut init_rng = stream_rng(cfg.seed, 0, 0, Purpose::Init);
    let (input_shape, layers) = build_layers(cfg, train.shape, train.num_classes)?;
    let template = Network::init(input_shape, layers, true, &mut init_rng)?;

    let mut plan = cfg.resolve_plan();
    plan.fault = options.fault;
    plan.track_spectrum = options.track_spectrum;

    let clients: Vec<ClientState> = partition
        .clients
        .iter()
        .enumerate()
        .map(|(id, indices)| ClientState::new(id, indices.clone(), &template, &plan.stability))
        .collect();
    let server_opt = ServerOptState::new(cfg.server_mode(), cfg.server.clone(), template.params());

    let mut federation = Federation {
        global: GlobalState {
            params: template.params().to_vec(),
            round: 0,
            global_accuracy: 0.0,
        },
        clients,
        template,
        train,
        test,
        plan,
        server_opt,
        seed: cfg.seed,
    };
    federation.global.global_accuracy = federation.global_test_accuracy()?;
    Ok(federation)
}

struct MetricsWriter {
    metrics: std::fs::File,
    events: std::fs::File,
}

impl MetricsWriter {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut metrics = std::fs::File::create(dir.join("metrics.csv"))?;
        writeln!(metrics, "{METRICS_HEADER}")?;
        metrics.flush()?;
        let mut events = std::fs::File::create(dir.join("events.csv"))?;
        writeln!(events, "{EVENTS_HEADER}")?;
        events.flush()?;
        Ok(MetricsWriter { metrics, events })
    }

    fn append(&mut self, record: &MetricsRecord, report: &RoundReport) -> Result<()> {
        writeln!(self.metrics, "{}", record.to_csv_row())?;
        self.metrics.flush()?;
        for client in &report.clients {
            for event in &client.events {
                writeln!(
                    self.events,
                    "{},{},{},{},{}",
                    event.round,
                    event.client,
                    event.epoch,
                    event.score,
                    event.verdict.as_str()
                )?;
                self.events.flush()?;
            }
        }
        Ok(())
    }
}

/// Execute the configured number of rounds, streaming metrics to `out_dir`
/// when given. Deterministic for a fixed config and seed (up to the measured
/// wall-clock column).
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    options: &RunOptions,
) -> Result<RunArtifacts> {
    let mut federation = build_federation(cfg, options)?;
    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let resolved = serde_json::to_string_pretty(cfg).expect("config serializes");
            std::fs::write(dir.join("config.json"), resolved)?;
            Some(MetricsWriter::create(dir)?)
        }
        None => None,
    };

    let d = federation.template.param_count() as u64;
    let mut metrics = Vec::with_capacity(cfg.rounds);
    let mut reports = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let started = Instant::now();
        let report = federation.run_round()?;
        let record = MetricsRecord {
            round: report.round + 1,
            test_accuracy: federation.global.global_accuracy,
            train_loss: report.mean_local_loss(),
            train_accuracy: report.mean_local_accuracy(),
            anomaly_low: report.anomaly_low(),
            anomaly_high: report.anomaly_high(),
            hard_resets: report.hard_resets(),
            inversions: report.inversions(),
            comm_scalars: report.participants.len() as u64 * (d + 1),
            wall_ms: started.elapsed().as_millis() as u64,
        };
        if let Some(writer) = writer.as_mut() {
            writer.append(&record, &report)?;
        }
        metrics.push(record);
        reports.push(report);
    }

    Ok(RunArtifacts {
        metrics,
        reports,
        final_params: federation.global.params.clone(),
        final_test_accuracy: federation.global.global_accuracy,
        template: federation.template,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunArtifacts> {
    run_experiment_with(cfg, out_dir, &RunOptions::default())
}

/// Sweep one parameter over a value list, running the base config once per
/// value under `out_dir/<param>_<value>/` and collecting a summary.
pub struct SweepResult {
    pub value: u64,
    pub final_test_accuracy: f64,
    pub total_inversions: u64,
}

pub fn sweep_t_inv(
    cfg: &ExperimentConfig,
    values: &[u64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepResult>> {
    let mut results = Vec::with_capacity(values.len());
    for &value in values {
        let mut run_cfg = cfg.clone();
        run_cfg.kfac.t_inv = value as usize;
        let sub_dir = out_dir.map(|d| d.join(format!("t_inv_{value}")));
        let artifacts = run_experiment(&run_cfg, sub_dir.as_deref())?;
        results.push(SweepResult {
            value,
            final_test_accuracy: artifacts.final_test_accuracy,
            total_inversions: artifacts.metrics.iter().map(|m| m.inversions as u64).sum(),
        });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut file = std::fs::File::create(dir.join("sweep.csv"))?;
        writeln!(file, "t_inv,final_test_accuracy,total_inversions")?;
        for r in &results {
            writeln!(
                file,
                "{},{},{}",
                r.value, r.final_test_accuracy, r.total_inversions
            )?;
        }
    }
    Ok(results)
}
