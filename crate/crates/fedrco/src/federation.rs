//! The round loop: participant sampling, local training orchestration,
//! weighted aggregation, and the accuracy-gated adaptive pull that preserves
//! local curvature state across rounds.

use crate::baselines::{fedprox_local_step, sgd_local_step, ServerOptState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kfac::{KfacConfig, KfacLayerState};
use crate::model::Network;
use crate::numerics::{symmetric_eigen, Matrix};
use crate::seeding::{stream_rng, Purpose};
use crate::stability::{soft_rollback, total_norm, AnomalyVerdict, Monitor, StabilityConfig};
use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Server-held state.
#[derive(Debug, Clone)]
pub struct GlobalState {
    pub params: Vec<Matrix>,
    pub round: usize,
    /// Test-set accuracy of `params`, refreshed after every aggregation.
    pub global_accuracy: f64,
}

/// One simulated client.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub params: Vec<Matrix>,
    pub kfac: Vec<KfacLayerState>,
    pub monitor: Monitor,
    /// Accuracy on the client's own data, measured at its last round end.
    pub local_accuracy: f64,
    pub data_size: usize,
    /// Index list into the shared training dataset.
    pub indices: Vec<usize>,
}

impl ClientState {
    pub fn new(
        id: usize,
        indices: Vec<usize>,
        template: &Network,
        stability: &StabilityConfig,
    ) -> Self {
        assert!(!indices.is_empty(), "client data size must be positive");
        let kfac = template
            .params()
            .iter()
            .map(|w| KfacLayerState::new(w.cols(), w.rows()))
            .collect();
        ClientState {
            id,
            params: template.params().to_vec(),
            kfac,
            monitor: Monitor::new(stability),
            local_accuracy: 0.0,
            data_size: indices.len(),
            indices,
        }
    }

    /// Hard reset: discard all curvature statistics and cached inverses,
    /// clear the norm history and escalation counter, and copy the global
    /// parameters exactly. Optimizer hyperparameters are pure config here, so
    /// restoring them to defaults is a no-op.
    pub fn hard_reset(&mut self, global_params: &[Matrix]) {
        self.params = global_params.to_vec();
        for layer in &mut self.kfac {
            layer.clear();
        }
        self.monitor.clear();
    }
}

/// Local optimizer executed inside a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalOptimizer {
    Sgd,
    FedProx { mu: f64 },
    Kfac,
}

/// Client pull strategy at round start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    /// Overwrite local parameters with the global model.
    Plain,
    /// Accuracy-gated interpolation that retains local curvature.
    Adaptive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub strategy: AggregationStrategy,
    /// Use the flipped interpolation weight (global weighted by
    /// Acc/(Acc'+Acc) instead of Acc'/(Acc'+Acc)).
    pub swap_gamma: bool,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            strategy: AggregationStrategy::Adaptive,
            swap_gamma: false,
        }
    }
}

/// Test-only fault injected into one `(round, client, epoch)` step.
#[derive(Debug, Clone, Copy)]
pub struct FaultInjection {
    pub round: usize,
    pub client: usize,
    pub epoch: usize,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Copy)]
pub enum FaultKind {
    /// Multiply the update by a constant (gradient blow-up).
    ScaleGradient(f64),
    /// Corrupt the first layer's cached Γ̂⁻¹ with a spike eigenvalue,
    /// emulating an undamped inversion of a near-singular factor.
    CorruptGammaInverse { eigenvalue: f64 },
}

/// Everything the round loop needs to run one configuration.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub optimizer: LocalOptimizer,
    pub lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub ratio: f64,
    pub kfac: KfacConfig,
    pub stability: StabilityConfig,
    pub aggregation: AggregationConfig,
    /// Track the largest eigenvalue of cached inverse factor pairs (used by
    /// the drift audit; costs an eigendecomposition per refresh).
    pub track_spectrum: bool,
    pub fault: Option<FaultInjection>,
}

/// One anomaly event for the metrics log.
#[derive(Debug, Clone)]
pub struct AnomalyEvent {
    pub round: usize,
    pub client: usize,
    pub epoch: usize,
    pub score: f64,
    pub verdict: AnomalyVerdict,
}

/// Per-client slice of a round report.
#[derive(Debug, Clone)]
pub struct ClientRoundReport {
    pub client: usize,
    pub data_size: usize,
    pub local_accuracy: f64,
    pub local_loss: f64,
    pub anomaly_low: usize,
    pub anomaly_high: usize,
    pub hard_resets: usize,
    pub inversions: usize,
    pub drift_sq: f64,
    pub max_inverse_pair_eig: f64,
    pub events: Vec<AnomalyEvent>,
    /// Mini-batch loss observed at each epoch (pre-update).
    pub epoch_losses: Vec<f64>,
}

/// Aggregated outcome of one round.
#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: usize,
    pub participants: Vec<usize>,
    pub clients: Vec<ClientRoundReport>,
}

impl RoundReport {
    pub fn anomaly_low(&self) -> usize {
        self.clients.iter().map(|c| c.anomaly_low).sum()
    }
    pub fn anomaly_high(&self) -> usize {
        self.clients.iter().map(|c| c.anomaly_high).sum()
    }
    pub fn hard_resets(&self) -> usize {
        self.clients.iter().map(|c| c.hard_resets).sum()
    }
    pub fn inversions(&self) -> usize {
        self.clients.iter().map(|c| c.inversions).sum()
    }
    pub fn mean_local_accuracy(&self) -> f64 {
        self.clients.iter().map(|c| c.local_accuracy).sum::<f64>() / self.clients.len() as f64
    }
    pub fn mean_local_loss(&self) -> f64 {
        self.clients.iter().map(|c| c.local_loss).sum::<f64>() / self.clients.len() as f64
    }
    pub fn max_drift_sq(&self) -> f64 {
        self.clients.iter().map(|c| c.drift_sq).fold(0.0, f64::max)
    }
    pub fn max_inverse_pair_eig(&self) -> f64 {
        self.clients
            .iter()
            .map(|c| c.max_inverse_pair_eig)
            .fold(0.0, f64::max)
    }
}

/// Uniform subset of `round(ratio * C)` distinct client ids (at least one),
/// deterministic for a given generator state. Returned sorted.
pub fn sample_participants(num_clients: usize, ratio: f64, rng: &mut impl Rng) -> Vec<usize> {
    assert!(num_clients > 0);
    assert!(ratio > 0.0 && ratio <= 1.0, "ratio must be in (0, 1]");
    let take = ((ratio * num_clients as f64).round() as usize).clamp(1, num_clients);
    let mut ids: Vec<usize> = (0..num_clients).collect();
    for i in 0..take {
        let j = rng.random_range(i..num_clients);
        ids.swap(i, j);
    }
    let mut chosen = ids[..take].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Data-volume-weighted average of uploads: Σ (n_c / n) θ_c over this
/// round's participants.
pub fn aggregate_weighted(uploads: &[(Vec<Matrix>, usize)]) -> Result<Vec<Matrix>> {
    let Some((first, _)) = uploads.first() else {
        return Err(Error::shape_mismatch("at least one upload", "none"));
    };
    let total: usize = uploads.iter().map(|(_, n)| n).sum();
    let mut out: Vec<Matrix> = first
        .iter()
        .map(|p| Matrix::zeros(p.rows(), p.cols()))
        .collect();
    for (params, n) in uploads {
        if params.len() != out.len() {
            return Err(Error::shape_mismatch(
                format!("{} blocks", out.len()),
                format!("{}", params.len()),
            ));
        }
        let w = *n as f64 / total as f64;
        for (acc, p) in out.iter_mut().zip(params) {
            if (p.rows(), p.cols()) != (acc.rows(), acc.cols()) {
                return Err(Error::shape_mismatch(
                    format!("{}x{}", acc.rows(), acc.cols()),
                    format!("{}x{}", p.rows(), p.cols()),
                ));
            }
            acc.add_scaled(p, w);
        }
    }
    Ok(out)
}

/// Round-start pull. Under the adaptive strategy a client whose local
/// accuracy strictly beats the global accuracy blends
/// `γ·θ_global + (1−γ)·θ_local` with `γ = Acc'/(Acc'+Acc)`; otherwise the
/// global model overwrites. Curvature factors are retained in both branches.
pub fn adaptive_pull(client: &mut ClientState, global: &GlobalState, cfg: &AggregationConfig) {
    let blend = match cfg.strategy {
        AggregationStrategy::Plain => None,
        AggregationStrategy::Adaptive => {
            let (acc_local, acc_global) = (client.local_accuracy, global.global_accuracy);
            if acc_local > acc_global {
                // acc_local > acc_global >= 0 rules the denominator out of 0;
                // the degenerate 0/0 case falls into the overwrite branch.
                let gamma = if cfg.swap_gamma {
                    acc_global / (acc_local + acc_global)
                } else {
                    acc_local / (acc_local + acc_global)
                };
                Some(gamma)
            } else {
                None
            }
        }
    };
    match blend {
        Some(gamma) => {
            for (local, global) in client.params.iter_mut().zip(&global.params) {
                local.scale_in_place(1.0 - gamma);
                local.add_scaled(global, gamma);
            }
        }
        None => client.params = global.params.to_vec(),
    }
}

/// K local steps of the selected optimizer, with the anomaly monitor wrapped
/// around every applied update. Returns the per-client report slice.
pub fn run_local_round(
    client: &mut ClientState,
    global: &GlobalState,
    template: &Network,
    dataset: &Dataset,
    plan: &RunPlan,
    seed: u64,
    round: usize,
) -> Result<ClientRoundReport> {
    let stability = &plan.stability;
    if stability.enabled {
        client.monitor.start_round();
    }
    if plan.optimizer == LocalOptimizer::Kfac && plan.kfac.refresh_at_round_start {
        for layer in &mut client.kfac {
            layer.invalidate_inverses();
        }
    }

    let mut net = template.clone();
    net.set_params(client.params.clone());
    let anchor = client.params.clone();
    let mut batch_rng = stream_rng(seed, round as u64, client.id as u64, Purpose::Batch);

    let mut report = ClientRoundReport {
        client: client.id,
        data_size: client.data_size,
        local_accuracy: 0.0,
        local_loss: 0.0,
        anomaly_low: 0,
        anomaly_high: 0,
        hard_resets: 0,
        inversions: 0,
        drift_sq: 0.0,
        max_inverse_pair_eig: 0.0,
        events: Vec::new(),
        epoch_losses: Vec::new(),
    };

    for epoch in 0..plan.local_epochs {
        let batch_indices = draw_batch(&client.indices, plan.batch_size, &mut batch_rng);
        let (batch, labels) = dataset.batch(&batch_indices)?;
        let (loss, grads, capture) = net.forward_backward(&batch, &labels)?;
        report.epoch_losses.push(loss);

        let mut update = match plan.optimizer {
            LocalOptimizer::Sgd | LocalOptimizer::FedProx { .. } => grads,
            LocalOptimizer::Kfac => {
                let mut refreshed = false;
                let mut degenerate = false;
                for (state, layer_capture) in client.kfac.iter_mut().zip(&capture.layers) {
                    state.accumulate_factors(layer_capture, capture.batch_size, &plan.kfac)?;
                    match state.refresh_inverses_if_due(&plan.kfac) {
                        Ok(r) => refreshed |= r,
                        Err(Error::DegenerateTrace { .. }) => {
                            degenerate = true;
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                if degenerate {
                    // The scale correction is undefined; the curvature state
                    // is no longer trustworthy.
                    client.hard_reset(&global.params);
                    net.set_params(client.params.clone());
                    report.hard_resets += 1;
                    continue;
                }
                if refreshed {
                    report.inversions += 1;
                    if plan.track_spectrum {
                        report.max_inverse_pair_eig = report
                            .max_inverse_pair_eig
                            .max(max_inverse_pair_eig(&client.kfac)?);
                    }
                }
                if let Some(fault) = plan.fault {
                    if matches!(fault.kind, FaultKind::CorruptGammaInverse { .. })
                        && fault.round == round
                        && fault.client == client.id
                        && fault.epoch == epoch
                    {
                        let FaultKind::CorruptGammaInverse { eigenvalue } = fault.kind else {
                            unreachable!()
                        };
                        inject_gamma_spike(&mut client.kfac[0], eigenvalue);
                    }
                }
                let mut preconditioned = Vec::with_capacity(grads.len());
                for (state, grad) in client.kfac.iter().zip(&grads) {
                    preconditioned.push(state.precondition_gradient(grad)?);
                }
                preconditioned
            }
        };

        if let Some(fault) = plan.fault {
            if matches!(fault.kind, FaultKind::ScaleGradient(_))
                && fault.round == round
                && fault.client == client.id
                && fault.epoch == epoch
            {
                let FaultKind::ScaleGradient(scale) = fault.kind else {
                    unreachable!()
                };
                for block in &mut update {
                    block.scale_in_place(scale);
                }
            }
        }

        if stability.enabled {
            let raw_norm = total_norm(&update);
            let score = client.monitor.score(raw_norm, stability);
            let verdict = client.monitor.classify(score, stability);
            client.monitor.note_score(score, stability);
            if verdict != AnomalyVerdict::Normal {
                report.events.push(AnomalyEvent {
                    round,
                    client: client.id,
                    epoch,
                    score,
                    verdict,
                });
            }
            match verdict {
                AnomalyVerdict::Normal => {
                    apply_update(&mut net, client, &update, &anchor, plan)?;
                    client.monitor.record_applied(raw_norm);
                }
                AnomalyVerdict::AccumulatedDivergence => {
                    report.anomaly_low += 1;
                    let rolled = soft_rollback(&update, stability.grad_stable)?;
                    let applied_norm = total_norm(&rolled);
                    apply_update(&mut net, client, &rolled, &anchor, plan)?;
                    client.monitor.record_applied(applied_norm);
                }
                AnomalyVerdict::SuddenExplosion => {
                    report.anomaly_high += 1;
                    report.hard_resets += 1;
                    client.hard_reset(&global.params);
                    net.set_params(client.params.clone());
                }
            }
        } else {
            apply_update(&mut net, client, &update, &anchor, plan)?;
        }
    }

    let (local_batch, local_labels) = dataset.batch(&client.indices)?;
    report.local_accuracy = net.evaluate_accuracy(&local_batch, &local_labels)?;
    report.local_loss = net.loss(&local_batch, &local_labels)?;
    client.local_accuracy = report.local_accuracy;
    report.drift_sq = client
        .params
        .iter()
        .zip(&global.params)
        .map(|(a, b)| {
            let d = a.sub(b).frobenius_norm();
            d * d
        })
        .sum();
    Ok(report)
}

fn apply_update(
    net: &mut Network,
    client: &mut ClientState,
    update: &[Matrix],
    anchor: &[Matrix],
    plan: &RunPlan,
) -> Result<()> {
    match plan.optimizer {
        LocalOptimizer::FedProx { mu } => {
            fedprox_local_step(&mut client.params, update, plan.lr, mu, anchor)?
        }
        _ => sgd_local_step(&mut client.params, update, plan.lr)?,
    }
    net.set_params(client.params.clone());
    Ok(())
}

/// `batch_size` distinct indices from the client pool (the whole pool when it
/// is smaller).
fn draw_batch(pool: &[usize], batch_size: usize, rng: &mut impl Rng) -> Vec<usize> {
    if pool.len() <= batch_size {
        return pool.to_vec();
    }
    let mut scratch: Vec<usize> = pool.to_vec();
    for i in 0..batch_size {
        let j = rng.random_range(i..scratch.len());
        scratch.swap(i, j);
    }
    scratch.truncate(batch_size);
    scratch
}

/// Largest eigenvalue over layers of `λ_max(Ω̂⁻¹)·λ_max(Γ̂⁻¹)`.
fn max_inverse_pair_eig(kfac: &[KfacLayerState]) -> Result<f64> {
    let mut worst = 0.0f64;
    for state in kfac {
        let (Some(omega_inv), Some(gamma_inv)) = (state.omega_inv(), state.gamma_inv()) else {
            continue;
        };
        let (om_vals, _) = symmetric_eigen(omega_inv)?;
        let (ga_vals, _) = symmetric_eigen(gamma_inv)?;
        let pair = om_vals[0].max(0.0) * ga_vals[0].max(0.0);
        worst = worst.max(pair);
    }
    Ok(worst)
}

fn inject_gamma_spike(state: &mut KfacLayerState, eigenvalue: f64) {
    let Some(gamma_inv) = state.gamma_inv() else {
        return;
    };
    let mut spiked = gamma_inv.clone();
    // Rank-1 spike along the first basis direction.
    spiked[(0, 0)] += eigenvalue;
    state.inject_gamma_inverse(spiked);
}

/// Shared state for a full simulation.
pub struct Federation {
    pub global: GlobalState,
    pub clients: Vec<ClientState>,
    pub template: Network,
    pub train: Dataset,
    pub test: Dataset,
    pub plan: RunPlan,
    pub server_opt: ServerOptState,
    pub seed: u64,
}

impl Federation {
    /// Test accuracy of the current global parameters.
    pub fn global_test_accuracy(&self) -> Result<f64> {
        let mut net = self.template.clone();
        net.set_params(self.global.params.clone());
        let (batch, labels) = self.test.full_batch()?;
        net.evaluate_accuracy(&batch, &labels)
    }

    /// Execute one communication round and advance the global state.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let round = self.global.round;
        let mut rng = stream_rng(self.seed, round as u64, 0, Purpose::Participation);
        let participants = sample_participants(self.clients.len(), self.plan.ratio, &mut rng);

        let global = &self.global;
        let template = &self.template;
        let train = &self.train;
        let plan = &self.plan;
        let seed = self.seed;
        let participant_set: Vec<bool> = {
            let mut mask = vec![false; self.clients.len()];
            for &p in &participants {
                mask[p] = true;
            }
            mask
        };

        let mut reports: Vec<ClientRoundReport> = self
            .clients
            .par_iter_mut()
            .enumerate()
            .filter(|(id, _)| participant_set[*id])
            .map(|(_, client)| {
                adaptive_pull(client, global, &plan.aggregation);
                run_local_round(client, global, template, train, plan, seed, round)
            })
            .collect::<Result<Vec<_>>>()?;
        reports.sort_by_key(|r| r.client);

        let uploads: Vec<(Vec<Matrix>, usize)> = reports
            .iter()
            .map(|r| (self.clients[r.client].params.clone(), r.data_size))
            .collect();
        let aggregate = aggregate_weighted(&uploads)?;
        let pseudo_grad: Vec<Matrix> = self
            .global
            .params
            .iter()
            .zip(&aggregate)
            .map(|(g, a)| g.sub(a))
            .collect();
        self.server_opt
            .server_adaptive_aggregate(&mut self.global.params, &pseudo_grad)?;

        self.global.round += 1;
        self.global.global_accuracy = self.global_test_accuracy()?;
        Ok(RoundReport {
            round,
            participants,
            clients: reports,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{ServerOptConfig, ServerOptMode};
    use crate::data::make_synthetic_classification;
    use crate::model::{dense_net, FeatureShape};
    use rand_chacha::ChaCha8Rng;

    fn plan(optimizer: LocalOptimizer) -> RunPlan {
        RunPlan {
            optimizer,
            lr: 0.00625,
            local_epochs: 20,
            batch_size: 32,
            ratio: 1.0,
            kfac: KfacConfig::default(),
            stability: StabilityConfig::default(),
            aggregation: AggregationConfig {
                strategy: AggregationStrategy::Plain,
                swap_gamma: false,
            },
            track_spectrum: false,
            fault: None,
        }
    }

    fn small_setup(seed: u64, samples: usize) -> (Network, Dataset, GlobalState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = make_synthetic_classification(6, 3, samples, 8.0, &mut rng);
        let net =
            Network::init(FeatureShape::Flat(6), dense_net(6, &[8], 3), true, &mut rng).unwrap();
        let global = GlobalState {
            params: net.params().to_vec(),
            round: 0,
            global_accuracy: 0.0,
        };
        (net, ds, global)
    }

    #[test]
    fn full_ratio_selects_every_client() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let ids = sample_participants(12, 1.0, &mut rng);
        assert_eq!(ids, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn point_eight_ratio_selects_eighty_distinct_of_one_hundred() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let ids = sample_participants(100, 0.8, &mut rng);
        assert_eq!(ids.len(), 80);
        let mut dedup = ids.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 80);
    }

    #[test]
    fn participant_sampling_is_deterministic() {
        let a = sample_participants(50, 0.3, &mut ChaCha8Rng::seed_from_u64(63));
        let b = sample_participants(50, 0.3, &mut ChaCha8Rng::seed_from_u64(63));
        assert_eq!(a, b);
    }

    #[test]
    fn single_upload_is_recovered_exactly() {
        let params = vec![Matrix::from_rows(&[vec![1.5, -2.5]])];
        let out = aggregate_weighted(&[(params.clone(), 7)]).unwrap();
        assert_eq!(out[0].as_slice(), params[0].as_slice());
    }

    #[test]
    fn equal_weights_of_opposite_params_cancel() {
        let p = vec![Matrix::from_rows(&[vec![2.0, -4.0]])];
        let n = vec![p[0].scale(-1.0)];
        let out = aggregate_weighted(&[(p, 3), (n, 3)]).unwrap();
        assert_eq!(out[0].as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn weighted_mean_arithmetic() {
        let a = vec![Matrix::from_rows(&[vec![0.0]])];
        let b = vec![Matrix::from_rows(&[vec![4.0]])];
        let out = aggregate_weighted(&[(a, 1), (b, 3)]).unwrap();
        assert!((out[0][(0, 0)] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let uploads: Vec<(Vec<Matrix>, usize)> = (0..5)
            .map(|i| {
                (
                    vec![Matrix::from_rows(&[vec![i as f64, -(i as f64) * 0.5]])],
                    i + 1,
                )
            })
            .collect();
        let forward = aggregate_weighted(&uploads).unwrap();
        let mut reversed = uploads.clone();
        reversed.reverse();
        let backward = aggregate_weighted(&reversed).unwrap();
        assert!(forward[0].sub(&backward[0]).max_abs() < 1e-12);
    }

    #[test]
    fn pull_overwrites_when_accuracies_tie() {
        let (net, ds, mut global) = small_setup(64, 120);
        global.global_accuracy = 0.5;
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        client.local_accuracy = 0.5;
        client.params[0].scale_in_place(2.0);
        adaptive_pull(&mut client, &global, &AggregationConfig::default());
        for (c, g) in client.params.iter().zip(&global.params) {
            assert_eq!(c.as_slice(), g.as_slice());
        }
    }

    #[test]
    fn pull_blends_with_accuracy_ratio_weight() {
        let (net, ds, mut global) = small_setup(65, 120);
        global.global_accuracy = 0.4;
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        client.local_accuracy = 0.8;
        let local_before = client.params[0].clone();
        adaptive_pull(&mut client, &global, &AggregationConfig::default());
        let gamma = 0.8 / (0.8 + 0.4);
        for r in 0..local_before.rows() {
            for c in 0..local_before.cols() {
                let expect =
                    gamma * global.params[0][(r, c)] + (1.0 - gamma) * local_before[(r, c)];
                assert!((client.params[0][(r, c)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pull_with_perfect_local_and_zero_global_takes_global() {
        // gamma = 1/(1+0) = 1: the blend branch still lands on the global
        // parameters exactly.
        let (net, ds, mut global) = small_setup(66, 120);
        global.global_accuracy = 0.0;
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        client.local_accuracy = 1.0;
        client.params[0].scale_in_place(3.0);
        adaptive_pull(&mut client, &global, &AggregationConfig::default());
        for (c, g) in client.params.iter().zip(&global.params) {
            assert!(c.sub(g).max_abs() < 1e-15);
        }
    }

    #[test]
    fn pull_blend_is_entrywise_convex() {
        let (net, ds, mut global) = small_setup(67, 120);
        global.global_accuracy = 0.3;
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        client.local_accuracy = 0.9;
        let before = client.params.clone();
        adaptive_pull(&mut client, &global, &AggregationConfig::default());
        for ((after, local), global_p) in client.params.iter().zip(&before).zip(&global.params) {
            for i in 0..after.rows() {
                for j in 0..after.cols() {
                    let lo = local[(i, j)].min(global_p[(i, j)]);
                    let hi = local[(i, j)].max(global_p[(i, j)]);
                    assert!(after[(i, j)] >= lo - 1e-12 && after[(i, j)] <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn plain_strategy_always_overwrites_even_when_local_wins() {
        let (net, ds, mut global) = small_setup(73, 120);
        global.global_accuracy = 0.1;
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        client.local_accuracy = 0.9;
        client.params[0].scale_in_place(2.0);
        let plain = AggregationConfig {
            strategy: AggregationStrategy::Plain,
            swap_gamma: false,
        };
        adaptive_pull(&mut client, &global, &plain);
        for (c, g) in client.params.iter().zip(&global.params) {
            assert_eq!(c.as_slice(), g.as_slice());
        }
    }

    #[test]
    fn pull_retains_curvature_factors() {
        let (net, ds, mut global) = small_setup(68, 120);
        global.global_accuracy = 0.2;
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        let p = plan(LocalOptimizer::Kfac);
        run_local_round(&mut client, &global, &net, &ds, &p, 1, 0).unwrap();
        assert!(client.kfac[0].initialized());
        adaptive_pull(&mut client, &global, &AggregationConfig::default());
        assert!(
            client.kfac[0].initialized(),
            "factors must survive the pull"
        );
    }

    #[test]
    fn single_identity_step_reduces_to_sgd() {
        let (net, ds, global) = small_setup(69, 32);
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        let mut p = plan(LocalOptimizer::Sgd);
        p.local_epochs = 1;
        p.stability.enabled = false;
        // Client pool == batch size, so the single epoch uses the full pool.
        let before = client.params.clone();
        run_local_round(&mut client, &global, &net, &ds, &p, 5, 0).unwrap();
        let (batch, labels) = ds.full_batch().unwrap();
        let mut reference = net.clone();
        reference.set_params(before.clone());
        let (_, grads, _) = reference.forward_backward(&batch, &labels).unwrap();
        for ((after, g), b) in client.params.iter().zip(&grads).zip(&before) {
            let mut expect = b.clone();
            expect.add_scaled(g, -p.lr);
            assert_eq!(after.as_slice(), expect.as_slice());
        }
    }

    #[test]
    fn kfac_round_on_separable_data_decreases_loss_epoch_over_epoch() {
        let (net, ds, global) = small_setup(70, 32);
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        let p = plan(LocalOptimizer::Kfac);
        // Pool == batch, so each epoch sees the same full batch and the loss
        // sequence is noise-free.
        let report = run_local_round(&mut client, &global, &net, &ds, &p, 7, 0).unwrap();
        let losses = &report.epoch_losses;
        assert_eq!(losses.len(), 20);
        let decreases = losses.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(
            decreases as f64 >= 0.9 * (losses.len() - 1) as f64,
            "only {decreases} decreasing epochs: {losses:?}"
        );
    }

    #[test]
    fn injected_blowup_triggers_reset_and_round_completes() {
        let (net, ds, global) = small_setup(71, 200);
        let mut client = ClientState::new(
            0,
            (0..ds.len()).collect(),
            &net,
            &StabilityConfig::default(),
        );
        let mut p = plan(LocalOptimizer::Kfac);
        p.fault = Some(FaultInjection {
            round: 0,
            client: 0,
            epoch: 5,
            kind: FaultKind::ScaleGradient(1e4),
        });
        let report = run_local_round(&mut client, &global, &net, &ds, &p, 9, 0).unwrap();
        assert!(report.hard_resets >= 1, "no reset fired");
        assert!(report.anomaly_high >= 1);
        assert!(client.params.iter().all(Matrix::is_finite));
        assert_eq!(report.epoch_losses.len(), 20, "round must complete");
    }

    #[test]
    fn rounds_are_deterministic_for_equal_seeds() {
        let run = |seed: u64| -> Vec<f64> {
            let (net, ds, global) = small_setup(72, 300);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let test = make_synthetic_classification(6, 3, 90, 8.0, &mut rng);
            let clients: Vec<ClientState> = (0..3)
                .map(|i| {
                    ClientState::new(
                        i,
                        (i * 100..(i + 1) * 100).collect(),
                        &net,
                        &StabilityConfig::default(),
                    )
                })
                .collect();
            let mut fed = Federation {
                global: global.clone(),
                clients,
                template: net.clone(),
                train: ds,
                test,
                plan: plan(LocalOptimizer::Kfac),
                server_opt: ServerOptState::new(
                    ServerOptMode::Plain,
                    ServerOptConfig::default(),
                    net.params(),
                ),
                seed,
            };
            let mut accs = Vec::new();
            for _ in 0..3 {
                fed.run_round().unwrap();
                accs.push(fed.global.global_accuracy);
            }
            accs
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }
}
