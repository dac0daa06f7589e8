//! First-order local steps and the server-side adaptive aggregation modes
//! shared by the comparison methods (plain averaging, server momentum, server
//! Adam). All of them run through the same round loop as the second-order
//! path so method comparisons isolate the optimizer.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

fn check_aligned(a: &[Matrix], b: &[Matrix]) -> Result<()> {
    if a.len() != b.len()
        || a.iter()
            .zip(b)
            .any(|(x, y)| x.rows() != y.rows() || x.cols() != y.cols())
    {
        return Err(Error::shape_mismatch(
            format!("{} aligned parameter blocks", a.len()),
            format!("{}", b.len()),
        ));
    }
    Ok(())
}

/// Plain gradient step: θ ← θ − η g.
pub fn sgd_local_step(params: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
    check_aligned(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        p.add_scaled(g, -lr);
    }
    Ok(())
}

/// Proximal step: θ ← θ − η (g + μ (θ − θ_anchor)).
pub fn fedprox_local_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    lr: f64,
    mu: f64,
    anchor: &[Matrix],
) -> Result<()> {
    check_aligned(params, grads)?;
    check_aligned(params, anchor)?;
    assert!(mu >= 0.0);
    for ((p, g), a) in params.iter_mut().zip(grads).zip(anchor) {
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                let prox = mu * (p[(i, j)] - a[(i, j)]);
                p[(i, j)] -= lr * (g[(i, j)] + prox);
            }
        }
    }
    Ok(())
}

/// Server optimizer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerOptMode {
    Plain,
    Momentum,
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerOptConfig {
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub server_lr: f64,
}

impl Default for ServerOptConfig {
    fn default() -> Self {
        ServerOptConfig {
            beta: 0.9,
            beta1: 0.9,
            beta2: 0.99,
            eps_adam: 1e-3,
            server_lr: 1.0,
        }
    }
}

impl ServerOptConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("server.{name}"), "must be in [0, 1)"));
            }
        }
        if self.eps_adam <= 0.0 {
            return Err(Error::config("server.eps_adam", "must be positive"));
        }
        if self.server_lr <= 0.0 {
            return Err(Error::config("server.server_lr", "must be positive"));
        }
        Ok(())
    }
}

/// Buffers for server momentum / Adam applied to the round pseudo-gradient
/// `θ_global − aggregate`.
#[derive(Debug, Clone)]
pub struct ServerOptState {
    pub mode: ServerOptMode,
    pub cfg: ServerOptConfig,
    momentum: Vec<Matrix>,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    step: usize,
}

impl ServerOptState {
    pub fn new(mode: ServerOptMode, cfg: ServerOptConfig, template: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = template
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        ServerOptState {
            mode,
            cfg,
            momentum: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    /// Update the global parameters in place from the pseudo-gradient.
    pub fn server_adaptive_aggregate(
        &mut self,
        params: &mut [Matrix],
        pseudo_grad: &[Matrix],
    ) -> Result<()> {
        check_aligned(params, pseudo_grad)?;
        match self.mode {
            ServerOptMode::Plain => {
                // θ ← θ − pseudo_grad == aggregate.
                for (p, g) in params.iter_mut().zip(pseudo_grad) {
                    p.add_scaled(g, -1.0);
                }
            }
            ServerOptMode::Momentum => {
                for ((p, v), g) in params.iter_mut().zip(&mut self.momentum).zip(pseudo_grad) {
                    v.scale_in_place(self.cfg.beta);
                    v.add_scaled(g, 1.0);
                    p.add_scaled(v, -self.cfg.server_lr);
                }
            }
            ServerOptMode::Adam => {
                self.step += 1;
                let t = self.step as i32;
                let bc1 = 1.0 - self.cfg.beta1.powi(t);
                let bc2 = 1.0 - self.cfg.beta2.powi(t);
                for (((p, m), v), g) in params
                    .iter_mut()
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                    .zip(pseudo_grad)
                {
                    for i in 0..p.rows() {
                        for j in 0..p.cols() {
                            let gv = g[(i, j)];
                            m[(i, j)] = self.cfg.beta1 * m[(i, j)] + (1.0 - self.cfg.beta1) * gv;
                            v[(i, j)] =
                                self.cfg.beta2 * v[(i, j)] + (1.0 - self.cfg.beta2) * gv * gv;
                            let m_hat = m[(i, j)] / bc1;
                            let v_hat = v[(i, j)] / bc2;
                            p[(i, j)] -=
                                self.cfg.server_lr * m_hat / (v_hat.sqrt() + self.cfg.eps_adam);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
