//! Kronecker-factored curvature per layer: EMA accumulation of the input and
//! pre-activation covariances, lazily refreshed damped inverses with scale
//! correction split between the two factors, and the preconditioned step.
//!
//! Per step, preconditioning costs the two factor products
//! O(d_in d_out (d_in + d_out)); the cubic factor inversions
//! O(d_in^3 + d_out^3) are amortized over `t_inv` steps by the lazy refresh
//! clock and show up in the metrics as the `inversions` counter.

use crate::error::{Error, Result};
use crate::model::LayerCapture;
use crate::numerics::{damped_symmetric_inverse, Matrix};
use serde::{Deserialize, Serialize};

/// Trace convention for the factor scale correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiTraceMode {
    /// `sqrt((tr Ω / d_in) / (tr Γ / d_out))` — dimensionless, the default.
    Normalized,
    /// `sqrt(tr Ω / tr Γ)` without dimension normalization.
    Literal,
}

/// Which preconditioner the second-order methods apply. `Identity` turns the
/// inner loop into plain SGD and is the reduction-equivalence switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Kfac,
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KfacConfig {
    /// EMA weight on the fresh batch estimate, in (0, 1].
    pub ema_alpha: f64,
    /// Tikhonov damping strength ε; the two factor ridges multiply to ε.
    pub eps: f64,
    /// Steps between inverse refreshes.
    pub t_inv: usize,
    pub pi_trace_mode: PiTraceMode,
    /// Normalize conv-layer Γ by batch size only instead of batch x positions.
    pub conv_gamma_batch_only: bool,
    /// Recompute inverses at the first step of every round even when the
    /// inversion clock is not due.
    pub refresh_at_round_start: bool,
    pub preconditioner: Preconditioner,
}

impl Default for KfacConfig {
    fn default() -> Self {
        KfacConfig {
            ema_alpha: 0.95,
            eps: 0.03,
            t_inv: 20,
            pi_trace_mode: PiTraceMode::Normalized,
            conv_gamma_batch_only: false,
            refresh_at_round_start: false,
            preconditioner: Preconditioner::Kfac,
        }
    }
}

impl KfacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ema_alpha <= 0.0 || self.ema_alpha > 1.0 {
            return Err(Error::config("kfac.ema_alpha", "must be in (0, 1]"));
        }
        if self.eps <= 0.0 {
            return Err(Error::config("kfac.eps", "must be positive"));
        }
        if self.t_inv == 0 {
            return Err(Error::config("kfac.t_inv", "must be at least 1"));
        }
        Ok(())
    }
}

/// Factor state for one parameterized layer.
///
/// `steps_since_inversion` counts steps since the last refresh, with the
/// refreshing step itself counted as 1; a refresh is due once it reaches
/// `t_inv`, so inversions land every `t_inv` steps exactly.
#[derive(Debug, Clone)]
pub struct KfacLayerState {
    omega: Matrix,
    gamma: Matrix,
    omega_inv: Option<Matrix>,
    gamma_inv: Option<Matrix>,
    steps_since_inversion: usize,
    initialized: bool,
}

impl KfacLayerState {
    pub fn new(d_in: usize, d_out: usize) -> Self {
        KfacLayerState {
            omega: Matrix::zeros(d_in, d_in),
            gamma: Matrix::zeros(d_out, d_out),
            omega_inv: None,
            gamma_inv: None,
            steps_since_inversion: 0,
            initialized: false,
        }
    }

    pub fn omega(&self) -> &Matrix {
        &self.omega
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }

    pub fn omega_inv(&self) -> Option<&Matrix> {
        self.omega_inv.as_ref()
    }

    pub fn gamma_inv(&self) -> Option<&Matrix> {
        self.gamma_inv.as_ref()
    }

    pub fn initialized(&self) -> bool {
        self.initialized
    }

    pub fn inverses_ready(&self) -> bool {
        self.omega_inv.is_some() && self.gamma_inv.is_some()
    }

    pub fn steps_since_inversion(&self) -> usize {
        self.steps_since_inversion
    }

    /// Fold one batch of captured factors into the EMAs. The first call seeds
    /// the EMAs with the raw batch estimate.
    pub fn accumulate_factors(
        &mut self,
        capture: &LayerCapture,
        batch_size: usize,
        cfg: &KfacConfig,
    ) -> Result<()> {
        if capture.a.rows() != self.omega.rows() || capture.g.rows() != self.gamma.rows() {
            return Err(Error::shape_mismatch(
                format!("A rows {}, G rows {}", self.omega.rows(), self.gamma.rows()),
                format!("A rows {}, G rows {}", capture.a.rows(), capture.g.rows()),
            ));
        }
        let omega_div = capture.b_eff as f64;
        let gamma_div = if cfg.conv_gamma_batch_only {
            batch_size as f64
        } else {
            capture.b_eff as f64
        };
        let batch_omega = capture
            .a
            .matmul_transpose(&capture.a)
            .scale(1.0 / omega_div)
            .symmetrized();
        let batch_gamma = capture
            .g
            .matmul_transpose(&capture.g)
            .scale(1.0 / gamma_div)
            .symmetrized();
        if self.initialized {
            let alpha = cfg.ema_alpha;
            self.omega.scale_in_place(1.0 - alpha);
            self.omega.add_scaled(&batch_omega, alpha);
            self.gamma.scale_in_place(1.0 - alpha);
            self.gamma.add_scaled(&batch_gamma, alpha);
        } else {
            self.omega = batch_omega;
            self.gamma = batch_gamma;
            self.initialized = true;
        }
        Ok(())
    }

    /// Recompute the damped inverses when the clock is due or no inverses
    /// exist yet; otherwise just advance the clock. Returns whether an
    /// inversion happened.
    pub fn refresh_inverses_if_due(&mut self, cfg: &KfacConfig) -> Result<bool> {
        assert!(self.initialized, "refresh before first factor accumulation");
        let due = !self.inverses_ready() || self.steps_since_inversion >= cfg.t_inv;
        if !due {
            self.steps_since_inversion += 1;
            return Ok(false);
        }
        let d_in = self.omega.rows() as f64;
        let d_out = self.gamma.rows() as f64;
        let tr_omega = self.omega.trace();
        let tr_gamma = self.gamma.trace();
        if tr_gamma <= 1e-30 || tr_omega <= 1e-30 {
            return Err(Error::DegenerateTrace {
                trace: tr_gamma.min(tr_omega),
            });
        }
        let pi = match cfg.pi_trace_mode {
            PiTraceMode::Normalized => ((tr_omega / d_in) / (tr_gamma / d_out)).sqrt(),
            PiTraceMode::Literal => (tr_omega / tr_gamma).sqrt(),
        };
        let sqrt_eps = cfg.eps.sqrt();
        self.omega_inv = Some(damped_symmetric_inverse(&self.omega, pi * sqrt_eps)?);
        self.gamma_inv = Some(damped_symmetric_inverse(&self.gamma, sqrt_eps / pi)?);
        self.steps_since_inversion = 1;
        Ok(true)
    }

    /// Apply the cached Kronecker-factored inverse to a `d_out x d_in`
    /// gradient block: `Γ̂⁻¹ · ∇ · Ω̂⁻¹`, the matrix form of applying
    /// `(Ω̂ ⊗ Γ̂)⁻¹` to the column-stacked gradient.
    pub fn precondition_gradient(&self, grad: &Matrix) -> Result<Matrix> {
        let (Some(gamma_inv), Some(omega_inv)) = (&self.gamma_inv, &self.omega_inv) else {
            return Err(Error::InversesNotReady);
        };
        if grad.rows() != gamma_inv.rows() || grad.cols() != omega_inv.rows() {
            return Err(Error::shape_mismatch(
                format!("{}x{}", gamma_inv.rows(), omega_inv.rows()),
                format!("{}x{}", grad.rows(), grad.cols()),
            ));
        }
        Ok(gamma_inv.matmul(grad).matmul(omega_inv))
    }

    /// Drop the cached inverses so the next refresh recomputes them.
    pub fn invalidate_inverses(&mut self) {
        self.omega_inv = None;
        self.gamma_inv = None;
    }

    /// Discard all accumulated statistics (hard-reset support).
    pub fn clear(&mut self) {
        let (d_in, d_out) = (self.omega.rows(), self.gamma.rows());
        *self = KfacLayerState::new(d_in, d_out);
    }

    /// Test/diagnostic hook: overwrite the cached Γ̂⁻¹ with a corrupted matrix,
    /// emulating an undamped near-singular factor inversion.
    pub fn inject_gamma_inverse(&mut self, gamma_inv: Matrix) {
        self.gamma_inv = Some(gamma_inv);
    }
}
