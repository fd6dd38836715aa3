//! Dynamic twin-structured-sparsity channel tracking.
//!
//! Layer I recovers the twin-structured support by greedy structured
//! matching pursuit, with candidate scores weighted by activity priors
//! carried over from the previous slot. Layer II/III estimate the sparse
//! gains by MMSE under the Gamma-Gaussian prior and refine the off-grid
//! angles by coordinate-wise bounded maximisation of the penalised
//! log-likelihood. Header slots run the full pipeline on the angle-training
//! pilots; ordinary slots freeze the support and angles and re-fit only the
//! gains from the short per-slot Doppler pilot block.

mod baseline;
mod gains;
mod support_search;

pub use baseline::{pilot_matrix_rank, unstructured_omp};
pub use gains::{mmse_gains, refine_angles, GainPrior};
pub use support_search::estimate_support;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{CascadedChannel, Dictionary, SupportPattern};
use crate::error::{CoreError, Result};
use crate::numerics::db_to_linear;
use crate::rng::complex_gaussian;
use crate::scenario::ScenarioConfig;

/// Received pilot observations for one slot, one block per tracked UE.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    /// Per-UE stacked observations, length `n_pilots * n_bs_antennas`.
    pub ue_obs: Vec<DVector<Complex64>>,
    pub n_pilots: usize,
    /// Header slots carry the angle-training block; ordinary slots only the
    /// Doppler block.
    pub header: bool,
    pub snr_db: f64,
    /// Per-entry noise variance actually applied to the observations.
    pub noise_var: f64,
}

/// Posterior state carried from slot to slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    /// Activity probability of each common (BS, RIS) grid pair, flattened
    /// BS-major.
    pub common_prior: Vec<f64>,
    /// Per-UE activity probability of each individual (RIS, UE) grid pair,
    /// flattened RIS-major.
    pub individual_prior: Vec<Vec<f64>>,
    /// Current off-grid offset estimates.
    pub theta: crate::channel::ThetaOffsets,
    /// Support frozen at the last header slot.
    pub frozen_support: Option<SupportPattern>,
    /// Prior precision of the sparse gains used by the MMSE step.
    pub precision: f64,
}

impl TrackerState {
    /// Cold-start state: uniform activity priors equal to sparsity over
    /// grid size, zero offsets.
    pub fn cold_start(config: &ScenarioConfig) -> Self {
        let common_cells = config.grid_bs * config.grid_ris;
        let indiv_cells = config.grid_ris * config.grid_ue;
        let p_c = (config.n_common_paths as f64 / common_cells as f64).min(1.0);
        let p_d = (config.n_individual_paths as f64 / indiv_cells as f64).min(1.0);
        TrackerState {
            common_prior: vec![p_c; common_cells],
            individual_prior: vec![vec![p_d; indiv_cells]; config.n_cues],
            theta: crate::channel::ThetaOffsets::zero(config),
            frozen_support: None,
            precision: config.tracker_prior_precision,
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let ok = |p: &f64| (0.0..=1.0).contains(p);
        if !self.common_prior.iter().all(ok)
            || !self.individual_prior.iter().flatten().all(ok)
        {
            return Err(CoreError::argument(
                "activity probabilities must lie in [0, 1]",
            ));
        }
        if self.precision <= 0.0 {
            return Err(CoreError::argument("prior precision must be positive"));
        }
        Ok(())
    }
}

/// Output of one tracking step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub support: SupportPattern,
    /// Estimated pair gains per UE, in the support's pair order.
    pub gains: Vec<Vec<Complex64>>,
    pub theta: crate::channel::ThetaOffsets,
    /// Posterior variance of each estimated gain.
    pub posterior_var: Vec<Vec<f64>>,
    /// Sum of squared residuals over all UEs.
    pub residual_energy: f64,
    /// Penalised log-posterior objective after each refinement half-step;
    /// non-decreasing by construction.
    pub objective_trace: Vec<f64>,
}

impl ChannelEstimate {
    pub fn check_invariants(&self) -> Result<()> {
        for ue in 0..self.support.n_ues() {
            if self.gains[ue].len() != self.support.nonzero_count(ue) {
                return Err(CoreError::argument(
                    "gains must be indexed by the support pairs",
                ));
            }
            if self.posterior_var[ue].iter().any(|v| *v < 0.0) {
                return Err(CoreError::argument("posterior variance must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Normalised mean-squared error `||z_hat - z||^2 / ||z||^2`.
pub fn nmse(z_hat: &[Complex64], z_true: &[Complex64]) -> Result<f64> {
    if z_hat.len() != z_true.len() {
        return Err(CoreError::argument(format!(
            "nmse length mismatch: {} vs {}",
            z_hat.len(),
            z_true.len()
        )));
    }
    let ref_energy: f64 = z_true.iter().map(|z| z.norm_sqr()).sum();
    if ref_energy == 0.0 {
        return Err(CoreError::argument("nmse reference must be nonzero"));
    }
    let err: f64 = z_hat
        .iter()
        .zip(z_true.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(err / ref_energy)
}

/// Flattens (support, gains, theta) into the full end-to-end cascade tensor
/// `H[nt, n, q] = sum_j z_j a_bs(uj)[nt] b_rj[n] a_ue(vj)[q]` for
/// channel-domain NMSE evaluation.
pub fn cascade_tensor(
    support: &SupportPattern,
    gains: &[Vec<Complex64>],
    theta: &crate::channel::ThetaOffsets,
    n_bs: usize,
    n_ris: usize,
    n_ue: usize,
) -> Vec<Complex64> {
    use crate::channel::steering;
    let dims = support.dims;
    let mut out = vec![Complex64::new(0.0, 0.0); n_bs * n_ris * n_ue * support.n_ues()];
    for ue in 0..support.n_ues() {
        let base = ue * n_bs * n_ris * n_ue;
        for (j, t) in support.cascaded_triples(ue).iter().enumerate() {
            let w_bs = std::f64::consts::TAU * t.bs as f64 / dims.bs as f64 + theta.bs[t.bs];
            let w_ris = std::f64::consts::TAU * t.ris as f64 / dims.ris as f64 + theta.ris[t.ris];
            let w_ue = std::f64::consts::TAU * t.ue as f64 / dims.ue as f64 + theta.ue[t.ue];
            let a_bs = steering(n_bs, w_bs) * Complex64::new((n_bs as f64).sqrt(), 0.0);
            let b = steering(n_ris, w_ris) * Complex64::new((n_ris as f64).sqrt(), 0.0);
            let a_ue = steering(n_ue, w_ue) * Complex64::new((n_ue as f64).sqrt(), 0.0);
            let z = gains[ue][j];
            for nt in 0..n_bs {
                for n in 0..n_ris {
                    for q in 0..n_ue {
                        out[base + (nt * n_ris + n) * n_ue + q] += z * a_bs[nt] * b[n] * a_ue[q];
                    }
                }
            }
        }
    }
    out
}

/// Simulates the pilot observations of one slot from a true channel.
///
/// `snr_db = inf` produces noiseless observations. The applied per-entry
/// noise variance is recorded in the returned observation.
pub fn observe<R: Rng + ?Sized>(
    channel: &CascadedChannel,
    dict_true: &Dictionary,
    n_pilots: usize,
    snr_db: f64,
    header: bool,
    rng: &mut R,
) -> Result<PilotObservation> {
    if n_pilots == 0 || n_pilots > dict_true.pilots.n_pilots() {
        return Err(CoreError::argument(format!(
            "n_pilots must be in 1..={}, got {n_pilots}",
            dict_true.pilots.n_pilots()
        )));
    }
    let mut clean: Vec<DVector<Complex64>> = Vec::with_capacity(channel.n_ues());
    let mut signal_energy = 0.0;
    let mut total_len = 0usize;
    for ue in 0..channel.n_ues() {
        let z = channel.z(ue);
        let mut y = DVector::zeros(n_pilots * dict_true.n_bs_antennas);
        for (j, t) in channel.support.cascaded_triples(ue).iter().enumerate() {
            let r = dict_true.response(*t, n_pilots);
            y += r * z[j];
        }
        signal_energy += y.norm_squared();
        total_len += y.len();
        clean.push(y);
    }
    let snr_lin = db_to_linear(snr_db);
    let noise_var = if snr_lin.is_infinite() || total_len == 0 {
        0.0
    } else {
        (signal_energy / total_len as f64) / snr_lin
    };
    let ue_obs = clean
        .into_iter()
        .map(|mut y| {
            if noise_var > 0.0 {
                for e in y.iter_mut() {
                    *e += complex_gaussian(rng, noise_var);
                }
            }
            y
        })
        .collect();
    Ok(PilotObservation {
        ue_obs,
        n_pilots,
        header,
        snr_db,
        noise_var,
    })
}

/// One tracking step: header slots run support search, MMSE gains and angle
/// refinement on the angle-training pilots; ordinary slots freeze support
/// and angles and re-fit only the gains from the Doppler pilots. Returns
/// the estimate and the updated state with exponentially smoothed activity
/// priors.
pub fn track_slot(
    obs: &PilotObservation,
    state: &TrackerState,
    config: &ScenarioConfig,
) -> Result<(ChannelEstimate, TrackerState)> {
    state.check_invariants()?;
    let dict = crate::channel::build_dictionary(config, &state.theta)?;

    if obs.header {
        let support = estimate_support(obs, &dict, state, config)?;
        let prior = GainPrior::Uniform(state.precision);
        let est = mmse_gains(obs, &dict, &support, obs.noise_var, &prior)?;
        let (dict_refined, est) = refine_angles(obs, &dict, &est, config)?;

        let mut next = state.clone();
        next.theta = dict_refined.theta.clone();
        next.frozen_support = Some(est.support.clone());
        smooth_priors(&mut next, &est.support, config);
        Ok((est, next))
    } else {
        let support = state.frozen_support.as_ref().ok_or_else(|| {
            CoreError::argument("non-header slot requires a support frozen at a header slot")
        })?;
        let prior = GainPrior::Uniform(state.precision);
        let est = mmse_gains(obs, &dict, support, obs.noise_var, &prior)?;
        Ok((est, state.clone()))
    }
}

fn smooth_priors(state: &mut TrackerState, support: &SupportPattern, config: &ScenarioConfig) {
    let w = config.tracker_prior_weight;
    let floor_c = (config.n_common_paths as f64
        / (config.grid_bs * config.grid_ris) as f64)
        .min(1.0);
    let floor_d = (config.n_individual_paths as f64
        / (config.grid_ris * config.grid_ue) as f64)
        .min(1.0);

    let mut selected_c = vec![0.0; state.common_prior.len()];
    for c in &support.common {
        selected_c[c.bs * support.dims.ris + c.ris] = 1.0;
    }
    for (p, s) in state.common_prior.iter_mut().zip(selected_c.iter()) {
        *p = (w * *p + (1.0 - w) * s).max(floor_c).min(1.0);
    }
    for ue in 0..support.n_ues().min(state.individual_prior.len()) {
        let mut selected_d = vec![0.0; state.individual_prior[ue].len()];
        for d in &support.individual[ue] {
            selected_d[d.ris * support.dims.ue + d.ue] = 1.0;
        }
        for (p, s) in state.individual_prior[ue]
            .iter_mut()
            .zip(selected_d.iter())
        {
            *p = (w * *p + (1.0 - w) * s).max(floor_d).min(1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_basic_values() {
        let z = vec![Complex64::new(1.0, 1.0), Complex64::new(-2.0, 0.5)];
        assert_eq!(nmse(&z, &z).unwrap(), 0.0);
        let zero = vec![Complex64::new(0.0, 0.0); 2];
        assert_eq!(nmse(&zero, &z).unwrap(), 1.0);
        let double: Vec<_> = z.iter().map(|x| x * 2.0).collect();
        assert!((nmse(&double, &z).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmse(&z, &zero).is_err(), "zero reference must error");
    }
}
