//! Channel synthesis: twin-structured sparse cascades, Rician direct links,
//! double-fading path loss and Gauss-Markov aging.
//!
//! Cascaded gains factor as `z_pq = beta_p * gamma_mq`, where the common
//! BS-RIS gain `beta_p` has a fixed modulus and uniform phase and the
//! individual RIS-UE gain `gamma_mq` is complex Gaussian. The product is
//! then exactly complex Gaussian with per-pair variance
//! `var(beta_p) * var(gamma_mq)`, while the dense matrices
//! `G = sum_p beta_p a_bs a_ris^T` and `F_m = sum_q gamma_mq a_ris a_ue^T`
//! reproduce the angular synthesis `F(theta) z` for every RIS coefficient
//! vector.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::channel::steering::{steering_raw, Dictionary, ThetaOffsets};
use crate::channel::support::SupportPattern;
use crate::error::{CoreError, Result};
use crate::numerics::{db_to_linear, dbm_to_mw, jakes_rho};
use crate::rng::{complex_gaussian, uniform_phase};
use crate::scenario::{distance, Geometry, ScenarioConfig};

/// Receiver thermal noise and active-RIS amplifier noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub thermal_dbm: f64,
    pub ris_amp_noise_dbm: f64,
}

impl NoiseModel {
    pub fn from_config(config: &ScenarioConfig) -> Result<Self> {
        if !config.noise_dbm.is_finite() || !config.ris_amp_noise_dbm.is_finite() {
            return Err(CoreError::config("noise powers must be finite".to_string()));
        }
        Ok(NoiseModel {
            thermal_dbm: config.noise_dbm,
            ris_amp_noise_dbm: config.ris_amp_noise_dbm,
        })
    }

    pub fn thermal_mw(&self) -> f64 {
        dbm_to_mw(self.thermal_dbm)
    }

    /// Per-element amplifier noise power; zero when the RIS is passive.
    pub fn ris_amp_mw(&self, active: bool) -> f64 {
        if active {
            dbm_to_mw(self.ris_amp_noise_dbm)
        } else {
            0.0
        }
    }
}

/// Power-law path loss `reference * d^(-exponent)`; the cascaded link loss
/// is the product of its two hop losses (double fading).
pub fn path_loss(d_m: f64, exponent: f64, reference_db: f64) -> Result<f64> {
    if d_m <= 0.0 {
        return Err(CoreError::argument(format!(
            "path_loss distance must be positive, got {d_m}"
        )));
    }
    Ok(db_to_linear(reference_db) * d_m.powf(-exponent))
}

/// Direct BS-UE Rician channels, one N_T x Q matrix per CUE.
#[derive(Debug, Clone, PartialEq)]
pub struct RicianDirect {
    /// Realised channels.
    pub h: Vec<DMatrix<Complex64>>,
    /// Scaled LoS components sqrt(PL K/(K+1)) a_bs a_ue^T.
    pub los: Vec<DMatrix<Complex64>>,
    /// Per-entry total power (the path-loss gain).
    pub entry_var: Vec<f64>,
}

fn los_pair(n_rx: usize, n_tx: usize, rx: &[f64; 3], tx: &[f64; 3]) -> DMatrix<Complex64> {
    // Arrays are half-wavelength ULAs along the road axis; the spatial
    // frequency is pi times the direction cosine on that axis.
    let d = distance(rx, tx).max(1e-9);
    let omega_rx = std::f64::consts::PI * (tx[0] - rx[0]) / d;
    let omega_tx = std::f64::consts::PI * (rx[0] - tx[0]) / d;
    let a_rx = steering_raw(n_rx, omega_rx);
    let a_tx = steering_raw(n_tx, omega_tx);
    &a_rx * a_tx.transpose()
}

/// Draws the direct Rician links for all CUEs:
/// `h = sqrt(PL) (sqrt(K/(K+1)) h_los + sqrt(1/(K+1)) h_nlos)`.
pub fn rician_direct<R: Rng + ?Sized>(
    geometry: &Geometry,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<RicianDirect> {
    if config.rician_k_db.is_nan() {
        return Err(CoreError::argument("rician_k_db must not be NaN"));
    }
    let k_lin = db_to_linear(config.rician_k_db);
    let (los_w, nlos_w) = if k_lin.is_infinite() {
        (1.0, 0.0)
    } else {
        (k_lin / (k_lin + 1.0), 1.0 / (k_lin + 1.0))
    };
    let mut h = Vec::new();
    let mut los_out = Vec::new();
    let mut entry_var = Vec::new();
    for ue in geometry.cue_positions() {
        let d = distance(&geometry.bs_position, &ue);
        let pl = path_loss(
            d,
            config.pathloss_exponents.direct,
            config.pathloss_ref_direct_db,
        )?;
        let los = los_pair(
            config.n_bs_antennas,
            config.n_ue_antennas,
            &geometry.bs_position,
            &ue,
        ) * Complex64::new((pl * los_w).sqrt(), 0.0);
        let nlos_scale = pl * nlos_w;
        let nlos = DMatrix::from_fn(config.n_bs_antennas, config.n_ue_antennas, |_, _| {
            complex_gaussian(rng, nlos_scale)
        });
        h.push(&los + nlos);
        los_out.push(los);
        entry_var.push(pl);
    }
    Ok(RicianDirect {
        h,
        los: los_out,
        entry_var,
    })
}

/// One drop of the full channel state: sparse cascaded gains with their
/// twin-structured support, the dense matrices they synthesise, and the
/// direct Rician links.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedChannel {
    pub support: SupportPattern,
    /// Off-grid offsets the channel was synthesised with.
    pub theta: ThetaOffsets,
    /// Common-path gains beta_p (fixed modulus, uniform phase).
    pub common_gain: Vec<Complex64>,
    pub common_var: Vec<f64>,
    /// Individual-path gains gamma_mq per UE (complex Gaussian).
    pub individual_gain: Vec<Vec<Complex64>>,
    pub individual_var: Vec<Vec<f64>>,
    /// Per-path Doppler shifts (Hz), same indexing as the gains.
    pub common_doppler_hz: Vec<f64>,
    pub individual_doppler_hz: Vec<Vec<f64>>,
    /// Direct links.
    pub direct: RicianDirect,
    /// Dense BS-side cascade matrix G (N_T x N).
    pub g_bs_ris: DMatrix<Complex64>,
    /// Dense UE-side cascade matrices F_m (N x Q).
    pub f_ris_ue: Vec<DMatrix<Complex64>>,
    pub noise: NoiseModel,
    pub n_ris: usize,
    pub n_bs: usize,
    pub n_ue_ant: usize,
}

impl CascadedChannel {
    pub fn n_ues(&self) -> usize {
        self.individual_gain.len()
    }

    fn omega_bs(&self, u: usize) -> f64 {
        std::f64::consts::TAU * u as f64 / self.support.dims.bs as f64 + self.theta.bs[u]
    }

    fn omega_ris(&self, r: usize) -> f64 {
        std::f64::consts::TAU * r as f64 / self.support.dims.ris as f64 + self.theta.ris[r]
    }

    fn omega_ue(&self, v: usize) -> f64 {
        std::f64::consts::TAU * v as f64 / self.support.dims.ue as f64 + self.theta.ue[v]
    }

    /// Cascaded pair gains z of one UE in pair order (common-major),
    /// z_pq = beta_p * gamma_mq.
    pub fn z(&self, ue: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.support.nonzero_count(ue));
        for beta in &self.common_gain {
            for gamma in &self.individual_gain[ue] {
                out.push(beta * gamma);
            }
        }
        out
    }

    /// Prior variance of each pair gain, matching [`CascadedChannel::z`].
    pub fn pair_var(&self, ue: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.support.nonzero_count(ue));
        for vp in &self.common_var {
            for vq in &self.individual_var[ue] {
                out.push(vp * vq);
            }
        }
        out
    }

    /// Per-pair Doppler shift: the sum of the two hop Dopplers.
    pub fn pair_doppler_hz(&self, ue: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for fp in &self.common_doppler_hz {
            for fq in &self.individual_doppler_hz[ue] {
                out.push(fp + fq);
            }
        }
        out
    }

    /// Dense end-to-end cascade for a RIS coefficient vector phi:
    /// `G diag(phi) F_m` (N_T x Q).
    pub fn cascade_dense(&self, ue: usize, phi: &DVector<Complex64>) -> DMatrix<Complex64> {
        let mut scaled = self.f_ris_ue[ue].clone();
        for n in 0..self.n_ris {
            for q in 0..self.n_ue_ant {
                scaled[(n, q)] *= phi[n];
            }
        }
        &self.g_bs_ris * scaled
    }

    /// Angular synthesis of the same end-to-end cascade from the sparse
    /// gains: `sum_j z_j (phi^T b_rj) a_bs(uj) a_ue(vj)^T`.
    pub fn cascade_from_dictionary(
        &self,
        ue: usize,
        phi: &DVector<Complex64>,
        dict: &Dictionary,
    ) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.n_bs, self.n_ue_ant);
        let z = self.z(ue);
        for (j, t) in self.support.cascaded_triples(ue).iter().enumerate() {
            let b = steering_raw(self.n_ris, dict.omega_ris(t.ris));
            let ris_gain: Complex64 = phi.dot(&b);
            let a_bs = steering_raw(self.n_bs, dict.omega_bs(t.bs));
            let a_ue = steering_raw(self.n_ue_ant, dict.omega_ue(t.ue));
            out += (&a_bs * a_ue.transpose()) * (z[j] * ris_gain);
        }
        out
    }

    /// Full effective channel: direct plus cascade through phi.
    pub fn effective(&self, ue: usize, phi: &DVector<Complex64>) -> DMatrix<Complex64> {
        &self.direct.h[ue] + self.cascade_dense(ue, phi)
    }

    /// Rebuilds the dense UE-side matrices after a gain update.
    fn rebuild_f(&mut self) {
        for ue in 0..self.n_ues() {
            let mut f = DMatrix::<Complex64>::zeros(self.n_ris, self.n_ue_ant);
            for (q, d) in self.support.individual[ue].iter().enumerate() {
                let a_ris = steering_raw(self.n_ris, self.omega_ris(d.ris));
                let a_ue = steering_raw(self.n_ue_ant, self.omega_ue(d.ue));
                f += (&a_ris * a_ue.transpose()) * self.individual_gain[ue][q];
            }
            self.f_ris_ue[ue] = f;
        }
    }

    /// Rebuilds the dense BS-side matrix after a gain update.
    fn rebuild_g(&mut self) {
        let mut g = DMatrix::<Complex64>::zeros(self.n_bs, self.n_ris);
        for (p, c) in self.support.common.iter().enumerate() {
            let a_bs = steering_raw(self.n_bs, self.omega_bs(c.bs));
            let a_ris = steering_raw(self.n_ris, self.omega_ris(c.ris));
            g += (&a_bs * a_ris.transpose()) * self.common_gain[p];
        }
        self.g_bs_ris = g;
    }
}

/// Per-path gain statistics: the Gamma hyper-prior over precisions plus the
/// dominant-path boost that concentrates power on the first (LoS-like)
/// common and individual paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainStats {
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// Linear power ratio of the first path relative to the others.
    pub dominant_boost: f64,
}

impl GainStats {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        GainStats {
            gamma_shape: config.gamma_shape,
            gamma_rate: config.gamma_rate,
            dominant_boost: db_to_linear(config.rician_k_db),
        }
    }
}

fn power_profile(n: usize, boost: f64) -> Vec<f64> {
    // First path carries `boost` times the power of each remaining path;
    // normalised so the weights sum to n (total power independent of boost).
    if n == 0 {
        return Vec::new();
    }
    let total = boost + (n - 1) as f64;
    (0..n)
        .map(|i| {
            let w = if i == 0 { boost } else { 1.0 };
            n as f64 * w / total
        })
        .collect()
}

/// Synthesises one drop of the cascaded + direct channel.
///
/// Per-path precisions are drawn from the Gamma layer; the gain variance of
/// a path is `path_loss * profile / precision`. Pair gains are exactly
/// complex Gaussian with variance equal to the product of their two hop
/// variances, and are nonzero only on the support.
pub fn synthesize_channel<R: Rng + ?Sized>(
    support: &SupportPattern,
    dict: &Dictionary,
    gain_stats: &GainStats,
    geometry: &Geometry,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<CascadedChannel> {
    if support.n_ues() > geometry.n_cues() {
        return Err(CoreError::argument(format!(
            "support has {} UEs but geometry has {} CUEs",
            support.n_ues(),
            geometry.n_cues()
        )));
    }
    if gain_stats.gamma_shape <= 0.0 || gain_stats.gamma_rate <= 0.0 {
        return Err(CoreError::argument(
            "gain precision parameters must be positive".to_string(),
        ));
    }
    let gamma_dist = Gamma::new(gain_stats.gamma_shape, 1.0 / gain_stats.gamma_rate)
        .map_err(|e| CoreError::argument(format!("gamma prior: {e}")))?;

    let cue_positions = geometry.cue_positions();
    let d_bs_ris = distance(&geometry.bs_position, &geometry.ris_position);
    let pl_hop1 = path_loss(
        d_bs_ris,
        config.pathloss_exponents.cascaded_hop,
        config.pathloss_ref_cascade_db,
    )?;

    let f_max = crate::numerics::doppler_hz(config.vehicle_speed_mps, config.carrier_hz);

    let n_common = support.common.len();
    let profile_c = power_profile(n_common, gain_stats.dominant_boost);
    let mut common_gain = Vec::with_capacity(n_common);
    let mut common_var = Vec::with_capacity(n_common);
    let mut common_doppler = Vec::with_capacity(n_common);
    for profile in profile_c.iter().take(n_common) {
        let precision: f64 = gamma_dist.sample(rng).max(1e-12);
        let var = pl_hop1 * profile / precision;
        common_var.push(var);
        common_gain.push(uniform_phase(rng) * Complex64::new(var.sqrt(), 0.0));
        common_doppler.push(f_max * rng.random_range(-1.0..1.0));
    }

    let mut individual_gain = Vec::with_capacity(support.n_ues());
    let mut individual_var = Vec::with_capacity(support.n_ues());
    let mut individual_doppler = Vec::with_capacity(support.n_ues());
    for ue in 0..support.n_ues() {
        let d_ris_ue = distance(&geometry.ris_position, &cue_positions[ue]);
        let pl_hop2 = path_loss(
            d_ris_ue,
            config.pathloss_exponents.cascaded_hop,
            config.pathloss_ref_cascade_db,
        )?;
        let n_ind = support.individual[ue].len();
        let profile_d = power_profile(n_ind, gain_stats.dominant_boost);
        let mut gains = Vec::with_capacity(n_ind);
        let mut vars = Vec::with_capacity(n_ind);
        let mut dops = Vec::with_capacity(n_ind);
        for profile in profile_d.iter().take(n_ind) {
            let precision: f64 = gamma_dist.sample(rng).max(1e-12);
            let var = pl_hop2 * profile / precision;
            vars.push(var);
            gains.push(complex_gaussian(rng, var));
            dops.push(f_max * rng.random_range(-1.0..1.0));
        }
        individual_gain.push(gains);
        individual_var.push(vars);
        individual_doppler.push(dops);
    }

    let direct = rician_direct(geometry, config, rng)?;

    let mut channel = CascadedChannel {
        support: support.clone(),
        theta: dict.theta.clone(),
        common_gain,
        common_var,
        individual_gain,
        individual_var,
        common_doppler_hz: common_doppler,
        individual_doppler_hz: individual_doppler,
        direct,
        g_bs_ris: DMatrix::zeros(config.n_bs_antennas, config.n_ris_elements),
        f_ris_ue: vec![
            DMatrix::zeros(config.n_ris_elements, config.n_ue_antennas);
            support.n_ues()
        ],
        noise: NoiseModel::from_config(config)?,
        n_ris: config.n_ris_elements,
        n_bs: config.n_bs_antennas,
        n_ue_ant: config.n_ue_antennas,
    };
    channel.rebuild_g();
    channel.rebuild_f();
    Ok(channel)
}

/// First-order Gauss-Markov aging with Jakes correlation
/// `rho = J0(2 pi f_D dt)`.
///
/// Each stochastic gain evolves as `x' = rho x + sqrt(1 - rho^2) e` with `e`
/// fresh complex Gaussian of matching variance: the individual-path gains
/// (so every pair gain ages with matching variance while the dense
/// factorisation stays exact) and every direct-channel entry. Support and
/// angles are unchanged. `dt = 0` or zero speed returns the input
/// bit-exactly.
pub fn age_channel<R: Rng + ?Sized>(
    channel: &CascadedChannel,
    speed_mps: f64,
    dt_s: f64,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<CascadedChannel> {
    if dt_s < 0.0 {
        return Err(CoreError::argument(format!("dt must be >= 0, got {dt_s}")));
    }
    let rho = jakes_rho(speed_mps, config.carrier_hz, dt_s);
    age_channel_with_rho(channel, rho, rng)
}

/// Aging step with an explicit correlation coefficient.
pub fn age_channel_with_rho<R: Rng + ?Sized>(
    channel: &CascadedChannel,
    rho: f64,
    rng: &mut R,
) -> Result<CascadedChannel> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(CoreError::argument(format!(
            "aging correlation must be in [-1, 1], got {rho}"
        )));
    }
    if rho == 1.0 {
        return Ok(channel.clone());
    }
    let innov = (1.0 - rho * rho).max(0.0).sqrt();

    let mut out = channel.clone();
    for (ue, gains) in out.individual_gain.iter_mut().enumerate() {
        for (q, gamma) in gains.iter_mut().enumerate() {
            let var = channel.individual_var[ue][q];
            *gamma = *gamma * rho + complex_gaussian(rng, var) * innov;
        }
    }
    for (ue, h) in out.direct.h.iter_mut().enumerate() {
        let var = channel.direct.entry_var[ue];
        for entry in h.iter_mut() {
            *entry = *entry * rho + complex_gaussian(rng, var) * innov;
        }
    }
    out.rebuild_f();
    Ok(out)
}

/// Slot-to-slot gain evolution for tracking: deterministic per-path Doppler
/// rotation followed by Gauss-Markov aging over one slot.
pub fn advance_slot<R: Rng + ?Sized>(
    channel: &CascadedChannel,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<CascadedChannel> {
    let dt = config.slot_duration_s;
    let mut rotated = channel.clone();
    for (p, beta) in rotated.common_gain.iter_mut().enumerate() {
        let phase = std::f64::consts::TAU * channel.common_doppler_hz[p] * dt;
        *beta *= Complex64::from_polar(1.0, phase);
    }
    for (ue, gains) in rotated.individual_gain.iter_mut().enumerate() {
        for (q, gamma) in gains.iter_mut().enumerate() {
            let phase = std::f64::consts::TAU * channel.individual_doppler_hz[ue][q] * dt;
            *gamma *= Complex64::from_polar(1.0, phase);
        }
    }
    rotated.rebuild_g();
    rotated.rebuild_f();
    age_channel(&rotated, config.vehicle_speed_mps, dt, config, rng)
}

/// Writes one CSV row per nonzero cascaded path:
/// `ue,pair,bs_idx,ris_idx,ue_idx,theta_bs,theta_ue,gain_re,gain_im`.
pub fn export_paths_csv<W: std::io::Write>(
    channel: &CascadedChannel,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "ue,pair,bs_idx,ris_idx,ue_idx,theta_bs,theta_ue,gain_re,gain_im")?;
    for ue in 0..channel.n_ues() {
        let z = channel.z(ue);
        for (j, t) in channel.support.cascaded_triples(ue).iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                ue,
                j,
                t.bs,
                t.ris,
                t.ue,
                channel.theta.bs[t.bs],
                channel.theta.ue[t.ue],
                z[j].re,
                z[j].im
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::steering::build_dictionary;
    use crate::channel::support::generate_support;
    use crate::scenario::build_freeway_scenario;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig {
            n_bs_antennas: 8,
            n_ue_antennas: 2,
            n_ris_elements: 16,
            grid_bs: 8,
            grid_ris: 16,
            grid_ue: 4,
            n_tiles: 4,
            n_cues: 3,
            ..ScenarioConfig::default()
        }
    }

    fn make_channel(config: &ScenarioConfig) -> (CascadedChannel, Dictionary) {
        let tree = config.seed_tree();
        let mut rng = tree.stream("channel-test");
        let theta = ThetaOffsets::draw(config, &mut rng);
        let dict = build_dictionary(config, &theta).unwrap();
        let geom = build_freeway_scenario(config).unwrap();
        let support = generate_support(config, 3, 2, None, &mut rng).unwrap();
        let ch = synthesize_channel(
            &support,
            &dict,
            &GainStats::from_config(config),
            &geom,
            config,
            &mut rng,
        )
        .unwrap();
        (ch, dict)
    }

    #[test]
    fn path_loss_reference_distance() {
        for exp in [1.0, 2.0, 3.7] {
            assert_eq!(path_loss(1.0, exp, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn cascade_product_model() {
        // d1 = d2 = 10, exponent 2, reference 1 -> product loss 1e-4.
        let l1 = path_loss(10.0, 2.0, 0.0).unwrap();
        let l2 = path_loss(10.0, 2.0, 0.0).unwrap();
        assert!((l1 * l2 - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn nonpositive_distance_rejected() {
        assert!(path_loss(0.0, 2.0, 0.0).is_err());
        assert!(path_loss(-3.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn cascaded_loss_exceeds_direct_over_random_drops() {
        // Random BS/RIS/UE drops: by the triangle inequality d1 + d2 >=
        // d_direct, and with both hops >= 2 m (any realistic drop) the
        // product-distance loss is at least the direct loss at equal
        // exponents.
        let cfg = cfg();
        let mut rng = cfg.seed_tree().stream("pl-check");
        let mut point = |rng: &mut rand_chacha::ChaCha8Rng| {
            [
                rng.random_range(0.0..500.0),
                rng.random_range(0.0..50.0),
                rng.random_range(0.0..30.0),
            ]
        };
        let mut checked = 0;
        while checked < 200 {
            let bs = point(&mut rng);
            let ris = point(&mut rng);
            let ue = point(&mut rng);
            let d1 = distance(&bs, &ris);
            let d2 = distance(&ris, &ue);
            let dd = distance(&bs, &ue);
            if d1 < 2.0 || d2 < 2.0 || dd < 2.0 {
                continue;
            }
            let exp = rng.random_range(2.0..3.5);
            let direct = path_loss(dd, exp, 0.0).unwrap();
            let cascade = path_loss(d1, exp, 0.0).unwrap() * path_loss(d2, exp, 0.0).unwrap();
            assert!(
                cascade <= direct * (1.0 + 1e-9),
                "cascade gain {cascade} exceeds direct gain {direct} (d1={d1}, d2={d2}, dd={dd})"
            );
            checked += 1;
        }
    }

    #[test]
    fn z_nonzero_only_on_support_and_dense_consistency() {
        let config = cfg();
        let (ch, dict) = make_channel(&config);
        let mut rng = config.seed_tree().stream("phi");
        for ue in 0..ch.n_ues() {
            assert_eq!(ch.z(ue).len(), ch.support.nonzero_count(ue));
            for _ in 0..4 {
                let phi = DVector::from_fn(config.n_ris_elements, |_, _| uniform_phase(&mut rng));
                let dense = ch.cascade_dense(ue, &phi);
                let synth = ch.cascade_from_dictionary(ue, &phi, &dict);
                let err = (&dense - &synth).norm() / dense.norm().max(1e-30);
                assert!(err < 1e-6, "UE {ue}: relative Frobenius error {err}");
            }
        }
    }

    #[test]
    fn empty_support_gives_zero_cascade() {
        let config = cfg();
        let (mut ch, _) = make_channel(&config);
        ch.support.individual[1].clear();
        ch.individual_gain[1].clear();
        ch.individual_var[1].clear();
        ch.individual_doppler_hz[1].clear();
        ch.rebuild_f();
        let phi = DVector::from_element(config.n_ris_elements, Complex64::new(1.0, 0.0));
        assert_eq!(ch.cascade_dense(1, &phi).norm(), 0.0);
        assert!(ch.z(1).is_empty());
    }

    #[test]
    fn zero_variance_gives_prior_mean() {
        let config = cfg();
        let (mut ch, _) = make_channel(&config);
        for v in ch.common_var.iter_mut() {
            *v = 0.0;
        }
        ch.common_gain = ch
            .common_var
            .iter()
            .map(|v| Complex64::new(v.sqrt(), 0.0))
            .collect();
        for ue in 0..ch.n_ues() {
            for z in ch.z(ue) {
                assert_eq!(z, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn aging_identity_cases() {
        let config = cfg();
        let (ch, _) = make_channel(&config);
        let mut rng = config.seed_tree().stream("aging");
        let same_dt = age_channel(&ch, 30.0, 0.0, &config, &mut rng).unwrap();
        assert_eq!(ch, same_dt, "dt = 0 must be bit-exact");
        let same_speed = age_channel(&ch, 0.0, 1e-3, &config, &mut rng).unwrap();
        assert_eq!(ch, same_speed, "speed = 0 must be bit-exact");
        assert!(age_channel(&ch, 30.0, -1.0, &config, &mut rng).is_err());
    }

    #[test]
    fn rician_extremes() {
        let mut config = cfg();
        config.rician_k_db = f64::INFINITY;
        let geom = build_freeway_scenario(&config).unwrap();
        let mut rng = config.seed_tree().stream("rician");
        let r1 = rician_direct(&geom, &config, &mut rng).unwrap();
        let r2 = rician_direct(&geom, &config, &mut rng).unwrap();
        for (a, b) in r1.h.iter().zip(r2.h.iter()) {
            assert_eq!(a, b, "K = inf must be deterministic LoS");
        }
    }
}
