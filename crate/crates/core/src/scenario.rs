//! Scenario configuration, freeway geometry and mobility.
//!
//! `ScenarioConfig` owns every system dimension, geometry parameter and
//! numeric constant used by the other modules; each of them is a pure
//! function of a config plus a named random substream. The freeway drop
//! follows the usual multi-lane evaluation methodology: straight road
//! segment, uniform vehicle drops per lane, BS placed off-road at the
//! origin of the road axis, RIS at a configurable road-axis coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::SeedTree;
use rand::Rng;

/// Per-channel transmit power coefficients, in mW per PRB-symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCoeffs {
    pub pssch: f64,
    pub pscch: f64,
    pub psfch: f64,
}

impl Default for PowerCoeffs {
    fn default() -> Self {
        PowerCoeffs {
            pssch: 1.0,
            pscch: 1.0,
            psfch: 0.5,
        }
    }
}

/// Path-loss exponents for the direct BS-UE link and for each hop of the
/// cascaded BS-RIS-UE link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossExponents {
    pub direct: f64,
    pub cascaded_hop: f64,
}

impl Default for PathLossExponents {
    fn default() -> Self {
        PathLossExponents {
            direct: 2.8,
            cascaded_hop: 2.2,
        }
    }
}

/// Full scenario configuration. All fields have working defaults; a
/// configuration file or CLI overrides only need to name the fields that
/// change. Field names double as the configuration-file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    // --- array and network dimensions -----------------------------------
    /// BS antennas (N_T).
    pub n_bs_antennas: usize,
    /// UE antennas (Q).
    pub n_ue_antennas: usize,
    /// RIS elements (N).
    pub n_ris_elements: usize,
    /// Cellular (V2I) UEs (M).
    pub n_cues: usize,
    /// D2D (V2V) UE pairs (L).
    pub n_due_pairs: usize,
    /// RIS tiles (K); must divide n_ris_elements.
    pub n_tiles: usize,
    /// Pre-designed phase-shift configurations per tile (S).
    pub n_pscs: usize,
    /// Angular grid size at the BS (>= n_bs_antennas).
    pub grid_bs: usize,
    /// Angular grid size at the RIS (>= n_ris_elements).
    pub grid_ris: usize,
    /// Angular grid size at the UE (>= n_ue_antennas).
    pub grid_ue: usize,

    // --- radio numerology -------------------------------------------------
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Slot duration in seconds.
    pub slot_duration_s: f64,
    /// Slots per 1 ms sub-frame.
    pub slots_per_subframe: usize,
    /// Pilot symbols for angle (AoA/AoD) training in the header slot (M_A).
    pub pilots_angle: usize,
    /// Pilot symbols for per-slot Doppler/gain training (M_D).
    pub pilots_doppler: usize,
    /// Data symbols per slot (M_T).
    pub data_symbols: usize,
    /// Sub-channels spanned by the PSSCH (L_subCH).
    pub n_subchannels: usize,
    /// PRBs per sub-channel (M_sub).
    pub prbs_per_subchannel: usize,

    // --- powers and noise -------------------------------------------------
    /// Total active-RIS radiated power budget in dBm (P_A^max).
    pub p_active_max_dbm: f64,
    /// UE transmit power in dBm.
    pub ue_tx_power_dbm: f64,
    /// Receiver thermal noise power in dBm (per PRB).
    pub noise_dbm: f64,
    /// Active-RIS per-element amplifier noise power in dBm.
    pub ris_amp_noise_dbm: f64,
    /// Per-channel power coefficients in mW per PRB-symbol.
    pub power_coeffs: PowerCoeffs,

    // --- propagation -------------------------------------------------------
    /// Path-loss exponents (direct link, cascaded hop).
    pub pathloss_exponents: PathLossExponents,
    /// Direct-link reference path loss at 1 m, in dB.
    pub pathloss_ref_direct_db: f64,
    /// Per-hop cascaded reference path loss at 1 m, in dB.
    pub pathloss_ref_cascade_db: f64,
    /// Rician K factor of the direct link, in dB.
    pub rician_k_db: f64,

    // --- geometry -----------------------------------------------------------
    /// RIS road-axis coordinate in metres (x_RIS).
    pub ris_position_m: f64,
    /// Vehicle speed in m/s.
    pub vehicle_speed_mps: f64,
    /// Number of freeway lanes.
    pub n_lanes: usize,
    /// Lane width in metres.
    pub lane_width_m: f64,
    /// Road segment length in metres.
    pub road_length_m: f64,
    /// BS lateral offset from the road edge in metres.
    pub bs_lateral_offset_m: f64,
    /// RIS lateral offset beyond the far road edge in metres.
    pub ris_lateral_offset_m: f64,
    /// Antenna heights in metres.
    pub bs_height_m: f64,
    pub ris_height_m: f64,
    pub ue_height_m: f64,
    /// Road-axis window vehicles are dropped into.
    pub ue_drop_min_m: f64,
    pub ue_drop_max_m: f64,
    /// V2V pair separation bounds in metres.
    pub min_v2v_range_m: f64,
    pub max_v2v_range_m: f64,

    // --- sparse channel model ----------------------------------------------
    /// Common BS-RIS paths shared by all UEs (|C|).
    pub n_common_paths: usize,
    /// Individual RIS-UE paths per UE (|D_m|).
    pub n_individual_paths: usize,
    /// Per-path persistence probability of the Markov support evolution.
    pub support_keep_prob: f64,
    /// Gamma hyper-prior (shape, rate) over per-path precisions.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// True off-grid offsets are drawn uniformly within this fraction of a
    /// half grid cell.
    pub offgrid_max_frac: f64,
    /// Optional distribution over the per-UE spatial-lobe (individual-path)
    /// count; empty means "always n_individual_paths". Entry k is the
    /// probability of k+1 lobes.
    pub lobe_count_pmf: Vec<f64>,
    /// Power threshold relative to the peak that delimits a spatial lobe.
    pub lobe_threshold_db: f64,
    /// Minimum separation between generated lobes, in grid cells.
    pub lobe_min_separation_cells: usize,

    // --- tracker ---------------------------------------------------------
    /// Pilot SNR in dB used when simulating observations.
    pub pilot_snr_db: f64,
    /// Relative residual-energy drop below which support search stops.
    pub tracker_residual_tol: f64,
    /// Likelihood-improvement tolerance of the angle refinement.
    pub tracker_angle_tol: f64,
    /// Maximum angle-refinement sweeps.
    pub tracker_max_sweeps: usize,
    /// Exponential smoothing weight for the support activity prior.
    pub tracker_prior_weight: f64,
    /// Prior precision used by the MMSE gain estimator.
    pub tracker_prior_precision: f64,

    // --- frame / protocol ---------------------------------------------------
    /// Benchmark mode: angle training repeated in every slot.
    pub benchmark_training: bool,
    /// Phase-2 feedback symbols in header and ordinary slots.
    pub feedback_symbols_header: usize,
    pub feedback_symbols: usize,
    /// PRBs occupied by PSCCH and PSFCH.
    pub pscch_prbs: usize,
    pub psfch_prbs: usize,
    /// Overhead ratio denominator: false = benchmark pilots (default),
    /// true = pilots plus data of the benchmark frame.
    pub overhead_vs_total: bool,
    /// Mode-2 sensing and selection window lengths in slots.
    pub sensing_window_slots: usize,
    pub selection_window_slots: usize,

    // --- allocator ----------------------------------------------------------
    /// V2V SINR threshold in dB (gamma_th).
    pub gamma_th_db: f64,
    /// Maximum tolerable V2V outage probability (p_max).
    pub p_max_outage: f64,
    /// Power-control bisection tolerance in dB.
    pub bisection_tol_db: f64,
    /// Monte-Carlo sample count for outage evaluation.
    pub outage_mc_samples: usize,
    /// Mode-1 block-coordinate-ascent limits.
    pub mode1_max_rounds: usize,
    pub mode1_obj_tol: f64,
    /// Mode-2 coordinate-ascent sweeps over tiles (R).
    pub mode2_sweeps: usize,
    /// Weight of the V2V terms in the tile-selection objective.
    pub mode2_v2v_weight: f64,
    /// Use min-capacity instead of sum-capacity for Mode-2 V2I scoring.
    pub mode2_min_capacity_objective: bool,
    /// Delay from slot start to the data phase, in slots, used when aging
    /// CSI between acquisition and use.
    pub csi_use_delay_slots: f64,
    /// Modeled tracker posterior variance relative to per-entry channel
    /// power, used by allocator-level experiments.
    pub posterior_var_rel: f64,

    // --- randomness -------------------------------------------------------
    /// Root seed; every module derives independent named substreams.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_bs_antennas: 16,
            n_ue_antennas: 2,
            n_ris_elements: 80,
            n_cues: 3,
            n_due_pairs: 0,
            n_tiles: 4,
            n_pscs: 4,
            grid_bs: 16,
            grid_ris: 80,
            grid_ue: 2,
            carrier_hz: 5.9e9,
            slot_duration_s: 1e-4,
            slots_per_subframe: 10,
            pilots_angle: 45,
            pilots_doppler: 5,
            data_symbols: 100,
            n_subchannels: 5,
            prbs_per_subchannel: 10,
            p_active_max_dbm: 20.0,
            ue_tx_power_dbm: 23.0,
            noise_dbm: -116.0,
            ris_amp_noise_dbm: -100.0,
            power_coeffs: PowerCoeffs::default(),
            pathloss_exponents: PathLossExponents::default(),
            pathloss_ref_direct_db: -47.9,
            pathloss_ref_cascade_db: -41.9,
            rician_k_db: 6.0,
            ris_position_m: 250.0,
            vehicle_speed_mps: 30.0,
            n_lanes: 6,
            lane_width_m: 4.0,
            road_length_m: 2000.0,
            bs_lateral_offset_m: 35.0,
            ris_lateral_offset_m: 5.0,
            bs_height_m: 25.0,
            ris_height_m: 10.0,
            ue_height_m: 1.5,
            ue_drop_min_m: 0.0,
            ue_drop_max_m: 2000.0,
            min_v2v_range_m: 10.0,
            max_v2v_range_m: 50.0,
            n_common_paths: 3,
            n_individual_paths: 2,
            support_keep_prob: 0.9,
            gamma_shape: 1.0,
            gamma_rate: 1.0,
            offgrid_max_frac: 0.25,
            lobe_count_pmf: Vec::new(),
            lobe_threshold_db: -10.0,
            lobe_min_separation_cells: 2,
            pilot_snr_db: 15.0,
            tracker_residual_tol: 1e-3,
            tracker_angle_tol: 1e-6,
            tracker_max_sweeps: 5,
            tracker_prior_weight: 0.7,
            tracker_prior_precision: 1e-6,
            benchmark_training: false,
            feedback_symbols_header: 6,
            feedback_symbols: 2,
            pscch_prbs: 2,
            psfch_prbs: 1,
            overhead_vs_total: false,
            sensing_window_slots: 10,
            selection_window_slots: 4,
            gamma_th_db: 5.0,
            p_max_outage: 0.01,
            bisection_tol_db: 0.01,
            outage_mc_samples: 10_000,
            mode1_max_rounds: 20,
            mode1_obj_tol: 1e-4,
            mode2_sweeps: 3,
            mode2_v2v_weight: 1.0,
            mode2_min_capacity_objective: false,
            csi_use_delay_slots: 0.5,
            posterior_var_rel: 0.01,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Checks every documented invariant; the error names the violated one.
    pub fn validate(&self) -> Result<()> {
        fn ge1(value: usize, name: &str) -> Result<()> {
            if value < 1 {
                Err(CoreError::config(format!("{name} must be >= 1, got {value}")))
            } else {
                Ok(())
            }
        }
        ge1(self.n_bs_antennas, "n_bs_antennas")?;
        ge1(self.n_ue_antennas, "n_ue_antennas")?;
        ge1(self.n_ris_elements, "n_ris_elements")?;
        ge1(self.n_tiles, "n_tiles")?;
        ge1(self.n_pscs, "n_pscs")?;
        ge1(self.grid_bs, "grid_bs")?;
        ge1(self.grid_ris, "grid_ris")?;
        ge1(self.grid_ue, "grid_ue")?;
        ge1(self.slots_per_subframe, "slots_per_subframe")?;
        ge1(self.pilots_doppler, "pilots_doppler")?;
        ge1(self.data_symbols, "data_symbols")?;
        ge1(self.n_subchannels, "n_subchannels")?;
        ge1(self.prbs_per_subchannel, "prbs_per_subchannel")?;
        ge1(self.n_lanes, "n_lanes")?;

        if self.grid_bs < self.n_bs_antennas {
            return Err(CoreError::config(format!(
                "grid_bs ({}) must be >= n_bs_antennas ({})",
                self.grid_bs, self.n_bs_antennas
            )));
        }
        if self.grid_ris < self.n_ris_elements {
            return Err(CoreError::config(format!(
                "grid_ris ({}) must be >= n_ris_elements ({})",
                self.grid_ris, self.n_ris_elements
            )));
        }
        if self.grid_ue < self.n_ue_antennas {
            return Err(CoreError::config(format!(
                "grid_ue ({}) must be >= n_ue_antennas ({})",
                self.grid_ue, self.n_ue_antennas
            )));
        }
        if self.pilots_angle < self.pilots_doppler {
            return Err(CoreError::config(format!(
                "pilots_angle ({}) must be >= pilots_doppler ({})",
                self.pilots_angle, self.pilots_doppler
            )));
        }
        if self.n_ris_elements % self.n_tiles != 0 {
            return Err(CoreError::config(format!(
                "n_ris_elements ({}) must be divisible by n_tiles ({})",
                self.n_ris_elements, self.n_tiles
            )));
        }
        let frame_s = self.slot_duration_s * self.slots_per_subframe as f64 * 10.0;
        if (frame_s - 0.01).abs() > 1e-9 {
            return Err(CoreError::config(format!(
                "slot_duration_s x slots_per_subframe x 10 must equal the 10 ms radio frame \
                 within 1e-9 s, got {frame_s} s"
            )));
        }
        if !(0.0..=1.0).contains(&self.support_keep_prob) {
            return Err(CoreError::config(format!(
                "support_keep_prob must be in [0, 1], got {}",
                self.support_keep_prob
            )));
        }
        if self.gamma_shape <= 0.0 || self.gamma_rate <= 0.0 {
            return Err(CoreError::config(
                "gamma_shape and gamma_rate must be positive".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.offgrid_max_frac) {
            return Err(CoreError::config(format!(
                "offgrid_max_frac must be in [0, 1], got {}",
                self.offgrid_max_frac
            )));
        }
        if !self.lobe_count_pmf.is_empty() {
            let s: f64 = self.lobe_count_pmf.iter().sum();
            if self.lobe_count_pmf.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(CoreError::config(
                    "lobe_count_pmf must be non-negative and sum to 1".to_string(),
                ));
            }
        }
        if self.ue_drop_max_m <= self.ue_drop_min_m {
            return Err(CoreError::config(
                "ue_drop_max_m must exceed ue_drop_min_m".to_string(),
            ));
        }
        if self.ue_drop_min_m < 0.0 || self.ue_drop_max_m > self.road_length_m {
            return Err(CoreError::config(
                "vehicle drop window must lie within [0, road_length_m]".to_string(),
            ));
        }
        if self.max_v2v_range_m < self.min_v2v_range_m || self.min_v2v_range_m <= 0.0 {
            return Err(CoreError::config(
                "V2V range bounds must satisfy 0 < min_v2v_range_m <= max_v2v_range_m".to_string(),
            ));
        }
        if self.ris_position_m < 0.0 || self.ris_position_m > self.road_length_m {
            return Err(CoreError::config(
                "ris_position_m must lie within [0, road_length_m]".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.p_max_outage) {
            return Err(CoreError::config(format!(
                "p_max_outage must be in [0, 1), got {}",
                self.p_max_outage
            )));
        }
        if self.power_coeffs.pssch < 0.0
            || self.power_coeffs.pscch < 0.0
            || self.power_coeffs.psfch < 0.0
        {
            return Err(CoreError::config(
                "power coefficients must be non-negative".to_string(),
            ));
        }
        Ok(())
    }

    pub fn seed_tree(&self) -> SeedTree {
        SeedTree::new(self.seed)
    }

    /// Number of RIS elements per tile.
    pub fn tile_size(&self) -> usize {
        self.n_ris_elements / self.n_tiles
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Freeway lane descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneLayout {
    pub n_lanes: usize,
    pub lane_width_m: f64,
    pub road_length_m: f64,
}

impl LaneLayout {
    pub fn lane_center_y(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width_m
    }
}

/// A vehicle's lane and un-wrapped base road coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleBase {
    pub lane: usize,
    pub road_pos_m: f64,
}

/// Accumulated travelled distance kept as an unevaluated two-float sum so
/// that advancing twice by `dt` resolves to exactly the same positions as
/// advancing once by `2 dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
struct Advance {
    head: f64,
    tail: f64,
}

impl Advance {
    fn add(&self, x: f64) -> Advance {
        // Knuth two-sum, then renormalise.
        let s = self.head + x;
        let bp = s - self.head;
        let e = (self.head - (s - bp)) + (x - bp);
        let tail = self.tail + e;
        let head = s + tail;
        let tail = tail - (head - s);
        Advance { head, tail }
    }

    fn value(&self) -> f64 {
        self.head + self.tail
    }
}

/// Positions of the BS, RIS and all vehicles for one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub lane_layout: LaneLayout,
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    cue_base: Vec<VehicleBase>,
    due_base: Vec<(VehicleBase, VehicleBase)>,
    advance: Advance,
    ue_height_m: f64,
}

impl Geometry {
    fn resolve(&self, base: &VehicleBase) -> [f64; 3] {
        let x = (base.road_pos_m + self.advance.value()).rem_euclid(self.lane_layout.road_length_m);
        [x, self.lane_layout.lane_center_y(base.lane), self.ue_height_m]
    }

    pub fn n_cues(&self) -> usize {
        self.cue_base.len()
    }

    pub fn n_due_pairs(&self) -> usize {
        self.due_base.len()
    }

    pub fn cue_positions(&self) -> Vec<[f64; 3]> {
        self.cue_base.iter().map(|b| self.resolve(b)).collect()
    }

    pub fn due_pair_positions(&self) -> Vec<([f64; 3], [f64; 3])> {
        self.due_base
            .iter()
            .map(|(tx, rx)| (self.resolve(tx), self.resolve(rx)))
            .collect()
    }

    /// Checks the geometric invariants: every vehicle inside a lane, every
    /// DUE pair within the configured V2V range (wrapped road distance).
    pub fn check_invariants(&self, config: &ScenarioConfig) -> Result<()> {
        let road = self.lane_layout.road_length_m;
        let in_lane = |p: &[f64; 3]| {
            p[1] >= 0.0 && p[1] <= self.lane_layout.n_lanes as f64 * self.lane_layout.lane_width_m
        };
        for p in self.cue_positions() {
            if !in_lane(&p) {
                return Err(CoreError::config(format!(
                    "vehicle at y={} outside lane bounds",
                    p[1]
                )));
            }
        }
        for (tx, rx) in self.due_pair_positions() {
            if !in_lane(&tx) || !in_lane(&rx) {
                return Err(CoreError::config("DUE vehicle outside lane bounds"));
            }
            let d = (tx[0] - rx[0]).abs();
            let wrapped = d.min(road - d);
            if wrapped > config.max_v2v_range_m + 1e-9 {
                return Err(CoreError::config(format!(
                    "DUE pair separation {wrapped} m exceeds max_v2v_range_m {}",
                    config.max_v2v_range_m
                )));
            }
        }
        Ok(())
    }
}

/// Straight-line distance between two points.
pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Drops vehicles onto the freeway. Deterministic given the config seed:
/// the "scenario" substream is the only randomness consumed.
pub fn build_freeway_scenario(config: &ScenarioConfig) -> Result<Geometry> {
    config.validate()?;
    let mut rng = config.seed_tree().stream("scenario");
    let lane_layout = LaneLayout {
        n_lanes: config.n_lanes,
        lane_width_m: config.lane_width_m,
        road_length_m: config.road_length_m,
    };
    let bs_position = [0.0, -config.bs_lateral_offset_m, config.bs_height_m];
    let ris_position = [
        config.ris_position_m,
        config.n_lanes as f64 * config.lane_width_m + config.ris_lateral_offset_m,
        config.ris_height_m,
    ];

    let drop_vehicle = |rng: &mut rand_chacha::ChaCha8Rng| VehicleBase {
        lane: rng.random_range(0..config.n_lanes),
        road_pos_m: rng.random_range(config.ue_drop_min_m..config.ue_drop_max_m),
    };

    let cue_base: Vec<VehicleBase> = (0..config.n_cues).map(|_| drop_vehicle(&mut rng)).collect();

    // DUE receivers sit immediately behind their transmitter in the same
    // lane, within the configured V2V range.
    let due_base: Vec<(VehicleBase, VehicleBase)> = (0..config.n_due_pairs)
        .map(|_| {
            let tx = drop_vehicle(&mut rng);
            let sep = rng.random_range(config.min_v2v_range_m..=config.max_v2v_range_m);
            let rx = VehicleBase {
                lane: tx.lane,
                road_pos_m: tx.road_pos_m + sep,
            };
            (tx, rx)
        })
        .collect();

    let geometry = Geometry {
        lane_layout,
        bs_position,
        ris_position,
        cue_base,
        due_base,
        advance: Advance::default(),
        ue_height_m: config.ue_height_m,
    };
    geometry.check_invariants(config)?;
    Ok(geometry)
}

/// Translates every vehicle along its lane by `speed * dt`, wrapping at the
/// road end. Lateral coordinates are untouched. Additive: advancing twice by
/// `dt` equals advancing once by `2 dt`.
pub fn advance_mobility(geometry: &Geometry, speed_mps: f64, dt_s: f64) -> Result<Geometry> {
    if dt_s < 0.0 {
        return Err(CoreError::argument(format!("dt must be >= 0, got {dt_s}")));
    }
    let mut out = geometry.clone();
    if dt_s == 0.0 {
        return Ok(out);
    }
    out.advance = out.advance.add(speed_mps * dt_s);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_name_the_invariant() {
        let mut cfg = ScenarioConfig::default();
        cfg.grid_ris = 10; // < n_ris_elements
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("grid_ris"), "{err}");

        let mut cfg = ScenarioConfig::default();
        cfg.n_tiles = 7; // does not divide 80
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("divisible"), "{err}");

        let mut cfg = ScenarioConfig::default();
        cfg.pilots_angle = 2;
        cfg.pilots_doppler = 5;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("pilots_angle"), "{err}");

        let mut cfg = ScenarioConfig::default();
        cfg.slot_duration_s = 2e-4;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("10 ms"), "{err}");
    }

    #[test]
    fn empty_traffic_gives_bs_and_ris_only() {
        let mut cfg = ScenarioConfig::default();
        cfg.n_cues = 0;
        cfg.n_due_pairs = 0;
        let g = build_freeway_scenario(&cfg).unwrap();
        assert_eq!(g.n_cues(), 0);
        assert_eq!(g.n_due_pairs(), 0);
        assert_eq!(g.bs_position[0], 0.0);
        assert_eq!(g.ris_position[0], cfg.ris_position_m);
    }

    #[test]
    fn paper_scale_drop() {
        let mut cfg = ScenarioConfig::default();
        cfg.n_cues = 5;
        cfg.n_due_pairs = 5;
        cfg.ris_position_m = 250.0;
        let g = build_freeway_scenario(&cfg).unwrap();
        assert_eq!(g.cue_positions().len(), 5);
        assert_eq!(g.due_pair_positions().len(), 5);
        assert_eq!(g.ris_position[0], 250.0);
        g.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn same_seed_bit_identical() {
        let cfg = ScenarioConfig {
            n_cues: 7,
            n_due_pairs: 3,
            ..ScenarioConfig::default()
        };
        let g1 = build_freeway_scenario(&cfg).unwrap();
        let g2 = build_freeway_scenario(&cfg).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn zero_step_is_identity() {
        let cfg = ScenarioConfig::default();
        let g = build_freeway_scenario(&cfg).unwrap();
        let g2 = advance_mobility(&g, 30.0, 0.0).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn negative_dt_rejected() {
        let cfg = ScenarioConfig::default();
        let g = build_freeway_scenario(&cfg).unwrap();
        assert!(matches!(
            advance_mobility(&g, 30.0, -1.0),
            Err(CoreError::Argument(_))
        ));
    }

    #[test]
    fn kinematics_advance() {
        let cfg = ScenarioConfig {
            n_cues: 4,
            ..ScenarioConfig::default()
        };
        let g = build_freeway_scenario(&cfg).unwrap();
        let before = g.cue_positions();
        let after = advance_mobility(&g, 10.0, 1.0).unwrap().cue_positions();
        for (b, a) in before.iter().zip(after.iter()) {
            let expect = (b[0] + 10.0).rem_euclid(cfg.road_length_m);
            assert!((a[0] - expect).abs() < 1e-9, "{} vs {}", a[0], expect);
            assert_eq!(a[1], b[1], "lateral coordinate must not move");
            assert_eq!(a[2], b[2]);
        }
    }

    #[test]
    fn advance_is_additive_exactly() {
        let cfg = ScenarioConfig {
            n_cues: 6,
            n_due_pairs: 2,
            ..ScenarioConfig::default()
        };
        let g = build_freeway_scenario(&cfg).unwrap();
        for (speed, dt) in [(10.0, 1.0), (13.7, 0.3), (31.4159, 0.017)] {
            let twice = advance_mobility(&advance_mobility(&g, speed, dt).unwrap(), speed, dt)
                .unwrap();
            let once = advance_mobility(&g, speed, 2.0 * dt).unwrap();
            assert_eq!(twice.cue_positions(), once.cue_positions());
            assert_eq!(twice.due_pair_positions(), once.due_pair_positions());
        }
    }

    #[test]
    fn wraparound_preserves_lane_bounds() {
        let cfg = ScenarioConfig {
            n_cues: 10,
            n_due_pairs: 4,
            ..ScenarioConfig::default()
        };
        let g = build_freeway_scenario(&cfg).unwrap();
        let far = advance_mobility(&g, 40.0, 1000.0).unwrap();
        far.check_invariants(&cfg).unwrap();
        for p in far.cue_positions() {
            assert!(p[0] >= 0.0 && p[0] < cfg.road_length_m);
        }
    }
}
