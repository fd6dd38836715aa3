//! Frame structure, pilot/power accounting, Mode-1 dynamic grants and
//! Mode-2 sensing/selection windows.
//!
//! A sub-frame holds `slots_per_subframe` slots; the first slot is the
//! frame header and carries the angle-training pilot block on top of the
//! per-slot Doppler block. Every slot splits into three phases (training,
//! feedback, data) wrapped by an AGC symbol at the start and a guard
//! symbol at the end, with one PSFCH symbol before the guard.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::CompensatedSum;
use crate::scenario::ScenarioConfig;
use rand::Rng;

/// Symbols per slot used for grant-timing granularity.
const TIMING_SYMBOLS_PER_SLOT: f64 = 14.0;

/// What a symbol resource carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelTag {
    Agc,
    Pscch,
    Pssch,
    Psfch,
    Guard,
}

/// One slot's phase layout and per-symbol channel tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPlan {
    pub header: bool,
    /// Phase-1 training pilots: angle + Doppler block in the header slot,
    /// Doppler block only otherwise.
    pub phase1_pilots: usize,
    /// Phase-2 feedback symbols.
    pub phase2_feedback_symbols: usize,
    /// Phase-3 data symbols.
    pub phase3_data_symbols: usize,
    pub channels: Vec<ChannelTag>,
}

impl SlotPlan {
    fn build(header: bool, pilots: usize, feedback: usize, data: usize) -> Self {
        let mut channels = Vec::with_capacity(3 + pilots + feedback + data);
        channels.push(ChannelTag::Agc);
        // Phase 1: training reference signals ride on the PSSCH.
        channels.extend(std::iter::repeat_n(ChannelTag::Pssch, pilots));
        // Phase 2: feedback, first half on PSCCH (1st-stage SCI), the rest
        // on PSSCH (2nd-stage SCI).
        let pscch = feedback.div_ceil(2);
        channels.extend(std::iter::repeat_n(ChannelTag::Pscch, pscch));
        channels.extend(std::iter::repeat_n(ChannelTag::Pssch, feedback - pscch));
        // Phase 3: data.
        channels.extend(std::iter::repeat_n(ChannelTag::Pssch, data));
        channels.push(ChannelTag::Psfch);
        channels.push(ChannelTag::Guard);
        SlotPlan {
            header,
            phase1_pilots: pilots,
            phase2_feedback_symbols: feedback,
            phase3_data_symbols: data,
            channels,
        }
    }

    pub fn symbols(&self) -> usize {
        self.channels.len()
    }
}

/// The slot layout of one sub-frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSchedule {
    pub slots: Vec<SlotPlan>,
    pub subframe_index: usize,
    /// Pilot configuration the schedule was built from, kept for overhead
    /// accounting.
    pub pilots_angle: usize,
    pub pilots_doppler: usize,
    /// True when the schedule is the per-slot-angle-training benchmark.
    pub benchmark: bool,
}

impl FrameSchedule {
    pub fn check_invariants(&self, config: &ScenarioConfig) -> Result<()> {
        if self.slots.len() != config.slots_per_subframe {
            return Err(CoreError::config(format!(
                "schedule has {} slots, config wants {}",
                self.slots.len(),
                config.slots_per_subframe
            )));
        }
        for (i, slot) in self.slots.iter().enumerate() {
            if slot.header != (i == 0) {
                return Err(CoreError::config(format!(
                    "slot {i}: header flag must be set exactly on slot 0"
                )));
            }
            if slot.channels.first() != Some(&ChannelTag::Agc)
                || slot.channels.last() != Some(&ChannelTag::Guard)
            {
                return Err(CoreError::config(format!(
                    "slot {i}: AGC must open and GUARD must close the slot"
                )));
            }
        }
        Ok(())
    }

    /// Total phase-1 pilots over the frame.
    pub fn total_pilots(&self) -> usize {
        self.slots.iter().map(|s| s.phase1_pilots).sum()
    }

    /// Symbols carrying a given channel over the frame.
    pub fn symbols_tagged(&self, tag: ChannelTag) -> usize {
        self.slots
            .iter()
            .map(|s| s.channels.iter().filter(|&&c| c == tag).count())
            .sum()
    }
}

/// Builds the sub-frame schedule. Slot 0 is the header and carries the
/// angle-training block (M_A + M_D pilots); every other slot carries only
/// the Doppler block (M_D). With `config.benchmark_training` set, angle
/// training repeats in every slot (the comparison baseline).
pub fn build_frame(config: &ScenarioConfig, subframe_index: usize) -> Result<FrameSchedule> {
    config.validate()?;
    let header_pilots = config.pilots_angle + config.pilots_doppler;
    let slots = (0..config.slots_per_subframe)
        .map(|i| {
            let header = i == 0;
            let pilots = if header || config.benchmark_training {
                header_pilots
            } else {
                config.pilots_doppler
            };
            let feedback = if header {
                config.feedback_symbols_header
            } else {
                config.feedback_symbols
            };
            SlotPlan::build(header, pilots, feedback, config.data_symbols)
        })
        .collect();
    let schedule = FrameSchedule {
        slots,
        subframe_index,
        pilots_angle: config.pilots_angle,
        pilots_doppler: config.pilots_doppler,
        benchmark: config.benchmark_training,
    };
    schedule.check_invariants(config)?;
    Ok(schedule)
}

/// Pilot-overhead ratio eta of a schedule relative to the per-slot-training
/// benchmark over the same frame: proposed pilots / benchmark pilots.
/// A benchmark schedule rates itself at exactly 1.
pub fn overhead_ratio(schedule: &FrameSchedule) -> f64 {
    let n_slots = schedule.slots.len();
    let benchmark_pilots = n_slots * (schedule.pilots_angle + schedule.pilots_doppler);
    schedule.total_pilots() as f64 / benchmark_pilots as f64
}

/// Alternative overhead normalisation: pilots over pilots-plus-data of the
/// benchmark frame.
pub fn overhead_ratio_vs_total(schedule: &FrameSchedule, config: &ScenarioConfig) -> f64 {
    let n_slots = schedule.slots.len();
    let benchmark =
        n_slots * (schedule.pilots_angle + schedule.pilots_doppler + config.data_symbols);
    schedule.total_pilots() as f64 / benchmark as f64
}

/// Per-channel transmit-power accounting over one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub pssch_mw: f64,
    pub pscch_mw: f64,
    pub psfch_mw: f64,
    pub total_mw: f64,
    pub pssch_prbs: usize,
}

/// Total transmit power P_total = P_PSSCH + P_PSCCH + P_PSFCH over one
/// frame: each channel contributes coefficient x PRBs x symbol count, with
/// M_PSSCH = L_subCH x M_sub PRBs for the PSSCH.
pub fn total_power(config: &ScenarioConfig) -> Result<PowerBreakdown> {
    let schedule = build_frame(config, 0)?;
    total_power_of(&schedule, config)
}

/// Power accounting for an existing schedule.
pub fn total_power_of(
    schedule: &FrameSchedule,
    config: &ScenarioConfig,
) -> Result<PowerBreakdown> {
    let m_pssch = config.n_subchannels * config.prbs_per_subchannel;
    let c = &config.power_coeffs;
    if c.pssch < 0.0 || c.pscch < 0.0 || c.psfch < 0.0 {
        return Err(CoreError::config(
            "power coefficients must be non-negative".to_string(),
        ));
    }
    let pssch_mw = c.pssch * m_pssch as f64 * schedule.symbols_tagged(ChannelTag::Pssch) as f64;
    let pscch_mw =
        c.pscch * config.pscch_prbs as f64 * schedule.symbols_tagged(ChannelTag::Pscch) as f64;
    let psfch_mw =
        c.psfch * config.psfch_prbs as f64 * schedule.symbols_tagged(ChannelTag::Psfch) as f64;
    Ok(PowerBreakdown {
        pssch_mw,
        pscch_mw,
        psfch_mw,
        total_mw: pssch_mw + pscch_mw + psfch_mw,
        pssch_prbs: m_pssch,
    })
}

// ---------------------------------------------------------------------------
// Mode 1: dynamic grant timeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GrantEventKind {
    /// Scheduling request from the UE.
    Sr,
    /// Downlink control information from the BS.
    Dci,
    /// Reference signals refracted through the active RIS.
    RsRefract,
    /// BS reports the computed RIS coefficients to the controller.
    ConfigReport,
    /// Transport-block transmission.
    TbTx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrantEvent {
    pub time_s: f64,
    pub kind: GrantEventKind,
    pub ue_id: usize,
}

/// Ordered event sequence of one Mode-1 dynamic grant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrantTimeline {
    pub events: Vec<GrantEvent>,
}

impl GrantTimeline {
    /// SR < DCI < RS_REFRACT < CONFIG_REPORT < TB_TX, per UE.
    pub fn check_invariants(&self) -> Result<()> {
        use GrantEventKind::*;
        let order = [Sr, Dci, RsRefract, ConfigReport, TbTx];
        let mut per_ue: std::collections::BTreeMap<usize, Vec<&GrantEvent>> =
            std::collections::BTreeMap::new();
        for e in &self.events {
            per_ue.entry(e.ue_id).or_default().push(e);
        }
        for (ue, events) in per_ue {
            if events.len() != order.len() {
                return Err(CoreError::Protocol(format!(
                    "UE {ue}: expected {} grant events, got {}",
                    order.len(),
                    events.len()
                )));
            }
            for (e, kind) in events.iter().zip(order.iter()) {
                if e.kind != *kind {
                    return Err(CoreError::Protocol(format!(
                        "UE {ue}: event {:?} out of order",
                        e.kind
                    )));
                }
            }
            for w in events.windows(2) {
                if w[1].time_s <= w[0].time_s {
                    return Err(CoreError::Protocol(format!(
                        "UE {ue}: {:?} at {} not strictly after {:?} at {}",
                        w[1].kind, w[1].time_s, w[0].kind, w[0].time_s
                    )));
                }
            }
        }
        Ok(())
    }

    /// Merges two timelines (e.g. interleaved UE requests), keeping global
    /// time order.
    pub fn merge(&self, other: &GrantTimeline) -> GrantTimeline {
        let mut events: Vec<GrantEvent> = self
            .events
            .iter()
            .chain(other.events.iter())
            .copied()
            .collect();
        events.sort_by(|a, b| {
            a.time_s
                .partial_cmp(&b.time_s)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.ue_id.cmp(&b.ue_id))
        });
        GrantTimeline { events }
    }
}

/// Processing gaps between consecutive grant events, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessingDelays {
    pub sr_to_dci: f64,
    pub dci_to_rs: f64,
    pub rs_to_config: f64,
    pub config_to_tb: f64,
}

impl ProcessingDelays {
    pub fn uniform(gap_s: f64) -> Self {
        ProcessingDelays {
            sr_to_dci: gap_s,
            dci_to_rs: gap_s,
            rs_to_config: gap_s,
            config_to_tb: gap_s,
        }
    }
}

/// Emits the Mode-1 dynamic-grant event sequence for one UE: SR, DCI,
/// RS refraction, coefficient report, TB transmission. Degenerate delays
/// are floored to one symbol duration so events stay strictly ordered.
pub fn mode1_grant(
    request_time_s: f64,
    ue_id: usize,
    delays: &ProcessingDelays,
    config: &ScenarioConfig,
) -> Result<GrantTimeline> {
    for (name, d) in [
        ("sr_to_dci", delays.sr_to_dci),
        ("dci_to_rs", delays.dci_to_rs),
        ("rs_to_config", delays.rs_to_config),
        ("config_to_tb", delays.config_to_tb),
    ] {
        if d < 0.0 {
            return Err(CoreError::argument(format!("{name} must be >= 0, got {d}")));
        }
    }
    let symbol = config.slot_duration_s / TIMING_SYMBOLS_PER_SLOT;
    let gap = |d: f64| d.max(symbol);
    use GrantEventKind::*;
    let t1 = request_time_s;
    let t2 = t1 + gap(delays.sr_to_dci);
    let t3 = t2 + gap(delays.dci_to_rs);
    let t4 = t3 + gap(delays.rs_to_config);
    let t5 = t4 + gap(delays.config_to_tb);
    let timeline = GrantTimeline {
        events: vec![
            GrantEvent { time_s: t1, kind: Sr, ue_id },
            GrantEvent { time_s: t2, kind: Dci, ue_id },
            GrantEvent { time_s: t3, kind: RsRefract, ue_id },
            GrantEvent { time_s: t4, kind: ConfigReport, ue_id },
            GrantEvent { time_s: t5, kind: TbTx, ue_id },
        ],
    };
    timeline.check_invariants()?;
    Ok(timeline)
}

// ---------------------------------------------------------------------------
// Mode 2: sensing and selection windows
// ---------------------------------------------------------------------------

/// Occupancy of one (subchannel, slot, tile) resource triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Free,
    /// Occupied by a V2I link; DUEs may flag it for reuse.
    V2i,
    /// Occupied by another V2V link.
    V2v,
}

/// Sensing-window observations: occupancy and predicted SINR per triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceMap {
    pub n_subchannels: usize,
    pub n_slots: usize,
    pub n_tiles: usize,
    /// Flattened (subchannel-major, then slot, then tile).
    pub occupancy: Vec<Occupancy>,
    /// Predicted SINR in dB per triple, given the tile's PSC bounds.
    pub predicted_sinr_db: Vec<f64>,
    /// Slot range observed during sensing.
    pub sensing_window: std::ops::Range<usize>,
    /// Slot range resources may be selected from; disjoint from and later
    /// than the sensing window.
    pub selection_window: std::ops::Range<usize>,
}

impl ResourceMap {
    pub fn index(&self, subchannel: usize, slot: usize, tile: usize) -> usize {
        (subchannel * self.n_slots + slot) * self.n_tiles + tile
    }

    pub fn check_invariants(&self) -> Result<()> {
        let cells = self.n_subchannels * self.n_slots * self.n_tiles;
        if self.occupancy.len() != cells || self.predicted_sinr_db.len() != cells {
            return Err(CoreError::Protocol(format!(
                "resource map sized {} must hold {cells} cells",
                self.occupancy.len()
            )));
        }
        if self.sensing_window.end > self.n_slots || self.selection_window.end > self.n_slots {
            return Err(CoreError::Protocol(
                "window bounds exceed the mapped slots".to_string(),
            ));
        }
        if self.selection_window.start < self.sensing_window.end {
            return Err(CoreError::Protocol(
                "selection window must be disjoint from and later than the sensing window"
                    .to_string(),
            ));
        }
        Ok(())
    }

    /// An all-free map with the configured window lengths and a uniform
    /// predicted SINR.
    pub fn all_free(config: &ScenarioConfig, predicted_sinr_db: f64) -> Self {
        let n_slots = config.sensing_window_slots + config.selection_window_slots;
        let cells = config.n_subchannels * n_slots * config.n_tiles;
        ResourceMap {
            n_subchannels: config.n_subchannels,
            n_slots,
            n_tiles: config.n_tiles,
            occupancy: vec![Occupancy::Free; cells],
            predicted_sinr_db: vec![predicted_sinr_db; cells],
            sensing_window: 0..config.sensing_window_slots,
            selection_window: config.sensing_window_slots..n_slots,
        }
    }
}

/// QoS requirements of the sensing UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosThresholds {
    pub min_sinr_db: f64,
    /// DUEs may additionally reuse resources occupied by V2I links.
    pub allow_v2i_reuse: bool,
    /// Probability a busy resource is mis-sensed as free (0 disables).
    pub sensing_miss_prob: f64,
}

/// One selectable resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateResource {
    pub subchannel: usize,
    pub slot: usize,
    pub tile: usize,
    /// Set when the triple is occupied by a V2I link and returned for reuse.
    pub reuse_of_v2i: bool,
}

/// Sensing + selection: returns the candidate triples inside the selection
/// window whose predicted SINR meets the QoS threshold. Free triples are
/// always candidates; triples occupied by V2I links are returned flagged
/// for reuse when the requester allows it.
pub fn mode2_sense_select<R: Rng + ?Sized>(
    map: &ResourceMap,
    qos: &QosThresholds,
    rng: &mut R,
) -> Result<Vec<CandidateResource>> {
    map.check_invariants()?;
    if map.selection_window.is_empty() {
        return Err(CoreError::Protocol("selection window is empty".to_string()));
    }
    let mut out = Vec::new();
    for subchannel in 0..map.n_subchannels {
        for slot in map.selection_window.clone() {
            for tile in 0..map.n_tiles {
                let idx = map.index(subchannel, slot, tile);
                if map.predicted_sinr_db[idx] < qos.min_sinr_db {
                    continue;
                }
                let mut occ = map.occupancy[idx];
                if occ != Occupancy::Free
                    && qos.sensing_miss_prob > 0.0
                    && rng.random_range(0.0..1.0) < qos.sensing_miss_prob
                {
                    occ = Occupancy::Free;
                }
                match occ {
                    Occupancy::Free => out.push(CandidateResource {
                        subchannel,
                        slot,
                        tile,
                        reuse_of_v2i: false,
                    }),
                    Occupancy::V2i if qos.allow_v2i_reuse => out.push(CandidateResource {
                        subchannel,
                        slot,
                        tile,
                        reuse_of_v2i: true,
                    }),
                    _ => {}
                }
            }
        }
    }
    Ok(out)
}

/// One JSON-lines accounting record per frame: overhead ratio, reduction
/// and the power breakdown.
pub fn accounting_record(config: &ScenarioConfig) -> Result<serde_json::Value> {
    let schedule = build_frame(config, 0)?;
    let eta = if config.overhead_vs_total {
        overhead_ratio_vs_total(&schedule, config)
    } else {
        overhead_ratio(&schedule)
    };
    let power = total_power_of(&schedule, config)?;
    Ok(serde_json::json!({
        "n_ris_elements": config.n_ris_elements,
        "pilots_angle": config.pilots_angle,
        "pilots_doppler": config.pilots_doppler,
        "slots_per_subframe": config.slots_per_subframe,
        "eta": eta,
        "reduction": 1.0 - eta,
        "p_total_mw": power.total_mw,
        "p_pssch_mw": power.pssch_mw,
        "p_pscch_mw": power.pscch_mw,
        "p_psfch_mw": power.psfch_mw,
    }))
}

/// Compensated sum of per-frame powers, used by sweep experiments.
pub fn sum_power_mw(breakdowns: &[PowerBreakdown]) -> f64 {
    let mut acc = CompensatedSum::default();
    for b in breakdowns {
        acc.add(b.total_mw);
    }
    acc.value()
}
