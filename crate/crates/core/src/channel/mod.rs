//! Sparse angular-domain cascaded channels with twin-structured support.
//!
//! The angular grids at the BS, RIS and UE are DFT grids in spatial
//! frequency. A cascaded path pairs one common BS-RIS path with one
//! individual RIS-UE path; on a DFT grid the two RIS-side frequencies fold
//! into a single grid index by modular addition, which keeps the twin
//! structure exact. Off-grid behaviour is modelled as per-grid-point
//! frequency offsets at the BS and UE arrays; the folded RIS index stays
//! on-grid so the pairing composes exactly.

mod stats;
mod steering;
mod support;
mod synth;

pub use stats::{angular_spread, count_lobes, ris_aod_spectrum, SpectrumPoint};
pub use steering::{
    build_dictionary, steering, Dictionary, GridTriple, PilotPattern, ThetaOffsets,
};
pub use support::{generate_support, CommonPath, GridDims, IndividualPath, SupportPattern};
pub use synth::{
    advance_slot, age_channel, age_channel_with_rho, export_paths_csv, path_loss, rician_direct,
    synthesize_channel, CascadedChannel, GainStats, NoiseModel, RicianDirect,
};
