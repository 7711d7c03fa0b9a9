pub mod captools;
pub mod channel;
pub mod error;
pub mod idcode;
pub mod phycode;
pub mod simkit;

pub use captools::{
    capacity, capacity_by_gradient, id_capacity, mutual_information, output_distribution, secrecy_capacity,
    secrecy_rate, AmplitudeGrid, CancelToken, CapacityResult, IdCapacity, InputDistribution, SolverOptions,
};
pub use channel::{AmplitudeSequence, PoissonChannel, WiretapChannelPair};
pub use error::{Error, Result};
pub use idcode::{Color, ColoringNumber, Identity, SchemeChoice, SchemeSelector, TagScheme};
pub use phycode::{CodeBudget, TransmissionCodebook, WiretapCodebook};
pub use simkit::{
    derive_seed, scaling_study, wilson_interval, Attacker, EveReport, IdentificationSystem, Observation, SameDecoder,
    ScalingParams, ScalingRow, SimulationReport, SystemSpec, TrialOutcome, TypeTwoMode,
};
