//! Seeded simulation of the dithered quantizer and checks of the
//! equivalent-noise identities against the sample counts.

mod checks;
mod rng;

pub use checks::{
    conditional_pmf_check, entropy_identity_check, entropy_identity_check_with_bins, fisher_score_estimate,
    mi_estimate, CellDeviation, EntropyCheckReport, IdentityCheck, MiEstimate, PmfCheckReport, ENTROPY_TOL_SIGMAS,
    ENTROPY_U_BINS, MIN_EXPECTED_COUNT, MI_MAX_ATOMS, NEGLIGIBLE_MASS,
};
pub use rng::{sample_at, simulate, Dither, SampleRecord, SimRun};
