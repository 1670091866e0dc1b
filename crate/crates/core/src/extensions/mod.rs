//! Multi-step interactive fusion and fusion with several peripheral sensors.

pub mod mif;
pub mod multisensor;

pub use mif::{mif_kl, mif_kl_closed, mif_kl_max, mif_rates, MifDesign, MifSearch, XRule};
pub use multisensor::{
    kl_vecyx, kl_xvecyx, multisensor_evaluate, multisensor_kl_max, MultiKl, MultiSensorModel,
    MultiThresholds, VecYxThresholds, XVecYxThresholds,
};
