//! Estimation of the mean outcome under an additive shift of a continuous
//! exposure when the exposure is measured only in a second-phase subsample.
//!
//! The pipeline is: validate an [`ObservedDataset`], fit the nuisance
//! functions ([`nuisance`]), then compute plug-in, one-step or targeted
//! estimates ([`estimators`]) and optionally summarize a grid of shifts with
//! a working marginal structural model ([`msm`]).

pub mod data;
pub mod density;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod hal;
pub mod linalg;
pub mod msm;
pub mod nuisance;
pub mod sim;

pub use data::{ObservedDataset, OutcomeScale, ShiftSpec, SupportBound, SupportMode, ValidateOptions};
pub use density::{
    BinRule, CondDensityModel, ConditionalDensity, DensityModel, GaussianDensityModel, HaldensifyConfig, MeanBasis,
};
pub use error::{Error, Result};
pub use estimators::{
    EstimateResult, EstimationConfig, EstimationContext, EstimatorKind, EstimatorOptions, Variant, Weighting,
};
pub use glm::{Family, GlmFit};
pub use hal::{HalConfig, HalModel};
pub use linalg::Design;
pub use msm::{MsmFit, MsmWeights};
pub use nuisance::{DensityMethod, Learner, NuisanceConfig, NuisanceSet};
