//! The shipped ansätze and their supporting physics.

pub mod ad;
pub mod fit;
pub mod ks;
pub mod nls;
pub mod toy;

pub use ad::{ad_initial_condition, gyre_velocity, AdJet, AdNetwork, GyreFlowConfig, AD_NODE_PARAMS};
pub use fit::{fit_initial, refine_fit, FitAnsatz, FitOptions, FitResult};
pub use ks::{ks_initial_condition, ks_initial_raw, ks_initial_scale, KsNetwork, KS_NODE_PARAMS};
pub use nls::{closed_form_rate as nls_closed_form_rate, NlsClosedForm, NlsGaussian, NlsGaussianParams, NLS_DOMAIN_LENGTH};
