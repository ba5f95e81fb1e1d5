//! Shape-morphing solutions (SMS) for time-dependent PDEs with sequential
//! and continuous-time data assimilation, plus pseudo-spectral reference
//! solvers and the experiment drivers built on them.

pub mod assimilation;
pub mod dns;
pub mod error;
pub mod experiment;
pub mod models;
pub mod numerics;
pub mod sms;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, IntegratorConfig, Scheme, Trajectory};
pub use sms::{CollocationGrid, Domain, FieldValue, ParamFlow, ParamVector, Point, Projection, QuadratureRule, SmsModel};
