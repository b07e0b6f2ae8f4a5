//! Classical longitudinal estimators over ridge and logistic regressors.

mod features;
mod gcomp;
mod gformula;
mod msm;
mod regress;
mod result;

pub use features::fit_propensities;
pub use gcomp::{iterative_gcomp, ltmle_glm, LtmleFit, LtmleStep, RegressorSpec};
pub use gformula::{parametric_gformula, GFormulaFit, GFormulaOptions, VARIANCE_FLOOR};
pub use msm::{msm_ipw, stabilized_weights, MsmFit, MsmOptions};
pub use regress::{fit_logistic, fit_ridge, fit_weighted_ridge, Regressor, RegressorKind};
pub use result::{gformula_ace, iterative_gcomp_ace, ltmle_ace, msm_ace, EstimatorResult};
