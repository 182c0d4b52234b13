//! Heterogeneous-panel causal inference toolkit: latent-group
//! classification of panel slopes (C-Lasso), post-classification grouped
//! regression, triple-difference event studies under OLS / PPML / Tobit,
//! randomization inference, and synthetic ground-truth generators, driven
//! by a staged, deterministic pipeline.

pub mod classo;
pub mod error;
pub mod glm;
pub mod panel;
pub mod pipeline;
pub mod placebo;
pub mod regress;
pub mod study;
pub mod synthgen;

pub use classo::{
    classify_courtyard, fit_classo, post_lasso, ClassoConfig, ClassoFit, ClassoSpec,
    CourtyardRule, PenaltyForm, PostLassoFit,
};
pub use error::{Error, Result};
pub use glm::{fit_ppml, fit_probit, fit_tobit, probit_ame, tobit_ame_censored, LikelihoodFit};
pub use panel::{
    within_transform, ClusterKey, CsvSchema, Factor, FixedEffectSpec, MonthStyle,
    PanelDataset, Partition, YearMonth,
};
pub use pipeline::{
    emit_report, run_pipeline, run_stage, write_demo_inputs, PipelineConfig, Stage,
};
pub use placebo::{run_placebo, PlaceboConfig, PlaceboDistribution};
pub use regress::{ols_fit, Design, RegressionFit};
pub use study::{
    build_determinants_table, build_grouped_eventstudy, compute_gap, compute_treat_ratio,
    estimate_ddd, estimate_event_study, treat_ratio_table, DddFit, Estimator, EventConfig,
    EventStudyResult,
};
pub use synthgen::{generate_ddd_panel, generate_grouped_panel, DddDgp, GroupedDgp};
