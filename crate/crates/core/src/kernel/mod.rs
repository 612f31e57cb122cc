//! Closed-form probability kernels.

pub mod count;
pub mod ordered;

pub use count::{
    count_choice_pmf, count_utilities, nb_systematic_utility, ogev_pmf, poisson_systematic_utility,
    CountFamily, CountUtilityInput,
};
pub use ordered::{
    baseline_increments, gamma_oev_log_pmf, gamma_oev_pmf, gamma_oev_survival, logistic, oev_pmf,
    split_oev_log_pmf, split_oev_pmf, OrderedKernelInput,
};
