use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub aic: f64,
    pub bic: f64,
    pub rho_squared: f64,
}

/// `AIC = 2k - 2LL`, `BIC = -2LL + k ln n`, `ρ² = 1 - LL/LL_null`.
pub fn fit_statistics(ll_convergence: f64, ll_null: f64, k: usize, n: usize) -> Result<FitStats> {
    if n == 0 {
        return Err(Error::Dimension("fit statistics need n >= 1".into()));
    }
    if ll_null == 0.0 {
        return Err(Error::Division(
            "null log-likelihood is zero; rho-squared is undefined".into(),
        ));
    }
    let k = k as f64;
    Ok(FitStats {
        aic: 2.0 * k - 2.0 * ll_convergence,
        bic: -2.0 * ll_convergence + k * (n as f64).ln(),
        rho_squared: 1.0 - ll_convergence / ll_null,
    })
}
