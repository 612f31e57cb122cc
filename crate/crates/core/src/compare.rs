//! Ranking of competing fits on one dataset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::spec::Family;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rank: usize,
    pub label: String,
    pub family: Family,
    pub k: usize,
    pub n: usize,
    pub ll_convergence: f64,
    pub ll_null: f64,
    pub aic: f64,
    pub bic: f64,
    pub rho_squared: f64,
    pub converged: bool,
    pub best_aic: bool,
    pub best_bic: bool,
    pub best_rho_squared: bool,
    /// Another fit has exactly the same AIC.
    pub aic_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Rows by ascending AIC; equal AICs keep their input order.
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn winner_by_aic(&self) -> &ComparisonRow {
        &self.rows[0]
    }

    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

/// Rank labelled fits by AIC and flag the AIC, BIC and ρ² winners.
pub fn run_compare(fits: &[(String, FitResult)]) -> Result<Comparison> {
    if fits.len() < 2 {
        return Err(Error::Comparison(format!(
            "need at least two fits, got {}",
            fits.len()
        )));
    }
    let n = fits[0].1.n;
    let mut rows = Vec::with_capacity(fits.len());
    for (label, fit) in fits {
        if fit.n != n {
            return Err(Error::Comparison(format!(
                "fit `{label}` has n = {}, but `{}` has n = {n}",
                fit.n, fits[0].0
            )));
        }
        let (Some(stats), Some(ll_null)) = (fit.stats, fit.ll_null) else {
            return Err(Error::Comparison(format!(
                "fit `{label}` carries no fit statistics"
            )));
        };
        rows.push(ComparisonRow {
            rank: 0,
            label: label.clone(),
            family: fit.family,
            k: fit.k,
            n: fit.n,
            ll_convergence: fit.ll_convergence,
            ll_null,
            aic: stats.aic,
            bic: stats.bic,
            rho_squared: stats.rho_squared,
            converged: fit.converged,
            best_aic: false,
            best_bic: false,
            best_rho_squared: false,
            aic_tie: false,
        });
    }
    rows.sort_by(|a, b| a.aic.total_cmp(&b.aic));
    for i in 0..rows.len() {
        rows[i].rank = i + 1;
        let aic = rows[i].aic;
        rows[i].aic_tie = rows.iter().enumerate().any(|(j, r)| j != i && r.aic == aic);
    }
    rows[0].best_aic = true;
    let bic = first_best(&rows, |a, b| a.bic < b.bic);
    rows[bic].best_bic = true;
    let rho = first_best(&rows, |a, b| a.rho_squared > b.rho_squared);
    rows[rho].best_rho_squared = true;
    Ok(Comparison { rows })
}

fn first_best(
    rows: &[ComparisonRow],
    better: impl Fn(&ComparisonRow, &ComparisonRow) -> bool,
) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        if better(r, &rows[best]) {
            best = i;
        }
    }
    best
}
