//! Declarative model specification and its validated form.
//!
//! A [`ModelSpec`] names the estimator family, the top-coded frequency level
//! and how dataset columns feed each linear index. [`validate_spec`] checks
//! the family/field combinations and the identification rules, and computes
//! the layout of the unconstrained parameter vector the estimator works on.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the mandatory frequency column.
pub const FREQ_COLUMN: &str = "freq";

/// Label used for intercept terms in parameter names.
pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Ordered extreme value with Gamma heterogeneity.
    OevGamma,
    /// Logit hurdle for zero, Gamma-OEV over the positive categories.
    SplitOevGamma,
    /// Negative binomial utilities inside an ordered GEV kernel.
    NbOgev,
    /// Poisson utilities inside an ordered GEV kernel.
    PoissonOgev,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::OevGamma,
        Family::SplitOevGamma,
        Family::NbOgev,
        Family::PoissonOgev,
    ];

    pub fn is_ordered(self) -> bool {
        matches!(self, Family::OevGamma | Family::SplitOevGamma)
    }

    pub fn is_count(self) -> bool {
        !self.is_ordered()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::OevGamma => "oev_gamma",
            Family::SplitOevGamma => "split_oev_gamma",
            Family::NbOgev => "nb_ogev",
            Family::PoissonOgev => "poisson_ogev",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Spec(format!("unknown family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    NaturalLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub column: String,
    #[serde(default)]
    pub transform: Transform,
}

impl Covariate {
    pub fn new(column: impl Into<String>, transform: Transform) -> Self {
        Self {
            column: column.into(),
            transform,
        }
    }

    pub fn identity(column: impl Into<String>) -> Self {
        Self::new(column, Transform::Identity)
    }
}

/// A linear index with an optional intercept, used for the split logit
/// (`γ'z`) and the OGEV allocation logit (`θ'w`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateBlock {
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub covariates: Vec<Covariate>,
}

impl CovariateBlock {
    pub fn len(&self) -> usize {
        self.covariates.len() + usize::from(self.intercept)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        if self.intercept {
            out.push(INTERCEPT.to_string());
        }
        out.extend(self.covariates.iter().map(|c| c.column.clone()));
        out
    }
}

/// One count-specific utility term `ω·b` attached to count level `level`.
/// A missing `column` is a level-specific constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTerm {
    pub level: usize,
    #[serde(default)]
    pub column: Option<String>,
    #[serde(default)]
    pub transform: Transform,
}

impl CountTerm {
    pub fn constant(level: usize) -> Self {
        Self {
            level,
            column: None,
            transform: Transform::Identity,
        }
    }

    pub fn covariate(level: usize, column: impl Into<String>, transform: Transform) -> Self {
        Self {
            level,
            column: Some(column.into()),
            transform,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.column.is_none()
    }
}

fn default_top_code() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default = "default_top_code")]
    pub top_code: usize,
    /// Intercept in `β'x`; count families only (ordered thresholds absorb it).
    #[serde(default)]
    pub index_intercept: bool,
    pub index_covariates: Vec<Covariate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_covariates: Option<CovariateBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub count_specific_terms: Vec<CountTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_covariates: Option<CovariateBlock>,
}

impl ModelSpec {
    pub fn new(family: Family, top_code: usize, index_covariates: Vec<Covariate>) -> Self {
        Self {
            family,
            top_code,
            index_intercept: false,
            index_covariates,
            split_covariates: None,
            count_specific_terms: Vec::new(),
            rho_covariates: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Every (column, transform) pair the model reads, in first-use order.
    pub fn referenced_columns(&self) -> Vec<(String, Transform)> {
        let mut seen: Vec<(String, Transform)> = Vec::new();
        let mut push = |c: &str, t: Transform| {
            if !seen.iter().any(|(s, _)| s == c) {
                seen.push((c.to_string(), t));
            }
        };
        for c in &self.index_covariates {
            push(&c.column, c.transform);
        }
        if let Some(block) = &self.split_covariates {
            for c in &block.covariates {
                push(&c.column, c.transform);
            }
        }
        for t in &self.count_specific_terms {
            if let Some(c) = &t.column {
                push(c, t.transform);
            }
        }
        if let Some(block) = &self.rho_covariates {
            for c in &block.covariates {
                push(&c.column, c.transform);
            }
        }
        seen
    }

    /// Same family with every covariate removed; intercepts, thresholds and
    /// dispersion are kept. Gamma heterogeneity is dropped because, without
    /// covariates, the thresholds alone reproduce the category shares and
    /// the variance is not identified.
    fn null_counterpart(&self) -> ModelSpec {
        ModelSpec {
            family: self.family,
            top_code: self.top_code,
            index_intercept: self.index_intercept,
            index_covariates: Vec::new(),
            split_covariates: self.split_covariates.as_ref().map(|b| CovariateBlock {
                intercept: b.intercept,
                covariates: Vec::new(),
            }),
            count_specific_terms: self
                .count_specific_terms
                .iter()
                .filter(|t| t.is_constant())
                .cloned()
                .collect(),
            rho_covariates: self.rho_covariates.as_ref().map(|b| CovariateBlock {
                intercept: b.intercept,
                covariates: Vec::new(),
            }),
        }
    }
}

/// Offsets of each parameter block inside the unconstrained vector.
///
/// Order: `beta`, thresholds (first value then log-increments),
/// `log_sigma2`, `log_r`, `gamma`, `omega`, `theta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub beta: Range<usize>,
    pub thresholds: Range<usize>,
    pub log_sigma2: Option<usize>,
    pub log_r: Option<usize>,
    pub gamma: Range<usize>,
    pub omega: Range<usize>,
    pub theta: Range<usize>,
    pub k: usize,
}

impl Layout {
    fn build(spec: &ModelSpec, with_sigma2: bool) -> Layout {
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let c = spec.top_code;
        let p = spec.index_covariates.len() + usize::from(spec.index_intercept);
        let beta = take(p);
        let n_thresholds = match spec.family {
            Family::OevGamma => c,
            Family::SplitOevGamma => c - 1,
            _ => 0,
        };
        let thresholds = take(n_thresholds);
        // The split latent part needs at least two positive categories for
        // heterogeneity to matter.
        let sigma2_applies = match spec.family {
            Family::OevGamma => true,
            Family::SplitOevGamma => c >= 2,
            _ => false,
        };
        let log_sigma2 = (with_sigma2 && sigma2_applies).then(|| take(1).start);
        let log_r = (spec.family == Family::NbOgev).then(|| take(1).start);
        let gamma = take(
            spec.split_covariates
                .as_ref()
                .map_or(0, CovariateBlock::len),
        );
        let omega = take(spec.count_specific_terms.len());
        let theta = take(spec.rho_covariates.as_ref().map_or(0, CovariateBlock::len));
        Layout {
            beta,
            thresholds,
            log_sigma2,
            log_r,
            gamma,
            omega,
            theta,
            k: at,
        }
    }
}

/// A spec that passed validation, with its parameter layout attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    spec: ModelSpec,
    layout: Layout,
    is_null: bool,
}

impl ValidatedSpec {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn top_code(&self) -> usize {
        self.spec.top_code
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Number of free parameters.
    pub fn k(&self) -> usize {
        self.layout.k
    }

    pub fn is_null(&self) -> bool {
        self.is_null
    }

    /// Constants-and-thresholds-only counterpart used for the null log-likelihood.
    pub fn null_model(&self) -> ValidatedSpec {
        let spec = self.spec.null_counterpart();
        let layout = Layout::build(&spec, false);
        ValidatedSpec {
            spec,
            layout,
            is_null: true,
        }
    }

    /// Rebuild a null spec from its stored form, as produced by
    /// [`ValidatedSpec::null_model`].
    pub(crate) fn from_null_spec(spec: ModelSpec) -> ValidatedSpec {
        let layout = Layout::build(&spec, false);
        ValidatedSpec {
            spec,
            layout,
            is_null: true,
        }
    }

    /// Names of the unconstrained coordinates, aligned with [`Layout`].
    pub fn unconstrained_names(&self) -> Vec<String> {
        let s = &self.spec;
        let mut names = Vec::with_capacity(self.k());
        names.extend(self.beta_names().into_iter().map(|n| format!("beta[{n}]")));
        let first = match s.family {
            Family::SplitOevGamma => 2,
            _ => 1,
        };
        for (i, _) in self.layout.thresholds.clone().enumerate() {
            if i == 0 {
                names.push(format!("delta[{first}]"));
            } else {
                names.push(format!("log_increment[{}]", first + i));
            }
        }
        if self.layout.log_sigma2.is_some() {
            names.push("log_sigma2".into());
        }
        if self.layout.log_r.is_some() {
            names.push("log_r".into());
        }
        if let Some(b) = &s.split_covariates {
            names.extend(b.names().into_iter().map(|n| format!("gamma[{n}]")));
        }
        names.extend(self.omega_names());
        if let Some(b) = &s.rho_covariates {
            names.extend(b.names().into_iter().map(|n| format!("theta[{n}]")));
        }
        names
    }

    /// Names of the constrained (reported) parameters, one per coordinate.
    pub fn constrained_names(&self) -> Vec<String> {
        let mut names = self.unconstrained_names();
        let first = match self.spec.family {
            Family::SplitOevGamma => 2,
            _ => 1,
        };
        for (i, idx) in self.layout.thresholds.clone().enumerate() {
            names[idx] = format!("delta[{}]", first + i);
        }
        if let Some(i) = self.layout.log_sigma2 {
            names[i] = "sigma2".into();
        }
        if let Some(i) = self.layout.log_r {
            names[i] = "r".into();
        }
        names
    }

    pub(crate) fn beta_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.spec.index_intercept {
            out.push(INTERCEPT.to_string());
        }
        out.extend(self.spec.index_covariates.iter().map(|c| c.column.clone()));
        out
    }

    fn omega_names(&self) -> Vec<String> {
        self.spec
            .count_specific_terms
            .iter()
            .map(|t| {
                format!(
                    "omega[level={},{}]",
                    t.level,
                    t.column.as_deref().unwrap_or(INTERCEPT)
                )
            })
            .collect()
    }
}

/// Check a spec against the family rules and the identification rules.
pub fn validate_spec(spec: &ModelSpec) -> Result<ValidatedSpec> {
    let fam = spec.family;
    let c = spec.top_code;
    if c < 1 {
        return Err(Error::Spec("top_code must be at least 1".into()));
    }
    if spec.index_covariates.is_empty() {
        return Err(Error::Spec("index_covariates must not be empty".into()));
    }
    if fam.is_ordered() && spec.index_intercept {
        return Err(Error::Spec(format!(
            "index_intercept is not identified for {fam}: the thresholds absorb the constant"
        )));
    }
    match fam {
        Family::SplitOevGamma => {
            match &spec.split_covariates {
                Some(b) if !b.is_empty() => {}
                _ => {
                    return Err(Error::Spec(
                        "split_oev_gamma requires split_covariates with at least one term".into(),
                    ))
                }
            }
            if !spec.count_specific_terms.is_empty() {
                return Err(Error::Spec(
                    "count_specific_terms are only valid for count families".into(),
                ));
            }
            if spec.rho_covariates.is_some() {
                return Err(Error::Spec(
                    "rho_covariates are only valid for count families".into(),
                ));
            }
        }
        Family::OevGamma => {
            if spec.split_covariates.is_some() {
                return Err(Error::Spec(
                    "split_covariates are only valid for split_oev_gamma".into(),
                ));
            }
            if !spec.count_specific_terms.is_empty() {
                return Err(Error::Spec(
                    "count_specific_terms are only valid for count families".into(),
                ));
            }
            if spec.rho_covariates.is_some() {
                return Err(Error::Spec(
                    "rho_covariates are only valid for count families".into(),
                ));
            }
        }
        Family::NbOgev | Family::PoissonOgev => {
            if spec.split_covariates.is_some() {
                return Err(Error::Spec(format!(
                    "split_covariates are not valid for {fam}"
                )));
            }
            validate_count_terms(spec)?;
        }
    }

    // One transform per column, since the dataset stores a single
    // model-scale value per column.
    let mut transforms: BTreeMap<String, Transform> = BTreeMap::new();
    let mut check = |col: &str, t: Transform| -> Result<()> {
        if col == FREQ_COLUMN {
            return Err(Error::Spec(format!(
                "`{FREQ_COLUMN}` is the outcome and cannot be a covariate"
            )));
        }
        if col.is_empty() {
            return Err(Error::Spec("empty column name".into()));
        }
        match transforms.get(col) {
            Some(prev) if *prev != t => Err(Error::Spec(format!(
                "column `{col}` is used with conflicting transforms"
            ))),
            _ => {
                transforms.insert(col.to_string(), t);
                Ok(())
            }
        }
    };
    for cov in &spec.index_covariates {
        check(&cov.column, cov.transform)?;
    }
    for block in [&spec.split_covariates, &spec.rho_covariates]
        .into_iter()
        .flatten()
    {
        for cov in &block.covariates {
            check(&cov.column, cov.transform)?;
        }
    }
    for t in &spec.count_specific_terms {
        if let Some(col) = &t.column {
            check(col, t.transform)?;
        }
    }
    check_duplicates(
        "index_covariates",
        spec.index_covariates.iter().map(|c| c.column.as_str()),
    )?;
    for (name, block) in [
        ("split_covariates", &spec.split_covariates),
        ("rho_covariates", &spec.rho_covariates),
    ] {
        if let Some(b) = block {
            check_duplicates(name, b.covariates.iter().map(|c| c.column.as_str()))?;
        }
    }

    Ok(ValidatedSpec {
        spec: spec.clone(),
        layout: Layout::build(spec, true),
        is_null: false,
    })
}

fn check_duplicates<'a>(what: &str, cols: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for c in cols {
        if !seen.insert(c) {
            return Err(Error::Spec(format!("column `{c}` appears twice in {what}")));
        }
    }
    Ok(())
}

fn validate_count_terms(spec: &ModelSpec) -> Result<()> {
    let c = spec.top_code;
    let mut seen = std::collections::BTreeSet::new();
    let mut constant_levels = std::collections::BTreeSet::new();
    for t in &spec.count_specific_terms {
        if t.level > c {
            return Err(Error::Spec(format!(
                "count-specific term at level {} exceeds top_code {c}",
                t.level
            )));
        }
        if !seen.insert((t.level, t.column.clone())) {
            return Err(Error::Spec(format!(
                "duplicate count-specific term at level {} for {}",
                t.level,
                t.column.as_deref().unwrap_or(INTERCEPT)
            )));
        }
        if t.is_constant() {
            constant_levels.insert(t.level);
        }
    }
    // The C+1 alternatives carry C identified constants; an index intercept
    // uses one of them.
    let budget = c - usize::from(spec.index_intercept);
    if constant_levels.len() > budget {
        return Err(Error::Spec(format!(
            "count-specific constants on {} levels are not identified (at most {budget} allowed{})",
            constant_levels.len(),
            if spec.index_intercept {
                " with an index intercept"
            } else {
                ""
            }
        )));
    }
    Ok(())
}
