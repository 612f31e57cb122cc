//! Observations, datasets and CSV ingestion.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::spec::{ModelSpec, Transform, FREQ_COLUMN};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Observed frequency category, `0..=top_code`.
    pub freq: usize,
    /// Model-scale covariate values keyed by column name.
    pub covariates: BTreeMap<String, f64>,
}

impl Observation {
    pub fn new(freq: usize) -> Self {
        Self {
            freq,
            covariates: BTreeMap::new(),
        }
    }

    pub fn with(mut self, column: &str, value: f64) -> Self {
        self.covariates.insert(column.to_string(), value);
        self
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        self.covariates.get(column).copied()
    }
}

/// An immutable collection of observations sharing one covariate key set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    column_names: Vec<String>,
    observations: Vec<Observation>,
    top_code: usize,
}

impl Dataset {
    /// Build a dataset, checking the shared key set and the frequency range.
    pub fn new(
        column_names: Vec<String>,
        observations: Vec<Observation>,
        top_code: usize,
    ) -> Result<Self> {
        for (i, obs) in observations.iter().enumerate() {
            if obs.freq > top_code {
                return Err(Error::Domain {
                    row: Some(i + 1),
                    msg: format!("freq {} exceeds top code {top_code}", obs.freq),
                });
            }
            if obs.covariates.len() != column_names.len()
                || column_names.iter().any(|c| !obs.covariates.contains_key(c))
            {
                return Err(Error::Schema(format!(
                    "observation {} does not carry exactly the columns {:?}",
                    i + 1,
                    column_names
                )));
            }
            if let Some((c, v)) = obs.covariates.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Parse {
                    row: i + 1,
                    column: c.clone(),
                    msg: format!("non-finite value {v}"),
                });
            }
        }
        Ok(Self {
            column_names,
            observations,
            top_code,
        })
    }

    pub fn empty(column_names: Vec<String>, top_code: usize) -> Self {
        Self {
            column_names,
            observations: Vec::new(),
            top_code,
        }
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn top_code(&self) -> usize {
        self.top_code
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Observed share of each category `0..=top_code`.
    pub fn category_shares(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.top_code + 1];
        for o in &self.observations {
            counts[o.freq] += 1;
        }
        let n = self.n().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// Concatenate two datasets with identical columns and top code.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.column_names != other.column_names || self.top_code != other.top_code {
            return Err(Error::Schema("datasets have different layouts".into()));
        }
        let mut obs = self.observations.clone();
        obs.extend(other.observations.iter().cloned());
        Ok(Dataset {
            column_names: self.column_names.clone(),
            observations: obs,
            top_code: self.top_code,
        })
    }

    /// Parse CSV text without applying any transform. Every non-`freq`
    /// column must be numeric.
    pub fn read_csv<R: Read>(source: R, top_code: usize) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let freq_idx = headers
            .iter()
            .position(|h| h == FREQ_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{FREQ_COLUMN}`")))?;
        {
            let mut seen = std::collections::BTreeSet::new();
            for h in &headers {
                if !seen.insert(h) {
                    return Err(Error::Schema(format!("duplicate column `{h}`")));
                }
            }
        }
        let column_names: Vec<String> = headers
            .iter()
            .filter(|h| *h != FREQ_COLUMN)
            .cloned()
            .collect();
        let mut observations = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let raw_freq = rec.get(freq_idx).unwrap_or("");
            let freq: i64 = raw_freq.parse().map_err(|_| Error::Parse {
                row,
                column: FREQ_COLUMN.into(),
                msg: format!("`{raw_freq}` is not an integer"),
            })?;
            if freq < 0 || freq as u64 > top_code as u64 {
                return Err(Error::Domain {
                    row: Some(row),
                    msg: format!("freq {freq} is outside 0..={top_code}"),
                });
            }
            let mut covariates = BTreeMap::new();
            for (j, h) in headers.iter().enumerate() {
                if j == freq_idx {
                    continue;
                }
                let cell = rec.get(j).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: h.clone(),
                    msg: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: h.clone(),
                        msg: format!("`{cell}` is not finite"),
                    });
                }
                covariates.insert(h.clone(), v);
            }
            observations.push(Observation {
                freq: freq as usize,
                covariates,
            });
        }
        Ok(Dataset {
            column_names,
            observations,
            top_code,
        })
    }

    /// Write the stored values; `read_csv` restores them bit-for-bit.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![FREQ_COLUMN.to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for o in &self.observations {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(o.freq.to_string());
            for c in &self.column_names {
                rec.push(format_f64(o.covariates[c]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }

    /// Apply a spec's transforms and check that every referenced column
    /// exists. Row indices in errors are 1-based data rows.
    pub fn prepare(&self, spec: &ModelSpec) -> Result<Dataset> {
        if spec.top_code != self.top_code {
            return Err(Error::Domain {
                row: None,
                msg: format!(
                    "dataset top code {} differs from spec top code {}",
                    self.top_code, spec.top_code
                ),
            });
        }
        let cols = spec.referenced_columns();
        for (c, _) in &cols {
            if !self.column_names.contains(c) {
                return Err(Error::Schema(format!("missing column `{c}`")));
            }
        }
        let logs: Vec<&str> = cols
            .iter()
            .filter(|(_, t)| *t == Transform::NaturalLog)
            .map(|(c, _)| c.as_str())
            .collect();
        let mut observations = self.observations.clone();
        for (i, o) in observations.iter_mut().enumerate() {
            for c in &logs {
                let v = o.covariates[*c];
                if v <= 0.0 {
                    return Err(Error::Domain {
                        row: Some(i + 1),
                        msg: format!("natural_log of non-positive value {v} in column `{c}`"),
                    });
                }
                o.covariates.insert((*c).to_string(), v.ln());
            }
        }
        Ok(Dataset {
            column_names: self.column_names.clone(),
            observations,
            top_code: self.top_code,
        })
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Parse CSV text and apply the spec's transforms.
pub fn load_dataset<R: Read>(source: R, spec: &ModelSpec) -> Result<Dataset> {
    Dataset::read_csv(source, spec.top_code)?.prepare(spec)
}
