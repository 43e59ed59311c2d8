//! JSON job files for `summary --config`.

use std::path::PathBuf;

use serde::Deserialize;

use modelfree::{EstimatorConfig, Method};

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub data_path: PathBuf,
    pub formula: String,
    #[serde(default)]
    pub variance: Vec<EstimatorConfig>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Seed for requests that do not set their own.
    #[serde(default)]
    pub seed: Option<u64>,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub summary_txt: Option<PathBuf>,
    pub tidy_csv: Option<PathBuf>,
    pub tidy_json: Option<PathBuf>,
    pub plots_dir: Option<PathBuf>,
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let job: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), String> {
        let o = &self.outputs;
        if o.summary_txt.is_none() && o.tidy_csv.is_none() && o.tidy_json.is_none() && o.plots_dir.is_none() {
            return Err("outputs must name at least one of summary_txt, tidy_csv, tidy_json, plots_dir".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(format!("level must lie in (0, 1), got {}", self.level));
        }
        let mut seen: Vec<Method> = Vec::new();
        for v in &self.variance {
            if !v.method.is_resampling() {
                return Err(format!("{} is always computed and cannot be requested", v.method));
            }
            if seen.contains(&v.method) {
                return Err(format!("{} requested more than once", v.method));
            }
            if v.method == Method::Subsampling && v.m.is_none() {
                return Err("subsampling needs m".into());
            }
            seen.push(v.method);
        }
        Ok(())
    }

    pub fn is_randomized(&self) -> bool {
        !self.variance.is_empty()
    }

    pub fn requests(&self) -> Vec<EstimatorConfig> {
        self.variance
            .iter()
            .map(|v| EstimatorConfig {
                seed: v.seed.or(self.seed).or(Some(0)),
                ..v.clone()
            })
            .collect()
    }
}
