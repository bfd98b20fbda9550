//! Scenario files: TOML with one section per stage.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Geolayer,
    Random3,
    Top3,
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "geolayer" => Ok(Strategy::Geolayer),
            "random3" => Ok(Strategy::Random3),
            "top3" => Ok(Strategy::Top3),
            other => Err(format!("unknown strategy `{other}` (geolayer, random3, top3)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Geolayer => "geolayer",
            Strategy::Random3 => "random3",
            Strategy::Top3 => "top3",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    pub wan: WanSection,
    pub graph: GraphSection,
    #[serde(default)]
    pub layers: LayerSection,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub dhd: DhdSection,
    #[serde(default)]
    pub placement: PlacementSection,
    #[serde(default)]
    pub routing: RoutingSection,
    #[serde(default)]
    pub oracle: OracleSection,
    /// Directory the config was read from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_strategy() -> Strategy {
    Strategy::Geolayer
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WanSection {
    /// Profile file, or the name of a bundled profile.
    pub file: Option<String>,
    pub profile: Option<String>,
    /// Keep only these sites, in this order.
    pub dcs: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub edges: Option<String>,
    pub partition: Option<String>,
    pub vertices: Option<usize>,
    #[serde(default = "default_degree")]
    pub avg_degree: f64,
    #[serde(default = "default_locality")]
    pub locality: f64,
    #[serde(default = "default_vertex_bytes")]
    pub vertex_bytes: u64,
    #[serde(default = "default_edge_bytes")]
    pub edge_bytes: u64,
}

fn default_degree() -> f64 {
    3.0
}
fn default_locality() -> f64 {
    0.7
}
fn default_vertex_bytes() -> u64 {
    200_000
}
fn default_edge_bytes() -> u64 {
    20_000
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayerSection {
    pub layer_interval_ms: f64,
}

impl Default for LayerSection {
    fn default() -> Self {
        LayerSection { layer_interval_ms: 50.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub patterns: usize,
    pub hops: usize,
    pub zipf_exponent: f64,
    pub reads: usize,
    pub writes: usize,
    pub write_fraction: f64,
    pub origins_per_pattern: usize,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection { patterns: 20, hops: 2, zipf_exponent: 1.0, reads: 2_000, writes: 100, write_fraction: 0.3, origins_per_pattern: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub association_scale: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection { lambda1: 0.5, lambda2: 0.5, association_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DhdSection {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for DhdSection {
    fn default() -> Self {
        DhdSection { alpha: 0.5, gamma: 0.1, beta: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementSection {
    pub gamma_max_ms: f64,
    /// Pre-caching quantile; negative disables the pass.
    pub theta_quantile: f64,
    pub theta_c_quantile: f64,
    /// Write the commit log as well.
    pub log: bool,
}

impl Default for PlacementSection {
    fn default() -> Self {
        PlacementSection { gamma_max_ms: 400.0, theta_quantile: 0.55, theta_c_quantile: 0.1, log: false }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingSection {
    pub xi_fraction: f64,
    pub iterations: u32,
    pub msg_bytes: u64,
    /// Analytics jobs assembled offline for the migration report.
    pub offline_jobs: usize,
}

impl Default for RoutingSection {
    fn default() -> Self {
        RoutingSection { xi_fraction: 0.2, iterations: 10, msg_bytes: 1_000, offline_jobs: 10 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub enabled: bool,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Config, SimError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| SimError::Config(e.message().to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &str, why: &str| Err(SimError::Config(format!("{field}: {why}")));
        match (&self.wan.file, &self.wan.profile) {
            (Some(_), Some(_)) => return bad("wan", "give either file or profile, not both"),
            (None, None) => return bad("wan", "missing file or profile"),
            _ => {}
        }
        let files = self.graph.edges.is_some() || self.graph.partition.is_some();
        if files && (self.graph.edges.is_none() || self.graph.partition.is_none()) {
            return bad("graph", "edges and partition must be given together");
        }
        if files == self.graph.vertices.is_some() {
            return bad("graph", "give either edges + partition or vertices");
        }
        if !(self.layers.layer_interval_ms > 0.0) {
            return bad("layer_interval_ms", "must be positive");
        }
        if !(self.placement.gamma_max_ms > 0.0) {
            return bad("gamma_max_ms", "must be positive");
        }
        if self.placement.theta_quantile > 1.0 {
            return bad("theta_quantile", "must not exceed 1");
        }
        if !(0.0..=1.0).contains(&self.placement.theta_c_quantile) {
            return bad("theta_c_quantile", "must lie in [0, 1]");
        }
        if !(self.routing.xi_fraction >= 0.0) {
            return bad("xi_fraction", "must be non-negative");
        }
        for (name, v) in [("lambda1", self.cost.lambda1), ("lambda2", self.cost.lambda2), ("association_scale", self.cost.association_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be finite and non-negative");
            }
        }
        Ok(())
    }
}
