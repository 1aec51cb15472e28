//! Run configuration: a TOML file with command-line overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use gridsparse::problem::{Grid3DParams, WeightScheme};
use gridsparse::{Bounds, Grid2DConfig, MethodParams, QueryLabel, SolveLimits, Variant};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lp,
    Ours2d,
    Ours3d,
    Di,
    Greedy,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lp => "lp",
            Method::Ours2d => "ours2d",
            Method::Ours3d => "ours3d",
            Method::Di => "di",
            Method::Greedy => "greedy",
        }
    }

    /// Program solved by this method. Greedy scores itself on the LP program.
    pub fn variant(&self) -> Variant {
        match self {
            Method::Lp | Method::Greedy => Variant::Lp,
            Method::Ours2d => Variant::Ours2D,
            Method::Ours3d => Variant::Ours3D,
            Method::Di => Variant::Di,
        }
    }
}

/// `heuristic` rounds the relaxation; `exact` runs branch-and-bound under the limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Heuristic,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub k1: u32,
    pub k2: u32,
    /// Defaults to 1, or 0.02 for `di`.
    pub lambda1: Option<f64>,
    pub lambda2: f64,
    pub lambda3: f64,
    pub grid2d: Grid2DConfig,
    pub grid3d_res: Option<f64>,
    pub bounds: Bounds,
    pub weight_scheme: WeightScheme,
}

impl Default for Params {
    fn default() -> Self {
        let d = MethodParams::new(Variant::Lp);
        Params {
            k1: d.k1,
            k2: d.k2,
            lambda1: None,
            lambda2: d.lambda2,
            lambda3: d.lambda3,
            grid2d: d.grid2d,
            grid3d_res: None,
            bounds: Bounds::Auto,
            weight_scheme: d.weight_scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    /// Seconds.
    pub time_limit: Option<f64>,
    pub gap: f64,
    pub node_limit: Option<usize>,
    pub workers: usize,
    pub lp_tolerance: f64,
    pub lp_max_iters: usize,
}

impl Default for Limits {
    fn default() -> Self {
        let d = SolveLimits::default();
        Limits {
            time_limit: None,
            gap: d.gap_limit,
            node_limit: d.node_limit,
            workers: d.workers,
            lp_tolerance: d.lp_tolerance,
            lp_max_iters: d.lp_max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub inliers: u32,
    pub strata: Vec<QueryLabel>,
    /// Queries generated per stratum when no query file is given.
    pub queries_per_stratum: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            inliers: gridsparse::eval::DEFAULT_INLIERS,
            strata: QueryLabel::ALL.to_vec(),
            queries_per_stratum: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub map: Option<PathBuf>,
    pub compact: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub export_lp: Option<PathBuf>,
    pub spec: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub methods: Vec<Method>,
    pub mode: Mode,
    /// Scene and query seed. Unset means the scene file's own seed, and 0 for queries.
    pub seed: Option<u64>,
    pub params: Params,
    pub limits: Limits,
    pub eval: EvalParams,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Ours2d,
            methods: vec![Method::Lp, Method::Ours2d],
            mode: Mode::default(),
            seed: None,
            params: Params::default(),
            limits: Limits::default(),
            eval: EvalParams::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }

    pub fn method_params(&self, method: Method) -> Result<MethodParams, Failure> {
        let p = &self.params;
        let mut params = MethodParams::new(method.variant());
        params.k1 = p.k1;
        params.k2 = p.k2;
        if let Some(l1) = p.lambda1 {
            params.lambda1 = l1;
        }
        params.lambda2 = p.lambda2;
        params.lambda3 = p.lambda3;
        params.grid2d = p.grid2d;
        params.weight_scheme = p.weight_scheme;
        params.grid3d = p.grid3d_res.map(|res| Grid3DParams {
            bounds: p.bounds,
            ..Grid3DParams::new(res)
        });
        if method == Method::Ours3d && params.grid3d.is_none() {
            return Err(Failure::usage("method ours3d requires --grid3d-res".into()));
        }
        params.validate().map_err(Failure::from)?;
        Ok(params)
    }

    pub fn solve_limits(&self) -> Result<SolveLimits, Failure> {
        let l = &self.limits;
        if let Some(t) = l.time_limit {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Failure::usage(format!("time limit must be non-negative, got {t}")));
            }
        }
        let limits = SolveLimits {
            time_limit: l.time_limit.map(Duration::from_secs_f64),
            gap_limit: l.gap,
            node_limit: l.node_limit,
            workers: l.workers,
            lp_tolerance: l.lp_tolerance,
            lp_max_iters: l.lp_max_iters,
        };
        limits.validate().map_err(Failure::from)?;
        Ok(limits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            method: Method::Ours3d,
            params: Params {
                grid3d_res: Some(0.5),
                lambda1: Some(2.0),
                ..Params::default()
            },
            ..RunConfig::default()
        };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c: RunConfig = toml::from_str("method = \"di\"\n[params]\ngrid2d = \"4x3\"\n").unwrap();
        assert_eq!(c.method, Method::Di);
        assert_eq!(c.params.grid2d, Grid2DConfig::new(4, 3).unwrap());
        let p = c.method_params(Method::Di).unwrap();
        assert_eq!(p.lambda1, gridsparse::problem::DEFAULT_DI_LAMBDA1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("methd = \"lp\"").is_err());
    }

    #[test]
    fn ours3d_needs_resolution() {
        let err = RunConfig::default().method_params(Method::Ours3d).unwrap_err();
        assert_eq!(err.code, 2);
    }
}
