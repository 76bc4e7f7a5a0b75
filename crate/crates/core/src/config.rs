//! Declarative problem configuration.
//!
//! A config is a TOML document with the sections `domain`, `time`, `modes`,
//! `operator`, `costs`, `boundary` and `initial`, plus optional `exact` and
//! `barriers`. Data entries are numbers or expression strings over `t` and
//! `x1..xn` (boundary data may also use `r`).
//!
//! ```toml
//! [domain]
//! family = "interval"
//! lower = 0.0
//! upper = 1.0
//! h = 0.05
//!
//! [time]
//! horizon = 0.5
//! dt = 0.01
//!
//! [modes]
//! count = 2
//!
//! [operator]
//! family = "hjb"
//!
//! [[operator.mode]]
//! diffusion = [0.5]
//! drift = [0.0]
//! lambda = 1.0
//! source = "1 + cos(pi*x1)"
//! # ... one [[operator.mode]] per mode
//!
//! [costs]
//! matrix = [[0.0, 0.1], [0.1, 0.0]]
//!
//! [boundary]
//! f = [0.0, 0.0]
//!
//! [initial]
//! g = [0.0, 0.0]
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::SpaceTimeGrid;
use crate::problem::{
    BoundaryData, CostBounds, HjbOperator, InitialData, ModeOperator, OpaqueOperator, OperatorSpec,
    ProblemSpec, SwitchingCosts,
};

/// Anchors as `(point, 0-based mode)` with their shared `eps`.
pub type AnchorSet = (Vec<(Vec<f64>, usize)>, f64);

/// Names accepted by `operator.plugin`.
pub const PLUGINS: [&str; 3] = ["heat", "bellman", "antimonotone"];

/// A number or an expression string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Number(f64),
    Text(String),
}

impl Expr {
    fn field(&self, key: &str, dim: usize, allow_r: bool) -> Result<Field> {
        match self {
            Expr::Number(v) => Ok(Field::constant(*v)),
            Expr::Text(s) => Field::parse(s, dim, allow_r).map_err(|e| config_err(key, e.to_string())),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(f, "{v}"),
            Expr::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Number(v)
    }
}

impl From<&str> for Expr {
    fn from(s: &str) -> Self {
        Expr::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub modes: ModesConfig,
    pub operator: OperatorConfig,
    pub costs: CostsConfig,
    pub boundary: BoundaryConfig,
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barriers: Option<BarrierConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// `interval` or `ball`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    /// `hjb` or `opaque`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plugin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mode: Vec<HjbModeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbModeConfig {
    /// Diagonal of the diffusion matrix.
    pub diffusion: Vec<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<Expr>>,
    pub lambda: f64,
    pub source: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    pub matrix: Vec<Vec<Expr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_derivative_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub f: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub g: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    pub w: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub anchors: Vec<Vec<f64>>,
    /// 1-based mode per anchor.
    pub anchor_modes: Vec<usize>,
    pub eps: f64,
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn per_mode(key: &str, list: &[Expr], m: usize, dim: usize, allow_r: bool) -> Result<Vec<Field>> {
    if list.len() != m {
        return Err(config_err(key, format!("expected {m} entries, got {}", list.len())));
    }
    list.iter()
        .enumerate()
        .map(|(i, e)| e.field(&format!("{key}[{}]", i + 1), dim, allow_r))
        .collect()
}

fn hess_trace(hess: &[f64]) -> f64 {
    let n = (hess.len() as f64).sqrt().round() as usize;
    (0..n).map(|k| hess[k * n + k]).sum()
}

/// Opaque operator for a named plugin.
pub fn plugin_operator(name: &str, gamma: f64) -> Result<OpaqueOperator> {
    let op = match name {
        "heat" => OpaqueOperator::new(name, gamma, move |_, _, r, _, x| -hess_trace(x) + gamma * r),
        "bellman" => OpaqueOperator::new(name, gamma, move |_, _, r, p, x| {
            let tr = hess_trace(x);
            let grad: f64 = p.iter().map(|v| v.abs()).sum();
            (-0.5 * tr).max(-tr) + grad + gamma * r
        }),
        // Decreasing in r whatever gamma claims.
        "antimonotone" => OpaqueOperator::new(name, gamma, |_, _, r, _, _| -r),
        other => {
            return Err(config_err(
                "operator.plugin",
                format!("unknown plugin `{other}`, expected one of {PLUGINS:?}"),
            ))
        }
    };
    Ok(op)
}

impl ProblemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err("document", e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn domain(&self) -> Result<Domain> {
        let d = &self.domain;
        match d.family.as_str() {
            "interval" => {
                let lower = d.lower.ok_or_else(|| config_err("domain.lower", "missing"))?;
                let upper = d.upper.ok_or_else(|| config_err("domain.upper", "missing"))?;
                Domain::interval(lower, upper)
            }
            "ball" => {
                let center = d.center.clone().ok_or_else(|| config_err("domain.center", "missing"))?;
                let radius = d.radius.ok_or_else(|| config_err("domain.radius", "missing"))?;
                Domain::ball(center, radius)
            }
            other => Err(Error::UnsupportedDomain(other.to_string())),
        }
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let domain = self.domain()?;
        let n = domain.dim();
        let m = self.modes.count;
        if m == 0 {
            return Err(config_err("modes.count", "must be at least 1"));
        }

        let operator = match self.operator.family.as_str() {
            "hjb" => {
                if self.operator.mode.len() != m {
                    return Err(config_err(
                        "operator.mode",
                        format!("expected {m} mode tables, got {}", self.operator.mode.len()),
                    ));
                }
                let mut ops = Vec::with_capacity(m);
                for (i, mc) in self.operator.mode.iter().enumerate() {
                    let key = format!("operator.mode[{}]", i + 1);
                    if mc.diffusion.len() != n {
                        return Err(config_err(
                            &format!("{key}.diffusion"),
                            format!("expected {n} diagonal entries, got {}", mc.diffusion.len()),
                        ));
                    }
                    let diffusion = mc
                        .diffusion
                        .iter()
                        .map(|e| e.field(&format!("{key}.diffusion"), n, false))
                        .collect::<Result<Vec<_>>>()?;
                    let drift = match &mc.drift {
                        Some(list) if list.len() != n => {
                            return Err(config_err(
                                &format!("{key}.drift"),
                                format!("expected {n} entries, got {}", list.len()),
                            ))
                        }
                        Some(list) => list
                            .iter()
                            .map(|e| e.field(&format!("{key}.drift"), n, false))
                            .collect::<Result<Vec<_>>>()?,
                        None => vec![Field::constant(0.0); n],
                    };
                    if !(mc.lambda.is_finite() && mc.lambda > 0.0) {
                        return Err(config_err(&format!("{key}.lambda"), "must be finite and > 0"));
                    }
                    let source = mc.source.field(&format!("{key}.source"), n, false)?;
                    ops.push(HjbOperator::diagonal(diffusion, drift, mc.lambda, source));
                }
                OperatorSpec::hjb(ops)
            }
            "opaque" => {
                let name = self
                    .operator
                    .plugin
                    .as_deref()
                    .ok_or_else(|| config_err("operator.plugin", "missing"))?;
                let gamma = self
                    .operator
                    .gamma
                    .ok_or_else(|| config_err("operator.gamma", "opaque operators must declare gamma"))?;
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(config_err("operator.gamma", "must be finite and > 0"));
                }
                let op = plugin_operator(name, gamma)?;
                OperatorSpec::new(vec![ModeOperator::Opaque(op); m])
            }
            other => {
                return Err(config_err(
                    "operator.family",
                    format!("unknown family `{other}`, expected `hjb` or `opaque`"),
                ))
            }
        };

        if self.costs.matrix.len() != m || self.costs.matrix.iter().any(|row| row.len() != m) {
            return Err(config_err("costs.matrix", format!("expected a {m} x {m} matrix")));
        }
        let mut entries = Vec::with_capacity(m * m);
        for (i, row) in self.costs.matrix.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                entries.push(e.field(&format!("costs.matrix[{}][{}]", i + 1, j + 1), n, false)?);
            }
        }
        let mut costs = SwitchingCosts::new(m, entries)?;
        match (self.costs.time_derivative_bound, self.costs.gradient_bound) {
            (Some(time_derivative), Some(gradient)) => {
                costs = costs.with_declared_bounds(CostBounds {
                    time_derivative,
                    gradient,
                });
            }
            (None, None) => {}
            _ => {
                return Err(config_err(
                    "costs",
                    "declare both time_derivative_bound and gradient_bound or neither",
                ))
            }
        }

        let boundary = BoundaryData::new(per_mode("boundary.f", &self.boundary.f, m, n, true)?);
        let initial = InitialData::new(per_mode("initial.g", &self.initial.g, m, n, false)?);
        ProblemSpec::new(domain, self.time.horizon, operator, costs, boundary, initial)
    }

    /// Grid from the config, with optional overrides for `h` and `dt`.
    pub fn grid(&self, h: Option<f64>, dt: Option<f64>) -> Result<SpaceTimeGrid> {
        let domain = self.domain()?;
        SpaceTimeGrid::new(
            &domain,
            self.time.horizon,
            h.unwrap_or(self.domain.h),
            dt.unwrap_or(self.time.dt),
        )
    }

    pub fn build(&self, h: Option<f64>, dt: Option<f64>) -> Result<(ProblemSpec, SpaceTimeGrid)> {
        Ok((self.spec()?, self.grid(h, dt)?))
    }

    /// Exact solution fields, if the config declares them.
    pub fn exact(&self) -> Result<Option<Vec<Field>>> {
        let Some(ex) = &self.exact else {
            return Ok(None);
        };
        let n = self.domain()?.dim();
        per_mode("exact.w", &ex.w, self.modes.count, n, false).map(Some)
    }

    /// Barrier anchors declared in the `barriers` section.
    pub fn anchors(&self) -> Result<Option<AnchorSet>> {
        let Some(b) = &self.barriers else {
            return Ok(None);
        };
        if b.anchors.len() != b.anchor_modes.len() {
            return Err(config_err("barriers.anchor_modes", "needs one mode per anchor"));
        }
        let m = self.modes.count;
        let mut out = Vec::with_capacity(b.anchors.len());
        for (x, &mode) in b.anchors.iter().zip(&b.anchor_modes) {
            if mode == 0 || mode > m {
                return Err(config_err(
                    "barriers.anchor_modes",
                    format!("mode {mode} outside 1..={m}"),
                ));
            }
            out.push((x.clone(), mode - 1));
        }
        Ok(Some((out, b.eps)))
    }
}

/// Reads a config file and builds the problem and its grid.
pub fn parse_config(path: &Path) -> Result<(ProblemSpec, SpaceTimeGrid)> {
    ProblemConfig::load(path)?.build(None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn minimal_interval_config() {
        let cfg = fixtures::config(fixtures::TWO_MODE);
        let (spec, grid) = cfg.build(None, None).unwrap();
        assert_eq!(spec.dim(), 1);
        assert_eq!(spec.modes(), 2);
        assert_eq!(grid.len(), 21);
        let src = match spec.operator.mode(0) {
            ModeOperator::Hjb(op) => op.source.eval(0.0, &[0.0]),
            _ => unreachable!(),
        };
        assert!((src - 2.0).abs() < 1e-12);
    }

    #[test]
    fn box_domain_rejected() {
        let text = fixtures::TWO_MODE.replace("family = \"interval\"", "family = \"box\"");
        let err = ProblemConfig::from_toml_str(&text).unwrap().spec().unwrap_err();
        assert!(matches!(err, Error::UnsupportedDomain(_)));
        assert!(err.to_string().contains("corners"));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = fixtures::TWO_MODE.replace("[time]", "[time]\nfoo = 1");
        assert!(matches!(ProblemConfig::from_toml_str(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn bad_expression_names_key() {
        let text = fixtures::TWO_MODE.replace("\"1 - cos(pi*x1)\"", "\"1 - cos(pi*y)\"");
        let err = ProblemConfig::from_toml_str(&text).unwrap().spec().unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "operator.mode[2].source"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn round_trip_is_stable() {
        for text in fixtures::ALL {
            let cfg = fixtures::config(text);
            let back = ProblemConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn plugins_build() {
        let spec = fixtures::config(fixtures::HEAT_PLUGIN).spec().unwrap();
        let v = spec.operator.mode(0).eval(0.0, &[0.5], 10.0, &[0.0], &[2.0]);
        assert!((v - 8.0).abs() < 1e-12);
        assert!(plugin_operator("nope", 1.0).is_err());
    }
}
