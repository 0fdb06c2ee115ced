//! Run configuration: flat `key = value` files, flat JSON objects and
//! command-line flags all reduce to a [`RawConfig`] map before validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use timefilter::adaptivity::AdaptiveConfig;
use timefilter::integrators::NuPolicy;
use timefilter::problems::{ProblemKind, ProblemSpec};
use timefilter::{SolverConfig, StateVec};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("bad JSON config: {0}")]
    Json(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error(transparent)]
    Core(#[from] timefilter::Error),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Normalized `key -> value` pairs. Later inserts override earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

/// `t_end` and `t-end` name the same key; `param.<name>` keeps the name's case.
pub fn normalize_key(key: &str) -> String {
    let key = key.trim();
    match key.split_once('.') {
        Some((head, name)) if head.eq_ignore_ascii_case("param") => format!("param.{}", name.trim()),
        _ => key.to_ascii_lowercase().replace('_', "-"),
    }
}

impl RawConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(normalize_key(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entries of `other` win.
    pub fn merge(&mut self, other: &RawConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::new();
    for (i, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        if key.trim().is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                msg: "empty key".into(),
            });
        }
        raw.set(key, value.trim());
    }
    Ok(raw)
}

/// Parses a flat JSON object. Values may be strings, numbers, booleans or
/// arrays of numbers (joined with commas).
pub fn parse_json(text: &str) -> Result<RawConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ConfigError::Json("top level must be an object".into()))?;
    let mut raw = RawConfig::new();
    for (key, v) in obj {
        let text = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|item| match item {
                    serde_json::Value::Number(n) => Ok(n.to_string()),
                    _ => Err(ConfigError::Json(format!("`{key}`: arrays may only hold numbers"))),
                })
                .collect::<Result<Vec<_>>>()?
                .join(","),
            _ => return Err(ConfigError::Json(format!("`{key}`: nested values are not supported"))),
        };
        raw.set(key, text);
    }
    Ok(raw)
}

/// Picks the parser from the first non-blank character.
pub fn parse_config_text(text: &str) -> Result<RawConfig> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_kv(text)
    }
}

/// Comma- or whitespace-separated numbers, optionally in brackets.
pub fn parse_number_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    let inner = text.trim();
    let inner = inner
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(inner);
    let out: std::result::Result<Vec<f64>, String> = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Be,
    BeFilter,
    OneLeg,
    Bdf2,
    Rkf45,
    Adaptive,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Be => "be",
            Method::BeFilter => "be-filter",
            Method::OneLeg => "oneleg",
            Method::Bdf2 => "bdf2",
            Method::Rkf45 => "rkf45",
            Method::Adaptive => "adaptive",
        }
    }

    /// Methods that record the filter estimate and `nu`.
    pub fn uses_nu(self) -> bool {
        matches!(self, Method::BeFilter | Method::OneLeg | Method::Adaptive)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "be" => Method::Be,
            "be-filter" | "befilter" => Method::BeFilter,
            "oneleg" | "one-leg" => Method::OneLeg,
            "bdf2" => Method::Bdf2,
            "rkf45" => Method::Rkf45,
            "adaptive" => Method::Adaptive,
            _ => return Err("expected one of be, be-filter, oneleg, bdf2, rkf45, adaptive".into()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Constant {
        k: f64,
    },
    /// First step `k0`, then successive ratios applied cyclically.
    Ratios {
        k0: f64,
        ratios: Vec<f64>,
    },
    /// `round(span / k)` steps with ratios drawn from `[1/2, 2]`.
    Random {
        k: f64,
        seed: u64,
    },
    Adaptive(AdaptiveConfig),
    /// Step control belongs to the RKF45 pair itself.
    Embedded {
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err("expected csv or json".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    /// `None` writes to stdout.
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub method: Method,
    pub grid: GridSpec,
    pub nu: NuPolicy,
    pub output: OutputSpec,
    pub solver: SolverConfig,
}

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "method",
    "grid",
    "k",
    "tol",
    "nu",
    "t0",
    "t-end",
    "y0",
    "ratios",
    "seed",
    "out",
    "format",
    "k-min",
    "k-max",
    "max-rejections",
    "newton-tol",
    "newton-max-iters",
    "levels",
];

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.trim().parse().map_err(|_| bad(key, value, "not a number"))?;
    if !v.is_finite() {
        return Err(bad(key, value, "must be finite"));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v = parse_f64(key, value)?;
    if v <= 0.0 {
        return Err(bad(key, value, "must be positive"));
    }
    Ok(v)
}

/// `auto`, a number, or a fraction such as `2/3`.
pub fn parse_nu(value: &str) -> Result<NuPolicy> {
    match value.trim() {
        "auto" | "second-order" => Ok(NuPolicy::SecondOrder),
        v => match v.split_once('/') {
            Some((a, b)) => {
                let (a, b) = (parse_f64("nu", a)?, parse_f64("nu", b)?);
                if b == 0.0 {
                    return Err(bad("nu", v, "zero denominator"));
                }
                Ok(NuPolicy::Fixed(a / b))
            }
            None => Ok(NuPolicy::Fixed(parse_f64("nu", v)?)),
        },
    }
}

impl RawConfig {
    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| parse_f64(key, v))
    }

    fn positive_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| positive(key, v))
    }

    fn parsed<T: FromStr<Err = String>>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.trim().parse::<T>().map_err(|e| bad(key, v, e)))
            .transpose()
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in self.iter() {
            if !(k.starts_with("param.") || allowed.contains(&k)) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    /// Validates raw entries and fills defaults.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        raw.check_keys(KNOWN_KEYS)?;
        let name = raw.get("problem").unwrap_or("dahlquist");
        let kind: ProblemKind = name.trim().parse()?;
        let mut problem = ProblemSpec::new(kind);
        for (key, value) in raw.iter() {
            if let Some(param) = key.strip_prefix("param.") {
                problem.set_param(param, parse_f64(key, value)?)?;
            }
        }
        if let Some(v) = raw.get("y0") {
            problem.y0 = StateVec::from_vec(parse_number_list(v).map_err(|e| bad("y0", v, e))?);
        }
        let (d0, d1) = kind.default_span();
        problem.t_span = (raw.f64_or("t0", d0)?, raw.f64_or("t-end", d1)?);
        problem.validate()?;

        let method = raw.parsed::<Method>("method")?.unwrap_or(Method::BeFilter);
        let nu = raw.get("nu").map_or(Ok(NuPolicy::SecondOrder), parse_nu)?;
        let k = raw.positive_or("k", 0.1)?;
        let grid_kind = raw.get("grid").map(str::trim);
        let grid = match method {
            Method::Adaptive => {
                if let Some(g) = grid_kind.filter(|g| *g != "adaptive") {
                    return Err(ConfigError::Invalid(format!(
                        "method adaptive needs grid adaptive, got `{g}`"
                    )));
                }
                let mut a = AdaptiveConfig::new(raw.positive_or("tol", 0.1)?, k);
                a.k_min = raw.positive_or("k-min", a.k_min)?;
                a.k_max = raw.positive_or("k-max", a.k_max)?;
                if let Some(v) = raw.get("max-rejections") {
                    a.max_rejections_per_step = v
                        .trim()
                        .parse()
                        .map_err(|_| bad("max-rejections", v, "not an integer"))?;
                }
                a.validate()?;
                GridSpec::Adaptive(a)
            }
            Method::Rkf45 => {
                if let Some(g) = grid_kind {
                    return Err(ConfigError::Invalid(format!(
                        "method rkf45 controls its own steps; drop grid `{g}`"
                    )));
                }
                GridSpec::Embedded {
                    tol: raw.positive_or("tol", 1e-10)?,
                }
            }
            _ => match grid_kind.unwrap_or(if raw.contains("ratios") { "ratios" } else { "constant" }) {
                "constant" => GridSpec::Constant { k },
                "ratios" => {
                    let v = raw
                        .get("ratios")
                        .ok_or_else(|| ConfigError::Invalid("grid ratios needs a `ratios` list".into()))?;
                    let ratios = parse_number_list(v).map_err(|e| bad("ratios", v, e))?;
                    GridSpec::Ratios { k0: k, ratios }
                }
                "random" => {
                    let seed = match raw.get("seed") {
                        Some(v) => v
                            .trim()
                            .parse()
                            .map_err(|_| bad("seed", v, "not an unsigned integer"))?,
                        None => 0,
                    };
                    GridSpec::Random { k, seed }
                }
                "adaptive" => {
                    return Err(ConfigError::Invalid(format!(
                        "grid adaptive is only valid with method adaptive, not {method}"
                    )))
                }
                other => return Err(bad("grid", other, "expected constant, ratios, random or adaptive")),
            },
        };

        let mut solver = SolverConfig::default();
        if let Some(v) = raw.get("newton-tol") {
            let tol = positive("newton-tol", v)?;
            solver.newton_abs_tol = tol;
            solver.newton_rel_tol = tol;
        }
        if let Some(v) = raw.get("newton-max-iters") {
            solver.newton_max_iters = v
                .trim()
                .parse()
                .map_err(|_| bad("newton-max-iters", v, "not an integer"))?;
        }
        solver.validate()?;

        let output = OutputSpec {
            path: raw.get("out").filter(|p| *p != "-").map(PathBuf::from),
            format: raw.parsed::<Format>("format")?.unwrap_or_default(),
        };
        Ok(RunConfig {
            problem,
            method,
            grid,
            nu,
            output,
            solver,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> RawConfig {
        let mut r = RawConfig::new();
        for (k, v) in pairs {
            r.set(k, *v);
        }
        r
    }

    #[test]
    fn kv_parsing() {
        let r = parse_kv("# run\nproblem = lorenz\n\nt_end=2.5 # short\nparam.sigma = 10\n").unwrap();
        assert_eq!(r.get("problem"), Some("lorenz"));
        assert_eq!(r.get("t-end"), Some("2.5"));
        assert_eq!(r.get("param.sigma"), Some("10"));
        assert!(matches!(
            parse_kv("a = 1\nnope"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert!(parse_kv(" = 3").is_err());
    }

    #[test]
    fn json_parsing() {
        let r = parse_json(r#"{"problem": "pendulum", "k": 0.05, "y0": [1, 0.5], "param.L": 10}"#).unwrap();
        assert_eq!(r.get("k"), Some("0.05"));
        assert_eq!(r.get("y0"), Some("1,0.5"));
        assert_eq!(r.get("param.L"), Some("10"));
        assert!(parse_json("[1, 2]").is_err());
        assert!(parse_json(r#"{"a": {"b": 1}}"#).is_err());
        assert!(parse_json(r#"{"a": ["x"]}"#).is_err());
        assert!(parse_json("{").is_err());
    }

    #[test]
    fn number_lists() {
        assert_eq!(parse_number_list("1, 2 3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_number_list("[0.5,2]").unwrap(), vec![0.5, 2.0]);
        assert!(parse_number_list("").is_err());
        assert!(parse_number_list("1,x").is_err());
        assert!(parse_number_list("inf").is_err());
    }

    #[test]
    fn defaults() {
        let c = RunConfig::from_raw(&RawConfig::new()).unwrap();
        assert_eq!(c.problem.kind, ProblemKind::Dahlquist);
        assert_eq!(c.method, Method::BeFilter);
        assert_eq!(c.grid, GridSpec::Constant { k: 0.1 });
        assert_eq!(c.nu, NuPolicy::SecondOrder);
        assert_eq!(c.output, OutputSpec::default());
    }

    #[test]
    fn full_config() {
        let c = RunConfig::from_raw(&raw(&[
            ("problem", "dahlquist"),
            ("param.lambda", "-2"),
            ("method", "be"),
            ("k", "0.5"),
            ("t-end", "1"),
            ("nu", "0.3"),
            ("out", "x.json"),
            ("format", "json"),
        ]))
        .unwrap();
        assert_eq!(c.problem.param("lambda"), -2.0);
        assert_eq!(c.problem.t_span, (0.0, 1.0));
        assert_eq!(c.nu, NuPolicy::Fixed(0.3));
        assert_eq!(c.output.format, Format::Json);
        assert_eq!(c.output.path, Some(PathBuf::from("x.json")));
    }

    #[test]
    fn grids() {
        let c = RunConfig::from_raw(&raw(&[("ratios", "2, 0.5"), ("k", "0.01")])).unwrap();
        assert_eq!(
            c.grid,
            GridSpec::Ratios {
                k0: 0.01,
                ratios: vec![2.0, 0.5]
            }
        );
        let c = RunConfig::from_raw(&raw(&[("grid", "random"), ("seed", "9")])).unwrap();
        assert_eq!(c.grid, GridSpec::Random { k: 0.1, seed: 9 });
        let c = RunConfig::from_raw(&raw(&[("method", "adaptive"), ("tol", "0.2")])).unwrap();
        assert!(matches!(c.grid, GridSpec::Adaptive(a) if a.tol == 0.2 && a.k_init == 0.1));
        let c = RunConfig::from_raw(&raw(&[("method", "rkf45")])).unwrap();
        assert_eq!(c.grid, GridSpec::Embedded { tol: 1e-10 });
    }

    #[test]
    fn rejects_bad_input() {
        let cases: &[&[(&str, &str)]] = &[
            &[("problem", "vanderpol")],
            &[("method", "euler")],
            &[("k", "-1")],
            &[("k", "nan")],
            &[("grid", "adaptive")],
            &[("method", "adaptive"), ("grid", "constant")],
            &[("method", "rkf45"), ("grid", "constant")],
            &[("grid", "ratios")],
            &[("param.rho", "1")],
            &[("colour", "red")],
            &[("y0", "1,2")],
            &[("t-end", "-1")],
            &[("format", "xml")],
            &[("seed", "-3"), ("grid", "random")],
            &[("method", "adaptive"), ("k-max", "0.01")],
        ];
        for pairs in cases {
            assert!(RunConfig::from_raw(&raw(pairs)).is_err(), "{pairs:?}");
        }
    }

    #[test]
    fn nu_forms() {
        assert_eq!(parse_nu("auto").unwrap(), NuPolicy::SecondOrder);
        assert_eq!(parse_nu(" 0.25 ").unwrap(), NuPolicy::Fixed(0.25));
        assert_eq!(parse_nu("2/3").unwrap(), NuPolicy::Fixed(2.0 / 3.0));
        assert!(parse_nu("1/0").is_err());
        assert!(parse_nu("x/2").is_err());
    }

    #[test]
    fn merge_prefers_later() {
        let mut base = raw(&[("k", "0.1"), ("problem", "lorenz")]);
        base.merge(&raw(&[("k", "0.2")]));
        assert_eq!(base.get("k"), Some("0.2"));
        assert_eq!(base.get("problem"), Some("lorenz"));
    }
}
