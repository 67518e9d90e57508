//! Flat dotted-key scenario documents.
//!
//! One `key = value` per line, `#` starts a comment, values may be quoted.
//! Unset optional keys take their defaults at run time and are not written
//! back, so `parse(serialize(s)) == s`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use probe_core::carleman3d::{Frame3, Point3};
use probe_core::forward2d::{Curve, Geometry2, DEFAULT_CORNER_RADIUS};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Eval2D,
    Eval3D,
    EvalHelmholtz,
    ForwardOracle,
    ProbeScan,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Eval2D,
        ScenarioKind::Eval3D,
        ScenarioKind::EvalHelmholtz,
        ScenarioKind::ForwardOracle,
        ScenarioKind::ProbeScan,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Eval2D => "Eval2D",
            ScenarioKind::Eval3D => "Eval3D",
            ScenarioKind::EvalHelmholtz => "EvalHelmholtz",
            ScenarioKind::ForwardOracle => "ForwardOracle",
            ScenarioKind::ProbeScan => "ProbeScan",
        }
    }
}

/// Configuration error tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub outer_radius: Option<f64>,
    pub cavities: Vec<Curve>,
    pub needle_tip: Option<Vec<f64>>,
    pub needle_dir: Option<Vec<f64>>,
    pub frame_theta1: Option<[f64; 3]>,
    pub frame_theta2: Option<[f64; 3]>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub eps0: Option<f64>,
    pub n_max: Option<usize>,
    pub grid_nx: Option<usize>,
    pub grid_ny: Option<usize>,
    pub grid_directions: Option<usize>,
    pub theta_cap: Option<f64>,
    pub window: Option<usize>,
    pub ratio: Option<f64>,
    pub eval_points: Option<usize>,
    pub sweep_s_min: Option<f64>,
    pub sweep_s_max: Option<f64>,
    pub forward_modes: Option<usize>,
    pub forward_nodes: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub const DEFAULT_EPS0: f64 = 1e-2;
pub const DEFAULT_N_MAX: usize = 12;
pub const DEFAULT_WINDOW: usize = 4;
pub const DEFAULT_RATIO: f64 = 1.5;
pub const DEFAULT_EVAL_POINTS: usize = 64;
pub const DEFAULT_SWEEP: (f64, f64) = (0.05, 1.0);
pub const DEFAULT_FORWARD_MODES: usize = 32;
pub const DEFAULT_FORWARD_NODES: usize = 256;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Every key the parser accepts; `geometry.cavity[i]` stands for the indexed family.
pub const KEYS: [&str; 25] = [
    "scenario.kind",
    "geometry.outer",
    "geometry.cavity[i]",
    "needle.tip",
    "needle.dir",
    "frame.theta1",
    "frame.theta2",
    "params.alpha",
    "params.tau",
    "params.lambda",
    "schedule.eps0",
    "schedule.n_max",
    "grid.nx",
    "grid.ny",
    "grid.directions",
    "verdict.theta_cap",
    "verdict.window",
    "verdict.ratio",
    "eval.points",
    "sweep.s_min",
    "sweep.s_max",
    "forward.modes",
    "forward.nodes",
    "output.dir",
    "rng.seed",
];

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            outer_radius: None,
            cavities: Vec::new(),
            needle_tip: None,
            needle_dir: None,
            frame_theta1: None,
            frame_theta2: None,
            alpha: None,
            tau: None,
            lambda: None,
            eps0: None,
            n_max: None,
            grid_nx: None,
            grid_ny: None,
            grid_directions: None,
            theta_cap: None,
            window: None,
            ratio: None,
            eval_points: None,
            sweep_s_min: None,
            sweep_s_max: None,
            forward_modes: None,
            forward_nodes: None,
            output_dir: None,
            seed: None,
        }
    }

    pub fn geometry(&self) -> Geometry2 {
        Geometry2 { outer_radius: self.outer_radius.unwrap_or(1.0), cavities: self.cavities.clone() }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Frame for the 3D kinds: `frame.theta1/2` if given, else one around
    /// `needle.dir`, else around the z axis.
    pub fn frame(&self) -> ConfigResult<Frame3> {
        match (self.frame_theta1, self.frame_theta2) {
            (Some(a), Some(b)) => Frame3::new(Point3::from(a), Point3::from(b))
                .map_err(|e| ConfigError::new("frame.theta1", e.to_string())),
            (None, None) => {
                let axis = match &self.needle_dir {
                    Some(d) if d.len() == 3 => Point3::new(d[0], d[1], d[2]),
                    _ => Point3::z(),
                };
                Frame3::from_axis(axis).map_err(|e| ConfigError::new("needle.dir", e.to_string()))
            }
            (Some(_), None) => Err(ConfigError::new("frame.theta2", "missing required key (frame.theta1 is set)")),
            (None, Some(_)) => Err(ConfigError::new("frame.theta1", "missing required key (frame.theta2 is set)")),
        }
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.serialize().as_bytes()))
    }

    /// Check ranges and the keys each kind requires.
    pub fn validate(&self) -> ConfigResult<()> {
        let positive = |key: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(ConfigError::new(key, format!("{x} out of ]0,∞[")) ),
            _ => Ok(()),
        };
        let at_least = |key: &str, v: Option<usize>, lo: usize, hi: usize| match v {
            Some(n) if n < lo || n > hi => Err(ConfigError::new(key, format!("{n} out of [{lo},{hi}]"))),
            _ => Ok(()),
        };
        let require = |key: &str, present: bool| {
            if present { Ok(()) } else { Err(ConfigError::new(key, "missing required key")) }
        };
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ConfigError::new("params.alpha", format!("alpha out of ]0,1]: {a}")));
            }
        }
        positive("geometry.outer", self.outer_radius)?;
        positive("params.tau", self.tau)?;
        positive("params.lambda", self.lambda)?;
        positive("schedule.eps0", self.eps0)?;
        positive("verdict.theta_cap", self.theta_cap)?;
        if let Some(r) = self.ratio {
            if !(r > 1.0 && r.is_finite()) {
                return Err(ConfigError::new("verdict.ratio", format!("{r} out of ]1,∞[")));
            }
        }
        at_least("schedule.n_max", self.n_max, 1, 64)?;
        at_least("grid.nx", self.grid_nx, 2, 1025)?;
        at_least("grid.ny", self.grid_ny, 2, 1025)?;
        at_least("grid.directions", self.grid_directions, 1, 360)?;
        at_least("verdict.window", self.window, 1, 63)?;
        at_least("eval.points", self.eval_points, 1, 1_000_000)?;
        at_least("forward.modes", self.forward_modes, 1, 128)?;
        at_least("forward.nodes", self.forward_nodes, 16, 8192)?;
        if let Some(w) = self.window {
            let n = self.n_max.unwrap_or(DEFAULT_N_MAX);
            if w >= n {
                return Err(ConfigError::new("verdict.window", format!("window {w} needs n_max > {w}, got {n}")));
            }
        }
        let (s0, s1) = (self.sweep_s_min.unwrap_or(DEFAULT_SWEEP.0), self.sweep_s_max.unwrap_or(DEFAULT_SWEEP.1));
        if !(s0 < s1 && s0.is_finite() && s1.is_finite()) {
            return Err(ConfigError::new("sweep.s_min", format!("need s_min < s_max, got {s0} and {s1}")));
        }
        if let Some(d) = &self.needle_dir {
            if d.iter().all(|x| *x == 0.0) {
                return Err(ConfigError::new("needle.dir", "direction must be nonzero"));
            }
        }
        match self.kind {
            ScenarioKind::Eval2D => {
                require("params.alpha", self.alpha.is_some())?;
                require("params.tau", self.tau.is_some())?;
                require("needle.tip", self.needle_tip.is_some())?;
                require("needle.dir", self.needle_dir.is_some())?;
                dims("needle.tip", self.needle_tip.as_deref(), 2)?;
                dims("needle.dir", self.needle_dir.as_deref(), 2)?;
                let tip = self.needle_tip.as_deref().unwrap_or_default();
                if tip[0].hypot(tip[1]) >= self.outer_radius.unwrap_or(1.0) {
                    return Err(ConfigError::new("needle.tip", "tip must lie inside the outer circle"));
                }
            }
            ScenarioKind::Eval3D | ScenarioKind::EvalHelmholtz => {
                require("params.alpha", self.alpha.is_some())?;
                require("params.tau", self.tau.is_some())?;
                if self.kind == ScenarioKind::EvalHelmholtz {
                    require("params.lambda", self.lambda.is_some())?;
                }
                dims("needle.tip", self.needle_tip.as_deref(), 3)?;
                dims("needle.dir", self.needle_dir.as_deref(), 3)?;
                self.frame()?;
            }
            ScenarioKind::ForwardOracle => {
                let ok = matches!(self.cavities.as_slice(),
                    [Curve::Circle { center, radius }] if center[0] == 0.0 && center[1] == 0.0 && *radius < self.outer_radius.unwrap_or(1.0));
                if !ok {
                    return Err(ConfigError::new("geometry.cavity[0]", "the oracle needs exactly one disk centred at the origin"));
                }
            }
            ScenarioKind::ProbeScan => {
                require("grid.nx", self.grid_nx.is_some())?;
                require("grid.ny", self.grid_ny.is_some())?;
                require("grid.directions", self.grid_directions.is_some())?;
            }
        }
        if matches!(self.kind, ScenarioKind::ForwardOracle | ScenarioKind::ProbeScan) {
            self.geometry().validate().map_err(|e| ConfigError::new("geometry", e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical document: keys in a fixed order, unset keys omitted.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = \"{v}\"");
        };
        put("scenario.kind", self.kind.name().to_string());
        if let Some(r) = self.outer_radius {
            put("geometry.outer", format!("circle r={r}"));
        }
        for (i, c) in self.cavities.iter().enumerate() {
            put(&format!("geometry.cavity[{i}]"), curve_text(c));
        }
        let vec = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        if let Some(v) = &self.needle_tip {
            put("needle.tip", vec(v));
        }
        if let Some(v) = &self.needle_dir {
            put("needle.dir", vec(v));
        }
        if let Some(v) = &self.frame_theta1 {
            put("frame.theta1", vec(v));
        }
        if let Some(v) = &self.frame_theta2 {
            put("frame.theta2", vec(v));
        }
        let mut num = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                put(k, v);
            }
        };
        let f = |v: Option<f64>| v.map(|x| x.to_string());
        let u = |v: Option<usize>| v.map(|x| x.to_string());
        num("params.alpha", f(self.alpha));
        num("params.tau", f(self.tau));
        num("params.lambda", f(self.lambda));
        num("schedule.eps0", f(self.eps0));
        num("schedule.n_max", u(self.n_max));
        num("grid.nx", u(self.grid_nx));
        num("grid.ny", u(self.grid_ny));
        num("grid.directions", u(self.grid_directions));
        num("verdict.theta_cap", f(self.theta_cap));
        num("verdict.window", u(self.window));
        num("verdict.ratio", f(self.ratio));
        num("eval.points", u(self.eval_points));
        num("sweep.s_min", f(self.sweep_s_min));
        num("sweep.s_max", f(self.sweep_s_max));
        num("forward.modes", u(self.forward_modes));
        num("forward.nodes", u(self.forward_nodes));
        num("output.dir", self.output_dir.as_ref().map(|p| p.display().to_string()));
        num("rng.seed", self.seed.map(|s| s.to_string()));
        out
    }
}

fn dims(key: &str, v: Option<&[f64]>, n: usize) -> ConfigResult<()> {
    match v {
        Some(v) if v.len() != n => Err(ConfigError::new(key, format!("expected {n} components, got {}", v.len()))),
        _ => Ok(()),
    }
}

fn curve_text(c: &Curve) -> String {
    match c {
        Curve::Circle { center, radius } => format!("disk {} {} {}", center[0], center[1], radius),
        Curve::Ellipse { center, semi_axes, rotation } => {
            format!("ellipse {} {} {} {} {}", center[0], center[1], semi_axes[0], semi_axes[1], rotation)
        }
        Curve::RoundedPolygon { vertices, corner_radius } => {
            let pts: Vec<String> = vertices.iter().map(|v| format!("{} {}", v[0], v[1])).collect();
            format!("rounded_polygon {} r={}", pts.join(" "), corner_radius)
        }
    }
}

fn numbers(key: &str, text: &str) -> ConfigResult<Vec<f64>> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| ConfigError::new(key, format!("not a number: {t:?}"))))
        .collect()
}

fn number(key: &str, text: &str) -> ConfigResult<f64> {
    match numbers(key, text)?.as_slice() {
        [x] => Ok(*x),
        _ => Err(ConfigError::new(key, format!("expected one number, got {text:?}"))),
    }
}

fn integer<T: std::str::FromStr>(key: &str, text: &str) -> ConfigResult<T> {
    text.trim().parse::<T>().map_err(|_| ConfigError::new(key, format!("not a nonnegative integer: {text:?}")))
}

fn vec3(key: &str, text: &str) -> ConfigResult<[f64; 3]> {
    let v = numbers(key, text)?;
    dims(key, Some(&v), 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_outer(key: &str, text: &str) -> ConfigResult<f64> {
    let mut words = text.split_whitespace();
    if words.next() != Some("circle") {
        return Err(ConfigError::new(key, "only \"circle r=<radius>\" is supported"));
    }
    match (words.next(), words.next()) {
        (Some(w), None) => number(key, w.strip_prefix("r=").unwrap_or(w)),
        _ => Err(ConfigError::new(key, "expected \"circle r=<radius>\"")),
    }
}

fn parse_curve(key: &str, text: &str) -> ConfigResult<Curve> {
    let (shape, rest) = text.trim().split_once(char::is_whitespace).unwrap_or((text.trim(), ""));
    match shape {
        "disk" => match numbers(key, rest)?.as_slice() {
            [cx, cy, r] if *r > 0.0 => Ok(Curve::Circle { center: [*cx, *cy], radius: *r }),
            [_, _, r] => Err(ConfigError::new(key, format!("radius {r} out of ]0,∞["))),
            _ => Err(ConfigError::new(key, "expected \"disk cx cy r\"")),
        },
        "ellipse" => match numbers(key, rest)?.as_slice() {
            [cx, cy, a, b, rest @ ..] if rest.len() <= 1 => {
                if !(*a > 0.0 && *b > 0.0) {
                    return Err(ConfigError::new(key, "semi-axes must be positive"));
                }
                Ok(Curve::Ellipse { center: [*cx, *cy], semi_axes: [*a, *b], rotation: rest.first().copied().unwrap_or(0.0) })
            }
            _ => Err(ConfigError::new(key, "expected \"ellipse cx cy a b [rotation]\"")),
        },
        "rounded_polygon" => {
            let mut corner = DEFAULT_CORNER_RADIUS;
            let mut coords = String::new();
            for w in rest.split_whitespace() {
                match w.strip_prefix("r=") {
                    Some(r) => corner = number(key, r)?,
                    None => {
                        coords.push_str(w);
                        coords.push(' ');
                    }
                }
            }
            let v = numbers(key, &coords)?;
            if v.len() < 6 || v.len() % 2 != 0 {
                return Err(ConfigError::new(key, "expected at least three \"x y\" vertices"));
            }
            if !(corner > 0.0) {
                return Err(ConfigError::new(key, format!("corner radius {corner} out of ]0,∞[")));
            }
            Ok(Curve::RoundedPolygon { vertices: v.chunks(2).map(|p| [p[0], p[1]]).collect(), corner_radius: corner })
        }
        other => Err(ConfigError::new(key, format!("unknown shape {other:?} (disk, ellipse, rounded_polygon)"))),
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> ConfigResult<Scenario> {
    let s = parse_document(text)?;
    s.validate()?;
    Ok(s)
}

/// Parse a document without the range and per-kind checks.
pub fn parse_document(text: &str) -> ConfigResult<Scenario> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::new(format!("line {}", lineno + 1), "expected \"key = value\""));
        };
        let key = k.trim().to_string();
        let mut value = v.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if entries.insert(key.clone(), (lineno + 1, value.to_string())).is_some() {
            return Err(ConfigError::new(key, "duplicate key"));
        }
    }
    let kind_text = entries.remove("scenario.kind").ok_or_else(|| ConfigError::new("scenario.kind", "missing required key"))?.1;
    let kind = ScenarioKind::ALL
        .into_iter()
        .find(|k| k.name() == kind_text)
        .ok_or_else(|| ConfigError::new("scenario.kind", format!("unknown kind {kind_text:?}")))?;
    let mut s = Scenario::new(kind);
    let mut cavities: BTreeMap<usize, Curve> = BTreeMap::new();
    for (key, (_, value)) in &entries {
        let k = key.as_str();
        let v = value.as_str();
        if let Some(idx) = k.strip_prefix("geometry.cavity[").and_then(|r| r.strip_suffix(']')) {
            let i: usize = integer(k, idx)?;
            cavities.insert(i, parse_curve(k, v)?);
            continue;
        }
        match k {
            "geometry.outer" => s.outer_radius = Some(parse_outer(k, v)?),
            "needle.tip" => s.needle_tip = Some(numbers(k, v)?),
            "needle.dir" => s.needle_dir = Some(numbers(k, v)?),
            "frame.theta1" => s.frame_theta1 = Some(vec3(k, v)?),
            "frame.theta2" => s.frame_theta2 = Some(vec3(k, v)?),
            "params.alpha" => s.alpha = Some(number(k, v)?),
            "params.tau" => s.tau = Some(number(k, v)?),
            "params.lambda" => s.lambda = Some(number(k, v)?),
            "schedule.eps0" => s.eps0 = Some(number(k, v)?),
            "schedule.n_max" => s.n_max = Some(integer(k, v)?),
            "grid.nx" => s.grid_nx = Some(integer(k, v)?),
            "grid.ny" => s.grid_ny = Some(integer(k, v)?),
            "grid.directions" => s.grid_directions = Some(integer(k, v)?),
            "verdict.theta_cap" => s.theta_cap = Some(number(k, v)?),
            "verdict.window" => s.window = Some(integer(k, v)?),
            "verdict.ratio" => s.ratio = Some(number(k, v)?),
            "eval.points" => s.eval_points = Some(integer(k, v)?),
            "sweep.s_min" => s.sweep_s_min = Some(number(k, v)?),
            "sweep.s_max" => s.sweep_s_max = Some(number(k, v)?),
            "forward.modes" => s.forward_modes = Some(integer(k, v)?),
            "forward.nodes" => s.forward_nodes = Some(integer(k, v)?),
            "output.dir" => s.output_dir = Some(PathBuf::from(v)),
            "rng.seed" => s.seed = Some(integer(k, v)?),
            _ => return Err(ConfigError::new(k, "unknown key")),
        }
    }
    for (expected, (i, c)) in cavities.into_iter().enumerate() {
        if i != expected {
            return Err(ConfigError::new(format!("geometry.cavity[{expected}]"), "missing; cavity indices must run 0, 1, 2, …"));
        }
        s.cavities.push(c);
    }
    Ok(s)
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}
