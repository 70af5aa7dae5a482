//! Scenario files: a TOML document read through a strict extractor that
//! reports every problem it finds, each tagged with its key path.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sfdvi::applications::{
    build_game, AgentDynamics, MarketDynamics, QuadraticGame, SpatialMarketSpec, SpepFormulation,
};
use sfdvi::engine::{JumpAtom, JumpMeasure, TimeGrid};
use sfdvi::models::{AffineModel, Link, ModelShift};
use sfdvi::sets::{ConvexSet, ParamSequence, SetFamily};
use sfdvi::solver::{optimal_rho, rho_upper};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl ConfigErrors {
    pub fn mentions(&self, path: &str) -> bool {
        self.0.iter().any(|i| i.path == path)
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Simulate,
    Stability,
    Projection,
    Spep,
    Game,
    Sanity,
}

impl Kind {
    pub const ALL: [(&'static str, Kind); 6] = [
        ("simulate", Kind::Simulate),
        ("stability", Kind::Stability),
        ("projection", Kind::Projection),
        ("spep", Kind::Spep),
        ("game", Kind::Game),
        ("sanity", Kind::Sanity),
    ];

    pub fn name(self) -> &'static str {
        Kind::ALL.iter().find(|(_, k)| *k == self).unwrap().0
    }

    fn sections(self) -> &'static [&'static str] {
        match self {
            Kind::Simulate => &["grid", "noise", "vi", "set", "model", "mc", "output"],
            Kind::Stability => &[
                "grid",
                "noise",
                "vi",
                "set",
                "model",
                "perturbation",
                "mc",
                "output",
            ],
            Kind::Projection => &["set", "perturbation", "output"],
            Kind::Spep => &["grid", "noise", "vi", "markets", "cost", "mc", "output"],
            Kind::Game => &["grid", "noise", "vi", "game", "mc", "output"],
            Kind::Sanity => &["grid", "noise", "mc", "sanity", "output"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomConfig {
    pub mark: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Brownian dimension `l`.
    pub dim: usize,
    pub seed: u64,
    pub max_jump: f64,
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SetConfig {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Orthant {
        dim: usize,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Halfspaces {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        interior: Vec<f64>,
    },
    Transport {
        m: usize,
        n: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        capacity: Option<f64>,
    },
    Product {
        factors: Vec<SetConfig>,
    },
}

impl SetConfig {
    pub fn build(&self) -> Result<ConvexSet, String> {
        let r = match self {
            SetConfig::Box { lo, hi } => ConvexSet::boxed(lo.clone(), hi.clone()),
            SetConfig::Orthant { dim } => Ok(ConvexSet::orthant(*dim)),
            SetConfig::Ball { center, radius } => ConvexSet::ball(center.clone(), *radius),
            SetConfig::Halfspaces {
                normals,
                offsets,
                interior,
            } => ConvexSet::halfspaces(normals.clone(), offsets.clone(), interior.clone()),
            SetConfig::Transport { m, n, capacity } => match capacity {
                Some(c) => ConvexSet::transport_capped(*m, *n, *c),
                None => ConvexSet::transport(*m, *n),
            },
            SetConfig::Product { factors } => {
                let built = factors
                    .iter()
                    .map(SetConfig::build)
                    .collect::<Result<Vec<_>, _>>()?;
                ConvexSet::product(built)
            }
        };
        r.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub state_dim: usize,
    pub p0: Vec<f64>,
    pub drift0: f64,
    pub drift_x: f64,
    pub drift_u: f64,
    pub frac0: f64,
    pub frac_x: f64,
    pub vol0: f64,
    pub vol_x: f64,
    pub jump0: f64,
    pub jump_x: f64,
    pub gain: f64,
    pub target: f64,
    pub field_x: f64,
}

/// Registry of builtin coefficient families.
pub const MODEL_NAMES: [(&str, Link); 2] = [("affine", Link::Identity), ("saturating", Link::Tanh)];

impl ModelConfig {
    pub fn model(&self, noise_dim: usize) -> Option<AffineModel> {
        let link = MODEL_NAMES.iter().find(|(n, _)| *n == self.name)?.1;
        Some(AffineModel {
            link,
            state_dim: self.state_dim,
            noise_dim,
            drift0: self.drift0,
            drift_x: self.drift_x,
            drift_u: self.drift_u,
            frac0: self.frac0,
            frac_x: self.frac_x,
            vol0: self.vol0,
            vol_x: self.vol_x,
            jump0: self.jump0,
            jump_x: self.jump_x,
            gain: self.gain,
            target: self.target,
            field_x: self.field_x,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Harmonic,
    Dyadic,
}

impl SequenceKind {
    pub fn sequence(self, scale: f64) -> ParamSequence {
        match self {
            SequenceKind::Harmonic => ParamSequence::harmonic(vec![0.0], vec![scale]),
            SequenceKind::Dyadic => ParamSequence::dyadic(vec![0.0], vec![scale]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub m_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub sequence: SequenceKind,
    /// `lambda_m = term(m)`, applied as `param + lambda_m * shift`.
    pub lambda_shift: ModelShift,
    /// `K_n = (1 + mu_scale * term(n)) K`.
    pub mu_scale: f64,
    pub probes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketsConfig {
    pub m: usize,
    pub n: usize,
    pub formulation: SpepFormulation,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    pub tol: f64,
    pub supply: MarketDynamics,
    pub demand: MarketDynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub gamma: Vec<f64>,
    pub c0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub agents: usize,
    pub target: Vec<f64>,
    pub weight: Vec<f64>,
    #[serde(rename = "box")]
    pub boxes: Vec<Vec<f64>>,
    pub coupling: Vec<Vec<f64>>,
    pub state_gain: Vec<f64>,
    pub p0: Vec<f64>,
    pub deviations: usize,
    pub tol: f64,
    pub dynamics: AgentDynamics,
}

impl GameConfig {
    pub fn game(&self) -> QuadraticGame {
        QuadraticGame {
            target: self.target.clone(),
            weight: self.weight.clone(),
            coupling: self.coupling.clone(),
            state_gain: self.state_gain.clone(),
            boxes: self.boxes.iter().map(|b| (b[0], b[1])).collect(),
            dynamics: vec![self.dynamics; self.agents],
            p0: self.p0.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SanityCheck {
    Ito,
    Doob,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrand {
    One,
    T,
    Zero,
}

impl Integrand {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Integrand::One => 1.0,
            Integrand::T => t,
            Integrand::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityConfig {
    pub check: SanityCheck,
    pub integrand: Integrand,
    pub p0: f64,
}

/// A validated scenario. Serializing it gives a document that parses back to
/// the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: Kind,
    pub grid: GridConfig,
    pub noise: NoiseConfig,
    pub vi: ViConfig,
    pub mc: McConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<SetConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markets: Option<MarketsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub game: Option<GameConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sanity: Option<SanityConfig>,
    #[serde(skip)]
    pub output: OutputConfig,
}

// ---------------------------------------------------------------------------
// extraction

struct Node<'a> {
    path: String,
    table: Option<&'a Table>,
    seen: BTreeSet<String>,
}

impl<'a> Node<'a> {
    fn root(table: &'a Table) -> Self {
        Node {
            path: String::new(),
            table: Some(table),
            seen: BTreeSet::new(),
        }
    }

    fn missing(path: String) -> Self {
        Node {
            path,
            table: None,
            seen: BTreeSet::new(),
        }
    }

    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }
}

#[derive(Default)]
struct Reader {
    issues: Vec<ConfigIssue>,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

impl Reader {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn raw<'a>(&mut self, node: &mut Node<'a>, key: &str) -> Option<&'a Value> {
        node.seen.insert(key.to_string());
        node.table?.get(key)
    }

    fn number(&mut self, path: &str, v: &Value, allow_inf: bool) -> Option<f64> {
        let x = match v {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            other => {
                self.issue(
                    path,
                    format!("expected a number, found {}", type_name(other)),
                );
                return None;
            }
        };
        if x.is_nan() || (x.is_infinite() && !allow_inf) {
            self.issue(path, format!("must be finite, found {x}"));
            return None;
        }
        Some(x)
    }

    fn f64_opt(&mut self, node: &mut Node, key: &str) -> Option<f64> {
        let path = node.key(key);
        let v = self.raw(node, key)?;
        self.number(&path, v, false)
    }

    fn f64_or(&mut self, node: &mut Node, key: &str, default: f64) -> f64 {
        self.f64_opt(node, key).unwrap_or(default)
    }

    fn f64_req(&mut self, node: &mut Node, key: &str) -> Option<f64> {
        let path = node.key(key);
        if node.present() && node.table.is_some_and(|t| !t.contains_key(key)) {
            self.issue(&path, "required key is missing");
        }
        let v = self.raw(node, key)?;
        self.number(&path, v, false)
    }

    fn int(&mut self, path: &str, v: &Value) -> Option<i64> {
        match v {
            Value::Integer(i) => Some(*i),
            other => {
                self.issue(
                    path,
                    format!("expected an integer, found {}", type_name(other)),
                );
                None
            }
        }
    }

    fn usize_value(&mut self, path: &str, v: &Value) -> Option<usize> {
        let i = self.int(path, v)?;
        match usize::try_from(i) {
            Ok(u) => Some(u),
            Err(_) => {
                self.issue(path, format!("must be a nonnegative integer, found {i}"));
                None
            }
        }
    }

    fn usize_opt(&mut self, node: &mut Node, key: &str) -> Option<usize> {
        let path = node.key(key);
        let v = self.raw(node, key)?;
        self.usize_value(&path, v)
    }

    fn usize_or(&mut self, node: &mut Node, key: &str, default: usize) -> usize {
        self.usize_opt(node, key).unwrap_or(default)
    }

    fn usize_req(&mut self, node: &mut Node, key: &str) -> Option<usize> {
        if node.table.is_some_and(|t| !t.contains_key(key)) {
            self.issue(node.key(key), "required key is missing");
        }
        self.usize_opt(node, key)
    }

    fn string_opt(&mut self, node: &mut Node, key: &str) -> Option<String> {
        let path = node.key(key);
        match self.raw(node, key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.issue(
                    path,
                    format!("expected a string, found {}", type_name(other)),
                );
                None
            }
        }
    }

    fn choice<T: Copy>(
        &mut self,
        node: &mut Node,
        key: &str,
        options: &[(&str, T)],
        default: Option<T>,
    ) -> Option<T> {
        let path = node.key(key);
        let Some(s) = self.string_opt(node, key) else {
            if default.is_none() && node.table.is_some_and(|t| !t.contains_key(key)) {
                self.issue(&path, "required key is missing");
            }
            return default;
        };
        match options.iter().find(|(n, _)| *n == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.issue(
                    path,
                    format!("unknown value {s:?}; expected one of {}", names.join(", ")),
                );
                None
            }
        }
    }

    fn list_values<'a>(
        &mut self,
        node: &mut Node<'a>,
        key: &str,
    ) -> Option<(String, &'a Vec<Value>)> {
        let path = node.key(key);
        match self.raw(node, key)? {
            Value::Array(a) => Some((path, a)),
            other => {
                self.issue(
                    path,
                    format!("expected an array, found {}", type_name(other)),
                );
                None
            }
        }
    }

    fn f64_list_inner(&mut self, path: &str, a: &[Value], allow_inf: bool) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(a.len());
        let mut ok = true;
        for (k, v) in a.iter().enumerate() {
            match self.number(&format!("{path}[{k}]"), v, allow_inf) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn f64_list(&mut self, node: &mut Node, key: &str, allow_inf: bool) -> Option<Vec<f64>> {
        let (path, a) = self.list_values(node, key)?;
        self.f64_list_inner(&path, a, allow_inf)
    }

    fn f64_matrix(&mut self, node: &mut Node, key: &str) -> Option<Vec<Vec<f64>>> {
        let (path, a) = self.list_values(node, key)?;
        let mut out = Vec::with_capacity(a.len());
        let mut ok = true;
        for (k, row) in a.iter().enumerate() {
            let rp = format!("{path}[{k}]");
            match row {
                Value::Array(r) => match self.f64_list_inner(&rp, r, false) {
                    Some(v) => out.push(v),
                    None => ok = false,
                },
                other => {
                    self.issue(rp, format!("expected an array, found {}", type_name(other)));
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn usize_list(&mut self, node: &mut Node, key: &str) -> Option<Vec<usize>> {
        let (path, a) = self.list_values(node, key)?;
        let mut out = Vec::with_capacity(a.len());
        let mut ok = true;
        for (k, v) in a.iter().enumerate() {
            match self.usize_value(&format!("{path}[{k}]"), v) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn table<'a>(&mut self, node: &mut Node<'a>, key: &str) -> Node<'a> {
        let path = node.key(key);
        match self.raw(node, key) {
            Some(Value::Table(t)) => Node {
                path,
                table: Some(t),
                seen: BTreeSet::new(),
            },
            Some(other) => {
                self.issue(
                    &path,
                    format!("expected a table, found {}", type_name(other)),
                );
                Node::missing(path)
            }
            None => Node::missing(path),
        }
    }

    fn table_list<'a>(&mut self, node: &mut Node<'a>, key: &str) -> Vec<Node<'a>> {
        let Some((path, a)) = self.list_values(node, key) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (k, v) in a.iter().enumerate() {
            let p = format!("{path}[{k}]");
            match v {
                Value::Table(t) => out.push(Node {
                    path: p,
                    table: Some(t),
                    seen: BTreeSet::new(),
                }),
                other => self.issue(p, format!("expected a table, found {}", type_name(other))),
            }
        }
        out
    }

    fn finish(&mut self, node: Node) {
        if let Some(t) = node.table {
            for k in t.keys() {
                if !node.seen.contains(k) {
                    self.issue(node.key(k), "unknown key");
                }
            }
        }
    }
}

const DEFAULT_TOL: f64 = 1e-10;
const DEFAULT_MAX_ITER: usize = 10_000;

fn read_grid(r: &mut Reader, root: &mut Node) -> GridConfig {
    let mut n = r.table(root, "grid");
    let g = GridConfig {
        horizon: r.f64_or(&mut n, "horizon", 1.0),
        steps: r.usize_or(&mut n, "steps", 256),
        alpha: r.f64_or(&mut n, "alpha", 0.75),
    };
    r.finish(n);
    g
}

fn read_noise(r: &mut Reader, root: &mut Node) -> NoiseConfig {
    let mut n = r.table(root, "noise");
    let dim = r.usize_or(&mut n, "dim", 1);
    let seed = r.usize_or(&mut n, "seed", 0) as u64;
    let max_jump = r.f64_or(&mut n, "max_jump", 1.0);
    let mut atoms = Vec::new();
    for mut a in r.table_list(&mut n, "atoms") {
        let mark = r.f64_list(&mut a, "mark", false);
        let weight = r.f64_req(&mut a, "weight");
        if a.table.is_some_and(|t| !t.contains_key("mark")) {
            r.issue(a.key("mark"), "required key is missing");
        }
        if let (Some(mark), Some(weight)) = (mark, weight) {
            atoms.push(AtomConfig { mark, weight });
        }
        r.finish(a);
    }
    r.finish(n);
    NoiseConfig {
        dim,
        seed,
        max_jump,
        atoms,
    }
}

fn read_vi(r: &mut Reader, root: &mut Node) -> ViConfig {
    let mut n = r.table(root, "vi");
    let v = ViConfig {
        c_bar: r.f64_opt(&mut n, "c_bar"),
        l_f: r.f64_opt(&mut n, "l_f"),
        rho: r.f64_opt(&mut n, "rho"),
        tol: r.f64_or(&mut n, "tol", DEFAULT_TOL),
        max_iter: r.usize_or(&mut n, "max_iter", DEFAULT_MAX_ITER),
    };
    r.finish(n);
    v
}

const SET_KINDS: [(&str, u8); 6] = [
    ("box", 0),
    ("orthant", 1),
    ("ball", 2),
    ("halfspaces", 3),
    ("transport", 4),
    ("product", 5),
];

fn read_set_node(r: &mut Reader, mut n: Node) -> Option<SetConfig> {
    let kind = r.choice(&mut n, "kind", &SET_KINDS, None);
    let out = match kind? {
        0 => {
            let lo = r.f64_list(&mut n, "lo", true);
            let hi = r.f64_list(&mut n, "hi", true);
            Some(SetConfig::Box { lo: lo?, hi: hi? })
        }
        1 => r
            .usize_req(&mut n, "dim")
            .map(|dim| SetConfig::Orthant { dim }),
        2 => {
            let center = r.f64_list(&mut n, "center", false);
            let radius = r.f64_req(&mut n, "radius");
            Some(SetConfig::Ball {
                center: center?,
                radius: radius?,
            })
        }
        3 => {
            let normals = r.f64_matrix(&mut n, "normals");
            let offsets = r.f64_list(&mut n, "offsets", false);
            let interior = r.f64_list(&mut n, "interior", false);
            Some(SetConfig::Halfspaces {
                normals: normals?,
                offsets: offsets?,
                interior: interior?,
            })
        }
        4 => {
            let m = r.usize_req(&mut n, "m");
            let nn = r.usize_req(&mut n, "n");
            let capacity = r.f64_opt(&mut n, "capacity");
            Some(SetConfig::Transport {
                m: m?,
                n: nn?,
                capacity,
            })
        }
        _ => {
            let factors: Vec<Option<SetConfig>> = r
                .table_list(&mut n, "factors")
                .into_iter()
                .map(|f| read_set_node(r, f))
                .collect();
            factors
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .map(|factors| SetConfig::Product { factors })
        }
    };
    for key in [
        "lo", "hi", "dim", "center", "radius", "normals", "offsets", "interior", "m", "n",
        "capacity", "factors",
    ] {
        if n.table.is_some_and(|t| t.contains_key(key)) && !n.seen.contains(key) {
            r.issue(
                n.key(key),
                format!(
                    "not a parameter of set kind {:?}",
                    SET_KINDS[kind? as usize].0
                ),
            );
            n.seen.insert(key.to_string());
        }
    }
    r.finish(n);
    out
}

fn read_model(r: &mut Reader, root: &mut Node) -> Option<ModelConfig> {
    let mut n = r.table(root, "model");
    if !n.present() {
        return None;
    }
    let name = r.string_opt(&mut n, "name");
    if name.is_none() && n.table.is_some_and(|t| !t.contains_key("name")) {
        r.issue(n.key("name"), "required key is missing");
    }
    let state_dim = r.usize_req(&mut n, "state_dim");
    let p0 = r.f64_list(&mut n, "p0", false);
    let mut get = |k: &str, d: f64| r.f64_or(&mut n, k, d);
    let (drift0, drift_x, drift_u) = (get("drift0", 0.0), get("drift_x", 0.0), get("drift_u", 0.0));
    let (frac0, frac_x, vol0, vol_x) = (
        get("frac0", 0.0),
        get("frac_x", 0.0),
        get("vol0", 0.0),
        get("vol_x", 0.0),
    );
    let (jump0, jump_x) = (get("jump0", 0.0), get("jump_x", 0.0));
    let (gain, target, field_x) = (get("gain", 1.0), get("target", 0.0), get("field_x", 0.0));
    r.finish(n);
    let state_dim = state_dim?;
    Some(ModelConfig {
        name: name?,
        state_dim,
        p0: p0.unwrap_or_else(|| vec![0.0; state_dim]),
        drift0,
        drift_x,
        drift_u,
        frac0,
        frac_x,
        vol0,
        vol_x,
        jump0,
        jump_x,
        gain,
        target,
        field_x,
    })
}

fn read_shift(r: &mut Reader, parent: &mut Node) -> ModelShift {
    let mut n = r.table(parent, "lambda_shift");
    let s = ModelShift {
        drift0: r.f64_or(&mut n, "drift0", 0.0),
        frac0: r.f64_or(&mut n, "frac0", 0.0),
        vol0: r.f64_or(&mut n, "vol0", 0.0),
        target: r.f64_or(&mut n, "target", 0.0),
    };
    r.finish(n);
    s
}

fn read_perturbation(r: &mut Reader, root: &mut Node) -> Option<PerturbationConfig> {
    let mut n = r.table(root, "perturbation");
    if !n.present() {
        return None;
    }
    let m_list = r.usize_list(&mut n, "m_list").unwrap_or_else(|| vec![1]);
    let n_list = r.usize_list(&mut n, "n_list").unwrap_or_else(|| vec![1]);
    let sequence = r
        .choice(
            &mut n,
            "sequence",
            &[
                ("harmonic", SequenceKind::Harmonic),
                ("dyadic", SequenceKind::Dyadic),
            ],
            Some(SequenceKind::Harmonic),
        )
        .unwrap_or(SequenceKind::Harmonic);
    let lambda_shift = read_shift(r, &mut n);
    let mu_scale = r.f64_or(&mut n, "mu_scale", 1.0);
    let probes = if n.table.is_some_and(|t| t.contains_key("probes")) {
        r.f64_matrix(&mut n, "probes").unwrap_or_default()
    } else {
        Vec::new()
    };
    r.finish(n);
    Some(PerturbationConfig {
        m_list,
        n_list,
        sequence,
        lambda_shift,
        mu_scale,
        probes,
    })
}

fn read_dynamics(r: &mut Reader, parent: &mut Node, key: &str) -> MarketDynamics {
    let mut n = r.table(parent, key);
    let d = MarketDynamics {
        reversion: r.f64_or(&mut n, "reversion", 0.0),
        level: r.f64_or(&mut n, "level", 0.0),
        flow_impact: r.f64_or(&mut n, "flow_impact", 0.0),
        frac: r.f64_or(&mut n, "frac", 0.0),
        vol: r.f64_or(&mut n, "vol", 0.0),
        jump_gain: r.f64_or(&mut n, "jump_gain", 0.0),
    };
    r.finish(n);
    d
}

fn read_markets(r: &mut Reader, root: &mut Node) -> (Option<MarketsConfig>, Option<CostConfig>) {
    let mut n = r.table(root, "markets");
    let markets = if n.present() {
        let m = r.usize_req(&mut n, "m");
        let nn = r.usize_req(&mut n, "n");
        let formulation = r.choice(
            &mut n,
            "formulation",
            &[
                ("reduced", SpepFormulation::Reduced),
                ("full", SpepFormulation::Full),
            ],
            Some(SpepFormulation::Reduced),
        );
        let p0 = r.f64_list(&mut n, "p0", false);
        let q0 = r.f64_list(&mut n, "q0", false);
        let tol = r.f64_or(&mut n, "tol", 1e-6);
        let supply = read_dynamics(r, &mut n, "supply");
        let demand = read_dynamics(r, &mut n, "demand");
        r.finish(n);
        match (m, nn, formulation) {
            (Some(m), Some(nn), Some(formulation)) => Some(MarketsConfig {
                m,
                n: nn,
                formulation,
                p0: p0.unwrap_or_else(|| vec![0.0; m]),
                q0: q0.unwrap_or_else(|| vec![0.0; nn]),
                tol,
                supply,
                demand,
            }),
            _ => None,
        }
    } else {
        None
    };
    let mut c = r.table(root, "cost");
    let cost = if c.present() {
        let gamma = r.f64_list(&mut c, "gamma", false);
        let c0 = r.f64_list(&mut c, "c0", false);
        if c.table.is_some_and(|t| !t.contains_key("gamma")) {
            r.issue(c.key("gamma"), "required key is missing");
        }
        let len = gamma.as_ref().map_or(0, Vec::len);
        r.finish(c);
        gamma.map(|gamma| CostConfig {
            gamma,
            c0: c0.unwrap_or_else(|| vec![0.0; len]),
        })
    } else {
        None
    };
    (markets, cost)
}

fn read_game(r: &mut Reader, root: &mut Node) -> Option<GameConfig> {
    let mut n = r.table(root, "game");
    if !n.present() {
        return None;
    }
    let agents = r.usize_req(&mut n, "agents");
    let p = agents.unwrap_or(0);
    let target = r.f64_list(&mut n, "target", false);
    let weight = r
        .f64_list(&mut n, "weight", false)
        .unwrap_or_else(|| vec![1.0; p]);
    let boxes = r.f64_matrix(&mut n, "box");
    let coupling = r
        .f64_matrix(&mut n, "coupling")
        .unwrap_or_else(|| vec![vec![0.0; p]; p]);
    let state_gain = r
        .f64_list(&mut n, "state_gain", false)
        .unwrap_or_else(|| vec![0.0; p]);
    let p0 = r
        .f64_list(&mut n, "p0", false)
        .unwrap_or_else(|| vec![0.0; p]);
    let deviations = r.usize_or(&mut n, "deviations", 50);
    let tol = r.f64_or(&mut n, "tol", 1e-8);
    let mut d = r.table(&mut n, "dynamics");
    let dynamics = AgentDynamics {
        drift0: r.f64_or(&mut d, "drift0", 0.0),
        drift_x: r.f64_or(&mut d, "drift_x", 0.0),
        drift_u: r.f64_or(&mut d, "drift_u", 0.0),
        frac: r.f64_or(&mut d, "frac", 0.0),
        vol: r.f64_or(&mut d, "vol", 0.0),
        jump_gain: r.f64_or(&mut d, "jump_gain", 0.0),
    };
    r.finish(d);
    for key in ["target", "box"] {
        if n.table.is_some_and(|t| !t.contains_key(key)) {
            r.issue(n.key(key), "required key is missing");
        }
    }
    r.finish(n);
    Some(GameConfig {
        agents: agents?,
        target: target?,
        weight,
        boxes: boxes?,
        coupling,
        state_gain,
        p0,
        deviations,
        tol,
        dynamics,
    })
}

fn read_sanity(r: &mut Reader, root: &mut Node) -> Option<SanityConfig> {
    let mut n = r.table(root, "sanity");
    if !n.present() {
        return None;
    }
    let check = r.choice(
        &mut n,
        "check",
        &[
            ("ito", SanityCheck::Ito),
            ("doob", SanityCheck::Doob),
            ("jump", SanityCheck::Jump),
        ],
        None,
    );
    let integrand = r.choice(
        &mut n,
        "integrand",
        &[
            ("one", Integrand::One),
            ("t", Integrand::T),
            ("zero", Integrand::Zero),
        ],
        Some(Integrand::One),
    );
    let p0 = r.f64_or(&mut n, "p0", 0.0);
    r.finish(n);
    Some(SanityConfig {
        check: check?,
        integrand: integrand?,
        p0,
    })
}

/// Parses and validates a scenario document, filling defaults (including
/// `vi.rho = C / L^2` when absent).
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![ConfigIssue {
            path: "<document>".into(),
            message: e.message().to_string(),
        }])
    })?;
    let mut r = Reader::default();
    let mut root = Node::root(&table);
    let kind = r.choice(&mut root, "kind", &Kind::ALL, None);
    if let Some(kind) = kind {
        for key in table.keys() {
            if key != "kind"
                && !kind.sections().contains(&key.as_str())
                && Kind::ALL
                    .iter()
                    .any(|(_, k)| k.sections().contains(&key.as_str()))
            {
                r.issue(
                    key.clone(),
                    format!("section is not used by kind {:?}", kind.name()),
                );
            }
        }
    }
    let grid = read_grid(&mut r, &mut root);
    let noise = read_noise(&mut r, &mut root);
    let vi = read_vi(&mut r, &mut root);
    let mut mcn = r.table(&mut root, "mc");
    let mc = McConfig {
        paths: r.usize_or(&mut mcn, "paths", 100),
    };
    r.finish(mcn);
    let set_node = r.table(&mut root, "set");
    let set = if set_node.present() {
        read_set_node(&mut r, set_node)
    } else {
        None
    };
    let model = read_model(&mut r, &mut root);
    let perturbation = read_perturbation(&mut r, &mut root);
    let (markets, cost) = read_markets(&mut r, &mut root);
    let game = read_game(&mut r, &mut root);
    let sanity = read_sanity(&mut r, &mut root);
    let mut on = r.table(&mut root, "output");
    let output = OutputConfig {
        csv: r.string_opt(&mut on, "csv"),
        json: r.string_opt(&mut on, "json"),
    };
    r.finish(on);
    r.finish(root);

    let Some(kind) = kind else {
        return Err(ConfigErrors(r.issues));
    };
    let mut cfg = ScenarioConfig {
        kind,
        grid,
        noise,
        vi,
        mc,
        set,
        model,
        perturbation,
        markets,
        cost,
        game,
        sanity,
        output,
    };
    let mut issues = r.issues;
    match cfg.validate() {
        Ok(()) if issues.is_empty() => Ok(cfg),
        Ok(()) => Err(ConfigErrors(issues)),
        Err(ConfigErrors(more)) => {
            // structural problems usually explain the semantic ones, list them first
            for m in more {
                if !issues.iter().any(|i| i.path == m.path) {
                    issues.push(m);
                }
            }
            Err(ConfigErrors(issues))
        }
    }
}

// ---------------------------------------------------------------------------
// validation

impl ScenarioConfig {
    /// Semantic checks; fills `vi.rho` with the optimal step when absent.
    pub fn validate(&mut self) -> Result<(), ConfigErrors> {
        let mut issues: Vec<ConfigIssue> = Vec::new();
        let mut bad = |path: &str, msg: String| {
            issues.push(ConfigIssue {
                path: path.into(),
                message: msg,
            })
        };
        let kind = self.kind;
        let needs = |s: &str| kind.sections().contains(&s);

        if needs("grid") {
            let g = &self.grid;
            if !(g.alpha > 0.5 && g.alpha < 1.0) {
                bad(
                    "grid.alpha",
                    format!("{} is outside the open interval (0.5, 1)", g.alpha),
                );
            }
            if !(g.horizon > 0.0) {
                bad(
                    "grid.horizon",
                    format!("must be positive, found {}", g.horizon),
                );
            }
            if g.steps == 0 {
                bad("grid.steps", "must be at least 1".into());
            }
        }
        if needs("mc") {
            let min = if kind == Kind::Sanity { 100 } else { 1 };
            if self.mc.paths < min {
                bad(
                    "mc.paths",
                    format!("must be at least {min}, found {}", self.mc.paths),
                );
            }
        }
        if needs("vi") {
            if !(self.vi.tol > 0.0) {
                bad("vi.tol", format!("must be positive, found {}", self.vi.tol));
            }
            if self.vi.max_iter == 0 {
                bad("vi.max_iter", "must be at least 1".into());
            }
        }

        let jumps = if needs("noise") {
            let atoms = self
                .noise
                .atoms
                .iter()
                .map(|a| JumpAtom {
                    mark: a.mark.clone(),
                    weight: a.weight,
                })
                .collect();
            match JumpMeasure::new(atoms, self.noise.max_jump) {
                Ok(j) => Some(j),
                Err(e) => {
                    bad("noise.atoms", e.to_string());
                    None
                }
            }
        } else {
            None
        };
        let mark_dim = jumps.as_ref().and_then(JumpMeasure::mark_dim);
        let check_marks = |want: usize, what: &str, bad: &mut dyn FnMut(&str, String)| {
            if let Some(d) = mark_dim {
                if d != want {
                    bad(
                        "noise.atoms",
                        format!("marks have dimension {d}, {what} needs {want}"),
                    );
                }
            }
        };

        let mut set = None;
        if needs("set") {
            match &self.set {
                None => bad("set", "section is required for this kind".into()),
                Some(s) => match s.build() {
                    Ok(k) => set = Some(k),
                    Err(e) => bad("set", e),
                },
            }
        }

        // moduli of the VI, for the step-size check
        let mut moduli: Option<(f64, f64)> = None;

        if needs("model") {
            match &self.model {
                None => bad("model", "section is required for this kind".into()),
                Some(mc) => {
                    let names: Vec<&str> = MODEL_NAMES.iter().map(|(n, _)| *n).collect();
                    if !names.contains(&mc.name.as_str()) {
                        bad(
                            "model.name",
                            format!(
                                "unknown model {:?}; registry has {}",
                                mc.name,
                                names.join(", ")
                            ),
                        );
                    }
                    if mc.state_dim == 0 {
                        bad("model.state_dim", "must be at least 1".into());
                    }
                    if mc.p0.len() != mc.state_dim {
                        bad(
                            "model.p0",
                            format!("has {} entries, state_dim is {}", mc.p0.len(), mc.state_dim),
                        );
                    }
                    if !(mc.gain > 0.0) {
                        bad("model.gain", format!("must be positive, found {}", mc.gain));
                    }
                    check_marks(mc.state_dim, "the model state", &mut bad);
                    if let (Some(model), Some(k)) = (mc.model(self.noise.dim), &set) {
                        if mc.state_dim > 0 && mc.gain > 0.0 {
                            moduli = Some(model.moduli(k.dim()));
                        }
                    }
                }
            }
        }

        if needs("perturbation") {
            match &self.perturbation {
                None => bad("perturbation", "section is required for this kind".into()),
                Some(p) => {
                    for (key, list) in [("m_list", &p.m_list), ("n_list", &p.n_list)] {
                        if kind == Kind::Projection && key == "m_list" {
                            continue;
                        }
                        if list.is_empty() || list[0] == 0 || list.windows(2).any(|w| w[0] >= w[1])
                        {
                            bad(
                                &format!("perturbation.{key}"),
                                "must be a nonempty strictly ascending list of positive indices"
                                    .into(),
                            );
                        }
                    }
                    if !(p.mu_scale >= 0.0) {
                        bad(
                            "perturbation.mu_scale",
                            format!("must be nonnegative, found {}", p.mu_scale),
                        );
                    }
                    if kind == Kind::Projection && p.probes.is_empty() {
                        bad(
                            "perturbation.probes",
                            "projection runs need at least one probe".into(),
                        );
                    }
                    if let Some(k) = &set {
                        if p.probes.iter().any(|v| v.len() != k.dim()) {
                            bad(
                                "perturbation.probes",
                                format!("every probe needs {} entries", k.dim()),
                            );
                        }
                        let fam = SetFamily::scaled(k.clone(), p.sequence.sequence(p.mu_scale));
                        if let Err(e) = fam {
                            bad("set", format!("cannot form the scaled family: {e}"));
                        }
                    }
                }
            }
        }

        if needs("markets") {
            match (&self.markets, &self.cost) {
                (None, _) => bad("markets", "section is required for this kind".into()),
                (_, None) => bad("cost", "section is required for this kind".into()),
                (Some(mk), Some(cost)) => {
                    let spec = SpatialMarketSpec {
                        m: mk.m,
                        n: mk.n,
                        gamma: cost.gamma.clone(),
                        c0: cost.c0.clone(),
                        supply: mk.supply,
                        demand: mk.demand,
                        p0: mk.p0.clone(),
                        q0: mk.q0.clone(),
                        jumps: jumps.clone().unwrap_or_else(JumpMeasure::empty),
                        formulation: mk.formulation,
                    };
                    check_marks(mk.m + mk.n, "the price state", &mut bad);
                    match spec.validate() {
                        Ok(()) => moduli = Some(spec.moduli()),
                        Err(e) => bad("markets", e.to_string()),
                    }
                    if !(mk.tol > 0.0) {
                        bad("markets.tol", "must be positive".into());
                    }
                }
            }
        }

        if needs("game") {
            match &self.game {
                None => bad("game", "section is required for this kind".into()),
                Some(g) => {
                    let p = g.agents;
                    if p == 0 {
                        bad("game.agents", "must be at least 1".into());
                    }
                    for (key, len) in [
                        ("target", g.target.len()),
                        ("weight", g.weight.len()),
                        ("box", g.boxes.len()),
                        ("coupling", g.coupling.len()),
                        ("state_gain", g.state_gain.len()),
                        ("p0", g.p0.len()),
                    ] {
                        if len != p {
                            bad(
                                &format!("game.{key}"),
                                format!("has {len} entries for {p} agents"),
                            );
                        }
                    }
                    if g.boxes.iter().any(|b| b.len() != 2) {
                        bad("game.box", "every box is a pair [lo, hi]".into());
                    }
                    if g.coupling.iter().any(|r| r.len() != p) {
                        bad("game.coupling", format!("rows need {p} entries"));
                    }
                    if g.deviations == 0 {
                        bad("game.deviations", "must be at least 1".into());
                    }
                    check_marks(p, "the agent states", &mut bad);
                    let shapes_ok = issues_clean_for_game(g);
                    if shapes_ok {
                        match g
                            .game()
                            .spec(jumps.clone().unwrap_or_else(JumpMeasure::empty))
                        {
                            Ok(spec) => match build_game(&spec) {
                                Ok(_) => moduli = Some((spec.c_bar, spec.l_f)),
                                Err(e) => bad("game", e.to_string()),
                            },
                            Err(e) => bad("game", e.to_string()),
                        }
                    }
                }
            }
        }

        if needs("sanity") {
            match &self.sanity {
                None => bad("sanity", "section is required for this kind".into()),
                Some(s) => {
                    if s.check == SanityCheck::Jump {
                        check_marks(1, "the scalar jump check", &mut bad);
                    }
                }
            }
        }

        if needs("vi") {
            if let Some((c_model, l_model)) = moduli {
                let c = self.vi.c_bar.unwrap_or(c_model);
                let l = self.vi.l_f.unwrap_or(l_model);
                let mut consistent = true;
                if c > c_model * (1.0 + 1e-12) || !(c > 0.0) {
                    bad(
                        "vi.c_bar",
                        format!("declared {c} but the mapping only guarantees {c_model}"),
                    );
                    consistent = false;
                }
                if l < l_model * (1.0 - 1e-12) || l < c {
                    bad(
                        "vi.l_f",
                        format!(
                            "declared {l} but the mapping needs at least {}",
                            l_model.max(c)
                        ),
                    );
                    consistent = false;
                }
                if consistent {
                    let upper = rho_upper(c, l);
                    let best = optimal_rho(c, l).ok();
                    match self.vi.rho {
                        Some(rho) if kind == Kind::Spep && Some(rho) != best => bad(
                            "vi.rho",
                            format!(
                                "market runs use the optimal step C/L^2 = {}",
                                best.unwrap_or(f64::NAN)
                            ),
                        ),
                        Some(rho) if !(rho > 0.0 && rho < upper) => bad(
                            "vi.rho",
                            format!("{rho} is outside the open interval (0, {upper})"),
                        ),
                        Some(_) => {}
                        None => self.vi.rho = best,
                    }
                    self.vi.c_bar = Some(c);
                    self.vi.l_f = Some(l);
                }
            }
        }

        if let (true, Some(g)) = (needs("grid"), Some(&self.grid)) {
            if TimeGrid::new(g.horizon, g.steps.max(1), g.alpha).is_err()
                && issues.iter().all(|i| !i.path.starts_with("grid"))
            {
                issues.push(ConfigIssue {
                    path: "grid".into(),
                    message: "invalid time grid".into(),
                });
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(issues))
        }
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.horizon, self.grid.steps, self.grid.alpha).expect("validated grid")
    }

    pub fn jump_measure(&self) -> JumpMeasure {
        let atoms = self
            .noise
            .atoms
            .iter()
            .map(|a| JumpAtom {
                mark: a.mark.clone(),
                weight: a.weight,
            })
            .collect();
        JumpMeasure::new(atoms, self.noise.max_jump).expect("validated measure")
    }

    /// The document form of the validated config.
    pub fn to_toml(&self) -> String {
        let mut doc = toml::Table::try_from(self).expect("config serializes");
        doc.retain(|k, _| k == "kind" || self.kind.sections().contains(&k));
        toml::to_string(&doc).expect("config serializes")
    }
}

fn issues_clean_for_game(g: &GameConfig) -> bool {
    let p = g.agents;
    p > 0
        && [
            g.target.len(),
            g.weight.len(),
            g.boxes.len(),
            g.coupling.len(),
            g.state_gain.len(),
            g.p0.len(),
        ]
        .iter()
        .all(|&l| l == p)
        && g.boxes.iter().all(|b| b.len() == 2)
        && g.coupling.iter().all(|r| r.len() == p)
}
