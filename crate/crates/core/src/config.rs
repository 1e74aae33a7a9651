//! Run configuration and its TOML grammar.
//!
//! Every section and key is optional except `[grid]`; omitted keys take the
//! defaults listed in the book's configuration chapter. Unknown sections or
//! keys are errors.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Result, ZkError};
use crate::geometry::{sample, Field, Grid, GridSpec};
use crate::model::{
    initial_data, manufactured_forcing, ForcingSpec, ManufacturedSolution, ModelParams, ANALYTIC_PRESETS,
    INITIAL_PRESETS,
};
use crate::stepper::{Extrapolation, GuardNorm, StepConfig};

/// `estimate` runs enforce the `epsilon <= 1/4` hypothesis of the a priori
/// estimates; `simulate` runs do not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Simulate,
    Estimate,
}

/// What to do when the initial data fail the compatibility check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatibilityPolicy {
    Off,
    Warn,
    Enforce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    /// `zero`, `poly-bump`, `two-bump`, or `exact` (the manufactured
    /// solution at `t = 0`).
    pub preset: String,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub compatibility: f64,
    pub identity: f64,
    pub gronwall_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            compatibility: 1e-6,
            identity: 1e-3,
            gronwall_slack: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpConfig {
    pub n: usize,
    /// Strictly decreasing, all positive.
    pub epsilons: Vec<f64>,
    /// Constant right-hand side `g`.
    pub g: f64,
    pub nonlinear: bool,
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig {
            n: 2048,
            epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            g: 6.0,
            nonlinear: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub xtilde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsConfig {
    pub nx: Vec<usize>,
    pub epsilons: Vec<f64>,
    /// `dt = dt_per_h * h`.
    pub dt_per_h: f64,
}

impl Default for MmsConfig {
    fn default() -> Self {
        MmsConfig {
            nx: vec![32, 64, 128],
            epsilons: vec![0.0, 0.01],
            dt_per_h: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: RunMode,
    pub grid: GridSpec,
    pub params: ModelParams,
    /// Manufactured solution behind a `manufactured` forcing, if any.
    pub exact: Option<ManufacturedSolution>,
    pub step: StepConfig,
    pub t_end: f64,
    pub initial: InitialData,
    pub record_interval: f64,
    /// 0 disables snapshots.
    pub snapshot_interval: f64,
    pub output_dir: Option<PathBuf>,
    /// Keep every accepted state in memory (needed for balance residuals).
    pub keep_states: bool,
    pub tolerances: Tolerances,
    pub c_prime: f64,
    /// 0 disables the guard.
    pub guard_factor: f64,
    pub guard_norm: GuardNorm,
    pub compatibility: CompatibilityPolicy,
    pub sweep: SweepConfig,
    pub bvp: BvpConfig,
    pub verify: VerifyConfig,
    pub mms: MmsConfig,
}

impl RunConfig {
    /// Defaults around a grid.
    pub fn new(grid: GridSpec, params: ModelParams) -> Self {
        RunConfig {
            mode: RunMode::Simulate,
            grid,
            params,
            exact: None,
            step: StepConfig::default(),
            t_end: 0.1,
            initial: InitialData {
                preset: "zero".into(),
                amplitude: 1.0,
            },
            record_interval: 0.01,
            snapshot_interval: 0.0,
            output_dir: None,
            keep_states: false,
            tolerances: Tolerances::default(),
            c_prime: 1.0,
            guard_factor: 0.0,
            guard_norm: GuardNorm::Grad,
            compatibility: CompatibilityPolicy::Warn,
            sweep: SweepConfig {
                epsilons: vec![1e-2, 1e-3, 1e-4],
            },
            bvp: BvpConfig::default(),
            verify: VerifyConfig { xtilde: 0.5 },
            mms: MmsConfig::default(),
        }
    }

    /// Samples the configured initial data.
    pub fn initial_field(&self, grid: &Arc<Grid>) -> Result<Field> {
        let tag = self.params.bc_tag();
        if self.initial.preset == "exact" {
            let ex = self
                .exact
                .ok_or_else(|| ZkError::Config("initial preset \"exact\" needs a manufactured forcing".into()))?;
            let a = self.initial.amplitude;
            return Ok(sample(grid, |x, y, z| a * ex.eval(x, y, z, 0.0))?.with_tag(tag));
        }
        Ok(initial_data(&self.initial.preset, self.initial.amplitude, grid)?.with_tag(tag))
    }

    /// Semantic validation.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: ZkError| ZkError::Config(e.to_string());
        self.grid.validate().map_err(cfg)?;
        self.params.validate().map_err(cfg)?;
        self.step.validate().map_err(cfg)?;
        if self.mode == RunMode::Estimate && self.params.epsilon > 0.25 {
            return Err(ZkError::Config(format!(
                "epsilon = {} violates the hypothesis epsilon <= 1/4 required in estimate mode",
                self.params.epsilon
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(ZkError::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.record_interval > 0.0 && self.record_interval <= self.t_end) {
            return Err(ZkError::Config(format!(
                "record_interval must lie in (0, t_end], got {}",
                self.record_interval
            )));
        }
        if self.snapshot_interval < 0.0 {
            return Err(ZkError::Config("snapshot_interval must be >= 0".into()));
        }
        if self.initial.preset != "exact" && !INITIAL_PRESETS.contains(&self.initial.preset.as_str()) {
            return Err(ZkError::Config(format!(
                "unknown initial preset \"{}\"",
                self.initial.preset
            )));
        }
        if self.initial.preset == "exact" && self.exact.is_none() {
            return Err(ZkError::Config(
                "initial preset \"exact\" needs a manufactured forcing".into(),
            ));
        }
        if !(self.c_prime > 0.0) {
            return Err(ZkError::Config("c_prime must be > 0".into()));
        }
        if self.guard_factor < 0.0 {
            return Err(ZkError::Config("guard_factor must be >= 0".into()));
        }
        check_decreasing("sweep.epsilons", &self.sweep.epsilons, false)?;
        check_decreasing("bvp.epsilons", &self.bvp.epsilons, true)?;
        if self.bvp.n < 16 {
            return Err(ZkError::Config(format!("bvp.n must be >= 16, got {}", self.bvp.n)));
        }
        if !(self.verify.xtilde > 0.0 && self.verify.xtilde <= 1.0) {
            return Err(ZkError::Config("verify.xtilde must lie in (0, 1]".into()));
        }
        if self.mms.nx.len() < 2 {
            return Err(ZkError::Config("mms.nx needs at least two resolutions".into()));
        }
        Ok(())
    }
}

fn check_decreasing(name: &str, v: &[f64], positive: bool) -> Result<()> {
    if v.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ZkError::Config(format!("{name} must be strictly decreasing")));
    }
    if v.iter().any(|e| !(*e >= 0.0) || (positive && *e == 0.0)) {
        return Err(ZkError::Config(format!(
            "{name} entries must be {}",
            if positive { "> 0" } else { ">= 0" }
        )));
    }
    Ok(())
}

/// A TOML table whose keys must all be consumed.
struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'a str) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(ZkError::Config(format!("[{name}] must be a section"))),
        };
        Ok(Section {
            name,
            table,
            used: BTreeSet::new(),
        })
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn err(&self, key: &str, what: &str, v: &Value) -> ZkError {
        ZkError::Config(format!("{}.{key} must be {what}, got {v}", self.name))
    }

    fn f64(&mut self, key: &'a str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Float(x)) => Ok(*x),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(self.err(key, "a number", v)),
        }
    }

    fn usize(&mut self, key: &'a str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(self.err(key, "a non-negative integer", v)),
        }
    }

    fn bool(&mut self, key: &'a str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(self.err(key, "true or false", v)),
        }
    }

    fn string(&mut self, key: &'a str, default: &str) -> Result<String> {
        match self.raw(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(self.err(key, "a quoted string", v)),
        }
    }

    fn f64_list(&mut self, key: &'a str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(self.err(key, "a list of numbers", other)),
                })
                .collect(),
            Some(v) => Err(self.err(key, "a list of numbers", v)),
        }
    }

    fn usize_list(&mut self, key: &'a str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(self.err(key, "a list of non-negative integers", other)),
                })
                .collect(),
            Some(v) => Err(self.err(key, "a list of non-negative integers", v)),
        }
    }

    /// Rejects keys that were never asked for.
    fn finish(self) -> Result<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !self.used.contains(k.as_str())) {
                return Err(ZkError::Config(format!("unknown key `{k}` in [{}]", self.name)));
            }
        }
        Ok(())
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(key: &str, s: &str) -> Result<T> {
    use serde::de::{value::StrDeserializer, IntoDeserializer};
    let de: StrDeserializer<'_, serde::de::value::Error> = s.into_deserializer();
    T::deserialize(de).map_err(|_| ZkError::Config(format!("invalid value \"{s}\" for {key}")))
}

const SECTIONS: &[&str] = &[
    "run",
    "grid",
    "model",
    "forcing",
    "initial",
    "time",
    "output",
    "estimates",
    "tolerances",
    "sweep",
    "bvp",
    "verify",
    "mms",
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text.parse::<Table>().map_err(|e| ZkError::ConfigSyntax {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(ZkError::Config(format!("unknown section or key `{k}`")));
    }

    let mut run = Section::new(&root, "run")?;
    let mode: RunMode = parse_enum("run.mode", &run.string("mode", "simulate")?)?;
    run.finish()?;

    if !root.contains_key("grid") {
        return Err(ZkError::Config("missing [grid] section".into()));
    }
    let mut s = Section::new(&root, "grid")?;
    let d = s.usize("d", 1)?;
    let grid = GridSpec {
        d,
        nx: s.usize("nx", 64)?,
        ny: s.usize("ny", 16)?,
        nz: s.usize("nz", if d == 2 { 16 } else { 0 })?,
        transverse_bc: s
            .string("transverse_bc", "dirichlet")?
            .parse()
            .map_err(|e: ZkError| ZkError::Config(e.to_string()))?,
    };
    s.finish()?;

    let mut s = Section::new(&root, "model")?;
    let mut params = ModelParams::new(s.f64("c", 1.0)?, s.f64("epsilon", 0.0)?);
    params.nonlinear = s.bool("nonlinear", true)?;
    s.finish()?;

    let mut s = Section::new(&root, "forcing")?;
    let kind = s.string("kind", "zero")?;
    let mut exact = None;
    params.forcing = match kind.as_str() {
        "zero" => ForcingSpec::Zero,
        "analytic" => {
            let name = s.string("name", "decay-bump")?;
            if !ANALYTIC_PRESETS.contains(&name.as_str()) {
                return Err(ZkError::Config(format!("unknown analytic forcing preset \"{name}\"")));
            }
            ForcingSpec::Analytic {
                name,
                coefficients: s.f64_list("coefficients", &[1.0])?,
            }
        }
        "manufactured" => {
            let name = s.string("exact", "poly-decay")?;
            let amp = s.f64("amplitude", 1.0)?;
            let ex = ManufacturedSolution::preset(&name, amp, grid.d, grid.transverse_bc)
                .map_err(|e| ZkError::Config(e.to_string()))?;
            exact = Some(ex);
            manufactured_forcing(&ex, &params)
        }
        other => return Err(ZkError::Config(format!("unknown forcing kind \"{other}\""))),
    };
    s.finish()?;

    let mut s = Section::new(&root, "initial")?;
    let initial = InitialData {
        preset: s.string("preset", "zero")?,
        amplitude: s.f64("amplitude", 1.0)?,
    };
    s.finish()?;

    let mut s = Section::new(&root, "time")?;
    let t_end = s.f64("t_end", 0.1)?;
    let step = StepConfig {
        theta: s.f64("theta", 0.5)?,
        cfl: s.f64("cfl", 1.0)?,
        dt_max: s.f64("dt_max", 1e-2)?,
        dt_min: s.f64("dt_min", 1e-8)?,
        extrapolation: parse_enum::<Extrapolation>("time.extrapolation", &s.string("extrapolation", "ab2")?)?,
    };
    s.finish()?;

    let mut s = Section::new(&root, "output")?;
    let record_interval = s.f64("record_interval", t_end / 10.0)?;
    let snapshot_interval = s.f64("snapshot_interval", 0.0)?;
    let dir = s.string("dir", "")?;
    let keep_states = s.bool("keep_states", false)?;
    s.finish()?;

    let mut s = Section::new(&root, "estimates")?;
    let c_prime = s.f64("c_prime", 1.0)?;
    let guard_factor = s.f64("guard_factor", 0.0)?;
    let guard_norm = parse_enum::<GuardNorm>("estimates.guard_norm", &s.string("guard_norm", "grad")?)?;
    let compatibility =
        parse_enum::<CompatibilityPolicy>("estimates.compatibility", &s.string("compatibility", "warn")?)?;
    s.finish()?;

    let mut s = Section::new(&root, "tolerances")?;
    let d = Tolerances::default();
    let tolerances = Tolerances {
        compatibility: s.f64("compatibility", d.compatibility)?,
        identity: s.f64("identity", d.identity)?,
        gronwall_slack: s.f64("gronwall_slack", d.gronwall_slack)?,
    };
    s.finish()?;

    let mut s = Section::new(&root, "sweep")?;
    let sweep = SweepConfig {
        epsilons: s.f64_list("epsilons", &[1e-2, 1e-3, 1e-4])?,
    };
    s.finish()?;

    let mut s = Section::new(&root, "bvp")?;
    let bd = BvpConfig::default();
    let bvp = BvpConfig {
        n: s.usize("n", bd.n)?,
        epsilons: s.f64_list("epsilons", &bd.epsilons)?,
        g: s.f64("g", bd.g)?,
        nonlinear: s.bool("nonlinear", bd.nonlinear)?,
    };
    s.finish()?;

    let mut s = Section::new(&root, "verify")?;
    let verify = VerifyConfig {
        xtilde: s.f64("xtilde", 0.5)?,
    };
    s.finish()?;

    let mut s = Section::new(&root, "mms")?;
    let md = MmsConfig::default();
    let mms = MmsConfig {
        nx: s.usize_list("nx", &md.nx)?,
        epsilons: s.f64_list("epsilons", &md.epsilons)?,
        dt_per_h: s.f64("dt_per_h", md.dt_per_h)?,
    };
    s.finish()?;

    let cfg = RunConfig {
        mode,
        grid,
        params,
        exact,
        step,
        t_end,
        initial,
        record_interval,
        snapshot_interval,
        output_dir: (!dir.is_empty()).then(|| PathBuf::from(dir)),
        keep_states,
        tolerances,
        c_prime,
        guard_factor,
        guard_norm,
        compatibility,
        sweep,
        bvp,
        verify,
        mms,
    };
    cfg.validate()?;
    Ok(cfg)
}
