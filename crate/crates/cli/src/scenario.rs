//! Scenario files: model, forcing, delay kernel and run parameters.
//!
//! Loading is strict. Unknown keys are rejected and every problem found is
//! reported, not only the first.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use delayou::modes::{dirichlet_modes, project_forcing};
use delayou::stationary::LagGrid;
use delayou::{Beta, DelayKernel, DelayOperator, ModeEntry, ModeSystem};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Dirichlet Laplacian on `[0, L]` truncated to `modes` eigenmodes.
    Dirichlet {
        length: f64,
        modes: usize,
        a1: DelayOperator,
        a2: DelayOperator,
    },
    /// Explicit `(mu, m1, m2, f)` per mode.
    Explicit { length: f64, entries: Vec<ModeEntry> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    FirstMode { amplitude: f64 },
    Constant { value: f64 },
    /// Samples of `f(x)` on a uniform grid over `[0, L]`.
    Table { samples: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub dt: f64,
    pub t_end: f64,
    pub paths: usize,
    pub seed: u64,
    pub lags: Option<LagGrid>,
    pub stationary_start: bool,
    pub burn_in: Option<f64>,
    pub re_window: Option<(f64, f64)>,
    pub im_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: Model,
    pub forcing: Option<Forcing>,
    pub kernel: DelayKernel,
    pub run: RunParams,
    pub out_dir: Option<PathBuf>,
    system: ModeSystem,
}

impl Scenario {
    pub fn system(&self) -> &ModeSystem {
        &self.system
    }
}

/// Every validation problem found in a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioErrors {
    pub source: String,
    pub errors: Vec<String>,
}

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid scenario {} ({} problems):", self.source, self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioErrors {}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioErrors> {
    let fail = |msg: String| ScenarioErrors {
        source: path.display().to_string(),
        errors: vec![msg],
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(format!("cannot read file: {e}")))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_scenario(&text, base, &stem).map_err(|mut e| {
        e.source = path.display().to_string();
        e
    })
}

/// Parses scenario JSON; `base` resolves relative file references.
pub fn parse_scenario(text: &str, base: &Path, default_name: &str) -> Result<Scenario, ScenarioErrors> {
    let root: Value = serde_json::from_str(text).map_err(|e| ScenarioErrors {
        source: "<json>".into(),
        errors: vec![format!("malformed JSON: {e}")],
    })?;
    let mut errs = Vec::new();
    let scenario = read_root(&root, base, default_name, &mut errs);
    match scenario {
        Some(s) if errs.is_empty() => Ok(s),
        _ => Err(ScenarioErrors {
            source: "<json>".into(),
            errors: errs,
        }),
    }
}

struct Obj<'a> {
    at: String,
    map: &'a Map<String, Value>,
    seen: Vec<&'static str>,
}

impl<'a> Obj<'a> {
    fn new(at: &str, v: &'a Value, errs: &mut Vec<String>) -> Option<Self> {
        match v.as_object() {
            Some(map) => Some(Self {
                at: at.to_string(),
                map,
                seen: Vec::new(),
            }),
            None => {
                errs.push(format!("{}: expected an object", display_at(at)));
                None
            }
        }
    }

    fn key(&self, k: &str) -> String {
        if self.at.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.at)
        }
    }

    fn get(&mut self, k: &'static str) -> Option<&'a Value> {
        self.seen.push(k);
        self.map.get(k).filter(|v| !v.is_null())
    }

    fn required(&mut self, k: &'static str, errs: &mut Vec<String>) -> Option<&'a Value> {
        let v = self.get(k);
        if v.is_none() {
            errs.push(format!("{}: missing required field", self.key(k)));
        }
        v
    }

    fn num(&mut self, k: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        let at = self.key(k);
        self.required(k, errs).and_then(|v| as_num(v, &at, errs))
    }

    fn opt_num(&mut self, k: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        let at = self.key(k);
        self.get(k).and_then(|v| as_num(v, &at, errs))
    }

    fn opt_count(&mut self, k: &'static str, errs: &mut Vec<String>) -> Option<u64> {
        let at = self.key(k);
        self.get(k).and_then(|v| {
            let n = v.as_u64();
            if n.is_none() {
                errs.push(format!("{at}: expected a nonnegative integer"));
            }
            n
        })
    }

    fn string(&mut self, k: &'static str, errs: &mut Vec<String>) -> Option<&'a str> {
        let at = self.key(k);
        self.required(k, errs).and_then(|v| as_str(v, &at, errs))
    }

    fn opt_string(&mut self, k: &'static str, errs: &mut Vec<String>) -> Option<&'a str> {
        let at = self.key(k);
        self.get(k).and_then(|v| as_str(v, &at, errs))
    }

    fn finish(self, errs: &mut Vec<String>) {
        for k in self.map.keys() {
            if !self.seen.contains(&k.as_str()) {
                errs.push(format!("{}: unknown field", self.key(k)));
            }
        }
    }
}

fn display_at(at: &str) -> &str {
    if at.is_empty() {
        "<root>"
    } else {
        at
    }
}

fn as_num(v: &Value, at: &str, errs: &mut Vec<String>) -> Option<f64> {
    let x = v.as_f64();
    if x.is_none() {
        errs.push(format!("{at}: expected a number"));
    }
    x
}

fn as_str<'a>(v: &'a Value, at: &str, errs: &mut Vec<String>) -> Option<&'a str> {
    let s = v.as_str();
    if s.is_none() {
        errs.push(format!("{at}: expected a string"));
    }
    s
}

fn num_list(v: &Value, at: &str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
    let Some(items) = v.as_array() else {
        errs.push(format!("{at}: expected an array of numbers"));
        return None;
    };
    let mut out = Vec::with_capacity(items.len());
    let mut ok = true;
    for (i, x) in items.iter().enumerate() {
        match x.as_f64() {
            Some(x) => out.push(x),
            None => {
                errs.push(format!("{at}[{i}]: expected a number"));
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

fn positive(x: Option<f64>, at: &str, errs: &mut Vec<String>) -> Option<f64> {
    match x {
        Some(x) if x > 0.0 && x.is_finite() => Some(x),
        Some(x) => {
            errs.push(format!("{at}: must be positive, got {x}"));
            None
        }
        None => None,
    }
}

/// Reads numbers separated by whitespace or commas.
fn read_numbers(path: &Path, at: &str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            errs.push(format!("{at}: cannot read {}: {e}", path.display()));
            return None;
        }
    };
    let mut out = Vec::new();
    for tok in text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
        match tok.parse::<f64>() {
            Ok(x) => out.push(x),
            Err(_) => {
                errs.push(format!("{at}: {} contains a non-number {tok:?}", path.display()));
                return None;
            }
        }
    }
    Some(out)
}

fn read_values_or_file(
    obj: &mut Obj<'_>,
    base: &Path,
    errs: &mut Vec<String>,
) -> Option<Vec<f64>> {
    let at_v = obj.key("values");
    let at_f = obj.key("file");
    let values = obj.get("values");
    let file = obj.opt_string("file", errs);
    match (values, file) {
        (Some(v), None) => num_list(v, &at_v, errs),
        (None, Some(f)) => read_numbers(&base.join(f), &at_f, errs),
        (Some(_), Some(_)) => {
            errs.push(format!("{at_v}: give either values or file, not both"));
            None
        }
        (None, None) => {
            errs.push(format!("{at_v}: missing required field (or {at_f})"));
            None
        }
    }
}

fn read_root(root: &Value, base: &Path, default_name: &str, errs: &mut Vec<String>) -> Option<Scenario> {
    let mut obj = Obj::new("", root, errs)?;
    let name = obj.opt_string("name", errs).unwrap_or(default_name).to_string();
    let model = obj.required("model", errs).and_then(|v| read_model(v, errs));
    let forcing_v = obj.get("forcing");
    let kernel = obj.required("kernel", errs).and_then(|v| read_kernel(v, base, errs));
    let run_v = obj.get("run");
    let out_dir = obj.get("outputs").and_then(|v| {
        let mut o = Obj::new("outputs", v, errs)?;
        let dir = o.opt_string("dir", errs).map(|d| base.join(d));
        o.finish(errs);
        dir
    });
    obj.finish(errs);

    let forcing = match (&model, forcing_v) {
        (Some(Model::Explicit { .. }), Some(_)) => {
            errs.push("forcing: not allowed with model.type = \"modes\"; give f per mode".into());
            None
        }
        (Some(Model::Dirichlet { .. }), None) => {
            errs.push("forcing: missing required field".into());
            None
        }
        (_, Some(v)) => read_forcing(v, base, errs),
        (_, None) => None,
    };
    let run = read_run(run_v, kernel.as_ref().map(|k| k.r()), errs);

    let (model, kernel, run) = (model?, kernel?, run?);
    let system = match build_system(&model, forcing.as_ref()) {
        Ok(s) => s,
        Err(e) => {
            errs.push(format!("model: {e}"));
            return None;
        }
    };
    Some(Scenario {
        name,
        model,
        forcing,
        kernel,
        run,
        out_dir,
        system,
    })
}

fn read_operator(
    obj: &mut Obj<'_>,
    key: &'static str,
    delta: Option<f64>,
    allow_fractional: bool,
    errs: &mut Vec<String>,
) -> Option<DelayOperator> {
    let at = obj.key(key);
    match obj.opt_string(key, errs).unwrap_or("none") {
        "none" => Some(DelayOperator::None),
        "laplacian" => Some(DelayOperator::Laplacian),
        "fractional" if allow_fractional => match delta {
            Some(delta) if (0.0..1.0).contains(&delta) => Some(DelayOperator::Fractional { delta }),
            Some(delta) => {
                errs.push(format!("{}: must lie in [0, 1), got {delta}", obj.key("delta")));
                None
            }
            None => {
                errs.push(format!("{}: required when {at} = \"fractional\"", obj.key("delta")));
                None
            }
        },
        other => {
            let allowed = if allow_fractional {
                "\"none\", \"laplacian\" or \"fractional\""
            } else {
                "\"none\" or \"laplacian\""
            };
            errs.push(format!("{at}: expected {allowed}, got {other:?}"));
            None
        }
    }
}

fn read_model(v: &Value, errs: &mut Vec<String>) -> Option<Model> {
    let mut obj = Obj::new("model", v, errs)?;
    let model = match obj.string("type", errs) {
        Some("dirichlet_1d") => {
            let length = positive(obj.num("L", errs), "model.L", errs);
            let at_k = obj.key("K");
            let modes = match obj.required("K", errs).map(|v| v.as_u64()) {
                Some(Some(k)) if k >= 1 => Some(k as usize),
                Some(_) => {
                    errs.push(format!("{at_k}: expected a positive integer"));
                    None
                }
                None => None,
            };
            let delta = obj.opt_num("delta", errs);
            let a1 = read_operator(&mut obj, "a1", delta, true, errs);
            let a2 = read_operator(&mut obj, "a2", None, false, errs);
            if delta.is_some() && !matches!(a1, Some(DelayOperator::Fractional { .. })) {
                errs.push("model.delta: only used with a1 = \"fractional\"".into());
            }
            (|| {
                Some(Model::Dirichlet {
                    length: length?,
                    modes: modes?,
                    a1: a1?,
                    a2: a2?,
                })
            })()
        }
        Some("modes") => {
            let length = positive(Some(obj.opt_num("L", errs).unwrap_or(1.0)), "model.L", errs);
            let entries = obj.required("modes", errs).and_then(|v| {
                let Some(items) = v.as_array() else {
                    errs.push("model.modes: expected an array of mode objects".into());
                    return None;
                };
                let mut out = Vec::new();
                let mut ok = true;
                for (i, item) in items.iter().enumerate() {
                    let at = format!("model.modes[{i}]");
                    let Some(mut m) = Obj::new(&at, item, errs) else {
                        ok = false;
                        continue;
                    };
                    let mu = m.num("mu", errs);
                    let m1 = m.opt_num("m1", errs).unwrap_or(0.0);
                    let m2 = m.opt_num("m2", errs).unwrap_or(0.0);
                    let f = m.num("f", errs);
                    m.finish(errs);
                    match (mu, f) {
                        (Some(mu), Some(f)) => out.push(ModeEntry::new(mu, m1, m2, f)),
                        _ => ok = false,
                    }
                }
                if out.is_empty() && ok {
                    errs.push("model.modes: need at least one mode".into());
                    return None;
                }
                ok.then_some(out)
            });
            length.zip(entries).map(|(length, entries)| Model::Explicit { length, entries })
        }
        Some(other) => {
            errs.push(format!("model.type: expected \"dirichlet_1d\" or \"modes\", got {other:?}"));
            None
        }
        None => None,
    };
    obj.finish(errs);
    model
}

fn read_forcing(v: &Value, base: &Path, errs: &mut Vec<String>) -> Option<Forcing> {
    let mut obj = Obj::new("forcing", v, errs)?;
    let forcing = match obj.string("type", errs) {
        Some("first_mode") => Some(Forcing::FirstMode {
            amplitude: obj.opt_num("amplitude", errs).unwrap_or(1.0),
        }),
        Some("constant") => obj.num("value", errs).map(|value| Forcing::Constant { value }),
        Some("table") => read_values_or_file(&mut obj, base, errs).and_then(|samples| {
            if samples.len() < 2 {
                errs.push("forcing.values: need at least 2 samples".into());
                None
            } else {
                Some(Forcing::Table { samples })
            }
        }),
        Some(other) => {
            errs.push(format!(
                "forcing.type: expected \"first_mode\", \"constant\" or \"table\", got {other:?}"
            ));
            None
        }
        None => None,
    };
    obj.finish(errs);
    forcing
}

fn read_kernel(v: &Value, base: &Path, errs: &mut Vec<String>) -> Option<DelayKernel> {
    let mut obj = Obj::new("kernel", v, errs)?;
    let r = positive(obj.num("r", errs), "kernel.r", errs);
    let alpha = obj.opt_num("alpha", errs).unwrap_or(0.0);
    let beta = match obj.get("beta") {
        None => Some(Beta::Zero),
        Some(bv) => Obj::new("kernel.beta", bv, errs).and_then(|mut b| {
            let beta = match b.string("type", errs) {
                Some("zero") => Some(Beta::Zero),
                Some("constant") => b.num("value", errs).map(Beta::Constant),
                Some("exponential") => match (b.num("a", errs), b.num("b", errs)) {
                    (Some(a), Some(bb)) => Some(Beta::Exponential { a, b: bb }),
                    _ => None,
                },
                Some("tabulated") => read_values_or_file(&mut b, base, errs).map(Beta::Tabulated),
                Some(other) => {
                    errs.push(format!(
                        "kernel.beta.type: expected \"zero\", \"constant\", \"exponential\" or \"tabulated\", got {other:?}"
                    ));
                    None
                }
                None => None,
            };
            b.finish(errs);
            beta
        }),
    };
    obj.finish(errs);
    match DelayKernel::new(r?, alpha, beta?) {
        Ok(k) => Some(k),
        Err(e) => {
            errs.push(format!("kernel: {e}"));
            None
        }
    }
}

fn divides(step: f64, r: f64) -> bool {
    let n = (r / step).round();
    n >= 1.0 && (n * step - r).abs() <= 1e-9 * r
}

fn read_run(v: Option<&Value>, r: Option<f64>, errs: &mut Vec<String>) -> Option<RunParams> {
    let empty = Value::Object(Map::new());
    let mut obj = Obj::new("run", v.unwrap_or(&empty), errs)?;
    let dt = match obj.opt_num("dt", errs) {
        Some(dt) => positive(Some(dt), "run.dt", errs),
        None => r.map(|r| r / 200.0),
    };
    let t_end = positive(Some(obj.opt_num("T", errs).unwrap_or(10.0)), "run.T", errs);
    let paths = obj.opt_count("paths", errs).unwrap_or(2000) as usize;
    if paths == 0 {
        errs.push("run.paths: need at least one path".into());
    }
    let seed = obj.opt_count("seed", errs).unwrap_or(42);
    let lags = obj.opt_string("lags", errs).and_then(|s| match LagGrid::parse(s) {
        Ok(g) => Some(g),
        Err(e) => {
            errs.push(format!("run.lags: {e}"));
            None
        }
    });
    let stationary_start = match obj.get("stationary_start") {
        None => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            errs.push("run.stationary_start: expected true or false".into());
            false
        }
    };
    let burn_in = obj.opt_num("burn_in", errs);
    if let Some(b) = burn_in {
        if !(b >= 0.0 && b.is_finite()) {
            errs.push(format!("run.burn_in: must be nonnegative, got {b}"));
        }
    }
    let re_window = obj.get("re_window").and_then(|w| {
        let xs = num_list(w, "run.re_window", errs)?;
        if xs.len() == 2 && xs[0] < xs[1] {
            Some((xs[0], xs[1]))
        } else {
            errs.push("run.re_window: expected [lo, hi] with lo < hi".into());
            None
        }
    });
    let im_cap = obj.opt_num("im_cap", errs).and_then(|y| positive(Some(y), "run.im_cap", errs));
    obj.finish(errs);

    if let (Some(dt), Some(r)) = (dt, r) {
        if !divides(dt, r) {
            errs.push(format!("run.dt: {dt} does not divide the delay r = {r}"));
        }
        if let Some(g) = &lags {
            for (what, x) in [("step", g.step), ("from", g.from), ("to", g.to)] {
                let n = (x / dt).round();
                if (n * dt - x).abs() > 1e-9 * dt.max(x.abs()) {
                    errs.push(format!("run.lags: {what} {x} is not a multiple of dt = {dt}"));
                }
            }
        }
    }
    Some(RunParams {
        dt: dt?,
        t_end: t_end?,
        paths,
        seed,
        lags,
        stationary_start,
        burn_in,
        re_window,
        im_cap,
    })
}

/// `f_k = c ∫_0^L e_k = c sqrt(2/L) L (1 - cos kπ) / (kπ)`.
fn constant_coefficients(c: f64, length: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| {
            let kp = k as f64 * PI;
            c * (2.0 / length).sqrt() * length * (1.0 - kp.cos()) / kp
        })
        .collect()
}

fn build_system(model: &Model, forcing: Option<&Forcing>) -> delayou::Result<ModeSystem> {
    match model {
        Model::Explicit { length, entries } => ModeSystem::from_entries(entries.clone(), *length),
        Model::Dirichlet { length, modes, a1, a2 } => {
            let (f, l2) = match forcing {
                Some(Forcing::FirstMode { amplitude }) => {
                    let mut f = vec![0.0; *modes];
                    f[0] = *amplitude;
                    (f, amplitude * amplitude)
                }
                Some(Forcing::Constant { value }) => {
                    (constant_coefficients(*value, *length, *modes), value * value * length)
                }
                Some(Forcing::Table { samples }) => {
                    let p = project_forcing(samples, &dirichlet_modes(*length, *modes)?)?;
                    (p.coefficients, p.l2_norm_sq)
                }
                None => (vec![0.0; *modes], 0.0),
            };
            Ok(ModeSystem::dirichlet(*length, *a1, *a2, &f)?.with_forcing_norm(l2))
        }
    }
}
