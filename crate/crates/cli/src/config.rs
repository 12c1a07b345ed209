//! Run configuration: a small TOML document validated in full before any
//! simulation state is allocated.
//!
//! ```toml
//! mode = "pair"              # kinetic | fluid | rescaled | pair | sweep
//!
//! [model]
//! epsilon = 0.2              # sweep mode: epsilons = [0.4, 0.283, 0.2]
//! delta = 2.0
//! confinement = "quadratic"  # or "none"
//! interaction = true
//!
//! [grid]                     # defaults depend on the confinement
//! half_width = 8.0
//! n_x = 128
//! n_v = 256                  # optional; otherwise dv * sqrt(eps) = h
//! c_v = 8.0
//! h = 0.0625
//! cfl_fraction = 0.5
//!
//! [run]
//! horizon = 0.5
//! samples = 10
//! snapshot_every = 5         # optional, in samples
//! jobs = 1                   # sweep only
//!
//! [initial]
//! recipe = "gaussian"        # or "sech2"
//! center = 0.5               # gaussian only
//! width = 1.0
//!
//! [rates]                    # sweep only, optional
//! min_slope = 0.7
//! max_residual = 0.15
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use overdamp_core::harness::{ExperimentPlan, GridPolicy, InitialRecipe, PairSpec};
use overdamp_core::kinetic::Confinement;
use toml_edit::{ImDocument, Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Kinetic,
    Fluid,
    Rescaled,
    Pair,
    Sweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Kinetic => "kinetic",
            Self::Fluid => "fluid",
            Self::Rescaled => "rescaled",
            Self::Pair => "pair",
            Self::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "kinetic" => Self::Kinetic,
            "fluid" => Self::Fluid,
            "rescaled" => Self::Rescaled,
            "pair" => Self::Pair,
            "sweep" => Self::Sweep,
            _ => return None,
        })
    }
}

/// Thresholds applied to the sweep rate fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateThresholds {
    pub min_slope: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// Single-run parameters; in sweep mode `spec.eps` is the first ε.
    pub spec: PairSpec,
    /// Sweep ε list; empty otherwise.
    pub eps_list: Vec<f64>,
    pub jobs: usize,
    pub snapshot_every: Option<usize>,
    pub rates: Option<RateThresholds>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn plan(&self) -> Option<ExperimentPlan> {
        (self.mode == Mode::Sweep).then(|| ExperimentPlan {
            eps: self.eps_list.clone(),
            delta: self.spec.delta,
            confinement: self.spec.confinement,
            interaction: self.spec.interaction,
            horizon: self.spec.horizon,
            samples: self.spec.samples,
            grid: self.spec.grid,
            recipe: self.spec.recipe,
            jobs: self.jobs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

/// Every problem found in a configuration, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "line {}: {}", issue.line, issue.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("model", &["epsilon", "epsilons", "delta", "confinement", "interaction"]),
    ("grid", &["half_width", "n_x", "n_v", "c_v", "h", "cfl_fraction"]),
    ("run", &["horizon", "samples", "snapshot_every", "jobs"]),
    ("initial", &["recipe", "center", "width"]),
    ("rates", &["min_slope", "max_residual"]),
    ("output", &["dir"]),
];

struct Reader<'a> {
    text: &'a str,
    issues: Vec<ConfigIssue>,
}

impl<'a> Reader<'a> {
    fn line_of(&self, span: Option<Range<usize>>) -> usize {
        match span {
            Some(r) => self.text[..r.start.min(self.text.len())].matches('\n').count() + 1,
            None => 1,
        }
    }

    fn issue(&mut self, span: Option<Range<usize>>, message: impl Into<String>) {
        let line = self.line_of(span);
        self.issues.push(ConfigIssue {
            line,
            message: message.into(),
        });
    }

    fn value<'t>(&mut self, table: &'t Table, section: &str, key: &str) -> Option<(&'t Value, usize)> {
        let item = table.get(key)?;
        let line = self.line_of(table.key(key).and_then(|k| k.span()).or_else(|| item.span()));
        match item.as_value() {
            Some(v) => Some((v, line)),
            None => {
                self.issues.push(ConfigIssue {
                    line,
                    message: format!("`{section}.{key}` must be a value"),
                });
                None
            }
        }
    }

    fn push(&mut self, line: usize, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    fn float(&mut self, table: Option<&Table>, section: &str, key: &str) -> Option<(f64, usize)> {
        let (v, line) = self.value(table?, section, key)?;
        match v {
            Value::Float(f) => Some((*f.value(), line)),
            Value::Integer(i) => Some((*i.value() as f64, line)),
            _ => {
                self.push(line, format!("`{section}.{key}` must be a number"));
                None
            }
        }
    }

    fn uint(&mut self, table: Option<&Table>, section: &str, key: &str) -> Option<(usize, usize)> {
        let (v, line) = self.value(table?, section, key)?;
        match v.as_integer() {
            Some(i) if i >= 0 => Some((i as usize, line)),
            _ => {
                self.push(line, format!("`{section}.{key}` must be a nonnegative integer"));
                None
            }
        }
    }

    fn string(&mut self, table: Option<&Table>, section: &str, key: &str) -> Option<(String, usize)> {
        let (v, line) = self.value(table?, section, key)?;
        match v.as_str() {
            Some(s) => Some((s.to_string(), line)),
            None => {
                self.push(line, format!("`{section}.{key}` must be a string"));
                None
            }
        }
    }

    fn boolean(&mut self, table: Option<&Table>, section: &str, key: &str) -> Option<(bool, usize)> {
        let (v, line) = self.value(table?, section, key)?;
        match v.as_bool() {
            Some(b) => Some((b, line)),
            None => {
                self.push(line, format!("`{section}.{key}` must be true or false"));
                None
            }
        }
    }

    fn floats(&mut self, table: Option<&Table>, section: &str, key: &str) -> Option<(Vec<f64>, usize)> {
        let (v, line) = self.value(table?, section, key)?;
        let parsed: Option<Vec<f64>> = v.as_array().and_then(|a| {
            a.iter()
                .map(|x| match x {
                    Value::Float(f) => Some(*f.value()),
                    Value::Integer(i) => Some(*i.value() as f64),
                    _ => None,
                })
                .collect()
        });
        match parsed {
            Some(xs) => Some((xs, line)),
            None => {
                self.push(line, format!("`{section}.{key}` must be an array of numbers"));
                None
            }
        }
    }
}

fn eps_ok(e: f64) -> bool {
    e > 0.0 && e < 1.0
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc = ImDocument::parse(text).map_err(|e| {
        let line = e.span().map(|r| text[..r.start.min(text.len())].matches('\n').count() + 1).unwrap_or(1);
        let message = e.message().trim().to_string();
        ConfigError {
            issues: vec![ConfigIssue { line, message }],
        }
    })?;
    let mut r = Reader {
        text,
        issues: Vec::new(),
    };
    let root = doc.as_table();

    let mut tables: Vec<Option<&Table>> = vec![None; SECTIONS.len()];
    for (key, item) in root.iter() {
        let span = root.key(key).and_then(|k| k.span()).or_else(|| item.span());
        if key == "mode" {
            continue;
        }
        match SECTIONS.iter().position(|(name, _)| *name == key) {
            Some(k) => match item.as_table() {
                Some(t) => tables[k] = Some(t),
                None => r.issue(span, format!("`{key}` must be a section")),
            },
            None => r.issue(span, format!("unknown key `{key}`")),
        }
    }
    for ((section, keys), table) in SECTIONS.iter().zip(&tables) {
        let Some(table) = table else { continue };
        for (key, item) in table.iter() {
            if !keys.contains(&key) {
                let span = table.key(key).and_then(|k| k.span()).or_else(|| item.span());
                r.issue(span, format!("unknown key `{section}.{key}`"));
            }
        }
    }
    let [model, grid, run, initial, rates, output] = [0, 1, 2, 3, 4, 5].map(|k| tables[k]);
    let header_line = |t: Option<&Table>, r: &Reader| r.line_of(t.and_then(|t| t.span()));

    let mode = match root.get("mode") {
        None => {
            r.push(1, "missing required key `mode`".into());
            None
        }
        Some(item) => {
            let line = r.line_of(root.key("mode").and_then(|k| k.span()).or_else(|| item.span()));
            match item.as_str().and_then(Mode::parse) {
                Some(m) => Some(m),
                None => {
                    r.push(line, "`mode` must be one of kinetic, fluid, rescaled, pair, sweep".into());
                    None
                }
            }
        }
    };

    // [model]
    let confinement = match r.string(model, "model", "confinement") {
        None => Confinement::Quadratic,
        Some((s, line)) => match s.as_str() {
            "quadratic" => Confinement::Quadratic,
            "none" => Confinement::None,
            _ => {
                r.push(line, "`model.confinement` must be \"quadratic\" or \"none\"".into());
                Confinement::Quadratic
            }
        },
    };
    let eps_single = r.float(model, "model", "epsilon");
    let eps_many = r.floats(model, "model", "epsilons");
    let model_line = header_line(model, &r);
    let mut eps_list = Vec::new();
    let mut eps = 0.5;
    match mode {
        Some(Mode::Sweep) => {
            if let Some((_, line)) = eps_single {
                r.push(line, "sweep mode takes `model.epsilons`, not `model.epsilon`".into());
            }
            match eps_many {
                None => r.push(model_line, "missing required key `model.epsilons`".into()),
                Some((xs, line)) => {
                    if let Some(bad) = xs.iter().find(|e| !eps_ok(**e)) {
                        r.push(line, format!("epsilon must lie in (0,1), got {bad}"));
                    }
                    if xs.len() < 3 {
                        r.push(line, format!("`model.epsilons` needs at least 3 values, got {}", xs.len()));
                    }
                    if xs.windows(2).any(|w| !(w[1] < w[0])) {
                        r.push(line, "`model.epsilons` must be strictly decreasing".into());
                    }
                    eps = xs.first().copied().filter(|e| eps_ok(*e)).unwrap_or(0.5);
                    eps_list = xs;
                }
            }
        }
        Some(_) => {
            if let Some((_, line)) = eps_many {
                r.push(line, "`model.epsilons` is only used in sweep mode".into());
            }
            match eps_single {
                None => r.push(model_line, "missing required key `model.epsilon`".into()),
                Some((e, line)) => {
                    if eps_ok(e) {
                        eps = e;
                    } else {
                        r.push(line, format!("epsilon must lie in (0,1), got {e}"));
                    }
                }
            }
        }
        None => {}
    }
    let delta = match r.float(model, "model", "delta") {
        None => 2.0,
        Some((d, line)) => {
            if !(d > 0.0) || !d.is_finite() {
                r.push(line, format!("delta must be positive, got {d}"));
            }
            d
        }
    };
    let interaction = r.boolean(model, "model", "interaction").map(|(b, _)| b).unwrap_or(true);

    // [grid]
    let mut gp = GridPolicy::default_for(confinement);
    if let Some((v, line)) = r.float(grid, "grid", "half_width") {
        if !(v > 0.0) || !v.is_finite() {
            r.push(line, format!("`grid.half_width` must be positive, got {v}"));
        }
        gp.half_width = v;
    }
    if let Some((v, line)) = r.uint(grid, "grid", "n_x") {
        if v < 8 {
            r.push(line, format!("`grid.n_x` must be at least 8, got {v}"));
        }
        gp.n_x = v;
    }
    if let Some((v, line)) = r.uint(grid, "grid", "n_v") {
        if v < 8 {
            r.push(line, format!("`grid.n_v` must be at least 8, got {v}"));
        }
        gp.n_v = Some(v);
    }
    if let Some((v, line)) = r.float(grid, "grid", "c_v") {
        if !(v >= 4.0) || !v.is_finite() {
            r.push(line, format!("`grid.c_v` must be at least 4, got {v}"));
        }
        gp.c_v = v;
    }
    if let Some((v, line)) = r.float(grid, "grid", "h") {
        if !(v > 0.0) || !v.is_finite() {
            r.push(line, format!("`grid.h` must be positive, got {v}"));
        }
        gp.h = v;
    }
    if let Some((v, line)) = r.float(grid, "grid", "cfl_fraction") {
        if !(v > 0.0 && v <= 1.0) {
            r.push(line, format!("`grid.cfl_fraction` must lie in (0,1], got {v}"));
        }
        gp.cfl_fraction = v;
    }

    // [run]
    let mut horizon = 0.5;
    if let Some((v, line)) = r.float(run, "run", "horizon") {
        if !(v > 0.0) || !v.is_finite() {
            r.push(line, format!("`run.horizon` must be positive, got {v}"));
        }
        horizon = v;
    }
    let mut samples = 10;
    if let Some((v, line)) = r.uint(run, "run", "samples") {
        if v == 0 {
            r.push(line, "`run.samples` must be at least 1".into());
        }
        samples = v;
    }
    let mut snapshot_every = None;
    if let Some((v, line)) = r.uint(run, "run", "snapshot_every") {
        if v == 0 {
            r.push(line, "`run.snapshot_every` must be at least 1".into());
        }
        snapshot_every = Some(v);
    }
    let mut jobs = 1;
    if let Some((v, line)) = r.uint(run, "run", "jobs") {
        if v == 0 {
            r.push(line, "`run.jobs` must be at least 1".into());
        }
        if mode.is_some_and(|m| m != Mode::Sweep) {
            r.push(line, "`run.jobs` is only used in sweep mode".into());
        }
        jobs = v;
    }

    // [initial]
    let default_recipe = InitialRecipe::default_for(confinement);
    let recipe_name = r.string(initial, "initial", "recipe");
    let center = r.float(initial, "initial", "center");
    let width = r.float(initial, "initial", "width");
    let w = width.as_ref().map(|(w, _)| *w).unwrap_or(1.0);
    if let Some((w, line)) = width {
        if !(w > 0.0) || !w.is_finite() {
            r.push(line, format!("`initial.width` must be positive, got {w}"));
        }
    }
    let recipe = match recipe_name {
        None => match default_recipe {
            InitialRecipe::Gaussian { center: c0, .. } => InitialRecipe::Gaussian {
                center: center.map(|(c, _)| c).unwrap_or(c0),
                width: w,
            },
            InitialRecipe::Sech2 { .. } => {
                if let Some((_, line)) = center {
                    r.push(line, "`initial.center` applies to the gaussian recipe only".into());
                }
                InitialRecipe::Sech2 { width: w }
            }
        },
        Some((name, line)) => match name.as_str() {
            "gaussian" => InitialRecipe::Gaussian {
                center: center.map(|(c, _)| c).unwrap_or(0.5),
                width: w,
            },
            "sech2" => {
                if let Some((_, line)) = center {
                    r.push(line, "`initial.center` applies to the gaussian recipe only".into());
                }
                InitialRecipe::Sech2 { width: w }
            }
            _ => {
                r.push(line, "`initial.recipe` must be \"gaussian\" or \"sech2\"".into());
                default_recipe
            }
        },
    };

    // [rates]
    let min_slope = r.float(rates, "rates", "min_slope");
    let max_residual = r.float(rates, "rates", "max_residual");
    if let Some((v, line)) = max_residual {
        if !(v >= 0.0) {
            r.push(line, format!("`rates.max_residual` must be nonnegative, got {v}"));
        }
    }
    let rates_cfg = match (min_slope, max_residual) {
        (None, None) => None,
        (s, m) => {
            if mode.is_some_and(|m| m != Mode::Sweep) {
                r.push(header_line(rates, &r), "`[rates]` is only used in sweep mode".into());
            }
            Some(RateThresholds {
                min_slope: s.map(|(v, _)| v).unwrap_or(f64::NEG_INFINITY),
                max_residual: m.map(|(v, _)| v).unwrap_or(f64::INFINITY),
            })
        }
    };

    // [output]
    let out_dir = match r.string(output, "output", "dir") {
        Some((d, line)) => {
            if d.is_empty() {
                r.push(line, "`output.dir` must not be empty".into());
            }
            PathBuf::from(d)
        }
        None => PathBuf::from("out"),
    };

    if mode == Some(Mode::Rescaled) && !confinement.is_confined() {
        let line = r.line_of(model.and_then(|m| m.key("confinement")).and_then(|k| k.span()));
        r.push(line, "rescaled mode requires `model.confinement = \"quadratic\"`".into());
    }

    let mut issues = r.issues;
    issues.sort_by_key(|i| i.line);
    match mode {
        Some(mode) if issues.is_empty() => Ok(RunConfig {
            mode,
            spec: PairSpec {
                eps,
                delta,
                confinement,
                interaction,
                horizon,
                samples,
                grid: gp,
                recipe,
            },
            eps_list,
            jobs,
            snapshot_every,
            rates: rates_cfg,
            out_dir,
        }),
        _ => Err(ConfigError { issues }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "mode = \"pair\"\n[model]\nepsilon = 0.2\n";

    #[test]
    fn minimal_pair_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Pair);
        assert_eq!(c.spec, PairSpec::reference(0.2, Confinement::Quadratic));
        assert_eq!(c.out_dir, PathBuf::from("out"));
        assert_eq!(c.jobs, 1);
        assert!(c.snapshot_every.is_none());
    }

    #[test]
    fn epsilon_out_of_range() {
        let err = parse_config("mode = \"pair\"\n[model]\nepsilon = 1.5\n").unwrap_err();
        assert_eq!(err.issues.len(), 1);
        assert_eq!(err.issues[0].line, 3);
        assert!(err.issues[0].message.contains("epsilon must lie in (0,1)"));
    }

    #[test]
    fn all_errors_are_reported() {
        let text = "mode = \"pair\"\nbogus = 1\n[model]\nepsilon = 2.0\ndelta = -1\n[grid]\nn_x = 4\nwat = 3\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.issues.iter().map(|i| i.line).collect();
        assert_eq!(lines, vec![2, 4, 5, 7, 8], "{err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_config("mode = \"pair\"\n[model]\nepsilon = 0.2\nepsilon = 0.3\n").unwrap_err();
        assert_eq!(err.issues.len(), 1);
        assert_eq!(err.issues[0].line, 4, "{err}");
    }

    #[test]
    fn sweep_needs_decreasing_list() {
        let c = parse_config("mode = \"sweep\"\n[model]\nepsilons = [0.4, 0.2, 0.1]\n").unwrap();
        assert_eq!(c.plan().unwrap().eps, vec![0.4, 0.2, 0.1]);
        let err = parse_config("mode = \"sweep\"\n[model]\nepsilons = [0.4, 0.4, 0.1]\n").unwrap_err();
        assert!(err.to_string().contains("strictly decreasing"));
        let err = parse_config("mode = \"sweep\"\n[model]\nepsilon = 0.2\n").unwrap_err();
        assert_eq!(err.issues.len(), 2);
    }

    #[test]
    fn missing_mode_and_unknown_mode() {
        assert!(parse_config("[model]\nepsilon = 0.2\n").unwrap_err().to_string().contains("`mode`"));
        assert!(parse_config("mode = \"warp\"\n[model]\nepsilon = 0.2\n").is_err());
    }

    #[test]
    fn rescaled_needs_confinement() {
        let err = parse_config("mode = \"rescaled\"\n[model]\nepsilon = 0.2\nconfinement = \"none\"\n").unwrap_err();
        assert_eq!(err.issues[0].line, 4);
    }

    #[test]
    fn unconfined_defaults() {
        let c = parse_config("mode = \"fluid\"\n[model]\nepsilon = 0.2\nconfinement = \"none\"\n").unwrap();
        assert_eq!(c.spec.recipe, InitialRecipe::Sech2 { width: 1.0 });
        assert_eq!(c.spec.grid, GridPolicy::default_for(Confinement::None));
    }
}
