use std::fmt;
use std::path::{Path, PathBuf};

use ngdpinn_core::pinn::{make_instance, DEFAULT_N_MC, MIN_N_MC};
use ngdpinn_core::theory::SuiteProfile;
use ngdpinn_core::ActivationKind;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ITERS: usize = 500;
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_INSTANCE: &str = "poly-sine";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    RegressionGd,
    PinnGd,
    PinnNgd,
    GramReport,
    CheckSuite,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::RegressionGd => "regression-gd",
            Self::PinnGd => "pinn-gd",
            Self::PinnNgd => "pinn-ngd",
            Self::GramReport => "gram-report",
            Self::CheckSuite => "check-suite",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaModeName {
    Auto,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Regression,
    Pinn,
}

/// A validated run configuration with every applicable default filled in.
///
/// Keys that do not apply to the mode are `None` and are never serialized,
/// so the emitted document re-parses to an equal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_mode: Option<EtaModeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_mc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_remainder: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_drift: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_gram: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SuiteProfile>,
}

/// Same keys as [`RunConfig`], all optional; what the file actually says.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    problem: Option<ProblemKind>,
    n: Option<usize>,
    d: Option<usize>,
    n1: Option<usize>,
    n2: Option<usize>,
    instance: Option<String>,
    activation: Option<ActivationKind>,
    m: Option<usize>,
    eta_mode: Option<EtaModeName>,
    eta: Option<f64>,
    iters: Option<usize>,
    n_mc: Option<usize>,
    diag_remainder: Option<bool>,
    diag_drift: Option<bool>,
    diag_gram: Option<bool>,
    profile: Option<SuiteProfile>,
}

/// Problem with a config document, pointing at the key and line when known.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.line) {
            (Some(k), Some(l)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(k), None) => write!(f, "key `{k}`: {}", self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn line_of(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

struct Resolver<'a> {
    src: &'a str,
    raw: RawConfig,
    mode: Mode,
}

impl Resolver<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            key: Some(key.to_string()),
            line: line_of(self.src, key),
            message: message.into(),
        }
    }

    fn required<T: Copy>(&self, key: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| self.err(key, format!("required for mode {}", self.mode)))
    }

    fn positive(&self, key: &str, v: usize) -> Result<usize, ConfigError> {
        if v == 0 {
            Err(self.err(key, "must be at least 1"))
        } else {
            Ok(v)
        }
    }

    fn forbid(&self, key: &str, present: bool) -> Result<(), ConfigError> {
        if present {
            Err(self.err(key, format!("does not apply to mode {}", self.mode)))
        } else {
            Ok(())
        }
    }
}

/// Parses and validates a config document.
pub fn parse_config_str(src: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_at(src, s.start));
        let message = e.message().to_string();
        let key = message
            .strip_prefix("unknown field `")
            .and_then(|r| r.split('`').next())
            .map(str::to_string);
        ConfigError { key, line, message }
    })?;
    resolve(src, raw, overrides)
}

/// Reads, parses and validates the config file at `path`.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: None,
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config_str(&src, overrides)
}

fn resolve(src: &str, mut raw: RawConfig, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    if let Some(m) = overrides.mode {
        raw.mode = Some(m);
    }
    if let Some(o) = &overrides.out {
        raw.out = Some(o.clone());
    }
    if let Some(s) = overrides.seed {
        raw.seed = Some(s);
    }
    let mode = raw.mode.ok_or_else(|| ConfigError {
        key: Some("mode".into()),
        line: None,
        message: "missing required key".into(),
    })?;
    let r = Resolver { src, raw, mode };
    let raw = &r.raw;
    let seed = r.required("seed", raw.seed)?;
    let out = raw.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let mut cfg = RunConfig {
        mode,
        seed,
        out,
        problem: None,
        n: None,
        d: None,
        n1: None,
        n2: None,
        instance: None,
        activation: None,
        m: None,
        eta_mode: None,
        eta: None,
        iters: None,
        n_mc: None,
        diag_remainder: None,
        diag_drift: None,
        diag_gram: None,
        profile: None,
    };

    let problem = match mode {
        Mode::RegressionGd => ProblemKind::Regression,
        Mode::PinnGd | Mode::PinnNgd => ProblemKind::Pinn,
        Mode::GramReport => raw.problem.unwrap_or(ProblemKind::Regression),
        Mode::CheckSuite => {
            for key in [
                ("problem", raw.problem.is_some()),
                ("n", raw.n.is_some()),
                ("d", raw.d.is_some()),
                ("n1", raw.n1.is_some()),
                ("n2", raw.n2.is_some()),
                ("instance", raw.instance.is_some()),
                ("activation", raw.activation.is_some()),
                ("m", raw.m.is_some()),
                ("eta_mode", raw.eta_mode.is_some()),
                ("eta", raw.eta.is_some()),
                ("iters", raw.iters.is_some()),
                ("diag_remainder", raw.diag_remainder.is_some()),
                ("diag_drift", raw.diag_drift.is_some()),
                ("diag_gram", raw.diag_gram.is_some()),
            ] {
                r.forbid(key.0, key.1)?;
            }
            cfg.profile = Some(raw.profile.unwrap_or(SuiteProfile::Full));
            cfg.n_mc = Some(n_mc(&r)?);
            return Ok(cfg);
        }
    };
    r.forbid("profile", raw.profile.is_some())?;
    if mode == Mode::GramReport {
        cfg.problem = Some(problem);
    } else {
        r.forbid("problem", raw.problem.is_some())?;
    }

    let d = r.positive("d", r.required("d", raw.d)?)?;
    cfg.d = Some(d);
    match problem {
        ProblemKind::Regression => {
            for (k, p) in [
                ("n1", raw.n1.is_some()),
                ("n2", raw.n2.is_some()),
                ("instance", raw.instance.is_some()),
                ("n_mc", raw.n_mc.is_some()),
            ] {
                r.forbid(k, p)?;
            }
            cfg.n = Some(r.positive("n", r.required("n", raw.n)?)?);
            let act = raw.activation.unwrap_or(ActivationKind::Relu);
            if act != ActivationKind::Relu {
                return Err(r.err("activation", "regression modes are ReLU-only"));
            }
            cfg.activation = Some(act);
        }
        ProblemKind::Pinn => {
            r.forbid("n", raw.n.is_some())?;
            cfg.n1 = Some(r.positive("n1", r.required("n1", raw.n1)?)?);
            cfg.n2 = Some(r.positive("n2", r.required("n2", raw.n2)?)?);
            let instance = raw.instance.clone().unwrap_or_else(|| DEFAULT_INSTANCE.to_string());
            make_instance(&instance, d).map_err(|e| r.err("instance", e.to_string()))?;
            cfg.instance = Some(instance);
            let act = raw.activation.unwrap_or(ActivationKind::ReluCubed);
            if act == ActivationKind::Relu {
                return Err(r.err("activation", "PINN modes need relu-cubed or smooth-tanh"));
            }
            cfg.activation = Some(act);
            if mode == Mode::PinnNgd {
                r.forbid("n_mc", raw.n_mc.is_some())?;
            } else {
                cfg.n_mc = Some(n_mc(&r)?);
            }
        }
    }

    if mode == Mode::GramReport {
        for (k, p) in [
            ("eta_mode", raw.eta_mode.is_some()),
            ("eta", raw.eta.is_some()),
            ("iters", raw.iters.is_some()),
            ("diag_remainder", raw.diag_remainder.is_some()),
            ("diag_drift", raw.diag_drift.is_some()),
            ("diag_gram", raw.diag_gram.is_some()),
        ] {
            r.forbid(k, p)?;
        }
        cfg.m = raw.m.map(|m| r.positive("m", m)).transpose()?;
        return Ok(cfg);
    }

    cfg.m = Some(r.positive("m", r.required("m", raw.m)?)?);
    cfg.iters = Some(r.positive("iters", raw.iters.unwrap_or(DEFAULT_ITERS))?);
    let eta_mode = raw.eta_mode.unwrap_or(EtaModeName::Auto);
    cfg.eta_mode = Some(eta_mode);
    match (eta_mode, raw.eta) {
        (EtaModeName::Auto, Some(_)) => return Err(r.err("eta", "only valid with eta_mode = \"fixed\"")),
        (EtaModeName::Auto, None) => {}
        (EtaModeName::Fixed, None) => {
            return Err(ConfigError {
                key: Some("eta".into()),
                line: line_of(src, "eta_mode"),
                message: "eta_mode = \"fixed\" needs a value for `eta`".into(),
            })
        }
        (EtaModeName::Fixed, Some(eta)) => {
            let ok = if mode == Mode::PinnNgd {
                eta > 0.0 && eta <= 1.0
            } else {
                eta >= 0.0 && eta.is_finite()
            };
            if !ok {
                let range = if mode == Mode::PinnNgd { "(0, 1]" } else { "[0, inf)" };
                return Err(r.err("eta", format!("must lie in {range} for mode {mode}")));
            }
            cfg.eta = Some(eta);
        }
    }
    cfg.diag_remainder = Some(raw.diag_remainder.unwrap_or(true));
    cfg.diag_drift = Some(raw.diag_drift.unwrap_or(true));
    cfg.diag_gram = Some(raw.diag_gram.unwrap_or(false));
    Ok(cfg)
}

fn n_mc(r: &Resolver<'_>) -> Result<usize, ConfigError> {
    let v = r.raw.n_mc.unwrap_or(DEFAULT_N_MC);
    if v < MIN_N_MC {
        return Err(r.err("n_mc", format!("must be at least {MIN_N_MC}")));
    }
    Ok(v)
}

impl RunConfig {
    /// The resolved config as a TOML document.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
