use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ngdpinn_core::pinn::{gram_inf_mc, gram_pinn, jacobian, make_instance, sample_dataset, train, TrainSettings};
use ngdpinn_core::regression::{gram_finite, gram_inf_relu, train_gd};
use ngdpinn_core::rng::derive_seed;
use ngdpinn_core::theory::{
    check_gd_convergence, check_ngd_linear, check_ngd_quadratic, check_recursion, check_weight_drift, rollup,
    run_suite, SuiteConfig,
};
use ngdpinn_core::{
    init_params, ActivationKind, CheckReport, Diagnostics, Error, EtaMode, GramReport, Optimizer,
    RegressionDataset, TrainTrace, Verdict,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{EtaModeName, Mode, ProblemKind, RunConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

/// Process exit statuses.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const CHECK_FAILURE: u8 = 2;
    pub const INVALID_CONFIG: u8 = 3;
    pub const NUMERICAL_FAILURE: u8 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    CheckFailure,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Self::Pass => exit::PASS,
            Self::CheckFailure => exit::CHECK_FAILURE,
            Self::NumericalFailure => exit::NUMERICAL_FAILURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config: RunConfig,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub duration_secs: f64,
    pub files: Vec<FileEntry>,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid run: {0}")]
    Invalid(Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => exit::OTHER,
            Self::Invalid(_) => exit::INVALID_CONFIG,
        }
    }
}

fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::Diverged { .. }
            | Error::RankDeficient { .. }
            | Error::Singular { .. }
            | Error::NonFinite(_)
            | Error::DegenerateDataset { .. }
    )
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| RunError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, contents).map_err(|source| RunError::Io { path, source })?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes: contents.len() as u64,
            sha256: hex(&Sha256::digest(contents.as_bytes())),
        });
        Ok(())
    }

    fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<(), RunError> {
        let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
        s.push('\n');
        self.write(rel, &s)
    }

    fn write_trace(&mut self, trace: &TrainTrace) -> Result<(), RunError> {
        self.write("trace.csv", &trace.to_csv())?;
        self.write_json("trace.json", trace)
    }
}

#[derive(Serialize)]
struct Skipped {
    check: &'static str,
    reason: &'static str,
}

#[derive(Serialize)]
struct RunReport<'a> {
    mode: Mode,
    overall: Verdict,
    checks: &'a [CheckReport],
    skipped: &'a [Skipped],
}

#[derive(Serialize)]
struct SuiteEntry<'a> {
    file: String,
    check_name: &'a str,
    verdict: Verdict,
}

#[derive(Serialize)]
struct SuiteRollup<'a> {
    overall: Verdict,
    config: &'a SuiteConfig,
    checks: Vec<SuiteEntry<'a>>,
}

struct Seeds {
    dataset: u64,
    init: u64,
    monte_carlo: u64,
}

impl Seeds {
    fn from_run(seed: u64) -> Self {
        Self {
            dataset: derive_seed(seed, 1),
            init: derive_seed(seed, 2),
            monte_carlo: derive_seed(seed, 3),
        }
    }
}

/// What a pipeline produced before it either finished or hit a numerical failure.
enum Pipeline {
    Done(Status),
    Failed(String),
}

fn eta_mode(cfg: &RunConfig) -> EtaMode {
    match cfg.eta_mode {
        Some(EtaModeName::Fixed) => EtaMode::Fixed(cfg.eta.expect("validated config")),
        _ => EtaMode::Auto,
    }
}

fn diagnostics(cfg: &RunConfig) -> Diagnostics {
    Diagnostics {
        remainder: cfg.diag_remainder.unwrap_or(true),
        drift: cfg.diag_drift.unwrap_or(true),
        gram: cfg.diag_gram.unwrap_or(false),
    }
}

fn finish_checks(out: &mut Outputs, mode: Mode, checks: &[CheckReport], skipped: &[Skipped]) -> Result<Status, RunError> {
    let overall = rollup(checks);
    out.write_json(
        "report.json",
        &RunReport {
            mode,
            overall,
            checks,
            skipped,
        },
    )?;
    Ok(if overall == Verdict::Fail {
        Status::CheckFailure
    } else {
        Status::Pass
    })
}

/// Runs a train result through `ok`, or writes the partial trace of a
/// diverged run.
fn trained(
    out: &mut Outputs,
    result: ngdpinn_core::Result<TrainTrace>,
    ok: impl FnOnce(&mut Outputs, TrainTrace) -> Result<Pipeline, RunError>,
) -> Result<Pipeline, RunError> {
    match result {
        Ok(trace) => {
            out.write_trace(&trace)?;
            ok(out, trace)
        }
        Err(Error::Diverged { iter, loss, trace }) => {
            out.write_trace(&trace)?;
            Ok(Pipeline::Failed(format!("diverged at iteration {iter} with loss {loss:e}")))
        }
        Err(e) => Err(RunError::Invalid(e)),
    }
}

fn lift(e: Error) -> Result<Pipeline, RunError> {
    if is_numerical(&e) {
        Ok(Pipeline::Failed(e.to_string()))
    } else {
        Err(RunError::Invalid(e))
    }
}

macro_rules! attempt {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return lift(e),
        }
    };
}

fn regression_gd(cfg: &RunConfig, seeds: &Seeds, out: &mut Outputs) -> Result<Pipeline, RunError> {
    let (n, d, m) = (cfg.n.unwrap(), cfg.d.unwrap(), cfg.m.unwrap());
    let data = attempt!(RegressionDataset::sample(n, d, seeds.dataset));
    out.write_json("dataset.json", &data)?;
    let p0 = attempt!(init_params(m, data.dim(), ActivationKind::Relu, seeds.init));
    let diag = diagnostics(cfg);
    let result = train_gd(&p0, &data, eta_mode(cfg), cfg.iters.unwrap(), diag);
    if let Err(e) = &result {
        if !matches!(e, Error::Diverged { .. }) {
            return lift(result.unwrap_err());
        }
    }
    trained(out, result, |out, trace| {
        let gram = trace.gram.clone().expect("regression traces carry their Gram report");
        let mut checks = Vec::new();
        let mut skipped = Vec::new();
        if trace.steps() >= 50 {
            checks.push(check_gd_convergence(&trace, &gram).map_err(RunError::Invalid)?);
        } else {
            skipped.push(Skipped {
                check: "gd_convergence",
                reason: "fewer than 50 iterations",
            });
        }
        if diag.remainder && diag.gram {
            checks.push(check_recursion(&trace).map_err(RunError::Invalid)?);
        } else {
            skipped.push(Skipped {
                check: "recursion",
                reason: "needs diag_remainder and diag_gram",
            });
        }
        if diag.drift {
            checks.push(check_weight_drift(&trace, &gram).map_err(RunError::Invalid)?);
        } else {
            skipped.push(Skipped {
                check: "weight_drift",
                reason: "needs diag_drift",
            });
        }
        finish_checks(out, cfg.mode, &checks, &skipped).map(Pipeline::Done)
    })
}

fn pinn_problem(cfg: &RunConfig, seeds: &Seeds) -> ngdpinn_core::Result<ngdpinn_core::PinnDataset> {
    let inst = make_instance(cfg.instance.as_deref().unwrap(), cfg.d.unwrap())?;
    sample_dataset(&inst, cfg.n1.unwrap(), cfg.n2.unwrap(), seeds.dataset)
}

fn pinn_run(cfg: &RunConfig, seeds: &Seeds, out: &mut Outputs) -> Result<Pipeline, RunError> {
    let data = attempt!(pinn_problem(cfg, seeds));
    out.write_json("dataset.json", &data)?;
    let act = cfg.activation.unwrap();
    let optimizer = if cfg.mode == Mode::PinnGd {
        Optimizer::Gd
    } else {
        Optimizer::Ngd
    };
    let gram = match optimizer {
        Optimizer::Gd => {
            let g = attempt!(gram_inf_mc(&data, act, cfg.n_mc.unwrap(), seeds.monte_carlo));
            out.write_json("gram.json", &g)?;
            Some(g)
        }
        Optimizer::Ngd => None,
    };
    let p0 = attempt!(init_params(cfg.m.unwrap(), data.d_aug(), act, seeds.init));
    let diag = diagnostics(cfg);
    let settings = TrainSettings {
        optimizer,
        eta_mode: eta_mode(cfg),
        iters: cfg.iters.unwrap(),
        diagnostics: diag,
    };
    let result = train(&p0, &data, settings, gram.as_ref());
    if let Err(e) = &result {
        if !matches!(e, Error::Diverged { .. }) {
            return lift(result.unwrap_err());
        }
    }
    trained(out, result, |out, trace| {
        let mut checks = Vec::new();
        let mut skipped = Vec::new();
        match optimizer {
            Optimizer::Gd => {
                let gram = gram.as_ref().unwrap();
                if trace.steps() >= 50 {
                    checks.push(check_gd_convergence(&trace, gram).map_err(RunError::Invalid)?);
                } else {
                    skipped.push(Skipped {
                        check: "gd_convergence",
                        reason: "fewer than 50 iterations",
                    });
                }
                if diag.remainder && diag.gram {
                    checks.push(check_recursion(&trace).map_err(RunError::Invalid)?);
                } else {
                    skipped.push(Skipped {
                        check: "recursion",
                        reason: "needs diag_remainder and diag_gram",
                    });
                }
            }
            Optimizer::Ngd => {
                if trace.eta < 1.0 {
                    checks.push(check_ngd_linear(&trace, trace.eta).map_err(RunError::Invalid)?);
                } else if act == ActivationKind::SmoothTanh {
                    checks.push(check_ngd_quadratic(&trace).map_err(RunError::Invalid)?);
                } else {
                    skipped.push(Skipped {
                        check: "ngd_quadratic",
                        reason: "needs the smooth-tanh activation",
                    });
                }
            }
        }
        finish_checks(out, cfg.mode, &checks, &skipped).map(Pipeline::Done)
    })
}

fn gram_report(cfg: &RunConfig, seeds: &Seeds, out: &mut Outputs) -> Result<Pipeline, RunError> {
    let report: GramReport = match cfg.problem.unwrap() {
        ProblemKind::Regression => {
            let data = attempt!(RegressionDataset::sample(cfg.n.unwrap(), cfg.d.unwrap(), seeds.dataset));
            out.write_json("dataset.json", &data)?;
            let mut g = attempt!(gram_inf_relu(&data));
            if let Some(m) = cfg.m {
                let p0 = attempt!(init_params(m, data.dim(), ActivationKind::Relu, seeds.init));
                g.attach_concentration(&attempt!(gram_finite(&p0, &data)));
            }
            g
        }
        ProblemKind::Pinn => {
            let data = attempt!(pinn_problem(cfg, seeds));
            out.write_json("dataset.json", &data)?;
            let act = cfg.activation.unwrap();
            let mut g = attempt!(gram_inf_mc(&data, act, cfg.n_mc.unwrap(), seeds.monte_carlo));
            if let Some(m) = cfg.m {
                let p0 = attempt!(init_params(m, data.d_aug(), act, seeds.init));
                g.attach_concentration(&gram_pinn(&attempt!(jacobian(&p0, &data))));
            }
            g
        }
    };
    out.write_json("report.json", &report)?;
    Ok(Pipeline::Done(Status::Pass))
}

fn check_suite(cfg: &RunConfig, out: &mut Outputs) -> Result<Pipeline, RunError> {
    let suite_cfg = SuiteConfig::for_profile(cfg.profile.unwrap(), cfg.seed, cfg.n_mc.unwrap());
    let report = attempt!(run_suite(&suite_cfg));
    let mut entries = Vec::with_capacity(report.checks.len());
    for (i, c) in report.checks.iter().enumerate() {
        let file = format!("checks/{:02}-{}.json", i + 1, c.check_name);
        out.write_json(&file, c)?;
        entries.push(SuiteEntry {
            file,
            check_name: &c.check_name,
            verdict: c.verdict,
        });
    }
    out.write_json(
        "report.json",
        &SuiteRollup {
            overall: report.overall,
            config: &report.config,
            checks: entries,
        },
    )?;
    Ok(Pipeline::Done(if report.overall == Verdict::Fail {
        Status::CheckFailure
    } else {
        Status::Pass
    }))
}

/// Executes the configured pipeline and writes its outputs plus
/// `manifest.json` into `config.out`.
///
/// Numerical failures (divergence, rank deficiency, degenerate data) are
/// reported through the manifest's status; outputs written before the
/// failure are kept.
pub fn run(config: &RunConfig) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    let mut out = Outputs::new(&config.out)?;
    out.write("config.toml", &config.to_toml())?;
    let seeds = Seeds::from_run(config.seed);
    let pipeline = match config.mode {
        Mode::RegressionGd => regression_gd(config, &seeds, &mut out)?,
        Mode::PinnGd | Mode::PinnNgd => pinn_run(config, &seeds, &mut out)?,
        Mode::GramReport => gram_report(config, &seeds, &mut out)?,
        Mode::CheckSuite => check_suite(config, &mut out)?,
    };
    let (status, message) = match pipeline {
        Pipeline::Done(s) => (s, None),
        Pipeline::Failed(msg) => (Status::NumericalFailure, Some(msg)),
    };
    let mut seed_map = BTreeMap::from([("run".to_string(), config.seed)]);
    if config.mode != Mode::CheckSuite {
        seed_map.insert("dataset".into(), seeds.dataset);
        seed_map.insert("init".into(), seeds.init);
        seed_map.insert("monte_carlo".into(), seeds.monte_carlo);
    }
    let mut files = out.files;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        config: config.clone(),
        status,
        message,
        duration_secs: start.elapsed().as_secs_f64(),
        files,
        seeds: seed_map,
    };
    write_atomic(&config.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn write_atomic(path: &Path, manifest: &RunManifest) -> Result<(), RunError> {
    let tmp = path.with_extension("json.tmp");
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    fs::write(&tmp, s).map_err(|source| RunError::Io {
        path: tmp.clone(),
        source,
    })?;
    fs::rename(&tmp, path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}
