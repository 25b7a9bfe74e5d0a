//! Batch experiment orchestration: build the model from a configuration,
//! dispatch per-path work to a worker pool with derived seeds, aggregate in
//! path-index order and emit CSV/JSON outputs whose bytes depend only on
//! `(config, master seed)` - never on the worker count. The manifest with
//! per-file checksums is written last.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{
    EquationKind, ExperimentConfig, InitialData, Mode, SolverChoice,
};
use crate::field::{laplacian_eigs, NodeField, SpectralBasis};
use crate::noise::{path_seed, GaussianStream, NoiseSpec, WienerIncrements};
use crate::operators::{
    check_hypotheses, AuditorConfig, DiffusionSpec, DriftSpec, PLaplaceSpec,
};
use crate::regularity::{
    brownian_path, diff_quotient, dyadic_lags, fit_exponent, ito_identity_check, mc_aggregate,
    ou_path, sobolev_seminorm, sq_increment_integral, GPath,
};
use crate::stepper::{simulate_path, SolverKind, StepperConfig, Trajectory};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("output file '{0}' exists; pass --overwrite to replace it")]
    WouldOverwrite(PathBuf),
    #[error("{failed} of {total} paths aborted (threshold 1%): first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("estimator failure: {0}")]
    Estimator(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Run metadata written after all payload files; embeds the resolved
/// configuration so a run is reproducible from the manifest alone.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    /// Wall-clock stamp only on request (`--stamp`); omitted by default so
    /// that reruns are byte-identical.
    pub timestamp: Option<String>,
    pub config: ExperimentConfig,
    pub files: Vec<FileDigest>,
}

/// The model objects shared by every mode.
pub struct Model {
    pub basis: Arc<SpectralBasis>,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub stepper: StepperConfig,
    pub u0: NodeField,
}

pub fn build_model(cfg: &ExperimentConfig) -> Model {
    let basis = Arc::new(laplacian_eigs(crate::field::Grid1D::new(cfg.disc.n_interior)));
    let drift = match cfg.equation.kind {
        EquationKind::Heat => DriftSpec::linear_heat(cfg.equation.nu, cfg.equation.rho),
        EquationKind::PLaplace => DriftSpec::p_laplace(
            PLaplaceSpec::new(cfg.equation.p, cfg.equation.kappa)
                .expect("validated by the config layer"),
            cfg.equation.rho,
        ),
    };
    let noise = NoiseSpec::new(cfg.noise.modes, cfg.noise.gamma, basis.clone())
        .expect("validated by the config layer");
    let diffusion = DiffusionSpec::new(cfg.noise.b0, cfg.noise.b1, noise);
    let mut stepper = StepperConfig::new(
        cfg.disc.tau,
        cfg.disc.n_steps(),
        match cfg.solver.kind {
            SolverChoice::Kacanov => SolverKind::Kacanov,
            SolverChoice::Newton => SolverKind::Newton,
        },
    );
    stepper.tol = cfg.solver.tol;
    stepper.max_iter = cfg.solver.max_iter;
    let u0 = initial_data(cfg, &basis);
    Model {
        basis,
        drift,
        diffusion,
        stepper,
        u0,
    }
}

/// Smooth default `e_1 + 0.5 e_2`; the rough variant has spectral
/// coefficients `k^{-1/2} xi_k` seeded from the master seed.
pub fn initial_data(cfg: &ExperimentConfig, basis: &SpectralBasis) -> NodeField {
    match cfg.equation.u0 {
        InitialData::Smooth => basis.eigenvector(1).axpy(0.5, basis.eigenvector(2)),
        InitialData::Rough => {
            let mut stream =
                GaussianStream::new(path_seed(cfg.ensemble.master_seed, u64::MAX));
            let coeffs: Vec<f64> = (1..=basis.n_modes())
                .map(|k| stream.next_standard() / (k as f64).sqrt())
                .collect();
            basis.synthesize(&coeffs)
        }
    }
}

#[derive(Serialize)]
struct AlphaStarCheck {
    alpha: f64,
    alpha_star: f64,
    consistent: bool,
}

#[derive(Serialize, Default)]
struct RunLog {
    modes_run: Vec<String>,
    aborted_paths: Vec<usize>,
    notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_star_checks: Option<Vec<AlphaStarCheck>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ito_fit_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_solver_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_solver_iterations: Option<usize>,
}

struct OutputSet {
    files: Vec<(String, String)>,
}

impl OutputSet {
    fn new() -> Self {
        OutputSet { files: Vec::new() }
    }

    fn add(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

struct PathOutcome {
    dq_integrals: Vec<f64>,
    seminorms: Vec<f64>,
    max_residual: f64,
    max_iterations: usize,
}

fn effective_lags(cfg: &ExperimentConfig) -> Vec<usize> {
    if !cfg.analysis.lags.is_empty() {
        return cfg.analysis.lags.clone();
    }
    let lags = dyadic_lags(cfg.disc.n_steps());
    if lags.is_empty() && cfg.disc.n_steps() >= 2 {
        vec![1]
    } else {
        lags
    }
}

fn simulate_one(model: &Model, seed: u64) -> Result<Trajectory, String> {
    let inc = WienerIncrements::sample(
        model.diffusion.noise.n_modes(),
        model.stepper.n_steps,
        model.stepper.tau,
        seed,
    )
    .map_err(|e| e.to_string())?;
    simulate_path(
        &model.u0,
        &model.drift,
        &model.diffusion,
        &inc,
        &model.stepper,
        &model.basis,
    )
    .map_err(|e| e.to_string())
}

fn regularity_mode(
    cfg: &ExperimentConfig,
    model: &Model,
    out: &mut OutputSet,
    log: &mut RunLog,
) -> Result<(), RunError> {
    let m = cfg.ensemble.paths;
    let lags = effective_lags(cfg);
    let alphas = &cfg.analysis.alphas;
    let master = cfg.ensemble.master_seed;
    let results: Vec<Result<PathOutcome, String>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let traj = simulate_one(model, path_seed(master, j as u64))?;
            let dq_integrals = lags
                .iter()
                .map(|&lag| sq_increment_integral(&traj.g, lag))
                .collect();
            let seminorms = alphas
                .iter()
                .map(|&a| sobolev_seminorm(&traj.g, a).map_err(|e| e.to_string()))
                .collect::<Result<Vec<f64>, String>>()?;
            let max_residual = traj.stats.iter().map(|s| s.residual).fold(0.0, f64::max);
            let max_iterations = traj.stats.iter().map(|s| s.iterations).max().unwrap_or(0);
            Ok(PathOutcome {
                dq_integrals,
                seminorms,
                max_residual,
                max_iterations,
            })
        })
        .collect();

    let mut ok = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(outcome) => ok.push(outcome),
            Err(e) => {
                log.aborted_paths.push(j);
                log.notes.push(format!("path {j} aborted: {e}"));
            }
        }
    }
    let failed = log.aborted_paths.len();
    if failed > 0 && (failed as f64) / (m as f64) > 0.01 {
        return Err(RunError::TooManyFailures {
            failed,
            total: m,
            first: log.notes.first().cloned().unwrap_or_default(),
        });
    }

    log.max_solver_residual = Some(ok.iter().map(|o| o.max_residual).fold(0.0, f64::max));
    log.max_solver_iterations = ok.iter().map(|o| o.max_iterations).max();

    let tau = model.stepper.tau;
    let mut dq_csv = String::from("h,D,ci_half,M,tau\n");
    let mut plot_dq = String::from("h,D\n");
    let mut hs = Vec::new();
    let mut ys = Vec::new();
    for (idx, &lag) in lags.iter().enumerate() {
        let h = lag as f64 * tau;
        let values: Vec<f64> = ok.iter().map(|o| o.dq_integrals[idx] / h).collect();
        let (mean, ci) =
            mc_aggregate(&values).map_err(|e| RunError::Estimator(e.to_string()))?;
        dq_csv.push_str(&format!("{h},{mean},{ci},{},{tau}\n", values.len()));
        plot_dq.push_str(&format!("{h},{mean}\n"));
        hs.push(h);
        ys.push(h * mean);
    }
    out.add("diff_quotient.csv", dq_csv);
    out.add("plot_diff_quotient.csv", plot_dq);

    let n_steps = model.stepper.n_steps;
    let mut sem_csv = String::from("alpha,value,ci_half,M,tau,N\n");
    let mut plot_sem = String::from("alpha,value\n");
    for (idx, &alpha) in alphas.iter().enumerate() {
        let values: Vec<f64> = ok.iter().map(|o| o.seminorms[idx]).collect();
        let (mean, ci) =
            mc_aggregate(&values).map_err(|e| RunError::Estimator(e.to_string()))?;
        sem_csv.push_str(&format!(
            "{alpha},{mean},{ci},{},{tau},{n_steps}\n",
            values.len()
        ));
        plot_sem.push_str(&format!("{alpha},{mean}\n"));
    }
    out.add("seminorm.csv", sem_csv);
    out.add("plot_seminorm.csv", plot_sem);

    let mut fit_csv = String::from("beta,intercept,r2,h_min,h_max\n");
    match fit_exponent(&hs, &ys) {
        Ok(fit) => {
            fit_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                fit.slope, fit.intercept, fit.r_squared, fit.h_min, fit.h_max
            ));
            let alpha_star = fit.slope / 2.0;
            log.alpha_star_checks = Some(
                alphas
                    .iter()
                    .map(|&alpha| AlphaStarCheck {
                        alpha,
                        alpha_star,
                        consistent: alpha_star >= alpha,
                    })
                    .collect(),
            );
        }
        Err(e) => log.notes.push(format!("exponent fit skipped: {e}")),
    }
    out.add("exponent_fit.csv", fit_csv);
    Ok(())
}

fn simulate_mode(
    cfg: &ExperimentConfig,
    model: &Model,
    out: &mut OutputSet,
    log: &mut RunLog,
) -> Result<(), RunError> {
    let traj = simulate_one(model, path_seed(cfg.ensemble.master_seed, 0))
        .map_err(RunError::Estimator)?;
    let mut csv = String::from("n,t,norm_u,norm_g,solver_iters,residual\n");
    for n in 0..=traj.n_steps() {
        let t = n as f64 * traj.tau;
        let norm_u = traj.u_norms[n];
        let norm_g = traj.g.sq_norm_at(n).sqrt();
        let (iters, residual) = if n == 0 {
            (0, 0.0)
        } else {
            (traj.stats[n - 1].iterations, traj.stats[n - 1].residual)
        };
        csv.push_str(&format!("{n},{t},{norm_u},{norm_g},{iters},{residual}\n"));
    }
    out.add("trajectory.csv", csv);
    log.notes
        .push("trajectory.csv records ensemble path 0".to_string());
    Ok(())
}

fn hypotheses_mode(
    cfg: &ExperimentConfig,
    model: &Model,
    out: &mut OutputSet,
) -> Result<(), RunError> {
    let auditor = AuditorConfig::new(
        cfg.analysis.hyp_samples,
        cfg.ensemble.master_seed,
        cfg.disc.t_final,
    );
    let report = check_hypotheses(&model.drift, &model.diffusion, &model.u0, &auditor);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    out.add("hypotheses.json", json + "\n");
    Ok(())
}

fn ito_mode(
    cfg: &ExperimentConfig,
    out: &mut OutputSet,
    log: &mut RunLog,
) -> Result<(), RunError> {
    let master = cfg.ensemble.master_seed;
    let paths = cfg.analysis.ito_paths;
    let t = cfg.analysis.ito_t;
    let h = cfg.analysis.ito_h;
    let tau0 = cfg.analysis.ito_tau0;
    let n0 = (1.0 / tau0).round() as usize;

    let per_level: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|j| {
            let mut inc = WienerIncrements::sample(1, n0, tau0, path_seed(master, j as u64))
                .expect("validated sizes");
            let mut residuals = Vec::with_capacity(cfg.analysis.ito_levels);
            for level in 0..cfg.analysis.ito_levels {
                if level > 0 {
                    let bridge =
                        path_seed(master.wrapping_add(0x17_0000 + level as u64), j as u64);
                    inc = inc.refine(bridge);
                }
                let path = ou_path(&inc, 1.0);
                let ledger = ito_identity_check(&path, t, h)
                    .map_err(|e| e.to_string())
                    .expect("window validated against the grid");
                residuals.push(ledger.residual.abs());
            }
            residuals
        })
        .collect();

    let mut csv = String::from("tau,t,h,mean_abs_residual,paths\n");
    let mut plot = String::from("tau,mean_abs_residual\n");
    let mut taus = Vec::new();
    let mut means = Vec::new();
    for level in 0..cfg.analysis.ito_levels {
        let tau = tau0 / (1 << level) as f64;
        let values: Vec<f64> = per_level.iter().map(|r| r[level]).collect();
        let (mean, _ci) =
            mc_aggregate(&values).map_err(|e| RunError::Estimator(e.to_string()))?;
        csv.push_str(&format!("{tau},{t},{h},{mean},{paths}\n"));
        plot.push_str(&format!("{tau},{mean}\n"));
        taus.push(tau);
        means.push(mean);
    }
    out.add("ito.csv", csv);
    out.add("plot_ito.csv", plot);
    if let Ok(fit) = fit_exponent(&taus, &means) {
        log.ito_fit_order = Some(fit.slope);
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleCheck {
    name: String,
    observed: f64,
    expected: f64,
    rel_err: f64,
    tol: f64,
    pass: bool,
}

#[derive(Serialize)]
struct OracleReport {
    checks: Vec<OracleCheck>,
    all_pass: bool,
}

/// Brownian self-tests of the estimators against closed forms:
/// `E D(h) = T - h` and the double-integral value of the seminorm.
fn oracle_mode(
    cfg: &ExperimentConfig,
    out: &mut OutputSet,
    log: &mut RunLog,
) -> Result<(), RunError> {
    let m = cfg.ensemble.paths.max(2);
    let n = cfg.disc.n_steps();
    let t_final = cfg.disc.t_final;
    let tau = cfg.disc.tau;
    let master = cfg.ensemble.master_seed;
    let paths: Vec<GPath> = (0..m)
        .into_par_iter()
        .map(|j| {
            let inc = WienerIncrements::sample(1, n, tau, path_seed(master, j as u64))
                .expect("validated sizes");
            brownian_path(&inc).g_path()
        })
        .collect();

    let mut checks = Vec::new();
    for &lag in &effective_lags(cfg) {
        let pt = diff_quotient(&paths, lag).map_err(|e| RunError::Estimator(e.to_string()))?;
        let expected = t_final - pt.h;
        let rel = (pt.estimate - expected).abs() / expected;
        checks.push(OracleCheck {
            name: format!("diff_quotient(h={})", pt.h),
            observed: pt.estimate,
            expected,
            rel_err: rel,
            tol: 0.05,
            pass: rel <= 0.05,
        });
    }
    for &alpha in &cfg.analysis.alphas {
        if alpha >= 0.5 {
            log.notes.push(format!(
                "oracle: no closed form for alpha = {alpha} >= 1/2; skipped"
            ));
            continue;
        }
        let values = paths
            .par_iter()
            .map(|p| sobolev_seminorm(p, alpha).map_err(|e| e.to_string()))
            .collect::<Result<Vec<f64>, String>>()
            .map_err(RunError::Estimator)?;
        let (mean, _ci) =
            mc_aggregate(&values).map_err(|e| RunError::Estimator(e.to_string()))?;
        let expected =
            2.0 * t_final.powf(2.0 - 2.0 * alpha) / ((1.0 - 2.0 * alpha) * (2.0 - 2.0 * alpha));
        let rel = (mean - expected).abs() / expected;
        checks.push(OracleCheck {
            name: format!("sobolev_seminorm(alpha={alpha})"),
            observed: mean,
            expected,
            rel_err: rel,
            tol: 0.10,
            pass: rel <= 0.10,
        });
    }
    let all_pass = checks.iter().all(|c| c.pass);
    let report = OracleReport { checks, all_pass };
    out.add(
        "oracle.json",
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    );
    Ok(())
}

/// Executes every requested mode and writes the output set plus manifest.
/// Outputs are byte-identical for any `workers` value.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    workers: usize,
    overwrite: bool,
    timestamp: Option<String>,
) -> Result<RunManifest, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| run_experiment_inner(cfg, overwrite, timestamp))
}

fn run_experiment_inner(
    cfg: &ExperimentConfig,
    overwrite: bool,
    timestamp: Option<String>,
) -> Result<RunManifest, RunError> {
    let model = build_model(cfg);
    let mut out = OutputSet::new();
    let mut log = RunLog::default();
    if !model.diffusion.noise.is_trace_class() {
        log.notes.push(format!(
            "noise covariance is not trace class (gamma = {})",
            cfg.noise.gamma
        ));
    }

    for mode in &cfg.analysis.modes {
        log.modes_run.push(mode.name().to_string());
        match mode {
            Mode::Simulate => simulate_mode(cfg, &model, &mut out, &mut log)?,
            Mode::Regularity => regularity_mode(cfg, &model, &mut out, &mut log)?,
            Mode::Hypotheses => hypotheses_mode(cfg, &model, &mut out)?,
            Mode::Ito => ito_mode(cfg, &mut out, &mut log)?,
            Mode::Oracle => oracle_mode(cfg, &mut out, &mut log)?,
        }
    }

    out.add(
        "run_log.json",
        serde_json::to_string_pretty(&log).expect("log serializes") + "\n",
    );

    let dir = Path::new(&cfg.output.dir);
    std::fs::create_dir_all(dir)?;
    let manifest_path = dir.join("manifest.json");
    if !overwrite {
        for (name, _) in &out.files {
            let path = dir.join(name);
            if path.exists() {
                return Err(RunError::WouldOverwrite(path));
            }
        }
        if manifest_path.exists() {
            return Err(RunError::WouldOverwrite(manifest_path));
        }
    }

    let mut files = Vec::new();
    for (name, content) in &out.files {
        std::fs::write(dir.join(name), content.as_bytes())?;
        files.push(FileDigest {
            name: name.clone(),
            sha256: sha256_hex(content.as_bytes()),
        });
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: sha256_hex(cfg.canonical_text().as_bytes()),
        timestamp,
        config: cfg.clone(),
        files,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&manifest_path, manifest_json.as_bytes())?;
    Ok(manifest)
}
