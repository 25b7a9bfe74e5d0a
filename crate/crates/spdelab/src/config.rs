//! Experiment configuration: a flat, diff-friendly key-value format with
//! dotted section names (`equation.kind = heat`), full validation that
//! reports every violation at once, and a canonical echo used for manifests
//! and config hashing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Violations(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    Heat,
    PLaplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    Smooth,
    Rough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Kacanov,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Regularity,
    Hypotheses,
    Ito,
    Oracle,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Regularity => "regularity",
            Mode::Hypotheses => "hypotheses",
            Mode::Ito => "ito",
            Mode::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquationCfg {
    pub kind: EquationKind,
    pub nu: f64,
    pub p: f64,
    pub kappa: f64,
    pub rho: f64,
    pub u0: InitialData,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseCfg {
    pub modes: usize,
    pub gamma: f64,
    pub b0: f64,
    pub b1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscCfg {
    pub n_interior: usize,
    pub tau: f64,
    pub t_final: f64,
}

impl DiscCfg {
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleCfg {
    pub paths: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverCfg {
    pub kind: SolverChoice,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisCfg {
    pub alphas: Vec<f64>,
    /// Empty list means the dyadic default ladder in `[4 tau, T/4]`.
    pub lags: Vec<usize>,
    pub modes: Vec<Mode>,
    pub hyp_samples: usize,
    pub ito_t: f64,
    pub ito_h: f64,
    pub ito_tau0: f64,
    pub ito_levels: usize,
    pub ito_paths: usize,
    /// Permits seminorm exponents alpha >= 1/2 in regularity runs.
    pub stress_mode: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputCfg {
    pub dir: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub equation: EquationCfg,
    pub noise: NoiseCfg,
    pub disc: DiscCfg,
    pub ensemble: EnsembleCfg,
    pub solver: SolverCfg,
    pub analysis: AnalysisCfg,
    pub output: OutputCfg,
}

struct Raw {
    entries: BTreeMap<String, String>,
    violations: Vec<String>,
}

impl Raw {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn violation(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        match self.take(key) {
            None => default,
            Some(text) => match text.parse() {
                Ok(v) => v,
                Err(_) => {
                    self.violation(format!("{key}: cannot parse '{text}'"));
                    default
                }
            },
        }
    }

    fn parse_list<T: std::str::FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T> {
        match self.take(key) {
            None => default,
            Some(text) if text.trim().is_empty() || text.trim() == "auto" => Vec::new(),
            Some(text) => {
                let mut out = Vec::new();
                for part in text.split(',') {
                    match part.trim().parse() {
                        Ok(v) => out.push(v),
                        Err(_) => {
                            self.violation(format!("{key}: cannot parse entry '{}'", part.trim()))
                        }
                    }
                }
                out
            }
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut violations = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_string();
                if entries
                    .insert(key.clone(), value.trim().to_string())
                    .is_some()
                {
                    violations.push(format!("duplicate key '{key}' (line {})", lineno + 1));
                }
            }
            None => violations.push(format!("line {}: expected 'key = value'", lineno + 1)),
        }
    }
    let mut raw = Raw {
        entries,
        violations,
    };

    let kind = match raw.take("equation.kind").as_deref() {
        Some("heat") => EquationKind::Heat,
        Some("p_laplace") => EquationKind::PLaplace,
        Some(other) => {
            raw.violation(format!(
                "equation.kind: unknown kind '{other}' (expected heat | p_laplace)"
            ));
            EquationKind::Heat
        }
        None => {
            raw.violation("equation.kind: required key missing");
            EquationKind::Heat
        }
    };
    let nu: f64 = raw.parse("equation.nu", 1.0);
    let p: f64 = raw.parse("equation.p", 3.0);
    let kappa: f64 = raw.parse("equation.kappa", 0.01);
    let rho: f64 = raw.parse("equation.rho", 0.0);
    let u0 = match raw.take("equation.u0").as_deref() {
        None | Some("smooth") => InitialData::Smooth,
        Some("rough") => InitialData::Rough,
        Some(other) => {
            raw.violation(format!(
                "equation.u0: unknown choice '{other}' (expected smooth | rough)"
            ));
            InitialData::Smooth
        }
    };

    let modes_k: usize = raw.parse("noise.modes", 32);
    let gamma: f64 = raw.parse("noise.gamma", 2.0);
    let b0: f64 = raw.parse("noise.b0", 1.0);
    let b1: f64 = raw.parse("noise.b1", 0.0);

    let n_interior: usize = raw.parse("disc.n_interior", 64);
    let tau: f64 = raw.parse("disc.tau", 2f64.powi(-10));
    let t_final: f64 = raw.parse("disc.t_final", 1.0);

    let paths: usize = raw.parse("ensemble.paths", 128);
    let master_seed: u64 = raw.parse("ensemble.master_seed", 42);

    let solver_kind = match raw.take("solver.kind").as_deref() {
        None | Some("kacanov") => SolverChoice::Kacanov,
        Some("newton") => SolverChoice::Newton,
        Some(other) => {
            raw.violation(format!(
                "solver.kind: unknown solver '{other}' (expected kacanov | newton)"
            ));
            SolverChoice::Kacanov
        }
    };
    let tol: f64 = raw.parse("solver.tol", 1e-10);
    let max_iter: usize = raw.parse("solver.max_iter", 200);

    let alphas: Vec<f64> = raw.parse_list("analysis.alphas", vec![0.25]);
    let lags: Vec<usize> = raw.parse_list("analysis.lags", Vec::new());
    let mode_names: Vec<String> = raw.parse_list(
        "analysis.modes",
        vec!["regularity".to_string()],
    );
    let mut analysis_modes = Vec::new();
    for name in &mode_names {
        match name.as_str() {
            "simulate" => analysis_modes.push(Mode::Simulate),
            "regularity" => analysis_modes.push(Mode::Regularity),
            "hypotheses" => analysis_modes.push(Mode::Hypotheses),
            "ito" => analysis_modes.push(Mode::Ito),
            "oracle" => analysis_modes.push(Mode::Oracle),
            other => raw.violation(format!("analysis.modes: unrecognized mode '{other}'")),
        }
    }
    analysis_modes.sort();
    analysis_modes.dedup();
    let hyp_samples: usize = raw.parse("analysis.hyp_samples", 10_000);
    let ito_t: f64 = raw.parse("analysis.ito_t", 0.75);
    let ito_h: f64 = raw.parse("analysis.ito_h", 0.25);
    let ito_tau0: f64 = raw.parse("analysis.ito_tau0", 2f64.powi(-8));
    let ito_levels: usize = raw.parse("analysis.ito_levels", 5);
    let ito_paths: usize = raw.parse("analysis.ito_paths", 512);
    let stress_mode: bool = raw.parse("analysis.stress_mode", false);

    let dir = raw.take("output.dir").unwrap_or_else(|| "out".to_string());

    for key in raw.entries.keys() {
        raw.violations.push(format!("unknown key '{key}'"));
    }
    let mut violations = std::mem::take(&mut raw.violations);

    // cross-field invariants
    if !(nu > 0.0) {
        violations.push(format!("equation.nu: must be positive (got {nu})"));
    }
    if !(p > 1.0) {
        violations.push(format!("equation.p: must exceed 1 (got {p})"));
    }
    if !(kappa >= 0.0) {
        violations.push(format!("equation.kappa: must be nonnegative (got {kappa})"));
    }
    if !(rho >= 0.0) {
        violations.push(format!("equation.rho: must be nonnegative (got {rho})"));
    }
    if kind == EquationKind::PLaplace && p < 2.0 && kappa <= 0.0 {
        violations.push(format!(
            "equation.p/equation.kappa: p < 2 requires kappa > 0 (degenerate edge weights); got p = {p}, kappa = {kappa}"
        ));
    }
    if modes_k < 1 {
        violations.push("noise.modes: need at least one mode".to_string());
    }
    if modes_k > n_interior {
        violations.push(format!(
            "noise.modes: {modes_k} exceeds the {n_interior} basis modes of the grid"
        ));
    }
    if !(gamma >= 0.0) {
        violations.push(format!("noise.gamma: must be nonnegative (got {gamma})"));
    }
    if !(b0 >= 0.0) || !(b1 >= 0.0) {
        violations.push(format!(
            "noise.b0/noise.b1: amplitudes must be nonnegative (got {b0}, {b1})"
        ));
    }
    if n_interior < 1 {
        violations.push("disc.n_interior: need at least one node".to_string());
    }
    if !(tau > 0.0) {
        violations.push(format!("disc.tau: must be positive (got {tau})"));
    }
    if !(t_final > 0.0) {
        violations.push(format!("disc.t_final: must be positive (got {t_final})"));
    }
    let n_steps_f = t_final / tau;
    if tau > 0.0 && t_final > 0.0 {
        if (n_steps_f - n_steps_f.round()).abs() > 1e-9 * n_steps_f.max(1.0) {
            violations.push(format!(
                "disc.t_final: must be an integer multiple of tau (T/tau = {n_steps_f})"
            ));
        } else if n_steps_f.round() < 1.0 {
            violations.push("disc: need at least one time step".to_string());
        }
    }
    if paths < 1 {
        violations.push("ensemble.paths: need at least one path".to_string());
    }
    if analysis_modes.contains(&Mode::Regularity) && paths < 2 {
        violations.push(
            "ensemble.paths: regularity mode needs at least 2 paths for confidence intervals"
                .to_string(),
        );
    }
    if !(tol > 0.0 && tol < 1.0) {
        violations.push(format!("solver.tol: must lie in (0, 1) (got {tol})"));
    }
    if max_iter < 1 {
        violations.push("solver.max_iter: need at least one iteration".to_string());
    }
    for a in &alphas {
        if !(*a > 0.0 && *a < 1.0) {
            violations.push(format!("analysis.alphas: {a} outside (0, 1)"));
        } else if *a >= 0.5 && !stress_mode && analysis_modes.contains(&Mode::Regularity) {
            violations.push(format!(
                "analysis.alphas: {a} >= 1/2 needs analysis.stress_mode = true"
            ));
        }
    }
    let n_steps = n_steps_f.round().max(1.0) as usize;
    for lag in &lags {
        if *lag < 1 || *lag >= n_steps {
            violations.push(format!(
                "analysis.lags: lag {lag} outside [1, {})",
                n_steps
            ));
        }
    }
    if hyp_samples < 1 {
        violations.push("analysis.hyp_samples: need at least one sample".to_string());
    }
    if analysis_modes.contains(&Mode::Ito) {
        if !(ito_t > 0.0 && ito_t <= 1.0) {
            violations.push(format!("analysis.ito_t: must lie in (0, 1] (got {ito_t})"));
        }
        if !(ito_h > 0.0 && ito_h <= ito_t) {
            violations.push(format!(
                "analysis.ito_h: must lie in (0, ito_t] (got {ito_h})"
            ));
        }
        if !(ito_tau0 > 0.0 && ito_tau0 < 1.0) {
            violations.push(format!(
                "analysis.ito_tau0: must lie in (0, 1) (got {ito_tau0})"
            ));
        }
        if ito_levels < 2 {
            violations.push("analysis.ito_levels: need at least two refinement levels".to_string());
        }
        if ito_paths < 2 {
            violations.push("analysis.ito_paths: need at least two paths".to_string());
        }
        if ito_tau0 > 0.0 {
            for (name, value) in [
                ("analysis.ito_t", ito_t),
                ("analysis.ito_h", ito_h),
                ("unit horizon", 1.0),
            ] {
                let r = value / ito_tau0;
                if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
                    violations.push(format!(
                        "{name}: {value} is not a grid multiple of ito_tau0 = {ito_tau0}"
                    ));
                }
            }
        }
    }

    if !violations.is_empty() {
        return Err(ConfigError::Violations(violations));
    }

    Ok(ExperimentConfig {
        equation: EquationCfg {
            kind,
            nu,
            p,
            kappa,
            rho,
            u0,
        },
        noise: NoiseCfg {
            modes: modes_k,
            gamma,
            b0,
            b1,
        },
        disc: DiscCfg {
            n_interior,
            tau,
            t_final,
        },
        ensemble: EnsembleCfg { paths, master_seed },
        solver: SolverCfg {
            kind: solver_kind,
            tol,
            max_iter,
        },
        analysis: AnalysisCfg {
            alphas,
            lags,
            modes: analysis_modes,
            hyp_samples,
            ito_t,
            ito_h,
            ito_tau0,
            ito_levels,
            ito_paths,
            stress_mode,
        },
        output: OutputCfg { dir },
    })
}

impl ExperimentConfig {
    /// Canonical text form with every key resolved (defaults included);
    /// reparsing it reproduces the configuration.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let kind = match self.equation.kind {
            EquationKind::Heat => "heat",
            EquationKind::PLaplace => "p_laplace",
        };
        let u0 = match self.equation.u0 {
            InitialData::Smooth => "smooth",
            InitialData::Rough => "rough",
        };
        let solver = match self.solver.kind {
            SolverChoice::Kacanov => "kacanov",
            SolverChoice::Newton => "newton",
        };
        let join_f64 = |xs: &[f64]| {
            xs.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let join_usize = |xs: &[usize]| {
            xs.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let modes = self
            .analysis
            .modes
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "analysis.alphas = {}", join_f64(&self.analysis.alphas));
        let _ = writeln!(s, "analysis.hyp_samples = {}", self.analysis.hyp_samples);
        let _ = writeln!(s, "analysis.ito_h = {}", self.analysis.ito_h);
        let _ = writeln!(s, "analysis.ito_levels = {}", self.analysis.ito_levels);
        let _ = writeln!(s, "analysis.ito_paths = {}", self.analysis.ito_paths);
        let _ = writeln!(s, "analysis.ito_t = {}", self.analysis.ito_t);
        let _ = writeln!(s, "analysis.ito_tau0 = {}", self.analysis.ito_tau0);
        let _ = writeln!(s, "analysis.lags = {}", join_usize(&self.analysis.lags));
        let _ = writeln!(s, "analysis.modes = {modes}");
        let _ = writeln!(s, "analysis.stress_mode = {}", self.analysis.stress_mode);
        let _ = writeln!(s, "disc.n_interior = {}", self.disc.n_interior);
        let _ = writeln!(s, "disc.t_final = {}", self.disc.t_final);
        let _ = writeln!(s, "disc.tau = {}", self.disc.tau);
        let _ = writeln!(s, "ensemble.master_seed = {}", self.ensemble.master_seed);
        let _ = writeln!(s, "ensemble.paths = {}", self.ensemble.paths);
        let _ = writeln!(s, "equation.kappa = {}", self.equation.kappa);
        let _ = writeln!(s, "equation.kind = {kind}");
        let _ = writeln!(s, "equation.nu = {}", self.equation.nu);
        let _ = writeln!(s, "equation.p = {}", self.equation.p);
        let _ = writeln!(s, "equation.rho = {}", self.equation.rho);
        let _ = writeln!(s, "equation.u0 = {u0}");
        let _ = writeln!(s, "noise.b0 = {}", self.noise.b0);
        let _ = writeln!(s, "noise.b1 = {}", self.noise.b1);
        let _ = writeln!(s, "noise.gamma = {}", self.noise.gamma);
        let _ = writeln!(s, "noise.modes = {}", self.noise.modes);
        let _ = writeln!(s, "output.dir = {}", self.output.dir);
        let _ = writeln!(s, "solver.kind = {solver}");
        let _ = writeln!(s, "solver.max_iter = {}", self.solver.max_iter);
        let _ = writeln!(s, "solver.tol = {}", self.solver.tol);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_heat_config_fills_defaults() {
        let cfg = parse_config_str("equation.kind = heat\n").unwrap();
        assert_eq!(cfg.equation.kind, EquationKind::Heat);
        assert_eq!(cfg.noise.modes, 32);
        assert_eq!(cfg.disc.n_steps(), 1024);
        assert_eq!(cfg.analysis.modes, vec![Mode::Regularity]);
        // the echo reparses to the same configuration
        let echoed = parse_config_str(&cfg.canonical_text()).unwrap();
        assert_eq!(echoed.canonical_text(), cfg.canonical_text());
    }

    #[test]
    fn degenerate_plaplace_named_in_error() {
        let err = parse_config_str(
            "equation.kind = p_laplace\nequation.p = 1.5\nequation.kappa = 0\n",
        )
        .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("p < 2 requires kappa > 0"), "{text}");
    }

    #[test]
    fn unknown_key_listed() {
        let err = parse_config_str("equation.kind = heat\npp = 3\n").unwrap_err();
        assert!(err.to_string().contains("unknown key 'pp'"));
    }

    #[test]
    fn all_violations_reported_together() {
        let err = parse_config_str(
            "equation.kind = p_laplace\nequation.p = 1.5\nequation.kappa = 0\n\
             disc.tau = -1\nanalysis.alphas = 1.5\npp = 3\n",
        )
        .unwrap_err();
        let text = err.to_string();
        for needle in ["kappa > 0", "disc.tau", "1.5 outside", "unknown key"] {
            assert!(text.contains(needle), "missing '{needle}' in: {text}");
        }
    }

    #[test]
    fn alpha_above_half_needs_stress_mode() {
        let bad = parse_config_str("equation.kind = heat\nanalysis.alphas = 0.6\n");
        assert!(bad.is_err());
        let ok = parse_config_str(
            "equation.kind = heat\nanalysis.alphas = 0.6\nanalysis.stress_mode = true\n",
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn non_integer_step_count_rejected() {
        let err =
            parse_config_str("equation.kind = heat\ndisc.tau = 0.3\ndisc.t_final = 1.0\n")
                .unwrap_err();
        assert!(err.to_string().contains("integer multiple"));
    }
}
