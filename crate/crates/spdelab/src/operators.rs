//! Concrete drift, diffusion and `G` instances (linear heat and p-Laplace
//! families) plus the empirical auditor for the structural hypotheses the
//! time-regularity statement rests on.
//!
//! Flux, companion map and scalar potential for the p-Laplace family:
//!
//! ```text
//! S(xi) = (kappa + |xi|)^(p-2) xi
//! F(xi) = (kappa + |xi|)^((p-2)/2) xi        |F(xi)|^2 = S(xi) xi
//! phi(r) = int_0^r (kappa + s)^(p-2) s ds   phi' = S on r >= 0
//! ```
//!
//! For `p = 2` both `S` and `F` collapse to the identity and the drift
//! coincides with the linear heat operator.

use serde::Serialize;
use thiserror::Error;

use crate::field::{
    dual_norm_exact_l2, edge_inner, h_inner, sqrt_minus_a, v_norm, EdgeField, NodeField,
    SpectralBasis,
};
use crate::noise::{GaussianStream, NoiseSpec};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("degenerate sample set: no usable pairs")]
    DegenerateSamples,
    #[error("invalid p-Laplace parameters: p={p}, kappa={kappa}")]
    InvalidParameters { p: f64, kappa: f64 },
}

/// Growth exponent and degeneracy shift of the nonlinear flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PLaplaceSpec {
    pub p: f64,
    pub kappa: f64,
}

impl PLaplaceSpec {
    pub fn new(p: f64, kappa: f64) -> Result<Self, OperatorError> {
        if !(p > 1.0) || !(kappa >= 0.0) || !p.is_finite() || !kappa.is_finite() {
            return Err(OperatorError::InvalidParameters { p, kappa });
        }
        Ok(PLaplaceSpec { p, kappa })
    }

    /// Scalar diffusivity `(kappa + |xi|)^(p-2)`.
    pub fn weight(&self, xi: f64) -> f64 {
        (self.kappa + xi.abs()).powf(self.p - 2.0)
    }

    /// Flux `S(xi)`; odd and nondecreasing.
    pub fn s_flux(&self, xi: f64) -> f64 {
        self.weight(xi) * xi
    }

    /// Companion map `F(xi)`; odd, with `|F(xi)|^2 = S(xi) xi`.
    pub fn f_map(&self, xi: f64) -> f64 {
        (self.kappa + xi.abs()).powf((self.p - 2.0) / 2.0) * xi
    }

    /// `S'(xi) = (kappa + |xi|)^(p-3) (kappa + (p-1)|xi|)`, the Newton weight.
    pub fn s_flux_derivative(&self, xi: f64) -> f64 {
        let b = self.kappa + xi.abs();
        if b == 0.0 {
            // only reachable for kappa = 0 at xi = 0
            return match self.p {
                p if p > 2.0 => 0.0,
                p if p == 2.0 => 1.0,
                _ => f64::INFINITY,
            };
        }
        b.powf(self.p - 2.0) * (self.kappa + (self.p - 1.0) * xi.abs()) / b
    }

    /// Antiderivative of `S` on `r >= 0` with `phi(0) = 0`.
    pub fn potential(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        let (p, k) = (self.p, self.kappa);
        if k == 0.0 {
            return r.powf(p) / p;
        }
        let b = k + r;
        b.powf(p) / p - k * b.powf(p - 1.0) / (p - 1.0) + k.powf(p) / (p * (p - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DriftKind {
    LinearHeat { nu: f64 },
    PLaplace(PLaplaceSpec),
}

/// Drift `A(t, u) = a(t) * base(u)` with `a(t) = 1 + rho t`. The base is
/// either the scaled Dirichlet Laplacian or the p-Laplace divergence form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub rho: f64,
}

impl DriftSpec {
    pub fn linear_heat(nu: f64, rho: f64) -> Self {
        assert!(nu > 0.0 && rho >= 0.0);
        DriftSpec {
            kind: DriftKind::LinearHeat { nu },
            rho,
        }
    }

    pub fn p_laplace(spec: PLaplaceSpec, rho: f64) -> Self {
        assert!(rho >= 0.0);
        DriftSpec {
            kind: DriftKind::PLaplace(spec),
            rho,
        }
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        1.0 + self.rho * t
    }
}

/// Value of the nonlinear quantity `G(u)`: node-based for the linear family
/// (`sqrt(nu) (-A)^(1/2) u`), edge-based for p-Laplace (`F(grad u)`). The
/// edge codomain is a genuine Hilbert space of its own; all estimators use
/// whichever inner product matches.
#[derive(Debug, Clone, PartialEq)]
pub enum GValue {
    Node(NodeField),
    Edge(EdgeField),
}

impl GValue {
    pub fn sq_norm(&self) -> f64 {
        match self {
            GValue::Node(f) => h_inner(f, f),
            GValue::Edge(f) => edge_inner(f, f),
        }
    }

    pub fn sq_dist(&self, other: &GValue) -> f64 {
        match (self, other) {
            (GValue::Node(a), GValue::Node(b)) => {
                let d = a.sub(b);
                h_inner(&d, &d)
            }
            (GValue::Edge(a), GValue::Edge(b)) => {
                assert_eq!(a.grid(), b.grid(), "grid mismatch");
                let dx = a.grid().dx();
                let s: f64 = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                dx * s
            }
            _ => panic!("G values live in different codomains"),
        }
    }

    pub fn components(&self) -> &[f64] {
        match self {
            GValue::Node(f) => f.values(),
            GValue::Edge(f) => f.values(),
        }
    }

    /// Quadrature weight of the codomain inner product.
    pub fn weight(&self) -> f64 {
        match self {
            GValue::Node(f) => f.grid().dx(),
            GValue::Edge(f) => f.grid().dx(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|v| v.is_finite())
    }
}

/// Operators the auditor and the stepper need from a drift family. The
/// blanket implementation below covers both built-in families; tests wrap it
/// to build deliberately broken drifts.
pub trait DriftOperator: Sync {
    fn apply(&self, t: f64, u: &NodeField) -> NodeField;
    /// `G` is frozen at `t = 0`, where the time factor is one.
    fn apply_g(&self, u: &NodeField, basis: &SpectralBasis) -> GValue;
    /// Coercivity exponent `q` of the family.
    fn growth_exponent(&self) -> f64;
    fn plaplace_spec(&self) -> Option<PLaplaceSpec> {
        None
    }
}

impl DriftOperator for DriftSpec {
    fn apply(&self, t: f64, u: &NodeField) -> NodeField {
        let a = self.time_factor(t);
        match &self.kind {
            DriftKind::LinearHeat { nu } => u.gradient().divergence().scale(a * nu),
            DriftKind::PLaplace(spec) => u
                .gradient()
                .map(|xi| spec.s_flux(xi))
                .divergence()
                .scale(a),
        }
    }

    fn apply_g(&self, u: &NodeField, basis: &SpectralBasis) -> GValue {
        match &self.kind {
            DriftKind::LinearHeat { nu } => {
                GValue::Node(sqrt_minus_a(u, basis).scale(nu.sqrt()))
            }
            DriftKind::PLaplace(spec) => GValue::Edge(u.gradient().map(|xi| spec.f_map(xi))),
        }
    }

    fn growth_exponent(&self) -> f64 {
        match &self.kind {
            DriftKind::LinearHeat { .. } => 2.0,
            DriftKind::PLaplace(spec) => spec.p,
        }
    }

    fn plaplace_spec(&self) -> Option<PLaplaceSpec> {
        match &self.kind {
            DriftKind::PLaplace(spec) => Some(*spec),
            _ => None,
        }
    }
}

/// Diffusion `B(t, u) w = (b0 + b1 u) w` applied pointwise to an assembled
/// noise field `w`; `b1 = 0` is the additive case.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub b0: f64,
    pub b1: f64,
    pub noise: NoiseSpec,
}

impl DiffusionSpec {
    pub fn new(b0: f64, b1: f64, noise: NoiseSpec) -> Self {
        assert!(b0 >= 0.0 && b1 >= 0.0);
        DiffusionSpec { b0, b1, noise }
    }

    pub fn apply(&self, _t: f64, u: &NodeField, w: &NodeField) -> NodeField {
        assert_eq!(u.grid(), w.grid(), "grid mismatch");
        let values = u
            .values()
            .iter()
            .zip(w.values())
            .map(|(ui, wi)| (self.b0 + self.b1 * ui) * wi)
            .collect();
        NodeField::from_values_unchecked(u.grid(), values)
    }

    /// Squared Hilbert-Schmidt norm of `zeta -> (b0 + b1 u) Q^(1/2) zeta`
    /// over the truncated modes: `sum_k q_k ||(b0 + b1 u) e_k||_H^2`.
    pub fn hs_norm_sq(&self, _t: f64, u: &NodeField) -> f64 {
        self.multiplier_hs_sq(u, self.b0, self.b1)
    }

    /// Same norm for the difference `B(t,u) - B(t,v)`, a multiplication by
    /// `b1 (u - v)`.
    pub fn hs_diff_sq(&self, _t: f64, u: &NodeField, v: &NodeField) -> f64 {
        let d = u.sub(v);
        self.multiplier_hs_sq(&d, 0.0, self.b1)
    }

    fn multiplier_hs_sq(&self, u: &NodeField, c0: f64, c1: f64) -> f64 {
        let basis = self.noise.basis();
        let dx = u.grid().dx();
        let mut total = 0.0;
        for k in 1..=self.noise.n_modes() {
            let e = basis.eigenvector(k);
            let s: f64 = u
                .values()
                .iter()
                .zip(e.values())
                .map(|(ui, ei)| {
                    let m = (c0 + c1 * ui) * ei;
                    m * m
                })
                .sum();
            total += self.noise.q_weight(k) * dx * s;
        }
        total
    }
}

/// Sampled two-sided bounds for the flux/companion equivalence: the extremes
/// of `(S(xi) - S(eta))(xi - eta) / |F(xi) - F(eta)|^2` over Gaussian pairs.
pub fn check_f_equivalence(
    spec: &PLaplaceSpec,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64), OperatorError> {
    assert!(n_samples >= 1);
    let mut stream = GaussianStream::new(seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut usable = 0usize;
    for _ in 0..n_samples {
        let xi = 2.0 * stream.next_standard();
        let eta = 2.0 * stream.next_standard();
        let df = spec.f_map(xi) - spec.f_map(eta);
        let denom = df * df;
        if denom == 0.0 {
            continue;
        }
        let num = (spec.s_flux(xi) - spec.s_flux(eta)) * (xi - eta);
        let ratio = num / denom;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        usable += 1;
    }
    if usable == 0 {
        return Err(OperatorError::DegenerateSamples);
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub sample: usize,
    pub value: f64,
    pub detail: String,
}

/// Outcome of one hypothesis check.
///
/// `constant` is the tightest constant observed over the sample set.
/// `worst_margin` is the minimal slack of the structural side condition where
/// the hypothesis has one (drift dissipativity for H1/H3/H6, the jump
/// threshold for H2); pure growth bounds (H4, H5, H7, H8) are tight at their
/// extremal sample by construction and report zero.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisRecord {
    pub id: String,
    pub constant: f64,
    pub samples: usize,
    pub worst_margin: f64,
    pub pass: bool,
    pub n_violations: usize,
    pub violations: Vec<Violation>,
}

const MAX_STORED_VIOLATIONS: usize = 256;

impl HypothesisRecord {
    fn new(id: &str, constant: f64, samples: usize, margin: f64, violations: Vec<Violation>) -> Self {
        let n_violations = violations.len();
        let mut stored = violations;
        stored.truncate(MAX_STORED_VIOLATIONS);
        HypothesisRecord {
            id: id.to_string(),
            constant,
            samples,
            worst_margin: margin,
            pass: n_violations == 0,
            n_violations,
            violations: stored,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub records: Vec<HypothesisRecord>,
    /// Sampled lower equivalence constant (p-Laplace drifts only).
    pub lambda_hat: Option<f64>,
    /// Sampled upper equivalence constant (p-Laplace drifts only).
    pub big_lambda_hat: Option<f64>,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn record(&self, id: &str) -> &HypothesisRecord {
        self.records
            .iter()
            .find(|r| r.id == id)
            .unwrap_or_else(|| panic!("no record for {id}"))
    }
}

#[derive(Debug, Clone)]
pub struct AuditorConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Hypotheses quantify over `t` in `[0, t_max]`.
    pub t_max: f64,
    /// Lambda-grid scans for the hemicontinuity check (each costs 101 drift
    /// applications, so fewer than `n_samples` are run).
    pub hemicontinuity_scans: usize,
    /// Fixed dictionary size for sampled dual-norm lower bounds.
    pub dual_directions: usize,
}

impl AuditorConfig {
    pub fn new(n_samples: usize, seed: u64, t_max: f64) -> Self {
        AuditorConfig {
            n_samples,
            seed,
            t_max,
            hemicontinuity_scans: (n_samples / 100).max(8),
            dual_directions: 64,
        }
    }
}

/// Random field with Gaussian spectral coefficients decaying like `1/k`;
/// covers both rough and smooth directions.
fn sample_field(stream: &mut GaussianStream, basis: &SpectralBasis) -> NodeField {
    let coeffs: Vec<f64> = (1..=basis.n_modes())
        .map(|k| stream.next_standard() / k as f64)
        .collect();
    basis.synthesize(&coeffs)
}

struct DualEstimator {
    /// Directions normalized to unit gradient q-norm.
    dictionary: Vec<NodeField>,
    exact_l2: bool,
}

impl DualEstimator {
    fn build(basis: &SpectralBasis, q: f64, n_dirs: usize, seed: u64) -> Self {
        if (q - 2.0).abs() < 1e-12 {
            return DualEstimator {
                dictionary: Vec::new(),
                exact_l2: true,
            };
        }
        let mut stream = GaussianStream::new(seed);
        let mut dictionary = Vec::with_capacity(n_dirs);
        while dictionary.len() < n_dirs {
            let v = sample_field(&mut stream, basis);
            let nv = v_norm(&v, q);
            if nv > 0.0 {
                dictionary.push(v.scale(1.0 / nv));
            }
        }
        DualEstimator {
            dictionary,
            exact_l2: false,
        }
    }

    fn dual_norm(&self, w: &NodeField, basis: &SpectralBasis) -> f64 {
        if self.exact_l2 {
            return dual_norm_exact_l2(w, basis);
        }
        self.dictionary
            .iter()
            .map(|v| h_inner(w, v).abs())
            .fold(0.0, f64::max)
    }
}

/// Empirical audit of the structural hypotheses on sampled field pairs and
/// times. Genuine violations (anti-monotone drift, negative dissipation) are
/// data, not errors; the report carries the offending samples.
pub fn check_hypotheses(
    drift: &dyn DriftOperator,
    diffusion: &DiffusionSpec,
    u0: &NodeField,
    cfg: &AuditorConfig,
) -> HypothesisReport {
    let basis = diffusion.noise.basis();
    assert_eq!(u0.grid(), basis.grid(), "grid mismatch");
    let q = drift.growth_exponent();
    let qp = q / (q - 1.0);
    let n = cfg.n_samples.max(1);
    let dual = DualEstimator::build(basis, q, cfg.dual_directions, cfg.seed ^ 0x00D1_C7A5);
    let ones_h_norm = {
        let ones = NodeField::from_fn(basis.grid(), |_| 1.0);
        ones.h_norm()
    };
    let f_const = diffusion.b0 * ones_h_norm;

    let mut stream = GaussianStream::new(cfg.seed);

    let mut c1 = f64::NEG_INFINITY;
    let mut h1_margin = f64::INFINITY;
    let mut h1_viol = Vec::new();
    let mut c2 = f64::INFINITY;
    let mut h3_margin = f64::INFINITY;
    let mut h3_viol = Vec::new();
    let mut c4 = 0.0f64;
    let mut h4_viol = Vec::new();
    let mut c5 = 0.0f64;
    let mut h5_viol = Vec::new();
    let mut c6 = f64::INFINITY;
    let mut h6_margin = f64::INFINITY;
    let mut h6_viol = Vec::new();
    let mut c7 = 0.0f64;
    let mut h7_viol = Vec::new();

    for i in 0..n {
        let u = sample_field(&mut stream, basis);
        let v = sample_field(&mut stream, basis);
        let t = cfg.t_max * stream.next_uniform();
        let s = cfg.t_max * stream.next_uniform();
        let du = u.sub(&v);
        let du_h_sq = h_inner(&du, &du);

        let au = drift.apply(t, &u);
        let av = drift.apply(t, &v);
        let da = au.sub(&av);
        let pairing = h_inner(&da, &du);
        // Cauchy-Schwarz scale for rounding tolerances
        let cs = da.h_norm() * du.h_norm();
        let tol = 1e-9 * (cs + 1e-300);

        // H1: 2<dA, du> + ||dB||_HS^2 <= c1 ||du||_H^2, with the drift part
        // required to be dissipative on its own for these families.
        if du_h_sq > 0.0 {
            let hs_diff = diffusion.hs_diff_sq(t, &u, &v);
            c1 = c1.max((2.0 * pairing + hs_diff) / du_h_sq);
        }
        h1_margin = h1_margin.min(-pairing);
        if pairing > tol {
            h1_viol.push(Violation {
                sample: i,
                value: pairing,
                detail: "drift pairing <A(u)-A(v), u-v> is positive".into(),
            });
        }

        // H3: <A(t,u), u> <= -c2 ||u||_V^q + c3 with c3 = 0 for these families.
        let coercive = h_inner(&au, &u);
        let u_v_norm_q = v_norm(&u, q).powf(q);
        if u_v_norm_q > 0.0 {
            c2 = c2.min(-coercive / u_v_norm_q);
        }
        let tol3 = 1e-9 * (au.h_norm() * u.h_norm() + 1e-300);
        h3_margin = h3_margin.min(-coercive);
        if coercive > tol3 {
            h3_viol.push(Violation {
                sample: i,
                value: coercive,
                detail: "<A(u), u> is positive: no dissipation".into(),
            });
        }

        // H4: ||A(t,u)||_{V'}^{q'} <= c4 (1 + ||u||_V^q).
        let dual_a = dual.dual_norm(&au, basis);
        let h4_val = dual_a.powf(qp) / (1.0 + u_v_norm_q);
        if h4_val.is_finite() {
            c4 = c4.max(h4_val);
        } else {
            h4_viol.push(Violation {
                sample: i,
                value: h4_val,
                detail: "non-finite growth ratio".into(),
            });
        }

        // H5: ||B(t,u)||_HS <= c5 (f + ||u||_H) with f = b0 ||1||_H.
        let hs = diffusion.hs_norm_sq(t, &u).sqrt();
        let denom5 = f_const + u.h_norm();
        if denom5 > 0.0 {
            let r5 = hs / denom5;
            if r5.is_finite() {
                c5 = c5.max(r5);
            } else {
                h5_viol.push(Violation {
                    sample: i,
                    value: r5,
                    detail: "non-finite diffusion growth ratio".into(),
                });
            }
        }

        // H6: -<A(t,u)-A(t,v), u-v> >= c6 ||G(u)-G(v)||^2 in the G codomain.
        let gu = drift.apply_g(&u, basis);
        let gv = drift.apply_g(&v, basis);
        let dg_sq = gu.sq_dist(&gv);
        if dg_sq > 0.0 {
            let lhs = -pairing;
            c6 = c6.min(lhs / dg_sq);
            h6_margin = h6_margin.min(lhs);
            if lhs < -tol {
                h6_viol.push(Violation {
                    sample: i,
                    value: lhs / dg_sq,
                    detail: "dissipation difference is negative".into(),
                });
            }
        }

        // H7: ||A(t,u)-A(s,u)||_{V'}^{q'} <= c7 (1 + ||u||_V^q) |t-s|.
        let gap = (t - s).abs();
        if gap > 1e-12 {
            let as_u = drift.apply(s, &u);
            let dual_dt = dual.dual_norm(&au.sub(&as_u), basis);
            let h7_val = dual_dt.powf(qp) / ((1.0 + u_v_norm_q) * gap);
            if h7_val.is_finite() {
                c7 = c7.max(h7_val);
            } else {
                h7_viol.push(Violation {
                    sample: i,
                    value: h7_val,
                    detail: "non-finite time-regularity ratio".into(),
                });
            }
        }
    }

    // H2: continuity of lambda -> <A(t, u + lambda v), w> on a 101-point grid;
    // a jump above 10x the median one-step change flags a discontinuity.
    let scans = cfg.hemicontinuity_scans.max(1);
    let mut h2_margin = f64::INFINITY;
    let mut h2_ratio = 0.0f64;
    let mut h2_viol = Vec::new();
    for j in 0..scans {
        let u = sample_field(&mut stream, basis);
        let v = sample_field(&mut stream, basis);
        let w = sample_field(&mut stream, basis);
        let t = cfg.t_max * stream.next_uniform();
        let grid_pts = 101;
        let values: Vec<f64> = (0..grid_pts)
            .map(|g| {
                let lambda = -1.0 + 2.0 * g as f64 / (grid_pts - 1) as f64;
                h_inner(&drift.apply(t, &u.axpy(lambda, &v)), &w)
            })
            .collect();
        let mut jumps: Vec<f64> = values.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
        let max_jump = jumps.iter().cloned().fold(0.0, f64::max);
        jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = jumps[jumps.len() / 2];
        let threshold = if median > 0.0 {
            10.0 * median
        } else {
            let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
            1e-9 * (1.0 + scale)
        };
        h2_margin = h2_margin.min(threshold - max_jump);
        if median > 0.0 {
            h2_ratio = h2_ratio.max(max_jump / median);
        }
        if max_jump > threshold {
            h2_viol.push(Violation {
                sample: j,
                value: max_jump,
                detail: format!("jump {max_jump:.3e} above threshold {threshold:.3e}"),
            });
        }
    }

    // H8: ||A(t, u0)||_H finite along a time grid.
    let mut c8 = 0.0f64;
    let mut h8_viol = Vec::new();
    let t_grid = 11;
    for g in 0..t_grid {
        let t = cfg.t_max * g as f64 / (t_grid - 1) as f64;
        let a0 = drift.apply(t, u0);
        let val = h_inner(&a0, &a0);
        if val.is_finite() {
            c8 = c8.max(val);
        } else {
            h8_viol.push(Violation {
                sample: g,
                value: val,
                detail: format!("A(t, u0) leaves H at t = {t}"),
            });
        }
    }

    let mut notes = Vec::new();
    if !diffusion.noise.is_trace_class() {
        notes.push(format!(
            "noise covariance is not trace class (gamma = {} <= 1): stress regime",
            diffusion.noise.gamma()
        ));
    }
    let mut lambda_hat = None;
    let mut big_lambda_hat = None;
    if let Some(spec) = drift.plaplace_spec() {
        if (q - 2.0).abs() > 1e-12 {
            notes.push(
                "dual norms for q != 2 are sampled lower bounds; growth constants are \
                 order-of-magnitude certificates"
                    .into(),
            );
        }
        if let Ok((lo, hi)) = check_f_equivalence(&spec, n.max(10_000), cfg.seed ^ 0x0F0F) {
            lambda_hat = Some(lo);
            big_lambda_hat = Some(hi);
            notes.push(format!(
                "H6 constant cross-checked against flux/companion equivalence: \
                 lambda_hat = {lo:.6}, Lambda_hat = {hi:.6}"
            ));
        }
    }

    let records = vec![
        HypothesisRecord::new("H1", c1, n, h1_margin, h1_viol),
        HypothesisRecord::new("H2", h2_ratio, scans, h2_margin, h2_viol),
        HypothesisRecord::new("H3", c2, n, h3_margin, h3_viol),
        HypothesisRecord::new("H4", c4, n, 0.0, h4_viol),
        HypothesisRecord::new("H5", c5, n, 0.0, h5_viol),
        HypothesisRecord::new("H6", c6, n, h6_margin, h6_viol),
        HypothesisRecord::new("H7", c7, n, 0.0, h7_viol),
        HypothesisRecord::new("H8", c8, t_grid, 0.0, h8_viol),
    ];
    HypothesisReport {
        records,
        lambda_hat,
        big_lambda_hat,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{laplacian_eigs, Grid1D};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn plap(p: f64, kappa: f64) -> PLaplaceSpec {
        PLaplaceSpec::new(p, kappa).unwrap()
    }

    #[test]
    fn s_flux_examples() {
        assert_eq!(plap(2.0, 0.7).s_flux(1.3), 1.3);
        assert_eq!(plap(3.0, 0.0).s_flux(2.0), 4.0);
        assert_eq!(plap(1.5, 1.0).s_flux(0.0), 0.0);
    }

    #[test]
    fn f_map_examples() {
        assert_eq!(plap(2.0, 0.3).f_map(0.8), 0.8);
        assert_eq!(plap(4.0, 0.0).f_map(3.0), 9.0);
    }

    #[test]
    fn potential_finite_difference_matches_flux() {
        let mut stream = GaussianStream::new(2);
        for &(p, kappa) in &[(1.5, 0.1), (2.0, 0.0), (3.0, 0.01), (4.0, 0.5)] {
            let spec = plap(p, kappa);
            for _ in 0..50 {
                let r = 0.05 + 3.0 * stream.next_uniform();
                let eps = 1e-6;
                let fd = (spec.potential(r + eps) - spec.potential(r - eps)) / (2.0 * eps);
                let s = spec.s_flux(r);
                assert!(
                    (fd - s).abs() <= 1e-6 * (1.0 + s.abs()),
                    "p={p} kappa={kappa} r={r}: fd={fd} s={s}"
                );
            }
        }
    }

    #[test]
    fn newton_weight_matches_flux_difference_quotient() {
        let spec = plap(3.0, 0.01);
        let mut stream = GaussianStream::new(3);
        for _ in 0..50 {
            let xi = 4.0 * stream.next_standard();
            let eps = 1e-7 * (1.0 + xi.abs());
            let fd = (spec.s_flux(xi + eps) - spec.s_flux(xi - eps)) / (2.0 * eps);
            let d = spec.s_flux_derivative(xi);
            assert!((fd - d).abs() <= 1e-5 * (1.0 + d.abs()), "xi={xi}");
        }
    }

    #[test]
    fn heat_drift_on_eigenvector() {
        let basis = laplacian_eigs(Grid1D::new(16));
        let drift = DriftSpec::linear_heat(2.5, 0.0);
        let e = basis.eigenvector(4);
        let out = drift.apply(0.3, e);
        let expected = e.scale(-2.5 * basis.eigenvalue(4));
        assert!(out.sub(&expected).h_norm() <= 1e-8 * expected.h_norm());
        let zero = NodeField::zeros(basis.grid());
        assert_eq!(drift.apply(0.1, &zero).h_norm(), 0.0);
    }

    #[test]
    fn p2_drift_reduces_to_heat() {
        let grid = Grid1D::new(12);
        let heat = DriftSpec::linear_heat(1.0, 0.0);
        let plap2 = DriftSpec::p_laplace(plap(2.0, 0.0), 0.0);
        let mut stream = GaussianStream::new(8);
        let basis = laplacian_eigs(grid);
        let u = {
            let coeffs: Vec<f64> = (1..=12).map(|k| stream.next_standard() / k as f64).collect();
            basis.synthesize(&coeffs)
        };
        let a = heat.apply(0.4, &u);
        let b = plap2.apply(0.4, &u);
        assert!(a.sub(&b).h_norm() <= 1e-12 * (1.0 + a.h_norm()));
        // zero drift on zero field for the nonlinear family too
        assert_eq!(plap2.apply(0.0, &NodeField::zeros(grid)).h_norm(), 0.0);
    }

    #[test]
    fn plaplace_drift_is_negative_energy_gradient() {
        let grid = Grid1D::new(10);
        let spec = plap(3.0, 0.01);
        let drift = DriftSpec::p_laplace(spec, 0.5);
        let basis = laplacian_eigs(grid);
        let mut stream = GaussianStream::new(14);
        let energy = |u: &NodeField| -> f64 {
            let dx = grid.dx();
            dx * u
                .gradient()
                .values()
                .iter()
                .map(|g| spec.potential(g.abs()))
                .sum::<f64>()
        };
        for _ in 0..10 {
            let coeffs: Vec<f64> = (1..=10).map(|k| stream.next_standard() / k as f64).collect();
            let u = basis.synthesize(&coeffs);
            let w = {
                let c: Vec<f64> = (1..=10).map(|k| stream.next_standard() / k as f64).collect();
                basis.synthesize(&c)
            };
            let t = 0.7;
            let eps = 1e-6;
            let fd = (energy(&u.axpy(eps, &w)) - energy(&u.axpy(-eps, &w))) / (2.0 * eps);
            let analytic = -h_inner(&drift.apply(t, &u), &w) / drift.time_factor(t);
            assert!(
                (fd - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()),
                "fd={fd} analytic={analytic}"
            );
        }
    }

    #[test]
    fn drift_monotone_on_sampled_pairs() {
        let basis = laplacian_eigs(Grid1D::new(12));
        let mut stream = GaussianStream::new(4);
        for drift in [
            DriftSpec::linear_heat(1.0, 0.0),
            DriftSpec::p_laplace(plap(3.0, 0.01), 0.0),
            DriftSpec::p_laplace(plap(1.5, 0.1), 0.0),
        ] {
            for _ in 0..20 {
                let u = sample_field(&mut stream, &basis);
                let v = sample_field(&mut stream, &basis);
                let pairing = h_inner(&drift.apply(0.2, &u).sub(&drift.apply(0.2, &v)), &u.sub(&v));
                assert!(pairing <= 1e-10 * (1.0 + pairing.abs()), "pairing = {pairing}");
            }
        }
    }

    #[test]
    fn diffusion_examples() {
        let basis = Arc::new(laplacian_eigs(Grid1D::new(8)));
        let noise = NoiseSpec::new(4, 2.0, basis.clone()).unwrap();
        let mut stream = GaussianStream::new(6);
        let w = sample_field(&mut stream, &basis);
        let u = sample_field(&mut stream, &basis);
        let v = sample_field(&mut stream, &basis);

        let additive = DiffusionSpec::new(0.7, 0.0, noise.clone());
        assert_eq!(
            additive.apply(0.0, &u, &w).values(),
            additive.apply(0.0, &v, &w).values()
        );

        let unit = DiffusionSpec::new(1.0, 0.0, noise.clone());
        let zero = NodeField::zeros(basis.grid());
        assert_eq!(unit.apply(0.0, &zero, &w).values(), w.values());

        let mult = DiffusionSpec::new(0.2, 0.5, noise);
        let lhs = mult.apply(0.0, &u, &w).sub(&mult.apply(0.0, &v, &w)).h_norm();
        let w_inf = w.values().iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(lhs <= 0.5 * w_inf * u.sub(&v).h_norm() + 1e-12);
    }

    #[test]
    fn apply_g_examples() {
        let basis = laplacian_eigs(Grid1D::new(16));
        let heat = DriftSpec::linear_heat(1.0, 0.0);
        match heat.apply_g(basis.eigenvector(1), &basis) {
            GValue::Node(g) => {
                let expected = basis.eigenvector(1).scale(basis.eigenvalue(1).sqrt());
                assert!(g.sub(&expected).h_norm() <= 1e-10);
            }
            _ => panic!("linear G lives at the nodes"),
        }
        let plap2 = DriftSpec::p_laplace(plap(2.0, 0.0), 0.0);
        let mut stream = GaussianStream::new(77);
        let u = sample_field(&mut stream, &basis);
        match plap2.apply_g(&u, &basis) {
            GValue::Edge(g) => {
                let grad = u.gradient();
                for (a, b) in g.values().iter().zip(grad.values()) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
            _ => panic!("p-Laplace G lives at the edges"),
        }
        let zero = NodeField::zeros(basis.grid());
        assert_eq!(heat.apply_g(&zero, &basis).sq_norm(), 0.0);
    }

    #[test]
    fn f_equivalence_identity_for_p2() {
        for kappa in [0.0, 0.1, 2.0] {
            let (lo, hi) = check_f_equivalence(&plap(2.0, kappa), 1000, 5).unwrap();
            assert!((lo - 1.0).abs() <= 1e-12 && (hi - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn f_equivalence_p3_bounds() {
        let (lo, hi) = check_f_equivalence(&plap(3.0, 0.0), 100_000, 11).unwrap();
        assert!(lo > 0.0, "lambda_hat = {lo}");
        assert!(hi < 10.0, "Lambda_hat = {hi}");
    }

    #[test]
    fn f_equivalence_swap_symmetric() {
        let spec = plap(3.0, 0.2);
        let mut stream = GaussianStream::new(9);
        for _ in 0..100 {
            let xi = 2.0 * stream.next_standard();
            let eta = 2.0 * stream.next_standard();
            let r = |a: f64, b: f64| {
                (spec.s_flux(a) - spec.s_flux(b)) * (a - b)
                    / (spec.f_map(a) - spec.f_map(b)).powi(2)
            };
            if (spec.f_map(xi) - spec.f_map(eta)).abs() > 0.0 {
                assert_eq!(r(xi, eta), r(eta, xi));
            }
        }
    }

    struct FlippedDrift(DriftSpec);

    impl DriftOperator for FlippedDrift {
        fn apply(&self, t: f64, u: &NodeField) -> NodeField {
            self.0.apply(t, u).scale(-1.0)
        }
        fn apply_g(&self, u: &NodeField, basis: &SpectralBasis) -> GValue {
            self.0.apply_g(u, basis)
        }
        fn growth_exponent(&self) -> f64 {
            self.0.growth_exponent()
        }
    }

    #[test]
    fn auditor_passes_genuine_families_and_flags_flip() {
        let basis = Arc::new(laplacian_eigs(Grid1D::new(16)));
        let noise = NoiseSpec::new(8, 2.0, basis.clone()).unwrap();
        let u0 = basis.eigenvector(1).axpy(0.5, basis.eigenvector(2));
        let cfg = AuditorConfig::new(2000, 31, 1.0);

        let heat = DriftSpec::linear_heat(1.0, 0.0);
        let additive = DiffusionSpec::new(1.0, 0.0, noise.clone());
        let report = check_hypotheses(&heat, &additive, &u0, &cfg);
        for id in ["H1", "H2", "H3", "H4", "H5", "H6", "H7", "H8"] {
            assert!(report.record(id).pass, "{id} failed for the heat family");
        }
        // additive noise: c1 = 0 admissible, margin nonnegative
        assert!(report.record("H1").constant <= 1e-12);
        assert!(report.record("H1").worst_margin >= 0.0);

        let pl = DriftSpec::p_laplace(plap(3.0, 0.01), 0.0);
        let mult = DiffusionSpec::new(0.2, 0.5, noise.clone());
        let report = check_hypotheses(&pl, &mult, &u0, &cfg);
        for id in ["H1", "H3", "H4", "H5", "H6", "H7", "H8"] {
            assert!(report.record(id).pass, "{id} failed for the p-Laplace family");
        }
        let lam = report.lambda_hat.expect("equivalence constants recorded");
        assert!(report.record("H6").constant >= 0.5 * lam);

        let flipped = FlippedDrift(heat);
        let report = check_hypotheses(&flipped, &additive, &u0, &cfg);
        assert!(!report.record("H1").pass, "flip must break monotonicity");
        assert!(!report.record("H3").pass, "flip must break coercivity");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_map_square_identity(seed in 0u64..500, p in 1.2f64..4.5, kappa in 0.0f64..2.0) {
            let spec = plap(p, kappa);
            let mut stream = GaussianStream::new(seed);
            let xi = 3.0 * stream.next_standard();
            let lhs = spec.f_map(xi).powi(2);
            let rhs = spec.s_flux(xi) * xi;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn s_flux_odd_monotone(seed in 0u64..500, p in 1.2f64..4.5, kappa in 0.01f64..2.0) {
            let spec = plap(p, kappa);
            let mut stream = GaussianStream::new(seed);
            let a = 3.0 * stream.next_standard();
            let b = 3.0 * stream.next_standard();
            prop_assert!((spec.s_flux(-a) + spec.s_flux(a)).abs() <= 1e-12 * (1.0 + spec.s_flux(a).abs()));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(spec.s_flux(lo) <= spec.s_flux(hi) + 1e-12);
        }
    }
}
