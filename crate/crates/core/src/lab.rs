//! Regime classification, explicit constants of the a-priori inequality,
//! the sufficient blow-up criterion, and parameter sweeps.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::ExecPolicy;
use crate::fode::{self, BlowupOptions, ProblemParams, RateFit, ScalarIVP, SolverOptions, Status};
use crate::special::gamma_ratio;
use crate::spectral::{self, MildOptions, MildProblem, SpectralDomain, SpectralField};

/// Moments `∫ u0 φ1` and `∫ u1 φ1` of the initial data against the first
/// eigenfunction normalized to `∫ φ1 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentData {
    pub m0: f64,
    pub m1: f64,
    /// `u1 ≡ 0` as configured (not merely `m1 = 0`).
    #[serde(default)]
    pub u1_vanishes: bool,
}

impl MomentData {
    pub fn new(m0: f64, m1: f64) -> Self {
        Self {
            m0,
            m1,
            u1_vanishes: false,
        }
    }

    /// Scalar data `w(0) = m0`, `w'(0) = m1` with `u1 ≡ 0` when `m1 = 0`.
    pub fn scalar(w0: f64, w1: f64) -> Self {
        Self {
            m0: w0,
            m1: w1,
            u1_vanishes: w1 == 0.0,
        }
    }
}

/// Intermediate quantities of the Young-inequality splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivationTrace {
    /// `p' = p/(p-1)`.
    pub p_conj: f64,
    /// Young parameter `ε = b/4`.
    pub epsilon: f64,
    /// `C_ε = (εp)^{-p'/p} / p'`.
    pub c_epsilon: f64,
    /// `Γ(l+1)/Γ(l+1-γ)`.
    pub c_gamma: f64,
    /// `Γ(l+1)/Γ(l+1-α-γ)`.
    pub c_sigma: f64,
    /// `a^{p'} c_γ^{p'} / (l - p'γ + 1)`.
    pub a1: f64,
    /// `c_σ^{p'} / (l - p'σ + 1)`.
    pub a2: f64,
    /// `∫₀ᵀ ₜD_T^σ ψ_T = g0 T^{1-σ}`.
    pub g0: f64,
    /// `∫₀ᵀ t ₜD_T^σ ψ_T = g1 T^{2-σ}`.
    pub g1: f64,
    /// `min(g0, g1)`, the normalization of the moment terms.
    pub m: f64,
}

/// `K1`, `K2` of
/// `(b/2m) ∫|w|^p ψ_T + w0 T^{1-σ} + w1 T^{2-σ} ≤ K1 T^{1-p'γ} + K2 T^{1-p'σ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionConstants {
    pub k1: f64,
    pub k2: f64,
    pub l: f64,
    /// Weight `b/(2m)` of the nonlinear integral on the left side.
    pub integral_weight: f64,
    pub derivation_trace: DerivationTrace,
}

/// Smallest integer `≥ p(α+γ)/(p-1)`, plus one.
pub fn default_exponent(params: &ProblemParams) -> f64 {
    (params.p_conj() * params.sigma()).ceil() + 1.0
}

pub fn calibrate_constants(params: &ProblemParams, l: f64) -> Result<CriterionConstants> {
    params.check_hypotheses()?;
    let pc = params.p_conj();
    let s = params.sigma();
    let g = params.gamma;
    if !(l.is_finite() && l >= pc * s) {
        return domain(format!("l = {l} below p(alpha+gamma)/(p-1) = {}", pc * s));
    }
    let epsilon = params.b / 4.0;
    let c_epsilon = (epsilon * params.p).powf(-pc / params.p) / pc;
    let c_gamma = gamma_ratio(l + 1.0, l + 1.0 - g);
    let c_sigma = gamma_ratio(l + 1.0, l + 1.0 - s);
    let a1 = params.a.powf(pc) * c_gamma.powf(pc) / (l - pc * g + 1.0);
    let a2 = c_sigma.abs().powf(pc) / (l - pc * s + 1.0);
    let g0 = gamma_ratio(l + 1.0, l + 2.0 - s);
    let g1 = g0 / (l + 2.0 - s);
    let m = g0.min(g1);
    Ok(CriterionConstants {
        k1: c_epsilon * a1 / m,
        k2: c_epsilon * a2 / m,
        l,
        integral_weight: params.b / (2.0 * m),
        derivation_trace: DerivationTrace {
            p_conj: pc,
            epsilon,
            c_epsilon,
            c_gamma,
            c_sigma,
            a1,
            a2,
            g0,
            g1,
            m,
        },
    })
}

/// `T m1 + m0 > K1 T^{σ-p'γ} + K2 T^{-σ/(p-1)}`: when true the solution
/// cannot exist on `[0, T]`. Negative moments never trigger it.
pub fn remark_criterion(
    horizon: f64,
    moments: &MomentData,
    constants: &CriterionConstants,
    params: &ProblemParams,
) -> bool {
    if !(horizon > 0.0) || moments.m0 < 0.0 || moments.m1 < 0.0 {
        return false;
    }
    let s = params.sigma();
    let lhs = horizon * moments.m1 + moments.m0;
    let rhs = constants.k1 * horizon.powf(s - params.p_conj() * params.gamma)
        + constants.k2 * horizon.powf(-s / (params.p - 1.0));
    lhs > rhs
}

/// Smallest `T` (searched on a log grid over `[T_lo, T_hi]`) at which the criterion holds.
pub fn criterion_horizon(
    moments: &MomentData,
    constants: &CriterionConstants,
    params: &ProblemParams,
    range: (f64, f64),
) -> Option<f64> {
    let (lo, hi) = range;
    (0..=400)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / 400.0).exp())
        .find(|&t| remark_criterion(t, moments, constants, params))
}

/// Tolerance for `m1 = 0` as configured.
pub const ZERO_MOMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Blowup,
    GlobalSmallData,
    OutsideTheorems,
}

/// Which theorem case produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremCase {
    /// `α = 2`, `p(1-γ) ≤ 1`.
    BlowupWave,
    /// `α+γ > 2`, `p(1-γ) ≤ 1`.
    BlowupA,
    /// `α+γ ≤ 2`, `m1 = 0`, `p(1-γ) ≤ 1`.
    BlowupB,
    /// `α+γ = 2`, `m1 > 0`, `p(1-γ) ≤ 1`.
    BlowupC,
    /// `α+γ < 2`, `m1 > 0`, `p < 1 + γ/(α-1)`.
    BlowupD,
    /// `α+γ ≥ 2`, `p(1-γ) > 1`, small data.
    GlobalI,
    /// `α+γ < 2`, `p(1-γ) > 1`, `u1 ≡ 0`, small data.
    GlobalII,
    /// `α+γ < 2`, `p ≥ 1 + γ/(α-1)`, small data.
    GlobalIII,
}

/// One checked inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub lhs: f64,
    pub relation: String,
    pub rhs: f64,
    pub holds: bool,
}

impl Hypothesis {
    fn new(name: &str, lhs: f64, relation: &str, rhs: f64) -> Self {
        let holds = match relation {
            "<" => lhs < rhs,
            "<=" => lhs <= rhs,
            ">" => lhs > rhs,
            ">=" => lhs >= rhs,
            "=" => lhs == rhs,
            _ => unreachable!("unknown relation {relation}"),
        };
        Self {
            name: name.into(),
            lhs,
            relation: relation.into(),
            rhs,
            holds,
        }
    }

    fn flag(name: &str, holds: bool) -> Self {
        Self {
            name: name.into(),
            lhs: holds as u8 as f64,
            relation: "=".into(),
            rhs: 1.0,
            holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePrediction {
    pub verdict: Verdict,
    pub theorem_case: Option<TheoremCase>,
    /// Hypotheses of the case that applied, or of every case examined when none did.
    pub hypotheses_used: Vec<Hypothesis>,
}

/// Classify `(α, γ, p)` with the given moments. Blow-up cases are tried
/// first; `p(1-γ) = 1` counts as blow-up.
pub fn classify_regime(params: &ProblemParams, moments: &MomentData, alpha_is_2: bool) -> Result<RegimePrediction> {
    let (a, g, p) = (params.alpha, params.gamma, params.p);
    if alpha_is_2 != (a == 2.0) {
        return domain(format!("alpha_is_2 = {alpha_is_2} contradicts alpha = {a}"));
    }
    let s = a + g;
    let pg = p * (1.0 - g);
    let m1_zero = moments.u1_vanishes || moments.m1.abs() <= ZERO_MOMENT_TOL;
    let crit = if a < 2.0 { 1.0 + g / (a - 1.0) } else { f64::INFINITY };
    let h_pg_le = || Hypothesis::new("p(1-gamma)", pg, "<=", 1.0);
    let h_pg_gt = || Hypothesis::new("p(1-gamma)", pg, ">", 1.0);
    let h_m1_zero = || Hypothesis::flag("m1 = 0", m1_zero);
    let h_m1_pos = || Hypothesis::new("m1", if m1_zero { 0.0 } else { moments.m1 }, ">", 0.0);

    let mut cases: Vec<(Verdict, TheoremCase, Vec<Hypothesis>)> = Vec::new();
    if alpha_is_2 {
        cases.push((Verdict::Blowup, TheoremCase::BlowupWave, vec![h_pg_le()]));
    } else {
        cases.push((Verdict::Blowup, TheoremCase::BlowupA, vec![Hypothesis::new("alpha+gamma", s, ">", 2.0), h_pg_le()]));
        cases.push((
            Verdict::Blowup,
            TheoremCase::BlowupB,
            vec![Hypothesis::new("alpha+gamma", s, "<=", 2.0), h_m1_zero(), h_pg_le()],
        ));
        cases.push((
            Verdict::Blowup,
            TheoremCase::BlowupC,
            vec![Hypothesis::new("alpha+gamma", s, "=", 2.0), h_m1_pos(), h_pg_le()],
        ));
        cases.push((
            Verdict::Blowup,
            TheoremCase::BlowupD,
            vec![
                Hypothesis::new("alpha+gamma", s, "<", 2.0),
                h_m1_pos(),
                Hypothesis::new("p", p, "<", crit),
            ],
        ));
        cases.push((
            Verdict::GlobalSmallData,
            TheoremCase::GlobalI,
            vec![Hypothesis::new("alpha+gamma", s, ">=", 2.0), h_pg_gt()],
        ));
        cases.push((
            Verdict::GlobalSmallData,
            TheoremCase::GlobalII,
            vec![
                Hypothesis::new("alpha+gamma", s, "<", 2.0),
                h_pg_gt(),
                Hypothesis::flag("u1 = 0", moments.u1_vanishes),
            ],
        ));
        cases.push((
            Verdict::GlobalSmallData,
            TheoremCase::GlobalIII,
            vec![Hypothesis::new("alpha+gamma", s, "<", 2.0), Hypothesis::new("p", p, ">=", crit)],
        ));
    }
    for (verdict, case, hyps) in &cases {
        if hyps.iter().all(|h| h.holds) {
            return Ok(RegimePrediction {
                verdict: *verdict,
                theorem_case: Some(*case),
                hypotheses_used: hyps.clone(),
            });
        }
    }
    Ok(RegimePrediction {
        verdict: Verdict::OutsideTheorems,
        theorem_case: None,
        hypotheses_used: cases.into_iter().flat_map(|c| c.2).collect(),
    })
}

/// Closed-form descriptor of an initial field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Zero,
    /// `Σ a_k sin(kx)` (1D) or `Σ a_k sin(kx) sin(ky)` (2D, diagonal modes).
    Modes { amplitudes: Vec<f64> },
    /// `scale · φ₁`, with `φ₁` normalized to unit integral.
    Phi1 { scale: f64 },
}

impl FieldSpec {
    pub fn build(&self, d: &SpectralDomain) -> Result<SpectralField> {
        match self {
            FieldSpec::Zero => Ok(d.zero_field()),
            FieldSpec::Phi1 { scale } => d.field_from_fn(|x| scale * d.first_eigenfunction(x)),
            FieldSpec::Modes { amplitudes } => {
                if amplitudes.len() > d.modes() {
                    return domain(format!("{} amplitudes exceed {} modes", amplitudes.len(), d.modes()));
                }
                let k = d.modes();
                let mut c = vec![0.0; d.n_coeffs()];
                for (i, &a) in amplitudes.iter().enumerate() {
                    let idx = if d.dimension() == 1 { i } else { i * k + i };
                    c[idx] = a;
                }
                d.field_from_coeffs(c)
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            FieldSpec::Zero => FieldSpec::Zero,
            FieldSpec::Phi1 { scale } => FieldSpec::Phi1 { scale: scale * factor },
            FieldSpec::Modes { amplitudes } => FieldSpec::Modes {
                amplitudes: amplitudes.iter().map(|a| a * factor).collect(),
            },
        }
    }
}

/// Initial data of a case: the scalar reduction or a field on the PDE domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum CaseData {
    Scalar {
        w0: f64,
        w1: f64,
    },
    Pde {
        #[serde(default = "one")]
        dimension: usize,
        #[serde(default)]
        modes: Option<usize>,
        u0: FieldSpec,
        u1: FieldSpec,
    },
}

fn one() -> usize {
    1
}

impl CaseData {
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            CaseData::Scalar { w0, w1 } => CaseData::Scalar {
                w0: w0 * factor,
                w1: w1 * factor,
            },
            CaseData::Pde {
                dimension,
                modes,
                u0,
                u1,
            } => CaseData::Pde {
                dimension: *dimension,
                modes: *modes,
                u0: u0.scaled(factor),
                u1: u1.scaled(factor),
            },
        }
    }
}

fn default_steps() -> usize {
    1000
}

fn default_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    #[serde(default)]
    pub name: String,
    pub params: ProblemParams,
    pub data: CaseData,
    pub horizon: f64,
    /// Steps of the coarsest of the three refinement meshes.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    /// Test-function exponent; defaults to [`default_exponent`].
    #[serde(default)]
    pub l: Option<f64>,
    /// Shrink the data by halves until decay is observed when a small-data
    /// global verdict meets an observed blow-up.
    #[serde(default)]
    pub bisect_small_data: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observed {
    Blowup,
    Global,
    /// Refinement did not settle.
    Unconfirmed,
    /// The solver failed outright.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub status: Observed,
    pub t_star: Option<f64>,
    pub refinement_history: Vec<(usize, Option<f64>)>,
    /// Sup-norm at the last node.
    pub final_sup: Option<f64>,
    /// Sup-norm nonincreasing over `[horizon/10, horizon]`.
    pub decreasing_tail: Option<bool>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agreement {
    Confirmed,
    Contradicted,
    /// No theorem applies; the observation is recorded without a claim.
    NoClaim,
    Unconfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub name: String,
    pub params: ProblemParams,
    pub moments: MomentData,
    pub prediction: RegimePrediction,
    pub theorem_case: Option<TheoremCase>,
    pub observed: Observation,
    pub t_star: Option<f64>,
    pub rate_fits: Vec<NamedFit>,
    pub constants: Option<CriterionConstants>,
    /// Smallest `T` at which the sufficient criterion holds, searched up to the horizon.
    pub criterion_horizon: Option<f64>,
    /// `T* < T_crit (1 + tol)` whenever both are known.
    pub criterion_consistent: Option<bool>,
    /// Largest data scale (relative to the configured one) observed global.
    pub small_data_scale: Option<f64>,
    pub agreement: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub quantity: String,
    pub fit: Option<RateFitRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFitRecord {
    pub exponent: f64,
    pub half_width: f64,
    pub points: usize,
    pub window: (f64, f64),
}

impl From<RateFit> for RateFitRecord {
    fn from(f: RateFit) -> Self {
        Self {
            exponent: f.exponent,
            half_width: f.half_width,
            points: f.points,
            window: f.window,
        }
    }
}

fn nonincreasing_after(times: &[f64], sup: &[f64], t0: f64) -> bool {
    let i = times.partition_point(|&t| t < t0);
    sup[i.min(sup.len())..]
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9))
}

struct Simulated {
    observation: Observation,
    fits: Vec<NamedFit>,
}

fn observe<T>(
    r: Result<T>,
    f: impl FnOnce(T) -> (Status, Option<f64>, Vec<(usize, Option<f64>)>, Vec<f64>, Vec<f64>),
    horizon: f64,
) -> (Observation, Option<T>)
where
    T: Clone,
{
    match r {
        Ok(out) => {
            let (status, t_star, history, times, sup) = f(out.clone());
            let global = status == Status::GlobalToHorizon;
            (
                Observation {
                    status: if global { Observed::Global } else { Observed::Blowup },
                    t_star,
                    refinement_history: history,
                    final_sup: sup.last().copied(),
                    decreasing_tail: global.then(|| nonincreasing_after(&times, &sup, horizon / 10.0)),
                    message: None,
                },
                Some(out),
            )
        }
        Err(e) => (
            Observation {
                status: if matches!(e, Error::Indeterminate(_)) {
                    Observed::Unconfirmed
                } else {
                    Observed::Failed
                },
                t_star: None,
                refinement_history: Vec::new(),
                final_sup: None,
                decreasing_tail: None,
                message: Some(e.to_string()),
            },
            None,
        ),
    }
}

fn fit_record(quantity: &str, r: Result<RateFit>) -> NamedFit {
    match r {
        Ok(f) => NamedFit {
            quantity: quantity.into(),
            fit: Some(f.into()),
            error: None,
        },
        Err(e) => NamedFit {
            quantity: quantity.into(),
            fit: None,
            error: Some(e.to_string()),
        },
    }
}

fn simulate(cfg: &CaseConfig, data: &CaseData, policy: ExecPolicy) -> Result<Simulated> {
    let window = (cfg.horizon / 10.0, cfg.horizon);
    match data {
        CaseData::Scalar { w0, w1 } => {
            let ivp = ScalarIVP::new(cfg.params, *w0, *w1)?;
            let opts = BlowupOptions {
                base_steps: cfg.steps,
                convergence_tol: cfg.convergence_tol,
                solver: SolverOptions {
                    policy,
                    ..SolverOptions::default()
                },
            };
            let (obs, out) = observe(
                fode::detect_blowup_with(&ivp, cfg.horizon, &opts),
                |o| {
                    let sup = o.trajectory.values.iter().map(|v| v.abs()).collect();
                    (o.status, o.t_star_estimate, o.refinement_history, o.trajectory.nodes().to_vec(), sup)
                },
                cfg.horizon,
            );
            let mut fits = Vec::new();
            if let Some(o) = out.filter(|o| o.status == Status::GlobalToHorizon) {
                fits.push(fit_record("w", fode::estimate_rate(&o, 0.0, window)));
                let beta = cfg.params.alpha / 2.0;
                fits.push(fit_record(&format!("I^{beta} w"), fode::estimate_rate(&o, beta, window)));
            }
            Ok(Simulated { observation: obs, fits })
        }
        CaseData::Pde {
            dimension,
            modes,
            u0,
            u1,
        } => {
            let domain = Arc::new(pde_domain(*dimension, *modes)?);
            let problem = MildProblem {
                params: cfg.params,
                u0: u0.build(&domain)?,
                u1: u1.build(&domain)?,
            };
            let opts = MildOptions {
                policy,
                ..MildOptions::default()
            };
            let (obs, out) = observe(
                spectral::detect_blowup_mild(&domain, &problem, cfg.horizon, cfg.steps, cfg.convergence_tol, &opts),
                |o| (o.status, o.t_star_estimate, o.refinement_history, o.mesh.nodes().to_vec(), o.sup_norm),
                cfg.horizon,
            );
            let mut fits = Vec::new();
            if let Some(o) = out.filter(|o| o.status == Status::GlobalToHorizon) {
                fits.push(fit_record("sup|u|", fode::fit_power_law(o.mesh.nodes(), &o.sup_norm, window)));
            }
            Ok(Simulated { observation: obs, fits })
        }
    }
}

pub fn pde_domain(dimension: usize, modes: Option<usize>) -> Result<SpectralDomain> {
    match dimension {
        1 => SpectralDomain::interval(modes.unwrap_or(spectral::DEFAULT_MODES_1D)),
        2 => SpectralDomain::square(modes.unwrap_or(spectral::DEFAULT_MODES_2D)),
        d => domain(format!("dimension {d} not supported")),
    }
}

/// Moments and the coefficient `a` entering the scalar inequality for the case.
fn case_moments(data: &CaseData, params: &ProblemParams) -> Result<(MomentData, ProblemParams)> {
    match data {
        CaseData::Scalar { w0, w1 } => Ok((MomentData::scalar(*w0, *w1), *params)),
        CaseData::Pde {
            dimension,
            modes,
            u0,
            u1,
        } => {
            let d = pde_domain(*dimension, *modes)?;
            let wt = d.phi1_weight();
            let m = MomentData {
                m0: wt * u0.build(&d)?.coeffs()[0],
                m1: wt * u1.build(&d)?.coeffs()[0],
                u1_vanishes: matches!(u1, FieldSpec::Zero),
            };
            let reduced = ProblemParams {
                a: d.first_eigenvalue(),
                ..*params
            };
            Ok((m, reduced))
        }
    }
}

/// Classify, simulate, fit and evaluate the criterion for one case.
pub fn run_case(cfg: &CaseConfig, policy: ExecPolicy) -> Result<RegimeReport> {
    let params = cfg.params;
    params.check_hypotheses()?;
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return domain(format!("horizon {} must be positive", cfg.horizon));
    }
    let (moments, reduced) = case_moments(&cfg.data, &params)?;
    let prediction = classify_regime(&params, &moments, params.alpha == 2.0)?;
    let sim = simulate(cfg, &cfg.data, policy)?;
    let l = cfg.l.unwrap_or_else(|| default_exponent(&reduced));
    let constants = calibrate_constants(&reduced, l).ok();
    let crit_t = constants
        .as_ref()
        .and_then(|c| criterion_horizon(&moments, c, &reduced, (1e-3 * cfg.horizon, cfg.horizon)));
    let obs = sim.observation;
    let criterion_consistent = match (crit_t, obs.t_star) {
        (Some(tc), Some(ts)) => Some(ts < tc * (1.0 + cfg.convergence_tol)),
        (Some(_), None) if obs.status == Observed::Global => Some(false),
        _ => None,
    };

    let mut small_data_scale = None;
    let mut agreement = match (prediction.verdict, obs.status) {
        (_, Observed::Unconfirmed) | (_, Observed::Failed) => Agreement::Unconfirmed,
        (Verdict::OutsideTheorems, _) => Agreement::NoClaim,
        (Verdict::Blowup, Observed::Blowup) | (Verdict::GlobalSmallData, Observed::Global) => Agreement::Confirmed,
        _ => Agreement::Contradicted,
    };
    if agreement == Agreement::Confirmed && prediction.verdict == Verdict::GlobalSmallData {
        small_data_scale = Some(1.0);
    }
    if prediction.verdict == Verdict::GlobalSmallData && obs.status == Observed::Blowup && cfg.bisect_small_data {
        // "sufficiently small" carries no number: find a scale that is
        small_data_scale = bisect_small_data(cfg, policy, 20)?;
        agreement = if small_data_scale.is_some() {
            Agreement::Confirmed
        } else {
            Agreement::Contradicted
        };
    }
    Ok(RegimeReport {
        name: cfg.name.clone(),
        params,
        moments,
        theorem_case: prediction.theorem_case,
        prediction,
        t_star: obs.t_star,
        observed: obs,
        rate_fits: sim.fits,
        constants,
        criterion_horizon: crit_t,
        criterion_consistent,
        small_data_scale,
        agreement,
    })
}

/// Halve the data scale until the simulation reaches the horizon; returns
/// the largest such scale relative to the configured data.
pub fn bisect_small_data(cfg: &CaseConfig, policy: ExecPolicy, max_halvings: usize) -> Result<Option<f64>> {
    let mut scale = 1.0;
    for _ in 0..max_halvings {
        scale *= 0.5;
        let sim = simulate(cfg, &cfg.data.scaled(scale), policy)?;
        if sim.observation.status == Observed::Global {
            return Ok(Some(scale));
        }
    }
    Ok(None)
}

/// Grid of a phase-diagram sweep over the scalar reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub ps: Vec<f64>,
    /// Values of `w0`; `w1 = w1_ratio · w0`.
    pub scales: Vec<f64>,
    #[serde(default)]
    pub w1_ratio: f64,
    #[serde(default = "unit")]
    pub a: f64,
    #[serde(default = "unit")]
    pub b: f64,
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub scale: f64,
    pub prediction: Verdict,
    pub theorem_case: Option<TheoremCase>,
    pub observed: Observed,
    pub t_star: Option<f64>,
    pub error: Option<String>,
}

/// Evaluate every cell (concurrently under `policy`); rows come back in
/// grid order `(α, γ, p, scale)` regardless of scheduling, and a failing
/// cell is recorded rather than aborting the sweep.
pub fn sweep(cfg: &SweepConfig, policy: ExecPolicy) -> Vec<PhaseRow> {
    let mut keys = Vec::new();
    for &alpha in &cfg.alphas {
        for &gamma in &cfg.gammas {
            for &p in &cfg.ps {
                for &scale in &cfg.scales {
                    keys.push((alpha, gamma, p, scale));
                }
            }
        }
    }
    policy.map_range(keys.len(), |i| {
        let (alpha, gamma, p, scale) = keys[i];
        let row = |prediction: Option<RegimePrediction>, observed, t_star, error| PhaseRow {
            alpha,
            gamma,
            p,
            scale,
            prediction: prediction.as_ref().map_or(Verdict::OutsideTheorems, |r| r.verdict),
            theorem_case: prediction.and_then(|r| r.theorem_case),
            observed,
            t_star,
            error,
        };
        let params = match ProblemParams::new(alpha, gamma, p, cfg.a, cfg.b) {
            Ok(pr) => pr,
            Err(e) => return row(None, Observed::Failed, None, Some(e.to_string())),
        };
        let (w0, w1) = (scale, cfg.w1_ratio * scale);
        let case = CaseConfig {
            name: String::new(),
            params,
            data: CaseData::Scalar { w0, w1 },
            horizon: cfg.horizon,
            steps: cfg.steps,
            convergence_tol: cfg.convergence_tol,
            l: None,
            bisect_small_data: false,
        };
        // cells already run concurrently
        match run_case(&case, ExecPolicy::Sequential) {
            Ok(r) => row(Some(r.prediction), r.observed.status, r.t_star, r.observed.message),
            Err(e) => row(
                classify_regime(&params, &MomentData::scalar(w0, w1), alpha == 2.0).ok(),
                Observed::Failed,
                None,
                Some(e.to_string()),
            ),
        }
    })
}
