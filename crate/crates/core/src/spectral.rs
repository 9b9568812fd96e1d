//! Mild solutions of `₀D_t^α u - Δu = b ₀I_t^γ |u|^p` with homogeneous
//! Dirichlet data on `(0, π)` or `(0, π)²`, diagonalized in the sine basis.
//!
//! Mode `k` with eigenvalue `λ_k` evolves as the scalar Volterra equation
//! of [`crate::fode`] with `a = λ_k`; the nonlinearity is formed pointwise on
//! the collocation grid and transformed back (pseudo-spectral).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{Dst1, DctPlanner};
use serde::Serialize;

use crate::error::{self, Error, Result};
use crate::exec::ExecPolicy;
use crate::fode::{fit_power_law, judge_crossings, ProblemParams, RateFit, Status};
use crate::fracops::{self, Kernel, ProductWeights, SampledPath, TimeMesh};
use crate::mlf::NegativeAxis;

pub const DEFAULT_MODES_1D: usize = 128;
pub const DEFAULT_MODES_2D: usize = 64;
/// Collocation grid intervals per retained mode.
pub const GRID_FACTOR: usize = 4;

/// Sine eigenbasis of `-Δ` on `(0, π)^d`, `d ∈ {1, 2}`.
pub struct SpectralDomain {
    dim: usize,
    modes: usize,
    grid: usize,
    eigenvalues: Vec<f64>,
    dst: Arc<dyn Dst1<f64>>,
}

impl fmt::Debug for SpectralDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralDomain")
            .field("dim", &self.dim)
            .field("modes", &self.modes)
            .field("grid", &self.grid)
            .finish()
    }
}

impl SpectralDomain {
    /// `(0, π)` with `modes` sine modes and a `4·modes` interval grid.
    pub fn interval(modes: usize) -> Result<Self> {
        Self::with_grid(1, modes, GRID_FACTOR * modes)
    }

    /// `(0, π)²` with `modes²` modes.
    pub fn square(modes: usize) -> Result<Self> {
        Self::with_grid(2, modes, GRID_FACTOR * modes)
    }

    pub fn with_grid(dim: usize, modes: usize, grid: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return error::domain(format!("dimension {dim} not supported"));
        }
        if modes == 0 || grid <= modes {
            return error::domain(format!("need 0 < modes < grid intervals, got {modes} and {grid}"));
        }
        let eigenvalues = if dim == 1 {
            (1..=modes).map(|k| (k * k) as f64).collect()
        } else {
            (1..=modes)
                .flat_map(|k1| (1..=modes).map(move |k2| (k1 * k1 + k2 * k2) as f64))
                .collect()
        };
        let dst = DctPlanner::new().plan_dst1(grid - 1);
        Ok(Self {
            dim,
            modes,
            grid,
            eigenvalues,
            dst,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Modes per axis.
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Grid intervals per axis.
    pub fn grid_intervals(&self) -> usize {
        self.grid
    }

    /// `λ` per coefficient; in 2D coefficient `(k1-1)·K + (k2-1)` has `λ = k1² + k2²`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_coeffs(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Grid points along one axis, `x_j = jπ/M`, boundaries included.
    pub fn axis(&self) -> Vec<f64> {
        (0..=self.grid).map(|j| j as f64 * PI / self.grid as f64).collect()
    }

    /// Length of a sample vector, `(M+1)^d`, row-major in 2D.
    pub fn phys_len(&self) -> usize {
        (self.grid + 1).pow(self.dim as u32)
    }

    pub fn first_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `φ₁` normalized to unit integral: `sin x / 2`, or `sin x sin y / 4`.
    pub fn first_eigenfunction(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| 0.5 * xi.sin()).product()
    }

    /// `∫ sin(x)·φ₁` per axis product; the only nonzero projection of a sine mode on `φ₁`.
    pub fn phi1_weight(&self) -> f64 {
        (PI / 4.0).powi(self.dim as i32)
    }

    /// Grid intervals needed to keep the retained modes alias-free for `|u|^p`.
    pub fn required_grid(&self, p: f64) -> usize {
        let pad = if p <= 3.0 { 2 } else { 3 };
        pad * self.modes
    }

    pub fn check_aliasing(&self, p: f64) -> Result<()> {
        let need = self.required_grid(p);
        if self.grid < need {
            return Err(Error::Config(format!(
                "grid of {} intervals cannot de-alias p = {p} with {} modes (need {need})",
                self.grid, self.modes
            )));
        }
        Ok(())
    }

    fn dst(&self, buf: &mut [f64]) {
        self.dst.process_dst1(buf);
    }

    /// Sine coefficients of samples on the grid (boundary samples ignored).
    pub fn transform(&self, phys: &[f64]) -> Result<Vec<f64>> {
        if phys.len() != self.phys_len() {
            return error::domain(format!(
                "expected {} grid samples, got {}",
                self.phys_len(),
                phys.len()
            ));
        }
        let (m, k) = (self.grid, self.modes);
        let scale = 2.0 / m as f64;
        let mut buf = vec![0.0; m - 1];
        if self.dim == 1 {
            buf.copy_from_slice(&phys[1..m]);
            self.dst(&mut buf);
            return Ok(buf[..k].iter().map(|v| v * scale).collect());
        }
        let n = m + 1;
        // rows: x fixed, transform along y
        let mut tmp = vec![0.0; (m - 1) * k];
        for i in 1..m {
            buf.copy_from_slice(&phys[i * n + 1..i * n + m]);
            self.dst(&mut buf);
            for k2 in 0..k {
                tmp[(i - 1) * k + k2] = buf[k2] * scale;
            }
        }
        let mut c = vec![0.0; k * k];
        for k2 in 0..k {
            for i in 0..m - 1 {
                buf[i] = tmp[i * k + k2];
            }
            self.dst(&mut buf);
            for k1 in 0..k {
                c[k1 * k + k2] = buf[k1] * scale;
            }
        }
        Ok(c)
    }

    /// Grid samples of a coefficient vector, zero on the boundary.
    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.n_coeffs() {
            return error::domain(format!(
                "expected {} coefficients, got {}",
                self.n_coeffs(),
                coeffs.len()
            ));
        }
        let (m, k) = (self.grid, self.modes);
        let mut phys = vec![0.0; self.phys_len()];
        let mut buf = vec![0.0; m - 1];
        if self.dim == 1 {
            buf[..k].copy_from_slice(coeffs);
            self.dst(&mut buf);
            phys[1..m].copy_from_slice(&buf);
            return Ok(phys);
        }
        let n = m + 1;
        // columns: for each k2 synthesize along x
        let mut tmp = vec![0.0; (m - 1) * k];
        for k2 in 0..k {
            buf.iter_mut().for_each(|v| *v = 0.0);
            for k1 in 0..k {
                buf[k1] = coeffs[k1 * k + k2];
            }
            self.dst(&mut buf);
            for i in 0..m - 1 {
                tmp[i * k + k2] = buf[i];
            }
        }
        for i in 1..m {
            buf.iter_mut().for_each(|v| *v = 0.0);
            buf[..k].copy_from_slice(&tmp[(i - 1) * k..i * k]);
            self.dst(&mut buf);
            phys[i * n + 1..i * n + m].copy_from_slice(&buf);
        }
        Ok(phys)
    }

    pub fn field_from_coeffs(&self, coeffs: Vec<f64>) -> Result<SpectralField> {
        let phys = self.inverse(&coeffs)?;
        Ok(SpectralField { coeffs, phys })
    }

    /// Projection of grid samples onto the retained modes.
    pub fn field_from_phys(&self, phys: &[f64]) -> Result<SpectralField> {
        self.field_from_coeffs(self.transform(phys)?)
    }

    /// Sample `f` (taking `&[x]` or `&[x, y]`) on the grid and project.
    pub fn field_from_fn(&self, f: impl Fn(&[f64]) -> f64) -> Result<SpectralField> {
        let ax = self.axis();
        let phys: Vec<f64> = if self.dim == 1 {
            ax.iter().map(|&x| f(&[x])).collect()
        } else {
            ax.iter()
                .flat_map(|&x| ax.iter().map(move |&y| (x, y)))
                .map(|(x, y)| f(&[x, y]))
                .collect()
        };
        self.field_from_phys(&phys)
    }

    pub fn zero_field(&self) -> SpectralField {
        SpectralField {
            coeffs: vec![0.0; self.n_coeffs()],
            phys: vec![0.0; self.phys_len()],
        }
    }

    /// Values of `f(λ_k)` per coefficient, evaluated once per distinct eigenvalue.
    fn per_mode(&self, policy: ExecPolicy, f: impl Fn(f64) -> Result<f64> + Sync) -> Result<Vec<f64>> {
        let mut distinct: Vec<f64> = self.eigenvalues.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let vals = policy.try_map_range(distinct.len(), |i| f(distinct[i]))?;
        let map: HashMap<u64, f64> = distinct.iter().map(|l| l.to_bits()).zip(vals).collect();
        Ok(self.eigenvalues.iter().map(|l| map[&l.to_bits()]).collect())
    }
}

/// A field in both representations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
    phys: Vec<f64>,
}

impl SpectralField {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn phys(&self) -> &[f64] {
        &self.phys
    }

    pub fn sup_norm(&self) -> f64 {
        self.phys.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn scaled(&self, domain: &SpectralDomain, factors: &[f64]) -> Result<Self> {
        let c = self.coeffs.iter().zip(factors).map(|(c, f)| c * f).collect();
        domain.field_from_coeffs(c)
    }
}

/// `P_α(t)u`: mode `k` times `E_α(-λ_k t^α)`.
pub fn apply_p(domain: &SpectralDomain, alpha: f64, t: f64, u: &SpectralField, policy: ExecPolicy) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return domain_err(t);
    }
    if t == 0.0 {
        return Ok(u.clone());
    }
    let e = NegativeAxis::new(alpha, 1.0)?;
    let ta = t.powf(alpha);
    u.scaled(domain, &domain.per_mode(policy, |l| e.eval(l * ta))?)
}

/// `₀I_t^1 P_α(t)u`: mode `k` times `t E_{α,2}(-λ_k t^α)`.
pub fn apply_ip(domain: &SpectralDomain, alpha: f64, t: f64, u: &SpectralField, policy: ExecPolicy) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return domain_err(t);
    }
    if t == 0.0 {
        return Ok(domain.zero_field());
    }
    let e = NegativeAxis::new(alpha, 2.0)?;
    let ta = t.powf(alpha);
    u.scaled(domain, &domain.per_mode(policy, |l| Ok(t * e.eval(l * ta)?))?)
}

/// `₀I_t^γ[t^{α-1} S_α(t)u] = ₀I_t^{α+γ-1} P_α(t)u`: mode `k` times
/// `t^{α+γ-1} E_{α,α+γ}(-λ_k t^α)`.
pub fn apply_collapsed_memory(
    domain: &SpectralDomain,
    alpha: f64,
    gamma: f64,
    t: f64,
    u: &SpectralField,
    policy: ExecPolicy,
) -> Result<SpectralField> {
    if !(t > 0.0) {
        return error::domain(format!("time {t} must be positive"));
    }
    let s = alpha + gamma;
    let e = NegativeAxis::new(alpha, s)?;
    let ta = t.powf(alpha);
    u.scaled(domain, &domain.per_mode(policy, |l| Ok(t.powf(s - 1.0) * e.eval(l * ta)?))?)
}

fn domain_err<T>(t: f64) -> Result<T> {
    error::domain(format!("time {t} is negative"))
}

/// Per-mode history of the nonlinearity and the product weights of the
/// mode kernels `τ^{σ-1} E_{α,σ}(-λ_k τ^α)`, `σ = α + γ`.
#[derive(Debug)]
pub struct EvolutionState {
    mesh: Arc<TimeMesh>,
    weights: Vec<Arc<ProductWeights>>,
    /// `history[k][j]`: coefficient `k` of `|u(t_j)|^p`.
    history: Vec<Vec<f64>>,
    steps: usize,
}

impl EvolutionState {
    pub fn new(domain: &SpectralDomain, alpha: f64, gamma: f64, mesh: &Arc<TimeMesh>, policy: ExecPolicy) -> Result<Self> {
        let mut distinct: Vec<f64> = domain.eigenvalues().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let sigma = alpha + gamma;
        let w = policy.try_map_range(distinct.len(), |i| {
            mesh.weights(
                &Kernel::MittagLeffler {
                    alpha,
                    sigma,
                    lambda: distinct[i],
                },
                ExecPolicy::Sequential,
            )
        })?;
        let map: HashMap<u64, Arc<ProductWeights>> = distinct.iter().map(|l| l.to_bits()).zip(w).collect();
        let weights = domain.eigenvalues().iter().map(|l| Arc::clone(&map[&l.to_bits()])).collect();
        Ok(Self {
            mesh: Arc::clone(mesh),
            weights,
            history: vec![Vec::with_capacity(mesh.nodes().len()); domain.n_coeffs()],
            steps: 0,
        })
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// Record the coefficients of the nonlinearity at the next node.
    pub fn push(&mut self, f: &[f64]) -> Result<()> {
        if f.len() != self.history.len() {
            return Err(Error::State(format!(
                "expected {} coefficients, got {}",
                self.history.len(),
                f.len()
            )));
        }
        if self.steps >= self.mesh.nodes().len() {
            return Err(Error::State("history already covers the mesh".into()));
        }
        for (h, &v) in self.history.iter_mut().zip(f) {
            h.push(v);
        }
        self.steps += 1;
        Ok(())
    }

    /// `Σ_j w^{(k)}_{n,j} f_k(t_j)` over the recorded nodes `j ≤ n`. With
    /// history up to `t_{n-1}` this is the explicit part of step `n`.
    pub fn memory_kernel_apply(&self, n: usize, policy: ExecPolicy) -> Result<Vec<f64>> {
        if n >= self.mesh.nodes().len() {
            return Err(Error::State(format!("node {n} outside the mesh")));
        }
        if self.steps < n {
            return Err(Error::State(format!(
                "history covers {} nodes, node {n} needs {n}",
                self.steps
            )));
        }
        let len = self.steps.min(n + 1);
        Ok(policy.map_range(self.history.len(), |k| {
            self.weights[k].apply_row(n, &self.history[k][..len])
        }))
    }

    /// Weight of the current node in each mode, `w^{(k)}_{n,n}`.
    pub fn diagonal(&self, n: usize) -> Vec<f64> {
        self.weights.iter().map(|w| w.weight(n, n)).collect()
    }
}

/// Initial data and equation parameters; `params.a` is unused (the
/// Laplacian supplies `λ_k`).
#[derive(Debug, Clone)]
pub struct MildProblem {
    pub params: ProblemParams,
    pub u0: SpectralField,
    pub u1: SpectralField,
}

#[derive(Debug, Clone)]
pub struct MildOptions {
    /// Sup-norm threshold; defaults to `10⁶ max(1, ‖u0‖∞, ‖u1‖∞)`.
    pub threshold: Option<f64>,
    /// Drop the nonlinear memory term (linear decoupling checks).
    pub linear: bool,
    /// Halve steps near blow-up instead of failing.
    pub step_control: bool,
    pub corrector_tol: f64,
    pub max_iterations: usize,
    pub policy: ExecPolicy,
}

impl Default for MildOptions {
    fn default() -> Self {
        Self {
            threshold: None,
            linear: false,
            step_control: true,
            corrector_tol: 1e-10,
            max_iterations: 50,
            policy: ExecPolicy::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MildSolution {
    pub domain: Arc<SpectralDomain>,
    pub params: ProblemParams,
    /// Nodes actually computed.
    pub mesh: Arc<TimeMesh>,
    /// Coefficients of `u(t_j)`.
    pub coeffs: Vec<Vec<f64>>,
    /// Coefficients of `|u(t_j)|^p`.
    pub nonlinearity: Vec<Vec<f64>>,
    pub sup_norm: Vec<f64>,
    pub u1: Vec<f64>,
    pub status: Status,
    pub t_star_estimate: Option<f64>,
    pub refinement_history: Vec<(usize, Option<f64>)>,
    /// Number of step halvings near blow-up.
    pub halvings: usize,
}

impl MildSolution {
    pub fn times(&self) -> &[f64] {
        self.mesh.nodes()
    }

    pub fn field(&self, n: usize) -> Result<SpectralField> {
        self.domain.field_from_coeffs(self.coeffs[n].clone())
    }

    /// Index of the node closest to `t`.
    pub fn node_near(&self, t: f64) -> usize {
        let ts = self.times();
        let i = ts.partition_point(|&x| x < t).min(ts.len() - 1);
        if i > 0 && (t - ts[i - 1]) < (ts[i] - t) {
            i - 1
        } else {
            i
        }
    }
}

fn nonlinearity(domain: &SpectralDomain, coeffs: &[f64], p: f64) -> Result<(Vec<f64>, f64)> {
    let phys = domain.inverse(coeffs)?;
    let sup = phys.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g: Vec<f64> = phys.iter().map(|v| v.abs().powf(p)).collect();
    Ok((domain.transform(&g)?, sup))
}

struct Step {
    u: Vec<f64>,
    f: Vec<f64>,
    sup: f64,
}

/// Fixed-point corrector for `u = known + b diag ∘ T(|T⁻¹u|^p)`; `None` when
/// it does not converge.
fn correct_field(
    domain: &SpectralDomain,
    known: &[f64],
    diag: &[f64],
    b: f64,
    p: f64,
    guess: &[f64],
    opts: &MildOptions,
) -> Result<Option<Step>> {
    let mut u = guess.to_vec();
    for _ in 0..opts.max_iterations {
        let (f, _) = nonlinearity(domain, &u, p)?;
        let next: Vec<f64> = known
            .iter()
            .zip(diag)
            .zip(&f)
            .map(|((k, d), f)| k + b * d * f)
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let du = next.iter().zip(&u).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        let un = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        u = next;
        if du <= opts.corrector_tol * un.max(1.0) {
            let (f, sup) = nonlinearity(domain, &u, p)?;
            return Ok(Some(Step { u, f, sup }));
        }
    }
    Ok(None)
}

/// Time-step the mild formulation on `mesh`, stopping when the sup-norm
/// exceeds the threshold.
///
/// With `step_control`, once the sup-norm passes `10³ max(1, ‖u0‖∞, ‖u1‖∞)`
/// or the corrector stops contracting, the rest of the interval is covered
/// by steps halved each time the sup-norm doubles (and after every corrector
/// failure), with per-mode weights built for the nonuniform nodes.
pub fn solve_mild(
    domain: &Arc<SpectralDomain>,
    problem: &MildProblem,
    mesh: &Arc<TimeMesh>,
    opts: &MildOptions,
) -> Result<MildSolution> {
    let pr = problem.params;
    let nc = domain.n_coeffs();
    if problem.u0.coeffs.len() != nc || problem.u1.coeffs.len() != nc {
        return error::domain("initial data do not match the domain");
    }
    domain.check_aliasing(pr.p)?;
    let scale = 1f64.max(problem.u0.sup_norm()).max(problem.u1.sup_norm());
    let threshold = opts.threshold.unwrap_or(1e6 * scale);
    if !(threshold > scale) {
        return error::domain(format!("threshold {threshold} must exceed max(1, |u0|) = {scale}"));
    }
    let halving_level = 1e3 * scale;
    let b = if opts.linear { 0.0 } else { pr.b };
    let policy = opts.policy;
    let mode_policy = if nc >= 64 { policy } else { ExecPolicy::Sequential };
    let mut state = EvolutionState::new(domain, pr.alpha, pr.gamma, mesh, policy)?;
    let e1 = NegativeAxis::new(pr.alpha, 1.0)?;
    let e2 = NegativeAxis::new(pr.alpha, 2.0)?;
    let (u0, u1) = (&problem.u0.coeffs, &problem.u1.coeffs);
    let active: Vec<usize> = (0..nc).filter(|&k| u0[k] != 0.0 || u1[k] != 0.0).collect();
    let lam = domain.eigenvalues();
    let linear_part = |t: f64| -> Result<Vec<f64>> {
        let mut c = vec![0.0; nc];
        if t == 0.0 {
            c.copy_from_slice(u0);
            return Ok(c);
        }
        let ta = t.powf(pr.alpha);
        for &k in &active {
            let v = lam[k] * ta;
            c[k] = e1.eval(v)? * u0[k] + t * e2.eval(v)? * u1[k];
        }
        Ok(c)
    };

    let base = mesh.nodes();
    let horizon = mesh.horizon();
    let (f0, sup0) = nonlinearity(domain, u0, pr.p)?;
    state.push(&f0)?;
    let mut t = vec![0.0];
    let mut coeffs = vec![u0.clone()];
    let mut nonlin = vec![f0];
    let mut sups = vec![sup0];
    let mut crossing = None;

    let mut n = 1;
    while n < base.len() {
        let tn = base[n];
        let mut known = linear_part(tn)?;
        if b != 0.0 {
            let mem = state.memory_kernel_apply(n, mode_policy)?;
            known.iter_mut().zip(&mem).for_each(|(k, m)| *k += b * m);
        }
        let diag = state.diagonal(n);
        let Some(step) = correct_field(domain, &known, &diag, b, pr.p, &coeffs[n - 1], opts)? else {
            if opts.step_control {
                break;
            }
            return Err(Error::StepFailure { node: n, t: tn });
        };
        state.push(&step.f)?;
        t.push(tn);
        coeffs.push(step.u);
        nonlin.push(step.f);
        sups.push(step.sup);
        if step.sup > threshold {
            crossing = Some(crate::fode::crossing_time(base[n - 1], sups[n - 1], tn, step.sup, threshold));
            break;
        }
        n += 1;
        if opts.step_control && step.sup > halving_level && n < base.len() {
            break;
        }
    }

    let mut halvings = 0;
    if crossing.is_none() && *t.last().unwrap() < horizon {
        let mut hist = state.history;
        let mut distinct: Vec<f64> = lam.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let slot: Vec<usize> = lam
            .iter()
            .map(|l| distinct.partition_point(|d| d < l))
            .collect();
        let prims = distinct
            .iter()
            .map(|&lambda| {
                Kernel::MittagLeffler {
                    alpha: pr.alpha,
                    sigma: pr.alpha + pr.gamma,
                    lambda,
                }
                .primitives()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h = 0.5 * (base[n.min(base.len() - 1)] - base[n - 1]);
        halvings += 1;
        let mut level = *sups.last().unwrap();
        let mut steps = 0usize;
        while *t.last().unwrap() < horizon {
            steps += 1;
            if steps > 200_000 {
                return Err(Error::StepFailure { node: t.len(), t: *t.last().unwrap() });
            }
            let prev = *t.last().unwrap();
            let mut tn = prev + h;
            if tn > horizon || horizon - tn < 1e-9 * h {
                tn = horizon;
            }
            t.push(tn);
            let k = t.len() - 1;
            let rows = mode_policy.try_map_range(prims.len(), |i| fracops::dense_row(&prims[i], &t, k))?;
            let mut known = linear_part(tn)?;
            let mut diag = vec![0.0; nc];
            for m in 0..nc {
                let row = &rows[slot[m]];
                if b != 0.0 {
                    known[m] += b * row[..k].iter().zip(&hist[m]).map(|(w, f)| w * f).sum::<f64>();
                }
                diag[m] = row[k];
            }
            let Some(step) = correct_field(domain, &known, &diag, b, pr.p, &coeffs[k - 1], opts)? else {
                t.pop();
                h *= 0.5;
                halvings += 1;
                if h < 1e-13 * prev.max(1e-6 * horizon) {
                    if *sups.last().unwrap() > halving_level {
                        crossing = Some(prev);
                        break;
                    }
                    return Err(Error::StepFailure { node: k, t: tn });
                }
                continue;
            };
            for (hm, &fm) in hist.iter_mut().zip(&step.f) {
                hm.push(fm);
            }
            coeffs.push(step.u);
            nonlin.push(step.f);
            sups.push(step.sup);
            if step.sup > threshold {
                crossing = Some(crate::fode::crossing_time(t[k - 1], sups[k - 1], tn, step.sup, threshold));
                break;
            }
            if step.sup >= 2.0 * level {
                level = step.sup;
                h *= 0.5;
                halvings += 1;
            }
        }
    }

    let traj_mesh = if t.len() == base.len() && halvings == 0 {
        Arc::clone(mesh)
    } else {
        Arc::new(TimeMesh::from_nodes(t)?)
    };
    Ok(MildSolution {
        domain: Arc::clone(domain),
        params: pr,
        mesh: traj_mesh,
        coeffs,
        nonlinearity: nonlin,
        sup_norm: sups,
        u1: u1.clone(),
        status: if crossing.is_some() {
            Status::Blowup
        } else {
            Status::GlobalToHorizon
        },
        t_star_estimate: crossing,
        refinement_history: vec![(mesh.steps(), crossing)],
        halvings,
    })
}

/// Three-mesh refinement protocol of [`crate::fode::detect_blowup_with`] for the PDE.
pub fn detect_blowup_mild(
    domain: &Arc<SpectralDomain>,
    problem: &MildProblem,
    horizon: f64,
    base_steps: usize,
    convergence_tol: f64,
    opts: &MildOptions,
) -> Result<MildSolution> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return error::domain(format!("horizon {horizon} must be positive"));
    }
    if base_steps < 2 {
        return error::domain("refinement needs at least 2 base steps");
    }
    let policy = opts.policy;
    let n = base_steps;
    let mut hz = horizon;
    for zoom in 0..=crate::fode::MAX_ZOOMS {
        let solve = |steps: usize| -> Result<MildSolution> {
            solve_mild(domain, problem, &Arc::new(TimeMesh::uniform(hz, steps)?), opts)
        };
        let (r1, (r2, r4)) = policy.join(|| solve(n), || policy.join(|| solve(2 * n), || solve(4 * n)));
        let runs = [r1?, r2?, r4?];
        let history: Vec<(usize, Option<f64>)> = runs
            .iter()
            .zip([n, 2 * n, 4 * n])
            .map(|(r, s)| (s, r.t_star_estimate))
            .collect();
        if zoom < crate::fode::MAX_ZOOMS {
            if let Some(next) = crate::fode::zoom_horizon(&history, hz) {
                hz = next;
                continue;
            }
        }
        let [_, _, finest] = runs;
        let t_star = judge_crossings(&history, convergence_tol, hz)?;
        if zoom > 0 && t_star.is_none() {
            return Err(Error::Indeterminate(format!(
                "coarse meshes crossed before t = {hz} but refined meshes did not"
            )));
        }
        return Ok(MildSolution {
            status: if t_star.is_some() {
                Status::Blowup
            } else {
                Status::GlobalToHorizon
            },
            t_star_estimate: t_star,
            refinement_history: history,
            ..finest
        });
    }
    unreachable!("the last zoom always returns")
}

/// `w(t) = ∫ u φ₁` and the checks of the eigenfunction reduction.
#[derive(Debug, Clone)]
pub struct EigenfunctionalReport {
    pub w: SampledPath,
    /// `∫ |u|^p φ₁` at the nodes.
    pub forcing: SampledPath,
    /// Max of `|₀D^α w + λ₁ w - b ₀I^γ ∫|u|^p φ₁|` over nodes past the
    /// initial layer `t ≥ t_end/10`, where the grid derivative is meaningful.
    pub residual: f64,
    /// Min over nodes of `₀I^γ(∫|u|^p φ₁) - ₀I^γ(|w|^p)`, relative to the first term.
    pub jensen_min_gap: f64,
    pub jensen_holds: bool,
}

/// Relative quadrature slack allowed in the Jensen comparison.
pub const JENSEN_TOL: f64 = 1e-8;

pub fn eigenfunctional(sol: &MildSolution) -> Result<EigenfunctionalReport> {
    let d = &sol.domain;
    let pr = &sol.params;
    let wt = d.phi1_weight();
    let w = SampledPath::new(Arc::clone(&sol.mesh), sol.coeffs.iter().map(|c| wt * c[0]).collect())?;
    let forcing = SampledPath::new(Arc::clone(&sol.mesh), sol.nonlinearity.iter().map(|f| wt * f[0]).collect())?;
    let wp = SampledPath::new(Arc::clone(&sol.mesh), w.values.iter().map(|v| v.abs().powf(pr.p)).collect())?;
    let (lhs, rhs) = if sol.mesh.steps() >= 1 {
        (
            fracops::frac_integral_left(&forcing, pr.gamma)?,
            fracops::frac_integral_left(&wp, pr.gamma)?,
        )
    } else {
        (forcing.clone(), wp.clone())
    };
    let mut gap = f64::INFINITY;
    let mut holds = true;
    for ((a, b), (fa, fb)) in lhs.values.iter().zip(&rhs.values).zip(forcing.values.iter().zip(&wp.values)) {
        let scale = a.abs().max(f64::MIN_POSITIVE);
        gap = gap.min((a - b) / scale);
        let tol = JENSEN_TOL * a.abs().max(fa.abs());
        if a - b < -tol || fa - fb < -JENSEN_TOL * fa.abs() {
            holds = false;
        }
    }
    let residual = if sol.mesh.steps() >= 3 {
        let w1 = wt * sol.u1[0];
        let dw = fracops::caputo_left(&w, pr.alpha, w.values[0], w1)?;
        let t0 = 0.1 * sol.mesh.horizon();
        dw.values
            .iter()
            .zip(&w.values)
            .zip(&lhs.values)
            .zip(sol.mesh.nodes())
            .filter(|(_, &t)| t >= t0)
            .map(|(((dv, wv), iv), _)| (dv + d.first_eigenvalue() * wv - pr.b * iv).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(EigenfunctionalReport {
        w,
        forcing,
        residual,
        jensen_min_gap: if gap.is_finite() { gap } else { 0.0 },
        jensen_holds: holds,
    })
}

/// Fitted decay exponents of the three solution operators applied to `u0`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayProbe {
    pub times: Vec<f64>,
    pub p_norms: Vec<f64>,
    pub ip_norms: Vec<f64>,
    pub memory_norms: Vec<f64>,
    /// Expected `-α`.
    pub p_fit: RateFit,
    /// Expected `-(α-1)`.
    pub ip_fit: RateFit,
    /// Expected `-(1-γ)`.
    pub memory_fit: RateFit,
}

pub fn operator_decay_probe(
    domain: &SpectralDomain,
    u0: &SpectralField,
    alpha: f64,
    gamma: f64,
    times: &[f64],
    policy: ExecPolicy,
) -> Result<DecayProbe> {
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if !(lo > 0.0 && hi >= 100.0 * lo) {
        return error::domain("probe times must be positive and span at least two decades");
    }
    if u0.sup_norm() == 0.0 {
        return Err(Error::Degenerate("initial field vanishes".into()));
    }
    let mut ts = times.to_vec();
    ts.sort_by(f64::total_cmp);
    let norms = |op: &dyn Fn(f64) -> Result<SpectralField>| -> Result<Vec<f64>> {
        ts.iter().map(|&t| Ok(op(t)?.sup_norm())).collect()
    };
    let p_norms = norms(&|t| apply_p(domain, alpha, t, u0, policy))?;
    let ip_norms = norms(&|t| apply_ip(domain, alpha, t, u0, policy))?;
    let memory_norms = norms(&|t| apply_collapsed_memory(domain, alpha, gamma, t, u0, policy))?;
    for (name, v) in [("P", &p_norms), ("I P", &ip_norms), ("memory", &memory_norms)] {
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::Degenerate(format!("{name} sup-norm vanishes identically")));
        }
    }
    let window = (lo, hi);
    Ok(DecayProbe {
        p_fit: fit_power_law(&ts, &p_norms, window)?,
        ip_fit: fit_power_law(&ts, &ip_norms, window)?,
        memory_fit: fit_power_law(&ts, &memory_norms, window)?,
        times: ts,
        p_norms,
        ip_norms,
        memory_norms,
    })
}
