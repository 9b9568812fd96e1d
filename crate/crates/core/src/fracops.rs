//! Riemann-Liouville integrals and Caputo derivatives on sampled grids.
//!
//! All convolutions use product-trapezoid weights: the integrand is
//! interpolated piecewise linearly and integrated exactly against the
//! weakly singular kernel, which keeps second order for smooth data.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::ExecPolicy;
use crate::mlf::{MittagLeffler, NegativeAxis};
use crate::special::{gamma_ratio, rgamma};

/// Convolution kernel `k(u)` of a Volterra operator `∫₀ᵗ k(t-s) f(s) ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    /// `u^{q-1} / Γ(q)`, the Riemann-Liouville kernel of order `q`.
    Power { order: f64 },
    /// `u^{σ-1} E_{α,σ}(-λ u^α)`.
    MittagLeffler { alpha: f64, sigma: f64, lambda: f64 },
}

type KernelKey = [u64; 4];

impl Kernel {
    fn key(&self) -> KernelKey {
        match *self {
            Kernel::Power { order } => [0, order.to_bits(), 0, 0],
            Kernel::MittagLeffler {
                alpha,
                sigma,
                lambda,
            } => [1, alpha.to_bits(), sigma.to_bits(), lambda.to_bits()],
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Power { order } if !(order > 0.0 && order.is_finite()) => {
                domain(format!("integration order {order} must be positive"))
            }
            Kernel::MittagLeffler {
                alpha,
                sigma,
                lambda,
            } if !(sigma > 0.0 && lambda.is_finite() && alpha > 0.0 && alpha <= 2.0) => domain(
                format!("kernel parameters alpha={alpha}, sigma={sigma}, lambda={lambda} out of range"),
            ),
            _ => Ok(()),
        }
    }

    /// Evaluator of the first and second primitives `(K1(u), K2(u))`.
    pub fn primitives(&self) -> Result<KernelPrimitives> {
        self.validate()?;
        let (q, ml) = match *self {
            Kernel::Power { order } => (order, None),
            Kernel::MittagLeffler { sigma, lambda, .. } if lambda == 0.0 => (sigma, None),
            Kernel::MittagLeffler {
                alpha,
                sigma,
                lambda,
            } => {
                let e = if lambda > 0.0 {
                    MlPair::Table(NegativeAxis::new(alpha, sigma + 1.0)?, NegativeAxis::new(alpha, sigma + 2.0)?)
                } else {
                    MlPair::Direct(MittagLeffler::new(alpha, sigma + 1.0)?, MittagLeffler::new(alpha, sigma + 2.0)?)
                };
                (sigma, Some(MlPrimitives { alpha, lambda, e }))
            }
        };
        Ok(KernelPrimitives {
            q,
            r1: rgamma(q + 1.0),
            r2: rgamma(q + 2.0),
            ml,
        })
    }

    /// Pointwise value `k(u)` for `u > 0`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        self.validate()?;
        match *self {
            Kernel::Power { order } => Ok(u.powf(order - 1.0) * rgamma(order)),
            Kernel::MittagLeffler {
                alpha,
                sigma,
                lambda,
            } => Ok(u.powf(sigma - 1.0)
                * MittagLeffler::new(alpha, sigma)?.eval_real(-lambda * u.powf(alpha))?),
        }
    }
}

#[derive(Debug, Clone)]
enum MlPair {
    Table(NegativeAxis, NegativeAxis),
    Direct(MittagLeffler, MittagLeffler),
}

#[derive(Debug, Clone)]
struct MlPrimitives {
    alpha: f64,
    lambda: f64,
    e: MlPair,
}

/// Evaluator of the kernel primitives `K1(u) = ∫₀ᵘ k`, `K2(u) = ∫₀ᵘ K1`.
/// Mittag-Leffler kernels are tabulated once so repeated calls are cheap.
#[derive(Debug, Clone)]
pub struct KernelPrimitives {
    q: f64,
    r1: f64,
    r2: f64,
    ml: Option<MlPrimitives>,
}

impl KernelPrimitives {
    pub fn eval(&self, u: f64) -> Result<(f64, f64)> {
        if u <= 0.0 {
            return Ok((0.0, 0.0));
        }
        let uq = u.powf(self.q);
        let Some(m) = &self.ml else {
            return Ok((uq * self.r1, uq * u * self.r2));
        };
        let v = m.lambda * u.powf(m.alpha);
        let (g1, g2) = match &m.e {
            MlPair::Table(a, b) => (a.eval(v)?, b.eval(v)?),
            MlPair::Direct(a, b) => (a.eval_real(-v)?, b.eval_real(-v)?),
        };
        Ok((uq * g1, uq * u * g2))
    }
}

/// Product-trapezoid weights `w_{n,j}` with `(∫₀^{t_n} k(t_n - s) f(s) ds) ≈ Σ_j w_{n,j} f_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProductWeights {
    /// Uniform mesh: `w_{n,j} = c_{n-j} [j < n] + d_{n-j+1} [j > 0]`.
    Toeplitz { c: Vec<f64>, d: Vec<f64> },
    /// Arbitrary mesh: one row per node.
    Dense { rows: Vec<Vec<f64>> },
}

impl ProductWeights {
    /// Weights for a uniform mesh of `n` steps of size `h`.
    pub fn toeplitz(kernel: &Kernel, h: f64, n: usize, policy: ExecPolicy) -> Result<Self> {
        let prim = kernel.primitives()?;
        let k = policy.try_map_range(n + 1, |m| prim.eval(m as f64 * h))?;
        let mut c = vec![0.0; n + 1];
        let mut d = vec![0.0; n + 1];
        for m in 1..=n {
            let dk2 = (k[m].1 - k[m - 1].1) / h;
            c[m] = k[m].0 - dk2;
            d[m] = dk2 - k[m - 1].0;
        }
        Ok(ProductWeights::Toeplitz { c, d })
    }

    /// Weights for arbitrary increasing nodes starting at 0.
    pub fn dense(kernel: &Kernel, nodes: &[f64], policy: ExecPolicy) -> Result<Self> {
        let prim = kernel.primitives()?;
        let rows = policy.try_map_range(nodes.len(), |n| dense_row(&prim, nodes, n))?;
        Ok(ProductWeights::Dense { rows })
    }

    pub fn weight(&self, n: usize, j: usize) -> f64 {
        if j > n {
            return 0.0;
        }
        match self {
            ProductWeights::Toeplitz { c, d } => {
                let mut w = 0.0;
                if j < n {
                    w += c[n - j];
                }
                if j > 0 {
                    w += d[n - j + 1];
                }
                w
            }
            ProductWeights::Dense { rows } => rows[n][j],
        }
    }

    /// `Σ_{j ≤ n} w_{n,j} f_j`, truncated to `j < f.len()`.
    pub fn apply_row(&self, n: usize, f: &[f64]) -> f64 {
        match self {
            ProductWeights::Toeplitz { c, d } => {
                let mut s = 0.0;
                for j in 0..n.min(f.len()) {
                    s += c[n - j] * f[j];
                }
                for j in 1..=n.min(f.len().saturating_sub(1)) {
                    s += d[n - j + 1] * f[j];
                }
                s
            }
            ProductWeights::Dense { rows } => rows[n].iter().zip(f).map(|(w, v)| w * v).sum(),
        }
    }

    /// Apply every row to `f`.
    pub fn apply(&self, f: &[f64], policy: ExecPolicy) -> Vec<f64> {
        policy.map_range(f.len(), |n| self.apply_row(n, f))
    }
}

/// One row of product-trapezoid weights at node `n` of arbitrary nodes.
pub fn dense_row(prim: &KernelPrimitives, nodes: &[f64], n: usize) -> Result<Vec<f64>> {
    let tn = nodes[n];
    let k: Vec<(f64, f64)> = nodes[..=n]
        .iter()
        .map(|&t| prim.eval(tn - t))
        .collect::<Result<_>>()?;
    let mut w = vec![0.0; n + 1];
    for j in 0..n {
        let h = nodes[j + 1] - nodes[j];
        let dk2 = (k[j].1 - k[j + 1].1) / h;
        w[j] += k[j].0 - dk2;
        w[j + 1] += dk2 - k[j + 1].0;
    }
    Ok(w)
}

/// Time grid `0 = t₀ < … < t_N = T` with a cache of convolution weights.
pub struct TimeMesh {
    nodes: Vec<f64>,
    grading: f64,
    uniform: bool,
    cache: RwLock<HashMap<KernelKey, Arc<ProductWeights>>>,
}

impl fmt::Debug for TimeMesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeMesh")
            .field("horizon", &self.horizon())
            .field("steps", &self.steps())
            .field("grading", &self.grading)
            .field("uniform", &self.uniform)
            .finish()
    }
}

impl Clone for TimeMesh {
    fn clone(&self) -> Self {
        let cache = self.cache.read().expect("weight cache poisoned").clone();
        Self {
            nodes: self.nodes.clone(),
            grading: self.grading,
            uniform: self.uniform,
            cache: RwLock::new(cache),
        }
    }
}

impl TimeMesh {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        Self::graded(horizon, steps, 1.0)
    }

    /// Nodes `t_j = T (j/N)^r`.
    pub fn graded(horizon: f64, steps: usize, grading: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon {horizon} must be positive"));
        }
        if steps == 0 {
            return domain("mesh needs at least one step");
        }
        if !(grading >= 1.0 && grading.is_finite()) {
            return domain(format!("grading exponent {grading} must be >= 1"));
        }
        let n = steps as f64;
        let mut nodes: Vec<f64> = (0..=steps)
            .map(|j| horizon * (j as f64 / n).powf(grading))
            .collect();
        nodes[steps] = horizon;
        Ok(Self {
            nodes,
            grading,
            uniform: grading == 1.0,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Arbitrary strictly increasing nodes starting at 0.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return domain("mesh needs at least two nodes");
        }
        if nodes[0] != 0.0 {
            return domain(format!("first node is {} instead of 0", nodes[0]));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0])) {
            return domain(format!("nodes not strictly increasing at {} -> {}", w[0], w[1]));
        }
        Ok(Self {
            nodes,
            grading: f64::NAN,
            uniform: false,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("nonempty mesh")
    }

    /// Number of steps `N` (one less than the number of nodes).
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Grading exponent, `NaN` for meshes built from explicit nodes.
    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Largest step size.
    pub fn max_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Weights for `kernel`, computed once and cached.
    pub fn weights(&self, kernel: &Kernel, policy: ExecPolicy) -> Result<Arc<ProductWeights>> {
        let key = kernel.key();
        if let Some(w) = self.cache.read().expect("weight cache poisoned").get(&key) {
            return Ok(Arc::clone(w));
        }
        let w = Arc::new(if self.uniform {
            ProductWeights::toeplitz(kernel, self.nodes[1], self.steps(), policy)?
        } else {
            ProductWeights::dense(kernel, &self.nodes, policy)?
        });
        let mut cache = self.cache.write().expect("weight cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(w)))
    }

    /// The mesh seen backwards from `T`: nodes `T - t_{N-j}`.
    pub fn reversed(self: &Arc<Self>) -> Result<Arc<Self>> {
        if self.uniform {
            return Ok(Arc::clone(self));
        }
        let t = self.horizon();
        let mut nodes: Vec<f64> = self.nodes.iter().rev().map(|&s| t - s).collect();
        nodes[0] = 0.0;
        Ok(Arc::new(Self::from_nodes(nodes)?))
    }
}

/// Grid function aligned with the nodes of a mesh.
#[derive(Debug, Clone)]
pub struct SampledPath {
    pub mesh: Arc<TimeMesh>,
    pub values: Vec<f64>,
}

impl SampledPath {
    pub fn new(mesh: Arc<TimeMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nodes().len() {
            return domain(format!(
                "{} values for {} mesh nodes",
                values.len(),
                mesh.nodes().len()
            ));
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn(mesh: Arc<TimeMesh>, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&t| f(t)).collect();
        Self { mesh, values }
    }

    pub fn nodes(&self) -> &[f64] {
        self.mesh.nodes()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            mesh: Arc::clone(&self.mesh),
            values,
        }
    }

    /// Trapezoid rule over the whole mesh.
    pub fn integral(&self) -> f64 {
        trapezoid(self.nodes(), &self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    nodes
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `∫₀^{t_n} k(t_n - s) f(s) ds` at every node.
pub fn convolve(path: &SampledPath, kernel: &Kernel, policy: ExecPolicy) -> Result<SampledPath> {
    let w = path.mesh.weights(kernel, policy)?;
    Ok(path.with_values(w.apply(&path.values, policy)))
}

/// Left Riemann-Liouville integral `₀I_t^q f`.
pub fn frac_integral_left(path: &SampledPath, order: f64) -> Result<SampledPath> {
    convolve(path, &Kernel::Power { order }, ExecPolicy::default())
}

/// Right Riemann-Liouville integral `ₜI_T^q f`, via reversal of the mesh.
pub fn frac_integral_right(path: &SampledPath, order: f64) -> Result<SampledPath> {
    let rev = path.mesh.reversed()?;
    let values: Vec<f64> = path.values.iter().rev().copied().collect();
    let out = frac_integral_left(&SampledPath::new(rev, values)?, order)?;
    Ok(path.with_values(out.values.into_iter().rev().collect()))
}

/// Second derivative at `x` of the polynomial interpolating `(xs, ys)`.
fn lagrange_second_derivative(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.len();
    let mut total = 0.0;
    for i in 0..k {
        let denom: f64 = (0..k).filter(|&l| l != i).map(|l| xs[i] - xs[l]).product();
        let mut d2 = 0.0;
        for j in 0..k {
            for m in (j + 1)..k {
                if j == i || m == i {
                    continue;
                }
                let rest: f64 = (0..k)
                    .filter(|&l| l != i && l != j && l != m)
                    .map(|l| x - xs[l])
                    .product();
                d2 += 2.0 * rest;
            }
        }
        total += ys[i] * d2 / denom;
    }
    total
}

/// Second differences on arbitrary nodes: three-point in the interior,
/// four-point one-sided at the ends.
pub fn second_differences(nodes: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = nodes.len();
    if n < 3 {
        return domain(format!("second differences need 3 nodes, got {n}"));
    }
    let end = n.min(4);
    let mut out = Vec::with_capacity(n);
    out.push(lagrange_second_derivative(&nodes[..end], &values[..end], nodes[0]));
    for i in 1..n - 1 {
        out.push(lagrange_second_derivative(
            &nodes[i - 1..=i + 1],
            &values[i - 1..=i + 1],
            nodes[i],
        ));
    }
    out.push(lagrange_second_derivative(
        &nodes[n - end..],
        &values[n - end..],
        nodes[n - 1],
    ));
    Ok(out)
}

fn check_caputo_order(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return domain(format!("Caputo order {alpha} outside (1, 2]"));
    }
    Ok(())
}

/// Left Caputo derivative `₀D_t^α g = ₀I_t^{2-α} g''`, with `w0 = g(0)`, `w1 = g'(0)`.
pub fn caputo_left(path: &SampledPath, alpha: f64, w0: f64, w1: f64) -> Result<SampledPath> {
    check_caputo_order(alpha)?;
    let shifted: Vec<f64> = path
        .nodes()
        .iter()
        .zip(&path.values)
        .map(|(&t, &g)| g - w1 * t - w0)
        .collect();
    let d2 = path.with_values(second_differences(path.nodes(), &shifted)?);
    if alpha == 2.0 {
        return Ok(d2);
    }
    frac_integral_left(&d2, 2.0 - alpha)
}

/// Right Caputo derivative `ₜD_T^α g = ₜI_T^{2-α} g''`, with `g_t = g(T)`, `g1_t = g'(T)`.
pub fn caputo_right(path: &SampledPath, alpha: f64, g_t: f64, g1_t: f64) -> Result<SampledPath> {
    check_caputo_order(alpha)?;
    let t_end = path.mesh.horizon();
    let shifted: Vec<f64> = path
        .nodes()
        .iter()
        .zip(&path.values)
        .map(|(&t, &g)| g - g1_t * (t - t_end) - g_t)
        .collect();
    let d2 = path.with_values(second_differences(path.nodes(), &shifted)?);
    if alpha == 2.0 {
        return Ok(d2);
    }
    frac_integral_right(&d2, 2.0 - alpha)
}

/// `|∫ (₀I^q f) g − ∫ f (ₜI_T^q g)|` on a common mesh.
///
/// `₀I^q f` behaves like `f(0) t^q / Γ(q+1)` at the origin (and the right
/// integral likewise at `T`); that term is integrated exactly and the
/// trapezoid rule is applied to the remainder.
pub fn duality_residual(f: &SampledPath, g: &SampledPath, order: f64) -> Result<f64> {
    same_mesh(f, g)?;
    let left = frac_integral_left(f, order)?;
    let right = frac_integral_right(g, order)?;
    let nodes = f.nodes();
    let (n, t_end) = (nodes.len() - 1, f.mesh.horizon());
    let r = rgamma(order + 1.0);
    let ca = f.values[0] * g.values[0] * r;
    let cb = f.values[n] * g.values[n] * r;
    let rem_a: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &t)| left.values[i] * g.values[i] - ca * t.powf(order))
        .collect();
    let rem_b: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &t)| f.values[i] * right.values[i] - cb * (t_end - t).powf(order))
        .collect();
    let exact = t_end.powf(order + 1.0) / (order + 1.0);
    let a = trapezoid(nodes, &rem_a) + ca * exact;
    let b = trapezoid(nodes, &rem_b) + cb * exact;
    Ok((a - b).abs())
}

fn same_mesh(f: &SampledPath, g: &SampledPath) -> Result<()> {
    if Arc::ptr_eq(&f.mesh, &g.mesh) || f.nodes() == g.nodes() {
        Ok(())
    } else {
        domain("paths live on different meshes")
    }
}

/// Relative tolerance on `g(T)` and on the one-sided derivative at `T`.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Check `g(T) = g'(T) = 0` on the sampled path.
///
/// The derivative is estimated by the three-point one-sided formula at
/// spacings `h` and `2h`. It passes when it is below tolerance, or when it
/// shrinks by more than a factor 4/3 under the halving of the spacing,
/// which is what a vanishing derivative looks like at finite resolution.
fn check_terminal_conditions(g: &SampledPath) -> Result<()> {
    let v = &g.values;
    let t = g.nodes();
    let n = v.len() - 1;
    let scale = g.max_abs().max(f64::MIN_POSITIVE);
    if v[n].abs() > BOUNDARY_TOL * scale {
        return Err(Error::Precondition(format!(
            "g(T) = {} is not zero (tolerance {})",
            v[n],
            BOUNDARY_TOL * scale
        )));
    }
    let deriv = |i: [usize; 3]| {
        let xs = [t[i[0]], t[i[1]], t[i[2]]];
        let ys = [v[i[0]], v[i[1]], v[i[2]]];
        // derivative of the interpolating parabola at xs[0]
        let (h1, h2) = (xs[1] - xs[0], xs[2] - xs[0]);
        let a = (ys[1] - ys[0]) / h1;
        let b = (ys[2] - ys[0]) / h2;
        (a * h2 - b * h1) / (h2 - h1)
    };
    let d_h = deriv([n, n - 1, n - 2]);
    let tol = BOUNDARY_TOL * scale / g.mesh.horizon();
    if d_h.abs() <= tol {
        return Ok(());
    }
    if n >= 4 {
        let d_2h = deriv([n, n - 2, n - 4]);
        if d_h.abs() <= 0.75 * d_2h.abs() {
            return Ok(());
        }
    }
    Err(Error::Precondition(format!(
        "g'(T) ≈ {d_h} is not zero (tolerance {tol})"
    )))
}

/// `|∫ (₀D^α f) g − ∫ (f − f1 t − f0)(ₜD_T^α g)|` for `g(T) = g'(T) = 0`.
///
/// As in [`duality_residual`], the endpoint behaviour `f''(0) t^{2-α}/Γ(3-α)`
/// of the left derivative (and its mirror image at `T`) is integrated exactly.
pub fn ibp_residual(f: &SampledPath, g: &SampledPath, alpha: f64, f0: f64, f1: f64) -> Result<f64> {
    check_caputo_order(alpha)?;
    same_mesh(f, g)?;
    if f.values.len() < 3 {
        return domain("integration by parts needs at least 3 nodes");
    }
    check_terminal_conditions(g)?;
    let df = caputo_left(f, alpha, f0, f1)?;
    let dg = caputo_right(g, alpha, 0.0, 0.0)?;
    let nodes = f.nodes();
    let (n, t_end) = (nodes.len() - 1, f.mesh.horizon());
    let shifted: Vec<f64> = nodes
        .iter()
        .zip(&f.values)
        .map(|(&t, &v)| v - f1 * t - f0)
        .collect();
    let nu = 2.0 - alpha;
    let r = rgamma(nu + 1.0);
    let ca = second_differences(nodes, &shifted)?[0] * r * g.values[0];
    let cb = second_differences(nodes, &g.values)?[n] * r * shifted[n];
    let rem_a: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &t)| df.values[i] * g.values[i] - ca * t.powf(nu))
        .collect();
    let rem_b: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &t)| shifted[i] * dg.values[i] - cb * (t_end - t).powf(nu))
        .collect();
    let exact = t_end.powf(nu + 1.0) / (nu + 1.0);
    let lhs = trapezoid(nodes, &rem_a) + ca * exact;
    let rhs = trapezoid(nodes, &rem_b) + cb * exact;
    Ok((lhs - rhs).abs())
}

/// Test function `ψ_T(t) = (1 - t/T)^l` and its right fractional derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    pub l: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub alpha: f64,
}

/// Values of `ψ_T`, `ₜD_T^γ ψ_T` and `ₜD_T^{α+γ} ψ_T` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFnValues {
    pub psi: f64,
    pub d_gamma: f64,
    pub d_alpha_gamma: f64,
}

impl TestFunctionSpec {
    pub fn new(l: f64, horizon: f64, gamma: f64, alpha: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon {horizon} must be positive"));
        }
        if !(l >= 2.0 && l.is_finite()) {
            return domain(format!("test-function exponent l = {l} must be >= 2"));
        }
        if !(gamma >= 0.0 && gamma < 1.0 && alpha > 0.0 && alpha <= 2.0) {
            return domain(format!("orders gamma = {gamma}, alpha = {alpha} out of range"));
        }
        Ok(Self {
            l,
            horizon,
            gamma,
            alpha,
        })
    }

    /// Smallest exponent admissible for nonlinearity `p`: `p(α+γ)/(p-1)`.
    pub fn min_exponent(p: f64, alpha: f64, gamma: f64) -> f64 {
        p * (alpha + gamma) / (p - 1.0)
    }

    /// Fail unless `l` is large enough for nonlinearity `p`.
    pub fn require_exponent(&self, p: f64) -> Result<()> {
        if !(p > 1.0) {
            return domain(format!("nonlinearity exponent p = {p} must exceed 1"));
        }
        let min = Self::min_exponent(p, self.alpha, self.gamma);
        if self.l < min {
            return Err(Error::Precondition(format!(
                "l = {} below p(alpha+gamma)/(p-1) = {min}",
                self.l
            )));
        }
        Ok(())
    }

    /// `ₜD_T^ν ψ_T(t) = Γ(l+1)/Γ(l+1-ν) T^{-l} (T-t)^{l-ν}`.
    pub fn right_derivative(&self, nu: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return domain(format!("t = {t} outside [0, {}]", self.horizon));
        }
        let big_t = self.horizon;
        let coef = crate::special::gamma(self.l + 1.0) * rgamma(self.l + 1.0 - nu);
        let rem = big_t - t;
        if rem == 0.0 {
            let e = self.l - nu;
            return Ok(if e > 0.0 {
                0.0
            } else if e == 0.0 {
                coef
            } else {
                f64::INFINITY * coef.signum()
            });
        }
        Ok(coef * (rem / big_t).powf(self.l) * rem.powf(-nu))
    }

    pub fn eval(&self, t: f64) -> Result<TestFnValues> {
        Ok(TestFnValues {
            psi: self.right_derivative(0.0, t)?,
            d_gamma: self.right_derivative(self.gamma, t)?,
            d_alpha_gamma: self.right_derivative(self.alpha + self.gamma, t)?,
        })
    }

    /// `∫₀ᵀ ₜD_T^{α+γ}ψ_T dt` and `∫₀ᵀ t ₜD_T^{α+γ}ψ_T dt` in closed form.
    pub fn moment_integrals(&self) -> (f64, f64) {
        let s = self.alpha + self.gamma;
        let (l, t) = (self.l, self.horizon);
        let g0 = gamma_ratio(l + 1.0, l + 2.0 - s) * t.powf(1.0 - s);
        let g1 = gamma_ratio(l + 1.0, l + 3.0 - s) * t.powf(2.0 - s);
        (g0, g1)
    }
}

/// Analytic `(ψ_T, ₜD_T^γ ψ_T, ₜD_T^{α+γ} ψ_T)` at `t`.
pub fn test_fn_derivatives(spec: &TestFunctionSpec, t: f64) -> Result<TestFnValues> {
    spec.eval(t)
}
