//! Two-parameter Mittag-Leffler function `E_{α,β}(z) = Σ z^k / Γ(αk + β)`.
//!
//! Evaluation switches between three representations:
//!
//! * the power series, summed with compensation, for `|z| ≤ SERIES_RADIUS`
//!   and along the positive real axis;
//! * the large-argument expansion, i.e. the residues of
//!   `e^s s^{α-β} / (s^α - z)` at the poles `s^α = z` plus the algebraic
//!   tail `-Σ_{k≥1} z^{-k} / Γ(β - αk)`, optimally truncated;
//! * a Hankel-type contour integral of the Laplace inversion of
//!   `s^{α-β} / (s^α - z)` for the intermediate zone where neither of the
//!   above reaches the requested tolerance.
//!
//! For `α = 1` in the left half-plane Kummer's transformation of
//! `₁F₁(1; β; z)` is also a candidate; on the negative real axis it has no
//! cancellation at all.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cheb::ChebTable;
use crate::error::{domain, Error, Result};
use crate::quad::{self, Tolerance};
use crate::special::{is_gamma_pole, ln_gamma, rgamma};

/// Production switch between the series and the large-argument branches.
pub const SERIES_RADIUS: f64 = 10.0;
/// Inner radius of the annulus on which series and large-argument branches are cross-checked.
pub const OVERLAP_INNER: f64 = 8.0;
/// Outer radius of that annulus.
pub const OVERLAP_OUTER: f64 = 15.0;
/// Default relative tolerance used by [`MittagLeffler::eval_real`].
pub const DEFAULT_TOL: f64 = 1e-13;

const MAX_SERIES_TERMS: usize = 4000;
const MAX_TAIL_TERMS: usize = 80;

/// Which representation produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Series,
    Asymptotic,
    AsymptoticAlpha2,
    Integral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlValue {
    pub value: Complex64,
    pub branch: Branch,
    /// Nonnegative estimate of the absolute error of `value`.
    pub est_error: f64,
}

impl MlValue {
    pub fn re(&self) -> f64 {
        self.value.re
    }
}

/// `E_{α,β}` for a fixed pair of parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MittagLeffler {
    alpha: f64,
    beta: f64,
}

impl MittagLeffler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return domain(format!("Mittag-Leffler order alpha = {alpha} outside (0, 2]"));
        }
        if !beta.is_finite() {
            return domain(format!("Mittag-Leffler parameter beta = {beta} is not finite"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Real-argument evaluation at the default tolerance.
    pub fn eval_real(&self, x: f64) -> Result<f64> {
        Ok(self.eval(Complex64::new(x, 0.0), DEFAULT_TOL)?.re())
    }

    /// Evaluate `E_{α,β}(z)`, aiming for a relative error of `tol`.
    ///
    /// The returned `est_error` is the estimate of whichever branch was
    /// accepted; when no branch reaches `tol` the most accurate candidate
    /// is returned.
    pub fn eval(&self, z: Complex64, tol: f64) -> Result<MlValue> {
        if !(tol > 0.0) {
            return domain(format!("tolerance {tol} must be positive"));
        }
        if !(z.re.is_finite() && z.im.is_finite()) {
            return domain("non-finite argument");
        }
        if z.norm() == 0.0 {
            return Ok(MlValue {
                value: Complex64::new(rgamma(self.beta), 0.0),
                branch: Branch::Series,
                est_error: 0.0,
            });
        }
        let real = z.im == 0.0;
        if real && z.re > 0.0 {
            return self.series_positive(z.re);
        }
        if real && self.alpha == 1.0 && self.beta > 0.0 {
            return self.kummer_negative(-z.re);
        }
        let accept = |v: &MlValue| v.est_error <= tol * v.value.norm().max(f64::MIN_POSITIVE);

        let mut best: Option<MlValue> = None;
        let keep = |cand: MlValue, best: &mut Option<MlValue>| {
            let better = match best {
                None => true,
                Some(b) => cand.est_error < b.est_error,
            };
            if better {
                *best = Some(cand);
            }
        };

        if self.alpha == 1.0 && self.beta > 0.0 && z.re < 0.0 {
            let k = self.kummer_complex(z);
            if accept(&k) {
                return Ok(k);
            }
            keep(k, &mut best);
        }

        if z.norm() <= SERIES_RADIUS {
            let s = self.series(z);
            if accept(&s) {
                return Ok(s);
            }
            keep(s, &mut best);
        } else if let Some(a) = self.large_argument(z, None) {
            if accept(&a) {
                return Ok(a);
            }
            keep(a, &mut best);
        }
        if let Some(c) = self.parabolic(z) {
            if accept(&c) {
                return Ok(c);
            }
            keep(c, &mut best);
        }
        let tol_int = tol.max(1e-15);
        let c = self.contour(z, tol_int)?;
        keep(c, &mut best);
        let out = best.expect("at least one candidate");
        if !(out.value.re.is_finite() && out.value.im.is_finite()) {
            return Err(Error::Overflow(format!(
                "E_{{{},{}}}({z}) is not representable",
                self.alpha, self.beta
            )));
        }
        Ok(out)
    }

    /// The `n`-term large-argument expansion.
    ///
    /// For `α < 2` this is `-Σ_{k=1}^{n} z^{-k}/Γ(β-αk)` plus the residue
    /// contributions of the poles `s^α = z` (exponentially small on the
    /// negative real axis); for `α = 2` and `z = -x` the residue pair is the
    /// oscillatory term `x^{(1-β)/2} cos(√x + π(1-β)/2)`. `est_error` is the
    /// magnitude of the `(n+1)`-th algebraic term.
    pub fn asymptotic_tail(&self, z: Complex64, n: usize) -> Result<MlValue> {
        if z.norm() == 0.0 {
            return domain("asymptotic expansion requested at z = 0");
        }
        if n == 0 {
            return domain("asymptotic expansion needs at least one term");
        }
        if self.alpha == 2.0 {
            if !(z.im == 0.0 && z.re < 0.0) {
                return domain("alpha = 2 expansion is only valid on the negative real axis");
            }
        } else {
            let mu = 0.5 * (PI * self.alpha / 2.0 + PI.min(PI * self.alpha));
            if z.arg().abs() < mu {
                return domain(format!(
                    "|arg z| = {} below the sector bound {mu}",
                    z.arg().abs()
                ));
            }
        }
        Ok(self.large_argument(z, Some(n)).expect("explicit term count"))
    }

    fn branch_for_tail(&self) -> Branch {
        if self.alpha == 2.0 {
            Branch::AsymptoticAlpha2
        } else {
            Branch::Asymptotic
        }
    }

    /// Poles `s` of `1/(s^α - z)` on the principal sheet `|arg s| < π`.
    fn poles(&self, z: Complex64) -> Vec<Complex64> {
        let rho = z.norm().powf(1.0 / self.alpha);
        let theta = z.arg();
        (-2..=2)
            .filter_map(|k: i32| {
                let ang = (theta + 2.0 * PI * k as f64) / self.alpha;
                (ang.abs() < PI).then(|| Complex64::from_polar(rho, ang))
            })
            .collect()
    }

    fn residue(&self, s: Complex64) -> Complex64 {
        s.exp() * s.powf(1.0 - self.beta) / self.alpha
    }

    /// Residues plus the algebraic tail; `terms = None` truncates optimally.
    fn large_argument(&self, z: Complex64, terms: Option<usize>) -> Option<MlValue> {
        let residues: Complex64 = self.poles(z).into_iter().map(|s| self.residue(s)).sum();
        let zinv = z.inv();
        let lz = z.norm().ln();
        let mut pow = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        let term = |k: usize, pow: Complex64| -pow * rgamma(self.beta - self.alpha * k as f64);
        let next_mag;
        match terms {
            Some(n) => {
                for k in 1..=n {
                    pow *= zinv;
                    sum += term(k, pow);
                }
                next_mag = term(n + 1, pow * zinv).norm();
            }
            None => {
                // truncate on a smooth envelope of |z^{-k}/Γ(β-αk)|: the
                // terms themselves dip near the poles of Γ
                let mut prev = f64::INFINITY;
                let mut k = 1usize;
                loop {
                    let env = (rgamma_envelope(self.beta - self.alpha * k as f64) - k as f64 * lz).exp();
                    let converged = env <= 1e-3 * f64::EPSILON * (sum + residues).norm();
                    if env >= prev || converged || k > MAX_TAIL_TERMS {
                        next_mag = env;
                        break;
                    }
                    pow *= zinv;
                    sum += term(k, pow);
                    prev = env;
                    k += 1;
                }
            }
        }
        let value = sum + residues;
        let rounding = 4.0 * f64::EPSILON * (sum.norm() + residues.norm());
        Some(MlValue {
            value,
            branch: self.branch_for_tail(),
            est_error: next_mag + rounding,
        })
    }

    /// Power series with compensated summation, regardless of `|z|`.
    pub fn series(&self, z: Complex64) -> MlValue {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        let mut abs_sum = 0.0;
        let mut pow = Complex64::new(1.0, 0.0);
        let zmag = z.norm();
        // index past which the terms decrease monotonically
        let k_peak = (zmag.powf(1.0 / self.alpha) / self.alpha).ceil() as usize + 2;
        let mut small_run = 0;
        let mut last_mag = 0.0;
        for k in 0..MAX_SERIES_TERMS {
            let term = pow * rgamma(self.alpha * k as f64 + self.beta);
            let mag = term.norm();
            // Kahan step
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            abs_sum += mag;
            last_mag = mag;
            if k > k_peak && mag <= 1e-17 * sum.norm().max(f64::MIN_POSITIVE) {
                small_run += 1;
                if small_run >= 2 {
                    break;
                }
            } else {
                small_run = 0;
            }
            pow *= z;
            if !(pow.re.is_finite() && pow.im.is_finite()) {
                break;
            }
        }
        MlValue {
            value: sum,
            branch: Branch::Series,
            est_error: 2.0 * last_mag + 4.0 * f64::EPSILON * abs_sum,
        }
    }

    /// Series on the positive real axis, summed in log space.
    fn series_positive(&self, x: f64) -> Result<MlValue> {
        let lx = x.ln();
        let mut logs: Vec<(f64, f64)> = Vec::new();
        let mut m = f64::NEG_INFINITY;
        let k_peak = (x.powf(1.0 / self.alpha) / self.alpha).ceil() as usize + 2;
        let max_terms = (k_peak * 4).max(200).min(2_000_000);
        for k in 0..max_terms {
            let arg = self.alpha * k as f64 + self.beta;
            if is_gamma_pole(arg) {
                continue;
            }
            let sign = if arg > 0.0 { 1.0 } else { rgamma(arg).signum() };
            let l = k as f64 * lx - ln_gamma(arg);
            logs.push((l, sign));
            m = m.max(l);
            if k > k_peak && l < m - 45.0 {
                break;
            }
        }
        let scaled: f64 = logs.iter().map(|(l, s)| s * (l - m).exp()).sum();
        let abs_scaled: f64 = logs.iter().map(|(l, _)| (l - m).exp()).sum();
        let ln_value = m + scaled.abs().ln();
        if ln_value > f64::MAX.ln() {
            return Err(Error::Overflow(format!(
                "E_{{{},{}}}({x}) exceeds the double-precision range",
                self.alpha, self.beta
            )));
        }
        let value = scaled * m.exp();
        Ok(MlValue {
            value: Complex64::new(value, 0.0),
            branch: Branch::Series,
            est_error: 8.0 * f64::EPSILON * abs_scaled * m.exp(),
        })
    }

    /// `α = 1`, `z = -x`: `E_{1,β}(-x) = e^{-x} ₁F₁(β-1; β; x) / Γ(β)`.
    fn kummer_negative(&self, x: f64) -> Result<MlValue> {
        let b = self.beta;
        if b == 1.0 {
            return Ok(MlValue {
                value: Complex64::new((-x).exp(), 0.0),
                branch: Branch::Series,
                est_error: f64::EPSILON * (-x).exp(),
            });
        }
        // terms (β-1)/(β-1+k) x^k / k!
        let lx = x.ln();
        let mut logs: Vec<(f64, f64)> = Vec::new();
        let mut m = f64::NEG_INFINITY;
        let k_peak = x.ceil() as usize + 2;
        for k in 0..(4 * k_peak + 200) {
            let kf = k as f64;
            let ratio = (b - 1.0) / (b - 1.0 + kf);
            if k == 0 {
                logs.push((0.0, 1.0));
                m = m.max(0.0);
                continue;
            }
            let l = ratio.abs().ln() + kf * lx - ln_gamma(kf + 1.0);
            logs.push((l, ratio.signum()));
            m = m.max(l);
            if k > k_peak && l < m - 45.0 {
                break;
            }
        }
        let scaled: f64 = logs.iter().map(|(l, s)| s * (l - m).exp()).sum();
        let abs_scaled: f64 = logs.iter().map(|(l, _)| (l - m).exp()).sum();
        let factor = (m - x).exp() * rgamma(b);
        Ok(MlValue {
            value: Complex64::new(scaled * factor, 0.0),
            branch: Branch::Series,
            est_error: 8.0 * f64::EPSILON * abs_scaled * factor.abs(),
        })
    }

    /// Complex form of the Kummer transformation, `e^z ₁F₁(β-1; β; -z) / Γ(β)`.
    /// Well conditioned when `z` is close to the negative real axis.
    fn kummer_complex(&self, z: Complex64) -> MlValue {
        let b = self.beta;
        if b == 1.0 {
            return MlValue {
                value: z.exp(),
                branch: Branch::Series,
                est_error: 2.0 * f64::EPSILON * z.exp().norm(),
            };
        }
        let w = -z;
        let mut power = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(1.0, 0.0);
        let mut abs_sum = 1.0;
        let peak = w.norm().ceil() as usize + 2;
        for k in 1..(4 * peak + 200) {
            let kf = k as f64;
            power = power * w / kf;
            let term = power * ((b - 1.0) / (b - 1.0 + kf));
            sum += term;
            abs_sum += term.norm();
            if k > peak && term.norm() <= f64::EPSILON * 1e-3 * sum.norm() {
                break;
            }
        }
        let factor = z.exp() * rgamma(b);
        MlValue {
            value: sum * factor,
            branch: Branch::Series,
            est_error: 8.0 * f64::EPSILON * abs_sum * factor.norm(),
        }
    }

    /// Trapezoid rule on a parabolic contour `s(u) = μ(1 + iu)²` whose
    /// parameters are chosen, region by region between the poles, so that
    /// discretization and round-off errors stay near `10⁻¹⁵`; the region
    /// needing the fewest nodes wins and the poles to its right contribute
    /// residues.
    fn parabolic(&self, z: Complex64) -> Option<MlValue> {
        let (a, b) = (self.alpha, self.beta);
        let log_mach = f64::EPSILON.ln();
        let theta = z.arg();
        let kmin = (-a / 2.0 - theta / (2.0 * PI)).ceil() as i64;
        let kmax = (a / 2.0 - theta / (2.0 * PI)).floor() as i64;
        let rho = z.norm().powf(1.0 / a);
        let mut poles: Vec<(f64, Complex64)> = (kmin..=kmax)
            .map(|k| {
                let s = Complex64::from_polar(rho, (theta + 2.0 * PI * k as f64) / a);
                (0.5 * (s.re + s.norm()), s)
            })
            .filter(|(phi, _)| *phi > 1e-15)
            .collect();
        poles.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut s_star = vec![Complex64::new(0.0, 0.0)];
        let mut phi = vec![0.0];
        for (ph, s) in &poles {
            s_star.push(*s);
            phi.push(*ph);
        }
        let j1 = s_star.len();
        let mut pj = vec![1.0; j1];
        pj[0] = (-2.0 * (a - b + 1.0)).max(0.0);
        let mut qj = vec![1.0; j1];
        qj[j1 - 1] = f64::INFINITY;
        phi.push(f64::INFINITY);

        let mut log_eps = (1e-15f64).ln();
        let mut best: Option<(usize, f64, f64, usize)> = None;
        for _ in 0..12 {
            best = None;
            for j in 0..j1 {
                if !(phi[j] < log_eps - log_mach && phi[j] < phi[j + 1]) {
                    continue;
                }
                let par = if j + 1 < j1 {
                    opc_bounded(phi[j], phi[j + 1], pj[j], qj[j], log_eps)
                } else {
                    opc_unbounded(phi[j], pj[j], log_eps)
                };
                if let Some((mu, h, n)) = par {
                    if best.is_none_or(|bst| n < bst.3) {
                        best = Some((j, mu, h, n));
                    }
                }
            }
            match best {
                Some(bst) if bst.3 <= 200 => break,
                _ => log_eps += 10f64.ln(),
            }
        }
        let (j, mu, h, n) = best?;
        if n > 2000 {
            return None;
        }
        let mut integral = Complex64::new(0.0, 0.0);
        let mut mag = 0.0;
        let i = Complex64::new(0.0, 1.0);
        let n = n as i64;
        for k in -n..=n {
            let u = h * k as f64;
            let s = mu * (i * u + 1.0).powi(2);
            let ds = Complex64::new(-2.0 * mu * u, 2.0 * mu);
            let term = s.exp() * s.powf(a - b) / (s.powf(a) - z) * ds;
            mag += term.norm();
            integral += term;
        }
        integral *= h / (2.0 * PI) / i;
        let residues: Complex64 = s_star[j + 1..].iter().map(|&s| self.residue(s)).sum();
        let mut value = integral + residues;
        if z.im == 0.0 {
            value.im = 0.0;
        }
        let est = log_eps.exp() + 8.0 * f64::EPSILON * (mag * h / (2.0 * PI) + residues.norm());
        Some(MlValue {
            value,
            branch: Branch::Integral,
            est_error: est,
        })
    }

    /// Laplace inversion along a contour made of two rays at angle `±φ`
    /// joined by an arc of radius `ε` around the origin, plus the residues
    /// of the poles enclosed between the contour and the Bromwich line.
    /// This is the large-argument representation the asymptotic
    /// expansion is derived from, and is accurate for any `|z|`.
    pub fn contour(&self, z: Complex64, tol: f64) -> Result<MlValue> {
        let (a, b) = (self.alpha, self.beta);
        let poles = self.poles(z);
        let rho = z.norm().powf(1.0 / a);
        let eps = (0.5 * rho).min(1.0);
        let pole_angles: Vec<f64> = poles.iter().map(|s| s.arg().abs()).collect();
        let phi = (0..=40)
            .map(|i| PI * (0.55 + 0.01 * i as f64))
            .max_by(|x, y| {
                let dx = pole_angles.iter().map(|p| (p - x).abs()).fold(f64::INFINITY, f64::min);
                let dy = pole_angles.iter().map(|p| (p - y).abs()).fold(f64::INFINITY, f64::min);
                dx.total_cmp(&dy)
            })
            .expect("candidate angles");

        let f = |s: Complex64| s.exp() * s.powf(a - b) / (s.powf(a) - z);

        let residues: Complex64 = poles
            .iter()
            .zip(&pole_angles)
            .filter(|(_, &ang)| ang < phi)
            .map(|(s, _)| self.residue(*s))
            .sum();

        // scale for the absolute tolerance
        let probe = f(Complex64::from_polar(eps, 0.0)).norm() * eps;
        let scale = residues.norm().max(probe).max(f64::MIN_POSITIVE);
        let qtol = Tolerance {
            abs: 1e-17 * scale,
            rel: 0.1 * tol,
            max_intervals: 2000,
        };

        // ray length: extend until the integrand is negligible
        let decay = -phi.cos();
        let mut r_max = eps + 40.0 / decay;
        let upper = Complex64::from_polar(1.0, phi);
        while f(upper * r_max).norm() * r_max > 1e-18 * scale && r_max < 1e5 {
            r_max += 20.0 / decay;
        }

        let upper_ray = quad::integrate(|r: f64| f(upper * r) * upper, eps, r_max, qtol);
        let lower = upper.conj();
        let lower_ray = if z.im == 0.0 {
            None
        } else {
            Some(quad::integrate(|r: f64| f(lower * r) * lower, eps, r_max, qtol))
        };
        let arc = quad::integrate(
            |th: f64| {
                let s = Complex64::from_polar(eps, th);
                f(s) * s
            },
            -phi,
            phi,
            qtol,
        );
        // (1/2πi)[∫_upper - ∫_lower] + (1/2π)∫_arc
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        let rays = match &lower_ray {
            Some(l) => (upper_ray.value - l.value) / two_pi_i,
            None => Complex64::new(upper_ray.value.im / PI, 0.0),
        };
        let mut value = residues + rays + arc.value / (2.0 * PI);
        if z.im == 0.0 {
            value.im = 0.0;
        }
        let err = (upper_ray.error + lower_ray.map_or(upper_ray.error, |l| l.error)) / (2.0 * PI)
            + arc.error / (2.0 * PI)
            + 8.0 * f64::EPSILON * (residues.norm() + rays.norm());
        Ok(MlValue {
            value,
            branch: Branch::Integral,
            est_error: err,
        })
    }
}

/// Contour parameters `(μ, h, N)` for a region bounded by two singularities.
fn opc_bounded(phi_j: f64, phi_j1: f64, pj: f64, qj: f64, mut log_eps: f64) -> Option<(f64, f64, usize)> {
    let log_mach = f64::EPSILON.ln();
    let fac = 1.01;
    let f_max = (log_eps - log_mach).exp();
    let sq_j = phi_j.sqrt();
    let threshold = 2.0 * ((log_eps - log_mach)).sqrt();
    let sq_j1 = phi_j1.sqrt().min(threshold - sq_j);
    let (sqb_j, sqb_j1, f_bar);
    if pj < 1e-14 && qj < 1e-14 {
        sqb_j = sq_j;
        sqb_j1 = sq_j1;
        f_bar = 1.0;
    } else if pj < 1e-14 {
        let f_min = if sq_j > 0.0 {
            fac * (sq_j / (sq_j1 - sq_j)).powf(qj)
        } else {
            fac
        };
        if !(f_min < f_max) {
            return None;
        }
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fq = f_bar.powf(-1.0 / qj);
        sqb_j = sq_j;
        sqb_j1 = (2.0 * sq_j1 - fq * sq_j) / (2.0 + fq);
    } else if qj < 1e-14 {
        let f_min = fac * (sq_j1 / (sq_j1 - sq_j)).powf(pj);
        if !(f_min < f_max) {
            return None;
        }
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        sqb_j = (2.0 * sq_j + fp * sq_j1) / (2.0 - fp);
        sqb_j1 = sq_j1;
    } else {
        let f_min = fac * (sq_j + sq_j1) / (sq_j1 - sq_j).powf(pj.max(qj));
        if !(f_min < f_max) {
            return None;
        }
        let f_min = f_min.max(1.5);
        f_bar = f_min + f_min / f_max * (f_max - f_min);
        let fp = f_bar.powf(-1.0 / pj);
        let fq = f_bar.powf(-1.0 / qj);
        let w = -phi_j1 / log_eps;
        let den = 2.0 + w - (1.0 + w) * fp + fq;
        sqb_j = ((2.0 + w + fq) * sq_j + fp * sq_j1) / den;
        sqb_j1 = (-(1.0 + w) * fq * sq_j + (2.0 + w - (1.0 + w) * fp) * sq_j1) / den;
    }
    log_eps -= f_bar.ln();
    let w = -sqb_j1 * sqb_j1 / log_eps;
    let mu = (((1.0 + w) * sqb_j + sqb_j1) / (2.0 + w)).powi(2);
    let h = -2.0 * PI / log_eps * (sqb_j1 - sqb_j) / ((1.0 + w) * sqb_j + sqb_j1);
    let n = ((1.0 - log_eps / mu).sqrt() / h).ceil();
    (n.is_finite() && n > 0.0 && h > 0.0 && mu > 0.0).then_some((mu, h, n as usize))
}

/// Contour parameters `(μ, h, N)` for the region right of the last singularity.
fn opc_unbounded(phi_j: f64, pj: f64, log_eps: f64) -> Option<(f64, f64, usize)> {
    let sq_phi = phi_j.sqrt();
    let mut phib = if phi_j > 0.0 { 1.01 * phi_j } else { 0.01 };
    let mut sqb = phib.sqrt();
    let (f_min, f_max, f_tar) = (1.0, 10.0, 5.0_f64);
    let (mut n, mut a_par, mut sq_mu);
    let mut guard = 0;
    loop {
        let log_eps_phi = log_eps / phib;
        n = (phib / PI * (1.0 - 1.5 * log_eps_phi + (1.0 - 2.0 * log_eps_phi).sqrt())).ceil();
        a_par = PI * n / phib;
        sq_mu = sqb * (4.0 - a_par).abs() / (7.0 - (1.0 + 12.0 * a_par).sqrt()).abs();
        let fbar = ((sqb - sq_phi) / sq_mu).powf(-pj);
        guard += 1;
        if pj < 1e-14 || (f_min < fbar && fbar < f_max) || guard > 100 {
            break;
        }
        sqb = f_tar.powf(-1.0 / pj) * sq_mu + sq_phi;
        phib = sqb * sqb;
    }
    let mut mu = sq_mu * sq_mu;
    let mut h = (-3.0 * a_par - 2.0 + 2.0 * (1.0 + 12.0 * a_par).sqrt()) / (4.0 - a_par) / n;
    let log_mach = f64::EPSILON.ln();
    let threshold = log_eps - log_mach;
    if mu > threshold {
        let q = if pj.abs() < 1e-14 {
            0.0
        } else {
            f_tar.powf(-1.0 / pj) * mu.sqrt()
        };
        let phib = (q + sq_phi).powi(2);
        if phib < threshold {
            let w = (log_mach / (log_mach - log_eps)).sqrt();
            let u = (-phib / log_mach).sqrt();
            mu = threshold;
            n = (w * log_eps / 2.0 / PI / (u * w - 1.0)).ceil();
            h = (log_mach / (log_mach - log_eps)).sqrt() / n;
        } else {
            return None;
        }
    }
    (n.is_finite() && n > 0.0 && h > 0.0 && mu > 0.0).then_some((mu, h, n as usize))
}

/// `ln` of an upper bound for `|1/Γ(x)|` that is smooth through the poles.
fn rgamma_envelope(x: f64) -> f64 {
    if x >= 1.0 {
        -ln_gamma(x)
    } else {
        // |1/Γ(x)| = |sin πx| Γ(1-x)/π ≤ Γ(1-x)/π
        ln_gamma(1.0 - x) - PI.ln()
    }
}

/// `v ↦ E_{α,β}(-v)` for `v ≥ 0`, the form in which the function enters
/// relaxation kernels. Moderate arguments are served from a piecewise
/// Chebyshev table shared by every evaluator with the same `(α, β)`; beyond
/// it the large-argument expansion is both cheap and accurate.
#[derive(Debug, Clone)]
pub struct NegativeAxis {
    ml: MittagLeffler,
    table: Arc<ChebTable>,
}

type TableCache = Mutex<HashMap<(u64, u64), Arc<ChebTable>>>;

fn table_cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl NegativeAxis {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let ml = MittagLeffler::new(alpha, beta)?;
        let key = (alpha.to_bits(), beta.to_bits());
        if let Some(t) = table_cache().lock().unwrap().get(&key) {
            return Ok(Self { ml, table: Arc::clone(t) });
        }
        let table = Arc::new(ChebTable::build(|v| ml.eval_real(-v), 35f64.powf(alpha))?);
        table_cache().lock().unwrap().insert(key, Arc::clone(&table));
        Ok(Self { ml, table })
    }

    pub fn eval(&self, v: f64) -> Result<f64> {
        match self.table.eval(v) {
            Some(x) => Ok(x),
            None => self.ml.eval_real(-v),
        }
    }
}

/// Convenience: `E_{α,β}(x)` for real `x` at the default tolerance.
pub fn ml(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    MittagLeffler::new(alpha, beta)?.eval_real(x)
}

/// Result of [`positivity_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityScan {
    pub all_positive: bool,
    pub first_violation: Option<f64>,
    pub min_value: f64,
}

/// Check `E_{α,ρ}(-x) > 0` on every grid point.
pub fn positivity_scan(alpha: f64, rho: f64, grid: &[f64]) -> Result<PositivityScan> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return domain(format!("positivity scan needs 1 < alpha <= 2, got {alpha}"));
    }
    let ml = MittagLeffler::new(alpha, rho)?;
    let mut first_violation = None;
    let mut min_value = f64::INFINITY;
    for &x in grid {
        if !(x >= 0.0) {
            return domain(format!("grid point {x} is negative"));
        }
        let v = ml.eval_real(-x)?;
        min_value = min_value.min(v);
        if !(v > 0.0) && first_violation.is_none() {
            first_violation = Some(x);
        }
    }
    Ok(PositivityScan {
        all_positive: first_violation.is_none(),
        first_violation,
        min_value,
    })
}

/// `n` points logarithmically spaced on `[lo, hi]`, preceded by `0`.
pub fn log_grid_with_zero(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n + 1);
    g.push(0.0);
    if n == 1 {
        g.push(lo);
        return g;
    }
    let (a, b) = (lo.ln(), hi.ln());
    g.extend((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()));
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1.0)
    }

    #[test]
    fn value_at_zero_is_reciprocal_gamma() {
        for &(a, b) in &[(1.5, 1.0), (1.2, 2.7), (2.0, 0.5), (0.6, 3.0)] {
            let v = ml(a, b, 0.0).unwrap();
            assert!((v - rgamma(b)).abs() <= 1e-12 * rgamma(b).abs());
        }
    }

    #[test]
    fn exponential_and_trig_closed_forms() {
        assert!(close(ml(1.0, 1.0, 1.0).unwrap(), std::f64::consts::E, 1e-14));
        assert!(ml(2.0, 1.0, -(PI / 2.0).powi(2)).unwrap().abs() < 1e-14);
        let t: f64 = 3.3;
        assert!(close(ml(2.0, 2.0, -t * t).unwrap(), t.sin() / t, 1e-12));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(MittagLeffler::new(2.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(MittagLeffler::new(0.0, 1.0), Err(Error::Domain(_))));
        let m = MittagLeffler::new(1.5, 1.0).unwrap();
        assert!(matches!(
            m.eval(Complex64::new(1.0, 0.0), 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn complex_kummer_matches_series_in_left_half_plane() {
        for &b in &[0.6, 1.7, 2.5] {
            let m = MittagLeffler::new(1.0, b).unwrap();
            for j in 7..=17 {
                let z = Complex64::from_polar(5.0, PI * j as f64 / 12.0);
                let k = m.kummer_complex(z);
                let s = m.series(z);
                assert!((k.value - s.value).norm() <= 1e-11 * s.value.norm(), "{b} {z}");
            }
        }
        let m = MittagLeffler::new(1.0, 1.0).unwrap();
        let z = Complex64::new(-50.0, 1e-3);
        assert!((m.eval(z, 1e-14).unwrap().value - z.exp()).norm() <= 1e-14 * z.exp().norm());
    }

    #[test]
    fn positive_axis_overflow_is_reported() {
        let m = MittagLeffler::new(1.0, 1.0).unwrap();
        assert!(matches!(
            m.eval(Complex64::new(800.0, 0.0), 1e-12),
            Err(Error::Overflow(_))
        ));
        let v = m.eval(Complex64::new(700.0, 0.0), 1e-12).unwrap();
        assert!(close(v.re(), 700f64.exp(), 1e-12));
    }

    #[test]
    fn tail_rejects_zero_and_off_axis_alpha2() {
        let m = MittagLeffler::new(2.0, 1.0).unwrap();
        assert!(m.asymptotic_tail(Complex64::new(0.0, 0.0), 3).is_err());
        assert!(m.asymptotic_tail(Complex64::new(-10.0, 1.0), 3).is_err());
    }

    #[test]
    fn tail_first_term_vanishes_at_gamma_pole() {
        // β - α = 0 is a pole of Γ: the first algebraic term is exactly zero
        let m = MittagLeffler::new(1.5, 1.5).unwrap();
        let z = Complex64::new(-1e4, 0.0);
        let one = m.asymptotic_tail(z, 1).unwrap();
        let two = m.asymptotic_tail(z, 2).unwrap();
        let second = -rgamma(1.5 - 3.0) / 1e8;
        assert!(one.re().abs() < 1e-20);
        assert!((one.est_error - second.abs()).abs() < 1e-22);
        assert!((two.re() - second).abs() < 1e-3 * second.abs());
    }

    #[test]
    fn alpha2_tail_reproduces_cosine() {
        let t = 10.0 * PI;
        let m = MittagLeffler::new(2.0, 1.0).unwrap();
        let v = m.asymptotic_tail(Complex64::new(-t * t, 0.0), 4).unwrap();
        assert_eq!(v.branch, Branch::AsymptoticAlpha2);
        assert!((v.re() - t.cos()).abs() < 1e-12);
    }

    #[test]
    fn complex_argument_matches_series() {
        let m = MittagLeffler::new(1.7, 1.3).unwrap();
        let z = Complex64::new(-3.0, 2.0);
        let s = m.series(z);
        let c = m.contour(z, 1e-13).unwrap();
        assert!((s.value - c.value).norm() < 1e-11 * s.value.norm());
    }

    #[test]
    fn scan_detects_sign_change() {
        let grid = log_grid_with_zero(1e-2, 1e6, 200);
        let ok = positivity_scan(1.5, 2.25, &grid).unwrap();
        assert!(ok.all_positive);
        let bad = positivity_scan(1.5, 1.5, &grid).unwrap();
        assert!(!bad.all_positive && bad.first_violation.is_some());
        assert!(positivity_scan(0.9, 2.0, &grid).is_err());
    }

    #[test]
    fn large_negative_arguments_match_reference() {
        // direct summation at 250 digits
        let v = ml(1.5, 1.0, -100.0).unwrap();
        assert!((v + 0.002_789_846_773_337_239_9).abs() < 1e-12 * 0.0028);
        let v = ml(1.9, 2.1, -1000.0).unwrap();
        assert!((v - 9.181_845_553_037_069e-5).abs() < 1e-11 * 9.2e-5);
    }

    #[test]
    fn three_term_tail_with_residues() {
        let m = MittagLeffler::new(1.9, 2.1).unwrap();
        let v = m.asymptotic_tail(Complex64::new(-1000.0, 0.0), 3).unwrap();
        assert!((v.re() - 9.181_845_553_037_069e-5).abs() < 1e-6 * 9.2e-5);
    }

    #[test]
    fn series_and_large_argument_branches_agree_on_overlap() {
        for &(a, b) in &[(1.2, 1.0), (1.5, 1.5), (1.8, 2.3), (1.95, 0.7)] {
            let m = MittagLeffler::new(a, b).unwrap();
            for i in 0..=14 {
                let r = OVERLAP_INNER + (OVERLAP_OUTER - OVERLAP_INNER) * i as f64 / 14.0;
                let z = Complex64::new(-r, 0.0);
                let s = m.series(z).value;
                let c = m.contour(z, 1e-13).unwrap().value;
                let e = m.eval(z, 1e-13).unwrap().value;
                assert!((s - c).norm() <= 1e-6 * c.norm(), "{a} {b} {r}");
                assert!((e - c).norm() <= 1e-6 * c.norm(), "{a} {b} {r}");
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn shift_recurrence(a in 0.3f64..2.0, b in 0.2f64..4.0, x in -60.0f64..8.0) {
            // E_{α,β}(z) = 1/Γ(β) + z E_{α,α+β}(z)
            let lhs = ml(a, b, x).unwrap();
            let rhs = rgamma(b) + x * ml(a, a + b, x).unwrap();
            let scale = lhs.abs().max(rgamma(b).abs()).max((x * ml(a, a + b, x).unwrap()).abs());
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-9 * scale.max(1e-12), "{} vs {}", lhs, rhs);
        }

        #[test]
        fn complete_monotonicity_below_one(a in 0.2f64..1.0, x in 0.0f64..200.0) {
            // E_α(-x) is completely monotone for α ≤ 1: positive and decreasing
            let v = ml(a, 1.0, -x).unwrap();
            let w = ml(a, 1.0, -x - 0.5).unwrap();
            proptest::prop_assert!(v > 0.0 && w < v);
        }
    }
}
