//! Piecewise Chebyshev interpolation of a smooth function on `[0, V]`.
//!
//! Panels are `[0, 1]` followed by geometrically growing intervals
//! `[r^{k-1}, r^k]`, which suits functions whose length scale grows with
//! the argument (such as `E_{α,β}(-v)`).

use crate::error::Result;

const DEG: usize = 24;
const N: usize = DEG + 1;
const RATIO: f64 = 1.25;

#[derive(Debug, Clone)]
pub struct ChebTable {
    top: f64,
    coefs: Vec<[f64; N]>,
}

fn panel_bounds(k: usize) -> (f64, f64) {
    if k == 0 {
        (0.0, 1.0)
    } else {
        (RATIO.powi(k as i32 - 1), RATIO.powi(k as i32))
    }
}

impl ChebTable {
    /// Tabulate `f` on `[0, v_max]` (rounded up to a panel boundary).
    pub fn build(f: impl Fn(f64) -> Result<f64>, v_max: f64) -> Result<Self> {
        let mut coefs = Vec::new();
        let mut k = 0;
        loop {
            let (lo, hi) = panel_bounds(k);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let mut vals = [0.0; N];
            for (j, v) in vals.iter_mut().enumerate() {
                let x = (std::f64::consts::PI * (j as f64 + 0.5) / N as f64).cos();
                *v = f(mid + half * x)?;
            }
            let mut c = [0.0; N];
            for (i, ci) in c.iter_mut().enumerate() {
                let s: f64 = vals
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * (std::f64::consts::PI * i as f64 * (j as f64 + 0.5) / N as f64).cos()
                    })
                    .sum();
                *ci = 2.0 * s / N as f64;
            }
            c[0] *= 0.5;
            coefs.push(c);
            if hi >= v_max {
                return Ok(Self { top: hi, coefs });
            }
            k += 1;
        }
    }

    /// Upper end of the tabulated range.
    pub fn top(&self) -> f64 {
        self.top
    }

    /// Interpolated value, or `None` outside `[0, top]`.
    pub fn eval(&self, v: f64) -> Option<f64> {
        if !(v >= 0.0 && v <= self.top) {
            return None;
        }
        let mut k = if v <= 1.0 {
            0
        } else {
            (v.ln() / RATIO.ln()).floor() as usize + 1
        };
        k = k.min(self.coefs.len() - 1);
        // guard against rounding in the logarithm
        while k > 0 && v < panel_bounds(k).0 {
            k -= 1;
        }
        while k + 1 < self.coefs.len() && v > panel_bounds(k).1 {
            k += 1;
        }
        let (lo, hi) = panel_bounds(k);
        let x = (2.0 * v - lo - hi) / (hi - lo);
        let c = &self.coefs[k];
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ci in c[1..].iter().rev() {
            let b0 = 2.0 * x * b1 - b2 + ci;
            b2 = b1;
            b1 = b0;
        }
        Some(x * b1 - b2 + c[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_smooth_function() {
        let f = |v: f64| Ok((-v).exp() * (0.3 * v).cos() + 1.0 / (1.0 + v));
        let t = ChebTable::build(f, 500.0).unwrap();
        assert!(t.top() >= 500.0);
        for i in 0..=5000 {
            let v = 500.0 * i as f64 / 5000.0;
            let want = f(v).unwrap();
            assert!((t.eval(v).unwrap() - want).abs() < 1e-13, "{v}");
        }
        assert!(t.eval(t.top() * 1.01).is_none());
        assert!(t.eval(-1.0).is_none());
    }
}
