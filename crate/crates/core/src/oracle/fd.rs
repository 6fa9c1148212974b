//! Central finite differences and gradient comparison reports.

use alloc::vec::Vec;

/// Central-difference gradient of `f` at `params`.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], eps: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let up = f(&p);
            p[i] = orig - eps;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Central and one-sided differences per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Numeric {
    pub central: Vec<f64>,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

/// Like [`finite_diff`], also keeping both one-sided slopes.
pub fn finite_diff_sided(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], eps: f64) -> Numeric {
    let mut p = params.to_vec();
    let f0 = f(&p);
    let n = p.len();
    let mut out = Numeric {
        central: Vec::with_capacity(n),
        forward: Vec::with_capacity(n),
        backward: Vec::with_capacity(n),
    };
    for i in 0..n {
        let orig = p[i];
        p[i] = orig + eps;
        let up = f(&p);
        p[i] = orig - eps;
        let down = f(&p);
        p[i] = orig;
        out.central.push((up - down) / (2.0 * eps));
        out.forward.push((up - f0) / eps);
        out.backward.push((f0 - down) / eps);
    }
    out
}

/// Comparison of an analytic gradient against a numeric one.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: alloc::string::String,
    pub checked: usize,
    pub max_rel: f64,
    pub mean_rel: f64,
    pub max_abs: f64,
    /// Indices whose relative error exceeds the tolerance.
    pub failing: Vec<usize>,
    /// Components whose stencil straddled a kink and were checked one-sided.
    pub kinks: usize,
    pub tol: f64,
}

impl GradReport {
    /// Relative error per component: `|a - n| / max(|a|, |n|, floor)`, where
    /// `floor = 1e-3 · max(1, ‖n‖∞)` keeps components at the finite-difference
    /// noise level from dividing by ~0.
    pub fn compare(name: &str, analytic: &[f64], numeric: &[f64], tol: f64) -> GradReport {
        assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
        let floor = floor(numeric);
        let mut r = GradReport::empty(name, analytic.len(), tol);
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            r.push(i, rel(a, n, floor), (a - n).abs());
        }
        r.finish()
    }

    /// As [`compare`](Self::compare), except when the central difference
    /// misses and the one-sided slopes disagree: the ±ε stencil then crosses
    /// a kink (ReLU or max-pool switch), so the analytic value is compared
    /// against the closer one-sided slope instead.
    pub fn compare_sided(name: &str, analytic: &[f64], numeric: &Numeric, tol: f64) -> GradReport {
        assert_eq!(analytic.len(), numeric.central.len(), "gradient lengths differ");
        let floor = floor(&numeric.central);
        let mut r = GradReport::empty(name, analytic.len(), tol);
        for (i, &a) in analytic.iter().enumerate() {
            let (c, fw, bw) = (numeric.central[i], numeric.forward[i], numeric.backward[i]);
            let mut best = (rel(a, c, floor), c);
            if best.0 > tol && rel(fw, bw, floor) > tol {
                let side = if rel(a, fw, floor) <= rel(a, bw, floor) { fw } else { bw };
                if rel(a, side, floor) <= tol {
                    r.kinks += 1;
                    best = (rel(a, side, floor), side);
                }
            }
            r.push(i, best.0, (a - best.1).abs());
        }
        r.finish()
    }

    fn empty(name: &str, checked: usize, tol: f64) -> GradReport {
        GradReport {
            name: name.into(),
            checked,
            max_rel: 0.0,
            mean_rel: 0.0,
            max_abs: 0.0,
            failing: Vec::new(),
            kinks: 0,
            tol,
        }
    }

    fn push(&mut self, i: usize, rel: f64, abs: f64) {
        if !(rel <= self.tol) {
            self.failing.push(i);
        }
        self.max_rel = self.max_rel.max(rel);
        self.max_abs = self.max_abs.max(abs);
        self.mean_rel += rel;
    }

    fn finish(mut self) -> GradReport {
        if self.checked > 0 {
            self.mean_rel /= self.checked as f64;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.failing.is_empty()
    }
}

fn floor(numeric: &[f64]) -> f64 {
    1e-3 * numeric.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

fn rel(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_is_exact() {
        let f = |p: &[f64]| 3.0 * p[0] * p[0] + p[0] * p[1] - 2.0 * p[1] * p[1];
        let g = finite_diff(f, &[0.7, -1.3], 1e-5);
        assert!((g[0] - (6.0 * 0.7 - 1.3)).abs() < 1e-10);
        assert!((g[1] - (0.7 + 4.0 * 1.3)).abs() < 1e-10);
    }

    #[test]
    fn linear_is_exact() {
        let g = finite_diff(|p| 2.0 * p[0] - 5.0 * p[1] + 1.0, &[3.0, 4.0], 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-9 && (g[1] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn report_flags_sign_error() {
        let r = GradReport::compare("t", &[1.0, -2.0], &[1.0, 2.0], 1e-4);
        assert!(!r.passed());
        assert_eq!(r.failing, vec![1]);
        assert!(GradReport::compare("t", &[1.0, 2.0], &[1.0, 2.0 + 1e-9], 1e-4).passed());
    }

    #[test]
    fn kink_checked_one_sided() {
        // relu(x - 1e-7) at x = 0: the stencil straddles the kink, the left slope is the true one
        let f = |p: &[f64]| (p[0] - 1e-7).max(0.0) + 3.0 * p[1];
        let n = finite_diff_sided(f, &[0.0, 0.5], 1e-6);
        assert!((n.central[0] - 0.45).abs() < 1e-6);
        let r = GradReport::compare_sided("relu", &[0.0, 3.0], &n, 1e-4);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.kinks, 1);
        assert!(!GradReport::compare_sided("relu", &[0.5, 3.0], &n, 1e-4).passed());
        assert!(!GradReport::compare("relu", &[0.0, 3.0], &n.central, 1e-4).passed());
    }
}
