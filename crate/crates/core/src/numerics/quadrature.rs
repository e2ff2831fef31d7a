use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Gauss-Legendre nodes per axis used by default for tail-box integrals.
pub const DEFAULT_NODES: usize = 200;

/// Quadrature rule on `(0, 1)` with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss-Legendre rule with `n >= 2` nodes mapped to `(0, 1)`.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("quadrature needs at least 2 nodes, got {n}")));
        }
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            // Roots of P_n on (-1, 1), located by Newton from the Chebyshev-like guess.
            let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes.push(0.5 * (1.0 - x));
            weights.push(0.5 * w);
        }
        // cos(...) decreases in i, so 0.5(1 - x) is already increasing.
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over `(0, 1)`.
    pub fn integrate_unit(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_legendre(DEFAULT_NODES).expect("default rule is valid")
    }
}

/// Grading exponent: `s = u^GRADING` smooths algebraic endpoint behavior at 0.
const GRADING: f64 = 2.0;
const INNER_TOLERANCE: f64 = 1e-13;

// Maps u in (0,1) to x = 1/s with s = u^p; returns (x, dx/du).
fn tail_map(u: f64) -> (f64, f64) {
    let s = libm::pow(u, GRADING);
    let x = 1.0 / s;
    // dx/du = p u^{p-1} / s^2
    (x, GRADING * libm::pow(u, GRADING - 1.0) / (s * s))
}

/// `∫∫_{[1,∞)²} f(x, y) dx dy`.
///
/// Each axis is mapped by `x = 1/s`, `s = u^2`. The outer axis uses the tensor
/// rule's nodes; the inner axis is integrated adaptively (Gauss-Kronrod) so
/// that kinks along curves such as `x = y` do not limit accuracy.
pub fn integrate_2d_tailbox(f: impl Fn(f64, f64) -> f64, rule: &QuadratureRule) -> Result<f64> {
    let mut total = 0.0;
    for (&u, &wu) in rule.nodes.iter().zip(&rule.weights) {
        let (x, jx) = tail_map(u);
        let mut bad: Option<(f64, f64)> = None;
        let inner = adaptive_kronrod(
            &|v: f64| {
                let (y, jy) = tail_map(v);
                let value = f(x, y);
                if !value.is_finite() && bad.is_none() {
                    return f64::NAN;
                }
                value * jy
            },
            0.0,
            1.0,
            INNER_TOLERANCE,
        );
        if !inner.is_finite() {
            // Locate the offending node for the error message.
            let y = rule
                .nodes
                .iter()
                .map(|&v| tail_map(v).0)
                .find(|&y| !f(x, y).is_finite())
                .unwrap_or(f64::NAN);
            bad = Some((x, y));
        }
        if let Some((x, y)) = bad {
            return Err(Error::Numeric(format!("non-finite integrand at (x, y) = ({x}, {y})")));
        }
        total += wu * jx * inner;
    }
    Ok(total)
}

/// `∫_1^∞ f(x) dx` with the same graded map as the tail box.
pub fn integrate_tail_1d(f: impl Fn(f64) -> f64, rule: &QuadratureRule) -> Result<f64> {
    let mut total = 0.0;
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let (x, jx) = tail_map(u);
        let value = f(x);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite integrand {value} at x = {x}")));
        }
        total += w * value * jx;
    }
    Ok(total)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = step(&f, a, b, fa, fm, fb, whole, tol, 50);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric(format!("non-finite integral over [{a}, {b}]")))
    }
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_WEIGHTS[7] * fc;
    let mut g = GAUSS7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * KRONROD_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        k += KRONROD_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            g += GAUSS7_WEIGHTS[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

// `rel_tol` is relative to a coarse estimate of the whole integral. A panel is
// accepted when its two halves agree with the whole; the first MIN_SPLIT levels
// always subdivide.
fn adaptive_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    const MAX_DEPTH: u32 = 40;
    const MIN_SPLIT: u32 = 3;
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (left, _) = kronrod_15(f, a, m);
        let (right, _) = kronrod_15(f, m, b);
        if !(left.is_finite() && right.is_finite()) {
            return f64::NAN;
        }
        let forced = MAX_DEPTH - depth < MIN_SPLIT;
        if depth == 0 || (!forced && (left + right - whole).abs() <= tol) {
            left + right
        } else {
            recurse(f, a, m, left, 0.5 * tol, depth - 1) + recurse(f, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    let (coarse, _) = kronrod_15(f, a, b);
    if !coarse.is_finite() {
        return f64::NAN;
    }
    recurse(f, a, b, coarse, rel_tol * coarse.abs().max(f64::MIN_POSITIVE), MAX_DEPTH)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_normalized_and_ordered() {
        let rule = QuadratureRule::default();
        assert_eq!(rule.len(), DEFAULT_NODES);
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes()[0] > 0.0 && rule.nodes()[rule.len() - 1] < 1.0);
        assert!(QuadratureRule::gauss_legendre(1).is_err());
    }

    #[test]
    fn tailbox_examples() {
        let rule = QuadratureRule::default();
        let v = integrate_2d_tailbox(|x, y| libm::pow(x, -3.0) * libm::pow(y, -3.0), &rule).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert_eq!(integrate_2d_tailbox(|_, _| 0.0, &rule).unwrap(), 0.0);
        // max(x, y)^{-1/g} integrates to 2 g^2 / ((1 - 2g)(1 - g)), which is 1 at g = 1/3.
        let v = integrate_2d_tailbox(|x, y| libm::pow(x.max(y), -3.0), &rule).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "got {v}");
        let err = integrate_2d_tailbox(|_, _| f64::NAN, &rule);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn tailbox_power_laws() {
        let rule = QuadratureRule::default();
        for &(a, b) in &[(2.5, 3.0), (3.0, 4.0), (2.2, 5.0), (4.0, 4.0)] {
            let exact = 1.0 / ((a - 1.0) * (b - 1.0));
            let v = integrate_2d_tailbox(|x, y| libm::pow(x, -a) * libm::pow(y, -b), &rule).unwrap();
            assert!((v / exact - 1.0).abs() < 1e-8, "a={a} b={b}: {v} vs {exact}");
        }
    }

    #[test]
    fn adaptive_simpson_and_tail_1d() {
        let v = integrate_1d(libm::exp, 0.0, 1.0, 1e-13).unwrap();
        assert!((v - (core::f64::consts::E - 1.0)).abs() < 1e-11);
        let rule = QuadratureRule::default();
        let v = integrate_tail_1d(|x| libm::pow(x, -3.0), &rule).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }
}
