//! One-dimensional quadrature rules used by the exact small-N oracles.

use crate::error::{Error, Result};

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for GK_NODES[1], [3], [5], [7]
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 0.0,
            rel: 1e-8,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &w)) in GK_NODES.iter().zip(&GK_WEIGHTS).enumerate() {
        let vals = if x == 0.0 {
            let v = f(c)?;
            (v, 0.0)
        } else {
            (f(c - h * x)?, f(c + h * x)?)
        };
        let s = vals.0 + vals.1;
        if !s.is_finite() {
            return Err(Error::Quadrature(format!("integrand not finite near {c}")));
        }
        kronrod += w * s;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * s;
        }
    }
    Ok((kronrod * h, (kronrod - gauss).abs() * h))
}

/// Globally adaptive Gauss-Kronrod (7/15) over `[breaks[0], breaks[last]]`,
/// starting from the given breakpoints and always bisecting the interval with
/// the largest error estimate.
pub fn integrate_adaptive<F>(mut f: F, breaks: &[f64], tol: Tolerance) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
    }
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(tol.max_intervals);
    for w in breaks.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1])?;
        parts.push((w[0], w[1], v, e));
    }
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Estimate { value, error });
        }
        if parts.len() >= tol.max_intervals {
            return Err(Error::Quadrature(format!(
                "no convergence after {} intervals: value {value}, error {error}",
                parts.len()
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (a, b, _, _) = parts.swap_remove(worst);
        let m = 0.5 * (a + b);
        if !(a < m && m < b) {
            return Err(Error::Quadrature(format!("interval [{a}, {b}] cannot be bisected")));
        }
        let (v1, e1) = gk15(&mut f, a, m)?;
        let (v2, e2) = gk15(&mut f, m, b)?;
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            let pn_1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p1 - pn_1) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on `[a, b]` with `panels` equal panels.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: usize,
}

impl CompositeRule {
    pub fn new(order: usize, panels: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self {
            nodes,
            weights,
            panels: panels.max(1),
        }
    }

    /// `(x, w)` pairs for `[a, b]`.
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let width = (b - a) / self.panels as f64;
        (0..self.panels).flat_map(move |p| {
            let c = a + (p as f64 + 0.5) * width;
            self.nodes
                .iter()
                .zip(&self.weights)
                .map(move |(x, w)| (c + 0.5 * width * x, 0.5 * width * w))
        })
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points(a, b).map(|(x, w)| w * f(x)).sum()
    }
}
