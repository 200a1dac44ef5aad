//! Gauss-Legendre rules: composite panels on finite intervals and geometric
//! panels for integrands with a power-law endpoint singularity.

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared 20-point rule.
    pub fn order20() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Calls `visit(y, w)` for every node of a composite rule with `panels` equal
/// panels of the 20-point rule on `[a, b]`.
pub fn composite_nodes(a: f64, b: f64, panels: usize, mut visit: impl FnMut(f64, f64)) {
    let rule = GaussLegendre::order20();
    let width = (b - a) / panels as f64;
    for k in 0..panels {
        let lo = a + k as f64 * width;
        let (mid, half) = (lo + 0.5 * width, 0.5 * width);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            visit(mid + half * x, w * half);
        }
    }
}

pub fn composite(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mut s = 0.0;
    composite_nodes(a, b, panels, |y, w| s += w * f(y));
    s
}

/// `int_lo^hi f` for `0 < lo < hi`, with panels `[hi 2^-(k+1), hi 2^-k]` refined
/// geometrically toward `lo`, so power laws in the distance to 0 are handled
/// at a fixed relative accuracy on every octave.
pub fn geometric(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    debug_assert!(0.0 < lo && lo <= hi);
    let rule = GaussLegendre::order20();
    let mut s = 0.0;
    let mut b = hi;
    while b > lo {
        let a = (0.5 * b).max(lo);
        s += rule.integrate(a, b, &mut f);
        b = a;
    }
    s
}
