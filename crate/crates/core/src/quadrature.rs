//! Gauss rules on the unit interval and collapsed (Duffy) product rules on
//! the reference triangle.

/// Quadrature on a triangle in barycentric coordinates. Weights sum to one,
/// so `∫_T g ≈ |T| Σ_q w_q g(x_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Conical product rule exact for polynomials of total degree `degree`.
    pub fn triangle(degree: usize) -> QuadratureRule {
        // After the collapse x = s, y = t(1 - s) the integrand has degree
        // degree + 1 in s and degree in t.
        let ns = (degree + 3) / 2;
        let nt = (degree + 2) / 2;
        let (s_pts, s_wts) = gauss_legendre(ns);
        let (t_pts, t_wts) = gauss_legendre(nt);
        let mut points = Vec::with_capacity(ns * nt);
        let mut weights = Vec::with_capacity(ns * nt);
        for (s, ws) in s_pts.iter().zip(&s_wts) {
            for (t, wt) in t_pts.iter().zip(&t_wts) {
                let x = *s;
                let y = t * (1.0 - s);
                points.push([1.0 - x - y, x, y]);
                // Reference area 1/2 is divided out.
                weights.push(2.0 * ws * wt * (1.0 - s));
            }
        }
        QuadratureRule { points, weights, degree }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre rule with `n` points on `[0, 1]`; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    /// Exact for polynomials of degree `degree`.
    pub fn with_degree(degree: usize) -> LineRule {
        let (points, weights) = gauss_legendre(degree / 2 + 1);
        LineRule { points, weights }
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "a Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration from the Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
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
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫_{ref} x^a y^b = a! b! / (a + b + 2)!
    fn monomial_exact(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn weights_sum_to_one() {
        for d in 0..=16 {
            let r = QuadratureRule::triangle(d);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "degree {d}: {s}");
            assert!(r.points.iter().all(|l| l.iter().all(|&v| v > 0.0)));
        }
    }

    #[test]
    fn triangle_rules_integrate_monomials_exactly() {
        for d in 0..=14usize {
            let r = QuadratureRule::triangle(d);
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
                        .sum::<f64>()
                        * 0.5;
                    let exact = monomial_exact(a, b);
                    assert!((q - exact).abs() <= 1e-14 * exact.max(1e-3), "d={d} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn line_rules_integrate_monomials_exactly() {
        for d in 0..=12usize {
            let r = LineRule::with_degree(d);
            for k in 0..=d as i32 {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }
}
