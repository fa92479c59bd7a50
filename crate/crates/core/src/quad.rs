//! Quadrature rules: Gauss-Legendre nodes on [-1, 1] and the simplex rules
//! used for load vectors.

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre polynomial. Exact for polynomials of degree 2n - 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre integration of `f` over [a, b] with `panels`
/// equal panels of `order` points each.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (t, w) in nodes.iter().zip(&weights) {
            sum += w * f(mid + 0.5 * h * t);
        }
    }
    sum * 0.5 * h
}

/// Barycentric points and weights (summing to 1) of the 3-point edge-midpoint
/// rule on a triangle; exact for quadratics.
pub const TRI_3: [([f64; 3], f64); 3] = [
    ([0.5, 0.5, 0.0], 1.0 / 3.0),
    ([0.0, 0.5, 0.5], 1.0 / 3.0),
    ([0.5, 0.0, 0.5], 1.0 / 3.0),
];

/// 7-point degree-5 rule on a triangle (barycentric points, weights sum 1).
pub fn tri_7() -> [([f64; 3], f64); 7] {
    let a = (6.0 + (15.0f64).sqrt()) / 21.0;
    let b = (6.0 - (15.0f64).sqrt()) / 21.0;
    let wa = (155.0 + (15.0f64).sqrt()) / 1200.0;
    let wb = (155.0 - (15.0f64).sqrt()) / 1200.0;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([a, 1.0 - 2.0 * a, a], wa),
        ([a, a, 1.0 - 2.0 * a], wa),
        ([1.0 - 2.0 * a, a, a], wa),
        ([b, 1.0 - 2.0 * b, b], wb),
        ([b, b, 1.0 - 2.0 * b], wb),
        ([1.0 - 2.0 * b, b, b], wb),
    ]
}

/// 3-point Gauss rule on a 1-D cell in barycentric form ([t, 1-t], weight).
pub fn seg_3() -> [([f64; 2], f64); 3] {
    let s = (0.6f64).sqrt();
    [
        ([0.5 * (1.0 - s), 0.5 * (1.0 + s)], 5.0 / 18.0),
        ([0.5, 0.5], 8.0 / 18.0),
        ([0.5 * (1.0 + s), 0.5 * (1.0 - s)], 5.0 / 18.0),
    ]
}
