//! N-function calculus: evaluation, Fenchel conjugation, stability envelopes,
//! doubling checks, modulars, and Luxemburg norms.
//!
//! An N-function here is an evaluator `(x, xi) -> M(x, xi)` tagged with its
//! family and with metadata that the rest of the library consumes: the
//! dimension of the vector argument, whether the integrand depends on the
//! domain point, and the cached one-dimensional stability envelopes
//! `m1(|xi|) <= M(x, xi) <= m2(|xi|)`.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::scalar::{self, greatest_convex_minorant, ScalarConvexFn};

type EvalFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type CoeffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Family descriptor. `Power` carries its parameters so conjugation can use
/// the closed form; the other families evaluate through the generic path.
#[derive(Clone, Debug)]
pub enum Family {
    Power { p: f64, coeff: f64 },
    VariableExponent,
    DoublePhase { p: f64, q: f64 },
    LLogL,
    Exponential,
    AnisotropicSum,
    Custom(String),
}

/// Declared membership in the structural condition classes. Trusted
/// metadata: there is no finite-sample verification procedure for these.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConditionFlags {
    pub c1: bool,
    pub c2: bool,
}

#[derive(Clone)]
pub struct NFunction {
    dim: usize,
    family: Family,
    homogeneous: bool,
    flags: ConditionFlags,
    eval: EvalFn,
    envelopes: Arc<OnceLock<(ScalarConvexFn, ScalarConvexFn)>>,
}

impl std::fmt::Debug for NFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NFunction")
            .field("dim", &self.dim)
            .field("family", &self.family)
            .field("homogeneous", &self.homogeneous)
            .finish()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl NFunction {
    pub fn new(
        dim: usize,
        family: Family,
        homogeneous: bool,
        flags: ConditionFlags,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        NFunction {
            dim,
            family,
            homogeneous,
            flags,
            eval: Arc::new(eval),
            envelopes: Arc::new(OnceLock::new()),
        }
    }

    /// `coeff * |xi|^p`, the polynomial-growth family.
    pub fn power(dim: usize, p: f64, coeff: f64) -> Self {
        assert!(p > 1.0 && coeff > 0.0);
        NFunction::new(
            dim,
            Family::Power { p, coeff },
            true,
            ConditionFlags { c1: true, c2: true },
            move |_x, xi| coeff * norm(xi).powf(p),
        )
    }

    /// `|xi|^2 / 2`, the self-conjugate quadratic.
    pub fn quadratic(dim: usize) -> Self {
        NFunction::power(dim, 2.0, 0.5)
    }

    /// `|xi|^{p(x)}` with a user-supplied exponent field.
    pub fn variable_exponent(dim: usize, p: CoeffFn) -> Self {
        NFunction::new(
            dim,
            Family::VariableExponent,
            false,
            ConditionFlags::default(),
            move |x, xi| norm(xi).powf(p(x)),
        )
    }

    /// `|xi|^p + a(x) |xi|^q` with a nonnegative weight field.
    pub fn double_phase(dim: usize, p: f64, q: f64, a: CoeffFn) -> Self {
        NFunction::new(
            dim,
            Family::DoublePhase { p, q },
            false,
            ConditionFlags::default(),
            move |x, xi| {
                let r = norm(xi);
                r.powf(p) + a(x) * r.powf(q)
            },
        )
    }

    /// `|xi| ln(1 + |xi|)`.
    pub fn l_log_l(dim: usize) -> Self {
        NFunction::new(
            dim,
            Family::LLogL,
            true,
            ConditionFlags { c1: false, c2: true },
            move |_x, xi| {
                let r = norm(xi);
                r * r.ln_1p()
            },
        )
    }

    /// `|xi| (e^{|xi|} - 1)`.
    pub fn exponential(dim: usize) -> Self {
        NFunction::new(
            dim,
            Family::Exponential,
            true,
            ConditionFlags { c1: true, c2: true },
            move |_x, xi| {
                let r = norm(xi);
                r * r.exp_m1()
            },
        )
    }

    /// `sum_i c_i |xi_i|^{p_i}`, anisotropic in the coordinate directions.
    pub fn anisotropic_sum(terms: Vec<(f64, f64)>) -> Self {
        let dim = terms.len();
        NFunction::new(
            dim,
            Family::AnisotropicSum,
            true,
            ConditionFlags::default(),
            move |_x, xi| {
                terms
                    .iter()
                    .zip(xi)
                    .map(|(&(p, c), &z)| c * z.abs().powf(p))
                    .sum()
            },
        )
    }

    pub fn custom(
        dim: usize,
        label: impl Into<String>,
        homogeneous: bool,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        NFunction::new(
            dim,
            Family::Custom(label.into()),
            homogeneous,
            ConditionFlags::default(),
            eval,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn flags(&self) -> ConditionFlags {
        self.flags
    }

    pub fn with_flags(mut self, flags: ConditionFlags) -> Self {
        self.flags = flags;
        self
    }

    pub fn evaluate(&self, x: &[f64], xi: &[f64]) -> f64 {
        (self.eval)(x, xi)
    }

    /// Structural sanity checks on seeded samples: vanishing at the origin,
    /// evenness to relative tolerance 1e-12, and midpoint convexity to 1e-10.
    pub fn validate_on_samples(&self, x_samples: &[Vec<f64>], pairs: usize, seed: u64) -> Result<()> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let zero = vec![0.0; self.dim];
        for x in x_samples {
            let v0 = self.evaluate(x, &zero);
            if v0.abs() > 1e-12 {
                return Err(Error::invalid(format!("M(x,0) = {v0}, expected 0")));
            }
            for _ in 0..pairs {
                let xi: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let zeta: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let neg: Vec<f64> = xi.iter().map(|a| -a).collect();
                let m_xi = self.evaluate(x, &xi);
                let m_neg = self.evaluate(x, &neg);
                if !m_xi.is_finite() {
                    return Err(Error::NonFinite("M evaluation".into()));
                }
                if (m_xi - m_neg).abs() > 1e-12 * (1.0 + m_xi.abs()) {
                    return Err(Error::invalid("M is not even in xi"));
                }
                let mid: Vec<f64> = xi.iter().zip(&zeta).map(|(a, b)| 0.5 * (a + b)).collect();
                let m_mid = self.evaluate(x, &mid);
                let m_zeta = self.evaluate(x, &zeta);
                if m_mid > 0.5 * (m_xi + m_zeta) + 1e-10 * (1.0 + m_xi.abs() + m_zeta.abs()) {
                    return Err(Error::invalid("M is not midpoint convex in xi"));
                }
            }
        }
        Ok(())
    }

    /// Fenchel transform `sup_xi (xi . eta - M(x, xi))` over the box of the
    /// given radius: coarse grid scan refined by coordinatewise
    /// golden-section ascent. Power families bypass the numeric path.
    pub fn conjugate(
        &self,
        x: &[f64],
        eta: &[f64],
        search_radius: f64,
        grid_density: usize,
    ) -> Result<Conjugate> {
        if eta.len() != self.dim {
            return Err(Error::invalid("eta dimension mismatch"));
        }
        if let Family::Power { p, coeff } = self.family {
            // conjugate of c s^p is c' t^{p'} with 1/p + 1/p' = 1
            let pc = p / (p - 1.0);
            let cc = (p - 1.0) / p * (coeff * p).powf(-1.0 / (p - 1.0));
            let r = norm(eta);
            let value = cc * r.powf(pc);
            let arg_r = if r == 0.0 { 0.0 } else { (r / (coeff * p)).powf(1.0 / (p - 1.0)) };
            let maximizer: Vec<f64> = if r == 0.0 {
                vec![0.0; self.dim]
            } else {
                eta.iter().map(|e| e / r * arg_r).collect()
            };
            return Ok(Conjugate { value, maximizer, on_boundary: false });
        }
        self.conjugate_numeric(x, eta, search_radius, grid_density)
    }

    fn conjugate_numeric(
        &self,
        x: &[f64],
        eta: &[f64],
        radius: f64,
        grid_density: usize,
    ) -> Result<Conjugate> {
        let d = self.dim;
        if d > 3 {
            return Err(Error::invalid("numeric conjugation limited to d <= 3"));
        }
        if !(radius > 0.0) || grid_density < 2 {
            return Err(Error::invalid("search radius and grid density must be positive"));
        }
        let axis = scalar::lin_grid(-radius, radius, grid_density);
        let goal = |xi: &[f64]| dot(xi, eta) - self.evaluate(x, xi);

        let mut best = vec![0.0; d];
        let mut best_val = f64::NEG_INFINITY;
        let mut idx = vec![0usize; d];
        loop {
            let xi: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
            let v = goal(&xi);
            if !v.is_finite() && !self.evaluate(x, &xi).is_finite() {
                return Err(Error::NonFinite(format!("M(x, xi) at |xi|={}", norm(&xi))));
            }
            if v > best_val {
                best_val = v;
                best = xi;
            }
            // odometer increment over the d-fold grid
            let mut c = 0;
            loop {
                idx[c] += 1;
                if idx[c] < axis.len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
                if c == d {
                    break;
                }
            }
            if c == d {
                break;
            }
        }

        // coordinatewise golden-section ascent around the grid optimum
        let cell = 2.0 * radius / (grid_density - 1) as f64;
        let phi = 0.5 * (5.0f64.sqrt() - 1.0);
        for _sweep in 0..3 {
            for c in 0..d {
                let mut lo = (best[c] - cell).max(-radius);
                let mut hi = (best[c] + cell).min(radius);
                let mut probe = best.clone();
                let f1d = |t: f64, probe: &mut Vec<f64>| {
                    probe[c] = t;
                    goal(probe)
                };
                let mut t1 = hi - phi * (hi - lo);
                let mut t2 = lo + phi * (hi - lo);
                let mut f1 = f1d(t1, &mut probe);
                let mut f2 = f1d(t2, &mut probe);
                for _ in 0..50 {
                    if f1 < f2 {
                        lo = t1;
                        t1 = t2;
                        f1 = f2;
                        t2 = lo + phi * (hi - lo);
                        f2 = f1d(t2, &mut probe);
                    } else {
                        hi = t2;
                        t2 = t1;
                        f2 = f1;
                        t1 = hi - phi * (hi - lo);
                        f1 = f1d(t1, &mut probe);
                    }
                }
                best[c] = 0.5 * (lo + hi);
                best_val = f1d(best[c], &mut probe);
            }
        }

        let on_boundary = best.iter().any(|&b| b.abs() >= radius - 1.5 * cell);
        Ok(Conjugate { value: best_val, maximizer: best, on_boundary })
    }

    /// Conjugate value that insists on an interior maximizer.
    pub fn conjugate_value(&self, x: &[f64], eta: &[f64], radius: f64, density: usize) -> Result<f64> {
        let c = self.conjugate(x, eta, radius, density)?;
        if c.on_boundary {
            return Err(Error::MaximizerOnBoundary { radius });
        }
        Ok(c.value)
    }

    /// Conjugate with automatic search-radius growth: doubles the box until
    /// the maximizer is interior (superlinear growth guarantees this).
    pub fn conjugate_auto(&self, x: &[f64], eta: &[f64], density: usize) -> Result<Conjugate> {
        let mut radius = 4.0 * (1.0 + norm(eta));
        for _ in 0..24 {
            let c = self.conjugate(x, eta, radius, density)?;
            if !c.on_boundary {
                return Ok(c);
            }
            radius *= 2.0;
        }
        Err(Error::MaximizerOnBoundary { radius })
    }

    /// One-dimensional stability envelopes: `m2` is the pointwise sup of
    /// `M(x, s u)` over sampled points and directions (convex because each
    /// `M(x, .)` is); `m1` is the greatest convex minorant of the pointwise
    /// inf. The sandwich holds at all sampled points.
    pub fn stability_bounds(
        &self,
        radius_grid: &[f64],
        x_samples: &[Vec<f64>],
        direction_count: usize,
    ) -> Result<(ScalarConvexFn, ScalarConvexFn)> {
        if radius_grid.is_empty() || x_samples.is_empty() || direction_count == 0 {
            return Err(Error::invalid("stability_bounds requires nonempty grids"));
        }
        let dirs = unit_directions(self.dim, direction_count);
        let mut lo_pts = Vec::with_capacity(radius_grid.len() + 1);
        let mut hi_pts = Vec::with_capacity(radius_grid.len() + 1);
        if radius_grid[0] != 0.0 {
            lo_pts.push((0.0, 0.0));
            hi_pts.push((0.0, 0.0));
        }
        let mut xi = vec![0.0; self.dim];
        for &s in radius_grid {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for u in &dirs {
                for (z, uc) in xi.iter_mut().zip(u) {
                    *z = s * uc;
                }
                for x in x_samples {
                    let v = self.evaluate(x, &xi);
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("M at radius {s}")));
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if s == 0.0 {
                lo = 0.0;
                hi = 0.0;
            }
            lo_pts.push((s, lo));
            hi_pts.push((s, hi));
        }
        let m1 = greatest_convex_minorant(&lo_pts)?;
        let m2 = ScalarConvexFn::from_points(&hi_pts)?;
        Ok((m1, m2))
    }

    /// Compute-once access to the envelopes with the supplied sampling.
    pub fn ensure_envelopes(
        &self,
        radius_grid: &[f64],
        x_samples: &[Vec<f64>],
        direction_count: usize,
    ) -> Result<&(ScalarConvexFn, ScalarConvexFn)> {
        if let Some(e) = self.envelopes.get() {
            return Ok(e);
        }
        let pair = self.stability_bounds(radius_grid, x_samples, direction_count)?;
        let _ = self.envelopes.set(pair);
        Ok(self.envelopes.get().unwrap())
    }

    pub fn envelopes(&self) -> Option<&(ScalarConvexFn, ScalarConvexFn)> {
        self.envelopes.get()
    }

    /// Default envelope sampling: log-spaced radii in [1e-3, 1e2] plus 0.
    pub fn ensure_default_envelopes(&self, x_samples: &[Vec<f64>]) -> Result<&(ScalarConvexFn, ScalarConvexFn)> {
        let grid = scalar::log_grid(1e-3, 1e2, 160);
        let xs: Vec<Vec<f64>> = if x_samples.is_empty() {
            vec![vec![0.0; self.dim]]
        } else {
            x_samples.to_vec()
        };
        self.ensure_envelopes(&grid, &xs, 32.max(2 * self.dim))
    }
}

/// Result of a Fenchel transform evaluation.
#[derive(Debug, Clone)]
pub struct Conjugate {
    pub value: f64,
    pub maximizer: Vec<f64>,
    pub on_boundary: bool,
}

/// Evenly spread unit directions; +-e1 in 1-D, the uniform circle in 2-D,
/// a Fibonacci sphere in 3-D.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * j as f64;
                    vec![r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
        _ => panic!("unit_directions supports d <= 3"),
    }
}

/// A vector field sampled at quadrature points with nonnegative weights
/// summing to the measure of the underlying domain.
#[derive(Debug, Clone)]
pub struct SampledField {
    dim_x: usize,
    dim_v: usize,
    x: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
}

impl SampledField {
    pub fn new(dim_x: usize, dim_v: usize, x: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let n = w.len();
        if x.len() != n * dim_x || v.len() != n * dim_v {
            return Err(Error::invalid("sampled field length mismatch"));
        }
        if w.iter().any(|&wi| wi < 0.0) {
            return Err(Error::invalid("quadrature weights must be nonnegative"));
        }
        Ok(SampledField { dim_x, dim_v, x, v, w })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim_x..(i + 1) * self.dim_x]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim_v..(i + 1) * self.dim_v]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.w[i]
    }

    pub fn dim_v(&self) -> usize {
        self.dim_v
    }
}

/// Quadrature approximation of the modular `int_Omega M(x, v(x)) dx`.
pub fn modular(m: &NFunction, field: &SampledField) -> Result<f64> {
    modular_scaled(m, field, 1.0)
}

fn modular_scaled(m: &NFunction, field: &SampledField, inv_lambda: f64) -> Result<f64> {
    if field.is_empty() {
        return Err(Error::invalid("empty sampled field"));
    }
    if field.dim_v() != m.dim() {
        return Err(Error::invalid("field/N-function dimension mismatch"));
    }
    let mut sum = 0.0;
    let mut scaled = vec![0.0; m.dim()];
    for i in 0..field.len() {
        for (s, a) in scaled.iter_mut().zip(field.value(i)) {
            *s = a * inv_lambda;
        }
        sum += field.weight(i) * m.evaluate(field.point(i), &scaled);
    }
    Ok(sum)
}

/// Smallest `lambda > 0` with `modular(v / lambda) <= 1`, by bracketing and
/// bisection to the given relative tolerance. Returns 0 for the zero field.
pub fn luxemburg_norm(m: &NFunction, field: &SampledField, tol: f64) -> Result<f64> {
    if field.is_empty() {
        return Err(Error::invalid("empty sampled field"));
    }
    let max_v = (0..field.len())
        .map(|i| norm(field.value(i)))
        .fold(0.0f64, f64::max);
    if max_v == 0.0 {
        return Ok(0.0);
    }
    let leq_one = |lambda: f64| -> bool {
        match modular_scaled(m, field, 1.0 / lambda) {
            Ok(v) => v.is_finite() && v <= 1.0,
            Err(_) => false,
        }
    };
    let mut hi = 1.0;
    let mut doublings = 0;
    while !leq_one(hi) {
        hi *= 2.0;
        doublings += 1;
        if doublings > 120 {
            return Err(Error::BracketingFailed {
                doublings,
                context: "luxemburg norm upper bracket (modular appears infinite at all scales)".into(),
            });
        }
    }
    let mut lo = hi;
    while leq_one(lo) {
        lo *= 0.5;
        doublings += 1;
        if doublings > 240 || lo < 1e-300 {
            // modular stays below 1 at arbitrarily small lambda: norm is 0
            return Ok(0.0);
        }
    }
    while (hi - lo) > tol * hi {
        let mid = 0.5 * (lo + hi);
        if leq_one(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Empirical doubling-constant report for a scalar growth function.
#[derive(Debug, Clone)]
pub struct Delta2Report {
    pub satisfied: bool,
    pub constant: f64,
    pub trend_slope: f64,
}

/// Empirical doubling check far from the origin: the largest ratio
/// `m(2s)/m(s)` over a geometric grid, flagged unsatisfied when the
/// log-ratio still grows over the last decade of the grid.
pub fn delta2_check(m: &ScalarConvexFn, s_max: f64, grid_density: usize) -> Result<Delta2Report> {
    if !(s_max > 0.0) || grid_density < 8 {
        return Err(Error::invalid("delta2_check needs s_max > 0 and a usable grid"));
    }
    let grid = scalar::log_grid(s_max * 1e-4, s_max, grid_density);
    let mut ratios = Vec::with_capacity(grid.len());
    for &s in &grid {
        let den = m.eval(s);
        if den <= 0.0 {
            return Err(Error::invalid(format!(
                "growth function vanishes at s = {s}; ratio undefined"
            )));
        }
        ratios.push((s, m.eval(2.0 * s) / den));
    }
    let far_cut = 1.0f64.min(s_max / 10.0);
    let constant = ratios
        .iter()
        .filter(|(s, _)| *s >= far_cut)
        .map(|&(_, r)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    // trend of ln(ratio) against ln(s) over the last decade
    let cut = s_max / 10.0;
    let pts: Vec<(f64, f64)> = ratios
        .iter()
        .filter(|(s, _)| *s >= cut)
        .map(|&(s, r)| (s.ln(), r.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let trend_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let satisfied = constant.is_finite() && trend_slope < 0.1;
    Ok(Delta2Report { satisfied, constant, trend_slope })
}
