//! Maximal monotone multifunctions `A(x, xi)`: measurable selections,
//! resolvents and the Minty transform, mollified single-valued
//! approximations, and coercivity checking.
//!
//! Three representations are supported: subdifferentials of convex
//! potentials (with a proximal map), explicit one-dimensional curves with
//! first-class jumps (optionally extended radially), and plain single-valued
//! maps. The resolvent `(I + A)^{-1}` is the workhorse: it is single-valued
//! and nonexpansive, which makes the Minty transform
//! `mu = nu - 2 (I + A)^{-1} nu` a 1-Lipschitz function even when `A` jumps.
//!
//! Note on flux nonuniqueness: for a flat datum the selection inside a jump
//! is genuinely nonunique (any constant in the jump interval divides out).
//! Demonstrations of that effect use the sign curve; a curve that decreases
//! for negative arguments is rejected outright by the monotonicity
//! validation here and cannot be special-cased.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nfunc::{NFunction, SampledField};
use crate::quad;

type PotentialFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type ProxFn = Arc<dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync>;
type MapFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An explicit 1-D monotone curve: ordered breakpoints `(xi, [lo, hi])`
/// encode jumps; between consecutive breakpoints the curve is the segment
/// from `hi_i` to `lo_{i+1}`; beyond the ends it continues with the given
/// slopes.
#[derive(Debug, Clone)]
pub struct Curve1d {
    xi: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl Curve1d {
    pub fn new(points: &[(f64, f64, f64)], left_slope: f64, right_slope: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("curve needs at least one breakpoint"));
        }
        if left_slope < 0.0 || right_slope < 0.0 {
            return Err(Error::NotMonotone("curve end slopes must be nonnegative".into()));
        }
        let mut xi = Vec::new();
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for &(t, l, h) in points {
            if l > h {
                return Err(Error::NotMonotone(format!("jump interval reversed at xi = {t}")));
            }
            if let Some(&prev) = xi.last() {
                if t <= prev {
                    return Err(Error::invalid("curve breakpoints must be strictly increasing"));
                }
            }
            if let Some(&prev_hi) = hi.last() {
                if l < prev_hi {
                    return Err(Error::NotMonotone(format!(
                        "curve decreases between breakpoints before xi = {t}"
                    )));
                }
            }
            xi.push(t);
            lo.push(l);
            hi.push(h);
        }
        Ok(Curve1d { xi, lo, hi, left_slope, right_slope })
    }

    /// The maximal monotone sign graph: value `[-1, 1]` at 0.
    pub fn sign() -> Self {
        Curve1d::new(&[(0.0, -1.0, 1.0)], 0.0, 0.0).unwrap()
    }

    /// `xi + sign(xi)` with the full jump `[-1, 1]` at 0; strictly monotone.
    pub fn identity_plus_sign() -> Self {
        Curve1d::new(&[(0.0, -1.0, 1.0)], 1.0, 1.0).unwrap()
    }

    pub fn breakpoint_args(&self) -> &[f64] {
        &self.xi
    }

    /// Deterministic selection: midpoint of the jump interval at
    /// breakpoints, the single value elsewhere.
    pub fn select(&self, t: f64) -> f64 {
        match self.locate(t) {
            Loc::At(i) => 0.5 * (self.lo[i] + self.hi[i]),
            Loc::Left => self.lo[0] + self.left_slope * (t - self.xi[0]),
            Loc::Right => {
                let n = self.xi.len() - 1;
                self.hi[n] + self.right_slope * (t - self.xi[n])
            }
            Loc::Between(i) => {
                let s = (self.lo[i + 1] - self.hi[i]) / (self.xi[i + 1] - self.xi[i]);
                self.hi[i] + s * (t - self.xi[i])
            }
        }
    }

    /// The value interval at `t` (degenerate away from breakpoints).
    pub fn value_interval(&self, t: f64) -> (f64, f64) {
        match self.locate(t) {
            Loc::At(i) => (self.lo[i], self.hi[i]),
            _ => {
                let v = self.select(t);
                (v, v)
            }
        }
    }

    /// Exact resolvent: the unique `t` with `t + eta = nu` for some
    /// `eta` in the curve's value set at `t`.
    pub fn resolvent(&self, nu: f64) -> f64 {
        let n = self.xi.len();
        // left ray
        if nu < self.xi[0] + self.lo[0] {
            return self.xi[0] + (nu - (self.xi[0] + self.lo[0])) / (1.0 + self.left_slope);
        }
        for i in 0..n {
            if nu <= self.xi[i] + self.hi[i] {
                if nu >= self.xi[i] + self.lo[i] {
                    return self.xi[i];
                }
                // strictly inside the segment piece ending at breakpoint i
                let s = (self.lo[i] - self.hi[i - 1]) / (self.xi[i] - self.xi[i - 1]);
                return self.xi[i - 1] + (nu - (self.xi[i - 1] + self.hi[i - 1])) / (1.0 + s);
            }
            if i + 1 < n && nu < self.xi[i + 1] + self.lo[i + 1] {
                let s = (self.lo[i + 1] - self.hi[i]) / (self.xi[i + 1] - self.xi[i]);
                return self.xi[i] + (nu - (self.xi[i] + self.hi[i])) / (1.0 + s);
            }
        }
        let last = n - 1;
        self.xi[last] + (nu - (self.xi[last] + self.hi[last])) / (1.0 + self.right_slope)
    }

    /// Distance from `eta` to the value set at `t`.
    pub fn membership_gap(&self, t: f64, eta: f64) -> f64 {
        let (lo, hi) = self.value_interval(t);
        (lo - eta).max(eta - hi).max(0.0)
    }

    fn locate(&self, t: f64) -> Loc {
        if t < self.xi[0] {
            return Loc::Left;
        }
        for i in 0..self.xi.len() {
            if t == self.xi[i] {
                return Loc::At(i);
            }
            if i + 1 < self.xi.len() && t < self.xi[i + 1] {
                return Loc::Between(i);
            }
        }
        Loc::Right
    }

    /// Radial extensions use the branch on r >= 0; it must start at 0 and
    /// stay nonnegative so the extended map is monotone in d dimensions.
    fn radial_check(&self) -> Result<()> {
        if self.xi[0] != 0.0 {
            return Err(Error::invalid("radial curves must carry a breakpoint at 0"));
        }
        if self.hi[0] < 0.0 {
            return Err(Error::NotMonotone("radial curve value at 0 must reach 0".into()));
        }
        Ok(())
    }
}

enum Loc {
    Left,
    At(usize),
    Between(usize),
    Right,
}

/// Coercivity data `(c_A, m, M)` asserting the duality-pairing lower bound
/// `eta . xi >= c_A (M(x, xi) + conj M(x, eta)) - m(x)`.
#[derive(Clone)]
pub struct CoercivityWitness {
    pub c_a: f64,
    pub m: ScalarField,
    pub growth: Arc<NFunction>,
}

impl CoercivityWitness {
    pub fn new(c_a: f64, m: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, growth: Arc<NFunction>) -> Result<Self> {
        if !(c_a > 0.0 && c_a <= 1.0) {
            return Err(Error::invalid("coercivity constant must lie in (0, 1]"));
        }
        Ok(CoercivityWitness { c_a, m: Arc::new(m), growth })
    }
}

#[derive(Clone)]
enum Kind {
    Potential {
        potential: PotentialFn,
        prox: ProxFn,
        /// exact gradient where available; the Moreau-Yosida quotient
        /// `(xi - prox(xi))/tau` is the fallback and carries O(tau) error
        grad: Option<MapFn>,
    },
    Curve { curve: Curve1d, radial: bool },
    SingleValued { a: MapFn },
}

/// A maximal monotone multifunction with resolvent access.
#[derive(Clone)]
pub struct MonotoneGraph {
    dim: usize,
    kind: Kind,
    witness: Option<CoercivityWitness>,
    strictly_monotone: bool,
}

impl std::fmt::Debug for MonotoneGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            Kind::Potential { .. } => "potential",
            Kind::Curve { radial, .. } => {
                if *radial {
                    "curve(radial)"
                } else {
                    "curve"
                }
            }
            Kind::SingleValued { .. } => "single-valued",
        };
        f.debug_struct("MonotoneGraph")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .finish()
    }
}

/// Step used by the Moreau-Yosida selection of potential graphs.
const SELECTION_TAU: f64 = 1e-7;

impl MonotoneGraph {
    pub fn identity(dim: usize) -> Self {
        MonotoneGraph::linear(dim, 1.0)
    }

    pub fn linear(dim: usize, slope: f64) -> Self {
        assert!(slope >= 0.0);
        MonotoneGraph {
            dim,
            kind: Kind::SingleValued {
                a: Arc::new(move |_x, xi: &[f64]| xi.iter().map(|z| slope * z).collect()),
            },
            witness: None,
            strictly_monotone: slope > 0.0,
        }
    }

    /// The subdifferential of the Euclidean norm: the unit ball at 0.
    pub fn sign(dim: usize) -> Self {
        MonotoneGraph {
            dim,
            kind: Kind::Curve { curve: Curve1d::sign(), radial: dim > 1 },
            witness: None,
            strictly_monotone: false,
        }
    }

    /// `xi + sign(xi)` extended radially; strictly monotone.
    pub fn identity_plus_sign(dim: usize) -> Self {
        MonotoneGraph {
            dim,
            kind: Kind::Curve { curve: Curve1d::identity_plus_sign(), radial: dim > 1 },
            witness: None,
            strictly_monotone: true,
        }
    }

    /// Subdifferential of `coeff |xi|^p` with the radial proximal map
    /// computed by bisection on `r + tau c p r^{p-1} = s`.
    pub fn power_law(dim: usize, p: f64, coeff: f64) -> Self {
        assert!(p > 1.0 && coeff > 0.0);
        let potential: PotentialFn = Arc::new(move |_x, xi: &[f64]| coeff * norm(xi).powf(p));
        let prox: ProxFn = Arc::new(move |_x, v: &[f64], tau: f64| {
            let s = norm(v);
            if s == 0.0 {
                return vec![0.0; v.len()];
            }
            let g = move |r: f64| r + tau * coeff * p * r.powf(p - 1.0) - s;
            // root in [0, s]
            let (mut lo, mut hi) = (0.0, s);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let r = 0.5 * (lo + hi);
            v.iter().map(|z| z / s * r).collect()
        });
        let grad: MapFn = Arc::new(move |_x, xi: &[f64]| {
            let r = norm(xi);
            if r == 0.0 {
                return vec![0.0; xi.len()];
            }
            let rho = coeff * p * r.powf(p - 1.0);
            xi.iter().map(|z| z / r * rho).collect()
        });
        MonotoneGraph {
            dim,
            kind: Kind::Potential { potential, prox, grad: Some(grad) },
            witness: None,
            strictly_monotone: true,
        }
    }

    pub fn potential(
        dim: usize,
        j: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        prox: impl Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        MonotoneGraph {
            dim,
            kind: Kind::Potential { potential: Arc::new(j), prox: Arc::new(prox), grad: None },
            witness: None,
            strictly_monotone: false,
        }
    }

    pub fn curve(dim: usize, curve: Curve1d, radial: bool) -> Result<Self> {
        if radial {
            curve.radial_check()?;
        } else if dim != 1 {
            return Err(Error::invalid("non-radial curves are one-dimensional"));
        }
        Ok(MonotoneGraph { dim, kind: Kind::Curve { curve, radial }, witness: None, strictly_monotone: false })
    }

    pub fn single_valued(
        dim: usize,
        a: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        MonotoneGraph { dim, kind: Kind::SingleValued { a: Arc::new(a) }, witness: None, strictly_monotone: false }
    }

    pub fn with_witness(mut self, witness: CoercivityWitness) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn mark_strictly_monotone(mut self, flag: bool) -> Self {
        self.strictly_monotone = flag;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn witness(&self) -> Option<&CoercivityWitness> {
        self.witness.as_ref()
    }

    pub fn strictly_monotone(&self) -> bool {
        self.strictly_monotone
    }

    /// The convex potential value for subdifferential graphs.
    pub fn potential_value(&self, x: &[f64], xi: &[f64]) -> Option<f64> {
        match &self.kind {
            Kind::Potential { potential, .. } => Some(potential(x, xi)),
            _ => None,
        }
    }

    /// One element of `A(x, xi)`, deterministic: the jump midpoint for
    /// curves, the Moreau-Yosida quotient `(xi - prox(xi)) / tau` for
    /// potentials, the callback value for single-valued maps.
    pub fn selection(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::SingleValued { a } => a(x, xi),
            Kind::Potential { prox, grad, .. } => {
                if let Some(g) = grad {
                    return g(x, xi);
                }
                let p = prox(x, xi, SELECTION_TAU);
                xi.iter().zip(&p).map(|(z, pz)| (z - pz) / SELECTION_TAU).collect()
            }
            Kind::Curve { curve, radial } => {
                if !radial {
                    return vec![curve.select(xi[0])];
                }
                let r = norm(xi);
                if r == 0.0 {
                    return vec![0.0; self.dim];
                }
                let rho = curve.select(r);
                xi.iter().map(|z| z / r * rho).collect()
            }
        }
    }

    /// The resolvent `(I + A(x, .))^{-1}(nu)`.
    pub fn resolvent(&self, x: &[f64], nu: &[f64], tol: f64) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::Potential { prox, .. } => Ok(prox(x, nu, 1.0)),
            Kind::Curve { curve, radial } => {
                if !radial {
                    return Ok(vec![curve.resolvent(nu[0])]);
                }
                let s = norm(nu);
                if s == 0.0 {
                    return Ok(vec![0.0; self.dim]);
                }
                let r = curve.resolvent(s).max(0.0);
                Ok(nu.iter().map(|z| z / s * r).collect())
            }
            Kind::SingleValued { a } => self.resolvent_newton(a, x, nu, tol),
        }
    }

    /// Damped Newton with finite-difference Jacobian on
    /// `F(xi) = xi + a(x, xi) - nu`; halving cap then, in one dimension,
    /// bisection on the monotone scalar residual.
    fn resolvent_newton(&self, a: &MapFn, x: &[f64], nu: &[f64], tol: f64) -> Result<Vec<f64>> {
        let d = self.dim;
        let f = |xi: &[f64]| -> Vec<f64> {
            let av = a(x, xi);
            xi.iter().zip(&av).zip(nu).map(|((z, az), n)| z + az - n).collect()
        };
        let mut xi = vec![0.0; d];
        let mut fx = f(&xi);
        let mut fnorm = norm(&fx);
        for _ in 0..60 {
            if fnorm <= tol {
                return Ok(xi);
            }
            // finite-difference Jacobian of F
            let h = 1e-7 * (1.0 + norm(&xi));
            let mut jac = vec![0.0; d * d];
            for c in 0..d {
                let mut xp = xi.clone();
                xp[c] += h;
                let fp = f(&xp);
                for r in 0..d {
                    jac[r * d + c] = (fp[r] - fx[r]) / h;
                }
            }
            let Some(step) = solve_dense(&mut jac, &fx, d) else {
                break;
            };
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = xi.iter().zip(&step).map(|(z, s)| z - alpha * s).collect();
                let fc = f(&cand);
                let fcn = norm(&fc);
                if fcn < fnorm {
                    xi = cand;
                    fx = fc;
                    fnorm = fcn;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if fnorm <= tol {
            return Ok(xi);
        }
        if d == 1 {
            // scalar residual is strictly increasing: bracket and bisect
            let g = |t: f64| t + a(x, &[t])[0] - nu[0];
            let (mut lo, mut hi) = (-1.0, 1.0);
            let mut k = 0;
            while g(lo) > 0.0 {
                lo *= 2.0;
                k += 1;
                if k > 200 {
                    return Err(Error::NoConvergence("resolvent bracket (lower)".into()));
                }
            }
            while g(hi) < 0.0 {
                hi *= 2.0;
                k += 1;
                if k > 200 {
                    return Err(Error::NoConvergence("resolvent bracket (upper)".into()));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < tol * (1.0 + hi.abs()) {
                    break;
                }
            }
            return Ok(vec![0.5 * (lo + hi)]);
        }
        Err(Error::NoConvergence(format!(
            "resolvent Newton stalled at residual {fnorm} (graph may not be maximal monotone)"
        )))
    }

    /// The Minty transform at `nu`: the unique graph point `(xi, eta)` with
    /// `xi + eta = nu`, returned together with `mu = eta - xi`.
    pub fn minty(&self, x: &[f64], nu: &[f64], tol: f64) -> Result<MintyPoint> {
        if !(tol > 0.0) {
            return Err(Error::invalid("minty tolerance must be positive"));
        }
        let xi = self.resolvent(x, nu, tol)?;
        let eta: Vec<f64> = nu.iter().zip(&xi).map(|(n, z)| n - z).collect();
        let mu: Vec<f64> = eta.iter().zip(&xi).map(|(e, z)| e - z).collect();
        Ok(MintyPoint { xi, eta, mu })
    }

    /// Monotonicity spot check on seeded random pairs of the selection.
    pub fn check_monotonicity(&self, x_samples: &[Vec<f64>], pairs: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in x_samples {
            for _ in 0..pairs {
                let xi: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let zeta: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let g = self.selection(x, &xi);
                let h = self.selection(x, &zeta);
                let pairing: f64 = g
                    .iter()
                    .zip(&h)
                    .zip(xi.iter().zip(&zeta))
                    .map(|((gi, hi), (a, b))| (gi - hi) * (a - b))
                    .sum();
                if pairing < -1e-10 {
                    return Err(Error::NotMonotone(format!(
                        "selection pairing {pairing} < 0 at |xi| = {}",
                        norm(&xi)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Mollified single-valued approximation over a ball of radius `eps`.
    pub fn mollify(&self, eps: f64, quad_order: usize) -> Result<MollifiedMap> {
        MollifiedMap::new(self.clone(), eps, quad_order)
    }

    /// Coercivity margin report over seeded samples with `|xi|` log-uniform
    /// in [1e-3, 1e2]. Negative minimum below -1e-6 flags failure.
    pub fn coercivity_check(
        &self,
        x_samples: &[Vec<f64>],
        sample_count: usize,
        seed: u64,
    ) -> Result<CoercivityReport> {
        let witness = self
            .witness
            .as_ref()
            .ok_or_else(|| Error::invalid("coercivity_check requires a coercivity witness"))?;
        let m = &witness.growth;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_margin = f64::INFINITY;
        let mut worst = Vec::new();
        let mut evaluated = 0usize;
        for _ in 0..sample_count {
            let x = &x_samples[rng.gen_range(0..x_samples.len())];
            let r = 10f64.powf(rng.gen_range(-3.0..2.0));
            let mut xi: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm(&xi).max(1e-12);
            xi.iter_mut().for_each(|z| *z *= r / n);
            let eta = self.selection(x, &xi);
            let m_xi = m.evaluate(x, &xi);
            let conj = m.conjugate_auto(x, &eta, 41)?.value;
            let margin = dot(&eta, &xi) - witness.c_a * (m_xi + conj) + (witness.m)(x);
            evaluated += 1;
            if margin < min_margin {
                min_margin = margin;
            }
            if margin < -1e-6 && worst.len() < 16 {
                worst.push(CoercivityViolation { x: x.clone(), xi, eta, margin });
            }
        }
        Ok(CoercivityReport { min_margin, samples: evaluated, violations: worst })
    }

    /// Upper bound for `|eta|` over all selections at `(x, xi)`, from the
    /// conjugated upper envelope: invert `conj m2` at
    /// `(2/c_A) m2(2|xi|/c_A) + (2/c_A) m(x)`.
    pub fn growth_bound(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        let witness = self
            .witness
            .as_ref()
            .ok_or_else(|| Error::invalid("growth_bound requires a coercivity witness"))?;
        let m = &witness.growth;
        let (_, m2) = m
            .envelopes()
            .ok_or_else(|| Error::invalid("growth_bound requires computed envelopes (ensure_default_envelopes)"))?;
        let m2_pl = m2
            .as_pl()
            .ok_or_else(|| Error::invalid("upper envelope must be piecewise linear"))?;
        let m2_conj = m2_pl.conjugate()?;
        let c = witness.c_a;
        let arg = 2.0 / c * m2.eval(2.0 * norm(xi) / c) + 2.0 / c * (witness.m)(x);
        m2_conj.inverse(arg)
    }
}

/// A point of the rotated graph: `xi + eta = nu`, `mu = eta - xi`.
#[derive(Debug, Clone)]
pub struct MintyPoint {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CoercivityViolation {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct CoercivityReport {
    pub min_margin: f64,
    pub samples: usize,
    pub violations: Vec<CoercivityViolation>,
}

impl CoercivityReport {
    pub fn passed(&self) -> bool {
        self.min_margin >= -1e-6
    }
}

/// The fixed smooth bump `phi(s) = C exp(1/(|s|^2 - 1))` on `|s| < 1`,
/// unnormalized.
fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 / (r2 - 1.0)).exp()
    }
}

/// Normalization constant of the bump over the unit ball in dimension d.
pub fn bump_normalization(dim: usize) -> f64 {
    let mass = match dim {
        1 => quad::integrate(|s| bump(s * s), -1.0, 1.0, 16, 64),
        2 => 2.0 * std::f64::consts::PI * quad::integrate(|r| r * bump(r * r), 0.0, 1.0, 16, 64),
        3 => 4.0 * std::f64::consts::PI * quad::integrate(|r| r * r * bump(r * r), 0.0, 1.0, 16, 64),
        _ => panic!("mollifier supports d <= 3"),
    };
    1.0 / mass
}

enum MollRule {
    /// d-fold tensor Gauss-Legendre restricted to the unit ball; weights
    /// carry the kernel values and are normalized to sum to one.
    Tensor { offsets: Vec<f64>, weights: Vec<f64> },
    /// One-dimensional piecewise Gauss rule split at the curve breakpoints,
    /// normalized per evaluation; spectrally accurate across jumps.
    SplitGauss { nodes: Vec<f64>, weights: Vec<f64> },
    /// Rotational equivariance of radially extended curves in the plane:
    /// `a_eps(xi) = g(|xi|) xi/|xi|` with the scalar profile precomputed by
    /// polar quadrature split at the breakpoint circles. Tensor rules leave
    /// kernel-weight-sized discontinuities near the jump loci, which the
    /// profile avoids; the stored samples are forced monotone, so the
    /// interpolated map is monotone exactly.
    RadialProfile { r_grid: Vec<f64>, values: Vec<f64> },
}

/// Single-valued, continuous, monotone approximation
/// `a_eps(x, xi) = integral of phi_eps(s) a(x, xi - s) ds`.
pub struct MollifiedMap {
    graph: MonotoneGraph,
    eps: f64,
    rule: MollRule,
}

impl MollifiedMap {
    fn new(graph: MonotoneGraph, eps: f64, quad_order: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::invalid("mollification width must be positive"));
        }
        if quad_order < 2 {
            return Err(Error::invalid("mollification quadrature order must be at least 2"));
        }
        let d = graph.dim;
        let use_split = d == 1;
        let rule = if use_split {
            let (n, w) = quad::gauss_legendre(quad_order);
            MollRule::SplitGauss { nodes: n, weights: w }
        } else if d == 2 && matches!(&graph.kind, Kind::Curve { radial: true, .. }) {
            let Kind::Curve { curve, .. } = &graph.kind else { unreachable!() };
            radial_profile_rule(curve, eps, quad_order)?
        } else {
            if d > 3 {
                return Err(Error::invalid("mollification supports d <= 3"));
            }
            let (n1, w1) = quad::gauss_legendre(quad_order);
            let mut offsets = Vec::new();
            let mut weights = Vec::new();
            let mut idx = vec![0usize; d];
            loop {
                let s: Vec<f64> = idx.iter().map(|&i| n1[i]).collect();
                let r2: f64 = s.iter().map(|a| a * a).sum();
                let k = bump(r2);
                if k > 0.0 {
                    let w: f64 = idx.iter().map(|&i| w1[i]).product();
                    offsets.extend_from_slice(&s);
                    weights.push(w * k);
                }
                let mut c = 0;
                loop {
                    idx[c] += 1;
                    if idx[c] < n1.len() {
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
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            MollRule::Tensor { offsets, weights }
        };
        Ok(MollifiedMap { graph, eps, rule })
    }

    pub fn width(&self) -> f64 {
        self.eps
    }

    pub fn graph(&self) -> &MonotoneGraph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.graph.dim
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let d = self.graph.dim;
        match &self.rule {
            MollRule::Tensor { offsets, weights } => {
                let mut acc = vec![0.0; d];
                let mut probe = vec![0.0; d];
                for (i, w) in weights.iter().enumerate() {
                    let s = &offsets[i * d..(i + 1) * d];
                    for c in 0..d {
                        probe[c] = xi[c] - self.eps * s[c];
                    }
                    let a = self.graph.selection(x, &probe);
                    for c in 0..d {
                        acc[c] += w * a[c];
                    }
                }
                acc
            }
            MollRule::RadialProfile { r_grid, values } => {
                let r = norm(xi);
                if r == 0.0 {
                    return vec![0.0; d];
                }
                let g = match r_grid.binary_search_by(|a| a.partial_cmp(&r).unwrap()) {
                    Ok(i) => values[i],
                    Err(i) if i >= r_grid.len() => {
                        // extend the final linear piece
                        let n = r_grid.len();
                        let slope = (values[n - 1] - values[n - 2]) / (r_grid[n - 1] - r_grid[n - 2]);
                        values[n - 1] + slope * (r - r_grid[n - 1])
                    }
                    Err(i) => {
                        let t = (r - r_grid[i - 1]) / (r_grid[i] - r_grid[i - 1]);
                        values[i - 1] + t * (values[i] - values[i - 1])
                    }
                };
                xi.iter().map(|z| z / r * g).collect()
            }
            MollRule::SplitGauss { nodes, weights } => {
                let t = xi[0];
                let inv = 1.0 / self.eps;
                // integrate a(s) phi_eps(t - s) over [t - eps, t + eps],
                // splitting at the curve breakpoints and at t
                let mut cuts = vec![t - self.eps, t, t + self.eps];
                if let Kind::Curve { curve, .. } = &self.graph.kind {
                    for &b in curve.breakpoint_args() {
                        if b > t - self.eps && b < t + self.eps {
                            cuts.push(b);
                        }
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cuts.dedup();
                let mut num = 0.0;
                let mut den = 0.0;
                for seg in cuts.windows(2) {
                    let (a, b) = (seg[0], seg[1]);
                    let mid = 0.5 * (a + b);
                    let half = 0.5 * (b - a);
                    for (z, w) in nodes.iter().zip(weights) {
                        let s = mid + half * z;
                        let u = (t - s) * inv;
                        let k = bump(u * u) * half * w;
                        if k > 0.0 {
                            num += k * self.graph.selection(x, &[s])[0];
                            den += k;
                        }
                    }
                }
                vec![num / den]
            }
        }
    }

    /// Margin of the width-uniform coercivity bound inherited from the
    /// graph witness: `a_eps . xi - c_A M - (c_A/2) conj M(a_eps) + m(x)
    /// + m2(2 min(eps,1) / c_A)`, nonnegative for valid witnesses.
    pub fn coercivity_margin(&self, x: &[f64], xi: &[f64], conj_density: usize) -> Result<f64> {
        let witness = self
            .graph
            .witness
            .as_ref()
            .ok_or_else(|| Error::invalid("coercivity margin requires a witness"))?;
        let m = &witness.growth;
        let (_, m2) = m
            .envelopes()
            .ok_or_else(|| Error::invalid("coercivity margin requires computed envelopes"))?;
        let a = self.eval(x, xi);
        let c = witness.c_a;
        let conj = m.conjugate_auto(x, &a, conj_density)?.value;
        let shift = m2.eval(2.0 * self.eps.min(1.0) / c);
        Ok(dot(&a, xi) - c * m.evaluate(x, xi) - 0.5 * c * conj + (witness.m)(x) + shift)
    }
}

/// Scalar profile of the mollified radial curve in the plane.
///
/// At the axis point `(r, 0)` the convolution reads, in polar coordinates
/// around the origin (where the curve's discontinuity circles live),
/// `g(r) = int_theta int_t phi_eps(|r e1 - t u|) rho(t) cos(theta) t dt
/// dtheta` over the chord of the kernel ball; the radial integral is split
/// at the curve breakpoints, so every piece is smooth.
fn radial_profile_rule(curve: &Curve1d, eps: f64, quad_order: usize) -> Result<MollRule> {
    let bp_max = curve
        .breakpoint_args()
        .iter()
        .fold(0.0f64, |m, &b| m.max(b.abs()));
    // dense where the profile bends, logarithmic tail beyond
    let feature = bp_max + 6.0 * eps;
    let dense_n = ((feature / (eps / 40.0)).ceil() as usize).clamp(64, 4000);
    let mut r_grid: Vec<f64> = (0..=dense_n)
        .map(|i| feature * i as f64 / dense_n as f64)
        .collect();
    let r_cap = 64.0 * (1.0 + bp_max);
    let mut t = feature.max(1e-8);
    while t < r_cap {
        t *= 1.02;
        r_grid.push(t);
    }
    let (gl_n, gl_w) = quad::gauss_legendre(quad_order.max(4));
    let (ang_n, ang_w) = quad::gauss_legendre((4 * quad_order).clamp(24, 64));
    let mut values = Vec::with_capacity(r_grid.len());
    for &r in &r_grid {
        if r == 0.0 {
            values.push(0.0);
            continue;
        }
        let theta_max = if r <= eps { std::f64::consts::PI } else { (eps / r).asin() };
        let mut num = 0.0;
        let mut den = 0.0;
        // three angular panels resolve the square-root chord endpoint
        let panels = [(0.0, 0.6), (0.6, 0.9), (0.9, 1.0)];
        for (a, b) in panels {
            let (ta, tb) = (a * theta_max, b * theta_max);
            for (zn, zw) in ang_n.iter().zip(&ang_w) {
                let theta = 0.5 * (ta + tb) + 0.5 * (tb - ta) * zn;
                let wth = 0.5 * (tb - ta) * zw;
                let disc = eps * eps - (r * theta.sin()).powi(2);
                if disc <= 0.0 {
                    continue;
                }
                let root = disc.sqrt();
                let t_lo = (r * theta.cos() - root).max(0.0);
                let t_hi = r * theta.cos() + root;
                if t_hi <= t_lo {
                    continue;
                }
                // split the chord at breakpoint circles
                let mut cuts = vec![t_lo, t_hi];
                for &bp in curve.breakpoint_args() {
                    if bp > t_lo && bp < t_hi {
                        cuts.push(bp);
                    }
                }
                cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                for seg in cuts.windows(2) {
                    let mid = 0.5 * (seg[0] + seg[1]);
                    let half = 0.5 * (seg[1] - seg[0]);
                    if half <= 0.0 {
                        continue;
                    }
                    for (tn, tw) in gl_n.iter().zip(&gl_w) {
                        let tt = mid + half * tn;
                        // |r e1 - t u|^2
                        let d2 = r * r + tt * tt - 2.0 * r * tt * theta.cos();
                        let k = bump(d2 / (eps * eps));
                        if k <= 0.0 {
                            continue;
                        }
                        let w = 2.0 * wth * half * tw * k * tt;
                        num += w * curve.select(tt) * theta.cos();
                        den += w;
                    }
                }
            }
        }
        values.push(if den > 0.0 { num / den } else { 0.0 });
    }
    // monotone samples make the interpolated map monotone exactly
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    Ok(MollRule::RadialProfile { r_grid, values })
}

/// `int_Omega int |a(x, v(x) - s) . s| phi_eps(s) ds dx` for a sampled
/// gradient field: the commutator defect of mollification, linear in eps.
pub fn commutator_integral(
    graph: &MonotoneGraph,
    eps: f64,
    quad_order: usize,
    field: &SampledField,
) -> Result<f64> {
    let d = graph.dim;
    if d > 3 {
        return Err(Error::invalid("commutator integral supports d <= 3"));
    }
    // normalized kernel nodes over the unit ball (tensor; the integrand is
    // an absolute value, so only moderate accuracy is available anyway)
    let (n1, w1) = quad::gauss_legendre(quad_order.max(12));
    let mut offsets: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let s: Vec<f64> = idx.iter().map(|&i| n1[i]).collect();
        let r2: f64 = s.iter().map(|a| a * a).sum();
        let k = bump(r2);
        if k > 0.0 {
            let w: f64 = idx.iter().map(|&i| w1[i]).product();
            offsets.extend_from_slice(&s);
            weights.push(w * k);
        }
        let mut c = 0;
        loop {
            idx[c] += 1;
            if idx[c] < n1.len() {
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
    let mass: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= mass);
    let mut total = 0.0;
    let mut probe = vec![0.0; d];
    for q in 0..field.len() {
        let x = field.point(q);
        let v = field.value(q);
        let mut inner = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let s = &offsets[i * d..(i + 1) * d];
            for c in 0..d {
                probe[c] = v[c] - eps * s[c];
            }
            let a = graph.selection(x, &probe);
            let pairing: f64 = a.iter().zip(s).map(|(ai, si)| ai * eps * si).sum();
            inner += w * pairing.abs();
        }
        total += field.weight(q) * inner;
    }
    Ok(total)
}

/// Dense Gaussian elimination with partial pivoting; returns None for a
/// numerically singular matrix. Sized for the tiny resolvent systems.
fn solve_dense(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            x.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= a[col * n + col];
        for r in 0..col {
            x[r] -= a[r * n + col] * x[col];
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nfunc::NFunction;

    fn x0(d: usize) -> Vec<f64> {
        vec![0.0; d]
    }

    #[test]
    fn selection_identity_and_sign() {
        let id = MonotoneGraph::identity(2);
        assert_eq!(id.selection(&x0(2), &[2.0, -1.0]), vec![2.0, -1.0]);
        let sg = MonotoneGraph::sign(1);
        assert_eq!(sg.selection(&x0(1), &[0.0]), vec![0.0]);
        assert_eq!(sg.selection(&x0(1), &[0.5]), vec![1.0]);
        assert_eq!(sg.selection(&x0(1), &[-0.5]), vec![-1.0]);
    }

    #[test]
    fn selection_power_law_matches_derivative() {
        // subdifferential of |xi|^3/3 at 2 is 4; check against finite
        // differences of the potential as an independent oracle
        let g = MonotoneGraph::power_law(1, 3.0, 1.0 / 3.0);
        let v = g.selection(&x0(1), &[2.0])[0];
        assert!((v - 4.0).abs() < 1e-4, "selection {v}");
        let j = |t: f64| t.abs().powi(3) / 3.0;
        let fd = (j(2.0 + 1e-5) - j(2.0 - 1e-5)) / 2e-5;
        assert!((v - fd).abs() < 1e-4);
    }

    #[test]
    fn minty_of_identity_is_zero() {
        let id = MonotoneGraph::identity(2);
        for nu in [[3.0, 1.0], [-0.4, 0.2]] {
            let p = id.minty(&x0(2), &nu, 1e-12).unwrap();
            assert!(norm(&p.mu) < 1e-12);
            assert!((p.xi[0] - nu[0] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn minty_of_sign_piecewise_formula() {
        let sg = MonotoneGraph::sign(1);
        let mu = |nu: f64| {
            if nu.abs() <= 1.0 {
                nu
            } else if nu > 1.0 {
                2.0 - nu
            } else {
                -2.0 - nu
            }
        };
        for i in 0..100 {
            let nu = -5.0 + 10.0 * i as f64 / 99.0;
            let p = sg.minty(&x0(1), &[nu], 1e-12).unwrap();
            assert!((p.mu[0] - mu(nu)).abs() < 1e-10, "nu={nu}");
        }
        let p = sg.minty(&x0(1), &[3.0], 1e-12).unwrap();
        assert!((p.mu[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn minty_is_one_lipschitz() {
        use rand::{Rng, SeedableRng};
        let graphs: Vec<MonotoneGraph> = vec![
            MonotoneGraph::identity(1),
            MonotoneGraph::sign(1),
            MonotoneGraph::power_law(1, 3.0, 1.0 / 3.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in &graphs {
            for _ in 0..1000 {
                let a = rng.gen_range(-20.0..20.0);
                let b = rng.gen_range(-20.0..20.0);
                let pa = g.minty(&x0(1), &[a], 1e-13).unwrap().mu[0];
                let pb = g.minty(&x0(1), &[b], 1e-13).unwrap().mu[0];
                assert!((pa - pb).abs() <= (a - b).abs() + 1e-9);
            }
        }
    }

    #[test]
    fn resolvent_point_lies_on_graph() {
        let g = MonotoneGraph::identity_plus_sign(1);
        for nu in [-3.0, -0.5, 0.0, 0.7, 4.2] {
            let p = g.minty(&x0(1), &[nu], 1e-12).unwrap();
            if let Kind::Curve { curve, .. } = &g.kind {
                assert!(curve.membership_gap(p.xi[0], p.eta[0]) < 1e-10);
            }
            assert!((p.xi[0] + p.eta[0] - nu).abs() < 1e-12);
        }
    }

    #[test]
    fn non_monotone_curve_rejected() {
        // eta = -xi for xi < 0 decreases; the constructor must refuse it
        let r = Curve1d::new(&[(-1.0, 1.0, 1.0), (0.0, 0.0, 0.0)], 0.0, 0.0);
        assert!(matches!(r, Err(Error::NotMonotone(_))));
    }

    #[test]
    fn mollified_linear_map_is_exact() {
        let id = MonotoneGraph::identity(2);
        let m = id.mollify(0.3, 8).unwrap();
        for xi in [[0.0, 0.0], [1.3, -0.2], [-4.0, 2.0]] {
            let v = m.eval(&x0(2), &xi);
            assert!((v[0] - xi[0]).abs() < 1e-12 && (v[1] - xi[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn mollified_sign_symmetry_and_bounds() {
        let sg = MonotoneGraph::sign(1);
        let m = sg.mollify(0.1, 8).unwrap();
        assert!(m.eval(&x0(1), &[0.0])[0].abs() < 1e-14);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..41 {
            let t = -0.2 + 0.01 * i as f64;
            let v = m.eval(&x0(1), &[t])[0];
            assert!(v.abs() <= 1.0 + 1e-12);
            assert!(v >= prev - 1e-12, "monotone in t");
            prev = v;
        }
    }

    #[test]
    fn mollified_sign_against_dense_riemann_oracle() {
        // midpoint Riemann with 1e4 cells; the jump at lambda = 0.05 falls
        // exactly on a cell boundary so the oracle is clean
        let eps = 0.1;
        let xi = 0.05;
        let n = 10_000;
        let c = bump_normalization(1);
        let h = 2.0 * eps / n as f64;
        let mut oracle = 0.0;
        for i in 0..n {
            let lam = -eps + (i as f64 + 0.5) * h;
            let phi = c / eps * bump((lam / eps) * (lam / eps));
            oracle += h * phi * (xi - lam).signum();
        }
        let sg = MonotoneGraph::sign(1);
        let m = sg.mollify(eps, 24).unwrap();
        let v = m.eval(&x0(1), &[xi])[0];
        assert!(v > 0.0 && v < 1.0);
        assert!((v - oracle).abs() < 1e-6, "split rule {v} vs oracle {oracle}");
    }

    #[test]
    fn mollified_map_monotone_on_pairs() {
        use rand::{Rng, SeedableRng};
        let sg = MonotoneGraph::sign(2);
        let m = sg.mollify(0.05, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let b = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let va = m.eval(&x0(2), &a);
            let vb = m.eval(&x0(2), &b);
            let pairing: f64 = (0..2).map(|c| (va[c] - vb[c]) * (a[c] - b[c])).sum();
            assert!(pairing >= -1e-12);
        }
    }

    #[test]
    fn mollified_map_is_continuous() {
        // finite-difference continuity at probes, including across the
        // jump locus and the origin of the radial extension
        let step = 1e-8;
        let g1 = MonotoneGraph::sign(1);
        let m1 = g1.mollify(0.05, 12).unwrap();
        for i in -40..40 {
            let t = 0.003 * i as f64;
            let a = m1.eval(&x0(1), &[t])[0];
            let b = m1.eval(&x0(1), &[t + step])[0];
            assert!((a - b).abs() < 1e-5, "1-D jump at t={t}");
        }
        let g2 = MonotoneGraph::identity_plus_sign(2);
        let m2 = g2.mollify(0.05, 8).unwrap();
        for i in 0..30 {
            let t = 0.004 * i as f64;
            let a = m2.eval(&x0(2), &[t, 0.7 * t]);
            let b = m2.eval(&x0(2), &[t + step, 0.7 * t]);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!(d < 1e-5, "2-D radial at t={t}: jump {d}");
        }
        assert!(MonotoneGraph::sign(1).mollify(0.1, 1).is_err());
    }

    #[test]
    fn mollification_converges_pointwise() {
        let sg = MonotoneGraph::sign(1);
        let probes: Vec<f64> = (1..=20).map(|i| 0.012 * i as f64).collect();
        let mut prev_err = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let m = sg.mollify(eps, 16).unwrap();
            let err = probes
                .iter()
                .map(|&t| (m.eval(&x0(1), &[t])[0] - 1.0).abs())
                .fold(0.0f64, f64::max);
            assert!(err <= prev_err + 1e-12, "errors must not grow as eps shrinks");
            prev_err = err;
        }
        assert!(prev_err < 1e-9);
    }

    #[test]
    fn a3_exact_duality_pairing() {
        let m = Arc::new(NFunction::quadratic(1));
        let g = MonotoneGraph::identity(1)
            .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, m).unwrap());
        let rep = g.coercivity_check(&[x0(1)], 500, 42).unwrap();
        assert!(rep.passed());
        assert!(rep.min_margin.abs() < 1e-7, "equality case, margin {}", rep.min_margin);
    }

    #[test]
    fn a3_flags_wrong_witness() {
        // A = 2 xi with M = |xi|^2/2 and c_A = 1 has margin -xi^2/2 < 0
        let m = Arc::new(NFunction::quadratic(1));
        let g = MonotoneGraph::linear(1, 2.0)
            .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, m).unwrap());
        let rep = g.coercivity_check(&[x0(1)], 500, 42).unwrap();
        assert!(!rep.passed());
        assert!(!rep.violations.is_empty());
    }

    #[test]
    fn a3_correct_witness_for_doubled_map() {
        // A = 2 xi with M = |xi|^2: pairing 2 xi^2 equals M + conj M exactly
        let m = Arc::new(NFunction::power(1, 2.0, 1.0));
        let g = MonotoneGraph::linear(1, 2.0)
            .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, m).unwrap());
        let rep = g.coercivity_check(&[x0(1)], 500, 42).unwrap();
        assert!(rep.passed(), "margin {}", rep.min_margin);
    }

    #[test]
    fn growth_bound_dominates_selection() {
        use rand::{Rng, SeedableRng};
        let m = Arc::new(NFunction::quadratic(1));
        m.ensure_default_envelopes(&[]).unwrap();
        let g = MonotoneGraph::identity(1)
            .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, m).unwrap());
        // at |xi| = 1 the bound must cover the actual |eta| = 1
        let b = g.growth_bound(&x0(1), &[1.0]).unwrap();
        assert!(b >= 1.0);
        let b0 = g.growth_bound(&x0(1), &[0.0]).unwrap();
        assert!(b0 >= 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let xi = [rng.gen_range(-6.0..6.0)];
            let eta = g.selection(&x0(1), &xi);
            let bound = g.growth_bound(&x0(1), &xi).unwrap();
            assert!(norm(&eta) <= bound + 1e-9);
        }
    }

    #[test]
    fn commutator_decays_linearly() {
        // fixed smooth gradient field v(x) = x on (0,1)
        let n = 50;
        let w = vec![1.0 / n as f64; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let v = x.clone();
        let field = SampledField::new(1, 1, x, v, w).unwrap();
        let g = MonotoneGraph::power_law(1, 3.0, 1.0 / 3.0);
        let mut vals = Vec::new();
        for eps in [0.1, 0.01, 0.001] {
            vals.push(commutator_integral(&g, eps, 12, &field).unwrap());
        }
        assert!(vals[1] < 0.2 * vals[0]);
        assert!(vals[2] < 0.2 * vals[1]);
        // roughly linear: I(eps)/eps stays within a factor of 4
        let r0 = vals[0] / 0.1;
        let r2 = vals[2] / 0.001;
        assert!(r2 < 4.0 * r0 && r0 < 4.0 * r2, "ratios {r0} {r2}");
    }

    #[test]
    fn epsilon_coercivity_margin_nonnegative() {
        use rand::{Rng, SeedableRng};
        let m = Arc::new(NFunction::quadratic(1));
        m.ensure_default_envelopes(&[]).unwrap();
        let g = MonotoneGraph::identity(1)
            .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, m).unwrap());
        let map = g.mollify(0.1, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let xi = [rng.gen_range(-5.0..5.0)];
            let margin = map.coercivity_margin(&x0(1), &xi, 41).unwrap();
            assert!(margin >= -1e-8, "margin {margin} at xi {}", xi[0]);
        }
    }
}
