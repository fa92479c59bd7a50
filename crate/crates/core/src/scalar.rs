//! Piecewise-linear calculus for one-dimensional convex functions.
//!
//! Scalar envelopes, conjugates, and symmetrals are all represented as
//! piecewise-linear functions over explicit breakpoints. This family is
//! closed under the lower convex hull, the Legendre transform (breakpoints
//! and slopes trade places), and pointwise min/max, so every pipeline stage
//! stays exact once its input is sampled.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Piecewise-linear function on `[0, INF)` given by breakpoints with
/// strictly increasing abscissae. Beyond the last breakpoint the final
/// segment is extended; before the first the initial segment is extended.
#[derive(Debug, Clone)]
pub struct PlFn {
    s: Vec<f64>,
    v: Vec<f64>,
}

impl PlFn {
    pub fn new(s: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if s.len() != v.len() {
            return Err(Error::invalid("breakpoint abscissae/values length mismatch"));
        }
        if s.len() < 2 {
            return Err(Error::invalid("piecewise-linear function needs at least 2 breakpoints"));
        }
        for w in s.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid(format!(
                    "abscissae must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if s.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("piecewise-linear breakpoint".into()));
        }
        Ok(PlFn { s, v })
    }

    pub fn from_points(pts: &[(f64, f64)]) -> Result<Self> {
        let (s, v) = pts.iter().cloned().unzip();
        PlFn::new(s, v)
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.s.iter().cloned().zip(self.v.iter().cloned())
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> (f64, f64) {
        (self.s[0], self.v[0])
    }

    pub fn last(&self) -> (f64, f64) {
        (*self.s.last().unwrap(), *self.v.last().unwrap())
    }

    fn segment_slope(&self, i: usize) -> f64 {
        (self.v[i + 1] - self.v[i]) / (self.s[i + 1] - self.s[i])
    }

    pub fn tail_slope(&self) -> f64 {
        self.segment_slope(self.s.len() - 2)
    }

    /// Segment slopes, one per interval.
    pub fn slopes(&self) -> Vec<f64> {
        (0..self.s.len() - 1).map(|i| self.segment_slope(i)).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.s.len();
        let i = match self.s.binary_search_by(|a| a.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.v[i],
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let t = (x - self.s[i]) / (self.s[i + 1] - self.s[i]);
        self.v[i] + t * (self.v[i + 1] - self.v[i])
    }

    /// Whether segment slopes are nondecreasing within `tol`.
    pub fn is_convex(&self, tol: f64) -> bool {
        let sl = self.slopes();
        sl.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.v.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    /// Inverse of a nondecreasing function: smallest x with eval(x) >= y.
    /// Out-of-range queries extend the last (or first) linear piece.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let n = self.s.len();
        if y <= self.v[0] {
            let sl = self.segment_slope(0);
            if y == self.v[0] || sl <= 0.0 {
                return Ok(self.s[0]);
            }
            return Ok(self.s[0] + (y - self.v[0]) / sl);
        }
        for i in 0..n - 1 {
            if y <= self.v[i + 1] {
                let sl = self.segment_slope(i);
                if sl <= 0.0 {
                    return Ok(self.s[i + 1]);
                }
                return Ok(self.s[i] + (y - self.v[i]) / sl);
            }
        }
        let sl = self.tail_slope();
        if sl <= 0.0 {
            return Err(Error::invalid(format!(
                "cannot invert beyond a flat tail (y = {y})"
            )));
        }
        let (sx, sv) = self.last();
        Ok(sx + (y - sv) / sl)
    }

    /// Exact Legendre transform of a convex piecewise-linear function with
    /// f(0) = 0: the conjugate is piecewise linear with breakpoints at the
    /// slopes of `self` and slopes at the abscissae of `self`.
    pub fn conjugate(&self) -> Result<PlFn> {
        if !self.is_convex(1e-12) {
            return Err(Error::invalid("conjugate requires a convex piecewise-linear input"));
        }
        let sl = self.slopes();
        let mut t = Vec::with_capacity(self.s.len() + 1);
        let mut w = Vec::with_capacity(self.s.len() + 1);
        // On [0, sl[0]] the supremum sits at the first breakpoint.
        t.push(0.0);
        w.push(-self.v[0]);
        for (i, &slope) in sl.iter().enumerate() {
            let val = slope * self.s[i] - self.v[i];
            if let Some(&last) = t.last() {
                if slope <= last + 1e-300 {
                    // duplicate slope (collinear segments); keep one vertex
                    continue;
                }
            }
            t.push(slope);
            w.push(val);
        }
        // Tail: for t beyond the last slope the maximizer is the last
        // breakpoint, so the conjugate continues with slope s_last. Add one
        // explicit vertex so the tail slope is represented.
        let (sx, sv) = self.last();
        let t_last = *t.last().unwrap();
        t.push(t_last + 1.0);
        w.push((t_last + 1.0) * sx - sv);
        PlFn::new(t, w)
    }
}

/// Lower convex hull of a planar point set with strictly increasing
/// abscissae, by a monotone-chain sweep. Output vertices are a subset of the
/// input points.
pub fn lower_convex_hull(pts: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if pts.len() < 2 {
        return Err(Error::invalid("lower hull needs at least 2 points"));
    }
    for w in pts.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::invalid("lower hull abscissae must be strictly increasing"));
        }
    }
    if pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::NonFinite("lower hull sample".into()));
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // keep b only if it lies strictly below the chord a--p
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    Ok(hull)
}

#[derive(Clone)]
enum Repr {
    Pl(PlFn),
    Closed {
        tag: &'static str,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for ReprDebug<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Repr::Pl(p) => write!(f, "Pl({} pts)", p.len()),
            Repr::Closed { tag, .. } => write!(f, "Closed({tag})"),
        }
    }
}
struct ReprDebug<'a>(&'a Repr);

/// A one-dimensional convex, nondecreasing function with value 0 at 0:
/// the scalar growth envelopes and symmetral outputs of this crate.
#[derive(Clone)]
pub struct ScalarConvexFn {
    repr: Repr,
}

impl std::fmt::Debug for ScalarConvexFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarConvexFn({:?})", ReprDebug(&self.repr))
    }
}

impl ScalarConvexFn {
    /// Build from samples; validates convexity, monotonicity, and the
    /// zero-at-origin normalization.
    pub fn from_points(pts: &[(f64, f64)]) -> Result<Self> {
        let pl = PlFn::from_points(pts)?;
        Self::from_pl(pl)
    }

    pub fn from_pl(pl: PlFn) -> Result<Self> {
        if pl.first().0 != 0.0 {
            return Err(Error::invalid("scalar convex function must start at s = 0"));
        }
        if pl.first().1.abs() > 1e-12 {
            return Err(Error::invalid("scalar convex function must vanish at 0"));
        }
        if !pl.is_convex(1e-10) {
            return Err(Error::NotMonotone("slope sequence of scalar function decreases".into()));
        }
        if !pl.is_nondecreasing(1e-12) {
            return Err(Error::NotMonotone("scalar convex function must be nondecreasing".into()));
        }
        Ok(ScalarConvexFn { repr: Repr::Pl(pl) })
    }

    /// Closed-form representation; the caller asserts convexity.
    pub fn closed(tag: &'static str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarConvexFn {
            repr: Repr::Closed { tag, f: Arc::new(f) },
        }
    }

    pub fn power(p: f64, coeff: f64) -> Self {
        ScalarConvexFn::closed("power", move |s| coeff * s.powf(p))
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.repr {
            Repr::Pl(pl) => pl.eval(s),
            Repr::Closed { f, .. } => f(s),
        }
    }

    pub fn as_pl(&self) -> Option<&PlFn> {
        match &self.repr {
            Repr::Pl(pl) => Some(pl),
            Repr::Closed { .. } => None,
        }
    }

    /// Sample a closed form onto a grid (identity for PL representations).
    pub fn to_pl(&self, grid: &[f64]) -> Result<PlFn> {
        match &self.repr {
            Repr::Pl(pl) => Ok(pl.clone()),
            Repr::Closed { f, .. } => {
                let v: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
                PlFn::new(grid.to_vec(), v)
            }
        }
    }

    /// Exact conjugate for PL representations.
    pub fn conjugate(&self) -> Result<ScalarConvexFn> {
        match &self.repr {
            Repr::Pl(pl) => ScalarConvexFn::from_pl(pl.conjugate()?),
            Repr::Closed { .. } => Err(Error::invalid(
                "conjugate of a closed-form scalar function requires sampling first (to_pl)",
            )),
        }
    }

    /// Inverse (smallest preimage), extending the last linear piece.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        match &self.repr {
            Repr::Pl(pl) => pl.inverse(y),
            Repr::Closed { f, tag } => {
                // bracket then bisect
                if y <= 0.0 {
                    return Ok(0.0);
                }
                let mut hi = 1.0;
                let mut n = 0;
                while f(hi) < y {
                    hi *= 2.0;
                    n += 1;
                    if n > 200 {
                        return Err(Error::BracketingFailed {
                            doublings: n,
                            context: format!("inverse of closed-form {tag}"),
                        });
                    }
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }
}

/// Greatest convex minorant of sampled data on `[0, S]`: the lower convex
/// hull of the point set, returned as a piecewise-linear convex function.
/// Equals the double Legendre transform of the piecewise-linear interpolant.
pub fn greatest_convex_minorant(samples: &[(f64, f64)]) -> Result<ScalarConvexFn> {
    if samples.len() < 2 {
        return Err(Error::invalid("greatest convex minorant needs at least 2 samples"));
    }
    if samples[0].0 != 0.0 {
        return Err(Error::invalid("first abscissa must be 0"));
    }
    let hull = lower_convex_hull(samples)?;
    ScalarConvexFn::from_points(&hull)
}

/// Geometric grid on [lo, hi] with `n` points (lo > 0).
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Uniform grid on [lo, hi] with `n` points.
pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force greatest convex minorant over the sample set: at each
    /// query the minimum over all chords that span it.
    fn hull_oracle(samples: &[(f64, f64)], x: f64) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..samples.len() {
            for j in i..samples.len() {
                let (a, fa) = samples[i];
                let (b, fb) = samples[j];
                if i == j {
                    if a == x {
                        best = best.min(fa);
                    }
                    continue;
                }
                if a <= x && x <= b {
                    let t = (x - a) / (b - a);
                    let chord = fa + t * (fb - fa);
                    // a chord is admissible only if no sample lies below it
                    let admissible = samples.iter().all(|&(s, v)| {
                        if s < a || s > b {
                            return true;
                        }
                        let tv = fa + (s - a) / (b - a) * (fb - fa);
                        v >= tv - 1e-12
                    });
                    if admissible {
                        best = best.min(chord);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn hull_of_convex_samples_is_identity() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (0.5 * i as f64, (0.5 * i as f64).powi(2))).collect();
        let env = greatest_convex_minorant(&pts).unwrap();
        for &(s, v) in &pts {
            assert!((env.eval(s) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn hull_drops_interior_peak() {
        let pts = [(0.0, 0.0), (1.0, 2.0), (2.0, 1.0), (3.0, 3.0)];
        let env = greatest_convex_minorant(&pts).unwrap();
        let hull = env.as_pl().unwrap();
        let verts: Vec<(f64, f64)> = hull.breakpoints().collect();
        assert_eq!(verts, vec![(0.0, 0.0), (2.0, 1.0), (3.0, 3.0)]);
        assert!((env.eval(1.0) - 0.5).abs() < 1e-14);
        assert!((env.eval(1.0) - hull_oracle(&pts, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn hull_of_min_of_square_and_linear() {
        let pts: Vec<(f64, f64)> = (0..9)
            .map(|i| {
                let s = 0.25 * i as f64;
                (s, (s * s).min(s))
            })
            .collect();
        let env = greatest_convex_minorant(&pts).unwrap();
        assert!(env.eval(1.0) <= 1.0 + 1e-12);
        for &(s, _) in &pts {
            let oracle = hull_oracle(&pts, s);
            assert!((env.eval(s) - oracle).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn hull_rejects_bad_input() {
        assert!(greatest_convex_minorant(&[(0.0, 1.0)]).is_err());
        assert!(lower_convex_hull(&[(0.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn minorant_below_input_and_convex() {
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let s = 0.1 * i as f64;
                (s, s + (3.0 * s).sin().abs())
            })
            .collect();
        let env = greatest_convex_minorant(&pts).unwrap();
        for &(s, v) in &pts {
            assert!(env.eval(s) <= v + 1e-12);
        }
        assert!(env.as_pl().unwrap().is_convex(1e-12));
    }

    #[test]
    fn pl_conjugate_of_square_samples() {
        // m(s) = s^2 sampled; conjugate must approximate t^2/4 between slope nodes
        let grid = lin_grid(0.0, 4.0, 65);
        let pl = PlFn::new(grid.clone(), grid.iter().map(|s| s * s).collect()).unwrap();
        let conj = pl.conjugate().unwrap();
        for &t in &[0.5, 1.0, 2.0, 5.0] {
            let exact = t * t / 4.0;
            assert!((conj.eval(t) - exact).abs() < 6e-3, "t={t}: {} vs {exact}", conj.eval(t));
        }
    }

    #[test]
    fn pl_biconjugation_recovers_breakpoints() {
        let grid = lin_grid(0.0, 3.0, 13);
        let pl = PlFn::new(grid.clone(), grid.iter().map(|s| s * s * s).collect()).unwrap();
        let back = pl.conjugate().unwrap().conjugate().unwrap();
        for &s in &grid {
            assert!((back.eval(s) - pl.eval(s)).abs() < 1e-10, "s={s}");
        }
    }

    #[test]
    fn inverse_contract() {
        let pl = PlFn::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(pl.inverse(0.0).unwrap(), 0.0);
        assert!((pl.inverse(2.5).unwrap() - 1.5).abs() < 1e-14);
        // beyond range: extends final slope 3
        assert!((pl.inverse(7.0).unwrap() - 3.0).abs() < 1e-14);
    }
}
