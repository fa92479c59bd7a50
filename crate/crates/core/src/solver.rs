//! The continuation scheme: solve the regularized problems along a
//! decreasing schedule, warm-starting each solve from the previous one, and
//! compute the diagnostics that make the regularization route checkable at
//! finite dimension — truncation energy tables, flux decay through level
//! bands, the renormalized identity residual, monotonicity gaps,
//! cross-scheme agreement, and the supremum bound comparison.
//!
//! One parameter drives both regularizations (datum truncation at `1/eps`
//! and graph mollification width `eps`); an override decouples them for
//! width-robustness studies.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_jacobian, assemble_residual, load_vector, modular_energy, Datum, FeFunction, Mesh,
};
use crate::monotone::{MollifiedMap, MonotoneGraph};
use crate::nfunc::NFunction;
use crate::rearrange::{
    bound_from_nfunction, BoundReport, DiamondGrid, RearrangementProfile,
};
use crate::sparse;

#[derive(Debug, Clone)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { ax: f64, bx: f64, ay: f64, by: f64 },
    Disk { radius: f64 },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn mesh(&self, h: f64) -> Result<Arc<Mesh>> {
        match *self {
            Domain::Interval { a, b } => Mesh::interval(a, b, h),
            Domain::Rectangle { ax, bx, ay, by } => Mesh::rectangle(ax, bx, ay, by, h),
            Domain::Disk { radius } => Mesh::disk(radius, h),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonCfg {
    /// Residual max-norm target; defaults to 1e-10 in 1-D and 1e-8 in 2-D.
    pub tol: Option<f64>,
    pub max_outer: usize,
    pub picard_sweeps: usize,
}

impl Default for NewtonCfg {
    fn default() -> Self {
        NewtonCfg { tol: None, max_outer: 50, picard_sweeps: 200 }
    }
}

impl NewtonCfg {
    fn tol_for(&self, dim: usize) -> f64 {
        self.tol.unwrap_or(if dim == 1 { 1e-10 } else { 1e-8 })
    }
}

/// Problem description: domain, flux law, growth, datum, and schedule.
#[derive(Clone)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub h: f64,
    pub graph: MonotoneGraph,
    pub growth: Arc<NFunction>,
    pub datum: Datum,
    pub eps_schedule: Vec<f64>,
    pub newton: NewtonCfg,
    pub trunc_levels: Vec<f64>,
    pub moll_order: usize,
    /// Fixed datum truncation parameter (the schedule then only drives the
    /// mollification width).
    pub datum_eps_override: Option<f64>,
    pub seed: u64,
    /// Accept a failing coercivity check (recorded, not silent).
    pub force: bool,
}

impl ProblemSpec {
    pub fn new(
        domain: Domain,
        h: f64,
        graph: MonotoneGraph,
        growth: Arc<NFunction>,
        datum: Datum,
    ) -> Self {
        ProblemSpec {
            domain,
            h,
            graph,
            growth,
            datum,
            eps_schedule: vec![1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001],
            newton: NewtonCfg::default(),
            trunc_levels: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            moll_order: 8,
            datum_eps_override: None,
            seed: 42,
            force: false,
        }
    }

    pub fn with_schedule(mut self, eps: Vec<f64>) -> Self {
        self.eps_schedule = eps;
        self
    }

    pub fn with_trunc_levels(mut self, ks: Vec<f64>) -> Self {
        self.trunc_levels = ks;
        self
    }

    pub fn with_moll_order(mut self, order: usize) -> Self {
        self.moll_order = order;
        self
    }

    /// Schedule sanity plus the coercivity spot check on domain samples.
    pub fn validate(&self) -> Result<ValidationReport> {
        if self.eps_schedule.is_empty() {
            return Err(Error::invalid("empty continuation schedule"));
        }
        for w in self.eps_schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::invalid("continuation schedule must be strictly decreasing"));
            }
        }
        if !(*self.eps_schedule.last().unwrap() > 0.0) {
            return Err(Error::invalid("continuation parameters must be positive"));
        }
        let mesh = self.domain.mesh(self.h)?;
        let samples = domain_samples(&mesh, 64);
        let coercivity = self.graph.coercivity_check(&samples, 400, self.seed)?;
        if !coercivity.passed() && !self.force {
            return Err(Error::invalid(format!(
                "coercivity check failed (worst margin {:.3e}); set force to proceed",
                coercivity.min_margin
            )));
        }
        self.graph.check_monotonicity(&samples[..samples.len().min(4)], 64, self.seed)?;
        Ok(ValidationReport { coercivity })
    }
}

#[derive(Debug)]
pub struct ValidationReport {
    pub coercivity: crate::monotone::CoercivityReport,
}

fn domain_samples(mesh: &Arc<Mesh>, count: usize) -> Vec<Vec<f64>> {
    let n = mesh.cell_count();
    let stride = (n / count).max(1);
    (0..n)
        .step_by(stride)
        .map(|c| mesh.centroid(c).to_vec())
        .collect()
}

#[derive(Debug, Clone)]
pub struct EnergyRow {
    pub k: f64,
    pub grad_modular: f64,
    pub flux_conj_modular: f64,
}

#[derive(Debug, Clone)]
pub struct RadiationRow {
    pub k: f64,
    pub gamma: f64,
    pub majorant: f64,
}

/// Per-step record of the continuation.
pub struct EpsRecord {
    pub eps: f64,
    pub width: f64,
    pub datum_trunc: f64,
    pub u: FeFunction,
    pub newton_iters: usize,
    pub residual_norm: f64,
    pub energy: Vec<EnergyRow>,
    pub radiation: Vec<RadiationRow>,
}

#[derive(Debug, Clone)]
pub struct CauchyRow {
    pub from_eps: f64,
    pub to_eps: f64,
    pub l1_distance: f64,
    /// measure of {|u_next - u_prev| > delta} for delta in {1e-2, 1e-3}
    pub exceed_1e2: f64,
    pub exceed_1e3: f64,
}

pub struct SolveReport {
    pub mesh: Arc<Mesh>,
    pub records: Vec<EpsRecord>,
    pub cauchy: Vec<CauchyRow>,
    /// cellwise mollified flux at the final step, flattened dim-per-cell
    pub alpha: Vec<f64>,
    pub alpha_width: f64,
    pub moll_order: usize,
    /// worst and mean distance from the stored flux to the graph at the
    /// limit gradients
    pub membership_max: f64,
    pub membership_mean: f64,
}

impl SolveReport {
    pub fn limit(&self) -> &FeFunction {
        &self.records.last().expect("nonempty continuation").u
    }

    pub fn alpha_at(&self, cell: usize) -> &[f64] {
        let d = self.mesh.dim();
        &self.alpha[cell * d..(cell + 1) * d]
    }
}

/// Lumped L1 distance between two functions on the same mesh.
pub fn l1_distance(a: &FeFunction, b: &FeFunction) -> f64 {
    let lumped = a.mesh().lumped_measure();
    a.values()
        .iter()
        .zip(b.values())
        .zip(&lumped)
        .map(|((x, y), m)| m * (x - y).abs())
        .sum()
}

/// One regularized solve with its iteration record.
pub struct RegularizedSolve {
    pub u: FeFunction,
    pub iters: usize,
    pub residual_norm: f64,
    /// discrete energy `sum vol j(x, grad u) - load . u` at every accepted
    /// step, recorded for subdifferential graphs
    pub energy_history: Vec<f64>,
}

/// Solve one regularized problem by damped Newton with a Picard fallback.
pub fn solve_regularized(
    spec: &ProblemSpec,
    mesh: &Arc<Mesh>,
    eps: f64,
    warm: Option<&FeFunction>,
) -> Result<RegularizedSolve> {
    let width = eps;
    let datum_eps = spec.datum_eps_override.unwrap_or(eps);
    let aeps = spec.graph.mollify(width, spec.moll_order)?;
    let load = load_vector(mesh, &spec.datum, Some(1.0 / datum_eps))?;
    solve_with(spec, mesh, &aeps, &load, warm, eps)
}

fn solve_with(
    spec: &ProblemSpec,
    mesh: &Arc<Mesh>,
    aeps: &MollifiedMap,
    load: &[f64],
    warm: Option<&FeFunction>,
    eps: f64,
) -> Result<RegularizedSolve> {
    let tol = spec.newton.tol_for(mesh.dim());
    let mut u = warm.cloned().unwrap_or_else(|| FeFunction::zeros(mesh.clone()));
    let mut res = assemble_residual(aeps, &u, load);
    let mut rnorm = max_norm(&res);
    let mut iters = 0usize;
    let is_potential = spec
        .graph
        .potential_value(mesh.centroid(0), &vec![0.0; mesh.dim()])
        .is_some();
    let discrete_energy = |u: &FeFunction| -> f64 {
        let d = mesh.dim();
        let mut e = 0.0;
        for c in 0..mesh.cell_count() {
            let g = u.gradient(c);
            e += mesh.cell_volume(c)
                * spec.graph.potential_value(mesh.centroid(c), &g[..d]).unwrap_or(0.0);
        }
        e - load.iter().zip(u.values()).map(|(l, v)| l * v).sum::<f64>()
    };
    let mut energy_history = Vec::new();
    if is_potential {
        energy_history.push(discrete_energy(&u));
    }
    let n = mesh.interior_count();
    let lumped: Vec<f64> = {
        let all = mesh.lumped_measure();
        mesh.interior_vertices().iter().map(|&v| all[v]).collect()
    };
    while rnorm > tol && iters < spec.newton.max_outer {
        iters += 1;
        let mut jac = assemble_jacobian(aeps, &u, 1e-6);
        let asym = jac.symmetrize();
        let step = if mesh.dim() == 1 {
            sparse::solve_tridiagonal(&jac, &res)
                .map_err(|e| Error::Solve { eps, message: format!("linear solve: {e}") })?
        } else if asym < 1e-3 {
            let (s, rel) = sparse::cg(&jac, &res, None, 1e-12, 40 * (n as f64).sqrt() as usize + 800);
            if rel > 1e-6 {
                sparse::damped_jacobi(&jac, &res, Some(&s), 0.6, 400)
            } else {
                s
            }
        } else {
            sparse::damped_jacobi(&jac, &res, None, 0.5, 800)
        };
        // Armijo halving on the residual max-norm
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = u.clone();
            for (idx, &v) in mesh.interior_vertices().iter().enumerate() {
                cand.values_mut()[v] -= alpha * step[idx];
            }
            let cres = assemble_residual(aeps, &cand, load);
            let cnorm = max_norm(&cres);
            if cnorm < rnorm {
                u = cand;
                res = cres;
                rnorm = cnorm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // damped Picard sweeps on the lumped-preconditioned residual
            let mut tau = 0.5;
            let mut progressed = false;
            for _ in 0..spec.newton.picard_sweeps {
                let mut cand = u.clone();
                for (idx, &v) in mesh.interior_vertices().iter().enumerate() {
                    cand.values_mut()[v] -= tau * res[idx] / lumped[idx].max(1e-300);
                }
                let cres = assemble_residual(aeps, &cand, load);
                let cnorm = max_norm(&cres);
                if cnorm < rnorm {
                    u = cand;
                    res = cres;
                    rnorm = cnorm;
                    progressed = true;
                } else {
                    tau *= 0.5;
                    if tau < 1e-12 {
                        break;
                    }
                }
            }
            if !progressed {
                return Err(Error::Solve {
                    eps,
                    message: format!(
                        "Newton and Picard stagnated at residual {rnorm:.3e}; insert an intermediate continuation step"
                    ),
                });
            }
        }
        if is_potential {
            energy_history.push(discrete_energy(&u));
        }
    }
    if rnorm > tol {
        return Err(Error::Solve {
            eps,
            message: format!("residual {rnorm:.3e} above tolerance {tol:.1e} after {iters} steps"),
        });
    }
    Ok(RegularizedSolve { u, iters, residual_norm: rnorm, energy_history })
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Run the full continuation and collect every per-step table.
pub fn continuation(spec: &ProblemSpec) -> Result<SolveReport> {
    let mesh = spec.domain.mesh(spec.h)?;
    let d = mesh.dim();
    let mut records: Vec<EpsRecord> = Vec::with_capacity(spec.eps_schedule.len());
    let mut cauchy = Vec::new();
    let mut warm: Option<FeFunction> = None;
    for &eps in &spec.eps_schedule {
        let solved = solve_regularized(spec, &mesh, eps, warm.as_ref())?;
        let (u, iters, rnorm) = (solved.u, solved.iters, solved.residual_norm);
        let datum_eps = spec.datum_eps_override.unwrap_or(eps);
        let aeps = spec.graph.mollify(eps, spec.moll_order)?;
        let energy = energy_table(spec, &aeps, &u)?;
        let radiation = radiation_table(spec, &mesh, &aeps, &u, 1.0 / datum_eps)?;
        if let Some(prev) = &warm {
            let mut exceed = [0.0f64; 2];
            let lumped = mesh.lumped_measure();
            for v in 0..mesh.vertex_count() {
                let diff = (u.values()[v] - prev.values()[v]).abs();
                if diff > 1e-2 {
                    exceed[0] += lumped[v];
                }
                if diff > 1e-3 {
                    exceed[1] += lumped[v];
                }
            }
            cauchy.push(CauchyRow {
                from_eps: records.last().unwrap().eps,
                to_eps: eps,
                l1_distance: l1_distance(prev, &u),
                exceed_1e2: exceed[0],
                exceed_1e3: exceed[1],
            });
        }
        records.push(EpsRecord {
            eps,
            width: eps,
            datum_trunc: 1.0 / datum_eps,
            u: u.clone(),
            newton_iters: iters,
            residual_norm: rnorm,
            energy,
            radiation,
        });
        warm = Some(u);
    }
    // final flux field and its graph-membership defect
    let last = records.last().unwrap();
    let aeps = spec.graph.mollify(last.width, spec.moll_order)?;
    let mut alpha = Vec::with_capacity(mesh.cell_count() * d);
    let mut gap_max = 0.0f64;
    let mut gap_sum = 0.0;
    for c in 0..mesh.cell_count() {
        let g = last.u.gradient(c);
        let flux = aeps.eval(mesh.centroid(c), &g[..d]);
        let sel = spec.graph.selection(mesh.centroid(c), &g[..d]);
        let gap: f64 = flux
            .iter()
            .zip(&sel)
            .map(|(a, s)| (a - s) * (a - s))
            .sum::<f64>()
            .sqrt();
        gap_max = gap_max.max(gap);
        gap_sum += gap;
        alpha.extend_from_slice(&flux);
    }
    let width = last.width;
    let n_cells = mesh.cell_count() as f64;
    Ok(SolveReport {
        mesh,
        records,
        cauchy,
        alpha,
        alpha_width: width,
        moll_order: spec.moll_order,
        membership_max: gap_max,
        membership_mean: gap_sum / n_cells,
    })
}

fn energy_table(spec: &ProblemSpec, aeps: &MollifiedMap, u: &FeFunction) -> Result<Vec<EnergyRow>> {
    let mesh = u.mesh();
    let d = mesh.dim();
    let m = &spec.growth;
    let mut rows = Vec::with_capacity(spec.trunc_levels.len());
    for &k in &spec.trunc_levels {
        let tu = u.truncate(k);
        let grad_modular = modular_energy(m, &tu);
        let mut flux_conj = 0.0;
        for c in 0..mesh.cell_count() {
            let g = tu.gradient(c);
            let x = mesh.centroid(c);
            let flux = aeps.eval(x, &g[..d]);
            flux_conj += mesh.cell_volume(c) * m.conjugate_auto(x, &flux, 21)?.value;
        }
        rows.push(EnergyRow { k, grad_modular, flux_conj_modular: flux_conj });
    }
    Ok(rows)
}

fn radiation_table(
    spec: &ProblemSpec,
    mesh: &Arc<Mesh>,
    aeps: &MollifiedMap,
    u: &FeFunction,
    _trunc: f64,
) -> Result<Vec<RadiationRow>> {
    let d = mesh.dim();
    let witness_m = spec.graph.witness().map(|w| w.m.clone());
    let mut rows = Vec::with_capacity(spec.trunc_levels.len());
    for &k in &spec.trunc_levels {
        let mut gamma = 0.0;
        let mut band_m = 0.0;
        let mut above = vec![false; mesh.cell_count()];
        for c in 0..mesh.cell_count() {
            let uc = u.centroid_value(c).abs();
            if uc >= k {
                above[c] = true;
            }
            if uc > k && uc < k + 1.0 {
                let g = u.gradient(c);
                let x = mesh.centroid(c);
                let flux = aeps.eval(x, &g[..d]);
                let pairing: f64 = flux.iter().zip(&g[..d]).map(|(a, b)| a * b).sum();
                gamma += mesh.cell_volume(c) * pairing;
                if let Some(mf) = &witness_m {
                    band_m += mesh.cell_volume(c) * mf(x);
                }
            }
        }
        let tail_f = spec.datum.l1_norm_on(mesh, None, &above)?;
        rows.push(RadiationRow { k, gamma, majorant: tail_f + band_m });
    }
    Ok(rows)
}

/// Fitted constants of the truncation energy bound
/// `energy(k) <= C (|m|_1 + k |f|_1)` per continuation step.
#[derive(Debug, Clone)]
pub struct EnergyFit {
    pub per_eps: Vec<f64>,
    pub max_c: f64,
    /// relative spread (max - min) / max over the schedule
    pub spread: f64,
}

pub fn energy_estimates(spec: &ProblemSpec, report: &SolveReport) -> Result<EnergyFit> {
    let mesh = &report.mesh;
    let f_l1 = spec.datum.l1_norm(mesh, None)?;
    let m_l1: f64 = match spec.graph.witness() {
        Some(w) => (0..mesh.cell_count())
            .map(|c| mesh.cell_volume(c) * (w.m)(mesh.centroid(c)))
            .sum(),
        None => 0.0,
    };
    let mut per_eps = Vec::with_capacity(report.records.len());
    for rec in &report.records {
        let mut c_fit = 0.0f64;
        for row in &rec.energy {
            let denom = m_l1 + row.k * f_l1;
            if denom > 0.0 {
                c_fit = c_fit.max(row.grad_modular / denom).max(row.flux_conj_modular / denom);
            }
        }
        per_eps.push(c_fit);
    }
    let max_c = per_eps.iter().cloned().fold(0.0f64, f64::max);
    let min_c = per_eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if max_c > 0.0 { (max_c - min_c) / max_c } else { 0.0 };
    Ok(EnergyFit { per_eps, max_c, spread })
}

/// Structural checks on a radiation table.
#[derive(Debug, Clone)]
pub struct RadiationCheck {
    pub all_zero: bool,
    pub nonincreasing_within_10pct: bool,
    pub decay_ok: bool,
    pub majorant_ok: bool,
}

pub fn radiation_check(rows: &[RadiationRow]) -> RadiationCheck {
    let all_zero = rows.iter().all(|r| r.gamma.abs() < 1e-14);
    let mut noninc = true;
    for w in rows.windows(2) {
        if w[1].gamma > 1.10 * w[0].gamma + 1e-14 {
            noninc = false;
        }
    }
    let first = rows.first().map(|r| r.gamma).unwrap_or(0.0);
    let last = rows.last().map(|r| r.gamma).unwrap_or(0.0);
    let decay_ok = all_zero || last < 0.1 * first;
    let majorant_ok = rows.iter().all(|r| r.gamma <= r.majorant + 1e-10 * (1.0 + r.majorant));
    RadiationCheck { all_zero, nonincreasing_within_10pct: noninc, decay_ok, majorant_ok }
}

/// `| int alpha . grad(h_l(u) w) - int T f h_l(u) w |` with cellwise flux
/// and nodal interpolation of the windowed test function. The datum carries
/// the final truncation level of the report.
pub fn renormalized_residual(
    spec: &ProblemSpec,
    report: &SolveReport,
    level: f64,
    w: &FeFunction,
) -> Result<f64> {
    let mesh = &report.mesh;
    if !Arc::ptr_eq(w.mesh(), mesh) {
        return Err(Error::Mesh("test function lives on a different mesh".into()));
    }
    let u = report.limit();
    let h_l = |r: f64| ((level + 1.0 - r.abs()).max(0.0)).min(1.0);
    let nodal: Vec<f64> = u
        .values()
        .iter()
        .zip(w.values())
        .map(|(&uv, &wv)| h_l(uv) * wv)
        .collect();
    let v = FeFunction::from_nodal(mesh.clone(), nodal)?;
    let d = mesh.dim();
    let mut lhs = 0.0;
    for c in 0..mesh.cell_count() {
        let gv = v.gradient(c);
        let alpha = report.alpha_at(c);
        let pairing: f64 = alpha.iter().zip(&gv[..d]).map(|(a, b)| a * b).sum();
        lhs += mesh.cell_volume(c) * pairing;
    }
    let trunc = report.records.last().unwrap().datum_trunc;
    let load = load_vector(mesh, &spec.datum, Some(trunc))?;
    let rhs: f64 = load.iter().zip(v.values()).map(|(l, vv)| l * vv).sum();
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub min_gap: f64,
    pub min_scaled: f64,
}

/// Cellwise monotonicity gap `(alpha - a_eps(x, probe)) . (grad u - probe)`
/// over constant probe fields, against the same mollified map that
/// produced the stored flux.
pub fn monotonicity_gap(
    spec: &ProblemSpec,
    report: &SolveReport,
    probes: &[Vec<f64>],
) -> Result<GapReport> {
    if probes.is_empty() {
        return Err(Error::invalid("monotonicity gap needs probes"));
    }
    let mesh = &report.mesh;
    let d = mesh.dim();
    let aeps = spec.graph.mollify(report.alpha_width, report.moll_order)?;
    let u = report.limit();
    let mut min_gap = f64::INFINITY;
    let mut min_scaled = f64::INFINITY;
    for probe in probes {
        if probe.len() != d {
            return Err(Error::invalid("probe dimension mismatch"));
        }
        for c in 0..mesh.cell_count() {
            let g = u.gradient(c);
            let x = mesh.centroid(c);
            let a_probe = aeps.eval(x, probe);
            let alpha = report.alpha_at(c);
            let mut gap = 0.0;
            let mut scale = 1.0;
            for i in 0..d {
                let da = alpha[i] - a_probe[i];
                let dg = g[i] - probe[i];
                gap += da * dg;
                scale += da.abs() * dg.abs();
            }
            min_gap = min_gap.min(gap);
            min_scaled = min_scaled.min(gap / scale);
        }
    }
    Ok(GapReport { min_gap, min_scaled })
}

/// Seeded constant probe fields for the monotonicity-gap diagnostic.
pub fn default_probes(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct CrosscheckVariant {
    pub eps_schedule: Option<Vec<f64>>,
    pub moll_order: Option<usize>,
}

/// Run the base spec and a variant; for strictly monotone graphs the L1
/// distance between the limit candidates must be small.
pub fn uniqueness_crosscheck(spec: &ProblemSpec, variant: &CrosscheckVariant) -> Result<f64> {
    if variant.eps_schedule.is_none() && variant.moll_order.is_none() {
        return Err(Error::invalid("crosscheck variant is identical to the base run"));
    }
    if !spec.graph.strictly_monotone() {
        return Err(Error::invalid("uniqueness crosscheck requires a strictly monotone graph"));
    }
    // sampled strictness: distinct points must pair strictly positively
    {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
        let d = spec.graph.dim();
        let x0 = vec![0.0; d];
        for _ in 0..200 {
            let xi: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let zeta: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let dist: f64 = xi.iter().zip(&zeta).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < 1e-8 {
                continue;
            }
            let g = spec.graph.selection(&x0, &xi);
            let h = spec.graph.selection(&x0, &zeta);
            let pairing: f64 = g
                .iter()
                .zip(&h)
                .zip(xi.iter().zip(&zeta))
                .map(|((a, b), (p, q))| (a - b) * (p - q))
                .sum();
            if pairing <= 0.0 {
                return Err(Error::NotMonotone(
                    "graph is not strictly monotone on samples".into(),
                ));
            }
        }
    }
    let base = continuation(spec)?;
    let mut alt = spec.clone();
    if let Some(s) = &variant.eps_schedule {
        alt.eps_schedule = s.clone();
    }
    if let Some(o) = variant.moll_order {
        alt.moll_order = o;
    }
    let other = continuation(&alt)?;
    Ok(l1_distance(base.limit(), other.limit()))
}

#[derive(Debug)]
pub struct BoundComparison {
    pub u_max: f64,
    pub bound: BoundReport,
    pub margin: f64,
}

/// Compare the computed maximum against the rearrangement-based bound.
pub fn bound_comparison(
    spec: &ProblemSpec,
    report: &SolveReport,
    grid: &DiamondGrid,
    lambda: Option<f64>,
) -> Result<BoundComparison> {
    let mesh = &report.mesh;
    if mesh.dim() < 2 {
        return Err(Error::invalid("the supremum bound machinery needs d >= 2"));
    }
    let witness = spec
        .graph
        .witness()
        .ok_or_else(|| Error::invalid("bound comparison requires a coercivity witness"))?;
    let profile = datum_profile(&spec.datum, mesh)?;
    let m_sup = (0..mesh.cell_count())
        .map(|c| (witness.m)(mesh.centroid(c)))
        .fold(0.0f64, f64::max);
    let xs = domain_samples(mesh, 128);
    let bound = bound_from_nfunction(
        &spec.growth,
        &xs,
        &profile,
        witness.c_a,
        m_sup,
        lambda,
        grid,
    )?;
    let u_max = report.limit().max_abs();
    Ok(BoundComparison { u_max, margin: bound.total - u_max, bound })
}

/// Rearrangement profile of the datum over the mesh quadrature.
pub fn datum_profile(datum: &Datum, mesh: &Arc<Mesh>) -> Result<RearrangementProfile> {
    match datum {
        Datum::Nodal(vals) => {
            let lumped = mesh.lumped_measure();
            RearrangementProfile::new(vals, &lumped, (256, 512))
        }
        Datum::Fn { .. } => {
            let mut vs = Vec::new();
            let mut ws = Vec::new();
            datum.scan_for_profile(mesh, &mut |fx, w| {
                vs.push(fx.abs());
                ws.push(w);
            })?;
            RearrangementProfile::new(&vs, &ws, (256, 512))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone::CoercivityWitness;

    fn quadratic_witness(dim: usize) -> CoercivityWitness {
        CoercivityWitness::new(1.0, |_x| 0.0, Arc::new(NFunction::quadratic(dim))).unwrap()
    }

    fn torsion_1d(h: f64) -> ProblemSpec {
        let graph = MonotoneGraph::identity(1).with_witness(quadratic_witness(1));
        ProblemSpec::new(
            Domain::Interval { a: 0.0, b: 1.0 },
            h,
            graph,
            Arc::new(NFunction::quadratic(1)),
            Datum::constant(1.0),
        )
    }

    #[test]
    fn validate_catches_bad_schedule() {
        let mut spec = torsion_1d(0.25);
        spec.eps_schedule = vec![0.1, 0.1];
        assert!(spec.validate().is_err());
        spec.eps_schedule = vec![];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn torsion_1d_nodally_exact() {
        let spec = torsion_1d(1.0 / 64.0);
        let mesh = spec.domain.mesh(spec.h).unwrap();
        let u = solve_regularized(&spec, &mesh, 1.0, None).unwrap().u;
        let exact = |x: f64| 0.5 * x * (1.0 - x);
        for v in 0..mesh.vertex_count() {
            assert!((u.values()[v] - exact(mesh.vertex(v)[0])).abs() < 1e-10);
        }
        assert!((u.max_abs() - 0.125).abs() < 1e-10);
    }

    #[test]
    fn zero_datum_gives_zero_solution() {
        let mut spec = torsion_1d(1.0 / 32.0);
        spec.datum = Datum::constant(0.0);
        let report = continuation(&spec.clone().with_schedule(vec![0.1, 0.01])).unwrap();
        assert_eq!(report.limit().max_abs(), 0.0);
    }

    #[test]
    fn p_laplacian_1d_matches_exact_solution() {
        // -( |u'| u' )' = 1 on (-1, 1): u = (2/3)(1 - |x|^{3/2})
        let graph = MonotoneGraph::power_law(1, 3.0, 1.0 / 3.0).with_witness(
            CoercivityWitness::new(
                0.25,
                |_x| 0.0,
                Arc::new(NFunction::power(1, 1.5, 2.0 / 3.0 * 2.0f64.sqrt())),
            )
            .unwrap(),
        );
        let spec = ProblemSpec::new(
            Domain::Interval { a: -1.0, b: 1.0 },
            1.0 / 256.0,
            graph,
            Arc::new(NFunction::power(1, 3.0, 1.0 / 3.0)),
            Datum::constant(1.0),
        )
        .with_schedule(vec![0.01, 0.003, 0.001]);
        let report = continuation(&spec).unwrap();
        let u = report.limit();
        let mesh = &report.mesh;
        let exact = |x: f64| 2.0 / 3.0 * (1.0 - x.abs().powf(1.5));
        let mut err = 0.0f64;
        for v in 0..mesh.vertex_count() {
            err = err.max((u.values()[v] - exact(mesh.vertex(v)[0])).abs());
        }
        assert!(err <= 1e-3, "max error {err}");
    }

    #[test]
    fn continuation_identity_is_schedule_independent() {
        // truncation of a bounded datum saturates at 1/eps >= 1
        let spec = torsion_1d(1.0 / 32.0).with_schedule(vec![1.0, 0.5, 0.25]);
        let report = continuation(&spec).unwrap();
        for row in &report.cauchy {
            assert!(row.l1_distance < 1e-12);
            assert_eq!(row.exceed_1e2, 0.0);
            assert_eq!(row.exceed_1e3, 0.0);
        }
    }

    #[test]
    fn single_step_schedule() {
        let spec = torsion_1d(1.0 / 32.0).with_schedule(vec![0.5]);
        let report = continuation(&spec).unwrap();
        assert_eq!(report.records.len(), 1);
        assert!(report.cauchy.is_empty());
    }

    #[test]
    fn energy_table_saturates_for_bounded_solution() {
        let spec = torsion_1d(1.0 / 64.0)
            .with_schedule(vec![0.5, 0.25])
            .with_trunc_levels(vec![0.05, 0.1, 0.125, 0.2, 0.5]);
        let report = continuation(&spec).unwrap();
        let rows = &report.records.last().unwrap().energy;
        // saturation at k >= max u = 0.125
        let e_high: Vec<f64> = rows
            .iter()
            .filter(|r| r.k >= 0.125)
            .map(|r| r.grad_modular)
            .collect();
        for w in e_high.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
        // nonnegative entrywise and nondecreasing in k
        for w in rows.windows(2) {
            assert!(w[0].grad_modular >= 0.0 && w[0].flux_conj_modular >= 0.0);
            assert!(w[1].grad_modular >= w[0].grad_modular - 1e-14);
        }
    }

    #[test]
    fn energy_fit_zero_datum_convention() {
        let mut spec = torsion_1d(1.0 / 32.0).with_schedule(vec![0.5, 0.25]);
        spec.datum = Datum::constant(0.0);
        let report = continuation(&spec).unwrap();
        let fit = energy_estimates(&spec, &report).unwrap();
        assert_eq!(fit.max_c, 0.0);
        assert_eq!(fit.spread, 0.0);
    }

    #[test]
    fn energy_fit_stable_under_datum_doubling() {
        let spec = torsion_1d(1.0 / 64.0).with_schedule(vec![0.05, 0.01]);
        let report = energy_estimates(&spec, &continuation(&spec).unwrap()).unwrap();
        let mut spec2 = spec.clone();
        spec2.datum = Datum::constant(2.0);
        let report2 = energy_estimates(&spec2, &continuation(&spec2).unwrap()).unwrap();
        // the energy is quadratic in the datum for the identity graph,
        // the normalization linear: fitted constants scale by 2
        let ratio = report2.max_c / report.max_c;
        assert!((ratio - 2.0).abs() < 0.1 * 2.0, "ratio {ratio}");
    }

    #[test]
    fn radiation_zero_for_bounded_solution() {
        let spec = torsion_1d(1.0 / 64.0)
            .with_schedule(vec![0.5])
            .with_trunc_levels(vec![0.2, 0.5, 1.0]);
        let report = continuation(&spec).unwrap();
        let rows = &report.records[0].radiation;
        assert!(rows.iter().all(|r| r.gamma == 0.0));
        let check = radiation_check(rows);
        assert!(check.all_zero && check.majorant_ok);
    }

    #[test]
    fn renormalized_residual_examples() {
        let spec = torsion_1d(1.0 / 64.0).with_schedule(vec![0.5, 0.25]);
        let report = continuation(&spec).unwrap();
        // w = u itself, level above max|u|: reduces to the weak identity
        let r = renormalized_residual(&spec, &report, 1.0, report.limit()).unwrap();
        assert!(r < 1e-8, "residual {r}");
        let zero = FeFunction::zeros(report.mesh.clone());
        assert_eq!(renormalized_residual(&spec, &report, 1.0, &zero).unwrap(), 0.0);
    }

    #[test]
    fn monotonicity_gap_identity_nonnegative() {
        let spec = torsion_1d(1.0 / 64.0).with_schedule(vec![0.5, 0.25]);
        let report = continuation(&spec).unwrap();
        let probes: Vec<Vec<f64>> = (0..10).map(|i| vec![-1.0 + 0.2 * i as f64]).collect();
        let gap = monotonicity_gap(&spec, &report, &probes).unwrap();
        assert!(gap.min_gap >= -1e-14, "identity integrand is a square: {gap:?}");
    }

    #[test]
    fn crosscheck_identity_graph_exact() {
        let spec = torsion_1d(1.0 / 64.0).with_schedule(vec![1.0, 0.5]);
        let spec = ProblemSpec {
            graph: spec.graph.clone().mark_strictly_monotone(true),
            ..spec
        };
        let d = uniqueness_crosscheck(
            &spec,
            &CrosscheckVariant { eps_schedule: Some(vec![0.8, 0.4]), moll_order: None },
        )
        .unwrap();
        assert!(d < 1e-10, "distance {d}");
    }

    #[test]
    fn crosscheck_rejects_noop_variant() {
        let spec = torsion_1d(1.0 / 32.0);
        let err = uniqueness_crosscheck(
            &spec,
            &CrosscheckVariant { eps_schedule: None, moll_order: None },
        );
        assert!(err.is_err());
    }

    fn p3_spec(h: f64) -> ProblemSpec {
        let growth = Arc::new(NFunction::power(1, 3.0, 1.0 / 3.0));
        let graph = MonotoneGraph::power_law(1, 3.0, 1.0 / 3.0)
            .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, growth.clone()).unwrap());
        ProblemSpec::new(Domain::Interval { a: -1.0, b: 1.0 }, h, graph, growth, Datum::constant(1.0))
    }

    #[test]
    fn potential_solve_decreases_discrete_energy() {
        let spec = p3_spec(1.0 / 128.0);
        let mesh = spec.domain.mesh(spec.h).unwrap();
        let solved = solve_regularized(&spec, &mesh, 0.01, None).unwrap();
        assert!(solved.energy_history.len() >= 2);
        for w in solved.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "energy must not increase: {:?}", w);
        }
    }

    #[test]
    fn crosscheck_p3_schedules() {
        // both schedules end near zero width; the limits agree closely
        let spec = p3_spec(1.0 / 128.0)
            .with_schedule(vec![1.0, 0.1, 0.01]);
        let d = uniqueness_crosscheck(
            &spec,
            &CrosscheckVariant { eps_schedule: Some(vec![0.5, 0.05, 0.005]), moll_order: None },
        )
        .unwrap();
        assert!(d <= 2e-5, "distance {d}");
    }

    #[test]
    fn crosscheck_quadrature_orders_only() {
        let spec = p3_spec(1.0 / 128.0)
            .with_schedule(vec![1.0, 0.1, 0.01])
            .with_moll_order(6);
        let d = uniqueness_crosscheck(
            &spec,
            &CrosscheckVariant { eps_schedule: None, moll_order: Some(10) },
        )
        .unwrap();
        assert!(d <= 1e-4, "distance {d}");
    }

    #[test]
    fn width_robustness_at_fixed_datum_truncation() {
        // fixed datum truncation, varying mollification width: the limits
        // differ by at most a bounded multiple of the width
        let mut runs = Vec::new();
        for &width in &[1e-2, 1e-3, 1e-4] {
            let mut spec = p3_spec(1.0 / 128.0).with_schedule(vec![width]);
            spec.datum_eps_override = Some(1e-3);
            runs.push(continuation(&spec).unwrap());
        }
        let d01 = l1_distance(runs[0].limit(), runs[1].limit());
        let d12 = l1_distance(runs[1].limit(), runs[2].limit());
        let c0 = d01 / 1e-2;
        let c1 = d12 / 1e-3;
        assert!(c0 <= 1.0 && c1 <= 1.0, "fitted width constants {c0} {c1}");
    }

    #[test]
    fn singular_datum_l1_differences_decrease() {
        let growth = Arc::new(NFunction::quadratic(2));
        let graph = MonotoneGraph::identity(2)
            .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, growth.clone()).unwrap());
        let datum = Datum::from_fn(|x: &[f64]| (x[0] * x[0] + x[1] * x[1]).powf(-0.75))
            .with_singularities(vec![vec![0.0, 0.0]]);
        let spec = ProblemSpec::new(Domain::Disk { radius: 1.0 }, 1.0 / 24.0, graph, growth, datum)
            .with_schedule(vec![1.0, 0.1, 0.01, 0.001])
            .with_trunc_levels(vec![1.0, 2.0, 4.0]);
        let report = continuation(&spec).unwrap();
        assert_eq!(report.cauchy.len(), 3);
        for w in report.cauchy.windows(2) {
            assert!(
                w[1].l1_distance < w[0].l1_distance,
                "successive L1 differences must decrease: {:?}",
                report.cauchy.iter().map(|c| c.l1_distance).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn heterogeneous_growth_bound_through_minorant() {
        use crate::rearrange::{DiamondGrid, SublevelBudget};
        // x-dependent quadratic weight in [1, 2]: the identity graph pairs
        // against it with c_A = 0.8 since w/2 + 1/(2w) <= 1.25 on [1, 2]
        let growth = Arc::new(NFunction::custom(2, "weighted-quad", false, |x, xi| {
            let w = 1.0 + (x[0] * x[0] + x[1] * x[1]).min(1.0);
            0.5 * w * (xi[0] * xi[0] + xi[1] * xi[1])
        }));
        let graph = MonotoneGraph::identity(2)
            .with_witness(CoercivityWitness::new(0.8, |_x| 0.0, growth.clone()).unwrap());
        let spec = ProblemSpec::new(
            Domain::Disk { radius: 1.0 },
            1.0 / 12.0,
            graph,
            growth,
            Datum::constant(1.0),
        )
        .with_schedule(vec![0.5, 0.25])
        .with_trunc_levels(vec![0.1, 0.2]);
        spec.validate().unwrap();
        let report = continuation(&spec).unwrap();
        let grid = DiamondGrid {
            per_decade: 40,
            directions: 32,
            profile_samples: 1200,
            budget: SublevelBudget { base: 128, refine_passes: 2, mc_samples: 10_000 },
            ..Default::default()
        };
        let cmp = bound_comparison(&spec, &report, &grid, None).unwrap();
        assert!(cmp.bound.finite);
        // the minorant is the unweighted quadratic and the witness constant
        // scales the chain: bound ~ 0.5 / c_A = 0.625
        assert!((cmp.bound.total - 0.625).abs() < 0.02, "bound {}", cmp.bound.total);
        assert!(cmp.margin >= 0.0, "margin {}", cmp.margin);
    }

    #[test]
    fn nodal_datum_solve_matches_callback_datum() {
        let mesh_probe = Domain::Interval { a: 0.0, b: 1.0 }.mesh(1.0 / 32.0).unwrap();
        let nodal: Vec<f64> = (0..mesh_probe.vertex_count())
            .map(|v| 1.0 + mesh_probe.vertex(v)[0])
            .collect();
        let mut spec_nodal = torsion_1d(1.0 / 32.0).with_schedule(vec![0.5]);
        spec_nodal.datum = Datum::Nodal(nodal);
        let mut spec_fn = torsion_1d(1.0 / 32.0).with_schedule(vec![0.5]);
        spec_fn.datum = Datum::from_fn(|x| 1.0 + x[0]);
        let a = continuation(&spec_nodal).unwrap();
        let b = continuation(&spec_fn).unwrap();
        // both loads are exact for an affine datum
        assert!(l1_distance(a.limit(), b.limit()) < 1e-13);
    }

    #[test]
    fn bound_scales_with_datum() {
        use crate::rearrange::{DiamondGrid, SublevelBudget};
        let grid = DiamondGrid {
            per_decade: 40,
            budget: SublevelBudget { base: 128, refine_passes: 2, mc_samples: 10_000 },
            ..Default::default()
        };
        let mut results = Vec::new();
        for &scale in &[1.0, 2.0] {
            let growth = Arc::new(NFunction::quadratic(2));
            let graph = MonotoneGraph::identity(2)
                .with_witness(CoercivityWitness::new(1.0, |_x| 0.0, growth.clone()).unwrap());
            let spec = ProblemSpec::new(
                Domain::Disk { radius: 1.0 },
                1.0 / 16.0,
                graph,
                growth,
                Datum::constant(scale),
            )
            .with_schedule(vec![0.5, 0.25])
            .with_trunc_levels(vec![0.2, 0.4]);
            let report = continuation(&spec).unwrap();
            let cmp = bound_comparison(&spec, &report, &grid, None).unwrap();
            assert!(cmp.margin >= 0.0, "margin {}", cmp.margin);
            results.push(cmp);
        }
        let u_ratio = results[1].u_max / results[0].u_max;
        let b_ratio = results[1].bound.second_term / results[0].bound.second_term;
        assert!((u_ratio - 2.0).abs() < 1e-6, "linear problem: u doubles, got {u_ratio}");
        assert!((b_ratio - 2.0).abs() < 1e-3, "bound second term doubles, got {b_ratio}");
    }
}
