//! Meshes, piecewise-linear finite-element functions with zero boundary
//! trace, truncation, and residual/Jacobian assembly for the regularized
//! problems.
//!
//! Elements are P1 with one-point quadrature for the flux term: the
//! gradient is exactly constant per cell, so the mollified flux at the
//! centroid is the natural discrete flux. Assembly is a deterministic
//! serial reduction in cell order, so outputs are bitwise reproducible.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::monotone::MollifiedMap;
use crate::nfunc::{NFunction, SampledField};
use crate::quad;
use crate::sparse::Csr;

/// Conforming simplicial mesh in one or two dimensions.
#[derive(Debug)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<f64>,
    cells: Vec<usize>,
    boundary: Vec<bool>,
    interior: Vec<usize>,
    interior_map: Vec<Option<usize>>,
    vol: Vec<f64>,
    grad: Vec<f64>,
    centroid: Vec<f64>,
}

impl Mesh {
    /// Uniform subdivision of an interval.
    pub fn interval(a: f64, b: f64, h: f64) -> Result<Arc<Mesh>> {
        if !(b > a) || !(h > 0.0) || h >= b - a {
            return Err(Error::Mesh("degenerate interval or resolution".into()));
        }
        let n = ((b - a) / h).round().max(1.0) as usize;
        let step = (b - a) / n as f64;
        let vertices: Vec<f64> = (0..=n).map(|i| a + step * i as f64).collect();
        let mut cells = Vec::with_capacity(2 * n);
        for i in 0..n {
            cells.push(i);
            cells.push(i + 1);
        }
        Mesh::finish(1, vertices, cells)
    }

    /// Structured triangulation of a rectangle; each grid square is split
    /// along a diagonal with checkerboard orientation.
    pub fn rectangle(ax: f64, bx: f64, ay: f64, by: f64, h: f64) -> Result<Arc<Mesh>> {
        if !(bx > ax && by > ay) || !(h > 0.0) {
            return Err(Error::Mesh("degenerate rectangle".into()));
        }
        let nx = ((bx - ax) / h).round().max(1.0) as usize;
        let ny = ((by - ay) / h).round().max(1.0) as usize;
        let hx = (bx - ax) / nx as f64;
        let hy = (by - ay) / ny as f64;
        let mut vertices = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(ax + hx * i as f64);
                vertices.push(ay + hy * j as f64);
            }
        }
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut cells = Vec::with_capacity(6 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                if (i + j) % 2 == 0 {
                    cells.extend_from_slice(&[a, b, c]);
                    cells.extend_from_slice(&[a, c, d]);
                } else {
                    cells.extend_from_slice(&[a, b, d]);
                    cells.extend_from_slice(&[b, c, d]);
                }
            }
        }
        Mesh::finish(2, vertices, cells)
    }

    /// Triangulation of the disk radius `r`: concentric rings with `6k`
    /// vertices on ring `k`, stitched by an angular merge walk. The boundary
    /// is the inscribed regular polygon; its area deficit relative to the
    /// true disk is `O(h^2)` and is visible through [`Mesh::volume`].
    pub fn disk(r: f64, h: f64) -> Result<Arc<Mesh>> {
        if !(r > 0.0) || !(h > 0.0) || h >= r {
            return Err(Error::Mesh("degenerate disk or resolution".into()));
        }
        let n = (r / h).ceil().max(2.0) as usize;
        let mut vertices = vec![0.0, 0.0];
        let mut ring_start = vec![0usize; n + 1];
        for k in 1..=n {
            ring_start[k] = vertices.len() / 2;
            let m = 6 * k;
            let rk = r * k as f64 / n as f64;
            for j in 0..m {
                let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                vertices.push(rk * th.cos());
                vertices.push(rk * th.sin());
            }
        }
        let mut cells = Vec::new();
        // innermost fan
        for j in 0..6 {
            cells.extend_from_slice(&[0, ring_start[1] + j, ring_start[1] + (j + 1) % 6]);
        }
        // annuli
        for k in 1..n {
            let (m_in, m_out) = (6 * k, 6 * (k + 1));
            let (s_in, s_out) = (ring_start[k], ring_start[k + 1]);
            let mut i = 0usize;
            let mut o = 0usize;
            while i < m_in || o < m_out {
                let next_in = (i + 1) as f64 / m_in as f64;
                let next_out = (o + 1) as f64 / m_out as f64;
                if o < m_out && (i == m_in || next_out <= next_in) {
                    cells.extend_from_slice(&[
                        s_in + i % m_in,
                        s_out + o % m_out,
                        s_out + (o + 1) % m_out,
                    ]);
                    o += 1;
                } else {
                    cells.extend_from_slice(&[
                        s_in + i % m_in,
                        s_out + o % m_out,
                        s_in + (i + 1) % m_in,
                    ]);
                    i += 1;
                }
            }
        }
        Mesh::finish(2, vertices, cells)
    }

    fn finish(dim: usize, vertices: Vec<f64>, mut cells: Vec<usize>) -> Result<Arc<Mesh>> {
        let npc = dim + 1;
        let ncell = cells.len() / npc;
        let nvert = vertices.len() / dim;
        let mut vol = Vec::with_capacity(ncell);
        let mut grad = Vec::with_capacity(ncell * npc * dim);
        let mut centroid = Vec::with_capacity(ncell * dim);
        for c in 0..ncell {
            let ids = &mut cells[c * npc..(c + 1) * npc];
            if dim == 1 {
                let (x0, x1) = (vertices[ids[0]], vertices[ids[1]]);
                let h = x1 - x0;
                if h <= 0.0 {
                    return Err(Error::Mesh("nonpositive cell length".into()));
                }
                vol.push(h);
                grad.push(-1.0 / h);
                grad.push(1.0 / h);
                centroid.push(0.5 * (x0 + x1));
            } else {
                let point = |i: usize| (vertices[2 * i], vertices[2 * i + 1]);
                let det_of = |ids: &[usize]| {
                    let (p0, p1, p2) = (point(ids[0]), point(ids[1]), point(ids[2]));
                    (p1.0 - p0.0) * (p2.1 - p0.1) - (p2.0 - p0.0) * (p1.1 - p0.1)
                };
                if det_of(ids) == 0.0 {
                    return Err(Error::Mesh("degenerate triangle".into()));
                }
                if det_of(ids) < 0.0 {
                    ids.swap(1, 2);
                }
                let det = det_of(ids);
                let (p0, p1, p2) = (point(ids[0]), point(ids[1]), point(ids[2]));
                vol.push(0.5 * det);
                // gradients of the barycentric basis functions
                grad.push((p1.1 - p2.1) / det);
                grad.push((p2.0 - p1.0) / det);
                grad.push((p2.1 - p0.1) / det);
                grad.push((p0.0 - p2.0) / det);
                grad.push((p0.1 - p1.1) / det);
                grad.push((p1.0 - p0.0) / det);
                centroid.push((p0.0 + p1.0 + p2.0) / 3.0);
                centroid.push((p0.1 + p1.1 + p2.1) / 3.0);
            }
        }
        // boundary detection by face counts; also the conformity check
        let mut boundary = vec![false; nvert];
        if dim == 1 {
            let mut touch = vec![0usize; nvert];
            for c in 0..ncell {
                touch[cells[2 * c]] += 1;
                touch[cells[2 * c + 1]] += 1;
            }
            for v in 0..nvert {
                if touch[v] == 1 {
                    boundary[v] = true;
                } else if touch[v] != 2 {
                    return Err(Error::Mesh("nonconforming interval mesh".into()));
                }
            }
        } else {
            use std::collections::HashMap;
            let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
            for c in 0..ncell {
                let ids = &cells[3 * c..3 * c + 3];
                for e in 0..3 {
                    let (a, b) = (ids[e], ids[(e + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    *edges.entry(key).or_insert(0) += 1;
                }
            }
            for (&(a, b), &count) in &edges {
                match count {
                    1 => {
                        boundary[a] = true;
                        boundary[b] = true;
                    }
                    2 => {}
                    _ => return Err(Error::Mesh("edge shared by more than two triangles".into())),
                }
            }
        }
        let mut interior = Vec::new();
        let mut interior_map = vec![None; nvert];
        for v in 0..nvert {
            if !boundary[v] {
                interior_map[v] = Some(interior.len());
                interior.push(v);
            }
        }
        Ok(Arc::new(Mesh {
            dim,
            vertices,
            cells,
            boundary,
            interior,
            interior_map,
            vol,
            grad,
            centroid,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.vol.len()
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertices[v * self.dim..(v + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let npc = self.dim + 1;
        &self.cells[c * npc..(c + 1) * npc]
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.vol[c]
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroid[c * self.dim..(c + 1) * self.dim]
    }

    /// Gradient of the local basis function `i` on cell `c`.
    pub fn basis_gradient(&self, c: usize, i: usize) -> &[f64] {
        let npc = self.dim + 1;
        let base = (c * npc + i) * self.dim;
        &self.grad[base..base + self.dim]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior
    }

    pub fn interior_index(&self, v: usize) -> Option<usize> {
        self.interior_map[v]
    }

    pub fn volume(&self) -> f64 {
        self.vol.iter().sum()
    }

    /// Row-sum lumped measure attached to each vertex.
    pub fn lumped_measure(&self) -> Vec<f64> {
        let npc = self.dim + 1;
        let mut m = vec![0.0; self.vertex_count()];
        for c in 0..self.cell_count() {
            let share = self.vol[c] / npc as f64;
            for &v in self.cell(c) {
                m[v] += share;
            }
        }
        m
    }
}

/// Continuous piecewise-linear function with zero boundary trace.
#[derive(Debug, Clone)]
pub struct FeFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.vertex_count();
        FeFunction { mesh, values: vec![0.0; n] }
    }

    /// Nodal values; boundary entries are forced to zero.
    pub fn from_nodal(mesh: Arc<Mesh>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::Mesh("nodal value count mismatch".into()));
        }
        for v in 0..values.len() {
            if mesh.is_boundary(v) {
                values[v] = 0.0;
            }
        }
        Ok(FeFunction { mesh, values })
    }

    /// Nodal interpolation of a callback, zero on the boundary.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Self {
        let vals: Vec<f64> = (0..mesh.vertex_count())
            .map(|v| if mesh.is_boundary(v) { 0.0 } else { f(mesh.vertex(v)) })
            .collect();
        FeFunction { mesh, values: vals }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn gradient(&self, c: usize) -> [f64; 2] {
        let mesh = &self.mesh;
        let mut g = [0.0; 2];
        for (i, &v) in mesh.cell(c).iter().enumerate() {
            let gb = mesh.basis_gradient(c, i);
            for d in 0..mesh.dim() {
                g[d] += self.values[v] * gb[d];
            }
        }
        g
    }

    /// Value at the centroid (the nodal average on a simplex).
    pub fn centroid_value(&self, c: usize) -> f64 {
        let ids = self.mesh.cell(c);
        ids.iter().map(|&v| self.values[v]).sum::<f64>() / ids.len() as f64
    }

    /// Nodal truncation: values clamped to [-k, k]. This is the nodal
    /// interpolant of the clamped function; the two differ on cells that
    /// cross the level, by O(h).
    pub fn truncate(&self, k: f64) -> FeFunction {
        assert!(k > 0.0, "truncation level must be positive");
        let values = self.values.iter().map(|&v| v.clamp(-k, k)).collect();
        FeFunction { mesh: self.mesh.clone(), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Lumped L1 norm.
    pub fn l1_norm(&self) -> f64 {
        self.mesh
            .lumped_measure()
            .iter()
            .zip(&self.values)
            .map(|(m, v)| m * v.abs())
            .sum()
    }

    /// The cellwise-constant gradient as a sampled field (centroids,
    /// gradients, cell volumes).
    pub fn gradient_field(&self) -> SampledField {
        let mesh = &self.mesh;
        let d = mesh.dim();
        let n = mesh.cell_count();
        let mut x = Vec::with_capacity(n * d);
        let mut v = Vec::with_capacity(n * d);
        let mut w = Vec::with_capacity(n);
        for c in 0..n {
            x.extend_from_slice(mesh.centroid(c));
            let g = self.gradient(c);
            v.extend_from_slice(&g[..d]);
            w.push(mesh.cell_volume(c));
        }
        SampledField::new(d, d, x, v, w).expect("gradient field is well-formed")
    }
}

/// Right-hand side datum: nodal values or a pointwise callback with an
/// optional list of singular points that trigger graded quadrature.
#[derive(Clone)]
pub enum Datum {
    Nodal(Vec<f64>),
    Fn {
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        singular_at: Vec<Vec<f64>>,
    },
}

impl Datum {
    pub fn constant(c: f64) -> Self {
        Datum::Fn { f: Arc::new(move |_| c), singular_at: Vec::new() }
    }

    pub fn from_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Datum::Fn { f: Arc::new(f), singular_at: Vec::new() }
    }

    pub fn with_singularities(self, pts: Vec<Vec<f64>>) -> Self {
        match self {
            Datum::Fn { f, .. } => Datum::Fn { f, singular_at: pts },
            other => other,
        }
    }

    /// L1 norm of the (optionally truncated) datum over the mesh.
    pub fn l1_norm(&self, mesh: &Arc<Mesh>, trunc: Option<f64>) -> Result<f64> {
        let clamp = |v: f64| match trunc {
            Some(k) => v.clamp(-k, k),
            None => v,
        };
        match self {
            Datum::Nodal(vals) => {
                if vals.len() != mesh.vertex_count() {
                    return Err(Error::Mesh("nodal datum length mismatch".into()));
                }
                Ok(mesh
                    .lumped_measure()
                    .iter()
                    .zip(vals)
                    .map(|(m, &v)| m * clamp(v).abs())
                    .sum())
            }
            Datum::Fn { .. } => {
                let mut total = 0.0;
                self.quadrature_scan(mesh, &mut |_phi, x, w, fx| {
                    let _ = x;
                    total += w * clamp(fx).abs();
                })?;
                Ok(total)
            }
        }
    }

    /// Integral of `|datum|` restricted to a cell subset (by flag).
    pub fn l1_norm_on(&self, mesh: &Arc<Mesh>, trunc: Option<f64>, keep: &[bool]) -> Result<f64> {
        let clamp = |v: f64| match trunc {
            Some(k) => v.clamp(-k, k),
            None => v,
        };
        match self {
            Datum::Nodal(vals) => {
                // lumped restriction by cell share
                let npc = mesh.dim() + 1;
                let mut total = 0.0;
                for c in 0..mesh.cell_count() {
                    if !keep[c] {
                        continue;
                    }
                    let share = mesh.cell_volume(c) / npc as f64;
                    for &v in mesh.cell(c) {
                        total += share * clamp(vals[v]).abs();
                    }
                }
                Ok(total)
            }
            Datum::Fn { .. } => {
                let mut total = 0.0;
                self.quadrature_scan_cells(mesh, keep, &mut |_phi, _x, w, fx| {
                    total += w * clamp(fx).abs();
                })?;
                Ok(total)
            }
        }
    }

    fn quadrature_scan(
        &self,
        mesh: &Arc<Mesh>,
        visit: &mut dyn FnMut(&[(usize, f64)], &[f64], f64, f64),
    ) -> Result<()> {
        let keep = vec![true; mesh.cell_count()];
        self.quadrature_scan_cells(mesh, &keep, visit)
    }

    /// Walk the load quadrature reporting `(datum value, weight)` pairs;
    /// callback data only.
    pub fn scan_for_profile(&self, mesh: &Arc<Mesh>, visit: &mut dyn FnMut(f64, f64)) -> Result<()> {
        self.quadrature_scan(mesh, &mut |_loc, _x, w, fx| visit(fx, w))
    }

    /// Walk the load quadrature over the flagged cells. `visit` receives the
    /// local basis weights, the point, the quadrature weight, and the raw
    /// datum value there.
    fn quadrature_scan_cells(
        &self,
        mesh: &Arc<Mesh>,
        keep: &[bool],
        visit: &mut dyn FnMut(&[(usize, f64)], &[f64], f64, f64),
    ) -> Result<()> {
        let Datum::Fn { f, singular_at } = self else {
            return Err(Error::invalid("quadrature scan needs a callback datum"));
        };
        let d = mesh.dim();
        for c in 0..mesh.cell_count() {
            if !keep[c] {
                continue;
            }
            let ids = mesh.cell(c);
            let verts: Vec<&[f64]> = ids.iter().map(|&v| mesh.vertex(v)).collect();
            let singular = singular_at.iter().any(|p| point_in_cell(d, &verts, p));
            if singular {
                // graded refinement toward the singular point
                scan_singular(d, ids, &verts, mesh.cell_volume(c), f, singular_at, 8, visit)?;
            } else {
                scan_plain(d, ids, &verts, mesh.cell_volume(c), f, visit)?;
            }
        }
        Ok(())
    }
}

fn scan_plain(
    d: usize,
    ids: &[usize],
    verts: &[&[f64]],
    vol: f64,
    f: &Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    visit: &mut dyn FnMut(&[(usize, f64)], &[f64], f64, f64),
) -> Result<()> {
    let mut point = [0.0f64; 2];
    let mut run = |bary: &[f64], w: f64| -> Result<()> {
        for k in 0..d {
            point[k] = bary.iter().zip(verts).map(|(b, v)| b * v[k]).sum();
        }
        let fx = f(&point[..d]);
        if !fx.is_finite() {
            return Err(Error::NonFinite(
                "datum evaluation (mark singular points with singular_at)".into(),
            ));
        }
        let loc: Vec<(usize, f64)> = ids.iter().cloned().zip(bary.iter().cloned()).collect();
        visit(&loc, &point[..d], w * vol, fx);
        Ok(())
    };
    if d == 1 {
        for (bary, w) in quad::seg_3() {
            run(&bary, w)?;
        }
    } else {
        for (bary, w) in quad::TRI_3 {
            run(&bary, w)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn scan_singular(
    d: usize,
    ids: &[usize],
    verts: &[&[f64]],
    vol: f64,
    f: &Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    singular_at: &[Vec<f64>],
    depth: usize,
    visit: &mut dyn FnMut(&[(usize, f64)], &[f64], f64, f64),
) -> Result<()> {
    // one simplex in barycentric coordinates relative to the parent cell
    type Bary = Vec<Vec<f64>>;
    let corners: Bary = (0..=d)
        .map(|i| (0..=d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let to_point = |bary: &[f64], out: &mut [f64]| {
        for k in 0..d {
            out[k] = bary.iter().zip(verts).map(|(b, v)| b * v[k]).sum();
        }
    };
    let mut stack: Vec<(Bary, usize)> = vec![(corners, depth)];
    let mut pt = [0.0f64; 2];
    while let Some((simplex, levels)) = stack.pop() {
        // does this sub-simplex touch a singular point?
        let mut touches = false;
        if levels > 0 {
            let phys: Vec<Vec<f64>> = simplex
                .iter()
                .map(|b| {
                    let mut p = [0.0f64; 2];
                    to_point(b, &mut p);
                    p[..d].to_vec()
                })
                .collect();
            let phys_refs: Vec<&[f64]> = phys.iter().map(|p| p.as_slice()).collect();
            touches = singular_at.iter().any(|p| point_in_cell(d, &phys_refs, p));
        }
        if touches {
            // split at edge midpoints; recurse only where needed
            let children = subdivide(d, &simplex);
            for ch in children {
                stack.push((ch, levels - 1));
            }
            continue;
        }
        // leaf: degree-5 rule in the sub-simplex
        let frac = simplex_fraction(d, &simplex);
        let sub_vol = vol * frac;
        let mut run = |loc_bary: &[f64], w: f64| -> Result<()> {
            // compose: barycentric in child -> barycentric in parent
            let parent_bary: Vec<f64> = (0..=d)
                .map(|j| loc_bary.iter().zip(&simplex).map(|(lb, cb)| lb * cb[j]).sum())
                .collect();
            to_point(&parent_bary, &mut pt);
            let fx = f(&pt[..d]);
            if !fx.is_finite() {
                return Err(Error::NonFinite("datum evaluation inside graded rule".into()));
            }
            let loc: Vec<(usize, f64)> =
                ids.iter().cloned().zip(parent_bary.iter().cloned()).collect();
            visit(&loc, &pt[..d], w * sub_vol, fx);
            Ok(())
        };
        if d == 1 {
            for (b, w) in quad::seg_3() {
                run(&b, w)?;
            }
        } else {
            for (b, w) in quad::tri_7() {
                run(&b, w)?;
            }
        }
    }
    Ok(())
}

fn subdivide(d: usize, simplex: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let mid = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
    };
    if d == 1 {
        let m = mid(&simplex[0], &simplex[1]);
        vec![
            vec![simplex[0].clone(), m.clone()],
            vec![m, simplex[1].clone()],
        ]
    } else {
        let m01 = mid(&simplex[0], &simplex[1]);
        let m12 = mid(&simplex[1], &simplex[2]);
        let m02 = mid(&simplex[0], &simplex[2]);
        vec![
            vec![simplex[0].clone(), m01.clone(), m02.clone()],
            vec![m01.clone(), simplex[1].clone(), m12.clone()],
            vec![m02.clone(), m12.clone(), simplex[2].clone()],
            vec![m01, m12, m02],
        ]
    }
}

fn simplex_fraction(d: usize, simplex: &[Vec<f64>]) -> f64 {
    // volume fraction of a sub-simplex given in parent barycentric
    // coordinates: determinant in the (lambda_1, .., lambda_d) chart
    if d == 1 {
        (simplex[1][1] - simplex[0][1]).abs()
    } else {
        let q = |i: usize| (simplex[i][1], simplex[i][2]);
        let (q0, q1, q2) = (q(0), q(1), q(2));
        ((q1.0 - q0.0) * (q2.1 - q0.1) - (q2.0 - q0.0) * (q1.1 - q0.1)).abs()
    }
}

fn point_in_cell(d: usize, verts: &[&[f64]], p: &[f64]) -> bool {
    let tol = 1e-12;
    if d == 1 {
        let (a, b) = (verts[0][0], verts[1][0]);
        let (lo, hi) = (a.min(b), a.max(b));
        p[0] >= lo - tol && p[0] <= hi + tol
    } else {
        let (p0, p1, p2) = (verts[0], verts[1], verts[2]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
        let l0 = 1.0 - l1 - l2;
        l0 >= -tol && l1 >= -tol && l2 >= -tol
    }
}

/// Load vector `int f phi_i` over all vertices; `trunc` clamps the datum.
pub fn load_vector(mesh: &Arc<Mesh>, datum: &Datum, trunc: Option<f64>) -> Result<Vec<f64>> {
    let clamp = |v: f64| match trunc {
        Some(k) => v.clamp(-k, k),
        None => v,
    };
    let mut load = vec![0.0; mesh.vertex_count()];
    match datum {
        Datum::Nodal(vals) => {
            if vals.len() != mesh.vertex_count() {
                return Err(Error::Mesh("nodal datum length mismatch".into()));
            }
            // exact P1 mass-matrix action on the clamped nodal field
            let npc = mesh.dim() + 1;
            for c in 0..mesh.cell_count() {
                let ids = mesh.cell(c);
                let vol = mesh.cell_volume(c);
                let scale = vol / ((npc * (npc + 1)) as f64);
                for (i, &vi) in ids.iter().enumerate() {
                    let mut s = 0.0;
                    for (j, &vj) in ids.iter().enumerate() {
                        let m = if i == j { 2.0 } else { 1.0 };
                        s += m * clamp(vals[vj]);
                    }
                    load[vi] += scale * s;
                }
            }
        }
        Datum::Fn { .. } => {
            datum.quadrature_scan(mesh, &mut |loc, _x, w, fx| {
                let fv = clamp(fx);
                for &(v, phi) in loc {
                    load[v] += w * fv * phi;
                }
            })?;
        }
    }
    Ok(load)
}

/// Residual over interior nodes: one-point flux quadrature minus the load.
pub fn assemble_residual(aeps: &MollifiedMap, u: &FeFunction, load: &[f64]) -> Vec<f64> {
    let mesh = u.mesh();
    let d = mesh.dim();
    let mut res = vec![0.0; mesh.interior_count()];
    for c in 0..mesh.cell_count() {
        let g = u.gradient(c);
        let flux = aeps.eval(mesh.centroid(c), &g[..d]);
        let vol = mesh.cell_volume(c);
        for (i, &v) in mesh.cell(c).iter().enumerate() {
            if let Some(idx) = mesh.interior_index(v) {
                let gb = mesh.basis_gradient(c, i);
                let mut s = 0.0;
                for k in 0..d {
                    s += flux[k] * gb[k];
                }
                res[idx] += vol * s;
            }
        }
    }
    for (idx, &v) in mesh.interior_vertices().iter().enumerate() {
        res[idx] -= load[v];
    }
    res
}

/// Residual against a datum (load assembled on the fly).
pub fn residual_with_datum(
    aeps: &MollifiedMap,
    u: &FeFunction,
    datum: &Datum,
    trunc: Option<f64>,
) -> Result<Vec<f64>> {
    let load = load_vector(u.mesh(), datum, trunc)?;
    Ok(assemble_residual(aeps, u, &load))
}

/// Jacobian of the residual over interior nodes by per-cell directional
/// finite differences of the mollified map.
pub fn assemble_jacobian(aeps: &MollifiedMap, u: &FeFunction, fd_step: f64) -> Csr {
    let mesh = u.mesh();
    let d = mesh.dim();
    let n = mesh.interior_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.cell_count() * 9);
    let mut dmat = [0.0f64; 4];
    for c in 0..mesh.cell_count() {
        let g = u.gradient(c);
        let x = mesh.centroid(c);
        let h = fd_step * (1.0 + (g[0] * g[0] + g[1] * g[1]).sqrt());
        for r in 0..d {
            let mut gp = g;
            let mut gm = g;
            gp[r] += h;
            gm[r] -= h;
            let fp = aeps.eval(x, &gp[..d]);
            let fm = aeps.eval(x, &gm[..d]);
            for s in 0..d {
                dmat[s * d + r] = (fp[s] - fm[s]) / (2.0 * h);
            }
        }
        let vol = mesh.cell_volume(c);
        let ids = mesh.cell(c);
        for (i, &vi) in ids.iter().enumerate() {
            let Some(row) = mesh.interior_index(vi) else { continue };
            let gi = mesh.basis_gradient(c, i);
            for (j, &vj) in ids.iter().enumerate() {
                let Some(colv) = mesh.interior_index(vj) else { continue };
                let gj = mesh.basis_gradient(c, j);
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += gi[a] * dmat[a * d + b] * gj[b];
                    }
                }
                triplets.push((row, colv, vol * s));
            }
        }
    }
    Csr::from_triplets(n, &mut triplets)
}

/// `sum_cells vol * M(x_c, grad u)`.
pub fn modular_energy(m: &NFunction, u: &FeFunction) -> f64 {
    let mesh = u.mesh();
    let d = mesh.dim();
    let mut sum = 0.0;
    for c in 0..mesh.cell_count() {
        let g = u.gradient(c);
        sum += mesh.cell_volume(c) * m.evaluate(mesh.centroid(c), &g[..d]);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone::MonotoneGraph;
    use crate::sparse;

    #[test]
    fn interval_counts() {
        let m = Mesh::interval(0.0, 1.0, 0.25).unwrap();
        assert_eq!(m.vertex_count(), 5);
        assert_eq!(m.cell_count(), 4);
        assert!(m.is_boundary(0) && m.is_boundary(4));
        assert_eq!(m.interior_count(), 3);
        assert!((m.volume() - 1.0).abs() < 1e-15);
        assert!(Mesh::interval(0.0, 1.0, 2.0).is_err());
        assert!(Mesh::interval(1.0, 0.0, 0.1).is_err());
        assert!(Mesh::disk(1.0, 1.5).is_err());
    }

    #[test]
    fn rectangle_counts() {
        let m = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(m.vertex_count(), 9);
        assert_eq!(m.cell_count(), 8);
        assert!((m.volume() - 1.0).abs() < 1e-14);
        assert_eq!(m.interior_count(), 1);
    }

    #[test]
    fn disk_area_within_one_percent() {
        let m = Mesh::disk(1.0, 0.1).unwrap();
        let deficit = (std::f64::consts::PI - m.volume()) / std::f64::consts::PI;
        assert!(deficit > 0.0 && deficit < 0.01, "deficit {deficit}");
        // boundary ring is the inscribed polygon
        let rmax = (0..m.vertex_count())
            .filter(|&v| m.is_boundary(v))
            .map(|v| {
                let p = m.vertex(v);
                (p[0] * p[0] + p[1] * p[1]).sqrt()
            })
            .fold(0.0f64, f64::max);
        assert!((rmax - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncate_clamps_and_is_idempotent() {
        let m = Mesh::interval(0.0, 1.0, 0.25).unwrap();
        let mut u = FeFunction::zeros(m);
        u.values_mut().copy_from_slice(&[0.0, 2.0, -3.0, 0.5, 0.0]);
        let t = u.truncate(1.0);
        assert_eq!(t.values(), &[0.0, 1.0, -1.0, 0.5, 0.0]);
        let tt = t.truncate(1.0);
        assert_eq!(tt.values(), t.values());
        let big = u.truncate(10.0);
        assert_eq!(big.values(), u.values());
    }

    #[test]
    fn residual_vanishes_for_1d_torsion() {
        // -u'' = 1 on (0,1): tridiagonal solve is the oracle
        let mesh = Mesh::interval(0.0, 1.0, 1.0 / 64.0).unwrap();
        let graph = MonotoneGraph::identity(1);
        let aeps = graph.mollify(0.01, 8).unwrap();
        let datum = Datum::constant(1.0);
        let load = load_vector(&mesh, &datum, None).unwrap();
        let u0 = FeFunction::zeros(mesh.clone());
        let jac = assemble_jacobian(&aeps, &u0, 1e-6);
        let b: Vec<f64> = mesh.interior_vertices().iter().map(|&v| load[v]).collect();
        let sol = sparse::solve_tridiagonal(&jac, &b).unwrap();
        let mut u = FeFunction::zeros(mesh.clone());
        for (idx, &v) in mesh.interior_vertices().iter().enumerate() {
            u.values_mut()[v] = sol[idx];
        }
        let res = assemble_residual(&aeps, &u, &load);
        let max = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(max < 1e-12, "residual {max}");
        // nodal exactness for this datum
        let exact = |x: f64| 0.5 * x * (1.0 - x);
        for &v in mesh.interior_vertices() {
            assert!((u.values()[v] - exact(mesh.vertex(v)[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_zero_for_zero_data() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 0.25).unwrap();
        let graph = MonotoneGraph::identity(2);
        let aeps = graph.mollify(0.01, 6).unwrap();
        let u = FeFunction::zeros(mesh.clone());
        let load = load_vector(&mesh, &Datum::constant(0.0), None).unwrap();
        let res = assemble_residual(&aeps, &u, &load);
        assert!(res.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn load_vector_is_linear_in_datum() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 0.25).unwrap();
        let f1 = Datum::from_fn(|x| x[0]);
        let f2 = Datum::from_fn(|x| 1.0 - x[1]);
        let fsum = Datum::from_fn(|x| x[0] + 1.0 - x[1]);
        let l1 = load_vector(&mesh, &f1, None).unwrap();
        let l2 = load_vector(&mesh, &f2, None).unwrap();
        let ls = load_vector(&mesh, &fsum, None).unwrap();
        for v in 0..mesh.vertex_count() {
            assert!((l1[v] + l2[v] - ls[v]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_hand_assembled_1d_stiffness() {
        let mesh = Mesh::interval(0.0, 1.0, 0.25).unwrap();
        let graph = MonotoneGraph::identity(1);
        let aeps = graph.mollify(0.01, 8).unwrap();
        let u = FeFunction::zeros(mesh);
        let jac = assemble_jacobian(&aeps, &u, 1e-6);
        // h = 1/4: diagonal 2/h = 8, off-diagonal -1/h = -4
        let d = jac.diagonal();
        assert!(d.iter().all(|&v| (v - 8.0).abs() < 1e-9));
        for r in 0..jac.n {
            for k in jac.row_ptr[r]..jac.row_ptr[r + 1] {
                if jac.col[k] != r {
                    assert!((jac.val[k] + 4.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn jacobian_symmetric_for_potential_map() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 1.0 / 6.0).unwrap();
        let graph = MonotoneGraph::power_law(2, 4.0, 0.25);
        let aeps = graph.mollify(0.05, 6).unwrap();
        let u = FeFunction::interpolate(mesh, |x| (3.0 * x[0]).sin() * x[1]);
        let mut jac = assemble_jacobian(&aeps, &u, 1e-5);
        let gap = jac.symmetrize();
        assert!(gap < 1e-4, "relative asymmetry {gap}");
    }

    #[test]
    fn jacobian_consistent_with_residual() {
        use rand::{Rng, SeedableRng};
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 0.25).unwrap();
        let graph = MonotoneGraph::power_law(2, 3.0, 1.0 / 3.0);
        let aeps = graph.mollify(0.05, 6).unwrap();
        let u = FeFunction::interpolate(mesh.clone(), |x| x[0] * (1.0 - x[0]) * x[1]);
        let load = load_vector(&mesh, &Datum::constant(1.0), None).unwrap();
        let r0 = assemble_residual(&aeps, &u, &load);
        let jac = assemble_jacobian(&aeps, &u, 1e-6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = mesh.interior_count();
        let delta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * 1e-5).collect();
        let mut u2 = u.clone();
        for (idx, &v) in mesh.interior_vertices().iter().enumerate() {
            u2.values_mut()[v] += delta[idx];
        }
        let r1 = assemble_residual(&aeps, &u2, &load);
        let mut jd = vec![0.0; n];
        jac.matvec(&delta, &mut jd);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (r1[i] - r0[i] - jd[i]).powi(2);
            den += (r1[i] - r0[i]).powi(2);
        }
        assert!(num.sqrt() <= 1e-4 * den.sqrt().max(1e-12), "first-order mismatch");
    }

    #[test]
    fn modular_energy_examples() {
        let m1 = Mesh::interval(0.0, 1.0, 0.25).unwrap();
        let quad1 = NFunction::power(1, 2.0, 1.0);
        let zero = FeFunction::zeros(m1.clone());
        assert_eq!(modular_energy(&quad1, &zero), 0.0);
        // full nodal ramp x has unit gradient but zero trace is enforced,
        // so build the ramp on the raw values instead
        let mut ramp = FeFunction::zeros(m1.clone());
        for v in 0..m1.vertex_count() {
            ramp.values_mut()[v] = m1.vertex(v)[0];
        }
        assert!((modular_energy(&quad1, &ramp) - 1.0).abs() < 1e-14);

        let m2 = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 0.25).unwrap();
        let quad2 = NFunction::power(2, 2.0, 1.0);
        let mut plane = FeFunction::zeros(m2.clone());
        for v in 0..m2.vertex_count() {
            plane.values_mut()[v] = m2.vertex(v)[0];
        }
        assert!((modular_energy(&quad2, &plane) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_gradient_structure() {
        let mesh = Mesh::interval(0.0, 1.0, 0.125).unwrap();
        let u = FeFunction::interpolate(mesh.clone(), |x| 4.0 * x[0] * (1.0 - x[0]));
        let k = 0.6;
        let t = u.truncate(k);
        for c in 0..mesh.cell_count() {
            let ids = mesh.cell(c);
            let all_below = ids.iter().all(|&v| u.values()[v].abs() < k);
            let all_above = ids.iter().all(|&v| u.values()[v].abs() > k);
            if all_below {
                assert!((t.gradient(c)[0] - u.gradient(c)[0]).abs() < 1e-14);
            }
            if all_above {
                assert_eq!(t.gradient(c)[0], 0.0);
            }
        }
    }

    #[test]
    fn discrete_poincare_constant_stable() {
        let mut constants = Vec::new();
        for &h in &[0.1, 0.05, 0.025] {
            let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, h).unwrap();
            let u = FeFunction::interpolate(mesh.clone(), |x| {
                (std::f64::consts::PI * x[0]).sin() * x[1] * (1.0 - x[1])
            });
            let l1 = u.l1_norm();
            let grad_l1: f64 = (0..mesh.cell_count())
                .map(|c| {
                    let g = u.gradient(c);
                    mesh.cell_volume(c) * (g[0] * g[0] + g[1] * g[1]).sqrt()
                })
                .sum();
            constants.push(l1 / grad_l1);
        }
        let cmax = constants.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cmin = constants.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(cmax / cmin < 1.2, "constants {constants:?}");
    }

    #[test]
    fn singular_datum_load_is_finite_and_accurate() {
        // f = |x|^{-3/2} on the unit disk: integral is 4 pi
        let mesh = Mesh::disk(1.0, 1.0 / 24.0).unwrap();
        let f = Datum::from_fn(|x| (x[0] * x[0] + x[1] * x[1]).powf(-0.75))
            .with_singularities(vec![vec![0.0, 0.0]]);
        let l1 = f.l1_norm(&mesh, None).unwrap();
        let exact = 4.0 * std::f64::consts::PI;
        assert!(
            (l1 - exact).abs() < 0.02 * exact,
            "l1 {l1} vs {exact} (mesh area {})",
            mesh.volume()
        );
        let load = load_vector(&mesh, &f, None).unwrap();
        assert!(load.iter().all(|v| v.is_finite()));
        // truncation reduces the mass towards |Omega|
        let l1t = f.l1_norm(&mesh, Some(1.0)).unwrap();
        assert!((l1t - mesh.volume()).abs() < 1e-9);
    }
}
