//! Report artifacts: CSV tables and run directories.
//!
//! Contract: comma separator, header row, LF line endings, floats with 17
//! significant digits. Outputs are bitwise reproducible for a fixed
//! (config, seed, version) triple.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ellinc_core::fem::Mesh;
use ellinc_core::rearrange::{BoundReport, RearrangementProfile, SymmetralFn};
use ellinc_core::solver::{EnergyFit, GapReport, RadiationCheck, SolveReport};

/// 17 significant digits, the round-trip format for f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn solution_csv(report: &SolveReport, step: usize) -> String {
    let mesh = &report.mesh;
    let u = &report.records[step].u;
    let mut out = String::new();
    if mesh.dim() == 1 {
        out.push_str("vertex,x,u\n");
        for v in 0..mesh.vertex_count() {
            let p = mesh.vertex(v);
            let _ = writeln!(out, "{v},{},{}", fmt17(p[0]), fmt17(u.values()[v]));
        }
    } else {
        out.push_str("vertex,x,y,u\n");
        for v in 0..mesh.vertex_count() {
            let p = mesh.vertex(v);
            let _ = writeln!(out, "{v},{},{},{}", fmt17(p[0]), fmt17(p[1]), fmt17(u.values()[v]));
        }
    }
    out
}

pub fn mesh_text(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dimension {}", mesh.dim());
    let _ = writeln!(out, "vertices {}", mesh.vertex_count());
    for v in 0..mesh.vertex_count() {
        let p = mesh.vertex(v);
        let coords: Vec<String> = p.iter().map(|&c| fmt17(c)).collect();
        let b = if mesh.is_boundary(v) { 1 } else { 0 };
        let _ = writeln!(out, "{v} {} {b}", coords.join(" "));
    }
    let _ = writeln!(out, "cells {}", mesh.cell_count());
    for c in 0..mesh.cell_count() {
        let ids: Vec<String> = mesh.cell(c).iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{c} {}", ids.join(" "));
    }
    out
}

pub fn energy_csv(report: &SolveReport) -> String {
    let mut out = String::from("eps,k,grad_modular,flux_conj_modular\n");
    for rec in &report.records {
        for row in &rec.energy {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt17(rec.eps),
                fmt17(row.k),
                fmt17(row.grad_modular),
                fmt17(row.flux_conj_modular)
            );
        }
    }
    out
}

pub fn radiation_csv(report: &SolveReport) -> String {
    let mut out = String::from("eps,k,gamma,majorant\n");
    for rec in &report.records {
        for row in &rec.radiation {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt17(rec.eps),
                fmt17(row.k),
                fmt17(row.gamma),
                fmt17(row.majorant)
            );
        }
    }
    out
}

pub fn cauchy_csv(report: &SolveReport) -> String {
    let mut out = String::from("from_eps,to_eps,l1_distance,exceed_1e-2,exceed_1e-3\n");
    for row in &report.cauchy {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt17(row.from_eps),
            fmt17(row.to_eps),
            fmt17(row.l1_distance),
            fmt17(row.exceed_1e2),
            fmt17(row.exceed_1e3)
        );
    }
    out
}

pub fn bound_csv(bound: &BoundReport, c_a: f64) -> String {
    let mut out = String::from("first_term,second_term,total,lambda,c_A,integrable,integral_value,integrand_exponent\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        fmt17(bound.first_term),
        fmt17(bound.second_term),
        fmt17(bound.total),
        fmt17(bound.lambda),
        fmt17(c_a),
        bound.finite,
        fmt17(bound.integrability.value),
        fmt17(bound.integrability.fitted_exponent)
    );
    out
}

pub fn profile_mu_csv(p: &RearrangementProfile) -> String {
    let mut out = String::from("t,mu\n");
    for (t, mu) in p.t_grid.iter().zip(&p.mu) {
        let _ = writeln!(out, "{},{}", fmt17(*t), fmt17(*mu));
    }
    out
}

pub fn profile_rearrangement_csv(p: &RearrangementProfile) -> String {
    let mut out = String::from("s,f_star,f_star_star\n");
    for i in 0..p.s_grid.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt17(p.s_grid[i]),
            fmt17(p.f_star[i]),
            fmt17(p.f_star_star[i])
        );
    }
    out
}

pub fn symmetral_csv(diamond: &SymmetralFn, psi: &ellinc_core::rearrange::PsiDiamond, s_grid: &[f64]) -> String {
    let mut out = String::from("s,l_diamond,psi_diamond\n");
    for &s in s_grid {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt17(s),
            fmt17(diamond.profile.eval(s)),
            fmt17(psi.eval(s))
        );
    }
    out
}

/// Per-diagnostic outcome for the run summary.
pub struct DiagnosticLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

pub fn summary_text(lines: &[DiagnosticLine]) -> String {
    let mut out = String::new();
    let all = lines.iter().all(|l| l.pass);
    for l in lines {
        let tag = if l.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{tag}] {} - {}", l.name, l.detail);
    }
    let _ = writeln!(out, "overall: {}", if all { "PASS" } else { "FAIL" });
    out
}

pub fn energy_fit_text(fit: &EnergyFit) -> String {
    let per: Vec<String> = fit.per_eps.iter().map(|c| fmt17(*c)).collect();
    format!(
        "fitted energy constants per step (empirical): {}\nmax {}, relative spread {}\n",
        per.join(", "),
        fmt17(fit.max_c),
        fmt17(fit.spread)
    )
}

pub fn radiation_check_text(check: &RadiationCheck) -> String {
    format!(
        "radiation: all_zero={} nonincreasing(10%)={} decay={} majorant={}\n",
        check.all_zero, check.nonincreasing_within_10pct, check.decay_ok, check.majorant_ok
    )
}

pub fn gap_text(gap: &GapReport) -> String {
    format!("monotonicity gap: min {} (scaled {})\n", fmt17(gap.min_gap), fmt17(gap.min_scaled))
}

/// A run directory that refuses to overwrite a completed run.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path, force: bool) -> io::Result<RunDir> {
        if path.exists() {
            if path.join("DONE").exists() && !force {
                return Err(io::Error::new(
                    io::ErrorKind::AlreadyExists,
                    format!("{} holds a completed run; pass --force to overwrite", path.display()),
                ));
            }
        } else {
            fs::create_dir_all(path)?;
        }
        Ok(RunDir { path: path.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> io::Result<()> {
        fs::write(self.path.join(name), contents)
    }

    pub fn finish(&self) -> io::Result<()> {
        fs::write(self.path.join("DONE"), "done\n")
    }
}
