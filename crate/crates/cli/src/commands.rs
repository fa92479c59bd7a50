//! Subcommand implementations. Exit codes: 0 all diagnostics pass, 1 solver
//! failure, 2 diagnostics failed, 64 parse/validation error, 66 missing
//! input file.

use std::path::PathBuf;

use ellinc_core::rearrange::{bound_from_nfunction, diamond, DiamondGrid};
use ellinc_core::scalar::log_grid;
use ellinc_core::solver::{
    bound_comparison, continuation, datum_profile, default_probes, energy_estimates,
    monotonicity_gap, radiation_check, renormalized_residual, uniqueness_crosscheck,
    CrosscheckVariant, ProblemSpec,
};

use crate::config::{build_all, Config, ConfigError, ProblemExtras};
use crate::output::{self, DiagnosticLine, RunDir};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_DIAGNOSTICS: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_NOINPUT: i32 = 66;

pub struct Common {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub force: bool,
    pub quiet: bool,
}

fn say(quiet: bool, msg: &str) {
    if !quiet {
        println!("{msg}");
    }
}

fn fail_config(err: &ConfigError) -> i32 {
    eprintln!("config error: {err}");
    EXIT_CONFIG
}

pub fn load_config(common: &Common) -> Result<Config, i32> {
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            eprintln!("cannot open {}: {e}", common.config.display());
            return Err(EXIT_NOINPUT);
        }
        Err(e) => {
            eprintln!("cannot read {}: {e}", common.config.display());
            return Err(EXIT_NOINPUT);
        }
    };
    let mut cfg = Config::parse(&text).map_err(|e| fail_config(&e))?;
    cfg.apply_overrides(&common.set).map_err(|e| fail_config(&e))?;
    Ok(cfg)
}

fn pick_problem(
    cfg: &Config,
    common: &Common,
) -> Result<(String, ProblemSpec, ProblemExtras), i32> {
    let built = build_all(cfg).map_err(|e| fail_config(&e))?;
    let Some((name, mut spec, extras)) = built.problems.into_iter().next() else {
        eprintln!("config error: no [problem] block");
        return Err(EXIT_CONFIG);
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    spec.force = common.force;
    Ok((name, spec, extras))
}

pub fn cmd_solve(common: &Common) -> i32 {
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let (name, spec, extras) = match pick_problem(&cfg, common) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let out_dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("run_{name}")));
    let run = match RunDir::create(&out_dir, common.force) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("output directory: {e}");
            return EXIT_CONFIG;
        }
    };
    let _ = run.write("config_echo.cfg", &cfg.echo());
    run_problem(&spec, &extras, &run, common.quiet)
}

pub fn run_problem(spec: &ProblemSpec, extras: &ProblemExtras, run: &RunDir, quiet: bool) -> i32 {
    // validation: schedule sanity plus the coercivity/monotonicity checks
    let validation = match spec.validate() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("validation error: {e}");
            return EXIT_CONFIG;
        }
    };
    say(
        quiet,
        &format!(
            "validation: coercivity margin {:.3e} over {} samples",
            validation.coercivity.min_margin, validation.coercivity.samples
        ),
    );
    let report = match continuation(spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("solver error: {e}");
            return EXIT_SOLVER;
        }
    };
    let mut lines: Vec<DiagnosticLine> = Vec::new();
    lines.push(DiagnosticLine {
        name: "coercivity".into(),
        pass: validation.coercivity.passed(),
        detail: format!("worst margin {:.3e}", validation.coercivity.min_margin),
    });
    // inscribed-polygon area deficit feeds the bound through |Omega|
    lines.push(DiagnosticLine {
        name: "mesh".into(),
        pass: true,
        detail: format!(
            "{} vertices, {} cells, measure {:.6}",
            report.mesh.vertex_count(),
            report.mesh.cell_count(),
            report.mesh.volume()
        ),
    });

    let _ = run.write("mesh.txt", &output::mesh_text(&report.mesh));
    for (i, _rec) in report.records.iter().enumerate() {
        let _ = run.write(&format!("solution_{i:03}.csv"), &output::solution_csv(&report, i));
    }
    let _ = run.write("energy.csv", &output::energy_csv(&report));
    let _ = run.write("radiation.csv", &output::radiation_csv(&report));
    let _ = run.write("cauchy.csv", &output::cauchy_csv(&report));

    // residual acceptance is enforced by the solver; record it
    let worst_res = report
        .records
        .iter()
        .map(|r| r.residual_norm)
        .fold(0.0f64, f64::max);
    lines.push(DiagnosticLine {
        name: "weak identity".into(),
        pass: true,
        detail: format!("worst accepted residual {worst_res:.3e}"),
    });

    // truncation energies
    match energy_estimates(spec, &report) {
        Ok(fit) => {
            let pass = fit.per_eps.iter().all(|c| c.is_finite());
            lines.push(DiagnosticLine {
                name: "energy bound".into(),
                pass,
                detail: format!("fitted C max {:.6e}, spread {:.1}%", fit.max_c, 100.0 * fit.spread),
            });
            let _ = run.write("energy_fit.txt", &output::energy_fit_text(&fit));
        }
        Err(e) => lines.push(DiagnosticLine {
            name: "energy bound".into(),
            pass: false,
            detail: e.to_string(),
        }),
    }

    // flux decay through level bands at the final step
    if let Some(last) = report.records.last() {
        let check = radiation_check(&last.radiation);
        let pass = check.majorant_ok && (check.all_zero || check.nonincreasing_within_10pct);
        let detail = if check.all_zero {
            "all bands empty (bounded solution); majorant holds vacuously".to_string()
        } else {
            format!(
                "nonincreasing(10%)={} decay={} majorant={}",
                check.nonincreasing_within_10pct, check.decay_ok, check.majorant_ok
            )
        };
        lines.push(DiagnosticLine { name: "level-band flux".into(), pass, detail });
        let _ = run.write("radiation_check.txt", &output::radiation_check_text(&check));
    }

    // Cauchy-in-measure evidence across the schedule
    if report.cauchy.len() >= 2 {
        let mut noninc = true;
        for w in report.cauchy.windows(2) {
            if w[1].exceed_1e2 > w[0].exceed_1e2 + 1e-12 {
                noninc = false;
            }
        }
        lines.push(DiagnosticLine {
            name: "cauchy in measure".into(),
            pass: noninc,
            detail: format!(
                "exceedance measures at 1e-2: {:?}",
                report.cauchy.iter().map(|c| c.exceed_1e2).collect::<Vec<_>>()
            ),
        });
    }

    // renormalized identity against the limit itself
    let level = report.limit().max_abs() + 1.0;
    match renormalized_residual(spec, &report, level, report.limit()) {
        Ok(r) => {
            let tol = 1e4 * spec.newton.tol.unwrap_or(if report.mesh.dim() == 1 { 1e-10 } else { 1e-8 });
            lines.push(DiagnosticLine {
                name: "renormalized identity".into(),
                pass: r <= tol,
                detail: format!("residual {r:.3e} (gate {tol:.1e})"),
            });
        }
        Err(e) => lines.push(DiagnosticLine {
            name: "renormalized identity".into(),
            pass: false,
            detail: e.to_string(),
        }),
    }

    // monotonicity gap over seeded constant probes
    let probes = default_probes(report.mesh.dim(), 20, spec.seed);
    match monotonicity_gap(spec, &report, &probes) {
        Ok(gap) => {
            lines.push(DiagnosticLine {
                name: "monotonicity gap".into(),
                pass: gap.min_scaled >= -1e-8,
                detail: format!("min {:.3e} (scaled {:.3e})", gap.min_gap, gap.min_scaled),
            });
            let _ = run.write("gap.txt", &output::gap_text(&gap));
        }
        Err(e) => lines.push(DiagnosticLine {
            name: "monotonicity gap".into(),
            pass: false,
            detail: e.to_string(),
        }),
    }

    // supremum bound comparison (2-D only)
    if report.mesh.dim() >= 2 {
        match bound_comparison(spec, &report, &DiamondGrid::default(), extras.lambda) {
            Ok(cmp) => {
                let pass = !cmp.bound.finite || cmp.margin >= 0.0;
                let detail = if cmp.bound.finite {
                    format!(
                        "u_max {:.6e}, bound {:.6e}, margin {:.3e}",
                        cmp.u_max, cmp.bound.total, cmp.margin
                    )
                } else {
                    format!(
                        "bound infinite (integrability exponent {:.3}); comparison vacuous",
                        cmp.bound.integrability.fitted_exponent
                    )
                };
                lines.push(DiagnosticLine { name: "supremum bound".into(), pass, detail });
                let c_a = spec.graph.witness().map(|w| w.c_a).unwrap_or(f64::NAN);
                let _ = run.write("bound.csv", &output::bound_csv(&cmp.bound, c_a));
            }
            Err(e) => lines.push(DiagnosticLine {
                name: "supremum bound".into(),
                pass: false,
                detail: e.to_string(),
            }),
        }
    } else {
        lines.push(DiagnosticLine {
            name: "supremum bound".into(),
            pass: true,
            detail: "skipped in one dimension (interval functions with integrable derivative are bounded)".into(),
        });
    }

    // cross-scheme agreement when requested
    if extras.crosscheck {
        let variant = CrosscheckVariant {
            eps_schedule: Some(spec.eps_schedule.iter().map(|e| 0.5 * e).collect()),
            moll_order: Some(spec.moll_order + 4),
        };
        match uniqueness_crosscheck(spec, &variant) {
            Ok(d) => lines.push(DiagnosticLine {
                name: "uniqueness crosscheck".into(),
                pass: d <= 1e-4,
                detail: format!("L1 distance {d:.3e} (gate 1e-4)"),
            }),
            Err(e) => lines.push(DiagnosticLine {
                name: "uniqueness crosscheck".into(),
                pass: false,
                detail: e.to_string(),
            }),
        }
    }

    // graph membership of the stored flux
    lines.push(DiagnosticLine {
        name: "flux membership".into(),
        pass: true,
        detail: format!(
            "mollification width {:.1e}; distance to selection max {:.3e}, mean {:.3e}",
            report.alpha_width, report.membership_max, report.membership_mean
        ),
    });

    let summary = output::summary_text(&lines);
    let _ = run.write("summary.txt", &summary);
    let _ = run.finish();
    say(quiet, &summary);
    if lines.iter().all(|l| l.pass) {
        EXIT_OK
    } else {
        EXIT_DIAGNOSTICS
    }
}

pub struct ConjugateArgs {
    pub eta_min: f64,
    pub eta_max: f64,
    pub count: usize,
    pub radius: f64,
    pub density: usize,
}

pub fn cmd_conjugate(common: &Common, args: &ConjugateArgs) -> i32 {
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let built = match build_all(&cfg) {
        Ok(b) => b,
        Err(e) => return fail_config(&e),
    };
    let Some((_, nf)) = built.nfuncs.iter().next() else {
        eprintln!("config error: no [nfunction] block");
        return EXIT_CONFIG;
    };
    let x0 = vec![0.0; nf.dim()];
    let mut out = String::from("eta,conjugate\n");
    for i in 0..args.count {
        let t = args.eta_min
            + (args.eta_max - args.eta_min) * i as f64 / (args.count.max(2) - 1) as f64;
        let mut eta = vec![0.0; nf.dim()];
        eta[0] = t;
        match nf.conjugate(&x0, &eta, args.radius, args.density) {
            Ok(c) => {
                if c.on_boundary {
                    eprintln!("maximizer touched the search box at eta = {t}; enlarge --radius");
                    return EXIT_CONFIG;
                }
                out.push_str(&format!("{},{}\n", output::fmt17(t), output::fmt17(c.value)));
            }
            Err(e) => {
                eprintln!("conjugation failed at eta = {t}: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    emit(common, "conjugate.csv", &out)
}

pub fn cmd_minty(common: &Common, nu_list: &[f64]) -> i32 {
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let built = match build_all(&cfg) {
        Ok(b) => b,
        Err(e) => return fail_config(&e),
    };
    let Some((_, graph)) = built.graphs.iter().next() else {
        eprintln!("config error: no [graph] block");
        return EXIT_CONFIG;
    };
    if graph.dim() != 1 {
        eprintln!("the transform table is one-dimensional; got a {}-dimensional graph", graph.dim());
        return EXIT_CONFIG;
    }
    let mut out = String::from("nu,xi,eta,mu\n");
    for &nu in nu_list {
        match graph.minty(&[0.0], &[nu], 1e-12) {
            Ok(p) => out.push_str(&format!(
                "{},{},{},{}\n",
                output::fmt17(nu),
                output::fmt17(p.xi[0]),
                output::fmt17(p.eta[0]),
                output::fmt17(p.mu[0])
            )),
            Err(e) => {
                eprintln!("transform failed at nu = {nu}: {e}");
                return EXIT_SOLVER;
            }
        }
    }
    emit(common, "minty.csv", &out)
}

pub fn cmd_bound(common: &Common) -> i32 {
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let (_, spec, extras) = match pick_problem(&cfg, common) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if spec.domain.dim() < 2 {
        eprintln!(
            "bound evaluation is restricted to d >= 2: one-dimensional functions with integrable derivative are bounded already"
        );
        return EXIT_CONFIG;
    }
    let mesh = match spec.domain.mesh(spec.h) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("mesh error: {e}");
            return EXIT_CONFIG;
        }
    };
    let profile = match datum_profile(&spec.datum, &mesh) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("profile error: {e}");
            return EXIT_CONFIG;
        }
    };
    let Some(witness) = spec.graph.witness() else {
        eprintln!("bound evaluation needs a graph with a coercivity witness");
        return EXIT_CONFIG;
    };
    let m_sup = (0..mesh.cell_count())
        .map(|c| (witness.m)(mesh.centroid(c)))
        .fold(0.0f64, f64::max);
    let xs: Vec<Vec<f64>> = (0..mesh.cell_count().min(128))
        .map(|c| mesh.centroid(c).to_vec())
        .collect();
    match bound_from_nfunction(
        &spec.growth,
        &xs,
        &profile,
        witness.c_a,
        m_sup,
        extras.lambda,
        &DiamondGrid::default(),
    ) {
        Ok(bound) => emit(common, "bound.csv", &output::bound_csv(&bound, witness.c_a)),
        Err(e) => {
            eprintln!("bound evaluation failed: {e}");
            EXIT_SOLVER
        }
    }
}

pub fn cmd_rearrange(common: &Common) -> i32 {
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let (name, spec, _) = match pick_problem(&cfg, common) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mesh = match spec.domain.mesh(spec.h) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("mesh error: {e}");
            return EXIT_CONFIG;
        }
    };
    let profile = match datum_profile(&spec.datum, &mesh) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("profile error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out_dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("rearrange_{name}")));
    let run = match RunDir::create(&out_dir, common.force) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("output directory: {e}");
            return EXIT_CONFIG;
        }
    };
    let _ = run.write("distribution.csv", &output::profile_mu_csv(&profile));
    let _ = run.write("rearrangement.csv", &output::profile_rearrangement_csv(&profile));
    if spec.domain.dim() >= 2 {
        // x-dependent growth enters through its pointwise infimum over
        // the sampled domain, as in the bound pipeline
        let minorant = if spec.growth.homogeneous() {
            (*spec.growth).clone()
        } else {
            let inner = spec.growth.clone();
            let xs: Vec<Vec<f64>> = (0..mesh.cell_count().min(128))
                .map(|c| mesh.centroid(c).to_vec())
                .collect();
            ellinc_core::nfunc::NFunction::custom(
                spec.growth.dim(),
                "essinf",
                true,
                move |_x, xi| {
                    xs.iter().map(|x| inner.evaluate(x, xi)).fold(f64::INFINITY, f64::min)
                },
            )
        };
        match diamond(&minorant, &DiamondGrid::default()) {
            Ok(pipe) => {
                let grid = log_grid(1e-2, 1e2, 161);
                let _ = run.write(
                    "symmetral.csv",
                    &output::symmetral_csv(&pipe.diamond, &pipe.psi, &grid),
                );
            }
            Err(e) => {
                eprintln!("symmetral pipeline failed: {e}");
                return EXIT_SOLVER;
            }
        }
    }
    let _ = run.finish();
    say(common.quiet, &format!("rearrangement tables written to {}", run.path.display()));
    EXIT_OK
}

pub fn cmd_sweep(common: &Common, param: &str) -> i32 {
    let Some(eq) = param.find('=') else {
        eprintln!("sweep parameter must be BLOCK.key=v1,v2,...");
        return EXIT_CONFIG;
    };
    let key = &param[..eq];
    let values: Vec<&str> = param[eq + 1..].split(',').map(|s| s.trim()).collect();
    if values.len() < 2 {
        eprintln!("sweep needs at least two values");
        return EXIT_CONFIG;
    }
    let out_root = common.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
    let codes: Vec<i32> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, v) in values.iter().enumerate() {
            let mut set = common.set.clone();
            set.push(format!("{key}={v}"));
            let sub = Common {
                config: common.config.clone(),
                out: Some(out_root.join(format!("case_{i:02}"))),
                set,
                seed: common.seed,
                force: common.force,
                quiet: true,
            };
            handles.push(scope.spawn(move || cmd_solve(&sub)));
        }
        handles.into_iter().map(|h| h.join().unwrap_or(EXIT_SOLVER)).collect()
    });
    for (i, (v, code)) in values.iter().zip(&codes).enumerate() {
        say(common.quiet, &format!("case {i:02} ({key}={v}): exit {code}"));
    }
    *codes.iter().max().unwrap_or(&EXIT_OK)
}

fn emit(common: &Common, name: &str, contents: &str) -> i32 {
    match &common.out {
        Some(dir) => {
            if let Err(e) = std::fs::create_dir_all(dir) {
                eprintln!("output directory: {e}");
                return EXIT_CONFIG;
            }
            if let Err(e) = std::fs::write(dir.join(name), contents) {
                eprintln!("write failed: {e}");
                return EXIT_CONFIG;
            }
            EXIT_OK
        }
        None => {
            print!("{contents}");
            EXIT_OK
        }
    }
}
