//! One function per subcommand. Each writes `report.json` into the output
//! directory, on failure too, and returns the error that sets the exit code.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use amc_core::oracle::{fixture as exact_fixture, FIXTURES};
use amc_core::regularity::{
    abp_chain_report, boundary_holder_check, fit_holder_exponent, min_principle_check,
    sobolev_monitor,
};
use amc_core::sections::{
    extract_section, localization_scan, maximal_height, quadratic_separation,
};
use amc_core::{
    solve_lma, solve_ma, solve_system, CheckStatus, Grid, HolderOptions, LMAProblem, MAProblem,
    Point, ProblemData, ScalarField, SolveReport,
};
use serde::Serialize;

use crate::config::{FieldSpec, Quantity, RunConfig};
use crate::report::{write_field, write_json, write_table, Report};
use crate::CliError;

fn status_of(e: &CliError) -> &'static str {
    match e {
        CliError::Invalid(_) => "invalid_input",
        CliError::Nonconvergence(_) => "nonconvergence",
        CliError::Other(_) => "error",
    }
}

fn finish(mut report: Report, config: &RunConfig, result: Result<(), CliError>) -> Result<(), CliError> {
    match result {
        Ok(()) => report.write(&config.out, "ok"),
        Err(e) => {
            report.set("error", e.to_string());
            report.write(&config.out, status_of(&e))?;
            Err(e)
        }
    }
}

fn field(grid: &Arc<Grid>, spec: &FieldSpec, theta: f64) -> Result<ScalarField, CliError> {
    Ok(ScalarField::from_trace(grid.clone(), spec.to_trace(theta)?))
}

fn problem_data(config: &RunConfig, grid: Arc<Grid>) -> Result<ProblemData, CliError> {
    let p = &config.problem;
    let f = field(&grid, &p.f, p.theta)?;
    Ok(ProblemData::new(
        grid,
        p.theta,
        f,
        p.phi.to_trace(p.theta)?,
        p.psi.to_trace(p.theta)?,
        p.p,
    )?)
}

fn solve_coupled(
    config: &RunConfig,
    grid: Arc<Grid>,
    report: &mut Report,
) -> Result<(ProblemData, ScalarField, ScalarField), CliError> {
    let data = problem_data(config, grid)?;
    let (u, w, solve) = solve_system(&data, &config.solver)?;
    report.set_timed("solve", &solve);
    Ok((data, u, w))
}

/// Sup-errors against the fixture behind `phi`, when there is one.
fn exact_errors(config: &RunConfig, u: &ScalarField, w: &ScalarField) -> Option<BTreeMap<&'static str, f64>> {
    let theta = config.problem.theta;
    let s = config.problem.phi.fixture(theta)?;
    let su = s.clone();
    Some(BTreeMap::from([
        ("u_sup_error", u.sup_error(move |p| su.u(p))),
        ("w_sup_error", w.sup_error(move |p| s.w(p))),
    ]))
}

pub fn solve(config: &RunConfig) -> Result<(), CliError> {
    let mut report = Report::new("solve", config);
    let result = (|| {
        let grid = config.domain.grid()?;
        report.set("nodes", grid.len());
        let (_, u, w) = solve_coupled(config, grid, &mut report)?;
        if let Some(errs) = exact_errors(config, &u, &w) {
            report.set("exact", errs);
        }
        write_field(&config.out, "u.csv", &u)?;
        write_field(&config.out, "w.csv", &w)
    })();
    finish(report, config, result)
}

fn ma_solution(config: &RunConfig, grid: &Arc<Grid>, report: &mut Report) -> Result<ScalarField, CliError> {
    let block = config
        .ma
        .as_ref()
        .ok_or_else(|| CliError::Invalid("the ma subcommand needs an \"ma\" block".into()))?;
    let theta = config.problem.theta;
    let problem = MAProblem::new(field(grid, &block.g, theta)?, block.phi.to_trace(theta)?)?;
    let t = Instant::now();
    let (u, ma) = solve_ma(&problem, &config.solver.ma)?;
    report.time("ma_wall_seconds", t.elapsed().as_secs_f64());
    report.set("ma", &ma);
    Ok(u)
}

pub fn ma(config: &RunConfig) -> Result<(), CliError> {
    let mut report = Report::new("ma", config);
    let result = (|| {
        let grid = config.domain.grid()?;
        report.set("nodes", grid.len());
        let u = ma_solution(config, &grid, &mut report)?;
        write_field(&config.out, "u.csv", &u)
    })();
    finish(report, config, result)
}

pub fn lma(config: &RunConfig) -> Result<(), CliError> {
    let mut report = Report::new("lma", config);
    let result = (|| {
        let block = config
            .lma
            .as_ref()
            .ok_or_else(|| CliError::Invalid("the lma subcommand needs an \"lma\" block".into()))?;
        let grid = config.domain.grid()?;
        report.set("nodes", grid.len());
        let u = match &block.u_csv {
            Some(path) => {
                let file = std::fs::File::open(path)
                    .map_err(|e| CliError::Invalid(format!("cannot open {}: {e}", path.display())))?;
                ScalarField::read_csv(grid.clone(), std::io::BufReader::new(file))
                    .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
            }
            None if config.ma.is_some() => ma_solution(config, &grid, &mut report)?,
            None => {
                return Err(CliError::Invalid(
                    "the lma subcommand needs lma.u_csv or an \"ma\" block".into(),
                ))
            }
        };
        let theta = config.problem.theta;
        let problem = LMAProblem::from_u(&u, field(&grid, &block.g, theta)?, block.psi.to_trace(theta)?)?;
        let t = Instant::now();
        let (v, lma) = solve_lma(&problem, &config.solver.lma)?;
        report.time("lma_wall_seconds", t.elapsed().as_secs_f64());
        report.set("lma", &lma);
        write_field(&config.out, "v.csv", &v)
    })();
    finish(report, config, result)
}

/// `u` for the section tools: an explicit field or the coupled solution.
fn section_field(config: &RunConfig, report: &mut Report) -> Result<ScalarField, CliError> {
    let grid = config.domain.grid()?;
    report.set("nodes", grid.len());
    match config.sections.as_ref().and_then(|s| s.u.as_ref()) {
        Some(spec) => field(&grid, spec, config.problem.theta),
        None => Ok(solve_coupled(config, grid, report)?.1),
    }
}

pub fn sections(config: &RunConfig) -> Result<(), CliError> {
    let mut report = Report::new("sections", config);
    let result = (|| {
        let block = config.sections.as_ref().ok_or_else(|| {
            CliError::Invalid("the sections subcommand needs a \"sections\" block".into())
        })?;
        let u = section_field(config, &mut report)?;
        let mut table = Vec::new();
        let mut hulls = Vec::new();
        let mut scans = Vec::new();
        for (c, &center) in block.centers.iter().enumerate() {
            let x0 = Point::from(center);
            let scan = localization_scan(&u, x0, &block.heights)?;
            for r in &scan.rows {
                table.push(vec![c as f64, x0.x, x0.y, r.h, r.tau, r.vol_ratio, r.k_inner, r.k_outer]);
                for p in &extract_section(&u, x0, r.h)?.hull {
                    hulls.push(vec![c as f64, r.h, p.x, p.y]);
                }
            }
            scans.push(scan);
        }
        report.set("scans", &scans);
        write_table(
            &config.out.join("sections.csv"),
            &["center", "x0", "y0", "h", "tau", "vol_ratio", "k_inner", "k_outer"],
            &table,
        )?;
        write_table(&config.out.join("hulls.csv"), &["center", "h", "x", "y"], &hulls)
    })();
    finish(report, config, result)
}

/// One entry of `verify.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub margin: Option<f64>,
    pub constants: BTreeMap<&'static str, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn new(name: &'static str, status: CheckStatus, margin: Option<f64>) -> Self {
        Self {
            name,
            status,
            margin,
            constants: BTreeMap::new(),
            note: None,
        }
    }

    fn failed(name: &'static str, e: impl std::fmt::Display) -> Self {
        Self {
            note: Some(e.to_string()),
            ..Self::new(name, CheckStatus::Fail, None)
        }
    }

    fn with(mut self, key: &'static str, v: f64) -> Self {
        self.constants.insert(key, v);
        self
    }
}

fn maximal_sections_check(u: &ScalarField, samples: usize, bound: f64) -> Check {
    let grid = u.grid();
    let candidates: Vec<usize> = (0..grid.len()).filter(|&k| !grid.touches_boundary(k)).collect();
    let step = (candidates.len() / samples.max(1)).max(1);
    let ratios: Vec<f64> = candidates
        .iter()
        .step_by(step)
        .filter_map(|&k| maximal_height(u, grid.point(k)).ok())
        .map(|m| m.hbar.sqrt() / m.dist)
        .collect();
    if ratios.is_empty() {
        return Check::failed("maximal_sections", "no interior point could be resolved");
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let k = hi.max(1.0 / lo);
    Check::new("maximal_sections", CheckStatus::from_bool(k <= bound), Some(bound - k))
        .with("k", k)
        .with("min_ratio", lo)
        .with("max_ratio", hi)
        .with("samples", ratios.len() as f64)
}

fn lowest_boundary_point(grid: &Grid) -> Point {
    grid.domain()
        .boundary_samples(1024)
        .into_iter()
        .min_by(|a, b| a.y.total_cmp(&b.y))
        .expect("boundary samples")
}

/// Runs the enabled checks on a converged `(u, w)`.
pub fn run_checks(
    config: &RunConfig,
    data: &ProblemData,
    u: &ScalarField,
    w: &ScalarField,
) -> Vec<Check> {
    let t = &config.verify;
    let grid = u.grid();
    let boundary = grid.domain().boundary_samples(t.boundary_samples);
    let mut checks = Vec::new();
    if t.min_principle {
        let r = min_principle_check(w, &data.psi, &data.f);
        checks.push(
            Check::new("min_principle", r.status, r.margin)
                .with("min_interior_w", r.min_interior_w)
                .with("min_boundary_psi", r.min_boundary_psi)
                .with("tolerance", r.tolerance),
        );
    }
    if t.abp_chain {
        checks.push(match abp_chain_report(w, &data.f, &data.psi, data.theta, data.p) {
            Ok(b) => {
                let ok = b.chain_holds && b.exponent_below_one && b.abp_constant.is_finite();
                Check::new("abp_chain", CheckStatus::from_bool(ok), Some(1.0 - b.abp_exponent))
                    .with("abp_exponent", b.abp_exponent)
                    .with("abp_constant", b.abp_constant)
                    .with("f_lp_norm", b.f_lp_norm)
                    .with("f_ln_norm", b.f_ln_norm)
                    .with("max_w", b.max_w)
            }
            Err(e) => Check::failed("abp_chain", e),
        });
    }
    if t.separation {
        checks.push(match quadratic_separation(u, &boundary) {
            Ok(s) => Check::new("separation", CheckStatus::from_bool(s.rho_low > 0.0), Some(s.rho_low))
                .with("rho_low", s.rho_low)
                .with("rho_high", s.rho_high),
            Err(e) => Check::failed("separation", e),
        });
    }
    if t.maximal_sections {
        checks.push(maximal_sections_check(u, t.maximal_samples, t.maximal_ratio_bound));
    }
    if t.localization {
        let x0 = t
            .localization_point
            .map(Point::from)
            .unwrap_or_else(|| lowest_boundary_point(grid));
        checks.push(match localization_scan(u, x0, &t.localization_heights) {
            Ok(scan) if !scan.rows.is_empty() => {
                let ok = scan.rows.iter().all(|r| r.k_inner > 0.0 && r.k_outer <= 1.0 + 1e-9);
                let last = scan.rows.last().expect("nonempty");
                let mut c = Check::new("localization", CheckStatus::from_bool(ok), None)
                    .with("tau_smallest_h", last.tau)
                    .with("vol_ratio_smallest_h", last.vol_ratio)
                    .with("k_inner_min", scan.rows.iter().map(|r| r.k_inner).fold(f64::INFINITY, f64::min));
                if let Some(fit) = scan.tau_fit {
                    c = c.with("tau_fit_c0", fit.c0).with("tau_fit_c1", fit.c1);
                }
                c
            }
            Ok(_) => Check::failed("localization", "no section could be fitted"),
            Err(e) => Check::failed("localization", e),
        });
    }
    if t.holder {
        let opts = HolderOptions {
            seed: config.seed,
            ..HolderOptions::default()
        };
        checks.push(match fit_holder_exponent(w, &opts) {
            Ok(est) => match est.exponent {
                Some(e) => Check::new("holder", CheckStatus::Pass, Some(e))
                    .with("exponent", e)
                    .with("constant", est.constant)
                    .with("r2", est.r2),
                None => Check {
                    note: Some("w is constant to rounding".into()),
                    ..Check::new("holder", CheckStatus::Skip, None)
                },
            },
            Err(e) => Check::failed("holder", e),
        });
    }
    if t.boundary_holder {
        checks.push(match boundary_holder_check(w, t.boundary_alpha, t.boundary_samples) {
            Ok(r) => Check::new("boundary_holder", r.status, Some(r.min_exponent - r.threshold))
                .with("threshold", r.threshold)
                .with("min_exponent", r.min_exponent)
                .with("median_exponent", r.median_exponent),
            Err(e) => Check::failed("boundary_holder", e),
        });
    }
    if t.sobolev {
        checks.push(match sobolev_monitor(u, data.p) {
            Ok(s) => {
                let mut c = Check::new("sobolev", CheckStatus::Pass, None).with("coverage", s.coverage);
                for (k, key) in ["order0", "order1", "order2", "order3", "order4"].into_iter().enumerate() {
                    c = c.with(key, s.order_norms[k]);
                }
                c
            }
            Err(e) => Check::failed("sobolev", e),
        });
    }
    checks
}

pub fn verify(config: &RunConfig) -> Result<(), CliError> {
    let mut report = Report::new("verify", config);
    let result = (|| {
        let grid = config.domain.grid()?;
        report.set("nodes", grid.len());
        let (data, u, w) = solve_coupled(config, grid, &mut report)?;
        let t = Instant::now();
        let checks = run_checks(config, &data, &u, &w);
        report.time("verify_wall_seconds", t.elapsed().as_secs_f64());
        let failed = checks.iter().filter(|c| c.status == CheckStatus::Fail).count();
        report.set("checks_failed", failed);
        write_json(&config.out.join("verify.json"), &serde_json::json!({ "checks": checks }))?;
        write_field(&config.out, "u.csv", &u)?;
        write_field(&config.out, "w.csv", &w)
    })();
    finish(report, config, result)
}

/// One grid of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub h: f64,
    pub nodes: usize,
    pub u_error: f64,
    pub w_error: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; absent on the first row.
    pub u_order: Option<f64>,
    pub w_order: Option<f64>,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Study {
    pub fixture: String,
    pub theta: f64,
    pub rows: Vec<StudyRow>,
    /// Set when a grid failed; `rows` holds the grids before it.
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Manufactured-solution study on the config domain: `f`, `phi` and `psi`
/// come from the fixture; `h_list` replaces `h_grid`. Stops at the first
/// failing grid and returns its error next to the partial table.
pub fn convergence_study(
    config: &RunConfig,
    name: &str,
    h_list: &[f64],
    mut on_row: impl FnMut(&StudyRow, &SolveReport),
) -> (Study, Option<CliError>) {
    let theta = config.problem.theta;
    let mut study = Study {
        fixture: name.to_string(),
        theta,
        rows: Vec::new(),
        partial: false,
        error: None,
    };
    for &h in h_list {
        let row = (|| -> Result<(StudyRow, SolveReport), CliError> {
            let s = exact_fixture(name, theta)?;
            let grid = config.domain.grid_with(h)?;
            let data = ProblemData::new(
                grid.clone(),
                theta,
                s.f_field(grid.clone()),
                s.u_trace(),
                s.w_trace(),
                config.problem.p,
            )?;
            let (u, w, solve) = solve_system(&data, &config.solver)?;
            let su = s.clone();
            let row = StudyRow {
                h,
                nodes: grid.len(),
                u_error: u.sup_error(move |p| su.u(p)),
                w_error: w.sup_error(move |p| s.w(p)),
                u_order: None,
                w_order: None,
                outer_iterations: solve.outer_iterations,
            };
            Ok((row, solve))
        })();
        match row {
            Ok((mut row, solve)) => {
                if let Some(prev) = study.rows.last() {
                    let r = (prev.h / row.h).ln();
                    row.u_order = Some((prev.u_error / row.u_error).ln() / r);
                    row.w_order = Some((prev.w_error / row.w_error).ln() / r);
                }
                on_row(&row, &solve);
                study.rows.push(row);
            }
            Err(e) => {
                study.partial = true;
                study.error = Some(e.to_string());
                return (study, Some(e));
            }
        }
    }
    (study, None)
}

pub fn converge(config: &RunConfig) -> Result<(), CliError> {
    let mut report = Report::new("converge", config);
    let result = (|| {
        let block = config.converge.as_ref().ok_or_else(|| {
            CliError::Invalid("the converge subcommand needs a \"converge\" block".into())
        })?;
        let mut seconds = Vec::new();
        let (study, failure) = convergence_study(config, &block.fixture, &block.h_list, |_, s| {
            seconds.push(s.timing.wall_seconds)
        });
        report.time("grid_wall_seconds", seconds);
        report.set("study", &study);
        let rows: Vec<Vec<f64>> = study
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.h,
                    r.nodes as f64,
                    r.u_error,
                    r.w_error,
                    r.u_order.unwrap_or(f64::NAN),
                    r.w_order.unwrap_or(f64::NAN),
                    r.outer_iterations as f64,
                ]
            })
            .collect();
        write_table(
            &config.out.join("converge.csv"),
            &["h", "nodes", "u_error", "w_error", "u_order", "w_order", "outer_iterations"],
            &rows,
        )?;
        write_json(&config.out.join("converge.json"), &study)?;
        failure.map_or(Ok(()), Err)
    })();
    finish(report, config, result)
}

/// Names and one-line descriptions of the shipped fixtures.
pub fn list_fixtures() -> String {
    FIXTURES
        .iter()
        .map(|&n| {
            let u = match n {
                "paraboloid" => "|x|^2 / 2",
                "radial" => "r^2 / 2 + r^4 / 4",
                "radial_mild" => "r^2 / 2 + r^4 / 16",
                "sheared" => "|A x|^2 / 2, A = [[1, 0.5], [0, 1]]",
                "diag" => "(4 x^2 + y^2) / 2",
                _ => "",
            };
            format!("{n}\tu = {u}\n")
        })
        .collect()
}

pub fn fixture(config: &RunConfig) -> Result<(), CliError> {
    let mut report = Report::new("fixture", config);
    let result = (|| {
        let grid = config.domain.grid()?;
        let theta = config.problem.theta;
        let mut audits = BTreeMap::new();
        for name in FIXTURES {
            for q in [Quantity::U, Quantity::W, Quantity::F] {
                let spec = FieldSpec::Fixture {
                    name: name.to_string(),
                    quantity: q,
                };
                let suffix = match q {
                    Quantity::U => "u",
                    Quantity::W => "w",
                    Quantity::F => "f",
                    Quantity::G => "g",
                };
                write_field(&config.out, &format!("{name}_{suffix}.csv"), &field(&grid, &spec, theta)?)?;
            }
            let s = exact_fixture(name, theta)?;
            audits.insert(name, s.sign_audit(grid.domain(), 10_000));
        }
        report.set("sign_audits", audits);
        Ok(())
    })();
    finish(report, config, result)
}
