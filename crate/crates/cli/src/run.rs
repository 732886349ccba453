//! Executes scenarios and writes their artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use nonholo_core::systems::{builtin_complete_solution, builtin_system};
use nonholo_core::{
    attach_integrals, conservation_check, integrate, involution_check, scan_section,
    verify_solution_by_flow, CompleteSolution, ConstrainedState, Error, Flavor, InvolutionMode,
    NonholonomicSystem, Regularity, Section,
};

use crate::output::{sci, trajectory_csv, Report};
use crate::scenario::{
    Expectation, GeometryTask, IntegrateTask, InvolutionSetting, Scenario, TaskKind, VerifyCompleteTask,
    VerifySectionTask,
};
use crate::CliError;

/// Variance bound for a constant energy pullback.
pub const ENERGY_VARIANCE_TOLERANCE: f64 = 1e-12;
/// `|C^A_{αβ}|` below this counts as zero in geometry reports.
pub const HOLONOMIC_TOLERANCE: f64 = 1e-10;

/// Command-line values that take precedence over the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub report: Report,
    pub csv: Option<String>,
    pub report_path: PathBuf,
    pub csv_path: Option<PathBuf>,
}

/// Loads, validates and executes a scenario, then writes its report and
/// CSV. Nothing is written unless the scenario validates and runs.
pub fn run_scenario(path: &Path, overrides: &Overrides) -> Result<Artifacts, CliError> {
    let scenario = Scenario::load(path)?;
    let (report, csv) = execute(&scenario, overrides)?;
    let dir = overrides.out.clone().unwrap_or_else(|| scenario.output.dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let report_path = dir.join(&scenario.output.report);
    write(&report_path, &report.to_string())?;
    let csv_path = match &csv {
        Some(text) => {
            let p = dir.join(&scenario.output.csv);
            write(&p, text)?;
            Some(p)
        }
        None => None,
    };
    Ok(Artifacts { report, csv, report_path, csv_path })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// Runs a validated scenario in memory.
pub fn execute(scenario: &Scenario, overrides: &Overrides) -> Result<(Report, Option<String>), CliError> {
    scenario.validate()?;
    let tol = overrides.tolerance.unwrap_or(scenario.tolerance);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Input(format!("tolerance must be positive, got {tol}")));
    }
    let system = Arc::new(builtin_system(&scenario.system).expect("validated system name"));
    let missing = |t: &str| CliError::Input(format!("missing [{t}] table"));
    match scenario.task {
        TaskKind::Integrate => {
            let task = scenario.integrate.as_ref().ok_or_else(|| missing("integrate"))?;
            run_integrate(&system, task, tol).map(|(r, c)| (r, Some(c)))
        }
        TaskKind::VerifySection => {
            let task = scenario.verify_section.as_ref().ok_or_else(|| missing("verify_section"))?;
            run_verify_section(&system, task, tol, overrides.seed).map(|r| (r, None))
        }
        TaskKind::VerifyComplete => {
            let task = scenario.verify_complete.as_ref().ok_or_else(|| missing("verify_complete"))?;
            run_verify_complete(&system, task, tol, overrides.seed)
        }
        TaskKind::Geometry => {
            let task = scenario.geometry.as_ref().ok_or_else(|| missing("geometry"))?;
            run_geometry(&system, task, overrides.seed).map(|r| (r, None))
        }
    }
}

fn complete_solution(name: &str) -> Result<CompleteSolution, CliError> {
    builtin_complete_solution(name)
        .map(|(_, cs)| cs)
        .ok_or_else(|| CliError::Input(format!("unknown complete solution {name:?}")))
}

fn run_integrate(system: &NonholonomicSystem, task: &IntegrateTask, tol: f64) -> Result<(Report, String), CliError> {
    let mut report = Report::new(format!("integrate {}", system.name()));
    let s0 = ConstrainedState::from_slices(&task.x0, &task.y0);
    let traj = match &task.complete_solution {
        Some(name) => {
            let cs = complete_solution(name)?;
            let conservation = match conservation_check(system, &cs, &s0, task.t_end, task.dt) {
                Ok(c) => c,
                Err(Error::InvalidCompleteSolution(msg)) => {
                    report.check("complete solution", false, msg);
                    let mut traj = integrate(system, &s0, task.t_end, task.dt).map_err(Error::from)?;
                    traj.integrals.clear();
                    report.at_most("energy drift", traj.energy_drift(), tol);
                    return Ok((report, trajectory_csv(&traj)));
                }
                Err(e) => return Err(e.into()),
            };
            for (i, d) in conservation.drifts.iter().enumerate() {
                report.at_most(&format!("conservation drift f_{}", i + 1), *d, tol);
            }
            conservation.trajectory
        }
        None => integrate(system, &s0, task.t_end, task.dt).map_err(Error::from)?,
    };
    report.at_most("energy drift", traj.energy_drift(), tol);
    if let Some((t, s)) = traj.last() {
        report.info("final time", sci(t));
        report.info("final x", fmt_vec(&s.x));
        report.info("final y", fmt_vec(&s.y));
    }
    Ok((report, trajectory_csv(&traj)))
}

fn build_section(system: &NonholonomicSystem, task: &VerifySectionTask) -> Result<Section, CliError> {
    let spec = &task.section;
    match (&spec.constant, &spec.family, &spec.lambda) {
        (Some(c), _, _) => Ok(Section::constant(system.dim(), c)),
        (None, Some(name), Some(lambda)) => {
            Ok(complete_solution(name)?.family().at(&DVector::from_row_slice(lambda)))
        }
        _ => Err(CliError::Input("section needs `constant` or `family` with `lambda`".into())),
    }
}

fn run_verify_section(
    system: &NonholonomicSystem,
    task: &VerifySectionTask,
    tol: f64,
    seed: Option<u64>,
) -> Result<Report, CliError> {
    let mut report = Report::new(format!("verify-section {}", system.name()));
    let sec = build_section(system, task)?;
    let points = task.grid.points(seed)?;
    let scan = scan_section(system, &sec, &points)?;
    report.info("grid points", scan.points.to_string());
    report.at_most("general residual", scan.max_general, tol);
    let restricted = [
        ("restricted residual", scan.max_restricted, tol),
        ("denergy residual", scan.max_denergy, tol),
        ("energy pullback variance", scan.energy_variance, ENERGY_VARIANCE_TOLERANCE),
    ];
    for (name, value, limit) in restricted {
        match task.expect {
            Expectation::Restricted => report.at_most(name, value, limit),
            Expectation::General => report.info(name, sci(value)),
        }
    }
    report.info("energy pullback mean", sci(scan.energy_mean));
    if let Some(flow) = &task.flow {
        let x0 = DVector::from_row_slice(&flow.x0);
        let deviation = verify_solution_by_flow(system, &sec, &x0, flow.t_end, flow.dt)?;
        report.at_most("flow deviation", deviation, flow.tolerance);
    }
    Ok(report)
}

fn run_verify_complete(
    system: &Arc<NonholonomicSystem>,
    task: &VerifyCompleteTask,
    tol: f64,
    seed: Option<u64>,
) -> Result<(Report, Option<String>), CliError> {
    let mut cs = complete_solution(&task.complete_solution)?;
    let mut report = Report::new(format!("verify-complete {} on {}", task.complete_solution, system.name()));
    let points = task.grid.points(seed)?;
    let lambdas: Vec<DVector<f64>> = task.lambdas.iter().map(|l| DVector::from_row_slice(l)).collect();
    let samples: Vec<(DVector<f64>, DVector<f64>)> = points
        .iter()
        .flat_map(|x| lambdas.iter().map(move |l| (x.clone(), l.clone())))
        .collect();
    match cs.validate(&samples) {
        Ok(c) => {
            report.at_most("round trip", c.max_round_trip_error, tol);
            report.info("min |det dσ/dλ|", sci(c.min_abs_parameter_det));
        }
        Err(Error::InvalidCompleteSolution(msg)) => {
            report.check("complete solution", false, msg);
            return Ok((report, None));
        }
        Err(e) => return Err(e.into()),
    }

    let claimed = cs.flavor();
    report.info("claimed flavor", claimed.to_string());
    let check = cs.verify_flavor(system, &points, &lambdas, tol)?;
    report.at_most("general", check.max_general, tol);
    let restricted = [
        ("restricted", check.max_restricted, tol),
        ("denergy", check.max_denergy, tol),
        ("energy pullback variance", check.max_energy_variance, ENERGY_VARIANCE_TOLERANCE),
    ];
    for (name, value, limit) in restricted {
        if claimed == Flavor::Restricted {
            report.at_most(name, value, limit);
        } else {
            report.info(name, sci(value));
        }
    }
    report.info("verified flavor", check.verified.to_string());
    if let Some(w) = &check.warning {
        report.note(w.clone());
    }

    let mode = match task.involution {
        Some(InvolutionSetting::Assert) => InvolutionMode::Assert,
        Some(InvolutionSetting::Advisory) => InvolutionMode::Advisory,
        None if cs.flavor() == Flavor::Restricted => InvolutionMode::Assert,
        None => InvolutionMode::Advisory,
    };
    let mut states = Vec::with_capacity(samples.len());
    for (x, l) in &samples {
        states.push(ConstrainedState::new(x.clone(), cs.sigma(x, l)?));
    }
    let inv = involution_check(system, &cs, &states, mode)?;
    match mode {
        InvolutionMode::Assert => report.at_most("involution", inv.max_abs_bracket, tol),
        InvolutionMode::Advisory => report.info("involution (advisory)", sci(inv.max_abs_bracket)),
    }

    let mut csv = None;
    if let Some(run) = &task.conservation {
        let s0 = ConstrainedState::from_slices(&run.x0, &run.y0);
        let c = conservation_check(system, &cs, &s0, run.t_end, run.dt)?;
        report.at_most("conservation drift", c.max_drift(), tol);
        report.at_most("energy drift", c.trajectory.energy_drift(), tol);
        let mut traj = c.trajectory;
        if traj.integrals.is_empty() {
            attach_integrals(&mut traj, &cs.first_integrals(&samples[..1])?)?;
        }
        csv = Some(trajectory_csv(&traj));
    }
    Ok((report, csv))
}

fn run_geometry(system: &NonholonomicSystem, task: &GeometryTask, seed: Option<u64>) -> Result<Report, CliError> {
    let points = task.grid.points(seed)?;
    let y = task.y.clone().map(|y| DVector::from_row_slice(&y));
    let mut report = geometry_report(system, &points, y.as_ref(), task.depth);
    let summary = GeometrySummary::collect(system, &points, y.as_ref(), task.depth);
    if let Some(expect) = task.expect_regular {
        report.check("regular everywhere", summary.all_regular == expect, summary.all_regular.to_string());
    }
    if let Some(rank) = task.expect_rank {
        let ok = summary.ranks.iter().all(|r| *r == Some(rank));
        report.check(&format!("bracket-generating rank {rank} at depth {}", task.depth), ok, summary.rank_text());
    }
    if let Some(expect) = task.expect_holonomic {
        report.check("holonomic", summary.holonomic() == expect, sci(summary.max_transversal));
    }
    Ok(report)
}

struct PointGeometry {
    regularity: Result<Regularity, Error>,
    rank: Result<usize, Error>,
    transversal: Result<(f64, f64), Error>,
}

impl PointGeometry {
    fn at(system: &NonholonomicSystem, x: &DVector<f64>, y: &DVector<f64>, depth: usize) -> Self {
        Self {
            regularity: system.quasi().regularity_check(x, y),
            rank: system.frame().bracket_generating_rank(x, depth),
            transversal: system
                .frame()
                .structure_coefficients(x)
                .map(|c| (c.max_abs_constrained(), c.max_abs_transversal())),
        }
    }
}

struct GeometrySummary {
    all_regular: bool,
    ranks: Vec<Option<usize>>,
    max_transversal: f64,
    failures: usize,
}

impl GeometrySummary {
    fn collect(system: &NonholonomicSystem, points: &[DVector<f64>], y: Option<&DVector<f64>>, depth: usize) -> Self {
        let zero = DVector::zeros(system.rank());
        let y = y.unwrap_or(&zero);
        let mut s = Self { all_regular: true, ranks: Vec::new(), max_transversal: 0.0, failures: 0 };
        for x in points {
            let g = PointGeometry::at(system, x, y, depth);
            s.all_regular &= matches!(g.regularity, Ok(Regularity::Regular { .. }));
            s.ranks.push(g.rank.as_ref().ok().copied());
            match g.transversal {
                Ok((_, t)) => s.max_transversal = s.max_transversal.max(t),
                Err(_) => s.failures += 1,
            }
            if g.regularity.is_err() || g.rank.is_err() {
                s.failures += 1;
            }
        }
        s
    }

    fn holonomic(&self) -> bool {
        self.failures == 0 && self.max_transversal <= HOLONOMIC_TOLERANCE
    }

    fn rank_text(&self) -> String {
        let known: Vec<usize> = self.ranks.iter().flatten().copied().collect();
        match (known.iter().min(), known.iter().max()) {
            (Some(lo), Some(hi)) if lo == hi && known.len() == self.ranks.len() => format!("rank {lo} everywhere"),
            (Some(lo), Some(hi)) => format!("rank between {lo} and {hi} ({} points failed)", self.ranks.len() - known.len()),
            _ => "rank unavailable".into(),
        }
    }
}

/// Per-point regularity, `G^{LD}` spectrum bound, bracket-generating rank
/// and structure-coefficient summary, followed by an overall verdict.
/// Numeric failures are reported per point and never abort the scan.
pub fn geometry_report(
    system: &NonholonomicSystem,
    points: &[DVector<f64>],
    y: Option<&DVector<f64>>,
    depth: usize,
) -> Report {
    let zero = DVector::zeros(system.rank());
    let y = y.unwrap_or(&zero);
    let mut report = Report::new(format!("geometry {} (n = {}, r = {})", system.name(), system.dim(), system.rank()));
    for x in points {
        let g = PointGeometry::at(system, x, y, depth);
        let regularity = match &g.regularity {
            Ok(Regularity::Regular { min_abs_eigenvalue }) => format!("regular, min |eig G| = {}", sci(*min_abs_eigenvalue)),
            Ok(Regularity::Degenerate { min_abs_eigenvalue }) => {
                format!("degenerate, min |eig G| = {}", sci(*min_abs_eigenvalue))
            }
            Err(e) => format!("regularity error: {e}"),
        };
        let rank = match &g.rank {
            Ok(k) => format!("rank {k} at depth {depth}"),
            Err(e) => format!("rank error: {e}"),
        };
        let coeffs = match &g.transversal {
            Ok((c, t)) => format!("max |C^γ| = {}, max |C^A| = {}", sci(*c), sci(*t)),
            Err(e) => format!("structure coefficient error: {e}"),
        };
        report.info(&format!("x = {}", fmt_vec(x)), format!("{regularity}; {rank}; {coeffs}"));
    }
    let summary = GeometrySummary::collect(system, points, Some(y), depth);
    let mut verdict = vec![
        if summary.all_regular { "regular everywhere".to_string() } else { "not regular everywhere".to_string() },
        format!("bracket-generating {}", summary.rank_text()),
    ];
    if summary.holonomic() {
        verdict.push("C^A ≡ 0 (holonomic)".into());
    }
    if summary.failures > 0 {
        verdict.push(format!("{} numeric failures", summary.failures));
    }
    report.note(verdict.join("; "));
    report
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|c| format!("{c:.6}")).collect();
    format!("[{}]", parts.join(", "))
}
