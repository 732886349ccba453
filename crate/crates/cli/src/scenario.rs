//! Scenario files: TOML with a top-level header and one table per task.
//!
//! ```toml
//! system = "free-particle-nonholonomic"
//! task = "integrate"
//! tolerance = 1e-8
//!
//! [integrate]
//! x0 = [0.0, 0.0, 0.0]
//! y0 = [1.0, 1.0]
//! t_end = 2.0
//! dt = 1e-3
//! complete_solution = "free-particle-restricted"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! The full grammar is documented in `docs/scenario-format.md` at the
//! repository root.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use nonholo_core::systems::{builtin_complete_solution, builtin_system, FAMILY_NAMES, SYSTEM_NAMES};
use nonholo_core::{lattice, random_points, Bounds};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Integrate,
    VerifySection,
    VerifyComplete,
    Geometry,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: String,
    pub task: TaskKind,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    pub integrate: Option<IntegrateTask>,
    pub verify_section: Option<VerifySectionTask>,
    pub verify_complete: Option<VerifyCompleteTask>,
    pub geometry: Option<GeometryTask>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateTask {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    /// Adds `f_1..f_r` columns and asserts their conservation.
    pub complete_solution: Option<String>,
}

/// Either a constant section or one member of a built-in family.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub constant: Option<Vec<f64>>,
    pub family: Option<String>,
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    #[default]
    General,
    Restricted,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCheck {
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_flow_tolerance")]
    pub tolerance: f64,
}

fn default_flow_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySectionTask {
    pub section: SectionSpec,
    #[serde(default)]
    pub expect: Expectation,
    pub grid: GridSpec,
    pub flow: Option<FlowCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvolutionSetting {
    Assert,
    Advisory,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConservationRun {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCompleteTask {
    pub complete_solution: String,
    pub grid: GridSpec,
    pub lambdas: Vec<Vec<f64>>,
    /// Defaults to `assert` for restricted families and `advisory` otherwise.
    pub involution: Option<InvolutionSetting>,
    pub conservation: Option<ConservationRun>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryTask {
    pub grid: GridSpec,
    /// Quasivelocity at which `G^{LD}` is evaluated; zero by default.
    pub y: Option<Vec<f64>>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub expect_regular: Option<bool>,
    pub expect_rank: Option<usize>,
    pub expect_holonomic: Option<bool>,
}

pub fn default_depth() -> usize {
    2
}

/// A lattice with `counts` points per axis, or `random` seeded points.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Option<Vec<usize>>,
    pub random: Option<usize>,
    pub seed: Option<u64>,
}

impl GridSpec {
    pub fn points(&self, seed_override: Option<u64>) -> Result<Vec<DVector<f64>>, CliError> {
        let bounds = Bounds::new(self.lo.clone(), self.hi.clone()).map_err(|e| CliError::Input(e.to_string()))?;
        match (&self.counts, self.random) {
            (Some(counts), None) => lattice(&bounds, counts).map_err(|e| CliError::Input(e.to_string())),
            (None, Some(count)) => {
                let seed = seed_override.or(self.seed).ok_or_else(|| {
                    CliError::Input("random grid needs a seed (grid.seed or --seed)".into())
                })?;
                Ok(random_points(&bounds, count, seed))
            }
            _ => Err(CliError::Input("grid needs exactly one of `counts` or `random`".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_report")]
    pub report: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            csv: default_csv(),
            report: default_report(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_csv() -> String {
    "trajectory.csv".into()
}

fn default_report() -> String {
    "report.txt".into()
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| CliError::Input(format!("parse error: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks names, dimensions and numeric ranges without running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        let input = |msg: String| Err(CliError::Input(msg));
        let Some(system) = builtin_system(&self.system) else {
            return input(format!(
                "unknown system {:?}; known systems: {}",
                self.system,
                SYSTEM_NAMES.join(", ")
            ));
        };
        let (n, r) = (system.dim(), system.rank());
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return input(format!("tolerance must be positive, got {}", self.tolerance));
        }
        let family_for = |name: &str| -> Result<(), CliError> {
            match builtin_complete_solution(name) {
                Some((owner, _)) if owner == self.system => Ok(()),
                Some((owner, _)) => Err(CliError::Input(format!(
                    "complete solution {name:?} belongs to system {owner:?}"
                ))),
                None => Err(CliError::Input(format!(
                    "unknown complete solution {name:?}; known: {}",
                    FAMILY_NAMES.join(", ")
                ))),
            }
        };
        match self.task {
            TaskKind::Integrate => {
                let Some(t) = &self.integrate else {
                    return input("task integrate needs an [integrate] table".into());
                };
                check_len("integrate.x0", &t.x0, n)?;
                check_len("integrate.y0", &t.y0, r)?;
                check_run(t.t_end, t.dt)?;
                if let Some(name) = &t.complete_solution {
                    family_for(name)?;
                }
            }
            TaskKind::VerifySection => {
                let Some(t) = &self.verify_section else {
                    return input("task verify-section needs a [verify_section] table".into());
                };
                match (&t.section.constant, &t.section.family, &t.section.lambda) {
                    (Some(c), None, None) => check_len("section.constant", c, r)?,
                    (None, Some(name), Some(l)) => {
                        family_for(name)?;
                        check_len("section.lambda", l, r)?;
                    }
                    _ => {
                        return input("section needs either `constant` or both `family` and `lambda`".into())
                    }
                }
                check_grid(&t.grid, n)?;
                if let Some(f) = &t.flow {
                    check_len("flow.x0", &f.x0, n)?;
                    check_run(f.t_end, f.dt)?;
                }
            }
            TaskKind::VerifyComplete => {
                let Some(t) = &self.verify_complete else {
                    return input("task verify-complete needs a [verify_complete] table".into());
                };
                family_for(&t.complete_solution)?;
                check_grid(&t.grid, n)?;
                if t.lambdas.is_empty() {
                    return input("verify_complete.lambdas must not be empty".into());
                }
                for l in &t.lambdas {
                    check_len("verify_complete.lambdas entry", l, r)?;
                }
                if let Some(c) = &t.conservation {
                    check_len("conservation.x0", &c.x0, n)?;
                    check_len("conservation.y0", &c.y0, r)?;
                    check_run(c.t_end, c.dt)?;
                }
            }
            TaskKind::Geometry => {
                let Some(t) = &self.geometry else {
                    return input("task geometry needs a [geometry] table".into());
                };
                check_grid(&t.grid, n)?;
                if let Some(y) = &t.y {
                    check_len("geometry.y", y, r)?;
                }
            }
        }
        Ok(())
    }
}

fn check_len(what: &str, v: &[f64], expected: usize) -> Result<(), CliError> {
    if v.len() != expected {
        return Err(CliError::Input(format!("{what} has {} entries, expected {expected}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Input(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn check_run(t_end: f64, dt: f64) -> Result<(), CliError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(CliError::Input(format!("t_end must be non-negative, got {t_end}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::Input(format!("dt must be positive, got {dt}")));
    }
    if t_end / dt > 1e7 {
        return Err(CliError::Input(format!("t_end / dt = {:e} exceeds 1e7 steps", t_end / dt)));
    }
    Ok(())
}

fn check_grid(grid: &GridSpec, n: usize) -> Result<(), CliError> {
    check_len("grid.lo", &grid.lo, n)?;
    check_len("grid.hi", &grid.hi, n)?;
    if let Some(c) = &grid.counts {
        if c.len() != n {
            return Err(CliError::Input(format!("grid.counts has {} entries, expected {n}", c.len())));
        }
        if c.iter().product::<usize>() > 1_000_000 {
            return Err(CliError::Input("grid has more than 1e6 points".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
system = "free-particle-nonholonomic"
task = "integrate"

[integrate]
x0 = [0.0, 0.0, 0.0]
y0 = [1.0, 1.0]
t_end = 2.0
dt = 1e-3
"#;

    #[test]
    fn parses_integrate() {
        let s = Scenario::from_toml(BASE).unwrap();
        assert_eq!(s.task, TaskKind::Integrate);
        assert_eq!(s.tolerance, DEFAULT_TOLERANCE);
        assert_eq!(s.output.csv, "trajectory.csv");
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            BASE.replace("free-particle-nonholonomic", "pendulum"),
            BASE.replace("y0 = [1.0, 1.0]", "y0 = [1.0]"),
            BASE.replace("dt = 1e-3", "dt = -1.0"),
            BASE.replace("task = \"integrate\"", "task = \"fly\""),
            BASE.replace("[integrate]", "[integrate]\nbogus = 1"),
            BASE.replace("[integrate]", "[other]"),
            "system = ".to_string(),
        ] {
            assert!(matches!(Scenario::from_toml(&bad), Err(CliError::Input(_))), "{bad}");
        }
    }

    #[test]
    fn grid_forms() {
        let lattice = GridSpec { lo: vec![0.0; 2], hi: vec![1.0; 2], counts: Some(vec![2, 3]), random: None, seed: None };
        assert_eq!(lattice.points(None).unwrap().len(), 6);
        let random = GridSpec { counts: None, random: Some(4), ..lattice.clone() };
        assert!(random.points(None).is_err());
        assert_eq!(random.points(Some(3)).unwrap(), random.points(Some(3)).unwrap());
        let both = GridSpec { random: Some(4), ..lattice };
        assert!(both.points(Some(1)).is_err());
    }
}
