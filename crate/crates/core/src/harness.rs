//! Scenario drivers, CSV output, curve comparison and fit reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fem::{self, SolveReport};
use crate::material_point::{run_program, MaterialModel, TraceRow};
use crate::scenario::{Leg, PointProgram, Scenario};

/// Formats a float with 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TRACE_HEADER: &str = "step,F,sigma,xi,d,beta,beta_plus,beta_minus,F_minus,F_plus,regime";
pub const CURVE_HEADER: &str =
    "step,load_factor,displacement,reaction,reaction_other,iterations,residual,perturbations,min_dissipation";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let p = &r.response;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt(r.f),
            fmt(p.sigma),
            fmt(p.xi),
            fmt(p.d),
            fmt(p.beta),
            fmt(p.beta_plus),
            fmt(p.beta_minus),
            fmt(p.f_minus),
            fmt(p.f_plus),
            p.regime.as_str()
        );
    }
    s
}

pub fn curve_csv(report: &SolveReport) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in &report.steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt(r.load_factor),
            fmt(r.displacement),
            fmt(r.reaction),
            fmt(r.reaction_other),
            r.iterations,
            fmt(r.residual),
            r.perturbations,
            fmt(r.min_dissipation)
        );
    }
    s
}

pub fn fields_csv(report: &SolveReport) -> String {
    let mut s = String::from("element,sigma_xx,sigma_yy,sigma_zz,sigma_xy,sigma_yz,sigma_xz,xi,beta,relaxed_fraction\n");
    for f in &report.fields {
        let _ = write!(s, "{}", f.element);
        for v in f.sigma.iter().chain([f.xi, f.beta, f.relaxed_fraction].iter()) {
            let _ = write!(s, ",{}", fmt(*v));
        }
        s.push('\n');
    }
    s
}

pub fn nodes_csv(mesh: &fem::Mesh, u: &[f64]) -> String {
    let mut s = String::from("node,x,y,z,ux,uy,uz\n");
    for (n, x) in mesh.nodes.iter().enumerate() {
        let d = fem::solver::nodal(u, mesh.dim, n);
        let _ = writeln!(s, "{n},{},{},{},{},{},{}", fmt(x[0]), fmt(x[1]), fmt(x[2]), fmt(d[0]), fmt(d[1]), fmt(d[2]));
    }
    s
}

/// Result of running one scenario.
#[derive(Clone, Debug)]
pub enum RunResult {
    Point(Vec<TraceRow>),
    Fe { report: SolveReport, mesh: fem::Mesh },
}

impl RunResult {
    pub fn failure(&self) -> Option<&str> {
        match self {
            RunResult::Point(_) => None,
            RunResult::Fe { report, .. } => report.failure.as_deref(),
        }
    }

    /// (x, y) curve: stretch/Cauchy stress for points, displacement/reaction for FE runs.
    pub fn curve(&self) -> Curve {
        match self {
            RunResult::Point(rows) => Curve {
                x: rows.iter().map(|r| r.f).collect(),
                y: rows.iter().map(|r| r.response.sigma).collect(),
            },
            RunResult::Fe { report, .. } => Curve {
                x: report.steps.iter().map(|s| s.displacement).collect(),
                y: report.steps.iter().map(|s| s.reaction).collect(),
            },
        }
    }
}

/// Runs a scenario without writing anything.
pub fn execute(scenario: &Scenario) -> Result<RunResult> {
    scenario.validate()?;
    if let Some(p) = &scenario.point {
        let model = scenario.model()?;
        return Ok(RunResult::Point(run_program(&model, &p.stretches())?));
    }
    let problem = scenario.problem()?;
    let load = scenario.load.as_ref().expect("validated");
    let report = fem::solve(&problem, load, &scenario.solver, |_| {})?;
    Ok(RunResult::Fe { report, mesh: problem.mesh })
}

/// Runs a scenario and writes its CSV artifacts to `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunResult> {
    let result = execute(scenario)?;
    fs::create_dir_all(out_dir)?;
    match &result {
        RunResult::Point(rows) => fs::write(out_dir.join("trace.csv"), trace_csv(rows))?,
        RunResult::Fe { report, mesh } => {
            fs::write(out_dir.join("curve.csv"), curve_csv(report))?;
            fs::write(out_dir.join("fields.csv"), fields_csv(report))?;
            fs::write(out_dir.join("nodes.csv"), nodes_csv(mesh, &report.displacements))?;
        }
    }
    Ok(result)
}

/// Output directory: explicit override, then the scenario's own, then `out/<name>`.
pub fn output_dir(scenario: &Scenario, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| scenario.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name))
}

/// Sampled curve with increasing abscissae.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Curve {
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        let n = self.x.len();
        if n == 0 || x < self.x[0] - 1e-12 || x > self.x[n - 1] + 1e-12 {
            return None;
        }
        let k = self.x.partition_point(|&v| v < x).clamp(1, n.max(2) - 1);
        if n == 1 {
            return Some(self.y[0]);
        }
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        Some(self.y[k - 1] + t * (self.y[k] - self.y[k - 1]))
    }

    /// Abscissa of the largest |y|.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.x.iter().zip(&self.y).map(|(&x, &y)| (x, y)).max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    }

    /// Reads `x_col`/`y_col` from a CSV with a header row.
    pub fn from_csv(path: &Path, x_col: &str, y_col: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Input {
                path: path.to_path_buf(),
                message: format!("missing column {name:?}"),
            })
        };
        let (xi, yi) = (col(x_col)?, col(y_col)?);
        let mut c = Curve::default();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| {
                rec[i].trim().parse::<f64>().map_err(|e| Error::Input { path: path.to_path_buf(), message: e.to_string() })
            };
            c.x.push(num(xi)?);
            c.y.push(num(yi)?);
        }
        Ok(c)
    }

    /// Reads a curve, choosing displacement/reaction or F/sigma columns.
    pub fn from_result_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let has = |n: &str| headers.iter().any(|h| h == n);
        if has("displacement") && has("reaction") {
            Self::from_csv(path, "displacement", "reaction")
        } else if has("F") && has("sigma") {
            Self::from_csv(path, "F", "sigma")
        } else {
            Err(Error::Input { path: path.to_path_buf(), message: "no displacement/reaction or F/sigma columns".into() })
        }
    }
}

/// Which part of the reference curve a comparison covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    All,
    /// Only abscissae beyond the reference peak.
    AfterPeak,
}

/// Max deviation of each candidate from the reference at the reference
/// abscissae inside the common range, relative to the reference peak |y|.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveComparison {
    pub deviations: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn compare_curves(reference: &Curve, candidates: &[Curve], tolerance: f64, window: Window) -> Result<CurveComparison> {
    let (peak_x, peak_y) = reference.peak().ok_or_else(|| Error::Spec("empty reference curve".into()))?;
    let scale = peak_y.abs().max(f64::MIN_POSITIVE);
    let mut deviations = Vec::with_capacity(candidates.len());
    for (ci, cand) in candidates.iter().enumerate() {
        let mut dev: Option<f64> = None;
        for (&x, &y) in reference.x.iter().zip(&reference.y) {
            if window == Window::AfterPeak && x <= peak_x {
                continue;
            }
            if let Some(yc) = cand.interpolate(x) {
                dev = Some(dev.unwrap_or(0.0).max((yc - y).abs() / scale));
            }
        }
        deviations.push(dev.ok_or_else(|| Error::Spec(format!("candidate {ci} does not overlap the reference")))?);
    }
    let pass = deviations.iter().all(|&d| d <= tolerance);
    Ok(CurveComparison { deviations, tolerance, pass })
}

/// Largest pairwise deviation among a set of curves.
pub fn max_pairwise_deviation(curves: &[Curve], window: Window) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, a) in curves.iter().enumerate() {
        for b in &curves[i + 1..] {
            let c = compare_curves(a, std::slice::from_ref(b), f64::INFINITY, window)?;
            worst = worst.max(c.deviations[0]);
        }
    }
    Ok(worst)
}

/// Residuals of the model against an experimental stress-strain curve.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub strain: Vec<f64>,
    pub experiment: Vec<f64>,
    pub model: Vec<f64>,
    pub rms: f64,
    pub max_abs: f64,
}

impl FitReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("strain,experiment,model,residual\n");
        for i in 0..self.strain.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt(self.strain[i]),
                fmt(self.experiment[i]),
                fmt(self.model[i]),
                fmt(self.model[i] - self.experiment[i])
            );
        }
        s
    }
}

/// Stress of a monotone uniaxial run at engineering strains, `F = 1 + ε`.
pub fn model_stress_at_strains(model: &MaterialModel, strains: &[f64], increment: f64) -> Result<Vec<f64>> {
    let eps_max = strains.iter().fold(0.0f64, |m, &e| m.max(e));
    let steps = ((eps_max / increment).ceil() as usize).max(1);
    let program = PointProgram { start: 1.0, legs: vec![Leg { to: 1.0 + eps_max, steps }] };
    let rows = run_program(model, &program.stretches())?;
    let curve = Curve {
        x: std::iter::once(0.0).chain(rows.iter().map(|r| r.f - 1.0)).collect(),
        y: std::iter::once(0.0).chain(rows.iter().map(|r| r.response.sigma)).collect(),
    };
    strains
        .iter()
        .map(|&e| curve.interpolate(e).ok_or_else(|| Error::Spec(format!("strain {e} outside model range"))))
        .collect()
}

/// Evaluates the scenario's material at the experimental strains; no
/// parameters are adjusted.
pub fn fit_report(experiment: &Curve, scenario: &Scenario) -> Result<FitReport> {
    if experiment.x.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::Spec("experimental strains must be non-negative".into()));
    }
    let model = scenario.model()?;
    let stress = model_stress_at_strains(&model, &experiment.x, 1e-3)?;
    let res: Vec<f64> = stress.iter().zip(&experiment.y).map(|(m, e)| m - e).collect();
    let n = res.len().max(1) as f64;
    Ok(FitReport {
        strain: experiment.x.clone(),
        experiment: experiment.y.clone(),
        rms: (res.iter().map(|r| r * r).sum::<f64>() / n).sqrt(),
        max_abs: res.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        model: stress,
    })
}
