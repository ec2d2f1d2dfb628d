//! Acceptance criteria. Each criterion prints one PASS/FAIL line with its
//! measured values; the test fails if any criterion fails.

use std::cell::Cell;
use std::path::Path;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use relaxed_damage::convexify::{lower_convex_hull, ConvexGrid, GridSpec};
use relaxed_damage::damage::damage;
use relaxed_damage::fem::{Constraint, DirichletProgram, ElementKind, FeProblem, Mesh, MeshSpec, SolveReport};
use relaxed_damage::harness::{compare_curves, execute, max_pairwise_deviation, Curve, RunResult, Window};
use relaxed_damage::hyperelastic::{psi0_uniaxial, MaterialParams};
use relaxed_damage::material_point::{MaterialModel, PointHistory, PointResponse, Regime, TraceRow, Variant};
use relaxed_damage::microsphere::SphereScheme;
use relaxed_damage::scenario::Scenario;

fn scenario(file: &str) -> Scenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file)).unwrap()
}

#[derive(Default)]
struct Ledger {
    failures: Vec<usize>,
    /// Smallest incremental dissipation seen in any run, with its origin.
    min_dissipation: Vec<(String, f64)>,
    /// Largest phase-mixture reconstruction error seen in relaxed points.
    mixture_error: f64,
    relaxed_points: usize,
}

impl Ledger {
    fn report(&mut self, id: usize, title: &str, pass: bool, detail: String, elapsed: Duration) {
        println!("criterion {id} {} {title}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
        if !pass {
            self.failures.push(id);
        }
    }

    fn record_points(&mut self, name: &str, model: &MaterialModel, rows: &[TraceRow]) {
        let p = &model.params;
        let mut beta_k = 0.0;
        let mut min = f64::INFINITY;
        for row in rows {
            let r = &row.response;
            let d_new = damage(r.beta.max(beta_k), p).unwrap();
            let d_old = damage(beta_k, p).unwrap();
            min = min.min(psi0_uniaxial(row.f, p).unwrap() * (d_new - d_old));
            beta_k = r.beta.max(beta_k);
            if r.regime == Regime::Relaxed {
                self.relaxed_points += 1;
                self.mixture_error = self.mixture_error.max((r.xi * r.f_plus + (1.0 - r.xi) * r.f_minus - row.f).abs());
            }
        }
        self.min_dissipation.push((name.to_string(), min));
    }

    fn record_fe(&mut self, name: &str, report: &SolveReport) {
        let min = report.steps.iter().map(|s| s.min_dissipation).fold(f64::INFINITY, f64::min);
        self.min_dissipation.push((name.to_string(), min));
    }
}

/// Commits every stretch of a program, returning rows and the histories
/// after each step.
fn drive(model: &MaterialModel, stretches: &[f64]) -> (Vec<TraceRow>, Vec<PointHistory>) {
    let mut h = model.virgin_history();
    let mut rows = Vec::new();
    let mut hist = Vec::new();
    for (step, &f) in stretches.iter().enumerate() {
        let (r, n) = model.evaluate(f, &h).unwrap();
        rows.push(TraceRow { step, f, response: r });
        hist.push(n.clone());
        h = n;
    }
    (rows, hist)
}

fn row_at(rows: &[TraceRow], f: f64) -> &PointResponse {
    &rows.iter().find(|r| (r.f - f).abs() < 1e-9).expect("stretch on the program").response
}

fn fe(s: &Scenario) -> (SolveReport, Mesh) {
    match execute(s).unwrap() {
        RunResult::Fe { report, mesh } => (report, mesh),
        RunResult::Point(_) => panic!("not a finite-element scenario"),
    }
}

fn sweep(ledger: &mut Ledger, base: &Scenario, param: &str, values: &[&str], variant: Variant) -> Vec<(Curve, SolveReport, Mesh)> {
    values
        .iter()
        .map(|v| {
            let mut s = base.with_param(param, v).unwrap();
            s.variant = variant;
            let (report, mesh) = fe(&s);
            ledger.record_fe(&format!("{} {variant:?} {param}={v}", s.name), &report);
            let curve = Curve {
                x: std::iter::once(0.0).chain(report.steps.iter().map(|r| r.displacement)).collect(),
                y: std::iter::once(0.0).chain(report.steps.iter().map(|r| r.reaction)).collect(),
            };
            (curve, report, mesh)
        })
        .collect()
}

fn failures(runs: &[(Curve, SolveReport, Mesh)]) -> usize {
    runs.iter().filter(|r| r.1.failure.is_some()).count()
}

fn microstructure(ledger: &mut Ledger) {
    let t = Instant::now();
    let s = scenario("neohooke_point.toml");
    let model = s.model().unwrap();
    let (rows, _) = drive(&model, &s.point.as_ref().unwrap().stretches());
    let elapsed = t.elapsed();
    ledger.record_points("neohooke point", &model, &rows);
    let a = row_at(&rows, 2.2);
    let b = row_at(&rows, 2.8);
    let pass = (a.xi - 0.09).abs() <= 0.01
        && (a.f_minus - 1.078).abs() <= 0.02
        && (a.f_plus - 12.659).abs() <= 0.15
        && (a.beta_plus - 54.541).abs() <= 1.0
        && (a.beta - 0.566).abs() <= 0.005
        && (b.beta - 1.195).abs() <= 0.005
        && (b.xi - 0.22).abs() <= 0.01
        && (b.f_plus - 8.983).abs() <= 0.15
        && (b.beta_plus - a.beta_plus).abs() <= 0.01 * a.beta_plus
        && elapsed < Duration::from_secs(5);
    let detail = format!(
        "F=2.2: xi {:.4} F- {:.4} F+ {:.4} beta {:.4} beta+ {:.3}; F=2.8: xi {:.4} F+ {:.4} beta {:.4} beta+ {:.3}",
        a.xi, a.f_minus, a.f_plus, a.beta, a.beta_plus, b.xi, b.f_plus, b.beta, b.beta_plus
    );
    ledger.report(1, "two-phase microstructure of the neo-Hookean point", pass, detail, elapsed);
}

/// First stretch from which the stress stays constant to `tol` per step.
fn plateau_onset(rows: &[TraceRow], tol: f64) -> Option<f64> {
    let mut onset = None;
    for w in rows.windows(2) {
        if (w[1].response.sigma - w[0].response.sigma).abs() < tol {
            onset.get_or_insert(w[0].f);
        } else {
            onset = None;
        }
    }
    onset
}

fn plateau(ledger: &mut Ledger) {
    let t = Instant::now();
    let s = scenario("neohooke_point.toml");
    let model = s.model().unwrap();
    let (rows, _) = drive(&model, &s.point.as_ref().unwrap().stretches());
    let onset = plateau_onset(&rows, 1e-6);
    let pass = onset.is_some_and(|f| (f - 4.1).abs() <= 0.2);
    ledger.report(2, "stress plateau of the neo-Hookean point", pass, format!("constant from F = {onset:?}"), t.elapsed());
}

fn relaxation_onset(ledger: &mut Ledger) {
    let t = Instant::now();
    let s = scenario("yeoh_point.toml");
    let model = s.model().unwrap();
    let (rows, _) = drive(&model, &s.point.as_ref().unwrap().stretches());
    ledger.record_points("yeoh point", &model, &rows);
    let first = rows.iter().position(|r| r.response.regime == Regime::Relaxed);
    let onset = first.map(|i| rows[i].f);
    let plateau_at = plateau_onset(&rows, 1e-6);
    let decreasing = first.is_some_and(|i| {
        rows[i..]
            .windows(2)
            .take_while(|w| plateau_at.is_none_or(|p| w[0].f < p))
            .all(|w| w[1].response.sigma < w[0].response.sigma)
    });
    let pass = onset.is_some_and(|f| (f - 1.18).abs() <= 0.02) && decreasing;
    ledger.report(
        3,
        "relaxation onset of the Yeoh point",
        pass,
        format!("first relaxed at F = {onset:?}, strictly softening until plateau at {plateau_at:?}: {decreasing}"),
        t.elapsed(),
    );
}

fn perturbation_1d(ledger: &mut Ledger) {
    let t = Instant::now();
    let base = scenario("perturbation_1d.toml");
    let kappas = ["0.4", "0.6", "0.8", "1.0"];
    let relaxed = sweep(ledger, &base, "mesh.kappa", &kappas, Variant::Reconvexified);
    let plain = sweep(ledger, &base, "mesh.kappa", &kappas, Variant::Unrelaxed);
    let elapsed = t.elapsed();
    let curves = |runs: Vec<(Curve, SolveReport, Mesh)>| runs.into_iter().map(|r| r.0).collect::<Vec<_>>();
    let fails = failures(&relaxed) + failures(&plain);
    let dev_relaxed = max_pairwise_deviation(&curves(relaxed), Window::All).unwrap();
    let dev_plain = max_pairwise_deviation(&curves(plain), Window::AfterPeak).unwrap();
    let pass = fails == 0 && dev_relaxed < 1e-3 && dev_plain > 0.1 && elapsed < Duration::from_secs(30);
    let detail = format!("reconvexified deviation {dev_relaxed:.3e}, unrelaxed after peak {dev_plain:.3e}, failed runs {fails}");
    ledger.report(4, "bar with perturbed element", pass, detail, elapsed);
}

/// Largest step against the rise-then-soften shape, relative to the peak,
/// and whether the curve ends below its peak.
fn shape_reversal(c: &Curve) -> (f64, bool) {
    let (px, py) = c.peak().unwrap();
    let k = c.x.iter().position(|&x| x == px).unwrap();
    let drop = c.y[..=k].windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let rise = c.y[k..].windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    (drop.max(rise) / py.abs(), *c.y.last().unwrap() < py * (1.0 - 1e-3))
}

fn perturbation_3d(ledger: &mut Ledger) {
    let t = Instant::now();
    let base = scenario("perturbation_3d.toml");
    let runs = sweep(ledger, &base, "mesh.kappa", &["0.4", "0.6", "0.8", "1.0"], Variant::Reconvexified);
    let elapsed = t.elapsed();
    let fails = failures(&runs);
    let (reversal, softens) = runs.iter().map(|r| shape_reversal(&r.0)).fold((0.0f64, true), |a, b| (a.0.max(b.0), a.1 && b.1));
    // fiber families relax one after another, which leaves steps far below the quadrature noise allowance
    let shape = softens && reversal < 1e-3;
    let dev = max_pairwise_deviation(&runs.into_iter().map(|r| r.0).collect::<Vec<_>>(), Window::All).unwrap();
    let pass = fails == 0 && dev < 1e-2 && shape && elapsed < Duration::from_secs(600);
    ledger.report(5, "stacked hexahedra with perturbed element", pass, format!("deviation {dev:.3e}, softens after peak {softens}, largest reversal {reversal:.1e} of peak, failed runs {fails}"), elapsed);
}

fn peak(c: &Curve) -> f64 {
    c.peak().unwrap().1.abs()
}

/// Largest ratio of an element's ξ to the mean ξ of its edge neighbours,
/// taken at the element with the largest ξ.
fn localization_ratio(report: &SolveReport, mesh: &Mesh) -> f64 {
    let nb = mesh.edge_neighbors();
    let (e, xi) = report.fields.iter().map(|f| (f.element, f.xi)).fold((0, f64::MIN), |b, c| if c.1 > b.1 { c } else { b });
    let mean = nb[e].iter().map(|&n| report.fields[n].xi).sum::<f64>() / nb[e].len() as f64;
    xi / mean
}

fn plate(ledger: &mut Ledger) {
    let t = Instant::now();
    let base = scenario("plate_with_hole.toml");
    let sizes = ["8", "32", "128"];
    let relaxed = sweep(ledger, &base, "mesh.elements", &sizes, Variant::Reconvexified);
    let plain = sweep(ledger, &base, "mesh.elements", &sizes, Variant::Unrelaxed);
    let fails = failures(&relaxed) + failures(&plain);
    let rel = |runs: &[(Curve, SolveReport, Mesh)]| {
        let (a, b) = (peak(&runs[1].0), peak(&runs[2].0));
        (a - b).abs() / b
    };
    let (d_relaxed, d_plain) = (rel(&relaxed), rel(&plain));
    let ratio = localization_ratio(&relaxed[2].1, &relaxed[2].2);
    let pass = fails == 0 && d_relaxed < 0.05 && d_plain > 0.15 && ratio <= 2.0;
    let peaks = |runs: &[(Curve, SolveReport, Mesh)]| runs.iter().map(|r| format!("{:.5}", peak(&r.0))).collect::<Vec<_>>().join("/");
    let detail = format!(
        "peaks reconvexified {} (finest pair {:.2}%), unrelaxed {} (finest pair {:.2}%), xi band ratio {ratio:.2}, failed runs {fails}",
        peaks(&relaxed),
        100.0 * d_relaxed,
        peaks(&plain),
        100.0 * d_plain
    );
    ledger.report(6, "plate with a hole under mesh refinement", pass, detail, t.elapsed());
}

fn successive(runs: &[(Curve, SolveReport, Mesh)]) -> Vec<f64> {
    runs.windows(2)
        .map(|w| compare_curves(&w[1].0, std::slice::from_ref(&w[0].0), 0.0, Window::All).unwrap().deviations[0])
        .collect()
}

fn shear_cube(ledger: &mut Ledger) {
    let t = Instant::now();
    let base = scenario("shear_cube.toml");
    let n = ["1", "2", "3", "4"];
    let relaxed = sweep(ledger, &base, "mesh.n", &n, Variant::Reconvexified);
    let plain = sweep(ledger, &base, "mesh.n", &n, Variant::Unrelaxed);
    let elapsed = t.elapsed();
    let fails = failures(&relaxed) + failures(&plain);
    let (dr, dp) = (successive(&relaxed), successive(&plain));
    let converging = dr.windows(2).all(|w| w[1] < w[0]);
    let diverging = dp.windows(2).any(|w| w[1] >= w[0]);
    let pass = fails == 0 && converging && diverging && elapsed < Duration::from_secs(1200);
    let fmt = |d: &[f64]| d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ");
    let detail = format!("successive deviations reconvexified [{}], unrelaxed [{}], failed runs {fails}", fmt(&dr), fmt(&dp));
    ledger.report(7, "sheared cube under mesh refinement", pass, detail, elapsed);
}

fn cyclic(ledger: &mut Ledger) {
    let t = Instant::now();
    let s = scenario("yeoh_cyclic.toml");
    let model = s.model().unwrap();
    let program = s.point.as_ref().unwrap();
    let stretches = program.stretches();
    let (rows, hist) = drive(&model, &stretches);
    ledger.record_points("yeoh cyclic", &model, &rows);
    let peak_stress = rows.iter().map(|r| r.response.sigma.abs()).fold(0.0, f64::max);
    let mut origin_err: f64 = 0.0;
    let mut jump: f64 = 0.0;
    let mut cursor = 0;
    for leg in &program.legs {
        let end = cursor + leg.steps - 1;
        let r = &rows[end];
        if (leg.to - 1.0).abs() < 1e-12 {
            origin_err = origin_err.max(r.response.sigma.abs());
        } else {
            // unloading branch evaluated at the turning point against the stress there
            let back = model.response(r.f - 1e-8, &hist[end]).unwrap();
            jump = jump.max((back.sigma - r.response.sigma).abs());
        }
        cursor += leg.steps;
    }
    let monotone = rows.windows(2).all(|w| w[1].response.xi >= w[0].response.xi - 1e-15)
        && hist.windows(2).all(|w| w[1].beta_k >= w[0].beta_k && w[1].xi_k >= w[0].xi_k);
    let pass = origin_err < 1e-8 && jump <= 0.01 * peak_stress && monotone;
    let detail = format!(
        "|sigma| at F=1: {origin_err:.2e}, turning-point jump {:.3}% of peak, xi/beta non-decreasing {monotone}",
        100.0 * jump / peak_stress
    );
    ledger.report(8, "cyclic stress softening of the Yeoh point", pass, detail, t.elapsed());
}

fn random_grid() -> impl Strategy<Value = ConvexGrid> {
    (5usize..120, prop::collection::vec(-1.0..1.0f64, 6), 0.0..0.3f64).prop_flat_map(|(n, coeffs, noise)| {
        prop::collection::vec(-1.0..1.0f64, n).prop_map(move |jitter| {
            let spec = GridSpec::new(-1.0, 2.0, jitter.len());
            let values = (0..jitter.len())
                .map(|i| {
                    let x = spec.abscissa(i);
                    coeffs.iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum::<f64>() + (3.0 * x).sin() + noise * jitter[i]
                })
                .collect();
            ConvexGrid { spec, values }
        })
    })
}

fn brute_force_vertices(g: &ConvexGrid) -> Vec<usize> {
    let n = g.values.len();
    let slope = |a: usize, b: usize| (g.values[b] - g.values[a]) / (g.abscissa(b) - g.abscissa(a));
    (0..n)
        .filter(|&i| {
            i == 0
                || i == n - 1
                || (0..i).map(|j| slope(j, i)).fold(f64::NEG_INFINITY, f64::max)
                    < (i + 1..n).map(|k| slope(i, k)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn max_fd_stiffness_error() -> f64 {
    let model = MaterialModel::new(MaterialParams::neo_hooke(0.5, 1.0, 0.2, 0.9), Variant::Reconvexified, GridSpec::new(0.4, 6.0, 1401))
        .unwrap();
    let con = |set: &str, component: usize| Constraint { set: set.into(), component, value: 0.0 };
    let cases = [
        (MeshSpec::PlateWithHole { elements: 8, radius_ratio: 0.25, length: 1.0 }, "SpherialDesign-225", vec![con("symmetry-x", 0), con("symmetry-y", 1)]),
        (MeshSpec::Cube { n: 1, kind: ElementKind::Hex20 }, "BazantOh-61x2", (0..3).map(|c| con("fixed", c)).collect()),
    ];
    let mut worst: f64 = 0.0;
    for (spec, scheme, constraints) in cases {
        let p = FeProblem::new(spec.generate().unwrap(), vec![model.clone()], Some(SphereScheme::by_name(scheme).unwrap())).unwrap();
        let program = DirichletProgram { n_steps: 1, constraints, driven: 0 };
        let states = p.virgin_states();
        for seed in 0..2u32 {
            // affine stretch plus a smooth ripple keeps every Jacobian positive
            let dim = p.mesh.dim;
            let g = [[0.3, 0.1, 0.0], [0.05, -0.1, 0.0], [0.0, 0.08, 0.2]];
            let u: Vec<f64> = (0..p.mesh.n_dofs())
                .map(|i| {
                    let (x, c) = (p.mesh.nodes[i / dim], i % dim);
                    let ripple = 0.02 * (3.0 * x[0] + 2.0 * x[1] - x[2] + c as f64 + seed as f64).sin();
                    (0..dim).map(|k| g[c][k] * x[k]).sum::<f64>() + ripple
                })
                .collect();
            let (_, _, k, free) = p.assemble_dense(&u, &states, &program).unwrap();
            let scale = k.abs().max();
            let h = 1e-7;
            for (col, &g) in free.iter().enumerate() {
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[g] += h;
                dn[g] -= h;
                let rp = p.assemble_dense(&up, &states, &program).unwrap().1;
                let rm = p.assemble_dense(&dn, &states, &program).unwrap().1;
                for (row, &gr) in free.iter().enumerate() {
                    worst = worst.max(((rp[gr] - rm[gr]) / (2.0 * h) - k[(row, col)]).abs() / scale);
                }
            }
        }
    }
    worst
}

fn properties(ledger: &mut Ledger) {
    let t = Instant::now();
    let config = Config { cases: 200, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let checked = Cell::new(0usize);
    let hull = runner.run(&random_grid(), |g| {
        let hull = lower_convex_hull(&g);
        prop_assert_eq!(&hull, &brute_force_vertices(&g));
        let slopes: Vec<f64> =
            hull.windows(2).map(|e| (g.values[e[1]] - g.values[e[0]]) / (g.abscissa(e[1]) - g.abscissa(e[0]))).collect();
        prop_assert!(slopes.windows(2).all(|s| s[0] <= s[1]));
        for (e, s) in hull.windows(2).zip(&slopes) {
            for i in e[0]..=e[1] {
                prop_assert!(g.values[e[0]] + s * (g.abscissa(i) - g.abscissa(e[0])) <= g.values[i] + 1e-12);
            }
        }
        checked.set(checked.get() + 1);
        Ok(())
    });
    let fd = max_fd_stiffness_error();
    let dyad = SphereScheme::builtin_names()
        .map(|n| (SphereScheme::by_name(n).unwrap().dyad_sum() - nalgebra::Matrix3::identity() / 3.0).abs().max())
        .fold(0.0, f64::max);
    let (worst_run, min_diss) =
        ledger.min_dissipation.iter().cloned().fold((String::new(), f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    let pass = hull.is_ok() && ledger.mixture_error <= 1e-10 && ledger.relaxed_points > 0 && min_diss >= 0.0 && fd <= 1e-4 && dyad <= 1e-8;
    let detail = format!(
        "hull oracle {} on {} functions; mixture error {:.1e} over {} relaxed points; min dissipation {min_diss:.2e} ({worst_run}, {} runs); stiffness FD {fd:.1e}; dyad {dyad:.1e}",
        if hull.is_ok() { "agrees" } else { "DISAGREES" },
        checked.get(),
        ledger.mixture_error,
        ledger.relaxed_points,
        ledger.min_dissipation.len()
    );
    ledger.report(9, "property suites", pass, detail, t.elapsed());
}

#[test]
fn acceptance_criteria() {
    let mut ledger = Ledger::default();
    microstructure(&mut ledger);
    plateau(&mut ledger);
    relaxation_onset(&mut ledger);
    perturbation_1d(&mut ledger);
    perturbation_3d(&mut ledger);
    plate(&mut ledger);
    shear_cube(&mut ledger);
    cyclic(&mut ledger);
    properties(&mut ledger);
    assert!(ledger.failures.is_empty(), "failed criteria: {:?}", ledger.failures);
}
