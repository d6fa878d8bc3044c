//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

mod common;

use std::f64::consts::{FRAC_PI_3, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use rand::Rng;
use yamabe_core::admissibility::{
    build_network, check_star_bruteforce, feasible_flow, star_condition_holds, target_angles, TargetOptions, EPS_STRICT,
};
use yamabe_core::curvature::{average_curvature, curvature_at, energy_along, rigidity_check, CoefficientMatrix};
use yamabe_core::flow::{
    envelope_violation, fit_convergence, lyapunov_derivative, lyapunov_slack, run, single_triangle_flow,
    spectral_floor, FlowMode, FlowOptions, FlowRun, FlowSystem, Outcome, SingleTriangleOptions, StepOptions,
};
use yamabe_core::mesh::Triangulation;
use yamabe_core::metric::{domain_report, normalize_product, ConformalFactor, PLMetric};
use yamabe_core::shapes;
use yamabe_core::triangle::{angle_derivative_matrix, angle_derivatives_lengths, triangle_angles, TriangleLengths};

const TRIANGLE_SAMPLES: usize = 1000;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-6;
const STRUCTURE_TOL: f64 = 1e-12;
const GRADIENT_TOL: f64 = 1e-9;
const GAUSS_BONNET_TOL: f64 = 1e-10;
const ENERGY_GRAD_TOL: f64 = 1e-5;
const EQUIVALENCE_TOL: f64 = 1e-7;
const CONVERGE_TOL: f64 = 1e-9;
const FIT_RESIDUAL_TOL: f64 = 1e-2;
const EQUILATERAL_TOL: f64 = 1e-8;
const DIAGONAL_TOL: f64 = 1e-3;

type Outcome_ = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tetra_start() -> (Triangulation, PLMetric, ConformalFactor) {
    let t = shapes::tetrahedron();
    let d = PLMetric::uniform(&t, 1.0);
    let u0 = normalize_product(&ConformalFactor::from_u(&[1.0, 1.0, 1.0, 1.3]).unwrap());
    (t, d, u0)
}

/// Random triangle with sides in a moderate shape range, and factors in
/// `[0.6, 1.6]` that keep it comfortably inside the domain.
fn random_conformal_triangle(rng: &mut impl Rng) -> (TriangleLengths, [f64; 3]) {
    loop {
        let d = [0, 1, 2].map(|_| rng.random_range(0.5..2.0));
        let u = [0, 1, 2].map(|_| rng.random_range(0.6..1.6));
        let Ok(t) = TriangleLengths::new(d) else { continue };
        if t.slack() < 0.02 {
            continue;
        }
        let x = [d[0] * u[1] * u[2], d[1] * u[0] * u[2], d[2] * u[0] * u[1]];
        if TriangleLengths::new(x).is_ok_and(|t| t.slack() > 0.02) {
            return (t, u);
        }
    }
}

fn angles_at(d: &TriangleLengths, w: [f64; 3]) -> [f64; 3] {
    let x = d.get();
    let l = [
        x[0] * (w[1] + w[2]).exp(),
        x[1] * (w[0] + w[2]).exp(),
        x[2] * (w[0] + w[1]).exp(),
    ];
    triangle_angles(&TriangleLengths::new(l).unwrap()).0
}

fn criterion_1() -> Outcome_ {
    let mut rng = common::rng(1);
    let mut worst_fd = 0.0f64;
    let mut worst_struct = 0.0f64;
    let mut worst_eig = f64::NEG_INFINITY;
    for _ in 0..TRIANGLE_SAMPLES {
        let (d, u) = random_conformal_triangle(&mut rng);
        let m = angle_derivative_matrix(&d, u).map_err(|e| e.to_string())?;
        let w = u.map(f64::ln);
        let scale = m.m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        for s in 0..3 {
            let mut wp = w;
            let mut wm = w;
            wp[s] += FD_STEP;
            wm[s] -= FD_STEP;
            let (tp, tm) = (angles_at(&d, wp), angles_at(&d, wm));
            for r in 0..3 {
                let fd = (tp[r] - tm[r]) / (2.0 * FD_STEP);
                worst_fd = worst_fd.max((fd - m.m[r][s]).abs() / scale);
            }
        }
        for r in 0..3 {
            let row: f64 = m.m[r].iter().sum();
            worst_struct = worst_struct.max(row.abs() / scale);
            for s in 0..3 {
                worst_struct = worst_struct.max((m.m[r][s] - m.m[s][r]).abs() / scale);
            }
        }
        worst_eig = worst_eig.max(m.nonzero_eigenvalues()[1]);
    }
    ensure(worst_fd <= FD_REL_TOL, || {
        format!("finite-difference mismatch {worst_fd:e}")
    })?;
    ensure(worst_struct <= STRUCTURE_TOL, || {
        format!("symmetry/row-sum defect {worst_struct:e}")
    })?;
    ensure(worst_eig < 0.0, || format!("largest nonzero eigenvalue {worst_eig}"))?;
    Ok(format!(
        "{TRIANGLE_SAMPLES} triangles; FD rel err {worst_fd:.1e}, structure {worst_struct:.1e}, max eig {worst_eig:.3}"
    ))
}

fn criterion_2() -> Outcome_ {
    let mut rng = common::rng(2);
    let mut worst = 0.0f64;
    for _ in 0..TRIANGLE_SAMPLES {
        let (t, _) = random_conformal_triangle(&mut rng);
        let x = t.get();
        let dm = angle_derivatives_lengths(&t);
        let scale = dm.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        for s in 0..3 {
            let h = FD_STEP * x[s];
            let mut xp = x;
            let mut xm = x;
            xp[s] += h;
            xm[s] -= h;
            let tp = triangle_angles(&TriangleLengths::new(xp).unwrap()).0;
            let tm = triangle_angles(&TriangleLengths::new(xm).unwrap()).0;
            for r in 0..3 {
                let fd = (tp[r] - tm[r]) / (2.0 * h);
                worst = worst.max((fd - dm[r][s]).abs() / scale);
            }
        }
    }
    ensure(worst <= FD_REL_TOL, || format!("finite-difference mismatch {worst:e}"))?;
    let d = angle_derivatives_lengths(&TriangleLengths::new([3.0, 4.0, 5.0]).unwrap());
    let got = [d[0][0], d[0][1], d[0][2]];
    let want = [0.25, 0.0, -0.15];
    for (g, w) in got.iter().zip(want) {
        ensure((g - w).abs() <= GRADIENT_TOL, || {
            format!("(3,4,5): got {got:?}, want {want:?}")
        })?;
    }
    Ok(format!(
        "{TRIANGLE_SAMPLES} triangles; FD rel err {worst:.1e}; (3,4,5) row 0 = {got:?}"
    ))
}

fn criterion_3() -> Outcome_ {
    let mut rng = common::rng(3);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (t, want) in [
        (shapes::tetrahedron(), 4.0 * PI),
        (shapes::icosahedron(), 4.0 * PI),
        (shapes::torus7(), 0.0),
    ] {
        let d = PLMetric::uniform(&t, 1.0);
        let mut states = vec![vec![0.0; t.n_vertices()]];
        while states.len() < 51 {
            let w = common::random_w(t.n_vertices(), 0.2, &mut rng);
            if domain_report(&t, &d, &ConformalFactor::from_w(w.clone())).in_domain {
                states.push(w);
            }
        }
        for w in states {
            let total = curvature_at(&t, &d, &w).map_err(|e| e.to_string())?.total();
            worst = worst.max((total - want).abs());
            count += 1;
        }
    }
    ensure(worst < GAUSS_BONNET_TOL, || format!("|ΣK - 2πχ| = {worst:e}"))?;
    Ok(format!("{count} metrics; max |ΣK - 2πχ| = {worst:.1e}"))
}

/// Per-step G monotonicity; returns the number of accepted steps checked.
fn check_run_monotone(run: &FlowRun) -> Result<usize, String> {
    let mut steps = 0;
    for seg in &run.segments {
        let n = seg.triangulation.n_vertices();
        for p in seg.samples.windows(2) {
            ensure(p[1].g <= p[0].g + lyapunov_slack(p[0].g, n), || {
                format!("G rose from {:e} to {:e} at t = {}", p[0].g, p[1].g, p[1].t)
            })?;
            ensure(p[1].f <= p[0].f, || {
                format!("F rose from {} to {} at t = {}", p[0].f, p[1].f, p[1].t)
            })?;
            steps += 1;
        }
    }
    Ok(steps)
}

fn random_runs() -> Result<Vec<(Triangulation, PLMetric, FlowRun)>, String> {
    let mut rng = common::rng(4);
    let mut out = Vec::new();
    for t in [shapes::tetrahedron(), shapes::icosahedron()] {
        for _ in 0..20 {
            let d = common::random_metric(&t, 0.1, &mut rng);
            let w = common::random_w(t.n_vertices(), 0.15, &mut rng);
            let opts = FlowOptions {
                max_time: 100.0,
                ..FlowOptions::default()
            };
            let r = run(&t, &d, &ConformalFactor::from_w(w), &opts).map_err(|e| e.to_string())?;
            out.push((t.clone(), d, r));
        }
    }
    Ok(out)
}

fn criterion_4(runs: &[(Triangulation, PLMetric, FlowRun)]) -> Outcome_ {
    let mut steps = 0;
    let mut worst_struct = 0.0f64;
    let mut top_eig = f64::NEG_INFINITY;
    for (t, d, r) in runs {
        steps += check_run_monotone(r)?;
        let seg = &r.segments[0];
        for s in seg.samples.iter().step_by(10) {
            let c = CoefficientMatrix::assemble(t, d, &s.w).map_err(|e| e.to_string())?;
            let scale = c.norm().map_err(|e| e.to_string())?;
            worst_struct = worst_struct.max(c.max_asymmetry() / scale);
            worst_struct = worst_struct.max(c.row_sums().iter().fold(0.0f64, |a, x| a.max(x.abs())) / scale);
            let ev = c.projected_eigenvalues().map_err(|e| e.to_string())?;
            top_eig = top_eig.max(*ev.last().unwrap());
        }
    }
    ensure(worst_struct <= STRUCTURE_TOL, || {
        format!("symmetry/row-sum defect {worst_struct:e}")
    })?;
    ensure(top_eig < 0.0, || format!("largest projected eigenvalue {top_eig}"))?;
    Ok(format!(
        "{} runs, {steps} accepted steps with ΣK² non-increasing; C defect {worst_struct:.1e}, max projected eig {top_eig:.3}",
        runs.len()
    ))
}

fn criterion_5(runs: &[(Triangulation, PLMetric, FlowRun)]) -> Outcome_ {
    for (_, _, r) in runs {
        check_run_monotone(r)?;
    }
    let mut worst_grad = 0.0f64;
    let mut worst_path = 0.0f64;
    let mut sampled = 0;
    for (t, d, r) in runs.iter().step_by(4) {
        let targets = target_angles(t, TargetOptions::default())
            .map_err(|e| e.to_string())?
            .targets;
        let seg = &r.segments[0];
        let idx = seg.samples.len() / 3;
        let path: Vec<Vec<f64>> = seg.samples[..=idx].iter().map(|s| s.w.clone()).collect();
        let star = &seg.samples[idx];
        // trajectory energy against the accumulated value
        let along = energy_along(t, d, &path, &targets).map_err(|e| e.to_string())?.value;
        worst_path = worst_path.max((along - (star.f - seg.samples[0].f)).abs());
        let sys = FlowSystem::new(t, d, FlowMode::Normalized);
        let v = sys.velocity(&star.w).map_err(|e| e.to_string())?;
        for i in 0..t.n_vertices() {
            let step = |h: f64| {
                let mut w = star.w.clone();
                w[i] += h;
                energy_along(t, d, &[star.w.clone(), w], &targets).map(|e| star.f + e.value)
            };
            let (fp, fm) = (
                step(FD_STEP).map_err(|e| e.to_string())?,
                step(-FD_STEP).map_err(|e| e.to_string())?,
            );
            let fd = (fp - fm) / (2.0 * FD_STEP);
            worst_grad = worst_grad.max((fd + v[i]).abs());
        }
        sampled += 1;
    }
    ensure(sampled >= 10, || format!("only {sampled} sampled states"))?;
    ensure(worst_grad <= ENERGY_GRAD_TOL, || format!("∇F + dw/dt = {worst_grad:e}"))?;
    ensure(worst_path <= ENERGY_GRAD_TOL, || {
        format!("accumulated F off by {worst_path:e}")
    })?;
    Ok(format!(
        "{sampled} states; max |∇F + dw/dt| = {worst_grad:.1e}; accumulated vs integrated F {worst_path:.1e}; F non-increasing on {} runs",
        runs.len()
    ))
}

fn criterion_6() -> Outcome_ {
    let mut rng = common::rng(6);
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for t in [
        shapes::tetrahedron(),
        shapes::octahedron(),
        shapes::icosahedron(),
        shapes::torus7(),
        shapes::genus2(),
    ] {
        let mut done = 0;
        while done < 50 {
            let d = common::random_metric(&t, 0.1, &mut rng);
            let w = common::random_w(t.n_vertices(), 0.15, &mut rng);
            if !domain_report(&t, &d, &ConformalFactor::from_w(w.clone())).in_domain {
                continue;
            }
            let r = rigidity_check(&t, &d, &w).map_err(|e| e.to_string())?;
            ensure(r.locally_rigid, || format!("singular projected Jacobian: {r:?}"))?;
            worst = worst.min(r.min_singular_value);
            done += 1;
            count += 1;
        }
    }
    Ok(format!("{count} states on 5 meshes; min singular value {worst:.3e}"))
}

fn criterion_7() -> Outcome_ {
    let (t, d, u0) = tetra_start();
    let k_av = average_curvature(&t);
    let step = StepOptions {
        dt0: 1e-3,
        dt_max: 1e-3,
        ..StepOptions::default()
    };
    let un = FlowSystem::new(&t, &d, FlowMode::Unnormalized);
    let no = FlowSystem::new(&t, &d, FlowMode::Normalized);
    let mut su = un.state(0.0, u0.w().to_vec(), 0.0).map_err(|e| e.to_string())?;
    let mut sn = no.state(0.0, u0.w().to_vec(), 0.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for t_end in [0.1, 0.5, 1.0] {
        su = un.integrate_to(&su, t_end, step).map_err(|e| e.to_string())?.0;
        sn = no.integrate_to(&sn, t_end, step).map_err(|e| e.to_string())?.0;
        for i in 0..4 {
            worst = worst.max((su.w[i] + k_av * t_end - sn.w[i]).abs());
        }
    }
    ensure(worst <= EQUIVALENCE_TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!(
        "t ∈ {{0.1, 0.5, 1.0}}; max |w_un + K_av t - w_norm| = {worst:.1e}"
    ))
}

fn tetra_run() -> Result<FlowRun, String> {
    let (t, d, u0) = tetra_start();
    run(&t, &d, &u0, &FlowOptions::default()).map_err(|e| e.to_string())
}

fn criterion_8(r: &FlowRun) -> Outcome_ {
    let (t, _, _) = tetra_start();
    let k_av = average_curvature(&t);
    ensure(r.outcome == Outcome::Converged, || format!("outcome {:?}", r.outcome))?;
    let dev = r.final_state.max_deviation(k_av);
    ensure(dev < CONVERGE_TOL, || format!("final deviation {dev:e}"))?;
    let seg = &r.segments[0];
    let fit = fit_convergence(&seg.lyapunov_series()).map_err(|e| e.to_string())?;
    ensure(fit.rate > 0.0, || format!("rate {}", fit.rate))?;
    ensure(fit.residual < FIT_RESIDUAL_TOL, || {
        let logs: Vec<f64> = seg.samples.iter().filter(|s| s.g > 0.0).map(|s| s.g.ln()).collect();
        let span =
            logs.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x)) - logs.iter().fold(f64::INFINITY, |a, &x| a.min(x));
        format!(
            "fit residual {:.4} over {} tail points (ln G spans {span:.1}; rate {:.4}, λ = {:.4}) exceeds {FIT_RESIDUAL_TOL}",
            fit.residual, fit.points, fit.rate, spectral_floor(seg).unwrap_or(f64::NAN)
        )
    })?;
    let lambda = spectral_floor(seg).map_err(|e| e.to_string())?;
    ensure(lambda > 0.0, || "zero spectral floor".into())?;
    let mut worst = f64::NEG_INFINITY;
    for s in &seg.samples {
        let gp = lyapunov_derivative(&seg.triangulation, &seg.base, &s.w).map_err(|e| e.to_string())?;
        if s.g > 0.0 {
            worst = worst.max((gp + lambda * s.g) / s.g);
        }
    }
    ensure(worst <= 1e-9, || format!("G' + λG exceeds zero (relative {worst:e})"))?;
    Ok(format!(
        "converged at t = {:.2}, ‖K-K_av‖∞ = {dev:.1e}; rate {:.4}, residual {:.1e}, λ = {lambda:.4}, max (G'+λG)/G = {worst:.3}",
        r.final_state.t, fit.rate, fit.residual
    ))
}

fn criterion_9() -> Outcome_ {
    let d = TriangleLengths::new([3.0, 4.0, 5.0]).unwrap();
    let r = single_triangle_flow(&d, [1.0; 3], &SingleTriangleOptions::default()).map_err(|e| e.to_string())?;
    ensure(r.converged, || "did not converge".into())?;
    let last = r.samples.last().unwrap();
    let err = last.angles.iter().map(|a| (a - FRAC_PI_3).abs()).fold(0.0, f64::max);
    ensure(err <= EQUILATERAL_TOL, || format!("angle error {err:e}"))?;
    for p in r.samples.windows(2) {
        ensure(p[1].g < p[0].g, || {
            format!("G not decreasing at t = {}: {:e} -> {:e}", p[1].t, p[0].g, p[1].g)
        })?;
    }
    ensure(r.min_slack > 1e-6, || format!("slack dropped to {:e}", r.min_slack))?;
    Ok(format!(
        "{} steps to t = {:.2}; angle error {err:.1e}; min slack {:.3}",
        r.samples.len() - 1,
        last.t,
        r.min_slack
    ))
}

fn criterion_10() -> Outcome_ {
    let corpus = common::small_corpus();
    ensure(corpus.len() >= 20, || format!("corpus has {} meshes", corpus.len()))?;
    let mut admissible = 0;
    for (name, t) in &corpus {
        ensure(t.n_vertices() <= 10, || {
            format!("{name} has {} vertices", t.n_vertices())
        })?;
        let brute = check_star_bruteforce(t).map_err(|e| e.to_string())?;
        let flow = feasible_flow(&build_network(t, EPS_STRICT));
        ensure(brute.admissible == flow.feasible, || {
            format!("{name}: brute force {} vs network {}", brute.admissible, flow.feasible)
        })?;
        if t.euler_characteristic() >= 0 {
            ensure(flow.feasible, || format!("{name} (χ >= 0) reported non-admissible"))?;
        }
        admissible += flow.feasible as usize;
    }
    // a non-admissible control outside the size bound
    let bad = shapes::genus2_crowded(4);
    let net = build_network(&bad, EPS_STRICT);
    let res = feasible_flow(&net);
    ensure(
        !res.feasible && !check_star_bruteforce(&bad).unwrap().admissible,
        || "crowded genus-2 control not rejected".into(),
    )?;
    let cert = res.violating_vertices(&net).unwrap();
    ensure(!star_condition_holds(&bad, &cert), || {
        format!("certificate {cert:?} does not violate the count")
    })?;
    Ok(format!(
        "{} meshes with |V| <= 10 agree ({admissible} admissible); crowded genus-2 control rejected with certificate of {} vertices",
        corpus.len(),
        cert.len()
    ))
}

fn criterion_11(runs: &[&FlowRun]) -> Outcome_ {
    let mut segs = 0;
    for r in runs {
        for seg in &r.segments {
            if let Some((t, v)) = envelope_violation(seg) {
                return Err(format!("vertex {v} leaves the envelope at t = {t}"));
            }
            segs += 1;
        }
    }
    Ok(format!(
        "{} runs, {segs} segments inside e^(-ct)/c <= u <= c e^(ct)",
        runs.len()
    ))
}

fn surgery_example() -> (Triangulation, PLMetric) {
    let t = shapes::octahedron();
    let lengths = t
        .edges()
        .iter()
        .map(|&e| match e {
            [0, 1] => 2.0,
            [0, 4] | [1, 4] => 1.0 + 2e-7,
            _ => 2.0,
        })
        .collect();
    let d = PLMetric::new(&t, lengths).unwrap();
    (t, d)
}

fn surgery_run() -> Result<FlowRun, String> {
    let (t, d) = surgery_example();
    // a finer step cap resolves the post-surgery segment over more steps
    let opts = FlowOptions {
        step: StepOptions {
            dt_max: 0.05,
            ..StepOptions::default()
        },
        ..FlowOptions::default()
    };
    run(&t, &d, &ConformalFactor::ones(6), &opts).map_err(|e| e.to_string())
}

fn criterion_12(r: &FlowRun) -> Outcome_ {
    let (t, d) = surgery_example();
    let slack = domain_report(&t, &d, &ConformalFactor::ones(6)).worst_slack;
    ensure((slack - 1e-7).abs() < 1e-9, || format!("initial slack {slack:e}"))?;
    ensure(r.surgeries() == 1, || format!("{} surgeries", r.surgeries()))?;
    let diagonal = r
        .events
        .iter()
        .find_map(|e| match e {
            yamabe_core::flow::FlowEvent::Surgery {
                removed_edge,
                inserted_edge,
                diagonal,
                ..
            } if *removed_edge == [0, 1] && *inserted_edge == [4, 5] => Some(*diagonal),
            _ => None,
        })
        .ok_or("no flip of (0,1) to (4,5)")?;
    let err = (diagonal - 3f64.sqrt()).abs();
    ensure(err <= DIAGONAL_TOL, || format!("diagonal {diagonal}, off by {err:e}"))?;
    let seg = &r.segments[1];
    ensure(seg.accepted_steps >= 100, || {
        format!("only {} steps after surgery", seg.accepted_steps)
    })?;
    let mut worst = 0.0f64;
    for s in &seg.samples {
        worst = worst.max((s.k.iter().sum::<f64>() - 4.0 * PI).abs());
    }
    ensure(worst < GAUSS_BONNET_TOL, || format!("Gauss-Bonnet defect {worst:e}"))?;
    Ok(format!(
        "diagonal {diagonal:.6} (√3 + {:.1e}); {} steps after surgery, outcome {:?}, GB defect {worst:.1e}",
        diagonal - 3f64.sqrt(),
        seg.accepted_steps,
        r.outcome
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome_| {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match res {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {why}");
            }
        }
    };
    report(1, "angle-derivative matrix", &mut criterion_1);
    report(2, "angle derivatives in the lengths", &mut criterion_2);
    report(3, "Gauss-Bonnet", &mut criterion_3);
    let runs = random_runs();
    let tetra = tetra_run();
    let surgery = surgery_run();
    report(4, "curvature-square decrease and coefficient matrix", &mut || {
        criterion_4(runs.as_ref().map_err(Clone::clone)?)
    });
    report(5, "energy gradient along trajectories", &mut || {
        criterion_5(runs.as_ref().map_err(Clone::clone)?)
    });
    report(6, "local rigidity", &mut criterion_6);
    report(7, "normalized and unnormalized flows agree", &mut criterion_7);
    report(8, "exponential convergence", &mut || {
        criterion_8(tetra.as_ref().map_err(Clone::clone)?)
    });
    report(9, "single triangle", &mut criterion_9);
    report(10, "admissibility oracle agreement", &mut criterion_10);
    report(11, "a-priori envelope", &mut || {
        let mut all: Vec<&FlowRun> = runs.as_ref().map_err(Clone::clone)?.iter().map(|r| &r.2).collect();
        all.push(tetra.as_ref().map_err(Clone::clone)?);
        all.push(surgery.as_ref().map_err(Clone::clone)?);
        criterion_11(&all)
    });
    report(12, "surgery continuity", &mut || {
        criterion_12(surgery.as_ref().map_err(Clone::clone)?)
    });
    if failed == 0 {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
