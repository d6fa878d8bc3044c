//! Front end for the `yamabe` binary: configuration, commands and output.
//!
//! Exit codes: 0 on success or convergence, 1 when the flow reaches the
//! time limit unconverged, 2 on a singularity left in place (surgery off or
//! an essential singularity), 3 on any error.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use yamabe_core::admissibility::{
    build_network, check_star_bruteforce, feasible_flow, target_angles, FlowNetwork, NodeKind, TargetOptions,
    BRUTE_FORCE_LIMIT, EPS_STRICT,
};
use yamabe_core::curvature::{average_curvature, curvature_at, energy, rigidity_check, CoefficientMatrix};
use yamabe_core::flow::{fit_convergence, multi_start, run, single_triangle_flow, FlowRun, Outcome};
use yamabe_core::io::{self as yio, read_mesh, MeshData};
use yamabe_core::metric::{normalize_product, ConformalFactor, PLMetric};
use yamabe_core::triangle::TriangleLengths;

pub use config::{parse_config, CliError, Mode, Parsed, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_MAX_TIME: u8 = 1;
pub const EXIT_SINGULARITY: u8 = 2;
pub const EXIT_ERROR: u8 = 3;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load_mesh(cfg: &RunConfig) -> Result<MeshData, CliError> {
    let path = cfg
        .mesh
        .as_deref()
        .ok_or_else(|| CliError::MissingInput("--mesh is required".into()))?;
    read_mesh(path, cfg.lengths.as_deref()).map_err(|source| CliError::BadMeshFile {
        path: path.display().to_string(),
        source,
    })
}

fn initial_factor(cfg: &RunConfig, n: usize) -> Result<ConformalFactor, CliError> {
    match &cfg.u0 {
        None => Ok(ConformalFactor::ones(n)),
        Some(u) if u.len() != n => Err(CliError::InvalidValue {
            flag: "--u0".into(),
            msg: format!("expected {n} values, got {}", u.len()),
        }),
        Some(u) => Ok(ConformalFactor::from_u(u)?),
    }
}

/// `trace.csv`, `trace.seg1.csv`, ...
pub fn segment_path(base: &Path, k: usize) -> PathBuf {
    if k == 0 {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.seg{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seg{k}"),
    };
    base.with_file_name(name)
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn run_summary(r: &FlowRun, k_av: f64) -> Value {
    let fit = fit_convergence(&r.segments.last().unwrap().lyapunov_series()).ok();
    json!({
        "outcome": r.outcome,
        "t": r.final_state.t,
        "surgeries": r.surgeries(),
        "accepted_steps": r.accepted_steps(),
        "max_deviation": r.final_state.max_deviation(k_av),
        "g": r.final_state.g,
        "fit": fit,
    })
}

fn exit_code(o: Outcome) -> u8 {
    match o {
        Outcome::Converged => EXIT_OK,
        Outcome::MaxTime => EXIT_MAX_TIME,
        Outcome::Singularity => EXIT_SINGULARITY,
    }
}

fn cmd_flow(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = load_mesh(cfg)?;
    let (tri, d) = (&m.triangulation, &m.metric);
    let k_av = average_curvature(tri);
    if let Some(n) = cfg.multistart {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let starts: Vec<ConformalFactor> = (0..n)
            .map(|_| ConformalFactor::from_w((0..tri.n_vertices()).map(|_| rng.random_range(-0.2..0.2)).collect()))
            .collect();
        let runs = multi_start(tri, d, &starts, &cfg.flow);
        let mut code = EXIT_OK;
        let mut rows = Vec::new();
        for r in runs {
            let r = r?;
            code = code.max(exit_code(r.outcome));
            rows.push(run_summary(&r, k_av));
        }
        writeln!(out, "{}", json!({ "runs": rows })).map_err(io_err(Path::new("<stdout>")))?;
        return Ok(code);
    }
    let mut u0 = initial_factor(cfg, tri.n_vertices())?;
    if cfg.mode == Mode::FlowNormalized {
        u0 = normalize_product(&u0);
    }
    let r = run(tri, d, &u0, &cfg.flow)?;
    info!("{} accepted steps, outcome {:?}", r.accepted_steps(), r.outcome);
    if let Some(path) = &cfg.out {
        for seg in &r.segments {
            let p = segment_path(path, seg.index);
            write_with(&p, |w| {
                yio::write_trace(w, seg.triangulation.n_vertices(), &seg.samples)
            })?;
        }
    }
    if let Some(path) = &cfg.events {
        write_with(path, |w| yio::write_events(w, &r.events))?;
    }
    if let Some(path) = &cfg.final_mesh {
        let tri = r.final_triangulation();
        let metric = PLMetric::new(tri, r.final_lengths.clone())?;
        yio::write_file(path, &yio::mesh_to_json(tri, &metric)).map_err(|source| CliError::BadMeshFile {
            path: path.display().to_string(),
            source,
        })?;
    }
    writeln!(out, "{}", run_summary(&r, k_av)).map_err(io_err(Path::new("<stdout>")))?;
    Ok(exit_code(r.outcome))
}

fn cmd_admissible(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = load_mesh(cfg)?;
    let tri = &m.triangulation;
    let net = build_network(tri, EPS_STRICT);
    let res = feasible_flow(&net);
    let mut report = json!({
        "admissible": res.feasible,
        "vertices": tri.n_vertices(),
        "faces": tri.n_faces(),
        "euler_characteristic": tri.euler_characteristic(),
    });
    if tri.n_vertices() <= BRUTE_FORCE_LIMIT {
        let b = check_star_bruteforce(tri)?;
        report["brute_force_agrees"] = json!(b.admissible == res.feasible);
        report["worst_subset"] = json!(b.worst_subset);
        report["worst_ratio"] = json!([b.worst_ratio.0, b.worst_ratio.1]);
    }
    if cfg.witness {
        if let Some(flow) = &res.flow {
            let corners: Vec<Value> = (0..tri.n_faces())
                .map(|f| {
                    json!({
                        "face": tri.face(f),
                        "angles": (0..3).map(|r| flow[FlowNetwork::corner_edge(f, r)]).collect::<Vec<_>>(),
                    })
                })
                .collect();
            report["witness"] = json!({ "eps": EPS_STRICT, "corners": corners });
        }
        if let Some(u) = &res.violating_subset {
            let (mut vs, mut fs, mut hub) = (Vec::new(), Vec::new(), false);
            for &x in u {
                match net.kind(x) {
                    NodeKind::Vertex(v) => vs.push(v),
                    NodeKind::Face(f) => fs.push(f),
                    NodeKind::Hub => hub = true,
                }
            }
            report["violating_subset"] = json!({ "vertices": vs, "faces": fs, "hub": hub });
        }
    }
    writeln!(out, "{report}").map_err(io_err(Path::new("<stdout>")))?;
    Ok(EXIT_OK)
}

fn cmd_target_angles(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = load_mesh(cfg)?;
    let tri = &m.triangulation;
    let r = target_angles(tri, TargetOptions::default())?;
    let faces: Vec<Value> = r
        .targets
        .0
        .iter()
        .enumerate()
        .map(|(f, a)| json!({ "face": tri.face(f), "angles": a }))
        .collect();
    let report = json!({
        "eps_max": r.eps_max,
        "eps_used": r.eps_used,
        "vertex_sum": 2.0 * std::f64::consts::PI - average_curvature(tri),
        "faces": faces,
    });
    writeln!(out, "{report}").map_err(io_err(Path::new("<stdout>")))?;
    Ok(EXIT_OK)
}

fn cmd_single_triangle(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    let d = cfg.d.ok_or_else(|| CliError::MissingInput("--d is required".into()))?;
    let d = TriangleLengths::new(d)?;
    let u0 = match &cfg.u0 {
        None => [1.0; 3],
        Some(u) if u.len() == 3 => [u[0], u[1], u[2]],
        Some(u) => {
            return Err(CliError::InvalidValue {
                flag: "--u0".into(),
                msg: format!("expected 3 values, got {}", u.len()),
            })
        }
    };
    let r = single_triangle_flow(&d, u0, &cfg.triangle)?;
    if let Some(path) = &cfg.out {
        write_with(path, |w| {
            writeln!(w, "t,u_0,u_1,u_2,theta_0,theta_1,theta_2,G")?;
            for s in &r.samples {
                let mut row = vec![yio::fmt_real(s.t)];
                row.extend(s.u.iter().chain(&s.angles).map(|&x| yio::fmt_real(x)));
                row.push(yio::fmt_real(s.g));
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })?;
    }
    let last = r.samples.last().expect("at least the initial sample");
    let report = json!({
        "converged": r.converged,
        "t": last.t,
        "steps": r.samples.len() - 1,
        "angles": last.angles,
        "u": last.u,
        "g": last.g,
        "min_slack": r.min_slack,
    });
    writeln!(out, "{report}").map_err(io_err(Path::new("<stdout>")))?;
    Ok(if r.converged { EXIT_OK } else { EXIT_MAX_TIME })
}

fn cmd_jacobian_check(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = load_mesh(cfg)?;
    let (tri, d) = (&m.triangulation, &m.metric);
    let w = initial_factor(cfg, tri.n_vertices())?.w().to_vec();
    let c = CoefficientMatrix::assemble(tri, d, &w)?;
    let h = 1e-6;
    let mut fd_error = 0.0f64;
    for j in 0..tri.n_vertices() {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[j] += h;
        wm[j] -= h;
        let kp = curvature_at(tri, d, &wp)?;
        let km = curvature_at(tri, d, &wm)?;
        for i in 0..tri.n_vertices() {
            // ∂K_i/∂w_j = -C_ij
            let fd = (kp.0[i] - km.0[i]) / (2.0 * h);
            fd_error = fd_error.max((fd + c.get(i, j)).abs());
        }
    }
    let rig = rigidity_check(tri, d, &w)?;
    let ev = c.projected_eigenvalues()?;
    let report = json!({
        "fd_max_error": fd_error,
        "max_asymmetry": c.max_asymmetry(),
        "max_row_sum": c.row_sums().iter().fold(0.0f64, |a, x| a.max(x.abs())),
        "projected_eigenvalues": ev,
        "min_singular_value": rig.min_singular_value,
        "locally_rigid": rig.locally_rigid,
    });
    writeln!(out, "{report}").map_err(io_err(Path::new("<stdout>")))?;
    Ok(EXIT_OK)
}

fn cmd_energy(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    let m = load_mesh(cfg)?;
    let (tri, d) = (&m.triangulation, &m.metric);
    let w = initial_factor(cfg, tri.n_vertices())?.w().to_vec();
    let targets = target_angles(tri, TargetOptions::default())?.targets;
    let e = energy(tri, d, &w, &targets)?;
    let k_av = average_curvature(tri);
    let dev: Vec<f64> = curvature_at(tri, d, &w)?.0.iter().map(|k| k - k_av).collect();
    let report = json!({
        "energy": e.value,
        "gradient": e.gradient,
        "curvature_deviation": dev,
    });
    writeln!(out, "{report}").map_err(io_err(Path::new("<stdout>")))?;
    Ok(EXIT_OK)
}

pub fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    match cfg.mode {
        Mode::Flow | Mode::FlowNormalized => cmd_flow(cfg, out),
        Mode::Admissible => cmd_admissible(cfg, out),
        Mode::TargetAngles => cmd_target_angles(cfg, out),
        Mode::SingleTriangle => cmd_single_triangle(cfg, out),
        Mode::JacobianCheck => cmd_jacobian_check(cfg, out),
        Mode::Energy => cmd_energy(cfg, out),
    }
}

/// Parses, runs and maps the result to an exit code, reporting errors on
/// `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let result = parse_config(args).and_then(|p| match p {
        Parsed::Info(text) => {
            let _ = write!(out, "{text}");
            Ok(EXIT_OK)
        }
        Parsed::Run(cfg) => execute(&cfg, out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
