//! The five subcommands. Each returns normally on success and a [`Failure`]
//! carrying the exit status otherwise.

use std::env;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use sphere_vortex::dynamics::{deposition_floor, discretize, evolve, Monitors};
use sphere_vortex::field::{io, HemisphereGrid, ScalarField};
use sphere_vortex::green::GreenOperator;
use sphere_vortex::maximizer::{
    ascend, auto_grid, level_set_certificate, limit_x3, MaximizerConfig, ReportSummary,
};
use sphere_vortex::pointvortex::{explicit_pair, integrate, VortexConfiguration};
use sphere_vortex::sphere::{cap_area, SpherePoint, SphericalCoords};
use sphere_vortex::Error;

use crate::config::{
    DynamicsConfig, GridCheckConfig, PvConfig, SolveConfig, SweepConfig, SCHEMA_VERSION,
};
use crate::output::{num, pair, CsvOut};

pub const KERNEL_CACHE_ENV: &str = "SPHVORTEX_KERNEL_CACHE";

/// Experimental caps for the sweep summary, fitted during development.
pub const DIAMETER_CAP: f64 = 12.0;
pub const DIAMETER_TREND_SLACK: f64 = 0.2;
pub const TREND_FRACTION: f64 = 0.1;

#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or input: exit 2.
    Usage(anyhow::Error),
    /// A numerical check failed: exit 1.
    Acceptance(String),
    /// The run stopped early or could not complete: exit 3.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Acceptance(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "usage error: {e:#}"),
            Failure::Acceptance(m) => write!(f, "check failed: {m}"),
            Failure::Runtime(e) => write!(f, "run aborted: {e:#}"),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Library errors: bad inputs are usage errors, the rest runtime.
fn lib(e: Error) -> Failure {
    match e {
        Error::InvalidInput(_) | Error::Degenerate(_) | Error::Format(_) | Error::GridMismatch => {
            usage(e)
        }
        _ => runtime(e),
    }
}

fn grid(n_phi: usize, n_theta: usize) -> Result<Arc<HemisphereGrid>, Failure> {
    HemisphereGrid::new(n_phi, n_theta)
        .map(Arc::new)
        .map_err(lib)
}

/// Tolerance on the relative sup error of `G+(2 x3) = x3`, fitted to the
/// measured error over `n_theta` from 1 to 128.
pub fn x3_oracle_tolerance(n_theta: usize) -> f64 {
    0.6 * (n_theta as f64).powf(-1.6)
}

pub fn grid_check(cfg: &GridCheckConfig) -> Outcome {
    let g = grid(cfg.n_phi, cfg.n_theta)?;
    let gp = GreenOperator::new(g.clone());
    let mut rows: Vec<(&str, f64, f64)> = Vec::new();

    rows.push(("hemisphere_area", (g.total_area() - TAU).abs() / TAU, 1e-12));

    // polar cap bounded by the lowest band edge above colatitude 0.3
    let k = ((std::f64::consts::FRAC_PI_2 - 0.3) / g.dtheta()).ceil() as usize;
    let (lo, _) = g.band_edges(k.min(g.n_theta() - 1));
    let r = std::f64::consts::FRAC_PI_2 - lo;
    let quad: f64 = (0..g.len())
        .filter(|&i| g.coords(i).theta > lo)
        .map(|i| g.weight(i))
        .sum();
    let exact = cap_area(r).map_err(lib)?;
    rows.push(("cap_area", (quad - exact).abs() / exact, 1e-12));

    let x3 = ScalarField::x3(g.clone());
    let err = gp
        .apply(&x3.scale(2.0))
        .map_err(lib)?
        .sub(&x3)
        .map_err(lib)?
        .max_abs()
        / x3.max_abs();
    rows.push(("green_x3_oracle", err, x3_oracle_tolerance(g.n_theta())));

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut sym: f64 = 0.0;
    let mut min_quad = f64::INFINITY;
    for _ in 0..cfg.random_fields {
        let mut draw = || {
            let vals = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ScalarField::new(g.clone(), vals)
        };
        let u = draw().map_err(lib)?;
        let v = draw().map_err(lib)?;
        let gu = gp.apply(&u).map_err(lib)?;
        let gv = gp.apply(&v).map_err(lib)?;
        sym = sym.max((u.inner(&gv).map_err(lib)? - v.inner(&gu).map_err(lib)?).abs());
        min_quad = min_quad.min(u.inner(&gu).map_err(lib)?);
    }
    if cfg.random_fields > 0 {
        rows.push(("green_symmetry", sym, 1e-10));
        // reported as -<u,Gu>, which must be negative
        rows.push(("green_definiteness", -min_quad, 0.0));
    }

    println!("grid {}x{}", g.n_phi(), g.n_theta());
    let mut failed = Vec::new();
    for (name, value, tol) in &rows {
        let ok = if *name == "green_definiteness" {
            *value < *tol
        } else {
            *value <= *tol
        };
        println!(
            "{name:<20} {value:>12.4e} tol {tol:>10.3e} {}",
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!(
            "oracles out of tolerance: {}",
            failed.join(", ")
        )))
    }
}

fn operator_for(g: Arc<HemisphereGrid>) -> Result<(GreenOperator, Option<PathBuf>), Failure> {
    let Some(dir) = env::var_os(KERNEL_CACHE_ENV) else {
        return Ok((GreenOperator::new(g), None));
    };
    let dir = PathBuf::from(dir);
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(usage)?;
    let path = dir.join(format!("green_{}x{}.svgk", g.n_phi(), g.n_theta()));
    if path.exists() {
        match GreenOperator::load_cache(g.clone(), &path) {
            Ok(op) => {
                log::info!("loaded kernel table {}", path.display());
                return Ok((op, None));
            }
            Err(e) => log::warn!("ignoring kernel cache: {e}"),
        }
    }
    Ok((GreenOperator::new(g), Some(path)))
}

fn solve_one(m: &MaximizerConfig, gp: &GreenOperator) -> Result<ReportSummary, Failure> {
    let report = ascend(m, gp).map_err(lib)?;
    if !report.converged {
        log::warn!(
            "eps {}: stopped without converging ({:?})",
            m.class.epsilon,
            report.stop
        );
    }
    let (_, cells) = level_set_certificate(&report);
    log::info!("eps {}: level-set mismatch {cells} cells", m.class.epsilon);
    Ok(report.summary(m))
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    schema_version: u32,
    config: &'a SolveConfig,
    report: &'a ReportSummary,
    level_set_mismatch_cells: usize,
}

pub fn solve(cfg: &SolveConfig) -> Outcome {
    let m = cfg.problem.maximizer(cfg.epsilon).map_err(usage)?;
    let ext = match cfg.field_format.as_str() {
        "csv" => "csv",
        "bin" => "bin",
        other => {
            return Err(usage(anyhow!(
                "field_format must be csv or bin, got {other:?}"
            )))
        }
    };
    let dims = match cfg.grid {
        Some(d) => d,
        None => auto_grid(&m, cfg.problem.cells_per_core).map_err(lib)?,
    };
    let (gp, save_to) = operator_for(grid(dims.n_phi, dims.n_theta)?)?;
    let report = ascend(&m, &gp).map_err(lib)?;
    if let Some(path) = save_to {
        gp.save_cache(&path).map_err(runtime)?;
    }
    let summary = report.summary(&m);
    let (_, mismatch) = level_set_certificate(&report);

    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))
        .map_err(runtime)?;
    let doc = SolveDocument {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        report: &summary,
        level_set_mismatch_cells: mismatch,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(runtime)?;
    let report_path = cfg.output_dir.join("report.json");
    fs::write(&report_path, text + "\n").map_err(runtime)?;
    let field_path = cfg.output_dir.join(format!("field.{ext}"));
    let header = vec![
        pair("schema_version", SCHEMA_VERSION),
        pair("config", serde_json::to_string(cfg).map_err(runtime)?),
        pair("lambda", num(m.lambda)),
    ];
    io::save(&report.field, &header, &field_path).map_err(runtime)?;

    println!(
        "grid {}x{}  iterations {}  stop {:?}  converged {}",
        dims.n_phi, dims.n_theta, summary.iterations, summary.stop, summary.converged
    );
    println!(
        "objective {:.10}  energy {:.8}  impulse {:.8}  mu {:.8}",
        summary.objective, summary.energy, summary.impulse, summary.mu
    );
    println!(
        "x3_center {:.6} (limit {:.6})  diameter/eps {:.4}  level-set mismatch {} cells",
        summary.mass_center[2],
        limit_x3(m.class.kappa, m.lambda),
        summary.diameter_over_eps,
        mismatch
    );
    println!(
        "wrote {} and {}",
        report_path.display(),
        field_path.display()
    );
    Ok(())
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "epsilon",
    "lambda",
    "kappa",
    "objective",
    "mu",
    "mu_normalized",
    "E",
    "E_normalized",
    "x3_center",
    "diameter",
    "diameter_over_eps",
    "iterations",
    "converged",
];

/// Fails when the series drops from first to last by more than `fraction`
/// of its own range.
pub fn no_downward_trend(xs: &[f64], fraction: f64) -> bool {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs[0] - xs[xs.len() - 1] <= fraction * (hi - lo)
}

pub fn sweep(cfg: &SweepConfig) -> Outcome {
    cfg.validate().map_err(usage)?;
    let configs: Vec<MaximizerConfig> = cfg
        .epsilons
        .iter()
        .map(|&e| cfg.problem.maximizer(e))
        .collect::<anyhow::Result<_>>()
        .map_err(usage)?;
    let results: Vec<Result<ReportSummary, Failure>> = configs
        .par_iter()
        .map(|m| {
            let dims = auto_grid(m, cfg.problem.cells_per_core).map_err(lib)?;
            let gp = GreenOperator::new(grid(dims.n_phi, dims.n_theta)?);
            solve_one(m, &gp)
        })
        .collect();
    let rows: Vec<ReportSummary> = results.into_iter().collect::<Result<_, _>>()?;

    let mut out = CsvOut::create(&cfg.output, "sweep", cfg, &SWEEP_COLUMNS).map_err(runtime)?;
    for r in &rows {
        out.row(&[
            num(r.epsilon),
            num(r.lambda),
            num(r.kappa),
            num(r.objective),
            num(r.mu),
            num(r.mu_normalized),
            num(r.energy),
            num(r.energy_normalized),
            num(r.mass_center[2]),
            num(r.core_diameter),
            num(r.diameter_over_eps),
            r.iterations.to_string(),
            r.converged.to_string(),
        ])
        .map_err(runtime)?;
    }

    let limit = limit_x3(cfg.problem.kappa, cfg.problem.lambda);
    let gaps: Vec<f64> = rows
        .iter()
        .map(|r| (r.mass_center[2] - limit).abs())
        .collect();
    let latitude = gaps.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<f64> = rows.iter().map(|r| r.diameter_over_eps).collect();
    let diameter = ratios.iter().all(|&x| x <= DIAMETER_CAP)
        && ratios
            .windows(2)
            .all(|w| w[1] <= (1.0 + DIAMETER_TREND_SLACK) * w[0]);
    let mu: Vec<f64> = rows.iter().map(|r| r.mu_normalized).collect();
    let en: Vec<f64> = rows.iter().map(|r| r.energy_normalized).collect();
    let scaling = no_downward_trend(&mu, TREND_FRACTION) && no_downward_trend(&en, TREND_FRACTION);
    let all_converged = rows.iter().all(|r| r.converged);
    let verdict = |ok: bool| if ok { "pass" } else { "fail" };
    let status = if !(latitude && diameter && scaling) {
        "fail"
    } else if !all_converged {
        "warning"
    } else {
        "pass"
    };
    out.finish(&[
        pair("limit_x3", num(limit)),
        pair("trend_limiting_latitude", verdict(latitude)),
        pair("trend_diameter_scaling", verdict(diameter)),
        pair("trend_multiplier_energy", verdict(scaling)),
        pair("all_converged", all_converged),
        pair("status", status),
    ])
    .map_err(runtime)?;

    for r in &rows {
        println!(
            "eps {:<6} x3 {:.5}  diam/eps {:.3}  mu_n {:.4}  E_n {:.4}  it {}{}",
            r.epsilon,
            r.mass_center[2],
            r.diameter_over_eps,
            r.mu_normalized,
            r.energy_normalized,
            r.iterations,
            if r.converged { "" } else { "  NOT CONVERGED" }
        );
    }
    println!(
        "latitude trend {}  diameter {}  multiplier/energy {}  status {status}",
        verdict(latitude),
        verdict(diameter),
        verdict(scaling)
    );
    println!("wrote {}", cfg.output.display());
    if status == "fail" {
        Err(Failure::Acceptance("sweep trend checks failed".into()))
    } else {
        Ok(())
    }
}

pub fn pv(cfg: &PvConfig) -> Outcome {
    let config = if cfg.vortices.is_empty() {
        let p = &cfg.pair;
        explicit_pair(p.theta0, p.phi0, p.kappa, cfg.omega_frame, 0.0).map_err(lib)?
    } else {
        let pts = cfg
            .vortices
            .iter()
            .map(|v| SpherePoint::from_spherical(SphericalCoords::new(v.phi, v.theta)))
            .collect();
        let k = cfg.vortices.iter().map(|v| v.kappa).collect();
        VortexConfiguration::new(pts, k, cfg.omega_frame).map_err(lib)?
    };
    let tr = integrate(&config, cfg.t_end, cfg.dt, cfg.stride).map_err(lib)?;
    let mut out = CsvOut::create(
        &cfg.output,
        "pv",
        cfg,
        &["t", "i", "x1", "x2", "x3", "kappa_i"],
    )
    .map_err(runtime)?;
    for (t, state) in tr.times.iter().zip(&tr.states) {
        for (i, (p, k)) in state.iter().zip(&tr.strengths).enumerate() {
            let x = p.xyz();
            out.row(&[
                num(*t),
                i.to_string(),
                num(x[0]),
                num(x[1]),
                num(x[2]),
                num(*k),
            ])
            .map_err(runtime)?;
        }
    }
    let r = tr.report;
    let abort = tr
        .abort
        .as_ref()
        .map_or("none".to_string(), |e| e.to_string());
    out.finish(&[
        pair("dt", num(tr.dt)),
        pair("hamiltonian_drift", num(r.hamiltonian_drift)),
        pair("moment_drift", num(r.moment_drift)),
        pair("norm_drift", num(r.norm_drift)),
        pair("abort", &abort),
    ])
    .map_err(runtime)?;
    println!(
        "{} vortices, {} samples, H drift {:.3e}, M drift {:.3e}, norm drift {:.3e}",
        config.len(),
        tr.times.len(),
        r.hamiltonian_drift,
        r.moment_drift,
        r.norm_drift
    );
    println!("wrote {}", cfg.output.display());
    match tr.abort {
        Some(e) => Err(runtime(e)),
        None => Ok(()),
    }
}

pub const DYNAMICS_COLUMNS: [&str; 7] = [
    "t",
    "circulation",
    "energy_surrogate",
    "objective_surrogate",
    "x3_center",
    "support_radius",
    "orbit_distance",
];

pub fn dynamics(cfg: &DynamicsConfig) -> Outcome {
    let path: &Path = cfg.field.as_deref().ok_or_else(|| {
        usage(anyhow!(
            "dynamics needs a field file written by solve (--field)"
        ))
    })?;
    let field = io::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(usage)?;
    if !(cfg.lambda > 0.0) && cfg.t_end.is_none() {
        return Err(usage(anyhow!("t_end is required when lambda <= 0")));
    }
    let t_end = cfg.t_end.unwrap_or(10.0 / cfg.lambda);
    let mut pf = discretize(&field)
        .map_err(lib)?
        .with_omega(cfg.omega_frame)
        .map_err(lib)?;
    if let Some(d) = cfg.delta {
        pf = pf.with_delta(d).map_err(lib)?;
    }
    let floor = deposition_floor(&pf, &field, cfg.p).map_err(lib)?;
    if let Some(every) = cfg.perturb_every {
        pf = pf
            .displaced_poleward(every, cfg.perturb_distance)
            .map_err(lib)?;
    }
    let mut mon = Monitors::new(cfg.lambda);
    mon.reference = Some(field);
    mon.p = cfg.p;
    mon.stride = cfg.stride;
    let ev = evolve(&pf, t_end, cfg.dt, &mon).map_err(lib)?;

    let mut out =
        CsvOut::create(&cfg.output, "dynamics", cfg, &DYNAMICS_COLUMNS).map_err(runtime)?;
    for s in &ev.samples {
        out.row(&[
            num(s.t),
            num(s.circulation),
            num(s.energy_surrogate),
            num(s.objective_surrogate),
            num(s.x3_center),
            num(s.support_radius),
            s.orbit_distance.map_or(String::new(), num),
        ])
        .map_err(runtime)?;
    }
    let abort = ev
        .abort
        .as_ref()
        .map_or("none".to_string(), |e| e.to_string());
    out.finish(&[
        pair("delta", num(ev.delta)),
        pair("dt", num(ev.dt)),
        pair("particle_count", ev.particle_count),
        pair("deposition_floor", num(floor)),
        pair("energy_drift", num(ev.energy_drift())),
        pair("abort", &abort),
    ])
    .map_err(runtime)?;
    println!(
        "{} particles, delta {:.4}, dt {:.4}, energy drift {:.3e}, max orbit distance {:.4} (deposition floor {:.4})",
        ev.particle_count,
        ev.delta,
        ev.dt,
        ev.energy_drift(),
        ev.max_orbit_distance().unwrap_or(f64::NAN),
        floor
    );
    println!("wrote {}", cfg.output.display());
    match ev.abort {
        Some(e) => Err(runtime(e)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_table_is_decreasing() {
        assert!(x3_oracle_tolerance(1) > 0.25);
        assert!(x3_oracle_tolerance(64) < 1e-3);
        assert!(x3_oracle_tolerance(64) < x3_oracle_tolerance(32));
    }

    #[test]
    fn trend_rule() {
        assert!(no_downward_trend(&[1.0, 0.5, 1.2], 0.1));
        assert!(!no_downward_trend(&[1.0, 0.9, 0.8], 0.1));
        assert!(no_downward_trend(&[1.0, 1.0], 0.1));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Acceptance(String::new()).exit_code(), 1);
        assert_eq!(usage(anyhow!("x")).exit_code(), 2);
        assert_eq!(
            lib(Error::EquatorCrossing {
                particle: 0,
                t: 1.0
            })
            .exit_code(),
            3
        );
        assert_eq!(lib(Error::InvalidInput("x".into())).exit_code(), 2);
    }
}
