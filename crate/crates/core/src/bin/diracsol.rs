use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde_json::json;

use diracsol::coupled_dynamics::{simulate, transversal_norm};
use diracsol::experiments::{
    load_state, run_free_decay, run_scattering, run_soliton_persistence, save_state, series_csv, write_manifest,
    write_run_dir, ExperimentKind, FitResult, Manifest, RunConfig,
};
use diracsol::field_grid::GridSpec;
use diracsol::linearized_spectral::{CutQuad, SpectralContext};
use diracsol::quadrature::QuadSpec;
use diracsol::soliton_manifold::{
    force_on_charge, soliton_field, soliton_state, stationary_residual, velocity_of_momentum, SolitonParams,
};
use diracsol::symplectic_geometry::{project_to_manifold, ProjectionOptions};
use diracsol::{Error, Result};

#[derive(Parser)]
#[command(name = "diracsol", version, about = "Dirac field coupled to a relativistic particle: solitons, spectra, dynamics")]
struct Cli {
    /// Run configuration (TOML, or a manifest.json from an earlier run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the coupled system from the configured initial data.
    Simulate,
    /// Build ψ_v on a grid and report its residual and force balance.
    Soliton(SolitonArgs),
    /// Project a stored state onto the solitary manifold.
    Project(ProjectArgs),
    /// Tabulate det M(iω), F_jj(ω) and the M⁻¹ block relations.
    Spectral(SpectralArgs),
    /// Weighted decay of the free moving-frame flow.
    Decay(CheckArg),
    /// Perturbed-soliton run with modulation tracking.
    Scatter(CheckArg),
    /// Power-law fit of a two-column CSV (t, value).
    Fit(FitArgs),
}

#[derive(Args)]
struct SolitonArgs {
    /// Velocity, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0,0")]
    v: Vec<f64>,
    /// Also write the soliton state (state.json + state.bin).
    #[arg(long)]
    save: bool,
}

#[derive(Args)]
struct ProjectArgs {
    /// State file written by `soliton --save` or by the library.
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    nu: f64,
}

#[derive(Args)]
struct SpectralArgs {
    /// |v| (frame v = (|v|, 0, 0)).
    #[arg(long, default_value_t = 0.6)]
    v: f64,
    /// ω range as start:end.
    #[arg(long, default_value = "-3:3")]
    omega_range: String,
    /// Number of ω samples.
    #[arg(long, default_value_t = 121)]
    nodes: usize,
    /// Exit with code 4 unless the determinant and block checks pass.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CheckArg {
    /// Exit with code 4 unless the pre-registered acceptance band holds.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Window as start:end.
    #[arg(long)]
    window: String,
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| Error::invalid(format!("range '{s}' is not start:end")))?;
    let a: f64 = a.trim().parse().map_err(|_| Error::invalid(format!("bad range start '{a}'")))?;
    let b: f64 = b.trim().parse().map_err(|_| Error::invalid(format!("bad range end '{b}'")))?;
    if !(b > a) {
        return Err(Error::invalid("range end must exceed start"));
    }
    Ok((a, b))
}

fn vec3(v: &[f64]) -> Result<[f64; 3]> {
    match v {
        [a] => Ok([*a, 0.0, 0.0]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::invalid("vectors take 1 or 3 comma-separated components")),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(GridSpec::new(16.0, 32)?),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Acceptance(what.to_string()))
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    let out = cli.out.clone();
    match &cli.cmd {
        Cmd::Simulate => {
            let cfg = load_config(&cli)?;
            let mut manifest = Manifest::new("simulate", &cfg);
            let traj = match cfg.run.kind {
                ExperimentKind::Persistence => {
                    let (report, traj) = run_soliton_persistence(&cfg)?;
                    manifest.report = Some(serde_json::to_value(&report)?);
                    traj
                }
                _ => {
                    let (y0, sigma) = cfg.initial_state()?;
                    simulate(&y0, &cfg.rho, &cfg.simulation_options(), Some(sigma))?
                }
            };
            if let Some((t, e)) = &traj.tracking_lost {
                eprintln!("tracking lost at t = {t}: {e}");
            }
            write_run_dir(&out, &mut manifest, &traj)?;
            println!("wrote {}", out.display());
        }
        Cmd::Soliton(a) => {
            let cfg = load_config(&cli)?;
            let v = vec3(&a.v)?;
            let psi = soliton_field(v, &cfg.rho, cfg.grid)?;
            let report = json!({
                "v": v,
                "grid": cfg.grid,
                "rho": cfg.rho,
                "norm": psi.l2_norm(),
                "stationary_residual": stationary_residual(&psi, v, &cfg.rho)?,
                "force": force_on_charge(&psi, &cfg.rho, [0.0; 3])?,
            });
            if a.save {
                let y = soliton_state(&SolitonParams::new([0.0; 3], v)?, &cfg.rho, cfg.grid)?;
                std::fs::create_dir_all(&out)?;
                save_state(&out.join("state.json"), &y, &cfg.rho)?;
            }
            write_json(&out.join("soliton.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Project(a) => {
            let (y, rho) = load_state(&a.state)?;
            let guess = SolitonParams::new(y.q, velocity_of_momentum(y.p))?;
            let pr = project_to_manifold(&y, &guess, &rho, &ProjectionOptions::default())?;
            let report = json!({
                "b": pr.sigma.b,
                "v": pr.sigma.v,
                "z_norm_minus_nu": transversal_norm(&pr.z, a.nu, pr.sigma.b)?,
                "nu": a.nu,
                "residuals": pr.residuals,
                "iterations": pr.iterations,
            });
            write_json(&out.join("projection.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Spectral(a) => {
            let cfg = load_config(&cli)?;
            let (w0, w1) = parse_range(&a.omega_range)?;
            if a.nodes < 2 {
                return Err(Error::invalid("--nodes must be at least 2"));
            }
            let ctx = SpectralContext::new(a.v, cfg.rho, QuadSpec::for_width(cfg.rho.sigma), CutQuad::for_width(cfg.rho.sigma))?;
            let mut csv = String::from(
                "omega,det_re,det_im,detfac_re,detfac_im,F11_re,F11_im,F22_re,F22_im,F33_re,F33_im,rel_22_11,rel_11_12\n",
            );
            let (mut worst_det, mut worst_rel, mut min_det) = (0.0f64, 0.0f64, f64::INFINITY);
            for i in 0..a.nodes {
                let w = w0 + (w1 - w0) * i as f64 / (a.nodes - 1) as f64;
                if w == 0.0 {
                    continue;
                }
                let d = ctx.det_sample(w);
                let b = ctx.minv_blocks(w)?;
                worst_det = worst_det.max((d.det_direct - d.det_factorized).norm() / d.det_direct.norm());
                worst_rel = worst_rel.max(b.rel_22_11).max(b.rel_11_12);
                if w.abs() >= 0.05 {
                    min_det = min_det.min(d.det_direct.norm());
                }
                let f = |z: C64| format!("{:.12e},{:.12e}", z.re, z.im);
                csv.push_str(&format!(
                    "{w:.8},{},{},{},{},{},{:.3e},{:.3e}\n",
                    f(d.det_direct),
                    f(d.det_factorized),
                    f(d.f_diag[0]),
                    f(d.f_diag[1]),
                    f(d.f_diag[2]),
                    b.rel_22_11,
                    b.rel_11_12
                ));
            }
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("spectral.csv"), csv)?;
            let summary = json!({
                "v": a.v, "mu": ctx.mu(), "L_diag": ctx.l_diag(),
                "max_det_rel_diff": worst_det, "max_block_relation": worst_rel, "min_abs_det": min_det,
                "f_checks": ctx.f_checks()?,
            });
            write_json(&out.join("spectral.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if a.check {
                check(worst_det <= 1e-10 && worst_rel <= 1e-10 && min_det > 0.0, "spectral checks")?;
            }
        }
        Cmd::Decay(a) => {
            let cfg = load_config(&cli)?;
            let report = run_free_decay(&cfg)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("decay.csv"), series_csv("t,weighted_norm", &report.series))?;
            let mut manifest = Manifest::new("decay", &cfg);
            manifest.outputs.push("decay.csv".into());
            manifest.report = Some(serde_json::to_value(&report.fit)?);
            write_manifest(&out, &manifest)?;
            println!("{}", serde_json::to_string_pretty(&report.fit)?);
            if a.check {
                check((report.fit.exponent + 1.5).abs() <= 0.2, "decay exponent outside −1.5 ± 0.2")?;
            }
        }
        Cmd::Scatter(a) => {
            let cfg = load_config(&cli)?;
            let (report, traj) = run_scattering(&cfg)?;
            let mut manifest = Manifest::new("scatter", &cfg);
            manifest.report = Some(serde_json::to_value(&report)?);
            write_run_dir(&out, &mut manifest, &traj)?;
            println!("{}", serde_json::to_string_pretty(&report.data)?);
            if a.check {
                let ok = report.data.z_fit.map(|f| f.exponent <= -1.0).unwrap_or(false);
                check(ok, "transversal decay exponent above −1.0")?;
            }
        }
        Cmd::Fit(a) => {
            let window = parse_range(&a.window)?;
            let text = std::fs::read_to_string(&a.input)?;
            let mut series = Vec::new();
            for (n, line) in text.lines().enumerate() {
                let mut it = line.split(',');
                let (Some(t), Some(y)) = (it.next(), it.next()) else { continue };
                match (t.trim().parse::<f64>(), y.trim().parse::<f64>()) {
                    (Ok(t), Ok(y)) => series.push((t, y)),
                    _ if n == 0 => {}
                    _ => return Err(Error::invalid(format!("line {}: not two numbers", n + 1))),
                }
            }
            let fit: FitResult = diracsol::experiments::fit_power_law(&series, window)?;
            write_json(&out.join("fit.json"), &fit)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
