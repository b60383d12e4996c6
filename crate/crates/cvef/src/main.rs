//! Command-line front end: full runs, one-shot snapshot diagnostics,
//! manufactured-solution convergence tables, scaling equivalence checks and
//! the cross-solver oracle comparison.
//!
//! Exit codes: 0 success, 2 fixed-point non-convergence (or a scale-check
//! discrepancy above tolerance), 3 configuration or snapshot format errors,
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvef::diagnostics::{DiagnosticsRecord, NormSpec};
use cvef::error::CvefError;
use cvef::io::config::ConfigFile;
use cvef::io::csv::{record_to_row, CsvSink, HEADER};
use cvef::io::snapshot::{read_snapshot, write_snapshot};
use cvef::momentum::MomentumOptions;
use cvef::picard::{run, scale_state, unscale_state, RunConfig, SnapshotSink};
use cvef::state::{generate_ic, FlowState, ICSpec, PhysParams};
use cvef::transport::TransportOptions;
use cvef::verify::fd_reference::{fd_reference_step, OracleConfig};
use cvef::verify::mms::{mms_run, ManufacturedSolution};
use cvef::{Grid, SpectralWorkspace};

#[derive(Parser)]
#[command(
    name = "cvef",
    about = "Pseudo-spectral compressible viscoelastic flow laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full simulation from a config file; writes diagnostics.csv and
    /// snapshots into the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-shot diagnostics of a snapshot, printed as a CSV row.
    Diagnose {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
    },
    /// Manufactured-solution convergence table, printed to stdout.
    Mms {
        /// Comma-separated resolutions, e.g. 8,16,32.
        #[arg(long, default_value = "8,16")]
        resolutions: String,
        /// Comma-separated time steps, e.g. 1e-3,5e-4.
        #[arg(long, default_value = "2e-3,1e-3")]
        dts: String,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0.02)]
        t_end: f64,
        #[arg(long, default_value_t = 0.05)]
        amplitude: f64,
    },
    /// Run the nu-scaled twin of a configured run and compare after
    /// unscaling; exits 2 if the discrepancy exceeds the tolerance.
    ScaleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        nu: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Main solver against the finite-difference reference.
    OracleCompare {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        amplitude: f64,
    },
}

fn exit_code_for(err: &CvefError) -> u8 {
    match err.root() {
        CvefError::NonConvergence { .. } => 2,
        CvefError::Config(_) | CvefError::MalformedSnapshot(_) | CvefError::InvalidParams(_) => 3,
        _ => 1,
    }
}

struct DirSnapshots {
    dir: PathBuf,
    wrote_initial: bool,
}

impl SnapshotSink for DirSnapshots {
    fn emit(&mut self, state: &FlowState) -> cvef::Result<()> {
        let name = if self.wrote_initial {
            "snapshot_final.bin"
        } else {
            "snapshot_initial.bin"
        };
        self.wrote_initial = true;
        write_snapshot(&self.dir.join(name), state)
    }
}

fn read_config(path: &Path) -> cvef::Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CvefError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    ConfigFile::parse(&text)
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> cvef::Result<()> {
    let cfg = read_config(config)?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    std::fs::create_dir_all(&out_dir).map_err(|e| CvefError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let grid = cfg.grid()?;
    let run_cfg: RunConfig = cfg.run_config()?;
    let initial = generate_ic(&cfg.ic, grid, &cfg.params)?;
    let mut ws = SpectralWorkspace::new(grid);
    let mut diag = CsvSink::create(&out_dir.join("diagnostics.csv"))?;
    let mut snaps = DirSnapshots {
        dir: out_dir.clone(),
        wrote_initial: false,
    };
    let final_state = run(&mut ws, &run_cfg, &cfg.params, &initial, &mut diag, &mut snaps)?;
    diag.finish()?;
    println!(
        "run finished at t = {:.6}; diagnostics in {}",
        final_state.t,
        out_dir.join("diagnostics.csv").display()
    );
    Ok(())
}

fn cmd_diagnose(snapshot: &Path, q: f64, params: PhysParams) -> cvef::Result<()> {
    params.validate()?;
    let state = read_snapshot(snapshot)?;
    let mut ws = SpectralWorkspace::new(state.grid());
    let rec = DiagnosticsRecord::compute(&mut ws, &state, &params, &NormSpec::new(q)?)?;
    println!("{HEADER}");
    println!("{}", record_to_row(&rec));
    Ok(())
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> cvef::Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| CvefError::Config(format!("{what}: cannot parse `{p}`")))
        })
        .collect()
}

fn cmd_mms(
    resolutions: &str,
    dts: &str,
    theta: f64,
    t_end: f64,
    amplitude: f64,
) -> cvef::Result<()> {
    let ns: Vec<usize> = parse_list("mms resolutions", resolutions)?;
    let dts: Vec<f64> = parse_list("mms dts", dts)?;
    let sol = ManufacturedSolution::standard(amplitude, 2.0 * std::f64::consts::PI);
    let params = PhysParams::default();
    let table = mms_run(&sol, &ns, &dts, t_end, &params, theta)?;
    println!("N,dt,err_rho,err_u,err_E,order_space,order_time");
    for (i, row) in table.rows.iter().enumerate() {
        // pairwise observed orders against the previous row that differs
        // only in resolution (same dt) or only in dt (same N)
        let mut order_space = String::new();
        let mut order_time = String::new();
        for prev in table.rows[..i].iter().rev() {
            if prev.dt == row.dt && prev.n != row.n && row.total() > 0.0 {
                order_space = format!(
                    "{:.3}",
                    (prev.total() / row.total()).ln() / ((row.n as f64 / prev.n as f64).ln())
                );
                break;
            }
        }
        for prev in table.rows[..i].iter().rev() {
            if prev.n == row.n && prev.dt != row.dt && row.total() > 0.0 {
                order_time = format!(
                    "{:.3}",
                    (prev.total() / row.total()).ln() / (prev.dt / row.dt).ln()
                );
                break;
            }
        }
        println!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{},{}",
            row.n, row.dt, row.err_rho, row.err_u, row.err_e, order_space, order_time
        );
    }
    if let Some(os) = table.order_space {
        println!("# summary order_space = {os:.3}");
    }
    if let Some(ot) = table.order_time {
        println!("# summary order_time = {ot:.3}");
    }
    Ok(())
}

fn max_field_discrepancy(a: &FlowState, b: &FlowState) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.rho.data.iter().zip(&b.rho.data) {
        worst = worst.max((x - y).abs());
    }
    for c in 0..3 {
        for (x, y) in a.u.comps[c].iter().zip(&b.u.comps[c]) {
            worst = worst.max((x - y).abs());
        }
    }
    for c in 0..9 {
        for (x, y) in a.e.comps[c].iter().zip(&b.e.comps[c]) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn cmd_scale_check(config: &Path, nu: f64, tol: f64) -> cvef::Result<bool> {
    let cfg = read_config(config)?;
    let grid = cfg.grid()?;
    let run_cfg = cfg.run_config()?;
    let initial = generate_ic(&cfg.ic, grid, &cfg.params)?;

    let mut ws = SpectralWorkspace::new(grid);
    let mut mem = cvef::picard::MemorySink::default();
    let direct = run(
        &mut ws,
        &run_cfg,
        &cfg.params,
        &initial,
        &mut mem,
        &mut cvef::picard::NullSnapshots,
    )?;

    let scaled0 = scale_state(&initial, nu)?;
    let scaled_params = PhysParams {
        nu: cfg.params.nu * nu,
        ..cfg.params
    };
    let scaled_cfg = RunConfig {
        dt: run_cfg.dt * nu * nu,
        t_end: run_cfg.t_end * nu * nu,
        ..run_cfg.clone()
    };
    let mut ws2 = SpectralWorkspace::new(scaled0.grid());
    let mut mem2 = cvef::picard::MemorySink::default();
    let twin = run(
        &mut ws2,
        &scaled_cfg,
        &scaled_params,
        &scaled0,
        &mut mem2,
        &mut cvef::picard::NullSnapshots,
    )?;
    let back = unscale_state(&twin, nu)?;
    let disc = max_field_discrepancy(&direct, &back);
    println!("scale-check nu = {nu}: max field discrepancy {disc:.6e} (tol {tol:.1e})");
    Ok(disc <= tol)
}

/// Restrict a state to a coarser grid whose points coincide.
fn downsample(state: &FlowState, factor: usize) -> FlowState {
    let g = state.grid();
    let cg = Grid::new(
        [g.nx / factor, g.ny / factor, g.nz / factor],
        [g.lx, g.ly, g.lz],
    )
    .expect("coarse grid");
    let mut out = FlowState::equilibrium(cg);
    out.t = state.t;
    for (ix, iy, iz, idx) in cg.iter_indices() {
        let src = g.idx(ix * factor, iy * factor, iz * factor);
        out.rho.data[idx] = state.rho.data[src];
        for c in 0..3 {
            out.u.comps[c][idx] = state.u.comps[c][src];
        }
        for c in 0..9 {
            out.e.comps[c][idx] = state.e.comps[c][src];
        }
    }
    out
}

fn cmd_oracle_compare(
    n: usize,
    seed: u64,
    dt: f64,
    steps: usize,
    amplitude: f64,
) -> cvef::Result<()> {
    let l = 2.0 * std::f64::consts::PI;
    let grid = Grid::cubic(n, l)?;
    let params = PhysParams::default();
    let ic = ICSpec {
        amplitude,
        modes: vec![[1, 0, 0], [0, 1, 1]],
        seed,
        velocity_amplitude: amplitude,
    };
    let initial = generate_ic(&ic, grid, &params)?;

    // main solver
    let mut ws = SpectralWorkspace::new(grid);
    let run_cfg = RunConfig {
        dt,
        t_end: dt * steps as f64,
        stride: steps.max(1),
        momentum: MomentumOptions::new(0.5)?,
        transport: TransportOptions::default(),
        ..Default::default()
    };
    let main_final = run(
        &mut ws,
        &run_cfg,
        &params,
        &initial,
        &mut cvef::picard::MemorySink::default(),
        &mut cvef::picard::NullSnapshots,
    )?;

    // reference at the same resolution
    let cfg = OracleConfig { n, dt, steps };
    let mut fd = initial.clone();
    for _ in 0..steps {
        fd = fd_reference_step(&fd, dt, &params, &cfg)?;
    }

    // refined reference for the Richardson error estimate
    let fine_grid = Grid::cubic(2 * n, l)?;
    let fine_ic = generate_ic(&ic, fine_grid, &params)?;
    let fine_cfg = OracleConfig {
        n: 2 * n,
        dt: dt / 2.0,
        steps: 2 * steps,
    };
    let mut fd_fine = fine_ic;
    for _ in 0..2 * steps {
        fd_fine = fd_reference_step(&fd_fine, dt / 2.0, &params, &fine_cfg)?;
    }
    let fd_fine_coarse = downsample(&fd_fine, 2);

    let err_est = max_field_discrepancy(&fd, &fd_fine_coarse);
    let disagreement = max_field_discrepancy(&main_final, &fd);
    let ratio = disagreement / err_est.max(f64::MIN_POSITIVE);
    println!(
        "oracle-compare n = {n} seed = {seed}: |main - fd| = {disagreement:.6e}, \
         fd Richardson error = {err_est:.6e}, agreement ratio = {ratio:.3}"
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: cvef::Result<bool> = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out).map(|_| true),
        Command::Diagnose {
            snapshot,
            q,
            mu,
            lambda,
            gamma,
            nu,
        } => cmd_diagnose(
            &snapshot,
            q,
            PhysParams {
                mu,
                lambda,
                gamma,
                nu,
            },
        )
        .map(|_| true),
        Command::Mms {
            resolutions,
            dts,
            theta,
            t_end,
            amplitude,
        } => cmd_mms(&resolutions, &dts, theta, t_end, amplitude).map(|_| true),
        Command::ScaleCheck { config, nu, tol } => cmd_scale_check(&config, nu, tol),
        Command::OracleCompare {
            n,
            seed,
            dt,
            steps,
            amplitude,
        } => cmd_oracle_compare(n, seed, dt, steps, amplitude).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
