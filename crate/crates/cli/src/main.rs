use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nilsys::export::{
    basis_csv, grid_csv, grid_svg, points_csv, scatter_svg, trajectory_csv, trajectory_svg,
};
use nilsys::reach::{random_law, DEFAULT_CIRCLE_BINS, DEFAULT_EPSILON, MAX_NORM};
use nilsys::verify::{verify_example, EXAMPLES};
use nilsys::{
    estimate_control_set, estimate_per_set, sample_reachable, spectral_decompose, CellClass,
    ControlLaw, Direction, FKind, GridSpec, LinearSystemSpec, PerSetQuery, Provenance,
    RegionEstimate, SamplingParams, SystemConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "nilsys", version, about = "Linear control systems on nilpotent Lie groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the algebra, group and system invariants of a config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Split the algebra into the unstable, central and stable parts of the drift.
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate one trajectory from the identity.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        t_max: f64,
        /// Constant control value (comma separated); random law when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        control: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the reachable set of the identity.
    Reach {
        #[command(flatten)]
        run: RunArgs,
        /// Sample the set that reaches the identity instead.
        #[arg(long)]
        backward: bool,
    },
    /// Estimate the F-periodic points.
    Perset {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = FArg::Central)]
        f: FArg,
    },
    /// Estimate the interior of the control set containing the identity.
    Controlset {
        #[command(flatten)]
        run: RunArgs,
        /// Add the central subgroup as a seed region.
        #[arg(long)]
        central: bool,
    },
    /// Run the protocol of a bundled example.
    VerifyExample {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectories per sampling tree.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 8.0)]
    t_max: f64,
    /// `lo,hi,points[,bins]`: window on non-lattice axes, bins on lattice axes.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Exploration radius on non-lattice axes; twice the grid extent by default.
    #[arg(long)]
    explore: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FArg {
    Identity,
    Central,
}

enum Failure {
    Config(String),
    Run(String),
}

type Outcome = std::result::Result<bool, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

fn load(path: &Path) -> std::result::Result<(SystemConfig, LinearSystemSpec), Failure> {
    let cfg = SystemConfig::load(path).map_err(config_err)?;
    let sys = cfg.system().map_err(config_err)?;
    Ok((cfg, sys))
}

fn write_out(dir: &Option<PathBuf>, name: &str, body: &str) -> std::result::Result<(), Failure> {
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(run_err)?;
        let path = d.join(name);
        fs::write(&path, body).map_err(run_err)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn validate(path: &Path) -> Outcome {
    let cfg = SystemConfig::load(path).map_err(config_err)?;
    let mut all = true;
    let alg = match cfg.algebra() {
        Ok(a) => a,
        Err(e) => return Ok(check("algebra", false, e.to_string())),
    };
    let r = alg.validate();
    all &= check(
        "antisymmetry and Jacobi",
        r.passed(),
        format!(
            "residuals {:.3e}, {:.3e}",
            r.antisymmetry_residual, r.jacobi_residual
        ),
    );
    let group = cfg.group();
    all &= check(
        "nilpotent group",
        group.is_ok(),
        match &group {
            Ok(g) => format!("class {}, lattice {:?}", g.class_k(), one_based(g.lattice())),
            Err(e) => e.to_string(),
        },
    );
    match &cfg.drift {
        Some(d) => {
            let (ok, residual) = alg.is_derivation(d).map_err(config_err)?;
            all &= check("drift is a derivation", ok, format!("residual {residual:.3e}"));
        }
        None => all &= check("drift is a derivation", false, "no drift given".into()),
    }
    let omega = cfg.omega_box();
    all &= check(
        "control box contains 0",
        omega.is_ok(),
        match &omega {
            Ok(b) => format!("{:?}", b.bounds()),
            Err(e) => e.to_string(),
        },
    );
    if all {
        let sys = cfg.system();
        all &= check(
            "linear system",
            sys.is_ok(),
            match &sys {
                Ok(s) => format!("dim {}, {} controls", s.dim(), s.controls().len()),
                Err(e) => e.to_string(),
            },
        );
    }
    if cfg.torus_dim.is_some() && all {
        let sd = cfg.semidirect();
        all &= check(
            "semidirect system",
            sd.is_ok(),
            match &sd {
                Ok(s) => format!("torus dim {}", s.torus_dim()),
                Err(e) => e.to_string(),
            },
        );
    }
    Ok(all)
}

fn one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|i| i + 1).collect()
}

fn decompose(path: &Path, out: &Option<PathBuf>) -> Outcome {
    let (cfg, sys) = load(path)?;
    let d = spectral_decompose(sys.group().algebra(), sys.drift()).map_err(run_err)?;
    println!(
        "dim g+ = {}, dim g0 = {}, dim g- = {}",
        d.plus().ncols(),
        d.zero().ncols(),
        d.minus().ncols()
    );
    for l in d.levels() {
        println!("level {:.6}: dim {}", l.lambda, l.basis.ncols());
    }
    for w in d.warnings() {
        println!("warning: {w}");
    }
    let prov = Provenance::new(cfg.hash(), None);
    write_out(out, "bases.csv", &basis_csv(&prov, &d).map_err(run_err)?)?;
    Ok(true)
}

fn simulate(
    path: &Path,
    seed: u64,
    t_max: f64,
    control: &Option<Vec<f64>>,
    step: f64,
    out: &Option<PathBuf>,
) -> Outcome {
    let (cfg, sys) = load(path)?;
    let law = match control {
        Some(u) => {
            let law = ControlLaw::constant(u.clone(), t_max).map_err(config_err)?;
            law.check_in(sys.omega()).map_err(config_err)?;
            law
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_law(sys.omega(), t_max, (0.05, 0.5), &mut rng)
        }
    };
    let traj = sys.simulate(&sys.group().identity(), &law, step).map_err(run_err)?;
    println!(
        "{} samples, {} pieces, end {:?}",
        traj.points.len(),
        law.pieces().len(),
        traj.end().coords().as_slice()
    );
    let prov = Provenance::new(cfg.hash(), Some(seed));
    write_out(
        out,
        "trajectory.csv",
        &trajectory_csv(&prov, &traj.times, &traj.points).map_err(run_err)?,
    )?;
    if sys.dim() >= 2 {
        write_out(
            out,
            "trajectory.svg",
            &trajectory_svg(&prov, &traj.points, (0, 1)).map_err(run_err)?,
        )?;
    }
    Ok(true)
}

fn parse_grid(sys: &LinearSystemSpec, s: &str) -> std::result::Result<GridSpec, Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Failure::Config(format!("--grid expects lo,hi,points[,bins], got {s:?}"));
    if parts.len() != 3 && parts.len() != 4 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let points: usize = parts[2].parse().map_err(|_| bad())?;
    let bins: usize = match parts.get(3) {
        Some(b) => b.parse().map_err(|_| bad())?,
        None => DEFAULT_CIRCLE_BINS,
    };
    GridSpec::window(sys.group(), lo, hi, points, bins).map_err(config_err)
}

struct Prepared {
    cfg: SystemConfig,
    sys: LinearSystemSpec,
    grid: Option<GridSpec>,
    params: SamplingParams,
}

fn prepare(run: &RunArgs) -> std::result::Result<Prepared, Failure> {
    let (cfg, sys) = load(&run.config)?;
    let grid = run.grid.as_deref().map(|g| parse_grid(&sys, g)).transpose()?;
    let extent = grid.as_ref().map(|g| {
        g.axes()
            .iter()
            .filter_map(|a| match *a {
                nilsys::GridAxis::Interval { lo, hi, .. } => Some(lo.abs().max(hi.abs())),
                nilsys::GridAxis::Circle { .. } => None,
            })
            .fold(0.0, f64::max)
    });
    let radius = run.explore.or(extent.map(|e| 2.0 * e)).unwrap_or(MAX_NORM);
    let params = SamplingParams::new(run.budget, run.t_max, run.seed)
        .with_explore(vec![radius; sys.dim()]);
    Ok(Prepared {
        cfg,
        sys,
        grid,
        params,
    })
}

fn report_estimate(p: &Prepared, est: &RegionEstimate, out: &Option<PathBuf>) -> Outcome {
    let mut report = format!(
        "kind {:?}\nseed {}\nbudget {}\nt_max {}\nepsilon {}\npoints {}\n",
        est.kind,
        p.params.seed,
        p.params.n_samples,
        p.params.t_max,
        est.epsilon,
        est.len()
    );
    for (i, b) in est.bbox.iter().enumerate() {
        match b {
            Some((lo, hi)) => report += &format!("bbox x{} [{lo:.6}, {hi:.6}]\n", i + 1),
            None if p.sys.group().is_lattice(i) => report += &format!("bbox x{} circle\n", i + 1),
            None => report += &format!("bbox x{} empty\n", i + 1),
        }
    }
    if let Some(g) = &est.grid {
        for c in [CellClass::In, CellClass::Out, CellClass::Unknown] {
            report += &format!("cells {} {}\n", c.as_str(), g.count(c));
        }
    }
    for d in &est.diagnostics {
        report += &format!("diagnostic {d}\n");
    }
    print!("{report}");
    let prov = Provenance::new(p.cfg.hash(), Some(p.params.seed));
    let body = format!("# config_sha256={}\n{report}", p.cfg.hash());
    write_out(out, "report.txt", &body)?;
    write_out(out, "points.csv", &points_csv(&prov, est).map_err(run_err)?)?;
    if p.sys.dim() >= 2 {
        write_out(out, "points.svg", &scatter_svg(&prov, est, (0, 1)).map_err(run_err)?)?;
    }
    if let Some(g) = &est.grid {
        write_out(out, "grid.csv", &grid_csv(&prov, g).map_err(run_err)?)?;
        if p.sys.dim() >= 2 {
            write_out(out, "grid.svg", &grid_svg(&prov, g, (0, 1)).map_err(run_err)?)?;
        }
    }
    Ok(true)
}

fn reach(run: &RunArgs, backward: bool) -> Outcome {
    let p = prepare(run)?;
    if p.params.n_samples == 0 {
        println!("diagnostic budget is zero; no samples drawn");
        return Ok(true);
    }
    let dir = if backward {
        Direction::Backward
    } else {
        Direction::Forward
    };
    let est = sample_reachable(&p.sys, &p.sys.group().identity(), p.grid.as_ref(), &p.params, dir)
        .map_err(run_err)?;
    report_estimate(&p, &est, &run.out)
}

fn perset(run: &RunArgs, f: FArg) -> Outcome {
    let p = prepare(run)?;
    let kind = match f {
        FArg::Identity => FKind::Identity,
        FArg::Central => FKind::CentralSubgroup,
    };
    let q = PerSetQuery::new(kind, run.epsilon).map_err(config_err)?;
    let est = estimate_per_set(&p.sys, &q, p.grid.as_ref(), &p.params).map_err(run_err)?;
    report_estimate(&p, &est, &run.out)
}

fn controlset(run: &RunArgs, central: bool) -> Outcome {
    let p = prepare(run)?;
    let kind = if central {
        FKind::CentralSubgroup
    } else {
        FKind::Identity
    };
    let q = PerSetQuery::new(kind, run.epsilon).map_err(config_err)?;
    let est = estimate_control_set(&p.sys, &q, p.grid.as_ref(), &p.params).map_err(run_err)?;
    report_estimate(&p, &est, &run.out)
}

fn verify(name: &str, seed: u64, out: &Option<PathBuf>) -> Outcome {
    if !EXAMPLES.contains(&name) {
        return Err(Failure::Config(format!(
            "unknown example {name:?}; expected one of {}",
            EXAMPLES.join(", ")
        )));
    }
    let r = verify_example(name, seed).map_err(run_err)?;
    let text = r.render();
    print!("{text}");
    write_out(out, &format!("verify-{name}.txt"), &text)?;
    Ok(r.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate { config } => validate(config),
        Command::Decompose { config, out } => decompose(config, out),
        Command::Simulate {
            config,
            seed,
            t_max,
            control,
            step,
            out,
        } => simulate(config, *seed, *t_max, control, *step, out),
        Command::Reach { run, backward } => reach(run, *backward),
        Command::Perset { run, f } => perset(run, *f),
        Command::Controlset { run, central } => controlset(run, *central),
        Command::VerifyExample { name, seed, out } => verify(name, *seed, out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
    }
}
