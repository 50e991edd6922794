mod commands;
mod config;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use parindex::dynamics::{Manifold, SeedDirection};

use commands::SweepParam;
use config::RunConfig;
use output::Out;
use spec::OrbitSpec;

#[derive(Parser, Debug)]
#[command(name = "parindex", version, about = "Index computations for zero-energy orbits of homogeneous planar potentials")]
struct Cli {
    /// JSON run configuration (potential, integrator, indices, seed)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured integrator tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Rest points of the collision-manifold field with eigen-data
    Equilibria,
    /// Trajectories from a (θ, ψ) seed grid as polylines
    Portrait {
        #[arg(long, default_value_t = 24)]
        theta_n: usize,
        #[arg(long, default_value_t = 12)]
        psi_n: usize,
        #[arg(long, default_value_t = 20.0)]
        span: f64,
        #[arg(long)]
        svg: bool,
    },
    /// Shoot one heteroclinic orbit and dump it as CSV
    Orbit(OrbitArgs),
    /// Every index of one orbit and the theorem verdicts
    Indices(OrbitArgs),
    /// Dirichlet negative count of a homothetic orbit for several lengths
    Homothetic {
        #[arg(long)]
        theta0: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        lengths: Vec<f64>,
        #[arg(long, default_value_t = 4000)]
        nodes: usize,
    },
    /// Δ values (and optionally verdicts) over a parameter range
    Sweep {
        #[arg(long, value_enum)]
        parameter: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Also shoot and verify the unstable branches at every point
        #[arg(long)]
        verify: bool,
    },
    /// Run a verification suite; exits 1 if any verdict is false
    Verify {
        /// JSON list of {name, potential?, orbit}; defaults to the built-in suite
        #[arg(long)]
        suite: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct OrbitArgs {
    /// Sign of ψ₀ at the seed equilibrium (−1 or 1)
    #[arg(long, allow_hyphen_values = true, default_value_t = -1.0)]
    psi_sign: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    theta0: f64,
    /// Branch of the manifold (±1)
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    sign: f64,
    #[arg(long, value_enum, default_value = "e-plus")]
    direction: Direction,
    #[arg(long, value_enum, default_value = "unstable")]
    manifold: Side,
    /// Parabolic orbit of a constant profile through (0, θ_mid) instead of a shot
    #[arg(long, allow_hyphen_values = true)]
    kepler_mid: Option<f64>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum Direction {
    EPlus,
    EMinus,
    Random,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum Side {
    Unstable,
    Stable,
}

impl OrbitArgs {
    fn spec(&self) -> OrbitSpec {
        if let Some(theta_mid) = self.kepler_mid {
            return OrbitSpec::Kepler { theta_mid };
        }
        OrbitSpec::Shot {
            psi_sign: self.psi_sign,
            theta0: self.theta0,
            sign: self.sign,
            direction: match self.direction {
                Direction::EPlus => SeedDirection::EPlus,
                Direction::EMinus => SeedDirection::EMinus,
                Direction::Random => SeedDirection::Random,
            },
            manifold: match self.manifold {
                Side::Unstable => Manifold::Unstable,
                Side::Stable => Manifold::Stable,
            },
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        cfg.integrator.tol = t;
    }
    cfg.validate()?;
    let out = Out::new(&cli.out, cfg.hash(), cfg.seed)?;
    match cli.cmd {
        Cmd::Equilibria => commands::equilibria(&cfg, &out),
        Cmd::Portrait { theta_n, psi_n, span, svg } => {
            commands::portrait(&cfg, &out, &commands::PortraitArgs { theta_n, psi_n, span, svg })
        }
        Cmd::Orbit(a) => commands::orbit(&cfg, &out, &a.spec()),
        Cmd::Indices(a) => commands::indices(&cfg, &out, &a.spec()),
        Cmd::Homothetic { theta0, lengths, nodes } => commands::homothetic(&cfg, &out, theta0, &lengths, nodes),
        Cmd::Sweep { parameter, from, to, steps, verify } => {
            commands::sweep(&cfg, &out, parameter, from, to, steps, verify)
        }
        Cmd::Verify { suite } => {
            let suite = suite.map(|p| commands::load_suite(&p)).transpose()?;
            commands::verify(&cfg, &out, suite)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
