//! Command-line front end: fixture validation, spectrum/WT/DN exports, the
//! finite-difference oracle, and the scenario-driven verification suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use stackeldn::angular::oracle::joint_spectrum_oracle;
use stackeldn::angular::{joint_spectrum_shooting, AngularOperators, SearchBox, ShootingConfig};
use stackeldn::dn::assemble_dn;
use stackeldn::error::ConfigError;
use stackeldn::grid::Grid3;
use stackeldn::oracle::assemble_laplace;
use stackeldn::radial::{fss, wt, RadialRow, SpectralPair};
use stackeldn::stackel::{load_fixture, validate_stackel, Fixture};
use stackeldn::suites::{run_parsed_scenario, run_scenario, spectrum_with_basis, Scenario};

#[derive(Parser)]
#[command(
    name = "stackeldn",
    about = "Dirichlet-to-Neumann laboratory on conformally Stackel toric cylinders",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// grid resolution override (per axis)
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// harmonic truncation override
    #[arg(long, global = true)]
    harmonics: Option<usize>,
    /// tolerance override where a suite accepts one
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the normalized-form invariants of a fixture
    Validate { fixture: PathBuf },
    /// Compute the joint spectrum and export it as CSV
    Spectrum {
        fixture: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, value_enum, default_value_t = SpectrumMethod::Shooting)]
        method: SpectrumMethod,
    },
    /// Tabulate characteristic and WT functions over a real parameter grid
    Wt {
        fixture: PathBuf,
        #[arg(long, default_value_t = 6.0)]
        mu_max: f64,
        #[arg(long, default_value_t = 12)]
        samples: usize,
    },
    /// Assemble the separated DN operator and export its blocks
    Dn { fixture: PathBuf },
    /// Solve one Dirichlet problem with the finite-difference oracle
    Oracle {
        fixture: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a verification scenario (JSON)
    Suite {
        scenario: PathBuf,
        /// run independent suites on worker threads
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SpectrumMethod {
    Shooting,
    Oracle,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_checked(path: &PathBuf) -> Result<Fixture, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::Missing(path.display().to_string()));
    }
    let fixture = load_fixture(path)?;
    let report = validate_stackel(&fixture.metric.stackel, 12)?;
    if !report.valid() {
        return Err(ConfigError::Invalid {
            file: path.display().to_string(),
            msg: format!("fixture fails validation:\n{report}"),
        });
    }
    Ok(fixture)
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> Result<bool, ConfigError> {
    match &cli.command {
        Command::Validate { fixture } => {
            if !fixture.exists() {
                return Err(ConfigError::Missing(fixture.display().to_string()));
            }
            let f = load_fixture(fixture)?;
            let report = validate_stackel(&f.metric.stackel, cli.grid.unwrap_or(16))?;
            println!("{report}");
            Ok(report.valid())
        }
        Command::Spectrum { fixture, count, method } => {
            let f = load_checked(fixture)?;
            let pairs = match method {
                SpectrumMethod::Shooting => {
                    let ops = AngularOperators::from_metric(&f.metric);
                    let mut mu2_max = 12.0;
                    loop {
                        let (pairs, _) = joint_spectrum_shooting(
                            &ops,
                            SearchBox::up_to(mu2_max, mu2_max),
                            *count,
                            &ShootingConfig::default(),
                        )
                        .map_err(|e| ConfigError::Invalid {
                            file: fixture.display().to_string(),
                            msg: e.to_string(),
                        })?;
                        if pairs.len() >= *count || mu2_max > 400.0 {
                            break pairs;
                        }
                        mu2_max *= 2.0;
                    }
                }
                SpectrumMethod::Oracle => joint_spectrum_oracle(
                    &AngularOperators::from_metric(&f.metric),
                    cli.grid.unwrap_or(64).max(32),
                    *count,
                )
                .map_err(|e| ConfigError::Invalid {
                    file: fixture.display().to_string(),
                    msg: e.to_string(),
                })?,
            };
            let dir = out_dir(&cli.out);
            std::fs::create_dir_all(&dir)?;
            let mut csv = String::from("m,mu2,nu2,multiplicity,residual_v,residual_w\n");
            for (i, p) in pairs.iter().enumerate() {
                csv.push_str(&format!(
                    "{i},{:.12e},{:.12e},{},{:.3e},{:.3e}\n",
                    p.mu2, p.nu2, p.multiplicity, p.residual_v, p.residual_w
                ));
            }
            let path = dir.join("spectrum.csv");
            std::fs::write(&path, csv)?;
            println!("{} pairs -> {}", pairs.len(), path.display());
            Ok(true)
        }
        Command::Wt { fixture, mu_max, samples } => {
            let f = load_checked(fixture)?;
            let row = RadialRow::from_metric(&f.metric);
            let dir = out_dir(&cli.out);
            std::fs::create_dir_all(&dir)?;
            let mut csv = String::from(
                "re_mu,im_mu,re_nu,im_nu,re_Delta,im_Delta,re_M,im_M,re_N,im_N,is_pole\n",
            );
            for a in 0..=*samples {
                for b in 0..=*samples {
                    let mu = mu_max * a as f64 / *samples as f64;
                    let nu = mu_max * b as f64 / *samples as f64;
                    let p = SpectralPair::new(
                        Complex64::new(mu * mu, 0.0),
                        Complex64::new(nu * nu, 0.0),
                    );
                    let w = wt(&fss(&row, p).map_err(|e| ConfigError::Invalid {
                        file: fixture.display().to_string(),
                        msg: e.to_string(),
                    })?);
                    let delta = w.delta.to_complex();
                    let (m, n) = if w.is_pole {
                        (Complex64::new(f64::NAN, f64::NAN), Complex64::new(f64::NAN, f64::NAN))
                    } else {
                        (w.m_fn().unwrap(), w.n_fn().unwrap())
                    };
                    csv.push_str(&format!(
                        "{mu:.12e},0,{nu:.12e},0,{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                        delta.re, delta.im, m.re, m.im, n.re, n.im, w.is_pole as u8
                    ));
                }
            }
            let path = dir.join("wt_table.csv");
            std::fs::write(&path, csv)?;
            println!("-> {}", path.display());
            Ok(true)
        }
        Command::Dn { fixture } => {
            let f = load_checked(fixture)?;
            let harmonics = cli.harmonics.unwrap_or(64);
            let n = cli.grid.unwrap_or(24);
            let pairs = spectrum_with_basis(&f.metric, harmonics, true);
            let op = assemble_dn(&f.metric, &pairs, n, n, harmonics).map_err(|e| {
                ConfigError::Invalid { file: fixture.display().to_string(), msg: e.to_string() }
            })?;
            let dir = out_dir(&cli.out);
            op.export(&dir, &f.sha256)?;
            println!(
                "{} blocks, {} basis elements -> {}",
                op.blocks.len(),
                op.basis.len(),
                dir.display()
            );
            Ok(true)
        }
        Command::Oracle { fixture, seed } => {
            let f = load_checked(fixture)?;
            let n = cli.grid.unwrap_or(24);
            let grid = Grid3::cubic(n, f.metric.stackel.a_length);
            let sys = assemble_laplace(&f.metric, grid);
            // a seeded smooth datum
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
            let (a, b, c) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let nb = grid.boundary_len();
            let mut f0 = vec![0.0; nb];
            let mut f1 = vec![0.0; nb];
            for j in 0..grid.n2 {
                for k in 0..grid.n3 {
                    let x2 = std::f64::consts::TAU * j as f64 / grid.n2 as f64;
                    let x3 = std::f64::consts::TAU * k as f64 / grid.n3 as f64;
                    f0[grid.bidx(j, k)] = 1.0 + a * x2.sin() + b * (x3 + c).cos();
                    f1[grid.bidx(j, k)] = a * (x2 + x3).cos();
                }
            }
            let u = sys.solve(&f0, &f1, cli.tol.unwrap_or(1e-11), 400_000).map_err(|e| {
                ConfigError::Invalid { file: fixture.display().to_string(), msg: e.to_string() }
            })?;
            let (g0, g1) = sys.dn_from_solution(&u);
            let dir = out_dir(&cli.out);
            std::fs::create_dir_all(&dir)?;
            u.write_binary(&dir.join("solution"))?;
            u.write_csv(&dir.join("solution.csv"))?;
            let mut csv = String::from("end,j,k,dn_value\n");
            for j in 0..grid.n2 {
                for k in 0..grid.n3 {
                    csv.push_str(&format!("0,{j},{k},{:.12e}\n", g0[grid.bidx(j, k)]));
                }
            }
            for j in 0..grid.n2 {
                for k in 0..grid.n3 {
                    csv.push_str(&format!("1,{j},{k},{:.12e}\n", g1[grid.bidx(j, k)]));
                }
            }
            std::fs::write(dir.join("dn_oracle.csv"), csv)?;
            println!("-> {}", dir.display());
            Ok(true)
        }
        Command::Suite { scenario, parallel } => {
            let outcome = if cli.grid.is_some()
                || cli.harmonics.is_some()
                || cli.tol.is_some()
                || cli.out.is_some()
            {
                // re-parse with CLI overrides applied
                let text = std::fs::read_to_string(scenario)
                    .map_err(|_| ConfigError::Missing(scenario.display().to_string()))?;
                let mut sc: Scenario =
                    serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
                        file: scenario.display().to_string(),
                        msg: format!("scenario parse error: {e}"),
                    })?;
                if let Some(g) = cli.grid {
                    sc.grid = Some(g);
                }
                if let Some(h) = cli.harmonics {
                    sc.harmonics = Some(h);
                }
                if let Some(t) = cli.tol {
                    sc.tol = Some(t);
                }
                if let Some(o) = &cli.out {
                    sc.out = Some(o.display().to_string());
                }
                run_parsed_scenario(
                    &sc,
                    scenario.parent().unwrap_or(std::path::Path::new(".")),
                    *parallel,
                )?
            } else if *parallel {
                let text = std::fs::read_to_string(scenario)
                    .map_err(|_| ConfigError::Missing(scenario.display().to_string()))?;
                let sc: Scenario =
                    serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
                        file: scenario.display().to_string(),
                        msg: format!("scenario parse error: {e}"),
                    })?;
                run_parsed_scenario(
                    &sc,
                    scenario.parent().unwrap_or(std::path::Path::new(".")),
                    true,
                )?
            } else {
                run_scenario(scenario)?
            };
            for rep in &outcome.reports {
                for row in &rep.rows {
                    println!(
                        "[{}] {:4} {} (margin {:+.3e}, tol {:.1e})",
                        rep.suite, row.status, row.name, row.worst_margin, row.tolerance
                    );
                }
            }
            println!("report: {}", outcome.report_path.display());
            Ok(outcome.pass())
        }
    }
}
