use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sbm_core::bernstein::PhiSpec;
use sbm_core::densities::{levy_density_mu, potential_density_u, DensityTable};
use sbm_core::fluctuation::{build_fluctuation_table, chi_eval, DEFAULT_NODES, DEFAULT_T_RANGE};
use sbm_core::geometry::Domain;
use sbm_core::kernels::generator::{apply_generator, Profile, DEFAULT_EPS_SCHEDULE};
use sbm_core::kernels::KernelEvaluator;
use sbm_core::montecarlo::{green_mc, PathParams};
use sbm_core::report::{emit_report, ReportDocument};
use sbm_core::verify::{Claim, Verifier, VerifyConfig};

#[derive(Parser)]
#[command(name = "sbm", version, about = "Potential theory of killed subordinate Brownian motions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DensityKind {
    U,
    Mu,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    J,
    #[value(name = "G")]
    G,
}

#[derive(Subcommand)]
enum Command {
    /// Ladder exponent χ(λ).
    Chi {
        #[arg(long)]
        phi: PhiSpec,
        #[arg(long)]
        lambda: f64,
    },
    /// Renewal function V(t) and its density v(t); --csv writes the table.
    Renewal {
        #[arg(long)]
        phi: PhiSpec,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
    },
    /// Potential density u or Lévy density μ; --csv writes both on a grid.
    Density {
        #[arg(long)]
        phi: PhiSpec,
        #[arg(long, value_enum, default_value = "u")]
        which: DensityKind,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
    },
    /// Lévy kernel j(r) or free Green function G(r) in dimension d.
    Kernel {
        #[arg(long)]
        phi: PhiSpec,
        #[arg(long)]
        d: usize,
        #[arg(long, value_enum)]
        which: KernelKind,
        #[arg(long)]
        r: f64,
    },
    /// Generator applied to a profile of the last coordinate.
    Generator {
        #[arg(long)]
        phi: PhiSpec,
        /// V (renewal function), or const:<c>
        #[arg(long, default_value = "V")]
        profile: String,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
    },
    /// Monte Carlo estimate of the killed Green function averaged over B(y, ρ).
    GreenMc {
        #[arg(long)]
        phi: PhiSpec,
        #[arg(long)]
        domain: Domain,
        #[arg(long, value_parser = parse_point)]
        x: Point,
        #[arg(long, value_parser = parse_point)]
        y: Point,
        #[arg(long, default_value_t = 0.05)]
        rho: f64,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check comparability claims; exits 0 iff every report passes.
    Verify {
        /// Comma-separated: gest21, gest, bhp, interior, ge
        #[arg(long, value_delimiter = ',', required = true)]
        claim: Vec<Claim>,
        #[arg(long)]
        phi: PhiSpec,
        #[arg(long, default_value = "ball:r=1,d=2")]
        domain: Domain,
        #[arg(long, default_value_t = 50)]
        pairs: usize,
        #[arg(long, default_value_t = 20_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
}

/// A point written `0.1,0.2` or `(0.1,0.2)`.
#[derive(Clone, Debug)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
    inner
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("bad coordinate {c:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Point)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Chi { phi, lambda } => {
            println!("{}", chi_eval(&phi, lambda)?);
        }
        Command::Renewal { phi, t, csv, nodes } => {
            let table = build_fluctuation_table(&phi, DEFAULT_T_RANGE, nodes)?;
            if let Some(path) = csv {
                table.write_csv(&path)?;
                eprintln!("wrote {}", path.display());
            }
            if let Some(t) = t {
                let v_big = table.renewal_extended(t)?;
                let v_small = table.renewal_density(t)?;
                println!("{}", json!({ "t": t, "V": v_big, "v": v_small }));
            }
        }
        Command::Density { phi, which, t, csv, nodes } => {
            if let Some(path) = csv {
                DensityTable::build(&phi, DEFAULT_T_RANGE, nodes)?.write_csv(&path)?;
                eprintln!("wrote {}", path.display());
            }
            if let Some(t) = t {
                let value = match which {
                    DensityKind::U => potential_density_u(&phi, t)?,
                    DensityKind::Mu => levy_density_mu(&phi, t)?,
                };
                println!("{value}");
            }
        }
        Command::Kernel { phi, d, which, r } => {
            let ev = KernelEvaluator::new(&phi, d)?;
            let value = match which {
                KernelKind::J => ev.levy_kernel_j(r)?,
                KernelKind::G => ev.free_green_g(r)?,
            };
            println!("{value}");
        }
        Command::Generator { phi, profile, x, d } => {
            let ev = KernelEvaluator::new(&phi, d)?;
            let profile = match profile.as_str() {
                "V" => {
                    let table = build_fluctuation_table(&phi, DEFAULT_T_RANGE, DEFAULT_NODES)?;
                    Profile::renewal(move |t| table.renewal_extended(t).unwrap_or(f64::NAN))
                }
                other => match other.strip_prefix("const:") {
                    Some(c) => Profile::constant(c.parse().context("constant profile")?),
                    None => bail!("unknown profile {other:?}; expected V or const:<c>"),
                },
            };
            let result = apply_generator(&ev, &profile, x, &DEFAULT_EPS_SCHEDULE)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::GreenMc {
            phi,
            domain,
            x,
            y,
            rho,
            n_paths,
            dt,
            seed,
            out,
        } => {
            let params = PathParams::new(dt, n_paths, seed)?;
            let est = green_mc(&phi, &domain, &x.0, &y.0, rho, &params)?;
            let text = serde_json::to_string_pretty(&est)?;
            match out {
                Some(path) => std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            return Ok(est.is_reliable());
        }
        Command::Verify {
            claim,
            phi,
            domain,
            pairs,
            n_paths,
            dt,
            seed,
            out,
        } => {
            let config = VerifyConfig {
                params: PathParams::new(dt, n_paths, seed)?,
                pairs,
                ..VerifyConfig::default()
            };
            let mut verifier = Verifier::new(&phi, &domain, config)?;
            let mut reports = Vec::new();
            for c in claim {
                reports.extend(verifier.verify(c)?);
            }
            for r in &reports {
                println!("{}", r.summary());
            }
            let doc = ReportDocument::new(phi.to_string(), domain.to_string(), reports);
            let csv = emit_report(&doc, &out)?;
            eprintln!("wrote {} and {}", out.display(), csv.display());
            return Ok(doc.all_pass());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
