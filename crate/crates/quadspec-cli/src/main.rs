use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use quadspec::density::compute_density;
use quadspec::edges::compute_edges;
use quadspec::harness::{append_record, run_suite, spec_hash, RunRecord, Suite, VerifyOptions};
use quadspec::model::{classify_polynomial, validate_spec, PolynomialSpec, RawSpec};
use quadspec::sim::Dist;
use serde_json::json;

#[derive(Parser)]
#[command(name = "quadspec", version, about = "Spectra of quadratic polynomials in Wigner matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the spectral classification of a spec as JSON.
    Classify {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write edges, density and a gnuplot script.
    Analyze {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "quadspec")]
        out: String,
        #[arg(long, default_value_t = 2000)]
        n_grid: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run one verification suite and print its report.
    Verify {
        /// Not needed for the lemmas suite.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        suite: Suite,
        /// Also write the report to `<out>_report.json`.
        #[arg(long)]
        out: Option<String>,
        #[arg(long = "N", value_delimiter = ',', default_value = "1024")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        eta: f64,
        #[arg(long, default_value = "gaussian-complex")]
        dist: Dist,
        #[arg(long, default_value_t = 2000)]
        n_grid: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, env = "QUADSPEC_THREADS")]
    threads: Option<usize>,
    /// JSON-lines file that receives one record per run.
    #[arg(long)]
    store: Option<PathBuf>,
}

enum Failure {
    Input(anyhow::Error),
    Infra(anyhow::Error),
}

impl From<quadspec::Error> for Failure {
    fn from(e: quadspec::Error) -> Self {
        if e.is_input() {
            Failure::Input(e.into())
        } else {
            Failure::Infra(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Infra(e)
    }
}

fn load_spec(path: &Path) -> Result<(PolynomialSpec, String), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Input)?;
    let hash = spec_hash(&text)?;
    let raw = RawSpec::from_json(&text)?;
    Ok((validate_spec(&raw)?, hash))
}

fn record(common: &Common, hash: &str, command: &str, config: serde_json::Value, summary: serde_json::Value) -> anyhow::Result<()> {
    if let Some(path) = &common.store {
        let rec = RunRecord::now(hash.to_string(), command.to_string(), config, summary);
        append_record(path, &rec).with_context(|| format!("appending to {}", path.display()))?;
    }
    Ok(())
}

fn cap_threads(common: &Common) {
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global().ok();
    }
}

fn gnuplot_script(prefix: &str, tau_minus: f64, tau_plus: f64) -> String {
    let name = Path::new(prefix).file_name().map_or(prefix.to_string(), |s| s.to_string_lossy().into_owned());
    format!(
        "set datafile separator ','\n\
         set key off\n\
         set xlabel 'E'\n\
         set ylabel 'rho(E)'\n\
         set arrow from {tau_minus:.12},graph 0 to {tau_minus:.12},graph 1 nohead dt 2\n\
         set arrow from {tau_plus:.12},graph 0 to {tau_plus:.12},graph 1 nohead dt 2\n\
         plot '{name}_density.csv' using 1:2 every ::1 with lines lw 2\n"
    )
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Classify { spec, common } => {
            let (spec, hash) = load_spec(&spec)?;
            let class = classify_polynomial(&spec);
            let text = serde_json::to_string(&class).context("serializing")?;
            println!("{text}");
            record(&common, &hash, "classify", json!({}), serde_json::to_value(&class).context("serializing")?)?;
            Ok(true)
        }
        Command::Analyze { spec, out, n_grid, common } => {
            cap_threads(&common);
            let (spec, hash) = load_spec(&spec)?;
            let class = classify_polynomial(&spec);
            let edges = compute_edges(&spec, &class)?;
            let curve = compute_density(&spec, &edges, n_grid)?;

            let edges_path = format!("{out}_edges.json");
            let body = json!({ "classification": class, "edges": edges, "mass": curve.mass });
            fs::write(&edges_path, serde_json::to_string_pretty(&edges).context("serializing")? + "\n")
                .with_context(|| format!("writing {edges_path}"))?;
            let csv_path = format!("{out}_density.csv");
            let f = fs::File::create(&csv_path).with_context(|| format!("writing {csv_path}"))?;
            let mut w = BufWriter::new(f);
            curve.write_csv(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {csv_path}"))?;
            let gp_path = format!("{out}_plot.gp");
            fs::write(&gp_path, gnuplot_script(&out, edges.tau_minus, edges.tau_plus))
                .with_context(|| format!("writing {gp_path}"))?;
            println!("{}", serde_json::to_string(&body).context("serializing")?);
            record(&common, &hash, "analyze", json!({ "n_grid": n_grid, "out": out }), body)?;
            Ok(true)
        }
        Command::Verify { spec, suite, out, n, trials, seed, eta, dist, n_grid, common } => {
            cap_threads(&common);
            let loaded = spec.as_deref().map(load_spec).transpose()?;
            let opts = VerifyOptions {
                n_list: n,
                trials,
                seed,
                threads: common.threads,
                dist,
                eta,
                n_grid,
                ..VerifyOptions::default()
            };
            let report = run_suite(loaded.as_ref().map(|(s, _)| s), suite, &opts)?;
            let text = serde_json::to_string_pretty(&report).context("serializing")? + "\n";
            print!("{text}");
            if let Some(prefix) = &out {
                let path = format!("{prefix}_report.json");
                fs::write(&path, &text).with_context(|| format!("writing {path}"))?;
            }
            let hash = loaded.as_ref().map_or(String::new(), |(_, h)| h.clone());
            let summary = json!({ "passed": report.passed(), "criteria": report.criteria });
            record(&common, &hash, "verify", serde_json::to_value(&opts).context("serializing")?, summary)?;
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Infra(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
