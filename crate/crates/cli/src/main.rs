use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use levitation_cli::acceptance;
use levitation_cli::config::MasterConfig;
use levitation_cli::output::{self, create, write_json};
use levitation_cli::pipeline;
use serde_json::json;

#[derive(Parser)]
#[command(name = "levsim", version, about = "Magnetically levitated superconducting microsphere: trap, dynamics and readout simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON master config; the shipped default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `path=value` override, e.g. `sim.quality_factors.2=8000`; repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Field grid about the trap centre, trap frequencies, ζ and lift force.
    Fieldmap(Common),
    /// Polynomial potential fitted to field-model forces.
    FitPotential(Common),
    /// Tuned thermal run; writes voltage, chunk records and optionally the trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the sampled trajectory.
        #[arg(long)]
        trajectory: bool,
    },
    /// Chunk, pulling, histogram, harmonic and energy analysis of a voltage CSV.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// `t,v` CSV as written by `simulate`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Full pipeline with the acceptance report.
    Reproduce {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

impl Common {
    fn load(&self) -> Result<(MasterConfig, PathBuf)> {
        let mut set = self.set.clone();
        if let Some(s) = self.seed {
            set.push(format!("sim.seed={s}"));
        }
        let cfg = MasterConfig::load(self.config.as_deref(), &set)?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, out))
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

/// Loads and validates the config before anything is written.
fn prepare(common: &Common) -> Result<(MasterConfig, PathBuf, String)> {
    let (cfg, out) = common.load()?;
    open_out(cfg, out)
}

fn open_out(cfg: MasterConfig, out: PathBuf) -> Result<(MasterConfig, PathBuf, String)> {
    let hash = cfg.hash();
    std::fs::create_dir_all(&out).map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
    write_json(&out.join("config.json"), &hash, &cfg)?;
    Ok((cfg, out, hash))
}

fn sci(v: [f64; 3]) -> [String; 3] {
    v.map(|x| format!("{x:.3e}"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Fieldmap(c) => fieldmap(&c),
        Command::FitPotential(c) => fit_potential(&c),
        Command::Simulate { common, trajectory } => simulate(&common, trajectory),
        Command::Analyze { common, input } => analyze(&common, &input),
        Command::Reproduce { common, criteria } => reproduce(&common, &criteria),
    }
}

fn fieldmap(c: &Common) -> Result<bool> {
    let (cfg, out, hash) = prepare(c)?;
    let (report, grid) = pipeline::fieldmap(&cfg).map_err(|e| e.in_stage("fieldmap"))?;
    let mut w = create(&out.join("field_grid.csv"))?;
    writeln!(w, "# config sha256 {hash}")?;
    pipeline::write_field_grid(&grid, &mut w)?;
    w.flush()?;
    write_json(&out.join("fieldmap.json"), &hash, &report)?;
    println!("trap frequencies Hz {:.3?}", report.frequencies_hz);
    println!("geometric factors {:.4?}", report.zeta);
    println!("lift force at {} A: {:.1} nN (weight {:.2} nN)", report.lift_current_a, report.lift_force_n * 1e9, report.weight_n * 1e9);
    Ok(true)
}

fn fit_potential(c: &Common) -> Result<bool> {
    let (cfg, out, hash) = prepare(c)?;
    let fit = pipeline::fit_trap(&cfg).map_err(|e| e.in_stage("fit-potential"))?;
    write_json(&out.join("potential.json"), &hash, &fit)?;
    let g = fit.fitted.gamma();
    println!("fitted frequencies Hz {:.3?}", fit.fitted.omega_rad_s.map(|w| w / (2.0 * std::f64::consts::PI)));
    println!("gamma s⁻²m⁻² {:?}", g.0.map(sci));
    println!("relative residual {:.3e}", fit.report.relative_residual);
    Ok(true)
}

fn simulate(c: &Common, with_trajectory: bool) -> Result<bool> {
    let (cfg, out, hash) = prepare(c)?;
    let fit = pipeline::fit_trap(&cfg).map_err(|e| e.in_stage("fit-potential"))?;
    let sim = pipeline::tune(&fit.dynamics, &pipeline::base_sim(&cfg), cfg.sim.tune_duration_s, cfg.sim.target_rms_m)
        .map_err(|e| e.in_stage("steady-state-tune"))?;
    let mut vw = create(&out.join("voltage.csv"))?;
    output::voltage_header(&mut vw, &hash)?;
    let mut tw = match with_trajectory {
        true => {
            let mut w = create(&out.join("trajectory.csv"))?;
            output::trajectory_header(&mut w, &hash)?;
            Some(w)
        }
        false => None,
    };
    let run = pipeline::run_streaming(&fit.dynamics, &sim, &cfg, |traj, v| {
        output::voltage_rows(&mut vw, v, traj.start_time_s)?;
        if let Some(w) = tw.as_mut() {
            output::trajectory_rows(w, traj)?;
        }
        Ok(())
    })?;
    vw.flush()?;
    if let Some(mut w) = tw {
        w.flush()?;
    }
    let mut cw = create(&out.join("chunks.csv"))?;
    output::chunks_header(&mut cw, &hash)?;
    output::chunk_rows(&mut cw, &run.records)?;
    cw.flush()?;
    let summary = json!({
        "duration_s": run.duration_s,
        "force_psd_n2_hz": sim.drive.force_psd_n2_hz,
        "rms_m": run.mean_square_m2.map(f64::sqrt),
        "chunks": run.records.len(),
        "flagged_chunks": run.records.iter().filter(|r| r.flagged()).count(),
    });
    write_json(&out.join("simulate.json"), &hash, &summary)?;
    println!("simulated {:.0} s, rms m {:?}", run.duration_s, run.mean_square_m2.map(|m| format!("{:.3e}", m.sqrt())));
    Ok(true)
}

fn analyze(c: &Common, input: &Path) -> Result<bool> {
    let (cfg, out) = c.load()?;
    let trace = output::read_voltage_csv(input).map_err(|e| e.in_stage("read-input"))?;
    if (trace.sample_rate_hz - cfg.sim.sample_rate_hz).abs() > 1e-6 * cfg.sim.sample_rate_hz {
        anyhow::bail!("read-input: trace sampled at {} Hz but sim.sample_rate_hz is {}", trace.sample_rate_hz, cfg.sim.sample_rate_hz);
    }
    let (cfg, out, hash) = open_out(cfg, out)?;
    let fit = pipeline::fit_trap(&cfg).map_err(|e| e.in_stage("fit-potential"))?;
    let run = pipeline::analyze_trace(&trace, &fit.dynamics, &cfg)?;
    let report = pipeline::analyze_records(&run, &fit.dynamics, &fit.fitted, &cfg)?;
    write_outputs(&out, &hash, &run.records, &report)?;
    println!("eta m²/V² {:?}", sci(report.pulling.eta_m2_per_v2));
    println!("Q {:.0?}", report.quality_factors);
    Ok(true)
}

fn write_outputs(out: &Path, hash: &str, records: &[levitation_core::analysis::ChunkRecord], report: &pipeline::AnalysisReport) -> Result<()> {
    let mut cw = create(&out.join("chunks.csv"))?;
    output::chunks_header(&mut cw, hash)?;
    output::chunk_rows(&mut cw, records)?;
    cw.flush()?;
    let mut hw = create(&out.join("histograms.csv"))?;
    writeln!(hw, "# config sha256 {hash}")?;
    pipeline::write_histograms_csv(&report.histograms, &mut hw)?;
    hw.flush()?;
    write_json(&out.join("analysis.json"), hash, report)?;
    Ok(())
}

fn reproduce(c: &Common, criteria: &[u8]) -> Result<bool> {
    if let Some(bad) = criteria.iter().find(|&&id| !(1..=12).contains(&id)) {
        anyhow::bail!("--criteria: no criterion {bad}; valid numbers are 1 to 12");
    }
    let (cfg, out, hash) = prepare(c)?;
    let (report, art) = acceptance::evaluate(&cfg, criteria)?;
    for r in &report.criteria {
        println!("{}", r.line());
    }
    if let Some(s) = &art.sweep {
        let mut w = create(&out.join("current_sweep.csv"))?;
        writeln!(w, "# config sha256 {hash}")?;
        pipeline::write_sweep_csv(s, &mut w)?;
        w.flush()?;
    }
    if let Some(d) = &art.density {
        write_json(&out.join("density_pair.json"), &hash, d)?;
    }
    if let Some(a) = &art.main_run {
        let mut hw = create(&out.join("histograms.csv"))?;
        writeln!(hw, "# config sha256 {hash}")?;
        pipeline::write_histograms_csv(&a.histograms, &mut hw)?;
        hw.flush()?;
        write_json(&out.join("analysis.json"), &hash, a)?;
    }
    if let Some(a) = &art.eta_run {
        write_json(&out.join("eta_recovery.json"), &hash, a)?;
    }
    write_json(&out.join("acceptance.json"), &hash, &report)?;
    println!("{}", if report.passed { "all requested criteria pass" } else { "some criteria fail" });
    Ok(report.passed)
}
