use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use privacy_hvac::adversary::{inference_accuracy, map_infer_beam, AttackConfig};
use privacy_hvac::distortion::{uniform_scheme, DistortionMatrix};
use privacy_hvac::harness::{
    compare_schemes_with, default_deltas, run_tradeoff_sweep_with, synthesize_scaled_world,
    DesignContext, Scheme,
};
use privacy_hvac::io::{self, ExperimentConfig, Series};
use privacy_hvac::occupancy::{occupancy_marginal, ZoneSet};
use privacy_hvac::thermal::closed_loop_from_model;

#[derive(Parser)]
#[command(
    name = "privhvac",
    version,
    about = "Privacy-aware occupancy sensing for HVAC control"
)]
struct Cli {
    /// Overrides the configuration's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration's.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn per-occupant transition matrices from location traces.
    Learn {
        /// Canonical `step,occupant,zone` trace file.
        #[arg(
            long,
            conflicts_with = "manifest",
            required_unless_present = "manifest"
        )]
        traces: Option<PathBuf>,
        /// Dataset manifest; the training split is used.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Zone identifiers, outside first; inferred when omitted.
        #[arg(long, value_delimiter = ',')]
        zones: Option<Vec<String>>,
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Design the per-zone distortion channels for one Δ.
    Design {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Cost tolerance; overrides the configuration's.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run the closed loop on a sampled world and log it.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// One channel file per zone; identity channels when omitted.
        #[arg(long, num_args = 1..)]
        distortion: Vec<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Infer occupant traces from reported occupancy.
    Attack {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Reported occupancy CSV.
        #[arg(long)]
        reported: PathBuf,
        /// Channels the attacker assumes, one per zone; identity when omitted.
        #[arg(long, num_args = 1..)]
        distortion: Vec<PathBuf>,
        /// Assume uniform channels instead.
        #[arg(long, conflicts_with = "distortion")]
        uniform: bool,
        /// True traces, for scoring.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Sweep Δ and record leakage, cost and attack accuracy.
    Tradeoff {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare the designed channels against the reference schemes.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Δ values for the designed channels; the bracket ends when omitted.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Build a larger world by resampling occupant profiles.
    Synth {
        /// Base model file.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        occupants: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn config(args: &ConfigArgs, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => io::load_config(p)?,
        None => {
            let c = ExperimentConfig::default();
            c.validate()?;
            c
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn context(
    cfg: &ExperimentConfig,
    world: &privacy_hvac::occupancy::FhmmModel,
) -> Result<DesignContext> {
    let tables = io::cached_tables(
        &cfg.output_dir.join("cache"),
        &cfg.params.problem(),
        &cfg.design,
        &cfg.mpc,
        world.occupant_count(),
    )?;
    Ok(DesignContext {
        tables: vec![tables; world.zone_count()],
        p_y: occupancy_marginal(world)?.per_zone,
    })
}

fn channels(paths: &[PathBuf], zones: usize, occupants: usize) -> Result<Vec<DistortionMatrix>> {
    if paths.is_empty() {
        return Ok(vec![DistortionMatrix::identity(occupants); zones]);
    }
    if paths.len() != zones {
        bail!("{} channel files for {zones} zones", paths.len());
    }
    paths.iter().map(|p| Ok(io::read_distortion(p)?)).collect()
}

fn out_file(dir: &Path, name: &str) -> PathBuf {
    let p = dir.join(name);
    eprintln!("writing {}", p.display());
    p
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Learn {
            traces,
            manifest,
            zones,
            smoothing,
            out,
        } => {
            let (train, zone_set) = match (traces, manifest) {
                (Some(t), _) => {
                    let zs = zones.map(ZoneSet::new).transpose()?;
                    io::read_traces(&t, zs.as_ref())?
                }
                (None, Some(m)) => {
                    let mut man = io::load_manifest(&m)?;
                    if zones.is_some() {
                        man.zones = zones;
                    }
                    let (train, _, zs) = io::ingest_traces(&man)?;
                    (train, zs)
                }
                (None, None) => bail!("either --traces or --manifest is required"),
            };
            let model = io::learn_model(&train, zone_set, smoothing)?;
            eprintln!(
                "learned {} occupants over {} steps",
                train.len(),
                train[0].len()
            );
            io::write_json(&out, &model)?;
        }
        Command::Design { cfg, delta } => {
            let mut cfg = config(&cfg, cli.seed)?;
            if let Some(d) = delta {
                cfg.design.delta = d;
            }
            cfg.design.validate()?;
            let world = io::load_world(&cfg)?;
            let ctx = context(&cfg, &world)?;
            let results = ctx.design(cfg.design.delta, &cfg.design, None)?;
            let dir = &cfg.output_dir;
            for (n, r) in results.iter().enumerate() {
                eprintln!(
                    "zone {}: feasible {}, {:.6} bits, {} iterations",
                    n + 1,
                    r.feasible,
                    r.mi_bits,
                    r.iterations
                );
                if let Some(m) = &r.matrix {
                    io::write_distortion(
                        &out_file(dir, &format!("distortion_zone{}.csv", n + 1)),
                        m,
                    )?;
                }
            }
            io::write_json(&out_file(dir, "design_report.json"), &results)?;
            if let Some(bad) = results.iter().position(|r| !r.feasible) {
                bail!("Δ = {} is infeasible in zone {}", cfg.design.delta, bad + 1);
            }
        }
        Command::Simulate {
            cfg,
            distortion,
            steps,
        } => {
            let cfg = config(&cfg, cli.seed)?;
            let world = io::load_world(&cfg)?;
            let zones = world.zone_count();
            let ch = channels(&distortion, zones, world.occupant_count())?;
            let (series, log) = closed_loop_from_model(
                &world,
                &ch,
                &vec![cfg.params.problem(); zones],
                &cfg.mpc,
                &vec![cfg.sweep.t_init; zones],
                steps.unwrap_or(cfg.sweep.eval_steps),
                cfg.seed,
            )?;
            let dir = &cfg.output_dir;
            io::write_occupancy(&out_file(dir, "occupancy.csv"), &series)?;
            let mut reported = series.clone();
            reported.counts = log.reported();
            io::write_occupancy(&out_file(dir, "reported.csv"), &reported)?;
            for p in io::write_closed_loop(dir, &log)? {
                eprintln!("writing {}", p.display());
            }
            eprintln!("total cost {:.6}", log.total_cost());
        }
        Command::Attack {
            cfg,
            reported,
            distortion,
            uniform,
            truth,
        } => {
            let cfg = config(&cfg, cli.seed)?;
            let world = io::load_world(&cfg)?;
            let zones = world.zone_count();
            let m = world.occupant_count();
            let series = io::read_occupancy(&reported)?;
            if series.zones() != zones || series.occupants != m {
                bail!(
                    "reported occupancy has {} zones and {} occupants, the world {zones} and {m}",
                    series.zones(),
                    series.occupants
                );
            }
            let ch = if uniform {
                vec![uniform_scheme(m); zones]
            } else {
                channels(&distortion, zones, m)?
            };
            let attack = AttackConfig {
                beam_width: cfg.sweep.beam_width,
                ..Default::default()
            };
            let inferred = map_infer_beam(&series.counts, &world, &ch, &attack)?;
            let dir = &cfg.output_dir;
            io::write_traces(
                &out_file(dir, "predicted_traces.csv"),
                &inferred.traces,
                &world.zone_set,
            )?;
            if let Some(t) = truth {
                let (truth, _) = io::read_traces(&t, Some(&world.zone_set))?;
                let acc = inference_accuracy(&inferred.traces, &truth)?;
                eprintln!("accuracy {acc:.6}");
                let summary: BTreeMap<&str, f64> =
                    [("accuracy", acc), ("log_posterior", inferred.log_posterior)].into();
                io::write_json(&out_file(dir, "attack.json"), &summary)?;
            }
        }
        Command::Tradeoff { cfg } => {
            let cfg = config(&cfg, cli.seed)?;
            let world = io::load_world(&cfg)?;
            let exp = cfg.experiment();
            let ctx = context(&cfg, &world)?;
            let deltas = match &cfg.sweep.deltas {
                Some(d) => d.clone(),
                None => default_deltas(&ctx, &exp, cfg.sweep.count)?,
            };
            eprintln!(
                "sweeping {} values of Δ, {} runs each",
                deltas.len(),
                exp.runs
            );
            let report = run_tradeoff_sweep_with(&world, &exp, &ctx, &deltas, cfg.seed)?;
            let dir = &cfg.output_dir;
            io::write_tradeoff(&out_file(dir, "tradeoff.csv"), &report.records)?;
            io::write_baselines(&out_file(dir, "baselines.csv"), &report.baselines)?;
            for (i, zones) in report.designs.iter().enumerate() {
                for (n, d) in zones.iter().enumerate() {
                    if let Some(m) = d.as_ref().and_then(|d| d.matrix.as_ref()) {
                        io::write_distortion(&dir.join(format!("sweep{i}_zone{}.csv", n + 1)), m)?;
                    }
                }
            }
            let r = &report.records;
            let pts = |f: &dyn Fn(&privacy_hvac::harness::TradeoffRecord) -> (f64, f64)| {
                r.iter().map(f).collect::<Vec<_>>()
            };
            io::write_line_plot(
                &out_file(dir, "mi_vs_delta.svg"),
                "Leakage against cost tolerance",
                "Δ ($)",
                "I(Y;V) (bits)",
                &[Series {
                    name: "optimal",
                    points: pts(&|x| (x.delta, x.mi_bits)),
                }],
                true,
            )?;
            io::write_line_plot(
                &out_file(dir, "accuracy_vs_mi.svg"),
                "Attack accuracy against leakage",
                "I(Y;V) (bits)",
                "accuracy",
                &[Series {
                    name: "optimal",
                    points: pts(&|x| (x.mi_bits, x.acc_mean)),
                }],
                false,
            )?;
            io::write_line_plot(
                &out_file(dir, "cost_vs_delta.svg"),
                "Realized cost increase against tolerance",
                "Δ ($)",
                "cost difference ($)",
                &[
                    Series {
                        name: "realized",
                        points: pts(&|x| (x.delta, x.cost_diff_mean)),
                    },
                    Series {
                        name: "Δ",
                        points: pts(&|x| (x.delta, x.delta)),
                    },
                ],
                true,
            )?;
        }
        Command::Compare { cfg, deltas } => {
            let cfg = config(&cfg, cli.seed)?;
            let world = io::load_world(&cfg)?;
            let exp = cfg.experiment();
            let ctx = context(&cfg, &world)?;
            let deltas = match deltas {
                Some(d) => d,
                None => {
                    let (lo, hi) = ctx.bracket(cfg.design.delta_t)?;
                    vec![lo, hi]
                }
            };
            let mut schemes: Vec<Scheme> = deltas
                .iter()
                .map(|&delta| Scheme::Optimal { delta })
                .collect();
            schemes.push(Scheme::Uniform);
            schemes.extend(
                cfg.sweep
                    .multinomial_acc
                    .iter()
                    .map(|&acc| Scheme::Multinomial { acc }),
            );
            schemes.push(Scheme::Identity);
            schemes.push(Scheme::FixedSchedule);
            let rows = compare_schemes_with(&world, &exp, &ctx, &schemes, cfg.seed)?;
            let dir = &cfg.output_dir;
            io::write_schemes(&out_file(dir, "schemes.csv"), &rows)?;
        }
        Command::Synth {
            model,
            occupants,
            out,
        } => {
            let base = io::read_model(&model)?;
            let seed = cli.seed.unwrap_or(0);
            let world = synthesize_scaled_world(&base, occupants, seed)?;
            io::write_json(&out, &world)?;
        }
    }
    Ok(())
}
