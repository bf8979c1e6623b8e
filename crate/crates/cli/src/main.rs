use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use burstsim_core::classify::{classify, Classification, FiringMode};
use burstsim_core::experiments::excitability_experiment;
use burstsim_core::io::{read_trace, write_svg, write_sweep, write_trace};
use burstsim_core::netlist::{deck_to_config, parse_deck, parse_value, DeckOptions};
use burstsim_core::normal_form::{nf_classify_settings, nf_integrate, preset, preset_search, NfSettings, SEARCH_START};
use burstsim_core::{mirrored_hysteresis_sweep, CircuitConfig, CircuitModel, CircuitState, Polarity, SweepDirection};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "burstsim", version, about = "Piecewise-linear neuromorphic burster simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DeckArgs {
    /// Circuit deck file.
    deck: PathBuf,
    /// Override ri2, e.g. 34.5k for tonic spiking.
    #[arg(long, value_parser = si)]
    ri2: Option<f64>,
    /// Use the model card's bf instead of beta = 100.
    #[arg(long)]
    beta_from_model: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the closed loop and write the trace.
    Sim {
        #[command(flatten)]
        deck: DeckArgs,
        /// Simulated time; defaults to the deck's tran stop time.
        #[arg(long, value_parser = si)]
        t_end: Option<f64>,
        /// Constant applied current into the v_o node (A).
        #[arg(long, value_parser = si)]
        i_app: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG plot of v_x.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Trace the static v_y -> v_x characteristic at fixed v_z.
    Sweep {
        #[command(flatten)]
        deck: DeckArgs,
        #[arg(long, value_parser = si)]
        vz: f64,
        /// Grid as start:stop:step.
        #[arg(long, default_value = "0:5:0.001")]
        vy: String,
        #[arg(long, value_enum, default_value = "up")]
        direction: Direction,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the normal form.
    Nf {
        /// nf-tonic or nf-burst.
        #[arg(long, default_value = "nf-burst")]
        preset: String,
        #[arg(long, default_value_t = 500.0)]
        t_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Run the preset grid search with this step instead of a preset.
        #[arg(long)]
        search: Option<f64>,
    },
    /// Classify the firing pattern of a trace file.
    Classify { trace: PathBuf },
    /// Apply current steps from rest and tabulate the responses.
    Excite {
        #[command(flatten)]
        deck: DeckArgs,
        #[arg(long, value_enum)]
        mode: ExciteMode,
        /// Step amplitudes (A); negative steps excite.
        #[arg(long, value_delimiter = ',', value_parser = si, allow_hyphen_values = true, default_value = "-20u,-40u,-80u")]
        amps: Vec<f64>,
        /// Step duration; defaults to 10ms in tonic mode and 1ms in bursting mode.
        #[arg(long, value_parser = si)]
        dur: Option<f64>,
        /// Holding current that keeps the circuit at rest (A).
        #[arg(long, value_parser = si, default_value = "30u")]
        baseline: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the block gains and the design conditions.
    Check {
        #[command(flatten)]
        deck: DeckArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Up,
    Down,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ExciteMode {
    Tonic,
    Bursting,
}

const TONIC_RI2: f64 = 34.5e3;

fn si(s: &str) -> std::result::Result<f64, String> {
    parse_value(s, 0).map_err(|e| e.to_string())
}

fn load(args: &DeckArgs) -> Result<(CircuitConfig, Option<(f64, f64)>)> {
    let text = std::fs::read_to_string(&args.deck).with_context(|| format!("reading {}", args.deck.display()))?;
    let deck = parse_deck(&text).with_context(|| format!("parsing {}", args.deck.display()))?;
    let mut c = deck_to_config(&deck, DeckOptions { beta_from_model: args.beta_from_model })?;
    if let Some(r) = args.ri2 {
        c.r_i2 = r;
    }
    c.validate()?;
    Ok((c, deck.tran()))
}

fn grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text.split(':').map(si).collect::<std::result::Result<_, _>>().map_err(anyhow::Error::msg)?;
    let [start, stop, step] = parts[..] else {
        bail!("grid must be start:stop:step, got {text}");
    };
    if !(step > 0.0) || stop < start {
        bail!("grid needs step > 0 and stop >= start");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

fn report(c: &Classification) {
    println!("mode: {}", c.mode.as_str());
    println!("spikes: {}", c.spike_times.len());
    if c.mode != FiringMode::Quiescent {
        println!("spikes_per_burst: {:.3}", c.spikes_per_burst);
        println!("interspike_interval: {:.6e}", c.interspike_interval);
        println!("interburst_interval: {:.6e}", c.interburst_interval);
        println!("duty_cycle: {:.3}", c.duty_cycle);
        println!("isi_cv: {:.3}", c.isi_cv);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim { deck, t_end, i_app, out, svg } => {
            let (mut c, tran) = load(&deck)?;
            if let Some(i) = i_app {
                c.stimulus.baseline = i;
            }
            let t_end = t_end.or(tran.map(|t| t.1)).unwrap_or(40e-3);
            let settings = c.classify_settings();
            let (tr, _) = CircuitModel::new(c)?.integrate(CircuitState::default(), t_end)?;
            write_trace(&tr, &out)?;
            if let Some(p) = svg {
                write_svg(&tr, 0, "s", "V", &p)?;
            }
            match classify(&tr, &settings) {
                Ok(cl) => report(&cl),
                Err(e) => println!("mode: unclassified ({e})"),
            }
        }
        Command::Sweep { deck, vz, vy, direction, out } => {
            let (c, _) = load(&deck)?;
            let dir = match direction {
                Direction::Up => SweepDirection::Up,
                Direction::Down => SweepDirection::Down,
            };
            let sw = mirrored_hysteresis_sweep(&c.cascade, vz, &grid(&vy)?, dir)?;
            write_sweep(&sw, &out)?;
            for (a, b) in sw.jumps(0.5) {
                println!("jump between v_y = {a:.4} and {b:.4}");
            }
        }
        Command::Nf { preset: name, t_end, out, svg, search } => {
            if let Some(step) = search {
                for h in preset_search(step, t_end) {
                    println!(
                        "{:.3},{:.3},{:.3},{},{:.3},{:.4}",
                        h.params.lambda,
                        h.params.alpha,
                        h.params.beta,
                        h.mode.as_str(),
                        h.spikes_per_burst,
                        h.interspike_interval
                    );
                }
                return Ok(());
            }
            let Some(p) = preset(&name) else {
                bail!("unknown preset {name}; use nf-tonic or nf-burst");
            };
            let tr = nf_integrate(SEARCH_START, &p, t_end, &NfSettings::default())?;
            if let Some(o) = out {
                write_trace(&tr, &o)?;
            }
            if let Some(s) = svg {
                write_svg(&tr, 0, "1", "1", &s)?;
            }
            match classify(&tr.window(0.5 * t_end), &nf_classify_settings()) {
                Ok(cl) => report(&cl),
                Err(e) => println!("mode: unclassified ({e})"),
            }
        }
        Command::Classify { trace } => {
            let tr = read_trace(&trace)?;
            let settings = match tr.polarity {
                Polarity::Down => CircuitConfig::reference(Default::default()).classify_settings(),
                Polarity::Up => nf_classify_settings(),
            };
            report(&classify(&tr, &settings)?);
        }
        Command::Excite { deck, mode, amps, dur, baseline, out } => {
            let (mut c, _) = load(&deck)?;
            if mode == ExciteMode::Tonic && deck.ri2.is_none() {
                c.r_i2 = TONIC_RI2;
            }
            c.stimulus.baseline = baseline;
            let dur = dur.unwrap_or(if mode == ExciteMode::Tonic { 10e-3 } else { 1e-3 });
            let rows = excitability_experiment(&c, &amps, dur)?;
            let mut text = String::from("amplitude,response_duration,mean_spike_frequency,spikes\n");
            for r in &rows {
                text += &format!("{:e},{:e},{:e},{}\n", r.amplitude, r.response_duration, r.mean_spike_frequency, r.spikes);
            }
            print!("{text}");
            if let Some(o) = out {
                write_text(&o, &text)?;
            }
        }
        Command::Check { deck } => {
            let (c, _) = load(&deck)?;
            let g = c.cascade.gains();
            for (name, v) in [
                ("g1", g.g1),
                ("g2", g.g2),
                ("g3", g.g3),
                ("g4", g.g4),
                ("g5", g.g5),
                ("g6", g.g6),
                ("g7", g.g7),
                ("vs1", g.vs1),
                ("vs2", g.vs2),
                ("vs3", g.vs3),
            ] {
                println!("{name} = {v:.4}");
            }
            let nm = g.nonmonotone_condition();
            let hy = g.hysteresis_condition();
            println!("non-monotone condition g1*g2 >= g3: {}", if nm { "pass" } else { "fail" });
            println!("hysteresis condition g7 >= 1: {}", if hy { "pass" } else { "fail" });
            if !(nm && hy) {
                bail!("design conditions not met");
            }
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
