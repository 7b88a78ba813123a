//! Command-line flags. Flags override values from the config file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ModeName, RunConfig};
use crate::{CliError, CommandName};

#[derive(Debug, Parser)]
#[command(name = "looplab", version, about = "Causal-loop protocol solver and entanglement-detection simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; falls back to the config, then LOOPLAB_OUT_DIR, then ./looplab-out.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct ScenarioArgs {
    /// Decision rules for frames A and B, e.g. `same,opposite`.
    #[arg(long)]
    pub rules: Option<String>,
    /// First actions A1' and B1, e.g. `yes,no`.
    #[arg(long)]
    pub first: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Decoherence entries such as `S@A2->B2`; implies scheduled mode.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<String>>,
    /// Per-slot decoherence rate; implies stochastic mode.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub n_trials: Option<u64>,
    /// Exit with status 2 when the selected scenario has a causal loop.
    #[arg(long)]
    pub assert_no_loop: bool,
    /// Event at which revision passes after the first start.
    #[arg(long)]
    pub entry: Option<String>,
    #[arg(long)]
    pub cycle_limit: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct McArgs {
    #[arg(long)]
    pub rules: Option<String>,
    #[arg(long)]
    pub first: Option<String>,
    /// Decoherence rates to sweep, e.g. `0,0.1,0.5`.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long)]
    pub n_trials: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct OpticsArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub l: Option<f64>,
    /// Aperture diameter; optimised when absent.
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub phi_aux: Option<f64>,
    #[arg(long)]
    pub w0: Option<f64>,
    #[arg(long)]
    pub n_photons: Option<u64>,
    /// Calibration trials.
    #[arg(long)]
    pub n_trials: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Write one JSON line per simulated photon.
    #[arg(long)]
    pub emit_trace: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ephemeral table, episodic variants and verdicts for one configuration.
    Scenario(ScenarioArgs),
    /// Loop-probability sweep over decoherence rates.
    Mc(McArgs),
    /// Interference profiles, aperture optimisation and detector calibration.
    Optics(OpticsArgs),
    /// Re-run the command recorded in a bundle and compare every file.
    Replay { dir: PathBuf },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cli {
    /// Apply flags to `config` and name the command to run.
    pub fn apply(&self, config: &mut RunConfig) -> Result<CommandName, CliError> {
        set(&mut config.seed, self.global.seed);
        if self.global.out.is_some() {
            config.out_dir = self.global.out.clone();
        }
        match &self.command {
            Command::Scenario(a) => {
                let s = &mut config.scenario;
                set(&mut s.rules, a.rules.clone());
                set(&mut s.first, a.first.clone());
                if a.schedule.is_some() {
                    s.mode = ModeName::Scheduled;
                }
                if a.p.is_some() {
                    s.mode = ModeName::Stochastic;
                    s.p = a.p;
                }
                set(&mut s.mode, a.mode);
                set(&mut s.schedule, a.schedule.clone());
                set(&mut s.n_trials, a.n_trials);
                s.assert_no_loop |= a.assert_no_loop;
                if a.entry.is_some() {
                    s.entry = a.entry.clone();
                }
                set(&mut s.cycle_limit, a.cycle_limit);
                Ok(CommandName::Scenario)
            }
            Command::Mc(a) => {
                set(&mut config.scenario.rules, a.rules.clone());
                set(&mut config.scenario.first, a.first.clone());
                set(&mut config.mc.p_grid, a.p.clone());
                set(&mut config.mc.n_trials, a.n_trials);
                Ok(CommandName::Mc)
            }
            Command::Optics(a) => {
                let o = &mut config.optics;
                set(&mut o.lambda, a.lambda);
                set(&mut o.a, a.a);
                if a.l.is_some() {
                    o.l = a.l;
                }
                if a.d.is_some() {
                    o.d = a.d;
                }
                set(&mut o.phi_aux, a.phi_aux);
                set(&mut o.w0, a.w0);
                set(&mut o.n_photons, a.n_photons);
                set(&mut o.n_trials, a.n_trials);
                set(&mut o.alpha, a.alpha);
                set(&mut o.samples, a.samples);
                set(&mut o.grid, a.grid);
                o.emit_trace |= a.emit_trace;
                Ok(CommandName::Optics)
            }
            Command::Replay { .. } => Err(CliError::Usage("replay takes no overrides".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("looplab").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_win_over_file() {
        let mut cfg = RunConfig::from_toml("seed = 3\n[scenario]\nrules = \"opposite,opposite\"\nfirst = \"no,no\"\n").unwrap();
        let cli = parse(&["scenario", "--rules", "same,opposite", "--seed", "8"]);
        assert_eq!(cli.apply(&mut cfg).unwrap(), CommandName::Scenario);
        assert_eq!(cfg.seed, 8);
        assert_eq!(cfg.scenario.rules, "same,opposite");
        assert_eq!(cfg.scenario.first, "no,no");
    }

    #[test]
    fn schedule_flag_selects_scheduled_mode() {
        let mut cfg = RunConfig::default();
        parse(&["scenario", "--schedule", "S@A2->B2,S'@B2'->A2'"]).apply(&mut cfg).unwrap();
        assert_eq!(cfg.scenario.mode, ModeName::Scheduled);
        assert_eq!(cfg.scenario.parsed_schedule().unwrap().len(), 2);
    }

    #[test]
    fn p_grid_flag() {
        let mut cfg = RunConfig::default();
        parse(&["mc", "--p", "0,0.1,0.5", "--n-trials", "10"]).apply(&mut cfg).unwrap();
        assert_eq!(cfg.mc.p_grid, vec![0.0, 0.1, 0.5]);
        assert_eq!(cfg.mc.n_trials, 10);
    }
}
