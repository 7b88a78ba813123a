//! Run configuration: one TOML file with a section per command, plus flag overrides.

use std::path::{Path, PathBuf};

use looplab::optics::{destructive_geometry, DetectorGeometry, DEFAULT_A, DEFAULT_LAMBDA, DEFAULT_W0};
use looplab::protocol::{
    DecisionRule, DecoherenceEntry, DecoherenceSchedule, EventId, EventValue, Mode, ScenarioConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Not embedded in reports, so bundles compare equal across directories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub scenario: ScenarioSection,
    pub mc: McSection,
    pub optics: OpticsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Ideal,
    Scheduled,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// `rule_a,rule_b`, each `same` or `opposite`.
    pub rules: String,
    /// `A1',B1`, each `yes` or `no`.
    pub first: String,
    pub mode: ModeName,
    /// Entries such as `S@A2->B2`; used in scheduled mode.
    pub schedule: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Sampled schedules in stochastic mode.
    pub n_trials: u64,
    pub assert_no_loop: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry: Option<String>,
    pub cycle_limit: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            rules: "same,same".into(),
            first: "yes,yes".into(),
            mode: ModeName::Ideal,
            schedule: Vec::new(),
            p: None,
            n_trials: 1000,
            assert_no_loop: false,
            entry: None,
            cycle_limit: looplab::episodic::DEFAULT_CYCLE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub p_grid: Vec<f64>,
    pub n_trials: u64,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            p_grid: Vec::new(),
            n_trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsSection {
    pub lambda: f64,
    pub a: f64,
    /// Screen distance; the destructive solution when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// Aperture; the optimised value when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    pub phi_aux: f64,
    pub w0: f64,
    pub n_photons: u64,
    pub n_trials: u64,
    pub alpha: f64,
    pub samples: usize,
    pub grid: usize,
    pub emit_trace: bool,
}

impl Default for OpticsSection {
    fn default() -> Self {
        OpticsSection {
            lambda: DEFAULT_LAMBDA,
            a: DEFAULT_A,
            l: None,
            d: None,
            phi_aux: 0.0,
            w0: DEFAULT_W0,
            n_photons: 10_000,
            n_trials: 1000,
            alpha: 0.01,
            samples: 401,
            grid: 49,
            emit_trace: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// The copy embedded in reports.
    pub fn embedded(&self) -> RunConfig {
        RunConfig {
            out_dir: None,
            ..self.clone()
        }
    }
}

fn pair_of<T: std::str::FromStr>(field: &str, text: &str) -> Result<[T; 2], CliError>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(CliError::Usage(format!("{field}: expected two comma-separated values, got {text:?}")));
    };
    let parse = |s: &str| s.parse::<T>().map_err(|e| CliError::Usage(format!("{field}: {e}")));
    Ok([parse(a)?, parse(b)?])
}

impl ScenarioSection {
    pub fn scenario_config(&self) -> Result<ScenarioConfig, CliError> {
        let [rule_a, rule_b] = pair_of::<DecisionRule>("rules", &self.rules)?;
        let [first_a, first_b] = pair_of::<EventValue>("first", &self.first)?;
        let mode = match self.mode {
            ModeName::Ideal => Mode::Ideal,
            ModeName::Scheduled => Mode::Scheduled {
                schedule: self.parsed_schedule()?,
            },
            ModeName::Stochastic => Mode::Stochastic {
                p: self
                    .p
                    .ok_or_else(|| CliError::Usage("stochastic mode needs p".into()))?,
            },
        };
        let cfg = ScenarioConfig {
            rule_a,
            rule_b,
            first_action_a: first_a,
            first_action_b: first_b,
            mode,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn parsed_schedule(&self) -> Result<DecoherenceSchedule, CliError> {
        let entries = self
            .schedule
            .iter()
            .map(|s| {
                s.parse::<DecoherenceEntry>()
                    .map_err(|e| CliError::Usage(format!("schedule: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        DecoherenceSchedule::from_entries(entries).map_err(|e| CliError::Usage(format!("schedule: {e}")))
    }

    pub fn entry_event(&self) -> Result<Option<EventId>, CliError> {
        self.entry
            .as_deref()
            .map(|s| s.parse().map_err(|e| CliError::Usage(format!("entry: {e}"))))
            .transpose()
    }
}

impl OpticsSection {
    /// Geometry with `d` left at zero when it is to be optimised.
    pub fn geometry(&self) -> Result<DetectorGeometry, CliError> {
        let l = match self.l {
            Some(l) => l,
            None => destructive_geometry(self.lambda, self.a).map_err(|e| CliError::Usage(e.to_string()))?,
        };
        let g = DetectorGeometry {
            lambda: self.lambda,
            a: self.a,
            l,
            d: self.d.unwrap_or(0.0),
            phi_aux: self.phi_aux,
            w0: self.w0,
        };
        g.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.scenario.schedule = vec!["S@A2->B2".into()];
        cfg.scenario.mode = ModeName::Scheduled;
        cfg.scenario.p = Some(0.25);
        cfg.scenario.entry = Some("A2".into());
        cfg.mc.p_grid = vec![0.0, 0.1, 0.5];
        cfg.optics.d = Some(2.4e-4);
        cfg.optics.lambda = 632.8e-9;
        cfg.out_dir = Some("out".into());
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml(&RunConfig::default().to_toml()).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = RunConfig::from_toml("seed = 1\n[optics]\nlamda = 1e-6\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lamda") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn scenario_parsing() {
        let mut s = ScenarioSection::default();
        s.rules = "same,opp".into();
        s.first = "yes,no".into();
        let cfg = s.scenario_config().unwrap();
        assert_eq!(cfg.rule_b, DecisionRule::Opposite);
        assert_eq!(cfg.first_action_b, EventValue::No);
        s.rules = "same".into();
        assert!(s.scenario_config().is_err());
        s.rules = "same,sideways".into();
        assert!(s.scenario_config().is_err());
        s.rules = "same,same".into();
        s.mode = ModeName::Stochastic;
        assert!(s.scenario_config().is_err());
    }

    #[test]
    fn default_geometry_matches_library_default() {
        let g = OpticsSection::default().geometry().unwrap();
        assert_eq!(g.with_d(DetectorGeometry::default().d), DetectorGeometry::default());
    }
}
