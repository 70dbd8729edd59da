use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dsample::coarsening::ExactValue;
use dsample::estimators::EstimatorId;
use dsample::glm::SpecSet;
use dsample::sim::ScenarioConfig;

use crate::failure::Failure;

/// One run, read from a TOML file. Exactly one of the command sections is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Parent of the run directories. Defaults to `runs` next to the config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Log filter, e.g. `warn` or `info`.
    #[serde(default = "default_verbosity")]
    pub verbosity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSection>,
}

fn default_verbosity() -> String {
    "warn".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Values of `beta_ra` to simulate; empty means `scenario.beta_ra` only.
    #[serde(default)]
    pub beta_ra: Vec<f64>,
    /// Replications whose datasets are written out together with an
    /// `estimate` config that replays them.
    #[serde(default)]
    pub export: Vec<u64>,
}

impl SimulateSection {
    pub fn grid(&self) -> Vec<f64> {
        if self.beta_ra.is_empty() {
            vec![self.scenario.beta_ra]
        } else {
            self.beta_ra.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// Dataset CSV: covariates, then `A`, `R`, `S`, `Y`.
    pub data: PathBuf,
    #[serde(default = "all_estimators")]
    pub estimators: Vec<EstimatorId>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    pub specs: SpecSet,
}

fn all_estimators() -> Vec<EstimatorId> {
    EstimatorId::ALL.to_vec()
}

fn default_k() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    /// Coarsened law JSON.
    pub law: PathBuf,
    /// Values of the functional at each support point; replaces the file's `g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<ExactValue>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Check => "check",
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, Failure> {
        toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text).map_err(|e| match e {
            Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        if let Some(e) = cfg.estimate.as_mut() {
            resolve(&base, &mut e.data);
        }
        if let Some(c) = cfg.check.as_mut() {
            resolve(&base, &mut c.law);
        }
        let out = cfg.out.get_or_insert_with(|| PathBuf::from("runs"));
        resolve(&base, out);
        Ok(cfg)
    }

    /// Checks that the section of `command` is the only one present and
    /// that referenced files exist.
    pub fn validate(&self, command: Command) -> Result<(), Failure> {
        let present: Vec<&str> = [
            self.simulate.as_ref().map(|_| "simulate"),
            self.estimate.as_ref().map(|_| "estimate"),
            self.check.as_ref().map(|_| "check"),
        ]
        .into_iter()
        .flatten()
        .collect();
        if present != [command.name()] {
            return Err(Failure::Config(format!(
                "`{}` needs exactly one section, [{}]; found [{}]",
                command.name(),
                command.name(),
                present.join("], [")
            )));
        }
        if self.threads == Some(0) {
            return Err(Failure::Config("threads must be at least 1".into()));
        }
        let exists = |p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(Failure::Config(format!("file not found: {}", p.display())))
            }
        };
        match command {
            Command::Simulate => {
                let s = self.simulate.as_ref().expect("section present");
                for &b in &s.grid() {
                    let cfg = ScenarioConfig {
                        beta_ra: b,
                        ..s.scenario.clone()
                    };
                    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
                }
                if let Some(&r) = s.export.iter().find(|&&r| r >= s.scenario.replications as u64) {
                    return Err(Failure::Config(format!(
                        "cannot export replication {r} of {}",
                        s.scenario.replications
                    )));
                }
            }
            Command::Estimate => {
                let e = self.estimate.as_ref().expect("section present");
                exists(&e.data)?;
                if e.k == 0 {
                    return Err(Failure::Config("k must be at least 1".into()));
                }
                if !(e.level > 0.0 && e.level < 1.0) {
                    return Err(Failure::Config("level must lie in (0, 1)".into()));
                }
            }
            Command::Check => exists(&self.check.as_ref().expect("section present").law)?,
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        if let Some(s) = self.simulate.as_mut() {
            s.scenario.seed = seed;
        }
        if let Some(e) = self.estimate.as_mut() {
            e.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_are_exclusive() {
        let cfg = RunConfig::parse("[simulate]\nbeta_ra = [0.0]\n[check]\nlaw = \"x.json\"\n").unwrap();
        assert!(matches!(cfg.validate(Command::Simulate), Err(Failure::Config(_))));
        let cfg = RunConfig::parse("[simulate.scenario]\nn = 100\n").unwrap();
        assert!(cfg.validate(Command::Simulate).is_ok());
        assert!(cfg.validate(Command::Check).is_err());
    }

    #[test]
    fn unknown_fields_report_position() {
        let err = RunConfig::parse("[simulate.scenario]\nn = 10\nbogus = 1\n").unwrap_err();
        let Failure::Config(msg) = err else { panic!() };
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn bundled_fixtures_validate() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        let study = RunConfig::load(&dir.join("study.toml")).unwrap();
        study.validate(Command::Simulate).unwrap();
        assert_eq!(study.simulate.unwrap().grid(), vec![0.0, 0.016, 0.032]);
        let grid = RunConfig::load(&dir.join("grid.toml")).unwrap();
        grid.validate(Command::Simulate).unwrap();
        assert_eq!(grid.simulate.unwrap().grid().len(), 6);
        for name in ["mnar", "positivity_violation", "no_coarsening"] {
            RunConfig::load(&dir.join(format!("{name}.toml"))).unwrap().validate(Command::Check).unwrap();
        }
    }
}
