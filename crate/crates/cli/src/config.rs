//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use translator_core::{FlowParams, IntegratorConfig, Sign, SolitonError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// rotations `SO(n)` about the vertical axis of `L^{n+1}`
    SoN,
    /// boosts `SO^(n-1,1)` of `L^n x R`
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Strip,
    #[value(alias = "gamma_plus")]
    GammaPlus,
    #[value(alias = "gamma_minus")]
    GammaMinus,
    #[serde(rename = "spacelike_S")]
    #[value(name = "spacelike_S", alias = "spacelike-s")]
    SpacelikeS,
    #[serde(rename = "timelike_T")]
    #[value(name = "timelike_T", alias = "timelike-t")]
    TimelikeT,
}

/// Grid and sampling settings shared by portraits, meshes and verification.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub s0_range: Option<[f64; 2]>,
    pub w0_range: Option<[f64; 2]>,
    pub s0_count: Option<usize>,
    pub w0_count: Option<usize>,
    /// samples kept per portrait trajectory
    pub trajectory_samples: Option<usize>,
    /// half-width of square verification / hybrid grids
    pub extent: Option<f64>,
    pub h: Option<Vec<f64>>,
    pub angular_samples: Option<usize>,
    pub profile_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub action: Option<Action>,
    pub region: Option<RegionKind>,
    pub n: Option<usize>,
    pub strict_paper_fiber_coeff: Option<bool>,
    pub integrator: Option<IntegratorConfig>,
    pub grid: GridSettings,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, SolitonError> {
        let text = fs::read_to_string(path)
            .map_err(|e| SolitonError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| SolitonError::Config(format!("bad config {}: {e}", path.display())))
    }

    /// `self` with every field set in `flags` replaced.
    pub fn overlay(mut self, flags: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($f:ident).+) => {
                if flags.$($f).+.is_some() {
                    self.$($f).+ = flags.$($f).+;
                }
            };
        }
        take!(action);
        take!(region);
        take!(n);
        take!(strict_paper_fiber_coeff);
        take!(integrator);
        take!(output);
        take!(grid.s0_range);
        take!(grid.w0_range);
        take!(grid.s0_count);
        take!(grid.w0_count);
        take!(grid.trajectory_samples);
        take!(grid.extent);
        take!(grid.h);
        take!(grid.angular_samples);
        take!(grid.profile_samples);
        self
    }

    pub fn action(&self) -> Action {
        self.action.unwrap_or(Action::SoN)
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(3)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        self.integrator.unwrap_or_default()
    }

    /// The region, defaulting per action, after a compatibility check.
    pub fn region(&self) -> Result<RegionKind, SolitonError> {
        let action = self.action();
        let region = self.region.unwrap_or(match action {
            Action::SoN => RegionKind::Strip,
            Action::Boost => RegionKind::TimelikeT,
        });
        let ok = match action {
            Action::SoN => matches!(region, RegionKind::Strip | RegionKind::GammaPlus | RegionKind::GammaMinus),
            Action::Boost => matches!(region, RegionKind::SpacelikeS | RegionKind::TimelikeT),
        };
        if !ok {
            return Err(SolitonError::Config(format!(
                "region {region:?} is not available for action {action:?}"
            )));
        }
        Ok(region)
    }

    /// Parameters of the reduced equation for the configured action and region.
    pub fn params(&self) -> Result<FlowParams, SolitonError> {
        let n = self.n();
        match self.action() {
            Action::SoN => FlowParams::rotational(n),
            Action::Boost => {
                let strict = self.strict_paper_fiber_coeff.unwrap_or(false);
                let et = match self.region()? {
                    RegionKind::SpacelikeS => Sign::Plus,
                    _ => Sign::Minus,
                };
                FlowParams::boost(n, et, strict)
            }
        }
    }

    /// Fails unless the output's directory exists.
    pub fn check_output(&self) -> Result<(), SolitonError> {
        if let Some(p) = &self.output {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(SolitonError::Config(format!(
                    "output directory {} does not exist",
                    dir.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win() {
        let file: RunConfig = serde_json::from_str(
            r#"{"n": 4, "action": "so_n", "grid": {"h": [0.1, 0.05, 0.025], "extent": 1.5}}"#,
        )
        .unwrap();
        let flags = RunConfig {
            n: Some(2),
            grid: GridSettings { extent: Some(2.0), ..GridSettings::default() },
            ..RunConfig::default()
        };
        let cfg = file.overlay(flags);
        assert_eq!(cfg.n(), 2);
        assert_eq!(cfg.grid.extent, Some(2.0));
        assert_eq!(cfg.grid.h.as_deref(), Some(&[0.1, 0.05, 0.025][..]));
    }

    #[test]
    fn region_compatibility() {
        let cfg = RunConfig { action: Some(Action::Boost), region: Some(RegionKind::Strip), ..RunConfig::default() };
        assert!(cfg.region().is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"action": "boost", "region": "timelike_T"}"#).unwrap();
        assert_eq!(cfg.params().unwrap().eps_tilde(), Sign::Minus);
        assert!(serde_json::from_str::<RunConfig>(r#"{"nn": 3}"#).is_err());
    }
}
