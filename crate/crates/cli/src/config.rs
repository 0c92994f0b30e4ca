//! Run configuration: a versioned JSON document, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hbl_core::critical::AnalysisConstants;
use hbl_core::manifolds::intersect::THETA_TRANSVERSE;
use hbl_core::manifolds::tangency::TangencyConfig;
use hbl_core::manifolds::GrowthConfig;
use hbl_core::{MapParams, Orientation};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub map: MapSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub a: Option<f64>,
    /// `a = a*(b) + a_offset`, located before the run.
    pub a_offset: Option<f64>,
    pub b: f64,
    pub orientation: i32,
    /// Only `"standard"` is available from the command line.
    pub variant: String,
}

impl Default for MapSection {
    fn default() -> Self {
        Self { a: None, a_offset: None, b: 1e-3, orientation: 1, variant: "standard".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub delta: f64,
    pub alpha: f64,
    /// Derivative bound; sampled from the map when absent.
    pub c0: Option<f64>,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        Self { delta: 0.1, alpha: 0.01, c0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub h_max: f64,
    pub theta_max: f64,
    pub theta_transverse: f64,
    /// Bracket width for the tangency locator.
    pub tangency_tol: f64,
    pub astar_bracket: [f64; 2],
    pub p_max: usize,
    pub k_max: usize,
    pub cache_order: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let g = GrowthConfig::unstable_default();
        Self {
            h_max: g.h_max,
            theta_max: g.theta_max,
            theta_transverse: THETA_TRANSVERSE,
            tangency_tol: TangencyConfig::default().tol,
            astar_bracket: [1.7, 2.4],
            p_max: hbl_core::critical::P_MAX,
            k_max: 30,
            cache_order: hbl_core::critical::CACHE_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 0, threads: None, output_dir: PathBuf::from("hbl-out") }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            map: MapSection::default(),
            constants: ConstantsSection::default(),
            numerics: NumericsSection::default(),
            run: RunSection::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Config = serde_json::from_str(text).map_err(|e| anyhow::anyhow!("config: {e}"))?;
        if c.version != SCHEMA_VERSION {
            bail!("config: unsupported version {} (expected {SCHEMA_VERSION})", c.version);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.map;
        if !(m.b > 0.0 && m.b < 1.0) {
            bail!("map.b must lie in (0, 1), got {}", m.b);
        }
        if m.orientation != 1 && m.orientation != -1 {
            bail!("map.orientation must be 1 or -1, got {}", m.orientation);
        }
        if m.variant != "standard" {
            bail!("map.variant: only \"standard\" is supported here, got {:?}", m.variant);
        }
        if let Some(a) = m.a {
            if !a.is_finite() {
                bail!("map.a must be finite");
            }
        }
        let n = &self.numerics;
        if !(n.h_max > 0.0 && n.h_max <= 0.1) {
            bail!("numerics.h_max must lie in (0, 0.1], got {}", n.h_max);
        }
        if !(n.theta_max > 0.0 && n.theta_max < 1.0) {
            bail!("numerics.theta_max must lie in (0, 1), got {}", n.theta_max);
        }
        if !(n.theta_transverse > 0.0 && n.theta_transverse < std::f64::consts::FRAC_PI_2) {
            bail!("numerics.theta_transverse must lie in (0, pi/2), got {}", n.theta_transverse);
        }
        if !(n.tangency_tol > 0.0 && n.tangency_tol < 0.1) {
            bail!("numerics.tangency_tol must lie in (0, 0.1), got {}", n.tangency_tol);
        }
        if !(n.astar_bracket[0] < n.astar_bracket[1]) {
            bail!("numerics.astar_bracket must be increasing");
        }
        if n.p_max == 0 || n.k_max == 0 || n.cache_order == 0 {
            bail!("numerics.p_max, k_max and cache_order must be positive");
        }
        if self.run.threads == Some(0) {
            bail!("run.threads must be positive");
        }
        self.constants()?;
        Ok(())
    }

    pub fn orientation(&self) -> Orientation {
        if self.map.orientation < 0 {
            Orientation::Minus
        } else {
            Orientation::Plus
        }
    }

    pub fn tangency(&self) -> TangencyConfig {
        TangencyConfig { tol: self.numerics.tangency_tol, delta: self.constants.delta, ..TangencyConfig::default() }
    }

    pub fn growth(&self, stable: bool) -> GrowthConfig {
        let base = if stable { GrowthConfig::stable_default() } else { GrowthConfig::unstable_default() };
        GrowthConfig { h_max: self.numerics.h_max, theta_max: self.numerics.theta_max, ..base }
    }

    /// Constants with `c0` taken from the file or left at the floor; the
    /// map-dependent estimate is applied in [`Config::constants_for`].
    pub fn constants(&self) -> Result<AnalysisConstants> {
        let c = &self.constants;
        Ok(AnalysisConstants::new(c.delta, c.alpha, c.c0.unwrap_or(hbl_core::critical::C0_FLOOR))?)
    }

    pub fn constants_for(&self, p: &MapParams) -> Result<AnalysisConstants> {
        let c = &self.constants;
        match c.c0 {
            Some(c0) => Ok(AnalysisConstants::new(c.delta, c.alpha, c0)?),
            None => {
                let k = AnalysisConstants::for_map(p, c.delta)?;
                Ok(AnalysisConstants::new(c.delta, c.alpha, k.c0)?)
            }
        }
    }
}
