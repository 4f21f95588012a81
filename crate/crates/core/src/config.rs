//! The merged run configuration: defaults, then a TOML file, then flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geom::{KeypointSet, Point2};
use crate::joint::JointConfig;
use crate::manifold::ManifoldConfig;
use crate::planner::PlanConfig;
use crate::policy::{BaseConfig, InverseConfig};
use crate::sim::{ExpertConfig, SimConfig};

/// An explicit list of seeds. Written either as an array or as an
/// inclusive range string such as `"0..29"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl SeedList {
    pub fn range(start: u64, count: u64) -> Self {
        Self((start..start + count).collect())
    }
}

impl FromStr for SeedList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::config(format!(
                "bad seed list {s:?}: expected A..B or comma-separated integers"
            ))
        };
        if let Some((a, b)) = s.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            return Ok(Self((a..=b).collect()));
        }
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<Vec<u64>>>()
            .map(Self)
    }
}

impl fmt::Display for SeedList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = &self.0;
        let contiguous = v.windows(2).all(|w| w[1] == w[0] + 1);
        if v.len() > 1 && contiguous {
            write!(f, "{}..{}", v[0], v[v.len() - 1])
        } else {
            let parts: Vec<String> = v.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl Serialize for SeedList {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SeedList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<u64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => Ok(SeedList(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Resets for expert demonstrations.
    pub demos: SeedList,
    pub eval_id: SeedList,
    pub eval_ood: SeedList,
    /// Out-of-distribution resets used to record recoveries.
    pub augment: SeedList,
    /// Fresh lists for comparing policies before and after augmentation.
    pub post_id: SeedList,
    pub post_ood: SeedList,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            demos: SeedList::range(0, 100),
            eval_id: SeedList::range(10_000, 30),
            eval_ood: SeedList::range(20_000, 30),
            augment: SeedList::range(30_000, 100),
            post_id: SeedList::range(40_000, 30),
            post_ood: SeedList::range(50_000, 30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub expert: ExpertConfig,
    /// Keypoint template in the block frame; defaults to the block's
    /// centroid, bar tips, stem tip and junction.
    pub keypoints: Option<Vec<Point2>>,
    pub manifold: ManifoldConfig,
    pub plan: PlanConfig,
    pub base: BaseConfig,
    pub inverse: InverseConfig,
    pub joint: JointConfig,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.manifold.validate()?;
        self.plan.validate()?;
        self.base.validate()?;
        self.inverse.validate()?;
        self.joint.validate(self.base.horizon.min(self.plan.horizon))?;
        if let Some(k) = &self.keypoints {
            if k.is_empty() || k.iter().any(|p| !p.is_finite()) {
                return Err(Error::config("keypoints must be a non-empty list of finite points"));
            }
        }
        let s = &self.seeds;
        for (name, list) in [
            ("demos", &s.demos),
            ("eval_id", &s.eval_id),
            ("eval_ood", &s.eval_ood),
            ("augment", &s.augment),
            ("post_id", &s.post_id),
            ("post_ood", &s.post_ood),
        ] {
            if list.0.is_empty() {
                return Err(Error::config(format!("seeds.{name} is empty")));
            }
        }
        Ok(())
    }

    pub fn template(&self) -> KeypointSet {
        match &self.keypoints {
            Some(k) => KeypointSet::new(k.clone()),
            None => self.sim.block().default_keypoints(),
        }
    }

    /// The config as a JSON value, embedded in every written artifact.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[plan]\nalpah = 3.0\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::from_toml("bogus = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let c = RunConfig::from_toml("[plan]\nalpha = 2.5\n[seeds]\neval_ood = \"5..7\"\n").unwrap();
        assert_eq!(c.plan.alpha, 2.5);
        assert_eq!(c.plan.horizon, 16);
        assert_eq!(c.seeds.eval_ood.0, vec![5, 6, 7]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(RunConfig::from_toml("[joint]\nexec_per_cycle = 0\n").is_err());
        assert!(RunConfig::from_toml("[plan]\nd_min = 200.0\n").is_err());
        assert!(RunConfig::from_toml("[seeds]\ndemos = []\n").is_err());
    }

    #[test]
    fn seed_lists_parse_and_print() {
        assert_eq!("0..29".parse::<SeedList>().unwrap(), SeedList::range(0, 30));
        assert_eq!("3,1,2".parse::<SeedList>().unwrap().0, vec![3, 1, 2]);
        assert!("9..2".parse::<SeedList>().is_err());
        assert!("x".parse::<SeedList>().is_err());
        assert_eq!(SeedList::range(4, 3).to_string(), "4..6");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}
