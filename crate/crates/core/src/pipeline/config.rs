use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cae::{Architecture, TrainConfig};
use crate::dgtd::{Inclusion, Material, MaterialMap, VACUUM_TAG};
use crate::error::{Error, Result};
use crate::pod::exact_sqrt;
use crate::snapshot::{axis_points, sample_parameters, AxisSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub half_width: f64,
    pub resolution: usize,
    pub order: usize,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggedMaterial {
    pub tag: u32,
    pub eps: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Eps,
    Nu,
}

/// One parameter dimension: a material property of one tag, sampled on
/// `count` equidistant points of `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterAxis {
    pub tag: u32,
    pub property: Property,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl ParameterAxis {
    pub fn spec(&self) -> AxisSpec {
        AxisSpec {
            lo: self.lo,
            hi: self.hi,
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub omega: f64,
    /// Simulated time `T_f` in incident periods.
    pub periods: usize,
    /// Solver steps between consecutive snapshots; picked from the CFL
    /// limit when absent.
    #[serde(default)]
    pub steps_per_sample: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_t: usize,
    /// Length of the sampled window at the end of the run, in periods.
    #[serde(default = "one")]
    pub window_periods: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodConfig {
    pub k: usize,
    pub n_basis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchitectureChoice {
    Paper,
    Desk { widths: [usize; 4], dense_width: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaeConfig {
    pub code: usize,
    pub train_fraction: f64,
    pub architecture: ArchitectureChoice,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsiConfig {
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub params: Vec<Vec<f64>>,
    /// Defaults to the training times.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub materials: Vec<TaggedMaterial>,
    pub parameters: Vec<ParameterAxis>,
    pub source: SourceConfig,
    pub sampling: SamplingConfig,
    pub pod: PodConfig,
    pub cae: CaeConfig,
    pub csi: CsiConfig,
    pub test: TestConfig,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; a relative `output_dir` is resolved
    /// against the config file's directory, and a missing one becomes
    /// `runs/<name>` there.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let dir = cfg
            .output_dir
            .take()
            .unwrap_or_else(|| Path::new("runs").join(&cfg.name));
        cfg.output_dir = Some(if dir.is_absolute() { dir } else { base.join(dir) });
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(&self.name))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        if !(m.half_width > 0.0) || m.resolution == 0 || m.order == 0 {
            return Err(bad("mesh needs a positive half_width, resolution and order"));
        }
        if self.parameters.is_empty() {
            return Err(bad("at least one parameter axis is required"));
        }
        let tags: Vec<u32> = m.inclusions.iter().map(|i| i.tag).collect();
        for (d, p) in self.parameters.iter().enumerate() {
            if p.tag != VACUUM_TAG && !tags.contains(&p.tag) {
                return Err(bad(format!("parameter {d} refers to unknown tag {}", p.tag)));
            }
            axis_points(&p.spec()).map_err(|e| bad(format!("parameter {d}: {e}")))?;
        }
        if !(self.source.omega > 0.0) || self.source.periods == 0 {
            return Err(bad("source needs omega > 0 and at least one period"));
        }
        if self.source.steps_per_sample == Some(0) {
            return Err(bad("steps_per_sample must be positive"));
        }
        let s = &self.sampling;
        if s.n_t == 0 || s.window_periods == 0 || s.window_periods > self.source.periods {
            return Err(bad("sampling needs n_t >= 1 and 1 <= window_periods <= periods"));
        }
        if self.pod.k == 0 || self.pod.k > s.n_t {
            return Err(bad(format!("pod.k = {} must lie in 1..={}", self.pod.k, s.n_t)));
        }
        let side = exact_sqrt(self.pod.n_basis)
            .ok_or_else(|| bad(format!("pod.n_basis = {} is not a perfect square", self.pod.n_basis)))?;
        if self.cae.code == 0 {
            return Err(bad("cae.code must be positive"));
        }
        if !(self.cae.train_fraction > 0.0 && self.cae.train_fraction < 1.0) {
            return Err(bad("cae.train_fraction must lie in (0, 1)"));
        }
        if self.cae.architecture == ArchitectureChoice::Paper && side != 14 {
            return Err(bad(format!(
                "the paper architecture needs n_basis = 196, got {}",
                self.pod.n_basis
            )));
        }
        if !(self.csi.delta > 0.0 && self.csi.delta < 1.0) {
            return Err(bad("csi.delta must lie in (0, 1)"));
        }
        if self.test.params.is_empty() {
            return Err(bad("test.params is empty"));
        }
        for mu in &self.test.params {
            if mu.len() != self.parameters.len() {
                return Err(bad(format!(
                    "test parameter {mu:?} has {} entries, expected {}",
                    mu.len(),
                    self.parameters.len()
                )));
            }
            for (v, p) in mu.iter().zip(&self.parameters) {
                if !(*v >= p.lo && *v <= p.hi) {
                    return Err(bad(format!(
                        "test parameter {mu:?} lies outside the training range [{}, {}]",
                        p.lo, p.hi
                    )));
                }
            }
        }
        if let Some(times) = &self.test.times {
            if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
                return Err(bad("test.times must be finite and non-empty"));
            }
        }
        self.materials_at(&self.lower_corner())?;
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        let side = exact_sqrt(self.pod.n_basis).unwrap_or(0);
        match &self.cae.architecture {
            ArchitectureChoice::Paper => Architecture::paper(self.cae.code),
            ArchitectureChoice::Desk { widths, dense_width } => {
                Architecture::desk(side, 3, self.cae.code, *widths, *dense_width)
            }
        }
    }

    pub fn axes(&self) -> Result<Vec<Vec<f64>>> {
        self.parameters.iter().map(|p| axis_points(&p.spec())).collect()
    }

    pub fn training_params(&self) -> Result<Vec<Vec<f64>>> {
        sample_parameters(&self.parameters.iter().map(ParameterAxis::spec).collect::<Vec<_>>())
    }

    pub fn lower_corner(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.lo).collect()
    }

    /// Base materials with the parameter `mu` written into its tags.
    pub fn materials_at(&self, mu: &[f64]) -> Result<MaterialMap> {
        let mut map = MaterialMap::vacuum();
        for inc in &self.mesh.inclusions {
            if map.get(inc.tag).is_none() {
                map.set(inc.tag, Material::VACUUM)?;
            }
        }
        for m in &self.materials {
            map.set(m.tag, Material { eps: m.eps, nu: m.nu })?;
        }
        for (p, &v) in self.parameters.iter().zip(mu) {
            let mut mat = map.get(p.tag).unwrap_or(Material::VACUUM);
            match p.property {
                Property::Eps => mat.eps = v,
                Property::Nu => mat.nu = v,
            }
            map.set(p.tag, mat).map_err(|e| bad(e.to_string()))?;
        }
        Ok(map)
    }

    fn digest(parts: &[String]) -> [u8; 32] {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        h.finalize().into()
    }

    fn part<T: Serialize>(name: &str, v: &T) -> String {
        #[derive(Serialize)]
        struct Wrap<'a, T> {
            name: &'a str,
            value: &'a T,
        }
        toml::to_string(&Wrap { name, value: v }).expect("config serializes")
    }

    fn fom_parts(&self) -> Vec<String> {
        vec![
            Self::part("mesh", &self.mesh),
            Self::part("materials", &self.materials),
            Self::part("parameters", &self.parameters),
            Self::part("source", &self.source),
            Self::part("sampling", &self.sampling),
        ]
    }

    /// Identity of the inputs each stage depends on; any change below a
    /// stage invalidates its cached artifact.
    pub fn stage_key(&self, stage: StageKind) -> [u8; 32] {
        let mut parts = self.fom_parts();
        if stage == StageKind::TestSnapshots {
            parts.push(Self::part("test", &self.test));
            return Self::digest(&parts);
        }
        if stage >= StageKind::Pod {
            parts.push(Self::part("pod", &self.pod));
        }
        if stage >= StageKind::Cae {
            parts.push(Self::part("cae", &self.cae));
        }
        if stage >= StageKind::Csi {
            parts.push(Self::part("csi", &self.csi));
        }
        Self::digest(&parts)
    }

    /// Hash of everything but the name and output location.
    pub fn hash(&self) -> [u8; 32] {
        let mut parts = self.fom_parts();
        parts.push(Self::part("pod", &self.pod));
        parts.push(Self::part("cae", &self.cae));
        parts.push(Self::part("csi", &self.csi));
        parts.push(Self::part("test", &self.test));
        Self::digest(&parts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageKind {
    Snapshots,
    TestSnapshots,
    Pod,
    Cae,
    Csi,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Snapshots => "snapshots",
            StageKind::TestSnapshots => "test-snapshots",
            StageKind::Pod => "pod",
            StageKind::Cae => "cae",
            StageKind::Csi => "csi",
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
name = "tiny"

[mesh]
half_width = 1.5
resolution = 6
order = 1
inclusions = [{ shape = "disk", center = [0.0, 0.0], radius = 0.5, tag = 1 }]

[[parameters]]
tag = 1
property = "eps"
lo = 1.0
hi = 3.0
count = 4

[source]
omega = 4.0
periods = 3

[sampling]
n_t = 8

[pod]
k = 3
n_basis = 4

[cae]
code = 2
train_fraction = 0.75
architecture = { kind = "desk", widths = [2, 2, 2, 2], dense_width = 4 }
train = { learning_rate = 1e-3, max_epochs = 3, batch_size = 4 }

[csi]
delta = 1e-4

[test]
params = [[1.5], [2.5]]
"#;

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.sampling.window_periods, 1);
        assert_eq!(cfg.cae.train.decay, TrainConfig::default().decay);
        assert_eq!(cfg.training_params().unwrap().len(), 4);
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        let m = cfg.materials_at(&[2.0]).unwrap();
        assert_eq!(m.get(1).unwrap().eps, 2.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let extra = SAMPLE.replace("n_t = 8", "n_t = 8\nbogus = 1");
        assert!(matches!(ExperimentConfig::parse(&extra), Err(Error::Config(_))));
        let square = SAMPLE.replace("n_basis = 4", "n_basis = 5");
        assert!(ExperimentConfig::parse(&square).is_err());
        let outside = SAMPLE.replace("[[1.5], [2.5]]", "[[1.5], [3.5]]");
        assert!(ExperimentConfig::parse(&outside).unwrap_err().to_string().contains("outside"));
        let inc = SAMPLE.replace("radius = 0.5,", "radius = 0.5, colour = 2,");
        assert!(ExperimentConfig::parse(&inc).is_err());
        let tag = SAMPLE.replace("tag = 1\nproperty", "tag = 7\nproperty");
        assert!(ExperimentConfig::parse(&tag).is_err());
    }

    #[test]
    fn stage_keys_follow_dependencies() {
        let a = ExperimentConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        b.csi.delta = 1e-3;
        assert_eq!(a.stage_key(StageKind::Cae), b.stage_key(StageKind::Cae));
        assert_ne!(a.stage_key(StageKind::Csi), b.stage_key(StageKind::Csi));
        b.output_dir = Some("elsewhere".into());
        b.csi.delta = a.csi.delta;
        assert_eq!(a.hash(), b.hash());
        b.pod.k = 2;
        assert_eq!(a.stage_key(StageKind::Snapshots), b.stage_key(StageKind::Snapshots));
        assert_ne!(a.stage_key(StageKind::Pod), b.stage_key(StageKind::Pod));
    }
}
