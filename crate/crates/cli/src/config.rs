//! JSON experiment configuration and its resolution into core objects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use soficlab_core::bernoulli::standard_family;
use soficlab_core::conjugacy::AlignParams;
use soficlab_core::group::{validate_closure, ClosureRequirement};
use soficlab_core::irs::Provenance;
use soficlab_core::{
    ActionSpec, ApproxHom, CylinderFunction, Element, GroupKind, GroupSpec, IrsWindowSpec, Pattern,
    Permutation, StepFunction, Window,
};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Irs,
    Defect,
    Bernoulli,
    Relcheck,
    Align,
    Suite,
}

/// Group element as integer coordinates or, for free groups, a word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementRepr {
    Ints(Vec<i64>),
    Word(String),
}

impl ElementRepr {
    pub fn resolve(&self, spec: &GroupSpec) -> Result<Element> {
        Ok(match self {
            ElementRepr::Ints(xs) => spec.element_from_ints(xs)?,
            ElementRepr::Word(w) => spec.parse_word(w)?,
        })
    }
}

/// Action families parametrised by a size `n` from the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Base {
    /// `Z^k` on `(Z/n)^k`.
    Torus,
    /// `Z^k` on `(Z/n)^k` with anisotropic moduli `n · factors[i]`.
    ScaledTorus {
        factors: Vec<u64>,
    },
    /// `Z^k` on `Z/n^k`.
    Embedding,
    /// A finite abelian group acting on itself; ignores `n`.
    Regular,
    HeisenbergQuotient,
    HeisenbergAffine,
    /// `n` fixed points.
    Trivial,
    /// Random primary generator images on `n` points.
    RandomGenerators {
        seed: u64,
    },
    /// A fixed construction; ignores `n`.
    Explicit {
        action: ActionSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConfig {
    pub name: String,
    #[serde(flatten)]
    pub base: Base,
    #[serde(default)]
    pub perturb: Option<Perturbation>,
    /// Adds `round(fraction · d)` fixed points.
    #[serde(default)]
    pub pad_fraction: Option<f64>,
    /// Conjugates every image by a random permutation.
    #[serde(default)]
    pub relabel_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFactor {
    pub element: ElementRepr,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderConfig {
    #[serde(default)]
    pub labels: Vec<LabelFactor>,
    #[serde(default)]
    pub bits: Vec<ElementRepr>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CylinderSource {
    /// `"standard"`: the built-in test family.
    Named(String),
    List(Vec<CylinderConfig>),
}

impl Default for CylinderSource {
    fn default() -> Self {
        CylinderSource::Named("standard".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPattern {
    pub pattern: String,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ThetaSource {
    /// Empirical IRS of the first construction (of its unperturbed version when
    /// the construction is perturbed).
    #[default]
    Empirical,
    /// Patterns over the IRS window in its ball order.
    Patterns { entries: Vec<WeightedPattern> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub defect: f64,
    pub stats: f64,
    pub trace: f64,
    pub intersection: f64,
    pub equivariance: f64,
    /// Absolute good-sample tolerance; defaults to `good_sample_factor · sqrt(Σ Var)`.
    pub good_sample: Option<f64>,
    pub good_sample_factor: f64,
    /// Upper bound on the alignment objective, if any.
    pub alignment: Option<f64>,
    /// Slack allowed on top of the finite-scale bound in the bernoulli stage.
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            defect: 0.0,
            stats: 0.0,
            trace: 0.05,
            intersection: 0.0,
            equivariance: 0.0,
            good_sample: None,
            good_sample_factor: 10.0,
            alignment: None,
            oracle: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub labels: u64,
    pub mc: u64,
    pub align: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub rounds: usize,
    pub max_passes: usize,
    pub restarts: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        let p = AlignParams::default();
        Self {
            rounds: p.rounds,
            max_passes: p.max_passes,
            restarts: p.restarts,
        }
    }
}

fn default_label_radius() -> usize {
    1
}
fn default_bins() -> usize {
    16
}
fn default_relation_bins() -> u32 {
    4
}
fn default_samples() -> usize {
    1024
}
fn default_max_tries() -> usize {
    10
}
fn default_output() -> PathBuf {
    PathBuf::from("soficlab-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub group: GroupKind,
    /// Alternative symmetric generating set.
    #[serde(default)]
    pub generators: Option<Vec<ElementRepr>>,
    #[serde(default)]
    pub constructions: Vec<ConstructionConfig>,
    /// Size schedule; every pipeline runs once per size.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Radius of the IRS / defect / Θ window.
    pub window_radius: usize,
    /// Radius of the label window of relation-check atoms.
    #[serde(default = "default_label_radius")]
    pub label_radius: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_relation_bins")]
    pub relation_bins: u32,
    #[serde(default)]
    pub cylinders: CylinderSource,
    #[serde(default)]
    pub theta: ThetaSource,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_max_tries")]
    pub max_tries: usize,
    #[serde(default)]
    pub align: AlignConfig,
    #[serde(default)]
    pub pipelines: Vec<Pipeline>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Directory of the config file; relative outputs resolve against it.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.base_dir {
            Some(dir) if self.output.is_relative() => dir.join(&self.output),
            _ => self.output.clone(),
        }
    }

    pub fn spec(&self) -> Result<GroupSpec> {
        let spec = GroupSpec::from_kind(&self.group)?;
        match &self.generators {
            None => Ok(spec),
            Some(gens) => {
                let els = gens
                    .iter()
                    .map(|g| g.resolve(&spec))
                    .collect::<Result<Vec<_>>>()?;
                Ok(spec.with_generators(els)?)
            }
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        if self.sizes.is_empty() {
            vec![0]
        } else {
            self.sizes.clone()
        }
    }

    pub fn align_params(&self) -> AlignParams {
        AlignParams {
            rounds: self.align.rounds,
            max_passes: self.align.max_passes,
            restarts: self.align.restarts,
            seed: self.seeds.align,
        }
    }

    pub fn cylinders(&self, spec: &GroupSpec) -> Result<Vec<CylinderFunction>> {
        match &self.cylinders {
            CylinderSource::Named(n) if n == "standard" => Ok(standard_family(spec, self.bins)?),
            CylinderSource::Named(n) => {
                Err(CliError::Config(format!("cylinders: unknown family {n:?}")))
            }
            CylinderSource::List(list) => list
                .iter()
                .map(|c| {
                    let labels = c
                        .labels
                        .iter()
                        .map(|l| {
                            Ok((
                                l.element.resolve(spec)?,
                                StepFunction::new(l.values.clone())?,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let bits = c
                        .bits
                        .iter()
                        .map(|b| b.resolve(spec))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(CylinderFunction::new(labels, bits)?)
                })
                .collect(),
        }
    }

    /// Θ over `window`; `sigma_base` supplies the empirical source.
    pub fn theta(
        &self,
        spec: &GroupSpec,
        window: &Window,
        sigma_base: &ApproxHom,
    ) -> Result<IrsWindowSpec> {
        match &self.theta {
            ThetaSource::Empirical => {
                let mu = soficlab_core::irs::empirical_irs(sigma_base, window)?;
                Ok(IrsWindowSpec::from_measure(spec, &mu)?)
            }
            ThetaSource::Patterns { entries } => {
                let entries = entries
                    .iter()
                    .map(|p| {
                        let y: Pattern = p
                            .pattern
                            .parse()
                            .map_err(|e| CliError::Config(format!("theta pattern: {e}")))?;
                        if y.len() != window.len() {
                            return Err(CliError::Config(format!(
                                "theta pattern {} has {} bits, window has {}",
                                p.pattern,
                                y.len(),
                                window.len()
                            )));
                        }
                        Ok((y, p.weight))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(IrsWindowSpec::new(
                    spec,
                    window,
                    entries,
                    Provenance::UserSupplied,
                )?)
            }
        }
    }

    /// Checks that can fail before any permutation is built.
    pub fn validate(&self) -> Result<()> {
        if self.pipelines.iter().any(|p| *p != Pipeline::Suite) {
            if self.constructions.is_empty() {
                return Err(CliError::Config(
                    "constructions: at least one is required".into(),
                ));
            }
            let spec = self.spec()?;
            let w = spec.ball(self.window_radius)?;
            if self.pipelines.contains(&Pipeline::Bernoulli)
                || self.pipelines.contains(&Pipeline::Relcheck)
            {
                let missing = self.closure_gaps(&spec, &w)?;
                if !missing.is_empty() {
                    return Err(CliError::Config(format!(
                        "window closure failed: {}",
                        missing.join("; ")
                    )));
                }
            }
            if self.pipelines.contains(&Pipeline::Align) && self.constructions.len() < 2 {
                return Err(CliError::Config(
                    "align: two constructions are required".into(),
                ));
            }
            for c in &self.constructions {
                if let Some(p) = &c.perturb {
                    if !(0.0..=1.0).contains(&p.rate) {
                        return Err(CliError::Config(format!(
                            "constructions.{}.perturb.rate outside [0,1]",
                            c.name
                        )));
                    }
                }
            }
        }
        if self.samples < 2 {
            return Err(CliError::Config("samples: at least 2 are required".into()));
        }
        Ok(())
    }

    /// Closure requirements of the bernoulli and relation stages on the Θ window,
    /// as human-readable failures.
    pub fn closure_gaps(&self, spec: &GroupSpec, w: &Window) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let gap = |what: String, req: ClosureRequirement| -> Result<Option<String>> {
            let rep = validate_closure(spec, w, &req)?;
            Ok((!rep.pass).then(|| {
                let m: Vec<String> = rep.missing.iter().map(|e| e.to_string()).collect();
                format!("{what}: missing {}", m.join(", "))
            }))
        };
        if self.pipelines.contains(&Pipeline::Bernoulli) {
            for (i, f) in self.cylinders(spec)?.iter().enumerate() {
                out.extend(gap(
                    format!("cylinder {i}: E·E⁻¹ ⊆ W"),
                    ClosureRequirement::DifferenceSet(f.label_elements()),
                )?);
                let missing: Vec<&Element> = f.bits.iter().filter(|b| !w.contains(b)).collect();
                if !missing.is_empty() {
                    let m: Vec<String> = missing.iter().map(|e| e.to_string()).collect();
                    out.push(format!("cylinder {i}: F ⊆ W: missing {}", m.join(", ")));
                }
            }
        }
        if self.pipelines.contains(&Pipeline::Relcheck) {
            let lw = spec.ball(self.label_radius)?;
            out.extend(gap(
                "relation atoms: E·E⁻¹ ⊆ W".into(),
                ClosureRequirement::DifferenceSet(lw.elements().to_vec()),
            )?);
            for g in spec.ball(1)?.elements() {
                let req = ClosureRequirement::Conjugate {
                    g: g.clone(),
                    subset: lw.elements().to_vec(),
                };
                out.extend(gap(format!("relation bits conjugated by {g}"), req)?);
            }
        }
        Ok(out)
    }
}

impl ConstructionConfig {
    /// Degree the construction will have at size `n`, without building it.
    pub fn degree(&self, spec: &GroupSpec, n: usize) -> Result<usize> {
        let d = self.action(spec, n)?.degree(spec)?;
        Ok(d + self
            .pad_fraction
            .map_or(0, |f| (f * d as f64).round() as usize))
    }

    pub fn action(&self, spec: &GroupSpec, n: usize) -> Result<ActionSpec> {
        let rank = match spec.kind() {
            GroupKind::Lattice { rank } => *rank,
            _ => 0,
        };
        let need_n = || {
            if n == 0 {
                Err(CliError::Config(format!(
                    "construction {}: a size schedule is required",
                    self.name
                )))
            } else {
                Ok(n as u64)
            }
        };
        Ok(match &self.base {
            Base::Torus => ActionSpec::Torus {
                moduli: vec![need_n()?; rank],
            },
            Base::ScaledTorus { factors } => {
                let n = need_n()?;
                ActionSpec::Torus {
                    moduli: factors.iter().map(|f| f * n).collect(),
                }
            }
            Base::Embedding => ActionSpec::Embedding { n: need_n()? },
            Base::Regular => ActionSpec::Regular,
            Base::HeisenbergQuotient => ActionSpec::HeisenbergQuotient { n: need_n()? },
            Base::HeisenbergAffine => ActionSpec::HeisenbergAffine { n: need_n()? },
            Base::Trivial => ActionSpec::Trivial {
                d: need_n()? as usize,
            },
            Base::RandomGenerators { seed } => ActionSpec::RandomGenerators {
                d: need_n()? as usize,
                seed: *seed,
            },
            Base::Explicit { action } => action.clone(),
        })
    }

    /// Returns the construction and its unperturbed base.
    pub fn build(
        &self,
        spec: &GroupSpec,
        n: usize,
        window: &Window,
    ) -> Result<(ApproxHom, ApproxHom)> {
        let action = self.action(spec, n)?;
        let d = action.degree(spec)?;
        let mut base = ApproxHom::from_action(spec, &action, d, window)?;
        if let Some(f) = self.pad_fraction {
            if f.is_nan() || f < 0.0 {
                return Err(CliError::Config(format!(
                    "construction {}: pad_fraction must be nonnegative",
                    self.name
                )));
            }
            base = base.pad_trivial((f * d as f64).round() as usize)?;
        }
        if let Some(seed) = self.relabel_seed {
            let pi = random_permutation(base.degree(), seed);
            base = base.relabel(&pi)?;
        }
        let sigma = match &self.perturb {
            Some(p) => base.perturb(p.rate, p.seed)?,
            None => base.clone(),
        };
        Ok((sigma, base))
    }
}

/// Uniform permutation from a seeded stream (Fisher–Yates).
pub fn random_permutation(d: usize, seed: u64) -> Permutation {
    use rand::seq::SliceRandom;
    let mut v: Vec<u32> = (0..d as u32).collect();
    v.shuffle(&mut soficlab_core::rng::stream(seed));
    Permutation::from_images(v).expect("shuffle of the identity is a bijection")
}
