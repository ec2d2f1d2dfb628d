//! Declarative benchmark descriptions, read from TOML.
//!
//! A scenario is either a material-point run (`[point]`) or a finite-element
//! run (`[mesh]` plus `[load]`). Unknown keys are rejected so that typos in a
//! parameter study fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convexify::GridSpec;
use crate::error::{Error, Result};
use crate::fem::{DirichletProgram, FeProblem, MeshSpec, SolverSettings, PERTURBED_GROUP};
use crate::hyperelastic::MaterialParams;
use crate::material_point::{MaterialModel, Variant};
use crate::microsphere::SphereScheme;

/// Piecewise-linear stretch history of a single point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointProgram {
    #[serde(default = "unit")]
    pub start: f64,
    pub legs: Vec<Leg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    pub to: f64,
    pub steps: usize,
}

fn unit() -> f64 {
    1.0
}

impl PointProgram {
    /// Stretch after every step; the start value itself is not included.
    pub fn stretches(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut from = self.start;
        for leg in &self.legs {
            for i in 1..=leg.steps {
                out.push(from + (leg.to - from) * i as f64 / leg.steps as f64);
            }
            from = leg.to;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub variant: Variant,
    pub material: MaterialParams,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    /// Reduction of `dinf` in the perturbed element group.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub perturbation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<PointProgram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<DirichletProgram>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Scenario {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| Error::Input { path: origin.to_path_buf(), message: e.to_string() })?;
        s.validate().map_err(|e| Error::Input { path: origin.to_path_buf(), message: e.to_string() })?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(format!("cannot serialize scenario: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.grid.validate()?;
        match (&self.point, &self.mesh, &self.load) {
            (Some(p), None, None) => {
                if p.legs.is_empty() || p.legs.iter().any(|l| l.steps == 0 || !(l.to > 0.0)) {
                    return Err(Error::Spec("point program needs legs with positive stretch and steps".into()));
                }
            }
            (None, Some(_), Some(load)) => {
                if load.n_steps == 0 {
                    return Err(Error::Spec("load.n_steps must be positive".into()));
                }
            }
            _ => return Err(Error::Spec("a scenario needs either [point] or both [mesh] and [load]".into())),
        }
        if !(self.perturbation >= 0.0 && self.perturbation < self.material.dinf) {
            return Err(Error::Spec(format!("perturbation {} must lie in [0, dinf)", self.perturbation)));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MaterialModel> {
        MaterialModel::new(self.material, self.variant, self.grid)
    }

    /// Builds the FE problem: group 0 is the base material, the perturbed
    /// group has `dinf` lowered by `perturbation`.
    pub fn problem(&self) -> Result<FeProblem> {
        let mesh = self.mesh.as_ref().ok_or_else(|| Error::Spec("scenario has no [mesh]".into()))?.generate()?;
        let base = self.model()?;
        let mut weak = self.material;
        weak.dinf -= self.perturbation;
        let mut materials = vec![base; PERTURBED_GROUP + 1];
        materials[PERTURBED_GROUP] = MaterialModel::new(weak, self.variant, self.grid)?;
        let scheme = if mesh.dim > 1 {
            let name = self.scheme.as_deref().ok_or_else(|| Error::Spec("2D/3D scenarios need `scheme`".into()))?;
            Some(SphereScheme::by_name(name)?)
        } else {
            None
        };
        FeProblem::new(mesh, materials, scheme)
    }

    /// Returns a copy with the dotted `path` set to `value` (TOML syntax).
    pub fn with_param(&self, path: &str, value: &str) -> Result<Self> {
        let mut doc: toml::Value = toml::Value::try_from(self).map_err(|e| Error::Spec(e.to_string()))?;
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut node = &mut doc;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Spec(format!("`{}` is not a table", keys[..i].join("."))))?;
            if i + 1 == keys.len() {
                if !table.contains_key(*key) {
                    return Err(Error::Spec(format!("unknown parameter path `{path}`")));
                }
                table.insert(key.to_string(), parsed.clone());
                break;
            }
            node = table.get_mut(*key).ok_or_else(|| Error::Spec(format!("unknown parameter path `{path}`")))?;
        }
        let s: Scenario = doc.try_into().map_err(|e: toml::de::Error| Error::Spec(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}
