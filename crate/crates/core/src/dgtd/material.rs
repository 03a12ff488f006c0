use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, VACUUM_TAG};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// Relative permittivity.
    pub eps: f64,
    /// Relative permeability.
    pub nu: f64,
}

impl Material {
    pub const VACUUM: Material = Material { eps: 1.0, nu: 1.0 };

    /// Wave impedance `√(ν/ε)`.
    pub fn impedance(&self) -> f64 {
        (self.nu / self.eps).sqrt()
    }
}

/// Material coefficients per mesh tag.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMap {
    entries: BTreeMap<u32, Material>,
}

impl Default for MaterialMap {
    fn default() -> Self {
        Self::vacuum()
    }
}

impl MaterialMap {
    /// Only the background tag, as vacuum.
    pub fn vacuum() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(VACUUM_TAG, Material::VACUUM);
        Self { entries }
    }

    pub fn set(&mut self, tag: u32, material: Material) -> Result<()> {
        if !(material.eps >= 1.0) || !material.eps.is_finite() {
            return Err(Error::invalid(format!(
                "tag {tag}: relative permittivity {} must be >= 1",
                material.eps
            )));
        }
        if !(material.nu > 0.0) || !material.nu.is_finite() {
            return Err(Error::invalid(format!(
                "tag {tag}: relative permeability {} must be > 0",
                material.nu
            )));
        }
        self.entries.insert(tag, material);
        Ok(())
    }

    pub fn with(mut self, tag: u32, material: Material) -> Result<Self> {
        self.set(tag, material)?;
        Ok(self)
    }

    pub fn get(&self, tag: u32) -> Option<Material> {
        self.entries.get(&tag).copied()
    }

    /// Material of every triangle, failing on undefined tags.
    pub fn per_triangle(&self, mesh: &Mesh) -> Result<Vec<Material>> {
        mesh.tags()
            .iter()
            .map(|&t| {
                self.get(t)
                    .ok_or_else(|| Error::invalid(format!("mesh uses undefined material tag {t}")))
            })
            .collect()
    }
}
