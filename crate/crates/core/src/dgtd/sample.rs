use super::operators::DgOperators;
use crate::error::{Error, Result};

/// Precomputed point evaluation of nodal fields at fixed physical points.
#[derive(Debug, Clone)]
pub struct FieldProbe {
    points: Vec<[f64; 2]>,
    /// `(first DOF of the owning element, basis values)` per point.
    weights: Vec<(usize, Vec<f64>)>,
}

impl FieldProbe {
    pub fn new(ops: &DgOperators, points: &[[f64; 2]]) -> Result<Self> {
        let np = ops.nodes_per_element();
        let tol = 1e-10;
        let mut weights = Vec::with_capacity(points.len());
        for (idx, &p) in points.iter().enumerate() {
            let hit = (0..ops.num_elements()).find_map(|k| {
                let rs = ops.to_reference(k, p);
                (rs[0] >= -tol && rs[1] >= -tol && rs[0] + rs[1] <= 1.0 + tol).then_some((k, rs))
            });
            let (k, rs) = hit.ok_or_else(|| {
                Error::invalid(format!("probe point {idx} ({}, {}) lies outside the mesh", p[0], p[1]))
            })?;
            weights.push((k * np, ops.reference().basis_at(rs)));
        }
        Ok(Self {
            points: points.to_vec(),
            weights,
        })
    }

    /// `n` equispaced points on the segment from `a` to `b`, ends included.
    pub fn line(ops: &DgOperators, a: [f64; 2], b: [f64; 2], n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a probe line needs at least two points"));
        }
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
            })
            .collect();
        Self::new(ops, &pts)
    }

    /// `n × n` grid covering `[lo, hi]²`, x varying fastest.
    pub fn grid(ops: &DgOperators, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a probe grid needs at least two points per side"));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let pts: Vec<[f64; 2]> = (0..n * n)
            .map(|i| [lo + (i % n) as f64 * h, lo + (i / n) as f64 * h])
            .collect();
        Self::new(ops, &pts)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn sample(&self, field: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|(off, w)| w.iter().enumerate().map(|(i, wi)| wi * field[off + i]).sum())
            .collect()
    }
}
