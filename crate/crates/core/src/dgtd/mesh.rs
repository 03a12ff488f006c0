use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Material tag of the background medium.
pub const VACUUM_TAG: u32 = 0;

/// Triangle `(v0, v1, v2)` has local faces `(v0,v1)`, `(v1,v2)`, `(v2,v0)`.
pub const FACE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Edge on the outer boundary; all such edges carry the absorbing condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub triangle: usize,
    pub face: usize,
    pub nodes: [usize; 2],
}

/// Neighbour across a local face, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceLink {
    Interior { triangle: usize, face: usize },
    Boundary,
}

/// Conforming triangulation with per-triangle material tags.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    tags: Vec<u32>,
    links: Vec<[FaceLink; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

impl Mesh {
    /// Builds the mesh and its face connectivity. Clockwise triangles are
    /// reoriented counter-clockwise.
    pub fn new(nodes: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>, tags: Vec<u32>) -> Result<Self> {
        if tags.len() != triangles.len() {
            return Err(Error::invalid(format!(
                "{} triangles but {} material tags",
                triangles.len(),
                tags.len()
            )));
        }
        if nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::invalid("non-finite node coordinate"));
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::invalid(format!("triangle {t} references a missing node")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::MeshQuality(format!("triangle {t} repeats a vertex")));
            }
            if signed_area(&nodes, tri) < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut edge_map: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for (f, fv) in FACE_VERTICES.iter().enumerate() {
                let (a, b) = (tri[fv[0]], tri[fv[1]]);
                edge_map.entry((a.min(b), a.max(b))).or_default().push((t, f));
            }
        }
        let mut links = vec![[FaceLink::Boundary; 3]; triangles.len()];
        let mut boundary_edges = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            for (f, fv) in FACE_VERTICES.iter().enumerate() {
                let (a, b) = (tri[fv[0]], tri[fv[1]]);
                let owners = &edge_map[&(a.min(b), a.max(b))];
                match owners.len() {
                    1 => boundary_edges.push(BoundaryEdge {
                        triangle: t,
                        face: f,
                        nodes: [a, b],
                    }),
                    2 => {
                        let (nt, nf) = if owners[0] == (t, f) { owners[1] } else { owners[0] };
                        links[t][f] = FaceLink::Interior { triangle: nt, face: nf };
                    }
                    n => {
                        return Err(Error::MeshQuality(format!(
                            "edge ({a}, {b}) is shared by {n} triangles"
                        )))
                    }
                }
            }
        }
        Ok(Self {
            nodes,
            triangles,
            tags,
            links,
            boundary_edges,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn tags(&self) -> &[u32] {
        &self.tags
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn link(&self, triangle: usize, face: usize) -> FaceLink {
        self.links[triangle][face]
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.nodes, &self.triangles[t])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let v = self.vertices(t);
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    }

    /// Radius of the inscribed circle, `2·area / perimeter`.
    pub fn inradius(&self, t: usize) -> f64 {
        let v = self.vertices(t);
        let len = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let perimeter = len(v[0], v[1]) + len(v[1], v[2]) + len(v[2], v[0]);
        2.0 * self.area(t) / perimeter
    }

    /// Parses the plain-text mesh format: `nodes N`, N lines `x y`,
    /// `triangles M`, M lines `i j k tag` with zero-based indices.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let count = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<usize> {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::invalid(format!("mesh: missing `{key}` header")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::invalid(format!("mesh line {ln}: expected `{key} <count>`")));
            }
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::invalid(format!("mesh line {ln}: bad count")))
        };
        let n = count(&mut lines, "nodes")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::invalid("mesh: truncated node list"))?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("mesh line {ln}: {e}")))?;
            if v.len() != 2 {
                return Err(Error::invalid(format!("mesh line {ln}: expected `x y`")));
            }
            nodes.push([v[0], v[1]]);
        }
        let m = count(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(m);
        let mut tags = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::invalid("mesh: truncated triangle list"))?;
            let v: Vec<u64> = line
                .split_whitespace()
                .map(|s| s.parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("mesh line {ln}: {e}")))?;
            if v.len() != 4 {
                return Err(Error::invalid(format!("mesh line {ln}: expected `i j k tag`")));
            }
            triangles.push([v[0] as usize, v[1] as usize, v[2] as usize]);
            tags.push(v[3] as u32);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::invalid(format!("mesh line {ln}: trailing content")));
        }
        Self::new(nodes, triangles, tags)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for (t, tag) in self.triangles.iter().zip(&self.tags) {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], tag);
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn signed_area(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Region occupied by a material inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disk { center: [f64; 2], radius: f64 },
    Square { center: [f64; 2], half_width: f64 },
}

impl Shape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Shape::Disk { center, radius } => {
                (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) < radius * radius
            }
            Shape::Square { center, half_width } => {
                (p[0] - center[0]).abs() < half_width && (p[1] - center[1]).abs() < half_width
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Square { half_width, .. } => 4.0 * half_width * half_width,
        }
    }

    /// Axis-aligned extent `max(|x|, |y|)` reached by the shape.
    fn reach(&self) -> f64 {
        match *self {
            Shape::Disk { center, radius } => center[0].abs().max(center[1].abs()) + radius,
            Shape::Square { center, half_width } => {
                center[0].abs().max(center[1].abs()) + half_width
            }
        }
    }

    fn size(&self) -> f64 {
        match *self {
            Shape::Disk { radius, .. } => radius,
            Shape::Square { half_width, .. } => half_width,
        }
    }
}

/// Unknown keys are rejected by the flattened [`Shape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    #[serde(flatten)]
    pub shape: Shape,
    pub tag: u32,
}

/// Structured crossed-triangle mesh of `[-half_width, half_width]²` with
/// `resolution` cells per side. Cell diagonals alternate direction in a
/// checkerboard. Each triangle takes the tag of the smallest inclusion
/// containing its centroid, or [`VACUUM_TAG`].
pub fn generate_mesh(half_width: f64, resolution: usize, inclusions: &[Inclusion]) -> Result<Mesh> {
    if resolution < 2 {
        return Err(Error::invalid("mesh resolution must be at least 2"));
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::invalid("domain half-width must be positive"));
    }
    for (i, inc) in inclusions.iter().enumerate() {
        if !(inc.shape.size() > 0.0) {
            return Err(Error::invalid(format!("inclusion {i} has non-positive size")));
        }
        if inc.shape.reach() >= half_width {
            return Err(Error::invalid(format!("inclusion {i} does not fit inside the domain")));
        }
        if inc.tag == VACUUM_TAG {
            return Err(Error::invalid(format!("inclusion {i} uses the vacuum tag")));
        }
        for (j, other) in inclusions.iter().enumerate().take(i) {
            if other.shape == inc.shape {
                return Err(Error::invalid(format!(
                    "inclusions {j} and {i} occupy the identical region"
                )));
            }
        }
    }

    let n = resolution;
    let h = 2.0 * half_width / n as f64;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([-half_width + i as f64 * h, -half_width + j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([p00, p10, p11]);
                triangles.push([p00, p11, p01]);
            } else {
                triangles.push([p00, p10, p01]);
                triangles.push([p10, p11, p01]);
            }
        }
    }
    let tags = triangles
        .iter()
        .map(|tri| {
            let c = [
                (nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0,
                (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0,
            ];
            inclusions
                .iter()
                .filter(|inc| inc.shape.contains(c))
                .min_by(|a, b| a.shape.area().total_cmp(&b.shape.area()))
                .map_or(VACUUM_TAG, |inc| inc.tag)
        })
        .collect();
    Mesh::new(nodes, triangles, tags)
}

/// Concentric disks centered at the origin, tagged `1..=radii.len()` from the
/// innermost outwards. `radii` must be increasing.
pub fn concentric_disks(radii: &[f64]) -> Vec<Inclusion> {
    radii
        .iter()
        .enumerate()
        .map(|(i, &r)| Inclusion {
            shape: Shape::Disk {
                center: [0.0, 0.0],
                radius: r,
            },
            tag: i as u32 + 1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_two_counts() {
        let m = generate_mesh(1.0, 2, &[]).unwrap();
        assert_eq!(m.num_triangles(), 8);
        assert_eq!(m.num_nodes(), 9);
        assert!(m.tags().iter().all(|&t| t == VACUUM_TAG));
        assert_eq!(m.boundary_edges().len(), 8);
        for t in 0..m.num_triangles() {
            assert!(m.area(t) > 0.0);
        }
    }

    #[test]
    fn disk_tags_lie_inside_disk() {
        let inc = concentric_disks(&[0.6]);
        let m = generate_mesh(2.6, 40, &inc).unwrap();
        let mut inside = 0;
        for t in 0..m.num_triangles() {
            if m.tags()[t] == 1 {
                let c = m.centroid(t);
                assert!(c[0] * c[0] + c[1] * c[1] < 0.36);
                inside += 1;
            }
        }
        assert!(inside > 0);
    }

    #[test]
    fn concentric_layers_follow_radius_order() {
        let radii = [0.15, 0.3, 0.45, 0.6];
        let m = generate_mesh(3.2, 64, &concentric_disks(&radii)).unwrap();
        for t in 0..m.num_triangles() {
            let c = m.centroid(t);
            let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
            let expected = radii.iter().position(|&ri| r < ri).map_or(VACUUM_TAG, |i| i as u32 + 1);
            assert_eq!(m.tags()[t], expected, "centroid radius {r}");
        }
        for tag in 1..=4 {
            assert!(m.tags().contains(&tag), "layer {tag} empty");
        }
    }

    #[test]
    fn identical_inclusions_rejected() {
        let mut inc = concentric_disks(&[0.5]);
        inc.push(Inclusion { tag: 2, ..inc[0] });
        assert!(matches!(generate_mesh(2.0, 8, &inc), Err(Error::InvalidArgument(_))));
        assert!(generate_mesh(2.0, 1, &[]).is_err());
        assert!(generate_mesh(1.0, 4, &concentric_disks(&[1.5])).is_err());
    }

    #[test]
    fn text_round_trip_and_reorientation() {
        let m = generate_mesh(1.0, 3, &concentric_disks(&[0.5])).unwrap();
        let back = Mesh::parse(&m.to_text()).unwrap();
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.tags(), m.tags());
        assert_eq!(back.nodes(), m.nodes());

        let cw = "nodes 3\n0 0\n0 1\n1 0\ntriangles 1\n0 1 2 0\n";
        let m = Mesh::parse(cw).unwrap();
        assert!(m.area(0) > 0.0);
        assert!(Mesh::parse("nodes 1\n0 0\ntriangles 1\n0 1 2 0\n").is_err());
    }

    #[test]
    fn interior_links_are_mutual() {
        let m = generate_mesh(1.0, 4, &[]).unwrap();
        for t in 0..m.num_triangles() {
            for f in 0..3 {
                if let FaceLink::Interior { triangle, face } = m.link(t, f) {
                    assert_eq!(m.link(triangle, face), FaceLink::Interior { triangle: t, face: f });
                }
            }
        }
    }
}
