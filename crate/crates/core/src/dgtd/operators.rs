use super::incident::IncidentWave;
use super::material::{Material, MaterialMap};
use super::mesh::{FaceLink, Mesh};
use super::reference::ReferenceElement;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Safety constant of the CFL estimate `Δt ≤ C·min(inradius·√(εν))/order²`.
pub const CFL_CONSTANT: f64 = 0.5;

const MIN_AREA: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    rx: f64,
    ry: f64,
    sx: f64,
    sy: f64,
    /// Jacobian determinant of the reference map, twice the area.
    jac: f64,
}

#[derive(Debug, Clone)]
struct Face {
    nx: f64,
    ny: f64,
    /// `length / jac`, scaling the unit-length reference lift.
    lift_scale: f64,
    /// Global DOF indices of the matching neighbor nodes, one per local face
    /// node; empty on the boundary.
    neighbor_dofs: Vec<usize>,
    /// Position in the boundary face list, if this face lies on the boundary.
    boundary: Option<usize>,
}

/// Absorbing-boundary face: owning element, local face and its nodes.
#[derive(Debug, Clone)]
pub(crate) struct BoundaryFace {
    pub element: usize,
    pub face: usize,
    pub nx: f64,
    pub ny: f64,
    pub impedance: f64,
    pub points: Vec<[f64; 2]>,
}

/// Dissipative part of the Silver-Müller terms on one element, written as
/// `q' = −D q`.
#[derive(Debug, Clone)]
pub(crate) struct BoundaryDamping {
    pub element: usize,
    /// `Np × Np`, acts on Ez.
    pub d_e: Matrix,
    /// `2Np × 2Np`, acts on `[Hx; Hy]`.
    pub d_h: Matrix,
}

/// Semi-discrete nodal DG operators of the TM system with centered fluxes.
#[derive(Debug, Clone)]
pub struct DgOperators {
    reference: ReferenceElement,
    geometry: Vec<Geometry>,
    materials: Vec<Material>,
    faces: Vec<[Face; 3]>,
    points: Vec<[f64; 2]>,
    pub(crate) boundary_faces: Vec<BoundaryFace>,
    pub(crate) damping: Vec<BoundaryDamping>,
    dt_max: f64,
}

/// Number of nodal DOFs per scalar field.
pub fn dofs_per_component(num_triangles: usize, order: usize) -> usize {
    num_triangles * (order + 1) * (order + 2) / 2
}

pub fn assemble_operators(mesh: &Mesh, materials: &MaterialMap, order: usize) -> Result<DgOperators> {
    let reference = ReferenceElement::new(order)?;
    let mats = materials.per_triangle(mesh)?;
    let np = reference.num_nodes();
    let k_count = mesh.num_triangles();

    let mut geometry = Vec::with_capacity(k_count);
    let mut points = Vec::with_capacity(k_count * np);
    for k in 0..k_count {
        let area = mesh.area(k);
        if area < MIN_AREA {
            return Err(Error::MeshQuality(format!("triangle {k} has area {area:e}")));
        }
        let [v0, v1, v2] = mesh.vertices(k);
        let (xr, xs) = (v1[0] - v0[0], v2[0] - v0[0]);
        let (yr, ys) = (v1[1] - v0[1], v2[1] - v0[1]);
        let jac = xr * ys - xs * yr;
        geometry.push(Geometry {
            rx: ys / jac,
            ry: -xs / jac,
            sx: -yr / jac,
            sy: xr / jac,
            jac,
        });
        for &[r, s] in &reference.nodes {
            points.push([v0[0] + r * xr + s * xs, v0[1] + r * yr + s * ys]);
        }
    }

    let scale = mesh
        .nodes()
        .iter()
        .fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()))
        .max(1.0);
    let mut faces = Vec::with_capacity(k_count);
    let mut boundary_faces = Vec::new();
    for k in 0..k_count {
        let verts = mesh.vertices(k);
        let face_k: [Face; 3] = std::array::from_fn(|f| {
            let a = verts[f];
            let b = verts[(f + 1) % 3];
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len = (ex * ex + ey * ey).sqrt();
            Face {
                nx: ey / len,
                ny: -ex / len,
                lift_scale: len / geometry[k].jac,
                neighbor_dofs: Vec::new(),
                boundary: None,
            }
        });
        faces.push(face_k);
        for f in 0..3 {
            match mesh.link(k, f) {
                FaceLink::Interior { triangle, face } => {
                    let mut dofs = Vec::with_capacity(reference.num_face_nodes());
                    for &a in &reference.face_nodes[f] {
                        let pa = points[k * np + a];
                        let hit = reference.face_nodes[face].iter().find(|&&b| {
                            let pb = points[triangle * np + b];
                            (pa[0] - pb[0]).abs() + (pa[1] - pb[1]).abs() < 1e-9 * scale
                        });
                        match hit {
                            Some(&b) => dofs.push(triangle * np + b),
                            None => {
                                return Err(Error::MeshQuality(format!(
                                    "face {f} of triangle {k} does not match its neighbor"
                                )))
                            }
                        }
                    }
                    faces[k][f].neighbor_dofs = dofs;
                }
                FaceLink::Boundary => {
                    faces[k][f].boundary = Some(boundary_faces.len());
                    boundary_faces.push(BoundaryFace {
                        element: k,
                        face: f,
                        nx: faces[k][f].nx,
                        ny: faces[k][f].ny,
                        impedance: mats[k].impedance(),
                        points: reference.face_nodes[f].iter().map(|&a| points[k * np + a]).collect(),
                    });
                }
            }
        }
    }

    let mut damping: Vec<BoundaryDamping> = Vec::new();
    for bf in &boundary_faces {
        let k = bf.element;
        if damping.last().map(|d| d.element) != Some(k) {
            damping.push(BoundaryDamping {
                element: k,
                d_e: Matrix::zeros(np, np),
                d_h: Matrix::zeros(2 * np, 2 * np),
            });
        }
        let d = damping.last_mut().expect("pushed above");
        let m = mats[k];
        let z = m.impedance();
        let face = &faces[k][bf.face];
        let lift = &reference.lift[bf.face];
        let ce = face.lift_scale / (2.0 * z * m.eps);
        let ch = face.lift_scale * z / (2.0 * m.nu);
        let (nx, ny) = (face.nx, face.ny);
        let blocks = [[ny * ny, -nx * ny], [-nx * ny, nx * nx]];
        for (col, &j) in reference.face_nodes[bf.face].iter().enumerate() {
            for i in 0..np {
                let l = lift[(i, col)];
                d.d_e[(i, j)] += ce * l;
                for (bi, row) in blocks.iter().enumerate() {
                    for (bj, &c) in row.iter().enumerate() {
                        d.d_h[(bi * np + i, bj * np + j)] += ch * c * l;
                    }
                }
            }
        }
    }

    let dt_max = (0..k_count)
        .map(|k| mesh.inradius(k) * (mats[k].eps * mats[k].nu).sqrt())
        .fold(f64::INFINITY, f64::min)
        * CFL_CONSTANT
        / (order * order) as f64;

    Ok(DgOperators {
        reference,
        geometry,
        materials: mats,
        faces,
        points,
        boundary_faces,
        damping,
        dt_max,
    })
}

impl DgOperators {
    pub fn order(&self) -> usize {
        self.reference.order
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.reference.num_nodes()
    }

    /// DOFs per scalar field.
    pub fn num_dofs(&self) -> usize {
        self.points.len()
    }

    /// Physical coordinates of every DOF.
    pub fn dof_points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Largest stable time step under the CFL estimate.
    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    pub fn material(&self, element: usize) -> Material {
        self.materials[element]
    }

    /// Jacobian determinant of element `k` (twice its area).
    pub fn jacobian(&self, k: usize) -> f64 {
        self.geometry[k].jac
    }

    /// `ε`-weighted element mass matrix `𝕄^ε` of element `k`.
    pub fn mass_eps(&self, k: usize) -> Matrix {
        let mut m = self.reference.mass.clone();
        m.scale(self.geometry[k].jac * self.materials[k].eps);
        m
    }

    /// `ν`-weighted element mass matrix `𝕄^ν` of element `k`.
    pub fn mass_nu(&self, k: usize) -> Matrix {
        let mut m = self.reference.mass.clone();
        m.scale(self.geometry[k].jac * self.materials[k].nu);
        m
    }

    /// Reference coordinates of physical point `p` in element `k`.
    pub fn to_reference(&self, k: usize, p: [f64; 2]) -> [f64; 2] {
        let g = self.geometry[k];
        let v0 = self.points[k * self.nodes_per_element()];
        let (dx, dy) = (p[0] - v0[0], p[1] - v0[1]);
        [g.rx * dx + g.ry * dy, g.sx * dx + g.sy * dy]
    }

    /// `u ↦ Σ_k J_k u_kᵀ M u_k`, the squared L2 norm of a nodal field.
    pub fn l2_norm_sq(&self, u: &[f64]) -> f64 {
        let np = self.nodes_per_element();
        let m = &self.reference.mass;
        let mut total = 0.0;
        let mut mu = vec![0.0; np];
        for (k, g) in self.geometry.iter().enumerate() {
            let uk = &u[k * np..(k + 1) * np];
            mat_vec(m, uk, &mut mu);
            total += g.jac * uk.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    }

    /// Electromagnetic energy `Σ_k (ε EᵀME + ν HᵀMH)`.
    pub fn energy(&self, hx: &[f64], hy: &[f64], ez: &[f64]) -> f64 {
        let np = self.nodes_per_element();
        let m = &self.reference.mass;
        let mut mu = vec![0.0; np];
        let mut total = 0.0;
        for (k, g) in self.geometry.iter().enumerate() {
            let mat = self.materials[k];
            let mut quad = |u: &[f64]| {
                mat_vec(m, u, &mut mu);
                u.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>()
            };
            let r = k * np..(k + 1) * np;
            total += g.jac
                * (mat.eps * quad(&ez[r.clone()]) + mat.nu * (quad(&hx[r.clone()]) + quad(&hy[r])));
        }
        total
    }

    /// Silver-Müller data `g = Ez_inc + Z·(n × H_inc)` at every boundary face
    /// node at time `t`, laid out face by face.
    pub(crate) fn boundary_data(&self, source: &IncidentWave, t: f64, out: &mut Vec<f64>) {
        out.clear();
        for bf in &self.boundary_faces {
            for p in &bf.points {
                let (hx, hy, ez) = source.fields(p[0], p[1], t);
                out.push(ez + bf.impedance * (bf.nx * hy - bf.ny * hx));
            }
        }
    }

    /// Explicit part of `∂Ez/∂t`; the dissipative boundary term lives in the
    /// damping blocks.
    pub(crate) fn rate_e(&self, hx: &[f64], hy: &[f64], g: &[f64], out: &mut [f64]) {
        let np = self.nodes_per_element();
        let nfp = self.reference.num_face_nodes();
        let re = &self.reference;
        let mut buf = Workspace::new(np, nfp);
        for (k, geo) in self.geometry.iter().enumerate() {
            let r = k * np..(k + 1) * np;
            let o = &mut out[r.clone()];
            mat_vec(&re.dr, &hx[r.clone()], &mut buf.a);
            mat_vec(&re.ds, &hx[r.clone()], &mut buf.b);
            mat_vec(&re.dr, &hy[r.clone()], &mut buf.c);
            mat_vec(&re.ds, &hy[r.clone()], &mut buf.d);
            for i in 0..np {
                let dhy_dx = geo.rx * buf.c[i] + geo.sx * buf.d[i];
                let dhx_dy = geo.ry * buf.a[i] + geo.sy * buf.b[i];
                o[i] = dhy_dx - dhx_dy;
            }
            for (f, face) in self.faces[k].iter().enumerate() {
                let fnodes = &re.face_nodes[f];
                for (a, &i) in fnodes.iter().enumerate() {
                    let ht_m = face.nx * hy[k * np + i] - face.ny * hx[k * np + i];
                    let ht_p = match face.boundary {
                        None => {
                            let j = face.neighbor_dofs[a];
                            face.nx * hy[j] - face.ny * hx[j]
                        }
                        Some(b) => {
                            let z = self.boundary_faces[b].impedance;
                            g[b * nfp + a] / z
                        }
                    };
                    buf.jump[a] = -0.5 * face.lift_scale * (ht_m - ht_p);
                }
                add_mat_vec(&re.lift[f], &buf.jump, o);
            }
            let inv_eps = 1.0 / self.materials[k].eps;
            o.iter_mut().for_each(|v| *v *= inv_eps);
        }
    }

    /// Explicit part of `(∂Hx/∂t, ∂Hy/∂t)`.
    pub(crate) fn rate_h(
        &self,
        ez: &[f64],
        g: &[f64],
        out_hx: &mut [f64],
        out_hy: &mut [f64],
    ) {
        let np = self.nodes_per_element();
        let nfp = self.reference.num_face_nodes();
        let re = &self.reference;
        let mut buf = Workspace::new(np, nfp);
        for (k, geo) in self.geometry.iter().enumerate() {
            let r = k * np..(k + 1) * np;
            mat_vec(&re.dr, &ez[r.clone()], &mut buf.a);
            mat_vec(&re.ds, &ez[r.clone()], &mut buf.b);
            let ox = &mut out_hx[r.clone()];
            let oy = &mut out_hy[r];
            for i in 0..np {
                ox[i] = -(geo.ry * buf.a[i] + geo.sy * buf.b[i]);
                oy[i] = geo.rx * buf.a[i] + geo.sx * buf.b[i];
            }
            for (f, face) in self.faces[k].iter().enumerate() {
                let fnodes = &re.face_nodes[f];
                for (a, &i) in fnodes.iter().enumerate() {
                    let ez_p = match face.boundary {
                        None => ez[face.neighbor_dofs[a]],
                        Some(b) => g[b * nfp + a],
                    };
                    buf.jump[a] = 0.5 * face.lift_scale * (ez[k * np + i] - ez_p);
                }
                buf.c.iter_mut().for_each(|v| *v = 0.0);
                add_mat_vec(&re.lift[f], &buf.jump, &mut buf.c);
                for i in 0..np {
                    ox[i] += face.ny * buf.c[i];
                    oy[i] -= face.nx * buf.c[i];
                }
            }
            let inv_nu = 1.0 / self.materials[k].nu;
            ox.iter_mut().for_each(|v| *v *= inv_nu);
            oy.iter_mut().for_each(|v| *v *= inv_nu);
        }
    }
}

struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    jump: Vec<f64>,
}

impl Workspace {
    fn new(np: usize, nfp: usize) -> Self {
        Self {
            a: vec![0.0; np],
            b: vec![0.0; np],
            c: vec![0.0; np],
            d: vec![0.0; np],
            jump: vec![0.0; nfp],
        }
    }
}

#[inline]
pub(crate) fn mat_vec(m: &Matrix, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    add_mat_vec(m, x, out);
}

#[inline]
pub(crate) fn add_mat_vec(m: &Matrix, x: &[f64], out: &mut [f64]) {
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (o, &mij) in out.iter_mut().zip(m.col(j)) {
                *o += mij * xj;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgtd::mesh::{concentric_disks, generate_mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_triangle(scale: f64) -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [scale, 0.0], [0.0, scale]],
            vec![[0, 1, 2]],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn dof_count_matches_element_count() {
        // a 26 x 97 crossed grid has 5044 triangles
        let (nx, ny) = (26, 97);
        let mut nodes = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64, j as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut tris = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let n = tris.len();
        assert_eq!(n, 5044);
        let mesh = Mesh::new(nodes, tris, vec![0; n]).unwrap();
        let ops = assemble_operators(&mesh, &MaterialMap::vacuum(), 2).unwrap();
        assert_eq!(ops.num_dofs(), 30264);
        assert_eq!(dofs_per_component(5044, 2), 30264);
    }

    #[test]
    fn order_one_mass_oracle() {
        for (scale, eps) in [(1.0, 1.0), (0.3, 2.5)] {
            let mesh = single_triangle(scale);
            let mats = MaterialMap::default();
            let mats = mats.with(0, Material { eps, nu: 1.0 }).unwrap();
            let ops = assemble_operators(&mesh, &mats, 1).unwrap();
            let area = 0.5 * scale * scale;
            let m = ops.mass_eps(0);
            for i in 0..3 {
                for j in 0..3 {
                    let expected = eps * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                    assert!((m[(i, j)] - expected).abs() < 1e-15, "{} vs {}", m[(i, j)], expected);
                }
            }
        }
    }

    #[test]
    fn vacuum_masses_coincide() {
        let mesh = generate_mesh(1.0, 3, &[]).unwrap();
        let ops = assemble_operators(&mesh, &MaterialMap::vacuum(), 2).unwrap();
        for k in 0..ops.num_elements() {
            assert_eq!(ops.mass_eps(k), ops.mass_nu(k));
        }
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 1e-16]],
            vec![[0, 1, 2]],
            vec![0],
        )
        .unwrap();
        assert!(matches!(
            assemble_operators(&mesh, &MaterialMap::vacuum(), 1),
            Err(Error::MeshQuality(_))
        ));
    }

    #[test]
    fn undefined_tag_rejected() {
        let mesh = generate_mesh(2.0, 8, &concentric_disks(&[0.5])).unwrap();
        assert!(assemble_operators(&mesh, &MaterialMap::vacuum(), 1).is_err());
        assert!(assemble_operators(&mesh, &MaterialMap::vacuum(), 3).is_err());
    }

    #[test]
    fn constant_fields_have_no_interior_flux() {
        let mesh = generate_mesh(1.0, 4, &[]).unwrap();
        let ops = assemble_operators(&mesh, &MaterialMap::vacuum(), 2).unwrap();
        let n = ops.num_dofs();
        let (hx, hy, ez) = (vec![0.7; n], vec![-1.3; n], vec![2.1; n]);
        // boundary ghosts equal to the interior trace
        let nfp = 3;
        let mut g_e = Vec::new();
        let mut g_h = Vec::new();
        for bf in &ops.boundary_faces {
            for _ in 0..nfp {
                let ht = bf.nx * hy[0] - bf.ny * hx[0];
                g_e.push(ht * bf.impedance);
                g_h.push(ez[0]);
            }
        }
        let mut re = vec![0.0; n];
        ops.rate_e(&hx, &hy, &g_e, &mut re);
        let (mut rx, mut ry) = (vec![0.0; n], vec![0.0; n]);
        ops.rate_h(&ez, &g_h, &mut rx, &mut ry);
        let max = re.iter().chain(&rx).chain(&ry).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-11, "{max}");
    }

    #[test]
    fn interior_fluxes_cancel_pairwise() {
        // discontinuous random fields vanishing on boundary elements: the
        // total ∫ε∂Ez/∂t and ∫ν∂H/∂t must vanish, which requires the
        // numerical fluxes of paired faces to cancel
        let mesh = generate_mesh(1.0, 6, &[]).unwrap();
        let ops = assemble_operators(&mesh, &MaterialMap::vacuum(), 2).unwrap();
        let n = ops.num_dofs();
        let np = ops.nodes_per_element();
        let on_boundary: Vec<bool> = (0..ops.num_elements())
            .map(|k| ops.boundary_faces.iter().any(|b| b.element == k))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut field = || -> Vec<f64> {
            (0..n)
                .map(|i| if on_boundary[i / np] { 0.0 } else { rng.gen_range(-1.0..1.0) })
                .collect()
        };
        let (hx, hy, ez) = (field(), field(), field());
        let g = vec![0.0; ops.boundary_faces.len() * 3];
        let mut re = vec![0.0; n];
        ops.rate_e(&hx, &hy, &g, &mut re);
        let (mut rx, mut ry) = (vec![0.0; n], vec![0.0; n]);
        ops.rate_h(&ez, &g, &mut rx, &mut ry);
        let integral = |u: &[f64]| -> f64 {
            (0..ops.num_elements())
                .map(|k| {
                    let mu = ops.mass_eps(k).matvec(&u[k * np..(k + 1) * np]).unwrap();
                    mu.iter().sum::<f64>()
                })
                .sum()
        };
        for r in [&re, &rx, &ry] {
            assert!(integral(r).abs() < 1e-12, "{}", integral(r));
        }
    }

    #[test]
    fn dt_max_scales_with_order_and_material() {
        let mesh = generate_mesh(1.0, 4, &[]).unwrap();
        let o1 = assemble_operators(&mesh, &MaterialMap::vacuum(), 1).unwrap();
        let o2 = assemble_operators(&mesh, &MaterialMap::vacuum(), 2).unwrap();
        assert!((o1.dt_max() / o2.dt_max() - 4.0).abs() < 1e-12);
        let inr = mesh.inradius(0);
        assert!((o1.dt_max() - 0.5 * inr).abs() < 1e-14);
    }

    #[test]
    fn reference_map_round_trip() {
        let mesh = generate_mesh(1.0, 3, &[]).unwrap();
        let ops = assemble_operators(&mesh, &MaterialMap::vacuum(), 2).unwrap();
        let np = ops.nodes_per_element();
        for k in 0..ops.num_elements() {
            for i in 0..np {
                let rs = ops.to_reference(k, ops.dof_points()[k * np + i]);
                let expected = ops.reference().nodes[i];
                assert!((rs[0] - expected[0]).abs() < 1e-12 && (rs[1] - expected[1]).abs() < 1e-12);
            }
        }
    }
}
