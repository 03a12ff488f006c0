use crate::error::{Error, Result};
use crate::linalg::{invert, Matrix};

/// Nodal Lagrange element on the reference triangle `(0,0), (1,0), (0,1)`
/// with equispaced nodes.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub order: usize,
    /// Reference coordinates `(r, s)` of the nodes; node `(i/p, j/p)` is
    /// numbered row by row in `j`, then `i`.
    pub nodes: Vec<[f64; 2]>,
    /// `∫ l_i l_j` over the reference triangle.
    pub mass: Matrix,
    /// Nodal differentiation `(D_r)_{ij} = ∂l_j/∂r (node_i)`.
    pub dr: Matrix,
    pub ds: Matrix,
    /// Node indices on each face, ordered from the face's start vertex to
    /// its end vertex.
    pub face_nodes: [Vec<usize>; 3],
    /// `M⁻¹ E_f` for a face of unit length: `Np × Nfp`.
    pub lift: [Matrix; 3],
    /// Monomial coefficients of the nodal basis: `l_j = Σ_a coeffs(a, j) m_a`.
    coeffs: Matrix,
    exponents: Vec<(i32, i32)>,
}

impl ReferenceElement {
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::invalid(format!("element order {order} unsupported (1 or 2)")));
        }
        let p = order;
        let mut nodes = Vec::new();
        for j in 0..=p {
            for i in 0..=p - j {
                nodes.push([i as f64 / p as f64, j as f64 / p as f64]);
            }
        }
        let np = nodes.len();
        let mut exponents = Vec::new();
        for total in 0..=p as i32 {
            for b in 0..=total {
                exponents.push((total - b, b));
            }
        }
        let vander = Matrix::from_fn(np, np, |i, a| monomial(exponents[a], nodes[i]));
        let coeffs = invert(&vander)?;

        let mut mass = Matrix::zeros(np, np);
        for i in 0..np {
            for j in 0..np {
                let mut s = 0.0;
                for (a, ea) in exponents.iter().enumerate() {
                    for (b, eb) in exponents.iter().enumerate() {
                        s += coeffs[(a, i)] * coeffs[(b, j)] * monomial_integral(ea.0 + eb.0, ea.1 + eb.1);
                    }
                }
                mass[(i, j)] = s;
            }
        }

        let dr = Matrix::from_fn(np, np, |i, j| {
            exponents
                .iter()
                .enumerate()
                .map(|(a, &(ea, eb))| coeffs[(a, j)] * monomial_dr((ea, eb), nodes[i]))
                .sum()
        });
        let ds = Matrix::from_fn(np, np, |i, j| {
            exponents
                .iter()
                .enumerate()
                .map(|(a, &(ea, eb))| coeffs[(a, j)] * monomial_dr((eb, ea), [nodes[i][1], nodes[i][0]]))
                .sum()
        });

        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let face_nodes: [Vec<usize>; 3] = std::array::from_fn(|f| {
            let a = corners[f];
            let b = corners[(f + 1) % 3];
            let mut on: Vec<(f64, usize)> = nodes
                .iter()
                .enumerate()
                .filter_map(|(i, x)| {
                    let cross = (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]);
                    (cross.abs() < 1e-12).then(|| {
                        let tau = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1]))
                            / ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2));
                        (tau, i)
                    })
                })
                .collect();
            on.sort_by(|x, y| x.0.total_cmp(&y.0));
            on.into_iter().map(|(_, i)| i).collect()
        });

        let nfp = p + 1;
        let edge_mass = edge_mass_matrix(p);
        let minv = invert(&mass)?;
        let lift: [Matrix; 3] = std::array::from_fn(|f| {
            let mut e = Matrix::zeros(np, nfp);
            for (a, &ia) in face_nodes[f].iter().enumerate() {
                for b in 0..nfp {
                    e[(ia, b)] = edge_mass[(a, b)];
                }
            }
            minv.matmul(&e).expect("lift shapes")
        });

        Ok(Self {
            order,
            nodes,
            mass,
            dr,
            ds,
            face_nodes,
            lift,
            coeffs,
            exponents,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_face_nodes(&self) -> usize {
        self.order + 1
    }

    /// Values of every nodal basis function at reference point `(r, s)`.
    pub fn basis_at(&self, rs: [f64; 2]) -> Vec<f64> {
        let m: Vec<f64> = self.exponents.iter().map(|&e| monomial(e, rs)).collect();
        (0..self.num_nodes())
            .map(|j| m.iter().enumerate().map(|(a, v)| self.coeffs[(a, j)] * v).sum())
            .collect()
    }
}

fn monomial((a, b): (i32, i32), x: [f64; 2]) -> f64 {
    x[0].powi(a) * x[1].powi(b)
}

fn monomial_dr((a, b): (i32, i32), x: [f64; 2]) -> f64 {
    if a == 0 {
        0.0
    } else {
        a as f64 * x[0].powi(a - 1) * x[1].powi(b)
    }
}

/// `∫ r^a s^b` over the reference triangle, `a! b! / (a + b + 2)!`.
fn monomial_integral(a: i32, b: i32) -> f64 {
    let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
    fact(a) * fact(b) / fact(a + b + 2)
}

/// Mass matrix of the 1-D equispaced Lagrange basis on `[0, 1]`.
fn edge_mass_matrix(p: usize) -> Matrix {
    const GAUSS_X: [f64; 4] = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_3,
        0.339_981_043_584_856_3,
        0.861_136_311_594_052_6,
    ];
    const GAUSS_W: [f64; 4] = [
        0.347_854_845_137_453_85,
        0.652_145_154_862_546_1,
        0.652_145_154_862_546_1,
        0.347_854_845_137_453_85,
    ];
    let knots: Vec<f64> = (0..=p).map(|i| i as f64 / p as f64).collect();
    let lagrange = |a: usize, x: f64| -> f64 {
        knots
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != a)
            .map(|(_, &xm)| (x - xm) / (knots[a] - xm))
            .product()
    };
    Matrix::from_fn(p + 1, p + 1, |a, b| {
        GAUSS_X
            .iter()
            .zip(GAUSS_W)
            .map(|(&g, w)| {
                let x = 0.5 * (g + 1.0);
                0.5 * w * lagrange(a, x) * lagrange(b, x)
            })
            .sum()
    })
}
