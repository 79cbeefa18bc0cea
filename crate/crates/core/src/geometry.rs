//! Polygon reconstruction from a solved `(code, angles)` pair and the
//! geometric checks that certify it: closure, convexity, smallness, the
//! diameter graph and the zonogon traversal.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rug::Float;
use thiserror::Error;

use crate::codes::{Code, Sign};
use crate::mp::{self, Complex};
use crate::phase2::AngleVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("angles must be strictly increasing from 0 to pi")]
    UnsortedAngles,
    #[error("code has n = {code}, angles have n = {angles}")]
    DimensionMismatch { code: usize, angles: usize },
    #[error("boundary does not close (defect {0:e})")]
    NotClosed(f64),
    #[error("polygon is not convex at vertex {0}")]
    NotConvex(usize),
    #[error("diameter {0} exceeds 1")]
    NotSmall(String),
    #[error("zonogon has {found} vertices, expected {expected}")]
    DegenerateZonogon { found: usize, expected: usize },
    #[error("zonogon traversal gives {recovered}, not equivalent to {expected}")]
    CodeMismatch { recovered: String, expected: String },
}

/// `2n sin(pi / 2n)`, the perimeter bound for small n-gons.
pub fn upper_bound(n: usize, precision_bits: u32) -> Float {
    assert!(n >= 3, "polygons need n >= 3");
    let s = mp::pi_fraction(1, 2 * n as i64, precision_bits + 16).sin();
    Float::with_val(precision_bits, s * (2 * n) as u32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolygonSolution {
    pub code: Code,
    pub angles: AngleVector,
    /// Counterclockwise, first vertex at the origin.
    pub vertices: Vec<Complex>,
    pub perimeter: Float,
    pub gap: Float,
}

impl PolygonSolution {
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn precision_bits(&self) -> u32 {
        self.perimeter.prec()
    }

    /// Sum of the side lengths of the vertex polygon.
    pub fn boundary_length(&self) -> Float {
        boundary_length(&self.vertices)
    }

    pub fn diameter(&self) -> Float {
        diameter(&self.vertices)
    }

    /// Copy rotated by `angle` and translated by `shift`.
    pub fn moved(&self, angle: &Float, shift: &Complex) -> PolygonSolution {
        let rot = Complex::cis(angle);
        PolygonSolution {
            vertices: self.vertices.iter().map(|v| &(&rot * v) + shift).collect(),
            ..self.clone()
        }
    }
}

fn boundary_length(vertices: &[Complex]) -> Float {
    let prec = vertices[0].re.prec();
    let mut total = mp::zero(prec);
    for (i, v) in vertices.iter().enumerate() {
        total += (&vertices[(i + 1) % vertices.len()] - v).norm();
    }
    total
}

fn diameter(vertices: &[Complex]) -> Float {
    let prec = vertices[0].re.prec();
    let mut best = mp::zero(prec);
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            let d = (a - b).norm();
            if d > best {
                best = d;
            }
        }
    }
    best
}

fn cross(a: &Complex, b: &Complex) -> Float {
    let prec = a.re.prec();
    Float::with_val(prec, &a.re * &b.im) - Float::with_val(prec, &a.im * &b.re)
}

/// Builds the inscribed-zonogon polygon: `z_j = exp(i phi_j)`, side vectors
/// `s_j = c_j (z_{j+1} - z_j)`, sorted by direction and summed from the origin.
pub fn reconstruct(code: &Code, angles: &AngleVector, tol_bits: u32) -> Result<PolygonSolution, GeometryError> {
    let n = code.n();
    if angles.n() != n {
        return Err(GeometryError::DimensionMismatch {
            code: n,
            angles: angles.n(),
        });
    }
    let prec = angles.precision_bits();
    let pi = mp::pi(prec);
    let phi = angles.all();
    if !phi[0].is_zero() || phi[n] != pi || !angles.is_strictly_increasing() {
        return Err(GeometryError::UnsortedAngles);
    }
    let two_pi = Float::with_val(prec, &pi * 2u32);
    let half_pi = Float::with_val(prec, &pi / 2u32);

    let z: Vec<Complex> = phi.iter().map(Complex::cis).collect();
    let mut sides: Vec<(Float, Complex)> = code
        .half()
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let s = (&z[j + 1] - &z[j]).scale(c.value());
            let mut theta = Float::with_val(prec, &phi[j] + &phi[j + 1]) / 2u32 + &half_pi;
            if c == Sign::Minus {
                theta += &pi;
            }
            if theta >= two_pi {
                theta -= &two_pi;
            }
            (theta, s)
        })
        .collect();
    sides.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let mut vertices = Vec::with_capacity(n);
    let mut v = Complex::zero(prec);
    for (_, s) in &sides {
        vertices.push(v.clone());
        v = &v + s;
    }
    let tol = mp::pow2_neg(tol_bits.saturating_sub(8), prec);
    let defect = v.norm();
    if defect >= tol {
        return Err(GeometryError::NotClosed(defect.to_f64()));
    }
    for i in 0..n {
        let a = &sides[i].1;
        let b = &sides[(i + 1) % n].1;
        if cross(a, b) <= 0 {
            return Err(GeometryError::NotConvex((i + 1) % n));
        }
    }
    let d = diameter(&vertices);
    if d > Float::with_val(prec, &tol + 1u32) {
        return Err(GeometryError::NotSmall(mp::to_decimal(&d, 20)));
    }
    let perimeter = angles.perimeter();
    let gap = upper_bound(n, prec) - &perimeter;
    Ok(PolygonSolution {
        code: code.clone(),
        angles: angles.clone(),
        vertices,
        perimeter,
        gap,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiameterGraph {
    pub n: usize,
    /// Vertex pairs `(k, l)` with `k < l` at unit distance.
    pub edges: Vec<(usize, usize)>,
}

impl DiameterGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Vertices left after removing those of degree one.
    pub fn core(&self) -> Vec<usize> {
        self.degrees()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d >= 2)
            .map(|(i, _)| i)
            .collect()
    }

    /// Length of the cycle formed by the core, if the core is a single cycle.
    pub fn core_cycle_length(&self) -> Option<usize> {
        let core = self.core();
        let in_core = |v: usize| core.binary_search(&v).is_ok();
        let inner: Vec<(usize, usize)> = self
            .edges
            .iter()
            .copied()
            .filter(|&(a, b)| in_core(a) && in_core(b))
            .collect();
        if core.len() < 3 || inner.len() != core.len() {
            return None;
        }
        let neighbours = |v: usize| {
            inner
                .iter()
                .filter_map(move |&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None })
        };
        if core.iter().any(|&v| neighbours(v).count() != 2) {
            return None;
        }
        // walk the cycle from the first core vertex
        let start = core[0];
        let mut prev = start;
        let mut cur = neighbours(start).next()?;
        let mut len = 1;
        while cur != start {
            let next = neighbours(cur).find(|&w| w != prev)?;
            prev = cur;
            cur = next;
            len += 1;
            if len > core.len() {
                return None;
            }
        }
        (len == core.len()).then_some(len)
    }

    /// The core is a single cycle of odd length.
    pub fn has_odd_cycle_core(&self) -> bool {
        self.core_cycle_length().is_some_and(|l| l % 2 == 1)
    }
}

/// Pairs of vertices whose distance is within `tol` of one.
pub fn diameter_graph(poly: &PolygonSolution, tol: &Float) -> DiameterGraph {
    let v = &poly.vertices;
    let mut edges = Vec::new();
    for k in 0..v.len() {
        for l in k + 1..v.len() {
            let d = (&v[k] - &v[l]).norm() - 1u32;
            if d.abs() <= *tol {
                edges.push((k, l));
            }
        }
    }
    DiameterGraph { n: v.len(), edges }
}

/// Default unit-distance tolerance `2^(-tol_bits / 2)`.
pub fn default_unit_tolerance(tol_bits: u32, precision_bits: u32) -> Float {
    mp::pow2_neg(tol_bits / 2, precision_bits)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZonogonReport {
    /// Zonogon vertices as `(k, l)` with `z = v_k - v_l`, counterclockwise.
    pub vertex_pairs: Vec<(usize, usize)>,
    pub max_modulus: Float,
    pub small: bool,
    pub centrally_symmetric: bool,
    pub recovered: Code,
}

/// Convex hull (counterclockwise, no collinear points) of `points`,
/// returned as indices.
fn convex_hull(points: &[Complex]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.re.partial_cmp(&q.re)
            .unwrap_or(Ordering::Equal)
            .then(p.im.partial_cmp(&q.im).unwrap_or(Ordering::Equal))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let turn = |o: usize, a: usize, b: usize| cross(&(&points[a] - &points[o]), &(&points[b] - &points[o]));
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(idx.iter())
        } else {
            Box::new(idx.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Builds the zonogon of all vertex differences, checks that it lies in the
/// unit disc and recovers the code by walking its boundary.
pub fn zonogon_report(poly: &PolygonSolution, tol: &Float) -> Result<ZonogonReport, GeometryError> {
    let n = poly.n();
    let prec = poly.precision_bits();
    let mut points = Vec::with_capacity(n * (n - 1));
    let mut pairs = Vec::with_capacity(n * (n - 1));
    for k in 0..n {
        for l in 0..n {
            if k != l {
                points.push(&poly.vertices[k] - &poly.vertices[l]);
                pairs.push((k, l));
            }
        }
    }
    let max_modulus = points
        .iter()
        .map(Complex::norm)
        .fold(mp::zero(prec), |a, b| if b > a { b } else { a });
    let small = max_modulus <= Float::with_val(prec, tol + 1u32);

    let hull = convex_hull(&points);
    let vertex_pairs: Vec<(usize, usize)> = hull.iter().map(|&i| pairs[i]).collect();
    if vertex_pairs.len() != 2 * n {
        return Err(GeometryError::DegenerateZonogon {
            found: vertex_pairs.len(),
            expected: 2 * n,
        });
    }
    let centrally_symmetric = vertex_pairs.iter().all(|&(k, l)| vertex_pairs.contains(&(l, k)));

    let mut signs = Vec::with_capacity(2 * n);
    for j in 0..2 * n {
        let (k0, l0) = vertex_pairs[j];
        let (k1, l1) = vertex_pairs[(j + 1) % (2 * n)];
        let sign = if k1 == (k0 + 1) % n && l1 == l0 {
            Sign::Plus
        } else if k1 == k0 && l1 == (l0 + 1) % n {
            Sign::Minus
        } else {
            return Err(GeometryError::DegenerateZonogon {
                found: vertex_pairs.len(),
                expected: 2 * n,
            });
        };
        signs.push(sign);
    }
    let recovered = Code::from_full(&signs).map_err(|_| GeometryError::CodeMismatch {
        recovered: crate::codes::format_signs(&signs),
        expected: poly.code.full_string(),
    })?;
    Ok(ZonogonReport {
        vertex_pairs,
        max_modulus,
        small,
        centrally_symmetric,
        recovered,
    })
}

/// [`zonogon_report`] plus the requirement that the recovered code is
/// equivalent to the polygon's code and the polygon is small.
pub fn zonogon_check(poly: &PolygonSolution, tol: &Float) -> Result<ZonogonReport, GeometryError> {
    let report = zonogon_report(poly, tol)?;
    if !report.small {
        return Err(GeometryError::NotSmall(mp::to_decimal(&report.max_modulus, 20)));
    }
    if !report.recovered.is_equivalent(&poly.code) {
        return Err(GeometryError::CodeMismatch {
            recovered: report.recovered.full_string(),
            expected: poly.code.full_string(),
        });
    }
    Ok(report)
}

/// Whether every pairwise vertex distance is at most `1 + tol`.
pub fn is_small(vertices: &[Complex], tol: &Float) -> bool {
    let prec = vertices[0].re.prec();
    diameter(vertices) <= Float::with_val(prec, tol + 1u32)
}

fn f64_coords(poly: &PolygonSolution) -> Vec<(f64, f64)> {
    poly.vertices.iter().map(|v| (v.re.to_f64(), v.im.to_f64())).collect()
}

/// SVG drawing: black boundary and gray diameter chords, unit = 400 px.
pub fn to_svg(poly: &PolygonSolution, graph: &DiameterGraph) -> String {
    let pts = f64_coords(poly);
    let scale = 400.0;
    let pad = 20.0;
    let (min_x, max_x, min_y, max_y) = pts.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    let w = (max_x - min_x) * scale + 2.0 * pad;
    let h = (max_y - min_y) * scale + 2.0 * pad;
    // flip y so the picture is counterclockwise on screen
    let map = |(x, y): (f64, f64)| ((x - min_x) * scale + pad, (max_y - y) * scale + pad);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    for &(k, l) in &graph.edges {
        let (x1, y1) = map(pts[k]);
        let (x2, y2) = map(pts[l]);
        let _ = writeln!(
            out,
            r#"  <line class="diameter" x1="{x1:.4}" y1="{y1:.4}" x2="{x2:.4}" y2="{y2:.4}" stroke="gray" stroke-width="1"/>"#
        );
    }
    for i in 0..pts.len() {
        let (x1, y1) = map(pts[i]);
        let (x2, y2) = map(pts[(i + 1) % pts.len()]);
        let _ = writeln!(
            out,
            r#"  <line class="side" x1="{x1:.4}" y1="{y1:.4}" x2="{x2:.4}" y2="{y2:.4}" stroke="black" stroke-width="2"/>"#
        );
    }
    out.push_str("</svg>\n");
    out
}

/// TikZ picture in the same style as [`to_svg`].
pub fn to_tikz(poly: &PolygonSolution, graph: &DiameterGraph) -> String {
    let pts = f64_coords(poly);
    let mut out = String::from("\\begin{tikzpicture}[scale=4,line cap=round,line join=round]\n");
    for &(k, l) in &graph.edges {
        let _ = writeln!(
            out,
            "  \\draw[gray] ({:.12},{:.12}) -- ({:.12},{:.12});",
            pts[k].0, pts[k].1, pts[l].0, pts[l].1
        );
    }
    out.push_str("  \\draw[very thick] ");
    for p in &pts {
        let _ = write!(out, "({:.12},{:.12}) -- ", p.0, p.1);
    }
    out.push_str("cycle;\n\\end{tikzpicture}\n");
    out
}
