//! Periodic interval and structured triangle meshes.
//!
//! Faces are numbered locally per element. On an interval `[v0, v1]` face 0
//! is the left end point and face 1 the right one. On a counterclockwise
//! triangle `(v0, v1, v2)` face `f` runs from `v_f` to `v_{(f+1) % 3}`.
//!
//! Every face is either shared by two elements (an interior edge) or lies on
//! the domain boundary, where it is glued to its translate on the opposite
//! side (a periodic pair). Both kinds are stored as [`Interface`]s so the
//! assembly loops treat them identically; only the `shift` differs.

use std::io::{self, Write};

use thiserror::Error;

use crate::scalar::Scalar;

pub type Point<T> = [T; 2];

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("need at least 2 elements per direction, got {0}")]
    TooFewElements(usize),
    #[error("domain extent must be positive and finite, got {0}")]
    BadExtent(f64),
    #[error("boundary face of element {element} (face {face}) has no periodic partner")]
    UnmatchedBoundaryFace { element: usize, face: usize },
}

/// An element face, addressed by element index and local face number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceRef {
    pub element: usize,
    pub face: usize,
}

/// A face shared by two element sides.
///
/// For periodic pairs `minus` is the element with the larger index (`K_l`) and
/// `plus` its partner across the boundary. A physical point `x` on the minus
/// face corresponds to `x + shift` on the plus face; `shift` is zero for
/// interior edges.
#[derive(Clone, Debug)]
pub struct Interface<T> {
    pub minus: FaceRef,
    pub plus: FaceRef,
    /// Unit normal pointing out of the minus element.
    pub normal: Point<T>,
    /// `h_E`: edge length in 2D; the local element size in 1D.
    pub measure: T,
    pub shift: Point<T>,
}

impl<T: Scalar> Interface<T> {
    pub fn is_periodic(&self) -> bool {
        self.shift[0] != T::zero() || self.shift[1] != T::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Interval {
        n: usize,
    },
    /// `nx * ny` squares, each split into a lower and an upper triangle
    /// along the diagonal from its lower-left to its upper-right corner.
    Grid {
        nx: usize,
        ny: usize,
    },
}

/// Affine map from a reference element to a physical element.
///
/// The reference interval is `[0, 1]`, the reference triangle has vertices
/// `(0,0)`, `(1,0)`, `(0,1)`. In 1D the second coordinate is carried along
/// as an identity so the same code serves both dimensions.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap<T> {
    pub origin: Point<T>,
    /// Columns are the images of the reference unit vectors.
    pub jacobian: [[T; 2]; 2],
    pub inverse: [[T; 2]; 2],
    /// Ratio of physical to reference measure.
    pub det: T,
}

impl<T: Scalar> AffineMap<T> {
    fn new(origin: Point<T>, e0: Point<T>, e1: Point<T>) -> Self {
        let jacobian = [[e0[0], e1[0]], [e0[1], e1[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        let inverse = [[jacobian[1][1] / det, -jacobian[0][1] / det], [-jacobian[1][0] / det, jacobian[0][0] / det]];
        AffineMap { origin, jacobian, inverse, det }
    }

    pub fn map(&self, r: Point<T>) -> Point<T> {
        let j = &self.jacobian;
        [self.origin[0] + j[0][0] * r[0] + j[0][1] * r[1], self.origin[1] + j[1][0] * r[0] + j[1][1] * r[1]]
    }

    pub fn pull_back(&self, x: Point<T>) -> Point<T> {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let m = &self.inverse;
        [m[0][0] * d[0] + m[0][1] * d[1], m[1][0] * d[0] + m[1][1] * d[1]]
    }

    /// Physical gradient from a reference gradient: `B^{-T} g`.
    pub fn push_gradient(&self, g: Point<T>) -> Point<T> {
        let m = &self.inverse;
        [m[0][0] * g[0] + m[1][0] * g[1], m[0][1] * g[0] + m[1][1] * g[1]]
    }
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    dimension: usize,
    extent: Point<T>,
    layout: Layout,
    vertices: Vec<Point<T>>,
    elements: Vec<Vec<usize>>,
    interior_edges: Vec<Interface<T>>,
    periodic_pairs: Vec<Interface<T>>,
    diameters: Vec<T>,
}

/// Uniform periodic partition of `[0, length]` into `n_elements` intervals.
pub fn build_mesh_1d<T: Scalar>(length: T, n_elements: usize) -> Result<Mesh<T>, MeshError> {
    if n_elements < 2 {
        return Err(MeshError::TooFewElements(n_elements));
    }
    check_extent(length)?;
    let h = length / T::from_count(n_elements);
    let vertices = (0..=n_elements)
        .map(|i| {
            let x = if i == n_elements { length } else { T::from_count(i) * h };
            [x, T::zero()]
        })
        .collect();
    let elements = (0..n_elements).map(|i| vec![i, i + 1]).collect();
    Mesh::from_parts(1, [length, T::zero()], Layout::Interval { n: n_elements }, vertices, elements)
}

/// Structured periodic triangulation of `[0, width] x [0, height]`.
pub fn build_mesh_2d<T: Scalar>(width: T, height: T, nx: usize, ny: usize) -> Result<Mesh<T>, MeshError> {
    check_extent(width)?;
    check_extent(height)?;
    for n in [nx, ny] {
        if n < 2 {
            return Err(MeshError::TooFewElements(n));
        }
    }
    let dx = width / T::from_count(nx);
    let dy = height / T::from_count(ny);
    let coord = |i: usize, n: usize, d: T, len: T| if i == n { len } else { T::from_count(i) * d };
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([coord(i, nx, dx, width), coord(j, ny, dy, height)]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            elements.push(vec![v00, v10, v11]);
            elements.push(vec![v00, v11, v01]);
        }
    }
    Mesh::from_parts(2, [width, height], Layout::Grid { nx, ny }, vertices, elements)
}

fn check_extent<T: Scalar>(x: T) -> Result<(), MeshError> {
    if x > T::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(MeshError::BadExtent(x.to_f64().unwrap_or(f64::NAN)))
    }
}

impl<T: Scalar> Mesh<T> {
    fn from_parts(
        dimension: usize,
        extent: Point<T>,
        layout: Layout,
        vertices: Vec<Point<T>>,
        elements: Vec<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        let mut mesh = Mesh {
            dimension,
            extent,
            layout,
            vertices,
            elements,
            interior_edges: Vec::new(),
            periodic_pairs: Vec::new(),
            diameters: Vec::new(),
        };
        mesh.diameters = (0..mesh.n_elements()).map(|k| mesh.compute_diameter(k)).collect();
        mesh.classify_faces()?;
        Ok(mesh)
    }

    fn compute_diameter(&self, k: usize) -> T {
        let vs = &self.elements[k];
        let mut d = T::zero();
        for a in 0..vs.len() {
            for b in a + 1..vs.len() {
                d = d.max(distance(self.vertices[vs[a]], self.vertices[vs[b]]));
            }
        }
        d
    }

    fn classify_faces(&mut self) -> Result<(), MeshError> {
        use std::collections::HashMap;

        let mut open: HashMap<Vec<usize>, FaceRef> = HashMap::new();
        let mut interior = Vec::new();
        for k in 0..self.n_elements() {
            for f in 0..self.faces_per_element() {
                let mut key = self.face_vertex_ids(k, f);
                key.sort_unstable();
                let here = FaceRef { element: k, face: f };
                match open.remove(&key) {
                    Some(first) => interior.push((first, here)),
                    None => {
                        open.insert(key, here);
                    }
                }
            }
        }
        self.interior_edges = interior
            .into_iter()
            .map(|(a, b)| {
                let (minus, plus) = if a.element < b.element { (a, b) } else { (b, a) };
                Interface {
                    minus,
                    plus,
                    normal: self.outward_normal(minus.element, minus.face),
                    measure: self.interface_measure(minus, plus),
                    shift: [T::zero(); 2],
                }
            })
            .collect();

        let mut boundary: Vec<FaceRef> = open.into_values().collect();
        boundary.sort_by_key(|f| (f.element, f.face));
        let tol = T::lit(1e-9) * self.extent[0].max(self.extent[1]);
        let mut used = vec![false; boundary.len()];
        let mut pairs = Vec::new();
        for a in 0..boundary.len() {
            if used[a] {
                continue;
            }
            let ma = self.face_midpoint(boundary[a].element, boundary[a].face);
            let partner = (a + 1..boundary.len()).find(|&b| {
                if used[b] {
                    return false;
                }
                let mb = self.face_midpoint(boundary[b].element, boundary[b].face);
                self.period_shift(ma, mb, tol).is_some()
            });
            let Some(b) = partner else {
                return Err(MeshError::UnmatchedBoundaryFace { element: boundary[a].element, face: boundary[a].face });
            };
            used[a] = true;
            used[b] = true;
            let (minus, plus) = if boundary[a].element > boundary[b].element {
                (boundary[a], boundary[b])
            } else {
                (boundary[b], boundary[a])
            };
            let m_minus = self.face_midpoint(minus.element, minus.face);
            let m_plus = self.face_midpoint(plus.element, plus.face);
            let shift = self.period_shift(m_minus, m_plus, tol).expect("matched above");
            pairs.push(Interface {
                minus,
                plus,
                normal: self.outward_normal(minus.element, minus.face),
                measure: self.interface_measure(minus, plus),
                shift,
            });
        }
        self.periodic_pairs = pairs;
        Ok(())
    }

    /// Returns the period vector taking `a` to `b` if they differ by exactly
    /// one domain period along one axis.
    fn period_shift(&self, a: Point<T>, b: Point<T>, tol: T) -> Option<Point<T>> {
        let d = [b[0] - a[0], b[1] - a[1]];
        for axis in 0..self.dimension {
            let other = 1 - axis;
            if d[other].abs() > tol {
                continue;
            }
            let period = self.extent[axis];
            if (d[axis].abs() - period).abs() <= tol {
                let mut s = [T::zero(); 2];
                s[axis] = period.copysign(d[axis]);
                return Some(s);
            }
        }
        None
    }

    fn interface_measure(&self, a: FaceRef, b: FaceRef) -> T {
        if self.dimension == 1 {
            (self.element_measure(a.element) + self.element_measure(b.element)) / T::lit(2.0)
        } else {
            let v = self.face_vertices(a.element, a.face);
            distance(v[0], v[1])
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Domain width and height (height is zero in 1D).
    pub fn extent(&self) -> Point<T> {
        self.extent
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn element(&self, k: usize) -> &[usize] {
        &self.elements[k]
    }

    pub fn interior_edges(&self) -> &[Interface<T>] {
        &self.interior_edges
    }

    pub fn periodic_pairs(&self) -> &[Interface<T>] {
        &self.periodic_pairs
    }

    /// Interior edges followed by periodic pairs.
    pub fn interfaces(&self) -> impl Iterator<Item = &Interface<T>> {
        self.interior_edges.iter().chain(&self.periodic_pairs)
    }

    pub fn diameter(&self, k: usize) -> T {
        self.diameters[k]
    }

    pub fn diameters(&self) -> &[T] {
        &self.diameters
    }

    pub fn faces_per_element(&self) -> usize {
        self.dimension + 1
    }

    pub fn domain_measure(&self) -> T {
        if self.dimension == 1 {
            self.extent[0]
        } else {
            self.extent[0] * self.extent[1]
        }
    }

    pub fn affine_map(&self, k: usize) -> AffineMap<T> {
        let v = &self.elements[k];
        let p0 = self.vertices[v[0]];
        let p1 = self.vertices[v[1]];
        let e0 = [p1[0] - p0[0], p1[1] - p0[1]];
        if self.dimension == 1 {
            AffineMap::new(p0, e0, [T::zero(), T::one()])
        } else {
            let p2 = self.vertices[v[2]];
            AffineMap::new(p0, e0, [p2[0] - p0[0], p2[1] - p0[1]])
        }
    }

    /// Length (1D) or area (2D); signed in 2D so orientation errors surface.
    pub fn element_measure(&self, k: usize) -> T {
        let det = self.affine_map(k).det;
        if self.dimension == 1 {
            det
        } else {
            det / T::lit(2.0)
        }
    }

    fn face_vertex_ids(&self, k: usize, f: usize) -> Vec<usize> {
        let v = &self.elements[k];
        if self.dimension == 1 {
            vec![v[f]]
        } else {
            vec![v[f], v[(f + 1) % 3]]
        }
    }

    pub fn face_vertices(&self, k: usize, f: usize) -> Vec<Point<T>> {
        self.face_vertex_ids(k, f).into_iter().map(|i| self.vertices[i]).collect()
    }

    pub fn face_midpoint(&self, k: usize, f: usize) -> Point<T> {
        let vs = self.face_vertices(k, f);
        let n = T::from_count(vs.len());
        let sx: T = vs.iter().map(|p| p[0]).sum();
        let sy: T = vs.iter().map(|p| p[1]).sum();
        [sx / n, sy / n]
    }

    pub fn outward_normal(&self, k: usize, f: usize) -> Point<T> {
        if self.dimension == 1 {
            let s = if f == 0 { -T::one() } else { T::one() };
            return [s, T::zero()];
        }
        let vs = self.face_vertices(k, f);
        let (dx, dy) = (vs[1][0] - vs[0][0], vs[1][1] - vs[0][1]);
        let len = (dx * dx + dy * dy).sqrt();
        [dy / len, -dx / len]
    }

    /// Element containing `p` (wrapped into the domain) and the reference
    /// coordinates of `p` in it.
    pub fn locate(&self, p: Point<T>) -> (usize, Point<T>) {
        let wrap = |x: T, len: T| {
            let r = x - (x / len).floor() * len;
            if r >= len {
                r - len
            } else {
                r
            }
        };
        let cell = |x: T, len: T, n: usize| {
            let i = (x / len * T::from_count(n)).floor().to_usize().unwrap_or(0);
            i.min(n - 1)
        };
        let k = match self.layout {
            Layout::Interval { n } => cell(wrap(p[0], self.extent[0]), self.extent[0], n),
            Layout::Grid { nx, ny } => {
                let x = wrap(p[0], self.extent[0]);
                let y = wrap(p[1], self.extent[1]);
                let i = cell(x, self.extent[0], nx);
                let j = cell(y, self.extent[1], ny);
                let s = x / self.extent[0] * T::from_count(nx) - T::from_count(i);
                let t = y / self.extent[1] * T::from_count(ny) - T::from_count(j);
                2 * (j * nx + i) + usize::from(t > s)
            }
        };
        let q = match self.layout {
            Layout::Interval { .. } => [wrap(p[0], self.extent[0]), T::zero()],
            Layout::Grid { .. } => [wrap(p[0], self.extent[0]), wrap(p[1], self.extent[1])],
        };
        (k, self.affine_map(k).pull_back(q))
    }

    /// Plain-text listing of vertices, elements and interfaces.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "dimension {}", self.dimension)?;
        writeln!(w, "vertices {}", self.vertices.len())?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {} {}", p[0], p[1])?;
        }
        writeln!(w, "elements {}", self.elements.len())?;
        for (k, v) in self.elements.iter().enumerate() {
            let ids: Vec<String> = v.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{k} {}", ids.join(" "))?;
        }
        for (label, list) in [("interior", &self.interior_edges), ("periodic", &self.periodic_pairs)] {
            writeln!(w, "{label} {}", list.len())?;
            for e in list {
                writeln!(
                    w,
                    "{}:{} {}:{} n=({}, {}) h={} shift=({}, {})",
                    e.minus.element,
                    e.minus.face,
                    e.plus.element,
                    e.plus.face,
                    e.normal[0],
                    e.normal[1],
                    e.measure,
                    e.shift[0],
                    e.shift[1]
                )?;
            }
        }
        Ok(())
    }
}

fn distance<T: Scalar>(a: Point<T>, b: Point<T>) -> T {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
