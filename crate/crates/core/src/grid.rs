//! Meshes, P1 finite element functions, quadrature and norms.
//!
//! Two geometries are supported: planar triangulations and a one-dimensional
//! radial reduction on `[0, r_out]` whose measure carries the weight
//! `|S^{N-1}| r^{N-1}`. Both are stored in the same cell format so that the
//! assembly code never branches on the geometry: every cell knows its nodes,
//! its measure, the (constant) gradients of its nodal basis functions, and a
//! quadrature rule with basis values at the quadrature points.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Real, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Planar,
    /// Radially symmetric reduction of a ball in `R^N`.
    Radial { ambient_dim: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct QuadPoint<T> {
    pub x: Vec2<T>,
    pub weight: T,
    /// Values of the cell's nodal basis functions at `x`.
    pub shape: [T; 3],
}

#[derive(Debug, Clone)]
pub struct Cell<T> {
    pub nodes: [usize; 3],
    /// 3 for triangles, 2 for radial intervals.
    pub arity: usize,
    pub volume: T,
    pub centroid: Vec2<T>,
    pub grads: [Vec2<T>; 3],
    quad: [QuadPoint<T>; 3],
    n_quad: usize,
}

impl<T: Real> Cell<T> {
    pub fn local_nodes(&self) -> &[usize] {
        &self.nodes[..self.arity]
    }

    pub fn quad(&self) -> &[QuadPoint<T>] {
        &self.quad[..self.n_quad]
    }

    /// Cellwise constant gradient of the P1 field with the given nodal values.
    pub fn gradient(&self, values: &[T]) -> Vec2<T> {
        let mut g = [T::zero(); 2];
        for (a, &n) in self.local_nodes().iter().enumerate() {
            g[0] = g[0] + values[n] * self.grads[a][0];
            g[1] = g[1] + values[n] * self.grads[a][1];
        }
        g
    }

    pub fn value_at(&self, q: &QuadPoint<T>, values: &[T]) -> T {
        self.local_nodes()
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (a, &n)| acc + q.shape[a] * values[n])
    }
}

/// Immutable mesh. Refinement returns a new mesh.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    geometry: Geometry,
    nodes: Vec<Vec2<T>>,
    cells: Vec<Cell<T>>,
    on_boundary: Vec<bool>,
    boundary_nodes: Vec<usize>,
    dof_of_node: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
}

/// Surface measure of the unit sphere in `R^n`.
pub fn sphere_measure<T: Real>(n: usize) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    if n % 2 == 0 {
        // |S^1| = 2 pi
        let mut m = two_pi;
        let mut k = 2;
        while k < n {
            m = m * two_pi / T::from_usize(k).unwrap();
            k += 2;
        }
        m
    } else {
        // |S^2| = 4 pi
        let mut m = T::lit(4.0) * T::PI();
        let mut k = 3;
        while k < n {
            m = m * two_pi / T::from_usize(k).unwrap();
            k += 2;
        }
        m
    }
}

impl<T: Real> Mesh<T> {
    /// Structured triangulation of the unit square with `2 n^2` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("square mesh needs n >= 1 cells per side"));
        }
        let np = n + 1;
        let h = T::one() / T::from_usize(n).unwrap();
        let mut nodes = Vec::with_capacity(np * np);
        let mut boundary = Vec::new();
        for j in 0..np {
            for i in 0..np {
                nodes.push([T::from_usize(i).unwrap() * h, T::from_usize(j).unwrap() * h]);
                if i == 0 || j == 0 || i == n || j == n {
                    boundary.push(j * np + i);
                }
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                cells.push(vec![v00, v10, v11]);
                cells.push(vec![v00, v11, v01]);
            }
        }
        Self::planar(nodes, cells, boundary)
    }

    /// Radial grid on `[0, r_out]` for a ball in `R^N`; only `r = r_out` is Dirichlet.
    pub fn radial(ambient_dim: usize, r_out: T, n: usize) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::invalid("radial reduction needs ambient dimension N >= 2"));
        }
        if !(r_out > T::zero()) {
            return Err(Error::invalid("radius must be positive"));
        }
        if n < 2 {
            return Err(Error::invalid("radial mesh needs n >= 2 cells"));
        }
        let h = r_out / T::from_usize(n).unwrap();
        let nodes: Vec<Vec2<T>> = (0..=n)
            .map(|i| [if i == n { r_out } else { T::from_usize(i).unwrap() * h }, T::zero()])
            .collect();
        let cells = (0..n).map(|i| vec![i, i + 1]).collect();
        Self::radial_from_parts(ambient_dim, nodes, cells, vec![n])
    }

    /// Builds a planar triangulation, reorienting clockwise triangles.
    pub fn planar(nodes: Vec<Vec2<T>>, cells: Vec<Vec<usize>>, boundary: Vec<usize>) -> Result<Self> {
        let mut built = Vec::with_capacity(cells.len());
        for (c, idx) in cells.iter().enumerate() {
            if idx.len() != 3 {
                return Err(Error::invalid(format!("cell {c} is not a triangle")));
            }
            let mut tri = [idx[0], idx[1], idx[2]];
            check_cell_nodes(c, &tri, nodes.len())?;
            let area2 = twice_area(&nodes, &tri);
            if area2 < T::zero() {
                tri.swap(1, 2);
            }
            built.push(triangle_cell(c, &nodes, tri)?);
        }
        Self::assemble(Geometry::Planar, nodes, built, boundary)
    }

    fn radial_from_parts(
        ambient_dim: usize,
        nodes: Vec<Vec2<T>>,
        cells: Vec<Vec<usize>>,
        boundary: Vec<usize>,
    ) -> Result<Self> {
        let omega = sphere_measure::<T>(ambient_dim);
        let mut built = Vec::with_capacity(cells.len());
        for (c, idx) in cells.iter().enumerate() {
            if idx.len() != 2 {
                return Err(Error::invalid(format!("radial cell {c} is not an interval")));
            }
            let (mut i0, mut i1) = (idx[0], idx[1]);
            check_cell_nodes(c, &[i0, i1], nodes.len())?;
            if nodes[i1][0] < nodes[i0][0] {
                std::mem::swap(&mut i0, &mut i1);
            }
            built.push(radial_cell(c, &nodes, [i0, i1], ambient_dim, omega)?);
        }
        Self::assemble(Geometry::Radial { ambient_dim }, nodes, built, boundary)
    }

    fn assemble(geometry: Geometry, nodes: Vec<Vec2<T>>, cells: Vec<Cell<T>>, boundary: Vec<usize>) -> Result<Self> {
        let mut on_boundary = vec![false; nodes.len()];
        for &b in &boundary {
            if b >= nodes.len() {
                return Err(Error::invalid(format!("boundary node {b} does not exist")));
            }
            on_boundary[b] = true;
        }
        let boundary_nodes: Vec<usize> = (0..nodes.len()).filter(|&i| on_boundary[i]).collect();
        let mut dof_of_node = vec![None; nodes.len()];
        let mut free_nodes = Vec::new();
        for (i, slot) in dof_of_node.iter_mut().enumerate() {
            if !on_boundary[i] {
                *slot = Some(free_nodes.len());
                free_nodes.push(i);
            }
        }
        Ok(Mesh {
            geometry,
            nodes,
            cells,
            on_boundary,
            boundary_nodes,
            dof_of_node,
            free_nodes,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Topological dimension of the cells (1 for radial, 2 for planar).
    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Planar => 2,
            Geometry::Radial { .. } => 1,
        }
    }

    /// Dimension `N` of the physical domain.
    pub fn ambient_dim(&self) -> usize {
        match self.geometry {
            Geometry::Planar => 2,
            Geometry::Radial { ambient_dim } => ambient_dim,
        }
    }

    pub fn nodes(&self) -> &[Vec2<T>] {
        &self.nodes
    }

    pub fn cells(&self) -> &[Cell<T>] {
        &self.cells
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    /// Interior (free) nodes in dof order.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn n_dofs(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    /// Weight `|S^{N-1}| r^{N-1}` of the radial measure; 1 for planar meshes.
    pub fn radial_weight(&self, r: T) -> T {
        match self.geometry {
            Geometry::Planar => T::one(),
            Geometry::Radial { ambient_dim } => sphere_measure::<T>(ambient_dim) * r.powi(ambient_dim as i32 - 1),
        }
    }

    pub fn measure(&self) -> T {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Largest cell diameter.
    pub fn h_max(&self) -> T {
        self.cells
            .iter()
            .map(|c| {
                let ln = c.local_nodes();
                let mut d = T::zero();
                for a in 0..ln.len() {
                    for b in a + 1..ln.len() {
                        let p = self.nodes[ln[a]];
                        let q = self.nodes[ln[b]];
                        d = d.max(norm(&[p[0] - q[0], p[1] - q[1]]));
                    }
                }
                d
            })
            .fold(T::zero(), T::max)
    }

    /// Half-bandwidth of the interior dof coupling graph.
    pub fn dof_bandwidth(&self) -> usize {
        let mut bw = 0;
        for c in &self.cells {
            let dofs: Vec<usize> = c.local_nodes().iter().filter_map(|&n| self.dof(n)).collect();
            for &i in &dofs {
                for &j in &dofs {
                    bw = bw.max(i.abs_diff(j));
                }
            }
        }
        bw
    }

    /// Integral of a pointwise function using the cell quadrature rules.
    pub fn integrate<F: Fn(&Vec2<T>) -> T>(&self, f: F) -> T {
        self.cells
            .iter()
            .map(|c| c.quad().iter().map(|q| q.weight * f(&q.x)).sum::<T>())
            .sum()
    }

    /// Uniform refinement: red refinement for triangles, midpoints for radial grids.
    pub fn refine(&self) -> Result<Self> {
        match self.geometry {
            Geometry::Radial { ambient_dim } => {
                let mut nodes = self.nodes.clone();
                let mut cells = Vec::with_capacity(2 * self.cells.len());
                for c in &self.cells {
                    let (a, b) = (c.nodes[0], c.nodes[1]);
                    let m = nodes.len();
                    nodes.push([(self.nodes[a][0] + self.nodes[b][0]) * T::lit(0.5), T::zero()]);
                    cells.push(vec![a, m]);
                    cells.push(vec![m, b]);
                }
                Self::radial_from_parts(ambient_dim, nodes, cells, self.boundary_nodes.clone())
            }
            Geometry::Planar => {
                let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
                for c in &self.cells {
                    for e in 0..3 {
                        *edge_count.entry(edge_key(c.nodes[e], c.nodes[(e + 1) % 3])).or_default() += 1;
                    }
                }
                let mut nodes = self.nodes.clone();
                let mut boundary = self.boundary_nodes.clone();
                let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
                let mut cells = Vec::with_capacity(4 * self.cells.len());
                for c in &self.cells {
                    let v = c.nodes;
                    let mut m = [0usize; 3];
                    for e in 0..3 {
                        let key = edge_key(v[e], v[(e + 1) % 3]);
                        m[e] = *midpoint.entry(key).or_insert_with(|| {
                            let (a, b) = key;
                            nodes.push([
                                (nodes[a][0] + nodes[b][0]) * T::lit(0.5),
                                (nodes[a][1] + nodes[b][1]) * T::lit(0.5),
                            ]);
                            let id = nodes.len() - 1;
                            if edge_count[&key] == 1 && self.on_boundary[a] && self.on_boundary[b] {
                                boundary.push(id);
                            }
                            id
                        });
                    }
                    cells.push(vec![v[0], m[0], m[2]]);
                    cells.push(vec![m[0], v[1], m[1]]);
                    cells.push(vec![m[2], m[1], v[2]]);
                    cells.push(vec![m[0], m[1], m[2]]);
                }
                Self::planar(nodes, cells, boundary)
            }
        }
    }

    /// Plain-text dump: `dim n_nodes n_cells` (radial meshes append `N`),
    /// node coordinates, cells, then boundary node indices.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        match self.geometry {
            Geometry::Planar => writeln!(w, "2 {} {}", self.n_nodes(), self.n_cells())?,
            Geometry::Radial { ambient_dim } => {
                writeln!(w, "1 {} {} {}", self.n_nodes(), self.n_cells(), ambient_dim)?
            }
        }
        for p in &self.nodes {
            match self.geometry {
                Geometry::Planar => writeln!(w, "{:e} {:e}", p[0].as_f64(), p[1].as_f64())?,
                Geometry::Radial { .. } => writeln!(w, "{:e}", p[0].as_f64())?,
            }
        }
        for c in &self.cells {
            let mut line = String::new();
            for (k, n) in c.local_nodes().iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{n}");
            }
            writeln!(w, "{line}")?;
        }
        let b: Vec<String> = self.boundary_nodes.iter().map(|b| b.to_string()).collect();
        writeln!(w, "{}", b.join(" "))?;
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => None,
            other => Some((i + 1, other)),
        });
        let mut next = || -> Result<(usize, Vec<String>)> {
            let (ln, l) = lines.next().ok_or(Error::Parse { line: 0, msg: "unexpected end of file".into() })?;
            Ok((ln, l?.split_whitespace().map(str::to_owned).collect()))
        };
        let parse_num = |ln: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse { line: ln, msg: format!("{s}: {e}") })
        };
        let parse_idx = |ln: usize, s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|e| Error::Parse { line: ln, msg: format!("{s}: {e}") })
        };
        let (ln, header) = next()?;
        if header.len() < 3 {
            return Err(Error::Parse { line: ln, msg: "header must be `dim n_nodes n_cells`".into() });
        }
        let dim = parse_idx(ln, &header[0])?;
        let n_nodes = parse_idx(ln, &header[1])?;
        let n_cells = parse_idx(ln, &header[2])?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (ln, t) = next()?;
            let x = parse_num(ln, t.first().map(String::as_str).unwrap_or(""))?;
            let y = if dim == 2 {
                parse_num(ln, t.get(1).map(String::as_str).unwrap_or(""))?
            } else {
                0.0
            };
            nodes.push([T::lit(x), T::lit(y)]);
        }
        let mut cells = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let (ln, t) = next()?;
            cells.push(t.iter().map(|s| parse_idx(ln, s)).collect::<Result<Vec<_>>>()?);
        }
        let boundary = match next() {
            Ok((ln, t)) => t.iter().map(|s| parse_idx(ln, s)).collect::<Result<Vec<_>>>()?,
            Err(_) => Vec::new(),
        };
        match dim {
            2 => Self::planar(nodes, cells, boundary),
            1 => {
                let n = match header.get(3) {
                    Some(s) => parse_idx(ln, s)?,
                    None => return Err(Error::Parse { line: ln, msg: "radial dump needs ambient dimension".into() }),
                };
                if n < 2 {
                    return Err(Error::invalid("radial reduction needs ambient dimension N >= 2"));
                }
                Self::radial_from_parts(n, nodes, cells, boundary)
            }
            d => Err(Error::Parse { line: ln, msg: format!("unsupported dimension {d}") }),
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_cell_nodes(c: usize, idx: &[usize], n_nodes: usize) -> Result<()> {
    for (k, &i) in idx.iter().enumerate() {
        if i >= n_nodes {
            return Err(Error::invalid(format!("cell {c} references missing node {i}")));
        }
        if idx[..k].contains(&i) {
            return Err(Error::invalid(format!("cell {c} repeats node {i}")));
        }
    }
    Ok(())
}

fn twice_area<T: Real>(nodes: &[Vec2<T>], t: &[usize; 3]) -> T {
    let (a, b, c) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

fn triangle_cell<T: Real>(c: usize, nodes: &[Vec2<T>], tri: [usize; 3]) -> Result<Cell<T>> {
    let area2 = twice_area(nodes, &tri);
    if !(area2 > T::zero()) {
        return Err(Error::invalid(format!("cell {c} has non-positive area")));
    }
    let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    let mut grads = [[T::zero(); 2]; 3];
    for a in 0..3 {
        let (j, k) = ((a + 1) % 3, (a + 2) % 3);
        grads[a] = [(p[j][1] - p[k][1]) / area2, (p[k][0] - p[j][0]) / area2];
    }
    let volume = area2 * T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let centroid = [
        (p[0][0] + p[1][0] + p[2][0]) * third,
        (p[0][1] + p[1][1] + p[2][1]) * third,
    ];
    // Edge-midpoint rule, exact for quadratics.
    let half = T::lit(0.5);
    let mut quad = [QuadPoint { x: [T::zero(); 2], weight: T::zero(), shape: [T::zero(); 3] }; 3];
    for e in 0..3 {
        let (i, j) = (e, (e + 1) % 3);
        let mut shape = [T::zero(); 3];
        shape[i] = half;
        shape[j] = half;
        quad[e] = QuadPoint {
            x: [(p[i][0] + p[j][0]) * half, (p[i][1] + p[j][1]) * half],
            weight: volume * third,
            shape,
        };
    }
    Ok(Cell { nodes: tri, arity: 3, volume, centroid, grads, quad, n_quad: 3 })
}

fn radial_cell<T: Real>(c: usize, nodes: &[Vec2<T>], seg: [usize; 2], n: usize, omega: T) -> Result<Cell<T>> {
    let (r0, r1) = (nodes[seg[0]][0], nodes[seg[1]][0]);
    if r0 < T::zero() {
        return Err(Error::invalid(format!("cell {c} has negative radius")));
    }
    let h = r1 - r0;
    if !(h > T::zero()) {
        return Err(Error::invalid(format!("cell {c} has non-positive length")));
    }
    let nn = T::from_usize(n).unwrap();
    let volume = omega * (r1.powi(n as i32) - r0.powi(n as i32)) / nn;
    let half = T::lit(0.5);
    let mid = (r0 + r1) * half;
    let off = h * half / T::lit(3.0).sqrt();
    let mut quad = [QuadPoint { x: [T::zero(); 2], weight: T::zero(), shape: [T::zero(); 3] }; 3];
    for (k, r) in [mid - off, mid + off].into_iter().enumerate() {
        let s1 = (r - r0) / h;
        quad[k] = QuadPoint {
            x: [r, T::zero()],
            weight: h * half * omega * r.powi(n as i32 - 1),
            shape: [T::one() - s1, s1, T::zero()],
        };
    }
    let grads = [[-T::one() / h, T::zero()], [T::one() / h, T::zero()], [T::zero(); 2]];
    Ok(Cell {
        nodes: [seg[0], seg[1], seg[1]],
        arity: 2,
        volume,
        centroid: [mid, T::zero()],
        grads,
        quad,
        n_quad: 2,
    })
}

/// P1 nodal field on a shared mesh.
#[derive(Debug, Clone)]
pub struct FeFunction<T> {
    mesh: Arc<Mesh<T>>,
    values: Vec<T>,
}

impl<T: Real> FeFunction<T> {
    pub fn zeros(mesh: &Arc<Mesh<T>>) -> Self {
        FeFunction { mesh: Arc::clone(mesh), values: vec![T::zero(); mesh.n_nodes()] }
    }

    pub fn from_values(mesh: &Arc<Mesh<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::invalid(format!(
                "expected {} nodal values, got {}",
                mesh.n_nodes(),
                values.len()
            )));
        }
        Ok(FeFunction { mesh: Arc::clone(mesh), values })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: Fn(&Vec2<T>) -> T>(mesh: &Arc<Mesh<T>>, f: F) -> Self {
        let values = mesh.nodes().iter().map(f).collect();
        FeFunction { mesh: Arc::clone(mesh), values }
    }

    /// Nodal interpolant of `f` with the Dirichlet values forced to zero.
    pub fn interpolate_zero_bc<F: Fn(&Vec2<T>) -> T>(mesh: &Arc<Mesh<T>>, f: F) -> Self {
        let mut u = Self::interpolate(mesh, f);
        for &b in mesh.boundary_nodes() {
            u.values[b] = T::zero();
        }
        u
    }

    /// Field whose free dofs are `dofs` and whose Dirichlet values are zero.
    pub fn from_dofs(mesh: &Arc<Mesh<T>>, dofs: &[T]) -> Self {
        let mut values = vec![T::zero(); mesh.n_nodes()];
        for (d, &n) in mesh.free_nodes().iter().enumerate() {
            values[n] = dofs[d];
        }
        FeFunction { mesh: Arc::clone(mesh), values }
    }

    pub fn dofs(&self) -> Vec<T> {
        self.mesh.free_nodes().iter().map(|&n| self.values[n]).collect()
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn same_mesh(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    pub fn check_same_mesh(&self, other: &Self) -> Result<()> {
        if self.same_mesh(other) {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    /// Nodal composition `x -> f(u(x))`, re-interpolated in P1.
    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Self {
        FeFunction { mesh: Arc::clone(&self.mesh), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<F: Fn(T, T) -> T>(&self, other: &Self, f: F) -> Result<Self> {
        self.check_same_mesh(other)?;
        Ok(FeFunction {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max_i |u_i - v_i|` over all nodes.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        self.check_same_mesh(other)?;
        Ok(self.values.iter().zip(&other.values).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn gradient(&self, cell: usize) -> Vec2<T> {
        self.mesh.cells[cell].gradient(&self.values)
    }

    /// `(sum_cells |grad u|^p vol)^{1/p}`, exact for P1.
    pub fn grad_p_norm(&self, p: T) -> T {
        self.grad_p_integral(p).powf(T::one() / p)
    }

    /// `sum_cells |grad u|^p vol`.
    pub fn grad_p_integral(&self, p: T) -> T {
        self.mesh
            .cells
            .iter()
            .map(|c| {
                let g = c.gradient(&self.values);
                dot(&g, &g).sqrt().powf(p) * c.volume
            })
            .sum()
    }

    /// `(int |u|^q)^{1/q}` by quadrature.
    pub fn lq_norm(&self, q: T) -> T {
        self.integrate_with(|u, _| u.abs().powf(q)).powf(T::one() / q)
    }

    /// `int f(u, x) dx` with `u` evaluated at the quadrature points.
    pub fn integrate_with<F: Fn(T, &Vec2<T>) -> T>(&self, f: F) -> T {
        self.mesh
            .cells
            .iter()
            .map(|c| c.quad().iter().map(|q| q.weight * f(c.value_at(q, &self.values), &q.x)).sum::<T>())
            .sum()
    }

    /// Dump format: one `node value` pair per line.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i} {:.17e}", v.as_f64())?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(mesh: &Arc<Mesh<T>>, r: R) -> Result<Self> {
        let mut values = vec![T::zero(); mesh.n_nodes()];
        let mut seen = vec![false; mesh.n_nodes()];
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() || t[0].starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: ln + 1, msg };
            if t.len() != 2 {
                return Err(err("expected `node value`".into()));
            }
            let i: usize = t[0].parse().map_err(|e| err(format!("{e}")))?;
            let v: f64 = t[1].parse().map_err(|e| err(format!("{e}")))?;
            if i >= values.len() {
                return Err(err(format!("node {i} out of range")));
            }
            values[i] = T::lit(v);
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Parse { line: 0, msg: format!("no value for node {missing}") });
        }
        Ok(FeFunction { mesh: Arc::clone(mesh), values })
    }
}
