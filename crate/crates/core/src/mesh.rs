//! Simplicial meshes: uniform intervals and hexagon-refined disks.
//!
//! Text format (indices 0-based, floats with 17 significant digits):
//!
//! ```text
//! dim 2
//! nodes 7
//! 0.0 0.0
//! ...
//! cells 6
//! 0 1 2
//! ...
//! boundary 6
//! 1 2 1          (i j marker in 2-D, i marker in 1-D)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    InvalidParameters(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cell {cell} has non-positive area")]
    NonPositiveArea { cell: usize },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryFacet {
    /// One node in 1-D, two in 2-D.
    pub nodes: Vec<usize>,
    pub marker: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    boundary: Vec<BoundaryFacet>,
}

impl Mesh {
    /// Builds a mesh and checks its invariants.
    pub fn new(
        dim: usize,
        nodes: Vec<[f64; 2]>,
        cells: Vec<Vec<usize>>,
        boundary: Vec<BoundaryFacet>,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            dim,
            nodes,
            cells,
            boundary,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn boundary(&self) -> &[BoundaryFacet] {
        &self.boundary
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Signed measure of a cell: length in 1-D, area in 2-D.
    pub fn cell_measure(&self, c: usize) -> f64 {
        let v = &self.cells[c];
        if self.dim == 1 {
            self.nodes[v[1]][0] - self.nodes[v[0]][0]
        } else {
            signed_area(self.nodes[v[0]], self.nodes[v[1]], self.nodes[v[2]])
        }
    }

    /// Total measure of the domain.
    pub fn measure(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_measure(c)).sum()
    }

    fn validate(&self) -> Result<(), MeshError> {
        if self.dim != 1 && self.dim != 2 {
            return Err(MeshError::Invalid(format!("dimension {}", self.dim)));
        }
        let per_cell = self.dim + 1;
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.len() != per_cell {
                return Err(MeshError::Invalid(format!(
                    "cell {c} has {} nodes, expected {per_cell}",
                    cell.len()
                )));
            }
            if let Some(&bad) = cell.iter().find(|&&i| i >= self.nodes.len()) {
                return Err(MeshError::Invalid(format!("cell {c} references node {bad}")));
            }
            if !(self.cell_measure(c) > 0.0) {
                return Err(MeshError::NonPositiveArea { cell: c });
            }
        }
        let facets = self.exterior_facets();
        for (k, f) in self.boundary.iter().enumerate() {
            if f.nodes.len() != self.dim {
                return Err(MeshError::Invalid(format!(
                    "boundary facet {k} has {} nodes",
                    f.nodes.len()
                )));
            }
            if f.nodes.iter().any(|&i| i >= self.nodes.len()) {
                return Err(MeshError::Invalid(format!("boundary facet {k} out of range")));
            }
            if !facets.contains_key(&facet_key(&f.nodes)) {
                return Err(MeshError::Invalid(format!(
                    "boundary facet {k} {:?} is not an exterior facet of exactly one cell",
                    f.nodes
                )));
            }
        }
        Ok(())
    }

    /// Facets incident to exactly one cell, keyed by sorted node indices.
    pub fn exterior_facets(&self) -> HashMap<Vec<usize>, usize> {
        let mut count: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for (c, cell) in self.cells.iter().enumerate() {
            let facets: Vec<Vec<usize>> = if self.dim == 1 {
                vec![vec![cell[0]], vec![cell[1]]]
            } else {
                vec![
                    vec![cell[0], cell[1]],
                    vec![cell[1], cell[2]],
                    vec![cell[2], cell[0]],
                ]
            };
            for f in facets {
                let e = count.entry(facet_key(&f)).or_insert((0, c));
                e.0 += 1;
            }
        }
        count
            .into_iter()
            .filter(|(_, (n, _))| *n == 1)
            .map(|(k, (_, c))| (k, c))
            .collect()
    }

    /// Number of distinct edges in a 2-D mesh.
    pub fn n_edges(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for cell in &self.cells {
            for k in 0..cell.len() {
                let (a, b) = (cell[k], cell[(k + 1) % cell.len()]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        self.cells
            .iter()
            .map(|cell| {
                let mut d: f64 = 0.0;
                for i in 0..cell.len() {
                    for j in i + 1..cell.len() {
                        d = d.max(dist(self.nodes[cell[i]], self.nodes[cell[j]]));
                    }
                }
                d
            })
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.16e} {:.16e}", p[0], p[1]);
        }
        let _ = writeln!(s, "cells {}", self.cells.len());
        for c in &self.cells {
            let line: Vec<String> = c.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        let _ = writeln!(s, "boundary {}", self.boundary.len());
        for f in &self.boundary {
            for i in &f.nodes {
                let _ = write!(s, "{i} ");
            }
            let _ = writeln!(s, "{}", f.marker);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut last_line = 0;
        let mut next = |what: &str| -> Result<(usize, &str), MeshError> {
            match lines.next() {
                Some((n, l)) => {
                    last_line = n;
                    Ok((n, l))
                }
                None => Err(MeshError::Parse {
                    line: last_line + 1,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let header = |line: (usize, &str), key: &str| -> Result<usize, MeshError> {
            let (n, l) = line;
            let mut it = l.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                (Some(k), Some(Ok(v)), None) if k == key => Ok(v),
                _ => Err(MeshError::Parse {
                    line: n,
                    message: format!("expected '{key} <count>'"),
                }),
            }
        };
        let dim = header(next("dim")?, "dim")?;
        if dim != 1 && dim != 2 {
            return Err(MeshError::Parse {
                line: 1,
                message: format!("dimension must be 1 or 2, got {dim}"),
            });
        }
        let n_nodes = header(next("nodes")?, "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (n, l) = next("node coordinates")?;
            let v = parse_fields::<f64>(n, l, 2)?;
            nodes.push([v[0], v[1]]);
        }
        let n_cells = header(next("cells")?, "cells")?;
        let mut cells = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let (n, l) = next("cell")?;
            cells.push(parse_fields::<usize>(n, l, dim + 1)?);
        }
        let n_bnd = header(next("boundary")?, "boundary")?;
        let mut boundary = Vec::with_capacity(n_bnd);
        for _ in 0..n_bnd {
            let (n, l) = next("boundary facet")?;
            let v = parse_fields::<i64>(n, l, dim + 1)?;
            let nodes = v[..dim]
                .iter()
                .map(|&i| {
                    usize::try_from(i).map_err(|_| MeshError::Parse {
                        line: n,
                        message: "negative node index".into(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            boundary.push(BoundaryFacet {
                nodes,
                marker: v[dim] as i32,
            });
        }
        if let Ok((n, _)) = next("") {
            return Err(MeshError::Parse {
                line: n,
                message: "trailing content".into(),
            });
        }
        Mesh::new(dim, nodes, cells, boundary)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn parse_fields<T: std::str::FromStr>(
    line: usize,
    text: &str,
    count: usize,
) -> Result<Vec<T>, MeshError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != count {
        return Err(MeshError::Parse {
            line,
            message: format!("expected {count} fields, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<T>().map_err(|_| MeshError::Parse {
                line,
                message: format!("cannot parse '{f}'"),
            })
        })
        .collect()
}

fn facet_key(nodes: &[usize]) -> Vec<usize> {
    let mut k = nodes.to_vec();
    k.sort_unstable();
    k
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Uniform partition of `[a, b]`; left end marker 1, right end marker 2.
pub fn interval_mesh(a: f64, b: f64, n_cells: usize) -> Result<Mesh, MeshError> {
    if !(a < b) || n_cells < 2 {
        return Err(MeshError::InvalidParameters(format!(
            "interval [{a}, {b}] with {n_cells} cells (need a < b, at least 2 cells)"
        )));
    }
    let h = (b - a) / n_cells as f64;
    let mut nodes: Vec<[f64; 2]> = (0..=n_cells).map(|i| [a + i as f64 * h, 0.0]).collect();
    nodes[n_cells][0] = b;
    let cells = (0..n_cells).map(|i| vec![i, i + 1]).collect();
    let boundary = vec![
        BoundaryFacet {
            nodes: vec![0],
            marker: 1,
        },
        BoundaryFacet {
            nodes: vec![n_cells],
            marker: 2,
        },
    ];
    Mesh::new(1, nodes, cells, boundary)
}

/// Disk of the given radius: a six-triangle hexagon fan refined `refine`
/// times by red refinement, with boundary nodes projected onto the circle.
/// All boundary facets carry marker 1.
pub fn disk_mesh(radius: f64, refine: usize) -> Result<Mesh, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::InvalidParameters(format!("radius {radius}")));
    }
    let mut nodes = vec![[0.0, 0.0]];
    for k in 0..6 {
        let th = std::f64::consts::PI / 3.0 * k as f64;
        nodes.push([radius * th.cos(), radius * th.sin()]);
    }
    let mut cells: Vec<[usize; 3]> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
    let mut boundary: Vec<[usize; 2]> = (0..6).map(|k| [1 + k, 1 + (k + 1) % 6]).collect();

    for _ in 0..refine {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut new_cells = Vec::with_capacity(4 * cells.len());
        for &[a, b, c] in &cells {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            new_cells.push([a, ab, ca]);
            new_cells.push([ab, b, bc]);
            new_cells.push([ca, bc, c]);
            new_cells.push([ab, bc, ca]);
        }
        let mut new_boundary = Vec::with_capacity(2 * boundary.len());
        for &[a, b] in &boundary {
            let m = mid(a, b, &mut nodes);
            let p = nodes[m];
            let r = p[0].hypot(p[1]);
            nodes[m] = [p[0] * radius / r, p[1] * radius / r];
            new_boundary.push([a, m]);
            new_boundary.push([m, b]);
        }
        cells = new_cells;
        boundary = new_boundary;
    }

    Mesh::new(
        2,
        nodes,
        cells.into_iter().map(|c| c.to_vec()).collect(),
        boundary
            .into_iter()
            .map(|f| BoundaryFacet {
                nodes: f.to_vec(),
                marker: 1,
            })
            .collect(),
    )
}
