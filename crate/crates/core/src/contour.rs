//! Level-set extraction on rectilinear grids (marching squares with linear
//! interpolation along cell edges).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// Scalar field sampled on a rectilinear grid; `values[ix * y.len() + iy]`.
/// `NaN` marks an undefined node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(x: Vec<f64>, y: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), x.len() * y.len(), "field size must be nx*ny");
        Self { x, y, values }
    }

    pub fn from_fn(x: Vec<f64>, y: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = x
            .iter()
            .flat_map(|&xi| y.iter().map(move |&yj| (xi, yj)))
            .map(|(a, b)| f(a, b))
            .collect();
        Self { x, y, values }
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.y.len() + iy]
    }
}

/// Polyline representation of one level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub level: f64,
    /// Ordered `(x, y)` polylines.
    pub polylines: Vec<Vec<(f64, f64)>>,
    /// Connected components of the segment graph.
    pub components: usize,
    /// Grid cells `(ix, iy)` (lower-left node index) containing a segment.
    pub support: Vec<(usize, usize)>,
    /// Nodes lying within half an edge of a level crossing.
    pub near_nodes: Vec<(usize, usize)>,
    /// Cells skipped because a corner is undefined.
    pub skipped_cells: Vec<(usize, usize)>,
    pub empty: bool,
}

impl BoundaryCurve {
    /// All polyline points in order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.polylines.iter().flatten().copied()
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }

    /// CSV with header `polyline,index,<x_name>,<y_name>`.
    pub fn to_csv(&self, x_name: &str, y_name: &str) -> String {
        let mut out = format!("polyline,index,{x_name},{y_name}\n");
        for (p, line) in self.polylines.iter().enumerate() {
            for (i, (x, y)) in line.iter().enumerate() {
                out.push_str(&format!("{p},{i},{},{}\n", fmt_num(*x), fmt_num(*y)));
            }
        }
        out
    }
}

/// Decimal scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Identity of a crossing point, so points shared by neighbouring cells
/// join exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PointKey {
    Vertex(usize, usize),
    /// Edge from `(ix, iy)` to `(ix + 1, iy)`.
    EdgeX(usize, usize),
    /// Edge from `(ix, iy)` to `(ix, iy + 1)`.
    EdgeY(usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    key: PointKey,
    point: (f64, f64),
    near: (usize, usize),
}

fn crossing(field: &ScalarField, level: f64, a: (usize, usize), b: (usize, usize)) -> Option<Crossing> {
    let (va, vb) = (field.at(a.0, a.1), field.at(b.0, b.1));
    if (va > level) == (vb > level) {
        return None;
    }
    let t = (level - va) / (vb - va);
    let pa = (field.x[a.0], field.y[a.1]);
    let pb = (field.x[b.0], field.y[b.1]);
    let key = if t <= 0.0 {
        PointKey::Vertex(a.0, a.1)
    } else if t >= 1.0 {
        PointKey::Vertex(b.0, b.1)
    } else if a.1 == b.1 {
        PointKey::EdgeX(a.0, a.1)
    } else {
        PointKey::EdgeY(a.0, a.1)
    };
    let t = t.clamp(0.0, 1.0);
    Some(Crossing {
        key,
        point: (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1)),
        near: if t <= 0.5 { a } else { b },
    })
}

/// Extracts the `level` set of `field`.
///
/// A node counts as above the level iff its value is strictly greater.
/// Saddle cells are resolved with the cell-centre average.
pub fn extract(field: &ScalarField, level: f64) -> BoundaryCurve {
    let (nx, ny) = (field.x.len(), field.y.len());
    let mut segments: Vec<(Crossing, Crossing)> = Vec::new();
    let mut support = BTreeSet::new();
    let mut skipped = Vec::new();

    for ix in 0..nx.saturating_sub(1) {
        for iy in 0..ny.saturating_sub(1) {
            let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
            if corners.iter().any(|&(i, j)| field.at(i, j).is_nan()) {
                skipped.push((ix, iy));
                continue;
            }
            // edges: bottom, right, top, left
            let e = [
                crossing(field, level, corners[0], corners[1]),
                crossing(field, level, corners[1], corners[2]),
                crossing(field, level, corners[3], corners[2]),
                crossing(field, level, corners[0], corners[3]),
            ];
            let hits: Vec<Crossing> = e.iter().flatten().copied().collect();
            let mut cell_segments = Vec::new();
            match hits.len() {
                2 => cell_segments.push((hits[0], hits[1])),
                4 => {
                    let centre = corners.iter().map(|&(i, j)| field.at(i, j)).sum::<f64>() / 4.0;
                    let c0_above = field.at(ix, iy) > level;
                    if (centre > level) == c0_above {
                        // corners 0 and 2 joined through the centre
                        cell_segments.push((e[0].unwrap(), e[1].unwrap()));
                        cell_segments.push((e[2].unwrap(), e[3].unwrap()));
                    } else {
                        cell_segments.push((e[3].unwrap(), e[0].unwrap()));
                        cell_segments.push((e[1].unwrap(), e[2].unwrap()));
                    }
                }
                _ => {}
            }
            for (p, q) in cell_segments {
                if p.key != q.key {
                    segments.push((p, q));
                    support.insert((ix, iy));
                }
            }
        }
    }

    let mut near_nodes = BTreeSet::new();
    for (p, q) in &segments {
        near_nodes.insert(p.near);
        near_nodes.insert(q.near);
    }

    let (polylines, components) = chain(&segments);
    BoundaryCurve {
        level,
        empty: polylines.is_empty(),
        polylines,
        components,
        support: support.into_iter().collect(),
        near_nodes: near_nodes.into_iter().collect(),
        skipped_cells: skipped,
    }
}

fn chain(segments: &[(Crossing, Crossing)]) -> (Vec<Vec<(f64, f64)>>, usize) {
    let mut incident: HashMap<PointKey, Vec<usize>> = HashMap::new();
    for (s, (p, q)) in segments.iter().enumerate() {
        incident.entry(p.key).or_default().push(s);
        incident.entry(q.key).or_default().push(s);
    }

    // union-find over segments sharing a point
    let mut parent: Vec<usize> = (0..segments.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for segs in incident.values() {
        for w in segs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let components = (0..segments.len())
        .filter(|&i| find(&mut parent, i) == i)
        .count();

    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    // Open chains start at points of odd degree; closed loops afterwards.
    let mut starts: Vec<usize> = (0..segments.len())
        .filter(|&s| {
            let (p, q) = &segments[s];
            incident[&p.key].len() % 2 == 1 || incident[&q.key].len() % 2 == 1
        })
        .collect();
    starts.extend(0..segments.len());

    for s0 in starts {
        if used[s0] {
            continue;
        }
        let (p, q) = segments[s0];
        let (mut tail, mut cur) = if incident[&p.key].len() % 2 == 1 { (p, q) } else if incident[&q.key].len() % 2 == 1 { (q, p) } else { (p, q) };
        used[s0] = true;
        let mut line = vec![tail.point, cur.point];
        loop {
            let next = incident[&cur.key].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (a, b) = segments[s];
            tail = cur;
            cur = if a.key == tail.key { b } else { a };
            line.push(cur.point);
        }
        lines.push(line);
    }
    (lines, components)
}
