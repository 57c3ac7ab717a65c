//! Per-slot constellation graphs with intra-plane and inter-plane edge sets.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, TrafficError};
use crate::orbital::{dot, ecef_to_geodetic, norm, EphemerisRecord, Vec3, OMEGA_EARTH};

pub const GRAPH_HEADER: &str = "src,dst,type";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// In-plane rings plus nearest neighbour in each adjacent plane.
    Plane,
    /// k nearest sub-satellite points, typed by plane membership.
    #[default]
    Knn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub mode: GraphMode,
    pub k: usize,
    /// deg
    pub raan_tol: f64,
    /// deg
    pub inc_tol: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            mode: GraphMode::Knn,
            k: 4,
            raan_tol: 2.0,
            inc_tol: 0.5,
        }
    }
}

/// Directed edges are `(i, j)`: node `j` is a neighbour of node `i`. Both
/// sets are symmetric, sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstellationGraph {
    pub slot: usize,
    pub nodes: Vec<u32>,
    pub plane: Vec<usize>,
    pub intra: Vec<(usize, usize)>,
    pub inter: Vec<(usize, usize)>,
}

impl ConstellationGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.plane.len() != n {
            return Err(TrafficError::Graph(format!(
                "{} plane ids for {n} nodes",
                self.plane.len()
            )));
        }
        for &(i, j) in self.intra.iter().chain(&self.inter) {
            if i >= n || j >= n {
                return Err(TrafficError::Graph(format!("edge ({i}, {j}) with {n} nodes")));
            }
            if i == j {
                return Err(TrafficError::Graph(format!("self-loop at node {i}")));
            }
        }
        let a: BTreeSet<_> = self.intra.iter().collect();
        if let Some(e) = self.inter.iter().find(|e| a.contains(e)) {
            return Err(TrafficError::Graph(format!("edge {e:?} is both intra and inter")));
        }
        Ok(())
    }
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Inertial-velocity angular momentum expressed in Earth-fixed axes.
fn angular_momentum(s: &EphemerisRecord) -> Vec3 {
    let r = s.position;
    let v = [
        s.velocity[0] - OMEGA_EARTH * r[1],
        s.velocity[1] + OMEGA_EARTH * r[0],
        s.velocity[2],
    ];
    cross(&r, &v)
}

/// `(longitude of the ascending node in Earth-fixed axes, inclination)`, deg.
/// Node longitudes of co-temporal states differ by exactly their RAAN
/// difference.
pub fn orbit_plane(s: &EphemerisRecord) -> (f64, f64) {
    let h = angular_momentum(s);
    let inc = (h[2] / norm(&h)).clamp(-1.0, 1.0).acos().to_degrees();
    let node = h[0].atan2(-h[1]).to_degrees().rem_euclid(360.0);
    (node, inc)
}

/// Angle from the ascending node to the position, deg in [0, 360).
pub fn argument_of_latitude(s: &EphemerisRecord) -> f64 {
    let h = angular_momentum(s);
    let hn = norm(&h);
    let h_hat = [h[0] / hn, h[1] / hn, h[2] / hn];
    let n = cross(&[0.0, 0.0, 1.0], &h_hat);
    let n = if norm(&n) > 1e-12 {
        let m = norm(&n);
        [n[0] / m, n[1] / m, n[2] / m]
    } else {
        [1.0, 0.0, 0.0]
    };
    let m = cross(&h_hat, &n);
    dot(&s.position, &m)
        .atan2(dot(&s.position, &n))
        .to_degrees()
        .rem_euclid(360.0)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    ((a - b + 180.0).rem_euclid(360.0) - 180.0).abs()
}

/// Greedy clustering on `(node, inclination)`: a satellite joins the first
/// plane whose founding member lies within both tolerances. Ids follow
/// order of first appearance.
pub fn cluster_planes(states: &[EphemerisRecord], raan_tol: f64, inc_tol: f64) -> Vec<usize> {
    let mut founders: Vec<(f64, f64)> = Vec::new();
    states
        .iter()
        .map(|s| {
            let (node, inc) = orbit_plane(s);
            match founders
                .iter()
                .position(|&(n0, i0)| angle_diff(node, n0) < raan_tol && (inc - i0).abs() < inc_tol)
            {
                Some(p) => p,
                None => {
                    founders.push((node, inc));
                    founders.len() - 1
                }
            }
        })
        .collect()
}

fn unit_ground(s: &EphemerisRecord) -> Vec3 {
    let g = ecef_to_geodetic(&s.position);
    let (sp, cp) = g.lat.to_radians().sin_cos();
    let (sl, cl) = g.lon.to_radians().sin_cos();
    [cp * cl, cp * sl, sp]
}

fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// For each node, the `k` nearest others by chord distance between unit
/// vectors of the sub-satellite `(lat, lon)`; ties go to the lower index.
pub fn knn_neighbors(states: &[EphemerisRecord], k: usize) -> Vec<Vec<usize>> {
    let units: Vec<Vec3> = states.iter().map(unit_ground).collect();
    (0..units.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..units.len())
                .filter(|&j| j != i)
                .map(|j| (dist2(&units[i], &units[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

fn symmetric(edges: BTreeSet<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut all = edges.clone();
    all.extend(edges.into_iter().map(|(i, j)| (j, i)));
    all.into_iter().collect()
}

pub fn build_graph(states: &[EphemerisRecord], slot: usize, cfg: &GraphConfig) -> Result<ConstellationGraph> {
    if states.len() < 2 {
        return Err(TrafficError::Graph(format!(
            "{} satellites, need at least 2",
            states.len()
        )));
    }
    if cfg.k == 0 {
        return Err(TrafficError::Config("k must be at least 1".into()));
    }
    let plane = cluster_planes(states, cfg.raan_tol, cfg.inc_tol);
    let mut intra = BTreeSet::new();
    let mut inter = BTreeSet::new();
    match cfg.mode {
        GraphMode::Knn => {
            for (i, nbrs) in knn_neighbors(states, cfg.k).into_iter().enumerate() {
                for j in nbrs {
                    if plane[i] == plane[j] {
                        intra.insert((i, j));
                    } else {
                        inter.insert((i, j));
                    }
                }
            }
        }
        GraphMode::Plane => {
            let n_planes = plane.iter().max().map_or(0, |p| p + 1);
            let members: Vec<Vec<usize>> = (0..n_planes)
                .map(|p| (0..states.len()).filter(|&i| plane[i] == p).collect())
                .collect();
            for m in &members {
                let mut ring: Vec<(f64, usize)> = m.iter().map(|&i| (argument_of_latitude(&states[i]), i)).collect();
                ring.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let len = ring.len();
                if len >= 2 {
                    for q in 0..len {
                        let (i, j) = (ring[q].1, ring[(q + 1) % len].1);
                        if i != j {
                            intra.insert((i, j));
                        }
                    }
                }
            }
            if n_planes < 2 {
                log::info!("slot {slot}: single orbital plane, no inter-plane edges");
            }
            let mut order: Vec<(f64, usize)> = members
                .iter()
                .enumerate()
                .map(|(p, m)| (orbit_plane(&states[m[0]]).0, p))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for q in 0..n_planes {
                let p = order[q].1;
                let adjacent: BTreeSet<usize> = [(q + 1) % n_planes, (q + n_planes - 1) % n_planes]
                    .into_iter()
                    .map(|r| order[r].1)
                    .filter(|&r| r != p)
                    .collect();
                for &i in &members[p] {
                    for &a in &adjacent {
                        let nearest = members[a]
                            .iter()
                            .map(|&j| (dist2(&states[i].position, &states[j].position), j))
                            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                        if let Some((_, j)) = nearest {
                            inter.insert((i, j));
                        }
                    }
                }
            }
        }
    }
    let g = ConstellationGraph {
        slot,
        nodes: states.iter().map(|s| s.sat_id).collect(),
        plane,
        intra: symmetric(intra),
        inter: symmetric(inter),
    };
    g.validate()?;
    Ok(g)
}

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    src: u32,
    dst: u32,
    #[serde(rename = "type")]
    kind: String,
}

/// One row per directed edge `src → dst` (sat ids); `a` intra, `e` inter.
pub fn write_graph(path: &Path, g: &ConstellationGraph) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (edges, kind) in [(&g.intra, "a"), (&g.inter, "e")] {
        for &(i, j) in edges {
            w.serialize(EdgeRow {
                src: g.nodes[j],
                dst: g.nodes[i],
                kind: kind.into(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path, slot: usize, nodes: &[u32], plane: &[usize]) -> Result<ConstellationGraph> {
    let index = |id: u32| {
        nodes
            .iter()
            .position(|&n| n == id)
            .ok_or_else(|| TrafficError::Graph(format!("{}: unknown satellite {id}", path.display())))
    };
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let row: EdgeRow = row?;
        let e = (index(row.dst)?, index(row.src)?);
        match row.kind.as_str() {
            "a" => intra.push(e),
            "e" => inter.push(e),
            k => return Err(TrafficError::Graph(format!("{}: edge type {k:?}", path.display()))),
        }
    }
    let g = ConstellationGraph {
        slot,
        nodes: nodes.to_vec(),
        plane: plane.to_vec(),
        intra,
        inter,
    };
    g.validate()?;
    Ok(g)
}
