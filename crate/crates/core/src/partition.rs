//! Non-overlapping partitions of a mesh into edge-connected subdomains.

use std::collections::VecDeque;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mesh::Mesh;

/// Allowed relative deviation of a subdomain size from the mean.
pub const BALANCE_TOLERANCE: f64 = 0.3;

const GROWTH_ATTEMPTS: usize = 64;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("subdomain count {requested} out of range 1..={max}")]
    CountOutOfRange { requested: usize, max: usize },
    #[error("partition has {found} labels but the mesh has {expected} triangles")]
    CountMismatch { expected: usize, found: usize },
    #[error("subdomain {0} is empty")]
    EmptySubdomain(usize),
    #[error("subdomain {0} is not edge-connected")]
    Disconnected(usize),
    #[error("line {line}: invalid subdomain label {text:?}")]
    Parse { line: usize, text: String },
    #[error("could not grow {requested} balanced connected subdomains")]
    Unbalanced { requested: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Validates labels against `mesh`: every subdomain non-empty and edge-connected.
    pub fn new(mesh: &Mesh, labels: Vec<usize>) -> Result<Self, PartitionError> {
        if labels.len() != mesh.num_triangles() {
            return Err(PartitionError::CountMismatch {
                expected: mesh.num_triangles(),
                found: labels.len(),
            });
        }
        let count = labels.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0usize; count];
        for &l in &labels {
            sizes[l] += 1;
        }
        if let Some(j) = sizes.iter().position(|&s| s == 0) {
            return Err(PartitionError::EmptySubdomain(j));
        }
        let adj = mesh.triangle_adjacency();
        for (j, &size) in sizes.iter().enumerate() {
            if component_size(&adj, &labels, j) != size {
                return Err(PartitionError::Disconnected(j));
            }
        }
        Ok(Self { labels, count })
    }

    /// Labels each triangle by evaluating `f` at its centroid.
    pub fn from_centroids(mesh: &Mesh, f: impl Fn([f64; 2]) -> usize) -> Result<Self, PartitionError> {
        let labels = (0..mesh.num_triangles()).map(|t| f(mesh.centroid(t))).collect();
        Self::new(mesh, labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subdomain_of(&self, triangle: usize) -> usize {
        self.labels[triangle]
    }

    pub fn num_subdomains(&self) -> usize {
        self.count
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn component_size(adj: &[Vec<usize>], labels: &[usize], j: usize) -> usize {
    let Some(start) = labels.iter().position(|&l| l == j) else {
        return 0;
    };
    let mut seen = vec![false; labels.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut n = 0;
    while let Some(t) = queue.pop_front() {
        n += 1;
        for &s in &adj[t] {
            if !seen[s] && labels[s] == j {
                seen[s] = true;
                queue.push_back(s);
            }
        }
    }
    n
}

fn bfs_distances(adj: &[Vec<usize>], sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(t) = queue.pop_front() {
        for &s in &adj[t] {
            if dist[s] == usize::MAX {
                dist[s] = dist[t] + 1;
                queue.push_back(s);
            }
        }
    }
    dist
}

/// Seeds spread by farthest-point sampling from a random first triangle.
fn pick_seeds(adj: &[Vec<usize>], j: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut seeds = vec![rng.random_range(0..adj.len())];
    while seeds.len() < j {
        let dist = bfs_distances(adj, &seeds);
        let far = dist.iter().filter(|&&d| d != usize::MAX).copied().max().unwrap_or(0);
        let candidates: Vec<usize> = (0..adj.len()).filter(|&t| dist[t] == far).collect();
        seeds.push(candidates[rng.random_range(0..candidates.len())]);
    }
    seeds
}

/// Multi-source growth: the currently smallest subdomain with a free neighbour
/// claims one triangle per step, which keeps every subdomain connected.
fn grow(adj: &[Vec<usize>], seeds: &[usize]) -> Vec<usize> {
    let n = adj.len();
    let mut labels = vec![usize::MAX; n];
    let mut sizes = vec![1usize; seeds.len()];
    let mut fronts: Vec<VecDeque<usize>> = Vec::with_capacity(seeds.len());
    for (j, &s) in seeds.iter().enumerate() {
        labels[s] = j;
        fronts.push(adj[s].iter().copied().collect());
    }
    let mut assigned = seeds.len();
    while assigned < n {
        let mut active: Vec<usize> = (0..seeds.len()).filter(|&j| !fronts[j].is_empty()).collect();
        if active.is_empty() {
            // unreachable part of a disconnected mesh
            break;
        }
        active.sort_by_key(|&j| (sizes[j], j));
        let j = active[0];
        while let Some(t) = fronts[j].pop_front() {
            if labels[t] == usize::MAX {
                labels[t] = j;
                sizes[j] += 1;
                assigned += 1;
                fronts[j].extend(adj[t].iter().copied().filter(|&s| labels[s] == usize::MAX));
                break;
            }
        }
    }
    labels
}

fn imbalance(labels: &[usize], j: usize) -> f64 {
    let mut sizes = vec![0usize; j];
    for &l in labels {
        if l == usize::MAX {
            return f64::INFINITY;
        }
        sizes[l] += 1;
    }
    let mean = labels.len() as f64 / j as f64;
    sizes
        .iter()
        .map(|&s| (s as f64 - mean).abs() / mean)
        .fold(0.0, f64::max)
}

/// Deterministic partition into `j` edge-connected subdomains of balanced size.
pub fn build_partition(mesh: &Mesh, j: usize, seed: u64) -> Result<Partition, PartitionError> {
    let n = mesh.num_triangles();
    if j == 0 || j > n {
        return Err(PartitionError::CountOutOfRange { requested: j, max: n });
    }
    let adj = mesh.triangle_adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..GROWTH_ATTEMPTS {
        let seeds = pick_seeds(&adj, j, &mut rng);
        let labels = grow(&adj, &seeds);
        let score = imbalance(&labels, j);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, labels));
        }
        if score <= BALANCE_TOLERANCE {
            break;
        }
    }
    match best {
        Some((score, labels)) if score <= BALANCE_TOLERANCE => Partition::new(mesh, labels),
        _ => Err(PartitionError::Unbalanced { requested: j }),
    }
}

/// Reads one integer label per line (blank lines ignored).
pub fn load_partition<R: BufRead>(reader: R, mesh: &Mesh) -> Result<Partition, PartitionError> {
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let label = text.parse().map_err(|_| PartitionError::Parse {
            line: i + 1,
            text: text.to_string(),
        })?;
        labels.push(label);
    }
    Partition::new(mesh, labels)
}

pub fn load_partition_file(path: &std::path::Path, mesh: &Mesh) -> Result<Partition, PartitionError> {
    let file = std::fs::File::open(path)?;
    load_partition(std::io::BufReader::new(file), mesh)
}

/// Four quadrants around `center`; all four meet at the center.
pub fn quadrants(mesh: &Mesh, center: [f64; 2]) -> Result<Partition, PartitionError> {
    Partition::from_centroids(mesh, |[x, y]| (x > center[0]) as usize + 2 * (y > center[1]) as usize)
}

/// `n` vertical strips of equal width over the mesh's bounding box.
pub fn strips(mesh: &Mesh, n: usize) -> Result<Partition, PartitionError> {
    let (lo, hi) = mesh
        .vertices()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v[0]), hi.max(v[0]))
        });
    let width = (hi - lo) / n as f64;
    Partition::from_centroids(mesh, |[x, _]| (((x - lo) / width) as usize).min(n - 1))
}

/// Inner square `max(|x−c₀|, |y−c₁|) < radius` (label 0) and the surrounding
/// ring (label 1). The interface never touches the outer boundary, so this
/// partition has no cross-points.
pub fn ring(mesh: &Mesh, center: [f64; 2], radius: f64) -> Result<Partition, PartitionError> {
    Partition::from_centroids(mesh, |[x, y]| {
        ((x - center[0]).abs().max((y - center[1]).abs()) >= radius) as usize
    })
}
