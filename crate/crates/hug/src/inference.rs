//! Post-processing of chain traces: contact-probability grids and level
//! sets, k-means with median points, the sequential per-plane k-means that
//! reconciles plane views into full-dimensional sources, Ward hierarchical
//! clustering, cumulative-mean diagnostics and source matching.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{HugError, Result};
use crate::model::{plane_count, plane_pair, PlaneIndex};
use crate::trace::TraceRecord;

/// Coordinates closer than this collapse to the same value after the
/// sequential k-means (cluster centers are shared exactly, so this only has
/// to absorb float noise).
pub const DEDUP_TOL: f64 = 1e-9;

/// A regular grid over the unit square of one projection plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cell_length: f64,
    pub plane: PlaneIndex,
}

impl GridSpec {
    pub fn new(cell_length: f64, plane: PlaneIndex) -> Result<Self> {
        let spec = GridSpec { cell_length, plane };
        spec.cells_per_axis()?;
        Ok(spec)
    }

    /// Number of cells along each axis; the cell length must divide 1.0.
    pub fn cells_per_axis(&self) -> Result<usize> {
        if !(self.cell_length > 0.0 && self.cell_length <= 1.0) {
            return Err(HugError::config(format!(
                "cell length must lie in (0, 1], got {}",
                self.cell_length
            )));
        }
        let cells = 1.0 / self.cell_length;
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(HugError::config(format!(
                "cell length {} does not divide the unit window evenly",
                self.cell_length
            )));
        }
        Ok(cells.round() as usize)
    }
}

/// Per-cell Monte Carlo contact probabilities on one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetGrid {
    pub plane: PlaneIndex,
    pub cells_per_axis: usize,
    pub cell_length: f64,
    /// Row-major over (cell_y, cell_x).
    pub probabilities: Vec<f64>,
    pub realization_count: usize,
}

impl LevelSetGrid {
    pub fn probability(&self, cell_x: usize, cell_y: usize) -> f64 {
        self.probabilities[cell_y * self.cells_per_axis + cell_x]
    }

    /// Dense CSV of cell centers: `cell_x,cell_y,probability`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cell_x,cell_y,probability")?;
        for cy in 0..self.cells_per_axis {
            for cx in 0..self.cells_per_axis {
                let x = (cx as f64 + 0.5) * self.cell_length;
                let y = (cy as f64 + 0.5) * self.cell_length;
                writeln!(out, "{x},{y},{}", self.probability(cx, cy))?;
            }
        }
        Ok(())
    }
}

fn cell_of(coord: f64, cell_length: f64, cells: usize) -> usize {
    ((coord / cell_length) as usize).min(cells - 1)
}

/// Fraction of saved configurations with at least one projected source in
/// each cell.
pub fn contact_probability_grid(
    records: &[TraceRecord],
    spec: &GridSpec,
    dims: usize,
) -> Result<LevelSetGrid> {
    if records.is_empty() {
        return Err(HugError::domain("contact probabilities need a non-empty trace"));
    }
    if spec.plane.zero_based() >= plane_count(dims) {
        return Err(HugError::config(format!(
            "plane {} outside [1, {}]",
            spec.plane.one_based(),
            plane_count(dims)
        )));
    }
    let cells = spec.cells_per_axis()?;
    let pair = plane_pair(dims, spec.plane);
    let mut counts = vec![0u64; cells * cells];
    let mut hit = vec![false; cells * cells];
    for record in records {
        hit.fill(false);
        for source in &record.sources {
            let cx = cell_of(source[pair.0], spec.cell_length, cells);
            let cy = cell_of(source[pair.1], spec.cell_length, cells);
            hit[cy * cells + cx] = true;
        }
        for (c, h) in counts.iter_mut().zip(&hit) {
            *c += *h as u64;
        }
    }
    let n = records.len();
    Ok(LevelSetGrid {
        plane: spec.plane,
        cells_per_axis: cells,
        cell_length: spec.cell_length,
        probabilities: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        realization_count: n,
    })
}

/// Strict superlevel set: cells with contact probability above `lambda`.
pub fn level_set(grid: &LevelSetGrid, lambda: f64) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for cy in 0..grid.cells_per_axis {
        for cx in 0..grid.cells_per_axis {
            if grid.probability(cx, cy) > lambda {
                cells.push((cx, cy));
            }
        }
    }
    cells
}

/// Number of 8-connected components of a cell set.
pub fn component_count(cells: &[(usize, usize)]) -> usize {
    let set: HashSet<(usize, usize)> = cells.iter().copied().collect();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut components = 0;
    for &start in cells {
        if seen.contains(&start) {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen.insert(start);
        while let Some((x, y)) = stack.pop() {
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    let neighbor = (nx as usize, ny as usize);
                    if set.contains(&neighbor) && seen.insert(neighbor) {
                        stack.push(neighbor);
                    }
                }
            }
        }
    }
    components
}

/// Output of one k-means run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Coordinatewise median of each cluster's members.
    pub medians: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn coordinatewise_median(members: &[&Vec<f64>], dims: usize) -> Vec<f64> {
    (0..dims)
        .map(|d| {
            let mut coords: Vec<f64> = members.iter().map(|p| p[d]).collect();
            coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = coords.len() / 2;
            if coords.len() % 2 == 1 {
                coords[mid]
            } else {
                0.5 * (coords[mid - 1] + coords[mid])
            }
        })
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding; converges when assignments
/// stabilize or after 300 iterations. Deterministic given the seed.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterResult> {
    if k == 0 {
        return Err(HugError::domain("k-means needs at least one cluster"));
    }
    if points.len() < k {
        return Err(HugError::domain(format!(
            "k-means with k = {k} needs at least {k} points, found {}",
            points.len()
        )));
    }
    let dims = points[0].len();
    if points.iter().any(|p| p.len() != dims) {
        return Err(HugError::domain("k-means points must share dimensions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // All mass on existing centers (duplicate-heavy input); take the
            // first point that is not already a center.
            points
                .iter()
                .position(|p| centers.iter().all(|c| c != p))
                .unwrap_or(centers.len() % points.len())
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &centers[centers.len() - 1]));
        }
    }

    let mut assignments = vec![0usize; points.len()];
    let mut previous_inertia = f64::INFINITY;
    for _ in 0..300 {
        // Assignment step; ties resolve to the lowest cluster index.
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = squared_distance(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = squared_distance(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            inertia += best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }

        // Update step.
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            } else {
                // Empty cluster: restart it at the point farthest from its
                // current center assignment.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        squared_distance(&points[a], &centers[assignments[a]])
                            .partial_cmp(&squared_distance(
                                &points[b],
                                &centers[assignments[b]],
                            ))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                reseeded = true;
            }
        }
        if !reseeded {
            debug_assert!(
                inertia <= previous_inertia * (1.0 + 1e-9) + 1e-12,
                "k-means objective increased: {previous_inertia} -> {inertia}"
            );
            previous_inertia = inertia;
        } else {
            previous_inertia = f64::INFINITY;
        }
        if !changed && !reseeded {
            break;
        }
    }

    let mut sizes = vec![0usize; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| squared_distance(p, &centers[a]))
        .sum();
    let medians = (0..k)
        .map(|c| {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignments)
                .filter(|&(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                centers[c].clone()
            } else {
                coordinatewise_median(&members, dims)
            }
        })
        .collect();
    Ok(ClusterResult {
        assignments,
        centers,
        medians,
        sizes,
        inertia,
    })
}

/// Plane visitation order for the sequential k-means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneOrder {
    /// Uniform without replacement, seeded.
    Random,
    /// Lexicographic plane order; useful for regression tests.
    Fixed,
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    'outer: for p in points {
        for q in &distinct {
            if p.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() <= DEDUP_TOL) {
                continue 'outer;
            }
        }
        distinct.push(p);
    }
    distinct.len()
}

/// Sequential k-means: visits every projection plane once, clusters the
/// projected sources there and overwrites their plane coordinates with the
/// cluster centers. After all planes the sources collapse onto a small set
/// of distinct vectors, returned with multiplicities.
pub fn sequential_kmeans(
    points: &[Vec<f64>],
    k_per_plane: &[usize],
    dims: usize,
    seed: u64,
    order: PlaneOrder,
) -> Result<Vec<(Vec<f64>, usize)>> {
    let planes = plane_count(dims);
    if k_per_plane.len() != planes {
        return Err(HugError::config(format!(
            "need one cluster count per plane ({planes}), got {}",
            k_per_plane.len()
        )));
    }
    if points.is_empty() {
        return Err(HugError::domain("sequential k-means needs source points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visit: Vec<usize> = (0..planes).collect();
    if order == PlaneOrder::Random {
        for i in (1..visit.len()).rev() {
            visit.swap(i, rng.gen_range(0..=i));
        }
    }
    let mut working: Vec<Vec<f64>> = points.to_vec();
    for &plane in &visit {
        let pair = plane_pair(dims, PlaneIndex::from_zero_based(plane));
        let projected: Vec<Vec<f64>> = working
            .iter()
            .map(|p| vec![p[pair.0], p[pair.1]])
            .collect();
        let k = k_per_plane[plane];
        let distinct = distinct_count(&projected);
        if k > distinct {
            return Err(HugError::domain(format!(
                "plane {}: {k} clusters requested but only {distinct} distinct projections",
                plane + 1
            )));
        }
        let clusters = kmeans(&projected, k, rng.gen())?;
        for (p, &a) in working.iter_mut().zip(&clusters.assignments) {
            p[pair.0] = clusters.centers[a][0];
            p[pair.1] = clusters.centers[a][1];
        }
    }

    // Deduplicate the collapsed sources.
    let mut result: Vec<(Vec<f64>, usize)> = Vec::new();
    'point: for p in working {
        for (q, count) in result.iter_mut() {
            if p.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() <= DEDUP_TOL) {
                *count += 1;
                continue 'point;
            }
        }
        result.push((p, 1));
    }
    result.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(result)
}

/// One merge of the agglomerative clustering: clusters are numbered
/// scipy-style (leaves `0..n`, the t-th merge creates cluster `n + t`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    /// Increase of the total within-cluster variance caused by the merge.
    pub increment: f64,
    /// Number of leaves in the merged cluster.
    pub size: usize,
}

/// Full Ward merge tree with nondecreasing variance increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// CSV export: `cluster_a,cluster_b,increment,size`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cluster_a,cluster_b,increment,size")?;
        for m in &self.merges {
            writeln!(out, "{},{},{},{}", m.cluster_a, m.cluster_b, m.increment, m.size)?;
        }
        Ok(())
    }
}

/// Agglomerative clustering under Ward's criterion via the nearest-neighbor
/// chain algorithm (O(n^2) time). Merge heights are the exact increments of
/// the within-cluster variance, `|A||B|/(|A|+|B|) * ||mean_A - mean_B||^2`.
pub fn ward_dendrogram(points: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(HugError::domain("ward clustering needs at least 2 points"));
    }
    let dims = points[0].len();
    if points.iter().any(|p| p.len() != dims) {
        return Err(HugError::domain("ward points must share dimensions"));
    }

    // Pairwise Ward increments for singletons: half squared distance.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = 0.5 * squared_distance(&points[i], &points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut active: Vec<bool> = vec![true; n];
    let mut size: Vec<f64> = vec![1.0; n];
    let mut chain: Vec<usize> = Vec::new();
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);

    for _ in 0..n - 1 {
        if chain.is_empty() {
            let start = active.iter().position(|&a| a).unwrap();
            chain.push(start);
        }
        loop {
            let current = *chain.last().unwrap();
            // Nearest active neighbor, preferring the previous chain element
            // so reciprocal pairs terminate the walk.
            let prev = if chain.len() >= 2 {
                Some(chain[chain.len() - 2])
            } else {
                None
            };
            let mut nearest = usize::MAX;
            let mut best = f64::INFINITY;
            if let Some(p) = prev {
                nearest = p;
                best = dist[current * n + p];
            }
            for j in 0..n {
                if j != current && active[j] && dist[current * n + j] < best {
                    best = dist[current * n + j];
                    nearest = j;
                }
            }
            if Some(nearest) == prev {
                // Reciprocal nearest neighbors: merge.
                let a = chain.pop().unwrap();
                let b = chain.pop().unwrap();
                raw.push((a.min(b), a.max(b), best));
                let (keep, drop) = (a.min(b), a.max(b));
                let (sa, sb) = (size[keep], size[drop]);
                // Lance-Williams update for Ward increments.
                for j in 0..n {
                    if active[j] && j != keep && j != drop {
                        let sj = size[j];
                        let updated = ((sa + sj) * dist[keep * n + j]
                            + (sb + sj) * dist[drop * n + j]
                            - sj * dist[keep * n + drop])
                            / (sa + sb + sj);
                        dist[keep * n + j] = updated;
                        dist[j * n + keep] = updated;
                    }
                }
                size[keep] = sa + sb;
                active[drop] = false;
                break;
            }
            chain.push(nearest);
        }
    }

    // Sort merges by height (valid for the reducible Ward linkage) and
    // relabel clusters in dendrogram order through a union-find.
    raw.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    let mut parent: Vec<usize> = (0..n).collect();
    let mut label: Vec<usize> = (0..n).collect();
    let mut leaves: Vec<usize> = vec![1; n];
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (t, (a, b, height)) in raw.into_iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let (la, lb) = (label[ra], label[rb]);
        let merged_leaves = leaves[ra] + leaves[rb];
        parent[ra] = rb;
        label[rb] = n + t;
        leaves[rb] = merged_leaves;
        merges.push(Merge {
            cluster_a: la.min(lb),
            cluster_b: la.max(lb),
            increment: height,
            size: merged_leaves,
        });
    }
    Ok(Dendrogram { leaves: n, merges })
}

/// Running means of the four statistics over saved records for one plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStatistics {
    pub g: f64,
    pub n_e: f64,
    pub n: f64,
    pub n_r: f64,
}

pub fn cumulative_means(records: &[TraceRecord], plane: PlaneIndex) -> Result<Vec<MeanStatistics>> {
    if records.is_empty() {
        return Err(HugError::domain("cumulative means need a non-empty trace"));
    }
    let mut sums = [0.0f64; 4];
    let mut series = Vec::with_capacity(records.len());
    for (t, record) in records.iter().enumerate() {
        let stats = record
            .stats_per_plane
            .get(plane.zero_based())
            .copied()
            .flatten()
            .ok_or_else(|| {
                HugError::domain(format!(
                    "record {t} has no statistics for plane {}",
                    plane.one_based()
                ))
            })?;
        sums[0] += stats.g;
        sums[1] += stats.n_e;
        sums[2] += stats.n as f64;
        sums[3] += stats.n_r as f64;
        let count = (t + 1) as f64;
        series.push(MeanStatistics {
            g: sums[0] / count,
            n_e: sums[1] / count,
            n: sums[2] / count,
            n_r: sums[3] / count,
        });
    }
    Ok(series)
}

/// For each candidate cluster count, the fraction of points falling in the
/// `top` most populated clusters.
pub fn cluster_mass_check(
    points: &[Vec<f64>],
    k_candidates: &[usize],
    top: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(k_candidates.len());
    for (i, &k) in k_candidates.iter().enumerate() {
        let clusters = kmeans(points, k, seed.wrapping_add(i as u64))?;
        let mut sizes = clusters.sizes.clone();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let in_top: usize = sizes.iter().take(top).sum();
        out.push((k, in_top as f64 / points.len() as f64));
    }
    Ok(out)
}

/// How to pair detected sources with reference sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchingStrategy {
    /// Minimum total Euclidean distance over all pairings (exact).
    Optimal,
    /// Repeatedly takes the closest unmatched pair.
    Greedy,
}

/// A pairing between proposed and reference sources. When the cardinalities
/// differ, the surplus side is reported unmatched.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// (proposed index, truth index) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_proposed: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
    pub total_distance: f64,
}

pub fn match_sources(
    proposed: &[Vec<f64>],
    truth: &[Vec<f64>],
    strategy: MatchingStrategy,
) -> Result<Matching> {
    if proposed.is_empty() || truth.is_empty() {
        return Err(HugError::domain("matching needs non-empty source sets"));
    }
    let dims = truth[0].len();
    if proposed.iter().chain(truth).any(|p| p.len() != dims) {
        return Err(HugError::domain("matching sources must share dimensions"));
    }
    let cost = |p: usize, t: usize| squared_distance(&proposed[p], &truth[t]).sqrt();
    let pairs = match strategy {
        MatchingStrategy::Greedy => {
            let mut free_p: Vec<usize> = (0..proposed.len()).collect();
            let mut free_t: Vec<usize> = (0..truth.len()).collect();
            let mut pairs = Vec::new();
            while !free_p.is_empty() && !free_t.is_empty() {
                let (&p, &t) = free_p
                    .iter()
                    .flat_map(|p| free_t.iter().map(move |t| (p, t)))
                    .min_by(|a, b| cost(*a.0, *a.1).partial_cmp(&cost(*b.0, *b.1)).unwrap())
                    .unwrap();
                pairs.push((p, t));
                free_p.retain(|&x| x != p);
                free_t.retain(|&x| x != t);
            }
            pairs
        }
        MatchingStrategy::Optimal => {
            // Assignment of the smaller set into the larger by bitmask DP.
            let small_is_proposed = proposed.len() <= truth.len();
            let (s, b) = if small_is_proposed {
                (proposed.len(), truth.len())
            } else {
                (truth.len(), proposed.len())
            };
            if s > 12 {
                return Err(HugError::domain(format!(
                    "optimal matching supports up to 12 sources on the smaller side, got {s}; \
                     use the greedy strategy"
                )));
            }
            let pair_cost = |small_idx: usize, big_idx: usize| {
                if small_is_proposed {
                    cost(small_idx, big_idx)
                } else {
                    cost(big_idx, small_idx)
                }
            };
            let full = 1usize << s;
            let mut dp = vec![f64::INFINITY; full];
            dp[0] = 0.0;
            // choice[i][mask]: whether big item i-1 took a small item, and which.
            let mut choice = vec![usize::MAX; (b + 1) * full];
            for big in 0..b {
                let mut next = vec![f64::INFINITY; full];
                for mask in 0..full {
                    if dp[mask].is_finite() {
                        // big item stays unmatched
                        if dp[mask] < next[mask] {
                            next[mask] = dp[mask];
                            choice[(big + 1) * full + mask] = usize::MAX - 1;
                        }
                        for small in 0..s {
                            if mask & (1 << small) == 0 {
                                let m2 = mask | (1 << small);
                                let c = dp[mask] + pair_cost(small, big);
                                if c < next[m2] {
                                    next[m2] = c;
                                    choice[(big + 1) * full + m2] = small;
                                }
                            }
                        }
                    }
                }
                dp = next;
            }
            let mut pairs = Vec::new();
            let mut mask = full - 1;
            for big in (0..b).rev() {
                let ch = choice[(big + 1) * full + mask];
                if ch != usize::MAX - 1 {
                    debug_assert!(ch < s);
                    pairs.push(if small_is_proposed {
                        (ch, big)
                    } else {
                        (big, ch)
                    });
                    mask &= !(1 << ch);
                }
            }
            debug_assert_eq!(mask, 0, "assignment DP left sources unmatched");
            pairs.sort_unstable();
            pairs
        }
    };
    let total_distance = pairs.iter().map(|&(p, t)| cost(p, t)).sum();
    let matched_p: HashSet<usize> = pairs.iter().map(|&(p, _)| p).collect();
    let matched_t: HashSet<usize> = pairs.iter().map(|&(_, t)| t).collect();
    Ok(Matching {
        pairs,
        unmatched_proposed: (0..proposed.len()).filter(|i| !matched_p.contains(i)).collect(),
        unmatched_truth: (0..truth.len()).filter(|i| !matched_t.contains(i)).collect(),
        total_distance,
    })
}
