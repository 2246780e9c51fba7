//! Hug model: sufficient statistics, data and interaction energies, the
//! Gaussian weight prior and its tempered sampling.
//!
//! Energies live on two-dimensional projection planes. For a source pattern
//! `s` and normalized data `d` on plane `v`, the data energy weighs the
//! hull-area ratio statistic `g` and the unexplained fraction `n_e`; the
//! interaction energy weighs the source count `n` and the number of close
//! pairs `n_r`. Only energy differences are ever needed, so the intractable
//! normalizing constant never appears.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{HugError, Result};
use crate::geometry::{self, Point2};

/// Lebesgue volume of the normalized observation window `W = [0,1]^K`.
pub const WINDOW_VOLUME: f64 = 1.0;

/// Energy weights `theta1..theta4` plus the interaction radius `r`
/// (normalized units) below which a pair of sources counts as close.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub r: f64,
}

impl ModelParams {
    pub fn with_theta(theta: [f64; 4], r: f64) -> Self {
        ModelParams {
            theta1: theta[0],
            theta2: theta[1],
            theta3: theta[2],
            theta4: theta[3],
            r,
        }
    }

    pub fn theta(&self) -> [f64; 4] {
        [self.theta1, self.theta2, self.theta3, self.theta4]
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.theta();
        if t.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(HugError::config(format!(
                "energy weights must be finite and nonnegative, got {t:?}"
            )));
        }
        if !self.r.is_finite() || self.r <= 0.0 {
            return Err(HugError::config(format!(
                "interaction radius must be positive, got {}",
                self.r
            )));
        }
        Ok(())
    }
}

/// Independent Gaussian priors on the four energy weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPrior {
    pub means: [f64; 4],
    pub variances: [f64; 4],
}

impl Default for ThetaPrior {
    fn default() -> Self {
        ThetaPrior {
            means: [11.25, 250.0, 0.25, 1.0],
            variances: [1.0, 10.0, 0.01, 0.01],
        }
    }
}

impl ThetaPrior {
    pub fn validate(&self) -> Result<()> {
        if self.means.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(HugError::config(format!(
                "prior means must be positive, got {:?}",
                self.means
            )));
        }
        if self.variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(HugError::config(format!(
                "prior variances must be positive, got {:?}",
                self.variances
            )));
        }
        Ok(())
    }
}

/// One of the `L = K(K-1)/2` coordinate planes, identified by a zero-based
/// index over the lexicographically ordered dimension pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaneIndex(usize);

impl PlaneIndex {
    pub fn from_zero_based(index: usize) -> Self {
        PlaneIndex(index)
    }

    /// Parses the plane selector `v` in `[1, L]`.
    pub fn from_one_based(v: usize, planes: usize) -> Result<Self> {
        if v == 0 || v > planes {
            return Err(HugError::config(format!(
                "plane selector {v} outside [1, {planes}]"
            )));
        }
        Ok(PlaneIndex(v - 1))
    }

    pub fn zero_based(self) -> usize {
        self.0
    }

    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

/// Number of distinct coordinate planes in a `dims`-dimensional space.
pub fn plane_count(dims: usize) -> usize {
    dims * (dims.saturating_sub(1)) / 2
}

/// The (lower, higher) dimension pair a plane projects onto.
pub fn plane_pair(dims: usize, plane: PlaneIndex) -> (usize, usize) {
    let mut index = plane.zero_based();
    for i in 0..dims {
        let row = dims - i - 1;
        if index < row {
            return (i, i + 1 + index);
        }
        index -= row;
    }
    panic!("plane index {} out of range for {} dims", plane.0, dims);
}

/// An unordered pattern of candidate sources inside the unit window.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    points: Vec<Vec<f64>>,
}

impl SourceConfig {
    pub fn new(points: Vec<Vec<f64>>, dims: usize) -> Result<Self> {
        for p in &points {
            if p.len() != dims {
                return Err(HugError::domain(format!(
                    "source has {} coordinates, expected {dims}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
                return Err(HugError::domain(format!(
                    "source coordinates must lie in [0,1], got {p:?}"
                )));
            }
        }
        Ok(SourceConfig { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn flatten(&self, dims: usize) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.points.len() * dims);
        for p in &self.points {
            flat.extend_from_slice(p);
        }
        flat
    }
}

/// The four sufficient statistics of a source pattern on one plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HugStatistics {
    /// Hull-area ratio statistic `|area(hull(s)) / area(hull(d)) - 1|`.
    pub g: f64,
    /// Fraction of data points not explained by the source hull.
    pub n_e: f64,
    /// Number of sources.
    pub n: usize,
    /// Number of source pairs within planar distance `r`.
    pub n_r: usize,
}

struct PlaneData {
    pair: (usize, usize),
    // Projected data as flat coordinate arrays for the containment count.
    xs: Vec<f64>,
    ys: Vec<f64>,
    hull_area: f64,
}

/// Per-plane cache of the projected data, its convex hull and hull area.
/// The data never changes during a run, so this is built once.
pub struct PlaneTable {
    dims: usize,
    samples: usize,
    names: Vec<String>,
    planes: Vec<PlaneData>,
}

impl PlaneTable {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let dims = dataset.dims();
        if dims < 2 {
            return Err(HugError::data(format!(
                "need at least 2 dimensions for projection planes, found {dims}"
            )));
        }
        let mut planes = Vec::with_capacity(plane_count(dims));
        for index in 0..plane_count(dims) {
            let pair = plane_pair(dims, PlaneIndex(index));
            let projected: Vec<Point2> = dataset
                .normalized
                .iter()
                .map(|row| Point2::new(row[pair.0], row[pair.1]))
                .collect();
            let mut sorted = projected.clone();
            let mut hull = Vec::new();
            geometry::hull_into(&mut sorted, &mut hull);
            let hull_area = geometry::area_of(&hull);
            planes.push(PlaneData {
                pair,
                xs: projected.iter().map(|p| p.x).collect(),
                ys: projected.iter().map(|p| p.y).collect(),
                hull_area,
            });
        }
        Ok(PlaneTable {
            dims,
            samples: dataset.len(),
            names: dataset.names.clone(),
            planes,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    pub fn plane_count(&self) -> usize {
        self.planes.len()
    }

    pub fn pair(&self, plane: PlaneIndex) -> (usize, usize) {
        self.planes[plane.zero_based()].pair
    }

    /// Cached area of the projected data hull; degenerate planes error.
    pub fn data_hull_area(&self, plane: PlaneIndex) -> Result<f64> {
        let p = &self.planes[plane.zero_based()];
        if p.hull_area > 0.0 {
            Ok(p.hull_area)
        } else {
            Err(HugError::domain(format!(
                "projected data hull on plane {} (dims {}, {}) has zero area; \
                 drop that plane or rescale the data",
                plane.one_based(),
                p.pair.0 + 1,
                p.pair.1 + 1
            )))
        }
    }

    /// Planes whose projected data hull has positive area.
    pub fn active_planes(&self) -> Vec<PlaneIndex> {
        (0..self.planes.len())
            .filter(|&i| self.planes[i].hull_area > 0.0)
            .map(PlaneIndex)
            .collect()
    }

    pub fn is_active(&self, plane: PlaneIndex) -> bool {
        self.planes[plane.zero_based()].hull_area > 0.0
    }
}

/// Reusable buffers for statistic evaluation in sampling loops.
#[derive(Default)]
pub(crate) struct StatScratch {
    proj: Vec<Point2>,
    hull: Vec<Point2>,
    margins: Vec<f64>,
}

/// Containment count of the cached data projection against a convex ccw
/// hull, restructured for vectorization: every edge contributes a linear
/// form, a point is inside when its minimum over edges clears the boundary
/// tolerance. Agrees with [`geometry::count_inside_slice`] up to ulp-level
/// rearrangement, absorbed by the shared tolerance.
fn count_inside_linear(hull: &[Point2], xs: &[f64], ys: &[f64], margins: &mut Vec<f64>) -> usize {
    if hull.len() < 3 {
        let points: Vec<Point2> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| Point2::new(x, y))
            .collect();
        return geometry::count_inside_slice(hull, &points);
    }
    margins.clear();
    margins.resize(xs.len(), f64::INFINITY);
    let mut prev = hull[hull.len() - 1];
    for &v in hull {
        let ex = v.x - prev.x;
        let ey = v.y - prev.y;
        let base = ex * prev.y - ey * prev.x;
        for (m, (&x, &y)) in margins.iter_mut().zip(xs.iter().zip(ys)) {
            let cross = ex * y - ey * x - base;
            *m = m.min(cross);
        }
        prev = v;
    }
    margins
        .iter()
        .filter(|&&m| m >= -geometry::BOUNDARY_TOL)
        .count()
}

/// Statistics of a flat row-major `n x dims` source buffer on one plane.
pub(crate) fn stats_flat(
    flat: &[f64],
    dims: usize,
    table: &PlaneTable,
    plane: PlaneIndex,
    r: f64,
    scratch: &mut StatScratch,
) -> HugStatistics {
    let data = &table.planes[plane.zero_based()];
    debug_assert!(data.hull_area > 0.0, "statistics on a degenerate plane");
    let (dx, dy) = data.pair;
    scratch.proj.clear();
    for row in flat.chunks_exact(dims) {
        scratch.proj.push(Point2::new(row[dx], row[dy]));
    }
    let n = scratch.proj.len();

    // Close pairs before hull construction (hull_into sorts and dedups).
    let r2 = r * r;
    let mut n_r = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let ddx = scratch.proj[i].x - scratch.proj[j].x;
            let ddy = scratch.proj[i].y - scratch.proj[j].y;
            if ddx * ddx + ddy * ddy <= r2 {
                n_r += 1;
            }
        }
    }

    geometry::hull_into(&mut scratch.proj, &mut scratch.hull);
    let source_area = geometry::area_of(&scratch.hull);
    let g = (source_area / data.hull_area - 1.0).abs();
    let n_expl = count_inside_linear(&scratch.hull, &data.xs, &data.ys, &mut scratch.margins);
    let n_e = 1.0 - n_expl as f64 / table.samples as f64;

    HugStatistics { g, n_e, n, n_r }
}

/// Sufficient statistics of a source pattern against the cached data
/// projections on plane `v`.
pub fn compute_statistics(
    sources: &SourceConfig,
    table: &PlaneTable,
    plane: PlaneIndex,
    params: &ModelParams,
) -> Result<HugStatistics> {
    if plane.zero_based() >= table.plane_count() {
        return Err(HugError::config(format!(
            "plane {} outside [1, {}]",
            plane.one_based(),
            table.plane_count()
        )));
    }
    table.data_hull_area(plane)?;
    let flat = sources.flatten(table.dims());
    let mut scratch = StatScratch::default();
    Ok(stats_flat(
        &flat,
        table.dims(),
        table,
        plane,
        params.r,
        &mut scratch,
    ))
}

/// Data term `theta1 * g + theta2 * n_e`.
pub fn data_energy(stats: &HugStatistics, params: &ModelParams) -> f64 {
    params.theta1 * stats.g + params.theta2 * stats.n_e
}

/// Interaction term `theta3 * n + theta4 * n_r`.
pub fn interaction_energy(stats: &HugStatistics, params: &ModelParams) -> f64 {
    params.theta3 * stats.n as f64 + params.theta4 * stats.n_r as f64
}

/// Total energy of precomputed statistics.
pub fn energy(stats: &HugStatistics, params: &ModelParams) -> f64 {
    data_energy(stats, params) + interaction_energy(stats, params)
}

/// Total energy of a source pattern on plane `v`.
pub fn total_energy(
    sources: &SourceConfig,
    table: &PlaneTable,
    plane: PlaneIndex,
    params: &ModelParams,
) -> Result<f64> {
    let stats = compute_statistics(sources, table, plane, params)?;
    Ok(energy(&stats, params))
}

/// Log of the (unnormalized) density ratio `p(s_new) / p(s_old)` on plane
/// `v`: the normalizing constant cancels, leaving `U(s_old) - U(s_new)`.
pub fn log_density_ratio(
    s_new: &SourceConfig,
    s_old: &SourceConfig,
    table: &PlaneTable,
    plane: PlaneIndex,
    params: &ModelParams,
) -> Result<f64> {
    Ok(total_energy(s_old, table, plane, params)? - total_energy(s_new, table, plane, params)?)
}

/// Log-density of the weights under the independent Gaussian prior.
pub fn theta_prior_logpdf(params: &ModelParams, prior: &ThetaPrior) -> f64 {
    params
        .theta()
        .iter()
        .zip(prior.means.iter().zip(&prior.variances))
        .map(|(&x, (&mu, &var))| {
            let z = (x - mu) * (x - mu) / var;
            -0.5 * z - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
        })
        .sum()
}

/// Draws weights from the tempered prior `[p(theta)]^{1/T}`.
///
/// For a Gaussian this is the same Gaussian with variance scaled by `T`;
/// nonpositive coordinates are rejected and redrawn so the weights stay
/// strictly positive.
pub fn sample_theta_tempered<R: Rng + ?Sized>(
    prior: &ThetaPrior,
    temperature: f64,
    r: f64,
    rng: &mut R,
) -> ModelParams {
    debug_assert!(temperature > 0.0);
    let mut theta = [0.0; 4];
    for i in 0..4 {
        let sigma = (prior.variances[i] * temperature).sqrt();
        let normal = Normal::new(prior.means[i], sigma).expect("validated prior");
        theta[i] = loop {
            let x = normal.sample(rng);
            if x > 0.0 {
                break x;
            }
        };
    }
    ModelParams::with_theta(theta, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A dataset already in normalized coordinates (identity window).
    fn dataset_from_normalized(points: Vec<Vec<f64>>) -> Dataset {
        let k = points[0].len();
        Dataset {
            names: (0..k).map(|i| format!("p{i}")).collect(),
            raw: points.clone(),
            spec: crate::data::NormalizationSpec {
                lo: vec![0.0; k],
                hi: vec![1.0; k],
            },
            normalized: points,
        }
    }

    fn params(theta: [f64; 4]) -> ModelParams {
        ModelParams::with_theta(theta, 0.01)
    }

    fn square_dataset() -> Dataset {
        dataset_from_normalized(vec![
            vec![0.4, 0.4],
            vec![0.6, 0.4],
            vec![0.6, 0.6],
            vec![0.4, 0.6],
            vec![0.5, 0.5],
        ])
    }

    #[test]
    fn plane_pair_enumeration() {
        assert_eq!(plane_count(3), 3);
        assert_eq!(plane_count(5), 10);
        let pairs: Vec<(usize, usize)> = (0..plane_count(4))
            .map(|i| plane_pair(4, PlaneIndex::from_zero_based(i)))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn congruent_hull_gives_zero_statistics() {
        let ds = square_dataset();
        let table = PlaneTable::new(&ds).unwrap();
        let sources = SourceConfig::new(
            vec![
                vec![0.4, 0.4],
                vec![0.6, 0.4],
                vec![0.6, 0.6],
                vec![0.4, 0.6],
            ],
            2,
        )
        .unwrap();
        let stats = compute_statistics(
            &sources,
            &table,
            PlaneIndex::from_zero_based(0),
            &params([1.0; 4]),
        )
        .unwrap();
        assert_eq!(stats.g, 0.0);
        assert_eq!(stats.n_e, 0.0); // boundary points count as explained
        assert_eq!(stats.n, 4);
        assert_eq!(stats.n_r, 0);
    }

    #[test]
    fn doubled_hull_area_gives_g_one() {
        let ds = square_dataset();
        let table = PlaneTable::new(&ds).unwrap();
        // Square rotated 45°: half-diagonal d gives area 2d², so d = 0.2
        // doubles the 0.04 data hull while still enclosing it.
        let c = 0.5;
        let d = 0.2;
        let sources = SourceConfig::new(
            vec![
                vec![c - d, c],
                vec![c, c - d],
                vec![c + d, c],
                vec![c, c + d],
            ],
            2,
        )
        .unwrap();
        let stats = compute_statistics(
            &sources,
            &table,
            PlaneIndex::from_zero_based(0),
            &params([1.0; 4]),
        )
        .unwrap();
        assert!((stats.g - 1.0).abs() < 1e-12, "g = {}", stats.g);
        assert_eq!(stats.n_e, 0.0);
    }

    #[test]
    fn degenerate_data_plane_is_a_domain_error() {
        // All samples collinear in the only plane.
        let ds = dataset_from_normalized(vec![
            vec![0.4, 0.4],
            vec![0.5, 0.5],
            vec![0.6, 0.6],
        ]);
        let table = PlaneTable::new(&ds).unwrap();
        assert!(table.active_planes().is_empty());
        let sources =
            SourceConfig::new(vec![vec![0.1, 0.1], vec![0.9, 0.1], vec![0.5, 0.9]], 2).unwrap();
        assert!(matches!(
            compute_statistics(
                &sources,
                &table,
                PlaneIndex::from_zero_based(0),
                &params([1.0; 4])
            ),
            Err(HugError::Domain(_))
        ));
    }

    #[test]
    fn energies_match_hand_computed_values() {
        let stats = HugStatistics {
            g: 0.2,
            n_e: 0.1,
            n: 4,
            n_r: 0,
        };
        let p = params([11.25, 250.0, 0.25, 1.0]);
        assert!((data_energy(&stats, &p) - 27.25).abs() < 1e-12);
        assert!((interaction_energy(&stats, &p) - 1.0).abs() < 1e-12);

        let stats2 = HugStatistics {
            g: 1.0,
            n_e: 1.0,
            n: 4,
            n_r: 2,
        };
        let unit = params([1.0, 1.0, 0.25, 1.0]);
        assert!((data_energy(&stats2, &unit) - 2.0).abs() < 1e-12);
        assert!((interaction_energy(&stats2, &unit) - 3.0).abs() < 1e-12);

        // Three mutually close sources: n_r = 3 pairs.
        let stats3 = HugStatistics {
            g: 0.0,
            n_e: 0.0,
            n: 3,
            n_r: 3,
        };
        let w = params([0.0, 0.0, 0.7, 1.3]);
        assert!((interaction_energy(&stats3, &w) - (0.7 * 3.0 + 1.3 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn log_density_ratio_of_identical_configs_is_zero() {
        let ds = square_dataset();
        let table = PlaneTable::new(&ds).unwrap();
        let s = SourceConfig::new(
            vec![vec![0.2, 0.2], vec![0.8, 0.2], vec![0.5, 0.9]],
            2,
        )
        .unwrap();
        let p = params([11.25, 250.0, 0.25, 1.0]);
        assert_eq!(
            log_density_ratio(&s, &s, &table, PlaneIndex::from_zero_based(0), &p).unwrap(),
            0.0
        );
    }

    #[test]
    fn isolated_interior_birth_costs_exactly_theta3() {
        let ds = square_dataset();
        let table = PlaneTable::new(&ds).unwrap();
        let old = SourceConfig::new(
            vec![
                vec![0.1, 0.1],
                vec![0.9, 0.1],
                vec![0.9, 0.9],
                vec![0.1, 0.9],
            ],
            2,
        )
        .unwrap();
        // New source deep inside the hull, far from every other source.
        let mut points = old.points().to_vec();
        points.push(vec![0.35, 0.5]);
        let new = SourceConfig::new(points, 2).unwrap();
        let p = params([11.25, 250.0, 0.25, 1.0]);
        let ratio =
            log_density_ratio(&new, &old, &table, PlaneIndex::from_zero_based(0), &p).unwrap();
        assert!((ratio + p.theta3).abs() < 1e-12, "ratio = {ratio}");
    }

    #[test]
    fn statistics_match_independent_oracle_on_synthetic_system() {
        // Gift-wrapping hull + fan containment, written independently of the
        // production monotone-chain path.
        fn oracle_stats(
            sources: &[Vec<f64>],
            data: &[Vec<f64>],
            pair: (usize, usize),
            m: usize,
            r: f64,
        ) -> (f64, f64, usize, usize) {
            let project =
                |rows: &[Vec<f64>]| -> Vec<(f64, f64)> {
                    rows.iter().map(|p| (p[pair.0], p[pair.1])).collect()
                };
            fn jarvis(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
                let mut uniq: Vec<(f64, f64)> = Vec::new();
                for &p in pts {
                    if !uniq.contains(&p) {
                        uniq.push(p);
                    }
                }
                if uniq.len() < 3 {
                    return uniq;
                }
                let start = *uniq
                    .iter()
                    .min_by(|a, b| a.partial_cmp(b).unwrap())
                    .unwrap();
                let mut hull = vec![start];
                let mut current = start;
                loop {
                    let mut next = uniq[0];
                    for &cand in &uniq[1..] {
                        if cand == current {
                            continue;
                        }
                        if next == current {
                            next = cand;
                            continue;
                        }
                        let cr = (next.0 - current.0) * (cand.1 - current.1)
                            - (next.1 - current.1) * (cand.0 - current.0);
                        let dist = |p: (f64, f64)| {
                            (p.0 - current.0).powi(2) + (p.1 - current.1).powi(2)
                        };
                        // Keep the candidate with nothing to its right: ccw walk.
                        if cr < 0.0 || (cr == 0.0 && dist(cand) > dist(next)) {
                            next = cand;
                        }
                    }
                    if next == start {
                        break;
                    }
                    hull.push(next);
                    current = next;
                    if hull.len() > uniq.len() {
                        panic!("jarvis failed to close");
                    }
                }
                hull
            }
            fn shoelace(h: &[(f64, f64)]) -> f64 {
                if h.len() < 3 {
                    return 0.0;
                }
                let mut s = 0.0;
                for i in 0..h.len() {
                    let a = h[i];
                    let b = h[(i + 1) % h.len()];
                    s += a.0 * b.1 - b.0 * a.1;
                }
                (s / 2.0).abs()
            }
            let sp = project(sources);
            let dp = project(data);
            let sh = jarvis(&sp);
            let dh = jarvis(&dp);
            let g = (shoelace(&sh) / shoelace(&dh) - 1.0).abs();
            let inside = |h: &[(f64, f64)], p: (f64, f64)| -> bool {
                if h.len() < 3 {
                    return false;
                }
                (1..h.len() - 1).any(|i| {
                    let (a, b, c) = (h[0], h[i], h[i + 1]);
                    let cr = |u: (f64, f64), v: (f64, f64), w: (f64, f64)| {
                        (v.0 - u.0) * (w.1 - u.1) - (v.1 - u.1) * (w.0 - u.0)
                    };
                    cr(a, b, p) >= -1e-12 && cr(b, c, p) >= -1e-12 && cr(c, a, p) >= -1e-12
                })
            };
            let n_expl = dp.iter().filter(|&&p| inside(&sh, p)).count();
            let n_e = 1.0 - n_expl as f64 / m as f64;
            let mut n_r = 0;
            for i in 0..sp.len() {
                for j in i + 1..sp.len() {
                    let dx = sp[i].0 - sp[j].0;
                    let dy = sp[i].1 - sp[j].1;
                    if dx * dx + dy * dy <= r * r {
                        n_r += 1;
                    }
                }
            }
            (g, n_e, sp.len(), n_r)
        }

        let truth = vec![
            vec![0.3, 0.78, 0.8],
            vec![0.8, 0.13, 0.8],
            vec![0.7, 0.7, 0.1],
            vec![0.2, 0.2, 0.2],
        ];
        let raw = generate_synthetic(&SyntheticSpec {
            sources: truth.clone(),
            samples: 200,
            seed: 20,
        })
        .unwrap();
        let ds = raw.normalize(None).unwrap();
        let table = PlaneTable::new(&ds).unwrap();
        // Map the true sources through the same window.
        let norm_sources: Vec<Vec<f64>> = truth
            .iter()
            .map(|s| {
                s.iter()
                    .enumerate()
                    .map(|(k, &x)| (x - ds.spec.lo[k]) / (ds.spec.hi[k] - ds.spec.lo[k]))
                    .collect()
            })
            .collect();
        let sources = SourceConfig::new(norm_sources.clone(), 3).unwrap();
        let p = params([11.25, 250.0, 0.25, 1.0]);
        for v in 0..3 {
            let plane = PlaneIndex::from_zero_based(v);
            let stats = compute_statistics(&sources, &table, plane, &p).unwrap();
            let (g, n_e, n, n_r) = oracle_stats(
                &norm_sources,
                &ds.normalized,
                plane_pair(3, plane),
                ds.len(),
                p.r,
            );
            assert!((stats.g - g).abs() <= 1e-12, "plane {v}: g");
            assert!((stats.n_e - n_e).abs() <= 1e-12, "plane {v}: n_e");
            assert_eq!(stats.n, n);
            assert_eq!(stats.n_r, n_r);
            // True sources explain everything they generated.
            assert_eq!(stats.n_e, 0.0);
        }
    }

    #[test]
    fn linear_containment_count_matches_pointwise_test() {
        use crate::geometry::{count_inside_slice, hull_into};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut margins = Vec::new();
        for _ in 0..200 {
            let n_hull = rng.gen_range(1..8usize);
            let mut cloud: Vec<Point2> = (0..n_hull)
                .map(|_| Point2::new(rng.gen(), rng.gen()))
                .collect();
            let mut hull = Vec::new();
            hull_into(&mut cloud, &mut hull);
            let m = rng.gen_range(1..60usize);
            let points: Vec<Point2> = (0..m)
                .map(|_| Point2::new(rng.gen(), rng.gen()))
                .collect();
            let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
            assert_eq!(
                count_inside_linear(&hull, &xs, &ys, &mut margins),
                count_inside_slice(&hull, &points)
            );
        }
    }

    #[test]
    fn theta_prior_logpdf_peaks_at_the_mode() {
        let prior = ThetaPrior::default();
        let at_mode = theta_prior_logpdf(&ModelParams::with_theta(prior.means, 0.01), &prior);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let theta = [
                prior.means[0] + rng.gen_range(-3.0..3.0),
                prior.means[1] + rng.gen_range(-9.0..9.0),
                (prior.means[2] + rng.gen_range(-0.2..0.3)).max(1e-6),
                (prior.means[3] + rng.gen_range(-0.3..0.3)).max(1e-6),
            ];
            if theta == prior.means {
                continue;
            }
            assert!(
                theta_prior_logpdf(&ModelParams::with_theta(theta, 0.01), &prior) <= at_mode
            );
        }

        // One sigma above every mean: logpdf drops by exactly 4 * 1/2.
        let shifted: [f64; 4] = std::array::from_fn(|i| prior.means[i] + prior.variances[i].sqrt());
        let lp = theta_prior_logpdf(&ModelParams::with_theta(shifted, 0.01), &prior);
        assert!((lp - (at_mode - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn theta_prior_logpdf_matches_formula_oracle() {
        use statrs::distribution::{Continuous, Normal as StatNormal};
        let prior = ThetaPrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let theta: [f64; 4] = std::array::from_fn(|i| {
                (prior.means[i] + rng.gen_range(-1.0..1.0) * prior.variances[i].sqrt()).max(1e-9)
            });
            let expected: f64 = (0..4)
                .map(|i| {
                    StatNormal::new(prior.means[i], prior.variances[i].sqrt())
                        .unwrap()
                        .ln_pdf(theta[i])
                })
                .sum();
            let got = theta_prior_logpdf(&ModelParams::with_theta(theta, 0.01), &prior);
            assert!((got - expected).abs() <= 1e-12);
        }
    }

    /// Exact moments of a Gaussian truncated to (0, inf).
    fn truncated_moments(mu: f64, sigma: f64) -> (f64, f64) {
        use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};
        let std = StatNormal::new(0.0, 1.0).unwrap();
        let alpha = -mu / sigma;
        let lambda = std.pdf(alpha) / (1.0 - std.cdf(alpha));
        let mean = mu + sigma * lambda;
        let var = sigma * sigma * (1.0 + alpha * lambda - lambda * lambda);
        (mean, var)
    }

    #[test]
    fn tempered_theta_sampling_matches_moment_oracle() {
        let prior = ThetaPrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let n = 100_000;

        for &t in &[1.0, 4.0] {
            let mut sums = [0.0f64; 4];
            let mut sq = [0.0f64; 4];
            for _ in 0..n {
                let draw = sample_theta_tempered(&prior, t, 0.01, &mut rng).theta();
                for i in 0..4 {
                    sums[i] += draw[i];
                    sq[i] += draw[i] * draw[i];
                }
            }
            for i in 0..4 {
                let mean = sums[i] / n as f64;
                let var = sq[i] / n as f64 - mean * mean;
                let sigma = (prior.variances[i] * t).sqrt();
                let (tmean, tvar) = truncated_moments(prior.means[i], sigma);
                let mean_mc = 3.0 * (tvar / n as f64).sqrt();
                assert!(
                    (mean - tmean).abs() <= mean_mc,
                    "T={t} theta{}: mean {mean} vs {tmean} (3σ={mean_mc})",
                    i + 1
                );
                // Variance of the sample variance ~ 2 var^2 / n for the
                // near-Gaussian case; allow 4 sigma.
                let var_mc = 4.0 * (2.0 / n as f64).sqrt() * tvar;
                assert!(
                    (var - tvar).abs() <= var_mc,
                    "T={t} theta{}: var {var} vs {tvar}",
                    i + 1
                );
                // Where truncation is negligible the tempered variance is
                // T * sigma0^2 within 5%.
                if prior.means[i] / sigma > 4.0 {
                    assert!((var / (prior.variances[i] * t) - 1.0).abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn tempered_theta_collapses_onto_means_as_t_vanishes() {
        let prior = ThetaPrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draw = sample_theta_tempered(&prior, 1e-12, 0.01, &mut rng).theta();
        for i in 0..4 {
            assert!((draw[i] - prior.means[i]).abs() < 1e-4 * prior.means[i].max(1.0));
        }
    }

    #[test]
    fn local_stability_bound_on_random_births() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let theta: [f64; 4] = std::array::from_fn(|_| rng.gen_range(1e-3..3.0));
            let p = ModelParams::with_theta(theta, rng.gen_range(0.005..0.3));
            let n = rng.gen_range(0..10usize);
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.gen(), rng.gen()])
                .collect();
            let xi = vec![rng.gen::<f64>(), rng.gen::<f64>()];
            let close = |a: &[f64], b: &[f64]| {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                dx * dx + dy * dy <= p.r * p.r
            };
            let count_pairs = |pts: &[Vec<f64>]| {
                let mut c = 0;
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        if close(&pts[i], &pts[j]) {
                            c += 1;
                        }
                    }
                }
                c
            };
            let before = HugStatistics {
                g: 0.0,
                n_e: 0.0,
                n,
                n_r: count_pairs(&points),
            };
            let mut extended = points.clone();
            extended.push(xi);
            let after = HugStatistics {
                g: 0.0,
                n_e: 0.0,
                n: n + 1,
                n_r: count_pairs(&extended),
            };
            let delta = interaction_energy(&after, &p) - interaction_energy(&before, &p);
            assert!(
                (-delta).exp() <= (-p.theta3).exp() + 1e-15,
                "papangelou bound violated: {delta} vs theta3 {}",
                p.theta3
            );
        }
    }

    proptest! {
        #[test]
        fn statistic_bounds_hold(
            source_coords in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..12),
            data_seed in 0u64..100,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
            let data: Vec<Vec<f64>> = (0..30)
                .map(|_| vec![rng.gen::<f64>() * 0.4 + 0.3, rng.gen::<f64>() * 0.4 + 0.3])
                .collect();
            let ds = dataset_from_normalized(data);
            let table = PlaneTable::new(&ds).unwrap();
            prop_assume!(table.is_active(PlaneIndex::from_zero_based(0)));
            let sources = SourceConfig::new(
                source_coords.iter().map(|&(x, y)| vec![x, y]).collect(),
                2,
            ).unwrap();
            let p = params([1.0, 1.0, 1.0, 1.0]);
            let stats = compute_statistics(
                &sources, &table, PlaneIndex::from_zero_based(0), &p,
            ).unwrap();
            let n = sources.len();
            prop_assert!(stats.n_e >= 0.0 && stats.n_e <= 1.0);
            prop_assert!(stats.n_r <= n.saturating_mul(n.saturating_sub(1)) / 2);
            prop_assert!(stats.g >= 0.0);
            let gd = table.data_hull_area(PlaneIndex::from_zero_based(0)).unwrap();
            let bound = (WINDOW_VOLUME / gd - 1.0).max(1.0);
            prop_assert!(stats.g <= bound + 1e-12);
        }

        #[test]
        fn statistics_are_permutation_invariant(perm_seed in 0u64..200) {
            let ds = square_dataset();
            let table = PlaneTable::new(&ds).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            let mut points: Vec<Vec<f64>> = (0..7)
                .map(|_| vec![rng.gen(), rng.gen()])
                .collect();
            let p = params([1.0, 1.0, 1.0, 1.0]);
            let plane = PlaneIndex::from_zero_based(0);
            let base = compute_statistics(
                &SourceConfig::new(points.clone(), 2).unwrap(), &table, plane, &p,
            ).unwrap();
            for i in (1..points.len()).rev() {
                points.swap(i, rng.gen_range(0..=i));
            }
            let shuffled = compute_statistics(
                &SourceConfig::new(points, 2).unwrap(), &table, plane, &p,
            ).unwrap();
            prop_assert_eq!(base, shuffled);
        }

        #[test]
        fn energy_additivity_and_theta_linearity(
            g in 0.0f64..3.0, n_e in 0.0f64..1.0, n in 0usize..12, n_r in 0usize..20,
            theta in proptest::array::uniform4(0.0f64..10.0),
        ) {
            let stats = HugStatistics { g, n_e, n, n_r };
            let p = ModelParams::with_theta(theta, 0.01);
            let total = energy(&stats, &p);
            prop_assert_eq!(total, data_energy(&stats, &p) + interaction_energy(&stats, &p));

            let mut doubled = theta;
            doubled[0] *= 2.0;
            let p2 = ModelParams::with_theta(doubled, 0.01);
            let diff = data_energy(&stats, &p2) - data_energy(&stats, &p);
            prop_assert!((diff - theta[0] * g).abs() <= 1e-9 * (1.0 + theta[0] * g));
        }
    }
}
