//! Dataset ingestion, normalization into the unit observation window,
//! synthetic mixing-system generation and relative-error reporting.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{HugError, Result};

/// Raw measurements: `m` samples of `K` hydrochemical parameters, in
/// original units (ppm, permil, ratios, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
}

/// Per-dimension affine window mapping raw units onto [0, 1].
///
/// Dimension `k` maps `[lo_k, hi_k]` onto `[0, 1]` with
/// `lo_k = min - delta_k`, `hi_k = max + delta_k`. The default threshold
/// `delta_k = max - min` puts the observed data exactly onto [1/3, 2/3].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl NormalizationSpec {
    pub fn dims(&self) -> usize {
        self.lo.len()
    }
}

/// A normalized dataset: the raw matrix, its image in [0,1]^K and the
/// window used for the mapping.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub names: Vec<String>,
    pub raw: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub spec: NormalizationSpec,
}

impl Dataset {
    pub fn dims(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }
}

impl RawDataset {
    pub fn dims(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Normalizes every dimension onto [0, 1] using the per-dimension
    /// observation window `(min - delta, max + delta)`.
    ///
    /// `deltas` overrides the default threshold `delta_k = max - min`; pass
    /// `None` for the default on every dimension.
    pub fn normalize(&self, deltas: Option<&[f64]>) -> Result<Dataset> {
        let k = self.dims();
        let m = self.len();
        if m < 3 {
            return Err(HugError::data(format!(
                "dataset needs at least 3 samples, found {m}"
            )));
        }
        if let Some(d) = deltas {
            if d.len() != k {
                return Err(HugError::config(format!(
                    "normalization overrides have {} entries for {} dimensions",
                    d.len(),
                    k
                )));
            }
        }
        let mut lo = Vec::with_capacity(k);
        let mut hi = Vec::with_capacity(k);
        for dim in 0..k {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for row in &self.samples {
                min = min.min(row[dim]);
                max = max.max(row[dim]);
            }
            if max <= min {
                return Err(HugError::data(format!(
                    "dimension '{}' is constant ({min}); zero-range window",
                    self.names[dim]
                )));
            }
            let delta = match deltas {
                Some(d) => {
                    if !(d[dim] > 0.0) {
                        return Err(HugError::config(format!(
                            "normalization threshold for '{}' must be > 0",
                            self.names[dim]
                        )));
                    }
                    d[dim]
                }
                None => max - min,
            };
            lo.push(min - delta);
            hi.push(max + delta);
        }
        let spec = NormalizationSpec { lo, hi };
        let normalized = self
            .samples
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(dim, &x)| (x - spec.lo[dim]) / (spec.hi[dim] - spec.lo[dim]))
                    .collect()
            })
            .collect();
        Ok(Dataset {
            names: self.names.clone(),
            raw: self.samples.clone(),
            normalized,
            spec,
        })
    }
}

/// Exact affine inverse of the normalization.
pub fn denormalize(points: &[Vec<f64>], spec: &NormalizationSpec) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(dim, &x)| spec.lo[dim] + x * (spec.hi[dim] - spec.lo[dim]))
                .collect()
        })
        .collect()
}

/// Specification of a synthetic mixing system: true sources and how many
/// barycentric samples to draw from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub sources: Vec<Vec<f64>>,
    pub samples: usize,
    pub seed: u64,
}

/// Draws `m` samples as convex combinations of the true sources, with
/// flat-Dirichlet contribution vectors. Deterministic given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<RawDataset> {
    let n = spec.sources.len();
    if n < 2 {
        return Err(HugError::config(
            "synthetic generation needs at least 2 sources",
        ));
    }
    let k = spec.sources[0].len();
    if k == 0 || spec.sources.iter().any(|s| s.len() != k) {
        return Err(HugError::config(
            "synthetic sources must share a positive dimension count",
        ));
    }
    for (i, a) in spec.sources.iter().enumerate() {
        if a.iter().any(|x| !x.is_finite()) {
            return Err(HugError::config(format!("source {} is not finite", i + 1)));
        }
        for b in &spec.sources[i + 1..] {
            if a == b {
                return Err(HugError::config("synthetic sources must be distinct"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dirichlet = Dirichlet::new(&vec![1.0; n])
        .map_err(|e| HugError::config(format!("dirichlet setup failed: {e}")))?;
    let samples = (0..spec.samples)
        .map(|_| {
            let gamma = dirichlet.sample(&mut rng);
            (0..k)
                .map(|dim| {
                    gamma
                        .iter()
                        .zip(&spec.sources)
                        .map(|(&g, s)| g * s[dim])
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(RawDataset {
        names: (1..=k).map(|i| format!("solute{i}")).collect(),
        samples,
    })
}

/// Relative differences (in percent) between matched proposed and true
/// sources, with per-source, per-dimension and global means.
#[derive(Debug, Clone)]
pub struct ErrorTable {
    /// (proposed index, truth index) pairs the table rows correspond to.
    pub pairs: Vec<(usize, usize)>,
    /// `cells[row][dim]`; `None` marks an undefined cell (zero true coordinate).
    pub cells: Vec<Vec<Option<f64>>>,
    pub mean_per_source: Vec<Option<f64>>,
    pub mean_per_dimension: Vec<Option<f64>>,
    pub global_mean: Option<f64>,
    pub warnings: Vec<String>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Per-coordinate relative difference `|s - s*| / |s*| * 100` for each
/// matched (proposed, truth) pair. Cells with a zero true coordinate are
/// reported as undefined and excluded from the means, with a warning.
pub fn relative_error_table(
    proposed: &[Vec<f64>],
    truth: &[Vec<f64>],
    matching: &[(usize, usize)],
) -> Result<ErrorTable> {
    if truth.is_empty() || proposed.is_empty() {
        return Err(HugError::domain("error table needs non-empty source sets"));
    }
    let k = truth[0].len();
    if proposed.iter().any(|p| p.len() != k) || truth.iter().any(|t| t.len() != k) {
        return Err(HugError::domain(
            "proposed and true sources must share dimensions",
        ));
    }
    let mut pairs = matching.to_vec();
    pairs.sort_by_key(|&(_, t)| t);
    let mut warnings = Vec::new();
    let mut cells = Vec::with_capacity(pairs.len());
    for &(p, t) in &pairs {
        if p >= proposed.len() || t >= truth.len() {
            return Err(HugError::domain(format!(
                "matching pair ({p}, {t}) is out of range"
            )));
        }
        let row: Vec<Option<f64>> = (0..k)
            .map(|dim| {
                let truth_coord = truth[t][dim];
                if truth_coord == 0.0 {
                    warnings.push(format!(
                        "true source {} has zero coordinate in dimension {}; cell undefined",
                        t + 1,
                        dim + 1
                    ));
                    None
                } else {
                    Some((proposed[p][dim] - truth_coord).abs() / truth_coord.abs() * 100.0)
                }
            })
            .collect();
        cells.push(row);
    }
    let mean_per_source: Vec<Option<f64>> = cells
        .iter()
        .map(|row| mean_of(row.iter().copied()))
        .collect();
    let mean_per_dimension: Vec<Option<f64>> = (0..k)
        .map(|dim| mean_of(cells.iter().map(|row| row[dim])))
        .collect();
    let global_mean = mean_of(cells.iter().flat_map(|row| row.iter().copied()));
    Ok(ErrorTable {
        pairs,
        cells,
        mean_per_source,
        mean_per_dimension,
        global_mean,
        warnings,
    })
}

impl ErrorTable {
    /// Writes the table in the layout `source, <dims...>, mean_error_source`
    /// with a trailing `mean_error_dimension` row. Undefined cells print as
    /// `na`.
    pub fn write_csv<W: Write>(&self, mut out: W, names: &[String]) -> Result<()> {
        let fmt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |x| format!("{x}"));
        write!(out, "source")?;
        for n in names {
            write!(out, ",{n}")?;
        }
        writeln!(out, ",mean_error_source")?;
        for (i, (row, &(_, t))) in self.cells.iter().zip(&self.pairs).enumerate() {
            write!(out, "{}", t + 1)?;
            for cell in row {
                write!(out, ",{}", fmt(*cell))?;
            }
            writeln!(out, ",{}", fmt(self.mean_per_source[i]))?;
        }
        write!(out, "mean_error_dimension")?;
        for m in &self.mean_per_dimension {
            write!(out, ",{}", fmt(*m))?;
        }
        writeln!(out, ",{}", fmt(self.global_mean))?;
        Ok(())
    }
}

/// Loads a headed numeric matrix from UTF-8 CSV without the dataset size
/// minima; used for source/truth tables as well as datasets.
pub fn load_matrix_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HugError::data(format!("cannot read {}: {e}", path.display())))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| HugError::data(format!("bad CSV header: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| HugError::data(format!("line {line}: {e}")))?;
        if record.len() != names.len() {
            return Err(HugError::data(format!(
                "line {line}: expected {} cells, found {}",
                names.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(names.len());
        for (col, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(HugError::data(format!(
                    "line {line}: blank cell in column '{}'",
                    names[col]
                )));
            }
            let value: f64 = cell.parse().map_err(|_| {
                HugError::data(format!(
                    "line {line}: non-numeric cell '{cell}' in column '{}'",
                    names[col]
                ))
            })?;
            if !value.is_finite() {
                return Err(HugError::data(format!(
                    "line {line}: non-finite value in column '{}'",
                    names[col]
                )));
            }
            row.push(value);
        }
        rows.push(row);
    }
    Ok((names, rows))
}

/// Loads a dataset from UTF-8 CSV: first row holds parameter names, every
/// following row holds one numeric sample. Rows with missing or non-numeric
/// cells abort the load, naming the offending line.
pub fn load_csv(path: &Path) -> Result<RawDataset> {
    let (names, samples) = load_matrix_csv(path)?;
    if names.len() < 2 {
        return Err(HugError::data(format!(
            "need at least 2 columns, found {}",
            names.len()
        )));
    }
    if samples.len() < 3 {
        return Err(HugError::data(format!(
            "need at least 3 data rows, found {}",
            samples.len()
        )));
    }
    Ok(RawDataset { names, samples })
}

/// Writes a dataset as CSV at full precision; a read-back reproduces the
/// values exactly.
pub fn write_csv<W: Write>(mut out: W, names: &[String], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", names.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
