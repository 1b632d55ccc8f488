//! Synthetic data, CSV ingestion and rescaling onto the model box.
//!
//! A [`Dataset`] stores its points already pulled back into the unit box
//! together with the affine map that sends the box back to the original
//! units, so densities can be reported in either.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bernstein::Interval;
use crate::error::{Error, Result};
use crate::flow::TargetDiffeo;

/// Default fraction of the box left empty on each side.
pub const DEFAULT_MARGIN: f64 = 0.02;
/// Minimum distance kept between any point and the box boundary.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Points in the model box, one per row.
    pub points: Array2<f64>,
    pub support_box: Vec<Interval>,
    pub provenance: String,
    /// Model box to original units.
    pub rescale: TargetDiffeo,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.points.ncols()
    }

    /// Points mapped back to the original units.
    pub fn original_points(&self) -> Result<Array2<f64>> {
        map_rows(self.points.view(), |r| self.rescale.apply(r))
    }

    /// True iff every point sits at least [`BOUNDARY_MARGIN`] (relative to
    /// the box width) inside the support box.
    pub fn satisfies_support(&self) -> bool {
        self.points.rows().into_iter().all(|r| {
            r.iter().zip(&self.support_box).all(|(v, b)| {
                let m = BOUNDARY_MARGIN * b.width() * (1.0 - 1e-9);
                *v >= b.lo() + m && *v <= b.hi() - m
            })
        })
    }

    /// Writes the original-unit points.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, self.original_points()?.view(), None)
    }
}

fn map_rows(points: ArrayView2<f64>, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(points.dim());
    for (i, r) in points.rows().into_iter().enumerate() {
        let v = f(&r.to_vec()).map_err(|e| e.in_sample(i))?;
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(out)
}

/// Per-dimension affine map of `[min, max]` onto `[margin, 1 - margin]`.
pub fn rescale_to_box(points: ArrayView2<f64>, margin: f64, provenance: impl Into<String>) -> Result<Dataset> {
    if !(BOUNDARY_MARGIN..0.5).contains(&margin) {
        return Err(Error::Config(format!(
            "margin must lie in [{BOUNDARY_MARGIN}, 0.5), got {margin}"
        )));
    }
    if points.nrows() < 2 || points.ncols() == 0 {
        return Err(Error::Config("rescaling needs at least two points".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dataset"));
    }
    let inner = 1.0 - 2.0 * margin;
    let mut targets = Vec::with_capacity(points.ncols());
    let mut out = Array2::zeros(points.dim());
    for (j, col) in points.axis_iter(Axis(1)).enumerate() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::ZeroSpread(j));
        }
        let per_unit = (hi - lo) / inner;
        targets.push(Interval::new(lo - margin * per_unit, hi + margin * per_unit)?);
        for (i, v) in col.iter().enumerate() {
            out[[i, j]] = (margin + inner * (v - lo) / (hi - lo)).clamp(margin, 1.0 - margin);
        }
    }
    Ok(Dataset {
        points: out,
        support_box: vec![Interval::unit(); points.ncols()],
        provenance: provenance.into(),
        rescale: TargetDiffeo::affine_from_unit(targets),
    })
}

/// Weighted one-dimensional Gaussian mixture; weights are normalized on use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec1D {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixtureSpec1D {
    pub fn new(means: Vec<f64>, variances: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let s = Self {
            means,
            variances,
            weights,
        };
        s.validate()?;
        Ok(s)
    }

    /// Means (-5, -2, 0, 2, 5), variances (1.5, 2, 1, 2, 1), equal weights.
    pub fn five_gaussians() -> Self {
        Self {
            means: vec![-5.0, -2.0, 0.0, 2.0, 5.0],
            variances: vec![1.5, 2.0, 1.0, 2.0, 1.0],
            weights: vec![0.2; 5],
        }
    }

    /// Seven components with weights (0.8, 0.2, 0.2, 0.6, 0.2, 0.2, 0.8),
    /// which sum to 3 and are normalized on use.
    pub fn seven_gaussians() -> Self {
        Self {
            means: vec![-7.0, -5.0, -2.0, 0.0, 2.0, 5.0, 7.0],
            variances: vec![1.0, 1.0, 2.0, 2.0, 2.0, 1.0, 1.0],
            weights: vec![0.8, 0.2, 0.2, 0.6, 0.2, 0.2, 0.8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k == 0 || self.variances.len() != k || self.weights.len() != k {
            return Err(Error::LengthMismatch {
                what: "mixture components",
                expected: k,
                got: if self.variances.len() != k {
                    self.variances.len()
                } else {
                    self.weights.len()
                },
            });
        }
        if self.means.iter().any(|m| !m.is_finite())
            || self.variances.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || !(self.weights.iter().sum::<f64>() > 0.0)
        {
            return Err(Error::Config(
                "mixture needs finite means, positive variances and non-negative weights".into(),
            ));
        }
        Ok(())
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let s: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / s).collect()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.normalized_weights()
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (m, v))| w * (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
            .sum()
    }

    /// Seeded component-then-normal draws in the original units.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(&self.weights).map_err(|e| Error::Config(e.to_string()))?;
        let comps: Vec<Normal<f64>> = self
            .means
            .iter()
            .zip(&self.variances)
            .map(|(m, v)| Normal::new(*m, v.sqrt()).expect("validated variance"))
            .collect();
        Ok((0..count)
            .map(|_| comps[pick.sample(&mut rng)].sample(&mut rng))
            .collect())
    }
}

pub fn gaussian_mixture_1d(spec: &MixtureSpec1D, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let xs = spec.sample(count, seed)?;
    let points = Array2::from_shape_vec((count, 1), xs).expect("shape matches");
    rescale_to_box(
        points.view(),
        DEFAULT_MARGIN,
        format!("gaussian mixture with {} components, seed {seed}", spec.means.len()),
    )
}

/// Two-dimensional stand-in distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Toy2D {
    Moons,
    Rings,
    Checkerboard,
    Pinwheel,
}

impl FromStr for Toy2D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moons" => Ok(Toy2D::Moons),
            "rings" => Ok(Toy2D::Rings),
            "checkerboard" => Ok(Toy2D::Checkerboard),
            "pinwheel" => Ok(Toy2D::Pinwheel),
            other => Err(Error::UnknownDataset(other.to_string())),
        }
    }
}

/// Radii `[inner, outer]` of the two ring annuli.
pub const RING_ANNULI: [[f64; 2]; 2] = [[0.8, 1.0], [1.8, 2.0]];
const MOON_NOISE: f64 = 0.05;

/// Raw toy points in their natural units.
pub fn toy2d_points(kind: Toy2D, count: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((count, 2));
    for i in 0..count {
        let (x, y) = match kind {
            Toy2D::Moons => {
                let theta = rng.random_range(0.0..PI);
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                let (x, y) = if i % 2 == 0 {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                (x + MOON_NOISE * nx, y + MOON_NOISE * ny)
            }
            Toy2D::Rings => {
                let [lo, hi] = RING_ANNULI[i % 2];
                let r = rng.random_range(lo..hi);
                let a = rng.random_range(0.0..2.0 * PI);
                (r * a.cos(), r * a.sin())
            }
            Toy2D::Checkerboard => {
                // 4 x 4 board on [-2, 2]^2, dark cells where (col + row) is even
                let col = rng.random_range(0..4_i32);
                let row = 2 * rng.random_range(0..2_i32) + (col % 2);
                let x = col as f64 - 2.0 + rng.random::<f64>();
                let y = row as f64 - 2.0 + rng.random::<f64>();
                (x, y)
            }
            Toy2D::Pinwheel => {
                let arms = 5;
                let arm = rng.random_range(0..arms);
                let r = 1.0 + 0.3 * rng.sample::<f64, _>(StandardNormal);
                let t = 0.1 * rng.sample::<f64, _>(StandardNormal);
                let angle = 2.0 * PI * arm as f64 / arms as f64 + 0.25 * r.exp();
                let (s, c) = angle.sin_cos();
                (c * r - s * t, s * r + c * t)
            }
        };
        out[[i, 0]] = x;
        out[[i, 1]] = y;
    }
    out
}

pub fn toy2d(name: &str, count: usize, seed: u64) -> Result<Dataset> {
    let kind: Toy2D = name.parse()?;
    if count < 2 {
        return Err(Error::Config("toy datasets need at least two points".into()));
    }
    rescale_to_box(
        toy2d_points(kind, count, seed).view(),
        DEFAULT_MARGIN,
        format!("{name} stand-in, seed {seed}"),
    )
}

/// Adds i.i.d. `Uniform[0, magnitude]` noise in the original units, then
/// clamps back into the support box at [`BOUNDARY_MARGIN`].
pub fn add_uniform_noise(ds: &Dataset, magnitude: f64, seed: u64) -> Result<Dataset> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::Config(format!(
            "noise magnitude must be non-negative, got {magnitude}"
        )));
    }
    if magnitude == 0.0 {
        return Ok(ds.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let original = ds.original_points()?;
    let mut out = Array2::zeros(original.dim());
    let target_box = match &ds.rescale {
        TargetDiffeo::Affine { target, .. } => Some(target.clone()),
        TargetDiffeo::TanhSquash { .. } => None,
    };
    for (i, row) in original.rows().into_iter().enumerate() {
        let mut x: Vec<f64> = row.iter().map(|v| v + rng.random_range(0.0..=magnitude)).collect();
        if let Some(t) = &target_box {
            for (v, b) in x.iter_mut().zip(t) {
                *v = v.clamp(b.lo(), b.hi());
            }
        }
        let y = ds.rescale.inverse(&x).map_err(|e| e.in_sample(i))?;
        for (j, (v, b)) in y.iter().zip(&ds.support_box).enumerate() {
            let m = BOUNDARY_MARGIN * b.width();
            out[[i, j]] = v.clamp(b.lo() + m, b.hi() - m);
        }
    }
    Ok(Dataset {
        points: out,
        support_box: ds.support_box.clone(),
        provenance: format!("{} + uniform noise [0, {magnitude}], seed {seed}", ds.provenance),
        rescale: ds.rescale.clone(),
    })
}

/// Reads a rectangular numeric table. Rows and columns in errors are 1-based
/// and count lines of the file, header included.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool, delimiter: u8) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_path(path)?;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if line == 0 && has_header {
            continue;
        }
        let row = line + 1;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::CsvCell {
                row,
                column: w.min(rec.len()) + 1,
                message: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::CsvCell {
                row,
                column: c + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let w = match width {
        Some(w) if rows > 0 && w > 0 => w,
        _ => return Err(Error::EmptyCsv),
    };
    Ok(Array2::from_shape_vec((rows, w), values).expect("rectangular by construction"))
}

/// Writes rows with shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, points: ArrayView2<f64>, header: Option<&[&str]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in points.rows() {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Gaussian kernel density estimate of `samples` at each grid point.
pub fn gaussian_kde(samples: &[f64], grid: &[f64], bandwidth: f64) -> Vec<f64> {
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    grid.iter()
        .map(|g| {
            norm * samples
                .iter()
                .map(|s| (-0.5 * ((g - s) / bandwidth).powi(2)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| sorted[((n - 1.0) * p).round() as usize];
    let iqr = q(0.75) - q(0.25);
    0.9 * sd.min(iqr / 1.34) * n.powf(-0.2)
}

/// Grid locations of strict local maxima of `values` (plateaus count once,
/// at their centre). Endpoints are not considered.
pub fn local_maxima(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let n = values.len();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                out.push(0.5 * (grid[i] + grid[j]));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}
