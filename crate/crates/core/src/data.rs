//! Synthetic low-rank tensors, min-max scaling, MovieLens-100K ingestion and
//! per-slice bi-scaling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{site, RngStream};
use crate::solvers::{Backbone, CpModel, Model, TuckerModel};
use crate::tensor::{Matrix, ObservationSet, ObservedTensor, Tensor3};

/// Share of observed entries used for training; the rest is held out.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dims: [usize; 3],
    pub rank: usize,
    pub backbone: Backbone,
    /// Signal power over expected noise power.
    pub snr: f64,
    pub missing_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// 20 x 20 x 20, rank 3, SNR 1, half the entries missing.
    pub fn benchmark(backbone: Backbone, seed: u64) -> Self {
        Self {
            dims: [20, 20, 20],
            rank: 3,
            backbone,
            snr: 1.0,
            missing_ratio: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Config(format!("dims must be positive, got {:?}", self.dims)));
        }
        if self.rank == 0 || self.rank > *self.dims.iter().min().unwrap() {
            return Err(Error::Config(format!(
                "rank {} must be in 1..={}",
                self.rank,
                self.dims.iter().min().unwrap()
            )));
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        if !(0.0..1.0).contains(&self.missing_ratio) {
            return Err(Error::Config(format!(
                "missing ratio must lie in [0, 1), got {}",
                self.missing_ratio
            )));
        }
        let total: usize = self.dims.iter().product();
        let observed = total - (self.missing_ratio * total as f64).round() as usize;
        if ((observed as f64) * TRAIN_FRACTION).round() as usize == observed || observed < 2 {
            return Err(Error::Config("too few observed entries for a train/test split".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Min-max scaled signal plus Gaussian noise.
    pub x_noisy: Tensor3,
    /// Min-max scaled signal.
    pub x_true: Tensor3,
    pub omega_train: ObservationSet,
    pub omega_test: ObservationSet,
    /// Generating factors before scaling.
    pub generator: Model,
    pub noise_variance: f64,
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn normalize_columns(m: &mut Matrix) {
    for c in 0..m.cols() {
        let norm = m.column(c).iter().map(|v| v * v).sum::<f64>().sqrt();
        for r in 0..m.rows() {
            m.set(r, c, m.get(r, c) / norm);
        }
    }
}

/// Orthonormalizes the columns in place with modified Gram-Schmidt, run
/// twice so the result is orthonormal to working precision. This is the Q
/// factor of a thin QR decomposition up to column signs.
pub fn orthonormalize_columns(m: &mut Matrix) {
    for _ in 0..2 {
        for c in 0..m.cols() {
            for prev in 0..c {
                let dot: f64 = (0..m.rows()).map(|r| m.get(r, c) * m.get(r, prev)).sum();
                for r in 0..m.rows() {
                    m.set(r, c, m.get(r, c) - dot * m.get(r, prev));
                }
            }
            let norm = m.column(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            for r in 0..m.rows() {
                m.set(r, c, m.get(r, c) / norm);
            }
        }
    }
}

/// Affine map of a value range onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScale {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScale {
    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// Maps the observed range of `x` onto `[0, 1]`, applying the same affine
/// map to every entry.
pub fn min_max_scale(x: &Tensor3, omega: &ObservationSet) -> Result<(Tensor3, MinMaxScale)> {
    let obs = ObservedTensor::gather(x, omega)?;
    let (min, max) = obs
        .min_max()
        .ok_or_else(|| Error::Data("min-max scaling of an empty observation set".into()))?;
    if max <= min {
        return Err(Error::Data(format!("cannot min-max scale constant data ({min})")));
    }
    let scale = MinMaxScale { min, max };
    let data = x.as_slice().iter().map(|&v| scale.apply(v)).collect();
    Ok((Tensor3::from_vec(x.dims(), data)?, scale))
}

/// Draws a low-rank tensor, scales it to `[0, 1]`, adds Gaussian noise at
/// the requested SNR, hides `missing_ratio` of the entries and splits the
/// rest 80/20 into train and test positions.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = RngStream::derive(spec.seed, &[site::DATA]);
    let [n1, n2, n3] = spec.dims;
    let d = spec.rank;
    let (generator, signal) = match spec.backbone {
        Backbone::Cp => {
            let mut fs = [n1, n2, n3].map(|n| gaussian_matrix(n, d, &mut rng));
            fs.iter_mut().for_each(normalize_columns);
            let [a, b, c] = fs;
            let m = CpModel::new(a, b, c)?;
            let x = m.reconstruct();
            (Model::Cp(m), x)
        }
        Backbone::Tucker => {
            let mut fs = [n1, n2, n3].map(|n| gaussian_matrix(n, d, &mut rng));
            fs.iter_mut().for_each(orthonormalize_columns);
            let g = Tensor3::from_fn([d; 3], |_, _, _| rng.sample(StandardNormal));
            let [a, b, c] = fs;
            let m = TuckerModel::new(a, b, c, g)?;
            let x = m.reconstruct();
            (Model::Tucker(m), x)
        }
    };
    let (x_true, _) = min_max_scale(&signal, &ObservationSet::full(spec.dims))?;

    let total = x_true.len();
    let noise_variance = x_true.frobenius_sq() / total as f64 / spec.snr;
    let sigma = noise_variance.sqrt();
    let noisy: Vec<f64> = x_true
        .as_slice()
        .iter()
        .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let x_noisy = Tensor3::from_vec(spec.dims, noisy)?;

    let mut positions: Vec<usize> = (0..total).collect();
    positions.shuffle(&mut rng);
    let hidden = (spec.missing_ratio * total as f64).round() as usize;
    let observed = &positions[hidden..];
    let n_train = (observed.len() as f64 * TRAIN_FRACTION).round() as usize;
    let to_triples = |offsets: &[usize]| {
        let mut v: Vec<usize> = offsets.to_vec();
        v.sort_unstable();
        v.into_iter()
            .map(|o| [o / (n2 * n3), (o / n3) % n2, o % n3])
            .collect::<Vec<_>>()
    };
    let omega_train = ObservationSet::new(spec.dims, to_triples(&observed[..n_train]))?;
    let omega_test = ObservationSet::new(spec.dims, to_triples(&observed[n_train..]))?;

    Ok(SyntheticData {
        x_noisy,
        x_true,
        omega_train,
        omega_test,
        generator,
        noise_variance,
    })
}

/// Reads observed entries from a text file with one `i j k value` record per
/// line (0-based indices, whitespace separated). Blank lines and lines
/// starting with `#` are skipped. Dimensions default to one past the largest
/// index in each mode.
pub fn read_entries(path: &Path, dims: Option<[usize; 3]>) -> Result<ObservedTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    let mut values = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected `i j k value`, found {} fields", fields.len())));
        }
        let mut idx = [0usize; 3];
        for (slot, f) in idx.iter_mut().zip(&fields[..3]) {
            *slot = f
                .parse()
                .map_err(|_| parse_err(format!("index `{f}` is not a non-negative integer")))?;
        }
        let v: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(format!("value `{}` is not a number", fields[3])))?;
        if !v.is_finite() {
            return Err(parse_err(format!("value `{}` is not finite", fields[3])));
        }
        triples.push(idx);
        values.push(v);
    }
    if triples.is_empty() {
        return Err(Error::Data(format!("{} holds no entries", path.display())));
    }
    let dims = dims.unwrap_or_else(|| {
        let mut d = [0usize; 3];
        for t in &triples {
            for m in 0..3 {
                d[m] = d[m].max(t[m] + 1);
            }
        }
        d
    });
    ObservedTensor::new(ObservationSet::new(dims, triples)?, values)
}

/// Writes entries in the format read by [`read_entries`], with a dimension
/// comment on the first line.
pub fn write_entries(path: &Path, obs: &ObservedTensor) -> Result<()> {
    use std::fmt::Write as _;
    let [n1, n2, n3] = obs.dims();
    let mut out = format!("# dims {n1} {n2} {n3}\n");
    for ([i, j, k], v) in obs.entries() {
        writeln!(out, "{i} {j} {k} {v}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const ML100K_USERS: usize = 943;
pub const ML100K_ITEMS: usize = 1682;
pub const ML100K_DAYS: usize = 212;
pub const ML100K_DIMS: [usize; 3] = [ML100K_USERS, ML100K_ITEMS, ML100K_DAYS];
const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Ua,
    Ub,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Ua => "ua",
            Split::Ub => "ub",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ua" => Ok(Split::Ua),
            "ub" => Ok(Split::Ub),
            other => Err(Error::Config(format!("unknown split `{other}` (expected ua or ub)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub day: usize,
    /// Current value, bi-scaled once [`biscale`] has run.
    pub value: f64,
    /// Original 1..=5 rating.
    pub raw: f64,
}

#[derive(Debug, Clone)]
pub struct RatingDataset {
    pub split: Split,
    pub dims: [usize; 3],
    pub train: Vec<Rating>,
    pub test: Vec<Rating>,
    pub scaling: Option<BiScaling>,
}

impl RatingDataset {
    fn observed(&self, ratings: &[Rating]) -> Result<ObservedTensor> {
        let triples = ratings.iter().map(|r| [r.user, r.item, r.day]).collect();
        let omega = ObservationSet::new(self.dims, triples)?;
        ObservedTensor::new(omega, ratings.iter().map(|r| r.value).collect())
    }

    pub fn train_observed(&self) -> Result<ObservedTensor> {
        self.observed(&self.train)
    }

    pub fn test_observed(&self) -> Result<ObservedTensor> {
        self.observed(&self.test)
    }

    /// Maps a value in current units back to rating units.
    pub fn to_raw(&self, r: &Rating, value: f64) -> f64 {
        match &self.scaling {
            Some(s) => s.invert(r.day, r.user, r.item, value),
            None => value,
        }
    }
}

struct RawRecord {
    user: usize,
    item: usize,
    rating: f64,
    timestamp: i64,
}

fn read_ratings(path: &Path) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let int = |s: &str, what: &str| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| parse_err(format!("{what} `{s}` is not an integer")))
        };
        let user = int(fields[0], "user id")?;
        let item = int(fields[1], "item id")?;
        let rating = int(fields[2], "rating")?;
        let timestamp = int(fields[3], "timestamp")?;
        if !(1..=ML100K_USERS as i64).contains(&user) {
            return Err(parse_err(format!("user id {user} outside 1..={ML100K_USERS}")));
        }
        if !(1..=ML100K_ITEMS as i64).contains(&item) {
            return Err(parse_err(format!("item id {item} outside 1..={ML100K_ITEMS}")));
        }
        if !(1..=5).contains(&rating) {
            return Err(parse_err(format!("rating {rating} outside 1..=5")));
        }
        out.push(RawRecord {
            user: (user - 1) as usize,
            item: (item - 1) as usize,
            rating: rating as f64,
            timestamp,
        });
    }
    Ok(out)
}

/// Loads `<split>.base` (train) and `<split>.test` (test) from `root`.
///
/// Ids become 0-based indices; timestamps become day bins counted from the
/// earliest timestamp in either file and clamped to `0..212`.
pub fn load_ml100k(root: &Path, split: Split) -> Result<RatingDataset> {
    let path = |ext: &str| -> PathBuf { root.join(format!("{}.{ext}", split.as_str())) };
    let base = read_ratings(&path("base"))?;
    let test = read_ratings(&path("test"))?;
    let t_min = base
        .iter()
        .chain(&test)
        .map(|r| r.timestamp)
        .min()
        .ok_or_else(|| Error::Data(format!("{} split has no ratings", split.as_str())))?;
    let convert = |recs: Vec<RawRecord>| -> Vec<Rating> {
        recs.into_iter()
            .map(|r| {
                let day = ((r.timestamp - t_min) / SECONDS_PER_DAY).clamp(0, ML100K_DAYS as i64 - 1);
                Rating {
                    user: r.user,
                    item: r.item,
                    day: day as usize,
                    value: r.rating,
                    raw: r.rating,
                }
            })
            .collect()
    };
    Ok(RatingDataset {
        split,
        dims: ML100K_DIMS,
        train: convert(base),
        test: convert(test),
        scaling: None,
    })
}

/// Center and scale of one row or column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardize {
    pub center: f64,
    pub scale: f64,
}

impl Standardize {
    pub const IDENTITY: Self = Self {
        center: 0.0,
        scale: 1.0,
    };

    fn change_from(&self, prev: &Self) -> f64 {
        (self.center - prev.center).abs().max((self.scale - prev.scale).abs())
    }
}

/// Learned bi-scaling of one matrix,
/// `z_ij = (x_ij - α_i - β_j) / (τ_i γ_j)`, with row `i` holding `(α_i, τ_i)`
/// and column `j` holding `(β_j, γ_j)`. Rows or columns absent from a map
/// use the identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceScaling {
    pub rows: HashMap<usize, Standardize>,
    pub cols: HashMap<usize, Standardize>,
    pub sweeps: usize,
    pub converged: bool,
}

impl SliceScaling {
    fn params(&self, row: usize, col: usize) -> (Standardize, Standardize) {
        (
            self.rows.get(&row).copied().unwrap_or(Standardize::IDENTITY),
            self.cols.get(&col).copied().unwrap_or(Standardize::IDENTITY),
        )
    }

    pub fn apply(&self, row: usize, col: usize, v: f64) -> f64 {
        let (r, c) = self.params(row, col);
        (v - r.center - c.center) / (r.scale * c.scale)
    }

    pub fn invert(&self, row: usize, col: usize, v: f64) -> f64 {
        let (r, c) = self.params(row, col);
        v * r.scale * c.scale + r.center + c.center
    }
}

pub const BISCALE_TOLERANCE: f64 = 1e-4;
pub const BISCALE_MAX_SWEEPS: usize = 50;
/// Smallest row or column scale, in rating units. Sparse day slices admit
/// near-exact fits that drive scales toward zero and blow up held-out
/// entries.
pub const BISCALE_SCALE_FLOOR: f64 = 0.5;

/// Refits every group of `keys` holding at least two entries so that its
/// entries of `z` get mean zero and unit mean square, with the other side's
/// parameters fixed. Returns the largest parameter change.
fn refit(
    keys: &[usize],
    other_keys: &[usize],
    x: &[f64],
    own: &mut HashMap<usize, Standardize>,
    other: &HashMap<usize, Standardize>,
) -> f64 {
    let other_of = |n: usize| other.get(&other_keys[n]).copied().unwrap_or(Standardize::IDENTITY);
    // per group: count, sum of w*y, sum of w, sum of squares
    let mut acc: HashMap<usize, (usize, f64, f64, f64)> = HashMap::new();
    for (n, &key) in keys.iter().enumerate() {
        let o = other_of(n);
        let w = 1.0 / o.scale;
        let a = acc.entry(key).or_insert((0, 0.0, 0.0, 0.0));
        a.0 += 1;
        a.1 += w * (x[n] - o.center);
        a.2 += w;
    }
    for (n, &key) in keys.iter().enumerate() {
        let a = acc.get_mut(&key).unwrap();
        if a.0 < 2 {
            continue;
        }
        let o = other_of(n);
        let center = a.1 / a.2;
        a.3 += ((x[n] - o.center - center) / o.scale).powi(2);
    }
    let mut change: f64 = 0.0;
    for (key, (n, swy, sw, ss)) in acc {
        if n < 2 {
            continue;
        }
        let spread = (ss / n as f64).sqrt();
        let next = Standardize {
            center: swy / sw,
            scale: spread.max(BISCALE_SCALE_FLOOR),
        };
        let prev = own.insert(key, next).unwrap_or(Standardize::IDENTITY);
        change = change.max(next.change_from(&prev));
    }
    change
}

/// Alternately standardizes the rows and then the columns of a sparsely
/// observed matrix given as `(row, col, value)` triples, until no row or
/// column parameter moves by `tol` or more in a sweep, or `max_sweeps`
/// sweeps have run. Rows and columns with fewer than two observations keep
/// identity parameters; scales never drop below [`BISCALE_SCALE_FLOOR`].
pub fn biscale_matrix(entries: &[(usize, usize, f64)], max_sweeps: usize, tol: f64) -> SliceScaling {
    let rows: Vec<usize> = entries.iter().map(|e| e.0).collect();
    let cols: Vec<usize> = entries.iter().map(|e| e.1).collect();
    let x: Vec<f64> = entries.iter().map(|e| e.2).collect();
    let mut out = SliceScaling::default();
    for sweep in 1..=max_sweeps {
        let dr = refit(&rows, &cols, &x, &mut out.rows, &out.cols);
        let dc = refit(&cols, &rows, &x, &mut out.cols, &out.rows);
        out.sweeps = sweep;
        if dr.max(dc) < tol {
            out.converged = true;
            break;
        }
    }
    out
}

/// Per-day bi-scaling learned on the training ratings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BiScaling {
    pub slices: HashMap<usize, SliceScaling>,
}

impl BiScaling {
    pub fn apply(&self, day: usize, user: usize, item: usize, v: f64) -> f64 {
        self.slices.get(&day).map_or(v, |s| s.apply(user, item, v))
    }

    pub fn invert(&self, day: usize, user: usize, item: usize, v: f64) -> f64 {
        self.slices.get(&day).map_or(v, |s| s.invert(user, item, v))
    }
}

/// Bi-scales every day slice of the training ratings and applies the learned
/// parameters to both train and test ratings.
pub fn biscale(dataset: &RatingDataset) -> Result<RatingDataset> {
    if dataset.train.is_empty() {
        return Err(Error::Data("bi-scaling needs training ratings".into()));
    }
    let mut by_day: HashMap<usize, Vec<(usize, usize, f64)>> = HashMap::new();
    for r in &dataset.train {
        by_day.entry(r.day).or_default().push((r.user, r.item, r.raw));
    }
    let slices: HashMap<usize, SliceScaling> = by_day
        .into_iter()
        .map(|(day, entries)| (day, biscale_matrix(&entries, BISCALE_MAX_SWEEPS, BISCALE_TOLERANCE)))
        .collect();
    let scaling = BiScaling { slices };
    let rescale = |rs: &[Rating]| -> Vec<Rating> {
        rs.iter()
            .map(|r| Rating {
                value: scaling.apply(r.day, r.user, r.item, r.raw),
                ..*r
            })
            .collect()
    };
    Ok(RatingDataset {
        split: dataset.split,
        dims: dataset.dims,
        train: rescale(&dataset.train),
        test: rescale(&dataset.test),
        scaling: Some(scaling),
    })
}
