//! Datasets: Gaussian blobs, Dirichlet label skew and CSV ingestion.

use std::io::Read;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Row-major features with integer labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Dataset {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.dim);
        self.x.extend_from_slice(row);
        self.y.push(label);
    }

    pub fn extend(&mut self, other: &Dataset) {
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut d = Dataset::new(self.dim);
        for &i in idx {
            d.push(self.row(i), self.y[i]);
        }
        d
    }

    pub fn classes(&self) -> usize {
        self.y.iter().max().map_or(0, |m| m + 1)
    }

    /// Numeric CSV, label in the last column. A non-numeric first row is
    /// treated as a header.
    pub fn from_csv<R: Read>(r: R) -> Result<Dataset, SimError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut out: Option<Dataset> = None;
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| SimError::Data(e.to_string()))?;
            let nums: Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
            let nums = match nums {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(SimError::Data(format!("line {}: {e}", line + 1))),
            };
            if nums.len() < 2 {
                return Err(SimError::Data(format!(
                    "line {}: need features and a label",
                    line + 1
                )));
            }
            let (label, feats) = nums.split_last().unwrap();
            if *label < 0.0 || label.fract() != 0.0 {
                return Err(SimError::Data(format!(
                    "line {}: label {label} is not a class index",
                    line + 1
                )));
            }
            let d = out.get_or_insert_with(|| Dataset::new(feats.len()));
            if feats.len() != d.dim {
                return Err(SimError::Data(format!(
                    "line {}: expected {} features",
                    line + 1,
                    d.dim
                )));
            }
            d.push(feats, *label as usize);
        }
        out.ok_or_else(|| SimError::Data("empty csv".into()))
    }
}

/// Client shards plus the server's root set and a held-out test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Federation {
    pub clients: Vec<Dataset>,
    pub root: Dataset,
    pub test: Dataset,
}

impl Federation {
    /// Pools every client sample and deals them out again with Dirichlet
    /// label skew; client counts are preserved only on average.
    pub fn reallocate<R: Rng + ?Sized>(&mut self, alpha: f64, rng: &mut R) -> Result<(), SimError> {
        let mut pool = Dataset::new(self.root.dim);
        for c in &self.clients {
            pool.extend(c);
        }
        self.clients = dirichlet_split(&pool, self.clients.len(), alpha, rng)?;
        Ok(())
    }
}

/// Splits `data` across `n` parts; each class is divided by proportions
/// drawn from Dir(alpha). Every part receives at least one sample.
pub fn dirichlet_split<R: Rng + ?Sized>(
    data: &Dataset,
    n: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<Dataset>, SimError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SimError::Config(format!(
            "dirichlet_alpha must be positive, got {alpha}"
        )));
    }
    if data.len() < n {
        return Err(SimError::Config(format!(
            "{} samples cannot cover {n} clients",
            data.len()
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| SimError::Config(e.to_string()))?;
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in 0..data.classes() {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.y[i] == c).collect();
        idx.shuffle(rng);
        let w: Vec<f64> = (0..n)
            .map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE))
            .collect();
        let total: f64 = w.iter().sum();
        let mut start = 0;
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            acc += wk / total;
            let end = if k + 1 == n {
                idx.len()
            } else {
                ((acc * idx.len() as f64).round() as usize).min(idx.len())
            };
            parts[k].extend_from_slice(&idx[start..end.max(start)]);
            start = end.max(start);
        }
    }
    // nobody may end up empty: move one sample from the largest part
    for k in 0..n {
        if parts[k].is_empty() {
            let big = (0..n).max_by_key(|&j| parts[j].len()).unwrap();
            let s = parts[big].pop().unwrap();
            parts[k].push(s);
        }
    }
    Ok(parts.iter().map(|p| data.subset(p)).collect())
}

/// Gaussian blobs: one unit-variance cloud per class around random centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub seed: u64,
    pub features: usize,
    pub classes: usize,
    pub clients: usize,
    pub samples_per_client: usize,
    pub root_size: usize,
    #[serde(default = "default_test")]
    pub test_size: usize,
    /// Distance between class centres in units of the noise std.
    #[serde(default = "default_sep")]
    pub separation: f64,
    #[serde(default)]
    pub dirichlet_alpha: Option<f64>,
}

fn default_test() -> usize {
    2000
}

fn default_sep() -> f64 {
    3.0
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            seed: 0,
            features: 32,
            classes: 2,
            clients: 100,
            samples_per_client: 64,
            root_size: 200,
            test_size: default_test(),
            separation: default_sep(),
            dirichlet_alpha: None,
        }
    }
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |f: &str, why: &str| Err(SimError::Config(format!("task.{f}: {why}")));
        if self.features == 0 {
            return bad("features", "must be positive");
        }
        if self.classes < 2 {
            return bad("classes", "need at least two classes");
        }
        if self.clients == 0 {
            return bad("clients", "must be positive");
        }
        if self.samples_per_client == 0 {
            return bad("samples_per_client", "must be positive");
        }
        if self.root_size == 0 {
            return bad("root_size", "the server needs a root dataset");
        }
        if self.test_size == 0 {
            return bad("test_size", "must be positive");
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return bad("separation", "must be finite and non-negative");
        }
        Ok(())
    }

    /// Random directions scaled to radius `separation / 2`; with two
    /// classes the second centre mirrors the first.
    fn centres(&self, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
        let r = self.separation / 2.0;
        let mut random = || {
            let v: Vec<f64> = (0..self.features)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let n = v
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            v.iter().map(|x| x * r / n).collect::<Vec<f64>>()
        };
        if self.classes == 2 {
            let c = random();
            let m = c.iter().map(|x| -x).collect();
            return vec![c, m];
        }
        (0..self.classes).map(|_| random()).collect()
    }

    fn draw(&self, centres: &[Vec<f64>], count: usize, rng: &mut ChaCha20Rng) -> Dataset {
        let mut d = Dataset::new(self.features);
        let mut row = vec![0.0; self.features];
        for i in 0..count {
            let c = i % self.classes;
            for (x, m) in row.iter_mut().zip(&centres[c]) {
                *x = m + rng.sample::<f64, _>(StandardNormal);
            }
            d.push(&row, c);
        }
        d
    }

    /// Clients, root and test sets all come from the same distribution.
    pub fn generate(&self) -> Result<Federation, SimError> {
        self.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let centres = self.centres(&mut rng);
        let pool = self.draw(&centres, self.clients * self.samples_per_client, &mut rng);
        let clients = match self.dirichlet_alpha {
            Some(a) => dirichlet_split(&pool, self.clients, a, &mut rng)?,
            None => {
                let mut idx: Vec<usize> = (0..pool.len()).collect();
                idx.shuffle(&mut rng);
                idx.chunks(self.samples_per_client)
                    .map(|c| pool.subset(c))
                    .collect()
            }
        };
        let root = self.draw(&centres, self.root_size, &mut rng);
        let test = self.draw(&centres, self.test_size, &mut rng);
        Ok(Federation {
            clients,
            root,
            test,
        })
    }
}

/// Splits an external dataset into clients, root and test sets.
pub fn federate<R: Rng + ?Sized>(
    data: &Dataset,
    clients: usize,
    root_size: usize,
    test_size: usize,
    alpha: Option<f64>,
    rng: &mut R,
) -> Result<Federation, SimError> {
    if root_size == 0 {
        return Err(SimError::Config(
            "task.root_size: the server needs a root dataset".into(),
        ));
    }
    if root_size + test_size + clients > data.len() {
        return Err(SimError::Config(format!(
            "task: {} samples cannot cover root {root_size}, test {test_size} and {clients} clients",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let root = data.subset(&idx[..root_size]);
    let test = data.subset(&idx[root_size..root_size + test_size]);
    let rest = data.subset(&idx[root_size + test_size..]);
    let clients = match alpha {
        Some(a) => dirichlet_split(&rest, clients, a, rng)?,
        None => {
            let per = rest.len() / clients;
            (0..clients)
                .map(|k| rest.subset(&(k * per..(k + 1) * per).collect::<Vec<_>>()))
                .collect()
        }
    };
    Ok(Federation {
        clients,
        root,
        test,
    })
}
