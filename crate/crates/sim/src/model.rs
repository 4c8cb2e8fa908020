//! Models with exact full-batch gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic regression, weights then bias. Labels are 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Logistic {
    pub features: usize,
}

impl Logistic {
    pub fn dim(&self) -> usize {
        self.features + 1
    }

    fn score(&self, w: &[f64], x: &[f64]) -> f64 {
        x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[self.features]
    }

    pub fn gradient(&self, w: &[f64], d: &Dataset) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for i in 0..d.len() {
            let x = d.row(i);
            let r = sigmoid(self.score(w, x)) - d.y[i] as f64;
            for (gk, xk) in g.iter_mut().zip(x) {
                *gk += r * xk;
            }
            g[self.features] += r;
        }
        let n = d.len().max(1) as f64;
        g.iter_mut().for_each(|x| *x /= n);
        g
    }

    pub fn loss(&self, w: &[f64], d: &Dataset) -> f64 {
        let s: f64 = (0..d.len())
            .map(|i| {
                let z = self.score(w, d.row(i));
                // log(1 + e^z) - y z, stable
                z.max(0.0) + (-z.abs()).exp().ln_1p() - d.y[i] as f64 * z
            })
            .sum();
        s / d.len().max(1) as f64
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        usize::from(self.score(w, x) > 0.0)
    }
}

/// Multinomial logistic regression; row `c` of the weight matrix holds the
/// class-`c` weights followed by its bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Softmax {
    pub features: usize,
    pub classes: usize,
}

impl Softmax {
    pub fn dim(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn probs(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let k = self.features + 1;
        let z: Vec<f64> = (0..self.classes)
            .map(|c| {
                let r = &w[c * k..(c + 1) * k];
                x.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() + r[self.features]
            })
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    pub fn gradient(&self, w: &[f64], d: &Dataset) -> Vec<f64> {
        let k = self.features + 1;
        let mut g = vec![0.0; self.dim()];
        for i in 0..d.len() {
            let x = d.row(i);
            let p = self.probs(w, x);
            for c in 0..self.classes {
                let r = p[c] - f64::from(u8::from(d.y[i] == c));
                let row = &mut g[c * k..(c + 1) * k];
                for (gk, xk) in row.iter_mut().zip(x) {
                    *gk += r * xk;
                }
                row[self.features] += r;
            }
        }
        let n = d.len().max(1) as f64;
        g.iter_mut().for_each(|x| *x /= n);
        g
    }

    pub fn loss(&self, w: &[f64], d: &Dataset) -> f64 {
        let s: f64 = (0..d.len())
            .map(|i| -self.probs(w, d.row(i))[d.y[i]].max(1e-300).ln())
            .sum();
        s / d.len().max(1) as f64
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let p = self.probs(w, x);
        (0..self.classes)
            .max_by(|&a, &b| p[a].total_cmp(&p[b]))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Logistic(Logistic),
    Softmax(Softmax),
}

impl Classifier {
    /// Logistic for two classes, softmax otherwise.
    pub fn for_task(features: usize, classes: usize) -> Self {
        if classes == 2 {
            Classifier::Logistic(Logistic { features })
        } else {
            Classifier::Softmax(Softmax { features, classes })
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Classifier::Logistic(m) => m.dim(),
            Classifier::Softmax(m) => m.dim(),
        }
    }

    pub fn gradient(&self, w: &[f64], d: &Dataset) -> Vec<f64> {
        match self {
            Classifier::Logistic(m) => m.gradient(w, d),
            Classifier::Softmax(m) => m.gradient(w, d),
        }
    }

    pub fn loss(&self, w: &[f64], d: &Dataset) -> f64 {
        match self {
            Classifier::Logistic(m) => m.loss(w, d),
            Classifier::Softmax(m) => m.loss(w, d),
        }
    }

    pub fn accuracy(&self, w: &[f64], d: &Dataset) -> f64 {
        if d.is_empty() {
            return 0.0;
        }
        let hits = (0..d.len())
            .filter(|&i| {
                let p = match self {
                    Classifier::Logistic(m) => m.predict(w, d.row(i)),
                    Classifier::Softmax(m) => m.predict(w, d.row(i)),
                };
                p == d.y[i]
            })
            .count();
        hits as f64 / d.len() as f64
    }
}

/// Separable quadratic `f_i(w) = 1/2 sum_k a_ik (w_k - w*_k)^2` with one
/// shared minimiser and per-client curvature in `[mu, l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub optimum: Vec<f64>,
    /// Row 0 is the server's root objective, row `i + 1` client `i`.
    pub curvature: Vec<Vec<f64>>,
}

impl Quadratic {
    pub fn generate(dim: usize, clients: usize, mu: f64, l: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let optimum = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let curvature = (0..=clients)
            .map(|_| (0..dim).map(|_| rng.random_range(mu..=l)).collect())
            .collect();
        Quadratic { optimum, curvature }
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    pub fn clients(&self) -> usize {
        self.curvature.len() - 1
    }

    fn grad(&self, row: usize, w: &[f64]) -> Vec<f64> {
        self.curvature[row]
            .iter()
            .zip(w.iter().zip(&self.optimum))
            .map(|(a, (x, o))| a * (x - o))
            .collect()
    }

    pub fn client_gradient(&self, i: usize, w: &[f64]) -> Vec<f64> {
        self.grad(i + 1, w)
    }

    pub fn root_gradient(&self, w: &[f64]) -> Vec<f64> {
        self.grad(0, w)
    }

    pub fn distance(&self, w: &[f64]) -> f64 {
        w.iter()
            .zip(&self.optimum)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        (1..self.curvature.len())
            .map(|r| {
                self.curvature[r]
                    .iter()
                    .zip(w.iter().zip(&self.optimum))
                    .map(|(a, (x, o))| 0.5 * a * (x - o) * (x - o))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.clients().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticTask;

    fn numeric(f: impl Fn(&[f64]) -> f64, w: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..w.len())
            .map(|k| {
                let mut a = w.to_vec();
                let mut b = w.to_vec();
                a[k] += h;
                b[k] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let diff = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        diff / scale <= tol
    }

    #[test]
    fn logistic_gradient_at_zero_is_closed_form() {
        // balanced binary data: gradient = (mean over class 0 - mean over class 1) / 2 per feature, bias 0
        let mut d = Dataset::new(2);
        d.push(&[1.0, 2.0], 0);
        d.push(&[3.0, -1.0], 0);
        d.push(&[-2.0, 0.5], 1);
        d.push(&[0.0, 1.5], 1);
        let m = Logistic { features: 2 };
        let g = m.gradient(&[0.0; 3], &d);
        let expect = [
            (0.5 * (1.0 + 3.0) - 0.5 * (-2.0 + 0.0)) / 4.0,
            (0.5 * (2.0 - 1.0) - 0.5 * (0.5 + 1.5)) / 4.0,
            0.0,
        ];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{g:?}");
        }
        assert!((m.loss(&[0.0; 3], &d) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let t = SyntheticTask {
            features: 5,
            classes: 3,
            clients: 1,
            samples_per_client: 60,
            ..Default::default()
        };
        let d = &t.generate().unwrap().clients[0];
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let sm = Softmax {
            features: 5,
            classes: 3,
        };
        let w: Vec<f64> = (0..sm.dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
        assert!(rel_close(
            &sm.gradient(&w, d),
            &numeric(|w| sm.loss(w, d), &w),
            1e-5
        ));

        let mut bin = d.clone();
        bin.y.iter_mut().for_each(|y| *y = usize::from(*y > 0));
        let lg = Logistic { features: 5 };
        let w: Vec<f64> = (0..lg.dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
        assert!(rel_close(
            &lg.gradient(&w, &bin),
            &numeric(|w| lg.loss(w, &bin), &w),
            1e-5
        ));

        let q = Quadratic::generate(6, 3, 1.0, 2.0, 4);
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mean: Vec<f64> = (0..6)
            .map(|k| (0..3).map(|i| q.client_gradient(i, &w)[k]).sum::<f64>() / 3.0)
            .collect();
        assert!(rel_close(&mean, &numeric(|w| q.loss(w), &w), 1e-5));
    }

    #[test]
    fn duplicated_data_same_gradient() {
        let t = SyntheticTask {
            features: 3,
            clients: 1,
            samples_per_client: 10,
            ..Default::default()
        };
        let d = t.generate().unwrap().clients[0].clone();
        let mut dd = d.clone();
        dd.extend(&d);
        let m = Logistic { features: 3 };
        let w = [0.1, -0.2, 0.3, 0.05];
        assert!(rel_close(&m.gradient(&w, &d), &m.gradient(&w, &dd), 1e-14));
    }

    #[test]
    fn quadratic_optimum_has_zero_gradient() {
        let q = Quadratic::generate(4, 5, 1.0, 2.0, 9);
        let o = q.optimum.clone();
        assert!(q.root_gradient(&o).iter().all(|&x| x == 0.0));
        assert_eq!(q.distance(&o), 0.0);
    }
}
