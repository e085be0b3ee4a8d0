//! One-dimensional Gaussian mixture for anomalous-frame scores, fitted by EM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LOG_DENSITY_FLOOR;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GmmParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let p = Self {
            weights,
            means,
            variances,
        };
        p.validate()?;
        Ok(p)
    }

    /// A single Gaussian component.
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::Spec(format!(
                "mixture needs K ≥ 1 matching weights/means/variances (got {}/{}/{})",
                k,
                self.means.len(),
                self.variances.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite()))
            || self.means.iter().any(|m| !m.is_finite())
            || self.variances.iter().any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::Spec(
                "mixture weights and variances must be positive, means finite".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (m, v))| w * (v + (m - mu).powi(2)))
            .sum()
    }

    fn component_log_pdf(&self, j: usize, z: f64) -> f64 {
        let v = self.variances[j];
        -0.5 * (LN_2PI + v.ln() + (z - self.means[j]).powi(2) / v)
    }

    /// Unfloored mixture log-density via log-sum-exp.
    fn raw_log_pdf(&self, z: f64) -> f64 {
        let terms: Vec<f64> = (0..self.components())
            .map(|j| self.weights[j].ln() + self.component_log_pdf(j, z))
            .collect();
        log_sum_exp(&terms)
    }

    /// Natural-log density, floored at the shared density floor.
    pub fn log_pdf(&self, z: f64) -> f64 {
        let lp = self.raw_log_pdf(z);
        if lp.is_nan() {
            LOG_DENSITY_FLOOR
        } else {
            lp.max(LOG_DENSITY_FLOOR)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut j = self.components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                j = i;
                break;
            }
        }
        let n: f64 = rng.sample(rand_distr::StandardNormal);
        self.means[j] + self.variances[j].sqrt() * n
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Outcome of an EM run.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub params: GmmParams,
    /// Data log-likelihood before each M-step, then at the returned
    /// parameters.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits a K-component mixture by EM.
///
/// Initialization is k-means++ seeding from `seed` followed by a hard
/// assignment to the nearest seed. Iteration stops when the log-likelihood
/// gains less than `tol` or after `max_iter` M-steps. Variances are floored
/// at 10⁻⁶ × the sample variance.
pub fn fit_gmm_em(
    samples: &[f64],
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::Calibration("mixture needs K ≥ 1".into()));
    }
    if samples.len() < 5 * k {
        return Err(Error::Calibration(format!(
            "mixture with K={k} needs at least {} samples, got {}",
            5 * k,
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite sample in mixture fit".into()));
    }
    let n = samples.len();
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if var <= 0.0 {
        return Err(Error::DegenerateData("mixture fit on constant samples".into()));
    }
    let floor = 1e-6 * var;

    let mut params = kmeanspp_init(samples, k, seed, var, floor);
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let mut ll = e_step(&params, samples, &mut resp);
    trace.push(ll);
    while iterations < max_iter {
        m_step(&mut params, samples, &resp, floor);
        iterations += 1;
        let next = e_step(&params, samples, &mut resp);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < tol {
            converged = true;
            break;
        }
    }
    Ok(GmmFit {
        params,
        log_likelihood: trace,
        iterations,
        converged,
    })
}

fn kmeanspp_init(samples: &[f64], k: usize, seed: u64, var: f64, floor: f64) -> GmmParams {
    let mut rng = substream(seed, domain::EM, 0);
    let n = samples.len();
    let mut centers = vec![samples[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = samples.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            samples[pick]
        } else {
            samples[rng.random_range(0..n)]
        };
        centers.push(next);
        for (d, x) in d2.iter_mut().zip(samples) {
            *d = d.min((x - next).powi(2));
        }
    }

    let mut count = vec![0usize; k];
    let mut sum = vec![0.0; k];
    let mut sumsq = vec![0.0; k];
    for &x in samples {
        let j = (0..k)
            .min_by(|&a, &b| {
                (x - centers[a])
                    .abs()
                    .partial_cmp(&(x - centers[b]).abs())
                    .unwrap()
            })
            .unwrap();
        count[j] += 1;
        sum[j] += x;
        sumsq[j] += x * x;
    }
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for j in 0..k {
        if count[j] == 0 {
            weights.push(0.5 / n as f64);
            means.push(centers[j]);
            variances.push(var);
        } else {
            let c = count[j] as f64;
            let m = sum[j] / c;
            weights.push(c);
            means.push(m);
            variances.push((sumsq[j] / c - m * m).max(floor));
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmParams {
        weights,
        means,
        variances,
    }
}

/// Fills responsibilities and returns the data log-likelihood.
fn e_step(params: &GmmParams, samples: &[f64], resp: &mut [f64]) -> f64 {
    let k = params.components();
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let mut ll = 0.0;
    let mut terms = vec![0.0; k];
    for (i, &x) in samples.iter().enumerate() {
        for j in 0..k {
            terms[j] = log_w[j] + params.component_log_pdf(j, x);
        }
        let lse = log_sum_exp(&terms);
        ll += lse;
        for j in 0..k {
            resp[i * k + j] = (terms[j] - lse).exp();
        }
    }
    ll
}

fn m_step(params: &mut GmmParams, samples: &[f64], resp: &[f64], floor: f64) {
    let k = params.components();
    let n = samples.len() as f64;
    for j in 0..k {
        let mut nk = 0.0;
        let mut sx = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let r = resp[i * k + j];
            nk += r;
            sx += r * x;
        }
        if nk < 1e-300 {
            // Component lost all support; leave it in place with a token weight.
            params.weights[j] = 1e-300;
            continue;
        }
        let mu = sx / nk;
        let sv: f64 = samples
            .iter()
            .enumerate()
            .map(|(i, &x)| resp[i * k + j] * (x - mu).powi(2))
            .sum();
        params.weights[j] = nk / n;
        params.means[j] = mu;
        params.variances[j] = (sv / nk).max(floor);
    }
    let total: f64 = params.weights.iter().sum();
    params.weights.iter_mut().for_each(|w| *w /= total);
}
