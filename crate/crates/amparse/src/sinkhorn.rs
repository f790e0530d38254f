//! Gumbel-Sinkhorn machinery: noise sampling, the relaxed permutation
//! operator, exact perturb-and-max, the closed-form Gumbel KL term and the
//! column-overlap regularizer.
//!
//! Sinkhorn normalization runs in log space (alternating row/column
//! log-sum-exp shifts), so low temperatures never overflow, and the whole
//! operator is recorded on the tape and differentiable end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Matrix of i.i.d. standard Gumbel draws, reproducible from its seed.
#[derive(Clone, Debug)]
pub struct NoiseMatrix {
    pub sigma: Tensor,
    pub seed: u64,
}

/// Sinkhorn hyperparameters. Defaults follow the joint-training setting:
/// temperature 1, prior temperature 5, 10 iterations, overlap weight 10.
#[derive(Clone, Copy, Debug)]
pub struct SinkhornConfig {
    pub temperature: f64,
    pub prior_temperature: f64,
    pub iterations: usize,
    pub lambda: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            temperature: 1.0,
            prior_temperature: 5.0,
            iterations: 10,
            lambda: 10.0,
        }
    }
}

impl SinkhornConfig {
    /// Two-stage training runs fewer Sinkhorn steps.
    pub fn two_stage() -> Self {
        SinkhornConfig {
            iterations: 5,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 || self.prior_temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperatures must be positive, got t={} t0={}",
                self.temperature, self.prior_temperature
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("sinkhorn needs at least one iteration".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Row-stochastic relaxation of a permutation matrix.
#[derive(Clone, Debug)]
pub struct RelaxedPermutation {
    pub a_hat: Tensor,
    pub temperature: f64,
    pub iterations: usize,
}

impl RelaxedPermutation {
    pub fn n(&self) -> usize {
        self.a_hat.rows()
    }

    /// Argmax word index per concept row; ties break toward the lower index.
    pub fn row_argmax(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let row = self.a_hat.row_slice(i);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Draws an n-by-n matrix of standard Gumbel noise from a counter-based
/// generator. Uniform draws are clamped away from {0, 1} so every entry is
/// finite.
pub fn sample_gumbel(n: usize, seed: u64) -> NoiseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * n)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(1e-300, 1.0 - 1e-16);
            -(-u.ln()).ln()
        })
        .collect();
    NoiseMatrix {
        sigma: Tensor::from_vec(vec![n, n], data).expect("square noise"),
        seed,
    }
}

/// Records the relaxed permutation operator on a tape, returning the
/// log-domain result. Rows of `exp(result)` sum to one exactly because the
/// final pass is a row normalization.
pub fn gumbel_sinkhorn_log(
    tape: &mut Tape,
    phi: Var,
    sigma: &Tensor,
    cfg: &SinkhornConfig,
) -> Result<Var> {
    cfg.validate()?;
    let shape = tape.val(phi).shape().to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Tensor(format!(
            "gumbel_sinkhorn needs a square matrix, got {shape:?}"
        )));
    }
    if sigma.shape() != shape.as_slice() {
        return Err(Error::Shape {
            op: "gumbel_sinkhorn",
            lhs: shape,
            rhs: sigma.shape().to_vec(),
        });
    }
    let noise = tape.constant(sigma.clone());
    let mut log_m = tape.add(phi, noise)?;
    log_m = tape.mul_scalar(log_m, 1.0 / cfg.temperature);
    for _ in 0..cfg.iterations {
        let row_lse = tape.logsumexp(log_m, 1)?;
        log_m = tape.sub_rowvec(log_m, row_lse)?;
        let col_lse = tape.logsumexp(log_m, 0)?;
        log_m = tape.sub_colvec(log_m, col_lse)?;
    }
    let row_lse = tape.logsumexp(log_m, 1)?;
    tape.sub_rowvec(log_m, row_lse)
}

/// Tape-recorded relaxed permutation in probability space.
pub fn gumbel_sinkhorn_var(
    tape: &mut Tape,
    phi: Var,
    sigma: &Tensor,
    cfg: &SinkhornConfig,
) -> Result<(Var, Var)> {
    let log_a = gumbel_sinkhorn_log(tape, phi, sigma, cfg)?;
    let a_hat = tape.exp(log_a);
    Ok((log_a, a_hat))
}

/// Plain (non-tape) entry point.
pub fn gumbel_sinkhorn(
    phi: &Tensor,
    noise: &NoiseMatrix,
    cfg: &SinkhornConfig,
) -> Result<RelaxedPermutation> {
    let mut tape = Tape::new();
    let phi_var = tape.constant(phi.clone());
    let (_, a_hat) = gumbel_sinkhorn_var(&mut tape, phi_var, &noise.sigma, cfg)?;
    Ok(RelaxedPermutation {
        a_hat: tape.val(a_hat).clone(),
        temperature: cfg.temperature,
        iterations: cfg.iterations,
    })
}

/// Exact perturb-and-max: the highest-scoring permutation under `phi + sigma`.
///
/// Exhaustive lexicographic search for n <= 8 (ties resolve to the
/// lexicographically smallest permutation); an O(n^3) shortest-augmenting-path
/// assignment solver beyond that.
pub fn perturb_and_max(phi: &Tensor, sigma: &Tensor) -> Result<Vec<usize>> {
    if phi.shape().len() != 2 || phi.rows() != phi.cols() || phi.shape() != sigma.shape() {
        return Err(Error::Shape {
            op: "perturb_and_max",
            lhs: phi.shape().to_vec(),
            rhs: sigma.shape().to_vec(),
        });
    }
    let n = phi.rows();
    let mut scores = phi.clone();
    for (s, g) in scores.data_mut().iter_mut().zip(sigma.data()) {
        *s += g;
    }
    if n <= 8 {
        Ok(brute_force_assignment(&scores))
    } else {
        Ok(assignment_max(&scores))
    }
}

/// Lexicographic exhaustive argmax over permutations (oracle path).
pub fn brute_force_assignment(scores: &Tensor) -> Vec<usize> {
    let n = scores.rows();
    let mut best: Vec<usize> = Vec::new();
    let mut best_score = f64::NEG_INFINITY;
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(
        scores: &Tensor,
        current: &mut Vec<usize>,
        used: &mut [bool],
        acc: f64,
        best: &mut Vec<usize>,
        best_score: &mut f64,
    ) {
        let i = current.len();
        let n = scores.rows();
        if i == n {
            if acc > *best_score {
                *best_score = acc;
                *best = current.clone();
            }
            return;
        }
        for k in 0..n {
            if !used[k] {
                used[k] = true;
                current.push(k);
                rec(scores, current, used, acc + scores.at2(i, k), best, best_score);
                current.pop();
                used[k] = false;
            }
        }
    }
    rec(scores, &mut current, &mut used, 0.0, &mut best, &mut best_score);
    best
}

/// Maximum-score assignment via the Hungarian method with potentials.
pub fn assignment_max(scores: &Tensor) -> Vec<usize> {
    let n = scores.rows();
    let inf = f64::INFINITY;
    // Minimize the negated scores; 1-based arrays per the classic formulation.
    let cost = |i: usize, j: usize| -scores.at2(i, j);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        result[p[j] - 1] = j - 1;
    }
    result
}

/// Closed-form KL between `Gumbel(phi/t, 1/t)` and `Gumbel(0, 1/t0)` for one
/// entry.
///
/// With `mu1 = phi/t`, `beta1 = 1/t`, `mu2 = 0`, `beta2 = 1/t0`:
///
/// ```text
/// KL = ln(beta2/beta1) + gamma (beta1/beta2 - 1) - 1
///      + (mu1 - mu2)/beta2 + e^{(mu2 - mu1)/beta2} Gamma(1 + beta1/beta2)
/// ```
pub fn gumbel_kl_entry(phi: f64, t: f64, t0: f64) -> f64 {
    let ratio = t0 / t; // beta1/beta2
    (t / t0).ln() + EULER_GAMMA * (ratio - 1.0) - 1.0 + phi * t0 / t
        + (-phi * t0 / t).exp() * libm::tgamma(1.0 + ratio)
}

/// Sum of per-entry Gumbel KL terms over a score matrix.
pub fn gumbel_kl(phi: &Tensor, t: f64, t0: f64) -> Result<f64> {
    if t <= 0.0 || t0 <= 0.0 {
        return Err(Error::Config(format!(
            "gumbel_kl temperatures must be positive, got t={t} t0={t0}"
        )));
    }
    Ok(phi.data().iter().map(|&x| gumbel_kl_entry(x, t, t0)).sum())
}

/// Tape-recorded Gumbel KL: gradient w.r.t. phi is
/// `(t0/t) (1 - e^{-phi t0/t})` per entry.
pub fn gumbel_kl_var(tape: &mut Tape, phi: Var, t: f64, t0: f64) -> Result<Var> {
    if t <= 0.0 || t0 <= 0.0 {
        return Err(Error::Config(format!(
            "gumbel_kl temperatures must be positive, got t={t} t0={t0}"
        )));
    }
    // -phi * t0/t -> exp -> per-entry constants added via closed form.
    let scaled = tape.mul_scalar(phi, -t0 / t);
    let e = tape.exp(scaled);
    let gamma_term = libm::tgamma(1.0 + t0 / t);
    let e = tape.mul_scalar(e, gamma_term);
    let lin = tape.mul_scalar(phi, t0 / t);
    let combined = tape.add(e, lin)?;
    let total = tape.sum(combined);
    let n_entries = tape.val(phi).numel() as f64;
    let const_part = (t / t0).ln() + EULER_GAMMA * (t0 / t - 1.0) - 1.0;
    Ok(tape.add_scalar(total, const_part * n_entries))
}

/// Column-overlap penalty `lambda * sum_j max(colsum_j - 1, 0)`.
pub fn overlap_penalty(a_hat: &Tensor, lambda: f64) -> f64 {
    let (rows, cols) = (a_hat.rows(), a_hat.cols());
    let mut total = 0.0;
    for j in 0..cols {
        let mut s = 0.0;
        for i in 0..rows {
            s += a_hat.at2(i, j);
        }
        total += (s - 1.0).max(0.0);
    }
    lambda * total
}

/// Tape-recorded overlap penalty.
pub fn overlap_penalty_var(tape: &mut Tape, a_hat: Var, lambda: f64) -> Result<Var> {
    let col_sums = tape.sum_axis(a_hat, 0)?;
    let shifted = tape.add_scalar(col_sums, -1.0);
    let clipped = tape.relu(shifted);
    let total = tape.sum(clipped);
    Ok(tape.mul_scalar(total, lambda))
}

/// Log-density of Gumbel(location mu, scale beta) at x.
pub fn gumbel_log_pdf(x: f64, mu: f64, beta: f64) -> f64 {
    let z = (x - mu) / beta;
    -beta.ln() - z - (-z).exp()
}

/// Inverse-CDF sampler for Gumbel(location mu, scale beta).
pub fn gumbel_sample(rng: &mut ChaCha8Rng, mu: f64, beta: f64) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(1e-300, 1.0 - 1e-16);
    mu - beta * (-u.ln()).ln()
}

/// Monte-Carlo estimate of the Gumbel KL for one entry; returns
/// (mean, standard error).
pub fn gumbel_kl_monte_carlo(phi: f64, t: f64, t0: f64, samples: usize, seed: u64) -> (f64, f64) {
    let (mu1, beta1) = (phi / t, 1.0 / t);
    let (mu2, beta2) = (0.0, 1.0 / t0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let x = gumbel_sample(&mut rng, mu1, beta1);
        let d = gumbel_log_pdf(x, mu1, beta1) - gumbel_log_pdf(x, mu2, beta2);
        sum += d;
        sum_sq += d * d;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    (mean, (var / samples as f64).sqrt())
}

pub fn row_sums(m: &Tensor) -> Vec<f64> {
    (0..m.rows()).map(|i| m.row_slice(i).iter().sum()).collect()
}

pub fn col_sums(m: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += m.at2(i, j);
        }
    }
    out
}
