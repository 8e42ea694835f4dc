//! Post-hoc chain statistics.

use nalgebra::DVector;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::manifold::Manifold;
use crate::sampler::TransitionRecord;

/// Shortest series [`ess`] accepts.
pub const MIN_ESS_LEN: usize = 10;
/// Default pass/fail line for z-scores.
pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub value: f64,
    /// The series was constant; `value` is pinned to 1.
    pub degenerate: bool,
}

/// Biased autocovariance at every lag, via zero-padded FFT.
fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().take(n).map(|c| c.re / (len as f64 * n as f64)).collect()
}

/// Effective sample size `n / (1 + 2 Σ ρ̂_k)`, with the autocorrelation sum
/// truncated by Geyer's initial positive sequence rule and the result capped
/// at `n`.
pub fn ess(series: &[f64]) -> Result<Ess> {
    let n = series.len();
    if n < MIN_ESS_LEN {
        return Err(invalid(format!("ESS needs at least {MIN_ESS_LEN} values, got {n}")));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(invalid("ESS input has non-finite values"));
    }
    let first = series[0];
    if series.iter().all(|&x| x == first) {
        return Ok(Ess {
            value: 1.0,
            degenerate: true,
        });
    }
    let acov = autocovariance(series);
    if !(acov[0] > 0.0) {
        return Ok(Ess {
            value: 1.0,
            degenerate: true,
        });
    }
    let rho = |k: usize| acov[k] / acov[0];
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let nf = n as f64;
    Ok(Ess {
        value: (nf / tau.max(1.0)).min(nf),
        degenerate: false,
    })
}

fn mean(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

fn variance(series: &[f64]) -> f64 {
    let m = mean(series);
    series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / series.len() as f64
}

/// Standard error of the mean of `series` using its ESS.
pub fn standard_error(series: &[f64]) -> Result<f64> {
    let e = ess(series)?;
    if e.degenerate {
        return Ok(0.0);
    }
    Ok((variance(series) / e.value).sqrt())
}

fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let diff = a - b;
    let denom = (se_a * se_a + se_b * se_b).sqrt();
    if diff == 0.0 {
        0.0
    } else if denom == 0.0 {
        f64::INFINITY.copysign(diff)
    } else {
        diff / denom
    }
}

fn coordinate(samples: &[DVector<f64>], i: usize) -> Vec<f64> {
    samples.iter().map(|x| x[i]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub n_samples: usize,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// `‖mean of x‖`.
    pub resultant_length: f64,
    /// Per-coordinate ESS; absent when the chain is shorter than
    /// [`MIN_ESS_LEN`].
    pub ess: Option<Vec<f64>>,
    pub max_constraint_drift: f64,
    pub failed_transitions: usize,
}

/// Summaries from a sample stream and its transition records.
pub fn summarize(manifold: &Manifold, samples: &[DVector<f64>], records: &[TransitionRecord]) -> Result<ChainSummary> {
    if samples.len() != records.len() {
        return Err(invalid(format!(
            "{} samples but {} transition records",
            samples.len(),
            records.len()
        )));
    }
    let dim = manifold.ambient_dim();
    if let Some(x) = samples.iter().find(|x| x.len() != dim) {
        return Err(invalid(format!("sample has length {}, expected {dim}", x.len())));
    }
    let n = samples.len();
    let mut mean_v = DVector::zeros(dim);
    let mut second = DVector::zeros(dim);
    for x in samples {
        mean_v += x;
        second += x.component_mul(x);
    }
    if n > 0 {
        mean_v /= n as f64;
        second /= n as f64;
    }
    let ess_values = if n >= MIN_ESS_LEN {
        Some(
            (0..dim)
                .map(|i| ess(&coordinate(samples, i)).map(|e| e.value))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let accepted = records.iter().filter(|r| r.accepted).count();
    Ok(ChainSummary {
        n_samples: n,
        acceptance_rate: if n > 0 { accepted as f64 / n as f64 } else { 0.0 },
        resultant_length: mean_v.norm(),
        mean: mean_v.iter().copied().collect(),
        second_moment: second.iter().copied().collect(),
        ess: ess_values,
        max_constraint_drift: samples
            .iter()
            .map(|x| manifold.constraint_violation(x))
            .fold(0.0, f64::max),
        failed_transitions: records.iter().filter(|r| r.failed).count(),
    })
}

/// z-scores of chain statistics against an oracle sample, one per
/// coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub mean_z: Vec<f64>,
    pub second_moment_z: Vec<f64>,
}

impl OracleComparison {
    pub fn max_abs_z(&self) -> f64 {
        self.mean_z
            .iter()
            .chain(&self.second_moment_z)
            .fold(0.0, |acc, z| acc.max(z.abs()))
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_abs_z() < threshold
    }
}

pub fn compare_to_oracle(samples: &[DVector<f64>], oracle: &[DVector<f64>]) -> Result<OracleComparison> {
    if samples.is_empty() || oracle.is_empty() {
        return Err(invalid("comparison needs nonempty sample sets"));
    }
    let dim = samples[0].len();
    if oracle[0].len() != dim {
        return Err(invalid("sample and oracle dimensions differ"));
    }
    let mut mean_z = Vec::with_capacity(dim);
    let mut second_moment_z = Vec::with_capacity(dim);
    for i in 0..dim {
        let a = coordinate(samples, i);
        let b = coordinate(oracle, i);
        mean_z.push(z_score(mean(&a), standard_error(&a)?, mean(&b), standard_error(&b)?));
        let a2: Vec<f64> = a.iter().map(|x| x * x).collect();
        let b2: Vec<f64> = b.iter().map(|x| x * x).collect();
        second_moment_z.push(z_score(
            mean(&a2),
            standard_error(&a2)?,
            mean(&b2),
            standard_error(&b2)?,
        ));
    }
    Ok(OracleComparison {
        mean_z,
        second_moment_z,
    })
}

/// z-score of the resultant length `‖x̄‖` between two sample sets. Each
/// side's standard error comes from projecting its samples onto its own
/// mean direction.
pub fn resultant_length_z(samples: &[DVector<f64>], oracle: &[DVector<f64>]) -> Result<f64> {
    let side = |s: &[DVector<f64>]| -> Result<(f64, f64)> {
        if s.is_empty() {
            return Err(invalid("comparison needs nonempty sample sets"));
        }
        let mut m = DVector::zeros(s[0].len());
        for x in s {
            m += x;
        }
        m /= s.len() as f64;
        let r = m.norm();
        if r == 0.0 {
            return Ok((0.0, 0.0));
        }
        let u = &m / r;
        let proj: Vec<f64> = s.iter().map(|x| u.dot(x)).collect();
        Ok((r, standard_error(&proj)?))
    };
    let (ra, sa) = side(samples)?;
    let (rb, sb) = side(oracle)?;
    Ok(z_score(ra, sa, rb, sb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::sample_von_mises_fisher;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ess_rejects_short_series_and_flags_constant_ones() {
        assert!(ess(&[1.0; 9]).is_err());
        let e = ess(&[2.5; 100]).unwrap();
        assert!(e.degenerate);
        assert!(e.value > 0.0);
        assert!(ess(&[f64::NAN; 20]).is_err());
    }

    #[test]
    fn ess_of_iid_gaussian_is_close_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let series: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = ess(&series).unwrap();
        let ratio = e.value / n as f64;
        assert!((0.8..=1.2).contains(&ratio), "ESS/n = {ratio}");
    }

    #[test]
    fn ess_of_ar1_matches_analytic_value() {
        // ρ_k = φ^k, so 1 + 2Σρ_k = (1+φ)/(1−φ).
        let phi: f64 = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut x = 0.0;
        let scale = (1.0 - phi * phi).sqrt();
        let series: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + scale * z;
                x
            })
            .collect();
        let expected = (1.0 - phi) / (1.0 + phi);
        let ratio = ess(&series).unwrap().value / n as f64;
        assert!((ratio - expected).abs() < 0.15 * expected, "ESS/n = {ratio}");
    }

    #[test]
    fn fft_autocovariance_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let series: Vec<f64> = (0..257).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fast = autocovariance(&series);
        let m = mean(&series);
        for k in [0, 1, 5, 100, 256] {
            let direct: f64 = (0..series.len() - k)
                .map(|i| (series[i] - m) * (series[i + k] - m))
                .sum::<f64>()
                / series.len() as f64;
            assert!((fast[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_sets_give_zero_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<DVector<f64>> = (0..500)
            .map(|_| DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let cmp = compare_to_oracle(&s, &s).unwrap();
        assert_eq!(cmp.max_abs_z(), 0.0);
        assert_eq!(resultant_length_z(&s, &s).unwrap(), 0.0);
        assert!(compare_to_oracle(&s, &[]).is_err());
    }

    #[test]
    fn wrong_target_is_detected() {
        let m = Manifold::sphere(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mu = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let vmf: Vec<_> = (0..20_000)
            .map(|_| sample_von_mises_fisher(5.0, &mu, &mut rng))
            .collect();
        let uniform: Vec<_> = (0..20_000)
            .map(|_| m.reference_uniform_sample(&mut rng).into_coords())
            .collect();
        let uniform2: Vec<_> = (0..20_000)
            .map(|_| m.reference_uniform_sample(&mut rng).into_coords())
            .collect();
        assert!(compare_to_oracle(&vmf, &uniform).unwrap().max_abs_z() > 5.0);
        assert!(compare_to_oracle(&uniform2, &uniform)
            .unwrap()
            .passes(DEFAULT_Z_THRESHOLD + 1.0));
    }

    #[test]
    fn summary_fields() {
        let m = Manifold::sphere(3).unwrap();
        let samples = vec![
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            DVector::from_row_slice(&[0.0, 1.0, 0.0]),
        ];
        let rec = TransitionRecord {
            energy: 0.0,
            proposed_energy: 0.0,
            log_uniform: -1.0,
            accepted: true,
            drift: 0.0,
            speed_start: 1.0,
            speed_end: 1.0,
            failed: false,
        };
        let rejected = TransitionRecord { accepted: false, ..rec };
        let s = summarize(&m, &samples, &[rec, rejected]).unwrap();
        assert_eq!(s.acceptance_rate, 0.5);
        assert_eq!(s.mean, vec![0.5, 0.5, 0.0]);
        assert!((s.resultant_length - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(s.ess.is_none());
        assert!(summarize(&m, &samples, &[rec]).is_err());
    }
}
