//! Deterministic subject-level bootstrap.
//!
//! Every replicate draws from its own xoshiro256++ stream, seeded with
//! `stream_seed(master_seed, replicate_index)` (two rounds of the SplitMix64
//! finaliser). Replicates therefore do not depend on execution order, and the
//! engine evaluates them in parallel. Statistics must be reentrant (`Fn + Sync`).

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, Real};

/// Named generator behind every random stream in the crate.
pub type StreamRng = Xoshiro256PlusPlus;

/// Resamples failing beyond this fraction abort the bootstrap.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub n_resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl BootstrapSpec {
    pub fn new(n_resamples: usize, seed: u64) -> Result<Self> {
        Self::with_confidence(n_resamples, seed, 0.95)
    }

    pub fn with_confidence(n_resamples: usize, seed: u64, confidence: f64) -> Result<Self> {
        if n_resamples == 0 {
            return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence must lie in (0,1), got {confidence}")));
        }
        Ok(Self { n_resamples, seed, confidence })
    }
}

/// Summary of a bootstrapped statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult<T> {
    pub point: T,
    pub se: T,
    pub ci: (T, T),
    /// Resamples on which the statistic was estimable.
    pub n_effective: usize,
    pub n_failed: usize,
    pub replicates: Option<Vec<T>>,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` under `seed`.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(seed, stream))
}

/// `n` indices drawn uniformly with replacement.
pub fn resample_indices<G: Rng>(n: usize, rng: &mut G) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Nearest-rank percentile interval of a sorted sample.
pub fn percentile_interval<T: Real>(sorted: &[T], confidence: f64) -> (T, T) {
    assert!(!sorted.is_empty());
    let m = sorted.len();
    let alpha = 1.0 - confidence;
    let rank = |p: f64| -> usize {
        let r = (p * m as f64 - 1e-9).ceil() as usize;
        r.clamp(1, m) - 1
    };
    (sorted[rank(alpha / 2.0)], sorted[rank(1.0 - alpha / 2.0)])
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_sd<T: Real>(values: &[T]) -> T {
    let m = values.len();
    if m < 2 {
        return T::zero();
    }
    let mean = values.iter().copied().sum::<T>() / count(m);
    let ss = values.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
    (ss / count(m - 1)).sqrt()
}

/// `(#{v ≥ observed} + 1) / (B + 1)`.
pub fn exceedance_p<T: Real>(replicate_values: &[T], observed: T) -> T {
    let hits = replicate_values.iter().filter(|&&v| v >= observed).count();
    count::<T>(hits + 1) / count::<T>(replicate_values.len() + 1)
}

fn summarise<T: Real>(
    point: T,
    values: Vec<T>,
    n_failed: usize,
    failures: &HashMap<String, usize>,
    spec: &BootstrapSpec,
    keep: bool,
) -> Result<BootstrapResult<T>> {
    if (n_failed as f64) > MAX_FAILURE_FRACTION * spec.n_resamples as f64 || values.is_empty() {
        let dominant = failures
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(m, c)| format!("{m} ({c} times)"))
            .unwrap_or_else(|| "unknown".into());
        return Err(Error::Bootstrap(format!(
            "statistic failed on {n_failed} of {} resamples; most common failure: {dominant}",
            spec.n_resamples
        )));
    }
    let se = sample_sd(&values);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite replicate"));
    let ci = percentile_interval(&sorted, spec.confidence);
    Ok(BootstrapResult { point, se, ci, n_effective: values.len(), n_failed, replicates: keep.then_some(values) })
}

/// Bootstraps a vector-valued statistic over resampled units.
///
/// The statistic returns `Err` when the whole resample is unusable and
/// `None` for an individual component that is inestimable on it. Each
/// component is summarised independently; a component failing on more than
/// 10% of resamples yields an error for that component only.
pub fn bootstrap_many<R, T, F>(
    units: &[R],
    statistic: F,
    spec: &BootstrapSpec,
    keep_replicates: bool,
) -> Result<Vec<Result<BootstrapResult<T>>>>
where
    R: Clone + Sync,
    T: Real,
    F: Fn(&[R]) -> Result<Vec<Option<T>>> + Sync,
{
    let point = statistic(units)?;
    let k = point.len();
    if spec.n_resamples < 20 {
        log::warn!("only {} bootstrap resamples; percentile intervals are unreliable", spec.n_resamples);
    }
    let n = units.len();
    let draws: Vec<Result<Vec<Option<T>>>> = (0..spec.n_resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(spec.seed, b);
            let sample: Vec<R> = resample_indices(n, &mut rng).into_iter().map(|i| units[i].clone()).collect();
            statistic(&sample)
        })
        .collect();

    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let Some(p) = point[c] else {
            out.push(Err(Error::Bootstrap(format!("component {c} is inestimable on the original data"))));
            continue;
        };
        let mut values = Vec::with_capacity(draws.len());
        let mut failures: HashMap<String, usize> = HashMap::new();
        let mut n_failed = 0;
        for d in &draws {
            match d {
                Ok(v) => match v.get(c).copied().flatten() {
                    Some(x) if x.is_finite() => values.push(x),
                    _ => {
                        n_failed += 1;
                        *failures.entry("component inestimable".into()).or_default() += 1;
                    }
                },
                Err(e) => {
                    n_failed += 1;
                    *failures.entry(e.to_string()).or_default() += 1;
                }
            }
        }
        out.push(summarise(p, values, n_failed, &failures, spec, keep_replicates));
    }
    Ok(out)
}

/// Bootstraps a scalar statistic over resampled records.
pub fn bootstrap<R, T, F>(records: &[R], statistic: F, spec: &BootstrapSpec) -> Result<BootstrapResult<T>>
where
    R: Clone + Sync,
    T: Real,
    F: Fn(&[R]) -> Result<T> + Sync,
{
    bootstrap_with_replicates(records, statistic, spec, false)
}

/// As [`bootstrap`], optionally keeping the replicate values.
pub fn bootstrap_with_replicates<R, T, F>(
    records: &[R],
    statistic: F,
    spec: &BootstrapSpec,
    keep_replicates: bool,
) -> Result<BootstrapResult<T>>
where
    R: Clone + Sync,
    T: Real,
    F: Fn(&[R]) -> Result<T> + Sync,
{
    let many = bootstrap_many(records, |s| statistic(s).map(|v| vec![Some(v)]), spec, keep_replicates)?;
    many.into_iter().next().expect("one component")
}

/// Writes `replicate_index,value` rows for auditing.
pub fn write_replicates_csv<T: Real, W: Write>(values: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate_index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(xs: &[f64]) -> Result<f64> {
        Ok(xs.iter().sum::<f64>() / xs.len() as f64)
    }

    #[test]
    fn constant_statistic_has_zero_spread() {
        let spec = BootstrapSpec::new(200, 1).unwrap();
        let r = bootstrap(&[1.0, 2.0, 3.0], |_| Ok(4.5), &spec).unwrap();
        assert_eq!(r.se, 0.0);
        assert_eq!(r.ci, (4.5, 4.5));
        assert_eq!(r.n_effective, 200);
    }

    #[test]
    fn identical_seed_identical_result() {
        let data: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let spec = BootstrapSpec::new(300, 99).unwrap();
        let a = bootstrap_with_replicates(&data, mean, &spec, true).unwrap();
        let b = bootstrap_with_replicates(&data, mean, &spec, true).unwrap();
        assert_eq!(a, b);
        let c = bootstrap(&data, mean, &BootstrapSpec::new(300, 100).unwrap()).unwrap();
        assert_ne!(a.se, c.se);
    }

    #[test]
    fn exceedance_examples() {
        let below = vec![0.0; 99];
        assert!((exceedance_p(&below, 1.0f64) - 0.01).abs() < 1e-15);
        assert_eq!(exceedance_p(&[2.0, 3.0], 1.0), 1.0);
        assert!((exceedance_p(&[0.1f64, 0.2, 0.3], 0.2) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn nearest_rank_interval() {
        let v: Vec<f64> = (1..=40).map(f64::from).collect();
        // ranks ceil(0.025*40)=1 and ceil(0.975*40)=39
        assert_eq!(percentile_interval(&v, 0.95), (1.0, 39.0));
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(percentile_interval(&v, 0.95), (25.0, 975.0));
    }

    #[test]
    fn failing_resamples_are_excluded_then_fatal() {
        let data: Vec<f64> = (0..30).map(f64::from).collect();
        let spec = BootstrapSpec::new(400, 5).unwrap();
        // fails only when the resample lacks the smallest unit (≈ 36% of draws)
        let stat = |xs: &[f64]| {
            if xs.contains(&0.0) {
                Ok(1.0)
            } else {
                Err(Error::InsufficientData("no zero".into()))
            }
        };
        let err = bootstrap(&data, stat, &spec).unwrap_err();
        assert!(err.to_string().contains("no zero"), "{err}");
        let rare = |xs: &[f64]| {
            if xs.iter().filter(|&&x| x == 0.0).count() >= 4 {
                Err(Error::InsufficientData("many zeros".into()))
            } else {
                mean(xs)
            }
        };
        let r = bootstrap(&data, rare, &spec).unwrap();
        assert!(r.n_failed > 0 && r.n_failed < 40);
        assert_eq!(r.n_effective + r.n_failed, 400);
    }

    #[test]
    fn stream_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| stream_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(stream_seed(1, 0), stream_seed(2, 0));
    }

    #[test]
    fn replicate_dump() {
        let mut out = Vec::new();
        write_replicates_csv(&[0.5, -1.0], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "replicate_index,value\n0,0.5\n1,-1\n");
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(BootstrapSpec::new(0, 1).is_err());
        assert!(BootstrapSpec::with_confidence(10, 1, 1.0).is_err());
    }
}
