//! Bootstrap standard errors, normal-reference tests and significance
//! stars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimation::{refit_arms, GpsScore, Sample};
use crate::lattice::Contrast;
use crate::matching::{estimate_att, MatchSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Fewer successful replicates than this makes the standard error
    /// unavailable.
    pub min_successful: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            seed: 20140927,
            min_successful: 50,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config(
                "bootstrap replicates must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed of `master` for the given path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |acc, &i| mix64(acc ^ mix64(i)))
}

/// Significance marker: `***` p < 0.01, `**` p < 0.05, `*` p < 0.10.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Two-sided standard-normal tail probability of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

pub fn z_and_p(coeff: f64, se: f64) -> Result<ZTest> {
    if !(se > 0.0) {
        return Err(Error::Estimation(
            "z undefined: standard error is zero".into(),
        ));
    }
    let z = coeff / se;
    let p_value = two_sided_p(z);
    Ok(ZTest {
        z,
        p_value,
        stars: stars(p_value),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProportionTest {
    pub diff: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

/// Pooled two-sample z test for a difference in proportions.
pub fn two_proportion_test(
    n1: usize,
    successes1: usize,
    n2: usize,
    successes2: usize,
) -> Result<ProportionTest> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Estimation(
            "both groups need at least one observation".into(),
        ));
    }
    if successes1 > n1 || successes2 > n2 {
        return Err(Error::Estimation("successes exceed group size".into()));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let diff = successes1 as f64 / n1f - successes2 as f64 / n2f;
    let pooled = (successes1 + successes2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Err(Error::Estimation(
            "z undefined: pooled proportion is 0 or 1".into(),
        ));
    }
    let z = diff / (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let p_value = two_sided_p(z);
    Ok(ProportionTest {
        diff,
        z,
        p_value,
        stars: stars(p_value),
    })
}

/// Bootstrap outcome for one matching spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub spec: MatchSpec,
    pub requested: usize,
    pub successful: usize,
    /// Replicate ATTs in replicate order; `None` for failed replicates.
    pub replicates: Vec<Option<f64>>,
}

impl BootstrapSummary {
    /// Standard deviation of the successful replicates (n - 1 denominator),
    /// or an error when fewer than `min_successful` succeeded.
    pub fn se(&self, min_successful: usize) -> Result<f64> {
        let ok: Vec<f64> = self.replicates.iter().flatten().copied().collect();
        if ok.len() < min_successful.max(2) {
            return Err(Error::Bootstrap {
                successful: ok.len(),
                requested: self.requested,
            });
        }
        let n = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / n;
        let ss: f64 = ok.iter().map(|v| (v - mean).powi(2)).sum();
        Ok((ss / (n - 1.0)).sqrt())
    }
}

/// Draws `config.replicates` resamples of the contrast's treated + control
/// pool, refits the propensity model, re-applies common support and
/// re-estimates the ATT for every spec. Replicates that fail to fit or
/// match are recorded as `None`.
///
/// Replicate `b` uses a generator seeded from `(config.seed, b)`, so the
/// result does not depend on how replicates are scheduled across threads.
pub fn bootstrap_contrast(
    sample: &Sample,
    contrast: &Contrast,
    specs: &[MatchSpec],
    gps: GpsScore,
    config: &BootstrapConfig,
) -> Result<Vec<BootstrapSummary>> {
    config.validate()?;
    for spec in specs {
        spec.validate()?;
    }
    let pool = sample.select(&sample.pool_indices(contrast));
    let n = pool.len();
    if n == 0 {
        return Err(crate::estimation::not_estimable(contrast, "empty pool"));
    }
    let per_replicate: Vec<Vec<Option<f64>>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[b as u64]));
            let draw: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resample = pool.select(&draw);
            match refit_arms(&resample, contrast, gps) {
                Ok((treated, control)) => specs
                    .iter()
                    .map(|spec| estimate_att(&treated, &control, spec).ok().map(|e| e.coeff))
                    .collect(),
                Err(_) => vec![None; specs.len()],
            }
        })
        .collect();
    Ok(specs
        .iter()
        .enumerate()
        .map(|(s, spec)| {
            let replicates: Vec<Option<f64>> = per_replicate.iter().map(|r| r[s]).collect();
            BootstrapSummary {
                spec: *spec,
                requested: config.replicates,
                successful: replicates.iter().flatten().count(),
                replicates,
            }
        })
        .collect())
}

/// Bootstrap standard error of the ATT for a single spec, with the number
/// of successful replicates.
pub fn bootstrap_att(
    sample: &Sample,
    contrast: &Contrast,
    spec: &MatchSpec,
    gps: GpsScore,
    config: &BootstrapConfig,
) -> Result<(f64, usize)> {
    let summary =
        bootstrap_contrast(sample, contrast, std::slice::from_ref(spec), gps, config)?.remove(0);
    Ok((summary.se(config.min_successful)?, summary.successful))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.009), "***");
        assert_eq!(stars(0.01), "**");
        assert_eq!(stars(0.049), "**");
        assert_eq!(stars(0.05), "*");
        assert_eq!(stars(0.0999), "*");
        assert_eq!(stars(0.10), "");
    }

    #[test]
    fn zero_coefficient() {
        let t = z_and_p(0.0, 0.3).unwrap();
        assert_eq!((t.z, t.p_value, t.stars), (0.0, 1.0, ""));
        assert!(z_and_p(0.1, 0.0).is_err());
    }

    #[test]
    fn equal_proportions() {
        let t = two_proportion_test(50, 20, 200, 80).unwrap();
        assert_eq!((t.diff, t.z, t.stars), (0.0, 0.0, ""));
        assert!(two_proportion_test(10, 10, 20, 20).is_err());
        assert!(two_proportion_test(0, 0, 20, 2).is_err());
    }

    #[test]
    fn swap_is_antisymmetric() {
        let a = two_proportion_test(54, 46, 5136, 3698).unwrap();
        let b = two_proportion_test(5136, 3698, 54, 46).unwrap();
        assert_eq!(a.diff, -b.diff);
        assert_eq!(a.z, -b.z);
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn se_needs_enough_replicates() {
        let s = BootstrapSummary {
            spec: MatchSpec::kernel(),
            requested: 4,
            successful: 3,
            replicates: vec![Some(0.1), None, Some(0.2), Some(0.3)],
        };
        assert!((s.se(2).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            s.se(50),
            Err(Error::Bootstrap {
                successful: 3,
                requested: 4
            })
        ));
    }

    #[test]
    fn seeds_differ_by_path() {
        let a = derive_seed(7, &[0]);
        let b = derive_seed(7, &[1]);
        let c = derive_seed(8, &[0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
    }
}
