//! X-ray acquisition noise: electronic (additive Gaussian), quantum (Poisson
//! photon counting) and the mixed Poisson-Gaussian model.
//!
//! Levels are dimensionless. A Gaussian level is the variance of the additive
//! term on `[0, 1]` intensities. A Poisson level `s` is an inverse photon
//! budget: full intensity corresponds to `N = 1 / s` expected photons, so the
//! noise vanishes as `s -> 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageBuffer;
use crate::stream::RandomStream;

/// Mean below which Poisson variates are drawn by CDF inversion.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("gaussian variance must be non-negative and finite, got {0}")]
    NegativeVariance(f64),
    #[error("poisson level must be non-negative and finite, got {0}")]
    NegativeLevel(f64),
    #[error("expected a {expected} noise spec, got {found}")]
    WrongFamily { expected: NoiseFamily, found: NoiseFamily },
    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Poisson,
    Mixed,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 3] = [NoiseFamily::Gaussian, NoiseFamily::Poisson, NoiseFamily::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Poisson => "poisson",
            NoiseFamily::Mixed => "mixed",
        }
    }
}

impl std::fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "poisson" => Ok(NoiseFamily::Poisson),
            "mixed" => Ok(NoiseFamily::Mixed),
            other => Err(format!("unknown noise family '{other}' (expected gaussian, poisson or mixed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    family: NoiseFamily,
    gaussian_variance: f64,
    poisson_level: f64,
}

impl NoiseSpec {
    pub fn gaussian(variance: f64) -> Result<Self, NoiseError> {
        check_variance(variance)?;
        Ok(Self { family: NoiseFamily::Gaussian, gaussian_variance: variance, poisson_level: 0.0 })
    }

    pub fn poisson(level: f64) -> Result<Self, NoiseError> {
        check_level(level)?;
        Ok(Self { family: NoiseFamily::Poisson, gaussian_variance: 0.0, poisson_level: level })
    }

    pub fn mixed(variance: f64, level: f64) -> Result<Self, NoiseError> {
        check_variance(variance)?;
        check_level(level)?;
        Ok(Self { family: NoiseFamily::Mixed, gaussian_variance: variance, poisson_level: level })
    }

    /// The spec a single scalar schedule level maps to. Mixed levels set both
    /// components to the same value.
    pub fn at_level(family: NoiseFamily, level: f64) -> Result<Self, NoiseError> {
        match family {
            NoiseFamily::Gaussian => Self::gaussian(level),
            NoiseFamily::Poisson => Self::poisson(level),
            NoiseFamily::Mixed => Self::mixed(level, level),
        }
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn gaussian_variance(&self) -> f64 {
        self.gaussian_variance
    }

    pub fn poisson_level(&self) -> f64 {
        self.poisson_level
    }

    pub fn is_identity(&self) -> bool {
        self.gaussian_variance == 0.0 && self.poisson_level == 0.0
    }

    /// Re-checks the invariants; specs that came through serde skip the constructors.
    pub fn validate(&self) -> Result<(), NoiseError> {
        check_variance(self.gaussian_variance)?;
        check_level(self.poisson_level)?;
        match self.family {
            NoiseFamily::Gaussian if self.poisson_level != 0.0 => {
                Err(NoiseError::InvalidSpec("gaussian spec with non-zero poisson level".into()))
            }
            NoiseFamily::Poisson if self.gaussian_variance != 0.0 => {
                Err(NoiseError::InvalidSpec("poisson spec with non-zero gaussian variance".into()))
            }
            _ => Ok(()),
        }
    }
}

fn check_variance(v: f64) -> Result<(), NoiseError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(NoiseError::NegativeVariance(v))
    }
}

fn check_level(s: f64) -> Result<(), NoiseError> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(NoiseError::NegativeLevel(s))
    }
}

/// `out = clip(in + sqrt(variance) * z)`, one normal draw per sample in storage order.
pub fn add_gaussian(img: &ImageBuffer, variance: f64, stream: &mut RandomStream) -> Result<ImageBuffer, NoiseError> {
    check_variance(variance)?;
    if variance == 0.0 {
        return Ok(img.clone());
    }
    let sigma = variance.sqrt();
    let data = img.data().iter().map(|&v| (v + sigma * stream.normal()).clamp(0.0, 1.0)).collect();
    Ok(img.with_data(data))
}

/// `out = clip(Poisson(N * clip(in)) / N)` with `N = 1 / level`.
pub fn add_poisson(img: &ImageBuffer, level: f64, stream: &mut RandomStream) -> Result<ImageBuffer, NoiseError> {
    check_level(level)?;
    if level == 0.0 {
        return Ok(img.clone());
    }
    let photons = 1.0 / level;
    let data = img
        .data()
        .iter()
        .map(|&v| (poisson_sample(photons * v.clamp(0.0, 1.0), stream) / photons).clamp(0.0, 1.0))
        .collect();
    Ok(img.with_data(data))
}

/// Poisson counting first, additive read-out noise second, one clip at the end.
///
/// Per sample the Poisson draw (if enabled) precedes the normal draw (if
/// enabled), so a disabled component consumes nothing from the stream and the
/// degenerate cases coincide with [`add_poisson`] and [`add_gaussian`].
pub fn add_mixed(img: &ImageBuffer, spec: &NoiseSpec, stream: &mut RandomStream) -> Result<ImageBuffer, NoiseError> {
    if spec.family != NoiseFamily::Mixed {
        return Err(NoiseError::WrongFamily { expected: NoiseFamily::Mixed, found: spec.family });
    }
    spec.validate()?;
    if spec.is_identity() {
        return Ok(img.clone());
    }
    let sigma = spec.gaussian_variance.sqrt();
    let photons = (spec.poisson_level > 0.0).then(|| 1.0 / spec.poisson_level);
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let counted = match photons {
                Some(n) => poisson_sample(n * v.clamp(0.0, 1.0), stream) / n,
                None => v,
            };
            let read = if sigma > 0.0 { sigma * stream.normal() } else { 0.0 };
            (counted + read).clamp(0.0, 1.0)
        })
        .collect();
    Ok(img.with_data(data))
}

/// Dispatches on the spec's family. Identity specs return the input unchanged.
pub fn apply(img: &ImageBuffer, spec: &NoiseSpec, stream: &mut RandomStream) -> Result<ImageBuffer, NoiseError> {
    spec.validate()?;
    if spec.is_identity() {
        return Ok(img.clone());
    }
    match spec.family {
        NoiseFamily::Gaussian => add_gaussian(img, spec.gaussian_variance, stream),
        NoiseFamily::Poisson => add_poisson(img, spec.poisson_level, stream),
        NoiseFamily::Mixed => add_mixed(img, spec, stream),
    }
}

/// Draws `Poisson(mean)`.
///
/// Below [`POISSON_INVERSION_LIMIT`] the count is found by sequential CDF
/// inversion of one uniform. Above it, `floor(mean + sqrt(mean) * z + 0.5)`
/// (normal approximation with continuity correction), floored at zero.
pub fn poisson_sample(mean: f64, stream: &mut RandomStream) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < POISSON_INVERSION_LIMIT {
        let u = stream.uniform();
        let mut k = 0u32;
        let mut p = (-mean).exp();
        let mut cdf = p;
        // the tail beyond a few hundred is below f64 resolution for mean < 30
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / f64::from(k);
            cdf += p;
        }
        f64::from(k)
    } else {
        (mean + mean.sqrt() * stream.normal() + 0.5).floor().max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_stream;

    fn moments(xs: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    fn residual(out: &ImageBuffer, img: &ImageBuffer) -> impl Iterator<Item = f64> {
        out.data().iter().zip(img.data()).map(|(o, i)| o - i).collect::<Vec<_>>().into_iter()
    }

    fn natural_image() -> ImageBuffer {
        // smooth background ramp with a bright elliptical "bone"
        let (h, w) = (96, 96);
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                let ramp = 0.15 + 0.3 * c as f64 / w as f64;
                let dy = (r as f64 - 48.0) / 30.0;
                let dx = (c as f64 - 48.0) / 10.0;
                let bone = if dx * dx + dy * dy < 1.0 { 0.45 } else { 0.0 };
                data.push(ramp + bone);
            }
        }
        ImageBuffer::new(h, w, 1, data).unwrap()
    }

    #[test]
    fn negative_parameters_rejected() {
        let img = ImageBuffer::filled(2, 2, 1, 0.5).unwrap();
        let mut s = derive_stream(0, 0, 0);
        assert_eq!(add_gaussian(&img, -1e-3, &mut s), Err(NoiseError::NegativeVariance(-1e-3)));
        assert_eq!(add_poisson(&img, -1.0, &mut s), Err(NoiseError::NegativeLevel(-1.0)));
        assert!(NoiseSpec::gaussian(f64::NAN).is_err());
        assert!(NoiseSpec::mixed(0.1, -0.1).is_err());
    }

    #[test]
    fn mixed_requires_mixed_family() {
        let img = ImageBuffer::filled(2, 2, 1, 0.5).unwrap();
        let spec = NoiseSpec::gaussian(0.01).unwrap();
        let err = add_mixed(&img, &spec, &mut derive_stream(0, 0, 0)).unwrap_err();
        assert_eq!(err, NoiseError::WrongFamily { expected: NoiseFamily::Mixed, found: NoiseFamily::Gaussian });
    }

    #[test]
    fn zero_levels_are_identity() {
        let img = natural_image();
        let mut s = derive_stream(1, 2, 3);
        assert_eq!(add_gaussian(&img, 0.0, &mut s).unwrap(), img);
        assert_eq!(add_poisson(&img, 0.0, &mut s).unwrap(), img);
        for fam in NoiseFamily::ALL {
            let spec = NoiseSpec::at_level(fam, 0.0).unwrap();
            assert_eq!(apply(&img, &spec, &mut s).unwrap(), img);
        }
    }

    #[test]
    fn poisson_of_black_is_black() {
        let img = ImageBuffer::filled(20, 20, 1, 0.0).unwrap();
        for level in [1e-5, 1e-3, 0.5, 10.0] {
            let out = add_poisson(&img, level, &mut derive_stream(3, 0, 0)).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.0));
        }
    }

    // sd = 0.0316, so 0.5 +/- 5 sd never clips and post-clip equals pre-clip.
    // Mean: SE = 0.0316 / 180 = 1.8e-4. Variance: relative SE = sqrt(2 / 32400) = 0.8%.
    #[test]
    fn gaussian_moments_on_constant_image() {
        let img = ImageBuffer::filled(180, 180, 1, 0.5).unwrap();
        let out = add_gaussian(&img, 0.001, &mut derive_stream(42, 0, 0)).unwrap();
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let (mean, var) = moments(residual(&out, &img));
        assert!(mean.abs() < 0.001, "mean {mean}");
        assert!((var - 0.001).abs() < 0.05 * 0.001, "var {var}");
    }

    // Var(Poisson(N x) / N) = x / N = 2.5e-4 for x = 0.25, N = 1000.
    #[test]
    fn poisson_moments_on_constant_image() {
        let img = ImageBuffer::filled(180, 180, 1, 0.25).unwrap();
        let out = add_poisson(&img, 0.001, &mut derive_stream(42, 0, 0)).unwrap();
        let (mean, var) = moments(out.data().iter().copied());
        assert!((mean - 0.25).abs() < 0.01 * 0.25, "mean {mean}");
        assert!((var - 2.5e-4).abs() < 0.10 * 2.5e-4, "var {var}");
    }

    #[test]
    fn poisson_inversion_branch_moments() {
        // mean 5 photons per pixel exercises the inversion sampler; N = 20 keeps
        // the clip at 20 photons out of reach
        let img = ImageBuffer::filled(200, 200, 1, 0.25).unwrap();
        let out = add_poisson(&img, 0.05, &mut derive_stream(9, 0, 0)).unwrap();
        let counts: Vec<f64> = out.data().iter().map(|v| (v * 20.0).round()).collect();
        let (mean, var) = moments(counts.into_iter());
        assert!((mean - 5.0).abs() < 0.05, "mean {mean}");
        assert!((var - 5.0).abs() < 0.25, "var {var}");
    }

    #[test]
    fn mixed_variance_is_additive() {
        let img = ImageBuffer::filled(180, 180, 1, 0.5).unwrap();
        let spec = NoiseSpec::mixed(0.001, 0.001).unwrap();
        let out = add_mixed(&img, &spec, &mut derive_stream(42, 0, 0)).unwrap();
        let (_, var) = moments(residual(&out, &img));
        let expected = 0.001 + 0.5 * 0.001;
        assert!((var - expected).abs() < 0.10 * expected, "var {var}");
    }

    #[test]
    fn degenerate_mixed_matches_pure_operators() {
        let img = natural_image();
        let poisson_only = NoiseSpec::mixed(0.0, 0.002).unwrap();
        assert_eq!(
            add_mixed(&img, &poisson_only, &mut derive_stream(5, 1, 1)).unwrap(),
            add_poisson(&img, 0.002, &mut derive_stream(5, 1, 1)).unwrap()
        );
        let gaussian_only = NoiseSpec::mixed(0.003, 0.0).unwrap();
        assert_eq!(
            add_mixed(&img, &gaussian_only, &mut derive_stream(5, 1, 1)).unwrap(),
            add_gaussian(&img, 0.003, &mut derive_stream(5, 1, 1)).unwrap()
        );
    }

    #[test]
    fn deterministic_given_stream() {
        let img = natural_image();
        for spec in [
            NoiseSpec::gaussian(0.001).unwrap(),
            NoiseSpec::poisson(0.0005).unwrap(),
            NoiseSpec::mixed(0.0005, 0.0005).unwrap(),
        ] {
            let a = apply(&img, &spec, &mut derive_stream(42, 7, 3)).unwrap();
            let b = apply(&img, &spec, &mut derive_stream(42, 7, 3)).unwrap();
            assert_eq!(a, b);
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!((a.height(), a.width(), a.channels()), (img.height(), img.width(), img.channels()));
        }
    }

    #[test]
    fn heavy_noise_stays_in_unit_interval() {
        let img = natural_image();
        for spec in [NoiseSpec::gaussian(4.0).unwrap(), NoiseSpec::mixed(1.0, 5.0).unwrap()] {
            let out = apply(&img, &spec, &mut derive_stream(0, 0, 0)).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn destruction_is_monotone_over_default_schedule() {
        let img = natural_image();
        let schedule = crate::sweep::default_schedule(NoiseFamily::Gaussian);
        for fam in NoiseFamily::ALL {
            let mut last = -1.0;
            for (k, &level) in schedule.iter().enumerate() {
                let spec = NoiseSpec::at_level(fam, level).unwrap();
                let out = apply(&img, &spec, &mut derive_stream(42, 0, k as u64)).unwrap();
                let mad = residual(&out, &img).map(f64::abs).sum::<f64>() / img.data().len() as f64;
                assert!(mad >= last, "{fam} level {level}: {mad} < {last}");
                last = mad;
            }
        }
    }

    #[test]
    fn serde_spec_is_revalidated() {
        let bad: NoiseSpec =
            serde_json::from_str(r#"{"family":"gaussian","gaussian_variance":0.1,"poisson_level":0.2}"#).unwrap();
        assert!(bad.validate().is_err());
        let img = ImageBuffer::filled(2, 2, 1, 0.5).unwrap();
        assert!(apply(&img, &bad, &mut derive_stream(0, 0, 0)).is_err());
    }
}
