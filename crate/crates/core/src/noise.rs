//! Time grids and seeded Wiener increments.
//!
//! Increments are produced by a counter-based generator keyed on
//! `(seed, ρ, i)`: every entry is computed independently by mixing the key
//! through SplitMix64 and feeding two uniforms into the Box–Muller transform.
//! Generation order therefore never matters, identical seeds give
//! bit-identical paths, and the same path can drive every mesh size of an
//! extrapolation run.

use std::io::{Read, Write};

use thiserror::Error;

use crate::scalar::{cast, cast_usize, Scalar};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("time horizon must be positive and finite")]
    BadHorizon,
    #[error("time grid needs at least one step")]
    NoSteps,
    #[error("time step τ = {0} must lie in (0, 1)")]
    StepOutOfRange(f64),
    #[error("noise dimension must be at least 1")]
    NoNoiseDimension,
    #[error("path file has wrong magic bytes")]
    BadMagic,
    #[error("path file shape mismatch")]
    ShapeMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform partition of `[0, T]` into `n` steps; `τ = T / n` is derived and
/// must lie in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T: Scalar> {
    horizon: T,
    steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self, NoiseError> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(NoiseError::BadHorizon);
        }
        if steps == 0 {
            return Err(NoiseError::NoSteps);
        }
        let tau = horizon / cast_usize::<T>(steps);
        if !(tau > T::zero() && tau < T::one()) {
            return Err(NoiseError::StepOutOfRange(tau.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> T {
        self.horizon / cast_usize::<T>(self.steps)
    }

    pub fn time_at(&self, i: usize) -> T {
        cast_usize::<T>(i) * self.tau()
    }
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in (0, 1), never exactly 0 or 1.
#[inline]
fn unit_uniform(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// One standard normal draw for the counter `(seed, rho, i)`, Box–Muller.
#[inline]
fn standard_normal(seed: u64, rho: u64, i: u64) -> f64 {
    let key = mix64(
        mix64(seed ^ SPLITMIX_GAMMA)
            ^ rho.wrapping_mul(0xD1B5_4A32_D192_ED03)
            ^ i.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7),
    );
    let u1 = unit_uniform(mix64(key ^ 0x2545_F491_4F6C_DD1D));
    let u2 = unit_uniform(mix64(key ^ 0x9E6C_63D0_176B_32DF));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Wiener increments `ξ^ρ_i`, `ρ ∈ {1..d₁}`, `i ∈ {1..n}`, each distributed
/// `N(0, τ)`, reproducible from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath<T: Scalar> {
    noise_dim: usize,
    steps: usize,
    seed: u64,
    increments: Vec<T>, // row-major [rho][i-1]
}

impl<T: Scalar> NoisePath<T> {
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment `ξ^ρ_i` with `rho` zero-based and `i ∈ 1..=n`.
    #[inline]
    pub fn xi(&self, rho: usize, i: usize) -> T {
        debug_assert!(i >= 1 && i <= self.steps);
        self.increments[rho * self.steps + (i - 1)]
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// Order-insensitive digest of the path contents, used to assert noise
    /// sharing across mesh levels in reports.
    pub fn fingerprint(&self) -> u64 {
        let mut acc = mix64(self.seed ^ (self.noise_dim as u64) ^ ((self.steps as u64) << 32));
        for (k, v) in self.increments.iter().enumerate() {
            let bits = v.to_f64().unwrap_or(f64::NAN).to_bits();
            acc = mix64(acc ^ bits.wrapping_add(k as u64));
        }
        acc
    }
}

/// Draws the full increment table for a time grid: independent centered
/// Gaussians with variance `τ`.
pub fn sample_increments<T: Scalar>(
    tg: &TimeGrid<T>,
    noise_dim: usize,
    seed: u64,
) -> Result<NoisePath<T>, NoiseError> {
    if noise_dim == 0 {
        return Err(NoiseError::NoNoiseDimension);
    }
    let n = tg.steps();
    let sqrt_tau = tg.tau().sqrt();
    let mut increments = Vec::with_capacity(noise_dim * n);
    for rho in 0..noise_dim {
        for i in 1..=n {
            let z = cast::<T>(standard_normal(seed, rho as u64, i as u64));
            increments.push(sqrt_tau * z);
        }
    }
    Ok(NoisePath {
        noise_dim,
        steps: n,
        seed,
        increments,
    })
}

/// Deterministic degeneration: all increments zero.
pub fn zero_noise<T: Scalar>(tg: &TimeGrid<T>, noise_dim: usize) -> NoisePath<T> {
    NoisePath {
        noise_dim: noise_dim.max(1),
        steps: tg.steps(),
        seed: 0,
        increments: vec![T::zero(); noise_dim.max(1) * tg.steps()],
    }
}

const PATH_MAGIC: &[u8; 8] = b"SPDEPATH";

/// Writes the path in the binary exchange format: 16-byte header
/// (`"SPDEPATH"`, `u32` d₁, `u32` n, little-endian) followed by the
/// increments as little-endian `f64`, row-major `[ρ][i]`.
pub fn write_path<T: Scalar>(path: &NoisePath<T>, mut w: impl Write) -> Result<(), NoiseError> {
    w.write_all(PATH_MAGIC)?;
    w.write_all(&(path.noise_dim as u32).to_le_bytes())?;
    w.write_all(&(path.steps as u32).to_le_bytes())?;
    for v in &path.increments {
        w.write_all(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes())?;
    }
    Ok(())
}

/// Reads a path written by [`write_path`]. The seed is not stored in the
/// format; the restored path carries seed 0.
pub fn read_path<T: Scalar>(mut r: impl Read) -> Result<NoisePath<T>, NoiseError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PATH_MAGIC {
        return Err(NoiseError::BadMagic);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let noise_dim = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let steps = u32::from_le_bytes(word) as usize;
    if noise_dim == 0 || steps == 0 {
        return Err(NoiseError::ShapeMismatch);
    }
    let mut increments = Vec::with_capacity(noise_dim * steps);
    let mut buf = [0u8; 8];
    for _ in 0..noise_dim * steps {
        r.read_exact(&mut buf)?;
        increments.push(cast::<T>(f64::from_le_bytes(buf)));
    }
    Ok(NoisePath {
        noise_dim,
        steps,
        seed: 0,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_is_derived_and_validated() {
        let tg = TimeGrid::<f64>::new(1.0, 64).unwrap();
        assert_eq!(tg.tau(), 1.0 / 64.0);
        assert_eq!(tg.time_at(64), 1.0);
        assert!(TimeGrid::<f64>::new(4.0, 2).is_err()); // τ = 2 ≥ 1
        assert!(TimeGrid::<f64>::new(0.0, 4).is_err());
        assert!(TimeGrid::<f64>::new(1.0, 0).is_err());
    }

    #[test]
    fn same_seed_gives_identical_tables() {
        let tg = TimeGrid::new(1.0, 32).unwrap();
        let a = sample_increments::<f64>(&tg, 3, 41).unwrap();
        let b = sample_increments::<f64>(&tg, 3, 41).unwrap();
        assert_eq!(a, b);
        let c = sample_increments::<f64>(&tg, 3, 42).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn moments_match_the_target_distribution() {
        let tg = TimeGrid::new(1.0, 100_000).unwrap();
        let tau = tg.tau();
        let path = sample_increments::<f64>(&tg, 1, 7).unwrap();
        let n = path.increments().len() as f64;
        let mean = path.increments().iter().sum::<f64>() / n;
        assert!(
            mean.abs() <= 4.0 * (tau / n).sqrt(),
            "mean {mean} out of bounds"
        );
        let var = path
            .increments()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0);
        assert!((var - tau).abs() <= 0.05 * tau, "variance {var} vs τ {tau}");
    }

    #[test]
    fn pooled_increments_look_gaussian() {
        // Jarque–Bera statistic against χ²₂ at the 0.1% level
        let tg = TimeGrid::new(1.0, 5_000).unwrap();
        let path = sample_increments::<f64>(&tg, 2, 99).unwrap();
        let xs = path.increments();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = xs.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = xs.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let skew = m3 / m2.powf(1.5);
        let kurt = m4 / (m2 * m2);
        let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
        assert!(jb < 13.816, "JB statistic {jb} exceeds the 0.1% cutoff");
    }

    #[test]
    fn zero_noise_is_zero() {
        let tg = TimeGrid::new(1.0, 8).unwrap();
        let z = zero_noise::<f64>(&tg, 2);
        assert!(z.increments().iter().all(|&v| v == 0.0));
        let var: f64 = z.increments().iter().map(|v| v * v).sum();
        assert_eq!(var, 0.0);
    }

    #[test]
    fn xi_indexing_matches_row_major_layout() {
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let p = sample_increments::<f64>(&tg, 2, 5).unwrap();
        assert_eq!(p.xi(1, 3), p.increments()[4 + 2]);
    }

    #[test]
    fn path_file_round_trip() {
        let tg = TimeGrid::new(1.0, 16).unwrap();
        let p = sample_increments::<f64>(&tg, 3, 2024).unwrap();
        let mut buf = Vec::new();
        write_path(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"SPDEPATH");
        assert_eq!(buf.len(), 16 + 8 * 3 * 16);
        let q = read_path::<f64>(buf.as_slice()).unwrap();
        assert_eq!(p.increments(), q.increments());
        assert_eq!(q.noise_dim(), 3);
        assert_eq!(q.steps(), 16);
    }

    #[test]
    fn bad_magic_rejected() {
        let buf = b"NOTAPATH\x01\x00\x00\x00\x01\x00\x00\x00".to_vec();
        assert!(matches!(
            read_path::<f64>(buf.as_slice()),
            Err(NoiseError::BadMagic)
        ));
    }

    #[test]
    fn fingerprint_distinguishes_paths() {
        let tg = TimeGrid::new(1.0, 32).unwrap();
        let a = sample_increments::<f64>(&tg, 1, 1).unwrap();
        let b = sample_increments::<f64>(&tg, 1, 2).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
