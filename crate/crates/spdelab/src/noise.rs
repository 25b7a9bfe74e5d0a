//! Truncated Q-Wiener increments driving the equation.
//!
//! The cylindrical process is cut to `K` eigenmodes of the spatial basis with
//! covariance weights `q_k = k^{-gamma}`. All Gaussian draws go through an
//! explicit Box-Muller transform on top of a counter-based ChaCha stream, so
//! every array is a pure function of its seed and shape: paths are
//! reproducible bit-for-bit regardless of scheduling, and a dyadic bridge
//! refinement can re-run a study on the same driving path at half the step.

use std::io::{Read, Write};
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{NodeField, SpectralBasis};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid sizes: n_steps={n_steps}, n_modes={n_modes}, tau={tau}")]
    InvalidSizes {
        n_steps: usize,
        n_modes: usize,
        tau: f64,
    },
    #[error("step index {index} out of range (n_steps={n_steps})")]
    IndexOutOfRange { index: usize, n_steps: usize },
    #[error("noise spec wants {wanted} modes but the basis holds {available}")]
    TooManyModes { wanted: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt increment dump: {0}")]
    CorruptDump(String),
}

/// Stream of standard normals: Box-Muller over ChaCha8.
///
/// Both uniforms come from the top 53 bits of the generator output; the first
/// is shifted into (0,1] so the logarithm is always finite.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    cache: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: None,
        }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.cache.take() {
            return z;
        }
        const SCALE: f64 = 1.0 / 9007199254740992.0; // 2^-53
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cache = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform draw on [0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / 9007199254740992.0;
        (self.rng.next_u64() >> 11) as f64 * SCALE
    }
}

/// Stateless per-path seed derivation (splitmix64 finalizer), so path `j` is
/// the same whether the ensemble runs serially or across workers.
pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    let mut z = master_seed ^ path_index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Truncation of the driving noise: `K` modes with covariance `q_k = k^{-gamma}`.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    n_modes: usize,
    gamma: f64,
    basis: Arc<SpectralBasis>,
}

impl NoiseSpec {
    pub fn new(n_modes: usize, gamma: f64, basis: Arc<SpectralBasis>) -> Result<Self, NoiseError> {
        if n_modes < 1 || !(gamma >= 0.0) {
            return Err(NoiseError::InvalidSizes {
                n_steps: 0,
                n_modes,
                tau: gamma,
            });
        }
        if n_modes > basis.n_modes() {
            return Err(NoiseError::TooManyModes {
                wanted: n_modes,
                available: basis.n_modes(),
            });
        }
        Ok(NoiseSpec {
            n_modes,
            gamma,
            basis,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// Covariance weight of mode `k` (1-based).
    pub fn q_weight(&self, k: usize) -> f64 {
        (k as f64).powf(-self.gamma)
    }

    pub fn trace(&self) -> f64 {
        (1..=self.n_modes).map(|k| self.q_weight(k)).sum()
    }

    /// `gamma <= 1` leaves the untruncated covariance without finite trace;
    /// runs in that regime are stress tests and get flagged in reports.
    pub fn is_trace_class(&self) -> bool {
        self.gamma > 1.0
    }
}

/// Per-step, per-mode Brownian increments: `N x K`, row-major, entries
/// `N(0, tau)`. Regenerating with the same `(seed, N, K, tau)` reproduces the
/// array bit for bit.
#[derive(Debug, Clone)]
pub struct WienerIncrements {
    n_steps: usize,
    n_modes: usize,
    tau: f64,
    seed: u64,
    data: Vec<f64>,
}

impl WienerIncrements {
    pub fn sample(
        n_modes: usize,
        n_steps: usize,
        tau: f64,
        seed: u64,
    ) -> Result<Self, NoiseError> {
        if n_steps < 1 || n_modes < 1 || !(tau > 0.0) {
            return Err(NoiseError::InvalidSizes {
                n_steps,
                n_modes,
                tau,
            });
        }
        let mut stream = GaussianStream::new(seed);
        let sqrt_tau = tau.sqrt();
        let data = (0..n_steps * n_modes)
            .map(|_| sqrt_tau * stream.next_standard())
            .collect();
        Ok(WienerIncrements {
            n_steps,
            n_modes,
            tau,
            seed,
            data,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment of mode `k` (0-based column) over step `n`.
    pub fn get(&self, step: usize, mode: usize) -> f64 {
        self.data[step * self.n_modes + mode]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.data[step * self.n_modes..(step + 1) * self.n_modes]
    }

    /// Dyadic bridge refinement on the same driving path: each coarse
    /// increment `dW` splits into `dW/2 + b` and `dW/2 - b` with
    /// `b = (sqrt(tau)/2) xi`, `xi` a fresh standard normal. The two halves
    /// sum back to `dW` up to a final rounding ulp.
    pub fn refine(&self, bridge_seed: u64) -> WienerIncrements {
        let mut stream = GaussianStream::new(bridge_seed);
        let half_sigma = self.tau.sqrt() / 2.0;
        let mut data = Vec::with_capacity(2 * self.data.len());
        for step in 0..self.n_steps {
            let row = self.row(step);
            let bridge: Vec<f64> = (0..self.n_modes)
                .map(|_| half_sigma * stream.next_standard())
                .collect();
            for (dw, b) in row.iter().zip(&bridge) {
                data.push(0.5 * dw + b);
            }
            for (dw, b) in row.iter().zip(&bridge) {
                data.push(0.5 * dw - b);
            }
        }
        WienerIncrements {
            n_steps: 2 * self.n_steps,
            n_modes: self.n_modes,
            tau: self.tau / 2.0,
            seed: bridge_seed,
            data,
        }
    }

    /// Binary dump: header `N, K` (u64 LE), `tau` (f64 LE), `seed` (u64 LE),
    /// then the row-major payload as f64 LE.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), NoiseError> {
        w.write_all(&(self.n_steps as u64).to_le_bytes())?;
        w.write_all(&(self.n_modes as u64).to_le_bytes())?;
        w.write_all(&self.tau.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, NoiseError> {
        let mut buf = [0u8; 8];
        let mut next_u64 = |r: &mut dyn Read| -> Result<u64, NoiseError> {
            r.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let n_steps = next_u64(&mut r)? as usize;
        let n_modes = next_u64(&mut r)? as usize;
        let tau = f64::from_bits(next_u64(&mut r)?);
        let seed = next_u64(&mut r)?;
        if n_steps == 0 || n_modes == 0 || !(tau > 0.0) {
            return Err(NoiseError::CorruptDump(format!(
                "header N={n_steps} K={n_modes} tau={tau}"
            )));
        }
        let mut data = Vec::with_capacity(n_steps * n_modes);
        for _ in 0..n_steps * n_modes {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        Ok(WienerIncrements {
            n_steps,
            n_modes,
            tau,
            seed,
            data,
        })
    }
}

/// Spatial noise field of one step: `sum_k sqrt(q_k) dW_{n,k} e_k`.
pub fn assemble_noise_field(
    inc: &WienerIncrements,
    step: usize,
    spec: &NoiseSpec,
) -> Result<NodeField, NoiseError> {
    if step >= inc.n_steps() {
        return Err(NoiseError::IndexOutOfRange {
            index: step,
            n_steps: inc.n_steps(),
        });
    }
    assert!(
        inc.n_modes() >= spec.n_modes(),
        "increment array holds fewer modes than the noise spec"
    );
    let coeffs: Vec<f64> = (0..spec.basis().n_modes())
        .map(|idx| {
            if idx < spec.n_modes() {
                spec.q_weight(idx + 1).sqrt() * inc.get(step, idx)
            } else {
                0.0
            }
        })
        .collect();
    Ok(spec.basis().synthesize(&coeffs))
}
