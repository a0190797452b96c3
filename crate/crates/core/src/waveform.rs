//! OFDM numerology, steering vectors and the waveform-derived scalars:
//! effective bandwidth and carrier, aperture function, Dirichlet kernel,
//! Doppler intensity and rms observation duration.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::scalar::{cis, light, lit, to_f64, unit, unit_perp, Real};

/// OFDM numerology, power and noise level of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformConfig<T> {
    /// DFT size N.
    pub n_fft: usize,
    /// Cyclic prefix length in samples.
    pub n_cp: usize,
    /// Number of OFDM blocks N_B.
    pub n_blocks: usize,
    /// Sampling frequency, Hz.
    pub sample_rate: T,
    /// Carrier frequency, Hz.
    pub carrier: T,
    /// Loaded subcarrier indices, each in `(-N/2, N/2)`.
    pub subcarriers: Vec<i64>,
    /// Power share of each loaded subcarrier; sums to one.
    pub weights: Vec<T>,
    /// Transmit power per block, W.
    pub tx_power: T,
    /// Noise variance per real dimension, W.
    pub noise_var: T,
    /// Flat per-subcarrier response (all ones).
    pub subcarrier_gain: Vec<T>,
}

impl<T: Real> WaveformConfig<T> {
    /// Config with uniform weights and unit subcarrier gains.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_fft: usize,
        n_cp: usize,
        n_blocks: usize,
        sample_rate: T,
        carrier: T,
        subcarriers: Vec<i64>,
        tx_power: T,
        noise_var: T,
    ) -> Result<Self> {
        let k = subcarriers.len().max(1);
        let cfg = Self {
            n_fft,
            n_cp,
            n_blocks,
            sample_rate,
            carrier,
            weights: vec![T::one() / lit(k as f64); subcarriers.len()],
            subcarrier_gain: vec![T::one(); subcarriers.len()],
            subcarriers,
            tx_power,
            noise_var,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_fft < 2 || self.n_blocks == 0 {
            return bad("need N >= 2 and at least one block");
        }
        if self.subcarriers.is_empty() {
            return bad("no loaded subcarriers");
        }
        if self.weights.len() != self.subcarriers.len()
            || self.subcarrier_gain.len() != self.subcarriers.len()
        {
            return bad("weights and gains must match the subcarrier list");
        }
        let half = self.n_fft as i64;
        if self.subcarriers.iter().any(|&p| 2 * p.abs() >= half) {
            return bad("subcarrier index outside (-N/2, N/2)");
        }
        let total = self.weights.iter().fold(T::zero(), |a, &w| a + w);
        if (total - T::one()).abs() > lit(1e-12_f64.max(10.0 * to_f64(T::default_epsilon()))) {
            return bad("subcarrier weights must sum to one");
        }
        if self.weights.iter().any(|&w| w < T::zero()) {
            return bad("negative subcarrier weight");
        }
        if !(self.sample_rate > T::zero() && self.carrier > T::zero() && self.noise_var > T::zero())
        {
            return bad("sample rate, carrier and noise variance must be positive");
        }
        if !(self.tx_power >= T::zero()) {
            return bad("transmit power must be nonnegative");
        }
        Ok(())
    }

    pub fn sample_period(&self) -> T {
        T::one() / self.sample_rate
    }

    /// Block length N + N_CP in samples.
    pub fn block_len(&self) -> usize {
        self.n_fft + self.n_cp
    }

    /// Baseband angular frequency of subcarrier index `p`.
    pub fn omega(&self, p: i64) -> T {
        T::two_pi() * lit::<T>(p as f64) * self.sample_rate / lit(self.n_fft as f64)
    }

    /// Baseband angular frequencies of the loaded subcarriers, in order.
    pub fn omegas(&self) -> Vec<T> {
        self.subcarriers.iter().map(|&p| self.omega(p)).collect()
    }

    pub fn carrier_omega(&self) -> T {
        T::two_pi() * self.carrier
    }

    pub fn wavelength(&self) -> T {
        light::<T>() / self.carrier
    }

    /// `N_R N_B P_T / sigma^2`, the SNR prefactor of the asymptotic EFIMs.
    pub fn snr_prefactor(&self, n_rx: usize) -> T {
        lit::<T>((n_rx * self.n_blocks) as f64) * self.tx_power / self.noise_var
    }
}

/// Per-real-dimension noise variance for a one-sided density `n0` (W/Hz).
pub fn noise_var_from_density<T: Real>(n0: T, sample_rate: T) -> T {
    n0 * sample_rate / lit(2.0)
}

/// `start, start+step, ..., end` (inclusive when hit exactly).
pub fn subcarrier_range(start: i64, step: i64, end: i64) -> Result<Vec<i64>> {
    if step <= 0 || end < start {
        return Err(Error::InvalidArgument(
            "subcarrier range needs step > 0 and end >= start".into(),
        ));
    }
    Ok((start..=end).step_by(step as usize).collect())
}

/// Precoder (N_T x M_T) and combiner (M_R x N_R).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig<T: Real> {
    pub precoder: DMatrix<Complex<T>>,
    pub combiner: DMatrix<Complex<T>>,
}

impl<T: Real> BeamConfig<T> {
    pub fn new(precoder: DMatrix<Complex<T>>, combiner: DMatrix<Complex<T>>) -> Result<Self> {
        let tol: T = lit(1e-10);
        if precoder.ncols() > precoder.nrows()
            || precoder.clone().svd(false, false).rank(tol) < precoder.ncols()
        {
            return Err(Error::InvalidArgument(
                "precoder must have full column rank".into(),
            ));
        }
        if combiner.nrows() > combiner.ncols()
            || combiner.clone().svd(false, false).rank(tol) < combiner.nrows()
        {
            return Err(Error::InvalidArgument(
                "combiner must have full row rank".into(),
            ));
        }
        Ok(Self { precoder, combiner })
    }

    pub fn identity(n_tx: usize, n_rx: usize) -> Self {
        Self {
            precoder: DMatrix::identity(n_tx, n_tx),
            combiner: DMatrix::identity(n_rx, n_rx),
        }
    }

    pub fn n_tx(&self) -> usize {
        self.precoder.nrows()
    }

    pub fn n_rx(&self) -> usize {
        self.combiner.ncols()
    }

    pub fn is_identity(&self) -> bool {
        let eye = |m: &DMatrix<Complex<T>>| {
            m.is_square() && *m == DMatrix::identity(m.nrows(), m.ncols())
        };
        eye(&self.precoder) && eye(&self.combiner)
    }
}

/// `e^{j omega d_j u(psi_j)^T u(theta) / c}` for every element.
pub fn steering_vector<T: Real>(
    array: &ArrayGeometry<T>,
    theta_rel: T,
    omega: T,
) -> DVector<Complex<T>> {
    let k = omega / light::<T>();
    let dir = unit(theta_rel);
    DVector::from_iterator(
        array.len(),
        array
            .elements
            .iter()
            .map(|&(d, psi)| cis(k * d * unit(psi).dot(&dir))),
    )
}

/// Derivative of [`steering_vector`] with respect to `theta_rel`.
pub fn steering_derivative<T: Real>(
    array: &ArrayGeometry<T>,
    theta_rel: T,
    omega: T,
) -> DVector<Complex<T>> {
    let k = omega / light::<T>();
    let dir = unit(theta_rel);
    let perp = unit_perp(theta_rel);
    DVector::from_iterator(
        array.len(),
        array.elements.iter().map(|&(d, psi)| {
            let a = cis(k * d * unit(psi).dot(&dir));
            a * Complex::new(T::zero(), -k * d * perp.dot(&unit(psi)))
        }),
    )
}

/// Squared array aperture function, m^2.
pub fn saaf<T: Real>(array: &ArrayGeometry<T>, theta_rel: T) -> T {
    let dir = unit(theta_rel);
    let sum = array.elements.iter().fold(T::zero(), |acc, &(d, psi)| {
        let x = d * unit_perp(psi).dot(&dir);
        acc + x * x
    });
    sum / lit(array.len() as f64)
}

/// `sum_p gamma_p omega_p`.
pub fn mean_baseband<T: Real>(cfg: &WaveformConfig<T>) -> T {
    cfg.omegas()
        .iter()
        .zip(&cfg.weights)
        .fold(T::zero(), |a, (&w, &g)| a + g * w)
}

/// Effective baseband bandwidth, rad/s.
pub fn effective_bandwidth<T: Real>(cfg: &WaveformConfig<T>) -> T {
    let m2 = cfg
        .omegas()
        .iter()
        .zip(&cfg.weights)
        .fold(T::zero(), |a, (&w, &g)| a + g * w * w);
    let m1 = mean_baseband(cfg);
    (m2 - m1 * m1).max(T::zero()).sqrt()
}

/// Effective angular carrier frequency, rad/s.
pub fn effective_carrier<T: Real>(cfg: &WaveformConfig<T>) -> T {
    let wc = cfg.carrier_omega();
    cfg.omegas()
        .iter()
        .zip(&cfg.weights)
        .fold(T::zero(), |a, (&w, &g)| a + g * (wc + w) * (wc + w))
        .sqrt()
}

// below this |sin x| the kernel switches to its series about the nearest k*pi
const SERIES_SIN: f64 = 1e-9;

fn nearest_multiple_of_pi<T: Real>(x: T) -> T {
    x - (x / T::pi()).round() * T::pi()
}

/// Dirichlet kernel `e^{-j(N-1)x} sin(Nx) / (N sin x)`.
pub fn dirichlet_q<T: Real>(x: T, n: usize) -> Complex<T> {
    let nn: T = lit(n as f64);
    let one = T::one();
    let s = x.sin();
    if s.abs() < lit(SERIES_SIN) {
        let e = nearest_multiple_of_pi(x);
        let mag = one - (nn * nn - one) * e * e / lit(6.0);
        return cis(-(nn - one) * e) * mag;
    }
    cis(-(nn - one) * x) * ((nn * x).sin() / (nn * s))
}

/// `Q(x) (cot x - N cot Nx)`, finite everywhere.
pub fn dirichlet_q_cot<T: Real>(x: T, n: usize) -> Complex<T> {
    let nn: T = lit(n as f64);
    let one = T::one();
    let s = x.sin();
    if s.abs() < lit(SERIES_SIN) {
        let e = nearest_multiple_of_pi(x);
        return cis(-(nn - one) * e) * ((nn * nn - one) * e / lit(3.0));
    }
    let nx = nn * x;
    let val = nx.sin() * x.cos() / (nn * s * s) - nx.cos() / s;
    cis(-(nn - one) * x) * val
}

/// Derivative of [`dirichlet_q`].
pub fn dirichlet_q_derivative<T: Real>(x: T, n: usize) -> Complex<T> {
    let nn: T = lit(n as f64);
    dirichlet_q(x, n) * Complex::new(T::zero(), -(nn - T::one())) - dirichlet_q_cot(x, n)
}

/// Doppler intensity of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerIntensity<T> {
    /// `xi_{l,q}` for every loaded subcarrier q.
    pub per_subcarrier: Vec<T>,
    /// `sum_q gamma_q xi_{l,q}`.
    pub total: T,
}

/// Kernel argument `(omega_p - omega_q - v omega_c / c) T_s / 2`.
pub fn kernel_arg<T: Real>(cfg: &WaveformConfig<T>, omega_p: T, omega_q: T, speed: T) -> T {
    (omega_p - omega_q - speed * cfg.carrier_omega() / light::<T>()) * cfg.sample_period()
        / lit(2.0)
}

pub fn doppler_intensity<T: Real>(cfg: &WaveformConfig<T>, speed: T) -> DopplerIntensity<T> {
    let omegas = cfg.omegas();
    let per_subcarrier: Vec<T> = omegas
        .iter()
        .map(|&wq| {
            omegas.iter().fold(T::zero(), |a, &wp| {
                a + dirichlet_q(kernel_arg(cfg, wp, wq, speed), cfg.n_fft).norm_sqr()
            })
        })
        .collect();
    let total = per_subcarrier
        .iter()
        .zip(&cfg.weights)
        .fold(T::zero(), |a, (&x, &g)| a + g * x);
    DopplerIntensity {
        per_subcarrier,
        total,
    }
}

/// Effective bandwidth of a path with Doppler-weighted subcarrier powers.
pub fn path_bandwidth<T: Real>(cfg: &WaveformConfig<T>, speed: T) -> T {
    let xi = doppler_intensity(cfg, speed);
    let omegas = cfg.omegas();
    let (mut m1, mut m2) = (T::zero(), T::zero());
    for ((&w, &g), &x) in omegas.iter().zip(&cfg.weights).zip(&xi.per_subcarrier) {
        m1 += g * x * w;
        m2 += g * x * w * w;
    }
    m1 /= xi.total;
    m2 /= xi.total;
    (m2 - m1 * m1).max(T::zero()).sqrt()
}

/// Rms observation duration of a path and its in-block spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsDuration<T> {
    /// Seconds.
    pub t_rms: T,
    /// In-block spread from the full kernel sums, in samples.
    pub n_rms: T,
    /// Small-speed approximation of `n_rms`.
    pub n_rms_approx: T,
}

/// Kernel moments for one path: `sum_q g_q sum_p` of
/// `|Q|^2`, `Re(conj(Q) Qcot)/2` and `|Qcot|^2/4`.
pub(crate) fn kernel_moments<T: Real>(cfg: &WaveformConfig<T>, speed: T) -> (T, T, T) {
    let omegas = cfg.omegas();
    let half: T = lit(0.5);
    let quarter: T = lit(0.25);
    let (mut m0, mut m1, mut m2) = (T::zero(), T::zero(), T::zero());
    for (&wq, &g) in omegas.iter().zip(&cfg.weights) {
        for &wp in &omegas {
            let x = kernel_arg(cfg, wp, wq, speed);
            let q = dirichlet_q(x, cfg.n_fft);
            let qc = dirichlet_q_cot(x, cfg.n_fft);
            m0 += g * q.norm_sqr();
            m1 += g * half * (q.conj() * qc).re;
            m2 += g * quarter * qc.norm_sqr();
        }
    }
    (m0, m1, m2)
}

pub fn rms_duration<T: Real>(cfg: &WaveformConfig<T>, speed: T) -> RmsDuration<T> {
    let (m0, m1, m2) = kernel_moments(cfg, speed);
    let n2 = (m2 / m0 - (m1 / m0) * (m1 / m0)).max(T::zero());

    let nn = cfg.n_fft as i64;
    let mut approx = T::zero();
    for (&q, &g) in cfg.subcarriers.iter().zip(&cfg.weights) {
        for &p in &cfg.subcarriers {
            if p != q {
                let s = (T::pi() * lit::<T>((p - q) as f64) / lit(nn as f64)).sin();
                approx += g / (lit::<T>(4.0) * s * s);
            }
        }
    }
    let m: T = lit(cfg.block_len() as f64);
    let nb: T = lit(cfg.n_blocks as f64);
    let block_var = m * m * (nb * nb - T::one()) / lit(12.0);
    RmsDuration {
        t_rms: cfg.sample_period() * (block_var + n2).sqrt(),
        n_rms: n2.sqrt(),
        n_rms_approx: approx.sqrt(),
    }
}

/// Waveform scalars of a channel, one entry per path speed.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformStats<T> {
    pub bandwidth: T,
    pub effective_carrier: T,
    pub path_bandwidth: Vec<T>,
    pub doppler: Vec<DopplerIntensity<T>>,
    pub rms: Vec<RmsDuration<T>>,
}

pub fn waveform_stats<T: Real>(cfg: &WaveformConfig<T>, speeds: &[T]) -> WaveformStats<T> {
    WaveformStats {
        bandwidth: effective_bandwidth(cfg),
        effective_carrier: effective_carrier(cfg),
        path_bandwidth: speeds.iter().map(|&v| path_bandwidth(cfg, v)).collect(),
        doppler: speeds.iter().map(|&v| doppler_intensity(cfg, v)).collect(),
        rms: speeds.iter().map(|&v| rms_duration(cfg, v)).collect(),
    }
}

/// Transmitted vectors `x_b[p]`, indexed `[block][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal<T: Real> {
    pub blocks: Vec<Vec<DVector<Complex<T>>>>,
}

impl<T: Real> ReferenceSignal<T> {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Deterministic beam sweep: one block per precoder column, carrying the
    /// energy of all `N_B` blocks, so that `sum_b x x^H` equals its
    /// expectation under random signalling.
    pub fn beam_sweep(cfg: &WaveformConfig<T>, beams: &BeamConfig<T>) -> Self {
        let p = &beams.precoder;
        let fro2 = p.norm_squared();
        let blocks = (0..p.ncols())
            .map(|k| {
                cfg.weights
                    .iter()
                    .map(|&g| {
                        let amp = (lit::<T>(cfg.n_blocks as f64) * g * cfg.tx_power / fro2).sqrt();
                        p.column(k).map(|z| z * amp)
                    })
                    .collect()
            })
            .collect();
        Self { blocks }
    }
}

/// I.i.d. circular Gaussian symbols through the precoder with
/// `E[x x^H] = gamma_p P_T P P^H / ||P||_F^2`.
pub fn reference_signal<T: Real, R: Rng + ?Sized>(
    cfg: &WaveformConfig<T>,
    beams: &BeamConfig<T>,
    rng: &mut R,
) -> ReferenceSignal<T> {
    let p = &beams.precoder;
    let fro2 = p.norm_squared();
    let m_t = p.ncols();
    let blocks = (0..cfg.n_blocks)
        .map(|_| {
            cfg.weights
                .iter()
                .map(|&g| {
                    let std = (g * cfg.tx_power / fro2 / lit(2.0)).sqrt();
                    let s = DVector::from_fn(m_t, |_, _| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(lit::<T>(re) * std, lit::<T>(im) * std)
                    });
                    p * s
                })
                .collect()
        })
        .collect();
    ReferenceSignal { blocks }
}
