//! Large-array, large-bandwidth EFIMs in closed form, the asymptotic
//! channel FIM they are derived from, the clock-prior (KTT) variant and
//! the downlink/uplink scaling law.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::estimand::{efim, transformation_matrix, Efim, Estimand, Ktt};
use crate::fim_exact::{channel_labels, ChannelParam, FisherMatrix, Mode};
use crate::geometry::{ArrayGeometry, ChannelGeometry, PathGains, Side};
use crate::scalar::{light, lit, unit, unit_perp, Real};
use crate::waveform::{
    doppler_intensity, effective_bandwidth, effective_carrier, kernel_moments, mean_baseband,
    path_bandwidth, rms_duration, saaf, WaveformConfig,
};

/// Closed-form EFIM with its decomposition:
/// `total = prefactor * (los + sum(nlos) - coupling)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticEfim<T: Real> {
    pub total: Efim<T>,
    pub los: DMatrix<T>,
    pub nlos: Vec<DMatrix<T>>,
    pub coupling: DMatrix<T>,
    pub prefactor: T,
}

fn efim_labels(n: usize) -> Vec<String> {
    ["x", "y", "alpha", "vx", "vy"][..n]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl<T: Real> AsymptoticEfim<T> {
    fn assemble(
        los: DMatrix<T>,
        nlos: Vec<DMatrix<T>>,
        coupling: DMatrix<T>,
        prefactor: T,
    ) -> Self {
        let n = los.nrows();
        let mut sum = los.clone();
        for m in &nlos {
            sum += m;
        }
        sum -= &coupling;
        let total = FisherMatrix::new(efim_labels(n), sum * prefactor).expect("square");
        Self {
            total,
            los,
            nlos,
            coupling,
            prefactor,
        }
    }
}

fn outer<T: Real>(z: &DVector<T>) -> DMatrix<T> {
    z * z.transpose()
}

fn vec3<T: Real>(v: Vector2<T>, last: T) -> DVector<T> {
    DVector::from_vec(vec![v.x, v.y, last])
}

fn vec5<T: Real>(a: Vector2<T>, alpha: T, v: Vector2<T>) -> DVector<T> {
    DVector::from_vec(vec![a.x, a.y, alpha, v.x, v.y])
}

/// Reciprocal form of the NLOS weight: `1 / (cpl^2 (1/i_t + 1/i_r) + sn^2/i_tau)`
/// without dividing by a possibly zero angle information.
fn path_weight<T: Real>(i_tau: T, i_t: T, i_r: T, cpl: T, sn: T) -> T {
    let num = i_tau * i_t * i_r;
    if num == T::zero() {
        return T::zero();
    }
    num / (cpl * cpl * i_tau * (i_t + i_r) + sn * sn * i_t * i_r)
}

fn squared_magnitudes<T: Real>(gains: &PathGains<T>) -> Vec<T> {
    gains.gains.iter().map(|h| h.norm_sqr()).collect()
}

fn check_paths<T: Real>(geom: &ChannelGeometry<T>, gains: &PathGains<T>) -> Result<()> {
    if geom.num_paths() != gains.gains.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains for {} paths",
            gains.gains.len(),
            geom.num_paths()
        )));
    }
    Ok(())
}

fn static_closed_form<T: Real>(
    cfg: &WaveformConfig<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
    geom: &ChannelGeometry<T>,
    gains: &PathGains<T>,
    unknown: Side,
    ktt: Ktt<T>,
) -> Result<AsymptoticEfim<T>> {
    check_paths(geom, gains)?;
    let (tx_array, rx_array) = arrays;
    let c = light::<T>();
    let delta = cfg.snr_prefactor(rx_array.len());
    let k2 = effective_carrier(cfg) * effective_carrier(cfg) / (c * c);
    let beta = effective_bandwidth(cfg);
    let i_tau = beta * beta / (c * c);
    let h2 = squared_magnitudes(gains);
    let los = geom.los();
    let d = geom.dist_tr;
    let s_t0 = saaf(tx_array, los.theta_tx_rel);
    let s_r0 = saaf(rx_array, los.theta_rx_rel);
    let rx_side = unknown == Side::Rx;

    let (z_t0, z_r0, anchor_dir) = if rx_side {
        let p = unit_perp(los.theta_rx);
        (vec3(p, T::zero()), vec3(p, -d), unit(los.theta_rx))
    } else {
        let p = unit_perp(los.theta_tx);
        (vec3(p, -d), vec3(p, T::zero()), unit(los.theta_tx))
    };
    let mut j_los = (outer(&z_t0) * s_t0 + outer(&z_r0) * s_r0) * (h2[0] * k2 / (d * d));
    let z_tau0 = vec3(-anchor_dir, T::zero());
    let with_clock = !matches!(ktt, Ktt::None);
    if with_clock {
        j_los += outer(&z_tau0) * (h2[0] * i_tau);
    }

    let mut nlos = Vec::new();
    let mut z_sum = DVector::zeros(3);
    let mut k_sum = h2[0] * i_tau;
    for (l, p) in geom.paths.iter().enumerate().skip(1) {
        let cpl = T::one() + p.angle_diff.cos();
        let sn = p.angle_diff.sin();
        let i_t = k2 * saaf(tx_array, p.theta_tx_rel) / (p.dist_tx * p.dist_tx);
        let i_r = k2 * saaf(rx_array, p.theta_rx_rel) / (p.dist_rx * p.dist_rx);
        let f = path_weight(i_tau, i_t, i_r, cpl, sn);
        let dirs = unit_perp(p.theta_tx) + unit_perp(p.theta_rx);
        let arm = if rx_side { p.dist_rx } else { p.dist_tx };
        let shift = match (with_clock, rx_side) {
            (true, _) => Vector2::zeros(),
            (false, true) => anchor_dir * sn,
            (false, false) => -anchor_dir * sn,
        };
        let z = vec3(dirs + shift, -cpl * arm);
        nlos.push(outer(&z) * (h2[l] * f));
        z_sum += z * (h2[l] * sn * f);
        k_sum += h2[l] * sn * sn * f;
    }
    let coupling = match ktt {
        Ktt::Perfect => DMatrix::zeros(3, 3),
        Ktt::None => outer(&z_sum) / k_sum,
        Ktt::Imperfect { sigma } => {
            let z = z_tau0 * (h2[0] * i_tau) + z_sum;
            let k = T::one() / (delta * sigma * sigma * c * c) + k_sum;
            outer(&z) / k
        }
    };
    Ok(AsymptoticEfim::assemble(j_los, nlos, coupling, delta))
}

/// Position and orientation EFIM of a static receiver without transmit-time
/// knowledge.
pub fn efim_po_asym_rx<T: Real>(
    cfg: &WaveformConfig<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
    geom: &ChannelGeometry<T>,
    gains: &PathGains<T>,
) -> Result<AsymptoticEfim<T>> {
    static_closed_form(cfg, arrays, geom, gains, Side::Rx, Ktt::None)
}

/// Position and orientation EFIM of a static transmitter without
/// transmit-time knowledge.
pub fn efim_po_asym_tx<T: Real>(
    cfg: &WaveformConfig<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
    geom: &ChannelGeometry<T>,
    gains: &PathGains<T>,
) -> Result<AsymptoticEfim<T>> {
    static_closed_form(cfg, arrays, geom, gains, Side::Tx, Ktt::None)
}

/// Static receiver EFIM under a given level of transmit-time knowledge.
pub fn efim_po_ktt<T: Real>(
    cfg: &WaveformConfig<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
    geom: &ChannelGeometry<T>,
    gains: &PathGains<T>,
    ktt: Ktt<T>,
) -> Result<AsymptoticEfim<T>> {
    if let Ktt::Imperfect { sigma } = ktt {
        if !(sigma > T::zero()) {
            return Err(Error::InvalidArgument(
                "clock error std must be positive".into(),
            ));
        }
    }
    static_closed_form(cfg, arrays, geom, gains, Side::Rx, ktt)
}

/// Position, orientation and velocity EFIM of the moving end (5x5), without
/// transmit-time knowledge. The moving side is read from the geometry.
pub fn efim_pov_asym<T: Real>(
    cfg: &WaveformConfig<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
    geom: &ChannelGeometry<T>,
    gains: &PathGains<T>,
) -> Result<AsymptoticEfim<T>> {
    check_paths(geom, gains)?;
    let motion = geom
        .motion
        .ok_or_else(|| Error::ModeMismatch("dynamic EFIM needs a velocity".into()))?;
    // a moving transmitter is the receiver case with the link reversed
    let (geom, tx_array, rx_array) = match motion.side {
        Side::Rx => (geom.clone(), arrays.0, arrays.1),
        Side::Tx => (geom.swap_ends(), arrays.1, arrays.0),
    };
    let c = light::<T>();
    let delta = cfg.snr_prefactor(arrays.1.len());
    let wc = cfg.carrier_omega();
    let k2 = wc * wc / (c * c);
    let h2 = squared_magnitudes(gains);
    let los = geom.los();
    let d = geom.dist_tr;
    let u_r0 = unit(los.theta_rx);
    let perp_r0 = unit_perp(los.theta_rx);
    let zero2 = Vector2::zeros();

    let xi0 = doppler_intensity(cfg, los.radial_speed).total;
    let t0 = rms_duration(cfg, los.radial_speed).t_rms;
    let rho0 = los.transverse_speed;
    let z_t0 = vec5(perp_r0, T::zero(), zero2);
    let z_r0 = vec5(perp_r0, -d, zero2);
    let z_v0 = vec5(-perp_r0 * rho0, T::zero(), u_r0 * d);
    let j_los = (outer(&z_t0) * saaf(tx_array, los.theta_tx_rel)
        + outer(&z_r0) * saaf(rx_array, los.theta_rx_rel)
        + outer(&z_v0) * (t0 * t0))
        * (h2[0] * xi0 * k2 / (d * d));

    let beta0 = path_bandwidth(cfg, los.radial_speed);
    let mut k_sum = h2[0] * xi0 * beta0 * beta0 / (c * c);
    let mut z_sum = DVector::zeros(5);
    let mut nlos = Vec::new();
    for (l, p) in geom.paths.iter().enumerate().skip(1) {
        let xi = doppler_intensity(cfg, p.radial_speed).total;
        let beta_l = path_bandwidth(cfg, p.radial_speed);
        let t_rms = rms_duration(cfg, p.radial_speed).t_rms;
        let rho = p.transverse_speed;
        let cpl = T::one() + p.angle_diff.cos();
        let sn = p.angle_diff.sin();
        let i_tau = beta_l * beta_l / (c * c);
        let i_t = k2 * saaf(tx_array, p.theta_tx_rel) / (p.dist_tx * p.dist_tx);
        let i_r = k2 * saaf(rx_array, p.theta_rx_rel) / (p.dist_rx * p.dist_rx);
        // velocity information per rho^2
        let k_v = k2 * t_rms * t_rms / (p.dist_rx * p.dist_rx);
        let i_v = k_v * rho * rho;
        let chi = cpl * cpl * i_tau * (i_t + i_r + i_v) + sn * sn * i_t * (i_r + i_v);
        let u_rl = unit(p.theta_rx);
        let a = unit_perp(p.theta_tx) + unit_perp(p.theta_rx) + u_r0 * sn;
        let z1 = vec5(a, -cpl * p.dist_rx, zero2);
        // rho-scaled second and third directions
        let z2 = vec5(a * rho, T::zero(), u_rl * (-cpl * p.dist_rx));
        let z3 = vec5(zero2, -rho * p.dist_rx, u_rl * p.dist_rx);
        let (f1, f2, f3) = if chi > T::zero() {
            (
                i_tau * i_r * i_t / chi,
                i_tau * i_t * k_v / chi,
                i_r * k_v * (i_tau * cpl * cpl + i_t * sn * sn) / chi,
            )
        } else {
            (T::zero(), T::zero(), T::zero())
        };
        let j = (outer(&z1) * f1 + outer(&z2) * f2 + outer(&z3) * f3) * (h2[l] * xi);
        nlos.push(j);
        z_sum += (&z1 * f1 + &z2 * (f2 * rho)) * (h2[l] * sn * xi);
        k_sum += h2[l] * xi * sn * sn * (f1 + f2 * rho * rho);
    }
    let coupling = outer(&z_sum) / k_sum;
    Ok(AsymptoticEfim::assemble(j_los, nlos, coupling, delta))
}

/// Asymptotic channel-parameter FIM (favorable propagation: distinct paths
/// decouple and the steering derivatives are orthogonal to the steering
/// vectors).
pub fn fim_channel_asym<T: Real>(
    cfg: &WaveformConfig<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
    geom: &ChannelGeometry<T>,
    gains: &PathGains<T>,
    mode: Mode,
) -> Result<FisherMatrix<T>> {
    check_paths(geom, gains)?;
    if mode == Mode::Dynamic && geom.motion.is_none() {
        return Err(Error::ModeMismatch("dynamic FIM needs a velocity".into()));
    }
    let (tx_array, rx_array) = arrays;
    let c = light::<T>();
    let delta = cfg.snr_prefactor(rx_array.len());
    let labels = channel_labels(geom.num_paths(), mode);
    let n = labels.len();
    let idx = |p: ChannelParam| labels.iter().position(|&q| q == p).expect("label");
    let mut j = DMatrix::zeros(n, n);
    let omegas = cfg.omegas();
    let ts = cfg.sample_period();

    for (l, (p, h)) in geom.paths.iter().zip(&gains.gains).enumerate() {
        let h2 = h.norm_sqr();
        // per-path moments: xi, sum w omega, sum w omega^2, angle scale
        let (xi, m1, m2, k_angle) = match mode {
            Mode::Static => {
                let m1 = mean_baseband(cfg);
                let m2 = omegas
                    .iter()
                    .zip(&cfg.weights)
                    .fold(T::zero(), |a, (&w, &g)| a + g * w * w);
                let wbar = effective_carrier(cfg);
                (T::one(), m1, m2, wbar / c)
            }
            Mode::Dynamic => {
                let dop = doppler_intensity(cfg, p.radial_speed);
                let (mut m1, mut m2) = (T::zero(), T::zero());
                for ((&w, &g), &x) in omegas.iter().zip(&cfg.weights).zip(&dop.per_subcarrier) {
                    m1 += g * x * w;
                    m2 += g * x * w * w;
                }
                (dop.total, m1, m2, cfg.carrier_omega() / c)
            }
        };
        let delays: Vec<usize> = if l == 0 {
            vec![idx(ChannelParam::ClockOffset)]
        } else {
            vec![
                idx(ChannelParam::ClockOffset),
                idx(ChannelParam::ExcessDelay(l)),
            ]
        };
        let hr = idx(ChannelParam::GainRe(l));
        let hi = idx(ChannelParam::GainIm(l));
        for (i, &a) in delays.iter().enumerate() {
            for &b in &delays[i..] {
                j[(a, b)] += h2 * m2;
            }
            j[(a, hr)] += h.im * m1;
            j[(a, hi)] -= h.re * m1;
        }
        j[(hr, hr)] += xi;
        j[(hi, hi)] += xi;
        let tt = idx(ChannelParam::DepartureAngle(l));
        let tr = idx(ChannelParam::ArrivalAngle(l));
        j[(tt, tt)] += h2 * xi * k_angle * k_angle * saaf(tx_array, p.theta_tx_rel);
        j[(tr, tr)] += h2 * xi * k_angle * k_angle * saaf(rx_array, p.theta_rx_rel);

        if mode == Mode::Dynamic {
            let v = idx(ChannelParam::Speed(l));
            let (_, r1, r2) = kernel_moments(cfg, p.radial_speed);
            let m: T = lit(cfg.block_len() as f64);
            let nb: T = lit(cfg.n_blocks as f64);
            let s_mean = (nb - T::one()) * m / lit(2.0) + lit::<T>((cfg.n_fft as f64 - 1.0) / 2.0);
            let s1 = xi * s_mean;
            let s2 = xi * (s_mean * s_mean + m * m * (nb * nb - T::one()) / lit(12.0));
            let kv = k_angle * ts;
            j[(v, v)] += h2 * kv * kv * (r2 + s2);
            j[(v, hr)] += kv * (h.re * r1 - h.im * s1);
            j[(v, hi)] += kv * (h.im * r1 + h.re * s1);
            for &a in &delays {
                j[(a, v)] -= h2 * kv * m1 * s_mean;
            }
        }
    }
    // mirror the upper-triangle contributions that were written one-sided
    let mut full = DMatrix::zeros(n, n);
    for r in 0..n {
        for c2 in 0..n {
            full[(r, c2)] = if r == c2 {
                j[(r, c2)]
            } else {
                j[(r, c2)] + j[(c2, r)]
            };
        }
    }
    let labels: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
    FisherMatrix::new(labels, full * delta)
}

/// EFIM from the asymptotic channel FIM by a numeric Schur complement.
/// Covers cases without a closed form, e.g. a moving receiver with a
/// clock prior.
pub fn efim_asym_numeric<T: Real>(
    cfg: &WaveformConfig<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
    geom: &ChannelGeometry<T>,
    gains: &PathGains<T>,
    estimand: &Estimand<T>,
) -> Result<Efim<T>> {
    let j = fim_channel_asym(cfg, arrays, geom, gains, estimand.mode)?;
    let t = transformation_matrix(geom, estimand)?;
    efim(&j, &t, estimand.n_interest())
}

/// Noise levels, powers and antenna counts of a downlink/uplink pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T> {
    pub noise_var_bs: T,
    pub noise_var_ue: T,
    pub power_bs: T,
    pub power_ue: T,
    pub n_bs: T,
    pub n_ue: T,
}

impl<T: Real> LinkBudget<T> {
    /// `J_UL / J_DL`.
    pub fn uplink_ratio(&self) -> T {
        (self.noise_var_ue / self.noise_var_bs) * (self.n_bs * self.power_ue)
            / (self.n_ue * self.power_bs)
    }
}

/// Uplink EFIM of the UE from the matching downlink EFIM.
pub fn ul_from_dl<T: Real>(j_dl: &Efim<T>, budget: &LinkBudget<T>) -> Efim<T> {
    j_dl.scaled(budget.uplink_ratio())
}
