#![allow(dead_code)]

use mmwloc::geometry::{
    build_uca, channel_geometry, path_gains, ArrayGeometry, ChannelGeometry, PathGains, Placement,
    Side,
};
use mmwloc::waveform::{noise_var_from_density, subcarrier_range, WaveformConfig};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FC: f64 = 38e9;
pub const FS: f64 = 245.76e6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn wavelength() -> f64 {
    mmwloc::SPEED_OF_LIGHT / FC
}

/// Small numerology: N = 16, eight odd subcarriers.
pub fn toy_config(n_blocks: usize) -> WaveformConfig<f64> {
    WaveformConfig::new(
        16,
        4,
        n_blocks,
        FS,
        FC,
        subcarrier_range(-7, 2, 7).unwrap(),
        0.1,
        noise_var_from_density(1e-20, FS),
    )
    .unwrap()
}

/// 100 subcarriers -297..297 step 6, N = 1024.
pub fn full_config(n_cp: usize, n_blocks: usize, tx_power: f64) -> WaveformConfig<f64> {
    WaveformConfig::new(
        1024,
        n_cp,
        n_blocks,
        FS,
        FC,
        subcarrier_range(-297, 6, 297).unwrap(),
        tx_power,
        noise_var_from_density(1e-20, FS),
    )
    .unwrap()
}

pub fn uca(n: usize, alpha: f64) -> ArrayGeometry<f64> {
    build_uca(n, wavelength() / 2.0, alpha).unwrap()
}

fn disk_point<R: Rng>(rng: &mut R, radius: f64) -> Vector2<f64> {
    let r = radius * rng.random::<f64>().sqrt();
    let t = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Vector2::new(r * t.cos(), r * t.sin())
}

/// Tx at the origin, Rx and scatterers in a 50 m disk, at least 1 m apart.
pub fn random_placement<R: Rng>(rng: &mut R, n_scatterers: usize) -> Placement<f64> {
    loop {
        let rx = disk_point(rng, 50.0);
        let sc: Vec<_> = (0..n_scatterers).map(|_| disk_point(rng, 50.0)).collect();
        let tx = Vector2::zeros();
        let mut pts = vec![tx, rx];
        pts.extend(sc.iter().cloned());
        let ok = (0..pts.len()).all(|i| (i + 1..pts.len()).all(|j| (pts[i] - pts[j]).norm() > 1.0));
        if ok {
            return Placement::new(tx, rx, sc);
        }
    }
}

pub fn random_motion<R: Rng>(rng: &mut R, placement: Placement<f64>, side: Side) -> Placement<f64> {
    let t = rng.random_range(-3.1..3.1);
    let speed = rng.random_range(5.0..60.0);
    placement.with_motion(Vector2::new(speed * f64::cos(t), speed * f64::sin(t)), side)
}

pub fn random_channel<R: Rng>(
    rng: &mut R,
    placement: &Placement<f64>,
    tx: &ArrayGeometry<f64>,
    rx: &ArrayGeometry<f64>,
) -> (ChannelGeometry<f64>, PathGains<f64>) {
    let g = channel_geometry(placement, (tx, rx)).unwrap();
    let h = path_gains(&g, 0.1, wavelength(), rng).unwrap();
    (g, h)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

use mmwloc::estimand::{Estimand, Ktt, PositionParam};
use mmwloc::fim_exact::Mode;
use nalgebra::DMatrix;

/// Channel parameter vector as a function of the position parameters,
/// rebuilt from scratch: perturb `which` by `step` and read the channel off
/// the new placement. Returns values in channel-label order.
pub fn geometry_map(
    placement: &Placement<f64>,
    arrays: (&ArrayGeometry<f64>, &ArrayGeometry<f64>),
    estimand: &Estimand<f64>,
    which: PositionParam,
    step: f64,
) -> Vec<f64> {
    let mut pl = placement.clone();
    let (mut tx, mut rx) = (arrays.0.clone(), arrays.1.clone());
    let unknown_rx = estimand.unknown == Side::Rx;
    let mut clock = 0.0;
    match which {
        PositionParam::PosX | PositionParam::PosY => {
            let k = if which == PositionParam::PosX { 0 } else { 1 };
            if unknown_rx {
                pl.rx[k] += step
            } else {
                pl.tx[k] += step
            }
        }
        PositionParam::Orientation => {
            if unknown_rx {
                rx = rx.with_orientation(rx.orientation + step)
            } else {
                tx = tx.with_orientation(tx.orientation + step)
            }
        }
        PositionParam::VelX | PositionParam::VelY => {
            let k = if which == PositionParam::VelX { 0 } else { 1 };
            pl.motion.as_mut().unwrap().velocity[k] += step;
        }
        PositionParam::ScattererX(l) => pl.scatterers[l - 1][0] += step,
        PositionParam::ScattererY(l) => pl.scatterers[l - 1][1] += step,
        PositionParam::ClockOffset | PositionParam::ClockError => clock += step,
        PositionParam::GainRe(_) | PositionParam::GainIm(_) => {}
    }
    let g = channel_geometry(&pl, (&tx, &rx)).unwrap();
    let tau_s = match estimand.ktt {
        Ktt::None => clock,
        _ => g.paths[0].delay + clock,
    };
    let mut out = vec![tau_s];
    for (l, p) in g.paths.iter().enumerate() {
        if l > 0 {
            out.push(p.excess_delay);
        }
        out.push(p.theta_tx_rel);
        out.push(p.theta_rx_rel);
        if estimand.mode == Mode::Dynamic {
            out.push(p.radial_speed);
        }
        let (re, im) = match which {
            PositionParam::GainRe(m) if m == l => (step, 0.0),
            PositionParam::GainIm(m) if m == l => (0.0, step),
            _ => (0.0, 0.0),
        };
        out.push(re);
        out.push(im);
    }
    out
}

fn angle_gap(a: f64, b: f64) -> f64 {
    mmwloc::scalar::wrap_angle(a - b)
}

/// Central-difference Jacobian with rows in `rows` order.
pub fn jacobian_fd(
    placement: &Placement<f64>,
    arrays: (&ArrayGeometry<f64>, &ArrayGeometry<f64>),
    estimand: &Estimand<f64>,
    rows: &[PositionParam],
    angle_cols: &[bool],
) -> DMatrix<f64> {
    let n = angle_cols.len();
    let mut out = DMatrix::zeros(rows.len(), n);
    for (i, &r) in rows.iter().enumerate() {
        let h = match r {
            PositionParam::Orientation => 1e-8,
            PositionParam::ClockOffset | PositionParam::ClockError => 1e-12,
            PositionParam::VelX | PositionParam::VelY => 1e-3,
            PositionParam::GainRe(_) | PositionParam::GainIm(_) => 1e-7,
            _ => 1e-6,
        };
        let plus = geometry_map(placement, arrays, estimand, r, h);
        let minus = geometry_map(placement, arrays, estimand, r, -h);
        for j in 0..n {
            let d = if angle_cols[j] {
                angle_gap(plus[j], minus[j])
            } else {
                plus[j] - minus[j]
            };
            out[(i, j)] = d / (2.0 * h);
        }
    }
    out
}

/// Entrywise relative error, with a floor of `1e-3` times the column's
/// largest entry for structurally tiny entries.
pub fn jacobian_error(ana: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..ana.ncols() {
        let scale = ana.column(j).amax().max(fd.column(j).amax());
        for i in 0..ana.nrows() {
            let den = ana[(i, j)].abs().max(1e-3 * scale);
            if den == 0.0 {
                continue;
            }
            worst = worst.max((ana[(i, j)] - fd[(i, j)]).abs() / den);
        }
    }
    worst
}

/// Relative Frobenius error after symmetric Jacobi scaling by `b`'s diagonal.
pub fn eq_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s: Vec<f64> = (0..b.nrows()).map(|i| 1.0 / b[(i, i)].sqrt()).collect();
    let sa = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * s[r] * s[c]);
    let sb = DMatrix::from_fn(b.nrows(), b.ncols(), |r, c| b[(r, c)] * s[r] * s[c]);
    (sa - &sb).norm() / sb.norm()
}
