//! From channel-parameter information to position information: the
//! Jacobian of the channel parameters with respect to positions, orientation,
//! velocity and clock, the equivalent FIM (Schur complement) and the
//! position, orientation and velocity error bounds.

use std::fmt;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::fim_exact::{channel_labels, ChannelParam, FisherMatrix, Mode};
use crate::geometry::{ChannelGeometry, Side};
use crate::scalar::{light, lit, to_f64, unit, unit_perp, Real};

/// Knowledge of the time of transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ktt<T> {
    /// The clock offset is a free nuisance parameter.
    None,
    /// The receiver knows the transmit time exactly.
    Perfect,
    /// Transmit time known up to a zero-mean Gaussian error, std `sigma` s.
    Imperfect { sigma: T },
}

/// What is estimated: which end is unknown, and whether it moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimand<T> {
    pub unknown: Side,
    pub mode: Mode,
    pub ktt: Ktt<T>,
}

impl<T: Real> Estimand<T> {
    pub fn new(unknown: Side, mode: Mode, ktt: Ktt<T>) -> Self {
        Self { unknown, mode, ktt }
    }

    /// Rows kept in the EFIM: 3 static, 5 dynamic.
    pub fn n_interest(&self) -> usize {
        match self.mode {
            Mode::Static => 3,
            Mode::Dynamic => 5,
        }
    }
}

/// One entry of the position parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PositionParam {
    PosX,
    PosY,
    Orientation,
    VelX,
    VelY,
    ClockOffset,
    ClockError,
    GainRe(usize),
    GainIm(usize),
    ScattererX(usize),
    ScattererY(usize),
}

impl fmt::Display for PositionParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PositionParam::PosX => write!(f, "x"),
            PositionParam::PosY => write!(f, "y"),
            PositionParam::Orientation => write!(f, "alpha"),
            PositionParam::VelX => write!(f, "vx"),
            PositionParam::VelY => write!(f, "vy"),
            PositionParam::ClockOffset => write!(f, "tau_s"),
            PositionParam::ClockError => write!(f, "eps_clk"),
            PositionParam::GainRe(l) => write!(f, "h_re_{l}"),
            PositionParam::GainIm(l) => write!(f, "h_im_{l}"),
            PositionParam::ScattererX(l) => write!(f, "s_x_{l}"),
            PositionParam::ScattererY(l) => write!(f, "s_y_{l}"),
        }
    }
}

/// Position parameter labels for `n_paths` paths.
pub fn position_labels<T: Real>(n_paths: usize, estimand: &Estimand<T>) -> Vec<PositionParam> {
    use PositionParam::*;
    let mut out = vec![PosX, PosY, Orientation];
    if estimand.mode == Mode::Dynamic {
        out.extend([VelX, VelY]);
    }
    match estimand.ktt {
        Ktt::None => out.push(ClockOffset),
        Ktt::Perfect => {}
        Ktt::Imperfect { .. } => out.push(ClockError),
    }
    out.extend([GainRe(0), GainIm(0)]);
    for l in 1..n_paths {
        out.extend([ScattererX(l), ScattererY(l), GainRe(l), GainIm(l)]);
    }
    out
}

/// `[T]_{ij} = d channel_j / d position_i`, plus prior information on the
/// position parameters (clock error only).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix<T: Real> {
    pub rows: Vec<PositionParam>,
    pub cols: Vec<ChannelParam>,
    pub values: DMatrix<T>,
    pub prior: DVector<T>,
    pub n_interest: usize,
}

impl<T: Real> TransformMatrix<T> {
    pub fn row_labels(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.to_string()).collect()
    }

    /// `T J T^T + diag(prior)`.
    pub fn apply(&self, j_phi: &FisherMatrix<T>) -> Result<FisherMatrix<T>> {
        let cols: Vec<String> = self.cols.iter().map(|c| c.to_string()).collect();
        if cols != j_phi.labels {
            return Err(Error::DimensionMismatch(
                "FIM labels do not match the transformation".into(),
            ));
        }
        let full = &self.values * &j_phi.values * self.values.transpose()
            + DMatrix::from_diagonal(&self.prior);
        FisherMatrix::new(self.row_labels(), full)
    }
}

/// Jacobian of the channel parameters with respect to the position
/// parameters of `estimand`.
pub fn transformation_matrix<T: Real>(
    geom: &ChannelGeometry<T>,
    estimand: &Estimand<T>,
) -> Result<TransformMatrix<T>> {
    match (estimand.mode, geom.motion) {
        (Mode::Static, Some(_)) => {
            return Err(Error::ModeMismatch(
                "static estimand on a moving geometry".into(),
            ))
        }
        (Mode::Dynamic, None) => {
            return Err(Error::ModeMismatch(
                "dynamic estimand needs a velocity".into(),
            ))
        }
        (Mode::Dynamic, Some(m)) if m.side != estimand.unknown => {
            return Err(Error::ModeMismatch("only the unknown end may move".into()))
        }
        _ => {}
    }
    if let Ktt::Imperfect { sigma } = estimand.ktt {
        if !(sigma > T::zero()) {
            return Err(Error::InvalidArgument(
                "clock error std must be positive".into(),
            ));
        }
    }
    let n_paths = geom.num_paths();
    let rows = position_labels(n_paths, estimand);
    let cols = channel_labels(n_paths, estimand.mode);
    let mut t = DMatrix::zeros(rows.len(), cols.len());
    let mut prior = DVector::zeros(rows.len());
    let row = |p: PositionParam| rows.iter().position(|&r| r == p).expect("row present");
    let col = |p: ChannelParam| cols.iter().position(|&c| c == p).expect("col present");
    let put2 =
        |t: &mut DMatrix<T>, r: (PositionParam, PositionParam), c: ChannelParam, v: Vector2<T>| {
            let j = col(c);
            t[(row(r.0), j)] = v.x;
            t[(row(r.1), j)] = v.y;
        };
    let c = light::<T>();
    let los = geom.los();
    let rx_side = estimand.unknown == Side::Rx;
    let dynamic = estimand.mode == Mode::Dynamic;
    let pos = (PositionParam::PosX, PositionParam::PosY);
    // angles at the unknown end, at the anchor, and the matching distances
    let here = |p: &crate::geometry::PathGeometry<T>| {
        if rx_side {
            (p.theta_rx, p.dist_rx)
        } else {
            (p.theta_tx, p.dist_tx)
        }
    };
    let (theta_here0, _) = here(los);

    for (l, p) in geom.paths.iter().enumerate() {
        let (theta_h, dist_h) = here(p);
        let (own_angle, far_angle) = if rx_side {
            (
                ChannelParam::ArrivalAngle(l),
                ChannelParam::DepartureAngle(l),
            )
        } else {
            (
                ChannelParam::DepartureAngle(l),
                ChannelParam::ArrivalAngle(l),
            )
        };
        put2(&mut t, pos, own_angle, unit_perp(theta_h) / dist_h);
        if l == 0 {
            put2(
                &mut t,
                pos,
                far_angle,
                unit_perp(theta_here0) / geom.dist_tr,
            );
        } else {
            put2(
                &mut t,
                pos,
                ChannelParam::ExcessDelay(l),
                (unit(theta_here0) - unit(theta_h)) / c,
            );
        }
        t[(row(PositionParam::Orientation), col(own_angle))] = -T::one();
        if dynamic {
            let rho = p.transverse_speed;
            put2(
                &mut t,
                pos,
                ChannelParam::Speed(l),
                unit_perp(theta_h) * (-rho / dist_h),
            );
            put2(
                &mut t,
                (PositionParam::VelX, PositionParam::VelY),
                ChannelParam::Speed(l),
                unit(theta_h),
            );
        }
        t[(row(PositionParam::GainRe(l)), col(ChannelParam::GainRe(l)))] = T::one();
        t[(row(PositionParam::GainIm(l)), col(ChannelParam::GainIm(l)))] = T::one();
        if l > 0 {
            let sc = (PositionParam::ScattererX(l), PositionParam::ScattererY(l));
            put2(
                &mut t,
                sc,
                ChannelParam::ExcessDelay(l),
                (unit(p.theta_tx) + unit(p.theta_rx)) / c,
            );
            put2(
                &mut t,
                sc,
                ChannelParam::DepartureAngle(l),
                -unit_perp(p.theta_tx) / p.dist_tx,
            );
            put2(
                &mut t,
                sc,
                ChannelParam::ArrivalAngle(l),
                -unit_perp(p.theta_rx) / p.dist_rx,
            );
            if dynamic {
                let rho = p.transverse_speed;
                let d_moving = if rx_side { p.dist_rx } else { p.dist_tx };
                put2(
                    &mut t,
                    sc,
                    ChannelParam::Speed(l),
                    unit_perp(theta_h) * (rho / d_moving),
                );
            }
        }
    }
    match estimand.ktt {
        Ktt::None => {
            t[(
                row(PositionParam::ClockOffset),
                col(ChannelParam::ClockOffset),
            )] = T::one()
        }
        Ktt::Perfect | Ktt::Imperfect { .. } => {
            put2(
                &mut t,
                pos,
                ChannelParam::ClockOffset,
                -unit(theta_here0) / c,
            );
        }
    }
    if let Ktt::Imperfect { sigma } = estimand.ktt {
        let r = row(PositionParam::ClockError);
        t[(r, col(ChannelParam::ClockOffset))] = T::one();
        prior[r] = T::one() / (sigma * sigma);
    }
    Ok(TransformMatrix {
        rows,
        cols,
        values: t,
        prior,
        n_interest: estimand.n_interest(),
    })
}

/// Equivalent FIM of the leading parameters.
pub type Efim<T> = FisherMatrix<T>;

/// Largest equilibrated condition number still treated as invertible.
pub fn condition_limit<T: Real>() -> T {
    lit::<T>(1e12 * f64::EPSILON) / T::default_epsilon()
}

fn equilibrated_condition<T: Real>(m: &DMatrix<T>) -> T {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min <= T::zero() {
        return lit(f64::INFINITY);
    }
    max / min
}

fn not_identifiable<T: Real>(cond: T) -> Error {
    Error::NotIdentifiable {
        condition: to_f64(cond),
    }
}

/// Schur complement of the trailing block of `full`, keeping the first
/// `keep` parameters. Works on the Jacobi-equilibrated matrix.
pub fn schur_complement<T: Real>(full: &DMatrix<T>, keep: usize) -> Result<DMatrix<T>> {
    let n = full.nrows();
    if !full.is_square() || keep == 0 || keep > n {
        return Err(Error::DimensionMismatch(format!(
            "cannot keep {keep} of {n} parameters"
        )));
    }
    let diag = full.diagonal();
    if diag.iter().any(|&d| !(d > T::zero())) {
        return Err(not_identifiable(lit::<T>(f64::INFINITY)));
    }
    let scale = diag.map(|d| T::one() / d.sqrt());
    let eq = DMatrix::from_fn(n, n, |r, c| full[(r, c)] * scale[r] * scale[c]);
    let eq = (&eq + eq.transpose()) * lit::<T>(0.5);
    let limit = condition_limit::<T>();
    let a = eq.view((0, 0), (keep, keep)).into_owned();
    let schur = if keep < n {
        let b = eq.view((0, keep), (keep, n - keep)).into_owned();
        let nuisance = eq.view((keep, keep), (n - keep, n - keep)).into_owned();
        let cond = equilibrated_condition(&nuisance);
        if !(cond <= limit) {
            return Err(not_identifiable(cond));
        }
        let chol = nuisance.cholesky().ok_or_else(|| not_identifiable(cond))?;
        let x = chol.solve(&b.transpose());
        let s = a - &b * x;
        (&s + s.transpose()) * lit::<T>(0.5)
    } else {
        a
    };
    let cond = equilibrated_condition(&schur);
    if !(cond <= limit) {
        return Err(not_identifiable(cond));
    }
    Ok(DMatrix::from_fn(keep, keep, |r, c| {
        schur[(r, c)] / (scale[r] * scale[c])
    }))
}

/// EFIM of the first `keep` position parameters.
pub fn efim<T: Real>(
    j_phi: &FisherMatrix<T>,
    t: &TransformMatrix<T>,
    keep: usize,
) -> Result<Efim<T>> {
    let full = t.apply(j_phi)?;
    efim_of_full(&full, keep)
}

/// EFIM of the first `keep` parameters of an already transformed FIM.
pub fn efim_of_full<T: Real>(full: &FisherMatrix<T>, keep: usize) -> Result<Efim<T>> {
    let values = schur_complement(&full.values, keep)?;
    FisherMatrix::new(full.labels[..keep].to_vec(), values)
}

/// Inverse of an EFIM, or `None` when it is singular.
pub fn bound_covariance<T: Real>(e: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = e.nrows();
    let diag = e.diagonal();
    if diag.iter().any(|&d| !(d > T::zero())) {
        return None;
    }
    let scale = diag.map(|d| T::one() / d.sqrt());
    let eq = DMatrix::from_fn(n, n, |r, c| e[(r, c)] * scale[r] * scale[c]);
    let eq = (&eq + eq.transpose()) * lit::<T>(0.5);
    if !(equilibrated_condition(&eq) <= condition_limit::<T>()) {
        return None;
    }
    let inv = eq.cholesky()?.inverse();
    Some(DMatrix::from_fn(n, n, |r, c| {
        inv[(r, c)] * scale[r] * scale[c]
    }))
}

fn root_trace<T: Real>(e: &Efim<T>, idx: &[usize]) -> Result<T> {
    let n = e.dim();
    if idx.iter().any(|&i| i >= n) {
        return Err(Error::DimensionMismatch(format!("EFIM is {n}x{n}")));
    }
    Ok(match bound_covariance(&e.values) {
        Some(cov) => idx.iter().fold(T::zero(), |a, &i| a + cov[(i, i)]).sqrt(),
        None => lit(f64::INFINITY),
    })
}

/// Position error bound, m; `inf` for a singular EFIM.
pub fn peb<T: Real>(e: &Efim<T>) -> Result<T> {
    root_trace(e, &[0, 1])
}

/// Orientation error bound, rad.
pub fn oeb<T: Real>(e: &Efim<T>) -> Result<T> {
    root_trace(e, &[2])
}

/// Velocity error bound, m/s.
pub fn veb<T: Real>(e: &Efim<T>) -> Result<T> {
    root_trace(e, &[3, 4])
}
