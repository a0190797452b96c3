//! Antenna arrays and the placement-to-path map.
//!
//! Global angles (`theta_*`) are measured in the world frame; the `*_rel`
//! variants subtract the array orientation. Everything is wrapped to
//! `[-pi, pi)`.

use nalgebra::{Complex, Vector2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{cis, light, lit, unit, unit_perp, wrap_angle, Real};

/// Planar antenna array described by polar element offsets about its centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<T> {
    /// `(d_j, psi_j)` of each element in the array's local frame.
    pub elements: Vec<(T, T)>,
    /// Rotation of the local frame, radians.
    pub orientation: T,
}

impl<T: Real> ArrayGeometry<T> {
    /// Builds an array from local-frame element positions. The positions are
    /// re-centered so the reference point is their centroid.
    pub fn from_offsets(offsets: &[Vector2<T>], orientation: T) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidArgument(
                "array needs at least one element".into(),
            ));
        }
        let n: T = lit(offsets.len() as f64);
        let centroid = offsets.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
        let elements = offsets
            .iter()
            .map(|p| {
                let q = p - centroid;
                let d = q.norm();
                let psi = if d > T::zero() {
                    wrap_angle(q.y.atan2(q.x))
                } else {
                    T::zero()
                };
                (d, psi)
            })
            .collect();
        Ok(Self {
            elements,
            orientation: wrap_angle(orientation),
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Local-frame offset of element `j`.
    pub fn offset(&self, j: usize) -> Vector2<T> {
        let (d, psi) = self.elements[j];
        unit(psi) * d
    }

    /// Norm of the mean element offset; zero up to rounding.
    pub fn centroid_residual(&self) -> T {
        let sum = (0..self.len()).fold(Vector2::zeros(), |acc, j| acc + self.offset(j));
        sum.norm()
    }

    /// Largest distance between two elements.
    pub fn max_dimension(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.max((self.offset(i) - self.offset(j)).norm());
            }
        }
        best
    }

    /// `2 D^2 / lambda`.
    pub fn fraunhofer_distance(&self, wavelength: T) -> T {
        let d = self.max_dimension();
        lit::<T>(2.0) * d * d / wavelength
    }

    pub fn with_orientation(&self, orientation: T) -> Self {
        Self {
            elements: self.elements.clone(),
            orientation: wrap_angle(orientation),
        }
    }
}

/// Uniform linear array along the local x axis.
pub fn build_ula<T: Real>(n: usize, spacing: T, orientation: T) -> Result<ArrayGeometry<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("ULA needs n >= 1".into()));
    }
    if !(spacing > T::zero()) {
        return Err(Error::InvalidArgument(
            "ULA spacing must be positive".into(),
        ));
    }
    let offsets: Vec<_> = (0..n)
        .map(|k| Vector2::new(spacing * lit(k as f64 - (n as f64 - 1.0) / 2.0), T::zero()))
        .collect();
    ArrayGeometry::from_offsets(&offsets, orientation)
}

/// Uniform circular array whose neighbouring elements are `spacing` apart.
pub fn build_uca<T: Real>(n: usize, spacing: T, orientation: T) -> Result<ArrayGeometry<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("UCA needs n >= 2".into()));
    }
    if !(spacing > T::zero()) {
        return Err(Error::InvalidArgument(
            "UCA spacing must be positive".into(),
        ));
    }
    let radius = spacing / (lit::<T>(2.0) * (T::pi() / lit(n as f64)).sin());
    let elements = (0..n)
        .map(|j| {
            (
                radius,
                wrap_angle(T::two_pi() * lit(j as f64) / lit(n as f64)),
            )
        })
        .collect();
    Ok(ArrayGeometry {
        elements,
        orientation: wrap_angle(orientation),
    })
}

/// Which end of the link carries the velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

impl Side {
    pub fn other(self) -> Self {
        match self {
            Side::Tx => Side::Rx,
            Side::Rx => Side::Tx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion<T> {
    pub velocity: Vector2<T>,
    pub side: Side,
}

/// Positions of the two link ends, the scatterers and the optional motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement<T> {
    pub tx: Vector2<T>,
    pub rx: Vector2<T>,
    pub scatterers: Vec<Vector2<T>>,
    pub motion: Option<Motion<T>>,
}

// points closer than this are treated as coincident
const COINCIDENT_M: f64 = 1e-9;

impl<T: Real> Placement<T> {
    pub fn new(tx: Vector2<T>, rx: Vector2<T>, scatterers: Vec<Vector2<T>>) -> Self {
        Self {
            tx,
            rx,
            scatterers,
            motion: None,
        }
    }

    pub fn with_motion(mut self, velocity: Vector2<T>, side: Side) -> Self {
        self.motion = Some(Motion { velocity, side });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let tol: T = lit(COINCIDENT_M);
        if (self.tx - self.rx).norm() <= tol {
            return Err(Error::DegenerateGeometry("Tx and Rx coincide".into()));
        }
        for (i, s) in self.scatterers.iter().enumerate() {
            if (s - self.tx).norm() <= tol || (s - self.rx).norm() <= tol {
                return Err(Error::DegenerateGeometry(format!(
                    "scatterer {} coincides with a link end",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Geometric channel parameters of one path. Path 0 is the LOS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry<T> {
    /// Absolute delay, s.
    pub delay: T,
    /// Delay in excess of the LOS delay, s.
    pub excess_delay: T,
    /// Global departure angle at the Tx.
    pub theta_tx: T,
    /// Global arrival angle at the Rx (pointing from the Rx towards the source).
    pub theta_rx: T,
    pub theta_tx_rel: T,
    pub theta_rx_rel: T,
    /// Length of the path segment touching the Tx (d_TR for the LOS).
    pub dist_tx: T,
    /// Length of the path segment touching the Rx (d_TR for the LOS).
    pub dist_rx: T,
    /// Velocity component along the moving side's path angle.
    pub radial_speed: T,
    /// Velocity component along the perpendicular `unit_perp`.
    pub transverse_speed: T,
    /// `theta_rx - theta_tx`, wrapped.
    pub angle_diff: T,
    /// Forward scatter lying on the Tx-Rx segment (zero excess delay).
    pub collinear: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGeometry<T> {
    pub paths: Vec<PathGeometry<T>>,
    pub dist_tr: T,
    pub orientation_tx: T,
    pub orientation_rx: T,
    pub motion: Option<Motion<T>>,
}

impl<T: Real> ChannelGeometry<T> {
    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn los(&self) -> &PathGeometry<T> {
        &self.paths[0]
    }

    /// Same channel seen with the roles of Tx and Rx exchanged.
    pub fn swap_ends(&self) -> Self {
        let paths = self
            .paths
            .iter()
            .map(|p| PathGeometry {
                theta_tx: p.theta_rx,
                theta_rx: p.theta_tx,
                theta_tx_rel: p.theta_rx_rel,
                theta_rx_rel: p.theta_tx_rel,
                dist_tx: p.dist_rx,
                dist_rx: p.dist_tx,
                angle_diff: wrap_angle(-p.angle_diff),
                ..*p
            })
            .collect();
        Self {
            paths,
            dist_tr: self.dist_tr,
            orientation_tx: self.orientation_rx,
            orientation_rx: self.orientation_tx,
            motion: self.motion.map(|m| Motion {
                side: m.side.other(),
                ..m
            }),
        }
    }
}

fn angle_of<T: Real>(v: Vector2<T>) -> T {
    wrap_angle(v.y.atan2(v.x))
}

/// Derives delays, angles, distances and speeds for the LOS and every
/// single-bounce path.
pub fn channel_geometry<T: Real>(
    placement: &Placement<T>,
    arrays: (&ArrayGeometry<T>, &ArrayGeometry<T>),
) -> Result<ChannelGeometry<T>> {
    placement.validate()?;
    let (tx_array, rx_array) = arrays;
    let c = light::<T>();
    let alpha_t = tx_array.orientation;
    let alpha_r = rx_array.orientation;
    let d_tr = (placement.rx - placement.tx).norm();
    let tau0 = d_tr / c;

    let speeds = |theta_tx: T, theta_rx: T| match placement.motion {
        None => (T::zero(), T::zero()),
        Some(m) => {
            let theta = match m.side {
                Side::Tx => theta_tx,
                Side::Rx => theta_rx,
            };
            (
                m.velocity.dot(&unit(theta)),
                m.velocity.dot(&unit_perp(theta)),
            )
        }
    };

    let theta_t0 = angle_of(placement.rx - placement.tx);
    let theta_r0 = wrap_angle(theta_t0 + T::pi());
    let (v0, rho0) = speeds(theta_t0, theta_r0);
    let mut paths = vec![PathGeometry {
        delay: tau0,
        excess_delay: T::zero(),
        theta_tx: theta_t0,
        theta_rx: theta_r0,
        theta_tx_rel: wrap_angle(theta_t0 - alpha_t),
        theta_rx_rel: wrap_angle(theta_r0 - alpha_r),
        dist_tx: d_tr,
        dist_rx: d_tr,
        radial_speed: v0,
        transverse_speed: rho0,
        angle_diff: wrap_angle(theta_r0 - theta_t0),
        collinear: false,
    }];
    for s in &placement.scatterers {
        let d_ts = (s - placement.tx).norm();
        let d_rs = (s - placement.rx).norm();
        let theta_t = angle_of(s - placement.tx);
        let theta_r = angle_of(s - placement.rx);
        let excess = ((d_ts + d_rs - d_tr) / c).max(T::zero());
        let (v, rho) = speeds(theta_t, theta_r);
        paths.push(PathGeometry {
            delay: (d_ts + d_rs) / c,
            excess_delay: excess,
            theta_tx: theta_t,
            theta_rx: theta_r,
            theta_tx_rel: wrap_angle(theta_t - alpha_t),
            theta_rx_rel: wrap_angle(theta_r - alpha_r),
            dist_tx: d_ts,
            dist_rx: d_rs,
            radial_speed: v,
            transverse_speed: rho,
            angle_diff: wrap_angle(theta_r - theta_t),
            collinear: excess <= lit::<T>(1e-12) * tau0,
        });
    }
    Ok(ChannelGeometry {
        paths,
        dist_tr: d_tr,
        orientation_tx: alpha_t,
        orientation_rx: alpha_r,
        motion: placement.motion,
    })
}

/// Complex path coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGains<T> {
    pub gains: Vec<Complex<T>>,
    pub reflection: T,
}

impl<T: Real> PathGains<T> {
    pub fn magnitudes(&self) -> Vec<T> {
        self.gains.iter().map(|h| h.norm_sqr().sqrt()).collect()
    }
}

/// Free-space magnitude of every path.
pub fn gain_magnitudes<T: Real>(geom: &ChannelGeometry<T>, reflection: T, wavelength: T) -> Vec<T> {
    let four_pi = lit::<T>(4.0) * T::pi();
    geom.paths
        .iter()
        .enumerate()
        .map(|(l, p)| {
            if l == 0 {
                wavelength / (four_pi * geom.dist_tr)
            } else {
                reflection * wavelength / (four_pi * (p.dist_tx + p.dist_rx))
            }
        })
        .collect()
}

/// Free-space magnitudes with i.i.d. uniform phases drawn from `rng`.
pub fn path_gains<T: Real, R: Rng + ?Sized>(
    geom: &ChannelGeometry<T>,
    reflection: T,
    wavelength: T,
    rng: &mut R,
) -> Result<PathGains<T>> {
    if !(reflection > T::zero() && reflection <= T::one()) {
        return Err(Error::InvalidArgument(
            "reflection coefficient must lie in (0, 1]".into(),
        ));
    }
    let gains = gain_magnitudes(geom, reflection, wavelength)
        .into_iter()
        .map(|m| {
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            cis(lit::<T>(phase)) * m
        })
        .collect();
    Ok(PathGains { gains, reflection })
}
