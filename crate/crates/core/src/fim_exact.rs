//! Exact Fisher information of the channel parameters.
//!
//! Parameter order: `tau_s`, then per path `dtau_l` (paths >= 1 only),
//! `theta_t_l`, `theta_r_l`, `v_l` (dynamic only), `h_re_l`, `h_im_l`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ChannelGeometry, PathGains};
use crate::scalar::{cis, light, lit, to_f64, Real};
use crate::waveform::{
    dirichlet_q, dirichlet_q_derivative, steering_derivative, steering_vector, BeamConfig,
    ReferenceSignal, WaveformConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Static,
    Dynamic,
}

/// One entry of the channel parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelParam {
    ClockOffset,
    ExcessDelay(usize),
    DepartureAngle(usize),
    ArrivalAngle(usize),
    Speed(usize),
    GainRe(usize),
    GainIm(usize),
}

impl ChannelParam {
    pub fn path(self) -> Option<usize> {
        match self {
            ChannelParam::ClockOffset => None,
            ChannelParam::ExcessDelay(l)
            | ChannelParam::DepartureAngle(l)
            | ChannelParam::ArrivalAngle(l)
            | ChannelParam::Speed(l)
            | ChannelParam::GainRe(l)
            | ChannelParam::GainIm(l) => Some(l),
        }
    }
}

impl fmt::Display for ChannelParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelParam::ClockOffset => write!(f, "tau_s"),
            ChannelParam::ExcessDelay(l) => write!(f, "dtau_{l}"),
            ChannelParam::DepartureAngle(l) => write!(f, "theta_t_{l}"),
            ChannelParam::ArrivalAngle(l) => write!(f, "theta_r_{l}"),
            ChannelParam::Speed(l) => write!(f, "v_{l}"),
            ChannelParam::GainRe(l) => write!(f, "h_re_{l}"),
            ChannelParam::GainIm(l) => write!(f, "h_im_{l}"),
        }
    }
}

impl FromStr for ChannelParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "tau_s" {
            return Ok(ChannelParam::ClockOffset);
        }
        let unknown = || Error::UnknownParameter(s.to_string());
        let (head, idx) = s.rsplit_once('_').ok_or_else(unknown)?;
        let l: usize = idx.parse().map_err(|_| unknown())?;
        Ok(match head {
            "dtau" => ChannelParam::ExcessDelay(l),
            "theta_t" => ChannelParam::DepartureAngle(l),
            "theta_r" => ChannelParam::ArrivalAngle(l),
            "v" => ChannelParam::Speed(l),
            "h_re" => ChannelParam::GainRe(l),
            "h_im" => ChannelParam::GainIm(l),
            _ => return Err(unknown()),
        })
    }
}

/// Channel parameter labels for `n_paths` paths.
pub fn channel_labels(n_paths: usize, mode: Mode) -> Vec<ChannelParam> {
    let mut out = vec![ChannelParam::ClockOffset];
    for l in 0..n_paths {
        if l > 0 {
            out.push(ChannelParam::ExcessDelay(l));
        }
        out.push(ChannelParam::DepartureAngle(l));
        out.push(ChannelParam::ArrivalAngle(l));
        if mode == Mode::Dynamic {
            out.push(ChannelParam::Speed(l));
        }
        out.push(ChannelParam::GainRe(l));
        out.push(ChannelParam::GainIm(l));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams<T: Real> {
    pub excess_delay: T,
    pub theta_tx_rel: T,
    pub theta_rx_rel: T,
    pub speed: T,
    pub gain: Complex<T>,
}

/// Channel parameter vector in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams<T: Real> {
    pub clock_offset: T,
    pub paths: Vec<PathParams<T>>,
}

impl<T: Real> ChannelParams<T> {
    pub fn from_geometry(
        geom: &ChannelGeometry<T>,
        gains: &PathGains<T>,
        clock_offset: T,
    ) -> Result<Self> {
        if gains.gains.len() != geom.num_paths() {
            return Err(Error::DimensionMismatch(format!(
                "{} gains for {} paths",
                gains.gains.len(),
                geom.num_paths()
            )));
        }
        let paths = geom
            .paths
            .iter()
            .zip(&gains.gains)
            .map(|(p, &h)| PathParams {
                excess_delay: p.excess_delay,
                theta_tx_rel: p.theta_tx_rel,
                theta_rx_rel: p.theta_rx_rel,
                speed: p.radial_speed,
                gain: h,
            })
            .collect();
        Ok(Self {
            clock_offset,
            paths,
        })
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    fn check(&self, which: ChannelParam) -> Result<()> {
        match which.path() {
            Some(l) if l >= self.paths.len() => Err(Error::UnknownParameter(which.to_string())),
            _ if which == ChannelParam::ExcessDelay(0) => {
                Err(Error::UnknownParameter(which.to_string()))
            }
            _ => Ok(()),
        }
    }

    pub fn get(&self, which: ChannelParam) -> Result<T> {
        self.check(which)?;
        Ok(match which {
            ChannelParam::ClockOffset => self.clock_offset,
            ChannelParam::ExcessDelay(l) => self.paths[l].excess_delay,
            ChannelParam::DepartureAngle(l) => self.paths[l].theta_tx_rel,
            ChannelParam::ArrivalAngle(l) => self.paths[l].theta_rx_rel,
            ChannelParam::Speed(l) => self.paths[l].speed,
            ChannelParam::GainRe(l) => self.paths[l].gain.re,
            ChannelParam::GainIm(l) => self.paths[l].gain.im,
        })
    }

    pub fn set(&mut self, which: ChannelParam, value: T) -> Result<()> {
        self.check(which)?;
        match which {
            ChannelParam::ClockOffset => self.clock_offset = value,
            ChannelParam::ExcessDelay(l) => self.paths[l].excess_delay = value,
            ChannelParam::DepartureAngle(l) => self.paths[l].theta_tx_rel = value,
            ChannelParam::ArrivalAngle(l) => self.paths[l].theta_rx_rel = value,
            ChannelParam::Speed(l) => self.paths[l].speed = value,
            ChannelParam::GainRe(l) => self.paths[l].gain.re = value,
            ChannelParam::GainIm(l) => self.paths[l].gain.im = value,
        }
        Ok(())
    }

    pub fn labels(&self, mode: Mode) -> Vec<ChannelParam> {
        channel_labels(self.paths.len(), mode)
    }

    pub fn to_vector(&self, mode: Mode) -> Vec<T> {
        self.labels(mode)
            .into_iter()
            .map(|p| self.get(p).expect("own label"))
            .collect()
    }
}

/// Real symmetric information matrix with parameter labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix<T: Real> {
    pub labels: Vec<String>,
    pub values: DMatrix<T>,
}

impl<T: Real> FisherMatrix<T> {
    pub fn new(labels: Vec<String>, values: DMatrix<T>) -> Result<Self> {
        if !values.is_square() || values.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {}x{} matrix",
                labels.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self { labels, values })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownParameter(label.to_string()))
    }

    pub fn get(&self, row: &str, col: &str) -> Result<T> {
        Ok(self.values[(self.index_of(row)?, self.index_of(col)?)])
    }

    /// Max asymmetry relative to the largest entry.
    pub fn asymmetry(&self) -> T {
        let scale = self.values.amax();
        if scale == T::zero() {
            return T::zero();
        }
        (&self.values - self.values.transpose()).amax() / scale
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.asymmetry() <= tol
    }

    /// Eigenvalues not below `-tol * trace`.
    pub fn is_psd(&self, tol: T) -> bool {
        let sym = (&self.values + self.values.transpose()) * lit::<T>(0.5);
        let trace = sym.trace();
        let eig = sym.symmetric_eigenvalues();
        eig.iter().all(|&e| e >= -tol * trace.abs())
    }

    /// Keeps the listed rows and columns.
    pub fn select(&self, indices: &[usize]) -> Self {
        let n = indices.len();
        Self {
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            values: DMatrix::from_fn(n, n, |r, c| self.values[(indices[r], indices[c])]),
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            labels: self.labels.clone(),
            values: &self.values * factor,
        }
    }
}

/// Arrays, beams and waveform of one link.
#[derive(Debug, Clone, Copy)]
pub struct Link<'a, T: Real> {
    pub cfg: &'a WaveformConfig<T>,
    pub beams: &'a BeamConfig<T>,
    pub tx_array: &'a ArrayGeometry<T>,
    pub rx_array: &'a ArrayGeometry<T>,
}

impl<'a, T: Real> Link<'a, T> {
    pub fn new(
        cfg: &'a WaveformConfig<T>,
        beams: &'a BeamConfig<T>,
        tx_array: &'a ArrayGeometry<T>,
        rx_array: &'a ArrayGeometry<T>,
    ) -> Result<Self> {
        if beams.n_tx() != tx_array.len() || beams.n_rx() != rx_array.len() {
            return Err(Error::DimensionMismatch(format!(
                "beams are {}x{} but arrays have {} and {} elements",
                beams.n_tx(),
                beams.n_rx(),
                tx_array.len(),
                rx_array.len()
            )));
        }
        Ok(Self {
            cfg,
            beams,
            tx_array,
            rx_array,
        })
    }
}

// Which steering factor a derivative uses on each side.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Factor {
    Plain,
    Deriv,
}

fn factors(p: ChannelParam) -> (Factor, Factor) {
    match p {
        ChannelParam::DepartureAngle(_) => (Factor::Plain, Factor::Deriv),
        ChannelParam::ArrivalAngle(_) => (Factor::Deriv, Factor::Plain),
        _ => (Factor::Plain, Factor::Plain),
    }
}

/// Per-subcarrier steering tables shared by the mean, the derivatives and
/// the FIM.
struct Expansion<'a, T: Real> {
    link: Link<'a, T>,
    params: &'a ChannelParams<T>,
    mode: Mode,
    omegas: Vec<T>,
    // [q][l]: combined Rx steering (plain, derivative) and Tx steering
    rx: Vec<Vec<[DVector<Complex<T>>; 2]>>,
    tx: Vec<Vec<[DVector<Complex<T>>; 2]>>,
}

impl<'a, T: Real> Expansion<'a, T> {
    fn new(
        link: Link<'a, T>,
        params: &'a ChannelParams<T>,
        mode: Mode,
        combiner: Option<&DMatrix<Complex<T>>>,
    ) -> Self {
        let cfg = link.cfg;
        let wc = cfg.carrier_omega();
        let omegas = cfg.omegas();
        let mut rx = Vec::with_capacity(omegas.len());
        let mut tx = Vec::with_capacity(omegas.len());
        for &wq in &omegas {
            let w = wc + wq;
            let mut rq = Vec::with_capacity(params.paths.len());
            let mut tq = Vec::with_capacity(params.paths.len());
            for path in &params.paths {
                let ar = steering_vector(link.rx_array, path.theta_rx_rel, w);
                let dr = steering_derivative(link.rx_array, path.theta_rx_rel, w);
                let (ar, dr) = match combiner {
                    Some(c) => (c * ar, c * dr),
                    None => (ar, dr),
                };
                rq.push([ar, dr]);
                tq.push([
                    steering_vector(link.tx_array, path.theta_tx_rel, w),
                    steering_derivative(link.tx_array, path.theta_tx_rel, w),
                ]);
            }
            rx.push(rq);
            tx.push(tq);
        }
        Self {
            link,
            params,
            mode,
            omegas,
            rx,
            tx,
        }
    }

    /// Subcarrier indices q contributing to output subcarrier p.
    fn sources(&self, p: usize) -> std::ops::Range<usize> {
        match self.mode {
            Mode::Static => p..p + 1,
            Mode::Dynamic => 0..self.omegas.len(),
        }
    }

    /// Coefficient of `r t^T x_b[q]` for every label on path `l`, plus the
    /// mean's coefficient. Labels not touching path `l` get zero.
    fn coefficients(
        &self,
        labels: &[ChannelParam],
        b: usize,
        p: usize,
        q: usize,
        l: usize,
    ) -> (Vec<Complex<T>>, Complex<T>) {
        let cfg = self.link.cfg;
        let path = &self.params.paths[l];
        let c = light::<T>();
        let ts = cfg.sample_period();
        let wq = self.omegas[q];
        let kq = (cfg.carrier_omega() + wq) / c;
        let (speed, kernel, kernel_d, block_shift) = match self.mode {
            Mode::Static => (
                T::zero(),
                Complex::new(T::one(), T::zero()),
                Complex::new(T::zero(), T::zero()),
                T::zero(),
            ),
            Mode::Dynamic => {
                let x = (self.omegas[p] - wq - kq * path.speed) * ts / lit(2.0);
                let bm: T = lit((b * cfg.block_len()) as f64);
                (
                    path.speed,
                    dirichlet_q(x, cfg.n_fft),
                    dirichlet_q_derivative(x, cfg.n_fft),
                    bm * ts,
                )
            }
        };
        let phase = wq * (path.excess_delay + self.params.clock_offset) - kq * speed * block_shift;
        let e = cis(-phase) * cfg.subcarrier_gain[q];
        let unit_base = e * kernel;
        let base = unit_base * path.gain;
        let j = Complex::new(T::zero(), T::one());
        let coeffs = labels
            .iter()
            .map(|&lab| match lab {
                ChannelParam::ClockOffset => -j * base * wq,
                ChannelParam::ExcessDelay(m) if m == l => -j * base * wq,
                ChannelParam::DepartureAngle(m) | ChannelParam::ArrivalAngle(m) if m == l => base,
                ChannelParam::Speed(m) if m == l => {
                    let dq = kernel_d * (-kq * ts / lit(2.0));
                    let shift = kernel * j * (kq * block_shift);
                    e * path.gain * (dq + shift)
                }
                ChannelParam::GainRe(m) if m == l => unit_base,
                ChannelParam::GainIm(m) if m == l => j * unit_base,
                _ => Complex::new(T::zero(), T::zero()),
            })
            .collect();
        (coeffs, base)
    }

    /// Mean and derivative vectors at `(b, p)` for the realized signal.
    fn evaluate(
        &self,
        labels: &[ChannelParam],
        signal: &ReferenceSignal<T>,
        b: usize,
        p: usize,
    ) -> (DVector<Complex<T>>, Vec<DVector<Complex<T>>>) {
        let m_r = self.rx[0][0][0].len();
        let zero = DVector::from_element(m_r, Complex::new(T::zero(), T::zero()));
        let mut mean = zero.clone();
        let mut derivs = vec![zero; labels.len()];
        let kinds: Vec<_> = labels.iter().map(|&lab| factors(lab)).collect();
        for q in self.sources(p) {
            let x = &signal.blocks[b][q];
            for l in 0..self.params.paths.len() {
                let (coeffs, base) = self.coefficients(labels, b, p, q, l);
                let t_plain = self.tx[q][l][0].transpose() * x;
                let t_deriv = self.tx[q][l][1].transpose() * x;
                let (t_plain, t_deriv) = (t_plain[(0, 0)], t_deriv[(0, 0)]);
                mean.axpy(
                    base * t_plain,
                    &self.rx[q][l][0],
                    Complex::new(T::one(), T::zero()),
                );
                for (i, &cf) in coeffs.iter().enumerate() {
                    if cf == Complex::new(T::zero(), T::zero()) {
                        continue;
                    }
                    let (kr, kt) = kinds[i];
                    let ts = if kt == Factor::Deriv {
                        t_deriv
                    } else {
                        t_plain
                    };
                    let r = &self.rx[q][l][if kr == Factor::Deriv { 1 } else { 0 }];
                    derivs[i].axpy(cf * ts, r, Complex::new(T::one(), T::zero()));
                }
            }
        }
        (mean, derivs)
    }
}

fn check_signal<T: Real>(link: &Link<'_, T>, signal: &ReferenceSignal<T>) -> Result<()> {
    let k = link.cfg.subcarriers.len();
    for blk in &signal.blocks {
        if blk.len() != k || blk.iter().any(|x| x.len() != link.beams.n_tx()) {
            return Err(Error::DimensionMismatch(
                "reference signal does not match the link".into(),
            ));
        }
    }
    if signal.blocks.is_empty() {
        return Err(Error::DimensionMismatch(
            "reference signal has no blocks".into(),
        ));
    }
    Ok(())
}

fn check_mode<T: Real>(
    params: &ChannelParams<T>,
    which: &[ChannelParam],
    mode: Mode,
) -> Result<()> {
    for &w in which {
        params.check(w)?;
        if mode == Mode::Static && matches!(w, ChannelParam::Speed(_)) {
            return Err(Error::UnknownParameter(w.to_string()));
        }
    }
    Ok(())
}

/// Per-(block, subcarrier) complex vectors.
pub type BlockSeries<T> = Vec<Vec<DVector<Complex<T>>>>;

/// Noiseless observation after the combiner, indexed `[block][subcarrier]`.
pub fn model_mean<T: Real>(
    link: Link<'_, T>,
    params: &ChannelParams<T>,
    signal: &ReferenceSignal<T>,
    mode: Mode,
) -> Result<BlockSeries<T>> {
    check_signal(&link, signal)?;
    let exp = Expansion::new(link, params, mode, Some(&link.beams.combiner));
    let k = link.cfg.subcarriers.len();
    Ok((0..signal.n_blocks())
        .map(|b| (0..k).map(|p| exp.evaluate(&[], signal, b, p).0).collect())
        .collect())
}

/// Analytic derivative of [`model_mean`] with respect to one parameter.
pub fn mean_derivatives<T: Real>(
    link: Link<'_, T>,
    params: &ChannelParams<T>,
    signal: &ReferenceSignal<T>,
    mode: Mode,
    which: ChannelParam,
) -> Result<BlockSeries<T>> {
    check_signal(&link, signal)?;
    check_mode(params, &[which], mode)?;
    let exp = Expansion::new(link, params, mode, Some(&link.beams.combiner));
    let k = link.cfg.subcarriers.len();
    Ok((0..signal.n_blocks())
        .map(|b| {
            (0..k)
                .map(|p| exp.evaluate(&[which], signal, b, p).1.remove(0))
                .collect()
        })
        .collect())
}

fn label_strings(labels: &[ChannelParam]) -> Vec<String> {
    labels.iter().map(|l| l.to_string()).collect()
}

/// FIM of the channel parameters for a realized reference signal.
pub fn fim_channel<T: Real>(
    link: Link<'_, T>,
    params: &ChannelParams<T>,
    signal: &ReferenceSignal<T>,
    mode: Mode,
) -> Result<FisherMatrix<T>> {
    check_signal(&link, signal)?;
    let w = &link.beams.combiner;
    let gram = w * w.adjoint();
    let chol = gram.cholesky().ok_or(Error::SingularCombiner)?;
    // whitened combiner L^{-1} W
    let whitened = chol
        .l()
        .solve_lower_triangular(w)
        .ok_or(Error::SingularCombiner)?;
    let labels = params.labels(mode);
    let exp = Expansion::new(link, params, mode, Some(&whitened));
    let n = labels.len();
    let k = link.cfg.subcarriers.len();
    let mut j = DMatrix::zeros(n, n);
    for b in 0..signal.n_blocks() {
        for p in 0..k {
            let (_, d) = exp.evaluate(&labels, signal, b, p);
            for r in 0..n {
                for c in r..n {
                    let v = d[r].dotc(&d[c]).re;
                    j[(r, c)] += v;
                }
            }
        }
    }
    finish(j, link.cfg.noise_var, &labels)
}

fn finish<T: Real>(
    mut j: DMatrix<T>,
    noise_var: T,
    labels: &[ChannelParam],
) -> Result<FisherMatrix<T>> {
    let n = j.nrows();
    for r in 0..n {
        for c in r + 1..n {
            j[(c, r)] = j[(r, c)];
        }
    }
    FisherMatrix::new(label_strings(labels), j / noise_var)
}

/// Expected FIM over i.i.d. reference signals, identity beams only.
pub fn fim_channel_expected<T: Real>(
    link: Link<'_, T>,
    params: &ChannelParams<T>,
    mode: Mode,
) -> Result<FisherMatrix<T>> {
    if !link.beams.is_identity() {
        return Err(Error::Unsupported(
            "expected FIM needs identity precoder and combiner".into(),
        ));
    }
    let cfg = link.cfg;
    let labels = params.labels(mode);
    let exp = Expansion::new(link, params, mode, None);
    let n = labels.len();
    let n_paths = params.paths.len();
    let k = cfg.subcarriers.len();
    let n_t: T = lit(link.tx_array.len() as f64);
    let kinds: Vec<_> = labels.iter().map(|&lab| factors(lab)).collect();
    let slot = |l: usize, f: Factor| 2 * l + usize::from(f == Factor::Deriv);

    // Gram tables per source subcarrier
    type Gram<T> = DMatrix<Complex<T>>;
    let grams: Vec<(Gram<T>, Gram<T>)> = (0..k)
        .map(|q| {
            let mut gr = DMatrix::zeros(2 * n_paths, 2 * n_paths);
            let mut gt = DMatrix::zeros(2 * n_paths, 2 * n_paths);
            for a in 0..2 * n_paths {
                for bb in 0..2 * n_paths {
                    gr[(a, bb)] = exp.rx[q][a / 2][a % 2].dotc(&exp.rx[q][bb / 2][bb % 2]);
                    gt[(a, bb)] = exp.tx[q][a / 2][a % 2].dotc(&exp.tx[q][bb / 2][bb % 2]);
                }
            }
            (gr, gt)
        })
        .collect();

    let blocks = match mode {
        Mode::Static => 1,
        Mode::Dynamic => cfg.n_blocks,
    };
    let block_weight: T = match mode {
        Mode::Static => lit(cfg.n_blocks as f64),
        Mode::Dynamic => T::one(),
    };
    let mut j = DMatrix::zeros(n, n);
    for b in 0..blocks {
        for p in 0..k {
            for q in exp.sources(p) {
                let power = cfg.weights[q] * cfg.tx_power / n_t * block_weight;
                let coeffs: Vec<Vec<Complex<T>>> = (0..n_paths)
                    .map(|l| exp.coefficients(&labels, b, p, q, l).0)
                    .collect();
                let (gr, gt) = &grams[q];
                for r in 0..n {
                    for c in r..n {
                        let mut acc = Complex::new(T::zero(), T::zero());
                        for l in 0..n_paths {
                            let cr = coeffs[l][r];
                            if cr == Complex::new(T::zero(), T::zero()) {
                                continue;
                            }
                            for (m, cm) in coeffs.iter().enumerate() {
                                let cc = cm[c];
                                if cc == Complex::new(T::zero(), T::zero()) {
                                    continue;
                                }
                                let ir = slot(l, kinds[r].0);
                                let ic = slot(m, kinds[c].0);
                                let it = slot(l, kinds[r].1);
                                let jt = slot(m, kinds[c].1);
                                acc += cr.conj() * cc * gr[(ir, ic)] * gt[(it, jt)];
                            }
                        }
                        j[(r, c)] += acc.re * power;
                    }
                }
            }
        }
    }
    finish(j, cfg.noise_var, &labels)
}

/// Relative Frobenius distance `||a - b|| / ||b||`.
pub fn relative_frobenius<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    to_f64((a - b).norm()) / to_f64(b.norm())
}
