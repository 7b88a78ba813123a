//! Entanglement-confirming measurement: polarization-path state algebra,
//! two-emitter interference on a screen, aperture counting statistics and a
//! binomial test for the presence of entanglement.
//!
//! Emitter 1 sits at `x = -a/2` and emitter 2 at `x = +a/2`, a distance `L`
//! from the screen. Detector apertures of width `d` are centred in line
//! with the emitters. Each emitter field is a Gaussian beam of waist `w0`
//! propagated to the screen, with the exact emitter-to-point path length in
//! the phase.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

use crate::decoherence::{trial_rng, uniform};
use crate::quad::{QuadError, Quadrature};

/// Absolute tolerance for detector integrals (probability units).
const DETECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpticsError {
    #[error("{photon} photon is already routed")]
    AlreadyRouted { photon: Photon },
    #[error("state has no path components")]
    NotRouted,
    #[error("invalid geometry: {field} {reason}")]
    Geometry { field: &'static str, reason: String },
    #[error("invalid mixture: {0}")]
    Mixture(String),
    #[error("alpha {0} outside (0, 1)")]
    Alpha(f64),
    #[error("n_photons must be positive")]
    NoPhotons,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    V,
    H,
}

impl Polarization {
    pub const ALL: [Polarization; 2] = [Polarization::V, Polarization::H];

    fn index(self) -> usize {
        self as usize
    }

    pub fn flip(self) -> Self {
        match self {
            Polarization::V => Polarization::H,
            Polarization::H => Polarization::V,
        }
    }
}

/// The photon travelling the long (`L`) or short (`S`) fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Photon {
    L,
    S,
}

impl fmt::Display for Photon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Photon::L => f.write_str("L"),
            Photon::S => f.write_str("S"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    None,
    One,
    Two,
}

impl Path {
    pub const ALL: [Path; 3] = [Path::None, Path::One, Path::Two];

    fn index(self) -> usize {
        self as usize
    }
}

/// Pure state over `|pol>_L |pol>_S |path>`, with `path` belonging to the routed photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    amp: [[[Complex64; 3]; 2]; 2],
    routed: Option<Photon>,
}

impl TwoPhotonState {
    pub fn zero(routed: Option<Photon>) -> Self {
        TwoPhotonState {
            amp: [[[Complex64::new(0.0, 0.0); 3]; 2]; 2],
            routed,
        }
    }

    /// A single basis vector with unit amplitude.
    pub fn basis(pol_l: Polarization, pol_s: Polarization, path: Path, routed: Option<Photon>) -> Self {
        let mut s = Self::zero(routed);
        s.set(pol_l, pol_s, path, Complex64::new(1.0, 0.0));
        s
    }

    pub fn amplitude(&self, pol_l: Polarization, pol_s: Polarization, path: Path) -> Complex64 {
        self.amp[pol_l.index()][pol_s.index()][path.index()]
    }

    pub fn set(&mut self, pol_l: Polarization, pol_s: Polarization, path: Path, c: Complex64) {
        self.amp[pol_l.index()][pol_s.index()][path.index()] = c;
    }

    pub fn routed(&self) -> Option<Photon> {
        self.routed
    }

    pub fn terms(&self) -> impl Iterator<Item = (Polarization, Polarization, Path, Complex64)> + '_ {
        Polarization::ALL.into_iter().flat_map(move |l| {
            Polarization::ALL.into_iter().flat_map(move |s| {
                Path::ALL
                    .into_iter()
                    .map(move |p| (l, s, p, self.amplitude(l, s, p)))
            })
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms().map(|t| t.3.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Euclidean distance between amplitude vectors.
    pub fn distance(&self, other: &TwoPhotonState) -> f64 {
        self.terms()
            .zip(other.terms())
            .map(|(a, b)| (a.3 - b.3).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest componentwise amplitude difference.
    pub fn max_abs_diff(&self, other: &TwoPhotonState) -> f64 {
        self.terms()
            .zip(other.terms())
            .map(|(a, b)| (a.3 - b.3).norm())
            .fold(0.0, f64::max)
    }

    /// Probability of the routed photon taking `path`.
    pub fn path_population(&self, path: Path) -> f64 {
        self.terms()
            .filter(|t| t.2 == path)
            .map(|t| t.3.norm_sqr())
            .sum()
    }
}

/// `(|v>_L |h>_S + |h>_L |v>_S) / sqrt(2)`, no photon routed.
pub fn bell_psi_plus() -> TwoPhotonState {
    let mut s = TwoPhotonState::zero(None);
    let c = Complex64::new(FRAC_1_SQRT_2, 0.0);
    s.set(Polarization::V, Polarization::H, Path::None, c);
    s.set(Polarization::H, Polarization::V, Path::None, c);
    s
}

/// Routes the h component of `photon` to path 1 and the v component to path 2.
pub fn birefringent_split(state: &TwoPhotonState, photon: Photon) -> Result<TwoPhotonState, OpticsError> {
    if let Some(p) = state.routed {
        return Err(OpticsError::AlreadyRouted { photon: p });
    }
    let mut out = TwoPhotonState::zero(Some(photon));
    for l in Polarization::ALL {
        for s in Polarization::ALL {
            let pol = match photon {
                Photon::L => l,
                Photon::S => s,
            };
            let path = match pol {
                Polarization::H => Path::One,
                Polarization::V => Path::Two,
            };
            out.set(l, s, path, state.amplitude(l, s, Path::None));
        }
    }
    Ok(out)
}

/// Swaps v and h on the component travelling `path`, leaving the other path untouched.
///
/// Both polarization labels of that component are exchanged.
pub fn half_wave_plate(state: &TwoPhotonState, path: Path) -> Result<TwoPhotonState, OpticsError> {
    if state.routed.is_none() || path == Path::None {
        return Err(OpticsError::NotRouted);
    }
    let mut out = *state;
    for l in Polarization::ALL {
        for s in Polarization::ALL {
            out.set(l.flip(), s.flip(), path, state.amplitude(l, s, path));
        }
    }
    Ok(out)
}

/// A pure state or a classical mixture of pure states.
#[derive(Debug, Clone, PartialEq)]
pub enum OpticalState {
    Pure(TwoPhotonState),
    Mixture(Vec<(f64, TwoPhotonState)>),
}

/// Named states used by the detector model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Entangled,
    UnentangledUnknown,
    UnentangledPath1,
    UnentangledPath2,
}

impl StateKind {
    pub const ALL: [StateKind; 4] = [
        StateKind::Entangled,
        StateKind::UnentangledUnknown,
        StateKind::UnentangledPath1,
        StateKind::UnentangledPath2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StateKind::Entangled => "entangled",
            StateKind::UnentangledUnknown => "unentangled-unknown",
            StateKind::UnentangledPath1 => "unentangled-path1",
            StateKind::UnentangledPath2 => "unentangled-path2",
        }
    }

    pub fn state(self) -> OpticalState {
        match self {
            StateKind::Entangled => OpticalState::entangled(),
            StateKind::UnentangledUnknown => OpticalState::unentangled_unknown(),
            StateKind::UnentangledPath1 => OpticalState::unentangled_known(Path::One),
            StateKind::UnentangledPath2 => OpticalState::unentangled_known(Path::Two),
        }
    }
}

impl OpticalState {
    /// Bell state routed on L, then flipped on path 1.
    pub fn entangled() -> Self {
        let split = birefringent_split(&bell_psi_plus(), Photon::L).expect("unrouted");
        OpticalState::Pure(half_wave_plate(&split, Path::One).expect("routed"))
    }

    /// The photon leaves through `path` only.
    pub fn unentangled_known(path: Path) -> Self {
        OpticalState::Pure(TwoPhotonState::basis(
            Polarization::V,
            Polarization::H,
            path,
            Some(Photon::L),
        ))
    }

    /// Equal-weight mixture of the two single-path states.
    pub fn unentangled_unknown() -> Self {
        let one = TwoPhotonState::basis(Polarization::V, Polarization::H, Path::One, Some(Photon::L));
        let two = TwoPhotonState::basis(Polarization::V, Polarization::H, Path::Two, Some(Photon::L));
        OpticalState::Mixture(vec![(0.5, one), (0.5, two)])
    }

    pub fn mixture(components: Vec<(f64, TwoPhotonState)>) -> Result<Self, OpticsError> {
        if components.iter().any(|c| c.0.is_nan() || c.0 < 0.0) {
            return Err(OpticsError::Mixture("negative weight".into()));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OpticsError::Mixture(format!("weights sum to {total}")));
        }
        Ok(OpticalState::Mixture(components))
    }

    pub fn components(&self) -> Vec<(f64, &TwoPhotonState)> {
        match self {
            OpticalState::Pure(s) => vec![(1.0, s)],
            OpticalState::Mixture(v) => v.iter().map(|(w, s)| (*w, s)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorGeometry {
    /// Wavelength (m).
    pub lambda: f64,
    /// Emitter separation (m).
    pub a: f64,
    /// Emitter-to-screen distance (m).
    pub l: f64,
    /// Aperture width (m).
    pub d: f64,
    /// Auxiliary phase on path 2 (rad).
    pub phi_aux: f64,
    /// Emitter beam waist (m).
    pub w0: f64,
}

pub const DEFAULT_LAMBDA: f64 = 700e-9;
pub const DEFAULT_A: f64 = 1e-3;
pub const DEFAULT_W0: f64 = 5e-6;

impl Default for DetectorGeometry {
    fn default() -> Self {
        DetectorGeometry::destructive(DEFAULT_LAMBDA, DEFAULT_A, DEFAULT_A / 2.0, DEFAULT_W0)
            .expect("default geometry is valid")
    }
}

/// Screen distance placing a destructive node at both detector positions:
/// the solution of `sqrt(L^2 + a^2) - L = lambda / 2`.
pub fn destructive_geometry(lambda: f64, a: f64) -> Result<f64, OpticsError> {
    if lambda.is_nan() || lambda <= 0.0 || !lambda.is_finite() {
        return Err(OpticsError::Geometry {
            field: "lambda",
            reason: format!("must be positive, got {lambda}"),
        });
    }
    if a.is_nan() || a <= lambda / 2.0 || !a.is_finite() {
        return Err(OpticsError::Geometry {
            field: "a",
            reason: format!("must exceed lambda/2 = {}, got {a}", lambda / 2.0),
        });
    }
    Ok(a * a / lambda - lambda / 4.0)
}

/// `sqrt(L^2 + a^2) - L - lambda / 2`, evaluated without cancellation.
pub fn path_difference_residual(lambda: f64, a: f64, l: f64) -> f64 {
    a * a / ((l * l + a * a).sqrt() + l) - lambda / 2.0
}

impl DetectorGeometry {
    pub fn destructive(lambda: f64, a: f64, d: f64, w0: f64) -> Result<Self, OpticsError> {
        let g = DetectorGeometry {
            lambda,
            a,
            l: destructive_geometry(lambda, a)?,
            d,
            phi_aux: 0.0,
            w0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let positive = [("lambda", self.lambda), ("a", self.a), ("l", self.l), ("w0", self.w0)];
        for (field, v) in positive {
            if v.is_nan() || v <= 0.0 || !v.is_finite() {
                return Err(OpticsError::Geometry {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.d.is_nan() || self.d < 0.0 || self.d >= self.a {
            return Err(OpticsError::Geometry {
                field: "d",
                reason: format!("must lie in [0, a), got {}", self.d),
            });
        }
        if !self.phi_aux.is_finite() {
            return Err(OpticsError::Geometry {
                field: "phi_aux",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    /// Regime notes for parameters outside lambda << a << L.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.a < 100.0 * self.lambda {
            out.push(format!("a = {} is not much larger than lambda = {}", self.a, self.lambda));
        }
        if self.l < 100.0 * self.a {
            out.push(format!("l = {} is not much larger than a = {}", self.l, self.a));
        }
        out
    }

    pub fn k(&self) -> f64 {
        2.0 * PI / self.lambda
    }

    /// Detector (and emitter) positions.
    pub fn positions(&self) -> [f64; 2] {
        [-self.a / 2.0, self.a / 2.0]
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.w0 * self.w0 / self.lambda
    }

    /// Beam radius at the screen.
    pub fn beam_width(&self) -> f64 {
        self.w0 * (1.0 + (self.l / self.rayleigh_range()).powi(2)).sqrt()
    }

    /// Fringe spacing near the screen centre.
    pub fn fringe_period(&self) -> f64 {
        self.lambda * self.l / self.a
    }

    /// Unit-flux Gaussian amplitude of emitter `i` (0 or 1) at `x`.
    fn envelope(&self, x: f64, i: usize) -> f64 {
        let w = self.beam_width();
        let u = x - self.positions()[i];
        (2.0 / (PI * w * w)).powf(0.25) * (-(u * u) / (w * w)).exp()
    }

    /// `r2 - r1` at screen point `x`.
    fn path_difference(&self, x: f64) -> f64 {
        let [x1, x2] = self.positions();
        let (u1, u2) = (x - x1, x - x2);
        let r1 = (self.l * self.l + u1 * u1).sqrt();
        let r2 = (self.l * self.l + u2 * u2).sqrt();
        (u2 * u2 - u1 * u1) / (r1 + r2)
    }

    fn screen_extent(&self) -> (f64, f64) {
        let reach = self.a / 2.0 + 10.0 * self.beam_width();
        (-reach, reach)
    }
}

/// Intensity per emitted photon at `x`, before normalisation.
fn intensity_abs(state: &OpticalState, g: &DetectorGeometry, x: f64) -> f64 {
    let a1 = g.envelope(x, 0);
    let a2 = g.envelope(x, 1);
    let phase = Complex64::from_polar(1.0, g.k() * g.path_difference(x) + g.phi_aux);
    let e1 = Complex64::new(a1, 0.0);
    let e2 = phase * a2;
    state
        .components()
        .into_iter()
        .map(|(w, s)| {
            let mut sum = 0.0;
            for l in Polarization::ALL {
                for p in Polarization::ALL {
                    let field = s.amplitude(l, p, Path::One) * e1 + s.amplitude(l, p, Path::Two) * e2;
                    sum += field.norm_sqr();
                }
            }
            w * sum
        })
        .sum()
}

/// Path populations weighted by emitter envelopes, without interference.
fn incoherent_envelope(state: &OpticalState, g: &DetectorGeometry, x: f64) -> f64 {
    let a1 = g.envelope(x, 0);
    let a2 = g.envelope(x, 1);
    state
        .components()
        .into_iter()
        .map(|(w, s)| w * (s.path_population(Path::One) * a1 * a1 + s.path_population(Path::Two) * a2 * a2))
        .sum()
}

/// Peak of the unentangled unknown-path profile.
fn reference_peak(g: &DetectorGeometry) -> f64 {
    let reference = OpticalState::unentangled_unknown();
    let f = |x: f64| intensity_abs(&reference, g, x);
    let x = golden_section_max(f, 0.0, g.a / 2.0 + g.beam_width(), 1e-12 * g.a);
    f(x).max(f(0.0))
}

/// Intensity at `x` relative to the unentangled unknown-path peak.
pub fn intensity_profile(state: &OpticalState, g: &DetectorGeometry, x: f64) -> f64 {
    intensity_abs(state, g, x) / reference_peak(g)
}

/// Relative intensity sampled at every `xs`.
pub fn profile(state: &OpticalState, g: &DetectorGeometry, xs: &[f64]) -> Vec<f64> {
    let peak = reference_peak(g);
    xs.iter().map(|&x| intensity_abs(state, g, x) / peak).collect()
}

/// Argmax of a unimodal function on `[lo, hi]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

fn extreme<F: Fn(f64) -> f64>(f: F, xs: &[f64], maximise: bool) -> f64 {
    let sign = if maximise { 1.0 } else { -1.0 };
    let g = |x: f64| sign * f(x);
    let (i, _) = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, g(x)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let lo = xs[i.saturating_sub(1)];
    let hi = xs[(i + 1).min(xs.len() - 1)];
    let x = golden_section_max(g, lo, hi, (hi - lo) * 1e-10);
    sign * g(x).max(g(xs[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    /// Visibility of intensity divided by the incoherent envelope.
    pub normalized: f64,
    /// Visibility of the raw intensity over the same window.
    pub raw: f64,
}

/// `(max - min) / (max + min)` over two fringe periods centred on the screen centre.
pub fn fringe_visibility(state: &OpticalState, g: &DetectorGeometry) -> Visibility {
    let period = g.fringe_period();
    let xs: Vec<f64> = (0..=256).map(|i| -period + 2.0 * period * i as f64 / 256.0).collect();
    let vis = |f: &dyn Fn(f64) -> f64| {
        let hi = extreme(f, &xs, true);
        let lo = extreme(f, &xs, false);
        (hi - lo) / (hi + lo)
    };
    let ratio = |x: f64| intensity_abs(state, g, x) / incoherent_envelope(state, g, x);
    let raw = |x: f64| intensity_abs(state, g, x);
    Visibility {
        normalized: vis(&ratio),
        raw: vis(&raw),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub p1: f64,
    pub p2: f64,
    /// Zero aperture width: nothing can be captured.
    pub degenerate: bool,
}

impl Detection {
    pub fn combined(&self) -> f64 {
        self.p1 + self.p2
    }
}

fn aperture_integral(state: &OpticalState, g: &DetectorGeometry, centre: f64) -> Result<f64, OpticsError> {
    let parts = ((g.d / g.fringe_period()).ceil() as usize * 4).max(2);
    let q = Quadrature::with_partitions(parts, DETECTION_TOL);
    Ok(q
        .integrate(|x| intensity_abs(state, g, x), centre - g.d / 2.0, centre + g.d / 2.0)?
        .value)
}

/// Capture probability per emitted photon at each aperture.
pub fn detection_probability(state: &OpticalState, g: &DetectorGeometry) -> Result<Detection, OpticsError> {
    g.validate()?;
    if g.d == 0.0 {
        return Ok(Detection {
            p1: 0.0,
            p2: 0.0,
            degenerate: true,
        });
    }
    let [x1, x2] = g.positions();
    Ok(Detection {
        p1: aperture_integral(state, g, x1)?,
        p2: aperture_integral(state, g, x2)?,
        degenerate: false,
    })
}

/// Integrated intensity over the whole screen.
pub fn total_flux(state: &OpticalState, g: &DetectorGeometry) -> Result<f64, OpticsError> {
    let (lo, hi) = g.screen_extent();
    let parts = ((hi - lo) / g.fringe_period()).ceil() as usize;
    let q = Quadrature::with_partitions(parts.max(16), 1e-12);
    Ok(q.integrate(|x| intensity_abs(state, g, x), lo, hi)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub det1: u64,
    pub det2: u64,
    pub total: u64,
    pub seed: u64,
    pub stream: u64,
}

impl CountRecord {
    pub fn combined(&self) -> u64 {
        self.det1 + self.det2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonRecord {
    pub photon: u64,
    pub u: f64,
    pub detector: Option<u8>,
}

/// Per-photon outcomes: one uniform draw, detector 1 below `p1`, detector 2 below `p1 + p2`.
pub fn photon_trace(
    det: &Detection,
    n_photons: u64,
    seed: u64,
    stream: u64,
) -> impl Iterator<Item = PhotonRecord> {
    let mut rng = trial_rng(seed, stream);
    let (p1, p12) = (det.p1, det.p1 + det.p2);
    (0..n_photons).map(move |photon| {
        let u = uniform(&mut rng);
        let detector = if u < p1 {
            Some(1)
        } else if u < p12 {
            Some(2)
        } else {
            None
        };
        PhotonRecord { photon, u, detector }
    })
}

/// Counts from `n_photons` independent photons with capture probabilities `det`.
pub fn sample_counts(det: &Detection, n_photons: u64, seed: u64, stream: u64) -> CountRecord {
    let mut rng = trial_rng(seed, stream);
    let (p1, p12) = (det.p1, det.p1 + det.p2);
    let (mut det1, mut det2) = (0, 0);
    for _ in 0..n_photons {
        let u = uniform(&mut rng as &mut dyn RngCore);
        if u < p1 {
            det1 += 1;
        } else if u < p12 {
            det2 += 1;
        }
    }
    CountRecord {
        det1,
        det2,
        total: n_photons,
        seed,
        stream,
    }
}

pub fn monte_carlo_counts(
    state: &OpticalState,
    g: &DetectorGeometry,
    n_photons: u64,
    seed: u64,
) -> Result<CountRecord, OpticsError> {
    if n_photons == 0 {
        return Err(OpticsError::NoPhotons);
    }
    let det = detection_probability(state, g)?;
    Ok(sample_counts(&det, n_photons, seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntanglementVerdict {
    Present,
    Absent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: EntanglementVerdict,
    /// Tail probability of the observed count under the rejected hypothesis.
    pub p_value: f64,
    /// `ln L(entangled) - ln L(unentangled)` for the combined count.
    pub llr: f64,
}

/// Combined capture rates under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub q_ent: f64,
    pub q_unent: f64,
}

impl Hypotheses {
    pub fn for_geometry(g: &DetectorGeometry) -> Result<Self, OpticsError> {
        Ok(Hypotheses {
            q_ent: detection_probability(&OpticalState::entangled(), g)?.combined(),
            q_unent: detection_probability(&OpticalState::unentangled_unknown(), g)?.combined(),
        })
    }

    pub fn distinguishable(&self) -> bool {
        let scale = self.q_ent.abs().max(self.q_unent.abs());
        (self.q_ent - self.q_unent).abs() > 4.0 * f64::EPSILON * scale
            && self.q_ent > 0.0
            && self.q_unent > 0.0
            && self.q_ent < 1.0
            && self.q_unent < 1.0
    }

    pub fn llr(&self, combined: u64, total: u64) -> f64 {
        let c = combined as f64;
        let m = (total - combined) as f64;
        c * (self.q_ent / self.q_unent).ln() + m * ((1.0 - self.q_ent) / (1.0 - self.q_unent)).ln()
    }

    /// Jeffreys divergence per photon between the two combined-count Bernoullis.
    pub fn separation(&self) -> f64 {
        if !self.distinguishable() {
            return 0.0;
        }
        let (e, u) = (self.q_ent, self.q_unent);
        0.5 * ((e - u) * (e / u).ln() + (u - e) * ((1.0 - e) / (1.0 - u)).ln())
    }

    pub fn decide(&self, record: &CountRecord, alpha: f64) -> Result<Decision, OpticsError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(OpticsError::Alpha(alpha));
        }
        let c = record.combined();
        let n = record.total;
        if !self.distinguishable() || n == 0 {
            return Ok(Decision {
                verdict: EntanglementVerdict::Inconclusive,
                p_value: 1.0,
                llr: 0.0,
            });
        }
        let llr = self.llr(c, n);
        let (candidate, p_value) = if llr > 0.0 {
            let unent = Binomial::new(self.q_unent, n).expect("rate in (0, 1)");
            (EntanglementVerdict::Present, tail(&unent, c, self.q_unent < self.q_ent))
        } else if llr < 0.0 {
            let ent = Binomial::new(self.q_ent, n).expect("rate in (0, 1)");
            (EntanglementVerdict::Absent, tail(&ent, c, self.q_ent < self.q_unent))
        } else {
            (EntanglementVerdict::Inconclusive, 1.0)
        };
        let verdict = if p_value < alpha {
            candidate
        } else {
            EntanglementVerdict::Inconclusive
        };
        Ok(Decision { verdict, p_value, llr })
    }
}

/// Tail of `dist` in the direction away from the alternative: `P(C >= c)`
/// when `upper`, else `P(C <= c)`.
fn tail(dist: &Binomial, c: u64, upper: bool) -> f64 {
    if upper {
        if c == 0 {
            1.0
        } else {
            dist.sf(c - 1)
        }
    } else {
        dist.cdf(c)
    }
}

/// Likelihood-ratio test of the combined count against the entangled and
/// unentangled rates for `g`.
pub fn decide_entanglement(record: &CountRecord, g: &DetectorGeometry, alpha: f64) -> Result<Decision, OpticsError> {
    Hypotheses::for_geometry(g)?.decide(record, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApertureScan {
    pub d_star: f64,
    pub statistic: f64,
    /// Expected total log-likelihood ratio for `n_photons` at `d_star`.
    pub expected_llr: f64,
    pub curve: Vec<(f64, f64)>,
}

impl ApertureScan {
    pub fn argmax_index(&self) -> usize {
        self.curve
            .iter()
            .position(|&(d, _)| d == self.d_star)
            .expect("d_star lies on the grid")
    }
}

/// Grid search of `d_j = a j / (grid + 1)` maximizing the per-photon separation.
pub fn optimize_aperture(g: &DetectorGeometry, n_photons: u64, grid: usize) -> Result<ApertureScan, OpticsError> {
    let grid = grid.max(1);
    let mut curve = Vec::with_capacity(grid);
    for j in 1..=grid {
        let d = g.a * j as f64 / (grid + 1) as f64;
        let h = Hypotheses::for_geometry(&g.with_d(d))?;
        curve.push((d, h.separation()));
    }
    let &(d_star, statistic) = curve
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    Ok(ApertureScan {
        d_star,
        statistic,
        expected_llr: statistic * n_photons as f64,
        curve,
    })
}

/// `optimize_aperture` on a grid of `grid` and `2 grid + 1` points; stable
/// when the refined optimum lies within one coarse step of the coarse one.
pub fn aperture_stability(g: &DetectorGeometry, n_photons: u64, grid: usize) -> Result<(ApertureScan, ApertureScan, bool), OpticsError> {
    let coarse = optimize_aperture(g, n_photons, grid)?;
    let fine = optimize_aperture(g, n_photons, 2 * grid + 1)?;
    let step = g.a / (grid + 1) as f64;
    let stable = (fine.d_star - coarse.d_star).abs() <= step * (1.0 + 1e-9);
    Ok((coarse, fine, stable))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n_trials: u64,
    pub n_photons: u64,
    pub alpha: f64,
    pub seed: u64,
    pub hypotheses: Hypotheses,
    /// Unentangled records declared PRESENT.
    pub false_present: u64,
    /// Entangled records not declared PRESENT.
    pub missed_present: u64,
    pub inconclusive: u64,
}

impl Calibration {
    pub fn type_i(&self) -> f64 {
        self.false_present as f64 / self.n_trials as f64
    }

    pub fn type_ii(&self) -> f64 {
        self.missed_present as f64 / self.n_trials as f64
    }

    pub fn combined_error(&self) -> f64 {
        self.type_i() + self.type_ii()
    }
}

/// Trial `t` draws the unentangled record from stream `2t` and the entangled one from `2t + 1`.
pub fn calibrate(
    g: &DetectorGeometry,
    n_photons: u64,
    n_trials: u64,
    alpha: f64,
    seed: u64,
) -> Result<Calibration, OpticsError> {
    if n_photons == 0 {
        return Err(OpticsError::NoPhotons);
    }
    let ent = detection_probability(&OpticalState::entangled(), g)?;
    let unent = detection_probability(&OpticalState::unentangled_unknown(), g)?;
    let h = Hypotheses {
        q_ent: ent.combined(),
        q_unent: unent.combined(),
    };
    let (mut false_present, mut missed_present, mut inconclusive) = (0, 0, 0);
    for t in 0..n_trials {
        let ru = sample_counts(&unent, n_photons, seed, 2 * t);
        let du = h.decide(&ru, alpha)?;
        let re = sample_counts(&ent, n_photons, seed, 2 * t + 1);
        let de = h.decide(&re, alpha)?;
        false_present += u64::from(du.verdict == EntanglementVerdict::Present);
        missed_present += u64::from(de.verdict != EntanglementVerdict::Present);
        inconclusive += u64::from(du.verdict == EntanglementVerdict::Inconclusive)
            + u64::from(de.verdict == EntanglementVerdict::Inconclusive);
    }
    Ok(Calibration {
        n_trials,
        n_photons,
        alpha,
        seed,
        hypotheses: h,
        false_present,
        missed_present,
        inconclusive,
    })
}
