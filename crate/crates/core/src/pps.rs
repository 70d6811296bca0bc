//! Peripersonal-space field: per-taxel receptive fields, valence
//! modulation, closest-stimulus resolution and per-body-part aggregation.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::Keypoint;
use crate::scalar::{clamp, lit, to_f64, Real};
use crate::skin::{BodyPart, SkinLayout, TaxelWorld};

/// Receptive-field parameters as stored in the main config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    /// Radial extent of the field, m.
    pub extent: f64,
    pub bins: usize,
    /// Width of the nominal Gaussian, m. Calibrated from
    /// `calibration_point` when absent.
    pub sigma: Option<f64>,
    /// Parzen kernel bandwidth, m. Half a bin width when absent.
    pub bandwidth: Option<f64>,
    pub cone_half_aperture_deg: f64,
    /// `(distance m, activation)` the smoothed nominal curve must pass through.
    pub calibration_point: [f64; 2],
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            extent: 0.45,
            bins: 20,
            sigma: None,
            bandwidth: None,
            cone_half_aperture_deg: 40.0,
            calibration_point: [0.30, 0.2],
        }
    }
}

/// Binned distance-to-activation curve with Parzen-window interpolation.
///
/// Bin `k` covers `[k w, (k + 1) w)` with `w = extent / bins`. The curve is
/// the Gaussian-kernel (Nadaraya-Watson) regression over the bin centers,
/// rescaled so that `a(0) = 1`, and cut to zero at the extent.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceptiveField<T: Real> {
    bins: Vec<T>,
    extent: T,
    bin_width: T,
    bandwidth: T,
    cone_half_aperture: T,
    cos_aperture: T,
    peak: T,
    sigma: Option<T>,
}

impl<T: Real> ReceptiveField<T> {
    pub fn from_bins(bins: Vec<T>, extent: T, bandwidth: T, cone_half_aperture: T) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::ReceptiveField("no bins".into()));
        }
        if !(extent > T::zero()) || !(bandwidth > T::zero()) {
            return Err(Error::ReceptiveField("extent and bandwidth must be positive".into()));
        }
        if !(cone_half_aperture > T::zero()) || cone_half_aperture > T::pi() {
            return Err(Error::ReceptiveField("cone half-aperture must lie in (0, pi]".into()));
        }
        if bins.iter().any(|&b| !(b >= T::zero() && b <= T::one())) {
            return Err(Error::ReceptiveField("bin values must lie in [0, 1]".into()));
        }
        if bins.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::ReceptiveField("bin values must be non-increasing".into()));
        }
        if bins[0] <= T::zero() {
            return Err(Error::ReceptiveField("first bin must be positive".into()));
        }
        let bin_width = extent / lit(bins.len() as f64);
        let mut rf = Self {
            bins,
            extent,
            bin_width,
            bandwidth,
            cone_half_aperture,
            cos_aperture: cone_half_aperture.cos(),
            peak: T::one(),
            sigma: None,
        };
        rf.peak = rf.smoothed(T::zero());
        Ok(rf)
    }

    /// Bins sampled from `exp(-d^2 / 2 sigma^2)` at the bin centers.
    pub fn gaussian(sigma: T, extent: T, bins: usize, bandwidth: T, cone_half_aperture: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::ReceptiveField("sigma must be positive".into()));
        }
        let width = extent / lit(bins as f64);
        let two_var = lit::<T>(2.0) * sigma * sigma;
        let values = (0..bins)
            .map(|k| {
                let c = width * (lit::<T>(k as f64) + lit(0.5));
                (-(c * c) / two_var).exp()
            })
            .collect();
        let mut rf = Self::from_bins(values, extent, bandwidth, cone_half_aperture)?;
        rf.sigma = Some(sigma);
        Ok(rf)
    }

    /// Builds the field from config, root-finding sigma when it is not given.
    pub fn from_config(cfg: &RfConfig) -> Result<Self> {
        if cfg.bins == 0 {
            return Err(Error::ReceptiveField("no bins".into()));
        }
        let extent = lit::<T>(cfg.extent);
        let bandwidth = lit::<T>(cfg.bandwidth.unwrap_or(cfg.extent / cfg.bins as f64 / 2.0));
        let aperture = lit::<T>(cfg.cone_half_aperture_deg.to_radians());
        let sigma = match cfg.sigma {
            Some(s) => lit(s),
            None => {
                let [d, a] = cfg.calibration_point;
                calibrate_sigma(lit(d), lit(a), extent, cfg.bins, bandwidth, aperture)?
            }
        };
        Self::gaussian(sigma, extent, cfg.bins, bandwidth, aperture)
    }

    pub fn bins(&self) -> &[T] {
        &self.bins
    }

    pub fn extent(&self) -> T {
        self.extent
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn cone_half_aperture(&self) -> T {
        self.cone_half_aperture
    }

    pub fn sigma(&self) -> Option<T> {
        self.sigma
    }

    fn smoothed(&self, d: T) -> T {
        let half = lit::<T>(0.5);
        let mut num = T::zero();
        let mut den = T::zero();
        for (k, &b) in self.bins.iter().enumerate() {
            let c = self.bin_width * (lit::<T>(k as f64) + half);
            let u = (d - c) / self.bandwidth;
            let w = (-half * u * u).exp();
            num += w * b;
            den += w;
        }
        if den > T::zero() {
            num / den
        } else {
            T::zero()
        }
    }

    /// Activation for a stimulus at distance `d` (m).
    pub fn activation(&self, d: T) -> Result<T> {
        if !(d >= T::zero()) {
            return Err(Error::NegativeDistance(to_f64(d)));
        }
        Ok(self.activation_unchecked(d))
    }

    pub(crate) fn activation_unchecked(&self, d: T) -> T {
        if d >= self.extent {
            return T::zero();
        }
        clamp(self.smoothed(d) / self.peak, T::zero(), T::one())
    }

    /// Distance at which the modulated response falls to `threshold`, or
    /// `None` when the curve never reaches it.
    pub fn crossing_distance(&self, threshold: T, valence: T) -> Option<T> {
        let response = |d: T| modulate(self.activation_unchecked(d), valence).unwrap_or(T::zero());
        if response(T::zero()) < threshold {
            return None;
        }
        let mut lo = T::zero();
        let mut hi = self.extent;
        for _ in 0..200 {
            let mid = (lo + hi) * lit(0.5);
            if response(mid) >= threshold {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some((lo + hi) * lit(0.5))
    }
}

/// Sigma such that the smoothed, normalized Gaussian curve passes through
/// `(distance, activation)`. The curve at a fixed distance is increasing in
/// sigma, so bisection on a bracketing interval suffices.
pub fn calibrate_sigma<T: Real>(
    distance: T,
    activation: T,
    extent: T,
    bins: usize,
    bandwidth: T,
    aperture: T,
) -> Result<T> {
    let eval = |s: T| -> Result<T> {
        Ok(ReceptiveField::gaussian(s, extent, bins, bandwidth, aperture)?.activation_unchecked(distance))
    };
    let mut lo = extent * lit(0.01);
    let mut hi = extent * lit(10.0);
    if !(eval(lo)? < activation && eval(hi)? > activation) {
        return Err(Error::ReceptiveField(format!(
            "calibration point ({}, {}) is not reachable",
            to_f64(distance),
            to_f64(activation)
        )));
    }
    for _ in 0..200 {
        let mid = (lo + hi) * lit(0.5);
        if eval(mid)? < activation {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * lit(0.5))
}

/// Valence modulation `a (1 + theta)`, clamped to `[0, 1]`.
pub fn modulate<T: Real>(activation: T, valence: T) -> Result<T> {
    if !(valence >= -T::one() && valence <= T::one()) {
        return Err(Error::Valence(to_f64(valence)));
    }
    if !(activation >= T::zero() && activation <= T::one()) {
        return Err(Error::Activation(to_f64(activation)));
    }
    Ok(clamp(activation * (T::one() + valence), T::zero(), T::one()))
}

/// A point obstacle with its valence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stimulus<T: Real> {
    pub position: Vector3<T>,
    pub valence: T,
    pub label: Keypoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaxelResponse<T> {
    pub activation: T,
    /// Index into the stimulus list of the closest eligible stimulus.
    pub winner: Option<usize>,
}

/// Response of one taxel to the closest stimulus inside its spherical sector.
pub fn taxel_response<T: Real>(
    taxel: &TaxelWorld<T>,
    stimuli: &[Stimulus<T>],
    rf: &ReceptiveField<T>,
) -> TaxelResponse<T> {
    let mut best: Option<(usize, T)> = None;
    for (i, s) in stimuli.iter().enumerate() {
        let v = s.position - taxel.position;
        let d = v.norm();
        if d > rf.extent {
            continue;
        }
        if d > T::zero() && taxel.normal.dot(&v) < rf.cos_aperture * d {
            continue;
        }
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    match best {
        Some((i, d)) => TaxelResponse {
            activation: modulate(
                rf.activation_unchecked(d),
                clamp(stimuli[i].valence, -T::one(), T::one()),
            )
            .unwrap_or(T::zero()),
            winner: Some(i),
        },
        None => TaxelResponse {
            activation: T::zero(),
            winner: None,
        },
    }
}

/// Aggregated control point of one body part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpsAggregate<T: Real> {
    pub body_part: BodyPart,
    /// Activation-weighted mean taxel position, m.
    pub position: Vector3<T>,
    /// Normalized activation-weighted sum of taxel normals.
    pub normal: Vector3<T>,
    /// Maximum taxel activation.
    pub activation: T,
    /// Index (in the slice passed to [`aggregate`]) of the most active taxel.
    pub peak: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AggregateOutcome<T: Real> {
    Inactive,
    /// Some taxels are active but their weighted normals cancel out.
    Suppressed,
    Active(PpsAggregate<T>),
}

impl<T: Real> AggregateOutcome<T> {
    pub fn active(&self) -> Option<&PpsAggregate<T>> {
        match self {
            AggregateOutcome::Active(a) => Some(a),
            _ => None,
        }
    }
}

pub fn aggregate<T: Real>(
    body_part: BodyPart,
    taxels: &[TaxelWorld<T>],
    responses: &[T],
) -> Result<AggregateOutcome<T>> {
    if taxels.len() != responses.len() {
        return Err(Error::Dimension {
            expected: taxels.len(),
            got: responses.len(),
        });
    }
    let mut weight = T::zero();
    let mut position = Vector3::zeros();
    let mut normal = Vector3::zeros();
    let mut peak: Option<(usize, T)> = None;
    for (i, (t, &a)) in taxels.iter().zip(responses).enumerate() {
        if !(a > T::zero()) {
            continue;
        }
        weight += a;
        position += t.position * a;
        normal += t.normal * a;
        if peak.is_none_or(|(_, pa)| a > pa) {
            peak = Some((i, a));
        }
    }
    let Some((peak, activation)) = peak else {
        return Ok(AggregateOutcome::Inactive);
    };
    let len = normal.norm();
    if len <= weight * lit(1e-9) {
        log::debug!("{body_part} aggregate suppressed: taxel normals cancel");
        return Ok(AggregateOutcome::Suppressed);
    }
    Ok(AggregateOutcome::Active(PpsAggregate {
        body_part,
        position: position / weight,
        normal: normal / len,
        activation,
        peak,
    }))
}

/// Aggregate of one body part together with the link carrying its most
/// active taxel, which is where the control point is attached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartState<T: Real> {
    pub outcome: AggregateOutcome<T>,
    pub link: Option<usize>,
}

/// Everything the PPS layer computes in one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct PpsEvaluation<T: Real> {
    pub world: Vec<TaxelWorld<T>>,
    pub responses: Vec<TaxelResponse<T>>,
    pub parts: Vec<(BodyPart, PartState<T>)>,
}

impl<T: Real> PpsEvaluation<T> {
    pub fn part(&self, part: BodyPart) -> Option<&PartState<T>> {
        self.parts.iter().find(|(p, _)| *p == part).map(|(_, s)| s)
    }
}

/// Runs responses and aggregation for every body part present in `skin`.
pub fn evaluate<T: Real>(
    skin: &SkinLayout<T>,
    world: Vec<TaxelWorld<T>>,
    stimuli: &[Stimulus<T>],
    rf: &ReceptiveField<T>,
) -> PpsEvaluation<T> {
    let responses: Vec<_> = world.iter().map(|w| taxel_response(w, stimuli, rf)).collect();
    let mut parts = Vec::new();
    for part in BodyPart::ALL {
        let idx: Vec<usize> = (0..skin.len())
            .filter(|&i| skin.taxels()[i].body_part == part)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let w: Vec<_> = idx.iter().map(|&i| world[i]).collect();
        let a: Vec<_> = idx.iter().map(|&i| responses[i].activation).collect();
        let outcome = aggregate(part, &w, &a).expect("aligned slices");
        let link = outcome.active().map(|agg| skin.taxels()[idx[agg.peak]].link);
        parts.push((part, PartState { outcome, link }));
    }
    PpsEvaluation {
        world,
        responses,
        parts,
    }
}
