use serde::{Deserialize, Serialize};

use super::GameError;

/// Downlink from an RSU to the UAVs it serves, parameterised in the dB domain.
///
/// The spectrum efficiency `log2(1 + snr)` is computed once at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLink", into = "RawLink")]
pub struct ChannelLink {
    transmit_power_dbm: f64,
    channel_gain_db: f64,
    noise_dbm: f64,
    spectrum_efficiency: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    transmit_power_dbm: f64,
    channel_gain_db: f64,
    noise_dbm: f64,
}

impl TryFrom<RawLink> for ChannelLink {
    type Error = GameError;
    fn try_from(r: RawLink) -> Result<Self, GameError> {
        ChannelLink::new(r.transmit_power_dbm, r.channel_gain_db, r.noise_dbm)
    }
}

impl From<ChannelLink> for RawLink {
    fn from(l: ChannelLink) -> Self {
        RawLink {
            transmit_power_dbm: l.transmit_power_dbm,
            channel_gain_db: l.channel_gain_db,
            noise_dbm: l.noise_dbm,
        }
    }
}

impl ChannelLink {
    pub fn new(transmit_power_dbm: f64, channel_gain_db: f64, noise_dbm: f64) -> Result<Self, GameError> {
        if !(transmit_power_dbm.is_finite() && channel_gain_db.is_finite() && noise_dbm.is_finite()) {
            return Err(GameError::invalid("channel link parameters must be finite"));
        }
        let snr_db = transmit_power_dbm + channel_gain_db - noise_dbm;
        let snr = 10f64.powf(snr_db / 10.0);
        let q = snr.ln_1p() / std::f64::consts::LN_2;
        if !(q.is_finite() && q > 0.0) {
            return Err(GameError::invalid(format!(
                "spectrum efficiency {q} is not finite and positive (snr {snr_db} dB)"
            )));
        }
        Ok(ChannelLink {
            transmit_power_dbm,
            channel_gain_db,
            noise_dbm,
            spectrum_efficiency: q,
        })
    }

    /// A link whose SNR is given directly in linear units. Handy for tests and
    /// for instances specified by their spectrum efficiency.
    pub fn from_linear_snr(snr: f64) -> Result<Self, GameError> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(GameError::invalid("linear SNR must be finite and positive"));
        }
        ChannelLink::new(10.0 * snr.log10(), 0.0, 0.0)
    }

    /// A link with spectrum efficiency `q` bits/s/Hz (`snr = 2^q - 1`).
    pub fn with_spectrum_efficiency(q: f64) -> Result<Self, GameError> {
        if !(q.is_finite() && q > 0.0) {
            return Err(GameError::invalid("spectrum efficiency must be finite and positive"));
        }
        let mut link = Self::from_linear_snr(q.exp2() - 1.0)?;
        // keep q exact rather than round-tripping through the dB domain
        link.spectrum_efficiency = q;
        Ok(link)
    }

    pub fn transmit_power_dbm(&self) -> f64 {
        self.transmit_power_dbm
    }

    pub fn channel_gain_db(&self) -> f64 {
        self.channel_gain_db
    }

    pub fn noise_dbm(&self) -> f64 {
        self.noise_dbm
    }

    pub fn snr_db(&self) -> f64 {
        self.transmit_power_dbm + self.channel_gain_db - self.noise_dbm
    }

    pub fn spectrum_efficiency(&self) -> f64 {
        self.spectrum_efficiency
    }
}

/// Exponents applied to the luminance, contrast and structure terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimWeights {
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
}

impl Default for SsimWeights {
    fn default() -> Self {
        SsimWeights { alpha: 1.0, beta: 1.0, nu: 1.0 }
    }
}

/// Luminance, contrast and structure similarity between the rendered and
/// received image for one (UAV, RSU) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimTriple {
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
    #[serde(default)]
    pub weights: SsimWeights,
}

impl SsimTriple {
    pub fn new(luminance: f64, contrast: f64, structure: f64) -> Result<Self, GameError> {
        Self::weighted(luminance, contrast, structure, SsimWeights::default())
    }

    pub fn weighted(luminance: f64, contrast: f64, structure: f64, weights: SsimWeights) -> Result<Self, GameError> {
        let t = SsimTriple { luminance, contrast, structure, weights };
        t.validate()?;
        Ok(t)
    }

    pub(crate) fn validate(&self) -> Result<(), GameError> {
        for (name, v) in [("luminance", self.luminance), ("contrast", self.contrast), ("structure", self.structure)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GameError::invalid(format!("{name} similarity {v} outside [0, 1]")));
            }
        }
        let w = self.weights;
        if !(w.alpha > 0.0 && w.beta > 0.0 && w.nu > 0.0 && w.alpha.is_finite() && w.beta.is_finite() && w.nu.is_finite()) {
            return Err(GameError::invalid("SSIM weights must be finite and positive"));
        }
        Ok(())
    }

    /// Combined score `l^alpha * c^beta * s^nu`.
    pub fn ssim(&self) -> f64 {
        let w = self.weights;
        self.luminance.powf(w.alpha) * self.contrast.powf(w.beta) * self.structure.powf(w.nu)
    }
}

/// A follower: one UAV buying migration bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavProfile {
    /// Immersion-scaled satisfaction factor (immersion factor times satisfaction factor).
    pub delta: f64,
    pub budget: f64,
    pub ssim_threshold: f64,
    /// One entry per RSU.
    pub per_rsu_ssim: Vec<SsimTriple>,
}

impl UavProfile {
    pub(crate) fn validate(&self) -> Result<(), GameError> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(GameError::invalid(format!("delta {} must be positive", self.delta)));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(GameError::invalid(format!("budget {} must be positive", self.budget)));
        }
        if !(self.ssim_threshold > 0.0 && self.ssim_threshold < 1.0) {
            return Err(GameError::invalid(format!(
                "SSIM threshold {} outside (0, 1)",
                self.ssim_threshold
            )));
        }
        self.per_rsu_ssim.iter().try_for_each(SsimTriple::validate)
    }

    /// `ln(SSIM / threshold)` for the link to `rsu`.
    pub fn log_quality(&self, rsu: usize) -> Result<f64, GameError> {
        let triple = self
            .per_rsu_ssim
            .get(rsu)
            .ok_or(GameError::IndexOutOfRange { what: "rsu", index: rsu, len: self.per_rsu_ssim.len() })?;
        let ssim = triple.ssim();
        if ssim <= 0.0 {
            return Err(GameError::UnusableLink { rsu });
        }
        Ok((ssim / self.ssim_threshold).ln())
    }
}

/// A leader: one RSU selling bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsuProfile {
    pub bandwidth_cost: f64,
    pub price_cap: f64,
    pub link: ChannelLink,
}

impl RsuProfile {
    pub(crate) fn validate(&self) -> Result<(), GameError> {
        if !(self.bandwidth_cost.is_finite() && self.bandwidth_cost > 0.0) {
            return Err(GameError::invalid(format!("bandwidth cost {} must be positive", self.bandwidth_cost)));
        }
        if !(self.price_cap.is_finite() && self.price_cap >= self.bandwidth_cost) {
            return Err(GameError::invalid(format!(
                "price cap {} below bandwidth cost {}",
                self.price_cap, self.bandwidth_cost
            )));
        }
        Ok(())
    }

    pub fn clamp_price(&self, p: f64) -> f64 {
        p.clamp(self.bandwidth_cost, self.price_cap)
    }
}

/// A complete market: `I` UAVs and `J` RSUs.
///
/// Log-qualities `S[i][j]` are cached at construction; links whose SSIM is
/// zero are stored as `-inf` and never receive demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct GameInstance {
    uavs: Vec<UavProfile>,
    rsus: Vec<RsuProfile>,
    quality: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    uavs: Vec<UavProfile>,
    rsus: Vec<RsuProfile>,
}

impl TryFrom<RawInstance> for GameInstance {
    type Error = GameError;
    fn try_from(r: RawInstance) -> Result<Self, GameError> {
        GameInstance::new(r.uavs, r.rsus)
    }
}

impl From<GameInstance> for RawInstance {
    fn from(g: GameInstance) -> Self {
        RawInstance { uavs: g.uavs, rsus: g.rsus }
    }
}

impl GameInstance {
    pub fn new(uavs: Vec<UavProfile>, rsus: Vec<RsuProfile>) -> Result<Self, GameError> {
        if uavs.is_empty() || rsus.is_empty() {
            return Err(GameError::invalid("an instance needs at least one UAV and one RSU"));
        }
        let j = rsus.len();
        for (i, u) in uavs.iter().enumerate() {
            if u.per_rsu_ssim.len() != j {
                return Err(GameError::invalid(format!(
                    "UAV {i} has {} SSIM entries, expected {j}",
                    u.per_rsu_ssim.len()
                )));
            }
            u.validate().map_err(|e| e.context(format!("UAV {i}")))?;
        }
        for (k, r) in rsus.iter().enumerate() {
            r.validate().map_err(|e| e.context(format!("RSU {k}")))?;
        }
        let quality = uavs
            .iter()
            .flat_map(|u| (0..j).map(move |k| u.log_quality(k).unwrap_or(f64::NEG_INFINITY)))
            .collect();
        Ok(GameInstance { uavs, rsus, quality })
    }

    /// Build an instance directly from log-qualities and spectrum efficiencies.
    ///
    /// `uavs` holds `(delta, budget, S row)` and `rsus` holds `(cost, cap, q)`.
    /// Each UAV gets an SSIM threshold small enough that every requested
    /// `S_ij` is realisable as `ln(SSIM / threshold)` with `SSIM <= 1`;
    /// `S_ij = -inf` maps to a zero-SSIM link.
    pub fn from_log_qualities(uavs: &[(f64, f64, Vec<f64>)], rsus: &[(f64, f64, f64)]) -> Result<Self, GameError> {
        let rsu_profiles = rsus
            .iter()
            .map(|&(cost, cap, q)| {
                Ok(RsuProfile { bandwidth_cost: cost, price_cap: cap, link: ChannelLink::with_spectrum_efficiency(q)? })
            })
            .collect::<Result<Vec<_>, GameError>>()?;
        let uav_profiles = uavs
            .iter()
            .map(|(delta, budget, s_row)| {
                let s_max = s_row.iter().copied().filter(|s| s.is_finite()).fold(f64::NEG_INFINITY, f64::max);
                let threshold = if s_max.is_finite() { 0.5f64.min((-s_max).exp() * 0.999) } else { 0.5 };
                let per_rsu_ssim = s_row
                    .iter()
                    .map(|&s| {
                        let v = if s == f64::NEG_INFINITY { 0.0 } else { threshold * s.exp() };
                        SsimTriple::new(v, 1.0, 1.0)
                    })
                    .collect::<Result<Vec<_>, GameError>>()?;
                Ok(UavProfile { delta: *delta, budget: *budget, ssim_threshold: threshold, per_rsu_ssim })
            })
            .collect::<Result<Vec<_>, GameError>>()?;
        GameInstance::new(uav_profiles, rsu_profiles)
    }

    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn num_rsus(&self) -> usize {
        self.rsus.len()
    }

    pub fn uavs(&self) -> &[UavProfile] {
        &self.uavs
    }

    pub fn rsus(&self) -> &[RsuProfile] {
        &self.rsus
    }

    pub fn uav(&self, i: usize) -> &UavProfile {
        &self.uavs[i]
    }

    pub fn rsu(&self, j: usize) -> &RsuProfile {
        &self.rsus[j]
    }

    /// Cached `S[i][j] = ln(SSIM_ij / threshold_i)`; `-inf` for a zero-SSIM link.
    pub fn quality(&self, i: usize, j: usize) -> f64 {
        self.quality[i * self.rsus.len() + j]
    }

    /// Row of log-qualities for UAV `i`.
    pub fn quality_row(&self, i: usize) -> &[f64] {
        let j = self.rsus.len();
        &self.quality[i * j..(i + 1) * j]
    }

    pub fn spectrum_efficiency(&self, j: usize) -> f64 {
        self.rsus[j].link.spectrum_efficiency()
    }

    /// Copy of this instance with every RSU's bandwidth cost replaced.
    pub fn with_uniform_cost(&self, cost: f64) -> Result<Self, GameError> {
        let mut rsus = self.rsus.clone();
        rsus.iter_mut().for_each(|r| r.bandwidth_cost = cost);
        GameInstance::new(self.uavs.clone(), rsus)
    }

    /// Copy of this instance with every RSU's price cap replaced.
    pub fn with_uniform_price_cap(&self, cap: f64) -> Result<Self, GameError> {
        let mut rsus = self.rsus.clone();
        rsus.iter_mut().for_each(|r| r.price_cap = cap);
        GameInstance::new(self.uavs.clone(), rsus)
    }

    pub(crate) fn check_uav(&self, i: usize) -> Result<(), GameError> {
        if i >= self.uavs.len() {
            return Err(GameError::IndexOutOfRange { what: "uav", index: i, len: self.uavs.len() });
        }
        Ok(())
    }

    pub(crate) fn check_rsu(&self, j: usize) -> Result<(), GameError> {
        if j >= self.rsus.len() {
            return Err(GameError::IndexOutOfRange { what: "rsu", index: j, len: self.rsus.len() });
        }
        Ok(())
    }
}

/// Seller prices, indexed `[rsu][uav]`. Every entry lies in its RSU's
/// `[cost, cap]` box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceMatrix {
    rsus: usize,
    uavs: usize,
    prices: Vec<f64>,
}

impl PriceMatrix {
    /// Validate `rows[j][i]` against the instance's price boxes.
    pub fn new(instance: &GameInstance, rows: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let (jn, inn) = (instance.num_rsus(), instance.num_uavs());
        if rows.len() != jn || rows.iter().any(|r| r.len() != inn) {
            return Err(GameError::ShapeMismatch { expected: format!("{jn}x{inn} prices") });
        }
        for (j, row) in rows.iter().enumerate() {
            let rsu = instance.rsu(j);
            for (i, &p) in row.iter().enumerate() {
                if !(p >= rsu.bandwidth_cost && p <= rsu.price_cap) {
                    return Err(GameError::PriceOutOfBox {
                        rsu: j,
                        uav: i,
                        price: p,
                        low: rsu.bandwidth_cost,
                        high: rsu.price_cap,
                    });
                }
            }
        }
        Ok(PriceMatrix { rsus: jn, uavs: inn, prices: rows.into_iter().flatten().collect() })
    }

    /// Project arbitrary rows into the price boxes.
    pub fn clamped(instance: &GameInstance, rows: &[Vec<f64>]) -> Result<Self, GameError> {
        let (jn, inn) = (instance.num_rsus(), instance.num_uavs());
        if rows.len() != jn || rows.iter().any(|r| r.len() != inn) {
            return Err(GameError::ShapeMismatch { expected: format!("{jn}x{inn} prices") });
        }
        let prices = rows
            .iter()
            .enumerate()
            .flat_map(|(j, row)| {
                let rsu = instance.rsu(j);
                row.iter().map(move |&p| if p.is_nan() { rsu.bandwidth_cost } else { rsu.clamp_price(p) })
            })
            .collect();
        Ok(PriceMatrix { rsus: jn, uavs: inn, prices })
    }

    /// Build from a function of `(rsu, uav)`, clamping into the boxes.
    pub fn from_fn(instance: &GameInstance, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let (jn, inn) = (instance.num_rsus(), instance.num_uavs());
        let mut prices = Vec::with_capacity(jn * inn);
        for j in 0..jn {
            for i in 0..inn {
                prices.push(instance.rsu(j).clamp_price(f(j, i)));
            }
        }
        PriceMatrix { rsus: jn, uavs: inn, prices }
    }

    /// Every price at its RSU's cost.
    pub fn at_cost(instance: &GameInstance) -> Self {
        Self::from_fn(instance, |j, _| instance.rsu(j).bandwidth_cost)
    }

    pub fn num_rsus(&self) -> usize {
        self.rsus
    }

    pub fn num_uavs(&self) -> usize {
        self.uavs
    }

    pub fn get(&self, rsu: usize, uav: usize) -> f64 {
        self.prices[rsu * self.uavs + uav]
    }

    /// Prices RSU `rsu` posts to every UAV.
    pub fn rsu_row(&self, rsu: usize) -> &[f64] {
        &self.prices[rsu * self.uavs..(rsu + 1) * self.uavs]
    }

    /// Prices UAV `uav` faces from every RSU.
    pub fn uav_column(&self, uav: usize) -> Vec<f64> {
        (0..self.rsus).map(|j| self.get(j, uav)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.prices.chunks(self.uavs).map(<[f64]>::to_vec).collect()
    }
}

/// Buyer demands, indexed `[uav][rsu]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    uavs: usize,
    rsus: usize,
    demands: Vec<f64>,
}

impl DemandMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let uavs = rows.len();
        let rsus = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != rsus) {
            return Err(GameError::ShapeMismatch { expected: "rectangular demand rows".into() });
        }
        if rows.iter().flatten().any(|&b| !(b >= 0.0)) {
            return Err(GameError::invalid("demands must be non-negative"));
        }
        Ok(DemandMatrix { uavs, rsus, demands: rows.into_iter().flatten().collect() })
    }

    pub fn num_uavs(&self) -> usize {
        self.uavs
    }

    pub fn num_rsus(&self) -> usize {
        self.rsus
    }

    pub fn get(&self, uav: usize, rsu: usize) -> f64 {
        self.demands[uav * self.rsus + rsu]
    }

    pub fn uav_row(&self, uav: usize) -> &[f64] {
        &self.demands[uav * self.rsus..(uav + 1) * self.rsus]
    }

    /// Demand every UAV places with RSU `rsu`.
    pub fn rsu_column(&self, rsu: usize) -> Vec<f64> {
        (0..self.uavs).map(|i| self.get(i, rsu)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.demands.chunks(self.rsus.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &DemandMatrix) -> f64 {
        self.demands
            .iter()
            .zip(&other.demands)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
