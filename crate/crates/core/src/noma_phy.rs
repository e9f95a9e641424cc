//! Uplink NOMA rates with successive interference cancellation.
//!
//! Users inside a group are indexed strongest first. The base station
//! decodes user 0 first, treating every weaker user as interference, then
//! cancels it and moves on; the last (weakest) user sees only noise.
//!
//! Powers are derived from data demands through the aggregate received
//! power `a_j = Σ_{l≥j} p_l h_l`, which satisfies
//! `a_j = 2^{D_j/(B t)} a_{j+1} + (2^{D_j/(B t)} − 1) σ²B` with `a_{M+1} = 0`.
//! The recursion is evaluated with `expm1` so that small demands do not
//! lose precision.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Bandwidth and noise level of the band a group transmits on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// Hz
    pub bandwidth: f64,
    /// W/Hz
    pub noise_psd: f64,
}

impl Link {
    pub fn new(bandwidth: f64, noise_psd: f64) -> Self {
        Link { bandwidth, noise_psd }
    }

    /// σ²B in watt.
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }

    /// Shannon rate for a received SINR.
    pub fn rate(&self, snr: f64) -> f64 {
        self.bandwidth * snr.ln_1p() / LN_2
    }

    /// Received power needed above the noise floor to carry `bits` in `airtime`
    /// when `interference` (watt) is treated as noise.
    fn required_power(&self, bits: f64, airtime: f64, interference: f64) -> f64 {
        if bits <= 0.0 {
            return 0.0;
        }
        (bits * LN_2 / (self.bandwidth * airtime)).exp_m1() * (interference + self.noise_power())
    }
}

/// Per-user SIC rates `B log2(1 + p_j h_j / (σ²B + Σ_{l>j} p_l h_l))`.
pub fn shannon_rates(powers: &[f64], gains: &[f64], link: Link) -> Vec<f64> {
    debug_assert_eq!(powers.len(), gains.len());
    let n = link.noise_power();
    let mut rates = vec![0.0; powers.len()];
    let mut interference = 0.0;
    for j in (0..powers.len()).rev() {
        let rx = powers[j] * gains[j];
        rates[j] = link.rate(rx / (n + interference));
        interference += rx;
    }
    rates
}

/// Sum rate of users `j..`, `B log2(1 + Σ_{l≥j} p_l h_l / σ²B)`.
pub fn sum_rate_from_j(powers: &[f64], gains: &[f64], link: Link, j: usize) -> Result<f64> {
    if j >= powers.len() {
        return Err(Error::field(
            "j",
            format!("index {j} out of range for a group of {}", powers.len()),
        ));
    }
    let a: f64 = powers[j..].iter().zip(&gains[j..]).map(|(p, h)| p * h).sum();
    Ok(link.rate(a / link.noise_power()))
}

/// Aggregate received powers `a_j` (length M+1, last entry 0) that carry
/// exactly `demands` bits in `airtime`.
pub fn aggregates_from_demands(demands: &[f64], airtime: f64, link: Link) -> Result<Vec<f64>> {
    if demands.iter().any(|&d| d > 0.0) && !(airtime > 0.0) {
        return Err(Error::field("airtime", format!("must be positive with positive demand, got {airtime}")));
    }
    let m = demands.len();
    let mut a = vec![0.0; m + 1];
    for j in (0..m).rev() {
        a[j] = a[j + 1] + link.required_power(demands[j], airtime, a[j + 1]);
    }
    Ok(a)
}

/// Powers that make each user's SIC rate times `airtime` equal its demand.
pub fn powers_from_demands(demands: &[f64], airtime: f64, gains: &[f64], link: Link) -> Result<Vec<f64>> {
    debug_assert_eq!(demands.len(), gains.len());
    let a = aggregates_from_demands(demands, airtime, link)?;
    Ok((0..demands.len())
        .map(|j| if demands[j] > 0.0 { (a[j] - a[j + 1]) / gains[j] } else { 0.0 })
        .collect())
}

/// Smallest airtime at which user `j` needs no more than `cap` watt, with
/// every other user's power set by [`powers_from_demands`].
///
/// The required power of user `j` strictly decreases with airtime, so the
/// crossing point is unique; it is located by bisection to relative width
/// 1e-10. Returns 0 for zero demand and infinity when `cap` is 0.
pub fn min_airtime(j: usize, demands: &[f64], cap: f64, gains: &[f64], link: Link) -> f64 {
    let dj = demands[j];
    if dj <= 0.0 {
        return 0.0;
    }
    if !(cap > 0.0) {
        return f64::INFINITY;
    }
    let power_at = |t: f64| -> f64 {
        let mut a = 0.0;
        for &d in demands[j + 1..].iter().rev() {
            a += link.required_power(d, t, a);
        }
        link.required_power(dj, t, a) / gains[j]
    };
    // Ignoring interference gives a lower bound on the airtime.
    let mut lo = dj / link.rate(cap * gains[j] / link.noise_power());
    if power_at(lo) <= cap {
        return lo;
    }
    let mut hi = lo * 2.0;
    while power_at(hi) > cap {
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo) > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if power_at(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Smallest group airtime for which some powers within the caps meet the
/// suffix sum-rate constraints `B t log2(1 + Σ_{l≥j} p_l h_l / σ²B) ≥ Σ_{l≥j} D_l`.
///
/// With every user at its cap the suffix aggregates are as large as they can
/// be, so the floor is `max_j S_j / (B log2(1 + Σ_{l≥j} P_l h_l / σ²B))`.
/// For a single user this is [`min_airtime`]; in general it never exceeds
/// `max_j` [`min_airtime`], which additionally pins every user to its own
/// SIC rate. Returns infinity when some suffix has data but no power.
pub fn group_min_airtime(demands: &[f64], caps: &[f64], gains: &[f64], link: Link) -> f64 {
    let n = link.noise_power();
    let mut suffix_bits = 0.0;
    let mut suffix_rx = 0.0;
    let mut floor = 0.0f64;
    for j in (0..demands.len()).rev() {
        suffix_bits += demands[j];
        suffix_rx += caps[j] * gains[j];
        if suffix_bits > 0.0 {
            let rate = link.rate(suffix_rx / n);
            if !(rate > 0.0) {
                return f64::INFINITY;
            }
            floor = floor.max(suffix_bits / rate);
        }
    }
    floor
}

/// Least-energy powers meeting the suffix sum-rate constraints
/// `B t log2(1 + Σ_{l≥j} p_l h_l / σ²B) ≥ Σ_{l≥j} D_l` under per-user caps.
///
/// Without binding caps this equals [`powers_from_demands`]. When a strong
/// user's cap binds, weaker users raise their power to keep the suffix
/// aggregates high enough. The resulting aggregates are componentwise
/// minimal, which minimises `Σ p` because `Σ p = a_1/h_1 + Σ_{j≥2} a_j
/// (1/h_j − 1/h_{j−1})` has nonnegative weights. Returns `None` when no
/// power vector within the caps works.
pub fn min_powers_with_caps(
    demands: &[f64],
    airtime: f64,
    gains: &[f64],
    caps: &[f64],
    link: Link,
) -> Option<Vec<f64>> {
    let m = demands.len();
    let total: f64 = demands.iter().sum();
    if total <= 0.0 {
        return Some(vec![0.0; m]);
    }
    if !(airtime > 0.0) {
        return None;
    }
    let n = link.noise_power();
    let mut suffix = 0.0;
    let mut need = vec![0.0; m];
    for j in (0..m).rev() {
        suffix += demands[j];
        need[j] = if suffix > 0.0 {
            (suffix * LN_2 / (link.bandwidth * airtime)).exp_m1() * n
        } else {
            0.0
        };
    }
    let mut agg = vec![0.0; m + 1];
    for j in 0..m {
        let carried = if j == 0 { 0.0 } else { agg[j - 1] - caps[j - 1] * gains[j - 1] };
        agg[j] = need[j].max(carried);
    }
    if agg[m - 1] > caps[m - 1] * gains[m - 1] * (1.0 + 1e-12) {
        return None;
    }
    Some(
        (0..m)
            .map(|j| ((agg[j] - agg[j + 1]) / gains[j]).clamp(0.0, caps[j]))
            .collect(),
    )
}
