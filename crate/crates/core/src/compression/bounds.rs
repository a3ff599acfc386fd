//! Size of the compression scheme and the VC / uniform-deviation bounds it
//! implies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::max_cells;

/// `⌈log₂ k⌉` with `⌈log₂ 1⌉ = 0`.
pub fn ceil_log2(k: u64) -> u32 {
    if k <= 1 {
        0
    } else {
        64 - (k - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSize {
    /// `k(d+1) + C(k, ≤r)` stored samples.
    pub m_samples: u128,
    /// `k(d+1)(1 + ⌈log₂ k⌉)` side-information bits.
    pub s_bits: u128,
    pub total: u128,
}

pub(crate) fn check_dims(d: u64, r: u64, k: u64) -> Result<()> {
    if d < 1 || k < 1 || r < 1 || r > d.min(k) {
        return Err(Error::InvalidArgument(format!(
            "need 1 ≤ r ≤ min(d, k); got d={d}, r={r}, k={k}"
        )));
    }
    Ok(())
}

pub fn scheme_size(d: u64, r: u64, k: u64) -> Result<SchemeSize> {
    check_dims(d, r, k)?;
    let overflow = || Error::Overflow(format!("scheme size for d={d}, r={r}, k={k}"));
    let qp = u128::from(k).checked_mul(u128::from(d) + 1).ok_or_else(overflow)?;
    let cells = max_cells(k as i64, r as i64)?;
    let m_samples = qp.checked_add(cells).ok_or_else(overflow)?;
    let s_bits = qp
        .checked_mul(1 + u128::from(ceil_log2(k)))
        .ok_or_else(overflow)?;
    let total = m_samples.checked_add(s_bits).ok_or_else(overflow)?;
    Ok(SchemeSize {
        m_samples,
        s_bits,
        total,
    })
}

/// `8 × size` of the compression scheme.
pub fn vc_upper_bound(d: u64, r: u64, k: u64) -> Result<u128> {
    scheme_size(d, r, k)?
        .total
        .checked_mul(8)
        .ok_or_else(|| Error::Overflow(format!("VC bound for d={d}, r={r}, k={k}")))
}

/// `c·√((vc + ln(1/δ)) / n)`.
pub fn uniform_deviation_bound(vc: u128, n: u64, delta: f64, c: f64) -> Result<f64> {
    if n < 1 || !(delta > 0.0 && delta < 1.0) || !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need n ≥ 1, 0 < δ < 1, c > 0; got n={n}, δ={delta}, c={c}"
        )));
    }
    Ok(c * ((vc as f64 + (1.0 / delta).ln()) / n as f64).sqrt())
}
