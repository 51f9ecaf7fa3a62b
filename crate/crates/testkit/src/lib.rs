//! Independent reference implementations and fixture generators used by the
//! test suites. Nothing here is used by the library itself.

pub mod corpus;
pub mod fclgen;
pub mod fuzzy;
pub mod ima;

/// Signal-to-noise ratio of `test` against `reference`, in dB.
pub fn snr_db(reference: &[i16], test: &[i16]) -> f64 {
    assert_eq!(reference.len(), test.len());
    let (mut sig, mut err) = (0.0f64, 0.0f64);
    for (&r, &t) in reference.iter().zip(test) {
        let r = f64::from(r);
        sig += r * r;
        err += (r - f64::from(t)).powi(2);
    }
    10.0 * (sig / err).log10()
}

/// `len` samples of a sine of amplitude `amp`, starting at phase 0.
pub fn sine(freq_hz: f64, amp: f64, len: usize, rate: u32) -> Vec<i16> {
    let w = 2.0 * std::f64::consts::PI * freq_hz / f64::from(rate);
    (0..len).map(|n| (amp * (w * n as f64).sin()).round() as i16).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_and_snr() {
        let x = sine(4000.0, 1000.0, 4, 16_000);
        assert_eq!(x, vec![0, 1000, 0, -1000]);
        let y: Vec<i16> = x.iter().map(|&v| v + 10).collect();
        // signal power 5e5, error power 100
        assert!((snr_db(&x, &y) - 10.0 * 5000f64.log10()).abs() < 1e-9);
    }
}
