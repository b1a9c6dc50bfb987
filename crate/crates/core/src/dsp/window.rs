use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Analysis/synthesis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    Hann,
    Blackman,
}

impl WindowKind {
    pub fn build(self, n: usize) -> Result<Vec<f64>> {
        match self {
            WindowKind::Hann => hann_window(n, true),
            WindowKind::Blackman => blackman_window(n, true),
        }
    }
}

fn denom(n: usize, periodic: bool) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("window length {n} < 2")));
    }
    Ok(if periodic { n as f64 } else { (n - 1) as f64 })
}

/// Hann window. The periodic form sums to exactly one at 50% overlap.
pub fn hann_window(n: usize, periodic: bool) -> Result<Vec<f64>> {
    let d = denom(n, periodic)?;
    Ok((0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / d).cos())
        .collect())
}

/// Classic three-term Blackman window (0.42 / 0.5 / 0.08).
pub fn blackman_window(n: usize, periodic: bool) -> Result<Vec<f64>> {
    let d = denom(n, periodic)?;
    Ok((0..n)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / d;
            0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let w = hann_window(4, true).unwrap();
        let expect = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = hann_window(2, false).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
        assert!(hann_window(1, true).is_err());
    }

    #[test]
    fn periodic_hann_cola() {
        for n in [4usize, 16, 512, 2048] {
            let w = hann_window(n, true).unwrap();
            for i in 0..n / 2 {
                assert!((w[i] + w[i + n / 2] - 1.0).abs() < 1e-15, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn blackman_endpoints() {
        let w = blackman_window(9, false).unwrap();
        assert!(w[0].abs() < 1e-12 && w[8].abs() < 1e-12);
        assert!((w[4] - 1.0).abs() < 1e-12);
    }
}
