//! Energy-decay analysis of impulse responses.

/// Schroeder backward integral `E(t) = Σ_{τ≥t} h(τ)²`, in dB relative to
/// the total energy.
pub fn schroeder_curve_db(h: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = h
        .iter()
        .rev()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return vec![f64::NEG_INFINITY; h.len()];
    }
    edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// T60 extrapolated from a least-squares line through the Schroeder curve
/// between -5 dB and -25 dB. `None` if the curve never reaches -25 dB.
pub fn schroeder_t60(h: &[f64], sample_rate: u32) -> Option<f64> {
    let curve = schroeder_curve_db(h);
    let start = curve.iter().position(|&v| v <= -5.0)?;
    let end = curve.iter().position(|&v| v <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    let fs = sample_rate as f64;
    let pts = &curve[start..=end];
    let n = pts.len() as f64;
    let mean_t = pts.iter().enumerate().map(|(i, _)| (start + i) as f64 / fs).sum::<f64>() / n;
    let mean_v = pts.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in pts.iter().enumerate() {
        let dt = (start + i) as f64 / fs - mean_t;
        sxy += dt * (v - mean_v);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_recovers_t60() {
        let fs = 16_000;
        let t60 = 0.4;
        // Amplitude decays 60 dB (factor 1000) over t60.
        let rate = (1000f64).ln() / t60;
        let h: Vec<f64> = (0..fs)
            .map(|i| (-(rate) * i as f64 / fs as f64).exp() * if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let est = schroeder_t60(&h, fs as u32).unwrap();
        assert!((est - t60).abs() / t60 < 0.01, "{est}");
    }

    #[test]
    fn curve_is_monotone() {
        let h = [0.0, 1.0, -0.5, 0.25, 0.0, 0.1];
        let c = schroeder_curve_db(&h);
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
    }
}
