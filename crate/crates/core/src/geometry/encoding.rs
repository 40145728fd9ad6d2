use super::Vec3;
use std::f64::consts::PI;

/// Length of the positional encoding: raw coordinates plus sin/cos pairs
/// for every band and axis.
pub fn encoding_len(bands: usize) -> usize {
    3 + 6 * bands
}

/// Frequency-band positional encoding of a 3D point.
///
/// The raw coordinates are concatenated ahead of the sin/cos features so the
/// decoder keeps low-frequency information. Band b uses frequency `2^b * pi`.
pub fn positional_encoding(p: Vec3, bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoding_len(bands));
    positional_encoding_into(p, bands, &mut out);
    out
}

/// Append the encoding to an existing buffer (hot path for batched queries).
pub fn positional_encoding_into(p: Vec3, bands: usize, out: &mut Vec<f64>) {
    out.push(p.x);
    out.push(p.y);
    out.push(p.z);
    for b in 0..bands {
        let freq = (1u64 << b) as f64 * PI;
        for c in [p.x, p.y, p.z] {
            let (s, co) = (freq * c).sin_cos();
            out.push(s);
            out.push(co);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encodes_to_zero_sines_and_unit_cosines() {
        let e = positional_encoding(Vec3::ZERO, 4);
        assert_eq!(e.len(), 27);
        assert!(e[..3].iter().all(|&v| v == 0.0));
        for pair in e[3..].chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert_eq!(pair[1], 1.0);
        }
    }

    #[test]
    fn band_features_stay_in_unit_interval() {
        let e = positional_encoding(Vec3::new(3.7, -8.1, 0.02), 6);
        assert_eq!(e.len(), encoding_len(6));
        assert!(e[3..].iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn encoding_is_deterministic() {
        let p = Vec3::new(0.1, 0.2, 0.3);
        assert_eq!(positional_encoding(p, 4), positional_encoding(p, 4));
    }

    #[test]
    fn highest_band_is_lipschitz_bounded() {
        let bands = 4;
        let bound = (1u64 << bands) as f64 * PI;
        let p = Vec3::new(0.31, 0.0, 0.0);
        for i in 1..100 {
            let dq = i as f64 * 1e-4;
            let q = Vec3::new(p.x + dq, 0.0, 0.0);
            let ep = positional_encoding(p, bands);
            let eq = positional_encoding(q, bands);
            for (a, b) in ep[3..].iter().zip(&eq[3..]) {
                assert!((a - b).abs() <= bound * dq + 1e-12);
            }
        }
    }
}
