//! Positional encoding and its input jets.

use ndarray::Array2;

use super::jet::JetOrder;
use crate::geom::{Vec3, HESSIAN_PAIRS};

/// `[x, sin(x), cos(x), sin(2x), cos(2x), ...]`, each block componentwise,
/// frequencies `2^k` for `k < octaves`.
pub fn positional_encoding(x: &Vec3, octaves: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 + 6 * octaves);
    out.extend_from_slice(x.as_slice());
    for k in 0..octaves {
        let w = (1u64 << k) as f64;
        out.extend(x.iter().map(|c| (w * c).sin()));
        out.extend(x.iter().map(|c| (w * c).cos()));
    }
    out
}

pub fn encoding_width(octaves: usize) -> usize {
    3 * (1 + 2 * octaves)
}

/// Encoded-input jet matrix for a batch of positions: rows are encoded
/// channels, columns are `component * n + sample` with derivatives taken
/// with respect to the raw coordinates.
pub(crate) fn encode_points(points: &[Vec3], octaves: usize, order: JetOrder) -> Array2<f64> {
    let n = points.len();
    let k = order.width();
    let mut enc = Array2::<f64>::zeros((encoding_width(octaves), k * n));
    for (s, p) in points.iter().enumerate() {
        for c in 0..3 {
            enc[[c, s]] = p[c];
            if k > 1 {
                enc[[c, (1 + c) * n + s]] = 1.0;
            }
        }
        for oct in 0..octaves {
            let w = (1u64 << oct) as f64;
            let sin_row = 3 + 6 * oct;
            let cos_row = sin_row + 3;
            for c in 0..3 {
                let (sn, cs) = (w * p[c]).sin_cos();
                enc[[sin_row + c, s]] = sn;
                enc[[cos_row + c, s]] = cs;
                if k > 1 {
                    enc[[sin_row + c, (1 + c) * n + s]] = w * cs;
                    enc[[cos_row + c, (1 + c) * n + s]] = -w * sn;
                }
                if k > 4 {
                    // Only the pure second derivative along `c` survives.
                    let slot = HESSIAN_PAIRS.iter().position(|&(i, j)| i == c && j == c).unwrap();
                    enc[[sin_row + c, (4 + slot) * n + s]] = -w * w * sn;
                    enc[[cos_row + c, (4 + slot) * n + s]] = -w * w * cs;
                }
            }
        }
    }
    enc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_input() {
        let e = positional_encoding(&Vec3::zeros(), 2);
        assert_eq!(e.len(), 15);
        assert!(e[..3].iter().all(|&v| v == 0.0));
        for oct in 0..2 {
            assert!(e[3 + 6 * oct..6 + 6 * oct].iter().all(|&v| v == 0.0));
            assert!(e[6 + 6 * oct..9 + 6 * oct].iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn quarter_turn() {
        let e = positional_encoding(&Vec3::new(FRAC_PI_2, 0.0, 0.0), 1);
        assert_eq!(e[3], 1.0);
        assert!(e[6].abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let e = positional_encoding(&x, 6);
            assert_eq!(e.len(), 39);
            let mut idx = 3;
            for k in 0..6 {
                let f = 2f64.powi(k);
                for c in 0..3 {
                    assert_eq!(e[idx + c], (f * x[c]).sin());
                    assert_eq!(e[idx + 3 + c], (f * x[c]).cos());
                }
                idx += 6;
            }
        }
    }

    #[test]
    fn jet_columns_agree_with_plain_encoding() {
        let pts = [Vec3::new(0.3, -0.2, 0.7), Vec3::new(-0.9, 0.1, 0.05)];
        let enc = encode_points(&pts, 3, JetOrder::Hessian);
        for (s, p) in pts.iter().enumerate() {
            let plain = positional_encoding(p, 3);
            for (r, v) in plain.iter().enumerate() {
                assert_eq!(enc[[r, s]], *v);
            }
            // tangent along y by finite differences
            let h = 1e-6;
            let plus = positional_encoding(&(p + Vec3::y() * h), 3);
            let minus = positional_encoding(&(p - Vec3::y() * h), 3);
            for r in 0..plain.len() {
                let fd = (plus[r] - minus[r]) / (2.0 * h);
                assert!((fd - enc[[r, 2 * pts.len() + s]]).abs() < 1e-7);
            }
        }
    }
}
