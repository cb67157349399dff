//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = (a + b) * half;
    let h = (b - a) * half;
    let fc = f(center);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = h * T::lit(XGK[j]);
        let s = f(center - dx) + f(center + dx);
        k = k + s * T::lit(WGK[j]);
        if j % 2 == 1 {
            g = g + s * T::lit(WG[j / 2]);
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]`, bisecting until each piece's Kronrod–Gauss
/// difference falls below its share of `tol` or below rounding level for
/// that piece. Returns `(value, error estimate)`.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> (T, T) {
    fn rec<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T, tol: T, depth: u32) -> (T, T) {
        let (val, err) = kronrod(f, a, b);
        let floor = T::epsilon() * T::lit(64.0) * val.abs();
        if err <= tol || err <= floor || depth == 0 {
            return (val, err);
        }
        let mid = (a + b) * T::lit(0.5);
        let half_tol = tol * T::lit(0.5);
        let (v1, e1) = rec(f, a, mid, half_tol, depth - 1);
        let (v2, e2) = rec(f, mid, b, half_tol, depth - 1);
        (v1 + v2, e1 + e2)
    }
    rec(&mut f, a, b, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate(|x: f64| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-14);
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn sqrt_cusp() {
        let (v, _) = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn works_in_f32() {
        let (v, _) = integrate(|x: f32| x.sin(), 0.0, std::f32::consts::PI, 1e-5);
        assert!((v - 2.0).abs() < 1e-5);
    }
}
