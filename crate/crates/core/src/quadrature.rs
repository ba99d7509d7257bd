//! Numerical integration: fixed-order Gauss-Legendre and adaptive Gauss-Kronrod (7/15).

use std::sync::OnceLock;

const LEGENDRE_ORDER: usize = 16;

/// Nodes and weights of the 16-point Gauss-Legendre rule on `[-1, 1]`,
/// computed once by Newton iteration on the Legendre recurrence.
fn legendre_rule() -> &'static ([f64; LEGENDRE_ORDER], [f64; LEGENDRE_ORDER]) {
    static RULE: OnceLock<([f64; LEGENDRE_ORDER], [f64; LEGENDRE_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = LEGENDRE_ORDER;
        let mut nodes = [0.0; LEGENDRE_ORDER];
        let mut weights = [0.0; LEGENDRE_ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / deriv;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * deriv * deriv);
        }
        (nodes, weights)
    })
}

/// 16-point Gauss-Legendre approximation of the integral of `f` over `[a, b]`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = legendre_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let sum: f64 = nodes.iter().zip(weights).map(|(&x, &w)| w * f(mid + half * x)).sum();
    sum * half
}

// QUADPACK qk15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub intervals: usize,
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Subintervals with the largest error estimates are bisected until the total
/// estimate falls below `abs_tol` or `max_intervals` is reached.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, max_intervals: usize) -> Integral {
    if a == b {
        return Integral { value: 0.0, error_estimate: 0.0, intervals: 0 };
    }
    let (value, err) = kronrod15(&f, a, b);
    let mut pieces = vec![(a, b, value, err)];
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.3).sum();
        if total_err <= abs_tol || pieces.len() >= max_intervals {
            let value = pieces.iter().map(|p| p.2).sum();
            return Integral { value, error_estimate: total_err, intervals: pieces.len() };
        }
        let (worst, _) = pieces.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Integrates over `[a, b]` splitting at the given interior breakpoints (kinks of `f`).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], abs_tol: f64) -> f64 {
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    points.sort_by(f64::total_cmp);
    points.insert(0, a);
    points.push(b);
    let share = abs_tol / (points.len() - 1) as f64;
    points.windows(2).map(|w| integrate(&f, w[0], w[1], share, 2000).value).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_weights_sum_to_two_and_integrate_polynomials() {
        let (_, w) = legendre_rule();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact through degree 31
        let v = gauss_legendre(|x| x.powi(30), -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
        let v = gauss_legendre(|x| x.powi(5) + 1.0, 0.0, 2.0);
        assert!((v - (64.0 / 6.0 + 2.0)).abs() < 1e-13);
    }

    #[test]
    fn kronrod_rule_is_exact_for_low_degree() {
        let (k, e) = kronrod15(&|x: f64| x.powi(12) - 3.0 * x.powi(7) + 1.0, -1.0, 1.0);
        assert!((k - (2.0 / 13.0 + 2.0)).abs() < 1e-14);
        assert!(e < 1e-13);
        assert!((WGK.iter().sum::<f64>() * 2.0 - WGK[7] - 2.0).abs() < 1e-14);
        assert!((WG.iter().sum::<f64>() * 2.0 - WG[3] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let f = |x: f64| (x - 0.3).abs();
        let v = integrate_with_breaks(f, -1.0, 1.0, &[0.3], 1e-13);
        assert!((v - (1.3 * 1.3 / 2.0 + 0.7 * 0.7 / 2.0)).abs() < 1e-13);
        let r = integrate(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-14, 500);
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }
}
