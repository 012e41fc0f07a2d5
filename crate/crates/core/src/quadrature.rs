//! Globally adaptive Gauss–Kronrod (7/15) integration, with variable
//! substitutions for semi-infinite and infinite ranges.

use alloc::vec::Vec;

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
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over the finite interval [a, b] to absolute tolerance `tol`.
pub fn integrate_finite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let (v, e) = gk15(&f, a, b);
    let mut intervals: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, v, e)];
    loop {
        let total_err: f64 = intervals.iter().map(|i| i.3).sum();
        if total_err <= tol || intervals.len() >= MAX_INTERVALS {
            let value = intervals.iter().map(|i| i.2).sum();
            return Integral {
                value,
                error: total_err,
                converged: total_err <= tol,
            };
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // cannot bisect further in floating point
            let value = intervals.iter().map(|i| i.2).sum::<f64>() + gk15(&f, lo, hi).0;
            return Integral {
                value,
                error: total_err,
                converged: false,
            };
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Integrates `f` over [a, b] where either bound may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Integral {
    integrate_dyn(&f, a, b, tol)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Integral {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => integrate_finite(f, a, b, tol),
        (true, false) => integrate_finite(
            |s| {
                let w = 1.0 - s;
                f(a + s / w) / (w * w)
            },
            0.0,
            1.0,
            tol,
        ),
        (false, true) => integrate_finite(|s| f(b - (1.0 - s) / s) / (s * s), 0.0, 1.0, tol),
        (false, false) => {
            let left = integrate_dyn(f, f64::NEG_INFINITY, 0.0, tol / 2.0);
            let right = integrate_dyn(f, 0.0, f64::INFINITY, tol / 2.0);
            Integral {
                value: left.value + right.value,
                error: left.error + right.error,
                converged: left.converged && right.converged,
            }
        }
    }
}

/// Like [`integrate`] but splits at `center` and stretches the infinite-range
/// substitutions by `scale`, so mass concentrated far from the origin is seen.
pub fn integrate_around<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    center: f64,
    scale: f64,
    tol: f64,
) -> Integral {
    let c = center.clamp(a, b);
    let h = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let left = if a.is_finite() {
        integrate_finite(&f, a, c, tol / 2.0)
    } else {
        // t = c - h (1 - s) / s
        integrate_finite(
            |s| {
                if s <= 0.0 {
                    0.0
                } else {
                    f(c - h * (1.0 - s) / s) * h / (s * s)
                }
            },
            0.0,
            1.0,
            tol / 2.0,
        )
    };
    let right = if b.is_finite() {
        integrate_finite(&f, c, b, tol / 2.0)
    } else {
        // t = c + h s / (1 - s)
        integrate_finite(
            |s| {
                let w = 1.0 - s;
                if w <= 0.0 {
                    0.0
                } else {
                    f(c + h * s / w) * h / (w * w)
                }
            },
            0.0,
            1.0,
            tol / 2.0,
        )
    };
    Integral {
        value: left.value + right.value,
        error: left.error + right.error,
        converged: left.converged && right.converged,
    }
}
