//! Adaptive Gauss–Kronrod (7/15) integration.

use crate::real::Real;

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

const MAX_DEPTH: usize = 50;

fn kronrod<F: Real>(f: &impl Fn(F) -> F, lo: F, hi: F) -> (F, F) {
    let half = (hi - lo) * F::lit(0.5);
    let center = (hi + lo) * F::lit(0.5);
    let fc = f(center);
    let mut kronrod = fc * F::lit(WGK[7]);
    let mut gauss = fc * F::lit(WG[3]);
    for j in 0..7 {
        let dx = half * F::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * F::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * F::lit(WG[j / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[lo, hi]` to relative tolerance `rel_tol`, bisecting
/// intervals whose Gauss/Kronrod discrepancy is too large.
pub fn integrate<F: Real>(f: impl Fn(F) -> F, lo: F, hi: F, rel_tol: F) -> Option<F> {
    let (whole, err) = kronrod(&f, lo, hi);
    let abs_floor = F::epsilon() * F::lit(50.0);
    let mut stack = vec![(lo, hi, whole, err, 0usize)];
    let mut total = F::zero();
    let mut estimate = whole;
    while let Some((a, b, value, err, depth)) = stack.pop() {
        let tol = (rel_tol * estimate.abs()).max(abs_floor) * (b - a) / (hi - lo);
        if err <= tol || depth >= MAX_DEPTH {
            if depth >= MAX_DEPTH && err > tol * F::lit(1e3) {
                return None;
            }
            total = total + value;
            continue;
        }
        let mid = (a + b) * F::lit(0.5);
        let (left, el) = kronrod(&f, a, mid);
        let (right, er) = kronrod(&f, mid, b);
        estimate = estimate - value + left + right;
        stack.push((a, mid, left, el, depth + 1));
        stack.push((mid, b, right, er, depth + 1));
    }
    total.is_finite().then_some(total)
}

/// Integrates over the whole real line through `x = center + scale * t / (1 - t^2)`.
pub fn integrate_real_line<F: Real>(
    f: impl Fn(F) -> F,
    center: F,
    scale: F,
    rel_tol: F,
) -> Option<F> {
    let one = F::one();
    let g = |t: F| {
        let d = one - t * t;
        if d <= F::zero() {
            return F::zero();
        }
        let x = center + scale * t / d;
        let jac = scale * (one + t * t) / (d * d);
        let v = f(x) * jac;
        if v.is_finite() {
            v
        } else {
            F::zero()
        }
    };
    integrate(g, -one, one, rel_tol)
}
