//! Adaptive Gauss–Kronrod quadrature over the real line, used as an
//! independent oracle for the closed-form nuclear kernel.

use crate::error::{Error, Result};
use crate::kernel::{check_dim, Kernel, RbfKernel};

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

const MAX_INTERVALS: usize = 2000;

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive G7–K15 integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= tol {
            return Ok(intervals.iter().map(|iv| iv.2).sum());
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error estimate {total_err:e} above tolerance {tol:e} after {MAX_INTERVALS} intervals"
            )));
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Integrates over the whole real line via `u = t / (1 - t²)`, `t ∈ (-1, 1)`.
pub fn integrate_real_line<F: FnMut(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    integrate_real_line_at(f, 0.0, 1.0, tol)
}

/// As [`integrate_real_line`], with `u = center + scale · t / (1 - t²)` so
/// that a narrow peak at `center` is resolved from the first panel.
pub fn integrate_real_line_at<F: FnMut(f64) -> f64>(mut f: F, center: f64, scale: f64, tol: f64) -> Result<f64> {
    integrate(
        |t| {
            let d = 1.0 - t * t;
            if d <= 0.0 {
                return 0.0;
            }
            let u = center + scale * t / d;
            let jac = scale * (1.0 + t * t) / (d * d);
            let v = f(u) * jac;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        tol,
    )
}

/// Numerically evaluates `∫ k(y,u) k(u,y') exp(-|u|²/(2η²)) du` for `D ≤ 2`.
pub fn quadrature_oracle(base: &RbfKernel, eta: f64, y: &[f64], y2: &[f64]) -> Result<f64> {
    let d = base.input_dim();
    check_dim(d, y.len())?;
    check_dim(d, y2.len())?;
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("measure width must be positive, got {eta}")));
    }
    // A coarse pass sets the scale; the second pass is accurate relative to it.
    let rel = 1e-11;
    let weight = |u: &[f64]| (-u.iter().map(|v| v * v).sum::<f64>() / (2.0 * eta * eta)).exp();
    match d {
        1 => {
            let f = |u: f64| {
                let p = [u];
                base.eval(y, &p) * base.eval(&p, y2) * weight(&p)
            };
            let (c, s) = (0.5 * (y[0] + y2[0]), base.lengthscales()[0]);
            let coarse = integrate_real_line_at(f, c, s, 1e-300_f64.max(1e-6 * f(c).abs()))?;
            integrate_real_line_at(f, c, s, (rel * coarse.abs()).max(f64::MIN_POSITIVE))
        }
        2 => {
            let tol = 1e-9;
            let mut inner_err = None;
            let v = integrate_real_line(
                |u0| {
                    let r = integrate_real_line(
                        |u1| {
                            let p = [u0, u1];
                            base.eval(y, &p) * base.eval(&p, y2) * weight(&p)
                        },
                        tol * 1e-2,
                    );
                    match r {
                        Ok(v) => v,
                        Err(e) => {
                            inner_err.get_or_insert(e);
                            0.0
                        }
                    }
                },
                tol,
            )?;
            match inner_err {
                Some(e) => Err(e),
                None => Ok(v),
            }
        }
        _ => Err(Error::invalid("quadrature oracle supports dimension 1 or 2 only")),
    }
}
