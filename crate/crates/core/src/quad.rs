//! Adaptive Gauss–Kronrod (7/15) quadrature.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("tolerance {tol:e} not reached after {intervals} intervals (estimate {estimate:e})")]
    NotConverged {
        tol: f64,
        intervals: usize,
        estimate: f64,
    },
    #[error("integrand is not finite at x = {0}")]
    NonFinite(f64),
}

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
    0.209_482_141_084_728_8,
];

/// Gauss weights for the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Equal subintervals the range is split into before adapting.
    pub initial_partitions: usize,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            initial_partitions: 1,
            abs_tol: 1e-10,
            max_intervals: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadError::NonFinite(x))
        }
    };
    let fc = eval(centre)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let dx = half * x;
        let pair = eval(centre - dx)? + eval(centre + dx)?;
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

impl Quadrature {
    pub fn with_partitions(initial_partitions: usize, abs_tol: f64) -> Self {
        Quadrature {
            initial_partitions,
            abs_tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over `[a, b]`, bisecting the interval with the
    /// largest error estimate until the summed estimate is below `abs_tol`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<QuadResult, QuadError> {
        if a == b {
            return Ok(QuadResult {
                value: 0.0,
                error: 0.0,
                intervals: 0,
            });
        }
        let n = self.initial_partitions.max(1);
        let h = (b - a) / n as f64;
        let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n * 2);
        for i in 0..n {
            let lo = a + h * i as f64;
            let hi = if i + 1 == n { b } else { a + h * (i + 1) as f64 };
            let (v, e) = gk15(&f, lo, hi)?;
            pieces.push((lo, hi, v, e));
        }
        loop {
            let error: f64 = pieces.iter().map(|p| p.3).sum();
            if error <= self.abs_tol {
                return Ok(QuadResult {
                    value: pieces.iter().map(|p| p.2).sum(),
                    error,
                    intervals: pieces.len(),
                });
            }
            if pieces.len() >= self.max_intervals {
                return Err(QuadError::NotConverged {
                    tol: self.abs_tol,
                    intervals: pieces.len(),
                    estimate: pieces.iter().map(|p| p.2).sum(),
                });
            }
            let (worst, _) = pieces
                .iter()
                .enumerate()
                .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
                .expect("non-empty");
            let (lo, hi, _, _) = pieces.swap_remove(worst);
            let mid = 0.5 * (lo + hi);
            let (v1, e1) = gk15(&f, lo, mid)?;
            let (v2, e2) = gk15(&f, mid, hi)?;
            pieces.push((lo, mid, v1, e1));
            pieces.push((mid, hi, v2, e2));
        }
    }
}
