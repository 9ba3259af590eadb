//! Range analysis, main-effects ANOVA and the F distribution tail.

use log::warn;

use super::design::{Factor, FACTOR_COUNT};

/// One trial outcome: its level per factor and an indicator value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub levels: [usize; FACTOR_COUNT],
    pub value: f64,
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

const CF_TOLERANCE: f64 = 1e-10;
const CF_MAX_ITER: usize = 500;
const TINY: f64 = 1e-300;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Upper tail `P(F > f)` of the F distribution with `(d1, d2)` degrees of
/// freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorRange {
    pub factor: Factor,
    pub sums: Vec<f64>,
    pub counts: Vec<usize>,
    /// NaN for levels without observations.
    pub means: Vec<f64>,
    pub range: f64,
    /// 1 for the largest range.
    pub rank: usize,
}

/// Level sums, means and ranges for every factor.
pub fn range_analysis(obs: &[Observation]) -> Vec<FactorRange> {
    let mut out: Vec<FactorRange> = Factor::ALL
        .iter()
        .map(|&factor| {
            let n = factor.level_count();
            let mut sums = vec![0.0; n];
            let mut counts = vec![0; n];
            for o in obs {
                sums[o.levels[factor.index()]] += o.value;
                counts[o.levels[factor.index()]] += 1;
            }
            let means: Vec<f64> = sums
                .iter()
                .zip(&counts)
                .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
                .collect();
            let present = means.iter().copied().filter(|m| !m.is_nan());
            let (lo, hi) = present.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
            let range = if hi >= lo { hi - lo } else { 0.0 };
            FactorRange {
                factor,
                sums,
                counts,
                means,
                range,
                rank: 0,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[b].range.total_cmp(&out[a].range).then(a.cmp(&b)));
    for (rank, i) in order.into_iter().enumerate() {
        out[i].rank = rank + 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub factor: Factor,
    pub ss: f64,
    pub df: usize,
    pub ms: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anova {
    pub rows: Vec<AnovaRow>,
    pub grand_mean: f64,
    pub ss_total: f64,
    pub df_total: usize,
    pub ss_error: f64,
    pub df_error: usize,
    /// Error variance is zero (or has no degrees of freedom).
    pub degenerate: bool,
}

/// Relative size below which a sum of squares counts as zero.
const SS_EPS: f64 = 1e-12;

/// Main-effects ANOVA without interactions.
pub fn anova(obs: &[Observation]) -> Anova {
    let n = obs.len();
    let grand_mean = if n > 0 {
        obs.iter().map(|o| o.value).sum::<f64>() / n as f64
    } else {
        0.0
    };
    let ss_total: f64 = obs.iter().map(|o| (o.value - grand_mean).powi(2)).sum();
    let magnitude: f64 = obs.iter().map(|o| o.value * o.value).sum::<f64>().max(f64::MIN_POSITIVE);
    let constant = ss_total <= SS_EPS * SS_EPS * magnitude;

    let ranges = range_analysis(obs);
    let mut rows: Vec<AnovaRow> = ranges
        .iter()
        .map(|r| {
            let ss = r
                .means
                .iter()
                .zip(&r.counts)
                .filter(|(_, &c)| c > 0)
                .map(|(&m, &c)| c as f64 * (m - grand_mean).powi(2))
                .sum::<f64>();
            let df = r.counts.iter().filter(|&&c| c > 0).count().saturating_sub(1);
            AnovaRow {
                factor: r.factor,
                ss,
                df,
                ms: 0.0,
                f: 0.0,
                p: 1.0,
            }
        })
        .collect();
    let df_total = n.saturating_sub(1);
    let df_factors: usize = rows.iter().map(|r| r.df).sum();
    let df_error = df_total.saturating_sub(df_factors);
    // Not clamped: with confounded columns the marginal sums of squares can
    // exceed the total, and the negative remainder is reported as is.
    let ss_error = ss_total - rows.iter().map(|r| r.ss).sum::<f64>();
    let degenerate = !constant && (df_error == 0 || ss_error <= SS_EPS * ss_total);
    if degenerate {
        warn!("ANOVA error sum of squares {ss_error:.6e} with df {df_error} leaves no error variance; F reported as infinite");
    }
    let ms_error = if df_error > 0 { ss_error / df_error as f64 } else { 0.0 };
    for r in &mut rows {
        r.ms = if r.df > 0 { r.ss / r.df as f64 } else { 0.0 };
        if constant || r.df == 0 || r.ss <= SS_EPS * ss_total {
            r.f = 0.0;
            r.p = 1.0;
        } else if degenerate {
            r.f = f64::INFINITY;
            r.p = 0.0;
        } else {
            r.f = r.ms / ms_error;
            r.p = f_survival(r.f, r.df as f64, df_error as f64);
        }
    }
    Anova {
        rows,
        grand_mean,
        ss_total,
        df_total,
        ss_error,
        df_error,
        degenerate,
    }
}

/// `**` below 0.01, `*` below 0.05.
pub fn significance(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::design::build_l18_design;
    use proptest::prelude::*;

    fn simpson_f_tail(f: f64, d1: f64, d2: f64) -> f64 {
        // P(F > f) = 1 - integral_0^f density; substitute x = f·u^2 near zero
        let lnb = ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0);
        let density = |x: f64| {
            // finite limit at zero for d1 = 2
            let x = x.max(1e-300);
            ((d1 / 2.0) * (d1 * x).ln() + (d2 / 2.0) * d2.ln() - ((d1 + d2) / 2.0) * (d1 * x + d2).ln()
                - x.ln()
                - lnb)
                .exp()
        };
        let n = 200_000;
        let h = f / n as f64;
        let mut s = density(0.0) + density(f);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * density(k as f64 * h);
        }
        1.0 - s * h / 3.0
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1-x)^b ; I_x(a, 1) = x^a
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.99] {
            assert!((regularized_incomplete_beta(1.0, 3.0, x) - (1.0 - (1.0 - x).powi(3))).abs() < 1e-12);
            assert!((regularized_incomplete_beta(2.5, 1.0, x) - x.powf(2.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn f_tail_reference_point() {
        let p = f_survival(4.26, 2.0, 9.0);
        assert!((p - 0.050).abs() <= 0.002, "{p}");
        // df1 = 2 has a closed form: (1 + 2f/d2)^(-d2/2)
        let exact = (1.0f64 + 2.0 * 4.26 / 9.0).powf(-4.5);
        assert!((p - exact).abs() < 1e-10);
    }

    #[test]
    fn f_tail_matches_quadrature() {
        for &(f, d1, d2) in &[(1.3, 5.0, 18.0), (3.1, 2.0, 18.0), (0.4, 3.0, 7.0), (7.5, 4.0, 30.0)] {
            let a = f_survival(f, d1, d2);
            let b = simpson_f_tail(f, d1, d2);
            assert!((a - b).abs() < 1e-6, "F={f}: {a} vs {b}");
        }
    }

    fn l18_obs(values: &[f64]) -> Vec<Observation> {
        let d = build_l18_design();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Observation {
                levels: d[i % 18].levels,
                value: v,
            })
            .collect()
    }

    #[test]
    fn level_index_fixture() {
        let d = build_l18_design();
        let obs: Vec<Observation> = (0..36)
            .map(|i| {
                let levels = d[i % 18].levels;
                Observation {
                    levels,
                    value: levels[0] as f64,
                }
            })
            .collect();
        let r = range_analysis(&obs);
        assert_eq!(r[0].range, 2.0);
        assert_eq!(r[0].rank, 1);
        assert_eq!(r[0].sums, vec![0.0, 12.0, 24.0]);
        // the table pairs threshold with style and volume in only six of
        // nine combinations, so those two inherit a spurious range
        assert_eq!(r[1].means, vec![1.0, 0.5, 1.5]);
        assert_eq!(r[2].means, vec![0.5, 1.5, 1.0]);
        assert!(r[3..].iter().all(|x| x.range == 0.0));
    }

    #[test]
    fn constant_indicator() {
        let obs = l18_obs(&[3.0; 36]);
        assert!(range_analysis(&obs).iter().all(|r| r.range == 0.0));
        let a = anova(&obs);
        assert!(a.rows.iter().all(|r| r.f == 0.0 && r.p == 1.0));
        assert!(!a.degenerate);
        assert_eq!(a.df_error, 18);
    }

    #[test]
    fn zero_residual_is_degenerate() {
        // MPR is balanced against every other column, so a pure MPR effect
        // leaves nothing for the other factors or the error term
        let d = build_l18_design();
        let obs: Vec<Observation> = (0..36)
            .map(|i| {
                let l = d[i % 18].levels;
                Observation {
                    levels: l,
                    value: 10.0 * l[6] as f64,
                }
            })
            .collect();
        let a = anova(&obs);
        assert!(a.degenerate);
        assert_eq!(a.rows[6].f, f64::INFINITY);
        assert_eq!(a.rows[6].p, 0.0);
        assert!(a.rows[..6].iter().all(|r| r.p == 1.0));
    }

    #[test]
    fn confounded_columns_can_drive_error_negative() {
        let d = build_l18_design();
        let obs: Vec<Observation> = (0..36)
            .map(|i| {
                let l = d[i % 18].levels;
                Observation {
                    levels: l,
                    value: l[0] as f64,
                }
            })
            .collect();
        let a = anova(&obs);
        assert!(a.ss_error < 0.0);
        assert!(a.degenerate);
        let parts: f64 = a.rows.iter().map(|r| r.ss).sum::<f64>() + a.ss_error;
        assert!((parts - a.ss_total).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn decomposition_and_invariance(
            values in prop::collection::vec(0.0f64..100.0, 36),
            shift in -50.0f64..50.0,
            scale in 0.1f64..20.0,
        ) {
            let a = anova(&l18_obs(&values));
            let parts: f64 = a.rows.iter().map(|r| r.ss).sum::<f64>() + a.ss_error;
            prop_assert!((parts - a.ss_total).abs() <= 1e-9 * a.ss_total.max(1e-12));
            let moved: Vec<f64> = values.iter().map(|v| v * scale + shift).collect();
            let b = anova(&l18_obs(&moved));
            for (x, y) in a.rows.iter().zip(&b.rows) {
                prop_assert!((x.p - y.p).abs() < 1e-7, "{} vs {}", x.p, y.p);
            }
        }
    }
}
