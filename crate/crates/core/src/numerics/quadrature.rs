//! Globally adaptive Gauss-Kronrod (10/21) quadrature.
//!
//! Semi-infinite integrals are split at `tail_split`; the tail is mapped to
//! `w in (0, 1/2]` through `v = u* (1 - w) / w`. Working in `w` rather than
//! `1 - w` keeps resolution near `v = inf`, which slowly decaying tails need.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{NumericsError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_518_306,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub tail_split: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 2000,
            tail_split: 1e3,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(NumericsError::InvalidSpec("rel_tol must be positive"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(NumericsError::InvalidSpec("abs_tol must be positive"));
        }
        if self.max_subdivisions < 1 {
            return Err(NumericsError::InvalidSpec("max_subdivisions must be >= 1"));
        }
        if !(self.tail_split > 0.0 && self.tail_split.is_finite()) {
            return Err(NumericsError::InvalidSpec("tail_split must be positive"));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Segment {
    Plain,
    Tail,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    seg: Segment,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

struct Problem<'f, F: Fn(f64) -> f64 + ?Sized> {
    f: &'f F,
    split: f64,
}

impl<F: Fn(f64) -> f64 + ?Sized> Problem<'_, F> {
    fn eval(&self, seg: Segment, x: f64) -> Result<f64> {
        let y = match seg {
            Segment::Plain => (self.f)(x),
            Segment::Tail => {
                if x <= 0.0 {
                    return Ok(0.0);
                }
                let v = self.split * (1.0 - x) / x;
                if !v.is_finite() {
                    return Ok(0.0);
                }
                let fv = (self.f)(v);
                if fv == 0.0 {
                    0.0
                } else {
                    let y = fv * (self.split / x) / x;
                    if fv.is_finite() && !y.is_finite() {
                        // f(v) v^2 beyond f64::MAX: decay slower than 1/v
                        return Err(NumericsError::Divergent { estimate: f64::INFINITY });
                    }
                    y
                }
            }
        };
        if y.is_finite() {
            Ok(y)
        } else {
            let at = match seg {
                Segment::Plain => x,
                Segment::Tail => self.split * (1.0 - x) / x,
            };
            Err(NumericsError::NonFiniteEvaluation { at })
        }
    }

    fn rule(&self, seg: Segment, a: f64, b: f64) -> Result<Piece> {
        let centr = 0.5 * (a + b);
        let hlgth = 0.5 * (b - a);
        let fc = self.eval(seg, centr)?;
        let mut resg = 0.0;
        let mut resk = WGK[10] * fc;
        let mut resabs = resk.abs();
        let mut fv1 = [0.0; 10];
        let mut fv2 = [0.0; 10];
        for j in 0..10 {
            let dx = hlgth * XGK[j];
            let f1 = self.eval(seg, centr - dx)?;
            let f2 = self.eval(seg, centr + dx)?;
            fv1[j] = f1;
            fv2[j] = f2;
            resk += WGK[j] * (f1 + f2);
            resabs += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                resg += WG[j / 2] * (f1 + f2);
            }
        }
        let reskh = resk * 0.5;
        let mut resasc = WGK[10] * (fc - reskh).abs();
        for j in 0..10 {
            resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
        }
        let value = resk * hlgth;
        resabs *= hlgth.abs();
        resasc *= hlgth.abs();
        let mut error = ((resk - resg) * hlgth).abs();
        if resasc != 0.0 && error != 0.0 {
            error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            error = error.max(50.0 * f64::EPSILON * resabs);
        }
        Ok(Piece { a, b, value, error, seg })
    }

    fn run(&self, initial: &[(Segment, f64, f64)], spec: &QuadratureSpec, probe: bool) -> Result<Estimate> {
        spec.validate()?;
        let mut heap = BinaryHeap::new();
        for &(seg, a, b) in initial {
            heap.push(self.rule(seg, a, b)?);
        }
        let mut total: f64 = heap.iter().map(|p| p.value).sum();
        let mut err: f64 = heap.iter().map(|p| p.error).sum();
        let mut subdivisions = 0;
        loop {
            let target = spec.abs_tol.max(spec.rel_tol * total.abs());
            if err <= target {
                return Ok(Estimate {
                    value: total,
                    error: err,
                    subdivisions,
                });
            }
            let worst = heap.peek().expect("non-empty heap");
            let mid = 0.5 * (worst.a + worst.b);
            let refinable = mid > worst.a && mid < worst.b && subdivisions < spec.max_subdivisions;
            if !refinable {
                if probe && self.diverges(initial) {
                    return Err(NumericsError::Divergent { estimate: total });
                }
                return Err(NumericsError::ToleranceNotMet {
                    value: total,
                    error: err,
                });
            }
            let worst = heap.pop().expect("non-empty heap");
            let left = self.rule(worst.seg, worst.a, mid)?;
            let right = self.rule(worst.seg, mid, worst.b)?;
            total += left.value + right.value - worst.value;
            err += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
            subdivisions += 1;
            // periodic resummation keeps the running sums honest
            if subdivisions % 64 == 0 {
                total = heap.iter().map(|p| p.value).sum();
                err = heap.iter().map(|p| p.error).sum();
            }
        }
    }

    /// Run after a failed refinement: over successive bands spanning a
    /// factor 2^10 in scale towards either end of the domain, the integral
    /// of a convergent integrand shrinks geometrically.
    fn diverges(&self, initial: &[(Segment, f64, f64)]) -> bool {
        let band_spec = QuadratureSpec {
            rel_tol: 1e-6,
            abs_tol: 1e-300,
            max_subdivisions: 200,
            tail_split: 1.0,
        };
        let f = self.f;
        // integral of f over base + sign * [lo, hi], taken in w = ln(distance)
        let band = |base: f64, sign: f64, lo: f64, hi: f64| -> Option<f64> {
            let g = |w: f64| {
                let d = w.exp();
                f(base + sign * d) * d
            };
            let p: Problem<'_, dyn Fn(f64) -> f64> = Problem { f: &g, split: 1.0 };
            p.run(&[(Segment::Plain, lo.ln(), hi.ln())], &band_spec, false)
                .ok()
                .map(|e| e.value.abs())
        };
        let growing = |bands: Vec<Option<f64>>| {
            let vals: Option<Vec<f64>> = bands.into_iter().collect();
            vals.is_some_and(|v| v.last().is_some_and(|&x| x > 0.0) && v.windows(2).all(|w| w[1] >= 0.9 * w[0]))
        };
        let scale = |j: i32| 2f64.powi(10 * j);
        let a = initial.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let mut plain_hi = f64::NEG_INFINITY;
        let mut has_tail = false;
        for p in initial {
            match p.0 {
                Segment::Plain => plain_hi = plain_hi.max(p.2),
                Segment::Tail => has_tail = true,
            }
        }
        let width = (plain_hi - a).min(1.0);
        if growing(
            (1..5)
                .map(|j| band(a, 1.0, width * scale(-j - 1), width * scale(-j)))
                .collect(),
        ) {
            return true;
        }
        if has_tail {
            growing(
                (1..5)
                    .map(|j| band(0.0, 1.0, self.split * scale(j), self.split * scale(j + 1)))
                    .collect(),
            )
        } else {
            growing(
                (1..5)
                    .map(|j| band(plain_hi, -1.0, width * scale(-j - 1), width * scale(-j)))
                    .collect(),
            )
        }
    }
}

/// Integral of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    if a > b {
        let e = integrate(f, b, a, spec)?;
        return Ok(Estimate { value: -e.value, ..e });
    }
    let p = Problem { f: &f, split: 1.0 };
    p.run(&[(Segment::Plain, a, b)], spec, true)
}

/// Integral of `f` over `(0, inf)`.
pub fn integrate_semiinfinite<F: Fn(f64) -> f64>(f: F, spec: &QuadratureSpec) -> Result<Estimate> {
    let split = spec.tail_split;
    let p = Problem { f: &f, split };
    let mut initial = Vec::new();
    let mut lo = 0.0;
    let mut hi = split.min(1.0);
    while lo < split {
        initial.push((Segment::Plain, lo, hi));
        lo = hi;
        hi = (hi * 10.0).min(split);
    }
    initial.push((Segment::Tail, 0.0, 0.5));
    let est = p.run(&initial, spec, true)?;
    if !est.value.is_finite() {
        return Err(NumericsError::Divergent { estimate: est.value });
    }
    // A divergent tail still "converges" once v reaches f64::MAX, so compare
    // the mass beyond split * 2^60 with the mass beyond split * 2^120.
    let far = |k: i32| {
        let w = 1.0 / (1.0 + 2f64.powi(k));
        p.run(&[(Segment::Tail, 0.0, w)], spec, false)
            .map(|e| e.value.abs())
            .unwrap_or(f64::INFINITY)
    };
    let t1 = far(60);
    if t1 > spec.rel_tol * est.value.abs() + spec.abs_tol && far(120) > 0.5 * t1 {
        return Err(NumericsError::Divergent { estimate: est.value });
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let k: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((k - 2.0).abs() < 1e-14);
        assert!((g - 2.0).abs() < 1e-14);
    }

    #[test]
    fn kronrod_exact_on_high_degree_polynomial() {
        let p = Problem {
            f: &|x: f64| x.powi(30),
            split: 1.0,
        };
        let piece = p.rule(Segment::Plain, -1.0, 1.0).unwrap();
        assert!((piece.value - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_tail() {
        let e = integrate_semiinfinite(|v| (-v).exp(), &QuadratureSpec::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-10, "{e:?}");
    }

    #[test]
    fn singular_at_zero_and_slow_tail() {
        let spec = QuadratureSpec::default();
        let e = integrate_semiinfinite(|v| v.powf(-0.5) / (1.0 + v * v), &spec).unwrap();
        // oracle: v = tan(t) turns this into int_0^{pi/2} tan(t)^{-1/2} sec^2/(sec^2) dt,
        // i.e. int sin^{-1/2} cos^{1/2}; evaluated with a fine midpoint rule after t = w^2
        let n = 2_000_000;
        let h = (std::f64::consts::FRAC_PI_2).sqrt() / n as f64;
        let mut oracle = 0.0;
        for i in 0..n {
            let w = (i as f64 + 0.5) * h;
            let t = w * w;
            oracle += (t.cos() / t.sin()).sqrt() * 2.0 * w * h;
        }
        assert!((oracle - std::f64::consts::PI / 2f64.sqrt()).abs() < 1e-5);
        assert!((e.value - oracle).abs() < 1e-5, "{} vs {}", e.value, oracle);
        assert!((e.value - 2.221_441_469_079_183).abs() < 1e-8);
    }

    #[test]
    fn heavy_tail_resolved_near_infinity() {
        let e = integrate_semiinfinite(|v| (1.0 + v).powf(-1.1), &QuadratureSpec::default()).unwrap();
        assert!((e.value - 10.0).abs() < 1e-6, "{}", e.value);
    }

    #[test]
    fn harmonic_tail_is_divergent() {
        let r = integrate_semiinfinite(|v| 1.0 / (1.0 + v), &QuadratureSpec::default());
        assert!(matches!(r, Err(NumericsError::Divergent { .. })), "{r:?}");
    }

    #[test]
    fn non_finite_is_reported() {
        let r = integrate(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, &QuadratureSpec::default());
        assert!(matches!(r, Err(NumericsError::NonFiniteEvaluation { .. })));
    }

    #[test]
    fn reversed_interval_flips_sign() {
        let s = QuadratureSpec::default();
        let a = integrate(|x| x * x, 0.0, 3.0, &s).unwrap().value;
        let b = integrate(|x| x * x, 3.0, 0.0, &s).unwrap().value;
        assert!((a - 9.0).abs() < 1e-12 && (a + b).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let bad = QuadratureSpec {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
