//! Benchmark response surfaces with qualitative inputs.
//!
//! Each problem is addressable by name through [`BenchmarkProblem::by_name`]:
//! `mathfn1`, `mathfn2`, `bending`, `borehole`, `otl`, `piston`,
//! `borehole12`, `fn17:<J>` and `fn18`. Evaluation takes native units.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{InputSchema, MixedPoint, QualFactor, QuantInput};
use crate::error::{Error, Result};
use crate::seeds;

/// Second-term coefficients of the five levels of the first math function.
pub const MATH_FN1_COEFFS: [f64; 5] = [1.0, 13.0, 1.5, 9.0, 4.5];

/// Normalized moments of inertia of the six beam cross-sections
/// (circular, square, I-shape, hollow square, hollow circular, H-shape).
pub const BEAM_INERTIA: [f64; 6] = [PI / 64.0, 1.0 / 12.0, 0.0449, 0.0633, 0.0373, 0.0167];
pub const BEAM_SHAPES: [&str; 6] = ["circular", "square", "I-shape", "hollow-square", "hollow-circular", "H-shape"];

pub const BOREHOLE_RW: [f64; 3] = [0.05, 0.10, 0.15];
pub const BOREHOLE_HL: [f64; 4] = [700.0, 740.0, 780.0, 820.0];
/// `(name, lower, upper)` for the quantitative borehole inputs.
pub const BOREHOLE_RANGES: [(&str, f64, f64); 6] = [
    ("T_u", 63070.0, 115600.0),
    ("r", 100.0, 50000.0),
    ("H_u", 990.0, 1110.0),
    ("T_l", 63.1, 116.0),
    ("L", 1120.0, 1680.0),
    ("K_w", 9855.0, 12045.0),
];

pub const OTL_RF: [f64; 4] = [0.5, 1.2, 2.1, 2.9];
pub const OTL_B: [f64; 6] = [50.0, 100.0, 150.0, 200.0, 250.0, 300.0];
pub const OTL_RANGES: [(&str, f64, f64); 4] =
    [("R_b1", 50.0, 150.0), ("R_b2", 25.0, 70.0), ("R_c1", 1.2, 2.5), ("R_c2", 0.25, 1.20)];

pub const PISTON_P0: [f64; 3] = [9000.0, 10000.0, 11000.0];
pub const PISTON_K: [f64; 5] = [1000.0, 2000.0, 3000.0, 4000.0, 5000.0];
pub const PISTON_RANGES: [(&str, f64, f64); 5] = [
    ("M", 30.0, 60.0),
    ("S", 0.005, 0.020),
    ("V_0", 0.002, 0.010),
    ("T_a", 290.0, 296.0),
    ("T_0", 340.0, 360.0),
];

fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::OutOfDomain(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

fn check_level(name: &str, t: usize, m: usize) -> Result<()> {
    if (1..=m).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfDomain(format!("{name} level {t} outside 1..={m}")))
    }
}

fn check_ranges(x: &[f64], ranges: &[(&str, f64, f64)]) -> Result<()> {
    if x.len() != ranges.len() {
        return Err(Error::LengthMismatch { expected: ranges.len(), got: x.len() });
    }
    for (v, (name, lo, hi)) in x.iter().zip(ranges) {
        check_range(name, *v, *lo, *hi)?;
    }
    Ok(())
}

/// `7 sin(2 pi x1 - pi) + c sin(2 pi x2 - pi)`.
fn sine_pair(x1: f64, x2: f64, c: f64) -> f64 {
    7.0 * (2.0 * PI * x1 - PI).sin() + c * (2.0 * PI * x2 - PI).sin()
}

/// First math function: two inputs on `[0, 1]`, one five-level factor.
pub fn math_fn1(x1: f64, x2: f64, t: usize) -> Result<f64> {
    check_range("x1", x1, 0.0, 1.0)?;
    check_range("x2", x2, 0.0, 1.0)?;
    check_level("t", t, 5)?;
    Ok(sine_pair(x1, x2, MATH_FN1_COEFFS[t - 1]))
}

/// Second math function: five inputs on `[-100, 100]`, five three-level factors.
pub fn math_fn2(x: &[f64], t: &[usize]) -> Result<f64> {
    if x.len() != 5 || t.len() != 5 {
        return Err(Error::LengthMismatch { expected: 5, got: if x.len() != 5 { x.len() } else { t.len() } });
    }
    for (i, v) in x.iter().enumerate() {
        check_range(&format!("x{}", i + 1), *v, -100.0, 100.0)?;
    }
    for (j, l) in t.iter().enumerate() {
        check_level(&format!("t{}", j + 1), *l, 3)?;
    }
    let mut sum = 0.0;
    let mut prod = 1.0;
    for i in 1..=5 {
        let xi = x[i - 1];
        let c = t[5 - i] as f64 - 2.0;
        let s = (i as f64).sqrt();
        sum += xi * c / 80.0;
        prod *= (xi / s).cos() * (50.0 * c / s).sin();
    }
    Ok(sum + prod)
}

/// Tip deflection of a cantilever: `L^3 / (3e9 h^4 I(shape))`.
pub fn beam_deflection(l: f64, h: f64, shape: usize) -> Result<f64> {
    check_range("L", l, 10.0, 20.0)?;
    check_range("h", h, 1.0, 2.0)?;
    check_level("shape", shape, 6)?;
    Ok(l.powi(3) / (3e9 * h.powi(4) * BEAM_INERTIA[shape - 1]))
}

/// All eight borehole variables in native units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoreholeVars {
    pub t_u: f64,
    pub r: f64,
    pub r_w: f64,
    pub h_u: f64,
    pub t_l: f64,
    pub h_l: f64,
    pub l: f64,
    pub k_w: f64,
}

/// Water flow through a borehole. No range checks beyond `r / r_w > 1`.
pub fn borehole_formula(v: &BoreholeVars) -> Result<f64> {
    if !(v.r > 0.0 && v.r_w > 0.0 && v.r / v.r_w > 1.0) {
        return Err(Error::OutOfDomain(format!("r / r_w = {} must exceed 1", v.r / v.r_w)));
    }
    let lg = (v.r / v.r_w).ln();
    Ok(2.0 * PI * v.t_u * (v.h_u - v.h_l)
        / (lg * (1.0 + 2.0 * v.l * v.t_u / (lg * v.r_w * v.r_w * v.k_w) + v.t_u / v.t_l)))
}

fn borehole_vars(x: &[f64], r_w: f64, h_l: f64) -> BoreholeVars {
    BoreholeVars { t_u: x[0], r: x[1], r_w, h_u: x[2], t_l: x[3], h_l, l: x[4], k_w: x[5] }
}

/// Borehole with `x = (T_u, r, H_u, T_l, L, K_w)` and level indices for `r_w` and `H_l`.
pub fn borehole(x: &[f64], r_w_level: usize, h_l_level: usize) -> Result<f64> {
    check_ranges(x, &BOREHOLE_RANGES)?;
    check_level("r_w", r_w_level, 3)?;
    check_level("H_l", h_l_level, 4)?;
    borehole_formula(&borehole_vars(x, BOREHOLE_RW[r_w_level - 1], BOREHOLE_HL[h_l_level - 1]))
}

/// `(r_w, H_l)` behind level `t` of the twelve-level borehole factor.
pub fn borehole12_level(t: usize) -> Result<(f64, f64)> {
    check_level("t", t, 12)?;
    Ok((BOREHOLE_RW[(t - 1) / 4], BOREHOLE_HL[(t - 1) % 4]))
}

/// Borehole with one twelve-level factor combining `r_w` and `H_l`.
pub fn borehole12(x: &[f64], t: usize) -> Result<f64> {
    check_level("t", t, 12)?;
    borehole(x, (t - 1) / 4 + 1, (t - 1) % 4 + 1)
}

/// Midpoint voltage of an OTL push-pull circuit, `x = (R_b1, R_b2, R_c1, R_c2)`.
pub fn otl(x: &[f64], r_f_level: usize, b_level: usize) -> Result<f64> {
    check_ranges(x, &OTL_RANGES)?;
    check_level("R_f", r_f_level, 4)?;
    check_level("B", b_level, 6)?;
    let (rb1, rb2, rc1, rc2) = (x[0], x[1], x[2], x[3]);
    let rf = OTL_RF[r_f_level - 1];
    let b = OTL_B[b_level - 1];
    let vb1 = 12.0 * rb2 / (rb1 + rb2);
    let denom = b * (rc2 + 9.0) + rf;
    Ok(b * (vb1 + 0.74) * (rc2 + 9.0) / denom + 11.35 * rf / denom + 0.74 * b * rf / rc1 * (rc2 + 9.0) / denom)
}

/// Piston cycle time, `x = (M, S, V_0, T_a, T_0)`.
pub fn piston(x: &[f64], p0_level: usize, k_level: usize) -> Result<f64> {
    check_ranges(x, &PISTON_RANGES)?;
    check_level("P_0", p0_level, 3)?;
    check_level("k", k_level, 5)?;
    let (m, s, v0, ta, t0) = (x[0], x[1], x[2], x[3], x[4]);
    let p0 = PISTON_P0[p0_level - 1];
    let k = PISTON_K[k_level - 1];
    let v = piston_volume(m, s, v0, k, p0, ta, t0);
    if !(v > 0.0) {
        return Err(Error::OutOfDomain(format!("piston volume {v} is not positive")));
    }
    Ok(2.0 * PI * (m / (k + s * s * p0 * v0 * ta / (t0 * v * v))).sqrt())
}

/// The intermediate gas volume `V` of the piston model.
pub fn piston_volume(m: f64, s: f64, v0: f64, k: f64, p0: f64, ta: f64, t0: f64) -> f64 {
    let a = p0 * s + 19.62 * m - k * v0 / s;
    s / (2.0 * k) * ((a * a + 4.0 * k * p0 * v0 * ta / t0).sqrt() - a)
}

/// Explicit numerical variables behind the levels of a single five-level factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnderlyingVars {
    /// `values[t - 1][j]` is `v_{j+1}(t)`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

impl UnderlyingVars {
    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn level(&self, t: usize) -> &[f64] {
        &self.values[t - 1]
    }
}

/// Target values of `J^{-1/2} sum_j v_j(t)` for the dimension study.
pub const FN17_TARGETS: [f64; 5] = MATH_FN1_COEFFS;

/// Underlying variables for the dimension study: `v(t) = A [target(t), u_2(t), ..., u_J(t)]`
/// with `u ~ U[0, 10]` and `A` an orthonormal basis whose first column is `J^{-1/2} 1`.
pub fn make_fn17(j: usize, seed: u64) -> Result<UnderlyingVars> {
    if j < 1 {
        return Err(Error::Config("fn17 needs J >= 1".into()));
    }
    let mut rng = seeds::rng(seed);
    let jf = j as f64;
    let basis = |row: usize, col: usize| -> f64 {
        if col == 0 {
            1.0 / jf.sqrt()
        } else {
            let e = if row == col { jf } else { 0.0 };
            (e - 1.0) / (jf.sqrt() * (jf - 1.0).sqrt())
        }
    };
    let values = FN17_TARGETS
        .iter()
        .map(|&target| {
            let mut coef = vec![target];
            coef.extend((1..j).map(|_| rng.random_range(0.0..=10.0)));
            (0..j).map(|row| (0..j).map(|col| basis(row, col) * coef[col]).sum()).collect()
        })
        .collect();
    Ok(UnderlyingVars { values, seed })
}

/// Dimension-study response for `x` in `[0, 1]^2` and underlying values `v`.
pub fn fn17_response(x1: f64, x2: f64, v: &[f64]) -> f64 {
    let c = v.iter().sum::<f64>() / (v.len() as f64).sqrt();
    sine_pair(x1, x2, c)
}

/// Ten underlying variables per level, i.i.d. `U[-50, 50]`.
pub fn make_fn18(seed: u64) -> UnderlyingVars {
    let mut rng = seeds::rng(seed);
    let values = (0..5).map(|_| (0..10).map(|_| rng.random_range(-50.0..=50.0)).collect()).collect();
    UnderlyingVars { values, seed }
}

/// Ten-dimensional response with `x` in `[-100, 100]^10` and `v` in `[-50, 50]^10`.
pub fn fn18_response(x: &[f64], v: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut prod = 1.0;
    for i in 1..=10 {
        let xi = x[i - 1];
        let vi = v[10 - i];
        let s = (i as f64).sqrt();
        sum += xi * vi / 4000.0;
        prod *= (xi / s).cos() * (vi / s).sin();
    }
    sum + prod
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    MathFn1,
    MathFn2,
    Bending,
    Borehole,
    Otl,
    Piston,
    Borehole12,
    Fn17(UnderlyingVars),
    Fn18(UnderlyingVars),
}

/// A named benchmark: its schema, response function and reference sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkProblem {
    name: String,
    schema: InputSchema,
    kind: Kind,
    recommended_n: usize,
    reference_n_test: usize,
}

fn quant(ranges: &[(&str, f64, f64)]) -> Vec<QuantInput> {
    ranges.iter().map(|(n, lo, hi)| QuantInput::new(*n, *lo, *hi)).collect()
}

fn labels(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

fn unit_inputs(p: usize, lo: f64, hi: f64) -> Vec<QuantInput> {
    (1..=p).map(|i| QuantInput::new(format!("x{i}"), lo, hi)).collect()
}

impl BenchmarkProblem {
    pub const NAMES: [&'static str; 9] =
        ["mathfn1", "mathfn2", "bending", "borehole", "otl", "piston", "borehole12", "fn17:<J>", "fn18"];

    /// Looks a problem up by name. `seed` only matters for problems with
    /// randomly drawn underlying variables (`fn17:<J>`, `fn18`).
    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        let (schema, kind, n) = match name {
            "mathfn1" => (
                InputSchema::new(unit_inputs(2, 0.0, 1.0), vec![QualFactor::unlabeled("t", 5)])?,
                Kind::MathFn1,
                70,
            ),
            "mathfn2" => (
                InputSchema::new(
                    unit_inputs(5, -100.0, 100.0),
                    (1..=5).map(|j| QualFactor::unlabeled(format!("t{j}"), 3)).collect(),
                )?,
                Kind::MathFn2,
                100,
            ),
            "bending" => (
                InputSchema::new(
                    vec![QuantInput::new("L", 10.0, 20.0), QuantInput::new("h", 1.0, 2.0)],
                    vec![QualFactor::new("shape", BEAM_SHAPES)],
                )?,
                Kind::Bending,
                60,
            ),
            "borehole" => (
                InputSchema::new(
                    quant(&BOREHOLE_RANGES),
                    vec![QualFactor::new("r_w", labels(&BOREHOLE_RW)), QualFactor::new("H_l", labels(&BOREHOLE_HL))],
                )?,
                Kind::Borehole,
                80,
            ),
            "otl" => (
                InputSchema::new(
                    quant(&OTL_RANGES),
                    vec![QualFactor::new("R_f", labels(&OTL_RF)), QualFactor::new("B", labels(&OTL_B))],
                )?,
                Kind::Otl,
                60,
            ),
            "piston" => (
                InputSchema::new(
                    quant(&PISTON_RANGES),
                    vec![QualFactor::new("P_0", labels(&PISTON_P0)), QualFactor::new("k", labels(&PISTON_K))],
                )?,
                Kind::Piston,
                100,
            ),
            "borehole12" => {
                let names: Vec<String> = (1..=12)
                    .map(|t| {
                        let (rw, hl) = borehole12_level(t).expect("valid level");
                        format!("{rw}/{hl}")
                    })
                    .collect();
                (
                    InputSchema::new(quant(&BOREHOLE_RANGES), vec![QualFactor::new("t", names)])?,
                    Kind::Borehole12,
                    100,
                )
            }
            "fn18" => (
                InputSchema::new(unit_inputs(10, -100.0, 100.0), vec![QualFactor::unlabeled("t", 5)])?,
                Kind::Fn18(make_fn18(seed)),
                100,
            ),
            other => match other.strip_prefix("fn17:").map(str::parse::<usize>) {
                Some(Ok(j)) if j >= 1 => (
                    InputSchema::new(unit_inputs(2, 0.0, 1.0), vec![QualFactor::unlabeled("t", 5)])?,
                    Kind::Fn17(make_fn17(j, seed)?),
                    70,
                ),
                _ => return Err(Error::UnknownProblem(name.to_string())),
            },
        };
        Ok(Self { name: name.to_string(), schema, kind, recommended_n: n, reference_n_test: 10_000 })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &InputSchema {
        &self.schema
    }

    /// Training size used for this problem in the reference study.
    pub fn recommended_n(&self) -> usize {
        self.recommended_n
    }

    pub fn reference_n_test(&self) -> usize {
        self.reference_n_test
    }

    pub fn underlying(&self) -> Option<&UnderlyingVars> {
        match &self.kind {
            Kind::Fn17(u) | Kind::Fn18(u) => Some(u),
            _ => None,
        }
    }

    /// The response at `w` in native units.
    pub fn evaluate(&self, w: &MixedPoint) -> Result<f64> {
        let v = self.schema.validate(w);
        if !v.is_empty() {
            return Err(Error::OutOfDomain(
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ));
        }
        let (x, t) = (&w.x, &w.t);
        match &self.kind {
            Kind::MathFn1 => math_fn1(x[0], x[1], t[0]),
            Kind::MathFn2 => math_fn2(x, t),
            Kind::Bending => beam_deflection(x[0], x[1], t[0]),
            Kind::Borehole => borehole(x, t[0], t[1]),
            Kind::Otl => otl(x, t[0], t[1]),
            Kind::Piston => piston(x, t[0], t[1]),
            Kind::Borehole12 => borehole12(x, t[0]),
            Kind::Fn17(u) => Ok(fn17_response(x[0], x[1], u.level(t[0]))),
            Kind::Fn18(u) => Ok(fn18_response(x, u.level(t[0]))),
        }
    }

    pub fn evaluate_batch(&self, ws: &[MixedPoint]) -> Result<Vec<f64>> {
        ws.iter().map(|w| self.evaluate(w)).collect()
    }

    /// The all-numeric reformulation that replaces the factor by its
    /// underlying variables, for problems that have them.
    pub fn numeric_view(&self) -> Option<NumericView> {
        let (u, v_range) = match &self.kind {
            Kind::Fn17(u) => (u, None),
            Kind::Fn18(u) => (u, Some((-50.0, 50.0))),
            _ => return None,
        };
        let mut quantitative = self.schema.quantitative.clone();
        for j in 0..u.dim() {
            let (lo, hi) = v_range.unwrap_or_else(|| {
                let col = u.values.iter().map(|row| row[j]);
                let lo = col.clone().fold(f64::INFINITY, f64::min);
                let hi = col.fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo - 0.5, hi + 0.5)
                }
            });
            quantitative.push(QuantInput::new(format!("v{}", j + 1), lo, hi));
        }
        let schema = InputSchema::new(quantitative, Vec::new()).expect("ranges are ordered");
        Some(NumericView { schema, vars: u.clone() })
    }
}

/// Maps mixed points `(x, t)` to all-numeric points `(x, v(t))`.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericView {
    schema: InputSchema,
    vars: UnderlyingVars,
}

impl NumericView {
    pub fn schema(&self) -> &InputSchema {
        &self.schema
    }

    pub fn map_point(&self, w: &MixedPoint) -> Result<MixedPoint> {
        let [t] = w.t[..] else {
            return Err(Error::LengthMismatch { expected: 1, got: w.t.len() });
        };
        check_level("t", t, self.vars.values.len())?;
        let mut x = w.x.clone();
        x.extend_from_slice(self.vars.level(t));
        Ok(MixedPoint::new(x, Vec::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn math_fn1_values() {
        for t in 1..=5 {
            assert!(math_fn1(0.5, 0.5, t).unwrap().abs() < 1e-12);
        }
        assert_relative_eq!(math_fn1(0.25, 0.75, 2).unwrap(), 6.0, epsilon = 1e-12);
        assert!(matches!(math_fn1(1.1, 0.5, 1), Err(Error::OutOfDomain(_))));
        assert!(math_fn1(0.5, 0.5, 6).is_err());
    }

    #[test]
    fn math_fn2_values() {
        let zero = [0.0; 5];
        assert_eq!(math_fn2(&zero, &[2; 5]).unwrap(), 0.0);
        let lo = math_fn2(&zero, &[1; 5]).unwrap();
        let hi = math_fn2(&zero, &[3; 5]).unwrap();
        assert_relative_eq!(lo, -hi, max_relative = 1e-14);
        let oracle: f64 = (1..=5).map(|i| (50.0 / (i as f64).sqrt()).sin()).product();
        assert_relative_eq!(hi, oracle, max_relative = 1e-14);
        // t_5 pairs with x_1: only the linear term survives when the product vanishes.
        let y = math_fn2(&[80.0, 0.0, 0.0, 0.0, 0.0], &[2, 2, 2, 2, 3]).unwrap();
        assert_relative_eq!(y, 1.0, max_relative = 1e-14);
        assert!(math_fn2(&[101.0, 0.0, 0.0, 0.0, 0.0], &[2; 5]).is_err());
    }

    #[test]
    fn beam_values() {
        assert_relative_eq!(BEAM_INERTIA[0], 0.0491, epsilon = 5e-5);
        assert_relative_eq!(BEAM_INERTIA[1], 0.0833, epsilon = 5e-5);
        assert_eq!(BEAM_INERTIA[2..], [0.0449, 0.0633, 0.0373, 0.0167]);
        let y = beam_deflection(10.0, 1.0, 1).unwrap();
        assert_relative_eq!(y, 1000.0 / (3e9 * PI / 64.0), max_relative = 1e-14);
        assert_relative_eq!(y, 6.791e-6, max_relative = 1e-3);
        assert_relative_eq!(beam_deflection(15.0, 1.0, 3).unwrap() / beam_deflection(15.0, 2.0, 3).unwrap(), 16.0, max_relative = 1e-14);
        let inv: Vec<f64> = BEAM_INERTIA.iter().map(|i| 1.0 / i).collect();
        let mut order: Vec<usize> = (1..=6).collect();
        order.sort_by(|a, b| inv[b - 1].total_cmp(&inv[a - 1]));
        assert_eq!(order, vec![6, 5, 3, 1, 4, 2]);
    }

    fn mid(ranges: &[(&str, f64, f64)]) -> Vec<f64> {
        ranges.iter().map(|(_, lo, hi)| 0.5 * (lo + hi)).collect()
    }

    #[test]
    fn borehole_values() {
        let x = mid(&BOREHOLE_RANGES);
        let y = borehole(&x, 2, 2).unwrap();
        let (tu, r, hu, tl, l, kw) = (x[0], x[1], x[2], x[3], x[4], x[5]);
        let (rw, hl) = (0.10, 740.0);
        let lg = (r / rw).ln();
        let oracle = 2.0 * PI * tu * (hu - hl) / (lg * (1.0 + 2.0 * l * tu / (lg * rw * rw * kw) + tu / tl));
        assert_relative_eq!(y, oracle, max_relative = 1e-14);
        let zero = borehole_formula(&BoreholeVars { t_u: tu, r, r_w: rw, h_u: 800.0, t_l: tl, h_l: 800.0, l, k_w: kw });
        assert_eq!(zero.unwrap(), 0.0);
        for rw_level in 1..=3 {
            let ys: Vec<f64> = (1..=4).map(|h| borehole(&x, rw_level, h).unwrap()).collect();
            assert!(ys.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn borehole12_table() {
        assert_eq!(borehole12_level(1).unwrap(), (0.05, 700.0));
        assert_eq!(borehole12_level(12).unwrap(), (0.15, 820.0));
        let pairs: std::collections::HashSet<(u64, u64)> =
            (1..=12).map(|t| borehole12_level(t).unwrap()).map(|(a, b)| (a.to_bits(), b.to_bits())).collect();
        assert_eq!(pairs.len(), 12);
        let x = mid(&BOREHOLE_RANGES);
        assert_eq!(borehole12(&x, 6).unwrap(), borehole(&x, 2, 2).unwrap());
        assert!(borehole12(&x, 13).is_err());
    }

    #[test]
    fn otl_values() {
        let x = mid(&OTL_RANGES);
        let y = otl(&x, 2, 3).unwrap();
        let (rb1, rb2, rc1, rc2, rf, b) = (x[0], x[1], x[2], x[3], 1.2, 150.0);
        let vb1 = 12.0 * rb2 / (rb1 + rb2);
        let oracle = b * (vb1 + 0.74) * (rc2 + 9.0) / (b * (rc2 + 9.0) + rf)
            + 11.35 * rf / (b * (rc2 + 9.0) + rf)
            + 0.74 * b * (rf / rc1) * ((rc2 + 9.0) / (b * (rc2 + 9.0) + rf));
        assert_relative_eq!(y, oracle, max_relative = 1e-13);
        assert_relative_eq!(12.0 * 60.0 / (60.0 + 60.0), 6.0);
        for a in [50.0, 100.0, 150.0] {
            for b2 in [25.0, 70.0] {
                for c1 in [1.2, 2.5] {
                    for c2 in [0.25, 1.2] {
                        for rf in 1..=4 {
                            for bl in 1..=6 {
                                assert!(otl(&[a, b2, c1, c2], rf, bl).unwrap() > 0.0);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn piston_values() {
        let x = mid(&PISTON_RANGES);
        let y = piston(&x, 2, 3).unwrap();
        let (m, s, v0, ta, t0, p0, k) = (x[0], x[1], x[2], x[3], x[4], 10000.0, 3000.0);
        let a = p0 * s + 19.62 * m - k * v0 / s;
        let v = s / (2.0 * k) * ((a * a + 4.0 * k * p0 * v0 * ta / t0).sqrt() - a);
        let oracle = 2.0 * PI * (m / (k + s * s * p0 * v0 * ta / (t0 * v * v))).sqrt();
        assert_relative_eq!(y, oracle, max_relative = 1e-14);
        let grid = |lo: f64, hi: f64| [lo, 0.5 * (lo + hi), hi];
        for m in grid(30.0, 60.0) {
            for s in grid(0.005, 0.020) {
                for v0 in grid(0.002, 0.010) {
                    for (pi, p0) in PISTON_P0.iter().enumerate() {
                        for (ki, k) in PISTON_K.iter().enumerate() {
                            assert!(piston_volume(m, s, v0, *k, *p0, 293.0, 350.0) > 0.0);
                            assert!(piston(&[m, s, v0, 293.0, 350.0], pi + 1, ki + 1).unwrap() > 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fn17_construction() {
        for j in [1, 2, 3, 5, 10] {
            let u = make_fn17(j, 17).unwrap();
            assert_eq!(u.dim(), j);
            for (t, target) in FN17_TARGETS.iter().enumerate() {
                let c = u.level(t + 1).iter().sum::<f64>() / (j as f64).sqrt();
                assert!((c - target).abs() < 1e-12, "J={j} t={}: {c}", t + 1);
            }
        }
        assert_eq!(make_fn17(1, 3).unwrap().values, FN17_TARGETS.iter().map(|v| vec![*v]).collect::<Vec<_>>());
        assert!(make_fn17(0, 1).is_err());
        let p = BenchmarkProblem::by_name("fn17:1", 5).unwrap();
        let m1 = BenchmarkProblem::by_name("mathfn1", 0).unwrap();
        for t in 1..=5 {
            let w = MixedPoint::new(vec![0.3, 0.8], vec![t]);
            assert_eq!(p.evaluate(&w).unwrap(), m1.evaluate(&w).unwrap());
        }
        // Responses depend on the draw only through the level targets.
        let a = BenchmarkProblem::by_name("fn17:5", 1).unwrap();
        let b = BenchmarkProblem::by_name("fn17:5", 2).unwrap();
        let w = MixedPoint::new(vec![0.3, 0.8], vec![4]);
        assert_relative_eq!(a.evaluate(&w).unwrap(), b.evaluate(&w).unwrap(), max_relative = 1e-12);
        assert_ne!(a.underlying(), b.underlying());
    }

    #[test]
    fn fn18_construction() {
        let u = make_fn18(4);
        assert_eq!(u, make_fn18(4));
        assert_ne!(u, make_fn18(5));
        assert_eq!(u.values.len(), 5);
        assert!(u.values.iter().flatten().all(|v| (-50.0..=50.0).contains(v)));
        let x: Vec<f64> = (0..10).map(|i| -90.0 + 17.0 * i as f64).collect();
        assert_eq!(fn18_response(&x, &[0.0; 10]), 0.0);
    }

    #[test]
    fn problems_by_name() {
        for name in ["mathfn1", "mathfn2", "bending", "borehole", "otl", "piston", "borehole12", "fn17:3", "fn18"] {
            let p = BenchmarkProblem::by_name(name, 1).unwrap();
            let center = MixedPoint::new(
                p.schema().quantitative.iter().map(|q| 0.5 * (q.lower + q.upper)).collect(),
                vec![1; p.schema().q()],
            );
            let y = p.evaluate(&center).unwrap();
            assert!(y.is_finite());
            assert_eq!(y.to_bits(), p.evaluate(&center).unwrap().to_bits());
        }
        assert!(matches!(BenchmarkProblem::by_name("nope", 0), Err(Error::UnknownProblem(_))));
        assert!(BenchmarkProblem::by_name("fn17:0", 0).is_err());
        let b = BenchmarkProblem::by_name("borehole", 0).unwrap();
        assert_eq!(b.schema().qualitative[0].levels, vec!["0.05", "0.1", "0.15"]);
        assert_eq!(b.schema().quantitative[3].lower, 63.1);
        let bend = BenchmarkProblem::by_name("bending", 0).unwrap();
        assert_eq!(bend.schema().levels(), vec![6]);
        assert_eq!(BenchmarkProblem::by_name("otl", 0).unwrap().schema().levels(), vec![4, 6]);
        assert_eq!(BenchmarkProblem::by_name("piston", 0).unwrap().schema().levels(), vec![3, 5]);
    }

    #[test]
    fn numeric_views() {
        let p = BenchmarkProblem::by_name("fn17:3", 8).unwrap();
        let view = p.numeric_view().unwrap();
        assert_eq!(view.schema().p(), 5);
        assert_eq!(view.schema().q(), 0);
        let w = MixedPoint::new(vec![0.2, 0.9], vec![3]);
        let nw = view.map_point(&w).unwrap();
        view.schema().check(&nw).unwrap();
        assert_eq!(fn17_response(nw.x[0], nw.x[1], &nw.x[2..]), p.evaluate(&w).unwrap());
        let f18 = BenchmarkProblem::by_name("fn18", 8).unwrap().numeric_view().unwrap();
        assert_eq!(f18.schema().p(), 20);
        assert!(BenchmarkProblem::by_name("bending", 0).unwrap().numeric_view().is_none());
    }
}
