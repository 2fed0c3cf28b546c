//! Double-double reference evaluation of the profile negative log-likelihood,
//! independent of the library's kernels and factorization.

use std::ops::{Add, Div, Mul, Neg, Sub};

use lvgp::covariance::KernelFamily;
use lvgp::fit::{ParamLayout, SlotKind};
use lvgp::Dataset;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd { hi: 6.931471805599452862e-01, lo: 2.319046813846299558e-17 };
const LN10: Dd = Dd { hi: 2.302585092994045901e+00, lo: -2.170756223382249351e-16 };
pub const E: Dd = Dd { hi: 2.718281828459045091e+00, lo: 1.445646891729250158e-16 };

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn from_pair((hi, lo): (f64, f64)) -> Dd {
        Dd { hi, lo }
    }

    /// Multiplication by an exact power of two.
    fn scale(self, s: f64) -> Dd {
        Dd { hi: self.hi * s, lo: self.lo * s }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let q = Dd::new(self.hi.sqrt());
        let r = self - q * q;
        q + Dd::new(r.hi / (2.0 * q.hi))
    }

    pub fn exp(self) -> Dd {
        if self.hi < -700.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::new(k)).scale(1.0 / 1024.0);
        // e^r - 1 by Taylor series, |r| < 4e-4.
        let mut s = r;
        let mut term = r;
        for i in 2..20 {
            term = term * r / Dd::new(i as f64);
            s = s + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..10 {
            s = s.scale(2.0) + s * s;
        }
        (s + Dd::ONE).scale(2f64.powi(k as i32))
    }

    pub fn ln(self) -> Dd {
        let mut y = Dd::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn pow10(v: f64) -> Dd {
        (Dd::new(v) * LN10).exp()
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, y: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::from_pair(quick_two_sum(s, e + f))
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, y: Dd) -> Dd {
        self + (-y)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, y: Dd) -> Dd {
        let p = self.hi * y.hi;
        let e = self.hi.mul_add(y.hi, -p);
        Dd::from_pair(quick_two_sum(p, e + (self.hi * y.lo + self.lo * y.hi)))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, y: Dd) -> Dd {
        let q1 = self.hi / y.hi;
        let r = self - y * Dd::new(q1);
        let q2 = r.hi / y.hi;
        let r = r - y * Dd::new(q2);
        let q3 = r.hi / y.hi;
        Dd::from_pair(quick_two_sum(q1, q2)) + Dd::new(q3)
    }
}

fn uc_pairs(m: usize) -> Vec<(usize, usize)> {
    (1..m).flat_map(|l| (l..m).map(move |lp| (l, lp))).collect()
}

fn w(l: usize, lp: usize, i: usize) -> i32 {
    if l == lp {
        i32::from(i == l)
    } else {
        i32::from(i == l) + i32::from(i == lp)
    }
}

/// Parameters of every family, unpacked from the packed vector in double-double.
struct Params {
    family: KernelFamily,
    phi: Vec<Dd>,
    z: Vec<Vec<[f64; 2]>>,
    uc: Vec<Vec<Dd>>,
    mc: Vec<Vec<Dd>>,
    weights: Vec<Dd>,
    add_phi: Vec<Vec<Dd>>,
}

fn unpack(layout: &ParamLayout, p: usize, levels: &[usize], v: &[f64]) -> Params {
    let q = levels.len();
    let mut out = Params {
        family: layout.family(),
        phi: vec![Dd::ZERO; p],
        z: levels.iter().map(|&m| vec![[0.0; 2]; m]).collect(),
        uc: levels.iter().map(|&m| vec![Dd::ZERO; m * (m - 1) / 2]).collect(),
        mc: levels.iter().map(|&m| vec![Dd::ZERO; m]).collect(),
        weights: Vec::new(),
        add_phi: vec![vec![Dd::ZERO; p]; q],
    };
    let mut s = vec![Dd::ZERO; q];
    for (x, slot) in v.iter().zip(layout.slots()) {
        match slot.kind {
            SlotKind::Theta { input } => out.phi[input] = Dd::pow10(*x),
            SlotKind::Latent { factor, level, coord } => out.z[factor][level - 1][coord] = *x,
            SlotKind::UcPair { factor, pair } | SlotKind::AddUcPair { factor, pair } => {
                out.uc[factor][pair] = Dd::pow10(*x)
            }
            SlotKind::McLevel { factor, level } => out.mc[factor][level - 1] = Dd::pow10(*x),
            SlotKind::AddLogVar { factor } => s[factor] = Dd::new(*x),
            SlotKind::AddTheta { factor, input } => out.add_phi[factor][input] = Dd::pow10(*x),
        }
    }
    if out.family == KernelFamily::AddUc {
        let e: Vec<Dd> = s.iter().map(|v| v.exp()).collect();
        let total = e.iter().fold(Dd::ZERO, |a, b| a + *b);
        out.weights = e.iter().map(|v| *v / total).collect();
    }
    out
}

fn quant(phi: &[Dd], a: &[f64], b: &[f64]) -> Dd {
    phi.iter().zip(a.iter().zip(b)).fold(Dd::ZERO, |s, (f, (x, y))| {
        let d = Dd::new(*x) - Dd::new(*y);
        s + *f * d * d
    })
}

fn uc_exponent(phi: &[Dd], m: usize, a: usize, b: usize) -> Dd {
    phi.iter().zip(uc_pairs(m)).fold(Dd::ZERO, |s, (f, (l, lp))| {
        let d = w(l, lp, a) - w(l, lp, b);
        s + *f * Dd::new(f64::from(d * d))
    })
}

fn corr(par: &Params, levels: &[usize], xa: &[f64], ta: &[usize], xb: &[f64], tb: &[usize]) -> Dd {
    match par.family {
        KernelFamily::NumericOnly => (-quant(&par.phi, xa, xb)).exp(),
        KernelFamily::Lv(_) => {
            let mut s = quant(&par.phi, xa, xb);
            for (j, z) in par.z.iter().enumerate() {
                for c in 0..2 {
                    let d = Dd::new(z[ta[j] - 1][c]) - Dd::new(z[tb[j] - 1][c]);
                    s = s + d * d;
                }
            }
            (-s).exp()
        }
        KernelFamily::Uc => {
            let mut s = quant(&par.phi, xa, xb);
            for (j, &m) in levels.iter().enumerate() {
                s = s + uc_exponent(&par.uc[j], m, ta[j], tb[j]);
            }
            (-s).exp()
        }
        KernelFamily::Mc => {
            let mut s = quant(&par.phi, xa, xb);
            for (j, f) in par.mc.iter().enumerate() {
                if ta[j] != tb[j] {
                    s = s + f[ta[j] - 1] + f[tb[j] - 1];
                }
            }
            (-s).exp()
        }
        KernelFamily::AddUc => {
            let mut total = Dd::ZERO;
            for (j, &m) in levels.iter().enumerate() {
                let s = quant(&par.add_phi[j], xa, xb) + uc_exponent(&par.uc[j], m, ta[j], tb[j]);
                total = total + par.weights[j] * (-s).exp();
            }
            total
        }
    }
}

/// `n/2 ln(sigma^2) + 1/2 ln|R|` for the jittered matrix, i.e. the negative
/// profile log-likelihood without its constant `n/2 (ln(2 pi) + 1)`.
pub fn nll_core(unit: &Dataset, layout: &ParamLayout, v: &[f64], jitter: f64) -> Dd {
    let schema = unit.schema();
    let levels = schema.levels();
    let par = unpack(layout, schema.p(), &levels, v);
    let pts = unit.points();
    let n = pts.len();
    let mut l = vec![Dd::ZERO; n * n];
    for i in 0..n {
        for k in 0..i {
            l[i * n + k] = corr(&par, &levels, &pts[i].x, &pts[i].t, &pts[k].x, &pts[k].t);
        }
        l[i * n + i] = Dd::ONE + Dd::new(jitter);
    }
    // In-place Cholesky of the lower triangle.
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        assert!(d.hi > 0.0, "reference Cholesky failed");
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    let solve = |b: &[Dd]| -> Vec<Dd> {
        let mut x = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i] - l[i * n + k] * x[k];
            }
            x[i] = x[i] / l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] = x[i] - l[k * n + i] * x[k];
            }
            x[i] = x[i] / l[i * n + i];
        }
        x
    };
    let y: Vec<Dd> = unit.y().iter().map(|v| Dd::new(*v)).collect();
    let ones = vec![Dd::ONE; n];
    let ry = solve(&y);
    let r1 = solve(&ones);
    let sum = |v: &[Dd]| v.iter().fold(Dd::ZERO, |a, b| a + *b);
    let mu = sum(&ry) / sum(&r1);
    let mut quad = Dd::ZERO;
    for i in 0..n {
        quad = quad + (y[i] - mu) * (ry[i] - mu * r1[i]);
    }
    let sigma2 = quad / Dd::new(n as f64);
    let mut logdet = Dd::ZERO;
    for i in 0..n {
        logdet = logdet + l[i * n + i].ln();
    }
    Dd::new(n as f64 / 2.0) * sigma2.ln() + logdet
}

/// The full negative log-likelihood, for comparison with the library's value.
pub fn nll(unit: &Dataset, layout: &ParamLayout, v: &[f64], jitter: f64) -> f64 {
    let n = unit.len() as f64;
    nll_core(unit, layout, v, jitter).hi + n / 2.0 * ((2.0 * std::f64::consts::PI).ln() + 1.0)
}

/// Central difference of the oracle with step `h` in slot `i`.
pub fn central_difference(unit: &Dataset, layout: &ParamLayout, v: &[f64], jitter: f64, i: usize, h: f64) -> f64 {
    let (mut vp, mut vm) = (v.to_vec(), v.to_vec());
    vp[i] += h;
    vm[i] -= h;
    let d = nll_core(unit, layout, &vp, jitter) - nll_core(unit, layout, &vm, jitter);
    d.hi / (vp[i] - vm[i])
}

/// Self-checks of the arithmetic against known constants and identities.
pub fn self_check() -> Result<(), String> {
    let e = Dd::ONE.exp();
    if (e - E).hi.abs() > 1e-30 {
        return Err(format!("exp(1) off by {:e}", (e - E).hi));
    }
    for x in [0.3, 2.5, 17.0, 1e-5, 123.456] {
        let back = Dd::new(x).ln().exp();
        if ((back - Dd::new(x)).hi / x).abs() > 1e-30 {
            return Err(format!("exp(ln({x})) off by {:e}", (back - Dd::new(x)).hi));
        }
        let r = Dd::new(x).sqrt();
        if ((r * r - Dd::new(x)).hi / x).abs() > 1e-30 {
            return Err(format!("sqrt({x})^2 off"));
        }
    }
    let third = Dd::ONE / Dd::new(3.0);
    if (third * Dd::new(3.0) - Dd::ONE).hi.abs() > 1e-31 {
        return Err("1/3 * 3 != 1".into());
    }
    if (Dd::pow10(2.0) - Dd::new(100.0)).hi.abs() > 1e-28 {
        return Err("10^2 != 100".into());
    }
    Ok(())
}
