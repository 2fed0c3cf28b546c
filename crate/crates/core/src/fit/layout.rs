//! Packing of kernel parameters into the flat vector searched by the optimizer.
//!
//! Pinned latent coordinates (`z(1)` at the origin and, in 2D, the second
//! coordinate of `z(2)`) never occupy a slot. UC and MC parameters are packed
//! as `log10` of their natural value. The additive model pins `s_1 = 0`,
//! since only variance ratios affect the profiled likelihood.

use serde::{Deserialize, Serialize};

use crate::covariance::{
    uc_pairs, AddUcParams, KernelConfig, KernelFamily, KernelParams, LatentDim, LatentMap, McParams, QuantCorrParams,
    UcParams,
};
use crate::domain::InputSchema;
use crate::error::{Error, Result};

/// What a packed slot holds. Factor and input indices are 0-based, levels 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SlotKind {
    Theta { input: usize },
    Latent { factor: usize, level: usize, coord: usize },
    UcPair { factor: usize, pair: usize },
    McLevel { factor: usize, level: usize },
    AddLogVar { factor: usize },
    AddTheta { factor: usize, input: usize },
    AddUcPair { factor: usize, pair: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub kind: SlotKind,
    pub lower: f64,
    pub upper: f64,
}

impl Slot {
    pub fn name(&self) -> String {
        match &self.kind {
            SlotKind::Theta { input } => format!("theta[{}]", input + 1),
            SlotKind::Latent { factor, level, coord } => format!("z{}[{},{}]", coord + 1, factor + 1, level),
            SlotKind::UcPair { factor, pair } => format!("uc[{},{}]", factor + 1, pair + 1),
            SlotKind::McLevel { factor, level } => format!("mc[{},{}]", factor + 1, level),
            SlotKind::AddLogVar { factor } => format!("s[{}]", factor + 1),
            SlotKind::AddTheta { factor, input } => format!("theta[{},{}]", factor + 1, input + 1),
            SlotKind::AddUcPair { factor, pair } => format!("uc[{},{}]", factor + 1, pair + 1),
        }
    }
}

/// Maps packed-vector slots to named kernel parameters and their bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    family: KernelFamily,
    p: usize,
    levels: Vec<usize>,
    slots: Vec<Slot>,
}

impl ParamLayout {
    pub fn new(schema: &InputSchema, config: &KernelConfig) -> Result<Self> {
        config.validate()?;
        let p = schema.p();
        let levels = schema.levels();
        let b = config.bounds;
        let mut slots = Vec::new();
        let mut push = |kind, (lower, upper): (f64, f64)| slots.push(Slot { kind, lower, upper });
        let theta_block = |push: &mut dyn FnMut(SlotKind, (f64, f64))| {
            for input in 0..p {
                push(SlotKind::Theta { input }, b.theta);
            }
        };
        match config.family {
            KernelFamily::Lv(dim) => {
                theta_block(&mut push);
                let z = (-b.latent, b.latent);
                for (factor, &m) in levels.iter().enumerate() {
                    for level in 2..=m {
                        push(SlotKind::Latent { factor, level, coord: 0 }, z);
                        if dim == LatentDim::Two && level >= 3 {
                            push(SlotKind::Latent { factor, level, coord: 1 }, z);
                        }
                    }
                }
            }
            KernelFamily::Uc => {
                theta_block(&mut push);
                for (factor, &m) in levels.iter().enumerate() {
                    for pair in 0..m * (m - 1) / 2 {
                        push(SlotKind::UcPair { factor, pair }, b.qual_log10);
                    }
                }
            }
            KernelFamily::Mc => {
                theta_block(&mut push);
                for (factor, &m) in levels.iter().enumerate() {
                    for level in 1..=m {
                        push(SlotKind::McLevel { factor, level }, b.qual_log10);
                    }
                }
            }
            KernelFamily::AddUc => {
                if levels.is_empty() {
                    return Err(Error::UnsupportedKernel("additive UC needs a qualitative factor".into()));
                }
                for factor in 1..levels.len() {
                    push(SlotKind::AddLogVar { factor }, b.log_var);
                }
                for (factor, &m) in levels.iter().enumerate() {
                    for input in 0..p {
                        push(SlotKind::AddTheta { factor, input }, b.theta);
                    }
                    for pair in 0..m * (m - 1) / 2 {
                        push(SlotKind::AddUcPair { factor, pair }, b.qual_log10);
                    }
                }
            }
            KernelFamily::NumericOnly => {
                if !levels.is_empty() {
                    return Err(Error::UnsupportedKernel(
                        "numeric-only kernel cannot take qualitative factors".into(),
                    ));
                }
                theta_block(&mut push);
            }
        }
        Ok(Self { family: config.family, p, levels, slots })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn lower(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.lower).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.upper).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.iter().map(Slot::name).collect()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn in_bounds(&self, v: &[f64]) -> bool {
        v.len() == self.len() && v.iter().zip(&self.slots).all(|(x, s)| *x >= s.lower && *x <= s.upper)
    }

    pub fn unpack(&self, v: &[f64]) -> Result<KernelParams> {
        if v.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: v.len() });
        }
        let q = self.levels.len();
        let mut theta = vec![0.0; self.p];
        Ok(match self.family {
            KernelFamily::Lv(dim) => {
                let mut coords: Vec<Vec<[f64; 2]>> = self.levels.iter().map(|&m| vec![[0.0, 0.0]; m]).collect();
                for (x, s) in v.iter().zip(&self.slots) {
                    match s.kind {
                        SlotKind::Theta { input } => theta[input] = *x,
                        SlotKind::Latent { factor, level, coord } => coords[factor][level - 1][coord] = *x,
                        _ => unreachable!(),
                    }
                }
                KernelParams::Lv { theta: QuantCorrParams::new(theta), latent: LatentMap::new(dim, coords)? }
            }
            KernelFamily::Uc => {
                let mut f: Vec<Vec<f64>> = self.levels.iter().map(|&m| vec![0.0; m * (m - 1) / 2]).collect();
                for (x, s) in v.iter().zip(&self.slots) {
                    match s.kind {
                        SlotKind::Theta { input } => theta[input] = *x,
                        SlotKind::UcPair { factor, pair } => f[factor][pair] = 10f64.powf(*x),
                        _ => unreachable!(),
                    }
                }
                KernelParams::Uc { theta: QuantCorrParams::new(theta), uc: UcParams { factors: f } }
            }
            KernelFamily::Mc => {
                let mut f: Vec<Vec<f64>> = self.levels.iter().map(|&m| vec![0.0; m]).collect();
                for (x, s) in v.iter().zip(&self.slots) {
                    match s.kind {
                        SlotKind::Theta { input } => theta[input] = *x,
                        SlotKind::McLevel { factor, level } => f[factor][level - 1] = 10f64.powf(*x),
                        _ => unreachable!(),
                    }
                }
                KernelParams::Mc { theta: QuantCorrParams::new(theta), mc: McParams { factors: f } }
            }
            KernelFamily::AddUc => {
                let mut log_var = vec![0.0; q];
                let mut thetas = vec![vec![0.0; self.p]; q];
                let mut f: Vec<Vec<f64>> = self.levels.iter().map(|&m| vec![0.0; m * (m - 1) / 2]).collect();
                for (x, s) in v.iter().zip(&self.slots) {
                    match s.kind {
                        SlotKind::AddLogVar { factor } => log_var[factor] = *x,
                        SlotKind::AddTheta { factor, input } => thetas[factor][input] = *x,
                        SlotKind::AddUcPair { factor, pair } => f[factor][pair] = 10f64.powf(*x),
                        _ => unreachable!(),
                    }
                }
                KernelParams::AddUc(AddUcParams {
                    log_var,
                    theta: thetas.into_iter().map(QuantCorrParams::new).collect(),
                    uc: UcParams { factors: f },
                })
            }
            KernelFamily::NumericOnly => {
                for (x, s) in v.iter().zip(&self.slots) {
                    match s.kind {
                        SlotKind::Theta { input } => theta[input] = *x,
                        _ => unreachable!(),
                    }
                }
                KernelParams::NumericOnly { theta: QuantCorrParams::new(theta) }
            }
        })
    }

    /// Inverse of [`unpack`](Self::unpack). Latent maps must satisfy the pinning
    /// convention; additive log variances are shifted so that `s_1 = 0`.
    pub fn pack(&self, params: &KernelParams) -> Result<Vec<f64>> {
        params.check_shape(self.p, &self.levels)?;
        if params.family() != self.family {
            return Err(Error::Config(format!(
                "cannot pack {:?} parameters into a {:?} layout",
                params.family(),
                self.family
            )));
        }
        if let KernelParams::Lv { latent, .. } = params {
            if !latent.is_pinned() {
                return Err(Error::Config("latent map violates the pinning convention".into()));
            }
        }
        let log10 = |x: f64| {
            if x > 0.0 {
                Ok(x.log10())
            } else {
                Err(Error::Config(format!("qualitative parameter {x} must be positive to pack")))
            }
        };
        self.slots
            .iter()
            .map(|s| {
                Ok(match (&s.kind, params) {
                    (SlotKind::Theta { input }, KernelParams::Lv { theta, .. })
                    | (SlotKind::Theta { input }, KernelParams::Uc { theta, .. })
                    | (SlotKind::Theta { input }, KernelParams::Mc { theta, .. })
                    | (SlotKind::Theta { input }, KernelParams::NumericOnly { theta }) => theta.theta[*input],
                    (SlotKind::Latent { factor, level, coord }, KernelParams::Lv { latent, .. }) => {
                        latent.factor(*factor)[level - 1][*coord]
                    }
                    (SlotKind::UcPair { factor, pair }, KernelParams::Uc { uc, .. }) => log10(uc.factors[*factor][*pair])?,
                    (SlotKind::McLevel { factor, level }, KernelParams::Mc { mc, .. }) => {
                        log10(mc.factors[*factor][level - 1])?
                    }
                    (SlotKind::AddLogVar { factor }, KernelParams::AddUc(a)) => a.log_var[*factor] - a.log_var[0],
                    (SlotKind::AddTheta { factor, input }, KernelParams::AddUc(a)) => a.theta[*factor].theta[*input],
                    (SlotKind::AddUcPair { factor, pair }, KernelParams::AddUc(a)) => log10(a.uc.factors[*factor][*pair])?,
                    _ => unreachable!("slot kinds always match the layout family"),
                })
            })
            .collect()
    }

    /// Number of UC indicator pairs for factor `j`.
    pub fn uc_pairs(&self, j: usize) -> Vec<(usize, usize)> {
        uc_pairs(self.levels[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{QualFactor, QuantInput};
    use proptest::prelude::*;

    fn schema(p: usize, levels: &[usize]) -> InputSchema {
        InputSchema::new(
            (0..p).map(|i| QuantInput::new(format!("x{i}"), 0.0, 1.0)).collect(),
            levels.iter().enumerate().map(|(j, &m)| QualFactor::unlabeled(format!("t{j}"), m)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn slot_counts() {
        let s = schema(2, &[3, 4]);
        assert_eq!(ParamLayout::new(&s, &KernelConfig::lv2()).unwrap().len(), 2 + 3 + 5);
        assert_eq!(ParamLayout::new(&s, &KernelConfig::new(KernelFamily::Lv(LatentDim::One))).unwrap().len(), 2 + 2 + 3);
        assert_eq!(ParamLayout::new(&s, &KernelConfig::new(KernelFamily::Uc)).unwrap().len(), 2 + 3 + 6);
        assert_eq!(ParamLayout::new(&s, &KernelConfig::new(KernelFamily::Mc)).unwrap().len(), 2 + 3 + 4);
        assert_eq!(ParamLayout::new(&s, &KernelConfig::new(KernelFamily::AddUc)).unwrap().len(), 1 + 2 * 2 + 3 + 6);
        assert!(ParamLayout::new(&s, &KernelConfig::new(KernelFamily::NumericOnly)).is_err());
        let three = ParamLayout::new(&schema(1, &[3]), &KernelConfig::lv2()).unwrap();
        let latent = three.slots().iter().filter(|s| matches!(s.kind, SlotKind::Latent { .. })).count();
        assert_eq!(latent, 3);
    }

    #[test]
    fn unpacked_latent_map_is_pinned() {
        let l = ParamLayout::new(&schema(1, &[4, 3]), &KernelConfig::lv2()).unwrap();
        let v: Vec<f64> = (0..l.len()).map(|i| 0.1 * i as f64 - 0.5).collect();
        match l.unpack(&v).unwrap() {
            KernelParams::Lv { latent, .. } => {
                assert!(latent.is_pinned());
                assert_eq!(latent.factor(0).len(), 4);
            }
            _ => panic!("wrong family"),
        }
    }

    #[test]
    fn pack_rejects_unpinned_maps() {
        let l = ParamLayout::new(&schema(1, &[3]), &KernelConfig::lv2()).unwrap();
        let bad = KernelParams::Lv {
            theta: QuantCorrParams::new(vec![0.0]),
            latent: LatentMap::new(LatentDim::Two, vec![vec![[0.1, 0.0], [1.0, 0.0], [0.0, 1.0]]]).unwrap(),
        };
        assert!(l.pack(&bad).is_err());
    }

    #[test]
    fn names_are_descriptive() {
        let l = ParamLayout::new(&schema(1, &[3]), &KernelConfig::lv2()).unwrap();
        assert_eq!(l.names(), vec!["theta[1]", "z1[1,2]", "z1[1,3]", "z2[1,3]"]);
    }

    proptest! {
        #[test]
        fn pack_inverts_unpack(seed in any::<u64>(), fam in 0usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (s, family) = match fam {
                0 => (schema(2, &[3, 5]), KernelFamily::Lv(LatentDim::Two)),
                1 => (schema(2, &[3, 5]), KernelFamily::Lv(LatentDim::One)),
                2 => (schema(2, &[3, 5]), KernelFamily::Uc),
                3 => (schema(2, &[3, 5]), KernelFamily::Mc),
                _ => (schema(2, &[3, 5]), KernelFamily::AddUc),
            };
            let l = ParamLayout::new(&s, &KernelConfig::new(family)).unwrap();
            let v: Vec<f64> = l.slots().iter().map(|s| rng.random_range(s.lower..=s.upper)).collect();
            let back = l.pack(&l.unpack(&v).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
