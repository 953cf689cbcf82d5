use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Catalog of covariance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Matérn in linear time `u`.
    MaternTime,
    /// Matérn in circular lag `θ`; valid on the circle only for `ν ≤ 1/2`.
    MaternCircle,
    /// Matérn in planar distance `h`.
    MaternSpace,
    /// `exp[-(θ/c_p)^α]`
    CircPowExp,
    /// `[1 + (θ/c_p)^α]^{-λ}`
    CircCauchy,
    /// Inverted Gneiting class on circle × time, exponential temporal margin.
    InvGneitingExp,
    /// Inverted Gneiting class on circle × time, Cauchy temporal margin.
    InvGneitingCauchy,
    /// Gneiting class on circle × time with the circle in the spatial slot, exponential margin.
    WhiteExp,
    /// As [`Family::WhiteExp`] with a generalized Cauchy margin.
    WhiteCauchy,
    /// `Σ_k cos(kθ)/(k² + γ(u))`, normalized, with `γ(u) = [1 + (u/c_t)^α]^β`.
    SinhSeries,
    /// `exp{ρ(u) cos θ - 1} cos{ρ(u) sin θ}` with Cauchy `ρ(u) = [1 + (u/c_t)^α]^{-λ}`.
    CosExpCauchy,
    /// `exp{ρ(u) cos θ - 1} cos{ρ(u) sin θ}` with `ρ(u) = exp[-(u/c_t)^α]`.
    CosExpPowexp,
    /// Gneiting class on plane × time with a generalized Cauchy spatial margin.
    GneitingSpaceTimeCauchy,
    /// Plane × circle analogue of [`Family::GneitingSpaceTimeCauchy`].
    ShirotaSpaceCircle,
    /// Product of exponentials in `h`, `θ` and `u`.
    Model1Separable,
    /// [`Family::CosExpPowexp`] times an exponential in `h`.
    Model7Final,
    /// Product of member kernels acting on disjoint lags.
    Product,
}

impl Family {
    pub const ALL: [Family; 17] = [
        Family::MaternTime,
        Family::MaternCircle,
        Family::MaternSpace,
        Family::CircPowExp,
        Family::CircCauchy,
        Family::InvGneitingExp,
        Family::InvGneitingCauchy,
        Family::WhiteExp,
        Family::WhiteCauchy,
        Family::SinhSeries,
        Family::CosExpCauchy,
        Family::CosExpPowexp,
        Family::GneitingSpaceTimeCauchy,
        Family::ShirotaSpaceCircle,
        Family::Model1Separable,
        Family::Model7Final,
        Family::Product,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::MaternTime => "matern_time",
            Family::MaternCircle => "matern_circle",
            Family::MaternSpace => "matern_space",
            Family::CircPowExp => "circ_pow_exp",
            Family::CircCauchy => "circ_cauchy",
            Family::InvGneitingExp => "inv_gneiting_exp",
            Family::InvGneitingCauchy => "inv_gneiting_cauchy",
            Family::WhiteExp => "white_exp",
            Family::WhiteCauchy => "white_cauchy",
            Family::SinhSeries => "sinh_series",
            Family::CosExpCauchy => "cos_exp_cauchy",
            Family::CosExpPowexp => "cos_exp_powexp",
            Family::GneitingSpaceTimeCauchy => "gneiting_space_time_cauchy",
            Family::ShirotaSpaceCircle => "shirota_space_circle",
            Family::Model1Separable => "model1_separable",
            Family::Model7Final => "model7_final",
            Family::Product => "product",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Parameter table, in storage order.
    pub fn params(self) -> &'static [ParamDef] {
        use Family::*;
        match self {
            MaternTime => &[C_T, NU],
            MaternCircle => &[C_P, NU_CIRCLE],
            MaternSpace => &[C_S, NU],
            CircPowExp => &[C_P, ALPHA_1],
            CircCauchy => &[C_P, ALPHA_1, LAMBDA],
            InvGneitingExp => &[C_S_CIRCLE, C_T, ALPHA_1, BETA, GAMMA, DELTA],
            InvGneitingCauchy => &[C_S_CIRCLE, C_T, ALPHA_1, BETA, GAMMA, DELTA, LAMBDA],
            WhiteExp => &[C_S_CIRCLE, C_T, ALPHA_2, BETA, GAMMA, DELTA],
            WhiteCauchy => &[C_S_CIRCLE, C_T, ALPHA_2, BETA, GAMMA, DELTA, LAMBDA],
            SinhSeries => &[C_T, ALPHA_2, BETA],
            CosExpCauchy => &[C_T, ALPHA_2, LAMBDA],
            CosExpPowexp => &[C_T, ALPHA_2],
            GneitingSpaceTimeCauchy => &[C_S, C_T, ALPHA_2, BETA, GAMMA, DELTA, LAMBDA],
            ShirotaSpaceCircle => &[C_S, C_T_CIRCLE, ALPHA_1, BETA, GAMMA, DELTA, LAMBDA],
            Model1Separable => &[C_S, C_P, C_T],
            Model7Final => &[C_S, C_T, ALPHA_2],
            Product => &[],
        }
    }

    /// Which lag components the family depends on.
    pub fn lags(self) -> LagUse {
        use Family::*;
        match self {
            MaternTime => LagUse::U,
            MaternCircle | CircPowExp | CircCauchy => LagUse::THETA,
            MaternSpace => LagUse::H,
            InvGneitingExp | InvGneitingCauchy | WhiteExp | WhiteCauchy | SinhSeries
            | CosExpCauchy | CosExpPowexp => LagUse::THETA.union(LagUse::U),
            GneitingSpaceTimeCauchy => LagUse::H.union(LagUse::U),
            ShirotaSpaceCircle => LagUse::H.union(LagUse::THETA),
            Model1Separable | Model7Final => LagUse::ALL,
            Product => LagUse::NONE,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of lag components `{h, θ, u}` a kernel reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagUse(u8);

impl LagUse {
    pub const NONE: LagUse = LagUse(0);
    pub const H: LagUse = LagUse(1);
    pub const THETA: LagUse = LagUse(2);
    pub const U: LagUse = LagUse(4);
    pub const ALL: LagUse = LagUse(7);

    pub const fn union(self, other: LagUse) -> LagUse {
        LagUse(self.0 | other.0)
    }

    pub const fn overlaps(self, other: LagUse) -> bool {
        self.0 & other.0 != 0
    }

    pub const fn contains(self, other: LagUse) -> bool {
        self.0 & other.0 == other.0
    }
}

/// Support of a kernel parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// `(0, ∞)`
    Positive,
    /// `(0, hi]`
    UpTo(f64),
}

impl Bound {
    pub fn contains(self, v: f64) -> bool {
        match self {
            Bound::Positive => v > 0.0 && v.is_finite(),
            Bound::UpTo(hi) => v > 0.0 && v <= hi,
        }
    }

    pub fn describe(self) -> String {
        match self {
            Bound::Positive => "(0, inf)".to_string(),
            Bound::UpTo(hi) => format!("(0, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDef {
    pub name: &'static str,
    pub bound: Bound,
    /// Structural parameters (Matérn smoothness) are held fixed during fitting.
    pub fixed: bool,
    /// Range used when drawing random valid parameters for validity sweeps.
    pub draw_range: (f64, f64),
    /// Initial value for positive parameters when none is configured.
    pub default: f64,
}

const fn positive(name: &'static str, draw_range: (f64, f64), default: f64) -> ParamDef {
    ParamDef {
        name,
        bound: Bound::Positive,
        fixed: false,
        draw_range,
        default,
    }
}

const fn up_to(name: &'static str, hi: f64, default: f64) -> ParamDef {
    ParamDef {
        name,
        bound: Bound::UpTo(hi),
        fixed: false,
        draw_range: (0.0, hi),
        default,
    }
}

const C_S: ParamDef = positive("c_s", (1.0, 60.0), 20.0);
const C_T: ParamDef = positive("c_t", (1.0, 200.0), 50.0);
const C_P: ParamDef = positive("c_p", (0.1, 3.0), 1.0);
// range on the circle in the inverted/White classes, named as in their displays
const C_S_CIRCLE: ParamDef = positive("c_s", (0.1, 3.0), 1.0);
const C_T_CIRCLE: ParamDef = positive("c_t", (0.1, 3.0), 1.0);
const DELTA: ParamDef = positive("delta", (0.1, 3.0), 1.0);
const LAMBDA: ParamDef = positive("lambda", (0.1, 3.0), 1.0);
const ALPHA_1: ParamDef = up_to("alpha", 1.0, 0.5);
const ALPHA_2: ParamDef = up_to("alpha", 2.0, 1.0);
const BETA: ParamDef = up_to("beta", 1.0, 0.5);
const GAMMA: ParamDef = up_to("gamma", 1.0, 0.5);
const NU: ParamDef = ParamDef {
    name: "nu",
    bound: Bound::Positive,
    fixed: true,
    draw_range: (0.1, 2.5),
    default: 0.5,
};
const NU_CIRCLE: ParamDef = ParamDef {
    name: "nu",
    bound: Bound::UpTo(0.5),
    fixed: true,
    draw_range: (0.0, 0.5),
    default: 0.5,
};

/// A covariance kernel: family, parameter values in [`Family::params`] order and variance.
///
/// For [`Family::Product`] the parameters live in `members`; member variances
/// are ignored and the product carries the single `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecJson", into = "KernelSpecJson")]
pub struct KernelSpec {
    family: Family,
    values: Vec<f64>,
    sigma2: f64,
    members: Vec<KernelSpec>,
}

impl KernelSpec {
    /// Builds a non-product kernel from named parameters.
    pub fn new(family: Family, params: &[(&str, f64)], sigma2: f64) -> Result<Self> {
        let map: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Self::from_map(family, &map, sigma2)
    }

    pub fn from_map(family: Family, params: &BTreeMap<String, f64>, sigma2: f64) -> Result<Self> {
        if family == Family::Product {
            return Err(Error::InvalidInput(
                "product kernels are built with KernelSpec::product".into(),
            ));
        }
        let defs = family.params();
        for key in params.keys() {
            if !defs.iter().any(|d| d.name == key) {
                return Err(Error::InvalidInput(format!(
                    "unknown parameter `{key}` for family {family}"
                )));
            }
        }
        let mut values = Vec::with_capacity(defs.len());
        for d in defs {
            let v = match params.get(d.name) {
                Some(v) => *v,
                None if d.fixed => d.default,
                None => {
                    return Err(Error::InvalidInput(format!(
                        "family {family} requires parameter `{}`",
                        d.name
                    )))
                }
            };
            values.push(v);
        }
        let spec = KernelSpec {
            family,
            values,
            sigma2,
            members: Vec::new(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn product(members: Vec<KernelSpec>, sigma2: f64) -> Result<Self> {
        let spec = KernelSpec {
            family: Family::Product,
            values: Vec::new(),
            sigma2,
            members: members
                .into_iter()
                .map(|mut m| {
                    m.sigma2 = 1.0;
                    m
                })
                .collect(),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid_param("sigma2", self.sigma2, "must be >= 0"));
        }
        if self.family == Family::Product {
            if self.members.is_empty() {
                return Err(Error::InvalidInput("product kernel needs members".into()));
            }
            let mut used = LagUse::NONE;
            for m in &self.members {
                if m.family == Family::Product {
                    return Err(Error::InvalidInput("nested product kernels".into()));
                }
                if m.family.lags().overlaps(used) {
                    return Err(Error::InvalidInput(format!(
                        "product members must act on disjoint lags; {} overlaps",
                        m.family
                    )));
                }
                used = used.union(m.family.lags());
                m.check()?;
            }
            return Ok(());
        }
        for (d, v) in self.family.params().iter().zip(&self.values) {
            if !d.bound.contains(*v) {
                return Err(Error::invalid_param(
                    d.name,
                    *v,
                    format!("{} requires {}", self.family, d.bound.describe()),
                ));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn members(&self) -> &[KernelSpec] {
        &self.members
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        let mut s = self.clone();
        s.sigma2 = sigma2;
        s.check()?;
        Ok(s)
    }

    /// Value of a named parameter; product members are addressed as `"<index>.<name>"`.
    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_entries()
            .into_iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, v)| v)
    }

    /// Lags the kernel depends on.
    pub fn lags(&self) -> LagUse {
        if self.family == Family::Product {
            self.members
                .iter()
                .fold(LagUse::NONE, |acc, m| acc.union(m.family.lags()))
        } else {
            self.family.lags()
        }
    }

    fn param_entries(&self) -> Vec<(String, ParamDef, f64)> {
        if self.family == Family::Product {
            self.members
                .iter()
                .enumerate()
                .flat_map(|(i, m)| {
                    m.param_entries()
                        .into_iter()
                        .map(move |(n, d, v)| (format!("{i}.{n}"), d, v))
                })
                .collect()
        } else {
            self.family
                .params()
                .iter()
                .zip(&self.values)
                .map(|(d, v)| (d.name.to_string(), *d, *v))
                .collect()
        }
    }

    /// Names, supports and current values of the parameters estimated during fitting.
    pub fn free_params(&self) -> Vec<FreeParam> {
        self.param_entries()
            .into_iter()
            .filter(|(_, d, _)| !d.fixed)
            .map(|(name, d, value)| FreeParam {
                name,
                bound: d.bound,
                value,
                draw_range: d.draw_range,
                default: d.default,
            })
            .collect()
    }

    /// Returns a copy with the free parameters replaced, in [`Self::free_params`] order.
    pub fn with_free_params(&self, values: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        let mut it = values.iter().copied();
        out.assign_free(&mut it);
        if it.next().is_some() || values.len() != self.free_params().len() {
            return Err(Error::DimensionMismatch {
                expected: self.free_params().len(),
                found: values.len(),
            });
        }
        out.check()?;
        Ok(out)
    }

    fn assign_free(&mut self, it: &mut impl Iterator<Item = f64>) {
        if self.family == Family::Product {
            for m in &mut self.members {
                m.assign_free(it);
            }
        } else {
            for (d, v) in self.family.params().iter().zip(self.values.iter_mut()) {
                if !d.fixed {
                    if let Some(x) = it.next() {
                        *v = x;
                    }
                }
            }
        }
    }

    /// Same value lookup as [`Self::free_params`], without allocation of names.
    pub fn free_values(&self) -> Vec<f64> {
        self.free_params().into_iter().map(|p| p.value).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeParam {
    pub name: String,
    pub bound: Bound,
    pub value: f64,
    pub draw_range: (f64, f64),
    pub default: f64,
}

/// JSON form: `{"family": ..., "params": {name: value}, "sigma2": ..., "members": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpecJson {
    family: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default = "one")]
    sigma2: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    members: Vec<KernelSpecJson>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<KernelSpecJson> for KernelSpec {
    type Error = Error;

    fn try_from(raw: KernelSpecJson) -> Result<Self> {
        let family = Family::from_name(&raw.family)
            .ok_or_else(|| Error::InvalidInput(format!("unknown kernel family `{}`", raw.family)))?;
        if family == Family::Product {
            if !raw.params.is_empty() {
                return Err(Error::InvalidInput(
                    "product kernel parameters belong to its members".into(),
                ));
            }
            let members = raw
                .members
                .into_iter()
                .map(KernelSpec::try_from)
                .collect::<Result<Vec<_>>>()?;
            KernelSpec::product(members, raw.sigma2)
        } else {
            if !raw.members.is_empty() {
                return Err(Error::InvalidInput(format!("{family} takes no members")));
            }
            KernelSpec::from_map(family, &raw.params, raw.sigma2)
        }
    }
}

impl From<KernelSpec> for KernelSpecJson {
    fn from(spec: KernelSpec) -> Self {
        KernelSpecJson {
            family: spec.family.name().to_string(),
            params: spec
                .family
                .params()
                .iter()
                .zip(&spec.values)
                .map(|(d, v)| (d.name.to_string(), *v))
                .collect(),
            sigma2: spec.sigma2,
            members: spec.members.into_iter().map(Into::into).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_names_match_catalog() {
        for f in Family::ALL {
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.name()));
            assert_eq!(Family::from_name(f.name()), Some(f));
        }
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"family":"model7_final","params":{"c_s":22.32,"c_t":86.9,"alpha":0.674},"sigma2":2.098}"#;
        let spec: KernelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.param("c_t"), Some(86.9));
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn product_json() {
        let text = r#"{"family":"product","sigma2":1.5,"members":[
            {"family":"matern_circle","params":{"c_p":0.8}},
            {"family":"gneiting_space_time_cauchy","params":{"c_s":10,"c_t":30,"alpha":1,"beta":0.5,"gamma":0.5,"delta":1,"lambda":1}}]}"#;
        let spec: KernelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.family(), Family::Product);
        assert_eq!(spec.param("0.nu"), Some(0.5));
        assert_eq!(spec.param("1.c_s"), Some(10.0));
        assert_eq!(spec.free_params().len(), 8);
        assert_eq!(spec.lags(), LagUse::ALL);
    }

    #[test]
    fn bounds_enforced() {
        assert!(KernelSpec::new(Family::MaternCircle, &[("c_p", 1.0), ("nu", 0.6)], 1.0).is_err());
        assert!(KernelSpec::new(Family::MaternCircle, &[("c_p", 1.0), ("nu", 0.5)], 1.0).is_ok());
        assert!(KernelSpec::new(Family::CircPowExp, &[("c_p", 1.0), ("alpha", 1.5)], 1.0).is_err());
        let ok = [("c_s", 1.0), ("c_t", 1.0), ("alpha", 2.0)];
        assert!(KernelSpec::new(Family::Model7Final, &ok, 1.0).is_ok());
        let bad = [("c_s", 1.0), ("c_t", 1.0), ("alpha", 2.01)];
        assert!(KernelSpec::new(Family::Model7Final, &bad, 1.0).is_err());
        let neg = [("c_s", -1.0), ("c_t", 1.0), ("alpha", 1.0)];
        assert!(KernelSpec::new(Family::Model7Final, &neg, 1.0).is_err());
        assert!(KernelSpec::new(Family::Model7Final, &ok, -0.1).is_err());
        let tm = [("c_s", 1.0), ("c_t", 1.0), ("alpha", 1.0), ("beta", 1.0), ("gamma", 1.0), ("delta", 1.0)];
        assert!(KernelSpec::new(Family::InvGneitingExp, &tm, 1.0).is_ok());
        let tm = [("c_s", 1.0), ("c_t", 1.0), ("alpha", 1.0), ("beta", 1.01), ("gamma", 1.0), ("delta", 1.0)];
        assert!(KernelSpec::new(Family::InvGneitingExp, &tm, 1.0).is_err());
    }

    #[test]
    fn missing_and_unknown_params() {
        assert!(KernelSpec::new(Family::Model7Final, &[("c_s", 1.0)], 1.0).is_err());
        let extra = [("c_s", 1.0), ("c_t", 1.0), ("alpha", 1.0), ("zeta", 1.0)];
        assert!(KernelSpec::new(Family::Model7Final, &extra, 1.0).is_err());
    }

    #[test]
    fn product_members_must_be_disjoint() {
        let a = KernelSpec::new(Family::MaternTime, &[("c_t", 5.0)], 1.0).unwrap();
        let b = KernelSpec::new(Family::CosExpPowexp, &[("c_t", 5.0), ("alpha", 1.0)], 1.0).unwrap();
        assert!(KernelSpec::product(vec![a.clone(), b], 1.0).is_err());
        let c = KernelSpec::new(Family::MaternSpace, &[("c_s", 5.0)], 1.0).unwrap();
        assert!(KernelSpec::product(vec![a, c], 1.0).is_ok());
    }

    #[test]
    fn free_param_round_trip() {
        let spec = KernelSpec::new(Family::Model7Final, &[("c_s", 1.0), ("c_t", 2.0), ("alpha", 0.5)], 1.0).unwrap();
        let names: Vec<_> = spec.free_params().into_iter().map(|p| p.name).collect();
        assert_eq!(names, ["c_s", "c_t", "alpha"]);
        let moved = spec.with_free_params(&[3.0, 4.0, 1.5]).unwrap();
        assert_eq!(moved.free_values(), vec![3.0, 4.0, 1.5]);
        assert!(spec.with_free_params(&[3.0, 4.0, 2.5]).is_err());
        assert!(spec.with_free_params(&[3.0, 4.0]).is_err());
        // Matérn smoothness stays fixed
        let m = KernelSpec::new(Family::MaternSpace, &[("c_s", 2.0)], 1.0).unwrap();
        assert_eq!(m.free_params().len(), 1);
        assert_eq!(m.param("nu"), Some(0.5));
    }
}
