//! Defining sequences `(α_n)`, truncated `ℓ^p` sums and family classification.
//!
//! Sequences are indexed from `n = 1`. Split `n` of a cube hierarchy (level
//! `n - 1` cubes into level `n` children) is governed by `α_n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Rule generating odd integer bases `a_n ≥ 3`, so that `α_n = 1/a_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BaseRule {
    /// `a_n = a` for every split.
    Constant(u64),
    /// `a_n = slope·n + offset`.
    Linear { slope: u64, offset: u64 },
    /// Explicit finite list, `a_n = list[n-1]`.
    List(Vec<u64>),
}

impl BaseRule {
    pub fn base(&self, n: usize) -> Option<u64> {
        assert!(n >= 1, "splits are indexed from 1");
        match self {
            BaseRule::Constant(a) => Some(*a),
            BaseRule::Linear { slope, offset } => Some(slope * n as u64 + offset),
            BaseRule::List(v) => v.get(n - 1).copied(),
        }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            BaseRule::List(v) => Some(v.len()),
            _ => None,
        }
    }

    /// Checks every base up to `depth` (or the whole list) is odd and `≥ 3`.
    pub fn check(&self, depth: usize) -> Result<()> {
        let upto = match self {
            BaseRule::List(v) => v.len(),
            BaseRule::Linear { slope, offset } => {
                // Odd for every n iff the slope is even and a_1 is odd.
                if slope % 2 != 0 || (slope + offset) % 2 == 0 || slope + offset < 3 {
                    return Err(Error::InvalidBase { split: 1, base: slope + offset });
                }
                depth.max(1)
            }
            BaseRule::Constant(_) => 1,
        };
        for n in 1..=upto {
            let a = self.base(n).unwrap();
            if a < 3 || a % 2 == 0 {
                return Err(Error::InvalidBase { split: n, base: a });
            }
        }
        if let Some(len) = self.len() {
            if depth > len {
                return Err(Error::DepthOutOfRange { requested: depth, available: len });
            }
        }
        Ok(())
    }
}

impl fmt::Display for BaseRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseRule::Constant(a) => write!(f, "const:{a}"),
            BaseRule::Linear { slope, offset } => write!(f, "odd:{slope}n+{offset}"),
            BaseRule::List(v) => {
                let parts: Vec<String> = v.iter().map(|a| a.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl FromStr for BaseRule {
    type Err = Error;

    /// Accepts `const:7`, `odd:2n+1`, `7` and `3,5,7`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("cannot parse base rule '{s}'"));
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("const:") {
            return rest.trim().parse().map(BaseRule::Constant).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("odd:") {
            let rest: String = rest.chars().filter(|c| !c.is_whitespace()).collect();
            let (slope, offset) = rest.split_once('n').ok_or_else(bad)?;
            let slope = if slope.is_empty() { 1 } else { slope.parse().map_err(|_| bad())? };
            let offset = match offset.strip_prefix('+') {
                Some(o) => o.parse().map_err(|_| bad())?,
                None if offset.is_empty() => 0,
                None => return Err(bad()),
            };
            return Ok(BaseRule::Linear { slope, offset });
        }
        let values: std::result::Result<Vec<u64>, _> = s.split(',').map(|p| p.trim().parse()).collect();
        let values = values.map_err(|_| bad())?;
        match values.as_slice() {
            [] => Err(bad()),
            [a] => Ok(BaseRule::Constant(*a)),
            _ => Ok(BaseRule::List(values)),
        }
    }
}

impl Serialize for BaseRule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BaseRule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serializable description of a sequence family: `{"kind": ..., "params": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum SequenceSpec {
    Constant {
        value: f64,
    },
    /// `α_n = scale · n^{-s}`.
    PowerDecay {
        s: f64,
        scale: f64,
    },
    /// `α_n = ratio^n`.
    Geometric {
        ratio: f64,
    },
    /// `α_n = 1/a_n` for odd integers `a_n`.
    ReciprocalOdd {
        rule: BaseRule,
    },
    /// `α_n = exp(-rate · n^exponent)`.
    StretchedExponential {
        rate: f64,
        exponent: f64,
    },
    ExplicitList {
        values: Vec<f64>,
    },
}

impl FromStr for SequenceSpec {
    type Err = Error;

    /// Accepts `const:V`, `power:S,SCALE`, `geometric:R`, `reciprocal:RULE`,
    /// `stretched:RATE,EXP` and `list:V1,V2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("cannot parse sequence '{s}'"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let nums =
            || -> Result<Vec<f64>> { rest.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect() };
        let spec = match (kind, nums().as_deref()) {
            ("const", Ok([v])) => SequenceSpec::Constant { value: *v },
            ("power", Ok([s, scale])) => SequenceSpec::PowerDecay { s: *s, scale: *scale },
            ("power", Ok([s])) => SequenceSpec::PowerDecay { s: *s, scale: 0.5 },
            ("geometric", Ok([r])) => SequenceSpec::Geometric { ratio: *r },
            ("stretched", Ok([rate, exponent])) => {
                SequenceSpec::StretchedExponential { rate: *rate, exponent: *exponent }
            }
            ("list", Ok(v)) => SequenceSpec::ExplicitList { values: v.to_vec() },
            ("reciprocal", _) => SequenceSpec::ReciprocalOdd { rule: rest.parse()? },
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSequence {
    spec: SequenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_limit: Option<usize>,
}

pub fn make_sequence(spec: SequenceSpec) -> Result<AlphaSequence> {
    AlphaSequence::new(spec)
}

impl AlphaSequence {
    pub fn new(spec: SequenceSpec) -> Result<Self> {
        let out_of_range = |what: String| Err(Error::ParameterOutOfRange(what));
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        let mut length_limit = None;
        match &spec {
            SequenceSpec::Constant { value } => {
                if !open_unit(*value) {
                    return out_of_range(format!("constant value {value} not in (0,1)"));
                }
            }
            SequenceSpec::PowerDecay { s, scale } => {
                if !(*s > 0.0 && s.is_finite()) {
                    return out_of_range(format!("power-decay exponent {s} must be positive"));
                }
                // α_1 = scale is the largest term.
                if !open_unit(*scale) {
                    return out_of_range(format!("power-decay scale {scale} not in (0,1)"));
                }
            }
            SequenceSpec::Geometric { ratio } => {
                if !open_unit(*ratio) {
                    return out_of_range(format!("geometric ratio {ratio} not in (0,1)"));
                }
            }
            SequenceSpec::ReciprocalOdd { rule } => {
                rule.check(1).map_err(|e| Error::ParameterOutOfRange(e.to_string()))?;
                length_limit = rule.len();
            }
            SequenceSpec::StretchedExponential { rate, exponent } => {
                if !(*rate > 0.0 && rate.is_finite()) || !(*exponent > 0.0 && *exponent <= 1.0) {
                    return out_of_range(format!(
                        "stretched exponential needs rate > 0 and exponent in (0,1], got {rate}, {exponent}"
                    ));
                }
            }
            SequenceSpec::ExplicitList { values } => {
                if values.is_empty() {
                    return out_of_range("empty explicit list".into());
                }
                if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !open_unit(**v)) {
                    return out_of_range(format!("explicit value α_{} = {v} not in (0,1)", i + 1));
                }
                length_limit = Some(values.len());
            }
        }
        Ok(Self { spec, length_limit })
    }

    pub fn spec(&self) -> &SequenceSpec {
        &self.spec
    }

    pub fn length_limit(&self) -> Option<usize> {
        self.length_limit
    }

    /// `α_n` for `n ≥ 1`.
    pub fn value(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::ParameterOutOfRange("sequences are indexed from n = 1".into()));
        }
        if let Some(len) = self.length_limit {
            if n > len {
                return Err(Error::DepthOutOfRange { requested: n, available: len });
            }
        }
        let nf = n as f64;
        Ok(match &self.spec {
            SequenceSpec::Constant { value } => *value,
            SequenceSpec::PowerDecay { s, scale } => scale * nf.powf(-s),
            SequenceSpec::Geometric { ratio } => ratio.powi(n as i32),
            SequenceSpec::ReciprocalOdd { rule } => 1.0 / rule.base(n).unwrap() as f64,
            SequenceSpec::StretchedExponential { rate, exponent } => (-rate * nf.powf(*exponent)).exp(),
            SequenceSpec::ExplicitList { values } => values[n - 1],
        })
    }

    /// Analytic convergence of `Σ α_n^e`, or `None` when the family admits no
    /// closed-form test.
    pub fn power_sum_converges(&self, e: f64) -> Option<bool> {
        if !(e > 0.0) {
            return Some(false);
        }
        match &self.spec {
            SequenceSpec::Constant { .. } => Some(false),
            SequenceSpec::Geometric { .. } | SequenceSpec::StretchedExponential { .. } => Some(true),
            SequenceSpec::PowerDecay { s, .. } => Some(s * e > 1.0),
            SequenceSpec::ReciprocalOdd { rule } => match rule {
                BaseRule::Constant(_) | BaseRule::Linear { slope: 0, .. } => Some(false),
                BaseRule::Linear { .. } => Some(e > 1.0),
                BaseRule::List(_) => None,
            },
            SequenceSpec::ExplicitList { .. } => None,
        }
    }

    /// Estimate of the tail `Σ_{n > from} α_n^e` for families with an
    /// analytic handle. `None` when the tail diverges or is unknown.
    pub fn tail_power_sum(&self, e: f64, from: usize) -> Option<f64> {
        if self.power_sum_converges(e) != Some(true) {
            return None;
        }
        let start = from as f64 + 0.5;
        match &self.spec {
            SequenceSpec::Geometric { ratio } => {
                let c = ratio.powf(e);
                Some(c.powi(from as i32 + 1) / (1.0 - c))
            }
            SequenceSpec::PowerDecay { s, scale } => {
                let k = s * e;
                Some(scale.powf(e) * start.powf(1.0 - k) / (k - 1.0))
            }
            SequenceSpec::ReciprocalOdd { rule: BaseRule::Linear { slope, offset } } => {
                let (m, b) = (*slope as f64, *offset as f64);
                Some((m * start + b).powf(1.0 - e) / (m * (e - 1.0)))
            }
            SequenceSpec::StretchedExponential { .. } => {
                let mut acc = 0.0;
                let mut n = from + 1;
                loop {
                    let term = self.value(n).ok()?.powf(e);
                    acc += term;
                    if term < 1e-18 * acc.max(1e-300) || n > from + 50_000_000 {
                        return Some(acc);
                    }
                    n += 1;
                }
            }
            _ => None,
        }
    }
}

/// `Σ_{n=1}^{N} α_n^p`, summed from the largest term down with compensation.
pub fn partial_lp_sum(seq: &AlphaSequence, p: f64, n_max: usize) -> Result<f64> {
    if !(p > 0.0) || n_max == 0 {
        return Err(Error::ParameterOutOfRange(format!("need p > 0 and N ≥ 1, got p = {p}, N = {n_max}")));
    }
    let mut terms = (1..=n_max).map(|n| seq.value(n).map(|a| a.powf(p))).collect::<Result<Vec<f64>>>()?;
    terms.sort_by(|a, b| b.total_cmp(a));
    Ok(neumaier_sum(terms))
}

pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    Ell0,
    EllInfinityNotEll0,
    Neither,
    UnknownHeuristic,
}

/// What the fat/thin dichotomy predicts for an `(α_n)`-regular set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FatThinPrediction {
    /// Positive mass for every doubling measure.
    Fat,
    /// Zero mass for every doubling measure.
    Thin,
    /// Some doubling measures charge the set, others do not.
    NeitherFatNorThin,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSum {
    pub p: f64,
    pub n: usize,
    pub sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub family: SequenceSpec,
    pub membership: Membership,
    pub witness_p: Option<f64>,
    pub prediction: FatThinPrediction,
    pub truncated_sums: Vec<TruncatedSum>,
}

pub const PROBE_EXPONENTS: [f64; 3] = [0.5, 1.0, 2.0];
pub const PROBE_LENGTHS: [usize; 4] = [1024, 2048, 4096, 8192];

pub fn classify_family(spec: &SequenceSpec) -> Result<ClassReport> {
    let seq = AlphaSequence::new(spec.clone())?;
    let (membership, witness_p) = match spec {
        SequenceSpec::Geometric { .. } | SequenceSpec::StretchedExponential { .. } => (Membership::Ell0, Some(1.0)),
        SequenceSpec::PowerDecay { s, .. } => (Membership::EllInfinityNotEll0, Some(2.0 / s)),
        SequenceSpec::Constant { .. } => (Membership::Neither, None),
        SequenceSpec::ReciprocalOdd { rule } => match rule {
            BaseRule::Constant(_) | BaseRule::Linear { slope: 0, .. } => (Membership::Neither, None),
            BaseRule::Linear { .. } => (Membership::EllInfinityNotEll0, Some(2.0)),
            BaseRule::List(_) => (Membership::UnknownHeuristic, None),
        },
        SequenceSpec::ExplicitList { .. } => (Membership::UnknownHeuristic, None),
    };
    let prediction = match membership {
        Membership::Ell0 => FatThinPrediction::Fat,
        Membership::Neither => FatThinPrediction::Thin,
        Membership::EllInfinityNotEll0 => FatThinPrediction::NeitherFatNorThin,
        Membership::UnknownHeuristic => FatThinPrediction::Undetermined,
    };
    let mut truncated_sums = Vec::new();
    for &p in &PROBE_EXPONENTS {
        let lengths: Vec<usize> = match seq.length_limit() {
            Some(len) => vec![len],
            None => PROBE_LENGTHS.to_vec(),
        };
        for n in lengths {
            truncated_sums.push(TruncatedSum { p, n, sum: partial_lp_sum(&seq, p, n)? });
        }
    }
    Ok(ClassReport { family: spec.clone(), membership, witness_p, prediction, truncated_sums })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(spec: SequenceSpec) -> AlphaSequence {
        make_sequence(spec).unwrap()
    }

    #[test]
    fn direct_values() {
        assert_eq!(seq(SequenceSpec::Geometric { ratio: 0.5 }).value(3).unwrap(), 0.125);
        let c = seq(SequenceSpec::Constant { value: 1.0 / 3.0 });
        assert!((1..50).all(|n| c.value(n).unwrap() == 1.0 / 3.0));
        let odd = seq(SequenceSpec::ReciprocalOdd { rule: "odd:2n+1".parse().unwrap() });
        assert_eq!(odd.value(2).unwrap(), 0.2);
    }

    #[test]
    fn out_of_range_parameters() {
        assert!(make_sequence(SequenceSpec::Constant { value: 1.0 }).is_err());
        assert!(make_sequence(SequenceSpec::Geometric { ratio: 0.0 }).is_err());
        assert!(make_sequence(SequenceSpec::PowerDecay { s: 1.0, scale: 1.0 }).is_err());
        assert!(make_sequence(SequenceSpec::ExplicitList { values: vec![0.5, 1.5] }).is_err());
        assert!(make_sequence(SequenceSpec::ReciprocalOdd { rule: BaseRule::Constant(4) }).is_err());
        assert!(make_sequence(SequenceSpec::ReciprocalOdd { rule: "odd:3n+1".parse().unwrap() }).is_err());
    }

    #[test]
    fn partial_sums() {
        let g = seq(SequenceSpec::Geometric { ratio: 0.5 });
        assert!((partial_lp_sum(&g, 1.0, 10).unwrap() - 1023.0 / 1024.0).abs() < 1e-15);
        let c = seq(SequenceSpec::Constant { value: 1.0 / 3.0 });
        assert!((partial_lp_sum(&c, 2.0, 9).unwrap() - 1.0).abs() < 1e-15);
        // Σ_{n≤100} (1/(2n))^2 = 0.25 · Σ 1/n^2 (direct summation oracle: 1.6349839001848923).
        let p = seq(SequenceSpec::PowerDecay { s: 1.0, scale: 0.5 });
        let oracle: f64 = (1..=100).map(|n| 1.0 / ((n * n) as f64)).sum();
        assert!((oracle - 1.634983900184892).abs() < 1e-12);
        assert!((partial_lp_sum(&p, 2.0, 100).unwrap() - 0.25 * oracle).abs() < 1e-14);
    }

    #[test]
    fn classification() {
        let r = classify_family(&SequenceSpec::Geometric { ratio: 0.5 }).unwrap();
        assert_eq!(r.membership, Membership::Ell0);
        assert_eq!(r.prediction, FatThinPrediction::Fat);
        let r = classify_family(&SequenceSpec::Constant { value: 1.0 / 3.0 }).unwrap();
        assert_eq!(r.membership, Membership::Neither);
        assert_eq!(r.prediction, FatThinPrediction::Thin);
        let r = classify_family(&SequenceSpec::PowerDecay { s: 1.0, scale: 0.5 }).unwrap();
        assert_eq!(r.membership, Membership::EllInfinityNotEll0);
        assert_eq!(r.witness_p, Some(2.0));
        let r = classify_family(&SequenceSpec::ExplicitList { values: vec![0.1, 0.01, 0.001] }).unwrap();
        assert_eq!(r.membership, Membership::UnknownHeuristic);
        assert_eq!(r.truncated_sums.len(), 3);
    }

    #[test]
    fn base_rule_parsing() {
        assert_eq!("odd:2n+1".parse::<BaseRule>().unwrap(), BaseRule::Linear { slope: 2, offset: 1 });
        assert_eq!("7".parse::<BaseRule>().unwrap(), BaseRule::Constant(7));
        assert_eq!("const:5".parse::<BaseRule>().unwrap(), BaseRule::Constant(5));
        assert_eq!("3,5,7".parse::<BaseRule>().unwrap(), BaseRule::List(vec![3, 5, 7]));
        assert!("odd:xn".parse::<BaseRule>().is_err());
        let r: BaseRule = "odd:2n+1".parse().unwrap();
        assert_eq!(r.to_string().parse::<BaseRule>().unwrap(), r);
    }

    #[test]
    fn sequence_parsing() {
        assert_eq!("geometric:0.5".parse::<SequenceSpec>().unwrap(), SequenceSpec::Geometric { ratio: 0.5 });
        assert_eq!("power:1,0.25".parse::<SequenceSpec>().unwrap(), SequenceSpec::PowerDecay { s: 1.0, scale: 0.25 });
        assert_eq!(
            "reciprocal:odd:2n+1".parse::<SequenceSpec>().unwrap(),
            SequenceSpec::ReciprocalOdd { rule: BaseRule::Linear { slope: 2, offset: 1 } }
        );
        assert_eq!(
            "list:0.5,0.1".parse::<SequenceSpec>().unwrap(),
            SequenceSpec::ExplicitList { values: vec![0.5, 0.1] }
        );
        assert!("geometric".parse::<SequenceSpec>().is_err());
        assert!("power:a".parse::<SequenceSpec>().is_err());
    }

    #[test]
    fn json_shape() {
        let spec = SequenceSpec::Geometric { ratio: 0.5 };
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json, serde_json::json!({"kind": "geometric", "params": {"ratio": 0.5}}));
        let odd: SequenceSpec =
            serde_json::from_str(r#"{"kind":"reciprocal-odd","params":{"rule":"odd:2n+1"}}"#).unwrap();
        assert_eq!(odd, SequenceSpec::ReciprocalOdd { rule: BaseRule::Linear { slope: 2, offset: 1 } });
    }

    #[test]
    fn tails() {
        let g = seq(SequenceSpec::Geometric { ratio: 0.5 });
        assert!((g.tail_power_sum(1.0, 10).unwrap() - 2f64.powi(-10)).abs() < 1e-18);
        let c = seq(SequenceSpec::Constant { value: 0.2 });
        assert!(c.tail_power_sum(1.0, 10).is_none());
        let odd = seq(SequenceSpec::ReciprocalOdd { rule: "odd:2n+1".parse().unwrap() });
        // Σ_{j>5} (2j+1)^{-2} = π²/8 - Σ_{j=0}^{5} (2j+1)^{-2}
        let exact =
            std::f64::consts::PI.powi(2) / 8.0 - (0..=5).map(|j| 1.0 / ((2 * j + 1) as f64).powi(2)).sum::<f64>();
        assert!((odd.tail_power_sum(2.0, 5).unwrap() - exact).abs() < 2e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn families() -> impl Strategy<Value = SequenceSpec> {
            prop_oneof![
                (0.01f64..0.99).prop_map(|value| SequenceSpec::Constant { value }),
                (0.01f64..0.9).prop_map(|ratio| SequenceSpec::Geometric { ratio }),
                (0.2f64..3.0, 0.05f64..0.95).prop_map(|(s, scale)| SequenceSpec::PowerDecay { s, scale }),
                (1.0f64..2.0, 0.5f64..1.0)
                    .prop_map(|(rate, exponent)| SequenceSpec::StretchedExponential { rate, exponent }),
                (1u64..4, 0u64..3).prop_map(|(h, k)| SequenceSpec::ReciprocalOdd {
                    rule: BaseRule::Linear { slope: 2 * k, offset: 2 * h + 1 }
                }),
            ]
        }

        proptest! {
            #[test]
            fn sums_monotone(spec in families(), n in 1usize..200, p in 0.2f64..3.0) {
                let s = make_sequence(spec).unwrap();
                let a = partial_lp_sum(&s, p, n).unwrap();
                let b = partial_lp_sum(&s, p, n + 1).unwrap();
                prop_assert!(b >= a);
                let c = partial_lp_sum(&s, p * 1.5, n).unwrap();
                prop_assert!(c <= a * (1.0 + 1e-12));
            }

            #[test]
            fn ell0_sums_are_cauchy(spec in families()) {
                let report = classify_family(&spec).unwrap();
                if report.membership == Membership::Ell0 {
                    let s = make_sequence(spec).unwrap();
                    for &p in &PROBE_EXPONENTS {
                        let a = partial_lp_sum(&s, p, 4096).unwrap();
                        let b = partial_lp_sum(&s, p, 8192).unwrap();
                        prop_assert!((b - a).abs() <= 1e-6);
                    }
                }
            }

            #[test]
            fn generation_is_deterministic(spec in families(), n in 1usize..500) {
                let a = make_sequence(spec.clone()).unwrap().value(n).unwrap();
                let b = make_sequence(spec).unwrap().value(n).unwrap();
                prop_assert_eq!(a.to_bits(), b.to_bits());
                prop_assert!(a < 1.0 && a >= 0.0);
            }
        }
    }
}
