use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of the count innovation `ζ_t` (mean 1, finite variance).
///
/// Every variant samples by inversion from one uniform draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum InnovationLaw {
    /// Binomial(2, 1/2): variance 1/2.
    #[serde(rename = "binomial_2_half")]
    Binomial2Half,
    /// Poisson(1): variance 1.
    #[serde(rename = "poisson_1")]
    Poisson1,
    /// Finite pmf over `{0, 1, 2, …}`.
    #[serde(rename = "custom_pmf")]
    CustomPmf { pmf: Vec<f64> },
    /// Mean-one law with the given variance: a symmetric three-point law on
    /// `{0, 1, 2}` when `variance <= 1`, a negative binomial otherwise.
    #[serde(rename = "moment_matched")]
    MomentMatched { variance: f64 },
}

impl InnovationLaw {
    /// Renormalize a custom pmf whose mass is within 1e-9 of one.
    pub fn normalized(self) -> Result<Self> {
        match self {
            InnovationLaw::CustomPmf { pmf } => {
                if pmf.is_empty() || pmf.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(Error::Config(
                        "custom pmf must be a nonempty vector of nonnegative probabilities".into(),
                    ));
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("custom pmf sums to {total}, not 1")));
                }
                Ok(InnovationLaw::CustomPmf { pmf: pmf.iter().map(|p| p / total).collect() })
            }
            InnovationLaw::MomentMatched { variance } => {
                if variance >= 0.0 && variance.is_finite() {
                    Ok(self)
                } else {
                    Err(Error::Config(format!("innovation variance {variance} is invalid")))
                }
            }
            other => Ok(other),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InnovationLaw::CustomPmf { pmf } => {
                pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
            }
            _ => 1.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            InnovationLaw::Binomial2Half => 0.5,
            InnovationLaw::Poisson1 => 1.0,
            InnovationLaw::CustomPmf { pmf } => {
                let m = self.mean();
                pmf.iter().enumerate().map(|(k, p)| (k as f64 - m).powi(2) * p).sum()
            }
            InnovationLaw::MomentMatched { variance } => *variance,
        }
    }

    /// Draw `ζ` from a uniform `u ∈ [0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            InnovationLaw::Binomial2Half => {
                if u < 0.25 {
                    0.0
                } else if u < 0.75 {
                    1.0
                } else {
                    2.0
                }
            }
            InnovationLaw::Poisson1 => invert(u, (-1.0f64).exp(), |k, p| p / (k + 1) as f64),
            InnovationLaw::CustomPmf { pmf } => {
                let mut acc = 0.0;
                for (k, p) in pmf.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k as f64;
                    }
                }
                // rounding slack: return the last atom with positive mass
                pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0) as f64
            }
            InnovationLaw::MomentMatched { variance } => {
                let v = *variance;
                if v <= 1.0 {
                    if u < 0.5 * v {
                        0.0
                    } else if u < 1.0 - 0.5 * v {
                        1.0
                    } else {
                        2.0
                    }
                } else {
                    // NB(r, q) with mean r(1-q)/q = 1 and variance 1 + 1/r
                    let r = 1.0 / (v - 1.0);
                    let q = r / (r + 1.0);
                    invert(u, q.powf(r), |k, p| p * (k as f64 + r) / (k + 1) as f64 * (1.0 - q))
                }
            }
        }
    }
}

fn invert(u: f64, p0: f64, next: impl Fn(usize, f64) -> f64) -> f64 {
    let mut k = 0usize;
    let mut p = p0;
    let mut acc = p0;
    while u >= acc && k < 1_000_000 {
        p = next(k, p);
        k += 1;
        acc += p;
        if p == 0.0 && acc < u {
            break;
        }
    }
    k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empirical(law: &InnovationLaw, draws: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..draws).map(|_| law.sample(rng.random())).collect();
        let m = xs.iter().sum::<f64>() / draws as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / draws as f64;
        (m, v)
    }

    #[test]
    fn catalog_moments() {
        for (law, var) in [
            (InnovationLaw::Binomial2Half, 0.5),
            (InnovationLaw::Poisson1, 1.0),
            (InnovationLaw::MomentMatched { variance: 0.3 }, 0.3),
            (InnovationLaw::MomentMatched { variance: 2.5 }, 2.5),
            (InnovationLaw::CustomPmf { pmf: vec![0.25, 0.5, 0.25] }, 0.5),
        ] {
            assert!((law.mean() - 1.0).abs() < 1e-12);
            assert!((law.variance() - var).abs() < 1e-12);
            let (m, v) = empirical(&law, 400_000);
            assert!((m - 1.0).abs() < 0.01, "{law:?} mean {m}");
            assert!((v - var).abs() < 0.05 * var.max(0.2), "{law:?} var {v}");
        }
    }

    #[test]
    fn custom_pmf_normalization() {
        let law = InnovationLaw::CustomPmf { pmf: vec![0.25, 0.5, 0.25 + 5e-10] };
        let InnovationLaw::CustomPmf { pmf } = law.normalized().unwrap() else { panic!() };
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(InnovationLaw::CustomPmf { pmf: vec![0.5, 0.4] }.normalized().is_err());
        assert!(InnovationLaw::CustomPmf { pmf: vec![-0.1, 1.1] }.normalized().is_err());
    }

    #[test]
    fn degenerate_innovation_is_one() {
        let law = InnovationLaw::CustomPmf { pmf: vec![0.0, 1.0] };
        assert_eq!(law.variance(), 0.0);
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(law.sample(u), 1.0);
        }
    }
}
