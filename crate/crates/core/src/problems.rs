//! Built-in problem instances and custom problems from key-value settings.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{Diffusion, EstimatorWeights, ExactSolution, Nonlinearity, ProblemSpec};
use crate::mesh::{Mesh, Point};

pub const PROBLEM_NAMES: [&str; 3] = ["sine-gordon", "singular-sine-gordon", "linear-poisson"];

/// `u*(x) = sin(πx) sin(πy)` on the unit square.
pub fn sine_product() -> ExactSolution {
    ExactSolution {
        value: Arc::new(|x: Point| (PI * x[0]).sin() * (PI * x[1]).sin()),
        gradient: Arc::new(|x: Point| {
            [PI * (PI * x[0]).cos() * (PI * x[1]).sin(), PI * (PI * x[0]).sin() * (PI * x[1]).cos()]
        }),
    }
}

/// Source `f = 2π² u* + b(u*)` for `-Δu + b(u) = f` with `u* = sin(πx) sin(πy)`.
fn manufactured_source(b: Nonlinearity) -> Arc<dyn Fn(Point) -> f64 + Send + Sync> {
    Arc::new(move |x: Point| {
        let u = (PI * x[0]).sin() * (PI * x[1]).sin();
        2.0 * PI * PI * u + b.value(u)
    })
}

pub fn make_problem(name: &str) -> Result<ProblemSpec> {
    match name {
        "sine-gordon" => Ok(ProblemSpec {
            name: name.into(),
            domain: "unit-square".into(),
            diffusion: Diffusion::Identity,
            eps: 1.0,
            reaction_weight: 0.0,
            nonlinearity: Nonlinearity::CubicPlusSine,
            source: manufactured_source(Nonlinearity::CubicPlusSine),
            vector_source: None,
            exact: Some(sine_product()),
            weights: EstimatorWeights::MeshSize,
            quadrature_degree: None,
        }),
        "singular-sine-gordon" => Ok(ProblemSpec {
            name: name.into(),
            domain: "l-shape".into(),
            diffusion: Diffusion::Identity,
            eps: 1e-5,
            reaction_weight: 1.0,
            nonlinearity: Nonlinearity::CubicPlusSine,
            source: Arc::new(|_| 1.0),
            vector_source: None,
            exact: None,
            weights: EstimatorWeights::ReactionRobust,
            quadrature_degree: None,
        }),
        "linear-poisson" => Ok(ProblemSpec {
            name: name.into(),
            domain: "unit-square".into(),
            diffusion: Diffusion::Identity,
            eps: 1.0,
            reaction_weight: 0.0,
            nonlinearity: Nonlinearity::Zero,
            source: manufactured_source(Nonlinearity::Zero),
            vector_source: None,
            exact: Some(sine_product()),
            weights: EstimatorWeights::MeshSize,
            quadrature_degree: None,
        }),
        _ => Err(Error::UnknownProblem(name.into())),
    }
}

/// Initial mesh of a problem's domain.
pub fn initial_mesh(prob: &ProblemSpec) -> Result<Mesh> {
    Mesh::builtin(&prob.domain)
}

/// Builds a problem from flat settings. Recognized keys (all optional):
///
/// | key | values | default |
/// |---|---|---|
/// | `base` | a built-in problem name | none |
/// | `domain` | `unit-square`, `l-shape` | `unit-square` |
/// | `eps` | positive number | 1 |
/// | `reaction_weight` | 0 or 1 | 0 |
/// | `nonlinearity` | `zero`, `linear`, `cubic`, `cubic+sine` | `zero` |
/// | `nonlinearity_coefficient` | coefficient of `linear` | 1 |
/// | `source` | `constant`, `manufactured` | `constant` |
/// | `source_value` | value of the constant source | 1 |
/// | `diffusion_xx`, `diffusion_xy`, `diffusion_yy` | constant matrix entries | identity |
/// | `weights` | `mesh-size`, `robust` | `mesh-size` |
/// | `exact` | `none`, `sine-product` | `none` |
/// | `quadrature_degree` | integer | `max(4p, 2p+2)` |
///
/// `source = manufactured` gives `f = 2π² u* + b(u*)` for the sine product
/// (identity diffusion, `ε = 1`, `κ = 0`) and attaches the exact solution.
pub fn custom_problem(settings: &BTreeMap<String, String>) -> Result<ProblemSpec> {
    let get = |k: &str| settings.get(k).map(String::as_str);
    let num = |k: &str, default: f64| -> Result<f64> {
        match get(k) {
            None => Ok(default),
            Some(v) => v.trim().parse().map_err(|_| Error::Config(format!("{k}: expected a number, got '{v}'"))),
        }
    };
    let mut prob = match get("base") {
        Some(b) => make_problem(b)?,
        None => {
            let mut p = make_problem("linear-poisson")?;
            p.source = Arc::new(|_| 1.0);
            p.exact = None;
            p
        }
    };
    prob.name = "custom".into();
    if let Some(d) = get("domain") {
        Mesh::builtin(d)?;
        prob.domain = d.into();
    }
    prob.eps = num("eps", prob.eps)?;
    prob.reaction_weight = num("reaction_weight", prob.reaction_weight)?;
    if let Some(n) = get("nonlinearity") {
        prob.nonlinearity = match n {
            "zero" => Nonlinearity::Zero,
            "linear" => Nonlinearity::Linear(num("nonlinearity_coefficient", 1.0)?),
            "cubic" => Nonlinearity::Cubic,
            "cubic+sine" => Nonlinearity::CubicPlusSine,
            _ => return Err(Error::Config(format!("nonlinearity: unknown value '{n}'"))),
        };
    }
    match get("source") {
        None => {}
        Some("constant") => {
            let c = num("source_value", 1.0)?;
            prob.source = Arc::new(move |_| c);
        }
        Some("manufactured") => {
            prob.source = manufactured_source(prob.nonlinearity);
            prob.exact = Some(sine_product());
        }
        Some(s) => return Err(Error::Config(format!("source: unknown value '{s}'"))),
    }
    if ["diffusion_xx", "diffusion_xy", "diffusion_yy"].iter().any(|k| settings.contains_key(*k)) {
        let xy = num("diffusion_xy", 0.0)?;
        prob.diffusion = Diffusion::Constant([[num("diffusion_xx", 1.0)?, xy], [xy, num("diffusion_yy", 1.0)?]]);
    }
    if let Some(w) = get("weights") {
        prob.weights = match w {
            "mesh-size" => EstimatorWeights::MeshSize,
            "robust" => EstimatorWeights::ReactionRobust,
            _ => return Err(Error::Config(format!("weights: unknown value '{w}'"))),
        };
    }
    match get("exact") {
        None => {}
        Some("none") => prob.exact = None,
        Some("sine-product") => prob.exact = Some(sine_product()),
        Some(e) => return Err(Error::Config(format!("exact: unknown value '{e}'"))),
    }
    if let Some(q) = get("quadrature_degree") {
        prob.quadrature_degree =
            Some(q.trim().parse().map_err(|_| Error::Config(format!("quadrature_degree: bad value '{q}'")))?);
    }
    prob.validate(&[])?;
    Ok(prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_names() {
        for name in PROBLEM_NAMES {
            let p = make_problem(name).unwrap();
            assert!(initial_mesh(&p).is_ok());
            assert!(p.validate(&[[0.5, 0.5]]).is_ok());
        }
        assert!(matches!(make_problem("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn custom_settings() {
        let mut s = BTreeMap::new();
        s.insert("nonlinearity".to_string(), "cubic".to_string());
        s.insert("source".to_string(), "manufactured".to_string());
        s.insert("domain".to_string(), "l-shape".to_string());
        let p = custom_problem(&s).unwrap();
        assert_eq!(p.nonlinearity, Nonlinearity::Cubic);
        assert!(p.exact.is_some());
        assert_eq!(p.domain, "l-shape");
        s.insert("eps".to_string(), "abc".to_string());
        assert!(matches!(custom_problem(&s), Err(Error::Config(_))));
    }
}
