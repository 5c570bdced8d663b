//! Derivative cocycles, invariant directions, and Birkhoff sums.
//!
//! The unstable direction at a point is approximated by pushing a generic
//! tangent vector forward along a finite backward orbit; the stable
//! direction dually, by pulling back along a forward orbit. The geometric
//! potential −ln‖Df·e^u‖ and Birkhoff sums of arbitrary potentials are built
//! on top. Potentials are specified as a small algebra (constants, the
//! geometric potential scaled by a parameter, trigonometric polynomials,
//! sums) and flattened to a canonical form before evaluation, so that
//! algebraically equal potential forms evaluate identically.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::error::{EqError, Result};
use crate::systems::{mat_inv, mat_vec, Mat2, SystemSpec, TangentVector, TorusPoint};

/// Threshold below which a cocycle norm counts as underflowed.
const COCYCLE_FLOOR: f64 = 1e-300;

/// Symbolic potential, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    Constant(f64),
    /// t · (−ln‖Df·e^u‖).
    TGeometric(f64),
    /// Σ a_k · cos(2π(k₁x + k₂y)).
    TrigPoly(Vec<((i64, i64), f64)>),
    Sum(Vec<PotentialSpec>),
}

/// Canonical flattened form: one constant, one coefficient for the geometric
/// potential, and a sorted list of cosine terms with sign-normalized
/// frequencies. Keeping the constant separate lets weight computations strip
/// it and restore its effect analytically, which makes normalized weights
/// exactly invariant under shifting the potential by a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPotential {
    constant: f64,
    t_geo: f64,
    trig: Vec<((i64, i64), f64)>,
}

fn flatten_into(
    spec: &PotentialSpec,
    constant: &mut f64,
    t_geo: &mut f64,
    trig: &mut BTreeMap<(i64, i64), f64>,
) {
    match spec {
        PotentialSpec::Zero => {}
        PotentialSpec::Constant(v) => *constant += v,
        PotentialSpec::TGeometric(t) => *t_geo += t,
        PotentialSpec::TrigPoly(terms) => {
            for ((k1, k2), a) in terms {
                if *k1 == 0 && *k2 == 0 {
                    // cos 0 = 1.
                    *constant += a;
                } else {
                    // cos is even, so (k₁,k₂) and (−k₁,−k₂) are the same term.
                    let key = if *k1 < 0 || (*k1 == 0 && *k2 < 0) {
                        (-k1, -k2)
                    } else {
                        (*k1, *k2)
                    };
                    *trig.entry(key).or_insert(0.0) += a;
                }
            }
        }
        PotentialSpec::Sum(parts) => {
            for part in parts {
                flatten_into(part, constant, t_geo, trig);
            }
        }
    }
}

impl FlatPotential {
    pub fn flatten(spec: &PotentialSpec) -> FlatPotential {
        let mut constant = 0.0;
        let mut t_geo = 0.0;
        let mut trig = BTreeMap::new();
        flatten_into(spec, &mut constant, &mut t_geo, &mut trig);
        FlatPotential {
            constant,
            t_geo,
            trig: trig.into_iter().filter(|(_, a)| *a != 0.0).collect(),
        }
    }

    pub fn zero() -> FlatPotential {
        Self::flatten(&PotentialSpec::Zero)
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn t_geo(&self) -> f64 {
        self.t_geo
    }

    pub fn trig_terms(&self) -> &[((i64, i64), f64)] {
        &self.trig
    }

    /// True if evaluation needs the unstable-direction cocycle.
    pub fn needs_geometry(&self) -> bool {
        self.t_geo != 0.0
    }

    /// The potential φ − Φᵘ that drives reference-measure weights.
    pub fn minus_geometric(&self) -> FlatPotential {
        FlatPotential {
            constant: self.constant,
            t_geo: self.t_geo - 1.0,
            trig: self.trig.clone(),
        }
    }

    /// Position-dependent part that needs no cocycle data.
    pub fn eval_trig(&self, p: &TorusPoint) -> f64 {
        let mut acc = 0.0;
        for ((k1, k2), a) in &self.trig {
            acc += a * (TAU * (*k1 as f64 * p.x() + *k2 as f64 * p.y())).cos();
        }
        acc
    }

    /// Value ignoring the geometric component.
    pub fn eval_static(&self, p: &TorusPoint) -> f64 {
        self.constant + self.eval_trig(p)
    }

    /// Uniform bound on |φ| over the torus.
    pub fn sup_bound(&self, sys: &SystemSpec) -> f64 {
        self.constant.abs()
            + self.t_geo.abs() * sys.expansion_log_bound()
            + self.trig.iter().map(|(_, a)| a.abs()).sum::<f64>()
    }
}

/// An invariant direction estimate with a self-consistency residual: the
/// angle between the estimates produced by the full-length and half-length
/// cocycle runs. The residual contracts like the domination ratio, so it is
/// an a posteriori accuracy certificate.
#[derive(Debug, Clone, Copy)]
pub struct DirectionEstimate {
    pub direction: TangentVector,
    pub residual: f64,
}

fn canonical(v: [f64; 2]) -> TangentVector {
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        TangentVector::new(-v[0], -v[1])
    } else {
        TangentVector::new(v[0], v[1])
    }
}

fn resolve_back_steps(sys: &SystemSpec, back_steps: usize) -> usize {
    if back_steps == 0 {
        sys.default_back_steps()
    } else {
        back_steps
    }
}

/// Unstable direction at p from a backward orbit of length `back_steps`
/// (0 selects the system default).
pub fn unstable_direction(
    sys: &SystemSpec,
    p: &TorusPoint,
    back_steps: usize,
) -> Result<DirectionEstimate> {
    let bs = resolve_back_steps(sys, back_steps);
    let mut orbit = Vec::with_capacity(bs + 1);
    orbit.push(*p);
    for _ in 0..bs {
        let prev = *orbit.last().expect("orbit nonempty");
        orbit.push(sys.apply_inverse(&prev)?);
    }
    orbit.reverse();
    let jac: Vec<Mat2> = orbit[..bs]
        .iter()
        .map(|q| sys.jacobian(q))
        .collect::<Result<_>>()?;

    let run = |start: usize| -> Result<TangentVector> {
        let mut v = [1.0, 0.0];
        for (steps, j) in jac[start..].iter().enumerate() {
            let w = mat_vec(j, v);
            let n = w[0].hypot(w[1]);
            if n < COCYCLE_FLOOR {
                return Err(EqError::DegenerateCocycle { steps });
            }
            v = [w[0] / n, w[1] / n];
        }
        Ok(canonical(v))
    };

    let full = run(0)?;
    let half = run(bs - bs / 2)?;
    Ok(DirectionEstimate {
        direction: full,
        residual: full.angle(&half),
    })
}

/// Stable direction at p from a forward orbit of length `back_steps`
/// (0 selects the system default).
pub fn stable_direction(
    sys: &SystemSpec,
    p: &TorusPoint,
    back_steps: usize,
) -> Result<DirectionEstimate> {
    let bs = resolve_back_steps(sys, back_steps);
    let mut orbit = Vec::with_capacity(bs + 1);
    orbit.push(*p);
    for _ in 0..bs {
        let prev = *orbit.last().expect("orbit nonempty");
        orbit.push(sys.apply(&prev)?);
    }
    let inv_jac: Vec<Mat2> = orbit[..bs]
        .iter()
        .map(|q| sys.jacobian(q).map(|j| mat_inv(&j)))
        .collect::<Result<_>>()?;

    let run = |from: usize| -> Result<TangentVector> {
        let mut v = [1.0, 0.0];
        for (steps, j) in inv_jac[..from].iter().rev().enumerate() {
            let w = mat_vec(j, v);
            let n = w[0].hypot(w[1]);
            if n < COCYCLE_FLOOR {
                return Err(EqError::DegenerateCocycle { steps });
            }
            v = [w[0] / n, w[1] / n];
        }
        Ok(canonical(v))
    };

    let full = run(bs)?;
    let half = run(bs - bs / 2)?;
    Ok(DirectionEstimate {
        direction: full,
        residual: full.angle(&half),
    })
}

/// Geometric potential Φᵘ(p) = −ln‖Df(p)·e^u(p)‖.
pub fn geometric_potential(sys: &SystemSpec, p: &TorusPoint, back_steps: usize) -> Result<f64> {
    Ok(geometric_potential_orbit(sys, p, 1, back_steps)?[0])
}

/// Φᵘ along the forward orbit p, f(p), …, f^{len−1}(p). The unstable
/// direction is resolved once at p and propagated with the same Jacobians
/// that produce the values, so each successive point effectively enjoys a
/// longer cocycle than a fresh estimate would.
pub fn geometric_potential_orbit(
    sys: &SystemSpec,
    p: &TorusPoint,
    len: usize,
    back_steps: usize,
) -> Result<Vec<f64>> {
    if len == 0 {
        return Ok(Vec::new());
    }
    let est = unstable_direction(sys, p, back_steps)?;
    let mut u = [est.direction.vx, est.direction.vy];
    let mut q = *p;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let j = sys.jacobian(&q)?;
        let w = mat_vec(&j, u);
        let n = w[0].hypot(w[1]);
        if n < COCYCLE_FLOOR {
            return Err(EqError::DegenerateCocycle { steps: out.len() });
        }
        out.push(-n.ln());
        u = [w[0] / n, w[1] / n];
        q = sys.apply(&q)?;
    }
    Ok(out)
}

/// Potential value at a single point.
pub fn potential_value(
    sys: &SystemSpec,
    pot: &FlatPotential,
    p: &TorusPoint,
    back_steps: usize,
) -> Result<f64> {
    let mut v = pot.eval_static(p);
    if pot.needs_geometry() {
        v += pot.t_geo * geometric_potential(sys, p, back_steps)?;
    }
    Ok(v)
}

/// Partial Birkhoff sums: returns S_0φ(p), …, S_{n_max}φ(p) with S_0 = 0.
pub fn birkhoff_prefix(
    sys: &SystemSpec,
    pot: &FlatPotential,
    p: &TorusPoint,
    n_max: usize,
    back_steps: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(0.0);
    if n_max == 0 {
        return Ok(out);
    }
    let mut u = if pot.needs_geometry() {
        let est = unstable_direction(sys, p, back_steps)?;
        Some([est.direction.vx, est.direction.vy])
    } else {
        None
    };
    let mut q = *p;
    let mut acc = 0.0;
    for k in 0..n_max {
        let mut val = pot.eval_static(&q);
        if let Some(dir) = u.as_mut() {
            let j = sys.jacobian(&q)?;
            let w = mat_vec(&j, *dir);
            let n = w[0].hypot(w[1]);
            if n < COCYCLE_FLOOR {
                return Err(EqError::DegenerateCocycle { steps: k });
            }
            val += pot.t_geo * (-n.ln());
            *dir = [w[0] / n, w[1] / n];
        }
        acc += val;
        out.push(acc);
        q = sys.apply(&q)?;
    }
    Ok(out)
}

/// Birkhoff sum S_nφ(p) = Σ_{k<n} φ(f^k p).
pub fn birkhoff_sum(
    sys: &SystemSpec,
    pot: &FlatPotential,
    p: &TorusPoint,
    n: usize,
    back_steps: usize,
) -> Result<f64> {
    Ok(*birkhoff_prefix(sys, pot, p, n, back_steps)?
        .last()
        .expect("prefix is nonempty"))
}
