//! Leaf-supported reference measures and their forward averages.
//!
//! The reference measure of order n on a leaf W is the midpoint-rule
//! discretization of e^{S_n(φ−Φᵘ)} dℓ_W, normalized. Its Cesàro average
//! under the dynamics is the candidate equilibrium state. All measures here
//! are finite atom clouds; transported clouds reuse the very same orbit
//! points, so invariance defects telescope at floating-point exactness.
//!
//! Weights are computed with the potential's constant part stripped and the
//! partition function gets the constant back analytically, which makes the
//! normalized weights exactly invariant under φ ↦ φ + c.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::cocycle::FlatPotential;
use crate::error::{EqError, Result};
use crate::leaf::LeafSegment;
use crate::systems::{mat_vec, torus_distance, SystemSpec, TorusPoint};

/// A probability measure with finitely many atoms.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    atoms: Vec<(TorusPoint, f64)>,
}

impl EmpiricalMeasure {
    /// Normalize nonnegative weights into a probability measure.
    pub fn from_atoms(atoms: Vec<(TorusPoint, f64)>) -> Result<EmpiricalMeasure> {
        let mut total = 0.0;
        for (_, w) in &atoms {
            if !w.is_finite() || *w < 0.0 {
                return Err(EqError::NonFiniteWeight(format!(
                    "atom weight {w} is not a finite nonnegative number"
                )));
            }
            total += w;
        }
        if !total.is_finite() || total <= 0.0 {
            return Err(EqError::NonFiniteWeight(format!(
                "total weight {total} cannot be normalized"
            )));
        }
        Ok(EmpiricalMeasure {
            atoms: atoms.into_iter().map(|(p, w)| (p, w / total)).collect(),
        })
    }

    pub fn atoms(&self) -> &[(TorusPoint, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// ∫ e^{2πi(k₁x + k₂y)} dμ. The zero frequency is exactly 1 because the
    /// measure is a probability measure by construction.
    pub fn fourier(&self, k: (i64, i64)) -> Complex64 {
        if k == (0, 0) {
            return Complex64::new(1.0, 0.0);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, w) in &self.atoms {
            let phase = TAU * (k.0 as f64 * p.x() + k.1 as f64 * p.y());
            acc += w * Complex64::new(phase.cos(), phase.sin());
        }
        acc
    }

    pub fn integrate(&self, f: impl Fn(&TorusPoint) -> f64) -> f64 {
        self.atoms.iter().map(|(p, w)| w * f(p)).sum()
    }
}

/// Push every atom forward; weights are untouched.
pub fn pushforward_measure(sys: &SystemSpec, m: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    let atoms = m
        .atoms
        .iter()
        .map(|(p, w)| Ok((sys.apply(p)?, *w)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalMeasure { atoms })
}

/// (1/n) Σ_{k<n} f^k_* m.
pub fn cesaro_average(
    sys: &SystemSpec,
    m: &EmpiricalMeasure,
    n: usize,
) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(EqError::RangeError("cesaro average needs n >= 1".into()));
    }
    let mut atoms = Vec::with_capacity(m.atoms.len() * n);
    let mut stage = m.clone();
    for k in 0..n {
        atoms.extend(stage.atoms.iter().map(|(p, w)| (*p, w / n as f64)));
        if k + 1 < n {
            stage = pushforward_measure(sys, &stage)?;
        }
    }
    Ok(EmpiricalMeasure { atoms })
}

/// Precomputed orbit and partial-sum data for the reference measures of one
/// leaf: everything the orders n = 1 … n_max share.
#[derive(Debug)]
pub struct LeafWeightTable {
    n_max: usize,
    psi_const: f64,
    seed_w: Vec<f64>,
    /// orbit[k][i] = f^k of the i-th quadrature midpoint, k = 0 … n_max.
    orbit: Vec<Vec<TorusPoint>>,
    /// prefix[k][i] = S_k ψ at the i-th midpoint with ψ's constant stripped.
    prefix: Vec<Vec<f64>>,
}

/// Build the weight table for ψ = φ − Φᵘ on the quadrature midpoints of a
/// seed leaf. The unstable direction at each midpoint is read off the leaf
/// polyline itself (the leaf tangent), then propagated by the same Jacobians
/// for every later orbit point.
pub fn leaf_weight_table(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    n_max: usize,
) -> Result<LeafWeightTable> {
    let psi = pot.minus_geometric();
    let quad = leaf.midpoint_quadrature();
    let m = quad.len();
    let mut seed_w = Vec::with_capacity(m);
    let mut points = Vec::with_capacity(m);
    let mut dirs = Vec::with_capacity(m);
    for (i, (_, lift, w)) in quad.iter().enumerate() {
        seed_w.push(*w);
        points.push(TorusPoint::new(lift[0], lift[1]));
        let s = leaf.samples();
        let a = s[i].lift;
        let b = s[i + 1].lift;
        let n = (b[0] - a[0]).hypot(b[1] - a[1]);
        if n <= 0.0 {
            return Err(EqError::SeedFailure(format!(
                "degenerate leaf segment at index {i}"
            )));
        }
        dirs.push([(b[0] - a[0]) / n, (b[1] - a[1]) / n]);
    }

    let mut orbit = Vec::with_capacity(n_max + 1);
    let mut prefix = Vec::with_capacity(n_max + 1);
    orbit.push(points.clone());
    prefix.push(vec![0.0; m]);
    let mut acc = vec![0.0; m];
    for k in 0..n_max {
        let cur = &orbit[k];
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let p = &cur[i];
            let mut val = psi.eval_trig(p);
            if psi.needs_geometry() {
                let j = sys.jacobian(p)?;
                let w = mat_vec(&j, dirs[i]);
                let n = w[0].hypot(w[1]);
                if n < 1e-300 {
                    return Err(EqError::DegenerateCocycle { steps: k });
                }
                val += psi.t_geo() * (-n.ln());
                dirs[i] = [w[0] / n, w[1] / n];
            }
            acc[i] += val;
            next.push(sys.apply(p)?);
        }
        prefix.push(acc.clone());
        orbit.push(next);
    }
    Ok(LeafWeightTable {
        n_max,
        psi_const: psi.constant(),
        seed_w,
        orbit,
        prefix,
    })
}

impl LeafWeightTable {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Orbit point f^k(y_i).
    pub fn orbit_point(&self, k: usize, i: usize) -> &TorusPoint {
        &self.orbit[k][i]
    }

    fn weights(&self, n: usize) -> Result<(Vec<f64>, f64)> {
        assert!(
            n <= self.n_max,
            "order {n} exceeds table depth {}",
            self.n_max
        );
        let s = &self.prefix[n];
        let mut m = f64::NEG_INFINITY;
        for v in s {
            if !v.is_finite() {
                return Err(EqError::NonFiniteWeight("Birkhoff sum overflowed".into()));
            }
            m = m.max(*v);
        }
        let mut z = 0.0;
        let mut w = Vec::with_capacity(s.len());
        for (i, v) in s.iter().enumerate() {
            let e = self.seed_w[i] * (v - m).exp();
            z += e;
            w.push(e);
        }
        if !z.is_finite() || z <= 0.0 {
            return Err(EqError::NonFiniteWeight(format!(
                "partition sum {z} cannot be normalized"
            )));
        }
        let log_partition = m + z.ln() + n as f64 * self.psi_const;
        for e in &mut w {
            *e /= z;
        }
        Ok((w, log_partition))
    }

    /// ln ∫ e^{S_n(φ−Φᵘ)} dℓ over the seed leaf.
    pub fn log_partition(&self, n: usize) -> Result<f64> {
        Ok(self.weights(n)?.1)
    }

    /// The order-n reference measure on the seed leaf.
    pub fn reference_measure(&self, n: usize) -> Result<EmpiricalMeasure> {
        let (w, _) = self.weights(n)?;
        Ok(EmpiricalMeasure {
            atoms: self.orbit[0].iter().copied().zip(w).collect(),
        })
    }

    /// f^k of the order-n reference measure, using the precomputed orbit.
    pub fn pushforward_reference(&self, n: usize, k: usize) -> Result<EmpiricalMeasure> {
        assert!(k <= self.n_max);
        let (w, _) = self.weights(n)?;
        Ok(EmpiricalMeasure {
            atoms: self.orbit[k].iter().copied().zip(w).collect(),
        })
    }

    /// Cesàro average (1/n) Σ_{k<n} f^k of the order-n reference measure.
    pub fn cesaro_measure(&self, n: usize) -> Result<EmpiricalMeasure> {
        assert!(n >= 1 && n <= self.n_max);
        let (w, _) = self.weights(n)?;
        let mut atoms = Vec::with_capacity(w.len() * n);
        for k in 0..n {
            atoms.extend(
                self.orbit[k]
                    .iter()
                    .copied()
                    .zip(w.iter().map(|v| v / n as f64)),
            );
        }
        Ok(EmpiricalMeasure { atoms })
    }
}

/// Reference measure and log-partition in one call, for callers that do not
/// need to share the table across orders.
pub fn weighted_leaf_measure(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    n: usize,
) -> Result<(EmpiricalMeasure, f64)> {
    let table = leaf_weight_table(sys, leaf, pot, n)?;
    Ok((table.reference_measure(n)?, table.log_partition(n)?))
}

/// Frequencies 0 < max(|k₁|, |k₂|) ≤ kmax, in lexicographic order.
pub fn frequency_dictionary(kmax: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            if (k1, k2) != (0, 0) {
                out.push((k1, k2));
            }
        }
    }
    out
}

/// max over the dictionary of |â(k) − b̂(k)|.
pub fn fourier_discrepancy(a: &EmpiricalMeasure, b: &EmpiricalMeasure, kmax: i64) -> f64 {
    frequency_dictionary(kmax)
        .into_iter()
        .map(|k| (a.fourier(k) - b.fourier(k)).norm())
        .fold(0.0, f64::max)
}

/// max over the dictionary of |â(k)|; the distance to the uniform measure,
/// whose nonzero Fourier coefficients all vanish.
pub fn discrepancy_to_uniform(a: &EmpiricalMeasure, kmax: i64) -> f64 {
    frequency_dictionary(kmax)
        .into_iter()
        .map(|k| a.fourier(k).norm())
        .fold(0.0, f64::max)
}

/// Mass of the closed metric ball.
pub fn mass_in_ball(m: &EmpiricalMeasure, center: &TorusPoint, radius: f64) -> f64 {
    m.atoms
        .iter()
        .filter(|(p, _)| torus_distance(p, center) <= radius)
        .fold(0.0, |acc, (_, w)| acc + w)
}

/// Best fit of `m` by the mixture α·δ₀ + (1−α)·Lebesgue, scanning α over a
/// grid of step 0.001. The point mass at the origin has every Fourier
/// coefficient equal to 1 and Lebesgue has them all 0, so the objective is
/// max over nonzero frequencies of |ĉ_k(m) − α|. Returns (α, residual).
pub fn best_convex_fit(m: &EmpiricalMeasure, kmax: i64) -> (f64, f64) {
    let coeffs: Vec<Complex64> = frequency_dictionary(kmax)
        .into_iter()
        .map(|k| m.fourier(k))
        .collect();
    let mut best = (0.0, f64::INFINITY);
    for step in 0..=1000 {
        let alpha = step as f64 / 1000.0;
        let r = coeffs
            .iter()
            .map(|c| (c - alpha).norm())
            .fold(0.0, f64::max);
        if r < best.1 {
            best = (alpha, r);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::PotentialSpec;
    use crate::leaf::seed_leaf;
    use proptest::prelude::*;

    const LOG_LAMBDA_U: f64 = 0.9624236501192069;

    fn grid_measure(n: usize) -> EmpiricalMeasure {
        let mut atoms = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                atoms.push((
                    TorusPoint::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64),
                    1.0,
                ));
            }
        }
        EmpiricalMeasure::from_atoms(atoms).unwrap()
    }

    #[test]
    fn zero_potential_weights_are_uniform() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.25, 1e-3, 40).unwrap();
        let pot = FlatPotential::zero();
        let table = leaf_weight_table(&sys, &leaf, &pot, 10).unwrap();
        let m = table.reference_measure(10).unwrap();
        let ws: Vec<f64> = m.atoms().iter().map(|(_, w)| *w).collect();
        let lo = ws.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ws.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo - 1.0 < 1e-12);
        let z = table.log_partition(10).unwrap();
        let expect = 10.0 * LOG_LAMBDA_U + 0.5f64.ln();
        assert!((z - expect).abs() < 1e-9, "{z} vs {expect}");
    }

    #[test]
    fn geometric_coefficient_one_cancels_expansion() {
        // φ = Φᵘ makes ψ = 0, so the partition integral is the leaf length
        // at every order.
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.1, 0.7), 0.3, 1e-3, 40).unwrap();
        let pot = FlatPotential::flatten(&PotentialSpec::TGeometric(1.0));
        let table = leaf_weight_table(&sys, &leaf, &pot, 8).unwrap();
        for n in [1usize, 4, 8] {
            let z = table.log_partition(n).unwrap();
            assert!((z - 0.6f64.ln()).abs() < 1e-9, "n = {n}: {z}");
        }
    }

    #[test]
    fn constant_shift_leaves_weights_bit_identical() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.2, 1e-3, 40).unwrap();
        let base = FlatPotential::flatten(&PotentialSpec::TrigPoly(vec![((1, 0), 0.4)]));
        let shifted = FlatPotential::flatten(&PotentialSpec::Sum(vec![
            PotentialSpec::TrigPoly(vec![((1, 0), 0.4)]),
            PotentialSpec::Constant(3.7),
        ]));
        let (m1, z1) = weighted_leaf_measure(&sys, &leaf, &base, 6).unwrap();
        let (m2, z2) = weighted_leaf_measure(&sys, &leaf, &shifted, 6).unwrap();
        for (a, b) in m1.atoms().iter().zip(m2.atoms().iter()) {
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
        assert!((z2 - (z1 + 6.0 * 3.7)).abs() < 1e-9);
    }

    #[test]
    fn uniform_grid_has_tiny_fourier_coefficients() {
        let m = grid_measure(64);
        assert!(discrepancy_to_uniform(&m, 4) < 1e-9);
        let f = m.fourier((0, 0));
        assert_eq!(f, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn ball_mass_of_uniform_grid_matches_area() {
        let m = grid_measure(200);
        let mass = mass_in_ball(&m, &TorusPoint::new(0.5, 0.5), 0.1);
        let area = std::f64::consts::PI * 0.01;
        assert!((mass - area).abs() < 0.003, "mass {mass} vs area {area}");
    }

    #[test]
    fn convex_fit_recovers_mixture() {
        let grid = grid_measure(64);
        let mut atoms: Vec<(TorusPoint, f64)> =
            grid.atoms().iter().map(|(p, w)| (*p, 0.5 * w)).collect();
        atoms.push((TorusPoint::new(0.0, 0.0), 0.5));
        let target = EmpiricalMeasure::from_atoms(atoms).unwrap();
        let (alpha, residual) = best_convex_fit(&target, 4);
        assert!((alpha - 0.5).abs() < 1e-9, "alpha {alpha}");
        assert!(residual < 1e-9);

        let dirac = EmpiricalMeasure::from_atoms(vec![(TorusPoint::new(0.0, 0.0), 1.0)]).unwrap();
        assert_eq!(best_convex_fit(&dirac, 4), (1.0, 0.0));
        let (alpha_uniform, res_uniform) = best_convex_fit(&grid, 4);
        assert_eq!(alpha_uniform, 0.0);
        assert!(res_uniform < 1e-9);
    }

    #[test]
    fn cesaro_invariance_defect_telescopes() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.3, 1e-4, 40).unwrap();
        let pot = FlatPotential::flatten(&PotentialSpec::TrigPoly(vec![((1, 1), 0.3)]));
        let n = 12;
        let table = leaf_weight_table(&sys, &leaf, &pot, n).unwrap();
        let mu = table.cesaro_measure(n).unwrap();
        let pushed = pushforward_measure(&sys, &mu).unwrap();
        let test = |p: &TorusPoint| (TAU * (p.x() + p.y())).cos();
        let defect = (pushed.integrate(test) - mu.integrate(test)).abs();
        assert!(
            defect <= 2.0 / n as f64 + 1e-9,
            "defect {defect} exceeds telescoping bound"
        );
    }

    #[test]
    fn cesaro_average_matches_table_construction() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.1, 1e-3, 40).unwrap();
        let pot = FlatPotential::zero();
        let n = 5;
        let table = leaf_weight_table(&sys, &leaf, &pot, n).unwrap();
        let a = table.cesaro_measure(n).unwrap();
        let b = cesaro_average(&sys, &table.reference_measure(n).unwrap(), n).unwrap();
        assert!(fourier_discrepancy(&a, &b, 3) < 1e-12);
    }

    #[test]
    fn pushforward_keeps_mass() {
        let sys = SystemSpec::cat();
        let m = grid_measure(16);
        let f = pushforward_measure(&sys, &m).unwrap();
        let total: f64 = f.atoms().iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_weights() {
        let atoms = vec![(TorusPoint::new(0.1, 0.2), f64::NAN)];
        assert!(matches!(
            EmpiricalMeasure::from_atoms(atoms),
            Err(EqError::NonFiniteWeight(_))
        ));
        let atoms = vec![(TorusPoint::new(0.1, 0.2), -1.0)];
        assert!(matches!(
            EmpiricalMeasure::from_atoms(atoms),
            Err(EqError::NonFiniteWeight(_))
        ));
    }

    proptest! {
        #[test]
        fn discrepancy_is_a_pseudometric(
            cloud_a in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.1f64..1.0), 1..8),
            cloud_b in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.1f64..1.0), 1..8),
            cloud_c in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.1f64..1.0), 1..8),
        ) {
            let build = |cloud: Vec<(f64, f64, f64)>| {
                EmpiricalMeasure::from_atoms(
                    cloud.into_iter().map(|(x, y, w)| (TorusPoint::new(x, y), w)).collect(),
                )
                .unwrap()
            };
            let a = build(cloud_a);
            let b = build(cloud_b);
            let c = build(cloud_c);
            prop_assert_eq!(fourier_discrepancy(&a, &b, 3), fourier_discrepancy(&b, &a, 3));
            prop_assert!(fourier_discrepancy(&a, &a, 3) == 0.0);
            let ab = fourier_discrepancy(&a, &b, 3);
            let bc = fourier_discrepancy(&b, &c, 3);
            let ac = fourier_discrepancy(&a, &c, 3);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
