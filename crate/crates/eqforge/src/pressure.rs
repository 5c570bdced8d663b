//! Topological pressure by four routes.
//!
//! 1. Partition integrals over an expanding leaf: ln ∫ e^{S_n(φ−Φᵘ)} dℓ
//!    grows like P(φ)·n; the estimator fits the slope over the deepest rows,
//!    which cancels the leaf-length offset.
//! 2. A change-of-variables audit: the same integral evaluated over the
//!    n-th image leaf with the expansion Jacobian moved into the arclength
//!    element must reproduce the direct value.
//! 3. Spanning and separated sets in the Bowen metric along the leaf, the
//!    classical definitions, with the usable depth capped where the leaf
//!    sampling stops resolving ε.
//! 4. A transfer-operator discretization on a square grid whose dominant
//!    eigenvalue is e^{P(φ)}.
//!
//! All four strip the potential's constant part before exponentiating and
//! restore it analytically, so estimates are exactly equivariant under
//! φ ↦ φ + c.

use crate::cocycle::FlatPotential;
use crate::error::{EqError, Result};
use crate::leaf::{leaf_dn_table, LeafSegment};
use crate::measures::leaf_weight_table;
use crate::systems::{mat_vec, SystemSpec, TorusPoint};

#[derive(Debug, Clone, Copy)]
pub struct PressureRow {
    pub n: usize,
    /// ln of the order-n partition (or spanning/separated) sum.
    pub log_partition: f64,
    /// log_partition / n.
    pub running: f64,
}

#[derive(Debug, Clone)]
pub struct PressureEstimate {
    pub rows: Vec<PressureRow>,
    /// Least-squares slope of log_partition over the window rows.
    pub extrapolated: f64,
    /// Inclusive n-range used for the slope fit.
    pub window: (usize, usize),
}

/// Least-squares slope of y against x.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in points {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn slope_window(n_max: usize) -> (usize, usize) {
    ((n_max.div_ceil(2)).max(1).min(n_max), n_max)
}

fn estimate_from_rows(rows: Vec<PressureRow>) -> PressureEstimate {
    let n_max = rows.last().map(|r| r.n).unwrap_or(1);
    let window = slope_window(n_max);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n >= window.0 && r.n <= window.1)
        .map(|r| (r.n as f64, r.log_partition))
        .collect();
    let extrapolated = if pts.len() >= 2 {
        fit_slope(&pts)
    } else {
        rows.last().map(|r| r.running).unwrap_or(0.0)
    };
    PressureEstimate {
        rows,
        extrapolated,
        window,
    }
}

/// Pressure from partition integrals over the leaf, orders 1 … n_max.
pub fn pressure_integral(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    n_max: usize,
) -> Result<PressureEstimate> {
    if n_max < 2 {
        return Err(EqError::RangeError(format!(
            "pressure fit needs n_max >= 2, got {n_max}"
        )));
    }
    let table = leaf_weight_table(sys, leaf, pot, n_max)?;
    let rows = (1..=n_max)
        .map(|n| {
            let z = table.log_partition(n)?;
            Ok(PressureRow {
                n,
                log_partition: z,
                running: z / n as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate_from_rows(rows))
}

/// ln of the midpoint-rule approximation of ∫ e^{S_n(φ−Φᵘ)} dℓ over the
/// leaf, with max-shifted summation.
pub fn log_partition(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    n: usize,
) -> Result<f64> {
    leaf_weight_table(sys, leaf, pot, n)?.log_partition(n)
}

#[derive(Debug, Clone, Copy)]
pub struct CovRow {
    pub n: usize,
    /// ln ∫ e^{S_n(φ−Φᵘ)} dℓ over the seed leaf.
    pub direct: f64,
    /// The same integral evaluated over the n-th image leaf, with the
    /// expansion carried by the measured image arclength.
    pub transported: f64,
}

/// Audit the arclength bookkeeping: for each n, integrate e^{S_nφ} against
/// the image-leaf arclength, evaluating the Birkhoff sum by a fresh orbit
/// walk from each segment's preimage midpoint, and compare with the direct
/// partition integral. Both numbers use independent data (Jacobian cocycles
/// versus measured polyline lengths), so agreement certifies the expansion
/// accounting.
pub fn change_of_variables_table(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    ns: &[usize],
    refine_tol: f64,
    cap: usize,
) -> Result<Vec<CovRow>> {
    if ns.is_empty() {
        return Err(EqError::RangeError("no orders requested".into()));
    }
    let mut sorted: Vec<usize> = ns.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let n_top = *sorted.last().expect("nonempty");
    let table = leaf_weight_table(sys, leaf, pot, n_top)?;

    let mut out = Vec::with_capacity(sorted.len());
    let mut image = leaf.clone();
    let mut step = 0usize;
    for &n in &sorted {
        let direct = table.log_partition(n)?;
        if n == 0 {
            out.push(CovRow {
                n,
                direct,
                transported: direct,
            });
            continue;
        }
        while step < n {
            image = crate::leaf::pushforward_leaf(sys, &image, refine_tol, cap)?;
            step += 1;
        }
        let mut terms: Vec<(f64, f64)> = Vec::with_capacity(image.samples().len());
        let mut m = f64::NEG_INFINITY;
        for w in image.samples().windows(2) {
            let len = (w[1].lift[0] - w[0].lift[0]).hypot(w[1].lift[1] - w[0].lift[1]);
            if len <= 0.0 {
                continue;
            }
            let pm = 0.5 * (w[0].param + w[1].param);
            let s = birkhoff_at_param(sys, leaf, pot, pm, n)?;
            m = m.max(s);
            terms.push((len, s));
        }
        let mut z = 0.0;
        for (len, s) in &terms {
            z += len * (s - m).exp();
        }
        if !z.is_finite() || z <= 0.0 {
            return Err(EqError::NonFiniteWeight(format!(
                "transported partition sum {z} at order {n}"
            )));
        }
        let transported = m + z.ln() + n as f64 * pot.constant();
        out.push(CovRow {
            n,
            direct,
            transported,
        });
    }
    Ok(out)
}

/// Relative mismatch |lhs − rhs|/rhs between the image-side and leaf-side
/// evaluations of the order-n partition integral.
pub fn change_of_variables_check(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    n: usize,
    refine_tol: f64,
    cap: usize,
) -> Result<f64> {
    let rows = change_of_variables_table(sys, leaf, pot, &[n], refine_tol, cap)?;
    Ok((rows[0].transported - rows[0].direct).exp_m1().abs())
}

/// S_n of the stripped potential at the leaf point with seed parameter `pm`,
/// walking the forward orbit and carrying the leaf tangent for the
/// geometric part.
fn birkhoff_at_param(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    pm: f64,
    n: usize,
) -> Result<f64> {
    let mut p = leaf.point_at(pm);
    let mut dir = leaf.tangent_at(pm);
    let mut acc = 0.0;
    for k in 0..n {
        let mut val = pot.eval_trig(&p);
        if pot.needs_geometry() {
            let j = sys.jacobian(&p)?;
            let w = mat_vec(&j, dir);
            let nn = w[0].hypot(w[1]);
            if nn < 1e-300 {
                return Err(EqError::DegenerateCocycle { steps: k });
            }
            val += pot.t_geo() * (-nn.ln());
            dir = [w[0] / nn, w[1] / nn];
        }
        acc += val;
        p = sys.apply(&p)?;
    }
    Ok(acc)
}

/// prefix[k][i] = S_k φ at seed sample i, with φ's constant stripped.
fn sample_prefix_sums(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    n_max: usize,
) -> Result<Vec<Vec<f64>>> {
    let samples = leaf.samples();
    let m = samples.len();
    let mut dirs = Vec::with_capacity(m);
    for i in 0..m {
        let (a, b) = if i + 1 < m {
            (samples[i].lift, samples[i + 1].lift)
        } else {
            (samples[i - 1].lift, samples[i].lift)
        };
        let n = (b[0] - a[0]).hypot(b[1] - a[1]);
        if n <= 0.0 {
            return Err(EqError::SeedFailure(format!(
                "degenerate leaf segment at index {i}"
            )));
        }
        dirs.push([(b[0] - a[0]) / n, (b[1] - a[1]) / n]);
    }
    let mut points: Vec<TorusPoint> = (0..m).map(|i| leaf.sample_point(i)).collect();
    let mut prefix = Vec::with_capacity(n_max + 1);
    prefix.push(vec![0.0; m]);
    let mut acc = vec![0.0; m];
    for k in 0..n_max {
        for i in 0..m {
            let p = &points[i];
            let mut val = pot.eval_trig(p);
            if pot.needs_geometry() {
                let j = sys.jacobian(p)?;
                let w = mat_vec(&j, dirs[i]);
                let nn = w[0].hypot(w[1]);
                if nn < 1e-300 {
                    return Err(EqError::DegenerateCocycle { steps: k });
                }
                val += pot.t_geo() * (-nn.ln());
                dirs[i] = [w[0] / nn, w[1] / nn];
            }
            acc[i] += val;
            points[i] = sys.apply(p)?;
        }
        prefix.push(acc.clone());
    }
    Ok(prefix)
}

enum CoverMode {
    Spanning,
    Separated,
}

#[allow(clippy::too_many_arguments)]
fn pressure_cover(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    eps: f64,
    n_max: usize,
    refine_tol: f64,
    cap: usize,
    mode: CoverMode,
) -> Result<PressureEstimate> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(EqError::RangeError(format!(
            "epsilon = {eps} must be positive"
        )));
    }
    if n_max < 2 {
        return Err(EqError::RangeError(format!(
            "cover estimate needs n_max >= 2, got {n_max}"
        )));
    }
    let table = leaf_dn_table(sys, leaf, n_max.saturating_sub(1), refine_tol, cap)?;
    let count = table.sample_count();

    // Depth is usable only while the sample spacing still resolves ε in the
    // deepest iterate entering d_n.
    let mut n_eff = 0;
    for n in 1..=n_max {
        let mut max_gap = 0.0f64;
        for i in 1..count {
            max_gap = max_gap.max(table.position(n - 1, i) - table.position(n - 1, i - 1));
        }
        if 2.0 * max_gap <= eps {
            n_eff = n;
        } else {
            break;
        }
    }
    if n_eff < 3 {
        return Err(EqError::RangeError(format!(
            "epsilon {eps} leaves only {n_eff} usable depths at this leaf sampling"
        )));
    }

    let prefix = sample_prefix_sums(sys, leaf, pot, n_eff)?;
    let mut rows = Vec::with_capacity(n_eff);
    for (n, pref) in prefix.iter().enumerate().skip(1) {
        let chosen = match mode {
            CoverMode::Spanning => continuous_spanning(&table, count, n, eps),
            CoverMode::Separated => continuous_separated(&table, count, n, eps),
        };
        let vals: Vec<f64> = chosen.iter().map(|&x| interp_index(pref, x)).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = vals.iter().map(|v| (v - m).exp()).sum();
        let log_sum = m + z.ln() + n as f64 * pot.constant();
        rows.push(PressureRow {
            n,
            log_partition: log_sum,
            running: log_sum / n as f64,
        });
    }
    Ok(estimate_from_rows(rows))
}

/// Linear interpolation of a per-sample array at a fractional index.
fn interp_index(row: &[f64], x: f64) -> f64 {
    let i = (x.floor() as usize).min(row.len() - 2);
    let t = x - i as f64;
    row[i] + t * (row[i + 1] - row[i])
}

/// Positions increase along the leaf, so the walks below advance by solving
/// pos_m(y) − pos_m(x) = ε on the interpolated position profiles; working
/// with fractional indices avoids quantizing the step to whole sample gaps,
/// which would bias the counts at depths where ε is only a few gaps wide.
fn advance(
    table: &crate::leaf::LeafDnTable,
    count: usize,
    n: usize,
    x: f64,
    eps: f64,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let last = (count - 1) as f64;
    for m in 0..n {
        let row_at = |z: f64| -> f64 {
            let i = (z.floor() as usize).min(count - 2);
            let t = z - i as f64;
            table.position(m, i) + t * (table.position(m, i + 1) - table.position(m, i))
        };
        let start = row_at(x);
        if row_at(last) - start < eps {
            continue;
        }
        // First whole index past the target, then interpolate back.
        let mut lo = x.floor() as usize;
        let mut hi = count - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if table.position(m, mid) - start < eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (table.position(m, lo), table.position(m, hi));
        let y = if b > a {
            lo as f64 + (start + eps - a) / (b - a)
        } else {
            hi as f64
        };
        let y = y.max(x);
        best = Some(match best {
            Some(cur) => cur.min(y),
            None => y,
        });
    }
    best
}

/// Centers of a greedy ε-cover in d_n, as fractional sample indices.
fn continuous_spanning(
    table: &crate::leaf::LeafDnTable,
    count: usize,
    n: usize,
    eps: f64,
) -> Vec<f64> {
    let mut centers = Vec::new();
    let mut uncovered = 0.0f64;
    let last = (count - 1) as f64;
    loop {
        let center = advance(table, count, n, uncovered, eps).unwrap_or(last);
        centers.push(center);
        match advance(table, count, n, center, eps) {
            Some(reach) if reach < last => {
                uncovered = if reach > center {
                    reach
                } else {
                    // Degenerate profile; force progress.
                    center + 1.0
                };
                if uncovered >= last {
                    break;
                }
            }
            _ => break,
        }
    }
    centers
}

/// A maximal ε-separated set in d_n, as fractional sample indices.
fn continuous_separated(
    table: &crate::leaf::LeafDnTable,
    count: usize,
    n: usize,
    eps: f64,
) -> Vec<f64> {
    let mut kept = vec![0.0f64];
    let mut x = 0.0f64;
    let last = (count - 1) as f64;
    while let Some(y) = advance(table, count, n, x, eps) {
        if y >= last {
            break;
        }
        let y = if y > x { y } else { x + 1.0 };
        if y >= last {
            break;
        }
        kept.push(y);
        x = y;
    }
    kept
}

/// Pressure from (n, ε)-spanning sets along the leaf.
pub fn pressure_spanning(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    eps: f64,
    n_max: usize,
    refine_tol: f64,
    cap: usize,
) -> Result<PressureEstimate> {
    pressure_cover(
        sys,
        leaf,
        pot,
        eps,
        n_max,
        refine_tol,
        cap,
        CoverMode::Spanning,
    )
}

/// Pressure from (n, ε)-separated sets along the leaf.
pub fn pressure_separated(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    pot: &FlatPotential,
    eps: f64,
    n_max: usize,
    refine_tol: f64,
    cap: usize,
) -> Result<PressureEstimate> {
    pressure_cover(
        sys,
        leaf,
        pot,
        eps,
        n_max,
        refine_tol,
        cap,
        CoverMode::Separated,
    )
}

/// Transfer-operator discretization on a grid_n × grid_n partition.
#[derive(Debug)]
pub struct UlamOracle {
    pub grid_n: usize,
    /// ln of the dominant eigenvalue, plus the stripped constant.
    pub pressure: f64,
    /// ℓ¹ residual ‖Lv − ρv‖ / ρ at the returned eigenvector.
    pub spectral_residual: f64,
    pub iterations: usize,
    /// Cell masses of the discretized equilibrium state (left ⊙ right
    /// Perron vectors, normalized), row-major by (row = y cell, col = x cell).
    pub gibbs: Vec<f64>,
}

fn cell_index(p: &TorusPoint, g: usize) -> usize {
    let gx = ((p.x() * g as f64) as usize).min(g - 1);
    let gy = ((p.y() * g as f64) as usize).min(g - 1);
    gy * g + gx
}

/// Build and solve the weighted Ulam matrix
/// L[j→i] = e^{(φ−Φᵘ)(c_j)} · frac(samples of cell j landing in cell i).
/// Cell samples are a stratified √s × √s subgrid, so the matrix is a pure
/// function of the configuration.
pub fn ulam_pressure(
    sys: &SystemSpec,
    pot: &FlatPotential,
    grid_n: usize,
    samples_per_cell: usize,
    iters: usize,
    tol: f64,
    back_steps: usize,
) -> Result<UlamOracle> {
    if !(2..=2000).contains(&grid_n) {
        return Err(EqError::RangeError(format!(
            "grid_n = {grid_n} outside [2, 2000]"
        )));
    }
    if samples_per_cell == 0 {
        return Err(EqError::RangeError("samples_per_cell must be >= 1".into()));
    }
    let g = grid_n;
    let cells = g * g;
    let psi = pot.minus_geometric();
    let side = (samples_per_cell as f64).sqrt().round().max(1.0) as usize;
    let strata = side * side;

    // Sparse columns: targets and the column's total weight multiplier.
    let mut columns: Vec<Vec<(u32, f64)>> = Vec::with_capacity(cells);
    for j in 0..cells {
        let (jy, jx) = (j / g, j % g);
        let mut counts: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
        for sy in 0..side {
            for sx in 0..side {
                let u = (sx as f64 + 0.5) / side as f64;
                let v = (sy as f64 + 0.5) / side as f64;
                let p = TorusPoint::new((jx as f64 + u) / g as f64, (jy as f64 + v) / g as f64);
                let q = sys.apply(&p)?;
                *counts.entry(cell_index(&q, g) as u32).or_insert(0) += 1;
            }
        }
        let center = TorusPoint::new((jx as f64 + 0.5) / g as f64, (jy as f64 + 0.5) / g as f64);
        let mut w = psi.eval_trig(&center);
        if psi.needs_geometry() {
            w += psi.t_geo() * crate::cocycle::geometric_potential(sys, &center, back_steps)?;
        }
        let scale = w.exp();
        if !scale.is_finite() {
            return Err(EqError::NonFiniteWeight(format!(
                "cell weight e^{w} is not finite"
            )));
        }
        columns.push(
            counts
                .into_iter()
                .map(|(i, c)| (i, scale * c as f64 / strata as f64))
                .collect(),
        );
    }

    let apply_mat = |v: &[f64], transpose: bool| -> Vec<f64> {
        let mut out = vec![0.0; cells];
        for (j, col) in columns.iter().enumerate() {
            if transpose {
                let mut acc = 0.0;
                for (i, w) in col {
                    acc += w * v[*i as usize];
                }
                out[j] = acc;
            } else {
                let vj = v[j];
                if vj != 0.0 {
                    for (i, w) in col {
                        out[*i as usize] += w * vj;
                    }
                }
            }
        }
        out
    };

    let power = |transpose: bool| -> Result<(Vec<f64>, f64, f64, usize)> {
        let mut v = vec![1.0 / cells as f64; cells];
        let mut residual = f64::INFINITY;
        for it in 1..=iters {
            let w = apply_mat(&v, transpose);
            let norm: f64 = w.iter().sum();
            if !norm.is_finite() || norm <= 0.0 {
                return Err(EqError::NonFiniteWeight(format!(
                    "power iteration norm {norm}"
                )));
            }
            let rho = norm;
            residual = w
                .iter()
                .zip(v.iter())
                .map(|(wi, vi)| (wi - rho * vi).abs())
                .sum::<f64>()
                / rho;
            v = w.iter().map(|x| x / norm).collect();
            if residual <= tol {
                return Ok((v, rho, residual, it));
            }
        }
        Err(EqError::NoConvergence { residual, iters })
    };

    let (right, rho, residual, its) = power(false)?;
    let (left, _, _, _) = power(true)?;
    let mut gibbs: Vec<f64> = right.iter().zip(left.iter()).map(|(r, l)| r * l).collect();
    let total: f64 = gibbs.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(EqError::NonFiniteWeight("degenerate Gibbs product".into()));
    }
    for wv in &mut gibbs {
        *wv /= total;
    }
    Ok(UlamOracle {
        grid_n: g,
        pressure: rho.ln() + psi.constant(),
        spectral_residual: residual,
        iterations: its,
        gibbs,
    })
}

impl UlamOracle {
    /// The Gibbs cell masses as an atom cloud at cell centers.
    pub fn gibbs_measure(&self) -> Result<crate::measures::EmpiricalMeasure> {
        let g = self.grid_n;
        let atoms = self
            .gibbs
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let (jy, jx) = (j / g, j % g);
                (
                    TorusPoint::new((jx as f64 + 0.5) / g as f64, (jy as f64 + 0.5) / g as f64),
                    *w,
                )
            })
            .collect();
        crate::measures::EmpiricalMeasure::from_atoms(atoms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::PotentialSpec;
    use crate::leaf::seed_leaf;

    const LOG_LAMBDA_U: f64 = 0.9624236501192069;

    #[test]
    fn integral_pressure_of_zero_potential() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.3, 1e-3, 40).unwrap();
        let est = pressure_integral(&sys, &leaf, &FlatPotential::zero(), 12).unwrap();
        assert!(
            (est.extrapolated - LOG_LAMBDA_U).abs() < 1e-9,
            "{}",
            est.extrapolated
        );
        let last = est.rows.last().unwrap();
        let expect = LOG_LAMBDA_U + 0.6f64.ln() / 12.0;
        assert!((last.running - expect).abs() < 1e-10);
        assert_eq!(est.window, (6, 12));
    }

    #[test]
    fn integral_pressure_of_geometric_potential() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.1, 0.7), 0.25, 1e-3, 40).unwrap();
        let pot = FlatPotential::flatten(&PotentialSpec::TGeometric(1.0));
        let est = pressure_integral(&sys, &leaf, &pot, 10).unwrap();
        assert!(est.extrapolated.abs() < 1e-10, "{}", est.extrapolated);
    }

    #[test]
    fn integral_pressure_shift_equivariance() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.2, 1e-3, 40).unwrap();
        let pot = FlatPotential::flatten(&PotentialSpec::TrigPoly(vec![((1, 1), 0.3)]));
        let shifted = FlatPotential::flatten(&PotentialSpec::Sum(vec![
            PotentialSpec::TrigPoly(vec![((1, 1), 0.3)]),
            PotentialSpec::Constant(-2.2),
        ]));
        let a = pressure_integral(&sys, &leaf, &pot, 8).unwrap();
        let b = pressure_integral(&sys, &leaf, &shifted, 8).unwrap();
        assert!((b.extrapolated - (a.extrapolated - 2.2)).abs() < 1e-9);
    }

    #[test]
    fn change_of_variables_closes_for_geometric_family() {
        // With φ in the span of the geometric potential the integrand is
        // smooth at every depth, so the audit isolates the arclength
        // bookkeeping itself and must close to near machine precision.
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.05, 5e-5, 40).unwrap();
        let pot = FlatPotential::flatten(&PotentialSpec::Sum(vec![
            PotentialSpec::TGeometric(0.7),
            PotentialSpec::Constant(0.2),
        ]));
        let rows = change_of_variables_table(&sys, &leaf, &pot, &[1, 5, 10, 15], 0.02, 10_000_000)
            .unwrap();
        for row in rows {
            assert!(
                (row.direct - row.transported).abs() < 1e-8,
                "n = {}: direct {} vs transported {}",
                row.n,
                row.direct,
                row.transported
            );
        }
    }

    #[test]
    fn change_of_variables_closes_for_trig_potential() {
        // The transported side re-walks every orbit from the exact preimage
        // midpoint, so even a rapidly oscillating integrand is evaluated at
        // the same points on both sides and only the independent expansion
        // accounting (cocycle versus measured arclength) is under test.
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.05, 1e-5, 40).unwrap();
        let pot = FlatPotential::flatten(&PotentialSpec::TrigPoly(vec![((1, 0), 0.5)]));
        let rows =
            change_of_variables_table(&sys, &leaf, &pot, &[0, 1, 5, 10, 15], 0.02, 10_000_000)
                .unwrap();
        assert_eq!(rows[0].direct, rows[0].transported);
        for row in rows {
            assert!(
                (row.direct - row.transported).abs() < 1e-6,
                "n = {}: direct {} vs transported {}",
                row.n,
                row.direct,
                row.transported
            );
        }
        let rel = change_of_variables_check(&sys, &leaf, &pot, 15, 0.02, 10_000_000).unwrap();
        assert!(rel < 1e-6, "relative mismatch {rel}");
    }

    #[test]
    fn spanning_recovers_entropy() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.3, 5e-4, 40).unwrap();
        let est = pressure_spanning(
            &sys,
            &leaf,
            &FlatPotential::zero(),
            0.05,
            12,
            0.02,
            10_000_000,
        )
        .unwrap();
        assert!(
            (est.extrapolated - LOG_LAMBDA_U).abs() < 0.03,
            "spanning slope {}",
            est.extrapolated
        );
        // Depth must have been capped well below the requested 12.
        assert!(est.rows.last().unwrap().n <= 7);
    }

    #[test]
    fn separated_recovers_entropy() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.3, 5e-4, 40).unwrap();
        let est = pressure_separated(
            &sys,
            &leaf,
            &FlatPotential::zero(),
            0.05,
            12,
            0.02,
            10_000_000,
        )
        .unwrap();
        assert!(
            (est.extrapolated - LOG_LAMBDA_U).abs() < 0.03,
            "separated slope {}",
            est.extrapolated
        );
    }

    #[test]
    fn spanning_rejects_unresolvable_epsilon() {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.4), 0.3, 1e-2, 40).unwrap();
        let r = pressure_spanning(
            &sys,
            &leaf,
            &FlatPotential::zero(),
            1e-4,
            10,
            0.02,
            10_000_000,
        );
        assert!(matches!(r, Err(EqError::RangeError(_))));
    }

    #[test]
    fn ulam_pressure_of_zero_potential_is_exact() {
        let sys = SystemSpec::cat();
        let o = ulam_pressure(&sys, &FlatPotential::zero(), 60, 32, 500, 1e-9, 40).unwrap();
        // The weighted matrix is the expansion factor times a column-stochastic
        // matrix, so the dominant eigenvalue is exact up to roundoff.
        assert!(
            (o.pressure - LOG_LAMBDA_U).abs() < 1e-9,
            "ulam pressure {}",
            o.pressure
        );
        assert!(o.spectral_residual <= 1e-9);
        // Lebesgue is the equilibrium state here; cell masses are uniform up
        // to sampling noise.
        let g = o.gibbs_measure().unwrap();
        assert!(crate::measures::discrepancy_to_uniform(&g, 2) < 0.05);
    }

    #[test]
    fn ulam_shift_equivariance() {
        let sys = SystemSpec::cat();
        let pot = FlatPotential::flatten(&PotentialSpec::TrigPoly(vec![((0, 1), 0.4)]));
        let shifted = FlatPotential::flatten(&PotentialSpec::Sum(vec![
            PotentialSpec::TrigPoly(vec![((0, 1), 0.4)]),
            PotentialSpec::Constant(1.5),
        ]));
        let a = ulam_pressure(&sys, &pot, 40, 24, 500, 1e-9, 40).unwrap();
        let b = ulam_pressure(&sys, &shifted, 40, 24, 500, 1e-9, 40).unwrap();
        assert_eq!((a.pressure + 1.5).to_bits(), b.pressure.to_bits());
        for (x, y) in a.gibbs.iter().zip(b.gibbs.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn ulam_rejects_bad_grid() {
        let sys = SystemSpec::cat();
        let r = ulam_pressure(&sys, &FlatPotential::zero(), 1, 8, 100, 1e-9, 40);
        assert!(matches!(r, Err(EqError::RangeError(_))));
    }

    #[test]
    fn slope_fit_is_exact_on_lines() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.5 * i as f64 - 2.0)).collect();
        assert!((fit_slope(&pts) - 3.5).abs() < 1e-12);
    }
}
