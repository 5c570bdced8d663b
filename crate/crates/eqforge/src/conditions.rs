//! Empirical checks of the two dynamical hypotheses behind leaf-pressure
//! equality: a subexponential modulus for center-stable contraction and a
//! sublinear covering time for expanding leaves.
//!
//! Both checks are measurements with declared finite-run cutoffs, not
//! proofs. The contraction probe works on genuine stable-leaf pairs
//! (constructed by offsetting at a deep forward image and pulling back), and
//! the covering probe rasterizes image leaves onto an occupancy grid with a
//! one-cell tube so that "dense at scale mesh" means every cell lies within
//! one mesh unit of the curve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cocycle::stable_direction;
use crate::error::{EqError, Result};
use crate::leaf::{leaf_arclength, pushforward_leaf, seed_leaf};
use crate::pressure::fit_slope;
use crate::systems::{mat_vec, torus_distance, SystemSpec, TorusPoint};

/// Forward steps used when planting stable-leaf offsets. Pulling the offset
/// back this many steps contracts transverse seeding error by the unstable
/// factor, so the resulting pair lies on a common stable leaf to well below
/// the separations being measured.
const GERM_STEPS: usize = 12;

/// Geometric ladder of tightening factors tried for each n.
fn ladder() -> Vec<f64> {
    (0..=10).map(|k| (1u64 << k) as f64).collect()
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub epsilon: f64,
    /// (n, g_min): the smallest ladder factor g such that every sampled
    /// stable pair started at distance ε/g stayed ε-close through step n;
    /// infinite when even the tightest factor failed.
    pub rows: Vec<(usize, f64)>,
    pub sample_count: usize,
}

#[derive(Debug, Clone)]
pub struct CoveringReport {
    pub x: TorusPoint,
    pub delta: f64,
    pub mesh: f64,
    /// (n, h) for every n from the first covering step up to the cap; h is
    /// constant in n because density, once reached, is what the rows record.
    pub rows: Vec<(usize, usize)>,
    /// False when the cap (or the sample budget) was exhausted first.
    pub covered: bool,
}

#[derive(Debug, Clone)]
pub struct ConditionVerdict {
    pub pass: bool,
    /// Regression slope of ln g_min for the contraction check, covering
    /// ratio h/n for the covering check.
    pub statistic: f64,
    pub summary: String,
}

/// Plant a point on the stable leaf of `p` at the given leaf distance: walk
/// `GERM_STEPS` forward carrying the stable direction and its contraction
/// factor, offset there, and pull back. The pullback shrinks any component
/// transverse to the leaf while restoring the requested separation.
fn stable_leaf_point<'a>(
    sys: &'a SystemSpec,
    p: &TorusPoint,
) -> Result<impl Fn(f64) -> Result<TorusPoint> + 'a> {
    let est = stable_direction(sys, p, sys.default_back_steps())?;
    let mut dir = [est.direction.vx, est.direction.vy];
    let mut q = *p;
    let mut contraction = 1.0;
    for _ in 0..GERM_STEPS {
        let j = sys.jacobian(&q)?;
        let w = mat_vec(&j, dir);
        let nn = w[0].hypot(w[1]);
        if nn < 1e-300 {
            return Err(EqError::DegenerateCocycle { steps: GERM_STEPS });
        }
        contraction *= nn;
        dir = [w[0] / nn, w[1] / nn];
        q = sys.apply(&q)?;
    }
    Ok(move |d: f64| {
        let off = TorusPoint::new(
            q.lift()[0] + d * contraction * dir[0],
            q.lift()[1] + d * contraction * dir[1],
        );
        let mut r = off;
        for _ in 0..GERM_STEPS {
            r = sys.apply_inverse(&r)?;
        }
        Ok(r)
    })
}

/// Measure the contraction modulus: for a ladder of tightening factors g,
/// find the deepest step through which every sampled stable pair started at
/// distance ε/g stays ε-close, and report the smallest sufficient g per n.
///
/// Forward separations ride on top of arithmetic noise that the unstable
/// expansion amplifies by λ_uⁿ, so n_max beyond roughly ln(ε/1e−12)/log λ_u
/// measures the arithmetic rather than the dynamics; callers should stay
/// under that horizon.
pub fn estimate_contraction(
    sys: &SystemSpec,
    epsilon: f64,
    n_max: usize,
    pairs: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if !(epsilon > 0.0 && epsilon < 0.2) {
        return Err(EqError::RangeError(format!(
            "epsilon = {epsilon} outside (0, 0.2)"
        )));
    }
    if pairs < 1000 {
        return Err(EqError::RangeError(format!(
            "contraction sampling needs >= 1000 pairs, got {pairs}"
        )));
    }
    if n_max < 1 {
        return Err(EqError::RangeError("n_max must be >= 1".into()));
    }
    let steps = ladder();
    // First step at which some pair started at ε/g escaped ε, per g.
    let mut first_escape = vec![usize::MAX; steps.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..pairs {
        let p = TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
        let plant = stable_leaf_point(sys, &p)?;
        let mut orbit = Vec::with_capacity(n_max + 1);
        orbit.push(p);
        for k in 0..n_max {
            orbit.push(sys.apply(&orbit[k])?);
        }
        for (gi, g) in steps.iter().enumerate() {
            let mut q = plant(epsilon / g)?;
            for (n, target) in orbit.iter().enumerate().take(n_max + 1).skip(1) {
                if n >= first_escape[gi] {
                    break;
                }
                q = sys.apply(&q)?;
                if torus_distance(&q, target) > epsilon {
                    first_escape[gi] = n;
                    break;
                }
            }
        }
    }

    let rows = (1..=n_max)
        .map(|n| {
            let g = steps
                .iter()
                .zip(&first_escape)
                .find(|(_, &esc)| esc > n)
                .map(|(g, _)| *g)
                .unwrap_or(f64::INFINITY);
            (n, g)
        })
        .collect();
    Ok(ContractionReport {
        epsilon,
        rows,
        sample_count: pairs,
    })
}

/// Occupancy grid over the torus with a one-cell tube: a cell counts as
/// occupied when the curve passes through it or any of its eight neighbors,
/// which realizes "within mesh of the curve" at cell resolution.
struct OccupancyGrid {
    g: usize,
    hit: Vec<bool>,
}

impl OccupancyGrid {
    fn new(g: usize) -> OccupancyGrid {
        OccupancyGrid {
            g,
            hit: vec![false; g * g],
        }
    }

    fn mark(&mut self, ix: i64, iy: i64) {
        let g = self.g as i64;
        let x = ix.rem_euclid(g) as usize;
        let y = iy.rem_euclid(g) as usize;
        self.hit[y * self.g + x] = true;
    }

    fn mark_segment(&mut self, a: [f64; 2], b: [f64; 2]) {
        // Shift the segment so traversal arithmetic happens near the origin;
        // cell indices wrap modulo the grid anyway.
        let sx = a[0].floor();
        let sy = a[1].floor();
        let x0 = a[0] - sx;
        let y0 = a[1] - sy;
        let x1 = b[0] - sx;
        let y1 = b[1] - sy;
        let gf = self.g as f64;
        let dx = x1 - x0;
        let dy = y1 - y0;
        let mut ix = (x0 * gf).floor() as i64;
        let mut iy = (y0 * gf).floor() as i64;
        let end_ix = (x1 * gf).floor() as i64;
        let end_iy = (y1 * gf).floor() as i64;
        self.mark(ix, iy);
        let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
        let mut t_max_x = if dx != 0.0 {
            let edge = if dx > 0.0 { ix + 1 } else { ix };
            (edge as f64 / gf - x0) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy != 0.0 {
            let edge = if dy > 0.0 { iy + 1 } else { iy };
            (edge as f64 / gf - y0) / dy
        } else {
            f64::INFINITY
        };
        let t_delta_x = if dx != 0.0 {
            (1.0 / gf / dx).abs()
        } else {
            f64::INFINITY
        };
        let t_delta_y = if dy != 0.0 {
            (1.0 / gf / dy).abs()
        } else {
            f64::INFINITY
        };
        let budget = ((dx.abs() + dy.abs()) * gf) as usize + 4;
        for _ in 0..budget {
            if ix == end_ix && iy == end_iy {
                break;
            }
            if t_max_x < t_max_y {
                ix += step_x;
                t_max_x += t_delta_x;
            } else {
                iy += step_y;
                t_max_y += t_delta_y;
            }
            self.mark(ix, iy);
        }
        self.mark(end_ix, end_iy);
    }

    /// True when every cell lies within one cell of a marked cell.
    fn tube_covers(&self) -> bool {
        let g = self.g as i64;
        for y in 0..g {
            'cells: for x in 0..g {
                for ny in -1..=1i64 {
                    for nx in -1..=1i64 {
                        let xx = (x + nx).rem_euclid(g) as usize;
                        let yy = (y + ny).rem_euclid(g) as usize;
                        if self.hit[yy * self.g + xx] {
                            continue 'cells;
                        }
                    }
                }
                return false;
            }
        }
        true
    }
}

/// Find the first iterate at which the image of W^u(x,δ) is mesh-dense:
/// push the leaf forward, rasterize each image polyline onto a (1/mesh)²
/// occupancy grid, and stop once the one-cell tube reaches every cell.
/// Reaching the cap, or a sample budget of 10⁷ polyline points, reports an
/// uncovered run instead of failing.
pub fn covering_time(
    sys: &SystemSpec,
    x: &TorusPoint,
    delta: f64,
    mesh: f64,
    n_cap: usize,
    refine_tol: f64,
) -> Result<CoveringReport> {
    if !(mesh > 0.0 && mesh < 0.1) {
        return Err(EqError::RangeError(format!(
            "mesh = {mesh} outside (0, 0.1)"
        )));
    }
    if n_cap < 1 {
        return Err(EqError::RangeError("n_cap must be >= 1".into()));
    }
    let g = (1.0 / mesh).round().max(2.0) as usize;
    let cap = 10_000_000usize;
    let spacing = (delta / 64.0).min(mesh);
    let mut leaf = seed_leaf(sys, x, delta, spacing, 0)?;
    let mut h_star = None;
    for h in 1..=n_cap {
        leaf = pushforward_leaf(sys, &leaf, refine_tol.min(mesh), cap)?;
        // Rasterization work grows with the image length; an uncovered run
        // stops once the budget is spent rather than thrashing.
        if leaf_arclength(&leaf) * g as f64 > 5e7 {
            break;
        }
        let mut grid = OccupancyGrid::new(g);
        for w in leaf.samples().windows(2) {
            grid.mark_segment(w[0].lift, w[1].lift);
        }
        if grid.tube_covers() {
            h_star = Some(h);
            break;
        }
    }
    let rows = match h_star {
        Some(h) => (h..=n_cap).map(|n| (n, h)).collect(),
        None => Vec::new(),
    };
    Ok(CoveringReport {
        x: *x,
        delta,
        mesh,
        rows,
        covered: h_star.is_some(),
    })
}

/// Subexponential-modulus check: the regression slope of ln g_min over the
/// deeper half of the report must not exceed 0.01. The threshold is a
/// finite-run convention for "grows slower than any exponential".
pub fn check_c2(report: &ContractionReport) -> Result<ConditionVerdict> {
    if report.rows.len() < 8 {
        return Err(EqError::RangeError(format!(
            "contraction check needs >= 8 rows, got {}",
            report.rows.len()
        )));
    }
    let start = report.rows.len() / 2;
    let window = &report.rows[start..];
    if window.iter().any(|(_, g)| !g.is_finite()) {
        return Ok(ConditionVerdict {
            pass: false,
            statistic: f64::INFINITY,
            summary: format!(
                "ladder exhausted: some depths in the fit window had no sufficient factor (epsilon {})",
                report.epsilon
            ),
        });
    }
    let pts: Vec<(f64, f64)> = window.iter().map(|&(n, g)| (n as f64, g.ln())).collect();
    let slope = fit_slope(&pts);
    let pass = slope <= 0.01;
    Ok(ConditionVerdict {
        pass,
        statistic: slope,
        summary: format!(
            "ln g_min slope {slope:.3e} over n in [{}, {}] from {} pairs ({})",
            window[0].0,
            window[window.len() - 1].0,
            report.sample_count,
            if pass {
                "subexponential"
            } else {
                "exponential trend"
            }
        ),
    })
}

/// Sublinear-covering check: the covering ratio h/n at the deepest probed n
/// must not exceed 0.2. The mesh should come from the contraction report's
/// ladder (mesh = ε/g_min) so the two hypotheses are probed at a common
/// scale; the coupling happens at the call site, which owns both reports.
pub fn check_c3(report: &CoveringReport, n_probe: usize) -> Result<ConditionVerdict> {
    if n_probe < 1 {
        return Err(EqError::RangeError("n_probe must be >= 1".into()));
    }
    if !report.covered {
        return Ok(ConditionVerdict {
            pass: false,
            statistic: f64::INFINITY,
            summary: format!(
                "image leaf never became {}-dense within the cap",
                report.mesh
            ),
        });
    }
    let last = report.rows.last().expect("covered reports have rows");
    if n_probe > last.0 {
        return Err(EqError::RangeError(format!(
            "report rows stop at n = {}, cannot probe n = {n_probe}",
            last.0
        )));
    }
    let first = report.rows[0];
    if n_probe < first.0 {
        let ratio = first.1 as f64 / n_probe as f64;
        return Ok(ConditionVerdict {
            pass: false,
            statistic: ratio,
            summary: format!(
                "not yet {}-dense at n = {n_probe}; first covered at {}",
                report.mesh, first.0
            ),
        });
    }
    let (n, h) = *report
        .rows
        .iter()
        .find(|(n, _)| *n == n_probe)
        .expect("probe inside row range");
    let ratio = h as f64 / n as f64;
    let pass = ratio <= 0.2;
    Ok(ConditionVerdict {
        pass,
        statistic: ratio,
        summary: format!(
            "covering time {h} at mesh {}, ratio {ratio:.4} at n = {n} ({})",
            report.mesh,
            if pass { "sublinear" } else { "not sublinear" }
        ),
    })
}

/// Leaf-ball volume audit: seeded leaves must measure 2ε in arclength to
/// high relative accuracy across base points and radii.
pub fn leaf_volume_bounds(
    sys: &SystemSpec,
    points: &[TorusPoint],
    radii: &[f64],
    max_spacing: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in points {
        for &r in radii {
            let leaf = seed_leaf(sys, p, r, max_spacing, 0)?;
            let len = leaf_arclength(&leaf);
            worst = worst.max((len / (2.0 * r) - 1.0).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_contraction_needs_no_tightening() {
        let sys = SystemSpec::cat();
        let report = estimate_contraction(&sys, 0.05, 12, 1000, 7).unwrap();
        assert_eq!(report.rows.len(), 12);
        for (n, g) in &report.rows {
            assert_eq!(*g, 1.0, "g_min at n = {n}");
        }
        let verdict = check_c2(&report).unwrap();
        assert!(verdict.pass);
        assert!(verdict.statistic.abs() <= 1e-6);
    }

    #[test]
    fn contraction_rows_are_monotone() {
        let sys = SystemSpec::katok_default();
        let report = estimate_contraction(&sys, 0.05, 10, 1000, 3).unwrap();
        for w in report.rows.windows(2) {
            assert!(
                w[1].1 >= w[0].1,
                "g_min decreased: {:?} -> {:?}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn contraction_rejects_bad_inputs() {
        let sys = SystemSpec::cat();
        assert!(matches!(
            estimate_contraction(&sys, 0.5, 10, 1000, 7),
            Err(EqError::RangeError(_))
        ));
        assert!(matches!(
            estimate_contraction(&sys, 0.05, 10, 10, 7),
            Err(EqError::RangeError(_))
        ));
    }

    #[test]
    fn synthetic_modulus_verdicts() {
        let make = |g: fn(usize) -> f64| ContractionReport {
            epsilon: 0.05,
            rows: (1..=400).map(|n| (n, g(n))).collect(),
            sample_count: 1000,
        };
        let constant = make(|_| 1.0);
        assert!(check_c2(&constant).unwrap().pass);
        assert_eq!(check_c2(&constant).unwrap().statistic, 0.0);

        let quadratic = make(|n| (n * n) as f64);
        let v = check_c2(&quadratic).unwrap();
        assert!(v.pass, "polynomial growth must pass, slope {}", v.statistic);

        let exponential = make(|n| (0.1 * n as f64).exp());
        let v = check_c2(&exponential).unwrap();
        assert!(!v.pass);
        assert!((v.statistic - 0.1).abs() < 1e-6);
    }

    #[test]
    fn synthetic_covering_verdicts() {
        let base = CoveringReport {
            x: TorusPoint::new(0.5, 0.5),
            delta: 0.3,
            mesh: 0.02,
            rows: Vec::new(),
            covered: true,
        };
        let linear = CoveringReport {
            rows: (1..=40).map(|n| (n, n)).collect(),
            ..base.clone()
        };
        assert!(!check_c3(&linear, 40).unwrap().pass);

        let logarithmic = CoveringReport {
            rows: (1..=40)
                .map(|n| (n, (n as f64).ln().ceil().max(1.0) as usize))
                .collect(),
            ..base.clone()
        };
        assert!(check_c3(&logarithmic, 40).unwrap().pass);

        let uncovered = CoveringReport {
            covered: false,
            ..base
        };
        let v = check_c3(&uncovered, 40).unwrap();
        assert!(!v.pass);
        assert!(v.statistic.is_infinite());
    }

    #[test]
    fn cat_covering_time_is_small() {
        let sys = SystemSpec::cat();
        let report = covering_time(&sys, &TorusPoint::new(0.5, 0.5), 0.3, 0.02, 40, 0.02).unwrap();
        assert!(report.covered);
        let (_, h) = report.rows[0];
        assert!(h <= 40, "covering time {h}");
        assert!(check_c3(&report, 40).unwrap().pass);
    }

    #[test]
    fn coarser_mesh_never_needs_longer() {
        let sys = SystemSpec::cat();
        let fine = covering_time(&sys, &TorusPoint::new(0.3, 0.7), 0.2, 0.02, 40, 0.02).unwrap();
        let coarse = covering_time(&sys, &TorusPoint::new(0.3, 0.7), 0.2, 0.04, 40, 0.02).unwrap();
        assert!(fine.covered && coarse.covered);
        assert!(coarse.rows[0].1 <= fine.rows[0].1);
    }

    #[test]
    fn halving_delta_costs_at_most_one_extra_step() {
        let sys = SystemSpec::cat();
        let wide = covering_time(&sys, &TorusPoint::new(0.3, 0.7), 0.3, 0.05, 40, 0.02).unwrap();
        let narrow = covering_time(&sys, &TorusPoint::new(0.3, 0.7), 0.15, 0.05, 40, 0.02).unwrap();
        let extra = (2.0f64.ln() / SystemSpec::cat().log_lambda_u()).ceil() as usize + 1;
        assert!(narrow.rows[0].1 <= wide.rows[0].1 + extra);
    }

    #[test]
    fn rasterizer_marks_every_crossed_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let a = [rng.gen::<f64>() * 3.0 - 1.0, rng.gen::<f64>() * 3.0 - 1.0];
            let b = [
                a[0] + rng.gen::<f64>() * 0.4 - 0.2,
                a[1] + rng.gen::<f64>() * 0.4 - 0.2,
            ];
            let g = 50usize;
            let mut grid = OccupancyGrid::new(g);
            grid.mark_segment(a, b);
            // Dense point sampling must not find a crossed cell the
            // traversal missed.
            let steps = 10_000;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let x = a[0] + t * (b[0] - a[0]);
                let y = a[1] + t * (b[1] - a[1]);
                let ix = ((x - x.floor()) * g as f64).floor() as i64;
                let iy = ((y - y.floor()) * g as f64).floor() as i64;
                let idx = (iy.rem_euclid(g as i64) as usize) * g + ix.rem_euclid(g as i64) as usize;
                assert!(grid.hit[idx], "missed cell ({ix},{iy}) at t={t}");
            }
        }
    }

    #[test]
    fn seeded_leaf_lengths_match_radius() {
        let sys = SystemSpec::cat();
        let pts: Vec<TorusPoint> = vec![
            TorusPoint::new(0.1, 0.2),
            TorusPoint::new(0.5, 0.5),
            TorusPoint::new(0.9, 0.4),
        ];
        let worst = leaf_volume_bounds(&sys, &pts, &[0.05, 0.1, 0.3], 1e-3).unwrap();
        assert!(worst <= 1e-6, "worst relative length error {worst}");
    }
}
