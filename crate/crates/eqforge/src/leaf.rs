//! Local unstable leaves represented as plane polylines.
//!
//! A leaf is sampled as a polyline in the plane (not on the torus), so
//! pushforwards never have to cut and reglue at the unit-square boundary;
//! the lifted map commutes with integer translations, and points are wrapped
//! only when torus coordinates are actually needed.
//!
//! Each sample carries the arclength parameter it had on the seed leaf.
//! Pushing a leaf forward keeps those parameters, and refinement inserts
//! parameter midpoints whose positions are computed by mapping the
//! corresponding source-leaf point, so every sample on an iterated leaf is
//! an honest image of a seed-leaf point.

use crate::cocycle::unstable_direction;
use crate::error::{EqError, Result};
use crate::systems::{SystemKind, SystemSpec, TorusPoint};

/// One polyline vertex: seed-leaf parameter and plane position.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub param: f64,
    pub lift: [f64; 2],
}

/// A segment of unstable leaf through `base`, parametrized by signed seed
/// arclength in [−radius, radius].
#[derive(Debug, Clone)]
pub struct LeafSegment {
    base: TorusPoint,
    radius: f64,
    samples: Vec<Sample>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

impl LeafSegment {
    pub fn base(&self) -> &TorusPoint {
        &self.base
    }

    /// Seed half-length.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample_point(&self, i: usize) -> TorusPoint {
        TorusPoint::new(self.samples[i].lift[0], self.samples[i].lift[1])
    }

    /// Total arclength of the polyline.
    pub fn arclength(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| dist(w[0].lift, w[1].lift))
            .sum()
    }

    /// Plane position at a seed parameter, by linear interpolation.
    pub fn lift_at(&self, param: f64) -> [f64; 2] {
        let s = &self.samples;
        if param <= s[0].param {
            return s[0].lift;
        }
        if param >= s[s.len() - 1].param {
            return s[s.len() - 1].lift;
        }
        let mut lo = 0;
        let mut hi = s.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if s[mid].param <= param {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (&s[lo], &s[hi]);
        let t = if b.param > a.param {
            (param - a.param) / (b.param - a.param)
        } else {
            0.0
        };
        [
            a.lift[0] + t * (b.lift[0] - a.lift[0]),
            a.lift[1] + t * (b.lift[1] - a.lift[1]),
        ]
    }

    pub fn point_at(&self, param: f64) -> TorusPoint {
        let z = self.lift_at(param);
        TorusPoint::new(z[0], z[1])
    }

    /// Unit tangent of the polyline segment containing the parameter.
    pub fn tangent_at(&self, param: f64) -> [f64; 2] {
        let s = &self.samples;
        let mut lo = 0;
        let mut hi = s.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if s[mid].param <= param {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d = [s[hi].lift[0] - s[lo].lift[0], s[hi].lift[1] - s[lo].lift[1]];
        let n = d[0].hypot(d[1]);
        [d[0] / n, d[1] / n]
    }

    /// Midpoint-rule quadrature nodes over seed segments: parameter midpoint,
    /// interpolated plane position, and seed-length weight.
    pub fn midpoint_quadrature(&self) -> Vec<(f64, [f64; 2], f64)> {
        self.samples
            .windows(2)
            .map(|w| {
                let pm = 0.5 * (w[0].param + w[1].param);
                (pm, midpoint(w[0].lift, w[1].lift), w[1].param - w[0].param)
            })
            .collect()
    }
}

/// Internal polyline with provenance flags: `Some(i)` marks the i-th sample
/// of the seed leaf, `None` marks a refinement insertion.
type Tagged = Vec<(Sample, Option<usize>)>;

fn map_tagged(sys: &SystemSpec, src: &Tagged, refine_tol: f64, cap: usize) -> Result<Tagged> {
    let mut out: Tagged = Vec::with_capacity(src.len());
    let first = src[0].0;
    let z = sys.apply_plane(first.lift)?;
    out.push((
        Sample {
            param: first.param,
            lift: z,
        },
        src[0].1,
    ));
    for w in src.windows(2) {
        let (a, tag_a) = (w[0].0, w[0].1);
        let (b, tag_b) = (w[1].0, w[1].1);
        let _ = tag_a;
        let da = out.last().expect("output nonempty").0.lift;
        let db = sys.apply_plane(b.lift)?;
        refine_segment(
            sys,
            (a.param, a.lift, da),
            (b.param, b.lift, db),
            tag_b,
            refine_tol,
            cap,
            0,
            &mut out,
        )?;
    }
    Ok(out)
}

/// Append the refinement of one mapped segment (excluding its left endpoint,
/// which is already in `out`). The midpoint test compares the mapped
/// source-midpoint against the chord midpoint; a sag above `refine_tol`
/// times the chord length splits the segment.
#[allow(clippy::too_many_arguments)]
fn refine_segment(
    sys: &SystemSpec,
    left: (f64, [f64; 2], [f64; 2]),
    right: (f64, [f64; 2], [f64; 2]),
    right_tag: Option<usize>,
    refine_tol: f64,
    cap: usize,
    depth: u32,
    out: &mut Tagged,
) -> Result<()> {
    let (pa, sa, da) = left;
    let (pb, sb, db) = right;
    let pm = 0.5 * (pa + pb);
    if depth < 40 && pm > pa && pm < pb {
        let sm = midpoint(sa, sb);
        let dm = sys.apply_plane(sm)?;
        let chord = dist(da, db);
        let sag = dist(dm, midpoint(da, db));
        if sag > refine_tol * chord + 1e-12 {
            if out.len() + 1 > cap {
                return Err(EqError::RefinementBlowup { cap });
            }
            refine_segment(
                sys,
                (pa, sa, da),
                (pm, sm, dm),
                None,
                refine_tol,
                cap,
                depth + 1,
                out,
            )?;
            refine_segment(
                sys,
                (pm, sm, dm),
                (pb, sb, db),
                right_tag,
                refine_tol,
                cap,
                depth + 1,
                out,
            )?;
            return Ok(());
        }
    }
    if out.len() + 1 > cap {
        return Err(EqError::RefinementBlowup { cap });
    }
    out.push((
        Sample {
            param: pb,
            lift: db,
        },
        right_tag,
    ));
    Ok(())
}

/// Image of a leaf under the map, with curvature-adaptive resampling.
pub fn pushforward_leaf(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    refine_tol: f64,
    cap: usize,
) -> Result<LeafSegment> {
    let tagged: Tagged = leaf
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, Some(i)))
        .collect();
    let mapped = map_tagged(sys, &tagged, refine_tol, cap)?;
    Ok(LeafSegment {
        base: sys.apply(&leaf.base)?,
        radius: leaf.radius,
        samples: mapped.into_iter().map(|(s, _)| s).collect(),
    })
}

pub fn leaf_arclength(leaf: &LeafSegment) -> f64 {
    leaf.arclength()
}

fn uniform_resample(
    samples: &[Sample],
    radius: f64,
    max_spacing: f64,
    cap: usize,
) -> Result<Vec<Sample>> {
    let n = ((2.0 * radius) / max_spacing).ceil().max(1.0) as usize;
    if n + 1 > cap {
        return Err(EqError::RefinementBlowup { cap });
    }
    let tmp = LeafSegment {
        base: TorusPoint::new(0.0, 0.0),
        radius,
        samples: samples.to_vec(),
    };
    let step = 2.0 * radius / n as f64;
    Ok((0..=n)
        .map(|i| {
            let param = -radius + i as f64 * step;
            Sample {
                param,
                lift: tmp.lift_at(param),
            }
        })
        .collect())
}

/// Cut a polyline to arclength `radius` on each side of the vertex with
/// parameter closest to `center_param`, then rewrite parameters as signed
/// arclength from that vertex.
fn trim_to_radius(samples: &[Sample], center_param: f64, radius: f64) -> Result<Vec<Sample>> {
    let center = samples
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (a.param - center_param)
                .abs()
                .partial_cmp(&(b.param - center_param).abs())
                .expect("params are finite")
        })
        .map(|(i, _)| i)
        .expect("polyline nonempty");
    let mut out = vec![Sample {
        param: 0.0,
        lift: samples[center].lift,
    }];
    let mut acc = 0.0;
    for i in (center + 1)..samples.len() {
        let seg = dist(samples[i - 1].lift, samples[i].lift);
        if acc + seg >= radius {
            let t = (radius - acc) / seg;
            let a = samples[i - 1].lift;
            let b = samples[i].lift;
            out.push(Sample {
                param: radius,
                lift: [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            });
            acc = radius;
            break;
        }
        acc += seg;
        out.push(Sample {
            param: acc,
            lift: samples[i].lift,
        });
    }
    if acc < radius {
        return Err(EqError::SeedFailure(format!(
            "leaf reaches only {acc:.6} of the requested {radius} on the right"
        )));
    }
    let mut acc = 0.0;
    let mut left = Vec::new();
    for i in (0..center).rev() {
        let seg = dist(samples[i + 1].lift, samples[i].lift);
        if acc + seg >= radius {
            let t = (radius - acc) / seg;
            let a = samples[i + 1].lift;
            let b = samples[i].lift;
            left.push(Sample {
                param: -radius,
                lift: [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            });
            acc = radius;
            break;
        }
        acc += seg;
        left.push(Sample {
            param: -acc,
            lift: samples[i].lift,
        });
    }
    if acc < radius {
        return Err(EqError::SeedFailure(format!(
            "leaf reaches only {acc:.6} of the requested {radius} on the left"
        )));
    }
    left.reverse();
    left.extend(out);
    Ok(left)
}

/// Construct the local unstable leaf of radius `delta` through `x`, sampled
/// at seed spacing at most `max_spacing`.
///
/// For a linear system the leaf is the straight eigenline. For a slowdown it
/// is grown by iterating a germ seeded on the estimated unstable direction
/// along a short backward orbit; the number of growth steps is capped so
/// that exponential error amplification stays below the seed tolerance,
/// which can displace the realized base point from `x` by up to roughly
/// 1e−5 along the leaf.
pub fn seed_leaf(
    sys: &SystemSpec,
    x: &TorusPoint,
    delta: f64,
    max_spacing: f64,
    back_steps: usize,
) -> Result<LeafSegment> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(EqError::RangeError(format!(
            "delta = {delta} outside (0, 0.5]"
        )));
    }
    if max_spacing.is_nan() || max_spacing <= 0.0 {
        return Err(EqError::RangeError("max_spacing must be positive".into()));
    }
    let cap = 10_000_000;
    match sys.kind() {
        SystemKind::LinearAnosov => {
            let e = sys.unit_unstable();
            let z = x.lift();
            let n = ((2.0 * delta) / max_spacing).ceil().max(1.0) as usize;
            if n + 1 > cap {
                return Err(EqError::RefinementBlowup { cap });
            }
            let step = 2.0 * delta / n as f64;
            let samples = (0..=n)
                .map(|i| {
                    let t = -delta + i as f64 * step;
                    Sample {
                        param: t,
                        lift: [z[0] + t * e.vx, z[1] + t * e.vy],
                    }
                })
                .collect();
            Ok(LeafSegment {
                base: *x,
                radius: delta,
                samples,
            })
        }
        SystemKind::Katok => {
            // Growth steps: enough to contract germ shape error well below
            // the seed tolerance, few enough that integrator noise amplified
            // by the total expansion stays small.
            let m = 16usize;
            let mut grow = 1.0;
            loop {
                let germ_radius = (delta * grow).min(0.45);
                match grow_slowdown_leaf(sys, x, delta, germ_radius, m, back_steps, cap) {
                    Ok(samples) => {
                        let samples = uniform_resample(&samples, delta, max_spacing, cap)?;
                        let mid = samples[samples.len() / 2];
                        return Ok(LeafSegment {
                            base: TorusPoint::new(mid.lift[0], mid.lift[1]),
                            radius: delta,
                            samples,
                        });
                    }
                    Err(EqError::SeedFailure(_)) if grow < 8.0 => grow *= 4.0,
                    Err(e) => return Err(e),
                }
            }
        }
    }
}

fn grow_slowdown_leaf(
    sys: &SystemSpec,
    x: &TorusPoint,
    delta: f64,
    germ_radius: f64,
    m: usize,
    back_steps: usize,
    cap: usize,
) -> Result<Vec<Sample>> {
    let mut y = *x;
    for _ in 0..m {
        y = sys.apply_inverse(&y)?;
    }
    let dir = unstable_direction(sys, &y, back_steps)?.direction;
    let z = y.lift();
    let germ_n = 64usize;
    let step = 2.0 * germ_radius / germ_n as f64;
    let mut work: Vec<Sample> = (0..=germ_n)
        .map(|i| {
            let t = -germ_radius + i as f64 * step;
            Sample {
                param: t,
                lift: [z[0] + t * dir.vx, z[1] + t * dir.vy],
            }
        })
        .collect();
    let hold = 2.0 * delta;
    for _ in 0..m {
        let tagged: Tagged = work.iter().map(|s| (*s, None)).collect();
        let mapped = map_tagged(sys, &tagged, 0.005, cap)?;
        let samples: Vec<Sample> = mapped.into_iter().map(|(s, _)| s).collect();
        // Keep a margin of twice the target radius while growing; param 0
        // tracks the orbit of the germ center throughout.
        work = match trim_to_radius(&samples, 0.0, hold) {
            Ok(t) => t,
            Err(EqError::SeedFailure(_)) => samples,
            Err(e) => return Err(e),
        };
    }
    trim_to_radius(&work, 0.0, delta)
}

/// Positions of the seed samples inside every iterated image of the leaf,
/// supporting Bowen-distance queries along the leaf.
#[derive(Debug)]
pub struct LeafDnTable {
    n_max: usize,
    /// pos[m][i] = arclength of seed sample i inside the m-th image.
    pos: Vec<Vec<f64>>,
}

impl LeafDnTable {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn sample_count(&self) -> usize {
        self.pos[0].len()
    }

    /// Arclength position of seed sample `i` in the `m`-th image polyline.
    pub fn position(&self, m: usize, i: usize) -> f64 {
        self.pos[m][i]
    }

    /// Bowen distance along the leaf:
    /// max over 0 ≤ m < n of the arclength separation in the m-th image.
    pub fn dn(&self, i: usize, j: usize, n: usize) -> f64 {
        assert!(n >= 1 && n <= self.n_max + 1, "n = {n} out of range");
        let mut best = 0.0f64;
        for m in 0..n {
            let d = (self.pos[m][i] - self.pos[m][j]).abs();
            if d > best {
                best = d;
            }
        }
        best
    }
}

/// Build the position table for `n_max + 1` iterates (m = 0 … n_max).
pub fn leaf_dn_table(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    n_max: usize,
    refine_tol: f64,
    cap: usize,
) -> Result<LeafDnTable> {
    let mut work: Tagged = leaf
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, Some(i)))
        .collect();
    let n_samples = leaf.samples.len();
    let mut pos = Vec::with_capacity(n_max + 1);
    for m in 0..=n_max {
        let mut row = vec![0.0f64; n_samples];
        let mut acc = 0.0;
        let mut prev: Option<[f64; 2]> = None;
        let mut seen = 0usize;
        for (s, tag) in &work {
            if let Some(p) = prev {
                acc += dist(p, s.lift);
            }
            prev = Some(s.lift);
            if let Some(i) = tag {
                row[*i] = acc;
                seen += 1;
            }
        }
        if seen != n_samples {
            return Err(EqError::SeedFailure(format!(
                "lost {} seed samples while iterating the leaf",
                n_samples - seen
            )));
        }
        pos.push(row);
        if m < n_max {
            work = map_tagged(sys, &work, refine_tol, cap)?;
        }
    }
    Ok(LeafDnTable { n_max, pos })
}

/// Bowen distance between two seed samples, one-off convenience.
pub fn leaf_dn(
    sys: &SystemSpec,
    leaf: &LeafSegment,
    i: usize,
    j: usize,
    n: usize,
    refine_tol: f64,
    cap: usize,
) -> Result<f64> {
    let table = leaf_dn_table(sys, leaf, n.saturating_sub(1), refine_tol, cap)?;
    Ok(table.dn(i, j, n))
}
