//! Torus dynamics: linear hyperbolic automorphisms of T² = ℝ²/ℤ² and their
//! nonuniformly hyperbolic slowdowns.
//!
//! A `SystemSpec` is either a linear automorphism given by an integer matrix
//! (a b; c d) with |ad−bc| = 1, or a slowdown of such a map near the origin.
//! The slowdown works in the eigenframe of the matrix: outside a disk of
//! radius `katok_r0` the map is the original automorphism; inside, it is the
//! time-one map of a Hamiltonian vector field whose flow decelerates like
//! |s|^(2α) near the fixed point. Using a Hamiltonian localization (stream
//! function μ·s₁s₂·χ(s₁²+s₂²)) keeps the time-one map exactly
//! area-preserving, which a plain radial time change of the linear field is
//! not.

use crate::error::{EqError, Result};

/// 2×2 matrix, row major: [m00, m01, m10, m11].
pub type Mat2 = [f64; 4];

pub fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

pub fn mat_det(m: &Mat2) -> f64 {
    m[0] * m[3] - m[1] * m[2]
}

pub fn mat_inv(m: &Mat2) -> Mat2 {
    let d = mat_det(m);
    [m[3] / d, -m[1] / d, -m[2] / d, m[0] / d]
}

/// A point on the unit torus, coordinates always reduced to [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

fn wrap(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        r - 1.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint {
            x: wrap(x),
            y: wrap(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Canonical lift in [0,1)².
    pub fn lift(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Representative of `self − other` with both coordinates in [−0.5, 0.5).
    pub fn centered_delta(&self, other: &TorusPoint) -> [f64; 2] {
        [center(self.x - other.x), center(self.y - other.y)]
    }
}

/// Reduce a real to its representative in [−0.5, 0.5).
pub fn center(v: f64) -> f64 {
    let r = wrap(v);
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Distance induced by the Euclidean metric on the plane, minimized over
/// integer translates.
pub fn torus_distance(p: &TorusPoint, q: &TorusPoint) -> f64 {
    let d = p.centered_delta(q);
    d[0].hypot(d[1])
}

/// Tangent vector at a torus point (the tangent bundle is trivial).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub vx: f64,
    pub vy: f64,
}

impl TangentVector {
    pub fn new(vx: f64, vy: f64) -> Self {
        TangentVector { vx, vy }
    }

    pub fn norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn normalized(&self) -> TangentVector {
        let n = self.norm();
        TangentVector {
            vx: self.vx / n,
            vy: self.vy / n,
        }
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        self.vx * other.vx + self.vy * other.vy
    }

    /// Angle between the lines spanned by the two vectors, in [0, π/2].
    /// Computed from the cross product so that tiny angles keep full
    /// precision instead of saturating at the acos rounding floor.
    pub fn angle(&self, other: &TangentVector) -> f64 {
        let cross = self.vx * other.vy - self.vy * other.vx;
        let dot = self.dot(other);
        cross.abs().atan2(dot.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    LinearAnosov,
    Katok,
}

/// A hyperbolic torus map together with cached spectral data.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    kind: SystemKind,
    mat: [i64; 4],
    katok_r0: f64,
    katok_alpha: f64,
    ode_step: f64,
    // Cached derived quantities.
    mat_f: Mat2,
    mat_inv_f: Mat2,
    lambda_u: f64,
    lambda_s: f64,
    e_u: TangentVector,
    e_s: TangentVector,
    eig: Mat2,     // columns e_u, e_s
    eig_inv: Mat2, // inverse of `eig`
    mu: f64,       // ln lambda_u
    slow_factor_max: f64,
}

fn unit_eigvec(mat: &[i64; 4], lambda: f64) -> Result<TangentVector> {
    let (a, b, c, d) = (mat[0] as f64, mat[1] as f64, mat[2] as f64, mat[3] as f64);
    let v = if b != 0.0 {
        TangentVector::new(b, lambda - a)
    } else if c != 0.0 {
        TangentVector::new(lambda - d, c)
    } else {
        return Err(EqError::RangeError(
            "matrix is diagonal; no hyperbolic integer matrix is".into(),
        ));
    };
    let mut v = v.normalized();
    if v.vx < 0.0 || (v.vx == 0.0 && v.vy < 0.0) {
        v = TangentVector::new(-v.vx, -v.vy);
    }
    Ok(v)
}

/// Maximal value of the slowdown factor χ + 2uχ' over the disk; bounds the
/// per-unit-time expansion rate of the slowed flow in units of ln λ_u.
fn slow_factor_max(alpha: f64) -> f64 {
    // m(v) = (1+α)(1+2α) v^α − α(3+2α) v^(1+α), maximized at
    // v* = (1+2α)/(3+2α).
    let v = (1.0 + 2.0 * alpha) / (3.0 + 2.0 * alpha);
    let m = (1.0 + alpha) * (1.0 + 2.0 * alpha) * v.powf(alpha)
        - alpha * (3.0 + 2.0 * alpha) * v.powf(1.0 + alpha);
    m.max(1.0)
}

impl SystemSpec {
    pub fn linear_anosov(a: i64, b: i64, c: i64, d: i64) -> Result<SystemSpec> {
        Self::build(SystemKind::LinearAnosov, [a, b, c, d], 0.1, 0.5, 1e-3)
    }

    pub fn katok(
        a: i64,
        b: i64,
        c: i64,
        d: i64,
        r0: f64,
        alpha: f64,
        ode_step: f64,
    ) -> Result<SystemSpec> {
        Self::build(SystemKind::Katok, [a, b, c, d], r0, alpha, ode_step)
    }

    /// The standard cat map (2 1; 1 1).
    pub fn cat() -> SystemSpec {
        Self::linear_anosov(2, 1, 1, 1).expect("cat map is hyperbolic")
    }

    /// Slowdown of the cat map with default parameters.
    pub fn katok_default() -> SystemSpec {
        Self::katok(2, 1, 1, 1, 0.1, 0.5, 1e-3).expect("default slowdown is valid")
    }

    fn build(
        kind: SystemKind,
        mat: [i64; 4],
        r0: f64,
        alpha: f64,
        ode_step: f64,
    ) -> Result<SystemSpec> {
        let det = mat[0] * mat[3] - mat[1] * mat[2];
        let tr = mat[0] + mat[3];
        if det.abs() != 1 {
            return Err(EqError::RangeError(format!(
                "matrix {},{},{},{} is not hyperbolic (|det| = {}, need 1)",
                mat[0],
                mat[1],
                mat[2],
                mat[3],
                det.abs()
            )));
        }
        if tr * tr <= 4 * det {
            return Err(EqError::RangeError(format!(
                "matrix {},{},{},{} is not hyperbolic (trace² ≤ 4·det)",
                mat[0], mat[1], mat[2], mat[3]
            )));
        }
        if det == -1 && tr == 0 {
            return Err(EqError::RangeError(
                "matrix has eigenvalues on the unit circle".into(),
            ));
        }
        if kind == SystemKind::Katok {
            if det != 1 || tr <= 2 {
                return Err(EqError::RangeError(
                    "slowdown construction needs det = 1 and trace > 2".into(),
                ));
            }
            if !(r0 > 0.0 && r0 <= 0.2) {
                return Err(EqError::RangeError(format!(
                    "katok_r0 = {r0} outside (0, 0.2]"
                )));
            }
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(EqError::RangeError(format!(
                    "katok_alpha = {alpha} outside (0, 1)"
                )));
            }
            if !(ode_step > 0.0 && ode_step <= 0.1) {
                return Err(EqError::RangeError(format!(
                    "ode_step = {ode_step} outside (0, 0.1]"
                )));
            }
        }

        let (af, bf, cf, df) = (mat[0] as f64, mat[1] as f64, mat[2] as f64, mat[3] as f64);
        let trf = tr as f64;
        let detf = det as f64;
        let disc = (trf * trf - 4.0 * detf).sqrt();
        let lambda_u = if trf >= 0.0 {
            (trf + disc) / 2.0
        } else {
            // Take the eigenvalue of largest modulus as the expanding one.
            (trf - disc) / 2.0
        };
        let lambda_s = detf / lambda_u;
        let e_u = unit_eigvec(&mat, lambda_u)?;
        let e_s = unit_eigvec(&mat, lambda_s)?;
        let eig: Mat2 = [e_u.vx, e_s.vx, e_u.vy, e_s.vy];
        let eig_det = mat_det(&eig);
        if eig_det.abs() < 1e-12 {
            return Err(EqError::RangeError("eigenvectors are collinear".into()));
        }
        let eig_inv: Mat2 = [
            eig[3] / eig_det,
            -eig[1] / eig_det,
            -eig[2] / eig_det,
            eig[0] / eig_det,
        ];
        let mat_inv_f: Mat2 = if det == 1 {
            [df, -bf, -cf, af]
        } else {
            [-df, bf, cf, -af]
        };
        Ok(SystemSpec {
            kind,
            mat,
            katok_r0: r0,
            katok_alpha: alpha,
            ode_step,
            mat_f: [af, bf, cf, df],
            mat_inv_f,
            lambda_u,
            lambda_s,
            e_u,
            e_s,
            eig,
            eig_inv,
            mu: lambda_u.abs().ln(),
            slow_factor_max: slow_factor_max(alpha),
        })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn matrix(&self) -> [i64; 4] {
        self.mat
    }

    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }

    /// ln |λ_u|.
    pub fn log_lambda_u(&self) -> f64 {
        self.mu
    }

    pub fn katok_r0(&self) -> f64 {
        self.katok_r0
    }

    pub fn katok_alpha(&self) -> f64 {
        self.katok_alpha
    }

    pub fn ode_step(&self) -> f64 {
        self.ode_step
    }

    /// Unit eigenvector for λ_u (the unstable direction of the linear map).
    pub fn unit_unstable(&self) -> TangentVector {
        self.e_u
    }

    /// Unit eigenvector for λ_s.
    pub fn unit_stable(&self) -> TangentVector {
        self.e_s
    }

    /// Default backward-cocycle length used when a caller does not override it.
    pub fn default_back_steps(&self) -> usize {
        match self.kind {
            SystemKind::LinearAnosov => 40,
            SystemKind::Katok => 80,
        }
    }

    /// Conservative bound on |−ln‖Df·u‖| over unit vectors u; used to bound
    /// geometric potentials.
    pub fn expansion_log_bound(&self) -> f64 {
        match self.kind {
            SystemKind::LinearAnosov => {
                let n = self.mat_f.iter().map(|v| v.abs()).sum::<f64>();
                n.ln().max(self.mu)
            }
            SystemKind::Katok => self.mu * self.slow_factor_max + 0.5,
        }
    }

    fn plane_to_eig(&self, c: [f64; 2]) -> [f64; 2] {
        mat_vec(&self.eig_inv, c)
    }

    fn eig_to_plane(&self, s: [f64; 2]) -> [f64; 2] {
        mat_vec(&self.eig, s)
    }

    /// Slowdown profile χ(u) together with the combinations uχ'(u) and
    /// u²χ''(u); all three vanish smoothly enough at u = 0 that the field and
    /// its derivative stay finite.
    fn profile(&self, u: f64) -> (f64, f64, f64) {
        let r0sq = self.katok_r0 * self.katok_r0;
        let v = u / r0sq;
        if v >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        let a = self.katok_alpha;
        let va = v.powf(a);
        let chi = va * (1.0 + a * (1.0 - v));
        let p = a * (1.0 + a) * va * (1.0 - v); // u·χ'(u)
        let q = a * (1.0 + a) * va * ((a - 1.0) * (1.0 - v) - v); // u²·χ''(u)
        (chi, p, q)
    }

    /// Slowdown field in eigen-coordinates: the Hamiltonian field of
    /// μ·s₁s₂·χ(s₁²+s₂²).
    fn field(&self, s: &[f64; 2]) -> [f64; 2] {
        let u = s[0] * s[0] + s[1] * s[1];
        if u < 1e-300 {
            return [0.0, 0.0];
        }
        let (chi, p, _) = self.profile(u);
        let a = chi + 2.0 * (s[1] * s[1] / u) * p;
        let b = chi + 2.0 * (s[0] * s[0] / u) * p;
        [self.mu * s[0] * a, -self.mu * s[1] * b]
    }

    /// Derivative matrix of the slowdown field at s.
    fn field_jacobian(&self, s: &[f64; 2]) -> Mat2 {
        let u = s[0] * s[0] + s[1] * s[1];
        if u < 1e-300 {
            return [0.0; 4];
        }
        let (chi, p, q) = self.profile(u);
        let r1 = s[0] * s[0] / u;
        let r2 = s[1] * s[1] / u;
        let cross = s[0] * s[1] / u;
        let diag = chi + 2.0 * p + 4.0 * r1 * r2 * q;
        [
            self.mu * diag,
            self.mu * cross * (6.0 * p + 4.0 * r2 * q),
            -self.mu * cross * (6.0 * p + 4.0 * r1 * q),
            -self.mu * diag,
        ]
    }

    /// True if the forward unit-time trajectory from eigen-coordinates s
    /// provably never meets the open slowdown disk, so the map is exactly the
    /// linear automorphism there.
    fn exempt_forward(&self, s: &[f64; 2]) -> bool {
        let r0 = self.katok_r0;
        // |s₁| only grows; reaching the disk needs |s₁| < r0 at the start.
        if s[0].abs() >= r0 {
            return true;
        }
        // |s₂| shrinks by at most λ_u^B per unit time.
        if s[1].abs() >= r0 * self.lambda_u.powf(self.slow_factor_max) * 1.01 {
            return true;
        }
        // Orbits conserve μ·s₁s₂·χ; by AM-GM they keep s₁²+s₂² ≥ 2|s₁s₂|.
        2.0 * (s[0] * s[1]).abs() >= r0 * r0
    }

    fn exempt_backward(&self, s: &[f64; 2]) -> bool {
        let r0 = self.katok_r0;
        if s[1].abs() >= r0 {
            return true;
        }
        if s[0].abs() >= r0 * self.lambda_u.powf(self.slow_factor_max) * 1.01 {
            return true;
        }
        2.0 * (s[0] * s[1]).abs() >= r0 * r0
    }

    /// True if the map coincides with the linear automorphism at p because
    /// the whole forward transit provably misses the slowdown disk. Always
    /// true for a linear system.
    pub fn transit_free(&self, p: &TorusPoint) -> bool {
        match self.kind {
            SystemKind::LinearAnosov => true,
            SystemKind::Katok => {
                let c = [center(p.x), center(p.y)];
                self.exempt_forward(&self.plane_to_eig(c))
            }
        }
    }

    /// Backward-transit variant of [`transit_free`](Self::transit_free).
    pub fn transit_free_backward(&self, p: &TorusPoint) -> bool {
        match self.kind {
            SystemKind::LinearAnosov => true,
            SystemKind::Katok => {
                let c = [center(p.x), center(p.y)];
                self.exempt_backward(&self.plane_to_eig(c))
            }
        }
    }

    /// One RK4 step of size h for the (possibly sign-reversed) slowdown flow.
    fn rk4_step(&self, s: [f64; 2], h: f64, dir: f64) -> [f64; 2] {
        let f = |y: &[f64; 2]| {
            let v = self.field(y);
            [dir * v[0], dir * v[1]]
        };
        let k1 = f(&s);
        let k2 = f(&[s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
        let k3 = f(&[s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
        let k4 = f(&[s[0] + h * k3[0], s[1] + h * k3[1]]);
        [
            s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    /// RK4 step for the flow together with its variational equation
    /// J' = DV(s)·J. State layout: [s₁, s₂, j00, j01, j10, j11].
    fn rk4_step_var(&self, y: [f64; 6], h: f64, dir: f64) -> [f64; 6] {
        let f = |z: &[f64; 6]| {
            let s = [z[0], z[1]];
            let v = self.field(&s);
            let dv = self.field_jacobian(&s);
            [
                dir * v[0],
                dir * v[1],
                dir * (dv[0] * z[2] + dv[1] * z[4]),
                dir * (dv[0] * z[3] + dv[1] * z[5]),
                dir * (dv[2] * z[2] + dv[3] * z[4]),
                dir * (dv[2] * z[3] + dv[3] * z[5]),
            ]
        };
        let add = |a: &[f64; 6], b: &[f64; 6], c: f64| {
            let mut r = [0.0; 6];
            for i in 0..6 {
                r[i] = a[i] + c * b[i];
            }
            r
        };
        let k1 = f(&y);
        let k2 = f(&add(&y, &k1, 0.5 * h));
        let k3 = f(&add(&y, &k2, 0.5 * h));
        let k4 = f(&add(&y, &k3, h));
        let mut r = [0.0; 6];
        for i in 0..6 {
            r[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r
    }

    /// Advance by `h`, recursively halving steps that straddle the seam
    /// u = r0² where the field loses a derivative.
    fn span_seam<const N: usize>(
        &self,
        y: [f64; N],
        h: f64,
        dir: f64,
        depth: u32,
        step: &impl Fn(&Self, [f64; N], f64, f64) -> [f64; N],
    ) -> Result<[f64; N]> {
        let r0sq = self.katok_r0 * self.katok_r0;
        let u_before = y[0] * y[0] + y[1] * y[1];
        let out = step(self, y, h, dir);
        if !out[0].is_finite() || !out[1].is_finite() || out[0].abs() + out[1].abs() > 4.0 {
            return Err(EqError::IntegratorDivergence(format!(
                "state left the slowdown chart at step size {h:e}"
            )));
        }
        let u_after = out[0] * out[0] + out[1] * out[1];
        let crosses = (u_before < r0sq) != (u_after < r0sq);
        if crosses && depth < 14 {
            let mid = self.span_seam(y, h / 2.0, dir, depth + 1, step)?;
            return self.span_seam(mid, h / 2.0, dir, depth + 1, step);
        }
        Ok(out)
    }

    fn flow_unit_time(&self, s0: [f64; 2], dir: f64) -> Result<[f64; 2]> {
        let n = (1.0 / self.ode_step).ceil().max(1.0) as usize;
        let h = 1.0 / n as f64;
        let mut s = s0;
        for _ in 0..n {
            s = self.span_seam(s, h, dir, 0, &Self::rk4_step)?;
        }
        Ok(s)
    }

    fn flow_unit_time_var(&self, s0: [f64; 2], dir: f64) -> Result<([f64; 2], Mat2)> {
        let n = (1.0 / self.ode_step).ceil().max(1.0) as usize;
        let h = 1.0 / n as f64;
        let mut y = [s0[0], s0[1], 1.0, 0.0, 0.0, 1.0];
        for _ in 0..n {
            y = self.span_seam(y, h, dir, 0, &Self::rk4_step_var)?;
        }
        Ok(([y[0], y[1]], [y[2], y[3], y[4], y[5]]))
    }

    /// Lift of the map to the plane. Commutes with integer translations via
    /// z + m ↦ image + A·m, so polylines can be transported without seams.
    pub fn apply_plane(&self, z: [f64; 2]) -> Result<[f64; 2]> {
        if self.kind == SystemKind::LinearAnosov {
            return Ok(mat_vec(&self.mat_f, z));
        }
        let k = [z[0].round(), z[1].round()];
        let c = [z[0] - k[0], z[1] - k[1]];
        let s = self.plane_to_eig(c);
        if self.exempt_forward(&s) {
            return Ok(mat_vec(&self.mat_f, z));
        }
        let s1 = self.flow_unit_time(s, 1.0)?;
        let c1 = self.eig_to_plane(s1);
        let ak = mat_vec(&self.mat_f, k);
        Ok([ak[0] + c1[0], ak[1] + c1[1]])
    }

    /// Lift of the inverse map to the plane.
    pub fn apply_inverse_plane(&self, z: [f64; 2]) -> Result<[f64; 2]> {
        if self.kind == SystemKind::LinearAnosov {
            return Ok(mat_vec(&self.mat_inv_f, z));
        }
        let k = [z[0].round(), z[1].round()];
        let c = [z[0] - k[0], z[1] - k[1]];
        let s = self.plane_to_eig(c);
        if self.exempt_backward(&s) {
            return Ok(mat_vec(&self.mat_inv_f, z));
        }
        let s1 = self.flow_unit_time(s, -1.0)?;
        let c1 = self.eig_to_plane(s1);
        let ak = mat_vec(&self.mat_inv_f, k);
        Ok([ak[0] + c1[0], ak[1] + c1[1]])
    }

    pub fn apply(&self, p: &TorusPoint) -> Result<TorusPoint> {
        let z = self.apply_plane(p.lift())?;
        Ok(TorusPoint::new(z[0], z[1]))
    }

    pub fn apply_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        let z = self.apply_inverse_plane(p.lift())?;
        Ok(TorusPoint::new(z[0], z[1]))
    }

    pub fn apply_n(&self, p: &TorusPoint, n: usize) -> Result<TorusPoint> {
        let mut q = *p;
        for _ in 0..n {
            q = self.apply(&q)?;
        }
        Ok(q)
    }

    pub fn apply_inverse_n(&self, p: &TorusPoint, n: usize) -> Result<TorusPoint> {
        let mut q = *p;
        for _ in 0..n {
            q = self.apply_inverse(&q)?;
        }
        Ok(q)
    }

    /// Derivative of the map at p, in torus coordinates.
    pub fn jacobian(&self, p: &TorusPoint) -> Result<Mat2> {
        if self.kind == SystemKind::LinearAnosov {
            return Ok(self.mat_f);
        }
        let c = [center(p.x), center(p.y)];
        let s = self.plane_to_eig(c);
        if self.exempt_forward(&s) {
            return Ok(self.mat_f);
        }
        let (_, j) = self.flow_unit_time_var(s, 1.0)?;
        Ok(mat_mul(&self.eig, &mat_mul(&j, &self.eig_inv)))
    }
}
