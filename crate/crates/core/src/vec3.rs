//! Minimal 3-vector arithmetic on `[f64; 3]`.

pub type Vec3 = [f64; 3];

pub const X_HAT: Vec3 = [1.0, 0.0, 0.0];
pub const Y_HAT: Vec3 = [0.0, 1.0, 0.0];
pub const Z_HAT: Vec3 = [0.0, 0.0, 1.0];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

/// `a + k * b`
#[inline]
pub fn axpy(a: &Vec3, k: f64, b: &Vec3) -> Vec3 {
    [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalized(a: &Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Linear interpolation `a + w (b - a)`.
#[inline]
pub fn lerp(a: &Vec3, b: &Vec3, w: f64) -> Vec3 {
    [
        a[0] + w * (b[0] - a[0]),
        a[1] + w * (b[1] - a[1]),
        a[2] + w * (b[2] - a[2]),
    ]
}

/// Exact solution of `ds/dt = s × ω` for constant `ω` over a time `dt`.
///
/// The spin rotates about `ω̂` by the angle `-|ω| dt` (Rodrigues formula), so
/// its length and its projection on `ω` are preserved to rounding.
#[inline]
pub fn precess(s: &Vec3, omega: &Vec3, dt: f64) -> Vec3 {
    let w2 = dot(omega, omega);
    if w2 == 0.0 {
        return *s;
    }
    let w = w2.sqrt();
    let (sin, cos) = (w * dt).sin_cos();
    let inv = 1.0 / w;
    let axis = [omega[0] * inv, omega[1] * inv, omega[2] * inv];
    let along = dot(&axis, s) * (1.0 - cos);
    let perp = cross(&axis, s);
    [
        s[0] * cos + axis[0] * along - perp[0] * sin,
        s[1] * cos + axis[1] * along - perp[1] * sin,
        s[2] * cos + axis[2] * along - perp[2] * sin,
    ]
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
pub fn orthonormal_frame(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n[0].abs() < 0.9 { X_HAT } else { Y_HAT };
    let e1 = normalized(&cross(n, &helper));
    let e2 = cross(n, &e1);
    (e1, e2)
}
