use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    H,
    Cnot,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::RX | GateKind::RY | GateKind::RZ)
    }
}

#[cfg(test)]
type Mat2 = [[Complex64; 2]; 2];

#[cfg(test)]
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2×2 matrix of a single-qubit gate.
#[cfg(test)]
pub(crate) fn matrix(kind: GateKind, angle: f64) -> Mat2 {
    let (s, co) = (angle / 2.0).sin_cos();
    match kind {
        GateKind::RX => [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]],
        GateKind::RY => [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]],
        GateKind::RZ => [[c(co, -s), ZERO], [ZERO, c(co, s)]],
        GateKind::H => [
            [c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
            [c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
        ],
        GateKind::Cnot => unreachable!("CNOT has no 2x2 form"),
    }
}

/// `d/dθ` of a rotation matrix.
#[cfg(test)]
pub(crate) fn derivative(kind: GateKind, angle: f64) -> Mat2 {
    let (s, co) = (angle / 2.0).sin_cos();
    let (hs, hc) = (0.5 * s, 0.5 * co);
    match kind {
        GateKind::RX => [[c(-hs, 0.0), c(0.0, -hc)], [c(0.0, -hc), c(-hs, 0.0)]],
        GateKind::RY => [[c(-hs, 0.0), c(-hc, 0.0)], [c(hc, 0.0), c(-hs, 0.0)]],
        GateKind::RZ => [[c(-hs, -hc), ZERO], [ZERO, c(-hs, hc)]],
        _ => unreachable!("only rotations have an angle derivative"),
    }
}

/// Calls `f` on every `(bit = 0, bit = 1)` amplitude pair of qubit `target`.
#[inline(always)]
fn for_pairs(
    amps: &mut [Complex64],
    target: usize,
    mut f: impl FnMut(&mut Complex64, &mut Complex64),
) {
    let stride = 1usize << target;
    for block in amps.chunks_exact_mut(stride << 1) {
        let (lo, hi) = block.split_at_mut(stride);
        for (a, b) in lo.iter_mut().zip(hi) {
            f(a, b);
        }
    }
}

#[cfg(test)]
pub(crate) fn apply_matrix(amps: &mut [Complex64], target: usize, m: &Mat2) {
    for_pairs(amps, target, |a, b| {
        let (x, y) = (*a, *b);
        *a = m[0][0] * x + m[0][1] * y;
        *b = m[1][0] * x + m[1][1] * y;
    });
}

fn rx_pair(angle: f64) -> impl Fn(Complex64, Complex64) -> (Complex64, Complex64) + Copy {
    let (s, co) = (angle / 2.0).sin_cos();
    // −i·s·z = (s·z.im, −s·z.re)
    move |x, y| {
        (
            c(co * x.re + s * y.im, co * x.im - s * y.re),
            c(co * y.re + s * x.im, co * y.im - s * x.re),
        )
    }
}

fn ry_pair(angle: f64) -> impl Fn(Complex64, Complex64) -> (Complex64, Complex64) + Copy {
    let (s, co) = (angle / 2.0).sin_cos();
    move |x, y| (x * co - y * s, x * s + y * co)
}

fn rz_pair(angle: f64) -> impl Fn(Complex64, Complex64) -> (Complex64, Complex64) + Copy {
    let (s, co) = (angle / 2.0).sin_cos();
    let (lo, hi) = (c(co, -s), c(co, s));
    move |x, y| (x * lo, y * hi)
}

#[inline(always)]
fn apply_pair(
    amps: &mut [Complex64],
    target: usize,
    rot: impl Fn(Complex64, Complex64) -> (Complex64, Complex64),
) {
    for_pairs(amps, target, |a, b| (*a, *b) = rot(*a, *b));
}

fn apply_rx(amps: &mut [Complex64], target: usize, angle: f64) {
    apply_pair(amps, target, rx_pair(angle));
}

fn apply_ry(amps: &mut [Complex64], target: usize, angle: f64) {
    apply_pair(amps, target, ry_pair(angle));
}

fn apply_rz(amps: &mut [Complex64], target: usize, angle: f64) {
    apply_pair(amps, target, rz_pair(angle));
}

fn apply_h(amps: &mut [Complex64], target: usize) {
    for_pairs(amps, target, |a, b| {
        let (x, y) = (*a, *b);
        *a = (x + y) * FRAC_1_SQRT_2;
        *b = (x - y) * FRAC_1_SQRT_2;
    });
}

pub(crate) fn apply_single(amps: &mut [Complex64], kind: GateKind, target: usize, angle: f64) {
    match kind {
        GateKind::RX => apply_rx(amps, target, angle),
        GateKind::RY => apply_ry(amps, target, angle),
        GateKind::RZ => apply_rz(amps, target, angle),
        GateKind::H => apply_h(amps, target),
        GateKind::Cnot => unreachable!("CNOT is not a single-qubit gate"),
    }
}

/// Swaps the target-0 and target-1 halves of every block whose control bit is set.
pub(crate) fn apply_cnot(amps: &mut [Complex64], control: usize, target: usize) {
    let (cs, ts) = (1usize << control, 1usize << target);
    if control > target {
        for block in amps.chunks_exact_mut(cs << 1) {
            for pair in block[cs..].chunks_exact_mut(ts << 1) {
                let (lo, hi) = pair.split_at_mut(ts);
                lo.swap_with_slice(hi);
            }
        }
    } else {
        for pair in amps.chunks_exact_mut(ts << 1) {
            let (lo, hi) = pair.split_at_mut(ts);
            for (l, h) in lo
                .chunks_exact_mut(cs << 1)
                .zip(hi.chunks_exact_mut(cs << 1))
            {
                l[cs..].swap_with_slice(&mut h[cs..]);
            }
        }
    }
}

/// Applies the inverse gate: rotations by `−θ`, `H` and `CNOT` are involutions.
pub(crate) fn apply_inverse(
    amps: &mut [Complex64],
    kind: GateKind,
    target: usize,
    control: Option<usize>,
    angle: f64,
) {
    match (kind, control) {
        (GateKind::Cnot, Some(ctrl)) => apply_cnot(amps, ctrl, target),
        (GateKind::H, _) => apply_h(amps, target),
        _ => apply_single(amps, kind, target, -angle),
    }
}

// Im(conj(a)·z) = a.re·z.im − a.im·z.re
#[inline(always)]
fn overlap_rx(a0: Complex64, a1: Complex64, b0: Complex64, b1: Complex64) -> f64 {
    (a0.re * b1.im - a0.im * b1.re) + (a1.re * b0.im - a1.im * b0.re)
}

// Y·φ = (−i·φ₁, i·φ₀)
#[inline(always)]
fn overlap_ry(a0: Complex64, a1: Complex64, b0: Complex64, b1: Complex64) -> f64 {
    (-a0.re * b1.re - a0.im * b1.im) + (a1.re * b0.re + a1.im * b0.im)
}

#[inline(always)]
fn overlap_rz(a0: Complex64, a1: Complex64, b0: Complex64, b1: Complex64) -> f64 {
    (a0.re * b0.im - a0.im * b0.re) - (a1.re * b1.im - a1.im * b1.re)
}

/// `Im⟨λ|G|φ⟩` for the Pauli generator `G` of a rotation on `target`.
///
/// With `φ` the state just after `R(θ) = exp(−iθG/2)`, this equals
/// `2·Re⟨λ|dR/dθ|φ_before⟩`.
#[cfg(test)]
pub(crate) fn generator_overlap(
    lambda: &[Complex64],
    phi: &[Complex64],
    kind: GateKind,
    target: usize,
) -> f64 {
    let mut l = lambda.to_vec();
    let mut p = phi.to_vec();
    adjoint_rotation(&mut l, &mut p, kind, target, 0.0)
}

#[inline(always)]
fn fused_step(
    lambda: &mut [Complex64],
    phi: &mut [Complex64],
    target: usize,
    rot: impl Fn(Complex64, Complex64) -> (Complex64, Complex64),
    overlap: impl Fn(Complex64, Complex64, Complex64, Complex64) -> f64,
) -> f64 {
    let stride = 1usize << target;
    let mut acc = 0.0;
    let blocks = lambda
        .chunks_exact_mut(stride << 1)
        .zip(phi.chunks_exact_mut(stride << 1));
    for (lb, pb) in blocks {
        let (l0, l1) = lb.split_at_mut(stride);
        let (p0, p1) = pb.split_at_mut(stride);
        for k in 0..stride {
            let (a0, a1, b0, b1) = (l0[k], l1[k], p0[k], p1[k]);
            acc += overlap(a0, a1, b0, b1);
            (l0[k], l1[k]) = rot(a0, a1);
            (p0[k], p1[k]) = rot(b0, b1);
        }
    }
    acc
}

/// One backward step over a rotation: returns `Im⟨λ|G|φ⟩` and then applies
/// `R(−θ)` to both `λ` and `φ`.
pub(crate) fn adjoint_rotation(
    lambda: &mut [Complex64],
    phi: &mut [Complex64],
    kind: GateKind,
    target: usize,
    angle: f64,
) -> f64 {
    match kind {
        GateKind::RX => fused_step(lambda, phi, target, rx_pair(-angle), overlap_rx),
        GateKind::RY => fused_step(lambda, phi, target, ry_pair(-angle), overlap_ry),
        GateKind::RZ => fused_step(lambda, phi, target, rz_pair(-angle), overlap_rz),
        _ => unreachable!("only rotations have a generator"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    #[test]
    fn rotations_are_unitary_and_invert() {
        for kind in [GateKind::RX, GateKind::RY, GateKind::RZ] {
            for theta in [-2.1, 0.0, 0.4, 3.0] {
                let p = mul(&matrix(kind, theta), &matrix(kind, -theta));
                for i in 0..2 {
                    for j in 0..2 {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((p[i][j] - c(expect, 0.0)).norm() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let h = 1e-6;
        for kind in [GateKind::RX, GateKind::RY, GateKind::RZ] {
            let theta = 0.83;
            let (p, m) = (matrix(kind, theta + h), matrix(kind, theta - h));
            let d = derivative(kind, theta);
            for i in 0..2 {
                for j in 0..2 {
                    let fd = (p[i][j] - m[i][j]) / (2.0 * h);
                    assert!((fd - d[i][j]).norm() < 1e-9, "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn specialised_kernels_match_generic_matrix() {
        let base: Vec<Complex64> = (0..8)
            .map(|i| c(0.1 * i as f64, 0.05 - 0.02 * i as f64))
            .collect();
        for kind in [GateKind::RX, GateKind::RY, GateKind::RZ, GateKind::H] {
            for target in 0..3 {
                let mut fast = base.clone();
                let mut generic = base.clone();
                apply_single(&mut fast, kind, target, 1.3);
                apply_matrix(&mut generic, target, &matrix(kind, 1.3));
                for (a, b) in fast.iter().zip(&generic) {
                    assert!((a - b).norm() < 1e-15);
                }
            }
        }
    }

    fn naive_cnot(amps: &[Complex64], control: usize, target: usize) -> Vec<Complex64> {
        let mut out = amps.to_vec();
        for (i, &a) in amps.iter().enumerate() {
            let j = if i >> control & 1 == 1 {
                i ^ (1 << target)
            } else {
                i
            };
            out[j] = a;
        }
        out
    }

    #[test]
    fn block_cnot_matches_index_definition() {
        let base: Vec<Complex64> = (0..16).map(|i| c(i as f64, -0.5 * i as f64)).collect();
        for control in 0..4 {
            for target in (0..4).filter(|&t| t != control) {
                let mut fast = base.clone();
                apply_cnot(&mut fast, control, target);
                assert_eq!(
                    fast,
                    naive_cnot(&base, control, target),
                    "c={control} t={target}"
                );
            }
        }
    }

    #[test]
    fn generator_overlap_matches_derivative_matrix() {
        let lambda: Vec<Complex64> = (0..8)
            .map(|i| c(0.3 - 0.1 * i as f64, 0.07 * i as f64))
            .collect();
        let before: Vec<Complex64> = (0..8)
            .map(|i| c(0.2 * i as f64, 0.4 - 0.03 * i as f64))
            .collect();
        for kind in [GateKind::RX, GateKind::RY, GateKind::RZ] {
            for target in 0..3 {
                let theta = -0.9;
                let mut after = before.clone();
                apply_single(&mut after, kind, target, theta);
                let mut d = before.clone();
                apply_matrix(&mut d, target, &derivative(kind, theta));
                let want: f64 = 2.0
                    * lambda
                        .iter()
                        .zip(&d)
                        .map(|(l, x)| (l.conj() * x).re)
                        .sum::<f64>();
                let got = generator_overlap(&lambda, &after, kind, target);
                assert!(
                    (got - want).abs() < 1e-14,
                    "{kind:?} q{target}: {got} vs {want}"
                );
            }
        }
    }
}
