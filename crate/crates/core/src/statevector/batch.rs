//! Many registers evolved by one circuit at once.
//!
//! Amplitudes are stored amplitude-major with split real and imaginary parts:
//! entry `k·B + b` holds amplitude `k` of register `b`. Every kernel then runs
//! its innermost loop over the `B` registers with unit stride.

use super::circuit::{AngleSource, CircuitSpec, Encoding};
use super::gate::GateKind;
use super::{Result, SimError, StateVector};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

/// `B` statevectors of the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBatch {
    n_qubits: usize,
    width: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl StateBatch {
    pub fn len(&self) -> usize {
        self.width
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Register `b` as a standalone state.
    pub fn state(&self, b: usize) -> StateVector {
        let amps = (0..1usize << self.n_qubits)
            .map(|k| Complex64::new(self.re[k * self.width + b], self.im[k * self.width + b]))
            .collect();
        StateVector {
            n_qubits: self.n_qubits,
            amps,
        }
    }

    /// `⟨Z_q⟩` per register (rows) and listed qubit (columns).
    pub fn expect_z(&self, qubits: &[usize]) -> Result<Array2<f64>> {
        for &q in qubits {
            if q >= self.n_qubits {
                return Err(SimError::QubitIndex {
                    index: q,
                    n_qubits: self.n_qubits,
                });
            }
        }
        let w = self.width;
        let mut acc = vec![vec![0.0; w]; qubits.len()];
        if w == 0 {
            return Ok(Array2::zeros((0, qubits.len())));
        }
        for (k, (re, im)) in self
            .re
            .chunks_exact(w)
            .zip(self.im.chunks_exact(w))
            .enumerate()
        {
            for (col, &q) in acc.iter_mut().zip(qubits) {
                if k >> q & 1 == 0 {
                    for ((a, r), i) in col.iter_mut().zip(re).zip(im) {
                        *a += r * r + i * i;
                    }
                } else {
                    for ((a, r), i) in col.iter_mut().zip(re).zip(im) {
                        *a -= r * r + i * i;
                    }
                }
            }
        }
        Ok(Array2::from_shape_fn((w, qubits.len()), |(b, j)| acc[j][b]))
    }
}

/// Per-register `cos(θ/2)` and `sin(θ/2)` of one gate.
struct HalfAngles {
    c: Vec<f64>,
    s: Vec<f64>,
}

fn param_row(params: &ArrayView2<'_, f64>, b: usize) -> usize {
    if params.nrows() == 1 {
        0
    } else {
        b
    }
}

fn half_angles(
    source: AngleSource,
    inputs: &ArrayView2<'_, f64>,
    params: &ArrayView2<'_, f64>,
    width: usize,
    sign: f64,
) -> HalfAngles {
    let angle = |b: usize| match source {
        AngleSource::Const(a) => a,
        AngleSource::Input(i) => inputs[[b, i]],
        AngleSource::Param(p) => params[[param_row(params, b), p]],
    };
    let (s, c) = (0..width)
        .map(|b| (sign * angle(b) / 2.0).sin_cos())
        .unzip();
    HalfAngles { c, s }
}

/// Calls `f(lo_re, lo_im, hi_re, hi_im)` on the register rows of every
/// amplitude pair of qubit `target`.
#[inline(always)]
fn for_row_pairs(
    re: &mut [f64],
    im: &mut [f64],
    width: usize,
    target: usize,
    mut f: impl FnMut(&mut [f64], &mut [f64], &mut [f64], &mut [f64]),
) {
    if width == 0 {
        return;
    }
    let stride = width << target;
    for (rb, ib) in re
        .chunks_exact_mut(stride << 1)
        .zip(im.chunks_exact_mut(stride << 1))
    {
        let (r0, r1) = rb.split_at_mut(stride);
        let (i0, i1) = ib.split_at_mut(stride);
        let rows = r0
            .chunks_exact_mut(width)
            .zip(i0.chunks_exact_mut(width))
            .zip(r1.chunks_exact_mut(width).zip(i1.chunks_exact_mut(width)));
        for ((ar, ai), (br, bi)) in rows {
            f(ar, ai, br, bi);
        }
    }
}

fn swap_blocks(v: &mut [f64], width: usize, control: usize, target: usize) {
    if width == 0 {
        return;
    }
    let (cs, ts) = (width << control, width << target);
    if control > target {
        for block in v.chunks_exact_mut(cs << 1) {
            for pair in block[cs..].chunks_exact_mut(ts << 1) {
                let (lo, hi) = pair.split_at_mut(ts);
                lo.swap_with_slice(hi);
            }
        }
    } else {
        for pair in v.chunks_exact_mut(ts << 1) {
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

type Rows<'a> = (
    &'a mut [f64],
    &'a mut [f64],
    &'a mut [f64],
    &'a mut [f64],
    (&'a [f64], &'a [f64]),
);

/// Trims every row to `w` so the kernels index without bounds checks.
#[inline(always)]
fn fit<'a>(
    ar: &'a mut [f64],
    ai: &'a mut [f64],
    br: &'a mut [f64],
    bi: &'a mut [f64],
    h: &'a HalfAngles,
    w: usize,
) -> Rows<'a> {
    (
        &mut ar[..w],
        &mut ai[..w],
        &mut br[..w],
        &mut bi[..w],
        (&h.c[..w], &h.s[..w]),
    )
}

/// One rotation on every register. Angles are already half-angle cos/sin.
fn rotate(st: &mut StateBatch, kind: GateKind, target: usize, h: &HalfAngles) {
    let w = st.width;
    match kind {
        GateKind::RX => for_row_pairs(&mut st.re, &mut st.im, w, target, |ar, ai, br, bi| {
            let (ar, ai, br, bi, h) = fit(ar, ai, br, bi, h, w);
            for b in 0..w {
                let (c, s) = (h.0[b], h.1[b]);
                let (xr, xi, yr, yi) = (ar[b], ai[b], br[b], bi[b]);
                ar[b] = c * xr + s * yi;
                ai[b] = c * xi - s * yr;
                br[b] = c * yr + s * xi;
                bi[b] = c * yi - s * xr;
            }
        }),
        GateKind::RY => for_row_pairs(&mut st.re, &mut st.im, w, target, |ar, ai, br, bi| {
            let (ar, ai, br, bi, h) = fit(ar, ai, br, bi, h, w);
            for b in 0..w {
                let (c, s) = (h.0[b], h.1[b]);
                let (xr, xi, yr, yi) = (ar[b], ai[b], br[b], bi[b]);
                ar[b] = c * xr - s * yr;
                ai[b] = c * xi - s * yi;
                br[b] = s * xr + c * yr;
                bi[b] = s * xi + c * yi;
            }
        }),
        GateKind::RZ => for_row_pairs(&mut st.re, &mut st.im, w, target, |ar, ai, br, bi| {
            let (ar, ai, br, bi, h) = fit(ar, ai, br, bi, h, w);
            for b in 0..w {
                let (c, s) = (h.0[b], h.1[b]);
                let (xr, xi, yr, yi) = (ar[b], ai[b], br[b], bi[b]);
                ar[b] = c * xr + s * xi;
                ai[b] = c * xi - s * xr;
                br[b] = c * yr - s * yi;
                bi[b] = c * yi + s * yr;
            }
        }),
        _ => unreachable!("not a rotation"),
    }
}

fn hadamard(st: &mut StateBatch, target: usize) {
    let w = st.width;
    for_row_pairs(&mut st.re, &mut st.im, w, target, |ar, ai, br, bi| {
        let (ar, ai, br, bi) = (&mut ar[..w], &mut ai[..w], &mut br[..w], &mut bi[..w]);
        for b in 0..w {
            let (xr, xi, yr, yi) = (ar[b], ai[b], br[b], bi[b]);
            ar[b] = (xr + yr) * FRAC_1_SQRT_2;
            ai[b] = (xi + yi) * FRAC_1_SQRT_2;
            br[b] = (xr - yr) * FRAC_1_SQRT_2;
            bi[b] = (xi - yi) * FRAC_1_SQRT_2;
        }
    });
}

fn cnot(st: &mut StateBatch, control: usize, target: usize) {
    swap_blocks(&mut st.re, st.width, control, target);
    swap_blocks(&mut st.im, st.width, control, target);
}

fn check_shapes(
    circuit: &CircuitSpec,
    inputs: &ArrayView2<'_, f64>,
    params: &ArrayView2<'_, f64>,
) -> Result<()> {
    if inputs.ncols() != circuit.n_input_slots() {
        return Err(SimError::SlotCountMismatch {
            what: "input",
            expected: circuit.n_input_slots(),
            got: inputs.ncols(),
        });
    }
    if params.ncols() != circuit.n_param_slots() {
        return Err(SimError::SlotCountMismatch {
            what: "parameter",
            expected: circuit.n_param_slots(),
            got: params.ncols(),
        });
    }
    if params.nrows() != 1 && params.nrows() != inputs.nrows() {
        return Err(SimError::SlotCountMismatch {
            what: "parameter row",
            expected: inputs.nrows(),
            got: params.nrows(),
        });
    }
    Ok(())
}

fn initial(circuit: &CircuitSpec, inputs: &ArrayView2<'_, f64>) -> Result<StateBatch> {
    let (n, w) = (circuit.n_qubits(), inputs.nrows());
    let dim = 1usize << n;
    let mut st = StateBatch {
        n_qubits: n,
        width: w,
        re: vec![0.0; dim * w],
        im: vec![0.0; dim * w],
    };
    match circuit.encoding() {
        Encoding::Gates => st.re[..w].fill(1.0),
        Encoding::Amplitude => {
            for (b, x) in inputs.rows().into_iter().enumerate() {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(SimError::DegenerateEncoding);
                }
                for (k, v) in x.iter().enumerate() {
                    st.re[k * w + b] = v / norm;
                }
            }
        }
    }
    Ok(st)
}

impl CircuitSpec {
    /// Runs the circuit once per input row. `params` holds one row shared by
    /// all registers or one row per register.
    pub fn run_batch(
        &self,
        inputs: ArrayView2<'_, f64>,
        params: ArrayView2<'_, f64>,
    ) -> Result<StateBatch> {
        check_shapes(self, &inputs, &params)?;
        let mut st = initial(self, &inputs)?;
        for g in self.gates() {
            match (g.kind, g.control, g.angle) {
                (GateKind::Cnot, Some(c), _) => cnot(&mut st, c, g.target),
                (GateKind::H, _, _) => hadamard(&mut st, g.target),
                (kind, _, Some(src)) => rotate(
                    &mut st,
                    kind,
                    g.target,
                    &half_angles(src, &inputs, &params, inputs.nrows(), 1.0),
                ),
                _ => unreachable!("validated circuit"),
            }
        }
        Ok(st)
    }
}

type Quad = (f64, f64, f64, f64);

/// Records `Im⟨λ|G|φ⟩` per register into `acc`, then applies `R(−θ)` to both.
fn adjoint_rotation(
    lam: &mut StateBatch,
    phi: &mut StateBatch,
    kind: GateKind,
    target: usize,
    h: &HalfAngles,
    acc: &mut [f64],
) {
    // Im(conj(a)·z) = a.re·z.im − a.im·z.re
    match kind {
        GateKind::RX => fused(
            lam,
            phi,
            target,
            h,
            acc,
            |(a0r, a0i, a1r, a1i), (b0r, b0i, b1r, b1i)| {
                (a0r * b1i - a0i * b1r) + (a1r * b0i - a1i * b0r)
            },
            |c, s, (xr, xi, yr, yi)| {
                (
                    c * xr + s * yi,
                    c * xi - s * yr,
                    c * yr + s * xi,
                    c * yi - s * xr,
                )
            },
        ),
        GateKind::RY => fused(
            lam,
            phi,
            target,
            h,
            acc,
            |(a0r, a0i, a1r, a1i), (b0r, b0i, b1r, b1i)| {
                (-a0r * b1r - a0i * b1i) + (a1r * b0r + a1i * b0i)
            },
            |c, s, (xr, xi, yr, yi)| {
                (
                    c * xr - s * yr,
                    c * xi - s * yi,
                    s * xr + c * yr,
                    s * xi + c * yi,
                )
            },
        ),
        _ => fused(
            lam,
            phi,
            target,
            h,
            acc,
            |(a0r, a0i, a1r, a1i), (b0r, b0i, b1r, b1i)| {
                (a0r * b0i - a0i * b0r) - (a1r * b1i - a1i * b1r)
            },
            |c, s, (xr, xi, yr, yi)| {
                (
                    c * xr + s * xi,
                    c * xi - s * xr,
                    c * yr - s * yi,
                    c * yi + s * yr,
                )
            },
        ),
    }
}

#[inline(always)]
fn fused(
    lam: &mut StateBatch,
    phi: &mut StateBatch,
    target: usize,
    h: &HalfAngles,
    acc: &mut [f64],
    overlap: impl Fn(Quad, Quad) -> f64,
    rot: impl Fn(f64, f64, Quad) -> Quad,
) {
    let w = phi.width;
    if w == 0 {
        return;
    }
    let stride = w << target;
    let blocks = lam
        .re
        .chunks_exact_mut(stride << 1)
        .zip(lam.im.chunks_exact_mut(stride << 1))
        .zip(
            phi.re
                .chunks_exact_mut(stride << 1)
                .zip(phi.im.chunks_exact_mut(stride << 1)),
        );
    for ((lr, li), (pr, pi)) in blocks {
        let (lr0, lr1) = lr.split_at_mut(stride);
        let (li0, li1) = li.split_at_mut(stride);
        let (pr0, pr1) = pr.split_at_mut(stride);
        let (pi0, pi1) = pi.split_at_mut(stride);
        let lam_rows = lr0
            .chunks_exact_mut(w)
            .zip(li0.chunks_exact_mut(w))
            .zip(lr1.chunks_exact_mut(w).zip(li1.chunks_exact_mut(w)));
        let phi_rows = pr0
            .chunks_exact_mut(w)
            .zip(pi0.chunks_exact_mut(w))
            .zip(pr1.chunks_exact_mut(w).zip(pi1.chunks_exact_mut(w)));
        for (((l0r, l0i), (l1r, l1i)), ((p0r, p0i), (p1r, p1i))) in lam_rows.zip(phi_rows) {
            let (l0r, l0i, l1r, l1i, hw) = fit(l0r, l0i, l1r, l1i, h, w);
            let (p0r, p0i, p1r, p1i) = (&mut p0r[..w], &mut p0i[..w], &mut p1r[..w], &mut p1i[..w]);
            let acc = &mut acc[..w];
            for b in 0..w {
                let a = (l0r[b], l0i[b], l1r[b], l1i[b]);
                let z = (p0r[b], p0i[b], p1r[b], p1i[b]);
                acc[b] += overlap(a, z);
                (l0r[b], l0i[b], l1r[b], l1i[b]) = rot(hw.0[b], hw.1[b], a);
                (p0r[b], p0i[b], p1r[b], p1i[b]) = rot(hw.0[b], hw.1[b], z);
            }
        }
    }
}

/// Gradients of `Σ_q weights[b, q]·⟨Z_q⟩_b` for every register `b`.
///
/// `output` must be `circuit.run_batch(inputs, params)`. Returns the input
/// gradient (one row per register) and the parameter gradient with the shape
/// of `params`; a shared parameter row receives the sum over registers.
pub fn vjp_adjoint_batch(
    circuit: &CircuitSpec,
    inputs: ArrayView2<'_, f64>,
    params: ArrayView2<'_, f64>,
    output: StateBatch,
    weights: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_shapes(circuit, &inputs, &params)?;
    let measured = circuit.measured();
    let w = output.width;
    if weights.ncols() != measured.len() || weights.nrows() != w {
        return Err(SimError::WeightLength {
            expected: measured.len(),
            got: weights.ncols(),
        });
    }
    let mut phi = output;
    if phi.n_qubits != circuit.n_qubits() || w != inputs.nrows() {
        return Err(SimError::SlotCountMismatch {
            what: "state",
            expected: inputs.nrows(),
            got: w,
        });
    }
    let mut lam = phi.clone();
    let mut diag = vec![0.0; w];
    for k in 0..1usize << circuit.n_qubits() {
        diag.fill(0.0);
        for (j, &q) in measured.iter().enumerate() {
            let sign = if k >> q & 1 == 0 { 1.0 } else { -1.0 };
            for (d, wt) in diag.iter_mut().zip(weights.column(j)) {
                *d += sign * wt;
            }
        }
        for b in 0..w {
            lam.re[k * w + b] *= diag[b];
            lam.im[k * w + b] *= diag[b];
        }
    }

    let mut g_in = Array2::zeros((w, circuit.n_input_slots()));
    let mut g_p = Array2::zeros((w, circuit.n_param_slots()));
    let mut acc = vec![0.0; w];
    for g in circuit.gates().iter().rev() {
        match (g.kind, g.control, g.angle) {
            (GateKind::Cnot, Some(c), _) => {
                cnot(&mut phi, c, g.target);
                cnot(&mut lam, c, g.target);
            }
            (GateKind::H, _, _) => {
                hadamard(&mut phi, g.target);
                hadamard(&mut lam, g.target);
            }
            (kind, _, Some(src)) => {
                let h = half_angles(src, &inputs, &params, w, -1.0);
                match src {
                    AngleSource::Const(_) => {
                        rotate(&mut phi, kind, g.target, &h);
                        rotate(&mut lam, kind, g.target, &h);
                    }
                    AngleSource::Input(slot) | AngleSource::Param(slot) => {
                        acc.fill(0.0);
                        adjoint_rotation(&mut lam, &mut phi, kind, g.target, &h, &mut acc);
                        let mut col = if matches!(src, AngleSource::Input(_)) {
                            g_in.column_mut(slot)
                        } else {
                            g_p.column_mut(slot)
                        };
                        for (d, a) in col.iter_mut().zip(&acc) {
                            *d += a;
                        }
                    }
                }
            }
            _ => unreachable!("validated circuit"),
        }
    }

    if circuit.encoding() == Encoding::Amplitude {
        for (b, x) in inputs.rows().into_iter().enumerate() {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n = x.len();
            let d_psi: Vec<f64> = (0..n).map(|k| 2.0 * lam.re[k * w + b]).collect();
            let proj: f64 = x.iter().zip(&d_psi).map(|(v, d)| v / norm * d).sum();
            for (k, v) in x.iter().enumerate() {
                g_in[[b, k]] = (d_psi[k] - v / norm * proj) / norm;
            }
        }
    }

    let g_p = if params.nrows() == 1 && w != 1 {
        let mut shared = Array2::zeros((1, circuit.n_param_slots()));
        for row in g_p.rows() {
            shared.row_mut(0).zip_mut_with(&row, |s, v| *s += v);
        }
        shared
    } else {
        g_p
    };
    Ok((g_in, g_p))
}
