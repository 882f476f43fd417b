"""POVMs, density matrices, the differentiable logit-to-POVM transform, and
Born-rule joint outcome tables.

Gradient convention
-------------------
All losses are real scalars. The "gradient" of a loss L with respect to a
complex matrix A is stored as the complex matrix dL/d(Re A) + i dL/d(Im A).
Under this convention the familiar reverse-mode rules hold verbatim in
complex arithmetic (for C = A B: A_bar = C_bar B^H, B_bar = A^H C_bar), and
spectral functions of Hermitian matrices backpropagate through the
eigenbasis with Daleckii-Krein divided differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cmatrix import (
    EXP_SATURATION,
    PD_FLOOR,
    IllConditionedError,
    SaturationError,
    hermitian_part,
)

HERM_TOL = 1e-10
PSD_TOL = 1e-9
COMPLETENESS_TOL = 1e-8
DENSITY_PSD_TOL = 1e-10
TRACE_TOL = 1e-10
PROB_CLAMP = 1e-10
DEGENERACY_TOL = 1e-10


class DistributionIntegrityError(ValueError):
    """A Born-rule probability fell below the tolerated negative clamp."""


def _adjoint(a: np.ndarray) -> np.ndarray:
    return a.conj().swapaxes(-1, -2)


@dataclass(frozen=True)
class Povm:
    """Measurement with ``outcomes`` effects: PSD matrices summing to identity."""

    elements: np.ndarray  # (m, d, d) complex

    def __post_init__(self):
        e = np.asarray(self.elements, dtype=complex)
        if e.ndim != 3 or e.shape[-1] != e.shape[-2]:
            raise ValueError(f"elements must have shape (m, d, d), got {e.shape}")
        object.__setattr__(self, "elements", e)
        skew = np.max(np.abs(e - _adjoint(e)))
        if skew > HERM_TOL:
            raise ValueError(f"POVM elements not Hermitian within tolerance ({skew:.3e})")
        wmin = float(np.min(np.linalg.eigvalsh(hermitian_part(e))))
        if wmin < -PSD_TOL:
            raise ValueError(f"POVM element has eigenvalue {wmin:.3e} < -{PSD_TOL:.0e}")
        resid = np.linalg.norm(e.sum(axis=0) - np.eye(self.dim))
        if resid > COMPLETENESS_TOL:
            raise ValueError(f"POVM completeness residual {resid:.3e} > {COMPLETENESS_TOL:.0e}")

    @property
    def dim(self) -> int:
        return self.elements.shape[-1]

    @property
    def outcomes(self) -> int:
        return self.elements.shape[0]


@dataclass(frozen=True)
class PovmLogits:
    """Unconstrained complex logit matrices, one per outcome (trainable)."""

    logits: np.ndarray  # (m, d, d) complex

    def __post_init__(self):
        z = np.asarray(self.logits, dtype=complex)
        if z.ndim != 3 or z.shape[-1] != z.shape[-2]:
            raise ValueError(f"logits must have shape (m, d, d), got {z.shape}")
        if not np.all(np.isfinite(z.view(np.float64))):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", z)

    @property
    def dim(self) -> int:
        return self.logits.shape[-1]

    @property
    def outcomes(self) -> int:
        return self.logits.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian PSD trace-1 state."""

    matrix: np.ndarray  # (d, d) complex

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        skew = np.max(np.abs(m - m.conj().T))
        if skew > HERM_TOL:
            raise ValueError(f"density matrix not Hermitian within tolerance ({skew:.3e})")
        wmin = float(np.min(np.linalg.eigvalsh(hermitian_part(m))))
        if wmin < -DENSITY_PSD_TOL:
            raise ValueError(f"density matrix has eigenvalue {wmin:.3e}")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr} != 1")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DensityFactor:
    """Unconstrained factor B; the state it encodes is B^H B / tr(B^H B)."""

    factor: np.ndarray  # (d, d) complex

    def __post_init__(self):
        b = np.asarray(self.factor, dtype=complex)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"factor must be square, got {b.shape}")
        if np.linalg.norm(b) < 1e-30:
            raise ValueError("factor must be nonzero")
        object.__setattr__(self, "factor", b)

    @property
    def dim(self) -> int:
        return self.factor.shape[0]


def bell_state() -> DensityMatrix:
    """The maximally entangled two-qubit state used as the default shared state."""
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = m[0, 3] = m[3, 0] = m[3, 3] = 0.5
    return DensityMatrix(m)


# ---------------------------------------------------------------------------
# Logit-to-POVM transform (symmetrize, exponentiate, jointly normalize)
# ---------------------------------------------------------------------------


def _divided_differences(w: np.ndarray, f, fprime) -> np.ndarray:
    """Loewner matrix K_ij = (f(w_i) - f(w_j)) / (w_i - w_j), with the analytic
    limit f'((w_i+w_j)/2) on near-degenerate pairs."""
    wi = w[..., :, None]
    wj = w[..., None, :]
    dw = wi - wj
    near = np.abs(dw) < DEGENERACY_TOL
    safe = np.where(near, 1.0, dw)
    return np.where(near, fprime((wi + wj) / 2), (f(wi) - f(wj)) / safe)


def _spectral_vjp(u: np.ndarray, loewner: np.ndarray, cot: np.ndarray) -> np.ndarray:
    """Adjoint of dA -> U (K o (U^H dA U)) U^H, the derivative of a spectral
    function f(A) in the eigenbasis U with Loewner matrix K."""
    inner = _adjoint(u) @ cot @ u
    return u @ (loewner * inner) @ _adjoint(u)


def quantum_softmax_batch(z: np.ndarray):
    """Map logit stacks (..., m, d, d) to POVM stacks.

    Returns ``(p, s, cache)`` where ``p`` holds the normalized effects,
    ``s`` the pre-normalization sum of exponentials, and ``cache`` the
    intermediates needed by :func:`quantum_softmax_vjp_batch`.
    """
    z = np.asarray(z, dtype=complex)
    if z.ndim < 3 or z.shape[-1] != z.shape[-2]:
        raise ValueError(f"logits must have shape (..., m, d, d), got {z.shape}")
    if not np.all(np.isfinite(z.view(np.float64))):
        raise ValueError("logits must be finite")
    d = z.shape[-1]
    zt = (z + _adjoint(z)) / 2
    wz, uz = np.linalg.eigh(zt)
    wmax = float(np.max(wz))
    if wmax > EXP_SATURATION:
        raise SaturationError(wmax)
    r = (uz * np.exp(wz)[..., None, :]) @ _adjoint(uz)
    r = (r + _adjoint(r)) / 2
    s = r.sum(axis=-3)
    ws, us = np.linalg.eigh(s)
    wsmin = float(np.min(ws))
    if wsmin <= PD_FLOOR:
        raise IllConditionedError(wsmin)
    t = (us * (1.0 / np.sqrt(ws))[..., None, :]) @ _adjoint(us)
    t = (t + _adjoint(t)) / 2
    p = t[..., None, :, :] @ r @ t[..., None, :, :]
    p = (p + _adjoint(p)) / 2
    cache = {"wz": wz, "uz": uz, "r": r, "ws": ws, "us": us, "t": t}
    return p, s, cache


def quantum_softmax_vjp_batch(cache, p_bar: np.ndarray, s_bar: np.ndarray | None = None) -> np.ndarray:
    """Backpropagate cotangents on the POVM stack (and optionally on S) to the
    logit stack. Shapes mirror :func:`quantum_softmax_batch`."""
    r, t = cache["r"], cache["t"]
    p_bar = np.asarray(p_bar, dtype=complex)
    # P_j = T R_j T
    r_bar = t[..., None, :, :] @ p_bar @ t[..., None, :, :]
    tr_j = t[..., None, :, :] @ r
    t_bar = (p_bar @ tr_j + _adjoint(tr_j) @ p_bar).sum(axis=-3)
    # T = S^(-1/2)
    k_inv = _divided_differences(
        cache["ws"], lambda w: 1.0 / np.sqrt(w), lambda w: -0.5 * w ** (-1.5)
    )
    s_total = _spectral_vjp(cache["us"], k_inv, t_bar)
    if s_bar is not None:
        s_total = s_total + np.asarray(s_bar, dtype=complex)
    # S = sum_j R_j
    r_bar = r_bar + s_total[..., None, :, :]
    # R_j = expm(symmetrized Z_j)
    k_exp = _divided_differences(cache["wz"], np.exp, np.exp)
    zt_bar = _spectral_vjp(cache["uz"], k_exp, r_bar)
    return (zt_bar + _adjoint(zt_bar)) / 2


def quantum_softmax(logits: PovmLogits):
    """Transform unconstrained logits into a valid POVM.

    Returns ``(povm, s)`` with ``s`` the pre-normalization sum needed by the
    conditioning penalty.
    """
    p, s, _ = quantum_softmax_batch(logits.logits)
    return Povm(p), s


def quantum_softmax_vjp(
    logits: PovmLogits,
    element_cotangents: np.ndarray,
    normalizer_cotangent: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of a scalar loss with respect to the logits, given the loss
    cotangents on each output effect (and optionally on S)."""
    element_cotangents = np.asarray(element_cotangents, dtype=complex)
    if element_cotangents.shape != logits.logits.shape:
        raise ValueError(
            f"cotangent shape {element_cotangents.shape} != logits shape {logits.logits.shape}"
        )
    _, _, cache = quantum_softmax_batch(logits.logits)
    return quantum_softmax_vjp_batch(cache, element_cotangents, normalizer_cotangent)


# ---------------------------------------------------------------------------
# Density matrix from an unconstrained factor
# ---------------------------------------------------------------------------


def density_from_factor(f: DensityFactor) -> DensityMatrix:
    """rho = B^H B / tr(B^H B)."""
    b = f.factor
    m = b.conj().T @ b
    c = float(np.trace(m).real)
    return DensityMatrix(hermitian_part(m / c))


def density_from_factor_vjp(factor: np.ndarray, rho_bar: np.ndarray) -> np.ndarray:
    """Backpropagate a cotangent on rho = B^H B / tr(B^H B) to the factor B."""
    b = np.asarray(factor, dtype=complex)
    rho_bar = np.asarray(rho_bar, dtype=complex)
    m = b.conj().T @ b
    c = float(np.trace(m).real)
    coeff = float(np.real(np.trace(rho_bar.conj().T @ m))) / c**2
    m_bar = rho_bar / c - coeff * np.eye(b.shape[0])
    return b @ (m_bar + m_bar.conj().T)


# ---------------------------------------------------------------------------
# Born-rule joint outcome tables
# ---------------------------------------------------------------------------

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _einsum_spec(n: int, lead: str):
    """Subscripts for T[lead..., a_1..a_n] = sum rho[r..., c...] prod_i
    stack_i[lead_i..., a_i, c_i, r_i]. ``lead`` is '' (none), 'batch' (one
    shared axis) or 'grid' (one independent axis per agent)."""
    rows = _LETTERS[:n]
    cols = _LETTERS[n : 2 * n]
    outs = _LETTERS[2 * n : 3 * n]
    if lead == "batch":
        extra = ["z"] * n
        out_lead = "z"
    elif lead == "grid":
        extra = list(_LETTERS[3 * n : 4 * n])
        out_lead = "".join(extra)
    else:
        extra = [""] * n
        out_lead = ""
    rho_sub = rows + cols
    stack_subs = [extra[i] + outs[i] + cols[i] + rows[i] for i in range(n)]
    return rho_sub, stack_subs, out_lead + outs


def _rho_tensor(rho: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(tuple(dims) + tuple(dims))


def _table_lead(stacks) -> str:
    ndims = {s.ndim for s in stacks}
    if ndims == {3}:
        return ""
    if ndims == {4}:
        return "batch"
    raise ValueError("measurement stacks must all have 3 or all have 4 axes")


def joint_table(rho: np.ndarray, stacks: Sequence[np.ndarray], lead: str = "") -> np.ndarray:
    """Real joint-outcome table tr(rho M1(a1) x ... x Mn(an)).

    Each ``stacks[i]`` has shape (m_i, d_i, d_i), optionally with one leading
    axis: a shared batch axis (``lead='batch'``) or an independent per-agent
    axis such as a question index (``lead='grid'``).
    """
    stacks = [np.asarray(s, dtype=complex) for s in stacks]
    dims = [s.shape[-1] for s in stacks]
    rho_sub, stack_subs, out = _einsum_spec(len(stacks), lead)
    spec = ",".join([rho_sub] + stack_subs) + "->" + out
    t = np.einsum(spec, _rho_tensor(rho, dims), *stacks, optimize=True)
    return np.ascontiguousarray(t.real)


def joint_table_vjp(
    rho: np.ndarray, stacks: Sequence[np.ndarray], table_cotangent: np.ndarray, lead: str = ""
):
    """Backpropagate a real cotangent on the joint table to rho and each stack.

    Returns ``(rho_bar, [stack_bar_i])`` in the complex gradient convention.
    """
    stacks = [np.asarray(s, dtype=complex) for s in stacks]
    g = np.asarray(table_cotangent, dtype=float)
    dims = [s.shape[-1] for s in stacks]
    n = len(stacks)
    rho_t = _rho_tensor(rho, dims)
    rho_sub, stack_subs, out = _einsum_spec(n, lead)
    conj_stacks = [s.conj() for s in stacks]
    spec = ",".join([out] + stack_subs) + "->" + rho_sub
    rho_bar = np.einsum(spec, g.astype(complex), *conj_stacks, optimize=True)
    d_total = int(np.prod(dims))
    rho_bar = rho_bar.reshape(d_total, d_total)
    stack_bars = []
    for k in range(n):
        others = [conj_stacks[i] for i in range(n) if i != k]
        other_subs = [stack_subs[i] for i in range(n) if i != k]
        spec = ",".join([out, rho_sub] + other_subs) + "->" + stack_subs[k]
        stack_bars.append(np.einsum(spec, g.astype(complex), rho_t.conj(), *others, optimize=True))
    return rho_bar, stack_bars


def born_joint(rho: DensityMatrix, measurements: Sequence[Povm]) -> np.ndarray:
    """Joint outcome distribution for independent local measurements on a
    shared state; shape (m_1, ..., m_n), entries clamped at -1e-10 and
    renormalized."""
    dims = [m.dim for m in measurements]
    if int(np.prod(dims)) != rho.dim:
        raise ValueError(
            f"product of measurement dims {dims} != state dim {rho.dim}"
        )
    t = joint_table(rho.matrix, [m.elements for m in measurements])
    low = float(t.min())
    if low < -PROB_CLAMP:
        raise DistributionIntegrityError(
            f"joint probability {low:.3e} below clamp -{PROB_CLAMP:.0e}"
        )
    t = np.clip(t, 0.0, None)
    total = float(t.sum())
    if abs(total - 1.0) > 1e-9:
        raise DistributionIntegrityError(f"joint probabilities sum to {total}")
    return t / total


# ---------------------------------------------------------------------------
# Conditioning penalty
# ---------------------------------------------------------------------------


def conditioning_penalty(s: np.ndarray) -> float:
    """Squared Frobenius distance of the pre-normalization sum S from identity."""
    s = np.asarray(s, dtype=complex)
    resid = s - np.eye(s.shape[-1])
    return float(np.sum(np.abs(resid) ** 2))


def conditioning_penalty_grad(s: np.ndarray) -> np.ndarray:
    """Gradient of :func:`conditioning_penalty` with respect to S."""
    s = np.asarray(s, dtype=complex)
    return 2.0 * (s - np.eye(s.shape[-1]))
