"""Effective sparsity: weights, direct oracle, interpolant and closed-form bounds.

The noisy effective sparsity of an active set with signs q_S is the squared
positive part of

    max { q_S' (Df)_S - sum_{j off S} (1 - w_j) |(Df)_j| : ||f||_n = 1 },

with weights w_j = ||psi_j^{-S}||_n lambda0(u) / lambda built from the
dictionary column lengths (zero at active and mock rows).  Three routes to
it live here: a direct concave-maximization oracle for small n, the energy
n ||D' q||_2^2 of a feasible interpolating vector (always an upper bound),
and the closed-form segment-sum bound with the shipped constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .constants import ck_sparsity
from .diffops import block_column_sqnorms, build_delta
from .interpolants import InterpolatingVector, _cap_violations, delta_k_energy
from .theory import lambda0


class UnreliableOracleError(RuntimeError):
    """Restart disagreement too large to trust the direct maximization."""


@dataclass(frozen=True)
class Weights:
    """Entrywise weights on the rows [k+1, n]; zero at active and mock rows."""

    S: ActiveSet
    u: float
    lam: float
    lam0: float
    w: np.ndarray
    free_mask: np.ndarray

    @property
    def caps(self):
        return 1.0 - self.w


def compute_weights(S, u, lam):
    """Weights w_j = ||psi_j^{-S}||_n lambda0(u) / lambda for the free rows."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    m = S.n - S.k
    rows, sqn = block_column_sqnorms(S)
    l0 = lambda0(u, S.n, S.n - S.k - S.s)
    w = np.zeros(m)
    free = np.zeros(m, dtype=bool)
    for j, q in zip(rows, sqn):
        w[j - S.k - 1] = math.sqrt(q / S.n) * l0 / lam
        free[j - S.k - 1] = True
    return Weights(S=S, u=u, lam=lam, lam0=l0, w=w, free_mask=free)


def effective_sparsity_via_interpolant(vec, weights=None, feasibility_tol=1e-9):
    """Upper bound n ||D' q||_2^2 from a feasible interpolating vector.

    Feasibility (|q_j| <= caps entrywise off the active rows) is re-checked;
    an infeasible vector raises with the violating rows listed.
    """
    caps = vec.caps
    if weights is not None:
        caps = np.where(np.isinf(vec.caps), np.inf, 1.0 - weights.w)
        vec = InterpolatingVector(S=vec.S, mode=vec.mode, q=vec.q, caps=caps)
    violations = _cap_violations(vec, feasibility_tol)
    if violations:
        from .interpolants import InfeasibleInterpolantError

        worst = ", ".join(f"row {j}: |q|={a:.6f} > cap={c:.6f}" for j, a, c in violations[:5])
        raise InfeasibleInterpolantError(
            f"interpolating vector infeasible at {len(violations)} rows: {worst}",
            violations=violations,
        )
    return delta_k_energy(vec)


def _box_ls_cd(A, b, caps, sweeps=4000, tol=1e-13):
    """min ||b - A xi||_2^2 over |xi_j| <= caps_j by cyclic coordinate
    descent with clipping.

    A has independent columns here, so the problem is strictly convex and
    the sweeps converge linearly; pure numpy, no solver dependency.
    """
    m = A.shape[1]
    xi = np.zeros(m)
    r = b.copy()
    g = np.sum(A * A, axis=0)
    for _ in range(sweeps):
        delta = 0.0
        for j in range(m):
            new = xi[j] + (A[:, j] @ r) / g[j]
            new = min(max(new, -caps[j]), caps[j])
            step = new - xi[j]
            if step != 0.0:
                r -= step * A[:, j]
                xi[j] = new
                delta = max(delta, abs(step))
        if delta <= tol * max(1.0, float(np.max(np.abs(xi)))):
            break
    return xi


@dataclass(frozen=True)
class DirectSparsityResult:
    gamma_sq: float
    max_value: float
    restart_values: np.ndarray
    spread: float
    reliable: bool
    maximizer: np.ndarray


def effective_sparsity_direct(S, weights=None, restarts=50, iters=10_000,
                              seed=0, n_cap=64, spread_tol=1e-3):
    """Direct small-n oracle for the effective sparsity.

    Projected supergradient ascent of the concave, 1-homogeneous objective
    over the ball ||f||_n <= 1 (step c/sqrt(t)), batched over random
    restarts, followed by a sign-pattern fixed-point polish.  The run is
    flagged unreliable when the per-restart optima disagree by more than
    ``spread_tol`` relative.  Returns the squared positive part of the max.
    """
    n, k = S.n, S.k
    if n > n_cap:
        raise ValueError(f"direct oracle restricted to n <= {n_cap} (got {n})")
    op = build_delta(n, k)
    D = op.to_dense()
    active_pos = np.array([t - k - 1 for t in S.t], dtype=int)
    off_pos = np.setdiff1d(np.arange(op.m), active_pos)
    qs = np.asarray(S.q_S, dtype=float)
    coef = np.ones(len(off_pos))
    if weights is not None:
        coef = 1.0 - weights.w[off_pos]
    D_S = D[active_pos]
    D_off = D[off_pos]
    c_S = D_S.T @ qs if len(active_pos) else np.zeros(n)

    def value(F):
        dofF = F @ D_off.T
        return F @ c_S - np.abs(dofF) @ coef

    def supergrad(F):
        sg = np.sign(F @ D_off.T)
        return c_S[None, :] - (sg * coef[None, :]) @ D_off

    rng = np.random.default_rng(seed)
    F = rng.standard_normal((restarts, n))
    F *= math.sqrt(n) / np.linalg.norm(F, axis=1, keepdims=True)
    g0 = np.linalg.norm(supergrad(F), axis=1)
    step_c = math.sqrt(n) / np.maximum(g0, 1e-12)
    best_val = value(F)
    best_F = F.copy()
    track_every = 4
    for t in range(1, iters + 1):
        F = F + (step_c / math.sqrt(t))[:, None] * supergrad(F)
        norms = np.linalg.norm(F, axis=1)
        scale = np.minimum(1.0, math.sqrt(n) / np.maximum(norms, 1e-300))
        F *= scale[:, None]
        if t % track_every == 0 or t == iters:
            vals = value(F)
            improved = vals > best_val
            best_val[improved] = vals[improved]
            best_F[improved] = F[improved]

    # fixed-point polish: the maximizer in a fixed sign pattern is the
    # normalized subgradient direction; iterate until the pattern stabilizes
    F = best_F
    for _ in range(64):
        C = supergrad(F)
        norms = np.linalg.norm(C, axis=1, keepdims=True)
        newF = math.sqrt(n) * C / np.maximum(norms, 1e-300)
        vals = value(newF)
        improved = vals > best_val
        if not np.any(improved):
            break
        best_val[improved] = vals[improved]
        best_F[improved] = newF[improved]
        F = np.where(improved[:, None], newF, F)

    # face polish: the maximizer zeroes a whole set of off-pattern
    # differences (a piecewise-polynomial face), typically freeing only rows
    # within k-1 of an active row (the augmented-null-space structure).
    # Candidate zero sets: threshold sets of the current differences, plus
    # the structured faces that free a band around each active row.
    structured = []
    for width in range(0, k):
        for side in ("both", "left", "right"):
            keep = np.zeros(len(off_pos), dtype=bool)
            for t in active_pos:
                if side in ("both", "left"):
                    keep |= (off_pos >= t - width) & (off_pos < t)
                if side in ("both", "right"):
                    keep |= (off_pos > t) & (off_pos <= t + width)
            structured.append(~keep)
    # the exact optimal face, from a dependency-free coordinate-descent
    # solve of the box-constrained dual least-squares problem: rows whose
    # dual coordinate sits strictly inside its box carry zero differences
    xi_star = _box_ls_cd(D_off.T, c_S, coef)
    interior = np.abs(xi_star) < coef * (1.0 - 1e-9) + 1e-15
    structured.insert(0, interior)

    qr_cache = {}

    def face_projector(zero):
        key = zero.tobytes()
        Q = qr_cache.get(key)
        if Q is None:
            Q, _ = np.linalg.qr(D_off[zero].T, mode="reduced")
            qr_cache[key] = Q
        return Q

    def face_candidate(f):
        d = f @ D_off.T
        scale = max(float(np.max(np.abs(d), initial=0.0)), 1e-300)
        faces = [np.abs(d) <= theta * scale
                 for theta in (0.0, 1e-8, 1e-5, 1e-3, 1e-2, 1e-1, 1.1)]
        faces.extend(structured)
        best_v, best_f = -np.inf, None
        for zero in faces:
            sg = np.where(zero, 0.0, np.sign(d))
            c = c_S - D_off.T @ (sg * coef)
            Q = None
            if np.any(zero):
                Q = face_projector(zero)
                c = c - Q @ (Q.T @ c)
            nc = np.linalg.norm(c)
            if nc <= 1e-12:
                # flat face: any point of the face attains the linear part;
                # keep the projection of the current iterate
                c = f - Q @ (Q.T @ f) if Q is not None else f.copy()
                nc = np.linalg.norm(c)
                if nc <= 1e-12:
                    continue
            cand = math.sqrt(n) * c / nc
            v = float(value(cand[None, :])[0])
            if v > best_v:
                best_v, best_f = v, cand
        return best_v, best_f

    # exchange pass: from each restart's face fixpoint, try releasing one
    # zero row at a time (QR column deletion keeps this linear per trial)
    def single_release(f, v0):
        d = f @ D_off.T
        scale = max(float(np.max(np.abs(d), initial=0.0)), 1e-300)
        zero0 = np.abs(d) <= 1e-9 * scale
        sg0 = np.where(zero0, 0.0, np.sign(d))
        idx_zero = np.nonzero(zero0)[0]
        if not len(idx_zero):
            return v0, None
        base = D_off[zero0].T
        Q0, R0 = np.linalg.qr(base, mode="reduced")
        c_base = c_S - D_off.T @ (sg0 * coef)
        best_v, best_f = v0, None
        for pos, j in enumerate(idx_zero):
            if len(idx_zero) > 1:
                Qz, _ = scipy.linalg.qr_delete(Q0, R0, pos, which="col")
                Qz = Qz[:, : len(idx_zero) - 1]
            else:
                Qz = None
            for sgn in (1.0, -1.0):
                c = c_base - sgn * coef[j] * D_off[j]
                if Qz is not None:
                    c = c - Qz @ (Qz.T @ c)
                nc = np.linalg.norm(c)
                if nc <= 1e-12:
                    continue
                cand = math.sqrt(n) * c / nc
                v = float(value(cand[None, :])[0])
                if v > best_v:
                    best_v, best_f = v, cand
        return best_v, best_f

    def polish_one(r):
        tiny = 1e-13 * max(1.0, abs(best_val[r]))
        f = best_F[r]
        for _ in range(20):
            v, cand = face_candidate(f)
            if cand is None or v <= best_val[r] + tiny:
                break
            best_val[r] = v
            best_F[r] = cand
            f = cand
        for _ in range(4):
            v, cand = single_release(best_F[r], best_val[r])
            if cand is None or v <= best_val[r] + tiny:
                break
            best_val[r] = v
            best_F[r] = cand
            f = cand
            for _ in range(10):
                v2, cand2 = face_candidate(f)
                if cand2 is None or v2 <= best_val[r] + tiny:
                    break
                best_val[r] = v2
                best_F[r] = cand2
                f = cand2

    for r in range(restarts):
        polish_one(r)

    v_star = float(np.max(best_val))
    spread = float((v_star - np.min(best_val)) / max(abs(v_star), 1.0))
    gamma_sq = max(v_star, 0.0) ** 2
    return DirectSparsityResult(
        gamma_sq=gamma_sq,
        max_value=v_star,
        restart_values=best_val,
        spread=spread,
        reliable=spread <= spread_tol,
        maximizer=best_F[int(np.argmax(best_val))],
    )


def gamma_closed_form(S, C_k=None):
    """Closed-form effective-sparsity bound

        n C_k ( sum_{sign-flip segments} (1 + log n_i) / n_i^{2k-1}
              + sum_{other segments}     (1 + log n_i) / n_max^{2k-1} ).
    """
    k = S.k
    if C_k is None:
        C_k = ck_sparsity(k)
    flip = S.sign_flip_segments
    total = 0.0
    for i, n_i in enumerate(S.seg_lengths, start=1):
        if i in flip:
            total += (1.0 + math.log(n_i)) / n_i ** (2 * k - 1)
        else:
            total += (1.0 + math.log(n_i)) / S.n_max ** (2 * k - 1)
    return S.n * C_k * total
