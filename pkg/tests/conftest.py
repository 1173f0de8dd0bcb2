import math

import numpy as np
import pytest
import scipy.optimize

from tvtrend.constants import minimum_segment_length
from tvtrend.diffops import ActiveSet, build_delta


def dense_delta(n, k):
    """Independent dense construction of the difference operator."""
    return np.diff(np.eye(n), k, axis=0)


def dense_pinv(n, k):
    """Reference pseudo-inverse via SVD (numpy.linalg.pinv oracle)."""
    return np.linalg.pinv(dense_delta(n, k))


def tv_dual_reference(y, lam, k):
    """Reference minimizer through the box-constrained dual:

        f_hat = y - n lam D' u,  u = argmin_{|u| <= 1} ||y - n lam D' u||_2.

    Independent of both the ADMM path and the taut-string program.
    """
    n = len(y)
    op = build_delta(n, k)
    A = n * lam * op.apply_transpose(np.eye(op.m))
    res = scipy.optimize.lsq_linear(A, y, bounds=(-1.0, 1.0), method="bvls", tol=1e-14)
    return y - A @ res.x


def sparsity_dual_reference(S, weights=None):
    """Effective sparsity via the dual box-constrained least-squares form:

        Gamma = max(0, min { sqrt(n) ||D_S' q_S - D_off' xi||_2 :
                             |xi_j| <= 1 - w_j }),

    the exact value of the concave maximization (minimax equality).
    """
    n, k = S.n, S.k
    op = build_delta(n, k)
    D = op.to_dense()
    active = [t - k - 1 for t in S.t]
    off = np.setdiff1d(np.arange(op.m), active)
    c = D[active].T @ np.asarray(S.q_S, dtype=float) if active else np.zeros(n)
    caps = np.ones(len(off))
    if weights is not None:
        caps = 1.0 - weights.w[off]
    A = D[off].T
    res = scipy.optimize.lsq_linear(A, c, bounds=(-caps, caps), method="bvls", tol=1e-14)
    val = math.sqrt(n) * np.linalg.norm(A @ res.x - c)
    return max(0.0, val) ** 2


def random_active_set(rng, k, max_s=3, max_mult=4, n_pad=0):
    """Random active set with segment lengths in [k(k+2), max_mult*k(k+2))."""
    min_len = minimum_segment_length(k)
    s = int(rng.integers(0, max_s + 1))
    lengths = min_len + rng.integers(0, (max_mult - 1) * min_len + 1, size=s + 1)
    n = int(np.sum(lengths)) + k - 1 + int(rng.integers(0, n_pad + 1))
    t, pos = [], k
    for i in range(s):
        pos += int(lengths[i])
        t.append(pos)
    signs = tuple(int(v) for v in rng.choice([-1, 1], size=s))
    return ActiveSet(n=n, k=k, t=tuple(t), q_S=signs)


@pytest.fixture
def rng():
    return np.random.default_rng(20250809)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
