"""Memoized dynamic program over a span of quantified variables.

This is the hot kernel of the package: an explicit-stack depth-first
evaluation of the threshold recursion with residual-threshold memoization
for random variables.  Choice (exists/forall) variables are folded inline
because their assignment is a deterministic function of the weight sign.

Termination uses per-suffix bounds in which the contribution of remaining
choice variables is treated as fixed and only the random remainder can
vary.  This prunes strictly more than comparing against whole-instance
weight sums and is what keeps the memo table inside the pseudo-polynomial
window asserted by the test suite.

Two interchangeable backends implement the same algorithm:

* ``numba`` - an ``@njit`` kernel over dense memo arrays (default when
  numba is importable),
* ``numpy`` - a pure-Python explicit stack with a dict memo.

Selection is via the ``FVGM_BACKEND`` environment variable
(``auto`` | ``numba`` | ``numpy``).  Both backends produce identical
values, identical memo contents and identical counter statistics.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ResourceLimitError

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


Q_EXISTS = 0
Q_FORALL = 1
Q_RANDOM = 2

#: Default cap on allocatable memo cells (rows x residual window).
DEFAULT_MEMO_BUDGET = 20_000_000

_BACKEND_ENV = "FVGM_BACKEND"
_BUDGET_ENV = "FVGM_MEMO_BUDGET"


def current_backend() -> str:
    """Resolve the active backend name from the environment."""
    mode = os.environ.get(_BACKEND_ENV, "auto").strip().lower()
    if mode in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if mode == "numba" and not HAS_NUMBA:
        raise ResourceLimitError("FVGM_BACKEND=numba but numba is not importable")
    if mode not in ("numba", "numpy"):
        raise ValueError(f"unknown FVGM_BACKEND value: {mode!r}")
    return mode


def memo_budget_from_env(explicit: int | None = None) -> int:
    """Budget precedence: explicit argument, FVGM_MEMO_BUDGET, default."""
    if explicit is not None:
        return int(explicit)
    raw = os.environ.get(_BUDGET_ENV)
    if raw:
        return int(raw)
    return DEFAULT_MEMO_BUDGET


@njit(cache=True)
def _dp_kernel(qt, w, pr, sneg_r, spos_r, fixed_c, row, lo, memo_val, memo_seen, counters, tau):
    n = qt.shape[0]
    # frame stacks; depth is bounded by the number of random variables + 1
    st_i = np.empty(n + 2, np.int64)
    st_t = np.empty(n + 2, np.int64)
    st_ph = np.empty(n + 2, np.int64)
    st_c1 = np.empty(n + 2, np.float64)
    top = 0
    st_i[0] = 0
    st_t[0] = tau
    st_ph[0] = 0
    ret = 0.0
    while top >= 0:
        i = st_i[top]
        t = st_t[top]
        ph = st_ph[top]
        if ph == 0:
            counters[1] += 1
            resolved = False
            val = 0.0
            while True:
                phi = t - fixed_c[i]
                if phi <= sneg_r[i]:
                    val = 1.0
                    resolved = True
                    break
                if phi > spos_r[i]:
                    val = 0.0
                    resolved = True
                    break
                q = qt[i]
                if q == Q_EXISTS:
                    if w[i] > 0:
                        t -= w[i]
                elif q == Q_FORALL:
                    if w[i] < 0:
                        t -= w[i]
                else:
                    break
                i += 1
                counters[1] += 1
            if not resolved:
                r = row[i]
                c = t - lo[i]
                if memo_seen[r, c] == 1:
                    val = memo_val[r, c]
                    resolved = True
            if resolved:
                ret = val
                top -= 1
            else:
                st_i[top] = i
                st_t[top] = t
                st_ph[top] = 1
                top += 1
                st_i[top] = i + 1
                st_t[top] = t - w[i]
                st_ph[top] = 0
        elif ph == 1:
            st_c1[top] = ret
            st_ph[top] = 2
            top += 1
            st_i[top] = i + 1
            st_t[top] = t
            st_ph[top] = 0
        else:
            v = pr[i] * st_c1[top] + (1.0 - pr[i]) * ret
            memo_val[row[i], t - lo[i]] = v
            memo_seen[row[i], t - lo[i]] = 1
            counters[0] += 1
            ret = v
            top -= 1
    return ret


def _dp_python(qt, w, pr, sneg_r, spos_r, fixed_c, memo, counters, tau):
    # same explicit-stack walk as the kernel, dict memo keyed (pos, residual)
    stack = [[0, tau, 0, 0.0]]
    ret = 0.0
    while stack:
        frame = stack[-1]
        i, t, ph = frame[0], frame[1], frame[2]
        if ph == 0:
            counters[1] += 1
            resolved = False
            val = 0.0
            while True:
                phi = t - fixed_c[i]
                if phi <= sneg_r[i]:
                    val = 1.0
                    resolved = True
                    break
                if phi > spos_r[i]:
                    val = 0.0
                    resolved = True
                    break
                q = qt[i]
                if q == Q_EXISTS:
                    if w[i] > 0:
                        t -= w[i]
                elif q == Q_FORALL:
                    if w[i] < 0:
                        t -= w[i]
                else:
                    break
                i += 1
                counters[1] += 1
            if not resolved:
                hit = memo.get((i, t))
                if hit is not None:
                    val = hit
                    resolved = True
            if resolved:
                ret = val
                stack.pop()
            else:
                frame[0] = i
                frame[1] = t
                frame[2] = 1
                stack.append([i + 1, t - w[i], 0, 0.0])
        elif ph == 1:
            frame[2] = 2
            frame[3] = ret
            stack.append([i + 1, t, 0, 0.0])
        else:
            v = pr[i] * frame[3] + (1.0 - pr[i]) * ret
            memo[(i, t)] = v
            counters[0] += 1
            ret = v
            stack.pop()
    return ret


class SpanSolver:
    """Reusable memoized solver over a fixed span of variables.

    One instance owns one memo table; repeated :meth:`solve` calls with
    different thresholds share it, which is what the correlated solver
    relies on when it enumerates network assignments above an independent
    tail.  ``index_base`` offsets reported trace indices so they match the
    position of the span inside the full instance (1-based).
    """

    def __init__(self, qtypes, weights, probs, index_base: int = 0,
                 memo_budget: int | None = None):
        qt = np.asarray(qtypes, dtype=np.int8)
        w = np.asarray(weights, dtype=np.int64)
        pr = np.asarray(probs, dtype=np.float64)
        n = qt.shape[0]
        sneg_r = np.zeros(n + 1, dtype=np.int64)
        spos_r = np.zeros(n + 1, dtype=np.int64)
        fixed_c = np.zeros(n + 1, dtype=np.int64)
        row = np.full(n + 1, -1, dtype=np.int64)
        for i in range(n - 1, -1, -1):
            sneg_r[i] = sneg_r[i + 1]
            spos_r[i] = spos_r[i + 1]
            fixed_c[i] = fixed_c[i + 1]
            if qt[i] == Q_RANDOM:
                sneg_r[i] += min(int(w[i]), 0)
                spos_r[i] += max(int(w[i]), 0)
            elif qt[i] == Q_EXISTS:
                fixed_c[i] += max(int(w[i]), 0)
            else:
                fixed_c[i] += min(int(w[i]), 0)
        rows = 0
        for i in range(n):
            if qt[i] == Q_RANDOM:
                row[i] = rows
                rows += 1
        width = int(spos_r[0] - sneg_r[0])
        budget = memo_budget_from_env(memo_budget)
        cells = rows * width
        if cells > budget:
            raise ResourceLimitError(
                f"memo table needs {cells} cells "
                f"({rows} random variables x residual window {width}) "
                f"but the memo budget is {budget}; raise {_BUDGET_ENV} "
                "or shrink weights/threshold"
            )
        self._qt = qt
        self._w = w
        self._pr = pr
        self._sneg_r = sneg_r
        self._spos_r = spos_r
        self._fixed_c = fixed_c
        self._row = row
        self._lo = sneg_r + fixed_c + 1  # smallest storable residual per position
        self._index_base = index_base
        self._counters = np.zeros(2, dtype=np.int64)
        self.backend = current_backend()
        if self.backend == "numba":
            self._memo_val = np.zeros((max(rows, 1), max(width, 1)), dtype=np.float64)
            self._memo_seen = np.zeros((max(rows, 1), max(width, 1)), dtype=np.uint8)
            self._memo = None
        else:
            self._memo_val = None
            self._memo_seen = None
            self._memo = {}

    def solve(self, tau: int) -> float:
        tau = int(tau)
        if self.backend == "numba":
            return float(
                _dp_kernel(self._qt, self._w, self._pr, self._sneg_r, self._spos_r,
                           self._fixed_c, self._row, self._lo, self._memo_val,
                           self._memo_seen, self._counters, tau)
            )
        return _dp_python(self._qt, self._w, self._pr, self._sneg_r, self._spos_r,
                          self._fixed_c, self._memo, self._counters, tau)

    @property
    def memo_entries(self) -> int:
        return int(self._counters[0])

    @property
    def dp_calls(self) -> int:
        return int(self._counters[1])

    def trace(self) -> dict[tuple[int, int], float]:
        """Memo contents keyed by (1-based variable index, residual threshold)."""
        out: dict[tuple[int, int], float] = {}
        if self.backend == "numba":
            pos_of_row = {int(self._row[i]): i for i in range(len(self._qt)) if self._row[i] >= 0}
            rr, cc = np.nonzero(self._memo_seen)
            for r, c in zip(rr.tolist(), cc.tolist()):
                i = pos_of_row[r]
                out[(self._index_base + i + 1, int(c + self._lo[i]))] = float(self._memo_val[r, c])
        else:
            for (i, t), v in self._memo.items():
                out[(self._index_base + i + 1, t)] = v
        return out
