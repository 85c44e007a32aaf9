"""Taylor-coefficient embedding of ``Phi(t)`` and of the firing certificate.

The horizon ``[0, sigma]`` is cut into ``l`` cells of length ``h = sigma/l``.
On cell ``j`` (starting at ``t_j = j h``) both matrix functions are expanded
as polynomials of degree ``n_conv`` in the local time ``t' in [0, h]``.
A polynomial ``sum_k C_k t'^k`` over ``t' in [a, b]`` lies in the convex hull
of its partial sums ``S_i = sum_{k<=i} C'_k (b-a)^k`` (``C'`` re-centred at
``a``), so vertex conditions on the ``S_i`` plus a truncation margin
``eta_j`` certify the whole sub-interval.

Two ladders are kept per cell:

* lower (2n x 2n): expansion of ``Phi``; used to certify "not fired yet".
* upper (n x n): expansion of the nominal error form ``Y'MY``; combined per
  cell with a split weight ``d`` and a constant bound on the disturbance
  gain to certify ``theta_up >= 0``, i.e. "has fired".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from etcabs.design import EtcDesign
from etcabs.trigger import DEFAULT_SPLITS, d_a, excitation_gain


@dataclass(frozen=True, eq=False)
class EmbeddingTables:
    sigma: float
    l: int
    n_conv: int
    W: float
    splits: tuple
    check_F: np.ndarray   # (l, n, n) integral of e^{As} on [0, t_j]
    hat_F: np.ndarray     # (l, n, n) e^{A t_j} = A check_F + I
    check_Pi: np.ndarray  # (l, n, n)
    hat_Pi: np.ndarray    # (l, n, n)
    X: np.ndarray         # (l, n_conv+1, n, n) coefficients of Lambda - I
    L: np.ndarray         # (l, n_conv+1, 2n, 2n) lower ladder
    Qn: np.ndarray        # (l, n_conv+1, n, n) coefficients of Y'MY
    gain_up: np.ndarray   # (l,) W kappa^2 at the cell's right end
    N: np.ndarray
    lambda_max_M: float
    eta_lo: np.ndarray = field(default=None)  # (l,) per-cell margins
    eta_up: np.ndarray = field(default=None)

    @property
    def h(self) -> float:
        return self.sigma / self.l

    @property
    def eta(self) -> float:
        """Largest margin over all cells and both ladders."""
        return float(max(self.eta_lo.max(), self.eta_up.max()))

    def with_eta(self, eta_lo: np.ndarray, eta_up: np.ndarray) -> "EmbeddingTables":
        d = dict(self.__dict__)
        d["eta_lo"] = np.asarray(eta_lo, dtype=float)
        d["eta_up"] = np.asarray(eta_up, dtype=float)
        return EmbeddingTables(**d)

    def cell_of(self, t: float) -> int:
        """Cell containing ``t``; the horizon itself belongs to the last cell."""
        j = int(math.floor(t / self.h + 1e-12))
        return min(max(j, 0), self.l - 1)


def _dist_coeffs(lam: float, tj: float, order: int) -> np.ndarray:
    """Taylor coefficients in ``s`` of ``(tj + s) d_A(tj + s)``."""
    e = math.exp(lam * tj)
    c = np.zeros(order + 1)
    c[0] = tj * d_a(lam, tj)
    if order >= 1:
        c[1] = tj * e + d_a(lam, tj)
    for k in range(2, order + 1):
        c[k] = tj * e * lam ** (k - 1) / math.factorial(k) + e * lam ** (k - 2) / math.factorial(k - 1)
    return c


def build_tables(design: EtcDesign, W: float, sigma: float, l: int, n_conv: int,
                 splits=DEFAULT_SPLITS) -> EmbeddingTables:
    if l < 1 or n_conv < 1:
        raise ValueError("l and n_conv must be >= 1")
    splits = tuple(float(d) for d in splits)
    if not splits or not all(0.0 < d < 1.0 for d in splits):
        raise ValueError("splits must be a non-empty set of weights in (0, 1)")
    n = design.n
    A, Acl, M, N = design.A, design.Acl, design.M, design.N
    h = sigma / l
    I = np.eye(n)
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = I
    powers = [np.linalg.matrix_power(A, k - 1) / math.factorial(k) for k in range(1, n_conv + 1)]
    muW = W * design.mu * design.lambda_max_EtE

    cF = np.empty((l, n, n))
    hF = np.empty((l, n, n))
    cP = np.empty((l, n, n))
    hP = np.empty((l, n, n))
    X = np.empty((l, n_conv + 1, n, n))
    L = np.empty((l, n_conv + 1, 2 * n, 2 * n))
    Qn = np.empty((l, n_conv + 1, n, n))
    # kappa is increasing, so its value at the right end bounds the whole cell
    gain_up = np.array([excitation_gain(design, W, (j + 1) * h) for j in range(l)])
    for j in range(l):
        tj = j * h
        ex = sla.expm(aug * tj)
        cF[j] = ex[:n, n:]
        hF[j] = ex[:n, :n]
        cP[j] = cF[j] @ Acl
        hP[j] = hF[j] @ Acl
        X[j, 0] = cP[j]
        for k in range(1, n_conv + 1):
            X[j, k] = powers[k - 1] @ hP[j]
        dc = _dist_coeffs(design.lambda_max_A, tj, n_conv)
        for k in range(n_conv + 1):
            q = np.zeros((n, n))
            for a in range(k + 1):
                q += X[j, a].T @ M @ X[j, k - a]
            q = 0.5 * (q + q.T)
            Qn[j, k] = q
            ul = q + muW * dc[k] * I
            lr = np.zeros((n, n))
            if k == 0:
                ul = ul - N
                lr = -design.Psi
            off = M @ X[j, k]
            L[j, k] = np.block([[ul, off.T], [off, lr]])
    return EmbeddingTables(sigma=sigma, l=l, n_conv=n_conv, W=W, splits=splits,
                           check_F=cF, hat_F=hF, check_Pi=cP, hat_Pi=hP, X=X, L=L, Qn=Qn,
                           gain_up=gain_up, N=np.array(N), lambda_max_M=design.lambda_max_M)


def series(coeffs: np.ndarray, s: float) -> np.ndarray:
    out = np.zeros_like(coeffs[0])
    for k in range(coeffs.shape[0] - 1, -1, -1):
        out = out * s + coeffs[k]
    return out


def exact_blocks(design: EtcDesign, tables: EmbeddingTables, j: int, F_loc: np.ndarray,
                 s: float) -> tuple[np.ndarray, np.ndarray]:
    """``Phi`` and ``Y'MY`` at ``t_j + s`` given ``F_loc = int_0^s e^{Au}du``."""
    n = design.n
    M = design.M
    Y = (tables.check_F[j] + tables.hat_F[j] @ F_loc) @ design.Acl
    t = j * tables.h + s
    g = t * tables.W * design.lambda_max_EtE * d_a(design.lambda_max_A, t)
    YMY = Y.T @ M @ Y
    MY = M @ Y
    phi1 = YMY + design.mu * g * np.eye(n) - design.N
    Phi = np.block([[phi1, MY.T], [MY, -design.Psi]])
    return 0.5 * (Phi + Phi.T), 0.5 * (YMY + YMY.T)


ROUNDOFF_FLOOR = 64.0 * np.finfo(float).eps


def estimate_eta(tables: EmbeddingTables, design: EtcDesign, eta_samples: int,
                 safety: float = 1.1) -> EmbeddingTables:
    """Per-cell truncation margins from sampled residuals, times ``safety``.

    ``eta_lo[j]`` bounds ``lambda_max(Phi - series)`` and ``eta_up[j]`` bounds
    ``lambda_max(series - Y'MY)``, each on cell ``j``.  Sampling alone can
    miss roundoff between the nodes, so each margin is floored at
    ``ROUNDOFF_FLOOR`` times the largest norm of the exact matrix on the cell.
    """
    if eta_samples < 2:
        raise ValueError("eta_samples must be >= 2")
    n = design.n
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = design.A
    aug[:n, n:] = np.eye(n)
    ss = np.linspace(0.0, tables.h, eta_samples)
    Floc = [sla.expm(aug * s)[:n, n:] for s in ss]
    eta_lo = np.zeros(tables.l)
    eta_up = np.zeros(tables.l)
    for j in range(tables.l):
        wl = wu = 0.0
        nl = nu = 0.0
        for s, F in zip(ss, Floc):
            Phi, YMY = exact_blocks(design, tables, j, F, float(s))
            nl = max(nl, float(np.linalg.norm(Phi, 2)))
            nu = max(nu, float(np.linalg.norm(YMY, 2)))
            rl = Phi - series(tables.L[j], float(s))
            ru = series(tables.Qn[j], float(s)) - YMY
            wl = max(wl, float(np.linalg.eigvalsh(0.5 * (rl + rl.T))[-1]))
            wu = max(wu, float(np.linalg.eigvalsh(0.5 * (ru + ru.T))[-1]))
        eta_lo[j] = max(safety * wl, ROUNDOFF_FLOOR * nl)
        eta_up[j] = max(safety * wu, ROUNDOFF_FLOOR * nu)
    return tables.with_eta(eta_lo, eta_up)


def recenter(coeffs: np.ndarray, a: float) -> np.ndarray:
    """Coefficients of ``p(a + u)`` in ``u`` given those of ``p(s)`` in ``s``."""
    K = coeffs.shape[0]
    out = np.zeros_like(coeffs)
    for k in range(K):
        acc = np.zeros_like(coeffs[0])
        for m in range(k, K):
            acc = acc + math.comb(m, k) * a ** (m - k) * coeffs[m]
        out[k] = acc
    return out


def partial_sums(coeffs: np.ndarray, a: float, b: float) -> np.ndarray:
    c = recenter(coeffs, a) if a != 0.0 else coeffs
    w = b - a
    terms = np.array([c[k] * w ** k for k in range(c.shape[0])])
    return np.cumsum(terms, axis=0)


def cell_lower_vertices(tables: EmbeddingTables, j: int, a: float, b: float) -> np.ndarray:
    """Vertices certifying ``Phi <= 0`` on ``[t_j + a, t_j + b]``."""
    S = partial_sums(tables.L[j], a, b)
    d = S.shape[-1]
    return S + tables.eta_lo[j] * np.eye(d)


def cell_upper_vertices(tables: EmbeddingTables, j: int, a: float, b: float,
                        split: float) -> np.ndarray:
    """Vertices ``V`` with ``V <= 0`` on the cone implying ``theta_up >= 0`` there.

    ``theta_up(t) >= (1-d)(series - eta) - N - c_d gain_up`` on the cell, and
    the right side is a convex combination of the negated vertices.
    """
    S = (1.0 - split) * partial_sums(tables.Qn[j], a, b)
    d = S.shape[-1]
    c = (1.0 / split - 1.0) * tables.lambda_max_M * tables.gain_up[j]
    shift = tables.N + (c + (1.0 - split) * tables.eta_up[j]) * np.eye(d)
    return -S + shift


@dataclass(frozen=True, eq=False)
class VertexFamily:
    direction: str
    cells: tuple            # (j, a, b) per cell, local times in [0, h]
    blocks: tuple           # one (n_conv+1, d, d) array per cell

    def all_blocks(self) -> np.ndarray:
        return np.concatenate(self.blocks, axis=0)


def _split_range(tables: EmbeddingTables, t0: float, t1: float):
    h = tables.h
    j0 = tables.cell_of(t0)
    j1 = tables.cell_of(t1) if t1 > t0 else j0
    # an interval ending on a cell boundary does not reach into the next cell
    if j1 > j0 and t1 <= j1 * h + 1e-15:
        j1 -= 1
    for j in range(j0, j1 + 1):
        a = max(t0 - j * h, 0.0)
        b = min(t1 - j * h, h)
        yield j, a, max(a, b)


def lower_vertices(tables: EmbeddingTables, tau: float) -> VertexFamily:
    """Vertex family for ``[0, tau]``."""
    if not (0.0 < tau <= tables.sigma):
        raise ValueError("tau must lie in (0, sigma]")
    cells, blocks = [], []
    for j, a, b in _split_range(tables, 0.0, tau):
        cells.append((j, a, b))
        blocks.append(cell_lower_vertices(tables, j, a, b))
    return VertexFamily("lower", tuple(cells), tuple(blocks))


def upper_vertices(tables: EmbeddingTables, tau: float, end: float | None = None,
                   split: float | None = None) -> VertexFamily:
    """Vertex family for the firing certificate on ``[tau, end]`` (default ``end = sigma``).

    ``split`` defaults to the first configured weight.
    """
    split = tables.splits[0] if split is None else split
    end = tables.sigma if end is None else end
    if not (0.0 <= tau <= end <= tables.sigma):
        raise ValueError("need 0 <= tau <= end <= sigma")
    cells, blocks = [], []
    for j, a, b in _split_range(tables, tau, end):
        cells.append((j, a, b))
        blocks.append(cell_upper_vertices(tables, j, a, b, split))
    return VertexFamily("upper", tuple(cells), tuple(blocks))
