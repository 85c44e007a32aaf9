"""Riccati design, triggering matrices and the multiplier pair (mu, Psi)."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from etcabs.model_io import PlantSpec

log = logging.getLogger(__name__)


class DesignError(RuntimeError):
    """The Riccati equation has no usable stabilizing solution."""


def _sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def care_residual(plant: PlantSpec, P: np.ndarray) -> np.ndarray:
    A, B, E = plant.A, plant.B, plant.E
    G = B @ B.T - (E @ E.T) / plant.gamma ** 2
    return P @ A + A.T @ P + plant.state_weight * np.eye(plant.n) - P @ G @ P


def _is_hurwitz(X: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(X).real < 0))


def _hamiltonian_p(A, G, Qx):
    n = A.shape[0]
    H = np.block([[A, -G], [-Qx, -A.T]])
    T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    if sdim != n:
        eig = np.linalg.eigvals(H)
        raise DesignError(
            "Hamiltonian has eigenvalues on the imaginary axis or an unbalanced "
            f"stable subspace (dim {sdim}, need {n}); spectrum: {np.sort_complex(eig)}")
    U11, U21 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise DesignError("stable invariant subspace is not a graph (U11 singular)")
    return _sym(np.linalg.solve(U11.T, U21.T).T)


def _kleinman_p(A, B, G, Qx, iters=60):
    n = A.shape[0]
    if _is_hurwitz(A):
        P = np.zeros((n, n))
    else:
        # Bass's construction of a stabilizing seed
        s = max(0.0, float(np.max(np.linalg.eigvals(A).real))) + 1.0
        As = A + s * np.eye(n)
        Y = sla.solve_continuous_lyapunov(-As, -2.0 * B @ B.T)
        P = _sym(np.linalg.inv(Y))
    for _ in range(iters):
        Ak = A - G @ P
        if not _is_hurwitz(Ak):
            raise DesignError("Newton-Kleinman iterate lost stability")
        Pn = _sym(sla.solve_continuous_lyapunov(Ak.T, -(Qx + P @ G @ P)))
        if np.linalg.norm(Pn - P) <= 1e-14 * (1.0 + np.linalg.norm(Pn)):
            return Pn
        P = Pn
    return P


def solve_care(plant: PlantSpec) -> np.ndarray:
    """Stabilizing solution of ``PA + A'P + qI - P(BB' - EE'/gamma^2)P = 0``."""
    A, B, E = plant.A, plant.B, plant.E
    n = plant.n
    G = B @ B.T - (E @ E.T) / plant.gamma ** 2
    Qx = plant.state_weight * np.eye(n)
    try:
        P = _hamiltonian_p(A, G, Qx)
    except DesignError as exc:
        log.warning("ordered Schur route failed (%s); trying Newton-Kleinman", exc)
        try:
            P = _kleinman_p(A, B, G, Qx)
        except (np.linalg.LinAlgError, ValueError) as exc2:
            raise DesignError(f"no stabilizing solution: {exc}; fallback: {exc2}") from None
    res = np.linalg.norm(care_residual(plant, P), 2)
    if res > 1e-9 * (1.0 + np.linalg.norm(P, 2) ** 2):
        raise DesignError(f"Riccati residual {res:.3e} exceeds tolerance")
    if not _is_hurwitz(A - G @ P):
        raise DesignError("solution is not stabilizing")
    if np.linalg.eigvalsh(P)[0] < -1e-9 * (1.0 + np.linalg.norm(P, 2)):
        raise DesignError("solution is not positive semidefinite")
    return P


def build_mn(P: np.ndarray, B: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Triggering matrices ``M = (1-b^2)I + PBB'P`` and ``N = (1-b^2)/2 I + PBB'P``."""
    n = P.shape[0]
    PB = P @ B
    S = _sym(PB @ PB.T)
    c = 1.0 - beta ** 2
    return c * np.eye(n) + S, 0.5 * c * np.eye(n) + S


def select_mu_psi(M: np.ndarray, psi_scale: float) -> tuple[float, np.ndarray]:
    n = M.shape[0]
    mu = max(0.0, float(np.linalg.eigvalsh(M)[-1]) + psi_scale)
    return mu, psi_scale * np.eye(n)


@dataclass(frozen=True, eq=False)
class EtcDesign:
    plant: PlantSpec
    P: np.ndarray
    K: np.ndarray
    M: np.ndarray
    N: np.ndarray
    mu: float
    Psi: np.ndarray
    lambda_max_A: float
    log_norm_A: float
    lambda_max_EtE: float

    @property
    def A(self) -> np.ndarray:
        return self.plant.A

    @property
    def B(self) -> np.ndarray:
        return self.plant.B

    @property
    def E(self) -> np.ndarray:
        return self.plant.E

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def Acl(self) -> np.ndarray:
        return self.plant.A - self.plant.B @ self.K

    @property
    def psi(self) -> float:
        return float(self.Psi[0, 0])

    @property
    def lambda_max_M(self) -> float:
        return float(np.linalg.eigvalsh(self.M)[-1])

    def summary(self) -> dict:
        return {
            "K": self.K.tolist(),
            "P": self.P.tolist(),
            "M": self.M.tolist(),
            "N": self.N.tolist(),
            "mu": self.mu,
            "psi": self.psi,
            "lambda_max_A": self.lambda_max_A,
            "log_norm_A": self.log_norm_A,
            "lambda_max_EtE": self.lambda_max_EtE,
            "closed_loop_eigs": sorted(
                [[float(z.real), float(z.imag)] for z in np.linalg.eigvals(self.Acl)]),
        }


def make_design(plant: PlantSpec, psi_scale: float) -> EtcDesign:
    P = solve_care(plant)
    K = plant.B.T @ P
    M, N = build_mn(P, plant.B, plant.beta)
    mu, Psi = select_mu_psi(M, psi_scale)
    lam_A = float(np.linalg.eigvalsh(plant.A + plant.A.T)[-1])
    lam_E = float(np.linalg.eigvalsh(plant.E.T @ plant.E)[-1])
    return EtcDesign(plant=plant, P=P, K=K, M=M, N=N, mu=mu, Psi=Psi,
                     lambda_max_A=lam_A, log_norm_A=0.5 * lam_A, lambda_max_EtE=lam_E)
