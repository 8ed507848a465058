"""Stability analysis scalars and the certified iteration budget.

Computes the M-step decay base rho = 6^{1/M} eta, the iteration-count
constants C1(K)..C_eps(K), the linear gain slopes of the three-subsystem
interconnection (controlled plant, solver sub-optimality, estimation error),
the small-gain conditions, and the smallest iteration count K that passes
them. All gains here are linear (slope times argument), so the class-K
compositions reduce exactly to slope products.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractionViolated, NotFoundBelowCap
from .linalg import jacobi_eigh
from .mhe import compute_weight


@dataclass(frozen=True)
class AnalysisParams:
    """Scalar inputs of the analysis for a fixed parameter set."""

    L_phi: float          # Lipschitz constant of the optimal-solution map (> 1)
    L_pi: float           # controller Lipschitz constant
    gamma13_slope: float  # error-to-state gain slope of the controlled plant
    eta: float
    M: int
    phi_base: float       # q with phi(K) = q^K
    norm_C: float
    bar_H: float          # sup over steps of the largest weight eigenvalue
    lam_HP: float         # bar_H / min eig P
    lam_PP: float         # max eig P / min eig P
    lam_QP: float         # max eig Q / min eig P

    def __post_init__(self):
        if not self.L_phi > 1.0:
            raise ValueError(f"L_phi must exceed 1, got {self.L_phi}")
        if not 0.0 < self.phi_base < 1.0:
            raise ValueError(f"phi_base must lie in (0, 1), got {self.phi_base}")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        for name in ("gamma13_slope", "norm_C"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("lam_HP", "lam_PP", "lam_QP", "bar_H"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    def phi(self, K):
        return self.phi_base ** K


@dataclass(frozen=True)
class BudgetConstants:
    K: int
    phi: float
    rho: float
    C1: float
    C2: float
    C3: float
    C_e: float
    C_w: float
    C_eps: float


@dataclass(frozen=True)
class GainLedger:
    """Every analysis scalar at a given iteration count K."""

    K: int
    params: AnalysisParams
    constants: BudgetConstants
    # sub-optimality error dynamics (driven by state, error, disturbance, residual)
    g21: float
    g23: float
    g2w: float
    g2sigma: float
    beta2_base: float     # epsilon transient: phi(K)^t
    # estimation error dynamics
    g31: float
    g32: float
    g3w: float
    g3sigma: float
    beta3_coeff: float    # error transient: C_e(K) sqrt(rho)^t
    beta3_base: float
    # small-gain condition products and margins (margin = 1 - product)
    products: tuple = field(default=())
    margins: tuple = field(default=())
    passed: bool = False

    def to_dict(self):
        c = self.constants
        return {
            "K": self.K,
            "phi": c.phi,
            "rho": c.rho,
            "constants": {"C1": c.C1, "C2": c.C2, "C3": c.C3,
                          "C_e": c.C_e, "C_w": c.C_w, "C_eps": c.C_eps},
            "slopes": {"g21": self.g21, "g23": self.g23, "g2w": self.g2w,
                       "g2sigma": self.g2sigma, "g31": self.g31,
                       "g32": self.g32, "g3w": self.g3w,
                       "g3sigma": self.g3sigma},
            "transients": {"beta2_base": self.beta2_base,
                           "beta3_coeff": self.beta3_coeff,
                           "beta3_base": self.beta3_base},
            "small_gain": {"products": list(self.products),
                           "margins": list(self.margins),
                           "passed": self.passed},
            "params": {
                "L_phi": self.params.L_phi, "L_pi": self.params.L_pi,
                "gamma13_slope": self.params.gamma13_slope,
                "eta": self.params.eta, "M": self.params.M,
                "phi_base": self.params.phi_base, "norm_C": self.params.norm_C,
                "bar_H": self.params.bar_H, "lam_HP": self.params.lam_HP,
                "lam_PP": self.params.lam_PP, "lam_QP": self.params.lam_QP,
            },
        }


@dataclass(frozen=True)
class SmallGainVerdict:
    K: int
    products: tuple
    margins: tuple
    passed: bool


def minimal_contracting_horizon(eta):
    """Smallest M with 6^{1/M} eta < 1."""
    if eta <= 0.0:
        return 1
    m = max(1, math.floor(math.log(6.0) / math.log(1.0 / eta)))
    while 6.0 ** (1.0 / m) * eta >= 1.0:
        m += 1
    return m


def compute_rho(eta, M):
    """M-step decay base rho = 6^{1/M} eta; errors when it fails to contract."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    rho = 6.0 ** (1.0 / M) * eta
    if rho >= 1.0:
        raise ContractionViolated(rho, eta, M, minimal_contracting_horizon(eta))
    return rho


def budget_constants(K, params):
    """Literal evaluation of the six iteration-count constants."""
    rho = compute_rho(params.eta, params.M)
    phi = params.phi(K)
    L_phi, L_pi, M = params.L_phi, params.L_pi, params.M
    sq = math.sqrt
    sqrt_rho = sq(rho)
    c1 = 2.0 * phi * L_phi * (1.0 + M * (params.norm_C + L_pi))
    c2 = 2.0 * phi * L_phi * (1.0 + M * L_pi)
    c3 = 2.0 * phi * L_phi * M
    pref = sq(3.0 * params.lam_PP * params.lam_HP) * phi * L_phi
    tail_sum = sum(sqrt_rho ** (-1 - i) for i in range(1, M))  # empty for M = 1
    c_e = (2.0 * pref * (sqrt_rho ** (-M) + L_pi / sqrt_rho)
           + 4.0 * pref * L_pi * tail_sum
           + sq(6.0 * params.lam_PP)
           + 2.0 * pref * (L_pi + 1.0) * sqrt_rho ** (-M - 1))
    geo = 1.0 / (1.0 - sqrt_rho)
    geo_m = 1.0 / (1.0 - sq(rho ** M))
    c_w = (sq(2.0 * params.lam_HP) * c3
           + sq(6.0 * params.lam_QP) * geo
           + 4.0 * sq(3.0 * params.lam_HP * params.lam_QP) * phi * L_phi
           * (L_pi * M + 1.0) * geo)
    c_eps = (sq(2.0 * params.lam_HP) * phi
             + sq(2.0 * params.lam_HP) * geo_m
             + 4.0 * params.lam_HP * phi * L_phi * (L_pi * M + 1.0) * geo_m)
    return BudgetConstants(K=int(K), phi=phi, rho=rho, C1=c1, C2=c2, C3=c3,
                             C_e=c_e, C_w=c_w, C_eps=c_eps)


def gain_slopes(K, params):
    """Fill the ledger's eight gain slopes and transient parameters at K."""
    c = budget_constants(K, params)
    phi = c.phi
    one_minus = 1.0 - phi
    root = math.sqrt(2.0 * params.lam_HP)
    return GainLedger(
        K=int(K), params=params, constants=c,
        g21=c.C1 / one_minus,
        g23=c.C2 / one_minus,
        g2w=c.C3 / one_minus,
        g2sigma=phi * params.L_phi / one_minus,
        beta2_base=phi,
        g31=root * c.C1,
        g32=c.C_eps,
        g3w=c.C_w,
        g3sigma=root * phi * params.L_phi,
        beta3_coeff=c.C_e,
        beta3_base=math.sqrt(c.rho),
    )


def small_gain_check(K, params):
    """Strict slope-product form of the three loop conditions.

    With linear gains the composed class-K conditions reduce to products:
    (i) gamma13 * g31 < 1, (ii) g23 * g32 < 1, (iii) gamma13 * g32 * g21 < 1.
    A product of exactly 1 fails (the conditions are strict).
    """
    ledger = gain_slopes(K, params)
    g = params.gamma13_slope
    products = (g * ledger.g31, ledger.g23 * ledger.g32,
                g * ledger.g32 * ledger.g21)
    margins = tuple(1.0 - p for p in products)
    passed = all(p < 1.0 for p in products)
    return SmallGainVerdict(K=int(K), products=products, margins=margins,
                            passed=passed)


def ledger_at(K, params):
    """Gain ledger with the small-gain verdict folded in."""
    ledger = gain_slopes(K, params)
    verdict = small_gain_check(K, params)
    return GainLedger(
        K=ledger.K, params=params, constants=ledger.constants,
        g21=ledger.g21, g23=ledger.g23, g2w=ledger.g2w,
        g2sigma=ledger.g2sigma, beta2_base=ledger.beta2_base,
        g31=ledger.g31, g32=ledger.g32, g3w=ledger.g3w,
        g3sigma=ledger.g3sigma, beta3_coeff=ledger.beta3_coeff,
        beta3_base=ledger.beta3_base,
        products=verdict.products, margins=verdict.margins,
        passed=verdict.passed)


def min_iterations(params, K_max):
    """Smallest K in [1, K_max] passing the small-gain conditions.

    Exact linear scan: the individual slopes are not guaranteed monotone
    term-by-term, so no bisection. Raises NotFoundBelowCap with the
    best-margin K seen when the scan fails.
    """
    compute_rho(params.eta, params.M)
    best_k, best_margin = None, -math.inf
    for K in range(1, int(K_max) + 1):
        verdict = small_gain_check(K, params)
        worst = min(verdict.margins)
        if worst > best_margin:
            best_margin, best_k = worst, K
        if verdict.passed:
            return K, verdict
    raise NotFoundBelowCap(int(K_max), best_k, best_margin)


def weight_eigen_range(cert, M):
    """(bar_H, min over the M+1 assembled weights of the smallest eigenvalue).

    The sup over steps of the largest weight eigenvalue is attained among the
    finitely many window lengths 0..M, all of which are assembled and scanned.
    """
    top = -math.inf
    bottom = math.inf
    for m_eff in range(M + 1):
        w, _ = jacobi_eigh(compute_weight(m_eff, cert))
        top = max(top, float(w[-1]))
        bottom = min(bottom, float(w[0]))
    return top, bottom


def build_params(sys, cert, M, *, L_phi, L_pi, gamma13_slope, phi_base):
    """Assemble AnalysisParams from a certified system and scalar inputs."""
    from .linalg import spectral_norm

    bar_h, _ = weight_eigen_range(cert, M)
    pw, _ = jacobi_eigh(cert.P)
    qw, _ = jacobi_eigh(cert.Q)
    lam_min_p = float(pw[0])
    return AnalysisParams(
        L_phi=float(L_phi), L_pi=float(L_pi),
        gamma13_slope=float(gamma13_slope),
        eta=cert.eta, M=int(M), phi_base=float(phi_base),
        norm_C=spectral_norm(sys.C), bar_H=bar_h,
        lam_HP=bar_h / lam_min_p,
        lam_PP=float(pw[-1]) / lam_min_p,
        lam_QP=float(qw[-1]) / lam_min_p,
    )


def worst_case_contraction(sys, cert, M):
    """Largest per-step contraction base q over the M+1 problem shapes.

    The lift and weight depend only on (A, C, window length), not on the
    window contents, so the scan is exact.
    """
    from .mhe import build_problem
    from .solver import contraction_rate

    worst = 0.0
    for t in range(M + 1):
        m_eff = min(M, t)
        prob = build_problem(sys, cert, np.zeros(sys.n_x),
                             np.zeros((m_eff, sys.n_u)),
                             np.zeros((m_eff, sys.n_y)), M, t)
        worst = max(worst, contraction_rate(prob)[1])
    return worst
