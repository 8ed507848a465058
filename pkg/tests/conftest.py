import numpy as np
import pytest

from pathlib import Path

from submhe.config import load_config
from submhe.errors import CertificateNotFound
from submhe.mhe import build_problem
from submhe.model import Box, IossCertificate, LtiSystem, find_certificate

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def case_study_doc():
    return load_config(CONFIG_DIR / "case_study.json")


@pytest.fixture(scope="session")
def certified_doc():
    return load_config(CONFIG_DIR / "case_study_certified.json")


@pytest.fixture(scope="session")
def case_study(case_study_doc):
    doc = case_study_doc
    return doc.system, doc.certificate, doc.controller


def make_system(A, B, C, u_bound=1.0, w_bound=0.1):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n_x, n_u, n_y = A.shape[0], B.shape[1], C.shape[0]
    return LtiSystem(
        A=A, B=B, C=C,
        x_box=Box.unbounded(n_x),
        u_box=Box(np.full(n_u, -u_bound), np.full(n_u, u_bound)),
        y_box=Box.unbounded(n_y),
        w1_box=Box(np.full(n_x, -w_bound), np.full(n_x, w_bound)),
        w2_box=Box(np.full(n_y, -w_bound), np.full(n_y, w_bound)),
    )


def random_certified_setup(rng, n_x_max=6):
    """Random stable system with an LMI-certified (P, Q, R, eta)."""
    while True:
        n_x = int(rng.integers(1, n_x_max + 1))
        n_u = int(rng.integers(1, 3))
        n_y = int(rng.integers(1, 3))
        eta = float(rng.uniform(0.5, 0.9))
        A = rng.standard_normal((n_x, n_x))
        A *= rng.uniform(0.3, 0.85) * np.sqrt(eta) / max(np.linalg.norm(A, 2), 1e-9)
        B = rng.standard_normal((n_x, n_u))
        C = rng.standard_normal((n_y, n_x))
        C /= max(np.linalg.norm(C, 2), 1e-9)
        sys = make_system(A, B, C)
        try:
            cert = find_certificate(sys, np.eye(n_x + n_y), np.eye(n_y), eta,
                                    budget=300)
        except CertificateNotFound:
            continue
        return sys, cert


def random_problem(rng, sys, cert, M=None, t=None):
    M = int(rng.integers(1, 6)) if M is None else M
    t = int(rng.integers(0, 2 * M + 1)) if t is None else t
    m_eff = min(M, t)
    u_win = rng.uniform(-1, 1, size=(m_eff, sys.n_u))
    y_win = rng.uniform(-2, 2, size=(m_eff, sys.n_y))
    prior = rng.uniform(-5, 5, size=sys.n_x)
    return build_problem(sys, cert, prior, u_win, y_win, M, t)


def simple_certificate(n_x, n_y, P=None, Q=None, R=None, eta=0.5):
    return IossCertificate(
        P=np.eye(n_x) if P is None else P,
        Q=np.eye(n_x + n_y) if Q is None else Q,
        R=np.eye(n_y) if R is None else R,
        eta=eta,
    )
