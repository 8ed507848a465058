"""Condensed moving-horizon estimation problem for one time step.

Each step solves

    min  2 eta^Mt ||xhat_0 - prior||_P^2
       + sum_j eta^{Mt-1-j} (2 ||what_j||_Q^2 + ||yhat_j - y_j||_R^2)

over the window states/disturbances/outputs, subject to the plant equalities
and interval constraints. The equalities are eliminated by condensing onto
the free variables v = (initial window state, disturbance sequence); states
and outputs are affine in v, so the problem becomes a box-constrained
strongly convex QP. The full decision vector keeps the ordering

    z = [xhat_0, what_0, yhat_0, ..., what_{Mt-1}, yhat_{Mt-1}]

so that warm-start padding and error norms are measured consistently.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, WindowLengthMismatch
from .linalg import spectral_norm, spectral_norm_sym


@dataclass(frozen=True)
class CondensedPoint:
    """A point in the step's decision ordering, with its free coordinates."""

    z: np.ndarray
    v: np.ndarray | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        if self.v is not None:
            object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass(frozen=True)
class MheProblem:
    """One step's condensed QP: weight, reference, lift, and feasible boxes."""

    sys: object
    t: int
    horizon: int
    m_eff: int
    weight: np.ndarray       # H on the full decision ordering
    reference: np.ndarray    # target vector in the same ordering
    lift_matrix: np.ndarray  # Psi: free variables -> full ordering
    lift_offset: np.ndarray  # psi (input-sequence contribution)
    lower: np.ndarray        # free-variable box, componentwise
    upper: np.ndarray
    x_prior: np.ndarray
    u_window: np.ndarray     # (m_eff, n_u)
    y_window: np.ndarray     # (m_eff, n_y)

    @property
    def dim_z(self):
        return self.reference.shape[0]

    @property
    def dim_v(self):
        return self.lift_matrix.shape[1]

    def lift(self, v):
        return self.lift_matrix @ np.asarray(v, dtype=float) + self.lift_offset

    def select_v(self, z):
        """Read the free coordinates (initial state + disturbance blocks) off z.

        Exact under the fixed ordering: every free variable appears verbatim
        in z, so no least-squares fitting is needed. Derived output blocks of
        z are discarded (the lift reconstructs them).
        """
        z = np.asarray(z, dtype=float)
        if z.shape[0] != self.dim_z:
            raise DimensionMismatch(
                f"z has length {z.shape[0]}, expected {self.dim_z}")
        n_x, n_w, n_y = self.sys.n_x, self.sys.n_w, self.sys.n_y
        parts = [z[:n_x]]
        off = n_x
        for _ in range(self.m_eff):
            parts.append(z[off:off + n_w])
            off += n_w + n_y
        return np.concatenate(parts)

    def reduced_hessian(self):
        return 2.0 * self.lift_matrix.T @ self.weight @ self.lift_matrix

    def reduced_gradient_terms(self):
        """(S, c) with grad f(v) = S v + c for f = ||Psi v + psi - ref||^2_H."""
        psi = self.lift_matrix
        s = 2.0 * psi.T @ self.weight @ psi
        c = 2.0 * psi.T @ self.weight @ (self.lift_offset - self.reference)
        return s, c

    def cost(self, z):
        d = np.asarray(z, dtype=float) - self.reference
        return float(d @ self.weight @ d)


def compute_weight(m_eff, cert):
    """Block-diagonal weight: prior block 2 eta^Mt P, then per window slot
    (oldest first) 2 eta^{Mt-1-j} Q and eta^{Mt-1-j} R."""
    if m_eff < 0:
        raise ValueError("m_eff must be nonnegative")
    eta = cert.eta
    blocks = [2.0 * eta ** m_eff * cert.P]
    for j in range(m_eff):
        e = m_eff - 1 - j
        blocks.append(2.0 * eta ** e * cert.Q)
        blocks.append(eta ** e * cert.R)
    total = sum(b.shape[0] for b in blocks)
    out = np.zeros((total, total))
    off = 0
    for b in blocks:
        k = b.shape[0]
        out[off:off + k, off:off + k] = b
        off += k
    return out


def build_problem(sys, cert, x_prior, u_window, y_window, M, t):
    """Assemble the step-t condensed QP from windows of length min(M, t)."""
    cert.check_shapes(sys)
    n_x, n_u, n_y, n_w = sys.n_x, sys.n_u, sys.n_y, sys.n_w
    m_eff = min(M, t)
    u_window = np.asarray(u_window, dtype=float).reshape(-1, n_u) if len(u_window) else \
        np.zeros((0, n_u))
    y_window = np.asarray(y_window, dtype=float).reshape(-1, n_y) if len(y_window) else \
        np.zeros((0, n_y))
    if u_window.shape[0] != m_eff or y_window.shape[0] != m_eff:
        raise WindowLengthMismatch(
            f"windows must have length min(M, t) = {m_eff}, "
            f"got u: {u_window.shape[0]}, y: {y_window.shape[0]}")
    x_prior = np.asarray(x_prior, dtype=float)
    if x_prior.shape != (n_x,):
        raise DimensionMismatch(f"prior has shape {x_prior.shape}, expected ({n_x},)")

    dim_v = n_x + m_eff * n_w
    dim_z = n_x + m_eff * (n_w + n_y)
    psi = np.zeros((dim_z, dim_v))
    offset = np.zeros(dim_z)
    reference = np.zeros(dim_z)

    # running affine map v -> xhat_j: state_map @ v + state_off
    state_map = np.zeros((n_x, dim_v))
    state_map[:, :n_x] = np.eye(n_x)
    state_off = np.zeros(n_x)

    psi[:n_x, :n_x] = np.eye(n_x)
    reference[:n_x] = x_prior

    row = n_x
    for j in range(m_eff):
        w_col = n_x + j * n_w
        # disturbance block appears verbatim
        psi[row:row + n_w, w_col:w_col + n_w] = np.eye(n_w)
        reference[row:row + n_w] = 0.0
        row += n_w
        # output block: yhat_j = C xhat_j + w2_j
        psi[row:row + n_y, :] = sys.C @ state_map
        psi[row:row + n_y, w_col + n_x:w_col + n_w] += np.eye(n_y)
        offset[row:row + n_y] = sys.C @ state_off
        reference[row:row + n_y] = y_window[j]
        row += n_y
        # advance the state map: xhat_{j+1} = A xhat_j + B u_j + w1_j
        state_map = sys.A @ state_map
        state_map[:, w_col:w_col + n_x] += np.eye(n_x)
        state_off = sys.A @ state_off + sys.B @ u_window[j]

    lower = np.concatenate(
        [sys.x_box.lower] + [np.concatenate([sys.w1_box.lower, sys.w2_box.lower])
                             for _ in range(m_eff)])
    upper = np.concatenate(
        [sys.x_box.upper] + [np.concatenate([sys.w1_box.upper, sys.w2_box.upper])
                             for _ in range(m_eff)])

    weight = compute_weight(m_eff, cert)
    for arr in (weight, reference, psi, offset, lower, upper):
        arr.setflags(write=False)
    return MheProblem(sys=sys, t=t, horizon=M, m_eff=m_eff, weight=weight,
                      reference=reference, lift_matrix=psi, lift_offset=offset,
                      lower=lower, upper=upper, x_prior=x_prior,
                      u_window=u_window, y_window=y_window)


def window_slot_width(n_x, n_y):
    """Width of one (disturbance, output) window slot in the decision vector."""
    return (n_x + n_y) + n_y


def expected_dim_z(n_x, n_y, M, t):
    return n_x + min(M, t) * window_slot_width(n_x, n_y)


def sigma_lift(z_prev, t, M, dims):
    """Warm-start lift from the step t-1 solution to the step-t dimension.

    During the growing phase (t - 1 < M) appends one zeroed (disturbance,
    output) slot; afterwards it is the identity. Zero padding preserves the
    norm, so the lift has unit operator norm.
    """
    n_x, n_y = dims
    z_prev = np.asarray(z_prev, dtype=float)
    expect_prev = expected_dim_z(n_x, n_y, M, t - 1)
    if z_prev.shape[0] != expect_prev:
        raise DimensionMismatch(
            f"warm start has length {z_prev.shape[0]}, expected {expect_prev} at step {t - 1}")
    if t - 1 >= M:
        return z_prev.copy()
    return np.concatenate([z_prev, np.zeros(window_slot_width(n_x, n_y))])


def sigma_truncate(z_curr, t, M, dims):
    """Adjoint of sigma_lift: drop the newest slot during the growing phase."""
    n_x, n_y = dims
    z_curr = np.asarray(z_curr, dtype=float)
    expect = expected_dim_z(n_x, n_y, M, t)
    if z_curr.shape[0] != expect:
        raise DimensionMismatch(
            f"vector has length {z_curr.shape[0]}, expected {expect} at step {t}")
    if t - 1 >= M:
        return z_curr.copy()
    return z_curr[:-window_slot_width(n_x, n_y)].copy()


def shift_window(seq, new_item, t, M):
    """Append the newest item; drop the oldest whenever the window is full.

    Input has length min(M, t); the result has length min(M, t + 1), which
    means the first element is discarded exactly when t >= M.
    """
    new_item = np.atleast_1d(np.asarray(new_item, dtype=float))
    seq = np.asarray(seq, dtype=float)
    if seq.size == 0:
        seq = np.zeros((0, new_item.shape[0]))
    if seq.shape[0] != min(M, t):
        raise WindowLengthMismatch(
            f"window has length {seq.shape[0]}, expected min(M, t) = {min(M, t)}")
    out = np.vstack([seq, new_item[None, :]])
    if out.shape[0] > min(M, t + 1):
        out = out[1:]
    return out


def extract_estimate(problem, z):
    """Forward-simulate the window dynamics from z's free blocks.

    Returns the m_eff + 1 window states; the last entry is the current
    estimate.
    """
    sys = problem.sys
    z = np.asarray(z, dtype=float)
    if z.shape[0] != problem.dim_z:
        raise DimensionMismatch(
            f"z has length {z.shape[0]}, expected {problem.dim_z}")
    v = problem.select_v(z)
    n_x, n_w = sys.n_x, sys.n_w
    states = np.zeros((problem.m_eff + 1, n_x))
    states[0] = v[:n_x]
    for j in range(problem.m_eff):
        w1 = v[n_x + j * n_w: n_x + j * n_w + n_x]
        states[j + 1] = sys.A @ states[j] + sys.B @ problem.u_window[j] + w1
    return states


def residual_sigma_parts(t, M, weight, sys, eta):
    """(raw, clamped) residual magnitude for the growing-phase problem change.

    Raw value is (1 - 1/eta) ||H|| + ||A|| + ||B|| + ||C|| + 2 for t <= M and
    0 afterwards. The first coefficient is negative for eta in (0, 1), so the
    raw value can be negative; it is clamped at zero because it enters the
    analysis as a disturbance magnitude.
    """
    if t > M:
        return 0.0, 0.0
    coeff = 0.0 if eta == 1.0 else (1.0 - 1.0 / eta if eta > 0.0 else -np.inf)
    raw = (coeff * spectral_norm_sym(weight) + spectral_norm(sys.A)
           + spectral_norm(sys.B) + spectral_norm(sys.C) + 2.0)
    return float(raw), float(max(raw, 0.0))


def residual_sigma(t, M, weight, sys, eta):
    """Clamped residual magnitude sigma_t (see residual_sigma_parts)."""
    return residual_sigma_parts(t, M, weight, sys, eta)[1]
