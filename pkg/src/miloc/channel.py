"""Magneto-inductive channel model for pairs of three-axis coils.

A transmitting node m and a receiving node n, each carrying three mutually
orthogonal subcoils, are weakly coupled through the near field.  In the dipole
approximation the 3x3 channel matrix between the subcoil pairs is

    H = (j * c / r**3) * O_rx^T @ F(u) @ O_tx,
    F(u) = 1.5 * u u^T - 0.5 * I,

where r is the node distance, u the unit direction from transmitter to
receiver, O_* the node orientation matrices and c a coupling constant set by
the coil hardware.  H is purely imaginary; measurements add circularly
symmetric complex Gaussian noise per entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Deployment, euler_rotation_derivatives

VACUUM_PERMEABILITY = 4e-7 * np.pi  # H/m

MIN_NODE_DISTANCE = 1e-9  # m; below this the dipole model blows up


class CoincidentNodes(ValueError):
    """Raised when transmitter and receiver (nearly) coincide."""


class LinkKind(Enum):
    AGENT_ANCHOR = "agent-anchor"
    AGENT_AGENT = "agent-agent"


@dataclass(frozen=True)
class CoilParams:
    """Per-node subcoil constants; all three subcoils of a node are equal.

    Attributes:
        turns: number of wire windings.
        diameter: coil diameter in meters.
        resistance: ohmic loss per subcoil in Ohm.
    """

    turns: int
    diameter: float
    resistance: float

    def __post_init__(self):
        if self.turns <= 0 or self.diameter <= 0 or self.resistance <= 0:
            raise ValueError("coil parameters must be positive")

    @property
    def area(self) -> float:
        """Surface area in m^2, consistent with the diameter by construction."""
        return np.pi * (self.diameter / 2.0) ** 2


@dataclass(frozen=True)
class GlobalParams:
    """System-wide constants: operating frequency, permeability, error level."""

    frequency: float = 500e3
    permeability: float = VACUUM_PERMEABILITY
    noise_sigma: float = 1e-5

    def __post_init__(self):
        if self.frequency <= 0 or self.permeability <= 0 or self.noise_sigma < 0:
            raise ValueError("frequency and permeability must be positive, sigma >= 0")


@dataclass(frozen=True)
class LinkMeasurement:
    """One measured 3x3 channel matrix for an ordered (tx, rx) node pair."""

    tx: int
    rx: int
    h_meas: np.ndarray
    kind: LinkKind

    def __post_init__(self):
        if self.tx == self.rx:
            raise ValueError("tx and rx must differ")


def coupling_coefficient(tx: CoilParams, rx: CoilParams, params: GlobalParams) -> float:
    """Scalar coupling constant of a subcoil pair.

    c = mu * A_rx * A_tx * nu_rx * nu_tx * f / sqrt(4 * R_rx * R_tx)
    """
    return (
        params.permeability
        * tx.area
        * rx.area
        * tx.turns
        * rx.turns
        * params.frequency
        / np.sqrt(4.0 * tx.resistance * rx.resistance)
    )


def dipole_factor(u: np.ndarray) -> np.ndarray:
    """F(u) = 1.5 u u^T - 0.5 I for a unit direction u.

    F has eigenvalues {1, -1/2, -1/2} and satisfies F(u) = F(-u), which is
    the root cause of the single-link sign ambiguity.
    """
    u = np.asarray(u, dtype=float)
    return 1.5 * np.outer(u, u) - 0.5 * np.eye(3)


def _link_geometry(tx: Deployment, rx: Deployment):
    rvec = rx.position - tx.position
    r = float(np.linalg.norm(rvec))
    if r < MIN_NODE_DISTANCE:
        raise CoincidentNodes(f"node distance {r} below {MIN_NODE_DISTANCE} m")
    return r, rvec / r


def channel_matrix(tx: Deployment, rx: Deployment, coupling: float) -> np.ndarray:
    """Noiseless complex 3x3 channel matrix of the ordered link tx -> rx.

    Rows index receiver subcoils, columns transmitter subcoils.  The result
    is purely imaginary.
    """
    r, u = _link_geometry(tx, rx)
    return 1j * coupling / r**3 * (rx.rotation.T @ dipole_factor(u) @ tx.rotation)


def add_noise(h: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. circularly symmetric complex Gaussian errors.

    Each entry receives total variance sigma**2, i.e. sigma**2 / 2 per real
    dimension.  sigma = 0 returns the input unchanged.
    """
    if sigma == 0.0:
        return np.asarray(h, dtype=complex)
    w = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    return np.asarray(h, dtype=complex) + w * (sigma / np.sqrt(2.0))


def channel_jacobian(tx: Deployment, rx: Deployment, coupling: float):
    """Analytic derivatives of the channel matrix w.r.t. the transmitter pose.

    Returns:
        (d_pos, d_ori): two complex arrays of shape (3, 3, 3); d_pos[i] is
        dH/d[p_tx]_i and d_ori[i] is dH/d[angle_tx]_i for the z-y-x Euler
        angles of the transmitter.

    With rvec = p_rx - p_tx the spatial chain rule gives
        du/d[p_tx]_i   = -(e_i - u_i u) / r,
        d(r^-3)/d[p_tx]_i = 3 u_i / r^4,
    which fixes the signs; both are validated against central finite
    differences in the test suite.
    """
    r, u = _link_geometry(tx, rx)
    f = dipole_factor(u)
    eye = np.eye(3)
    d_pos = np.empty((3, 3, 3), dtype=complex)
    for i in range(3):
        w = -(eye[i] - u[i] * u) / r
        df = 1.5 * (np.outer(u, w) + np.outer(w, u))
        d_pos[i] = 1j * coupling * (rx.rotation.T @ (df / r**3 + 3.0 * u[i] / r**4 * f) @ tx.rotation)
    d_rot = euler_rotation_derivatives(tx.euler)
    d_ori = np.empty((3, 3, 3), dtype=complex)
    for i in range(3):
        d_ori[i] = 1j * coupling / r**3 * (rx.rotation.T @ f @ d_rot[i])
    return d_pos, d_ori


def channel_jacobian_rx(tx: Deployment, rx: Deployment, coupling: float):
    """Derivatives of the same link w.r.t. the receiver pose.

    The channel depends on positions only through rvec = p_rx - p_tx, so the
    spatial part is the negated transmitter derivative; the orientation part
    differentiates the left factor O_rx^T.
    """
    r, u = _link_geometry(tx, rx)
    f = dipole_factor(u)
    d_pos_tx, _ = channel_jacobian(tx, rx, coupling)
    d_rot = euler_rotation_derivatives(rx.euler)
    d_ori = np.empty((3, 3, 3), dtype=complex)
    for i in range(3):
        d_ori[i] = 1j * coupling / r**3 * (d_rot[i].T @ f @ tx.rotation)
    return -d_pos_tx, d_ori


# ---------------------------------------------------------------------------
# Batched kernels.  The iterative solver and the information-matrix assembly
# evaluate thousands of links per run; these operate on stacked link arrays
# and must agree with the single-link functions above (enforced by tests).
# ---------------------------------------------------------------------------


def channel_gain_batch(p_tx, o_tx, p_rx, o_rx, coupling):
    """Imaginary parts of H for stacked links.

    Args:
        p_tx, p_rx: (L, 3) positions; o_tx, o_rx: (L, 3, 3) orientations;
        coupling: scalar or (L,) couplings.
    Returns:
        (gains, r, u, f): gains (L, 3, 3) real, distances (L,), unit
        directions (L, 3) and dipole factors (L, 3, 3).
    """
    rvec = p_rx - p_tx
    r = np.linalg.norm(rvec, axis=1)
    if np.any(r < MIN_NODE_DISTANCE):
        raise CoincidentNodes("coincident nodes in batched link set")
    u = rvec / r[:, None]
    f = 1.5 * u[:, :, None] * u[:, None, :] - 0.5 * np.eye(3)
    c = np.broadcast_to(np.asarray(coupling, dtype=float), r.shape)
    gains = c[:, None, None] / r[:, None, None] ** 3 * np.einsum(
        "lji,ljk,lkm->lim", o_rx, f, o_tx
    )
    return gains, r, u, f


def channel_derivative_columns(r, u, f, gains, o_tx, o_rx, d_rot_tx, coupling):
    """Derivative columns of Im(H) w.r.t. the six transmitter parameters.

    Inputs are the stacked quantities returned by channel_gain_batch plus the
    per-link Euler-derivative stacks d_rot_tx of shape (L, 3, 3, 3).
    Returns an (L, 9, 6) array whose column k holds vec(d Im H / d theta_k).
    """
    length = len(r)
    eye = np.eye(3)
    c = np.broadcast_to(np.asarray(coupling, dtype=float), r.shape)
    cols = np.empty((length, 9, 6))
    r3 = r[:, None, None] ** 3
    for i in range(3):
        w = -(eye[i] - u[:, i : i + 1] * u) / r[:, None]
        df = 1.5 * (u[:, :, None] * w[:, None, :] + w[:, :, None] * u[:, None, :])
        spatial = (
            c[:, None, None] * np.einsum("lji,ljk,lkm->lim", o_rx, df, o_tx) / r3
            + 3.0 * u[:, i, None, None] / r[:, None, None] * gains
        )
        cols[:, :, i] = spatial.reshape(length, 9)
        angular = c[:, None, None] / r3 * np.einsum(
            "lji,ljk,lkm->lim", o_rx, f, d_rot_tx[:, i]
        )
        cols[:, :, 3 + i] = angular.reshape(length, 9)
    return cols


def channel_derivative_columns_rx(r, u, f, gains, o_tx, o_rx, d_rot_rx, coupling):
    """Derivative columns of Im(H) w.r.t. the six receiver parameters."""
    length = len(r)
    eye = np.eye(3)
    c = np.broadcast_to(np.asarray(coupling, dtype=float), r.shape)
    cols = np.empty((length, 9, 6))
    r3 = r[:, None, None] ** 3
    for i in range(3):
        w = -(eye[i] - u[:, i : i + 1] * u) / r[:, None]
        df = 1.5 * (u[:, :, None] * w[:, None, :] + w[:, :, None] * u[:, None, :])
        spatial = (
            c[:, None, None] * np.einsum("lji,ljk,lkm->lim", o_rx, df, o_tx) / r3
            + 3.0 * u[:, i, None, None] / r[:, None, None] * gains
        )
        cols[:, :, i] = -spatial.reshape(length, 9)
        angular = c[:, None, None] / r3 * np.einsum(
            "lji,ljk,lkm->lim", d_rot_rx[:, i], f, o_tx
        )
        cols[:, :, 3 + i] = angular.reshape(length, 9)
    return cols
