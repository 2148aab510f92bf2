"""Weighted particular solution and nullspace parametrization.

For a full-row-rank B (n x p, p > n) every load tau is realized by the
affine solution set xi = B_pinv_W @ tau + Q @ theta, where B_pinv_W is
the weighted right inverse and the columns of Q form an orthonormal
basis of the nullspace of B.  All matrices here are small and constant,
so everything is computed once up front at double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import VesselConfig, build_configuration_matrix, validate_geometry
from .errors import GeometryError

# Construction-time residual bounds; violations indicate a badly
# conditioned thruster layout rather than an algorithmic failure.
_RIGHT_INVERSE_TOL = 1e-10
_ORTHONORMALITY_TOL = 1e-12
_NULLSPACE_TOL = 1e-10


def weighted_pseudoinverse(B: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Weighted Moore-Penrose right inverse Winv @ B.T @ inv(B Winv B.T).

    W may be given as a p-vector of diagonal entries or as a p x p
    diagonal matrix; it must be strictly positive.  The result X
    satisfies B @ X = I and X @ tau is the minimum ||.||_W solution.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    w = np.asarray(W, dtype=float)
    if w.ndim == 2:
        w = np.diag(w)
    if w.shape != (B.shape[1],):
        raise ValueError(f"weight diagonal has shape {w.shape}, expected ({B.shape[1]},)")
    if np.any(w <= 0):
        raise GeometryError("weight matrix must be strictly positive definite")
    BWinv = B / w  # B @ Winv, columns scaled by 1/w
    gram = BWinv @ B.T
    try:
        X = np.linalg.solve(gram, BWinv).T
    except np.linalg.LinAlgError as exc:
        raise GeometryError(f"B W^-1 B^T is singular: {exc}") from exc
    return X


def nullspace_basis(B: np.ndarray) -> np.ndarray:
    """Orthonormal basis Q (p x q) of the nullspace of B via SVD.

    Deterministic for a fixed B, but only span(Q) is contractual;
    callers must not rely on column orientation.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = B.shape[0]
    _, _, vt = np.linalg.svd(B)
    return vt[n:].T.copy()


@dataclass(frozen=True)
class AllocationGeometry:
    """Immutable effector-model geometry shared by filter instances.

    ``block_dims`` lists the per-thruster force dimensions (2 for
    steerable azimuth, 1 for fixed direction) in xi layout order;
    ``row_slices`` gives each thruster's component range in a p-vector.
    """

    B: np.ndarray
    W_diag: np.ndarray
    B_pinv_W: np.ndarray
    Q: np.ndarray
    block_dims: tuple[int, ...]
    row_slices: tuple[slice, ...]

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.Q.shape[1]

    @property
    def m1(self) -> int:
        return sum(1 for d in self.block_dims if d == 2)

    @property
    def m2(self) -> int:
        return sum(1 for d in self.block_dims if d == 1)

    @property
    def m(self) -> int:
        return len(self.block_dims)


def build_geometry(
    B: np.ndarray,
    thruster_weights: np.ndarray | None = None,
    block_dims: tuple[int, ...] | None = None,
) -> AllocationGeometry:
    """Validate B and assemble the allocation geometry.

    ``thruster_weights`` holds one weight per thruster (expanded over
    that thruster's components); defaults to ones.  ``block_dims``
    defaults to treating every column as its own scalar thruster.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    dims = validate_geometry(B)
    if dims.q == 0:
        raise GeometryError("no nullspace: p must exceed n")

    if block_dims is None:
        block_dims = (1,) * dims.p
    if sum(block_dims) != dims.p:
        raise ValueError(f"block_dims {block_dims} do not sum to p={dims.p}")
    if any(d not in (1, 2) for d in block_dims):
        raise ValueError("block dimensions must be 1 or 2")
    first_scalar = block_dims.index(1) if 1 in block_dims else len(block_dims)
    if 2 in block_dims[first_scalar:]:
        raise ValueError("2-component blocks must precede scalar blocks")

    if thruster_weights is None:
        thruster_weights = np.ones(len(block_dims))
    thruster_weights = np.asarray(thruster_weights, dtype=float)
    if thruster_weights.shape != (len(block_dims),):
        raise ValueError("need exactly one weight per thruster")
    W_diag = np.repeat(thruster_weights, block_dims)

    slices = []
    start = 0
    for d in block_dims:
        slices.append(slice(start, start + d))
        start += d

    X = weighted_pseudoinverse(B, W_diag)
    Q = nullspace_basis(B)

    resid_inv = np.max(np.abs(B @ X - np.eye(dims.n)))
    resid_orth = np.max(np.abs(Q.T @ Q - np.eye(dims.q)))
    resid_null = np.max(np.abs(B @ Q))
    if resid_inv > _RIGHT_INVERSE_TOL:
        raise GeometryError(f"right-inverse residual {resid_inv:.3e} too large")
    if resid_orth > _ORTHONORMALITY_TOL or resid_null > _NULLSPACE_TOL:
        raise GeometryError(
            f"nullspace basis residuals too large "
            f"(orthonormality {resid_orth:.3e}, B@Q {resid_null:.3e})"
        )

    return AllocationGeometry(
        B=B,
        W_diag=W_diag,
        B_pinv_W=X,
        Q=Q,
        block_dims=tuple(block_dims),
        row_slices=tuple(slices),
    )


def geometry_from_config(cfg: VesselConfig) -> AllocationGeometry:
    """Compile a VesselConfig into its AllocationGeometry."""
    B = build_configuration_matrix(cfg)
    weights = np.array([t.weight for t in cfg.thrusters])
    block_dims = tuple(t.dim for t in cfg.thrusters)
    return build_geometry(B, weights, block_dims)


def particular_solution(geom: AllocationGeometry, tau_cmd: np.ndarray) -> np.ndarray:
    """Minimum weighted-norm force vector realizing tau_cmd."""
    return geom.B_pinv_W @ np.asarray(tau_cmd, dtype=float)


def desired_state(
    geom: AllocationGeometry, xi_p: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    """Point on the solution manifold: xi_p + Q @ theta."""
    return xi_p + geom.Q @ theta
