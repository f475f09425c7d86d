"""Perspective-n-Point: normalized DLT initialisation, Levenberg-Marquardt refinement, RANSAC."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientPointsError,
    InvalidInputError,
    NoConsensusError,
    NumericalFailureError,
)
from .geometry import (
    DEPTH_EPS,
    CameraIntrinsics,
    Pose,
    matrix_to_quat,
    quat_normalize,
    quat_to_matrix,
    transform_points,
)

MIN_POINTS = 6
MAX_CONDITION = 1e8


@dataclass
class Correspondence:
    p3: np.ndarray
    p2: np.ndarray
    weight: float = 1.0


@dataclass
class PnPOptions:
    robust: bool = False
    ransac_iters: int = 200
    inlier_px: float = 4.0
    seed: int = 0
    max_iters: int = 100
    grad_tol: float = 1e-10
    step_tol: float = 1e-12


@dataclass
class PnPResult:
    pose: Pose
    reprojection_error: float
    iterations: int
    converged: bool
    inliers: np.ndarray | None = field(default=None)


def _unpack(corrs, points2d=None, weights=None):
    """Accept a list of :class:`Correspondence` or parallel ``(points3d, points2d)`` arrays."""
    if points2d is None:
        p3 = np.array([c.p3 for c in corrs], dtype=float).reshape(-1, 3)
        p2 = np.array([c.p2 for c in corrs], dtype=float).reshape(-1, 2)
        w = np.array([c.weight for c in corrs], dtype=float)
    else:
        p3 = np.asarray(corrs, dtype=float).reshape(-1, 3)
        p2 = np.asarray(points2d, dtype=float).reshape(-1, 2)
        w = np.ones(len(p3)) if weights is None else np.asarray(weights, dtype=float)
    if len(p3) != len(p2) or len(w) != len(p3):
        raise InvalidInputError("correspondence arrays differ in length")
    if not (np.all(np.isfinite(p3)) and np.all(np.isfinite(p2)) and np.all(np.isfinite(w))):
        raise InvalidInputError("correspondences must be finite")
    return p3, p2, w


def _residuals(q, t, p3, p2, K: CameraIntrinsics):
    R = quat_to_matrix(q)
    pc = p3 @ R.T + t
    z = pc[:, 2]
    uv = np.stack([K.fx * pc[:, 0] / z + K.cx, K.fy * pc[:, 1] / z + K.cy], axis=1)
    return uv - p2, pc


def _rotation_derivatives(q):
    """dR/dq_k for the unit-quaternion rotation formula, k = w, x, y, z."""
    w, x, y, z = q
    dw = 2 * np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    dx = 2 * np.array([[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]])
    dy = 2 * np.array([[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]])
    dz = 2 * np.array([[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]])
    return (dw, dx, dy, dz)


def _jacobian(q, t, p3, K: CameraIntrinsics):
    R = quat_to_matrix(q)
    pc = p3 @ R.T + t
    X, Y, Z = pc[:, 0], pc[:, 1], pc[:, 2]
    n = len(p3)
    # d(u, v)/d(pc)
    duv_dpc = np.zeros((n, 2, 3))
    duv_dpc[:, 0, 0] = K.fx / Z
    duv_dpc[:, 0, 2] = -K.fx * X / Z**2
    duv_dpc[:, 1, 1] = K.fy / Z
    duv_dpc[:, 1, 2] = -K.fy * Y / Z**2
    dpc_dq = np.stack([p3 @ dR.T for dR in _rotation_derivatives(q)], axis=2)  # (n, 3, 4)
    # restrict to the tangent space of the unit sphere; the radial direction is a gauge freedom
    dpc_dq = dpc_dq @ (np.eye(4) - np.outer(q, q))
    J = np.concatenate([duv_dpc @ dpc_dq, duv_dpc], axis=2)  # (n, 2, 7)
    return J.reshape(2 * n, 7)


def _check_geometry(p3):
    if len(p3) < MIN_POINTS:
        raise InsufficientPointsError(f"need at least {MIN_POINTS} correspondences, got {len(p3)}")
    s = np.linalg.svd(p3 - p3.mean(axis=0), compute_uv=False)
    if s[-1] == 0 or s[0] / s[-1] > MAX_CONDITION:
        raise DegenerateConfigurationError("3D points are coplanar or collinear")


def solve_linear(corrs, K: CameraIntrinsics, points2d=None) -> Pose:
    """Normalized DLT estimate of ``[R|t]`` projected onto SO(3)."""
    p3, p2, _ = _unpack(corrs, points2d)
    _check_geometry(p3)
    # normalized camera coordinates
    xn = (p2[:, 0] - K.cx) / K.fx
    yn = (p2[:, 1] - K.cy) / K.fy
    # similarity normalization of the 3D points
    c = p3.mean(axis=0)
    s = np.sqrt(3) / np.mean(np.linalg.norm(p3 - c, axis=1))
    Xh = np.hstack([(p3 - c) * s, np.ones((len(p3), 1))])
    n = len(p3)
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, None] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -yn[:, None] * Xh
    _, sv, Vt = np.linalg.svd(A)
    if sv[-2] < 1e-12 * sv[0]:
        raise DegenerateConfigurationError("DLT system is rank deficient")
    P = Vt[-1].reshape(3, 4)
    T = np.eye(4)
    T[:3, :3] *= s
    T[:3, 3] = -s * c
    P = P @ T
    # overall sign from cheirality: most points must lie in front of the camera
    if np.sum(np.hstack([p3, np.ones((n, 1))]) @ P[2] > 0) < n / 2:
        P = -P
    U, S, Vt3 = np.linalg.svd(P[:, :3])
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt3))])
    R = U @ D @ Vt3
    t = P[:, 3] / S.mean()
    return Pose(matrix_to_quat(R), t)


def _initial_pose(p3, p2, K: CameraIntrinsics) -> Pose:
    """DLT estimate, or its rotation at a size-based depth when DLT puts points behind the camera.

    Under heavy detection noise the DLT can collapse to a translation near the
    camera centre. The fallback places the object centroid on the ray through
    the 2-D centroid, at the depth where its RMS radius matches the image spread.
    """
    pose = solve_linear(p3, K, p2)
    if np.all(transform_points(pose, p3)[:, 2] > DEPTH_EPS):
        return pose
    R = quat_to_matrix(pose.q)
    c = p3.mean(axis=0)
    offsets = (p3 - c) @ R.T
    xn = np.stack([(p2[:, 0] - K.cx) / K.fx, (p2[:, 1] - K.cy) / K.fy], axis=1)
    spread = np.sqrt(np.mean(np.sum((xn - xn.mean(axis=0)) ** 2, axis=1)))
    radius = np.sqrt(np.mean(np.sum(offsets ** 2, axis=1)))
    far = np.abs(offsets[:, 2]).max()
    # isotropic points: projected RMS spread is sqrt(2/3) of the 3-D RMS radius over depth
    z0 = np.sqrt(2 / 3) * radius / spread if spread > 0 else 0.0
    z0 = max(z0, 2 * far + DEPTH_EPS)
    t = z0 * np.append(xn.mean(axis=0), 1.0) - R @ c
    return Pose(pose.q, t)


def refine(initial: Pose, corrs, K: CameraIntrinsics, options: PnPOptions | None = None,
           points2d=None, weights=None) -> PnPResult:
    """Levenberg-Marquardt on weighted squared reprojection error over ``(q, t)``."""
    opts = options or PnPOptions()
    p3, p2, w = _unpack(corrs, points2d, weights)
    sw = np.repeat(np.sqrt(w), 2)
    q, t = initial.q.copy(), initial.t.copy()
    r, pc = _residuals(q, t, p3, p2, K)
    if np.any(pc[:, 2] <= DEPTH_EPS):
        raise InvalidInputError("initial pose places points behind the camera")
    rw = r.reshape(-1) * sw
    cost = float(rw @ rw)
    lam = 1e-3
    iters = 0
    converged = False
    for _ in range(opts.max_iters):
        J = _jacobian(q, t, p3, K) * sw[:, None]
        g = J.T @ rw
        if np.linalg.norm(g) < opts.grad_tol:
            converged = True
            break
        H = J.T @ J
        # pin the radial quaternion component so the step stays tangent
        qe = np.concatenate([q, np.zeros(3)])
        H += (np.trace(H) / 7 + 1.0) * np.outer(qe, qe)
        accepted = False
        while lam < 1e12:
            try:
                delta = np.linalg.solve(H + lam * np.diag(np.diag(H) + 1e-12), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            q_new = quat_normalize(q + delta[:4])
            t_new = t + delta[4:]
            r_new, pc_new = _residuals(q_new, t_new, p3, p2, K)
            if not np.all(np.isfinite(r_new)):
                raise NumericalFailureError("non-finite reprojection residuals", last_pose=Pose(q, t))
            rw_new = r_new.reshape(-1) * sw
            cost_new = float(rw_new @ rw_new)
            if cost_new < cost and np.all(pc_new[:, 2] > DEPTH_EPS):
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged = True  # no descent direction left at machine precision
            break
        iters += 1
        step = np.linalg.norm(delta)
        q, t, rw, cost = q_new, t_new, rw_new, cost_new
        lam = max(lam * 0.1, 1e-15)
        if step < opts.step_tol:
            converged = True
            break
    r, _ = _residuals(q, t, p3, p2, K)
    err = float(np.mean(np.linalg.norm(r, axis=1)))
    return PnPResult(Pose(q, t), err, iters, converged)


def _reproj(pose: Pose, p3, p2, K):
    r, pc = _residuals(pose.q, pose.t, p3, p2, K)
    err = np.linalg.norm(r, axis=1)
    err[pc[:, 2] <= DEPTH_EPS] = np.inf
    return err


def solve(corrs, K: CameraIntrinsics, options: PnPOptions | None = None, points2d=None,
          weights=None) -> PnPResult:
    """Linear initialisation followed by refinement, optionally inside RANSAC.

    In robust mode minimal 6-point samples vote by reprojection error; the
    largest consensus set is re-solved from scratch and refined, and the
    returned inlier mask is taken from the refined pose.
    """
    opts = options or PnPOptions()
    p3, p2, w = _unpack(corrs, points2d, weights)
    if len(p3) < MIN_POINTS:
        raise InsufficientPointsError(f"need at least {MIN_POINTS} correspondences, got {len(p3)}")
    if not opts.robust:
        return refine(_initial_pose(p3, p2, K), p3, K, opts, p2, w)

    best = None
    for it in range(opts.ransac_iters):
        rng = np.random.default_rng([int(opts.seed), it])
        sample = rng.choice(len(p3), MIN_POINTS, replace=False)
        try:
            pose = solve_linear(p3[sample], K, p2[sample])
        except (DegenerateConfigurationError, InvalidInputError):
            continue
        inl = _reproj(pose, p3, p2, K) <= opts.inlier_px
        if best is None or inl.sum() > best.sum():
            best = inl
    if best is None or best.sum() < MIN_POINTS:
        raise NoConsensusError("no pose hypothesis gathered at least 6 inliers")
    idx = np.flatnonzero(best)
    try:
        res = refine(_initial_pose(p3[idx], p2[idx], K), p3[idx], K, opts, p2[idx], w[idx])
    except DegenerateConfigurationError as exc:
        raise NoConsensusError(f"consensus set is degenerate: {exc}") from exc
    res.inliers = _reproj(res.pose, p3, p2, K) <= opts.inlier_px
    return res
