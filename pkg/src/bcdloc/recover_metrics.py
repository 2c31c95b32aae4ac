"""Pose recovery from sensor realizations and accuracy metrics."""

from dataclasses import dataclass

import numpy as np

from .model import Pose, tilt
from .numerics import eig_sym

FAILURE_THRESHOLD = 0.6

# recovered poses use the same type as ground truth
PoseEstimate = Pose


@dataclass
class MetricReport:
    """Aggregate accuracy over a batch of trials (meters; ``fr`` in [0, 1])."""

    rmse: float
    fr: float
    rmse_a: float = float("nan")

    @classmethod
    def from_trials(cls, rmse_values, rmse_a_values=None, threshold=FAILURE_THRESHOLD):
        vals = np.asarray(rmse_values, dtype=float)
        ok = vals[np.isfinite(vals)]
        rmse_a = float("nan")
        if rmse_a_values is not None:
            a = np.asarray(rmse_a_values, dtype=float)
            a = a[np.isfinite(a)]
            if a.size:
                rmse_a = float(np.mean(a))
        return cls(float(np.mean(ok)) if ok.size else float("nan"), failure_rate(vals, threshold), rmse_a)


class DegenerateOffsetError(ValueError):
    pass


def recover_poses(p, inst):
    """Robot poses implied by a realization.

    Yaw comes from the horizontal part of the sensor baseline ``p^0 - p^1``
    compared with the tilted body baseline; the unnormalized sine/cosine
    pair goes straight into ``atan2``. Translation averages the two sensors'
    implied translations.
    """
    p = np.asarray(p, dtype=float)
    d = inst.d
    poses = []
    for i in range(inst.n):
        body = inst.nu[i, 0] - inst.nu[i, 1]
        if d == 3:
            body = tilt(inst.pitch[i], inst.roll[i]) @ body
        nx, ny = body[0], body[1]
        den = nx * nx + ny * ny
        if den <= 1e-9:
            raise DegenerateOffsetError(f"robot {i}: sensor baseline has no horizontal extent")
        dx, dy = p[0, 2 * i] - p[0, 2 * i + 1], p[1, 2 * i] - p[1, 2 * i + 1]
        s = (nx * dy - ny * dx) / den
        c = (nx * dx + ny * dy) / den
        yaw = float(np.arctan2(s, c))
        pose = Pose(yaw, np.zeros(d), float(inst.pitch[i]), float(inst.roll[i]))
        R = pose.R
        t = 0.5 * (p[:, 2 * i] - R @ inst.nu[i, 0] + p[:, 2 * i + 1] - R @ inst.nu[i, 1])
        poses.append(Pose(yaw, t, pose.pitch, pose.roll))
    return poses


def _pairs(graph, n, mode):
    if mode == "neighbors":
        return [list(nb) for nb in graph.neighbors]
    if mode == "all":
        return [[j for j in range(n) if j != i] for i in range(n)]
    raise ValueError(f"unknown rmse mode {mode!r}")


def rmse_body(estimates, truth, graph, mode="neighbors"):
    """Mean over robots of the per-robot RMSE of body-frame relative translations.

    For robot ``i`` and each partner ``j`` the error is
    ``|R^_i^T (t^_j - t^_i) - R_i^T (t_j - t_i)|``; partners are the graph
    neighbours (default) or all other robots (``mode="all"``).
    """
    n = len(estimates)
    partners = _pairs(graph, n, mode)
    per_robot = []
    for i in range(n):
        if not partners[i]:
            raise ValueError(f"robot {i} has no partners for the RMSE")
        Ri_hat, Ri = estimates[i].R, truth[i].R
        errs = []
        for j in partners[i]:
            rel_hat = Ri_hat.T @ (estimates[j].t - estimates[i].t)
            rel = Ri.T @ (truth[j].t - truth[i].t)
            errs.append(np.sum((rel_hat - rel) ** 2))
        per_robot.append(np.sqrt(np.mean(errs)))
    return float(np.mean(per_robot))


def rmse_abs(p, p_true, robots=None):
    """Absolute RMSE of robot locations (sensor midpoints) in the common frame."""
    p = np.asarray(p, dtype=float)
    p_true = np.asarray(p_true, dtype=float)
    mid = 0.5 * (p[:, 0::2] + p[:, 1::2])
    mid_true = 0.5 * (p_true[:, 0::2] + p_true[:, 1::2])
    if robots is not None:
        mid, mid_true = mid[:, robots], mid_true[:, robots]
    return float(np.sqrt(np.mean(np.sum((mid - mid_true) ** 2, axis=0))))


def failure_rate(values, threshold=FAILURE_THRESHOLD):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("failure_rate needs at least one value")
    # NaN (solver failure) counts as a failure
    failed = ~(values <= threshold)
    return float(np.mean(failed))


def rankd_project(X, d):
    """Rank-``d`` factor ``p`` with ``p.T @ p`` the best rank-``d`` PSD approximation of ``X``."""
    w, Q = eig_sym(X)
    top = np.sqrt(np.clip(w[:d], 0.0, None))
    return top[:, None] * Q[:, :d].T
