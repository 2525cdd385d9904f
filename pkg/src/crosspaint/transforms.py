"""SE(3) rigid transforms stored as unit quaternion + translation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_QUAT_NORM_TOL = 1e-9


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)],
        [2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)],
        [2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)],
    ])


def _matrix_to_quat(m: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the largest diagonal combination for stability.
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return np.array([w, x, y, z])


def rotation_matrix_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    c1 = 1.0 - c
    return np.array([
        [c + x * x * c1, x * y * c1 - z * s, x * z * c1 + y * s],
        [y * x * c1 + z * s, c + y * y * c1, y * z * c1 - x * s],
        [z * x * c1 - y * s, z * y * c1 + x * s, c + z * z * c1],
    ])


def rotvec_from_matrix(m: np.ndarray) -> np.ndarray:
    """Angle-axis vector of a rotation matrix (angle in [0, pi])."""
    cos_th = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_th)
    if theta < 1e-12:
        return np.zeros(3)
    if theta > np.pi - 1e-6:
        # near pi the skew part vanishes; recover the axis from the symmetric part
        a = np.sqrt(np.maximum(np.diag(m) - cos_th, 0.0) / (1.0 - cos_th))
        # fix signs from the off-diagonal terms, anchored on the largest component
        k = int(np.argmax(a))
        if a[k] > 0:
            for i in range(3):
                if i != k and m[k, i] + m[i, k] < 0:
                    a[i] = -a[i]
        return a / np.linalg.norm(a) * theta
    w = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    return w * (theta / (2.0 * np.sin(theta)))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose: unit quaternion (w, x, y, z) plus translation in meters.

    Quaternions are normalized and canonicalized to w >= 0 on construction so
    that equal rotations compare bit-equal.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if q.shape != (4,):
            raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must have shape (3,), got {t.shape}")
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise ValueError("zero quaternion")
        if abs(n - 1.0) > _QUAT_NORM_TOL:
            q = q / n
        if q[0] < 0:
            q = -q
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_matrix(rot: np.ndarray, trans: np.ndarray) -> "RigidTransform":
        return RigidTransform(_matrix_to_quat(np.asarray(rot, dtype=np.float64)),
                              np.asarray(trans, dtype=np.float64))

    @staticmethod
    def from_axis_angle(axis: np.ndarray, angle: float,
                        translation: np.ndarray | None = None) -> "RigidTransform":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        q = np.concatenate([[np.cos(half)], np.sin(half) * axis])
        t = np.zeros(3) if translation is None else translation
        return RigidTransform(q, t)

    @staticmethod
    def from_rpy(roll: float, pitch: float, yaw: float,
                 translation: np.ndarray | None = None) -> "RigidTransform":
        """Fixed-axis XYZ convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
        qx = RigidTransform.from_axis_angle([1, 0, 0], roll)
        qy = RigidTransform.from_axis_angle([0, 1, 0], pitch)
        qz = RigidTransform.from_axis_angle([0, 0, 1], yaw)
        q = _quat_mul(_quat_mul(qz.rotation, qy.rotation), qx.rotation)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        return RigidTransform(q, t)

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix."""
        return _quat_to_matrix(self.rotation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Composition self * other: apply `other` first, then `self`."""
        q = _quat_mul(self.rotation, other.rotation)
        t = self.translation + self.matrix() @ other.translation
        return RigidTransform(q, t)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        q_inv = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        t_inv = -(_quat_to_matrix(q_inv) @ self.translation)
        return RigidTransform(q_inv, t_inv)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many points (N, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix().T + self.translation

    def rotation_angle_to(self, other: "RigidTransform") -> float:
        """Geodesic distance on SO(3) between the two rotations, radians."""
        dot = abs(float(np.dot(self.rotation, other.rotation)))
        return 2.0 * np.arccos(min(dot, 1.0))

    def is_close(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return (np.linalg.norm(self.translation - other.translation) <= tol
                and self.rotation_angle_to(other) <= tol * 10)

    def to_dict(self) -> dict:
        return {"rotation": [float(v) for v in self.rotation],
                "translation": [float(v) for v in self.translation]}

    @staticmethod
    def from_dict(d: dict) -> "RigidTransform":
        return RigidTransform(np.asarray(d["rotation"], dtype=np.float64),
                              np.asarray(d["translation"], dtype=np.float64))

    def __repr__(self):
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"RigidTransform(q=[{q}], t=[{t}])"
