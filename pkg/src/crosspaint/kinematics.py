"""Serial-chain robot models: description parsing, FK, Jacobians, and IK.

The supported description format is a URDF subset: a single serial chain of
revolute/prismatic/fixed joints, per-link triangle-mesh visuals, plus an
optional ``<gripper>`` extension element declaring finger joints. Trailing
fixed joints are folded into the tool offset (flange -> control point).
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    BranchingChain,
    ConfigLengthMismatch,
    MalformedDescription,
    MissingLimit,
)
from .transforms import RigidTransform, rotation_matrix_about, rotvec_from_matrix

logger = logging.getLogger(__name__)

JOINT_KINDS = ("revolute", "prismatic", "fixed")


@dataclass(frozen=True)
class JointSpec:
    """One joint of the serial chain.

    ``origin`` maps the parent link frame to the joint frame; ``axis`` is the
    motion axis expressed in the joint frame. Limits are radians for revolute
    joints and meters for prismatic ones; fixed joints carry none.
    """

    name: str
    kind: str
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    origin: RigidTransform = field(default_factory=RigidTransform.identity)
    limit_lo: float | None = None
    limit_hi: float | None = None

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise MalformedDescription(f"joint {self.name!r}: unsupported kind {self.kind!r}")
        axis = np.asarray(self.axis, dtype=np.float64)
        if self.kind != "fixed":
            n = np.linalg.norm(axis)
            if n < 1e-9:
                raise MalformedDescription(f"joint {self.name!r}: zero axis")
            if abs(n - 1.0) > 1e-9:
                axis = axis / n
            if self.limit_lo is None or self.limit_hi is None:
                raise MissingLimit(f"joint {self.name!r} has no position limits")
            if self.limit_lo > self.limit_hi:
                raise MalformedDescription(f"joint {self.name!r}: limit_lo > limit_hi")
        object.__setattr__(self, "axis", axis)

    @property
    def is_moving(self) -> bool:
        return self.kind != "fixed"


@dataclass(frozen=True)
class GripperSpec:
    """Finger-joint interpolation ranges for a 2- or 3-jaw gripper."""

    jaw_count: int
    finger_joints: tuple  # of (joint name, closed value, open value)

    def __post_init__(self):
        if self.jaw_count not in (2, 3):
            raise MalformedDescription(f"unsupported jaw count {self.jaw_count}")
        if len(self.finger_joints) != self.jaw_count:
            raise MalformedDescription(
                f"gripper declares {self.jaw_count} jaws but {len(self.finger_joints)} finger joints")
        for name, closed, opened in self.finger_joints:
            if closed == opened:
                raise MalformedDescription(f"finger joint {name!r}: open value equals closed value")


@dataclass(frozen=True)
class MeshRef:
    """Lazy reference to a mesh file attached to a link."""

    path: str
    attachment: RigidTransform = field(default_factory=RigidTransform.identity)
    albedo: tuple | None = None  # (r, g, b) in [0, 1], or None for the palette default


@dataclass
class RobotModel:
    """Serial kinematic chain from base to flange plus tool offset and gripper.

    Links are indexed 0..len(chain): link 0 is the base link, link i+1 is the
    child of chain[i]. ``link_meshes[i]`` lists the meshes rigidly attached to
    link i.
    """

    name: str
    chain: tuple  # of JointSpec, base to flange
    tool_offset: RigidTransform = field(default_factory=RigidTransform.identity)
    gripper: GripperSpec | None = None
    link_meshes: tuple = ()  # tuple of tuples of MeshRef, length len(chain) + 1

    def __post_init__(self):
        if not any(j.is_moving for j in self.chain):
            raise MalformedDescription(f"robot {self.name!r} has no non-fixed joint")
        if not self.link_meshes:
            self.link_meshes = tuple(() for _ in range(len(self.chain) + 1))
        if len(self.link_meshes) != len(self.chain) + 1:
            raise MalformedDescription(
                f"robot {self.name!r}: {len(self.link_meshes)} mesh groups for "
                f"{len(self.chain) + 1} links")

    @property
    def n_joints(self) -> int:
        """Number of non-fixed joints (the length of a JointConfig)."""
        return sum(1 for j in self.chain if j.is_moving)

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.limit_lo for j in self.chain if j.is_moving])
        hi = np.array([j.limit_hi for j in self.chain if j.is_moving])
        return lo, hi

    def mid_range_config(self) -> np.ndarray:
        lo, hi = self.joint_limits()
        return 0.5 * (lo + hi)

    def clamp_config(self, config: np.ndarray) -> np.ndarray:
        lo, hi = self.joint_limits()
        return np.clip(config, lo, hi)

    def reach_upper_bound(self) -> float:
        """Crude workspace radius: sum of link offsets plus prismatic travel."""
        total = float(np.linalg.norm(self.tool_offset.translation))
        for j in self.chain:
            total += float(np.linalg.norm(j.origin.translation))
            if j.kind == "prismatic":
                total += max(abs(j.limit_lo), abs(j.limit_hi))
        return total

    @cached_property
    def _compiled(self) -> "_CompiledChain":
        return _CompiledChain(self)


class _CompiledChain:
    """Array form of the chain for tight FK/IK loops."""

    def __init__(self, model: RobotModel):
        n = len(model.chain)
        self.origin_r = np.empty((n, 3, 3))
        self.origin_p = np.empty((n, 3))
        self.axes = np.empty((n, 3))
        self.kinds = [j.kind for j in model.chain]
        self.moving = [i for i, j in enumerate(model.chain) if j.is_moving]
        for i, j in enumerate(model.chain):
            self.origin_r[i] = j.origin.matrix()
            self.origin_p[i] = j.origin.translation
            self.axes[i] = j.axis
        self.tool_r = model.tool_offset.matrix()
        self.tool_p = model.tool_offset.translation
        self.lo = np.array([model.chain[i].limit_lo for i in self.moving])
        self.hi = np.array([model.chain[i].limit_hi for i in self.moving])


def _fk_arrays(cp: _CompiledChain, q: np.ndarray, base_r: np.ndarray, base_p: np.ndarray):
    """FK in matrix form.

    Returns link rotations/positions (n_links+1 entries including the base
    link), world motion axes and joint-frame positions per moving joint, and
    the end-effector pose.
    """
    n = len(cp.kinds)
    link_r = np.empty((n + 1, 3, 3))
    link_p = np.empty((n + 1, 3))
    link_r[0] = base_r
    link_p[0] = base_p
    n_m = len(cp.moving)
    axes_w = np.empty((n_m, 3))
    pj_w = np.empty((n_m, 3))
    r, p = base_r, base_p
    m = 0
    for i, kind in enumerate(cp.kinds):
        rj = r @ cp.origin_r[i]
        pj = p + r @ cp.origin_p[i]
        if kind == "revolute":
            axes_w[m] = rj @ cp.axes[i]
            pj_w[m] = pj
            r = rj @ rotation_matrix_about(cp.axes[i], q[m])
            p = pj
            m += 1
        elif kind == "prismatic":
            aw = rj @ cp.axes[i]
            axes_w[m] = aw
            pj_w[m] = pj
            r = rj
            p = pj + aw * q[m]
            m += 1
        else:
            r, p = rj, pj
        link_r[i + 1] = r
        link_p[i + 1] = p
    ee_r = r @ cp.tool_r
    ee_p = p + r @ cp.tool_p
    return link_r, link_p, axes_w, pj_w, ee_r, ee_p


def _jacobian_arrays(cp: _CompiledChain, axes_w, pj_w, ee_p) -> np.ndarray:
    n_m = len(cp.moving)
    jac = np.zeros((6, n_m))
    for m, i in enumerate(cp.moving):
        a = axes_w[m]
        if cp.kinds[i] == "revolute":
            jac[:3, m] = np.cross(a, ee_p - pj_w[m])
            jac[3:, m] = a
        else:
            jac[:3, m] = a
    return jac


def _check_config(model: RobotModel, config) -> np.ndarray:
    q = np.asarray(config, dtype=np.float64)
    if q.shape != (model.n_joints,):
        raise ConfigLengthMismatch(
            f"config has shape {q.shape}, robot {model.name!r} expects ({model.n_joints},)")
    return q


def forward_kinematics(model: RobotModel, config, base: RigidTransform | None = None):
    """World transforms of every link plus the end-effector pose.

    The end effector is base * chain(config) * tool_offset.
    """
    q = _check_config(model, config)
    if base is None:
        base = RigidTransform.identity()
    cp = model._compiled
    link_r, link_p, _, _, ee_r, ee_p = _fk_arrays(cp, q, base.matrix(), base.translation)
    links = [RigidTransform.from_matrix(link_r[i], link_p[i]) for i in range(len(link_r))]
    return links, RigidTransform.from_matrix(ee_r, ee_p)


def jacobian(model: RobotModel, config, base: RigidTransform | None = None) -> np.ndarray:
    """Geometric Jacobian, world frame: rows 0-2 linear, rows 3-5 angular."""
    q = _check_config(model, config)
    if base is None:
        base = RigidTransform.identity()
    cp = model._compiled
    _, _, axes_w, pj_w, _, ee_p = _fk_arrays(cp, q, base.matrix(), base.translation)
    return _jacobian_arrays(cp, axes_w, pj_w, ee_p)


@dataclass(frozen=True)
class IkParams:
    """Damped-least-squares solver settings.

    ``max_iters`` bounds one descent; on failure the solver restarts from up
    to ``restarts`` deterministic lattice seeds inside the joint limits. A
    descent breaks early once the error has stalled for ``stall_window``
    iterations.
    """

    damping: float = 0.05
    max_iters: int = 200
    pos_tol: float = 5e-4
    rot_tol: float = float(np.deg2rad(0.2))
    max_step: float = 0.5
    restarts: int = 10
    stall_window: int = 12

    def __post_init__(self):
        if self.damping <= 0 or self.max_iters < 1 or self.pos_tol <= 0 or self.rot_tol <= 0:
            raise ValueError("damping and tolerances must be positive, max_iters >= 1")


@dataclass(frozen=True)
class IkResult:
    config: np.ndarray
    position_error_m: float
    orientation_error_rad: float
    converged: bool
    iterations: int = 0


# Kronecker lattice strides (sqrt of primes mod 1): equidistributed restart
# seeds without any RNG state.
_LATTICE = np.sqrt(np.array([2.0, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37,
                             41, 43, 47, 53, 59, 61, 67, 71, 73, 79])) % 1.0


def _restart_seed(k: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    frac = (0.5 + (k + 1) * _LATTICE[:len(lo)]) % 1.0
    return lo + frac * (hi - lo)


def _descend(cp, t_r, t_p, q0, base_r, base_p, params):
    lam2 = params.damping * params.damping
    eye6 = np.eye(6) * lam2
    q = q0.copy()
    best_err = np.inf
    best = (q0, np.inf, np.inf)
    since_improve = 0
    it = 0
    for it in range(params.max_iters + 1):
        _, _, axes_w, pj_w, ee_r, ee_p = _fk_arrays(cp, q, base_r, base_p)
        ep = t_p - ee_p
        er = rotvec_from_matrix(t_r @ ee_r.T)
        pn = float(np.linalg.norm(ep))
        rn = float(np.linalg.norm(er))
        err = pn + rn
        if err < best_err - 1e-9:
            since_improve = 0
        else:
            since_improve += 1
        if err < best_err:
            best_err = err
            best = (q.copy(), pn, rn)
        if pn < params.pos_tol and rn < params.rot_tol:
            return q, pn, rn, True, it
        if it == params.max_iters or since_improve >= params.stall_window:
            break
        jac = _jacobian_arrays(cp, axes_w, pj_w, ee_p)
        e = np.concatenate([ep, er])
        dq = jac.T @ np.linalg.solve(jac @ jac.T + eye6, e)
        step = float(np.max(np.abs(dq)))
        if step > params.max_step:
            dq *= params.max_step / step
        q = np.clip(q + dq, cp.lo, cp.hi)
    return best[0], best[1], best[2], False, it


def solve_ik(model: RobotModel, target: RigidTransform, seed,
             base: RigidTransform | None = None,
             params: IkParams | None = None) -> IkResult:
    """Track a Cartesian pose with damped least squares.

    Iterates dq = J^T (J J^T + lambda^2 I)^-1 e with joint values clamped to
    limits after every step. Non-convergence is reported in-band via
    ``converged``; the returned config is then the best one visited. The
    result is a pure function of the inputs.
    """
    q0 = _check_config(model, seed)
    if base is None:
        base = RigidTransform.identity()
    if params is None:
        params = IkParams()
    cp = model._compiled
    base_r, base_p = base.matrix(), base.translation
    t_r, t_p = target.matrix(), target.translation
    q0 = np.clip(q0, cp.lo, cp.hi)

    total_iters = 0
    best = None
    for k in range(params.restarts + 1):
        start = q0 if k == 0 else _restart_seed(k - 1, cp.lo, cp.hi)
        q, pn, rn, converged, used = _descend(cp, t_r, t_p, start, base_r, base_p, params)
        total_iters += used
        if converged:
            return IkResult(q, pn, rn, True, total_iters)
        if best is None or pn + rn < best[1] + best[2]:
            best = (q, pn, rn)
    return IkResult(best[0], best[1], best[2], False, total_iters)


# ----------------------------------------------------------------------------
# Description parsing
# ----------------------------------------------------------------------------


def _parse_origin(elem) -> RigidTransform:
    if elem is None:
        return RigidTransform.identity()
    xyz = [float(v) for v in elem.get("xyz", "0 0 0").split()]
    rpy = [float(v) for v in elem.get("rpy", "0 0 0").split()]
    if len(xyz) != 3 or len(rpy) != 3:
        raise MalformedDescription("origin xyz/rpy must have three values")
    return RigidTransform.from_rpy(rpy[0], rpy[1], rpy[2], np.array(xyz))


def _parse_visuals(link_elem, mesh_root: Path | None):
    refs = []
    for visual in link_elem.findall("visual"):
        geom = visual.find("geometry")
        if geom is None:
            raise MalformedDescription(
                f"link {link_elem.get('name')!r}: visual without geometry")
        mesh = geom.find("mesh")
        if mesh is None or mesh.get("filename") is None:
            raise MalformedDescription(
                f"link {link_elem.get('name')!r}: only mesh geometry is supported")
        path = mesh.get("filename")
        if mesh_root is not None and not Path(path).is_absolute():
            path = str(mesh_root / path)
        albedo = None
        material = visual.find("material")
        if material is not None:
            color = material.find("color")
            if color is not None and color.get("rgba"):
                rgba = [float(v) for v in color.get("rgba").split()]
                albedo = tuple(rgba[:3])
        refs.append(MeshRef(path, _parse_origin(visual.find("origin")), albedo))
    return refs


def _parse_gripper(elem) -> GripperSpec:
    try:
        jaws = int(elem.get("jaws", "2"))
    except ValueError as exc:
        raise MalformedDescription(f"bad gripper jaws attribute: {exc}") from exc
    fingers = []
    for finger in elem.findall("finger"):
        name = finger.get("joint")
        if name is None:
            raise MalformedDescription("gripper finger without a joint name")
        try:
            closed = float(finger.get("closed"))
            opened = float(finger.get("open"))
        except (TypeError, ValueError) as exc:
            raise MalformedDescription(f"finger {name!r}: bad closed/open values") from exc
        fingers.append((name, closed, opened))
    return GripperSpec(jaws, tuple(fingers))


def parse_robot_description(text: str, mesh_root: str | Path | None = None) -> RobotModel:
    """Parse a robot description document (URDF subset) into a RobotModel.

    Mesh file paths are recorded, not loaded; relative paths are resolved
    against ``mesh_root`` when given. Trailing fixed joints fold into the
    tool offset and their meshes re-attach to the flange link.
    """
    mesh_root = Path(mesh_root) if mesh_root is not None else None
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedDescription(f"not well-formed XML: {exc}") from exc
    if root.tag != "robot":
        raise MalformedDescription(f"root element is {root.tag!r}, expected 'robot'")
    name = root.get("name", "robot")

    links = {}
    for link in root.findall("link"):
        link_name = link.get("name")
        if link_name is None:
            raise MalformedDescription("link without a name")
        if link_name in links:
            raise MalformedDescription(f"duplicate link {link_name!r}")
        links[link_name] = link

    joints = []
    children_of = {}
    parent_of_child = {}
    for joint in root.findall("joint"):
        jname = joint.get("name")
        kind = joint.get("type")
        if jname is None or kind is None:
            raise MalformedDescription("joint without name or type")
        if kind not in JOINT_KINDS:
            raise MalformedDescription(
                f"joint {jname!r}: type {kind!r} not in supported set {JOINT_KINDS}")
        parent_el = joint.find("parent")
        child_el = joint.find("child")
        if parent_el is None or child_el is None:
            raise MalformedDescription(f"joint {jname!r}: missing parent or child")
        parent, child = parent_el.get("link"), child_el.get("link")
        if parent not in links or child not in links:
            raise MalformedDescription(f"joint {jname!r}: references undeclared link")
        if child in parent_of_child:
            raise MalformedDescription(f"link {child!r} has multiple parent joints")
        parent_of_child[child] = jname
        children_of.setdefault(parent, []).append(jname)
        if len(children_of[parent]) > 1:
            raise BranchingChain(f"link {parent!r} has multiple child joints")

        axis_el = joint.find("axis")
        axis = np.array([1.0, 0.0, 0.0])
        if axis_el is not None and axis_el.get("xyz"):
            axis = np.array([float(v) for v in axis_el.get("xyz").split()])
        limit_el = joint.find("limit")
        lo = hi = None
        if limit_el is not None:
            if limit_el.get("lower") is not None:
                lo = float(limit_el.get("lower"))
            if limit_el.get("upper") is not None:
                hi = float(limit_el.get("upper"))
        if kind == "fixed":
            lo = hi = None
        joints.append({
            "name": jname, "kind": kind, "parent": parent, "child": child,
            "axis": axis, "origin": _parse_origin(joint.find("origin")),
            "lo": lo, "hi": hi,
        })

    if not joints:
        raise MalformedDescription("description declares no joints")

    by_parent = {j["parent"]: j for j in joints}
    roots = [ln for ln in links if ln not in parent_of_child]
    if len(roots) != 1:
        raise MalformedDescription(f"expected exactly one root link, found {sorted(roots)}")

    ordered = []
    cursor = roots[0]
    while cursor in by_parent:
        j = by_parent[cursor]
        ordered.append(j)
        cursor = j["child"]
    if len(ordered) != len(joints):
        raise MalformedDescription("joints do not form a single connected chain")

    # fold trailing fixed joints into the tool offset
    n_arm = len(ordered)
    while n_arm > 0 and ordered[n_arm - 1]["kind"] == "fixed":
        n_arm -= 1
    if n_arm == 0:
        raise MalformedDescription(f"robot {name!r} has no non-fixed joint")
    tool_offset = RigidTransform.identity()
    for j in ordered[n_arm:]:
        tool_offset = tool_offset @ j["origin"]

    chain = tuple(
        JointSpec(j["name"], j["kind"], j["axis"], j["origin"], j["lo"], j["hi"])
        for j in ordered[:n_arm]
    )

    # link i+1 is the child of chain joint i; link 0 is the root
    link_names = [roots[0]] + [j["child"] for j in ordered[:n_arm]]
    mesh_groups = [list(_parse_visuals(links[ln], mesh_root)) for ln in link_names]
    # meshes of folded links attach to the flange with the folded-in offset
    partial = RigidTransform.identity()
    for j in ordered[n_arm:]:
        partial = partial @ j["origin"]
        for ref in _parse_visuals(links[j["child"]], mesh_root):
            mesh_groups[-1].append(
                MeshRef(ref.path, partial @ ref.attachment, ref.albedo))

    gripper = None
    gripper_el = root.find("gripper")
    if gripper_el is not None:
        gripper = _parse_gripper(gripper_el)

    return RobotModel(
        name=name,
        chain=chain,
        tool_offset=tool_offset,
        gripper=gripper,
        link_meshes=tuple(tuple(g) for g in mesh_groups),
    )


def load_robot(path: str | Path) -> RobotModel:
    """Read a description file; mesh paths resolve against its directory."""
    path = Path(path)
    return parse_robot_description(path.read_text(), mesh_root=path.parent)
