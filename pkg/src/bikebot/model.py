"""Physical parameters, configuration space and kinematics of the platform+arm chain.

World frame: x along the wheel track (through both wheel/ground contact
points), z up, origin at the rear contact point.  The platform rolls
about the contact line; positive roll leans the body toward +y.  The
manipulator base frame F_0 is attached to the platform by a fixed mount
transform, and link frames follow the classic DH convention
``R = Rz(theta) Rx(alpha)``, ``p = [a cos(theta), a sin(theta), d]``.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .transforms import euler_zyx_to_matrix, homogeneous, is_rotation, matrix_to_euler_zyx, rot_x
from .units import DEG, deg, rad_to_deg, wrap_angle

ROLL_AXIS = np.array([-1.0, 0.0, 0.0])  # positive roll leans toward +y


@dataclass(frozen=True)
class BikebotParams:
    """Platform parameters (pairs with the hardware parameter table)."""

    m_b: float = 46.9        # mass, kg
    I_b: float = 3.2         # roll inertia about the mass-center roll axis, kg m^2
    h_G: float = 0.53        # mass-center height, m
    l: float = 1.2           # wheelbase, m
    epsilon: float = 20.0 * DEG  # caster angle, rad
    R: float = 0.3           # wheel radius, m
    g: float = 9.8           # gravity, m/s^2

    def __post_init__(self):
        for name in ("m_b", "I_b", "h_G", "l", "epsilon", "R", "g"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"BikebotParams.{name} must be strictly positive")
        if not 0.0 < self.epsilon < np.pi / 2:
            raise ValueError("caster angle must lie in (0, pi/2)")


@dataclass(frozen=True)
class LinkParams:
    """One manipulator link: DH row plus mass properties.

    ``com`` is the link mass-center position in the link's own frame; if
    omitted it defaults to the geometric midpoint of the a/d offset
    (vendor mass-center data is not reproduced in the parameter table).
    """

    alpha: float
    a: float
    d: float
    theta_offset: float = 0.0
    m: float = 1.0
    com: np.ndarray | None = None
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        if self.m <= 0.0:
            raise ValueError("link mass must be strictly positive")
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape == (3,):
            inertia = np.diag(inertia)
        if inertia.shape != (3, 3):
            raise ValueError("inertia must be a 3-vector of diagonal terms or a 3x3 matrix")
        if not np.allclose(inertia, inertia.T, atol=1e-12):
            raise ValueError("inertia matrix must be symmetric")
        if np.any(np.linalg.eigvalsh(inertia) < -1e-12):
            raise ValueError("inertia matrix must be positive semidefinite")
        object.__setattr__(self, "inertia", inertia)
        if self.com is None:
            # midpoint between the two frame origins, expressed in this link's frame
            sa, ca = np.sin(self.alpha), np.cos(self.alpha)
            com = -0.5 * np.array([self.a, self.d * sa, self.d * ca])
        else:
            com = np.asarray(self.com, dtype=float).reshape(3)
        object.__setattr__(self, "com", com)


def _default_mount(bike: BikebotParams) -> np.ndarray:
    """Arm base directly above the platform mass center, 0.1 m higher."""
    return homogeneous(np.eye(3), [bike.l / 2.0, 0.0, bike.h_G + 0.1])


@dataclass(frozen=True)
class RobotModel:
    """Platform + n-link manipulator, immutable after construction."""

    bike: BikebotParams
    links: tuple
    mount: np.ndarray = None
    roll_limit: float = 45.0 * DEG
    joint_lower: np.ndarray = None
    joint_upper: np.ndarray = None
    delta_h_fn: object = None  # optional callable (delta, phi_b) -> steering-induced height change of G

    def __post_init__(self):
        links = tuple(self.links)
        if len(links) < 1:
            raise ValueError("model needs at least one link")
        object.__setattr__(self, "links", links)
        mount = _default_mount(self.bike) if self.mount is None else np.asarray(self.mount, dtype=float)
        if mount.shape != (4, 4) or not is_rotation(mount[:3, :3], tol=1e-9) \
                or not np.allclose(mount[3], [0, 0, 0, 1]):
            raise ValueError("mount must be a rigid homogeneous transform")
        object.__setattr__(self, "mount", mount)
        n = len(links)
        lower = -np.full(n, np.pi) if self.joint_lower is None else np.asarray(self.joint_lower, float)
        upper = np.full(n, np.pi) if self.joint_upper is None else np.asarray(self.joint_upper, float)
        if lower.shape != (n,) or upper.shape != (n,) or np.any(lower >= upper):
            raise ValueError("joint limits must be length-n with lower < upper")
        object.__setattr__(self, "joint_lower", lower)
        object.__setattr__(self, "joint_upper", upper)

    @property
    def n(self) -> int:
        return len(self.links)

    @property
    def p0(self) -> np.ndarray:
        """Arm base point S in the platform frame."""
        return self.mount[:3, 3].copy()

    @property
    def total_mass(self) -> float:
        return self.bike.m_b + sum(link.m for link in self.links)

    @property
    def q_lower(self) -> np.ndarray:
        return np.concatenate([[-self.roll_limit], self.joint_lower])

    @property
    def q_upper(self) -> np.ndarray:
        return np.concatenate([[self.roll_limit], self.joint_upper])

    def with_massless_arm(self) -> "RobotModel":
        """Arm-removed approximation: negligible (but solvable) link masses."""
        links = tuple(replace(link, m=1e-6, inertia=1e-9 * np.eye(3), com=link.com)
                      for link in self.links)
        return replace(self, links=links)


@dataclass(frozen=True)
class Configuration:
    """Platform roll angle plus manipulator joint angles."""

    phi_b: float
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(-1))

    @property
    def q(self) -> np.ndarray:
        return np.concatenate([[self.phi_b], self.theta])

    @classmethod
    def from_q(cls, q) -> "Configuration":
        q = np.asarray(q, dtype=float).reshape(-1)
        return cls(phi_b=float(q[0]), theta=q[1:])


@dataclass(frozen=True)
class Pose:
    """End-effector position (m) and Z-Y-X Euler orientation (rad) in the world frame."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "orientation", wrap_angle(np.asarray(self.orientation, dtype=float).reshape(3)))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_vector(cls, xi) -> "Pose":
        xi = np.asarray(xi, dtype=float).reshape(6)
        return cls(position=xi[:3], orientation=xi[3:])

    @classmethod
    def from_transform(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(position=T[:3, 3], orientation=matrix_to_euler_zyx(T[:3, :3]))

    def transform(self) -> np.ndarray:
        return homogeneous(euler_zyx_to_matrix(self.orientation), self.position)


def as_q(q, model: RobotModel | None = None) -> np.ndarray:
    """Accept a Configuration or an array; validate the trailing dimension."""
    if isinstance(q, Configuration):
        q = q.q
    q = np.asarray(q, dtype=float)
    if model is not None and q.shape[-1] != model.n + 1:
        raise ValueError(f"configuration has dimension {q.shape[-1]}, model expects {model.n + 1}")
    return q


def link_transform(link: LinkParams, theta_i) -> np.ndarray:
    """Homogeneous DH transform from frame i to frame i-1 (batched over theta_i)."""
    th = np.asarray(theta_i, dtype=float) + link.theta_offset
    ct, st = np.cos(th), np.sin(th)
    ca, sa = np.cos(link.alpha), np.sin(link.alpha)
    T = np.zeros(th.shape + (4, 4))
    T[..., 0, 0] = ct
    T[..., 0, 1] = -st * ca
    T[..., 0, 2] = st * sa
    T[..., 0, 3] = link.a * ct
    T[..., 1, 0] = st
    T[..., 1, 1] = ct * ca
    T[..., 1, 2] = -ct * sa
    T[..., 1, 3] = link.a * st
    T[..., 2, 1] = sa
    T[..., 2, 2] = ca
    T[..., 2, 3] = link.d
    T[..., 3, 3] = 1.0
    return T


def roll_transform(phi_b) -> np.ndarray:
    """World-from-platform transform: rotation about the contact line."""
    phi = np.asarray(phi_b, dtype=float)
    return homogeneous(rot_x(-phi), np.zeros(phi.shape + (3,)))


@dataclass(frozen=True)
class FrameChain:
    """World transforms of the platform and of frames F_0..F_n, batched."""

    world_from_platform: np.ndarray   # (..., 4, 4)
    world_from_frame: np.ndarray      # (..., n+1, 4, 4), index 0 is F_0

    @property
    def ee(self) -> np.ndarray:
        return self.world_from_frame[..., -1, :, :]

    def joint_axis(self, j: int) -> np.ndarray:
        """World z-axis of F_{j-1}, the axis of revolute joint j (1-based)."""
        return self.world_from_frame[..., j - 1, :3, 2]

    def joint_origin(self, j: int) -> np.ndarray:
        return self.world_from_frame[..., j - 1, :3, 3]


def frame_chain(model: RobotModel, q) -> FrameChain:
    q = as_q(q, model)
    T_plat = roll_transform(q[..., 0])
    frames = np.empty(q.shape[:-1] + (model.n + 1, 4, 4))
    T = T_plat @ model.mount
    frames[..., 0, :, :] = T
    for i, link in enumerate(model.links, start=1):
        T = T @ link_transform(link, q[..., i])
        frames[..., i, :, :] = T
    return FrameChain(world_from_platform=T_plat, world_from_frame=frames)


def ee_pose_vector(model: RobotModel, q) -> np.ndarray:
    """Pose 6-vector(s) of the end-effector frame in the world frame."""
    chain = frame_chain(model, q)
    T = chain.ee
    euler = matrix_to_euler_zyx(T[..., :3, :3])
    return np.concatenate([T[..., :3, 3], euler], axis=-1)


def forward_kinematics(model: RobotModel, q) -> Pose:
    """End-effector pose for a single configuration (use ``frame_chain`` for the full chain)."""
    q = as_q(q, model)
    if q.ndim != 1:
        raise ValueError("forward_kinematics expects a single configuration")
    return Pose.from_transform(frame_chain(model, q).ee)


def body_kinematics(model: RobotModel, q):
    """Mass-center positions, rotations and world-frame body Jacobians.

    Returns ``(coms, rots, Jv, Jw)`` stacked over the n+1 rigid bodies
    (platform first, then each link), each with leading batch dims from
    ``q``.  Column 0 of every Jacobian is the roll-axis contribution,
    column j the contribution of revolute joint j.
    """
    q = as_q(q, model)
    chain = frame_chain(model, q)
    batch = q.shape[:-1]
    n = model.n
    nb = n + 1

    frames = chain.world_from_frame
    T_plat = chain.world_from_platform
    g_body = np.array([model.bike.l / 2.0, 0.0, model.bike.h_G])
    link_coms = np.stack([link.com for link in model.links])  # (n, 3)

    p_plat = np.einsum("...ij,j->...i", T_plat[..., :3, :3], g_body) + T_plat[..., :3, 3]
    p_links = np.einsum("...lij,lj->...li", frames[..., 1:, :3, :3], link_coms) \
        + frames[..., 1:, :3, 3]
    coms = np.concatenate([p_plat[..., None, :], p_links], axis=-2)
    rots = np.concatenate([T_plat[..., None, :3, :3], frames[..., 1:, :3, :3]], axis=-3)

    Jv = np.zeros(batch + (nb, 3, nb))
    Jw = np.zeros(batch + (nb, 3, nb))
    # roll column: rigid rotation of every mass center about the contact line
    Jv[..., :, 1, 0] = coms[..., :, 2]
    Jv[..., :, 2, 0] = -coms[..., :, 1]
    Jw[..., :, :, 0] = ROLL_AXIS

    # joint j (1-based) rotates bodies i >= j about the z-axis of F_{j-1}
    Z = frames[..., :-1, :3, 2]                       # (..., n, 3) joint axes
    O = frames[..., :-1, :3, 3]                       # (..., n, 3) joint origins
    diff = p_links[..., :, None, :] - O[..., None, :, :]      # (..., i, j, 3)
    cr = np.cross(np.broadcast_to(Z[..., None, :, :], diff.shape), diff)
    tri = np.tril(np.ones((n, n)))                    # j <= i mask
    Jv[..., 1:, :, 1:] = np.swapaxes(cr * tri[..., None], -1, -2)
    Jw[..., 1:, :, 1:] = np.swapaxes(
        np.broadcast_to(Z[..., None, :, :], diff.shape) * tri[..., None], -1, -2)
    return coms, rots, Jv, Jw


def link_jacobian(model: RobotModel, q, i: int) -> np.ndarray:
    """Geometric Jacobian of link i's mass center expressed in F_0 (6 x n)."""
    q = as_q(q, model)
    if q.ndim != 1:
        raise ValueError("link_jacobian expects a single configuration")
    if not 1 <= i <= model.n:
        raise IndexError(f"link index {i} out of range 1..{model.n}")
    # chain of frames relative to F_0
    T = np.eye(4)
    frames = [T]
    for k, link in enumerate(model.links[:i], start=1):
        T = T @ link_transform(link, q[k])
        frames.append(T)
    p_c = frames[i][:3, :3] @ model.links[i - 1].com + frames[i][:3, 3]
    J = np.zeros((6, model.n))
    for j in range(1, i + 1):
        z = frames[j - 1][:3, 2]
        o = frames[j - 1][:3, 3]
        J[:3, j - 1] = np.cross(z, p_c - o)
        J[3:, j - 1] = z
    return J


def system_jacobian(model: RobotModel, q) -> np.ndarray:
    """World-frame geometric Jacobian of the end-effector frame, 6 x (n+1)."""
    q = as_q(q, model)
    chain = frame_chain(model, q)
    p_e = chain.ee[..., :3, 3]
    batch = q.shape[:-1]
    J = np.zeros(batch + (6, model.n + 1))
    J[..., 0, 0] = 0.0
    J[..., 1, 0] = p_e[..., 2]
    J[..., 2, 0] = -p_e[..., 1]
    J[..., 3:, 0] = ROLL_AXIS
    for j in range(1, model.n + 1):
        z = chain.joint_axis(j)
        o = chain.joint_origin(j)
        J[..., :3, j] = np.cross(z, p_e - o)
        J[..., 3:, j] = z
    return J


# ---------------------------------------------------------------------------
# Default model (hardware parameter tables) and the robot description file.

_TABLE_LINKS_DEG = [
    # alpha_deg, a_m, d_m, mass_kg, inertia diag [Ixx, Iyy, Izz]
    (90.0, 0.0, 0.276, 1.0, (0.0022, 0.0006, 0.0023)),
    (180.0, 0.41, 0.0, 1.5, (0.0041, 0.0255, 0.0217)),
    (90.0, 0.0, -0.01, 0.8, (0.0029, 0.0027, 0.0004)),
    (60.0, 0.0, -0.25, 0.3, (0.7085, 0.7405, 0.1782)),
    (60.0, 0.0, -0.009, 0.3, (0.8275, 0.8520, 0.1708)),
    (180.0, 0.0, 0.203, 0.6, (0.0048, 0.0048, 0.0002)),
]


def default_model() -> RobotModel:
    """Bikebot + 6-link arm with the published parameter values."""
    links = tuple(
        LinkParams(alpha=a_deg * DEG, a=a, d=d, m=m, inertia=np.diag(inert))
        for a_deg, a, d, m, inert in _TABLE_LINKS_DEG
    )
    return RobotModel(bike=BikebotParams(), links=links)


_BIKE_KEYS = {
    "mass_kg": "m_b",
    "roll_inertia_kgm2": "I_b",
    "com_height_m": "h_G",
    "wheelbase_m": "l",
    "caster_angle_deg": "epsilon",
    "wheel_radius_m": "R",
    "gravity_mps2": "g",
}
_LINK_KEYS = {"alpha_deg", "a_m", "d_m", "theta_offset_deg", "mass_kg", "com_m",
              "inertia_diag_kgm2", "inertia_kgm2"}
_TOP_KEYS = {"bikebot", "mount", "links", "joint_limits_deg", "roll_limit_deg"}


class RobotDescriptionError(ValueError):
    """Malformed robot description file."""


def _reject_unknown(d: dict, allowed, where: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise RobotDescriptionError(f"{where}: unknown keys {sorted(unknown)}")


def model_from_dict(data: dict) -> RobotModel:
    """Build a model from the robot description schema (degrees / meters / kg)."""
    if not isinstance(data, dict):
        raise RobotDescriptionError("robot description must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "robot description")
    bike_in = data.get("bikebot", {})
    _reject_unknown(bike_in, _BIKE_KEYS, "bikebot")
    kwargs = {}
    for file_key, attr in _BIKE_KEYS.items():
        if file_key in bike_in:
            value = float(bike_in[file_key])
            kwargs[attr] = value * DEG if file_key.endswith("_deg") else value
    bike = BikebotParams(**kwargs)

    if "links" not in data or not data["links"]:
        raise RobotDescriptionError("robot description must list at least one link")
    links = []
    for idx, link_in in enumerate(data["links"], start=1):
        _reject_unknown(link_in, _LINK_KEYS, f"links[{idx}]")
        inertia = link_in.get("inertia_kgm2", link_in.get("inertia_diag_kgm2", np.zeros(3)))
        links.append(LinkParams(
            alpha=float(link_in.get("alpha_deg", 0.0)) * DEG,
            a=float(link_in.get("a_m", 0.0)),
            d=float(link_in.get("d_m", 0.0)),
            theta_offset=float(link_in.get("theta_offset_deg", 0.0)) * DEG,
            m=float(link_in.get("mass_kg", 1.0)),
            com=None if "com_m" not in link_in else np.asarray(link_in["com_m"], float),
            inertia=np.asarray(inertia, dtype=float),
        ))

    mount = None
    if "mount" in data:
        _reject_unknown(data["mount"], {"position_m", "rpy_deg"}, "mount")
        pos = np.asarray(data["mount"].get("position_m", _default_mount(bike)[:3, 3]), float)
        rpy = deg(np.asarray(data["mount"].get("rpy_deg", [0.0, 0.0, 0.0]), float))
        mount = homogeneous(euler_zyx_to_matrix(rpy[::-1]), pos)

    extra = {}
    if "joint_limits_deg" in data:
        lim = data["joint_limits_deg"]
        _reject_unknown(lim, {"lower", "upper"}, "joint_limits_deg")
        extra["joint_lower"] = deg(np.asarray(lim["lower"], float))
        extra["joint_upper"] = deg(np.asarray(lim["upper"], float))
    if "roll_limit_deg" in data:
        extra["roll_limit"] = float(data["roll_limit_deg"]) * DEG

    return RobotModel(bike=bike, links=tuple(links), mount=mount, **extra)


def model_to_dict(model: RobotModel) -> dict:
    """Inverse of :func:`model_from_dict`."""
    mount_rot = matrix_to_euler_zyx(model.mount[:3, :3])
    return {
        "bikebot": {
            "mass_kg": model.bike.m_b,
            "roll_inertia_kgm2": model.bike.I_b,
            "com_height_m": model.bike.h_G,
            "wheelbase_m": model.bike.l,
            "caster_angle_deg": float(rad_to_deg(model.bike.epsilon)),
            "wheel_radius_m": model.bike.R,
            "gravity_mps2": model.bike.g,
        },
        "mount": {
            "position_m": model.mount[:3, 3].tolist(),
            "rpy_deg": rad_to_deg(mount_rot[::-1]).tolist(),
        },
        "links": [
            {
                "alpha_deg": float(rad_to_deg(link.alpha)),
                "a_m": link.a,
                "d_m": link.d,
                "theta_offset_deg": float(rad_to_deg(link.theta_offset)),
                "mass_kg": link.m,
                "com_m": link.com.tolist(),
                "inertia_kgm2": link.inertia.tolist(),
            }
            for link in model.links
        ],
        "joint_limits_deg": {
            "lower": rad_to_deg(model.joint_lower).tolist(),
            "upper": rad_to_deg(model.joint_upper).tolist(),
        },
        "roll_limit_deg": float(rad_to_deg(model.roll_limit)),
    }


def load_robot(path) -> RobotModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_robot(model: RobotModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
