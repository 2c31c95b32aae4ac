"""Problem data model, scenario generation and measurement simulation.

Sensors are addressed by a flat index ``2 * robot + side`` so that column
``k`` of a realization ``p`` (shape ``(d, 2n)``) is the position of sensor
``k``. Rotations follow ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``; the pitch
angle is the rotation about the body y axis and roll the one about x.

Random draws for one scenario all come from ``numpy.random.default_rng(seed)``
in this order: yaw (n), true pitch (n), true roll (n), prior noise on pitch
(n) and roll (n), graph measurement noise (4 per edge, edges sorted), the
anchor seed robot, anchor estimate noise, anchor-other Bernoulli draws, then
anchor-other measurement noise.
"""

from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field, fields, replace
import numpy as np

SIGMA_Q_FLOOR = 1e-6
DEFAULT_NU = 0.35


class ScenarioError(ValueError):
    pass


class Shape(str, enum.Enum):
    CUBE = "CUBE"
    PYRAMID = "PYRAMID"
    HEXAGON = "HEXAGON"
    RECTANGLE = "RECTANGLE"
    CUSTOM = "CUSTOM"


# full-scale lattice extent l and spacing b
FULL_SCALE = {
    Shape.CUBE: (5, 3.0),
    Shape.PYRAMID: (7, 4.0),
    Shape.HEXAGON: (9, 4.5),
    Shape.RECTANGLE: (10, 3.0),
}

# comm_radius / b, calibrated so full-scale lattice degrees approximate the
# reported max/min degrees (see configs/ and README)
DEFAULT_RADIUS_FACTOR = {
    Shape.CUBE: 1.8,
    Shape.PYRAMID: 1.75,
    Shape.HEXAGON: 1.8,
    Shape.RECTANGLE: 1.5,
    Shape.CUSTOM: 1.8,
}


@dataclass(frozen=True, order=True)
class SensorIndex:
    robot: int
    side: int

    def __post_init__(self):
        if self.side not in (0, 1):
            raise ValueError(f"side must be 0 or 1, got {self.side}")
        if self.robot < 0:
            raise ValueError(f"robot must be non-negative, got {self.robot}")

    @property
    def flat(self) -> int:
        return 2 * self.robot + self.side

    @classmethod
    def from_flat(cls, k: int) -> SensorIndex:
        return cls(int(k) // 2, int(k) % 2)


@dataclass(frozen=True)
class BodyOffset:
    nu0: np.ndarray
    nu1: np.ndarray


@dataclass(frozen=True)
class AttitudePrior:
    pitch: float
    roll: float


@dataclass(frozen=True)
class DistanceMeasurement:
    a: SensorIndex
    b: SensorIndex
    q_tilde: float
    sigma_q: float
    d_tilde: float


@dataclass(frozen=True)
class Pose:
    """Robot pose; ``pitch``/``roll`` are ignored when ``d == 2``."""

    yaw: float
    t: np.ndarray
    pitch: float = 0.0
    roll: float = 0.0

    @property
    def d(self) -> int:
        return len(self.t)

    @property
    def R(self) -> np.ndarray:
        return rotation(self.yaw, self.pitch, self.roll, self.d)


def rot_z(psi, d=3):
    c, s = np.cos(psi), np.sin(psi)
    if d == 2:
        return np.array([[c, -s], [s, c]])
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def tilt(pitch, roll):
    """``Ry(pitch) @ Rx(roll)``."""
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Ry @ Rx


def rotation(yaw, pitch=0.0, roll=0.0, d=3):
    if d == 2:
        return rot_z(yaw, 2)
    return rot_z(yaw, 3) @ tilt(pitch, roll)


def dz_value(pitch, roll, dnu_vec):
    """Height difference ``z^0 - z^1`` implied by the tilt for offset ``nu0 - nu1``."""
    row = np.array([-np.sin(pitch), np.cos(pitch) * np.sin(roll), np.cos(pitch) * np.cos(roll)])
    return float(row @ dnu_vec)


def dz_sensitivity(pitch, roll, dnu_vec):
    """``d(dz)/d(pitch) + d(dz)/d(roll)`` at the given angles."""
    d_pitch = np.array([-np.cos(pitch), -np.sin(pitch) * np.sin(roll), -np.sin(pitch) * np.cos(roll)])
    d_roll = np.array([0.0, np.cos(pitch) * np.cos(roll), -np.cos(pitch) * np.sin(roll)])
    return float((d_pitch + d_roll) @ dnu_vec)


class MeasurementGraph:
    """Inter-robot measurement graph with four squared-distance records per edge.

    Measurement ``m`` relates sensors ``a[m]`` and ``b[m]`` (flat indices);
    edge ``e`` owns measurements ``4e .. 4e+3`` in ``(u, v)`` order
    ``(0,0), (0,1), (1,0), (1,1)``.
    """

    def __init__(self, n, edges, q, sigma_q, d_tilde):
        self.n = int(n)
        edges = [tuple(sorted((int(i), int(j)))) for i, j in edges]
        for i, j in edges:
            if i == j:
                raise ScenarioError(f"self-loop on robot {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ScenarioError(f"edge ({i}, {j}) out of range")
        if len(set(edges)) != len(edges):
            raise ScenarioError("duplicate edges")
        self.edges = edges
        self.a, self.b = _edge_sensor_pairs(edges)
        self.q = np.asarray(q, dtype=float)
        self.sigma_q = np.asarray(sigma_q, dtype=float)
        self.d_tilde = np.asarray(d_tilde, dtype=float)
        if not (len(self.q) == len(self.sigma_q) == len(self.d_tilde) == 4 * len(edges)):
            raise ScenarioError("each edge needs exactly four measurements")
        if np.any(self.sigma_q <= 0):
            raise ScenarioError("sigma_q must be positive")
        self.neighbors = [[] for _ in range(n)]
        for i, j in edges:
            self.neighbors[i].append(j)
            self.neighbors[j].append(i)
        for nb in self.neighbors:
            nb.sort()

    @property
    def weights(self):
        return 1.0 / self.sigma_q**2

    @property
    def degrees(self):
        return np.array([len(nb) for nb in self.neighbors])

    def measurements(self):
        for m in range(len(self.q)):
            yield DistanceMeasurement(
                SensorIndex.from_flat(self.a[m]),
                SensorIndex.from_flat(self.b[m]),
                float(self.q[m]),
                float(self.sigma_q[m]),
                float(self.d_tilde[m]),
            )

    def is_connected(self):
        return is_connected(self.n, self.edges)


def _edge_sensor_pairs(edges):
    a, b = [], []
    for i, j in edges:
        for u in (0, 1):
            for v in (0, 1):
                a.append(2 * i + u)
                b.append(2 * j + v)
    return np.array(a, dtype=int), np.array(b, dtype=int)


def is_connected(n, edges):
    if n == 0:
        return True
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


@dataclass
class AnchorSet:
    """Anchor robots, their imperfect sensor estimates and anchor-other measurements.

    ``sensors`` lists anchor sensor flat indices and ``points[:, k]`` is the
    estimate of ``sensors[k]``. Extra measurements ``(a[m], b[m])`` pair an
    anchor sensor ``a[m]`` with a non-anchor sensor ``b[m]``.
    """

    robots: tuple = ()
    sensors: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    a: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma_q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d_tilde: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.robots = tuple(sorted(int(r) for r in self.robots))
        self.sensors = np.asarray(self.sensors, dtype=int)
        self.a = np.asarray(self.a, dtype=int)
        self.b = np.asarray(self.b, dtype=int)
        if len(self.robots) and not np.all(np.isfinite(self.points)):
            raise ScenarioError("anchor estimates must be finite")
        anchor_sensors = set(self.sensors.tolist())
        for a, b in zip(self.a, self.b):
            if a not in anchor_sensors or b in anchor_sensors:
                raise ScenarioError("anchor edges must join an anchor sensor to a non-anchor sensor")

    def __len__(self):
        return len(self.robots)

    def estimate(self, flat):
        k = int(np.flatnonzero(self.sensors == flat)[0])
        return self.points[:, k]

    def measurements(self):
        for m in range(len(self.q)):
            yield DistanceMeasurement(
                SensorIndex.from_flat(self.a[m]),
                SensorIndex.from_flat(self.b[m]),
                float(self.q[m]),
                float(self.sigma_q[m]),
                float(self.d_tilde[m]),
            )


@dataclass
class GroundTruth:
    poses: list
    p: np.ndarray


@dataclass
class ProblemInstance:
    """A localization problem.

    ``nu`` has shape ``(n, 2, d)`` (body-frame sensor offsets), ``pitch`` and
    ``roll`` hold the measured tilt priors (zeros for ``d == 2``).
    """

    d: int
    graph: MeasurementGraph
    nu: np.ndarray
    pitch: np.ndarray
    roll: np.ndarray
    anchors: AnchorSet = field(default_factory=AnchorSet)
    truth: GroundTruth | None = None
    spacing: float = 1.0
    extent: int = 2

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ScenarioError(f"d must be 2 or 3, got {self.d}")
        self.nu = np.asarray(self.nu, dtype=float)
        if self.nu.shape != (self.n, 2, self.d):
            raise ScenarioError(f"nu must have shape {(self.n, 2, self.d)}, got {self.nu.shape}")
        self.pitch = np.asarray(self.pitch, dtype=float)
        self.roll = np.asarray(self.roll, dtype=float)
        diff = self.nu[:, 0, :] - self.nu[:, 1, :]
        self.dnu = np.sum(diff**2, axis=1)
        if np.any(self.dnu <= 0):
            raise ScenarioError("sensor offsets must differ")
        if self.d == 3:
            self.dz = np.array([dz_value(self.pitch[i], self.roll[i], diff[i]) for i in range(self.n)])
            horiz = np.array([tilt(self.pitch[i], self.roll[i]) @ diff[i] for i in range(self.n)])[:, :2]
            if np.any(np.sum(horiz**2, axis=1) <= 1e-9):
                raise ScenarioError("sensor offset has no horizontal component after tilt")
        else:
            self.dz = np.zeros(self.n)

    @property
    def n(self):
        return self.graph.n

    @property
    def offsets(self):
        return [BodyOffset(self.nu[i, 0].copy(), self.nu[i, 1].copy()) for i in range(self.n)]

    @property
    def priors(self):
        if self.d == 2:
            return []
        return [AttitudePrior(float(self.pitch[i]), float(self.roll[i])) for i in range(self.n)]


@dataclass(frozen=True)
class ScenarioSpec:
    shape: Shape = Shape.CUBE
    b: float | None = None
    sigma: float = 0.1
    comm_radius: float | None = None
    rho: float = 0.5
    anchor_count: int = 0
    eta: float = 0.3
    anchor_noise: float = 0.1
    seed: int = 0
    size: int | None = None
    dims: tuple = ()
    tilt_deg: float = 5.0
    prior_noise_deg: float = 0.0
    offset: float = DEFAULT_NU

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(str(self.shape).upper().split(".")[-1]))
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))
        if self.b is not None and self.b <= 0:
            raise ScenarioError("b must be positive")
        if self.sigma < 0:
            raise ScenarioError("sigma must be non-negative")
        if not 0 <= self.eta <= 1:
            raise ScenarioError("eta must lie in [0, 1]")
        if self.rho < 0:
            raise ScenarioError("rho must be non-negative")
        if self.shape == Shape.CUSTOM and len(self.dims) not in (2, 3):
            raise ScenarioError("CUSTOM shape needs 2 or 3 grid dims")

    @property
    def d(self):
        if self.shape == Shape.CUSTOM:
            return len(self.dims)
        return 3 if self.shape in (Shape.CUBE, Shape.PYRAMID) else 2

    @property
    def spacing(self):
        if self.b is not None:
            return float(self.b)
        return FULL_SCALE.get(self.shape, (None, 3.0))[1]

    @property
    def extent(self):
        if self.shape == Shape.CUSTOM:
            return min(self.dims)
        return self.size if self.size is not None else FULL_SCALE[self.shape][0]

    @property
    def radius(self):
        if self.comm_radius is not None:
            return float(self.comm_radius)
        return DEFAULT_RADIUS_FACTOR[self.shape] * self.spacing


def lattice(spec: ScenarioSpec) -> np.ndarray:
    """Ground-truth robot translations, shape ``(d, n)``."""
    b, l = spec.spacing, spec.extent
    if spec.shape == Shape.CUBE:
        pts = _grid((l, l, l))
    elif spec.shape == Shape.RECTANGLE:
        pts = _grid((l, 2 * l))
    elif spec.shape == Shape.CUSTOM:
        pts = _grid(spec.dims)
    elif spec.shape == Shape.PYRAMID:
        pts = _tetrahedron(l)
    elif spec.shape == Shape.HEXAGON:
        pts = _hexagon(l - 1)
    else:  # pragma: no cover
        raise ScenarioError(f"unknown shape {spec.shape}")
    return b * pts


def _grid(dims):
    axes = [np.arange(k, dtype=float) for k in dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh])


def _tetrahedron(layers):
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.5, np.sqrt(3) / 2, 0.0])
    lift = np.array([0.5, np.sqrt(3) / 6, np.sqrt(2.0 / 3.0)])
    pts = []
    for k in range(layers):
        side = layers - k
        for i in range(side):
            for j in range(side - i):
                pts.append(i * e1 + j * e2 + k * lift)
    return np.array(pts).T


def _hexagon(rings):
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.5, np.sqrt(3) / 2])
    pts = []
    for i in range(-rings, rings + 1):
        for j in range(-rings, rings + 1):
            # hex distance on the axial lattice
            if max(abs(i), abs(j), abs(i + j)) <= rings:
                pts.append(i * e1 + j * e2)
    return np.array(pts).T


def radius_edges(points, radius):
    """Robot pairs ``(i, j)``, ``i < j``, whose separation is at most ``radius``."""
    diff = points[:, :, None] - points[:, None, :]
    dist = np.sqrt(np.sum(diff**2, axis=0))
    i, j = np.nonzero(np.triu(dist <= radius * (1 + 1e-12), k=1))
    return list(zip(i.tolist(), j.tolist()))


def poses_to_realization(poses, nu) -> np.ndarray:
    """Sensor coordinates ``p[:, 2i+u] = R_i nu_i^u + t_i``.

    ``nu`` is either an ``(n, 2, d)`` array or a list of :class:`BodyOffset`.
    """
    nu = _as_nu(nu)
    n, _, d = nu.shape
    p = np.empty((d, 2 * n))
    for i, pose in enumerate(poses):
        R = pose.R
        for u in (0, 1):
            p[:, 2 * i + u] = R @ nu[i, u] + np.asarray(pose.t, dtype=float)
    return p


def _as_nu(nu):
    if isinstance(nu, np.ndarray):
        return nu
    return np.array([[o.nu0, o.nu1] for o in nu], dtype=float)


def default_offsets(n, d, offset=DEFAULT_NU):
    nu = np.zeros((n, 2, d))
    nu[:, 0, 1] = offset
    nu[:, 1, 1] = -offset
    return nu


def simulate_measurements(true_p, sigma, pairs, rng=None):
    """Noisy squared-distance measurements for sensor pairs.

    ``d~ = |p_a - p_b| + eps`` with ``eps ~ N(0, sigma^2)``, ``q~ = d~^2 - sigma^2``
    and ``sigma_q = sqrt((2 sigma d~)^2 + 2 sigma^4)`` floored at
    :data:`SIGMA_Q_FLOOR`. ``pairs`` holds ``(a, b)`` as flat indices or
    :class:`SensorIndex`. Noise is drawn in one call, in pair order.
    """
    rng = np.random.default_rng(rng)
    pairs = [(_flat(a), _flat(b)) for a, b in pairs]
    eps = _noise_draw(rng, sigma, len(pairs))
    out = []
    for (a, b), e in zip(pairs, eps):
        d_tilde = float(np.linalg.norm(true_p[:, a] - true_p[:, b]) + e)
        q, sq = measurement_stats(d_tilde, sigma)
        out.append(DistanceMeasurement(SensorIndex.from_flat(a), SensorIndex.from_flat(b), q, sq, d_tilde))
    return out


def measurement_stats(d_tilde, sigma):
    q = d_tilde**2 - sigma**2
    sq = np.sqrt((2 * sigma * d_tilde) ** 2 + 2 * sigma**4)
    return float(q), float(max(sq, SIGMA_Q_FLOOR))


def _flat(x):
    return x.flat if isinstance(x, SensorIndex) else int(x)


def _noise_draw(rng, sigma, size):
    # consume the stream identically for sigma == 0
    return rng.normal(0.0, 1.0, size=size) * sigma


def generate_scenario(spec: ScenarioSpec) -> ProblemInstance:
    """Build a ground-truth lattice scenario with simulated measurements and anchors."""
    rng = np.random.default_rng(spec.seed)
    d = spec.d
    t = lattice(spec)
    n = t.shape[1]
    edges = radius_edges(t, spec.radius)
    if not is_connected(n, edges):
        raise ScenarioError(
            f"measurement graph is disconnected for comm_radius={spec.radius:g}; increase it"
        )

    yaw = rng.uniform(0.0, 2 * np.pi, size=n)
    tilt_max = np.deg2rad(spec.tilt_deg)
    if d == 3:
        pitch = rng.uniform(-tilt_max, tilt_max, size=n)
        roll = rng.uniform(-tilt_max, tilt_max, size=n)
        prior_noise = np.deg2rad(spec.prior_noise_deg) * rng.normal(size=(2, n))
    else:
        pitch = roll = np.zeros(n)
        prior_noise = np.zeros((2, n))
    poses = [Pose(float(yaw[i]), t[:, i].copy(), float(pitch[i]), float(roll[i])) for i in range(n)]
    nu = default_offsets(n, d, spec.offset)
    p = poses_to_realization(poses, nu)

    graph = _simulate_graph(n, edges, p, spec.sigma, rng)
    anchors = _select_anchors(spec, t, p, edges, rng)
    return ProblemInstance(
        d=d,
        graph=graph,
        nu=nu,
        pitch=pitch + prior_noise[0],
        roll=roll + prior_noise[1],
        anchors=anchors,
        truth=GroundTruth(poses, p),
        spacing=spec.spacing,
        extent=spec.extent,
    )


def _simulate_graph(n, edges, p, sigma, rng):
    a, b = _edge_sensor_pairs(sorted(edges))
    eps = _noise_draw(rng, sigma, len(a))
    d_tilde = np.linalg.norm(p[:, a] - p[:, b], axis=0) + eps
    stats = np.array([measurement_stats(dt, sigma) for dt in d_tilde]).reshape(-1, 2)
    return MeasurementGraph(n, sorted(edges), stats[:, 0], stats[:, 1], d_tilde)


def _select_anchors(spec, t, p, edges, rng):
    count = int(spec.anchor_count)
    n = t.shape[1]
    if count <= 0:
        return AnchorSet(points=np.zeros((t.shape[0], 0)))
    if count > n:
        raise ScenarioError("more anchors than robots")
    first = int(rng.integers(n))
    dist = np.linalg.norm(t - t[:, [first]], axis=0)
    order = np.lexsort((np.arange(n), dist))
    robots = sorted(order[:count].tolist())
    sensors = np.array([2 * r + u for r in robots for u in (0, 1)], dtype=int)
    points = p[:, sensors] + _noise_draw(rng, spec.anchor_noise, (p.shape[0], len(sensors)))

    adjacent = set(edges)
    anchor_set = set(robots)
    pairs = []
    for s in sensors:
        k = s // 2
        for other in range(2 * n):
            i = other // 2
            if i in anchor_set or tuple(sorted((k, i))) in adjacent:
                continue
            pairs.append((int(s), other))
    keep = rng.random(len(pairs)) < spec.eta
    pairs = [pr for pr, kp in zip(pairs, keep) if kp]
    eps = _noise_draw(rng, spec.sigma, len(pairs))
    a = np.array([pr[0] for pr in pairs], dtype=int)
    b = np.array([pr[1] for pr in pairs], dtype=int)
    d_tilde = np.linalg.norm(p[:, a] - p[:, b], axis=0) + eps if pairs else np.zeros(0)
    stats = np.array([measurement_stats(dt, spec.sigma) for dt in d_tilde]).reshape(-1, 2)
    return AnchorSet(robots, sensors, points, a, b, stats[:, 0], stats[:, 1], d_tilde)


def init_radius(instance, rho):
    return rho * (instance.extent - 1) * instance.spacing


def sample_initialization(instance: ProblemInstance, rho, seed=None) -> np.ndarray:
    """Random initial realization around the ground truth.

    Each robot's translation is drawn uniformly on the sphere (circle for
    ``d == 2``) of radius ``rho * (l - 1) * b`` about its true translation,
    its yaw uniformly in ``[0, 2 pi)``; tilt comes from the priors.
    """
    if instance.truth is None:
        raise ScenarioError("initialization sampling needs ground truth")
    if rho < 0:
        raise ScenarioError("rho must be non-negative")
    rng = np.random.default_rng(seed)
    d, n = instance.d, instance.n
    radius = init_radius(instance, rho)
    dirs = rng.normal(size=(d, n))
    dirs /= np.linalg.norm(dirs, axis=0)
    yaw = rng.uniform(0.0, 2 * np.pi, size=n)
    poses = []
    for i in range(n):
        t = instance.truth.poses[i].t + radius * dirs[:, i]
        poses.append(Pose(float(yaw[i]), t, float(instance.pitch[i]), float(instance.roll[i])))
    return poses_to_realization(poses, instance.nu)


# -- text formats -----------------------------------------------------------

def write_realization(path, p, header=None):
    """One sensor per line: ``robot side x y [z]``."""
    p = np.asarray(p, dtype=float)
    with open(path, "w") as fh:
        if header:
            for line in str(header).splitlines():
                fh.write(f"# {line}\n")
        for k in range(p.shape[1]):
            coords = " ".join(f"{x:.12g}" for x in p[:, k])
            fh.write(f"{k // 2} {k % 2} {coords}\n")


def read_realization(path) -> np.ndarray:
    rows = np.loadtxt(path, comments="#", ndmin=2)
    flat = (2 * rows[:, 0] + rows[:, 1]).astype(int)
    if sorted(flat.tolist()) != list(range(len(flat))):
        raise ValueError(f"{path}: sensors must cover 0..2n-1 exactly once")
    p = np.empty((rows.shape[1] - 2, len(flat)))
    p[:, flat] = rows[:, 2:].T
    return p


_SPEC_TYPES = {f.name: f.type for f in fields(ScenarioSpec)}


def parse_scenario(mapping) -> ScenarioSpec:
    """Build a :class:`ScenarioSpec` from string key/value pairs."""
    kwargs = {}
    for key, raw in mapping.items():
        key = key.strip().lower()
        if key not in _SPEC_TYPES:
            raise ScenarioError(f"unknown scenario key {key!r}")
        raw = str(raw).strip()
        if key == "shape":
            kwargs[key] = Shape(raw.upper())
        elif key == "dims":
            kwargs[key] = tuple(int(x) for x in raw.replace("x", ",").split(",") if x.strip())
        elif key in ("seed", "anchor_count", "size"):
            kwargs[key] = None if raw.lower() == "none" else int(raw)
        else:
            kwargs[key] = None if raw.lower() == "none" else _number(raw)
    return ScenarioSpec(**kwargs)


def _number(raw):
    if "/" in raw:
        num, den = raw.split("/")
        return float(num) / float(den)
    return float(raw)


def load_scenario(path) -> ScenarioSpec:
    """Read the ``[scenario]`` section of an INI file."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ScenarioError(f"cannot read scenario config {path}")
    if "scenario" not in cp:
        raise ScenarioError(f"{path}: missing [scenario] section")
    return parse_scenario(dict(cp["scenario"]))


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    return replace(spec, seed=int(seed))


__all__ = [
    "AnchorSet",
    "AttitudePrior",
    "BodyOffset",
    "DistanceMeasurement",
    "GroundTruth",
    "MeasurementGraph",
    "Pose",
    "ProblemInstance",
    "ScenarioError",
    "ScenarioSpec",
    "SensorIndex",
    "Shape",
    "generate_scenario",
    "init_radius",
    "lattice",
    "load_scenario",
    "poses_to_realization",
    "read_realization",
    "sample_initialization",
    "simulate_measurements",
    "write_realization",
]
