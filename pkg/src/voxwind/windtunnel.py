"""Particle-burst wind tunnel over a solid-column voxel grid.

Bursts of spherical particles enter at the x = 0 plane and fly in +x. The
grid sits centered in the domain's x/y footprint with its base on z = 0.
Collisions reflect particles off voxel faces; four aggregate metrics come
out: total impact drag, mean exit kinetic energy, a normalised collision
count, and the grid's height sum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .voxel import VoxelGrid, heightmap_sum, round_half_away, write_pgm

MPH_TO_MPS = 0.44704

SIMRESULT_CSV_HEADER = "drag_force,kinetic_energy,collision_count,heightmap_sum"

METRIC_NAMES = ("drag_force", "kinetic_energy", "collision_count", "heightmap_sum")


@dataclass
class TunnelConfig:
    """Simulation parameters; defaults are desk-scale stand-ins, not claims."""

    air_speed: float = 10.0           # mph; valid range 10..120
    particle_count: int = 256         # particles per burst
    burst_count: int = 2              # simulation runs per iteration
    base_cycle_count: float = 10.0    # collision-count normaliser
    dt: float = 1.0 / 120.0           # seconds
    max_steps: int = 240              # integration steps per burst
    fluid_density: float = 1.225      # kg/m^3
    particle_mass: float = 0.01       # kg
    particle_radius: float = 0.05     # m
    drag_coefficient: float = 0.47    # sphere
    restitution: float = 0.5          # 0 = plastic, 1 = elastic
    domain_size: tuple = (6.0, 4.0, 4.0)  # meters (x, y, z)
    seed: int = 0

    def __post_init__(self):
        self.domain_size = tuple(float(v) for v in self.domain_size)

    def validate(self, prefix: str = "tunnel") -> None:
        def bad(name, msg):
            raise ConfigError(f"{prefix}.{name}: {msg}")

        if not 10.0 <= self.air_speed <= 120.0:
            bad("air_speed", f"{self.air_speed} outside the valid range [10, 120] mph")
        if self.particle_count < 0:
            bad("particle_count", "must be non-negative")
        if self.burst_count < 1:
            bad("burst_count", "must be at least 1")
        if self.base_cycle_count < 1:
            bad("base_cycle_count", "must be at least 1")
        for name in ("dt", "fluid_density", "particle_mass", "particle_radius",
                     "drag_coefficient"):
            if getattr(self, name) <= 0:
                bad(name, "must be positive")
        if self.max_steps < 1:
            bad("max_steps", "must be at least 1")
        if not 0.0 <= self.restitution <= 1.0:
            bad("restitution", "must lie in [0, 1]")
        if len(self.domain_size) != 3 or any(v <= 0 for v in self.domain_size):
            bad("domain_size", "must be three positive extents (x, y, z)")
        if self.seed < 0:
            bad("seed", "must be non-negative")


@dataclass
class Particle:
    """A single spherical air particle."""

    position: np.ndarray
    velocity: np.ndarray
    alive: bool = True

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)


@dataclass
class CollisionEvent:
    particle: int
    column: tuple
    impact_speed: float
    normal: np.ndarray
    voxel: tuple = (0, 0, 0)
    penetration: float = 0.0


class ParticleBurst:
    """Struct-of-arrays state for one burst of particles."""

    def __init__(self, position: np.ndarray, velocity: np.ndarray):
        self.position = np.asarray(position, dtype=np.float64)
        self.velocity = np.asarray(velocity, dtype=np.float64)
        n = len(self.position)
        self.alive = np.ones(n, dtype=bool)
        self.exit_ke = np.zeros(n, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.position)

    def particle(self, i: int) -> Particle:
        return Particle(self.position[i].copy(), self.velocity[i].copy(),
                        bool(self.alive[i]))


@dataclass
class SimResult:
    """The four aggregate metrics plus the per-column collision heatmap."""

    drag_force: float
    kinetic_energy: float
    collision_count: float
    heightmap_sum: float
    heatmap: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.heatmap = np.asarray(self.heatmap)
        for name in METRIC_NAMES:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def metrics(self) -> dict:
        return {name: float(getattr(self, name)) for name in METRIC_NAMES}


# --- formulas ----------------------------------------------------------------


def mph_to_mps(speed: float):
    """Miles per hour to meters per second (exact factor 0.44704)."""
    return speed * MPH_TO_MPS


def drag_force(rho: float, v: float, c_d: float, area: float):
    """Aerodynamic drag: 0.5 * rho * v^2 * C_d * A."""
    return 0.5 * rho * v * v * c_d * area


def kinetic_energy(mass: float, speed: float):
    """Kinetic energy: 0.5 * m * v^2."""
    return 0.5 * mass * speed * speed


def collision_count_metric(per_particle_counts, b: float, b_c: float) -> float:
    """Total particle-voxel impacts normalised by burst count and base cycles."""
    if b < 1 or b_c < 1:
        raise ValueError("burst count and base cycle count must be at least 1")
    return float(np.sum(np.asarray(per_particle_counts, dtype=np.float64))) / (b * b_c)


# --- geometry ----------------------------------------------------------------


def grid_origin(grid: VoxelGrid, config: TunnelConfig) -> np.ndarray:
    """World position of the grid's (0, 0, 0) corner: centered in x/y, base on z=0."""
    dx, dy, _ = config.domain_size
    ox = 0.5 * (dx - grid.width * grid.voxel_size)
    oy = 0.5 * (dy - grid.length * grid.voxel_size)
    return np.array([ox, oy, 0.0])


def neighborhood_reach(grid: VoxelGrid, radius: float) -> np.ndarray:
    """Per-column max height over the window a sphere of `radius` can touch."""
    k = max(1, int(math.ceil(radius / grid.voxel_size)))
    h = grid.column_heights
    w, l = h.shape
    padded = np.zeros((w + 2 * k, l + 2 * k), dtype=np.int64)
    padded[k:k + w, k:k + l] = h
    out = np.zeros((w, l), dtype=np.int64)
    for sx in range(2 * k + 1):
        for sy in range(2 * k + 1):
            np.maximum(out, padded[sx:sx + w, sy:sy + l], out=out)
    return out


def spawn_burst(config: TunnelConfig, rng: np.random.Generator) -> ParticleBurst:
    """particle_count particles on the x = 0 inlet plane, jittered over the
    cross-section, all moving at the configured air speed in +x."""
    n = config.particle_count
    _, dy, dz = config.domain_size
    pos = np.zeros((n, 3), dtype=np.float64)
    jitter = rng.uniform(0.0, 1.0, size=(n, 2))
    pos[:, 1] = jitter[:, 0] * dy
    pos[:, 2] = jitter[:, 1] * dz
    vel = np.zeros((n, 3), dtype=np.float64)
    vel[:, 0] = mph_to_mps(config.air_speed)
    return ParticleBurst(pos, vel)


def _best_overlap(cx: float, cy: float, cz: float, radius: float, grid: VoxelGrid):
    """Scalar core of the contact query: the minimal (closest-point distance
    squared, x, y, z) tuple over the candidate voxels, or None.

    Only voxels whose axis slabs overlap the sphere are scanned; the
    lexicographic key breaks distance ties toward the lowest index.
    """
    vs = grid.voxel_size
    heights = grid.column_heights
    x_lo = max(int(math.floor((cx - radius) / vs)), 0)
    x_hi = min(int(math.floor((cx + radius) / vs)), grid.width - 1)
    y_lo = max(int(math.floor((cy - radius) / vs)), 0)
    y_hi = min(int(math.floor((cy + radius) / vs)), grid.length - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return None
    z_lo = max(int(math.floor((cz - radius) / vs)), 0)
    z_hi_raw = int(math.floor((cz + radius) / vs))
    best = None
    for ix in range(x_lo, x_hi + 1):
        bx0 = ix * vs
        qx = min(max(cx, bx0), bx0 + vs)
        ddx = (cx - qx) ** 2
        for iy in range(y_lo, y_hi + 1):
            h = int(heights[ix, iy])
            if h == 0:
                continue
            by0 = iy * vs
            qy = min(max(cy, by0), by0 + vs)
            ddy = ddx + (cy - qy) ** 2
            for iz in range(z_lo, min(z_hi_raw, h - 1) + 1):
                bz0 = iz * vs
                qz = min(max(cz, bz0), bz0 + vs)
                d2 = ddy + (cz - qz) ** 2
                key = (d2, ix, iy, iz)
                if best is None or key < best:
                    best = key
    if best is None or best[0] >= radius * radius:
        return None
    return best


def _face_normal(cx: float, cy: float, cz: float, ix: int, iy: int, iz: int,
                 radius: float, vs: float):
    """Axis of minimal penetration for a sphere against voxel (ix, iy, iz).

    Returns (axis, sign, penetration); axis ties break to the lowest index,
    the sign points toward the sphere center.
    """
    dx = cx - (ix + 0.5) * vs
    dy = cy - (iy + 0.5) * vs
    dz = cz - (iz + 0.5) * vs
    half = radius + 0.5 * vs
    pens = (half - abs(dx), half - abs(dy), half - abs(dz))
    axis = min(range(3), key=lambda k: pens[k])
    sign = 1.0 if (dx, dy, dz)[axis] >= 0 else -1.0
    return axis, sign, pens[axis]


def sphere_voxel_contact(particle: Particle, radius: float, grid: VoxelGrid,
                         particle_index: int = 0) -> CollisionEvent | None:
    """Deepest-penetration contact between a sphere and the occupied voxels.

    Positions are grid-local (grid corner at the origin). Candidates are
    ranked by (closest-point distance, x, y, z) so ties break to the lowest
    index; the face normal is the axis of minimal penetration for the winning
    voxel, signed toward the sphere center. Returns None when nothing
    overlaps within `radius`.
    """
    c = np.asarray(particle.position, dtype=np.float64)
    best = _best_overlap(float(c[0]), float(c[1]), float(c[2]), radius, grid)
    if best is None:
        return None
    _, ix, iy, iz = best
    axis, sign, pen = _face_normal(float(c[0]), float(c[1]), float(c[2]),
                                   ix, iy, iz, radius, grid.voxel_size)
    normal = np.zeros(3)
    normal[axis] = sign
    v = np.asarray(particle.velocity, dtype=np.float64)
    return CollisionEvent(
        particle=particle_index,
        column=(ix, iy),
        impact_speed=math.sqrt(float(v @ v)),
        normal=normal,
        voxel=(ix, iy, iz),
        penetration=float(pen),
    )


def step(burst: ParticleBurst, grid: VoxelGrid, config: TunnelConfig,
         heatmap: np.ndarray, origin: np.ndarray | None = None,
         reach: np.ndarray | None = None) -> list:
    """Advance one dt: integrate, resolve voxel contacts, retire exited particles.

    Semi-implicit Euler with no body forces, so the update is a pure drift
    until a contact reflects the velocity about the face normal scaled by the
    restitution. One event at most per particle per step; events and heatmap
    tallies accumulate in particle-index order. Particles leaving the domain
    are marked dead with their exit kinetic energy recorded. Mutates `burst`
    and `heatmap`.
    """
    if config.dt <= 0:
        raise ValueError("dt must be positive")
    if origin is None:
        origin = grid_origin(grid, config)
    if reach is None:
        reach = neighborhood_reach(grid, config.particle_radius)
    idx = np.nonzero(burst.alive)[0]
    if idx.size == 0:
        return []
    r = config.particle_radius
    e = config.restitution
    vs = grid.voxel_size
    ox, oy, oz = float(origin[0]), float(origin[1]), float(origin[2])
    pos = burst.position[idx] + burst.velocity[idx] * config.dt
    lx = pos[:, 0] - ox
    ly = pos[:, 1] - oy
    lz = pos[:, 2] - oz
    colx = np.minimum(np.maximum((lx // vs).astype(np.int64), 0), grid.width - 1)
    coly = np.minimum(np.maximum((ly // vs).astype(np.int64), 0), grid.length - 1)
    near = (
        (lx > -r) & (lx < grid.width * vs + r)
        & (ly > -r) & (ly < grid.length * vs + r)
        & (lz > -r) & (lz < reach[colx, coly] * vs + r)
    )
    events = []
    for j in np.nonzero(near)[0]:
        best = _best_overlap(float(lx[j]), float(ly[j]), float(lz[j]), r, grid)
        if best is None:
            continue
        _, ix, iy, iz = best
        axis, sign, pen = _face_normal(float(lx[j]), float(ly[j]), float(lz[j]),
                                       ix, iy, iz, r, vs)
        i = int(idx[j])
        vx, vy, vz = burst.velocity[i]
        vn = sign * (vx, vy, vz)[axis]
        if vn >= 0.0:
            continue  # already separating; no impulse, no event
        normal = np.zeros(3)
        normal[axis] = sign
        burst.velocity[i, axis] = (vx, vy, vz)[axis] - (1.0 + e) * vn * sign
        pos[j, axis] += sign * pen  # pop out of the face
        heatmap[ix, iy] += 1
        events.append(CollisionEvent(
            particle=i,
            column=(ix, iy),
            impact_speed=math.sqrt(vx * vx + vy * vy + vz * vz),
            normal=normal,
            voxel=(ix, iy, iz),
            penetration=pen,
        ))
    burst.position[idx] = pos
    dx, dy, dz = config.domain_size
    out = (
        (pos[:, 0] < 0.0) | (pos[:, 0] > dx)
        | (pos[:, 1] < 0.0) | (pos[:, 1] > dy)
        | (pos[:, 2] < 0.0) | (pos[:, 2] > dz)
    )
    gone = idx[out]
    if gone.size:
        vel = burst.velocity[gone]
        sp2 = np.einsum("ij,ij->i", vel, vel)
        burst.exit_ke[gone] = 0.5 * config.particle_mass * sp2
        burst.alive[gone] = False
    return events


def run_simulation(grid: VoxelGrid, config: TunnelConfig, workers: int = 1) -> SimResult:
    """Run burst_count bursts against the grid and aggregate the metrics.

    drag_force: per-burst sum of per-impact drag (impact speed, sphere
    cross-section) averaged over bursts. kinetic_energy: mean per-particle
    energy at domain exit or at max_steps. collision_count: total impacts
    over all bursts normalised by burst_count * base_cycle_count.
    Deterministic for a fixed config.seed; bursts draw from spawned
    substreams and reduce in burst order regardless of `workers`.
    """
    config.validate()
    vs = grid.voxel_size
    dx, dy, dz = config.domain_size
    if (grid.width * vs > dx + 1e-9 or grid.length * vs > dy + 1e-9
            or grid.h_max * vs > dz + 1e-9):
        raise ValueError(
            f"grid extent ({grid.width * vs}, {grid.length * vs}, {grid.h_max * vs}) "
            f"does not fit inside domain {config.domain_size}"
        )
    origin = grid_origin(grid, config)
    reach = neighborhood_reach(grid, config.particle_radius)
    area = math.pi * config.particle_radius ** 2
    seeds = np.random.SeedSequence(config.seed).spawn(config.burst_count)

    def run_one(k: int):
        rng = np.random.default_rng(seeds[k])
        burst = spawn_burst(config, rng)
        tallies = np.zeros((grid.width, grid.length), dtype=np.int64)
        drag = 0.0
        for _ in range(config.max_steps):
            if not burst.alive.any():
                break
            for ev in step(burst, grid, config, tallies, origin=origin, reach=reach):
                drag += drag_force(config.fluid_density, ev.impact_speed,
                                   config.drag_coefficient, area)
        live = np.nonzero(burst.alive)[0]
        if live.size:
            vel = burst.velocity[live]
            sp2 = np.einsum("ij,ij->i", vel, vel)
            burst.exit_ke[live] = 0.5 * config.particle_mass * sp2
        return drag, float(burst.exit_ke.sum()), tallies

    b = config.burst_count
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run_one, range(b)))
    else:
        outputs = [run_one(k) for k in range(b)]

    heatmap = np.zeros((grid.width, grid.length), dtype=np.int64)
    drag_total = 0.0
    ke_total = 0.0
    for drag, ke_sum, tallies in outputs:
        drag_total += drag
        ke_total += ke_sum
        heatmap += tallies
    total_particles = config.particle_count * b
    mean_ke = ke_total / total_particles if total_particles else 0.0
    count = collision_count_metric([heatmap.sum()], b, config.base_cycle_count)
    return SimResult(
        drag_force=drag_total / b,
        kinetic_energy=mean_ke,
        collision_count=count,
        heightmap_sum=float(heightmap_sum(grid)),
        heatmap=heatmap,
    )


# --- exports -------------------------------------------------------------------


def simresult_to_csv(result: SimResult) -> str:
    row = ",".join(repr(float(getattr(result, name))) for name in METRIC_NAMES)
    return SIMRESULT_CSV_HEADER + "\n" + row + "\n"


def simresult_from_csv(text: str) -> dict:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2 or lines[0] != SIMRESULT_CSV_HEADER:
        raise ValueError(f"simresult csv: expected header '{SIMRESULT_CSV_HEADER}' and one row")
    cells = lines[1].split(",")
    if len(cells) != len(METRIC_NAMES):
        raise ValueError(f"simresult csv: expected {len(METRIC_NAMES)} values")
    return {name: float(cell) for name, cell in zip(METRIC_NAMES, cells)}


def heatmap_to_csv(tallies: np.ndarray) -> str:
    t = np.asarray(tallies)
    if np.issubdtype(t.dtype, np.integer):
        rows = (",".join(str(int(v)) for v in row) for row in t)
    else:
        rows = (",".join(repr(float(v)) for v in row) for row in t)
    return "\n".join(rows) + "\n"


def heatmap_to_pgm(tallies: np.ndarray) -> bytes:
    """Min-max normalise tallies to 8-bit pixels (uniform maps render black)."""
    t = np.asarray(tallies, dtype=np.float64)
    lo, hi = float(t.min()), float(t.max())
    if hi > lo:
        pix = round_half_away((t - lo) / (hi - lo) * 255.0)
    else:
        pix = np.zeros(t.shape, dtype=np.int64)
    return write_pgm(pix, maxval=255, binary=True)
