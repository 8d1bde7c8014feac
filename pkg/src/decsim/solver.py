"""Method-of-lines time integration and trajectory export.

Fixed-step explicit stepping only (forward Euler and the classical 4-stage
Runge-Kutta tableau).  State-variable masks are enforced on the initial
state, inside every stage evaluation (they sit at the head of the compiled
schedule), and on the state after each full step, so recorded snapshots
always satisfy them exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .dec import Cochain
from .errors import DivergedError

EULER = "euler"
RK4 = "rk4"


@dataclass
class SimState:
    """Named cochains plus the simulation clock."""

    cochains: dict
    time: float = 0.0

    def copy(self):
        return SimState({k: Cochain(c.form, c.values.copy())
                         for k, c in self.cochains.items()}, self.time)

    def check_finite(self):
        for name, c in self.cochains.items():
            if not np.all(np.isfinite(c.values)):
                raise ValueError(f"state variable {name!r} contains non-finite values")


@dataclass
class SolverConfig:
    method: str = RK4
    dt: float = 1e-3
    t_end: float = 1.0
    record_every: int = 1
    divergence_threshold: float = 1e12

    def __post_init__(self):
        if self.method not in (EULER, RK4):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def record(self, state):
        self.times.append(state.time)
        self.snapshots.append(state.copy())

    def final(self):
        return self.snapshots[-1]


def integrate(program, init, cfg):
    """March the program's tangent field from `init` for cfg.t_end seconds.

    Snapshots are deep copies taken every cfg.record_every steps plus the
    final state.  Any non-finite value or |value| above the divergence
    threshold aborts with DivergedError naming the step and variable.
    """
    names = program.state_names
    missing = [n for n in names if n not in init.cochains]
    if missing:
        raise ValueError(f"initial state is missing variables {missing}")
    tangent_of = dict((s, t) for t, s in program.schedule.tangent_vars)

    state = {n: init.cochains[n].values.astype(np.float64).copy() for n in names}
    for n in names:
        expected = len(program.buffers[n])
        if len(state[n]) != expected:
            raise ValueError(
                f"initial state for {n!r} has {len(state[n])} values, "
                f"program expects {expected}")
    program.apply_state_masks(state)

    forms = {n: init.cochains[n].form for n in names}
    traj = Trajectory()

    def snapshot(t):
        return SimState({n: Cochain(forms[n], state[n].copy()) for n in names}, t)

    def rhs(work, t):
        tang = program.evaluate(work, t=t)
        return {n: tang[tangent_of[n]] for n in names if n in tangent_of}

    def check(step, t):
        for n in names:
            v = state[n]
            bad = ~np.isfinite(v)
            if bad.any():
                raise DivergedError(step, n, float(v[np.argmax(bad)]))
            amax = float(np.max(np.abs(v))) if len(v) else 0.0
            if amax > cfg.divergence_threshold:
                raise DivergedError(step, n, amax)

    check(0, init.time)
    traj.record(snapshot(init.time))

    n_steps = int(round(cfg.t_end / cfg.dt))
    if n_steps == 0 and cfg.t_end > 0:
        n_steps = 1
    dt = cfg.dt

    work = {n: state[n].copy() for n in names}
    for step in range(1, n_steps + 1):
        t = init.time + (step - 1) * dt
        if cfg.method == EULER:
            k1 = rhs(state, t)
            for n in k1:
                state[n] += dt * k1[n]
        else:
            k1 = {n: v.copy() for n, v in rhs(state, t).items()}
            for n in names:
                work[n][:] = state[n]
                if n in k1:
                    work[n] += 0.5 * dt * k1[n]
            k2 = {n: v.copy() for n, v in rhs(work, t + 0.5 * dt).items()}
            for n in names:
                work[n][:] = state[n]
                if n in k2:
                    work[n] += 0.5 * dt * k2[n]
            k3 = {n: v.copy() for n, v in rhs(work, t + 0.5 * dt).items()}
            for n in names:
                work[n][:] = state[n]
                if n in k3:
                    work[n] += dt * k3[n]
            k4 = {n: v.copy() for n, v in rhs(work, t + dt).items()}
            for n in k1:
                state[n] += (dt / 6.0) * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n])
        program.apply_state_masks(state)
        check(step, init.time + step * dt)
        if step % cfg.record_every == 0 or step == n_steps:
            traj.record(snapshot(init.time + step * dt))

    return traj


def total_quantity(state, var, hodge0):
    """Discrete integral of a primal 0-form: sum(star0 @ values)."""
    cochain = state.cochains[var]
    if cochain.form.degree != 0 or cochain.form.dual:
        raise ValueError(f"{var!r} is {cochain.form.name}, need a primal 0-form")
    return float(np.sum(hodge0.matrix @ cochain.values))


def diffusion_cfl_dt(mesh, diffusivity, safety=0.2):
    """Stable explicit step bound safety * h_min^2 / diffusivity."""
    if diffusivity <= 0:
        raise ValueError("diffusivity must be positive")
    h = float(np.min(mesh.edge_lengths()))
    return safety * h * h / diffusivity


# ---------------------------------------------------------------------------
# export

def write_csv(trajectory, path):
    """Long-format CSV: time, var, simplex index, value.

    Floats are written with repr (shortest round-trip), so identical runs
    produce byte-identical files.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time,var,index,value\n")
        for t, snap in zip(trajectory.times, trajectory.snapshots):
            for name in sorted(snap.cochains):
                values = snap.cochains[name].values
                for i, v in enumerate(values):
                    fh.write(f"{t!r},{name},{i},{float(v)!r}\n")


def write_vtk_series(trajectory, mesh, out_dir, basename="snapshot"):
    """One legacy ASCII VTK POLYDATA file per snapshot.

    Primal 0-form variables become POINT_DATA scalar arrays; other form
    types have no pointwise placement and are skipped.
    """
    import os
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for frame, (t, snap) in enumerate(zip(trajectory.times, trajectory.snapshots)):
        path = os.path.join(out_dir, f"{basename}_{frame:04d}.vtk")
        paths.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"{basename} t={t!r}\n")
            fh.write("ASCII\nDATASET POLYDATA\n")
            fh.write(f"POINTS {mesh.n_vertices} double\n")
            for v in mesh.vertices:
                x, y = v[0], v[1]
                z = v[2] if len(v) == 3 else 0.0
                fh.write(f"{x!r} {y!r} {z!r}\n")
            fh.write(f"POLYGONS {mesh.n_triangles} {4 * mesh.n_triangles}\n")
            for tri in mesh.triangles:
                fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
            point_vars = [n for n in sorted(snap.cochains)
                          if snap.cochains[n].form.degree == 0
                          and not snap.cochains[n].form.dual]
            if point_vars:
                fh.write(f"POINT_DATA {mesh.n_vertices}\n")
                for name in point_vars:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    for v in snap.cochains[name].values:
                        fh.write(f"{float(v)!r}\n")
    return paths
