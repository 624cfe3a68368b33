"""SOLVE-ESTIMATE-MARK-REFINE driver and experiment bookkeeping.

A run records one line per level and, when collection is enabled, keeps
the cross-level quantities used to monitor the estimator: efficiency and
reliability ratios between consecutive levels, indicator stability over
surviving elements for selected level pairs, and the deviation between
the residual and projection forms of the indicators at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_load, assemble_stiffness, energy_norm_sq
from .errors import InputError, NumericalError
from .estimator import doerfler_mark, subset_total, two_level_estimate
from .mesh import DomainSpec, Triangulation, build_initial_mesh, refine
from .solver import DEFAULT_TOL, solve_spd

DOF_CAP = 6000

# Level pairs for the indicator-stability diagnostic. The early levels of
# a coarse start are refined almost everywhere, leaving no surviving
# elements to compare on, so the default pairs begin at level 2.
STABILITY_PAIRS = ((2, 4), (3, 5), (4, 6))

CSV_HEADER = "level,dofs,n_elements,energy_sq,estimator,error,n_marked"


@dataclass
class AfemConfig:
    domain: DomainSpec
    s: float
    theta: float = 0.3
    strategy: str = "adaptive"
    max_dofs: int = 3000
    quad_order: int = 7
    solver_tol: float = DEFAULT_TOL
    rhs: str = "auto"          # "disc-exact", "constant:<c>", or "auto"
    dof_cap: int = DOF_CAP

    def validate(self) -> None:
        self.domain.validate()
        if not 0.0 < self.s < 1.0:
            raise InputError("s must lie in (0, 1)")
        if not 0.0 < self.theta <= 1.0:
            raise InputError("theta must lie in (0, 1]")
        if self.strategy not in ("adaptive", "uniform"):
            raise InputError(f"unknown strategy {self.strategy!r}")
        if self.max_dofs < 1:
            raise InputError("max_dofs must be positive")
        if self.max_dofs > self.dof_cap:
            raise InputError(
                f"max_dofs {self.max_dofs} exceeds the configured cap "
                f"{self.dof_cap}"
            )
        if self.quad_order < 1:
            raise InputError("quad_order must be at least 1")
        if not 0.0 < self.solver_tol < 1.0:
            raise InputError("solver_tol must lie in (0, 1)")
        self.rhs_value()

    def resolved_rhs(self) -> str:
        if self.rhs != "auto":
            return self.rhs
        if self.domain.kind == "unit_circle":
            return "disc-exact"
        return "constant:1"

    def rhs_value(self) -> float:
        """Constant right-hand side value for this configuration."""
        rhs = self.resolved_rhs()
        if rhs == "disc-exact":
            return 2.0 ** (2 * self.s) * math.gamma(1.0 + self.s) ** 2
        if rhs.startswith("constant:"):
            try:
                return float(rhs.split(":", 1)[1])
            except ValueError as exc:
                raise InputError(f"bad rhs spec {self.rhs!r}") from exc
        raise InputError(f"bad rhs spec {self.rhs!r}")


@dataclass
class LevelRecord:
    level: int
    dofs: int
    n_elements: int
    energy_sq: float
    estimator: float
    error: float | None
    n_marked: int


@dataclass
class RunResult:
    config: AfemConfig
    records: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    indicator_history: list = field(default_factory=list)
    marked_history: list = field(default_factory=list)
    prols: list = field(default_factory=list)       # prols[l]: mesh l -> l+1
    identity_deviations: list = field(default_factory=list)
    symmetry_deviations: list = field(default_factory=list)
    efficiency_ratios: list = field(default_factory=list)
    reliability_ratios: list = field(default_factory=list)
    stability_triples: list = field(default_factory=list)


def exact_energy_disc(s: float) -> float:
    """Squared energy of the disc solution: 2^{2s} Gamma(1+s)^2 2 pi/(2s+2)."""
    if not 0.0 < s < 1.0:
        raise InputError("s must lie in (0, 1)")
    return 2.0 ** (2 * s) * math.gamma(1.0 + s) ** 2 * 2.0 * math.pi \
        / (2.0 * s + 2.0)


def energy_error(record: LevelRecord, reference_energy_sq: float) -> float:
    """Error in the energy norm from the Pythagoras identity.

    A radicand within 1e-10 of zero on the negative side is clamped;
    anything more negative means the reference energy and the discrete
    energy are inconsistent and is reported as a numerical failure.
    """
    return _energy_gap(reference_energy_sq, record.energy_sq)


def _energy_gap(reference_sq: float, energy_sq: float) -> float:
    gap = reference_sq - energy_sq
    if gap < -1e-10:
        raise NumericalError(
            f"discrete energy exceeds the reference by {-gap:.3e}"
        )
    return math.sqrt(max(gap, 0.0))


def extrapolate_energy(records) -> tuple:
    """Aitken limit of the level energies.

    Returns (limit, uncertainty) where the uncertainty proxy is the last
    increment of the input sequence. Requires at least three levels and a
    monotone energy sequence.
    """
    e = [float(r.energy_sq) for r in records]
    if len(e) < 3:
        raise InputError("need at least three levels to extrapolate")
    diffs = np.diff(e)
    scale = max(abs(v) for v in e)
    if np.any(diffs < -1e-12 * scale) and np.any(diffs > 1e-12 * scale):
        raise NumericalError("energy sequence is not monotone")
    acc = e[-1]
    for k in range(2, len(e)):
        d1 = e[k - 1] - e[k - 2]
        d2 = e[k] - e[k - 1]
        den = d2 - d1
        if den != 0.0:
            acc = e[k] - d2 * d2 / den
        else:
            acc = e[k]
    return acc, abs(e[-1] - e[-2])


def fit_rate(records, window: int = 4) -> float:
    """Least-squares slope of log(error) against log(dofs).

    Uses the last `window` records that carry a positive error.
    """
    pts = [(r.dofs, r.error) for r in records
           if r.error is not None and r.error > 0 and r.dofs > 0]
    pts = pts[-window:]
    if len(pts) < 2:
        raise InputError("need at least two positive-error levels")
    x = np.log([float(p[0]) for p in pts])
    y = np.log([float(p[1]) for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def run(config: AfemConfig, collect: bool = True, dump_dir=None,
        stability_pairs=STABILITY_PAIRS) -> RunResult:
    """Iterate SOLVE-ESTIMATE-MARK-REFINE until the next mesh would
    exceed max_dofs.

    One record is emitted per level, so a max_dofs below the initial dof
    count still produces a single record. With ``collect`` the result
    also keeps per-level meshes, solutions, indicator sets, marked sets,
    prolongations and the cross-level ratio diagnostics.
    """
    config.validate()
    fval = config.rhs_value()
    f = lambda p: np.full(np.asarray(p).shape[0], fval)
    reference = exact_energy_disc(config.s) \
        if (config.domain.kind == "unit_circle"
            and config.resolved_rhs() == "disc-exact") else None

    mesh = build_initial_mesh(config.domain)
    result = RunResult(config)
    level = 0
    prev = None          # (u, indicators, marked, prol) of the last level
    while True:
        A = assemble_stiffness(mesh, config.s, config.quad_order)
        b = assemble_load(mesh, f)
        u = solve_spd(A, b, config.solver_tol)
        energy_sq = energy_norm_sq(A, u)

        est = two_level_estimate(mesh, u, f, config.s, config.quad_order,
                                 config.solver_tol)
        ind = est.indicators
        if config.strategy == "uniform":
            marked = np.arange(mesh.n_elements, dtype=np.int64)
            converged = ind.total_sq == 0.0
        else:
            marked, converged = doerfler_mark(ind, config.theta)

        result.records.append(LevelRecord(
            level=level,
            dofs=mesh.n_dofs,
            n_elements=mesh.n_elements,
            energy_sq=energy_sq,
            estimator=ind.total,
            error=None if reference is None
            else _energy_gap(reference, energy_sq),
            n_marked=int(marked.size),
        ))
        result.identity_deviations.append(est.identity_deviation)
        if collect:
            scale = float(np.abs(A.matrix).max()) if A.n_dofs else 0.0
            dev = float(np.abs(A.matrix - A.matrix.T).max()) / scale \
                if scale > 0.0 else 0.0
            result.symmetry_deviations.append(dev)
            result.meshes.append(mesh)
            result.solutions.append(u)
            result.indicator_history.append(ind)
            result.marked_history.append(marked)
            if prev is not None:
                _consecutive_ratios(result, prev, A, u)
            for l0, m in stability_pairs:
                if m == level and l0 < level:
                    _stability_entry(result, l0, m, A, u)
        if dump_dir is not None:
            _dump_mesh(mesh, dump_dir, level)

        if converged:
            break
        next_mesh, prol = refine(mesh, marked)
        if next_mesh.n_dofs > config.max_dofs:
            break
        if collect:
            result.prols.append(prol)
            prev = (u, ind, marked, prol)
        else:
            prev = None
        mesh = next_mesh
        level += 1
    return result


def _consecutive_ratios(result: RunResult, prev, A, u) -> None:
    """Efficiency and reliability ratios between levels l and l+1.

    The energy difference |||u_{l+1} - u_l||| is evaluated on the finer
    mesh through the prolongation. tau_l is restricted to the marked set
    for efficiency and to the actually refined elements for reliability.
    """
    u_prev, ind, marked, prol = prev
    pu = prol.dof_matrix @ u_prev.coefficients
    d = u.coefficients - pu
    ediff = math.sqrt(max(float(d @ (A.matrix @ d)), 0.0))

    tau_marked = subset_total(ind, marked)
    refined = np.flatnonzero(prol.refined)
    tau_refined = subset_total(ind, refined)
    eff = 1.0 if (ediff == 0.0 and tau_marked == 0.0) \
        else (tau_marked / ediff if ediff > 0.0 else math.inf)
    rel = 1.0 if (ediff == 0.0 and tau_refined == 0.0) \
        else (ediff / tau_refined if tau_refined > 0.0 else math.inf)
    result.efficiency_ratios.append(eff)
    result.reliability_ratios.append(rel)


def _stability_entry(result: RunResult, l0: int, m: int, A_m, u_m) -> None:
    """Record |tau_l(S) - tau_m(S)| over survivors S = T_l cap T_m.

    An element of level l0 survives to level m when no intermediate step
    bisected it; its id is then traced through the single-son chains.
    The companion quantity is |||u_m - u_l||| on the level-m mesh.
    """
    if l0 >= len(result.prols) or m > len(result.prols):
        return
    ids_l = np.arange(result.meshes[l0].n_elements, dtype=np.int64)
    cur = ids_l.copy()
    for lev in range(l0, m):
        prol = result.prols[lev]
        nxt = np.full(cur.size, -1, dtype=np.int64)
        live = cur >= 0
        for i in np.flatnonzero(live):
            t = cur[i]
            if not prol.refined[t]:
                nxt[i] = prol.sons[t][0]
        cur = nxt
    alive = cur >= 0
    if not np.any(alive):
        return
    tau_l = subset_total(result.indicator_history[l0], ids_l[alive])
    tau_m = subset_total(result.indicator_history[m], cur[alive])

    coeff = result.solutions[l0].coefficients
    for lev in range(l0, m):
        coeff = result.prols[lev].dof_matrix @ coeff
    d = u_m.coefficients - coeff
    ediff = math.sqrt(max(float(d @ (A_m.matrix @ d)), 0.0))
    result.stability_triples.append((l0, m, abs(tau_l - tau_m), ediff))


def _dump_mesh(mesh: Triangulation, dump_dir, level: int) -> None:
    import os
    os.makedirs(dump_dir, exist_ok=True)
    path = os.path.join(str(dump_dir), f"mesh_level_{level:03d}.txt")
    with open(path, "w") as fh:
        fh.write(mesh.to_text())


def write_records(records, path) -> None:
    """Write the per-level records as CSV with the fixed column set.

    Floats use the shortest round-trip-safe %.17g form; a missing error
    (no reference energy) becomes an empty field. Identical runs produce
    byte-identical files.
    """
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            err = "" if r.error is None else "%.17g" % r.error
            fh.write("%d,%d,%d,%.17g,%.17g,%s,%d\n" % (
                r.level, r.dofs, r.n_elements, r.energy_sq, r.estimator,
                err, r.n_marked,
            ))
