"""Experiment driver: configuration, full vs. reduced runs, energy accounting, CSV output."""

from __future__ import annotations

import configparser
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .baltrunc import balance_truncate, error_bound, hankel_svd, minimal_order, write_hankel
from .exceptions import ConfigError, ShapeError, StorageMorError
from .gramians import gramians
from .lti import (
    HOUR,
    LtiRealization,
    Schedule,
    Trajectory,
    charge_discharge_schedule,
    running_l2,
    shift_temperature,
    simulate,
    waiting_schedule,
)
from .storage_model import (
    MaterialParams,
    StorageGeometry,
    _canonical,
    build_storage_system,
)

__all__ = [
    "ExperimentConfig",
    "EnergyReport",
    "ExperimentError",
    "ExperimentResult",
    "load_config",
    "build_schedule",
    "build_experiment_system",
    "energy_rates",
    "pump_power",
    "bottom_power",
    "l2_error",
    "run_experiment",
]

ALL_OUTPUTS = ("M", "F", "O", "B")


@dataclass
class ExperimentConfig:
    """Experiment settings; defaults follow the reference parameter table.

    Temperatures in deg C, lengths in m, times in s.  ``grid_scale``
    multiplies ``h_x``, ``h_y`` (and ``d_P`` unless ``scale_d_P`` is off)
    to obtain desk-size grids; ``full_grid`` forces scale 1.
    """

    l_x: float = 10.0
    l_y: float = 1.0
    l_z: float = 1.0
    d_P: float = 0.02
    n_P: int = 1
    rho_M: float = 2000.0
    cp_M: float = 800.0
    kappa_M: float = 1.59
    rho_F: float = 998.0
    cp_F: float = 4182.0
    kappa_F: float = 0.60
    v0: float = 0.01
    lambda_G: float = 10.0
    Q_0: float = 10.0
    Q_C_I: float = 40.0
    Q_D_I: float = 5.0
    Q_G: float = 15.0
    h_x: float = 0.1
    h_y: float = 0.01
    tau: float = 1.0
    T: float = 72 * HOUR
    grid_scale: float = 5.0
    scale_d_P: bool = True
    full_grid: bool = False
    outputs: tuple[str, ...] = ("M",)
    orders: tuple[int, ...] = (1, 2, 4)
    alphas: tuple[float, ...] = (0.9, 0.95, 0.99)
    schedule: str = "charge_discharge"
    scheme: str = "euler"
    out_dir: str = "results"
    workers: int = 1
    stride: int = 1

    def __post_init__(self):
        self.outputs = tuple(_canonical(o) for o in self.outputs)
        if not self.outputs:
            raise ConfigError("at least one output characteristic is required")
        self.orders = tuple(int(o) for o in self.orders)
        if any(o < 1 for o in self.orders):
            raise ConfigError("reduced orders must be positive")
        self.alphas = tuple(float(a) for a in self.alphas)
        if any(not 0 < a <= 1 for a in self.alphas):
            raise ConfigError("alpha thresholds must lie in (0, 1]")
        if self.schedule not in ("charge_discharge", "waiting"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.scheme not in ("euler", "trapezoid"):
            raise ConfigError(f"unknown time scheme {self.scheme!r}")
        if not self.grid_scale > 0 or self.stride < 1 or self.workers < 1:
            raise ConfigError("grid_scale, stride and workers must be positive")

    @property
    def scale(self) -> float:
        return 1.0 if self.full_grid else self.grid_scale

    @property
    def material_M(self) -> MaterialParams:
        return MaterialParams(self.rho_M, self.cp_M, self.kappa_M)

    @property
    def material_F(self) -> MaterialParams:
        return MaterialParams(self.rho_F, self.cp_F, self.kappa_F)

    @property
    def geometry(self) -> StorageGeometry:
        d_P = self.d_P * (self.scale if self.scale_d_P else 1.0)
        return StorageGeometry(l_x=self.l_x, l_y=self.l_y, l_z=self.l_z, d_P=d_P, n_P=self.n_P, lambda_G=self.lambda_G)

    @property
    def steps(self) -> tuple[float, float]:
        return self.h_x * self.scale, self.h_y * self.scale


_UNITS = {"s": 1.0, "min": 60.0, "h": HOUR}


def _time(text: str) -> float:
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*(s|min|h)?\s*", text)
    if not m:
        raise ConfigError(f"cannot parse time {text!r}")
    return float(m.group(1)) * _UNITS[m.group(2) or "s"]


def _list(text: str) -> list[str]:
    return [p.strip() for p in re.split(r"[,\s]+", text) if p.strip()]


def load_config(path, **overrides) -> ExperimentConfig:
    """Read an INI file; every section is flattened into one key space.

    Keys are the field names of :class:`ExperimentConfig`.  ``T`` and
    ``tau`` accept ``s``, ``min`` or ``h`` suffixes; list values are comma
    separated.  Keyword ``overrides`` win over the file.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values: dict = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            values[key] = _convert(key, kinds[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _convert(key, kind, raw):
    try:
        if key in ("T", "tau"):
            return _time(raw)
        if kind in ("bool",):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if key == "outputs":
            return tuple(_list(raw))
        if key == "orders":
            return tuple(int(v) for v in _list(raw))
        if key == "alphas":
            return tuple(float(v) for v in _list(raw))
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def build_schedule(cfg: ExperimentConfig) -> Schedule:
    temps = dict(Q_in_C=cfg.Q_C_I, Q_in_D=cfg.Q_D_I, Q_G=cfg.Q_G, Q_0=cfg.Q_0, v0=cfg.v0)
    if cfg.schedule == "waiting":
        if not np.isclose(cfg.T, 72 * HOUR):
            raise ConfigError("the waiting schedule is defined on a 72 h horizon")
        return waiting_schedule(**temps)
    return charge_discharge_schedule(cfg.T, **temps)


def build_experiment_system(cfg: ExperimentConfig, outputs: Sequence[str] | None = None):
    """Assemble the analogous-model storage system described by ``cfg``."""
    h_x, h_y = cfg.steps
    return build_storage_system(
        cfg.geometry, h_x, h_y, cfg.material_M, cfg.material_F, v0=cfg.v0,
        outputs=cfg.outputs if outputs is None else outputs,
    )


@dataclass
class EnergyReport:
    """Energy rates (W/m) and cumulative exchanged energies (J).

    ``G_P[k]`` and ``G_B[k]`` integrate ``R_P`` / ``R_B`` over ``[0, t_k]``
    with the left-endpoint rule and include the ``l_z`` factor.
    """

    t: np.ndarray
    R_P: np.ndarray
    R_B: np.ndarray
    G_P: np.ndarray
    G_B: np.ndarray
    gains: dict = field(default_factory=dict)


def pump_power(rho_F, cp_F, v, width, Q_in, Q_out):
    """Heat carried into the storage by the PHX fluid per unit depth (W/m)."""
    return rho_F * cp_F * np.asarray(v) * width * (np.asarray(Q_in) - np.asarray(Q_out))


def bottom_power(lambda_G, length, Q_G, Q_B):
    """Heat entering through the bottom boundary per unit depth (W/m)."""
    return lambda_G * length * (np.asarray(Q_G) - np.asarray(Q_B))


def energy_rates(traj: Trajectory, cfg: ExperimentConfig, sched: Schedule, names: Sequence[str]) -> EnergyReport:
    """Energy flows through the PHX outlets and the bottom boundary.

    ``traj`` must be in absolute temperatures with output columns labelled
    by ``names``; ``O`` and ``B`` are required, ``M`` and ``F`` add
    per-domain gains.  The pump counts as off during waiting.  The bottom
    temperature follows from the discrete Robin relation applied to the
    ``B`` output, which averages the first interior row.
    """
    names = [_canonical(n) for n in names]
    for req in ("O", "B"):
        if req not in names:
            raise ConfigError(f"energy accounting needs output {req!r}")
    Z = np.asarray(traj.Z)
    Q_O, Q_row = Z[:, names.index("O")], Z[:, names.index("B")]
    Q_in, Q_G = traj.g[:, 0], traj.g[:, 1]
    geom = cfg.geometry
    h_y = cfg.steps[1]
    pump = np.array([0.0 if sched.period(t) == "W" else sched.v0 for t in traj.t])
    R_P = pump_power(cfg.rho_F, cfg.cp_F, pump, geom.n_P * geom.d_P, Q_in, Q_O)
    w = cfg.kappa_M / (cfg.kappa_M + cfg.lambda_G * h_y)
    Q_B = w * Q_row + (1 - w) * Q_G
    R_B = bottom_power(cfg.lambda_G, cfg.l_x, Q_G, Q_B)
    G_P = cfg.l_z * running_sum(R_P, traj.tau)
    G_B = cfg.l_z * running_sum(R_B, traj.tau)
    gains = {}
    areas = {"F": cfg.l_x * geom.n_P * geom.d_P}
    areas["M"] = cfg.l_x * cfg.l_y - areas["F"]
    for key, (rho, cp) in (("M", (cfg.rho_M, cfg.cp_M)), ("F", (cfg.rho_F, cfg.cp_F))):
        if key in names:
            q = Z[:, names.index(key)]
            gains[key] = rho * cp * areas[key] * cfg.l_z * (q[-1] - q[0])
    return EnergyReport(traj.t, R_P, R_B, G_P, G_B, gains)


def running_sum(x, tau: float) -> np.ndarray:
    """Left-endpoint running integral, starting at 0."""
    x = np.asarray(x, dtype=float)
    return np.concatenate(([0.0], tau * np.cumsum(x[:-1])))


def l2_error(Z, Z_tilde, tau: float) -> np.ndarray:
    """Running ``|Z - Z_tilde|_{L2(0, t_k)}`` with the left-endpoint rule.

    Raises
    ------
    ShapeError
        If the two output records differ in shape.
    """
    Z, Zt = np.asarray(Z, dtype=float), np.asarray(Z_tilde, dtype=float)
    if Z.shape != Zt.shape:
        raise ShapeError(f"output records differ: {Z.shape} vs {Zt.shape}")
    return running_l2(Z - Zt, tau)


class ExperimentError(StorageMorError):
    """Failure inside one stage of :func:`run_experiment`."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentResult:
    n: int
    n0: int
    sigma: np.ndarray
    minimal_orders: dict
    orders: tuple[int, ...]
    max_error: dict
    bound_ok: dict
    files: dict


def _orders_json(cfg, sigma) -> str:
    key = ",".join(cfg.outputs)
    table = {f"{a:g}": minimal_order(sigma, a) for a in cfg.alphas}
    doc = {"n_P": cfg.n_P, "grid_scale": cfg.scale, "n0": int(len(sigma)), "orders": {key: table}}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _save(path: Path, header: list[str], cols: Sequence[np.ndarray], stride: int):
    data = np.column_stack(cols)[::stride]
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def run_experiment(cfg: ExperimentConfig, log=None) -> ExperimentResult:
    """Full pipeline: assemble, reduce, simulate, compare and write CSV/JSON artifacts.

    Requested orders above ``n0`` are dropped.  Any failure is re-raised as
    :class:`ExperimentError` naming the stage, and files written by this
    call are removed.
    """
    log = sys.stdout if log is None else log
    stage = "assemble"
    written: list[Path] = []
    try:
        full_sys = build_experiment_system(cfg, ALL_OUTPUTS)
        sel = [ALL_OUTPUTS.index(o) for o in cfg.outputs]
        C_all = full_sys.C
        r = LtiRealization(full_sys.A, full_sys.B, C_all[sel])
        cf_row = C_all[ALL_OUTPUTS.index("F")]
        sched = build_schedule(cfg)
        shifted = shift_temperature(sched)

        stage = "gramians"
        gp = gramians(r)
        stage = "hankel"
        svd = hankel_svd(gp)
        sigma = svd.sigma
        mins = {f"{a:g}": minimal_order(sigma, a) for a in cfg.alphas}
        orders = tuple(o for o in cfg.orders if o <= svd.n0)
        if len(orders) < len(cfg.orders):
            print(f"note: orders above n0={svd.n0} skipped", file=log)
        reductions = {ell: balance_truncate(r, gp, ell, svd) for ell in orders}

        stage = "simulate-full"
        full = simulate(LtiRealization(r.A, r.B, C_all), shifted, tau=cfg.tau, cf_row=cf_row, scheme=cfg.scheme)
        Z_full = full.Z[:, sel]
        g_l2 = running_l2(full.g, cfg.tau)

        stage = "simulate-reduced"

        def run(ell):
            red = reductions[ell]
            return simulate(red.reduced, shifted, tau=cfg.tau, cf_row=cf_row @ red.T_minus, scheme=cfg.scheme)

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            reduced = dict(zip(orders, pool.map(run, orders)))

        stage = "errors"
        errors, bounds, max_err, ok = {}, {}, {}, {}
        for ell in orders:
            errors[ell] = l2_error(Z_full, reduced[ell].Z, cfg.tau)
            bounds[ell] = error_bound(sigma, ell, g_l2)
            max_err[ell] = float(np.max(np.abs(Z_full - reduced[ell].Z)))
            ok[ell] = bool(np.all(errors[ell] <= bounds[ell])) if ell < svd.n0 else None
        absolute = Trajectory(full.t, full.Z + cfg.Q_0, full.g + cfg.Q_0, cfg.tau)
        energy = energy_rates(absolute, cfg, sched, ALL_OUTPUTS)

        stage = "write"
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {k: out / k for k in ("hankel.csv", "orders.json", "outputs.csv", "errors.csv", "energy.csv")}
        written.extend(files.values())
        write_hankel(files["hankel.csv"], sigma)
        files["orders.json"].write_text(_orders_json(cfg, sigma))
        header = ["t"] + [f"Z_{o}" for o in cfg.outputs]
        cols = [full.t] + [Z_full[:, i] + cfg.Q_0 for i in range(len(sel))]
        for ell in orders:
            header += [f"Z_{o}_l{ell}" for o in cfg.outputs]
            cols += [reduced[ell].Z[:, i] + cfg.Q_0 for i in range(len(sel))]
        _save(files["outputs.csv"], header, cols, cfg.stride)
        header, cols = ["t"], [full.t]
        for ell in orders:
            header += [f"e_l{ell}", f"bound_l{ell}"]
            cols += [errors[ell], bounds[ell]]
        _save(files["errors.csv"], header, cols, cfg.stride)
        _save(files["energy.csv"], ["t", "R_P", "R_B", "G_P", "G_B"],
              [energy.t, energy.R_P, energy.R_B, energy.G_P, energy.G_B], cfg.stride)
    except (StorageMorError, ValueError, ArithmeticError, OSError, np.linalg.LinAlgError) as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise ExperimentError(stage, exc) from exc

    _print_summary(cfg, r.n, svd.n0, mins, max_err, ok, log)
    return ExperimentResult(r.n, svd.n0, sigma, mins, orders, max_err, ok, files)


def _print_summary(cfg, n, n0, mins, max_err, ok, log):
    key = ",".join(cfg.outputs)
    print(f"n = {n}, n0 = {n0}, n_P = {cfg.n_P}, grid scale = {cfg.scale:g}", file=log)
    head = "outputs".ljust(10) + "".join(f"a={a}".rjust(10) for a in mins)
    print(head, file=log)
    print(key.ljust(10) + "".join(str(v).rjust(10) for v in mins.values()), file=log)
    for ell, e in max_err.items():
        status = "n/a" if ok[ell] is None else ("ok" if ok[ell] else "VIOLATED")
        print(f"l={ell:<4d} max|Z-Zr|={e:.3e}  bound {status}", file=log)
