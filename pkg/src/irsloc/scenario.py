"""Random layouts, config files and CSV experiment sweeps."""
from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .baselines import SCHEMES, run_scheme
from .beams import ZF_RCOND
from .channel import steering
from .geometry import Scenario, SolverConfig, check_separability, db_to_linear, dbm_to_watt

log = logging.getLogger(__name__)

BS_POSITION = (0.0, 0.0, 50.0)
IRS_HEIGHT = 30.0
AREA_HALF_WIDTH = 100.0
MIN_HORIZONTAL_GAP = 1.0
BS_COSINE_TOL = 1e-6
MAX_REJECTIONS = 100

SWEEP_PARAMS = ("K", "N_T", "N", "M", "P_max", "Q")


class LayoutError(RuntimeError):
    """Random layout generation kept failing its acceptance tests."""


class ConfigError(ValueError):
    """A config or plan file is malformed."""


# -- layouts -----------------------------------------------------------------

def _bs_cosine(irs_xy) -> float:
    """Direction cosine of an IRS along the BS array axis (x)."""
    d = np.array([irs_xy[0], irs_xy[1], IRS_HEIGHT]) - np.array(BS_POSITION)
    return float(d[0] / np.linalg.norm(d))


def _draw(rng, accept, what: str):
    for _ in range(MAX_REJECTIONS):
        xy = rng.uniform(-AREA_HALF_WIDTH, AREA_HALF_WIDTH, size=2)
        if accept(xy):
            return xy
    raise LayoutError(f"{MAX_REJECTIONS} consecutive rejections while placing {what}")


def _zf_conditioned(cosines, n_tx: int, spacing_ratio: float) -> bool:
    A = np.stack([steering(c, n_tx, spacing_ratio) for c in cosines])
    eig = np.linalg.eigvalsh(A.conj() @ A.T)
    return bool(eig[0] > ZF_RCOND * eig[-1])


def random_layout(seed: int, n_irs: int, n_targets: int, pulse_width: float = 0.0,
                  n_tx: int | None = None, spacing_ratio: float = 0.5):
    """IRS and target positions for one seed.

    IRSs and targets come from separate generator streams and are placed one
    at a time, so the first ``K`` IRSs (and the first ``Q`` targets) are the
    same for any larger ``K`` (``Q``) drawn with the same seed whenever no
    rejection intervenes. IRSs are rejected when their BS direction cosine
    is within ``BS_COSINE_TOL`` of an earlier one or, given ``n_tx``, when
    the BS steering vectors would be too close to collinear for zero-forcing
    (same test as the beam module); targets when they fall
    within ``MIN_HORIZONTAL_GAP`` of an IRS or are not delay-separable from
    an earlier target at ``pulse_width``.
    """
    irs_rng = np.random.default_rng([seed, 0])
    tgt_rng = np.random.default_rng([seed, 1])
    irs, cosines = [], []

    def irs_ok(xy):
        c = _bs_cosine(xy)
        if any(abs(c - c2) <= BS_COSINE_TOL for c2 in cosines):
            return False
        return n_tx is None or _zf_conditioned(cosines + [c], n_tx, spacing_ratio)

    for k in range(n_irs):
        xy = _draw(irs_rng, irs_ok, f"IRS {k}")
        irs.append([xy[0], xy[1], IRS_HEIGHT])
        cosines.append(_bs_cosine(xy))
    irs = np.array(irs)

    targets = []

    def target_ok(xy):
        if np.min(np.hypot(irs[:, 0] - xy[0], irs[:, 1] - xy[1])) < MIN_HORIZONTAL_GAP:
            return False
        if not targets:
            return True
        trial = Scenario(bs_position=BS_POSITION, irs_positions=irs,
                         target_positions=targets + [[xy[0], xy[1], 0.0]],
                         n_tx=max(n_irs, 1), pulse_width=pulse_width)
        return check_separability(trial)[0]

    for q in range(n_targets):
        xy = _draw(tgt_rng, target_ok, f"target {q}")
        targets.append([xy[0], xy[1], 0.0])
    return irs, np.array(targets)


def generate_scenario(seed: int, n_irs: int = 6, n_targets: int = 1, **params) -> Scenario:
    """Random layout in the 200 m x 200 m area with the default radio parameters.

    ``params`` override any :class:`Scenario` field (linear SI units).
    """
    defaults = Scenario.__dataclass_fields__
    n_tx = params.get("n_tx", defaults["n_tx"].default)
    if n_tx < n_irs:
        raise ValueError(f"n_tx={n_tx} < K={n_irs}: zero-forcing needs N_T >= K")
    irs, tgt = random_layout(seed, n_irs, n_targets,
                             pulse_width=params.get("pulse_width", defaults["pulse_width"].default),
                             n_tx=n_tx,
                             spacing_ratio=params.get("spacing_ratio",
                                                      defaults["spacing_ratio"].default))
    return Scenario(bs_position=BS_POSITION, irs_positions=irs, target_positions=tgt,
                    rng_seed=seed, **params)


# -- config files ----------------------------------------------------------------

# keys carrying units in their names, converted to the linear field they set
_UNIT_KEYS = {
    "p_max_dbw": ("p_max", db_to_linear),
    "p_max_w": ("p_max", float),
    "noise_dbm": ("noise_power", dbm_to_watt),
    "noise_w": ("noise_power", float),
    "rcs_dbsm": ("rcs", db_to_linear),
    "rcs_m2": ("rcs", float),
    "wavelength_m": ("wavelength", float),
    "pulse_width_s": ("pulse_width", float),
}
_PLAIN_KEYS = {"n_tx", "n_elem_x", "n_elem_z", "m_sens_x", "m_sens_z", "eta", "spacing_ratio"}
_LAYOUT_KEYS = {"bs_position", "irs_positions", "target_positions", "n_irs", "n_targets"}


def load_config(path) -> dict:
    """Read a YAML or JSON file (JSON is valid YAML) into a dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def solver_config(section: dict | None) -> SolverConfig:
    section = section or {}
    known = {f.name for f in fields(SolverConfig)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
    return SolverConfig(**section)


def scenario_params(section: dict | None) -> dict:
    """Convert unit-suffixed config keys into :class:`Scenario` keyword arguments."""
    out = {}
    for key, val in (section or {}).items():
        if key in _UNIT_KEYS:
            name, conv = _UNIT_KEYS[key]
            if name in out:
                raise ConfigError(f"{name} given twice")
            out[name] = float(conv(val))
        elif key in _PLAIN_KEYS:
            out[key] = val
        elif key not in _LAYOUT_KEYS:
            raise ConfigError(f"unknown scenario key {key!r} (units belong in the key name, "
                              "e.g. p_max_dbw, noise_dbm, rcs_dbsm)")
    return out


def scenario_from_config(cfg: dict, seed: int = 0) -> Scenario:
    """Explicit positions if the file gives them, otherwise a random layout for ``seed``."""
    unknown = set(cfg) - {"scenario", "solver"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    sec = cfg.get("scenario") or {}
    try:
        params = scenario_params(sec)
        params["solver"] = solver_config(cfg.get("solver"))
        if "irs_positions" in sec or "target_positions" in sec:
            return Scenario(bs_position=sec.get("bs_position", BS_POSITION),
                            irs_positions=sec["irs_positions"],
                            target_positions=sec["target_positions"], rng_seed=seed, **params)
        return generate_scenario(seed, int(sec.get("n_irs", 6)), int(sec.get("n_targets", 1)),
                                 **params)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scenario: {exc}") from exc


# -- sweeps ------------------------------------------------------------------

@dataclass
class ExperimentPlan:
    """One swept parameter, paired seeded trials, several schemes."""

    param: str
    values: list
    trials: int = 50
    schemes: tuple = SCHEMES
    out: str = "results.csv"
    seed: int = 0
    scenario: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
        self.values = list(self.values)
        if not self.values or not all(isinstance(v, (int, float)) for v in self.values):
            raise ConfigError("sweep values must be a nonempty list of numbers")
        # P_max is swept in dBW, where zero and negative values are legitimate
        if self.param != "P_max" and min(self.values) <= 0:
            raise ConfigError("sweep values must be positive")
        self.schemes = tuple(self.schemes)
        if not self.schemes or any(s not in SCHEMES for s in self.schemes):
            raise ConfigError(f"schemes must be a nonempty subset of {SCHEMES}")
        if self.trials < 1 or self.workers < 1:
            raise ConfigError("trials and workers must be positive")

    @classmethod
    def from_config(cls, cfg: dict, **overrides) -> "ExperimentPlan":
        sweep = cfg.get("sweep") or {}
        kw = {"param": sweep.get("param"), "values": sweep.get("values", [])}
        for key in ("trials", "schemes", "out", "seed", "scenario", "solver", "workers"):
            if key in cfg:
                kw[key] = cfg[key]
        unknown = set(cfg) - {"sweep", "trials", "schemes", "out", "seed", "scenario",
                              "solver", "workers"}
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        kw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def scenario_for(self, value, seed: int) -> Scenario:
        sec = dict(self.scenario)
        n_irs = int(sec.pop("n_irs", 6))
        n_targets = int(sec.pop("n_targets", 1))
        params = scenario_params(sec)
        if self.param == "K":
            n_irs = int(value)
        elif self.param == "Q":
            n_targets = int(value)
        elif self.param == "N_T":
            params["n_tx"] = int(value)
        elif self.param == "P_max":
            params["p_max"] = float(db_to_linear(value))
        else:
            pre = "n_elem" if self.param == "N" else "m_sens"
            rows = int(params.get(f"{pre}_z", 2))
            if int(value) % rows:
                raise ConfigError(f"{self.param}={value} is not a multiple of {pre}_z={rows}")
            params[f"{pre}_x"] = int(value) // rows
        params["solver"] = solver_config(self.solver)
        return generate_scenario(seed, n_irs, n_targets, **params)


@dataclass
class ResultRow:
    seed: int
    scheme: str
    param: str
    value: float
    crb: str
    worst_crb: float
    status: str
    iterations: int
    wall_time_s: float
    n_irs: int = 0
    n_targets: int = 0
    n_tx: int = 0
    n_elem: int = 0
    n_sens: int = 0
    p_max_w: float = 0.0
    noise_w: float = 0.0
    rcs_m2: float = 0.0
    wavelength_m: float = 0.0
    irs_positions: str = ""
    target_positions: str = ""


CSV_COLUMNS = [f.name for f in fields(ResultRow)]


def _iterations(report) -> int:
    tr = report.trace
    if "phis" in tr:
        return len(tr["phis"])
    if "objectives" in tr:
        return len(tr["objectives"])
    return 0


def _run_job(plan: ExperimentPlan, value, seed: int, scheme: str) -> ResultRow:
    base = dict(seed=seed, scheme=scheme, param=plan.param, value=value)
    t0 = time.perf_counter()
    try:
        sc = plan.scenario_for(value, seed)
    except Exception as exc:  # the sweep records failures and moves on
        return ResultRow(**base, crb="", worst_crb=float("nan"),
                         status=f"failed: {type(exc).__name__}: {exc}", iterations=0,
                         wall_time_s=time.perf_counter() - t0)
    knobs = dict(n_irs=sc.n_irs, n_targets=sc.n_targets, n_tx=sc.n_tx, n_elem=sc.n_elem,
                 n_sens=sc.n_sens, p_max_w=sc.p_max, noise_w=sc.noise_power, rcs_m2=sc.rcs,
                 wavelength_m=sc.wavelength,
                 irs_positions=json.dumps(sc.irs_positions.tolist()),
                 target_positions=json.dumps(sc.target_positions.tolist()))
    try:
        report = run_scheme(scheme, sc)
    except Exception as exc:
        log.warning("%s seed=%d %s=%s failed: %s", scheme, seed, plan.param, value, exc)
        return ResultRow(**base, crb="", worst_crb=float("nan"),
                         status=f"failed: {type(exc).__name__}: {exc}", iterations=0,
                         wall_time_s=time.perf_counter() - t0, **knobs)
    return ResultRow(**base, crb=";".join(repr(float(c)) for c in report.crb),
                     worst_crb=report.worst_crb, status=report.status,
                     iterations=_iterations(report), wall_time_s=time.perf_counter() - t0,
                     **knobs)


def _run_job_args(args):
    return _run_job(*args)


def write_rows(rows, path) -> Path:
    """Write the CSV atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow(asdict(row))
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
    return path


def run_plan(plan: ExperimentPlan):
    """Run every (value, seed, scheme) job and write the CSV.

    Schemes share the scenario of each (value, seed), so comparisons are
    paired. Rows come out in (value, seed, scheme) order whatever the
    completion order. Returns ``(path, rows)``.
    """
    jobs = [(plan, v, plan.seed + t, s) for v in plan.values for t in range(plan.trials)
            for s in plan.schemes]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            rows = list(pool.map(_run_job_args, jobs))
    else:
        rows = [_run_job(*job) for job in jobs]
    return write_rows(rows, plan.out), rows
