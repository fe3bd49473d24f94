"""Obstruction scenarios, RIS partitioning and parameter sweeps.

Default geometry (meters): BS array centred at (0, 0, 10) in the y-z
plane, RIS centred at (20, 20, 10) in the x-z plane, UEs at 1.5 m height
in a cluster 30-40 m from the BS. Scenario 1 keeps every direct link,
scenario 2 blocks the second UE and scenario 3 blocks all three and
splits the RIS into three row blocks (one per UE).

Sub-array centroids of a partitioned RIS act as separate anchors. This is
what makes a fully blocked UE localizable in 2-D; an unpartitioned RIS is
a single anchor and its EFIM has rank one.
"""
import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig, dbm_per_hz_to_w
from .errors import ConfigError, InvalidArgumentError, RisIpacError
from .geometry import SPEED_OF_LIGHT, upa_coordinates

OBSTRUCTION = {1: (1, 1, 1), 2: (1, 0, 1), 3: (0, 0, 0)}
BS_POSITION = (0.0, 0.0, 10.0)
RIS_POSITION = (20.0, 20.0, 10.0)
UE_POSITIONS = ((32.0, 2.0, 1.5), (35.0, -2.0, 1.5), (38.0, 1.0, 1.5))

FULL_SCALE = {"bs": (4, 4), "ris": (12, 12), "n_subcarriers": 1000}
DESK_SCALE = {"bs": (2, 2), "ris": (4, 4), "n_subcarriers": 8}
# scenario 3 needs RIS rows divisible by three
DESK_SCALE_PARTITIONED = {"ris": (6, 4)}

# (rate bps/Hz, PEB m) defaults per scenario, calibrated for desk scale where
# eight 120 kHz subcarriers give km-range position bounds at watt-level power
DEFAULT_REQUIREMENTS = {1: (1.0, 2e3), 2: (1.0, 1e3), 3: (0.3, 5e4)}


def build_scenario(scenario_id, desk_scale=True, **overrides):
    """Configuration of scenario 1, 2 or 3.

    Keyword overrides replace :class:`SystemConfig` fields.
    """
    if scenario_id not in OBSTRUCTION:
        raise InvalidArgumentError(f"scenario id must be 1, 2 or 3, got {scenario_id!r}")
    scale = dict(DESK_SCALE if desk_scale else FULL_SCALE)
    if scenario_id == 3 and desk_scale:
        scale.update(DESK_SCALE_PARTITIONED)
    fc = 30e9
    half = SPEED_OF_LIGHT / fc / 2.0
    bs = upa_coordinates(*scale["bs"], half, "yz", BS_POSITION)
    # rows run along x so row blocks have distinct centroids
    ris = upa_coordinates(*scale["ris"], half, "xz", RIS_POSITION)
    k = len(UE_POSITIONS)
    fields = dict(
        bs=bs,
        ris=ris,
        ue_positions=np.array(UE_POSITIONS),
        obstruction=np.array(OBSTRUCTION[scenario_id], int),
        fc=fc,
        delta_f=120e3,
        n_subcarriers=scale["n_subcarriers"],
        n0=dbm_per_hz_to_w(-174.0),
        noise_figure_db=8.0,
        rate_req=np.full(k, DEFAULT_REQUIREMENTS[scenario_id][0]),
        peb_threshold=np.full(k, DEFAULT_REQUIREMENTS[scenario_id][1]),
        phase_mode="continuous",
        q_bits=2,
        position_dim=2,
        # a blocked UE with one RIS anchor is only observable along one direction
        peb_mode="pseudo" if scenario_id == 2 else "strict",
        ris_parts=3 if scenario_id == 3 else 1,
    )
    fields.update(overrides)
    for key in ("rate_req", "peb_threshold", "obstruction"):
        fields[key] = np.broadcast_to(np.asarray(fields[key], float if key != "obstruction" else int), (k,)).copy()
    return SystemConfig(**fields).validate()


def partition_ris(cfg, parts):
    """Copy of ``cfg`` whose RIS is split into ``parts`` row blocks."""
    rows = cfg.ris.rows_cols[0]
    if parts < 1 or rows % parts:
        raise InvalidArgumentError(f"RIS with {rows} rows cannot be split into {parts} parts")
    return cfg.replace(ris_parts=int(parts)).validate()


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

SWEEP_PARAMS = ("rate_req", "peb_threshold")


@dataclass
class SweepSpec:
    """One parameter sweep over values, phase modes and seeds.

    ``fixed_other`` is the value of the parameter that is not swept
    (``inf`` for "no PEB constraint"). ``base`` overrides scenario fields.
    """

    scenario_id: int
    swept_param: str
    values: list
    fixed_other: float
    phase_modes: list = field(default_factory=lambda: ["continuous"])
    seeds: list = field(default_factory=lambda: [0])
    desk_scale: bool = True
    q_bits: int = 2
    base: dict = field(default_factory=dict)
    record_timing: bool = False

    def __post_init__(self):
        if self.swept_param not in SWEEP_PARAMS:
            raise InvalidArgumentError(f"swept_param must be one of {SWEEP_PARAMS}")
        if not self.values or not self.phase_modes or not self.seeds:
            raise InvalidArgumentError("values, phase_modes and seeds must be non-empty")
        if np.any(np.diff(np.asarray(self.values, float)) <= 0):
            raise InvalidArgumentError("values must be strictly ascending")

    def points(self):
        """Sweep points in table order: value-major, then mode, then seed."""
        return [(v, m, s) for v in self.values for m in self.phase_modes for s in self.seeds]

    def config_for(self, value, mode, seed):
        rate = value if self.swept_param == "rate_req" else self.fixed_other
        peb = value if self.swept_param == "peb_threshold" else self.fixed_other
        phase_mode, q = mode, self.q_bits
        if mode.startswith("discrete"):
            # "discrete:q" selects the bit depth
            phase_mode = "discrete"
            if ":" in mode:
                q = int(mode.split(":", 1)[1])
        fields = dict(self.base)
        fields.update(rate_req=rate, peb_threshold=peb, phase_mode=phase_mode, q_bits=q, seed=int(seed))
        return build_scenario(self.scenario_id, self.desk_scale, **fields)


_SPEC_KEYS = {"scenario_id", "swept_param", "values", "fixed_other", "phase_modes", "seeds",
              "desk_scale", "q_bits", "base", "record_timing"}


def sweep_spec_from_dict(d):
    """Build a :class:`SweepSpec` from its JSON form.

    ``fixed_other: null`` means an inactive constraint (``inf``).

    Raises
    ------
    ConfigError
        One ``(key, message)`` entry per problem.
    """
    issues = []
    if not isinstance(d, dict):
        raise ConfigError([("<root>", "sweep specification must be a JSON object")])
    issues += [(k, "unknown key") for k in sorted(set(d) - _SPEC_KEYS)]
    issues += [(k, "missing required key") for k in ("scenario_id", "swept_param", "values")
               if k not in d]
    if issues:
        raise ConfigError(issues)
    fixed = d.get("fixed_other")
    if fixed is None:
        fixed = np.inf
    kwargs = {k: d[k] for k in ("phase_modes", "seeds", "desk_scale", "q_bits", "base", "record_timing")
              if k in d}
    try:
        spec = SweepSpec(int(d["scenario_id"]), d["swept_param"], [float(x) for x in d["values"]],
                         float(fixed), **kwargs)
        spec.seeds = [int(s) for s in spec.seeds]
        # surface config problems now rather than per sweep point
        for mode in spec.phase_modes:
            spec.config_for(spec.values[0], mode, spec.seeds[0])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError([("sweep", str(exc))]) from exc
    return spec


def sweep_spec_to_dict(spec):
    return {
        "scenario_id": spec.scenario_id,
        "swept_param": spec.swept_param,
        "values": [float(x) for x in spec.values],
        "fixed_other": _finite(spec.fixed_other),
        "phase_modes": list(spec.phase_modes),
        "seeds": [int(s) for s in spec.seeds],
        "desk_scale": bool(spec.desk_scale),
        "q_bits": int(spec.q_bits),
        "base": dict(spec.base),
        "record_timing": bool(spec.record_timing),
    }


COLUMNS_HEAD = ["scenario_id", "phase_mode", "q_bits", "seed", "rate_req_bpshz", "peb_threshold_m",
                "power_total_dbm", "power_total_w"]
COLUMNS_TAIL = ["sdr_gap", "solver_status", "wall_ms"]


def table_columns(n_ue):
    return (COLUMNS_HEAD + [f"rate_k{k}_bpshz" for k in range(1, n_ue + 1)]
            + [f"peb_k{k}_m" for k in range(1, n_ue + 1)] + COLUMNS_TAIL)


def _finite(x):
    x = float(x)
    return x if np.isfinite(x) else None


def run_point(spec, value, mode, seed):
    """One sweep row as a dict (failures become rows with a status)."""
    from .beamforming import run_two_stage

    cfg = spec.config_for(value, mode, seed)
    row = {
        "scenario_id": spec.scenario_id,
        "phase_mode": cfg.phase_mode,
        "q_bits": int(cfg.q_bits) if cfg.phase_mode == "discrete" else None,
        "seed": int(seed),
        "rate_req_bpshz": _finite(cfg.rate_req[0]),
        "peb_threshold_m": _finite(cfg.peb_threshold[0]),
    }
    k = cfg.n_ue
    t0 = time.perf_counter()
    try:
        _, beams, report = run_two_stage(cfg)
        row.update(power_total_dbm=_finite(report.power_dbm), power_total_w=_finite(report.power_w))
        for i in range(k):
            row[f"rate_k{i + 1}_bpshz"] = _finite(report.rate[i])
        for i in range(k):
            row[f"peb_k{i + 1}_m"] = _finite(report.peb[i])
        row["sdr_gap"] = _finite(beams.sdr_gap)
        row["solver_status"] = "optimal"
    except RisIpacError as exc:
        row.update(power_total_dbm=None, power_total_w=None, sdr_gap=None)
        for i in range(k):
            row[f"rate_k{i + 1}_bpshz"] = None
            row[f"peb_k{i + 1}_m"] = None
        row["solver_status"] = _status_of(exc)
    row["wall_ms"] = round(1000.0 * (time.perf_counter() - t0), 3) if spec.record_timing else None
    return row


def _status_of(exc):
    from .errors import InfeasibleConstraintsError, NoFeasibleCandidateError, SingularInformationError

    if isinstance(exc, InfeasibleConstraintsError):
        return "infeasible"
    if isinstance(exc, SingularInformationError):
        return "singular_information"
    if isinstance(exc, NoFeasibleCandidateError):
        return "no_feasible_candidate"
    return "error"


def _run_point_args(args):
    return run_point(*args)


def run_sweep(spec, jobs=1):
    """Rows for every ``(value, mode, seed)`` point, in spec order."""
    tasks = [(spec, v, m, s) for v, m, s in spec.points()]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [run_point(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_point_args, tasks))


def _csv_cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def to_csv(rows, n_ue=3):
    buf = io.StringIO()
    cols = table_columns(n_ue)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in cols])
    return buf.getvalue()


def to_json(rows, n_ue=3):
    cols = table_columns(n_ue)
    return json.dumps([{c: row.get(c) for c in cols} for row in rows], indent=2) + "\n"


def emit(rows, fmt, path, n_ue=None):
    """Write sweep rows as ``csv`` or ``json``.

    Raises ``OSError`` naming ``path`` when the file cannot be written.
    """
    if n_ue is None:
        n_ue = max([sum(c.startswith("rate_k") for c in r) for r in rows] or [3])
    if fmt == "csv":
        text = to_csv(rows, n_ue)
    elif fmt == "json":
        text = to_json(rows, n_ue)
    else:
        raise InvalidArgumentError(f"format must be csv or json, got {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def default_filename(spec, mode, fmt="csv"):
    return f"scenario{spec.scenario_id}_{spec.swept_param}_{mode.replace(':', '')}.{fmt}"
