"""Experiment configuration and its JSON representation.

The JSON document (``schema: 1``) mirrors the :class:`SystemConfig` field
names in SI units::

    {
      "schema": 1,
      "bs":  {"rows": 2, "cols": 2, "position": [0, 0, 10], "plane": "yz",
              "spacing": null},
      "ris": {"rows": 4, "cols": 4, "position": [20, 20, 10], "plane": "xz",
              "spacing": null, "parts": 1},
      "ue_positions": [[32, 2, 1.5], ...],
      "obstruction": [1, 1, 1],
      "fc": 3.0e10, "delta_f": 1.2e5, "n_subcarriers": 8,
      "n0": 3.98e-21, "noise_figure_db": 8.0,
      "rate_req": [1.0, 1.0, 1.0], "peb_threshold": [5.0, 5.0, 5.0],
      "phase_mode": "discrete", "q_bits": 2,
      "position_dim": 2, "peb_mode": "strict", "seed": 0,
      "max_power_w": 1.0e6, "discrete_starts": 8, "random_trials": 100
    }

``spacing: null`` means half a wavelength at ``fc``. ``peb_threshold``
entries may be ``null`` (no positioning constraint for that UE) and
``rate_req`` entries may be 0 (no rate constraint). Scalars given for
``obstruction``, ``rate_req`` or ``peb_threshold`` are broadcast to all UEs.
Schema 1 has no angle-valued keys.
"""
import copy
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import SPEED_OF_LIGHT, ArrayGeometry, upa_coordinates

SCHEMA_VERSION = 1
PHASE_MODES = ("discrete", "continuous", "random", "identity")
PEB_MODES = ("strict", "pseudo")


def dbm_per_hz_to_w(value_dbm):
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Full description of one experiment.

    ``n0`` is the noise PSD in W/Hz; the per-subcarrier noise power used by
    every metric is :attr:`noise_power` (``n0 * delta_f * NF``).
    """

    bs: ArrayGeometry
    ris: ArrayGeometry
    ue_positions: np.ndarray
    obstruction: np.ndarray
    fc: float = 30e9
    delta_f: float = 120e3
    n_subcarriers: int = 8
    n0: float = dbm_per_hz_to_w(-174.0)
    noise_figure_db: float = 8.0
    rate_req: np.ndarray = None
    peb_threshold: np.ndarray = None
    phase_mode: str = "continuous"
    q_bits: int = 2
    position_dim: int = 2
    peb_mode: str = "strict"
    seed: int = 0
    ris_parts: int = 1
    max_power_w: float = 1e6
    discrete_starts: int = 8
    random_trials: int = 100
    extras: dict = field(default_factory=dict)

    @property
    def n_ue(self):
        return self.ue_positions.shape[0]

    @property
    def noise_power(self):
        return self.n0 * self.delta_f * 10.0 ** (self.noise_figure_db / 10.0)

    @property
    def subcarriers(self):
        """Subcarrier indices ``1 .. N``."""
        return np.arange(1, self.n_subcarriers + 1)

    @property
    def n_levels(self):
        return 2 ** int(self.q_bits)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def issues(self):
        """Invariant violations as ``(key, message)`` pairs."""
        out = []
        k = self.n_ue
        for name in ("fc", "delta_f", "n0"):
            if not getattr(self, name) > 0:
                out.append((name, "must be strictly positive"))
        if int(self.n_subcarriers) != self.n_subcarriers or self.n_subcarriers < 1:
            out.append(("n_subcarriers", "must be a positive integer"))
        if k < 1:
            out.append(("ue_positions", "at least one UE is required"))
        for name in ("obstruction", "rate_req", "peb_threshold"):
            arr = getattr(self, name)
            if arr is None or len(arr) != k:
                out.append((name, f"length must equal the number of UEs ({k})"))
        if self.obstruction is not None and not np.all(np.isin(self.obstruction, (0, 1))):
            out.append(("obstruction", "entries must be 0 or 1"))
        if self.rate_req is not None and np.any(~(np.asarray(self.rate_req) >= 0)):
            out.append(("rate_req", "entries must be >= 0"))
        if self.peb_threshold is not None and np.any(~(np.asarray(self.peb_threshold) > 0)):
            out.append(("peb_threshold", "entries must be > 0"))
        if self.phase_mode not in PHASE_MODES:
            out.append(("phase_mode", f"must be one of {PHASE_MODES}"))
        if self.phase_mode == "discrete" and not (int(self.q_bits) == self.q_bits and self.q_bits >= 1):
            out.append(("q_bits", "discrete mode needs q_bits >= 1 (at least 2 levels)"))
        if self.position_dim not in (2, 3):
            out.append(("position_dim", "must be 2 or 3"))
        if self.peb_mode not in PEB_MODES:
            out.append(("peb_mode", f"must be one of {PEB_MODES}"))
        if self.ris_parts < 1 or self.ris.rows_cols[0] % self.ris_parts:
            out.append(("ris.parts", "RIS rows must be divisible by the number of parts"))
        if not self.max_power_w > 0:
            out.append(("max_power_w", "must be strictly positive"))
        if self.discrete_starts < 0:
            out.append(("discrete_starts", "must be >= 0"))
        if self.random_trials < 1:
            out.append(("random_trials", "must be >= 1"))
        if self.ue_positions.ndim == 2 and self.ue_positions.shape[1] == 3:
            for i, u in enumerate(self.ue_positions):
                if np.allclose(u, self.bs.reference_point, atol=0, rtol=0):
                    out.append((f"ue_positions[{i}]", "collocated with the BS"))
                if np.allclose(u, self.ris.reference_point, atol=0, rtol=0):
                    out.append((f"ue_positions[{i}]", "collocated with the RIS"))
        else:
            out.append(("ue_positions", "must be a list of 3-vectors"))
        return out

    def validate(self):
        problems = self.issues()
        if problems:
            raise ConfigError(problems)
        return self


def _array_dict(geom, parts=None):
    d = {
        "rows": geom.rows_cols[0],
        "cols": geom.rows_cols[1],
        "position": [float(x) for x in geom.reference_point],
        "plane": geom.plane,
        "spacing": geom.element_spacing,
    }
    if parts is not None:
        d["parts"] = parts
    return d


def config_to_dict(cfg):
    """Serialize to the schema-1 JSON structure."""
    peb = [None if not np.isfinite(x) else float(x) for x in cfg.peb_threshold]
    d = {
        "schema": SCHEMA_VERSION,
        "bs": _array_dict(cfg.bs),
        "ris": _array_dict(cfg.ris, cfg.ris_parts),
        "ue_positions": [[float(x) for x in u] for u in cfg.ue_positions],
        "obstruction": [int(x) for x in cfg.obstruction],
        "fc": float(cfg.fc),
        "delta_f": float(cfg.delta_f),
        "n_subcarriers": int(cfg.n_subcarriers),
        "n0": float(cfg.n0),
        "noise_figure_db": float(cfg.noise_figure_db),
        "rate_req": [float(x) for x in cfg.rate_req],
        "peb_threshold": peb,
        "phase_mode": cfg.phase_mode,
        "q_bits": int(cfg.q_bits),
        "position_dim": int(cfg.position_dim),
        "peb_mode": cfg.peb_mode,
        "seed": int(cfg.seed),
        "max_power_w": float(cfg.max_power_w),
        "discrete_starts": int(cfg.discrete_starts),
        "random_trials": int(cfg.random_trials),
    }
    if cfg.extras:
        d["extras"] = copy.deepcopy(cfg.extras)
    return d


_TOP_KEYS = {
    "schema", "bs", "ris", "ue_positions", "obstruction", "fc", "delta_f",
    "n_subcarriers", "n0", "noise_figure_db", "rate_req", "peb_threshold",
    "phase_mode", "q_bits", "position_dim", "peb_mode", "seed", "max_power_w",
    "discrete_starts", "random_trials", "extras",
}
_ARRAY_KEYS = {"rows", "cols", "position", "plane", "spacing", "parts"}
_REQUIRED = ("bs", "ris", "ue_positions")


def _per_ue(value, k, name, issues, default):
    if value is None:
        value = default
    if np.isscalar(value) or value is None:
        value = [value] * k
    try:
        arr = np.array([np.inf if x is None else x for x in value], dtype=float)
    except (TypeError, ValueError):
        issues.append((name, "must be a number or a list of numbers"))
        return np.full(k, default if default is not None else np.inf, dtype=float)
    return arr


def _geometry_from(d, key, fc, issues):
    if not isinstance(d, dict):
        issues.append((key, "must be an object"))
        return None
    for extra in set(d) - _ARRAY_KEYS:
        issues.append((f"{key}.{extra}", "unknown key"))
    try:
        rows, cols = int(d.get("rows", 1)), int(d.get("cols", 1))
        pos = np.asarray(d.get("position", [0.0, 0.0, 0.0]), dtype=float)
        if pos.shape != (3,):
            issues.append((f"{key}.position", "must be a 3-vector"))
            return None
        spacing = d.get("spacing")
        if spacing is None:
            spacing = SPEED_OF_LIGHT / fc / 2.0
        return upa_coordinates(rows, cols, float(spacing), d.get("plane", "xy"), pos)
    except (TypeError, ValueError) as exc:
        issues.append((key, str(exc)))
        return None


def config_from_dict(d):
    """Build and validate a :class:`SystemConfig` from a schema-1 dict.

    Raises
    ------
    ConfigError
        With one ``(key, message)`` entry per problem found.
    """
    issues = []
    if not isinstance(d, dict):
        raise ConfigError([("<root>", "configuration must be a JSON object")])
    if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        issues.append(("schema", f"unsupported schema version {d.get('schema')!r}"))
    for extra in sorted(set(d) - _TOP_KEYS):
        issues.append((extra, "unknown key"))
    for req in _REQUIRED:
        if req not in d:
            issues.append((req, "missing required key"))
    if issues:
        raise ConfigError(issues)

    fc = d.get("fc", 30e9)
    try:
        fc = float(fc)
    except (TypeError, ValueError):
        raise ConfigError([("fc", "must be a number")])
    if not fc > 0:
        raise ConfigError([("fc", "must be strictly positive")])
    bs = _geometry_from(d["bs"], "bs", fc, issues)
    ris = _geometry_from(d["ris"], "ris", fc, issues)
    try:
        ue = np.asarray(d["ue_positions"], dtype=float)
    except (TypeError, ValueError):
        issues.append(("ue_positions", "must be a list of 3-vectors"))
        ue = np.zeros((0, 3))
    if ue.ndim != 2 or ue.shape[1:] != (3,):
        issues.append(("ue_positions", "must be a list of 3-vectors"))
        ue = np.zeros((0, 3))
    k = ue.shape[0]
    obstruction = d.get("obstruction", 1)
    if np.isscalar(obstruction):
        obstruction = [obstruction] * k
    rate = _per_ue(d.get("rate_req"), k, "rate_req", issues, 1.0)
    peb = _per_ue(d.get("peb_threshold"), k, "peb_threshold", issues, None)
    if issues:
        raise ConfigError(issues)

    kwargs = {}
    scalar_types = {
        "delta_f": float, "n_subcarriers": int, "n0": float, "noise_figure_db": float,
        "phase_mode": str, "q_bits": int, "position_dim": int, "peb_mode": str,
        "seed": int, "max_power_w": float, "discrete_starts": int, "random_trials": int,
    }
    for name, typ in scalar_types.items():
        if name in d:
            value = d[name]
            if typ is int and isinstance(value, float) and not value.is_integer():
                issues.append((name, "must be an integer"))
                continue
            try:
                kwargs[name] = typ(value)
            except (TypeError, ValueError):
                issues.append((name, f"must be of type {typ.__name__}"))
    if issues:
        raise ConfigError(issues)

    cfg = SystemConfig(
        bs=bs,
        ris=ris,
        ue_positions=ue,
        obstruction=np.asarray(obstruction, dtype=int) if len(obstruction) else np.zeros(0, int),
        fc=fc,
        rate_req=rate,
        peb_threshold=peb,
        ris_parts=int(d["ris"].get("parts", 1)),
        extras=copy.deepcopy(d.get("extras", {})),
        **kwargs,
    )
    return cfg.validate()


def load_config(path):
    """Load a JSON configuration file.

    JSON syntax errors are reported as a :class:`ConfigError` naming the
    line and column.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno} column {exc.colno}", exc.msg)]) from exc
    return config_from_dict(d)


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def apply_overrides(d, overrides):
    """Apply ``dotted.key=value`` overrides to a config dict (copy).

    Values are parsed as JSON when possible, else kept as strings. Every
    key must already exist in ``d`` (or be a documented optional key).
    """
    out = copy.deepcopy(d)
    for item in overrides:
        if "=" not in item:
            raise ConfigError([(item, "override must look like key=value")])
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError([(key, "unknown configuration key")])
            node = node[p]
        leaf = parts[-1]
        allowed = _TOP_KEYS if node is out else _ARRAY_KEYS
        if not isinstance(node, dict) or (leaf not in node and leaf not in allowed):
            raise ConfigError([(key, "unknown configuration key")])
        node[leaf] = value
    return out
