"""Block-structured semidefinite programs and their JSON form.

A problem minimizes ``sum_b <C_b, X_b>`` over blocks that are either
PSD matrices (``kind="psd"``) or nonnegative vectors (``kind="nonneg"``),
subject to scalar constraints ``sum_b <A_ib, X_b> (=|<=|>=) b_i``.

JSON schema (``schema: 1``)::

    {
      "schema": 1,
      "blocks": [{"kind": "psd", "size": 2}, {"kind": "nonneg", "size": 1}],
      "objective": {"0": [[1, 0], [0, 1]]},
      "constraints": [
        {"coefficients": {"0": [[1, 0], [0, 0]]}, "relation": "=", "rhs": 1.0}
      ]
    }

Block indices are string keys; absent blocks have zero coefficients.
PSD coefficients are full symmetric matrices, nonneg coefficients are
vectors.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError

RELATIONS = ("=", "<=", ">=")
STATUSES = ("optimal", "infeasible", "unbounded", "max_iter")


@dataclass
class Constraint:
    coefficients: dict
    relation: str
    rhs: float


@dataclass
class SdpProblem:
    """Standard-form SDP over PSD and nonnegative blocks (minimization)."""

    blocks: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)

    def add_block(self, kind, size):
        if kind not in ("psd", "nonneg"):
            raise InvalidArgumentError(f"unknown block kind {kind!r}")
        if int(size) != size or size < 1:
            raise InvalidArgumentError("block size must be a positive integer")
        self.blocks.append((kind, int(size)))
        return len(self.blocks) - 1

    def set_objective(self, block, coef):
        self.objective[block] = self._coef(block, coef)

    def add_constraint(self, coefficients, relation, rhs):
        if relation not in RELATIONS:
            raise InvalidArgumentError(f"relation must be one of {RELATIONS}")
        coefs = {int(b): self._coef(int(b), c) for b, c in coefficients.items()}
        self.constraints.append(Constraint(coefs, relation, float(rhs)))
        return len(self.constraints) - 1

    def _coef(self, block, coef):
        kind, size = self.blocks[block]
        arr = np.asarray(coef, dtype=float)
        if kind == "psd":
            if arr.shape != (size, size):
                raise InvalidArgumentError(f"block {block}: expected {size}x{size} coefficient")
        elif arr.shape != (size,):
            raise InvalidArgumentError(f"block {block}: expected length-{size} coefficient")
        return arr

    @property
    def n_constraints(self):
        return len(self.constraints)

    def check(self, tol=1e-12):
        """Raise if a PSD coefficient is not symmetric within ``tol``."""
        mats = list(self.objective.items())
        for con in self.constraints:
            mats += list(con.coefficients.items())
        for b, a in mats:
            if self.blocks[b][0] == "psd":
                scale = max(1.0, float(np.abs(a).max()))
                if np.abs(a - a.T).max() > tol * scale:
                    raise InvalidArgumentError(f"block {b}: coefficient matrix is not symmetric")
        return self

    def objective_value(self, x):
        return float(sum(np.sum(c * x[b]) for b, c in self.objective.items()))

    def constraint_values(self, x):
        return np.array([sum(np.sum(a * x[b]) for b, a in con.coefficients.items())
                         for con in self.constraints])

    # -- JSON ---------------------------------------------------------------
    def to_dict(self):
        return {
            "schema": 1,
            "blocks": [{"kind": k, "size": s} for k, s in self.blocks],
            "objective": {str(b): c.tolist() for b, c in self.objective.items()},
            "constraints": [
                {"coefficients": {str(b): a.tolist() for b, a in con.coefficients.items()},
                 "relation": con.relation, "rhs": con.rhs}
                for con in self.constraints
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema", 1) != 1:
            raise InvalidArgumentError(f"unsupported SDP schema {d.get('schema')!r}")
        prob = cls()
        for blk in d["blocks"]:
            prob.add_block(blk["kind"], blk["size"])
        for b, c in d.get("objective", {}).items():
            prob.set_objective(int(b), c)
        for con in d.get("constraints", []):
            prob.add_constraint(con["coefficients"], con["relation"], con["rhs"])
        return prob.check()

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SdpSolution:
    """Solver output.

    ``x`` and ``s`` hold one array per problem block; ``y`` one multiplier
    per constraint (dual objective ``b^T y``). ``gap`` is the relative
    duality gap ``|p - d| / (1 + |p| + |d|)``; residuals are relative to
    ``1 + ||b||`` (primal) and ``1 + ||C||`` (dual).
    """

    x: list
    y: np.ndarray
    s: list
    status: str
    primal_objective: float
    dual_objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "status": self.status,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "gap": self.gap,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
            "x": [np.asarray(b).tolist() for b in self.x],
            "y": np.asarray(self.y).tolist(),
            "diagnostics": self.diagnostics,
        }
