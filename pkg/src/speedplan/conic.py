"""Solver-agnostic second-order cone program container.

A program is a linear objective over ``num_vars`` variables with linear
equality rows, linear inequality rows and rotated-cone memberships
``a^2 <= b c`` stored as ``||(2a, b - c)|| <= b + c``.  The JSON layout
written by :meth:`ConicProgram.to_json` is::

    {
      "format": "speedplan-conic/1",
      "num_vars": int,
      "var_index": [{"role": str, "stage": int, "id": int}, ...],
      "objective": [float, ...],                     # length num_vars
      "equalities":   [{"coefs": [[id, val], ...], "rhs": float, "family": str}, ...],
      "inequalities": [{"coefs": [[id, val], ...], "rhs": float, "sense": "<=" | ">=",
                        "family": str}, ...],
      "cones": [{"a": AFFINE, "b": AFFINE, "c": AFFINE, "family": str}, ...]
    }

where ``AFFINE = {"coefs": [[id, val], ...], "const": float}``, plus
``"scales": {role: factor}`` giving physical value = factor * solver value.
Stages are 0-based variable slots.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np


@dataclass(frozen=True)
class Affine:
    coefs: tuple = ()
    const: float = 0.0

    @classmethod
    def var(cls, idx, scale=1.0):
        return cls(((int(idx), float(scale)),), 0.0)

    @classmethod
    def constant(cls, value):
        return cls((), float(value))

    @classmethod
    def coerce(cls, value):
        return value if isinstance(value, Affine) else cls.constant(value)

    def value(self, x):
        return self.const + sum(c * x[i] for i, c in self.coefs)

    def to_dict(self):
        return {"coefs": [[i, c] for i, c in self.coefs], "const": self.const}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple((int(i), float(c)) for i, c in d["coefs"]), float(d["const"]))


@dataclass(frozen=True)
class Row:
    coefs: tuple
    rhs: float
    sense: str = "=="
    family: str = ""

    def lhs(self, x):
        return sum(c * x[i] for i, c in self.coefs)

    def violation(self, x):
        d = self.lhs(x) - self.rhs
        if self.sense == "==":
            return abs(d)
        if self.sense == "<=":
            return max(d, 0.0)
        return max(-d, 0.0)

    def scale(self, x):
        return max(1.0, abs(self.rhs), max((abs(c * x[i]) for i, c in self.coefs), default=0.0))

    def to_dict(self):
        d = {"coefs": [[i, c] for i, c in self.coefs], "rhs": self.rhs, "family": self.family}
        if self.sense != "==":
            d["sense"] = self.sense
        return d

    @classmethod
    def from_dict(cls, d, sense="=="):
        return cls(tuple((int(i), float(c)) for i, c in d["coefs"]), float(d["rhs"]),
                   d.get("sense", sense), d.get("family", ""))


@dataclass(frozen=True)
class SocBlock:
    """``||(2a, b - c)||_2 <= b + c``, equivalent to ``a^2 <= b c`` with ``b, c >= 0``."""

    a: Affine
    b: Affine
    c: Affine
    family: str = ""

    def standard_form(self, x):
        a, b, c = self.a.value(x), self.b.value(x), self.c.value(x)
        return b + c, 2.0 * a, b - c

    def violation(self, x):
        head, t1, t2 = self.standard_form(x)
        return max(math.hypot(t1, t2) - head, 0.0)

    def scale(self, x):
        return max(1.0, abs(self.b.value(x)) + abs(self.c.value(x)))

    def to_dict(self):
        return {"a": self.a.to_dict(), "b": self.b.to_dict(), "c": self.c.to_dict(),
                "family": self.family}

    @classmethod
    def from_dict(cls, d):
        return cls(Affine.from_dict(d["a"]), Affine.from_dict(d["b"]), Affine.from_dict(d["c"]),
                   d.get("family", ""))


def soc_encode(a, b, c, family=""):
    """Rotated-cone block for ``a^2 <= b c`` (numbers are lifted to constants)."""
    return SocBlock(Affine.coerce(a), Affine.coerce(b), Affine.coerce(c), family)


@dataclass
class ConicProgram:
    num_vars: int = 0
    objective: np.ndarray = None
    equalities: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)
    soc_blocks: list = field(default_factory=list)
    var_index: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)

    def add_var(self, role, stage):
        key = (role, int(stage))
        if key in self.var_index:
            raise KeyError(f"variable {key} already exists")
        self.var_index[key] = self.num_vars
        self.num_vars += 1
        return self.num_vars - 1

    def idx(self, role, stage):
        return self.var_index[(role, int(stage))]

    def role_ids(self, role):
        stages = sorted(s for r, s in self.var_index if r == role)
        return np.array([self.var_index[(role, s)] for s in stages], dtype=int)

    def add_eq(self, coefs, rhs, family):
        self.equalities.append(Row(tuple(coefs), float(rhs), "==", family))

    def add_ineq(self, coefs, sense, rhs, family):
        if sense not in ("<=", ">="):
            raise ValueError(sense)
        self.inequalities.append(Row(tuple(coefs), float(rhs), sense, family))

    def add_cone(self, block):
        self.soc_blocks.append(block)

    def objective_value(self, x):
        return float(np.dot(self.objective, x))

    def max_violations(self, x, relative=True):
        """Largest (optionally scale-relative) violation per constraint family."""
        out = {}
        rows = [*self.equalities, *self.inequalities, *self.soc_blocks]
        for r in rows:
            v = r.violation(x)
            if relative:
                v /= r.scale(x)
            out[r.family] = max(out.get(r.family, 0.0), v)
        return out

    def to_dict(self):
        return {
            "format": "speedplan-conic/1",
            "num_vars": self.num_vars,
            "var_index": [{"role": r, "stage": s, "id": i}
                          for (r, s), i in sorted(self.var_index.items(), key=lambda kv: kv[1])],
            "objective": [float(v) for v in self.objective],
            "equalities": [r.to_dict() for r in self.equalities],
            "inequalities": [r.to_dict() for r in self.inequalities],
            "cones": [b.to_dict() for b in self.soc_blocks],
            "scales": dict(self.scales),
        }

    def to_json(self, path=None, indent=None):
        text = json.dumps(self.to_dict(), indent=indent)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        prog = cls(num_vars=int(d["num_vars"]), objective=np.array(d["objective"], dtype=float))
        prog.var_index = {(e["role"], int(e["stage"])): int(e["id"]) for e in d["var_index"]}
        prog.equalities = [Row.from_dict(r) for r in d["equalities"]]
        prog.inequalities = [Row.from_dict(r, sense=r["sense"]) for r in d["inequalities"]]
        prog.soc_blocks = [SocBlock.from_dict(b) for b in d["cones"]]
        prog.scales = {k: float(v) for k, v in d.get("scales", {}).items()}
        return prog

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))
