"""Run configuration: one JSON document drives every subcommand.

Everything is explicit and seed-free; a config that round-trips through
to_dict/from_dict is guaranteed to produce byte-identical artifacts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .periodic_core import IntegratorSpec, PeriodicCoefficient

__all__ = ["RunConfig", "ENVELOPES"]

# Named envelope functions for growing-N schedules.
ENVELOPES = {
    "log": lambda x: np.log(np.e + np.abs(x)),
}


@dataclass
class RunConfig:
    """Coefficients, targets, and numeric knobs for a full run."""

    p: PeriodicCoefficient
    q: PeriodicCoefficient
    lambdas: list[float] = field(default_factory=list)
    mode: str = "finite"
    h_name: str | None = None
    a0: float = 1.0e4
    x_max: float = 2.0e4
    b: float = 0.0
    margin: float = 0.05
    band_edge_margin: float = 0.0
    rho_margin: float = 5.0
    taper_width: float = 1.0
    safety: float = 1.0
    xi0: float = float(np.pi / 2)
    ratio_policy: float | None = None
    rel_tol: float = 1.0e-8
    abs_tol: float = 1.0e-11
    scan_lo: float = 0.0
    scan_hi: float = 3.0
    scan_resolution: float = 0.01
    out_dir: str = "."

    def __post_init__(self):
        if self.mode not in ("finite", "growing"):
            raise ValueError(f"mode: {self.mode!r} is not finite/growing")
        if self.h_name is not None and self.h_name not in ENVELOPES:
            raise ValueError(
                f"h_name: {self.h_name!r} not one of {sorted(ENVELOPES)}")
        if self.mode == "growing" and self.h_name is None:
            raise ValueError("h_name: required when mode is growing")
        for key in ("a0", "x_max", "margin", "rho_margin", "taper_width",
                    "safety", "scan_resolution"):
            if getattr(self, key) <= 0.0:
                raise ValueError(f"{key}: must be positive")
        if self.x_max <= self.a0:
            raise ValueError("x_max: must exceed a0")
        if not 0.0 <= self.b < self.a0:
            raise ValueError("b: must satisfy 0 <= b < a0")
        if self.band_edge_margin < 0.0:
            raise ValueError("band_edge_margin: must be nonnegative")
        if self.ratio_policy is not None and self.ratio_policy < 1.0:
            raise ValueError("ratio_policy: must be >= 1")
        for key in ("rel_tol", "abs_tol"):
            val = getattr(self, key)
            if not 0.0 < val <= 1e-4:
                raise ValueError(f"{key}: must lie in (0, 1e-4]")
        if self.scan_hi <= self.scan_lo:
            raise ValueError("scan_hi: must exceed scan_lo")
        for i, lam in enumerate(self.lambdas):
            if not np.isfinite(lam):
                raise ValueError(f"lambdas[{i}]: not finite")

    def integrator_spec(self) -> IntegratorSpec:
        return IntegratorSpec(rel_tol=self.rel_tol, abs_tol=self.abs_tol)

    def envelope(self):
        return ENVELOPES[self.h_name] if self.h_name else None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["p"] = self.p.to_dict()
        doc["q"] = self.q.to_dict()
        doc["lambdas"] = [float(v) for v in self.lambdas]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"{sorted(unknown)[0]}: unknown config key")
        for key in ("p", "q"):
            if key not in doc:
                raise ValueError(f"{key}: missing coefficient block")
            doc[key] = PeriodicCoefficient.from_dict(doc[key])
        return cls(**doc)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
