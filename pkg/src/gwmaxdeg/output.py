"""CSV/JSON emission with embedded run manifests.

Every file starts with (CSV) or contains (JSON) the manifest of the run that
produced it, so a file can be regenerated and compared byte for byte.
Floats are written with 17 significant digits in CSV and with Python's
shortest round-trip ``repr`` in JSON; both read back exactly.
"""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .asymptotics import RatioReport
from .exact import DistTable
from .global_law import GlobalLaw
from .montecarlo import SimSummary, WidthReport

MANIFEST_PREFIX = "# manifest: "


@dataclass
class RunManifest:
    spec: dict
    command: str
    parameters: dict
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "spec": self.spec,
            "parameters": self.parameters,
            "tolerances": self.tolerances,
            "seed": self.seed,
            "version": self.version,
            "outputs": self.outputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["spec"], d["command"], d["parameters"], d.get("tolerances", {}),
                   d.get("seed"), d.get("version", __version__), list(d.get("outputs", [])))


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool,)):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if hasattr(x, "item"):  # numpy scalars
        return _json_safe(x.item())
    return x


def _dumps(obj) -> str:
    return json.dumps(_json_safe(obj), indent=1, sort_keys=False, allow_nan=False) + "\n"


def _manifest_line(m: RunManifest) -> str:
    return MANIFEST_PREFIX + json.dumps(_json_safe(m.to_dict()), sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# renderers


def dist_table_csv(t: DistTable, m: RunManifest, law: GlobalLaw | None = None) -> str:
    buf = io.StringIO()
    buf.write(_manifest_line(m))
    buf.write(f"# target: {t.label}\n")
    for k, v in t.metadata.items():
        if not isinstance(v, (list, tuple)):
            buf.write(f"# {k}: {fmt(v)}\n")
    cols = ["r", "cdf", "pmf", "tail"]
    if law is not None:
        cols += ["iterations", "residual", "pmf_relerr"]
    buf.write(",".join(cols) + "\n")
    for i, row in enumerate(t.rows):
        vals = [row.r, row.cdf, row.pmf, row.tail]
        if law is not None:
            vals += [law.iterations[i], law.residuals[i], law.pmf_relerr[i]]
        buf.write(",".join(fmt(v) for v in vals) + "\n")
    return buf.getvalue()


def dist_table_json(t: DistTable, m: RunManifest, law: GlobalLaw | None = None) -> str:
    doc = {
        "manifest": m.to_dict(),
        "kind": "DistTable",
        "target": t.target,
        "horizon": t.horizon,
        "metadata": {k: v for k, v in t.metadata.items() if not isinstance(v, (list, tuple))},
        "columns": ["r", "cdf", "pmf", "tail"],
        "rows": [[r.r, r.cdf, r.pmf, r.tail] for r in t.rows],
    }
    if law is not None:
        doc["limit_mass_at_infinity"] = law.limit_mass_at_infinity
        doc["diagnostics"] = {
            "iterations": law.iterations,
            "residual": law.residuals,
            "pmf_relerr": law.pmf_relerr,
        }
    return _dumps(doc)


def ratio_report_csv(rep: RatioReport, m: RunManifest) -> str:
    buf = io.StringIO()
    buf.write(_manifest_line(m))
    buf.write(f"# regime: {rep.regime}\n")
    buf.write(f"# constant_claimed: {rep.constant_label} = {fmt(rep.constant_claimed)}\n")
    buf.write(f"# precision_floor_r: {fmt(rep.precision_floor_r)}\n")
    for s in rep.series:
        buf.write(f"# series: {s.name} kind={s.kind} target={fmt(s.target)} ok={fmt(s.passed)}\n")
        buf.write("r,numerator,denominator,ratio,bound_ok\n")
        for row in s.rows:
            buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def ratio_report_json(rep: RatioReport, m: RunManifest) -> str:
    doc = {
        "manifest": m.to_dict(),
        "kind": "RatioReport",
        "regime": rep.regime,
        "constant_claimed": rep.constant_claimed,
        "constant_label": rep.constant_label,
        "precision_floor_r": rep.precision_floor_r,
        "window": list(rep.window) if rep.window else None,
        "verdict": rep.verdict,
        "series": [
            {
                "name": s.name,
                "kind": s.kind,
                "target": s.target,
                "verdict": s.verdict,
                "columns": ["r", "numerator", "denominator", "ratio", "bound_ok"],
                "rows": [list(row) for row in s.rows],
            }
            for s in rep.series
        ],
    }
    return _dumps(doc)


def sim_summary_csv(s: SimSummary, m: RunManifest, width: WidthReport | None = None) -> str:
    buf = io.StringIO()
    buf.write(_manifest_line(m))
    buf.write(f"# censor_rate: {fmt(s.censor_rate)}\n")
    for k, v in s.status_counts.items():
        buf.write(f"# {k}: {v}\n")
    for k, v in s.excluded.items():
        buf.write(f"# excluded {k}: {v}\n")
    for note in s.notes:
        buf.write(f"# note: {note}\n")
    buf.write("target,r,count,estimate,stderr,z\n")
    for c in s.cells:
        buf.write(",".join([c.target, fmt(c.r), fmt(c.count), fmt(c.estimate), fmt(c.stderr), fmt(c.z)]) + "\n")
    return buf.getvalue()


def sim_summary_json(s: SimSummary, m: RunManifest, width: WidthReport | None = None) -> str:
    doc = {
        "manifest": m.to_dict(),
        "kind": "SimSummary",
        "censor_rate": s.censor_rate,
        "status_counts": s.status_counts,
        "excluded": s.excluded,
        "notes": s.notes,
        "max_abs_z": s.max_abs_z,
        "columns": ["target", "r", "count", "trials", "undecided", "estimate", "stderr", "exact", "z"],
        "rows": [[c.target, c.r, c.count, c.trials, c.undecided, c.estimate, c.stderr, c.exact, c.z]
                 for c in s.cells],
    }
    return _dumps(doc)


# ---------------------------------------------------------------------------
# files


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def read_manifest(path: str | os.PathLike) -> RunManifest:
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith(MANIFEST_PREFIX):
        line = text.splitlines()[0][len(MANIFEST_PREFIX):]
        return RunManifest.from_dict(json.loads(line))
    doc = json.loads(text)
    if "manifest" in doc:
        return RunManifest.from_dict(doc["manifest"])
    return RunManifest.from_dict(doc)
