"""Command-line entry point.

Exit codes: 0 when every pass flag holds, 1 when any statistical or algebraic
gate fails, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .scenarios import MODELS, SCENARIOS, EventRecord, ScenarioConfig, SummaryStats, run

SEED_ENV = "RELMEAS_SEED"
NORMALIZATION_TOL = 1e-6
CSV_HEADER = ("event", "stream", "observer", "step", "outcome")


class ConfigError(ValueError):
    pass


@dataclass
class OutputDocument:
    config: ScenarioConfig
    summary: SummaryStats
    events: Optional[list[EventRecord]] = None
    tool_version: str = field(default=__version__)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="relmeas", description="Event-state measurement simulator."
    )
    ap.add_argument("--scenario", choices=SCENARIOS, required=True)
    ap.add_argument("--model", choices=MODELS, default="vn")
    ap.add_argument("--a1", nargs=2, type=float, metavar=("RE", "IM"), default=(1.0, 0.0))
    ap.add_argument("--a2", nargs=2, type=float, metavar=("RE", "IM"), default=(0.0, 0.0))
    ap.add_argument("--n-atoms", type=int, default=1)
    ap.add_argument("--events", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--sigma", type=float, default=4.0)
    ap.add_argument("--detector", action="store_true", help="include the detector D in the vn chain")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--emit-events", action="store_true")
    ap.add_argument("--out", type=Path, default=None)
    return ap


def parse_config(argv: Sequence[str]) -> tuple[ScenarioConfig, argparse.Namespace]:
    """Validated configuration; ``ConfigError`` on bad values."""
    ap = _parser()
    try:
        args = ap.parse_args(list(argv))
    except SystemExit as exc:
        raise ConfigError("invalid arguments") from exc
    a1 = complex(*args.a1)
    a2 = complex(*args.a2)
    total = abs(a1) ** 2 + abs(a2) ** 2
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ConfigError(f"amplitudes are not normalized: |a1|^2 + |a2|^2 = {total:g}")
    # renormalize within the accepted tolerance so the model builders see unit norm
    scale = 1.0 / math.sqrt(total)
    seed = args.seed
    if seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            seed = int(env) if env is not None else 0
        except ValueError:
            raise ConfigError(f"{SEED_ENV} is not an integer: {env!r}") from None
    if args.format == "csv" and args.out is None:
        raise ConfigError("--format csv requires --out")
    try:
        config = ScenarioConfig(
            scenario=args.scenario,
            model=args.model,
            a1=a1 * scale,
            a2=a2 * scale,
            n_atoms=args.n_atoms,
            n_events=args.events,
            seed=seed,
            sigma=args.sigma,
            include_detector=args.detector,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config, args


def _encode(value) -> str:
    """JSON text with floats at 17 significant digits and complex as ``[re, im]``."""
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return json.dumps(str(value))
        return format(value, ".17g")
    if isinstance(value, complex):
        return _encode([value.real, value.imag])
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        items = (f"{json.dumps(str(k))}: {_encode(v)}" for k, v in value.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in value) + "]"
    if hasattr(value, "item"):  # numpy scalar
        return _encode(value.item())
    raise TypeError(f"cannot encode {type(value).__name__}")


def document_dict(doc: OutputDocument) -> dict:
    out = {"config": doc.config.to_dict(), "summary": doc.summary.to_dict()}
    if doc.events is not None:
        out["events"] = [e.to_dict() for e in doc.events]
    out["tool_version"] = doc.tool_version
    return out


def to_json(doc: OutputDocument) -> str:
    return _encode(document_dict(doc)) + "\n"


def _observers(doc: OutputDocument) -> list[str]:
    names = list(doc.summary.details.get("observers", []))
    for record in doc.events or []:
        for name in record.outcomes:
            if name not in names:
                names.append(name)
    return names


def to_csv(doc: OutputDocument) -> str:
    """One row per recorded draw; observers are written as their index in
    ``summary.details.observers``."""
    observers = _observers(doc)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for record in doc.events or []:
        for name, draws in record.outcomes.items():
            for step, outcome in draws:
                writer.writerow((record.event_index, record.stream_id, observers.index(name), step, outcome))
    return buf.getvalue()


def summary_path(path: Path) -> Path:
    return path.with_suffix(".summary.json")


def emit(doc: OutputDocument, fmt: str, destination=None) -> None:
    """Write ``doc`` as JSON (to a path or stream) or as CSV plus a sibling summary."""
    if fmt == "json":
        text = to_json(doc)
        if destination is None:
            sys.stdout.write(text)
        elif hasattr(destination, "write"):
            destination.write(text)
        else:
            Path(destination).write_text(text)
        return
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if destination is None or hasattr(destination, "write"):
        raise ValueError("csv output needs a file path")
    path = Path(destination)
    path.write_text(to_csv(doc))
    summary = OutputDocument(doc.config, doc.summary, None, doc.tool_version)
    doc_dict = document_dict(summary)
    doc_dict["summary"]["details"] = dict(doc_dict["summary"]["details"], observers=_observers(doc))
    summary_path(path).write_text(_encode(doc_dict) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config, args = parse_config(argv)
    except ConfigError as exc:
        print(f"relmeas: configuration error: {exc}", file=sys.stderr)
        return 2
    events, summary = run(config)
    want_events = args.emit_events or args.format == "csv"
    doc = OutputDocument(config, summary, events if want_events else None)
    try:
        emit(doc, args.format, args.out)
    except OSError as exc:
        print(f"relmeas: cannot write output: {exc}", file=sys.stderr)
        return 2
    return 0 if summary.passed else 1


if __name__ == "__main__":
    sys.exit(main())
