"""Golden-file regression runner over a directory of ``.palps`` models.

For a model ``NAME.palps`` the ``golden/`` subdirectory may hold

* ``NAME.stt.txt``, ``NAME.named-stt.txt``, ``NAME.eqs.txt``: emitted tables
  and equations,
* ``NAME.render.palps``: the canonical rendering,
* ``NAME.compare.json``: settings of a small mean-field versus Monte Carlo
  comparison (``seed``, ``replicas``, ``steps``, ``scale``, ``threshold``).
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .dsl import render
from .export import write_atomic
from .meanfield import evaluate
from .montecarlo import RunConfig, compare, ensemble
from .pipeline import compile_file

ARTIFACTS = ("stt.txt", "named-stt.txt", "eqs.txt", "render.palps")


def artifacts(path: Union[str, Path]) -> dict[str, str]:
    compiled = compile_file(path)
    return {
        "stt.txt": compiled.stt_text(),
        "named-stt.txt": compiled.stt_text("named"),
        "eqs.txt": compiled.equations_text(),
        "render.palps": render(compiled.spec),
    }


@dataclass
class ModelResult:
    name: str
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass
class CorpusReport:
    results: list[ModelResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def render(self) -> str:
        lines = []
        for r in self.results:
            lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
            lines += [f"  {n}" for n in r.notes]
            for f in r.failures:
                lines += ["  " + line for line in f.rstrip("\n").split("\n")]
        return "\n".join(lines) + "\n"


def _diff(expected: str, actual: str, name: str) -> str:
    first = next(
        (a for e, a in zip(expected.splitlines(), actual.splitlines()) if e != a),
        "(length differs)",
    )
    diff = difflib.unified_diff(
        expected.splitlines(keepends=True), actual.splitlines(keepends=True),
        fromfile=f"golden/{name}", tofile=f"generated/{name}",
    )
    return f"golden {name} differs; first differing line: {first}\n" + "".join(diff)


def run_model(path: Path, update: bool = False) -> ModelResult:
    result = ModelResult(path.stem)
    golden_dir = path.parent / "golden"
    try:
        produced = artifacts(path)
    except Exception as exc:  # report and move on to the next model
        result.failures.append(f"compilation failed: {exc}")
        return result
    for suffix, text in produced.items():
        golden = golden_dir / f"{path.stem}.{suffix}"
        if update:
            golden_dir.mkdir(exist_ok=True)
            write_atomic(golden, text)
            continue
        if not golden.exists():
            result.notes.append(f"no golden {golden.name}")
            continue
        expected = golden.read_text(encoding="utf-8")
        if expected != text:
            result.failures.append(_diff(expected, text, golden.name))
    settings_path = golden_dir / f"{path.stem}.compare.json"
    if settings_path.exists():
        settings = json.loads(settings_path.read_text(encoding="utf-8"))
        compiled = compile_file(path)
        config = RunConfig(settings["seed"], settings["steps"], settings["replicas"], settings["scale"])
        mf = evaluate(compiled.table, compiled.init * config.scale, config.steps)
        report = compare(mf, ensemble(compiled.model, compiled.space, config))
        note = f"compare: max relative error {report.max_error:.5f} (threshold {settings['threshold']})"
        result.notes.append(note)
        if report.max_error > settings["threshold"]:
            result.failures.append(f"{note} exceeds the threshold")
        if not report.aligned:
            result.failures.append("compare: mean-field and ensemble phases are not aligned")
    return result


def corpus_run(directory: Union[str, Path] = "corpus", update: bool = False) -> CorpusReport:
    directory = Path(directory)
    models = sorted(directory.glob("*.palps"))
    if not models:
        raise FileNotFoundError(f"no .palps models in {directory}")
    return CorpusReport([run_model(p, update) for p in models])
