"""Canonical text rendering of a :class:`ModelSpec`.

``parse(render(spec))`` is structurally equal to ``spec``.
"""

from __future__ import annotations

from ..model import ModelSpec
from ..terms import _frac_text, render_term


def _number(value) -> str:
    return ("-" if value < 0 else "") + _frac_text(abs(value))


def render(spec: ModelSpec) -> str:
    lines: list[str] = []
    for p in spec.params:
        lines.append(f"param {p.name} = {_number(p.value)}")
    lines.append(spec.habitat.render())
    for sp in spec.species:
        lines.append("")
        lines.append(f"species {sp.name} {{")
        for proc in sp.processes:
            lines.append(f"  process {proc.name} = {render_term(proc.body)}")
        lines.append("}")
    lines.append("")
    lines.append("system {")
    for e in spec.system:
        prefix = f"{e.species}: " if e.species is not None else ""
        lines.append(f"  {prefix}{render_term(e.term)} @ {e.location} * {e.count}")
    lines.append("}")
    lines.append("restrict { " + ", ".join(spec.restricted) + (" }" if spec.restricted else "}"))
    return "\n".join(lines) + "\n"
