"""Parse, validate, enumerate and compile a model in one call."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .dsl import ValidatedModel, parse, validate
from .meanfield import EquationSystem, derive_equations, render_equations
from .model import ModelSpec
from .statespace import StateSpace, build_init_matrix, enumerate_states
from .stt import TransitionTable, build_stt, lump_named, render_stt


@dataclass
class Compiled:
    model: ValidatedModel
    space: StateSpace
    table: TransitionTable
    init: np.ndarray

    @property
    def spec(self) -> ModelSpec:
        return self.model.spec

    @cached_property
    def equations(self) -> EquationSystem:
        return derive_equations(self.table, self.init)

    @cached_property
    def named(self) -> tuple[TransitionTable, list[int]]:
        return lump_named(self.table)

    def stt_text(self, view: str = "micro") -> str:
        if view == "named":
            table, kept = self.named
            return render_stt(table, kept)
        return render_stt(self.table)

    def equations_text(self) -> str:
        return render_equations(self.equations)


def compile_spec(spec: ModelSpec, params: Optional[Mapping[str, Fraction]] = None) -> Compiled:
    if params:
        spec = spec.with_params(params)
    model = validate(spec)
    space = enumerate_states(model)
    return Compiled(model, space, build_stt(model, space), build_init_matrix(model, space))


def compile_file(path: Union[str, Path], params: Optional[Mapping[str, Fraction]] = None) -> Compiled:
    text = Path(path).read_text(encoding="utf-8")
    return compile_spec(parse(text, str(path)), params)
