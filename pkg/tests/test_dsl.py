from fractions import Fraction

import pytest

from spalps.dsl import ModelError, ParseError, check, parse, parse_file, render, validate
from spalps.terms import Choice, Cond, In, NbChoice, Offset, Out, Prefix, Ref

BASE = """
param p = 1/2
habitat ring(3)
species a {
  process A = tick . A
}
system { A @ 1 * 2 }
"""


def model(body: str, header: str = "param p = 1/2\nhabitat ring(3)\n") -> str:
    return header + body


def codes(text: str) -> list[str]:
    return [d.code for d in check(parse(text)) if d.is_error]


def warning_codes(text: str) -> list[str]:
    return [d.code for d in check(parse(text)) if not d.is_error]


def test_parse_basic_model():
    spec = parse(BASE)
    assert spec.param_values == {"p": Fraction(1, 2)}
    assert spec.habitat.m == 3
    assert [s.name for s in spec.species] == ["a"]
    assert spec.system[0].count == 2 and spec.system[0].species == "a"


def test_parse_corpus_terms(corpus_dir):
    spec = parse_file(corpus_dir / "dengue.palps")
    defs = spec.definitions()
    assert isinstance(defs["W"], Cond) and defs["W"].action == In("infect")
    assert isinstance(defs["s"], Cond) and defs["s"].action == Out("infect")
    assert isinstance(defs["W1"], NbChoice)
    assert isinstance(defs["E"], Choice)
    ring = parse_file(corpus_dir / "ring.palps")
    assert ring.definitions()["R2"] == Prefix(ring.definitions()["R2"].action, Ref("R4"))
    assert ring.definitions()["R2"].action.target == Offset(1)
    assert spec.restricted == ("infect",)


def test_graph_habitat():
    spec = parse(
        "habitat graph { node a; node b; node c; a -- b; b -- c }\n"
        "species x { process X = pchoice over neighbors { go it . X } }\n"
        "system { X @ b * 4 }\n"
    )
    assert spec.habitat.kind == "graph"
    assert spec.habitat.m == 3
    assert spec.habitat.degree(spec.habitat.names.index("b")) == 2
    validate(spec)


@pytest.mark.parametrize(
    "text, code",
    [
        ("habitat ring(3)\nspecies a { process A = tick . A }\nsystem { A @ 1 * 1.5.2 }", None),
        ("species a { process A = tick . A }\nsystem { A @ 1 * 1 }", "missing-habitat"),
        ("habitat ring(3)\nspecies a { process A = tick . }\nsystem { }", None),
    ],
)
def test_parse_errors_have_positions(text, code):
    with pytest.raises(ParseError) as info:
        parse(text, "m.palps")
    diag = info.value.diagnostics[0]
    assert diag.format().startswith("m.palps:")
    assert "error[" in diag.format()
    if code:
        assert diag.code == code


@pytest.mark.parametrize(
    "body, code",
    [
        ("species a { process A = tick . B }\nsystem { A @ 1 * 1 }", "undefined-constant"),
        ("species a { process A = B\n process B = A }\nsystem { A @ 1 * 1 }", "unguarded-recursion"),
        ("species a { process A = pchoice { 1/2: A; 1/3: A } }\nsystem { A @ 1 * 1 }", "probability-sum"),
        ("species a { process A = pchoice { 0: A; 1: A } }\nsystem { A @ 1 * 1 }", "bad-probability"),
        ("species a { process A = pchoice { q: A; 1 - q: A } }\nsystem { A @ 1 * 1 }", "unbound-param"),
        ("species a { process A = go 9 . A }\nsystem { A @ 1 * 1 }", "bad-location"),
        ("species a { process A = go it . A }\nsystem { A @ 1 * 1 }", "unbound-it"),
        ("species a { process A = tick . A }\nsystem { A @ 1 * -1 }", "negative-count"),
        ("species a { process A = tick . A }\nsystem { A @ 7 * 1 }", "bad-location"),
        ("species a { process A = tick . A }\nspecies a { process B = tick . B }\nsystem { }", "duplicate-species"),
        ("species a { process A = tick . A\n process A = tick . A }\nsystem { }", "duplicate-process"),
        ("species a { process A = tick . B }\nspecies b { process B = tick . B }\nsystem { }", "cross-species"),
        ("species a { process A = c ? (A, A) }\nsystem { A @ 1 * 1 }", "unrestricted-cond"),
        ("species a { process A = tick . A }\nsystem { b: A @ 1 * 1 }", "unknown-species"),
    ],
)
def test_validation_errors(body, code):
    assert code in codes(model(body))
    with pytest.raises(ModelError):
        validate(parse(model(body)))


def test_duplicate_param():
    assert "duplicate-param" in codes("param p = 1/2\nparam p = 1/3\n" + BASE.replace("param p = 1/2\n", ""))


def test_offset_on_graph_rejected():
    text = (
        "habitat graph { node a; node b; a -- b }\n"
        "species x { process X = go myloc+1 . X }\nsystem { X @ a * 1 }\n"
    )
    assert "offset-non-ring" in codes(text)


def test_unguarded_cycle_message_names_the_cycle():
    text = model("species a { process A = par(B, B)\n process B = A }\nsystem { A @ 1 * 1 }")
    msgs = [d.message for d in check(parse(text)) if d.code == "unguarded-recursion"]
    assert msgs and "A -> B -> A" in msgs[0]


def test_probability_sum_message_reports_sum():
    text = model("species a { process A = pchoice { 1/2: A; 1/3: A } }\nsystem { A @ 1 * 1 }")
    msg = next(d.message for d in check(parse(text)) if d.code == "probability-sum")
    assert "5/6" in msg


def test_parametric_zero_is_a_warning():
    text = model("species a { process A = pchoice { p: tick . A; 1 - p: tick . A } }\nsystem { A @ 1 * 1 }",
                 header="param p = 1\nhabitat ring(3)\n")
    assert codes(text) == []
    assert "zero-probability" in warning_codes(text)


def test_free_channel_and_partner_warnings():
    text = model("species a { process A = out c . A }\nsystem { A @ 1 * 1 }")
    assert codes(text) == []
    assert "free-channel" in warning_codes(text)
    text = model(
        "species a { process A = out c . A }\nsystem { A @ 1 * 1 }\nrestrict { c }"
    )
    assert "no-partner" in warning_codes(text)


def test_diagnostics_sorted_by_position():
    text = model(
        "species a {\n process A = tick . X\n process B = tick . Y\n}\nsystem { A @ 1 * 1 }"
    )
    diags = check(parse(text))
    lines = [d.span.line for d in diags if d.span]
    assert lines == sorted(lines)


def test_render_round_trip_corpus(corpus_dir):
    for name in ("ring", "dengue"):
        spec = parse_file(corpus_dir / f"{name}.palps")
        text = render(spec)
        assert parse(text) == spec
        assert render(parse(text)) == text


def test_validated_model_carries_warnings():
    text = model("species a { process A = out c . A }\nsystem { A @ 1 * 1 }")
    vm = validate(parse(text))
    assert [w.code for w in vm.warnings] == ["free-channel"]
