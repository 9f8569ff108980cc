"""Built-in synthetic SEMs with their causal graphs and unfair pathways."""
from __future__ import annotations

from dataclasses import dataclass

from causal.graph import FEATURE, LATENT, OUTCOME, SENSITIVE, CausalGraph, PathwaySet
from causal.sem import NoiseSpec, Sem, StructuralEquation

LOGISTIC_OUTCOME = "bernoulli(sigmoid(-10 + 5 * A + Q + D + M))"


@dataclass(frozen=True)
class Preset:
    name: str
    sem: Sem
    outcome: StructuralEquation
    pi: PathwaySet
    description: str


def hiring_graph() -> CausalGraph:
    """A (gender), Q (qualification), D (department choice), M (score) → Y."""
    return CausalGraph.from_roles(
        {"A": SENSITIVE, "Q": FEATURE, "D": FEATURE, "M": FEATURE, "Y": OUTCOME},
        [("A", "D"), ("A", "M"), ("A", "Y"), ("Q", "D"), ("Q", "M"), ("Q", "Y"),
         ("D", "Y"), ("M", "Y")],
    )


def hiring_pathways() -> PathwaySet:
    return PathwaySet.of([("A", "Y"), ("A", "D", "Y")])


def latent_graph() -> CausalGraph:
    return CausalGraph.from_roles(
        {"A": SENSITIVE, "H": LATENT, "R": FEATURE, "M": FEATURE, "Y": OUTCOME},
        [("A", "R"), ("A", "M"), ("A", "Y"), ("H", "R"), ("H", "Y"),
         ("R", "M"), ("R", "Y"), ("M", "Y")],
    )


def _hiring_outcome() -> StructuralEquation:
    return StructuralEquation.of("Y", ("A", "Q", "D", "M"), LOGISTIC_OUTCOME)


def synth() -> Preset:
    """Multiplicative-noise hiring SEM."""
    graph = hiring_graph()
    sem = Sem(
        graph=graph,
        equations={
            "A": StructuralEquation.of("A", (), "U"),
            "Q": StructuralEquation.of("Q", (), "floor(U)"),
            "D": StructuralEquation.of("D", ("A", "Q"), "A + floor(0.5 * Q * U)"),
            "M": StructuralEquation.of("M", ("A", "Q"), "3 * A + 0.4 * Q * U"),
        },
        noise={
            "A": NoiseSpec.bernoulli(0.6),
            "Q": NoiseSpec.gaussian(2, 5),
            "D": NoiseSpec.truncated_gaussian(2, 1, 0.1, 3.0),
            "M": NoiseSpec.truncated_gaussian(3, 2, 0.1, 3.0),
            "Y": NoiseSpec.uniform(),
        },
    )
    return Preset("synth", sem, _hiring_outcome(), hiring_pathways(),
                  "Hiring SEM with multiplicative noise on D and M")


def synth_additive() -> Preset:
    graph = hiring_graph()
    sem = Sem(
        graph=graph,
        equations={
            "A": StructuralEquation.of("A", (), "U"),
            "Q": StructuralEquation.of("Q", (), "floor(U)"),
            "D": StructuralEquation.of("D", ("A", "Q"), "A + floor(0.1 * Q) + floor(U)"),
            "M": StructuralEquation.of("M", ("A", "Q"), "3 * A + floor(0.4 * Q) + floor(U)"),
        },
        noise={
            "A": NoiseSpec.bernoulli(0.6),
            "Q": NoiseSpec.gaussian(2.5, 5),
            "D": NoiseSpec.gaussian(1, 0.5),
            "M": NoiseSpec.gaussian(1, 0.5),
            "Y": NoiseSpec.uniform(),
        },
    )
    return Preset("synth-additive", sem, _hiring_outcome(), hiring_pathways(),
                  "Hiring SEM with additive noise only")


def synth_latent() -> Preset:
    """H is an unobserved confounder of R and Y; π is the direct edge."""
    graph = latent_graph()
    sem = Sem(
        graph=graph,
        equations={
            "A": StructuralEquation.of("A", (), "U"),
            "H": StructuralEquation.of("H", (), "U"),
            "R": StructuralEquation.of("R", ("A", "H"), "3 * A + floor(10 * H) + floor(U)"),
            "M": StructuralEquation.of("M", ("A", "R"), "A + R + floor(U)"),
        },
        noise={
            "A": NoiseSpec.bernoulli(0.6),
            "H": NoiseSpec.gaussian(1, 0.5),
            "R": NoiseSpec.gaussian(1, 0.5),
            "M": NoiseSpec.gaussian(1, 0.5),
            "Y": NoiseSpec.uniform(),
        },
    )
    outcome = StructuralEquation.of(
        "Y", ("A", "H", "R", "M"), "bernoulli(sigmoid(-10 + 5 * A + R + M + 10 * H))"
    )
    return Preset("synth-latent", sem, outcome, PathwaySet.of([("A", "Y")]),
                  "Latent-confounder SEM (H hidden from the data)")


def hiring_illustrative() -> Preset:
    """
    The small illustrative hiring model: D = A + U_D·Q, M = 3A + 0.5Q + U_M.

    Only the two equations are fixed; the noise laws and the outcome rule
    below are local choices.
    """
    graph = hiring_graph()
    sem = Sem(
        graph=graph,
        equations={
            "A": StructuralEquation.of("A", (), "U"),
            "Q": StructuralEquation.of("Q", (), "floor(U)"),
            "D": StructuralEquation.of("D", ("A", "Q"), "A + U * Q"),
            "M": StructuralEquation.of("M", ("A", "Q"), "3 * A + 0.5 * Q + U"),
        },
        noise={
            "A": NoiseSpec.bernoulli(0.5),
            "Q": NoiseSpec.gaussian(2, 5),
            "D": NoiseSpec.truncated_gaussian(1, 0.5, 0.1, 2.0),
            "M": NoiseSpec.gaussian(0, 1),
            "Y": NoiseSpec.uniform(),
        },
    )
    return Preset("fig1b-illustrative", sem, _hiring_outcome(), hiring_pathways(),
                  "Illustrative hiring model with multiplicative U_D")


PRESETS = {
    "synth": synth,
    "synth-additive": synth_additive,
    "synth-latent": synth_latent,
    "fig1b-illustrative": hiring_illustrative,
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"Unknown preset: {name}. Choose from {sorted(PRESETS)}") from None
