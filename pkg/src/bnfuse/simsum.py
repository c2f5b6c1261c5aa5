"""The bundled respiratory-clinic network profile.

Fourteen variables: nine tabular (five background, two diseases, one
treatment, one outcome count) and five symptoms. Structure:

    smoking -> copd; season -> common_cold;
    pneumonia <- {asthma, copd, season};
    dyspnea   <- {asthma, smoking, copd, pneumonia, hay_fever}   (Noisy-OR)
    cough     <- {asthma, smoking, copd, pneumonia, common_cold} (Noisy-OR)
    pain      <- {cough, pneumonia, copd, common_cold}           (Noisy-OR)
    fever     <- {pneumonia, common_cold}                        (table, ternary)
    nasal     <- {common_cold, hay_fever}                        (Noisy-OR)
    antibiotics <- {dyspnea, cough, pain, fever}                 (logistic)
    days <- {antibiotics, dyspnea, cough, pain, fever, nasal}    (trunc. Poisson,
                                                        one rate model per
                                                        antibiotics value)

The bundled JSON file carries reference ground-truth parameters used by the
synthetic generator and the ground-truth-parameters mode; they are plausible
invented values, not estimates from any released dataset.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .network import (
    LogisticCpd,
    NetworkSpec,
    NoisyOrCpd,
    TableCpd,
    TruncatedPoissonCpd,
    VariableSpec,
    require_valid,
    strip_parameters,
)

SYMPTOMS = ("dyspnea", "cough", "pain", "fever", "nasal")
TABULAR = (
    "asthma", "smoking", "copd", "hay_fever", "season",
    "pneumonia", "common_cold", "antibiotics", "days",
)

_BIN = ("no", "yes")


def build_ground_truth() -> NetworkSpec:
    """Construct the profile with its reference parameters in code."""
    variables = (
        VariableSpec("asthma", _BIN, "background"),
        VariableSpec("smoking", _BIN, "background"),
        VariableSpec("copd", _BIN, "background"),
        VariableSpec("hay_fever", _BIN, "background"),
        VariableSpec("season", ("winter", "summer"), "background"),
        VariableSpec("pneumonia", _BIN, "disease"),
        VariableSpec("common_cold", _BIN, "disease"),
        VariableSpec("antibiotics", _BIN, "treatment"),
        VariableSpec("days", tuple(str(k) for k in range(16)), "outcome"),
        VariableSpec("dyspnea", _BIN, "symptom"),
        VariableSpec("cough", _BIN, "symptom"),
        VariableSpec("pain", _BIN, "symptom"),
        VariableSpec("fever", ("none", "low", "high"), "symptom"),
        VariableSpec("nasal", _BIN, "symptom"),
    )
    edges = (
        ("smoking", "copd"),
        ("season", "common_cold"),
        ("asthma", "pneumonia"), ("copd", "pneumonia"), ("season", "pneumonia"),
        ("asthma", "dyspnea"), ("smoking", "dyspnea"), ("copd", "dyspnea"),
        ("pneumonia", "dyspnea"), ("hay_fever", "dyspnea"),
        ("asthma", "cough"), ("smoking", "cough"), ("copd", "cough"),
        ("pneumonia", "cough"), ("common_cold", "cough"),
        ("cough", "pain"), ("pneumonia", "pain"), ("copd", "pain"),
        ("common_cold", "pain"),
        ("pneumonia", "fever"), ("common_cold", "fever"),
        ("common_cold", "nasal"), ("hay_fever", "nasal"),
        ("dyspnea", "antibiotics"), ("cough", "antibiotics"),
        ("pain", "antibiotics"), ("fever", "antibiotics"),
        ("antibiotics", "days"), ("dyspnea", "days"), ("cough", "days"),
        ("pain", "days"), ("fever", "days"), ("nasal", "days"),
    )

    def binary_rows(p_yes: list[float]) -> np.ndarray:
        p = np.asarray(p_yes, dtype=float)
        return np.stack([1.0 - p, p], axis=1)

    cpds = {
        "asthma": TableCpd(binary_rows([0.30])),
        "smoking": TableCpd(binary_rows([0.40])),
        "copd": TableCpd(binary_rows([0.08, 0.35])),  # rows: smoking no, yes
        "hay_fever": TableCpd(binary_rows([0.25])),
        "season": TableCpd(np.array([[0.55, 0.45]])),  # winter, summer
        # rows over (asthma, copd, season) in row-major order
        "pneumonia": TableCpd(binary_rows([0.20, 0.10, 0.40, 0.30,
                                           0.35, 0.25, 0.55, 0.45])),
        "common_cold": TableCpd(binary_rows([0.45, 0.20])),  # winter, summer
        "dyspnea": NoisyOrCpd(lambdas=[0.50, 0.20, 0.60, 0.65, 0.25], leak=0.05),
        "cough": NoisyOrCpd(lambdas=[0.30, 0.35, 0.45, 0.70, 0.60], leak=0.07),
        "pain": NoisyOrCpd(lambdas=[0.25, 0.55, 0.30, 0.15], leak=0.03),
        "nasal": NoisyOrCpd(lambdas=[0.65, 0.55], leak=0.04),
        # rows over (pneumonia, common_cold); columns (none, low, high)
        "fever": TableCpd(np.array([
            [0.85, 0.10, 0.05],
            [0.50, 0.35, 0.15],
            [0.25, 0.30, 0.45],
            [0.15, 0.30, 0.55],
        ])),
        # indicator features: dyspnea_yes, cough_yes, pain_yes, fever_low, fever_high
        "antibiotics": LogisticCpd(
            intercept=-2.2, weights=[1.1, 0.8, 0.7, 0.9, 1.9]
        ),
        # one rate model per antibiotics value; features over the other parents
        "days": TruncatedPoissonCpd(
            intercepts=[0.45, 0.80],
            weights=[
                [0.25, 0.20, 0.15, 0.30, 0.55, 0.10],
                [0.20, 0.15, 0.10, 0.25, 0.45, 0.05],
            ],
            split_parent="antibiotics",
        ),
    }
    return require_valid(NetworkSpec(variables, edges, cpds))


def bundled_spec_text() -> str:
    return resources.files("bnfuse").joinpath("data/simsum.json").read_text("utf-8")


def simsum_profile() -> NetworkSpec:
    """The bundled profile with ground-truth parameters, from the shipped file."""
    return require_valid(NetworkSpec.from_json(bundled_spec_text()))


def simsum_template() -> NetworkSpec:
    """Same structure with family declarations only (ready for fitting)."""
    return strip_parameters(simsum_profile())
