"""Hard versus virtual evidence on a two-variable network.

A classifier that says "probably wet" should move the posterior on rain by
less than actually observing wet grass — and by exactly how much less is
fixed once the classifier's output vector is treated as a likelihood over
the states of `wet`. This script walks through the prior, hard observation,
two virtual observations of different strength, and a contradictory case.

Run: python3 demos/01_virtual_evidence.py
"""

import numpy as np

from bnfuse import (
    Evidence,
    InconsistentEvidenceError,
    NetworkSpec,
    TableCpd,
    VariableSpec,
    posterior,
)

net = NetworkSpec(
    variables=(
        VariableSpec("rain", ("no", "yes")),
        VariableSpec("wet", ("no", "yes"), role="symptom"),
    ),
    edges=(("rain", "wet"),),
    cpds={
        "rain": TableCpd(np.array([[0.8, 0.2]])),
        # wet is impossible without rain: a real structural zero
        "wet": TableCpd(np.array([[1.0, 0.0], [0.2, 0.8]])),
    },
)


def show(label, dist):
    pairs = ", ".join(f"{s}={p:.4f}" for s, p in zip(("no", "yes"), dist.probs))
    print(f"{label:<38} {pairs}")


show("prior P(rain)", posterior(net, Evidence(), "rain"))

# Hard evidence: the grass is definitely wet.
show(
    "P(rain | wet=yes)",
    posterior(net, Evidence(hard={"wet": "yes"}), "rain"),
)

# Virtual evidence: a classifier reports likelihoods over wet's states.
# The vector (0.3, 0.7) means 'wet' is 0.7/0.3 times as likely as 'dry'
# under what the classifier saw; it need not sum to one.
show(
    "P(rain | classifier 70:30 for wet)",
    posterior(net, Evidence(virtual={"wet": np.array([0.3, 0.7])}), "rain"),
)
show(
    "P(rain | classifier 95:5 for wet)",
    posterior(net, Evidence(virtual={"wet": np.array([0.05, 0.95])}), "rain"),
)

# A one-hot likelihood reproduces the hard observation exactly.
show(
    "P(rain | one-hot virtual on wet)",
    posterior(net, Evidence(virtual={"wet": np.array([0.0, 1.0])}), "rain"),
)

# Scaling a likelihood vector changes nothing: only ratios matter.
show(
    "P(rain | scaled likelihood x100)",
    posterior(net, Evidence(virtual={"wet": np.array([30.0, 70.0])}), "rain"),
)

# Contradiction: wet without rain has probability zero under the model, so
# a classifier *certain* of wet while rain is known absent leaves nothing
# to normalize — an explicit error, not a silent NaN.
try:
    posterior(
        net,
        Evidence(hard={"rain": "no"}, virtual={"wet": np.array([0.0, 1.0])}),
        "wet",
    )
except InconsistentEvidenceError as exc:
    print(f"\ncontradictory evidence -> {exc}")
