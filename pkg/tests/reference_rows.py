"""Reference power-table rows used as reproduction targets, plus a run cache."""
from functools import lru_cache

import numpy as np

from iutpower.simulation import Scenario, simulate_power

SIMS = 10_000
SEED = 17051949
RATE_KEYS_2 = ("IUT", "UIT", "m1", "m2", "e1", "e2", "aia")
RATE_KEYS_4 = ("IUT", "UIT", "m1", "m2", "m3", "m4", "e1", "e2", "e3", "e4", "aia")


def _vals(keys, text):
    return dict(zip(keys, map(float, text.split())))


# two endpoints, two samples: (rho, ma2, mb2) -> IUT UIT m1 m2 e1 e2 aia RR
TWO_ENDPOINT = {
    (0.9, 1.0, 10.0): "0.031 0.044 0.031 0.041 0.046 0.052 0.028 0.903",
    (0.9, 1.0, 18.0): "0.046 0.682 0.031 0.682 0.046 0.735 0.031 0.674",
    (0.9, 1.3, 18.0): "0.233 0.682 0.194 0.682 0.233 0.735 0.194 0.833",
    (0.9, 1.7, 18.0): "0.654 0.731 0.648 0.682 0.699 0.735 0.599 0.916",
    (0.7, 1.0, 10.0): "0.019 0.050 0.028 0.029 0.046 0.054 0.007 0.368",
    (0.7, 1.0, 18.0): "0.046 0.671 0.028 0.671 0.046 0.749 0.028 0.609",
    (0.7, 1.3, 18.0): "0.227 0.674 0.162 0.671 0.233 0.749 0.159 0.700",
    (0.7, 1.7, 18.0): "0.616 0.759 0.611 0.671 0.699 0.749 0.523 0.849",
    (0.09, 1.0, 10.0): "0.001 0.057 0.024 0.034 0.046 0.053 0.001 1.000",
    (0.09, 1.0, 18.0): "0.041 0.652 0.024 0.648 0.046 0.748 0.020 0.488",
    (0.09, 1.3, 18.0): "0.191 0.680 0.148 0.648 0.233 0.748 0.116 0.607",
    (0.09, 1.7, 18.0): "0.535 0.838 0.581 0.648 0.699 0.748 0.391 0.731",
}

# four endpoints, two samples, rho = 0.9: ma2 -> rates
FOUR_ENDPOINT = {
    1.0: "0.061 0.723 0.039 0.668 0.639 0.639 0.061 0.752 0.727 0.788 0.039 0.639",
    1.8: "0.659 0.793 0.734 0.685 0.664 0.663 0.803 0.757 0.739 0.800 0.597 0.906",
}

# three endpoints, three samples, rho = 0.9, mc2 = mc3 = 18: ma2 = ma3 -> IUT UIT aia
DUNNETT = {
    1.6: "0.28 0.80 0.196",
    1.9: "0.40 0.87 0.315",
}


def two_endpoint_expected(key):
    return _vals(RATE_KEYS_2 + ("RR",), TWO_ENDPOINT[key])


def four_endpoint_expected(ma2):
    return _vals(RATE_KEYS_4 + ("RR",), FOUR_ENDPOINT[ma2])


def dunnett_expected(ma):
    return _vals(("IUT", "UIT", "aia"), DUNNETT[ma])


def two_endpoint_scenario(rho, ma2, mb2, sims=SIMS):
    return Scenario((20, 20), [[1.0, 10.0], [ma2, mb2]], [1.0, 11.0], rho, sims=sims, seed=SEED)


def four_endpoint_scenario(ma2, sims=SIMS):
    return Scenario((20, 20), [[1.0, 2.0, 10.0, 0.1], [ma2, 5.0, 18.0, 0.5]],
                    [1.0, 4.0, 11.0, 0.5], 0.9, sims=sims, seed=SEED)


def dunnett_scenario(ma, sims=SIMS):
    means = [[1.0, 2.0, 10.0], [ma, 5.0, 18.0], [ma, 5.0, 18.0]]
    return Scenario((20, 20, 20), means, [1.0, 4.0, 11.0], 0.9, sims=sims, seed=SEED)


def rates(row):
    """PowerRow as a dict keyed like the reference columns."""
    out = {"IUT": row.iut, "UIT": row.uit, "aia": row.aia, "RR": row.rr}
    out.update({f"m{i + 1}": v for i, v in enumerate(row.m)})
    out.update({f"e{i + 1}": v for i, v in enumerate(row.e)})
    return out


@lru_cache(maxsize=None)
def run(kind, key):
    sc = {"two": lambda: two_endpoint_scenario(*key), "four": lambda: four_endpoint_scenario(key),
          "dunnett": lambda: dunnett_scenario(key)}[kind]()
    return simulate_power(sc)


def tolerance(p, sims=SIMS):
    return 3 * np.sqrt(p * (1 - p) / sims) + 0.005
