"""Reference inputs: the published S&P-based estimates and the iTraxx S9 setup.

These numbers come from a proprietary data set and 2008 market quotes; they
serve as realistic defaults and qualitative anchors, not as targets.
"""

from __future__ import annotations

import numpy as np

from .model import CouplingMatrix, ModelParams, TransitionMatrix, tendency_probabilities

RATING_LABELS_6 = ("AAA/AA", "A", "BBB", "BB/B", "CCC/CC/C", "D")

# S&P letter grades -> 5 non-default classes + default
SP_CLUBBING = {
    "AAA": 1, "AA": 1,
    "A": 2,
    "BBB": 3,
    "BB": 4, "B": 4,
    "CCC": 5, "CC": 5, "C": 5,
    "D": 6,
}

SIC_SECTORS = {
    1: "Mining and Construction",
    2: "Manufacturing",
    3: "Transportation, Technology, and Utility",
    4: "Trade",
    5: "Finance",
    6: "Services",
}

# As printed: rows sum to 0.9999..1.0001 because of rounding.
SP6_P = np.array([
    [0.9191, 0.0753, 0.0044, 0.0009, 0.0001, 0.0001],
    [0.0335, 0.8958, 0.0657, 0.0036, 0.0006, 0.0009],
    [0.0080, 0.0674, 0.8554, 0.0665, 0.0011, 0.0016],
    [0.0039, 0.0092, 0.0794, 0.8678, 0.0244, 0.0153],
    [0.0023, 0.0034, 0.0045, 0.1759, 0.6009, 0.2131],
])

SP6_Q = np.array([
    [0.1981, 0.0818, 0.0138, 0.0001, 0.1467, 0.3089],
    [0.3854e-7, 0.2008e-8, 0.0655, 0.8457e-6, 0.0609, 0.0356],
    [0.2732e-10, 0.3337e-6, 0.0344, 0.0005, 0.0494, 0.1752e-5],
    [0.0299, 0.0487, 0.1518, 0.0341, 0.0076, 0.0300],
    [0.0816, 0.1739, 0.4437, 0.4092, 0.2482e-5, 0.0000],
])

# binary key -> probability.  Read as a base-2 number, so the rightmost digit is chi_1;
# only this reading reproduces the marginals of SP6_P.
SP6_CHI_TABLE = {
    "00000": 0.0058, "00001": 0.0001, "00010": 0.0001, "00011": 0.2670e-4,
    "00100": 0.2743e-5, "00101": 0.4057e-6, "00110": 0.9493e-4, "00111": 0.0335,
    "01000": 0.3368e-4, "01001": 0.1811e-4, "01010": 0.0001, "01011": 0.2545e-6,
    "01100": 0.0081, "01101": 0.0005, "01110": 0.0312, "01111": 0.1335,
    "10000": 0.4814e-5, "10001": 0.2059e-4, "10010": 0.1526e-4, "10011": 0.2533e-5,
    "10100": 0.2776e-5, "10101": 0.9985e-6, "10110": 0.4697e-4, "10111": 0.1352e-5,
    "11000": 0.4803e-4, "11001": 0.0219, "11010": 0.0002, "11011": 0.0409,
    "11100": 0.0341, "11101": 0.0001, "11110": 0.0011, "11111": 0.6885,
}


def chi_table_to_mass(table: dict) -> np.ndarray:
    """Convert {"<binary string>": prob} into the dense vector indexed by ``int(key, 2)``."""
    m = len(next(iter(table)))
    mass = np.zeros(2 ** m)
    for key, prob in table.items():
        mass[int(key, 2)] = prob
    return mass


def sp6_transition_matrix(normalize: bool = True) -> TransitionMatrix:
    p = SP6_P / SP6_P.sum(axis=1, keepdims=True) if normalize else SP6_P
    return TransitionMatrix(p)


def sp6_model_params() -> ModelParams:
    """Published P (rows renormalised), Q and tendency table (repaired to P's marginals)."""
    from .estimation import repair_tendency

    p = sp6_transition_matrix()
    chi = repair_tendency(chi_table_to_mass(SP6_CHI_TABLE), tendency_probabilities(p))
    return ModelParams(p, CouplingMatrix(SP6_Q), chi, RATING_LABELS_6)


# iTraxx Europe S9 quotes of 31.03.2008 (mid spreads; equity quoted as 5% running + upfront)
ITRAXX_TRANCHES = ((0.00, 0.03), (0.03, 0.06), (0.06, 0.09), (0.09, 0.12), (0.12, 0.22))
ITRAXX_MATURITIES = (5, 7, 10)
ITRAXX_MID_SPREADS = {
    5: (0.05, 0.048, 0.0309, 0.0215, 0.0109),
    7: (0.05, 0.0563, 0.0352, 0.0237, 0.012),
    10: (0.05, 0.0679, 0.0397, 0.026, 0.0134),
}
ITRAXX_EQUITY_UPFRONT = {5: (0.394, 0.409), 7: (0.449, 0.458), 10: (0.494, 0.504)}  # (bid, ask)
TRANCHE_NAMES = ("equity", "mezzanine", "senior1", "senior2", "supersenior")

# Fair spreads reported for the model (5Y / 7Y / 10Y); qualitative anchors only.
ITRAXX_REFERENCE_FAIR_SPREADS = {
    5: (-0.0415, 0.0159, 0.0129, 0.0126, 0.0126),
    7: (-0.0238, 0.0175, 0.0107, 0.0099, 0.0099),
    10: (-0.0113, 0.0255, 0.0105, 0.0082, 0.0078),
}


def itraxx_portfolio(n_firms: int = 125, mix=(0.1, 0.5, 0.4), n_sectors: int = 6):
    """Deterministic investment-grade reference portfolio.

    Classes 1..3 (AAA/AA, A, BBB) in proportions ``mix``; sectors assigned
    round-robin.  Returns (ratings, sectors) arrays.
    """
    counts = np.floor(np.asarray(mix) * n_firms).astype(int)
    counts[-1] += n_firms - counts.sum()
    ratings = np.repeat(np.arange(1, len(mix) + 1), counts)
    sectors = np.arange(n_firms) % n_sectors + 1
    return ratings, sectors


def itraxx_tranche_specs(recovery: float = 0.4, upfront: str = "mid"):
    """The 15 tranche definitions (5 tranches x 3 maturities) as plain dicts."""
    specs = []
    for mat in ITRAXX_MATURITIES:
        for k, ((a, b), name) in enumerate(zip(ITRAXX_TRANCHES, TRANCHE_NAMES)):
            u = 0.0
            if k == 0:
                bid, ask = ITRAXX_EQUITY_UPFRONT[mat]
                u = {"bid": bid, "ask": ask, "mid": 0.5 * (bid + ask)}[upfront]
            specs.append({
                "name": f"{mat}Y/{name}",
                "attach": a,
                "detach": b,
                "spread": ITRAXX_MID_SPREADS[mat][k],
                "maturity": mat,
                "recovery": recovery,
                "upfront": u,
            })
    return specs
