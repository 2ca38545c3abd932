"""
One year of joint rating moves
==============================

Builds the six-class parameter preset, looks at the tendency probabilities
and shows how the default probability of a single firm shifts with the
systematic tendency of its class.
"""

import numpy as np

from cmc_credit.model import FirmState, mixture_default_probability, step_joint, tendency_bits
from cmc_credit.presets import RATING_LABELS_6, sp6_model_params

params = sp6_model_params()
print("classes:", RATING_LABELS_6)
print("P(non-deteriorating move) per class:", np.round(params.p.p_plus, 4))

# Tendency vectors are stored densely; bit i-1 of the index is chi_i.
bits = tendency_bits(params.m)
top = np.argsort(params.chi.mass)[::-1][:4]
for c in top:
    print(f"  chi={bits[c].astype(int)}  mass={params.chi.mass[c]:.4f}")

# A BBB firm in manufacturing: conditional default probability given its class tendency
bbb = FirmState(rating=3, sector=2)
good = mixture_default_probability(params, bbb, np.ones(params.m, int))
bad = mixture_default_probability(params, bbb, np.zeros(params.m, int))
print(f"BBB default prob: {params.p.p[2, -1]:.5f} unconditional, {good:.5f} good year, {bad:.5f} bad year")

# Sample 200k joint moves of two BBB firms and compare the joint default rate
# with what independent firms would give.
draws = step_joint(params, [bbb, FirmState(3, 5)], rng=1, size=200_000)
both = np.mean((draws == 6).all(axis=1))
print(f"both default: {both:.2e}  vs independent {params.p.p[2, -1] ** 2:.2e}")
