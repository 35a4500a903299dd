import math

import numpy as np

from cefdist.cli import random_mixture
from cefdist.expfam import Family
from cefdist.minkdist import MixtureModel


def rand_mixture(family: Family, k: int, rng: np.random.Generator, *, total: float = 1.0) -> MixtureModel:
    m = random_mixture(family, k, rng)
    return m if total == 1.0 else m.scaled(total)


def rel_err(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale



def separation(a: MixtureModel, b: MixtureModel) -> float:
    """Relative squared L2 distance through the inner-product route (no cancellation-prone expansion)."""
    from cefdist.minkdist import log_inner_product, mixture_lp_norm

    na, nb = mixture_lp_norm(a, 2) ** 2, mixture_lp_norm(b, 2) ** 2
    return (na + nb - 2 * math.exp(log_inner_product(a, b))) / (na + nb)


def separated_pair(family: Family, rng: np.random.Generator, *, k=(1, 4), min_sep: float = 0.05):
    """Random pair whose distances are well conditioned relative to their norms.

    Distances are differences of quantities of the size of the norms, so their
    relative accuracy degrades as the mixtures approach each other.
    """
    while True:
        a = rand_mixture(family, int(rng.integers(*k)), rng)
        b = rand_mixture(family, int(rng.integers(*k)), rng)
        if separation(a, b) >= min_sep:
            return a, b
