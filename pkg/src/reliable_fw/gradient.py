"""Recursive-momentum (STORM) gradient estimates."""
import math
from dataclasses import dataclass

import numpy as np


class TokenMismatchError(ValueError):
    """The two evaluations of a STORM step used different samples."""


@dataclass
class StormState:
    g_prev: np.ndarray
    x_prev: np.ndarray
    t: int = 0
    schedule: str = ""


def storm_init(G0, x0, schedule=""):
    """Start the recursion with the single sample ``G_0(x_0)``."""
    g0 = np.array(G0, dtype=float)
    return g0.copy(), StormState(g0.copy(), np.array(x0, dtype=float), 0, schedule)


def storm_update(state, G_xt, G_xprev, rho, x_t, token_xt=None, token_xprev=None):
    """``g_t = G_t(x_t) + (1 - rho) (g_{t-1} - G_t(x_{t-1}))``.

    ``token_xt`` and ``token_xprev`` identify the samples behind the two
    evaluations; when given they must be the same token.
    """
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0, 1]")
    if token_xt is not None or token_xprev is not None:
        if token_xt is None or token_xprev is None or token_xt != token_xprev:
            raise TokenMismatchError("STORM step evaluated with two different samples")
    G_xt = np.asarray(G_xt, dtype=float)
    if rho == 1.0:
        g = G_xt.copy()
    else:
        g = G_xt + (1.0 - rho) * (state.g_prev - np.asarray(G_xprev, dtype=float))
    state.g_prev = g.copy()
    state.x_prev = np.array(x_t, dtype=float)
    state.t += 1
    return g


def storm_error_bound(t, alpha, L0, diameter, sigma0, delta):
    """High-probability bound on ``|g_t - grad f(x_t)|`` for ``rho_t = (t+2)^-alpha``."""
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    c = 3.0 ** alpha
    return (2.0 / (t + 2) ** (alpha / 2.0)
            * (2.0 * L0 * diameter + c * sigma0 / (c - 1.0))
            * math.sqrt(2.0 * math.log(4.0 / delta)))
