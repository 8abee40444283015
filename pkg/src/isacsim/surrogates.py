"""Convexification primitives: Taylor lower bounds, bilinear bounds, penalties.

All bounds coincide with their exact counterparts at the expansion point. The
functions broadcast over leading axes so batched evaluation works unchanged.
"""

from __future__ import annotations

import numpy as np


def taylor_lb_quadratic(c: np.ndarray, x: np.ndarray, x_n: np.ndarray):
    """Tangent lower bound of |c^T x|^2 at x_n.

    Returns |c^T x_n|^2 + 2 Re{(c^T x_n)* c^T (x - x_n)}; the gap to the exact
    value is |c^T (x - x_n)|^2 >= 0, zero at x = x_n. ``x`` may carry leading
    batch axes.
    """
    c = np.asarray(c)
    u_n = np.asarray(x_n) @ c
    u = np.asarray(x) @ c
    return np.abs(u_n) ** 2 + 2.0 * np.real(np.conj(u_n) * (u - u_n))


def bilinear_upper(x, y, x_n, y_n):
    """Convex upper bound of x*y, tight at (x_n, y_n).

    From 4xy <= (x+y)^2 - 2(x_n-y_n)(x-y) + (x_n-y_n)^2; the gap is
    ((x-y) - (x_n-y_n))^2 / 4.
    """
    d_n = np.asarray(x_n) - np.asarray(y_n)
    return 0.25 * ((x + y) ** 2 - 2.0 * d_n * (x - y) + d_n**2)


def bilinear_lower(x, y, x_n, y_n):
    """Concave lower bound of x*y, tight at (x_n, y_n).

    From 4xy = (x+y)^2 - (x-y)^2 with the convex square replaced by its tangent
    at x_n + y_n; the gap is ((x+y) - (x_n+y_n))^2 / 4.
    """
    s_n = np.asarray(x_n) + np.asarray(y_n)
    return 0.25 * (2.0 * s_n * (x + y) - s_n**2 - (x - y) ** 2)


def linearized_binary_penalty(v, v_n):
    """Elementwise tangent overestimate of v(1-v) at v_n: (1 - 2 v_n) v + v_n^2."""
    v_n = np.asarray(v_n)
    return (1.0 - 2.0 * v_n) * np.asarray(v) + v_n**2


def pair_matrices(S: int):
    """Index pairs (s < s') and the sum/difference picking matrices.

    A_plus @ x gives x_s + x_s' per pair, A_minus @ x gives x_s - x_s'.
    """
    pairs = [(s, t) for s in range(S) for t in range(s + 1, S)]
    P = len(pairs)
    A_plus = np.zeros((P, S))
    A_minus = np.zeros((P, S))
    for p, (s, t) in enumerate(pairs):
        A_plus[p, s] = A_plus[p, t] = 1.0
        A_minus[p, s] = 1.0
        A_minus[p, t] = -1.0
    return pairs, A_plus, A_minus


def signed_pair_bound(C, x, x_n, A_plus, A_minus, side: str):
    """Bound on sum_p C_p * x_s x_s' over the pairs encoded by A_plus/A_minus.

    side='upper': positive coefficients take the convex upper bound, negative
    ones the concave lower bound, so the total is a convex upper bound on the
    pair sum. side='lower' mirrors this into a concave lower bound. ``x`` may
    be batched with shape (..., S); returns shape (...,).
    """
    C = np.asarray(C, dtype=float)
    if C.size == 0:
        return np.zeros(np.shape(x)[:-1])
    xp = np.asarray(x) @ A_plus.T
    xm = np.asarray(x) @ A_minus.T
    np_ = np.asarray(x_n) @ A_plus.T
    nm = np.asarray(x_n) @ A_minus.T
    ub = 0.25 * (xp**2 - 2.0 * nm * xm + nm**2)
    lb = 0.25 * (2.0 * np_ * xp - np_**2 - xm**2)
    if side == "upper":
        chosen = np.where(C > 0, ub, lb)
    elif side == "lower":
        chosen = np.where(C > 0, lb, ub)
    else:
        raise ValueError("side must be 'upper' or 'lower'")
    return chosen @ C


def tangent_square_lb(x, x_n):
    """Tangent lower bound of x^2 at x_n: 2 x_n x - x_n^2 (elementwise)."""
    x_n = np.asarray(x_n)
    return 2.0 * x_n * np.asarray(x) - x_n**2
