"""Exact rational reference computations for discrete joints (sympy).

Written from the defining equations, independently of proxbridge.oracle:
conditionals are formed cell by cell, ranks and null spaces are exact.
"""

import itertools

import numpy as np
import sympy as sp


def rational_joint(rng, card_u, card_x, card_z, card_w, card_y=2, denom=7):
    """Random latent-structure joint with rational entries.

    Returns (exact tensor as a dict keyed by (u,x,a,z,w,y), float ndarray).
    """
    def simplex(k):
        ints = rng.integers(1, denom + 1, size=k)
        return [sp.Rational(int(v), int(ints.sum())) for v in ints]

    p_ux = simplex(card_u * card_x)
    p_z = {(u, x): simplex(card_z) for u in range(card_u) for x in range(card_x)}
    p_w = {(u, x): simplex(card_w) for u in range(card_u) for x in range(card_x)}
    p_a = {(u, x, z): sp.Rational(int(rng.integers(1, denom)), denom)
           for u in range(card_u) for x in range(card_x) for z in range(card_z)}
    p_y = {(u, x, a): simplex(card_y) for u in range(card_u) for x in range(card_x) for a in (0, 1)}
    exact = {}
    shape = (card_u, card_x, 2, card_z, card_w, card_y)
    arr = np.zeros(shape)
    for u, x, a, z, w, y in itertools.product(*map(range, shape)):
        pa = p_a[u, x, z] if a == 1 else 1 - p_a[u, x, z]
        val = p_ux[u * card_x + x] * p_z[u, x][z] * pa * p_w[u, x][w] * p_y[u, x, a][y]
        exact[u, x, a, z, w, y] = val
        arr[u, x, a, z, w, y] = float(val)
    return exact, shape, arr


def _marg(exact, shape, keep):
    """Sum out every axis not listed in ``keep`` (axis positions)."""
    out = {}
    for idx, val in exact.items():
        key = tuple(idx[i] for i in keep)
        out[key] = out.get(key, 0) + val
    return out


def outcome_system(exact, shape, a):
    """Rows per (z, x) with P(z,a,x) > 0; columns per (w, x), level-major."""
    _, cx, _, cz, cw, cy = shape
    p_xazw = _marg(exact, shape, (1, 2, 3, 4))
    p_xazwy = _marg(exact, shape, (1, 2, 3, 4, 5))
    rows, rhs, col_w = [], [], []
    for w, x in itertools.product(range(cw), range(cx)):
        col_w.append(sum(p_xazw.get((x, a, z, w), 0) for z in range(cz)))
    for z, x in itertools.product(range(cz), range(cx)):
        pz = sum(p_xazw.get((x, a, z, w), 0) for w in range(cw))
        if pz == 0:
            continue
        line = [0] * (cw * cx)
        for w in range(cw):
            line[w * cx + x] = p_xazw.get((x, a, z, w), 0) / pz
        rows.append(line)
        ey = sum(y * p_xazwy.get((x, a, z, w, y), 0) for w in range(cw) for y in range(cy))
        rhs.append(ey / pz)
    return sp.Matrix(rows), sp.Matrix(rhs), col_w


def treatment_system(exact, shape, a):
    """Rows per (w, x) with P(w,a,x) > 0; columns per (z, x)."""
    _, cx, _, cz, cw, _ = shape
    p_xazw = _marg(exact, shape, (1, 2, 3, 4))
    p_xw = _marg(exact, shape, (1, 4))
    rows, rhs, col_w = [], [], []
    for z, x in itertools.product(range(cz), range(cx)):
        col_w.append(sum(p_xazw.get((x, a, z, w), 0) for w in range(cw)))
    for w, x in itertools.product(range(cw), range(cx)):
        pw = sum(p_xazw.get((x, a, z, w), 0) for z in range(cz))
        if pw == 0:
            continue
        line = [0] * (cz * cx)
        for z in range(cz):
            line[z * cx + x] = p_xazw.get((x, a, z, w), 0) / pw
        rows.append(line)
        rhs.append(p_xw[(x, w)] / pw)
    return sp.Matrix(rows), sp.Matrix(rhs), col_w


def analyse(exact, shape, a, kind, phi):
    """Exact (solvable, identified, range_member) for a rational phi list."""
    system, adjoint_sys = (outcome_system, treatment_system) if kind == "outcome" else (treatment_system, outcome_system)
    A, b, col_w = system(exact, shape, a)
    solvable = A.rank() == A.row_join(b).rank()
    null = A.nullspace()
    identified = all(sum(col_w[i] * phi[i] * v[i] for i in range(len(phi))) == 0 for v in null)
    # Adjoint acting on functions of the other proxy: its rows are the
    # positive-probability cells of this kind's column grid.
    K, _, _ = adjoint_sys(exact, shape, a)
    live = [i for i in range(len(phi)) if col_w[i] != 0]
    target = sp.Matrix([phi[i] for i in live])
    # K has one row per positive-probability cell of our domain grid, in the same order.
    member = K.rank() == K.row_join(target).rank()
    return solvable, identified, member, len(null)


def phi_cases(exact_joint, shape, a, kind, rng):
    """Canonical, random and constructed-range phis as exact rationals."""
    _, cx, _, cz, cw, _ = shape
    if kind == "outcome":
        p_xw = _marg(exact_joint, shape, (1, 4))
        p_xaw = _marg(exact_joint, shape, (1, 2, 4))
        canonical = [p_xw[x, w] / p_xaw[x, a, w] for w in range(cw) for x in range(cx)]
        K, _, _ = treatment_system(exact_joint, shape, a)
    else:
        p_xazy = _marg(exact_joint, shape, (1, 2, 3, 5))
        canonical = []
        for z in range(cz):
            for x in range(cx):
                num = sum(y * p_xazy[x, a, z, y] for y in range(shape[5]))
                den = sum(p_xazy[x, a, z, y] for y in range(shape[5]))
                canonical.append(num / den)
        K, _, _ = outcome_system(exact_joint, shape, a)
    size = len(canonical)
    rand = [sp.Rational(int(v), 5) for v in rng.integers(-10, 11, size=size)]
    coef = sp.Matrix([sp.Rational(int(v), 3) for v in rng.integers(-6, 7, size=K.shape[1])])
    ranged = list(K * coef)
    return [canonical, rand, ranged]
