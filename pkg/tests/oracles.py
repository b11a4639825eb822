"""Brute-force reference computations.

Nothing here calls into the closed-form code paths under test: ellipses are
rebuilt from raw parameters, crossings are found by sampling plus bisection,
and surface normals come from central finite differences.
"""
import math

import numpy as np


def semi_axes(mu, r, c, n):
    return mu * n, r * c * mu * n


def dual_axes(mu_e, mu_p, r_e, r_p, c, weight, n_e):
    return semi_axes(mu_e, r_e, c, n_e), semi_axes(mu_p, r_p, c, n_e + weight)


def sampled_relation(top, support, samples=64):
    """Containment of two ellipses judged from points sampled on each boundary.

    Returns "inside" (top within support), "containing", or "intersecting".
    """
    phi = np.linspace(0.0, 0.5 * np.pi, samples)
    (afe, ate), (afp, atp) = top, support
    top_pts = np.stack([afe * np.cos(phi), ate * np.sin(phi)])
    sup_pts = np.stack([afp * np.cos(phi), atp * np.sin(phi)])
    top_in_sup = (top_pts[0] / afp) ** 2 + (top_pts[1] / atp) ** 2
    sup_in_top = (sup_pts[0] / afe) ** 2 + (sup_pts[1] / ate) ** 2
    if np.all(top_in_sup <= 1.0):
        return "inside"
    if np.all(sup_in_top <= 1.0):
        return "containing"
    return "intersecting"


def crossing(top, support, samples=4001, iters=200):
    """First-quadrant crossing of two ellipses by sampling the support boundary.

    Walks the support ellipse in angle, finds the sign change of the top
    ellipse's implicit function and bisects it to machine precision.
    """
    (afe, ate), (afp, atp) = top, support

    def h(phi):
        f, t = afp * np.cos(phi), atp * np.sin(phi)
        return (f / afe) ** 2 + (t / ate) ** 2 - 1.0

    phi = np.linspace(0.0, 0.5 * np.pi, samples)
    vals = h(phi)
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if len(idx) == 0:
        return None
    lo, hi = phi[idx[0]], phi[idx[0] + 1]
    flo = h(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = h(mid)
        if fm == 0 or hi - lo < 1e-17:
            lo = hi = mid
            break
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    return afp * math.cos(mid), atp * math.sin(mid)


def fd_gradient(fun, x, rel_step=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        h = rel_step * max(abs(x[i]), 1e-300)
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def kv_bruteforce(top, support, which="support"):
    pt = crossing(top, support)
    if pt is None:
        return None
    a_f, a_t = support if which == "support" else top

    def g(w):
        return (w[0] / a_f) ** 2 + (w[1] / a_t) ** 2

    grad = fd_gradient(g, pt)
    return abs(grad[1]) / abs(grad[0])


def max_dissipation_wrench(a_f, a_t, twist, samples=200_001):
    """Boundary wrench maximising t . w over a dense sampling of the ellipsoid.

    The search is reduced to one angle: for a fixed torque fraction the best
    force points along the twist's linear part.
    """
    vx, vy, om = twist
    v = math.hypot(vx, vy)
    phi = np.linspace(-0.5 * np.pi, 0.5 * np.pi, samples)
    power = v * a_f * np.cos(phi) + om * a_t * np.sin(phi)
    k = int(np.argmax(power))
    # refine on the sign change of d(power)/d(phi), which is monotone near the peak
    lo, hi = phi[max(k - 1, 0)], phi[min(k + 1, samples - 1)]
    dp = lambda p: -v * a_f * math.sin(p) + om * a_t * math.cos(p)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dp(mid) > 0:
            lo = mid
        else:
            hi = mid
    p = 0.5 * (lo + hi)
    f_mag = a_f * math.cos(p)
    if v > 0:
        fx, fy = f_mag * vx / v, f_mag * vy / v
    else:
        fx, fy = f_mag, 0.0
    return np.array([fx, fy, a_t * math.sin(p)])
