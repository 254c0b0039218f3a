"""Adaptive Simpson quadrature for smooth, cheap scalar integrands."""

import warnings

import numpy as np


def _simpson(fa, fm, fb, h):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a, b, *, rtol=1e-6, atol=1e-15, min_panels=8, max_intervals=200_000):
    """Integrate ``f`` over ``[a, b]`` with adaptive Simpson refinement.

    ``f`` must accept a 1-D numpy array and return an array of the same
    shape.  The interval is first cut into ``min_panels`` equal panels so
    that periodic integrands cannot fool the first Simpson estimate; each
    panel is then bisected until the local Richardson error estimate falls
    under its share of the tolerance.

    The tolerance target is ``max(atol, rtol * |I|)`` where ``I`` is the
    composite estimate on the initial panels.
    """
    a = float(a)
    b = float(b)
    if b == a:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0

    n = max(int(min_panels), 1)
    edges = np.linspace(a, b, n + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    fe = np.asarray(f(edges), dtype=float)
    fm = np.asarray(f(mids), dtype=float)
    whole = _simpson(fe[:-1], fm, fe[1:], np.diff(edges))
    tol = max(atol, rtol * abs(whole.sum()))

    # stack entries: (lo, hi, f_lo, f_mid, f_hi, simpson_estimate, tol)
    stack = [
        (edges[i], edges[i + 1], fe[i], fm[i], fe[i + 1], whole[i], tol * (edges[i + 1] - edges[i]) / (b - a))
        for i in range(n)
    ]
    total = 0.0
    intervals = n
    warned = False
    while stack:
        lo, hi, flo, fmid, fhi, est, eps = stack.pop()
        mid = 0.5 * (lo + hi)
        q = np.asarray(f(np.array([0.5 * (lo + mid), 0.5 * (mid + hi)])), dtype=float)
        left = _simpson(flo, q[0], fmid, mid - lo)
        right = _simpson(fmid, q[1], fhi, hi - mid)
        delta = left + right - est
        converged = abs(delta) <= 15.0 * eps
        capped = intervals >= max_intervals
        if converged or capped or mid in (lo, hi):
            if not converged and not warned:
                warnings.warn(
                    f"adaptive_simpson stopped refining at {intervals} intervals; result may be inaccurate",
                    RuntimeWarning,
                    stacklevel=2,
                )
                warned = True
            total += left + right + delta / 15.0
            continue
        intervals += 1
        stack.append((lo, mid, flo, q[0], fmid, left, 0.5 * eps))
        stack.append((mid, hi, fmid, q[1], fhi, right, 0.5 * eps))
    return sign * total
