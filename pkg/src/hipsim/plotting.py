"""Static figures for CLI reports, rendered off-screen to PNG bytes."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Ball, Box, ConvexBody  # noqa: E402

_STYLE = {"figure.figsize": (5.5, 4.0), "font.size": 9, "axes.grid": True, "grid.alpha": 0.3}


def _png(fig) -> bytes:
    buf = io.BytesIO()
    # fixed metadata keeps the bytes reproducible
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def _draw_body(ax, K: ConvexBody, **kw):
    if isinstance(K, Ball):
        ax.add_patch(plt.Circle(K.center[:2], K.radius, fill=False, **kw))
    elif isinstance(K, Box):
        lo, hi = K.lo, K.hi
        ax.add_patch(plt.Rectangle(lo[:2], *(hi - lo)[:2], fill=False, **kw))


def _draw_lines(ax, U, S, R, **kw):
    for u, s in zip(U, S):
        foot = s * u
        t = np.array([-u[1], u[0]])
        half = np.sqrt(max(R * R - s * s, 0.0))
        seg = np.array([foot - half * t, foot + half * t])
        ax.plot(seg[:, 0], seg[:, 1], **kw)


def hyperplanes_figure(U, S, R: float) -> bytes:
    """Planar line realization inside the centred disc of radius ``R``."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        _draw_lines(ax, np.asarray(U), np.asarray(S), R, color="k", lw=0.6)
        ax.add_patch(plt.Circle((0, 0), R, fill=False, color="0.6", ls="--"))
        ax.set_aspect("equal")
        ax.set_xlim(-R, R)
        ax.set_ylim(-R, R)
        ax.set_title(f"{len(S)} lines")
        return _png(fig)


def reconstruction_figure(result, points, K: ConvexBody) -> bytes:
    """Observed points, recovered lines and certified polygons around ``K``."""
    T = result.T if np.isfinite(result.T) else result.max_point_distance
    R = K.outradius() + T
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        pts = np.asarray(points).reshape(-1, 2)
        if len(pts):
            ax.plot(pts[:, 0], pts[:, 1], ".", ms=2, color="0.4")
        chi = [h.as_array() for h in result.chi]
        if chi:
            A = np.array(chi)
            _draw_lines(ax, A[:, :2], A[:, 2], R, color="C3", lw=1.0)
        for P in result.polytopes or []:
            V = np.vstack([P.vertices, P.vertices[:1]])
            ax.plot(V[:, 0], V[:, 1], color="C0", lw=1.2)
        _draw_body(ax, K, color="C2", lw=1.5)
        ax.set_aspect("equal")
        ax.set_xlim(-R, R)
        ax.set_ylim(-R, R)
        ax.set_title(f"T = {T:.3g}, |chi| = {len(chi)}")
        return _png(fig)


def scaling_figure(report, control=None) -> bytes:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for rep, marker in ((report, "o"), (control, "s")):
            if rep is None:
                continue
            r = np.asarray(rep.radii)
            ax.loglog(r, rep.variances, marker, label=f"{rep.label}: slope {rep.slope:.2f}")
            ax.loglog(r, np.exp(rep.intercept) * r**rep.slope, "-", lw=0.8)
        ax.set_xlabel("r")
        ax.set_ylabel("variance")
        ax.legend()
        return _png(fig)


def paircorr_figure(report, control=None) -> bytes:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for rep in (report, control):
            if rep is None:
                continue
            c = rep.centers
            ax.fill_between(c, rep.ci_low, rep.ci_high, alpha=0.25, step="mid")
            ax.plot(c, rep.rho, drawstyle="steps-mid", label=rep.label)
        ax.axhline(1.0, color="k", lw=0.6)
        ax.set_xlabel("distance")
        ax.set_ylabel("pair correlation")
        ax.legend()
        return _png(fig)


def tail_figure(report) -> bytes:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        x = np.asarray(report.radii)
        s = np.asarray(report.survival)
        ax.semilogy(x[s > 0], s[s > 0], ".", ms=3)
        if np.isfinite(report.c2):
            xs = np.linspace(*report.fit_range, 50)
            ax.semilogy(xs, report.c1 * np.exp(-report.c2 * xs), "-",
                        label=f"rate {report.c2:.3g}, R2 {report.r2:.3f}")
            ax.legend()
        ax.set_xlabel("stopping radius")
        ax.set_ylabel("survival")
        return _png(fig)
