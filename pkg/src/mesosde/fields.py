"""Drift vector fields and diffusion tensor glyphs over the unit disc.

A model (fitted or closed-form) is evaluated on a disc-masked lattice:
the drift becomes a vector field, and the diffusion covariance at each
point is reduced to its eigenpairs and drawn as an ellipse with axes
along the eigenvectors and axis lengths proportional to the eigenvalues.
Equilibria show up as vanishing arrows; the stochasticity landscape as
the size and shape of the ellipses. Output formats are deterministic
SVG documents and an exact-round-trip CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import EXACT_FMT

_EIGEN_TINY = 1e-30

_VIRIDIS = (
    (0.000, (68, 1, 84)),
    (0.125, (71, 44, 122)),
    (0.250, (59, 81, 139)),
    (0.375, (44, 113, 142)),
    (0.500, (33, 144, 141)),
    (0.625, (39, 173, 129)),
    (0.750, (92, 200, 99)),
    (0.875, (170, 220, 50)),
    (1.000, (253, 231, 37)),
)


@dataclass(eq=False)
class FieldGrid:
    """Per-point drift vectors and diffusion eigenpairs on a lattice.

    ``lam1 >= lam2 > 0`` and ``e1``/``e2`` are the matching unit
    eigenvectors, orthogonal and sign-fixed to a nonnegative x component
    (ties broken toward nonnegative y) so output is deterministic.
    """

    points: np.ndarray  # (P, 2)
    drift: np.ndarray  # (P, 2)
    lam1: np.ndarray  # (P,)
    lam2: np.ndarray  # (P,)
    e1: np.ndarray  # (P, 2)
    e2: np.ndarray  # (P, 2)

    def __len__(self) -> int:
        return self.points.shape[0]


def disc_grid(resolution: int = 21, radius: float = 1.0) -> np.ndarray:
    """Square lattice over [-radius, radius]^2 masked to the disc."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axis = np.linspace(-radius, radius, resolution)
    xx, yy = np.meshgrid(axis, axis)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    keep = np.einsum("ij,ij->i", pts, pts) <= radius * radius * (1 + 1e-12)
    return pts[keep]


def _sign_fix(v: np.ndarray) -> np.ndarray:
    flip = (v[:, 0] < 0) | ((v[:, 0] == 0) & (v[:, 1] < 0))
    v = v.copy()
    v[flip] *= -1.0
    return v


def _symmetric_eigen(g: np.ndarray):
    """Closed-form eigendecomposition of symmetric 2x2 matrices (batched)."""
    a = g[:, 0, 0]
    b = 0.5 * (g[:, 0, 1] + g[:, 1, 0])
    c = g[:, 1, 1]
    mean = 0.5 * (a + c)
    half_gap = np.hypot(0.5 * (a - c), b)
    lam1 = mean + half_gap
    lam2 = mean - half_gap
    # two algebraically equivalent eigenvector candidates; pick the better
    # conditioned one per point
    v_a = np.stack([b, lam1 - a], axis=1)
    v_b = np.stack([lam1 - c, b], axis=1)
    norm_a = np.linalg.norm(v_a, axis=1)
    norm_b = np.linalg.norm(v_b, axis=1)
    e1 = np.where((norm_a >= norm_b)[:, None], v_a, v_b)
    norm = np.linalg.norm(e1, axis=1)
    degenerate = norm < _EIGEN_TINY
    e1[degenerate] = (1.0, 0.0)
    norm[degenerate] = 1.0
    e1 = _sign_fix(e1 / norm[:, None])
    e2 = _sign_fix(np.stack([-e1[:, 1], e1[:, 0]], axis=1))
    return lam1, lam2, e1, e2


def eval_fields(model, grid: np.ndarray | None = None, resolution: int = 21) -> FieldGrid:
    """Evaluate drift and diffusion eigenstructure on a lattice.

    ``model`` is anything exposing ``drift(m)`` and ``cov(m)`` over
    batched rows — a fitted SdeModel or an AnalyticSde. Raises if the
    model returns non-finite values or a non-positive-definite
    covariance anywhere, listing the offending points.
    """
    pts = disc_grid(resolution) if grid is None else np.asarray(grid, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("grid must be a (P, 2) array of locations")
    f = np.asarray(model.drift(pts), dtype=np.float64).reshape(len(pts), 2)
    g = np.asarray(model.cov(pts), dtype=np.float64).reshape(len(pts), 2, 2)

    bad = ~(
        np.isfinite(f).all(axis=1) & np.isfinite(g).all(axis=(1, 2))
    )
    if np.any(bad):
        where = ", ".join(f"({p[0]:.3f}, {p[1]:.3f})" for p in pts[bad][:5])
        raise ValueError(f"non-finite model output at grid points {where}")

    lam1, lam2, e1, e2 = _symmetric_eigen(g)
    if np.any(lam2 <= 0):
        where = ", ".join(
            f"({p[0]:.3f}, {p[1]:.3f})" for p in pts[lam2 <= 0][:5]
        )
        raise ValueError(f"covariance not positive definite at grid points {where}")
    return FieldGrid(pts, f, lam1, lam2, e1, e2)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


@dataclass
class RenderOptions:
    """Appearance of the SVG export."""

    kind: str = "drift"  # "drift" arrows or "diffusion" ellipses
    size: int = 640
    colormap: str = "viridis"
    title: str | None = None
    legend: bool = True

    def __post_init__(self):
        if self.kind not in ("drift", "diffusion"):
            raise ValueError("kind must be 'drift' or 'diffusion'")
        if self.colormap not in ("viridis", "gray"):
            raise ValueError("colormap must be 'viridis' or 'gray'")


def _color(t: float, colormap: str) -> str:
    t = min(max(t, 0.0), 1.0)
    if colormap == "gray":
        v = int(round(225 - 195 * t))
        return f"#{v:02x}{v:02x}{v:02x}"
    for (t0, c0), (t1, c1) in zip(_VIRIDIS[:-1], _VIRIDIS[1:]):
        if t <= t1:
            w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = tuple(int(round(a + w * (b - a))) for a, b in zip(c0, c1))
            return "#%02x%02x%02x" % rgb
    return "#%02x%02x%02x" % _VIRIDIS[-1][1]


def _nearest_spacing(points: np.ndarray) -> float:
    """Lattice spacing in data units (smallest positive coordinate gap)."""
    for col in (points[:, 0], points[:, 1]):
        vals = np.unique(col)
        if vals.size > 1:
            return float(np.diff(vals).min())
    return 0.1


def render_svg(grid: FieldGrid, options: RenderOptions | None = None) -> str:
    """Render a field as a deterministic standalone SVG 1.1 document.

    Drift mode draws one arrow per grid point, length proportional to
    the drift magnitude and capped at one grid cell; diffusion mode
    draws one ellipse per point with semi-axes proportional to the
    eigenvalues (largest glyph spans one cell) and oriented along the
    leading eigenvector. Color encodes the magnitude (|f| or lambda_1)
    through the selected color scale.
    """
    opt = options or RenderOptions()
    size = opt.size
    margin = 46.0
    legend_w = 92.0 if opt.legend else 0.0
    half_extent = 1.15
    scale = (size - 2 * margin) / (2 * half_extent)

    def px(x: float) -> float:
        return margin + (x + half_extent) * scale

    def py(y: float) -> float:
        return size - margin - (y + half_extent) * scale

    cell = _nearest_spacing(grid.points) * scale if len(grid) else 0.1 * scale

    if opt.kind == "drift":
        values = np.linalg.norm(grid.drift, axis=1) if len(grid) else np.zeros(0)
        label = "|f|"
    else:
        values = grid.lam1 if len(grid) else np.zeros(0)
        label = "lambda1"
    vmax = float(values.max()) if values.size else 0.0
    vmin = float(values.min()) if values.size else 0.0
    vspan = vmax - vmin

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size + legend_w:.0f}" height="{size}" '
        f'viewBox="0 0 {size + legend_w:.0f} {size}">',
        f'<rect x="0" y="0" width="{size + legend_w:.0f}" height="{size}" fill="white"/>',
        # unit disc and axes
        f'<circle cx="{px(0):.2f}" cy="{py(0):.2f}" r="{scale:.2f}" '
        'fill="none" stroke="#888888" stroke-width="1"/>',
        f'<line x1="{px(-half_extent):.2f}" y1="{py(0):.2f}" '
        f'x2="{px(half_extent):.2f}" y2="{py(0):.2f}" stroke="#dddddd" stroke-width="1"/>',
        f'<line x1="{px(0):.2f}" y1="{py(-half_extent):.2f}" '
        f'x2="{px(0):.2f}" y2="{py(half_extent):.2f}" stroke="#dddddd" stroke-width="1"/>',
    ]
    for tick in (-1.0, 0.0, 1.0):
        parts.append(
            f'<text x="{px(tick):.2f}" y="{size - margin / 3:.2f}" '
            f'font-size="11" text-anchor="middle" fill="#444444">{tick:g}</text>'
        )
        parts.append(
            f'<text x="{margin / 3:.2f}" y="{py(tick) + 4:.2f}" '
            f'font-size="11" text-anchor="middle" fill="#444444">{tick:g}</text>'
        )
    if opt.title:
        parts.append(
            f'<text x="{margin:.2f}" y="{margin / 2:.2f}" font-size="14" '
            f'fill="#222222">{opt.title}</text>'
        )

    if opt.kind == "drift":
        arrow_scale = cell / vmax if vmax > 0 else 0.0
        for i in range(len(grid)):
            x0, y0 = grid.points[i]
            fx, fy = grid.drift[i]
            mag = values[i]
            color = _color((mag - vmin) / vspan if vspan > 0 else 0.5, opt.colormap)
            if mag * arrow_scale <= 1e-12:
                parts.append(
                    f'<circle cx="{px(x0):.2f}" cy="{py(y0):.2f}" r="1.2" fill="{color}"/>'
                )
                continue
            length = mag * arrow_scale / scale  # back to data units
            ex, ey = x0 + fx / mag * length, y0 + fy / mag * length
            x1, y1, x2, y2 = px(x0), py(y0), px(ex), py(ey)
            parts.append(
                f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                f'stroke="{color}" stroke-width="1.4"/>'
            )
            # arrowhead: two short strokes at +-150 degrees from the shaft
            ang = math.atan2(y2 - y1, x2 - x1)
            head = min(5.0, 0.45 * math.hypot(x2 - x1, y2 - y1) + 1.5)
            for da in (2.6179938779914944, -2.6179938779914944):
                hx = x2 + head * math.cos(ang + da)
                hy = y2 + head * math.sin(ang + da)
                parts.append(
                    f'<line x1="{x2:.2f}" y1="{y2:.2f}" x2="{hx:.2f}" y2="{hy:.2f}" '
                    f'stroke="{color}" stroke-width="1.4"/>'
                )
    else:
        glyph_scale = (cell / 2) / vmax if vmax > 0 else 0.0
        for i in range(len(grid)):
            x0, y0 = grid.points[i]
            rx = grid.lam1[i] * glyph_scale
            ry = grid.lam2[i] * glyph_scale
            angle = math.degrees(math.atan2(grid.e1[i, 1], grid.e1[i, 0]))
            color = _color(
                (values[i] - vmin) / vspan if vspan > 0 else 0.5, opt.colormap
            )
            cx, cy = px(x0), py(y0)
            parts.append(
                f'<ellipse cx="{cx:.2f}" cy="{cy:.2f}" rx="{rx:.2f}" ry="{ry:.2f}" '
                f'transform="rotate({-angle:.2f} {cx:.2f} {cy:.2f})" '
                f'fill="{color}" fill-opacity="0.55" stroke="{color}" stroke-width="0.8"/>'
            )

    if opt.legend:
        bar_x = size + 18.0
        bar_top = margin
        bar_h = size - 2 * margin
        n_stops = 24
        for j in range(n_stops):
            t = 1.0 - j / (n_stops - 1)
            y = bar_top + bar_h * j / n_stops
            parts.append(
                f'<rect x="{bar_x:.2f}" y="{y:.2f}" width="14" '
                f'height="{bar_h / n_stops + 0.5:.2f}" fill="{_color(t, opt.colormap)}"/>'
            )
        parts.append(
            f'<text x="{bar_x + 18:.2f}" y="{bar_top + 10:.2f}" font-size="11" '
            f'fill="#222222">{vmax:.3g}</text>'
        )
        parts.append(
            f'<text x="{bar_x + 18:.2f}" y="{bar_top + bar_h:.2f}" font-size="11" '
            f'fill="#222222">{vmin:.3g}</text>'
        )
        parts.append(
            f'<text x="{bar_x:.2f}" y="{bar_top - 10:.2f}" font-size="11" '
            f'fill="#222222">{label}</text>'
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

_CSV_HEADER = "mx,my,fx,fy,lambda1,lambda2,e1x,e1y"


def export_csv(grid: FieldGrid) -> str:
    """Field rows as CSV text, full float64 precision (exact round trip)."""
    lines = [_CSV_HEADER]
    for i in range(len(grid)):
        row = (
            grid.points[i, 0],
            grid.points[i, 1],
            grid.drift[i, 0],
            grid.drift[i, 1],
            grid.lam1[i],
            grid.lam2[i],
            grid.e1[i, 0],
            grid.e1[i, 1],
        )
        lines.append(",".join(EXACT_FMT % v for v in row))
    return "\n".join(lines) + "\n"


def write_field_csv(path, grid: FieldGrid) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(export_csv(grid))


def load_field_csv(path) -> FieldGrid:
    """Rebuild a FieldGrid from its CSV (e2 is the sign-fixed normal of e1)."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64)
    data = np.atleast_2d(data)
    if data.shape[1] != 8:
        raise ValueError("field CSV must have 8 columns")
    e1 = data[:, 6:8]
    e2 = _sign_fix(np.stack([-e1[:, 1], e1[:, 0]], axis=1))
    return FieldGrid(
        points=data[:, 0:2],
        drift=data[:, 2:4],
        lam1=data[:, 4],
        lam2=data[:, 5],
        e1=e1,
        e2=e2,
    )
