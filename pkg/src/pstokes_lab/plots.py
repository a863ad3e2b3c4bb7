"""Static log-log SVG plots of eigenvalues and inf-sup constants.

The SVG is written by hand with fixed coordinate formatting, so identical
input gives byte-identical files.
"""
from __future__ import annotations

import math
import warnings
from pathlib import Path

WIDTH, HEIGHT = 480, 360
MARGIN = dict(left=70, right=20, top=30, bottom=50)
RED, GREEN, BLUE, GREY = "#c0392b", "#1e8449", "#1f4e9c", "#444444"
TITLES = {"m": "S~ = M", "mnu": "S~ = M_nu"}


def _f(v: float) -> str:
    return f"{v:.2f}"


class _LogAxes:
    """Maps data to pixels on decade-aligned log axes."""

    def __init__(self, xs, ys):
        self.x0, self.x1 = self._range(xs)
        self.y0, self.y1 = self._range(ys)
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    @staticmethod
    def _range(vals):
        logs = [math.log10(v) for v in vals if v > 0 and math.isfinite(v)]
        if not logs:
            return 0, 1
        lo, hi = math.floor(min(logs)), math.ceil(max(logs))
        if hi == lo:
            hi = lo + 1
        return lo, hi

    def px(self, x):
        t = (math.log10(x) - self.x0) / (self.x1 - self.x0)
        return self.left + t * (self.right - self.left)

    def py(self, y):
        t = (math.log10(y) - self.y0) / (self.y1 - self.y0)
        return self.bottom - t * (self.bottom - self.top)

    def frame(self, title, xlabel, ylabel):
        out = [
            f'<rect x="{self.left}" y="{self.top}" width="{self.right - self.left}" '
            f'height="{self.bottom - self.top}" fill="none" stroke="{GREY}"/>'
        ]
        for d in range(self.x0, self.x1 + 1):
            x = _f(self.px(10.0**d))
            out.append(f'<line x1="{x}" y1="{self.bottom}" x2="{x}" y2="{self.bottom + 5}" stroke="{GREY}"/>')
            out.append(f'<text x="{x}" y="{self.bottom + 18}" font-size="11" text-anchor="middle">1e{d}</text>')
        ystep = max(1, (self.y1 - self.y0 + 7) // 8)
        for d in range(self.y0, self.y1 + 1, ystep):
            y = _f(self.py(10.0**d))
            out.append(f'<line x1="{self.left - 5}" y1="{y}" x2="{self.left}" y2="{y}" stroke="{GREY}"/>')
            out.append(f'<text x="{self.left - 8}" y="{y}" font-size="11" text-anchor="end" dy="4">1e{d}</text>')
        out.append(f'<text x="{WIDTH / 2:.0f}" y="18" font-size="13" text-anchor="middle">{_esc(title)}</text>')
        out.append(
            f'<text x="{(self.left + self.right) / 2:.0f}" y="{HEIGHT - 10}" font-size="12" '
            f'text-anchor="middle">{_esc(xlabel)}</text>'
        )
        out.append(
            f'<text x="16" y="{(self.top + self.bottom) / 2:.0f}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 16 {(self.top + self.bottom) / 2:.0f})">{_esc(ylabel)}</text>'
        )
        return out

    def line(self, xs, ys, color, dash):
        if len(xs) == 1:
            pts = [(self.left, self.py(ys[0])), (self.right, self.py(ys[0]))]
        else:
            pts = [(self.px(x), self.py(y)) for x, y in zip(xs, ys)]
        coords = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
        return f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/>'

    def marker(self, x, y, color, up=True, size=5.0):
        cx, cy = self.px(x), self.py(y)
        s = size if up else -size
        pts = [(cx, cy - s), (cx - size, cy + s), (cx + size, cy + s)]
        coords = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
        return f'<polygon points="{coords}" fill="{color}"/>'

    def circle(self, x, y, color, r=4.0):
        return f'<circle cx="{_f(self.px(x))}" cy="{_f(self.py(y))}" r="{r}" fill="{color}"/>'


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _document(body) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">'
    )
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *body, "</svg>"]) + "\n"


def spectrum_svg(reports, title: str = "") -> str:
    """One eigenvalue-vs-eps panel: up triangles for ``lambda_max``, down
    triangles for ``lambda_min``, dashed upper and dotted lower bounds."""
    reports = sorted(reports, key=lambda r: r.eps)
    eps = [r.eps for r in reports]
    lmin = [r.lambda_min_nonzero for r in reports]
    lmax = [r.lambda_max for r in reports]
    lo = [r.bound_lower for r in reports]
    hi = [r.bound_upper for r in reports]
    ax = _LogAxes(eps, lmin + lmax + lo + hi)
    body = ax.frame(title, "eps", "eigenvalue")
    body.append(ax.line(eps, hi, RED, "6,4"))
    body.append(ax.line(eps, lo, GREEN, "2,3"))
    for e, a, b in zip(eps, lmax, lmin):
        body.append(ax.marker(e, a, RED, up=True))
        body.append(ax.marker(e, b, GREEN, up=False))
    return _document(body)


def emit_plots(report, prefix) -> list[Path]:
    """Write ``<prefix>_<schur>.svg`` for each Schur choice in ``report``.

    ``report`` is a ``RunReport`` or a list of ``SpectralReport``. An empty
    report writes nothing and warns.
    """
    reports = list(getattr(report, "reports", report))
    if not reports:
        warnings.warn("empty report, no plots written", stacklevel=2)
        return []
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for choice in sorted({r.schur_choice for r in reports}):
        sel = [r for r in reports if r.schur_choice == choice]
        first = sel[0]
        title = f"{TITLES.get(choice, choice)}, {first.element.upper()}, {first.method}"
        path = prefix.parent / f"{prefix.name}_{choice}.svg"
        path.write_text(spectrum_svg(sel, title))
        paths.append(path)
    return paths


def emit_infsup_plot(rows, prefix) -> list[Path]:
    """``c0`` (blue) and the smallest ``c_nu`` over eps (black) against ``h``."""
    if not rows:
        warnings.warn("empty inf-sup table, no plot written", stacklevel=2)
        return []
    by_mesh: dict = {}
    for r in rows:
        entry = by_mesh.setdefault(r["mesh"], [r["h"], r["c0"], r["c_nu"]])
        entry[2] = min(entry[2], r["c_nu"])
    pts = sorted(by_mesh.values())
    hs = [p[0] for p in pts]
    ax = _LogAxes(hs, [p[1] for p in pts] + [p[2] for p in pts])
    body = ax.frame("inf-sup constants", "h", "constant")
    for h, c0, cnu in pts:
        body.append(ax.circle(h, c0, BLUE))
        body.append(ax.marker(h, cnu, GREY, up=True, size=4.0))
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    path = prefix.parent / f"{prefix.name}.svg"
    path.write_text(_document(body))
    return [path]
