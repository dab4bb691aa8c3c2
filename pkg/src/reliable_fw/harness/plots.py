"""Static SVG figures written by hand (no plotting dependency)."""
import math
from xml.sax.saxutils import escape

import numpy as np

from .. import geometry

W, H, PAD = 520, 400, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _ordered(V):
    c = V.mean(axis=0)
    ang = np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0])
    return V[np.argsort(ang)]


class _Frame:
    def __init__(self, lo, hi, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        lo = np.array([self._tx(lo[0]), self._ty(lo[1])], dtype=float)
        hi = np.array([self._tx(hi[0]), self._ty(hi[1])], dtype=float)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        self.lo, self.span = lo, span

    def _tx(self, v):
        return math.log10(v) if self.logx else v

    def _ty(self, v):
        return math.log10(v) if self.logy else v

    def px(self, x, y):
        u = (self._tx(x) - self.lo[0]) / self.span[0]
        v = (self._ty(y) - self.lo[1]) / self.span[1]
        return PAD + u * (W - 2 * PAD), H - PAD - v * (H - 2 * PAD)


def _axes(frame, lo, hi, xlabel, ylabel, title):
    out = [f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
           'fill="none" stroke="#444"/>']
    for k in range(5):
        fx = lo[0] + (hi[0] - lo[0]) * k / 4 if not frame.logx else 10 ** (frame.lo[0] + frame.span[0] * k / 4)
        fy = lo[1] + (hi[1] - lo[1]) * k / 4 if not frame.logy else 10 ** (frame.lo[1] + frame.span[1] * k / 4)
        x, _ = frame.px(fx, lo[1] if not frame.logy else 10 ** frame.lo[1])
        _, y = frame.px(lo[0] if not frame.logx else 10 ** frame.lo[0], fy)
        out.append(f'<text x="{x:.1f}" y="{H - PAD + 16}" font-size="10" text-anchor="middle">{fx:.4g}</text>')
        out.append(f'<text x="{PAD - 6}" y="{y + 3:.1f}" font-size="10" text-anchor="end">{fy:.4g}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 15}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{H / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>')
    out.append(f'<text x="{W / 2}" y="{PAD - 20}" font-size="13" text-anchor="middle">{escape(title)}</text>')
    return out


def _doc(body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n'
            f'<rect width="{W}" height="{H}" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n")


def region_svg(truth, estimate, iterates, title="feasible region and iterates"):
    """True polytope (solid), final estimate (dashed) and iterates (crosses), ``d = 2`` only."""
    if truth.d != 2:
        raise ValueError("region plot needs d = 2")
    V = geometry.enumerate_vertices(truth)
    X = np.asarray(iterates, dtype=float).reshape(-1, 2)
    pts = np.vstack([V, X]) if len(X) else V
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.08 * np.where(hi - lo > 0, hi - lo, 1.0)
    lo, hi = lo - pad, hi + pad
    frame = _Frame(lo, hi)
    body = _axes(frame, lo, hi, "x1", "x2", title)

    def poly(Vs, style):
        s = " ".join("%.2f,%.2f" % frame.px(*v) for v in _ordered(Vs))
        return f'<polygon points="{s}" fill="none" {style}/>'

    body.append(poly(V, 'stroke="black" stroke-width="2"'))
    if estimate is not None:
        view = geometry.box(lo, hi)
        try:
            Ve = geometry.enumerate_vertices(estimate.intersect(view))
            if len(Ve) >= 3:
                body.append(poly(Ve, 'stroke="#d62728" stroke-width="1.5" stroke-dasharray="6,4"'))
        except geometry.GeometryError:
            pass
    for x in X:
        cx, cy = frame.px(*x)
        body.append(f'<path d="M{cx - 3:.2f},{cy - 3:.2f}L{cx + 3:.2f},{cy + 3:.2f}'
                    f'M{cx - 3:.2f},{cy + 3:.2f}L{cx + 3:.2f},{cy - 3:.2f}" stroke="#1f77b4"/>')
    return _doc(body)


def line_svg(series, xlabel, ylabel, title, logx=False, logy=False):
    """Polylines; ``series`` is a list of ``(xs, ys, label)``."""
    xs_all = np.concatenate([np.asarray(s[0], float) for s in series])
    ys_all = np.concatenate([np.asarray(s[1], float) for s in series])
    keep = np.isfinite(xs_all) & np.isfinite(ys_all)
    if logx:
        keep &= xs_all > 0
    if logy:
        keep &= ys_all > 0
    xs_all, ys_all = xs_all[keep], ys_all[keep]
    if len(xs_all) == 0:
        return _doc([f'<text x="{W / 2}" y="{H / 2}" text-anchor="middle">no data</text>'])
    lo = np.array([xs_all.min(), ys_all.min()])
    hi = np.array([xs_all.max(), ys_all.max()])
    frame = _Frame(lo, hi, logx, logy)
    body = _axes(frame, lo, hi, xlabel, ylabel, title)
    for k, (xs, ys, label) in enumerate(series):
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            ok &= xs > 0
        if logy:
            ok &= ys > 0
        if not np.any(ok):
            continue
        s = " ".join("%.2f,%.2f" % frame.px(x, y) for x, y in zip(xs[ok], ys[ok]))
        col = COLORS[k % len(COLORS)]
        body.append(f'<polyline points="{s}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        body.append(f'<text x="{W - PAD - 4}" y="{PAD + 14 + 14 * k}" font-size="11" fill="{col}" '
                    f'text-anchor="end">{escape(label)}</text>')
    return _doc(body)
