"""Self-contained SVG plotting for the Lyapunov sweep.

No plotting dependency: the figure is assembled as text with fixed float
formatting, so identical inputs give byte-identical files.
"""
from __future__ import annotations

import math

from .errors import ConfigError

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 72, 24, 52, 58


def _px(x):
    """Fixed three-decimal pixel coordinate (deterministic text)."""
    return f"{x:.3f}"


def _label(v):
    return f"{v:.4g}"


def _ticks(lo, hi, n=5):
    if not (hi > lo):
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / (n - 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


class _Axis:
    def __init__(self, lo, hi, p0, p1, log=False):
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if not (hi > lo):
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.p0, self.p1, self.log = lo, hi, p0, p1, log

    def __call__(self, v):
        if self.log:
            v = math.log10(v)
        f = (v - self.lo) / (self.hi - self.lo)
        return self.p0 + f * (self.p1 - self.p0)

    def ticks(self):
        if self.log:
            lo_e = math.ceil(self.lo - 1e-9)
            hi_e = math.floor(self.hi + 1e-9)
            return [10.0 ** e for e in range(lo_e, hi_e + 1)] or \
                [10.0 ** self.lo, 10.0 ** self.hi]
        return _ticks(self.lo, self.hi)


def lyapunov_svg(rows, env_mean, subtitle):
    """Assemble the sweep figure: estimates vs kappa over a reference line.

    ``rows`` carry kappa, lambda_hat and stderr; ``subtitle`` is echoed
    under the title (the caller passes the config digest and seed there).
    """
    if not rows:
        raise ConfigError("nothing to plot: the sweep table is empty")
    rows = sorted(rows, key=lambda r: r["kappa"])
    kappas = [r["kappa"] for r in rows]
    use_log = kappas[0] > 0 and kappas[-1] / kappas[0] >= 30.0
    lo_y = min(min(r["lambda_hat"] - 1.96 * r["stderr"] for r in rows), env_mean)
    hi_y = max(max(r["lambda_hat"] + 1.96 * r["stderr"] for r in rows), env_mean)
    pad = 0.08 * (hi_y - lo_y) or 0.05
    xaxis = _Axis(kappas[0], kappas[-1], _ML, _W - _MR, log=use_log)
    yaxis = _Axis(lo_y - pad, hi_y + pad, _H - _MB, _MT)

    s = []
    s.append('<?xml version="1.0" encoding="UTF-8"?>')
    s.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">')
    s.append(f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>')
    s.append(f'<text x="{_px(_W / 2)}" y="22" text-anchor="middle" '
             'font-family="monospace" font-size="15" fill="black">'
             'quenched Lyapunov estimate vs diffusion constant</text>')
    s.append(f'<text x="{_px(_W / 2)}" y="40" text-anchor="middle" '
             f'font-family="monospace" font-size="11" fill="#555">{subtitle}</text>')

    for tv in xaxis.ticks():
        if not (10.0 ** xaxis.lo <= tv <= 10.0 ** xaxis.hi) and xaxis.log:
            continue
        x = xaxis(tv)
        s.append(f'<line x1="{_px(x)}" y1="{_MT}" x2="{_px(x)}" '
                 f'y2="{_H - _MB}" stroke="#eee" stroke-width="1"/>')
        s.append(f'<text x="{_px(x)}" y="{_H - _MB + 18}" text-anchor="middle" '
                 f'font-family="monospace" font-size="11" fill="black">{_label(tv)}</text>')
    for tv in yaxis.ticks():
        y = yaxis(tv)
        s.append(f'<line x1="{_ML}" y1="{_px(y)}" x2="{_W - _MR}" '
                 f'y2="{_px(y)}" stroke="#eee" stroke-width="1"/>')
        s.append(f'<text x="{_ML - 8}" y="{_px(y + 4)}" text-anchor="end" '
                 f'font-family="monospace" font-size="11" fill="black">{_label(tv)}</text>')
    s.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
             'stroke="black" stroke-width="1"/>')
    s.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
             'stroke="black" stroke-width="1"/>')
    s.append(f'<text x="{_px((_ML + _W - _MR) / 2)}" y="{_H - 14}" '
             'text-anchor="middle" font-family="monospace" font-size="12" '
             f'fill="black">kappa{" (log scale)" if use_log else ""}</text>')
    s.append(f'<text x="18" y="{_px((_MT + _H - _MB) / 2)}" text-anchor="middle" '
             'font-family="monospace" font-size="12" fill="black" '
             f'transform="rotate(-90 18 {_px((_MT + _H - _MB) / 2)})">lambda-hat</text>')

    ym = yaxis(env_mean)
    s.append(f'<line x1="{_ML}" y1="{_px(ym)}" x2="{_W - _MR}" y2="{_px(ym)}" '
             'stroke="#cc2222" stroke-width="1.5" stroke-dasharray="6,4"/>')
    s.append(f'<text x="{_W - _MR - 4}" y="{_px(ym - 6)}" text-anchor="end" '
             'font-family="monospace" font-size="11" fill="#cc2222">'
             f'mean field value {_label(env_mean)}</text>')

    pts = " ".join(f"{_px(xaxis(r['kappa']))},{_px(yaxis(r['lambda_hat']))}"
                   for r in rows)
    s.append(f'<polyline points="{pts}" fill="none" stroke="#2255cc" '
             'stroke-width="1.5"/>')
    for r in rows:
        x = xaxis(r["kappa"])
        y0 = yaxis(r["lambda_hat"] - 1.96 * r["stderr"])
        y1 = yaxis(r["lambda_hat"] + 1.96 * r["stderr"])
        s.append(f'<line x1="{_px(x)}" y1="{_px(y0)}" x2="{_px(x)}" '
                 f'y2="{_px(y1)}" stroke="#2255cc" stroke-width="1"/>')
        s.append(f'<circle cx="{_px(x)}" cy="{_px(yaxis(r["lambda_hat"]))}" '
                 'r="3" fill="#2255cc"/>')
    s.append("</svg>")
    return "\n".join(s) + "\n"
