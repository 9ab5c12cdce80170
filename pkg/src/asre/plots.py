"""Hand-written SVG figures: training curves, p~ heat strip, sparse-action frequency bars.

Only polyline, polygon, rect and text elements are used so the output is
byte-stable for identical inputs.
"""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .mdp import ContractError
from .records import RunRecord

WIDTH, HEIGHT = 640, 360
MARGIN = 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
MAX_STRIP_COLUMNS = 200


def _num(x: float) -> str:
    return f"{x:.2f}"


def _svg(body: list[str], width=WIDTH, height=HEIGHT) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    bg = f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>'
    return "\n".join([head, bg, *body, "</svg>"]) + "\n"


def _text(x, y, s, size=12, anchor="start") -> str:
    return (f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}">{escape(str(s))}</text>')


class _Scale:
    def __init__(self, lo, hi, out_lo, out_hi):
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.out_lo, self.out_hi = lo, hi, out_lo, out_hi

    def __call__(self, v):
        return self.out_lo + (np.asarray(v, float) - self.lo) / (self.hi - self.lo) * (self.out_hi - self.out_lo)


def curve_stats(records: list[RunRecord]):
    """Checkpoint steps with mean and population std of evaluation returns across seeds."""
    if not records or not records[0].checkpoints:
        raise ContractError("need at least one record with checkpoints")
    n = min(len(r.checkpoints) for r in records)
    steps = np.array([c.steps for c in records[0].checkpoints[:n]], float)
    vals = np.array([[c.mean_return for c in r.checkpoints[:n]] for r in records])
    return steps, vals.mean(axis=0), vals.std(axis=0)


def training_curve_svg(curves: dict[str, list[RunRecord]]) -> str:
    if not curves:
        raise ContractError("no records to plot")
    stats = {name: curve_stats(recs) for name, recs in curves.items()}
    xs = np.concatenate([s[0] for s in stats.values()])
    lows = np.concatenate([s[1] - s[2] for s in stats.values()])
    highs = np.concatenate([s[1] + s[2] for s in stats.values()])
    sx = _Scale(xs.min(), xs.max(), MARGIN, WIDTH - MARGIN)
    sy = _Scale(lows.min(), highs.max(), HEIGHT - MARGIN, MARGIN)
    body = [
        f'<polyline points="{MARGIN},{MARGIN} {MARGIN},{HEIGHT - MARGIN} '
        f'{WIDTH - MARGIN},{HEIGHT - MARGIN}" fill="none" stroke="black"/>',
        _text(WIDTH / 2, HEIGHT - 12, "environment steps", anchor="middle"),
        _text(12, MARGIN - 15, "evaluation return"),
        _text(MARGIN, HEIGHT - MARGIN + 15, _num(sx.lo), 10, "middle"),
        _text(WIDTH - MARGIN, HEIGHT - MARGIN + 15, _num(sx.hi), 10, "middle"),
        _text(MARGIN - 5, HEIGHT - MARGIN, _num(sy.lo), 10, "end"),
        _text(MARGIN - 5, MARGIN + 4, _num(sy.hi), 10, "end"),
    ]
    for i, (name, (steps, mean, std)) in enumerate(stats.items()):
        color = PALETTE[i % len(PALETTE)]
        px = sx(steps)
        upper = [f"{_num(x)},{_num(y)}" for x, y in zip(px, sy(mean + std))]
        lower = [f"{_num(x)},{_num(y)}" for x, y in zip(px[::-1], sy((mean - std)[::-1]))]
        body.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                    f'fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{_num(x)},{_num(y)}" for x, y in zip(px, sy(mean)))
        body.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        body.append(_text(WIDTH - MARGIN - 118, MARGIN + 15 * i, name))
        body.append(f'<rect x="{WIDTH - MARGIN - 130}" y="{MARGIN + 15 * i - 9}" width="8" '
                    f'height="8" fill="{color}"/>')
    return _svg(body)


def ptilde_matrix(record: RunRecord) -> np.ndarray:
    """(actions, columns) p~ over training, thinned to at most MAX_STRIP_COLUMNS episodes."""
    if not record.episodes:
        raise ContractError("record has no episodes")
    rows = np.array([e.ptilde for e in record.episodes])
    if len(rows) > MAX_STRIP_COLUMNS:
        keep = np.linspace(0, len(rows) - 1, MAX_STRIP_COLUMNS).round().astype(int)
        rows = rows[keep]
    return rows.T


def _heat(p: float) -> str:
    # white (0) to dark blue (1)
    p = float(np.clip(p, 0.0, 1.0))
    r = round(255 * (1 - p) + 8 * p)
    g = round(255 * (1 - p) + 48 * p)
    b = round(255 * (1 - p) + 107 * p)
    return f"#{r:02x}{g:02x}{b:02x}"


def sparsity_strip_svg(record: RunRecord, action_names=None) -> str:
    mat = ptilde_matrix(record)
    A, C = mat.shape
    names = action_names or [f"a{i}" for i in range(A)]
    cell_w = (WIDTH - 2 * MARGIN) / C
    cell_h = 24
    height = 2 * MARGIN + A * cell_h
    body = [_text(MARGIN, MARGIN - 20, "sparsity distribution over training")]
    for a in range(A):
        y = MARGIN + a * cell_h
        body.append(_text(MARGIN - 5, y + cell_h * 0.65, names[a], 11, "end"))
        for c in range(C):
            body.append(f'<rect x="{_num(MARGIN + c * cell_w)}" y="{y}" width="{_num(cell_w)}" '
                        f'height="{cell_h}" fill="{_heat(mat[a, c])}"/>')
    body.append(_text(WIDTH / 2, height - 15, "episode", anchor="middle"))
    return _svg(body, height=height)


def execution_frequencies(records: list[RunRecord]) -> dict[int, float]:
    """Executed count of each sparse action summed over records, over total steps."""
    if not records:
        raise ContractError("no records")
    A = records[0].num_actions
    executed = np.zeros(A)
    for r in records:
        for e in r.episodes:
            executed += e.executed
    total = executed.sum()
    return {a: float(executed[a] / total) if total else 0.0 for a in records[0].sparse_actions}


def frequency_bars_svg(groups: dict[str, list[RunRecord]], action_names=None) -> str:
    if not groups:
        raise ContractError("no records to plot")
    freqs = {name: execution_frequencies(recs) for name, recs in groups.items()}
    bars = [(name, a, f) for name, fr in freqs.items() for a, f in fr.items()]
    top = max([f for *_, f in bars] + [1e-12])
    sy = _Scale(0.0, top, HEIGHT - MARGIN, MARGIN)
    slot = (WIDTH - 2 * MARGIN) / max(len(bars), 1)
    body = [
        f'<polyline points="{MARGIN},{MARGIN} {MARGIN},{HEIGHT - MARGIN} '
        f'{WIDTH - MARGIN},{HEIGHT - MARGIN}" fill="none" stroke="black"/>',
        _text(12, MARGIN - 15, "sparse-action execution frequency"),
    ]
    agents = list(freqs)
    for i, (name, a, f) in enumerate(bars):
        x = MARGIN + i * slot + 0.15 * slot
        y = float(sy(f))
        label = action_names[a] if action_names else f"a{a}"
        color = PALETTE[agents.index(name) % len(PALETTE)]
        body.append(f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(0.7 * slot)}" '
                    f'height="{_num(HEIGHT - MARGIN - y)}" fill="{color}"/>')
        body.append(_text(x + 0.35 * slot, y - 4, f"{f:.3f}", 10, "middle"))
        body.append(_text(x + 0.35 * slot, HEIGHT - MARGIN + 14, f"{name}:{label}", 10, "middle"))
    return _svg(body)


def emit_plots(groups: dict[str, list[RunRecord]], out_dir, action_names=None) -> list[Path]:
    """Write training_curve.svg, sparsity_<agent>.svg (agents that learn p~) and exec_freq.svg."""
    if not groups or not any(groups.values()):
        raise ContractError("no records to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if all(recs and recs[0].checkpoints for recs in groups.values()):
        p = out / "training_curve.svg"
        p.write_text(training_curve_svg(groups), encoding="utf-8")
        written.append(p)
    for name, recs in groups.items():
        if name == "asre" and recs[0].episodes:
            p = out / f"sparsity_{name}.svg"
            p.write_text(sparsity_strip_svg(recs[0], action_names), encoding="utf-8")
            written.append(p)
    if any(recs[0].sparse_actions for recs in groups.values()):
        p = out / "exec_freq.svg"
        p.write_text(frequency_bars_svg(groups, action_names), encoding="utf-8")
        written.append(p)
    return written
