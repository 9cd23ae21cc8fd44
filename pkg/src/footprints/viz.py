"""2D embeddings and SVG/CSV report artifacts.

The default embedding is a sign-fixed PCA projection of the attribution
matrix; alternatives can be registered. Labels and colors never depend on
the embedding, only on the footprint assignments. SVGs are written by
hand with fixed decimal formatting so identical inputs give identical
bytes.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .footprint import LABEL_ORDER, FootprintAssignment
from .models import MODEL_LABELS
from .shapley import ShapMetaRepresentation, global_importance

Key = tuple[int, int, int]

ALG_GOOD_COLOR = "#1f77b4"   # blue: good algorithm performance
ALG_POOR_COLOR = "#ffcc00"   # yellow: poor algorithm performance
LOW_VALUE_COLOR = (31, 119, 180)
HIGH_VALUE_COLOR = (214, 39, 40)

WIDTH = 640
HEIGHT = 480
MARGIN = 55.0


@dataclass(frozen=True, eq=False)
class Embedding2D:
    keys: tuple[Key, ...]
    coords: np.ndarray
    method: str
    params: dict


def _pca_embedding(matrix: np.ndarray) -> np.ndarray:
    centered = matrix - matrix.mean(axis=0)
    if not np.any(centered):
        return np.zeros((matrix.shape[0], 2))
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = np.zeros((2, matrix.shape[1]))
    comps[: min(2, vt.shape[0])] = vt[:2]
    for r in range(2):
        j = int(np.argmax(np.abs(comps[r])))
        if comps[r, j] < 0:
            comps[r] = -comps[r]
    return centered @ comps.T


EMBEDDINGS: dict[str, Callable[[np.ndarray], np.ndarray]] = {"pca": _pca_embedding}


def embed_2d(keys: Sequence[Key], matrix: np.ndarray, method: str = "pca") -> Embedding2D:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] < 3:
        raise ContractViolation("embedding needs at least 3 rows")
    if len(keys) != matrix.shape[0]:
        raise ContractViolation("one key per row required")
    if method not in EMBEDDINGS:
        raise ConfigurationError(f"unknown embedding method {method!r}")
    coords = EMBEDDINGS[method](matrix)
    return Embedding2D(keys=tuple(keys), coords=coords, method=method, params={})


# ---------------------------------------------------------------------------
# SVG primitives

def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(values: np.ndarray, out_lo: float, out_hi: float) -> np.ndarray:
    vmin, vmax = float(values.min()), float(values.max())
    if vmax - vmin <= 0:
        return np.full(values.shape, 0.5 * (out_lo + out_hi))
    return out_lo + (values - vmin) / (vmax - vmin) * (out_hi - out_lo)


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{_fmt(WIDTH / 2)}" y="22" font-size="14" text-anchor="middle" '
        f'font-family="sans-serif">{escape(title)}</text>',
    ]


def _circle(x: float, y: float, color: str, r: float = 6.0) -> str:
    return (
        f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{color}" '
        f'stroke="#333333" stroke-width="0.8"/>'
    )


def _cross(x: float, y: float, color: str, r: float = 6.0) -> str:
    return (
        f'<path d="M {_fmt(x - r)} {_fmt(y - r)} L {_fmt(x + r)} {_fmt(y + r)} '
        f'M {_fmt(x - r)} {_fmt(y + r)} L {_fmt(x + r)} {_fmt(y - r)}" '
        f'stroke="{color}" stroke-width="3.0" fill="none"/>'
    )


def _annotation(x: float, y: float, text: str) -> str:
    return (
        f'<text x="{_fmt(x + 7)}" y="{_fmt(y - 7)}" font-size="10" '
        f'font-family="sans-serif" fill="#555555">{escape(text)}</text>'
    )


def _value_color(v: float) -> str:
    v = min(max(v, 0.0), 1.0)
    rgb = tuple(
        int(round(lo + (hi - lo) * v)) for lo, hi in zip(LOW_VALUE_COLOR, HIGH_VALUE_COLOR)
    )
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


# ---------------------------------------------------------------------------
# footprint scatter

def emit_footprint_plot(
    embedding: Embedding2D,
    assignments: Sequence[FootprintAssignment],
    title: str = "",
) -> str:
    by_key = {a.key: a for a in assignments}
    missing = [key for key in embedding.keys if key not in by_key]
    if missing:
        raise ContractViolation(f"no assignment for embedded keys {missing}")
    xs = _scale(embedding.coords[:, 0], MARGIN, WIDTH - MARGIN)
    ys = _scale(-embedding.coords[:, 1], MARGIN + 20, HEIGHT - MARGIN - 40)
    parts = _svg_open(title or f"footprint ({embedding.method} embedding)")
    for i, key in enumerate(embedding.keys):
        a = by_key[key]
        color = ALG_GOOD_COLOR if a.label.algorithm_good else ALG_POOR_COLOR
        marker = _circle if a.label.model_good else _cross
        parts.append(marker(float(xs[i]), float(ys[i]), color))
        parts.append(_annotation(float(xs[i]), float(ys[i]), str(key[0])))
    ly = HEIGHT - 22.0
    parts.append(_circle(MARGIN, ly, ALG_GOOD_COLOR, 5.0))
    parts.append(_legend_text(MARGIN + 10, ly, "algorithm good"))
    parts.append(_circle(MARGIN + 140, ly, ALG_POOR_COLOR, 5.0))
    parts.append(_legend_text(MARGIN + 150, ly, "algorithm poor"))
    parts.append(_cross(MARGIN + 280, ly, "#333333", 5.0))
    parts.append(_legend_text(MARGIN + 290, ly, "model poor (O = model good)"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _legend_text(x: float, y: float, text: str) -> str:
    return (
        f'<text x="{_fmt(x)}" y="{_fmt(y + 4)}" font-size="11" '
        f'font-family="sans-serif">{escape(text)}</text>'
    )


# ---------------------------------------------------------------------------
# beeswarm (top-k attribution spread)

def _normalize_column(values: np.ndarray) -> np.ndarray:
    vmin, vmax = float(values.min()), float(values.max())
    if vmax - vmin <= 0:
        return np.full(values.shape, 0.5)
    return (values - vmin) / (vmax - vmin)


def emit_beeswarm_data(
    reps: Sequence[ShapMetaRepresentation],
    feature_names: Sequence[str],
    feature_values: Mapping[Key, Mapping[str, float]],
    top_k: int = 10,
    title: str = "",
) -> tuple[str, str]:
    """CSV rows and a beeswarm SVG for the top-k most important features."""
    if top_k > len(feature_names):
        raise ConfigurationError("top_k exceeds portfolio size")
    ranking = global_importance(reps, feature_names)[:top_k]
    name_to_col = {name: i for i, name in enumerate(feature_names)}

    raw_rows = []  # (feature, key, phi, normalized value)
    for rank, (fname, _) in enumerate(ranking):
        col = name_to_col[fname]
        raws = np.array([float(feature_values[rep.key][fname]) for rep in reps])
        norm = _normalize_column(raws)
        for i, rep in enumerate(reps):
            raw_rows.append((rank, fname, rep.key, float(rep.phi[col]), float(norm[i])))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature_name", "problem_id", "instance_id", "dimension",
                     "phi", "normalized_value"])
    for _, fname, key, phi, norm in raw_rows:
        writer.writerow([fname, key[0], key[1], key[2], repr(phi), repr(norm)])

    all_phi = np.array([r[3] for r in raw_rows])
    span = max(float(np.max(np.abs(all_phi))), 1e-12)
    row_h = (HEIGHT - 2 * MARGIN - 20) / max(top_k, 1)
    x0, x1 = MARGIN + 150, WIDTH - MARGIN
    mid = 0.5 * (x0 + x1)
    parts = _svg_open(title or "top feature attributions")
    parts.append(
        f'<line x1="{_fmt(mid)}" y1="{_fmt(MARGIN)}" x2="{_fmt(mid)}" '
        f'y2="{_fmt(HEIGHT - MARGIN - 20)}" stroke="#999999" stroke-width="1.0"/>'
    )
    for rank, (fname, _) in enumerate(ranking):
        yc = MARGIN + (rank + 0.5) * row_h
        parts.append(
            f'<text x="{_fmt(x0 - 8)}" y="{_fmt(yc + 3)}" font-size="10" '
            f'text-anchor="end" font-family="sans-serif">{escape(fname)}</text>'
        )
    for i, (rank, fname, key, phi, norm) in enumerate(raw_rows):
        x = mid + phi / span * (x1 - mid - 8)
        stagger = ((i * 37) % 7 - 3) * row_h / 10.0
        y = MARGIN + (rank + 0.5) * row_h + stagger
        parts.append(_circle(float(x), float(y), _value_color(norm), 3.0))
    parts.append(_legend_text(MARGIN, HEIGHT - 22.0,
                              "x: attribution; color: feature value low (blue) to high (red)"))
    parts.append("</svg>")
    return buf.getvalue(), "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# feature value over the embedding

def emit_feature_distribution(
    embedding: Embedding2D,
    feature_name: str,
    feature_values: Mapping[Key, Mapping[str, float]],
    title: str = "",
) -> str:
    try:
        raws = np.array([float(feature_values[key][feature_name]) for key in embedding.keys])
    except KeyError as exc:
        raise ConfigurationError(f"unknown feature or key: {exc}") from exc
    norm = _normalize_column(raws)
    xs = _scale(embedding.coords[:, 0], MARGIN, WIDTH - MARGIN)
    ys = _scale(-embedding.coords[:, 1], MARGIN + 20, HEIGHT - MARGIN - 40)
    parts = _svg_open(title or feature_name)
    for i, key in enumerate(embedding.keys):
        parts.append(_circle(float(xs[i]), float(ys[i]), _value_color(float(norm[i]))))
        parts.append(_annotation(float(xs[i]), float(ys[i]), str(key[0])))
    parts.append(_legend_text(MARGIN, HEIGHT - 22.0,
                              f"{feature_name}: low (blue) to high (red), min-max over plotted set"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# cluster membership table

EMPTY_CELL = "–"  # en dash


def _membership_cells(assignments: Sequence[FootprintAssignment]) -> list[str]:
    cells = []
    for label in LABEL_ORDER:
        ids = sorted(a.key[0] for a in assignments if a.label == label)
        cells.append(", ".join(str(i) for i in ids) if ids else EMPTY_CELL)
    return cells


def emit_distribution_table(assignments: Sequence[FootprintAssignment]) -> tuple[str, str]:
    """Per (model, fold) membership lists; text table and CSV companion."""
    groups: dict[tuple[str, int], list[FootprintAssignment]] = {}
    for a in assignments:
        groups.setdefault((a.model_kind, a.fold_id), []).append(a)

    header = ["model", "fold", "(good, good)", "(good, poor)", "(poor, good)", "(poor, poor)"]
    lines = [" | ".join(header)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "fold", "good_good", "good_poor", "poor_good", "poor_poor"])
    for model_kind, fold_id in sorted(groups):
        cells = _membership_cells(groups[(model_kind, fold_id)])
        display = MODEL_LABELS.get(model_kind, model_kind)
        lines.append(" | ".join([display, str(fold_id)] + cells))
        writer.writerow([display, fold_id] + cells)
    return "\n".join(lines) + "\n", buf.getvalue()
