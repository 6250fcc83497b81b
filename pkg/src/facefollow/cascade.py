"""Cascade classifier model: parse, import, evaluate, scan and group.

A cascade is an ordered list of boosted stump stages over a shared Haar
feature table.  Window evaluation walks the stages and bails out at the
first stage whose score falls below its threshold, which is where the
detector gets its speed.  ``detect_multiscale`` runs the same decision
vectorized over a whole window grid per scale; the two paths are kept
arithmetically identical (same operation order on float64) so one can be
checked against the other.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .haar import FeatureEvalError, FeatureKind, FeaturePart, HaarFeature, scale_rect
from .imaging import GrayImage, IntegralPair, Rect, integral, rect_sum


class CascadeError(ValueError):
    pass


class CascadeFormatError(CascadeError):
    """Syntax or semantic problem in a cascade document; message carries the path."""


class UnsupportedCascadeError(CascadeError):
    """Legacy document uses a feature type this detector does not evaluate."""


@dataclass(frozen=True)
class WeakClassifier:
    feature_index: int
    threshold: float
    left_value: float   # emitted when normalized feature value < threshold
    right_value: float


@dataclass(frozen=True)
class Stage:
    weak: tuple[WeakClassifier, ...]
    stage_threshold: float

    def __post_init__(self):
        if not self.weak:
            raise ValueError("stage must contain at least one weak classifier")


@dataclass(frozen=True)
class Cascade:
    base_w: int
    base_h: int
    features: tuple[HaarFeature, ...]
    stages: tuple[Stage, ...]
    name: str = ""

    def __post_init__(self):
        if self.base_w < 4 or self.base_h < 4:
            raise ValueError(f"base window {self.base_w}x{self.base_h} below 4x4")
        if not self.stages:
            raise ValueError("cascade must contain at least one stage")
        for si, st in enumerate(self.stages):
            for wi, wk in enumerate(st.weak):
                if not 0 <= wk.feature_index < len(self.features):
                    raise ValueError(
                        f"stages[{si}].weak[{wi}]: feature index {wk.feature_index} "
                        f"out of range (table has {len(self.features)})")
        for fi, f in enumerate(self.features):
            for pi, p in enumerate(f.parts):
                if p.rect.right > self.base_w or p.rect.bottom > self.base_h:
                    raise ValueError(
                        f"features[{fi}].parts[{pi}]: rect {p.rect} outside "
                        f"{self.base_w}x{self.base_h} base window")


@dataclass(frozen=True)
class Detection:
    box: Rect
    stages_passed: int
    score: float
    neighbors: int = 0


@dataclass(frozen=True)
class WindowEval:
    accepted: bool
    stages_passed: int  # index of the rejecting stage when not accepted
    score: float        # score of the last stage evaluated


@dataclass
class ScanParams:
    """Multi-scale scan settings; grouping knobs ride along for the
    detect-then-group pipelines (detect_multiscale itself ignores them)."""

    scale_factor: float = 1.2
    min_size: int | None = None   # window width floor; defaults to the base width
    max_size: int | None = None   # window width cap; defaults to the image width
    step_divisor: int = 24
    min_neighbors: int = 3
    eps: float = 0.2

    def __post_init__(self):
        if self.scale_factor <= 1.0:
            raise ValueError(f"scale_factor must exceed 1, got {self.scale_factor}")
        if self.step_divisor < 1:
            raise ValueError("step_divisor must be at least 1")


def _variance_denominator(ip: IntegralPair, window: Rect) -> float:
    """sigma * area for the window; sigma falls back to 1 on flat windows."""
    area = float(window.area)
    mean = rect_sum(ip, window) / area
    meansq = rect_sum(ip, window, squared=True) / area
    var = meansq - mean * mean
    sigma = math.sqrt(var) if var > 0 else 1.0
    return sigma * area


def eval_window(c: Cascade, ip: IntegralPair, window: Rect,
                scale: float | None = None) -> WindowEval:
    """Run the staged classifier on one window with early rejection.

    ``scale`` defaults to window.w / base_w; every part rect is scaled by it
    and must land inside the window.  Feature values are divided by
    sigma * area of the window before thresholding so trained thresholds
    transfer across lighting.
    """
    if not window.fits_in(ip.width, ip.height):
        raise ValueError(f"window {window} outside {ip.width}x{ip.height} image")
    if scale is None:
        scale = window.w / c.base_w
    denom = _variance_denominator(ip, window)

    score = 0.0
    for si, stage in enumerate(c.stages):
        score = 0.0
        for wk in stage.weak:
            feat = c.features[wk.feature_index]
            raw = 0.0
            for pi, part in enumerate(feat.parts):
                s = scale_rect(part.rect, scale)
                if s.right > window.w or s.bottom > window.h:
                    raise FeatureEvalError(
                        f"feature {wk.feature_index}: scaled part {pi} ({s}) escapes "
                        f"{window.w}x{window.h} window")
                raw += part.weight * rect_sum(
                    ip, Rect(window.x + s.x, window.y + s.y, s.w, s.h))
            norm = raw / denom
            score += wk.left_value if norm < wk.threshold else wk.right_value
        if score < stage.stage_threshold:
            return WindowEval(False, si, score)
    return WindowEval(True, len(c.stages), score)


def _round_half_up(v: float) -> int:
    return int(v + 0.5)


def _scan_sizes(c: Cascade, img_w: int, img_h: int,
                p: ScanParams) -> list[tuple[int, int, float]]:
    """Deduplicated (win_w, win_h, scale) ladder, ascending."""
    min_w = c.base_w if p.min_size is None else p.min_size
    max_w = img_w if p.max_size is None else min(p.max_size, img_w)
    if min_w < c.base_w:
        raise ValueError(f"min_size {min_w} below base width {c.base_w}")
    sizes = []
    f = 1.0
    seen = set()
    while True:
        win_w = _round_half_up(c.base_w * f)
        if win_w > max_w:
            break
        scale = win_w / c.base_w
        win_h = _round_half_up(c.base_h * scale)
        if win_w >= min_w and win_h <= img_h and (win_w, win_h) not in seen:
            seen.add((win_w, win_h))
            sizes.append((win_w, win_h, scale))
        f *= p.scale_factor
    return sizes


def _rect_taps(table: np.ndarray, xs: np.ndarray, ys: np.ndarray,
               r: Rect) -> np.ndarray:
    """Vectorized 4-tap rectangle sums for rect ``r`` offset to each (x, y)."""
    return (table[ys + r.bottom, xs + r.right] - table[ys + r.y, xs + r.right]
            - table[ys + r.bottom, xs + r.x] + table[ys + r.y, xs + r.x])


def detect_multiscale(c: Cascade, img: GrayImage, p: ScanParams) -> list[Detection]:
    """Scan the window ladder over the image; all accepted windows, ungrouped.

    Output order is deterministic: scale ascending, then y, then x.  The
    vectorized stage walk reproduces eval_window exactly (same float64
    operations in the same order), so per-window results agree bit for bit.
    """
    ip = integral(img)
    out: list[Detection] = []
    n_stages = len(c.stages)

    for win_w, win_h, scale in _scan_sizes(c, img.width, img.height, p):
        scaled: list[list[tuple[Rect, float]]] = []
        for fi, feat in enumerate(c.features):
            parts = []
            for pi, part in enumerate(feat.parts):
                s = scale_rect(part.rect, scale)
                if s.right > win_w or s.bottom > win_h:
                    raise FeatureEvalError(
                        f"feature {fi}: scaled part {pi} ({s}) escapes "
                        f"{win_w}x{win_h} window")
                parts.append((s, part.weight))
            scaled.append(parts)

        stride = max(1, _round_half_up(win_w / p.step_divisor))
        xs = np.arange(0, img.width - win_w + 1, stride, dtype=np.intp)
        ys = np.arange(0, img.height - win_h + 1, stride, dtype=np.intp)
        if len(xs) == 0 or len(ys) == 0:
            continue
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        wx = gx.ravel()
        wy = gy.ravel()

        win_rect = Rect(0, 0, win_w, win_h)
        area = float(win_w * win_h)
        s1 = _rect_taps(ip.ii, wx, wy, win_rect)
        s2 = _rect_taps(ip.sq, wx, wy, win_rect)
        mean = s1 / area
        var = s2 / area - mean * mean
        denom = np.where(var > 0, np.sqrt(np.maximum(var, 0.0)), 1.0) * area

        alive = np.arange(len(wx), dtype=np.intp)
        score = np.zeros(0)
        for stage in c.stages:
            ax, ay, adenom = wx[alive], wy[alive], denom[alive]
            score = np.zeros(len(alive))
            for wk in stage.weak:
                raw = np.zeros(len(alive))
                for r, weight in scaled[wk.feature_index]:
                    raw += weight * _rect_taps(ip.ii, ax, ay, r)
                norm = raw / adenom
                score += np.where(norm < wk.threshold, wk.left_value, wk.right_value)
            keep = score >= stage.stage_threshold
            alive = alive[keep]
            score = score[keep]
            if len(alive) == 0:
                break

        for idx, sc in zip(alive, score):
            out.append(Detection(Rect(int(wx[idx]), int(wy[idx]), win_w, win_h),
                                 n_stages, float(sc)))
    return out


def _similar(a: Rect, b: Rect, eps: float) -> bool:
    delta = eps * (a.w + a.h + b.w + b.h) / 4.0
    return (abs(a.x - b.x) <= delta and abs(a.y - b.y) <= delta
            and abs(a.w - b.w) <= delta and abs(a.h - b.h) <= delta)


def group_detections(dets: list[Detection], min_neighbors: int = 3,
                     eps: float = 0.2) -> list[Detection]:
    """Union-find clustering of similar boxes; small clusters are dropped.

    The representative box is the rounded mean of (x, y, right, bottom) so
    it stays inside the cluster's convex bounds; ``neighbors`` reports the
    cluster population.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if min_neighbors < 0:
        raise ValueError("min_neighbors must be non-negative")
    n = len(dets)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _similar(dets[i].box, dets[j].box, eps):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(i)

    out = []
    for root in sorted(clusters, key=lambda r: min(clusters[r])):
        members = clusters[root]
        if len(members) < min_neighbors + 1:
            continue
        boxes = [dets[i].box for i in members]
        k = len(boxes)
        x = _round_half_up(sum(b.x for b in boxes) / k)
        y = _round_half_up(sum(b.y for b in boxes) / k)
        r = _round_half_up(sum(b.right for b in boxes) / k)
        b_ = _round_half_up(sum(b.bottom for b in boxes) / k)
        out.append(Detection(
            Rect(x, y, r - x, b_ - y),
            stages_passed=max(dets[i].stages_passed for i in members),
            score=max(dets[i].score for i in members),
            neighbors=k,
        ))
    return out


# --- canonical JSON form ----------------------------------------------------

_KIND_NAMES = {FeatureKind.TWO_RECT: "two", FeatureKind.THREE_RECT: "three",
               FeatureKind.FOUR_RECT: "four"}
_NAMES_KIND = {v: k for k, v in _KIND_NAMES.items()}


def _want(obj: dict, path: str, allowed: set[str]):
    unknown = set(obj) - allowed
    if unknown:
        raise CascadeFormatError(f"{path}: unknown key(s) {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise CascadeFormatError(f"{path}: missing key(s) {sorted(missing)}")


def _geom(obj: dict, key: str, path: str, minimum: int) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise CascadeFormatError(f"{path}.{key}: expected integer, got {v!r}")
    if v < minimum:
        raise CascadeFormatError(f"{path}.{key}: {v} below minimum {minimum}")
    return v


def _real(obj: dict, key: str, path: str) -> float:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CascadeFormatError(f"{path}.{key}: expected number, got {v!r}")
    return float(v)


def parse_cascade(text: str) -> Cascade:
    """Parse the canonical JSON cascade document (strict: unknown keys rejected)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CascadeFormatError(
            f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise CascadeFormatError("document root must be an object")
    _want(doc, "$", {"name", "base_w", "base_h", "features", "stages"})
    if not isinstance(doc["name"], str):
        raise CascadeFormatError("$.name: expected string")
    base_w = _geom(doc, "base_w", "$", 4)
    base_h = _geom(doc, "base_h", "$", 4)

    if not isinstance(doc["features"], list):
        raise CascadeFormatError("$.features: expected array")
    features = []
    for fi, fobj in enumerate(doc["features"]):
        path = f"features[{fi}]"
        if not isinstance(fobj, dict):
            raise CascadeFormatError(f"{path}: expected object")
        _want(fobj, path, {"kind", "parts"})
        kind = _NAMES_KIND.get(fobj["kind"])
        if kind is None:
            raise CascadeFormatError(f"{path}.kind: unknown kind {fobj['kind']!r}")
        if not isinstance(fobj["parts"], list) or not 2 <= len(fobj["parts"]) <= 4:
            raise CascadeFormatError(f"{path}.parts: expected 2..4 part objects")
        parts = []
        for pi, pobj in enumerate(fobj["parts"]):
            ppath = f"{path}.parts[{pi}]"
            if not isinstance(pobj, dict):
                raise CascadeFormatError(f"{ppath}: expected object")
            _want(pobj, ppath, {"x", "y", "w", "h", "weight"})
            rect = Rect(_geom(pobj, "x", ppath, 0), _geom(pobj, "y", ppath, 0),
                        _geom(pobj, "w", ppath, 1), _geom(pobj, "h", ppath, 1))
            if rect.right > base_w or rect.bottom > base_h:
                raise CascadeFormatError(
                    f"{ppath}: rect {rect} outside {base_w}x{base_h} base window")
            parts.append(FeaturePart(rect, _real(pobj, "weight", ppath)))
        features.append(HaarFeature(kind, tuple(parts)))

    if not isinstance(doc["stages"], list) or not doc["stages"]:
        raise CascadeFormatError("$.stages: expected non-empty array")
    stages = []
    for si, sobj in enumerate(doc["stages"]):
        path = f"stages[{si}]"
        if not isinstance(sobj, dict):
            raise CascadeFormatError(f"{path}: expected object")
        _want(sobj, path, {"threshold", "weak"})
        if not isinstance(sobj["weak"], list) or not sobj["weak"]:
            raise CascadeFormatError(f"{path}.weak: expected non-empty array")
        weak = []
        for wi, wobj in enumerate(sobj["weak"]):
            wpath = f"{path}.weak[{wi}]"
            if not isinstance(wobj, dict):
                raise CascadeFormatError(f"{wpath}: expected object")
            _want(wobj, wpath, {"feature", "threshold", "left", "right"})
            fidx = _geom(wobj, "feature", wpath, 0)
            if fidx >= len(features):
                raise CascadeFormatError(
                    f"{wpath}.feature: index {fidx} out of range "
                    f"(table has {len(features)})")
            weak.append(WeakClassifier(fidx, _real(wobj, "threshold", wpath),
                                       _real(wobj, "left", wpath),
                                       _real(wobj, "right", wpath)))
        stages.append(Stage(tuple(weak), _real(sobj, "threshold", path)))

    return Cascade(base_w, base_h, tuple(features), tuple(stages),
                   name=doc["name"])


def serialize_cascade(c: Cascade) -> str:
    """Canonical JSON text; parse(serialize(c)) reproduces c exactly."""
    doc = {
        "name": c.name,
        "base_w": c.base_w,
        "base_h": c.base_h,
        "features": [
            {"kind": _KIND_NAMES[f.kind],
             "parts": [{"x": p.rect.x, "y": p.rect.y, "w": p.rect.w,
                        "h": p.rect.h, "weight": p.weight} for p in f.parts]}
            for f in c.features
        ],
        "stages": [
            {"threshold": st.stage_threshold,
             "weak": [{"feature": w.feature_index, "threshold": w.threshold,
                       "left": w.left_value, "right": w.right_value}
                      for w in st.weak]}
            for st in c.stages
        ],
    }
    return json.dumps(doc, indent=1)


# --- legacy OpenCV XML import ------------------------------------------------

def _xml_text(parent: ET.Element, tag: str, path: str) -> str:
    node = parent.find(tag)
    if node is None or node.text is None:
        raise CascadeFormatError(f"{path}: missing <{tag}>")
    return node.text.strip()


def import_legacy_xml(text: str) -> Cascade:
    """Import a new-style XML haarcascade (stump stages, HAAR features only).

    Stage and weak counts, thresholds, leaf values and feature rects are
    carried over verbatim; tilted features and non-HAAR feature types are
    rejected as unsupported.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise CascadeFormatError(f"syntax error: {e}") from e
    if root.tag != "opencv_storage":
        raise CascadeFormatError(f"root element is <{root.tag}>, expected <opencv_storage>")
    children = list(root)
    if not children:
        raise CascadeFormatError("opencv_storage: no cascade element")
    cas = children[0]
    base = f"{cas.tag}"

    ftype = _xml_text(cas, "featureType", base)
    if ftype != "HAAR":
        raise UnsupportedCascadeError(f"{base}.featureType: {ftype} not supported")
    base_w = int(_xml_text(cas, "width", base))
    base_h = int(_xml_text(cas, "height", base))

    features_el = cas.find("features")
    if features_el is None:
        raise CascadeFormatError(f"{base}: missing <features>")
    features = []
    for fi, fel in enumerate(features_el):
        fpath = f"{base}.features[{fi}]"
        tilted_el = fel.find("tilted")
        if tilted_el is not None and tilted_el.text and tilted_el.text.strip() not in ("0",):
            raise UnsupportedCascadeError(f"{fpath}: tilted features not supported")
        rects_el = fel.find("rects")
        if rects_el is None:
            raise CascadeFormatError(f"{fpath}: missing <rects>")
        parts = []
        for pi, rel in enumerate(rects_el):
            toks = (rel.text or "").split()
            if len(toks) != 5:
                raise CascadeFormatError(
                    f"{fpath}.rects[{pi}]: expected 'x y w h weight', got {rel.text!r}")
            x, y, w, h = (int(t) for t in toks[:4])
            rect = Rect(x, y, w, h)
            if rect.right > base_w or rect.bottom > base_h:
                raise CascadeFormatError(
                    f"{fpath}.rects[{pi}]: rect {rect} outside "
                    f"{base_w}x{base_h} base window")
            parts.append(FeaturePart(rect, float(toks[4])))
        if not 2 <= len(parts) <= 4:
            raise CascadeFormatError(f"{fpath}: expected 2..4 rects, got {len(parts)}")
        kind = {2: FeatureKind.TWO_RECT, 3: FeatureKind.THREE_RECT,
                4: FeatureKind.FOUR_RECT}[len(parts)]
        features.append(HaarFeature(kind, tuple(parts)))

    stages_el = cas.find("stages")
    if stages_el is None:
        raise CascadeFormatError(f"{base}: missing <stages>")
    stages = []
    for si, sel in enumerate(stages_el):
        spath = f"{base}.stages[{si}]"
        declared = int(_xml_text(sel, "maxWeakCount", spath))
        threshold = float(_xml_text(sel, "stageThreshold", spath))
        weak_el = sel.find("weakClassifiers")
        if weak_el is None:
            raise CascadeFormatError(f"{spath}: missing <weakClassifiers>")
        weak = []
        for wi, wel in enumerate(weak_el):
            wpath = f"{spath}.weakClassifiers[{wi}]"
            nodes = _xml_text(wel, "internalNodes", wpath).split()
            leaves = _xml_text(wel, "leafValues", wpath).split()
            if len(nodes) != 4:
                raise CascadeFormatError(
                    f"{wpath}.internalNodes: expected 4 values (stump), "
                    f"got {len(nodes)}")
            if len(leaves) != 2:
                raise CascadeFormatError(
                    f"{wpath}.leafValues: expected 2 values, got {len(leaves)}")
            fidx = int(nodes[2])
            if not 0 <= fidx < len(features):
                raise CascadeFormatError(
                    f"{wpath}.internalNodes: feature index {fidx} out of range")
            weak.append(WeakClassifier(fidx, float(nodes[3]),
                                       float(leaves[0]), float(leaves[1])))
        if not weak:
            raise CascadeFormatError(f"{spath}: empty stage")
        if declared != len(weak):
            raise CascadeFormatError(
                f"{spath}: maxWeakCount {declared} != {len(weak)} classifiers")
        stages.append(Stage(tuple(weak), threshold))
    if not stages:
        raise CascadeFormatError(f"{base}.stages: no stages")

    return Cascade(base_w, base_h, tuple(features), tuple(stages), name=cas.tag)
