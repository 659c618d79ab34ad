"""Image normalization, feature detection/description, matching, verification.

The default extractors are self-contained so the pipeline has no detector
dependency: a multi-scale Harris corner detector with gradient-orientation
histogram descriptors fills the local-feature role, and a thresholded
intensity-region detector fills the region role.  Both register under a
string tag in DETECTORS so alternative extractors can be swapped in.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

DESCRIPTOR_DIM = 128          # 4 x 4 spatial cells x 8 orientation bins
_GRID = 16                    # descriptor sample grid (16x16, 4 samples per cell)
_ORI_BINS = 36


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float = 0.0
    response: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class DescriptorSet:
    """Row-wise L2-normalized descriptors with their detector tag."""

    vectors: np.ndarray          # (N, DESCRIPTOR_DIM) float32
    kind: str                    # "local" | "region"

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class MatchPair:
    query_idx: int
    ref_idx: int
    distance: float


@dataclass(frozen=True)
class VlineResult:
    """Virtual-line verification output; verified is False on pass-through."""

    matches: list
    verified: bool


@dataclass(frozen=True)
class DetectorConfig:
    max_features: int = 600
    n_levels: int = 6
    base_sigma: float = 1.6
    scale_step: float = 1.4142135623730951
    harris_k: float = 0.06
    threshold_rel: float = 0.005
    region_levels: int = 6
    region_min_area: int = 25
    region_max_area_frac: float = 0.05


def equalize_histogram(image: np.ndarray) -> np.ndarray:
    """Cumulative-histogram remap of an 8-bit grayscale image to [0, 255].

    A constant image is returned unchanged (the single-bin CDF carries no
    ordering information).  The remap is monotone in pixel value.
    """
    if image.dtype != np.uint8 or image.ndim != 2:
        raise ValueError("expected 8-bit single-channel image")
    hist = np.bincount(image.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    nonzero = np.nonzero(hist)[0]
    if len(nonzero) <= 1:
        return image.copy()
    cdf_min = cdf[nonzero[0]]
    lut = np.rint((cdf - cdf_min) / (cdf[-1] - cdf_min) * 255.0).astype(np.uint8)
    return lut[image]


def to_grayscale(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return image
    return np.clip(np.rint(image.astype(np.float64) @ [0.299, 0.587, 0.114]),
                   0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Corner detection (local features)
# ---------------------------------------------------------------------------

def _harris_response(blurred: np.ndarray, sigma: float, k: float) -> np.ndarray:
    gy, gx = np.gradient(blurred)
    w = 1.5 * sigma
    ixx = ndimage.gaussian_filter(gx * gx, w)
    iyy = ndimage.gaussian_filter(gy * gy, w)
    ixy = ndimage.gaussian_filter(gx * gy, w)
    det = ixx * iyy - ixy * ixy
    tr = ixx + iyy
    return (det - k * tr * tr) * sigma ** 4   # scale-normalized


def _subpixel_offset(r: np.ndarray, ys: np.ndarray, xs: np.ndarray):
    """Quadratic-fit offsets of local maxima of a response surface."""
    dx = 0.5 * (r[ys, xs + 1] - r[ys, xs - 1])
    dy = 0.5 * (r[ys + 1, xs] - r[ys - 1, xs])
    dxx = r[ys, xs + 1] + r[ys, xs - 1] - 2 * r[ys, xs]
    dyy = r[ys + 1, xs] + r[ys - 1, xs] - 2 * r[ys, xs]
    dxy = 0.25 * (r[ys + 1, xs + 1] - r[ys + 1, xs - 1]
                  - r[ys - 1, xs + 1] + r[ys - 1, xs - 1])
    det = dxx * dyy - dxy * dxy
    det = np.where(np.abs(det) < 1e-18, 1e-18, det)
    off_x = -(dyy * dx - dxy * dy) / det
    off_y = -(dxx * dy - dxy * dx) / det
    off_x = np.clip(off_x, -0.5, 0.5)
    off_y = np.clip(off_y, -0.5, 0.5)
    return off_x, off_y


def _sample_patch_gradients(gx, gy, kps_xy, spacing, angles):
    """Gradients on rotated square grids around keypoints.

    Returns (N, _GRID*_GRID) arrays of magnitude and of orientation
    relative to each keypoint's angle.
    """
    n = len(kps_xy)
    half = (_GRID - 1) / 2.0
    gg = np.arange(_GRID) - half
    ux, uy = np.meshgrid(gg, gg)
    base = np.stack([ux.ravel(), uy.ravel()], axis=0)        # (2, G*G)
    ca, sa = np.cos(angles), np.sin(angles)
    rot = np.stack([np.stack([ca, -sa], -1), np.stack([sa, ca], -1)], -2)  # (N,2,2)
    pts = (rot @ base[None]) * spacing[:, None, None]        # (N, 2, G*G)
    pts = pts + kps_xy[:, :, None]
    coords = np.stack([pts[:, 1].ravel(), pts[:, 0].ravel()])  # row, col
    sx = ndimage.map_coordinates(gx, coords, order=1, mode="nearest").reshape(n, -1)
    sy = ndimage.map_coordinates(gy, coords, order=1, mode="nearest").reshape(n, -1)
    mag = np.hypot(sx, sy)
    ori = np.arctan2(sy, sx) - angles[:, None]
    return mag, ori


def _dominant_orientations(gx, gy, kps_xy, scales) -> np.ndarray:
    mag, ori = _sample_patch_gradients(gx, gy, kps_xy, 0.6 * scales,
                                       np.zeros(len(kps_xy)))
    half = (_GRID - 1) / 2.0
    gg = np.arange(_GRID) - half
    ux, uy = np.meshgrid(gg, gg)
    r2 = (ux.ravel() ** 2 + uy.ravel() ** 2)
    w = np.exp(-r2 / (2.0 * (0.5 * _GRID) ** 2))
    bins = np.floor((ori % (2 * np.pi)) / (2 * np.pi) * _ORI_BINS).astype(int) % _ORI_BINS
    hist = np.zeros((len(kps_xy), _ORI_BINS))
    rows = np.repeat(np.arange(len(kps_xy)), mag.shape[1])
    np.add.at(hist, (rows, bins.ravel()), (mag * w[None, :]).ravel())
    for _ in range(2):   # circular smoothing
        hist = (np.roll(hist, 1, axis=1) + hist + np.roll(hist, -1, axis=1)) / 3.0
    peak = np.argmax(hist, axis=1)
    left = hist[np.arange(len(hist)), (peak - 1) % _ORI_BINS]
    right = hist[np.arange(len(hist)), (peak + 1) % _ORI_BINS]
    center = hist[np.arange(len(hist)), peak]
    denom = left - 2 * center + right
    shift = np.where(np.abs(denom) > 1e-12, 0.5 * (left - right) / denom, 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    return (peak + shift + 0.5) * (2 * np.pi / _ORI_BINS)


def _describe(gx, gy, kps_xy, scales, angles) -> np.ndarray:
    """4x4x8 oriented gradient histograms, trilinearly binned."""
    n = len(kps_xy)
    mag, ori = _sample_patch_gradients(gx, gy, kps_xy, scales, angles)
    half = (_GRID - 1) / 2.0
    gg = np.arange(_GRID) - half
    ux, uy = np.meshgrid(gg, gg)
    r2 = ux.ravel() ** 2 + uy.ravel() ** 2
    w = np.exp(-r2 / (2.0 * (0.5 * _GRID) ** 2))
    weights = mag * w[None, :]

    # continuous cell coordinates in [-0.5, 3.5] and orientation bins in [0, 8)
    cell_x = (ux.ravel() + half) / _GRID * 4.0 - 0.5
    cell_y = (uy.ravel() + half) / _GRID * 4.0 - 0.5
    obin = (ori % (2 * np.pi)) / (2 * np.pi) * 8.0

    desc = np.zeros((n, 4, 4, 8))
    x0 = np.floor(cell_x).astype(int)
    y0 = np.floor(cell_y).astype(int)
    fx = cell_x - x0
    fy = cell_y - y0
    o0 = np.floor(obin).astype(int)
    fo = obin - o0
    rows = np.repeat(np.arange(n), mag.shape[1]).reshape(n, -1)
    for dy_, wy in ((0, 1 - fy), (1, fy)):
        yy = y0 + dy_
        my = (yy >= 0) & (yy < 4)
        for dx_, wx in ((0, 1 - fx), (1, fx)):
            xx = x0 + dx_
            mxy = my & (xx >= 0) & (xx < 4)
            if not mxy.any():
                continue
            for do_, wo in ((0, 1 - fo), (1, fo)):
                oo = (o0 + do_) % 8
                contrib = weights * (wy * wx)[None, :] * wo
                np.add.at(desc,
                          (rows[:, mxy], yy[mxy][None, :].repeat(n, 0),
                           xx[mxy][None, :].repeat(n, 0), oo[:, mxy]),
                          contrib[:, mxy])
    desc = desc.reshape(n, DESCRIPTOR_DIM)
    norm = np.linalg.norm(desc, axis=1, keepdims=True)
    desc = desc / np.maximum(norm, 1e-12)
    desc = np.minimum(desc, 0.2)
    norm = np.linalg.norm(desc, axis=1, keepdims=True)
    return (desc / np.maximum(norm, 1e-12)).astype(np.float32)


def _detect_local(image: np.ndarray, cfg: DetectorConfig):
    img = image.astype(np.float64) / 255.0
    h, w = img.shape
    levels = []
    responses = []
    for lvl in range(cfg.n_levels):
        sigma = cfg.base_sigma * cfg.scale_step ** lvl
        blurred = ndimage.gaussian_filter(img, sigma)
        levels.append((sigma, blurred))
        responses.append(_harris_response(blurred, sigma, cfg.harris_k))
    global_max = max(float(r.max()) for r in responses)
    if global_max <= 1e-12:
        return [], DescriptorSet(np.zeros((0, DESCRIPTOR_DIM), np.float32), "local")
    threshold = cfg.threshold_rel * global_max

    found = []           # rows: (response, x, y, sigma, level)
    for lvl, (sigma, _blurred) in enumerate(levels):
        r = responses[lvl]
        margin = max(2, int(np.ceil(1.5 * sigma)))
        is_max = (r == ndimage.maximum_filter(r, size=3)) & (r > threshold)
        is_max[:margin] = is_max[-margin:] = False
        is_max[:, :margin] = is_max[:, -margin:] = False
        ys, xs = np.nonzero(is_max)
        if len(ys) == 0:
            continue
        off_x, off_y = _subpixel_offset(r, ys, xs)
        for yy, xx, ox, oy in zip(ys, xs, off_x, off_y):
            found.append((float(r[yy, xx]), xx + ox, yy + oy, sigma, lvl))

    if not found:
        return [], DescriptorSet(np.zeros((0, DESCRIPTOR_DIM), np.float32), "local")
    found.sort(key=lambda t: (-t[0], t[2], t[1]))
    found = found[:cfg.max_features]

    # descriptor support must stay inside the image
    keep = []
    for resp, x, y, sigma, lvl in found:
        ext = sigma * (_GRID / 2.0) * np.sqrt(2.0) + 2.0
        if ext <= x <= w - 1 - ext and ext <= y <= h - 1 - ext:
            keep.append((resp, x, y, sigma, lvl))
    if not keep:
        return [], DescriptorSet(np.zeros((0, DESCRIPTOR_DIM), np.float32), "local")

    kps = []
    descs = np.zeros((len(keep), DESCRIPTOR_DIM), np.float32)
    by_level: dict[int, list[int]] = {}
    for i, (_resp, _x, _y, _sigma, lvl) in enumerate(keep):
        by_level.setdefault(lvl, []).append(i)
    kp_entries: list = [None] * len(keep)
    for lvl, idxs in by_level.items():
        sigma, blurred = levels[lvl]
        gy, gx = np.gradient(blurred)
        xy = np.array([[keep[i][1], keep[i][2]] for i in idxs])
        scales = np.full(len(idxs), sigma)
        angles = _dominant_orientations(gx, gy, xy, scales)
        descs[idxs] = _describe(gx, gy, xy, scales, angles)
        for j, i in enumerate(idxs):
            kp_entries[i] = Keypoint(x=keep[i][1], y=keep[i][2], scale=sigma,
                                     orientation=float(angles[j]),
                                     response=keep[i][0])
    kps = kp_entries
    return kps, DescriptorSet(descs, "local")


# ---------------------------------------------------------------------------
# Intensity-region detection (region features)
# ---------------------------------------------------------------------------

def _detect_regions(image: np.ndarray, cfg: DetectorConfig):
    img = image.astype(np.float64)
    h, w = img.shape
    if img.max() == img.min():
        return [], DescriptorSet(np.zeros((0, DESCRIPTOR_DIM), np.float32), "region")
    max_area = cfg.region_max_area_frac * h * w
    thresholds = np.quantile(img, np.linspace(0.2, 0.8, cfg.region_levels))
    regions = []       # (area, cx, cy, scale, angle)
    for tau in thresholds:
        for binary in (img < tau, img > tau):
            labels, count = ndimage.label(binary)
            if count == 0:
                continue
            areas = ndimage.sum_labels(np.ones_like(img), labels,
                                       index=np.arange(1, count + 1))
            ok = np.nonzero((areas >= cfg.region_min_area) & (areas <= max_area))[0]
            if len(ok) == 0:
                continue
            coms = ndimage.center_of_mass(binary, labels, index=ok + 1)
            for a_i, (cy, cx) in zip(areas[ok], coms):
                regions.append((float(a_i), float(cx), float(cy)))
    if not regions:
        return [], DescriptorSet(np.zeros((0, DESCRIPTOR_DIM), np.float32), "region")

    # deduplicate across thresholds: keep the largest region near a centroid
    regions.sort(key=lambda t: (-t[0], t[2], t[1]))
    kept = []
    for area, cx, cy in regions:
        scale = np.sqrt(area / np.pi)        # effective blob radius
        dup = any((kx - cx) ** 2 + (ky - cy) ** 2 < (0.75 * ks) ** 2
                  and 0.6 < ks / scale < 1.67 for _, kx, ky, ks in kept)
        if dup:
            continue
        # descriptor window spans roughly twice the blob radius
        ext = (scale / 4.0) * (_GRID / 2.0) * np.sqrt(2.0) + 2.0
        if not (ext <= cx <= w - 1 - ext and ext <= cy <= h - 1 - ext):
            continue
        kept.append((area, cx, cy, scale))
        if len(kept) >= cfg.max_features:
            break
    if not kept:
        return [], DescriptorSet(np.zeros((0, DESCRIPTOR_DIM), np.float32), "region")

    blurred = ndimage.gaussian_filter(img / 255.0, 1.6)
    gy, gx = np.gradient(blurred)
    xy = np.array([[cx, cy] for _a, cx, cy, _s in kept])
    spacing = np.array([s for *_rest, s in kept]) / 4.0
    angles = _dominant_orientations(gx, gy, xy, spacing)
    descs = _describe(gx, gy, xy, spacing, angles)
    kps = [Keypoint(x=cx, y=cy, scale=s, orientation=float(ang), response=a)
           for (a, cx, cy, s), ang in zip(kept, angles)]
    return kps, DescriptorSet(descs, "region")


DETECTORS = {
    "local": _detect_local,
    "region": _detect_regions,
}


def detect_and_describe(image: np.ndarray, config: DetectorConfig,
                        kind: str = "local"):
    """Detect keypoints and compute descriptors of the requested kind.

    Deterministic for fixed input and config; keypoints come sorted by
    response strength, at most ``config.max_features`` of them.
    """
    if kind not in DETECTORS:
        raise KeyError(f"unknown detector kind {kind!r}")
    return DETECTORS[kind](image, config)


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------

def match_descriptors(query: DescriptorSet, ref: DescriptorSet,
                      ratio: float = 0.8, mutual: bool = True) -> list[MatchPair]:
    """Mutual nearest neighbors passing Lowe's ratio test on both sides."""
    if query.kind != ref.kind:
        raise ValueError(f"descriptor kinds differ: {query.kind} vs {ref.kind}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must lie in (0, 1]")
    nq, nr = len(query), len(ref)
    if nq == 0 or nr == 0:
        return []
    d2 = np.maximum(2.0 - 2.0 * (query.vectors.astype(np.float64)
                                 @ ref.vectors.astype(np.float64).T), 0.0)

    q_order = np.argsort(d2, axis=1, kind="stable")
    q_first = q_order[:, 0]
    q_d1 = d2[np.arange(nq), q_first]
    q_d2 = d2[np.arange(nq), q_order[:, 1]] if nr > 1 else np.full(nq, np.inf)

    r_order = np.argsort(d2, axis=0, kind="stable")
    r_first = r_order[0, :]
    r_d1 = d2[r_first, np.arange(nr)]
    r_d2 = d2[r_order[1, :], np.arange(nr)] if nq > 1 else np.full(nr, np.inf)

    pairs = []
    for qi in range(nq):
        ri = q_first[qi]
        if mutual and r_first[ri] != qi:
            continue
        if not q_d1[qi] < (ratio ** 2) * q_d2[qi]:
            continue
        if not r_d1[ri] < (ratio ** 2) * r_d2[ri]:
            continue
        pairs.append(MatchPair(query_idx=int(qi), ref_idx=int(ri),
                               distance=float(np.sqrt(q_d1[qi]))))
    pairs.sort(key=lambda m: (m.distance, m.query_idx))
    return pairs


# ---------------------------------------------------------------------------
# Virtual-line verification
# ---------------------------------------------------------------------------

def verify_virtual_lines(matches: list[MatchPair], query_kps, ref_kps,
                         k: int = 4, length_ratio: float = 1.5,
                         angle_deg: float = 20.0) -> VlineResult:
    """Keep matches whose virtual lines to neighboring matches are consistent.

    An edge between two matches is consistent when its query/reference
    segment length ratio is within ``length_ratio`` of the global (median)
    ratio and its rotation within ``angle_deg`` of the global rotation.  A
    match needs >= k consistent edges among its nearest 2k neighbors.  With
    |matches| <= k the input is passed through with verified=False.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    n = len(matches)
    if n <= k:
        return VlineResult(matches=list(matches), verified=False)

    order = sorted(range(n), key=lambda i: (matches[i].query_idx, matches[i].ref_idx))
    ms = [matches[i] for i in order]
    qp = np.array([[query_kps[m.query_idx].x, query_kps[m.query_idx].y] for m in ms])
    rp = np.array([[ref_kps[m.ref_idx].x, ref_kps[m.ref_idx].y] for m in ms])

    dq = np.linalg.norm(qp[:, None, :] - qp[None, :, :], axis=-1)
    np.fill_diagonal(dq, np.inf)
    n_ex = min(2 * k, n - 1)
    nbrs = np.argsort(dq, axis=1, kind="stable")[:, :n_ex]

    edges_i = np.repeat(np.arange(n), n_ex)
    edges_j = nbrs.ravel()
    dq_vec = qp[edges_j] - qp[edges_i]
    dr_vec = rp[edges_j] - rp[edges_i]
    lq = np.linalg.norm(dq_vec, axis=1)
    lr = np.linalg.norm(dr_vec, axis=1)
    ok_len = (lq > 1e-9) & (lr > 1e-9)
    log_ratio = np.where(ok_len, np.log(np.maximum(lr, 1e-12))
                         - np.log(np.maximum(lq, 1e-12)), 0.0)
    delta = np.where(ok_len,
                     np.arctan2(dr_vec[:, 1], dr_vec[:, 0])
                     - np.arctan2(dq_vec[:, 1], dq_vec[:, 0]), 0.0)

    global_log_ratio = float(np.median(log_ratio[ok_len])) if ok_len.any() else 0.0
    sines, cosines = np.sin(delta[ok_len]), np.cos(delta[ok_len])
    global_delta = float(np.arctan2(sines.sum(), cosines.sum())) if ok_len.any() else 0.0

    ang = np.abs(np.angle(np.exp(1j * (delta - global_delta))))
    consistent = (ok_len
                  & (np.abs(log_ratio - global_log_ratio) <= np.log(length_ratio))
                  & (ang <= np.radians(angle_deg)))
    support = consistent.reshape(n, n_ex).sum(axis=1)
    inliers = [ms[i] for i in range(n) if support[i] >= k]
    return VlineResult(matches=inliers, verified=True)
