"""Bottom-up self-information saliency, color backprojection and their fusions."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

CHANNELS = ("c1", "c2", "c3", "luma", "rg", "by")


class Mode(str, enum.Enum):
    NOSAL = "nosal"
    BU = "bu"
    TD = "td"
    BU_TD = "bu+td"
    BU_BUmaskTD = "bu+butd"
    PRIOR = "prior"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        key = str(value).strip().lower()
        for m in cls:
            if key in (m.value, m.name.lower()):
                return m
        raise ValueError(f"unknown method {value!r}; expected one of "
                         + ", ".join(m.value for m in cls))

    @property
    def uses_bottom_up(self) -> bool:
        return self in (Mode.BU, Mode.BU_TD, Mode.BU_BUmaskTD)

    @property
    def uses_top_down(self) -> bool:
        return self in (Mode.TD, Mode.BU_TD, Mode.BU_BUmaskTD)

    @property
    def uses_saliency(self) -> bool:
        return self.uses_bottom_up or self.uses_top_down


class AttentionError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionConfig:
    mode: Mode = Mode.NOSAL
    omega_a: float = 0.2
    omega_b: float = 0.8
    th_aim: float = 0.95
    bins: int = 64
    colorspace: str = "c1c2c3"
    density_bins: int = 256
    density_smooth_sigma: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if abs(self.omega_a + self.omega_b - 1.0) > 1e-9:
            raise AttentionError("omega_a + omega_b must equal 1")
        if not 0 < self.th_aim < 1:
            raise AttentionError("th_aim must be in (0, 1)")
        if self.colorspace not in ("c1c2c3", "rgb"):
            raise AttentionError("colorspace must be 'c1c2c3' or 'rgb'")
        if self.bins < 1 or self.density_bins < 2:
            raise AttentionError("histogram bin counts must be positive")


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    values: np.ndarray
    kind: str  # bottom_up | top_down | fused

    @property
    def shape(self):
        return self.values.shape


def _normalize_max(values: np.ndarray) -> np.ndarray:
    """Scale by the maximum; constant maps (no contrast) become all-zero."""
    hi = values.max()
    if hi <= 0 or hi == values.min():
        return np.zeros_like(values, dtype=np.float64)
    return values / hi


# ---------------------------------------------------------------------------
# color


def to_c1c2c3(rgb: np.ndarray) -> np.ndarray:
    """RGB (0..255) to C1C2C3, each channel atan(ratio) rescaled to [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    one = 1.0
    c1 = np.arctan(r / np.maximum(np.maximum(g, b), one))
    c2 = np.arctan(g / np.maximum(np.maximum(r, b), one))
    c3 = np.arctan(b / np.maximum(np.maximum(r, g), one))
    return np.stack([c1, c2, c3], axis=-1) * (2.0 / math.pi)


def to_colorspace(rgb: np.ndarray, colorspace: str = "c1c2c3") -> np.ndarray:
    if colorspace == "c1c2c3":
        return to_c1c2c3(rgb)
    return np.asarray(rgb, dtype=np.float64) / 255.0


@dataclass(frozen=True, eq=False)
class ColorHistogram:
    bins: int
    counts: np.ndarray  # (bins, bins, bins) nonnegative

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def normalized(self) -> np.ndarray:
        t = self.total
        return self.counts / t if t > 0 else self.counts.astype(np.float64)


def _bin_index(image: np.ndarray, bins: int) -> np.ndarray:
    idx = np.floor(np.clip(image, 0.0, 1.0) * bins).astype(np.int64)
    np.minimum(idx, bins - 1, out=idx)
    return (idx[..., 0] * bins + idx[..., 1]) * bins + idx[..., 2]


def build_histogram(template: np.ndarray, bins: int = 64) -> ColorHistogram:
    """Normalized joint 3D histogram of a template already in the working colorspace."""
    template = np.asarray(template, dtype=np.float64)
    if template.size == 0 or template.shape[-1] != 3:
        raise AttentionError("template must be a nonempty 3-channel raster")
    flat = _bin_index(template.reshape(-1, 3), bins)
    counts = np.bincount(flat, minlength=bins**3).astype(np.float64)
    counts /= counts.sum()
    return ColorHistogram(bins=bins, counts=counts.reshape(bins, bins, bins))


def template_from_color(rgb, size: int = 8, colorspace: str = "c1c2c3") -> np.ndarray:
    patch = np.broadcast_to(np.asarray(rgb, dtype=np.float64), (size, size, 3))
    return to_colorspace(patch, colorspace)


def histogram_for_color(rgb, bins: int = 64, colorspace: str = "c1c2c3") -> ColorHistogram:
    return build_histogram(template_from_color(rgb, colorspace=colorspace), bins)


def backproject(image: np.ndarray, hist: ColorHistogram, mask: np.ndarray | None = None) -> SaliencyMap:
    """Per-pixel histogram mass of the pixel's color bin, scaled to max 1.

    ``mask`` (bool, image-shaped) zeroes every pixel outside it before scaling.
    """
    image = np.asarray(image, dtype=np.float64)
    values = hist.normalized.ravel()[_bin_index(image, hist.bins)]
    if mask is not None:
        if mask.shape != values.shape:
            raise AttentionError("mask shape does not match image")
        values = np.where(mask, values, 0.0)
    hi = values.max(initial=0.0)
    if hi > 0:
        values = values / hi
    return SaliencyMap(values, "top_down")


# ---------------------------------------------------------------------------
# bottom-up


@dataclass(frozen=True, eq=False)
class FilterBank:
    kernels: np.ndarray  # (K, k, k)
    channels: tuple[str, ...]

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        object.__setattr__(self, "kernels", k)
        if k.ndim != 3 or k.shape[1] != k.shape[2]:
            raise AttentionError("kernels must be an array of square k x k filters")
        if k.shape[0] < 4:
            raise AttentionError("a filter bank needs at least 4 kernels")
        if k.shape[1] % 2 != 1:
            raise AttentionError("kernel size must be odd")
        if len(self.channels) != k.shape[0]:
            raise AttentionError("one channel assignment per kernel is required")
        for ch in self.channels:
            if ch not in CHANNELS:
                raise AttentionError(f"unknown channel {ch!r}")
        sums = np.abs(k.sum(axis=(1, 2)))
        if (sums > 1e-9).any():
            raise AttentionError(f"kernel {int(np.argmax(sums))} is not zero-mean")

    @property
    def size(self) -> int:
        return self.kernels.shape[1]


def load_filter_bank(text: str) -> FilterBank:
    """Parse ``filters <K> <k>`` then per filter a ``filter <channel>`` line and k rows."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not lines:
        raise AttentionError("empty filter bank file")
    lineno, head = lines[0]
    parts = head.split()
    if len(parts) != 3 or parts[0] != "filters":
        raise AttentionError(f"line {lineno}: expected 'filters <K> <k>'")
    n, k = int(parts[1]), int(parts[2])
    kernels, channels = [], []
    pos = 1
    for _ in range(n):
        if pos >= len(lines):
            raise AttentionError("truncated filter bank file")
        lineno, ln = lines[pos]
        parts = ln.split()
        if len(parts) != 2 or parts[0] != "filter":
            raise AttentionError(f"line {lineno}: expected 'filter <channel>'")
        channels.append(parts[1])
        rows = []
        for r in range(k):
            pos += 1
            if pos >= len(lines):
                raise AttentionError("truncated filter bank file")
            lineno, ln = lines[pos]
            row = [float(v) for v in ln.split()]
            if len(row) != k:
                raise AttentionError(f"line {lineno}: expected {k} values")
            rows.append(row)
        kernels.append(rows)
        pos += 1
    if pos != len(lines):
        raise AttentionError(f"line {lines[pos][0]}: trailing content after {n} filters")
    return FilterBank(np.array(kernels), tuple(channels))


def dump_filter_bank(bank: FilterBank) -> str:
    out = [f"filters {bank.kernels.shape[0]} {bank.size}"]
    for ch, ker in zip(bank.channels, bank.kernels):
        out.append(f"filter {ch}")
        out.extend(" ".join(repr(float(v)) for v in row) for row in ker)
    return "\n".join(out) + "\n"


def _zero_mean_unit(k: np.ndarray) -> np.ndarray:
    k = k - k.mean()
    k = k / np.abs(k).sum()
    return k - k.mean()


def default_filter_bank(size: int = 9) -> FilterBank:
    """12 filters: 4 odd Gabor edges and 4 center-surround on luma, 2+2 color-opponent."""
    half = size // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    kernels, channels = [], []
    for theta in np.deg2rad([0.0, 45.0, 90.0, 135.0]):
        u = x * math.cos(theta) + y * math.sin(theta)
        g = np.exp(-(x**2 + y**2) / (2 * 2.0**2)) * np.sin(2 * math.pi * u / 6.0)
        kernels.append(_zero_mean_unit(g))
        channels.append("luma")

    def dog(sc, ss):
        r2 = x**2 + y**2
        c = np.exp(-r2 / (2 * sc**2)) / (2 * math.pi * sc**2)
        s = np.exp(-r2 / (2 * ss**2)) / (2 * math.pi * ss**2)
        return _zero_mean_unit(c - s)

    for sc, ss in [(0.7, 1.5), (1.0, 2.0), (1.5, 3.0), (2.0, 4.0)]:
        kernels.append(dog(sc, ss))
        channels.append("luma")
    for ch in ("rg", "by"):
        for sc, ss in [(1.0, 2.5), (2.0, 4.0)]:
            kernels.append(dog(sc, ss))
            channels.append(ch)
    return FilterBank(np.array(kernels), tuple(channels))


def _feature_channels(image: np.ndarray, needed) -> dict[str, np.ndarray]:
    """Channels offset by their own minimum so a global brightness shift cancels."""
    img = np.asarray(image)
    out = {}
    if np.issubdtype(img.dtype, np.integer):
        r, g, b = (img[..., i].astype(np.int64) for i in range(3))
        ints = {"luma": (r + g + b, 765.0), "rg": (r - g, 255.0), "by": (2 * b - r - g, 510.0)}
        for name, (arr, scale) in ints.items():
            if name in needed:
                out[name] = (arr - arr.min()) / scale
    else:
        r, g, b = (img[..., i].astype(np.float64) for i in range(3))
        floats = {"luma": (r + g + b) / 765.0, "rg": (r - g) / 255.0, "by": (2 * b - r - g) / 510.0}
        for name, arr in floats.items():
            if name in needed:
                out[name] = arr - arr.min()
    if needed & {"c1", "c2", "c3"}:
        c = to_c1c2c3(img)
        for i, name in enumerate(("c1", "c2", "c3")):
            if name in needed:
                out[name] = c[..., i] - c[..., i].min()
    return out


@lru_cache(maxsize=32)
def _kernel_spectra(kernels_bytes: bytes, n: int, k: int, shape: tuple[int, int]) -> np.ndarray:
    kernels = np.frombuffer(kernels_bytes, dtype=np.float64).reshape(n, k, k)
    return np.fft.rfft2(kernels[:, ::-1, ::-1], s=shape)


def filter_responses(image: np.ndarray, bank: FilterBank) -> np.ndarray:
    """(K, rows, cols) responses, reflect-padded 'same' convolution via FFT."""
    k = bank.size
    half = k // 2
    rows, cols = image.shape[:2]
    if rows < k or cols < k:
        raise AttentionError(f"image {rows}x{cols} is smaller than the {k}x{k} kernels")
    chans = _feature_channels(image, set(bank.channels))
    shape = (rows + 2 * half + k - 1, cols + 2 * half + k - 1)
    spectra = _kernel_spectra(bank.kernels.tobytes(), len(bank.channels), k, shape)
    out = np.empty((len(bank.channels), rows, cols))
    cache = {}
    for i, ch in enumerate(bank.channels):
        if ch not in cache:
            padded = np.pad(chans[ch], half, mode="reflect")
            cache[ch] = np.fft.rfft2(padded, s=shape)
        full = np.fft.irfft2(cache[ch] * spectra[i], s=shape)
        # correlation with the kernel, aligned so output pixel (0, 0) is centered
        out[i] = full[k - 1:k - 1 + rows, k - 1:k - 1 + cols]
    return out


def self_information(responses: np.ndarray, density_bins: int = 256, smooth_sigma: float = 2.0) -> np.ndarray:
    """Sum over filters of -log p(response), with per-filter smoothed histograms."""
    n_pix = responses[0].size
    floor = 1.0 / (10.0 * n_pix)
    info = np.zeros(responses.shape[1:])
    for r in responses:
        lo, hi = r.min(), r.max()
        if hi - lo <= 1e-12 * max(1.0, abs(hi), abs(lo)):
            continue  # constant response carries no contrast
        idx = np.floor((r - lo) / (hi - lo) * density_bins).astype(np.int64)
        np.clip(idx, 0, density_bins - 1, out=idx)
        hist = np.bincount(idx.ravel(), minlength=density_bins).astype(np.float64)
        if smooth_sigma > 0:
            hist = gaussian_filter1d(hist, smooth_sigma, mode="constant")
        p = np.maximum(hist / hist.sum(), floor)
        info -= np.log(p[idx])
    return info


def bottom_up_info(image: np.ndarray, bank: FilterBank, cfg: AttentionConfig | None = None) -> SaliencyMap:
    cfg = cfg or AttentionConfig()
    responses = filter_responses(image, bank)
    info = self_information(responses, cfg.density_bins, cfg.density_smooth_sigma)
    return SaliencyMap(_normalize_max(info), "bottom_up")


def threshold_percentile(smap: SaliencyMap, th: float) -> SaliencyMap:
    """Zero everything below the nearest-rank ``th`` quantile; ties are kept."""
    if not 0 < th < 1:
        raise AttentionError("percentile must be in (0, 1)")
    flat = np.sort(smap.values, axis=None)
    rank = min(int(math.floor(th * flat.size + 1e-9)), flat.size - 1)
    q = flat[rank]
    return SaliencyMap(np.where(smap.values >= q, smap.values, 0.0), smap.kind)


def fuse_bu_td(info_t: SaliencyMap, bp: SaliencyMap, cfg: AttentionConfig | None = None) -> SaliencyMap:
    cfg = cfg or AttentionConfig()
    if info_t.shape != bp.shape:
        raise AttentionError(f"shape mismatch {info_t.shape} vs {bp.shape}")
    f = cfg.omega_a * info_t.values + cfg.omega_b * bp.values
    hi = f.max(initial=0.0)
    if hi > 0:
        f = f / hi
    return SaliencyMap(f, "fused")


def fuse_bu_masked_td(image: np.ndarray, info_t: SaliencyMap, hist: ColorHistogram,
                      cfg: AttentionConfig | None = None) -> SaliencyMap:
    """Backproject only where the thresholded bottom-up map is positive, then fuse."""
    cfg = cfg or AttentionConfig()
    image = np.asarray(image)
    if image.shape[:2] != info_t.shape:
        raise AttentionError(f"shape mismatch {image.shape[:2]} vs {info_t.shape}")
    mask = info_t.values > 0
    masked = image * mask[..., None].astype(image.dtype)
    bp = backproject(to_colorspace(masked, cfg.colorspace), hist, mask=mask)
    return fuse_bu_td(info_t, bp, cfg)


def compute_saliency(view, cfg: AttentionConfig, bank: FilterBank | None = None,
                     hist: ColorHistogram | None = None) -> SaliencyMap | None:
    """Saliency for one rendered view according to ``cfg.mode`` (None for NOSAL/PRIOR)."""
    mode = cfg.mode
    if not mode.uses_saliency:
        return None
    if mode.uses_top_down and hist is None:
        raise AttentionError(f"{mode.value.upper()} requires target color (no template histogram)")
    image = view.color if hasattr(view, "color") else np.asarray(view)
    info_t = None
    if mode.uses_bottom_up:
        bank = bank or default_bank()
        info_t = threshold_percentile(bottom_up_info(image, bank, cfg), cfg.th_aim)
    if mode is Mode.BU:
        return info_t
    if mode is Mode.TD:
        return backproject(to_colorspace(image, cfg.colorspace), hist)
    if mode is Mode.BU_TD:
        bp = backproject(to_colorspace(image, cfg.colorspace), hist)
        return fuse_bu_td(info_t, bp, cfg)
    return fuse_bu_masked_td(image, info_t, hist, cfg)


DEFAULT_BANK_PATH = Path(__file__).with_name("data") / "default_bank.txt"


@lru_cache(maxsize=1)
def default_bank() -> FilterBank:
    """The shipped filter bank file."""
    return load_filter_bank(DEFAULT_BANK_PATH.read_text(encoding="utf-8"))
