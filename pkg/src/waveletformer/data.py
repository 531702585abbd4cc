"""Synthetic haze via the atmospheric scattering model, augmentation and image I/O.

Haze synthesis follows ``I = J*t + A*(1 - t)`` with transmission
``t = exp(-beta * d)``. Images are ``float64`` arrays of shape ``[3, H, W]``
with values in ``[0, 1]``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

T_MIN = 0.05
DEPTH_KINDS = ("ramp", "radial", "blocks")


class ImageFormatError(ValueError):
    """Malformed or unsupported raster file."""


@dataclass
class ImagePair:
    hazy: np.ndarray
    clean: np.ndarray
    id: str = ""

    def __post_init__(self):
        if self.hazy.shape != self.clean.shape:
            raise ValueError(f"hazy {self.hazy.shape} and clean {self.clean.shape} shapes differ")
        self.hazy = np.clip(self.hazy, 0.0, 1.0)
        self.clean = np.clip(self.clean, 0.0, 1.0)


@dataclass
class HazeParams:
    A: np.ndarray
    beta: float
    depth: np.ndarray
    t_min: float = T_MIN

    def __post_init__(self):
        self.A = np.broadcast_to(np.asarray(self.A, dtype=np.float64), (3,)).copy()
        if np.any(self.A < 0.6) or np.any(self.A > 1.0):
            raise ValueError(f"atmospheric light must lie in [0.6, 1.0], got {self.A}")
        if self.beta < 0:
            raise ValueError("scattering coefficient must be non-negative")
        if np.any(np.asarray(self.depth) < 0):
            raise ValueError("depth must be non-negative")

    def transmission(self) -> np.ndarray:
        return transmission_map(self.depth, self.beta)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "beta": float(self.beta), "t_min": self.t_min}


@dataclass(frozen=True)
class AugmentSpec:
    patch: int = 256
    rotations: tuple[int, ...] = (90, 180, 270)
    flip_prob: float = 0.5

    def __post_init__(self):
        if any(r not in (90, 180, 270) for r in self.rotations):
            raise ValueError("rotations must be multiples of 90 in {90, 180, 270}")


# -- scattering model -------------------------------------------------------
def transmission_map(depth, beta: float, t_min: float | None = None) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if beta < 0 or np.any(depth < 0):
        raise ValueError("depth and beta must be non-negative")
    t = np.exp(-beta * depth)
    return np.maximum(t, t_min) if t_min is not None else t


def apply_asm(clean: np.ndarray, params: HazeParams) -> np.ndarray:
    """Degrade ``clean[3,H,W]`` into a hazy image."""
    t = params.transmission()[None]
    a = params.A[:, None, None]
    return clean * t + a * (1.0 - t)


def invert_asm(hazy: np.ndarray, params: HazeParams, strict: bool = True) -> np.ndarray:
    """Recover ``J = (I - A(1 - t)) / t``.

    With ``strict`` any transmission below ``params.t_min`` raises; otherwise
    the transmission is floored at ``t_min`` and the estimate there is biased.
    """
    t = params.transmission()
    if strict and np.any(t < params.t_min):
        raise ValueError(f"transmission falls below the floor {params.t_min} (min {t.min():.3g})")
    t = np.maximum(t, params.t_min)[None]
    a = params.A[:, None, None]
    return (hazy - a * (1.0 - t)) / t


# -- synthetic scenes -------------------------------------------------------
def synth_depth(h: int, w: int, kind: str = "ramp", seed: int = 0) -> np.ndarray:
    """Dimensionless non-negative depth field in ``[0, 1]``."""
    if h < 2 or w < 2:
        raise ValueError("depth fields need extents of at least 2")
    if kind == "ramp":
        return np.repeat((np.arange(h) / (h - 1))[:, None], w, axis=1)
    if kind == "radial":
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        r = np.hypot(yy - (h - 1) / 2.0, xx - (w - 1) / 2.0)
        return r / r.max()
    if kind == "blocks":
        rng = np.random.default_rng(seed)
        gh, gw = rng.integers(2, 6, size=2)
        levels = rng.uniform(0.0, 1.0, size=(gh, gw))
        rows = np.minimum(np.arange(h) * gh // h, gh - 1)
        cols = np.minimum(np.arange(w) * gw // w, gw - 1)
        return levels[rows][:, cols]
    raise ValueError(f"unknown depth kind {kind!r}; choose from {DEPTH_KINDS}")


def synth_clean(h: int, w: int, seed: int = 0) -> np.ndarray:
    """A smooth, colourful test scene: background gradient plus a few flat shapes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / np.array([max(h - 1, 1), max(w - 1, 1)])[:, None, None]
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    img = c0[:, None, None] * (1 - yy) + c1[:, None, None] * yy
    for _ in range(rng.integers(3, 6)):
        color = rng.uniform(0.05, 0.95, size=3)
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        ry, rx = rng.uniform(0.08, 0.25, size=2)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[:, mask] = color[:, None]
    return np.clip(img, 0.0, 1.0)


def random_haze(h: int, w: int, rng: np.random.Generator, beta_range=(0.5, 1.5),
                kind: str = "blocks", depth_seed: int | None = None) -> HazeParams:
    a = rng.uniform(0.6, 1.0)
    beta = rng.uniform(*beta_range) if beta_range[1] > beta_range[0] else beta_range[0]
    seed = int(rng.integers(2 ** 31)) if depth_seed is None else depth_seed
    return HazeParams(np.full(3, a), float(beta), synth_depth(h, w, kind, seed))


def make_pair(clean: np.ndarray, params: HazeParams, id: str = "") -> ImagePair:
    return ImagePair(apply_asm(clean, params), clean, id)


# -- augmentation -----------------------------------------------------------
def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def augment(pair: ImagePair, spec: AugmentSpec, seed=0) -> ImagePair:
    """Same random crop, quarter turn and horizontal flip applied to both images.

    The rotation is drawn uniformly from ``{0} + spec.rotations``. All steps are
    exact pixel permutations.
    """
    rng = _rng(seed)
    _, h, w = pair.hazy.shape
    p = spec.patch
    if p > h or p > w:
        raise ValueError(f"crop {p} does not fit a {h}x{w} image")
    top = int(rng.integers(0, h - p + 1))
    left = int(rng.integers(0, w - p + 1))
    quarter = int(rng.choice((0,) + tuple(r // 90 for r in spec.rotations)))
    flip = bool(rng.random() < spec.flip_prob)

    def apply(img):
        out = img[:, top:top + p, left:left + p]
        out = np.rot90(out, quarter, axes=(1, 2))
        if flip:
            out = out[:, :, ::-1]
        return np.ascontiguousarray(out)

    return ImagePair(apply(pair.hazy), apply(pair.clean), pair.id)


def rotate90(img: np.ndarray, k: int = 1) -> np.ndarray:
    return np.ascontiguousarray(np.rot90(img, k, axes=(1, 2)))


def hflip(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(img[:, :, ::-1])


# -- image files ------------------------------------------------------------
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_ppm(raw: bytes) -> np.ndarray:
    if raw[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (P6) file")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise ImageFormatError("truncated PPM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise ImageFormatError(f"bad PPM header field {m.group(1)!r}") from None
        pos = m.end()
    w, h, maxval = fields
    if w < 1 or h < 1:
        raise ImageFormatError(f"invalid PPM extents {w}x{h}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM depth (maxval {maxval}); only 8-bit is supported")
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace after PPM header")
    payload = raw[pos + 1:]
    need = w * h * 3
    if len(payload) < need:
        raise ImageFormatError(f"truncated PPM payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload[:need], dtype=np.uint8).reshape(h, w, 3)


def to_bytes(img: np.ndarray) -> np.ndarray:
    """``[3,H,W]`` floats -> ``[H,W,3]`` bytes, clamped and rounded half-up."""
    img = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB file (P6 PPM, or PNG when Pillow is available) as ``[3,H,W]`` in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        arr = _read_ppm(path.read_bytes())
    else:
        try:
            from PIL import Image
        except ImportError:
            raise ImageFormatError(f"{path.suffix} files need Pillow; use .ppm") from None
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA", "L", "P"):
                raise ImageFormatError(f"unsupported image mode {im.mode}")
            arr = np.asarray(im.convert("RGB"))
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    path = Path(path)
    arr = to_bytes(img)
    if path.suffix.lower() in (".ppm", ".pnm"):
        h, w, _ = arr.shape
        path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + arr.tobytes())
    else:
        from PIL import Image

        Image.fromarray(arr, "RGB").save(path)


def load_pairs(directory) -> list[ImagePair]:
    """Load ``<id>_hazy.ppm`` / ``<id>_gt.ppm`` pairs, sorted by id."""
    directory = Path(directory)
    pairs = []
    for hazy_path in sorted(directory.glob("*_hazy.ppm")):
        pid = hazy_path.name[: -len("_hazy.ppm")]
        gt_path = directory / f"{pid}_gt.ppm"
        if not gt_path.exists():
            raise FileNotFoundError(f"missing ground truth {gt_path.name} for {hazy_path.name}")
        pairs.append(ImagePair(load_image(hazy_path), load_image(gt_path), pid))
    if not pairs:
        raise FileNotFoundError(f"no *_hazy.ppm files in {directory}")
    return pairs


def write_synthetic_set(out_dir, count: int, h: int, w: int, depth_kind: str = "blocks",
                        beta_range=(0.5, 1.5), seed: int = 0) -> list[dict]:
    """Write ``count`` synthetic pairs plus ``manifest.json`` of their haze parameters."""
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise ValueError(f"synthetic size {h}x{w} must be even and at least 2x2")
    lo, hi = beta_range
    if lo < 0 or hi < lo:
        raise ValueError(f"invalid beta range {lo}..{hi}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = []
    for i in range(count):
        pid = f"{i:04d}"
        clean = synth_clean(h, w, int(rng.integers(2 ** 31)))
        params = random_haze(h, w, rng, beta_range, depth_kind)
        pair = make_pair(clean, params, pid)
        save_image(pair.hazy, out_dir / f"{pid}_hazy.ppm")
        save_image(pair.clean, out_dir / f"{pid}_gt.ppm")
        manifest.append({"id": pid, "depth": depth_kind, **params.to_dict()})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
