"""Approximate addition, the image-averaging study, PSNR/SSIM and design comparison."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .netlist import Netlist, PartitionSpec, estimate_transistors
from .sim import DelayModel, run_pipeline

# Pixels are promoted by PROMOTE bits, summed, and demoted by PROMOTE + 1 (the
# average). A flipped carry at bit L then moves a pixel by ~2^(L - PROMOTE - 1).
PROMOTE = 7
PARTITIONS = (8, 10, 12, 13, 14)
SSIM_WINDOW = 8
C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2
BANDS = ("high", "acceptable", "low", "poor")


class InvalidInput(ValueError):
    pass


# -- approximate adder -------------------------------------------------------------

def approximate_add(a: int, b: int, partition: PartitionSpec, corrupt_carry: bool = False,
                    cin: int = 0, carry_out: bool = False) -> int:
    """Split adder: exact L-bit LSU, carry Q (inverted if corrupted), exact MSU.

    The result wraps modulo 2^N unless ``carry_out`` asks for the N+1 bit sum.
    """
    n, l = partition.n, partition.l
    lo_mask = (1 << l) - 1
    lo = (a & lo_mask) + (b & lo_mask) + (cin & 1)
    q = lo >> l
    if corrupt_carry:
        q ^= 1
    hi = (a >> l) + (b >> l) + q
    total = (hi << l) | (lo & lo_mask)
    return total & ((1 << (n + 1)) - 1) if carry_out else total & ((1 << n) - 1)


def approximate_add32(a: int, b: int, partition: PartitionSpec, corrupt_carry: bool = False) -> int:
    if partition.n != 32:
        raise InvalidInput(f"approximate_add32 needs a 32-bit partition, got {partition.n}")
    return approximate_add(a & 0xFFFFFFFF, b & 0xFFFFFFFF, partition, corrupt_carry)


# -- images -------------------------------------------------------------------------

@dataclass
class ImageBuffer:
    width: int
    height: int
    data: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        if arr.size != self.width * self.height:
            raise InvalidInput(f"{arr.size} samples for a {self.width}x{self.height} image")
        self.data = arr.reshape(self.height, self.width)

    @classmethod
    def from_array(cls, arr) -> "ImageBuffer":
        arr = np.asarray(arr)
        return cls(arr.shape[1], arr.shape[0], arr)

    def __eq__(self, other):
        return (isinstance(other, ImageBuffer) and self.width == other.width
                and self.height == other.height and np.array_equal(self.data, other.data))


def _tokens(raw: bytes):
    """Header tokens of a netpbm file, skipping comments; yields (token, end offset)."""
    i, n = 0, len(raw)
    while i < n:
        c = raw[i:i + 1]
        if c == b"#":
            while i < n and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not raw[j:j + 1].isspace() and raw[j:j + 1] != b"#":
                j += 1
            yield raw[i:j], j
            i = j


def read_pgm(path) -> ImageBuffer:
    raw = Path(path).read_bytes()
    toks = _tokens(raw)
    try:
        magic, _ = next(toks)
        w, _ = next(toks)
        h, _ = next(toks)
        maxval, end = next(toks)
    except StopIteration:
        raise InvalidInput(f"{path}: truncated PGM header") from None
    if magic != b"P5":
        raise InvalidInput(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise InvalidInput(f"{path}: only maxval 255 is supported, got {maxval}")
    body = raw[end + 1:end + 1 + w * h]
    if len(body) != w * h:
        raise InvalidInput(f"{path}: expected {w * h} samples, found {len(body)}")
    return ImageBuffer(w, h, np.frombuffer(body, dtype=np.uint8))


def pgm_bytes(img: ImageBuffer) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.data.astype(np.uint8).tobytes()


def write_pgm(path, img: ImageBuffer) -> None:
    Path(path).write_bytes(pgm_bytes(img))


def load_test_images() -> tuple[ImageBuffer, ImageBuffer]:
    """The two shipped exposures of the fixed test scene."""
    base = resources.files("srncl") / "data"
    with resources.as_file(base / "scene_a.pgm") as a, resources.as_file(base / "scene_b.pgm") as b:
        return read_pgm(a), read_pgm(b)


def make_test_scene(size: int = 128, seed: int = 2024) -> tuple[ImageBuffer, ImageBuffer]:
    """Deterministic synthetic scene (gradients, rings, blocks, texture) in two noisy exposures.

    This is how the shipped ``data/scene_*.pgm`` files were produced.
    """
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / size
    scene = 60 + 90 * x + 40 * np.sin(2 * np.pi * 3 * y)
    r = np.hypot(x - 0.35, y - 0.4)
    scene += 50 * np.cos(2 * np.pi * 9 * r) * (r < 0.3)
    scene[(x > 0.6) & (x < 0.9) & (y > 0.55) & (y < 0.85)] = 225
    scene[(x > 0.68) & (x < 0.82) & (y > 0.63) & (y < 0.77)] = 25
    checker = ((np.floor(x * 32) + np.floor(y * 32)) % 2) * 30 - 15
    scene += checker * (y > 0.85)
    rng = np.random.default_rng(seed)
    a = scene + rng.normal(0, 6, scene.shape)
    b = 0.92 * scene + 12 + rng.normal(0, 6, scene.shape)
    to8 = lambda v: ImageBuffer.from_array(np.clip(np.rint(v), 0, 255).astype(np.uint8))
    return to8(a), to8(b)


def process_image(img_a: ImageBuffer, img_b: ImageBuffer, partition: PartitionSpec | int,
                  corrupt: bool = False, p: float = 1.0, seed: int = 0, promote: int = PROMOTE) -> ImageBuffer:
    """Average two exposures pixel by pixel through the 32-bit split adder.

    With ``corrupt`` the LSU carry is inverted on every addition (``p`` = 1) or
    on each addition independently with probability ``p``.
    """
    if (img_a.width, img_a.height) != (img_b.width, img_b.height):
        raise InvalidInput("images differ in size")
    if isinstance(partition, int):
        partition = PartitionSpec(32, partition)
    rng = random.Random(seed)
    a = img_a.data.ravel().tolist()
    b = img_b.data.ravel().tolist()
    out = bytearray(len(a))
    for i, (pa, pb) in enumerate(zip(a, b)):
        flip = corrupt and (p >= 1.0 or rng.random() < p)
        s = approximate_add32(pa << promote, pb << promote, partition, flip)
        out[i] = min(255, max(0, s >> (promote + 1)))
    return ImageBuffer(img_a.width, img_a.height, np.frombuffer(bytes(out), dtype=np.uint8))


# -- quality --------------------------------------------------------------------------

def _same_shape(ref: ImageBuffer, test: ImageBuffer) -> None:
    if (ref.width, ref.height) != (test.width, test.height):
        raise InvalidInput("images differ in size")


def psnr(ref: ImageBuffer, test: ImageBuffer) -> float:
    """PSNR in dB; identical images give +inf."""
    _same_shape(ref, test)
    mse = np.mean((ref.data.astype(np.float64) - test.data.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return 10 * math.log10(255.0 ** 2 / mse)


def _box_mean(x: np.ndarray, k: int) -> np.ndarray:
    """Mean of every k x k window (stride 1, valid positions only)."""
    c = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    c[1:, 1:] = x.cumsum(0).cumsum(1)
    return (c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]) / (k * k)


def ssim(ref: ImageBuffer, test: ImageBuffer, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all uniform ``window`` x ``window`` windows, stride 1."""
    _same_shape(ref, test)
    if ref.width < window or ref.height < window:
        raise InvalidInput(f"image smaller than the {window}x{window} SSIM window")
    x = ref.data.astype(np.float64)
    y = test.data.astype(np.float64)
    mx, my = _box_mean(x, window), _box_mean(y, window)
    vx = _box_mean(x * x, window) - mx * mx
    vy = _box_mean(y * y, window) - my * my
    cxy = _box_mean(x * y, window) - mx * my
    num = (2 * mx * my + C1) * (2 * cxy + C2)
    den = (mx * mx + my * my + C1) * (vx + vy + C2)
    return float(np.mean(num / den))


def classify_quality(value: float) -> str:
    if value > 0.85:
        return "high"
    if value > 0.70:
        return "acceptable"
    if value > 0.30:
        return "low"
    return "poor"


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    band: str

    @classmethod
    def score(cls, ref: ImageBuffer, test: ImageBuffer) -> "QualityReport":
        s = ssim(ref, test)
        return cls(psnr(ref, test), s, classify_quality(s))

    def to_dict(self) -> dict:
        return {"psnr_db": "inf" if math.isinf(self.psnr) else self.psnr, "ssim": self.ssim, "band": self.band}


def image_study(img_a: ImageBuffer, img_b: ImageBuffer, partitions: Sequence[int] = PARTITIONS,
                p: float = 1.0, seed: int = 0):
    """Accurate reconstruction plus one corrupted reconstruction and report per LSU width."""
    ref = process_image(img_a, img_b, PartitionSpec(32, partitions[0]), corrupt=False)
    runs = []
    for l in partitions:
        img = process_image(img_a, img_b, PartitionSpec(32, l), corrupt=True, p=p, seed=seed)
        runs.append((l, img, QualityReport.score(ref, img)))
    return ref, runs


# -- design comparison ----------------------------------------------------------------

@dataclass
class ComparisonRow:
    label: str
    gates: int
    transistors: int
    t_dd_units: float
    transitions_per_op: float


COMPARISON_COLUMNS = ("label", "gates", "transistors", "t_dd_units", "transitions_per_op")


def compare_designs(designs: Sequence[tuple[str, Netlist]], operands: Sequence[Sequence[int]],
                    delay: DelayModel | None = None, costs=None) -> list[ComparisonRow]:
    """Area, cycle time and switching activity of each design on the same operand stream."""
    if not designs:
        return []
    widths = {nl.width for _, nl in designs}
    if len(widths) != 1:
        raise InvalidInput(f"designs differ in width: {sorted(widths)}")
    rows = []
    for label, nl in designs:
        res = run_pipeline(nl, operands, delay=delay or DelayModel.unit())
        if res.status != "completed":
            raise RuntimeError(f"{label}: pipeline {res.status}")
        tr = estimate_transistors(nl) if costs is None else estimate_transistors(nl, costs)
        rows.append(ComparisonRow(label, len(nl.gates), tr, res.t_dd_avg, res.transitions / len(operands)))
    return rows


def rows_to_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_COLUMNS)
    for r in rows:
        w.writerow([r.label, r.gates, r.transistors, f"{r.t_dd_units:.4f}", f"{r.transitions_per_op:.4f}"])
    return buf.getvalue()


def rows_to_json(rows: Sequence[ComparisonRow]) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2)
