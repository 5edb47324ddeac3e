"""External cost from image data: Hessian vesselness and its pull-back.

Images live in the flat camera plane.  Pixel (row i, column j) sits at
plane coordinates X = X0 + j * pixel, Y = Y0 + i * pixel.  The cost on the
sphere chart is

    G(x, y) = 1 / (1 + VF(Pi(x, y)) / (lam * max(VF)^2))

with Pi the camera projection, and it is constant along theta when lifted to
the group.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import optics
from .eikonal import ConfigError, Grid3D

_MAGIC = b"SRFM"
_VERSION = 1
DEFAULT_SCALES = (2.0, 3.0, 4.0, 5.0)


@dataclass
class ScalarImage:
    """Intensities in [0, 1] with a pixel-to-plane transform."""

    values: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)
    pixel: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ConfigError("image must be two-dimensional")
        if not np.all(np.isfinite(v)):
            raise ConfigError("image has non-finite values")
        if self.pixel <= 0:
            raise ConfigError("pixel size must be positive")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def in_view(cls, values, eye: optics.EyeModel = optics.EyeModel()) -> "ScalarImage":
        """Centre the image in the camera field of view, filling its larger side."""
        v = np.asarray(values, dtype=float)
        h, w = v.shape
        pixel = 2.0 * eye.x_max / max(h, w)
        origin = (-(w - 1) / 2 * pixel, -(h - 1) / 2 * pixel)
        return cls(v, origin, pixel)

    def to_pixel(self, X, Y):
        """(row, column) fractional indices of plane points."""
        X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
        return (Y - self.origin[1]) / self.pixel, (X - self.origin[0]) / self.pixel

    def to_plane(self, row, col):
        row, col = np.asarray(row, dtype=float), np.asarray(col, dtype=float)
        return self.origin[0] + col * self.pixel, self.origin[1] + row * self.pixel

    def sample(self, X, Y, fill: float = 0.0):
        """Bilinear sample at plane points; ``fill`` outside the image."""
        r, c = self.to_pixel(X, Y)
        shape = np.shape(r)
        out = ndimage.map_coordinates(self.values, [np.ravel(r), np.ravel(c)], order=1,
                                      mode="constant", cval=fill)
        return out.reshape(shape)


def load_image(path) -> np.ndarray:
    """Grayscale intensities in [0, 1]; colour images keep the green channel."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            a = np.asarray(im, dtype=float)
            top = 65535.0 if a.max() > 255 or im.mode.startswith("I;16") else 255.0
            return np.clip(a / top, 0.0, 1.0)
        if im.mode == "F":
            return np.asarray(im, dtype=float)
        if im.mode in ("L", "1"):
            return np.asarray(im.convert("L"), dtype=float) / 255.0
        rgb = np.asarray(im.convert("RGB"), dtype=float)
        return rgb[:, :, 1] / 255.0


def save_image(path, values: np.ndarray):
    """8-bit grayscale PNG/PGM of values in [0, 1]."""
    from PIL import Image

    a = np.clip(np.round(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(a, mode="L").save(path)


# --------------------------------------------------------------------------
# Hessian vesselness


def gaussian_hessian_eigs(image: ScalarImage | np.ndarray, s: float):
    """Eigenvalues (l1, l2) of the Gaussian Hessian at scale s = sigma^2 / 2.

    Ordered so that |l1| <= |l2|; derivatives are in pixel units.
    """
    if s <= 0:
        raise ConfigError("scale must be positive")
    F = image.values if isinstance(image, ScalarImage) else np.asarray(image, dtype=float)
    sigma = np.sqrt(2.0 * s)
    kw = dict(mode="reflect", truncate=4.0)
    hyy = ndimage.gaussian_filter(F, sigma, order=(2, 0), **kw)
    hxx = ndimage.gaussian_filter(F, sigma, order=(0, 2), **kw)
    hxy = ndimage.gaussian_filter(F, sigma, order=(1, 1), **kw)
    mean = 0.5 * (hxx + hyy)
    rad = np.sqrt((0.5 * (hxx - hyy)) ** 2 + hxy**2)
    a, b = mean - rad, mean + rad
    swap = np.abs(a) > np.abs(b)
    return np.where(swap, b, a), np.where(swap, a, b)


def vesselness(image: ScalarImage | np.ndarray, scales=DEFAULT_SCALES, beta: float = 0.3,
               c: float = 0.3) -> np.ndarray:
    """Multiscale vesselness, maximised over scales; responds to dark lines."""
    if beta <= 0 or c <= 0:
        raise ConfigError("beta and c must be positive")
    F = image.values if isinstance(image, ScalarImage) else np.asarray(image, dtype=float)
    out = np.zeros_like(F)
    for s in scales:
        l1, l2 = gaussian_hessian_eigs(F, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            blob = np.where(l2 != 0, np.exp(-(l1**2) / (2 * beta**2 * l2**2)), 0.0)
        struct_ = 1.0 - np.exp(-(l1**2 + l2**2) / (2 * c**2))
        vf = blob * struct_ * (l2 >= 0)
        np.maximum(out, vf, out=out)
    return out


# --------------------------------------------------------------------------
# cost


@dataclass
class CostField:
    """Cost G on an (x, y) chart lattice, constant along theta."""

    values: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    lam: float
    floor: float
    preset: str = "so3"

    def lift(self, nt: int) -> np.ndarray:
        """Group cost on an (x, y, theta) grid."""
        return np.repeat(self.values[:, :, None], nt, axis=2)


def _g(vf, lam, vmax):
    return 1.0 / (1.0 + vf / (lam * vmax**2))


def build_cost(vf: ScalarImage, lam: float, eye: optics.EyeModel, xs, ys,
               preset: str = "so3") -> CostField:
    """Pull the vesselness image back to chart nodes and form G.

    For ``so3`` the nodes (x, y) are spherical and pass through the camera
    projection; for ``se2`` they are plane points already.  Nodes outside
    the image get VF = 0, hence G = 1.
    """
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    vmax = float(np.max(vf.values))
    if vmax <= 0:
        warnings.warn("vesselness vanishes everywhere; using uniform cost 1", stacklevel=2)
        return CostField(np.ones((len(xs), len(ys))), xs, ys, lam, 1.0, preset)
    x, y = np.meshgrid(xs, ys, indexing="ij")
    if preset == "so3":
        den = eye.a + np.cos(x) * np.cos(y)
        k = eye.eta * eye.ac / np.where(den > 0, den, np.nan)
        X, Y = k * np.sin(x), k * np.cos(x) * np.sin(y)
        X, Y = np.nan_to_num(X, nan=1e9), np.nan_to_num(Y, nan=1e9)
    else:
        X, Y = x, y
    v = np.clip(vf.sample(X, Y, fill=0.0), 0.0, None)
    floor = 1.0 / (1.0 + 1.0 / (lam * vmax))
    return CostField(_g(v, lam, vmax), xs, ys, lam, floor, preset)


def cost_for_grid(vf: ScalarImage, lam: float, eye: optics.EyeModel, grid: Grid3D) -> CostField:
    return build_cost(vf, lam, eye, grid.coords(0), grid.coords(1), grid.preset)


def image_grid(image: ScalarImage, eye: optics.EyeModel, nx: int, ny: int, nt: int,
               preset: str = "so3", margin: float = 1.05) -> Grid3D:
    """A grid whose (x, y) box covers the image (its preimage for so3)."""
    X0, Y0 = image.to_plane(0, 0)
    X1, Y1 = image.to_plane(image.height - 1, image.width - 1)
    hx = max(abs(X0), abs(X1)) * margin
    hy = max(abs(Y0), abs(Y1)) * margin
    if preset == "se2":
        return Grid3D.se2(nx, ny, nt, hx, hy)
    cx, cy = [], []
    for X in (-hx, hx):
        for Y in (-hy, hy):
            x, y = optics.unproject_to_sphere(X, Y, eye)
            cx.append(abs(x))
            cy.append(abs(y))
    # the preimage of a square is bounded by its corners in both chart axes
    xm = max(cx + [abs(optics.unproject_to_sphere(hx, 0.0, eye)[0])])
    ym = max(cy + [abs(optics.unproject_to_sphere(0.0, hy, eye)[1])])
    return Grid3D.so3_box(xm, ym, nx, ny, nt)


# --------------------------------------------------------------------------
# synthetic images


def polyline_distance(shape, points) -> np.ndarray:
    """Per-pixel distance (pixels) to a polyline given as (row, col) points."""
    h, w = shape
    rr, cc = np.mgrid[0:h, 0:w].astype(float)
    P = np.asarray(points, dtype=float)
    best = np.full(shape, np.inf)
    for a, b in zip(P[:-1], P[1:]):
        d = b - a
        L2 = float(d @ d)
        if L2 == 0:
            t = np.zeros(shape)
        else:
            t = np.clip(((rr - a[0]) * d[0] + (cc - a[1]) * d[1]) / L2, 0.0, 1.0)
        dist = np.hypot(rr - a[0] - t * d[0], cc - a[1] - t * d[1])
        np.minimum(best, dist, out=best)
    return best


def tube_image(shape, centerlines, width: float = 2.0, contrast: float = 0.6,
               background: float = 0.9) -> np.ndarray:
    """Dark Gaussian-profile tubes on a bright background."""
    img = np.full(shape, background, dtype=float)
    for pts in centerlines:
        d = polyline_distance(shape, pts)
        img -= contrast * np.exp(-(d**2) / (2.0 * width**2))
    return np.clip(img, 0.0, 1.0)


# --------------------------------------------------------------------------
# I/O


def write_cost(path, field: CostField, extra: dict | None = None):
    """Binary 2D cost grid: the distance-grid header with N_theta = 1."""
    nx, ny = field.values.shape
    dx = float(field.xs[1] - field.xs[0]) if nx > 1 else 0.0
    dy = float(field.ys[1] - field.ys[0]) if ny > 1 else 0.0
    hdr = _MAGIC + struct.pack("<IB3I3d2d", _VERSION, 0 if field.preset == "so3" else 1,
                               nx, ny, 1, dx, dy, 0.0, field.lam, field.floor)
    with open(path, "wb") as f:
        f.write(hdr)
        f.write(np.asarray(field.values, dtype="<f8").ravel(order="F").tobytes())
    meta = {"kind": "cost", "preset": field.preset, "x0": float(field.xs[0]),
            "y0": float(field.ys[0]), "lambda": field.lam, "floor": field.floor}
    if extra:
        meta.update(extra)
    with open(str(path) + ".json", "w") as f:
        json.dump(meta, f, indent=2)


def read_cost(path) -> CostField:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise ConfigError("not an SRFM file")
    fmt = "<IB3I3d2d"
    n = struct.calcsize(fmt)
    ver, preset, nx, ny, nt, dx, dy, _, lam, floor = struct.unpack(fmt, raw[4 : 4 + n])
    if nt != 1:
        raise ConfigError("not a 2D cost grid")
    vals = np.frombuffer(raw[4 + n :], dtype="<f8").reshape((nx, ny), order="F").copy()
    with open(str(path) + ".json") as f:
        meta = json.load(f)
    xs = meta["x0"] + dx * np.arange(nx)
    ys = meta["y0"] + dy * np.arange(ny)
    return CostField(vals, xs, ys, lam, floor, "so3" if preset == 0 else "se2")
