"""Sampled complex fields on truncated periodic boxes.

A GridField holds row-major complex samples on a tensor grid over
[-L_i, L_i) per axis, with the axis i nodes at (k - n_i/2) * (2 L_i / n_i),
so x = 0 is always an exact grid node.  Frequencies follow the FFT layout,
xi_k = 2 pi k / (2 L) for k in fftfreq order; the largest resolved magnitude
per axis is the Nyquist frequency pi n / (2 L).

Axes are grouped into blocks by an AnisotropyDescriptor; block j has an
anisotropy exponent a_j used by dilations and the anisotropic distance.
"""

from dataclasses import dataclass
import io
import struct

import numpy as np

DECAY_TOL = 1e-8  # boundary shell must be below this times the max magnitude


@dataclass(frozen=True)
class AnisotropyDescriptor:
    """Block structure ((dim_1, a_1), ..., (dim_l, a_l)) of R^d."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple((int(d), float(a)) for d, a in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValueError("descriptor needs at least one block")
        for d, a in blocks:
            if d < 1:
                raise ValueError("block dimension must be >= 1")
            if not a > 0:
                raise ValueError("anisotropy exponents must be positive")

    @property
    def dim(self):
        return sum(d for d, _ in self.blocks)

    @property
    def nblocks(self):
        return len(self.blocks)

    def block_slices(self):
        """Axis slice per block, in block order."""
        out, start = [], 0
        for d, _ in self.blocks:
            out.append(slice(start, start + d))
            start += d
        return out

    def axis_exponents(self):
        """Per-axis anisotropy exponent a_j, length dim."""
        out = []
        for d, a in self.blocks:
            out.extend([a] * d)
        return np.array(out)

    @classmethod
    def isotropic(cls, d):
        return cls(((d, 1.0),))


def _check_axis_count(n):
    if n < 4 or (n & (n - 1)) != 0:
        raise ValueError(f"points per axis must be a power of two >= 4, got {n}")


class GridField:
    """Complex samples on a truncated periodic box.

    data : complex ndarray, shape = tuple of per-axis point counts
    box  : per-axis half-width L (scalar broadcasts)
    descriptor : AnisotropyDescriptor matching data.ndim
    tags : frozenset of labels; "decaying" and "decaying:<axis>" are checked
           against the boundary-shell criterion on construction.
    """

    def __init__(self, data, box, descriptor, tags=()):
        data = np.asarray(data, dtype=complex)
        if descriptor.dim != data.ndim:
            raise ValueError("descriptor dimension does not match data")
        if np.isscalar(box):
            box = (float(box),) * data.ndim
        box = tuple(float(L) for L in box)
        if len(box) != data.ndim:
            raise ValueError("need one box half-width per axis")
        for L in box:
            if not L > 0:
                raise ValueError("box half-widths must be positive")
        for n in data.shape:
            _check_axis_count(n)
        self.data = data
        self.box = box
        self.descriptor = descriptor
        self.tags = frozenset(tags)
        for tag in self.tags:
            if tag == "decaying":
                self._require_decay(range(data.ndim))
            elif tag.startswith("decaying:"):
                self._require_decay([int(tag.split(":", 1)[1])])

    # -- geometry -----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def spacing(self, axis):
        return 2.0 * self.box[axis] / self.shape[axis]

    def axis_coords(self, axis):
        n = self.shape[axis]
        return (np.arange(n) - n // 2) * self.spacing(axis)

    def axis_freqs(self, axis):
        n = self.shape[axis]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacing(axis))

    def nyquist(self, axis):
        return np.pi * self.shape[axis] / (2.0 * self.box[axis])

    def coord_mesh(self):
        return np.meshgrid(*[self.axis_coords(i) for i in range(self.ndim)],
                           indexing="ij")

    def freq_mesh(self):
        return np.meshgrid(*[self.axis_freqs(i) for i in range(self.ndim)],
                           indexing="ij")

    def zero_index(self, axis):
        # x = 0 sits at index n//2
        return self.shape[axis] // 2

    # -- decay tag ----------------------------------------------------------

    def boundary_ratio(self, axes=None):
        """max |samples on the outermost shell of the given axes| / max |f|."""
        if axes is None:
            axes = range(self.ndim)
        m = np.abs(self.data).max()
        if m == 0.0:
            return 0.0
        worst = 0.0
        for ax in axes:
            sl_lo = [slice(None)] * self.ndim
            sl_lo[ax] = 0
            sl_hi = [slice(None)] * self.ndim
            sl_hi[ax] = self.shape[ax] - 1
            worst = max(worst,
                        np.abs(self.data[tuple(sl_lo)]).max(),
                        np.abs(self.data[tuple(sl_hi)]).max())
        return worst / m

    def _require_decay(self, axes):
        r = self.boundary_ratio(axes)
        if r > DECAY_TOL:
            raise ValueError(
                f"decaying tag violated: boundary ratio {r:.3e} > {DECAY_TOL:.1e}")

    # -- conveniences ---------------------------------------------------------

    def with_data(self, data, tags=None):
        return GridField(data, self.box, self.descriptor,
                         self.tags if tags is None else tags)

    def same_geometry(self, other):
        return (self.shape == other.shape and self.box == other.box
                and self.descriptor == other.descriptor)

    # -- flat binary serialization -------------------------------------------

    MAGIC = b"MRGF\x01"

    def dump(self, fh):
        fh.write(self.MAGIC)
        fh.write(struct.pack("<II", self.ndim, self.descriptor.nblocks))
        for d, a in self.descriptor.blocks:
            fh.write(struct.pack("<Id", d, a))
        for n, L in zip(self.shape, self.box):
            fh.write(struct.pack("<Id", n, L))
        tags = sorted(self.tags)
        fh.write(struct.pack("<I", len(tags)))
        for t in tags:
            raw = t.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(self.data).astype("<c8").tobytes())

    def save(self, path):
        with open(path, "wb") as fh:
            self.dump(fh)

    @classmethod
    def parse(cls, fh):
        magic = fh.read(len(cls.MAGIC))
        if magic != cls.MAGIC:
            raise ValueError("not a grid-field file")
        ndim, nblocks = struct.unpack("<II", fh.read(8))
        blocks = tuple(struct.unpack("<Id", fh.read(12)) for _ in range(nblocks))
        shape, box = [], []
        for _ in range(ndim):
            n, L = struct.unpack("<Id", fh.read(12))
            shape.append(n)
            box.append(L)
        (ntags,) = struct.unpack("<I", fh.read(4))
        tags = []
        for _ in range(ntags):
            (ln,) = struct.unpack("<I", fh.read(4))
            tags.append(fh.read(ln).decode())
        count = int(np.prod(shape))
        data = np.frombuffer(fh.read(8 * count), dtype="<c8").reshape(shape)
        return cls(data.astype(complex), tuple(box),
                   AnisotropyDescriptor(blocks), tags)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.parse(fh)

    def to_bytes(self):
        buf = io.BytesIO()
        self.dump(buf)
        return buf.getvalue()
