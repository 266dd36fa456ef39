"""Binary images, polygon rasterization, and fold transforms.

Images follow matrix convention: row 0 is the top of the picture, and the
world-space y axis of a rasterization window grows downward with the rows.
"""

import numpy as np

DEFAULT_SIZE = 28
FOLD_AXES_PER_ORIENTATION = 10

ORIENTATIONS = ("vertical", "horizontal")
DIRECTIONS = ("low_onto_high", "high_onto_low")


def stack_images(images):
    """Stack BinaryImages into a float64 (N, 1, H, W) batch for the nets."""
    if not images:
        raise ValueError("cannot stack an empty image list")
    return np.stack([im.to_float() for im in images])[:, None, :, :]


class InvalidFold(ValueError):
    """Raised when a fold would reflect a set pixel off the grid."""


class BinaryImage:
    """An H x W grid of {0,1} pixels backed by a numpy bool array."""

    def __init__(self, bits):
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.size == 0:
            raise ValueError("bits must be a nonempty 2-D array")
        self.bits = bits.astype(bool)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def shape(self):
        return self.bits.shape

    @property
    def pixel_count(self):
        return int(self.bits.sum())

    def to_float(self):
        return self.bits.astype(np.float64)

    def to_rows(self):
        """Serialize to a list of '0'/'1' strings, one per row."""
        return ["".join("1" if v else "0" for v in row) for row in self.bits]

    @classmethod
    def from_rows(cls, rows):
        if not rows:
            raise ValueError("empty row list")
        width = len(rows[0])
        grid = []
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"row {i} has length {len(row)}, expected {width}")
            if set(row) - {"0", "1"}:
                raise ValueError(f"row {i} contains characters other than 0/1")
            grid.append([c == "1" for c in row])
        return cls(np.array(grid, dtype=bool))

    @classmethod
    def zeros(cls, height=DEFAULT_SIZE, width=None):
        return cls(np.zeros((height, width or height), dtype=bool))

    def copy(self):
        return BinaryImage(self.bits.copy())

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __ne__(self, other):
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq

    def __repr__(self):
        return f"BinaryImage({self.height}x{self.width}, {self.pixel_count} set)"


def _point_in_polygon(px, py, vertices):
    """Crossing-number test for flat arrays of sample points.

    Points exactly on an edge may land on either side; callers sample at
    half-offset grid positions so this never matters in practice.
    """
    inside = np.zeros(px.shape, dtype=bool)
    verts = np.asarray(vertices, dtype=np.float64)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        if y2 != y1:
            with np.errstate(invalid="ignore"):
                x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (px < x_at)
    return inside


def coverage_counts(polygons, size, world_box, supersample):
    """Count, per pixel, how many of the supersample points fall inside any polygon.

    Returns an (H, W) int array of counts out of supersample**2 per pixel.
    """
    h, w = size
    x0, y0, x1, y1 = world_box
    if not (x1 > x0 and y1 > y0):
        raise ValueError("world_box must have positive extent")
    ss = int(supersample)
    # Sample at half-offset positions of the ss*h x ss*w fine grid.
    xs = x0 + (np.arange(w * ss) + 0.5) * (x1 - x0) / (w * ss)
    ys = y0 + (np.arange(h * ss) + 0.5) * (y1 - y0) / (h * ss)
    px, py = np.meshgrid(xs, ys)
    px = px.ravel()
    py = py.ravel()
    inside = np.zeros(px.shape, dtype=bool)
    for poly in polygons:
        inside |= _point_in_polygon(px, py, poly)
    return inside.reshape(h, ss, w, ss).sum(axis=(1, 3))


def rasterize(polygons, size=(DEFAULT_SIZE, DEFAULT_SIZE), world_box=(0.0, 0.0, 1.0, 1.0),
              supersample=4):
    """Rasterize polygons (lists of world-space vertices) to a BinaryImage.

    Each pixel is supersampled on a supersample x supersample grid and set
    iff at least half of the samples fall inside some polygon.
    """
    counts = coverage_counts(polygons, size, world_box, supersample)
    total = supersample * supersample
    return BinaryImage(2 * counts >= total)


def polygon_sample_mask(polygon, resolution, world_box):
    """One-sample-per-cell inside mask at the given square resolution.

    The workhorse of the overlap oracle: with cell centers as sample points,
    cell_area * mask.sum() estimates the polygon's area inside world_box.
    """
    return coverage_counts([polygon], (resolution, resolution), world_box, 1).astype(bool)


class FoldAxis:
    """One of the 40 fold actions on a 28x28 image.

    orientation: 'vertical' folds columns, 'horizontal' folds rows.
    k: boundary index in [1, 10]; the crease sits between line b-1 and b
       where b = round(28 k / 11).
    direction: which half moves. 'high_onto_low' reflects indices >= b down
       onto the low side; 'low_onto_high' reflects indices < b up.
    """

    __slots__ = ("orientation", "k", "direction")

    def __init__(self, orientation, k, direction):
        if orientation not in ORIENTATIONS:
            raise ValueError(f"bad orientation {orientation!r}")
        if not (1 <= int(k) <= FOLD_AXES_PER_ORIENTATION):
            raise ValueError(f"boundary index {k} outside [1, 10]")
        if direction not in DIRECTIONS:
            raise ValueError(f"bad direction {direction!r}")
        self.orientation = orientation
        self.k = int(k)
        self.direction = direction

    @property
    def boundary(self):
        return boundary_position(self.k)

    def __eq__(self, other):
        if not isinstance(other, FoldAxis):
            return NotImplemented
        return (self.orientation, self.k, self.direction) == (other.orientation, other.k, other.direction)

    def __hash__(self):
        return hash((self.orientation, self.k, self.direction))

    def __repr__(self):
        return f"FoldAxis({self.orientation}, k={self.k}, {self.direction})"


def boundary_position(k, size=DEFAULT_SIZE):
    """Boundary index b_k = round(size * k / 11) for k in [1, 10]."""
    if not (1 <= k <= FOLD_AXES_PER_ORIENTATION):
        raise ValueError(f"boundary index {k} outside [1, 10]")
    return int(round(size * k / (FOLD_AXES_PER_ORIENTATION + 1)))


def axis_positions():
    """All 40 fold actions in canonical order.

    Order: orientation (vertical, horizontal), then k = 1..10, then
    direction (low_onto_high, high_onto_low). Rollout tie-breaking uses the
    index into this list.
    """
    return [FoldAxis(o, k, d)
            for o in ORIENTATIONS
            for k in range(1, FOLD_AXES_PER_ORIENTATION + 1)
            for d in DIRECTIONS]


def fold(img, axis):
    """Apply a fold. The moving half reflects across the crease and ORs into
    the receiving half; the moving half is zeroed.

    An index c on the moving side lands at 2b - 1 - c. Raises InvalidFold if
    any *set* pixel would land off the grid. Folding an empty half is legal
    and leaves the image unchanged, which makes a second application of the
    same fold the identity.
    """
    bits = img.bits
    transposed = axis.orientation == "horizontal"
    if transposed:
        bits = bits.T
    n = bits.shape[1]
    b = boundary_position(axis.k, n)
    out = bits.copy()
    cols = np.arange(n)
    if axis.direction == "high_onto_low":
        moving = cols >= b
    else:
        moving = cols < b
    targets = 2 * b - 1 - cols
    bad = moving & ((targets < 0) | (targets >= n))
    if bits[:, bad].any():
        raise InvalidFold(
            f"fold {axis!r} reflects set pixels outside the {bits.shape[0]}x{n} grid")
    for c in cols[moving]:
        t = targets[c]
        if 0 <= t < n:
            out[:, t] |= bits[:, c]
        out[:, c] = False
    if transposed:
        out = out.T
    return BinaryImage(out)


def write_pbm(img, path, binary=False):
    """Write as portable bitmap (P1 text or P4 raw). Set pixels map to PBM black (1)."""
    h, w = img.shape
    if binary:
        header = f"P4\n{w} {h}\n".encode("ascii")
        packed = np.packbits(img.bits, axis=1)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(packed.tobytes())
    else:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"P1\n{w} {h}\n")
            for row in img.bits:
                fh.write(" ".join("1" if v else "0" for v in row) + "\n")


def _read_tokens(data, count):
    """Yield `count` whitespace-separated ASCII tokens from bytes, skipping comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated netpbm header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1  # position just past the single whitespace after the header


def read_pbm(path):
    """Read P1/P4 bitmaps and P2/P5 graymaps (thresholded at half of maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic in (b"P1", b"P4"):
        (_, wtok, htok), pos = _read_tokens(data, 3)
        w, h = int(wtok), int(htok)
        if magic == b"P1":
            values = [c == b"1"[0] for c in data[pos - 1:] if c in (b"0"[0], b"1"[0])]
            if len(values) < w * h:
                raise ValueError("P1 payload shorter than width*height")
            bits = np.array(values[:w * h], dtype=bool).reshape(h, w)
        else:
            row_bytes = (w + 7) // 8
            payload = data[pos:pos + row_bytes * h]
            if len(payload) < row_bytes * h:
                raise ValueError("P4 payload shorter than expected")
            packed = np.frombuffer(payload, dtype=np.uint8).reshape(h, row_bytes)
            bits = np.unpackbits(packed, axis=1)[:, :w].astype(bool)
        return BinaryImage(bits)
    if magic in (b"P2", b"P5"):
        (_, wtok, htok, mtok), pos = _read_tokens(data, 4)
        w, h, maxval = int(wtok), int(htok), int(mtok)
        if magic == b"P5" and maxval > 255:
            raise ValueError("P5 graymaps with 2-byte samples are not supported")
        if magic == b"P2":
            values = data[pos - 1:].split()
            if len(values) < w * h:
                raise ValueError("P2 payload shorter than width*height")
            gray = np.array([int(v) for v in values[:w * h]], dtype=np.float64).reshape(h, w)
        else:
            payload = data[pos:pos + w * h]
            if len(payload) < w * h:
                raise ValueError("P5 payload shorter than expected")
            gray = np.frombuffer(payload, dtype=np.uint8).astype(np.float64).reshape(h, w)
        return BinaryImage(gray >= 0.5 * maxval)
    raise ValueError(f"unsupported netpbm magic {magic!r}")


def resize_nearest(img, size=(DEFAULT_SIZE, DEFAULT_SIZE)):
    """Nearest-neighbour resize to the target (height, width)."""
    h, w = img.shape
    th, tw = size
    rows = np.minimum((np.arange(th) + 0.5) * h / th, h - 1).astype(int)
    cols = np.minimum((np.arange(tw) + 0.5) * w / tw, w - 1).astype(int)
    return BinaryImage(img.bits[np.ix_(rows, cols)])
