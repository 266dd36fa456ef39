"""Tangram pieces, board poses, solve traces, and their validation.

Coordinate conventions:
  * Canonical piece polygons are unitless with the small triangle's leg = 1
    and, for triangles, the right angle at the origin.
  * Board coordinates live on a 100 x 100 grid. A pose places a piece's
    area centroid at integer (x, y), after an optional mirror across the
    piece's local vertical axis and a rotation by rot * 15 degrees.
  * One canonical unit spans TAN_SCALE = 12 * sqrt(2) grid units, chosen so
    the assembled canonical square (side 2 * sqrt(2) canonical) spans 48
    grid units and every piece centroid of that assembly lands on the
    integer grid.
"""

import math

import numpy as np

from .bitmap import BinaryImage, rasterize

GRID_SIZE = 100
ROT_STEPS = 24
ROT_DEGREES = 360 // ROT_STEPS
TAN_SCALE = 12.0 * math.sqrt(2.0)

_SQRT2 = math.sqrt(2.0)

TAN_KINDS = (
    "large_triangle_1",
    "large_triangle_2",
    "medium_triangle",
    "small_triangle_1",
    "small_triangle_2",
    "square",
    "parallelogram",
)

# Local frames, small-triangle leg = 1. Area ratio 4:4:2:1:1:2:2 in small
# halves: 2, 2, 1, 0.5, 0.5, 1, 1 summing to 8, the canonical square's area.
_CANONICAL_POLYGONS = {
    "large_triangle_1": ((0.0, 0.0), (2.0, 0.0), (0.0, 2.0)),
    "large_triangle_2": ((0.0, 0.0), (2.0, 0.0), (0.0, 2.0)),
    "medium_triangle": ((0.0, 0.0), (_SQRT2, 0.0), (0.0, _SQRT2)),
    "small_triangle_1": ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)),
    "small_triangle_2": ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)),
    "square": ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)),
    "parallelogram": ((0.0, 0.0), (_SQRT2, 0.0), (1.5 * _SQRT2, 0.5 * _SQRT2), (0.5 * _SQRT2, 0.5 * _SQRT2)),
}

SMALL_TRIANGLE_AREA = 0.5 * TAN_SCALE * TAN_SCALE  # board units^2
EPSILON_OVERLAP = 0.01 * SMALL_TRIANGLE_AREA

BOARD_WORLD_BOX = (0.0, 0.0, float(GRID_SIZE), float(GRID_SIZE))

PUZZLE_NAMES = (
    "bird", "swan", "cat", "dog", "fox", "rabbit", "horse", "fish", "duck",
    "goose", "camel", "bear", "house", "boat", "bridge", "tree", "candle",
    "rocket", "arrow", "mountain", "crown", "heart", "dancer", "runner",
    "knight", "teapot", "lamp", "letter t", "letter m", "number four",
)


class PoseError(ValueError):
    """Raised for poses outside the grid, rotation, or type contract."""


class GenerationError(RuntimeError):
    """Raised when the seeded layout search exhausts its retry budget."""


def polygon_area(vertices):
    """Unsigned polygon area by the shoelace formula."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return (float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def polygon_centroid(vertices):
    """Area centroid of a simple polygon."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-12:
        raise ValueError("degenerate polygon")
    cx = float(((x + xs) * cross).sum() / (6.0 * a))
    cy = float(((y + ys) * cross).sum() / (6.0 * a))
    return np.array([cx, cy])


def _ccw(v):
    return v if _signed_area(v) > 0 else v[::-1]


def convex_intersection_area(poly_a, poly_b):
    """Exact area of the intersection of two convex polygons.

    Sutherland-Hodgman clipping of a against b's half-planes; both inputs
    may be in either winding order.
    """
    a = _ccw(np.asarray(poly_a, dtype=np.float64))
    b = _ccw(np.asarray(poly_b, dtype=np.float64))
    # Cheap reject on bounding boxes.
    if (a[:, 0].max() <= b[:, 0].min() or b[:, 0].max() <= a[:, 0].min()
            or a[:, 1].max() <= b[:, 1].min() or b[:, 1].max() <= a[:, 1].min()):
        return 0.0
    subject = [tuple(p) for p in a]
    n = len(b)
    for i in range(n):
        if not subject:
            return 0.0
        ex, ey = b[i]
        fx, fy = b[(i + 1) % n]
        dx, dy = fx - ex, fy - ey
        clipped = []
        prev = subject[-1]
        # interior of a ccw polygon lies left of each directed edge
        prev_in = dx * (prev[1] - ey) - dy * (prev[0] - ex) >= -1e-12
        for cur in subject:
            cur_in = dx * (cur[1] - ey) - dy * (cur[0] - ex) >= -1e-12
            if cur_in != prev_in:
                # Edge crosses the clip line; add the crossing point.
                px, py = prev
                cx, cy = cur
                denom = dx * (cy - py) - dy * (cx - px)
                if abs(denom) > 1e-15:
                    t = (dx * (ey - py) - dy * (ex - px)) / denom
                    clipped.append((px + t * (cx - px), py + t * (cy - py)))
            if cur_in:
                clipped.append(cur)
            prev, prev_in = cur, cur_in
        subject = clipped
    if len(subject) < 3:
        return 0.0
    return polygon_area(subject)


class Tan:
    """A tangram piece kind plus its canonical polygon."""

    def __init__(self, kind):
        if kind not in _CANONICAL_POLYGONS:
            raise ValueError(f"unknown tan kind {kind!r}")
        self.kind = kind
        self.canonical_polygon = np.array(_CANONICAL_POLYGONS[kind], dtype=np.float64)

    @property
    def area(self):
        return polygon_area(self.canonical_polygon)

    def __repr__(self):
        return f"Tan({self.kind})"


def canonical_tans():
    """The seven pieces in the fixed order used by traces and documents."""
    return [Tan(kind) for kind in TAN_KINDS]


class TanPose:
    """Placement of one piece: integer grid position of its centroid,
    rotation in 15-degree steps, optional mirror, and visibility flag."""

    __slots__ = ("x", "y", "rot", "flip", "placed")

    def __init__(self, x, y, rot, flip=False, placed=True):
        for name, value in (("x", x), ("y", y), ("rot", rot)):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise PoseError(f"{name} must be an integer, got {value!r}")
        if not (0 <= x < GRID_SIZE and 0 <= y < GRID_SIZE):
            raise PoseError(f"position ({x}, {y}) outside [0, {GRID_SIZE})")
        if not (0 <= rot < ROT_STEPS):
            raise PoseError(f"rot {rot} outside [0, {ROT_STEPS})")
        if not isinstance(flip, (bool, np.bool_)) or not isinstance(placed, (bool, np.bool_)):
            raise PoseError("flip and placed must be booleans")
        self.x = int(x)
        self.y = int(y)
        self.rot = int(rot)
        self.flip = bool(flip)
        self.placed = bool(placed)

    def replace(self, **kw):
        fields = {s: getattr(self, s) for s in self.__slots__}
        fields.update(kw)
        return TanPose(**fields)

    def as_dict(self):
        return {"x": self.x, "y": self.y, "rot": self.rot,
                "flip": self.flip, "placed": self.placed}

    @classmethod
    def from_dict(cls, d):
        return cls(d["x"], d["y"], d["rot"], d["flip"], d["placed"])

    def __eq__(self, other):
        if not isinstance(other, TanPose):
            return NotImplemented
        return all(getattr(self, s) == getattr(other, s) for s in self.__slots__)

    def __repr__(self):
        return (f"TanPose(x={self.x}, y={self.y}, rot={self.rot}, "
                f"flip={self.flip}, placed={self.placed})")


def apply_pose(tan, pose):
    """World-space vertices of a posed piece, in board units.

    Mirror across the local vertical axis first (if flip), then rotate by
    rot * 15 degrees about the area centroid, then translate the centroid
    to (x, y).
    """
    verts = tan.canonical_polygon * TAN_SCALE
    local = verts - polygon_centroid(verts)
    if pose.flip:
        local = local * np.array([-1.0, 1.0])
    theta = math.radians(pose.rot * ROT_DEGREES)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([float(pose.x), float(pose.y)])


class BoardState:
    """Poses for all seven pieces, in canonical piece order."""

    def __init__(self, poses):
        poses = list(poses)
        if len(poses) != len(TAN_KINDS):
            raise PoseError(f"expected {len(TAN_KINDS)} poses, got {len(poses)}")
        self.poses = poses

    def placed_polygons(self):
        return [apply_pose(tan, pose)
                for tan, pose in zip(canonical_tans(), self.poses)
                if pose.placed]

    def max_pairwise_overlap(self):
        """Largest exact pairwise interior intersection among placed pieces."""
        polys = self.placed_polygons()
        worst = 0.0
        for i in range(len(polys)):
            for j in range(i + 1, len(polys)):
                worst = max(worst, convex_intersection_area(polys[i], polys[j]))
        return worst

    def __eq__(self, other):
        if not isinstance(other, BoardState):
            return NotImplemented
        return self.poses == other.poses


def render_board(state, size=(28, 28), supersample=4):
    """Rasterize the placed pieces over the full board window."""
    return rasterize(state.placed_polygons(), size=size,
                     world_box=BOARD_WORLD_BOX, supersample=supersample)


class SolveTrace:
    """A sequence of board snapshots ending at the solved silhouette.

    variant 'A': all pieces visible from the first frame; frames replay
    moves from a scramble toward the solution. variant 'B': pieces are
    revealed one by one; the placed set grows monotonically and the final
    frame has all seven placed.
    """

    def __init__(self, puzzle_name, variant, steps, embedding_key=None):
        if variant not in ("A", "B"):
            raise ValueError(f"variant must be 'A' or 'B', got {variant!r}")
        self.puzzle_name = puzzle_name
        self.variant = variant
        self.steps = list(steps)
        self.embedding_key = embedding_key if embedding_key is not None else puzzle_name.lower()

    def __len__(self):
        return len(self.steps)


def render_trace(trace, size=(28, 28)):
    return [render_board(step, size=size) for step in trace.steps]


def canonical_square_config():
    """The classic dissection of the tangram square, centred on the board.

    Piece centroids land exactly on the integer grid (the board scale is
    chosen for that) and every rotation is a multiple of 45 degrees, so the
    configuration is exactly representable as poses. Verified against the
    direct assembly coordinates in the test suite.
    """
    # The x offset differs from y so the assembly's vertical edges fall
    # between supersample columns; the rendered silhouette's pixel count
    # then tracks the analytic area ratio instead of rounding both edges
    # the same way.
    spec = {
        "large_triangle_1": (36, 50, 9, False),
        "large_triangle_2": (52, 66, 3, False),
        "medium_triangle": (68, 34, 6, False),
        "small_triangle_1": (40, 30, 15, False),
        "small_triangle_2": (60, 50, 21, False),
        "square": (52, 38, 3, False),
        "parallelogram": (70, 56, 18, True),
    }
    return BoardState([TanPose(*spec[kind]) for kind in TAN_KINDS])


def canonical_square_assembly():
    """World-space vertex lists of the canonical square dissection, piece by
    piece, scaled and offset exactly as canonical_square_config poses them.
    Used as the independent reference for pose math."""
    k = 6.0
    off = np.array([28.0, 26.0])
    eighth = {
        "large_triangle_1": ((0, 0), (0, 8), (4, 4)),
        "large_triangle_2": ((0, 8), (8, 8), (4, 4)),
        "medium_triangle": ((4, 0), (8, 0), (8, 4)),
        "small_triangle_1": ((0, 0), (4, 0), (2, 2)),
        "small_triangle_2": ((4, 4), (6, 2), (6, 6)),
        "square": ((2, 2), (4, 0), (6, 2), (4, 4)),
        "parallelogram": ((6, 2), (8, 4), (8, 8), (6, 6)),
    }
    return [np.asarray(eighth[kind], dtype=np.float64) * k + off for kind in TAN_KINDS]


def _polygon_in_board(verts, margin=0.5):
    return (verts[:, 0].min() >= margin and verts[:, 0].max() <= GRID_SIZE - margin
            and verts[:, 1].min() >= margin and verts[:, 1].max() <= GRID_SIZE - margin)


# Residual intersection allowed between generated neighbours; well under
# EPSILON_OVERLAP so validation never trips on generator output.
_SNAP_OVERLAP_TOL = 0.2
_CONTACT_GAP = 0.8  # outward nudge before grid snapping, > max snap shift


def _edge_angle(p, q):
    return math.degrees(math.atan2(q[1] - p[1], q[0] - p[0]))


def _grow_assembly(rng):
    """Place the seven pieces one by one, each resting edge-to-edge against
    an already placed piece. Returns (poses, order) or None on failure."""
    tans = canonical_tans()
    order = list(rng.permutation(len(tans)))
    poses = {}
    placed_polys = {}

    first = order[0]
    for _ in range(50):
        pose = TanPose(int(rng.integers(38, 63)), int(rng.integers(38, 63)),
                       int(rng.integers(ROT_STEPS)), bool(rng.integers(2)))
        verts = apply_pose(tans[first], pose)
        if _polygon_in_board(verts):
            poses[first] = pose
            placed_polys[first] = verts
            break
    else:
        return None

    for piece in order[1:]:
        tan = tans[piece]
        success = False
        for _ in range(250):
            anchor = int(rng.choice(list(placed_polys)))
            apoly = _ccw(placed_polys[anchor])
            ei = int(rng.integers(len(apoly)))
            a1, a2 = apoly[ei], apoly[(ei + 1) % len(apoly)]
            amid = (a1 + a2) / 2.0
            edge_dir = _edge_angle(a1, a2)
            # Outward normal of a CCW polygon edge points right of travel.
            nx, ny = math.sin(math.radians(edge_dir)), -math.cos(math.radians(edge_dir))

            flip = bool(rng.integers(2))
            probe = _ccw(apply_pose(tan, TanPose(50, 50, 0, flip)))
            fi = int(rng.integers(len(probe)))
            f1, f2 = probe[fi], probe[(fi + 1) % len(probe)]
            face_dir = _edge_angle(f1, f2)
            # Rotate so the chosen face runs anti-parallel to the anchor edge.
            # All tan edge directions sit on the 15-degree lattice, so the
            # required rotation is an exact step count.
            rot = int(round((edge_dir + 180.0 - face_dir) / ROT_DEGREES)) % ROT_STEPS
            posed = _ccw(apply_pose(tan, TanPose(50, 50, rot, flip)))
            # Recover the rotated face by matching direction and length; no
            # tan has two distinct edges sharing both.
            target_dir = (edge_dir + 180.0) % 360.0
            fmid = None
            for i in range(len(posed)):
                q1, q2 = posed[i], posed[(i + 1) % len(posed)]
                if abs(((_edge_angle(q1, q2) - target_dir + 180.0) % 360.0) - 180.0) < 1e-6 \
                        and abs(np.linalg.norm(q2 - q1) - np.linalg.norm(f2 - f1)) < 1e-6:
                    fmid = (q1 + q2) / 2.0
                    break
            if fmid is None:
                continue
            centre = np.array([50.0, 50.0]) + (amid - fmid) + _CONTACT_GAP * np.array([nx, ny])
            x, y = int(round(centre[0])), int(round(centre[1]))
            if not (0 <= x < GRID_SIZE and 0 <= y < GRID_SIZE):
                continue
            pose = TanPose(x, y, rot, flip)
            verts = apply_pose(tan, pose)
            if not _polygon_in_board(verts):
                continue
            if any(convex_intersection_area(verts, other) > _SNAP_OVERLAP_TOL
                   for other in placed_polys.values()):
                continue
            poses[piece] = pose
            placed_polys[piece] = verts
            success = True
            break
        if not success:
            return None
    return [poses[i] for i in range(len(tans))], order


def _scatter_pieces(rng, final_polys):
    """Random non-overlapping poses that also avoid the final assembly."""
    tans = canonical_tans()
    poses = {}
    polys = {}
    for piece in rng.permutation(len(tans)):
        piece = int(piece)
        ok = False
        for _ in range(500):
            pose = TanPose(int(rng.integers(8, GRID_SIZE - 8)),
                           int(rng.integers(8, GRID_SIZE - 8)),
                           int(rng.integers(ROT_STEPS)), bool(rng.integers(2)))
            verts = apply_pose(tans[piece], pose)
            if not _polygon_in_board(verts):
                continue
            blockers = list(final_polys) + list(polys.values())
            if any(convex_intersection_area(verts, other) > _SNAP_OVERLAP_TOL
                   for other in blockers):
                continue
            poses[piece] = pose
            polys[piece] = verts
            ok = True
            break
        if not ok:
            return None
    return [poses[i] for i in range(len(tans))]


def _reveal_counts(n_steps):
    """How many pieces are in final position after step i (1-based)."""
    total = len(TAN_KINDS)
    return [math.ceil(total * i / n_steps) for i in range(1, n_steps + 1)]


def generate_trace(seed, variant="B", n_steps=7, puzzle_name=None):
    """Seeded synthetic solve trace.

    The solved layout is grown piece by piece with edge-adjacent,
    non-overlapping placements. Variant 'B' reveals pieces in growth order;
    variant 'A' starts from a scattered scramble (disjoint from the solution
    footprint, so every intermediate frame stays overlap-free) and moves
    pieces to their final poses in growth order.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    if variant not in ("A", "B"):
        raise ValueError(f"variant must be 'A' or 'B', got {variant!r}")
    rng = np.random.default_rng(seed)
    if puzzle_name is None:
        puzzle_name = PUZZLE_NAMES[int(rng.integers(len(PUZZLE_NAMES)))]

    for round_ in range(40):
        grown = _grow_assembly(rng)
        if grown is None:
            continue
        final_poses, order = grown
        counts = _reveal_counts(n_steps)
        if variant == "B":
            steps = []
            for m in counts:
                revealed = set(order[:m])
                steps.append(BoardState([
                    pose.replace(placed=(i in revealed))
                    for i, pose in enumerate(final_poses)]))
            return SolveTrace(puzzle_name, "B", steps)
        if variant == "A":
            final_polys = [apply_pose(tan, pose)
                           for tan, pose in zip(canonical_tans(), final_poses)]
            scrambled = _scatter_pieces(rng, final_polys)
            if scrambled is None:
                continue
            steps = []
            for m in counts:
                moved = set(order[:m])
                steps.append(BoardState([
                    final_poses[i] if i in moved else scrambled[i]
                    for i in range(len(final_poses))]))
            return SolveTrace(puzzle_name, "A", steps)
    raise GenerationError(f"layout search failed for seed {seed!r} (variant {variant})")


class ValidationReport:
    def __init__(self, violations):
        self.violations = list(violations)

    @property
    def ok(self):
        return not self.violations

    def __repr__(self):
        return f"ValidationReport(ok={self.ok}, violations={len(self.violations)})"


def validate_trace(trace):
    """Check every structural invariant of a solve trace.

    Returns a ValidationReport listing human-readable violations with step
    indices; an empty list means the trace is valid.
    """
    violations = []
    if trace.variant not in ("A", "B"):
        violations.append(f"variant {trace.variant!r} is not 'A' or 'B'")
        return ValidationReport(violations)
    if len(trace.steps) < 2:
        violations.append(f"trace has {len(trace.steps)} steps, need at least 2")
    previous_placed = set()
    for step_idx, state in enumerate(trace.steps):
        if not isinstance(state, BoardState):
            violations.append(f"step {step_idx}: not a BoardState")
            continue
        if len(state.poses) != len(TAN_KINDS):
            violations.append(
                f"step {step_idx}: {len(state.poses)} poses, expected {len(TAN_KINDS)}")
            continue
        bad_pose = False
        for piece_idx, pose in enumerate(state.poses):
            try:
                TanPose(pose.x, pose.y, pose.rot, pose.flip, pose.placed)
            except (PoseError, AttributeError) as exc:
                violations.append(f"step {step_idx}, piece {piece_idx}: {exc}")
                bad_pose = True
        if bad_pose:
            continue
        placed = {i for i, p in enumerate(state.poses) if p.placed}
        if trace.variant == "B":
            if not previous_placed <= placed:
                gone = sorted(previous_placed - placed)
                violations.append(
                    f"step {step_idx}: placed set lost pieces {gone} (must grow monotonically)")
            previous_placed = placed
        else:
            if len(placed) != len(TAN_KINDS):
                violations.append(
                    f"step {step_idx}: variant A requires all pieces placed, got {len(placed)}")
        worst = state.max_pairwise_overlap()
        if worst > EPSILON_OVERLAP:
            violations.append(
                f"step {step_idx}: pairwise overlap {worst:.3f} exceeds "
                f"epsilon {EPSILON_OVERLAP:.3f}")
    if trace.steps and trace.variant == "B":
        last = trace.steps[-1]
        if isinstance(last, BoardState) and len(last.poses) == len(TAN_KINDS):
            if not all(p.placed for p in last.poses):
                violations.append("final step must have all seven pieces placed")
    return ValidationReport(violations)
