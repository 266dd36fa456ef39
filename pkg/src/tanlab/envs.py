"""Clothes-folding and room-layout environments.

Both tasks present states to the nets as 28x28 binary images. Folding acts
directly on the image; rooms live in a 224x224 world of rectangular
furniture footprints and are rasterized down. Expert trajectories are the
supervision for every aesthetic learner: scripted fold sequences for
garments, reversed random perturbations for rooms.
"""

import numpy as np

from .bitmap import BinaryImage, FoldAxis, InvalidFold, axis_positions, fold, rasterize
from .geometry import GenerationError, convex_intersection_area

GARMENT_CATEGORIES = ("dress", "long_shirt", "t_shirt", "trousers",
                      "short_pants", "skirt")
GARMENT_WORLD_BOX = (0.0, 0.0, 28.0, 28.0)
ROOM_WORLD = 224.0
ROOM_WORLD_BOX = (0.0, 0.0, ROOM_WORLD, ROOM_WORLD)


class ExpertTrajectory:
    """Ordered snapshots from messy to done; the unit of supervision.

    states: list of BinaryImage, length >= 2, consecutive entries distinct.
    initial_state: the environment state object behind states[0], kept so
    policy rollouts can start where the expert started.
    actions: the generating actions when known (folding scripts keep them).
    """

    def __init__(self, states, initial_state=None, actions=None, name=""):
        states = list(states)
        if len(states) < 2:
            raise ValueError("an expert trajectory needs at least 2 states")
        for i in range(len(states) - 1):
            if states[i] == states[i + 1]:
                raise ValueError(f"consecutive states {i} and {i + 1} are identical")
        self.states = states
        self.initial_state = initial_state
        self.actions = list(actions) if actions else None
        self.name = name

    def __len__(self):
        return len(self.states)


# -- folding -------------------------------------------------------------------

class FoldState:
    """Environment state for folding: just the current image."""

    __slots__ = ("img",)

    def __init__(self, img):
        self.img = img

    def to_image(self):
        return self.img

    def __eq__(self, other):
        return isinstance(other, FoldState) and self.img == other.img


def fold_env_step(state, action):
    """Apply a fold action; raises InvalidFold and leaves state untouched."""
    return FoldState(fold(state.img, action))


class FoldAction:
    """A fold axis exposed through the generic action protocol."""

    __slots__ = ("axis",)

    def __init__(self, axis):
        self.axis = axis

    def try_apply(self, state):
        try:
            return fold_env_step(state, self.axis)
        except InvalidFold:
            return None

    def __repr__(self):
        return f"FoldAction({self.axis!r})"


def folding_actions():
    """The 40 fold actions in canonical (tie-breaking) order."""
    return [FoldAction(a) for a in axis_positions()]


class Garment:
    """A named clothing silhouette: one or more polygons in image-space
    world coordinates, vertically symmetric about x = 14 when generated."""

    def __init__(self, name, category, polygons):
        self.name = name
        self.category = category
        self.polygons = [np.asarray(p, dtype=np.float64) for p in polygons]

    def to_image(self, size=(28, 28)):
        return rasterize(self.polygons, size, GARMENT_WORLD_BOX)


def _rect(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def _mirror_x(poly):
    return [(28.0 - x, y) for x, y in poly]


def _dress(rng):
    shoulder = 3.0 + rng.uniform(0, 1.5)
    hem = 8.0 + rng.uniform(0, 1.5)
    top = 4.0 + rng.uniform(0, 1.0)
    bottom = 24.0 - rng.uniform(0, 1.0)
    body = [(14 - shoulder, top), (14 + shoulder, top),
            (14 + hem, bottom), (14 - hem, bottom)]
    sleeve = _rect(14 - shoulder - 3.0, top + 1.0, 14 - shoulder, top + 4.0)
    return [body, sleeve, _mirror_x(sleeve)]


def _long_shirt(rng):
    half = 4.0 + rng.uniform(0, 1.0)
    top = 4.0 + rng.uniform(0, 1.0)
    length = 15.0 + rng.uniform(0, 2.0)
    sleeve_len = 4.0 + rng.uniform(0, 1.0)
    body = _rect(14 - half, top, 14 + half, top + length)
    sleeve = _rect(14 - half - sleeve_len, top + 1.0, 14 - half, top + 4.5)
    return [body, sleeve, _mirror_x(sleeve)]


def _t_shirt(rng):
    half = 4.5 + rng.uniform(0, 1.0)
    top = 5.0 + rng.uniform(0, 1.0)
    length = 10.0 + rng.uniform(0, 1.5)
    body = _rect(14 - half, top, 14 + half, top + length)
    sleeve = _rect(14 - half - 3.5, top, 14 - half, top + 3.5)
    return [body, sleeve, _mirror_x(sleeve)]


def _trousers(rng):
    waist = 4.5 + rng.uniform(0, 1.0)
    leg = 3.2 + rng.uniform(0, 0.6)
    top = 4.0 + rng.uniform(0, 1.0)
    hip = top + 5.0
    bottom = 24.0 - rng.uniform(0, 1.0)
    body = _rect(14 - waist, top, 14 + waist, hip)
    left_leg = _rect(14 - waist, hip, 14 - waist + leg, bottom)
    return [body, left_leg, _mirror_x(left_leg)]


def _short_pants(rng):
    waist = 5.0 + rng.uniform(0, 1.0)
    leg = 3.5 + rng.uniform(0, 0.6)
    top = 5.0 + rng.uniform(0, 1.0)
    hip = top + 4.0
    bottom = hip + 5.0 + rng.uniform(0, 1.0)
    body = _rect(14 - waist, top, 14 + waist, hip)
    left_leg = _rect(14 - waist, hip, 14 - waist + leg, bottom)
    return [body, left_leg, _mirror_x(left_leg)]


def _skirt(rng):
    waist = 3.5 + rng.uniform(0, 1.0)
    hem = 8.0 + rng.uniform(0, 1.5)
    top = 5.0 + rng.uniform(0, 1.0)
    bottom = 18.0 + rng.uniform(0, 2.0)
    return [[(14 - waist, top), (14 + waist, top),
             (14 + hem, bottom), (14 - hem, bottom)]]


def _vest(rng):
    half = 4.5 + rng.uniform(0, 1.0)
    top = 6.0 + rng.uniform(0, 1.0)
    length = 11.0 + rng.uniform(0, 1.5)
    body = _rect(14 - half, top, 14 + half, top + length)
    strap = _rect(14 - half, top - 2.5, 14 - half + 2.0, top)
    return [body, strap, _mirror_x(strap)]


_TEMPLATES = {"dress": _dress, "long_shirt": _long_shirt, "t_shirt": _t_shirt,
              "trousers": _trousers, "short_pants": _short_pants,
              "skirt": _skirt, "vest": _vest}


def generate_garments(seed):
    """(18 training garments, 9 test garments).

    Training: three instances of each of the six categories. Test: one new
    instance per category plus three vests, a shape family absent from
    training.
    """
    rng = np.random.default_rng(seed)
    train = [Garment(f"{cat}_{i}", cat, _TEMPLATES[cat](rng))
             for cat in GARMENT_CATEGORIES for i in range(3)]
    test = [Garment(f"{cat}_test", cat, _TEMPLATES[cat](rng))
            for cat in GARMENT_CATEGORIES]
    test += [Garment(f"vest_{i}", "vest", _vest(rng)) for i in range(3)]
    return train, test


# Fold scripts per category. All garments live within x in [4, 24] and
# y in [3, 25], which keeps every scripted fold on-grid (boundaries b_5 = 13,
# b_6 = 15, b_8 = 20).
_SCRIPTS = {
    "dress": [("vertical", 6), ("horizontal", 6), ("vertical", 8)],
    "long_shirt": [("vertical", 5), ("horizontal", 6), ("vertical", 8)],
    "t_shirt": [("vertical", 6), ("horizontal", 6)],
    "trousers": [("horizontal", 6), ("vertical", 6), ("horizontal", 8)],
    "short_pants": [("vertical", 6), ("horizontal", 5)],
    "skirt": [("horizontal", 6), ("vertical", 6)],
    "vest": [("horizontal", 5), ("vertical", 6)],
}


def expert_fold_trajectory(garment):
    """Run the garment category's fold script; low half folds onto high."""
    script = [FoldAxis(o, k, "low_onto_high") for o, k in _SCRIPTS[garment.category]]
    img = garment.to_image()
    if img.pixel_count == 0:
        raise GenerationError(f"garment {garment.name} rasterizes to nothing")
    states = [img]
    for axis in script:
        try:
            img = fold(img, axis)
        except InvalidFold as err:
            raise GenerationError(
                f"scripted fold {axis!r} illegal for {garment.name}: {err}")
        if img == states[-1]:
            raise GenerationError(
                f"scripted fold {axis!r} does nothing for {garment.name}")
        states.append(img)
    return ExpertTrajectory(states, initial_state=FoldState(states[0]),
                            actions=script, name=garment.name)


# -- rooms ---------------------------------------------------------------------

FURNITURE_ARCHETYPES = (("bed", 60.0, 40.0), ("sofa", 50.0, 25.0),
                        ("table", 36.0, 36.0), ("desk", 42.0, 20.0),
                        ("wardrobe", 35.0, 16.0), ("shelf", 28.0, 12.0),
                        ("chair", 16.0, 16.0), ("plant", 10.0, 10.0))


class RoomItem:
    """A rectangular footprint: center, size, rotation in degrees."""

    __slots__ = ("name", "cx", "cy", "w", "h", "angle")

    def __init__(self, name, cx, cy, w, h, angle=0.0):
        self.name = name
        self.cx = float(cx)
        self.cy = float(cy)
        self.w = float(w)
        self.h = float(h)
        self.angle = float(angle)

    def polygon(self):
        t = np.radians(self.angle)
        c, s = np.cos(t), np.sin(t)
        corners = np.array([[-self.w / 2, -self.h / 2], [self.w / 2, -self.h / 2],
                            [self.w / 2, self.h / 2], [-self.w / 2, self.h / 2]])
        rot = np.array([[c, -s], [s, c]])
        return corners @ rot.T + np.array([self.cx, self.cy])

    def moved(self, dx=0.0, dy=0.0, dangle=0.0):
        return RoomItem(self.name, self.cx + dx, self.cy + dy,
                        self.w, self.h, self.angle + dangle)

    def inside_room(self):
        poly = self.polygon()
        return (poly.min() >= 0.0 and poly[:, 0].max() <= ROOM_WORLD
                and poly[:, 1].max() <= ROOM_WORLD)


class RoomScene:
    """A room boundary with at least one furniture item inside it."""

    def __init__(self, items):
        items = list(items)
        if not items:
            raise ValueError("a room needs at least one item")
        for item in items:
            if not item.inside_room():
                raise ValueError(f"item {item.name} leaves the room boundary")
        self.items = items

    def to_image(self, size=(28, 28)):
        return rasterize([i.polygon() for i in self.items], size, ROOM_WORLD_BOX)

    def with_item(self, index, item):
        items = list(self.items)
        items[index] = item
        return RoomScene(items)


def generate_rooms(seed):
    """(30 training scenes, 10 test scenes), 5-15 non-overlapping items each."""
    rng = np.random.default_rng(seed)

    def make_scene():
        for _ in range(50):
            count = int(rng.integers(5, 16))
            items = []
            ok = True
            for idx in range(count):
                name, w, h = FURNITURE_ARCHETYPES[rng.integers(len(FURNITURE_ARCHETYPES))]
                for _ in range(300):
                    cx = rng.uniform(w / 2 + 2, ROOM_WORLD - w / 2 - 2)
                    cy = rng.uniform(h / 2 + 2, ROOM_WORLD - h / 2 - 2)
                    cand = RoomItem(f"{name}_{idx}", cx, cy, w, h)
                    if all(convex_intersection_area(cand.polygon(), other.polygon())
                           <= 1e-9 for other in items):
                        items.append(cand)
                        break
                else:
                    ok = False
                    break
            if ok:
                return RoomScene(items)
        raise GenerationError("could not place a non-overlapping room")

    train = [make_scene() for _ in range(30)]
    test = [make_scene() for _ in range(10)]
    return train, test


_ROOM_OPS = ("+x", "-x", "+y", "-y", "+r", "-r")
_ROOM_STEP = 10.0
_ROOM_TURN = 15.0


def _apply_room_op(item, op):
    if op == "+x":
        return item.moved(dx=_ROOM_STEP)
    if op == "-x":
        return item.moved(dx=-_ROOM_STEP)
    if op == "+y":
        return item.moved(dy=_ROOM_STEP)
    if op == "-y":
        return item.moved(dy=-_ROOM_STEP)
    if op == "+r":
        return item.moved(dangle=_ROOM_TURN)
    return item.moved(dangle=-_ROOM_TURN)


class RoomAction:
    """Move one item 10 world units in a cardinal direction or turn it 15 degrees."""

    __slots__ = ("index", "op")

    def __init__(self, index, op):
        if op not in _ROOM_OPS:
            raise ValueError(f"unknown room op {op!r}")
        self.index = index
        self.op = op

    def try_apply(self, scene):
        if self.index >= len(scene.items):
            return None
        moved = _apply_room_op(scene.items[self.index], self.op)
        if not moved.inside_room():
            return None
        return scene.with_item(self.index, moved)

    def __repr__(self):
        return f"RoomAction({self.index}, {self.op})"


def room_actions(n_items):
    """All item x op actions in canonical (tie-breaking) order."""
    return [RoomAction(i, op) for i in range(n_items) for op in _ROOM_OPS]


def perturb_room(scene, steps, seed):
    """Mess up a tidy scene step by step; the reversed renders are the expert.

    Each forward step moves or turns one uniformly chosen item; moves that
    leave the boundary or leave the 28x28 rasterization unchanged are
    resampled (bounded retries), so consecutive trajectory states always
    differ and the messy-to-tidy replay ends at the original scene exactly.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    scenes = [scene]
    images = [scene.to_image()]
    for _ in range(steps):
        current = scenes[-1]
        for _ in range(200):
            idx = int(rng.integers(len(current.items)))
            op = _ROOM_OPS[int(rng.integers(len(_ROOM_OPS)))]
            moved = _apply_room_op(current.items[idx], op)
            if not moved.inside_room():
                continue
            cand = current.with_item(idx, moved)
            img = cand.to_image()
            if img == images[-1]:
                continue
            scenes.append(cand)
            images.append(img)
            break
        else:
            raise GenerationError("no raster-visible perturbation found")
    return ExpertTrajectory(list(reversed(images)),
                            initial_state=scenes[-1], name="room")
