"""Material specs and phantoms: the ground-truth specimens probed by the rig.

A phantom is a 2D grid of material indices in the stage frame. Its
human-readable document format (version ``format: 1``) is a key/value header,
one block per material, and a trailing 2D grid block::

    format: 1
    name: table1-disks
    cell_size_mm: 1.0
    origin_mm: 20 20

    material 0:
      name: pla15
      stiffness_mean_n_per_mm: 30.3875
      stiffness_sd_n_per_mm: 0.2283
      contact_offset_mm: 0.0
      surface_height_mm: 12.0
      color_rgb: 128 128 128
      mode_hz_damping_amp: 950 55 1.0
      mode_hz_damping_amp: 2600 90 0.8

    grid:
      0 0 1
      0 0 1

``mode_hz_damping_amp`` lines repeat, one per resonance mode. Grid rows list
material indices; row 0 is the lowest stage-Y row. Comment lines start with
``#``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PHANTOM_FORMAT_VERSION = 1


class PhantomParseError(ValueError):
    """Raised when a phantom document cannot be parsed; carries line number."""

    def __init__(self, message, line=None, field_name=None):
        loc = f" (line {line})" if line is not None else ""
        fld = f" [field: {field_name}]" if field_name else ""
        super().__init__(f"{message}{loc}{fld}")
        self.line = line
        self.field_name = field_name


class PhantomInvariantError(ValueError):
    """Raised when a parsed phantom violates a structural invariant."""


@dataclass(frozen=True)
class MaterialSpec:
    """One probe-able material: linear-spring stiffness plus acoustic modes.

    resonance_modes is a tuple of (frequency_hz, damping_per_s, rel_amplitude)
    triples; the contact transient is synthesized as their damped-sinusoid sum.
    """

    name: str
    stiffness_mean: float  # N/mm
    stiffness_sd: float  # N/mm
    contact_offset: float = 0.0  # mm of indentation before force onset
    resonance_modes: tuple = ((500.0, 60.0, 1.0),)
    color: tuple = (200, 200, 200)
    surface_height: float = 10.0  # mm above the stage plane

    def validate(self, sample_rate=44100.0):
        if not self.name:
            raise PhantomInvariantError("material name must be nonempty")
        if not np.isfinite(self.stiffness_mean) or self.stiffness_mean <= 0:
            raise PhantomInvariantError(
                f"material {self.name!r}: stiffness_mean must be > 0, got {self.stiffness_mean}"
            )
        if self.stiffness_sd < 0:
            raise PhantomInvariantError(
                f"material {self.name!r}: stiffness_sd must be >= 0, got {self.stiffness_sd}"
            )
        if self.contact_offset < 0:
            raise PhantomInvariantError(
                f"material {self.name!r}: contact_offset must be >= 0"
            )
        if len(self.resonance_modes) == 0:
            raise PhantomInvariantError(
                f"material {self.name!r}: at least one resonance mode required"
            )
        nyquist = sample_rate / 2.0
        for freq, damping, amp in self.resonance_modes:
            if not (0.0 < freq < nyquist):
                raise PhantomInvariantError(
                    f"material {self.name!r}: mode frequency {freq} Hz outside (0, {nyquist})"
                )
            if damping < 0:
                raise PhantomInvariantError(
                    f"material {self.name!r}: mode damping must be >= 0"
                )
            if amp < 0:
                raise PhantomInvariantError(
                    f"material {self.name!r}: mode amplitude must be >= 0"
                )
        if len(self.color) != 3 or any(not (0 <= c <= 255) for c in self.color):
            raise PhantomInvariantError(
                f"material {self.name!r}: color must be an RGB triple in 0..255"
            )


@dataclass
class Phantom:
    """2D material map in the stage frame; ground truth for all experiments."""

    grid: np.ndarray  # (ny, nx) int indices into materials
    cell_size: float  # mm
    materials: list = field(default_factory=list)
    origin: tuple = (0.0, 0.0)  # stage (x, y) of grid cell (0, 0)
    name: str = "phantom"

    def validate(self, sample_rate=44100.0):
        if self.cell_size <= 0:
            raise PhantomInvariantError(f"cell_size must be > 0, got {self.cell_size}")
        if self.grid.ndim != 2 or self.grid.size == 0:
            raise PhantomInvariantError("grid must be a nonempty 2D array")
        if not self.materials:
            raise PhantomInvariantError("at least one material must be defined")
        n = len(self.materials)
        bad = np.argwhere((self.grid < 0) | (self.grid >= n))
        if len(bad):
            iy, ix = bad[0]
            raise PhantomInvariantError(
                f"grid cell (row {iy}, col {ix}) references material index "
                f"{self.grid[iy, ix]} but only {n} materials are defined"
            )
        for m in self.materials:
            m.validate(sample_rate=sample_rate)

    def material_at(self, x, y):
        """Material under stage point (x, y) mm, or None if off-phantom."""
        idx = self.cell_index(x, y)
        if idx is None:
            return None
        return self.materials[self.grid[idx]]

    def cell_index(self, x, y):
        """(row, col) of the grid cell containing stage (x, y), or None."""
        ix = int(np.floor((x - self.origin[0]) / self.cell_size))
        iy = int(np.floor((y - self.origin[1]) / self.cell_size))
        ny, nx = self.grid.shape
        if 0 <= ix < nx and 0 <= iy < ny:
            return (iy, ix)
        return None

    def surface_height_at(self, x, y):
        m = self.material_at(x, y)
        return None if m is None else m.surface_height

    def bounds(self):
        """Stage-frame (x0, y0, x1, y1) of the grid footprint."""
        ny, nx = self.grid.shape
        return (
            self.origin[0],
            self.origin[1],
            self.origin[0] + nx * self.cell_size,
            self.origin[1] + ny * self.cell_size,
        )


_MATERIAL_FIELDS = {
    "name": str,
    "stiffness_mean_n_per_mm": float,
    "stiffness_sd_n_per_mm": float,
    "contact_offset_mm": float,
    "surface_height_mm": float,
}


def _parse_numbers(text, n, lineno, field_name, cast=float):
    parts = text.split()
    if len(parts) != n:
        raise PhantomParseError(
            f"expected {n} values, got {len(parts)}", line=lineno, field_name=field_name
        )
    try:
        return [cast(p) for p in parts]
    except ValueError:
        raise PhantomParseError(
            f"could not parse {cast.__name__} values from {text!r}",
            line=lineno,
            field_name=field_name,
        ) from None


def parse_phantom(text, sample_rate=44100.0):
    """Parse a phantom document; validates all invariants before returning."""
    header = {}
    materials = {}  # index -> dict of raw fields
    grid_rows = []
    grid_lines = []  # line numbers, for error reports
    section = "header"
    current = None  # (index, fields dict)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if section == "grid":
            grid_rows.append(line)
            grid_lines.append(lineno)
            continue
        if line == "grid:":
            section = "grid"
            continue
        if line.startswith("material") and line.endswith(":"):
            idx_text = line[len("material"):-1].strip()
            try:
                idx = int(idx_text)
            except ValueError:
                raise PhantomParseError(
                    f"bad material index {idx_text!r}", line=lineno
                ) from None
            if idx in materials:
                raise PhantomParseError(f"material {idx} defined twice", line=lineno)
            current = {"_modes": [], "_line": lineno}
            materials[idx] = current
            section = "material"
            continue
        if ":" not in line:
            raise PhantomParseError(f"expected 'key: value', got {line!r}", line=lineno)
        key, value = (s.strip() for s in line.split(":", 1))
        if section == "material":
            if key == "mode_hz_damping_amp":
                current["_modes"].append(
                    tuple(_parse_numbers(value, 3, lineno, key))
                )
            elif key == "color_rgb":
                current["color"] = tuple(_parse_numbers(value, 3, lineno, key, cast=int))
            elif key in _MATERIAL_FIELDS:
                cast = _MATERIAL_FIELDS[key]
                if cast is float:
                    current[key] = _parse_numbers(value, 1, lineno, key)[0]
                else:
                    current[key] = value
            else:
                raise PhantomParseError(f"unknown material field {key!r}", line=lineno, field_name=key)
        else:
            header[key] = (value, lineno)

    if "format" not in header:
        raise PhantomParseError("missing 'format' header", field_name="format")
    fmt_text, fmt_line = header["format"]
    try:
        fmt = int(fmt_text)
    except ValueError:
        raise PhantomParseError(
            f"bad format version {fmt_text!r}", line=fmt_line, field_name="format"
        ) from None
    if fmt != PHANTOM_FORMAT_VERSION:
        raise PhantomParseError(
            f"unsupported format version {fmt} (supported: {PHANTOM_FORMAT_VERSION})",
            line=fmt_line,
            field_name="format",
        )
    if "cell_size_mm" not in header:
        raise PhantomParseError("missing 'cell_size_mm' header", field_name="cell_size_mm")
    cell_text, cell_line = header["cell_size_mm"]
    cell_size = _parse_numbers(cell_text, 1, cell_line, "cell_size_mm")[0]
    origin = (0.0, 0.0)
    if "origin_mm" in header:
        o_text, o_line = header["origin_mm"]
        origin = tuple(_parse_numbers(o_text, 2, o_line, "origin_mm"))
    name = header.get("name", ("phantom", 0))[0]

    if not materials:
        raise PhantomParseError("no materials defined")
    n_mat = max(materials) + 1
    if sorted(materials) != list(range(n_mat)):
        raise PhantomParseError(
            f"material indices must be contiguous from 0, got {sorted(materials)}"
        )
    specs = []
    for idx in range(n_mat):
        f = materials[idx]
        for required in ("name", "stiffness_mean_n_per_mm"):
            if required not in f:
                raise PhantomParseError(
                    f"material {idx} missing field {required!r}",
                    line=f["_line"],
                    field_name=required,
                )
        specs.append(
            MaterialSpec(
                name=f["name"],
                stiffness_mean=f["stiffness_mean_n_per_mm"],
                stiffness_sd=f.get("stiffness_sd_n_per_mm", 0.0),
                contact_offset=f.get("contact_offset_mm", 0.0),
                resonance_modes=tuple(f["_modes"]) or ((500.0, 60.0, 1.0),),
                color=f.get("color", (200, 200, 200)),
                surface_height=f.get("surface_height_mm", 10.0),
            )
        )

    if not grid_rows:
        raise PhantomParseError("missing 'grid:' block")
    rows = []
    width = None
    for row_text, lineno in zip(grid_rows, grid_lines):
        try:
            row = [int(tok) for tok in row_text.split()]
        except ValueError:
            raise PhantomParseError(
                f"grid row has non-integer entries: {row_text!r}", line=lineno
            ) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise PhantomParseError(
                f"ragged grid row: expected {width} entries, got {len(row)}", line=lineno
            )
        rows.append(row)
    # document lists the top row first; flip so row 0 is lowest stage Y
    grid = np.array(rows[::-1], dtype=np.int64)

    phantom = Phantom(grid=grid, cell_size=cell_size, materials=specs, origin=origin, name=name)
    phantom.validate(sample_rate=sample_rate)
    return phantom


def load_phantom(path, sample_rate=44100.0):
    """Read and parse a phantom document from disk."""
    with open(path, "r", encoding="utf-8") as f:
        return parse_phantom(f.read(), sample_rate=sample_rate)


def format_phantom(phantom):
    """Render a Phantom back to its document form (inverse of parse_phantom)."""
    lines = [
        f"format: {PHANTOM_FORMAT_VERSION}",
        f"name: {phantom.name}",
        f"cell_size_mm: {phantom.cell_size!r}",
        f"origin_mm: {phantom.origin[0]!r} {phantom.origin[1]!r}",
        "",
    ]
    for idx, m in enumerate(phantom.materials):
        lines.append(f"material {idx}:")
        lines.append(f"  name: {m.name}")
        lines.append(f"  stiffness_mean_n_per_mm: {m.stiffness_mean!r}")
        lines.append(f"  stiffness_sd_n_per_mm: {m.stiffness_sd!r}")
        lines.append(f"  contact_offset_mm: {m.contact_offset!r}")
        lines.append(f"  surface_height_mm: {m.surface_height!r}")
        lines.append(f"  color_rgb: {m.color[0]} {m.color[1]} {m.color[2]}")
        for freq, damping, amp in m.resonance_modes:
            lines.append(f"  mode_hz_damping_amp: {freq!r} {damping!r} {amp!r}")
        lines.append("")
    lines.append("grid:")
    for row in phantom.grid[::-1]:
        lines.append("  " + " ".join(str(int(v)) for v in row))
    lines.append("")
    return "\n".join(lines)


def concentric_disk_phantom(materials, radii, cell_size=1.0, origin=(0.0, 0.0), name="disks", margin=None):
    """Concentric-disk layout: materials[0] innermost, materials[-1] background.

    radii are outer radii (mm) for materials[:-1], measured from the grid
    center; the last material fills the remainder of the square footprint,
    which extends `margin` mm (default two cells) beyond the last radius.
    """
    if len(radii) != len(materials) - 1:
        raise ValueError("need one radius per material except the background")
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    margin = 2.0 * cell_size if margin is None else margin
    extent = 2.0 * (radii[-1] + margin)
    n = int(np.ceil(extent / cell_size))
    centers = (np.arange(n) + 0.5) * cell_size
    cx = cy = n * cell_size / 2.0
    dx = centers - cx
    dy = centers - cy
    rr = np.hypot(dx[None, :], dy[:, None])
    grid = np.full((n, n), len(materials) - 1, dtype=np.int64)
    for idx in reversed(range(len(radii))):
        grid[rr <= radii[idx]] = idx
    return Phantom(grid=grid, cell_size=cell_size, materials=list(materials), origin=origin, name=name)


def uniform_phantom(material, nx=10, ny=10, cell_size=1.0, origin=(0.0, 0.0), name=None):
    """Single-material rectangular phantom."""
    grid = np.zeros((ny, nx), dtype=np.int64)
    return Phantom(
        grid=grid,
        cell_size=cell_size,
        materials=[material],
        origin=origin,
        name=name or f"uniform-{material.name}",
    )


# Table-reported stiffness of the four validation materials (N/mm +/- SD).
TABLE_STIFFNESS = {
    "pla15": (30.3875, 0.2283),
    "pla5": (23.7667, 0.2767),
    "tpu": (7.8982, 0.2870),
    "porcine": (0.3286, 0.0343),
}


def table_material(key, **overrides):
    """MaterialSpec preset for one of the four validation materials."""
    presets = {
        "pla15": dict(
            contact_offset=0.0,
            resonance_modes=((950.0, 55.0, 1.0), (2600.0, 90.0, 0.8)),
            color=(128, 128, 128),
            surface_height=12.0,
        ),
        "pla5": dict(
            contact_offset=0.0,
            resonance_modes=((520.0, 50.0, 1.0), (960.0, 75.0, 0.7)),
            color=(60, 180, 75),
            surface_height=12.0,
        ),
        "tpu": dict(
            contact_offset=0.05,
            resonance_modes=((450.0, 45.0, 1.0), (900.0, 70.0, 0.6)),
            color=(40, 40, 40),
            surface_height=12.0,
        ),
        "porcine": dict(
            contact_offset=0.3,
            resonance_modes=((150.0, 30.0, 1.0), (300.0, 40.0, 0.4)),
            color=(220, 120, 130),
            surface_height=8.0,
        ),
    }
    mean, sd = TABLE_STIFFNESS[key]
    kwargs = dict(name=key, stiffness_mean=mean, stiffness_sd=sd, **presets[key])
    kwargs.update(overrides)
    return MaterialSpec(**kwargs)
