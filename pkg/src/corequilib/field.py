"""Cylindrical grids, core geometry, and masked axisymmetric density fields.

The computational domain is the cylinder 0 <= r <= r_max, |z| <= z_max with
uniform cell-centered spacing.  A rigid core occupies an axisymmetric region
around the origin; gas density is forced to zero on every cell whose center
falls inside it.  All integrals use the axisymmetric volume weight
2*pi*r*dr*dz of the cell center, so a field integrates like a ring stack.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridError(ValueError):
    """Invalid grid geometry or a shape that does not fit the grid."""


class DegenerateFieldError(ValueError):
    """An operation that needs positive mass got an identically zero field."""


@dataclass(frozen=True)
class CylGrid:
    """Uniform cell-centered grid on [0, r_max] x [-z_max, z_max].

    Cell centers sit at r_i = (i + 1/2)*dr and z_j = -z_max + (j + 1/2)*dz;
    the z range is symmetric about the equator by construction.
    """

    r_max: float
    z_max: float
    n_r: int
    n_z: int

    def __post_init__(self):
        if self.n_r < 8 or self.n_z < 8:
            raise GridError("grid needs at least 8 cells per direction")
        if not (self.r_max > 0.0 and self.z_max > 0.0):
            raise GridError("grid extents must be positive")

    @property
    def dr(self):
        return self.r_max / self.n_r

    @property
    def dz(self):
        return 2.0 * self.z_max / self.n_z

    @cached_property
    def r(self):
        return (np.arange(self.n_r) + 0.5) * self.dr

    @cached_property
    def z(self):
        return -self.z_max + (np.arange(self.n_z) + 0.5) * self.dz

    @cached_property
    def vol(self):
        """Cell volume weights, shape (n_r, 1), broadcastable over z."""
        return (2.0 * np.pi * self.r * self.dr * self.dz)[:, None]

    def meshes(self):
        """Cell-center coordinate arrays R, Z with shape (n_r, n_z)."""
        return np.meshgrid(self.r, self.z, indexing="ij")


class CoreRegion:
    """Axisymmetric rigid region around the origin, with its uniform density.

    The default shape is a spheroid with semi-axes (a_r, a_z).  An arbitrary
    axisymmetric shape can be given as a radial profile a(z): the region is
    then {(r, z): r < a(z)}.  Both representations are star-shaped along
    outward radial rays, so the no-trapping requirement (exterior radial rays
    never re-enter the region) holds by construction; ``no_trapping_holds``
    re-checks it on the realized mask anyway.
    """

    def __init__(self, a_r, a_z, rho_core, profile=None):
        if profile is None:
            if not (a_r > 0.0 and a_z > 0.0):
                raise GridError("core semi-axes must be positive")
        if rho_core < 0.0:
            raise ValueError("core density must be non-negative")
        self.a_r = float(a_r)
        self.a_z = float(a_z)
        self.rho_core = float(rho_core)
        self._profile = profile

    @classmethod
    def spheroid(cls, a_r, a_z, rho_core):
        return cls(a_r, a_z, rho_core)

    @classmethod
    def from_profile(cls, z_points, a_points, rho_core):
        """Core bounded by the sampled radial profile a(z), zero outside.

        The profile is linearly interpolated between samples; beyond the
        sampled z range the core radius is zero.
        """
        z_points = np.asarray(z_points, dtype=float)
        a_points = np.asarray(a_points, dtype=float)
        if z_points.ndim != 1 or z_points.shape != a_points.shape:
            raise ValueError("profile arrays must be 1-d and equal length")
        if not np.all(np.diff(z_points) > 0.0):
            raise ValueError("profile z samples must be strictly increasing")
        if np.any(a_points < 0.0) or not np.any(a_points > 0.0):
            raise ValueError("profile radii must be >= 0 and not all zero")

        def profile(z):
            return np.interp(z, z_points, a_points, left=0.0, right=0.0)

        a_r = float(np.max(a_points))
        a_z = float(np.max(np.abs(z_points[a_points > 0.0])))
        return cls(a_r, a_z, rho_core, profile=profile)

    @property
    def z_top(self):
        """Height above which the core potential must fall off monotonically.

        Equal to the vertical semi-extent of the region: above the core there
        is only vacuum between a field point and the core mass.
        """
        return self.a_z

    def radius_at(self, z):
        """Core boundary radius a(z)."""
        z = np.asarray(z, dtype=float)
        if self._profile is not None:
            return self._profile(z)
        inside = np.abs(z) < self.a_z
        out = np.zeros_like(z)
        out[inside] = self.a_r * np.sqrt(1.0 - (z[inside] / self.a_z) ** 2)
        return out

    def mask(self, grid):
        """Boolean (n_r, n_z) array, True on cells whose center is inside."""
        if self.a_r >= grid.r_max or self.a_z >= grid.z_max:
            raise GridError("core does not fit strictly inside the grid")
        R, Z = grid.meshes()
        if self._profile is not None:
            return R < self._profile(Z)
        return (R / self.a_r) ** 2 + (Z / self.a_z) ** 2 <= 1.0

    def no_trapping_holds(self, grid):
        """Check that masked cells form an r-prefix in every z row."""
        return mask_is_radially_convex(self.mask(grid))


def mask_is_radially_convex(mask):
    """True if, in each z row, masked cells are a contiguous run from r=0.

    This is the grid version of the no-trapping condition: starting from any
    unmasked cell and walking outward in r never re-enters the mask.
    """
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=0)
    prefix_sums = np.array([mask[: c, j].sum() for j, c in enumerate(counts)])
    return bool(np.all(prefix_sums == counts))


@dataclass(eq=False)
class DensityField:
    """Non-negative density samples on a grid, zero on core cells.

    ``mask`` is True inside the core; construction zeroes those cells, so
    the exclusion of the core region is a structural invariant rather than
    something each operation has to maintain.
    """

    grid: CylGrid
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_r, self.grid.n_z):
            raise GridError(
                "field shape %s does not match grid (%d, %d)"
                % (vals.shape, self.grid.n_r, self.grid.n_z)
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        if np.any(vals < 0.0):
            raise ValueError("density values must be non-negative")
        if self.mask is not None:
            vals[self.mask] = 0.0
        self.values = vals

    def copy_with(self, values):
        """Fresh field with the same grid/mask and new values."""
        return DensityField(self.grid, values, self.mask)


def total_mass(fld):
    """Integral of the density with the axisymmetric volume weight."""
    return float(np.sum(fld.values * fld.grid.vol))


def rescale_to_mass(fld, mass):
    """Scale the field to the requested total mass (shape preserved)."""
    if mass <= 0.0:
        raise ValueError("target mass must be positive")
    current = total_mass(fld)
    if current <= 0.0:
        raise DegenerateFieldError("cannot rescale a zero field")
    return fld.copy_with(fld.values * (mass / current))


def support_extent(fld, threshold=0.0):
    """Radial and vertical reach (d_r, d_z) of cells above ``threshold``."""
    above = fld.values > threshold
    if not np.any(above):
        return 0.0, 0.0
    i, j = np.nonzero(above)
    return float(fld.grid.r[i.max()]), float(np.max(np.abs(fld.grid.z[j])))


def boundary_mass_exceeds(fld, margin_cells, fraction):
    """True when the outer-boundary margin holds more than ``fraction`` of
    the total mass.

    The margin is the outermost ``margin_cells`` cells in r together with the
    top and bottom ``margin_cells`` cells in z.  Mass piling up there is the
    signature of an iterate flowing off the grid instead of settling.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    if margin_cells < 1:
        raise ValueError("margin_cells must be >= 1")
    m = int(margin_cells)
    total = total_mass(fld)
    if total <= 0.0:
        return False
    weighted = fld.values * fld.grid.vol
    edge = weighted[-m:, :].sum() + weighted[:-m, :m].sum() + weighted[:-m, -m:].sum()
    return bool(edge > fraction * total)


def random_blob_field(grid, rng, n_blobs=4, mask=None):
    """Seeded smooth positive test field: a sum of Gaussian bumps.

    Used by the diagnostic inequality ensemble.  The bumps are continuous
    functions of (r, z) sampled at cell centers, so the same seed produces a
    consistent field on any refinement of the grid.
    """
    R, Z = grid.meshes()
    vals = np.zeros_like(R)
    for _ in range(n_blobs):
        r_c = rng.uniform(0.0, 0.7 * grid.r_max)
        z_c = rng.uniform(-0.7 * grid.z_max, 0.7 * grid.z_max)
        width = rng.uniform(0.05, 0.2) * grid.r_max
        amp = rng.uniform(0.1, 1.0)
        vals += amp * np.exp(-((R - r_c) ** 2 + (Z - z_c) ** 2) / (2.0 * width**2))
    return DensityField(grid, vals, mask)


# -- dump format ---------------------------------------------------------------

def write_field_csv(fld, path):
    """Write the field as ``r,z,rho`` rows, row-major over (r, z) cells.

    Values carry 17 significant digits, enough to reproduce the binary
    doubles exactly; masked cells appear with rho = 0.
    """
    grid = fld.grid
    with open(path, "w", newline="") as fh:
        fh.write("r,z,rho\n")
        for i in range(grid.n_r):
            r_i = grid.r[i]
            for j in range(grid.n_z):
                fh.write(
                    "%.17g,%.17g,%.17g\n" % (r_i, grid.z[j], fld.values[i, j])
                )


def read_field_csv(path, grid, mask=None):
    """Read a field dump back onto ``grid``.

    The file must cover exactly this grid's cell centers in dump order;
    coordinates are checked, not trusted.
    """
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    expected = grid.n_r * grid.n_z
    if data.shape != (expected, 3):
        raise GridError(
            "field file has %s rows, grid needs %d" % (data.shape[0], expected)
        )
    R, Z = grid.meshes()
    scale_r = max(1.0, grid.r_max)
    scale_z = max(1.0, grid.z_max)
    if (np.max(np.abs(data[:, 0].reshape(R.shape) - R)) > 1e-9 * scale_r
            or np.max(np.abs(data[:, 1].reshape(Z.shape) - Z)) > 1e-9 * scale_z):
        raise GridError("field file coordinates do not match the grid")
    return DensityField(grid, data[:, 2].reshape(R.shape), mask)
