"""Array geometry, wavelengths, wavevectors and steering vectors.

All angles follow one global convention: ``theta`` is the elevation
measured from the +z axis, ``phi`` the azimuth in the x-y plane. BS and
RIS share the global frame (no array rotation).
"""
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import InvalidArgumentError

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array.

    Attributes
    ----------
    element_coords : ndarray, shape (3, E)
        Element offsets from ``reference_point`` in meters, zero mean.
    reference_point : ndarray, shape (3,)
        Array centroid in global coordinates (meters).
    rows_cols : tuple of int
        Grid shape; ``rows * cols == E``.
    element_spacing : float
        Inter-element spacing in meters.
    plane : str
        Two-letter coordinate plane holding the grid, rows along the first
        axis and columns along the second (e.g. ``"yz"``).
    """

    element_coords: np.ndarray
    reference_point: np.ndarray
    rows_cols: tuple
    element_spacing: float
    plane: str = "xy"

    @property
    def n_elements(self):
        return self.element_coords.shape[1]

    def positions(self):
        """Absolute element positions, shape (3, E)."""
        return self.element_coords + self.reference_point[:, None]


def upa_coordinates(rows, cols, spacing, plane="xy", reference_point=(0.0, 0.0, 0.0)):
    """Build a centered ``rows x cols`` grid in a coordinate plane.

    Element ``(i, j)`` sits at column index ``i * cols + j`` of the
    coordinate matrix.
    """
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise InvalidArgumentError(f"grid dimensions must be positive integers, got {rows}x{cols}")
    if not spacing > 0:
        raise InvalidArgumentError(f"element spacing must be positive, got {spacing}")
    if len(plane) != 2 or plane[0] == plane[1] or any(a not in _AXES for a in plane):
        raise InvalidArgumentError(f"plane must name two distinct axes, got {plane!r}")
    rows, cols = int(rows), int(cols)
    r = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    q = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    rr, qq = np.meshgrid(r, q, indexing="ij")
    coords = np.zeros((3, rows * cols))
    coords[_AXES[plane[0]]] = rr.ravel()
    coords[_AXES[plane[1]]] = qq.ravel()
    return ArrayGeometry(
        element_coords=coords,
        reference_point=np.asarray(reference_point, dtype=float).copy(),
        rows_cols=(rows, cols),
        element_spacing=float(spacing),
        plane=plane,
    )


def subcarrier_wavelength(fc, delta_f, n):
    """Wavelength of subcarrier ``n``: ``c / (fc + n * delta_f)``.

    ``n`` may be an integer or an integer array.
    """
    return SPEED_OF_LIGHT / (fc + np.asarray(n) * delta_f)


def direction(phi, theta):
    """Unit vector(s) for azimuth ``phi`` and elevation ``theta``.

    Broadcasts over array inputs; the last axis has length 3.
    """
    phi, theta = np.broadcast_arrays(np.asarray(phi, float), np.asarray(theta, float))
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def wavevector(phi, theta, lambda_n):
    """Wavevector ``(2 pi / lambda) [sin t cos p, sin t sin p, cos t]`` in rad/m."""
    return (2.0 * np.pi / np.asarray(lambda_n, float))[..., None] * direction(phi, theta)


def angles_to(point_from, point_to):
    """Azimuth and elevation of ``point_to`` seen from ``point_from``.

    Returns
    -------
    phi : float
        Azimuth in (-pi, pi]; 0 when the displacement is along the z axis.
    theta : float
        Elevation from +z, in [0, pi].
    """
    d = np.asarray(point_to, float) - np.asarray(point_from, float)
    dist = np.linalg.norm(d)
    if dist == 0.0:
        raise InvalidArgumentError("angles_to needs two distinct points")
    rho = np.hypot(d[0], d[1])
    # arctan2 stays accurate near the poles where arccos does not
    theta = float(np.arctan2(rho, d[2]))
    if rho == 0.0:
        return 0.0, theta
    phi = float(np.arctan2(d[1], d[0]))
    if phi == -np.pi:
        phi = np.pi
    return phi, theta


def steering_vector(geom, phi, theta, lambda_n):
    """Array response ``exp(j * coords^T kappa)``.

    With scalar angles and wavelength this returns a vector of length E.
    Array-valued ``lambda_n`` (shape ``S``) gives shape ``S + (E,)``.
    """
    kappa = wavevector(phi, theta, lambda_n)
    return np.exp(1j * (kappa @ geom.element_coords))


def split_rows(geom, parts):
    """Split a UPA into ``parts`` contiguous sub-grids along its rows.

    Returns a list of ``(indices, sub_geometry)`` where ``indices`` selects
    the sub-grid's elements within ``geom`` and ``sub_geometry`` is
    re-centered on the sub-grid centroid.
    """
    rows, cols = geom.rows_cols
    if parts < 1 or rows % parts:
        raise InvalidArgumentError(
            f"cannot split {rows} rows into {parts} equal contiguous sub-grids"
        )
    step = rows // parts
    out = []
    for j in range(parts):
        idx = np.arange(j * step * cols, (j + 1) * step * cols)
        pts = geom.element_coords[:, idx]
        centre = pts.mean(axis=1)
        sub = ArrayGeometry(
            element_coords=pts - centre[:, None],
            reference_point=geom.reference_point + centre,
            rows_cols=(step, cols),
            element_spacing=geom.element_spacing,
            plane=geom.plane,
        )
        out.append((idx, sub))
    return out
