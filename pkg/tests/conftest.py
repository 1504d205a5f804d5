"""Shared fixtures: cached family meshes at the standard resolutions."""

import math

import numpy as np
import pytest

from caplab import discops, families


@pytest.fixture(scope="session")
def cap_pi3():
    """cap(R=1, theta=pi/3) meshes with exact fields at 16/32/64."""
    out = {}
    for res in (16, 32, 64):
        spec = families.Cap(R=1.0, theta=math.pi / 3, resolution=res)
        mesh, fields = families.generate_mesh(spec)
        out[res] = (spec, mesh, fields)
    return out


@pytest.fixture(scope="session")
def hemisphere():
    out = {}
    for res in (16, 32, 48, 64):
        spec = families.Cap(R=1.0, theta=math.pi / 2, resolution=res)
        mesh, fields = families.generate_mesh(spec)
        out[res] = (spec, mesh, fields)
    return out


@pytest.fixture(scope="session")
def cylinder_l2():
    out = {}
    for res in (16, 32, 48, 64):
        spec = families.Cylinder(r=1.0, L=2.0, resolution=res)
        mesh, fields = families.generate_mesh(spec)
        out[res] = (spec, mesh, fields)
    return out


@pytest.fixture(scope="session")
def monge_patch():
    out = {}
    for res in (16, 32, 64):
        spec = families.MongePatch(amplitude=0.1, R=1.0, resolution=res)
        mesh, fields = families.generate_mesh(spec)
        out[res] = (spec, mesh, fields)
    return out


@pytest.fixture(scope="session")
def unit_sphere():
    spec = families.ClosedSphere(R=1.0, resolution=32)
    mesh, fields = families.generate_mesh(spec)
    return spec, mesh, fields


@pytest.fixture(scope="session")
def flat_disk():
    spec = families.FlatDisk(R=1.0, resolution=32)
    mesh, fields = families.generate_mesh(spec)
    return spec, mesh, fields


def decreasing_with_floor(values, floor=1e-4):
    """True when each step decreases, tiny plateaus excepted.

    A non-decreasing step is tolerated only when both its values are at or
    below ``floor`` (the identity is then verified to near machine anyway).
    """
    return all(b < a or max(a, b) <= floor for a, b in zip(values, values[1:]))


def rotation_matrix(axis, angle):
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def rotate_walls(walls, R):
    from caplab.meshkit import Hyperplane, WallSet

    return WallSet(
        tuple(Hyperplane(R @ w.normal, w.offset) for w in walls.walls), walls.angles
    )
