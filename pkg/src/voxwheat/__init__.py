"""Multispectral wheat point clouds to 3D voxel images."""

__version__ = "0.1.0"
