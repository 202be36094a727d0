"""proppack: property-aware 3D bin packing on a 1 cm voxel grid."""

__version__ = "0.1.0"
