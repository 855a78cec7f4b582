"""Extrinsic geometry of parametrised immersions in arbitrary codimension."""
