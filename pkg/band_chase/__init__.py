"""Band to bidiagonal reduction by bandwidth-tiled bulge chasing."""
