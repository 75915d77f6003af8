"""Point cloud data model, scene configuration and weak-label sampling."""
