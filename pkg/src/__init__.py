"""
ADUGS - dynamic-object-robust visual odometry front end

This package contains the components of the front end and its test harness:
- SORT tracking with adaptive measurement noise
- Promptable segmentation and mask refinement
- ANMS feature management with rejection compensation
- Planar registration odometry and trajectory metrics
- Deterministic synthetic dynamic scenes
"""

__version__ = "1.0.0"
