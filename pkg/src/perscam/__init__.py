"""Camera-geometry preprocessing for monocular 3D human pose estimation."""

from .camera import BBox, CropAffine, ImageSize, Intrinsics, crop_affine, crop_intrinsics, fov, square_bbox
from .errors import PerscamError
from .pemap import PEMap, pe_map, pe_map_stats
from .persrot import RotationResult, rotate_pose, rotation_to_center, unproject_center, warp_homography
from .pose_geometry import project, reconstruct_pose, unrotate_pose, uvd_to_xyz
from .warp import crop_center, warp_image

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CropAffine",
    "ImageSize",
    "Intrinsics",
    "PEMap",
    "PerscamError",
    "RotationResult",
    "crop_affine",
    "crop_center",
    "crop_intrinsics",
    "fov",
    "pe_map",
    "pe_map_stats",
    "project",
    "reconstruct_pose",
    "rotate_pose",
    "rotation_to_center",
    "square_bbox",
    "unproject_center",
    "unrotate_pose",
    "uvd_to_xyz",
    "warp_homography",
    "warp_image",
]
