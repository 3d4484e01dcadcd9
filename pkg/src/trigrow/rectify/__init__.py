from .homography import RansacConfig, baseline_detect, homography_dlt, ransac_homography
from .photometric import photometric_filtering
from .raster import Raster, histogram_match, photometric_difference, read_pnm, tps_warp, warp, write_pnm
from .tps import ThinPlateSpline, tps_fit

__all__ = [
    "RansacConfig", "Raster", "ThinPlateSpline", "baseline_detect", "histogram_match",
    "homography_dlt", "photometric_difference", "photometric_filtering", "ransac_homography",
    "read_pnm", "tps_fit", "tps_warp", "warp", "write_pnm",
]
