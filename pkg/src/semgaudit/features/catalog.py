"""The 147-entry feature catalog and the extraction settings it depends on."""

from dataclasses import asdict, dataclass
from typing import NamedTuple

TD_SCALARS = (
    "MAV", "STD", "Var", "WL", "ZC", "RMS", "NP", "MPV", "MFV", "SSC", "DAMV", "FDim",
    "MFL", "HFD", "Skew", "IAV", "HMob", "HCom", "ER", "DASDV", "WAM", "MAVS", "Kurt", "Perc",
)
N_HIST_BINS = 10
FD_SCALARS = ("FD_WL", "MNF", "MDF", "MPK", "STDPK", "FR", "PKF")
N_FE_BANDS = 49
FE_WIDTH_HZ = 10.0
WT_SCALARS = ("WT_STD", "WT_Var", "WT_WL", "WT_Energy", "WT_MaxAV", "WT_ZC", "WT_Mean", "WT_MAV")
WPT_METRICS = ("WPT_LogRMS", "WPT_RE", "WPT_NLE")
N_WPT_NODES = 16
XCH_NAME = "XCH_MeanCorr"


@dataclass(frozen=True)
class FeatureConfig:
    """Thresholds and estimator choices the catalog definitions leave open."""

    zc_threshold: float = 0.0
    ssc_threshold: float = 0.0
    wam_threshold: float = 0.05  # mV
    hfd_kmax: int = 8
    fr_low_band: tuple = (10.0, 100.0)
    fr_high_band: tuple = (100.0, 500.0)
    spectrum: str = "periodogram"  # or "welch"
    welch_nperseg: int = 256
    wavelet: str = "sym5"
    wpt_level: int = 4
    log_floor: float = 1e-12

    def __post_init__(self):
        if self.spectrum not in ("periodogram", "welch"):
            raise ValueError(f"unknown spectrum estimator {self.spectrum!r}")
        if self.hfd_kmax < 2:
            raise ValueError("hfd_kmax must be >= 2")
        if self.wam_threshold < 0 or self.zc_threshold < 0:
            raise ValueError("thresholds must be nonnegative")
        if 2 ** self.wpt_level != N_WPT_NODES:
            raise ValueError("the catalog is fixed at 16 wavelet packet nodes (level 4)")

    def to_dict(self):
        d = asdict(self)
        d["fr_low_band"] = list(self.fr_low_band)
        d["fr_high_band"] = list(self.fr_high_band)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("fr_low_band", "fr_high_band"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)


class FeatureDescriptor(NamedTuple):
    name: str
    domain: str  # TD | FD | TF | XCH
    params: dict


def fe_band_edges():
    """Band edges for FE_10Hz..FE_490Hz.

    The 49 bands tile [0, 500] Hz: FE_10Hz absorbs the sub-10 Hz region
    ([0, 20)), the rest are [f, f + 10), and FE_490Hz is closed at 500 Hz.
    """
    lows = [0.0] + [FE_WIDTH_HZ * j for j in range(2, N_FE_BANDS + 1)]
    highs = [FE_WIDTH_HZ * (j + 1) for j in range(1, N_FE_BANDS + 1)]
    return list(zip(lows, highs))


def fe_names():
    return [f"FE_{10 * j}Hz" for j in range(1, N_FE_BANDS + 1)]


def td_names():
    return list(TD_SCALARS) + [f"Hist{i}" for i in range(N_HIST_BINS)]


def fd_names():
    return list(FD_SCALARS) + fe_names()


def tf_names():
    names = list(WT_SCALARS)
    for metric in WPT_METRICS:
        names += [f"{metric}_{k}" for k in range(N_WPT_NODES)]
    return names


def build_catalog():
    cat = []
    for name in TD_SCALARS:
        cat.append(FeatureDescriptor(name, "TD", {}))
    for i in range(N_HIST_BINS):
        cat.append(FeatureDescriptor(f"Hist{i}", "TD", {"bin": i}))
    for name in FD_SCALARS:
        cat.append(FeatureDescriptor(name, "FD", {}))
    for name, (lo, hi) in zip(fe_names(), fe_band_edges()):
        cat.append(FeatureDescriptor(name, "FD", {"band_hz": [lo, hi]}))
    for name in WT_SCALARS:
        cat.append(FeatureDescriptor(name, "TF", {}))
    for metric in WPT_METRICS:
        for k in range(N_WPT_NODES):
            cat.append(FeatureDescriptor(f"{metric}_{k}", "TF", {"node": k}))
    cat.append(FeatureDescriptor(XCH_NAME, "XCH", {"aggregate": "mean_over_other_channels"}))
    return cat


CATALOG = build_catalog()
FEATURE_NAMES = [d.name for d in CATALOG]
CHANNEL_FEATURES = FEATURE_NAMES[:-1]  # everything computable from one window

assert len(CATALOG) == 147 and len(set(FEATURE_NAMES)) == 147


def feature_family(name):
    """Coarse family label used by the synthetic ground truth and the plots."""
    if name in ("MAV", "STD", "Var", "WL", "RMS", "MPV", "DAMV", "IAV", "ER", "DASDV", "Perc", "MFL"):
        return "amplitude"
    if name in ("MNF", "MDF", "PKF"):
        return "spectral_location"
    if name.startswith("FE_"):
        return "band_energy"
    if name.startswith("WPT_"):
        return "wpt"
    if name.startswith("WT_"):
        return "wavelet"
    if name.startswith("Hist"):
        return "histogram"
    if name == XCH_NAME:
        return "inter_channel"
    if name in FD_SCALARS:
        return "spectral_shape"
    return "complexity"
