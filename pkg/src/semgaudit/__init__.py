"""Demographic-sensitivity auditing of surface EMG features."""

__version__ = "0.1.0"

DEMOGRAPHICS = (
    "Age",
    "Sex",
    "Height",
    "Weight",
    "Skin_Hydration",
    "Skin_Elasticity",
    "Subcutaneous_Fat_1",
    "Subcutaneous_Fat_2",
    "Subcutaneous_Fat_3",
    "Subcutaneous_Fat_4",
    "Hair_Density_1",
    "Hair_Density_2",
)
