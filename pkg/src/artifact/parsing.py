"""Human-parsing label table (VTON-HD / LIP 20-class convention).

The label map is an 8-bit single-channel PNG whose values index this table.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import EmptyRegionError, UnknownLabelError

LABELS = {
    0: "background",
    1: "hat",
    2: "hair",
    3: "glove",
    4: "sunglasses",
    5: "upper_clothes",
    6: "dress",
    7: "coat",
    8: "socks",
    9: "pants",
    10: "jumpsuits",
    11: "scarf",
    12: "skirt",
    13: "face",
    14: "left_arm",
    15: "right_arm",
    16: "left_leg",
    17: "right_leg",
    18: "left_shoe",
    19: "right_shoe",
}

CLOTHING_LABEL_IDS = frozenset({5, 6, 7, 9, 10, 11, 12})


class BodyRegion(Enum):
    HAIR = "hair"
    FACE_NECK = "face_neck"
    HANDS = "hands"
    UPPER_CLOTH = "upper_cloth"
    LOWER_CLOTH = "lower_cloth"
    OTHER = "other"


# 6-way grouping used for prompt/reference selection and corpus statistics
LABEL_TO_REGION = {
    0: BodyRegion.OTHER,
    1: BodyRegion.HAIR,
    2: BodyRegion.HAIR,
    3: BodyRegion.HANDS,
    4: BodyRegion.FACE_NECK,
    5: BodyRegion.UPPER_CLOTH,
    6: BodyRegion.UPPER_CLOTH,
    7: BodyRegion.UPPER_CLOTH,
    8: BodyRegion.LOWER_CLOTH,
    9: BodyRegion.LOWER_CLOTH,
    10: BodyRegion.UPPER_CLOTH,
    11: BodyRegion.UPPER_CLOTH,
    12: BodyRegion.LOWER_CLOTH,
    13: BodyRegion.FACE_NECK,
    14: BodyRegion.HANDS,
    15: BodyRegion.HANDS,
    16: BodyRegion.OTHER,
    17: BodyRegion.OTHER,
    18: BodyRegion.OTHER,
    19: BodyRegion.OTHER,
}

# tie priority for majority votes over a mask
REGION_PRIORITY = [
    BodyRegion.UPPER_CLOTH,
    BodyRegion.LOWER_CLOTH,
    BodyRegion.HANDS,
    BodyRegion.HAIR,
    BodyRegion.FACE_NECK,
    BodyRegion.OTHER,
]

# bijective label -> RGB table for the segmentation condition image
SEG_COLORS = {
    0: (0, 0, 0),
    1: (128, 0, 0),
    2: (255, 0, 0),
    3: (0, 85, 0),
    4: (170, 0, 51),
    5: (255, 85, 0),
    6: (0, 0, 85),
    7: (0, 119, 221),
    8: (85, 85, 0),
    9: (0, 85, 85),
    10: (85, 51, 0),
    11: (52, 86, 128),
    12: (0, 128, 0),
    13: (0, 0, 255),
    14: (51, 170, 221),
    15: (0, 255, 255),
    16: (85, 255, 170),
    17: (170, 255, 85),
    18: (255, 255, 0),
    19: (255, 170, 0),
}


def check_labels(labels: np.ndarray) -> None:
    """Raise if the map holds a value outside the table."""
    present = np.unique(labels)
    for v in present.tolist():
        if v not in LABELS:
            raise UnknownLabelError(f"unknown parsing label {v}")


def majority_label(labels: np.ndarray, mask: np.ndarray) -> int:
    """Most frequent parsing label under a mask (first by value on ties)."""
    if not mask.any():
        raise EmptyRegionError("mask is empty")
    vals = labels[mask]
    counts = np.bincount(vals, minlength=20)
    return int(np.argmax(counts))
