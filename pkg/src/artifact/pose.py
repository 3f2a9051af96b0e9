"""Pose keypoints: OpenPose 18-joint body layout plus optional hand chains.

JSON wire format (also the sidecar format for detector stubs):

    {"joints": [{"name": "neck", "x": 160.0, "y": 90.0, "c": 0.95}, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ParameterError

BODY_JOINTS = [
    "nose", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "r_eye", "l_eye", "r_ear", "l_ear",
]

BODY_LIMBS = [
    ("neck", "r_shoulder"), ("neck", "l_shoulder"),
    ("r_shoulder", "r_elbow"), ("r_elbow", "r_wrist"),
    ("l_shoulder", "l_elbow"), ("l_elbow", "l_wrist"),
    ("neck", "r_hip"), ("r_hip", "r_knee"), ("r_knee", "r_ankle"),
    ("neck", "l_hip"), ("l_hip", "l_knee"), ("l_knee", "l_ankle"),
    ("neck", "nose"), ("nose", "r_eye"), ("r_eye", "r_ear"),
    ("nose", "l_eye"), ("l_eye", "l_ear"),
    ("r_hip", "l_hip"),
]

# 21-joint hand chains hang off each wrist; names are "<side>_hand_<i>"
HAND_JOINT_COUNT = 21


def hand_joint_names(side: str) -> list[str]:
    return [f"{side}_hand_{i}" for i in range(HAND_JOINT_COUNT)]


def hand_limbs(side: str) -> list[tuple[str, str]]:
    names = hand_joint_names(side)
    limbs = [(f"{side}_wrist", names[0])]
    for finger in range(5):
        base = 1 + finger * 4
        limbs.append((names[0], names[base]))
        for i in range(base, base + 3):
            limbs.append((names[i], names[i + 1]))
    return limbs


ALL_LIMBS = BODY_LIMBS + hand_limbs("l") + hand_limbs("r")

# joints that govern cloth geometry; used to build warp correspondences
TORSO_ARM_JOINTS = [
    "neck",
    "r_shoulder", "l_shoulder",
    "r_elbow", "l_elbow",
    "r_wrist", "l_wrist",
    "r_hip", "l_hip",
]

CONFIDENT = 0.3  # minimum confidence for a joint to participate anywhere


@dataclass(frozen=True)
class Joint:
    name: str
    x: float
    y: float
    confidence: float


@dataclass(frozen=True)
class PoseKeypoints:
    joints: tuple[Joint, ...]
    skeleton: tuple[tuple[str, str], ...] = field(default_factory=lambda: tuple(ALL_LIMBS))

    def __post_init__(self):
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise ParameterError("joint names must be unique")
        for j in self.joints:
            if not (0.0 <= j.confidence <= 1.0):
                raise ParameterError(f"confidence out of [0,1] for joint {j.name}")

    def get(self, name: str) -> Joint | None:
        for j in self.joints:
            if j.name == name:
                return j
        return None

    def confident(self, name: str, threshold: float = CONFIDENT) -> Joint | None:
        j = self.get(name)
        if j is not None and j.confidence >= threshold:
            return j
        return None

    def to_json(self) -> str:
        return json.dumps(
            {"joints": [{"name": j.name, "x": j.x, "y": j.y, "c": j.confidence} for j in self.joints]}
        )

    @classmethod
    def from_json(cls, text: str) -> "PoseKeypoints":
        doc = json.loads(text)
        joints = tuple(
            Joint(name=j["name"], x=float(j["x"]), y=float(j["y"]), confidence=float(j["c"]))
            for j in doc["joints"]
        )
        return cls(joints=joints)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PoseKeypoints":
        with open(path) as f:
            return cls.from_json(f.read())

    def replace_joint(self, name: str, x: float, y: float, confidence: float | None = None) -> "PoseKeypoints":
        joints = []
        for j in self.joints:
            if j.name == name:
                joints.append(Joint(name, x, y, j.confidence if confidence is None else confidence))
            else:
                joints.append(j)
        return PoseKeypoints(joints=tuple(joints), skeleton=self.skeleton)
