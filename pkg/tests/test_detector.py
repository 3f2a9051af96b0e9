"""The four detection strategies, classification, and fusion."""

import math

import numpy as np
import pytest

from artifact.datasets import (
    inject_cloth_design,
    inject_color_texture,
    inject_deformation,
    make_clean_scene,
)
from artifact.detector import (
    ArtifactClass,
    ArtifactRegion,
    Detection,
    DetectorInputs,
    Strategy,
    classify_artifact,
    compare_palettes,
    detect,
    detect_low_confidence_features,
    fuse,
    load_detections,
    match_canny_edges,
    match_pose_keypoints,
    save_detections,
)
from artifact.errors import EmptyRegionError
from artifact.metrics import mask_iou

import random


def scene_inputs(scene, distorted=None, observed_pose=None, detections=None):
    return DetectorInputs(
        distorted=scene.image if distorted is None else distorted,
        target_pose=scene.pose,
        observed_pose=scene.pose if observed_pose is None else observed_pose,
        reference=scene.cloth,
        reference_pose=scene.pose,
        detections=scene.detections if detections is None else detections,
        parsing=scene.parsing,
        cloth_mask=scene.cloth_mask,
    )


class TestFeatureConfidence:
    SHAPE = (448, 320)

    def test_missing_hands_flagged(self, clean_scene):
        dets = [d for d in clean_scene.detections if d.label == "face"]
        regions = detect_low_confidence_features(dets, 0.5, self.SHAPE, pose=clean_scene.pose)
        assert len(regions) == 2
        assert all(r.strategy is Strategy.FEATURE_CONFIDENCE for r in regions)
        # predicted from wrist keypoints
        for side in ("l", "r"):
            wrist = clean_scene.pose.get(f"{side}_wrist")
            assert any(r.mask[int(wrist.y), int(wrist.x)] for r in regions)

    def test_all_confident_empty(self, clean_scene):
        regions = detect_low_confidence_features(
            clean_scene.detections, 0.5, self.SHAPE, pose=clean_scene.pose
        )
        assert regions == []

    def test_low_confidence_box_flagged(self, clean_scene):
        dets = list(clean_scene.detections)
        box = (40, 40, 60, 60)
        dets = [d for d in dets if d.label != "hand_left"] + [Detection("hand_left", box, 0.30)]
        regions = detect_low_confidence_features(dets, 0.5, self.SHAPE, pose=clean_scene.pose)
        assert len(regions) == 1
        mask = regions[0].mask
        assert mask[50, 50]
        assert mask[50, 32] and not mask[50, 30]  # box dilated by 8 px


class TestComparePalettes:
    def test_identical_images_empty(self, clean_scene):
        out = compare_palettes(clean_scene.image, clean_scene.image, clean_scene.cloth_mask)
        assert out == []

    def test_injected_patch_found(self, clean_scene):
        distorted, inj = inject_color_texture(clean_scene, random.Random(3))
        out = compare_palettes(distorted, clean_scene.image, clean_scene.cloth_mask)
        assert len(out) == 1
        assert mask_iou(out[0].mask, inj.mask) >= 0.5
        assert out[0].score > 60.0

    def test_huge_tau_vacuous(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(3))
        out = compare_palettes(distorted, clean_scene.image, clean_scene.cloth_mask, tau=442.0)
        assert out == []

    def test_empty_region_rejected(self, clean_scene):
        with pytest.raises(EmptyRegionError):
            compare_palettes(
                clean_scene.image,
                clean_scene.image,
                np.zeros(clean_scene.image.shape[:2], dtype=bool),
            )


class TestMatchCannyEdges:
    def test_clean_scene_empty(self, clean_scene):
        regions, skip = match_canny_edges(scene_inputs(clean_scene))
        assert skip is None
        assert regions == []

    def test_erased_stripes_found(self, clean_scene):
        distorted, inj = inject_cloth_design(clean_scene, random.Random(5))
        regions, skip = match_canny_edges(scene_inputs(clean_scene, distorted=distorted))
        assert skip is None
        assert len(regions) >= 1
        union = np.zeros_like(inj.mask)
        for r in regions:
            union |= r.mask
        assert mask_iou(union, inj.mask) >= 0.4

    def test_missing_cloth_mask_skips(self, clean_scene):
        inputs = scene_inputs(clean_scene)
        inputs = DetectorInputs(
            distorted=inputs.distorted, target_pose=inputs.target_pose,
            observed_pose=inputs.observed_pose, reference=inputs.reference,
            reference_pose=inputs.reference_pose, detections=inputs.detections,
            parsing=inputs.parsing, cloth_mask=None,
        )
        regions, skip = match_canny_edges(inputs)
        assert regions == []
        assert skip is not None


class TestMatchPoseKeypoints:
    SHAPE = (448, 320)

    def test_identical_poses_empty(self, clean_scene):
        assert match_pose_keypoints(clean_scene.pose, clean_scene.pose, 0.03, self.SHAPE) == []

    def test_displaced_wrist_flagged(self, clean_scene):
        diag = math.hypot(320, 448)
        pose = clean_scene.pose
        wrist = pose.get("l_wrist")
        moved = pose.replace_joint("l_wrist", wrist.x + 0.10 * diag, wrist.y)
        regions = match_pose_keypoints(pose, moved, 0.03, self.SHAPE)
        assert len(regions) >= 1
        hit = [r for r in regions if r.mask[int(wrist.y), int(wrist.x)]]
        assert hit  # region centered at the TARGET joint location
        assert abs(max(r.score for r in hit) - 0.10 / 0.03) <= 0.1

    def test_unconfident_target_joint_ignored(self, clean_scene):
        pose = clean_scene.pose
        weak = pose.replace_joint("l_wrist", pose.get("l_wrist").x, pose.get("l_wrist").y, confidence=0.1)
        moved = weak.replace_joint("l_wrist", 5.0, 5.0, confidence=0.9)
        assert match_pose_keypoints(weak, moved, 0.03, self.SHAPE) == []

    def test_missing_observed_joint_flagged(self, clean_scene):
        pose = clean_scene.pose
        gone = pose.replace_joint("l_wrist", 0.0, 0.0, confidence=0.0)
        regions = match_pose_keypoints(pose, gone, 0.03, self.SHAPE)
        assert len(regions) >= 1
        assert max(r.score for r in regions) == 2.0


class TestClassify:
    def region(self, strategy, mask=None):
        if mask is None:
            mask = np.zeros((20, 20), dtype=bool)
            mask[5:10, 5:10] = True
        return ArtifactRegion(mask=mask, strategy=strategy, score=1.0)

    def test_palette_is_color_texture(self):
        assert classify_artifact(self.region(Strategy.PALETTE_MISMATCH), None) is ArtifactClass.COLOR_TEXTURE

    def test_pose_and_feature_are_deformation(self):
        assert classify_artifact(self.region(Strategy.POSE_MISMATCH), None) is ArtifactClass.DEFORMATION
        assert classify_artifact(self.region(Strategy.FEATURE_CONFIDENCE), None) is ArtifactClass.DEFORMATION

    def test_edge_on_clothing_is_cloth_design(self):
        parsing = np.full((20, 20), 5, dtype=np.uint8)  # upper_clothes
        assert classify_artifact(self.region(Strategy.EDGE_MISMATCH), parsing) is ArtifactClass.CLOTH_DESIGN

    def test_edge_off_clothing_is_color_texture(self):
        parsing = np.full((20, 20), 2, dtype=np.uint8)  # hair
        assert classify_artifact(self.region(Strategy.EDGE_MISMATCH), parsing) is ArtifactClass.COLOR_TEXTURE


class TestFuse:
    SHAPE = (40, 40)

    def box_region(self, strategy, score, x0, y0, x1, y1):
        m = np.zeros(self.SHAPE, dtype=bool)
        m[y0:y1, x0:x1] = True
        return ArtifactRegion(mask=m, strategy=strategy, score=score)

    def test_single_region_single_report(self):
        r = self.box_region(Strategy.PALETTE_MISMATCH, 1.0, 5, 5, 10, 10)
        reports = fuse([r], None, self.SHAPE, padding=0)
        assert len(reports) == 1
        assert reports[0].artifact_class is ArtifactClass.COLOR_TEXTURE
        assert np.array_equal(reports[0].core_mask, r.mask)

    def test_disjoint_regions_keep_classes(self):
        a = self.box_region(Strategy.PALETTE_MISMATCH, 1.0, 2, 2, 8, 8)
        b = self.box_region(Strategy.POSE_MISMATCH, 1.0, 25, 25, 32, 32)
        reports = fuse([a, b], None, self.SHAPE, padding=0)
        classes = {r.artifact_class for r in reports}
        assert classes == {ArtifactClass.COLOR_TEXTURE, ArtifactClass.DEFORMATION}

    def test_overlap_takes_highest_score_class(self):
        pose = self.box_region(Strategy.POSE_MISMATCH, 3.0, 5, 5, 15, 15)
        pal = self.box_region(Strategy.PALETTE_MISMATCH, 1.2, 10, 10, 20, 20)
        reports = fuse([pose, pal], None, self.SHAPE, padding=0)
        assert len(reports) == 1
        assert reports[0].artifact_class is ArtifactClass.DEFORMATION
        assert reports[0].strategies == {Strategy.POSE_MISMATCH, Strategy.PALETTE_MISMATCH}

    def test_fusion_conserves_union_before_padding(self):
        rng = np.random.default_rng(12)
        regions = [
            ArtifactRegion(mask=m, strategy=Strategy.PALETTE_MISMATCH, score=1.0)
            for m in (rng.random((3, *self.SHAPE)) < 0.05)
            if m.any()
        ]
        reports = fuse(regions, None, self.SHAPE, padding=7)
        union_in = np.zeros(self.SHAPE, dtype=bool)
        for r in regions:
            union_in |= r.mask
        union_core = np.zeros(self.SHAPE, dtype=bool)
        for rep in reports:
            assert not (union_core & rep.core_mask).any()  # disjoint pre-padding
            union_core |= rep.core_mask
            assert np.all(rep.mask[rep.core_mask])  # padding only grows
        assert np.array_equal(union_core, union_in)

    def test_empty_input_empty_output(self):
        assert fuse([], None, self.SHAPE, padding=12) == []


class TestDetect:
    def test_clean_instance_empty(self, clean_scene):
        result = detect(scene_inputs(clean_scene))
        assert result.reports == []

    def test_color_patch_detected(self, clean_scene):
        distorted, inj = inject_color_texture(clean_scene, random.Random(9))
        result = detect(scene_inputs(clean_scene, distorted=distorted))
        assert len(result.reports) == 1
        rep = result.reports[0]
        assert rep.artifact_class is ArtifactClass.COLOR_TEXTURE
        assert mask_iou(rep.core_mask, inj.mask) >= 0.5

    def test_patch_plus_wrist_two_classes(self, clean_scene):
        distorted, observed, detections, parsing, _ = inject_deformation(
            clean_scene, random.Random(4)
        )
        scene2 = make_clean_scene(pose=clean_scene.pose)
        with_patch, _ = inject_color_texture(
            type(scene2)(
                image=distorted, parsing=parsing, pose=clean_scene.pose,
                detections=detections, cloth=scene2.cloth, cloth_mask=scene2.cloth_mask,
            ),
            random.Random(2),
        )
        inputs = DetectorInputs(
            distorted=with_patch, target_pose=clean_scene.pose, observed_pose=observed,
            reference=clean_scene.cloth, reference_pose=clean_scene.pose,
            detections=detections, parsing=parsing, cloth_mask=clean_scene.cloth_mask,
        )
        result = detect(inputs)
        classes = {r.artifact_class for r in result.reports}
        assert ArtifactClass.COLOR_TEXTURE in classes
        assert ArtifactClass.DEFORMATION in classes

    def test_deterministic(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(9))
        inputs = scene_inputs(clean_scene, distorted=distorted)
        r1 = detect(inputs)
        r2 = detect(inputs)
        assert len(r1.reports) == len(r2.reports)
        for a, b in zip(r1.reports, r2.reports):
            assert a.artifact_class is b.artifact_class
            assert np.array_equal(a.mask, b.mask)
            assert a.score == b.score


class TestDetectionSidecar:
    def test_round_trip(self, tmp_path, clean_scene):
        path = tmp_path / "detections.json"
        save_detections(path, clean_scene.detections)
        back = load_detections(path)
        assert [(d.label, tuple(d.box), d.confidence) for d in back] == [
            (d.label, tuple(d.box), d.confidence) for d in clean_scene.detections
        ]
