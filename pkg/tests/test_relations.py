from __future__ import annotations

import math
import random

import pytest

from spatialforge import geometry
from spatialforge.geometry import CalibratedFrame, UnitVec3, Vec3
from spatialforge.relations import (
    RelationConfig,
    RelationError,
    above_below,
    compare_camera_distance,
    compare_height,
    derive_all,
    derive_facts,
    facing_same_direction,
    height_vs_camera,
    load_facts,
    multi_object_closer_to,
    orientation_facing,
    recompute_fact,
    save_facts,
    viewer_left_right,
)
from spatialforge.scenes import CAMERA_ID
from spatialforge.transforms import mirror, yaw_translate

import support
from test_scenes import make_object, make_scene

CFG = RelationConfig()
FRAME = CalibratedFrame(camera_position=Vec3(0.0, 0.0, 1.5), forward=UnitVec3(0.0, 1.0, 0.0))


def obj_at(object_id, x, y, z, orientation=None):
    return make_object(
        object_id,
        location=Vec3(x, y, z),
        orientation=orientation or UnitVec3(0.0, -1.0, 0.0),
    )


class TestCompareHeight:
    def test_clear_gap_holds(self):
        fact = compare_height(obj_at("a", 0, 2, 1.0), obj_at("b", 1, 2, 0.5), CFG)
        assert fact.verdict == "holds"
        assert fact.margin_value == pytest.approx(0.5)

    def test_small_gap_ambiguous(self):
        fact = compare_height(obj_at("a", 0, 2, 1.0), obj_at("b", 1, 2, 0.9), CFG)
        assert fact.verdict == "ambiguous"

    def test_reflexive_is_ambiguous(self):
        a = obj_at("a", 0, 2, 1.0)
        fact = compare_height(a, a, CFG)
        assert fact.verdict == "ambiguous"
        assert fact.margin_value == 0.0


class TestCameraDistanceRelation:
    def test_clear_winner(self):
        fact = compare_camera_distance(
            obj_at("a", 0, 2.0, 1.5), obj_at("b", 0, 4.0, 1.5), FRAME, CFG
        )
        assert fact.verdict == "holds"

    def test_close_call_ambiguous(self):
        fact = compare_camera_distance(
            obj_at("a", 0, 2.0, 1.5), obj_at("b", 0, 2.1, 1.5), FRAME, CFG
        )
        assert fact.verdict == "ambiguous"  # gap 0.1 < 0.15 * 2.0

    def test_object_at_camera_is_degenerate(self):
        with pytest.raises(RelationError):
            compare_camera_distance(
                obj_at("a", 0.0, 0.0, 1.5), obj_at("b", 0, 2, 1), FRAME, CFG
            )

    def test_random_scenes_match_recomputation_oracle(self):
        rng = random.Random(55)
        for _ in range(200):
            a = support.random_object(rng, "a")
            b = support.random_object(rng, "b")
            fact = compare_camera_distance(a, b, FRAME, CFG)
            da = math.dist(a.location.as_tuple(), FRAME.camera_position.as_tuple())
            db = math.dist(b.location.as_tuple(), FRAME.camera_position.as_tuple())
            gap = db - da
            threshold = CFG.distance_margin_rel * min(da, db)
            want = "holds" if gap > threshold else ("holds_inverse" if gap < -threshold else "ambiguous")
            assert fact.verdict == want


class TestViewerLeftRight:
    def test_sign_convention(self):
        # a at bearing -30, b at +30: a is left of b.
        a = obj_at("a", -2.0 * math.tan(math.radians(30)), 2.0, 1.0)
        b = obj_at("b", +2.0 * math.tan(math.radians(30)), 2.0, 1.0)
        fact = viewer_left_right(a, b, FRAME, CFG)
        assert fact.verdict == "holds"

    def test_close_bearings_ambiguous(self):
        a = obj_at("a", 2.0 * math.tan(math.radians(5)), 2.0, 1.0)
        b = obj_at("b", 2.0 * math.tan(math.radians(9)), 2.0, 1.0)
        fact = viewer_left_right(a, b, FRAME, CFG)
        assert fact.verdict == "ambiguous"

    def test_mirroring_flips_verdict(self):
        rng = random.Random(60)
        for _ in range(100):
            a = support.random_object(rng, "a")
            b = support.random_object(rng, "b")
            before = viewer_left_right(a, b, FRAME, CFG)
            (ma, mb), mframe = mirror((a, b), FRAME)
            after = viewer_left_right(ma, mb, mframe, CFG)
            flipped = {"holds": "holds_inverse", "holds_inverse": "holds",
                       "ambiguous": "ambiguous"}
            assert after.verdict == flipped[before.verdict]


class TestAboveBelow:
    def test_stacked_holds(self):
        fact = above_below(obj_at("a", 0, 2, 2.0), obj_at("b", 0, 2, 0.5), CFG)
        assert fact.verdict == "holds"

    def test_horizontally_separated_is_ambiguous(self):
        fact = above_below(obj_at("a", 0, 2, 2.0), obj_at("b", 5, 2, 0.5), CFG)
        assert fact.verdict == "ambiguous"

    def test_random_stacks_match_oracle(self):
        rng = random.Random(61)
        for _ in range(200):
            a = support.random_object(rng, "a")
            b = support.random_object(rng, "b")
            fact = above_below(a, b, CFG)
            horiz = math.hypot(a.location.x - b.location.x, a.location.y - b.location.y)
            gap = a.location.z - b.location.z
            if horiz > CFG.overlap_radius_m:
                want = "ambiguous"
            elif gap > CFG.height_margin_abs:
                want = "holds"
            elif gap < -CFG.height_margin_abs:
                want = "holds_inverse"
            else:
                want = "ambiguous"
            assert fact.verdict == want


class TestOrientationFacing:
    def test_facing_camera_directly(self):
        a = obj_at("a", 0, 3, 1.5, orientation=UnitVec3(0.0, -1.0, 0.0))
        fact = orientation_facing(a, FRAME, CFG)
        assert fact.verdict == "holds"
        assert fact.object_id == CAMERA_ID
        assert fact.margin_value == pytest.approx(90.0)  # angle 0 -> gap 90

    def test_facing_directly_away(self):
        a = obj_at("a", 0, 3, 1.5, orientation=UnitVec3(0.0, 1.0, 0.0))
        fact = orientation_facing(a, FRAME, CFG)
        assert fact.verdict == "holds_inverse"

    def test_near_orthogonal_is_ambiguous(self):
        # 85 degrees off the ray to the camera, margin 10: inside the dead band.
        t = math.radians(85.0)
        a = obj_at("a", 0, 3, 1.5, orientation=UnitVec3(math.sin(t), -math.cos(t), 0.0))
        fact = orientation_facing(a, FRAME, CFG)
        assert fact.verdict == "ambiguous"

    def test_target_coincident_is_degenerate(self):
        a = obj_at("a", 1, 2, 1.0)
        b = obj_at("b", 1, 2, 1.0)
        with pytest.raises(RelationError):
            orientation_facing(a, b, CFG)

    def test_same_direction_pair(self):
        a = obj_at("a", 0, 2, 1, orientation=UnitVec3(1.0, 0.0, 0.0))
        b = obj_at("b", 1, 3, 1, orientation=UnitVec3(1.0, 0.0, 0.0))
        assert facing_same_direction(a, b, CFG).verdict == "holds"
        c = obj_at("c", 2, 3, 1, orientation=UnitVec3(-1.0, 0.0, 0.0))
        assert facing_same_direction(a, c, CFG).verdict == "holds_inverse"


class TestMultiObjectCloserTo:
    def test_clear_winner(self):
        anchor = obj_at("anchor", 0, 1, 0)
        a = obj_at("a", 1, 1, 0)
        b = obj_at("b", 3, 1, 0)
        fact = multi_object_closer_to(anchor, a, b, CFG)
        assert fact.verdict == "holds"
        assert fact.anchor_id == "anchor"

    def test_equidistant_is_ambiguous(self):
        anchor = obj_at("anchor", 0, 2, 0)
        a = obj_at("a", 1, 2, 0)
        b = obj_at("b", -1, 2, 0)
        assert multi_object_closer_to(anchor, a, b, CFG).verdict == "ambiguous"

    def test_duplicate_ids_rejected(self):
        anchor = obj_at("anchor", 0, 2, 0)
        a = obj_at("a", 1, 2, 0)
        with pytest.raises(RelationError):
            multi_object_closer_to(anchor, a, a, CFG)

    def test_random_triples_match_oracle(self):
        rng = random.Random(62)
        for _ in range(200):
            anchor = support.random_object(rng, "anchor")
            a = support.random_object(rng, "a")
            b = support.random_object(rng, "b")
            fact = multi_object_closer_to(anchor, a, b, CFG)
            da = math.dist(anchor.location.as_tuple(), a.location.as_tuple())
            db = math.dist(anchor.location.as_tuple(), b.location.as_tuple())
            threshold = CFG.distance_margin_rel * min(da, db)
            gap = db - da
            want = "holds" if gap > threshold else ("holds_inverse" if gap < -threshold else "ambiguous")
            assert fact.verdict == want


class TestDeriveAll:
    def test_single_object_scene_camera_facts_only(self):
        scene = make_scene("s", objects=[obj_at("a", 0, 3, 1.0)])
        result = derive_all(scene, CFG)
        assert all(f.object_id == CAMERA_ID for f in result.facts)
        assert sorted(f.kind for f in result.facts) == ["facing_toward", "higher"]

    def test_fact_count_matches_combinatorial_oracle(self):
        rng = random.Random(63)
        for n in (2, 3, 4, 5):
            scene = make_scene("s", objects=[support.random_object(rng, f"o{i}") for i in range(n)])
            result = derive_all(scene, CFG)
            pairs = n * (n - 1) // 2
            triples = n * (n - 1) * (n - 2) // 2  # anchors x unordered pairs
            expected = (
                2 * n            # camera-relative: facing + higher
                + 5 * pairs      # taller, closer_to_camera, left_of, above, same_direction
                + 2 * pairs      # facing_toward in both directions
                + triples
            )
            assert len(result.facts) + len(result.skipped) == expected

    def test_deterministic(self):
        rng = random.Random(64)
        scene = support.random_scene(rng, "s", 4)
        assert derive_all(scene, CFG) == derive_all(scene, CFG)

    def test_sorted_output(self):
        rng = random.Random(65)
        scene = support.random_scene(rng, "s", 5)
        facts = derive_all(scene, CFG).facts
        keys = [(f.kind, f.subject_id, f.object_id, f.anchor_id or "") for f in facts]
        assert keys == sorted(keys)


class TestInvariantProperties:
    def comparative_facts(self, objects, frame):
        return [
            f for f in derive_facts(objects, frame, CFG).facts
            if f.kind in ("taller", "closer_to_camera", "left_of", "above", "closer_to_anchor")
        ]

    def test_rigid_motion_invariance(self):
        rng = random.Random(70)
        for _ in range(30):
            scene = support.random_scene(rng, "s", rng.randint(2, 5))
            before = derive_facts(scene.objects, scene.frame, CFG)
            yaw = rng.uniform(-180, 180)
            # z-translation bounded so objects stay above the model's floor.
            t = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-0.3, 2.0))
            objects, frame = yaw_translate(scene.objects, scene.frame, yaw, t)
            after = derive_facts(objects, frame, CFG)
            assert [f.verdict for f in after.facts] == [f.verdict for f in before.facts]
            assert [f.fact_id for f in after.facts] == [f.fact_id for f in before.facts]

    def test_antisymmetry_of_comparative_kinds(self):
        rng = random.Random(71)
        flipped = {"holds": "holds_inverse", "holds_inverse": "holds", "ambiguous": "ambiguous"}
        for _ in range(100):
            a = support.random_object(rng, "a")
            b = support.random_object(rng, "b")
            pairs = [
                (compare_height(a, b, CFG), compare_height(b, a, CFG)),
                (compare_camera_distance(a, b, FRAME, CFG), compare_camera_distance(b, a, FRAME, CFG)),
                (viewer_left_right(a, b, FRAME, CFG), viewer_left_right(b, a, FRAME, CFG)),
                (above_below(a, b, CFG), above_below(b, a, CFG)),
            ]
            anchor = support.random_object(rng, "anchor")
            pairs.append((
                multi_object_closer_to(anchor, a, b, CFG),
                multi_object_closer_to(anchor, b, a, CFG),
            ))
            for fwd, rev in pairs:
                assert rev.verdict == flipped[fwd.verdict]

    def test_margin_monotonicity(self):
        rng = random.Random(72)
        small = CFG
        large = RelationConfig(
            distance_margin_rel=0.4, height_margin_abs=0.8,
            angle_margin_deg=25.0, overlap_radius_m=1.0,
        )
        for _ in range(50):
            scene = support.random_scene(rng, "s", rng.randint(2, 4))
            before = {f.fact_id: f.verdict for f in derive_all(scene, small).facts}
            after = {f.fact_id: f.verdict for f in derive_all(scene, large).facts}
            for fact_id, verdict in before.items():
                if verdict == "ambiguous" and fact_id in after:
                    assert after[fact_id] == "ambiguous"

    def test_mirror_covariance(self):
        rng = random.Random(73)
        flipped = {"holds": "holds_inverse", "holds_inverse": "holds", "ambiguous": "ambiguous"}
        for _ in range(30):
            scene = support.random_scene(rng, "s", rng.randint(2, 4))
            before = derive_facts(scene.objects, scene.frame, CFG)
            objects, frame = mirror(scene.objects, scene.frame)
            after = derive_facts(objects, frame, CFG)
            by_id_before = {f.fact_id: f for f in before.facts}
            by_id_after = {f.fact_id: f for f in after.facts}
            assert set(by_id_before) == set(by_id_after)
            for fact_id, fact in by_id_before.items():
                mirrored = by_id_after[fact_id]
                if fact.kind == "left_of":
                    assert mirrored.verdict == flipped[fact.verdict]
                elif fact.kind in ("taller", "higher", "above", "closer_to_camera",
                                   "closer_to_anchor"):
                    assert mirrored.verdict == fact.verdict


class TestFactFiles:
    def test_round_trip_with_config_echo(self, tmp_path):
        rng = random.Random(80)
        scene = support.random_scene(rng, "s", 4)
        facts = derive_all(scene, CFG).facts
        path = tmp_path / "facts.jsonl"
        assert save_facts(facts, CFG, path) == len(facts)
        loaded, cfg = load_facts(path)
        assert loaded == facts
        assert cfg == CFG

    def test_recompute_fact_round_trips(self):
        rng = random.Random(81)
        scene = support.random_scene(rng, "s", 4)
        for fact in derive_all(scene, CFG).facts:
            again = recompute_fact(fact.fact_id, scene.objects, scene.frame, CFG)
            assert again == fact

    def test_higher_vs_camera(self):
        frame = FRAME
        high = obj_at("a", 0, 3, 2.2)
        fact = height_vs_camera(high, frame, CFG)
        assert fact.verdict == "holds"
        assert fact.object_id == CAMERA_ID
