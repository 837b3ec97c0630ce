from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microciv.ruleset import (
    RulesetError,
    load_ruleset,
    mini_ruleset,
    researchable_techs,
    ruleset_from_dict,
)


def pack_dict(**overrides):
    """A tiny valid pack to mutate in validation tests."""
    data = {
        "id": "test",
        "terrains": [{"id": "plain", "name": "Plain", "yields": {"food": 1}}],
        "features": [],
        "resources": [],
        "techs": [
            {"id": "a", "name": "A", "era": "e1", "cost": 5, "prerequisites": [], "unlocks": ["hut"]},
            {"id": "b", "name": "B", "era": "e1", "cost": 5, "prerequisites": ["a"], "unlocks": []},
        ],
        "buildings": [{"id": "hut", "name": "Hut", "cost": 10}],
        "unit_types": [
            {"id": "set", "name": "Set", "cost": 10, "movement": 2, "can_found_city": True},
            {"id": "war", "name": "War", "cost": 10, "strength": 5, "is_military": True},
        ],
        "improvements": [{"id": "farm", "name": "Farm", "yields": {"food": 1}}],
    }
    data.update(overrides)
    return data


def test_mini_pack_shape():
    rs = mini_ruleset()
    assert len(rs.techs) == 12
    assert len(rs.buildings) == 10
    assert sum(1 for b in rs.buildings if b.is_wonder) == 1
    assert len(rs.unit_types) == 8
    assert sum(1 for u in rs.unit_types if u.is_water) == 1
    assert sum(1 for u in rs.unit_types if not u.is_military) == 2
    assert len(rs.terrains) == 6
    assert len(rs.resources) == 6
    eras = {t.era for t in rs.techs}
    assert len(eras) == 3


def test_load_ruleset_from_file(tmp_path):
    path = tmp_path / "pack.json"
    path.write_text(json.dumps(pack_dict()), encoding="utf-8")
    rs = load_ruleset(path)
    assert rs.id == "test"
    assert rs.tech("b").prerequisites == ("a",)


def test_load_is_pure_function_of_bytes(tmp_path):
    path = tmp_path / "pack.json"
    path.write_text(json.dumps(pack_dict()), encoding="utf-8")
    first = load_ruleset(path)
    second = load_ruleset(path)
    assert first == second
    assert first.content_hash == second.content_hash


def test_malformed_file_is_a_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(RulesetError, match="cannot parse"):
        load_ruleset(path)


def test_prerequisite_cycle_rejected():
    data = pack_dict()
    data["techs"] = [
        {"id": "a", "name": "A", "era": "e", "cost": 1, "prerequisites": ["b"], "unlocks": []},
        {"id": "b", "name": "B", "era": "e", "cost": 1, "prerequisites": ["a"], "unlocks": []},
    ]
    with pytest.raises(RulesetError, match="cycle"):
        ruleset_from_dict(data)


def test_dangling_unlock_rejected():
    data = pack_dict()
    data["techs"][0]["unlocks"] = ["no_such_building"]
    with pytest.raises(RulesetError, match="unlocks unknown item"):
        ruleset_from_dict(data)


def test_dangling_prerequisite_rejected():
    data = pack_dict()
    data["techs"][1]["prerequisites"] = ["ghost"]
    with pytest.raises(RulesetError, match="unknown tech"):
        ruleset_from_dict(data)


def test_duplicate_id_rejected():
    data = pack_dict()
    data["buildings"].append({"id": "hut", "name": "Hut2", "cost": 5})
    with pytest.raises(RulesetError, match="duplicate id"):
        ruleset_from_dict(data)


def test_negative_cost_rejected():
    data = pack_dict()
    data["buildings"][0]["cost"] = -1
    with pytest.raises(RulesetError, match="negative cost"):
        ruleset_from_dict(data)


def test_bad_resource_kind_rejected():
    data = pack_dict()
    data["resources"] = [{"id": "x", "name": "X", "kind": "mystery"}]
    with pytest.raises(RulesetError, match="unknown kind"):
        ruleset_from_dict(data)


def test_table_value_domain_caps():
    data = pack_dict()
    data["terrains"] = [
        {"id": f"t{i}", "name": f"T{i}"} for i in range(10)
    ]
    with pytest.raises(RulesetError, match="too many base terrains"):
        ruleset_from_dict(data)


def test_schema_admits_full_scale_pack():
    """The schema must hold the full-size content counts (80/68/126)."""
    techs = []
    for i in range(80):
        prereq = [f"t{i - 1}"] if i else []
        techs.append({"id": f"t{i}", "name": f"T{i}", "era": f"era{i // 10}",
                      "cost": 5 + i, "prerequisites": prereq, "unlocks": []})
    buildings = [{"id": f"b{i}", "name": f"B{i}", "cost": 10 + i} for i in range(68)]
    units = [{"id": f"u{i}", "name": f"U{i}", "cost": 10 + i, "strength": i % 30,
              "is_military": True} for i in range(126)]
    units[0].update({"is_military": False, "strength": 0, "can_found_city": True})
    for i in range(40, 80):
        techs[i]["unlocks"] = [f"b{i - 40}"]
    data = pack_dict(techs=techs, buildings=buildings, unit_types=units)
    rs = ruleset_from_dict(data)
    assert len(rs.techs) == 80
    assert len(rs.buildings) == 68
    assert len(rs.unit_types) == 126
    assert researchable_techs(rs, set()) == ["t0"]


# -- researchable_techs -------------------------------------------------------


def brute_force_researchable(rs, researched):
    out = []
    for tech in rs.techs:
        if tech.id in researched:
            continue
        if all(p in researched for p in tech.prerequisites):
            out.append(tech.id)
    return sorted(out)


def test_researchable_empty_set_gives_roots():
    rs = mini_ruleset()
    roots = researchable_techs(rs, set())
    assert roots == sorted(t.id for t in rs.techs if not t.prerequisites)


def test_researchable_all_researched_gives_nothing():
    rs = mini_ruleset()
    everything = {t.id for t in rs.techs}
    assert researchable_techs(rs, everything) == []


def test_researchable_after_root_matches_brute_force_children():
    rs = mini_ruleset()
    got = researchable_techs(rs, {"agriculture"})
    assert got == brute_force_researchable(rs, {"agriculture"})
    # With a single-root tree these are exactly the root's direct children.
    children = sorted(t.id for t in rs.techs if t.prerequisites == ("agriculture",))
    assert got == children


def test_researchable_unknown_id_rejected():
    rs = mini_ruleset()
    with pytest.raises(RulesetError, match="unknown tech id"):
        researchable_techs(rs, {"warp_drive"})


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_monotone_unlock_property(data):
    """Researching one more tech never removes other researchable options."""
    rs = mini_ruleset()
    all_ids = [t.id for t in rs.techs]
    researched = set(data.draw(st.lists(st.sampled_from(all_ids), unique=True)))
    available = researchable_techs(rs, researched)
    if not available:
        return
    t = data.draw(st.sampled_from(available))
    after = set(researchable_techs(rs, researched | {t}))
    assert set(available) - {t} <= after
