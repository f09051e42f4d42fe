"""Adaptable template construction, per-category activation and extraction."""

import json

import numpy as np
import pytest

from garmentrec.lines import LandmarkKind as K
from garmentrec.template import (CATEGORY_LINES, CATEGORY_REGIONS,
                                 WAIST_SUBDIV_LEVELS, AdaptableTemplate,
                                 ClothCategory, Region, SemanticRegion,
                                 activate, active_feature_lines,
                                 build_template, extract_active_mesh,
                                 save_template)


def test_template_covers_all_regions_and_line_kinds():
    t = build_template()
    assert set(np.unique(t.region_labels)) == {int(r) for r in Region}
    assert t.activation.all()
    kinds = [fl.kind for fl in t.feature_lines]
    assert set(kinds) == set(K)
    # paired landmarks appear once per side
    for kind in (K.SHOULDER, K.ELBOW, K.WRIST, K.KNEE, K.ANKLE):
        assert kinds.count(kind) == 2


def test_template_lines_are_closed_loops_of_distinct_vertices():
    t = build_template()
    for fl in t.feature_lines:
        assert fl.closed
        assert len(fl.vertex_indices) >= 3
        assert len(np.unique(fl.vertex_indices)) == len(fl.vertex_indices)


def test_activation_is_region_consistent():
    t = build_template()
    bad = t.activation.copy()
    # flip one torso vertex off: mixed activation inside a region
    bad[np.flatnonzero(t.region_labels == int(Region.TORSO))[0]] = False
    with pytest.raises(ValueError):
        AdaptableTemplate(t.body, t.region_labels, bad, t.feature_lines)


@pytest.mark.parametrize("category", list(ClothCategory))
def test_activate_matches_category_tables(category):
    t = activate(build_template(), category)
    assert t.active_line_kinds() == CATEGORY_LINES[category]
    assert t.active_semantic_regions() == CATEGORY_REGIONS[category]
    assert t.category is category


@pytest.mark.parametrize("category", list(ClothCategory))
def test_extract_active_mesh_is_consistent(category):
    t = activate(build_template(), category)
    mesh, index_map = extract_active_mesh(t)
    assert mesh.n_vertices == int(t.activation.sum())
    assert (index_map[t.activation] >= 0).all()
    assert (index_map[~t.activation] == -1).all()
    lines = active_feature_lines(t, index_map)
    assert {fl.kind for fl in lines} == CATEGORY_LINES[category]
    for fl in lines:
        assert (fl.vertex_indices >= 0).all()
        assert fl.vertex_indices.max() < mesh.n_vertices


def test_activate_is_idempotent():
    a = activate(build_template(), ClothCategory.LONG_SKIRT)
    b = activate(a, ClothCategory.LONG_SKIRT)
    np.testing.assert_array_equal(a.activation, b.activation)
    assert a.waist_subdivision == b.waist_subdivision
    np.testing.assert_array_equal(a.body.rest_mesh.vertices,
                                  b.body.rest_mesh.vertices)


def test_long_garments_densify_the_waist():
    base = activate(build_template(), ClothCategory.SHORT_SKIRT)
    long_skirt = activate(build_template(), ClothCategory.LONG_SKIRT)
    assert WAIST_SUBDIV_LEVELS[ClothCategory.LONG_SKIRT] == 1
    assert long_skirt.waist_subdivision == 1
    n_waist = lambda t: int((t.region_labels[t.activation]
                             == int(Region.WAIST)).sum())
    assert n_waist(long_skirt) > n_waist(base)
    # skin weight rows remain a partition of unity after subdivision
    np.testing.assert_allclose(long_skirt.body.skin_weights.sum(axis=1), 1.0,
                               atol=1e-9)


def test_subdivided_template_lines_stay_valid():
    t = activate(build_template(), ClothCategory.LONG_SLEEVE_DRESS)
    assert t.waist_subdivision == 2
    mesh, index_map = extract_active_mesh(t)
    for fl in active_feature_lines(t, index_map):
        assert (fl.vertex_indices >= 0).all()


def test_save_template_writes_obj_and_sidecar(tmp_path):
    t = activate(build_template(), ClothCategory.SHORT_TROUSERS)
    prefix = str(tmp_path / "tpl")
    save_template(prefix, t)
    with open(prefix + ".json") as fh:
        sidecar = json.load(fh)
    assert sidecar["category"] == "short trousers"
    assert len(sidecar["activation"]) == t.body.rest_mesh.n_vertices
    kinds = {fl["kind"] for fl in sidecar["feature_lines"]}
    assert kinds == {k.value for k in CATEGORY_LINES[ClothCategory.SHORT_TROUSERS]}


def test_semantic_region_names_cover_labels():
    assert len(SemanticRegion) == 6
    assert len(Region) == 10
